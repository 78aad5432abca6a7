//! Power diagrams and feasibility certificates for clusterings.
//!
//! Cell `i` is `{x : ‖x − s_i‖² − σ_i ≤ ‖x − s_l‖² − σ_l for all l}`. A
//! diagram is feasible for a clustering if every cluster's support lies in
//! its cell. It is strongly feasible if, in addition, no point lies strictly
//! inside a cell whose cluster does not hold it, and the clusters sharing
//! points form no cycle that uses two or more distinct points.

use serde::{Deserialize, Serialize};

use crate::data::{dot, squared_distance, Assignment, WeightedDataset, ZERO_TOL};
use crate::dsu::DisjointSet;
use crate::error::{Error, Result};
use crate::lp::{LPSolution, PartitionLP};

/// Slack on the cell inequalities when certifying a clustering.
pub const BOUNDARY_SLACK: f64 = 1e-7;

/// Tolerance for reporting a query point as lying on several cells.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

// round-off grows with the magnitude of the squared norms involved
const ROUNDOFF: f64 = 1e-13;

/// Sites with additive power parameters, normalized so the last `σ` is 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerDiagram {
    sites: Vec<Vec<f64>>,
    sigma: Vec<f64>,
}

impl PowerDiagram {
    pub fn new(sites: Vec<Vec<f64>>, sigma: Vec<f64>) -> Result<Self> {
        if sites.is_empty() || sites.len() != sigma.len() {
            return Err(Error::Dimension(format!(
                "{} sites with {} power parameters",
                sites.len(),
                sigma.len()
            )));
        }
        let shift = *sigma.last().expect("nonempty");
        let sigma = sigma.iter().map(|s| s - shift).collect();
        Ok(Self { sites, sigma })
    }

    pub fn sites(&self) -> &[Vec<f64>] {
        &self.sites
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn cells(&self) -> usize {
        self.sites.len()
    }

    /// `‖x − s_i‖² − σ_i`.
    pub fn power(&self, i: usize, x: &[f64]) -> f64 {
        squared_distance(x, &self.sites[i]) - self.sigma[i]
    }

    fn scale(&self, x: &[f64]) -> f64 {
        let s = self.sites.iter().map(|s| dot(s, s)).fold(dot(x, x), f64::max);
        s.max(1.0)
    }

    /// Cells attaining the minimal power distance at `x`.
    pub fn cell_membership(&self, x: &[f64]) -> Vec<usize> {
        let powers: Vec<f64> = (0..self.cells()).map(|i| self.power(i, x)).collect();
        let min = powers.iter().copied().fold(f64::INFINITY, f64::min);
        let tol = MEMBERSHIP_TOL + ROUNDOFF * self.scale(x);
        (0..self.cells()).filter(|&i| powers[i] <= min + tol).collect()
    }

    fn slack(&self, x: &[f64]) -> f64 {
        BOUNDARY_SLACK + ROUNDOFF * self.scale(x)
    }
}

/// Outcome of a feasibility check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    StronglyFeasible,
    Feasible,
    Infeasible,
}

/// A point held by two or more clusters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SharedPoint {
    pub point: usize,
    pub clusters: Vec<usize>,
}

/// Evidence backing a [`Verdict`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    /// Feasible, strong conditions not examined.
    None,
    /// `point` is held by `cluster` but is closer (in power distance) to `other`.
    CellViolation {
        point: usize,
        cluster: usize,
        other: usize,
        excess: f64,
    },
    /// `point` lies strictly inside the cell of `cluster` without belonging to it.
    SupportViolation { point: usize, cluster: usize },
    /// `point` joins clusters `a` and `b`, which other shared points already connect.
    MultiLabelCycle { point: usize, a: usize, b: usize },
    /// Shared points, in sweep order; they form a forest over the clusters.
    Forest { shared: Vec<SharedPoint> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityCertificate {
    pub verdict: Verdict,
    pub witness: Witness,
}

impl FeasibilityCertificate {
    /// Re-derives the witness from the raw inputs.
    pub fn recheck(&self, diagram: &PowerDiagram, assignment: &Assignment, data: &WeightedDataset) -> bool {
        match &self.witness {
            Witness::None => self.verdict == Verdict::Feasible && first_cell_violation(diagram, assignment, data).is_none(),
            &Witness::CellViolation { point, cluster, other, .. } => {
                let x = data.point(point);
                self.verdict == Verdict::Infeasible
                    && assignment.get(cluster, point) > ZERO_TOL
                    && diagram.power(cluster, x) > diagram.power(other, x) + diagram.slack(x)
            }
            &Witness::SupportViolation { point, cluster } => {
                self.verdict == Verdict::Feasible
                    && assignment.get(cluster, point) <= ZERO_TOL
                    && strictly_inside(diagram, cluster, data.point(point))
            }
            &Witness::MultiLabelCycle { point, a, b } => {
                if self.verdict != Verdict::Feasible || a == b {
                    return false;
                }
                let holders = assignment.clusters_of(point);
                if !holders.contains(&a) || !holders.contains(&b) {
                    return false;
                }
                let mut dsu = DisjointSet::new(assignment.clusters());
                for j in (0..assignment.points()).filter(|&j| j != point) {
                    let t = assignment.clusters_of(j);
                    for w in t.windows(2) {
                        dsu.union(w[0], w[1]);
                    }
                }
                dsu.connected(a, b)
            }
            Witness::Forest { shared } => {
                self.verdict == Verdict::StronglyFeasible
                    && *shared == shared_points(assignment)
                    && first_cell_violation(diagram, assignment, data).is_none()
                    && first_support_violation(diagram, assignment, data).is_none()
                    && first_cycle(assignment).is_none()
            }
        }
    }
}

fn strictly_inside(diagram: &PowerDiagram, i: usize, x: &[f64]) -> bool {
    let own = diagram.power(i, x);
    let slack = diagram.slack(x);
    (0..diagram.cells()).filter(|&l| l != i).all(|l| own < diagram.power(l, x) - slack)
}

fn shared_points(assignment: &Assignment) -> Vec<SharedPoint> {
    (0..assignment.points())
        .filter_map(|j| {
            let clusters = assignment.clusters_of(j);
            (clusters.len() > 1).then_some(SharedPoint { point: j, clusters })
        })
        .collect()
}

fn check_shapes(diagram: &PowerDiagram, assignment: &Assignment, data: &WeightedDataset) -> Result<()> {
    if assignment.clusters() != diagram.cells() || assignment.points() != data.len() {
        return Err(Error::Dimension(format!(
            "{}×{} assignment against {} cells and {} points",
            assignment.clusters(),
            assignment.points(),
            diagram.cells(),
            data.len()
        )));
    }
    if diagram.sites.iter().any(|s| s.len() != data.dim()) {
        return Err(Error::Dimension("site dimension differs from data".into()));
    }
    Ok(())
}

/// Largest violation of `supp(C_i) ⊆ P_i`, if any.
fn first_cell_violation(diagram: &PowerDiagram, assignment: &Assignment, data: &WeightedDataset) -> Option<Witness> {
    let mut worst: Option<Witness> = None;
    let mut worst_excess = 0.0;
    for j in 0..data.len() {
        let x = data.point(j);
        let slack = diagram.slack(x);
        let powers: Vec<f64> = (0..diagram.cells()).map(|i| diagram.power(i, x)).collect();
        let (other, min) = powers
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |b, (l, &p)| if p < b.1 { (l, p) } else { b });
        for i in assignment.clusters_of(j) {
            let excess = powers[i] - min;
            if excess > slack && excess > worst_excess {
                worst_excess = excess;
                worst = Some(Witness::CellViolation {
                    point: j,
                    cluster: i,
                    other,
                    excess,
                });
            }
        }
    }
    worst
}

fn first_support_violation(diagram: &PowerDiagram, assignment: &Assignment, data: &WeightedDataset) -> Option<Witness> {
    for j in 0..data.len() {
        let x = data.point(j);
        for i in 0..diagram.cells() {
            if assignment.get(i, j) <= ZERO_TOL && strictly_inside(diagram, i, x) {
                return Some(Witness::SupportViolation { point: j, cluster: i });
            }
        }
    }
    None
}

/// Disjoint-set sweep over shared points; a point whose clusters are
/// already connected closes a cycle with at least two distinct labels.
fn first_cycle(assignment: &Assignment) -> Option<Witness> {
    let mut dsu = DisjointSet::new(assignment.clusters());
    for sp in shared_points(assignment) {
        let t = &sp.clusters;
        for (x, &a) in t.iter().enumerate() {
            for &b in &t[x + 1..] {
                if dsu.connected(a, b) {
                    return Some(Witness::MultiLabelCycle { point: sp.point, a, b });
                }
            }
        }
        for w in t.windows(2) {
            dsu.union(w[0], w[1]);
        }
    }
    None
}

/// Checks `supp(C_i) ⊆ P_i` for every cluster.
pub fn verify_feasible(
    diagram: &PowerDiagram,
    assignment: &Assignment,
    data: &WeightedDataset,
) -> Result<FeasibilityCertificate> {
    check_shapes(diagram, assignment, data)?;
    Ok(match first_cell_violation(diagram, assignment, data) {
        Some(w) => FeasibilityCertificate {
            verdict: Verdict::Infeasible,
            witness: w,
        },
        None => FeasibilityCertificate {
            verdict: Verdict::Feasible,
            witness: Witness::None,
        },
    })
}

/// Full strong-feasibility check: cell containment, support equality (read as
/// "no unassigned point strictly inside a cell") and the cycle condition.
pub fn verify_strongly_feasible(
    diagram: &PowerDiagram,
    assignment: &Assignment,
    data: &WeightedDataset,
) -> Result<FeasibilityCertificate> {
    let cert = verify_feasible(diagram, assignment, data)?;
    if cert.verdict == Verdict::Infeasible {
        return Ok(cert);
    }
    let weak = |witness| FeasibilityCertificate {
        verdict: Verdict::Feasible,
        witness,
    };
    if let Some(w) = first_support_violation(diagram, assignment, data) {
        return Ok(weak(w));
    }
    if let Some(w) = first_cycle(assignment) {
        return Ok(weak(w));
    }
    Ok(FeasibilityCertificate {
        verdict: Verdict::StronglyFeasible,
        witness: Witness::Forest {
            shared: shared_points(assignment),
        },
    })
}

/// Power diagram whose parameters are the range-row duals of an optimal vertex.
///
/// The diagram is checked against the solution before it is returned.
pub fn sigma_from_duals(lp: &PartitionLP, solution: &LPSolution, data: &WeightedDataset) -> Result<PowerDiagram> {
    let sites = lp
        .group_sites()
        .ok_or_else(|| Error::InvalidInput("LP was not built from explicit sites".into()))?;
    let diagram = PowerDiagram::new(sites.to_vec(), solution.cluster_duals.clone())?;
    let cert = verify_feasible(&diagram, &solution.assignment, data)?;
    if let Witness::CellViolation {
        point,
        cluster,
        other,
        excess,
    } = cert.witness
    {
        return Err(Error::Certificate {
            point,
            cluster,
            other,
            excess,
        });
    }
    Ok(diagram)
}

/// Searches for any `σ` making the diagram feasible for `assignment`.
///
/// The cell inequalities for supported pairs are difference constraints
/// `σ_l − σ_i ≤ ‖x_j − s_l‖² − ‖x_j − s_i‖²`, solved by Bellman-Ford; a
/// negative cycle certifies that no feasible diagram with these sites exists.
pub fn sigma_feasibility_lp(
    assignment: &Assignment,
    data: &WeightedDataset,
    sites: &[Vec<f64>],
) -> Result<Option<PowerDiagram>> {
    let g = sites.len();
    let probe = PowerDiagram::new(sites.to_vec(), vec![0.0; g])?;
    check_shapes(&probe, assignment, data)?;
    let mut weight = vec![f64::INFINITY; g * g];
    for j in 0..data.len() {
        let x = data.point(j);
        let d: Vec<f64> = sites.iter().map(|s| squared_distance(x, s)).collect();
        let slack = probe.slack(x);
        for i in assignment.clusters_of(j) {
            for l in (0..g).filter(|&l| l != i) {
                let w = &mut weight[i * g + l];
                *w = w.min(d[l] - d[i] + slack);
            }
        }
    }
    let mut dist = vec![0.0; g];
    for _ in 0..g {
        let mut changed = false;
        for i in 0..g {
            for l in 0..g {
                let w = weight[i * g + l];
                if w.is_finite() && dist[i] + w < dist[l] {
                    dist[l] = dist[i] + w;
                    changed = true;
                }
            }
        }
        if !changed {
            return Ok(Some(PowerDiagram::new(sites.to_vec(), dist)?));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ClusterBounds, SiteSet};
    use crate::lp::{build_lp, solve_vertex};

    fn line(xs: &[f64], ws: &[f64]) -> WeightedDataset {
        let pts: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        WeightedDataset::new(&pts, ws.to_vec()).unwrap()
    }

    fn solve(xs: &[f64], ws: &[f64], s: &[f64], lo: &[f64], hi: &[f64]) -> (WeightedDataset, PartitionLP, LPSolution) {
        let d = line(xs, ws);
        let sites = SiteSet::new(s.iter().map(|&x| vec![x]).collect()).unwrap();
        let b = ClusterBounds::new(lo.to_vec(), hi.to_vec()).unwrap();
        let lp = build_lp(&d, &sites, &b).unwrap();
        let sol = solve_vertex(&lp, None).unwrap();
        (d, lp, sol)
    }

    #[test]
    fn symmetric_instance_has_equal_sigma() {
        let (d, lp, sol) = solve(&[-1.0, 1.0], &[1.0, 1.0], &[-1.0, 1.0], &[1.0, 1.0], &[1.0, 1.0]);
        let pd = sigma_from_duals(&lp, &sol, &d).unwrap();
        assert!(pd.sigma()[0].abs() < 1e-12 && pd.sigma()[1] == 0.0);
        assert_eq!(pd.cell_membership(&[-0.3]), vec![0]);
        assert_eq!(pd.cell_membership(&[0.3]), vec![1]);
        assert_eq!(pd.cell_membership(&[0.0]), vec![0, 1]);
    }

    #[test]
    fn fractional_point_lies_on_the_boundary() {
        let (d, lp, sol) = solve(&[0.0, 1.0, 2.0], &[1.0; 3], &[0.0, 2.0], &[1.5, 1.5], &[1.5, 1.5]);
        let pd = sigma_from_duals(&lp, &sol, &d).unwrap();
        // (1 − 0)² − σ_1 = (1 − 2)² − σ_2 forces σ_1 = σ_2
        assert!((pd.power(0, &[1.0]) - pd.power(1, &[1.0])).abs() < 1e-9);
        assert_eq!(pd.cell_membership(&[1.0]), vec![0, 1]);
        let cert = verify_strongly_feasible(&pd, &sol.assignment, &d).unwrap();
        assert_eq!(cert.verdict, Verdict::StronglyFeasible);
        assert!(cert.recheck(&pd, &sol.assignment, &d));
    }

    #[test]
    fn inactive_bounds_give_voronoi() {
        let (d, lp, sol) = solve(&[0.0, 1.0, 4.0, 6.0], &[1.0; 4], &[0.5, 5.0], &[0.1, 0.1], &[4.0, 4.0]);
        let pd = sigma_from_duals(&lp, &sol, &d).unwrap();
        assert!(pd.sigma().iter().all(|s| s.abs() < 1e-12));
    }

    #[test]
    fn point_at_site_and_midpoint() {
        let pd = PowerDiagram::new(vec![vec![0.0, 0.0], vec![2.0, 0.0]], vec![0.0, 0.0]).unwrap();
        assert_eq!(pd.cell_membership(&[0.0, 0.0]), vec![0]);
        assert_eq!(pd.cell_membership(&[1.0, 0.0]), vec![0, 1]);
    }

    #[test]
    fn shift_leaves_membership_unchanged() {
        let sites = vec![vec![0.0, 0.0], vec![3.0, 1.0], vec![-1.0, 4.0]];
        let a = PowerDiagram::new(sites.clone(), vec![0.5, -1.0, 2.0]).unwrap();
        let b = PowerDiagram::new(sites, vec![10.5, 9.0, 12.0]).unwrap();
        assert_eq!(a.sigma(), b.sigma());
        for q in [[0.1, 0.2], [2.0, 2.0], [-3.0, 5.0]] {
            assert_eq!(a.cell_membership(&q), b.cell_membership(&q));
        }
    }

    #[test]
    fn crossed_assignment_is_infeasible() {
        // swap the two outermost points between well-separated clusters
        let d = line(&[0.0, 1.0, 10.0, 11.0], &[1.0; 4]);
        let y = Assignment::from_labels(2, &[1, 0, 1, 0]).unwrap();
        let sites = vec![vec![0.0], vec![11.0]];
        assert!(sigma_feasibility_lp(&y, &d, &sites).unwrap().is_none());
        let pd = PowerDiagram::new(sites, vec![0.0, 0.0]).unwrap();
        let cert = verify_feasible(&pd, &y, &d).unwrap();
        assert_eq!(cert.verdict, Verdict::Infeasible);
        assert!(matches!(cert.witness, Witness::CellViolation { .. }));
        assert!(cert.recheck(&pd, &y, &d));
    }

    #[test]
    fn single_group_is_trivially_feasible() {
        let d = line(&[0.0, 1.0], &[1.0, 1.0]);
        let y = Assignment::from_labels(1, &[0, 0]).unwrap();
        let pd = sigma_feasibility_lp(&y, &d, &[vec![0.5]]).unwrap().unwrap();
        assert_eq!(pd.sigma(), &[0.0]);
    }

    #[test]
    fn identity_with_sites_at_points_is_feasible() {
        let d = line(&[0.0, 3.0], &[1.0, 1.0]);
        let y = Assignment::from_labels(2, &[0, 1]).unwrap();
        let pd = PowerDiagram::new(vec![vec![0.0], vec![3.0]], vec![0.0, 0.0]).unwrap();
        assert_eq!(verify_feasible(&pd, &y, &d).unwrap().verdict, Verdict::Feasible);
    }

    #[test]
    fn cycle_condition() {
        // point 0 shared by 0/1, point 1 by 1/2: a path
        let d = line(&[0.0, 1.0, 2.0], &[1.0; 3]);
        let pd = PowerDiagram::new(vec![vec![0.0], vec![1.0], vec![2.0]], vec![0.0; 3]).unwrap();
        let path = Assignment::new(3, 3, vec![0.5, 0.0, 0.0, 0.5, 0.5, 0.0, 0.0, 0.5, 1.0]).unwrap();
        assert!(first_cycle(&path).is_none());

        // two points both shared by 0/1
        let parallel = Assignment::new(3, 3, vec![0.5, 0.5, 0.0, 0.5, 0.5, 0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(first_cycle(&parallel), Some(Witness::MultiLabelCycle { point: 1, a: 0, b: 1 }));

        // one point shared by all three clusters: a single-label triangle
        let star = Assignment::new(3, 3, vec![1.0, 0.2, 0.0, 0.0, 0.3, 0.0, 0.0, 0.5, 1.0]).unwrap();
        assert!(first_cycle(&star).is_none());

        let cert = FeasibilityCertificate {
            verdict: Verdict::Feasible,
            witness: Witness::MultiLabelCycle { point: 1, a: 0, b: 1 },
        };
        assert!(cert.recheck(&pd, &parallel, &d));
    }

    #[test]
    fn unassigned_interior_point_breaks_support_equality() {
        let d = line(&[0.0, 1.0, 5.0], &[1.0; 3]);
        let pd = PowerDiagram::new(vec![vec![0.0], vec![5.0]], vec![0.0, 0.0]).unwrap();
        // point at 1.0 sits deep in cell 0 but is held by cluster 1
        let y = Assignment::from_labels(2, &[0, 1, 1]).unwrap();
        let cert = verify_strongly_feasible(&pd, &y, &d).unwrap();
        assert_eq!(cert.verdict, Verdict::Infeasible);

        // with σ pushing the boundary exactly onto the point, it is tolerated
        let pd = PowerDiagram::new(vec![vec![0.0], vec![5.0]], vec![0.0, 15.0]).unwrap();
        let cert = verify_strongly_feasible(&pd, &y, &d).unwrap();
        assert_eq!(cert.verdict, Verdict::StronglyFeasible);
    }
}
