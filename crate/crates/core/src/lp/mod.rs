//! Weight-balanced least-squares assignment as a linear program.
//!
//! For groups `i` and points `j` the program is
//!
//! ```text
//! min  Σ_ij c_ij y_ij,            c_ij = ω_j (s_iᵀs_i − 2 x_jᵀs_i)
//! s.t. Σ_i y_ij = 1               for every point j
//!      Σ_j ω_j y_ij + t_i = κ⁺_i  with 0 ≤ t_i ≤ κ⁺_i − κ⁻_i
//!      y_ij ≥ 0
//! ```
//!
//! and [`solve_vertex`] returns an optimal vertex together with its basis and
//! duals. Coincident sites are fused into one row with summed bounds.

mod dense;
mod simplex;

use serde::{Deserialize, Serialize};

use crate::data::{dot, squared_distance, Assignment, ClusterBounds, SiteSet, WeightedDataset};
use crate::error::{Error, Result};

pub use simplex::{DEGENERATE_STALL_LIMIT, FEASIBILITY_TOL, PIVOT_TOL};

/// A column of the partition LP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Var {
    /// `y_ij`: share of point `point` held by group `cluster`.
    Assign { cluster: usize, point: usize },
    /// Slack `t_i` of the range row of group `i`.
    Slack(usize),
    /// Phase-one artificial of range row `i`; never present in a returned basis.
    Artificial(usize),
}

/// Basis of the partition LP in key/working form.
///
/// Every point row holds one basic "key" variable `y_{key[j], j}`; the
/// remaining `g` basic variables (`extra`) span the working basis over the
/// range rows. Nonbasic variables sit at zero, except slacks flagged in
/// `slack_at_upper`, which sit at `κ⁺_i − κ⁻_i` (lower bound binding).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Basis {
    pub key: Vec<usize>,
    pub extra: Vec<Var>,
    pub slack_at_upper: Vec<bool>,
}

impl Basis {
    /// All basic variables, keys first.
    pub fn basic_vars(&self) -> Vec<Var> {
        self.key
            .iter()
            .enumerate()
            .map(|(point, &cluster)| Var::Assign { cluster, point })
            .chain(self.extra.iter().copied())
            .collect()
    }
}

/// The assignment LP over groups of sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionLP {
    groups: usize,
    points: usize,
    costs: Vec<f64>,
    weights: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    site_groups: Vec<Vec<usize>>,
    group_sites: Option<Vec<Vec<f64>>>,
}

impl PartitionLP {
    /// LP over explicit costs (`groups × points`, row-major) and already
    /// grouped bounds. Used by kernelized assignment.
    pub fn from_costs(
        weights: &[f64],
        costs: Vec<f64>,
        bounds: &ClusterBounds,
        site_groups: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let groups = bounds.len();
        let points = weights.len();
        if costs.len() != groups * points {
            return Err(Error::Dimension(format!(
                "{} costs for {groups} groups and {points} points",
                costs.len()
            )));
        }
        if site_groups.len() != groups {
            return Err(Error::Dimension("one site group per bound row expected".into()));
        }
        if costs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("non-finite assignment cost".into()));
        }
        bounds.check_feasible(weights.iter().sum())?;
        Ok(Self {
            groups,
            points,
            costs,
            weights: weights.to_vec(),
            lower: bounds.lower().to_vec(),
            upper: bounds.upper().to_vec(),
            site_groups,
            group_sites: None,
        })
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn cost(&self, i: usize, j: usize) -> f64 {
        self.costs[i * self.points + j]
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Original site indices fused into each row.
    pub fn site_groups(&self) -> &[Vec<usize>] {
        &self.site_groups
    }

    /// One site per row, when the LP was built from explicit sites.
    pub fn group_sites(&self) -> Option<&[Vec<f64>]> {
        self.group_sites.as_deref()
    }

    /// Variable count `g·n` and constraint count `n + g` of the compact form.
    pub fn size(&self) -> (usize, usize) {
        (self.groups * self.points, self.points + self.groups)
    }
}

/// Optimal vertex of a [`PartitionLP`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LPSolution {
    pub assignment: Assignment,
    pub basis: Basis,
    /// `π_j` of the point rows.
    pub point_duals: Vec<f64>,
    /// `λ_i` of the range rows: `≥ 0` when `κ⁻` binds, `≤ 0` when `κ⁺` binds.
    pub cluster_duals: Vec<f64>,
    /// Objective `Θ = Σ c_ij y_ij`.
    pub objective: f64,
    /// Total pivots, including phase one.
    pub pivots: usize,
    pub phase_one_pivots: usize,
    /// True if the supplied warm-start basis was accepted.
    pub warm_started: bool,
}

impl LPSolution {
    /// `c_ij − π_j − ω_j λ_i`.
    pub fn reduced_cost(&self, lp: &PartitionLP, i: usize, j: usize) -> f64 {
        lp.cost(i, j) - self.point_duals[j] - lp.weights[j] * self.cluster_duals[i]
    }
}

/// Builds the assignment LP for `sites`, fusing coincident site groups.
pub fn build_lp(data: &WeightedDataset, sites: &SiteSet, bounds: &ClusterBounds) -> Result<PartitionLP> {
    if sites.len() != bounds.len() {
        return Err(Error::Dimension(format!(
            "{} sites but {} bound pairs",
            sites.len(),
            bounds.len()
        )));
    }
    if sites.dim() != data.dim() {
        return Err(Error::Dimension(format!(
            "sites live in dimension {}, data in {}",
            sites.dim(),
            data.dim()
        )));
    }
    bounds.check_feasible(data.total_weight())?;
    let merged = bounds.merged(sites.groups());
    let group_sites = sites.group_sites();
    let n = data.len();
    let mut costs = Vec::with_capacity(group_sites.len() * n);
    for s in &group_sites {
        let ss = dot(s, s);
        costs.extend(
            data.points()
                .zip(data.weights())
                .map(|(x, w)| w * (ss - 2.0 * dot(x, s))),
        );
    }
    let mut lp = PartitionLP::from_costs(data.weights(), costs, &merged, sites.groups().to_vec())?;
    lp.group_sites = Some(group_sites);
    Ok(lp)
}

/// Solves `lp` to an optimal vertex.
///
/// A warm-start basis is used when it fits the LP and is primal feasible;
/// otherwise the solve starts cold.
pub fn solve_vertex(lp: &PartitionLP, warm_start: Option<&Basis>) -> Result<LPSolution> {
    simplex::solve(lp, warm_start)
}

/// Nearest-site assignment, the limit of the LP when the bounds are inactive.
///
/// Fails if two sites coincide or a point is (numerically) equidistant to
/// its two nearest sites.
pub fn unconstrained_reduction_check(data: &WeightedDataset, sites: &SiteSet) -> Result<Assignment> {
    if sites.has_merged_groups() {
        return Err(Error::InvalidInput("sites must be pairwise distinct".into()));
    }
    if sites.dim() != data.dim() {
        return Err(Error::Dimension("site dimension differs from data".into()));
    }
    let mut labels = Vec::with_capacity(data.len());
    for (j, x) in data.points().enumerate() {
        let mut best = (f64::INFINITY, usize::MAX);
        let mut second = (f64::INFINITY, usize::MAX);
        for (i, s) in sites.sites().iter().enumerate() {
            let d = squared_distance(x, s);
            if d < best.0 {
                second = best;
                best = (d, i);
            } else if d < second.0 {
                second = (d, i);
            }
        }
        if second.1 != usize::MAX && second.0 - best.0 <= 1e-9 * best.0.max(1.0) {
            return Err(Error::Tie {
                point: j,
                first: best.1,
                second: second.1,
            });
        }
        labels.push(best.1);
    }
    Assignment::from_labels(sites.len(), &labels)
}
