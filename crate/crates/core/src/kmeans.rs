//! Weight-balanced k-means: alternate the assignment LP with centroid updates
//! until the objective stops decreasing.

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{
    centroids, squared_distance, theta_for_sites, Assignment, Centroids, ClusterBounds, SiteSet, WeightedDataset,
    SITE_MERGE_TOL,
};
use crate::dsu::DisjointSet;
use crate::error::{Error, Result};
use crate::lp::{build_lp, solve_vertex, Basis, LPSolution, PartitionLP};
use crate::parallel::{map_slice, Execution};
use crate::power::{sigma_from_duals, verify_strongly_feasible, FeasibilityCertificate, PowerDiagram};

/// Largest distance between a final site and its centroid accepted as equal.
pub const CENTROID_TOL: f64 = 1e-9;

/// How initial sites are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// `k` distinct data points drawn uniformly.
    UniformSample,
    /// Weighted `D²` sampling: each new site is a data point drawn with
    /// probability proportional to `ω_j · dist(x_j, sites)²`.
    WeightedFarthest,
    /// Sites given by the caller.
    Explicit(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub max_iterations: usize,
    /// A new LP optimum must undercut the previous one by more than this.
    pub objective_tolerance: f64,
    /// Sites closer than this are fused into one cluster.
    pub site_merge_tolerance: f64,
    pub seed: u64,
    pub init: InitStrategy,
    /// Verify the descent chain at every iteration and fail on a violation.
    pub check_descent: bool,
    /// Keep each iteration's assignment in the trace.
    pub record_assignments: bool,
    /// Start each LP from the previous iteration's basis.
    pub warm_start: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            max_iterations: 10_000,
            objective_tolerance: 1e-9,
            site_merge_tolerance: SITE_MERGE_TOL,
            seed: 0,
            init: InitStrategy::WeightedFarthest,
            check_descent: cfg!(debug_assertions),
            record_assignments: false,
            warm_start: true,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidInput("max_iterations must be at least 1".into()));
        }
        for (name, v) in [
            ("objective_tolerance", self.objective_tolerance),
            ("site_merge_tolerance", self.site_merge_tolerance),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// One LP solve of the outer loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord<S = Vec<f64>> {
    pub iteration: usize,
    /// LP optimum `Θ(C, S)` at this iteration's sites.
    pub theta: f64,
    pub squared_error: f64,
    pub fractional_count: usize,
    /// Sites the LP was built from, one per input cluster.
    pub sites: Vec<S>,
    pub groups: Vec<Vec<usize>>,
    pub pivots: usize,
    pub warm_started: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assignment: Option<Assignment>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunVerdict {
    Converged,
    IterationCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace<S = Vec<f64>> {
    pub records: Vec<IterationRecord<S>>,
    /// Extra solves that move the final sites onto the centroids.
    pub polish: Vec<IterationRecord<S>>,
    pub verdict: RunVerdict,
}

impl<S> RunTrace<S> {
    /// Θ of every main-loop record.
    pub fn thetas(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.theta).collect()
    }

    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn total_pivots(&self) -> usize {
        self.records.iter().chain(&self.polish).map(|r| r.pivots).sum()
    }
}

/// Result of [`run`]. Rows of `assignment` are the final site groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub assignment: Assignment,
    pub groups: Vec<Vec<usize>>,
    /// True if some input clusters were fused.
    pub merged: bool,
    /// Centers of gravity of the final assignment, one per group.
    pub centroids: Centroids,
    pub diagram: PowerDiagram,
    pub certificate: FeasibilityCertificate,
    pub theta: f64,
    pub squared_error: f64,
    pub trace: RunTrace,
}

/// Geometry the outer loop runs in.
pub(crate) trait Geometry {
    type Site: Clone;

    fn sq_distance(&self, a: &Self::Site, b: &Self::Site) -> f64;
    /// Whether two sites are within `tol` of each other.
    fn coincident(&self, a: &Self::Site, b: &Self::Site, tol: f64) -> bool {
        self.sq_distance(a, b) <= tol * tol
    }
    fn build(&self, sites: &[Self::Site], groups: &[Vec<usize>], bounds: &ClusterBounds) -> Result<PartitionLP>;
    /// `Θ` of `assignment` against one site per row.
    fn theta(&self, assignment: &Assignment, sites: &[Self::Site]) -> Result<f64>;
    fn centroids(&self, assignment: &Assignment) -> Result<Vec<Self::Site>>;
    /// `Σ_j ω_j ⟨x_j, x_j⟩`, the gap between Θ and the squared error.
    fn norm_sum(&self) -> f64;
}

struct Euclidean<'a>(&'a WeightedDataset);

impl Geometry for Euclidean<'_> {
    type Site = Vec<f64>;

    fn sq_distance(&self, a: &Vec<f64>, b: &Vec<f64>) -> f64 {
        squared_distance(a, b)
    }

    fn build(&self, sites: &[Vec<f64>], groups: &[Vec<usize>], bounds: &ClusterBounds) -> Result<PartitionLP> {
        let set = SiteSet::from_groups(sites.to_vec(), groups.to_vec())?;
        build_lp(self.0, &set, bounds)
    }

    fn theta(&self, assignment: &Assignment, sites: &[Vec<f64>]) -> Result<f64> {
        theta_for_sites(assignment, self.0, sites)
    }

    fn centroids(&self, assignment: &Assignment) -> Result<Vec<Vec<f64>>> {
        Ok(centroids(assignment, self.0)?.centers)
    }

    fn norm_sum(&self) -> f64 {
        self.0.weighted_norm_sum()
    }
}

/// Final state of the outer loop.
pub(crate) struct LoopResult<S> {
    pub lp: PartitionLP,
    pub solution: LPSolution,
    pub groups: Vec<Vec<usize>>,
    pub centroids: Vec<S>,
    pub trace: RunTrace<S>,
}

fn group_sites<G: Geometry>(geo: &G, sites: &[G::Site], tol: f64) -> Vec<Vec<usize>> {
    let k = sites.len();
    let mut dsu = DisjointSet::new(k);
    for a in 0..k {
        for b in a + 1..k {
            if geo.coincident(&sites[a], &sites[b], tol) {
                dsu.union(a, b);
            }
        }
    }
    dsu.groups()
}

fn expand_sites<S: Clone>(groups: &[Vec<usize>], centers: &[S], k: usize) -> Vec<S> {
    let mut out: Vec<Option<S>> = vec![None; k];
    for (g, members) in groups.iter().enumerate() {
        for &i in members {
            out[i] = Some(centers[g].clone());
        }
    }
    out.into_iter().map(|s| s.expect("groups cover every site")).collect()
}

fn check_descent(iteration: usize, stage: &'static str, before: f64, after: f64) -> Result<()> {
    if before + 1e-9 * (1.0 + before.abs().max(after.abs())) < after {
        return Err(Error::Descent {
            iteration,
            stage,
            before,
            after,
        });
    }
    Ok(())
}

struct Solved<S> {
    lp: PartitionLP,
    solution: LPSolution,
    groups: Vec<Vec<usize>>,
    record: IterationRecord<S>,
}

fn solve_at<G: Geometry>(
    geo: &G,
    bounds: &ClusterBounds,
    sites: &[G::Site],
    warm: Option<&Basis>,
    config: &RunConfig,
    iteration: usize,
) -> Result<Solved<G::Site>> {
    let groups = group_sites(geo, sites, config.site_merge_tolerance);
    let lp = geo.build(sites, &groups, bounds)?;
    let solution = solve_vertex(&lp, if config.warm_start { warm } else { None })?;
    let record = IterationRecord {
        iteration,
        theta: solution.objective,
        squared_error: solution.objective + geo.norm_sum(),
        fractional_count: solution.assignment.fractional_count(),
        sites: sites.to_vec(),
        groups: groups.clone(),
        pivots: solution.pivots,
        warm_started: solution.warm_started,
        assignment: config.record_assignments.then(|| solution.assignment.clone()),
    };
    Ok(Solved {
        lp,
        solution,
        groups,
        record,
    })
}

/// The outer loop over any geometry.
pub(crate) fn lloyd_loop<G: Geometry>(
    geo: &G,
    bounds: &ClusterBounds,
    initial: Vec<G::Site>,
    config: &RunConfig,
) -> Result<LoopResult<G::Site>> {
    config.validate()?;
    let k = initial.len();
    if k != bounds.len() {
        return Err(Error::Dimension(format!("{k} sites but {} bound pairs", bounds.len())));
    }
    let mut sites = initial;
    let mut records: Vec<IterationRecord<G::Site>> = Vec::new();
    let mut current = solve_at(geo, bounds, &sites, None, config, 0)?;
    let mut verdict = RunVerdict::IterationCap;

    loop {
        let centers = geo.centroids(&current.solution.assignment)?;
        let next_sites = expand_sites(&current.groups, &centers, k);
        let prev_theta = current.solution.objective;
        let moved = if config.check_descent {
            let moved = geo.theta(&current.solution.assignment, &centers)?;
            check_descent(records.len(), "centroid update", prev_theta, moved)?;
            moved
        } else {
            f64::NAN
        };
        let iteration = records.len();
        records.push(current.record.clone());
        if records.len() >= config.max_iterations {
            break;
        }
        let next = solve_at(geo, bounds, &next_sites, Some(&current.solution.basis), config, iteration + 1)?;
        if config.check_descent {
            check_descent(iteration + 1, "assignment", moved, next.solution.objective)?;
        }
        sites = next_sites;
        let improved = next.solution.objective < prev_theta - config.objective_tolerance;
        current = next;
        if !improved {
            records.push(current.record.clone());
            verdict = RunVerdict::Converged;
            break;
        }
    }

    let mut polish = Vec::new();
    let mut centers = geo.centroids(&current.solution.assignment)?;
    loop {
        let group_sites: Vec<G::Site> = current.groups.iter().map(|g| sites[g[0]].clone()).collect();
        let settled = group_sites
            .iter()
            .zip(&centers)
            .all(|(s, c)| geo.coincident(s, c, CENTROID_TOL));
        if settled {
            break;
        }
        if records.len() + polish.len() >= config.max_iterations {
            verdict = RunVerdict::IterationCap;
            break;
        }
        sites = expand_sites(&current.groups, &centers, k);
        let iteration = records.len() + polish.len();
        current = solve_at(geo, bounds, &sites, Some(&current.solution.basis), config, iteration)?;
        polish.push(current.record.clone());
        centers = geo.centroids(&current.solution.assignment)?;
    }

    Ok(LoopResult {
        lp: current.lp,
        solution: current.solution,
        groups: current.groups,
        centroids: centers,
        trace: RunTrace {
            records,
            polish,
            verdict,
        },
    })
}

/// Weight-balanced k-means from the given sites.
///
/// Runs until an LP optimum fails to undercut its predecessor by more than
/// `config.objective_tolerance`, or until `config.max_iterations` solves. The
/// output assignment is the last LP vertex; its power diagram is derived from
/// the LP duals and certified before returning.
pub fn run(
    data: &WeightedDataset,
    bounds: &ClusterBounds,
    sites: &[Vec<f64>],
    config: &RunConfig,
) -> Result<RunOutput> {
    if sites.iter().any(|s| s.len() != data.dim()) {
        return Err(Error::Dimension("site dimension differs from data".into()));
    }
    let geo = Euclidean(data);
    let result = lloyd_loop(&geo, bounds, sites.to_vec(), config)?;
    let diagram = sigma_from_duals(&result.lp, &result.solution, data)?;
    let certificate = verify_strongly_feasible(&diagram, &result.solution.assignment, data)?;
    let centroids = Centroids {
        centers: result.centroids,
    };
    let squared_error = crate::data::squared_error_for_sites(&result.solution.assignment, data, &centroids.centers)?;
    Ok(RunOutput {
        merged: result.groups.len() < sites.len(),
        assignment: result.solution.assignment,
        groups: result.groups,
        centroids,
        diagram,
        certificate,
        theta: result.solution.objective,
        squared_error,
        trace: result.trace,
    })
}

/// Chooses `k` distinct initial sites.
pub fn init_sites(data: &WeightedDataset, k: usize, strategy: &InitStrategy, seed: u64) -> Result<SiteSet> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen: Vec<usize> = match strategy {
        InitStrategy::Explicit(sites) => {
            if sites.len() != k {
                return Err(Error::InvalidInput(format!("{} explicit sites for k = {k}", sites.len())));
            }
            if sites.iter().any(|s| s.len() != data.dim()) {
                return Err(Error::Dimension("site dimension differs from data".into()));
            }
            return SiteSet::new(sites.clone());
        }
        _ if k > data.len() => {
            return Err(Error::InvalidInput(format!(
                "k = {k} exceeds the {} distinct points",
                data.len()
            )))
        }
        InitStrategy::UniformSample => rand::seq::index::sample(&mut rng, data.len(), k).into_vec(),
        InitStrategy::WeightedFarthest => {
            let first = WeightedIndex::new(data.weights())
                .expect("weights are positive")
                .sample(&mut rng);
            let mut chosen = vec![first];
            let mut d2: Vec<f64> = data.points().map(|x| squared_distance(x, data.point(first))).collect();
            while chosen.len() < k {
                let mass: Vec<f64> = d2.iter().zip(data.weights()).map(|(d, w)| d * w).collect();
                let next = WeightedIndex::new(&mass)
                    .expect("an unchosen point has positive distance")
                    .sample(&mut rng);
                chosen.push(next);
                for (d, x) in d2.iter_mut().zip(data.points()) {
                    *d = d.min(squared_distance(x, data.point(next)));
                }
            }
            chosen
        }
    };
    SiteSet::new(chosen.iter().map(|&j| data.point(j).to_vec()).collect())
}

/// Output of [`classical_kmeans`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalOutput {
    pub assignment: Assignment,
    pub centroids: Centroids,
    /// Labels of every assignment step.
    pub history: Vec<Vec<usize>>,
    /// Sites reseeded because their cluster went empty.
    pub reseeds: usize,
    pub converged: bool,
}

/// Lloyd's algorithm with unit weights: nearest-site assignment (lowest
/// index on ties) and mean updates, until an update leaves every site where
/// it was.
///
/// A site whose cluster empties is moved to a random data point that
/// coincides with no current site.
pub fn classical_kmeans(
    data: &WeightedDataset,
    sites: &[Vec<f64>],
    seed: u64,
    max_iterations: usize,
) -> Result<ClassicalOutput> {
    let k = sites.len();
    if k == 0 || k > data.len() {
        return Err(Error::InvalidInput(format!("need 1 ≤ k ≤ n, got k = {k}")));
    }
    if sites.iter().any(|s| s.len() != data.dim()) {
        return Err(Error::Dimension("site dimension differs from data".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sites = sites.to_vec();
    let mut history: Vec<Vec<usize>> = Vec::new();
    let mut reseeds = 0;
    let mut converged = false;
    while history.len() < max_iterations.max(1) {
        let labels: Vec<usize> = data
            .points()
            .map(|x| {
                let d: Vec<f64> = sites.iter().map(|s| squared_distance(x, s)).collect();
                (0..k).fold(0, |b, i| if d[i] < d[b] { i } else { b })
            })
            .collect();
        let mut sums = vec![vec![0.0; data.dim()]; k];
        let mut counts = vec![0usize; k];
        for (x, &l) in data.points().zip(&labels) {
            counts[l] += 1;
            sums[l].iter_mut().zip(x).for_each(|(a, v)| *a += v);
        }
        history.push(labels);
        let mut next: Vec<Vec<f64>> = (0..k)
            .map(|i| sums[i].iter().map(|a| a / counts[i].max(1) as f64).collect())
            .collect();
        for i in (0..k).filter(|&i| counts[i] == 0) {
            let free: Vec<usize> = (0..data.len())
                .filter(|&j| next.iter().all(|s| s.as_slice() != data.point(j)))
                .collect();
            if let Some(&j) = free.choose(&mut rng) {
                next[i] = data.point(j).to_vec();
                reseeds += 1;
            }
        }
        if next == sites {
            converged = true;
            break;
        }
        sites = next;
    }
    let labels = history.last().expect("at least one step");
    let assignment = Assignment::from_labels(k, labels)?;
    Ok(ClassicalOutput {
        assignment,
        centroids: Centroids { centers: sites },
        history,
        reseeds,
        converged,
    })
}

/// Runs from several seeds and keeps every run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiStartOutput {
    pub seeds: Vec<u64>,
    pub runs: Vec<RunOutput>,
    /// Position of the run with the lowest final squared error (earliest on ties).
    pub best: usize,
}

impl MultiStartOutput {
    pub fn best_run(&self) -> &RunOutput {
        &self.runs[self.best]
    }
}

/// Independent runs from each seed's initial sites, optionally in parallel.
///
/// The selection depends only on the seed list, not on scheduling.
pub fn multi_start(
    data: &WeightedDataset,
    bounds: &ClusterBounds,
    config: &RunConfig,
    seeds: &[u64],
    exec: Execution,
) -> Result<MultiStartOutput> {
    if seeds.is_empty() {
        return Err(Error::InvalidInput("no seeds given".into()));
    }
    let k = bounds.len();
    let runs = map_slice(exec, seeds, |&seed| {
        let sites = init_sites(data, k, &config.init, seed)?;
        run(data, bounds, sites.sites(), &RunConfig { seed, ..config.clone() })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let best = (0..runs.len())
        .min_by(|&a, &b| runs[a].squared_error.total_cmp(&runs[b].squared_error).then(a.cmp(&b)))
        .expect("nonempty");
    Ok(MultiStartOutput {
        seeds: seeds.to_vec(),
        runs,
        best,
    })
}
