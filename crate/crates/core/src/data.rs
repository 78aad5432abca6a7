//! Weighted point sets, cluster-size bounds, partial-membership assignments
//! and the elementary quantities built on them (shape, centers of gravity,
//! least-squares objectives).

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dsu::DisjointSet;
use crate::error::{Error, Result};

/// Entries at or below this value are treated as zero when computing supports.
pub const ZERO_TOL: f64 = 1e-9;

/// Default distance under which two sites count as coincident.
pub const SITE_MERGE_TOL: f64 = 1e-9;

/// Slack allowed on column sums and entry ranges of an assignment.
pub const ASSIGNMENT_TOL: f64 = 1e-9;

/// Distinct points in `R^d` with positive weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedDataset {
    dim: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
}

impl WeightedDataset {
    pub fn new(points: &[Vec<f64>], weights: Vec<f64>) -> Result<Self> {
        let dim = points.first().map(Vec::len).unwrap_or(0);
        if let Some((j, p)) = points.iter().enumerate().find(|(_, p)| p.len() != dim) {
            return Err(Error::Dimension(format!(
                "point {j} has {} coordinates, expected {dim}",
                p.len()
            )));
        }
        let coords = points.iter().flatten().copied().collect();
        Self::from_flat(dim, coords, weights)
    }

    /// Builds a dataset from row-major coordinates.
    pub fn from_flat(dim: usize, coords: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("points need at least one coordinate".into()));
        }
        if weights.is_empty() {
            return Err(Error::InvalidInput("dataset is empty".into()));
        }
        if coords.len() != dim * weights.len() {
            return Err(Error::Dimension(format!(
                "{} coordinates for {} points of dimension {dim}",
                coords.len(),
                weights.len()
            )));
        }
        if let Some(pos) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "point {} has a non-finite coordinate",
                pos / dim
            )));
        }
        for (index, &weight) in weights.iter().enumerate() {
            if !(weight > 0.0 && weight.is_finite()) {
                return Err(Error::NonPositiveWeight { index, weight });
            }
        }
        let mut seen: HashMap<Vec<u64>, usize> = HashMap::with_capacity(weights.len());
        for (j, p) in coords.chunks_exact(dim).enumerate() {
            // `+ 0.0` folds -0.0 into 0.0 so that equal coordinates hash equally
            let key = p.iter().map(|c| (c + 0.0).to_bits()).collect();
            if let Some(&first) = seen.get(&key) {
                return Err(Error::DuplicatePoint { first, second: j });
            }
            seen.insert(key, j);
        }
        Ok(Self { dim, coords, weights })
    }

    /// Unit-weight dataset.
    pub fn unweighted(points: &[Vec<f64>]) -> Result<Self> {
        Self::new(points, vec![1.0; points.len()])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, j: usize) -> &[f64] {
        &self.coords[j * self.dim..(j + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn weight(&self, j: usize) -> f64 {
        self.weights[j]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `Σ_j ω_j x_jᵀx_j`, the constant separating Θ from the squared error.
    pub fn weighted_norm_sum(&self) -> f64 {
        self.points()
            .zip(&self.weights)
            .map(|(p, w)| w * dot(p, p))
            .sum()
    }
}

/// Lower and upper cluster sizes `κ⁻ ≤ |C| ≤ κ⁺`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterBounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ClusterBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension(format!(
                "{} lower bounds but {} upper bounds",
                lower.len(),
                upper.len()
            )));
        }
        if lower.is_empty() {
            return Err(Error::InvalidInput("no clusters".into()));
        }
        for (i, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo > 0.0 && lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidInput(format!(
                    "cluster {i}: bounds must satisfy 0 < κ⁻ ≤ κ⁺, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// Equal bounds `(1 ∓ slack)·W/k` around the mean cluster weight.
    pub fn balanced(k: usize, total_weight: f64, slack: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidInput("no clusters".into()));
        }
        if !(0.0..1.0).contains(&slack) {
            return Err(Error::InvalidInput(format!(
                "balance slack must lie in [0, 1), got {slack}"
            )));
        }
        let mean = total_weight / k as f64;
        Self::new(vec![(1.0 - slack) * mean; k], vec![(1.0 + slack) * mean; k])
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Checks `Σκ⁻ ≤ total ≤ Σκ⁺`, with a relative slack for round-off.
    pub fn check_feasible(&self, total_weight: f64) -> Result<()> {
        let lower_sum: f64 = self.lower.iter().sum();
        let upper_sum: f64 = self.upper.iter().sum();
        let slack = 1e-12 * total_weight.abs().max(1.0);
        if lower_sum > total_weight + slack || upper_sum < total_weight - slack {
            return Err(Error::InfeasibleBounds {
                lower_sum,
                total_weight,
                upper_sum,
            });
        }
        Ok(())
    }

    /// Bounds of merged clusters: members' bounds are summed.
    pub fn merged(&self, groups: &[Vec<usize>]) -> ClusterBounds {
        let sum = |v: &[f64], g: &[usize]| g.iter().map(|&i| v[i]).sum();
        ClusterBounds {
            lower: groups.iter().map(|g| sum(&self.lower, g)).collect(),
            upper: groups.iter().map(|g| sum(&self.upper, g)).collect(),
        }
    }
}

/// Partial-membership assignment `y ∈ [0,1]^{k×n}` with unit column sums.
///
/// Rows are clusters (or merged cluster groups), columns are points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl Assignment {
    /// Validates and clamps a row-major matrix.
    pub fn new(rows: usize, cols: usize, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries for a {rows}×{cols} assignment",
                values.len()
            )));
        }
        if let Some(pos) = values
            .iter()
            .position(|v| !(v.is_finite() && (-ASSIGNMENT_TOL..=1.0 + ASSIGNMENT_TOL).contains(v)))
        {
            return Err(Error::InvalidInput(format!(
                "entry ({}, {}) = {} lies outside [0, 1]",
                pos / cols.max(1),
                pos % cols.max(1),
                values[pos]
            )));
        }
        for v in &mut values {
            *v = v.clamp(0.0, 1.0);
        }
        let out = Self { rows, cols, values };
        for j in 0..cols {
            let s: f64 = (0..rows).map(|i| out.get(i, j)).sum();
            if (s - 1.0).abs() > ASSIGNMENT_TOL {
                return Err(Error::InvalidInput(format!(
                    "point {j} is assigned a total fraction of {s}"
                )));
            }
        }
        Ok(out)
    }

    /// Integral assignment from one cluster label per point.
    pub fn from_labels(rows: usize, labels: &[usize]) -> Result<Self> {
        let cols = labels.len();
        let mut values = vec![0.0; rows * cols];
        for (j, &l) in labels.iter().enumerate() {
            if l >= rows {
                return Err(Error::InvalidInput(format!(
                    "point {j} labelled {l} with only {rows} clusters"
                )));
            }
            values[l * cols + j] = 1.0;
        }
        Ok(Self { rows, cols, values })
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), rows * cols);
        Self { rows, cols, values }
    }

    pub fn clusters(&self) -> usize {
        self.rows
    }

    pub fn points(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Point indices with `y_ij > ZERO_TOL`.
    pub fn support(&self, i: usize) -> Vec<usize> {
        self.row(i)
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > ZERO_TOL)
            .map(|(j, _)| j)
            .collect()
    }

    /// Clusters holding a positive share of point `j`.
    pub fn clusters_of(&self, j: usize) -> Vec<usize> {
        (0..self.rows).filter(|&i| self.get(i, j) > ZERO_TOL).collect()
    }

    /// Entries strictly between the zero tolerance and one minus it.
    pub fn fractional_entries(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.rows {
            for (j, &v) in self.row(i).iter().enumerate() {
                if v > ZERO_TOL && v < 1.0 - ZERO_TOL {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn fractional_count(&self) -> usize {
        self.fractional_entries().len()
    }

    /// Label of the largest share per point (lowest index on ties).
    pub fn hard_labels(&self) -> Vec<usize> {
        (0..self.cols)
            .map(|j| {
                (0..self.rows).fold(0, |best, i| if self.get(i, j) > self.get(best, j) { i } else { best })
            })
            .collect()
    }

    /// Sums rows that belong to the same group.
    pub fn merge_rows(&self, groups: &[Vec<usize>]) -> Assignment {
        let mut values = vec![0.0; groups.len() * self.cols];
        for (g, members) in groups.iter().enumerate() {
            for &i in members {
                for (j, v) in self.row(i).iter().enumerate() {
                    values[g * self.cols + j] += v;
                }
            }
        }
        Assignment::from_raw(groups.len(), self.cols, values)
    }

    /// Largest absolute entry difference, or infinity on a shape mismatch.
    pub fn max_abs_diff(&self, other: &Assignment) -> f64 {
        if self.rows != other.rows || self.cols != other.cols {
            return f64::INFINITY;
        }
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Sites `s_1..s_k` partitioned into groups of coincident sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteSet {
    sites: Vec<Vec<f64>>,
    groups: Vec<Vec<usize>>,
}

impl SiteSet {
    /// Groups sites at the default merge tolerance.
    pub fn new(sites: Vec<Vec<f64>>) -> Result<Self> {
        Self::with_tolerance(sites, SITE_MERGE_TOL)
    }

    /// Groups sites whose pairwise distance is at most `tol`, closed transitively.
    pub fn with_tolerance(sites: Vec<Vec<f64>>, tol: f64) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::InvalidInput("no sites".into()));
        }
        let dim = sites[0].len();
        if dim == 0 || sites.iter().any(|s| s.len() != dim) {
            return Err(Error::Dimension("sites must share a positive dimension".into()));
        }
        if sites.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("site has a non-finite coordinate".into()));
        }
        let k = sites.len();
        let mut dsu = DisjointSet::new(k);
        let tol_sq = tol * tol;
        for a in 0..k {
            for b in a + 1..k {
                if squared_distance(&sites[a], &sites[b]) <= tol_sq {
                    dsu.union(a, b);
                }
            }
        }
        let groups = dsu.groups();
        Ok(Self { sites, groups })
    }

    /// Site set built from an explicit grouping (groups must partition `0..k`).
    pub fn from_groups(sites: Vec<Vec<f64>>, groups: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; sites.len()];
        for &i in groups.iter().flatten() {
            if i >= sites.len() || std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidInput("groups must partition the sites".into()));
            }
        }
        if seen.iter().any(|s| !s) || groups.iter().any(Vec::is_empty) {
            return Err(Error::InvalidInput("groups must partition the sites".into()));
        }
        Ok(Self { sites, groups })
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.sites[0].len()
    }

    pub fn sites(&self) -> &[Vec<f64>] {
        &self.sites
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    /// True if at least two sites were fused into one group.
    pub fn has_merged_groups(&self) -> bool {
        self.groups.len() < self.sites.len()
    }

    /// One site per group: the group's lowest-index member.
    pub fn group_sites(&self) -> Vec<Vec<f64>> {
        self.groups.iter().map(|g| self.sites[g[0]].clone()).collect()
    }
}

/// Centers of gravity, one per assignment row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Centroids {
    pub centers: Vec<Vec<f64>>,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_columns(assignment: &Assignment, data: &WeightedDataset) -> Result<()> {
    if assignment.points() != data.len() {
        return Err(Error::Dimension(format!(
            "assignment covers {} points, dataset has {}",
            assignment.points(),
            data.len()
        )));
    }
    Ok(())
}

fn check_sites(assignment: &Assignment, data: &WeightedDataset, sites: &[Vec<f64>]) -> Result<()> {
    check_columns(assignment, data)?;
    if sites.len() != assignment.clusters() {
        return Err(Error::Dimension(format!(
            "{} sites for {} clusters",
            sites.len(),
            assignment.clusters()
        )));
    }
    if sites.iter().any(|s| s.len() != data.dim()) {
        return Err(Error::Dimension("site dimension differs from data".into()));
    }
    Ok(())
}

/// Cluster sizes `|C_i| = Σ_j y_ij ω_j`.
pub fn shape(assignment: &Assignment, data: &WeightedDataset) -> Result<Vec<f64>> {
    check_columns(assignment, data)?;
    Ok((0..assignment.clusters())
        .map(|i| dot(assignment.row(i), data.weights()))
        .collect())
}

/// Center of gravity of cluster `i`.
pub fn centroid(assignment: &Assignment, data: &WeightedDataset, i: usize) -> Result<Vec<f64>> {
    check_columns(assignment, data)?;
    if i >= assignment.clusters() {
        return Err(Error::Dimension(format!("no cluster {i}")));
    }
    let mut size = 0.0;
    let mut acc = vec![0.0; data.dim()];
    for (j, &y) in assignment.row(i).iter().enumerate() {
        if y == 0.0 {
            continue;
        }
        let m = y * data.weight(j);
        size += m;
        for (a, x) in acc.iter_mut().zip(data.point(j)) {
            *a += m * x;
        }
    }
    if size <= 0.0 {
        return Err(Error::EmptyCluster(i));
    }
    acc.iter_mut().for_each(|a| *a /= size);
    Ok(acc)
}

pub fn centroids(assignment: &Assignment, data: &WeightedDataset) -> Result<Centroids> {
    let centers = (0..assignment.clusters())
        .map(|i| centroid(assignment, data, i))
        .collect::<Result<_>>()?;
    Ok(Centroids { centers })
}

/// `Θ(C,S) = Σ_ij y_ij ω_j (s_iᵀs_i − 2x_jᵀs_i)` with one site per row.
pub fn theta_for_sites(assignment: &Assignment, data: &WeightedDataset, sites: &[Vec<f64>]) -> Result<f64> {
    check_sites(assignment, data, sites)?;
    let mut total = 0.0;
    for (i, s) in sites.iter().enumerate() {
        let ss = dot(s, s);
        for (j, &y) in assignment.row(i).iter().enumerate() {
            if y != 0.0 {
                total += y * data.weight(j) * (ss - 2.0 * dot(data.point(j), s));
            }
        }
    }
    Ok(total)
}

/// Θ against the group sites of `sites`; rows must correspond to its groups.
pub fn objective_theta(assignment: &Assignment, data: &WeightedDataset, sites: &SiteSet) -> Result<f64> {
    theta_for_sites(assignment, data, &sites.group_sites())
}

/// `Σ_ij y_ij ω_j ‖x_j − s_i‖²` with one site per row.
pub fn squared_error_for_sites(
    assignment: &Assignment,
    data: &WeightedDataset,
    sites: &[Vec<f64>],
) -> Result<f64> {
    check_sites(assignment, data, sites)?;
    let mut total = 0.0;
    for (i, s) in sites.iter().enumerate() {
        for (j, &y) in assignment.row(i).iter().enumerate() {
            if y != 0.0 {
                total += y * data.weight(j) * squared_distance(data.point(j), s);
            }
        }
    }
    Ok(total)
}

pub fn squared_error(assignment: &Assignment, data: &WeightedDataset, sites: &SiteSet) -> Result<f64> {
    squared_error_for_sites(assignment, data, &sites.group_sites())
}
