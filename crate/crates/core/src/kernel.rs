//! Kernelized weight-balanced k-means.
//!
//! Sites live in the feature space of a kernel `K(u,v) = φ(u)ᵀφ(v)`. After the
//! first update every site is a convex combination `Σ_j α_j φ(x_j)` and is
//! stored by its coefficients; no data-space center is ever formed.

use serde::{Deserialize, Serialize};

use crate::data::{dot, squared_distance, Assignment, ClusterBounds, WeightedDataset};
use crate::error::{Error, Result};
use crate::kmeans::{lloyd_loop, Geometry, RunConfig, RunTrace};
use crate::lp::PartitionLP;
use crate::parallel::{map_indexed, Execution};

// cancellation floor for feature-space distances, relative to the norms involved
const ROUNDOFF: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelFunction {
    /// `uᵀv`.
    Linear,
    /// `(uᵀv + offset)^degree`.
    Polynomial { degree: u32, offset: f64 },
    /// `exp(−‖u − v‖² / (2·bandwidth²))`.
    Gaussian { bandwidth: f64 },
}

impl KernelFunction {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelFunction::Linear => Ok(()),
            KernelFunction::Polynomial { degree, offset } => {
                if degree == 0 || !(offset >= 0.0 && offset.is_finite()) {
                    return Err(Error::InvalidInput(format!(
                        "polynomial kernel needs degree ≥ 1 and offset ≥ 0, got {degree} and {offset}"
                    )));
                }
                Ok(())
            }
            KernelFunction::Gaussian { bandwidth } => {
                if !(bandwidth > 0.0 && bandwidth.is_finite()) {
                    return Err(Error::InvalidInput(format!("gaussian bandwidth must be positive, got {bandwidth}")));
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, u: &[f64], v: &[f64]) -> f64 {
        match *self {
            KernelFunction::Linear => dot(u, v),
            KernelFunction::Polynomial { degree, offset } => (dot(u, v) + offset).powi(degree as i32),
            KernelFunction::Gaussian { bandwidth } => (-squared_distance(u, v) / (2.0 * bandwidth * bandwidth)).exp(),
        }
    }
}

/// A site in feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ImplicitSite {
    /// `φ(p)` for a data-space point `p`.
    Explicit(Vec<f64>),
    /// `φ(x_j)` for data point `j`.
    Point(usize),
    /// `Σ_j α_j φ(x_j)` with `α ≥ 0`, `Σ α = 1`.
    Coefficients(Vec<f64>),
}

/// Data set together with its Gram matrix `G_jl = K(x_j, x_l)`.
#[derive(Debug, Clone)]
pub struct KernelMatrix<'a> {
    data: &'a WeightedDataset,
    kernel: KernelFunction,
    gram: Vec<f64>,
}

impl<'a> KernelMatrix<'a> {
    pub fn new(data: &'a WeightedDataset, kernel: KernelFunction, exec: Execution) -> Result<Self> {
        kernel.validate()?;
        let n = data.len();
        let rows = map_indexed(exec, n, |j| {
            let x = data.point(j);
            (0..n).map(|l| kernel.eval(x, data.point(l))).collect::<Vec<f64>>()
        });
        let gram = rows.into_iter().flatten().collect();
        Ok(Self { data, kernel, gram })
    }

    pub fn kernel(&self) -> KernelFunction {
        self.kernel
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, j: usize, l: usize) -> f64 {
        self.gram[j * self.len() + l]
    }

    /// Row-major `n×n` Gram matrix.
    pub fn gram(&self) -> &[f64] {
        &self.gram
    }

    fn validate_site(&self, s: &ImplicitSite) -> Result<()> {
        match s {
            ImplicitSite::Explicit(p) if p.len() != self.data.dim() => {
                Err(Error::Dimension("site dimension differs from data".into()))
            }
            ImplicitSite::Point(j) if *j >= self.len() => Err(Error::InvalidInput(format!("no data point {j}"))),
            ImplicitSite::Coefficients(a) if a.len() != self.len() => {
                Err(Error::Dimension(format!("{} coefficients for {} points", a.len(), self.len())))
            }
            ImplicitSite::Coefficients(a) if a.iter().any(|v| !v.is_finite()) => {
                Err(Error::InvalidInput("non-finite site coefficient".into()))
            }
            _ => Ok(()),
        }
    }

    /// `Φ(x_j, s)` for every data point `j`.
    pub fn cross(&self, s: &ImplicitSite) -> Vec<f64> {
        let n = self.len();
        match s {
            ImplicitSite::Explicit(p) => self.data.points().map(|x| self.kernel.eval(x, p)).collect(),
            ImplicitSite::Point(l) => (0..n).map(|j| self.get(j, *l)).collect(),
            ImplicitSite::Coefficients(alpha) => {
                let mut out = vec![0.0; n];
                for (l, &a) in alpha.iter().enumerate() {
                    if a != 0.0 {
                        for (j, o) in out.iter_mut().enumerate() {
                            *o += a * self.get(j, l);
                        }
                    }
                }
                out
            }
        }
    }

    /// `Φ(a, b)`.
    pub fn inner(&self, a: &ImplicitSite, b: &ImplicitSite) -> f64 {
        match (a, b) {
            (ImplicitSite::Explicit(p), ImplicitSite::Explicit(q)) => self.kernel.eval(p, q),
            (ImplicitSite::Point(j), ImplicitSite::Point(l)) => self.get(*j, *l),
            (ImplicitSite::Point(j), other) | (other, ImplicitSite::Point(j)) => self.cross(other)[*j],
            (ImplicitSite::Coefficients(alpha), other) | (other, ImplicitSite::Coefficients(alpha)) => {
                dot(alpha, &self.cross(other))
            }
        }
    }

    /// `‖φ(a) − φ(b)‖²`, clamped at zero.
    pub fn feature_distance(&self, a: &ImplicitSite, b: &ImplicitSite) -> f64 {
        (self.inner(a, a) - 2.0 * self.inner(a, b) + self.inner(b, b)).max(0.0)
    }

    fn costs(&self, sites: &[ImplicitSite]) -> Vec<f64> {
        let w = self.data.weights();
        sites
            .iter()
            .flat_map(|s| {
                let cross = self.cross(s);
                let ss = self.inner(s, s);
                cross.into_iter().zip(w).map(move |(c, w)| w * (ss - 2.0 * c))
            })
            .collect()
    }
}

/// Assignment costs `c_ij = ω_j (Φ(s_i,s_i) − 2Φ(x_j,s_i))`, row-major `k×n`.
pub fn kernel_lp_costs(data: &WeightedDataset, sites: &[ImplicitSite], kernel: KernelFunction) -> Result<Vec<f64>> {
    let km = KernelMatrix::new(data, kernel, Execution::default())?;
    for s in sites {
        km.validate_site(s)?;
    }
    Ok(km.costs(sites))
}

impl Geometry for KernelMatrix<'_> {
    type Site = ImplicitSite;

    fn sq_distance(&self, a: &ImplicitSite, b: &ImplicitSite) -> f64 {
        self.feature_distance(a, b)
    }

    fn coincident(&self, a: &ImplicitSite, b: &ImplicitSite, tol: f64) -> bool {
        let (aa, bb) = (self.inner(a, a), self.inner(b, b));
        let d = (aa - 2.0 * self.inner(a, b) + bb).max(0.0);
        d <= tol * tol + ROUNDOFF * (1.0 + aa.abs() + bb.abs())
    }

    fn build(&self, sites: &[ImplicitSite], groups: &[Vec<usize>], bounds: &ClusterBounds) -> Result<PartitionLP> {
        let reps: Vec<ImplicitSite> = groups.iter().map(|g| sites[g[0]].clone()).collect();
        PartitionLP::from_costs(self.data.weights(), self.costs(&reps), &bounds.merged(groups), groups.to_vec())
    }

    fn theta(&self, assignment: &Assignment, sites: &[ImplicitSite]) -> Result<f64> {
        if sites.len() != assignment.clusters() || assignment.points() != self.len() {
            return Err(Error::Dimension("assignment does not match sites and data".into()));
        }
        let costs = self.costs(sites);
        Ok(dot(assignment.values(), &costs))
    }

    fn centroids(&self, assignment: &Assignment) -> Result<Vec<ImplicitSite>> {
        let w = self.data.weights();
        (0..assignment.clusters())
            .map(|i| {
                let mass: Vec<f64> = assignment.row(i).iter().zip(w).map(|(y, w)| y * w).collect();
                let size: f64 = mass.iter().sum();
                if size <= 0.0 {
                    return Err(Error::EmptyCluster(i));
                }
                Ok(ImplicitSite::Coefficients(mass.into_iter().map(|m| m / size).collect()))
            })
            .collect()
    }

    fn norm_sum(&self) -> f64 {
        (0..self.len()).map(|j| self.data.weight(j) * self.get(j, j)).sum()
    }
}

/// Result of [`kernel_run`]. Rows of `assignment` are the final site groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelRunOutput {
    pub assignment: Assignment,
    pub groups: Vec<Vec<usize>>,
    pub merged: bool,
    /// Feature-space centers of gravity as coefficient sites, one per group.
    pub centroids: Vec<ImplicitSite>,
    /// Final LP optimum in feature space.
    pub theta: f64,
    /// `Σ y_ij ω_j ‖φ(x_j) − c_i‖²` at the final centroids.
    pub squared_error: f64,
    pub trace: RunTrace<ImplicitSite>,
}

/// Weight-balanced k-means in the feature space of `kernel`.
pub fn kernel_run(
    data: &WeightedDataset,
    bounds: &ClusterBounds,
    initial_sites: &[ImplicitSite],
    kernel: KernelFunction,
    config: &RunConfig,
    exec: Execution,
) -> Result<KernelRunOutput> {
    let km = KernelMatrix::new(data, kernel, exec)?;
    kernel_run_with(&km, bounds, initial_sites, config)
}

/// [`kernel_run`] with a precomputed Gram matrix.
pub fn kernel_run_with(
    km: &KernelMatrix<'_>,
    bounds: &ClusterBounds,
    initial_sites: &[ImplicitSite],
    config: &RunConfig,
) -> Result<KernelRunOutput> {
    for s in initial_sites {
        km.validate_site(s)?;
    }
    let result = lloyd_loop(km, bounds, initial_sites.to_vec(), config)?;
    let squared_error = km.theta(&result.solution.assignment, &result.centroids)? + km.norm_sum();
    Ok(KernelRunOutput {
        merged: result.groups.len() < initial_sites.len(),
        assignment: result.solution.assignment,
        groups: result.groups,
        centroids: result.centroids,
        theta: result.solution.objective,
        squared_error,
        trace: result.trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SiteSet;
    use crate::kmeans::run;
    use crate::lp::build_lp;
    use approx::assert_abs_diff_eq;

    fn line(xs: &[f64]) -> WeightedDataset {
        let pts: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        WeightedDataset::unweighted(&pts).unwrap()
    }

    #[test]
    fn kernels_are_symmetric_and_validated() {
        let u = [0.3, -1.0];
        let v = [2.0, 0.5];
        for k in [
            KernelFunction::Linear,
            KernelFunction::Polynomial { degree: 3, offset: 1.0 },
            KernelFunction::Gaussian { bandwidth: 0.7 },
        ] {
            assert_eq!(k.eval(&u, &v), k.eval(&v, &u));
        }
        assert!(KernelFunction::Gaussian { bandwidth: 0.0 }.validate().is_err());
        assert!(KernelFunction::Polynomial { degree: 0, offset: 1.0 }.validate().is_err());
        assert!(KernelFunction::Polynomial { degree: 2, offset: -1.0 }.validate().is_err());
    }

    #[test]
    fn linear_costs_match_plain_lp() {
        let d = WeightedDataset::new(&[vec![0.0, 1.0], vec![2.0, -1.0], vec![3.0, 3.0]], vec![1.0, 2.0, 0.5]).unwrap();
        let sites = vec![vec![0.5, 0.5], vec![2.0, 2.0]];
        let b = ClusterBounds::new(vec![1.0; 2], vec![2.5; 2]).unwrap();
        let lp = build_lp(&d, &SiteSet::new(sites.clone()).unwrap(), &b).unwrap();
        let implicit: Vec<ImplicitSite> = sites.into_iter().map(ImplicitSite::Explicit).collect();
        let c = kernel_lp_costs(&d, &implicit, KernelFunction::Linear).unwrap();
        for (a, b) in c.iter().zip(lp.costs()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn gaussian_indicator_site() {
        let d = line(&[0.0, 1.0, 3.0]);
        let k = KernelFunction::Gaussian { bandwidth: 1.0 };
        let km = KernelMatrix::new(&d, k, Execution::Sequential).unwrap();
        let s = ImplicitSite::Coefficients(vec![0.0, 1.0, 0.0]);
        assert_abs_diff_eq!(km.inner(&s, &s), 1.0, epsilon = 1e-15);
        let cross = km.cross(&s);
        for (j, x) in [0.0f64, 1.0, 3.0].iter().enumerate() {
            assert_abs_diff_eq!(cross[j], (-(x - 1.0).powi(2) / 2.0).exp(), epsilon = 1e-15);
        }
        assert_eq!(km.cross(&ImplicitSite::Point(1)), cross);
    }

    #[test]
    fn polynomial_hand_example() {
        let d = line(&[2.0]);
        let k = KernelFunction::Polynomial { degree: 2, offset: 0.0 };
        let c = kernel_lp_costs(&d, &[ImplicitSite::Explicit(vec![3.0])], k).unwrap();
        // Φ(s,s) = 81, Φ(x,s) = 36 and, with the feature map u ↦ u², 9² − 2·4·9
        assert_eq!(c, vec![9.0]);
        assert_eq!(c[0], 81.0 - 2.0 * 4.0 * 9.0);
    }

    #[test]
    fn gram_is_parallel_invariant() {
        let pts: Vec<Vec<f64>> = (0..9).map(|i| vec![i as f64 * 0.3, (i * i) as f64 * 0.1]).collect();
        let d = WeightedDataset::unweighted(&pts).unwrap();
        let k = KernelFunction::Gaussian { bandwidth: 0.8 };
        let a = KernelMatrix::new(&d, k, Execution::Parallel).unwrap();
        let b = KernelMatrix::new(&d, k, Execution::Sequential).unwrap();
        assert_eq!(a.gram(), b.gram());
    }

    #[test]
    fn gram_matrices_are_psd() {
        let pts: Vec<Vec<f64>> = (0..15)
            .map(|i| vec![(i as f64 * 1.7).sin() * 3.0, (i as f64 * 0.9).cos()])
            .collect();
        let d = WeightedDataset::unweighted(&pts).unwrap();
        for k in [
            KernelFunction::Linear,
            KernelFunction::Polynomial { degree: 2, offset: 0.5 },
            KernelFunction::Gaussian { bandwidth: 0.6 },
        ] {
            let km = KernelMatrix::new(&d, k, Execution::Sequential).unwrap();
            let m = nalgebra::DMatrix::from_row_slice(15, 15, km.gram());
            let min = m.symmetric_eigenvalues().min();
            assert!(min >= -1e-8, "{k:?}: {min}");
        }
    }

    #[test]
    fn linear_kernel_run_matches_plain_run() {
        let d = line(&[0.0, 1.0, 2.0, 4.0, 7.0, 8.0]);
        let b = ClusterBounds::new(vec![2.0; 2], vec![4.0; 2]).unwrap();
        let sites = vec![vec![0.0], vec![1.0]];
        let cfg = RunConfig::default();
        let plain = run(&d, &b, &sites, &cfg).unwrap();
        let implicit: Vec<ImplicitSite> = sites.into_iter().map(ImplicitSite::Explicit).collect();
        let ker = kernel_run(&d, &b, &implicit, KernelFunction::Linear, &cfg, Execution::Sequential).unwrap();
        assert!(plain.assignment.max_abs_diff(&ker.assignment) <= 1e-9);
        assert_eq!(plain.trace.iterations(), ker.trace.iterations());
        assert_abs_diff_eq!(plain.squared_error, ker.squared_error, epsilon = 1e-9);
    }

    #[test]
    fn coefficient_centroids_are_convex() {
        let d = line(&[0.0, 1.0, 2.0]);
        let b = ClusterBounds::new(vec![1.5; 2], vec![1.5; 2]).unwrap();
        let k = KernelFunction::Gaussian { bandwidth: 1.0 };
        let out = kernel_run(
            &d,
            &b,
            &[ImplicitSite::Point(0), ImplicitSite::Point(2)],
            k,
            &RunConfig::default(),
            Execution::Sequential,
        )
        .unwrap();
        for c in &out.centroids {
            let ImplicitSite::Coefficients(a) = c else { panic!("coefficient site expected") };
            assert!(a.iter().all(|&v| v >= 0.0));
            assert_abs_diff_eq!(a.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
        assert!(out.assignment.fractional_count() <= 2);
    }
}
