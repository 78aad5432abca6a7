//! Exhaustive reference solvers for tiny instances.
//!
//! Nothing here shares code with the simplex engine: costs are squared
//! distances, and vertices come from solving every square subsystem of the
//! equality form with its own elimination routine.

use serde::{Deserialize, Serialize};

use crate::data::{Assignment, ClusterBounds, SiteSet, WeightedDataset};
use crate::error::{Error, Result};
use crate::kernel::KernelFunction;
use crate::parallel::{map_indexed, Execution};

/// Largest `k·n` accepted by [`TinyInstance`].
pub const MAX_TINY_SIZE: usize = 12;
/// Largest `kⁿ` accepted by [`brute_force_integral`].
pub const MAX_INTEGRAL_LABELINGS: usize = 60_000;

const FEAS_TOL: f64 = 1e-9;
const VALUE_TOL: f64 = 1e-9;

/// Data, bounds and sites small enough to enumerate.
#[derive(Debug, Clone)]
pub struct TinyInstance {
    data: WeightedDataset,
    lower: Vec<f64>,
    upper: Vec<f64>,
    sites: Vec<Vec<f64>>,
}

impl TinyInstance {
    /// Coincident sites are fused with summed bounds, as in the main solver.
    pub fn new(data: WeightedDataset, bounds: &ClusterBounds, sites: &SiteSet) -> Result<Self> {
        let k = sites.len();
        if k * data.len() > MAX_TINY_SIZE {
            return Err(Error::TooLarge(format!(
                "k·n = {} exceeds {MAX_TINY_SIZE}",
                k * data.len()
            )));
        }
        if bounds.len() != k || sites.dim() != data.dim() {
            return Err(Error::Dimension("sites, bounds and data disagree".into()));
        }
        bounds.check_feasible(data.total_weight())?;
        let merged = bounds.merged(sites.groups());
        Ok(Self {
            lower: merged.lower().to_vec(),
            upper: merged.upper().to_vec(),
            sites: sites.group_sites(),
            data,
        })
    }

    pub fn data(&self) -> &WeightedDataset {
        &self.data
    }

    pub fn groups(&self) -> usize {
        self.sites.len()
    }

    /// `ω_j ‖x_j − s_i‖²`.
    fn distance_cost(&self, i: usize, j: usize) -> f64 {
        let d: f64 = self
            .data
            .point(j)
            .iter()
            .zip(&self.sites[i])
            .map(|(x, s)| (x - s) * (x - s))
            .sum();
        self.data.weight(j) * d
    }

    fn norm_sum(&self) -> f64 {
        (0..self.data.len())
            .map(|j| self.data.weight(j) * self.data.point(j).iter().map(|x| x * x).sum::<f64>())
            .sum()
    }
}

/// All optimal vertices of a tiny assignment LP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexEnumeration {
    /// Optimal `Θ = Σ c_ij y_ij` with `c_ij = ω_j (‖s_i‖² − 2x_jᵀs_i)`.
    pub theta: f64,
    pub squared_error: f64,
    /// Distinct optimal vertices in basis enumeration order.
    pub vertices: Vec<Assignment>,
    pub bases_examined: usize,
    pub feasible_bases: usize,
}

/// Gaussian elimination with partial pivoting; `None` if singular.
fn solve_dense(m: usize, mut a: Vec<f64>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    for c in 0..m {
        let p = (c..m).max_by(|&x, &y| a[x * m + c].abs().total_cmp(&a[y * m + c].abs()))?;
        if a[p * m + c].abs() < 1e-12 {
            return None;
        }
        if p != c {
            for q in 0..m {
                a.swap(p * m + q, c * m + q);
            }
            b.swap(p, c);
        }
        for r in c + 1..m {
            let f = a[r * m + c] / a[c * m + c];
            if f != 0.0 {
                for q in c..m {
                    a[r * m + q] -= f * a[c * m + q];
                }
                b[r] -= f * b[c];
            }
        }
    }
    let mut x = vec![0.0; m];
    for r in (0..m).rev() {
        let s: f64 = (r + 1..m).map(|q| a[r * m + q] * x[q]).sum();
        x[r] = (b[r] - s) / a[r * m + r];
    }
    Some(x)
}

fn combinations(total: usize, size: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..size).collect();
    if size > total {
        return out;
    }
    loop {
        out.push(cur.clone());
        let Some(pos) = (0..size).rev().find(|&p| cur[p] < total - size + p) else {
            return out;
        };
        cur[pos] += 1;
        for q in pos + 1..size {
            cur[q] = cur[q - 1] + 1;
        }
    }
}

/// Enumerates every basic solution of
/// `Σ_i y_ij = 1`, `Σ_j ω_j y_ij + t_i = κ⁺_i` with `0 ≤ t_i ≤ κ⁺_i − κ⁻_i`,
/// `y ≥ 0`, with each nonbasic `t_i` at either bound, and keeps the optimal ones.
pub fn enumerate_optimal_vertices(instance: &TinyInstance, exec: Execution) -> Result<VertexEnumeration> {
    let g = instance.groups();
    let n = instance.data.len();
    let vars = g * n + g;
    let m = n + g;
    // column of variable v in the m×vars constraint matrix
    let column = |v: usize| -> Vec<f64> {
        let mut col = vec![0.0; m];
        if v < g * n {
            let (i, j) = (v / n, v % n);
            col[j] = 1.0;
            col[n + i] = instance.data.weight(j);
        } else {
            col[n + v - g * n] = 1.0;
        }
        col
    };
    let range: Vec<f64> = instance.upper.iter().zip(&instance.lower).map(|(u, l)| u - l).collect();
    let combos = combinations(vars, m);

    let per_basis = map_indexed(exec, combos.len(), |c| {
        let basis = &combos[c];
        let mut a = vec![0.0; m * m];
        for (q, &v) in basis.iter().enumerate() {
            for (r, x) in column(v).into_iter().enumerate() {
                a[r * m + q] = x;
            }
        }
        let free_slacks: Vec<usize> = (0..g).filter(|&i| !basis.contains(&(g * n + i))).collect();
        let mut found = Vec::new();
        for mask in 0..1usize << free_slacks.len() {
            let mut rhs: Vec<f64> = (0..n).map(|_| 1.0).chain(instance.upper.iter().copied()).collect();
            let mut t = vec![0.0; g];
            for (bit, &i) in free_slacks.iter().enumerate() {
                if mask >> bit & 1 == 1 {
                    t[i] = range[i];
                    rhs[n + i] -= range[i];
                }
            }
            let Some(x) = solve_dense(m, a.clone(), rhs) else {
                return found;
            };
            let mut y = vec![0.0; g * n];
            let mut ok = true;
            for (q, &v) in basis.iter().enumerate() {
                if v < g * n {
                    ok &= x[q] >= -FEAS_TOL;
                    y[v] = x[q].max(0.0);
                } else {
                    let i = v - g * n;
                    ok &= x[q] >= -FEAS_TOL && x[q] <= range[i] + FEAS_TOL;
                }
            }
            if ok {
                found.push(y);
            }
        }
        found
    });

    let bases_examined = combos.len();
    let feasible: Vec<Vec<f64>> = per_basis.into_iter().flatten().collect();
    if feasible.is_empty() {
        return Err(Error::InfeasibleLp);
    }
    let error_of = |y: &[f64]| -> f64 {
        (0..g * n)
            .filter(|&v| y[v] != 0.0)
            .map(|v| y[v] * instance.distance_cost(v / n, v % n))
            .sum()
    };
    let errors: Vec<f64> = feasible.iter().map(|y| error_of(y)).collect();
    let best = errors.iter().copied().fold(f64::INFINITY, f64::min);
    let mut vertices: Vec<Assignment> = Vec::new();
    for (y, &e) in feasible.iter().zip(&errors) {
        if e > best + VALUE_TOL * (1.0 + best.abs()) {
            continue;
        }
        let a = Assignment::new(g, n, y.clone())?;
        if vertices.iter().all(|v| v.max_abs_diff(&a) > VALUE_TOL) {
            vertices.push(a);
        }
    }
    Ok(VertexEnumeration {
        theta: best - instance.norm_sum(),
        squared_error: best,
        vertices,
        bases_examined,
        feasible_bases: feasible.len(),
    })
}

/// Best integral (hard) balanced assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegralOptimum {
    pub labels: Vec<usize>,
    pub assignment: Assignment,
    pub theta: f64,
    pub squared_error: f64,
}

/// Tries all `kⁿ` hard assignments and keeps the best balanced one (the
/// lexicographically first on ties). `None` if no hard assignment is balanced.
pub fn brute_force_integral(instance: &TinyInstance, exec: Execution) -> Result<Option<IntegralOptimum>> {
    let g = instance.groups();
    let n = instance.data.len();
    let count = (0..n).try_fold(1usize, |acc, _| acc.checked_mul(g).filter(|&c| c <= MAX_INTEGRAL_LABELINGS));
    let Some(count) = count else {
        return Err(Error::TooLarge(format!("{g}^{n} labelings exceed {MAX_INTEGRAL_LABELINGS}")));
    };
    let labels_of = |mut code: usize| -> Vec<usize> {
        let mut labels = vec![0; n];
        for l in labels.iter_mut().rev() {
            *l = code % g;
            code /= g;
        }
        labels
    };
    let scored = map_indexed(exec, count, |code| {
        let labels = labels_of(code);
        let mut size = vec![0.0; g];
        for (j, &l) in labels.iter().enumerate() {
            size[l] += instance.data.weight(j);
        }
        let balanced = (0..g).all(|i| {
            let tol = FEAS_TOL * (1.0 + instance.upper[i]);
            size[i] >= instance.lower[i] - tol && size[i] <= instance.upper[i] + tol
        });
        balanced.then(|| labels.iter().enumerate().map(|(j, &l)| instance.distance_cost(l, j)).sum::<f64>())
    });
    let best = scored
        .iter()
        .enumerate()
        .filter_map(|(code, e)| e.map(|e| (code, e)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    best.map(|(code, e)| {
        let labels = labels_of(code);
        Ok(IntegralOptimum {
            assignment: Assignment::from_labels(g, &labels)?,
            labels,
            theta: e - instance.norm_sum(),
            squared_error: e,
        })
    })
    .transpose()
}

/// Explicit feature map `φ` with `φ(u)ᵀφ(v) = K(u,v)`, for the linear kernel
/// and polynomial kernels of degree at most 2.
pub fn explicit_feature_map(kernel: KernelFunction, x: &[f64]) -> Option<Vec<f64>> {
    match kernel {
        KernelFunction::Linear => Some(x.to_vec()),
        KernelFunction::Polynomial { degree: 1, offset } => {
            Some(x.iter().copied().chain(std::iter::once(offset.sqrt())).collect())
        }
        KernelFunction::Polynomial { degree: 2, offset } => {
            let mut out = Vec::new();
            for a in 0..x.len() {
                out.push(x[a] * x[a]);
                for b in a + 1..x.len() {
                    out.push(std::f64::consts::SQRT_2 * x[a] * x[b]);
                }
            }
            out.extend(x.iter().map(|v| (2.0 * offset).sqrt() * v));
            out.push(offset);
            Some(out)
        }
        _ => None,
    }
}
