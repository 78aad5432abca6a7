//! Bounded-variable primal simplex specialized to the partition LP.
//!
//! Point rows are generalized upper bounds: each keeps one basic key
//! variable, so only a `g×g` working basis over the range rows is factored.
//! Primal values and duals are recomputed from the basis on every iteration.

use super::dense::Lu;
use super::{Basis, LPSolution, PartitionLP, Var};
use crate::data::Assignment;
use crate::error::{Error, Result};

/// Smallest direction entry considered nonzero in the ratio test.
pub const PIVOT_TOL: f64 = 1e-10;
/// Bound violation tolerated on primal values.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Consecutive degenerate pivots after which Bland's rule takes over.
pub const DEGENERATE_STALL_LIMIT: usize = 50;

const SINGULAR_TOL: f64 = 1e-12;
const RATIO_TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    One,
    Two,
}

struct Candidate {
    var: Var,
    /// +1 when the entering variable increases from its lower bound.
    dir: f64,
}

struct Leaving {
    var: Var,
    to_upper: bool,
    /// Position in the working basis, or `None` for a key variable.
    extra_pos: Option<usize>,
}

struct Engine<'a> {
    lp: &'a PartitionLP,
    g: usize,
    n: usize,
    unit_cost: Vec<f64>,
    slack_range: Vec<f64>,
    opt_tol: f64,

    key: Vec<usize>,
    extra: Vec<Var>,
    slack_at_upper: Vec<bool>,
    art_sign: Vec<f64>,
    extra_assign: Vec<bool>,
    slack_basic: Vec<bool>,
    art_basic: Vec<bool>,

    phase: Phase,
    pivots: usize,
    stall: usize,
    bland: bool,

    lu: Option<Lu>,
    extra_vals: Vec<f64>,
    key_vals: Vec<f64>,
    row_duals: Vec<f64>,
    unit_point_duals: Vec<f64>,
}

pub(super) fn solve(lp: &PartitionLP, warm: Option<&Basis>) -> Result<LPSolution> {
    let mut eng = Engine::new(lp);
    let mut warm_started = false;
    if let Some(basis) = warm {
        warm_started = eng.try_warm_start(basis);
    }
    if warm_started {
        // a feasible crash basis that already undercuts the warm one is the better start
        let mut cold = Engine::new(lp);
        cold.crash();
        if !cold.art_basic.iter().any(|&b| b) && cold.factor() {
            cold.compute_primal();
            if cold.primal_objective() < eng.primal_objective() - eng.opt_tol {
                eng = cold;
                warm_started = false;
            }
        }
    }
    let mut phase_one_pivots = 0;
    if !warm_started && eng.extra.is_empty() {
        eng.crash();
        if eng.art_basic.iter().any(|&b| b) {
            eng.phase = Phase::One;
            eng.iterate()?;
            phase_one_pivots = eng.pivots;
            eng.leave_phase_one()?;
        }
    }
    eng.phase = Phase::Two;
    eng.stall = 0;
    eng.bland = false;
    eng.iterate()?;
    Ok(eng.into_solution(phase_one_pivots, warm_started))
}

impl<'a> Engine<'a> {
    fn new(lp: &'a PartitionLP) -> Self {
        let (g, n) = (lp.groups, lp.points);
        let unit_cost: Vec<f64> = (0..g * n).map(|idx| lp.costs[idx] / lp.weights[idx % n]).collect();
        let scale = unit_cost.iter().fold(1.0f64, |m, c| m.max(c.abs()));
        Self {
            lp,
            g,
            n,
            unit_cost,
            slack_range: lp.upper.iter().zip(&lp.lower).map(|(u, l)| u - l).collect(),
            opt_tol: 1e-10 * scale,
            key: vec![0; n],
            extra: Vec::with_capacity(g),
            slack_at_upper: vec![false; g],
            art_sign: vec![1.0; g],
            extra_assign: vec![false; g * n],
            slack_basic: vec![false; g],
            art_basic: vec![false; g],
            phase: Phase::Two,
            pivots: 0,
            stall: 0,
            bland: false,
            lu: None,
            extra_vals: vec![0.0; g],
            key_vals: vec![1.0; n],
            row_duals: vec![0.0; g],
            unit_point_duals: vec![0.0; n],
        }
    }

    fn basis(&self) -> Basis {
        Basis {
            key: self.key.clone(),
            extra: self.extra.clone(),
            slack_at_upper: self.slack_at_upper.clone(),
        }
    }

    fn numerical(&self, reason: impl Into<String>) -> Error {
        Error::Numerical {
            reason: reason.into(),
            basis: Box::new(self.basis()),
        }
    }

    fn var_index(&self, v: Var) -> usize {
        match v {
            Var::Assign { cluster, point } => cluster * self.n + point,
            Var::Slack(i) => self.g * self.n + i,
            Var::Artificial(i) => self.g * self.n + self.g + i,
        }
    }

    fn bounds(&self, v: Var) -> (f64, f64) {
        match v {
            Var::Assign { .. } => (0.0, f64::INFINITY),
            Var::Slack(i) => (0.0, self.slack_range[i]),
            Var::Artificial(_) => match self.phase {
                Phase::One => (0.0, f64::INFINITY),
                Phase::Two => (0.0, 0.0),
            },
        }
    }

    fn cost(&self, v: Var) -> f64 {
        match (self.phase, v) {
            (Phase::One, Var::Artificial(_)) => 1.0,
            (Phase::Two, Var::Assign { cluster, point }) => self.lp.cost(cluster, point),
            _ => 0.0,
        }
    }

    fn set_basic(&mut self, v: Var, basic: bool) {
        match v {
            Var::Assign { cluster, point } => self.extra_assign[cluster * self.n + point] = basic,
            Var::Slack(i) => self.slack_basic[i] = basic,
            Var::Artificial(i) => self.art_basic[i] = basic,
        }
    }

    /// Column of `v` in range-row space after eliminating the key variables.
    fn reduced_column(&self, v: Var) -> Vec<f64> {
        let mut col = vec![0.0; self.g];
        match v {
            Var::Assign { cluster, point } => {
                let w = self.lp.weights[point];
                col[cluster] += w;
                col[self.key[point]] -= w;
            }
            Var::Slack(i) => col[i] = 1.0,
            Var::Artificial(i) => col[i] = self.art_sign[i],
        }
        col
    }

    fn factor(&mut self) -> bool {
        let g = self.g;
        let mut w = vec![0.0; g * g];
        for (c, &v) in self.extra.iter().enumerate() {
            for (r, x) in self.reduced_column(v).into_iter().enumerate() {
                w[r * g + c] = x;
            }
        }
        self.lu = Lu::factor(g, w, SINGULAR_TOL);
        self.lu.is_some()
    }

    fn compute_primal(&mut self) {
        let lp = self.lp;
        let mut rhs = lp.upper.clone();
        for (j, &k) in self.key.iter().enumerate() {
            rhs[k] -= lp.weights[j];
        }
        for i in 0..self.g {
            if !self.slack_basic[i] && self.slack_at_upper[i] {
                rhs[i] -= self.slack_range[i];
            }
        }
        let lu = self.lu.as_ref().expect("factored basis");
        self.extra_vals = lu.solve(&rhs);
        self.key_vals.iter_mut().for_each(|v| *v = 1.0);
        for (c, v) in self.extra.iter().enumerate() {
            if let Var::Assign { point, .. } = *v {
                self.key_vals[point] -= self.extra_vals[c];
            }
        }
    }

    fn compute_duals(&mut self) {
        let h: Vec<f64> = self
            .extra
            .iter()
            .map(|&v| match v {
                Var::Assign { point, .. } => {
                    self.cost(v)
                        - self.cost(Var::Assign {
                            cluster: self.key[point],
                            point,
                        })
                }
                _ => self.cost(v),
            })
            .collect();
        let lu = self.lu.as_ref().expect("factored basis");
        self.row_duals = lu.solve_transpose(&h);
        for j in 0..self.n {
            let k = self.key[j];
            let unit = match self.phase {
                Phase::One => 0.0,
                Phase::Two => self.unit_cost[k * self.n + j],
            };
            self.unit_point_duals[j] = unit - self.row_duals[k];
        }
    }

    /// Reduced cost per unit of point weight for `y_ij`.
    fn assign_reduced_cost(&self, i: usize, j: usize) -> f64 {
        let unit = match self.phase {
            Phase::One => 0.0,
            Phase::Two => self.unit_cost[i * self.n + j],
        };
        unit - self.row_duals[i] - self.unit_point_duals[j]
    }

    fn price(&self) -> Option<Candidate> {
        let tol = self.opt_tol;
        let mut best: Option<(f64, Candidate)> = None;
        let mut offer = |score: f64, cand: Candidate, bland: bool| -> bool {
            if bland {
                best = Some((score, cand));
                return true;
            }
            if best.as_ref().is_none_or(|(s, _)| score > *s) {
                best = Some((score, cand));
            }
            false
        };
        for i in 0..self.g {
            for j in 0..self.n {
                if self.key[j] == i || self.extra_assign[i * self.n + j] {
                    continue;
                }
                let d = self.assign_reduced_cost(i, j);
                if d < -tol
                    && offer(
                        -d,
                        Candidate {
                            var: Var::Assign { cluster: i, point: j },
                            dir: 1.0,
                        },
                        self.bland,
                    )
                {
                    return best.map(|b| b.1);
                }
            }
        }
        for i in 0..self.g {
            if self.slack_basic[i] || self.slack_range[i] <= 0.0 {
                continue;
            }
            let d = -self.row_duals[i];
            let (attractive, dir) = if self.slack_at_upper[i] {
                (d > tol, -1.0)
            } else {
                (d < -tol, 1.0)
            };
            if attractive && offer(d.abs(), Candidate { var: Var::Slack(i), dir }, self.bland) {
                return best.map(|b| b.1);
            }
        }
        if self.phase == Phase::One {
            for i in 0..self.g {
                if self.art_basic[i] {
                    continue;
                }
                let d = 1.0 - self.art_sign[i] * self.row_duals[i];
                if d < -tol
                    && offer(
                        -d,
                        Candidate {
                            var: Var::Artificial(i),
                            dir: 1.0,
                        },
                        self.bland,
                    )
                {
                    return best.map(|b| b.1);
                }
            }
        }
        best.map(|b| b.1)
    }

    fn iterate(&mut self) -> Result<()> {
        let cap = 50 * (self.g * self.n + self.g) + 1000;
        loop {
            if !self.factor() {
                return Err(self.numerical("working basis became singular"));
            }
            self.compute_primal();
            self.compute_duals();
            let Some(cand) = self.price() else {
                return Ok(());
            };
            if self.pivots >= cap {
                return Err(self.numerical(format!("no optimum after {cap} pivots")));
            }
            let theta = self.step(cand)?;
            self.pivots += 1;
            if theta <= RATIO_TIE_TOL {
                self.stall += 1;
                if self.stall >= DEGENERATE_STALL_LIMIT {
                    self.bland = true;
                }
            } else {
                self.stall = 0;
                self.bland = false;
            }
        }
    }

    /// Performs one ratio test and basis update; returns the step length.
    fn step(&mut self, cand: Candidate) -> Result<f64> {
        let q = cand.var;
        let lu = self.lu.as_ref().expect("factored basis");
        let alpha_extra = lu.solve(&self.reduced_column(q));

        // key rows touched by this direction
        let mut alpha_key: Vec<(usize, f64)> = Vec::new();
        let mut add_key = |p: usize, a: f64| {
            if let Some(e) = alpha_key.iter_mut().find(|e| e.0 == p) {
                e.1 += a;
            } else {
                alpha_key.push((p, a));
            }
        };
        if let Var::Assign { point, .. } = q {
            add_key(point, 1.0);
        }
        for (c, v) in self.extra.iter().enumerate() {
            if let Var::Assign { point, .. } = *v {
                add_key(point, -alpha_extra[c]);
            }
        }

        // (ratio, |alpha|, var index, leaving)
        let mut candidates: Vec<(f64, f64, usize, Leaving)> = Vec::new();
        for (c, &v) in self.extra.iter().enumerate() {
            let a = cand.dir * alpha_extra[c];
            let (lo, hi) = self.bounds(v);
            let x = self.extra_vals[c];
            let (ratio, to_upper) = if a > PIVOT_TOL {
                ((x - lo).max(0.0) / a, false)
            } else if a < -PIVOT_TOL && hi.is_finite() {
                ((hi - x).max(0.0) / -a, true)
            } else {
                continue;
            };
            candidates.push((
                ratio,
                a.abs(),
                self.var_index(v),
                Leaving {
                    var: v,
                    to_upper,
                    extra_pos: Some(c),
                },
            ));
        }
        for &(p, a) in &alpha_key {
            let a = cand.dir * a;
            if a > PIVOT_TOL {
                let v = Var::Assign {
                    cluster: self.key[p],
                    point: p,
                };
                candidates.push((
                    self.key_vals[p].max(0.0) / a,
                    a.abs(),
                    self.var_index(v),
                    Leaving {
                        var: v,
                        to_upper: false,
                        extra_pos: None,
                    },
                ));
            }
        }
        let (lo, hi) = self.bounds(q);
        let flip = hi - lo;

        let min_ratio = candidates.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
        if flip.is_finite() && flip < min_ratio - RATIO_TIE_TOL {
            if let Var::Slack(i) = q {
                self.slack_at_upper[i] = !self.slack_at_upper[i];
            }
            return Ok(flip);
        }
        if !min_ratio.is_finite() {
            return Err(self.numerical("unbounded direction"));
        }
        let chosen = candidates
            .into_iter()
            .filter(|c| c.0 <= min_ratio + RATIO_TIE_TOL)
            .reduce(|best, c| {
                let better = if self.bland { c.2 < best.2 } else { c.1 > best.1 };
                if better {
                    c
                } else {
                    best
                }
            })
            .expect("at least one blocking variable");
        let leaving = chosen.3;
        self.apply_pivot(q, leaving.var, leaving.to_upper, leaving.extra_pos)?;
        Ok(min_ratio)
    }

    fn apply_pivot(&mut self, entering: Var, leaving: Var, to_upper: bool, extra_pos: Option<usize>) -> Result<()> {
        self.set_basic(leaving, false);
        if let Var::Slack(i) = leaving {
            self.slack_at_upper[i] = to_upper;
        }
        match extra_pos {
            Some(c) => {
                self.extra[c] = entering;
                self.set_basic(entering, true);
            }
            None => {
                let Var::Assign { point, .. } = leaving else {
                    unreachable!("keys are assignment variables")
                };
                match entering {
                    Var::Assign { cluster, point: p } if p == point => {
                        self.key[point] = cluster;
                    }
                    _ => {
                        let c = self
                            .extra
                            .iter()
                            .position(|v| matches!(*v, Var::Assign { point: p, .. } if p == point))
                            .ok_or_else(|| self.numerical("key row left without a basic variable"))?;
                        let Var::Assign { cluster: new_key, .. } = self.extra[c] else {
                            unreachable!()
                        };
                        self.extra_assign[new_key * self.n + point] = false;
                        self.key[point] = new_key;
                        self.extra[c] = entering;
                        self.set_basic(entering, true);
                    }
                }
            }
        }
        if let Var::Slack(i) = entering {
            self.slack_at_upper[i] = false;
        }
        Ok(())
    }

    /// Greedy integral start: fill clusters up to κ⁻ in cost order, then place
    /// the rest where κ⁺ still has room. Rows left out of range get an artificial.
    fn crash(&mut self) {
        let (g, n) = (self.g, self.n);
        let lp = self.lp;
        let mut order: Vec<usize> = (0..g * n).collect();
        order.sort_by(|&a, &b| self.unit_cost[a].total_cmp(&self.unit_cost[b]).then(a.cmp(&b)));
        let mut load = vec![0.0; g];
        let mut placed = vec![false; n];
        let tol = FEASIBILITY_TOL;
        for pass in 0..3 {
            for &idx in &order {
                let (i, j) = (idx / n, idx % n);
                if placed[j] {
                    continue;
                }
                let w = lp.weights[j];
                let fits = load[i] + w <= lp.upper[i] + tol;
                let take = match pass {
                    0 => fits && load[i] < lp.lower[i] - tol,
                    1 => fits,
                    _ => true,
                };
                if take {
                    placed[j] = true;
                    load[i] += w;
                    self.key[j] = i;
                }
            }
        }
        self.extra.clear();
        for i in 0..g {
            let var = if load[i] < lp.lower[i] - tol {
                self.slack_at_upper[i] = true;
                self.art_sign[i] = 1.0;
                Var::Artificial(i)
            } else if load[i] > lp.upper[i] + tol {
                self.slack_at_upper[i] = false;
                self.art_sign[i] = -1.0;
                Var::Artificial(i)
            } else {
                Var::Slack(i)
            };
            self.extra.push(var);
            self.set_basic(var, true);
        }
    }

    fn leave_phase_one(&mut self) -> Result<()> {
        let residual: f64 = self
            .extra
            .iter()
            .zip(&self.extra_vals)
            .filter(|(v, _)| matches!(v, Var::Artificial(_)))
            .map(|(_, x)| x.abs())
            .sum();
        let total: f64 = self.lp.weights.iter().sum();
        if residual > FEASIBILITY_TOL * total.max(1.0) {
            return Err(Error::InfeasibleLp);
        }
        // an artificial left in the basis is parallel to its row's slack,
        // which is then nonbasic and can replace it
        for c in 0..self.extra.len() {
            if let Var::Artificial(i) = self.extra[c] {
                if self.slack_basic[i] {
                    return Err(self.numerical("artificial and slack both basic"));
                }
                self.art_basic[i] = false;
                self.extra[c] = Var::Slack(i);
                self.slack_basic[i] = true;
            }
        }
        Ok(())
    }

    fn try_warm_start(&mut self, basis: &Basis) -> bool {
        let (g, n) = (self.g, self.n);
        if basis.key.len() != n
            || basis.extra.len() != g
            || basis.slack_at_upper.len() != g
            || basis.key.iter().any(|&k| k >= g)
        {
            return false;
        }
        self.key = basis.key.clone();
        self.slack_at_upper = basis.slack_at_upper.clone();
        self.extra.clear();
        for &v in &basis.extra {
            let ok = match v {
                Var::Assign { cluster, point } => {
                    cluster < g
                        && point < n
                        && self.key[point] != cluster
                        && !self.extra_assign[cluster * n + point]
                }
                Var::Slack(i) => i < g && !self.slack_basic[i],
                Var::Artificial(_) => false,
            };
            if !ok {
                self.reset();
                return false;
            }
            self.extra.push(v);
            self.set_basic(v, true);
        }
        if !self.factor() {
            self.reset();
            return false;
        }
        self.compute_primal();
        let feasible = self.key_vals.iter().all(|&x| x >= -FEASIBILITY_TOL)
            && self.extra.iter().zip(&self.extra_vals).all(|(&v, &x)| {
                let (lo, hi) = self.bounds(v);
                x >= lo - FEASIBILITY_TOL && x <= hi + FEASIBILITY_TOL
            });
        if !feasible {
            self.reset();
        }
        feasible
    }

    /// Phase-two objective of the current primal values.
    fn primal_objective(&self) -> f64 {
        let keys: f64 = (0..self.n).map(|j| self.key_vals[j] * self.lp.cost(self.key[j], j)).sum();
        let extras: f64 = self
            .extra
            .iter()
            .zip(&self.extra_vals)
            .map(|(&v, x)| match v {
                Var::Assign { cluster, point } => x * self.lp.cost(cluster, point),
                _ => 0.0,
            })
            .sum();
        keys + extras
    }

    fn reset(&mut self) {
        let fresh = Engine::new(self.lp);
        *self = fresh;
    }

    fn into_solution(self, phase_one_pivots: usize, warm_started: bool) -> LPSolution {
        let (g, n) = (self.g, self.n);
        let mut values = vec![0.0; g * n];
        for (j, &k) in self.key.iter().enumerate() {
            values[k * n + j] = self.key_vals[j];
        }
        for (c, v) in self.extra.iter().enumerate() {
            if let Var::Assign { cluster, point } = *v {
                values[cluster * n + point] = self.extra_vals[c];
            }
        }
        for v in &mut values {
            *v = v.clamp(0.0, 1.0);
        }
        let objective = values.iter().zip(&self.lp.costs).map(|(y, c)| y * c).sum();
        let point_duals = self
            .unit_point_duals
            .iter()
            .zip(&self.lp.weights)
            .map(|(p, w)| p * w)
            .collect();
        LPSolution {
            assignment: Assignment::from_raw(g, n, values),
            basis: self.basis(),
            point_duals,
            cluster_duals: self.row_duals,
            objective,
            pivots: self.pivots,
            phase_one_pivots,
            warm_started,
        }
    }
}
