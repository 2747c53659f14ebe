//! Multi-cell massive MIMO downlink power control.
//!
//! Interference model, with `p` row-major over (cell `j`, user `k`):
//!
//! ```text
//! SINR_jk(p) = a_jk·p_jk / ( Σ_{(l,i)≠(j,k)} β_{l→(j,k)}·p_li + σ² )
//! ```
//!
//! `a_jk` is the coherent gain (antenna count times own-cell large-scale
//! gain for maximum-ratio precoding) and `β_{l→(j,k)}` the non-coherent gain
//! from base station `l` to UE `(j,k)`, independent of which UE `l` serves.
//! Every base station has the same budget `Σ_k p_lk ≤ P_max`.

use super::{metrics, Allocation, Result, SolverError};
use crate::canonical::Matrix;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const MAXMIN_DEFAULT_TOL: f64 = 1e-9;
pub const MAXPROD_DEFAULT_TOL: f64 = 1e-7;

const BISECTION_CAP: usize = 200;
const MAXPROD_CAP: usize = 5_000;
const ARMIJO_SLOPE: f64 = 1e-4;
const ARMIJO_SHRINK: f64 = 0.5;
const MIN_STEP: f64 = 1e-10;
const MAX_STEP: f64 = 1e10;
const FLOOR_FRACTION: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerProblem {
    pub cells: usize,
    pub users: usize,
    /// `cells × users`, entry `(j, k)` is `a_jk`.
    pub signal_gain: Matrix,
    /// `cells × (cells·users)`, entry `(l, j·users + k)` is `β_{l→(j,k)}`.
    pub cross_gain: Matrix,
    pub noise: f64,
    pub p_max: f64,
}

impl PowerProblem {
    pub fn new(
        signal_gain: Matrix,
        cross_gain: Matrix,
        noise: f64,
        p_max: f64,
    ) -> Result<Self> {
        let (cells, users) = signal_gain.shape();
        let p = PowerProblem { cells, users, signal_gain, cross_gain, noise, p_max };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SolverError::InvalidProblem(m));
        let (l, k) = (self.cells, self.users);
        if l == 0 || k == 0 {
            return bad("need at least one cell and one user".into());
        }
        if self.signal_gain.shape() != (l, k) {
            return bad(format!(
                "signal_gain is {:?}, expected {l}x{k}",
                self.signal_gain.shape()
            ));
        }
        if self.cross_gain.shape() != (l, l * k) {
            return bad(format!(
                "cross_gain is {:?}, expected {l}x{}",
                self.cross_gain.shape(),
                l * k
            ));
        }
        if !(self.noise.is_finite() && self.noise > 0.0) {
            return bad(format!("noise must be positive, got {}", self.noise));
        }
        if !(self.p_max.is_finite() && self.p_max > 0.0) {
            return bad(format!("p_max must be positive, got {}", self.p_max));
        }
        if self.cross_gain.data().iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return bad("cross gains must be finite and non-negative".into());
        }
        for j in 0..l {
            for kk in 0..k {
                let a = self.signal_gain.get(j, kk);
                let own = self.cross_gain.get(j, j * k + kk);
                if !(a.is_finite() && a > 0.0) {
                    return bad(format!("signal gain ({j},{kk}) must be positive, got {a}"));
                }
                if a < own {
                    return bad(format!(
                        "signal gain ({j},{kk}) = {a} is below its own-cell gain {own}"
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn total_users(&self) -> usize {
        self.cells * self.users
    }

    fn own_gain(&self, u: usize) -> f64 {
        self.cross_gain.get(u / self.users, u)
    }

    /// Interference-plus-noise seen by every UE.
    fn denominators(&self, p: &[f64], out: &mut [f64], scratch: &mut Scratch) {
        let (l, k) = (self.cells, self.users);
        for cell in 0..l {
            scratch.cell_power[cell] = p[cell * k..(cell + 1) * k].iter().sum();
        }
        for j in 0..l {
            // Σ_{i≠k} p_ji without cancellation
            let row = &p[j * k..(j + 1) * k];
            let mut prefix = 0.0;
            for (kk, others) in scratch.others.iter_mut().enumerate() {
                *others = prefix;
                prefix += row[kk];
            }
            let mut suffix = 0.0;
            for kk in (0..k).rev() {
                scratch.others[kk] += suffix;
                suffix += row[kk];
            }
            for kk in 0..k {
                let u = j * k + kk;
                let mut d = self.noise + self.own_gain(u) * scratch.others[kk];
                for cell in 0..l {
                    if cell != j {
                        d += self.cross_gain.get(cell, u) * scratch.cell_power[cell];
                    }
                }
                out[u] = d;
            }
        }
    }

    fn check_powers(&self, p: &Matrix) -> Result<()> {
        if p.shape() != (self.cells, self.users) {
            return Err(SolverError::ShapeMismatch {
                expected: self.total_users(),
                actual: p.rows() * p.cols(),
            });
        }
        if p.data().iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(SolverError::InvalidProblem("powers must be finite and non-negative".into()));
        }
        Ok(())
    }
}

struct Scratch {
    cell_power: Vec<f64>,
    others: Vec<f64>,
}

impl Scratch {
    fn new(problem: &PowerProblem) -> Self {
        Scratch { cell_power: vec![0.0; problem.cells], others: vec![0.0; problem.users] }
    }
}

/// Per-UE SINR for the power matrix `p` (`cells × users`).
pub fn sinr_all(problem: &PowerProblem, p: &Matrix) -> Result<Matrix> {
    problem.check_powers(p)?;
    let n = problem.total_users();
    let mut d = vec![0.0; n];
    problem.denominators(p.data(), &mut d, &mut Scratch::new(problem));
    let sinr = p
        .data()
        .iter()
        .zip(problem.signal_gain.data())
        .zip(&d)
        .map(|((pw, a), den)| a * pw / den)
        .collect();
    Ok(Matrix::from_vec(problem.cells, problem.users, sinr).expect("shape preserved"))
}

fn sinr_flat(problem: &PowerProblem, p: &[f64]) -> Vec<f64> {
    let mut d = vec![0.0; p.len()];
    problem.denominators(p, &mut d, &mut Scratch::new(problem));
    p.iter()
        .zip(problem.signal_gain.data())
        .zip(&d)
        .map(|((pw, a), den)| a * pw / den)
        .collect()
}

fn power_diagnostics(problem: &PowerProblem, p: &[f64], diag: &mut BTreeMap<String, f64>) -> Vec<f64> {
    let sinr = sinr_flat(problem, p);
    let lo = metrics::min_value(&sinr);
    let hi = sinr.iter().copied().fold(0.0, f64::max);
    let util = p
        .chunks(problem.users)
        .map(|c| c.iter().sum::<f64>() / problem.p_max)
        .fold(0.0, f64::max);
    diag.insert("min_sinr".into(), lo);
    diag.insert("sinr_spread".into(), if lo > 0.0 { (hi - lo) / lo } else { f64::INFINITY });
    diag.insert("max_budget_utilization".into(), util);
    sinr
}

/// Interference coupling normalized by the signal gain: `F[u][v]` is the
/// coefficient of `p_v` in UE `u`'s interference divided by `a_u`, and
/// `v_u = σ²/a_u`. SINR_u ≥ t for all `u` is then `p ≥ t·(F·p + v)`.
struct Coupling {
    f: DMatrix<f64>,
    v: DVector<f64>,
}

impl Coupling {
    fn new(problem: &PowerProblem) -> Self {
        let n = problem.total_users();
        let mut scratch = Scratch::new(problem);
        let (mut unit, mut col) = (vec![0.0; n], vec![0.0; n]);
        let a = problem.signal_gain.data();
        let mut f = DMatrix::zeros(n, n);
        for v in 0..n {
            unit[v] = 1.0;
            problem.denominators(&unit, &mut col, &mut scratch);
            unit[v] = 0.0;
            for u in 0..n {
                f[(u, v)] = (col[u] - problem.noise) / a[u];
            }
        }
        // the column sweep picks up noise rounding; own terms are exactly zero
        for u in 0..n {
            f[(u, u)] = 0.0;
        }
        Coupling { f, v: DVector::from_iterator(n, a.iter().map(|a| problem.noise / a)) }
    }

    /// Least fixed point of `p = t·(F·p + v)`, the minimal power meeting
    /// `target` at every UE, found by one LU solve. `None` when no
    /// non-negative fixed point exists (`t·ρ(F) ≥ 1`).
    fn least_fixed_point(&self, target: f64) -> Option<Vec<f64>> {
        let n = self.v.len();
        let m = DMatrix::identity(n, n) - &self.f * target;
        let p = m.lu().solve(&(&self.v * target))?;
        // p ≥ 0 solving (I − tF)p = tv forces p > 0 and t·ρ(F) < 1
        p.iter().all(|x| x.is_finite() && *x > 0.0).then(|| p.iter().copied().collect())
    }
}

enum Feasibility {
    Feasible(Vec<f64>),
    Infeasible,
}

fn feasibility(problem: &PowerProblem, coupling: &Coupling, target: f64) -> Feasibility {
    match coupling.least_fixed_point(target) {
        Some(p) if p.chunks(problem.users).all(|c| c.iter().sum::<f64>() <= problem.p_max) => {
            Feasibility::Feasible(p)
        }
        _ => Feasibility::Infeasible,
    }
}

/// Smallest power vector giving every UE an SINR of at least `target`, or
/// `None` when that needs more than some BS's budget.
pub fn min_power_for_target(problem: &PowerProblem, target: f64) -> Result<Option<Vec<f64>>> {
    problem.validate()?;
    if !(target.is_finite() && target >= 0.0) {
        return Err(SolverError::InvalidProblem(format!("target SINR must be non-negative, got {target}")));
    }
    match feasibility(problem, &Coupling::new(problem), target) {
        Feasibility::Feasible(p) => Ok(Some(p)),
        Feasibility::Infeasible => Ok(None),
    }
}

/// Maximizes the minimum SINR by bisection on the common target `t`, with
/// feasibility of each target decided by the standard-interference fixed
/// point against the per-BS budgets.
///
/// `objective_value` is the achieved minimum SINR; `diagnostics["target_sinr"]`
/// is the largest target proven feasible.
pub fn solve_power_maxmin(problem: &PowerProblem, tol: f64) -> Result<Allocation> {
    problem.validate()?;
    if !(tol > 0.0) {
        return Err(SolverError::InvalidProblem("tolerance must be positive".into()));
    }
    let n = problem.total_users();
    let coupling = Coupling::new(problem);

    // no UE can beat its interference-free SINR at full budget
    let mut t_hi = problem
        .signal_gain
        .data()
        .iter()
        .map(|a| a * problem.p_max / problem.noise)
        .fold(f64::INFINITY, f64::min);
    let mut t_lo = 0.0;
    let mut p_lo = vec![0.0; n];
    let mut bisections = 0usize;

    while bisections < BISECTION_CAP && !(t_lo > 0.0 && t_hi - t_lo <= tol * t_lo) {
        bisections += 1;
        let mid = 0.5 * (t_lo + t_hi);
        if mid <= t_lo || mid >= t_hi {
            break;
        }
        match feasibility(problem, &coupling, mid) {
            Feasibility::Feasible(p) => {
                t_lo = mid;
                p_lo = p;
            }
            Feasibility::Infeasible => t_hi = mid,
        }
    }

    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("target_sinr".into(), t_lo);
    diagnostics.insert("bisection_iterations".into(), bisections as f64);
    diagnostics.insert(
        "bracket_relative_width".into(),
        if t_lo > 0.0 { (t_hi - t_lo) / t_lo } else { f64::INFINITY },
    );
    if !(t_lo > 0.0 && t_hi - t_lo <= tol * t_lo) {
        return Err(SolverError::NonConvergence {
            solver: "max_min_bisection",
            iterations: bisections,
            detail: format!("bracket [{t_lo}, {t_hi}] wider than tolerance {tol:e}"),
            diagnostics,
        });
    }
    let sinr = power_diagnostics(problem, &p_lo, &mut diagnostics);
    Ok(Allocation { values: p_lo, objective_value: metrics::min_value(&sinr), diagnostics })
}

/// Every BS spreads its budget evenly: `p_jk = P_max / K`.
pub fn solve_power_uniform(problem: &PowerProblem) -> Result<Allocation> {
    problem.validate()?;
    let p = vec![problem.p_max / problem.users as f64; problem.total_users()];
    let mut diagnostics = BTreeMap::new();
    let sinr = power_diagnostics(problem, &p, &mut diagnostics);
    let objective_value = sinr.iter().map(|s| s.ln()).sum();
    Ok(Allocation { values: p, objective_value, diagnostics })
}

/// `f(q) = Σ_jk ln SINR_jk(e^q)`, concave in the log-powers `q`.
pub fn log_sinr_objective(problem: &PowerProblem, q: &[f64]) -> f64 {
    let p: Vec<f64> = q.iter().map(|v| v.exp()).collect();
    let mut d = vec![0.0; p.len()];
    problem.denominators(&p, &mut d, &mut Scratch::new(problem));
    q.iter()
        .zip(problem.signal_gain.data())
        .zip(&d)
        .map(|((qv, a), den)| a.ln() + qv - den.ln())
        .sum()
}

/// Gradient of [`log_sinr_objective`]:
/// `∂f/∂q_li = 1 − p_li·(S_l − β_{l→(l,i)}/D_li)`, `S_l = Σ_u β_{l→u}/D_u`.
pub fn log_sinr_gradient(problem: &PowerProblem, q: &[f64]) -> Vec<f64> {
    let p: Vec<f64> = q.iter().map(|v| v.exp()).collect();
    let mut d = vec![0.0; p.len()];
    problem.denominators(&p, &mut d, &mut Scratch::new(problem));
    let mut g = vec![0.0; p.len()];
    gradient_into(problem, &p, &d, &mut g);
    g
}

fn gradient_into(problem: &PowerProblem, p: &[f64], d: &[f64], g: &mut [f64]) {
    let (l, k) = (problem.cells, problem.users);
    for cell in 0..l {
        let row = problem.cross_gain.row(cell);
        let s: f64 = row.iter().zip(d).map(|(b, den)| b / den).sum();
        for i in 0..k {
            let u = cell * k + i;
            g[u] = 1.0 - p[u] * (s - row[u] / d[u]);
        }
    }
}

/// `W(e^x)` for the principal branch of Lambert's W, from the log argument.
fn lambert_w_exp(x: f64) -> f64 {
    if x < -40.0 {
        return x.exp();
    }
    // Newton on h(w) = w + ln w − x, concave increasing: from a start left of
    // the root the iterates increase monotonically.
    let mut w = if x <= 1.0 {
        let t = x.exp();
        t / (1.0 + t)
    } else {
        x - x.ln()
    };
    for _ in 0..100 {
        let next = w * (1.0 + x - w.ln()) / (1.0 + w);
        let done = (next - w).abs() <= 1e-15 * next;
        w = next;
        if done {
            break;
        }
    }
    w
}

/// Euclidean projection, in log-power space, onto
/// `{q : q ≥ q_floor, Σ e^q ≤ budget}`.
///
/// KKT gives `q_i = max(q_floor, y_i − W(ν·e^{y_i}))`; the multiplier `ν` is
/// found by Newton's method on the convex decreasing budget residual.
fn project_block(y: &[f64], q_floor: f64, budget: f64, out: &mut [f64]) {
    let at = |nu: f64, out: &mut [f64]| {
        for (o, &yi) in out.iter_mut().zip(y) {
            let z = if nu == 0.0 { yi } else { yi - lambert_w_exp(nu.ln() + yi) };
            *o = z.max(q_floor);
        }
    };
    at(0.0, out);
    let excess = |q: &[f64]| q.iter().map(|v| v.exp()).sum::<f64>() - budget;
    let mut f = excess(out);
    if f <= 0.0 {
        return;
    }
    let mut nu = 0.0;
    for _ in 0..200 {
        let slope: f64 = out
            .iter()
            .filter(|&&q| q > q_floor)
            .map(|&q| {
                let e = q.exp();
                -e * e / (1.0 + nu * e)
            })
            .sum();
        if slope >= 0.0 {
            break;
        }
        let next = nu - f / slope;
        if !(next > nu) {
            break;
        }
        nu = next;
        at(nu, out);
        f = excess(out);
        if f <= 1e-14 * budget {
            break;
        }
    }
    if f > 0.0 {
        // shave the rounding residue off the free coordinates
        let shift = ((f + budget) / budget).ln();
        for q in out.iter_mut() {
            if *q > q_floor {
                *q = (*q - shift).max(q_floor);
            }
        }
    }
}

fn project(problem: &PowerProblem, y: &[f64], out: &mut [f64]) {
    let k = problem.users;
    let q_floor = (FLOOR_FRACTION * problem.p_max).ln();
    for (yb, ob) in y.chunks(k).zip(out.chunks_mut(k)) {
        project_block(yb, q_floor, problem.p_max, ob);
    }
}

/// `‖P_C(q + ∇f(q)) − q‖₂`, the unit-step projected-gradient norm in
/// log-power space. Zero exactly at the optimum.
pub fn projected_gradient_norm(problem: &PowerProblem, p: &[f64]) -> f64 {
    let q: Vec<f64> = p.iter().map(|v| v.ln()).collect();
    let g = log_sinr_gradient(problem, &q);
    let y: Vec<f64> = q.iter().zip(&g).map(|(a, b)| a + b).collect();
    let mut proj = vec![0.0; q.len()];
    project(problem, &y, &mut proj);
    proj.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
}

struct Point {
    q: Vec<f64>,
    p: Vec<f64>,
    d: Vec<f64>,
    g: Vec<f64>,
}

impl Point {
    fn new(problem: &PowerProblem, q: Vec<f64>, scratch: &mut Scratch) -> Self {
        let p: Vec<f64> = q.iter().map(|v| v.exp()).collect();
        let mut d = vec![0.0; q.len()];
        problem.denominators(&p, &mut d, scratch);
        let mut g = vec![0.0; q.len()];
        gradient_into(problem, &p, &d, &mut g);
        Point { q, p, d, g }
    }
}

/// `f(q_new) − f(q_old)` evaluated through power increments, so that the
/// difference keeps full relative precision near the optimum.
fn objective_increase(problem: &PowerProblem, old: &Point, q_new: &[f64], scratch: &mut Scratch) -> f64 {
    let dp: Vec<f64> = old
        .p
        .iter()
        .zip(q_new.iter().zip(&old.q))
        .map(|(p, (qn, qo))| p * (qn - qo).exp_m1())
        .collect();
    let mut dd = vec![0.0; dp.len()];
    problem.denominators(&dp, &mut dd, scratch);
    // denominators() adds σ² once; increments must not carry it
    dd.iter()
        .zip(&old.d)
        .zip(q_new.iter().zip(&old.q))
        .map(|((ddu, du), (qn, qo))| (qn - qo) - ((ddu - problem.noise) / du).ln_1p())
        .sum()
}

/// Maximizes `Σ ln SINR` (equivalently the product of SINRs) in `q = ln p`
/// by spectral projected gradient: a Barzilai-Borwein trial step, projected
/// onto the feasible set, then Armijo backtracking along the segment. The
/// problem is concave in `q`, so the stationary point returned is the
/// global optimum.
pub fn solve_power_maxprod(problem: &PowerProblem, tol: f64) -> Result<Allocation> {
    problem.validate()?;
    if !(tol > 0.0) {
        return Err(SolverError::InvalidProblem("tolerance must be positive".into()));
    }
    let n = problem.total_users();
    let mut scratch = Scratch::new(problem);
    let uniform = (problem.p_max / problem.users as f64).ln();
    let mut q0 = vec![0.0; n];
    project(problem, &vec![uniform; n], &mut q0);
    let mut x = Point::new(problem, q0, &mut scratch);

    let mut target = vec![0.0; n];
    let mut shifted = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut backtracks = 0usize;
    let mut pg = f64::INFINITY;
    let mut iterations = 0usize;
    let mut stalled = false;
    let mut step = 1.0;

    while iterations < MAXPROD_CAP {
        for ((s, q), g) in shifted.iter_mut().zip(&x.q).zip(&x.g) {
            *s = q + g;
        }
        project(problem, &shifted, &mut target);
        pg = target.iter().zip(&x.q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if pg <= tol {
            break;
        }
        iterations += 1;

        for ((s, q), g) in shifted.iter_mut().zip(&x.q).zip(&x.g) {
            *s = q + step * g;
        }
        project(problem, &shifted, &mut target);
        let slope: f64 = x.g.iter().zip(target.iter().zip(&x.q)).map(|(g, (t, q))| g * (t - q)).sum();
        let mut lambda = 1.0;
        loop {
            for ((t, q), d) in trial.iter_mut().zip(&x.q).zip(&target) {
                *t = q + lambda * (d - q);
            }
            let gain = objective_increase(problem, &x, &trial, &mut scratch);
            if gain >= ARMIJO_SLOPE * lambda * slope {
                break;
            }
            backtracks += 1;
            lambda *= ARMIJO_SHRINK;
            if lambda < 1e-20 {
                stalled = true;
                break;
            }
        }
        if stalled {
            break;
        }
        let next = Point::new(problem, trial.clone(), &mut scratch);
        // Barzilai-Borwein: s·s / s·y with y the decrease in gradient
        let (mut ss, mut sy) = (0.0, 0.0);
        for u in 0..n {
            let (du, dg) = (next.q[u] - x.q[u], x.g[u] - next.g[u]);
            ss += du * du;
            sy += du * dg;
        }
        step = if sy > 0.0 { (ss / sy).clamp(MIN_STEP, MAX_STEP) } else { MAX_STEP };
        x = next;
    }

    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("iterations".into(), iterations as f64);
    diagnostics.insert("backtracks".into(), backtracks as f64);
    diagnostics.insert("projected_gradient_norm".into(), pg);
    if pg > tol {
        return Err(SolverError::NonConvergence {
            solver: "max_prod_gradient",
            iterations,
            detail: format!(
                "projected-gradient norm {pg:e} above tolerance {tol:e}{}",
                if stalled { " (line search stalled)" } else { "" }
            ),
            diagnostics,
        });
    }
    let sinr = power_diagnostics(problem, &x.p, &mut diagnostics);
    let objective_value = sinr.iter().map(|s| s.ln()).sum();
    Ok(Allocation { values: x.p, objective_value, diagnostics })
}
