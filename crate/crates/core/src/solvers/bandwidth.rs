//! Proportional-fair bandwidth allocation.
//!
//! Each UE transmits at fixed power with noise proportional to its bandwidth,
//! so with `b` bandwidth units it achieves `R(b) = b·log2(1 + c/b)` where
//! `c = g·P/N0` is its effective SNR expressed in bandwidth units. The PF
//! objective `Σ ln R_k(b_k)` is strictly concave on the simplex `Σ b_k = B`.
//! The solver equalizes marginal utilities with a nested bisection: outer on
//! the shared multiplier, inner per UE on `U_k'(b) = λ`.

use super::{Allocation, Result, SolverError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const PF_DEFAULT_TOL: f64 = 1e-9;
const OUTER_CAP: usize = 200;
const INNER_CAP: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandwidthProblem {
    pub total_bw: f64,
    /// `c_k = g_k·P_k/N0`, one entry per UE.
    pub effective_snr: Vec<f64>,
}

impl BandwidthProblem {
    pub fn new(total_bw: f64, effective_snr: Vec<f64>) -> Result<Self> {
        let p = BandwidthProblem { total_bw, effective_snr };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.total_bw.is_finite() && self.total_bw > 0.0) {
            return Err(SolverError::InvalidProblem(format!(
                "total bandwidth must be positive, got {}",
                self.total_bw
            )));
        }
        if self.effective_snr.is_empty() {
            return Err(SolverError::InvalidProblem("no users".into()));
        }
        if let Some((k, c)) = self
            .effective_snr
            .iter()
            .enumerate()
            .find(|(_, c)| !(c.is_finite() && **c > 0.0))
        {
            return Err(SolverError::InvalidProblem(format!(
                "effective SNR of user {k} must be positive, got {c}"
            )));
        }
        Ok(())
    }

    pub fn users(&self) -> usize {
        self.effective_snr.len()
    }
}

/// Rate of a UE with effective SNR `c` on `b` bandwidth units.
pub fn user_rate(c: f64, b: f64) -> f64 {
    if b <= 0.0 {
        return 0.0;
    }
    b * (c / b).ln_1p() / std::f64::consts::LN_2
}

/// `(1+x)·ln(1+x) − x`, accurate for small `x`.
fn excess(x: f64) -> f64 {
    if x < 0.1 {
        // Σ_{n≥2} (−1)^n x^n / (n(n−1))
        let mut term = x;
        let mut sum = 0.0;
        for n in 2..=22u32 {
            term *= -x;
            let nf = n as f64;
            sum += term / (nf * (nf - 1.0));
        }
        -sum
    } else {
        (1.0 + x) * x.ln_1p() - x
    }
}

/// Derivative of `ln R(b)` with respect to `b`:
/// `(1/b)·(1 − x/((1+x)·ln(1+x)))`, `x = c/b`. Strictly positive and
/// strictly decreasing in `b`.
pub fn marginal_utility(c: f64, b: f64) -> f64 {
    let x = c / b;
    let denom = (1.0 + x) * x.ln_1p();
    excess(x) / denom / b
}

/// Solves `marginal_utility(c, b) = lambda` for `b ∈ (0, cap]`; returns `cap`
/// when even `cap` leaves the marginal utility above `lambda`.
fn bandwidth_for_multiplier(c: f64, lambda: f64, cap: f64, iters: &mut usize) -> f64 {
    if marginal_utility(c, cap) >= lambda {
        return cap;
    }
    // marginal_utility(b) < 1/b, so the root lies below 1/lambda.
    let mut hi = cap.min(1.0 / lambda);
    let mut lo = hi * 1e-12;
    while marginal_utility(c, lo) < lambda {
        lo *= 1e-6;
        if lo < f64::MIN_POSITIVE {
            return lo;
        }
    }
    for _ in 0..INNER_CAP {
        *iters += 1;
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi {
            break;
        }
        if marginal_utility(c, mid) > lambda {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 4.0 * f64::EPSILON {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Maximizes `Σ ln(b_k·log2(1 + c_k/b_k))` subject to `Σ b_k = B`.
pub fn solve_bandwidth_pf(problem: &BandwidthProblem, tol: f64) -> Result<Allocation> {
    problem.validate()?;
    if !(tol > 0.0) {
        return Err(SolverError::InvalidProblem("tolerance must be positive".into()));
    }
    let total = problem.total_bw;
    let c = &problem.effective_snr;
    let k = c.len();
    let mut inner_iters = 0usize;

    let sum_at = |lambda: f64, inner: &mut usize| -> (Vec<f64>, f64) {
        let b: Vec<f64> = c
            .iter()
            .map(|&ck| bandwidth_for_multiplier(ck, lambda, total, inner))
            .collect();
        let s = b.iter().sum();
        (b, s)
    };

    let share = total / k as f64;
    let mut lam_lo = c
        .iter()
        .map(|&ck| marginal_utility(ck, total))
        .fold(f64::INFINITY, f64::min);
    let mut lam_hi = c
        .iter()
        .map(|&ck| marginal_utility(ck, share))
        .fold(0.0, f64::max);

    let mut outer_iters = 0usize;
    if k > 1 {
        for _ in 0..OUTER_CAP {
            outer_iters += 1;
            let mid = (lam_lo * lam_hi).sqrt();
            if mid <= lam_lo || mid >= lam_hi {
                break;
            }
            let (_, s) = sum_at(mid, &mut inner_iters);
            // allocations shrink as the multiplier grows
            if s > total {
                lam_lo = mid;
            } else {
                lam_hi = mid;
            }
            if lam_hi / lam_lo - 1.0 < 4.0 * f64::EPSILON {
                break;
            }
        }
    }
    let lambda = if k > 1 { (lam_lo * lam_hi).sqrt() } else { lam_lo };
    let mut b = if k > 1 {
        sum_at(lambda, &mut inner_iters).0
    } else {
        vec![total]
    };
    let s: f64 = b.iter().sum();
    for v in &mut b {
        *v *= total / s;
    }

    let marginals: Vec<f64> = b.iter().zip(c).map(|(&bk, &ck)| marginal_utility(ck, bk)).collect();
    let m_max = marginals.iter().copied().fold(0.0, f64::max);
    let m_min = marginals.iter().copied().fold(f64::INFINITY, f64::min);
    let m_mean = marginals.iter().sum::<f64>() / k as f64;
    let kkt = (m_max - m_min) / m_mean;

    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("outer_iterations".into(), outer_iters as f64);
    diagnostics.insert("inner_iterations".into(), inner_iters as f64);
    diagnostics.insert("multiplier".into(), m_mean);
    diagnostics.insert("kkt_residual".into(), kkt);

    if b.iter().any(|v| !(*v > 0.0)) || kkt > tol {
        return Err(SolverError::NonConvergence {
            solver: "pf_bandwidth",
            iterations: outer_iters,
            detail: format!("marginal-utility spread {kkt:e} exceeds tolerance {tol:e}"),
            diagnostics,
        });
    }
    let objective_value = pf_utility(problem, &b)?;
    Ok(Allocation { values: b, objective_value, diagnostics })
}

/// The vanilla baseline: `B/K` to every UE.
pub fn solve_bandwidth_equal(problem: &BandwidthProblem) -> Result<Allocation> {
    problem.validate()?;
    let k = problem.users();
    let b = vec![problem.total_bw / k as f64; k];
    let objective_value = pf_utility(problem, &b)?;
    Ok(Allocation { values: b, objective_value, diagnostics: BTreeMap::new() })
}

/// `Σ ln(b_k·log2(1 + c_k/b_k))` for a feasible, strictly positive `b`.
pub fn pf_utility(problem: &BandwidthProblem, b: &[f64]) -> Result<f64> {
    if b.len() != problem.users() {
        return Err(SolverError::ShapeMismatch { expected: problem.users(), actual: b.len() });
    }
    if let Some(v) = b.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(SolverError::InfeasibleInput(format!(
            "bandwidth shares must be positive, got {v}"
        )));
    }
    let s: f64 = b.iter().sum();
    if (s - problem.total_bw).abs() > problem.total_bw * 1e-9 {
        return Err(SolverError::InfeasibleInput(format!(
            "shares sum to {s}, expected {}",
            problem.total_bw
        )));
    }
    Ok(b
        .iter()
        .zip(&problem.effective_snr)
        .map(|(&bk, &ck)| user_rate(ck, bk).ln())
        .sum())
}
