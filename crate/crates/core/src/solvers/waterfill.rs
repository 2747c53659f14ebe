use super::{Result, SolverError};

pub const WATERFILL_DEFAULT_TOL: f64 = 1e-12;
const BISECTION_CAP: usize = 200;

/// Water-filling over parallel channels: `p_k = max(0, μ − σ²/g_k)` with the
/// water level `μ` set so that `Σ p_k = P_total`.
pub fn solve_waterfilling(gains: &[f64], noise: f64, p_total: f64, tol: f64) -> Result<Vec<f64>> {
    if gains.is_empty() {
        return Err(SolverError::InvalidProblem("no channels".into()));
    }
    if gains.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
        return Err(SolverError::InvalidProblem("channel gains must be positive".into()));
    }
    if !(noise.is_finite() && noise > 0.0) {
        return Err(SolverError::InvalidProblem("noise must be positive".into()));
    }
    if !(p_total.is_finite() && p_total > 0.0) {
        return Err(SolverError::InvalidProblem("power budget must be positive".into()));
    }
    if !(tol > 0.0) {
        return Err(SolverError::InvalidProblem("tolerance must be positive".into()));
    }

    let floors: Vec<f64> = gains.iter().map(|g| noise / g).collect();
    let filled = |mu: f64| floors.iter().map(|f| (mu - f).max(0.0)).sum::<f64>();

    let base = floors.iter().copied().fold(f64::INFINITY, f64::min);
    let (mut lo, mut hi) = (base, base + p_total);
    for _ in 0..BISECTION_CAP {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if filled(mid) < p_total {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut mu = 0.5 * (lo + hi);

    // Close the remaining gap exactly on the active set when it is stable.
    let active: Vec<f64> = floors.iter().copied().filter(|&f| f < mu).collect();
    if !active.is_empty() {
        let exact = (p_total + active.iter().sum::<f64>()) / active.len() as f64;
        let same_set = floors.iter().all(|&f| (f < mu) == (f < exact));
        if same_set {
            mu = exact;
        }
    }
    let powers: Vec<f64> = floors.iter().map(|f| (mu - f).max(0.0)).collect();
    let total: f64 = powers.iter().sum();
    if (total - p_total).abs() > tol.max(p_total * 4.0 * f64::EPSILON * gains.len() as f64) {
        return Err(SolverError::NonConvergence {
            solver: "water_filling",
            iterations: BISECTION_CAP,
            detail: format!("allocated {total}, budget {p_total}"),
            diagnostics: Default::default(),
        });
    }
    Ok(powers)
}
