use super::{Result, SolverError};

/// Jain's fairness index `(Σx)² / (n·Σx²)`, in `[1/n, 1]`.
pub fn jain_index(x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(SolverError::InvalidProblem("empty vector".into()));
    }
    if x.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(SolverError::InvalidProblem(
            "jain index needs finite non-negative entries".into(),
        ));
    }
    let sum: f64 = x.iter().sum();
    if sum == 0.0 {
        return Err(SolverError::AllZero);
    }
    let sq: f64 = x.iter().map(|v| v * v).sum();
    Ok(sum * sum / (x.len() as f64 * sq))
}

/// Geometric mean via the mean of logs; 0 if any entry is 0.
pub fn geometric_mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    if x.iter().any(|v| *v <= 0.0) {
        return 0.0;
    }
    (x.iter().map(|v| v.ln()).sum::<f64>() / x.len() as f64).exp()
}

pub fn min_value(x: &[f64]) -> f64 {
    x.iter().copied().fold(f64::INFINITY, f64::min)
}
