//! Proportional-fair bandwidth split against the equal-split baseline.
//!
//! cargo run --example bandwidth_pf

use netorch::solvers::{
    jain_index, pf_utility, solve_bandwidth_equal, solve_bandwidth_pf, user_rate, BandwidthProblem, PF_DEFAULT_TOL,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // effective SNR per unit bandwidth, spread over three decades
    let snr = vec![0.5, 2.0, 8.0, 30.0, 120.0, 400.0];
    let problem = BandwidthProblem::new(100.0, snr.clone())?;

    let pf = solve_bandwidth_pf(&problem, PF_DEFAULT_TOL)?;
    let equal = solve_bandwidth_equal(&problem)?;

    println!("{:>4} {:>8} {:>10} {:>10} {:>10} {:>10}", "ue", "snr", "b_pf", "rate_pf", "b_eq", "rate_eq");
    for (k, c) in snr.iter().enumerate() {
        println!(
            "{k:>4} {c:>8.1} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            pf.values[k],
            user_rate(*c, pf.values[k]),
            equal.values[k],
            user_rate(*c, equal.values[k])
        );
    }
    let rates = |b: &[f64]| snr.iter().zip(b).map(|(c, b)| user_rate(*c, *b)).collect::<Vec<_>>();
    println!("utility      pf {:.6}  equal {:.6}", pf.objective_value, pf_utility(&problem, &equal.values)?);
    println!("jain (rate)  pf {:.4}    equal {:.4}", jain_index(&rates(&pf.values))?, jain_index(&rates(&equal.values))?);
    println!("kkt residual {:.2e}", pf.diagnostics["kkt_residual"]);
    Ok(())
}
