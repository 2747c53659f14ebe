//! Max-min, max-product and uniform power on one seeded multi-cell scenario.
//!
//! cargo run --example power_control -- [cells] [users] [seed]

use netorch::canonical::Matrix;
use netorch::simenv::{generate_scenario, scenario_to_power_problem, Geometry};
use netorch::solvers::{
    geometric_mean, jain_index, min_power_for_target, min_value, sinr_all, solve_power_maxmin, solve_power_maxprod,
    solve_power_uniform, MAXMIN_DEFAULT_TOL, MAXPROD_DEFAULT_TOL,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let (cells, users, seed) = (*args.first().unwrap_or(&4), *args.get(1).unwrap_or(&5), *args.get(2).unwrap_or(&0));

    let scenario = generate_scenario(cells, users, 96, seed as u64, &Geometry::default().without_shadowing())?;
    let problem = scenario_to_power_problem(&scenario, 100.0)?;

    let runs = [
        ("max-min", solve_power_maxmin(&problem, MAXMIN_DEFAULT_TOL)?),
        ("max-prod", solve_power_maxprod(&problem, MAXPROD_DEFAULT_TOL)?),
        ("uniform", solve_power_uniform(&problem)?),
    ];
    println!("L={cells} K={users} M=96 seed={seed}, P_max = 100 mW per BS");
    println!("{:>9} {:>12} {:>12} {:>12} {:>8}", "", "min SINR", "geomean", "sum ln SINR", "jain");
    for (name, a) in &runs {
        let sinr = sinr_all(&problem, &Matrix::from_vec(cells, users, a.values.clone())?)?;
        let s = sinr.data();
        println!(
            "{name:>9} {:>12.6} {:>12.6} {:>12.6} {:>8.4}",
            min_value(s),
            geometric_mean(s),
            s.iter().map(|v| v.ln()).sum::<f64>(),
            jain_index(s)?
        );
    }
    // the minimal powers reaching 90% of the max-min target
    let target = 0.9 * runs[0].1.objective_value;
    if let Some(p) = min_power_for_target(&problem, target)? {
        let loads: Vec<String> = p.chunks(users).map(|c| format!("{:.2}", c.iter().sum::<f64>())).collect();
        println!("per-BS power for SINR >= {target:.4}: [{}] mW", loads.join(", "));
    }
    Ok(())
}
