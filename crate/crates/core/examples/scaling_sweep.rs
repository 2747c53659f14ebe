//! Solve time and fairness as the network grows, the library-level version
//! of `netorch bench`.
//!
//! cargo run --release --example scaling_sweep

use netorch::canonical::Matrix;
use netorch::simenv::{generate_scenario, scenario_to_power_problem, Geometry};
use netorch::solvers::{
    geometric_mean, min_value, sinr_all, solve_power_maxmin, solve_power_maxprod, Allocation, PowerProblem,
    SolverError, MAXMIN_DEFAULT_TOL, MAXPROD_DEFAULT_TOL,
};
use std::time::Instant;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("{:>3} {:>3} {:>9} {:>12} {:>12} {:>10}", "L", "K", "solver", "min SINR", "geomean", "ms");
    for cells in [1, 4, 9, 16, 25] {
        for users in [5, 10] {
            let s = generate_scenario(cells, users, 96, 1, &Geometry::default())?;
            let problem = scenario_to_power_problem(&s, 100.0)?;
            for (name, solve) in [
                ("max-min", (|p| solve_power_maxmin(p, MAXMIN_DEFAULT_TOL)) as fn(&PowerProblem) -> Result<Allocation, SolverError>),
                ("max-prod", |p| solve_power_maxprod(p, MAXPROD_DEFAULT_TOL)),
            ] {
                let start = Instant::now();
                let a = solve(&problem)?;
                let ms = start.elapsed().as_secs_f64() * 1e3;
                let sinr = sinr_all(&problem, &Matrix::from_vec(cells, users, a.values)?)?;
                println!(
                    "{cells:>3} {users:>3} {name:>9} {:>12.6} {:>12.6} {ms:>10.2}",
                    min_value(sinr.data()),
                    geometric_mean(sinr.data())
                );
            }
        }
    }
    Ok(())
}
