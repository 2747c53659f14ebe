//! Seeded scenario generation: layout, distances and large-scale gains.
//!
//! cargo run --example scenario_generation

use netorch::simenv::{generate_scenario, layout, Geometry};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let geometry = Geometry::default();
    for cells in [1, 3, 4, 9] {
        let (cols, rows) = layout(cells);
        println!("L={cells}: {cols}x{rows} grid");
    }

    let s = generate_scenario(4, 3, 96, 7, &geometry)?;
    println!("\nL=4 K=3 seed=7, shadowing {} dB", geometry.shadowing_std_db);
    for u in 0..s.cells * s.users {
        let own = u / s.users;
        let gains: Vec<String> =
            (0..s.cells).map(|l| format!("{:>10.3e}", s.large_scale_gain.get(l, u))).collect();
        println!(
            "ue {u:>2} (cell {own}) at ({:>6.1}, {:>6.1}) m, {:>6.1} m from its BS, gains {}",
            s.ue_positions.get(u, 0),
            s.ue_positions.get(u, 1),
            s.serving_distance(u),
            gains.join(" ")
        );
    }
    let again = generate_scenario(4, 3, 96, 7, &geometry)?;
    println!("\nregenerated with the same seed: identical = {}", again == s);
    Ok(())
}
