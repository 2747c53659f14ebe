//! Seeded multi-cell scenario generation.
//!
//! Base stations sit at the centres of square cells of side `2·cell_radius`,
//! laid out on a `√L × √L` grid when `L` is a perfect square and on a `1 × L`
//! line otherwise; distances wrap around the layout (torus). UEs are dropped
//! uniformly in their serving cell, at least `min_distance` from its BS.
//!
//! Large-scale gains follow
//! `β_dB(d) = intercept_dB − 10·exponent·log10(d) + shadowing − noise_dBm`,
//! i.e. they are normalized by the receiver noise power so that `σ² = 1`
//! and powers are expressed in mW.
//!
//! Randomness comes from SplitMix64 streams, one per (purpose, entity), so a
//! scenario is a pure function of its seed and parameters on every platform:
//! the stream for `(seed, tag, index)` starts from
//! `mix64(seed ⊕ mix64(tag + φ) ⊕ mix64(index + 2φ))` with `φ = 0x9e3779b97f4a7c15`,
//! and uniforms take the top 53 bits of each output.

use crate::canonical::Matrix;
use crate::solvers::{BandwidthProblem, PowerProblem, Result as SolverResult};
use serde::{Deserialize, Serialize};
use thiserror::Error;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;
const TAG_UE_POSITION: u64 = 1;
const TAG_SHADOWING: u64 = 2;
const DROP_ATTEMPTS: usize = 10_000;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(state: u64) -> Self {
        SplitMix64 { state }
    }

    /// Independent stream for one purpose and entity.
    pub fn stream(seed: u64, tag: u64, index: u64) -> Self {
        let tag_mix = mix64(tag.wrapping_add(GOLDEN_GAMMA));
        let idx_mix = mix64(index.wrapping_add(GOLDEN_GAMMA.wrapping_mul(2)));
        SplitMix64::new(mix64(seed ^ tag_mix ^ idx_mix))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box–Muller (cosine branch).
    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    pub cell_radius_m: f64,
    pub min_distance_m: f64,
    pub pathloss_exponent: f64,
    pub pathloss_intercept_db: f64,
    pub shadowing_std_db: f64,
    pub noise_power_dbm: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Geometry {
            cell_radius_m: 250.0,
            min_distance_m: 35.0,
            pathloss_exponent: 3.76,
            pathloss_intercept_db: -35.3,
            shadowing_std_db: 8.0,
            noise_power_dbm: -94.0,
        }
    }
}

impl Geometry {
    pub fn without_shadowing(mut self) -> Self {
        self.shadowing_std_db = 0.0;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidGeometry(m.to_string()));
        let finite = [
            self.cell_radius_m,
            self.min_distance_m,
            self.pathloss_exponent,
            self.pathloss_intercept_db,
            self.shadowing_std_db,
            self.noise_power_dbm,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("geometry parameters must be finite");
        }
        if self.cell_radius_m <= 0.0 {
            return bad("cell radius must be positive");
        }
        if self.min_distance_m <= 0.0 || self.min_distance_m >= self.cell_radius_m {
            return bad("min distance must lie in (0, cell radius)");
        }
        if self.pathloss_exponent <= 0.0 {
            return bad("pathloss exponent must be positive");
        }
        if self.shadowing_std_db < 0.0 {
            return bad("shadowing std must be non-negative");
        }
        Ok(())
    }

    /// Noise-normalized linear gain at distance `d` (no shadowing).
    pub fn gain_at(&self, d: f64) -> f64 {
        self.linear_gain(d, 0.0)
    }

    fn linear_gain(&self, d: f64, shadow_db: f64) -> f64 {
        let db = self.pathloss_intercept_db - 10.0 * self.pathloss_exponent * d.log10() + shadow_db
            - self.noise_power_dbm;
        10f64.powf(db / 10.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub cells: usize,
    pub users: usize,
    pub antennas: usize,
    pub seed: u64,
    pub geometry: Geometry,
    /// `cells × 2`, metres.
    pub bs_positions: Matrix,
    /// `(cells·users) × 2`, metres, row `j·users + k`.
    pub ue_positions: Matrix,
    /// `cells × (cells·users)`, entry `(l, j·users + k)` is `β_{l→(j,k)}`.
    pub large_scale_gain: Matrix,
}

/// `(columns, rows)` of the cell layout.
pub fn layout(cells: usize) -> (usize, usize) {
    let side = (cells as f64).sqrt().round() as usize;
    if side * side == cells {
        (side, side)
    } else {
        (cells, 1)
    }
}

fn wrapped_distance(a: (f64, f64), b: (f64, f64), width: f64, height: f64) -> f64 {
    let wrap = |d: f64, period: f64| {
        let d = d.abs() % period;
        d.min(period - d)
    };
    let dx = wrap(a.0 - b.0, width);
    let dy = wrap(a.1 - b.1, height);
    dx.hypot(dy)
}

pub fn generate_scenario(
    cells: usize,
    users: usize,
    antennas: usize,
    seed: u64,
    geometry: &Geometry,
) -> Result<Scenario, SimError> {
    check_counts(cells, users, antennas)?;
    geometry.validate()?;
    let r = geometry.cell_radius_m;
    let (cols, _) = layout(cells);
    let bs: Vec<f64> = (0..cells)
        .flat_map(|j| {
            let (c, row) = (j % cols, j / cols);
            [(2 * c + 1) as f64 * r, (2 * row + 1) as f64 * r]
        })
        .collect();

    let mut ue = Vec::with_capacity(cells * users * 2);
    for j in 0..cells {
        let (bx, by) = (bs[2 * j], bs[2 * j + 1]);
        for k in 0..users {
            let mut rng = SplitMix64::stream(seed, TAG_UE_POSITION, (j * users + k) as u64);
            let mut placed = None;
            for _ in 0..DROP_ATTEMPTS {
                let dx = (2.0 * rng.next_f64() - 1.0) * r;
                let dy = (2.0 * rng.next_f64() - 1.0) * r;
                if dx.hypot(dy) >= geometry.min_distance_m {
                    placed = Some((bx + dx, by + dy));
                    break;
                }
            }
            let (x, y) = placed.ok_or_else(|| {
                SimError::InvalidGeometry("could not drop UE outside the exclusion radius".into())
            })?;
            ue.push(x);
            ue.push(y);
        }
    }
    Scenario::from_positions(
        cells,
        users,
        antennas,
        seed,
        geometry,
        Matrix::from_vec(cells, 2, bs).expect("bs shape"),
        Matrix::from_vec(cells * users, 2, ue).expect("ue shape"),
    )
}

fn check_counts(cells: usize, users: usize, antennas: usize) -> Result<(), SimError> {
    if cells == 0 || users == 0 || antennas == 0 {
        return Err(SimError::InvalidGeometry(
            "cells, users and antennas must all be at least 1".into(),
        ));
    }
    Ok(())
}

impl Scenario {
    /// Builds a scenario from explicit positions; gains (and shadowing draws)
    /// follow the same rules as [`generate_scenario`].
    pub fn from_positions(
        cells: usize,
        users: usize,
        antennas: usize,
        seed: u64,
        geometry: &Geometry,
        bs_positions: Matrix,
        ue_positions: Matrix,
    ) -> Result<Scenario, SimError> {
        check_counts(cells, users, antennas)?;
        geometry.validate()?;
        let n = cells * users;
        if bs_positions.shape() != (cells, 2) || ue_positions.shape() != (n, 2) {
            return Err(SimError::InvalidGeometry("position matrices have the wrong shape".into()));
        }
        let (cols, rows) = layout(cells);
        let width = cols as f64 * 2.0 * geometry.cell_radius_m;
        let height = rows as f64 * 2.0 * geometry.cell_radius_m;
        let mut gain = Matrix::zeros(cells, n);
        for l in 0..cells {
            let b = (bs_positions.get(l, 0), bs_positions.get(l, 1));
            for u in 0..n {
                let p = (ue_positions.get(u, 0), ue_positions.get(u, 1));
                let d = wrapped_distance(b, p, width, height);
                if u / users == l && d < geometry.min_distance_m * (1.0 - 1e-12) {
                    return Err(SimError::InvalidGeometry(format!(
                        "UE {u} is {d} m from its serving BS (minimum {})",
                        geometry.min_distance_m
                    )));
                }
                let d = d.max(1.0);
                let shadow = if geometry.shadowing_std_db > 0.0 {
                    let mut rng = SplitMix64::stream(seed, TAG_SHADOWING, (l * n + u) as u64);
                    geometry.shadowing_std_db * rng.next_gaussian()
                } else {
                    0.0
                };
                gain.set(l, u, geometry.linear_gain(d, shadow));
            }
        }
        Ok(Scenario {
            cells,
            users,
            antennas,
            seed,
            geometry: geometry.clone(),
            bs_positions,
            ue_positions,
            large_scale_gain: gain,
        })
    }

    /// `β_{j→(j,k)}` for every UE, row-major.
    pub fn own_gains(&self) -> Vec<f64> {
        (0..self.cells * self.users)
            .map(|u| self.large_scale_gain.get(u / self.users, u))
            .collect()
    }

    pub fn serving_distance(&self, u: usize) -> f64 {
        let (cols, rows) = layout(self.cells);
        let width = cols as f64 * 2.0 * self.geometry.cell_radius_m;
        let height = rows as f64 * 2.0 * self.geometry.cell_radius_m;
        let j = u / self.users;
        wrapped_distance(
            (self.bs_positions.get(j, 0), self.bs_positions.get(j, 1)),
            (self.ue_positions.get(u, 0), self.ue_positions.get(u, 1)),
            width,
            height,
        )
    }
}

/// `a_jk = M·β_{j→(j,k)}`, cross gains copied, `σ² = 1`.
pub fn scenario_to_power_problem(s: &Scenario, p_max: f64) -> SolverResult<PowerProblem> {
    let own = s.own_gains();
    let signal: Vec<f64> = own.iter().map(|b| s.antennas as f64 * b).collect();
    PowerProblem::new(
        Matrix::from_vec(s.cells, s.users, signal).expect("shape"),
        s.large_scale_gain.clone(),
        1.0,
        p_max,
    )
}

/// `c_k = β_{j→(j,k)}·per_ue_power/N0` for the UEs of `cell`. The result is
/// not validated here; bad powers surface from the solver.
pub fn scenario_to_bandwidth_problem(
    s: &Scenario,
    cell: usize,
    total_bw: f64,
    per_ue_power: f64,
    n0: f64,
) -> Result<BandwidthProblem, SimError> {
    if cell >= s.cells {
        return Err(SimError::IndexOutOfRange { index: cell, len: s.cells });
    }
    let effective_snr = (0..s.users)
        .map(|k| s.large_scale_gain.get(cell, cell * s.users + k) * per_ue_power / n0)
        .collect();
    Ok(BandwidthProblem { total_bw, effective_snr })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::{solve_bandwidth_pf, SolverError, PF_DEFAULT_TOL};

    #[test]
    fn splitmix_reference_values() {
        // published SplitMix64 sequence for state 0
        let mut r = SplitMix64::new(0);
        assert_eq!(r.next_u64(), 0xe220_a839_7b1d_cdaf);
        assert_eq!(r.next_u64(), 0x6e78_9e6a_a1b9_65f4);
        assert_eq!(r.next_u64(), 0x06c4_5d18_8009_454f);
    }

    #[test]
    fn deterministic() {
        let g = Geometry::default();
        let a = generate_scenario(4, 5, 96, 7, &g).unwrap();
        let b = generate_scenario(4, 5, 96, 7, &g).unwrap();
        assert_eq!(
            crate::canonical::to_vec(&a).unwrap(),
            crate::canonical::to_vec(&b).unwrap()
        );
        let c = generate_scenario(4, 5, 96, 8, &g).unwrap();
        assert_ne!(a.large_scale_gain, c.large_scale_gain);
    }

    #[test]
    fn pinned_ue_matches_closed_form() {
        let g = Geometry::default().without_shadowing();
        let s = Scenario::from_positions(
            1,
            1,
            96,
            0,
            &g,
            Matrix::from_vec(1, 2, vec![250.0, 250.0]).unwrap(),
            Matrix::from_vec(1, 2, vec![285.0, 250.0]).unwrap(),
        )
        .unwrap();
        let expected = 10f64.powf((-35.3 - 37.6 * 35f64.log10() + 94.0) / 10.0);
        let got = s.large_scale_gain.get(0, 0);
        assert!(((got - expected) / expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn shapes_and_positivity() {
        let s = generate_scenario(4, 5, 96, 0, &Geometry::default()).unwrap();
        assert_eq!(s.large_scale_gain.shape(), (4, 20));
        assert_eq!(s.ue_positions.shape(), (20, 2));
        assert!(s.large_scale_gain.data().iter().all(|&b| b > 0.0));
        for u in 0..20 {
            assert!(s.serving_distance(u) >= 35.0);
        }
    }

    #[test]
    fn non_square_falls_back_to_line() {
        assert_eq!(layout(3), (3, 1));
        assert_eq!(layout(16), (4, 4));
        assert_eq!(layout(1), (1, 1));
        let s = generate_scenario(3, 2, 8, 1, &Geometry::default()).unwrap();
        assert_eq!(s.bs_positions.get(2, 0), 1250.0);
        assert_eq!(s.bs_positions.get(2, 1), 250.0);
    }

    #[test]
    fn invalid_inputs() {
        let g = Geometry::default();
        assert!(generate_scenario(0, 1, 1, 0, &g).is_err());
        let bad = Geometry { min_distance_m: 300.0, ..g };
        assert!(matches!(generate_scenario(1, 1, 1, 0, &bad), Err(SimError::InvalidGeometry(_))));
    }

    #[test]
    fn gain_decreases_with_distance() {
        let g = Geometry::default().without_shadowing();
        let s = generate_scenario(1, 1000, 1, 3, &g).unwrap();
        let mut pairs: Vec<(f64, f64)> =
            (0..1000).map(|u| (s.serving_distance(u), s.large_scale_gain.get(0, u))).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in pairs.windows(2) {
            if w[1].0 > w[0].0 {
                assert!(w[1].1 < w[0].1);
            }
        }
    }

    #[test]
    fn power_problem_mapping() {
        let s = generate_scenario(4, 5, 96, 2, &Geometry::default()).unwrap();
        let p = scenario_to_power_problem(&s, 100.0).unwrap();
        for u in 0..20 {
            let own = s.large_scale_gain.get(u / 5, u);
            assert_eq!(p.signal_gain.data()[u], 96.0 * own);
        }
        let s1 = generate_scenario(1, 3, 1, 2, &Geometry::default()).unwrap();
        let p1 = scenario_to_power_problem(&s1, 1.0).unwrap();
        assert_eq!(p1.signal_gain.data(), s1.own_gains().as_slice());
        assert_eq!(p1.noise, 1.0);
    }

    #[test]
    fn bandwidth_problem_mapping() {
        let s = generate_scenario(1, 20, 96, 0, &Geometry::default()).unwrap();
        let b = scenario_to_bandwidth_problem(&s, 0, 100.0, 100.0, 1.0).unwrap();
        assert_eq!(b.users(), 20);
        assert_eq!(b.total_bw, 100.0);
        for (k, c) in b.effective_snr.iter().enumerate() {
            assert_eq!(*c, s.large_scale_gain.get(0, k) * 100.0);
        }
        assert!(matches!(
            scenario_to_bandwidth_problem(&s, 1, 100.0, 1.0, 1.0),
            Err(SimError::IndexOutOfRange { .. })
        ));
        let zero = scenario_to_bandwidth_problem(&s, 0, 100.0, 0.0, 1.0).unwrap();
        assert!(matches!(
            solve_bandwidth_pf(&zero, PF_DEFAULT_TOL),
            Err(SolverError::InvalidProblem(_))
        ));
    }
}
