//! Property tests for the invariants each module promises.

mod common;

use common::*;
use netorch::canonical::{self, Matrix};
use netorch::executor::*;
use netorch::memory::{embed_text, Archive, NewRecord, Origin};
use netorch::planner::{plan_query_mock, validate_plan, GrammarConfig, PlanError};
use netorch::registry::{Objective, Registry, TaskType};
use netorch::selector::{cosine_similarity, rank_models};
use netorch::simenv::SplitMix64;
use netorch::solvers::*;
use proptest::prelude::*;
use serde_json::Value;
use std::collections::BTreeMap;

/// `cases` unless PROPTEST_CASES overrides it.
fn config(cases: u32) -> ProptestConfig {
    let cases = std::env::var("PROPTEST_CASES").ok().and_then(|v| v.parse().ok()).unwrap_or(cases);
    ProptestConfig { cases, ..ProptestConfig::default() }
}

/// Canonical bytes are what a sorted-key compact serializer would emit.
fn is_canonical(bytes: &[u8]) -> bool {
    let v: Value = serde_json::from_slice(bytes).unwrap();
    serde_json::to_vec(&v).unwrap() == bytes
}

proptest! {
    #![proptest_config(config(1000))]

    #[test]
    fn envelope_round_trip(seed in any::<u64>()) {
        let call = random_tool_call(&mut SplitMix64::new(seed));
        let bytes = encode_tool_call(&call);
        let back = decode_tool_call(&bytes).unwrap();
        prop_assert_eq!(&back, &call);
        prop_assert_eq!(encode_tool_call(&back), bytes.clone());
        prop_assert!(is_canonical(&bytes));

        let result = ToolResult::ok(&call.call_id, call.arguments.clone());
        let bytes = encode_tool_result(&result);
        prop_assert_eq!(decode_tool_result(&bytes).unwrap(), result);
    }
}

proptest! {
    #![proptest_config(config(200))]

    #[test]
    fn ranking_ignores_insertion_order(seed in any::<u64>(), n in 1usize..30) {
        let mut rng = SplitMix64::new(seed);
        let mut descriptors = random_descriptors(&mut rng, n);
        let query = random_text(&mut rng, 6);
        let reg = registry_from(&descriptors);
        shuffle(&mut rng, &mut descriptors);
        let shuffled = registry_from(&descriptors);
        for t in TaskType::ALL {
            for o in Objective::ALL {
                let a = rank_models(&reg, t, o, &query, n);
                let b = rank_models(&shuffled, t, o, &query, n);
                prop_assert_eq!(format!("{a:?}"), format!("{b:?}"));
            }
        }
    }

    #[test]
    fn ranking_is_filtered_ordered_and_prefix_closed(seed in any::<u64>(), n in 1usize..30) {
        let mut rng = SplitMix64::new(seed);
        let reg = registry_from(&random_descriptors(&mut rng, n));
        let query = random_text(&mut rng, 6);
        for t in TaskType::ALL {
            let Ok(full) = rank_models(&reg, t, Objective::None, &query, n + 1) else {
                prop_assert!(reg.list_models(Some(t)).is_empty());
                continue;
            };
            for (i, c) in full.iter().enumerate() {
                prop_assert_eq!(c.rank, i + 1);
                prop_assert_eq!(reg.get(&c.model_id).unwrap().task_type, t);
            }
            prop_assert!(full.windows(2).all(|w| w[0].score >= w[1].score));
            for top in 1..=full.len() {
                let part = rank_models(&reg, t, Objective::None, &query, top).unwrap();
                prop_assert_eq!(&part[..], &full[..top]);
            }
        }
    }

    #[test]
    fn registry_save_load_round_trip(seed in any::<u64>(), n in 0usize..12) {
        let reg = registry_from(&random_descriptors(&mut SplitMix64::new(seed), n));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("registry.json");
        reg.save(&path).unwrap();
        let back = Registry::load(&path).unwrap();
        prop_assert_eq!(back.to_json_string(), reg.to_json_string());
        for m in reg.list_models(None) {
            prop_assert_eq!(back.get(&m.model_id), Some(m));
        }
        for t in TaskType::ALL {
            for m in reg.list_models(Some(t)) {
                prop_assert!(reg.list_models(None).contains(&m));
            }
        }
    }
}

const QUERY_WORDS: &[&str] = &[
    "allocate", "bandwidth", "power", "for", "proportional", "fairness", "max-min", "sinr",
    "minimum", "equal", "uniform", "water-filling", "and", "then", "among", "users", "cells", "20",
    "4", "units", "with", "antennas", "64", "estimate", "channel", "predict", "beam", "hello",
];

proptest! {
    #![proptest_config(config(200))]

    #[test]
    fn mock_plans_validate_or_are_unrecognized(words in prop::collection::vec(0usize..QUERY_WORDS.len(), 1..12)) {
        let query = words.iter().map(|&i| QUERY_WORDS[i]).collect::<Vec<_>>().join(" ");
        let reg = Registry::builtin();
        match plan_query_mock(&query, None, &GrammarConfig::default()) {
            Ok(plan) => {
                prop_assert!(validate_plan(&plan, &reg).is_empty(), "{query}");
                let again = plan_query_mock(&query, None, &GrammarConfig::default()).unwrap();
                prop_assert_eq!(canonical::to_vec(&plan).unwrap(), canonical::to_vec(&again).unwrap());
            }
            Err(PlanError::UnrecognizedIntent(_)) => {}
            Err(e) => prop_assert!(false, "{query}: {e}"),
        }
    }

    #[test]
    fn execution_keeps_plan_order_and_is_pure(words in prop::collection::vec(0usize..14, 1..8)) {
        let query = words.iter().map(|&i| QUERY_WORDS[i]).collect::<Vec<_>>().join(" ");
        let Ok(plan) = plan_query_mock(&query, None, &GrammarConfig::default()) else { return Ok(()) };
        let (reg, tb) = (Registry::builtin(), Toolbox::builtin());
        let ctx = ExecutionContext::new(&reg, &tb);
        let a = execute_plan(&plan, &ctx).unwrap();
        let b = execute_plan(&plan, &ctx).unwrap();
        prop_assert_eq!(a.to_masked_json(), b.to_masked_json());
        prop_assert_eq!(a.calls.len(), plan.tasks.len());
        for (i, rec) in a.calls.iter().enumerate() {
            prop_assert_eq!(&rec.call.call_id, &format!("call_{i}"));
            for &dep in &plan.tasks[i].depends_on {
                prop_assert!(dep < i);
            }
            let schema = &reg.get(&rec.call.tool).unwrap();
            for key in rec.call.arguments.keys() {
                prop_assert!(schema.slot(key).is_some());
            }
            if rec.result.is_ok() {
                let keys: Vec<&String> = rec.result.output.keys().collect();
                let mut expected: Vec<&String> = schema.output_schema.iter().collect();
                expected.sort();
                prop_assert_eq!(keys, expected);
            } else {
                prop_assert!(!rec.result.error_message.as_deref().unwrap_or("").is_empty());
            }
        }
    }
}

fn archive_with(rng: &mut SplitMix64, n: usize) -> Archive {
    let mut archive = Archive::in_memory();
    for _ in 0..n {
        archive
            .store_record(NewRecord { query_text: random_text(rng, 5), ..NewRecord::default() })
            .unwrap();
    }
    archive
}

proptest! {
    #![proptest_config(config(100))]

    #[test]
    fn retrieve_matches_brute_force(seed in any::<u64>(), n in 0usize..40, k in 0usize..45) {
        let mut rng = SplitMix64::new(seed);
        let archive = archive_with(&mut rng, n);
        let query = random_text(&mut rng, 5);
        let q = embed_text(&query);
        let mut brute: Vec<(f64, u64)> = archive
            .records()
            .iter()
            .map(|r| (cosine_similarity(q.as_slice(), embed_text(&r.query_text).as_slice()).unwrap(), r.record_id))
            .collect();
        brute.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)));
        brute.truncate(k);
        let got: Vec<(f64, u64)> = archive.retrieve(&query, k).iter().map(|h| (h.score, h.record.record_id)).collect();
        prop_assert_eq!(got, brute);
        prop_assert!(archive.retrieve(&query, k).iter().all(|h| h.origin == Origin::Local));
    }

    #[test]
    fn reload_reconstructs_index(seed in any::<u64>(), n in 0usize..20) {
        let mut rng = SplitMix64::new(seed);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("memory.jsonl");
        let mut archive = Archive::open(&path).unwrap();
        for i in 0..n {
            let mut metrics = BTreeMap::new();
            metrics.insert("objective_value".to_string(), random_number(&mut rng));
            let id = archive
                .store_record(NewRecord { query_text: random_text(&mut rng, 5), metrics, ..NewRecord::default() })
                .unwrap();
            prop_assert_eq!(id, i as u64);
            if rng.next_u64() % 3 == 0 {
                archive.record_feedback(id, (rng.next_u64() % 3) as i64 - 1, &random_text(&mut rng, 3)).unwrap();
            }
        }
        let reloaded = Archive::open(&path).unwrap();
        prop_assert_eq!(reloaded.canonical_index(), archive.canonical_index());
    }

    #[test]
    fn embeddings_are_unit_or_zero(text in "[ a-zA-Z0-9,.!-]{0,60}") {
        let e = embed_text(&text);
        prop_assert!(e.is_zero() || (e.norm() - 1.0).abs() <= 1e-9);
        prop_assert_eq!(&e, &embed_text(&text));
    }
}

proptest! {
    #![proptest_config(config(300))]

    #[test]
    fn pf_allocation_is_feasible_stationary_and_beats_equal(seed in any::<u64>(), k in 1usize..25) {
        let mut rng = SplitMix64::new(seed);
        let total = log_uniform(&mut rng, -1.0, 3.0);
        let snr: Vec<f64> = (0..k).map(|_| log_uniform(&mut rng, -2.0, 3.0)).collect();
        let p = BandwidthProblem::new(total, snr).unwrap();
        let a = solve_bandwidth_pf(&p, PF_DEFAULT_TOL).unwrap();
        prop_assert!((a.total() - total).abs() <= total * 1e-9);
        prop_assert!(a.values.iter().all(|&b| b > 0.0));
        prop_assert!(a.diagnostics["kkt_residual"] <= PF_DEFAULT_TOL);
        let eq = solve_bandwidth_equal(&p).unwrap();
        prop_assert!(a.objective_value >= eq.objective_value - 1e-12 * eq.objective_value.abs().max(1.0));
        // bitwise purity
        let again = solve_bandwidth_pf(&p, PF_DEFAULT_TOL).unwrap();
        prop_assert_eq!(format!("{:?}", again), format!("{:?}", a));
    }

    #[test]
    fn marginal_utility_is_positive_decreasing(c in 1e-3f64..1e4, b in 1e-3f64..1e4, step in 1e-6f64..1.0) {
        let m = marginal_utility(c, b);
        prop_assert!(m > 0.0);
        prop_assert!(marginal_utility(c, b * (1.0 + step)) < m);
    }

    #[test]
    fn jain_index_lies_in_range(x in prop::collection::vec(0.0f64..1e6, 1..50)) {
        prop_assume!(x.iter().any(|&v| v > 0.0));
        let j = jain_index(&x).unwrap();
        let n = x.len() as f64;
        prop_assert!(j >= 1.0 / n - 1e-12 && j <= 1.0 + 1e-12);
    }
}

proptest! {
    #![proptest_config(config(60))]

    #[test]
    fn sinr_rises_with_own_power_and_falls_with_others(seed in any::<u64>(), cells in 1usize..4, users in 1usize..4) {
        let mut rng = SplitMix64::new(seed);
        let p = random_power_problem(&mut rng, cells, users);
        let n = cells * users;
        let powers: Vec<f64> = (0..n).map(|_| p.p_max / users as f64 * rng.next_f64()).collect();
        let base = sinr_all(&p, &Matrix::from_vec(cells, users, powers.clone()).unwrap()).unwrap();
        let target = (rng.next_u64() % n as u64) as usize;
        let mut raised = powers.clone();
        raised[target] += 0.1 * p.p_max + 1e-3;
        let after = sinr_all(&p, &Matrix::from_vec(cells, users, raised).unwrap()).unwrap();
        for u in 0..n {
            if u == target {
                prop_assert!(after.data()[u] > base.data()[u]);
            } else {
                prop_assert!(after.data()[u] <= base.data()[u]);
            }
        }
    }

    #[test]
    fn min_power_grows_with_target(seed in any::<u64>(), cells in 1usize..4, users in 1usize..4) {
        let mut rng = SplitMix64::new(seed);
        let p = random_power_problem(&mut rng, cells, users);
        let best = solve_power_maxmin(&p, MAXMIN_DEFAULT_TOL).unwrap().objective_value;
        let mut targets: Vec<f64> = (0..5).map(|_| best * rng.next_f64()).collect();
        targets.sort_by(f64::total_cmp);
        let powers: Vec<Vec<f64>> =
            targets.iter().map(|&t| min_power_for_target(&p, t).unwrap().expect("below the optimum")).collect();
        for w in powers.windows(2) {
            prop_assert!(w[0].iter().zip(&w[1]).all(|(lo, hi)| lo <= hi));
        }
        prop_assert!(min_power_for_target(&p, best * 1.01).unwrap().is_none());
    }

    #[test]
    fn power_solvers_are_pure_and_ordered(seed in any::<u64>(), cells in 1usize..4, users in 1usize..4) {
        let p = random_power_problem(&mut SplitMix64::new(seed), cells, users);
        let mm = solve_power_maxmin(&p, MAXMIN_DEFAULT_TOL).unwrap();
        let mp = solve_power_maxprod(&p, MAXPROD_DEFAULT_TOL).unwrap();
        prop_assert_eq!(format!("{:?}", solve_power_maxmin(&p, MAXMIN_DEFAULT_TOL).unwrap()), format!("{mm:?}"));
        prop_assert_eq!(format!("{:?}", solve_power_maxprod(&p, MAXPROD_DEFAULT_TOL).unwrap()), format!("{mp:?}"));
        prop_assert!(mm.diagnostics["sinr_spread"] <= 1e-4);
        prop_assert!(projected_gradient_norm(&p, &mp.values) <= MAXPROD_DEFAULT_TOL);
        for chunk in mm.values.chunks(users).chain(mp.values.chunks(users)) {
            prop_assert!(chunk.iter().sum::<f64>() <= p.p_max * (1.0 + 1e-9));
        }
        let sinr = |v: &[f64]| sinr_all(&p, &Matrix::from_vec(cells, users, v.to_vec()).unwrap()).unwrap();
        let (s_mm, s_mp) = (sinr(&mm.values), sinr(&mp.values));
        prop_assert!(min_value(s_mm.data()) >= min_value(s_mp.data()) - 1e-8 * min_value(s_mm.data()));
        prop_assert!(geometric_mean(s_mp.data()) >= geometric_mean(s_mm.data()) * (1.0 - 1e-8));
    }
}

#[test]
fn canonical_json_sorts_keys_at_every_depth() {
    let v: Value = serde_json::from_str(r#"{"b":{"z":1,"a":[{"y":2,"x":3}]},"a":0,"B":1}"#).unwrap();
    let text = canonical::to_string(&v).unwrap();
    assert_eq!(text, r#"{"B":1,"a":0,"b":{"a":[{"x":3,"y":2}],"z":1}}"#);
    assert!(is_canonical(text.as_bytes()));
}
