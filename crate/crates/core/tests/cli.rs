//! The `netorch` binary end to end: exit codes, chat sessions, machine
//! output and configuration precedence.

mod common;

use common::*;
use netorch::simenv::{generate_scenario, Geometry};
use serde_json::Value;
use std::io::Write;
use std::path::Path;
use std::process::{Command, Stdio};

struct Out {
    code: i32,
    stdout: String,
    stderr: String,
}

/// Runs the binary in `dir` with no inherited NETORCH_* settings.
fn netorch(dir: &Path, args: &[&str], stdin: &str, env: &[(&str, &str)]) -> Out {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_netorch"));
    cmd.args(args).current_dir(dir).stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::piped());
    for (k, _) in std::env::vars() {
        if k.starts_with("NETORCH_") {
            cmd.env_remove(k);
        }
    }
    cmd.envs(env.iter().copied());
    let mut child = cmd.spawn().unwrap();
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    Out {
        code: out.status.code().unwrap(),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn write_scenario(dir: &Path) {
    let s = generate_scenario(1, 20, 96, E2E_SEED, &Geometry::default()).unwrap();
    std::fs::write(dir.join("scenario.json"), serde_json::to_string(&s).unwrap()).unwrap();
}

/// `(ue, bandwidth, rate)` rows of the first bandwidth table in `text`.
fn bandwidth_rows(text: &str) -> Vec<(usize, f64, f64)> {
    text.lines()
        .skip_while(|l| !l.trim_start().starts_with("ue"))
        .skip(1)
        .map_while(|l| {
            let f: Vec<&str> = l.split_whitespace().collect();
            match f[..] {
                [ue, b, r] => Some((ue.parse().ok()?, b.parse().ok()?, r.parse().ok()?)),
                _ => None,
            }
        })
        .collect()
}

#[test]
fn chat_session_allocates_and_survives_unknown_intent() {
    let dir = tempfile::tempdir().unwrap();
    write_scenario(dir.path());
    let input = format!("{E2E_QUERY} @scenario.json\nsing me a song\n{E2E_QUERY} @scenario.json\nquit\n");
    let out = netorch(dir.path(), &["chat"], &input, &[]);
    assert_eq!(out.code, 0, "{}", out.stderr);

    let rows = bandwidth_rows(&out.stdout);
    assert_eq!(rows.len(), 20);
    assert_eq!(rows.iter().map(|r| r.0).collect::<Vec<_>>(), (0..20).collect::<Vec<_>>());
    let total: f64 = rows.iter().map(|r| r.1).sum();
    assert!((total - 100.0).abs() < 1e-4, "{total}");
    assert!(out.stdout.contains("sum      100.000000"));
    assert!(out.stdout.contains("error: UnrecognizedIntent"));
    // the repeated query finds the first as a precedent
    assert!(out.stdout.contains("precedent #0 (similarity 1.000)"));
    assert!(out.stdout.contains("(stored as record 1)"));
    assert!(dir.path().join("netorch-memory.jsonl").exists());
}

#[test]
fn chat_quits_cleanly_on_eof_and_quit() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(netorch(dir.path(), &["chat"], "", &[]).code, 0);
    let out = netorch(dir.path(), &["chat"], "exit\n", &[]);
    assert_eq!(out.code, 0);
    assert!(out.stdout.starts_with("netorch chat (mock backend, 6 models, 0 memory records)"));
}

#[test]
fn chat_feedback_is_persisted() {
    let dir = tempfile::tempdir().unwrap();
    let out = netorch(dir.path(), &["chat"], "allocate bandwidth among 4 users\n:feedback 1 good split\nquit\n", &[]);
    assert!(out.stdout.contains("feedback recorded for record 0"), "{}", out.stdout);
    let shown = netorch(dir.path(), &["memory", "show"], "", &[]);
    assert_eq!(shown.code, 0);
    assert!(shown.stdout.contains("#0 [+1] allocate bandwidth among 4 users"), "{}", shown.stdout);
}

fn run_json(dir: &Path, args: &[&str]) -> Value {
    let out = netorch(dir, args, "", &[]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    serde_json::from_str(&out.stdout).unwrap()
}

fn numbers(v: &Value) -> Vec<f64> {
    v["data"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

#[test]
fn run_maxmin_equalizes_and_uniform_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["run", "--cells", "4", "--users", "5", "--seed", "3"];
    let mm = run_json(dir.path(), &[&base[..], &["--objective", "maxmin"]].concat());
    let sinr = numbers(&mm["sinrs"]);
    assert_eq!(sinr.len(), 20);
    let (lo, hi) = sinr.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    assert!((hi - lo) / lo <= 1e-4);
    assert_eq!(mm["objective"], "maxmin");
    assert_eq!(mm["scenario"]["cells"], 4);

    let uni = run_json(dir.path(), &[&base[..], &["--objective", "uniform", "--pmax", "40"]].concat());
    assert!(numbers(&uni["allocation"]).iter().all(|&p| p == 8.0));
    assert!(mm["min"].as_f64().unwrap() >= uni["min"].as_f64().unwrap());
}

#[test]
fn run_output_is_deterministic_apart_from_runtime() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["run", "--cells", "3", "--users", "4", "--objective", "maxprod", "--out", "a.json"];
    let out = netorch(dir.path(), &args, "", &[]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert!(out.stdout.starts_with("maxprod on L=3 K=4 M=96 seed=0: min "));
    let first = std::fs::read_to_string(dir.path().join("a.json")).unwrap();
    netorch(dir.path(), &args, "", &[]);
    let second = std::fs::read_to_string(dir.path().join("a.json")).unwrap();
    let strip = |s: &str| {
        let mut v: Value = serde_json::from_str(s).unwrap();
        v.as_object_mut().unwrap().remove("runtime_ms");
        v
    };
    assert_eq!(strip(&first), strip(&second));
}

#[test]
fn run_accepts_a_scenario_file_and_pf_bandwidth() {
    let dir = tempfile::tempdir().unwrap();
    write_scenario(dir.path());
    let v = run_json(dir.path(), &["run", "--scenario", "scenario.json", "--objective", "pf_bandwidth"]);
    let alloc: Vec<f64> = v["allocation"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(alloc.len(), 20);
    assert!((alloc.iter().sum::<f64>() - 100.0).abs() <= 100.0 * 1e-9);
}

#[test]
fn bench_writes_deterministic_csv() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["bench", "--cells-list", "1,4", "--users", "3", "--seeds", "2", "--out", "b.csv"];
    let out = netorch(dir.path(), &args, "", &[]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert!(out.stdout.contains("12 rows, 0 failed"));
    let read = || {
        let mut r = csv::Reader::from_path(dir.path().join("b.csv")).unwrap();
        assert_eq!(r.headers().unwrap().iter().collect::<Vec<_>>().join(","), "L,K,seed,objective,min_sinr,geomean_sinr,jain,runtime_ms");
        r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect::<Vec<_>>()).collect::<Vec<_>>()
    };
    let first = read();
    netorch(dir.path(), &args, "", &[]);
    let second = read();
    assert_eq!(first.len(), 12);
    let drop_time = |rows: &[Vec<String>]| rows.iter().map(|r| r[..7].to_vec()).collect::<Vec<_>>();
    assert_eq!(drop_time(&first), drop_time(&second));
    for group in first.chunks(3) {
        let min_of = |name: &str| group.iter().find(|r| r[3] == name).unwrap()[4].parse::<f64>().unwrap();
        assert!(min_of("maxmin") >= min_of("uniform"));
        assert!(min_of("maxmin") >= min_of("maxprod") * (1.0 - 1e-8));
    }
}

#[test]
fn registry_list_prints_every_model() {
    let dir = tempfile::tempdir().unwrap();
    let out = netorch(dir.path(), &["registry", "list"], "", &[]);
    assert_eq!(out.code, 0);
    assert_eq!(out.stdout.lines().count(), 7);
    assert!(out.stdout.lines().next().unwrap().starts_with("model_id"));
}

#[test]
fn memory_show_handles_empty_and_tail() {
    let dir = tempfile::tempdir().unwrap();
    let out = netorch(dir.path(), &["memory", "show"], "", &[]);
    assert_eq!((out.code, out.stdout.trim()), (0, "0 records"));

    let input: String = (0..10).map(|i| format!("allocate bandwidth among {} users\n", i + 2)).collect();
    assert_eq!(netorch(dir.path(), &["chat"], &input, &[]).code, 0);
    let out = netorch(dir.path(), &["memory", "show", "--last", "3"], "", &[]);
    let lines: Vec<&str> = out.stdout.lines().collect();
    assert_eq!(lines[0], "10 records, showing the last 3");
    let ids: Vec<&str> = lines[1..].iter().map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(ids, ["#7", "#8", "#9"]);
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(netorch(dir.path(), &["frobnicate"], "", &[]).code, 2);
    assert_eq!(netorch(dir.path(), &["run", "--cells", "0"], "", &[]).code, 2);
    assert_eq!(netorch(dir.path(), &["run", "--scenario", "missing.json"], "", &[]).code, 2);
    assert_eq!(netorch(dir.path(), &["chat", "--registry", "missing.json"], "", &[]).code, 2);
    assert_eq!(netorch(dir.path(), &["memory", "feedback", "--id", "4", "--rating", "1"], "", &[]).code, 1);
    assert_eq!(netorch(dir.path(), &["run", "--cells", "3", "--objective", "maxmin"], "", &[]).code, 0);
    assert_eq!(netorch(dir.path(), &["--help"], "", &[]).code, 0);
    let bad = netorch(dir.path(), &["run", "--objective", "equal"], "", &[("NETORCH_SEED", "abc")]);
    assert_eq!(bad.code, 2);
    assert!(bad.stderr.contains("NETORCH_SEED"), "{}", bad.stderr);
}

#[test]
fn flags_beat_env_which_beats_config_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.json"), r#"{"seed": 5, "pmax": 10}"#).unwrap();
    let seed_of = |args: &[&str], env: &[(&str, &str)]| {
        let out = netorch(dir.path(), args, "", env);
        assert_eq!(out.code, 0, "{}", out.stderr);
        let v: Value = serde_json::from_str(&out.stdout).unwrap();
        (v["scenario"]["seed"].as_u64().unwrap(), numbers(&v["allocation"])[0])
    };
    let base = ["--config", "cfg.json", "run", "--objective", "uniform", "--users", "2"];
    assert_eq!(seed_of(&base, &[]), (5, 5.0));
    assert_eq!(seed_of(&base, &[("NETORCH_SEED", "6"), ("NETORCH_PMAX", "4")]), (6, 2.0));
    let flagged = [&base[..], &["--seed", "7", "--pmax", "2"]].concat();
    assert_eq!(seed_of(&flagged, &[("NETORCH_SEED", "6"), ("NETORCH_PMAX", "4")]), (7, 1.0));

    std::fs::write(dir.path().join("bad.json"), r#"{"seeed": 5}"#).unwrap();
    assert_eq!(netorch(dir.path(), &["--config", "bad.json", "run", "--objective", "equal"], "", &[]).code, 2);
}

#[test]
fn llm_backend_runs_from_a_replay_file() {
    use netorch::executor::ToolCall;
    use netorch::llmgw::*;
    use netorch::registry::Registry;

    let dir = tempfile::tempdir().unwrap();
    let reg = Registry::builtin();
    let query = "split bandwidth fairly among 6 users";
    let (messages, tools) = planning_request(&reg, query);
    let body = build_request_body(&GatewayConfig::default(), &messages, &tools);
    let call = ToolCall {
        call_id: "c0".into(),
        tool: "pf_bandwidth_v1".into(),
        arguments: [("num_users".to_string(), serde_json::json!(6.0))].into_iter().collect(),
    };
    let mut replay = ReplayTransport::new();
    replay.insert(&body, scripted_tool_response(&[call]));
    std::fs::write(dir.path().join("replay.jsonl"), replay.to_jsonl()).unwrap();

    let out = netorch(
        dir.path(),
        &["chat", "--backend", "llm", "--replay", "replay.jsonl"],
        &format!("{query}\nsomething unscripted\nquit\n"),
        &[],
    );
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert!(out.stdout.contains("-> pf_bandwidth_v1: ok"), "{}", out.stdout);
    assert_eq!(bandwidth_rows(&out.stdout).len(), 6);
    assert!(out.stdout.contains("no scripted response"));
}
