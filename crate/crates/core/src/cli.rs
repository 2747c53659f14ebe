//! The `netorch` command line: an interactive query session, a scenario
//! runner, a scaling benchmark, and registry/memory inspection.
//!
//! Exit codes: 0 success, 1 solver or domain failure, 2 usage or
//! configuration failure. Settings resolve as flags, then `NETORCH_*`
//! environment variables, then the canonical-JSON file given by `--config`.

use crate::canonical::{self, Matrix};
use crate::executor::{compose_response, execute_plan, ExecutionContext, Toolbox};
use crate::llmgw::{self, ChatClient, GatewayConfig, ReplayTransport};
use crate::memory::{Archive, NewRecord, Origin};
use crate::planner::{self, GrammarConfig, Payload, Plan};
use crate::registry::Registry;
use crate::simenv::{self, Geometry, Scenario};
use crate::solvers::{self, metrics, Allocation, PowerProblem};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub const DEFAULT_MEMORY_PATH: &str = "netorch-memory.jsonl";

#[derive(Debug, Parser)]
#[command(name = "netorch", version, about = "Natural-language orchestration of wireless resource allocation")]
pub struct Cli {
    /// Canonical-JSON settings file (lowest precedence).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Interactive query session.
    Chat(ChatArgs),
    /// Solve one scenario with one objective.
    Run(RunArgs),
    /// Power-control scaling sweep written as CSV.
    Bench(BenchArgs),
    #[command(subcommand)]
    Registry(RegistryCommand),
    #[command(subcommand)]
    Memory(MemoryCommand),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Mock,
    Llm,
}

#[derive(Debug, clap::Args)]
pub struct ChatArgs {
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    #[arg(long)]
    pub registry: Option<PathBuf>,
    #[arg(long)]
    pub memory: Option<PathBuf>,
    /// Read-only archive merged into retrieval.
    #[arg(long)]
    pub shared_memory: Option<PathBuf>,
    /// Answer LLM requests from this replay file instead of the network.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    /// Seed for scenarios generated when a query carries no payload.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub antennas: Option<usize>,
    /// Precedents shown from memory per query.
    #[arg(long, default_value_t = 3)]
    pub precedents: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RunObjective {
    Maxmin,
    Maxprod,
    Uniform,
    Waterfill,
    #[value(name = "pf_bandwidth", alias = "pf-bandwidth")]
    PfBandwidth,
    Equal,
}

impl RunObjective {
    fn name(self) -> &'static str {
        match self {
            RunObjective::Maxmin => "maxmin",
            RunObjective::Maxprod => "maxprod",
            RunObjective::Uniform => "uniform",
            RunObjective::Waterfill => "waterfill",
            RunObjective::PfBandwidth => "pf_bandwidth",
            RunObjective::Equal => "equal",
        }
    }
}

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    /// Scenario JSON; replaces the generation flags.
    #[arg(long, conflicts_with_all = ["cells", "users", "antennas", "seed"])]
    pub scenario: Option<PathBuf>,
    #[arg(long)]
    pub cells: Option<usize>,
    #[arg(long)]
    pub users: Option<usize>,
    #[arg(long)]
    pub antennas: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub objective: RunObjective,
    /// Per-BS budget for power objectives, per-UE power for bandwidth (mW).
    #[arg(long)]
    pub pmax: Option<f64>,
    /// Bandwidth units for bandwidth objectives.
    #[arg(long, default_value_t = 100.0)]
    pub total_bw: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub cells_list: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    pub users: usize,
    #[arg(long)]
    pub antennas: Option<usize>,
    /// Seeds 0..N per cell count.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    #[arg(long)]
    pub pmax: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum RegistryCommand {
    /// Print the model table.
    List {
        #[arg(long)]
        registry: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum MemoryCommand {
    /// Print the most recent records.
    Show {
        #[arg(long, default_value_t = 10)]
        last: usize,
        #[arg(long)]
        memory: Option<PathBuf>,
    },
    /// Rate a stored record (-1, 0 or +1).
    Feedback {
        #[arg(long)]
        id: u64,
        #[arg(long, allow_hyphen_values = true)]
        rating: i64,
        #[arg(long, default_value = "")]
        note: String,
        #[arg(long)]
        memory: Option<PathBuf>,
    },
}

/// Contents of the `--config` file; every field optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub backend: Option<BackendKind>,
    pub registry: Option<PathBuf>,
    pub memory: Option<PathBuf>,
    pub shared_memory: Option<PathBuf>,
    pub replay: Option<PathBuf>,
    pub seed: Option<u64>,
    pub antennas: Option<usize>,
    pub pmax: Option<f64>,
    pub llm: Option<LlmFileConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmFileConfig {
    pub endpoint: Option<String>,
    pub api_key: Option<String>,
    pub model: Option<String>,
    pub timeout_ms: Option<u64>,
    pub max_retries: Option<u32>,
}

/// Process streams and environment, injectable for tests.
pub struct Io<'a> {
    pub stdin: &'a mut dyn BufRead,
    pub stdout: &'a mut dyn Write,
    pub stderr: &'a mut dyn Write,
    pub env: &'a dyn Fn(&str) -> Option<String>,
}

/// A failure carrying its exit code.
struct Fail(i32, String);

fn usage(msg: impl std::fmt::Display) -> Fail {
    Fail(EXIT_USAGE, msg.to_string())
}

fn failure(msg: impl std::fmt::Display) -> Fail {
    Fail(EXIT_FAILURE, msg.to_string())
}

struct Resolver<'a> {
    env: &'a dyn Fn(&str) -> Option<String>,
    file: FileConfig,
}

impl Resolver<'_> {
    fn env_parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, Fail> {
        match (self.env)(key).filter(|v| !v.is_empty()) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| usage(format!("{key}: cannot parse `{v}`"))),
        }
    }

    /// flag > env > file.
    fn pick<T: std::str::FromStr>(&self, flag: Option<T>, key: &str, file: Option<T>) -> Result<Option<T>, Fail> {
        if flag.is_some() {
            return Ok(flag);
        }
        Ok(self.env_parsed(key)?.or(file))
    }

    fn path(&self, flag: Option<PathBuf>, key: &str, file: Option<PathBuf>) -> Option<PathBuf> {
        flag.or_else(|| (self.env)(key).filter(|v| !v.is_empty()).map(PathBuf::from)).or(file)
    }

    fn backend(&self, flag: Option<BackendKind>) -> Result<BackendKind, Fail> {
        if let Some(b) = flag {
            return Ok(b);
        }
        match (self.env)("NETORCH_BACKEND").as_deref() {
            Some("mock") => Ok(BackendKind::Mock),
            Some("llm") => Ok(BackendKind::Llm),
            Some(other) if !other.is_empty() => Err(usage(format!("NETORCH_BACKEND: unknown backend `{other}`"))),
            _ => Ok(self.file.backend.unwrap_or(BackendKind::Mock)),
        }
    }

    fn gateway(&self) -> Result<GatewayConfig, Fail> {
        let mut c = GatewayConfig::default();
        if let Some(l) = &self.file.llm {
            if let Some(v) = &l.endpoint {
                c.endpoint = v.clone();
            }
            if let Some(v) = &l.api_key {
                c.api_key = Some(v.clone());
            }
            if let Some(v) = &l.model {
                c.model = v.clone();
            }
            if let Some(v) = l.timeout_ms {
                c.timeout_ms = v;
            }
            if let Some(v) = l.max_retries {
                c.max_retries = v;
            }
        }
        let env = |k: &str| (self.env)(k).filter(|v| !v.is_empty());
        if let Some(v) = env(llmgw::ENV_ENDPOINT) {
            c.endpoint = v;
        }
        if let Some(v) = env(llmgw::ENV_API_KEY) {
            c.api_key = Some(v);
        }
        if let Some(v) = env(llmgw::ENV_MODEL) {
            c.model = v;
        }
        c.validate().map_err(usage)?;
        Ok(c)
    }
}

fn load_file_config(path: Option<&Path>) -> Result<FileConfig, Fail> {
    let Some(path) = path else { return Ok(FileConfig::default()) };
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_registry(path: Option<&Path>) -> Result<Registry, Fail> {
    match path {
        Some(p) => Registry::load(p).map_err(|e| usage(format!("{}: {e}", p.display()))),
        None => Ok(Registry::builtin()),
    }
}

fn write_output(path: Option<&Path>, bytes: &[u8], stdout: &mut dyn Write) -> Result<(), Fail> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| usage(format!("{}: {e}", p.display()))),
        None => stdout.write_all(bytes).map_err(|e| failure(e.to_string())),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, io: &mut Io<'_>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { io.stderr.write_all(text.as_bytes()) } else { io.stdout.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch(cli, io) {
        Ok(code) => code,
        Err(Fail(code, msg)) => {
            let _ = writeln!(io.stderr, "error: {msg}");
            code
        }
    }
}

/// Entry point for the binary: real arguments, streams and environment.
pub fn main_from_env() -> i32 {
    let stdin = std::io::stdin();
    let mut stdin = stdin.lock();
    let mut stdout = std::io::stdout();
    let mut stderr = std::io::stderr();
    let env = |k: &str| std::env::var(k).ok();
    let mut io = Io { stdin: &mut stdin, stdout: &mut stdout, stderr: &mut stderr, env: &env };
    run(std::env::args_os(), &mut io)
}

fn dispatch(cli: Cli, io: &mut Io<'_>) -> Result<i32, Fail> {
    let r = Resolver { env: io.env, file: load_file_config(cli.config.as_deref())? };
    match cli.command {
        Command::Chat(a) => cmd_chat(a, &r, io),
        Command::Run(a) => cmd_run(a, &r, io),
        Command::Bench(a) => cmd_bench(a, &r, io),
        Command::Registry(RegistryCommand::List { registry }) => {
            let path = r.path(registry, "NETORCH_REGISTRY", r.file.registry.clone());
            cmd_registry_list(&load_registry(path.as_deref())?, io.stdout)
        }
        Command::Memory(MemoryCommand::Show { last, memory }) => {
            let path = r.path(memory, "NETORCH_MEMORY", r.file.memory.clone());
            let archive = open_archive(path.as_deref(), None)?;
            cmd_memory_show(&archive, last, io.stdout)
        }
        Command::Memory(MemoryCommand::Feedback { id, rating, note, memory }) => {
            let path = r.path(memory, "NETORCH_MEMORY", r.file.memory.clone());
            let mut archive = open_archive(path.as_deref(), None)?;
            match archive.record_feedback(id, rating, &note) {
                Ok(_) => {
                    let _ = writeln!(io.stdout, "feedback recorded for record {id}");
                    Ok(EXIT_OK)
                }
                Err(e) => Err(failure(e)),
            }
        }
    }
}

fn open_archive(path: Option<&Path>, shared: Option<&Path>) -> Result<Archive, Fail> {
    let path = path.unwrap_or(Path::new(DEFAULT_MEMORY_PATH));
    let mut a = Archive::open(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    if let Some(s) = shared {
        a = a.with_shared(s).map_err(|e| usage(format!("{}: {e}", s.display())))?;
    }
    Ok(a)
}

fn cmd_registry_list(registry: &Registry, out: &mut dyn Write) -> Result<i32, Fail> {
    let _ = writeln!(out, "{:<24} {:<22} {:<22} {:>9}", "model_id", "task_type", "objective", "downloads");
    for d in registry {
        let _ = writeln!(
            out,
            "{:<24} {:<22} {:<22} {:>9}",
            d.model_id,
            d.task_type.as_str(),
            d.objective.as_str(),
            d.download_count
        );
    }
    Ok(EXIT_OK)
}

fn cmd_memory_show(archive: &Archive, last: usize, out: &mut dyn Write) -> Result<i32, Fail> {
    let records = archive.records();
    if records.is_empty() {
        let _ = writeln!(out, "0 records");
        return Ok(EXIT_OK);
    }
    let shown = &records[records.len().saturating_sub(last)..];
    let _ = writeln!(out, "{} records, showing the last {}", records.len(), shown.len());
    for r in shown {
        let rating = match &r.feedback {
            Some(f) => format!("{:+}", f.rating),
            None => "-".into(),
        };
        let _ = writeln!(out, "#{} [{rating}] {}", r.record_id, r.query_text);
    }
    Ok(EXIT_OK)
}

fn build_client(r: &Resolver<'_>, replay: Option<PathBuf>) -> Result<ChatClient, Fail> {
    let config = r.gateway()?;
    match replay {
        Some(p) => {
            let t = ReplayTransport::from_file(&p).map_err(usage)?;
            ChatClient::new(config, Box::new(t)).map_err(usage)
        }
        None => ChatClient::http(config).map_err(usage),
    }
}

/// Splits `@path` attachments off a query line.
fn split_attachments(line: &str) -> (String, Vec<&str>) {
    let mut words = Vec::new();
    let mut files = Vec::new();
    for w in line.split_whitespace() {
        match w.strip_prefix('@') {
            Some(p) if !p.is_empty() => files.push(p),
            _ => words.push(w),
        }
    }
    (words.join(" "), files)
}

fn read_payload(files: &[&str]) -> Result<Option<Payload>, String> {
    match files {
        [] => Ok(None),
        [one] => {
            let text = std::fs::read_to_string(one).map_err(|e| format!("{one}: {e}"))?;
            let v: Value = serde_json::from_str(&text).map_err(|e| format!("{one}: {e}"))?;
            Payload::from_json(v).map(Some).map_err(|e| e.to_string())
        }
        _ => Err("attach at most one @file per query".into()),
    }
}

struct Session<'a> {
    registry: Registry,
    toolbox: Toolbox,
    archive: Archive,
    client: Option<ChatClient>,
    grammar: GrammarConfig,
    precedents: usize,
    last_record: Option<u64>,
    out: &'a mut dyn Write,
}

impl Session<'_> {
    fn plan(&self, query: &str, payload: Option<&Payload>) -> Result<(Plan, BTreeMap<usize, String>), String> {
        match &self.client {
            None => {
                let plan = planner::plan_query_mock(query, payload, &self.grammar).map_err(|e| e.to_string())?;
                Ok((plan, BTreeMap::new()))
            }
            Some(c) => {
                let p = llmgw::plan_with_llm_using(c, query, &self.registry, payload, &self.grammar)
                    .map_err(|e| e.to_string())?;
                Ok((p.plan, p.tool_choices.into_iter().enumerate().collect()))
            }
        }
    }

    fn handle(&mut self, line: &str) -> Result<(), String> {
        if let Some(rest) = line.strip_prefix(":feedback") {
            let mut parts = rest.trim().splitn(2, ' ');
            let rating: i64 = parts.next().unwrap_or("").parse().map_err(|_| "usage: :feedback <-1|0|1> [note]")?;
            let id = self.last_record.ok_or("no record to rate yet")?;
            self.archive.record_feedback(id, rating, parts.next().unwrap_or("").trim()).map_err(|e| e.to_string())?;
            let _ = writeln!(self.out, "feedback recorded for record {id}");
            return Ok(());
        }
        let (query, files) = split_attachments(line);
        let payload = read_payload(&files)?;
        for hit in self.archive.retrieve(&query, self.precedents) {
            if hit.score > 0.0 {
                let origin = if hit.origin == Origin::Shared { " shared" } else { "" };
                let _ = writeln!(
                    self.out,
                    "precedent #{}{origin} (similarity {:.3}): {}",
                    hit.record.record_id, hit.score, hit.record.query_text
                );
            }
        }
        let (plan, overrides) = self.plan(&query, payload.as_ref())?;
        let mut ctx = ExecutionContext::new(&self.registry, &self.toolbox);
        ctx.model_overrides = overrides;
        let trace = execute_plan(&plan, &ctx).map_err(|e| e.to_string())?;
        let doc = compose_response(&trace);
        let _ = write!(self.out, "{}", doc.summary_text);
        let metrics = trace.metrics.iter().filter(|(_, v)| v.is_finite()).map(|(k, v)| (k.clone(), *v)).collect();
        let id = self
            .archive
            .store_record(NewRecord {
                query_text: query.clone(),
                plan: serde_json::to_value(&plan).map_err(|e| e.to_string())?,
                result_summary: doc.summary_text,
                metrics,
            })
            .map_err(|e| e.to_string())?;
        self.last_record = Some(id);
        let _ = writeln!(self.out, "(stored as record {id})");
        Ok(())
    }
}

fn cmd_chat(a: ChatArgs, r: &Resolver<'_>, io: &mut Io<'_>) -> Result<i32, Fail> {
    let backend = r.backend(a.backend)?;
    let registry = load_registry(r.path(a.registry, "NETORCH_REGISTRY", r.file.registry.clone()).as_deref())?;
    let memory = r.path(a.memory, "NETORCH_MEMORY", r.file.memory.clone());
    let shared = r.path(a.shared_memory, "NETORCH_SHARED_MEMORY", r.file.shared_memory.clone());
    let archive = open_archive(memory.as_deref(), shared.as_deref())?;
    let client = match backend {
        BackendKind::Mock => None,
        BackendKind::Llm => Some(build_client(r, r.path(a.replay, "NETORCH_REPLAY", r.file.replay.clone()))?),
    };
    let grammar = GrammarConfig {
        seed: r.pick(a.seed, "NETORCH_SEED", r.file.seed)?.unwrap_or(0),
        antennas: r.pick(a.antennas, "NETORCH_ANTENNAS", r.file.antennas)?.unwrap_or(96),
        ..GrammarConfig::default()
    };
    let mut s = Session {
        registry,
        toolbox: Toolbox::builtin(),
        archive,
        client,
        grammar,
        precedents: a.precedents,
        last_record: None,
        out: io.stdout,
    };
    let _ = writeln!(
        s.out,
        "netorch chat ({} backend, {} models, {} memory records). Type `quit` to leave.",
        if backend == BackendKind::Mock { "mock" } else { "llm" },
        s.registry.len(),
        s.archive.len()
    );
    let mut line = String::new();
    loop {
        let _ = write!(s.out, "> ");
        let _ = s.out.flush();
        line.clear();
        match io.stdin.read_line(&mut line) {
            Ok(0) => break,
            Ok(_) => {}
            Err(e) => return Err(failure(e)),
        }
        let q = line.trim();
        if q.is_empty() {
            continue;
        }
        if q == "quit" || q == "exit" {
            break;
        }
        let _ = writeln!(s.out);
        if let Err(e) = s.handle(q) {
            let _ = writeln!(s.out, "error: {e}");
        }
    }
    let _ = writeln!(s.out);
    Ok(EXIT_OK)
}

fn power_summary(problem: &PowerProblem, alloc: &Allocation) -> Result<(Matrix, Matrix), String> {
    let p = Matrix::from_vec(problem.cells, problem.users, alloc.values.clone()).map_err(|e| e.to_string())?;
    let sinr = solvers::sinr_all(problem, &p).map_err(|e| e.to_string())?;
    Ok((p, sinr))
}

fn solve_power(objective: RunObjective, problem: &PowerProblem) -> solvers::Result<Allocation> {
    match objective {
        RunObjective::Maxmin => solvers::solve_power_maxmin(problem, solvers::MAXMIN_DEFAULT_TOL),
        RunObjective::Maxprod => solvers::solve_power_maxprod(problem, solvers::MAXPROD_DEFAULT_TOL),
        RunObjective::Uniform => solvers::solve_power_uniform(problem),
        _ => {
            let mut p = Vec::with_capacity(problem.total_users());
            for j in 0..problem.cells {
                p.extend(solvers::solve_waterfilling(
                    problem.signal_gain.row(j),
                    problem.noise,
                    problem.p_max,
                    solvers::WATERFILL_DEFAULT_TOL,
                )?);
            }
            Ok(Allocation { values: p, objective_value: f64::NAN, diagnostics: BTreeMap::new() })
        }
    }
}

fn cmd_run(a: RunArgs, r: &Resolver<'_>, io: &mut Io<'_>) -> Result<i32, Fail> {
    let pmax = r.pick(a.pmax, "NETORCH_PMAX", r.file.pmax)?.unwrap_or(crate::executor::DEFAULT_P_MAX);
    let scenario: Scenario = match &a.scenario {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?
        }
        None => {
            let seed = r.pick(a.seed, "NETORCH_SEED", r.file.seed)?.unwrap_or(0);
            let antennas = r.pick(a.antennas, "NETORCH_ANTENNAS", r.file.antennas)?.unwrap_or(96);
            simenv::generate_scenario(a.cells.unwrap_or(1), a.users.unwrap_or(10), antennas, seed, &Geometry::default())
                .map_err(usage)?
        }
    };

    let start = Instant::now();
    let mut result = BTreeMap::new();
    let (values, diagnostics, objective_value) = match a.objective {
        RunObjective::PfBandwidth | RunObjective::Equal => {
            let problem = simenv::scenario_to_bandwidth_problem(&scenario, 0, a.total_bw, pmax, 1.0).map_err(usage)?;
            let alloc = match a.objective {
                RunObjective::PfBandwidth => solvers::solve_bandwidth_pf(&problem, solvers::PF_DEFAULT_TOL),
                _ => solvers::solve_bandwidth_equal(&problem),
            }
            .map_err(failure)?;
            let rates: Vec<f64> =
                problem.effective_snr.iter().zip(&alloc.values).map(|(c, b)| solvers::user_rate(*c, *b)).collect();
            result.insert("allocation", json!(alloc.values));
            result.insert("rates", json!(rates));
            (rates, alloc.diagnostics, alloc.objective_value)
        }
        obj => {
            let problem = simenv::scenario_to_power_problem(&scenario, pmax).map_err(usage)?;
            let alloc = solve_power(obj, &problem).map_err(failure)?;
            let (p, sinr) = power_summary(&problem, &alloc).map_err(failure)?;
            let objective_value = if alloc.objective_value.is_nan() {
                sinr.data().iter().map(|s| (1.0 + s).log2()).sum()
            } else {
                alloc.objective_value
            };
            result.insert("allocation", serde_json::to_value(&p).expect("matrix"));
            result.insert("sinrs", serde_json::to_value(&sinr).expect("matrix"));
            (sinr.into_data(), alloc.diagnostics, objective_value)
        }
    };
    let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
    let min = metrics::min_value(&values);
    let geomean = metrics::geometric_mean(&values);
    let jain = metrics::jain_index(&values).map_err(failure)?;
    result.insert("objective", json!(a.objective.name()));
    result.insert("objective_value", json!(objective_value));
    result.insert("min", json!(min));
    result.insert("geomean", json!(geomean));
    result.insert("jain", json!(jain));
    result.insert("runtime_ms", json!(runtime_ms));
    result.insert("diagnostics", json!(diagnostics));
    result.insert(
        "scenario",
        json!({"cells": scenario.cells, "users": scenario.users, "antennas": scenario.antennas, "seed": scenario.seed}),
    );

    let mut bytes = canonical::to_vec(&result).map_err(failure)?;
    bytes.push(b'\n');
    if a.out.is_some() {
        let _ = writeln!(
            io.stdout,
            "{} on L={} K={} M={} seed={}: min {:.6}, geomean {:.6}, jain {:.6}, {:.3} ms",
            a.objective.name(),
            scenario.cells,
            scenario.users,
            scenario.antennas,
            scenario.seed,
            min,
            geomean,
            jain,
            runtime_ms
        );
    }
    write_output(a.out.as_deref(), &bytes, io.stdout)?;
    Ok(EXIT_OK)
}

pub const BENCH_HEADER: [&str; 8] = ["L", "K", "seed", "objective", "min_sinr", "geomean_sinr", "jain", "runtime_ms"];

fn cmd_bench(a: BenchArgs, r: &Resolver<'_>, io: &mut Io<'_>) -> Result<i32, Fail> {
    if a.cells_list.contains(&0) || a.users == 0 || a.seeds == 0 {
        return Err(usage("cell counts, users and seeds must be positive"));
    }
    let pmax = r.pick(a.pmax, "NETORCH_PMAX", r.file.pmax)?.unwrap_or(crate::executor::DEFAULT_P_MAX);
    let antennas = r.pick(a.antennas, "NETORCH_ANTENNAS", r.file.antennas)?.unwrap_or(96);
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(BENCH_HEADER).map_err(failure)?;
    let mut failures = 0;
    for &cells in &a.cells_list {
        for seed in 0..a.seeds {
            let scenario = simenv::generate_scenario(cells, a.users, antennas, seed, &Geometry::default()).map_err(usage)?;
            let problem = simenv::scenario_to_power_problem(&scenario, pmax).map_err(usage)?;
            for obj in [RunObjective::Maxmin, RunObjective::Maxprod, RunObjective::Uniform] {
                let start = Instant::now();
                let solved = solve_power(obj, &problem).map_err(|e| e.to_string()).and_then(|al| power_summary(&problem, &al));
                let ms = start.elapsed().as_secs_f64() * 1e3;
                let (min, geo, jain) = match &solved {
                    Ok((_, sinr)) => (
                        metrics::min_value(sinr.data()),
                        metrics::geometric_mean(sinr.data()),
                        metrics::jain_index(sinr.data()).unwrap_or(f64::NAN),
                    ),
                    Err(e) => {
                        failures += 1;
                        let _ = writeln!(io.stderr, "L={cells} seed={seed} {}: {e}", obj.name());
                        (f64::NAN, f64::NAN, f64::NAN)
                    }
                };
                w.write_record([
                    cells.to_string(),
                    a.users.to_string(),
                    seed.to_string(),
                    obj.name().to_string(),
                    min.to_string(),
                    geo.to_string(),
                    jain.to_string(),
                    format!("{ms:.3}"),
                ])
                .map_err(failure)?;
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| failure(e.to_string()))?;
    write_output(a.out.as_deref(), &bytes, io.stdout)?;
    if a.out.is_some() {
        let rows = a.cells_list.len() as u64 * a.seeds * 3;
        let _ = writeln!(io.stdout, "{rows} rows, {failures} failed");
    }
    Ok(if failures > 0 { EXIT_FAILURE } else { EXIT_OK })
}
