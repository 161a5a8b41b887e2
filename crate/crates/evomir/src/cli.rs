//! Command-line driver.
//!
//! Subcommands: `vm` (execute one program), `run` (evolutionary search into a
//! run directory), `analyze` (post-hoc edit analysis of a run directory),
//! `bench` (corpus validation and baselines), `report` (run summary).
//!
//! Exit codes: 0 success, 1 usage error, 2 execution fault (including VM
//! faults and timeouts), 3 validation failure.
//!
//! Every run directory is self-contained: `seed.ir`, `suite.json` and
//! `manifest.json` pin exactly what was searched, so `analyze` and `report`
//! never depend on the installed corpus.

use crate::analysis::{
    discovery_history, enumerate_subsets, graph_dot, interaction_graph, minimize_weak_edits,
    separate, source_map, subsets_csv, CountingOracle, Discovery, InteractionGraph,
    MinimizeReport, SeparateReport, SourceMapping, VariantOracle, MAX_ENUMERATED_EDITS,
};
use crate::bench::kernels;
use crate::bench::suite::{builtin_suite, fitness_suite_for, Suite};
use crate::evo::{
    materialize, search, search_resumed, Edit, EvalContext, GenerationLog, SearchConfig,
    SearchOutcome, SearchState,
};
use crate::mir::{parse_named, print, verify, Program};
use crate::vm::{launch, CostModel, LaunchConfig, RunResult, Status};
use clap::error::ErrorKind;
use clap::{ArgGroup, Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

const EXIT_OK: i32 = 0;
const EXIT_USAGE: i32 = 1;
const EXIT_EXEC: i32 = 2;
const EXIT_VALIDATION: i32 = 3;

/// Error carrying its process exit code.
enum CliError {
    Usage(String),
    Exec(String),
    Validation(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Exec(_) => EXIT_EXEC,
            CliError::Validation(_) => EXIT_VALIDATION,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Exec(m) | CliError::Validation(m) => m,
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn exec(msg: impl Into<String>) -> CliError {
    CliError::Exec(msg.into())
}

type CmdResult = Result<i32, CliError>;

#[derive(Parser)]
#[command(
    name = "evomir",
    version,
    about = "Evolutionary optimization of parallel kernels on a deterministic SIMT cost-model VM"
)]
struct Cli {
    /// Worker threads for parallel fitness evaluation (default: all cores).
    /// Results are identical for any thread count.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute one program on the VM and print the result as JSON.
    Vm(VmArgs),
    /// Evolutionary search over a seed kernel, writing a run directory.
    Run(RunArgs),
    /// Analyze the best edit list of a finished run.
    Analyze(AnalyzeArgs),
    /// Corpus utilities: list kernels, validate them, emit baselines.
    Bench(BenchArgs),
    /// Summarize a finished run directory.
    Report(ReportArgs),
}

#[derive(Args)]
struct VmArgs {
    /// Built-in kernel name or path to a .ir file.
    program: String,
    /// Judge against a suite: built-in suite name or path to a suite JSON.
    #[arg(long)]
    suite: Option<String>,
    /// Inline input buffer, e.g. --input a=1,2,3 (repeatable).
    #[arg(long = "input", value_name = "NAME=V,V,...")]
    inputs: Vec<String>,
    /// VM randomness seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    blocks: u32,
    #[arg(long, default_value_t = 32)]
    threads: u32,
    #[arg(long, default_value_t = 32)]
    warp_size: u32,
    /// Per-warp cycle budget before the launch times out.
    #[arg(long, default_value_t = 1_000_000)]
    budget: u64,
    /// JSON file of per-opcode cycle costs overriding the defaults.
    #[arg(long)]
    cost_model: Option<PathBuf>,
    /// Write a line-oriented execution trace to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Built-in kernel name or path to a .ir file.
    #[arg(required_unless_present = "resume")]
    kernel: Option<String>,
    /// Fitness suite: built-in suite name or path to a suite JSON.
    /// Defaults to the kernel's own fitness suite for built-in kernels.
    #[arg(long)]
    suite: Option<String>,
    /// Output run directory (default runs/<kernel>_seed<seed>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Resume an interrupted run from its checkpoint.
    #[arg(long, value_name = "RUN_DIR", conflicts_with_all = ["kernel", "suite", "out", "config"])]
    resume: Option<PathBuf>,
    /// JSON file with search parameters (same field names as the flags).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    pop: Option<usize>,
    #[arg(long)]
    gens: Option<u32>,
    #[arg(long)]
    elitism: Option<usize>,
    #[arg(long)]
    crossover_rate: Option<f64>,
    #[arg(long)]
    mutation_rate: Option<f64>,
    #[arg(long)]
    tournament: Option<usize>,
    /// Root seed for every random stream in the run.
    #[arg(long)]
    seed: Option<u64>,
    /// JSON file of per-opcode cycle costs overriding the suite's model.
    #[arg(long)]
    cost_model: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    run_dir: PathBuf,
    /// Drop weak edits (stage 1). No stage flags at all runs every stage.
    #[arg(long)]
    minimize: bool,
    /// Split kept edits into independent vs epistatic (stage 2).
    #[arg(long)]
    separate: bool,
    /// Exhaustively map interactions among epistatic edits (stage 3).
    #[arg(long)]
    clusters: bool,
    /// Report when each edit was first discovered and its source lines.
    #[arg(long)]
    history: bool,
    /// Minimum fractional improvement an edit must deliver to be kept.
    #[arg(long, default_value_t = 0.01)]
    theta: f64,
    /// Tolerance when comparing solo vs in-context improvements.
    #[arg(long, default_value_t = 0.01)]
    tolerance: f64,
}

#[derive(Args)]
#[command(group = ArgGroup::new("mode").required(true).args(["list", "validate", "baseline"]))]
struct BenchArgs {
    /// List the built-in kernels.
    #[arg(long)]
    list: bool,
    /// Check every kernel against its reference oracles; exit 3 on failure.
    #[arg(long)]
    validate: bool,
    /// Print a baseline cycle table as CSV (kernel,suite,mean_cycles).
    #[arg(long)]
    baseline: bool,
}

#[derive(Args)]
struct ReportArgs {
    run_dir: PathBuf,
}

pub fn main_entry() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("evomir: --jobs must be at least 1");
            return EXIT_USAGE;
        }
        // Ignore "already initialized": tests drive main_entry repeatedly.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let result = match cli.cmd {
        Cmd::Vm(a) => cmd_vm(a),
        Cmd::Run(a) => cmd_run(a),
        Cmd::Analyze(a) => cmd_analyze(a),
        Cmd::Bench(a) => cmd_bench(a),
        Cmd::Report(a) => cmd_report(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("evomir: {}", e.message());
            e.code()
        }
    }
}

// ---------------------------------------------------------------------------
// shared plumbing

fn sha256_hex(data: &str) -> String {
    let mut h = Sha256::new();
    h.update(data.as_bytes());
    format!("{:x}", h.finalize())
}

/// Resolve a program spec to `(name, source text)`: an existing file path
/// wins, otherwise a built-in kernel name.
fn resolve_source(spec: &str) -> Result<(String, String), CliError> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read '{spec}': {e}")))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| spec.to_string());
        return Ok((name, text));
    }
    match kernels::kernel_source(spec) {
        Some(text) => Ok((spec.to_string(), text)),
        None => Err(usage(format!(
            "'{spec}' is neither a readable file nor a built-in kernel (try 'bench --list')"
        ))),
    }
}

fn parse_program(name: &str, text: &str) -> Result<Program, CliError> {
    parse_named(text, name).map_err(|e| usage(format!("parse error: {e}")))
}

/// A suite spec is a built-in suite name or a path to a suite JSON file.
fn resolve_suite(spec: &str) -> Result<Suite, CliError> {
    if let Some(s) = builtin_suite(spec) {
        return Ok(s);
    }
    let path = Path::new(spec);
    if path.is_file() {
        let text = fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read suite '{spec}': {e}")))?;
        return serde_json::from_str(&text)
            .map_err(|e| usage(format!("suite '{spec}' is not valid suite JSON: {e}")));
    }
    Err(usage(format!("'{spec}' is neither a built-in suite nor a suite JSON file")))
}

fn load_cost_model(path: &Path) -> Result<CostModel, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read cost model '{}': {e}", path.display())))?;
    CostModel::with_overrides_json(&text)
        .map_err(|e| usage(format!("bad cost model '{}': {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents)
        .map_err(|e| exec(format!("cannot write '{}': {e}", path.display())))
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| exec(format!("cannot read '{}': {e}", path.display())))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_str(&read_file(path)?)
        .map_err(|e| exec(format!("malformed JSON in '{}': {e}", path.display())))
}

/// Print a line to stdout, tolerating a closed pipe (`evomir ... | head`).
fn emit(s: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{s}");
}

fn emit_raw(s: &str) {
    let mut out = std::io::stdout().lock();
    let _ = write!(out, "{s}");
}

fn now_unix() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

// ---------------------------------------------------------------------------
// vm

#[derive(Serialize)]
struct VmReport {
    status: &'static str,
    /// Human-readable fault description when status is "fault".
    fault: Option<String>,
    cycles: u64,
    instructions_executed: u64,
    mix: crate::vm::InstructionMix,
    globals: BTreeMap<String, Vec<i32>>,
}

fn status_parts(s: &Status) -> (&'static str, Option<String>) {
    match s {
        Status::Completed => ("completed", None),
        Status::Timeout => ("timeout", None),
        Status::Fault(f) => ("fault", Some(f.to_string())),
    }
}

fn parse_inline_inputs(specs: &[String]) -> Result<BTreeMap<String, Vec<i32>>, CliError> {
    let mut out = BTreeMap::new();
    for spec in specs {
        let (name, vals) = spec
            .split_once('=')
            .ok_or_else(|| usage(format!("--input '{spec}' is not NAME=V,V,...")))?;
        let values = if vals.is_empty() {
            Vec::new()
        } else {
            vals.split(',')
                .map(|v| v.trim().parse::<i32>())
                .collect::<Result<Vec<i32>, _>>()
                .map_err(|e| usage(format!("--input '{spec}': {e}")))?
        };
        out.insert(name.to_string(), values);
    }
    Ok(out)
}

fn write_trace(path: &Path, res: &RunResult) -> Result<(), CliError> {
    let mut s = String::from("# block warp mask inst op cost\n");
    for t in res.trace.iter().flatten() {
        s.push_str(&format!(
            "{} {} {:08x} {} {} {}\n",
            t.block, t.warp, t.mask, t.inst, t.op, t.cost
        ));
    }
    write_file(path, &s)
}

fn cmd_vm(a: VmArgs) -> CmdResult {
    let (name, text) = resolve_source(&a.program)?;
    let program = parse_program(&name, &text)?;
    let violations = verify(&program);
    if !violations.is_empty() {
        for v in &violations {
            eprintln!("evomir: {v}");
        }
        return Err(exec(format!("program fails verification with {} violation(s)", violations.len())));
    }

    if let Some(suite_spec) = &a.suite {
        let mut suite = resolve_suite(suite_spec)?;
        if let Some(cm) = &a.cost_model {
            suite.cost = load_cost_model(cm)?;
        }
        let outcomes = suite.run_all(&program);
        let passed = outcomes.iter().all(|o| o.passed);
        let mean = if passed {
            Some(
                outcomes.iter().filter_map(|o| o.cycles).sum::<f64>() / outcomes.len().max(1) as f64,
            )
        } else {
            None
        };
        let report = serde_json::json!({
            "program": name,
            "suite": suite.name,
            "passed": passed,
            "mean_cycles": mean,
            "cases": outcomes.iter().map(|o| serde_json::json!({
                "name": o.name,
                "passed": o.passed,
                "cycles": o.cycles,
                "detail": o.detail,
            })).collect::<Vec<_>>(),
        });
        emit(&serde_json::to_string_pretty(&report).unwrap());
        return Ok(if passed { EXIT_OK } else { EXIT_EXEC });
    }

    let cost = match &a.cost_model {
        Some(p) => load_cost_model(p)?,
        None => CostModel::default(),
    };
    let inputs = parse_inline_inputs(&a.inputs)?;
    let config = LaunchConfig {
        blocks: a.blocks,
        threads_per_block: a.threads,
        warp_size: a.warp_size,
        cycle_budget: a.budget,
    };
    let res = launch(&program, &config, &cost, &inputs, a.seed, a.trace.is_some())
        .map_err(|e| exec(format!("launch failed: {e}")))?;
    if let Some(trace_path) = &a.trace {
        write_trace(trace_path, &res)?;
    }
    let (status, fault) = status_parts(&res.status);
    let report = VmReport {
        status,
        fault,
        cycles: res.cycles,
        instructions_executed: res.instructions_executed,
        mix: res.mix,
        globals: res.globals,
    };
    emit(&serde_json::to_string_pretty(&report).unwrap());
    Ok(if res.status.is_completed() { EXIT_OK } else { EXIT_EXEC })
}

// ---------------------------------------------------------------------------
// run

#[derive(Clone, Serialize, Deserialize)]
struct KernelRef {
    name: String,
    source_sha256: String,
}

#[derive(Clone, Serialize, Deserialize)]
struct SuiteRef {
    name: String,
    sha256: String,
}

/// Pinned description of a run. Two runs with equal manifests (ignoring
/// `timestamps`) produce byte-identical `generations.jsonl` files.
#[derive(Clone, Serialize, Deserialize)]
struct Manifest {
    tool_version: String,
    corpus_version: String,
    kernel: KernelRef,
    suite: SuiteRef,
    search: SearchConfig,
    cost_model: CostModel,
    /// SHA-256 over every reproducibility-relevant field above.
    config_hash: String,
    /// Unix seconds: creation, then one entry per resume.
    timestamps: Vec<u64>,
}

impl Manifest {
    fn new(kernel: KernelRef, suite: SuiteRef, search: SearchConfig, cost_model: CostModel) -> Self {
        let mut m = Manifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            corpus_version: "v1".to_string(),
            kernel,
            suite,
            search,
            cost_model,
            config_hash: String::new(),
            timestamps: vec![],
        };
        m.config_hash = m.compute_hash();
        m.timestamps.push(now_unix());
        m
    }

    fn compute_hash(&self) -> String {
        let mut hashable = self.clone();
        hashable.config_hash = String::new();
        hashable.timestamps = vec![];
        sha256_hex(&serde_json::to_string(&hashable).unwrap())
    }
}

struct RunDir {
    dir: PathBuf,
}

impl RunDir {
    fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }

    fn write_checkpoint(&self, state: &SearchState) -> Result<(), CliError> {
        let tmp = self.path("checkpoint.json.tmp");
        write_file(&tmp, &serde_json::to_string(state).unwrap())?;
        fs::rename(&tmp, self.path("checkpoint.json"))
            .map_err(|e| exec(format!("cannot finalize checkpoint: {e}")))
    }
}

fn effective_search_config(a: &RunArgs) -> Result<SearchConfig, CliError> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read config '{}': {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| usage(format!("bad config '{}': {e}", path.display())))?
        }
        None => SearchConfig::default(),
    };
    if let Some(v) = a.pop {
        cfg.population = v;
    }
    if let Some(v) = a.gens {
        cfg.generations = v;
    }
    if let Some(v) = a.elitism {
        cfg.elitism = v;
    }
    if let Some(v) = a.crossover_rate {
        cfg.crossover_rate = v;
    }
    if let Some(v) = a.mutation_rate {
        cfg.mutation_rate = v;
    }
    if let Some(v) = a.tournament {
        cfg.tournament = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if cfg.population == 0 || cfg.elitism == 0 || cfg.elitism > cfg.population || cfg.tournament == 0
    {
        return Err(usage(
            "search config needs population >= 1, 1 <= elitism <= population, tournament >= 1",
        ));
    }
    Ok(cfg)
}

fn run_summary_json(
    dir: &Path,
    manifest: &Manifest,
    baseline: f64,
    outcome: &SearchOutcome,
) -> serde_json::Value {
    let best_cycles = outcome.best_fitness.cycles();
    serde_json::json!({
        "out_dir": dir.to_string_lossy(),
        "kernel": manifest.kernel.name,
        "suite": manifest.suite.name,
        "seed": manifest.search.seed,
        "generations": manifest.search.generations,
        "baseline_cycles": baseline,
        "best_cycles": best_cycles,
        "improvement_factor": best_cycles.map(|c| baseline / c),
        "best_edit_count": outcome.best.edits.len(),
    })
}

/// Drive a search, streaming generation logs and checkpoints into the run
/// directory, then persist the winning variant.
fn drive_search(
    run_dir: &RunDir,
    manifest: &Manifest,
    seed_program: &Program,
    suite: &Suite,
    state: Option<SearchState>,
) -> CmdResult {
    let judge = |p: &Program| suite.judge(p);
    let cx = EvalContext { seed_program, judge: &judge };
    let baseline = (cx.judge)(seed_program).ok_or_else(|| {
        CliError::Validation(format!(
            "seed kernel '{}' fails suite '{}'; nothing to optimize",
            manifest.kernel.name, manifest.suite.name
        ))
    })?;

    let log_path = run_dir.path("generations.jsonl");
    let mut log_file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)
        .map_err(|e| exec(format!("cannot open '{}': {e}", log_path.display())))?;

    let mut stream_err: Option<CliError> = None;
    let mut on_generation = |log: &GenerationLog, snapshot: &SearchState| {
        if stream_err.is_some() {
            return;
        }
        let line = serde_json::to_string(log).unwrap();
        if let Err(e) = writeln!(log_file, "{line}") {
            stream_err = Some(exec(format!("cannot append to generations.jsonl: {e}")));
            return;
        }
        if let Err(e) = run_dir.write_checkpoint(snapshot) {
            stream_err = Some(e);
        }
    };

    let outcome = match state {
        Some(s) => search_resumed(&cx, &manifest.search, s, &mut on_generation),
        None => search(&cx, &manifest.search, &mut on_generation),
    };
    if let Some(e) = stream_err {
        return Err(e);
    }

    let best_program = materialize(seed_program, &outcome.best.edits, manifest.search.seed)
        .map_err(|e| exec(format!("best individual no longer materializes: {e}")))?;
    write_file(&run_dir.path("best.ir"), &print(&best_program))?;
    write_file(
        &run_dir.path("edits.json"),
        &serde_json::to_string_pretty(&outcome.best.edits).unwrap(),
    )?;

    let summary = run_summary_json(&run_dir.dir, manifest, baseline, &outcome);
    emit(&serde_json::to_string_pretty(&summary).unwrap());
    Ok(EXIT_OK)
}

fn cmd_run(a: RunArgs) -> CmdResult {
    if let Some(dir) = &a.resume {
        return cmd_run_resume(dir, &a);
    }

    let spec = a.kernel.as_deref().expect("clap enforces kernel unless --resume");
    let (name, text) = resolve_source(spec)?;
    let seed_program = parse_program(&name, &text)?;
    let violations = verify(&seed_program);
    if !violations.is_empty() {
        return Err(exec(format!(
            "seed kernel fails verification ({} violation(s), first: {})",
            violations.len(),
            violations[0]
        )));
    }

    let mut suite = match &a.suite {
        Some(s) => resolve_suite(s)?,
        None => fitness_suite_for(&name).ok_or_else(|| {
            usage(format!("no default fitness suite for '{name}'; pass --suite"))
        })?,
    };
    if let Some(cm) = &a.cost_model {
        suite.cost = load_cost_model(cm)?;
    }
    let cfg = effective_search_config(&a)?;

    let dir = a
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("runs/{name}_seed{}", cfg.seed)));
    fs::create_dir_all(&dir).map_err(|e| exec(format!("cannot create '{}': {e}", dir.display())))?;
    if dir.join("generations.jsonl").exists() {
        return Err(exec(format!(
            "'{}' already holds a run; use --resume to continue it or pick another --out",
            dir.display()
        )));
    }
    let run_dir = RunDir { dir: dir.clone() };

    // Pin the exact seed text, suite, and config before searching.
    let canonical_seed = print(&seed_program);
    let suite_json = serde_json::to_string_pretty(&suite).unwrap();
    let manifest = Manifest::new(
        KernelRef { name: name.clone(), source_sha256: sha256_hex(&canonical_seed) },
        SuiteRef { name: suite.name.clone(), sha256: sha256_hex(&suite_json) },
        cfg,
        suite.cost.clone(),
    );
    write_file(&run_dir.path("seed.ir"), &canonical_seed)?;
    write_file(&run_dir.path("suite.json"), &suite_json)?;
    write_file(
        &run_dir.path("manifest.json"),
        &serde_json::to_string_pretty(&manifest).unwrap(),
    )?;

    drive_search(&run_dir, &manifest, &seed_program, &suite, None)
}

fn cmd_run_resume(dir: &Path, a: &RunArgs) -> CmdResult {
    let run_dir = RunDir { dir: dir.to_path_buf() };
    let mut manifest: Manifest = read_json(&run_dir.path("manifest.json"))?;
    if manifest.config_hash != manifest.compute_hash() {
        return Err(CliError::Validation(format!(
            "manifest config hash mismatch in '{}'; directory was tampered with",
            dir.display()
        )));
    }
    let seed_text = read_file(&run_dir.path("seed.ir"))?;
    let seed_program = parse_program(&manifest.kernel.name, &seed_text)?;
    let suite: Suite = read_json(&run_dir.path("suite.json"))?;
    if let Some(gens) = a.gens {
        // Allowed extension: run further generations than originally asked.
        if gens < manifest.search.generations {
            return Err(usage("--gens on resume may only extend the run, not shorten it"));
        }
        manifest.search.generations = gens;
        manifest.config_hash = manifest.compute_hash();
    }
    let state: SearchState = read_json(&run_dir.path("checkpoint.json"))?;
    if state.generation > manifest.search.generations {
        return Err(exec(format!(
            "run in '{}' is already complete at generation {}",
            dir.display(),
            manifest.search.generations
        )));
    }
    manifest.timestamps.push(now_unix());
    write_file(
        &run_dir.path("manifest.json"),
        &serde_json::to_string_pretty(&manifest).unwrap(),
    )?;
    drive_search(&run_dir, &manifest, &seed_program, &suite, Some(state))
}

// ---------------------------------------------------------------------------
// analyze

#[derive(Serialize)]
struct StageRecord {
    stage: String,
    input: String,
    output: String,
}

#[derive(Serialize)]
struct AnalysisReport {
    run_dir: String,
    kernel: String,
    suite: String,
    edit_count: usize,
    stages: Vec<StageRecord>,
    minimize: Option<MinimizeReport>,
    separate: Option<SeparateReport>,
    graph: Option<InteractionGraph>,
    history: Option<Vec<Discovery>>,
    source_map: Option<Vec<SourceMapping>>,
    /// Unique fitness evaluations spent across all stages.
    oracle_calls: usize,
}

fn read_generation_logs(path: &Path) -> Result<Vec<GenerationLog>, CliError> {
    let text = read_file(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l)
                .map_err(|e| exec(format!("malformed line in '{}': {e}", path.display())))
        })
        .collect()
}

fn cmd_analyze(a: AnalyzeArgs) -> CmdResult {
    let run_dir = RunDir { dir: a.run_dir.clone() };
    let manifest: Manifest = read_json(&run_dir.path("manifest.json"))?;
    let seed_text = read_file(&run_dir.path("seed.ir"))?;
    let seed_program = parse_program(&manifest.kernel.name, &seed_text)?;
    let suite: Suite = read_json(&run_dir.path("suite.json"))?;
    let edits: Vec<Edit> = read_json(&run_dir.path("edits.json"))?;

    // No stage flags selects the full pipeline.
    let all = !(a.minimize || a.separate || a.clusters || a.history);
    let want_minimize = all || a.minimize;
    let want_separate = all || a.separate || a.clusters; // clusters needs the split
    let want_clusters = all || a.clusters;
    let want_history = all || a.history;

    let judge = |p: &Program| suite.judge(p);
    let variant_oracle =
        VariantOracle::new(&seed_program, edits.clone(), &judge, manifest.search.seed);
    let oracle = CountingOracle::new(&variant_oracle);
    let uids: Vec<u64> = edits.iter().map(|e| e.uid).collect();

    let out_dir = run_dir.path("analysis");
    fs::create_dir_all(&out_dir)
        .map_err(|e| exec(format!("cannot create '{}': {e}", out_dir.display())))?;

    let mut stages: Vec<StageRecord> = Vec::new();
    let mut report = AnalysisReport {
        run_dir: a.run_dir.to_string_lossy().into_owned(),
        kernel: manifest.kernel.name.clone(),
        suite: manifest.suite.name.clone(),
        edit_count: edits.len(),
        stages: vec![],
        minimize: None,
        separate: None,
        graph: None,
        history: None,
        source_map: None,
        oracle_calls: 0,
    };

    // Stage 1: drop weak edits.
    let mut working: Vec<u64> = uids.clone();
    if want_minimize {
        let r = minimize_weak_edits(&oracle, &uids, a.theta).ok_or_else(|| {
            CliError::Validation("the full edit list fails its own suite; nothing to minimize".into())
        })?;
        stages.push(StageRecord {
            stage: "minimize".into(),
            input: format!("{} edits", uids.len()),
            output: format!("{} weak dropped, {} kept", r.weak.len(), r.kept.len()),
        });
        working = r.kept.clone();
        report.minimize = Some(r);
    }

    // Stage 2: independent vs epistatic.
    let mut epistatic: Vec<u64> = working.clone();
    if want_separate {
        let r = separate(&oracle, &working, a.tolerance).ok_or_else(|| {
            CliError::Validation("the unedited kernel fails its own suite".into())
        })?;
        stages.push(StageRecord {
            stage: "separate".into(),
            input: format!("{} edits", working.len()),
            output: format!(
                "{} independent, {} epistatic",
                r.independent.len(),
                r.epistatic.len()
            ),
        });
        epistatic = r.epistatic.clone();
        report.separate = Some(r);
    }

    // Stage 3: exhaustive interaction mapping of the epistatic core.
    if want_clusters {
        if epistatic.len() > MAX_ENUMERATED_EDITS {
            return Err(exec(format!(
                "refusing --clusters: {} epistatic edits exceed the exhaustive-enumeration \
                 limit of {MAX_ENUMERATED_EDITS}",
                epistatic.len()
            )));
        }
        let records = enumerate_subsets(&oracle, &epistatic)
            .map_err(|e| exec(e.to_string()))?;
        write_file(&out_dir.join("subsets.csv"), &subsets_csv(&records))?;
        let g = interaction_graph(&oracle, &epistatic, a.theta)
            .map_err(|e| exec(e.to_string()))?;
        write_file(&out_dir.join("interactions.dot"), &graph_dot(&g))?;
        stages.push(StageRecord {
            stage: "clusters".into(),
            input: format!("{} epistatic edits, {} subsets", epistatic.len(), records.len()),
            output: format!(
                "{} interactions, {} dependencies, {} clusters",
                g.interactions.len(),
                g.dependencies.len(),
                g.clusters.len()
            ),
        });
        report.graph = Some(g);
    }

    // Stage 4: discovery history and source mapping.
    if want_history {
        let logs = read_generation_logs(&run_dir.path("generations.jsonl"))?;
        let history = discovery_history(&logs, &uids);
        let mapping = source_map(&seed_program, &edits, manifest.search.seed);
        let mut csv = String::from("uid,first_generation,first_slot\n");
        for d in &history {
            csv.push_str(&format!("{},{},{}\n", d.uid, d.first_generation, d.first_slot));
        }
        write_file(&out_dir.join("history.csv"), &csv)?;
        stages.push(StageRecord {
            stage: "history".into(),
            input: format!("{} generation logs", logs.len()),
            output: format!("{} edits located", history.len()),
        });
        report.history = Some(history);
        report.source_map = Some(mapping);
    }

    report.stages = stages;
    report.oracle_calls = oracle.unique_calls();
    let json = serde_json::to_string_pretty(&report).unwrap();
    write_file(&out_dir.join("report.json"), &json)?;
    emit(&json);
    Ok(EXIT_OK)
}

// ---------------------------------------------------------------------------
// bench

/// Correctness suites for `bench --validate`, per kernel.
fn validation_suites(kernel: &str) -> Vec<Suite> {
    use crate::bench::suite::*;
    match kernel {
        "sw_naive" | "sw_tuned" => vec![sw_oracle_suite(), sw_heldout_suite()],
        "grid_diffusion_checked" | "grid_diffusion_padded" => {
            vec![diffusion_suite(), diffusion_heldout_suite()]
        }
        "tcell_walk" => vec![tcell_suite()],
        _ => vec![],
    }
}

fn cmd_bench(a: BenchArgs) -> CmdResult {
    if a.list {
        for name in kernels::KERNEL_NAMES {
            emit(name);
        }
        return Ok(EXIT_OK);
    }

    if a.validate {
        let mut rows = Vec::new();
        let mut all_ok = true;
        for name in kernels::KERNEL_NAMES {
            let program = kernels::load(name);
            for suite in validation_suites(name) {
                let outcomes = suite.run_all(&program);
                let passed = outcomes.iter().all(|o| o.passed);
                all_ok &= passed;
                let detail = outcomes
                    .iter()
                    .find(|o| !o.passed)
                    .map(|o| format!("{}: {}", o.name, o.detail))
                    .unwrap_or_default();
                rows.push(serde_json::json!({
                    "kernel": name,
                    "suite": suite.name,
                    "cases": outcomes.len(),
                    "passed": passed,
                    "detail": detail,
                }));
            }
        }
        let report = serde_json::json!({ "passed": all_ok, "checks": rows });
        emit(&serde_json::to_string_pretty(&report).unwrap());
        return if all_ok {
            Ok(EXIT_OK)
        } else {
            Err(CliError::Validation("corpus validation failed".into()))
        };
    }

    // --baseline: cycle table. Kernels sharing a suite are directly
    // comparable row-to-row.
    let mut csv = String::from("kernel,suite,mean_cycles\n");
    let pairs: Vec<(&str, Suite)> = vec![
        ("sw_naive", crate::bench::suite::sw_oracle_suite()),
        ("sw_tuned", crate::bench::suite::sw_oracle_suite()),
        ("sw_naive", crate::bench::suite::sw_fitness_suite()),
        ("sw_tuned", crate::bench::suite::sw_tuned_suite()),
        ("grid_diffusion_checked", crate::bench::suite::diffusion_suite()),
        ("grid_diffusion_padded", crate::bench::suite::diffusion_suite()),
        ("tcell_walk", crate::bench::suite::tcell_suite()),
    ];
    for (kernel, suite) in pairs {
        let program = kernels::load(kernel);
        match suite.judge(&program) {
            Some(c) => csv.push_str(&format!("{kernel},{},{c}\n", suite.name)),
            None => {
                return Err(CliError::Validation(format!(
                    "kernel '{kernel}' fails suite '{}'",
                    suite.name
                )))
            }
        }
    }
    emit_raw(&csv);
    Ok(EXIT_OK)
}

// ---------------------------------------------------------------------------
// report

fn cmd_report(a: ReportArgs) -> CmdResult {
    let run_dir = RunDir { dir: a.run_dir.clone() };
    let manifest: Manifest = read_json(&run_dir.path("manifest.json"))?;
    let logs = read_generation_logs(&run_dir.path("generations.jsonl"))?;
    if logs.is_empty() {
        return Err(exec("run directory has no generation logs"));
    }
    let baseline = logs[0].best_fitness.cycles();
    let last = &logs[logs.len() - 1];
    let best = last.best_fitness.cycles();
    let curve: Vec<serde_json::Value> = logs
        .iter()
        .map(|l| {
            serde_json::json!({
                "generation": l.generation,
                "best_cycles": l.best_fitness.cycles(),
                "valid_count": l.valid_count,
                "mean_valid_cycles": l.mean_valid_cycles,
            })
        })
        .collect();
    let report = serde_json::json!({
        "run_dir": a.run_dir.to_string_lossy(),
        "kernel": manifest.kernel.name,
        "suite": manifest.suite.name,
        "seed": manifest.search.seed,
        "generations_logged": logs.len(),
        "baseline_cycles": baseline,
        "best_cycles": best,
        "improvement_factor": match (baseline, best) {
            (Some(b), Some(x)) if x > 0.0 => Some(b / x),
            _ => None,
        },
        "best_edit_count": last.best_edits.len(),
        "curve": curve,
    });
    emit(&serde_json::to_string_pretty(&report).unwrap());
    Ok(EXIT_OK)
}
