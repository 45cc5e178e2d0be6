//! `evacsim` command-line front end.
//!
//! Subcommands cover the full offline workflow: generating populations,
//! validating and running scenarios, sweeping experiment matrices, computing
//! evacuation metrics from saved logs, exporting browser replays, and the two
//! message-propagation pipelines. Every command is deterministic for a fixed
//! seed when run against the built-in stub policies.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid input (bad files or
//! option values), 64 command-line usage errors. Remote-backend credentials
//! are read only from the `EVACSIM_API_TOKEN` environment variable.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use evacsim::commsim::{
    load_script, run_misinterpretation, run_propagation, stub_agents, AlwaysIdle, CommError,
    CommPolicy, EvacuateOnContains, SpreadOnContains, StubCommBackend,
    DEFAULT_EXTREME_THRESHOLD,
};
use evacsim::decisions::exec::{Executor, RemoteDecider};
use evacsim::decisions::{
    BackendConfig, DecisionPolicy, DelayK, NearestExit, ObedientToCoordinator,
};
use evacsim::engine::{
    metric_evacuation_time, DecisionBackend, EngineError, RoundLog, TerminationReason,
};
use evacsim::population::{
    generate_population, Population, PopulationError, PopulationSpec, StubPersonaBackend,
};
use evacsim::replay::{export_replay, ReplayError};
use evacsim::scenarios::{
    build_simulation, load_matrix, load_scenario, prepare, run_matrix, RunOverrides,
    ScenarioError,
};
use evacsim::stadium::StadiumModel;

const EXIT_RUNTIME: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "evacsim", version, about = "Stadium evacuation simulation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check that an input file parses and passes validation.
    Validate {
        /// What the file is supposed to contain.
        kind: ArtifactKind,
        /// Path to the file.
        path: PathBuf,
    },
    /// Generate a population and write it as JSON.
    GenPopulation {
        /// Population spec (TOML); defaults to the built-in roster.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Rescale the spec to roughly this many students.
        #[arg(long)]
        target_students: Option<u32>,
        /// Override the spec's placement seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one scenario and save its artifacts to a directory.
    Run {
        /// Scenario file (TOML).
        #[arg(long)]
        scenario: PathBuf,
        /// Decision policy: nearest-exit | obedient | delay:<k>.
        #[arg(long, default_value = "nearest-exit")]
        policy: String,
        /// Decision backend. The stub backend applies the policy directly;
        /// the remote backend sends each request to an HTTP endpoint.
        #[arg(long, value_enum, default_value_t = BackendKind::Stub)]
        backend: BackendKind,
        /// Endpoint URL for the remote backend.
        #[arg(long)]
        endpoint: Option<String>,
        /// Model name for the remote backend.
        #[arg(long = "model")]
        model_name: Option<String>,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the scenario round limit.
        #[arg(long)]
        max_rounds: Option<u64>,
        /// Also write a state snapshot every N rounds.
        #[arg(long)]
        save_every: Option<u64>,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every variant x repetition cell of an experiment matrix.
    Matrix {
        /// Matrix file (TOML).
        #[arg(long)]
        matrix: PathBuf,
        /// Decision policy applied to every cell.
        #[arg(long, default_value = "nearest-exit")]
        policy: String,
        /// Worker threads (default: available parallelism).
        #[arg(long)]
        jobs: Option<usize>,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute evacuation-time metrics from a saved round log.
    Metrics {
        /// Round log (JSONL, as written by `run`).
        #[arg(long)]
        log: PathBuf,
        /// Population fraction(s) to report; repeatable.
        #[arg(long = "fraction", value_name = "F", default_values_t = [0.8])]
        fractions: Vec<f64>,
    },
    /// Run a scenario and write only the browser replay file.
    ReplayExport {
        /// Scenario file (TOML).
        #[arg(long)]
        scenario: PathBuf,
        /// Decision policy: nearest-exit | obedient | delay:<k>.
        #[arg(long, default_value = "nearest-exit")]
        policy: String,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the scenario round limit.
        #[arg(long)]
        max_rounds: Option<u64>,
        /// Output file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score every agent x message pair for misinterpretation.
    CommsimMisinterpret {
        /// Text file with one message per line.
        #[arg(long)]
        messages: PathBuf,
        /// Number of stub agents.
        #[arg(long, default_value_t = 12)]
        agents: usize,
        /// Scores above this threshold count as extreme.
        #[arg(long, default_value_t = DEFAULT_EXTREME_THRESHOLD)]
        threshold: u8,
        /// Output file (JSON); defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay a scripted message-propagation scenario.
    CommsimPropagate {
        /// Script file (TOML).
        #[arg(long)]
        script: PathBuf,
        /// Number of stub agents.
        #[arg(long, default_value_t = 10)]
        agents: usize,
        /// Agent policy: idle | spread-on:<word> | evacuate-on:<word>.
        #[arg(long, default_value = "idle")]
        policy: String,
        /// Prefix diffused content with the moderation warning.
        #[arg(long)]
        moderated: bool,
        /// Seed for recipient sampling.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file (JSON); defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ArtifactKind {
    Scenario,
    Matrix,
    Script,
    Population,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Stub,
    Remote,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.code())
        }
    }
}

fn dispatch(command: Command) -> Result<(), AppError> {
    match command {
        Command::Validate { kind, path } => cmd_validate(kind, &path),
        Command::GenPopulation { spec, target_students, seed, out } => {
            cmd_gen_population(spec.as_deref(), target_students, seed, &out)
        }
        Command::Run {
            scenario,
            policy,
            backend,
            endpoint,
            model_name,
            seed,
            max_rounds,
            save_every,
            out,
        } => cmd_run(RunArgs {
            scenario,
            policy,
            backend,
            endpoint,
            model_name,
            seed,
            max_rounds,
            save_every,
            out,
        }),
        Command::Matrix { matrix, policy, jobs, out } => cmd_matrix(&matrix, &policy, jobs, &out),
        Command::Metrics { log, fractions } => cmd_metrics(&log, &fractions),
        Command::ReplayExport { scenario, policy, seed, max_rounds, out } => {
            cmd_replay_export(&scenario, &policy, seed, max_rounds, &out)
        }
        Command::CommsimMisinterpret { messages, agents, threshold, out } => {
            cmd_commsim_misinterpret(&messages, agents, threshold, out.as_deref())
        }
        Command::CommsimPropagate { script, agents, policy, moderated, seed, out } => {
            cmd_commsim_propagate(&script, agents, &policy, moderated, seed, out.as_deref())
        }
    }
}

// ---------------------------------------------------------------------------
// errors and exit codes
// ---------------------------------------------------------------------------

enum AppError {
    /// Bad input: malformed or inconsistent files, unknown option values.
    Validation(String),
    /// Everything else: I/O, engine failures, backend failures.
    Runtime(String),
}

impl AppError {
    fn code(&self) -> u8 {
        match self {
            AppError::Validation(_) => EXIT_VALIDATION,
            AppError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    fn message(&self) -> &str {
        match self {
            AppError::Validation(m) | AppError::Runtime(m) => m,
        }
    }
}

impl From<ScenarioError> for AppError {
    fn from(err: ScenarioError) -> AppError {
        match err {
            ScenarioError::Io { .. } | ScenarioError::Engine(_) => {
                AppError::Runtime(err.to_string())
            }
            _ => AppError::Validation(err.to_string()),
        }
    }
}

impl From<CommError> for AppError {
    fn from(err: CommError) -> AppError {
        match err {
            CommError::Io { .. } => AppError::Runtime(err.to_string()),
            _ => AppError::Validation(err.to_string()),
        }
    }
}

impl From<PopulationError> for AppError {
    fn from(err: PopulationError) -> AppError {
        match err {
            PopulationError::Spec(_)
            | PopulationError::InsufficientStudents { .. }
            | PopulationError::MissingFeature(_) => AppError::Validation(err.to_string()),
            _ => AppError::Runtime(err.to_string()),
        }
    }
}

impl From<EngineError> for AppError {
    fn from(err: EngineError) -> AppError {
        AppError::Runtime(err.to_string())
    }
}

impl From<ReplayError> for AppError {
    fn from(err: ReplayError) -> AppError {
        AppError::Runtime(err.to_string())
    }
}

impl From<serde_json::Error> for AppError {
    fn from(err: serde_json::Error) -> AppError {
        AppError::Runtime(err.to_string())
    }
}

fn read_to_string(path: &Path) -> Result<String, AppError> {
    fs::read_to_string(path)
        .map_err(|e| AppError::Runtime(format!("failed to read {}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), AppError> {
    fs::write(path, contents)
        .map_err(|e| AppError::Runtime(format!("failed to write {}: {e}", path.display())))
}

fn ensure_dir(path: &Path) -> Result<(), AppError> {
    fs::create_dir_all(path)
        .map_err(|e| AppError::Runtime(format!("failed to create {}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// policy and backend selection
// ---------------------------------------------------------------------------

#[derive(Clone, Copy)]
enum PolicyKind {
    NearestExit,
    Obedient,
    Delay(u64),
}

impl PolicyKind {
    fn boxed(self) -> Box<dyn DecisionPolicy> {
        match self {
            PolicyKind::NearestExit => Box::new(NearestExit),
            PolicyKind::Obedient => Box::new(ObedientToCoordinator),
            PolicyKind::Delay(k) => Box::new(DelayK { k }),
        }
    }

    fn backend(self) -> DecisionBackend {
        DecisionBackend::Policy(self.boxed())
    }
}

fn parse_policy(text: &str) -> Result<PolicyKind, AppError> {
    if text == "nearest-exit" {
        return Ok(PolicyKind::NearestExit);
    }
    if text == "obedient" {
        return Ok(PolicyKind::Obedient);
    }
    if let Some(k) = text.strip_prefix("delay:") {
        let k = k.parse::<u64>().map_err(|_| {
            AppError::Validation(format!("invalid delay count in policy '{text}'"))
        })?;
        return Ok(PolicyKind::Delay(k));
    }
    Err(AppError::Validation(format!(
        "unknown policy '{text}'; expected nearest-exit, obedient, or delay:<k>"
    )))
}

fn make_backend(
    policy: PolicyKind,
    backend: BackendKind,
    endpoint: Option<String>,
    model: Option<String>,
) -> Result<DecisionBackend, AppError> {
    match backend {
        BackendKind::Stub => Ok(policy.backend()),
        BackendKind::Remote => {
            let config = BackendConfig { endpoint, model, ..BackendConfig::default() };
            let decider = RemoteDecider::from_config(&config).map_err(AppError::Validation)?;
            let executor = Executor::new(decider, config)
                .map_err(|e| AppError::Validation(e.to_string()))?;
            Ok(DecisionBackend::Executor(Box::new(executor)))
        }
    }
}

fn parse_comm_policy(text: &str) -> Result<Box<dyn CommPolicy>, AppError> {
    if text == "idle" {
        return Ok(Box::new(AlwaysIdle));
    }
    if let Some(word) = text.strip_prefix("spread-on:") {
        return Ok(Box::new(SpreadOnContains(word.to_string())));
    }
    if let Some(word) = text.strip_prefix("evacuate-on:") {
        return Ok(Box::new(EvacuateOnContains(word.to_string())));
    }
    Err(AppError::Validation(format!(
        "unknown policy '{text}'; expected idle, spread-on:<word>, or evacuate-on:<word>"
    )))
}

// ---------------------------------------------------------------------------
// commands
// ---------------------------------------------------------------------------

fn cmd_validate(kind: ArtifactKind, path: &Path) -> Result<(), AppError> {
    match kind {
        ArtifactKind::Scenario => {
            let scenario = load_scenario(path)?;
            println!("OK: scenario '{}' (seed {})", scenario.name, scenario.seed);
        }
        ArtifactKind::Matrix => {
            let matrix = load_matrix(path)?;
            println!(
                "OK: matrix with {} variants x {} repetitions",
                matrix.variants.len(),
                matrix.repetitions
            );
        }
        ArtifactKind::Script => {
            let script = load_script(path)?;
            let rounds: usize = script.sections.iter().map(|s| s.rounds.len()).sum();
            println!("OK: script with {} sections, {rounds} rounds", script.sections.len());
        }
        ArtifactKind::Population => {
            let text = read_to_string(path)?;
            let population = Population::load_json(text.as_bytes())?;
            println!(
                "OK: population with {} agents in {} groups",
                population.total(),
                population.groups.len()
            );
        }
    }
    Ok(())
}

fn cmd_gen_population(
    spec_path: Option<&Path>,
    target_students: Option<u32>,
    seed: Option<u64>,
    out: &Path,
) -> Result<(), AppError> {
    let mut spec = match spec_path {
        Some(path) => PopulationSpec::from_toml(&read_to_string(path)?)?,
        None => PopulationSpec::default_spec(),
    };
    if let Some(target) = target_students {
        spec = spec.scaled_students(target);
    }
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let model = StadiumModel::default_layout();
    let population = generate_population(&spec, &model, &mut StubPersonaBackend)?;
    let mut buf = Vec::new();
    population.save_json(&mut buf)?;
    write_file(out, &buf)?;
    println!(
        "wrote {} agents in {} groups to {}",
        population.total(),
        population.groups.len(),
        out.display()
    );
    Ok(())
}

struct RunArgs {
    scenario: PathBuf,
    policy: String,
    backend: BackendKind,
    endpoint: Option<String>,
    model_name: Option<String>,
    seed: Option<u64>,
    max_rounds: Option<u64>,
    save_every: Option<u64>,
    out: PathBuf,
}

fn cmd_run(args: RunArgs) -> Result<(), AppError> {
    let policy = parse_policy(&args.policy)?;
    let scenario = load_scenario(&args.scenario)?;
    let base = args.scenario.parent().unwrap_or_else(|| Path::new("."));
    let prepared = prepare(&scenario, base)?;
    let model = prepared.model.clone();
    let coordinators = prepared.coordinators.clone();

    ensure_dir(&args.out)?;
    let backend = make_backend(policy, args.backend, args.endpoint, args.model_name)?;
    let overrides = RunOverrides {
        seed: args.seed,
        max_rounds: args.max_rounds,
        save_dir: Some(args.out.clone()),
        save_every: args.save_every,
    };
    let mut sim = build_simulation(prepared, backend, overrides)?;
    let result = sim.run()?;

    let mut result_json = serde_json::to_string_pretty(&result)?;
    result_json.push('\n');
    write_file(&args.out.join("result.json"), result_json.as_bytes())?;
    let replay = export_replay(&model, &coordinators, &result.logs)?;
    let mut replay_json = replay.to_json();
    replay_json.push('\n');
    write_file(&args.out.join("replay.json"), replay_json.as_bytes())?;
    write_manifest(&args.out)?;

    println!("rounds: {}", result.rounds);
    println!("termination: {}", termination_label(result.termination));
    println!("exited: {}/{}", result.exited_total, result.total_agents);
    for fraction in [0.5, 0.8, 0.9, 1.0] {
        report_metric(&result.logs, result.total_agents, fraction)?;
    }
    println!("artifacts: {}", args.out.display());
    Ok(())
}

fn cmd_matrix(
    path: &Path,
    policy: &str,
    jobs: Option<usize>,
    out: &Path,
) -> Result<(), AppError> {
    let kind = parse_policy(policy)?;
    let matrix = load_matrix(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let jobs = jobs.unwrap_or_else(|| {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    });
    if jobs == 0 {
        return Err(AppError::Validation("--jobs must be at least 1".to_string()));
    }
    let make = move || kind.backend();
    let report = run_matrix(&matrix, base, &make, jobs)?;

    ensure_dir(out)?;
    let mut report_json = report.to_json();
    if !report_json.ends_with('\n') {
        report_json.push('\n');
    }
    write_file(&out.join("report.json"), report_json.as_bytes())?;
    write_file(&out.join("report.csv"), report.to_csv().as_bytes())?;
    write_manifest(out)?;

    let failures = report.rows.iter().filter(|r| r.error.is_some()).count();
    println!(
        "cells: {} ({} variants x {} repetitions), {} failed",
        report.rows.len(),
        matrix.variants.len(),
        matrix.repetitions,
        failures
    );
    println!("artifacts: {}", out.display());
    Ok(())
}

fn cmd_metrics(log: &Path, fractions: &[f64]) -> Result<(), AppError> {
    let text = read_to_string(log)?;
    let mut logs: Vec<RoundLog> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: RoundLog = serde_json::from_str(line).map_err(|e| {
            AppError::Validation(format!("{}:{}: bad round log line: {e}", log.display(), i + 1))
        })?;
        logs.push(parsed);
    }
    let Some(first) = logs.first() else {
        return Err(AppError::Validation(format!("{} contains no rounds", log.display())));
    };
    let total = first.agents.len() as u64 + first.exited_total;
    println!("rounds: {}", logs.len());
    println!("agents: {total}");
    for &fraction in fractions {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(AppError::Validation(format!(
                "fraction {fraction} out of range (0, 1]"
            )));
        }
        report_metric(&logs, total, fraction)?;
    }
    Ok(())
}

fn cmd_replay_export(
    scenario_path: &Path,
    policy: &str,
    seed: Option<u64>,
    max_rounds: Option<u64>,
    out: &Path,
) -> Result<(), AppError> {
    let policy = parse_policy(policy)?;
    let scenario = load_scenario(scenario_path)?;
    let base = scenario_path.parent().unwrap_or_else(|| Path::new("."));
    let prepared = prepare(&scenario, base)?;
    let model = prepared.model.clone();
    let coordinators = prepared.coordinators.clone();
    let overrides = RunOverrides { seed, max_rounds, save_dir: None, save_every: None };
    let mut sim = build_simulation(prepared, policy.backend(), overrides)?;
    let result = sim.run()?;
    let replay = export_replay(&model, &coordinators, &result.logs)?;
    let mut replay_json = replay.to_json();
    replay_json.push('\n');
    write_file(out, replay_json.as_bytes())?;
    println!(
        "wrote replay: {} rounds, {} agents -> {}",
        result.rounds,
        result.total_agents,
        out.display()
    );
    Ok(())
}

fn cmd_commsim_misinterpret(
    messages_path: &Path,
    agents: usize,
    threshold: u8,
    out: Option<&Path>,
) -> Result<(), AppError> {
    let text = read_to_string(messages_path)?;
    let messages: Vec<String> =
        text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect();
    if messages.is_empty() {
        return Err(AppError::Validation(format!(
            "{} contains no messages",
            messages_path.display()
        )));
    }
    if agents == 0 {
        return Err(AppError::Validation("--agents must be at least 1".to_string()));
    }
    let roster = stub_agents(agents);
    let records =
        run_misinterpretation(&roster, &messages, threshold, &mut StubCommBackend::default())?;
    let extreme = records.iter().filter(|r| r.extreme_reaction.is_some()).count();
    let failed = records.iter().filter(|r| r.failed).count();
    let mut json = serde_json::to_string_pretty(&records)?;
    json.push('\n');
    match out {
        Some(path) => {
            write_file(path, json.as_bytes())?;
            println!(
                "{} pairs ({} agents x {} messages): {extreme} extreme, {failed} failed -> {}",
                records.len(),
                agents,
                messages.len(),
                path.display()
            );
        }
        None => print!("{json}"),
    }
    Ok(())
}

fn cmd_commsim_propagate(
    script_path: &Path,
    agents: usize,
    policy: &str,
    moderated: bool,
    seed: u64,
    out: Option<&Path>,
) -> Result<(), AppError> {
    let mut policy = parse_comm_policy(policy)?;
    let script = load_script(script_path)?;
    if agents == 0 {
        return Err(AppError::Validation("--agents must be at least 1".to_string()));
    }
    let mut roster = stub_agents(agents);
    let outcome = run_propagation(&script, &mut roster, moderated, policy.as_mut(), seed)?;
    let mut json = outcome.to_json();
    if !json.ends_with('\n') {
        json.push('\n');
    }
    match out {
        Some(path) => {
            write_file(path, json.as_bytes())?;
            for section in &outcome.sections {
                println!(
                    "section '{}': {} decisions, {} evacuated, {} diffusions",
                    section.name,
                    section.decisions.len(),
                    section.evacuated.len(),
                    section.diffusion_count
                );
            }
            println!("artifacts: {}", path.display());
        }
        None => print!("{json}"),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// shared output helpers
// ---------------------------------------------------------------------------

fn termination_label(termination: TerminationReason) -> &'static str {
    match termination {
        TerminationReason::AllExited => "all_exited",
        TerminationReason::RoundLimit => "round_limit",
    }
}

fn report_metric(logs: &[RoundLog], total: u64, fraction: f64) -> Result<(), AppError> {
    match metric_evacuation_time(logs, total, fraction)? {
        Some(round) => println!("evacuation {:.0}%: round {round}", fraction * 100.0),
        None => println!("evacuation {:.0}%: not reached", fraction * 100.0),
    }
    Ok(())
}

/// Hash every artifact in `dir` (except the manifest itself) into
/// `manifest.json`. Keys are sorted, so the manifest is byte-deterministic
/// whenever the artifacts are.
fn write_manifest(dir: &Path) -> Result<(), AppError> {
    let entries = fs::read_dir(dir)
        .map_err(|e| AppError::Runtime(format!("failed to list {}: {e}", dir.display())))?;
    let mut artifacts: BTreeMap<String, serde_json::Value> = BTreeMap::new();
    for entry in entries {
        let entry =
            entry.map_err(|e| AppError::Runtime(format!("failed to list {}: {e}", dir.display())))?;
        let path = entry.path();
        if !path.is_file() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        if name == "manifest.json" {
            continue;
        }
        let bytes = fs::read(&path)
            .map_err(|e| AppError::Runtime(format!("failed to read {}: {e}", path.display())))?;
        let digest = Sha256::digest(&bytes);
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        artifacts.insert(
            name,
            serde_json::json!({ "bytes": bytes.len(), "sha256": hex }),
        );
    }
    let manifest = serde_json::json!({ "version": 1, "artifacts": artifacts });
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    write_file(&dir.join("manifest.json"), text.as_bytes())
}
