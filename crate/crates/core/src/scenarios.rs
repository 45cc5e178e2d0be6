//! Scenario definitions and the experiment harness: emergency types,
//! announcement variants, coordinator layouts, extra exits, and a batch
//! runner that compares variants on the partial-evacuation-time metric.
//!
//! Scenarios are TOML files referencing other artifacts (population specs,
//! coordinator layouts) by path relative to the scenario file. Loading
//! validates the schema; [`prepare`] resolves every reference into concrete
//! runtime objects and applies threat constraints to the destination offer.

use std::collections::{BTreeMap, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::Destination;
use crate::coordination::{
    coordinators_from_toml, default_coordinator_layout, validate_coordinators, Coordinator,
    CoordinationError,
};
use crate::engine::{
    metric_evacuation_time, DecisionBackend, EngineError, RunResult, Simulation,
    SimulationConfig, TerminationReason, DEFAULT_MAX_ROUNDS,
};
use crate::geometry::{Point, Rect};
use crate::population::{
    generate_population, Population, PopulationError, PopulationSpec, StubPersonaBackend,
};
use crate::stadium::{ExitId, ExitPoint, LayoutError, StadiumModel};

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;
pub const MATRIX_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scenario file: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("scenario validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error(transparent)]
    Population(#[from] PopulationError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Coordination(#[from] CoordinationError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmergencyType {
    SevereWeather,
    BombThreat,
}

/// Which coordinators staff the run: the bundled default ring, none at all,
/// or a layout file next to the scenario.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoordinatorLayoutRef {
    Named(String),
    File { file: String },
}

impl Default for CoordinatorLayoutRef {
    fn default() -> CoordinatorLayoutRef {
        CoordinatorLayoutRef::Named("default".to_string())
    }
}

/// Where the population comes from: a spec (optionally rescaled) that is
/// generated on demand, or a pregenerated population dump.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationRef {
    /// Path to a population spec; omitted means the bundled default spec.
    pub spec: Option<String>,
    /// Rescale the spec to this many students before generating.
    pub target_students: Option<u32>,
    /// Path to a pregenerated population dump; mutually exclusive with the
    /// spec fields.
    pub file: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtraExit {
    pub id: u32,
    pub position: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThreatSpec {
    /// [x, y, w, h] pixel region considered dangerous.
    pub rect: [f64; 4],
}

impl ThreatSpec {
    pub fn as_rect(&self) -> Rect {
        Rect { x: self.rect[0], y: self.rect[1], w: self.rect[2], h: self.rect[3] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    pub name: String,
    pub emergency_type: EmergencyType,
    pub announcement: String,
    #[serde(default)]
    pub announcement_includes_location: bool,
    pub seed: u64,
    #[serde(default)]
    pub max_rounds: Option<u64>,
    #[serde(default)]
    pub coordinator_layout: CoordinatorLayoutRef,
    #[serde(default)]
    pub population: PopulationRef,
    #[serde(default)]
    pub extra_exits: Vec<ExtraExit>,
    #[serde(default)]
    pub threat: Option<ThreatSpec>,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Scenario, ScenarioError> {
        let scenario: Scenario = toml::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    /// Schema-level checks that need no file resolution. Problems are
    /// itemized so a `validate` pass can report all of them at once.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut problems = Vec::new();
        if self.version != SCENARIO_SCHEMA_VERSION {
            problems.push(format!(
                "unsupported scenario version {} (supported: {SCENARIO_SCHEMA_VERSION})",
                self.version
            ));
        }
        if self.name.trim().is_empty() {
            problems.push("name must be nonempty".to_string());
        }
        match (self.emergency_type, &self.threat) {
            (EmergencyType::BombThreat, None) => {
                problems.push("bomb_threat scenarios require a [threat] region".to_string());
            }
            (EmergencyType::SevereWeather, Some(_)) => {
                problems.push(
                    "severe_weather scenarios keep all exits accessible; remove [threat]"
                        .to_string(),
                );
            }
            _ => {}
        }
        if let Some(threat) = &self.threat {
            if !(threat.rect[2] > 0.0 && threat.rect[3] > 0.0) {
                problems.push("threat rect must have positive width and height".to_string());
            }
        }
        if self.announcement_includes_location && self.threat.is_none() {
            problems.push(
                "announcement_includes_location requires a [threat] region to name".to_string(),
            );
        }
        if let CoordinatorLayoutRef::Named(name) = &self.coordinator_layout {
            if name != "default" && name != "none" {
                problems.push(format!(
                    "unknown coordinator_layout \"{name}\" (expected \"default\", \"none\", or {{ file = ... }})"
                ));
            }
        }
        let p = &self.population;
        if p.file.is_some() && (p.spec.is_some() || p.target_students.is_some()) {
            problems.push(
                "population.file is mutually exclusive with population.spec/target_students"
                    .to_string(),
            );
        }
        let mut seen_ids = std::collections::BTreeSet::new();
        for exit in &self.extra_exits {
            if !seen_ids.insert(exit.id) {
                problems.push(format!("duplicate extra exit id {}", exit.id));
            }
        }
        if let Some(rounds) = self.max_rounds {
            if rounds == 0 {
                problems.push("max_rounds must be at least 1".to_string());
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Validation(problems))
        }
    }
}

fn read_file(path: &Path) -> Result<String, ScenarioError> {
    std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Load and validate a scenario file. Referenced paths are checked later by
/// [`prepare`], which knows the base directory.
pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    Scenario::from_toml(&read_file(path)?)
}

/// Remove destinations inside or overlapping the threat region: exits whose
/// point lies in the rect, regions whose rect intersects it. `None` is the
/// identity. Erroring when no exit survives keeps every run escapable.
pub fn apply_threat_constraints(
    model: &StadiumModel,
    offered: Vec<Destination>,
    threat: Option<&Rect>,
) -> Result<Vec<Destination>, ScenarioError> {
    let Some(rect) = threat else { return Ok(offered) };
    let filtered: Vec<Destination> = offered
        .into_iter()
        .filter(|dest| match dest {
            Destination::Exit(id) => match model.exit(*id) {
                Some(exit) => !rect.contains(exit.position),
                None => false,
            },
            Destination::Region(kind) => match model.region_rect(*kind) {
                Some(region) => !rect.intersects(&region),
                None => false,
            },
        })
        .collect();
    if !filtered.iter().any(Destination::is_exit) {
        return Err(ScenarioError::Validation(vec![
            "threat region covers every exit; no evacuation route remains".to_string(),
        ]));
    }
    Ok(filtered)
}

/// The announcement text injected into every agent's context. The configured
/// text is kept verbatim; bomb threats append a closure notice, and the
/// threat's location is named only when the scenario says to include it.
pub fn effective_announcement(scenario: &Scenario) -> String {
    let mut text = scenario.announcement.clone();
    if let Some(threat) = &scenario.threat {
        text.push_str(" Some exits and areas have been closed off for your safety; please use the routes still available.");
        if scenario.announcement_includes_location {
            let center = threat.as_rect().center();
            text.push_str(&format!(
                " The threat has been reported near ({:.0}, {:.0}).",
                center.x, center.y
            ));
        }
    }
    text
}

/// Everything a run needs, with all file references resolved.
#[derive(Debug, Clone)]
pub struct PreparedScenario {
    pub scenario: Scenario,
    pub model: StadiumModel,
    pub population: Population,
    pub coordinators: Vec<Coordinator>,
    pub offered: Vec<Destination>,
    pub announcement: String,
}

/// Resolve a scenario's references against `base_dir` (normally the scenario
/// file's directory), generate or load the population, and build the final
/// destination offer.
pub fn prepare(scenario: &Scenario, base_dir: &Path) -> Result<PreparedScenario, ScenarioError> {
    scenario.validate()?;
    let mut model = StadiumModel::default_layout();
    let canvas = model.canvas();
    for extra in &scenario.extra_exits {
        let id = ExitId(extra.id);
        if model.exit(id).is_some() {
            return Err(ScenarioError::Validation(vec![format!(
                "extra exit id {} already exists in the layout",
                extra.id
            )]));
        }
        let position = Point { x: extra.position[0], y: extra.position[1] };
        if !canvas.contains(position) {
            return Err(ScenarioError::Validation(vec![format!(
                "extra exit {} at ({}, {}) lies outside the canvas",
                extra.id, position.x, position.y
            )]));
        }
        model.exits.push(ExitPoint { id, position });
    }
    model.exits.sort_by_key(|e| e.id);

    let population = match &scenario.population.file {
        Some(file) => {
            let path = base_dir.join(file);
            let text = read_file(&path)?;
            Population::load_json(text.as_bytes())?
        }
        None => {
            let mut spec = match &scenario.population.spec {
                Some(file) => PopulationSpec::from_toml(&read_file(&base_dir.join(file))?)?,
                None => PopulationSpec::default_spec(),
            };
            if let Some(target) = scenario.population.target_students {
                spec = spec.scaled_students(target);
            }
            generate_population(&spec, &model, &mut StubPersonaBackend)?
        }
    };

    let coordinators = match &scenario.coordinator_layout {
        CoordinatorLayoutRef::Named(name) if name == "none" => Vec::new(),
        CoordinatorLayoutRef::Named(_) => default_coordinator_layout(&model)?,
        CoordinatorLayoutRef::File { file } => {
            let coords = coordinators_from_toml(&read_file(&base_dir.join(file))?)?;
            validate_coordinators(&coords, &model)?;
            coords
        }
    };

    let threat_rect = scenario.threat.as_ref().map(ThreatSpec::as_rect);
    let offered =
        apply_threat_constraints(&model, Destination::enumerate(&model), threat_rect.as_ref())?;

    Ok(PreparedScenario {
        scenario: scenario.clone(),
        model,
        population,
        coordinators,
        offered,
        announcement: effective_announcement(scenario),
    })
}

/// Per-run knobs the caller may override without editing the scenario file.
#[derive(Debug, Clone, Default)]
pub struct RunOverrides {
    pub seed: Option<u64>,
    pub max_rounds: Option<u64>,
    pub save_dir: Option<PathBuf>,
    pub save_every: Option<u64>,
}

/// Assemble an engine instance from a prepared scenario.
pub fn build_simulation(
    prepared: PreparedScenario,
    backend: DecisionBackend,
    overrides: RunOverrides,
) -> Result<Simulation, ScenarioError> {
    let config = SimulationConfig {
        master_seed: overrides.seed.unwrap_or(prepared.scenario.seed),
        max_rounds: overrides
            .max_rounds
            .or(prepared.scenario.max_rounds)
            .unwrap_or(DEFAULT_MAX_ROUNDS),
        announcement: Some(prepared.announcement),
        save_every: overrides.save_every,
        save_dir: overrides.save_dir,
        ..SimulationConfig::default()
    };
    Ok(Simulation::new(
        prepared.model,
        prepared.population,
        prepared.coordinators,
        prepared.offered,
        backend,
        config,
    )?)
}

// ---------------------------------------------------------------------------
// Experiment matrix
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixVariant {
    pub name: String,
    /// Scenario file path, relative to the matrix file.
    pub scenario: String,
    /// Base seed for this variant; falls back to the scenario's own seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_fractions() -> Vec<f64> {
    vec![0.8]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentMatrix {
    pub version: u32,
    pub repetitions: u32,
    /// Evacuation fractions to report, e.g. 0.8 for the time at which 80%
    /// of agents have exited.
    #[serde(default = "default_fractions")]
    pub fractions: Vec<f64>,
    pub variants: Vec<MatrixVariant>,
}

impl ExperimentMatrix {
    pub fn from_toml(text: &str) -> Result<ExperimentMatrix, ScenarioError> {
        let matrix: ExperimentMatrix = toml::from_str(text)?;
        matrix.validate()?;
        Ok(matrix)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut problems = Vec::new();
        if self.version != MATRIX_SCHEMA_VERSION {
            problems.push(format!(
                "unsupported matrix version {} (supported: {MATRIX_SCHEMA_VERSION})",
                self.version
            ));
        }
        if self.repetitions == 0 {
            problems.push("repetitions must be at least 1".to_string());
        }
        if self.variants.is_empty() {
            problems.push("at least one variant is required".to_string());
        }
        if self.fractions.is_empty() {
            problems.push("at least one metric fraction is required".to_string());
        }
        for f in &self.fractions {
            if !(*f > 0.0 && *f <= 1.0) {
                problems.push(format!("metric fraction {f} outside (0, 1]"));
            }
        }
        let mut names = std::collections::BTreeSet::new();
        for v in &self.variants {
            if !names.insert(v.name.as_str()) {
                problems.push(format!("duplicate variant name \"{}\"", v.name));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Validation(problems))
        }
    }
}

pub fn load_matrix(path: &Path) -> Result<ExperimentMatrix, ScenarioError> {
    ExperimentMatrix::from_toml(&read_file(path)?)
}

/// One variant × repetition outcome. `evacuation_rounds` is keyed by the
/// fraction's display form ("0.8"); `None` means the fraction was never
/// reached before termination. A failed run records `error` and leaves the
/// measurements empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRow {
    pub variant: String,
    pub repetition: u32,
    pub seed: u64,
    pub rounds: u64,
    pub termination: Option<TerminationReason>,
    pub total_agents: u64,
    pub exited_total: u64,
    pub evacuation_rounds: BTreeMap<String, Option<u64>>,
    pub exit_utilization: BTreeMap<ExitId, u64>,
    pub influence_events: u64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixReport {
    pub version: u32,
    pub repetitions: u32,
    pub fractions: Vec<f64>,
    /// Rows sorted by the first fraction's evacuation round (unreached and
    /// failed runs last), then variant name, then repetition.
    pub rows: Vec<MatrixRow>,
}

pub fn fraction_key(fraction: f64) -> String {
    format!("{fraction}")
}

fn row_from_result(
    variant: &str,
    repetition: u32,
    seed: u64,
    fractions: &[f64],
    result: &RunResult,
) -> MatrixRow {
    let mut evacuation_rounds = BTreeMap::new();
    for f in fractions {
        let metric = metric_evacuation_time(&result.logs, result.total_agents, *f)
            .expect("matrix fractions are validated before running");
        evacuation_rounds.insert(fraction_key(*f), metric);
    }
    let last = result.logs.last();
    MatrixRow {
        variant: variant.to_string(),
        repetition,
        seed,
        rounds: result.rounds,
        termination: Some(result.termination),
        total_agents: result.total_agents,
        exited_total: result.exited_total,
        evacuation_rounds,
        exit_utilization: last.map(|log| log.exited_by_exit.clone()).unwrap_or_default(),
        influence_events: result
            .logs
            .iter()
            .map(|log| log.influence_events.len() as u64)
            .sum(),
        error: None,
    }
}

fn failed_row(variant: &str, repetition: u32, seed: u64, error: String) -> MatrixRow {
    MatrixRow {
        variant: variant.to_string(),
        repetition,
        seed,
        rounds: 0,
        termination: None,
        total_agents: 0,
        exited_total: 0,
        evacuation_rounds: BTreeMap::new(),
        exit_utilization: BTreeMap::new(),
        influence_events: 0,
        error: Some(error),
    }
}

fn run_one_cell(
    variant: &MatrixVariant,
    repetition: u32,
    fractions: &[f64],
    base_dir: &Path,
    make_policy: &(dyn Fn() -> DecisionBackend + Sync),
) -> MatrixRow {
    let attempt = || -> Result<(u64, RunResult), ScenarioError> {
        let scenario = load_scenario(&base_dir.join(&variant.scenario))?;
        let scenario_dir = base_dir
            .join(&variant.scenario)
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| base_dir.to_path_buf());
        let prepared = prepare(&scenario, &scenario_dir)?;
        let seed = variant.seed.unwrap_or(scenario.seed) + u64::from(repetition);
        let mut sim = build_simulation(
            prepared,
            make_policy(),
            RunOverrides { seed: Some(seed), ..RunOverrides::default() },
        )?;
        let result = sim.run()?;
        Ok((seed, result))
    };
    match attempt() {
        Ok((seed, result)) => {
            row_from_result(&variant.name, repetition, seed, fractions, &result)
        }
        Err(err) => failed_row(
            &variant.name,
            repetition,
            variant.seed.unwrap_or(0) + u64::from(repetition),
            err.to_string(),
        ),
    }
}

/// Run every variant × repetition cell, up to `jobs` in parallel, and return
/// the sorted report. With stub policies the report is deterministic: each
/// cell is an independent engine instance, so scheduling cannot leak between
/// runs. Individual failures become `error` rows; the matrix always
/// completes.
pub fn run_matrix(
    matrix: &ExperimentMatrix,
    base_dir: &Path,
    make_policy: &(dyn Fn() -> DecisionBackend + Sync),
    jobs: usize,
) -> Result<MatrixReport, ScenarioError> {
    matrix.validate()?;
    let mut tasks = VecDeque::new();
    for (vi, _) in matrix.variants.iter().enumerate() {
        for rep in 0..matrix.repetitions {
            tasks.push_back((tasks.len(), vi, rep));
        }
    }
    let total = tasks.len();
    let queue = Mutex::new(tasks);
    let rows: Mutex<Vec<Option<MatrixRow>>> = Mutex::new(vec![None; total]);
    let workers = jobs.max(1).min(total);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let Some((slot, vi, rep)) = queue.lock().unwrap().pop_front() else {
                    break;
                };
                let row = run_one_cell(
                    &matrix.variants[vi],
                    rep,
                    &matrix.fractions,
                    base_dir,
                    make_policy,
                );
                rows.lock().unwrap()[slot] = Some(row);
            });
        }
    });

    let mut rows: Vec<MatrixRow> = rows
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|row| row.expect("every matrix cell produces a row"))
        .collect();
    let primary = fraction_key(matrix.fractions[0]);
    rows.sort_by(|a, b| {
        let ka = a.evacuation_rounds.get(&primary).copied().flatten();
        let kb = b.evacuation_rounds.get(&primary).copied().flatten();
        // None (unreached or failed) sorts after any reached round.
        match (ka, kb) {
            (Some(x), Some(y)) => x.cmp(&y),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => std::cmp::Ordering::Equal,
        }
        .then_with(|| a.variant.cmp(&b.variant))
        .then_with(|| a.repetition.cmp(&b.repetition))
    });

    Ok(MatrixReport {
        version: MATRIX_SCHEMA_VERSION,
        repetitions: matrix.repetitions,
        fractions: matrix.fractions.clone(),
        rows,
    })
}

impl MatrixReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization is infallible")
    }

    /// Flat table for plotting. Exit-utilization columns cover the union of
    /// exits seen across all rows; metric columns are one per fraction.
    pub fn to_csv(&self) -> String {
        let mut exit_ids: Vec<ExitId> = Vec::new();
        for row in &self.rows {
            for id in row.exit_utilization.keys() {
                if !exit_ids.contains(id) {
                    exit_ids.push(*id);
                }
            }
        }
        exit_ids.sort();

        let mut out = String::new();
        out.push_str("variant,repetition,seed,rounds,termination,total_agents,exited_total");
        for f in &self.fractions {
            out.push_str(&format!(",evac_round_{}", fraction_key(*f)));
        }
        for id in &exit_ids {
            out.push_str(&format!(",exit_{}", id.0));
        }
        out.push_str(",influence_events,error\n");

        for row in &self.rows {
            let termination = match row.termination {
                Some(TerminationReason::AllExited) => "all_exited",
                Some(TerminationReason::RoundLimit) => "round_limit",
                None => "",
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{}",
                csv_field(&row.variant),
                row.repetition,
                row.seed,
                row.rounds,
                termination,
                row.total_agents,
                row.exited_total
            ));
            for f in &self.fractions {
                match row.evacuation_rounds.get(&fraction_key(*f)).copied().flatten() {
                    Some(round) => out.push_str(&format!(",{round}")),
                    None => out.push(','),
                }
            }
            for id in &exit_ids {
                let count = row.exit_utilization.get(id).copied().unwrap_or(0);
                out.push_str(&format!(",{count}"));
            }
            out.push_str(&format!(
                ",{},{}\n",
                row.influence_events,
                csv_field(row.error.as_deref().unwrap_or(""))
            ));
        }
        out
    }
}

/// Quote a CSV field only when it needs it.
fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
