//! The round-based execution loop: group resume, coordinator influence,
//! concurrent decisions applied in agent-id order, movement with density
//! effects, logging, intermediate saves, and termination.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{Agent, AgentCategory, AgentId, AgentState, Destination, GroupIndex, TransitionEvent};
use crate::context::{build_context, render_context_text, ContextOptions};
use crate::coordination::{
    check_influence, reset_influenced_groups, resume_groups, validate_coordinators, Coordinator,
    GroupTracker, InfluenceEvent,
};
use crate::decisions::{
    decide_batch_sync, ChatMessage, DecisionFailure, DecisionPolicy, DecisionProtocol,
    DecisionRequest, DecisionResponse,
};
use crate::movement::{adjusted_speed, check_arrival, neighbor_counts, step_position, SpeedParams, ARRIVAL_TOLERANCE};
use crate::population::Population;
use crate::rng::MasterSeed;
use crate::stadium::StadiumModel;

pub const ROUND_LOG_SCHEMA_VERSION: u32 = 1;
pub const SNAPSHOT_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_MAX_ROUNDS: u64 = 1000;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("configuration invalid: {0}")]
    Config(String),
    #[error("evacuation fraction must be in (0, 1], got {0}")]
    BadFraction(f64),
    #[error(transparent)]
    Context(#[from] crate::context::ContextError),
    #[error(transparent)]
    Destination(#[from] crate::agents::DestinationError),
    #[error("state transition rejected: {0}")]
    Transition(#[from] crate::agents::TransitionError),
    #[error("group tracker invariant violated: {0}")]
    Tracker(String),
    #[error("snapshot version {0} unsupported (expected {SNAPSHOT_SCHEMA_VERSION})")]
    SnapshotVersion(u32),
    #[error("i/o failure at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization failure: {0}")]
    Serde(#[from] serde_json::Error),
}

// ---------------------------------------------------------------------------
// decision backends
// ---------------------------------------------------------------------------

/// Aggregate transport statistics for one round's batch. `retried` is
/// deterministic under deterministic failure plans; scheduling-dependent
/// numbers (peak in-flight) stay out of round logs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BatchStats {
    pub retried: u64,
    pub attempts: u64,
    pub peak_in_flight: usize,
}

/// Where decisions come from: an in-process deterministic policy (serial,
/// wasm-safe) or a concurrent executor over an async decider.
pub enum DecisionBackend {
    Policy(Box<dyn DecisionPolicy>),
    #[cfg(feature = "native")]
    Executor(Box<dyn BatchRunner>),
}

#[cfg(feature = "native")]
pub trait BatchRunner: Send {
    fn run_batch(
        &mut self,
        requests: Vec<DecisionRequest>,
    ) -> (Vec<crate::decisions::RawOutcome>, crate::decisions::exec::BatchTelemetry);
}

#[cfg(feature = "native")]
impl<D: crate::decisions::exec::Decider + 'static> BatchRunner
    for crate::decisions::exec::Executor<D>
{
    fn run_batch(
        &mut self,
        requests: Vec<DecisionRequest>,
    ) -> (Vec<crate::decisions::RawOutcome>, crate::decisions::exec::BatchTelemetry) {
        crate::decisions::exec::Executor::run_batch(self, requests)
    }
}

impl DecisionBackend {
    pub fn policy(policy: impl DecisionPolicy + 'static) -> DecisionBackend {
        DecisionBackend::Policy(Box::new(policy))
    }

    fn run(
        &mut self,
        requests: &[DecisionRequest],
    ) -> (Vec<(AgentId, Result<DecisionResponse, DecisionFailure>)>, BatchStats) {
        match self {
            DecisionBackend::Policy(policy) => {
                let outcomes = decide_batch_sync(policy.as_ref(), requests);
                let stats = BatchStats {
                    retried: 0,
                    attempts: requests.len() as u64,
                    peak_in_flight: usize::from(!requests.is_empty()),
                };
                (outcomes, stats)
            }
            #[cfg(feature = "native")]
            DecisionBackend::Executor(runner) => {
                let (raw, telemetry) = runner.run_batch(requests.to_vec());
                let stats = BatchStats {
                    retried: raw.iter().map(|o| u64::from(o.attempts.saturating_sub(1))).sum(),
                    attempts: telemetry.attempts_total,
                    peak_in_flight: telemetry.peak_in_flight,
                };
                (crate::decisions::parse_outcomes(requests, raw), stats)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// round log
// ---------------------------------------------------------------------------

fn quantize(v: f64) -> f64 {
    (v * 10.0).round() / 10.0
}

/// Per-agent situation at the end of a round. Positions are quantized to
/// 0.1 px in logs (snapshots keep exact coordinates).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRoundRecord {
    pub x: f64,
    pub y: f64,
    pub state: AgentState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub destination: Option<Destination>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub decided: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub destination: Option<Destination>,
    pub message_sent: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestStats {
    pub issued: u64,
    pub decided: u64,
    pub failed: u64,
    pub retried: u64,
}

/// Word positions of the engine's rng streams, for auditability of
/// deterministic replays. Stored as strings (the positions are 128-bit).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngCheckpoint {
    pub influence: String,
    pub destinations: String,
}

/// One line of the run's JSONL log. All maps are ordered so serialization
/// is byte-deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub version: u32,
    pub round: u64,
    pub exited_total: u64,
    /// Cumulative exit counts keyed by exit id.
    pub exited_by_exit: BTreeMap<crate::stadium::ExitId, u64>,
    pub agents: BTreeMap<AgentId, AgentRoundRecord>,
    pub resumed: Vec<AgentId>,
    pub influence_events: Vec<InfluenceEvent>,
    pub decisions: BTreeMap<AgentId, DecisionRecord>,
    pub messages: Vec<ChatMessage>,
    pub request_stats: RequestStats,
    pub rng_checkpoint: RngCheckpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    AllExited,
    RoundLimit,
}

/// Scheduling-dependent aggregate numbers; excluded from canonical logs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunTelemetry {
    pub attempts_total: u64,
    pub retried_total: u64,
    pub peak_in_flight: usize,
}

#[derive(Debug, Serialize)]
pub struct RunResult {
    pub termination: TerminationReason,
    pub rounds: u64,
    pub total_agents: u64,
    pub exited_total: u64,
    pub telemetry: RunTelemetry,
    #[serde(skip)]
    pub logs: Vec<RoundLog>,
}

// ---------------------------------------------------------------------------
// snapshots
// ---------------------------------------------------------------------------

/// Full resumable simulation state, written every `save_every` rounds so a
/// crashed run loses at most that many rounds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Snapshot {
    pub version: u32,
    pub round: u64,
    pub master_seed: u64,
    pub exited_total: u64,
    pub exited_by_exit: BTreeMap<crate::stadium::ExitId, u64>,
    pub agents: Vec<Agent>,
    pub groups: Vec<crate::population::SocialGroup>,
    pub tracker: GroupTracker,
    pub chat: BTreeMap<GroupIndex, Vec<ChatMessage>>,
    pub influence_rng: ChaCha8Rng,
    pub destination_rng: ChaCha8Rng,
}

// ---------------------------------------------------------------------------
// simulation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub master_seed: u64,
    pub max_rounds: u64,
    pub arrival_tolerance: f64,
    pub speed: SpeedParams,
    pub nearby_agent_cap: usize,
    pub announcement: Option<String>,
    /// Rounds between intermediate snapshot saves (requires `save_dir`).
    pub save_every: Option<u64>,
    #[serde(skip)]
    pub save_dir: Option<PathBuf>,
}

impl Default for SimulationConfig {
    fn default() -> SimulationConfig {
        SimulationConfig {
            master_seed: 0,
            max_rounds: DEFAULT_MAX_ROUNDS,
            arrival_tolerance: ARRIVAL_TOLERANCE,
            speed: SpeedParams::default(),
            nearby_agent_cap: crate::context::DEFAULT_NEARBY_AGENT_CAP,
            announcement: None,
            save_every: None,
            save_dir: None,
        }
    }
}

pub struct Simulation {
    model: StadiumModel,
    obstacles: Vec<crate::geometry::Rect>,
    agents: Vec<Agent>,
    groups: Vec<crate::population::SocialGroup>,
    coordinators: Vec<Coordinator>,
    /// Destinations agents may choose, already threat-filtered.
    offered: Vec<Destination>,
    backend: DecisionBackend,
    config: SimulationConfig,
    context_options: ContextOptions,
    tracker: GroupTracker,
    chat: BTreeMap<GroupIndex, Vec<ChatMessage>>,
    round: u64,
    exited_total: u64,
    exited_by_exit: BTreeMap<crate::stadium::ExitId, u64>,
    influence_rng: ChaCha8Rng,
    destination_rng: ChaCha8Rng,
    telemetry: RunTelemetry,
}

impl Simulation {
    pub fn new(
        model: StadiumModel,
        population: Population,
        coordinators: Vec<Coordinator>,
        offered: Vec<Destination>,
        backend: DecisionBackend,
        config: SimulationConfig,
    ) -> Result<Simulation, EngineError> {
        if config.max_rounds < 1 {
            return Err(EngineError::Config("max_rounds must be at least 1".into()));
        }
        if !offered.iter().any(|d| d.is_exit()) {
            return Err(EngineError::Config(
                "offered destinations must include at least one exit".into(),
            ));
        }
        config
            .speed
            .validate()
            .map_err(|e| EngineError::Config(e.to_string()))?;
        validate_coordinators(&coordinators, &model)
            .map_err(|e| EngineError::Config(e.to_string()))?;
        for (i, agent) in population.agents.iter().enumerate() {
            if agent.id.0 as usize != i {
                return Err(EngineError::Config(format!(
                    "agent ids must be dense and ordered; index {i} holds {}",
                    agent.id
                )));
            }
        }
        let seed = MasterSeed(config.master_seed);
        let context_options = ContextOptions {
            nearby_agent_cap: config.nearby_agent_cap,
            ..ContextOptions::default()
        };
        Ok(Simulation {
            obstacles: model.obstacles(),
            model,
            agents: population.agents,
            groups: population.groups,
            coordinators,
            offered,
            backend,
            context_options,
            tracker: GroupTracker::new(),
            chat: BTreeMap::new(),
            round: 0,
            exited_total: 0,
            exited_by_exit: BTreeMap::new(),
            influence_rng: seed.stream("influence"),
            destination_rng: seed.stream("destinations"),
            telemetry: RunTelemetry::default(),
            config,
        })
    }

    /// Rebuild a simulation from an intermediate snapshot; the continuation
    /// replays exactly as the original run would have.
    pub fn from_snapshot(
        model: StadiumModel,
        snapshot: Snapshot,
        coordinators: Vec<Coordinator>,
        offered: Vec<Destination>,
        backend: DecisionBackend,
        mut config: SimulationConfig,
    ) -> Result<Simulation, EngineError> {
        if snapshot.version != SNAPSHOT_SCHEMA_VERSION {
            return Err(EngineError::SnapshotVersion(snapshot.version));
        }
        config.master_seed = snapshot.master_seed;
        let mut sim = Simulation::new(
            model,
            Population { agents: snapshot.agents, groups: snapshot.groups },
            coordinators,
            offered,
            backend,
            config,
        )?;
        sim.round = snapshot.round;
        sim.exited_total = snapshot.exited_total;
        sim.exited_by_exit = snapshot.exited_by_exit;
        sim.tracker = snapshot.tracker;
        sim.chat = snapshot.chat;
        sim.influence_rng = snapshot.influence_rng;
        sim.destination_rng = snapshot.destination_rng;
        Ok(sim)
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn model(&self) -> &StadiumModel {
        &self.model
    }

    pub fn coordinators(&self) -> &[Coordinator] {
        &self.coordinators
    }

    pub fn exited_total(&self) -> u64 {
        self.exited_total
    }

    pub fn total_agents(&self) -> u64 {
        self.agents.len() as u64
    }

    pub fn is_finished(&self) -> bool {
        self.exited_total == self.total_agents() || self.round >= self.config.max_rounds
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            version: SNAPSHOT_SCHEMA_VERSION,
            round: self.round,
            master_seed: self.config.master_seed,
            exited_total: self.exited_total,
            exited_by_exit: self.exited_by_exit.clone(),
            agents: self.agents.clone(),
            groups: self.groups.clone(),
            tracker: self.tracker.clone(),
            chat: self.chat.clone(),
            influence_rng: self.influence_rng.clone(),
            destination_rng: self.destination_rng.clone(),
        }
    }

    /// Context for a single live agent against the current state — used by
    /// inspection tooling; the round loop builds the same contexts itself.
    pub fn agent_context(&self, agent: AgentId) -> Result<crate::context::EnvContext, EngineError> {
        Ok(build_context(
            &self.model,
            &self.agents,
            &self.coordinators,
            agent,
            self.config.announcement.as_deref(),
            &self.context_options,
        )?)
    }

    /// Execute one full round (phases 1-5) and return its log entry.
    pub fn step_round(&mut self) -> Result<RoundLog, EngineError> {
        self.round += 1;
        let round = self.round;

        // Phase 1: groups whose members have all arrived resume discussing.
        let resumed = resume_groups(&mut self.tracker, &mut self.agents);

        // Phase 2: coordinator influence, cascading resets to whole groups.
        let (influence_events, influenced) =
            check_influence(&self.agents, &self.coordinators, &mut self.influence_rng);
        reset_influenced_groups(&mut self.agents, &self.groups, &influenced, &mut self.tracker);

        // Agents moving *before* decisions are the ones that travel this
        // round; agents deciding this round start moving next round (but may
        // already be within arrival tolerance).
        let movers: Vec<AgentId> = self
            .agents
            .iter()
            .filter(|a| a.state == AgentState::Moving)
            .map(|a| a.id)
            .collect();

        // Phase 3: all DISCUSSING agents decide concurrently against the
        // same snapshot; responses apply in agent-id order.
        let mut requests: Vec<DecisionRequest> = Vec::new();
        for agent in self.agents.iter().filter(|a| a.state == AgentState::Discussing) {
            let protocol = if agent.category == AgentCategory::StudentAlone {
                DecisionProtocol::AloneDecision
            } else {
                DecisionProtocol::GroupDiscussion
            };
            let context = build_context(
                &self.model,
                &self.agents,
                &self.coordinators,
                agent.id,
                self.config.announcement.as_deref(),
                &self.context_options,
            )?;
            requests.push(DecisionRequest {
                agent: agent.id,
                persona: agent.persona.clone(),
                category: agent.category,
                protocol,
                rounds_in_discussion: u64::from(agent.rounds_in_discussion),
                context_text: render_context_text(&context),
                context,
                group_chat_history: self.chat.get(&agent.group).cloned().unwrap_or_default(),
                destinations: self.offered.clone(),
            });
        }

        let mut decisions: BTreeMap<AgentId, DecisionRecord> = BTreeMap::new();
        let mut messages: Vec<ChatMessage> = Vec::new();
        let mut stats = RequestStats { issued: requests.len() as u64, ..RequestStats::default() };
        if !requests.is_empty() {
            let (outcomes, batch) = self.backend.run(&requests);
            stats.retried = batch.retried;
            self.telemetry.attempts_total += batch.attempts;
            self.telemetry.retried_total += batch.retried;
            self.telemetry.peak_in_flight = self.telemetry.peak_in_flight.max(batch.peak_in_flight);

            for (agent_id, outcome) in outcomes {
                let agent = &mut self.agents[agent_id.0 as usize];
                match outcome {
                    Ok(resp) => {
                        if let Some(text) = resp.message.clone() {
                            let msg = ChatMessage { round, agent: agent_id, text };
                            self.chat.entry(agent.group).or_default().push(msg.clone());
                            messages.push(msg);
                        }
                        if resp.decided {
                            let destination =
                                resp.destination.expect("decided implies destination");
                            let target = crate::agents::resolve_destination(
                                &self.model,
                                destination,
                                &mut self.destination_rng,
                            )?;
                            agent.transition(TransitionEvent::Decided { destination, target })?;
                            agent.decision_history.push((round, destination));
                            self.tracker.record_choice(agent.group, destination, agent_id);
                            stats.decided += 1;
                        } else {
                            agent.rounds_in_discussion += 1;
                        }
                        decisions.insert(
                            agent_id,
                            DecisionRecord {
                                decided: resp.decided,
                                destination: resp.destination,
                                message_sent: resp.message.is_some(),
                                failure: None,
                                raw: resp.raw,
                            },
                        );
                    }
                    Err(failure) => {
                        // Failed requests leave the agent DISCUSSING; it is
                        // simply asked again next round.
                        agent.rounds_in_discussion += 1;
                        stats.failed += 1;
                        decisions.insert(
                            agent_id,
                            DecisionRecord {
                                decided: false,
                                destination: None,
                                message_sent: false,
                                failure: Some(failure.to_string()),
                                raw: None,
                            },
                        );
                    }
                }
            }
        }

        // Phase 4: density over this round's movers, then movement and
        // arrival checks. Arrival also covers agents that just decided and
        // are already within tolerance of their target.
        let mover_positions: Vec<crate::geometry::Point> = movers
            .iter()
            .map(|id| self.agents[id.0 as usize].position)
            .collect();
        let densities = neighbor_counts(&mover_positions, self.config.speed.density_radius);
        for (idx, id) in movers.iter().enumerate() {
            let agent = &mut self.agents[id.0 as usize];
            let coordinator_near = self
                .coordinators
                .iter()
                .any(|c| agent.position.distance_to(c.position) <= c.influence_radius);
            let speed = adjusted_speed(
                agent.accessibility,
                densities[idx],
                coordinator_near,
                &self.config.speed,
            );
            let target = agent.target.expect("moving agents have targets");
            agent.position = step_position(
                self.model.canvas(),
                &self.obstacles,
                agent.position,
                target,
                speed,
            );
        }
        for agent in &mut self.agents {
            if let Some(event) = check_arrival(agent, self.config.arrival_tolerance) {
                let arrived_at = agent.destination.expect("arriving agents have destinations");
                agent.transition(event)?;
                match event {
                    TransitionEvent::ArrivedAtExit => {
                        self.exited_total += 1;
                        if let Destination::Exit(id) = arrived_at {
                            *self.exited_by_exit.entry(id).or_insert(0) += 1;
                        }
                    }
                    TransitionEvent::ArrivedAtRegion => {
                        self.tracker.record_arrival(agent.group, arrived_at, agent.id);
                    }
                    _ => unreachable!("check_arrival yields arrival events only"),
                }
            }
        }
        self.tracker
            .check_invariant()
            .map_err(EngineError::Tracker)?;

        // Phase 5: assemble the log entry.
        let mut agent_records = BTreeMap::new();
        for agent in self.agents.iter().filter(|a| a.state != AgentState::Exited) {
            agent_records.insert(
                agent.id,
                AgentRoundRecord {
                    x: quantize(agent.position.x),
                    y: quantize(agent.position.y),
                    state: agent.state,
                    destination: agent.destination,
                },
            );
        }
        Ok(RoundLog {
            version: ROUND_LOG_SCHEMA_VERSION,
            round,
            exited_total: self.exited_total,
            exited_by_exit: self.exited_by_exit.clone(),
            agents: agent_records,
            resumed,
            influence_events,
            decisions,
            messages,
            request_stats: stats,
            rng_checkpoint: RngCheckpoint {
                influence: self.influence_rng.get_word_pos().to_string(),
                destinations: self.destination_rng.get_word_pos().to_string(),
            },
        })
    }

    /// Run to termination, appending each round's log line to
    /// `rounds.jsonl` and saving snapshots when configured.
    pub fn run(&mut self) -> Result<RunResult, EngineError> {
        let mut logs = Vec::new();
        let mut sink = self.open_log_sink()?;
        while !self.is_finished() {
            let log = self.step_round()?;
            let alive = log.agents.len() as u64;
            debug_assert_eq!(
                alive + log.exited_total,
                self.total_agents(),
                "conservation violated in round {}",
                log.round
            );
            if let Some(out) = sink.as_mut() {
                let line = serde_json::to_string(&log)?;
                writeln_log(out, &line)?;
            }
            if let (Some(every), Some(dir)) = (self.config.save_every, &self.config.save_dir) {
                if every > 0 && self.round % every == 0 && !self.is_finished() {
                    let path = dir.join(format!("snapshot_round_{:06}.json", self.round));
                    write_json(&path, &self.snapshot())?;
                }
            }
            logs.push(log);
        }
        if let Some(dir) = &self.config.save_dir {
            write_json(&dir.join("snapshot_final.json"), &self.snapshot())?;
        }
        let termination = if self.exited_total == self.total_agents() {
            TerminationReason::AllExited
        } else {
            TerminationReason::RoundLimit
        };
        Ok(RunResult {
            termination,
            rounds: self.round,
            total_agents: self.total_agents(),
            exited_total: self.exited_total,
            telemetry: self.telemetry,
            logs,
        })
    }

    fn open_log_sink(&self) -> Result<Option<std::io::BufWriter<std::fs::File>>, EngineError> {
        let Some(dir) = &self.config.save_dir else {
            return Ok(None);
        };
        std::fs::create_dir_all(dir).map_err(|source| EngineError::Io {
            path: dir.clone(),
            source,
        })?;
        let path = dir.join("rounds.jsonl");
        let file = std::fs::File::create(&path)
            .map_err(|source| EngineError::Io { path: path.clone(), source })?;
        Ok(Some(std::io::BufWriter::new(file)))
    }
}

fn writeln_log(out: &mut std::io::BufWriter<std::fs::File>, line: &str) -> Result<(), EngineError> {
    writeln!(out, "{line}").map_err(|source| EngineError::Io {
        path: PathBuf::from("rounds.jsonl"),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &std::path::Path, value: &T) -> Result<(), EngineError> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).map_err(|source| EngineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Smallest round index at which at least `ceil(fraction × total)` agents
/// had exited; `None` when the run never got there.
pub fn metric_evacuation_time(
    logs: &[RoundLog],
    total_agents: u64,
    fraction: f64,
) -> Result<Option<u64>, EngineError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(EngineError::BadFraction(fraction));
    }
    let raw = fraction * total_agents as f64;
    // Snap near-integers before ceiling so 0.8 × 10 needs 8 agents, not 9.
    let snapped = raw.round();
    let need = if (raw - snapped).abs() < 1e-9 { snapped } else { raw.ceil() } as u64;
    Ok(logs.iter().find(|l| l.exited_total >= need).map(|l| l.round))
}
