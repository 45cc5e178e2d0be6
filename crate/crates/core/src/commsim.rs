//! Communication simulations: the misinterpretation pipeline (expose N agents
//! to M messages, score how far each interpretation drifts, generate extreme
//! responses past a threshold) and the propagation environment (scripted
//! information injection, spread/evacuate decisions, moderated vs unmoderated
//! diffusion to a random 70% sample).
//!
//! Both share [`CommAgent`] and run fully offline against stub backends; a
//! live backend implements the same traits.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::MasterSeed;

/// Verbatim moderation prefix attached to diffused content when moderation
/// is on. Byte-exact; tests and downstream parsers rely on it.
pub const WARNING_PREFIX: &str = "WARNING: This piece of content might contain misinformation";

/// Score above which an extreme response is generated. Configurable per
/// call; this is only the conventional default.
pub const DEFAULT_EXTREME_THRESHOLD: u8 = 60;

/// Fraction of all agents sampled as recipients of one diffusion event.
pub const DIFFUSION_FRACTION: f64 = 0.7;

pub const SCRIPT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CommError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed script file: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommState {
    Active,
    Inactive,
}

/// A participant in the communication simulations. The three history
/// channels are deliberately disjoint: decisions, actions, and incoming
/// updates never share a transcript.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommAgent {
    pub name: String,
    pub persona: String,
    /// 0..=100 tendency to read danger into neutral content.
    pub misinterpretation_propensity: u8,
    pub state: CommState,
    /// Accumulated knowledge from section feedback; survives section resets.
    pub rewards: Vec<String>,
    pub decision_history: Vec<String>,
    pub action_history: Vec<String>,
    pub update_history: Vec<String>,
}

impl CommAgent {
    pub fn new(name: &str, persona: &str, misinterpretation_propensity: u8) -> CommAgent {
        CommAgent {
            name: name.to_string(),
            persona: persona.to_string(),
            misinterpretation_propensity,
            state: CommState::Active,
            rewards: Vec::new(),
            decision_history: Vec::new(),
            action_history: Vec::new(),
            update_history: Vec::new(),
        }
    }
}

/// Deterministic agent roster for offline runs: propensities sweep the 0..100
/// range so low- and high-drift behaviors both appear.
pub fn stub_agents(count: usize) -> Vec<CommAgent> {
    (0..count)
        .map(|i| {
            let propensity = ((i * 100) / count.max(1)) as u8;
            CommAgent::new(
                &format!("agent_{i}"),
                &format!("resident {i}, inclined to worry {propensity}/100"),
                propensity,
            )
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Misinterpretation pipeline
// ---------------------------------------------------------------------------

/// One grid cell: how agent `agent_index` read message `message_index`.
/// `failed` records a backend error for this pair; the grid still completes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MisinterpretationRecord {
    pub agent_index: usize,
    pub message_index: usize,
    pub interpretation: String,
    pub reaction: String,
    pub score: u8,
    pub extreme_reaction: Option<String>,
    pub failed: bool,
}

/// The four generation steps of the misinterpretation pipeline. Each call
/// may fail independently; failures are recorded per pair.
pub trait CommBackend {
    fn interpret(&mut self, agent: &CommAgent, message: &str) -> Result<String, String>;
    fn react(
        &mut self,
        agent: &CommAgent,
        message: &str,
        interpretation: &str,
    ) -> Result<String, String>;
    /// Independent assessor: 0 (faithful) to 100 (complete divergence).
    fn assess(
        &mut self,
        message: &str,
        interpretation: &str,
        reaction: &str,
    ) -> Result<u8, String>;
    fn extreme(
        &mut self,
        agent: &CommAgent,
        message: &str,
        reaction: &str,
    ) -> Result<String, String>;
}

fn tokens(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Token-set distance between two texts, scaled to 0..=100. Identical token
/// sets score 0; disjoint ones score 100. A deterministic stand-in for a
/// semantic assessor, not a model of one.
pub fn token_overlap_score(message: &str, interpretation: &str) -> u8 {
    let a = tokens(message);
    let b = tokens(interpretation);
    let union = a.union(&b).count();
    if union == 0 {
        return 0;
    }
    let intersection = a.intersection(&b).count();
    (100.0 * (1.0 - intersection as f64 / union as f64)).round() as u8
}

/// Offline backend. Low-propensity agents echo the message (score 0 under
/// the token scorer); high-propensity agents embellish it with alarm.
#[derive(Default)]
pub struct StubCommBackend {
    score_override: Option<u8>,
    /// Fail `interpret` for any message containing this needle.
    fail_on: Option<String>,
}

impl StubCommBackend {
    /// Force every assessment to `score`, bypassing the token scorer.
    pub fn with_score_override(score: u8) -> StubCommBackend {
        StubCommBackend { score_override: Some(score), fail_on: None }
    }

    /// Simulate backend outages for messages containing `needle`.
    pub fn with_interpret_failure(needle: &str) -> StubCommBackend {
        StubCommBackend { score_override: None, fail_on: Some(needle.to_string()) }
    }
}

impl CommBackend for StubCommBackend {
    fn interpret(&mut self, agent: &CommAgent, message: &str) -> Result<String, String> {
        if let Some(needle) = &self.fail_on {
            if message.contains(needle.as_str()) {
                return Err(format!("interpret backend unavailable for {}", agent.name));
            }
        }
        if agent.misinterpretation_propensity <= 50 {
            Ok(message.to_string())
        } else {
            Ok(format!("{message} This sounds dangerous and alarming."))
        }
    }

    fn react(
        &mut self,
        agent: &CommAgent,
        _message: &str,
        interpretation: &str,
    ) -> Result<String, String> {
        Ok(format!("{} responds: {}", agent.name, interpretation))
    }

    fn assess(
        &mut self,
        message: &str,
        interpretation: &str,
        _reaction: &str,
    ) -> Result<u8, String> {
        match self.score_override {
            Some(score) => Ok(score),
            None => Ok(token_overlap_score(message, interpretation)),
        }
    }

    fn extreme(
        &mut self,
        agent: &CommAgent,
        _message: &str,
        reaction: &str,
    ) -> Result<String, String> {
        Ok(format!("{} escalates drastically: {}", agent.name, reaction))
    }
}

/// Expose every agent to every message: interpret, react, score, and
/// generate an extreme response iff the score strictly exceeds `threshold`.
/// Returns the full N×M grid in agent-major order; per-pair backend failures
/// become `failed` records rather than aborting.
pub fn run_misinterpretation(
    agents: &[CommAgent],
    messages: &[String],
    threshold: u8,
    backend: &mut dyn CommBackend,
) -> Result<Vec<MisinterpretationRecord>, CommError> {
    let mut problems = Vec::new();
    if agents.is_empty() {
        problems.push("at least one agent is required".to_string());
    }
    if messages.is_empty() {
        problems.push("at least one message is required".to_string());
    }
    if threshold > 100 {
        problems.push(format!("threshold {threshold} outside 0..=100"));
    }
    if !problems.is_empty() {
        return Err(CommError::Validation(problems));
    }

    let mut records = Vec::with_capacity(agents.len() * messages.len());
    for (agent_index, agent) in agents.iter().enumerate() {
        for (message_index, message) in messages.iter().enumerate() {
            let outcome = (|| -> Result<MisinterpretationRecord, String> {
                let interpretation = backend.interpret(agent, message)?;
                let reaction = backend.react(agent, message, &interpretation)?;
                let score = backend.assess(message, &interpretation, &reaction)?;
                let extreme_reaction = if score > threshold {
                    Some(backend.extreme(agent, message, &reaction)?)
                } else {
                    None
                };
                Ok(MisinterpretationRecord {
                    agent_index,
                    message_index,
                    interpretation,
                    reaction,
                    score,
                    extreme_reaction,
                    failed: false,
                })
            })();
            records.push(outcome.unwrap_or_else(|err| MisinterpretationRecord {
                agent_index,
                message_index,
                interpretation: String::new(),
                reaction: err,
                score: 0,
                extreme_reaction: None,
                failed: true,
            }));
        }
    }
    Ok(records)
}

// ---------------------------------------------------------------------------
// Propagation system
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommDecision {
    Idle,
    Spread,
    Evacuate,
}

/// One piece of content in an agent's inbox for a round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InboxItem {
    /// Attribution text: a script source name or "agent_{i}".
    pub source: String,
    pub content: String,
}

/// One spread action: `content` delivered to a random 70% sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffusionEvent {
    pub section: usize,
    pub round: usize,
    pub source: usize,
    pub content: String,
    pub recipients: BTreeSet<usize>,
    pub moderated: bool,
}

/// Pluggable decide/compose behavior for propagation agents.
pub trait CommPolicy {
    fn decide(&mut self, agent: &CommAgent, inputs: &[InboxItem]) -> CommDecision;

    /// Content an agent spreads; default forwards the first input verbatim.
    fn compose(&mut self, _agent: &CommAgent, inputs: &[InboxItem]) -> String {
        inputs.first().map(|i| i.content.clone()).unwrap_or_default()
    }
}

/// Never acts; outcomes are determined purely by the script.
pub struct AlwaysIdle;

impl CommPolicy for AlwaysIdle {
    fn decide(&mut self, _agent: &CommAgent, _inputs: &[InboxItem]) -> CommDecision {
        CommDecision::Idle
    }
}

/// Spreads whenever any input contains the needle.
pub struct SpreadOnContains(pub String);

impl CommPolicy for SpreadOnContains {
    fn decide(&mut self, _agent: &CommAgent, inputs: &[InboxItem]) -> CommDecision {
        if inputs.iter().any(|i| i.content.contains(self.0.as_str())) {
            CommDecision::Spread
        } else {
            CommDecision::Idle
        }
    }
}

/// Evacuates whenever any input contains the needle.
pub struct EvacuateOnContains(pub String);

impl CommPolicy for EvacuateOnContains {
    fn decide(&mut self, _agent: &CommAgent, inputs: &[InboxItem]) -> CommDecision {
        if inputs.iter().any(|i| i.content.contains(self.0.as_str())) {
            CommDecision::Evacuate
        } else {
            CommDecision::Idle
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RecipientSpec {
    /// The literal string "all".
    All(String),
    List(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Injection {
    pub recipients: RecipientSpec,
    /// Attribution shown to recipients, e.g. "city council".
    pub source: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ScriptRound {
    #[serde(default)]
    pub injections: Vec<Injection>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptSection {
    pub name: String,
    /// Outcome feedback appended to every agent's rewards at section end.
    pub feedback: String,
    pub rounds: Vec<ScriptRound>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioScript {
    pub version: u32,
    pub sections: Vec<ScriptSection>,
}

impl ScenarioScript {
    pub fn from_toml(text: &str) -> Result<ScenarioScript, CommError> {
        let script: ScenarioScript = toml::from_str(text)?;
        script.validate()?;
        Ok(script)
    }

    pub fn validate(&self) -> Result<(), CommError> {
        let mut problems = Vec::new();
        if self.version != SCRIPT_SCHEMA_VERSION {
            problems.push(format!(
                "unsupported script version {} (supported: {SCRIPT_SCHEMA_VERSION})",
                self.version
            ));
        }
        if self.sections.is_empty() {
            problems.push("scripts need at least one section".to_string());
        }
        for section in &self.sections {
            if section.rounds.is_empty() {
                problems.push(format!("section \"{}\" has no rounds", section.name));
            }
            for round in &section.rounds {
                for injection in &round.injections {
                    if let RecipientSpec::All(word) = &injection.recipients {
                        if word != "all" {
                            problems.push(format!(
                                "recipients must be \"all\" or an index list, got \"{word}\""
                            ));
                        }
                    }
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CommError::Validation(problems))
        }
    }
}

pub fn load_script(path: &Path) -> Result<ScenarioScript, CommError> {
    let text = std::fs::read_to_string(path).map_err(|source| CommError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ScenarioScript::from_toml(&text)
}

/// Uniform sample of `floor(0.7 × total)` distinct recipients from all agent
/// indices except `source`. INACTIVE agents stay in the denominator and may
/// be sampled; they simply never act on what they receive.
pub fn sample_recipients<R: Rng>(rng: &mut R, total: usize, source: usize) -> BTreeSet<usize> {
    let k = (DIFFUSION_FRACTION * total as f64).floor() as usize;
    let candidates: Vec<usize> = (0..total).filter(|i| *i != source).collect();
    sample(rng, candidates.len(), k)
        .into_iter()
        .map(|i| candidates[i])
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub round: usize,
    pub agent: usize,
    pub decision: CommDecision,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionOutcome {
    pub name: String,
    pub decisions: Vec<DecisionRecord>,
    /// Agents that went INACTIVE during this section.
    pub evacuated: BTreeSet<usize>,
    pub diffusion_count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropagationOutcome {
    pub sections: Vec<SectionOutcome>,
    pub events: Vec<DiffusionEvent>,
}

impl PropagationOutcome {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("outcome serialization is infallible")
    }
}

/// Run the scripted propagation environment.
///
/// Each round merges scripted injections with the previous round's
/// diffusions, lets every ACTIVE agent with inputs decide, and applies
/// actions in agent order: SPREAD composes content (prefixed verbatim with
/// [`WARNING_PREFIX`] when `moderated`) and delivers it next round to a
/// seeded 70% sample; EVACUATE turns the agent INACTIVE for the rest of the
/// section. Diffusions spawned in a section's final round are logged but
/// never delivered — sections do not bleed into each other. Between
/// sections, feedback lands in every agent's rewards, histories clear, and
/// all states reset to ACTIVE.
pub fn run_propagation(
    script: &ScenarioScript,
    agents: &mut [CommAgent],
    moderated: bool,
    policy: &mut dyn CommPolicy,
    seed: u64,
) -> Result<PropagationOutcome, CommError> {
    script.validate()?;
    if agents.is_empty() {
        return Err(CommError::Validation(vec![
            "propagation needs at least one agent".to_string(),
        ]));
    }
    let total = agents.len();
    for (si, section) in script.sections.iter().enumerate() {
        for (ri, round) in section.rounds.iter().enumerate() {
            for injection in &round.injections {
                if let RecipientSpec::List(list) = &injection.recipients {
                    for idx in list {
                        if *idx >= total {
                            return Err(CommError::Validation(vec![format!(
                                "section {si} round {ri}: recipient {idx} out of range (population {total})"
                            )]));
                        }
                    }
                }
            }
        }
    }

    let master = MasterSeed(seed);
    let mut sections = Vec::new();
    let mut events: Vec<DiffusionEvent> = Vec::new();

    for (si, section) in script.sections.iter().enumerate() {
        let mut decisions = Vec::new();
        let mut evacuated = BTreeSet::new();
        let mut diffusion_count = 0u64;
        // Diffusions waiting to be delivered at the start of the next round.
        let mut pending: Vec<DiffusionEvent> = Vec::new();

        for (ri, round) in section.rounds.iter().enumerate() {
            // Build inboxes: last round's diffusions, then this round's
            // script injections.
            let mut inboxes: Vec<Vec<InboxItem>> = vec![Vec::new(); total];
            for event in pending.drain(..) {
                for recipient in &event.recipients {
                    inboxes[*recipient].push(InboxItem {
                        source: format!("agent_{}", event.source),
                        content: event.content.clone(),
                    });
                }
            }
            for injection in &round.injections {
                let targets: Vec<usize> = match &injection.recipients {
                    RecipientSpec::All(_) => (0..total).collect(),
                    RecipientSpec::List(list) => list.clone(),
                };
                for idx in targets {
                    inboxes[idx].push(InboxItem {
                        source: injection.source.clone(),
                        content: injection.content.clone(),
                    });
                }
            }

            // Update phase: receiving is recorded even for INACTIVE agents;
            // they keep their memories, they just no longer act.
            for (idx, inbox) in inboxes.iter().enumerate() {
                for item in inbox {
                    agents[idx]
                        .update_history
                        .push(format!("round {ri}: from {}: {}", item.source, item.content));
                }
            }

            // Decide phase: concurrent semantics — every decision sees the
            // same pre-round state, so a serial loop is equivalent.
            let mut round_decisions: Vec<(usize, CommDecision)> = Vec::new();
            for idx in 0..total {
                if agents[idx].state == CommState::Inactive || inboxes[idx].is_empty() {
                    continue;
                }
                let decision = policy.decide(&agents[idx], &inboxes[idx]);
                agents[idx]
                    .decision_history
                    .push(format!("round {ri}: {decision:?}"));
                decisions.push(DecisionRecord { round: ri, agent: idx, decision });
                round_decisions.push((idx, decision));
            }

            // Act phase, in agent order.
            for (idx, decision) in round_decisions {
                match decision {
                    CommDecision::Idle => {
                        agents[idx].action_history.push(format!("round {ri}: idle"));
                    }
                    CommDecision::Spread => {
                        let mut content = policy.compose(&agents[idx], &inboxes[idx]);
                        if moderated {
                            content = format!("{WARNING_PREFIX}. {content}");
                        }
                        let mut rng =
                            master.stream(&format!("propagation/{si}/{ri}/{idx}"));
                        let recipients = sample_recipients(&mut rng, total, idx);
                        agents[idx].action_history.push(format!(
                            "round {ri}: spread to {} agents",
                            recipients.len()
                        ));
                        let event = DiffusionEvent {
                            section: si,
                            round: ri,
                            source: idx,
                            content,
                            recipients,
                            moderated,
                        };
                        diffusion_count += 1;
                        pending.push(event.clone());
                        events.push(event);
                    }
                    CommDecision::Evacuate => {
                        agents[idx].state = CommState::Inactive;
                        agents[idx].action_history.push(format!("round {ri}: evacuate"));
                        evacuated.insert(idx);
                    }
                }
            }
        }

        // Section boundary: feedback becomes knowledge, transcripts clear,
        // everyone returns for the next section.
        for agent in agents.iter_mut() {
            agent.rewards.push(section.feedback.clone());
            agent.decision_history.clear();
            agent.action_history.clear();
            agent.update_history.clear();
            agent.state = CommState::Active;
        }

        sections.push(SectionOutcome {
            name: section.name.clone(),
            decisions,
            evacuated,
            diffusion_count,
        });
    }

    Ok(PropagationOutcome { sections, events })
}
