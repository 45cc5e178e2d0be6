//! The pluggable decision layer: request/response types, the line-based
//! wire format with fuzzy destination matching, and deterministic stub
//! policies that let every spatial and coordination algorithm run offline.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentCategory, AgentId, Destination};
use crate::context::EnvContext;
use crate::population::Persona;

#[cfg(feature = "native")]
pub mod exec;

/// How a deciding agent is consulted: group members see and produce chat,
/// solo students pick a destination without social messaging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionProtocol {
    GroupDiscussion,
    AloneDecision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub round: u64,
    pub agent: AgentId,
    pub text: String,
}

/// Everything a decision policy sees for one agent in one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRequest {
    pub agent: AgentId,
    pub persona: Persona,
    pub category: AgentCategory,
    pub protocol: DecisionProtocol,
    /// Consecutive rounds this agent has spent DISCUSSING since it last
    /// entered the state.
    pub rounds_in_discussion: u64,
    pub context: EnvContext,
    /// Rendered context, exactly as a remote backend would receive it.
    pub context_text: String,
    /// Full ordered transcript of the agent's group, oldest first.
    pub group_chat_history: Vec<ChatMessage>,
    /// Destinations the agent may select this round (already filtered by
    /// any active threat constraints).
    pub destinations: Vec<Destination>,
}

/// Structured decision outcome. `decided` implies a destination; a message
/// is only meaningful under the group protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionResponse {
    pub decided: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub destination: Option<Destination>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    /// Original backend text when structured parsing could not resolve it;
    /// kept so round logs preserve what was actually said.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<String>,
}

impl DecisionResponse {
    pub fn undecided() -> DecisionResponse {
        DecisionResponse { decided: false, destination: None, message: None, raw: None }
    }
}

/// Transport-level failure for one request after all retries.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum DecisionFailure {
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("backend error after {attempts} attempt(s): {message}")]
    Backend { attempts: u32, message: String },
}

/// Backend tuning shared by the concurrent executor and the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    /// Upper bound on simultaneously outstanding requests.
    pub max_in_flight: usize,
    /// Optional request-rate ceiling, requests per second.
    pub requests_per_second: Option<f64>,
    /// Per-attempt timeout in seconds.
    pub timeout_secs: f64,
    /// Retries after the first attempt; exponential backoff between them.
    pub max_retries: u32,
    /// Base backoff delay in seconds (doubles per retry).
    pub retry_base_secs: f64,
    /// Remote endpoint URL; unused by in-process backends.
    pub endpoint: Option<String>,
    /// Remote model name; unused by in-process backends.
    pub model: Option<String>,
}

impl Default for BackendConfig {
    fn default() -> BackendConfig {
        BackendConfig {
            max_in_flight: 2000,
            requests_per_second: None,
            timeout_secs: 30.0,
            max_retries: 2,
            retry_base_secs: 0.1,
            endpoint: None,
            model: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum BackendConfigError {
    #[error("max_in_flight must be at least 1")]
    ZeroInFlight,
    #[error("timeout must be positive")]
    BadTimeout,
    #[error("requests_per_second must be positive when set")]
    BadRate,
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), BackendConfigError> {
        if self.max_in_flight == 0 {
            return Err(BackendConfigError::ZeroInFlight);
        }
        if !(self.timeout_secs > 0.0) {
            return Err(BackendConfigError::BadTimeout);
        }
        if let Some(r) = self.requests_per_second {
            if !(r > 0.0) {
                return Err(BackendConfigError::BadRate);
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// wire format
// ---------------------------------------------------------------------------

/// Lowercase, trim, collapse runs of whitespace, and fold underscores to
/// spaces so machine keys and human phrases normalize alike.
pub fn normalize(text: &str) -> String {
    text.to_lowercase()
        .replace('_', " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Resolve free text to one of the offered destinations.
///
/// Tier 1: exact match on the normalized display label or machine key.
/// Tier 2: substring containment in either direction; accepted only when
/// exactly one destination matches (e.g. "track area" hits four regions and
/// is rejected as ambiguous).
pub fn match_destination(text: &str, offered: &[Destination]) -> Option<Destination> {
    let needle = normalize(text);
    if needle.is_empty() {
        return None;
    }
    for d in offered {
        if normalize(&d.label()) == needle || normalize(&d.key()) == needle {
            return Some(*d);
        }
    }
    let mut hit: Option<Destination> = None;
    for d in offered {
        let label = normalize(&d.label());
        let key = normalize(&d.key());
        let matched = label.contains(&needle)
            || needle.contains(&label)
            || key.contains(&needle)
            || needle.contains(&key);
        if matched {
            if hit.is_some_and(|h| h != *d) {
                return None; // ambiguous
            }
            hit = Some(*d);
        }
    }
    hit
}

/// Serialize a response into the flat key:value line format requested from
/// backends. Solo-protocol responses never carry a message.
pub fn render_response(resp: &DecisionResponse, protocol: DecisionProtocol) -> String {
    let mut out = format!("decided: {}\n", if resp.decided { "yes" } else { "no" });
    if let Some(d) = resp.destination {
        out.push_str(&format!("destination: {}\n", d.label()));
    }
    if protocol == DecisionProtocol::GroupDiscussion {
        if let Some(m) = &resp.message {
            out.push_str(&format!("message: {m}\n"));
        }
    }
    out
}

/// Parse backend text into a structured response. Parsing is total:
/// anything unresolvable degrades to `decided: false` with the raw text
/// preserved. Loose free text (no `decided:` line) is accepted when it
/// names exactly one offered destination.
pub fn parse_response(
    raw: &str,
    protocol: DecisionProtocol,
    offered: &[Destination],
) -> DecisionResponse {
    let mut decided_line: Option<bool> = None;
    let mut destination_line: Option<String> = None;
    let mut message: Option<String> = None;
    for line in raw.lines() {
        let Some((k, v)) = line.split_once(':') else { continue };
        let v = v.trim();
        match normalize(k).as_str() {
            "decided" | "decision" => {
                decided_line = match normalize(v).as_str() {
                    "yes" | "true" | "y" => Some(true),
                    "no" | "false" | "n" => Some(false),
                    _ => decided_line,
                }
            }
            "destination" => destination_line = Some(v.to_string()),
            "message" => {
                if !v.is_empty() {
                    message = Some(v.to_string());
                }
            }
            _ => {}
        }
    }
    if protocol == DecisionProtocol::AloneDecision {
        message = None;
    }

    let destination = destination_line
        .as_deref()
        .and_then(|text| match_destination(text, offered))
        // Free-text fallback: scan the whole payload when no structured
        // destination resolved.
        .or_else(|| {
            if decided_line == Some(false) {
                None
            } else {
                match_destination(raw, offered)
            }
        });

    match (decided_line, destination) {
        (Some(false), _) => DecisionResponse { decided: false, destination: None, message, raw: None },
        (_, Some(d)) => DecisionResponse { decided: true, destination: Some(d), message, raw: None },
        (_, None) => DecisionResponse {
            decided: false,
            destination: None,
            message,
            raw: Some(raw.to_string()),
        },
    }
}

// ---------------------------------------------------------------------------
// stub policies
// ---------------------------------------------------------------------------

/// A deterministic in-process decision source producing wire-format text.
/// Policies must tolerate concurrent calls unless [`is_serial`] says
/// otherwise; serial policies are only safe on the sequential backend path.
///
/// [`is_serial`]: DecisionPolicy::is_serial
pub trait DecisionPolicy: Send + Sync {
    fn name(&self) -> &str;
    fn decide(&self, request: &DecisionRequest) -> String;
    fn is_serial(&self) -> bool {
        false
    }
}

/// Picks the closest exit that is still on offer; canned message under the
/// group protocol.
pub struct NearestExit;

fn nearest_offered_exit(request: &DecisionRequest) -> Option<Destination> {
    request
        .context
        .exit_rankings
        .iter()
        .map(|r| Destination::Exit(r.exit.id))
        .find(|d| request.destinations.contains(d))
}

fn decided_toward(destination: Destination, request: &DecisionRequest) -> String {
    let resp = DecisionResponse {
        decided: true,
        destination: Some(destination),
        message: (request.protocol == DecisionProtocol::GroupDiscussion)
            .then(|| format!("Let's head to {}.", destination.label())),
        raw: None,
    };
    render_response(&resp, request.protocol)
}

impl DecisionPolicy for NearestExit {
    fn name(&self) -> &str {
        "nearest-exit"
    }
    fn decide(&self, request: &DecisionRequest) -> String {
        match nearest_offered_exit(request) {
            Some(d) => decided_toward(d, request),
            None => "decided: no\n".to_string(),
        }
    }
}

/// Follows a coordinator hint when present (and offered), otherwise behaves
/// like [`NearestExit`].
pub struct ObedientToCoordinator;

impl DecisionPolicy for ObedientToCoordinator {
    fn name(&self) -> &str {
        "obedient-to-coordinator"
    }
    fn decide(&self, request: &DecisionRequest) -> String {
        let hinted = request
            .context
            .coordinator_hint
            .map(|h| Destination::Exit(h.exit))
            .filter(|d| request.destinations.contains(d));
        match hinted.or_else(|| nearest_offered_exit(request)) {
            Some(d) => decided_toward(d, request),
            None => "decided: no\n".to_string(),
        }
    }
}

/// Keeps groups chatting for `k` rounds before committing to the nearest
/// exit — models prolonged discussion.
pub struct DelayK {
    pub k: u64,
}

impl DecisionPolicy for DelayK {
    fn name(&self) -> &str {
        "delay-k"
    }
    fn decide(&self, request: &DecisionRequest) -> String {
        if request.rounds_in_discussion < self.k {
            let resp = DecisionResponse {
                decided: false,
                destination: None,
                message: (request.protocol == DecisionProtocol::GroupDiscussion)
                    .then(|| "I'm not sure yet, let's talk it over.".to_string()),
                raw: None,
            };
            render_response(&resp, request.protocol)
        } else {
            match nearest_offered_exit(request) {
                Some(d) => decided_toward(d, request),
                None => "decided: no\n".to_string(),
            }
        }
    }
}

/// Replays canned raw responses per agent, in request order. Serial: the
/// per-agent cursor advances on every call, so concurrent use would replay
/// out of order.
pub struct ScriptedReplay {
    script: std::sync::Mutex<ScriptState>,
}

struct ScriptState {
    lines: std::collections::BTreeMap<AgentId, Vec<String>>,
    cursor: std::collections::BTreeMap<AgentId, usize>,
    /// Returned when an agent's script is exhausted or missing.
    fallback: String,
}

impl ScriptedReplay {
    pub fn new(lines: std::collections::BTreeMap<AgentId, Vec<String>>) -> ScriptedReplay {
        ScriptedReplay {
            script: std::sync::Mutex::new(ScriptState {
                lines,
                cursor: std::collections::BTreeMap::new(),
                fallback: "decided: no\n".to_string(),
            }),
        }
    }
}

impl DecisionPolicy for ScriptedReplay {
    fn name(&self) -> &str {
        "scripted-replay"
    }
    fn is_serial(&self) -> bool {
        true
    }
    fn decide(&self, request: &DecisionRequest) -> String {
        let mut state = self.script.lock().expect("script mutex");
        let idx = state.cursor.entry(request.agent).or_insert(0);
        let i = *idx;
        *idx += 1;
        state
            .lines
            .get(&request.agent)
            .and_then(|seq| seq.get(i))
            .cloned()
            .unwrap_or_else(|| state.fallback.clone())
    }
}

/// One request's transport result before parsing: the raw backend text (or
/// failure) plus how many attempts it took.
#[derive(Debug, Clone, PartialEq)]
pub struct RawOutcome {
    pub agent: AgentId,
    pub result: Result<String, DecisionFailure>,
    pub attempts: u32,
}

/// Parse raw outcomes against their originating requests. Both slices must
/// be in the same (agent-id) order.
pub fn parse_outcomes(
    requests: &[DecisionRequest],
    raw: Vec<RawOutcome>,
) -> Vec<(AgentId, Result<DecisionResponse, DecisionFailure>)> {
    debug_assert_eq!(requests.len(), raw.len());
    requests
        .iter()
        .zip(raw)
        .map(|(req, out)| {
            debug_assert_eq!(req.agent, out.agent);
            let parsed = out
                .result
                .map(|text| parse_response(&text, req.protocol, &req.destinations));
            (req.agent, parsed)
        })
        .collect()
}

/// Run a policy over a request batch sequentially, parsing each reply.
/// This is the deterministic engine path; outcomes keep request order
/// (callers pass requests in agent-id order).
pub fn decide_batch_sync(
    policy: &dyn DecisionPolicy,
    requests: &[DecisionRequest],
) -> Vec<(AgentId, Result<DecisionResponse, DecisionFailure>)> {
    let raw: Vec<RawOutcome> = requests
        .iter()
        .map(|req| RawOutcome {
            agent: req.agent,
            result: Ok(policy.decide(req)),
            attempts: 1,
        })
        .collect();
    parse_outcomes(requests, raw)
}

#[cfg(test)]
pub(crate) fn test_request(
    agent: u32,
    protocol: DecisionProtocol,
    position: crate::geometry::Point,
    model: &crate::stadium::StadiumModel,
) -> DecisionRequest {
    use crate::agents::Agent;
    let category = if protocol == DecisionProtocol::AloneDecision {
        AgentCategory::StudentAlone
    } else {
        AgentCategory::StudentWithFriendsInside
    };
    let agents = vec![Agent::new(
        AgentId(0),
        Persona::test_stub("T"),
        category,
        false,
        crate::agents::GroupIndex(0),
        position,
    )];
    let ctx = crate::context::build_context(
        model,
        &agents,
        &[],
        AgentId(0),
        None,
        &crate::context::ContextOptions::default(),
    )
    .unwrap();
    DecisionRequest {
        agent: AgentId(agent),
        persona: Persona::test_stub("T"),
        category,
        protocol,
        rounds_in_discussion: 0,
        context_text: crate::context::render_context_text(&ctx),
        context: ctx,
        group_chat_history: Vec::new(),
        destinations: Destination::enumerate(model),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use crate::stadium::{ExitId, RegionKind, StadiumModel};
    use proptest::prelude::*;

    fn offered() -> Vec<Destination> {
        Destination::enumerate(&StadiumModel::default_layout())
    }

    #[test]
    fn exact_and_key_forms_match() {
        let offered = offered();
        assert_eq!(
            match_destination("exit 3", &offered),
            Some(Destination::Exit(ExitId(3)))
        );
        assert_eq!(
            match_destination("  EXIT   3 ", &offered),
            Some(Destination::Exit(ExitId(3)))
        );
        assert_eq!(
            match_destination("north_track", &offered),
            Some(Destination::Region(RegionKind::NorthTrack))
        );
        assert_eq!(
            match_destination("South bleachers area", &offered),
            Some(Destination::Region(RegionKind::SouthBleachers))
        );
    }

    #[test]
    fn long_free_text_matches_via_substring() {
        let offered = offered();
        assert_eq!(
            match_destination("the north side of the stadium, track area", &offered),
            Some(Destination::Region(RegionKind::NorthTrack))
        );
    }

    #[test]
    fn ambiguous_text_is_rejected() {
        let offered = offered();
        assert_eq!(match_destination("track area", &offered), None);
        assert_eq!(match_destination("exit", &offered), None);
        assert_eq!(match_destination("", &offered), None);
    }

    #[test]
    fn excluded_destinations_cannot_match() {
        let all = offered();
        let filtered: Vec<Destination> = all
            .iter()
            .copied()
            .filter(|d| *d != Destination::Exit(ExitId(2)))
            .collect();
        assert_eq!(match_destination("exit 2", &filtered), None);
        let resp = parse_response(
            "decided: yes\ndestination: Exit 2\n",
            DecisionProtocol::GroupDiscussion,
            &filtered,
        );
        assert!(!resp.decided);
        assert!(resp.raw.is_some(), "unresolvable reply keeps raw text");
    }

    #[test]
    fn parse_structured_and_free_text() {
        let offered = offered();
        let resp = parse_response(
            "decided: yes\ndestination: exit 1\nmessage: follow me\n",
            DecisionProtocol::GroupDiscussion,
            &offered,
        );
        assert_eq!(
            resp,
            DecisionResponse {
                decided: true,
                destination: Some(Destination::Exit(ExitId(1))),
                message: Some("follow me".to_string()),
                raw: None,
            }
        );

        // No decided line, free text naming one destination.
        let free = parse_response(
            "I think we should go to the South bleachers area",
            DecisionProtocol::GroupDiscussion,
            &offered,
        );
        assert!(free.decided);
        assert_eq!(free.destination, Some(Destination::Region(RegionKind::SouthBleachers)));

        // Explicit no overrides any destination mention.
        let no = parse_response(
            "decided: no\ndestination: exit 1\nmessage: not yet\n",
            DecisionProtocol::GroupDiscussion,
            &offered,
        );
        assert!(!no.decided);
        assert_eq!(no.destination, None);
        assert_eq!(no.message.as_deref(), Some("not yet"));
    }

    #[test]
    fn alone_protocol_strips_messages() {
        let offered = offered();
        let resp = parse_response(
            "decided: yes\ndestination: exit 1\nmessage: chatty\n",
            DecisionProtocol::AloneDecision,
            &offered,
        );
        assert!(resp.decided);
        assert_eq!(resp.message, None);
    }

    proptest! {
        /// parse ∘ render is the identity on well-formed responses.
        #[test]
        fn wire_round_trip(
            idx in 0usize..12,
            decided in proptest::bool::ANY,
            msg in proptest::option::of("[ -~]{1,40}"),
            group in proptest::bool::ANY,
        ) {
            let offered = offered();
            let protocol = if group {
                DecisionProtocol::GroupDiscussion
            } else {
                DecisionProtocol::AloneDecision
            };
            // A message line whose value parses as empty after trim is not
            // representable; skip those inputs.
            let msg = msg.filter(|m| !m.trim().is_empty()).map(|m| m.trim().to_string());
            let resp = DecisionResponse {
                decided,
                destination: decided.then(|| offered[idx]),
                message: if group { msg } else { None },
                raw: None,
            };
            let wire = render_response(&resp, protocol);
            let back = parse_response(&wire, protocol, &offered);
            prop_assert_eq!(back.decided, resp.decided);
            prop_assert_eq!(back.destination, resp.destination);
            prop_assert_eq!(back.message, resp.message);
        }
    }

    #[test]
    fn nearest_exit_stub_picks_first_offered_ranking() {
        let model = StadiumModel::default_layout();
        // Near Exit 2 (top right).
        let req = test_request(
            0,
            DecisionProtocol::GroupDiscussion,
            Point::new(2300.0, 60.0),
            &model,
        );
        let out = decide_batch_sync(&NearestExit, &[req.clone()]);
        let resp = out[0].1.as_ref().unwrap();
        assert!(resp.decided);
        assert_eq!(resp.destination, Some(Destination::Exit(ExitId(2))));
        assert!(resp.message.is_some());

        // With Exit 2 off the table it takes the next-nearest offered exit.
        let mut filtered = req;
        filtered.destinations.retain(|d| *d != Destination::Exit(ExitId(2)));
        let out = decide_batch_sync(&NearestExit, &[filtered]);
        let resp = out[0].1.as_ref().unwrap();
        assert_eq!(resp.destination, Some(Destination::Exit(ExitId(4))));
    }

    #[test]
    fn alone_responses_have_no_message() {
        let model = StadiumModel::default_layout();
        let req = test_request(
            0,
            DecisionProtocol::AloneDecision,
            Point::new(2300.0, 60.0),
            &model,
        );
        let out = decide_batch_sync(&NearestExit, &[req]);
        let resp = out[0].1.as_ref().unwrap();
        assert!(resp.decided);
        assert_eq!(resp.message, None);
    }

    #[test]
    fn obedient_stub_follows_hint_when_offered() {
        let model = StadiumModel::default_layout();
        let mut req = test_request(
            0,
            DecisionProtocol::GroupDiscussion,
            Point::new(2300.0, 60.0),
            &model,
        );
        req.context.coordinator_hint = Some(crate::context::CoordinatorHint {
            coordinator: crate::coordination::CoordinatorId(3),
            exit: ExitId(1),
        });
        let out = decide_batch_sync(&ObedientToCoordinator, &[req.clone()]);
        assert_eq!(
            out[0].1.as_ref().unwrap().destination,
            Some(Destination::Exit(ExitId(1)))
        );

        // Hint withdrawn from the offer -> falls back to nearest.
        req.destinations.retain(|d| *d != Destination::Exit(ExitId(1)));
        let out = decide_batch_sync(&ObedientToCoordinator, &[req]);
        assert_eq!(
            out[0].1.as_ref().unwrap().destination,
            Some(Destination::Exit(ExitId(2)))
        );
    }

    #[test]
    fn delay_k_waits_then_decides() {
        let model = StadiumModel::default_layout();
        let policy = DelayK { k: 3 };
        for rounds in 0..3 {
            let mut req = test_request(
                0,
                DecisionProtocol::GroupDiscussion,
                Point::new(2300.0, 60.0),
                &model,
            );
            req.rounds_in_discussion = rounds;
            let out = decide_batch_sync(&policy, &[req]);
            let resp = out[0].1.as_ref().unwrap();
            assert!(!resp.decided, "round {rounds} should still be discussing");
            assert!(resp.message.is_some());
        }
        let mut req = test_request(
            0,
            DecisionProtocol::GroupDiscussion,
            Point::new(2300.0, 60.0),
            &model,
        );
        req.rounds_in_discussion = 3;
        let out = decide_batch_sync(&policy, &[req]);
        assert!(out[0].1.as_ref().unwrap().decided);
    }

    #[test]
    fn scripted_replay_returns_fixture_lines_in_order() {
        let model = StadiumModel::default_layout();
        let mut lines = std::collections::BTreeMap::new();
        lines.insert(
            AgentId(0),
            vec![
                "decided: no\nmessage: thinking\n".to_string(),
                "decided: yes\ndestination: Exit 1\n".to_string(),
            ],
        );
        let policy = ScriptedReplay::new(lines);
        assert!(policy.is_serial());
        let req = test_request(
            0,
            DecisionProtocol::GroupDiscussion,
            Point::new(100.0, 100.0),
            &model,
        );
        let first = decide_batch_sync(&policy, std::slice::from_ref(&req));
        assert!(!first[0].1.as_ref().unwrap().decided);
        let second = decide_batch_sync(&policy, std::slice::from_ref(&req));
        assert_eq!(
            second[0].1.as_ref().unwrap().destination,
            Some(Destination::Exit(ExitId(1)))
        );
        // Script exhausted -> fallback undecided.
        let third = decide_batch_sync(&policy, &[req]);
        assert!(!third[0].1.as_ref().unwrap().decided);
    }

    #[test]
    fn backend_config_validation() {
        assert!(BackendConfig::default().validate().is_ok());
        let mut c = BackendConfig::default();
        c.max_in_flight = 0;
        assert!(matches!(c.validate(), Err(BackendConfigError::ZeroInFlight)));
        let mut c = BackendConfig::default();
        c.timeout_secs = 0.0;
        assert!(c.validate().is_err());
        let mut c = BackendConfig::default();
        c.requests_per_second = Some(-1.0);
        assert!(c.validate().is_err());
    }
}
