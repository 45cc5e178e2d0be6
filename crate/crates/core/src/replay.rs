//! Self-contained replay files: layout plus per-round agent positions and
//! states, consumable by any renderer (the browser demo, video tooling).
//! Serialization is byte-deterministic for a given run.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentId, AgentState};
use crate::coordination::Coordinator;
use crate::engine::RoundLog;
use crate::geometry::Rect;
use crate::stadium::{ExitPoint, FeatureKind, StadiumModel};

pub const REPLAY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("cannot export a replay from an empty log")]
    EmptyLog,
    #[error("unsupported replay version {0} (expected {REPLAY_SCHEMA_VERSION})")]
    UnsupportedVersion(u32),
    #[error("malformed replay file: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Just enough geometry to draw a feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayFeature {
    pub id: String,
    pub kind: FeatureKind,
    pub rect: Rect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayAgent {
    pub x: f64,
    pub y: f64,
    pub state: AgentState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayRound {
    pub round: u64,
    pub exited_total: u64,
    pub agents: BTreeMap<AgentId, ReplayAgent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayFile {
    pub version: u32,
    pub canvas_width: f64,
    pub canvas_height: f64,
    pub exits: Vec<ExitPoint>,
    pub features: Vec<ReplayFeature>,
    pub coordinators: Vec<Coordinator>,
    pub total_agents: u64,
    pub rounds: Vec<ReplayRound>,
}

/// Flatten a run into a replay. The agent total is reconstructed from the
/// first round (alive + already exited), which round-log conservation
/// guarantees equals the population size.
pub fn export_replay(
    model: &StadiumModel,
    coordinators: &[Coordinator],
    logs: &[RoundLog],
) -> Result<ReplayFile, ReplayError> {
    let first = logs.first().ok_or(ReplayError::EmptyLog)?;
    let total_agents = first.agents.len() as u64 + first.exited_total;
    Ok(ReplayFile {
        version: REPLAY_SCHEMA_VERSION,
        canvas_width: model.width,
        canvas_height: model.height,
        exits: model.exits.clone(),
        features: model
            .features
            .iter()
            .map(|f| ReplayFeature { id: f.id.clone(), kind: f.kind, rect: f.rect })
            .collect(),
        coordinators: coordinators.to_vec(),
        total_agents,
        rounds: logs
            .iter()
            .map(|log| ReplayRound {
                round: log.round,
                exited_total: log.exited_total,
                agents: log
                    .agents
                    .iter()
                    .map(|(id, rec)| {
                        (*id, ReplayAgent { x: rec.x, y: rec.y, state: rec.state })
                    })
                    .collect(),
            })
            .collect(),
    })
}

impl ReplayFile {
    /// Deterministic byte encoding: same replay, same string.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("replay serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<ReplayFile, ReplayError> {
        let replay: ReplayFile = serde_json::from_str(text)?;
        if replay.version != REPLAY_SCHEMA_VERSION {
            return Err(ReplayError::UnsupportedVersion(replay.version));
        }
        Ok(replay)
    }
}
