//! Coordinators and the influence protocol, plus the group destination
//! tracker that drives discussion-resume synchronization.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{
    Agent, AgentId, AgentState, Destination, GroupIndex, PendingHint, TransitionEvent,
};
use crate::geometry::Point;
use crate::population::SocialGroup;
use crate::stadium::{ExitId, FeatureKind, StadiumModel};

pub const COORDINATOR_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_INFLUENCE_RADIUS: f64 = 50.0;
pub const DEFAULT_REACTION_PROBABILITY: f64 = 0.5;
/// Size of the default guidance staff.
pub const DEFAULT_COORDINATOR_COUNT: usize = 50;

#[derive(Debug, Error)]
pub enum CoordinationError {
    #[error("layout has no {0}, required for the default coordinator pattern")]
    MissingExit(ExitId),
    #[error("failed to parse coordinator file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unsupported coordinator file version {0} (supported: {COORDINATOR_SCHEMA_VERSION})")]
    UnsupportedVersion(u32),
    #[error("coordinator file invalid:\n{}", .0.join("\n"))]
    Invalid(Vec<String>),
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct CoordinatorId(pub u32);

impl std::fmt::Display for CoordinatorId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "coordinator {}", self.0)
    }
}

/// A stationary guidance entity recommending a specific exit to nearby
/// moving agents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coordinator {
    pub id: CoordinatorId,
    pub position: Point,
    pub suggested_exit: ExitId,
    pub influence_radius: f64,
    pub reaction_probability: f64,
}

// ---------------------------------------------------------------------------
// layouts
// ---------------------------------------------------------------------------

/// Walk `count` evenly spaced points clockwise around a rectangle's border,
/// starting at the top-left corner.
fn ring_points(ring: crate::geometry::Rect, count: usize) -> Vec<Point> {
    let w = ring.w;
    let h = ring.h;
    let perimeter = 2.0 * (w + h);
    (0..count)
        .map(|k| {
            let mut s = perimeter * (k as f64) / (count as f64);
            if s < w {
                return Point::new(ring.min_x() + s, ring.min_y());
            }
            s -= w;
            if s < h {
                return Point::new(ring.max_x(), ring.min_y() + s);
            }
            s -= h;
            if s < w {
                return Point::new(ring.max_x() - s, ring.max_y());
            }
            s -= w;
            Point::new(ring.min_x(), ring.max_y() - s)
        })
        .collect()
}

/// The default 50-coordinator pattern, derived from the layout: 30 around
/// the track ring, 8 at seating-section perimeters, 4 on pathway waypoints,
/// and 8 inside family/gathering zones. Coordinators in the northern half
/// recommend Exit 1, the rest Exit 3.
pub fn default_coordinator_layout(
    model: &StadiumModel,
) -> Result<Vec<Coordinator>, CoordinationError> {
    for required in [ExitId(1), ExitId(3)] {
        if model.exit(required).is_none() {
            return Err(CoordinationError::MissingExit(required));
        }
    }

    let mut positions: Vec<Point> = Vec::with_capacity(DEFAULT_COORDINATOR_COUNT);

    // Track ring: bounding box of the track rectangles' centerlines, or an
    // inset ring if the layout has no track features.
    let track_rects: Vec<_> = model
        .features
        .iter()
        .filter(|f| f.kind == FeatureKind::TrackRegion)
        .map(|f| f.rect.center())
        .collect();
    let ring = if track_rects.len() >= 2 {
        let min_x = track_rects.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
        let max_x = track_rects.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
        let min_y = track_rects.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
        let max_y = track_rects.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
        crate::geometry::Rect::new(min_x, min_y, max_x - min_x, max_y - min_y)
    } else {
        crate::geometry::Rect::new(
            model.width * 0.05,
            model.height * 0.05,
            model.width * 0.9,
            model.height * 0.9,
        )
    };
    positions.extend(ring_points(ring, 30));

    // Seating perimeters: one post on the edge of each section facing the
    // stadium center.
    for section in model.seating_sections() {
        let c = section.rect.center();
        let y = if c.y < model.height / 2.0 {
            section.rect.max_y() + 10.0
        } else {
            section.rect.min_y() - 10.0
        };
        positions.push(model.clamp(Point::new(c.x, y)));
    }

    // Pathway waypoints.
    for pathway in model
        .features
        .iter()
        .filter(|f| f.kind == FeatureKind::Pathway)
    {
        positions.push(pathway.rect.center());
    }

    // Family and gathering zones: two posts per zone along its long axis.
    for zone in model.features.iter().filter(|f| {
        matches!(
            f.kind,
            FeatureKind::FamilyArea | FeatureKind::AccessibilityArea | FeatureKind::BleacherArea
        )
    }) {
        let c = zone.rect.center();
        if zone.rect.w >= zone.rect.h {
            positions.push(Point::new(c.x - zone.rect.w / 4.0, c.y));
            positions.push(Point::new(c.x + zone.rect.w / 4.0, c.y));
        } else {
            positions.push(Point::new(c.x, c.y - zone.rect.h / 4.0));
            positions.push(Point::new(c.x, c.y + zone.rect.h / 4.0));
        }
    }

    Ok(positions
        .into_iter()
        .enumerate()
        .map(|(i, position)| Coordinator {
            id: CoordinatorId(i as u32),
            position,
            suggested_exit: if position.y < model.height / 2.0 {
                ExitId(1)
            } else {
                ExitId(3)
            },
            influence_radius: DEFAULT_INFLUENCE_RADIUS,
            reaction_probability: DEFAULT_REACTION_PROBABILITY,
        })
        .collect())
}

#[derive(Debug, Deserialize)]
struct CoordinatorFile {
    version: u32,
    #[serde(default)]
    coordinators: Vec<CoordinatorEntry>,
}

#[derive(Debug, Deserialize)]
struct CoordinatorEntry {
    position: [f64; 2],
    suggested_exit: u32,
    #[serde(default)]
    influence_radius: Option<f64>,
    #[serde(default)]
    reaction_probability: Option<f64>,
}

/// Load a coordinator layout file; ids are assigned in file order.
pub fn coordinators_from_toml(text: &str) -> Result<Vec<Coordinator>, CoordinationError> {
    let file: CoordinatorFile = toml::from_str(text)?;
    if file.version != COORDINATOR_SCHEMA_VERSION {
        return Err(CoordinationError::UnsupportedVersion(file.version));
    }
    let mut problems = Vec::new();
    let coords: Vec<Coordinator> = file
        .coordinators
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let p = e.reaction_probability.unwrap_or(DEFAULT_REACTION_PROBABILITY);
            if !(0.0..=1.0).contains(&p) {
                problems.push(format!("coordinator {i}: reaction probability {p} out of [0,1]"));
            }
            let r = e.influence_radius.unwrap_or(DEFAULT_INFLUENCE_RADIUS);
            if r <= 0.0 {
                problems.push(format!("coordinator {i}: influence radius must be positive"));
            }
            Coordinator {
                id: CoordinatorId(i as u32),
                position: Point::new(e.position[0], e.position[1]),
                suggested_exit: ExitId(e.suggested_exit),
                influence_radius: r,
                reaction_probability: p,
            }
        })
        .collect();
    if problems.is_empty() {
        Ok(coords)
    } else {
        Err(CoordinationError::Invalid(problems))
    }
}

/// Serialize a coordinator list back to the layout-file schema.
pub fn coordinators_to_toml(coords: &[Coordinator]) -> String {
    let mut out = format!("version = {COORDINATOR_SCHEMA_VERSION}\n");
    for c in coords {
        out.push_str(&format!(
            "\n[[coordinators]]\nposition = [{:?}, {:?}]\nsuggested_exit = {}\n\
             influence_radius = {:?}\nreaction_probability = {:?}\n",
            c.position.x, c.position.y, c.suggested_exit.0, c.influence_radius,
            c.reaction_probability,
        ));
    }
    out
}

/// Every coordinator's suggested exit must exist in the layout.
pub fn validate_coordinators(
    coords: &[Coordinator],
    model: &StadiumModel,
) -> Result<(), CoordinationError> {
    let problems: Vec<String> = coords
        .iter()
        .filter(|c| model.exit(c.suggested_exit).is_none())
        .map(|c| format!("{} suggests {}, which is not in the layout", c.id, c.suggested_exit))
        .collect();
    if problems.is_empty() {
        Ok(())
    } else {
        Err(CoordinationError::Invalid(problems))
    }
}

// ---------------------------------------------------------------------------
// influence
// ---------------------------------------------------------------------------

/// One coordinator-influence occurrence, as written to the round log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceEvent {
    pub agent: AgentId,
    pub coordinator: CoordinatorId,
    pub original_destination: Destination,
    pub suggested_exit: ExitId,
    pub position: Point,
}

/// Evaluate coordinator influence over all MOVING agents.
///
/// Pairs are visited in (agent id, coordinator id) order and one random draw
/// is consumed per qualifying pair, so results are reproducible. An agent
/// triggers at most one influence event per round; the first triggering
/// member fixes the hint its whole group will receive.
pub fn check_influence<R: Rng>(
    agents: &[Agent],
    coordinators: &[Coordinator],
    rng: &mut R,
) -> (Vec<InfluenceEvent>, BTreeMap<GroupIndex, PendingHint>) {
    let mut events = Vec::new();
    let mut hints: BTreeMap<GroupIndex, PendingHint> = BTreeMap::new();
    for agent in agents {
        if agent.state != AgentState::Moving {
            continue;
        }
        let Some(destination) = agent.destination else {
            continue;
        };
        for coordinator in coordinators {
            if destination == Destination::Exit(coordinator.suggested_exit) {
                continue;
            }
            if agent.position.distance_to(coordinator.position) > coordinator.influence_radius {
                continue;
            }
            if rng.gen::<f64>() < coordinator.reaction_probability {
                events.push(InfluenceEvent {
                    agent: agent.id,
                    coordinator: coordinator.id,
                    original_destination: destination,
                    suggested_exit: coordinator.suggested_exit,
                    position: agent.position,
                });
                hints.entry(agent.group).or_insert(PendingHint {
                    coordinator: coordinator.id.0,
                    exit: coordinator.suggested_exit,
                });
                break;
            }
        }
    }
    (events, hints)
}

/// Cascade each influence to the whole group: every non-EXITED member
/// returns to DISCUSSING with cleared destination and the coordinator's
/// suggestion pending. Returns the reset agent ids.
pub fn reset_influenced_groups(
    agents: &mut [Agent],
    groups: &[SocialGroup],
    influenced: &BTreeMap<GroupIndex, PendingHint>,
    tracker: &mut GroupTracker,
) -> Vec<AgentId> {
    let mut reset = Vec::new();
    for (group_idx, hint) in influenced {
        tracker.clear_group(*group_idx);
        for member in &groups[group_idx.0 as usize].members {
            let agent = &mut agents[member.0 as usize];
            if agent.state == AgentState::Exited {
                continue;
            }
            agent
                .transition(TransitionEvent::CoordinatorReset { hint: *hint })
                .expect("coordinator reset is legal from every non-exited state");
            reset.push(*member);
        }
    }
    reset
}

// ---------------------------------------------------------------------------
// group destination tracking
// ---------------------------------------------------------------------------

/// Per (group, destination) record of who chose it and who has arrived.
/// Exit destinations are never tracked; exiting agents leave the simulation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupTracker {
    entries: BTreeMap<(GroupIndex, Destination), TrackerEntry>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct TrackerEntry {
    chosen: BTreeSet<AgentId>,
    arrived: BTreeSet<AgentId>,
}

impl GroupTracker {
    pub fn new() -> GroupTracker {
        GroupTracker::default()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Record a committed decision. Exit destinations are ignored.
    pub fn record_choice(&mut self, group: GroupIndex, destination: Destination, agent: AgentId) {
        if destination.is_exit() {
            return;
        }
        self.entries
            .entry((group, destination))
            .or_default()
            .chosen
            .insert(agent);
    }

    /// Record an arrival at a previously chosen destination.
    pub fn record_arrival(&mut self, group: GroupIndex, destination: Destination, agent: AgentId) {
        if destination.is_exit() {
            return;
        }
        let entry = self.entries.entry((group, destination)).or_default();
        entry.chosen.insert(agent);
        entry.arrived.insert(agent);
    }

    /// Forget everything about a group (used when influence resets it).
    pub fn clear_group(&mut self, group: GroupIndex) {
        self.entries.retain(|(g, _), _| *g != group);
    }

    /// `arrived ⊆ chosen` must hold for every entry.
    pub fn check_invariant(&self) -> Result<(), String> {
        for ((group, dest), entry) in &self.entries {
            if !entry.arrived.is_subset(&entry.chosen) {
                return Err(format!(
                    "group {group:?} at {dest}: arrived set is not a subset of chosen"
                ));
            }
        }
        Ok(())
    }

    /// Entries whose chosen and arrived sets coincide (and are nonempty):
    /// these groups resume discussion this round.
    fn ready(&self) -> Vec<(GroupIndex, Destination)> {
        self.entries
            .iter()
            .filter(|(_, e)| !e.chosen.is_empty() && e.chosen == e.arrived)
            .map(|(k, _)| *k)
            .collect()
    }
}

/// Resume every (group, destination) party whose members have all arrived:
/// the waiting members return to DISCUSSING and the tracking entry clears.
pub fn resume_groups(tracker: &mut GroupTracker, agents: &mut [Agent]) -> Vec<AgentId> {
    let mut resumed = Vec::new();
    for key in tracker.ready() {
        let entry = tracker.entries.remove(&key).expect("ready key exists");
        for agent_id in entry.arrived {
            let agent = &mut agents[agent_id.0 as usize];
            debug_assert_eq!(agent.state, AgentState::Waiting);
            agent
                .transition(TransitionEvent::GroupResumed)
                .expect("arrived agents are waiting");
            resumed.push(agent_id);
        }
    }
    resumed
}
