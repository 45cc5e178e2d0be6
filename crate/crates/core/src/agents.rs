//! Agent records, the four-state lifecycle machine, and the destination
//! enumeration with coordinate resolution.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point;
use crate::population::Persona;
use crate::stadium::{ExitId, RegionKind, StadiumModel};

/// Default sensing radius for nearby features and agents, in pixels.
pub const DEFAULT_VISIBILITY_RADIUS: f64 = 20.0;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct AgentId(pub u32);

impl std::fmt::Display for AgentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "agent {}", self.0)
    }
}

/// Index into the population's group list. The group's identity (its sorted
/// member-id tuple) lives on the group record itself.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct GroupIndex(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentCategory {
    StudentWithFamilyOutside,
    StudentWithFriendsInside,
    StudentAlone,
    FamilyOrFriend,
}

impl AgentCategory {
    pub fn is_student(&self) -> bool {
        !matches!(self, AgentCategory::FamilyOrFriend)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AgentState {
    Discussing,
    Moving,
    Waiting,
    Exited,
}

impl std::fmt::Display for AgentState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            AgentState::Discussing => "DISCUSSING",
            AgentState::Moving => "MOVING",
            AgentState::Waiting => "WAITING",
            AgentState::Exited => "EXITED",
        };
        f.write_str(s)
    }
}

/// One of the twelve places an agent may decide to move toward: an exit or a
/// named stadium region. Layouts with extra exits extend the enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Destination {
    Exit(ExitId),
    Region(RegionKind),
}

impl Destination {
    /// The full offered enumeration for a layout: exits in id order, then the
    /// eight regions. Twelve entries for the default four-exit layout.
    pub fn enumerate(model: &StadiumModel) -> Vec<Destination> {
        let mut out: Vec<Destination> =
            model.exits.iter().map(|e| Destination::Exit(e.id)).collect();
        out.extend(RegionKind::ALL.iter().map(|r| Destination::Region(*r)));
        out
    }

    /// Stable machine-readable key, e.g. `exit_3` or `north_track`.
    pub fn key(&self) -> String {
        match self {
            Destination::Exit(id) => format!("exit_{}", id.0),
            Destination::Region(r) => r.key().to_string(),
        }
    }

    /// Human-readable phrase offered to deciding agents, e.g. `Exit 3` or
    /// `North side of the stadium, track area`.
    pub fn label(&self) -> String {
        match self {
            Destination::Exit(id) => id.to_string(),
            Destination::Region(r) => r.phrase().to_string(),
        }
    }

    pub fn is_exit(&self) -> bool {
        matches!(self, Destination::Exit(_))
    }
}

impl std::fmt::Display for Destination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label())
    }
}

impl std::str::FromStr for Destination {
    type Err = String;

    /// Parses the `key()` form only; free-text matching lives in the decision
    /// parser.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(n) = s.strip_prefix("exit_") {
            let n: u32 = n.parse().map_err(|_| format!("bad exit key '{s}'"))?;
            return Ok(Destination::Exit(ExitId(n)));
        }
        RegionKind::ALL
            .iter()
            .find(|r| r.key() == s)
            .map(|r| Destination::Region(*r))
            .ok_or_else(|| format!("unknown destination key '{s}'"))
    }
}

impl Serialize for Destination {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.key())
    }
}

impl<'de> Deserialize<'de> for Destination {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Error)]
pub enum DestinationError {
    #[error("destination {0} does not exist in this layout")]
    UnknownExit(ExitId),
    #[error("layout defines no rectangle for region '{0}'")]
    UnknownRegion(&'static str),
}

/// Turn a destination into a concrete coordinate: exits are fixed points;
/// regions get a uniform random point inside their rectangle, resampled if it
/// falls strictly inside an obstacle.
pub fn resolve_destination<R: Rng>(
    model: &StadiumModel,
    d: Destination,
    rng: &mut R,
) -> Result<Point, DestinationError> {
    match d {
        Destination::Exit(id) => model
            .exit(id)
            .map(|e| e.position)
            .ok_or(DestinationError::UnknownExit(id)),
        Destination::Region(kind) => {
            let rect = model
                .region_rect(kind)
                .ok_or(DestinationError::UnknownRegion(kind.key()))?;
            let obstacles = model.obstacles();
            // Validated layouts keep destination regions clear of the stage,
            // so the first sample is almost always accepted; the cap guards
            // against pathological custom layouts.
            for _ in 0..64 {
                let p = Point::new(
                    rng.gen_range(rect.min_x()..=rect.max_x()),
                    rng.gen_range(rect.min_y()..=rect.max_y()),
                );
                if !obstacles.iter().any(|o| o.contains_strict(p)) {
                    return Ok(p);
                }
            }
            Ok(rect.center())
        }
    }
}

/// A coordinator suggestion waiting to be injected into the agent's next
/// decision context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingHint {
    pub coordinator: u32,
    pub exit: ExitId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub id: AgentId,
    pub persona: Persona,
    pub category: AgentCategory,
    pub accessibility: bool,
    pub group: GroupIndex,
    pub position: Point,
    pub state: AgentState,
    /// Chosen destination while MOVING or WAITING.
    pub destination: Option<Destination>,
    /// Resolved coordinate the agent is moving toward.
    pub target: Option<Point>,
    pub visibility_radius: f64,
    /// Completed discussion rounds since last entering DISCUSSING.
    pub rounds_in_discussion: u32,
    /// Suggestion from the coordinator that reset this agent's group, if any.
    pub pending_hint: Option<PendingHint>,
    /// (round, destination) pairs for every decision this agent committed.
    pub decision_history: Vec<(u64, Destination)>,
}

impl Agent {
    pub fn new(
        id: AgentId,
        persona: Persona,
        category: AgentCategory,
        accessibility: bool,
        group: GroupIndex,
        position: Point,
    ) -> Agent {
        Agent {
            id,
            persona,
            category,
            accessibility,
            group,
            position,
            state: AgentState::Discussing,
            destination: None,
            target: None,
            visibility_radius: DEFAULT_VISIBILITY_RADIUS,
            rounds_in_discussion: 0,
            pending_hint: None,
            decision_history: Vec::new(),
        }
    }

    /// Apply a lifecycle event, enforcing the legal transition set.
    pub fn transition(&mut self, event: TransitionEvent) -> Result<(), TransitionError> {
        use AgentState::*;
        match (self.state, &event) {
            (Discussing, TransitionEvent::Decided { destination, target }) => {
                self.state = Moving;
                self.destination = Some(*destination);
                self.target = Some(*target);
                self.pending_hint = None;
                Ok(())
            }
            (Moving, TransitionEvent::ArrivedAtExit) => {
                match self.destination {
                    Some(d) if d.is_exit() => {
                        self.state = Exited;
                        Ok(())
                    }
                    _ => Err(TransitionError::NotAnExitDestination(self.id)),
                }
            }
            (Moving, TransitionEvent::ArrivedAtRegion) => {
                match self.destination {
                    Some(d) if !d.is_exit() => {
                        self.state = Waiting;
                        Ok(())
                    }
                    _ => Err(TransitionError::NotARegionDestination(self.id)),
                }
            }
            (Waiting, TransitionEvent::GroupResumed) => {
                self.enter_discussion();
                Ok(())
            }
            (Discussing | Moving | Waiting, TransitionEvent::CoordinatorReset { hint }) => {
                let hint = *hint;
                self.enter_discussion();
                self.pending_hint = Some(hint);
                Ok(())
            }
            (from, _) => Err(TransitionError::IllegalTransition {
                agent: self.id,
                from,
                event: event.name(),
            }),
        }
    }

    fn enter_discussion(&mut self) {
        self.state = AgentState::Discussing;
        self.destination = None;
        self.target = None;
        self.rounds_in_discussion = 0;
        self.pending_hint = None;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransitionEvent {
    /// A committed decision: destination plus its resolved coordinate.
    Decided {
        destination: Destination,
        target: Point,
    },
    /// Arrival within tolerance of an exit target.
    ArrivedAtExit,
    /// Arrival within tolerance of a region target.
    ArrivedAtRegion,
    /// The group-resume synchronization fired.
    GroupResumed,
    /// A coordinator influenced this agent's group.
    CoordinatorReset { hint: PendingHint },
}

impl TransitionEvent {
    fn name(&self) -> &'static str {
        match self {
            TransitionEvent::Decided { .. } => "decided",
            TransitionEvent::ArrivedAtExit => "arrived_at_exit",
            TransitionEvent::ArrivedAtRegion => "arrived_at_region",
            TransitionEvent::GroupResumed => "group_resumed",
            TransitionEvent::CoordinatorReset { .. } => "coordinator_reset",
        }
    }
}

#[derive(Debug, Error)]
pub enum TransitionError {
    #[error("{agent}: illegal transition '{event}' from state {from}")]
    IllegalTransition {
        agent: AgentId,
        from: AgentState,
        event: &'static str,
    },
    #[error("{0}: exit arrival while destination is not an exit")]
    NotAnExitDestination(AgentId),
    #[error("{0}: region arrival while destination is not a region")]
    NotARegionDestination(AgentId),
}
