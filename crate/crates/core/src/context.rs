//! Environmental context: the structured description package each deciding
//! agent receives — location, nearby features and people, coordinator
//! proximity, and global exit rankings — plus its templated text rendering.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{Agent, AgentCategory, AgentId, AgentState};
use crate::coordination::{Coordinator, CoordinatorId};
use crate::geometry::{
    compass_bearing, distance_category, CompassBearing, DistanceCategory, GeometryError, Point,
};
use crate::stadium::{ExitId, ExitRanking, FeatureKind, StadiumFeature, StadiumModel};

/// A coordinator this close (inclusive) contributes an exit recommendation
/// to the context even though it lies outside the 20 px visibility radius.
pub const COORDINATOR_HINT_RADIUS: f64 = 50.0;
/// Nearby-agent lists are truncated to this many closest entries so context
/// size stays bounded in dense crowds.
pub const DEFAULT_NEARBY_AGENT_CAP: usize = 30;

#[derive(Debug, Error)]
pub enum ContextError {
    #[error("unknown agent id {0}")]
    UnknownAgent(AgentId),
    #[error("{0} has exited and receives no context")]
    Exited(AgentId),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContextOptions {
    pub nearby_agent_cap: usize,
    pub coordinator_hint_radius: f64,
}

impl Default for ContextOptions {
    fn default() -> ContextOptions {
        ContextOptions {
            nearby_agent_cap: DEFAULT_NEARBY_AGENT_CAP,
            coordinator_hint_radius: COORDINATOR_HINT_RADIUS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoordinatorHint {
    pub coordinator: CoordinatorId,
    pub exit: ExitId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearbyFeature {
    pub feature_id: String,
    pub name: String,
    pub kind: FeatureKind,
    pub distance: f64,
    pub bearing: Option<CompassBearing>,
    pub distance_category: DistanceCategory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearbyAgent {
    pub id: AgentId,
    pub category: AgentCategory,
    pub state: AgentState,
    pub distance: f64,
    pub bearing: Option<CompassBearing>,
    pub distance_category: DistanceCategory,
}

/// Everything an agent can perceive at decision time. Nearby lists are
/// visibility-radius filtered; exit rankings and the coordinator hint
/// deliberately bypass that filter (rankings are global, hints reach 50 px).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvContext {
    pub agent: AgentId,
    pub position: Point,
    pub location_text: String,
    pub nearby_features: Vec<NearbyFeature>,
    pub nearby_agents: Vec<NearbyAgent>,
    pub coordinator_hint: Option<CoordinatorHint>,
    pub exit_rankings: Vec<ExitRanking>,
    pub official_announcement: Option<String>,
}

fn point_to_rect_distance(p: Point, r: &crate::geometry::Rect) -> f64 {
    let nx = p.x.clamp(r.min_x(), r.max_x());
    let ny = p.y.clamp(r.min_y(), r.max_y());
    p.distance_to(Point::new(nx, ny))
}

fn bearing_or_none(from: Point, to: Point) -> Option<CompassBearing> {
    compass_bearing(from, to).ok()
}

/// Long-axis ends of a pathway rectangle; index 0 is the west/north end,
/// matching the order of the feature's endpoint labels.
fn pathway_ends(f: &StadiumFeature) -> [Point; 2] {
    let c = f.rect.center();
    if f.rect.w >= f.rect.h {
        [
            Point::new(f.rect.min_x(), c.y),
            Point::new(f.rect.max_x(), c.y),
        ]
    } else {
        [
            Point::new(c.x, f.rect.min_y()),
            Point::new(c.x, f.rect.max_y()),
        ]
    }
}

fn location_text(model: &StadiumModel, position: Point) -> Result<String, GeometryError> {
    let Some(feature) = model.containing_feature(position)? else {
        return Ok("You are standing on open stadium ground.".to_string());
    };
    let name = feature.display_name();
    Ok(match feature.kind {
        FeatureKind::SeatingSection => {
            match (feature.row_spacing, feature.col_spacing) {
                (Some(rs), Some(cs)) if rs > 0.0 && cs > 0.0 => {
                    let row = ((position.y - feature.rect.min_y()) / rs).floor() as i64;
                    let col = ((position.x - feature.rect.min_x()) / cs).floor() as i64;
                    format!("You are in {name}, row {row}, column {col}.")
                }
                _ => format!("You are in {name}."),
            }
        }
        FeatureKind::Pathway => {
            let ends = pathway_ends(feature);
            let labels = feature
                .endpoints
                .clone()
                .unwrap_or_else(|| ["one end".to_string(), "the other end".to_string()]);
            let mut text = format!("You are on {name}.");
            for (label, end) in labels.iter().zip(ends) {
                match bearing_or_none(position, end) {
                    Some(b) => text.push_str(&format!(" {label} lies {b} of you.")),
                    None => text.push_str(&format!(" You are at the {label} end.")),
                }
            }
            text
        }
        FeatureKind::Stage => format!("You are on the {name}."),
        _ => format!("You are in the {name}."),
    })
}

/// Assemble the context an agent perceives from a consistent snapshot.
///
/// Pure: identical inputs produce identical outputs. A pending coordinator
/// suggestion on the agent (set when its group was influence-reset) takes
/// precedence over proximity-derived hints.
pub fn build_context(
    model: &StadiumModel,
    agents: &[Agent],
    coordinators: &[Coordinator],
    agent_id: AgentId,
    announcement: Option<&str>,
    options: &ContextOptions,
) -> Result<EnvContext, ContextError> {
    let agent = agents
        .get(agent_id.0 as usize)
        .filter(|a| a.id == agent_id)
        .or_else(|| agents.iter().find(|a| a.id == agent_id))
        .ok_or(ContextError::UnknownAgent(agent_id))?;
    if agent.state == AgentState::Exited {
        return Err(ContextError::Exited(agent_id));
    }
    let position = agent.position;
    let radius = agent.visibility_radius;

    let mut nearby_features: Vec<NearbyFeature> = Vec::new();
    for feature in &model.features {
        if feature.rect.contains(position) {
            continue; // already described by location_text
        }
        let distance = point_to_rect_distance(position, &feature.rect);
        if distance > radius {
            continue;
        }
        nearby_features.push(NearbyFeature {
            feature_id: feature.id.clone(),
            name: feature.display_name(),
            kind: feature.kind,
            distance,
            bearing: bearing_or_none(position, feature.rect.center()),
            distance_category: distance_category(distance)?,
        });
    }
    nearby_features.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then_with(|| a.feature_id.cmp(&b.feature_id))
    });

    let mut nearby_agents: Vec<NearbyAgent> = Vec::new();
    for other in agents {
        if other.id == agent.id || other.state == AgentState::Exited {
            continue;
        }
        let distance = position.distance_to(other.position);
        if distance > radius {
            continue;
        }
        nearby_agents.push(NearbyAgent {
            id: other.id,
            category: other.category,
            state: other.state,
            distance,
            bearing: bearing_or_none(position, other.position),
            distance_category: distance_category(distance)?,
        });
    }
    nearby_agents.sort_by(|a, b| a.distance.total_cmp(&b.distance).then_with(|| a.id.cmp(&b.id)));
    nearby_agents.truncate(options.nearby_agent_cap);

    let coordinator_hint = agent
        .pending_hint
        .map(|h| CoordinatorHint {
            coordinator: CoordinatorId(h.coordinator),
            exit: h.exit,
        })
        .or_else(|| {
            coordinators
                .iter()
                .map(|c| (position.distance_to(c.position), c))
                .filter(|(d, _)| *d <= options.coordinator_hint_radius)
                .min_by(|(d1, c1), (d2, c2)| d1.total_cmp(d2).then_with(|| c1.id.cmp(&c2.id)))
                .map(|(_, c)| CoordinatorHint {
                    coordinator: c.id,
                    exit: c.suggested_exit,
                })
        });

    Ok(EnvContext {
        agent: agent.id,
        position,
        location_text: location_text(model, position)?,
        nearby_features,
        nearby_agents,
        coordinator_hint,
        exit_rankings: model.rank_exits(position)?,
        official_announcement: announcement.map(|a| a.to_string()),
    })
}

fn category_label(c: AgentCategory) -> &'static str {
    match c {
        AgentCategory::StudentWithFamilyOutside => "student with family attending",
        AgentCategory::StudentWithFriendsInside => "student with friends attending",
        AgentCategory::StudentAlone => "student attending alone",
        AgentCategory::FamilyOrFriend => "family member or friend",
    }
}

fn state_label(s: AgentState) -> &'static str {
    match s {
        AgentState::Discussing => "discussing",
        AgentState::Moving => "moving",
        AgentState::Waiting => "waiting",
        AgentState::Exited => "exited",
    }
}

/// Render a context into the stable natural-language template embedded in
/// decision requests. Same context, same text.
pub fn render_context_text(ctx: &EnvContext) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "You are {} at position ({:.1}, {:.1}). {}\n",
        ctx.agent, ctx.position.x, ctx.position.y, ctx.location_text
    ));
    if let Some(announcement) = &ctx.official_announcement {
        out.push_str(&format!("\nOfficial announcement: \"{announcement}\"\n"));
    }
    if let Some(hint) = &ctx.coordinator_hint {
        out.push_str(&format!(
            "\nA staff {} nearby is directing people toward {}.\n",
            hint.coordinator, hint.exit
        ));
    }
    out.push_str("\nExits ranked by distance:\n");
    for r in &ctx.exit_rankings {
        match r.bearing {
            Some(b) => out.push_str(&format!(
                "- {}: {:.0} px {} of you ({})\n",
                r.exit.id, r.distance, b, r.category
            )),
            None => out.push_str(&format!(
                "- {}: right here ({})\n",
                r.exit.id, r.category
            )),
        }
    }
    if !ctx.nearby_features.is_empty() {
        out.push_str("\nNearby features:\n");
        for f in &ctx.nearby_features {
            match f.bearing {
                Some(b) => out.push_str(&format!(
                    "- {}: {} to the {}\n",
                    f.name, f.distance_category, b
                )),
                None => out.push_str(&format!("- {}: {}\n", f.name, f.distance_category)),
            }
        }
    }
    if !ctx.nearby_agents.is_empty() {
        out.push_str("\nPeople around you:\n");
        for a in &ctx.nearby_agents {
            match a.bearing {
                Some(b) => out.push_str(&format!(
                    "- {} ({}, {}): {} to the {}\n",
                    a.id,
                    category_label(a.category),
                    state_label(a.state),
                    a.distance_category,
                    b
                )),
                None => out.push_str(&format!(
                    "- {} ({}, {}): {} at your position\n",
                    a.id,
                    category_label(a.category),
                    state_label(a.state),
                    a.distance_category
                )),
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{PendingHint, TransitionEvent};
    use crate::coordination::default_coordinator_layout;
    use crate::population::Persona;
    use crate::stadium::StadiumModel;

    fn place(id: u32, category: AgentCategory, position: Point) -> Agent {
        Agent::new(
            AgentId(id),
            Persona::test_stub(&format!("P{id}")),
            category,
            false,
            crate::agents::GroupIndex(id),
            position,
        )
    }

    fn fixture_snapshot() -> (StadiumModel, Vec<Agent>, Vec<Coordinator>) {
        let model = StadiumModel::default_layout();
        let coordinators = default_coordinator_layout(&model).unwrap();
        // Agent 0 sits at section_1 origin + (2 cols, 3 rows); two peers sit
        // within visibility; one peer is far away; one has exited.
        let base = Point::new(360.0 + 2.0 * 15.0, 240.0 + 3.0 * 20.0);
        let mut agents = vec![
            place(0, AgentCategory::StudentWithFriendsInside, base),
            place(
                1,
                AgentCategory::StudentAlone,
                Point::new(base.x + 10.0, base.y),
            ),
            place(
                2,
                AgentCategory::FamilyOrFriend,
                Point::new(base.x, base.y + 15.0),
            ),
            place(3, AgentCategory::StudentAlone, Point::new(1200.0, 1090.0)),
            place(
                4,
                AgentCategory::StudentWithFamilyOutside,
                Point::new(base.x + 5.0, base.y),
            ),
        ];
        agents[4]
            .transition(TransitionEvent::Decided {
                destination: crate::agents::Destination::Exit(ExitId(1)),
                target: Point::new(20.0, 20.0),
            })
            .unwrap();
        agents[4].transition(TransitionEvent::ArrivedAtExit).unwrap();
        (model, agents, coordinators)
    }

    #[test]
    fn seating_row_column_from_offsets() {
        let (model, agents, coordinators) = fixture_snapshot();
        let ctx = build_context(
            &model,
            &agents,
            &coordinators,
            AgentId(0),
            None,
            &ContextOptions::default(),
        )
        .unwrap();
        assert!(
            ctx.location_text.contains("row 3, column 2"),
            "got: {}",
            ctx.location_text
        );
    }

    #[test]
    fn nearby_lists_filter_by_visibility_and_exclude_exited() {
        let (model, agents, coordinators) = fixture_snapshot();
        let ctx = build_context(
            &model,
            &agents,
            &coordinators,
            AgentId(0),
            None,
            &ContextOptions::default(),
        )
        .unwrap();
        let ids: Vec<AgentId> = ctx.nearby_agents.iter().map(|a| a.id).collect();
        assert_eq!(ids, vec![AgentId(1), AgentId(2)], "exited & distant excluded");
        for a in &ctx.nearby_agents {
            assert!(a.distance <= 20.0);
            assert_eq!(a.distance_category, distance_category(a.distance).unwrap());
        }
        for f in &ctx.nearby_features {
            assert!(f.distance <= 20.0);
            assert_eq!(f.distance_category, distance_category(f.distance).unwrap());
        }
        assert_eq!(ctx.exit_rankings.len(), model.exits.len());
    }

    #[test]
    fn isolated_agent_has_empty_nearby_lists_and_full_rankings() {
        let model = StadiumModel::default_layout();
        let agents = vec![place(
            0,
            AgentCategory::StudentAlone,
            Point::new(1290.0, 450.0), // open ground, nothing within 20 px
        )];
        let ctx =
            build_context(&model, &agents, &[], AgentId(0), None, &ContextOptions::default())
                .unwrap();
        assert!(ctx.nearby_agents.is_empty());
        assert!(ctx.nearby_features.is_empty());
        assert_eq!(ctx.exit_rankings.len(), 4);
        assert!(ctx.coordinator_hint.is_none());
        let text = render_context_text(&ctx);
        assert!(!text.contains("Nearby features"));
        assert!(!text.contains("People around you"));
        assert!(text.contains("open stadium ground"));
    }

    #[test]
    fn agent_standing_on_exit_ranks_it_first_and_extremely_close() {
        let model = StadiumModel::default_layout();
        let agents = vec![place(0, AgentCategory::StudentAlone, Point::new(20.0, 20.0))];
        let ctx =
            build_context(&model, &agents, &[], AgentId(0), None, &ContextOptions::default())
                .unwrap();
        assert_eq!(ctx.exit_rankings[0].exit.id, ExitId(1));
        assert_eq!(ctx.exit_rankings[0].distance, 0.0);
        let text = render_context_text(&ctx);
        assert!(text.contains("Exit 1: right here (extremely close)"), "got:\n{text}");
    }

    #[test]
    fn coordinator_hint_boundary_is_inclusive() {
        let model = StadiumModel::default_layout();
        let coordinator = Coordinator {
            id: CoordinatorId(9),
            position: Point::new(500.0, 500.0),
            suggested_exit: ExitId(3),
            influence_radius: 50.0,
            reaction_probability: 0.5,
        };
        let at = |d: f64| vec![place(0, AgentCategory::StudentAlone, Point::new(500.0 + d, 500.0))];
        let opts = ContextOptions::default();

        let on = build_context(&model, &at(50.0), &[coordinator], AgentId(0), None, &opts).unwrap();
        assert_eq!(
            on.coordinator_hint,
            Some(CoordinatorHint { coordinator: CoordinatorId(9), exit: ExitId(3) })
        );
        let off =
            build_context(&model, &at(50.001), &[coordinator], AgentId(0), None, &opts).unwrap();
        assert!(off.coordinator_hint.is_none());
    }

    #[test]
    fn pending_hint_overrides_proximity() {
        let model = StadiumModel::default_layout();
        let mut agents = vec![place(0, AgentCategory::StudentAlone, Point::new(500.0, 500.0))];
        agents[0].pending_hint = Some(PendingHint { coordinator: 42, exit: ExitId(2) });
        let near = Coordinator {
            id: CoordinatorId(1),
            position: Point::new(500.0, 510.0),
            suggested_exit: ExitId(4),
            influence_radius: 50.0,
            reaction_probability: 0.5,
        };
        let ctx = build_context(
            &model,
            &agents,
            &[near],
            AgentId(0),
            None,
            &ContextOptions::default(),
        )
        .unwrap();
        assert_eq!(
            ctx.coordinator_hint,
            Some(CoordinatorHint { coordinator: CoordinatorId(42), exit: ExitId(2) })
        );
    }

    #[test]
    fn nearby_agent_cap_takes_closest() {
        let model = StadiumModel::default_layout();
        let mut agents = vec![place(0, AgentCategory::StudentAlone, Point::new(1200.0, 450.0))];
        for i in 1..=40u32 {
            agents.push(place(
                i,
                AgentCategory::StudentAlone,
                Point::new(1200.0 + f64::from(i) * 0.4, 450.0),
            ));
        }
        let opts = ContextOptions { nearby_agent_cap: 5, ..ContextOptions::default() };
        let ctx = build_context(&model, &agents, &[], AgentId(0), None, &opts).unwrap();
        let ids: Vec<u32> = ctx.nearby_agents.iter().map(|a| a.id.0).collect();
        assert_eq!(ids, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn build_context_is_pure_and_errors_are_typed() {
        let (model, agents, coordinators) = fixture_snapshot();
        let opts = ContextOptions::default();
        let a = build_context(&model, &agents, &coordinators, AgentId(0), Some("stay calm"), &opts)
            .unwrap();
        let b = build_context(&model, &agents, &coordinators, AgentId(0), Some("stay calm"), &opts)
            .unwrap();
        assert_eq!(a, b);
        assert_eq!(render_context_text(&a), render_context_text(&b));
        assert!(matches!(
            build_context(&model, &agents, &coordinators, AgentId(99), None, &opts),
            Err(ContextError::UnknownAgent(_))
        ));
        assert!(matches!(
            build_context(&model, &agents, &coordinators, AgentId(4), None, &opts),
            Err(ContextError::Exited(_))
        ));
    }

    #[test]
    fn announcement_flows_verbatim_into_text() {
        let (model, agents, coordinators) = fixture_snapshot();
        let msg = "Severe weather approaching. Please evacuate to the nearest exit.";
        let ctx = build_context(
            &model,
            &agents,
            &coordinators,
            AgentId(0),
            Some(msg),
            &ContextOptions::default(),
        )
        .unwrap();
        assert!(render_context_text(&ctx).contains(msg));
    }

    #[test]
    fn pathway_location_names_both_endpoints() {
        let model = StadiumModel::default_layout();
        let agents = vec![place(0, AgentCategory::StudentAlone, Point::new(200.0, 600.0))];
        let ctx =
            build_context(&model, &agents, &[], AgentId(0), None, &ContextOptions::default())
                .unwrap();
        assert!(ctx.location_text.contains("West track lies west of you"), "{}", ctx.location_text);
        assert!(ctx.location_text.contains("Stage lies east of you"), "{}", ctx.location_text);
    }

    #[test]
    fn golden_context_rendering() {
        let (model, agents, coordinators) = fixture_snapshot();
        let ctx = build_context(
            &model,
            &agents,
            &coordinators,
            AgentId(0),
            Some("Severe weather warning: please leave the stadium calmly."),
            &ContextOptions::default(),
        )
        .unwrap();
        let text = render_context_text(&ctx);
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("fixtures/golden/context_seating.txt");
        if std::env::var("UPDATE_GOLDEN").is_ok() {
            std::fs::create_dir_all(path.parent().unwrap()).unwrap();
            std::fs::write(&path, &text).unwrap();
        }
        let golden = std::fs::read_to_string(&path)
            .expect("golden file missing; run with UPDATE_GOLDEN=1 to create");
        assert_eq!(text, golden, "rendered context diverged from frozen golden file");
    }
}
