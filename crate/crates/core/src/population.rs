//! Population generation: student personas per major, the accessibility
//! cohort, family/friend companions, friend groups, and starting placement.
//!
//! Everything is a deterministic function of the population spec (including
//! its seed) when run against the stub persona backend.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{Agent, AgentCategory, AgentId, GroupIndex};
use crate::geometry::{Point, Rect};
use crate::rng::{label_hash, MasterSeed};
use crate::stadium::{FeatureKind, StadiumModel};

pub const POPULATION_SCHEMA_VERSION: u32 = 1;

/// Default spec shipped with the crate: 2,928 students over ten majors plus
/// the 44-student accessibility cohort.
pub const DEFAULT_POPULATION_TOML: &str = include_str!("../fixtures/population_default.toml");

#[derive(Debug, Error)]
pub enum PopulationError {
    #[error("population spec invalid:\n{}", .0.join("\n"))]
    Spec(Vec<String>),
    #[error("persona backend failed for batch '{batch}': {source}")]
    Backend {
        batch: String,
        #[source]
        source: PersonaError,
    },
    #[error("cannot partition {available} students into groups summing to {needed}")]
    InsufficientStudents { needed: u32, available: u32 },
    #[error("layout is missing a feature required for placement: {0}")]
    MissingFeature(&'static str),
    #[error("failed to parse population spec: {0}")]
    ParseSpec(#[from] toml::de::Error),
    #[error("failed to read or write population data: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to decode population file: {0}")]
    Decode(#[from] serde_json::Error),
    #[error("unsupported population file version {0} (supported: {POPULATION_SCHEMA_VERSION})")]
    UnsupportedVersion(u32),
}

#[derive(Debug, Error)]
#[error("{0}")]
pub struct PersonaError(pub String);

// ---------------------------------------------------------------------------
// personas
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Persona {
    pub name: String,
    pub background: String,
    /// Present for student personas.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub major: Option<String>,
    /// Present for family/friend personas ("mother", "family friend", ...).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relationship: Option<String>,
}

impl Persona {
    #[doc(hidden)]
    pub fn test_stub(name: &str) -> Persona {
        Persona {
            name: name.to_string(),
            background: format!("{name} is attending the graduation ceremony."),
            major: None,
            relationship: None,
        }
    }
}

/// One persona to generate. `index` is the request's position in its batch.
#[derive(Debug, Clone)]
pub struct PersonaRequest {
    pub index: u32,
    /// Student requests carry their major.
    pub major: Option<String>,
    /// Companion requests carry the name of the graduate they accompany.
    pub graduate: Option<String>,
}

/// Source of persona texts. The stub is deterministic and offline; a remote
/// implementation can generate richer personas batch by batch.
pub trait PersonaBackend {
    /// Produce exactly one persona per request. `label` names the batch in
    /// error reports.
    fn generate_batch(
        &mut self,
        label: &str,
        requests: &[PersonaRequest],
    ) -> Result<Vec<Persona>, PersonaError>;
}

const FIRST_NAMES: [&str; 32] = [
    "Ava", "Noah", "Mia", "Liam", "Zoe", "Ethan", "Ruby", "Mason", "Isla", "Logan", "Nora",
    "Lucas", "Elena", "Henry", "Priya", "Owen", "Amara", "Felix", "Jade", "Oscar", "Lena",
    "Marco", "Tara", "Dmitri", "Sofia", "Kenji", "Alma", "Ravi", "June", "Theo", "Wren", "Omar",
];

const LAST_NAMES: [&str; 32] = [
    "Reyes", "Chen", "Okafor", "Novak", "Haddad", "Silva", "Kim", "Moreau", "Patel", "Larsen",
    "Costa", "Yamada", "Ali", "Baker", "Ivanov", "Mendez", "Osei", "Fischer", "Nakamura",
    "Dubois", "Singh", "Walsh", "Araya", "Kowalski", "Tran", "Marino", "Egede", "Brandt",
    "Santos", "Farah", "Lindqvist", "Adeyemi",
];

const RELATIONSHIPS: [&str; 10] = [
    "mother",
    "father",
    "sister",
    "brother",
    "grandmother",
    "grandfather",
    "aunt",
    "uncle",
    "cousin",
    "family friend",
];

fn title_case(s: &str) -> String {
    s.split('_')
        .map(|w| {
            let mut chars = w.chars();
            match chars.next() {
                Some(c) => c.to_uppercase().collect::<String>() + chars.as_str(),
                None => String::new(),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Offline persona source: names and backgrounds are a pure function of
/// (batch label, request), so generation order never matters.
#[derive(Debug, Default, Clone)]
pub struct StubPersonaBackend;

impl StubPersonaBackend {
    fn persona_for(&self, label: &str, req: &PersonaRequest) -> Persona {
        let h = label_hash(&format!("{label}#{}", req.index));
        let first = FIRST_NAMES[(h % FIRST_NAMES.len() as u64) as usize];
        let last = LAST_NAMES[((h >> 16) % LAST_NAMES.len() as u64) as usize];
        let name = format!("{first} {last}");
        match (&req.major, &req.graduate) {
            (Some(major), _) => {
                let pretty = title_case(major);
                Persona {
                    background: format!(
                        "{name} is graduating today with a degree in {pretty} and is \
                         attending the ceremony with classmates."
                    ),
                    name,
                    major: Some(major.clone()),
                    relationship: None,
                }
            }
            (None, Some(graduate)) => {
                let rel = RELATIONSHIPS[((h >> 32) % RELATIONSHIPS.len() as u64) as usize];
                Persona {
                    background: format!(
                        "{name} is the {rel} of {graduate} and came to watch the graduation."
                    ),
                    name,
                    major: None,
                    relationship: Some(rel.to_string()),
                }
            }
            (None, None) => Persona::test_stub(&name),
        }
    }
}

impl PersonaBackend for StubPersonaBackend {
    fn generate_batch(
        &mut self,
        label: &str,
        requests: &[PersonaRequest],
    ) -> Result<Vec<Persona>, PersonaError> {
        Ok(requests.iter().map(|r| self.persona_for(label, r)).collect())
    }
}

// ---------------------------------------------------------------------------
// spec
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MajorCount {
    pub name: String,
    pub count: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub with_family: u32,
    pub with_friends: u32,
    pub alone: u32,
}

impl Partition {
    pub fn total(&self) -> u32 {
        self.with_family + self.with_friends + self.alone
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub version: u32,
    /// Majors in declaration order; order decides agent-id assignment and the
    /// major-to-seating-section mapping.
    pub majors: Vec<MajorCount>,
    pub accessibility_extra: u32,
    pub partition: Partition,
    pub family_size_range: [u32; 2],
    pub friend_group_size_range: [u32; 2],
    pub seed: u64,
}

impl PopulationSpec {
    pub fn default_spec() -> PopulationSpec {
        Self::from_toml(DEFAULT_POPULATION_TOML).expect("bundled default spec must be valid")
    }

    pub fn from_toml(text: &str) -> Result<PopulationSpec, PopulationError> {
        let spec: PopulationSpec = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn student_total(&self) -> u32 {
        self.majors.iter().map(|m| m.count).sum()
    }

    pub fn validate(&self) -> Result<(), PopulationError> {
        let mut problems = Vec::new();
        if self.version != POPULATION_SCHEMA_VERSION {
            problems.push(format!(
                "unsupported spec version {} (supported: {POPULATION_SCHEMA_VERSION})",
                self.version
            ));
        }
        if self.majors.is_empty() {
            problems.push("at least one major is required".to_string());
        }
        let students = self.student_total();
        if self.partition.total() != students {
            problems.push(format!(
                "partition sums to {} but majors sum to {students}",
                self.partition.total()
            ));
        }
        if self.family_size_range[0] > self.family_size_range[1] {
            problems.push("family_size_range must be lo <= hi".to_string());
        }
        if self.friend_group_size_range[0] > self.friend_group_size_range[1]
            || self.friend_group_size_range[0] == 0
        {
            problems.push("friend_group_size_range must satisfy 1 <= lo <= hi".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(PopulationError::Spec(problems))
        }
    }

    /// Shrink (or grow) the spec to `target` students, preserving the major
    /// mix and partition proportions by largest-remainder apportionment.
    pub fn scaled_students(&self, target: u32) -> PopulationSpec {
        let weights: Vec<u64> = self.majors.iter().map(|m| u64::from(m.count)).collect();
        let counts = apportion(target, &weights);
        let majors = self
            .majors
            .iter()
            .zip(counts)
            .map(|(m, count)| MajorCount {
                name: m.name.clone(),
                count,
            })
            .collect();
        let parts = apportion(
            target,
            &[
                u64::from(self.partition.with_family),
                u64::from(self.partition.with_friends),
                u64::from(self.partition.alone),
            ],
        );
        let students = self.student_total().max(1);
        // Round half up on the scaled accessibility cohort.
        let extra = ((u64::from(self.accessibility_extra) * u64::from(target) * 2
            + u64::from(students))
            / (2 * u64::from(students))) as u32;
        PopulationSpec {
            version: self.version,
            majors,
            accessibility_extra: extra,
            partition: Partition {
                with_family: parts[0],
                with_friends: parts[1],
                alone: parts[2],
            },
            family_size_range: self.family_size_range,
            friend_group_size_range: self.friend_group_size_range,
            seed: self.seed,
        }
    }
}

/// Largest-remainder apportionment of `total` across `weights`. Ties go to
/// earlier entries. Returns all zeros when the weights sum to zero.
pub fn apportion(total: u32, weights: &[u64]) -> Vec<u32> {
    let sum: u128 = weights.iter().map(|w| u128::from(*w)).sum();
    if sum == 0 {
        return vec![0; weights.len()];
    }
    let mut floors: Vec<u32> = Vec::with_capacity(weights.len());
    let mut remainders: Vec<(u128, usize)> = Vec::with_capacity(weights.len());
    for (i, w) in weights.iter().enumerate() {
        let num = u128::from(total) * u128::from(*w);
        floors.push((num / sum) as u32);
        remainders.push((num % sum, i));
    }
    let assigned: u32 = floors.iter().sum();
    let mut leftover = total - assigned;
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for (_, i) in remainders {
        if leftover == 0 {
            break;
        }
        floors[i] += 1;
        leftover -= 1;
    }
    floors
}

// ---------------------------------------------------------------------------
// groups
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKind {
    FamilyGroup,
    FriendGroup,
    Singleton,
}

/// A social unit. Its identity is the sorted member-id tuple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocialGroup {
    pub index: GroupIndex,
    pub kind: GroupKind,
    /// Sorted, duplicate-free member ids — this tuple is the group id.
    pub members: Vec<AgentId>,
}

// ---------------------------------------------------------------------------
// generation
// ---------------------------------------------------------------------------

/// A complete generated population: agents ordered by id plus their groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub agents: Vec<Agent>,
    pub groups: Vec<SocialGroup>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PopulationFile {
    version: u32,
    agents: Vec<Agent>,
    groups: Vec<SocialGroup>,
}

impl Population {
    pub fn total(&self) -> usize {
        self.agents.len()
    }

    pub fn save_json<W: Write>(&self, mut w: W) -> Result<(), PopulationError> {
        let file = PopulationFile {
            version: POPULATION_SCHEMA_VERSION,
            agents: self.agents.clone(),
            groups: self.groups.clone(),
        };
        serde_json::to_writer(&mut w, &file)?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn load_json<R: Read>(r: R) -> Result<Population, PopulationError> {
        let file: PopulationFile = serde_json::from_reader(r)?;
        if file.version != POPULATION_SCHEMA_VERSION {
            return Err(PopulationError::UnsupportedVersion(file.version));
        }
        Ok(Population {
            agents: file.agents,
            groups: file.groups,
        })
    }
}

/// Seeded shuffle-and-split of the student ids into the three categories.
pub fn partition_students<R: Rng>(
    students: &[AgentId],
    partition: &Partition,
    rng: &mut R,
) -> Result<(Vec<AgentId>, Vec<AgentId>, Vec<AgentId>), PopulationError> {
    let needed = partition.total();
    if (students.len() as u32) < needed {
        return Err(PopulationError::InsufficientStudents {
            needed,
            available: students.len() as u32,
        });
    }
    let mut shuffled = students.to_vec();
    shuffled.shuffle(rng);
    let famd = partition.with_family as usize;
    let frnd = partition.with_friends as usize;
    let alone = partition.alone as usize;
    Ok((
        shuffled[..famd].to_vec(),
        shuffled[famd..famd + frnd].to_vec(),
        shuffled[famd + frnd..famd + frnd + alone].to_vec(),
    ))
}

/// Chunk a shuffled pool into friend groups with seeded-uniform sizes.
/// The final remainder group may be smaller than the range minimum.
pub fn form_friend_groups<R: Rng>(
    pool: &[AgentId],
    size_range: [u32; 2],
    rng: &mut R,
) -> Vec<Vec<AgentId>> {
    let mut shuffled = pool.to_vec();
    shuffled.shuffle(rng);
    let mut groups = Vec::new();
    let mut rest = &shuffled[..];
    while !rest.is_empty() {
        let want = rng.gen_range(size_range[0]..=size_range[1]) as usize;
        let take = want.min(rest.len());
        groups.push(rest[..take].to_vec());
        rest = &rest[take..];
    }
    groups
}

struct PlacementZones {
    sections: Vec<Rect>,
    accessibility: Rect,
    family_venues: Vec<Rect>,
}

fn placement_zones(model: &StadiumModel) -> Result<PlacementZones, PopulationError> {
    let sections: Vec<Rect> = model.seating_sections().map(|s| s.rect).collect();
    if sections.is_empty() {
        return Err(PopulationError::MissingFeature("seating sections"));
    }
    let accessibility = model
        .features
        .iter()
        .find(|f| f.kind == FeatureKind::AccessibilityArea)
        .map(|f| f.rect)
        .ok_or(PopulationError::MissingFeature("accessibility area"))?;
    let mut family_venues: Vec<Rect> = model
        .features
        .iter()
        .filter(|f| matches!(f.kind, FeatureKind::FamilyArea | FeatureKind::BleacherArea))
        .map(|f| f.rect)
        .collect();
    if family_venues.is_empty() {
        family_venues.push(accessibility);
    }
    Ok(PlacementZones {
        sections,
        accessibility,
        family_venues,
    })
}

fn uniform_in<R: Rng>(rect: Rect, rng: &mut R) -> Point {
    Point::new(
        rng.gen_range(rect.min_x()..=rect.max_x()),
        rng.gen_range(rect.min_y()..=rect.max_y()),
    )
}

/// Generate the full population: students by major, the accessibility cohort,
/// category partition, family companions, friend groups, and placement.
pub fn generate_population(
    spec: &PopulationSpec,
    model: &StadiumModel,
    backend: &mut dyn PersonaBackend,
) -> Result<Population, PopulationError> {
    spec.validate()?;
    let zones = placement_zones(model)?;
    let seed = MasterSeed(spec.seed);

    // Students: base cohort in major order, then the accessibility cohort
    // apportioned across the same majors.
    struct Draft {
        id: AgentId,
        major_idx: usize,
        persona: Persona,
        accessibility: bool,
    }
    let mut drafts: Vec<Draft> = Vec::new();
    let mut next_id: u32 = 0;
    for (major_idx, major) in spec.majors.iter().enumerate() {
        let requests: Vec<PersonaRequest> = (0..major.count)
            .map(|index| PersonaRequest {
                index,
                major: Some(major.name.clone()),
                graduate: None,
            })
            .collect();
        let label = format!("students/{}", major.name);
        let personas = backend
            .generate_batch(&label, &requests)
            .map_err(|source| PopulationError::Backend {
                batch: label.clone(),
                source,
            })?;
        for persona in personas {
            drafts.push(Draft {
                id: AgentId(next_id),
                major_idx,
                persona,
                accessibility: false,
            });
            next_id += 1;
        }
    }
    let base_count = next_id;

    let weights: Vec<u64> = spec.majors.iter().map(|m| u64::from(m.count)).collect();
    let extra_per_major = apportion(spec.accessibility_extra, &weights);
    for (major_idx, extra) in extra_per_major.iter().enumerate() {
        if *extra == 0 {
            continue;
        }
        let major = &spec.majors[major_idx];
        let requests: Vec<PersonaRequest> = (0..*extra)
            .map(|index| PersonaRequest {
                index,
                major: Some(major.name.clone()),
                graduate: None,
            })
            .collect();
        let label = format!("students_accessibility/{}", major.name);
        let personas = backend
            .generate_batch(&label, &requests)
            .map_err(|source| PopulationError::Backend {
                batch: label.clone(),
                source,
            })?;
        for persona in personas {
            drafts.push(Draft {
                id: AgentId(next_id),
                major_idx,
                persona,
                accessibility: true,
            });
            next_id += 1;
        }
    }

    // Category partition: exact split over the base cohort, uniform draw for
    // each accessibility student.
    let base_ids: Vec<AgentId> = drafts[..base_count as usize].iter().map(|d| d.id).collect();
    let (with_family, with_friends, _alone) = partition_students(
        &base_ids,
        &spec.partition,
        &mut seed.stream("partition"),
    )?;
    let mut category: std::collections::BTreeMap<AgentId, AgentCategory> = base_ids
        .iter()
        .map(|id| (*id, AgentCategory::StudentAlone))
        .collect();
    for id in &with_family {
        category.insert(*id, AgentCategory::StudentWithFamilyOutside);
    }
    for id in &with_friends {
        category.insert(*id, AgentCategory::StudentWithFriendsInside);
    }
    let mut family_students: Vec<AgentId> = with_family;
    let mut friend_pool: Vec<AgentId> = with_friends;
    {
        let mut extras_rng = seed.stream("partition_extras");
        for d in &drafts[base_count as usize..] {
            let cat = match extras_rng.gen_range(0..3u8) {
                0 => AgentCategory::StudentWithFamilyOutside,
                1 => AgentCategory::StudentWithFriendsInside,
                _ => AgentCategory::StudentAlone,
            };
            category.insert(d.id, cat);
            match cat {
                AgentCategory::StudentWithFamilyOutside => family_students.push(d.id),
                AgentCategory::StudentWithFriendsInside => friend_pool.push(d.id),
                _ => {}
            }
        }
    }
    family_students.sort();

    // Families: companions for every family-attended student, in id order.
    let name_of: std::collections::BTreeMap<AgentId, String> = drafts
        .iter()
        .map(|d| (d.id, d.persona.name.clone()))
        .collect();
    struct CompanionDraft {
        id: AgentId,
        persona: Persona,
        venue: Rect,
    }
    let mut companions: Vec<CompanionDraft> = Vec::new();
    let mut family_groups: Vec<Vec<AgentId>> = Vec::new();
    {
        let mut size_rng = seed.stream("family_sizes");
        let mut venue_rng = seed.stream("placement_families");
        for sid in &family_students {
            let size = size_rng.gen_range(spec.family_size_range[0]..=spec.family_size_range[1]);
            let venue = zones.family_venues
                [venue_rng.gen_range(0..zones.family_venues.len())];
            let mut members = vec![*sid];
            if size > 0 {
                let requests: Vec<PersonaRequest> = (0..size)
                    .map(|index| PersonaRequest {
                        index,
                        major: None,
                        graduate: Some(name_of[sid].clone()),
                    })
                    .collect();
                let label = format!("family/agent_{}", sid.0);
                let personas = backend.generate_batch(&label, &requests).map_err(
                    |source| PopulationError::Backend {
                        batch: label.clone(),
                        source,
                    },
                )?;
                for persona in personas {
                    let id = AgentId(next_id);
                    next_id += 1;
                    members.push(id);
                    companions.push(CompanionDraft { id, persona, venue });
                }
            }
            family_groups.push(members);
        }
    }

    let friend_groups = form_friend_groups(
        &friend_pool,
        spec.friend_group_size_range,
        &mut seed.stream("friend_groups"),
    );

    // Assemble groups: families (by student id), then friend groups, then
    // singletons for everyone not yet grouped.
    let mut groups: Vec<SocialGroup> = Vec::new();
    let mut group_of: std::collections::BTreeMap<AgentId, GroupIndex> =
        std::collections::BTreeMap::new();
    let push_group = |groups: &mut Vec<SocialGroup>,
                          group_of: &mut std::collections::BTreeMap<AgentId, GroupIndex>,
                          kind: GroupKind,
                          mut members: Vec<AgentId>| {
        members.sort();
        let index = GroupIndex(groups.len() as u32);
        for m in &members {
            group_of.insert(*m, index);
        }
        groups.push(SocialGroup {
            index,
            kind,
            members,
        });
    };
    for members in family_groups {
        push_group(&mut groups, &mut group_of, GroupKind::FamilyGroup, members);
    }
    for members in friend_groups {
        push_group(&mut groups, &mut group_of, GroupKind::FriendGroup, members);
    }
    for d in &drafts {
        if !group_of.contains_key(&d.id) {
            push_group(
                &mut groups,
                &mut group_of,
                GroupKind::Singleton,
                vec![d.id],
            );
        }
    }

    // Placement and final agent assembly, in id order.
    let mut agents: Vec<Agent> = Vec::with_capacity(next_id as usize);
    {
        let mut place_rng = seed.stream("placement");
        for d in &drafts {
            let zone = if d.accessibility {
                zones.accessibility
            } else {
                zones.sections[d.major_idx % zones.sections.len()]
            };
            let position = uniform_in(zone, &mut place_rng);
            agents.push(Agent::new(
                d.id,
                d.persona.clone(),
                category[&d.id],
                d.accessibility,
                group_of[&d.id],
                position,
            ));
        }
        for c in &companions {
            let position = uniform_in(c.venue, &mut place_rng);
            agents.push(Agent::new(
                c.id,
                c.persona.clone(),
                AgentCategory::FamilyOrFriend,
                false,
                group_of[&c.id],
                position,
            ));
        }
    }
    agents.sort_by_key(|a| a.id);

    Ok(Population { agents, groups })
}
