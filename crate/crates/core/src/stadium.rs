//! The stadium spatial model: canvas, features, exits, and destination
//! regions, loaded from a versioned TOML layout file.
//!
//! Feature ordering is canonical and documented: seating sections first (by
//! id), then pathways, then family/accessibility/bleacher/track areas, then
//! the stage. Containment ties on shared edges resolve to the earlier
//! feature in this ordering.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    compass_bearing, distance_category, CompassBearing, DistanceCategory, GeometryError, Point,
    Rect,
};

pub const LAYOUT_SCHEMA_VERSION: u32 = 1;

/// The default layout shipped with the crate.
pub const DEFAULT_LAYOUT_TOML: &str = include_str!("../fixtures/default_layout.toml");

#[derive(Debug, Error)]
pub enum LayoutError {
    #[error("failed to read layout file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse layout file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unsupported layout schema version {0} (supported: {LAYOUT_SCHEMA_VERSION})")]
    UnsupportedVersion(u32),
    #[error("layout validation failed:\n{}", .0.join("\n"))]
    Invalid(Vec<String>),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Identifier of an exit point ("Exit 1" .. "Exit N").
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct ExitId(pub u32);

impl fmt::Display for ExitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Exit {}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExitPoint {
    pub id: ExitId,
    pub position: Point,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    SeatingSection,
    Pathway,
    FamilyArea,
    AccessibilityArea,
    BleacherArea,
    TrackRegion,
    Stage,
}

impl FeatureKind {
    /// Rank used for the canonical containment ordering.
    fn order_rank(&self) -> u8 {
        match self {
            FeatureKind::SeatingSection => 0,
            FeatureKind::Pathway => 1,
            FeatureKind::FamilyArea => 2,
            FeatureKind::AccessibilityArea => 3,
            FeatureKind::BleacherArea => 4,
            FeatureKind::TrackRegion => 5,
            FeatureKind::Stage => 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StadiumFeature {
    pub id: String,
    pub kind: FeatureKind,
    /// Human-readable name used in rendered context text.
    #[serde(default)]
    pub name: Option<String>,
    pub rect: Rect,
    /// Seat row pitch in pixels (seating sections only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row_spacing: Option<f64>,
    /// Seat column pitch in pixels (seating sections only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub col_spacing: Option<f64>,
    /// Endpoint labels (pathways only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoints: Option<[String; 2]>,
    /// Movement treats this feature as a solid obstacle. The stage is
    /// always impassable regardless of this flag.
    #[serde(default)]
    pub impassable: bool,
}

impl StadiumFeature {
    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            let mut words: Vec<String> = self
                .id
                .split('_')
                .map(|w| w.to_string())
                .collect();
            if let Some(first) = words.first_mut() {
                let mut chars = first.chars();
                if let Some(c) = chars.next() {
                    *first = c.to_uppercase().collect::<String>() + chars.as_str();
                }
            }
            words.join(" ")
        })
    }
}

/// The eight non-exit destinations: five stadium regions and three social
/// gathering areas.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum RegionKind {
    NorthTrack,
    SouthTrack,
    WestTrack,
    EastTrack,
    SouthBleachers,
    WestFamilyArea,
    EastFamilyArea,
    WestSeatingArea,
}

impl RegionKind {
    pub const ALL: [RegionKind; 8] = [
        RegionKind::NorthTrack,
        RegionKind::SouthTrack,
        RegionKind::WestTrack,
        RegionKind::EastTrack,
        RegionKind::SouthBleachers,
        RegionKind::WestFamilyArea,
        RegionKind::EastFamilyArea,
        RegionKind::WestSeatingArea,
    ];

    pub fn key(&self) -> &'static str {
        match self {
            RegionKind::NorthTrack => "north_track",
            RegionKind::SouthTrack => "south_track",
            RegionKind::WestTrack => "west_track",
            RegionKind::EastTrack => "east_track",
            RegionKind::SouthBleachers => "south_bleachers",
            RegionKind::WestFamilyArea => "west_family_area",
            RegionKind::EastFamilyArea => "east_family_area",
            RegionKind::WestSeatingArea => "west_seating_area",
        }
    }

    /// The phrase offered to deciding agents for this region.
    pub fn phrase(&self) -> &'static str {
        match self {
            RegionKind::NorthTrack => "North side of the stadium, track area",
            RegionKind::SouthTrack => "South side of the stadium, track area",
            RegionKind::WestTrack => "West side of the stadium, track area",
            RegionKind::EastTrack => "East side of the stadium, track area",
            RegionKind::SouthBleachers => "South bleachers area",
            RegionKind::WestFamilyArea => "West family and friends area",
            RegionKind::EastFamilyArea => "East family and friends area",
            RegionKind::WestSeatingArea => "West seating sections area",
        }
    }
}

impl fmt::Display for RegionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.phrase())
    }
}

// ---------------------------------------------------------------------------
// layout file schema
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
struct LayoutFile {
    version: u32,
    width: f64,
    height: f64,
    #[serde(default)]
    exits: Vec<ExitEntry>,
    #[serde(default)]
    features: Vec<FeatureEntry>,
    #[serde(default)]
    regions: BTreeMap<String, [f64; 4]>,
}

#[derive(Debug, Deserialize)]
struct ExitEntry {
    id: u32,
    position: [f64; 2],
}

#[derive(Debug, Deserialize)]
struct FeatureEntry {
    id: String,
    kind: FeatureKind,
    #[serde(default)]
    name: Option<String>,
    rect: [f64; 4],
    #[serde(default)]
    row_spacing: Option<f64>,
    #[serde(default)]
    col_spacing: Option<f64>,
    #[serde(default)]
    endpoints: Option<[String; 2]>,
    #[serde(default)]
    impassable: bool,
}

// ---------------------------------------------------------------------------
// model
// ---------------------------------------------------------------------------

/// Immutable spatial model of the venue. Safe to share across threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StadiumModel {
    pub width: f64,
    pub height: f64,
    /// Features in canonical containment order.
    pub features: Vec<StadiumFeature>,
    /// Exits sorted by id.
    pub exits: Vec<ExitPoint>,
    /// Destination region rectangles.
    pub regions: BTreeMap<RegionKind, Rect>,
}

impl StadiumModel {
    /// The canonical 2400x1200 layout shipped with the crate.
    pub fn default_layout() -> StadiumModel {
        Self::from_toml(DEFAULT_LAYOUT_TOML).expect("bundled default layout must be valid")
    }

    pub fn from_file(path: &Path) -> Result<StadiumModel, LayoutError> {
        let text = std::fs::read_to_string(path).map_err(|source| LayoutError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<StadiumModel, LayoutError> {
        let file: LayoutFile = toml::from_str(text)?;
        if file.version != LAYOUT_SCHEMA_VERSION {
            return Err(LayoutError::UnsupportedVersion(file.version));
        }

        let mut features: Vec<StadiumFeature> = file
            .features
            .into_iter()
            .map(|f| StadiumFeature {
                id: f.id,
                kind: f.kind,
                name: f.name,
                rect: Rect::new(f.rect[0], f.rect[1], f.rect[2], f.rect[3]),
                row_spacing: f.row_spacing,
                col_spacing: f.col_spacing,
                endpoints: f.endpoints,
                impassable: f.impassable,
            })
            .collect();
        features.sort_by(|a, b| {
            a.kind
                .order_rank()
                .cmp(&b.kind.order_rank())
                .then_with(|| a.id.cmp(&b.id))
        });

        let mut exits: Vec<ExitPoint> = file
            .exits
            .into_iter()
            .map(|e| ExitPoint {
                id: ExitId(e.id),
                position: Point::new(e.position[0], e.position[1]),
            })
            .collect();
        exits.sort_by_key(|e| e.id);

        let mut regions = BTreeMap::new();
        let mut problems: Vec<String> = Vec::new();
        for (key, r) in &file.regions {
            let kind = RegionKind::ALL.iter().find(|k| k.key() == key);
            match kind {
                Some(k) => {
                    regions.insert(*k, Rect::new(r[0], r[1], r[2], r[3]));
                }
                None => problems.push(format!("unknown destination region '{key}'")),
            }
        }

        let model = StadiumModel {
            width: file.width,
            height: file.height,
            features,
            exits,
            regions,
        };
        model.validate(problems)?;
        Ok(model)
    }

    fn validate(&self, mut problems: Vec<String>) -> Result<(), LayoutError> {
        if self.width <= 0.0 || self.height <= 0.0 {
            problems.push(format!(
                "canvas must have positive size, got {}x{}",
                self.width, self.height
            ));
        }
        let canvas = Rect::new(0.0, 0.0, self.width, self.height);

        let seating = self.seating_sections().count();
        if seating != 8 {
            problems.push(format!("expected exactly 8 seating sections, found {seating}"));
        }
        let stages = self
            .features
            .iter()
            .filter(|f| f.kind == FeatureKind::Stage)
            .count();
        if stages != 1 {
            problems.push(format!("expected exactly 1 stage, found {stages}"));
        }

        let mut seen = std::collections::BTreeSet::new();
        for f in &self.features {
            if !seen.insert(f.id.clone()) {
                problems.push(format!("duplicate feature id '{}'", f.id));
            }
            if f.rect.w <= 0.0 || f.rect.h <= 0.0 {
                problems.push(format!("feature '{}' has non-positive extent", f.id));
            }
            let fits = f.rect.min_x() >= 0.0
                && f.rect.min_y() >= 0.0
                && f.rect.max_x() <= self.width
                && f.rect.max_y() <= self.height;
            if !fits {
                problems.push(format!("feature '{}' extends beyond the canvas", f.id));
            }
            if f.kind == FeatureKind::SeatingSection
                && (f.row_spacing.is_none() || f.col_spacing.is_none())
            {
                problems.push(format!(
                    "seating section '{}' is missing row/col spacing",
                    f.id
                ));
            }
        }

        if self.exits.is_empty() {
            problems.push("layout declares no exits".to_string());
        }
        for (i, a) in self.exits.iter().enumerate() {
            if !canvas.contains(a.position) {
                problems.push(format!("{} lies outside the canvas", a.id));
            }
            for b in &self.exits[i + 1..] {
                if a.id == b.id {
                    problems.push(format!("duplicate exit id {}", a.id));
                }
                if a.position == b.position {
                    problems.push(format!("{} and {} share a position", a.id, b.id));
                }
            }
        }

        for kind in RegionKind::ALL {
            match self.regions.get(&kind) {
                None => problems.push(format!("missing destination region '{}'", kind.key())),
                Some(r) => {
                    if r.w <= 0.0 || r.h <= 0.0 {
                        problems.push(format!(
                            "destination region '{}' has non-positive extent",
                            kind.key()
                        ));
                    }
                }
            }
        }

        if problems.is_empty() {
            Ok(())
        } else {
            Err(LayoutError::Invalid(problems))
        }
    }

    pub fn canvas(&self) -> Rect {
        Rect::new(0.0, 0.0, self.width, self.height)
    }

    pub fn seating_sections(&self) -> impl Iterator<Item = &StadiumFeature> {
        self.features
            .iter()
            .filter(|f| f.kind == FeatureKind::SeatingSection)
    }

    pub fn stage(&self) -> &StadiumFeature {
        self.features
            .iter()
            .find(|f| f.kind == FeatureKind::Stage)
            .expect("validated model always has a stage")
    }

    /// Rectangles movement must route around: the stage plus any feature
    /// flagged impassable.
    pub fn obstacles(&self) -> Vec<Rect> {
        self.features
            .iter()
            .filter(|f| f.kind == FeatureKind::Stage || f.impassable)
            .map(|f| f.rect)
            .collect()
    }

    pub fn exit(&self, id: ExitId) -> Option<&ExitPoint> {
        self.exits.iter().find(|e| e.id == id)
    }

    pub fn region_rect(&self, kind: RegionKind) -> Option<Rect> {
        self.regions.get(&kind).copied()
    }

    /// Clamp a point into the canvas.
    pub fn clamp(&self, p: Point) -> Point {
        Point::new(p.x.clamp(0.0, self.width), p.y.clamp(0.0, self.height))
    }

    /// First feature (in canonical order) whose closed rectangle contains the
    /// point. Errors if the point is off-canvas.
    pub fn containing_feature(&self, p: Point) -> Result<Option<&StadiumFeature>, GeometryError> {
        if !self.canvas().contains(p) {
            return Err(GeometryError::OutOfCanvas(p.x, p.y));
        }
        Ok(self.features.iter().find(|f| f.rect.contains(p)))
    }

    /// All exits ranked by ascending Euclidean distance from `p`, ties broken
    /// by exit id. The bearing is `None` when the point sits exactly on the
    /// exit.
    pub fn rank_exits(&self, p: Point) -> Result<Vec<ExitRanking>, GeometryError> {
        if !self.canvas().contains(p) {
            return Err(GeometryError::OutOfCanvas(p.x, p.y));
        }
        let mut ranked: Vec<ExitRanking> = self
            .exits
            .iter()
            .map(|e| {
                let d = p.distance_to(e.position);
                ExitRanking {
                    exit: *e,
                    distance: d,
                    bearing: compass_bearing(p, e.position).ok(),
                    category: distance_category(d).expect("distance is non-negative"),
                }
            })
            .collect();
        ranked.sort_by(|a, b| {
            a.distance
                .partial_cmp(&b.distance)
                .expect("distances are finite")
                .then_with(|| a.exit.id.cmp(&b.exit.id))
        });
        Ok(ranked)
    }
}

/// One row of an exit ranking: exit, straight-line distance, bearing from the
/// query point, and the descriptive distance band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExitRanking {
    pub exit: ExitPoint,
    pub distance: f64,
    pub bearing: Option<CompassBearing>,
    pub category: DistanceCategory,
}
