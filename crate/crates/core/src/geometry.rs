//! Planar primitives shared by every spatial subsystem: points, axis-aligned
//! rectangles, eight-direction compass bearings, categorical distances, and
//! segment/rectangle intersection.
//!
//! The coordinate convention is pixel-canvas style: x grows to the right,
//! y grows downward, so "north" means smaller y.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("coordinate ({0}, {1}) lies outside the canvas")]
    OutOfCanvas(f64, f64),
    #[error("bearing is undefined when both points coincide")]
    UndefinedBearing,
    #[error("distance must be non-negative, got {0}")]
    NegativeDistance(f64),
}

/// A position in continuous pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance_to(&self, other: Point) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Point { x, y }
    }
}

/// Axis-aligned rectangle stored as origin plus extent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Rect {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Rect { x, y, w, h }
    }

    pub fn min_x(&self) -> f64 {
        self.x
    }

    pub fn max_x(&self) -> f64 {
        self.x + self.w
    }

    pub fn min_y(&self) -> f64 {
        self.y
    }

    pub fn max_y(&self) -> f64 {
        self.y + self.h
    }

    pub fn center(&self) -> Point {
        Point::new(self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    /// Closed-bound containment: points on the boundary count as inside.
    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min_x() && p.x <= self.max_x() && p.y >= self.min_y() && p.y <= self.max_y()
    }

    /// Open-bound containment: the boundary itself does not count.
    pub fn contains_strict(&self, p: Point) -> bool {
        p.x > self.min_x() && p.x < self.max_x() && p.y > self.min_y() && p.y < self.max_y()
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.min_x() <= other.max_x()
            && other.min_x() <= self.max_x()
            && self.min_y() <= other.max_y()
            && other.min_y() <= self.max_y()
    }

    /// Euclidean distance from a point to the rectangle (0 inside or on it).
    pub fn distance_to_point(&self, p: Point) -> f64 {
        let dx = (self.min_x() - p.x).max(0.0).max(p.x - self.max_x());
        let dy = (self.min_y() - p.y).max(0.0).max(p.y - self.max_y());
        (dx * dx + dy * dy).sqrt()
    }
}

/// Eight-direction compass bearing under the y-down convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompassBearing {
    North,
    NorthEast,
    East,
    SouthEast,
    South,
    SouthWest,
    West,
    NorthWest,
}

impl CompassBearing {
    pub const ALL: [CompassBearing; 8] = [
        CompassBearing::North,
        CompassBearing::NorthEast,
        CompassBearing::East,
        CompassBearing::SouthEast,
        CompassBearing::South,
        CompassBearing::SouthWest,
        CompassBearing::West,
        CompassBearing::NorthWest,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            CompassBearing::North => "north",
            CompassBearing::NorthEast => "northeast",
            CompassBearing::East => "east",
            CompassBearing::SouthEast => "southeast",
            CompassBearing::South => "south",
            CompassBearing::SouthWest => "southwest",
            CompassBearing::West => "west",
            CompassBearing::NorthWest => "northwest",
        }
    }
}

impl std::fmt::Display for CompassBearing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Maps the direction `from -> to` onto eight 45-degree sectors, each centered
/// on a compass direction. Sectors are half-open: the clockwise boundary of a
/// sector belongs to the next direction (e.g. exactly 22.5 degrees from east
/// is southeast under the y-down convention).
pub fn compass_bearing(from: Point, to: Point) -> Result<CompassBearing, GeometryError> {
    if from == to {
        return Err(GeometryError::UndefinedBearing);
    }
    let angle = (to.y - from.y).atan2(to.x - from.x).to_degrees();
    // Normalize into [0, 360) with east at 0 and south at 90 (y grows down).
    let norm = (angle + 360.0) % 360.0;
    let sector = ((norm + 22.5) / 45.0).floor() as usize % 8;
    const ORDER: [CompassBearing; 8] = [
        CompassBearing::East,
        CompassBearing::SouthEast,
        CompassBearing::South,
        CompassBearing::SouthWest,
        CompassBearing::West,
        CompassBearing::NorthWest,
        CompassBearing::North,
        CompassBearing::NorthEast,
    ];
    Ok(ORDER[sector])
}

/// Descriptive distance band. Bins are half-open with boundaries assigned
/// upward: [0,50) [50,150) [150,400) [400,800) [800,inf).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceCategory {
    ExtremelyClose,
    Near,
    ModeratelyFar,
    Far,
    VeryFar,
}

impl DistanceCategory {
    pub fn label(&self) -> &'static str {
        match self {
            DistanceCategory::ExtremelyClose => "extremely close",
            DistanceCategory::Near => "near",
            DistanceCategory::ModeratelyFar => "moderately far",
            DistanceCategory::Far => "far",
            DistanceCategory::VeryFar => "very far",
        }
    }
}

impl std::fmt::Display for DistanceCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

pub fn distance_category(d: f64) -> Result<DistanceCategory, GeometryError> {
    if d < 0.0 || d.is_nan() {
        return Err(GeometryError::NegativeDistance(d));
    }
    Ok(if d < 50.0 {
        DistanceCategory::ExtremelyClose
    } else if d < 150.0 {
        DistanceCategory::Near
    } else if d < 400.0 {
        DistanceCategory::ModeratelyFar
    } else if d < 800.0 {
        DistanceCategory::Far
    } else {
        DistanceCategory::VeryFar
    })
}

/// Earliest intersection of the segment `a -> b` with the closed rectangle,
/// or `None` if the segment misses it entirely. When `a` starts inside (or on
/// the boundary of) the rectangle, `a` itself is returned.
pub fn segment_rect_intersection(a: Point, b: Point, rect: &Rect) -> Option<Point> {
    if rect.contains(a) {
        return Some(a);
    }
    let (t0, _t1) = clip_segment(a, b, rect)?;
    Some(Point::new(a.x + (b.x - a.x) * t0, a.y + (b.y - a.y) * t0))
}

/// Liang-Barsky clip of `a -> b` against the rectangle. Returns the parameter
/// interval [t0, t1] within [0, 1] for which the segment lies in the closed
/// rectangle, or `None` if it never touches it.
pub(crate) fn clip_segment(a: Point, b: Point, rect: &Rect) -> Option<(f64, f64)> {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let mut t0: f64 = 0.0;
    let mut t1: f64 = 1.0;
    let checks = [
        (-dx, a.x - rect.min_x()),
        (dx, rect.max_x() - a.x),
        (-dy, a.y - rect.min_y()),
        (dy, rect.max_y() - a.y),
    ];
    for (p, q) in checks {
        if p == 0.0 {
            if q < 0.0 {
                return None; // parallel and outside this slab
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                if r > t1 {
                    return None;
                }
                if r > t0 {
                    t0 = r;
                }
            } else {
                if r < t0 {
                    return None;
                }
                if r < t1 {
                    t1 = r;
                }
            }
        }
    }
    Some((t0, t1))
}

/// True when the segment `a -> b` passes through the rectangle's interior
/// (touching only the boundary does not count).
pub(crate) fn segment_enters_interior(a: Point, b: Point, rect: &Rect) -> bool {
    let Some((t0, t1)) = clip_segment(a, b, rect) else {
        return false;
    };
    if t1 <= t0 {
        return false; // single-point graze
    }
    // Probe the midpoint of the clipped span: strictly inside means the
    // segment genuinely crosses the interior rather than running on an edge.
    let tm = (t0 + t1) / 2.0;
    rect.contains_strict(Point::new(a.x + (b.x - a.x) * tm, a.y + (b.y - a.y) * tm))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bearing_axis_aligned_east() {
        let b = compass_bearing(Point::new(0.0, 0.0), Point::new(100.0, 0.0)).unwrap();
        assert_eq!(b, CompassBearing::East);
    }

    #[test]
    fn bearing_diagonal_is_southeast_with_y_down() {
        let b = compass_bearing(Point::new(0.0, 0.0), Point::new(100.0, 100.0)).unwrap();
        assert_eq!(b, CompassBearing::SouthEast);
    }

    #[test]
    fn bearing_steep_up_is_north() {
        // atan2(-100, 30) = -73.3 degrees, inside the north sector
        // [-112.5, -67.5) under y-down.
        let b = compass_bearing(Point::new(0.0, 0.0), Point::new(30.0, -100.0)).unwrap();
        assert_eq!(b, CompassBearing::North);
    }

    #[test]
    fn bearing_identical_points_is_error() {
        let e = compass_bearing(Point::new(5.0, 5.0), Point::new(5.0, 5.0));
        assert_eq!(e, Err(GeometryError::UndefinedBearing));
    }

    #[test]
    fn bearing_partitions_circle_evenly() {
        // 3600 uniformly spaced directions: every sample maps to exactly one
        // direction and each direction covers 450 samples (+-1 at boundaries).
        let mut counts = std::collections::HashMap::new();
        for i in 0..3600 {
            let theta = (i as f64) * 0.1_f64.to_radians();
            let to = Point::new(100.0 * theta.cos(), 100.0 * theta.sin());
            let b = compass_bearing(Point::new(0.0, 0.0), to).unwrap();
            *counts.entry(b).or_insert(0u32) += 1;
        }
        assert_eq!(counts.len(), 8);
        for dir in CompassBearing::ALL {
            let c = counts[&dir];
            assert!((449..=451).contains(&c), "{dir}: {c} samples");
        }
    }

    #[test]
    fn distance_categories_pin_boundaries() {
        assert_eq!(distance_category(0.0).unwrap(), DistanceCategory::ExtremelyClose);
        assert_eq!(distance_category(100.0).unwrap(), DistanceCategory::Near);
        assert_eq!(distance_category(50.0).unwrap(), DistanceCategory::Near);
        assert_eq!(distance_category(150.0).unwrap(), DistanceCategory::ModeratelyFar);
        assert_eq!(distance_category(400.0).unwrap(), DistanceCategory::Far);
        assert_eq!(distance_category(800.0).unwrap(), DistanceCategory::VeryFar);
        assert!(distance_category(-1.0).is_err());
    }

    #[test]
    fn distance_category_is_monotone() {
        let mut prev = DistanceCategory::ExtremelyClose;
        for i in 0..=10_000 {
            let d = i as f64 * 0.1;
            let c = distance_category(d).unwrap();
            assert!(c >= prev, "category regressed at d={d}");
            prev = c;
        }
    }

    #[test]
    fn segment_hits_left_edge() {
        let r = Rect::new(10.0, 10.0, 20.0, 20.0);
        let hit = segment_rect_intersection(Point::new(0.0, 20.0), Point::new(40.0, 20.0), &r)
            .unwrap();
        assert!((hit.x - 10.0).abs() < 1e-12);
        assert!((hit.y - 20.0).abs() < 1e-12);
    }

    #[test]
    fn segment_entirely_outside_misses() {
        let r = Rect::new(10.0, 10.0, 20.0, 20.0);
        assert!(segment_rect_intersection(Point::new(0.0, 0.0), Point::new(5.0, 40.0), &r)
            .is_none());
    }

    #[test]
    fn segment_starting_inside_returns_start() {
        let r = Rect::new(10.0, 10.0, 20.0, 20.0);
        let a = Point::new(15.0, 15.0);
        assert_eq!(segment_rect_intersection(a, Point::new(100.0, 100.0), &r), Some(a));
    }

    #[test]
    fn degenerate_segment_outside_misses() {
        let r = Rect::new(10.0, 10.0, 20.0, 20.0);
        let a = Point::new(0.0, 0.0);
        assert!(segment_rect_intersection(a, a, &r).is_none());
    }

    #[test]
    fn segment_grazing_corner_returns_corner() {
        // Diagonal through the exact corner (10,30) of the rect.
        let r = Rect::new(10.0, 10.0, 20.0, 20.0);
        let hit = segment_rect_intersection(Point::new(0.0, 40.0), Point::new(20.0, 20.0), &r)
            .unwrap();
        // Cross-check against a parametric fine-step scan.
        let oracle = corner_graze_oracle(Point::new(0.0, 40.0), Point::new(20.0, 20.0), &r);
        assert!((hit.x - oracle.x).abs() < 1e-6 && (hit.y - oracle.y).abs() < 1e-6);
        assert!((hit.x - 10.0).abs() < 1e-9 && (hit.y - 30.0).abs() < 1e-9);
    }

    // Independent oracle: march the segment at fine parametric resolution and
    // bisect the first step whose endpoint touches the closed rectangle.
    fn corner_graze_oracle(a: Point, b: Point, r: &Rect) -> Point {
        let steps = 100_000;
        for i in 0..=steps {
            let t = i as f64 / steps as f64;
            let p = Point::new(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t);
            if r.contains(p) {
                return p;
            }
        }
        panic!("oracle found no touch point");
    }

    #[test]
    fn interior_entry_ignores_edge_runs() {
        let r = Rect::new(10.0, 10.0, 20.0, 20.0);
        // Runs exactly along the top edge: touches but never enters.
        assert!(!segment_enters_interior(
            Point::new(0.0, 10.0),
            Point::new(40.0, 10.0),
            &r
        ));
        assert!(segment_enters_interior(
            Point::new(0.0, 20.0),
            Point::new(40.0, 20.0),
            &r
        ));
    }

    #[test]
    fn intersection_point_lies_on_boundary() {
        // Property: any returned point (for a start outside) is on the
        // rectangle boundary to within 1e-9.
        let r = Rect::new(100.0, 100.0, 50.0, 80.0);
        let mut hits = 0;
        for i in 0..500 {
            let a = Point::new((i * 7 % 400) as f64, (i * 13 % 400) as f64);
            let b = Point::new((i * 11 % 400) as f64, (i * 5 % 400) as f64);
            if r.contains(a) {
                continue;
            }
            if let Some(p) = segment_rect_intersection(a, b, &r) {
                hits += 1;
                let on_x = (p.x - r.min_x()).abs() < 1e-9 || (p.x - r.max_x()).abs() < 1e-9;
                let on_y = (p.y - r.min_y()).abs() < 1e-9 || (p.y - r.max_y()).abs() < 1e-9;
                assert!(
                    (on_x && p.y >= r.min_y() - 1e-9 && p.y <= r.max_y() + 1e-9)
                        || (on_y && p.x >= r.min_x() - 1e-9 && p.x <= r.max_x() + 1e-9),
                    "hit {p:?} not on boundary"
                );
            }
        }
        assert!(hits > 0);
    }

    #[test]
    fn rect_distance_to_point() {
        let r = Rect::new(10.0, 10.0, 20.0, 20.0);
        assert_eq!(r.distance_to_point(Point::new(15.0, 15.0)), 0.0);
        assert_eq!(r.distance_to_point(Point::new(10.0, 5.0)), 5.0);
        let d = r.distance_to_point(Point::new(0.0, 0.0));
        assert!((d - (200.0_f64).sqrt()).abs() < 1e-12);
    }
}
