//! Movement mechanics: crowd-density counting, the density-adjusted speed
//! model, obstacle-sliding pathfinding, and arrival detection.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::agents::{Agent, AgentState, TransitionEvent};
use crate::geometry::{segment_enters_interior, segment_rect_intersection, Point, Rect};

/// Arrival counts once an agent is within this many pixels of its target.
pub const ARRIVAL_TOLERANCE: f64 = 50.0;

/// Speed and density constants. Defaults are the published model values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpeedParams {
    /// Base speed, standard agents (px/round).
    pub base_standard: f64,
    /// Base speed, agents with accessibility needs (px/round).
    pub base_accessibility: f64,
    /// Speed floor, standard agents.
    pub min_standard: f64,
    /// Speed floor, agents with accessibility needs.
    pub min_accessibility: f64,
    /// Multiplier applied to the base speed near a coordinator.
    pub coordinator_boost_factor: f64,
    /// Neighbor count at or below which movement is unimpeded.
    pub density_free_threshold: u32,
    /// Neighbor count at or above which the density factor reaches zero.
    pub density_jam_threshold: u32,
    /// Radius of the neighbor count, in pixels.
    pub density_radius: f64,
}

impl Default for SpeedParams {
    fn default() -> SpeedParams {
        SpeedParams {
            base_standard: 24.0,
            base_accessibility: 16.0,
            min_standard: 6.4,
            min_accessibility: 4.8,
            coordinator_boost_factor: 1.33,
            density_free_threshold: 4,
            density_jam_threshold: 30,
            density_radius: 20.0,
        }
    }
}

impl SpeedParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.min_standard >= self.base_standard
            || self.min_accessibility >= self.base_accessibility
        {
            return Err("speed floors must be below base speeds".to_string());
        }
        if self.density_free_threshold >= self.density_jam_threshold {
            return Err("density free threshold must be below jam threshold".to_string());
        }
        if self.density_radius <= 0.0 {
            return Err("density radius must be positive".to_string());
        }
        Ok(())
    }
}

/// Density-adjusted speed for one agent this round.
///
/// The coordinator boost multiplies the base speed before the density factor
/// is applied; the speed floor itself is never boosted.
pub fn adjusted_speed(
    accessibility: bool,
    nearby_count: u32,
    coordinator_near: bool,
    params: &SpeedParams,
) -> f64 {
    let mut base = if accessibility {
        params.base_accessibility
    } else {
        params.base_standard
    };
    if coordinator_near {
        base *= params.coordinator_boost_factor;
    }
    let free = f64::from(params.density_free_threshold);
    let jam = f64::from(params.density_jam_threshold);
    let factor = if nearby_count <= params.density_free_threshold {
        1.0
    } else if nearby_count >= params.density_jam_threshold {
        0.0
    } else {
        1.0 - (f64::from(nearby_count) - free) / (jam - free)
    };
    let min = if accessibility {
        params.min_accessibility
    } else {
        params.min_standard
    };
    min.max(base * factor)
}

/// For each point, the number of *other* points within `radius` (inclusive).
///
/// Uses a uniform grid of `radius`-sized cells; results are identical to the
/// quadratic pairwise count.
pub fn neighbor_counts(points: &[Point], radius: f64) -> Vec<u32> {
    let r2 = radius * radius;
    let cell = |p: Point| -> (i64, i64) {
        (
            (p.x / radius).floor() as i64,
            (p.y / radius).floor() as i64,
        )
    };
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        grid.entry(cell(*p)).or_default().push(i);
    }
    let mut counts = vec![0u32; points.len()];
    for (i, p) in points.iter().enumerate() {
        let (cx, cy) = cell(*p);
        let mut n = 0u32;
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(bucket) = grid.get(&(cx + dx, cy + dy)) {
                    for &j in bucket {
                        if j == i {
                            continue;
                        }
                        let q = points[j];
                        let ddx = p.x - q.x;
                        let ddy = p.y - q.y;
                        if ddx * ddx + ddy * ddy <= r2 {
                            n += 1;
                        }
                    }
                }
            }
        }
        counts[i] = n;
    }
    counts
}

/// Direction candidates for sliding along an obstacle edge from `p`: the unit
/// vectors along every edge of `rect` passing through `p`.
fn edge_directions(p: Point, rect: &Rect) -> Vec<Point> {
    const EPS: f64 = 1e-9;
    let mut dirs = Vec::with_capacity(4);
    if (p.x - rect.min_x()).abs() < EPS || (p.x - rect.max_x()).abs() < EPS {
        dirs.push(Point::new(0.0, 1.0));
        dirs.push(Point::new(0.0, -1.0));
    }
    if (p.y - rect.min_y()).abs() < EPS || (p.y - rect.max_y()).abs() < EPS {
        dirs.push(Point::new(1.0, 0.0));
        dirs.push(Point::new(-1.0, 0.0));
    }
    dirs
}

/// Distance from `p` to the end of `rect`'s edge when travelling along `dir`.
fn distance_to_corner(p: Point, dir: Point, rect: &Rect) -> f64 {
    if dir.x > 0.5 {
        rect.max_x() - p.x
    } else if dir.x < -0.5 {
        p.x - rect.min_x()
    } else if dir.y > 0.5 {
        rect.max_y() - p.y
    } else {
        p.y - rect.min_y()
    }
}

/// Advance one agent by up to `speed` pixels toward `target`, sliding along
/// obstacle edges when the direct line is blocked and never overshooting the
/// target. A slide stops at the point on the edge nearest the target (or the
/// corner, if that comes first); an agent blocked dead-on therefore holds at
/// the edge rather than drifting sideways. Obstacles whose interior already
/// contains `current` do not block (an agent that starts inside may walk
/// out). The result is clamped to the canvas.
pub fn step_position(
    canvas: Rect,
    obstacles: &[Rect],
    current: Point,
    target: Point,
    speed: f64,
) -> Point {
    const EPS: f64 = 1e-9;
    let clamp = |p: Point| -> Point {
        Point::new(
            p.x.clamp(canvas.min_x(), canvas.max_x()),
            p.y.clamp(canvas.min_y(), canvas.max_y()),
        )
    };
    if speed <= 0.0 {
        return clamp(current);
    }
    // Obstacles the agent starts inside never block this step.
    let active: Vec<Rect> = obstacles
        .iter()
        .filter(|o| !o.contains_strict(current))
        .copied()
        .collect();

    let mut pos = current;
    let mut budget = speed;
    for _ in 0..16 {
        let dist = pos.distance_to(target);
        if budget <= EPS || dist <= EPS {
            break;
        }
        let reach = budget.min(dist);
        let dir = Point::new((target.x - pos.x) / dist, (target.y - pos.y) / dist);
        let intended = Point::new(pos.x + dir.x * reach, pos.y + dir.y * reach);

        // Earliest blocking obstacle along pos -> intended.
        let mut first: Option<(f64, Point, Rect)> = None;
        for o in &active {
            if !segment_enters_interior(pos, intended, o) {
                continue;
            }
            if let Some(hit) = segment_rect_intersection(pos, intended, o) {
                let t = pos.distance_to(hit);
                if first.as_ref().map_or(true, |(best, _, _)| t < *best) {
                    first = Some((t, hit, *o));
                }
            }
        }

        let Some((traveled, hit, rect)) = first else {
            pos = intended;
            break;
        };

        budget -= traveled;
        pos = hit;
        if budget <= EPS {
            break;
        }

        // Slide the remaining displacement along the blocking edge, stopping
        // at the corner or at the point on the edge nearest the target,
        // whichever comes first; the loop then re-attempts direct movement.
        // Sliding past that nearest point would move away from the target,
        // which the fine-grained reference walker never does.
        let mut best: Option<(f64, Point, f64)> = None;
        for dir in edge_directions(pos, &rect) {
            let toward = (target.x - pos.x) * dir.x + (target.y - pos.y) * dir.y;
            let len = budget
                .min(distance_to_corner(pos, dir, &rect).max(0.0))
                .min(toward.max(0.0));
            let end = Point::new(pos.x + dir.x * len, pos.y + dir.y * len);
            let score = end.distance_to(target);
            let better = match &best {
                None => true,
                Some((s, b, _)) => {
                    score < *s - EPS
                        || (score <= *s + EPS
                            && (end.x < b.x - EPS || (end.x <= b.x + EPS && end.y < b.y - EPS)))
                }
            };
            if better {
                best = Some((score, end, len));
            }
        }
        match best {
            Some((_, end, len)) if len > EPS => {
                pos = end;
                budget -= len;
            }
            _ => break, // wedged against the obstacle with nowhere to slide
        }
    }
    clamp(pos)
}

/// Arrival check for a MOVING agent: within tolerance of its target, exits
/// produce an exit event and regions a waiting event.
pub fn check_arrival(agent: &Agent, tolerance: f64) -> Option<TransitionEvent> {
    if agent.state != AgentState::Moving {
        return None;
    }
    let target = agent.target?;
    let destination = agent.destination?;
    if agent.position.distance_to(target) <= tolerance {
        if destination.is_exit() {
            Some(TransitionEvent::ArrivedAtExit)
        } else {
            Some(TransitionEvent::ArrivedAtRegion)
        }
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{AgentCategory, AgentId, Destination, GroupIndex};
    use crate::population::Persona;
    use crate::stadium::{ExitId, StadiumModel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const P: SpeedParams = SpeedParams {
        base_standard: 24.0,
        base_accessibility: 16.0,
        min_standard: 6.4,
        min_accessibility: 4.8,
        coordinator_boost_factor: 1.33,
        density_free_threshold: 4,
        density_jam_threshold: 30,
        density_radius: 20.0,
    };

    #[test]
    fn speed_anchor_values() {
        assert_eq!(adjusted_speed(false, 0, false, &P), 24.0);
        assert_eq!(adjusted_speed(false, 4, false, &P), 24.0);
        // count 17: factor = 1 - 13/26 = 0.5
        assert_eq!(adjusted_speed(false, 17, false, &P), 12.0);
        assert_eq!(adjusted_speed(true, 30, false, &P), 4.8);
        assert_eq!(adjusted_speed(true, 100, false, &P), 4.8);
        assert_eq!(adjusted_speed(false, 0, true, &P), 24.0 * 1.33);
        assert_eq!(adjusted_speed(true, 0, true, &P), 16.0 * 1.33);
        // Boost applies to the base before the density factor.
        assert_eq!(adjusted_speed(false, 17, true, &P), 24.0 * 1.33 * 0.5);
    }

    #[test]
    fn speed_is_monotone_and_bounded() {
        for accessibility in [false, true] {
            for coordinator in [false, true] {
                let mut prev = f64::INFINITY;
                for count in 0..=120 {
                    let s = adjusted_speed(accessibility, count, coordinator, &P);
                    assert!(s <= prev + 1e-12, "speed increased at count {count}");
                    let min = if accessibility { 4.8 } else { 6.4 };
                    let base = if accessibility { 16.0 } else { 24.0 };
                    assert!(s >= min - 1e-12);
                    assert!(s <= base * 1.33 + 1e-12);
                    prev = s;
                }
            }
        }
    }

    #[test]
    fn density_trivial_cases() {
        assert_eq!(neighbor_counts(&[Point::new(0.0, 0.0)], 20.0), vec![0]);
        let pair = [Point::new(0.0, 0.0), Point::new(10.0, 0.0)];
        assert_eq!(neighbor_counts(&pair, 20.0), vec![1, 1]);
        // Exactly on the radius counts as within.
        let edge = [Point::new(0.0, 0.0), Point::new(20.0, 0.0)];
        assert_eq!(neighbor_counts(&edge, 20.0), vec![1, 1]);
        let far = [Point::new(0.0, 0.0), Point::new(20.1, 0.0)];
        assert_eq!(neighbor_counts(&far, 20.0), vec![0, 0]);
    }

    fn brute_force_counts(points: &[Point], radius: f64) -> Vec<u32> {
        let r2 = radius * radius;
        points
            .iter()
            .map(|p| {
                points
                    .iter()
                    .filter(|q| !std::ptr::eq(*q, p))
                    .filter(|q| {
                        let dx = p.x - q.x;
                        let dy = p.y - q.y;
                        dx * dx + dy * dy <= r2
                    })
                    .count() as u32
            })
            .collect()
    }

    #[test]
    fn density_grid_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for case in 0..10 {
            let n = 500;
            // Cluster tightly every other case so buckets actually fill.
            let span = if case % 2 == 0 { 2400.0 } else { 300.0 };
            let points: Vec<Point> = (0..n)
                .map(|_| Point::new(rng.gen_range(0.0..span), rng.gen_range(0.0..span / 2.0)))
                .collect();
            assert_eq!(
                neighbor_counts(&points, 20.0),
                brute_force_counts(&points, 20.0),
                "case {case}"
            );
        }
    }

    fn default_world() -> (Rect, Vec<Rect>) {
        let m = StadiumModel::default_layout();
        (m.canvas(), m.obstacles())
    }

    #[test]
    fn unobstructed_step_advances_by_speed() {
        let (canvas, _) = default_world();
        let p = step_position(canvas, &[], Point::new(0.0, 0.0), Point::new(100.0, 0.0), 24.0);
        assert_eq!(p, Point::new(24.0, 0.0));
    }

    #[test]
    fn step_never_overshoots_target() {
        let (canvas, _) = default_world();
        let p = step_position(canvas, &[], Point::new(0.0, 0.0), Point::new(10.0, 0.0), 24.0);
        assert_eq!(p, Point::new(10.0, 0.0));
    }

    #[test]
    fn head_on_block_slides_along_stage_edge() {
        let (canvas, obstacles) = default_world();
        // Stage is [1050,500]..[1350,700]. Approach from the west toward a
        // target behind the stage and slightly north, so the walker slides
        // north along the west edge toward the target's projection.
        let start = Point::new(1020.0, 590.0);
        let target = Point::new(1400.0, 570.0);
        let p = step_position(canvas, &obstacles, start, target, 40.0);
        // Stopped at the west edge (x=1050) and slid north along it, but not
        // past the target's y.
        assert!((p.x - 1050.0).abs() < 1e-9, "expected stage west edge, got {p:?}");
        let hit_y = 590.0 - (30.0 / 380.0) * 20.0;
        assert!(p.y < hit_y, "should slide north from the hit point, got {p:?}");
        assert!(p.y > 570.0, "must not slide past the target's projection");
        // Displacement spent exactly the speed budget.
        let hit = Point::new(1050.0, hit_y);
        let traveled = start.distance_to(hit) + hit.distance_to(p);
        assert!((traveled - 40.0).abs() < 1e-6, "traveled {traveled}");
    }

    #[test]
    fn dead_on_block_holds_at_edge() {
        let (canvas, obstacles) = default_world();
        // Target directly behind the stage at the same y: every point of the
        // edge is farther from the target than the hit point, so the walker
        // holds there instead of drifting toward a corner.
        let start = Point::new(1000.0, 600.0);
        let target = Point::new(1400.0, 600.0);
        let p = step_position(canvas, &obstacles, start, target, 60.0);
        assert_eq!(p, Point::new(1050.0, 600.0));
    }

    #[test]
    fn agent_inside_stage_may_walk_out() {
        let (canvas, obstacles) = default_world();
        let start = Point::new(1200.0, 600.0); // stage interior
        let target = Point::new(1200.0, 100.0);
        let p = step_position(canvas, &obstacles, start, target, 24.0);
        assert_eq!(p, Point::new(1200.0, 576.0));
    }

    #[test]
    fn result_is_clamped_to_canvas() {
        let (canvas, _) = default_world();
        let p = step_position(canvas, &[], Point::new(5.0, 5.0), Point::new(-100.0, -100.0), 24.0);
        assert!(p.x >= 0.0 && p.y >= 0.0);
    }

    /// Fine-step reference: march 0.1 px at a time toward the target, taking
    /// the best non-blocked cardinal step whenever the direct one is blocked.
    fn marching_oracle(
        canvas: Rect,
        obstacles: &[Rect],
        current: Point,
        target: Point,
        speed: f64,
    ) -> Point {
        let active: Vec<Rect> = obstacles
            .iter()
            .filter(|o| !o.contains_strict(current))
            .copied()
            .collect();
        let blocked = |a: Point, b: Point| -> bool {
            active.iter().any(|o| segment_enters_interior(a, b, o))
        };
        let mut pos = current;
        let mut budget = speed;
        while budget > 1e-9 {
            let dist = pos.distance_to(target);
            if dist <= 1e-9 {
                break;
            }
            let step = budget.min(0.1).min(dist);
            let dir = Point::new((target.x - pos.x) / dist, (target.y - pos.y) / dist);
            let cand = Point::new(pos.x + dir.x * step, pos.y + dir.y * step);
            if !blocked(pos, cand) {
                pos = cand;
                budget -= step;
                continue;
            }
            let mut best: Option<(f64, Point)> = None;
            for d in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)] {
                let cand = Point::new(pos.x + d.0 * step, pos.y + d.1 * step);
                if blocked(pos, cand) {
                    continue;
                }
                let score = cand.distance_to(target);
                let better = match &best {
                    None => true,
                    Some((s, b)) => {
                        score < *s - 1e-9
                            || (score <= *s + 1e-9
                                && (cand.x < b.x - 1e-9
                                    || (cand.x <= b.x + 1e-9 && cand.y < b.y - 1e-9)))
                    }
                };
                if better {
                    best = Some((score, cand));
                }
            }
            match best {
                Some((_, cand)) => {
                    pos = cand;
                    budget -= step;
                }
                None => break,
            }
        }
        Point::new(
            pos.x.clamp(canvas.min_x(), canvas.max_x()),
            pos.y.clamp(canvas.min_y(), canvas.max_y()),
        )
    }

    #[test]
    fn step_position_tracks_marching_oracle() {
        let (canvas, obstacles) = default_world();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut worst: f64 = 0.0;
        for case in 0..2_000 {
            let current = Point::new(rng.gen_range(0.0..2400.0), rng.gen_range(0.0..1200.0));
            let target = Point::new(rng.gen_range(0.0..2400.0), rng.gen_range(0.0..1200.0));
            let speed = rng.gen_range(0.0..40.0);
            let fast = step_position(canvas, &obstacles, current, target, speed);
            let slow = marching_oracle(canvas, &obstacles, current, target, speed);
            let div = fast.distance_to(slow);
            worst = worst.max(div);
            assert!(
                div <= 0.5,
                "case {case}: {current:?} -> {target:?} @ {speed}: fast {fast:?} vs slow {slow:?}"
            );
            // Invariants alongside the oracle comparison.
            assert!(canvas.contains(fast), "case {case}: escaped canvas");
            let started_inside = obstacles.iter().any(|o| o.contains_strict(current));
            if !started_inside {
                assert!(
                    !obstacles.iter().any(|o| o.contains_strict(fast)),
                    "case {case}: ended inside an obstacle"
                );
            }
            let moved = current.distance_to(fast);
            assert!(moved <= speed + 1e-6, "case {case}: moved {moved} > {speed}");
        }
        assert!(worst <= 0.5, "max divergence {worst}");
    }

    #[test]
    fn unobstructed_movement_never_increases_distance() {
        let (canvas, _) = default_world();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5_000 {
            let current = Point::new(rng.gen_range(0.0..2400.0), rng.gen_range(0.0..1200.0));
            let target = Point::new(rng.gen_range(0.0..2400.0), rng.gen_range(0.0..1200.0));
            let speed = rng.gen_range(0.0..40.0);
            let next = step_position(canvas, &[], current, target, speed);
            assert!(next.distance_to(target) <= current.distance_to(target) + 1e-9);
        }
    }

    #[test]
    fn corridor_progress_is_monotone() {
        // A narrow horizontal corridor: the agent aims past the far end at an
        // off-axis target, pressing against the southern wall the whole way.
        let canvas = Rect::new(0.0, 0.0, 800.0, 200.0);
        let walls = [
            Rect::new(100.0, 0.0, 400.0, 90.0),
            Rect::new(100.0, 110.0, 400.0, 90.0),
        ];
        let target = Point::new(700.0, 160.0);
        let mut pos = Point::new(20.0, 100.0);
        let mut xs = vec![pos.x];
        for _ in 0..100 {
            pos = step_position(canvas, &walls, pos, target, 10.0);
            xs.push(pos.x);
        }
        for w in xs.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "oscillated: {} then {}", w[0], w[1]);
        }
        assert!(pos.distance_to(target) < 1.0, "never reached target: {pos:?}");
    }

    #[test]
    fn arrival_tolerance_boundary() {
        let mk = |d: f64, dest: Destination| -> Agent {
            let mut a = Agent::new(
                AgentId(0),
                Persona::test_stub("Mover"),
                AgentCategory::StudentAlone,
                false,
                GroupIndex(0),
                Point::new(0.0, 0.0),
            );
            a.transition(TransitionEvent::Decided {
                destination: dest,
                target: Point::new(d, 0.0),
            })
            .unwrap();
            a
        };
        let near_exit = mk(49.9, Destination::Exit(ExitId(4)));
        assert_eq!(
            check_arrival(&near_exit, ARRIVAL_TOLERANCE),
            Some(TransitionEvent::ArrivedAtExit)
        );
        let at_50 = mk(50.0, Destination::Exit(ExitId(4)));
        assert!(check_arrival(&at_50, ARRIVAL_TOLERANCE).is_some());
        let outside = mk(50.1, Destination::Exit(ExitId(4)));
        assert!(check_arrival(&outside, ARRIVAL_TOLERANCE).is_none());
        let region = mk(30.0, Destination::Region(crate::stadium::RegionKind::NorthTrack));
        assert_eq!(
            check_arrival(&region, ARRIVAL_TOLERANCE),
            Some(TransitionEvent::ArrivedAtRegion)
        );
    }

    #[test]
    fn default_params_validate() {
        SpeedParams::default().validate().unwrap();
        let mut bad = SpeedParams::default();
        bad.min_standard = 30.0;
        assert!(bad.validate().is_err());
        let mut bad = SpeedParams::default();
        bad.density_free_threshold = 30;
        assert!(bad.validate().is_err());
    }
}
