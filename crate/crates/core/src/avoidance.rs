//! Unexpected-obstacle handling: discovery, danger-zone crossing detection,
//! tangent–arc–tangent bypass construction on either side, side selection
//! and splicing the bypass into the active reference.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{point_segment_distance, wrap_positive, PathSegment, SegmentPath, Vec2};
use crate::model::{ControllerKind, VehicleState};
use crate::reference::{RefSample, ReferenceTrajectory};

pub const DEFAULT_MARGIN: f64 = 0.5;
pub const DEFAULT_SENSING_RADIUS: f64 = 5.0;
pub const DEFAULT_LEAD: f64 = 0.5;

/// Numerical slack of the strict-interior test.
const INTERIOR_EPS: f64 = 1e-9;
/// Anchors must sit at least this far outside the danger circle.
const ANCHOR_CLEARANCE: f64 = 1e-6;

/// Circular obstacle, unknown to the planner until discovered.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    pub center: [f64; 2],
    pub radius: f64,
    #[serde(default)]
    pub t_appear: f64,
}

impl Obstacle {
    pub fn center(&self) -> Vec2 {
        Vec2::new(self.center[0], self.center[1])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::Config(format!("obstacle radius must be positive, got {}", self.radius)));
        }
        if !(self.t_appear >= 0.0) || !self.center.iter().all(|c| c.is_finite()) {
            return Err(Error::Config("obstacle center and t_appear must be finite, t_appear >= 0".into()));
        }
        Ok(())
    }

    pub fn danger_zone(&self, margin: f64) -> DangerZone {
        DangerZone {
            center: self.center(),
            r_danger: self.radius + margin,
        }
    }
}

/// Keep-out disk: obstacle radius plus safety margin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DangerZone {
    pub center: Vec2,
    pub r_danger: f64,
}

impl DangerZone {
    /// Strictly inside, up to a 1e-9 m slack so points on the circle are outside.
    pub fn contains(&self, p: Vec2) -> bool {
        p.distance(self.center) < self.r_danger - INTERIOR_EPS
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AvoidanceParams {
    pub margin: f64,
    pub sensing_radius: f64,
    /// Anticipation time between the anchors and the danger-zone crossing.
    pub lead: f64,
}

impl Default for AvoidanceParams {
    fn default() -> Self {
        Self {
            margin: DEFAULT_MARGIN,
            sensing_radius: DEFAULT_SENSING_RADIUS,
            lead: DEFAULT_LEAD,
        }
    }
}

impl AvoidanceParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0 && self.sensing_radius > 0.0 && self.lead >= 0.0) {
            return Err(Error::Config(format!(
                "margin and sensing radius must be positive and lead non-negative: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Obstacles known to the planner. Discovery is monotone.
#[derive(Debug, Clone, Default)]
pub struct Discovery {
    known: Vec<bool>,
}

impl Discovery {
    pub fn new(count: usize) -> Self {
        Self { known: vec![false; count] }
    }

    pub fn is_known(&self, idx: usize) -> bool {
        self.known.get(idx).copied().unwrap_or(false)
    }

    /// Indices of obstacles that exist at `state.t`, lie within
    /// `sensing_radius` of the vehicle and were not known before.
    pub fn discover(&mut self, obstacles: &[Obstacle], state: &VehicleState, sensing_radius: f64) -> Vec<usize> {
        if self.known.len() < obstacles.len() {
            self.known.resize(obstacles.len(), false);
        }
        let pos = Vec2::new(state.x, state.y);
        let mut fresh = Vec::new();
        for (i, ob) in obstacles.iter().enumerate() {
            if self.known[i] || ob.t_appear > state.t + 1e-9 {
                continue;
            }
            if ob.center().distance(pos) <= sensing_radius {
                self.known[i] = true;
                fresh.push(i);
            }
        }
        fresh
    }
}

/// Bisection for the boundary crossing on the chord `a -> b`, where exactly
/// one endpoint is inside; returns the chord fraction of the crossing.
fn refine_crossing(zone: &DangerZone, a: Vec2, b: Vec2) -> f64 {
    let inside = |lam: f64| (a + (b - a) * lam).distance(zone.center) < zone.r_danger;
    let a_inside = inside(0.0);
    let (mut lo, mut hi) = (0.0, 1.0);
    let len = a.distance(b).max(1e-300);
    while (hi - lo) * len > 1e-8 {
        let mid = 0.5 * (lo + hi);
        if inside(mid) == a_inside {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// First maximal time interval, from `t_from` on, during which the reference
/// lies strictly inside the danger zone.
pub fn path_crosses_zone(traj: &ReferenceTrajectory, zone: &DangerZone, t_from: f64) -> Option<(f64, f64)> {
    let samples = traj.samples();
    let start = samples.iter().position(|s| s.t >= t_from - 1e-9)?;
    let first = traj.lookup(t_from);
    let mut prev: RefSample = first;
    let mut t_in = None;
    if zone.contains(first.position()) {
        t_in = Some(t_from);
    }
    let mut i = start;
    if t_in.is_none() {
        while i < samples.len() {
            let s = samples[i];
            if zone.contains(s.position()) {
                let lam = refine_crossing(zone, prev.position(), s.position());
                t_in = Some(prev.t + lam * (s.t - prev.t));
                break;
            }
            prev = s;
            i += 1;
        }
    }
    let t_in = t_in?;
    prev = traj.lookup(t_in);
    while i < samples.len() {
        let s = samples[i];
        if s.t > t_in && !zone.contains(s.position()) {
            let lam = refine_crossing(zone, prev.position(), s.position());
            let t_out = prev.t + lam * (s.t - prev.t);
            return Some((t_in, t_out.max(t_in)));
        }
        prev = s;
        i += 1;
    }
    Some((t_in, traj.tf()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::Left => "left",
            Side::Right => "right",
        })
    }
}

/// Arc on the danger circle; `ccw` is the direction of travel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BypassArc {
    pub center: Vec2,
    pub radius: f64,
    pub start_angle: f64,
    pub end_angle: f64,
    pub ccw: bool,
}

/// A bypass on one side of a danger zone, anchored on the reference at
/// `splice_interval.0` (entry) and `t_exit_ref` (exit, original timeline).
#[derive(Debug, Clone, PartialEq)]
pub struct BypassPlan {
    pub side: Side,
    pub entry_anchor: Vec2,
    pub exit_anchor: Vec2,
    /// Tangency points on the danger circle (the anchors when no wrap is needed).
    pub entry_point: Vec2,
    pub exit_point: Vec2,
    pub arc: Option<BypassArc>,
    pub path: SegmentPath,
    pub detour_length: f64,
    pub replaced_length: f64,
    pub speed: f64,
    /// Start and end of the bypass on the spliced reference timeline.
    pub splice_interval: (f64, f64),
    /// Time of the exit anchor on the reference being replaced.
    pub t_exit_ref: f64,
    pub zone: DangerZone,
}

impl BypassPlan {
    pub fn length(&self) -> f64 {
        self.path.length()
    }

    /// Samples `(position, velocity)` at the reference sampling period,
    /// from the entry anchor to the exit anchor inclusive.
    pub fn samples(&self, dt: f64) -> Vec<(Vec2, Vec2)> {
        let (t0, t1) = self.splice_interval;
        let steps = ((t1 - t0) / dt).round() as usize;
        (0..=steps)
            .map(|k| {
                let (p, tan) = self.path.eval(self.speed * k as f64 * dt);
                (p, tan * self.speed)
            })
            .collect()
    }
}

/// Where the bypass may start and how fast it is travelled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BypassRequest {
    /// Earliest admissible entry anchor time (usually the current time).
    pub t_earliest: f64,
    pub lead: f64,
    /// Travel speed along the bypass; defaults to the mean reference speed
    /// over the replaced stretch.
    pub speed_hint: Option<f64>,
}

fn snap_down(t: f64, traj: &ReferenceTrajectory) -> f64 {
    let dt = traj.dt();
    traj.t0() + ((t - traj.t0()) / dt + 1e-9).floor() * dt
}

fn snap_up(t: f64, traj: &ReferenceTrajectory) -> f64 {
    let dt = traj.dt();
    traj.t0() + ((t - traj.t0()) / dt - 1e-9).ceil() * dt
}

fn clear_of(zone: &DangerZone, p: Vec2) -> bool {
    p.distance(zone.center) > zone.r_danger + ANCHOR_CLEARANCE
}

/// Anchor times around `crossing`, moved away from the zone until both
/// anchors are clear of it.
fn anchors(traj: &ReferenceTrajectory, zone: &DangerZone, crossing: (f64, f64), req: &BypassRequest) -> Result<(f64, f64)> {
    let dt = traj.dt();
    let earliest = snap_up(req.t_earliest.max(traj.t0()), traj);
    let mut t_a = snap_down(crossing.0 - req.lead, traj).max(earliest);
    while !clear_of(zone, traj.lookup(t_a).position()) {
        t_a -= dt;
        if t_a < earliest - 1e-9 {
            return Err(Error::InfeasibleBypass(format!(
                "no entry anchor outside the danger zone after t = {:.2}",
                req.t_earliest
            )));
        }
    }
    let mut t_b = snap_up(crossing.1 + req.lead, traj).min(traj.tf());
    while !clear_of(zone, traj.lookup(t_b).position()) {
        t_b += dt;
        if t_b > traj.tf() + 1e-9 {
            return Err(Error::InfeasibleBypass(
                "reference ends inside the danger zone".into(),
            ));
        }
    }
    if t_b <= t_a {
        return Err(Error::InfeasibleBypass("empty splice interval".into()));
    }
    Ok((t_a, t_b))
}

/// Tangent–arc–tangent path from `a` to `b` around `zone`, or the straight
/// segment when it already passes on the requested side.
fn wrap_path(zone: &DangerZone, a: Vec2, b: Vec2, side: Side) -> (SegmentPath, Vec2, Vec2, Option<BypassArc>) {
    let (c, r) = (zone.center, zone.r_danger);
    // Right of the obstacle means travelling counter-clockwise around it.
    let ccw = side == Side::Right;
    let obstacle_on_left = (b - a).cross(c - a) > 0.0;
    if point_segment_distance(c, a, b) >= r && obstacle_on_left == ccw {
        let path = SegmentPath::new(vec![PathSegment::Line { start: a, end: b }]);
        return (path, a, b, None);
    }
    let (da, db) = (a - c, b - c);
    let (beta_a, beta_b) = ((r / da.norm()).acos(), (r / db.norm()).acos());
    let (theta_a, theta_b, sweep) = if ccw {
        let ta = da.angle() + beta_a;
        let tb = db.angle() - beta_b;
        (ta, tb, wrap_positive(tb - ta))
    } else {
        let ta = da.angle() - beta_a;
        let tb = db.angle() + beta_b;
        (ta, tb, -wrap_positive(ta - tb))
    };
    let entry = c + Vec2::from_angle(theta_a) * r;
    let exit = c + Vec2::from_angle(theta_b) * r;
    let mut segments = vec![PathSegment::Line { start: a, end: entry }];
    if sweep != 0.0 {
        segments.push(PathSegment::Arc {
            center: c,
            radius: r,
            start_angle: theta_a,
            sweep,
        });
    }
    segments.push(PathSegment::Line { start: exit, end: b });
    segments.retain(|s| s.length() > 1e-12);
    let arc = BypassArc {
        center: c,
        radius: r,
        start_angle: theta_a,
        end_angle: theta_a + sweep,
        ccw,
    };
    (SegmentPath::new(segments), entry, exit, Some(arc))
}

/// Bypass of `zone` on `side` replacing the reference between anchors placed
/// `lead` before and after `crossing`.
pub fn plan_bypass(
    traj: &ReferenceTrajectory,
    zone: &DangerZone,
    crossing: (f64, f64),
    side: Side,
    req: &BypassRequest,
) -> Result<BypassPlan> {
    let (t_a, t_b) = anchors(traj, zone, crossing, req)?;
    let a = traj.lookup(t_a).position();
    let b = traj.lookup(t_b).position();
    let (path, entry_point, exit_point, arc) = wrap_path(zone, a, b, side);
    let replaced_length = traj.path_length(t_a, t_b);
    let mean_speed = replaced_length / (t_b - t_a);
    let speed = match req.speed_hint {
        Some(v) if v > 0.0 => v,
        _ if mean_speed > 1e-6 => mean_speed,
        _ => return Err(Error::InfeasibleBypass("reference is at rest over the crossing".into())),
    };
    let dt = traj.dt();
    let steps = ((path.length() / (speed * dt)) - 1e-9).ceil().max(1.0);
    let speed = path.length() / (steps * dt);
    Ok(BypassPlan {
        side,
        entry_anchor: a,
        exit_anchor: b,
        entry_point,
        exit_point,
        arc,
        detour_length: path.length() - replaced_length,
        replaced_length,
        speed,
        splice_interval: (t_a, t_a + steps * dt),
        t_exit_ref: t_b,
        path,
        zone: *zone,
    })
}

/// Both candidate bypasses, `(left, right)`.
pub fn plan_both(
    traj: &ReferenceTrajectory,
    zone: &DangerZone,
    crossing: (f64, f64),
    req: &BypassRequest,
) -> (Result<BypassPlan>, Result<BypassPlan>) {
    (
        plan_bypass(traj, zone, crossing, Side::Left, req),
        plan_bypass(traj, zone, crossing, Side::Right, req),
    )
}

/// HEOL takes the shorter detour (ties go right); MFPC always goes right.
pub fn select_side(left: Result<BypassPlan>, right: Result<BypassPlan>, kind: ControllerKind) -> Result<BypassPlan> {
    match kind {
        ControllerKind::Mfpc => right,
        ControllerKind::Heol => match (left, right) {
            (Ok(l), Ok(r)) => Ok(if r.detour_length <= l.detour_length { r } else { l }),
            (Ok(l), Err(_)) => Ok(l),
            (Err(_), Ok(r)) => Ok(r),
            (Err(e), Err(_)) => Err(e),
        },
    }
}

/// Replaces the reference between the plan's anchors with the bypass. Later
/// samples are the original ones, delayed by the extra travel time so both
/// junctions are continuous.
pub fn splice(traj: &ReferenceTrajectory, plan: &BypassPlan) -> ReferenceTrajectory {
    let dt = traj.dt();
    let (t_start, t_end) = plan.splice_interval;
    let i_start = traj.index_of(t_start).expect("entry anchor on the sample grid");
    let i_exit = traj.index_of(plan.t_exit_ref).expect("exit anchor on the sample grid");
    let old = traj.samples();
    let mut samples: Vec<RefSample> = old[..i_start].to_vec();
    let t0 = traj.t0();
    for (k, (p, v)) in plan.samples(dt).into_iter().enumerate() {
        samples.push(RefSample {
            t: t0 + (i_start + k) as f64 * dt,
            x: p.x,
            y: p.y,
            dx: v.x,
            dy: v.y,
        });
    }
    let i_end = samples.len() - 1;
    for (j, s) in old[i_exit + 1..].iter().enumerate() {
        samples.push(RefSample {
            t: t0 + (i_end + 1 + j) as f64 * dt,
            ..*s
        });
    }
    let shift = t_end - plan.t_exit_ref;
    let mut knots: Vec<f64> = traj.knots().iter().copied().filter(|&k| k < t_start).collect();
    knots.push(t_start);
    knots.extend(plan.path.junctions().iter().map(|s| t_start + s / plan.speed));
    knots.push(t_end);
    knots.extend(
        traj.knots()
            .iter()
            .filter(|&&k| k > plan.t_exit_ref)
            .map(|k| k + shift),
    );
    ReferenceTrajectory::from_parts(t0, dt, samples, knots)
}
