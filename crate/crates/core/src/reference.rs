//! Reference trajectories for the flat outputs `(x, y)`: construction from
//! path descriptions, clamped lookup, open-loop feedforward and time-offset
//! synchronisation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PathSegment, SegmentPath, Vec2};
use crate::model::ControlInput;

pub const DEFAULT_CORNER_RADIUS: f64 = 0.5;
pub const DEFAULT_TAU_MAX: f64 = 5.0;

fn default_corner_radius() -> f64 {
    DEFAULT_CORNER_RADIUS
}

/// Shape of a reference path. Durations left out default to the scenario
/// duration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PathSpec {
    /// Waypoints joined by straight lines with circular fillets of
    /// `corner_radius` at each interior waypoint, travelled at `speed`.
    Polyline {
        waypoints: Vec<[f64; 2]>,
        speed: f64,
        #[serde(default = "default_corner_radius")]
        corner_radius: f64,
    },
    /// `center + radius (cos(phase + omega t), sin(phase + omega t))`.
    Circle {
        center: [f64; 2],
        radius: f64,
        omega: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        duration: Option<f64>,
    },
    /// `x = x0 + speed t`, `y = y0 + amplitude sin(2π speed t / wavelength)`.
    Sinusoid {
        origin: [f64; 2],
        amplitude: f64,
        wavelength: f64,
        speed: f64,
        #[serde(default)]
        duration: Option<f64>,
    },
}

/// One sample of the reference and its time derivative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub dx: f64,
    pub dy: f64,
}

impl RefSample {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn velocity(&self) -> Vec2 {
        Vec2::new(self.dx, self.dy)
    }
}

/// Uniformly sampled reference. `knots` are the times where the underlying
/// description changes piece (segment junctions, splices, sync offsets); the
/// reference is only guaranteed smooth between knots.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrajectory {
    t0: f64,
    dt: f64,
    samples: Vec<RefSample>,
    knots: Vec<f64>,
    source: Option<PathSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncReason {
    Startup,
    PostBypass,
}

/// A time offset applied to the reference from `t_event` on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyncEvent {
    pub t_event: f64,
    pub tau: f64,
    pub reason: SyncReason,
}

fn grid_steps(span: f64, dt: f64) -> usize {
    let ratio = span / dt;
    let rounded = ratio.round();
    if (ratio - rounded).abs() < 1e-9 {
        rounded as usize
    } else {
        ratio.ceil() as usize
    }
}

fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidPath(msg()))
    }
}

/// Samples `spec` every `dt`. Circle and sinusoid specs without their own
/// duration run for `default_duration`.
pub fn build_reference(spec: &PathSpec, dt: f64, default_duration: f64) -> Result<ReferenceTrajectory> {
    require(dt > 0.0 && dt.is_finite(), || format!("sampling period {dt} must be positive"))?;
    let mut traj = match spec {
        PathSpec::Polyline {
            waypoints,
            speed,
            corner_radius,
        } => {
            require(*speed > 0.0 && speed.is_finite(), || format!("speed {speed} must be positive"))?;
            require(*corner_radius >= 0.0 && corner_radius.is_finite(), || {
                format!("corner radius {corner_radius} must be non-negative")
            })?;
            let path = rounded_polyline(waypoints, *corner_radius)?;
            sample_path(&path, *speed, dt)
        }
        PathSpec::Circle {
            center,
            radius,
            omega,
            phase,
            duration,
        } => {
            let duration = duration.unwrap_or(default_duration);
            require(*radius > 0.0 && radius.is_finite(), || format!("circle radius {radius} must be positive"))?;
            require(*omega != 0.0 && omega.is_finite(), || "angular rate must be non-zero".into())?;
            require(phase.is_finite() && center.iter().all(|c| c.is_finite()), || {
                "circle parameters must be finite".into()
            })?;
            require(duration > 0.0 && duration.is_finite(), || format!("duration {duration} must be positive"))?;
            let (c, r, w, ph) = (*center, *radius, *omega, *phase);
            ReferenceTrajectory::from_fn(0.0, dt, grid_steps(duration, dt), |t| {
                let (s, co) = (ph + w * t).sin_cos();
                (c[0] + r * co, c[1] + r * s, -r * w * s, r * w * co)
            })
        }
        PathSpec::Sinusoid {
            origin,
            amplitude,
            wavelength,
            speed,
            duration,
        } => {
            let duration = duration.unwrap_or(default_duration);
            require(*wavelength > 0.0 && wavelength.is_finite(), || {
                format!("wavelength {wavelength} must be positive")
            })?;
            require(*speed > 0.0 && speed.is_finite(), || format!("speed {speed} must be positive"))?;
            require(amplitude.is_finite() && origin.iter().all(|c| c.is_finite()), || {
                "sinusoid parameters must be finite".into()
            })?;
            require(duration > 0.0 && duration.is_finite(), || format!("duration {duration} must be positive"))?;
            let (o, a, v) = (*origin, *amplitude, *speed);
            let k = std::f64::consts::TAU / wavelength;
            ReferenceTrajectory::from_fn(0.0, dt, grid_steps(duration, dt), |t| {
                let (s, c) = (k * v * t).sin_cos();
                (o[0] + v * t, o[1] + a * s, v, a * k * v * c)
            })
        }
    };
    traj.source = Some(spec.clone());
    Ok(traj)
}

/// Straight legs between waypoints with circular fillets at the corners.
/// Fillets shrink when the adjacent legs are too short to hold them; a full
/// reversal is left as a sharp corner.
fn rounded_polyline(waypoints: &[[f64; 2]], radius: f64) -> Result<SegmentPath> {
    require(waypoints.iter().flatten().all(|c| c.is_finite()), || "waypoints must be finite".into())?;
    let mut pts: Vec<Vec2> = Vec::with_capacity(waypoints.len());
    for w in waypoints {
        let p = Vec2::new(w[0], w[1]);
        if pts.last().is_none_or(|q: &Vec2| q.distance(p) > 1e-12) {
            pts.push(p);
        }
    }
    require(pts.len() >= 2, || "polyline needs at least two distinct waypoints".into())?;

    let dirs: Vec<Vec2> = pts.windows(2).map(|w| (w[1] - w[0]).normalized()).collect();
    let lens: Vec<f64> = pts.windows(2).map(|w| w[0].distance(w[1])).collect();

    let mut segments = Vec::new();
    let mut cursor = pts[0];
    for i in 1..pts.len() - 1 {
        let (d_in, d_out) = (dirs[i - 1], dirs[i]);
        let turn = d_in.cross(d_out).atan2(d_in.dot(d_out));
        let half = 0.5 * turn.abs();
        if half < 1e-9 || radius == 0.0 || turn.abs() > std::f64::consts::PI - 1e-6 {
            segments.push(PathSegment::Line { start: cursor, end: pts[i] });
            cursor = pts[i];
            continue;
        }
        let max_tangent = 0.5 * lens[i - 1].min(lens[i]);
        let r = radius.min(max_tangent / half.tan());
        let tangent_len = r * half.tan();
        let entry = pts[i] - d_in * tangent_len;
        let exit = pts[i] + d_out * tangent_len;
        let left = Vec2::new(-d_in.y, d_in.x);
        let center = entry + left * (r * turn.signum());
        segments.push(PathSegment::Line { start: cursor, end: entry });
        segments.push(PathSegment::Arc {
            center,
            radius: r,
            start_angle: (entry - center).angle(),
            sweep: turn,
        });
        cursor = exit;
    }
    segments.push(PathSegment::Line {
        start: cursor,
        end: *pts.last().unwrap(),
    });
    segments.retain(|s| s.length() > 1e-12);
    let path = SegmentPath::new(segments);
    require(path.length() > 1e-9, || "zero-length path".into())?;
    Ok(path)
}

/// Samples a segment path at constant speed. The speed is nudged so the path
/// ends exactly on a sample.
pub(crate) fn sample_path(path: &SegmentPath, speed: f64, dt: f64) -> ReferenceTrajectory {
    let steps = grid_steps(path.length() / speed, dt).max(1);
    let v = path.length() / (steps as f64 * dt);
    let mut traj = ReferenceTrajectory::from_fn(0.0, dt, steps, |t| {
        let (p, tan) = path.eval(v * t);
        (p.x, p.y, v * tan.x, v * tan.y)
    });
    traj.knots = path.junctions().iter().map(|s| s / v).collect();
    traj
}

impl ReferenceTrajectory {
    /// Samples `f(t) = (x, y, dx, dy)` at `t0 + k dt` for `k = 0..=steps`.
    pub fn from_fn(t0: f64, dt: f64, steps: usize, f: impl Fn(f64) -> (f64, f64, f64, f64)) -> Self {
        let samples = (0..=steps)
            .map(|k| {
                let t = t0 + k as f64 * dt;
                let (x, y, dx, dy) = f(t - t0);
                RefSample { t, x, y, dx, dy }
            })
            .collect();
        Self {
            t0,
            dt,
            samples,
            knots: Vec::new(),
            source: None,
        }
    }

    pub(crate) fn from_parts(t0: f64, dt: f64, samples: Vec<RefSample>, knots: Vec<f64>) -> Self {
        Self {
            t0,
            dt,
            samples,
            knots,
            source: None,
        }
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn tf(&self) -> f64 {
        self.samples.last().map_or(self.t0, |s| s.t)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn samples(&self) -> &[RefSample] {
        &self.samples
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn source(&self) -> Option<&PathSpec> {
        self.source.as_ref()
    }

    /// Index of the sample at time `t`, if `t` is on the grid and in range.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let u = (t - self.t0) / self.dt;
        let i = u.round();
        if (u - i).abs() < 1e-6 && i >= 0.0 && (i as usize) < self.samples.len() {
            Some(i as usize)
        } else {
            None
        }
    }

    /// Reference at time `t`. Outside `[t0, tf]` the nearest endpoint is
    /// returned at rest; between grid points values are interpolated linearly.
    pub fn lookup(&self, t: f64) -> RefSample {
        let n = self.samples.len() - 1;
        let u = (t - self.t0) / self.dt;
        let rest = |s: &RefSample| RefSample {
            t,
            dx: 0.0,
            dy: 0.0,
            ..*s
        };
        if u < -1e-9 {
            return rest(&self.samples[0]);
        }
        if u > n as f64 + 1e-9 {
            return rest(&self.samples[n]);
        }
        let i = ((u + 1e-9).floor().max(0.0) as usize).min(n);
        let frac = u - i as f64;
        if i == n || frac < 1e-9 {
            return RefSample { t, ..self.samples[i] };
        }
        let (a, b) = (&self.samples[i], &self.samples[i + 1]);
        let mix = |p: f64, q: f64| p + (q - p) * frac;
        RefSample {
            t,
            x: mix(a.x, b.x),
            y: mix(a.y, b.y),
            dx: mix(a.dx, b.dx),
            dy: mix(a.dy, b.dy),
        }
    }

    /// Largest relative mismatch between stored derivatives and central
    /// differences of positions, over samples whose stencil stays inside one
    /// smooth piece.
    pub fn derivative_inconsistency(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 1..self.samples.len().saturating_sub(1) {
            let t = self.samples[i].t;
            if self.knots.iter().any(|k| (k - t).abs() < self.dt + 1e-9) {
                continue;
            }
            let (prev, cur, next) = (&self.samples[i - 1], &self.samples[i], &self.samples[i + 1]);
            let cdx = (next.x - prev.x) / (2.0 * self.dt);
            let cdy = (next.y - prev.y) / (2.0 * self.dt);
            worst = worst
                .max((cdx - cur.dx).abs() / cur.dx.abs().max(1.0))
                .max((cdy - cur.dy).abs() / cur.dy.abs().max(1.0));
        }
        worst
    }

    /// Path length between two times, summed over samples.
    pub fn path_length(&self, t_from: f64, t_to: f64) -> f64 {
        let mut len = 0.0;
        let mut prev: Option<Vec2> = None;
        for s in &self.samples {
            if s.t < t_from - 1e-9 || s.t > t_to + 1e-9 {
                continue;
            }
            let p = s.position();
            if let Some(q) = prev {
                len += p.distance(q);
            }
            prev = Some(p);
        }
        len
    }

    /// Offset from `t_event` on: the returned trajectory reads this one at
    /// `t + tau` for `t >= t_event` and is unchanged before.
    pub fn apply_sync(&self, tau: f64, t_event: f64, reason: SyncReason) -> (ReferenceTrajectory, SyncEvent) {
        let event = SyncEvent { t_event, tau, reason };
        if tau == 0.0 {
            return (self.clone(), event);
        }
        let mut samples: Vec<RefSample> = self
            .samples
            .iter()
            .take_while(|s| s.t < t_event - 1e-9)
            .copied()
            .collect();
        let first = samples.len();
        let tf = self.tf();
        let mut k = first;
        loop {
            let t = self.t0 + k as f64 * self.dt;
            if k > first && t + tau > tf + 1e-9 {
                break;
            }
            samples.push(RefSample { t, ..self.lookup(t + tau) });
            k += 1;
        }
        let mut knots: Vec<f64> = self.knots.iter().copied().filter(|&k| k < t_event).collect();
        knots.push(t_event);
        knots.extend(self.knots.iter().map(|k| k - tau).filter(|&k| k > t_event));
        (ReferenceTrajectory::from_parts(self.t0, self.dt, samples, knots), event)
    }
}

/// Open-loop controls of the reference: the auxiliary inputs equal the
/// reference velocity and the true controls follow from them.
pub fn flat_feedforward(traj: &ReferenceTrajectory, t: f64, prev_heading: f64) -> ControlInput {
    let r = traj.lookup(t);
    ControlInput::from_aux(r.dx, r.dy, prev_heading)
}

/// Grid search for the time offset that brings the reference closest to
/// `(x_sync, y_sync)`. Candidates are `k dt` for `|k dt| <= tau_max`; ties go
/// to the smallest `|tau|`, then to positive `tau`.
pub fn sync_offset(x_sync: f64, y_sync: f64, traj: &ReferenceTrajectory, t_now: f64, tau_max: f64) -> f64 {
    let dt = traj.dt();
    let n = (tau_max / dt + 1e-9).floor() as i64;
    let target = Vec2::new(x_sync, y_sync);
    let dist2 = |tau: f64| {
        let d = traj.lookup(t_now + tau).position() - target;
        d.dot(d)
    };
    let mut best_tau = 0.0;
    let mut best = dist2(0.0);
    for k in 1..=n {
        for tau in [k as f64 * dt, -(k as f64) * dt] {
            let d = dist2(tau);
            if d < best - 1e-12 * best.max(1.0) {
                best = d;
                best_tau = tau;
            }
        }
    }
    best_tau
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(len: f64) -> ReferenceTrajectory {
        let spec = PathSpec::Polyline {
            waypoints: vec![[0.0, 0.0], [len, 0.0]],
            speed: 1.0,
            corner_radius: 0.5,
        };
        build_reference(&spec, 0.01, 20.0).unwrap()
    }

    #[test]
    fn circle_initial_conditions() {
        let spec = PathSpec::Circle {
            center: [0.0, 0.0],
            radius: 5.0,
            omega: 0.2,
            phase: 0.0,
            duration: Some(20.0),
        };
        let traj = build_reference(&spec, 0.01, 20.0).unwrap();
        let s = traj.lookup(0.0);
        assert_eq!((s.x, s.y), (5.0, 0.0));
        assert!(s.dx.abs() < 1e-15 && (s.dy - 1.0).abs() < 1e-15);
        assert_eq!(traj.samples().len(), 2001);
        for t in [0.0, 3.3, 12.0, 19.99] {
            let u = flat_feedforward(&traj, t, 0.0);
            assert!((u.u1 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_segment_is_uniform_motion() {
        let traj = line(1.0);
        assert_eq!(traj.samples().len(), 101);
        for (k, s) in traj.samples().iter().enumerate() {
            let t = k as f64 * 0.01;
            assert!((s.x - t).abs() < 1e-12 && s.y == 0.0);
            assert!((s.dx - 1.0).abs() < 1e-12);
        }
        let u = flat_feedforward(&traj, 0.5, 0.0);
        assert!((u.u1 - 1.0).abs() < 1e-12 && u.u2 == 0.0);
    }

    #[test]
    fn lookup_clamps_and_parks() {
        let traj = line(1.0);
        let end = traj.lookup(5.0);
        assert!((end.x - 1.0).abs() < 1e-12 && end.dx == 0.0 && end.dy == 0.0);
        let start = traj.lookup(-1.0);
        assert_eq!((start.x, start.dx), (0.0, 0.0));
        let u = flat_feedforward(&traj, 5.0, 0.3);
        assert_eq!(u.u1, 0.0);
        assert_eq!(u.u2, 0.3);
    }

    #[test]
    fn degenerate_specs_are_rejected() {
        let bad = [
            PathSpec::Polyline {
                waypoints: vec![[1.0, 1.0], [1.0, 1.0]],
                speed: 1.0,
                corner_radius: 0.5,
            },
            PathSpec::Polyline {
                waypoints: vec![[0.0, 0.0], [1.0, 0.0]],
                speed: 0.0,
                corner_radius: 0.5,
            },
            PathSpec::Circle {
                center: [0.0, 0.0],
                radius: 0.0,
                omega: 1.0,
                phase: 0.0,
                duration: None,
            },
            PathSpec::Sinusoid {
                origin: [0.0, 0.0],
                amplitude: 1.0,
                wavelength: 0.0,
                speed: 1.0,
                duration: None,
            },
        ];
        for spec in &bad {
            assert!(matches!(build_reference(spec, 0.01, 20.0), Err(Error::InvalidPath(_))), "{spec:?}");
        }
    }

    #[test]
    fn derivatives_are_consistent() {
        let specs = [
            PathSpec::Polyline {
                waypoints: vec![[0.0, 0.0], [5.0, 0.0], [10.0, 3.0], [15.0, -2.0], [20.0, 0.0]],
                speed: 1.0,
                corner_radius: 1.0,
            },
            PathSpec::Circle {
                center: [1.0, 2.0],
                radius: 5.0,
                omega: 0.2,
                phase: 0.3,
                duration: None,
            },
            PathSpec::Sinusoid {
                origin: [0.0, 0.0],
                amplitude: 1.0,
                wavelength: 8.0,
                speed: 1.0,
                duration: None,
            },
        ];
        for spec in &specs {
            let traj = build_reference(spec, 0.01, 20.0).unwrap();
            assert!(traj.derivative_inconsistency() <= 1e-3, "{spec:?}");
        }
    }

    #[test]
    fn fillets_keep_heading_continuous() {
        let spec = PathSpec::Polyline {
            waypoints: vec![[0.0, 0.0], [5.0, 0.0], [5.0, 5.0]],
            speed: 1.0,
            corner_radius: 0.5,
        };
        let traj = build_reference(&spec, 0.01, 20.0).unwrap();
        let headings: Vec<f64> = traj.samples().iter().map(|s| s.dy.atan2(s.dx)).collect();
        let max_jump = headings.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
        // quarter turn over a 0.5 m radius at ~1 m/s: 0.02 rad per sample
        assert!(max_jump < 0.03, "{max_jump}");
        let end = traj.samples().last().unwrap();
        assert!((end.x - 5.0).abs() < 1e-9 && (end.y - 5.0).abs() < 1e-9);
    }

    #[test]
    fn sync_offset_on_reference_point() {
        let traj = line(20.0);
        let p = traj.lookup(3.0);
        assert_eq!(sync_offset(p.x, p.y, &traj, 3.0, 5.0), 0.0);
        let ahead = traj.lookup(3.5);
        let tau = sync_offset(ahead.x, ahead.y, &traj, 3.0, 5.0);
        assert!((tau - 0.5).abs() < 1e-9, "{tau}");
    }

    #[test]
    fn sync_offset_tie_prefers_positive() {
        // parabola x = s, y = s^2 seen from (0, 0.59): minima at s = ±0.3
        let traj = ReferenceTrajectory::from_fn(0.0, 0.01, 400, |t| {
            let s = t - 2.0;
            (s, s * s, 1.0, 2.0 * s)
        });
        let tau = sync_offset(0.0, 0.59, &traj, 2.0, 1.0);
        assert!((tau - 0.3).abs() < 1e-9, "{tau}");
    }

    #[test]
    fn sync_offset_is_grid_minimum() {
        let spec = PathSpec::Sinusoid {
            origin: [0.0, 0.0],
            amplitude: 2.0,
            wavelength: 6.0,
            speed: 1.0,
            duration: None,
        };
        let traj = build_reference(&spec, 0.01, 20.0).unwrap();
        for (x, y, t) in [(4.0, 1.0, 2.0), (10.0, -3.0, 12.0), (-1.0, 0.5, 0.0)] {
            let tau = sync_offset(x, y, &traj, t, 5.0);
            let d2 = |tau: f64| {
                let p = traj.lookup(t + tau);
                (p.x - x).powi(2) + (p.y - y).powi(2)
            };
            let best = d2(tau);
            for k in -500..=500 {
                assert!(best <= d2(k as f64 * 0.01) + 1e-12);
            }
        }
    }

    #[test]
    fn apply_sync_reindexes_time() {
        let traj = line(20.0);
        let (same, _) = traj.apply_sync(0.0, 0.0, SyncReason::Startup);
        assert_eq!(same.samples(), traj.samples());

        let (shifted, ev) = traj.apply_sync(0.5, 0.0, SyncReason::Startup);
        assert_eq!(ev.tau, 0.5);
        for k in 0..1900 {
            let t = k as f64 * 0.01;
            assert!((shifted.lookup(t).x - (t + 0.5)).abs() < 1e-9);
        }
        assert!(shifted.derivative_inconsistency() <= 1e-3);

        let (later, _) = traj.apply_sync(1.0, 4.0, SyncReason::PostBypass);
        assert_eq!(later.lookup(3.99).x, traj.lookup(3.99).x);
        assert!((later.lookup(4.0).x - 5.0).abs() < 1e-9);
    }

    #[test]
    fn successive_syncs_compose() {
        let traj = line(20.0);
        let (a, _) = traj.apply_sync(0.3, 2.0, SyncReason::PostBypass);
        let (ab, _) = a.apply_sync(0.4, 2.0, SyncReason::PostBypass);
        let (c, _) = traj.apply_sync(0.7, 2.0, SyncReason::PostBypass);
        assert_eq!(ab.samples().len(), c.samples().len());
        for (p, q) in ab.samples().iter().zip(c.samples()) {
            assert!((p.x - q.x).abs() < 1e-9 && (p.y - q.y).abs() < 1e-9);
        }
    }
}
