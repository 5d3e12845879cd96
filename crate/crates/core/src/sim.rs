//! Closed-loop run: measurement, obstacle discovery, bypass planning,
//! synchronisation, control and plant update, once per sample period.

use serde::{Deserialize, Serialize};

use crate::avoidance::{path_crosses_zone, plan_both, select_side, splice, BypassRequest, Discovery, Side};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::heol::HeolController;
use crate::mfpc::{ClampEvent, MfpcController};
use crate::model::{step_plant, ControlInput, ControllerKind, VehicleState};
use crate::reference::{sync_offset, ReferenceTrajectory, SyncReason};
use crate::scenario::ScenarioConfig;

/// One sample of the closed loop. `x_ref`/`y_ref` are read from the
/// reference active at that step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub x_meas: f64,
    pub y_meas: f64,
    pub x_ref: f64,
    pub y_ref: f64,
    pub u1: f64,
    pub u2: f64,
    pub nu1: Option<f64>,
    pub nu2: Option<f64>,
    pub fhat_x: f64,
    pub fhat_y: f64,
    pub p: f64,
    /// Reference velocity, used for the reverse-motion metric.
    pub dx_ref: f64,
    pub dy_ref: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Sync {
        t: f64,
        tau: f64,
        reason: SyncReason,
    },
    Discovery {
        t: f64,
        obstacle: usize,
    },
    BypassStart {
        t: f64,
        obstacle: usize,
        side: Side,
        detour_length: f64,
        t_start: f64,
        t_end: f64,
    },
    BypassEnd {
        t: f64,
        obstacle: usize,
    },
    Clamp(ClampEvent),
    Abort {
        t: f64,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rms_tracking: f64,
    /// RMS tracking error over samples with `t >= warmup`.
    pub rms_tracking_settled: f64,
    pub max_tracking: f64,
    /// Smallest distance from the vehicle to each obstacle center once the
    /// obstacle exists; `None` if it never did during the run.
    pub min_clearance: Vec<Option<f64>>,
    /// Obstacles whose physical disk was entered.
    pub safety_violations: usize,
    pub total_path_length: f64,
    pub detour_total: f64,
    pub reverse_distance: f64,
    pub control_energy: f64,
}

impl Metrics {
    pub fn scalar_names() -> [&'static str; 9] {
        [
            "rms_tracking",
            "rms_tracking_settled",
            "max_tracking",
            "min_clearance",
            "total_path_length",
            "detour_total",
            "reverse_distance",
            "control_energy",
            "safety_violations",
        ]
    }

    /// Scalar metrics by name, in the order of [`scalar_names`](Self::scalar_names).
    /// `min_clearance` is the smallest over all obstacles, infinite without any.
    pub fn scalars(&self) -> Vec<(&'static str, f64)> {
        let min_clear = self.min_clearance.iter().flatten().copied().fold(f64::INFINITY, f64::min);
        let values = [
            self.rms_tracking,
            self.rms_tracking_settled,
            self.max_tracking,
            min_clear,
            self.total_path_length,
            self.detour_total,
            self.reverse_distance,
            self.control_energy,
            self.safety_violations as f64,
        ];
        Self::scalar_names().into_iter().zip(values).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub name: String,
    pub controller: ControllerKind,
    pub dt: f64,
    pub rows: Vec<Row>,
    pub events: Vec<Event>,
    pub metrics: Metrics,
    /// Set when the run stopped early; `rows` then holds the partial series.
    pub aborted: Option<String>,
}

impl ScenarioResult {
    pub fn is_aborted(&self) -> bool {
        self.aborted.is_some()
    }

    /// Sides of all bypasses that were spliced in.
    pub fn bypass_sides(&self) -> Vec<Side> {
        self.events
            .iter()
            .filter_map(|e| match e {
                Event::BypassStart { side, .. } => Some(*side),
                _ => None,
            })
            .collect()
    }

    pub fn clamp_count(&self) -> usize {
        self.events.iter().filter(|e| matches!(e, Event::Clamp(_))).count()
    }
}

enum Controller {
    Heol(HeolController),
    Mfpc(MfpcController),
}

struct Step {
    control: ControlInput,
    fhat: (f64, f64),
    clamps: Vec<ClampEvent>,
}

impl Controller {
    fn step(&mut self, meas: (f64, f64), traj: &ReferenceTrajectory, t: f64) -> Result<Step> {
        match self {
            Controller::Heol(c) => c.step(meas, traj, t).map(|o| Step {
                control: o.control,
                fhat: (o.fhat_x, o.fhat_y),
                clamps: Vec::new(),
            }),
            Controller::Mfpc(c) => c.step(meas, traj, t).map(|o| Step {
                control: o.control,
                fhat: (o.f_est_x, o.f_est_y),
                clamps: o.clamps,
            }),
        }
    }

    /// Keeps the error windows consistent after the reference jumped.
    fn reference_jumped(&mut self, jump: Vec2) {
        if let Controller::Heol(c) = self {
            c.rebase(jump.x, jump.y);
        }
    }
}

struct PendingBypass {
    obstacle: usize,
    t_end: f64,
}

/// Runs one scenario. Only an invalid configuration is an error; faults
/// during the run end it early with `aborted` set.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioResult> {
    cfg.validate()?;
    let dt = cfg.dt;
    let n = cfg.steps();
    let mut reference = cfg.reference()?;
    let perturbation = cfg.perturbation_schedule()?;
    let mut noise = cfg.noise_model().source();
    let start = reference.lookup(0.0);
    let (x0, y0) = cfg.initial.map_or((start.x, start.y), |p| (p[0], p[1]));
    let mut state = VehicleState::new(0.0, x0, y0);
    let mut controller = match cfg.controller {
        ControllerKind::Heol => {
            let mut c = HeolController::new(cfg.heol, dt)?;
            c.set_heading(start.velocity().angle());
            Controller::Heol(c)
        }
        ControllerKind::Mfpc => Controller::Mfpc(MfpcController::new(cfg.mfpc, dt)?),
    };
    let zones: Vec<_> = cfg.obstacles.iter().map(|o| o.danger_zone(cfg.avoidance.margin)).collect();
    let mut discovery = Discovery::new(cfg.obstacles.len());
    let mut rows = Vec::with_capacity(n + 1);
    let mut events = Vec::new();
    let mut pending: Option<PendingBypass> = None;
    let mut replan = false;
    let mut detour_total = 0.0;
    let mut aborted = None;

    for k in 0..=n {
        let t = k as f64 * dt;
        let meas = noise.measure(&state);

        if k == 0 && cfg.sync.startup {
            let gap = Vec2::new(meas.0, meas.1).distance(reference.lookup(0.0).position());
            if gap > cfg.sync.startup_threshold {
                let tau = sync_offset(meas.0, meas.1, &reference, 0.0, cfg.sync.tau_max);
                let (synced, ev) = reference.apply_sync(tau, 0.0, SyncReason::Startup);
                reference = synced;
                events.push(Event::Sync { t, tau: ev.tau, reason: ev.reason });
            }
        }

        for idx in discovery.discover(&cfg.obstacles, &state, cfg.avoidance.sensing_radius) {
            events.push(Event::Discovery { t, obstacle: idx });
            replan = true;
        }

        if let Some(pb) = &pending {
            if t >= pb.t_end - 1e-9 {
                events.push(Event::BypassEnd { t, obstacle: pb.obstacle });
                pending = None;
                if cfg.sync.post_bypass {
                    let tau = sync_offset(meas.0, meas.1, &reference, t, cfg.sync.tau_max);
                    let (synced, ev) = reference.apply_sync(tau, t, SyncReason::PostBypass);
                    controller.reference_jumped(synced.lookup(t).position() - reference.lookup(t).position());
                    reference = synced;
                    events.push(Event::Sync { t, tau: ev.tau, reason: ev.reason });
                    replan = true;
                }
            }
        }

        if replan {
            replan = false;
            if let Err(e) = avoid(cfg, &zones, &discovery, t, &mut reference, &mut events, &mut pending, &mut detour_total) {
                aborted = Some((t, e));
                break;
            }
        }

        let out = match controller.step(meas, &reference, t) {
            Ok(out) => out,
            Err(e) => {
                aborted = Some((t, e));
                break;
            }
        };
        let r = reference.lookup(t);
        let p = perturbation.as_ref().map_or(0.0, |s| s.value_at(t));
        rows.push(Row {
            t,
            x: state.x,
            y: state.y,
            x_meas: meas.0,
            y_meas: meas.1,
            x_ref: r.x,
            y_ref: r.y,
            u1: out.control.u1,
            u2: out.control.u2,
            nu1: out.control.aux.map(|a| a.nu1),
            nu2: out.control.aux.map(|a| a.nu2),
            fhat_x: out.fhat.0,
            fhat_y: out.fhat.1,
            p,
            dx_ref: r.dx,
            dy_ref: r.dy,
        });
        events.extend(out.clamps.into_iter().map(Event::Clamp));

        if k < n {
            match step_plant(&state, &out.control, p, dt) {
                Ok(next) => state = VehicleState { t: (k + 1) as f64 * dt, ..next },
                Err(e) => {
                    aborted = Some((t, e));
                    break;
                }
            }
        }
    }

    let aborted = aborted.map(|(t, e)| {
        let reason = e.to_string();
        events.push(Event::Abort { t, reason: reason.clone() });
        reason
    });
    let metrics = compute_metrics(&rows, cfg, detour_total);
    Ok(ScenarioResult {
        name: cfg.name.clone(),
        controller: cfg.controller,
        dt,
        rows,
        events,
        metrics,
        aborted,
    })
}

/// Splices bypasses until the active reference avoids every known zone.
#[allow(clippy::too_many_arguments)]
fn avoid(
    cfg: &ScenarioConfig,
    zones: &[crate::avoidance::DangerZone],
    discovery: &Discovery,
    t: f64,
    reference: &mut ReferenceTrajectory,
    events: &mut Vec<Event>,
    pending: &mut Option<PendingBypass>,
    detour_total: &mut f64,
) -> Result<()> {
    let max_rounds = 4 * zones.len() + 1;
    for _ in 0..max_rounds {
        let hit = zones
            .iter()
            .enumerate()
            .filter(|(i, _)| discovery.is_known(*i))
            .filter_map(|(i, z)| path_crosses_zone(reference, z, t).map(|c| (i, z, c)))
            .min_by(|a, b| a.2 .0.total_cmp(&b.2 .0));
        let Some((idx, zone, crossing)) = hit else {
            return Ok(());
        };
        let req = BypassRequest {
            t_earliest: t,
            lead: cfg.avoidance.lead,
            speed_hint: None,
        };
        let (left, right) = plan_both(reference, zone, crossing, &req);
        let plan = select_side(left, right, cfg.controller)?;
        *reference = splice(reference, &plan);
        *detour_total += plan.detour_length;
        events.push(Event::BypassStart {
            t,
            obstacle: idx,
            side: plan.side,
            detour_length: plan.detour_length,
            t_start: plan.splice_interval.0,
            t_end: plan.splice_interval.1,
        });
        *pending = Some(PendingBypass {
            obstacle: idx,
            t_end: plan.splice_interval.1,
        });
    }
    Err(Error::InfeasibleBypass("bypasses keep re-entering danger zones".into()))
}

fn compute_metrics(rows: &[Row], cfg: &ScenarioConfig, detour_total: f64) -> Metrics {
    let err = |r: &Row| (r.x - r.x_ref).hypot(r.y - r.y_ref);
    let rms = |it: &mut dyn Iterator<Item = &Row>| {
        let (mut sum, mut count) = (0.0, 0usize);
        for r in it {
            sum += err(r).powi(2);
            count += 1;
        }
        if count == 0 {
            0.0
        } else {
            (sum / count as f64).sqrt()
        }
    };
    let rms_tracking = rms(&mut rows.iter());
    let rms_tracking_settled = rms(&mut rows.iter().filter(|r| r.t >= cfg.warmup - 1e-9));
    let max_tracking = rows.iter().map(err).fold(0.0, f64::max);
    let min_clearance: Vec<Option<f64>> = cfg
        .obstacles
        .iter()
        .map(|ob| {
            let c = ob.center();
            rows.iter()
                .filter(|r| r.t >= ob.t_appear - 1e-9)
                .map(|r| Vec2::new(r.x, r.y).distance(c))
                .reduce(f64::min)
        })
        .collect();
    let safety_violations = min_clearance
        .iter()
        .zip(&cfg.obstacles)
        .filter(|(d, ob)| d.is_some_and(|d| d < ob.radius))
        .count();
    let mut total_path_length = 0.0;
    let mut reverse_distance = 0.0;
    for w in rows.windows(2) {
        let d = Vec2::new(w[1].x - w[0].x, w[1].y - w[0].y);
        let len = d.norm();
        total_path_length += len;
        if d.dot(Vec2::new(w[0].dx_ref, w[0].dy_ref)) < 0.0 {
            reverse_distance += len;
        }
    }
    let applied = rows.len().saturating_sub(1);
    let control_energy = rows[..applied].iter().map(|r| r.u1 * r.u1 * cfg.dt).sum();
    Metrics {
        rms_tracking,
        rms_tracking_settled,
        max_tracking,
        min_clearance,
        safety_violations,
        total_path_length,
        detour_total,
        reverse_distance,
        control_energy,
    }
}
