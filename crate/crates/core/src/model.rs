//! Plant kinematics, control representations and the stochastic inputs
//! (measurement noise, crosswind-like perturbation) acting on the plant.

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// Below this speed the heading of `(nu1, nu2)` is ill-conditioned and the
/// previous heading is kept.
pub const EPS_SPEED: f64 = 1e-6;

/// Bounds of the uniform perturbation distribution.
pub const PERTURBATION_BOUND: f64 = 0.5;

/// Which control stack closes the loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Heol,
    Mfpc,
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ControllerKind::Heol => "heol",
            ControllerKind::Mfpc => "mfpc",
        })
    }
}

/// Position of the rear-axle midpoint at a sample time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

impl VehicleState {
    pub fn new(t: f64, x: f64, y: f64) -> Self {
        Self { t, x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.x.is_finite() && self.y.is_finite()
    }
}

/// Auxiliary inputs that turn the plant into two parallel integrators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuxInput {
    pub nu1: f64,
    pub nu2: f64,
}

/// Speed and heading applied to the plant, plus the auxiliary inputs when the
/// controller works in that representation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    pub u1: f64,
    pub u2: f64,
    pub aux: Option<AuxInput>,
}

impl ControlInput {
    pub fn from_true(u1: f64, u2: f64) -> Self {
        Self { u1, u2, aux: None }
    }

    /// Builds a control from auxiliary inputs, keeping `prev_heading` when the
    /// speed is too small to define one.
    pub fn from_aux(nu1: f64, nu2: f64, prev_heading: f64) -> Self {
        let (u1, u2) = aux_to_true(nu1, nu2, prev_heading);
        Self {
            u1,
            u2,
            aux: Some(AuxInput { nu1, nu2 }),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.u1.is_finite()
            && self.u2.is_finite()
            && self.aux.is_none_or(|a| a.nu1.is_finite() && a.nu2.is_finite())
    }
}

/// `(nu1, nu2) -> (u1, u2)`; the heading is frozen at `prev_heading` when
/// `u1 < EPS_SPEED`.
pub fn aux_to_true(nu1: f64, nu2: f64, prev_heading: f64) -> (f64, f64) {
    let u1 = nu1.hypot(nu2);
    if u1 < EPS_SPEED {
        (u1, prev_heading)
    } else {
        (u1, nu2.atan2(nu1))
    }
}

pub fn true_to_aux(u1: f64, u2: f64) -> (f64, f64) {
    (u1 * u2.cos(), u1 * u2.sin())
}

/// One explicit-Euler step of the (possibly perturbed) kinematics
/// `x' = u1 cos u2`, `y' = u1 (1 + p) sin u2`.
pub fn step_plant(state: &VehicleState, control: &ControlInput, p: f64, dt: f64) -> Result<VehicleState> {
    let integrity = |what: &str| Error::StateIntegrity {
        t: state.t,
        what: what.to_string(),
    };
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(integrity("sampling period must be positive and finite"));
    }
    if !state.is_finite() {
        return Err(integrity("non-finite state"));
    }
    if !(control.u1.is_finite() && control.u2.is_finite()) {
        return Err(integrity("non-finite control"));
    }
    if !p.is_finite() {
        return Err(integrity("non-finite perturbation"));
    }
    let (s, c) = control.u2.sin_cos();
    let next = VehicleState {
        t: state.t + dt,
        x: state.x + dt * control.u1 * c,
        y: state.y + dt * control.u1 * (1.0 + p) * s,
    };
    if !next.is_finite() {
        return Err(integrity("state overflowed"));
    }
    Ok(next)
}

/// Additive i.i.d. Gaussian measurement noise parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma: f64,
    pub seed: u64,
    pub enabled: bool,
}

impl NoiseModel {
    pub fn disabled() -> Self {
        Self {
            sigma: 0.0,
            seed: 0,
            enabled: false,
        }
    }

    /// Opens the two independent draw streams (x and y).
    pub fn source(&self) -> MeasurementNoise {
        MeasurementNoise {
            enabled: self.enabled && self.sigma > 0.0,
            normal: Normal::new(0.0, self.sigma.max(0.0)).expect("sigma is finite"),
            rng_x: stream_rng(self.seed, Stream::NoiseX),
            rng_y: stream_rng(self.seed, Stream::NoiseY),
        }
    }
}

/// Stateful noise source; one draw per axis per call to [`measure`](Self::measure).
#[derive(Debug, Clone)]
pub struct MeasurementNoise {
    enabled: bool,
    normal: Normal<f64>,
    rng_x: ChaCha20Rng,
    rng_y: ChaCha20Rng,
}

impl MeasurementNoise {
    pub fn measure(&mut self, state: &VehicleState) -> (f64, f64) {
        if !self.enabled {
            return (state.x, state.y);
        }
        let nx = self.normal.sample(&mut self.rng_x);
        let ny = self.normal.sample(&mut self.rng_y);
        (state.x + nx, state.y + ny)
    }
}

/// Piecewise-constant perturbation `p(t) = values[floor(t / switch_interval)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSchedule {
    pub switch_interval: f64,
    pub values: Vec<f64>,
    pub seed: u64,
}

impl PerturbationSchedule {
    /// Draws enough levels from U[-0.5, 0.5] to cover `[0, duration]`.
    pub fn generate(seed: u64, switch_interval: f64, duration: f64) -> Result<Self> {
        if !(switch_interval > 0.0 && switch_interval.is_finite()) {
            return Err(Error::Config(format!(
                "perturbation switch interval must be positive, got {switch_interval}"
            )));
        }
        if !(duration >= 0.0 && duration.is_finite()) {
            return Err(Error::Config(format!("invalid duration {duration}")));
        }
        let count = (duration / switch_interval + 1e-9).floor() as usize + 1;
        let dist = Uniform::new_inclusive(-PERTURBATION_BOUND, PERTURBATION_BOUND).expect("valid bounds");
        let mut rng = stream_rng(seed, Stream::Perturbation);
        let values = (0..count).map(|_| rng.sample(dist)).collect();
        Ok(Self {
            switch_interval,
            values,
            seed,
        })
    }

    pub fn value_at(&self, t: f64) -> f64 {
        if self.values.is_empty() || t < 0.0 {
            return 0.0;
        }
        let idx = (t / self.switch_interval + 1e-9).floor() as usize;
        self.values[idx.min(self.values.len() - 1)]
    }
}
