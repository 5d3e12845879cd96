//! Scenario files: a versioned JSON document describing one closed-loop run
//! and, optionally, how a sweep randomizes it.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::avoidance::{AvoidanceParams, Obstacle};
use crate::error::{Error, Result};
use crate::heol::HeolGains;
use crate::mfpc::MfpcParams;
use crate::model::{ControllerKind, NoiseModel, PerturbationSchedule};
use crate::reference::{build_reference, PathSpec, ReferenceTrajectory, DEFAULT_TAU_MAX};
use crate::rng::{stream_rng, Stream};

pub const CONFIG_VERSION: u32 = 1;
pub const DEFAULT_DT: f64 = 0.01;
pub const DEFAULT_DURATION: f64 = 20.0;
pub const DEFAULT_NOISE_SIGMA: f64 = 0.1;
pub const DEFAULT_SWITCH_INTERVAL: f64 = 2.0;
pub const DEFAULT_STARTUP_THRESHOLD: f64 = 0.5;
pub const DEFAULT_WARMUP: f64 = 1.0;

fn default_version() -> u32 {
    CONFIG_VERSION
}
fn default_name() -> String {
    "scenario".into()
}
fn default_dt() -> f64 {
    DEFAULT_DT
}
fn default_duration() -> f64 {
    DEFAULT_DURATION
}
fn default_warmup() -> f64 {
    DEFAULT_WARMUP
}

/// Gaussian measurement noise; `sigma` is a standard deviation in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub enabled: bool,
    pub sigma: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            sigma: DEFAULT_NOISE_SIGMA,
        }
    }
}

/// Piecewise-constant perturbation of the `y` dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbationConfig {
    pub enabled: bool,
    pub switch_interval: f64,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            switch_interval: DEFAULT_SWITCH_INTERVAL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyncConfig {
    /// Resynchronise at t = 0 when the vehicle starts farther than
    /// `startup_threshold` from the reference.
    pub startup: bool,
    pub post_bypass: bool,
    pub tau_max: f64,
    pub startup_threshold: f64,
}

impl Default for SyncConfig {
    fn default() -> Self {
        Self {
            startup: true,
            post_bypass: true,
            tau_max: DEFAULT_TAU_MAX,
            startup_threshold: DEFAULT_STARTUP_THRESHOLD,
        }
    }
}

/// Random obstacle placed across the reference: its center is the reference
/// point at a time drawn from `t_range`, shifted along the normal by at most
/// `lateral_fraction` of the danger radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObstacleSampler {
    pub count: usize,
    pub radius: [f64; 2],
    pub t_range: [f64; 2],
    pub lateral_fraction: f64,
    pub t_appear: f64,
}

impl Default for ObstacleSampler {
    fn default() -> Self {
        Self {
            count: 1,
            radius: [0.3, 1.0],
            t_range: [6.0, 14.0],
            lateral_fraction: 0.7,
            t_appear: 0.0,
        }
    }
}

impl ObstacleSampler {
    fn validate(&self) -> Result<()> {
        let ok = self.radius[0] > 0.0
            && self.radius[1] >= self.radius[0]
            && self.t_range[1] >= self.t_range[0]
            && self.t_range[0] >= 0.0
            && (0.0..1.0).contains(&self.lateral_fraction)
            && self.t_appear >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid obstacle sampler {self:?}")))
        }
    }

    /// Draws `count` obstacles from the obstacle-placement stream of `seed`.
    pub fn sample(&self, seed: u64, reference: &ReferenceTrajectory, margin: f64) -> Vec<Obstacle> {
        let mut rng = stream_rng(seed, Stream::ObstaclePlacement);
        (0..self.count)
            .map(|_| {
                let r = rng.random_range(self.radius[0]..=self.radius[1]);
                let t = rng.random_range(self.t_range[0]..=self.t_range[1]);
                let u: f64 = rng.random_range(-1.0..=1.0);
                let s = reference.lookup(t);
                let tangent = s.velocity().normalized();
                let normal = crate::geometry::Vec2::new(-tangent.y, tangent.x);
                let c = s.position() + normal * (u * self.lateral_fraction * (r + margin));
                Obstacle {
                    center: [c.x, c.y],
                    radius: r,
                    t_appear: self.t_appear,
                }
            })
            .collect()
    }
}

/// What a sweep varies between runs. Each run gets its own derived seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    pub randomize_noise: bool,
    pub randomize_perturbation: bool,
    /// Replaces the scenario's obstacles when present.
    pub obstacles: Option<ObstacleSampler>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            randomize_noise: true,
            randomize_perturbation: true,
            obstacles: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_version")]
    pub version: u32,
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_duration")]
    pub duration: f64,
    pub controller: ControllerKind,
    pub path: PathSpec,
    /// Initial position; the reference start when absent.
    #[serde(default)]
    pub initial: Option<[f64; 2]>,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    #[serde(default)]
    pub avoidance: AvoidanceParams,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub perturbation: PerturbationConfig,
    #[serde(default)]
    pub heol: HeolGains,
    #[serde(default)]
    pub mfpc: MfpcParams,
    #[serde(default)]
    pub sync: SyncConfig,
    /// Start of the window used for the settled tracking metric.
    #[serde(default = "default_warmup")]
    pub warmup: f64,
    /// Master seed for the noise and perturbation streams.
    #[serde(default)]
    pub seed: u64,
    /// Overrides `seed` for the perturbation stream only.
    #[serde(default)]
    pub perturbation_seed: Option<u64>,
    #[serde(default)]
    pub sweep: SweepSpec,
}

impl ScenarioConfig {
    /// A scenario with every optional field at its default.
    pub fn new(controller: ControllerKind, path: PathSpec) -> Self {
        Self {
            version: CONFIG_VERSION,
            name: default_name(),
            dt: DEFAULT_DT,
            duration: DEFAULT_DURATION,
            controller,
            path,
            initial: None,
            obstacles: Vec::new(),
            avoidance: AvoidanceParams::default(),
            noise: NoiseConfig::default(),
            perturbation: PerturbationConfig::default(),
            heol: HeolGains::default(),
            mfpc: MfpcParams::default(),
            sync: SyncConfig::default(),
            warmup: DEFAULT_WARMUP,
            seed: 0,
            perturbation_seed: None,
            sweep: SweepSpec::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite() && self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::Config(format!("dt = {} and duration = {} must be positive", self.dt, self.duration)));
        }
        let ratio = self.duration / self.dt;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "duration {} is not an integer multiple of dt {}",
                self.duration, self.dt
            )));
        }
        if let Some(p) = self.initial {
            if !p.iter().all(|v| v.is_finite()) {
                return Err(Error::Config("initial position must be finite".into()));
            }
        }
        for ob in &self.obstacles {
            ob.validate()?;
        }
        self.avoidance.validate()?;
        if self.noise.enabled && !(self.noise.sigma >= 0.0 && self.noise.sigma.is_finite()) {
            return Err(Error::Config(format!("noise sigma must be non-negative, got {}", self.noise.sigma)));
        }
        if !(self.perturbation.switch_interval > 0.0) {
            return Err(Error::Config("perturbation switch interval must be positive".into()));
        }
        if !(self.sync.tau_max >= 0.0 && self.sync.startup_threshold >= 0.0) {
            return Err(Error::Config("sync tau_max and startup threshold must be non-negative".into()));
        }
        if !(self.warmup >= 0.0) {
            return Err(Error::Config("warmup must be non-negative".into()));
        }
        match self.controller {
            ControllerKind::Heol => crate::heol::HeolController::new(self.heol, self.dt).map(|_| ()),
            ControllerKind::Mfpc => crate::mfpc::MfpcController::new(self.mfpc, self.dt).map(|_| ()),
        }
        .map_err(|e| match e {
            Error::Config(m) => Error::Config(m),
            other => Error::Config(other.to_string()),
        })?;
        if let Some(s) = &self.sweep.obstacles {
            s.validate()?;
        }
        self.reference().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn reference(&self) -> Result<ReferenceTrajectory> {
        build_reference(&self.path, self.dt, self.duration)
    }

    pub fn noise_model(&self) -> NoiseModel {
        NoiseModel {
            sigma: self.noise.sigma,
            seed: self.seed,
            enabled: self.noise.enabled,
        }
    }

    pub fn perturbation_schedule(&self) -> Result<Option<PerturbationSchedule>> {
        if !self.perturbation.enabled {
            return Ok(None);
        }
        let seed = self.perturbation_seed.unwrap_or(self.seed);
        PerturbationSchedule::generate(seed, self.perturbation.switch_interval, self.duration).map(Some)
    }

    /// The sweep variant of this scenario for `run_seed`.
    pub fn variant(&self, run_seed: u64) -> Result<Self> {
        let mut cfg = self.clone();
        let base_perturbation_seed = self.perturbation_seed.unwrap_or(self.seed);
        if self.sweep.randomize_noise {
            cfg.seed = run_seed;
        }
        cfg.perturbation_seed = Some(if self.sweep.randomize_perturbation {
            run_seed
        } else {
            base_perturbation_seed
        });
        if let Some(sampler) = &self.sweep.obstacles {
            let reference = self.reference()?;
            cfg.obstacles = sampler.sample(run_seed, &reference, self.avoidance.margin);
        }
        Ok(cfg)
    }
}
