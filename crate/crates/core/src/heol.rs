//! Flatness-based tracking with an intelligent proportional (iP) law.
//!
//! With `nu = (x', y')` the plant is two integrators, so around the reference
//! the errors obey `d(Δx)/dt = F_x + Δnu1`, `d(Δy)/dt = F_y + Δnu2`, where
//! `F_x`, `F_y` lump every mismatch and disturbance. Each step estimates them
//! from a sliding window and closes the loop with
//! `Δnu = -(F_hat + K Δζ)` on top of the reference feedforward.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::EstimatorWindow;
use crate::model::ControlInput;
use crate::reference::{flat_feedforward, ReferenceTrajectory};

pub const DEFAULT_GAIN: f64 = 2.0;
pub const DEFAULT_WINDOW: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeolGains {
    pub kx: f64,
    pub ky: f64,
    /// Estimator window length in seconds.
    pub t_window: f64,
}

impl Default for HeolGains {
    fn default() -> Self {
        Self {
            kx: DEFAULT_GAIN,
            ky: DEFAULT_GAIN,
            t_window: DEFAULT_WINDOW,
        }
    }
}

impl HeolGains {
    pub fn validate(&self) -> Result<()> {
        if !(self.kx > 0.0 && self.ky > 0.0 && self.kx.is_finite() && self.ky.is_finite()) {
            return Err(Error::Config(format!(
                "HEOL gains must be positive, got kx = {}, ky = {}",
                self.kx, self.ky
            )));
        }
        Ok(())
    }
}

/// Mismatch estimate from a window of flat-output errors and auxiliary-input
/// errors (unit input gain).
pub fn estimate_f(window: &EstimatorWindow) -> f64 {
    window.estimate(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeolOutput {
    pub control: ControlInput,
    pub fhat_x: f64,
    pub fhat_y: f64,
    pub delta_x: f64,
    pub delta_y: f64,
}

/// Per-run controller state: the two error windows and the last heading.
#[derive(Debug, Clone)]
pub struct HeolController {
    gains: HeolGains,
    window_x: EstimatorWindow,
    window_y: EstimatorWindow,
    heading: f64,
}

impl HeolController {
    pub fn new(gains: HeolGains, dt: f64) -> Result<Self> {
        gains.validate()?;
        Ok(Self {
            gains,
            window_x: EstimatorWindow::new(gains.t_window, dt)?,
            window_y: EstimatorWindow::new(gains.t_window, dt)?,
            heading: 0.0,
        })
    }

    pub fn gains(&self) -> &HeolGains {
        &self.gains
    }

    /// Heading used when the commanded speed is too small to define one.
    pub fn set_heading(&mut self, heading: f64) {
        self.heading = heading;
    }

    pub fn windows(&self) -> (&EstimatorWindow, &EstimatorWindow) {
        (&self.window_x, &self.window_y)
    }

    /// Re-expresses the stored errors after the reference jumped by
    /// `(jump_x, jump_y)` at the current time.
    pub fn rebase(&mut self, jump_x: f64, jump_y: f64) {
        self.window_x.rebase(jump_x);
        self.window_y.rebase(jump_y);
    }

    pub fn step(&mut self, meas: (f64, f64), traj: &ReferenceTrajectory, t: f64) -> Result<HeolOutput> {
        if !(meas.0.is_finite() && meas.1.is_finite()) {
            return Err(Error::ControllerFault {
                t,
                what: format!("non-finite measurement ({}, {})", meas.0, meas.1),
            });
        }
        let r = traj.lookup(t);
        let delta_x = meas.0 - r.x;
        let delta_y = meas.1 - r.y;
        let fhat_x = estimate_f(&self.window_x);
        let fhat_y = estimate_f(&self.window_y);
        let dnu1 = -(fhat_x + self.gains.kx * delta_x);
        let dnu2 = -(fhat_y + self.gains.ky * delta_y);
        let ff = flat_feedforward(traj, t, self.heading);
        let (nu1_ref, nu2_ref) = ff.aux.map_or((0.0, 0.0), |a| (a.nu1, a.nu2));
        let control = ControlInput::from_aux(nu1_ref + dnu1, nu2_ref + dnu2, self.heading);
        if !control.is_finite() {
            return Err(Error::ControllerFault {
                t,
                what: "non-finite control".into(),
            });
        }
        self.window_x.push(delta_x, dnu1);
        self.window_y.push(delta_y, dnu2);
        self.heading = control.u2;
        Ok(HeolOutput {
            control,
            fhat_x,
            fhat_y,
            delta_x,
            delta_y,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{step_plant, VehicleState};
    use crate::reference::{build_reference, PathSpec};

    fn line() -> ReferenceTrajectory {
        let spec = PathSpec::Polyline {
            waypoints: vec![[0.0, 0.0], [20.0, 0.0]],
            speed: 1.0,
            corner_radius: 0.5,
        };
        build_reference(&spec, 0.01, 20.0).unwrap()
    }

    #[test]
    fn on_reference_matches_feedforward() {
        let traj = line();
        let mut ctl = HeolController::new(HeolGains::default(), 0.01).unwrap();
        let out = ctl.step((0.0, 0.0), &traj, 0.0).unwrap();
        let ff = flat_feedforward(&traj, 0.0, 0.0);
        assert_eq!(out.control, ff);
    }

    #[test]
    fn proportional_term() {
        let traj = line();
        let mut ctl = HeolController::new(HeolGains::default(), 0.01).unwrap();
        let out = ctl.step((0.1, 0.0), &traj, 0.0).unwrap();
        let aux = out.control.aux.unwrap();
        assert!((aux.nu1 - (1.0 - 0.2)).abs() < 1e-12);
        assert_eq!(aux.nu2, 0.0);
    }

    #[test]
    fn rejects_bad_gains_and_measurements() {
        let bad = HeolGains {
            kx: 0.0,
            ..HeolGains::default()
        };
        assert!(HeolController::new(bad, 0.01).is_err());
        let mut ctl = HeolController::new(HeolGains::default(), 0.01).unwrap();
        assert!(matches!(
            ctl.step((f64::NAN, 0.0), &line(), 0.0),
            Err(Error::ControllerFault { .. })
        ));
    }

    #[test]
    fn constant_disturbance_is_absorbed() {
        // integrator plant with a constant drift on y: y' = nu2 + 0.3
        let traj = line();
        let gains = HeolGains::default();
        let mut ctl = HeolController::new(gains, 0.01).unwrap();
        let (mut x, mut y) = (0.0, 0.0);
        let mut tail = Vec::new();
        for k in 0..=300 {
            let t = k as f64 * 0.01;
            let out = ctl.step((x, y), &traj, t).unwrap();
            if t >= 3.0 * gains.t_window - 1e-9 {
                tail.push((t, out.delta_y, out.fhat_y));
            }
            let aux = out.control.aux.unwrap();
            x += 0.01 * aux.nu1;
            y += 0.01 * (aux.nu2 + 0.3);
        }
        // F_hat has converged once three windows have passed
        for (t, _, f) in &tail {
            assert!((f - 0.3).abs() <= 0.05 * 0.3, "F_hat {f} at t = {t}");
        }
        // the warm-up error then decays with time constant 1/Ky into the band
        let (_, dy_end, _) = *tail.last().unwrap();
        assert!(dy_end.abs() <= 0.3 / gains.ky * 0.1, "Δy {dy_end}");
        assert!(tail.windows(2).all(|w| w[1].1.abs() <= w[0].1.abs() + 1e-12));
    }

    #[test]
    fn exact_estimate_contracts_error() {
        // with F_hat = F injected, Δ_{k+1} = (1 - K dt) Δ_k
        for k_gain in [1.0, 2.0, 5.0] {
            let (dt, f) = (0.01, 0.7);
            let mut delta: f64 = 0.5;
            for _ in 0..100 {
                let dnu = -(f + k_gain * delta);
                let next = delta + dt * (f + dnu);
                assert!((next / delta - (1.0 - k_gain * dt)).abs() < 1e-12);
                delta = next;
            }
        }
    }

    #[test]
    fn nominal_tracking_is_exact_up_to_euler_error() {
        let spec = PathSpec::Sinusoid {
            origin: [0.0, 0.0],
            amplitude: 1.0,
            wavelength: 8.0,
            speed: 1.0,
            duration: None,
        };
        let traj = build_reference(&spec, 0.01, 20.0).unwrap();
        let mut ctl = HeolController::new(HeolGains::default(), 0.01).unwrap();
        let mut s = VehicleState::new(0.0, 0.0, 0.0);
        let mut worst: f64 = 0.0;
        let mut prev: Option<ControlInput> = None;
        let mut max_change: f64 = 0.0;
        for k in 0..2000 {
            let t = k as f64 * 0.01;
            let out = ctl.step((s.x, s.y), &traj, t).unwrap();
            let r = traj.lookup(t);
            worst = worst.max((s.x - r.x).hypot(s.y - r.y));
            if let Some(p) = prev {
                max_change = max_change.max((out.control.u1 - p.u1).abs() + (out.control.u2 - p.u2).abs());
            }
            prev = Some(out.control);
            s = step_plant(&s, &out.control, 0.0, 0.01).unwrap();
        }
        assert!(worst <= 1e-3, "max tracking error {worst}");
        // no chatter: per-step control change bounded by L dt with a modest L
        assert!(max_change <= 5.0 * 0.01, "max control change {max_change}");
    }
}
