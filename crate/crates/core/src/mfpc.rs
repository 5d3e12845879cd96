//! Model-free predictive control.
//!
//! Each axis is described by the ultra-local model `y' = F + alpha u`, with
//! `F` re-estimated every sample from a sliding window of raw outputs and
//! applied inputs. Holding `F` constant, minimising
//! `∫ (y - y_sp)^2 + u^2 dt` gives `y'' = alpha^2 (y - y_sp)`, whose solution
//! `y* = y_sp + c1 e^{alpha t} + c2 e^{-alpha t}` is fixed by the two boundary
//! conditions `y*(t_i) = y_i`, `y*(t_f) = y_sp`. The first instant of that
//! optimal trajectory is applied and the problem is solved again at the next
//! sample (receding horizon).
//!
//! For the vehicle, `x` is driven by the speed `u1` and `y` by the heading
//! `u2`, which is kept inside `(-π/2, π/2)`.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::EstimatorWindow;
use crate::model::ControlInput;
use crate::reference::ReferenceTrajectory;

/// Largest `|alpha (t_f - t_i)|` accepted by [`solve_two_point`].
pub const EXPONENT_GUARD: f64 = 40.0;

pub const DEFAULT_ALPHA1: f64 = 1.0;
pub const DEFAULT_ALPHA2: f64 = 1.5;
pub const DEFAULT_HORIZON: f64 = 0.3;
pub const DEFAULT_WINDOW: f64 = 0.3;
pub const DEFAULT_U1_MAX: f64 = 5.0;
pub const DEFAULT_U2_MARGIN: f64 = 0.01;

/// Closed-form optimal trajectory between two boundary points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundarySolution {
    pub c1: f64,
    pub c2: f64,
    pub t_i: f64,
    pub t_f: f64,
    /// Exponent rate `|alpha|`.
    pub rate: f64,
    pub y_setpoint: f64,
}

impl BoundarySolution {
    pub fn value(&self, t: f64) -> f64 {
        self.y_setpoint + self.c1 * (self.rate * t).exp() + self.c2 * (-self.rate * t).exp()
    }

    pub fn derivative(&self, t: f64) -> f64 {
        self.rate * (self.c1 * (self.rate * t).exp() - self.c2 * (-self.rate * t).exp())
    }
}

/// Coefficients of `y* = y_sp + c1 e^{a t} + c2 e^{-a t}` (with `a = |alpha|`)
/// meeting `y*(t_i) = y_i` and `y*(t_f) = y_sp`.
pub fn solve_two_point(y_i: f64, y_setpoint: f64, t_i: f64, t_f: f64, alpha: f64) -> Result<BoundarySolution> {
    if !(t_f > t_i) || !t_i.is_finite() || !t_f.is_finite() {
        return Err(Error::InvalidArgument(format!("need t_f > t_i, got [{t_i}, {t_f}]")));
    }
    if alpha == 0.0 || !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!("alpha must be finite and non-zero, got {alpha}")));
    }
    let a = alpha.abs();
    let product = a * (t_f - t_i);
    if product > EXPONENT_GUARD {
        return Err(Error::ShrinkHorizon {
            product,
            limit: EXPONENT_GUARD,
        });
    }
    let (ei, emi) = ((a * t_i).exp(), (-a * t_i).exp());
    let (ef, emf) = ((a * t_f).exp(), (-a * t_f).exp());
    let den = ei * emf - emi * ef;
    let c1 = (y_i * emf - y_setpoint * emf) / den;
    let c2 = -(ef * (y_i - y_setpoint)) / den;
    Ok(BoundarySolution {
        c1,
        c2,
        t_i,
        t_f,
        rate: a,
        y_setpoint,
    })
}

/// One axis of the ultra-local model and its estimation window.
#[derive(Debug, Clone)]
pub struct UltraLocalAxis {
    alpha: f64,
    window: EstimatorWindow,
    f_est: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisStep {
    /// Input from the optimal trajectory, before any bound.
    pub u_raw: f64,
    /// Input actually applied and stored in the window.
    pub u: f64,
    pub f_est: f64,
    pub solution: BoundarySolution,
}

impl UltraLocalAxis {
    pub fn new(alpha: f64, t_window: f64, dt: f64) -> Result<Self> {
        if alpha == 0.0 || !alpha.is_finite() {
            return Err(Error::Config(format!("alpha must be finite and non-zero, got {alpha}")));
        }
        Ok(Self {
            alpha,
            window: EstimatorWindow::new(t_window, dt)?,
            f_est: 0.0,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn f_est(&self) -> f64 {
        self.f_est
    }

    pub fn window(&self) -> &EstimatorWindow {
        &self.window
    }

    pub fn window_mut(&mut self) -> &mut EstimatorWindow {
        &mut self.window
    }

    /// Drift estimate from the stored raw outputs and applied inputs.
    pub fn estimate(&self) -> f64 {
        self.window.estimate(self.alpha)
    }

    /// Re-estimates `F`, solves the boundary problem on `[t_k, t_f]` and
    /// returns `u = (y*'(t_eval) - F) / alpha`, clamped to `bounds`. The
    /// measured output and the applied input are pushed to the window.
    pub fn step(
        &mut self,
        y_meas: f64,
        y_setpoint: f64,
        t_k: f64,
        t_f: f64,
        t_eval: f64,
        bounds: (f64, f64),
    ) -> Result<AxisStep> {
        self.f_est = self.estimate();
        let solution = solve_two_point(y_meas, y_setpoint, t_k, t_f, self.alpha)?;
        let u_raw = (solution.derivative(t_eval) - self.f_est) / self.alpha;
        let u = u_raw.clamp(bounds.0, bounds.1);
        self.window.push(y_meas, u);
        Ok(AxisStep {
            u_raw,
            u,
            f_est: self.f_est,
            solution,
        })
    }
}

/// Unbounded single-axis step with the optimal trajectory read at `t_k`.
pub fn mfpc_axis_step(axis: &mut UltraLocalAxis, y_meas: f64, y_setpoint: f64, t_k: f64, t_f: f64) -> Result<AxisStep> {
    axis.step(y_meas, y_setpoint, t_k, t_f, t_k, (f64::NEG_INFINITY, f64::INFINITY))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MfpcParams {
    pub alpha1: f64,
    pub alpha2: f64,
    /// Receding horizon length; the setpoint is the reference at `t + horizon`.
    pub horizon: f64,
    pub t_window: f64,
    pub u1_max: f64,
    /// Distance kept from ±π/2 by the heading clamp.
    pub u2_margin: f64,
    /// Read the optimal trajectory slope at `t_k + dt` instead of `t_k`.
    pub evaluate_at_next_sample: bool,
}

impl Default for MfpcParams {
    fn default() -> Self {
        Self {
            alpha1: DEFAULT_ALPHA1,
            alpha2: DEFAULT_ALPHA2,
            horizon: DEFAULT_HORIZON,
            t_window: DEFAULT_WINDOW,
            u1_max: DEFAULT_U1_MAX,
            u2_margin: DEFAULT_U2_MARGIN,
            evaluate_at_next_sample: false,
        }
    }
}

impl MfpcParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.alpha1 == 0.0 || self.alpha2 == 0.0 || !self.alpha1.is_finite() || !self.alpha2.is_finite() {
            return bad(format!("alphas must be non-zero, got {} and {}", self.alpha1, self.alpha2));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        if !(self.u1_max > 0.0) {
            return bad(format!("u1_max must be positive, got {}", self.u1_max));
        }
        if !(self.u2_margin > 0.0 && self.u2_margin < FRAC_PI_2) {
            return bad(format!("u2_margin must lie in (0, π/2), got {}", self.u2_margin));
        }
        Ok(())
    }

    pub fn u2_bounds(&self) -> (f64, f64) {
        (-FRAC_PI_2 + self.u2_margin, FRAC_PI_2 - self.u2_margin)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClampedInput {
    U1,
    U2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClampEvent {
    pub t: f64,
    pub input: ClampedInput,
    pub requested: f64,
    pub applied: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MfpcOutput {
    pub control: ControlInput,
    pub f_est_x: f64,
    pub f_est_y: f64,
    pub clamps: Vec<ClampEvent>,
}

/// Two ultra-local axes: speed drives `x`, heading drives `y`.
#[derive(Debug, Clone)]
pub struct MfpcController {
    params: MfpcParams,
    dt: f64,
    x_axis: UltraLocalAxis,
    y_axis: UltraLocalAxis,
}

impl MfpcController {
    pub fn new(params: MfpcParams, dt: f64) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            dt,
            x_axis: UltraLocalAxis::new(params.alpha1, params.t_window, dt)?,
            y_axis: UltraLocalAxis::new(params.alpha2, params.t_window, dt)?,
        })
    }

    pub fn params(&self) -> &MfpcParams {
        &self.params
    }

    pub fn axes(&self) -> (&UltraLocalAxis, &UltraLocalAxis) {
        (&self.x_axis, &self.y_axis)
    }

    pub fn step(&mut self, meas: (f64, f64), traj: &ReferenceTrajectory, t: f64) -> Result<MfpcOutput> {
        if !(meas.0.is_finite() && meas.1.is_finite()) {
            return Err(Error::ControllerFault {
                t,
                what: format!("non-finite measurement ({}, {})", meas.0, meas.1),
            });
        }
        let p = &self.params;
        // the guard caps the horizon rather than failing the step
        let horizon = p
            .horizon
            .min(EXPONENT_GUARD / p.alpha1.abs())
            .min(EXPONENT_GUARD / p.alpha2.abs());
        let t_f = t + horizon;
        let target = traj.lookup(t_f);
        let t_eval = if p.evaluate_at_next_sample { t + self.dt } else { t };
        let u2_bounds = p.u2_bounds();
        let sx = self.x_axis.step(meas.0, target.x, t, t_f, t_eval, (0.0, p.u1_max))?;
        let sy = self.y_axis.step(meas.1, target.y, t, t_f, t_eval, u2_bounds)?;
        let mut clamps = Vec::new();
        for (input, s) in [(ClampedInput::U1, &sx), (ClampedInput::U2, &sy)] {
            if s.u != s.u_raw {
                clamps.push(ClampEvent {
                    t,
                    input,
                    requested: s.u_raw,
                    applied: s.u,
                });
            }
        }
        let control = ControlInput::from_true(sx.u, sy.u);
        if !control.is_finite() {
            return Err(Error::ControllerFault {
                t,
                what: "non-finite control".into(),
            });
        }
        Ok(MfpcOutput {
            control,
            f_est_x: sx.f_est,
            f_est_y: sy.f_est,
            clamps,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{step_plant, VehicleState};
    use crate::reference::{build_reference, PathSpec};
    use std::f64::consts::E;

    #[test]
    fn equal_endpoints_give_zero_coefficients() {
        let s = solve_two_point(2.5, 2.5, 3.0, 4.0, 1.2).unwrap();
        assert_eq!((s.c1, s.c2), (0.0, 0.0));
        assert_eq!(s.value(3.7), 2.5);
    }

    #[test]
    fn unit_problem_coefficients() {
        let s = solve_two_point(1.0, 0.0, 0.0, 1.0, 1.0).unwrap();
        let den = 1.0 / E - E;
        assert!((s.c1 - (1.0 / E) / den).abs() < 1e-14);
        assert!((s.c2 - (-E / den)).abs() < 1e-14);
        assert!((s.c1 - -0.156518).abs() < 1e-6);
        assert!((s.c2 - 1.156518).abs() < 1e-6);
        assert!((s.c1 + s.c2 - 1.0).abs() < 1e-14);
        assert!((s.value(0.0) - 1.0).abs() < 1e-12);
        assert!(s.value(1.0).abs() < 1e-12);
    }

    #[test]
    fn guard_and_domain_errors() {
        assert!(matches!(
            solve_two_point(1.0, 0.0, 0.0, 50.0, 1.0),
            Err(Error::ShrinkHorizon { .. })
        ));
        assert!(solve_two_point(1.0, 0.0, 1.0, 1.0, 1.0).is_err());
        assert!(solve_two_point(1.0, 0.0, 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn negative_alpha_uses_the_same_curve() {
        let p = solve_two_point(0.3, -1.0, 2.0, 3.0, 0.8).unwrap();
        let n = solve_two_point(0.3, -1.0, 2.0, 3.0, -0.8).unwrap();
        assert_eq!(p, n);
    }

    fn full_axis(alpha: f64, f: f64, u0: f64) -> UltraLocalAxis {
        let mut axis = UltraLocalAxis::new(alpha, 0.3, 0.01).unwrap();
        for j in 0..31 {
            // outputs at the setpoint 0 over time, consistent with constant drift f
            let s = j as f64 * 0.01;
            axis.window_mut().push((f + alpha * u0) * (s - 0.3), u0);
        }
        axis
    }

    #[test]
    fn axis_step_at_setpoint() {
        let mut axis = UltraLocalAxis::new(1.0, 0.3, 0.01).unwrap();
        let s = mfpc_axis_step(&mut axis, 0.0, 0.0, 0.0, 1.0).unwrap();
        assert_eq!(s.u, 0.0);

        let f = 0.6;
        let mut axis = full_axis(2.0, f, 0.0);
        let s = mfpc_axis_step(&mut axis, 0.0, 0.0, 5.0, 6.0).unwrap();
        assert!((s.f_est - f).abs() < 1e-9);
        assert!((s.u - -f / 2.0).abs() < 1e-9);
    }

    #[test]
    fn axis_step_unit_problem() {
        let mut axis = UltraLocalAxis::new(1.0, 0.3, 0.01).unwrap();
        let s = mfpc_axis_step(&mut axis, 1.0, 0.0, 0.0, 1.0).unwrap();
        assert!((s.u - -1.313036).abs() < 1e-6, "{}", s.u);
    }

    #[test]
    fn solution_ignores_drift_estimate() {
        let mut a = full_axis(1.0, 0.0, 0.0);
        let mut b = full_axis(1.0, 0.9, 0.2);
        let sa = mfpc_axis_step(&mut a, 0.4, 1.0, 2.0, 3.0).unwrap();
        let sb = mfpc_axis_step(&mut b, 0.4, 1.0, 2.0, 3.0).unwrap();
        assert_ne!(sa.f_est, sb.f_est);
        assert_eq!(sa.solution.c1.to_bits(), sb.solution.c1.to_bits());
        assert_eq!(sa.solution.c2.to_bits(), sb.solution.c2.to_bits());
    }

    #[test]
    fn euler_lagrange_residual_vanishes() {
        let s = solve_two_point(-2.0, 1.5, 4.0, 6.5, 1.7).unwrap();
        let h = 1e-4;
        for i in 1..=100 {
            let t = 4.0 + 2.5 * i as f64 / 101.0;
            let ydd = (s.value(t + h) - 2.0 * s.value(t) + s.value(t - h)) / (h * h);
            assert!((ydd - 1.7f64.powi(2) * (s.value(t) - 1.5)).abs() < 1e-4);
        }
    }

    #[test]
    fn receding_horizon_on_exact_model() {
        // synthetic plant y' = F + alpha u; successive optimal curves stay O(dt) apart
        let (alpha, f, dt) = (1.0, 0.4, 0.01);
        let mut axis = UltraLocalAxis::new(alpha, 0.3, dt).unwrap();
        let mut y = 1.0;
        let mut prev: Option<BoundarySolution> = None;
        for k in 0..300 {
            let t = k as f64 * dt;
            let s = mfpc_axis_step(&mut axis, y, 0.0, t, 3.5).unwrap();
            if let (Some(p), true) = (prev, axis.window().is_full() && k > 40) {
                let gap = (0..=20)
                    .map(|j| t + (3.5 - t) * j as f64 / 20.0)
                    .map(|tt| (p.value(tt) - s.solution.value(tt)).abs())
                    .fold(0.0, f64::max);
                assert!(gap <= 5.0 * dt, "gap {gap} at t = {t}");
            }
            prev = Some(s.solution);
            y += dt * (f + alpha * s.u);
        }
    }

    #[test]
    fn heading_is_clamped_with_event() {
        let spec = PathSpec::Polyline {
            waypoints: vec![[0.0, 0.0], [0.0, 20.0]],
            speed: 1.0,
            corner_radius: 0.5,
        };
        let traj = build_reference(&spec, 0.01, 20.0).unwrap();
        let mut ctl = MfpcController::new(MfpcParams::default(), 0.01).unwrap();
        // far below the reference: the y-axis asks for more than π/2
        let out = ctl.step((0.0, -5.0), &traj, 0.0).unwrap();
        let (_, hi) = MfpcParams::default().u2_bounds();
        assert_eq!(out.control.u2, hi);
        assert!(out.clamps.iter().any(|c| c.input == ClampedInput::U2 && c.requested > hi));
        assert!(out.control.aux.is_none());
    }

    #[test]
    fn stationary_reference_gives_zero_input() {
        let traj = ReferenceTrajectory::from_fn(0.0, 0.01, 100, |_| (1.0, 2.0, 0.0, 0.0));
        let mut ctl = MfpcController::new(MfpcParams::default(), 0.01).unwrap();
        let out = ctl.step((1.0, 2.0), &traj, 0.0).unwrap();
        assert_eq!((out.control.u1, out.control.u2), (0.0, 0.0));
    }

    #[test]
    fn straight_line_speed_settles() {
        let spec = PathSpec::Polyline {
            waypoints: vec![[0.0, 0.0], [25.0, 0.0]],
            speed: 1.0,
            corner_radius: 0.5,
        };
        let traj = build_reference(&spec, 0.01, 20.0).unwrap();
        let mut ctl = MfpcController::new(MfpcParams::default(), 0.01).unwrap();
        let mut s = VehicleState::new(0.0, 0.0, 0.0);
        for k in 0..1000 {
            let out = ctl.step((s.x, s.y), &traj, k as f64 * 0.01).unwrap();
            if k >= 300 {
                assert!((out.control.u1 - 1.0).abs() <= 0.1, "u1 = {} at step {k}", out.control.u1);
            }
            s = step_plant(&s, &out.control, 0.0, 0.01).unwrap();
        }
    }
}
