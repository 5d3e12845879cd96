//! Sliding-window algebraic estimation of the lumped drift term of a
//! first-order input/output model `y' = F + a u`.
//!
//! Over a window of length `T` ending at the current time the estimate is
//!
//! ```text
//! F_hat = -6/T^3 * ∫_0^T [ (T - 2s) y(t - T + s) + a s (T - s) u(t - T + s) ] ds
//! ```
//!
//! The integral is evaluated against the piecewise-linear interpolant of the
//! stored samples with exact kernel moments (product trapezoidal rule). This
//! keeps the second-order accuracy of the plain trapezoid for smooth data and
//! is exact whenever `y` and `u` are affine over the window, which is exactly
//! the constant-drift case the estimator is meant to recover.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Minimum number of stored samples for a meaningful window.
pub const MIN_WINDOW_SAMPLES: usize = 5;

/// Ring of the most recent `(output, input)` samples plus the quadrature
/// weights for the window length.
#[derive(Debug, Clone)]
pub struct EstimatorWindow {
    t_window: f64,
    capacity: usize,
    outputs: VecDeque<f64>,
    inputs: VecDeque<f64>,
    w_out: Vec<f64>,
    w_in: Vec<f64>,
}

impl EstimatorWindow {
    /// Window of length `t_window` sampled every `dt`; `t_window` must be an
    /// integer multiple of `dt` giving at least [`MIN_WINDOW_SAMPLES`] samples.
    pub fn new(t_window: f64, dt: f64) -> Result<Self> {
        if !(t_window > 0.0 && dt > 0.0 && t_window.is_finite() && dt.is_finite()) {
            return Err(Error::Config(format!(
                "estimator window {t_window} and sampling period {dt} must be positive"
            )));
        }
        let ratio = t_window / dt;
        let intervals = ratio.round();
        if (ratio - intervals).abs() > 1e-6 {
            return Err(Error::Config(format!(
                "estimator window {t_window} is not a multiple of dt = {dt}"
            )));
        }
        let intervals = intervals as usize;
        if intervals + 1 < MIN_WINDOW_SAMPLES {
            return Err(Error::Config(format!(
                "estimator window holds {} samples, need at least {MIN_WINDOW_SAMPLES}",
                intervals + 1
            )));
        }
        let h = t_window / intervals as f64;
        let w_out = product_weights(|s| t_window - 2.0 * s, intervals, h);
        let w_in = product_weights(|s| s * (t_window - s), intervals, h);
        Ok(Self {
            t_window,
            capacity: intervals + 1,
            outputs: VecDeque::with_capacity(intervals + 1),
            inputs: VecDeque::with_capacity(intervals + 1),
            w_out,
            w_in,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.outputs.len() == self.capacity
    }

    pub fn t_window(&self) -> f64 {
        self.t_window
    }

    pub fn push(&mut self, output: f64, input: f64) {
        if self.outputs.len() == self.capacity {
            self.outputs.pop_front();
            self.inputs.pop_front();
        }
        self.outputs.push_back(output);
        self.inputs.push_back(input);
    }

    /// Shifts every stored output by `-offset`. Used when the quantity the
    /// outputs are measured against jumps, so the jump is not read as motion.
    pub fn rebase(&mut self, offset: f64) {
        for y in &mut self.outputs {
            *y -= offset;
        }
    }

    pub fn clear(&mut self) {
        self.outputs.clear();
        self.inputs.clear();
    }

    /// Drift estimate with input gain `input_gain`; zero until the window is full.
    pub fn estimate(&self, input_gain: f64) -> f64 {
        if !self.is_full() {
            return 0.0;
        }
        let out: f64 = self.w_out.iter().zip(&self.outputs).map(|(w, y)| w * y).sum();
        let inp: f64 = self.w_in.iter().zip(&self.inputs).map(|(w, u)| w * u).sum();
        -6.0 / self.t_window.powi(3) * (out + input_gain * inp)
    }
}

/// Weights `w_j` such that `Σ w_j g_j = ∫_0^{n h} K(s) ĝ(s) ds`, where `ĝ` is
/// the piecewise-linear interpolant of the samples `g_j = g(j h)`. Per
/// interval the integrand is `K` times a hat function, integrated with
/// Simpson's rule, which is exact for kernels of degree two or less.
fn product_weights(kernel: impl Fn(f64) -> f64, n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![0.0; n + 1];
    for j in 0..n {
        let a = j as f64 * h;
        let (k0, km, k1) = (kernel(a), kernel(a + 0.5 * h), kernel(a + h));
        // left node carries (1 - θ), right node carries θ; θ = 0, 1/2, 1
        w[j] += h / 6.0 * (k0 + 4.0 * km * 0.5);
        w[j + 1] += h / 6.0 * (4.0 * km * 0.5 + k1);
    }
    w
}
