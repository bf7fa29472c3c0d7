//! Dilation, discrete scaling identities, and the change of variables that
//! maps the unconfined flow onto the confined one.
//!
//! The dilation `d_r` scales positions by `r` and densities by `1/r`. The
//! unconfined entropy and information functionals obey exact power laws under
//! dilation, which turns a confined (`lambda = 1`) minimizing-movement step of
//! size `tau` into an unconfined step of size
//! `tau_hat = tau S R^(2 alpha + 2)`; iterating with `S^n = (1 + tau_n) S^(n-1)`
//! produces self-similar solutions of the unconfined scheme and the
//! algebraic decay factor bookkeeping.

use crate::functionals::{entropy, information, ModelParams};
use crate::mass_mesh::{LagrangianState, MeshError};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RescaleError {
    #[error("dilation factor must be positive, got {0}")]
    BadFactor(f64),
    #[error("need R > S > 0, got R = {r}, S = {s}")]
    BadTransfer { r: f64, s: f64 },
}

/// Dilation `d_r`: positions scale by `r`, densities by `1/r`.
pub fn dilate(s: &LagrangianState, r: f64) -> Result<LagrangianState, RescaleError> {
    if !(r > 0.0) {
        return Err(RescaleError::BadFactor(r));
    }
    let x: Vec<f64> = s.positions().iter().map(|xi| r * xi).collect();
    LagrangianState::new(s.grid().clone(), x).map_err(|_: MeshError| RescaleError::BadFactor(r))
}

/// Relative residuals of the dilation identities for the unconfined entropy
/// and information parts:
///
/// ```text
///     H(d_r x) = r^(-(2 alpha - 1)/2) H(x)          (alpha > 1/2),
///     H(d_r x) = H(x) - Theta M ln r                (alpha = 1/2),
///     F(d_r x) = r^(-(2 alpha + 1)) F(x).
/// ```
pub fn scaling_residuals(s: &LagrangianState, p: &ModelParams, r: f64) -> (f64, f64) {
    let dil = dilate(s, r).expect("positive factor");
    let h0 = entropy(s, p).internal;
    let hr = entropy(&dil, p).internal;
    let h_expect = if p.is_log_branch() {
        h0 - p.theta() * s.grid().total_mass() * r.ln()
    } else {
        r.powf(-(2.0 * p.alpha() - 1.0) / 2.0) * h0
    };
    let f0 = information(s, p).internal;
    let fr = information(&dil, p).internal;
    let f_expect = r.powf(-(2.0 * p.alpha() + 1.0)) * f0;
    (
        (hr - h_expect).abs() / h_expect.abs().max(1.0),
        (fr - f_expect).abs() / f_expect.abs().max(1.0),
    )
}

/// Step parameters of the transferred minimizing-movement problem: a confined
/// step `(tau, lambda)` from a state dilated by `S` corresponds to a step
/// `(tau_hat, lambda_hat)` for the images under `d_R`,
/// `tau_hat = tau S R^(2 alpha + 2)` and
/// `lambda_hat = (S (1 + lambda tau) - R) / (tau_hat R)`; the choice
/// `R = (1 + lambda tau) S` removes the confinement.
pub fn transfer_step(
    tau: f64,
    lambda: f64,
    s_factor: f64,
    r_factor: f64,
    alpha: f64,
) -> Result<(f64, f64), RescaleError> {
    if !(r_factor > s_factor && s_factor > 0.0) {
        return Err(RescaleError::BadTransfer {
            r: r_factor,
            s: s_factor,
        });
    }
    let tau_hat = tau * s_factor * r_factor.powf(2.0 * alpha + 2.0);
    let lambda_hat = (s_factor * (1.0 + lambda * tau) - r_factor) / (tau_hat * r_factor);
    Ok((tau_hat, lambda_hat))
}

/// Growth factors and transformed time steps for the zero-confinement change
/// of variables, from base confined steps `tau_n`:
/// `S^0 = 1`, `S^n = (1 + tau_n) S^(n-1)`,
/// `tau_hat_n = tau_n S^(n-1) (S^n)^(2 alpha + 2)`, `s_hat_n = sum tau_hat`.
#[derive(Debug, Clone)]
pub struct RescaleSchedule {
    alpha: f64,
    base_tau: Vec<f64>,
    base_time: Vec<f64>,
    scale: Vec<f64>,
    tau_hat: Vec<f64>,
    time_hat: Vec<f64>,
    a_tau: f64,
    b_tau: f64,
}

impl RescaleSchedule {
    pub fn from_steps(alpha: f64, steps: &[f64]) -> Self {
        let n = steps.len();
        let tau_max = steps.iter().fold(0.0f64, |m, v| m.max(*v));
        let mut scale = Vec::with_capacity(n + 1);
        let mut base_time = Vec::with_capacity(n + 1);
        let mut tau_hat = Vec::with_capacity(n);
        let mut time_hat = Vec::with_capacity(n + 1);
        scale.push(1.0);
        base_time.push(0.0);
        time_hat.push(0.0);
        for (i, &tau) in steps.iter().enumerate() {
            let prev = scale[i];
            let next = (1.0 + tau) * prev;
            let th = tau * prev * next.powf(2.0 * alpha + 2.0);
            scale.push(next);
            base_time.push(base_time[i] + tau);
            tau_hat.push(th);
            time_hat.push(time_hat[i] + th);
        }
        RescaleSchedule {
            alpha,
            base_tau: steps.to_vec(),
            base_time,
            scale,
            tau_hat,
            time_hat,
            a_tau: (1.0 + tau_max).powf(-(2.0 * alpha + 2.0)),
            b_tau: 1.0 + 2.0 * tau_max,
        }
    }

    pub fn constant(alpha: f64, tau: f64, n_steps: usize) -> Self {
        Self::from_steps(alpha, &vec![tau; n_steps])
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn len(&self) -> usize {
        self.base_tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base_tau.is_empty()
    }

    pub fn base_tau(&self) -> &[f64] {
        &self.base_tau
    }

    /// Base (confined) time `t_n`.
    pub fn base_time(&self, n: usize) -> f64 {
        self.base_time[n]
    }

    /// Growth factor `S^n`.
    pub fn scale(&self, n: usize) -> f64 {
        self.scale[n]
    }

    /// Transformed step sizes `tau_hat_n` (length `len()`).
    pub fn tau_hat(&self) -> &[f64] {
        &self.tau_hat
    }

    /// Transformed time `s_hat_n`.
    pub fn time_hat(&self, n: usize) -> f64 {
        self.time_hat[n]
    }

    pub fn a_tau(&self) -> f64 {
        self.a_tau
    }

    pub fn b_tau(&self) -> f64 {
        self.b_tau
    }

    /// Algebraic decay factor `R_Delta^n` at the transformed time `s_hat_n`.
    pub fn decay_factor(&self, n: usize) -> f64 {
        let e = 2.0 * self.alpha + 3.0;
        (1.0 + self.a_tau * e * self.time_hat[n]).powf(1.0 / (self.b_tau * e))
    }
}

/// Continuous rescaling factor `R(t) = (1 + (2 alpha + 3) t)^(1/(2 alpha + 3))`.
pub fn continuous_rescale_factor(t: f64, alpha: f64) -> f64 {
    let e = 2.0 * alpha + 3.0;
    (1.0 + e * t).powf(1.0 / e)
}

/// Exact self-similar solution of the unconfined scheme with steps
/// `tau_hat_n`: the dilations `d_{S^n}` of the confined minimizer.
pub fn self_similar_states(
    minimizer: &LagrangianState,
    schedule: &RescaleSchedule,
) -> Vec<LagrangianState> {
    (0..=schedule.len())
        .map(|n| dilate(minimizer, schedule.scale(n)).expect("positive factor"))
        .collect()
}

/// Per-step dissipation slacks of the confined entropy along a transformed
/// trajectory, evaluated by pulling each state back to the confined frame:
/// with `gap_n = H(d_{1/S^n} xhat^n) - h_min`, the slack of
/// `(1 + 2 tau_n) gap_n <= gap_{n-1}` is returned for `n = 1..`.
pub fn rescaled_dissipation_slacks(
    hat_states: &[LagrangianState],
    schedule: &RescaleSchedule,
    confined: &ModelParams,
    h_min: f64,
) -> Vec<f64> {
    assert_eq!(hat_states.len(), schedule.len() + 1);
    let gaps: Vec<f64> = hat_states
        .iter()
        .enumerate()
        .map(|(n, s)| {
            let back = dilate(s, 1.0 / schedule.scale(n)).expect("positive factor");
            entropy(&back, confined).value() - h_min
        })
        .collect();
    gaps.windows(2)
        .zip(schedule.base_tau())
        .map(|(w, tau)| w[0] - (1.0 + 2.0 * tau) * w[1])
        .collect()
}
