//! Implicit Euler / minimizing-movement time stepping.
//!
//! One step from `y` with step size `tau` solves
//!
//! ```text
//!     (x - y) / tau = -grad F(x)
//! ```
//!
//! for `x` in the monotone cone, which is the Euler-Lagrange equation of the
//! Yosida-regularized functional `|x - y|^2 / (2 tau) + F(x)`. The nonlinear
//! system is solved by a damped Newton iteration with the Yosida value as
//! merit function and the previous state as initial guess; a trial iterate
//! that violates strict monotonicity is rejected by halving the damping
//! factor.

use crate::functionals::{
    delta_norm, entropy, information, information_gradient, information_hessian_banded,
    inner_product, ModelParams,
};
use crate::mass_mesh::{LagrangianState, MassGrid, MeshError, PiecewiseConstantDensity};
use crate::numerics::BandedMatrix;
use thiserror::Error;

/// Newton and damping controls for one implicit Euler step.
#[derive(Debug, Clone)]
pub struct StepConfig {
    /// Convergence threshold on the metric norm of the step residual. When
    /// the Newton correction falls below one ulp the iteration is at its
    /// floating-point fixed point; such a step is accepted as long as the
    /// residual is within a factor ten of this threshold, and the report
    /// carries the residual actually achieved.
    pub residual_tol: f64,
    pub max_newton_iter: usize,
    /// Sufficient-decrease constant for the backtracking line search.
    pub armijo: f64,
    /// Smallest admissible damping factor before the step is declared failed.
    pub min_damping: f64,
    /// Monotonicity safeguard: a trial needs `x_{k+1} - x_k > margin * span`.
    pub mono_margin: f64,
    /// How often `evolve` may halve a failing step size before giving up.
    pub max_tau_halvings: u32,
}

impl Default for StepConfig {
    fn default() -> Self {
        StepConfig {
            residual_tol: 1e-11,
            max_newton_iter: 60,
            armijo: 1e-4,
            min_damping: (2.0f64).powi(-30),
            mono_margin: 1e-14,
            max_tau_halvings: 10,
        }
    }
}

#[derive(Debug, Error)]
pub enum StepError {
    #[error("states live on different grids")]
    GridMismatch,
    #[error("step size must be positive, got {0}")]
    BadStepSize(f64),
    #[error("Newton did not reach tolerance after {iters} iterations (residual {residual:e})")]
    NewtonStalled { residual: f64, iters: usize },
    #[error("damping underflow during line search (residual {residual:e})")]
    DampingUnderflow { residual: f64 },
    #[error("Newton matrix is singular")]
    SingularMatrix,
    #[error("accepted step increased the driving functional by {increase:e}")]
    NotDissipative { increase: f64 },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Step failure escalated out of [`evolve`], carrying the trajectory so far.
#[derive(Debug, Error)]
#[error("step {step} failed after {halvings} step-size halvings: {source}")]
pub struct EvolveError {
    pub step: usize,
    pub halvings: u32,
    pub source: StepError,
    pub partial: Trajectory,
}

/// Minimizer data used for per-step gap diagnostics (confined case).
#[derive(Debug, Clone)]
pub struct GapReference {
    pub h_min: f64,
    pub f_min: f64,
    pub density: PiecewiseConstantDensity,
}

/// Per-step diagnostics.
#[derive(Debug, Clone)]
pub struct StepReport {
    /// Time after the step.
    pub time: f64,
    /// Step size actually used (after any halvings).
    pub tau: f64,
    pub newton_iters: usize,
    pub residual_norm: f64,
    pub entropy: f64,
    pub information: f64,
    /// Yosida value of the accepted state relative to its predecessor.
    pub yosida: f64,
    /// Slack of `(1 + 2 tau lambda)(H^n - H_min) <= H^{n-1} - H_min`.
    pub entropy_slack: Option<f64>,
    /// Slack of the analogous information inequality.
    pub information_slack: Option<f64>,
    /// L1 distance of the carried density to the minimizer density.
    pub l1_error: Option<f64>,
}

/// Time-ordered states with their per-step diagnostics; entry 0 is the
/// initial state at time zero.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    states: Vec<LagrangianState>,
    reports: Vec<StepReport>,
}

impl Trajectory {
    pub fn states(&self) -> &[LagrangianState] {
        &self.states
    }

    pub fn reports(&self) -> &[StepReport] {
        &self.reports
    }

    pub fn times(&self) -> Vec<f64> {
        self.reports.iter().map(|r| r.time).collect()
    }

    pub fn last_state(&self) -> &LagrangianState {
        self.states.last().expect("trajectory never empty")
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Residual of the implicit Euler equation,
/// `(x - x_prev) / tau + grad F(x)` in metric form.
pub fn residual(
    x: &LagrangianState,
    x_prev: &LagrangianState,
    tau: f64,
    p: &ModelParams,
) -> Result<Vec<f64>, StepError> {
    if !MassGrid::same_grid(x.grid(), x_prev.grid()) {
        return Err(StepError::GridMismatch);
    }
    if !(tau > 0.0) {
        return Err(StepError::BadStepSize(tau));
    }
    let g = information_gradient(x, p);
    Ok(x.positions()
        .iter()
        .zip(x_prev.positions())
        .zip(&g.metric)
        .map(|((xi, yi), gi)| (xi - yi) / tau + gi)
        .collect())
}

/// Yosida-regularized step objective `|x - y|^2 / (2 sigma) + F(x)`.
pub fn yosida_value(
    x: &LagrangianState,
    y: &LagrangianState,
    sigma: f64,
    p: &ModelParams,
) -> Result<f64, StepError> {
    if !MassGrid::same_grid(x.grid(), y.grid()) {
        return Err(StepError::GridMismatch);
    }
    if !(sigma > 0.0) {
        return Err(StepError::BadStepSize(sigma));
    }
    let d: Vec<f64> = x
        .positions()
        .iter()
        .zip(y.positions())
        .map(|(a, b)| a - b)
        .collect();
    let d2 = inner_product(&d, &d, x.grid()).expect("length");
    Ok(d2 / (2.0 * sigma) + information(x, p).value())
}

fn is_monotone(x: &[f64], margin: f64) -> bool {
    x.windows(2).all(|w| w[1] - w[0] > margin)
}

/// Newton system matrix `W / tau + d2F(x)` (partial-derivative form).
fn newton_matrix(s: &LagrangianState, tau: f64, p: &ModelParams) -> BandedMatrix {
    let mut j = information_hessian_banded(s, p);
    for (k, d) in s.grid().node_weights().iter().enumerate() {
        j.add(k, k, d / tau);
    }
    j
}

/// Outcome of a converged Newton solve.
#[derive(Debug, Clone, Copy)]
pub struct SolveStats {
    pub newton_iters: usize,
    pub residual_norm: f64,
}

/// One implicit Euler step by damped Newton from `x_prev`.
pub fn solve_step(
    x_prev: &LagrangianState,
    tau: f64,
    p: &ModelParams,
    cfg: &StepConfig,
) -> Result<(LagrangianState, SolveStats), StepError> {
    if !(tau > 0.0) {
        return Err(StepError::BadStepSize(tau));
    }
    let grid = x_prev.grid().clone();
    let weights = grid.node_weights();
    let mono = cfg.mono_margin * x_prev.span();

    let mut x = x_prev.clone();
    let mut phi = residual(&x, x_prev, tau, p)?;
    let mut res = delta_norm(&phi, &grid).expect("length");
    let mut merit = yosida_value(&x, x_prev, tau, p)?;
    let mut iters = 0usize;

    while res > cfg.residual_tol {
        if iters >= cfg.max_newton_iter {
            return Err(StepError::NewtonStalled {
                residual: res,
                iters,
            });
        }
        let j = newton_matrix(&x, tau, p);
        let rhs: Vec<f64> = phi.iter().zip(weights).map(|(f, w)| -w * f).collect();
        let dir = j.solve(&rhs).ok_or(StepError::SingularMatrix)?;
        // directional derivative of the Yosida value along the Newton step
        let descent: f64 = phi
            .iter()
            .zip(&dir)
            .zip(weights)
            .map(|((f, d), w)| w * (f * d))
            .sum();
        let mut damping = 1.0f64;
        let mut at_floor = false;
        let accepted = loop {
            let trial: Vec<f64> = x
                .positions()
                .iter()
                .zip(&dir)
                .map(|(xi, di)| xi + damping * di)
                .collect();
            if damping == 1.0 && trial == *x.positions() {
                // the full Newton correction is below one ulp: the iteration
                // sits at its floating-point fixed point
                at_floor = true;
                break (x.clone(), merit, None);
            }
            if is_monotone(&trial, mono) {
                let cand = LagrangianState::new(grid.clone(), trial).expect("monotone checked");
                let value = yosida_value(&cand, x_prev, tau, p)?;
                // with indefinite curvature far from the solution the Newton
                // direction may not be a descent direction; fall back to
                // plain decrease of the merit function
                let threshold = merit + cfg.armijo * damping * descent.min(0.0);
                if value <= threshold {
                    break (cand, value, None);
                }
                // local phase: once the merit decrease drops below its own
                // rounding, accept on residual contraction instead
                let cphi = residual(&cand, x_prev, tau, p)?;
                let cres = delta_norm(&cphi, &grid).expect("length");
                if cres <= (1.0 - 0.5 * damping) * res
                    && value <= merit + 1e-12 * merit.abs().max(1.0)
                {
                    break (cand, value, Some((cphi, cres)));
                }
            }
            damping *= 0.5;
            if damping < cfg.min_damping {
                return Err(StepError::DampingUnderflow { residual: res });
            }
        };
        if at_floor {
            if res <= 10.0 * cfg.residual_tol {
                break;
            }
            return Err(StepError::NewtonStalled {
                residual: res,
                iters,
            });
        }
        let prev_res = res;
        x = accepted.0;
        merit = accepted.1;
        if let Some((cphi, cres)) = accepted.2 {
            phi = cphi;
            res = cres;
        } else {
            phi = residual(&x, x_prev, tau, p)?;
            res = delta_norm(&phi, &grid).expect("length");
        }
        iters += 1;
        // rounding floor: close to the tolerance with no real progress left
        if res > cfg.residual_tol && res <= 10.0 * cfg.residual_tol && res >= 0.9 * prev_res {
            break;
        }
    }

    // the solved step must dissipate the driving functional
    let f_prev = information(x_prev, p).value();
    let f_new = information(&x, p).value();
    let allowance = 1e-12 * f_prev.abs().max(1.0);
    if f_new > f_prev + allowance {
        return Err(StepError::NotDissipative {
            increase: f_new - f_prev,
        });
    }

    Ok((
        x,
        SolveStats {
            newton_iters: iters,
            residual_norm: res,
        },
    ))
}

fn make_report(
    state: &LagrangianState,
    prev: Option<(&LagrangianState, f64)>,
    time: f64,
    stats: SolveStats,
    p: &ModelParams,
    reference: Option<&GapReference>,
) -> StepReport {
    let h = entropy(state, p).value();
    let f = information(state, p).value();
    let (tau, yosida) = match prev {
        Some((y, tau)) => (
            tau,
            yosida_value(state, y, tau, p).expect("states share the grid"),
        ),
        None => (0.0, f),
    };
    let (mut hs, mut fs, mut l1) = (None, None, None);
    if let Some(r) = reference {
        l1 = Some(state.density().l1_distance(&r.density));
        if let Some((y, tau)) = prev {
            let factor = 1.0 + 2.0 * tau * p.lambda();
            let h_prev = entropy(y, p).value();
            let f_prev = information(y, p).value();
            hs = Some((h_prev - r.h_min) - factor * (h - r.h_min));
            fs = Some((f_prev - r.f_min) - factor * (f - r.f_min));
        }
    }
    StepReport {
        time,
        tau,
        newton_iters: stats.newton_iters,
        residual_norm: stats.residual_norm,
        entropy: h,
        information: f,
        yosida,
        entropy_slack: hs,
        information_slack: fs,
        l1_error: l1,
    }
}

/// Evolve the scheme through the given step sizes.
///
/// A failing step is retried with half the step size, up to
/// `cfg.max_tau_halvings` times; the report records the size actually taken.
/// When a reference minimum is supplied, per-step entropy and information
/// dissipation slacks and the L1 distance to the minimizer are logged.
pub fn evolve(
    initial: LagrangianState,
    schedule: &[f64],
    p: &ModelParams,
    cfg: &StepConfig,
    reference: Option<&GapReference>,
) -> Result<Trajectory, EvolveError> {
    let stats0 = SolveStats {
        newton_iters: 0,
        residual_norm: 0.0,
    };
    let mut traj = Trajectory {
        reports: vec![make_report(&initial, None, 0.0, stats0, p, reference)],
        states: vec![initial],
    };
    let mut t = 0.0;
    for (n, &tau_n) in schedule.iter().enumerate() {
        let mut tau = tau_n;
        let mut halvings = 0u32;
        loop {
            match solve_step(traj.last_state(), tau, p, cfg) {
                Ok((next, stats)) => {
                    t += tau;
                    let report = make_report(
                        &next,
                        Some((traj.last_state(), tau)),
                        t,
                        stats,
                        p,
                        reference,
                    );
                    traj.states.push(next);
                    traj.reports.push(report);
                    break;
                }
                Err(source) => {
                    if halvings >= cfg.max_tau_halvings {
                        return Err(EvolveError {
                            step: n + 1,
                            halvings,
                            source,
                            partial: traj,
                        });
                    }
                    tau *= 0.5;
                    halvings += 1;
                }
            }
        }
    }
    Ok(traj)
}

/// A priori admissibility bounds for one step (diagnostic).
#[derive(Debug, Clone, Copy)]
pub struct AdmissibilityBounds {
    /// Support bound: positions stay within `[-L, L]`.
    pub support_bound: f64,
    /// Upper bound on every cell density of the step's solution.
    pub density_bound: f64,
    /// Sharper support bound available for positive confinement.
    pub confined_support_bound: Option<f64>,
}

/// Bounds on the support and densities of a minimizing-movement step from
/// `x_prev` with step `tau`, given an energy bound `c >= F(x_prev)`.
pub fn admissibility_bounds(
    x_prev: &LagrangianState,
    tau: f64,
    p: &ModelParams,
    c: f64,
) -> AdmissibilityBounds {
    let grid = x_prev.grid();
    let delta_min = grid
        .node_weights()
        .iter()
        .fold(f64::INFINITY, |m, v| m.min(*v));
    let sup_norm = x_prev
        .positions()
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let support_bound = (2.0 * tau * c / delta_min).sqrt() + sup_norm;
    let pw = p.alpha() + 0.5;
    let density_bound =
        (grid.total_mass() * c / p.theta() + (2.0 * support_bound).powf(pw)).powf(1.0 / pw);
    let confined_support_bound = if p.lambda() > 0.0 {
        Some(2.0 * c / (delta_min * p.lambda()))
    } else {
        None
    };
    AdmissibilityBounds {
        support_bound,
        density_bound,
        confined_support_bound,
    }
}
