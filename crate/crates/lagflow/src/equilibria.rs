//! Stationary reference profiles and discrete entropy minimizers.
//!
//! For positive confinement the entropy and the information functional share
//! a unique minimizer. Its continuous counterpart is the compactly supported
//! power profile
//!
//! ```text
//!     b(x) = (a - b x^2)_+^(1/(alpha - 1/2)),   b = ((alpha - 1/2)/sqrt(2 alpha)) Lambda,
//! ```
//!
//! for `alpha > 1/2`, and the Gaussian `a exp(-Lambda x^2)` at `alpha = 1/2`,
//! with `a` fixed by unit mass.

use crate::functionals::{
    delta_norm, entropy, entropy_gradient, entropy_hessian, information, information_gradient,
    ModelParams,
};
use crate::mass_mesh::{AffineInterpolant, LagrangianState, MassGrid, PiecewiseConstantDensity};
use crate::numerics::{brent_root, quad_with_breakpoints};
use crate::stepper::GapReference;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EquilibriumError {
    #[error("no integrable equilibrium without confinement (lambda = 0)")]
    NoEquilibrium,
    #[error("reference profiles are normalized to unit mass, grid carries {0}")]
    NonUnitMass(f64),
    #[error("mass normalization did not bracket (a in ({lo}, {hi}))")]
    Normalization { lo: f64, hi: f64 },
    #[error("minimizer Newton iteration failed (residual {residual:e} after {iters} iterations)")]
    NewtonFailed { residual: f64, iters: usize },
}

/// Continuous stationary profile of unit mass.
#[derive(Debug, Clone)]
pub struct EquilibriumProfile {
    alpha: f64,
    lambda: f64,
    confinement: f64,
    /// Quadratic coefficient; zero for the Gaussian branch.
    b_coeff: f64,
    /// Normalization constant fixed by unit mass.
    a_coeff: f64,
    /// Support radius; `None` for the Gaussian (full line).
    support_radius: Option<f64>,
    /// Effective domain used for quadrature and quantiles; for the Gaussian
    /// the truncation tail carries less than 1e-18 of the mass.
    effective_radius: f64,
}

impl EquilibriumProfile {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn confinement(&self) -> f64 {
        self.confinement
    }

    pub fn a_coeff(&self) -> f64 {
        self.a_coeff
    }

    pub fn b_coeff(&self) -> f64 {
        self.b_coeff
    }

    pub fn support_radius(&self) -> Option<f64> {
        self.support_radius
    }

    pub fn effective_radius(&self) -> f64 {
        self.effective_radius
    }

    pub fn eval(&self, x: f64) -> f64 {
        if self.alpha == 0.5 {
            self.a_coeff * (-self.confinement * x * x).exp()
        } else {
            // vanishes at and outside the support radius
            if x.abs() >= self.effective_radius {
                return 0.0;
            }
            let base = self.a_coeff - self.b_coeff * x * x;
            if base <= 0.0 {
                0.0
            } else {
                base.powf(1.0 / (self.alpha - 0.5))
            }
        }
    }

    /// Cumulated mass from the left edge of the (effective) support.
    pub fn cdf(&self, x: f64) -> f64 {
        let r = self.effective_radius;
        if x <= -r {
            return 0.0;
        }
        let hi = x.min(r);
        quad_with_breakpoints(&|t| self.eval(t), -r, hi, &[0.0], 1e-13)
    }

    /// Position of the mass quantile `m` in `[0, 1]`.
    pub fn quantile(&self, m: f64) -> f64 {
        let r = self.effective_radius;
        if m <= 0.0 {
            return -r;
        }
        if m >= 1.0 {
            return r;
        }
        brent_root(&|x| self.cdf(x) - m, -r, r, 1e-14 * r.max(1.0), 1e-13)
            .expect("cdf spans (0, 1) over the support")
    }

    /// Entropy of the profile, by quadrature.
    pub fn entropy_value(&self, p: &ModelParams) -> f64 {
        let r = self.effective_radius;
        let internal =
            quad_with_breakpoints(&|x| p.phi_entropy(self.eval(x)), -r, r, &[0.0], 1e-13);
        let drift = quad_with_breakpoints(&|x| x * x * self.eval(x), -r, r, &[0.0], 1e-13);
        internal + 0.5 * p.confinement() * drift
    }
}

/// Barenblatt-type profile (or Gaussian at `alpha = 1/2`) of unit mass.
pub fn reference_profile(p: &ModelParams) -> Result<EquilibriumProfile, EquilibriumError> {
    if p.lambda() == 0.0 {
        return Err(EquilibriumError::NoEquilibrium);
    }
    let alpha = p.alpha();
    let lam = p.confinement();
    if alpha == 0.5 {
        // a exp(-Lambda x^2) integrates to a sqrt(pi / Lambda)
        let a = (lam / std::f64::consts::PI).sqrt();
        let eff = (42.0f64 / lam).sqrt();
        return Ok(EquilibriumProfile {
            alpha,
            lambda: p.lambda(),
            confinement: lam,
            b_coeff: 0.0,
            a_coeff: a,
            support_radius: None,
            effective_radius: eff,
        });
    }
    let b = (alpha - 0.5) / (2.0 * alpha).sqrt() * lam;
    let a = if alpha == 1.0 {
        // mass (16/15) a^(5/2) b^(-1/2) = 1
        (15.0 * b.sqrt() / 16.0).powf(0.4)
    } else {
        // bracket the increasing map a -> mass(a) and bisect
        let mass = |a: f64| -> f64 {
            let r = (a / b).sqrt();
            let q = 1.0 / (alpha - 0.5);
            quad_with_breakpoints(
                &|x| {
                    let base = a - b * x * x;
                    if base <= 0.0 {
                        0.0
                    } else {
                        base.powf(q)
                    }
                },
                -r,
                r,
                &[],
                1e-13,
            )
        };
        let mut lo = 1.0f64;
        while mass(lo) > 1.0 {
            lo *= 0.5;
            if lo < 1e-100 {
                return Err(EquilibriumError::Normalization { lo, hi: 1.0 });
            }
        }
        let mut hi = lo;
        while mass(hi) < 1.0 {
            hi *= 2.0;
            if hi > 1e100 {
                return Err(EquilibriumError::Normalization { lo, hi });
            }
        }
        brent_root(&|a| mass(a) - 1.0, lo, hi, 1e-15, 1e-13)
            .map_err(|_| EquilibriumError::Normalization { lo, hi })?
    };
    let r = (a / b).sqrt();
    Ok(EquilibriumProfile {
        alpha,
        lambda: p.lambda(),
        confinement: lam,
        b_coeff: b,
        a_coeff: a,
        support_radius: Some(r),
        effective_radius: r,
    })
}

/// Positions of the profile's mass quantiles at the grid nodes, with the two
/// outermost nodes pulled inside the support by half a cell mass each so all
/// cell densities stay finite.
pub fn profile_quantile_state(
    profile: &EquilibriumProfile,
    grid: &Arc<MassGrid>,
) -> Result<LagrangianState, EquilibriumError> {
    if (grid.total_mass() - 1.0).abs() > 1e-12 {
        return Err(EquilibriumError::NonUnitMass(grid.total_mass()));
    }
    let k = grid.num_cells();
    let cells = grid.cell_widths();
    let r = profile.effective_radius;
    // cumulative mass targets, with half-cell pull-in at both ends; a single
    // cell leaves no room for half pull-ins, so use quarters there
    let pull = if k == 1 { 0.25 } else { 0.5 };
    let mut targets = Vec::with_capacity(k + 1);
    targets.push(pull * cells[0]);
    for i in 1..k {
        targets.push(grid.xi(i));
    }
    targets.push(1.0 - pull * cells[k - 1]);

    let mut x = Vec::with_capacity(k + 1);
    let mut prev = -r;
    let mut cum = 0.0;
    for &m in &targets {
        let need = m - cum;
        let g = |q: f64| quad_with_breakpoints(&|t| profile.eval(t), prev, q, &[0.0], 1e-14) - need;
        let q = brent_root(&g, prev, r, 1e-15 * r.max(1.0), 1e-13)
            .map_err(|_| EquilibriumError::Normalization { lo: prev, hi: r })?;
        x.push(q);
        prev = q;
        cum = m;
    }
    LagrangianState::new(grid.clone(), x)
        .map_err(|_| EquilibriumError::Normalization { lo: -r, hi: r })
}

/// The shared discrete minimizer of the entropy and information functionals,
/// together with the minimal values.
#[derive(Debug, Clone)]
pub struct DiscreteMinimum {
    pub state: LagrangianState,
    pub h_min: f64,
    pub f_min: f64,
    /// Metric norm of the entropy gradient at the minimizer.
    pub grad_h_norm: f64,
    /// Metric norm of the information gradient at the minimizer.
    pub grad_f_norm: f64,
}

impl DiscreteMinimum {
    pub fn gap_reference(&self) -> GapReference {
        GapReference {
            h_min: self.h_min,
            f_min: self.f_min,
            density: self.state.density(),
        }
    }
}

/// Newton solve of `grad H = 0` from the profile-quantile initial guess.
pub fn discrete_minimizer(
    p: &ModelParams,
    grid: &Arc<MassGrid>,
) -> Result<DiscreteMinimum, EquilibriumError> {
    if p.lambda() == 0.0 {
        return Err(EquilibriumError::NoEquilibrium);
    }
    let profile = reference_profile(p)?;
    let guess = profile_quantile_state(&profile, grid)?;
    let mut attempt = guess;
    let mut last_err = None;
    for retry in 0..3 {
        match minimize_entropy(attempt.clone(), p) {
            Ok(min) => return Ok(min),
            Err(e) => {
                last_err = Some(e);
                // contract toward the center of mass and retry
                let x = attempt.positions();
                let c = x.iter().sum::<f64>() / x.len() as f64;
                let shrink = 0.9 - 0.1 * retry as f64;
                let xs: Vec<f64> = x.iter().map(|xi| c + shrink * (xi - c)).collect();
                attempt = LagrangianState::new(grid.clone(), xs).expect("contraction is monotone");
            }
        }
    }
    Err(last_err.expect("retries exhausted"))
}

fn minimize_entropy(
    start: LagrangianState,
    p: &ModelParams,
) -> Result<DiscreteMinimum, EquilibriumError> {
    let grid = start.grid().clone();
    let tol = 1e-11;
    let mut s = start;
    let mut grad = entropy_gradient(&s, p);
    let mut res = delta_norm(&grad.metric, &grid).expect("length");
    let mut merit = entropy(&s, p).value();
    let mono = 1e-14 * s.span();
    let mut iters = 0usize;
    let mut polish = 0u32;
    loop {
        if res <= tol {
            // a few extra steps sharpen the residual toward the noise floor
            if polish >= 3 {
                break;
            }
            polish += 1;
        }
        if iters >= 80 {
            return Err(EquilibriumError::NewtonFailed {
                residual: res,
                iters,
            });
        }
        let hess = entropy_hessian(&s, p);
        let rhs: Vec<f64> = grad.partial.iter().map(|g| -g).collect();
        let dir = match hess.solve(&rhs) {
            Some(d) => d,
            None => {
                return Err(EquilibriumError::NewtonFailed {
                    residual: res,
                    iters,
                })
            }
        };
        let descent: f64 = grad.partial.iter().zip(&dir).map(|(g, d)| g * d).sum();
        let mut damping = 1.0f64;
        let accepted = loop {
            let trial: Vec<f64> = s
                .positions()
                .iter()
                .zip(&dir)
                .map(|(xi, di)| xi + damping * di)
                .collect();
            if trial.windows(2).all(|w| w[1] - w[0] > mono) {
                let cand = LagrangianState::new(grid.clone(), trial).expect("monotone checked");
                let value = entropy(&cand, p).value();
                if value <= merit + 1e-4 * damping * descent.min(0.0) {
                    break Some((cand, value));
                }
                let cgrad = entropy_gradient(&cand, p);
                let cres = delta_norm(&cgrad.metric, &grid).expect("length");
                if cres <= (1.0 - 0.5 * damping) * res
                    && value <= merit + 1e-12 * merit.abs().max(1.0)
                {
                    break Some((cand, value));
                }
            }
            damping *= 0.5;
            if damping < (2.0f64).powi(-30) {
                break None;
            }
        };
        let (cand, value) = match accepted {
            Some(a) => a,
            None => {
                if res <= tol {
                    break; // stuck at the floor but already converged
                }
                return Err(EquilibriumError::NewtonFailed {
                    residual: res,
                    iters,
                });
            }
        };
        let prev_res = res;
        s = cand;
        merit = value;
        grad = entropy_gradient(&s, p);
        res = delta_norm(&grad.metric, &grid).expect("length");
        iters += 1;
        if res <= tol && res >= 0.5 * prev_res {
            break; // no further progress at the noise floor
        }
    }
    if res > tol {
        return Err(EquilibriumError::NewtonFailed {
            residual: res,
            iters,
        });
    }
    let gf = information_gradient(&s, p);
    let grad_f_norm = delta_norm(&gf.metric, &grid).expect("length");
    Ok(DiscreteMinimum {
        h_min: entropy(&s, p).value(),
        f_min: information(&s, p).value(),
        grad_h_norm: res,
        grad_f_norm,
        state: s,
    })
}

/// L^p distance between a carried density and a reference profile, by
/// adaptive quadrature over the union of supports split at all breakpoints.
pub fn lp_error(u: &PiecewiseConstantDensity, profile: &EquilibriumProfile, p_exp: f64) -> f64 {
    assert!(p_exp >= 1.0);
    let (ua, ub) = u.support();
    let r = profile.effective_radius;
    let lo = ua.min(-r);
    let hi = ub.max(r);
    let mut breaks = u.breakpoints().to_vec();
    breaks.push(-r);
    breaks.push(r);
    breaks.push(0.0);
    let total = quad_with_breakpoints(
        &|x| (u.eval(x) - profile.eval(x)).abs().powf(p_exp),
        lo,
        hi,
        &breaks,
        1e-13,
    );
    total.powf(1.0 / p_exp)
}

/// L^p distance to the dilation `d_r` of a reference profile, i.e. to
/// `x -> profile(x / r) / r`.
pub fn lp_error_dilated(
    u: &PiecewiseConstantDensity,
    profile: &EquilibriumProfile,
    p_exp: f64,
    r: f64,
) -> f64 {
    assert!(p_exp >= 1.0 && r > 0.0);
    let (ua, ub) = u.support();
    let rr = profile.effective_radius * r;
    let lo = ua.min(-rr);
    let hi = ub.max(rr);
    let mut breaks = u.breakpoints().to_vec();
    breaks.push(-rr);
    breaks.push(rr);
    breaks.push(0.0);
    let total = quad_with_breakpoints(
        &|x| (u.eval(x) - profile.eval(x / r) / r).abs().powf(p_exp),
        lo,
        hi,
        &breaks,
        1e-13,
    );
    total.powf(1.0 / p_exp)
}

/// L^p distance between an affine interpolant and a reference profile.
pub fn lp_error_interpolant(
    interp: &AffineInterpolant,
    profile: &EquilibriumProfile,
    p_exp: f64,
) -> f64 {
    assert!(p_exp >= 1.0);
    let (ia, ib) = interp.support();
    let r = profile.effective_radius;
    let lo = ia.min(-r);
    let hi = ib.max(r);
    let (xs, _) = interp.nodes();
    let mut breaks = xs.to_vec();
    breaks.push(-r);
    breaks.push(r);
    breaks.push(0.0);
    let total = quad_with_breakpoints(
        &|x| (interp.eval(x) - profile.eval(x)).abs().powf(p_exp),
        lo,
        hi,
        &breaks,
        1e-13,
    );
    total.powf(1.0 / p_exp)
}

/// Uniform distance between an affine interpolant and a reference profile by
/// dense sampling plus evaluation at every breakpoint.
pub fn uniform_error(interp: &AffineInterpolant, profile: &EquilibriumProfile) -> f64 {
    let (ia, ib) = interp.support();
    let r = profile.effective_radius;
    let lo = ia.min(-r);
    let hi = ib.max(r);
    let mut worst = 0.0f64;
    let mut check = |x: f64| {
        let d = (interp.eval(x) - profile.eval(x)).abs();
        if d > worst {
            worst = d;
        }
    };
    let (xs, _) = interp.nodes();
    for &x in xs {
        check(x);
    }
    check(-r);
    check(r);
    let n = 4096;
    for i in 0..=n {
        check(lo + (hi - lo) * i as f64 / n as f64);
    }
    worst
}
