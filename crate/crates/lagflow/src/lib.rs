// negated float comparisons are NaN-rejecting guards; index loops follow
// the banded-matrix formulas
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

//! One-dimensional Lagrangian solver for the family of fourth-order equations
//!
//! ```text
//!     du/dt = -(u (u^(a-1) u_xx^a)_x)_x + lambda (x u)_x,   a in [1/2, 1], lambda >= 0,
//! ```
//!
//! discretized as a gradient flow of a discrete information functional on the
//! cone of monotone position vectors. Mass cells carry fixed mass packets and
//! the grid points move; one time step is an implicit Euler (minimizing
//! movement) step solved by a damped Newton iteration.
//!
//! Modules:
//! - [`mass_mesh`]: mass-space grids, monotone position vectors, and their
//!   piecewise-constant / piecewise-affine densities,
//! - [`functionals`]: discrete entropy and information functionals, their
//!   gradients and Hessians, and the structural identities relating them,
//! - [`stepper`]: the implicit Euler / minimizing-movement time stepper,
//! - [`equilibria`]: Barenblatt and Gaussian reference profiles, discrete
//!   entropy minimizers, and error norms,
//! - [`rescaling`]: dilation, scaling identities, and the bookkeeping for
//!   self-similar solutions of the unconfined equation,
//! - [`numerics`]: small self-contained numerical kernels (quadrature, root
//!   finding, banded elimination, slope fits).

pub mod equilibria;
pub mod functionals;
pub mod mass_mesh;
pub mod numerics;
pub mod rescaling;
pub mod stepper;

pub use equilibria::{DiscreteMinimum, EquilibriumProfile};
pub use functionals::{FunctionalValue, ModelParams};
pub use mass_mesh::{AffineInterpolant, LagrangianState, MassGrid, PiecewiseConstantDensity};
pub use stepper::{StepConfig, StepReport, Trajectory};
