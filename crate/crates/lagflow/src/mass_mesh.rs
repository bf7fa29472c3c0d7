//! Mass-space grids, monotone Lagrangian position vectors, and the
//! piecewise-constant / piecewise-affine densities they carry.
//!
//! The mass interval `[0, M]` is split into `K` cells; cell `kappa` holds the
//! fixed mass packet `delta_kappa`. A state is a strictly increasing vector of
//! `K + 1` grid-point positions; the density on the interval between two
//! consecutive points is the cell mass divided by the interval length.

use crate::numerics::{brent_root, quad_with_breakpoints};
use std::sync::Arc;
use thiserror::Error;

/// Absolute tolerance on the mass of a single cell in the quantile construction.
pub const QUANTILE_MASS_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum MeshError {
    #[error("grid needs at least one cell")]
    EmptyGrid,
    #[error("total mass must be positive, got {0}")]
    NonPositiveMass(f64),
    #[error("mass nodes must increase strictly from 0 to the total mass")]
    BadMassNodes,
    #[error("positions must be strictly increasing (violated at index {0})")]
    NonMonotone(usize),
    #[error("expected {expected} positions, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("initial density must be positive on its support")]
    NonPositiveDensity,
    #[error("declared mass {declared} inconsistent with measured mass {measured}")]
    MassMismatch { declared: f64, measured: f64 },
    #[error("quantile bracketing failed for cell {cell} (measured cell mass defect {defect})")]
    QuantileBracketing { cell: usize, defect: f64 },
    #[error("mass coordinate {0} outside [0, M]")]
    MassOutOfRange(f64),
    #[error("states live on different grids")]
    GridMismatch,
    #[error("dilation factor must be positive, got {0}")]
    BadDilation(f64),
}

/// How the mass space is decomposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    /// Equidistant cells; inner products weight every node with the cell width.
    Uniform,
    /// Arbitrary strictly increasing mass nodes; node weights are the averaged
    /// adjacent cell widths, with half weights at the two boundary nodes.
    NonUniform,
}

/// Decomposition of the mass space `[0, M]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MassGrid {
    kind: GridKind,
    total_mass: f64,
    /// Mass nodes `xi_0 = 0 < xi_1 < ... < xi_K = M`.
    xi: Vec<f64>,
    /// Cell masses `delta_kappa = xi_{k} - xi_{k-1}`, length `K`.
    cell_widths: Vec<f64>,
    /// Node weights `delta_k`, length `K + 1`.
    node_weights: Vec<f64>,
}

impl MassGrid {
    /// Equidistant decomposition of `[0, total_mass]` into `k` cells.
    pub fn uniform(total_mass: f64, k: usize) -> Result<Arc<Self>, MeshError> {
        if k == 0 {
            return Err(MeshError::EmptyGrid);
        }
        if !(total_mass > 0.0) {
            return Err(MeshError::NonPositiveMass(total_mass));
        }
        let delta = total_mass / k as f64;
        let xi = (0..=k)
            .map(|i| if i == k { total_mass } else { i as f64 * delta })
            .collect();
        Ok(Arc::new(MassGrid {
            kind: GridKind::Uniform,
            total_mass,
            xi,
            cell_widths: vec![delta; k],
            // every node carries the full cell width
            node_weights: vec![delta; k + 1],
        }))
    }

    /// Decomposition with prescribed mass nodes `xi_0 = 0 < ... < xi_K`.
    ///
    /// Node weights are `(xi_{k+1} - xi_{k-1}) / 2` with vanishing exterior
    /// half-cells, so the two boundary nodes carry half a cell width.
    pub fn non_uniform(xi: Vec<f64>) -> Result<Arc<Self>, MeshError> {
        if xi.len() < 2 {
            return Err(MeshError::EmptyGrid);
        }
        let k = xi.len() - 1;
        let total_mass = xi[k];
        if xi[0] != 0.0 || !(total_mass > 0.0) {
            return Err(MeshError::BadMassNodes);
        }
        for w in xi.windows(2) {
            if !(w[1] > w[0]) {
                return Err(MeshError::BadMassNodes);
            }
        }
        let cell_widths: Vec<f64> = xi.windows(2).map(|w| w[1] - w[0]).collect();
        let mut node_weights = Vec::with_capacity(k + 1);
        node_weights.push(cell_widths[0] / 2.0);
        for i in 1..k {
            node_weights.push((xi[i + 1] - xi[i - 1]) / 2.0);
        }
        node_weights.push(cell_widths[k - 1] / 2.0);
        Ok(Arc::new(MassGrid {
            kind: GridKind::NonUniform,
            total_mass,
            xi,
            cell_widths,
            node_weights,
        }))
    }

    /// Decomposition with cell masses shrinking toward both ends of the mass
    /// interval like `min(s, 1-s)^exponent`; resolves the support edges of
    /// compactly supported densities, where equidistant cells are coarse.
    pub fn graded(total_mass: f64, k: usize, exponent: f64) -> Result<Arc<Self>, MeshError> {
        if k == 0 {
            return Err(MeshError::EmptyGrid);
        }
        if !(total_mass > 0.0) {
            return Err(MeshError::NonPositiveMass(total_mass));
        }
        if !(exponent >= 0.0) {
            return Err(MeshError::BadMassNodes);
        }
        let kf = k as f64;
        let weight = |s: f64| (s.min(1.0 - s) + 0.5 / kf).powf(exponent);
        let w: Vec<f64> = (0..k).map(|i| weight((i as f64 + 0.5) / kf)).collect();
        let total: f64 = w.iter().sum();
        let mut xi = Vec::with_capacity(k + 1);
        xi.push(0.0);
        let mut acc = 0.0;
        for wi in &w {
            acc += wi / total * total_mass;
            xi.push(acc);
        }
        xi[k] = total_mass;
        Self::non_uniform(xi)
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    /// Number of mass cells `K`.
    pub fn num_cells(&self) -> usize {
        self.cell_widths.len()
    }

    /// Number of grid points `K + 1`.
    pub fn num_nodes(&self) -> usize {
        self.cell_widths.len() + 1
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// Mass node `xi_k`.
    pub fn xi(&self, k: usize) -> f64 {
        self.xi[k]
    }

    /// Cell masses `delta_kappa`, length `K`.
    pub fn cell_widths(&self) -> &[f64] {
        &self.cell_widths
    }

    /// Node weights `delta_k`, length `K + 1`.
    pub fn node_weights(&self) -> &[f64] {
        &self.node_weights
    }

    /// Cell width of the uniform grid, if uniform.
    pub fn delta(&self) -> Option<f64> {
        match self.kind {
            GridKind::Uniform => Some(self.cell_widths[0]),
            GridKind::NonUniform => None,
        }
    }

    pub fn same_grid(a: &Arc<MassGrid>, b: &Arc<MassGrid>) -> bool {
        Arc::ptr_eq(a, b) || **a == **b
    }
}

/// Initial density data: an evaluator with declared compact support and mass.
pub trait Density {
    /// Support interval `[a, b]`.
    fn support(&self) -> (f64, f64);
    /// Total mass over the support.
    fn mass(&self) -> f64;
    fn eval(&self, x: f64) -> f64;
    /// Points inside the support where the density is not smooth; used to
    /// split quadrature panels. Empty by default.
    fn kinks(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// Strictly monotone vector of grid-point positions over a [`MassGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianState {
    grid: Arc<MassGrid>,
    x: Vec<f64>,
}

impl LagrangianState {
    pub fn new(grid: Arc<MassGrid>, x: Vec<f64>) -> Result<Self, MeshError> {
        if x.len() != grid.num_nodes() {
            return Err(MeshError::LengthMismatch {
                expected: grid.num_nodes(),
                got: x.len(),
            });
        }
        for (i, w) in x.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(MeshError::NonMonotone(i));
            }
        }
        Ok(LagrangianState { grid, x })
    }

    pub fn grid(&self) -> &Arc<MassGrid> {
        &self.grid
    }

    pub fn positions(&self) -> &[f64] {
        &self.x
    }

    /// Support width `x_K - x_0`.
    pub fn span(&self) -> f64 {
        self.x[self.x.len() - 1] - self.x[0]
    }

    /// Cell densities `z_kappa = delta_kappa / (x_{k} - x_{k-1})`, length `K`.
    pub fn densities(&self) -> Vec<f64> {
        self.grid
            .cell_widths()
            .iter()
            .zip(self.x.windows(2))
            .map(|(d, w)| d / (w[1] - w[0]))
            .collect()
    }

    /// The piecewise-affine monotone map `X : [0, M] -> R` with `X(xi_k) = x_k`.
    pub fn position_at_mass(&self, xi: f64) -> Result<f64, MeshError> {
        let m = self.grid.total_mass();
        if !(0.0..=m).contains(&xi) {
            return Err(MeshError::MassOutOfRange(xi));
        }
        let nodes = &self.grid.xi;
        // nodes are sorted; find the cell containing xi
        let k = match nodes.binary_search_by(|v| v.partial_cmp(&xi).unwrap()) {
            Ok(i) => return Ok(self.x[i]),
            Err(i) => i - 1, // xi in (nodes[i-1], nodes[i])
        };
        let t = (xi - nodes[k]) / (nodes[k + 1] - nodes[k]);
        Ok(self.x[k] + t * (self.x[k + 1] - self.x[k]))
    }

    /// The piecewise-constant density carried by this state.
    pub fn density(&self) -> PiecewiseConstantDensity {
        PiecewiseConstantDensity {
            breakpoints: self.x.clone(),
            values: self.densities(),
            mass: self.grid.total_mass(),
        }
    }

    /// Continuous piecewise-affine interpolant of the cell densities.
    ///
    /// Nodes sit at the cell midpoints (value: the cell density) and at the
    /// grid points (value: average of the adjacent cell densities, with zero
    /// exterior cells at the two boundary points).
    pub fn affine_interpolant(&self) -> AffineInterpolant {
        let z = self.densities();
        let k = z.len();
        let mut xs = Vec::with_capacity(2 * k + 1);
        let mut vals = Vec::with_capacity(2 * k + 1);
        xs.push(self.x[0]);
        vals.push(z[0] / 2.0);
        for kappa in 0..k {
            xs.push(0.5 * (self.x[kappa] + self.x[kappa + 1]));
            vals.push(z[kappa]);
            if kappa + 1 < k {
                xs.push(self.x[kappa + 1]);
                vals.push(0.5 * (z[kappa] + z[kappa + 1]));
            }
        }
        xs.push(self.x[k]);
        vals.push(z[k - 1] / 2.0);
        AffineInterpolant { xs, vals }
    }
}

/// Quantile construction of the initial state: positions are chosen so every
/// mass cell of the grid holds exactly its mass packet of `u0`.
pub fn build_initial_state(
    u0: &dyn Density,
    grid: &Arc<MassGrid>,
) -> Result<LagrangianState, MeshError> {
    let (a, b) = u0.support();
    if !(b > a) {
        return Err(MeshError::NonPositiveDensity);
    }
    let kinks = u0.kinks();
    let declared = u0.mass();
    if declared != grid.total_mass() {
        return Err(MeshError::MassMismatch {
            declared,
            measured: grid.total_mass(),
        });
    }
    let f = |x: f64| u0.eval(x);
    let measured = quad_with_breakpoints(&f, a, b, &kinks, 1e-13);
    if (measured - declared).abs() > 1e-9 * declared.max(1.0) {
        return Err(MeshError::MassMismatch { declared, measured });
    }

    let kk = grid.num_cells();
    let mut x = Vec::with_capacity(kk + 1);
    x.push(a);
    for k in 1..kk {
        let target = grid.cell_widths()[k - 1];
        let left = x[k - 1];
        let g = |p: f64| quad_with_breakpoints(&f, left, p, &kinks, 1e-14) - target;
        let root =
            brent_root(&g, left, b, 1e-15 * (b - a).max(1.0), QUANTILE_MASS_TOL).map_err(|e| {
                MeshError::QuantileBracketing {
                    cell: k,
                    defect: e.fb,
                }
            })?;
        if !(root > left) {
            return Err(MeshError::QuantileBracketing {
                cell: k,
                defect: g(left),
            });
        }
        x.push(root);
    }
    x.push(b);
    LagrangianState::new(grid.clone(), x)
}

/// Nonnegative piecewise-constant density with compact support.
///
/// The value on `(breakpoints[k], breakpoints[k+1]]` is `values[k]`; the
/// function vanishes at and outside the support, with breakpoint evaluation
/// returning the left cell's value.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseConstantDensity {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
    mass: f64,
}

impl PiecewiseConstantDensity {
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn declared_mass(&self) -> f64 {
        self.mass
    }

    pub fn support(&self) -> (f64, f64) {
        (
            self.breakpoints[0],
            self.breakpoints[self.breakpoints.len() - 1],
        )
    }

    /// Integral of the density, summed cell by cell.
    pub fn integral(&self) -> f64 {
        self.values
            .iter()
            .zip(self.breakpoints.windows(2))
            .map(|(z, w)| z * (w[1] - w[0]))
            .sum()
    }

    /// Evaluate at `x`; half-open cells `(left, right]`, zero outside.
    pub fn eval(&self, x: f64) -> f64 {
        let bp = &self.breakpoints;
        if x <= bp[0] || x > bp[bp.len() - 1] {
            return 0.0;
        }
        let k = match bp.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => i - 1, // breakpoint: left cell
            Err(i) => i - 1,
        };
        self.values[k]
    }

    /// Exact L1 distance to another piecewise-constant density.
    pub fn l1_distance(&self, other: &PiecewiseConstantDensity) -> f64 {
        let mut pts: Vec<f64> = self
            .breakpoints
            .iter()
            .chain(other.breakpoints.iter())
            .copied()
            .collect();
        pts.sort_by(|p, q| p.partial_cmp(q).unwrap());
        pts.dedup();
        let mut total = 0.0;
        for w in pts.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            total += (self.eval(mid) - other.eval(mid)).abs() * (w[1] - w[0]);
        }
        total
    }
}

/// Continuous piecewise-affine function with compact support.
#[derive(Debug, Clone)]
pub struct AffineInterpolant {
    xs: Vec<f64>,
    vals: Vec<f64>,
}

impl AffineInterpolant {
    pub fn nodes(&self) -> (&[f64], &[f64]) {
        (&self.xs, &self.vals)
    }

    pub fn support(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }

    /// Evaluate at `x`; zero strictly outside the support.
    pub fn eval(&self, x: f64) -> f64 {
        let xs = &self.xs;
        let n = xs.len();
        if x < xs[0] || x > xs[n - 1] {
            return 0.0;
        }
        let i = match xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => return self.vals[i],
            Err(i) => i - 1,
        };
        let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
        self.vals[i] + t * (self.vals[i + 1] - self.vals[i])
    }

    /// Squared H1 seminorm, i.e. the integral of the squared slope.
    pub fn h1_seminorm_sq(&self) -> f64 {
        self.xs
            .windows(2)
            .zip(self.vals.windows(2))
            .map(|(xw, vw)| {
                let s = (vw[1] - vw[0]) / (xw[1] - xw[0]);
                s * s * (xw[1] - xw[0])
            })
            .sum()
    }
}

/// Uniform density of the given mass on `[a, b]`.
pub struct UniformDensity {
    pub a: f64,
    pub b: f64,
    pub mass: f64,
}

impl Density for UniformDensity {
    fn support(&self) -> (f64, f64) {
        (self.a, self.b)
    }
    fn mass(&self) -> f64 {
        self.mass
    }
    fn eval(&self, _x: f64) -> f64 {
        self.mass / (self.b - self.a)
    }
}

/// The lopsided sine hump pair on `[-pi, pi]`:
/// `0.25 |sin x| (0.5 + [x > 0])`, of unit mass.
pub struct LopsidedSine;

impl Density for LopsidedSine {
    fn support(&self) -> (f64, f64) {
        (-std::f64::consts::PI, std::f64::consts::PI)
    }
    fn mass(&self) -> f64 {
        1.0
    }
    fn eval(&self, x: f64) -> f64 {
        let bump = if x > 0.0 { 1.5 } else { 0.5 };
        0.25 * x.sin().abs() * bump
    }
    fn kinks(&self) -> Vec<f64> {
        vec![0.0]
    }
}

/// Density given by sampled points, interpolated piecewise linearly.
pub struct TabulatedDensity {
    xs: Vec<f64>,
    us: Vec<f64>,
    mass: f64,
}

impl TabulatedDensity {
    /// Build from `(x, u)` samples; `x` strictly increasing, `u >= 0` with
    /// positive total mass. The mass is the exact trapezoid integral.
    pub fn new(xs: Vec<f64>, us: Vec<f64>) -> Result<Self, MeshError> {
        if xs.len() != us.len() || xs.len() < 2 {
            return Err(MeshError::LengthMismatch {
                expected: xs.len().max(2),
                got: us.len(),
            });
        }
        for w in xs.windows(2) {
            if !(w[1] > w[0]) {
                return Err(MeshError::BadMassNodes);
            }
        }
        if us.iter().any(|&u| u < 0.0) {
            return Err(MeshError::NonPositiveDensity);
        }
        let mass: f64 = xs
            .windows(2)
            .zip(us.windows(2))
            .map(|(xw, uw)| 0.5 * (uw[0] + uw[1]) * (xw[1] - xw[0]))
            .sum();
        if !(mass > 0.0) {
            return Err(MeshError::NonPositiveDensity);
        }
        Ok(TabulatedDensity { xs, us, mass })
    }
}

impl Density for TabulatedDensity {
    fn support(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }
    fn mass(&self) -> f64 {
        self.mass
    }
    fn eval(&self, x: f64) -> f64 {
        let xs = &self.xs;
        let n = xs.len();
        if x < xs[0] || x > xs[n - 1] {
            return 0.0;
        }
        let i = match xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => return self.us[i],
            Err(i) => i - 1,
        };
        let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
        self.us[i] + t * (self.us[i + 1] - self.us[i])
    }
    fn kinks(&self) -> Vec<f64> {
        self.xs[1..self.xs.len() - 1].to_vec()
    }
}

/// Density defined by a closure with declared support and mass.
pub struct FnDensity<F: Fn(f64) -> f64> {
    pub f: F,
    pub support: (f64, f64),
    pub mass: f64,
    pub kinks: Vec<f64>,
}

impl<F: Fn(f64) -> f64> Density for FnDensity<F> {
    fn support(&self) -> (f64, f64) {
        self.support
    }
    fn mass(&self) -> f64 {
        self.mass
    }
    fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }
    fn kinks(&self) -> Vec<f64> {
        self.kinks.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::adaptive_simpson as simpson;
    use proptest::prelude::*;

    fn state(grid: &Arc<MassGrid>, x: &[f64]) -> LagrangianState {
        LagrangianState::new(grid.clone(), x.to_vec()).unwrap()
    }

    #[test]
    fn uniform_grid_weights() {
        let g = MassGrid::uniform(1.0, 4).unwrap();
        assert_eq!(g.num_cells(), 4);
        assert_eq!(g.cell_widths(), &[0.25; 4]);
        assert_eq!(g.node_weights(), &[0.25; 5]);
        let total: f64 = g.cell_widths().iter().sum();
        assert!((total - 1.0).abs() <= 4.0 * f64::EPSILON);
    }

    #[test]
    fn non_uniform_grid_weights() {
        // xi = (0, 0.1, 0.4, 1.0)
        let g = MassGrid::non_uniform(vec![0.0, 0.1, 0.4, 1.0]).unwrap();
        assert!((g.cell_widths()[0] - 0.1).abs() < 1e-15);
        assert!((g.cell_widths()[1] - 0.3).abs() < 1e-15);
        assert!((g.cell_widths()[2] - 0.6).abs() < 1e-15);
        // boundary nodes carry half a cell, interior the average of both
        assert_eq!(g.node_weights()[0], 0.05);
        assert!((g.node_weights()[1] - 0.2).abs() < 1e-15);
        assert!((g.node_weights()[2] - 0.45).abs() < 1e-15);
        assert_eq!(g.node_weights()[3], 0.3);
        let total: f64 = g.node_weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(MassGrid::uniform(0.0, 3).is_err());
        assert!(MassGrid::uniform(1.0, 0).is_err());
        assert!(MassGrid::non_uniform(vec![0.0, 0.5, 0.5, 1.0]).is_err());
        assert!(MassGrid::non_uniform(vec![0.1, 0.5, 1.0]).is_err());
    }

    #[test]
    fn graded_grid_refines_edges() {
        let g = MassGrid::graded(1.0, 16, 0.875).unwrap();
        assert_eq!(g.num_cells(), 16);
        let total: f64 = g.cell_widths().iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
        let w = g.cell_widths();
        assert!(w[0] < w[8] && w[15] < w[8]);
        // symmetric grading
        assert!((w[0] - w[15]).abs() < 1e-15);
        // exponent zero recovers equal cells
        let flat = MassGrid::graded(1.0, 4, 0.0).unwrap();
        for c in flat.cell_widths() {
            assert!((c - 0.25).abs() < 1e-15);
        }
        assert!(MassGrid::graded(1.0, 4, -1.0).is_err());
    }

    #[test]
    fn values_are_shareable_across_threads() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<MassGrid>();
        assert_send_sync::<LagrangianState>();
        assert_send_sync::<PiecewiseConstantDensity>();
        assert_send_sync::<AffineInterpolant>();
    }

    #[test]
    fn rejects_non_monotone_state() {
        let g = MassGrid::uniform(1.0, 2).unwrap();
        let e = LagrangianState::new(g.clone(), vec![0.0, 0.5, 0.5]).unwrap_err();
        assert_eq!(e, MeshError::NonMonotone(1));
        assert!(LagrangianState::new(g, vec![0.0, 0.5]).is_err());
    }

    #[test]
    fn initial_state_uniform_density() {
        // u0 = 1 on [0,1], K = 4 -> quartile positions
        let g = MassGrid::uniform(1.0, 4).unwrap();
        let u0 = UniformDensity {
            a: 0.0,
            b: 1.0,
            mass: 1.0,
        };
        let s = build_initial_state(&u0, &g).unwrap();
        let expect = [0.0, 0.25, 0.5, 0.75, 1.0];
        for (xi, ei) in s.positions().iter().zip(expect) {
            assert!((xi - ei).abs() < 1e-12);
        }
    }

    #[test]
    fn initial_state_linear_density() {
        // u0 = 2x on [0,1]: CDF x^2, median quantile 1/sqrt(2)
        let g = MassGrid::uniform(1.0, 2).unwrap();
        let u0 = FnDensity {
            f: |x: f64| 2.0 * x,
            support: (0.0, 1.0),
            mass: 1.0,
            kinks: vec![],
        };
        let s = build_initial_state(&u0, &g).unwrap();
        assert!((s.positions()[1] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-11);
        assert_eq!(s.positions()[0], 0.0);
        assert_eq!(s.positions()[2], 1.0);
    }

    #[test]
    fn initial_state_lopsided_sine_cell_masses() {
        let g = MassGrid::uniform(1.0, 200).unwrap();
        let u0 = LopsidedSine;
        let s = build_initial_state(&u0, &g).unwrap();
        let delta = g.delta().unwrap();
        // measured mass per cell within quadrature tolerance
        for w in s.positions().windows(2) {
            let m = simpson(&|x| u0.eval(x), w[0], w[1], 1e-14);
            assert!(
                (m - delta).abs() < 1e-10,
                "cell mass {m} vs {delta} on [{}, {}]",
                w[0],
                w[1]
            );
        }
    }

    #[test]
    fn initial_state_rejects_wrong_mass() {
        let g = MassGrid::uniform(1.0, 4).unwrap();
        let u0 = FnDensity {
            f: |_| 1.0,
            support: (0.0, 2.0), // integrates to 2, declares 1
            mass: 1.0,
            kinks: vec![],
        };
        match build_initial_state(&u0, &g) {
            Err(MeshError::MassMismatch { measured, .. }) => {
                assert!((measured - 2.0).abs() < 1e-9)
            }
            other => panic!("expected mass mismatch, got {other:?}"),
        }
    }

    #[test]
    fn density_identity_and_formula() {
        let g = MassGrid::uniform(1.0, 2).unwrap();
        let s = state(&g, &[0.0, 0.5, 1.0]);
        let u = s.density();
        assert_eq!(u.values(), &[1.0, 1.0]);
        assert_eq!(u.eval(0.3), 1.0);
        assert_eq!(u.eval(0.0), 0.0); // left end excluded
        assert_eq!(u.eval(1.0), 1.0); // right end included

        let s2 = state(&g, &[0.0, 0.25, 1.0]);
        let u2 = s2.density();
        assert!((u2.values()[0] - 2.0).abs() < 1e-15);
        assert!((u2.values()[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn density_dilation_halves() {
        let g = MassGrid::uniform(1.0, 2).unwrap();
        let s = state(&g, &[0.0, 1.0, 2.0]); // 2 * (0, 0.5, 1)
        let u = s.density();
        assert_eq!(u.values(), &[0.5, 0.5]);
    }

    #[test]
    fn lagrangian_map_nodes_and_scale() {
        let g = MassGrid::uniform(1.0, 4).unwrap();
        let s = state(&g, &[0.0, 0.25, 0.5, 0.75, 1.0]);
        for k in 0..=4 {
            assert_eq!(s.position_at_mass(g.xi(k)).unwrap(), s.positions()[k]);
        }
        // uniform state on [0,1]: X(xi) = xi / M
        for xi in [0.05, 0.3, 0.77] {
            assert!((s.position_at_mass(xi).unwrap() - xi).abs() < 1e-15);
        }
        assert!(s.position_at_mass(-0.1).is_err());
        assert!(s.position_at_mass(1.1).is_err());
    }

    #[test]
    fn affine_interpolant_nodes() {
        // u = 1 on [0,1], K = 2: midpoint values 1, boundary node value 0.5
        let g = MassGrid::uniform(1.0, 2).unwrap();
        let s = state(&g, &[0.0, 0.5, 1.0]);
        let f = s.affine_interpolant();
        assert_eq!(f.eval(0.25), 1.0);
        assert_eq!(f.eval(0.75), 1.0);
        assert_eq!(f.eval(0.5), 1.0);
        assert_eq!(f.eval(0.0), 0.5);
        assert_eq!(f.eval(1.0), 0.5);
        assert_eq!(f.eval(-0.01), 0.0);
        assert_eq!(f.eval(1.01), 0.0);
    }

    #[test]
    fn affine_interpolant_h1_matches_quadrature() {
        let g = MassGrid::uniform(1.0, 5).unwrap();
        let s = state(&g, &[-0.9, -0.3, 0.05, 0.2, 0.8, 1.4]);
        let f = s.affine_interpolant();
        // closed form: sum over nodes of delta * avg(z) * (dz/delta)^2
        let z = s.densities();
        let delta = g.delta().unwrap();
        let mut closed = 0.0;
        for k in 0..=5 {
            let zl = if k == 0 { 0.0 } else { z[k - 1] };
            let zr = if k == 5 { 0.0 } else { z[k] };
            closed += delta * 0.5 * (zl + zr) * ((zr - zl) / delta).powi(2);
        }
        assert!((f.h1_seminorm_sq() - closed).abs() < 1e-12 * closed.abs());
        // quadrature oracle: difference quotients sampled inside each affine
        // piece, never touching the nodes
        let mut quad = 0.0;
        let (xs, _) = f.nodes();
        for w in xs.windows(2) {
            let width = w[1] - w[0];
            let mid = 0.5 * (w[0] + w[1]);
            let slope = (f.eval(mid + 0.25 * width) - f.eval(mid - 0.25 * width)) / (0.5 * width);
            quad += simpson(&|_| slope * slope, w[0], w[1], 1e-15);
        }
        assert!((f.h1_seminorm_sq() - quad).abs() <= 1e-8 * quad.max(1.0));
    }

    #[test]
    fn l1_distance_exact() {
        let g = MassGrid::uniform(1.0, 2).unwrap();
        let u = state(&g, &[0.0, 0.5, 1.0]).density();
        let v = state(&g, &[0.0, 0.25, 1.0]).density();
        // |1-2|*0.25 + |1-2/3|*0.25 + |1-2/3|*0.5 = 0.25 + 1/12 + 1/6 = 0.5
        assert!((u.l1_distance(&v) - 0.5).abs() < 1e-14);
        assert_eq!(u.l1_distance(&u), 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn mass_conserved_for_random_states(incr in proptest::collection::vec(0.01f64..3.0, 8), x0 in -2.0f64..2.0) {
            let g = MassGrid::uniform(1.0, 8).unwrap();
            let mut x = vec![x0];
            for d in &incr {
                x.push(x.last().unwrap() + d);
            }
            let s = LagrangianState::new(g, x).unwrap();
            let u = s.density();
            prop_assert!((u.integral() - 1.0).abs() < 1e-13);
        }

        #[test]
        fn quantile_round_trip_piecewise_constant(incr in proptest::collection::vec(0.05f64..2.0, 6)) {
            // build a density from a state, re-derive the state by quantiles
            let g = MassGrid::uniform(1.0, 6).unwrap();
            let mut x = vec![-0.5];
            for d in &incr {
                x.push(x.last().unwrap() + d);
            }
            let s = LagrangianState::new(g.clone(), x).unwrap();
            let u = s.density();
            let breaks = u.breakpoints().to_vec();
            let dens = FnDensity {
                f: |p: f64| u.eval(p),
                support: u.support(),
                mass: 1.0,
                kinks: breaks,
            };
            let s2 = build_initial_state(&dens, &g).unwrap();
            for (a, b) in s.positions().iter().zip(s2.positions()) {
                prop_assert!((a - b).abs() < 1e-8, "{a} vs {b}");
            }
        }

        #[test]
        fn lagrangian_map_monotone(incr in proptest::collection::vec(0.01f64..2.0, 5), q1 in 0.0f64..1.0, q2 in 0.0f64..1.0) {
            let g = MassGrid::uniform(1.0, 5).unwrap();
            let mut x = vec![0.0];
            for d in &incr {
                x.push(x.last().unwrap() + d);
            }
            let s = LagrangianState::new(g, x).unwrap();
            let (lo, hi) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
            prop_assert!(s.position_at_mass(lo).unwrap() <= s.position_at_mass(hi).unwrap());
        }
    }
}
