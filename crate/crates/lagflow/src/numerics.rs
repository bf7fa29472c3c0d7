//! Small numerical kernels: adaptive quadrature, bracketed root finding,
//! banded Gaussian elimination, and least-squares slope fits.

/// Adaptive Simpson quadrature of `f` over `[a, b]` with absolute tolerance `tol`.
///
/// Classic recursive scheme with Richardson correction. The recursion depth is
/// capped; integrands with isolated kinks converge through subdivision.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, b, fa, fm, fb);
    adaptive_step(f, a, b, fa, fm, fb, whole, tol, 52)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        adaptive_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + adaptive_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

/// Integrate `f` over `[a, b]` splitting first at the given interior breakpoints.
///
/// Breakpoints outside `(a, b)` are ignored; they need not be sorted.
pub fn quad_with_breakpoints<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: f64,
) -> f64 {
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|&p| p > a && p < b).collect();
    pts.push(a);
    pts.push(b);
    pts.sort_by(|p, q| p.partial_cmp(q).unwrap());
    pts.dedup();
    let n = (pts.len() - 1).max(1) as f64;
    let mut total = 0.0;
    for w in pts.windows(2) {
        total += adaptive_simpson(f, w[0], w[1], tol / n);
    }
    total
}

/// Error from a bracketed root solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BracketError {
    pub fa: f64,
    pub fb: f64,
}

/// Brent's method for a root of `f` in `[a, b]`.
///
/// Requires a sign change on the bracket. Returns the abscissa once the
/// bracket width falls below `xtol` or the residual below `ftol`.
pub fn brent_root<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    xtol: f64,
    ftol: f64,
) -> Result<f64, BracketError> {
    let (mut a, mut b) = (a, b);
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(BracketError { fa, fb });
    }
    if fa.abs() < fb.abs() {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut mflag = true;
    for _ in 0..200 {
        if fb.abs() <= ftol {
            return Ok(b);
        }
        let s = if fa != fc && fb != fc {
            // inverse quadratic interpolation
            a * fb * fc / ((fa - fb) * (fa - fc))
                + b * fa * fc / ((fb - fa) * (fb - fc))
                + c * fa * fb / ((fc - fa) * (fc - fb))
        } else {
            b - fb * (b - a) / (fb - fa)
        };
        let lo = (3.0 * a + b) / 4.0;
        let (lo, hi) = if lo < b { (lo, b) } else { (b, lo) };
        let cond = !(lo < s && s < hi)
            || (mflag && (s - b).abs() >= (b - c).abs() / 2.0)
            || (!mflag && (s - b).abs() >= (c - d).abs() / 2.0)
            || (mflag && (b - c).abs() < xtol)
            || (!mflag && (c - d).abs() < xtol);
        let s = if cond {
            mflag = true;
            0.5 * (a + b)
        } else {
            mflag = false;
            s
        };
        let fs = f(s);
        d = c;
        c = b;
        fc = fb;
        if fa.signum() != fs.signum() {
            b = s;
            fb = fs;
        } else {
            a = s;
            fa = fs;
        }
        if fa.abs() < fb.abs() {
            std::mem::swap(&mut a, &mut b);
            std::mem::swap(&mut fa, &mut fb);
        }
        if (b - a).abs() <= xtol {
            return Ok(b);
        }
    }
    Ok(b)
}

/// Square banded matrix with `kl` sub- and `ku` super-diagonals, stored dense
/// per row over the band. Row `i` holds entries for columns
/// `i-kl ..= i+ku` (clipped to the matrix).
#[derive(Debug, Clone)]
pub struct BandedMatrix {
    pub n: usize,
    pub kl: usize,
    pub ku: usize,
    // data[i][j] = A[i, i - kl + j]; width kl + ku + 1
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        BandedMatrix {
            n,
            kl,
            ku,
            data: vec![0.0; n * (kl + ku + 1)],
        }
    }

    #[inline]
    fn width(&self) -> usize {
        self.kl + self.ku + 1
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let off = j as isize - i as isize + self.kl as isize;
        if off < 0 || off >= self.width() as isize {
            0.0
        } else {
            self.data[i * self.width() + off as usize]
        }
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let w = self.width();
        let off = j as isize - i as isize + self.kl as isize;
        debug_assert!(off >= 0 && off < w as isize, "entry ({i},{j}) outside band");
        self.data[i * w + off as usize] += v;
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n]; self.n];
        for i in 0..self.n {
            for j in i.saturating_sub(self.kl)..(i + self.ku + 1).min(self.n) {
                out[i][j] = self.get(i, j);
            }
        }
        out
    }

    /// Solve `A x = rhs` by banded Gaussian elimination with partial pivoting.
    ///
    /// Pivoting widens the upper bandwidth to `kl + ku`; the factorization is
    /// done on an internal working copy. Returns `None` when a pivot collapses.
    pub fn solve(&self, rhs: &[f64]) -> Option<Vec<f64>> {
        assert_eq!(rhs.len(), self.n);
        let n = self.n;
        let kl = self.kl;
        let kuw = self.kl + self.ku; // working upper bandwidth
        let w = kl + kuw + 1;
        // working band: row i holds columns i-kl ..= i+kuw
        let mut a = vec![0.0f64; n * w];
        for i in 0..n {
            for j in i.saturating_sub(kl)..(i + self.ku + 1).min(n) {
                a[i * w + (j + kl - i)] = self.get(i, j);
            }
        }
        let mut x = rhs.to_vec();
        for col in 0..n {
            // partial pivot among rows col ..= col+kl
            let last = (col + kl).min(n - 1);
            let mut piv = col;
            let mut pmax = a[col * w + kl].abs();
            for r in (col + 1)..=last {
                let v = a[r * w + (col + kl - r)].abs();
                if v > pmax {
                    pmax = v;
                    piv = r;
                }
            }
            if pmax == 0.0 || !pmax.is_finite() {
                return None;
            }
            if piv != col {
                // swap the stored segments of rows `col` and `piv` for columns col..=col+kuw
                for j in col..=(col + kuw).min(n - 1) {
                    let oc = j + kl - col;
                    let op = (j + kl).checked_sub(piv).unwrap_or(usize::MAX);
                    let vc = a[col * w + oc];
                    let vp = if op < w { a[piv * w + op] } else { 0.0 };
                    a[col * w + oc] = vp;
                    if op < w {
                        a[piv * w + op] = vc;
                    } else if vc != 0.0 {
                        return None; // outside working band; cannot happen for kuw = kl+ku
                    }
                }
                x.swap(col, piv);
            }
            let pivval = a[col * w + kl];
            for r in (col + 1)..=last {
                let off = col + kl - r;
                let factor = a[r * w + off] / pivval;
                if factor == 0.0 {
                    continue;
                }
                a[r * w + off] = 0.0;
                for j in (col + 1)..=(col + kuw).min(n - 1) {
                    a[r * w + (j + kl - r)] -= factor * a[col * w + (j + kl - col)];
                }
                x[r] -= factor * x[col];
            }
        }
        // back substitution
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in (i + 1)..=(i + kuw).min(n - 1) {
                s -= a[i * w + (j + kl - i)] * x[j];
            }
            x[i] = s / a[i * w + kl];
        }
        Some(x)
    }
}

/// Derivative-free minimization by successive grid refinement.
///
/// Evaluates `f` on a full tensor grid of `2 m + 1` points per coordinate
/// inside the box, recenters on the best point, and shrinks the box so it
/// still covers a few grid cells around it; stops when every half-width is
/// below `target`. `f` may return infinity to exclude points. The box must
/// contain a minimizer of a function that is unimodal at the grid resolution;
/// for strictly convex objectives the refinement brackets the minimizer.
pub fn grid_refine_minimize<F: Fn(&[f64]) -> f64>(
    f: F,
    lo: &[f64],
    hi: &[f64],
    target: f64,
) -> Vec<f64> {
    assert_eq!(lo.len(), hi.len());
    let dim = lo.len();
    let m: i64 = 6;
    let pts = (2 * m + 1) as usize;
    let mut center: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
    let mut half: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (b - a)).collect();
    let mut point = vec![0.0f64; dim];
    let mut best_point = center.clone();
    loop {
        let mut best = f64::INFINITY;
        let mut idx = vec![0usize; dim];
        'grid: loop {
            for d in 0..dim {
                let j = idx[d] as i64 - m;
                point[d] = center[d] + j as f64 * half[d] / m as f64;
            }
            let v = f(&point);
            if v < best {
                best = v;
                best_point.copy_from_slice(&point);
            }
            // mixed-radix increment
            for d in 0..dim {
                idx[d] += 1;
                if idx[d] < pts {
                    continue 'grid;
                }
                idx[d] = 0;
            }
            break;
        }
        center.copy_from_slice(&best_point);
        let mut done = true;
        for h in half.iter_mut() {
            *h *= 2.5 / m as f64;
            if *h > target {
                done = false;
            }
        }
        if done {
            return best_point;
        }
    }
}

/// Least-squares slope of `y` against `t`.
pub fn fit_slope(t: &[f64], y: &[f64]) -> f64 {
    assert_eq!(t.len(), y.len());
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (&ti, &yi) in t.iter().zip(y) {
        num += (ti - tm) * (yi - ym);
        den += (ti - tm) * (ti - tm);
    }
    num / den
}

/// Least-squares slope of `ln y` against `ln t` (log-log fit).
pub fn fit_loglog_slope(t: &[f64], y: &[f64]) -> f64 {
    let lt: Vec<f64> = t.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    fit_slope(&lt, &ly)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn simpson_polynomial_exact() {
        // Simpson with correction integrates low-order polynomials to machine accuracy
        let f = |x: f64| 3.0 * x * x - 2.0 * x + 1.0;
        let v = adaptive_simpson(&f, -1.0, 2.0, 1e-14);
        assert!((v - (9.0 - 3.0 + 3.0)).abs() < 1e-12);
    }

    #[test]
    fn simpson_kink() {
        let f = |x: f64| x.abs();
        let v = adaptive_simpson(&f, -1.0, 1.0, 1e-12);
        assert!((v - 1.0).abs() < 1e-10);
    }

    #[test]
    fn quad_breakpoints_piecewise() {
        let f = |x: f64| if x < 0.25 { 2.0 } else { 0.5 };
        let v = quad_with_breakpoints(&f, 0.0, 1.0, &[0.25], 1e-13);
        assert!((v - (0.5 + 0.375)).abs() < 1e-11);
    }

    #[test]
    fn brent_finds_sqrt2() {
        let f = |x: f64| x * x - 2.0;
        let r = brent_root(&f, 0.0, 2.0, 1e-15, 0.0).unwrap();
        assert!((r - std::f64::consts::SQRT_2).abs() < 1e-13);
    }

    #[test]
    fn brent_rejects_same_sign() {
        let f = |x: f64| x * x + 1.0;
        assert!(brent_root(&f, -1.0, 1.0, 1e-12, 0.0).is_err());
    }

    #[test]
    fn banded_solve_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [1usize, 2, 3, 5, 12, 40] {
            for (kl, ku) in [(1usize, 1usize), (2, 2)] {
                let kl = kl.min(n - 1).max(if n == 1 { 0 } else { 1 });
                let ku = ku.min(n - 1).max(if n == 1 { 0 } else { 1 });
                let mut a = BandedMatrix::zeros(n, kl, ku);
                for i in 0..n {
                    for j in i.saturating_sub(kl)..(i + ku + 1).min(n) {
                        a.add(i, j, rng.gen_range(-1.0..1.0));
                    }
                    a.add(i, i, 4.0); // keep it comfortably invertible
                }
                let xtrue: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let dense = a.to_dense();
                let rhs: Vec<f64> = (0..n)
                    .map(|i| (0..n).map(|j| dense[i][j] * xtrue[j]).sum())
                    .collect();
                let x = a.solve(&rhs).unwrap();
                for (xi, ti) in x.iter().zip(&xtrue) {
                    assert!((xi - ti).abs() < 1e-10, "n={n} kl={kl} ku={ku}");
                }
            }
        }
    }

    #[test]
    fn banded_solve_needs_pivoting() {
        // zero on the diagonal forces a row swap
        let mut a = BandedMatrix::zeros(3, 1, 1);
        a.add(0, 0, 0.0);
        a.add(0, 1, 1.0);
        a.add(1, 0, 2.0);
        a.add(1, 1, 1.0);
        a.add(1, 2, 1.0);
        a.add(2, 1, 1.0);
        a.add(2, 2, 3.0);
        // x = (1, -1, 2)
        let rhs = vec![-1.0, 3.0, 5.0];
        let x = a.solve(&rhs).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert!((x[1] + 1.0).abs() < 1e-12);
        assert!((x[2] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn slope_fit_recovers_line() {
        let t: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|ti| -3.5 * ti + 0.7).collect();
        assert!((fit_slope(&t, &y) + 3.5).abs() < 1e-12);
    }
}
