//! Perron roots by shifted power iteration.
//!
//! Every spectral quantity in this crate is the Perron root of a
//! nonnegative matrix: for a Metzler matrix `L`, `s(L) = r(cI + L) − c` as
//! soon as `cI + L ≥ 0`. A single algorithm therefore serves the spectral
//! bound, the per-node bounds `s(M(x))`, the symmetric maximum used by the
//! Rayleigh route, the constant `α` and the next-generation radius.
//!
//! Convergence is declared when either the Collatz–Wielandt bracket
//! `[min (Bx)_i/x_i, max (Bx)_i/x_i]` closes to the tolerance, or the
//! growth-ratio sequence has settled (successive change and its
//! extrapolated remainder both under the tolerance). The second test covers
//! reducible matrices, whose bracket need not close.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::assembly::AssembledOperator;
use crate::coefficients::CoefficientField;
use crate::error::{Error, Result};
use crate::grid::{kernel_matrix, kernel_row_masses, Kernel, SpatialGrid};

/// Stopping rule for power iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PowerOptions {
    fn default() -> Self {
        PowerOptions {
            tol: 1e-12,
            max_iter: 100_000,
        }
    }
}

impl PowerOptions {
    pub fn with_tol(tol: f64) -> Self {
        PowerOptions {
            tol,
            ..Default::default()
        }
    }
}

/// Extra iterations spent averaging the growth ratio when the main loop
/// does not converge.
const FALLBACK_ITERATIONS: usize = 100;

/// Margin by which the spectral bound must exceed the essential bound for
/// the discrete principal-eigenvalue flag.
pub const PRINCIPAL_MARGIN: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    PowerShift,
    Rayleigh,
    CwCertificate,
}

/// Spectral bound together with its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralReport {
    pub bound: f64,
    /// Max-norm normalized principal vector, present when the iteration
    /// converged.
    pub principal_vector: Option<DVector<f64>>,
    /// `max_x s(M(x))` of the reaction part.
    pub essential_bound: f64,
    pub method: Method,
    /// `‖Lφ − s φ‖_max` at the returned vector.
    pub residual: f64,
    pub principal_exists: bool,
    /// Collatz–Wielandt bracket at the final iterate, in units of `L`.
    pub bracket: (f64, f64),
    pub iterations: usize,
}

/// Result of a Perron power iteration on a nonnegative matrix.
#[derive(Debug, Clone)]
pub(crate) struct PerronOutcome {
    pub radius: f64,
    pub vector: DVector<f64>,
    pub lower: f64,
    pub upper: f64,
    pub iterations: usize,
}

fn cw_bracket(x: &DVector<f64>, y: &DVector<f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (xi, yi) in x.iter().zip(y.iter()) {
        if *xi > 0.0 {
            let r = yi / xi;
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    (lo, hi)
}

/// Tracks the growth-ratio sequence and decides when it has settled.
#[derive(Default)]
struct RatioMonitor {
    prev_est: Option<f64>,
    prev_delta: Option<f64>,
}

impl RatioMonitor {
    fn settled(&mut self, est: f64, threshold: f64) -> bool {
        let mut done = false;
        if let Some(prev) = self.prev_est {
            let delta = (est - prev).abs();
            if let Some(pd) = self.prev_delta {
                if delta == 0.0 && pd == 0.0 {
                    done = true;
                } else if delta <= threshold && pd > 0.0 {
                    let rho = delta / pd;
                    if rho < 1.0 && delta * rho / (1.0 - rho) <= threshold {
                        done = true;
                    }
                }
            }
            self.prev_delta = Some(delta);
        }
        self.prev_est = Some(est);
        done
    }
}

/// Power iteration on a nonnegative matrix `b`, started from the all-ones
/// vector. With `relative` the tolerance scales with the radius itself,
/// otherwise with `max(1, radius)`.
pub(crate) fn perron_power(b: &DMatrix<f64>, opts: PowerOptions, relative: bool) -> Result<PerronOutcome> {
    let n = b.nrows();
    debug_assert_eq!(n, b.ncols());
    let mut x = DVector::from_element(n, 1.0);
    let mut monitor = RatioMonitor::default();
    let mut est = 0.0;
    let scale_of = |e: f64| if relative { e } else { e.max(1.0) };

    for it in 1..=opts.max_iter {
        let y = b * &x;
        est = y.amax();
        if est == 0.0 {
            return Ok(PerronOutcome {
                radius: 0.0,
                vector: x,
                lower: 0.0,
                upper: 0.0,
                iterations: it,
            });
        }
        let (lo, hi) = cw_bracket(&x, &y);
        let threshold = opts.tol * scale_of(est);
        if hi - lo <= threshold {
            return Ok(PerronOutcome {
                radius: 0.5 * (lo + hi),
                vector: y / est,
                lower: lo,
                upper: hi,
                iterations: it,
            });
        }
        let settled = monitor.settled(est, threshold);
        x = y / est;
        if settled {
            let y = b * &x;
            let (lo, hi) = cw_bracket(&x, &y);
            return Ok(PerronOutcome {
                radius: est,
                vector: x,
                lower: lo,
                upper: hi,
                iterations: it,
            });
        }
    }

    // Averaging consecutive ratios geometrically cancels period-two
    // oscillation of the max-norm growth.
    let mut averages = Vec::with_capacity(FALLBACK_ITERATIONS);
    let mut prev = est;
    for _ in 0..FALLBACK_ITERATIONS {
        let y = b * &x;
        let e = y.amax();
        if e == 0.0 {
            break;
        }
        averages.push((e * prev).sqrt());
        prev = e;
        x = y / e;
    }
    let tail = &averages[averages.len().saturating_sub(FALLBACK_ITERATIONS / 2)..];
    if let (Some(&first), Some(&last)) = (tail.first(), tail.last()) {
        let spread = tail.iter().fold(0.0f64, |acc, &a| acc.max((a - last).abs()));
        if spread <= 1e3 * opts.tol * scale_of(last) && (first - last).abs() <= 1e3 * opts.tol * scale_of(last) {
            let y = b * &x;
            let (lo, hi) = cw_bracket(&x, &y);
            return Ok(PerronOutcome {
                radius: last,
                vector: x,
                lower: lo,
                upper: hi,
                iterations: opts.max_iter + FALLBACK_ITERATIONS,
            });
        }
    }
    Err(Error::PowerIterationFailed {
        iterations: opts.max_iter + FALLBACK_ITERATIONS,
        estimate: est,
    })
}

/// Smallest `c ≥ 0` plus one making `matrix + cI` entrywise nonnegative on
/// the diagonal.
pub fn diagonal_shift(matrix: &DMatrix<f64>) -> f64 {
    let min_diag = (0..matrix.nrows()).map(|i| matrix[(i, i)]).fold(f64::INFINITY, f64::min);
    (-min_diag).max(0.0) + 1.0
}

pub(crate) fn check_metzler(matrix: &DMatrix<f64>) -> Result<()> {
    for c in 0..matrix.ncols() {
        for r in 0..matrix.nrows() {
            let v = matrix[(r, c)];
            if r != c && v < 0.0 {
                return Err(Error::NotMetzler { row: r, col: c, value: v });
            }
        }
    }
    Ok(())
}

/// Perron bound `s(M)` of a small Metzler matrix.
pub fn perron_bound(matrix: &DMatrix<f64>, opts: PowerOptions) -> Result<f64> {
    check_metzler(matrix)?;
    let c = diagonal_shift(matrix);
    let b = matrix + DMatrix::identity(matrix.nrows(), matrix.ncols()) * c;
    Ok(perron_power(&b, opts, false)?.radius - c)
}

/// `s(M(x_j))` at every node.
pub fn nodewise_bounds(field: &CoefficientField, opts: PowerOptions) -> Result<Vec<f64>> {
    if field.species() == 1 {
        return Ok(field.samples().iter().map(|s| s[(0, 0)]).collect());
    }
    field.samples().iter().map(|s| perron_bound(s, opts)).collect()
}

/// `max_x s(M(x))`, the bound of the spectrum of the multiplication part.
pub fn essential_bound(field: &CoefficientField) -> Result<f64> {
    Ok(nodewise_bounds(field, PowerOptions::default())?
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max))
}

/// `s(L)` by power iteration on `shift_c·I + L`.
pub fn spectral_bound(op: &AssembledOperator, opts: PowerOptions) -> Result<SpectralReport> {
    check_metzler(op.matrix())?;
    let c = op.shift_c();
    let n = op.dim();
    let b = op.matrix() + DMatrix::identity(n, n) * c;
    let out = perron_power(&b, opts, false)?;
    let bound = out.radius - c;
    let residual = (op.matrix() * &out.vector - &out.vector * bound).amax();
    let essential = essential_bound(op.reaction())?;
    Ok(SpectralReport {
        bound,
        principal_vector: Some(out.vector),
        essential_bound: essential,
        method: Method::PowerShift,
        residual,
        principal_exists: bound > essential + PRINCIPAL_MARGIN,
        bracket: (out.lower - c, out.upper - c),
        iterations: out.iterations,
    })
}

/// Largest absolute asymmetry `max |a_ij − a_ji|`.
pub fn asymmetry(matrix: &DMatrix<f64>) -> f64 {
    let n = matrix.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((matrix[(i, j)] - matrix[(j, i)]).abs());
        }
    }
    worst
}

/// Symmetry threshold for the self-adjoint routes.
pub const SYMMETRY_TOL: f64 = 1e-10;

fn weighted_dot(w: &[f64], a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    w.iter().zip(a.iter().zip(b.iter())).map(|(w, (a, b))| w * a * b).sum()
}

/// Largest eigenvalue of a symmetric operator as the maximum of its
/// quadratic form, by power iteration on the shifted matrix with
/// Rayleigh-quotient estimates in the weighted inner product.
pub fn rayleigh_bound(op: &AssembledOperator, opts: PowerOptions) -> Result<SpectralReport> {
    let asym = asymmetry(op.matrix());
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSelfAdjoint { asymmetry: asym });
    }
    check_metzler(op.matrix())?;
    let c = op.shift_c();
    let n = op.dim();
    let w = op.weights();
    let b = op.matrix() + DMatrix::identity(n, n) * c;

    let normalize = |v: DVector<f64>| {
        let norm = weighted_dot(w, &v, &v).sqrt();
        v / norm
    };
    let mut x = normalize(DVector::from_element(n, 1.0));
    let mut monitor = RatioMonitor::default();
    let mut rq = 0.0;
    let mut iterations = 0;
    let mut converged = false;
    for it in 1..=opts.max_iter {
        let y = &b * &x;
        rq = weighted_dot(w, &x, &y);
        iterations = it;
        let threshold = opts.tol * rq.abs().max(1.0);
        let settled = monitor.settled(rq, threshold);
        x = normalize(y);
        if settled {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::PowerIterationFailed {
            iterations,
            estimate: rq - c,
        });
    }
    let bound = rayleigh_quotient(op, &x)?;
    let amax = x.amax();
    let v = x / amax;
    let residual = (op.matrix() * &v - &v * bound).amax();
    let essential = essential_bound(op.reaction())?;
    let lv = op.matrix() * &v;
    let (lo, hi) = cw_bracket(&v, &lv);
    Ok(SpectralReport {
        bound,
        principal_vector: Some(v),
        essential_bound: essential,
        method: Method::Rayleigh,
        residual,
        principal_exists: bound > essential + PRINCIPAL_MARGIN,
        bracket: (lo, hi),
        iterations,
    })
}

/// `⟨φ, Lφ⟩ / ⟨φ, φ⟩` in the quadrature-weighted inner product.
pub fn rayleigh_quotient(op: &AssembledOperator, phi: &DVector<f64>) -> Result<f64> {
    if phi.len() != op.dim() {
        return Err(Error::SizeMismatch(format!(
            "vector has length {}, operator dimension is {}",
            phi.len(),
            op.dim()
        )));
    }
    let w = op.weights();
    let norm2 = weighted_dot(w, phi, phi);
    if norm2 == 0.0 {
        return Err(Error::InvalidParameter {
            name: "phi",
            reason: "zero vector".into(),
        });
    }
    let lphi = op.matrix() * phi;
    Ok(weighted_dot(w, phi, &lphi) / norm2)
}

/// The constant α: infimum over mean-zero `u` of
/// `½∬J(x−y)[u(y)−u(x)]² / ∫u²`.
///
/// With `G = diag(row masses) − K` the form is `uᵀWGu`. The symmetric
/// matrix `S = W^{-1/2}(WG)W^{-1/2}` is minimized on the complement of
/// `W^{1/2}·1` by power iteration on `cI − S` with the constant direction
/// projected out at every step.
pub fn compute_alpha(grid: &SpatialGrid, kernel: &Kernel, opts: PowerOptions) -> Result<f64> {
    if kernel.eval([0.3 * kernel.radius(), 0.0]) != kernel.eval([-0.3 * kernel.radius(), 0.0]) {
        return Err(Error::InvalidKernel("alpha needs an even kernel".into()));
    }
    let km = kernel_matrix(grid, kernel)?;
    let masses = kernel_row_masses(grid, kernel)?;
    let w = grid.weights();
    let n = grid.len();
    let sqrt_w: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();

    // S_jk = sqrt(w_j) (δ_jk m_j − J_jk w_k) / sqrt(w_k)
    let s = DMatrix::from_fn(n, n, |j, k| {
        let g = if j == k { masses[j] } else { 0.0 } - km[(j, k)];
        sqrt_w[j] * g / sqrt_w[k]
    });
    let shift = 2.0 * masses.max();
    let b = DMatrix::identity(n, n) * shift - &s;

    let e_norm = DVector::from_vec(sqrt_w.clone()).normalize();
    let project = |v: DVector<f64>| {
        let d = v.dot(&e_norm);
        v - &e_norm * d
    };
    // Deterministic start with no component along the constants.
    let mut x = project(DVector::from_fn(n, |j, _| {
        let p = grid.nodes()[j];
        p[0] + 0.618_033_988_749_895 * p[1] + 1e-3 * ((j as f64 * 0.754_877_666_246_692_8).fract() - 0.5)
    }))
    .normalize();

    let mut monitor = RatioMonitor::default();
    let mut rq = 0.0;
    let mut converged = false;
    for _ in 0..opts.max_iter {
        let y = project(&b * &x);
        rq = x.dot(&y);
        let settled = monitor.settled(rq, opts.tol * rq.abs().max(1.0));
        let norm = y.norm();
        if norm == 0.0 {
            converged = true;
            break;
        }
        x = y / norm;
        if settled {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::PowerIterationFailed {
            iterations: opts.max_iter,
            estimate: shift - rq,
        });
    }
    let sx = &s * &x;
    Ok(x.dot(&sx))
}

/// `r(Q)` of a nonnegative matrix. A small diagonal shift keeps the
/// iteration aperiodic; it is subtracted from the result.
pub fn spectral_radius(q: &DMatrix<f64>, opts: PowerOptions) -> Result<f64> {
    for c in 0..q.ncols() {
        for r in 0..q.nrows() {
            if q[(r, c)] < 0.0 {
                return Err(Error::NegativeEntry {
                    row: r,
                    col: c,
                    value: q[(r, c)],
                });
            }
        }
    }
    let max_row = q.row_iter().map(|r| r.sum()).fold(0.0f64, f64::max);
    if max_row == 0.0 {
        return Ok(0.0);
    }
    Ok(spectral_radius_with_vector(q, opts)?.0)
}

pub(crate) fn spectral_radius_with_vector(q: &DMatrix<f64>, opts: PowerOptions) -> Result<(f64, DVector<f64>)> {
    let n = q.nrows();
    let max_row = q.row_iter().map(|r| r.sum()).fold(0.0f64, f64::max);
    if max_row == 0.0 {
        return Ok((0.0, DVector::from_element(n, 1.0)));
    }
    let c = 1e-3 * max_row;
    let b = q + DMatrix::identity(n, n) * c;
    let out = perron_power(&b, opts, true)?;
    Ok(((out.radius - c).max(0.0), out.vector))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_l, assemble_sis};
    use crate::coefficients::ScalarField;
    use crate::grid::{build_grid, Bounds};
    use nalgebra::dmatrix;

    fn unit(n: usize) -> SpatialGrid {
        build_grid(Bounds::interval(0.0, 1.0), n).unwrap()
    }

    #[test]
    fn rank_one_bound() {
        let g = unit(4);
        let k = Kernel::uniform(1.0, 1).unwrap();
        let m = CoefficientField::constant(&g, dmatrix![0.0]).unwrap();
        let op = assemble_l(&g, &[k], &[1.0], &m).unwrap();
        let rep = spectral_bound(&op, PowerOptions::default()).unwrap();
        assert!((rep.bound - 0.5).abs() < 1e-12);
        assert!(rep.residual < 1e-12);
    }

    #[test]
    fn constant_sis_bound_zero() {
        let g = unit(16);
        let k = Kernel::tent(0.3, 1).unwrap();
        let beta = ScalarField::constant(&g, 2.0).unwrap();
        let gamma = ScalarField::constant(&g, 1.0).unwrap();
        let msat = ScalarField::constant(&g, 1.0).unwrap();
        let op = assemble_sis(&g, &k, 0.7, &beta, &gamma, &msat, 1.0, 1.0).unwrap();
        let rep = spectral_bound(&op, PowerOptions::default()).unwrap();
        assert!(rep.bound.abs() < 1e-12);
        let ray = rayleigh_bound(&op, PowerOptions::default()).unwrap();
        assert!(ray.bound.abs() < 1e-12);
    }

    #[test]
    fn essential_bound_cases() {
        let g = unit(10);
        let s = ScalarField::affine(&g, 0.0, [1.0, 0.0]).unwrap();
        let f = CoefficientField::from_scalar(&s).unwrap();
        assert!((essential_bound(&f).unwrap() - 0.95).abs() < 1e-15);

        let c = CoefficientField::constant(&g, dmatrix![-1.0, 2.0; 0.5, -3.0]).unwrap();
        let closed = {
            let (a, b, cc, d) = (-1.0f64, 2.0, 0.5, -3.0);
            0.5 * (a + d) + (0.25 * (a - d) * (a - d) + b * cc).sqrt()
        };
        assert!((essential_bound(&c).unwrap() - closed).abs() < 1e-11);
    }

    #[test]
    fn reducible_small_matrix() {
        let m = dmatrix![2.0, 0.0; 0.0, 1.0];
        assert!((perron_bound(&m, PowerOptions::default()).unwrap() - 2.0).abs() < 1e-11);
    }

    #[test]
    fn not_metzler_rejected() {
        assert!(perron_bound(&dmatrix![0.0, -1.0; 1.0, 0.0], PowerOptions::default()).is_err());
    }

    #[test]
    fn radius_of_zero_and_periodic() {
        assert_eq!(spectral_radius(&DMatrix::zeros(3, 3), PowerOptions::default()).unwrap(), 0.0);
        let p = dmatrix![0.0, 2.0; 2.0, 0.0];
        assert!((spectral_radius(&p, PowerOptions::default()).unwrap() - 2.0).abs() < 1e-10);
        assert!(spectral_radius(&dmatrix![1.0, -1.0; 0.0, 1.0], PowerOptions::default()).is_err());
    }

    #[test]
    fn alpha_uniform_whole_domain() {
        let g = unit(64);
        let k = Kernel::uniform(1.0, 1).unwrap();
        let a = compute_alpha(&g, &k, PowerOptions::default()).unwrap();
        assert!((a - 0.5).abs() < 1e-10);
    }

    #[test]
    fn rayleigh_quotient_on_principal_vector() {
        let g = unit(12);
        let k = Kernel::tent(0.4, 1).unwrap();
        let s = ScalarField::gaussian_bump(&g, -1.0, 0.8, [0.3, 0.0], 0.1).unwrap();
        let m = CoefficientField::from_scalar(&s).unwrap();
        let op = assemble_l(&g, &[k], &[0.5], &m).unwrap();
        let rep = rayleigh_bound(&op, PowerOptions::default()).unwrap();
        let q = rayleigh_quotient(&op, rep.principal_vector.as_ref().unwrap()).unwrap();
        assert!((q - rep.bound).abs() < 1e-12);
        assert!(rayleigh_quotient(&op, &DVector::zeros(12)).is_err());
    }

    #[test]
    fn rayleigh_refuses_asymmetric() {
        let g = unit(6);
        let k = Kernel::tent(0.5, 1).unwrap();
        let m = CoefficientField::constant(&g, dmatrix![-1.0, 1.0; 0.2, -1.0]).unwrap();
        let op = assemble_l(&g, &[k, k], &[1.0, 1.0], &m).unwrap();
        assert!(matches!(
            rayleigh_bound(&op, PowerOptions::default()),
            Err(Error::NotSelfAdjoint { .. })
        ));
    }
}
