//! Collatz–Wielandt brackets for `s(L)` and the three routes to the weighted
//! eigenvalue `μ₀` (the unique `μ` with `s(𝓛_μ) = 0`).
//!
//! * bisection on `μ ↦ s(𝓛_μ)`, which is nonincreasing in `μ`;
//! * the next-generation radius `r(−F𝓛_∞⁻¹)`;
//! * the maximum of the generalized Rayleigh quotient
//!   `φᵀFφ / φᵀ(−𝓛_∞)φ`, available when `𝓛_∞` and `F` are symmetric.
//!
//! Positive test vectors give rigorous brackets for both `s(L)` and `μ₀`.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::assembly::{AssembledOperator, WeightedProblem};
use crate::error::{Error, Result};
use crate::spectral::{
    check_metzler, spectral_bound, spectral_radius_with_vector, PowerOptions, SpectralReport,
};

/// Collatz–Wielandt certificate: `s(L) ∈ [lower, upper]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CwCertificate {
    pub phi: DVector<f64>,
    pub lower: f64,
    pub upper: f64,
    pub gap: f64,
    pub iterations: usize,
    /// Gap after every iteration.
    pub gaps: Vec<f64>,
}

fn check_positive(phi: &DVector<f64>) -> Result<()> {
    match phi.iter().position(|&v| !(v > 0.0)) {
        Some(index) => Err(Error::NonPositiveTestVector { index }),
        None => Ok(()),
    }
}

/// `(min_i (Lφ)_i/φ_i, max_i (Lφ)_i/φ_i)` over every species and node.
pub fn cw_ratios(op: &AssembledOperator, phi: &DVector<f64>) -> Result<(f64, f64)> {
    if phi.len() != op.dim() {
        return Err(Error::SizeMismatch(format!(
            "vector has length {}, operator dimension is {}",
            phi.len(),
            op.dim()
        )));
    }
    check_positive(phi)?;
    let lphi = op.apply(phi);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (a, b) in lphi.iter().zip(phi.iter()) {
        let r = a / b;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    Ok((lo, hi))
}

/// Refuses operators whose reaction part does not guarantee equality of
/// the two Collatz–Wielandt values.
pub fn check_cw_preconditions(op: &AssembledOperator) -> Result<()> {
    let flags = op.reaction().flags();
    if !flags.weakly_irreducible {
        return Err(Error::IrreducibilityRefused(
            "reaction field is not weakly irreducible; with decoupled species the min and max ratio values differ from s(L)"
                .into(),
        ));
    }
    if op.partially_degenerate() && !flags.strongly_irreducible {
        return Err(Error::IrreducibilityRefused(
            "some dispersal rate is zero and the reaction field is not irreducible at every node".into(),
        ));
    }
    Ok(())
}

/// Iterates `φ ← (shift_c·I + L)φ / ‖·‖` until the ratio bracket closes to
/// `tol`.
pub fn cw_certificate(op: &AssembledOperator, tol: f64, max_iter: usize) -> Result<CwCertificate> {
    check_cw_preconditions(op)?;
    check_metzler(op.matrix())?;
    if !op.kernels_resolve() {
        log::warn!("kernel support below two grid spacings; the certificate may not converge");
    }
    let c = op.shift_c();
    let n = op.dim();
    let b = op.matrix() + DMatrix::identity(n, n) * c;
    let mut phi = DVector::from_element(n, 1.0);
    let mut gaps = Vec::new();
    for it in 1..=max_iter {
        let y = &b * &phi;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (a, p) in y.iter().zip(phi.iter()) {
            let r = a / p;
            lo = lo.min(r);
            hi = hi.max(r);
        }
        let gap = hi - lo;
        gaps.push(gap);
        if gap <= tol {
            return Ok(CwCertificate {
                phi,
                lower: lo - c,
                upper: hi - c,
                gap,
                iterations: it,
                gaps,
            });
        }
        let norm = y.amax();
        phi = y / norm;
    }
    Err(Error::PowerIterationFailed {
        iterations: max_iter,
        estimate: gaps.last().copied().unwrap_or(f64::NAN),
    })
}

/// Options shared by the `μ₀` routes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mu0Options {
    /// Relative bracket width at which bisection stops.
    pub tol: f64,
    pub power: PowerOptions,
}

impl Default for Mu0Options {
    fn default() -> Self {
        Mu0Options {
            tol: 1e-10,
            power: PowerOptions::default(),
        }
    }
}

const BRACKET_LIMIT: f64 = (1u64 << 60) as f64;

/// Outcome of the bisection route.
#[derive(Debug, Clone, PartialEq)]
pub struct Mu0Bisection {
    pub mu0: f64,
    pub bracket: (f64, f64),
    pub evaluations: usize,
    /// Spectral report of `𝓛_{μ₀}`.
    pub at_mu0: SpectralReport,
}

fn require_stable(problem: &WeightedProblem, opts: PowerOptions) -> Result<f64> {
    let bound = spectral_bound(problem.l_infinity(), opts)?.bound;
    if bound >= 0.0 {
        return Err(Error::NoMu0 { bound });
    }
    Ok(bound)
}

/// `μ₀` by bisection on the sign of `s(𝓛_μ)`.
pub fn mu0_bisection(problem: &WeightedProblem, opts: Mu0Options) -> Result<Mu0Bisection> {
    require_stable(problem, opts.power)?;
    let mut evaluations = 0;
    let mut s_of = |mu: f64| -> Result<f64> {
        evaluations += 1;
        Ok(spectral_bound(&problem.at(mu)?, opts.power)?.bound)
    };

    let (mut lo, mut hi);
    if s_of(1.0)? > 0.0 {
        lo = 1.0;
        hi = 2.0;
        while s_of(hi)? > 0.0 {
            lo = hi;
            hi *= 2.0;
            if hi > BRACKET_LIMIT {
                return Err(Error::Mu0OutOfRange);
            }
        }
    } else {
        hi = 1.0;
        lo = 0.5;
        while s_of(lo)? <= 0.0 {
            hi = lo;
            lo *= 0.5;
            if lo < 1.0 / BRACKET_LIMIT {
                return Err(Error::Mu0OutOfRange);
            }
        }
    }
    while hi - lo > opts.tol * 0.5 * (lo + hi) {
        let mid = 0.5 * (lo + hi);
        if s_of(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mu0 = 0.5 * (lo + hi);
    let at_mu0 = spectral_bound(&problem.at(mu0)?, opts.power)?;
    Ok(Mu0Bisection {
        mu0,
        bracket: (lo, hi),
        evaluations: evaluations + 1,
        at_mu0,
    })
}

/// Outcome of the next-generation route.
#[derive(Debug, Clone, PartialEq)]
pub struct Mu0NextGeneration {
    pub mu0: f64,
    /// Perron vector of `Q`.
    pub perron_vector: DVector<f64>,
    /// `φ = (−𝓛_∞)⁻¹ ψ`, the matching test function of the weighted
    /// problem.
    pub test_function: DVector<f64>,
    pub clamped: usize,
    pub l_infinity_bound: f64,
}

/// `μ₀ = r(−F𝓛_∞⁻¹)`.
pub fn mu0_next_generation(problem: &WeightedProblem, opts: Mu0Options) -> Result<Mu0NextGeneration> {
    let ng = problem.next_generation(opts.power).map_err(|e| match e {
        Error::NextGenerationUndefined { bound } => Error::NoMu0 { bound },
        other => other,
    })?;
    let (mu0, psi) = spectral_radius_with_vector(&ng.q, opts.power)?;
    let neg_l = -problem.l_infinity().matrix();
    let phi = neg_l.lu().solve(&psi).ok_or(Error::Singular)?;
    Ok(Mu0NextGeneration {
        mu0,
        perron_vector: psi,
        test_function: phi,
        clamped: ng.clamped,
        l_infinity_bound: ng.l_infinity_bound,
    })
}

/// Outcome of the Rayleigh route.
#[derive(Debug, Clone, PartialEq)]
pub struct Mu0Rayleigh {
    pub mu0: f64,
    /// Maximizing test function, max-norm normalized.
    pub maximizer: DVector<f64>,
    pub iterations: usize,
}

/// Generalized Rayleigh quotient `⟨φ, Fφ⟩ / ⟨φ, −𝓛_∞φ⟩` in the weighted
/// inner product.
pub fn mu0_quotient(problem: &WeightedProblem, phi: &DVector<f64>) -> Result<f64> {
    let w = problem.l_infinity().weights();
    let fphi = problem.infection_block() * phi;
    let lphi = -(problem.l_infinity().matrix() * phi);
    let num: f64 = w.iter().zip(phi.iter().zip(fphi.iter())).map(|(w, (p, f))| w * p * f).sum();
    let den: f64 = w.iter().zip(phi.iter().zip(lphi.iter())).map(|(w, (p, l))| w * p * l).sum();
    if !(den > 0.0) {
        return Err(Error::InvalidParameter {
            name: "phi",
            reason: format!("denominator {den} is not positive"),
        });
    }
    Ok(num / den)
}

/// `μ₀` as the maximum of `φᵀWFφ / φᵀW(−𝓛_∞)φ`.
///
/// With the Cholesky factor `W(−𝓛_∞) = LLᵀ` the maximum is the largest
/// eigenvalue of the symmetric `S = L⁻¹ WF L⁻ᵀ`, found by power iteration
/// with Rayleigh-quotient estimates; the maximizer is `φ = L⁻ᵀv`.
pub fn mu0_rayleigh(problem: &WeightedProblem, opts: Mu0Options) -> Result<Mu0Rayleigh> {
    use crate::spectral::{asymmetry, SYMMETRY_TOL};
    let asym = asymmetry(problem.l_infinity().matrix()).max(asymmetry(problem.infection_block()));
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSelfAdjoint { asymmetry: asym });
    }
    require_stable(problem, opts.power)?;

    let w = DVector::from_column_slice(problem.l_infinity().weights());
    let n = w.len();
    let weighted = |m: &DMatrix<f64>| {
        let mut out = m.clone();
        for (r, mut row) in out.row_iter_mut().enumerate() {
            row *= w[r];
        }
        out
    };
    let mut lw = weighted(&(-problem.l_infinity().matrix()));
    let mut fw = weighted(problem.infection_block());
    lw = (&lw + lw.transpose()) * 0.5;
    fw = (&fw + fw.transpose()) * 0.5;

    let chol = Cholesky::new(lw).ok_or(Error::Singular)?;
    let l = chol.l();
    let x = l.solve_lower_triangular(&fw).ok_or(Error::Singular)?;
    let s = l.solve_lower_triangular(&x.transpose()).ok_or(Error::Singular)?;
    let s = (&s + s.transpose()) * 0.5;

    let shift = 1e-3 * s.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    if shift == 0.0 {
        return Ok(Mu0Rayleigh {
            mu0: 0.0,
            maximizer: DVector::from_element(n, 1.0),
            iterations: 0,
        });
    }
    let b = &s + DMatrix::identity(n, n) * shift;

    // v = Lᵀ·1 corresponds to the constant test function.
    let mut v = (l.transpose() * DVector::from_element(n, 1.0)).normalize();
    let mut prev: Option<f64> = None;
    let mut prev_delta: Option<f64> = None;
    let mut iterations = 0;
    let mut converged = false;
    for it in 1..=opts.power.max_iter {
        iterations = it;
        let y = &b * &v;
        let rq = v.dot(&y);
        v = y.normalize();
        if let Some(p) = prev {
            let delta = (rq - p).abs();
            let threshold = opts.power.tol * rq.abs().max(f64::MIN_POSITIVE);
            if let Some(pd) = prev_delta {
                let rho = if pd > 0.0 { delta / pd } else { 0.0 };
                if delta <= threshold && (delta == 0.0 || (rho < 1.0 && delta * rho / (1.0 - rho) <= threshold)) {
                    converged = true;
                }
            }
            prev_delta = Some(delta);
        }
        prev = Some(rq);
        if converged {
            break;
        }
    }
    if !converged {
        return Err(Error::PowerIterationFailed {
            iterations,
            estimate: prev.unwrap_or(f64::NAN) - shift,
        });
    }
    let sv = &s * &v;
    let mu0 = v.dot(&sv);
    let phi = l.transpose().solve_upper_triangular(&v).ok_or(Error::Singular)?;
    let sign = if phi.sum() < 0.0 { -1.0 } else { 1.0 };
    let maximizer = &phi * (sign / phi.amax());
    Ok(Mu0Rayleigh {
        mu0,
        maximizer,
        iterations,
    })
}

/// Bracket `[min, max]` of `(Fφ)_i / (−𝓛_∞φ)_i`, which contains `μ₀` for
/// every admissible positive `φ`.
pub fn mu0_cw_ratios(problem: &WeightedProblem, phi: &DVector<f64>) -> Result<(f64, f64)> {
    let l = problem.l_infinity();
    if phi.len() != l.dim() {
        return Err(Error::SizeMismatch(format!(
            "vector has length {}, operator dimension is {}",
            phi.len(),
            l.dim()
        )));
    }
    check_positive(phi)?;
    let num = problem.infection_block() * phi;
    let den = -(l.matrix() * phi);
    let n = l.nodes();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (idx, (a, b)) in num.iter().zip(den.iter()).enumerate() {
        if !(*b > 0.0) {
            return Err(Error::InadmissibleTestFunction {
                node: idx % n,
                species: idx / n,
            });
        }
        let r = a / b;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    Ok((lo, hi))
}

/// Dead zone for sign comparisons near `s = 0`.
pub const SIGN_DEAD_ZONE: f64 = 1e-9;

fn dead_zone_sign(v: f64) -> i8 {
    if v.abs() <= SIGN_DEAD_ZONE {
        0
    } else if v > 0.0 {
        1
    } else {
        -1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignSample {
    pub mu: f64,
    pub spectral_bound: f64,
    /// `r(Q)/μ − 1`.
    pub next_generation: f64,
    pub agree: bool,
}

/// Checks that `s(𝓛_μ)` and `r(Q)/μ − 1` share their sign at each sample.
/// A value inside the dead zone is compatible with either sign.
pub fn sign_relation_check(problem: &WeightedProblem, mus: &[f64], opts: Mu0Options) -> Result<Vec<SignSample>> {
    let r = mu0_next_generation(problem, opts)?.mu0;
    mus.iter()
        .map(|&mu| {
            let s = spectral_bound(&problem.at(mu)?, opts.power)?.bound;
            let g = r / mu - 1.0;
            let (a, b) = (dead_zone_sign(s), dead_zone_sign(g));
            Ok(SignSample {
                mu,
                spectral_bound: s,
                next_generation: g,
                agree: a == b || a == 0 || b == 0,
            })
        })
        .collect()
}

/// `μ₀` from every applicable route, with agreement diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct R0Report {
    pub mu0_bisection: f64,
    pub mu0_next_generation: f64,
    pub mu0_rayleigh: Option<f64>,
    /// Bracket from the next-generation test function.
    pub cw_lower: f64,
    pub cw_upper: f64,
    /// Largest pairwise deviation between the routes.
    pub agreement: f64,
    /// `s(𝓛_μ)` at the bisection value.
    pub s_at_mu0: f64,
    pub l_infinity_bound: f64,
    pub clamped: usize,
    /// Set when the routes disagree beyond the configured tolerance.
    pub flagged: bool,
}

impl R0Report {
    /// Value reported as `R₀`.
    pub fn value(&self) -> f64 {
        self.mu0_next_generation
    }

    pub fn routes(&self) -> Vec<f64> {
        let mut v = vec![self.mu0_bisection, self.mu0_next_generation];
        v.extend(self.mu0_rayleigh);
        v
    }
}

/// Route-disagreement level above which a report is flagged.
pub const AGREEMENT_FLAG: f64 = 1e-5;

/// Runs all applicable routes. The Rayleigh route runs only for symmetric
/// problems.
pub fn solve_mu0(problem: &WeightedProblem, opts: Mu0Options) -> Result<R0Report> {
    let ng = mu0_next_generation(problem, opts)?;
    let bis = mu0_bisection(problem, opts)?;
    let ray = if problem.symmetric() {
        Some(mu0_rayleigh(problem, opts)?.mu0)
    } else {
        None
    };
    let (cw_lower, cw_upper) = match mu0_cw_ratios(problem, &ng.test_function) {
        Ok(b) => b,
        Err(Error::InadmissibleTestFunction { .. } | Error::NonPositiveTestVector { .. }) => {
            (f64::NEG_INFINITY, f64::INFINITY)
        }
        Err(e) => return Err(e),
    };
    let mut routes = vec![bis.mu0, ng.mu0];
    routes.extend(ray);
    let mut agreement = 0.0f64;
    for i in 0..routes.len() {
        for j in (i + 1)..routes.len() {
            agreement = agreement.max((routes[i] - routes[j]).abs());
        }
    }
    Ok(R0Report {
        mu0_bisection: bis.mu0,
        mu0_next_generation: ng.mu0,
        mu0_rayleigh: ray,
        cw_lower,
        cw_upper,
        agreement,
        s_at_mu0: bis.at_mu0.bound,
        l_infinity_bound: ng.l_infinity_bound,
        clamped: ng.clamped,
        flagged: agreement > AGREEMENT_FLAG * ng.mu0.abs().max(1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble_l;
    use crate::coefficients::{CoefficientField, ScalarField};
    use crate::grid::{build_grid, Bounds, Kernel, SpatialGrid};
    use nalgebra::dmatrix;

    fn unit(n: usize) -> SpatialGrid {
        build_grid(Bounds::interval(0.0, 1.0), n).unwrap()
    }

    fn constant_sis(n: usize, beta: f64, gamma: f64, m: f64, k: f64) -> WeightedProblem {
        let g = unit(n);
        let kern = Kernel::tent(0.3, 1).unwrap();
        WeightedProblem::sis(
            &g,
            &kern,
            0.4,
            &ScalarField::constant(&g, beta).unwrap(),
            &ScalarField::constant(&g, gamma).unwrap(),
            &ScalarField::constant(&g, m).unwrap(),
            k,
        )
        .unwrap()
    }

    #[test]
    fn ratios_on_rank_one() {
        let g = unit(4);
        let k = Kernel::uniform(1.0, 1).unwrap();
        let m = CoefficientField::constant(&g, dmatrix![0.0]).unwrap();
        let op = assemble_l(&g, &[k], &[1.0], &m).unwrap();
        let (lo, hi) = cw_ratios(&op, &DVector::from_element(4, 1.0)).unwrap();
        assert!((lo - 0.5).abs() < 1e-15 && (hi - 0.5).abs() < 1e-15);
        assert!(cw_ratios(&op, &DVector::from_vec(vec![1.0, 0.0, 1.0, 1.0])).is_err());
    }

    #[test]
    fn decoupled_example_refused() {
        let g = unit(8);
        let k = Kernel::tent(0.5, 1).unwrap();
        let m = CoefficientField::constant(&g, dmatrix![2.0, 0.0; 0.0, 1.0]).unwrap();
        let op = assemble_l(&g, &[k, k], &[1.0, 1.0], &m).unwrap();
        let err = cw_certificate(&op, 1e-10, 10_000).unwrap_err();
        assert!(matches!(err, Error::IrreducibilityRefused(_)));
        assert!(err.is_refusal());
    }

    #[test]
    fn degenerate_needs_strong_irreducibility() {
        let g = unit(8);
        let k = Kernel::tent(0.5, 1).unwrap();
        let m = CoefficientField::from_fn(&g, |p| {
            let c = if p[0] < 0.5 { 1.0 } else { 0.0 };
            dmatrix![-1.0, c; 1.0, -1.0]
        })
        .unwrap();
        let op = assemble_l(&g, &[k, k], &[1.0, 0.0], &m).unwrap();
        assert!(cw_certificate(&op, 1e-10, 10_000).is_err());
        let op = assemble_l(&g, &[k, k], &[1.0, 1.0], &m).unwrap();
        assert!(cw_certificate(&op, 1e-10, 100_000).is_ok());
    }

    #[test]
    fn certificate_brackets_zero_for_constant_sis() {
        let p = constant_sis(12, 2.0, 1.0, 1.0, 1.0);
        let op = p.at(1.0).unwrap();
        let cert = cw_certificate(&op, 1e-10, 10_000).unwrap();
        assert!(cert.lower <= 1e-12 && cert.upper >= -1e-12);
        assert!(cert.gap <= 1e-10);
    }

    #[test]
    fn closed_form_routes() {
        for (beta, gamma, m, k) in [(2.0, 1.0, 1.0, 1.0), (3.0, 1.0, 0.5, 1.0)] {
            let expected = k * beta / (gamma * (m + k));
            let p = constant_sis(10, beta, gamma, m, k);
            let rep = solve_mu0(&p, Mu0Options::default()).unwrap();
            for r in rep.routes() {
                assert!((r - expected).abs() <= 1e-10 * expected, "{r} vs {expected}");
            }
            assert!(!rep.flagged);
            let (lo, hi) = mu0_cw_ratios(&p, &DVector::from_element(10, 1.0)).unwrap();
            assert!((lo - expected).abs() < 1e-12 && (hi - expected).abs() < 1e-12);
            let q = mu0_quotient(&p, &DVector::from_element(10, 1.0)).unwrap();
            assert!((q - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_infection_refused_by_bisection() {
        let g = unit(6);
        let k = Kernel::tent(0.5, 1).unwrap();
        let a = CoefficientField::constant(&g, dmatrix![-1.0]).unwrap();
        let f = CoefficientField::constant(&g, dmatrix![0.0]).unwrap();
        let p = WeightedProblem::system(&g, &[k], &[1.0], &a, &f).unwrap();
        assert_eq!(mu0_next_generation(&p, Mu0Options::default()).unwrap().mu0, 0.0);
        let err = mu0_bisection(&p, Mu0Options::default()).unwrap_err();
        assert!(err.is_refusal());
    }

    #[test]
    fn unstable_refused() {
        let g = unit(6);
        let k = Kernel::tent(0.5, 1).unwrap();
        let a = CoefficientField::constant(&g, dmatrix![0.1]).unwrap();
        let f = CoefficientField::constant(&g, dmatrix![1.0]).unwrap();
        let p = WeightedProblem::system(&g, &[k], &[1.0], &a, &f).unwrap();
        assert!(matches!(mu0_bisection(&p, Mu0Options::default()), Err(Error::NoMu0 { .. })));
        assert!(matches!(mu0_next_generation(&p, Mu0Options::default()), Err(Error::NoMu0 { .. })));
    }

    #[test]
    fn inadmissible_test_function_reported() {
        let p = constant_sis(6, 2.0, 1.0, 1.0, 1.0);
        let phi = DVector::from_vec(vec![1.0, 1.0, 1e-3, 1.0, 1.0, 1.0]);
        // The dip at node 2 makes −𝓛_∞φ negative at its neighbours.
        let mut spiky = phi.clone();
        spiky[3] = 100.0;
        let err = mu0_cw_ratios(&p, &spiky).unwrap_err();
        assert!(matches!(err, Error::InadmissibleTestFunction { species: 0, .. }));
    }

    #[test]
    fn sign_relation_constant_case() {
        let p = constant_sis(8, 2.0, 1.0, 1.0, 1.0);
        let samples = sign_relation_check(&p, &[0.5, 2.0], Mu0Options::default()).unwrap();
        assert!(samples[0].spectral_bound > 0.0 && samples[0].next_generation > 0.0);
        assert!((samples[0].next_generation - 1.0).abs() < 1e-10);
        assert!(samples[1].spectral_bound < 0.0 && samples[1].next_generation < 0.0);
        assert!(samples.iter().all(|s| s.agree));
    }
}
