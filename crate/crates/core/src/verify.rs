//! Invariant suite run by `nlr0 verify`.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_epsilon_approx, AssembledOperator};
use crate::config::Problem;
use crate::error::{Error, Result};
use crate::grid::{kernel_row_masses, Kernel, SpatialGrid};
use crate::simulator::Simulator;
use crate::sis::{check_pointwise_lower_bound, log_sweep, r0_sis, SisParameters};
use crate::spectral::{
    compute_alpha, essential_bound, rayleigh_bound, rayleigh_quotient, spectral_bound, PowerOptions,
};
use crate::variational::{
    check_cw_preconditions, cw_certificate, cw_ratios, sign_relation_check, solve_mu0, Mu0Options,
};

pub const RANDOM_VECTORS: usize = 100;
pub const ROUTE_TOL: f64 = 1e-6;
pub const RAYLEIGH_ROUTE_TOL: f64 = 1e-8;
pub const RAYLEIGH_BOUND_TOL: f64 = 1e-8;
pub const RAYLEIGH_EXCESS_TOL: f64 = 1e-10;
pub const CONSERVATION_TOL: f64 = 1e-8;
pub const EPSILONS: [f64; 3] = [0.2, 0.1, 0.05];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        CheckResult {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        }
    }

    fn from_result(name: &str, r: Result<(bool, String)>) -> Self {
        match r {
            Ok((passed, detail)) => Self::new(name, passed, detail),
            Err(e) => Self::new(name, false, format!("error: {e}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn slack(v: f64) -> f64 {
    1e-10 * v.abs().max(1.0)
}

/// Strictly positive vector with entries in `[0.05, 1.05)`.
pub fn random_positive(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| 0.05 + rng.random::<f64>())
}

/// Unit vector in the weighted inner product.
pub fn random_unit(rng: &mut impl Rng, weights: &[f64]) -> DVector<f64> {
    let v = DVector::from_fn(weights.len(), |_, _| rng.random::<f64>() * 2.0 - 1.0);
    let norm: f64 = v.iter().zip(weights).map(|(x, w)| w * x * x).sum::<f64>().sqrt();
    v / norm
}

fn check_sandwich(op: &AssembledOperator, s: f64, rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..RANDOM_VECTORS {
        let phi = random_positive(rng, op.dim());
        let (lo, hi) = cw_ratios(op, &phi)?;
        worst = worst.max(lo - s).max(s - hi);
    }
    Ok((worst <= slack(s), format!("s = {s:e}, worst violation {worst:e}")))
}

fn check_certificate(op: &AssembledOperator, s: f64, tol: f64, max_iter: usize) -> Result<(bool, String)> {
    if let Err(e) = check_cw_preconditions(op) {
        let refused = matches!(cw_certificate(op, tol, max_iter), Err(Error::IrreducibilityRefused(_)));
        return Ok((refused, format!("refused as expected: {e}")));
    }
    let cert = cw_certificate(op, tol, max_iter)?;
    let nonincreasing = cert.gaps.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-15);
    let brackets = cert.lower - slack(s) * 1e-2 <= s && s <= cert.upper + slack(s) * 1e-2;
    Ok((
        cert.gap <= tol && nonincreasing && brackets,
        format!(
            "[{:e}, {:e}] gap {:e} after {} iterations, gaps nonincreasing: {nonincreasing}",
            cert.lower, cert.upper, cert.gap, cert.iterations
        ),
    ))
}

fn check_rayleigh(op: &AssembledOperator, s: f64, opts: PowerOptions, rng: &mut ChaCha8Rng) -> Result<(bool, String)> {
    let rep = match rayleigh_bound(op, opts) {
        Ok(r) => r,
        Err(Error::NotSelfAdjoint { asymmetry }) => {
            return Ok((true, format!("skipped: operator not symmetric ({asymmetry:e})")))
        }
        Err(e) => return Err(e),
    };
    let diff = (rep.bound - s).abs();
    let mut excess = f64::NEG_INFINITY;
    for _ in 0..RANDOM_VECTORS {
        let v = random_unit(rng, op.weights());
        excess = excess.max(rayleigh_quotient(op, &v)? - rep.bound);
    }
    Ok((
        diff <= RAYLEIGH_BOUND_TOL && excess <= RAYLEIGH_EXCESS_TOL,
        format!("|rayleigh - power| = {diff:e}, max excess {excess:e}"),
    ))
}

fn check_epsilon(op: &AssembledOperator, s: f64, opts: PowerOptions) -> Result<(bool, String)> {
    let mut ok = true;
    let mut prev = f64::NEG_INFINITY;
    let mut detail = Vec::new();
    for eps in EPSILONS {
        let approx = assemble_epsilon_approx(op, op.reaction(), eps)?;
        let se = spectral_bound(&approx, opts)?.bound;
        ok &= se <= s + slack(s) && s <= se + 2.0 * eps + slack(s);
        ok &= se >= prev - slack(se);
        prev = se;
        detail.push(format!("eps {eps}: {se:e}"));
    }
    Ok((ok, detail.join(", ")))
}

fn check_mu_monotone(problem: &Problem, opts: PowerOptions) -> Result<(bool, String)> {
    let weighted = problem.weighted()?;
    if weighted.infection().is_identically_zero() {
        return Ok((true, "skipped: F vanishes".into()));
    }
    let mus = log_sweep(1e-2, 1e2, 2)?;
    let mut values = Vec::with_capacity(mus.len());
    for &mu in &mus {
        values.push(spectral_bound(&weighted.at(mu)?, opts)?.bound);
    }
    let ok = values.windows(2).all(|w| w[1] <= w[0] + slack(w[0]));
    Ok((ok, format!("s over mu in [1e-2, 1e2]: {:e} .. {:e}", values[0], values[values.len() - 1])))
}

fn check_routes(problem: &Problem, opts: Mu0Options) -> Result<(bool, String)> {
    let weighted = problem.weighted()?;
    let rep = match solve_mu0(&weighted, opts) {
        Ok(r) => r,
        Err(e) if e.is_refusal() => return Ok((true, format!("refused: {e}"))),
        Err(e) => return Err(e),
    };
    let mut ok = (rep.mu0_bisection - rep.mu0_next_generation).abs() <= ROUTE_TOL;
    if let Some(r) = rep.mu0_rayleigh {
        ok &= (r - rep.mu0_next_generation).abs() <= RAYLEIGH_ROUTE_TOL;
    }
    let tol = opts.tol * rep.mu0_bisection.abs().max(1.0);
    ok &= rep.cw_lower - tol <= rep.mu0_bisection && rep.mu0_bisection <= rep.cw_upper + tol;
    Ok((
        ok,
        format!(
            "bisection {:e}, next-generation {:e}, rayleigh {:?}, bracket [{:e}, {:e}]",
            rep.mu0_bisection, rep.mu0_next_generation, rep.mu0_rayleigh, rep.cw_lower, rep.cw_upper
        ),
    ))
}

fn check_sign_relation(problem: &Problem, opts: Mu0Options) -> Result<(bool, String)> {
    let weighted = problem.weighted()?;
    let mus = log_sweep(1e-2, 1e2, 2)?;
    match sign_relation_check(&weighted, &mus, opts) {
        Ok(samples) => {
            let bad = samples.iter().filter(|s| !s.agree).count();
            Ok((bad == 0, format!("{} samples, {bad} disagreements", samples.len())))
        }
        Err(e) if e.is_refusal() || matches!(e, Error::NoMu0 { .. }) => Ok((true, format!("refused: {e}"))),
        Err(e) => Err(e),
    }
}

fn check_alpha(grid: &SpatialGrid, kernels: &[Kernel], opts: PowerOptions) -> Result<(bool, String)> {
    let mut ok = true;
    let mut detail = Vec::new();
    for k in kernels {
        let alpha = compute_alpha(grid, k, opts)?;
        let min_mass = kernel_row_masses(grid, k)?.min();
        ok &= alpha <= min_mass + 1e-10 && alpha >= -1e-10;
        detail.push(format!("alpha {alpha:e} <= min mass {min_mass:e}"));
    }
    Ok((ok, detail.join("; ")))
}

fn check_lower_bound(params: &SisParameters, opts: Mu0Options) -> Result<(bool, String)> {
    let r0 = r0_sis(params, opts)?.value();
    let chk = check_pointwise_lower_bound(params, r0, 1e-9)?;
    Ok((chk.holds, format!("R0 {:e} >= bound {:e} (slack {:e})", chk.r0, chk.bound, chk.slack)))
}

fn check_simulator(params: &SisParameters) -> Result<(bool, String)> {
    let sim = Simulator::new(params)?;
    let n = params.grid.len();
    let k = params.k_total;
    let i0 = DVector::from_fn(n, |j, _| 1e-3 * k * (1.0 + 0.5 * (j as f64).sin()));
    let s0 = DVector::from_element(n, k) - &i0;
    let traj = sim.run(s0, i0, 5.0, sim.stable_dt())?;
    let drift = traj.max_drift();
    let min_i = traj.rows.iter().map(|r| r.min_i).fold(f64::INFINITY, f64::min);

    let dfe = sim.initial_state(DVector::from_element(n, k), DVector::zeros(n), sim.stable_dt())?;
    let next = sim.step(&dfe)?;
    let moved = (next.s.add_scalar(-k)).amax().max(next.i.amax());
    Ok((
        drift <= CONSERVATION_TOL && min_i >= 0.0 && moved <= 1e-14 * k.max(1.0),
        format!("drift {drift:e}, min I {min_i:e}, disease-free step moved {moved:e}"),
    ))
}

/// Runs every applicable invariant check on `problem`. `mu` selects the
/// operator `𝓛_μ` that the spectral checks examine.
pub fn run_checks(problem: &Problem, mu: f64, opts: Mu0Options, cert_tol: f64, seed: u64) -> VerifyReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();
    let power = opts.power;

    match problem.operator(mu).and_then(|op| spectral_bound(&op, power).map(|r| (op, r))) {
        Ok((op, rep)) => {
            let s = rep.bound;
            checks.push(CheckResult::from_result(
                "essential-bound",
                essential_bound(op.reaction()).map(|e| (s >= e - slack(e), format!("s {s:e} >= {e:e}"))),
            ));
            checks.push(CheckResult::from_result("cw-sandwich", check_sandwich(&op, s, &mut rng)));
            checks.push(CheckResult::from_result(
                "cw-certificate",
                check_certificate(&op, s, cert_tol, power.max_iter),
            ));
            checks.push(CheckResult::from_result("rayleigh", check_rayleigh(&op, s, power, &mut rng)));
            checks.push(CheckResult::from_result("epsilon-sandwich", check_epsilon(&op, s, power)));
        }
        Err(e) => checks.push(CheckResult::new("spectral-bound", false, format!("error: {e}"))),
    }
    checks.push(CheckResult::from_result("mu-monotone", check_mu_monotone(problem, power)));
    checks.push(CheckResult::from_result("mu0-routes", check_routes(problem, opts)));
    checks.push(CheckResult::from_result("sign-relation", check_sign_relation(problem, opts)));
    let kernels: Vec<Kernel> = match problem {
        Problem::Sis(p) => vec![p.kernel],
        Problem::System(s) => s.kernels.clone(),
    };
    checks.push(CheckResult::from_result("alpha", check_alpha(problem.grid(), &kernels, power)));
    if let Problem::Sis(p) = problem {
        checks.push(CheckResult::from_result("pointwise-lower-bound", check_lower_bound(p, opts)));
        checks.push(CheckResult::from_result("simulator", check_simulator(p)));
    }
    VerifyReport { seed, checks }
}
