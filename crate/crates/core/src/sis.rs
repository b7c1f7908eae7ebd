//! `R₀` of the nonlocal SIS model with saturated incidence
//! `βSI/(m+S+I)` and its limits in the dispersal rate `d_I` and the total
//! population density `K`.
//!
//! The linearization at the disease-free state `(K, 0)` gives the scalar
//! Neumann problem with `𝓛̂_∞ = d_I(K − row mass) − γ` and infection part
//! `Kβ/(m+K)`. `d_S` only enters the susceptible equation and therefore never
//! affects `R₀`; it is carried here for the simulator.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::WeightedProblem;
use crate::coefficients::{zero_set, CoefficientField, ScalarField, ZERO_SET_TOL};
use crate::error::{Error, Result};
use crate::grid::{kernel_row_masses, Kernel, SpatialGrid};
use crate::spectral::spectral_bound;
use crate::variational::{mu0_next_generation, mu0_rayleigh, solve_mu0, Mu0Options, R0Report};

/// Nodes with `γ` at or below this value are excluded from the small-`d_I`
/// supremum.
pub const GAMMA_ZERO_TOL: f64 = 1e-12;

/// At or below this `K` the power-iteration tolerance is tightened, since the
/// principal vector concentrates on the zero set of `m`.
pub const SMALL_K: f64 = 1e-4;

/// Relative slack allowed by the monotonicity checks.
pub const MONOTONE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SisParameters {
    pub grid: SpatialGrid,
    pub kernel: Kernel,
    pub d_s: f64,
    pub d_i: f64,
    pub beta: ScalarField,
    pub gamma: ScalarField,
    pub m_sat: ScalarField,
    pub k_total: f64,
}

impl SisParameters {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        grid: SpatialGrid,
        kernel: Kernel,
        d_s: f64,
        d_i: f64,
        beta: ScalarField,
        gamma: ScalarField,
        m_sat: ScalarField,
        k_total: f64,
    ) -> Result<Self> {
        let p = SisParameters {
            grid,
            kernel,
            d_s,
            d_i,
            beta,
            gamma,
            m_sat,
            k_total,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("d_S", self.d_s), ("d_I", self.d_i)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be nonnegative and finite, got {v}"),
                });
            }
        }
        if !(self.k_total > 0.0 && self.k_total.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "K",
                reason: format!("must be positive, got {}", self.k_total),
            });
        }
        let n = self.grid.len();
        for (name, f) in [("beta", &self.beta), ("gamma", &self.gamma), ("m", &self.m_sat)] {
            if f.len() != n {
                return Err(Error::SizeMismatch(format!("{name} has {} samples, grid has {n} nodes", f.len())));
            }
            if !f.is_nonnegative() {
                return Err(Error::InvalidField(format!("{name} must be nonnegative")));
            }
        }
        if self.beta.is_identically_zero() {
            return Err(Error::InvalidField("beta must not vanish identically".into()));
        }
        if self.gamma.is_identically_zero() {
            return Err(Error::InvalidField("gamma must not vanish identically".into()));
        }
        Ok(())
    }

    pub fn with_d_i(&self, d_i: f64) -> Self {
        SisParameters { d_i, ..self.clone() }
    }

    pub fn with_k(&self, k_total: f64) -> Self {
        SisParameters { k_total, ..self.clone() }
    }

    /// The weighted eigenvalue problem whose `μ₀` is `R₀`.
    pub fn problem(&self) -> Result<WeightedProblem> {
        WeightedProblem::sis(
            &self.grid,
            &self.kernel,
            self.d_i,
            &self.beta,
            &self.gamma,
            &self.m_sat,
            self.k_total,
        )
    }

    /// Nodes where `m` vanishes.
    pub fn degenerate_set(&self) -> Vec<usize> {
        zero_set(&self.m_sat, ZERO_SET_TOL)
    }
}

fn options_for(params: &SisParameters, opts: Mu0Options) -> Mu0Options {
    let mut o = opts;
    if params.k_total <= SMALL_K {
        o.power.tol = o.power.tol.min(1e-14);
    }
    o
}

/// `R₀` by every applicable route.
pub fn r0_sis(params: &SisParameters, opts: Mu0Options) -> Result<R0Report> {
    params.validate()?;
    let report = solve_mu0(&params.problem()?, options_for(params, opts))?;
    if report.flagged {
        log::warn!(
            "R0 routes disagree by {:e} (d_I = {}, K = {})",
            report.agreement,
            params.d_i,
            params.k_total
        );
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParameter {
    DispersalI,
    Population,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LimitDirection {
    DispersalToZero,
    DispersalToInfinity,
    PopulationToZero,
    PopulationToInfinity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitTarget {
    pub direction: LimitDirection,
    /// May be `+∞`.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub parameter: f64,
    pub report: R0Report,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitReport {
    pub parameter: SweepParameter,
    pub points: Vec<SweepPoint>,
    pub targets: Vec<LimitTarget>,
    /// Sandwich for the `K → 0` limit when `m` has zeros.
    pub bounds: Option<(f64, f64)>,
    /// Whether the sweep has the monotonicity the limit predicts.
    pub monotone: bool,
    /// Whether consecutive values differ by more than `1e-12` in the
    /// asserted direction.
    pub strictly_monotone: bool,
}

impl LimitReport {
    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.report.value()).collect()
    }

    pub fn target(&self, direction: LimitDirection) -> Option<f64> {
        self.targets.iter().find(|t| t.direction == direction).map(|t| t.value)
    }
}

pub const MAX_SWEEP_POINTS: usize = 10_000;

/// Log-spaced values from `lo` to `hi` inclusive with `per_decade`
/// points per decade. Endpoints are exact.
pub fn log_sweep(lo: f64, hi: f64, per_decade: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && hi.is_finite()) || per_decade == 0 {
        return Err(Error::InvalidParameter {
            name: "sweep",
            reason: format!("need 0 < lo < hi and a positive density, got [{lo}, {hi}] x {per_decade}"),
        });
    }
    let steps = ((hi / lo).log10() * per_decade as f64 - 1e-9).ceil().max(1.0);
    if steps > MAX_SWEEP_POINTS as f64 {
        return Err(Error::InvalidParameter {
            name: "sweep",
            reason: format!("more than {MAX_SWEEP_POINTS} points requested"),
        });
    }
    let steps = steps as usize;
    let ratio = (hi / lo).ln();
    let mut v: Vec<f64> = (0..steps)
        .map(|k| lo * (ratio * k as f64 / steps as f64).exp())
        .collect();
    v.push(hi);
    Ok(v)
}

fn check_sweep(values: &[f64], decades: f64) -> Result<()> {
    if values.is_empty() || values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidParameter {
            name: "sweep",
            reason: "values must be positive and finite".into(),
        });
    }
    if values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter {
            name: "sweep",
            reason: "values must be strictly increasing".into(),
        });
    }
    let span = (values[values.len() - 1] / values[0]).log10();
    if span < decades - 1e-9 {
        return Err(Error::InvalidParameter {
            name: "sweep",
            reason: format!("must span at least {decades} decades, spans {span:.3}"),
        });
    }
    Ok(())
}

fn monotone(values: &[f64], increasing: bool) -> (bool, bool) {
    let mut weak = true;
    let mut strict = true;
    for w in values.windows(2) {
        let step = if increasing { w[1] - w[0] } else { w[0] - w[1] };
        let slack = MONOTONE_SLACK * w[0].abs().max(w[1].abs()).max(1e-300);
        if step < -slack {
            weak = false;
        }
        if step <= 1e-12 {
            strict = false;
        }
    }
    (weak, strict)
}

fn sweep_reports(
    base: &SisParameters,
    values: &[f64],
    set: impl Fn(&SisParameters, f64) -> SisParameters + Sync,
    opts: Mu0Options,
) -> Result<Vec<SweepPoint>> {
    values
        .par_iter()
        .map(|&v| {
            let p = set(base, v);
            Ok(SweepPoint {
                parameter: v,
                report: r0_sis(&p, opts)?,
            })
        })
        .collect()
}

/// `lim_{d_I→0} R₀ = sup_{γ>0} Kβ/(γ(m+K))`, or `+∞` when `β > 0` at a node
/// where `γ` vanishes.
pub fn small_dispersal_target(params: &SisParameters) -> f64 {
    let k = params.k_total;
    let mut best = 0.0f64;
    for j in 0..params.grid.len() {
        let (b, g, m) = (params.beta.samples()[j], params.gamma.samples()[j], params.m_sat.samples()[j]);
        if g <= GAMMA_ZERO_TOL {
            if b > GAMMA_ZERO_TOL {
                return f64::INFINITY;
            }
            continue;
        }
        best = best.max(k * b / (g * (m + k)));
    }
    best
}

/// `lim_{d_I→∞} R₀ = ∫Kβ/(m+K) / ∫γ`.
pub fn large_dispersal_target(params: &SisParameters) -> f64 {
    let k = params.k_total;
    let f: Vec<f64> = params
        .beta
        .samples()
        .iter()
        .zip(params.m_sat.samples())
        .map(|(b, m)| k * b / (m + k))
        .collect();
    params.grid.integrate(&f) / params.grid.integrate(params.gamma.samples())
}

/// Sweeps `d_I` over an increasing grid spanning at least three decades.
pub fn limit_d_i(params: &SisParameters, d_i_values: &[f64], opts: Mu0Options) -> Result<LimitReport> {
    check_sweep(d_i_values, 3.0)?;
    let points = sweep_reports(params, d_i_values, |p, v| p.with_d_i(v), opts)?;
    let values: Vec<f64> = points.iter().map(|p| p.report.value()).collect();
    let (weak, strict) = monotone(&values, false);
    Ok(LimitReport {
        parameter: SweepParameter::DispersalI,
        points,
        targets: vec![
            LimitTarget {
                direction: LimitDirection::DispersalToZero,
                value: small_dispersal_target(params),
            },
            LimitTarget {
                direction: LimitDirection::DispersalToInfinity,
                value: large_dispersal_target(params),
            },
        ],
        bounds: None,
        monotone: weak,
        strictly_monotone: strict,
    })
}

/// `lim_{K→∞} R₀`: the weighted eigenvalue with infection part `β`.
pub fn large_population_target(params: &SisParameters, opts: Mu0Options) -> Result<f64> {
    let problem = params.problem()?;
    let beta = CoefficientField::from_scalar(&params.beta)?;
    let problem = problem.with_infection(&beta)?;
    if problem.symmetric() {
        Ok(mu0_rayleigh(&problem, opts)?.mu0)
    } else {
        Ok(mu0_next_generation(&problem, opts)?.mu0)
    }
}

/// Sweeps `K` over an increasing grid spanning at least four decades.
pub fn limit_k(params: &SisParameters, k_values: &[f64], opts: Mu0Options) -> Result<LimitReport> {
    check_sweep(k_values, 4.0)?;
    let points = sweep_reports(params, k_values, |p, v| p.with_k(v), opts)?;
    let values: Vec<f64> = points.iter().map(|p| p.report.value()).collect();
    let (weak, strict) = monotone(&values, true);
    let mut targets = vec![LimitTarget {
        direction: LimitDirection::PopulationToInfinity,
        value: large_population_target(params, opts)?,
    }];
    let bounds = if params.degenerate_set().is_empty() {
        targets.push(LimitTarget {
            direction: LimitDirection::PopulationToZero,
            value: 0.0,
        });
        None
    } else {
        let (lo, hi) = degenerate_sandwich(params, opts)?;
        // On a grid the zero set is finite, so the limit equals the lower
        // bound.
        targets.push(LimitTarget {
            direction: LimitDirection::PopulationToZero,
            value: lo,
        });
        Some((lo, hi))
    };
    Ok(LimitReport {
        parameter: SweepParameter::Population,
        points,
        targets,
        bounds,
        monotone: weak,
        strictly_monotone: strict,
    })
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else if den <= 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

/// Bounds on `lim_{K→0} R₀` when `m` vanishes on a nonempty set `Σ`:
/// `max_Σ β/(d_I·row mass + γ) ≤ lim ≤ max_Σ β/(−s(𝓛̂_∞))`.
pub fn degenerate_sandwich(params: &SisParameters, opts: Mu0Options) -> Result<(f64, f64)> {
    let sigma = params.degenerate_set();
    if sigma.is_empty() {
        return Err(Error::EmptyZeroSet);
    }
    let masses = kernel_row_masses(&params.grid, &params.kernel)?;
    let problem = params.problem()?;
    let s_inf = spectral_bound(problem.l_infinity(), opts.power)?.bound;
    if s_inf >= 0.0 {
        return Err(Error::NoMu0 { bound: s_inf });
    }
    let mut lower = 0.0f64;
    let mut upper = 0.0f64;
    for &j in &sigma {
        let b = params.beta.samples()[j];
        lower = lower.max(ratio(b, params.d_i * masses[j] + params.gamma.samples()[j]));
        upper = upper.max(b / -s_inf);
    }
    if lower > upper * (1.0 + 1e-10) {
        log::warn!("degenerate sandwich inverted: lower {lower} > upper {upper}");
    }
    Ok((lower, upper))
}

/// Pointwise lower bound `max_x Kβ/((m+K)(d_I·row mass + γ))` on `R₀`.
pub fn pointwise_lower_bound(params: &SisParameters) -> Result<f64> {
    let masses = kernel_row_masses(&params.grid, &params.kernel)?;
    let k = params.k_total;
    Ok((0..params.grid.len())
        .map(|j| {
            let (b, g, m) = (params.beta.samples()[j], params.gamma.samples()[j], params.m_sat.samples()[j]);
            ratio(k * b / (m + k), params.d_i * masses[j] + g)
        })
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundCheck {
    pub bound: f64,
    pub r0: f64,
    pub slack: f64,
    pub holds: bool,
}

/// Checks a computed `R₀` against [`pointwise_lower_bound`], allowing the
/// solver's relative tolerance.
pub fn check_pointwise_lower_bound(params: &SisParameters, r0: f64, tol: f64) -> Result<LowerBoundCheck> {
    let bound = pointwise_lower_bound(params)?;
    let slack = r0 - bound;
    Ok(LowerBoundCheck {
        bound,
        r0,
        slack,
        holds: slack >= -tol * bound.abs().max(1.0),
    })
}
