//! TOML run configuration.
//!
//! ```toml
//! problem = "sis"
//! seed = 7
//!
//! [grid]
//! x = [0.0, 1.0]
//! n = 64
//!
//! [kernel]
//! family = "tent"
//! radius = 0.3
//!
//! [sis]
//! d_i = 0.1
//! k = 1.0
//! beta = { bump = { base = 0.5, amplitude = 2.0, center = [0.3, 0.0], width = 0.15 } }
//! gamma = { constant = 1.0 }
//! m = { file = "m.csv" }
//! ```
//!
//! [`RunConfig::from_toml_str`] checks everything that can be checked from
//! the text alone. [`parse_config`] additionally resolves tabulated-field
//! paths against the config's directory and requires them to exist.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_l, AssembledOperator, WeightedProblem};
use crate::coefficients::{CoefficientField, ScalarField};
use crate::error::{Error, Result};
use crate::grid::{build_grid, Bounds, Kernel, KernelFamily, SpatialGrid};
use crate::sis::{log_sweep, SisParameters};
use crate::spectral::PowerOptions;
use crate::table::parse_table_rows;
use crate::variational::Mu0Options;

pub const DEFAULT_NODES: usize = 64;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_PER_DECADE: usize = 8;
/// Upper end of the admissible range `(0, MAX_TOL]` for every tolerance.
pub const MAX_TOL: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    Sis,
    System,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x: [f64; 2],
    pub y: Option<[f64; 2]>,
    #[serde(default = "default_nodes")]
    pub n: usize,
}

fn default_nodes() -> usize {
    DEFAULT_NODES
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelName {
    Uniform,
    Tent,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub family: KernelName,
    pub radius: f64,
    pub sigma: Option<f64>,
}

impl KernelSpec {
    pub fn family(&self) -> Result<KernelFamily> {
        let radius = self.radius;
        Ok(match (self.family, self.sigma) {
            (KernelName::Uniform, None) => KernelFamily::Uniform { radius },
            (KernelName::Tent, None) => KernelFamily::Tent { radius },
            (KernelName::Gaussian, Some(sigma)) => KernelFamily::TruncatedGaussian { sigma, radius },
            (KernelName::Gaussian, None) => return Err(Error::Config("gaussian kernel needs `sigma`".into())),
            (_, Some(_)) => return Err(Error::Config("`sigma` applies only to the gaussian kernel".into())),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarSpec {
    Constant(f64),
    Affine {
        intercept: f64,
        slope: [f64; 2],
    },
    Bump {
        base: f64,
        amplitude: f64,
        center: [f64; 2],
        width: f64,
    },
    /// One value per grid node.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MatrixSpec {
    /// Same matrix at every node.
    Constant(Vec<Vec<f64>>),
    /// Entrywise scalar fields.
    Entries(Vec<Vec<ScalarSpec>>),
    /// One row per grid node with `m²` row-major entries.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SisSpec {
    #[serde(default)]
    pub d_s: f64,
    pub d_i: f64,
    pub k: f64,
    pub beta: ScalarSpec,
    pub gamma: ScalarSpec,
    pub m: ScalarSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub dispersal: Vec<f64>,
    pub kernels: Vec<KernelSpec>,
    pub a: MatrixSpec,
    /// Omitted means `F ≡ 0`.
    pub f: Option<MatrixSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_power_tol")]
    pub power_tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub certificate_tol: f64,
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

fn default_power_tol() -> f64 {
    PowerOptions::default().tol
}

fn default_max_iter() -> usize {
    PowerOptions::default().max_iter
}

impl Default for SolverSpec {
    fn default() -> Self {
        SolverSpec {
            tol: DEFAULT_TOL,
            power_tol: default_power_tol(),
            max_iter: default_max_iter(),
            certificate_tol: DEFAULT_TOL,
        }
    }
}

impl SolverSpec {
    pub fn mu0_options(&self) -> Mu0Options {
        Mu0Options {
            tol: self.tol,
            power: self.power_options(),
        }
    }

    pub fn power_options(&self) -> PowerOptions {
        PowerOptions {
            tol: self.power_tol,
            max_iter: self.max_iter,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralSpec {
    /// Operator `𝓛_μ` to analyse; `inf` selects `𝓛_∞`.
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default = "default_true")]
    pub certificate: bool,
}

fn default_mu() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

impl Default for SpectralSpec {
    fn default() -> Self {
        SpectralSpec {
            mu: 1.0,
            certificate: true,
        }
    }
}

/// Either a log-spaced range or explicit values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeSpec {
    pub from: Option<f64>,
    pub to: Option<f64>,
    pub per_decade: Option<usize>,
    pub values: Option<Vec<f64>>,
}

impl RangeSpec {
    pub fn materialize(&self, key: &str) -> Result<Vec<f64>> {
        match (self.from, self.to, &self.values) {
            (Some(lo), Some(hi), None) => {
                log_sweep(lo, hi, self.per_decade.unwrap_or(DEFAULT_PER_DECADE)).map_err(|e| Error::Config(format!("{key}: {e}")))
            }
            (None, None, Some(v)) if self.per_decade.is_none() => {
                if v.is_empty() || v.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                    return Err(Error::Config(format!("{key}.values: must be positive and finite")));
                }
                Ok(v.clone())
            }
            _ => Err(Error::Config(format!(
                "{key}: give either `from`/`to` (and optionally `per_decade`) or `values`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub d_i: Option<RangeSpec>,
    pub k: Option<RangeSpec>,
    /// Samples for the sign comparison between `s(𝓛_μ)` and `r(Q)/μ − 1`.
    pub mu: Option<RangeSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    /// Defaults to the stability bound.
    pub dt: Option<f64>,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    /// Defaults to `K − I₀`.
    pub initial_s: Option<ScalarSpec>,
    pub initial_i: ScalarSpec,
}

fn default_t_end() -> f64 {
    50.0
}

fn default_record_every() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemKind,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads for sweeps; 0 lets the pool decide.
    #[serde(default)]
    pub threads: usize,
    pub grid: GridSpec,
    /// Dispersal kernel of the SIS model.
    pub kernel: Option<KernelSpec>,
    pub sis: Option<SisSpec>,
    pub system: Option<SystemSpec>,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub spectral: SpectralSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
    pub simulate: Option<SimulateSpec>,
    /// Directory that relative table paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn config_err(key: &str, reason: impl std::fmt::Display) -> Error {
    Error::Config(format!("{key}: {reason}"))
}

fn check_tol(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v <= MAX_TOL {
        Ok(())
    } else {
        Err(config_err(key, format!("must lie in (0, {MAX_TOL:e}], got {v}")))
    }
}

fn check_finite(key: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(config_err(key, format!("must be finite, got {v}")))
    }
}

fn check_nonneg(key: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(config_err(key, format!("must be nonnegative and finite, got {v}")))
    }
}

fn check_scalar(key: &str, spec: &ScalarSpec) -> Result<()> {
    match spec {
        ScalarSpec::Constant(v) => check_finite(key, *v),
        ScalarSpec::Affine { intercept, slope } => {
            check_finite(&format!("{key}.affine.intercept"), *intercept)?;
            slope.iter().try_for_each(|s| check_finite(&format!("{key}.affine.slope"), *s))
        }
        ScalarSpec::Bump {
            base,
            amplitude,
            center,
            width,
        } => {
            for (k, v) in [("base", *base), ("amplitude", *amplitude), ("center", center[0]), ("center", center[1])] {
                check_finite(&format!("{key}.bump.{k}"), v)?;
            }
            if *width > 0.0 && width.is_finite() {
                Ok(())
            } else {
                Err(config_err(&format!("{key}.bump.width"), format!("must be positive, got {width}")))
            }
        }
        ScalarSpec::File(_) => Ok(()),
    }
}

fn check_kernel(key: &str, spec: &KernelSpec, dim: usize) -> Result<()> {
    let family = spec.family().map_err(|e| config_err(key, e))?;
    Kernel::new(family, dim).map(|_| ()).map_err(|e| config_err(key, e))
}

fn check_matrix(key: &str, spec: &MatrixSpec, species: usize) -> Result<()> {
    match spec {
        MatrixSpec::Constant(_) | MatrixSpec::Entries(_) if species == 0 => Err(config_err(key, "no species")),
        MatrixSpec::Constant(rows) => {
            if rows.len() != species || rows.iter().any(|r| r.len() != species) {
                return Err(config_err(&format!("{key}.constant"), format!("must be {species}x{species}")));
            }
            rows.iter().flatten().try_for_each(|v| check_finite(&format!("{key}.constant"), *v))
        }
        MatrixSpec::Entries(rows) => {
            if rows.len() != species || rows.iter().any(|r| r.len() != species) {
                return Err(config_err(&format!("{key}.entries"), format!("must be {species}x{species}")));
            }
            for (i, row) in rows.iter().enumerate() {
                for (j, s) in row.iter().enumerate() {
                    check_scalar(&format!("{key}.entries[{i}][{j}]"), s)?;
                }
            }
            Ok(())
        }
        MatrixSpec::File(_) => Ok(()),
    }
}

fn check_range(key: &str, spec: &Option<RangeSpec>) -> Result<()> {
    if let Some(r) = spec {
        r.materialize(key)?;
    }
    Ok(())
}

impl RunConfig {
    /// Parses and validates a config from text. File references are not
    /// touched.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn dimension(&self) -> usize {
        if self.grid.y.is_some() {
            2
        } else {
            1
        }
    }

    fn validate(&self) -> Result<()> {
        let g = &self.grid;
        for (key, r) in [("grid.x", Some(g.x)), ("grid.y", g.y)] {
            if let Some([lo, hi]) = r {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(config_err(key, format!("need lo < hi, got [{lo}, {hi}]")));
                }
            }
        }
        if g.n == 0 || g.n > 4096 {
            return Err(config_err("grid.n", format!("must lie in 1..=4096, got {}", g.n)));
        }
        if self.dimension() == 2 && g.n > 64 {
            return Err(config_err("grid.n", "at most 64 nodes per axis in two dimensions"));
        }
        let s = &self.solver;
        check_tol("solver.tol", s.tol)?;
        check_tol("solver.power_tol", s.power_tol)?;
        check_tol("solver.certificate_tol", s.certificate_tol)?;
        if s.max_iter == 0 {
            return Err(config_err("solver.max_iter", "must be positive"));
        }
        let mu = self.spectral.mu;
        if !(mu > 0.0) {
            return Err(config_err("spectral.mu", format!("must be positive, got {mu}")));
        }
        check_range("sweep.d_i", &self.sweep.d_i)?;
        check_range("sweep.k", &self.sweep.k)?;
        check_range("sweep.mu", &self.sweep.mu)?;
        let dim = self.dimension();

        match self.problem {
            ProblemKind::Sis => {
                if self.system.is_some() {
                    return Err(config_err("system", "not allowed when problem = \"sis\""));
                }
                let kernel = self.kernel.as_ref().ok_or_else(|| config_err("kernel", "missing"))?;
                check_kernel("kernel", kernel, dim)?;
                let sis = self.sis.as_ref().ok_or_else(|| config_err("sis", "missing"))?;
                check_nonneg("sis.d_s", sis.d_s)?;
                check_nonneg("sis.d_i", sis.d_i)?;
                if !(sis.k > 0.0 && sis.k.is_finite()) {
                    return Err(config_err("sis.k", format!("must be positive, got {}", sis.k)));
                }
                check_scalar("sis.beta", &sis.beta)?;
                check_scalar("sis.gamma", &sis.gamma)?;
                check_scalar("sis.m", &sis.m)?;
                if let Some(sim) = &self.simulate {
                    if !(sim.t_end > 0.0 && sim.t_end.is_finite()) {
                        return Err(config_err("simulate.t_end", format!("must be positive, got {}", sim.t_end)));
                    }
                    if let Some(dt) = sim.dt {
                        if !(dt > 0.0 && dt.is_finite()) {
                            return Err(config_err("simulate.dt", format!("must be positive, got {dt}")));
                        }
                    }
                    if sim.record_every == 0 {
                        return Err(config_err("simulate.record_every", "must be positive"));
                    }
                    check_scalar("simulate.initial_i", &sim.initial_i)?;
                    if let Some(s0) = &sim.initial_s {
                        check_scalar("simulate.initial_s", s0)?;
                    }
                }
            }
            ProblemKind::System => {
                for key in ["kernel", "sis", "simulate"] {
                    let present = match key {
                        "kernel" => self.kernel.is_some(),
                        "sis" => self.sis.is_some(),
                        _ => self.simulate.is_some(),
                    };
                    if present {
                        return Err(config_err(key, "not allowed when problem = \"system\""));
                    }
                }
                if self.sweep.d_i.is_some() || self.sweep.k.is_some() {
                    return Err(config_err("sweep", "d_i and k sweeps apply only to the SIS model"));
                }
                let sys = self.system.as_ref().ok_or_else(|| config_err("system", "missing"))?;
                let m = sys.dispersal.len();
                if m == 0 {
                    return Err(config_err("system.dispersal", "needs at least one species"));
                }
                for (i, d) in sys.dispersal.iter().enumerate() {
                    check_nonneg(&format!("system.dispersal[{i}]"), *d)?;
                }
                if sys.kernels.len() != m {
                    return Err(config_err(
                        "system.kernels",
                        format!("expected {m} kernels, found {}", sys.kernels.len()),
                    ));
                }
                for (i, k) in sys.kernels.iter().enumerate() {
                    check_kernel(&format!("system.kernels[{i}]"), k, dim)?;
                }
                check_matrix("system.a", &sys.a, m)?;
                if let Some(f) = &sys.f {
                    check_matrix("system.f", f, m)?;
                }
            }
        }
        Ok(())
    }

    /// Every tabulated-field path, resolved against `base_dir`.
    pub fn referenced_files(&self) -> Vec<(String, PathBuf)> {
        let mut out = Vec::new();
        let mut scalar = |key: String, s: &ScalarSpec| {
            if let ScalarSpec::File(p) = s {
                out.push((key, self.base_dir.join(p)));
            }
        };
        if let Some(sis) = &self.sis {
            scalar("sis.beta".into(), &sis.beta);
            scalar("sis.gamma".into(), &sis.gamma);
            scalar("sis.m".into(), &sis.m);
        }
        if let Some(sim) = &self.simulate {
            scalar("simulate.initial_i".into(), &sim.initial_i);
            if let Some(s) = &sim.initial_s {
                scalar("simulate.initial_s".into(), s);
            }
        }
        let mut matrices = Vec::new();
        if let Some(sys) = &self.system {
            for (key, spec) in [("system.a", Some(&sys.a)), ("system.f", sys.f.as_ref())] {
                match spec {
                    Some(MatrixSpec::Entries(rows)) => {
                        for (i, row) in rows.iter().enumerate() {
                            for (j, s) in row.iter().enumerate() {
                                scalar(format!("{key}.entries[{i}][{j}]"), s);
                            }
                        }
                    }
                    Some(MatrixSpec::File(p)) => matrices.push((key.to_string(), self.base_dir.join(p))),
                    _ => {}
                }
            }
        }
        out.extend(matrices);
        out
    }

    pub fn build_grid(&self) -> Result<SpatialGrid> {
        let bounds = match self.grid.y {
            None => Bounds::interval(self.grid.x[0], self.grid.x[1]),
            Some(y) => Bounds::rectangle((self.grid.x[0], self.grid.x[1]), (y[0], y[1])),
        };
        build_grid(bounds, self.grid.n)
    }

    fn read(&self, key: &str, path: &Path) -> Result<String> {
        std::fs::read_to_string(self.base_dir.join(path))
            .map_err(|e| config_err(key, format!("cannot read {}: {e}", path.display())))
    }

    pub fn build_scalar(&self, key: &str, grid: &SpatialGrid, spec: &ScalarSpec) -> Result<ScalarField> {
        let f = match spec {
            ScalarSpec::Constant(v) => ScalarField::constant(grid, *v),
            ScalarSpec::Affine { intercept, slope } => ScalarField::affine(grid, *intercept, *slope),
            ScalarSpec::Bump {
                base,
                amplitude,
                center,
                width,
            } => ScalarField::gaussian_bump(grid, *base, *amplitude, *center, *width),
            ScalarSpec::File(p) => {
                let rows = parse_table_rows(&self.read(key, p)?, 1, grid.len()).map_err(|e| config_err(key, e))?;
                ScalarField::tabulated(grid, rows.into_iter().map(|r| r[0]).collect())
            }
        };
        f.map_err(|e| config_err(key, e))
    }

    fn build_matrix(&self, key: &str, grid: &SpatialGrid, spec: &MatrixSpec, m: usize) -> Result<CoefficientField> {
        let f = match spec {
            MatrixSpec::Constant(rows) => {
                CoefficientField::constant(grid, DMatrix::from_row_iterator(m, m, rows.iter().flatten().copied()))
            }
            MatrixSpec::Entries(rows) => {
                let mut fields = Vec::with_capacity(m * m);
                for (i, row) in rows.iter().enumerate() {
                    for (j, s) in row.iter().enumerate() {
                        fields.push(self.build_scalar(&format!("{key}.entries[{i}][{j}]"), grid, s)?);
                    }
                }
                CoefficientField::new(
                    (0..grid.len())
                        .map(|node| DMatrix::from_fn(m, m, |r, c| fields[r * m + c].samples()[node]))
                        .collect(),
                )
            }
            MatrixSpec::File(p) => {
                let rows = parse_table_rows(&self.read(key, p)?, m * m, grid.len()).map_err(|e| config_err(key, e))?;
                CoefficientField::tabulated(grid, m, &rows)
            }
        };
        f.map_err(|e| config_err(key, e))
    }

    pub fn build_kernel(&self, key: &str, spec: &KernelSpec) -> Result<Kernel> {
        Kernel::new(spec.family()?, self.dimension()).map_err(|e| config_err(key, e))
    }

    /// Assembles the problem described by the config, reading any tables.
    pub fn build(&self) -> Result<Problem> {
        let grid = self.build_grid()?;
        match self.problem {
            ProblemKind::Sis => {
                let sis = self.sis.as_ref().ok_or_else(|| config_err("sis", "missing"))?;
                let kernel = self.build_kernel("kernel", self.kernel.as_ref().ok_or_else(|| config_err("kernel", "missing"))?)?;
                let params = SisParameters::new(
                    grid.clone(),
                    kernel,
                    sis.d_s,
                    sis.d_i,
                    self.build_scalar("sis.beta", &grid, &sis.beta)?,
                    self.build_scalar("sis.gamma", &grid, &sis.gamma)?,
                    self.build_scalar("sis.m", &grid, &sis.m)?,
                    sis.k,
                )
                .map_err(|e| config_err("sis", e))?;
                Ok(Problem::Sis(params))
            }
            ProblemKind::System => {
                let sys = self.system.as_ref().ok_or_else(|| config_err("system", "missing"))?;
                let m = sys.dispersal.len();
                let kernels = sys
                    .kernels
                    .iter()
                    .enumerate()
                    .map(|(i, k)| self.build_kernel(&format!("system.kernels[{i}]"), k))
                    .collect::<Result<Vec<_>>>()?;
                let a = self.build_matrix("system.a", &grid, &sys.a, m)?;
                let f = match &sys.f {
                    Some(spec) => self.build_matrix("system.f", &grid, spec, m)?,
                    None => CoefficientField::constant(&grid, DMatrix::zeros(m, m))?,
                };
                Ok(Problem::System(SystemProblem {
                    grid,
                    kernels,
                    dispersal: sys.dispersal.clone(),
                    a,
                    f,
                }))
            }
        }
    }
}

/// Reads, validates and checks the referenced files of a config.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = RunConfig::from_toml_str(&text)?;
    cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    for (key, file) in cfg.referenced_files() {
        if !file.is_file() {
            return Err(config_err(&key, format!("file not found: {}", file.display())));
        }
    }
    Ok(cfg)
}

/// A cooperative system `u' = D𝒦u + A u + F u`, in its raw fields.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemProblem {
    pub grid: SpatialGrid,
    pub kernels: Vec<Kernel>,
    pub dispersal: Vec<f64>,
    pub a: CoefficientField,
    pub f: CoefficientField,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Problem {
    Sis(SisParameters),
    System(SystemProblem),
}

impl Problem {
    pub fn grid(&self) -> &SpatialGrid {
        match self {
            Problem::Sis(p) => &p.grid,
            Problem::System(s) => &s.grid,
        }
    }

    pub fn weighted(&self) -> Result<WeightedProblem> {
        match self {
            Problem::Sis(p) => p.problem(),
            Problem::System(s) => WeightedProblem::system(&s.grid, &s.kernels, &s.dispersal, &s.a, &s.f),
        }
    }

    /// `𝓛_μ`. For systems the reaction is `A + F/μ` (just `A` when `F ≡ 0`
    /// or `μ = ∞`), so systems with indefinite `A` are admitted.
    pub fn operator(&self, mu: f64) -> Result<AssembledOperator> {
        match self {
            Problem::Sis(_) => self.weighted()?.at(mu),
            Problem::System(s) => {
                let m = if mu.is_finite() && !s.f.is_identically_zero() {
                    s.a.add_scaled(&s.f, 1.0 / mu)?
                } else {
                    s.a.clone()
                };
                assemble_l(&s.grid, &s.kernels, &s.dispersal, &m)
            }
        }
    }
}
