//! Dense discretizations of the nonlocal dispersal operators.
//!
//! Unknowns are laid out species-major: index `i·n + j` holds species `i`
//! at node `j`. The dispersal part of species `i` is `d_i` times the kernel
//! matrix of its kernel; the reaction part couples species at the same node.

use nalgebra::{DMatrix, DVector};

use crate::coefficients::{CoefficientField, ScalarField};
use crate::error::{Error, Result};
use crate::grid::{kernel_matrix, kernel_row_masses, Kernel, SpatialGrid};
use crate::spectral::{diagonal_shift, nodewise_bounds, spectral_bound, PowerOptions};

/// Dense Metzler matrix discretizing `L`, `𝓛_μ`, `𝓛_∞` or the SIS
/// operator, with the data the solvers need alongside it.
#[derive(Debug, Clone, PartialEq)]
pub struct AssembledOperator {
    matrix: DMatrix<f64>,
    species: usize,
    nodes: usize,
    dispersal: Vec<f64>,
    neumann: bool,
    shift_c: f64,
    weights: Vec<f64>,
    reaction: CoefficientField,
    kernels_resolve: bool,
}

impl AssembledOperator {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn species(&self) -> usize {
        self.species
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    /// Matrix dimension `species · nodes`.
    pub fn dim(&self) -> usize {
        self.species * self.nodes
    }

    pub fn dispersal(&self) -> &[f64] {
        &self.dispersal
    }

    /// Whether the `−d_i (∫_Ω J_i(x−y)dy) φ_i(x)` term is part of the matrix.
    pub fn neumann(&self) -> bool {
        self.neumann
    }

    /// Shift making `matrix + shift_c·I` entrywise nonnegative.
    pub fn shift_c(&self) -> f64 {
        self.shift_c
    }

    /// Quadrature weight attached to every unknown.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// The node-local part of the operator, including the Neumann row-mass
    /// term when present.
    pub fn reaction(&self) -> &CoefficientField {
        &self.reaction
    }

    /// Whether every kernel support spans at least two grid spacings.
    pub fn kernels_resolve(&self) -> bool {
        self.kernels_resolve
    }

    /// `L φ`.
    pub fn apply(&self, phi: &DVector<f64>) -> DVector<f64> {
        &self.matrix * phi
    }

    /// True when any species has zero dispersal.
    pub fn partially_degenerate(&self) -> bool {
        self.dispersal.contains(&0.0)
    }

    fn with_matrix_and_reaction(&self, matrix: DMatrix<f64>, reaction: CoefficientField) -> Self {
        AssembledOperator {
            shift_c: diagonal_shift(&matrix),
            matrix,
            reaction,
            ..self.clone()
        }
    }
}

/// Adds the node-local coupling of `field` to `matrix`.
fn add_reaction(matrix: &mut DMatrix<f64>, field: &CoefficientField, scale: f64) {
    let m = field.species();
    let n = field.len();
    for (j, s) in field.samples().iter().enumerate() {
        for r in 0..m {
            for c in 0..m {
                let v = s[(r, c)];
                if v != 0.0 {
                    matrix[(r * n + j, c * n + j)] += scale * v;
                }
            }
        }
    }
}

/// Block matrix of a coefficient field alone (no dispersal).
pub fn reaction_block(field: &CoefficientField) -> DMatrix<f64> {
    let dim = field.species() * field.len();
    let mut out = DMatrix::zeros(dim, dim);
    add_reaction(&mut out, field, 1.0);
    out
}

fn validate_dispersal(dispersal: &[f64], species: usize) -> Result<()> {
    if dispersal.len() != species {
        return Err(Error::SizeMismatch(format!(
            "{} dispersal rates for {species} species",
            dispersal.len()
        )));
    }
    if let Some(d) = dispersal.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
        return Err(Error::InvalidParameter {
            name: "dispersal",
            reason: format!("rates must be finite and nonnegative, got {d}"),
        });
    }
    Ok(())
}

/// Discretization of `Lφ = D[𝒥φ] + Mφ`.
pub fn assemble_l(
    grid: &SpatialGrid,
    kernels: &[Kernel],
    dispersal: &[f64],
    m: &CoefficientField,
) -> Result<AssembledOperator> {
    let species = m.species();
    let n = grid.len();
    if kernels.len() != species {
        return Err(Error::SizeMismatch(format!(
            "{} kernels for {species} species",
            kernels.len()
        )));
    }
    validate_dispersal(dispersal, species)?;
    if m.len() != n {
        return Err(Error::SizeMismatch(format!(
            "field has {} samples, grid has {n} nodes",
            m.len()
        )));
    }

    let dim = species * n;
    let mut matrix = DMatrix::zeros(dim, dim);
    for (i, (kernel, &d)) in kernels.iter().zip(dispersal).enumerate() {
        if d == 0.0 {
            continue;
        }
        let km = kernel_matrix(grid, kernel)?;
        let mut block = matrix.view_mut((i * n, i * n), (n, n));
        block += km * d;
    }
    add_reaction(&mut matrix, m, 1.0);

    let weights = (0..species).flat_map(|_| grid.weights().iter().copied()).collect();
    let kernels_resolve = kernels
        .iter()
        .zip(dispersal)
        .all(|(k, &d)| d == 0.0 || k.resolves(grid));
    Ok(AssembledOperator {
        shift_c: diagonal_shift(&matrix),
        matrix,
        species,
        nodes: n,
        dispersal: dispersal.to_vec(),
        neumann: false,
        weights,
        reaction: m.clone(),
        kernels_resolve,
    })
}

fn check_reaction_fields(a: &CoefficientField, f: &CoefficientField) -> Result<()> {
    if !a.flags().cooperative {
        return Err(Error::InvalidField("A must be cooperative".into()));
    }
    if !f.flags().nonnegative {
        return Err(Error::InvalidField("F must be nonnegative".into()));
    }
    Ok(())
}

fn check_mu(mu: f64) -> Result<()> {
    if !(mu > 0.0) || mu.is_nan() {
        return Err(Error::InvalidParameter {
            name: "mu",
            reason: format!("must be positive, got {mu}"),
        });
    }
    Ok(())
}

/// Discretization of `𝓛_μ = D[𝒥φ] + Aφ + (1/μ)Fφ`.
pub fn assemble_lmu(
    grid: &SpatialGrid,
    kernels: &[Kernel],
    dispersal: &[f64],
    a: &CoefficientField,
    f: &CoefficientField,
    mu: f64,
) -> Result<AssembledOperator> {
    check_mu(mu)?;
    if !mu.is_finite() {
        return Err(Error::InvalidParameter {
            name: "mu",
            reason: "must be finite; use assemble_l_infinity".into(),
        });
    }
    check_reaction_fields(a, f)?;
    if f.is_identically_zero() {
        return Err(Error::ZeroInfection);
    }
    let reaction = a.add_scaled(f, 1.0 / mu)?;
    assemble_l(grid, kernels, dispersal, &reaction)
}

/// Discretization of `𝓛_∞ = D[𝒥φ] + Aφ`.
pub fn assemble_l_infinity(
    grid: &SpatialGrid,
    kernels: &[Kernel],
    dispersal: &[f64],
    a: &CoefficientField,
) -> Result<AssembledOperator> {
    if !a.flags().cooperative {
        return Err(Error::InvalidField("A must be cooperative".into()));
    }
    assemble_l(grid, kernels, dispersal, a)
}

/// Scalar SIS operator
/// `d_I∫_Ω J(x−y)[φ(y)−φ(x)]dy − γφ + Kβ/(μ(m+K)) φ`; `mu = ∞` drops the
/// infection term.
#[allow(clippy::too_many_arguments)]
pub fn assemble_sis(
    grid: &SpatialGrid,
    kernel: &Kernel,
    d_i: f64,
    beta: &ScalarField,
    gamma: &ScalarField,
    m_sat: &ScalarField,
    k_total: f64,
    mu: f64,
) -> Result<AssembledOperator> {
    if !(k_total > 0.0 && k_total.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "K",
            reason: format!("must be positive, got {k_total}"),
        });
    }
    check_mu(mu)?;
    if !(d_i >= 0.0 && d_i.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "d_I",
            reason: format!("must be nonnegative, got {d_i}"),
        });
    }
    let n = grid.len();
    for (name, field) in [("beta", beta), ("gamma", gamma), ("m", m_sat)] {
        if field.len() != n {
            return Err(Error::SizeMismatch(format!(
                "{name} has {} samples, grid has {n} nodes",
                field.len()
            )));
        }
        if !field.is_nonnegative() {
            return Err(Error::InvalidField(format!("{name} must be nonnegative")));
        }
    }

    let masses = kernel_row_masses(grid, kernel)?;
    let infection = sis_infection(beta, m_sat, k_total);
    let reaction: Vec<f64> = (0..n)
        .map(|j| -d_i * masses[j] - gamma.samples()[j] + infection[j] / mu)
        .collect();

    let mut matrix = if d_i > 0.0 {
        kernel_matrix(grid, kernel)? * d_i
    } else {
        DMatrix::zeros(n, n)
    };
    for (j, r) in reaction.iter().enumerate() {
        matrix[(j, j)] += r;
    }
    let reaction = CoefficientField::new(reaction.into_iter().map(|v| DMatrix::from_element(1, 1, v)).collect())?;
    Ok(AssembledOperator {
        shift_c: diagonal_shift(&matrix),
        matrix,
        species: 1,
        nodes: n,
        dispersal: vec![d_i],
        neumann: true,
        weights: grid.weights().to_vec(),
        reaction,
        kernels_resolve: d_i == 0.0 || kernel.resolves(grid),
    })
}

/// `Kβ(x)/(m(x)+K)` at every node.
pub fn sis_infection(beta: &ScalarField, m_sat: &ScalarField, k_total: f64) -> Vec<f64> {
    beta.samples()
        .iter()
        .zip(m_sat.samples())
        .map(|(b, m)| k_total * b / (m + k_total))
        .collect()
}

/// Per-node bounds `s(M(x_j))`, their maximum `λ`, and membership of each
/// node in `Ω_ε = {x : s(M(x)) ≥ λ − ε}`.
pub fn omega_epsilon(m: &CoefficientField, eps: f64) -> Result<(Vec<f64>, f64, Vec<bool>)> {
    let bounds = nodewise_bounds(m, PowerOptions::default())?;
    let lambda = bounds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let member = bounds.iter().map(|&s| s >= lambda - eps).collect();
    Ok((bounds, lambda, member))
}

/// The lower approximation `L^ε`: the diagonal of `M` is lowered by
/// `2ε + s(M(x)) − λ` on `Ω_ε` and by `ε` elsewhere, so that
/// `M^ε ≤ M ≤ M^ε + 2ε` and `s(M^ε(x)) ≤ λ − 2ε` with equality on `Ω_ε`.
pub fn assemble_epsilon_approx(l: &AssembledOperator, m: &CoefficientField, eps: f64) -> Result<AssembledOperator> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "eps",
            reason: format!("must be positive, got {eps}"),
        });
    }
    if !m.flags().cooperative {
        return Err(Error::InvalidField("M must be cooperative".into()));
    }
    if m.species() != l.species() || m.len() != l.nodes() {
        return Err(Error::SizeMismatch("field does not match operator".into()));
    }
    let (bounds, lambda, member) = omega_epsilon(m, eps)?;
    let n = l.nodes();
    let species = l.species();
    let mut matrix = l.matrix().clone();
    let mut samples = l.reaction().samples().to_vec();
    for j in 0..n {
        let lower_by = if member[j] {
            2.0 * eps + bounds[j] - lambda
        } else {
            eps
        };
        for i in 0..species {
            matrix[(i * n + j, i * n + j)] -= lower_by;
            samples[j][(i, i)] -= lower_by;
        }
    }
    let reaction = CoefficientField::new(samples)?;
    Ok(l.with_matrix_and_reaction(matrix, reaction))
}

/// A family `μ ↦ 𝓛_μ` sharing one `𝓛_∞` and one infection field `F`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedProblem {
    l_infinity: AssembledOperator,
    infection: CoefficientField,
    infection_block: DMatrix<f64>,
}

impl WeightedProblem {
    /// General cooperative system `(D, J_i, A, F)`.
    pub fn system(
        grid: &SpatialGrid,
        kernels: &[Kernel],
        dispersal: &[f64],
        a: &CoefficientField,
        f: &CoefficientField,
    ) -> Result<Self> {
        check_reaction_fields(a, f)?;
        if a.species() != f.species() || a.len() != f.len() {
            return Err(Error::SizeMismatch("A and F differ in shape".into()));
        }
        let l_infinity = assemble_l_infinity(grid, kernels, dispersal, a)?;
        Ok(WeightedProblem {
            infection_block: reaction_block(f),
            infection: f.clone(),
            l_infinity,
        })
    }

    /// Scalar SIS problem with `F = Kβ/(m+K)`.
    #[allow(clippy::too_many_arguments)]
    pub fn sis(
        grid: &SpatialGrid,
        kernel: &Kernel,
        d_i: f64,
        beta: &ScalarField,
        gamma: &ScalarField,
        m_sat: &ScalarField,
        k_total: f64,
    ) -> Result<Self> {
        let l_infinity = assemble_sis(grid, kernel, d_i, beta, gamma, m_sat, k_total, f64::INFINITY)?;
        let values = sis_infection(beta, m_sat, k_total);
        let infection = CoefficientField::new(values.into_iter().map(|v| DMatrix::from_element(1, 1, v)).collect())?;
        Ok(WeightedProblem {
            infection_block: reaction_block(&infection),
            infection,
            l_infinity,
        })
    }

    /// Same `𝓛_∞` with a different infection field.
    pub fn with_infection(&self, f: &CoefficientField) -> Result<Self> {
        if !f.flags().nonnegative {
            return Err(Error::InvalidField("F must be nonnegative".into()));
        }
        if f.species() != self.infection.species() || f.len() != self.infection.len() {
            return Err(Error::SizeMismatch("infection field does not match".into()));
        }
        Ok(WeightedProblem {
            l_infinity: self.l_infinity.clone(),
            infection: f.clone(),
            infection_block: reaction_block(f),
        })
    }

    pub fn l_infinity(&self) -> &AssembledOperator {
        &self.l_infinity
    }

    pub fn infection(&self) -> &CoefficientField {
        &self.infection
    }

    /// `F` in the block layout of the assembled operators.
    pub fn infection_block(&self) -> &DMatrix<f64> {
        &self.infection_block
    }

    /// `𝓛_μ = 𝓛_∞ + F/μ`.
    pub fn at(&self, mu: f64) -> Result<AssembledOperator> {
        check_mu(mu)?;
        if !mu.is_finite() {
            return Ok(self.l_infinity.clone());
        }
        if self.infection.is_identically_zero() {
            return Err(Error::ZeroInfection);
        }
        let matrix = self.l_infinity.matrix() + &self.infection_block / mu;
        let reaction = self.l_infinity.reaction().add_scaled(&self.infection, 1.0 / mu)?;
        Ok(self.l_infinity.with_matrix_and_reaction(matrix, reaction))
    }

    /// Whether both `𝓛_∞` and `F` are symmetric in the block layout.
    pub fn symmetric(&self) -> bool {
        use crate::spectral::{asymmetry, SYMMETRY_TOL};
        asymmetry(self.l_infinity.matrix()) <= SYMMETRY_TOL && asymmetry(&self.infection_block) <= SYMMETRY_TOL
    }
}

/// Threshold below which a negative next-generation entry is a genuine
/// violation rather than rounding.
pub const NEXT_GENERATION_NEGATIVE_TOL: f64 = 1e-10;

/// The next-generation matrix `Q = −F 𝓛_∞⁻¹` with its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct NextGeneration {
    pub q: DMatrix<f64>,
    /// Entries in `[−1e-10, 0)` that were set to zero.
    pub clamped: usize,
    /// `s(𝓛_∞)` as verified before factorization.
    pub l_infinity_bound: f64,
}

impl WeightedProblem {
    /// Builds `Q` from an LU factorization of `𝓛_∞`: `Qᵀ = −𝓛_∞⁻ᵀ Fᵀ` is
    /// obtained column by column from the transposed system.
    pub fn next_generation(&self, opts: PowerOptions) -> Result<NextGeneration> {
        let bound = spectral_bound(&self.l_infinity, opts)?.bound;
        if bound >= 0.0 {
            return Err(Error::NextGenerationUndefined { bound });
        }
        let lt = self.l_infinity.matrix().transpose();
        let lu = lt.lu();
        let rhs = -self.infection_block.transpose();
        let qt = lu.solve(&rhs).ok_or(Error::Singular)?;
        if qt.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular);
        }
        let mut q = qt.transpose();
        let mut clamped = 0;
        for c in 0..q.ncols() {
            for r in 0..q.nrows() {
                let v = q[(r, c)];
                if v < -NEXT_GENERATION_NEGATIVE_TOL {
                    return Err(Error::NegativeNextGeneration { row: r, col: c, value: v });
                }
                if v < 0.0 {
                    q[(r, c)] = 0.0;
                    clamped += 1;
                }
            }
        }
        if clamped > 0 {
            log::debug!("clamped {clamped} negative rounding entries of Q");
        }
        Ok(NextGeneration {
            q,
            clamped,
            l_infinity_bound: bound,
        })
    }
}

/// `Q = −F 𝓛_∞⁻¹` for the system `(D, J_i, A, F)`.
pub fn assemble_next_generation(
    grid: &SpatialGrid,
    kernels: &[Kernel],
    dispersal: &[f64],
    a: &CoefficientField,
    f: &CoefficientField,
) -> Result<NextGeneration> {
    WeightedProblem::system(grid, kernels, dispersal, a, f)?.next_generation(PowerOptions::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, Bounds};
    use crate::spectral::{asymmetry, spectral_bound};
    use nalgebra::dmatrix;

    fn unit(n: usize) -> SpatialGrid {
        build_grid(Bounds::interval(0.0, 1.0), n).unwrap()
    }

    #[test]
    fn rank_one_dispersal_only() {
        let g = unit(4);
        let k = Kernel::uniform(1.0, 1).unwrap();
        let m = CoefficientField::constant(&g, dmatrix![0.0]).unwrap();
        let op = assemble_l(&g, &[k], &[1.0], &m).unwrap();
        assert!(op.matrix().iter().all(|&v| v == 0.125));
        assert!(!op.neumann());
        assert_eq!(op.shift_c(), 1.0);
    }

    #[test]
    fn partially_degenerate_layout() {
        let g = unit(5);
        let k = Kernel::tent(0.5, 1).unwrap();
        let m = CoefficientField::constant(&g, dmatrix![-1.0, 0.5; 0.5, -1.0]).unwrap();
        let op = assemble_l(&g, &[k, k], &[1.0, 0.0], &m).unwrap();
        assert!(op.partially_degenerate());
        // Second species block is purely node-local.
        for j in 0..5 {
            for l in 0..5 {
                let v = op.matrix()[(5 + j, 5 + l)];
                if j == l {
                    assert_eq!(v, -1.0);
                } else {
                    assert_eq!(v, 0.0);
                }
            }
        }
        assert_eq!(op.matrix()[(2, 7)], 0.5);
    }

    #[test]
    fn lmu_at_one_equals_l_of_sum() {
        let g = unit(6);
        let k = Kernel::tent(0.4, 1).unwrap();
        let a = CoefficientField::constant(&g, dmatrix![-2.0, 0.3; 0.1, -1.5]).unwrap();
        let f = CoefficientField::constant(&g, dmatrix![1.0, 0.2; 0.0, 0.5]).unwrap();
        let lmu = assemble_lmu(&g, &[k, k], &[1.0, 0.5], &a, &f, 1.0).unwrap();
        let l = assemble_l(&g, &[k, k], &[1.0, 0.5], &a.sum(&f).unwrap()).unwrap();
        assert_eq!(lmu.matrix(), l.matrix());

        let l2 = assemble_lmu(&g, &[k, k], &[1.0, 0.5], &a, &f, 2.0).unwrap();
        let linf = assemble_l_infinity(&g, &[k, k], &[1.0, 0.5], &a).unwrap();
        let diff1 = lmu.matrix() - linf.matrix();
        let diff2 = l2.matrix() - linf.matrix();
        assert!((diff1 * 0.5 - diff2).amax() < 1e-15);
    }

    #[test]
    fn lmu_errors() {
        let g = unit(4);
        let k = Kernel::uniform(1.0, 1).unwrap();
        let a = CoefficientField::constant(&g, dmatrix![-1.0]).unwrap();
        let f = CoefficientField::constant(&g, dmatrix![1.0]).unwrap();
        let z = CoefficientField::constant(&g, dmatrix![0.0]).unwrap();
        assert!(assemble_lmu(&g, &[k], &[1.0], &a, &f, 0.0).is_err());
        assert!(assemble_lmu(&g, &[k], &[1.0], &a, &f, -1.0).is_err());
        assert_eq!(assemble_lmu(&g, &[k], &[1.0], &a, &z, 1.0), Err(Error::ZeroInfection));
        assert!(assemble_l(&g, &[k], &[-1.0], &a).is_err());
        assert!(assemble_l(&g, &[k, k], &[1.0], &a).is_err());
    }

    #[test]
    fn problem_at_matches_direct_assembly() {
        let g = unit(7);
        let k = Kernel::truncated_gaussian(0.2, 0.5, 1).unwrap();
        let a = CoefficientField::from_fn(&g, |p| dmatrix![-2.0 + p[0], 0.3; 0.4 * p[0], -1.0]).unwrap();
        let f = CoefficientField::constant(&g, dmatrix![1.0, 0.0; 0.2, 0.5]).unwrap();
        let prob = WeightedProblem::system(&g, &[k, k], &[0.3, 0.6], &a, &f).unwrap();
        let direct = assemble_lmu(&g, &[k, k], &[0.3, 0.6], &a, &f, 0.7).unwrap();
        let via = prob.at(0.7).unwrap();
        assert!((direct.matrix() - via.matrix()).amax() < 1e-15);
        assert_eq!(direct.shift_c(), via.shift_c());

        let beta = ScalarField::affine(&g, 1.0, [1.0, 0.0]).unwrap();
        let gamma = ScalarField::constant(&g, 1.0).unwrap();
        let msat = ScalarField::constant(&g, 0.5).unwrap();
        let sis = WeightedProblem::sis(&g, &k, 0.2, &beta, &gamma, &msat, 2.0).unwrap();
        let direct = assemble_sis(&g, &k, 0.2, &beta, &gamma, &msat, 2.0, 1.3).unwrap();
        assert!((direct.matrix() - sis.at(1.3).unwrap().matrix()).amax() < 1e-15);
    }

    #[test]
    fn sis_constants_annihilated() {
        let g = unit(9);
        let k = Kernel::tent(0.3, 1).unwrap();
        let beta = ScalarField::constant(&g, 2.0).unwrap();
        let gamma = ScalarField::constant(&g, 1.0).unwrap();
        let msat = ScalarField::constant(&g, 1.0).unwrap();
        let op = assemble_sis(&g, &k, 0.8, &beta, &gamma, &msat, 1.0, 1.0).unwrap();
        let ones = DVector::from_element(9, 1.0);
        assert!(op.apply(&ones).amax() < 1e-15);
        let inf = assemble_sis(&g, &k, 0.8, &beta, &gamma, &msat, 1.0, f64::INFINITY).unwrap();
        assert!((inf.apply(&ones) + &ones).amax() < 1e-15);
        assert!(op.neumann());
        assert!(assemble_sis(&g, &k, 0.8, &beta, &gamma, &msat, 0.0, 1.0).is_err());
        assert!(assemble_sis(&g, &k, 0.8, &beta, &gamma, &msat, 1.0, 0.0).is_err());
    }

    #[test]
    fn sis_diagonal_by_hand() {
        let g = unit(3);
        let k = Kernel::tent(0.5, 1).unwrap();
        let beta = ScalarField::constant(&g, 1.5).unwrap();
        let gamma = ScalarField::tabulated(&g, vec![0.5, 1.0, 2.0]).unwrap();
        let msat = ScalarField::constant(&g, 0.0).unwrap();
        let op = assemble_sis(&g, &k, 2.0, &beta, &gamma, &msat, 1.0, 3.0).unwrap();
        let h = 1.0 / 3.0;
        let tent = |z: f64| (2.0 * (1.0 - z.abs() / 0.5)).max(0.0);
        for j in 0..3 {
            let xj = (j as f64 + 0.5) * h;
            let mass: f64 = (0..3).map(|l| tent(xj - (l as f64 + 0.5) * h) * h).sum();
            let expected = 2.0 * tent(0.0) * h - 2.0 * mass - gamma.samples()[j] + 1.5 / 3.0;
            assert!((op.matrix()[(j, j)] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn epsilon_constant_field_shifts_uniformly() {
        let g = unit(8);
        let k = Kernel::tent(0.5, 1).unwrap();
        let m = CoefficientField::constant(&g, dmatrix![-1.0, 0.5; 0.3, -0.5]).unwrap();
        let l = assemble_l(&g, &[k, k], &[1.0, 1.0], &m).unwrap();
        let le = assemble_epsilon_approx(&l, &m, 0.1).unwrap();
        let s = spectral_bound(&l, PowerOptions::default()).unwrap().bound;
        let se = spectral_bound(&le, PowerOptions::default()).unwrap().bound;
        assert!((s - 0.2 - se).abs() < 1e-10);
        assert!(assemble_epsilon_approx(&l, &m, 0.0).is_err());
    }

    #[test]
    fn epsilon_monotone_toward_bound() {
        let g = unit(16);
        let k = Kernel::tent(0.3, 1).unwrap();
        let m = CoefficientField::from_fn(&g, |p| dmatrix![-1.0 + p[0], 0.5; 0.5, -0.5 - p[0]]).unwrap();
        let l = assemble_l(&g, &[k, k], &[0.5, 0.5], &m).unwrap();
        let s = spectral_bound(&l, PowerOptions::default()).unwrap().bound;
        let mut prev = f64::NEG_INFINITY;
        for eps in [0.1, 0.05, 0.025] {
            let se = spectral_bound(&assemble_epsilon_approx(&l, &m, eps).unwrap(), PowerOptions::default())
                .unwrap()
                .bound;
            assert!(se > prev);
            assert!(se <= s + 1e-12 && s <= se + 2.0 * eps + 1e-12);
            prev = se;
        }
    }

    #[test]
    fn symmetric_under_even_kernels_and_symmetric_fields() {
        let g = build_grid(Bounds::rectangle((0.0, 1.0), (0.0, 1.0)), 5).unwrap();
        let k = Kernel::tent(0.6, 2).unwrap();
        let a = CoefficientField::from_fn(&g, |p| dmatrix![-2.0 + p[1], 0.3 * p[0]; 0.3 * p[0], -1.0]).unwrap();
        let op = assemble_l(&g, &[k, k], &[1.0, 0.2], &a).unwrap();
        assert!(asymmetry(op.matrix()) <= 1e-12);
    }

    #[test]
    fn next_generation_constant_sis() {
        let g = unit(10);
        let k = Kernel::tent(0.4, 1).unwrap();
        let beta = ScalarField::constant(&g, 2.0).unwrap();
        let gamma = ScalarField::constant(&g, 1.0).unwrap();
        let msat = ScalarField::constant(&g, 1.0).unwrap();
        let prob = WeightedProblem::sis(&g, &k, 0.5, &beta, &gamma, &msat, 1.0).unwrap();
        let ng = prob.next_generation(PowerOptions::default()).unwrap();
        let ones = DVector::from_element(10, 1.0);
        assert!((&ng.q * &ones - &ones).amax() < 1e-12);
    }

    #[test]
    fn next_generation_refuses_unstable() {
        let g = unit(6);
        let k = Kernel::tent(0.5, 1).unwrap();
        let a = CoefficientField::constant(&g, dmatrix![0.5]).unwrap();
        let f = CoefficientField::constant(&g, dmatrix![1.0]).unwrap();
        let err = assemble_next_generation(&g, &[k], &[1.0], &a, &f).unwrap_err();
        assert!(matches!(err, Error::NextGenerationUndefined { .. }));
        assert!(err.is_refusal());
    }

    #[test]
    fn next_generation_zero_infection() {
        let g = unit(6);
        let k = Kernel::tent(0.5, 1).unwrap();
        let a = CoefficientField::constant(&g, dmatrix![-1.0]).unwrap();
        let f = CoefficientField::constant(&g, dmatrix![0.0]).unwrap();
        let ng = assemble_next_generation(&g, &[k], &[1.0], &a, &f).unwrap();
        assert_eq!(ng.q.amax(), 0.0);
    }
}
