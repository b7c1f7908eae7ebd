//! Matrix-valued coefficient fields `M(x)`, `A(x)`, `F(x)` and scalar fields
//! `β`, `γ`, `m`, sampled at grid nodes.
//!
//! Structural flags are computed from the samples on construction, never
//! declared by the caller.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Point, SpatialGrid};

/// Entries at or below this magnitude count as zero when testing coupling
/// patterns and symmetry.
pub const STRUCTURE_TOL: f64 = 1e-12;

/// Verified structural properties of a [`CoefficientField`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldFlags {
    pub cooperative: bool,
    pub nonnegative: bool,
    pub symmetric: bool,
    pub weakly_irreducible: bool,
    pub strongly_irreducible: bool,
}

/// Per-node m×m real matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    species: usize,
    samples: Vec<DMatrix<f64>>,
    flags: FieldFlags,
}

impl CoefficientField {
    pub fn new(samples: Vec<DMatrix<f64>>) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::InvalidField("field has no samples".into()))?;
        let m = first.nrows();
        if m == 0 {
            return Err(Error::InvalidField("species count must be positive".into()));
        }
        for (j, s) in samples.iter().enumerate() {
            if s.nrows() != m || s.ncols() != m {
                return Err(Error::InvalidField(format!(
                    "sample {j} is {}x{}, expected {m}x{m}",
                    s.nrows(),
                    s.ncols()
                )));
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidField(format!("sample {j} has non-finite entries")));
            }
        }
        let mut field = CoefficientField {
            species: m,
            samples,
            flags: FieldFlags {
                cooperative: false,
                nonnegative: false,
                symmetric: false,
                weakly_irreducible: false,
                strongly_irreducible: false,
            },
        };
        field.flags = field.compute_flags();
        Ok(field)
    }

    /// The same matrix at every node.
    pub fn constant(grid: &SpatialGrid, matrix: DMatrix<f64>) -> Result<Self> {
        Self::new(vec![matrix; grid.len()])
    }

    pub fn from_fn(grid: &SpatialGrid, f: impl Fn(Point) -> DMatrix<f64>) -> Result<Self> {
        Self::new(grid.nodes().iter().map(|&p| f(p)).collect())
    }

    /// A scalar field viewed as a 1×1 matrix field.
    pub fn from_scalar(field: &ScalarField) -> Result<Self> {
        Self::new(
            field
                .samples()
                .iter()
                .map(|&v| DMatrix::from_element(1, 1, v))
                .collect(),
        )
    }

    /// Diagonal field with the given scalar fields on the diagonal.
    pub fn diagonal(fields: &[ScalarField]) -> Result<Self> {
        let m = fields.len();
        let n = fields
            .first()
            .ok_or_else(|| Error::InvalidField("no diagonal fields".into()))?
            .len();
        if fields.iter().any(|f| f.len() != n) {
            return Err(Error::SizeMismatch("diagonal fields differ in length".into()));
        }
        Self::new(
            (0..n)
                .map(|j| DMatrix::from_fn(m, m, |r, c| if r == c { fields[r].samples()[j] } else { 0.0 }))
                .collect(),
        )
    }

    /// Tabulated field: one row per node, `m²` columns in row-major pair
    /// order (m_11, m_12, …, m_mm).
    pub fn tabulated(grid: &SpatialGrid, species: usize, rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() != grid.len() {
            return Err(Error::SizeMismatch(format!(
                "table has {} rows, grid has {} nodes",
                rows.len(),
                grid.len()
            )));
        }
        let mut samples = Vec::with_capacity(rows.len());
        for (j, row) in rows.iter().enumerate() {
            if row.len() != species * species {
                return Err(Error::SizeMismatch(format!(
                    "row {j} has {} columns, expected {}",
                    row.len(),
                    species * species
                )));
            }
            samples.push(DMatrix::from_row_slice(species, species, row));
        }
        Self::new(samples)
    }

    pub fn species(&self) -> usize {
        self.species
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample(&self, node: usize) -> &DMatrix<f64> {
        &self.samples[node]
    }

    pub fn samples(&self) -> &[DMatrix<f64>] {
        &self.samples
    }

    pub fn flags(&self) -> FieldFlags {
        self.flags
    }

    /// True when every entry is zero at every node.
    pub fn is_identically_zero(&self) -> bool {
        self.samples.iter().all(|s| s.iter().all(|&v| v == 0.0))
    }

    /// Nodewise sum `self + other`.
    pub fn sum(&self, other: &CoefficientField) -> Result<Self> {
        self.check_compatible(other)?;
        Self::new(
            self.samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }

    /// `self + scale·other`.
    pub fn add_scaled(&self, other: &CoefficientField, scale: f64) -> Result<Self> {
        self.check_compatible(other)?;
        Self::new(
            self.samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a + b * scale)
                .collect(),
        )
    }

    pub fn scaled(&self, scale: f64) -> Result<Self> {
        Self::new(self.samples.iter().map(|a| a * scale).collect())
    }

    fn check_compatible(&self, other: &CoefficientField) -> Result<()> {
        if self.species != other.species || self.samples.len() != other.samples.len() {
            return Err(Error::SizeMismatch(format!(
                "fields are {}x{} on {} nodes and {}x{} on {} nodes",
                self.species,
                self.species,
                self.samples.len(),
                other.species,
                other.species,
                other.samples.len()
            )));
        }
        Ok(())
    }

    fn compute_flags(&self) -> FieldFlags {
        let m = self.species;
        let mut cooperative = true;
        let mut nonnegative = true;
        let mut symmetric = true;
        for s in &self.samples {
            for r in 0..m {
                for c in 0..m {
                    let v = s[(r, c)];
                    if v < 0.0 {
                        nonnegative = false;
                        if r != c {
                            cooperative = false;
                        }
                    }
                    if (v - s[(c, r)]).abs() > STRUCTURE_TOL {
                        symmetric = false;
                    }
                }
            }
        }
        let weak = check_weak_irreducibility(self);
        let strong = check_strong_irreducibility(self);
        FieldFlags {
            cooperative,
            nonnegative,
            symmetric,
            weakly_irreducible: weak,
            strongly_irreducible: strong,
        }
    }
}

/// Whether the directed graph on `0..m` with the given adjacency is
/// strongly connected.
fn strongly_connected(m: usize, edge: impl Fn(usize, usize) -> bool) -> bool {
    if m <= 1 {
        return true;
    }
    let reach = |forward: bool| {
        let mut seen = vec![false; m];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for v in 0..m {
                let e = if forward { edge(u, v) } else { edge(v, u) };
                if u != v && e && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}

/// Fully coupled in the sense that the species digraph with an edge i→j iff
/// `m_ij ≢ 0` on the grid is strongly connected.
pub fn check_weak_irreducibility(field: &CoefficientField) -> bool {
    let m = field.species();
    let mut coupled = vec![false; m * m];
    for s in field.samples() {
        for r in 0..m {
            for c in 0..m {
                if r != c && s[(r, c)].abs() > STRUCTURE_TOL {
                    coupled[r * m + c] = true;
                }
            }
        }
    }
    strongly_connected(m, |i, j| coupled[i * m + j])
}

/// Every sample matrix is irreducible. A single species is irreducible by
/// convention.
pub fn check_strong_irreducibility(field: &CoefficientField) -> bool {
    let m = field.species();
    field
        .samples()
        .iter()
        .all(|s| strongly_connected(m, |i, j| s[(i, j)].abs() > STRUCTURE_TOL))
}

/// How a [`ScalarField`] was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ScalarBuilder {
    Constant { value: f64 },
    Affine { intercept: f64, slope: [f64; 2] },
    GaussianBump { base: f64, amplitude: f64, center: Point, width: f64 },
    Tabulated,
    Function,
}

/// Per-node real values.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    samples: Vec<f64>,
    builder: ScalarBuilder,
}

impl ScalarField {
    fn checked(samples: Vec<f64>, builder: ScalarBuilder) -> Result<Self> {
        if let Some(j) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidField(format!("non-finite value at node {j}")));
        }
        Ok(ScalarField { samples, builder })
    }

    pub fn constant(grid: &SpatialGrid, value: f64) -> Result<Self> {
        Self::checked(vec![value; grid.len()], ScalarBuilder::Constant { value })
    }

    /// `intercept + slope · x`.
    pub fn affine(grid: &SpatialGrid, intercept: f64, slope: [f64; 2]) -> Result<Self> {
        Self::checked(
            grid.nodes()
                .iter()
                .map(|p| intercept + slope[0] * p[0] + slope[1] * p[1])
                .collect(),
            ScalarBuilder::Affine { intercept, slope },
        )
    }

    /// `base + amplitude · exp(−|x − center|² / (2 width²))`.
    pub fn gaussian_bump(
        grid: &SpatialGrid,
        base: f64,
        amplitude: f64,
        center: Point,
        width: f64,
    ) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::InvalidField(format!("bump width must be positive, got {width}")));
        }
        Self::checked(
            grid.nodes()
                .iter()
                .map(|p| {
                    let d2 = (p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2);
                    base + amplitude * (-d2 / (2.0 * width * width)).exp()
                })
                .collect(),
            ScalarBuilder::GaussianBump {
                base,
                amplitude,
                center,
                width,
            },
        )
    }

    pub fn tabulated(grid: &SpatialGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::SizeMismatch(format!(
                "table has {} rows, grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Self::checked(values, ScalarBuilder::Tabulated)
    }

    pub fn from_fn(grid: &SpatialGrid, f: impl Fn(Point) -> f64) -> Result<Self> {
        Self::checked(grid.nodes().iter().map(|&p| f(p)).collect(), ScalarBuilder::Function)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn builder(&self) -> &ScalarBuilder {
        &self.builder
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.samples.iter().all(|&v| v >= 0.0)
    }

    pub fn max(&self) -> f64 {
        self.samples.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.samples.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// True when every sample is within [`STRUCTURE_TOL`] of zero.
    pub fn is_identically_zero(&self) -> bool {
        self.samples.iter().all(|v| v.abs() <= STRUCTURE_TOL)
    }
}

/// Default threshold for [`zero_set`].
pub const ZERO_SET_TOL: f64 = 1e-12;

/// Indices of nodes where `|field| ≤ tol`.
pub fn zero_set(field: &ScalarField, tol: f64) -> Vec<usize> {
    field
        .samples()
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() <= tol)
        .map(|(j, _)| j)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, Bounds};
    use nalgebra::dmatrix;

    fn grid(n: usize) -> SpatialGrid {
        build_grid(Bounds::interval(0.0, 1.0), n).unwrap()
    }

    #[test]
    fn decoupled_example_not_weakly_irreducible() {
        let f = CoefficientField::constant(&grid(8), dmatrix![2.0, 0.0; 0.0, 1.0]).unwrap();
        assert!(!f.flags().weakly_irreducible);
        assert!(!f.flags().strongly_irreducible);
        assert!(f.flags().cooperative);
    }

    #[test]
    fn swap_coupling_is_irreducible() {
        let f = CoefficientField::constant(&grid(8), dmatrix![0.0, 1.0; 1.0, 0.0]).unwrap();
        assert!(f.flags().weakly_irreducible);
        assert!(f.flags().strongly_irreducible);
        assert!(f.flags().symmetric);
    }

    #[test]
    fn cycle_with_partial_support_is_weak_only() {
        let g = grid(10);
        let f = CoefficientField::from_fn(&g, |p| {
            let mut m = DMatrix::zeros(3, 3);
            m[(0, 1)] = 1.0;
            m[(1, 2)] = 1.0;
            m[(2, 0)] = if p[0] < 0.5 { 1.0 } else { 0.0 };
            m
        })
        .unwrap();
        assert!(check_weak_irreducibility(&f));
        assert!(!check_strong_irreducibility(&f));
    }

    #[test]
    fn constant_irreducible_is_strong() {
        let f = CoefficientField::constant(&grid(5), dmatrix![-1.0, 0.5; 0.2, -2.0]).unwrap();
        assert!(check_strong_irreducibility(&f));
    }

    #[test]
    fn scalar_is_strongly_irreducible() {
        let g = grid(5);
        let s = ScalarField::affine(&g, -1.0, [2.0, 0.0]).unwrap();
        let f = CoefficientField::from_scalar(&s).unwrap();
        assert!(f.flags().strongly_irreducible && f.flags().weakly_irreducible);
    }

    #[test]
    fn zero_sets() {
        let g = grid(9);
        let one = ScalarField::constant(&g, 1.0).unwrap();
        assert!(zero_set(&one, ZERO_SET_TOL).is_empty());

        let vee = ScalarField::from_fn(&g, |p| (p[0] - 0.5).abs()).unwrap();
        assert_eq!(zero_set(&vee, ZERO_SET_TOL), vec![4]);

        let ramp = ScalarField::from_fn(&g, |p| (p[0] - 0.5).max(0.0)).unwrap();
        let expected: Vec<usize> = (0..9).filter(|&j| g.nodes()[j][0] <= 0.5).collect();
        assert_eq!(zero_set(&ramp, ZERO_SET_TOL), expected);
    }

    #[test]
    fn flags_detect_sign_structure() {
        let g = grid(4);
        let f = CoefficientField::constant(&g, dmatrix![-1.0, -0.1; 0.3, 1.0]).unwrap();
        assert!(!f.flags().cooperative);
        assert!(!f.flags().nonnegative);
        assert!(!f.flags().symmetric);
        let f = CoefficientField::constant(&g, dmatrix![1.0, 0.1; 0.1, 1.0]).unwrap();
        assert!(f.flags().nonnegative && f.flags().symmetric);
    }

    #[test]
    fn summed_field_irreducibility() {
        let g = grid(6);
        let a = CoefficientField::constant(&g, dmatrix![-2.0, 0.0; 0.0, -2.0]).unwrap();
        let f = CoefficientField::constant(&g, dmatrix![0.0, 1.0; 1.0, 0.0]).unwrap();
        let af = a.sum(&f).unwrap();
        assert_eq!(af.flags().weakly_irreducible, check_weak_irreducibility(&af));
        assert!(af.flags().weakly_irreducible);
        assert!(!a.flags().weakly_irreducible);
    }

    #[test]
    fn tabulated_field_shape_checked() {
        let g = grid(2);
        let rows = vec![vec![1.0, 2.0, 3.0, 4.0], vec![5.0, 6.0, 7.0, 8.0]];
        let f = CoefficientField::tabulated(&g, 2, &rows).unwrap();
        assert_eq!(f.sample(1)[(0, 1)], 6.0);
        assert_eq!(f.sample(1)[(1, 0)], 7.0);
        assert!(CoefficientField::tabulated(&g, 2, &rows[..1]).is_err());
        assert!(CoefficientField::tabulated(&grid(3), 2, &rows).is_err());
    }

    #[test]
    fn mismatched_samples_rejected() {
        assert!(CoefficientField::new(vec![]).is_err());
        assert!(CoefficientField::new(vec![DMatrix::zeros(2, 2), DMatrix::zeros(3, 3)]).is_err());
        assert!(CoefficientField::new(vec![dmatrix![f64::NAN]]).is_err());
    }
}
