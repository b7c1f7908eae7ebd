//! Midpoint-rule grids on intervals and rectangles, and the dispersal
//! kernels evaluated on them.
//!
//! All quadrature in this crate goes through [`SpatialGrid::weights`]: an
//! integral `∫_Ω f` is approximated by `Σ_k f(x_k) w_k`. The weights are
//! uniform, which keeps the discretized dispersal operator symmetric
//! whenever the kernel is even.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};

/// A point of Ω. One-dimensional grids leave the second coordinate at 0.
pub type Point = [f64; 2];

/// Axis-aligned domain extents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Bounds {
    Interval { lo: f64, hi: f64 },
    Rectangle { x: (f64, f64), y: (f64, f64) },
}

impl Bounds {
    pub fn interval(lo: f64, hi: f64) -> Self {
        Bounds::Interval { lo, hi }
    }

    pub fn rectangle(x: (f64, f64), y: (f64, f64)) -> Self {
        Bounds::Rectangle { x, y }
    }

    pub fn dimension(&self) -> usize {
        match self {
            Bounds::Interval { .. } => 1,
            Bounds::Rectangle { .. } => 2,
        }
    }

    /// Lebesgue measure |Ω|.
    pub fn measure(&self) -> f64 {
        match *self {
            Bounds::Interval { lo, hi } => hi - lo,
            Bounds::Rectangle { x, y } => (x.1 - x.0) * (y.1 - y.0),
        }
    }

    fn axes(&self) -> Vec<(f64, f64)> {
        match *self {
            Bounds::Interval { lo, hi } => vec![(lo, hi)],
            Bounds::Rectangle { x, y } => vec![x, y],
        }
    }
}

/// Quadrature nodes and weights on Ω.
///
/// Nodes of a rectangle are ordered with the x index running fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    bounds: Bounds,
    n_per_axis: usize,
    spacing: [f64; 2],
    nodes: Vec<Point>,
    weights: Vec<f64>,
}

impl SpatialGrid {
    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    pub fn dimension(&self) -> usize {
        self.bounds.dimension()
    }

    pub fn n_per_axis(&self) -> usize {
        self.n_per_axis
    }

    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Spacing per axis; the second entry is 0 for intervals.
    pub fn spacing(&self) -> [f64; 2] {
        self.spacing
    }

    /// Largest spacing across axes.
    pub fn max_spacing(&self) -> f64 {
        self.spacing[0].max(self.spacing[1])
    }

    pub fn measure(&self) -> f64 {
        self.bounds.measure()
    }

    /// Quadrature of a sampled function, `Σ_k f_k w_k`.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.weights.len());
        values.iter().zip(&self.weights).map(|(f, w)| f * w).sum()
    }

    /// Index of the node closest to `p`.
    pub fn nearest_node(&self, p: Point) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (j, x) in self.nodes.iter().enumerate() {
            let d = (x[0] - p[0]).powi(2) + (x[1] - p[1]).powi(2);
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        best
    }
}

/// Midpoint-rule grid with `n_per_axis` cells along each axis.
pub fn build_grid(bounds: Bounds, n_per_axis: usize) -> Result<SpatialGrid> {
    if n_per_axis < 2 {
        return Err(Error::InvalidGrid(format!(
            "n_per_axis must be at least 2, got {n_per_axis}"
        )));
    }
    let axes = bounds.axes();
    for &(lo, hi) in &axes {
        if !(lo.is_finite() && hi.is_finite()) || hi <= lo {
            return Err(Error::InvalidGrid(format!(
                "axis [{lo}, {hi}] has zero or negative measure"
            )));
        }
    }

    let coords: Vec<Vec<f64>> = axes
        .iter()
        .map(|&(lo, hi)| {
            let h = (hi - lo) / n_per_axis as f64;
            (0..n_per_axis)
                .map(|i| lo + (i as f64 + 0.5) * h)
                .collect()
        })
        .collect();

    let mut spacing = [0.0; 2];
    for (s, &(lo, hi)) in spacing.iter_mut().zip(&axes) {
        *s = (hi - lo) / n_per_axis as f64;
    }

    let (nodes, cell) = match bounds {
        Bounds::Interval { .. } => (
            coords[0].iter().map(|&x| [x, 0.0]).collect::<Vec<_>>(),
            spacing[0],
        ),
        Bounds::Rectangle { .. } => {
            let mut nodes = Vec::with_capacity(n_per_axis * n_per_axis);
            for &y in &coords[1] {
                for &x in &coords[0] {
                    nodes.push([x, y]);
                }
            }
            (nodes, spacing[0] * spacing[1])
        }
    };
    let weights = vec![cell; nodes.len()];

    Ok(SpatialGrid {
        bounds,
        n_per_axis,
        spacing,
        nodes,
        weights,
    })
}

/// Built-in radially symmetric kernel families. `radius` is the support
/// radius in units of length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum KernelFamily {
    /// Constant density on the ball of the given radius.
    Uniform { radius: f64 },
    /// Linearly decaying density, zero at `radius`.
    Tent { radius: f64 },
    /// Gaussian with standard deviation `sigma`, cut off at `radius`.
    TruncatedGaussian { sigma: f64, radius: f64 },
}

/// A normalized dispersal kernel `J` on ℝ¹ or ℝ².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    family: KernelFamily,
    dimension: usize,
    density: f64,
}

// Support-edge slack so that node pairs at exactly the radius are included
// consistently despite rounding in the coordinate differences.
const EDGE_SLACK: f64 = 1e-12;

impl Kernel {
    pub fn new(family: KernelFamily, dimension: usize) -> Result<Self> {
        if dimension != 1 && dimension != 2 {
            return Err(Error::InvalidKernel(format!(
                "dimension must be 1 or 2, got {dimension}"
            )));
        }
        let positive = |v: f64, what: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidKernel(format!("{what} must be positive, got {v}")))
            }
        };
        let density = match family {
            KernelFamily::Uniform { radius } => {
                positive(radius, "radius")?;
                if dimension == 1 {
                    1.0 / (2.0 * radius)
                } else {
                    1.0 / (PI * radius * radius)
                }
            }
            KernelFamily::Tent { radius } => {
                positive(radius, "radius")?;
                if dimension == 1 {
                    1.0 / radius
                } else {
                    3.0 / (PI * radius * radius)
                }
            }
            KernelFamily::TruncatedGaussian { sigma, radius } => {
                positive(sigma, "sigma")?;
                positive(radius, "radius")?;
                let z = if dimension == 1 {
                    sigma * (2.0 * PI).sqrt() * erf(radius / (sigma * 2f64.sqrt()))
                } else {
                    2.0 * PI * sigma * sigma * (1.0 - (-radius * radius / (2.0 * sigma * sigma)).exp())
                };
                1.0 / z
            }
        };
        Ok(Kernel {
            family,
            dimension,
            density,
        })
    }

    pub fn uniform(radius: f64, dimension: usize) -> Result<Self> {
        Self::new(KernelFamily::Uniform { radius }, dimension)
    }

    pub fn tent(radius: f64, dimension: usize) -> Result<Self> {
        Self::new(KernelFamily::Tent { radius }, dimension)
    }

    pub fn truncated_gaussian(sigma: f64, radius: f64, dimension: usize) -> Result<Self> {
        Self::new(KernelFamily::TruncatedGaussian { sigma, radius }, dimension)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn radius(&self) -> f64 {
        match self.family {
            KernelFamily::Uniform { radius }
            | KernelFamily::Tent { radius }
            | KernelFamily::TruncatedGaussian { radius, .. } => radius,
        }
    }

    /// J as a function of the distance |z|.
    pub fn eval_radial(&self, dist: f64) -> f64 {
        let r = self.radius();
        if dist > r * (1.0 + EDGE_SLACK) {
            return 0.0;
        }
        match self.family {
            KernelFamily::Uniform { .. } => self.density,
            KernelFamily::Tent { radius } => self.density * (1.0 - dist / radius).max(0.0),
            KernelFamily::TruncatedGaussian { sigma, .. } => {
                self.density * (-dist * dist / (2.0 * sigma * sigma)).exp()
            }
        }
    }

    /// J(z) for a displacement `z`.
    pub fn eval(&self, z: Point) -> f64 {
        let dist = if self.dimension == 1 {
            z[0].abs()
        } else {
            (z[0] * z[0] + z[1] * z[1]).sqrt()
        };
        self.eval_radial(dist)
    }

    /// Whether the support reaches at least two grid spacings. Below that the
    /// discretized operator may split into disconnected blocks.
    pub fn resolves(&self, grid: &SpatialGrid) -> bool {
        self.radius() >= 2.0 * grid.max_spacing()
    }
}

fn check_dims(grid: &SpatialGrid, kernel: &Kernel) -> Result<()> {
    if grid.dimension() != kernel.dimension() {
        return Err(Error::SizeMismatch(format!(
            "grid is {}-dimensional but kernel is {}-dimensional",
            grid.dimension(),
            kernel.dimension()
        )));
    }
    Ok(())
}

/// `∫_Ω J(x_j − y) dy` at every node, by the grid quadrature.
pub fn kernel_row_masses(grid: &SpatialGrid, kernel: &Kernel) -> Result<DVector<f64>> {
    check_dims(grid, kernel)?;
    let n = grid.len();
    let nodes = grid.nodes();
    let w = grid.weights();
    Ok(DVector::from_fn(n, |j, _| {
        let xj = nodes[j];
        let mut s = 0.0;
        for k in 0..n {
            let xk = nodes[k];
            s += kernel.eval([xj[0] - xk[0], xj[1] - xk[1]]) * w[k];
        }
        s
    }))
}

/// The n×n matrix with entries `J(x_j − x_k)·w_k`, discretizing
/// `φ ↦ ∫_Ω J(· − y) φ(y) dy`.
///
/// Row sums coincide bit-for-bit with [`kernel_row_masses`].
pub fn kernel_matrix(grid: &SpatialGrid, kernel: &Kernel) -> Result<DMatrix<f64>> {
    check_dims(grid, kernel)?;
    if !kernel.resolves(grid) {
        log::warn!(
            "kernel radius {} is below twice the grid spacing {}; the discrete operator may be reducible",
            kernel.radius(),
            grid.max_spacing()
        );
    }
    let n = grid.len();
    let nodes = grid.nodes();
    let w = grid.weights();
    Ok(DMatrix::from_fn(n, n, |j, k| {
        let (xj, xk) = (nodes[j], nodes[k]);
        kernel.eval([xj[0] - xk[0], xj[1] - xk[1]]) * w[k]
    }))
}
