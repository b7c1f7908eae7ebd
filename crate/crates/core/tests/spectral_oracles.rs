mod common;

use common::*;
use nalgebra::{dmatrix, DMatrix, DVector};
use nonlocal_r0::spectral::{compute_alpha, essential_bound, rayleigh_bound, rayleigh_quotient};
use nonlocal_r0::grid::{kernel_matrix, kernel_row_masses};
use nonlocal_r0::{
    assemble_l, assemble_sis, build_grid, spectral_bound, Bounds, CoefficientField, Kernel, PowerOptions, ScalarField,
    SpatialGrid,
};

fn unit(n: usize) -> SpatialGrid {
    build_grid(Bounds::interval(0.0, 1.0), n).unwrap()
}

#[test]
fn seeded_random_instance_matches_characteristic_polynomial() {
    let g = unit(3);
    let mut rng = Lcg(42);
    let samples: Vec<DMatrix<f64>> = (0..3)
        .map(|_| {
            DMatrix::from_fn(2, 2, |r, c| {
                let u = rng.next_f64();
                if r == c { -2.0 * u } else { u }
            })
        })
        .collect();
    let m = CoefficientField::new(samples).unwrap();
    let d = [0.2 + rng.next_f64(), 0.2 + rng.next_f64()];
    let k = Kernel::tent(0.5, 1).unwrap();
    let op = assemble_l(&g, &[k, k], &d, &m).unwrap();

    let oracle = largest_real_root(&char_poly(&to_mat(op.matrix())));
    let rep = spectral_bound(&op, PowerOptions::default()).unwrap();
    assert!((rep.bound - oracle).abs() < 1e-9, "{} vs {oracle}", rep.bound);
    let v = rep.principal_vector.unwrap();
    assert!(v.iter().all(|&x| x > 0.0));
    assert!(rep.bracket.0 <= rep.bound + 1e-12 && rep.bound <= rep.bracket.1 + 1e-12);
}

#[test]
fn essential_bound_of_two_species_affine_field() {
    let g = unit(16);
    let field = |x: f64| dmatrix![-1.0 + x, 0.5; 0.5, -2.0 * x];
    let m = CoefficientField::from_fn(&g, |p| field(p[0])).unwrap();
    let oracle = g
        .nodes()
        .iter()
        .map(|p| {
            let (a, d) = (-1.0 + p[0], -2.0 * p[0]);
            0.5 * (a + d) + (0.25 * (a - d) * (a - d) + 0.25).sqrt()
        })
        .fold(f64::NEG_INFINITY, f64::max);
    assert!((essential_bound(&m).unwrap() - oracle).abs() < 1e-10);
}

#[test]
fn kernel_inside_one_cell_leaves_diagonal_operator() {
    let g = unit(8);
    let k = Kernel::uniform(0.05, 1).unwrap();
    let m = CoefficientField::from_scalar(&ScalarField::from_fn(&g, |p| -p[0]).unwrap()).unwrap();
    let op = assemble_l(&g, &[k], &[0.5], &m).unwrap();
    // J(0)·w = 10 · 0.125 at every node.
    let oracle = -0.0625 + 0.5 * 10.0 * 0.125;
    let rep = spectral_bound(&op, PowerOptions::default()).unwrap();
    assert!((rep.bound - oracle).abs() < 1e-12);
}

#[test]
fn second_eigenvector_of_two_node_operator() {
    let g = unit(2);
    let k = Kernel::uniform(1.0, 1).unwrap();
    let m = CoefficientField::from_scalar(&ScalarField::from_fn(&g, |p| -4.0 * p[0]).unwrap()).unwrap();
    let op = assemble_l(&g, &[k], &[1.0], &m).unwrap();
    let a = op.matrix();
    let (p, q, r) = (a[(0, 0)], a[(0, 1)], a[(1, 1)]);
    let disc = (0.25 * (p - r) * (p - r) + q * q).sqrt();
    let (top, second) = (0.5 * (p + r) + disc, 0.5 * (p + r) - disc);
    let v2 = DVector::from_vec(vec![q, second - p]);
    assert!((rayleigh_quotient(&op, &v2).unwrap() - second).abs() < 1e-12);
    let v1 = DVector::from_vec(vec![q, top - p]);
    assert!((rayleigh_quotient(&op, &v1).unwrap() - top).abs() < 1e-12);
    let rep = rayleigh_bound(&op, PowerOptions::default()).unwrap();
    assert!((rep.bound - top).abs() < 1e-10);
}

#[test]
fn alpha_of_tent_kernel_matches_dense_eigensolve() {
    let g = unit(64);
    let k = Kernel::tent(0.5, 1).unwrap();
    let km = kernel_matrix(&g, &k).unwrap();
    let masses = kernel_row_masses(&g, &k).unwrap();
    // Uniform weights: the form is w·uᵀ(diag(masses) − K)u against w·uᵀu.
    let a: Mat = (0..64)
        .map(|j| (0..64).map(|c| if j == c { masses[j] } else { 0.0 } - km[(j, c)]).collect())
        .collect();
    let ev = jacobi_eigenvalues(&a);
    assert!(ev[0].abs() < 1e-10, "constants are in the kernel: {}", ev[0]);
    let oracle = ev[1];
    let alpha = compute_alpha(&g, &k, PowerOptions::with_tol(1e-14)).unwrap();
    assert!((alpha - oracle).abs() < 1e-8, "{alpha} vs {oracle}");
    assert!(alpha > 0.0 && alpha <= masses.min() + 1e-12);
}

#[test]
fn plateau_of_maximizers_gives_isolated_principal_eigenvalue() {
    let g = unit(64);
    let k = Kernel::tent(0.1, 1).unwrap();
    let gamma = ScalarField::from_fn(&g, |p| if (p[0] - 0.5).abs() < 0.1 { 1.0 } else { 2.0 }).unwrap();
    let beta = ScalarField::constant(&g, 1.0).unwrap();
    let m = ScalarField::constant(&g, 1.0).unwrap();
    let op = assemble_sis(&g, &k, 0.5, &beta, &gamma, &m, 1.0, f64::INFINITY).unwrap();
    let rep = spectral_bound(&op, PowerOptions::default()).unwrap();
    assert!(rep.bound > rep.essential_bound + 1e-10, "{} vs {}", rep.bound, rep.essential_bound);
    assert!(rep.principal_exists);
    assert!(rep.principal_vector.unwrap().iter().all(|&x| x > 0.0));
}
