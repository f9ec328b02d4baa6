use gtsim_core::contraction::{j_power_bound, lifted_j_power, tilde_w, TildeSpectrum};
use gtsim_core::linalg::spectral_norm;
use gtsim_core::mixing::{build_ring_uniform, build_torus, spectral_params};
use gtsim_core::Matrix;
use nalgebra::DMatrix;

fn na_norm_sq(m: &Matrix) -> f64 {
    let a = DMatrix::from_fn(m.rows(), m.cols(), |r, c| m.row(r)[c]);
    let s = a.singular_values().iter().fold(0.0f64, |m, v| m.max(*v));
    s * s
}

/// Largest singular value of [[a, 0], [−i·a, a]] for scalar a: |a|²·(i² + 2 + i√(i² + 4))/2.
fn scalar_lift_norm_sq(rho: f64, i: u64) -> f64 {
    let i = i as f64;
    rho.powf(2.0 * i) * (i * i + 2.0 + i * (i * i + 4.0).sqrt()) / 2.0
}

#[test]
fn lifted_power_norm_matches_nalgebra_and_closed_form() {
    for w in [build_ring_uniform(5).unwrap(), build_ring_uniform(12).unwrap(), build_torus(3, 4).unwrap()] {
        let spec = TildeSpectrum::of(&w).unwrap();
        let rho = spectral_norm(&tilde_w(&w)).unwrap();
        for i in 0..=6u64 {
            let jp = lifted_j_power(&w, i).unwrap();
            let oracle = na_norm_sq(&jp.assembled);
            assert!((spec.j_power_norm(i) - oracle).abs() <= 1e-9 * (1.0 + oracle), "i={i}");
            if i > 0 {
                let closed = scalar_lift_norm_sq(rho, i);
                assert!((closed - oracle).abs() <= 1e-9 * (1.0 + oracle), "i={i}");
            }
        }
    }
}

#[test]
fn lifted_power_bound_is_exceeded_at_small_powers() {
    // (i² + 2 + i√(i² + 4))/2 > 1 + i² for i ≥ 1, and ‖W̃‖² = 1 − p, so the
    // exact norm sits above (1 − p)ⁱ(1 + i²) at every i ≥ 1.
    let w = build_ring_uniform(5).unwrap();
    let p = spectral_params(&w).unwrap().p;
    let exact = na_norm_sq(&lifted_j_power(&w, 1).unwrap().assembled);
    assert!(exact > j_power_bound(p, 1) + 0.1, "exact {exact} bound {}", j_power_bound(p, 1));
}
