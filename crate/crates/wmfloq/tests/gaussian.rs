mod common;

use common::*;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::LN_2;
use wmfloq::gaussian::*;

fn max_abs_c(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[test]
fn compose_identity_element() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let c = majoranas(4);
    let x = dense_covariance(&gaussian_operator(&random_antisymmetric(&mut rng, 4, 1.0), &c), &c) * C64::new(0.0, -1.0);
    let zero = DMatrix::<C64>::zeros(4, 4);
    assert!(max_abs_c(&compose(&x, &zero).unwrap(), &x) < 1e-12);
    assert!(max_abs_c(&compose(&zero, &x).unwrap(), &x) < 1e-12);
}

#[test]
fn compose_matches_dense_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let c = majoranas(4);
    let to_g = |m: DMatrix<C64>| m * C64::new(0.0, -1.0);
    for _ in 0..20 {
        let rx = gaussian_operator(&random_antisymmetric(&mut rng, 4, 1.5), &c);
        let ry = gaussian_operator(&random_antisymmetric(&mut rng, 4, 1.5), &c);
        let gx = to_g(dense_covariance(&rx, &c));
        let gy = to_g(dense_covariance(&ry, &c));
        let product = to_g(dense_covariance(&(&ry * &rx), &c));
        let composed = compose(&gx, &gy).unwrap();
        assert!(max_abs_c(&composed, &product) < 1e-12, "{}", max_abs_c(&composed, &product));
    }
}

#[test]
fn node_update_matches_dense_sandwich() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 6;
    let c = majoranas(n);
    for trial in 0..20 {
        let rho = gaussian_operator(&random_antisymmetric(&mut rng, n, 1.0), &c);
        let (a, b) = [(0, 1), (1, 4), (5, 2), (3, 0)][trial % 4];
        let h = [0.3, -0.7, 0.95, -0.05][trial % 4];
        let op = DMatrix::<C64>::identity(8, 8) + &c[a] * &c[b] * C64::new(0.0, h);
        let after = &op * &rho * &op;
        let mut g = real_covariance(&dense_covariance(&rho, &c));
        let ratio = apply_node(&mut g, a, b, h).unwrap();
        let dense = dense_covariance(&after, &c);
        for i in 0..n {
            for j in 0..n {
                assert!((g[(i, j)] - dense[(i, j)].re).abs() < 1e-12);
                assert!(dense[(i, j)].im.abs() < 1e-12);
            }
        }
        let dense_ratio = after.trace().re / rho.trace().re;
        assert!((ratio - dense_ratio).abs() < 1e-12 * dense_ratio);
    }
}

#[test]
fn node_delta_is_low_rank_difference() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 10;
    let c = majoranas(n);
    let rho = gaussian_operator(&random_antisymmetric(&mut rng, n, 0.8), &c);
    let g = real_covariance(&dense_covariance(&rho, &c));
    for (a, b, h) in [(0, 1, 0.4), (7, 2, -0.9), (3, 9, 0.99)] {
        let delta = node_delta(&g, a, b, h).unwrap();
        let mut updated = g.clone();
        let ratio = apply_node(&mut updated, a, b, h).unwrap();
        assert!((ratio - delta.norm).abs() < 1e-14);
        for i in 0..n {
            for j in 0..n {
                let lr: f64 = (0..DELTA_RANK).map(|k| delta.left[k * n + i] * delta.right[k * n + j]).sum();
                assert!((updated[(i, j)] - g[(i, j)] - lr).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn overlap_trace_rule() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 6;
    let c = majoranas(n);
    for _ in 0..10 {
        let rx = gaussian_operator(&random_antisymmetric(&mut rng, n, 1.2), &c);
        let ry = gaussian_operator(&random_antisymmetric(&mut rng, n, 1.2), &c);
        let (rx, ry) = (&rx / rx.trace(), &ry / ry.trace());
        let dense = (&rx * &ry).trace().re.ln();
        let gx = real_covariance(&dense_covariance(&rx, &c));
        let gy = real_covariance(&dense_covariance(&ry, &c));
        assert!((ln_overlap(&gx, &gy).unwrap() - dense).abs() < 1e-12);
    }
}

#[test]
fn zeta_and_purity() {
    let mut g = Covariance::zeros(4);
    g[(0, 1)] = 1.0;
    g[(1, 0)] = -1.0;
    g[(2, 3)] = 0.5;
    g[(3, 2)] = -0.5;
    let mut z = g.zeta();
    z.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert!((z[0] - 0.5).abs() < 1e-14 && (z[1] - 1.0).abs() < 1e-14);
    assert_eq!(g.antisymmetry_error(), 0.0);
}

#[test]
fn thermal_single_zero_mode() {
    let spec = Spectrum { eps: vec![0.0], beta: 4.0, ln_b: 0.0 };
    let q = ThermalQuantities::from_spectrum(&spec);
    assert!((q.f + 4f64.ln() / 8.0).abs() < 1e-15);
    assert_eq!(q.e, 0.0);
    assert!((q.s_c - LN_2).abs() < 1e-15);
    assert!((q.s_c - spec.beta * (q.e - q.f)).abs() < 1e-15);
}

#[test]
fn thermal_pure_limit() {
    let spec = Spectrum { eps: vec![-50.0, -80.0], beta: 4.0, ln_b: 0.0 };
    let q = ThermalQuantities::from_spectrum(&spec);
    assert!(q.s_c < 1e-12);
    assert!((q.e - q.e0).abs() < 1e-12);
    assert!(q.var_e < 1e-12);
}

#[test]
fn thermal_routes_agree() {
    // a spectrum, the log-weight it implies, and the matching ζ = tanh(β|ε|/2)
    let eps = vec![-1.3, -0.4, -0.05, -2.2];
    let beta = 3.0;
    let spec = Spectrum { eps: eps.clone(), beta, ln_b: 1.7 };
    let a = ThermalQuantities::from_spectrum(&spec);
    let zeta: Vec<f64> = eps.iter().map(|e: &f64| (0.5 * beta * e.abs()).tanh()).collect();
    let b = ThermalQuantities::from_state(&zeta, -beta * a.f, beta, 1.7);
    for (x, y) in [(a.f, b.f), (a.e, b.e), (a.var_e, b.var_e), (a.s_c, b.s_c), (a.e0, b.e0), (a.lambda0, b.lambda0), (a.gap, b.gap)] {
        assert!((x - y).abs() < 1e-12, "{x} vs {y}");
    }
}

#[test]
fn negativity_special_cases() {
    let g = Covariance::zeros(6);
    let cut = [true, true, true, false, false, false];
    assert!(negativity(&g, &cut).unwrap().abs() < 1e-14);

    let mut g = Covariance::zeros(4);
    g[(1, 2)] = 1.0;
    g[(2, 1)] = -1.0;
    g[(0, 3)] = 1.0;
    g[(3, 0)] = -1.0;
    let cut = [true, true, false, false];
    assert!((negativity(&g, &cut).unwrap() - LN_2).abs() < 1e-12);

    let mut g = Covariance::zeros(4);
    g[(1, 2)] = 1.0;
    g[(2, 1)] = -1.0;
    g[(0, 3)] = 0.0;
    assert!((negativity(&g, &cut).unwrap() - 0.5 * LN_2).abs() < 1e-12);

    // a dimer inside A carries nothing
    let mut g = Covariance::zeros(4);
    g[(0, 1)] = 1.0;
    g[(1, 0)] = -1.0;
    assert!(negativity(&g, &cut).unwrap().abs() < 1e-12);
}

#[test]
fn negativity_of_mixed_product_state_vanishes() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 8;
    let c = majoranas(4);
    let mut g = Covariance::zeros(n);
    for off in [0, 4] {
        let block = real_covariance(&dense_covariance(&gaussian_operator(&random_antisymmetric(&mut rng, 4, 1.0), &c), &c));
        for i in 0..4 {
            for j in 0..4 {
                g[(off + i, off + j)] = block[(i, j)];
            }
        }
    }
    let cut = [true, true, true, true, false, false, false, false];
    assert!(negativity(&g, &cut).unwrap().abs() < 1e-12);
}

#[test]
fn zero_strength_spectrum() {
    let nodes = vec![Node { a: 0, b: 1, eta: 1.0 }, Node { a: 2, b: 3, eta: -1.0 }];
    let kernels = vec![LayerKernel { nodes, tau: 0.0 }; 3];
    let spec = spectrum(&kernels, 4).unwrap();
    assert!(spec.eps.iter().all(|e| e.abs() < 1e-14));
    let q = ThermalQuantities::from_spectrum(&spec);
    assert!((q.lambda0 / 4.0 + 0.5 * LN_2).abs() < 1e-14);
    assert!((q.s_c / (4.0 * LN_2) - 0.5).abs() < 1e-14);
}
