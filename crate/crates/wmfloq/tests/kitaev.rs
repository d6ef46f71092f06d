mod common;

use common::*;
use nalgebra::DMatrix;
use wmfloq::gaussian::C64;
use wmfloq::kitaev::*;
use wmfloq::lattice::{build_custom_graph, hexagon};

#[test]
fn thermal_state_matches_dense_gibbs_operator() {
    let (graph, _) = build_custom_graph(&hexagon()).unwrap();
    let u = [1i8, -1, 1, 1, -1, 1];
    let a = quadratic_hamiltonian(&graph, &u);
    let c = majoranas(6);
    for beta in [0.3, 1.0, 4.0] {
        let rho = gaussian_operator(&(&a * -beta), &c);
        let dense = real_covariance(&dense_covariance(&rho, &c));
        let g = thermal_covariance(&a, beta);
        for i in 0..6 {
            for j in 0..6 {
                assert!((g[(i, j)] - dense[(i, j)]).abs() < 1e-10, "β={beta} ({i},{j})");
            }
        }
        // H = (i/4) Σ A c c as a dense operator
        let mut h = DMatrix::<C64>::zeros(8, 8);
        for i in 0..6 {
            for j in 0..6 {
                h += &c[i] * &c[j] * C64::new(0.0, 0.25 * a[(i, j)]);
            }
        }
        let t = FermionThermo::new(&single_particle_energies(&a), beta);
        assert!((t.ln_z - rho.trace().re.ln()).abs() < 1e-10);
        let e = (&h * &rho).trace().re / rho.trace().re;
        assert!((t.energy - e).abs() < 1e-10, "{} vs {e}", t.energy);
    }
}

#[test]
fn spectrum_is_particle_hole_symmetric() {
    let torus = KitaevTorus::new(3).unwrap();
    let u = torus.sector(0b11, Boundary::Antiperiodic).unwrap();
    let a = quadratic_hamiltonian(&torus.lattice.graph, &u);
    let i = C64::new(0.0, 1.0);
    let mut ev: Vec<f64> = a.map(|x| i * x).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let n = ev.len();
    for k in 0..n / 2 {
        assert!((ev[k] + ev[n - 1 - k]).abs() < 1e-10);
    }
}

#[test]
fn single_bond_flip_moves_two_fluxes() {
    let torus = KitaevTorus::new(3).unwrap();
    for b in [0, 7, 20] {
        let mut u = vec![1i8; torus.lattice.n_bonds()];
        u[b] = -1;
        let flipped: Vec<usize> = (0..torus.n_plaquettes()).filter(|&p| torus.flux(&u, p) == -1).collect();
        assert_eq!(flipped, {
            let mut v = torus.lattice.graph.bond_plaquettes(b);
            v.sort();
            v
        });
    }
}

#[test]
fn sectors_realise_their_flux_patterns() {
    let torus = KitaevTorus::new(3).unwrap();
    let plus = vec![1i8; torus.lattice.n_bonds()];
    let reference = torus.holonomies(&torus.sector(0, Boundary::Periodic).unwrap());
    assert_eq!(reference, torus.holonomies(&plus));
    for mask in (0..512u64).filter(|m| m.count_ones() % 2 == 0) {
        let u = torus.sector(mask, Boundary::Periodic).unwrap();
        for p in 0..9 {
            let expected = if mask >> p & 1 == 1 { -1 } else { 1 };
            assert_eq!(torus.flux(&u, p), expected);
        }
        assert_eq!(torus.holonomies(&u), reference);
    }
    assert!(torus.sector(0b1, Boundary::Periodic).is_err());
}

#[test]
fn moves_keep_holonomies() {
    let torus = KitaevTorus::new(6).unwrap();
    let u0 = torus.sector(0, Boundary::Antiperiodic).unwrap();
    for b in 0..torus.lattice.n_bonds() {
        let mut u = u0.clone();
        for x in torus.move_set(b) {
            u[x] = -u[x];
        }
        assert_eq!(torus.holonomies(&u), torus.holonomies(&u0), "bond {b}");
    }
}

#[test]
fn flux_free_antiperiodic_sector_is_lowest() {
    let torus = KitaevTorus::new(3).unwrap();
    let ground = |u: &[i8]| -0.5 * single_particle_energies(&quadratic_hamiltonian(&torus.lattice.graph, u)).iter().sum::<f64>();
    let e0 = ground(&torus.sector(0, Boundary::Antiperiodic).unwrap());
    assert!(e0 < ground(&torus.sector(0, Boundary::Periodic).unwrap()) - 1e-6);
    for mask in (1..512u64).filter(|m| m.count_ones() % 2 == 0) {
        assert!(e0 < ground(&torus.sector(mask, Boundary::Antiperiodic).unwrap()) - 1e-6, "mask {mask:#x}");
    }
}

#[test]
fn exact_sum_limits_and_consistency() {
    let torus = KitaevTorus::new(3).unwrap();
    let res = exact_flux_sum(&torus, &[1e-3, 0.1, 1.0, 10.0, 100.0], Boundary::Antiperiodic).unwrap();
    for r in &res {
        assert!((r.cv - r.cv_derivative).abs() < 1e-6, "β={}: {} vs {}", r.beta, r.cv, r.cv_derivative);
        assert!(r.flux.abs() <= 1.0);
    }
    assert!(res[0].flux.abs() < 1e-3 && res[0].cv < 1e-4);
    assert!(res[4].flux > 0.99);
    assert!(exact_flux_sum(&KitaevTorus::new(6).unwrap(), &[1.0], Boundary::Antiperiodic).is_err());
}

#[test]
fn infinite_temperature_mc_accepts_everything() {
    let torus = KitaevTorus::new(3).unwrap();
    let r = flux_mc(&torus, 0.0, FluxMcConfig { sweeps: 200, burn_in: 20, seed: 3 }, Boundary::Antiperiodic).unwrap();
    assert_eq!(r.acceptance, 1.0);
    assert!(r.flux.mean.abs() < 3.0 * r.flux.stderr, "{:?}", r.flux);
}
