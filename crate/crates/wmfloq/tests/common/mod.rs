//! Dense Fock-space Majorana helpers for small-`N` checks.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use wmfloq::gaussian::{Covariance, C64};

/// Jordan-Wigner Majoranas on `n/2` modes: `c_{2k} = Z..Z X`, `c_{2k+1} = Z..Z Y`.
pub fn majoranas(n: usize) -> Vec<DMatrix<C64>> {
    let modes = n / 2;
    let o = C64::new(0.0, 0.0);
    let l = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    let id = DMatrix::<C64>::identity(2, 2);
    let x = DMatrix::from_row_slice(2, 2, &[o, l, l, o]);
    let y = DMatrix::from_row_slice(2, 2, &[o, -i, i, o]);
    let z = DMatrix::from_row_slice(2, 2, &[l, o, o, -l]);
    let mut out = Vec::new();
    for k in 0..modes {
        for p in [&x, &y] {
            let mut m = DMatrix::<C64>::identity(1, 1);
            for j in 0..modes {
                let f = if j < k { &z } else if j == k { p } else { &id };
                m = m.kronecker(f);
            }
            out.push(m);
        }
    }
    out
}

pub fn random_antisymmetric(rng: &mut impl Rng, n: usize, scale: f64) -> DMatrix<f64> {
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let v = rng.gen_range(-scale..scale);
            a[(i, j)] = v;
            a[(j, i)] = -v;
        }
    }
    a
}

/// `exp((i/4) Σ Φ_ij c_i c_j)` (Hermitian, positive).
pub fn gaussian_operator(phi: &DMatrix<f64>, c: &[DMatrix<C64>]) -> DMatrix<C64> {
    let d = c[0].nrows();
    let mut h = DMatrix::<C64>::zeros(d, d);
    for i in 0..phi.nrows() {
        for j in 0..phi.ncols() {
            if phi[(i, j)] != 0.0 {
                h += &c[i] * &c[j] * C64::new(0.0, 0.25 * phi[(i, j)]);
            }
        }
    }
    let h = (&h + h.adjoint()) * C64::new(0.5, 0.0);
    let eig = h.symmetric_eigen();
    let ev = eig.eigenvectors;
    let diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| C64::new(e.exp(), 0.0)));
    &ev * diag * ev.adjoint()
}

/// `⟨(i/2)[c_i, c_j]⟩` of an operator, possibly complex.
pub fn dense_covariance(rho: &DMatrix<C64>, c: &[DMatrix<C64>]) -> DMatrix<C64> {
    let n = c.len();
    let tr = rho.trace();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            return C64::new(0.0, 0.0);
        }
        let comm = &c[i] * &c[j] - &c[j] * &c[i];
        (rho * comm).trace() * C64::new(0.0, 0.5) / tr
    })
}

pub fn real_covariance(g: &DMatrix<C64>) -> Covariance {
    Covariance::from_fn(g.nrows(), |i, j| g[(i, j)].re)
}
