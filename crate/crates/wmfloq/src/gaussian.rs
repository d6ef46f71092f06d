//! Majorana Gaussian states.
//!
//! A covariance `Γ_ij = <(i/2)[c_i, c_j]>` is stored as a dense row-major
//! real antisymmetric matrix. A measurement node on the pair `(a, b)` acts as
//! `ρ -> (1 + h O) ρ (1 + h O)` with `O = i c_a c_b`, which is a rank-two
//! update plus a rescaling of rows and columns `a`, `b`. Whole layers are
//! applied node by node; nodes in one layer are vertex-disjoint and commute.

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

const LN2: f64 = std::f64::consts::LN_2;
/// Node trace ratios below this are treated as zero-probability events:
/// the update would amplify rounding error by `1/norm`.
pub const MIN_NODE_NORM: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Covariance {
    n: usize,
    m: Vec<f64>,
}

impl Covariance {
    pub fn zeros(n: usize) -> Covariance {
        Covariance { n, m: vec![0.0; n * n] }
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Covariance {
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                m[i * n + j] = f(i, j);
            }
        }
        Covariance { n, m }
    }

    pub fn from_dmatrix(x: &DMatrix<f64>) -> Covariance {
        Covariance::from_fn(x.nrows(), |i, j| x[(i, j)])
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.m)
    }

    /// Hermitian form `-iΓ`.
    pub fn to_hermitian(&self) -> DMatrix<C64> {
        DMatrix::from_fn(self.n, self.n, |i, j| C64::new(0.0, -self.m[i * self.n + j]))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.m
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.m
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.m[i * self.n..(i + 1) * self.n]
    }

    pub fn antisymmetry_error(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..=i {
                worst = worst.max((self.m[i * n + j] + self.m[j * n + i]).abs());
            }
        }
        worst
    }

    /// The `N/2` eigenvalue magnitudes `ζ_n` of `-iΓ`, sorted descending.
    pub fn zeta(&self) -> Vec<f64> {
        let x = self.to_dmatrix();
        let sq = -(&x * &x);
        let sym = (&sq + sq.transpose()) * 0.5;
        let mut ev: Vec<f64> = sym.symmetric_eigenvalues().iter().map(|v| v.max(0.0).sqrt()).collect();
        ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
        ev.into_iter().step_by(2).take(self.n / 2).collect()
    }

    /// Largest deviation of `Γ²` from `-I` (zero for pure states).
    pub fn purity_defect(&self) -> f64 {
        let x = self.to_dmatrix();
        let sq = &x * &x + DMatrix::identity(self.n, self.n);
        sq.amax()
    }
}

impl std::ops::Index<(usize, usize)> for Covariance {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.m[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Covariance {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.m[i * self.n + j]
    }
}

/// `1 + h² + 2hΓ_ab`, the trace ratio `Tr[(1+hO)ρ(1+hO)] / Tr ρ`.
#[inline]
pub fn node_norm(g: &Covariance, a: usize, b: usize, h: f64) -> f64 {
    1.0 + h * h + 2.0 * h * g[(a, b)]
}

/// Applies `(1 + hO)·(1 + hO)` on the pair `(a, b)` and renormalizes.
/// Returns the trace ratio.
pub fn apply_node(g: &mut Covariance, a: usize, b: usize, h: f64) -> Result<f64> {
    let n = g.n;
    let gab = g[(a, b)];
    let norm = 1.0 + h * h + 2.0 * h * gab;
    if !(norm > MIN_NODE_NORM) || !norm.is_finite() {
        return Err(Error::SingularComposition(norm));
    }
    let mut u = g.row(a).to_vec();
    let mut v = g.row(b).to_vec();
    for w in [&mut u, &mut v] {
        w[a] = 0.0;
        w[b] = 0.0;
    }
    let c = 2.0 * h / norm;
    let f = (1.0 - h * h) / norm;
    for j in 0..n {
        if j == a || j == b {
            continue;
        }
        let (cu, cv) = (c * u[j], c * v[j]);
        let row = &mut g.m[j * n..(j + 1) * n];
        for ((x, &uk), &vk) in row.iter_mut().zip(&u).zip(&v) {
            *x -= cu * vk - cv * uk;
        }
        row[a] = -f * u[j];
        row[b] = -f * v[j];
    }
    for k in 0..n {
        g.m[a * n + k] = f * u[k];
        g.m[b * n + k] = f * v[k];
    }
    let new_ab = ((1.0 + h * h) * gab + 2.0 * h) / norm;
    g.m[a * n + b] = new_ab;
    g.m[b * n + a] = -new_ab;
    Ok(norm)
}

/// Low-rank form of the change made by [`apply_node`]:
/// `Γ' - Γ = Σ_k (p_k q_kᵀ - q_k p_kᵀ)` with three pairs, packed as
/// `Δ = L Rᵀ` where `L = [p | q]`, `R = [q | -p]` (each `n x 6`, column-major).
#[derive(Clone, Debug)]
pub struct NodeDelta {
    pub norm: f64,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

pub const DELTA_RANK: usize = 6;

pub fn node_delta(g: &Covariance, a: usize, b: usize, h: f64) -> Result<NodeDelta> {
    let n = g.n;
    let gab = g[(a, b)];
    let norm = 1.0 + h * h + 2.0 * h * gab;
    if !(norm > MIN_NODE_NORM) || !norm.is_finite() {
        return Err(Error::SingularComposition(norm));
    }
    let c = 2.0 * h / norm;
    let f = (1.0 - h * h) / norm - 1.0;
    let delta_ab = ((1.0 + h * h) * gab + 2.0 * h) / norm - gab;
    let mut left = vec![0.0; n * DELTA_RANK];
    let mut right = vec![0.0; n * DELTA_RANK];
    let (ra, rb) = (g.row(a), g.row(b));
    for k in 0..n {
        if k == a || k == b {
            continue;
        }
        let (uk, vk) = (ra[k], rb[k]);
        // p columns: -c·ū, e_a, e_b ; q columns: v̄, f·ū + δ e_b, f·v̄
        left[k] = -c * uk;
        left[3 * n + k] = vk;
        left[4 * n + k] = f * uk;
        left[5 * n + k] = f * vk;
    }
    left[n + a] = 1.0;
    left[2 * n + b] = 1.0;
    left[4 * n + b] = delta_ab;
    for k in 0..n {
        right[k] = left[3 * n + k];
        right[n + k] = left[4 * n + k];
        right[2 * n + k] = left[5 * n + k];
        right[3 * n + k] = -left[k];
        right[4 * n + k] = -left[n + k];
        right[5 * n + k] = -left[2 * n + k];
    }
    Ok(NodeDelta { norm, left, right })
}

/// One measurement node: Majorana pair and net sign `η = s·u`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub a: usize,
    pub b: usize,
    pub eta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerKernel {
    pub nodes: Vec<Node>,
    pub tau: f64,
}

impl LayerKernel {
    /// Node amplitude `tanh(τ/2)`.
    pub fn h(&self) -> f64 {
        (0.5 * self.tau).tanh()
    }

    /// `ln cosh²(τ/2)`, the per-node scalar prefactor.
    pub fn ln_prefactor(&self) -> f64 {
        2.0 * ln_cosh(0.5 * self.tau)
    }
}

/// `ln cosh x` without overflow.
pub fn ln_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - LN2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianState {
    pub cov: Covariance,
    /// `ln Tr` of the unnormalized operator.
    pub log_weight: f64,
}

impl GaussianState {
    /// The identity operator on `n` Majoranas (`Tr = 2^{n/2}`).
    pub fn identity(n: usize) -> GaussianState {
        GaussianState { cov: Covariance::zeros(n), log_weight: 0.5 * n as f64 * LN2 }
    }

    pub fn apply_layer(&mut self, kernel: &LayerKernel) -> Result<()> {
        let h = kernel.h();
        let pre = kernel.ln_prefactor();
        for node in &kernel.nodes {
            if node.a >= self.cov.n || node.b >= self.cov.n {
                return Err(Error::Dimension { expected: self.cov.n, got: node.a.max(node.b) + 1 });
            }
            let norm = apply_node(&mut self.cov, node.a, node.b, h * node.eta)?;
            self.log_weight += pre + norm.ln();
        }
        Ok(())
    }
}

/// Covariance of the operator product `ρ_y ρ_x` in Hermitian form
/// (`G = -iΓ`): `x × y = 1 - (1 - y)(1 + x y)⁻¹(1 - x)`.
/// The result is complex unless the product is Hermitian.
pub fn compose(x: &DMatrix<C64>, y: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let n = x.nrows();
    let id = DMatrix::<C64>::identity(n, n);
    let lu = (&id + x * y).lu();
    let pivot = lu.u().diagonal().iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    if !(pivot > 1e-14) {
        return Err(Error::SingularComposition(pivot));
    }
    let right = &id - x;
    let solved = lu.solve(&right).ok_or(Error::SingularComposition(pivot))?;
    Ok(&id - (&id - y) * solved)
}

/// `ln Tr(ρ_x ρ_y)` for normalized states: `-(N/2) ln 2 + ½ ln det(1 - Γ_x Γ_y)`.
pub fn ln_overlap(x: &Covariance, y: &Covariance) -> Result<f64> {
    let n = x.n;
    let prod = x.to_dmatrix() * y.to_dmatrix();
    let m = DMatrix::<f64>::identity(n, n) - prod;
    let det = m.lu().determinant();
    if !(det > 0.0) {
        return Err(Error::SingularComposition(det));
    }
    Ok(-0.5 * n as f64 * LN2 + 0.5 * det.ln())
}

/// Negative-branch single-mode energies of the effective Hamiltonian.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// `N/2` values, each `<= 0`, sorted ascending.
    pub eps: Vec<f64>,
    pub beta: f64,
    pub ln_b: f64,
}

/// Single-particle transfer matrix of one layer divided by `cosh τ`: each
/// node contributes `[[1, iη tanh τ], [-iη tanh τ, 1]]`, other modes `1/cosh τ`.
fn layer_transfer(n: usize, kernel: &LayerKernel) -> DMatrix<C64> {
    let sech = (-ln_cosh(kernel.tau)).exp();
    let mut t = DMatrix::<C64>::from_diagonal_element(n, n, C64::new(sech, 0.0));
    let th = kernel.tau.tanh();
    for node in &kernel.nodes {
        let (a, b) = (node.a, node.b);
        t[(a, a)] = C64::new(1.0, 0.0);
        t[(b, b)] = C64::new(1.0, 0.0);
        t[(a, b)] = C64::new(0.0, th * node.eta);
        t[(b, a)] = C64::new(0.0, -th * node.eta);
    }
    t
}

/// Stratified product `P = T_r ⋯ T_0` kept as `U D V` (column-pivoted QR at
/// every layer), then one-sided Jacobi on the graded factor `(D V)†`.
/// `ε = -(2/β) ln σ` over the `N/2` largest singular values `σ` of `P`.
pub fn spectrum(kernels: &[LayerKernel], n: usize) -> Result<Spectrum> {
    let beta = kernels.len() as f64;
    let mut ln_b = 0.0;
    let mut ln_scale = 0.0;
    let mut u = DMatrix::<C64>::identity(n, n);
    let mut d = vec![1.0f64; n];
    let mut v = DMatrix::<C64>::identity(n, n);
    for kernel in kernels {
        ln_b += kernel.nodes.len() as f64 * (LN2 + ln_cosh(kernel.tau));
        ln_scale += ln_cosh(kernel.tau);
        let mut x = layer_transfer(n, kernel) * &u;
        for (j, dj) in d.iter().enumerate() {
            x.column_mut(j).scale_mut(*dj);
        }
        let q = x.clone().col_piv_qr().q();
        // W = Q† X equals R up to a column permutation; its rows carry the grading.
        let mut w = q.adjoint() * &x;
        for i in 0..n {
            let di = w.row(i).iter().map(|z| z.norm()).fold(0.0, f64::max);
            if !(di > 0.0) || !di.is_finite() {
                return Err(Error::NonConvergent);
            }
            d[i] = di;
            w.row_mut(i).scale_mut(1.0 / di);
        }
        v = w * v;
        u = q;
    }
    let mut x = v.adjoint();
    for (j, dj) in d.iter().enumerate() {
        x.column_mut(j).scale_mut(*dj);
    }
    let mut ln_sigma = jacobi_ln_singular_values(&mut x)?;
    ln_sigma.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut eps: Vec<f64> = ln_sigma
        .iter()
        .take(n / 2)
        .map(|ls| (-(2.0 / beta) * (ls + ln_scale)).min(0.0))
        .collect();
    eps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(Spectrum { eps, beta, ln_b })
}

fn jacobi_ln_singular_values(x: &mut DMatrix<C64>) -> Result<Vec<f64>> {
    let n = x.ncols();
    for _sweep in 0..60 {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                let (ci, cj) = (x.column(i), x.column(j));
                let alpha: f64 = ci.norm_squared();
                let beta: f64 = cj.norm_squared();
                let gamma: C64 = ci.dotc(&cj);
                let g = gamma.norm();
                if g == 0.0 || g <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                off = off.max(g / (alpha * beta).sqrt());
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let phase = gamma / g;
                let xi = x.column(i).clone_owned();
                let xj = x.column(j).clone_owned();
                x.column_mut(i).copy_from(&(&xi * C64::new(c, 0.0) - &xj * (phase.conj() * s)));
                x.column_mut(j).copy_from(&(&xi * (phase * s) + &xj * C64::new(c, 0.0)));
            }
        }
        if off <= 1e-13 {
            return Ok((0..n).map(|j| x.column(j).norm().ln()).collect());
        }
    }
    Err(Error::NonConvergent)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermalQuantities {
    pub f: f64,
    pub e: f64,
    pub var_e: f64,
    pub s_c: f64,
    pub e0: f64,
    pub lambda0: f64,
    /// `λ0 - λ1`, the smallest `|ε|`.
    pub gap: f64,
}

impl ThermalQuantities {
    pub fn from_spectrum(spec: &Spectrum) -> ThermalQuantities {
        let beta = spec.beta;
        let (mut f, mut e, mut var_e, mut s_c, mut e0) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let mut gap = f64::INFINITY;
        for &eps in &spec.eps {
            let x = beta * eps.abs();
            let z = (0.5 * x).tanh();
            let ln_2cosh = 0.5 * x + (-x).exp().ln_1p();
            f -= ln_2cosh / beta;
            e += 0.5 * eps * z;
            var_e += 0.25 * eps * eps * (1.0 - z * z);
            s_c += binary_entropy(z);
            e0 += 0.5 * eps;
            gap = gap.min(eps.abs());
        }
        let lambda0 = -e0 - spec.ln_b / beta;
        ThermalQuantities { f, e, var_e, s_c, e0, lambda0, gap }
    }

    /// From covariance eigenvalues and the tracked log-weight; stays finite
    /// when some `β|ε|` exceed floating-point range of `tanh`.
    pub fn from_state(zeta: &[f64], log_weight: f64, beta: f64, ln_b: f64) -> ThermalQuantities {
        let mut corr = 0.0;
        let (mut excess, mut var_e, mut s_c) = (0.0, 0.0, 0.0);
        let mut gap = f64::INFINITY;
        for &z in zeta {
            let z = z.clamp(0.0, 1.0);
            corr += (2.0 / (1.0 + z)).ln();
            s_c += binary_entropy(z);
            if z < 1.0 {
                let abs_eps = 2.0 * z.atanh() / beta;
                excess += 0.5 * abs_eps * (1.0 - z);
                var_e += 0.25 * abs_eps * abs_eps * (1.0 - z * z);
                gap = gap.min(abs_eps);
            }
        }
        let e0 = -(log_weight - corr) / beta;
        let f = -log_weight / beta;
        ThermalQuantities { f, e: e0 + excess, var_e, s_c, e0, lambda0: -e0 - ln_b / beta, gap }
    }
}

/// Entropy (nats) of a mode with polarization `z`.
pub fn binary_entropy(z: f64) -> f64 {
    let p = 0.5 * (1.0 + z);
    let q = 0.5 * (1.0 - z);
    let term = |x: f64| if x > 0.0 { -x * x.ln() } else { 0.0 };
    term(p) + term(q)
}

/// Fermionic negativity across `in_a`, via partial time reversal.
pub fn negativity(cov: &Covariance, in_a: &[bool]) -> Result<f64> {
    let n = cov.n;
    if in_a.len() != n {
        return Err(Error::Dimension { expected: n, got: in_a.len() });
    }
    let g = cov.to_hermitian();
    let i = C64::new(0.0, 1.0);
    let gp = DMatrix::<C64>::from_fn(n, n, |r, c| match (in_a[r], in_a[c]) {
        (true, true) => -g[(r, c)],
        (false, false) => g[(r, c)],
        _ => i * g[(r, c)],
    });
    let gm = gp.adjoint();
    let id = DMatrix::<C64>::identity(n, n);
    let lu = (&id + &gp * &gm).lu();
    let pivot = lu.u().diagonal().iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    let solved = lu.solve(&(&id - &gp)).ok_or(Error::SingularComposition(pivot))?;
    let star = &id - (&id - &gm) * solved;
    let herm = (&star + star.adjoint()) * C64::new(0.5, 0.0);
    let xi = herm.symmetric_eigenvalues();
    let mut total = 0.0;
    for &x in xi.iter() {
        let x = x.clamp(-1.0, 1.0);
        total += 0.5 * ((0.5 * (1.0 + x)).sqrt() + (0.5 * (1.0 - x)).sqrt()).ln();
    }
    for z in cov.zeta() {
        total += 0.5 * (0.5 * (1.0 + z * z)).ln();
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_cosh_is_stable() {
        assert!((ln_cosh(0.3) - 0.3f64.cosh().ln()).abs() < 1e-15);
        assert!((ln_cosh(800.0) - (800.0 - LN2)).abs() < 1e-12);
    }

    #[test]
    fn binary_entropy_limits() {
        assert!((binary_entropy(0.0) - LN2).abs() < 1e-15);
        assert_eq!(binary_entropy(1.0), 0.0);
    }
}
