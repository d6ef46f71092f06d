//! Exact density-matrix simulation of the qubit protocol, used as ground truth
//! for the Gaussian route on small graphs.

use nalgebra::{DMatrix, Matrix2};
use serde::{Deserialize, Serialize};

use crate::circuit::{self, Circuit, GaugeTrajectory, MeasurementStrength};
use crate::error::{Error, Result};
use crate::gaussian::C64;
use crate::lattice::Pauli;

pub const MAX_QUBITS: usize = 14;
pub const MAX_SLOTS: usize = 24;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

pub fn pauli_matrix(p: Pauli) -> Matrix2<C64> {
    match p {
        Pauli::X => Matrix2::new(ZERO, ONE, ONE, ZERO),
        Pauli::Y => Matrix2::new(ZERO, -I, I, ZERO),
        Pauli::Z => Matrix2::new(ONE, ZERO, ZERO, -ONE),
    }
}

/// `i^phase · Π_k P_k` with `P_k ∈ {1, X, Y, Z}` encoded as 0..=3.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PauliString {
    pub phase: u8,
    pub ops: Vec<u8>,
}

fn code(p: Pauli) -> u8 {
    match p {
        Pauli::X => 1,
        Pauli::Y => 2,
        Pauli::Z => 3,
    }
}

impl PauliString {
    pub fn identity(n: usize) -> PauliString {
        PauliString { phase: 0, ops: vec![0; n] }
    }

    pub fn two_site(n: usize, a: usize, b: usize, p: Pauli) -> PauliString {
        let mut s = Self::identity(n);
        s.ops[a] = code(p);
        s.ops[b] = code(p);
        s
    }

    /// `self · other`.
    pub fn mul(&self, other: &PauliString) -> PauliString {
        let mut phase = self.phase + other.phase;
        let ops = self
            .ops
            .iter()
            .zip(&other.ops)
            .map(|(&a, &b)| {
                if a == 0 {
                    b
                } else if b == 0 {
                    a
                } else if a == b {
                    0
                } else {
                    // σ_a σ_b = i ε_abc σ_c
                    if (b + 3 - a) % 3 == 1 {
                        phase += 1;
                    } else {
                        phase += 3;
                    }
                    6 - a - b
                }
            })
            .collect();
        PauliString { phase: phase % 4, ops }
    }

    pub fn coefficient(&self) -> C64 {
        [ONE, I, -ONE, -I][self.phase as usize]
    }
}

/// Dense `2^n × 2^n` density matrix; qubit `k` is bit `k` of the basis index.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    pub n: usize,
    pub rho: DMatrix<C64>,
}

impl DensityMatrix {
    pub fn maximally_mixed(n: usize) -> Result<DensityMatrix> {
        if n == 0 || n > MAX_QUBITS {
            return Err(Error::Shape(format!("qubit count {n} outside 1..={MAX_QUBITS}")));
        }
        let d = 1usize << n;
        Ok(DensityMatrix { n, rho: DMatrix::from_diagonal_element(d, d, C64::new(1.0 / d as f64, 0.0)) })
    }

    pub fn from_matrix(rho: DMatrix<C64>) -> Result<DensityMatrix> {
        let d = rho.nrows();
        if d != rho.ncols() || !d.is_power_of_two() || d < 2 {
            return Err(Error::Shape("density matrix must be 2^n square".into()));
        }
        Ok(DensityMatrix { n: d.trailing_zeros() as usize, rho })
    }

    pub fn trace(&self) -> f64 {
        self.rho.trace().re
    }

    pub fn hermiticity_error(&self) -> f64 {
        let d = self.rho.nrows();
        let mut err: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                err = err.max((self.rho[(i, j)] - self.rho[(j, i)].conj()).norm());
            }
        }
        err
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.rho + self.rho.adjoint()) * C64::new(0.5, 0.0);
        h.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn expectation(&self, p: &PauliString) -> C64 {
        let mut flip = 0usize;
        for (k, &o) in p.ops.iter().enumerate() {
            if o == 1 || o == 2 {
                flip |= 1 << k;
            }
        }
        // P|j> = φ(j)|j ^ flip>, so Tr(ρP) = Σ_j φ(j) ρ[j ^ flip, j]
        let mut acc = ZERO;
        for j in 0..self.rho.nrows() {
            let mut phi = ONE;
            for (k, &o) in p.ops.iter().enumerate() {
                let bit = (j >> k) & 1;
                match o {
                    2 => phi *= if bit == 0 { I } else { -I },
                    3 if bit == 1 => phi = -phi,
                    _ => {}
                }
            }
            acc += phi * self.rho[(j ^ flip, j)];
        }
        acc * p.coefficient()
    }

    /// `ρ → K ρ K†` for a two-qubit `K` (basis `|x_a x_b>`, `x_a` the high bit).
    pub fn sandwich(&mut self, a: usize, b: usize, k: &DMatrix<C64>) -> Result<()> {
        if a >= self.n || b >= self.n || a == b {
            return Err(Error::Shape(format!("invalid qubit pair ({a}, {b})")));
        }
        let d = self.rho.nrows();
        let (ma, mb) = (1usize << a, 1usize << b);
        let idx = |base: usize, l: usize| base | if l & 2 != 0 { ma } else { 0 } | if l & 1 != 0 { mb } else { 0 };
        let bases: Vec<usize> = (0..d).filter(|i| i & (ma | mb) == 0).collect();
        let mut buf = [ZERO; 4];
        for c in 0..d {
            for &base in &bases {
                for (l, v) in buf.iter_mut().enumerate() {
                    *v = self.rho[(idx(base, l), c)];
                }
                for l in 0..4 {
                    self.rho[(idx(base, l), c)] = (0..4).map(|m| k[(l, m)] * buf[m]).sum();
                }
            }
        }
        for r in 0..d {
            for &base in &bases {
                for (l, v) in buf.iter_mut().enumerate() {
                    *v = self.rho[(r, idx(base, l))];
                }
                for l in 0..4 {
                    self.rho[(r, idx(base, l))] = (0..4).map(|m| buf[m] * k[(l, m)].conj()).sum();
                }
            }
        }
        Ok(())
    }

    fn normalize(&mut self) -> f64 {
        let p = self.trace();
        if p > 0.0 {
            self.rho /= C64::new(p, 0.0);
        }
        p
    }
}

fn kron2(x: &Matrix2<C64>, y: &Matrix2<C64>) -> DMatrix<C64> {
    DMatrix::from_fn(4, 4, |r, c| x[(r >> 1, c >> 1)] * y[(r & 1, c & 1)])
}

/// Kraus operator `(cos t + s sin t σσ)/√2`, equal to `exp(τsσσ/2)/√(2cosh τ)`.
pub fn kraus(mu: Pauli, t: f64, s: i8) -> DMatrix<C64> {
    let p = pauli_matrix(mu);
    let pp = kron2(&p, &p);
    let id = DMatrix::<C64>::identity(4, 4);
    (id * C64::new(t.cos(), 0.0) + pp * C64::new(s as f64 * t.sin(), 0.0)) / C64::new(2f64.sqrt(), 0.0)
}

pub fn apply_weak_measurement(
    rho: &DensityMatrix,
    a: usize,
    b: usize,
    mu: Pauli,
    t: f64,
    s: i8,
) -> Result<(DensityMatrix, f64)> {
    let mut out = rho.clone();
    out.sandwich(a, b, &kraus(mu, t, s))?;
    let p = out.normalize();
    Ok((out, p))
}

/// Single-qubit rotation `V` with `V σ^μ V† = Z`.
fn to_z_basis(mu: Pauli) -> Matrix2<C64> {
    let s = 1.0 / 2f64.sqrt();
    let h = Matrix2::new(C64::new(s, 0.0), C64::new(s, 0.0), C64::new(s, 0.0), C64::new(-s, 0.0));
    let s_dag = Matrix2::new(ONE, ZERO, ZERO, -I);
    match mu {
        Pauli::Z => Matrix2::identity(),
        Pauli::X => h,
        Pauli::Y => h * s_dag,
    }
}

/// Three-qubit gate `exp(-iθ/2 Z⊗Z)` on (ancilla, target) in the basis
/// `|x_anc x_a x_b>`, target selected by `on_a`.
fn rzz(theta: f64, on_a: bool) -> DMatrix<C64> {
    DMatrix::from_fn(8, 8, |r, c| {
        if r != c {
            return ZERO;
        }
        let anc = (r >> 2) & 1;
        let tgt = if on_a { (r >> 1) & 1 } else { r & 1 };
        let zz = if anc == tgt { 1.0 } else { -1.0 };
        C64::from_polar(1.0, -0.5 * theta * zz)
    })
}

fn on_system(u: &Matrix2<C64>, on_a: bool) -> DMatrix<C64> {
    let id = Matrix2::<C64>::identity();
    let (ua, ub) = if on_a { (*u, id) } else { (id, *u) };
    DMatrix::from_fn(8, 8, |r, c| {
        if (r >> 2) != (c >> 2) {
            return ZERO;
        }
        ua[((r >> 1) & 1, (c >> 1) & 1)] * ub[(r & 1, c & 1)]
    })
}

/// Effective two-qubit Kraus operator built from the ancilla gate sequence:
/// basis rotations around `R_ZZ(2t)` on (ancilla, a) and `R_ZZ(π/2)` on
/// (ancilla, b), an X-basis ancilla readout `m`, and the correction `iσ_b`
/// when `m = -1`. The recorded outcome is `s = -m`.
pub fn gate_kraus(mu: Pauli, t: f64, s: i8) -> DMatrix<C64> {
    let v = to_z_basis(mu);
    let vd = v.adjoint();
    let u_a = on_system(&vd, true) * rzz(2.0 * t, true) * on_system(&v, true);
    let u_b = on_system(&vd, false) * rzz(std::f64::consts::FRAC_PI_2, false) * on_system(&v, false);
    let u = u_b * u_a;
    let m = -s;
    let h = 1.0 / 2f64.sqrt();
    // ancilla in |+>, projected on <m_x|
    let bra = [C64::new(h, 0.0), C64::new(h * m as f64, 0.0)];
    let ket = [C64::new(h, 0.0), C64::new(h, 0.0)];
    let mut k = DMatrix::<C64>::from_fn(4, 4, |r, c| {
        let mut acc = ZERO;
        for x in 0..2 {
            for y in 0..2 {
                acc += bra[x] * u[((x << 2) | r, (y << 2) | c)] * ket[y];
            }
        }
        acc
    });
    if m == -1 {
        let p = pauli_matrix(mu);
        let corr = kron2(&Matrix2::identity(), &p) * I;
        k = corr * k;
    }
    k
}

pub fn apply_gate_sequence(
    rho: &DensityMatrix,
    a: usize,
    b: usize,
    mu: Pauli,
    t: f64,
    s: i8,
) -> Result<(DensityMatrix, f64)> {
    let mut out = rho.clone();
    out.sandwich(a, b, &gate_kraus(mu, t, s))?;
    let p = out.normalize();
    Ok((out, p))
}

/// Exact outcome probability and conditional expectations for one record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordResult {
    pub s: Vec<i8>,
    pub prob: f64,
    /// `⟨σ^μ_a σ^μ_b⟩` per bond.
    pub bond_parity: Vec<f64>,
    /// Ring-ordered `⟨Ŵ_p⟩` per plaquette.
    pub flux: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Enumeration {
    pub t: f64,
    pub records: Vec<RecordResult>,
}

impl Enumeration {
    pub fn total_probability(&self) -> f64 {
        self.records.iter().map(|r| r.prob).sum()
    }

    /// `Σ_s P(s) f(s)`.
    pub fn average(&self, f: impl Fn(&RecordResult) -> f64) -> f64 {
        self.records.iter().map(|r| r.prob * f(r)).sum()
    }
}

fn bond_operators(circuit: &Circuit) -> Vec<PauliString> {
    let n = circuit.n_modes();
    circuit.graph.bonds.iter().map(|b| PauliString::two_site(n, b.a, b.b, b.color.pauli())).collect()
}

/// Ring-ordered product of the boundary bond parities of each plaquette.
pub fn flux_operators(circuit: &Circuit) -> Vec<PauliString> {
    let ops = bond_operators(circuit);
    circuit
        .graph
        .plaquettes
        .iter()
        .map(|p| p.bonds.iter().fold(PauliString::identity(circuit.n_modes()), |acc, &b| acc.mul(&ops[b])))
        .collect()
}

/// Every record in lexicographic slot order (`+1` before `-1`, first slot most significant).
pub fn enumerate_protocol(circuit: &Circuit, t: f64) -> Result<Enumeration> {
    let n_slots = circuit.n_slots();
    if n_slots > MAX_SLOTS {
        return Err(Error::TooManySlots(n_slots, MAX_SLOTS));
    }
    let bonds = bond_operators(circuit);
    let fluxes = flux_operators(circuit);
    let slot_ops: Vec<(usize, usize, Pauli)> = circuit
        .schedule
        .slots
        .iter()
        .map(|sl| {
            let b = &circuit.graph.bonds[sl.bond];
            (b.a, b.b, b.color.pauli())
        })
        .collect();
    let kraus_pm = [Pauli::X, Pauli::Y, Pauli::Z].map(|mu| [kraus(mu, t, 1), kraus(mu, t, -1)]);
    let pidx = |p: Pauli| match p {
        Pauli::X => 0,
        Pauli::Y => 1,
        Pauli::Z => 2,
    };

    let mut records = Vec::with_capacity(1 << n_slots);
    // unnormalized states along the current branch
    let mut stack = vec![DensityMatrix::maximally_mixed(circuit.n_modes())?];
    let mut s = vec![1i8; n_slots];
    let mut depth = 0usize;
    loop {
        if depth == n_slots {
            let rho = stack.last().unwrap();
            let prob = rho.trace();
            let cond = |p: &PauliString| if prob > 1e-300 { rho.expectation(p).re / prob } else { 0.0 };
            records.push(RecordResult {
                s: s.clone(),
                prob,
                bond_parity: bonds.iter().map(cond).collect(),
                flux: fluxes.iter().map(cond).collect(),
            });
            // backtrack to the deepest slot still at +1
            loop {
                if depth == 0 {
                    return Ok(Enumeration { t, records });
                }
                depth -= 1;
                stack.pop();
                if s[depth] == 1 {
                    s[depth] = -1;
                    break;
                }
                s[depth] = 1;
            }
        }
        let (a, b, mu) = slot_ops[depth];
        let mut next = stack.last().unwrap().clone();
        next.sandwich(a, b, &kraus_pm[pidx(mu)][if s[depth] == 1 { 0 } else { 1 }])?;
        stack.push(next);
        depth += 1;
    }
}

/// Maximum absolute deviations between the dense and Gaussian routes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrosscheckReport {
    pub t: f64,
    pub n_records: usize,
    pub max_dev_prob: f64,
    pub max_dev_parity: f64,
    pub max_dev_flux: f64,
    pub normalization_error: f64,
}

impl CrosscheckReport {
    pub fn max_dev(&self) -> f64 {
        self.max_dev_prob.max(self.max_dev_parity).max(self.max_dev_flux).max(self.normalization_error)
    }
}

/// Gaussian-route record data: `P(s)` summed exactly over `u`, and
/// conditional bond parities and fluxes.
pub fn gaussian_record(ms: MeasurementStrength, circuit: &Circuit, s: &[i8]) -> Result<RecordResult> {
    let nb = circuit.n_bonds();
    if nb > MAX_SLOTS {
        return Err(Error::TooManySlots(nb, MAX_SLOTS));
    }
    let kappa: Vec<f64> = (0..circuit.graph.plaquettes.len()).map(|p| circuit.plaquette_sign(p)).collect();
    let mut total = 0.0;
    let mut parity = vec![0.0; nb];
    let mut flux = vec![0.0; kappa.len()];
    for mask in 0..(1usize << nb) {
        let u: Vec<i8> = (0..nb).map(|b| if mask >> b & 1 == 0 { 1 } else { -1 }).collect();
        let traj = GaugeTrajectory { s: s.to_vec(), u };
        traj.check(circuit)?;
        let state = match circuit::evolve_net(ms, circuit, &circuit::net_slots(&traj, circuit)) {
            Ok(state) => state,
            Err(Error::SingularComposition(_)) => continue,
            Err(e) => return Err(e),
        };
        let q = circuit::ln_probability(ms, circuit, state.log_weight).exp();
        total += q;
        for (b, v) in parity.iter_mut().enumerate() {
            *v += q * circuit::bond_parity(circuit, &state, &traj.u, b);
        }
        for (p, v) in flux.iter_mut().enumerate() {
            let prod: i32 = circuit.graph.plaquettes[p].bonds.iter().map(|&b| traj.u[b] as i32).product();
            *v += q * kappa[p] * prod as f64;
        }
    }
    let norm = if total > 1e-300 { 1.0 / total } else { 0.0 };
    Ok(RecordResult {
        s: s.to_vec(),
        prob: total / (1usize << nb) as f64,
        bond_parity: parity.into_iter().map(|v| v * norm).collect(),
        flux: flux.into_iter().map(|v| v * norm).collect(),
    })
}

pub fn crosscheck(circuit: &Circuit, t: f64) -> Result<CrosscheckReport> {
    let ms = MeasurementStrength::new(t);
    let dense = enumerate_protocol(circuit, ms.t)?;
    let mut rep = CrosscheckReport {
        t: ms.t,
        n_records: dense.records.len(),
        max_dev_prob: 0.0,
        max_dev_parity: 0.0,
        max_dev_flux: 0.0,
        normalization_error: (dense.total_probability() - 1.0).abs(),
    };
    let max_abs = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    for rec in &dense.records {
        let g = gaussian_record(ms, circuit, &rec.s)?;
        rep.max_dev_prob = rep.max_dev_prob.max((g.prob - rec.prob).abs());
        rep.max_dev_parity = rep.max_dev_parity.max(max_abs(&g.bond_parity, &rec.bond_parity));
        rep.max_dev_flux = rep.max_dev_flux.max(max_abs(&g.flux, &rec.flux));
    }
    Ok(rep)
}
