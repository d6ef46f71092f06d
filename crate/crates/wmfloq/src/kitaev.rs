//! Finite-temperature honeycomb Kitaev model in the Kekulé frame: Majorana
//! fermions hopping in a static gauge field, summed exactly over flux sectors
//! at L=3 or sampled by Metropolis over `u`.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::binning::{binned, jackknife, BinnedStats};
use crate::error::{Error, Result};
use crate::gaussian::{ln_cosh, negativity, Covariance, C64};
use crate::lattice::{Graph, Lattice};

/// Fermion boundary condition around both torus cycles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    Antiperiodic,
    Periodic,
}

/// `A` with `H = (i/4) Σ A_jk c_j c_k`: each bond `(a, b)` contributes
/// `i u c_a c_b`, i.e. `A_ab = 2u`, `A_ba = -2u`.
pub fn quadratic_hamiltonian(graph: &Graph, u: &[i8]) -> DMatrix<f64> {
    let n = graph.n_sites;
    let mut a = DMatrix::zeros(n, n);
    for (bond, &ub) in graph.bonds.iter().zip(u) {
        a[(bond.a, bond.b)] += 2.0 * ub as f64;
        a[(bond.b, bond.a)] -= 2.0 * ub as f64;
    }
    a
}

/// The `N/2` single-particle energies `ε_k ≥ 0`, descending.
pub fn single_particle_energies(a: &DMatrix<f64>) -> Vec<f64> {
    let sq = -(a * a);
    let sym = (&sq + sq.transpose()) * 0.5;
    let mut ev: Vec<f64> = sym.symmetric_eigenvalues().iter().map(|v| v.max(0.0).sqrt()).collect();
    ev.sort_by(|x, y| y.partial_cmp(x).unwrap());
    ev.into_iter().step_by(2).take(a.nrows() / 2).collect()
}

/// Thermodynamics of free Majoranas with energies `ε_k` (`H = Σ ε_k (n_k - ½)`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FermionThermo {
    pub ln_z: f64,
    pub energy: f64,
    pub var_e: f64,
}

impl FermionThermo {
    pub fn new(eps: &[f64], beta: f64) -> FermionThermo {
        let mut t = FermionThermo { ln_z: 0.0, energy: 0.0, var_e: 0.0 };
        for &e in eps {
            let x = 0.5 * beta * e;
            t.ln_z += ln_cosh(x) + std::f64::consts::LN_2;
            t.energy -= 0.5 * e * x.tanh();
            let sech = 1.0 / x.cosh();
            t.var_e += (0.5 * e * sech).powi(2);
        }
        t
    }
}

/// Covariance `Γ = i tanh(iβA/2)` of the Gibbs state `e^{-βH}`.
pub fn thermal_covariance(a: &DMatrix<f64>, beta: f64) -> Covariance {
    let n = a.nrows();
    let i = C64::new(0.0, 1.0);
    let h = a.map(|x| i * x);
    let eig = h.symmetric_eigen();
    let v = &eig.eigenvectors;
    let d = DMatrix::<C64>::from_diagonal(&eig.eigenvalues.map(|l| C64::new((0.5 * beta * l).tanh(), 0.0)));
    let m = v * d * v.adjoint();
    let g = DMatrix::<f64>::from_fn(n, n, |r, c| (i * m[(r, c)]).re);
    let g = (&g - g.transpose()) * 0.5;
    Covariance::from_dmatrix(&g)
}

/// Torus bookkeeping: dual spanning tree for building flux sectors, seams for
/// the boundary condition, and reference cycles for the holonomies.
#[derive(Clone, Debug)]
pub struct KitaevTorus {
    pub lattice: Lattice,
    /// Bonds flipped to make the fermions antiperiodic along x and along y.
    pub seams: [Vec<usize>; 2],
    /// Closed loops winding along x and along y.
    pub cycles: [Vec<usize>; 2],
    parent: Vec<Option<(usize, usize)>>,
    cut: Vec<bool>,
}

fn toggle(u: &mut [i8], bonds: &[usize]) {
    for &b in bonds {
        u[b] = -u[b];
    }
}

impl KitaevTorus {
    pub fn new(l: usize) -> Result<KitaevTorus> {
        let lattice = Lattice::new(l)?;
        let seams = [
            (0..l).map(|y| lattice.bond_id(0, y, 1)).collect(),
            (0..l).map(|x| lattice.bond_id(x, 0, 2)).collect(),
        ];
        let cycles = [
            (0..l).flat_map(|x| [lattice.bond_id(x, 0, 0), lattice.bond_id(x + 1, 0, 1)]).collect(),
            (0..l).flat_map(|y| [lattice.bond_id(0, y, 0), lattice.bond_id(0, y + 1, 2)]).collect(),
        ];
        let n_plaq = lattice.graph.plaquettes.len();
        let mut parent = vec![None; n_plaq];
        let mut seen = vec![false; n_plaq];
        seen[0] = true;
        let mut queue = VecDeque::from([0usize]);
        while let Some(p) = queue.pop_front() {
            for &b in &lattice.graph.plaquettes[p].bonds {
                for q in lattice.graph.bond_plaquettes(b) {
                    if !seen[q] {
                        seen[q] = true;
                        parent[q] = Some((p, b));
                        queue.push_back(q);
                    }
                }
            }
        }
        let cut = lattice.bipartition().in_a;
        Ok(KitaevTorus { lattice, seams, cycles, parent, cut })
    }

    pub fn n_sites(&self) -> usize {
        self.lattice.n_sites()
    }

    pub fn n_plaquettes(&self) -> usize {
        self.lattice.graph.plaquettes.len()
    }

    /// `w_p = ∏ u` around plaquette `p` (bonds oriented A → B).
    pub fn flux(&self, u: &[i8], p: usize) -> i8 {
        self.lattice.graph.plaquettes[p].bonds.iter().map(|&b| u[b]).product()
    }

    pub fn mean_flux(&self, u: &[i8]) -> f64 {
        let n = self.n_plaquettes();
        (0..n).map(|p| self.flux(u, p) as f64).sum::<f64>() / n as f64
    }

    pub fn holonomies(&self, u: &[i8]) -> [i8; 2] {
        [0, 1].map(|k| self.cycles[k].iter().map(|&b| u[b]).product())
    }

    /// Representative gauge field of the flux pattern `mask` (bit `p` set means
    /// `w_p = -1`, with an even number of set bits) and the given boundary.
    pub fn sector(&self, mask: u64, boundary: Boundary) -> Result<Vec<i8>> {
        let n_plaq = self.n_plaquettes();
        if mask.count_ones() % 2 == 1 || (n_plaq < 64 && mask >> n_plaq != 0) {
            return Err(Error::InvalidGraph(format!("flux pattern {mask:#x} violates the global constraint")));
        }
        let mut u = vec![1i8; self.lattice.n_bonds()];
        for p in 1..n_plaq {
            if mask >> p & 1 == 1 {
                let mut q = p;
                while let Some((up, b)) = self.parent[q] {
                    u[b] = -u[b];
                    q = up;
                }
            }
        }
        for (k, h) in self.holonomies(&u).into_iter().enumerate() {
            if h == -1 {
                toggle(&mut u, &self.seams[k]);
            }
        }
        if boundary == Boundary::Antiperiodic {
            toggle(&mut u, &self.seams[0]);
            toggle(&mut u, &self.seams[1]);
        }
        Ok(u)
    }

    /// Bonds flipped by the single-bond move on `bond`, with the seams needed
    /// to keep both holonomies fixed.
    pub fn move_set(&self, bond: usize) -> Vec<usize> {
        let mut set = vec![bond];
        for k in 0..2 {
            if self.cycles[k].contains(&bond) {
                for &b in &self.seams[k] {
                    match set.iter().position(|&x| x == b) {
                        Some(i) => {
                            set.swap_remove(i);
                        }
                        None => set.push(b),
                    }
                }
            }
        }
        set
    }

    /// Per-sector observables at inverse temperature `beta`.
    pub fn sector_observables(&self, u: &[i8], beta: f64) -> Result<SectorObservables> {
        let a = quadratic_hamiltonian(&self.lattice.graph, u);
        let thermo = FermionThermo::new(&single_particle_energies(&a), beta);
        let cov = thermal_covariance(&a, beta);
        Ok(SectorObservables { thermo, flux: self.mean_flux(u), negativity: negativity(&cov, &self.cut)? })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectorObservables {
    pub thermo: FermionThermo,
    pub flux: f64,
    pub negativity: f64,
}

/// Thermal averages per site; `cv_derivative` is `β² ∂²ln Z/∂β² / N` by
/// finite differences, `cv` the fluctuation formula.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluxSectorResult {
    pub beta: f64,
    pub ln_z: f64,
    pub energy: f64,
    pub cv: f64,
    pub cv_derivative: f64,
    pub flux: f64,
    pub negativity: f64,
}

fn log_sum_exp(x: &[f64]) -> f64 {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Exact sum over all flux sectors of the L=3 torus.
pub fn exact_flux_sum(torus: &KitaevTorus, betas: &[f64], boundary: Boundary) -> Result<Vec<FluxSectorResult>> {
    if torus.lattice.l != 3 {
        return Err(Error::InvalidL(torus.lattice.l));
    }
    let n_plaq = torus.n_plaquettes();
    let sectors: Vec<Vec<i8>> = (0..1u64 << n_plaq)
        .filter(|m| m.count_ones() % 2 == 0)
        .map(|m| torus.sector(m, boundary))
        .collect::<Result<_>>()?;
    let graph = &torus.lattice.graph;
    let spectra: Vec<Vec<f64>> =
        sectors.iter().map(|u| single_particle_energies(&quadratic_hamiltonian(graph, u))).collect();
    let ln_z_at = |beta: f64| {
        let lz: Vec<f64> = spectra.iter().map(|e| FermionThermo::new(e, beta).ln_z).collect();
        log_sum_exp(&lz)
    };
    let n = torus.n_sites() as f64;
    let mut out = Vec::with_capacity(betas.len());
    for &beta in betas {
        let obs: Vec<SectorObservables> =
            sectors.iter().map(|u| torus.sector_observables(u, beta)).collect::<Result<_>>()?;
        let lz: Vec<f64> = obs.iter().map(|o| o.thermo.ln_z).collect();
        let ln_z = log_sum_exp(&lz);
        let ps: Vec<f64> = lz.iter().map(|l| (l - ln_z).exp()).collect();
        let e: f64 = ps.iter().zip(&obs).map(|(p, o)| p * o.thermo.energy).sum();
        let (mut var, mut w, mut neg) = (0.0, 0.0, 0.0);
        for (p, o) in ps.iter().zip(&obs) {
            var += p * ((o.thermo.energy - e).powi(2) + o.thermo.var_e);
            w += p * o.flux;
            neg += p * o.negativity;
        }
        // Richardson-extrapolated central second difference
        let d2 = |h: f64| (ln_z_at(beta + h) - 2.0 * ln_z + ln_z_at(beta - h)) / (h * h);
        let h = 1e-2 * beta.max(0.1);
        let second = (4.0 * d2(0.5 * h) - d2(h)) / 3.0;
        out.push(FluxSectorResult {
            beta,
            ln_z,
            energy: e / n,
            cv: beta * beta * var / n,
            cv_derivative: beta * beta * second / n,
            flux: w,
            negativity: neg,
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FluxMcConfig {
    pub sweeps: usize,
    pub burn_in: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluxMcResult {
    pub beta: f64,
    pub energy: BinnedStats,
    pub cv: BinnedStats,
    pub flux: BinnedStats,
    pub negativity: BinnedStats,
    pub acceptance: f64,
}

/// Metropolis over the gauge field with weight `Z_f(u)` at fixed boundary;
/// each sweep makes one proposal per bond at uniformly random bonds.
pub fn flux_mc(torus: &KitaevTorus, beta: f64, cfg: FluxMcConfig, boundary: Boundary) -> Result<FluxMcResult> {
    if cfg.burn_in >= cfg.sweeps {
        return Err(Error::Config("burn_in must be below sweeps".into()));
    }
    let graph = &torus.lattice.graph;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut u = torus.sector(0, boundary)?;
    let ln_z = |u: &[i8]| FermionThermo::new(&single_particle_energies(&quadratic_hamiltonian(graph, u)), beta).ln_z;
    let mut cur = ln_z(&u);
    let moves: Vec<Vec<usize>> = (0..graph.n_bonds()).map(|b| torus.move_set(b)).collect();
    let n = torus.n_sites() as f64;
    let (mut proposed, mut accepted) = (0u64, 0u64);
    let (mut es, mut vs, mut ws, mut negs) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for sweep in 0..cfg.sweeps {
        for _ in 0..moves.len() {
            let mv = &moves[rng.gen_range(0..moves.len())];
            toggle(&mut u, mv);
            let next = ln_z(&u);
            let x: f64 = rng.gen();
            proposed += 1;
            if next >= cur || x < (next - cur).exp() {
                cur = next;
                accepted += 1;
            } else {
                toggle(&mut u, mv);
            }
        }
        if sweep >= cfg.burn_in {
            let o = torus.sector_observables(&u, beta)?;
            es.push(o.thermo.energy);
            vs.push(o.thermo.var_e);
            ws.push(o.flux);
            negs.push(o.negativity);
        }
    }
    let energy = binned(&es)?;
    // shifted moments avoid cancellation when the variance is tiny
    let e_ref = energy.mean;
    let de: Vec<f64> = es.iter().map(|e| e - e_ref).collect();
    let de2: Vec<f64> = de.iter().zip(&vs).map(|(d, v)| d * d + v).collect();
    let (cv, cv_err) = jackknife(&[&de, &de2], 32, |m| beta * beta * (m[1] - m[0] * m[0]) / n)?;
    let cv = BinnedStats { mean: cv, stderr: cv_err, tau_int: f64::NAN, n: es.len() };
    Ok(FluxMcResult {
        beta,
        energy: BinnedStats { mean: energy.mean / n, stderr: energy.stderr / n, ..energy },
        cv,
        flux: binned(&ws)?,
        negativity: binned(&negs)?,
        acceptance: accepted as f64 / proposed as f64,
    })
}
