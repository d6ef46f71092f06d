//! The weak-measurement protocol as a Gaussian circuit: `(t, s, u)` to layer
//! kernels, evolution from the maximally mixed state, weights and spectra.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{self, GaussianState, LayerKernel, Node, Spectrum};
use crate::lattice::{build_custom_graph, CustomSpec, Graph, Lattice, Schedule};

pub const T_MAX: f64 = std::f64::consts::FRAC_PI_4 - 1e-6;

/// Gate angle `t` and the derived strength `τ`, `tanh(τ/2) = tan t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementStrength {
    pub t: f64,
    pub tau: f64,
}

impl MeasurementStrength {
    /// `t` is clamped to `[0, π/4 - 1e-6]`.
    pub fn new(t: f64) -> MeasurementStrength {
        let t = t.clamp(0.0, T_MAX);
        MeasurementStrength { t, tau: 2.0 * t.tan().atanh() }
    }

    /// From `t` in units of π.
    pub fn from_pi_units(t_over_pi: f64) -> MeasurementStrength {
        Self::new(t_over_pi * std::f64::consts::PI)
    }
}

/// A graph with its measurement schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    pub graph: Graph,
    pub schedule: Schedule,
}

impl Circuit {
    pub fn floquet(lattice: &Lattice, r: usize) -> Result<Circuit> {
        Ok(Circuit { graph: lattice.graph.clone(), schedule: Schedule::floquet(lattice, r)? })
    }

    pub fn custom(spec: &CustomSpec) -> Result<Circuit> {
        let (graph, schedule) = build_custom_graph(spec)?;
        Ok(Circuit { graph, schedule })
    }

    pub fn n_modes(&self) -> usize {
        self.graph.n_sites
    }

    pub fn n_slots(&self) -> usize {
        self.schedule.n_slots()
    }

    pub fn n_bonds(&self) -> usize {
        self.graph.n_bonds()
    }

    /// `β = r + 1`.
    pub fn beta(&self) -> f64 {
        self.schedule.n_rounds() as f64
    }

    /// `ln B`, one factor `2 cosh τ` per node.
    pub fn ln_b(&self, ms: MeasurementStrength) -> f64 {
        self.n_slots() as f64 * (std::f64::consts::LN_2 + gaussian::ln_cosh(ms.tau))
    }

    /// Sign `κ` with `Ŵ_p = κ Π u` for the ring-ordered product of bond parities.
    pub fn plaquette_sign(&self, plaquette: usize) -> f64 {
        let p = &self.graph.plaquettes[plaquette];
        let mut word = Vec::with_capacity(2 * p.bonds.len());
        for &b in &p.bonds {
            let bond = &self.graph.bonds[b];
            word.push(bond.a);
            word.push(bond.b);
        }
        // (i c_a c_b)^m over the ring: i^m times the reordering sign
        let mut sign = majorana_word_sign(&mut word);
        match p.bonds.len() % 4 {
            0 => {}
            2 => sign = -sign,
            _ => panic!("odd plaquette length"),
        }
        sign
    }
}

/// Sorts a Majorana word (each index appearing an even number of times) and
/// returns the sign of the reordering; the reduced word is the identity.
fn majorana_word_sign(word: &mut [usize]) -> f64 {
    let mut sign = 1.0;
    let n = word.len();
    for i in 0..n {
        for j in 0..n - 1 - i {
            if word[j] > word[j + 1] {
                word.swap(j, j + 1);
                sign = -sign;
            }
        }
    }
    sign
}

/// Outcome record `s` (one sign per slot) and static gauge field `u` (one per bond).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GaugeTrajectory {
    pub s: Vec<i8>,
    pub u: Vec<i8>,
}

impl GaugeTrajectory {
    pub fn plus(circuit: &Circuit) -> GaugeTrajectory {
        GaugeTrajectory { s: vec![1; circuit.n_slots()], u: vec![1; circuit.n_bonds()] }
    }

    pub fn check(&self, circuit: &Circuit) -> Result<()> {
        if self.s.len() != circuit.n_slots() || self.u.len() != circuit.n_bonds() {
            return Err(Error::Shape(format!(
                "trajectory has {} slots and {} bonds, circuit has {} and {}",
                self.s.len(),
                self.u.len(),
                circuit.n_slots(),
                circuit.n_bonds()
            )));
        }
        if self.s.iter().chain(&self.u).any(|&x| x != 1 && x != -1) {
            return Err(Error::Shape("entries must be +1 or -1".into()));
        }
        Ok(())
    }
}

/// `net(slot) = s(slot)·u(bond(slot))`, grouped by round.
pub fn net_field(traj: &GaugeTrajectory, circuit: &Circuit) -> Result<Vec<Vec<i8>>> {
    traj.check(circuit)?;
    let sched = &circuit.schedule;
    Ok((0..sched.n_rounds())
        .map(|n| {
            let start = sched.offsets[n];
            sched.rounds[n]
                .bonds
                .iter()
                .enumerate()
                .map(|(k, &b)| traj.s[start + k] * traj.u[b])
                .collect()
        })
        .collect())
}

/// Per-slot net signs in slot order.
pub fn net_slots(traj: &GaugeTrajectory, circuit: &Circuit) -> Vec<i8> {
    circuit
        .schedule
        .slots
        .iter()
        .zip(&traj.s)
        .map(|(slot, &s)| s * traj.u[slot.bond])
        .collect()
}

/// Layer kernels for a net field given per slot.
pub fn kernels_from_net(ms: MeasurementStrength, circuit: &Circuit, net: &[i8]) -> Vec<LayerKernel> {
    let sched = &circuit.schedule;
    (0..sched.n_rounds())
        .map(|n| {
            let start = sched.offsets[n];
            let nodes = sched.rounds[n]
                .bonds
                .iter()
                .enumerate()
                .map(|(k, &b)| {
                    let bond = &circuit.graph.bonds[b];
                    Node { a: bond.a, b: bond.b, eta: net[start + k] as f64 }
                })
                .collect();
            LayerKernel { nodes, tau: ms.tau }
        })
        .collect()
}

/// Evolves the maximally mixed state through every round.
pub fn evolve_net(ms: MeasurementStrength, circuit: &Circuit, net: &[i8]) -> Result<GaussianState> {
    let mut state = GaussianState::identity(circuit.n_modes());
    for kernel in kernels_from_net(ms, circuit, net) {
        state.apply_layer(&kernel)?;
    }
    Ok(state)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryResult {
    pub state: GaussianState,
    pub spectrum: Spectrum,
    pub net: Vec<Vec<i8>>,
}

impl TrajectoryResult {
    /// `ln p_su + ln B`.
    pub fn log_w(&self) -> f64 {
        self.state.log_weight
    }
}

pub fn run_trajectory(
    ms: MeasurementStrength,
    circuit: &Circuit,
    traj: &GaugeTrajectory,
) -> Result<TrajectoryResult> {
    let net = net_field(traj, circuit)?;
    let flat = net_slots(traj, circuit);
    let state = evolve_net(ms, circuit, &flat)?;
    let spectrum = gaussian::spectrum(&kernels_from_net(ms, circuit, &flat), circuit.n_modes())?;
    Ok(TrajectoryResult { state, spectrum, net })
}

/// `ln Tr_c exp(-β cHc/4)`; gauge invariant.
pub fn log_weight(ms: MeasurementStrength, circuit: &Circuit, traj: &GaugeTrajectory) -> Result<f64> {
    traj.check(circuit)?;
    Ok(evolve_net(ms, circuit, &net_slots(traj, circuit))?.log_weight)
}

/// `ln q_su`, the normalized probability of the net trajectory.
pub fn ln_probability(ms: MeasurementStrength, circuit: &Circuit, log_w: f64) -> f64 {
    log_w - circuit.ln_b(ms) - 0.5 * circuit.n_modes() as f64 * std::f64::consts::LN_2
}

pub fn sample_uniform_trajectory<R: Rng + ?Sized>(rng: &mut R, circuit: &Circuit) -> GaugeTrajectory {
    let mut sign = || if rng.gen::<bool>() { 1i8 } else { -1i8 };
    let s = (0..circuit.n_slots()).map(|_| sign()).collect();
    let u = (0..circuit.n_bonds()).map(|_| sign()).collect();
    GaugeTrajectory { s, u }
}

/// Quantum expectation of the bond parity `σ^μ_a σ^μ_b` in the Gaussian state.
pub fn bond_parity(circuit: &Circuit, state: &GaussianState, u: &[i8], bond: usize) -> f64 {
    let b = &circuit.graph.bonds[bond];
    u[bond] as f64 * state.cov[(b.a, b.b)]
}

/// `Ŵ_p` in the sector `u`: `κ_p Π_{l∈p} u_l`.
pub fn flux(circuit: &Circuit, u: &[i8], plaquette: usize) -> f64 {
    let prod: i32 = circuit.graph.plaquettes[plaquette].bonds.iter().map(|&b| u[b] as i32).product();
    circuit.plaquette_sign(plaquette) * prod as f64
}
