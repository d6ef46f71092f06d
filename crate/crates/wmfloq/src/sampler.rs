//! Nested Metropolis sampling: an outer chain over net trajectories at
//! `u = +1` and inner branch chains over the static gauge field.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::binning::{binned, merge, BinnedStats};
use crate::circuit::{evolve_net, kernels_from_net, Circuit, MeasurementStrength};
use crate::error::{Error, Result};
use crate::gaussian::{apply_node, ln_cosh, ln_overlap, node_delta, GaussianState, LayerKernel, DELTA_RANK, MIN_NODE_NORM};
use crate::lattice::{Color, Lattice};
use crate::observables::{EstimatorClass, MeasureContext, OuterMeasurement, ESTIMATORS};

/// Fraction of proposals allowed to hit an unexpected numerical failure.
pub const MAX_FLAGGED_FRACTION: f64 = 1e-3;
/// Tolerance between the tracked and recomputed log-weight.
pub const DRIFT_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CombConfig {
    pub outer_sweeps: usize,
    pub burn_in: usize,
    pub branch_interval: usize,
    pub inner_sweeps: usize,
    pub chains: usize,
    pub seed: u64,
    /// Low-rank / environment caching; `false` re-evaluates every proposal from scratch.
    pub cached: bool,
}

impl Default for CombConfig {
    fn default() -> Self {
        CombConfig {
            outer_sweeps: 2000,
            burn_in: 500,
            branch_interval: 100,
            inner_sweeps: 1000,
            chains: 1,
            seed: 0,
            cached: true,
        }
    }
}

impl CombConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.outer_sweeps {
            return Err(Error::Config(format!(
                "burn_in ({}) must be below outer_sweeps ({})",
                self.burn_in, self.outer_sweeps
            )));
        }
        if self.branch_interval == 0 {
            return Err(Error::Config("branch_interval must be at least 1".into()));
        }
        if self.chains == 0 {
            return Err(Error::Config("chains must be at least 1".into()));
        }
        Ok(())
    }

    /// Inner sweeps discarded before measuring.
    pub fn inner_burn_in(&self) -> usize {
        self.inner_sweeps / 10
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Stable per-stream seed from `(seed, chain, branch)`.
pub fn stream_seed(seed: u64, chain: usize, branch: usize) -> u64 {
    splitmix(splitmix(splitmix(seed) ^ chain as u64) ^ branch as u64)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Counters {
    pub outer_proposed: u64,
    pub outer_accepted: u64,
    pub inner_proposed: u64,
    pub inner_accepted: u64,
    /// Proposals evaluated by a full recomputation because the local update was ill-conditioned.
    pub fallbacks: u64,
    /// Proposals with an unexpected numerical failure.
    pub flagged: u64,
    pub max_drift: f64,
}

/// Everything needed to continue a chain bit-identically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub chain: usize,
    pub sweep: usize,
    pub branches: usize,
    pub net: Vec<i8>,
    pub rng: ChaCha8Rng,
    pub outer_series: BTreeMap<String, Vec<f64>>,
    pub branch_series: BTreeMap<String, Vec<f64>>,
    pub inner_samples: usize,
    pub counters: Counters,
}

impl ChainState {
    pub fn new(comb: &Comb, chain: usize) -> ChainState {
        ChainState {
            chain,
            sweep: 0,
            branches: 0,
            net: vec![1; comb.circuit.n_slots()],
            rng: ChaCha8Rng::seed_from_u64(stream_seed(comb.cfg.seed, chain, 0)),
            outer_series: BTreeMap::new(),
            branch_series: BTreeMap::new(),
            inner_samples: 0,
            counters: Counters::default(),
        }
    }

    pub fn is_done(&self, cfg: &CombConfig) -> bool {
        self.sweep >= cfg.outer_sweeps
    }
}

/// A set of bonds flipped together by one inner-chain proposal.
#[derive(Clone, Debug, PartialEq)]
pub struct GaugeMove {
    pub bonds: Vec<usize>,
    pub slots: Vec<usize>,
    pub first_round: usize,
    pub last_round: usize,
}

impl GaugeMove {
    fn new(circuit: &Circuit, bonds: Vec<usize>) -> Option<GaugeMove> {
        let mut slots: Vec<usize> =
            bonds.iter().flat_map(|&b| circuit.schedule.bond_slots(b).iter().copied()).collect();
        slots.sort_unstable();
        let first_round = circuit.schedule.slots[*slots.first()?].round;
        let last_round = circuit.schedule.slots[*slots.last()?].round;
        Some(GaugeMove { bonds, slots, first_round, last_round })
    }
}

/// Single flips of every measured bond.
pub fn all_bond_moves(circuit: &Circuit) -> Vec<GaugeMove> {
    (0..circuit.n_bonds()).filter_map(|b| GaugeMove::new(circuit, vec![b])).collect()
}

/// Gauge-fixed moves on the torus: every configuration is gauge equivalent to
/// one with `u = +1` on R bonds, so only G and B bonds are flipped singly,
/// plus two dual strings that change the holonomies without creating flux.
pub fn torus_moves(circuit: &Circuit, lattice: &Lattice) -> Vec<GaugeMove> {
    let mut moves = Vec::new();
    for color in [Color::G, Color::B] {
        for b in lattice.graph.bonds_of_color(color) {
            moves.extend(GaugeMove::new(circuit, vec![b]));
        }
    }
    let l = lattice.l;
    let row: Vec<usize> = (0..l).map(|x| lattice.bond_id(x, 0, 2)).collect();
    let col: Vec<usize> = (0..l).map(|y| lattice.bond_id(0, y, 1)).collect();
    moves.extend(GaugeMove::new(circuit, row));
    moves.extend(GaugeMove::new(circuit, col));
    moves
}

/// Immutable description of one comb run at a single `(circuit, t)` point.
#[derive(Clone, Debug)]
pub struct Comb {
    pub circuit: Circuit,
    pub ms: MeasurementStrength,
    pub cfg: CombConfig,
    pub ctx: MeasureContext,
    pub moves: Vec<GaugeMove>,
}

/// Environments `E_n` (product of layers after `n`, sandwiching the identity).
fn backward_envs(n_modes: usize, kernels: &[LayerKernel]) -> Result<Vec<GaussianState>> {
    let n_layers = kernels.len();
    let mut envs = vec![GaussianState::identity(n_modes); n_layers];
    for layer in (1..n_layers).rev() {
        let mut e = envs[layer].clone();
        e.apply_layer(&kernels[layer])?;
        envs[layer - 1] = e;
    }
    Ok(envs)
}

fn flip_slots(net: &[i8], slots: &[usize]) -> Vec<i8> {
    let mut out = net.to_vec();
    for &k in slots {
        out[k] = -out[k];
    }
    out
}

/// `M = (1 - Γ_S Γ_E)⁻¹`, `W = Γ_E M` and `½ ln det(1 - Γ_S Γ_E)`.
struct Woodbury {
    m: DMatrix<f64>,
    w: DMatrix<f64>,
}

impl Woodbury {
    fn new(s: &GaussianState, e: &GaussianState) -> Option<Woodbury> {
        let n = s.cov.dim();
        let ge = e.cov.to_dmatrix();
        let a = DMatrix::<f64>::identity(n, n) - s.cov.to_dmatrix() * &ge;
        let m = a.try_inverse()?;
        let w = &ge * &m;
        Some(Woodbury { m, w })
    }
}

fn is_zero_weight(e: &Error) -> bool {
    matches!(e, Error::SingularComposition(_))
}

impl Comb {
    pub fn new(
        circuit: Circuit,
        lattice: Option<&Lattice>,
        ms: MeasurementStrength,
        cfg: CombConfig,
        cut: Option<Vec<bool>>,
    ) -> Result<Comb> {
        cfg.validate()?;
        let ctx = MeasureContext::new(&circuit, ms, cut);
        let moves = match lattice {
            Some(lat) => torus_moves(&circuit, lat),
            None => all_bond_moves(&circuit),
        };
        Ok(Comb { circuit, ms, cfg, ctx, moves })
    }

    fn full_log_weight(&self, net: &[i8]) -> Result<f64> {
        Ok(evolve_net(self.ms, &self.circuit, net)?.log_weight)
    }

    /// Metropolis test; always consumes one uniform draw.
    fn accept(rng: &mut ChaCha8Rng, delta: f64) -> bool {
        let x: f64 = rng.gen();
        delta >= 0.0 || x < delta.exp()
    }

    /// One pass of single-slot flips over every slot, in time order.
    pub fn outer_sweep(&self, st: &mut ChainState) -> Result<()> {
        if self.cfg.cached {
            self.outer_sweep_cached(st)
        } else {
            self.outer_sweep_direct(st)
        }
    }

    fn outer_sweep_direct(&self, st: &mut ChainState) -> Result<()> {
        let mut cur = self.full_log_weight(&st.net)?;
        for slot in 0..st.net.len() {
            st.counters.outer_proposed += 1;
            let proposal = flip_slots(&st.net, &[slot]);
            let delta = match self.full_log_weight(&proposal) {
                Ok(lw) => lw - cur,
                Err(e) if is_zero_weight(&e) => f64::NEG_INFINITY,
                Err(e) => return Err(e),
            };
            if Self::accept(&mut st.rng, delta) {
                st.net = proposal;
                cur += delta;
                st.counters.outer_accepted += 1;
            }
        }
        Ok(())
    }

    fn outer_sweep_cached(&self, st: &mut ChainState) -> Result<()> {
        let n = self.circuit.n_modes();
        let sched = &self.circuit.schedule;
        let tau = self.ms.tau;
        let ln_c2 = 2.0 * ln_cosh(tau);
        let th = tau.tanh();
        let kernels = kernels_from_net(self.ms, &self.circuit, &st.net);
        let envs = backward_envs(n, &kernels)?;
        let mut s = GaussianState::identity(n);
        let mut tracked: Option<f64> = None;
        for (layer, env) in envs.iter().enumerate() {
            // layer `layer` has not been touched yet in this sweep
            let kernel = &kernels_from_net(self.ms, &self.circuit, &st.net)[layer];
            s.apply_layer(kernel)?;
            let fresh = s.log_weight + env.log_weight + ln_overlap(&s.cov, &env.cov)?;
            if let Some(t) = tracked {
                st.counters.max_drift = st.counters.max_drift.max((t - fresh).abs());
            }
            let mut cur = fresh;
            let mut wb = Woodbury::new(&s, env);
            if wb.is_none() {
                st.counters.flagged += 1;
            }
            let start = sched.offsets[layer];
            for (k, &bond) in sched.rounds[layer].bonds.iter().enumerate() {
                let slot = start + k;
                let (a, b) = (self.circuit.graph.bonds[bond].a, self.circuit.graph.bonds[bond].b);
                let eta = st.net[slot] as f64;
                let g = -eta * th;
                let norm = 1.0 + g * g + 2.0 * g * s.cov[(a, b)];
                st.counters.outer_proposed += 1;

                let mut local = None;
                if let (Some(w), true) = (&wb, norm > MIN_NODE_NORM) {
                    let d = node_delta(&s.cov, a, b, g)?;
                    let l = DMatrix::from_column_slice(n, DELTA_RANK, &d.left);
                    let r = DMatrix::from_column_slice(n, DELTA_RANK, &d.right);
                    let wl = &w.w * &l;
                    let c = DMatrix::<f64>::identity(DELTA_RANK, DELTA_RANK) - r.transpose() * &wl;
                    let det = c.determinant();
                    if det > 0.0 && det.is_finite() {
                        local = Some((ln_c2 + norm.ln() + 0.5 * det.ln(), l, r, wl, c));
                    }
                }

                match local {
                    Some((delta, l, r, wl, c)) => {
                        if Self::accept(&mut st.rng, delta) {
                            let w = wb.as_mut().unwrap();
                            let cinv = c.try_inverse().ok_or(Error::SingularComposition(0.0))?;
                            let rtw = r.transpose() * &w.w;
                            let right = &cinv * &rtw;
                            let ml = &w.m * &l;
                            w.m += &ml * &right;
                            w.w += &wl * &right;
                            apply_node(&mut s.cov, a, b, g)?;
                            s.log_weight += ln_c2 + norm.ln();
                            st.net[slot] = -st.net[slot];
                            cur += delta;
                            st.counters.outer_accepted += 1;
                        }
                    }
                    None => {
                        st.counters.fallbacks += 1;
                        let proposal = flip_slots(&st.net, &[slot]);
                        let current = self.full_log_weight(&st.net)?;
                        let delta = match self.full_log_weight(&proposal) {
                            Ok(lw) => lw - current,
                            Err(e) if is_zero_weight(&e) => f64::NEG_INFINITY,
                            Err(e) => return Err(e),
                        };
                        if Self::accept(&mut st.rng, delta) {
                            st.net = proposal;
                            st.counters.outer_accepted += 1;
                            // rebuild the forward state through this layer
                            let ks = kernels_from_net(self.ms, &self.circuit, &st.net);
                            s = GaussianState::identity(n);
                            for kk in &ks[..=layer] {
                                s.apply_layer(kk)?;
                            }
                            cur = s.log_weight + env.log_weight + ln_overlap(&s.cov, &env.cov)?;
                            wb = Woodbury::new(&s, env);
                        }
                    }
                }
            }
            tracked = Some(cur);
        }
        Ok(())
    }

    /// Outer sweep, then measurement and branching as scheduled.
    pub fn step(&self, st: &mut ChainState) -> Result<()> {
        self.outer_sweep(st)?;
        st.sweep += 1;
        if st.sweep <= self.cfg.burn_in {
            return Ok(());
        }
        let state = evolve_net(self.ms, &self.circuit, &st.net)?;
        let aux_u: Vec<i8> =
            (0..self.circuit.n_bonds()).map(|_| if st.rng.gen::<bool>() { 1 } else { -1 }).collect();
        let m = self.ctx.outer(&state, &st.net, &aux_u)?;
        self.record_outer(st, &m);
        if self.cfg.inner_sweeps > 0 && (st.sweep - self.cfg.burn_in) % self.cfg.branch_interval == 0 {
            st.branches += 1;
            let branch = self.run_branch(st, &state)?;
            for (k, v) in branch.values {
                st.branch_series.entry(k.to_string()).or_default().push(v);
            }
            st.inner_samples += branch.samples;
        }
        let proposals = st.counters.outer_proposed + st.counters.inner_proposed;
        if st.counters.flagged as f64 > MAX_FLAGGED_FRACTION * proposals as f64 && st.counters.flagged > 10 {
            return Err(Error::FlaggedExcess { flagged: st.counters.flagged as usize, total: proposals as usize });
        }
        Ok(())
    }

    fn record_outer(&self, st: &mut ChainState, m: &OuterMeasurement) {
        let n = self.circuit.n_modes() as f64;
        let q = &m.thermal;
        let values = [
            ("energy", q.e / n),
            ("var_e", q.var_e / n),
            ("s_c", q.s_c / (n * std::f64::consts::LN_2)),
            ("negativity", m.negativity),
            ("flux_cross", m.flux_cross),
            ("parity_cross", m.parity_cross),
            ("ws_mean", m.ws_mean),
            ("parity_mean", m.parity_mean),
            ("lambda0", q.lambda0 / n),
            ("gap", q.gap),
        ];
        for (k, v) in values {
            st.outer_series.entry(k.to_string()).or_default().push(v);
        }
    }

    /// Runs one inner chain at the outer configuration `st.net`.
    pub fn run_branch(&self, st: &mut ChainState, outer: &GaussianState) -> Result<BranchResult> {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(self.cfg.seed, st.chain, st.branches));
        let mut inner = InnerChain::new(self, &st.net)?;
        let (mut flux, mut parity) = (0.0, 0.0);
        let (mut e_mean, mut e_m2, mut var_e) = (0.0, 0.0, 0.0);
        let mut by_color = [0.0; 3];
        let mut samples = 0usize;
        for sweep in 0..self.cfg.inner_sweeps {
            st.counters.inner_proposed += self.moves.len() as u64;
            st.counters.inner_accepted += inner.sweep(self, &mut rng)? as u64;
            if sweep >= self.cfg.inner_burn_in() {
                let state = inner.final_state(self)?;
                let m = self.ctx.inner(&outer.cov, &state, &inner.u);
                flux += m.flux_ea;
                parity += m.parity_ea;
                for (acc, v) in by_color.iter_mut().zip(m.parity_ea_by_color) {
                    *acc += v;
                }
                samples += 1;
                let d = m.energy - e_mean;
                e_mean += d / samples as f64;
                e_m2 += d * (m.energy - e_mean);
                var_e += m.var_e;
            }
        }
        let k = samples.max(1) as f64;
        let cv = self.ctx.specific_heat(e_m2 / k, var_e / k);
        Ok(BranchResult {
            values: vec![
                ("flux_ea", flux / k),
                ("parity_ea", parity / k),
                ("parity_ea_R", by_color[0] / k),
                ("parity_ea_G", by_color[1] / k),
                ("parity_ea_B", by_color[2] / k),
                ("cv", cv),
            ],
            samples,
        })
    }

    pub fn run_chain(&self, st: &mut ChainState) -> Result<()> {
        while !st.is_done(&self.cfg) {
            self.step(st)?;
        }
        Ok(())
    }

    /// Merged statistics of every estimator over finished chains.
    pub fn summarize(&self, chains: &[ChainState]) -> Result<CombSummary> {
        let mut estimates = Vec::new();
        for &(name, class) in ESTIMATORS {
            let mut parts = Vec::new();
            for c in chains {
                let series = match class {
                    EstimatorClass::NetEnsemble => c.outer_series.get(name),
                    EstimatorClass::Replica => c.branch_series.get(name),
                };
                if let Some(x) = series {
                    parts.push(series_stats(x)?);
                }
            }
            if let Some(stats) = merge(&parts) {
                estimates.push(Estimate { name: name.to_string(), class, stats });
            }
        }
        let n_outer = chains.iter().map(|c| c.outer_series.get("energy").map_or(0, Vec::len)).sum();
        let n_inner = chains.iter().map(|c| c.inner_samples).sum();
        let mut counters = Counters::default();
        for c in chains {
            counters.outer_proposed += c.counters.outer_proposed;
            counters.outer_accepted += c.counters.outer_accepted;
            counters.inner_proposed += c.counters.inner_proposed;
            counters.inner_accepted += c.counters.inner_accepted;
            counters.fallbacks += c.counters.fallbacks;
            counters.flagged += c.counters.flagged;
            counters.max_drift = counters.max_drift.max(c.counters.max_drift);
        }
        let expected = self.ms.tau.tanh().powi(6);
        let equilibrated = estimates
            .iter()
            .find(|e| e.name == "flux_cross")
            .map_or(true, |e| (e.stats.mean - expected).abs() <= 4.0 * e.stats.stderr.max(1e-12));
        Ok(CombSummary { estimates, n_outer, n_inner, counters, equilibrated })
    }
}

/// Binned statistics, or plain statistics for series shorter than the binning minimum.
pub fn series_stats(x: &[f64]) -> Result<BinnedStats> {
    match binned(x) {
        Ok(s) => Ok(s),
        Err(Error::SeriesTooShort(n)) if n >= 2 => {
            let mean = x.iter().sum::<f64>() / n as f64;
            let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            Ok(BinnedStats { mean, stderr: (var / n as f64).sqrt(), tau_int: 0.5, n })
        }
        Err(Error::SeriesTooShort(1)) => Ok(BinnedStats { mean: x[0], stderr: f64::NAN, tau_int: f64::NAN, n: 1 }),
        Err(e) => Err(e),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BranchResult {
    pub values: Vec<(&'static str, f64)>,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub name: String,
    pub class: EstimatorClass,
    pub stats: BinnedStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CombSummary {
    pub estimates: Vec<Estimate>,
    pub n_outer: usize,
    pub n_inner: usize,
    pub counters: Counters,
    /// `flux_cross` agrees with its exact value within 4σ.
    pub equilibrated: bool,
}

impl CombSummary {
    pub fn get(&self, name: &str) -> Option<&BinnedStats> {
        self.estimates.iter().find(|e| e.name == name).map(|e| &e.stats)
    }
}

/// Inner chain over `u` at fixed outer net field, with lazily rebuilt
/// forward states and backward environments.
pub struct InnerChain {
    pub u: Vec<i8>,
    net: Vec<i8>,
    forward: Vec<Option<GaussianState>>,
    backward: Vec<Option<GaussianState>>,
    log_w: f64,
}

impl InnerChain {
    pub fn new(comb: &Comb, base: &[i8]) -> Result<InnerChain> {
        let layers = comb.circuit.schedule.n_rounds();
        let mut backward = vec![None; layers];
        backward[layers - 1] = Some(GaussianState::identity(comb.circuit.n_modes()));
        let mut chain = InnerChain {
            u: vec![1; comb.circuit.n_bonds()],
            net: base.to_vec(),
            forward: vec![None; layers],
            backward,
            log_w: 0.0,
        };
        chain.log_w = chain.final_state(comb)?.log_weight;
        Ok(chain)
    }

    fn kernels(&self, comb: &Comb, net: &[i8]) -> Vec<LayerKernel> {
        kernels_from_net(comb.ms, &comb.circuit, net)
    }

    /// State after layers `0..=layer` for the current gauge field.
    fn forward(&mut self, comb: &Comb, layer: usize) -> Result<GaussianState> {
        if let Some(s) = &self.forward[layer] {
            return Ok(s.clone());
        }
        let start = (0..layer).rev().find(|&k| self.forward[k].is_some());
        let mut s = match start {
            Some(k) => self.forward[k].clone().unwrap(),
            None => GaussianState::identity(comb.circuit.n_modes()),
        };
        let kernels = self.kernels(comb, &self.net);
        for k in start.map_or(0, |k| k + 1)..=layer {
            s.apply_layer(&kernels[k])?;
            self.forward[k] = Some(s.clone());
        }
        Ok(s)
    }

    /// Environment of the layers after `layer`.
    fn backward(&mut self, comb: &Comb, layer: usize) -> Result<GaussianState> {
        if let Some(e) = &self.backward[layer] {
            return Ok(e.clone());
        }
        let start = (layer + 1..self.backward.len()).find(|&k| self.backward[k].is_some()).unwrap();
        let mut e = self.backward[start].clone().unwrap();
        let kernels = self.kernels(comb, &self.net);
        for k in (layer + 1..=start).rev() {
            e.apply_layer(&kernels[k])?;
            self.backward[k - 1] = Some(e.clone());
        }
        Ok(e)
    }

    pub fn final_state(&mut self, comb: &Comb) -> Result<GaussianState> {
        let last = self.forward.len() - 1;
        self.forward(comb, last)
    }

    /// One proposal per move, each drawn uniformly from the move set.
    /// Returns the number of accepted proposals.
    pub fn sweep(&mut self, comb: &Comb, rng: &mut ChaCha8Rng) -> Result<usize> {
        let mut accepted = 0;
        for _ in 0..comb.moves.len() {
            let mv = &comb.moves[rng.gen_range(0..comb.moves.len())];
            accepted += self.propose(comb, mv, rng)? as usize;
        }
        Ok(accepted)
    }

    pub fn propose(&mut self, comb: &Comb, mv: &GaugeMove, rng: &mut ChaCha8Rng) -> Result<bool> {
        let net = flip_slots(&self.net, &mv.slots);
        let (lo, hi) = (mv.first_round, mv.last_round);
        let mut path = Vec::new();
        let lw = if comb.cfg.cached {
            let eval = (|| -> Result<f64> {
                let mut s = if lo == 0 {
                    GaussianState::identity(comb.circuit.n_modes())
                } else {
                    self.forward(comb, lo - 1)?
                };
                let kernels = self.kernels(comb, &net);
                for k in &kernels[lo..=hi] {
                    s.apply_layer(k)?;
                    path.push(s.clone());
                }
                let e = self.backward(comb, hi)?;
                Ok(s.log_weight + e.log_weight + ln_overlap(&s.cov, &e.cov)?)
            })();
            eval
        } else {
            comb.full_log_weight(&net)
        };
        let delta = match lw {
            Ok(lw) => lw - self.log_w,
            Err(e) if is_zero_weight(&e) => f64::NEG_INFINITY,
            Err(e) => return Err(e),
        };
        if !Comb::accept(rng, delta) {
            return Ok(false);
        }
        self.net = net;
        for &b in &mv.bonds {
            self.u[b] = -self.u[b];
        }
        self.log_w += delta;
        for k in lo..self.forward.len() {
            self.forward[k] = None;
        }
        for (k, s) in path.into_iter().enumerate() {
            self.forward[lo + k] = Some(s);
        }
        for k in 0..hi {
            self.backward[k] = None;
        }
        Ok(true)
    }
}
