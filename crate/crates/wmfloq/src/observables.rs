//! Estimators evaluated on sampled states, analytic reference curves, and the
//! fits used on swept data.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, MeasurementStrength};
use crate::error::{Error, Result};
use crate::gaussian::{negativity, Covariance, GaussianState, ThermalQuantities};
use crate::lattice::{Color, Lattice};

/// How an estimator is averaged over the comb.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimatorClass {
    /// Outer-chain average of a gauge-invariant function of the net field.
    NetEnsemble,
    /// Outer configuration paired with inner-chain samples.
    Replica,
}

/// Names and classes of every estimator written by the comb.
pub const ESTIMATORS: &[(&str, EstimatorClass)] = &[
    ("energy", EstimatorClass::NetEnsemble),
    ("var_e", EstimatorClass::NetEnsemble),
    ("s_c", EstimatorClass::NetEnsemble),
    ("negativity", EstimatorClass::NetEnsemble),
    ("flux_cross", EstimatorClass::NetEnsemble),
    ("parity_cross", EstimatorClass::NetEnsemble),
    ("ws_mean", EstimatorClass::NetEnsemble),
    ("parity_mean", EstimatorClass::NetEnsemble),
    ("lambda0", EstimatorClass::NetEnsemble),
    ("gap", EstimatorClass::NetEnsemble),
    ("flux_ea", EstimatorClass::Replica),
    ("parity_ea", EstimatorClass::Replica),
    ("parity_ea_R", EstimatorClass::Replica),
    ("parity_ea_G", EstimatorClass::Replica),
    ("parity_ea_B", EstimatorClass::Replica),
    ("cv", EstimatorClass::Replica),
];

#[derive(Clone, Debug)]
struct Window {
    kappa: f64,
    slots: Vec<usize>,
    bonds: Vec<usize>,
}

/// Precomputed geometry for evaluating estimators on one circuit.
#[derive(Clone, Debug)]
pub struct MeasureContext {
    pub ms: MeasurementStrength,
    pub n_modes: usize,
    pub beta: f64,
    pub ln_b: f64,
    windows: Vec<Window>,
    final_slots: Vec<(usize, usize, usize, usize)>,
    bonds: Vec<(usize, usize, Color)>,
    cut: Option<Vec<bool>>,
}

/// NetEnsemble values for one outer sample (totals, not per site).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuterMeasurement {
    pub thermal: ThermalQuantities,
    pub negativity: f64,
    pub flux_cross: f64,
    pub parity_cross: f64,
    pub ws_mean: f64,
    pub parity_mean: f64,
}

/// Replica values for one inner sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerMeasurement {
    pub flux_ea: f64,
    pub parity_ea: f64,
    pub parity_ea_by_color: [f64; 3],
    pub energy: f64,
    pub var_e: f64,
}

impl MeasureContext {
    pub fn new(circuit: &Circuit, ms: MeasurementStrength, cut: Option<Vec<bool>>) -> MeasureContext {
        let sched = &circuit.schedule;
        let windows = sched
            .final_windows()
            .into_iter()
            .map(|w| Window {
                kappa: circuit.plaquette_sign(w.plaquette),
                slots: w.slots.clone(),
                bonds: circuit.graph.plaquettes[w.plaquette].bonds.clone(),
            })
            .collect();
        let last = sched.n_rounds() - 1;
        let final_slots = sched.rounds[last]
            .bonds
            .iter()
            .enumerate()
            .map(|(k, &b)| {
                let bond = &circuit.graph.bonds[b];
                (sched.offsets[last] + k, b, bond.a, bond.b)
            })
            .collect();
        let bonds = circuit.graph.bonds.iter().map(|b| (b.a, b.b, b.color)).collect();
        MeasureContext {
            ms,
            n_modes: circuit.n_modes(),
            beta: circuit.beta(),
            ln_b: circuit.ln_b(ms),
            windows,
            final_slots,
            bonds,
            cut,
        }
    }

    pub fn n_windows(&self) -> usize {
        self.windows.len()
    }

    pub fn thermal(&self, state: &GaussianState) -> ThermalQuantities {
        ThermalQuantities::from_state(&state.cov.zeta(), state.log_weight, self.beta, self.ln_b)
    }

    /// `aux_u` is a uniform gauge draw used only by the u-odd first moments.
    pub fn outer(&self, state: &GaussianState, net: &[i8], aux_u: &[i8]) -> Result<OuterMeasurement> {
        let thermal = self.thermal(state);
        let negativity = match &self.cut {
            Some(cut) => negativity(&state.cov, cut)?,
            None => 0.0,
        };
        let (mut flux_cross, mut ws_mean) = (0.0, 0.0);
        for w in &self.windows {
            let prod: i32 = w.slots.iter().map(|&k| net[k] as i32).product();
            let gauge: i32 = w.bonds.iter().map(|&b| aux_u[b] as i32).product();
            flux_cross += w.kappa * prod as f64;
            ws_mean += (prod * gauge) as f64;
        }
        let nw = self.windows.len().max(1) as f64;
        let (mut parity_cross, mut parity_mean) = (0.0, 0.0);
        for &(slot, bond, a, b) in &self.final_slots {
            parity_cross += net[slot] as f64 * state.cov[(a, b)];
            parity_mean += aux_u[bond] as f64 * state.cov[(a, b)];
        }
        let nf = self.final_slots.len().max(1) as f64;
        Ok(OuterMeasurement {
            thermal,
            negativity,
            flux_cross: flux_cross / nw,
            parity_cross: parity_cross / nf,
            ws_mean: ws_mean / nw,
            parity_mean: parity_mean / nf,
        })
    }

    /// `outer` is the `u = +1` state of the branch point, `inner` the state at gauge `u`.
    pub fn inner(&self, outer: &Covariance, inner: &GaussianState, u: &[i8]) -> InnerMeasurement {
        let thermal = self.thermal(inner);
        let mut flux_ea = 0.0;
        for w in &self.windows {
            flux_ea += w.bonds.iter().map(|&b| u[b] as i32).product::<i32>() as f64;
        }
        let mut parity_ea = 0.0;
        for &(_, bond, a, b) in &self.final_slots {
            parity_ea += outer[(a, b)] * u[bond] as f64 * inner.cov[(a, b)];
        }
        let mut by_color = [0.0; 3];
        let mut counts = [0usize; 3];
        for (bond, &(a, b, c)) in self.bonds.iter().enumerate() {
            by_color[c.index()] += outer[(a, b)] * u[bond] as f64 * inner.cov[(a, b)];
            counts[c.index()] += 1;
        }
        for (v, &n) in by_color.iter_mut().zip(&counts) {
            if n > 0 {
                *v /= n as f64;
            }
        }
        InnerMeasurement {
            flux_ea: flux_ea / self.windows.len().max(1) as f64,
            parity_ea: parity_ea / self.final_slots.len().max(1) as f64,
            parity_ea_by_color: by_color,
            energy: thermal.e,
            var_e: thermal.var_e,
        }
    }

    /// Per-branch specific heat `β²/N (Var_u E_su + mean_u varE_su)` from the
    /// inner-chain variance of the energy and the mean quantum variance.
    pub fn specific_heat(&self, energy_variance: f64, mean_var_e: f64) -> f64 {
        self.beta * self.beta / self.n_modes as f64 * (energy_variance + mean_var_e)
    }
}

/// Flux-entropy ansatz `(-log₂((1 + sin(2t)¹²)/2))^{(r+1)/4}`.
pub fn su_ansatz(t: f64, r: usize) -> f64 {
    let x = (2.0 * t).sin().powi(12);
    (-((1.0 + x) / 2.0).log2()).max(0.0).powf((r as f64 + 1.0) / 4.0)
}

/// Maps a measured `[⟨W⟩²]` onto the `sin(2t)¹²` axis.
pub fn collapse_transform(w2: f64, r: usize) -> f64 {
    let s_u = (-((1.0 + w2) / 2.0).log2()).max(0.0);
    2.0 * 2f64.powf(-s_u.powf(4.0 / (r as f64 + 1.0))) - 1.0
}

/// `[⟨W⟩²]` implied by the ansatz.
pub fn flux_ea_ansatz(t: f64, r: usize) -> f64 {
    2.0 * 2f64.powf(-su_ansatz(t, r)) - 1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub t_c: f64,
    pub stderr: f64,
}

/// First crossing of `[⟨W⟩²] = 1/2` by linear interpolation; points `(t, mean, stderr)`.
pub fn pseudo_threshold(points: &[(f64, f64, f64)]) -> Result<Threshold> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in pts.windows(2) {
        let ((t0, m0, e0), (t1, m1, e1)) = (w[0], w[1]);
        if (m0 - 0.5) * (m1 - 0.5) <= 0.0 && m0 != m1 {
            let (dt, dm) = (t1 - t0, m1 - m0);
            let t_c = t0 + (0.5 - m0) * dt / dm;
            let d0 = dt * (0.5 - m1) / (dm * dm);
            let d1 = -dt * (0.5 - m0) / (dm * dm);
            return Ok(Threshold { t_c, stderr: ((d0 * e0).powi(2) + (d1 * e1).powi(2)).sqrt() });
        }
    }
    Err(Error::NoCrossing)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub coef: [f64; 2],
    pub stderr: [f64; 2],
    pub covariance: [[f64; 2]; 2],
}

/// Weighted least squares `y = c0 x0 + c1 x1`. Without positive errors the
/// residual variance sets the scale.
fn fit2(rows: &[([f64; 2], f64, f64)]) -> Result<LinearFit> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("{n} points for 2 parameters")));
    }
    let weighted = rows.iter().all(|r| r.2 > 0.0);
    let x = DMatrix::from_fn(n, 2, |i, j| rows[i].0[j] / if weighted { rows[i].2 } else { 1.0 });
    let y = DVector::from_fn(n, |i, _| rows[i].1 / if weighted { rows[i].2 } else { 1.0 });
    let xtx = x.transpose() * &x;
    let inv = xtx.try_inverse().ok_or_else(|| Error::InsufficientData("degenerate design".into()))?;
    let c = &inv * x.transpose() * &y;
    let scale = if weighted {
        1.0
    } else if n > 2 {
        (&y - &x * &c).norm_squared() / (n - 2) as f64
    } else {
        0.0
    };
    let cov = inv * scale;
    Ok(LinearFit {
        coef: [c[0], c[1]],
        stderr: [cov[(0, 0)].sqrt(), cov[(1, 1)].sqrt()],
        covariance: [[cov[(0, 0)], cov[(0, 1)]], [cov[(1, 0)], cov[(1, 1)]]],
    })
}

/// `ℰ = (c₁ L + c₂ L ln L) ln2/3` from `(L, ℰ, stderr)`.
pub fn negativity_fit(data: &[(usize, f64, f64)]) -> Result<LinearFit> {
    let k = std::f64::consts::LN_2 / 3.0;
    let rows: Vec<_> = data
        .iter()
        .map(|&(l, e, err)| {
            let l = l as f64;
            ([k * l, k * l * l.ln()], e, err)
        })
        .collect();
    fit2(&rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZFit {
    pub z: f64,
    pub z_err: f64,
    pub a: f64,
    pub a_err: f64,
}

/// `s = exp(-a r / L^z)` from `(L, r, s)` with `0 < s < 1`, fitted as
/// `ln(-ln s) - ln r = ln a - z ln L`.
pub fn fit_z(data: &[(usize, usize, f64)]) -> Result<ZFit> {
    let mut sizes: Vec<usize> = data.iter().map(|d| d.0).collect();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 3 {
        return Err(Error::InsufficientData(format!("{} sizes, need 3", sizes.len())));
    }
    let mut rows = Vec::new();
    for &(l, r, s) in data {
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::InsufficientData(format!("value {s} outside (0, 1)")));
        }
        rows.push(([1.0, -(l as f64).ln()], (-s.ln()).ln() - (r as f64).ln(), 0.0));
    }
    let f = fit2(&rows)?;
    let a = f.coef[0].exp();
    Ok(ZFit { z: f.coef[1], z_err: f.stderr[1], a, a_err: a * f.stderr[0] })
}

/// Mean `|Γ_ij|` binned by minimum-image distance, in increasing distance.
pub fn correlation_profile(cov: &Covariance, lattice: &Lattice) -> Vec<(f64, f64)> {
    let n = cov.dim();
    let mut bins: BTreeMap<i64, (f64, f64, usize)> = BTreeMap::new();
    for i in 0..n {
        for j in i + 1..n {
            let d = lattice.distance(i, j);
            let key = (d * 1e6).round() as i64;
            let e = bins.entry(key).or_insert((d, 0.0, 0));
            e.1 += cov[(i, j)].abs();
            e.2 += 1;
        }
    }
    bins.into_values().map(|(d, s, c)| (d, s / c as f64)).collect()
}
