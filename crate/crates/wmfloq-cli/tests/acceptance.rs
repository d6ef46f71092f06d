//! Desk-scale acceptance suite: one verdict line per criterion.
//!
//! `cargo test --release --test acceptance -- 2 7` runs a subset. Results
//! and CSV tables go to `<target>/tmp/acceptance`. With
//! `WMFLOQ_ACCEPTANCE_STRICT=1` any failing criterion makes the run fail.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_4, LN_2, PI};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use wmfloq::circuit::*;
use wmfloq::gaussian::{negativity, ThermalQuantities};
use wmfloq::kitaev::{exact_flux_sum, flux_mc, Boundary, FluxMcConfig, KitaevTorus};
use wmfloq::lattice::{hexagon, single_bond, CustomSpec, Lattice};
use wmfloq::observables::{collapse_transform, negativity_fit, pseudo_threshold};
use wmfloq::oracle::{crosscheck, gaussian_record};
use wmfloq::sampler::{stream_seed, CombSummary};
use wmfloq_cli::args::CommonArgs;
use wmfloq_cli::config::{FileConfig, Mode, RunConfig};
use wmfloq_cli::output::{write_csv, write_json, Row};
use wmfloq_cli::run::{comb_rows, run_points, PointKey};

const STRICT_ENV: &str = "WMFLOQ_ACCEPTANCE_STRICT";

/// Strengths (units of π) of the shared L=6 sweep used by criteria 4 and 5.
const SWEEP_T: [f64; 17] = [
    0.005, 0.02, 0.035, 0.05, 0.065, 0.08, 0.095, 0.11, 0.125, 0.14, 0.155, 0.17, 0.185, 0.2, 0.215, 0.23, 0.245,
];
/// Outer sweeps, burn-in, branch interval, inner sweeps.
const SWEEP_COMB: (usize, usize, usize, usize) = (500, 100, 50, 200);
const SWEEP_COMB_L3: (usize, usize, usize, usize) = (2000, 200, 50, 200);

#[derive(Default)]
struct Checks {
    items: Vec<(bool, String)>,
}

impl Checks {
    fn add(&mut self, pass: bool, msg: impl Into<String>) {
        self.items.push((pass, msg.into()));
    }

    /// `|x - target| <= k σ`.
    fn within(&mut self, label: &str, x: f64, sigma: f64, target: f64, k: f64) {
        let dev = (x - target).abs();
        self.add(dev <= k * sigma, format!("{label}: {x:.6} ± {sigma:.1e} vs {target:.6} ({:.2}σ)", dev / sigma));
    }

    fn pass(&self) -> bool {
        self.items.iter().all(|i| i.0)
    }
}

type Points = Vec<(PointKey, CombSummary)>;

struct Suite {
    out: PathBuf,
    sweep: Option<(Points, Points)>,
    c2: Option<Points>,
}

fn comb_config(sizes: &[usize], ts: &[f64], comb: (usize, usize, usize, usize), seed: u64, out: &Path) -> RunConfig {
    let toml = format!(
        "L = {sizes:?}\nt = {ts:?}\nseed = {seed}\nout = {:?}\n[comb]\nouter_sweeps = {}\nburn_in = {}\nbranch_interval = {}\ninner_sweeps = {}\n",
        out.display().to_string(),
        comb.0,
        comb.1,
        comb.2,
        comb.3
    );
    RunConfig::resolve(Mode::Sweep, FileConfig::from_toml(&toml).unwrap(), &CommonArgs::default()).unwrap()
}

fn run_grid(
    suite: &Suite,
    name: &str,
    sizes: &[usize],
    ts: &[f64],
    comb: (usize, usize, usize, usize),
    seed: u64,
    with_inner: bool,
) -> Points {
    let cfg = comb_config(sizes, ts, comb, seed, &suite.out);
    let results = run_points(&cfg, with_inner, None).unwrap();
    write_csv(&suite.out.join(format!("{name}.csv")), &comb_rows(&cfg, &results)).unwrap();
    results
}

fn stat(points: &Points, l: usize, t: f64, name: &str) -> (f64, f64) {
    let (_, s) = points.iter().find(|(k, _)| k.l == l && (k.t - t).abs() < 1e-12).unwrap();
    let b = s.get(name).unwrap();
    (b.mean, b.stderr)
}

impl Suite {
    fn sweeps(&mut self) -> &(Points, Points) {
        if self.sweep.is_none() {
            let l3 = run_grid(self, "flux_sweep_L3", &[3], &SWEEP_T, SWEEP_COMB_L3, 3, true);
            let l6 = run_grid(self, "flux_sweep_L6", &[6], &SWEEP_T, SWEEP_COMB, 6, true);
            self.sweep = Some((l3, l6));
        }
        self.sweep.as_ref().unwrap()
    }

    fn identities(&mut self) -> &Points {
        if self.c2.is_none() {
            let pts = run_grid(self, "identities_L3", &[3], &[0.1, 0.15, 0.2], (20000, 1000, 100000, 0), 2, false);
            self.c2 = Some(pts);
        }
        self.c2.as_ref().unwrap()
    }
}

fn c1_oracle() -> Checks {
    let mut c = Checks::default();
    let start = Instant::now();
    for (name, spec) in [("single bond, 6 rounds", single_bond(6)), ("hexagon", hexagon())] {
        let circuit = Circuit::custom(&spec).unwrap();
        for t in [0.05, 0.125, 0.2, 0.24] {
            let rep = crosscheck(&circuit, t * PI).unwrap();
            c.add(rep.max_dev() <= 1e-9, format!("{name} t={t}π: max dev {:.1e}", rep.max_dev()));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    c.add(secs < 60.0, format!("runtime {secs:.1}s"));
    c
}

fn c2_identities(suite: &mut Suite) -> Checks {
    let mut c = Checks::default();
    let pts = suite.identities().clone();
    for t in [0.1, 0.15, 0.2] {
        let x = (2.0 * t * PI).sin();
        let (w, ws) = stat(&pts, 3, t, "flux_cross");
        let (p, ps) = stat(&pts, 3, t, "parity_cross");
        c.add(ws <= 0.01 && ps <= 0.01, format!("t={t}π: σ = {ws:.1e}, {ps:.1e}"));
        c.within(&format!("t={t}π [<W>W_s]"), w, ws, x.powi(6), 3.0);
        c.within(&format!("t={t}π [<σσ>s_r]"), p, ps, x, 3.0);
    }
    c
}

fn c3_clifford() -> Checks {
    let mut c = Checks::default();
    let ms = MeasurementStrength::new(FRAC_PI_4 - 1e-6);
    for l in [3usize, 6] {
        let lat = Lattice::new(l).unwrap();
        let circuit = Circuit::floquet(&lat, l).unwrap();
        let n = circuit.n_modes() as f64;
        let mut traj = sample_uniform_trajectory(&mut ChaCha8Rng::seed_from_u64(l as u64), &circuit);
        for (k, slot) in circuit.schedule.slots.iter().enumerate() {
            traj.s[k] = traj.u[slot.bond];
        }
        let res = run_trajectory(ms, &circuit, &traj).unwrap();
        let e = negativity(&res.state.cov, &lat.bipartition().in_a).unwrap();
        let target = l as f64 * LN_2 / 3.0;
        c.add((e - target).abs() <= 1e-6, format!("L={l} negativity {e:.9} vs {target:.9}"));
        let q = ThermalQuantities::from_spectrum(&res.spectrum);
        let target = -LN_2 / (3.0 * (1.0 + 1.0 / l as f64));
        c.add((q.lambda0 / n - target).abs() <= 1e-6, format!("L={l} λ0/N {:.9} vs {target:.9}", q.lambda0 / n));
        let zero = MeasurementStrength::new(0.0);
        let res = run_trajectory(zero, &circuit, &traj).unwrap();
        let q = ThermalQuantities::from_spectrum(&res.spectrum);
        let dev = (q.lambda0 / n + LN_2 / 2.0).abs();
        c.add(dev <= 1e-10, format!("L={l} t=0 λ0/N dev {dev:.1e}"));
    }
    c
}

fn flux_series(points: &Points, l: usize) -> Vec<(f64, f64, f64)> {
    SWEEP_T.iter().map(|&t| {
        let (m, s) = stat(points, l, t, "flux_ea");
        (t, m, s)
    })
    .collect()
}

fn c4_flux(suite: &mut Suite) -> Checks {
    let mut c = Checks::default();
    let (l3, l6) = suite.sweeps().clone();
    let mut t_c = BTreeMap::new();
    for (l, pts) in [(3usize, &l3), (6, &l6)] {
        let series = flux_series(pts, l);
        let worst = series
            .windows(2)
            .map(|w| (w[1].1 - w[0].1) / (w[0].2.hypot(w[1].2)).max(1e-300))
            .fold(f64::INFINITY, f64::min);
        c.add(worst >= -3.0, format!("L={l} monotone: largest drop {:.2}σ", -worst.min(0.0)));
        let (t0, m0, s0) = series[0];
        c.within(&format!("L={l} t={t0}π"), m0, s0, 0.0, 3.0);
        let (t1, m1, s1) = *series.last().unwrap();
        c.within(&format!("L={l} t={t1}π"), m1, s1, 1.0, 3.0);
        let dev = series
            .iter()
            .filter(|p| (0.1..=0.22).contains(&p.0))
            .map(|p| (collapse_transform(p.1, l) - (2.0 * p.0 * PI).sin().powi(12)).abs())
            .fold(0.0, f64::max);
        c.add(dev <= 0.1, format!("L={l} collapse max dev {dev:.3} on [0.1π, 0.22π]"));
        match pseudo_threshold(&series) {
            Ok(th) => {
                t_c.insert(l, th.t_c);
            }
            Err(e) => c.add(false, format!("L={l} threshold: {e}")),
        }
    }
    if let (Some(a), Some(b)) = (t_c.get(&3), t_c.get(&6)) {
        c.add(b <= a, format!("t_c(6) = {b:.4}π, t_c(3) = {a:.4}π"));
    }
    c
}

fn c5_two_peaks(suite: &mut Suite) -> Checks {
    let mut c = Checks::default();
    let (_, l6) = suite.sweeps().clone();
    let cv: Vec<(f64, f64, f64)> = SWEEP_T
        .iter()
        .map(|&t| {
            let (m, s) = stat(&l6, 6, t, "cv");
            (t, m, s)
        })
        .collect();
    c.add(cv.len() >= 15, format!("{} strengths", cv.len()));
    let peaks: Vec<usize> = (1..cv.len() - 1).filter(|&k| cv[k].1 > cv[k - 1].1 && cv[k].1 > cv[k + 1].1).collect();
    let significant = |p: usize, v: usize| cv[p].1 - cv[v].1 > 3.0 * cv[p].2.hypot(cv[v].2);
    let mut best: Option<(usize, usize, usize)> = None;
    for &lo in peaks.iter().filter(|&&k| cv[k].0 < 0.1) {
        for &hi in peaks.iter().filter(|&&k| cv[k].0 > 0.15) {
            let v = (lo + 1..hi).min_by(|&a, &b| cv[a].1.total_cmp(&cv[b].1)).unwrap_or(lo);
            if significant(lo, v) && significant(hi, v) {
                best = Some((lo, v, hi));
            }
        }
    }
    let listing: Vec<String> = cv.iter().map(|p| format!("{:.3}:{:.4}±{:.4}", p.0, p.1, p.2)).collect();
    match best {
        Some((lo, v, hi)) => c.add(
            true,
            format!("peaks at {}π and {}π above the minimum at {}π by > 3σ", cv[lo].0, cv[hi].0, cv[v].0),
        ),
        None => c.add(false, format!("no significant pair of peaks; C_v = [{}]", listing.join(", "))),
    }
    c
}

fn c6_negativity(suite: &mut Suite) -> Checks {
    let mut c = Checks::default();
    let combs = [(3usize, (4000, 400)), (6, (1500, 200)), (9, (500, 100))];
    let mut data: BTreeMap<(u64, usize), (f64, f64)> = BTreeMap::new();
    for &(l, (sweeps, burn)) in &combs {
        let pts = run_grid(suite, &format!("negativity_L{l}"), &[l], &[0.125, 0.22], (sweeps, burn, sweeps, 0), 9, false);
        for t in [0.125f64, 0.22] {
            data.insert((t.to_bits(), l), stat(&pts, l, t, "negativity"));
        }
    }
    let per_l = |t: f64, l: usize| {
        let (m, s) = data[&(f64::to_bits(t), l)];
        (m / l as f64, s / l as f64)
    };
    let (a3, a6, a9) = (per_l(0.125, 3), per_l(0.125, 6), per_l(0.125, 9));
    c.add(
        a3.0 < a6.0 && a6.0 < a9.0 && a9.0 - a3.0 > 3.0 * a9.1.hypot(a3.1),
        format!("t=0.125π ℰ/L: {:.4}±{:.4}, {:.4}±{:.4}, {:.4}±{:.4}", a3.0, a3.1, a6.0, a6.1, a9.0, a9.1),
    );
    let b: Vec<(f64, f64)> = [3, 6, 9].iter().map(|&l| per_l(0.22, l)).collect();
    let flat = (0..3).all(|i| (i + 1..3).all(|j| (b[i].0 - b[j].0).abs() <= 3.0 * b[i].1.hypot(b[j].1)));
    c.add(
        flat,
        format!("t=0.22π ℰ/L: {:.4}±{:.4}, {:.4}±{:.4}, {:.4}±{:.4}", b[0].0, b[0].1, b[1].0, b[1].1, b[2].0, b[2].1),
    );
    let fit_data: Vec<(usize, f64, f64)> = [3, 6, 9]
        .iter()
        .map(|&l| {
            let (m, s) = data[&(f64::to_bits(0.125), l)];
            (l, m, s)
        })
        .collect();
    match negativity_fit(&fit_data) {
        Ok(f) => {
            let (c1, c2) = (f.coef[0], f.coef[1]);
            c.add(c2 > 3.0 * f.stderr[1], format!("c₂ = {c2:.3} ± {:.3}", f.stderr[1]));
            c.add(
                (c1 - 0.18).abs() <= 0.5 * 0.18 && (c2 - 1.10).abs() <= 0.5 * 1.10,
                format!("(c₁, c₂) = ({c1:.3}, {c2:.3}) vs (0.18, 1.10) within 50%"),
            );
        }
        Err(e) => c.add(false, format!("fit failed: {e}")),
    }
    c
}

fn total_probability(spec: &CustomSpec, t: f64) -> f64 {
    let circuit = Circuit::custom(spec).unwrap();
    let ms = MeasurementStrength::from_pi_units(t);
    (0..1usize << circuit.n_slots())
        .map(|m| {
            let s: Vec<i8> = (0..circuit.n_slots()).map(|k| if m >> k & 1 == 0 { 1 } else { -1 }).collect();
            gaussian_record(ms, &circuit, &s).unwrap().prob
        })
        .sum()
}

fn c7_invariants(suite: &mut Suite) -> Checks {
    let mut c = Checks::default();
    let lat = Lattice::new(3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut spectral, mut gauge) = (0.0f64, 0.0f64);
    let mut subsystem = true;
    for r in [3usize, 6] {
        let circuit = Circuit::floquet(&lat, r).unwrap();
        for t in [0.03, 0.08, 0.125, 0.17, 0.22, 0.24] {
            let ms = MeasurementStrength::from_pi_units(t);
            for _ in 0..4 {
                let traj = sample_uniform_trajectory(&mut rng, &circuit);
                let res = run_trajectory(ms, &circuit, &traj).unwrap();
                let f = -circuit.beta() * ThermalQuantities::from_spectrum(&res.spectrum).f;
                spectral = spectral.max((f - res.log_w()).abs() / res.log_w().abs());
                let mut g = traj.clone();
                for site in [0usize, 7, 11] {
                    for b in lat.graph.site_bonds(site) {
                        g.u[b] = -g.u[b];
                    }
                }
                gauge = gauge.max((log_weight(ms, &circuit, &g).unwrap() - res.log_w()).abs());
                let mut h = traj.clone();
                for bond in [2usize, 19] {
                    h.u[bond] = -h.u[bond];
                    for &slot in circuit.schedule.bond_slots(bond) {
                        h.s[slot] = -h.s[slot];
                    }
                }
                subsystem &= log_weight(ms, &circuit, &h).unwrap() == res.log_w();
            }
        }
    }
    c.add(spectral <= 1e-8, format!("spectral vs incremental rel dev {spectral:.1e}"));
    c.add(gauge <= 1e-10, format!("gauge invariance dev {gauge:.1e}"));
    c.add(subsystem, "subsystem symmetry exact");
    let mut norm = 0.0f64;
    for t in [0.0, 0.05, 0.125, 0.2, 0.24] {
        for r in [1usize, 4, 8] {
            norm = norm.max((total_probability(&single_bond(r), t) - 1.0).abs());
        }
        norm = norm.max((total_probability(&hexagon(), t) - 1.0).abs());
    }
    c.add(norm <= 1e-9, format!("POVM normalization dev {norm:.1e}"));
    let pts = suite.identities().clone();
    for t in [0.1, 0.15, 0.2] {
        for name in ["ws_mean", "parity_mean"] {
            let (m, s) = stat(&pts, 3, t, name);
            c.within(&format!("t={t}π {name}"), m, s, 0.0, 3.0);
        }
    }
    c
}

fn c8_kitaev(suite: &Suite) -> Checks {
    let mut c = Checks::default();
    let betas = [0.1, 1.0, 10.0, 100.0];
    let torus = KitaevTorus::new(3).unwrap();
    let exact = exact_flux_sum(&torus, &betas, Boundary::Antiperiodic).unwrap();
    let mut rows = Vec::new();
    let row = |l: usize, beta: f64, name: &str, mean: f64, stderr: f64, tau: f64, n: usize| Row {
        l,
        r: 0,
        t: 1.0 / beta,
        seed: 8,
        observable: name.to_string(),
        mean,
        stderr,
        tau_int: tau,
        n_outer: n,
        n_inner: 0,
    };
    // zero binned error means the chain never left one sector; floor at numerical resolution
    let floor = 1e-9;
    for (k, x) in exact.iter().enumerate() {
        let cfg = FluxMcConfig { sweeps: 8000, burn_in: 800, seed: stream_seed(8, 3, k) };
        let m = flux_mc(&torus, x.beta, cfg, Boundary::Antiperiodic).unwrap();
        for (name, ex, s) in [
            ("energy", x.energy, m.energy),
            ("cv", x.cv, m.cv),
            ("flux", x.flux, m.flux),
            ("negativity", x.negativity, m.negativity),
        ] {
            c.within(&format!("β={} {name}", x.beta), s.mean, s.stderr.max(floor), ex, 3.0);
            rows.push(row(3, x.beta, &format!("ht_exact_{name}"), ex, 0.0, 0.0, 0));
            rows.push(row(3, x.beta, &format!("ht_{name}"), s.mean, s.stderr, s.tau_int, s.n));
        }
        if x.beta == 100.0 {
            c.add(x.flux > 0.99 && m.flux.mean > 0.99, format!("β=100 <W>: exact {:.6}, MC {:.6}", x.flux, m.flux.mean));
        }
    }
    let big = KitaevTorus::new(6).unwrap();
    let m6 = flux_mc(&big, 100.0, FluxMcConfig { sweeps: 600, burn_in: 100, seed: stream_seed(8, 6, 3) }, Boundary::Antiperiodic)
        .unwrap();
    rows.push(row(6, 100.0, "ht_negativity", m6.negativity.mean, m6.negativity.stderr, m6.negativity.tau_int, m6.negativity.n));
    let (e3, e6) = (exact[3].negativity / 3.0, m6.negativity.mean / 6.0);
    let rel = (e6 - e3).abs() / e3;
    c.add(rel <= 0.2, format!("β=100 ℰ/L: L=3 {e3:.4}, L=6 {e6:.4} (rel diff {rel:.3}, tolerance 0.2)"));
    write_csv(&suite.out.join("kitaev.csv"), &rows).unwrap();
    c
}

fn c9_determinism(suite: &Suite) -> Checks {
    let mut c = Checks::default();
    let dir = suite.out.join("determinism");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let base = [
        "point", "--L", "3", "--t", "0.15", "--chains", "2", "--seed", "5", "--outer-sweeps", "120", "--burn-in", "20",
        "--branch-interval", "25", "--inner-sweeps", "20",
    ];
    let run = |out: &str, extra: &[&str]| {
        Command::new(env!("CARGO_BIN_EXE_wmfloq"))
            .args(base)
            .args(["--out", out])
            .args(extra)
            .current_dir(&dir)
            .output()
            .unwrap()
            .status
            .code()
    };
    let a = run("a", &["--threads", "1"]);
    let b = run("b", &["--threads", "2"]);
    let stop = run("c", &["--checkpoint-every", "13", "--stop-after", "57"]);
    let resume = run("c", &["--checkpoint-every", "13", "--resume"]);
    c.add(
        a == Some(0) && b == Some(0) && stop == Some(3) && resume == Some(0),
        format!("exit codes {a:?} {b:?} {stop:?} {resume:?}"),
    );
    let read = |d: &str| std::fs::read(dir.join(d).join("point.csv")).unwrap_or_default();
    let (ra, rb, rc) = (read("a"), read("b"), read("c"));
    c.add(!ra.is_empty() && ra == rb, "identical CSV across runs and thread counts");
    c.add(!ra.is_empty() && ra == rc, "identical CSV after checkpoint and resume");
    c
}

const NAMES: [&str; 9] = [
    "oracle equivalence",
    "exact identities under MC",
    "Clifford anchors",
    "flux purification",
    "two-peak C_v",
    "negativity dichotomy",
    "internal invariants",
    "Kitaev finite T",
    "determinism",
];

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let out = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    std::fs::create_dir_all(&out).unwrap();
    let mut suite = Suite { out: out.clone(), sweep: None, c2: None };
    let mut report = Vec::new();
    let mut failed = 0;
    for id in 1..=9usize {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let checks = match id {
            1 => c1_oracle(),
            2 => c2_identities(&mut suite),
            3 => c3_clifford(),
            4 => c4_flux(&mut suite),
            5 => c5_two_peaks(&mut suite),
            6 => c6_negativity(&mut suite),
            7 => c7_invariants(&mut suite),
            8 => c8_kitaev(&suite),
            _ => c9_determinism(&suite),
        };
        let pass = checks.pass();
        failed += usize::from(!pass);
        let secs = start.elapsed().as_secs_f64();
        let failing: Vec<&str> = checks.items.iter().filter(|i| !i.0).map(|i| i.1.as_str()).collect();
        let detail = if pass { format!("{} checks", checks.items.len()) } else { failing.join("; ") };
        println!("criterion {id} {} {} ({secs:.0}s): {detail}", if pass { "PASS" } else { "FAIL" }, NAMES[id - 1]);
        report.push(json!({
            "criterion": id,
            "name": NAMES[id - 1],
            "pass": pass,
            "seconds": secs,
            "checks": checks.items.iter().map(|i| json!({ "pass": i.0, "detail": i.1 })).collect::<Vec<_>>(),
        }));
    }
    write_json(&out.join("acceptance.json"), &report).unwrap();
    println!("acceptance: {} of {} criteria pass; details in {}", report.len() - failed, report.len(), out.display());
    if failed > 0 && std::env::var(STRICT_ENV).is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
