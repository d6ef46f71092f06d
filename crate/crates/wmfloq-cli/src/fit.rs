//! Fits on observables tables.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde_json::{json, Value};
use wmfloq::observables::{collapse_transform, fit_z, negativity_fit, pseudo_threshold};

use crate::output::Row;
use crate::CliError;

/// Strengths (units of π) over which the collapse is assessed.
pub const COLLAPSE_WINDOW: (f64, f64) = (0.1, 0.22);

fn select<'a>(rows: &'a [Row], observable: &str) -> Result<Vec<&'a Row>, CliError> {
    let out: Vec<&Row> = rows.iter().filter(|r| r.observable == observable).collect();
    if out.is_empty() {
        return Err(CliError::Sim(wmfloq::Error::InsufficientData(format!("no `{observable}` rows"))));
    }
    Ok(out)
}

/// Groups rows by a key that orders as `f64` bit patterns of non-negative values.
fn by_t<'a>(rows: &[&'a Row]) -> BTreeMap<u64, Vec<&'a Row>> {
    let mut m: BTreeMap<u64, Vec<&Row>> = BTreeMap::new();
    for r in rows {
        m.entry(r.t.to_bits()).or_default().push(r);
    }
    m
}

pub fn fit(kind: &str, rows: &[Row]) -> Result<Value, CliError> {
    match kind {
        "threshold" => {
            let mut groups: BTreeMap<(usize, usize), Vec<(f64, f64, f64)>> = BTreeMap::new();
            for r in select(rows, "flux_ea")? {
                groups.entry((r.l, r.r)).or_default().push((r.t, r.mean, r.stderr));
            }
            let mut out = Vec::new();
            for ((l, r), pts) in groups {
                let th = pseudo_threshold(&pts)?;
                out.push(json!({ "L": l, "r": r, "t_c": th.t_c, "stderr": th.stderr }));
            }
            Ok(json!({ "kind": "threshold", "units": "pi", "thresholds": out }))
        }
        "z" => {
            let mut out = Vec::new();
            for (_, group) in by_t(&select(rows, "s_c")?) {
                // per-site entropy in units of ln 2 is at most 1/2
                let data: Vec<(usize, usize, f64)> = group.iter().map(|r| (r.l, r.r, 2.0 * r.mean)).collect();
                let f = fit_z(&data)?;
                out.push(json!({ "t": group[0].t, "z": f.z, "z_err": f.z_err, "a": f.a, "a_err": f.a_err }));
            }
            Ok(json!({ "kind": "z", "fits": out }))
        }
        "negativity" => {
            let mut out = Vec::new();
            for (_, group) in by_t(&select(rows, "negativity")?) {
                let data: Vec<(usize, f64, f64)> = group.iter().map(|r| (r.l, r.mean, r.stderr)).collect();
                let f = negativity_fit(&data)?;
                out.push(json!({
                    "t": group[0].t,
                    "c1": f.coef[0],
                    "c1_err": f.stderr[0],
                    "c2": f.coef[1],
                    "c2_err": f.stderr[1],
                    "c2_sigma": f.coef[1] / f.stderr[1],
                }));
            }
            Ok(json!({ "kind": "negativity", "fits": out }))
        }
        "collapse" => {
            let mut out = Vec::new();
            let mut worst: f64 = 0.0;
            for r in select(rows, "flux_ea")? {
                let y = collapse_transform(r.mean, r.r);
                let target = (2.0 * PI * r.t).sin().powi(12);
                let dev = (y - target).abs();
                if r.t >= COLLAPSE_WINDOW.0 && r.t <= COLLAPSE_WINDOW.1 {
                    worst = worst.max(dev);
                }
                out.push(json!({ "L": r.l, "r": r.r, "t": r.t, "collapse": y, "target": target, "deviation": dev }));
            }
            Ok(json!({ "kind": "collapse", "window": COLLAPSE_WINDOW, "max_deviation": worst, "points": out }))
        }
        other => Err(CliError::Config {
            key: "fit.kind".into(),
            msg: format!("unknown kind {other:?}; expected threshold, z, negativity or collapse"),
        }),
    }
}
