//! Binning analysis for correlated Monte Carlo series.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_SERIES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinnedStats {
    pub mean: f64,
    pub stderr: f64,
    pub tau_int: f64,
    pub n: usize,
}

fn naive_stderr(x: &[f64]) -> f64 {
    let m = x.len() as f64;
    let mean = x.iter().sum::<f64>() / m;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (var / m).sqrt()
}

/// Bin sizes double until fewer than `min_bins` bins remain; the error is the
/// mean of the three coarsest levels and `τ_int = ½ (σ_plateau / σ_naive)²`.
pub fn binned(series: &[f64]) -> Result<BinnedStats> {
    let n = series.len();
    if n < MIN_SERIES {
        return Err(Error::SeriesTooShort(n));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let min_bins = if n >= 1024 { 32 } else if n >= 128 { 16 } else { 4 };
    let mut level = series.to_vec();
    let mut errs = vec![naive_stderr(&level)];
    while level.len() / 2 >= min_bins {
        level = level.chunks_exact(2).map(|p| 0.5 * (p[0] + p[1])).collect();
        errs.push(naive_stderr(&level));
    }
    let tail = &errs[errs.len().saturating_sub(3)..];
    let plateau = (tail.iter().sum::<f64>() / tail.len() as f64).max(errs[0]);
    let tau_int = if errs[0] > 0.0 { 0.5 * (plateau / errs[0]).powi(2) } else { 0.5 };
    Ok(BinnedStats { mean, stderr: plateau, tau_int, n })
}

/// Combines independent estimates of one quantity (one per chain).
pub fn merge(parts: &[BinnedStats]) -> Option<BinnedStats> {
    let total: usize = parts.iter().map(|p| p.n).sum();
    if parts.is_empty() || total == 0 {
        return None;
    }
    let w = |p: &BinnedStats| p.n as f64 / total as f64;
    let mean = parts.iter().map(|p| w(p) * p.mean).sum();
    let stderr = parts.iter().map(|p| (w(p) * p.stderr).powi(2)).sum::<f64>().sqrt();
    let tau_int = parts.iter().map(|p| w(p) * p.tau_int).sum();
    Some(BinnedStats { mean, stderr, tau_int, n: total })
}

/// Block jackknife of `f` applied to the column means of `series`
/// (each a time series of equal length). Returns `(f(all), stderr)`.
pub fn jackknife<F>(series: &[&[f64]], n_blocks: usize, f: F) -> Result<(f64, f64)>
where
    F: Fn(&[f64]) -> f64,
{
    let n = series.first().map_or(0, |s| s.len());
    if n < MIN_SERIES || series.iter().any(|s| s.len() != n) {
        return Err(Error::SeriesTooShort(n));
    }
    let k = n_blocks.clamp(2, n);
    let block = n / k;
    let used = block * k;
    let totals: Vec<f64> = series.iter().map(|s| s[..used].iter().sum()).collect();
    let full: Vec<f64> = totals.iter().map(|t| t / used as f64).collect();
    let centre = f(&full);
    let mut leave_out = Vec::with_capacity(k);
    for j in 0..k {
        let means: Vec<f64> = series
            .iter()
            .zip(&totals)
            .map(|(s, t)| (t - s[j * block..(j + 1) * block].iter().sum::<f64>()) / (used - block) as f64)
            .collect();
        leave_out.push(f(&means));
    }
    let mean_lo = leave_out.iter().sum::<f64>() / k as f64;
    let var = leave_out.iter().map(|v| (v - mean_lo).powi(2)).sum::<f64>() * (k - 1) as f64 / k as f64;
    Ok((centre, var.sqrt()))
}
