//! MCMC convergence summaries for scalar chains: effective sample size and
//! the Geweke early-versus-late mean comparison.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::normal;

pub const MIN_CHAIN: usize = 100;
pub const GEWEKE_BATCHES: usize = 20;
pub const DEFAULT_MONITORED: usize = 1000;

fn check_length(chain: &[f64]) -> Result<()> {
    if chain.len() < MIN_CHAIN {
        return Err(Error::ChainTooShort {
            min: MIN_CHAIN,
            got: chain.len(),
        });
    }
    if chain.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("chain contains non-finite values".into()));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Lag-`k` autocorrelations `rho_0..=rho_max_lag`, normalized by the lag-0
/// autocovariance. Empty for a constant chain.
pub fn autocorrelation(chain: &[f64], max_lag: usize) -> Vec<f64> {
    let n = chain.len();
    let m = mean(chain);
    let centered: Vec<f64> = chain.iter().map(|x| x - m).collect();
    let c0 = centered.iter().map(|d| d * d).sum::<f64>() / n as f64;
    if !(c0 > 0.0) {
        return Vec::new();
    }
    (0..=max_lag.min(n.saturating_sub(1)))
        .map(|k| autocov(&centered, k) / c0)
        .collect()
}

fn autocov(centered: &[f64], k: usize) -> f64 {
    let n = centered.len();
    centered[..n - k].iter().zip(&centered[k..]).map(|(a, b)| a * b).sum::<f64>() / n as f64
}

/// Effective sample size `n / (1 + 2 sum rho_t)`, truncating the sum at the
/// first non-positive pair `rho_{2k} + rho_{2k+1}`.
///
/// Returns `Ok(None)` for a constant chain.
pub fn ess(chain: &[f64]) -> Result<Option<f64>> {
    check_length(chain)?;
    let n = chain.len();
    let m = mean(chain);
    let centered: Vec<f64> = chain.iter().map(|x| x - m).collect();
    let c0 = autocov(&centered, 0);
    if !(c0 > 0.0) || c0 <= 1e-28 * m * m {
        return Ok(None);
    }
    // tau = -1 + 2 * sum of positive pair sums, rho_0 = 1 inside the first pair
    let mut tau = -1.0;
    let mut k = 0;
    while 2 * k + 1 < n {
        let pair = (autocov(&centered, 2 * k) + autocov(&centered, 2 * k + 1)) / c0;
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        k += 1;
    }
    Ok(Some(n as f64 / tau.max(1.0 / n as f64)))
}

/// Variance of a segment mean estimated from non-overlapping batch means.
pub fn batch_means_variance(segment: &[f64], batches: usize) -> f64 {
    let n = segment.len();
    let b = batches.min(n).max(2);
    // mirror-symmetric boundaries so a reversed segment yields the same batches
    let edge = |j: usize| if 2 * j <= b { j * n / b } else { n - (b - j) * n / b };
    let means: Vec<f64> = (0..b).map(|j| mean(&segment[edge(j)..edge(j + 1)])).collect();
    let grand = mean(&means);
    let var = means.iter().map(|x| (x - grand).powi(2)).sum::<f64>() / (b - 1) as f64;
    var / b as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Geweke {
    pub z: f64,
    /// `Phi(z)`.
    pub probability: f64,
}

/// Compares the mean of the first `first_frac` of the chain with the mean of
/// the last `last_frac`, each segment's variance from batch means.
///
/// Returns `Ok(None)` when both segments are constant.
pub fn geweke(chain: &[f64], first_frac: f64, last_frac: f64) -> Result<Option<Geweke>> {
    check_length(chain)?;
    if !(first_frac > 0.0 && last_frac > 0.0 && first_frac + last_frac <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "segment fractions {first_frac} and {last_frac} must be positive and sum to at most 1"
        )));
    }
    let n = chain.len();
    let na = ((first_frac * n as f64).round() as usize).max(2);
    let nb = ((last_frac * n as f64).round() as usize).max(2);
    let (a, b) = (&chain[..na], &chain[n - nb..]);
    let v = batch_means_variance(a, GEWEKE_BATCHES) + batch_means_variance(b, GEWEKE_BATCHES);
    if !(v > 0.0) {
        return Ok(None);
    }
    let z = (mean(a) - mean(b)) / v.sqrt();
    Ok(Some(Geweke {
        z,
        probability: normal::cdf(z),
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainDiagnostics {
    pub id: String,
    pub length: usize,
    pub n_eff: Option<f64>,
    pub geweke: Option<Geweke>,
}

impl ChainDiagnostics {
    pub fn n_eff_ratio(&self) -> Option<f64> {
        self.n_eff.map(|e| e / self.length as f64)
    }
}

pub fn diagnose(id: impl Into<String>, chain: &[f64]) -> Result<ChainDiagnostics> {
    Ok(ChainDiagnostics {
        id: id.into(),
        length: chain.len(),
        n_eff: ess(chain)?,
        geweke: geweke(chain, 0.1, 0.5)?,
    })
}

/// Diagnoses every chain, splitting the work across `threads` workers while
/// keeping input order.
pub fn diagnose_all(chains: &[(String, Vec<f64>)], threads: usize) -> Result<Vec<ChainDiagnostics>> {
    let run = |block: &[(String, Vec<f64>)]| -> Result<Vec<ChainDiagnostics>> {
        block.iter().map(|(id, c)| diagnose(id.clone(), c)).collect()
    };
    if threads <= 1 || chains.len() < 2 * threads {
        return run(chains);
    }
    let chunk = chains.len().div_ceil(threads);
    let parts: Vec<Result<Vec<ChainDiagnostics>>> = std::thread::scope(|s| {
        let handles: Vec<_> = chains.chunks(chunk).map(|b| s.spawn(move || run(b))).collect();
        handles.into_iter().map(|h| h.join().expect("diagnostics worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(chains.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Evenly spaced row indices, at most `count` of them.
pub fn monitored_rows(n_rows: usize, count: usize) -> Vec<usize> {
    let k = count.min(n_rows);
    (0..k).map(|j| j * n_rows / k).collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_summary_csv(path: impl AsRef<Path>, diags: &[ChainDiagnostics], seed: u64) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# chain diagnostics seed={seed}")?;
    writeln!(w, "quantity,n_eff_ratio,geweke_z,geweke_prob")?;
    for d in diags {
        writeln!(
            w,
            "{},{},{},{}",
            d.id,
            opt(d.n_eff_ratio()),
            opt(d.geweke.map(|g| g.z)),
            opt(d.geweke.map(|g| g.probability))
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Long-format traces: `quantity,iteration,value`.
pub fn write_trace_csv(path: impl AsRef<Path>, chains: &[(String, Vec<f64>)], seed: u64) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# chain traces seed={seed}")?;
    writeln!(w, "quantity,iteration,value")?;
    for (id, chain) in chains {
        for (i, v) in chain.iter().enumerate() {
            writeln!(w, "{id},{i},{v}")?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Long-format autocorrelations: `quantity,lag,acf`.
pub fn write_acf_csv(path: impl AsRef<Path>, chains: &[(String, Vec<f64>)], max_lag: usize, seed: u64) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# chain autocorrelations seed={seed}")?;
    writeln!(w, "quantity,lag,acf")?;
    for (id, chain) in chains {
        for (k, r) in autocorrelation(chain, max_lag).iter().enumerate() {
            writeln!(w, "{id},{k},{r}")?;
        }
    }
    w.flush()?;
    Ok(())
}
