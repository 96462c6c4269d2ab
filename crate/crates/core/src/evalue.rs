//! E-values and the confounding-strength bound they come from.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// An observed risk ratio brought to the `>= 1` side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrientedRatio {
    pub value: f64,
    /// `true` when the input was below one and has been inverted.
    pub inverted: bool,
}

pub fn orient(rr: f64) -> Result<OrientedRatio> {
    if !(rr > 0.0) || !rr.is_finite() {
        return Err(Error::Domain(format!("risk ratio must be positive and finite, got {rr}")));
    }
    Ok(if rr < 1.0 {
        OrientedRatio { value: 1.0 / rr, inverted: true }
    } else {
        OrientedRatio { value: rr, inverted: false }
    })
}

/// `rr + sqrt(rr (rr - 1))`, after inverting ratios below one.
pub fn evalue(rr_obs: f64) -> Result<(f64, bool)> {
    let o = orient(rr_obs)?;
    Ok((o.value + (o.value * (o.value - 1.0)).sqrt(), o.inverted))
}

/// Minimum confounder strength `max(RR_GU, RR_UB)` that could move an
/// observed ratio `rr_obs` down to `rr_true`.
pub fn bound_threshold(rr_obs: f64, rr_true: f64) -> Result<f64> {
    if !(rr_true >= 1.0) || !(rr_obs >= 1.0) {
        return Err(Error::Domain(format!("need 1 <= rr_true <= rr_obs, got {rr_true} and {rr_obs}")));
    }
    if rr_true > rr_obs {
        return Err(Error::Domain(format!("rr_true {rr_true} exceeds rr_obs {rr_obs}")));
    }
    Ok((rr_obs + (rr_obs * (rr_obs - rr_true)).sqrt()) / rr_true)
}

/// One point of the E-value versus model risk-ratio scatter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub obs: usize,
    pub rr_obs: f64,
    pub evalue: f64,
    pub inverted: bool,
    pub tau_mean: f64,
}

/// Pairs each unit's posterior-mean observed risk ratio and E-value with
/// its posterior-mean model risk ratio.
pub fn compare(rr_obs: &[f64], tau_mean: &[f64]) -> Result<Vec<ComparisonRow>> {
    if rr_obs.len() != tau_mean.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} observed ratios for {} model ratios",
            rr_obs.len(),
            tau_mean.len()
        )));
    }
    rr_obs
        .iter()
        .zip(tau_mean)
        .enumerate()
        .map(|(obs, (&rr, &tau))| {
            let (e, inverted) = evalue(rr)?;
            Ok(ComparisonRow {
                obs,
                rr_obs: rr,
                evalue: e,
                inverted,
                tau_mean: tau,
            })
        })
        .collect()
}

/// Posterior mean over draws of `pB1 / pB0` per unit.
pub fn observed_ratio_means(draws: &crate::reduced_form::ReducedFormDraws) -> Vec<f64> {
    let n = draws.n_obs();
    let mut out = vec![0.0; n];
    for d in 0..draws.n_draws() {
        for (i, o) in out.iter_mut().enumerate() {
            let (_, b1, b0) = draws.triple(d, i);
            *o += b1 / b0.max(crate::projection::PROB_CLAMP);
        }
    }
    out.iter_mut().for_each(|o| *o /= draws.n_draws() as f64);
    out
}

pub fn write_comparison_csv(path: impl AsRef<Path>, rows: &[ComparisonRow], seed: u64) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# e-value comparison seed={seed}")?;
    writeln!(w, "obs,rr_obs,evalue,inverted,tau_mean")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{}", r.obs, r.rr_obs, r.evalue, r.inverted, r.tau_mean)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_values() {
        assert_eq!(evalue(1.0).unwrap(), (1.0, false));
        assert!((evalue(4.0).unwrap().0 - 7.464_101_615).abs() < 1e-8);
        assert!((evalue(4.96).unwrap().0 - 9.392).abs() < 5e-4);
        assert!((bound_threshold(10.0, 2.0).unwrap() - (10.0 + 80f64.sqrt()) / 2.0).abs() < 1e-12);
        assert!((bound_threshold(10.0, 2.0).unwrap() - 9.472).abs() < 1e-3);
    }

    #[test]
    fn inversion_is_flagged() {
        let (e, inv) = evalue(0.25).unwrap();
        assert!(inv);
        assert_eq!(e, evalue(4.0).unwrap().0);
        assert!(evalue(0.0).is_err());
        assert!(evalue(f64::NAN).is_err());
    }

    #[test]
    fn bound_edges() {
        assert_eq!(bound_threshold(3.0, 1.0).unwrap(), evalue(3.0).unwrap().0);
        assert_eq!(bound_threshold(3.0, 3.0).unwrap(), 1.0);
        assert!(bound_threshold(2.0, 3.0).is_err());
    }

    #[test]
    fn empty_comparison() {
        assert!(compare(&[], &[]).unwrap().is_empty());
        assert!(compare(&[1.0], &[]).is_err());
    }

    proptest! {
        #[test]
        fn evalue_dominates_ratio(rr in 1.0f64..1e6) {
            let e = evalue(rr).unwrap().0;
            prop_assert!(e >= rr);
            if rr > 1.0 + 1e-9 { prop_assert!(e > rr); }
        }

        #[test]
        fn bound_decreases_in_truth(rr in 1.0f64..50.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let t_lo = 1.0 + lo * (rr - 1.0);
            let t_hi = 1.0 + hi * (rr - 1.0);
            prop_assert!(bound_threshold(rr, t_lo).unwrap() >= bound_threshold(rr, t_hi).unwrap() - 1e-12);
        }
    }
}
