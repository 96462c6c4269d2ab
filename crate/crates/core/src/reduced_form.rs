//! Joint reduced-form fit and its on-disk artifact.
//!
//! The artifact is the boundary between fitting and projection: it is
//! written once and every sensitivity sweep reads it back.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bart::{fit_probit_bart, BartConfig, ProbitFitDraws};
use crate::data::ObservationSet;
use crate::error::{Error, Result};
use crate::monotone::fit_monotone;
use crate::rng::{derive_seed, stream};

const MAGIC: &[u8; 8] = b"INDUCERF";
pub const ARTIFACT_VERSION: u32 = 1;

/// The three observable cell probabilities for one unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellProbabilities {
    /// `Pr(B=1, G=1)`
    pub treated_positive: f64,
    /// `Pr(B=1, G=0)`
    pub control_positive: f64,
    /// `Pr(B=0, G=1)`
    pub treated_negative: f64,
}

impl CellProbabilities {
    /// `Pr(B=0, G=0)`, the remaining cell.
    pub fn control_negative(&self) -> f64 {
        1.0 - self.treated_positive - self.control_positive - self.treated_negative
    }
}

pub fn cell_probabilities(p_g: f64, p_b1: f64, p_b0: f64) -> CellProbabilities {
    CellProbabilities {
        treated_positive: p_g * p_b1,
        control_positive: (1.0 - p_g) * p_b0,
        treated_negative: p_g * (1.0 - p_b1),
    }
}

/// Provenance stored alongside the draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactMetadata {
    pub seed: u64,
    pub config: BartConfig,
    pub data: ObservationSet,
}

/// Aligned posterior draws of `Pr(G=1|x)`, `Pr(B=1|G=1,x)` and
/// `Pr(B=1|G=0,x)`; draw `d` of each comes from iteration `d` of its chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedFormDraws {
    n_draws: usize,
    n_obs: usize,
    p_g: Vec<f64>,
    p_b1: Vec<f64>,
    p_b0: Vec<f64>,
    pub metadata: ArtifactMetadata,
}

impl ReducedFormDraws {
    /// Assembles draws, each vector stored draw-major (`d * n_obs + i`).
    pub fn new(
        n_obs: usize,
        p_g: Vec<f64>,
        p_b1: Vec<f64>,
        p_b0: Vec<f64>,
        metadata: ArtifactMetadata,
    ) -> Result<Self> {
        if n_obs == 0 || p_g.is_empty() {
            return Err(Error::EmptyInput("reduced-form draws"));
        }
        if p_g.len() % n_obs != 0 || p_b1.len() != p_g.len() || p_b0.len() != p_g.len() {
            return Err(Error::DimensionMismatch(format!(
                "draw vectors of lengths {}, {}, {} for {n_obs} observations",
                p_g.len(),
                p_b1.len(),
                p_b0.len()
            )));
        }
        if metadata.data.len() != n_obs {
            return Err(Error::DimensionMismatch(format!(
                "metadata has {} rows, draws {n_obs}",
                metadata.data.len()
            )));
        }
        let in_unit = |p: f64| (0.0..=1.0).contains(&p);
        for k in 0..p_g.len() {
            if !in_unit(p_g[k]) || !in_unit(p_b1[k]) || !in_unit(p_b0[k]) {
                return Err(Error::Domain(format!(
                    "probability outside [0, 1] at draw {}, row {}",
                    k / n_obs,
                    k % n_obs
                )));
            }
            if p_b1[k] < p_b0[k] {
                return Err(Error::Domain(format!(
                    "Pr(B=1|G=1) < Pr(B=1|G=0) at draw {}, row {}",
                    k / n_obs,
                    k % n_obs
                )));
            }
        }
        Ok(Self {
            n_draws: p_g.len() / n_obs,
            n_obs,
            p_g,
            p_b1,
            p_b0,
            metadata,
        })
    }

    pub fn n_draws(&self) -> usize {
        self.n_draws
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn treatment(&self) -> &[u8] {
        &self.metadata.data.treatment
    }

    /// `(pG, pB1, pB0)` for draw `d`, row `i`.
    #[inline]
    pub fn triple(&self, d: usize, i: usize) -> (f64, f64, f64) {
        let k = d * self.n_obs + i;
        (self.p_g[k], self.p_b1[k], self.p_b0[k])
    }

    pub fn p_g(&self, d: usize) -> &[f64] {
        &self.p_g[d * self.n_obs..(d + 1) * self.n_obs]
    }

    pub fn p_b1(&self, d: usize) -> &[f64] {
        &self.p_b1[d * self.n_obs..(d + 1) * self.n_obs]
    }

    pub fn p_b0(&self, d: usize) -> &[f64] {
        &self.p_b0[d * self.n_obs..(d + 1) * self.n_obs]
    }

    /// Posterior means `(pG, pB1, pB0)` per row.
    pub fn posterior_mean(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mean = |v: &[f64]| {
            let mut out = vec![0.0; self.n_obs];
            for d in 0..self.n_draws {
                for (o, x) in out.iter_mut().zip(&v[d * self.n_obs..(d + 1) * self.n_obs]) {
                    *o += x;
                }
            }
            out.iter_mut().for_each(|o| *o /= self.n_draws as f64);
            out
        };
        (mean(&self.p_g), mean(&self.p_b1), mean(&self.p_b0))
    }

    /// Keeps only the listed draws, in the given order.
    pub fn select_draws(&self, draws: &[usize]) -> Result<Self> {
        let pick = |v: &[f64]| {
            let mut out = Vec::with_capacity(draws.len() * self.n_obs);
            for &d in draws {
                out.extend_from_slice(&v[d * self.n_obs..(d + 1) * self.n_obs]);
            }
            out
        };
        if let Some(&d) = draws.iter().find(|&&d| d >= self.n_draws) {
            return Err(Error::DimensionMismatch(format!(
                "draw {d} requested from {} draws",
                self.n_draws
            )));
        }
        Self::new(
            self.n_obs,
            pick(&self.p_g),
            pick(&self.p_b1),
            pick(&self.p_b0),
            self.metadata.clone(),
        )
    }

    /// Writes the versioned binary artifact.
    pub fn write_artifact(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        let meta = serde_json::to_vec(&self.metadata)?;
        w.write_all(MAGIC)?;
        w.write_all(&ARTIFACT_VERSION.to_le_bytes())?;
        w.write_all(&(self.n_draws as u64).to_le_bytes())?;
        w.write_all(&(self.n_obs as u64).to_le_bytes())?;
        w.write_all(&(meta.len() as u64).to_le_bytes())?;
        w.write_all(&meta)?;
        for column in [&self.p_g, &self.p_b1, &self.p_b0] {
            for v in column.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_artifact(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|_| Error::Artifact("file too short for header".into()))?;
        if &magic != MAGIC {
            return Err(Error::Artifact("not a reduced-form artifact".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != ARTIFACT_VERSION {
            return Err(Error::Artifact(format!(
                "unsupported artifact version {version} (expected {ARTIFACT_VERSION})"
            )));
        }
        let read_u64 = |r: &mut BufReader<File>| -> Result<u64> {
            let mut b8 = [0u8; 8];
            r.read_exact(&mut b8)
                .map_err(|_| Error::Artifact("truncated header".into()))?;
            Ok(u64::from_le_bytes(b8))
        };
        let n_draws = read_u64(&mut r)? as usize;
        let n_obs = read_u64(&mut r)? as usize;
        let meta_len = read_u64(&mut r)? as usize;
        let total = n_draws
            .checked_mul(n_obs)
            .ok_or_else(|| Error::Artifact("draw dimensions overflow".into()))?;
        let mut meta = vec![0u8; meta_len];
        r.read_exact(&mut meta)
            .map_err(|_| Error::Artifact("truncated metadata".into()))?;
        let metadata: ArtifactMetadata = serde_json::from_slice(&meta)?;
        let mut column = || -> Result<Vec<f64>> {
            let mut bytes = vec![0u8; total * 8];
            r.read_exact(&mut bytes)
                .map_err(|_| Error::Artifact("truncated draw block".into()))?;
            Ok(bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect())
        };
        let p_g = column()?;
        let p_b1 = column()?;
        let p_b0 = column()?;
        Self::new(n_obs, p_g, p_b1, p_b0, metadata)
    }

    /// Long-format CSV export: `draw,obs,p_g,p_b1,p_b0`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "# reduced-form draws seed={}", self.metadata.seed)?;
        writeln!(w, "draw,obs,p_g,p_b1,p_b0")?;
        for d in 0..self.n_draws {
            for i in 0..self.n_obs {
                let (g, b1, b0) = self.triple(d, i);
                writeln!(w, "{d},{i},{g},{b1},{b0}")?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Fits the treatment model and the monotone outcome model with seeds
/// derived from `seed`, and aligns their draws.
pub fn fit_reduced_form(data: &ObservationSet, config: &BartConfig, seed: u64) -> Result<ReducedFormDraws> {
    data.validate()?;
    if data.treatment.iter().all(|&g| g == data.treatment[0]) {
        log::warn!("every row has G={}; the treatment model is degenerate", data.treatment[0]);
    }
    let treatment: ProbitFitDraws = fit_probit_bart(
        &data.x,
        &data.treatment,
        config,
        None,
        derive_seed(seed, stream::TREATMENT),
    )?;
    let outcome = fit_monotone(
        &data.x,
        &data.treatment,
        &data.outcome,
        config,
        None,
        derive_seed(seed, stream::OUTCOME),
    )?;
    let metadata = ArtifactMetadata {
        seed,
        config: config.clone(),
        data: data.clone(),
    };
    ReducedFormDraws::new(
        data.len(),
        treatment.into_values(),
        outcome.treated.into_values(),
        outcome.control.into_values(),
        metadata,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Matrix;
    use crate::normal;
    use crate::rng::chain_rng;
    use rand::Rng;

    #[test]
    fn cells_match_hand_arithmetic() {
        let c = cell_probabilities(0.5, 0.4, 0.2);
        assert!((c.treated_positive - 0.2).abs() < 1e-15);
        assert!((c.control_positive - 0.1).abs() < 1e-15);
        assert!((c.treated_negative - 0.3).abs() < 1e-15);
        assert!((c.control_negative() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn cells_factorize_under_independence() {
        let c = cell_probabilities(0.3, 0.25, 0.25);
        assert!((c.treated_positive / 0.3 - c.control_positive / 0.7).abs() < 1e-15);
    }

    fn tiny_metadata(n: usize) -> ArtifactMetadata {
        let x = Matrix::new(n, 1, (0..n).map(|i| i as f64).collect()).unwrap();
        let g = (0..n).map(|i| (i % 2) as u8).collect();
        let b = (0..n).map(|i| (i % 3 == 0) as u8).collect();
        ArtifactMetadata {
            seed: 9,
            config: BartConfig::default(),
            data: ObservationSet::new(x, g, b).unwrap(),
        }
    }

    #[test]
    fn rejects_non_monotone_draws() {
        let r = ReducedFormDraws::new(2, vec![0.5; 2], vec![0.2, 0.3], vec![0.3, 0.1], tiny_metadata(2));
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn artifact_round_trip() {
        let mut rng = chain_rng(1);
        let (n, d) = (5, 4);
        let p_g: Vec<f64> = (0..n * d).map(|_| rng.random()).collect();
        let p_b1: Vec<f64> = (0..n * d).map(|_| rng.random()).collect();
        let p_b0: Vec<f64> = p_b1.iter().map(|p| p * rng.random::<f64>()).collect();
        let draws = ReducedFormDraws::new(n, p_g, p_b1, p_b0, tiny_metadata(n)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fit.bin");
        draws.write_artifact(&path).unwrap();
        assert_eq!(ReducedFormDraws::read_artifact(&path).unwrap(), draws);

        let mut bytes = std::fs::read(&path).unwrap();
        bytes[8] = 99;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(ReducedFormDraws::read_artifact(&path), Err(Error::Artifact(_))));
        std::fs::write(&path, b"nonsense").unwrap();
        assert!(matches!(ReducedFormDraws::read_artifact(&path), Err(Error::Artifact(_))));
    }

    #[test]
    fn selection_keeps_order() {
        let n = 2;
        let p_g = vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        let draws = ReducedFormDraws::new(n, p_g.clone(), vec![0.9; 6], vec![0.1; 6], tiny_metadata(n)).unwrap();
        let sel = draws.select_draws(&[2, 0]).unwrap();
        assert_eq!(sel.p_g(0), &[0.5, 0.6]);
        assert_eq!(sel.p_g(1), &[0.1, 0.2]);
        assert!(draws.select_draws(&[3]).is_err());
    }

    #[test]
    fn fit_is_aligned_and_monotone() {
        let mut rng = chain_rng(2);
        let n = 600;
        let x = Matrix::new(n, 2, (0..2 * n).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        let g: Vec<u8> = (0..n).map(|i| rng.random_bool(normal::cdf(0.5 * x.get(i, 1))) as u8).collect();
        let b: Vec<u8> = (0..n)
            .map(|i| rng.random_bool(normal::cdf(x.get(i, 0) + 0.5 * g[i] as f64 - 0.5)) as u8)
            .collect();
        let data = ObservationSet::new(x, g, b).unwrap();
        let cfg = BartConfig { trees: 20, burn_in: 50, draws: 40, ..Default::default() };
        let draws = fit_reduced_form(&data, &cfg, 3).unwrap();
        assert_eq!(draws.n_draws(), 40);
        assert_eq!(draws.n_obs(), n);
        for d in 0..draws.n_draws() {
            for i in 0..n {
                let (pg, b1, b0) = draws.triple(d, i);
                assert!(pg > 0.0 && pg < 1.0 && b1 >= b0);
                let c = cell_probabilities(pg, b1, b0);
                let sum = c.treated_positive + c.control_positive + c.treated_negative + c.control_negative();
                assert!((sum - 1.0).abs() < 1e-12);
            }
        }
    }
}
