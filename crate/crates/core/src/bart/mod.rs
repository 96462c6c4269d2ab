//! Probit Bayesian additive regression trees.

mod cutpoints;
mod latent;
mod sampler;
mod tree;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use cutpoints::{build_cutpoints, BinnedRows, CutpointGrid};
pub use latent::{draw_latent, sample_latent, truncated_standard_normal};
pub use sampler::MoveOutcome;
pub use tree::{log_tree_prior, split_probability, DecisionTree, Node, NodeKind, NO_NODE};

pub(crate) use sampler::ProbitEnsemble;

use crate::data::Matrix;
use crate::error::{Error, Result};
use crate::normal;
use crate::rng::chain_rng;

/// Prior and chain settings shared by every BART model in a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BartConfig {
    pub trees: usize,
    /// Prior probability that the root splits.
    pub split_base: f64,
    /// Decay of the split probability with depth.
    pub split_power: f64,
    /// Leaf prior scale: `sd = 0.5 / (k sqrt(trees))`.
    pub k: f64,
    pub cutpoints: usize,
    pub min_leaf_size: usize,
    pub burn_in: usize,
    pub draws: usize,
    pub thin: usize,
}

impl Default for BartConfig {
    fn default() -> Self {
        Self {
            trees: 100,
            split_base: 0.95,
            split_power: 2.0,
            k: 2.0,
            cutpoints: 100,
            min_leaf_size: 5,
            burn_in: 1000,
            draws: 1000,
            thin: 1,
        }
    }
}

impl BartConfig {
    /// Standard deviation of the normal prior on each leaf value.
    pub fn leaf_sd(&self) -> f64 {
        0.5 / (self.k * (self.trees as f64).sqrt())
    }

    pub fn iterations(&self) -> usize {
        self.burn_in + self.draws * self.thin
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.trees == 0 {
            return bad("trees must be positive");
        }
        if !(self.split_base > 0.0 && self.split_base < 1.0) {
            return bad("split_base must lie in (0, 1)");
        }
        if !(self.split_power >= 0.0) || !self.split_power.is_finite() {
            return bad("split_power must be non-negative");
        }
        if !(self.k > 0.0) || !self.k.is_finite() {
            return bad("k must be positive");
        }
        if self.cutpoints == 0 || self.cutpoints > u16::MAX as usize - 1 {
            return bad("cutpoints must lie in 1..65534");
        }
        if self.min_leaf_size == 0 {
            return bad("min_leaf_size must be positive");
        }
        if self.draws == 0 {
            return bad("draws must be positive");
        }
        if self.thin == 0 {
            return bad("thin must be positive");
        }
        Ok(())
    }

    /// `true` when post-burn-in iteration `it` (0-based, counting burn-in) is kept.
    pub(crate) fn keeps(&self, it: usize) -> bool {
        it >= self.burn_in && (it - self.burn_in + 1).is_multiple_of(self.thin)
    }
}

/// Receives per-draw probability vectors as they are produced.
pub trait DrawSink {
    fn record(&mut self, probabilities: &[f64]);
}

/// Posterior draws of fitted probabilities, stored draw-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbitFitDraws {
    n_rows: usize,
    values: Vec<f64>,
    pub seed: u64,
}

impl ProbitFitDraws {
    pub fn new(n_rows: usize, seed: u64) -> Self {
        Self {
            n_rows,
            values: Vec::new(),
            seed,
        }
    }

    pub fn from_values(n_rows: usize, values: Vec<f64>, seed: u64) -> Result<Self> {
        if n_rows == 0 || !values.len().is_multiple_of(n_rows) {
            return Err(Error::DimensionMismatch(format!(
                "{} values do not split into rows of {n_rows}",
                values.len()
            )));
        }
        Ok(Self { n_rows, values, seed })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_draws(&self) -> usize {
        if self.n_rows == 0 {
            0
        } else {
            self.values.len() / self.n_rows
        }
    }

    pub fn draw(&self, d: usize) -> &[f64] {
        &self.values[d * self.n_rows..(d + 1) * self.n_rows]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Posterior mean per row.
    pub fn mean(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_rows];
        for d in 0..self.n_draws() {
            for (o, v) in out.iter_mut().zip(self.draw(d)) {
                *o += v;
            }
        }
        let n = self.n_draws().max(1) as f64;
        out.iter_mut().for_each(|o| *o /= n);
        out
    }

    /// Draws of a single row.
    pub fn row_trace(&self, row: usize) -> Vec<f64> {
        (0..self.n_draws()).map(|d| self.draw(d)[row]).collect()
    }
}

impl DrawSink for ProbitFitDraws {
    fn record(&mut self, probabilities: &[f64]) {
        debug_assert_eq!(probabilities.len(), self.n_rows);
        self.values.extend_from_slice(probabilities);
    }
}

/// Running posterior mean without storing draws.
#[derive(Debug, Clone, Default)]
pub struct RunningMean {
    sum: Vec<f64>,
    count: usize,
}

impl RunningMean {
    pub fn new(n_rows: usize) -> Self {
        Self {
            sum: vec![0.0; n_rows],
            count: 0,
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> Vec<f64> {
        let n = self.count.max(1) as f64;
        self.sum.iter().map(|s| s / n).collect()
    }
}

impl DrawSink for RunningMean {
    fn record(&mut self, probabilities: &[f64]) {
        for (s, p) in self.sum.iter_mut().zip(probabilities) {
            *s += p;
        }
        self.count += 1;
    }
}

/// Linear-predictor offset `Φ⁻¹(ȳ)`, with the rate pulled half an
/// observation away from 0 and 1.
pub(crate) fn probit_offset(y: impl Iterator<Item = u8>) -> f64 {
    let (mut n, mut ones) = (0usize, 0usize);
    for v in y {
        n += 1;
        ones += v as usize;
    }
    if n == 0 {
        return 0.0;
    }
    let half = 0.5 / n as f64;
    let rate = (ones as f64 / n as f64).clamp(half, 1.0 - half);
    normal::quantile(rate)
}

pub(crate) fn check_binary(y: &[u8], what: &'static str) -> Result<()> {
    if let Some(i) = y.iter().position(|&v| v > 1) {
        return Err(Error::Domain(format!("{what} value {} at row {i} is not 0/1", y[i])));
    }
    Ok(())
}

/// Fits `P(y = 1 | x) = Φ(offset + Σ trees)` and records fitted probabilities
/// for the training rows followed by `predict_rows` at every kept draw.
pub fn fit_probit_bart_into<S: DrawSink>(
    x: &Matrix,
    y: &[u8],
    config: &BartConfig,
    predict_rows: Option<&Matrix>,
    seed: u64,
    sink: &mut S,
) -> Result<()> {
    config.validate()?;
    if x.rows() == 0 {
        return Err(Error::EmptyInput("training rows"));
    }
    if y.len() != x.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} outcomes for {} rows",
            y.len(),
            x.rows()
        )));
    }
    check_binary(y, "outcome")?;
    if y.iter().all(|&v| v == y[0]) {
        log::warn!("outcome is constant; the fit is driven by the prior");
    }

    let grid = build_cutpoints(x, config.cutpoints)?;
    let mut bins = grid.bin_matrix(x)?;
    let mut active = vec![true; x.rows()];
    let mut labels = y.to_vec();
    if let Some(p) = predict_rows {
        bins = bins.concat(&grid.bin_matrix(p)?);
        active.resize(bins.rows(), false);
        labels.resize(bins.rows(), 0);
    }
    let offset = probit_offset(y.iter().copied());
    let mut model = ProbitEnsemble::new(config, grid, bins, active, offset);
    let mut rng = chain_rng(seed);
    let mut probs = vec![0.0; model.rows()];
    for it in 0..config.iterations() {
        model.sweep(&labels, &mut rng);
        if config.keeps(it) {
            for (i, p) in probs.iter_mut().enumerate() {
                *p = model.probability(i);
            }
            sink.record(&probs);
        }
    }
    Ok(())
}

/// [`fit_probit_bart_into`] with every draw stored.
pub fn fit_probit_bart(
    x: &Matrix,
    y: &[u8],
    config: &BartConfig,
    predict_rows: Option<&Matrix>,
    seed: u64,
) -> Result<ProbitFitDraws> {
    let n = x.rows() + predict_rows.map_or(0, |p| p.rows());
    let mut draws = ProbitFitDraws::new(n, seed);
    draws.values.reserve(n * config.draws);
    fit_probit_bart_into(x, y, config, predict_rows, seed, &mut draws)?;
    Ok(draws)
}

/// One MH step on `tree` against `residual`, returning the new tree.
///
/// Leaf values are redrawn from their conditional posterior afterwards.
pub fn update_tree<R: Rng + ?Sized>(
    tree: &DecisionTree,
    residual: &[f64],
    bins: &BinnedRows,
    grid: &CutpointGrid,
    config: &BartConfig,
    rng: &mut R,
) -> (DecisionTree, MoveOutcome) {
    let active = vec![true; bins.rows()];
    let ctx = sampler::TreeContext::new(config, grid, bins, &active);
    let mut out = tree.clone();
    let mut leaf_of: Vec<u32> = (0..bins.rows()).map(|i| tree.route(bins, i)).collect();
    let outcome = sampler::mh_step(&mut out, &mut leaf_of, residual, &ctx, rng);
    sampler::draw_leaf_values(&mut out, &leaf_of, residual, &ctx, rng);
    (out, outcome)
}
