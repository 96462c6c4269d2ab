//! Monotone outcome model.
//!
//! The outcome pair is parameterized as
//! `Pr(B=1 | G=1, x) = Φ(h1(x))` and `Pr(B=1 | G=0, x) = Φ(h0(x)) Φ(h1(x))`,
//! so treatment can never lower the outcome probability. For control rows
//! `B = R0 R1` with independent `R0 ~ Bern(Φ(h0))`, `R1 ~ Bern(Φ(h1))`;
//! conditioning on the imputed `R` turns both updates into plain probit BART.

use rand::Rng;

use crate::bart::{build_cutpoints, check_binary, BartConfig, DrawSink, ProbitEnsemble, ProbitFitDraws};
use crate::data::Matrix;
use crate::error::{Error, Result};
use crate::normal;
use crate::rng::chain_rng;

/// Draws `(R0, R1)` for a control row with `B = 0`, i.e. from the three
/// cells other than `(1, 1)`, given the two linear predictors.
pub fn sample_r<R: Rng + ?Sized>(h0_fit: f64, h1_fit: f64, rng: &mut R) -> (u8, u8) {
    let (p0, q0) = (normal::cdf(h0_fit), normal::sf(h0_fit));
    let (p1, q1) = (normal::cdf(h1_fit), normal::sf(h1_fit));
    let w00 = q0 * q1;
    let w10 = p0 * q1;
    let w01 = q0 * p1;
    let total = w00 + w10 + w01;
    if !(total > 0.0) {
        // both predictors far in the upper tail: the rarer failure wins
        return if q0 >= q1 { (0, 1) } else { (1, 0) };
    }
    let u = rng.random::<f64>() * total;
    if u < w00 {
        (0, 0)
    } else if u < w00 + w10 {
        (1, 0)
    } else {
        (0, 1)
    }
}

/// Likelihood of `(G, B)` data with the latent `(R0, R1)` of control rows
/// made explicit. Rows with `G = 1` ignore `r0`/`r1`.
pub fn augmented_likelihood(p0: &[f64], p1: &[f64], g: &[u8], b: &[u8], r0: &[u8], r1: &[u8]) -> f64 {
    let bern = |p: f64, y: u8| if y == 1 { p } else { 1.0 - p };
    let mut out = 1.0;
    for i in 0..g.len() {
        if g[i] == 1 {
            out *= bern(p1[i], b[i]);
        } else {
            if b[i] != r0[i] * r1[i] {
                return 0.0;
            }
            out *= bern(p0[i], r0[i]) * bern(p1[i], r1[i]);
        }
    }
    out
}

/// Chain state of the monotone sampler over training rows plus any passive
/// prediction rows.
pub struct MonotoneChainState {
    h0: ProbitEnsemble,
    h1: ProbitEnsemble,
    treatment: Vec<u8>,
    outcome: Vec<u8>,
    /// Response of `h0`: `R0` on control rows.
    y0: Vec<u8>,
    /// Response of `h1`: `B` on treated rows, `R1` on control rows.
    y1: Vec<u8>,
    n_train: usize,
}

fn rate_offset(ones: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let half = 0.5 / n as f64;
    normal::quantile((ones as f64 / n as f64).clamp(half, 1.0 - half))
}

impl MonotoneChainState {
    pub fn new(
        x: &Matrix,
        treatment: &[u8],
        outcome: &[u8],
        config: &BartConfig,
        predict_rows: Option<&Matrix>,
    ) -> Result<Self> {
        config.validate()?;
        let n = x.rows();
        if n == 0 {
            return Err(Error::EmptyInput("training rows"));
        }
        if treatment.len() != n || outcome.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{n} rows but {} treatments and {} outcomes",
                treatment.len(),
                outcome.len()
            )));
        }
        check_binary(treatment, "treatment")?;
        check_binary(outcome, "outcome")?;
        let treated = treatment.iter().filter(|&&g| g == 1).count();
        if treated == 0 {
            return Err(Error::NoTreatedRows);
        }
        let controls = n - treated;
        if controls == 0 {
            log::warn!("no control rows; h0 is sampled from its prior");
        }

        let grid = build_cutpoints(x, config.cutpoints)?;
        let mut bins = grid.bin_matrix(x)?;
        if let Some(p) = predict_rows {
            bins = bins.concat(&grid.bin_matrix(p)?);
        }
        let total = bins.rows();

        let ones1 = (0..n).filter(|&i| treatment[i] == 1 && outcome[i] == 1).count();
        let ones0 = (0..n).filter(|&i| treatment[i] == 0 && outcome[i] == 1).count();
        let off1 = rate_offset(ones1, treated);
        let rate1 = normal::cdf(off1);
        let rate0 = if controls > 0 { ones0 as f64 / controls as f64 } else { rate1 };
        let half = 0.5 / controls.max(1) as f64;
        let off0 = normal::quantile((rate0 / rate1).clamp(half, 1.0 - half));

        let mut active1 = vec![true; n];
        active1.resize(total, false);
        let mut active0: Vec<bool> = treatment.iter().map(|&g| g == 0).collect();
        active0.resize(total, false);

        let mut y0 = vec![0u8; total];
        let mut y1 = vec![0u8; total];
        for i in 0..n {
            // feasible start: R0 = R1 = B
            y1[i] = outcome[i];
            if treatment[i] == 0 {
                y0[i] = outcome[i];
            }
        }
        Ok(Self {
            h0: ProbitEnsemble::new(config, grid.clone(), bins.clone(), active0, off0),
            h1: ProbitEnsemble::new(config, grid, bins, active1, off1),
            treatment: treatment.to_vec(),
            outcome: outcome.to_vec(),
            y0,
            y1,
            n_train: n,
        })
    }

    pub fn n_train(&self) -> usize {
        self.n_train
    }

    pub fn rows(&self) -> usize {
        self.y0.len()
    }

    /// `R0` of training row `i` (`None` for treated rows).
    pub fn r0(&self, i: usize) -> Option<u8> {
        (self.treatment[i] == 0).then_some(self.y0[i])
    }

    pub fn r1(&self, i: usize) -> Option<u8> {
        (self.treatment[i] == 0).then_some(self.y1[i])
    }

    /// Current `(Φ(h0), Φ(h1))` at `row`.
    pub fn component_probabilities(&self, row: usize) -> (f64, f64) {
        (self.h0.probability(row), self.h1.probability(row))
    }

    /// Current `(Pr(B=1|G=1,x), Pr(B=1|G=0,x))` at `row`.
    pub fn outcome_probabilities(&self, row: usize) -> (f64, f64) {
        let (p0, p1) = self.component_probabilities(row);
        (p1, p0 * p1)
    }

    fn refresh_r<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for i in 0..self.n_train {
            if self.treatment[i] == 0 && self.outcome[i] == 0 {
                let (r0, r1) = sample_r(self.h0.eta(i), self.h1.eta(i), rng);
                self.y0[i] = r0;
                self.y1[i] = r1;
            }
        }
    }

    /// One sweep: refresh `R`, update `h1`, refresh `R`, update `h0`.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.refresh_r(rng);
        self.h1.sweep(&self.y1, rng);
        self.refresh_r(rng);
        self.h0.sweep(&self.y0, rng);
    }

    /// `true` when every control row's latent pair is consistent with its outcome.
    pub fn invariants_hold(&self) -> bool {
        (0..self.n_train).all(|i| {
            if self.treatment[i] == 1 {
                return true;
            }
            let (r0, r1) = (self.y0[i], self.y1[i]);
            if self.outcome[i] == 1 {
                r0 == 1 && r1 == 1
            } else {
                !(r0 == 1 && r1 == 1)
            }
        }) && (0..self.rows()).all(|i| {
            let (a, b) = self.outcome_probabilities(i);
            b <= a
        })
    }
}

/// Stored draws of the treated-arm and control-arm outcome probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneDraws {
    /// `Pr(B=1 | G=1, x)`.
    pub treated: ProbitFitDraws,
    /// `Pr(B=1 | G=0, x)`.
    pub control: ProbitFitDraws,
}

/// Runs the monotone sampler, feeding each kept draw's outcome probabilities
/// (training rows, then `predict_rows`) to the two sinks.
#[allow(clippy::too_many_arguments)]
pub fn fit_monotone_into<S1: DrawSink, S0: DrawSink>(
    x: &Matrix,
    treatment: &[u8],
    outcome: &[u8],
    config: &BartConfig,
    predict_rows: Option<&Matrix>,
    seed: u64,
    treated_sink: &mut S1,
    control_sink: &mut S0,
) -> Result<()> {
    let mut state = MonotoneChainState::new(x, treatment, outcome, config, predict_rows)?;
    let mut rng = chain_rng(seed);
    let rows = state.rows();
    let (mut p1, mut p0) = (vec![0.0; rows], vec![0.0; rows]);
    for it in 0..config.iterations() {
        state.step(&mut rng);
        if config.keeps(it) {
            for i in 0..rows {
                let (a, b) = state.outcome_probabilities(i);
                p1[i] = a;
                p0[i] = b;
            }
            treated_sink.record(&p1);
            control_sink.record(&p0);
        }
    }
    Ok(())
}

pub fn fit_monotone(
    x: &Matrix,
    treatment: &[u8],
    outcome: &[u8],
    config: &BartConfig,
    predict_rows: Option<&Matrix>,
    seed: u64,
) -> Result<MonotoneDraws> {
    let rows = x.rows() + predict_rows.map_or(0, |p| p.rows());
    let mut treated = ProbitFitDraws::new(rows, seed);
    let mut control = ProbitFitDraws::new(rows, seed);
    fit_monotone_into(x, treatment, outcome, config, predict_rows, seed, &mut treated, &mut control)?;
    Ok(MonotoneDraws { treated, control })
}
