//! Projection of reduced-form probabilities onto structural probit functions.
//!
//! For a confounder density `f`, the structural model implies
//!
//! ```text
//! Pr(B=1, G=1 | x) = ∫ Φ(b1 + u) Φ(g + u) f(u) du
//! Pr(B=1, G=0 | x) = ∫ Φ(b0 + u) (1 - Φ(g + u)) f(u) du
//! Pr(B=0, G=1 | x) = ∫ (1 - Φ(b1 + u)) Φ(g + u) f(u) du
//! ```
//!
//! and `(b0, b1, g)` is chosen per unit to match the fitted cells on the
//! probit scale, with `b1 = b0 + δ²` so that treatment never lowers risk.

pub mod nelder_mead;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::densities::{ConfounderDensity, ConfounderModel, QuadratureRule, DEFAULT_NODES};
use crate::error::{Error, Result};
use crate::normal;
use crate::reduced_form::{cell_probabilities, CellProbabilities, ReducedFormDraws};
use crate::rng::{chain_rng, derive_seed, stream};
use nelder_mead::{minimize, NelderMeadOptions};

/// Probabilities are kept this far from 0 and 1 before `Φ⁻¹`.
pub const PROB_CLAMP: f64 = 1e-12;
/// `pDo0` below this makes the risk ratio infinite.
pub const UNDERFLOW: f64 = 1e-300;

#[inline]
fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Solver settings and the densities to sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensitivitySpec {
    pub densities: Vec<ConfounderDensity>,
    pub nodes: usize,
    pub diameter_tol: f64,
    pub objective_tol: f64,
    pub max_iterations: usize,
    pub restarts: usize,
    /// Worker threads for per-unit solves; results do not depend on it.
    pub threads: usize,
    /// Keep per-draw, per-unit estimands (needed for subgroup posteriors).
    pub keep_unit_draws: bool,
}

impl Default for SensitivitySpec {
    fn default() -> Self {
        Self {
            densities: vec![ConfounderDensity::standard()],
            nodes: DEFAULT_NODES,
            diameter_tol: 1e-8,
            objective_tol: 1e-12,
            max_iterations: 2000,
            restarts: 3,
            threads: 1,
            keep_unit_draws: false,
        }
    }
}

impl SensitivitySpec {
    pub fn with_densities(densities: Vec<ConfounderDensity>) -> Self {
        Self {
            densities,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.densities.is_empty() {
            return Err(Error::InvalidConfig("density sweep is empty".into()));
        }
        for d in &self.densities {
            d.validate()?;
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be positive".into()));
        }
        if self.threads == 0 {
            return Err(Error::InvalidConfig("threads must be positive".into()));
        }
        Ok(())
    }

    pub fn solver(&self) -> SolverOptions {
        SolverOptions {
            simplex: NelderMeadOptions {
                diameter_tol: self.diameter_tol,
                value_tol: self.objective_tol,
                max_iterations: self.max_iterations,
                ..NelderMeadOptions::default()
            },
            restarts: self.restarts,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub simplex: NelderMeadOptions,
    pub restarts: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            simplex: NelderMeadOptions::default(),
            restarts: 3,
        }
    }
}

/// How posterior draws are pushed through the projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ProjectionMode {
    /// Solve for a random subsample of `draws` posterior draws.
    PerDraw { draws: usize },
    /// Solve once at the posterior-mean probabilities.
    MeanOnly,
}

impl Default for ProjectionMode {
    fn default() -> Self {
        Self::PerDraw { draws: 500 }
    }
}

/// Model-implied cells `(Pr(B=1,G=1), Pr(B=1,G=0), Pr(B=0,G=1))`.
pub fn model_cells(b0: f64, b1: f64, g: f64, rule: &QuadratureRule) -> CellProbabilities {
    let (mut tp, mut cp, mut tn) = (0.0, 0.0, 0.0);
    for (&u, &w) in rule.nodes().iter().zip(rule.weights()) {
        let pg = normal::cdf(g + u);
        let qg = normal::sf(g + u);
        tp += w * normal::cdf(b1 + u) * pg;
        cp += w * normal::cdf(b0 + u) * qg;
        tn += w * normal::sf(b1 + u) * pg;
    }
    CellProbabilities {
        treated_positive: tp,
        control_positive: cp,
        treated_negative: tn,
    }
}

/// Probit-scale targets for one unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Targets {
    pub cells: CellProbabilities,
    probit: [f64; 3],
}

impl Targets {
    pub fn from_cells(cells: CellProbabilities) -> Self {
        let raw = [cells.treated_positive, cells.control_positive, cells.treated_negative];
        if raw.iter().any(|&p| !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p)) {
            log::warn!("target cell probability {raw:?} clamped to [{PROB_CLAMP}, 1-{PROB_CLAMP}]");
        }
        let probit = raw.map(|p| normal::quantile(clamp_prob(p)));
        Self { cells, probit }
    }

    /// Targets from `(pG, pB1, pB0)`.
    pub fn from_reduced_form(p_g: f64, p_b1: f64, p_b0: f64) -> Self {
        Self::from_cells(cell_probabilities(p_g, p_b1, p_b0))
    }

    /// Starting point when the confounder is absent (u = 0).
    pub fn no_confounding_start(&self) -> (f64, f64, f64) {
        let c = self.cells;
        let p_g = clamp_prob(c.treated_positive + c.treated_negative);
        let p_b1 = clamp_prob(c.treated_positive / p_g);
        let p_b0 = clamp_prob(c.control_positive / (1.0 - p_g).max(PROB_CLAMP));
        (normal::quantile(p_b0), normal::quantile(p_b1), normal::quantile(p_g))
    }
}

/// Sum of squared probit-scale residuals over the three cells.
pub fn objective(b0: f64, b1: f64, g: f64, targets: &Targets, rule: &QuadratureRule) -> f64 {
    let m = model_cells(b0, b1, g, rule);
    let model = [m.treated_positive, m.control_positive, m.treated_negative];
    targets
        .probit
        .iter()
        .zip(model)
        .map(|(t, p)| (t - normal::quantile(clamp_prob(p))).powi(2))
        .sum()
}

/// Interventional probabilities and the two causal contrasts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimands {
    /// `∫ Φ(b0 + u) f(u) du`
    pub p_do0: f64,
    /// `∫ Φ(b1 + u) f(u) du`
    pub p_do1: f64,
    /// `p_do1 / p_do0`, `+∞` when `p_do0` underflows.
    pub tau: f64,
    pub delta: f64,
    pub underflow: bool,
}

pub fn estimands(b0: f64, b1: f64, rule: &QuadratureRule) -> Estimands {
    let p_do0 = rule.marginal_single(b0);
    let p_do1 = rule.marginal_single(b1);
    let underflow = p_do0 < UNDERFLOW;
    Estimands {
        p_do0,
        p_do1,
        tau: if underflow { f64::INFINITY } else { p_do1 / p_do0 },
        delta: p_do1 - p_do0,
        underflow,
    }
}

/// Structural fit of one unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StructuralSolution {
    pub b0: f64,
    pub b1: f64,
    pub g: f64,
    pub p_do0: f64,
    pub p_do1: f64,
    pub tau: f64,
    pub delta: f64,
    pub converged: bool,
    pub objective: f64,
    pub underflow: bool,
}

// fixed jitter stream so restarts do not depend on scheduling
const RESTART_SEED: u64 = 0x0005_eed0_f7e5_7a27;

/// Solves for `(b0, b1, g)` by Nelder–Mead over `(b0, δ, g)`, starting from
/// `init` or the no-confounding point.
pub fn solve_structural(
    targets: &Targets,
    rule: &QuadratureRule,
    init: Option<(f64, f64, f64)>,
    opts: &SolverOptions,
) -> StructuralSolution {
    let (b0, b1, g) = init.unwrap_or_else(|| targets.no_confounding_start());
    let start = [b0, (b1 - b0).max(0.0).sqrt(), g];
    let f = |x: &[f64; 3]| objective(x[0], x[0] + x[1] * x[1], x[2], targets, rule);
    let mut best = minimize(f, start, &opts.simplex);
    let mut rng = chain_rng(RESTART_SEED);
    for k in 0..opts.restarts {
        if best.converged {
            break;
        }
        let scale = 0.25 * (k + 1) as f64;
        let mut jittered = start;
        if k > 0 {
            for v in jittered.iter_mut() {
                *v += scale * (rand::Rng::random::<f64>(&mut rng) - 0.5) * 2.0;
            }
        } else {
            // first restart polishes the best point with a fresh simplex
            jittered = best.point;
        }
        let r = minimize(f, jittered, &opts.simplex);
        if r.value < best.value || (r.converged && !best.converged && r.value <= best.value * 1.0001) {
            best = r;
        }
    }
    let [b0, d, g] = best.point;
    let b1 = b0 + d * d;
    let e = estimands(b0, b1, rule);
    StructuralSolution {
        b0,
        b1,
        g,
        p_do0: e.p_do0,
        p_do1: e.p_do1,
        tau: e.tau,
        delta: e.delta,
        converged: best.converged,
        objective: best.value,
        underflow: e.underflow,
    }
}

/// Solves every unit; `threads > 1` splits units into contiguous blocks
/// whose results are concatenated in order.
pub fn solve_units(targets: &[Targets], rule: &QuadratureRule, opts: &SolverOptions, threads: usize) -> Vec<StructuralSolution> {
    if threads <= 1 || targets.len() < 2 * threads {
        return targets.iter().map(|t| solve_structural(t, rule, None, opts)).collect();
    }
    let chunk = targets.len().div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = targets
            .chunks(chunk)
            .map(|block| s.spawn(move || block.iter().map(|t| solve_structural(t, rule, None, opts)).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("projection worker panicked"))
            .collect()
    })
}

/// Solves every unit at fixed `(pG, pB1, pB0)` under one confounder model.
///
/// Unlike [`project_density`] the inputs need not satisfy `pB1 >= pB0`.
pub fn project_means(
    p_g: &[f64],
    p_b1: &[f64],
    p_b0: &[f64],
    model: &dyn ConfounderModel,
    spec: &SensitivitySpec,
) -> Result<Vec<StructuralSolution>> {
    if p_g.len() != p_b1.len() || p_g.len() != p_b0.len() {
        return Err(Error::DimensionMismatch("probability vectors differ in length".into()));
    }
    let rule = model.rule(spec.nodes)?;
    Ok(solve_units(&targets_of(p_g, p_b1, p_b0), &rule, &spec.solver(), spec.threads))
}

/// Population averages of the unit-level contrasts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Aggregate {
    pub acrr: f64,
    pub mean_delta: f64,
    /// `None` when no treatment labels were given or the arm is empty.
    pub acrr_treated: Option<f64>,
    pub acrr_control: Option<f64>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

/// Plain means of `τ` and `Δ`, overall and by treatment arm.
pub fn aggregate(solutions: &[StructuralSolution], treatment: Option<&[u8]>) -> Result<Aggregate> {
    if solutions.is_empty() {
        return Err(Error::EmptyInput("structural solutions"));
    }
    if let Some(t) = treatment {
        if t.len() != solutions.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} treatment labels for {} solutions",
                t.len(),
                solutions.len()
            )));
        }
    }
    let arm = |want: u8| {
        treatment.and_then(|t| mean(solutions.iter().zip(t).filter(|(_, &g)| g == want).map(|(s, _)| s.tau)))
    };
    Ok(Aggregate {
        acrr: mean(solutions.iter().map(|s| s.tau)).unwrap_or(f64::NAN),
        mean_delta: mean(solutions.iter().map(|s| s.delta)).unwrap_or(f64::NAN),
        acrr_treated: arm(1),
        acrr_control: arm(0),
    })
}

/// Mean and equal-tailed 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Linear-interpolation quantile of already sorted values.
pub fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self {
            mean: mean(values.iter().copied()).unwrap_or(f64::NAN),
            lower: sorted_quantile(&sorted, 0.025),
            upper: sorted_quantile(&sorted, 0.975),
        }
    }
}

/// Per-draw, per-unit estimands, draw-major.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitDraws {
    pub n_obs: usize,
    pub tau: Vec<f64>,
    pub delta: Vec<f64>,
    pub p_do0: Vec<f64>,
}

impl UnitDraws {
    pub fn n_draws(&self) -> usize {
        self.tau.len() / self.n_obs.max(1)
    }

    pub fn tau_draw(&self, d: usize) -> &[f64] {
        &self.tau[d * self.n_obs..(d + 1) * self.n_obs]
    }

    pub fn delta_draw(&self, d: usize) -> &[f64] {
        &self.delta[d * self.n_obs..(d + 1) * self.n_obs]
    }

    pub fn p_do0_draw(&self, d: usize) -> &[f64] {
        &self.p_do0[d * self.n_obs..(d + 1) * self.n_obs]
    }
}

/// Projected posterior for one confounder density.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityPosterior {
    pub label: String,
    /// Indices of the reduced-form draws used (empty in mean-only mode).
    pub draw_indices: Vec<usize>,
    pub acrr: Vec<f64>,
    pub mean_delta: Vec<f64>,
    pub acrr_treated: Vec<f64>,
    pub acrr_control: Vec<f64>,
    /// Posterior means per unit.
    pub unit_tau: Vec<f64>,
    pub unit_delta: Vec<f64>,
    pub unit_p_do0: Vec<f64>,
    pub unit_draws: Option<UnitDraws>,
    pub nonconverged_fraction: f64,
}

impl DensityPosterior {
    pub fn acrr_summary(&self) -> Summary {
        Summary::of(&self.acrr)
    }

    pub fn delta_summary(&self) -> Summary {
        Summary::of(&self.mean_delta)
    }
}

fn targets_of(p_g: &[f64], p_b1: &[f64], p_b0: &[f64]) -> Vec<Targets> {
    (0..p_g.len())
        .map(|i| Targets::from_reduced_form(p_g[i], p_b1[i], p_b0[i]))
        .collect()
}

/// Projects reduced-form draws through one confounder model.
pub fn project_density(
    draws: &ReducedFormDraws,
    model: &dyn ConfounderModel,
    spec: &SensitivitySpec,
    mode: ProjectionMode,
    seed: u64,
) -> Result<DensityPosterior> {
    let rule = model.rule(spec.nodes)?;
    let opts = spec.solver();
    let n = draws.n_obs();
    let treatment = draws.treatment();
    let (batches, draw_indices): (Vec<Vec<Targets>>, Vec<usize>) = match mode {
        ProjectionMode::MeanOnly => {
            let (g, b1, b0) = draws.posterior_mean();
            (vec![targets_of(&g, &b1, &b0)], Vec::new())
        }
        ProjectionMode::PerDraw { draws: wanted } => {
            if wanted == 0 {
                return Err(Error::InvalidConfig("per-draw projection needs at least one draw".into()));
            }
            let total = draws.n_draws();
            let mut idx: Vec<usize> = if wanted >= total {
                (0..total).collect()
            } else {
                let mut rng = chain_rng(derive_seed(seed, stream::PROJECTION));
                sample(&mut rng, total, wanted).into_vec()
            };
            idx.sort_unstable();
            let batches = idx
                .iter()
                .map(|&d| targets_of(draws.p_g(d), draws.p_b1(d), draws.p_b0(d)))
                .collect();
            (batches, idx)
        }
    };

    let mut out = DensityPosterior {
        label: model.label(),
        draw_indices,
        acrr: Vec::with_capacity(batches.len()),
        mean_delta: Vec::with_capacity(batches.len()),
        acrr_treated: Vec::new(),
        acrr_control: Vec::new(),
        unit_tau: vec![0.0; n],
        unit_delta: vec![0.0; n],
        unit_p_do0: vec![0.0; n],
        unit_draws: spec.keep_unit_draws.then(|| UnitDraws {
            n_obs: n,
            tau: Vec::with_capacity(n * batches.len()),
            delta: Vec::with_capacity(n * batches.len()),
            p_do0: Vec::with_capacity(n * batches.len()),
        }),
        nonconverged_fraction: 0.0,
    };
    let mut failures = 0usize;
    for batch in &batches {
        let sols = solve_units(batch, &rule, &opts, spec.threads);
        failures += sols.iter().filter(|s| !s.converged).count();
        let agg = aggregate(&sols, Some(treatment))?;
        out.acrr.push(agg.acrr);
        out.mean_delta.push(agg.mean_delta);
        if let Some(v) = agg.acrr_treated {
            out.acrr_treated.push(v);
        }
        if let Some(v) = agg.acrr_control {
            out.acrr_control.push(v);
        }
        for (i, s) in sols.iter().enumerate() {
            out.unit_tau[i] += s.tau / batches.len() as f64;
            out.unit_delta[i] += s.delta / batches.len() as f64;
            out.unit_p_do0[i] += s.p_do0 / batches.len() as f64;
        }
        if let Some(u) = out.unit_draws.as_mut() {
            u.tau.extend(sols.iter().map(|s| s.tau));
            u.delta.extend(sols.iter().map(|s| s.delta));
            u.p_do0.extend(sols.iter().map(|s| s.p_do0));
        }
    }
    out.nonconverged_fraction = failures as f64 / (n * batches.len()) as f64;
    if failures > 0 {
        log::warn!(
            "{}: {failures} of {} unit solves did not converge",
            out.label,
            n * batches.len()
        );
    }
    Ok(out)
}

/// Projects the same reduced-form draws through every density in `spec`.
pub fn project_posterior(
    draws: &ReducedFormDraws,
    spec: &SensitivitySpec,
    mode: ProjectionMode,
    seed: u64,
) -> Result<Vec<DensityPosterior>> {
    spec.validate()?;
    spec.densities
        .iter()
        .map(|d| project_density(draws, d, spec, mode, seed))
        .collect()
}

/// Writes one row per density: ACRR and mean Δ summaries plus the
/// non-convergence fraction.
pub fn write_results_csv(path: impl AsRef<Path>, results: &[DensityPosterior], seed: u64) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# sensitivity results seed={seed}")?;
    writeln!(w, "density,acrr_mean,acrr_2.5,acrr_97.5,delta_mean,delta_2.5,delta_97.5,nonconverged_fraction")?;
    for r in results {
        let (a, d) = (r.acrr_summary(), r.delta_summary());
        writeln!(
            w,
            "\"{}\",{},{},{},{},{},{},{}",
            r.label, a.mean, a.lower, a.upper, d.mean, d.lower, d.upper, r.nonconverged_fraction
        )?;
    }
    w.flush()?;
    Ok(())
}
