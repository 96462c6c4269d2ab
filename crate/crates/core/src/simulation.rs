//! Synthetic data-generating processes with known causal estimands, and the
//! recovery experiments built on them.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bart::{fit_probit_bart_into, BartConfig, RunningMean};
use crate::data::{Matrix, ObservationSet};
use crate::densities::quadrature::{laguerre_rule, check_nodes};
use crate::densities::{ConfounderDensity, ConfounderModel, QuadratureRule};
use crate::error::{Error, Result};
use crate::monotone::fit_monotone_into;
use crate::normal;
use crate::projection::{estimands, project_means, SensitivitySpec};
use crate::rng::{chain_rng, derive_seed, stream};

/// Linear bivariate probit with an endogenous binary treatment.
///
/// `Z_g = β0 + β1 Σx + e_g`, `Z_b = α0 + α1 Σx + e_b`, `corr(e_g, e_b) = ρ`,
/// `G = 1{Z_g >= 0}`, `B = 1{Z_b >= -γ G}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BivariateProbitConfig {
    pub n: usize,
    pub covariates: usize,
    pub beta0: f64,
    pub beta1: f64,
    pub alpha0: f64,
    pub alpha1: f64,
    pub rho: f64,
    pub gamma: f64,
}

impl Default for BivariateProbitConfig {
    fn default() -> Self {
        Self {
            n: 25_000,
            covariates: 5,
            beta0: 0.0,
            beta1: -0.2,
            alpha0: -0.5,
            alpha1: -0.5,
            rho: 0.25,
            gamma: 1.0,
        }
    }
}

impl BivariateProbitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::EmptyInput("simulated rows"));
        }
        if !(self.rho.abs() < 1.0) {
            return Err(Error::InvalidConfig(format!("|rho| must be < 1, got {}", self.rho)));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::InvalidConfig("gamma must be non-negative".into()));
        }
        Ok(())
    }

    /// Confounder sd under which the structural model reproduces this DGP.
    pub fn matching_sd(&self) -> f64 {
        (self.rho / (1.0 - self.rho)).max(0.0).sqrt()
    }

    /// `Φ(γ + α0 + α1 Σx) / Φ(α0 + α1 Σx)`.
    pub fn true_tau(&self, x_sum: f64) -> f64 {
        let a = self.alpha0 + self.alpha1 * x_sum;
        normal::cdf(self.gamma + a) / normal::cdf(a)
    }

    pub fn true_delta(&self, x_sum: f64) -> f64 {
        let a = self.alpha0 + self.alpha1 * x_sum;
        normal::cdf(self.gamma + a) - normal::cdf(a)
    }
}

/// Nonlinear structural DGP with a Gaussian confounder:
/// `b0 = x5 + x1 sin(2 x6) - 1.75`, `b1 = b0 + 1.5`, `g = 0.5 b0 + x2 + 0.25`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NonlinearConfig {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    /// Total covariate count; columns 1, 2, 5, 6 are active, the rest noise.
    pub covariates: usize,
}

impl Default for NonlinearConfig {
    fn default() -> Self {
        Self {
            n: 25_000,
            mean: 0.0,
            sd: 1.0,
            covariates: 10,
        }
    }
}

impl NonlinearConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::EmptyInput("simulated rows"));
        }
        if !(self.sd > 0.0) || !self.sd.is_finite() {
            return Err(Error::InvalidConfig("confounder sd must be positive".into()));
        }
        if self.covariates < 6 {
            return Err(Error::InvalidConfig("the nonlinear design needs at least 6 covariates".into()));
        }
        Ok(())
    }

    pub fn density(&self) -> Result<ConfounderDensity> {
        ConfounderDensity::gaussian(self.mean, self.sd)
    }
}

/// Structural functions of the nonlinear design at covariate row `x`.
pub fn nonlinear_structural(x: &[f64]) -> (f64, f64, f64) {
    let b0 = x[4] + x[0] * (2.0 * x[5]).sin() - 1.75;
    (b0, b0 + 1.5, 0.5 * b0 + x[1] + 0.25)
}

/// Simulated data with per-row truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedData {
    pub data: ObservationSet,
    pub true_tau: Vec<f64>,
    pub true_delta: Vec<f64>,
    /// `(b0, b1, g)` per row when the design is structural.
    pub structural: Option<Vec<(f64, f64, f64)>>,
}

fn uniform_matrix<R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> Matrix {
    let values = (0..n * p).map(|_| rng.random_range(-1.0..1.0)).collect();
    Matrix::new(n, p, values).expect("shape matches")
}

pub fn gen_bivariate_probit<R: Rng + ?Sized>(cfg: &BivariateProbitConfig, rng: &mut R) -> Result<SimulatedData> {
    cfg.validate()?;
    let x = uniform_matrix(cfg.n, cfg.covariates, rng);
    let (mut g, mut b) = (Vec::with_capacity(cfg.n), Vec::with_capacity(cfg.n));
    let (mut tau, mut delta) = (Vec::with_capacity(cfg.n), Vec::with_capacity(cfg.n));
    let tail = (1.0 - cfg.rho * cfg.rho).sqrt();
    for i in 0..cfg.n {
        let s: f64 = x.row(i).iter().sum();
        let e1: f64 = StandardNormal.sample(rng);
        let e2: f64 = StandardNormal.sample(rng);
        let zg = cfg.beta0 + cfg.beta1 * s + e1;
        let zb = cfg.alpha0 + cfg.alpha1 * s + cfg.rho * e1 + tail * e2;
        let gi = (zg >= 0.0) as u8;
        g.push(gi);
        b.push((zb >= -cfg.gamma * gi as f64) as u8);
        tau.push(cfg.true_tau(s));
        delta.push(cfg.true_delta(s));
    }
    Ok(SimulatedData {
        data: ObservationSet::new(x, g, b)?,
        true_tau: tau,
        true_delta: delta,
        structural: None,
    })
}

pub fn gen_nonlinear<R: Rng + ?Sized>(cfg: &NonlinearConfig, rng: &mut R) -> Result<SimulatedData> {
    cfg.validate()?;
    let x = uniform_matrix(cfg.n, cfg.covariates, rng);
    let (mut g, mut b) = (Vec::with_capacity(cfg.n), Vec::with_capacity(cfg.n));
    let mut structural = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let (b0, b1, gx) = nonlinear_structural(x.row(i));
        let z: f64 = StandardNormal.sample(rng);
        let u = cfg.mean + cfg.sd * z;
        let gi = rng.random_bool(normal::cdf(gx + u)) as u8;
        let p = normal::cdf(if gi == 1 { b1 } else { b0 } + u);
        g.push(gi);
        b.push(rng.random_bool(p) as u8);
        structural.push((b0, b1, gx));
    }
    let (tau, delta) = oracle_estimands(&structural, &cfg.density()?)?;
    Ok(SimulatedData {
        data: ObservationSet::new(x, g, b)?,
        true_tau: tau,
        true_delta: delta,
        structural: Some(structural),
    })
}

/// True `τ` and `Δ` per row from known structural functions and the
/// generating density.
pub fn oracle_estimands(structural: &[(f64, f64, f64)], truth: &dyn ConfounderModel) -> Result<(Vec<f64>, Vec<f64>)> {
    let rule = truth.rule(crate::densities::DEFAULT_NODES)?;
    Ok(structural
        .iter()
        .map(|&(b0, b1, _)| {
            let e = estimands(b0, b1, &rule);
            (e.tau, e.delta)
        })
        .unzip())
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Laplace confounder density, parameterized by mean and standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Laplace {
    pub mean: f64,
    pub sd: f64,
}

impl Laplace {
    pub fn new(mean: f64, sd: f64) -> Result<Self> {
        if !mean.is_finite() || !(sd > 0.0) || !sd.is_finite() {
            return Err(Error::InvalidDensity(format!("Laplace({mean}, {sd}) needs finite mean and sd > 0")));
        }
        Ok(Self { mean, sd })
    }

    /// Exponential scale `b = sd / √2`.
    pub fn scale(&self) -> f64 {
        self.sd / std::f64::consts::SQRT_2
    }

    pub fn pdf(&self, u: f64) -> f64 {
        let b = self.scale();
        (-(u - self.mean).abs() / b).exp() / (2.0 * b)
    }
}

impl ConfounderModel for Laplace {
    fn rule(&self, nodes: usize) -> Result<QuadratureRule> {
        check_nodes(nodes)?;
        let lobe = laguerre_rule(nodes.div_ceil(2));
        let b = self.scale();
        let mut pairs = lobe.affine_pairs(self.mean, b, 0.5);
        pairs.extend(lobe.affine_pairs(self.mean, -b, 0.5));
        Ok(QuadratureRule::from_pairs(pairs))
    }

    fn label(&self) -> String {
        format!("Lap({},{})", self.mean, self.sd)
    }
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    cov / (va * vb).sqrt()
}

pub fn rmse(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

/// Posterior-mean reduced-form probabilities `(pG, pB1, pB0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanProbabilities {
    pub p_g: Vec<f64>,
    pub p_b1: Vec<f64>,
    pub p_b0: Vec<f64>,
}

/// Treatment model plus either the monotone outcome model or two separate
/// per-arm probit BART fits, keeping only posterior means.
pub fn fit_mean_probabilities(data: &ObservationSet, config: &BartConfig, seed: u64, monotone: bool) -> Result<MeanProbabilities> {
    let n = data.len();
    let mut treat = RunningMean::new(n);
    fit_probit_bart_into(&data.x, &data.treatment, config, None, derive_seed(seed, stream::TREATMENT), &mut treat)?;
    let (p_b1, p_b0) = if monotone {
        let (mut t, mut c) = (RunningMean::new(n), RunningMean::new(n));
        fit_monotone_into(
            &data.x,
            &data.treatment,
            &data.outcome,
            config,
            None,
            derive_seed(seed, stream::OUTCOME),
            &mut t,
            &mut c,
        )?;
        (t.mean(), c.mean())
    } else {
        let arm = |want: u8, stream_id: u64| -> Result<Vec<f64>> {
            let rows: Vec<usize> = (0..n).filter(|&i| data.treatment[i] == want).collect();
            if rows.is_empty() {
                return Err(if want == 1 {
                    Error::NoTreatedRows
                } else {
                    Error::EmptyInput("control rows")
                });
            }
            let xa = data.x.select_rows(&rows);
            let ya: Vec<u8> = rows.iter().map(|&i| data.outcome[i]).collect();
            let mut sink = RunningMean::new(rows.len() + n);
            fit_probit_bart_into(&xa, &ya, config, Some(&data.x), derive_seed(seed, stream_id), &mut sink)?;
            Ok(sink.mean()[rows.len()..].to_vec())
        };
        (arm(1, stream::UNCONSTRAINED_TREATED)?, arm(0, stream::UNCONSTRAINED_CONTROL)?)
    };
    Ok(MeanProbabilities {
        p_g: treat.mean(),
        p_b1,
        p_b0,
    })
}

/// Which synthetic design to simulate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Design {
    Bivariate(BivariateProbitConfig),
    Nonlinear(NonlinearConfig),
}

impl Design {
    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<SimulatedData> {
        match self {
            Design::Bivariate(c) => gen_bivariate_probit(c, rng),
            Design::Nonlinear(c) => gen_nonlinear(c, rng),
        }
    }

    /// The confounder density under which the pipeline is correctly specified.
    pub fn correct_density(&self) -> Result<ConfounderDensity> {
        match self {
            Design::Bivariate(c) => ConfounderDensity::gaussian(0.0, c.matching_sd()),
            Design::Nonlinear(c) => c.density(),
        }
    }
}

/// Recovery metrics of the full pipeline against simulated truth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryReport {
    pub assumed: String,
    pub n: usize,
    pub seed: u64,
    pub acrr_true: f64,
    pub acrr_est: f64,
    pub icrr_cor: f64,
    pub icrr_rmse: f64,
    pub nonconverged_fraction: f64,
}

/// Scores projected `τ` estimates against the truth.
pub fn score(sim: &SimulatedData, probs: &MeanProbabilities, assumed: &dyn ConfounderModel, spec: &SensitivitySpec, seed: u64) -> Result<RecoveryReport> {
    let sols = project_means(&probs.p_g, &probs.p_b1, &probs.p_b0, assumed, spec)?;
    let tau: Vec<f64> = sols.iter().map(|s| s.tau).collect();
    let failed = sols.iter().filter(|s| !s.converged).count();
    Ok(RecoveryReport {
        assumed: assumed.label(),
        n: sim.data.len(),
        seed,
        acrr_true: mean(&sim.true_tau),
        acrr_est: mean(&tau),
        icrr_cor: pearson(&tau, &sim.true_tau),
        icrr_rmse: rmse(&tau, &sim.true_tau),
        nonconverged_fraction: failed as f64 / sols.len() as f64,
    })
}

/// Simulates, fits with the monotone model, projects at posterior means
/// under `assumed`, and scores against the truth.
pub fn recovery_experiment(
    design: &Design,
    fit: &BartConfig,
    assumed: &dyn ConfounderModel,
    spec: &SensitivitySpec,
    seed: u64,
) -> Result<RecoveryReport> {
    let mut rng = chain_rng(derive_seed(seed, stream::SIMULATION));
    let sim = design.generate(&mut rng)?;
    let probs = fit_mean_probabilities(&sim.data, fit, seed, true)?;
    score(&sim, &probs, assumed, spec, seed)
}

/// Monotone and unconstrained recovery on the same simulated data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotoneComparison {
    pub monotone: RecoveryReport,
    pub unconstrained: RecoveryReport,
}

pub fn compare_monotone(
    design: &Design,
    fit: &BartConfig,
    assumed: &dyn ConfounderModel,
    spec: &SensitivitySpec,
    seed: u64,
) -> Result<MonotoneComparison> {
    let mut rng = chain_rng(derive_seed(seed, stream::SIMULATION));
    let sim = design.generate(&mut rng)?;
    let mono = fit_mean_probabilities(&sim.data, fit, seed, true)?;
    let free = fit_mean_probabilities(&sim.data, fit, seed, false)?;
    Ok(MonotoneComparison {
        monotone: score(&sim, &mono, assumed, spec, seed)?,
        unconstrained: score(&sim, &free, assumed, spec, seed)?,
    })
}

pub fn write_reports_csv(path: impl AsRef<std::path::Path>, reports: &[RecoveryReport], seed: u64) -> Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "# recovery experiments seed={seed}")?;
    writeln!(w, "assumed,n,seed,acrr_true,acrr_est,icrr_cor,icrr_rmse,nonconverged_fraction")?;
    for r in reports {
        writeln!(
            w,
            "\"{}\",{},{},{},{},{},{},{}",
            r.assumed, r.n, r.seed, r.acrr_true, r.acrr_est, r.icrr_cor, r.icrr_rmse, r.nonconverged_fraction
        )?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trapezoid(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
        let h = (hi - lo) / n as f64;
        let mut s = 0.5 * (f(lo) + f(hi));
        for k in 1..n {
            s += f(lo + k as f64 * h);
        }
        s * h
    }

    #[test]
    fn independent_null_cells() {
        let cfg = BivariateProbitConfig {
            n: 100_000,
            beta0: 0.0,
            beta1: 0.0,
            alpha0: 0.0,
            alpha1: 0.0,
            rho: 0.0,
            gamma: 0.0,
            ..Default::default()
        };
        let sim = gen_bivariate_probit(&cfg, &mut chain_rng(1)).unwrap();
        let both = (0..cfg.n).filter(|&i| sim.data.treatment[i] == 1 && sim.data.outcome[i] == 1).count();
        assert!((both as f64 / cfg.n as f64 - 0.25).abs() < 0.01);
        assert!(sim.true_tau.iter().all(|&t| (t - 1.0).abs() < 1e-15));
    }

    #[test]
    fn orthant_probabilities_match_quadrature() {
        for rho in [0.25, 0.6] {
            for gamma in [0.0, 1.0] {
                let cfg = BivariateProbitConfig {
                    n: 1_000_000,
                    covariates: 1,
                    beta1: 0.0,
                    alpha1: 0.0,
                    rho,
                    gamma,
                    ..Default::default()
                };
                let sim = gen_bivariate_probit(&cfg, &mut chain_rng(2)).unwrap();
                let (a, bb) = (cfg.alpha0, cfg.beta0);
                let s = (1.0 - rho * rho).sqrt();
                // Pr(G=1, B=1) = ∫_{e > -β0} φ(e) Φ((α0 + γ + ρ e)/s) de
                let p11 = trapezoid(|e| normal::pdf(e) * normal::cdf((a + gamma + rho * e) / s), -bb, 10.0, 200_000);
                let p01 = trapezoid(|e| normal::pdf(e) * normal::cdf((a + rho * e) / s), -10.0, -bb, 200_000);
                let g1 = (0..cfg.n).filter(|&i| sim.data.treatment[i] == 1);
                let f11 = g1.filter(|&i| sim.data.outcome[i] == 1).count() as f64 / cfg.n as f64;
                let f01 = (0..cfg.n)
                    .filter(|&i| sim.data.treatment[i] == 0 && sim.data.outcome[i] == 1)
                    .count() as f64
                    / cfg.n as f64;
                assert!((f11 - p11).abs() < 0.003, "rho {rho} gamma {gamma}: {f11} vs {p11}");
                assert!((f01 - p01).abs() < 0.003, "rho {rho} gamma {gamma}: {f01} vs {p01}");
            }
        }
    }

    #[test]
    fn stated_coefficients_truth() {
        // Monte Carlo of the analytic row ratio over the covariate law
        let cfg = BivariateProbitConfig::default();
        let mut rng = chain_rng(3);
        let reps = 400_000;
        let total: f64 = (0..reps)
            .map(|_| {
                let s: f64 = (0..cfg.covariates).map(|_| rng.random_range(-1.0..1.0)).sum();
                normal::cdf(cfg.gamma + cfg.alpha0 + cfg.alpha1 * s) / normal::cdf(cfg.alpha0 + cfg.alpha1 * s)
            })
            .sum();
        assert!((total / reps as f64 - 2.554).abs() < 0.01);
    }

    #[test]
    fn nonlinear_formulas() {
        let x = [0.0, 0.3, 0.0, 0.9, 0.0, 0.0, -0.4, 0.2, 0.1, 0.7];
        let (b0, b1, g) = nonlinear_structural(&x);
        assert_eq!((b0, b1), (-1.75, -0.25));
        assert!((g - (-0.875 + 0.3 + 0.25)).abs() < 1e-15);
        let mut y = x;
        for j in [2, 3, 6, 7, 8, 9] {
            y[j] = -y[j];
        }
        assert_eq!(nonlinear_structural(&y), (b0, b1, g));
    }

    #[test]
    fn oracle_row_and_average() {
        let d = ConfounderDensity::standard();
        let (tau, _) = oracle_estimands(&[(-1.75, -0.25, 0.0), (0.3, 0.3, 0.0)], &d).unwrap();
        let expect = normal::cdf(-0.25 / 2f64.sqrt()) / normal::cdf(-1.75 / 2f64.sqrt());
        assert!((tau[0] - expect).abs() < 1e-9);
        assert!((tau[0] - 3.98).abs() < 0.01);
        assert!((tau[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nonlinear_truth_acrr() {
        let cfg = NonlinearConfig { n: 200_000, ..Default::default() };
        let sim = gen_nonlinear(&cfg, &mut chain_rng(4)).unwrap();
        assert!((mean(&sim.true_tau) - 4.43).abs() < 0.05, "{}", mean(&sim.true_tau));
        let mut reversed = sim.true_tau.clone();
        reversed.reverse();
        assert!((mean(&reversed) - mean(&sim.true_tau)).abs() < 1e-9);
    }

    #[test]
    fn nonlinear_arm_rates_match_monte_carlo() {
        let cfg = NonlinearConfig { n: 400_000, ..Default::default() };
        let sim = gen_nonlinear(&cfg, &mut chain_rng(5)).unwrap();
        let s = sim.structural.as_ref().unwrap();
        // thin bin around x5 = 0.5 among treated rows
        let rows: Vec<usize> = (0..cfg.n)
            .filter(|&i| sim.data.treatment[i] == 1 && (sim.data.x.get(i, 4) - 0.5).abs() < 0.02)
            .collect();
        let observed = rows.iter().filter(|&&i| sim.data.outcome[i] == 1).count() as f64 / rows.len() as f64;
        // Pr(B=1 | G=1, x) = ∫Φ(b1+u)Φ(g+u)φ(u) / ∫Φ(g+u)φ(u), averaged over the bin
        let rule = ConfounderDensity::standard().quadrature(64).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for &i in &rows {
            let (_, b1, g) = s[i];
            num += rule.integrate(|u| normal::cdf(b1 + u) * normal::cdf(g + u));
            den += rule.integrate(|u| normal::cdf(g + u));
        }
        let expected = num / den;
        let se = (expected * (1.0 - expected) / rows.len() as f64).sqrt();
        assert!((observed - expected).abs() < 4.0 * se, "{observed} vs {expected}");
    }

    #[test]
    fn laplace_rule_moments() {
        let lap = Laplace::new(0.5, 1.2).unwrap();
        let rule = lap.rule(64).unwrap();
        assert!((rule.total_weight() - 1.0).abs() < 1e-12);
        let m = rule.integrate(|u| u);
        let v = rule.integrate(|u| (u - 0.5).powi(2));
        assert!((m - 0.5).abs() < 1e-10);
        assert!((v - 1.44).abs() < 1e-9);
        let direct = rule.marginal_single(-0.3);
        let oracle = trapezoid(|u| normal::cdf(-0.3 + u) * lap.pdf(u), -25.0, 25.0, 1_000_000);
        assert!((direct - oracle).abs() < 1e-6);
        assert!(Laplace::new(0.0, 0.0).is_err());
    }

    #[test]
    fn empty_design_errors() {
        let d = Design::Bivariate(BivariateProbitConfig { n: 0, ..Default::default() });
        let r = recovery_experiment(&d, &BartConfig::default(), &ConfounderDensity::standard(), &SensitivitySpec::default(), 1);
        assert!(matches!(r, Err(Error::EmptyInput(_))));
    }

    #[test]
    fn small_pipeline_runs() {
        let d = Design::Nonlinear(NonlinearConfig { n: 600, ..Default::default() });
        let fit = BartConfig { trees: 20, burn_in: 50, draws: 50, ..Default::default() };
        let r = recovery_experiment(&d, &fit, &d.correct_density().unwrap(), &SensitivitySpec::default(), 7).unwrap();
        assert!(r.acrr_est.is_finite() && r.acrr_est >= 1.0);
        assert!(r.icrr_cor.is_finite());
    }
}
