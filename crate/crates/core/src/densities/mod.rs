//! Confounder densities `f(u)` and the integrals that marginalise over them.

pub mod quadrature;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;

pub use quadrature::{
    half_normal_rule, laguerre_rule, legendre_rule, standard_normal_rule, PairMode,
    QuadratureRule, MIN_NODES,
};

/// Default node count per Gaussian component.
pub const DEFAULT_NODES: usize = 64;

/// Gaussian components narrower than this are integrated as point masses.
pub const POINT_MASS_SD: f64 = 1e-6;

/// One component of a Gaussian mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: f64,
    pub sd: f64,
}

/// Distribution of the orthogonalised unmeasured confounder `U`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", try_from = "RawDensity")]
pub enum ConfounderDensity {
    Gaussian { mean: f64, sd: f64 },
    /// Unimodal at zero with `Pr(U < 0) = q`: a half-normal of scale `s` on
    /// the left and a half-normal of scale `s(1-q)/q` on the right.
    Sharkfin { q: f64, s: f64 },
    Mixture { components: Vec<MixtureComponent> },
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum RawDensity {
    Gaussian {
        #[serde(default)]
        mean: f64,
        sd: f64,
    },
    Sharkfin {
        q: f64,
        s: f64,
    },
    Mixture {
        components: Vec<MixtureComponent>,
    },
}

impl TryFrom<RawDensity> for ConfounderDensity {
    type Error = Error;

    fn try_from(raw: RawDensity) -> Result<Self> {
        match raw {
            RawDensity::Gaussian { mean, sd } => Self::gaussian(mean, sd),
            RawDensity::Sharkfin { q, s } => Self::sharkfin(q, s),
            RawDensity::Mixture { components } => Self::mixture(components),
        }
    }
}

/// Anything that can supply a quadrature rule for `∫ h(u) f(u) du`.
///
/// The projection step only ever sees the rule, so densities outside the
/// three main families (the Laplace used for mis-specification experiments)
/// plug in through this trait.
pub trait ConfounderModel: Send + Sync {
    fn rule(&self, nodes: usize) -> Result<QuadratureRule>;
    fn label(&self) -> String;
}

impl ConfounderDensity {
    pub fn gaussian(mean: f64, sd: f64) -> Result<Self> {
        let d = Self::Gaussian { mean, sd };
        d.validate()?;
        Ok(d)
    }

    pub fn standard() -> Self {
        Self::Gaussian { mean: 0.0, sd: 1.0 }
    }

    pub fn sharkfin(q: f64, s: f64) -> Result<Self> {
        let d = Self::Sharkfin { q, s };
        d.validate()?;
        Ok(d)
    }

    pub fn mixture(components: Vec<MixtureComponent>) -> Result<Self> {
        let d = Self::Mixture { components };
        d.validate()?;
        Ok(d)
    }

    /// Builds a mixture from `(weight, mean, sd)` triples.
    pub fn mixture_of(parts: &[(f64, f64, f64)]) -> Result<Self> {
        Self::mixture(
            parts
                .iter()
                .map(|&(weight, mean, sd)| MixtureComponent { weight, mean, sd })
                .collect(),
        )
    }

    /// `0.05 N(-2, s²) + 0.90 N(0, s²) + 0.05 N(2, s²)` with `s = 0.05`.
    pub fn symmetric_mixture() -> Self {
        Self::mixture_of(&[(0.05, -2.0, 0.05), (0.90, 0.0, 0.05), (0.05, 2.0, 0.05)])
            .expect("valid mixture")
    }

    /// `0.01 N(-2, s²) + 0.94 N(0, s²) + 0.05 N(2, s²)` with `s = 0.05`.
    pub fn asymmetric_mixture() -> Self {
        Self::mixture_of(&[(0.01, -2.0, 0.05), (0.94, 0.0, 0.05), (0.05, 2.0, 0.05)])
            .expect("valid mixture")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidDensity(msg));
        match self {
            Self::Gaussian { mean, sd } => {
                if !mean.is_finite() || !(sd.is_finite() && *sd > 0.0) {
                    return bad(format!("gaussian needs finite mean and sd > 0 (mean={mean}, sd={sd})"));
                }
            }
            Self::Sharkfin { q, s } => {
                if !(*q > 0.0 && *q < 1.0) {
                    return bad(format!("sharkfin skew q must lie in (0,1), got {q}"));
                }
                if !(s.is_finite() && *s > 0.0) {
                    return bad(format!("sharkfin scale s must be > 0, got {s}"));
                }
            }
            Self::Mixture { components } => {
                if components.is_empty() {
                    return bad("mixture needs at least one component".into());
                }
                for c in components {
                    if !(c.weight.is_finite() && c.weight >= 0.0) {
                        return bad(format!("mixture weight must be >= 0, got {}", c.weight));
                    }
                    if !c.mean.is_finite() || !(c.sd.is_finite() && c.sd > 0.0) {
                        return bad(format!("mixture component needs sd > 0 (sd={})", c.sd));
                    }
                }
                let total: f64 = components.iter().map(|c| c.weight).sum();
                if (total - 1.0).abs() > 1e-9 {
                    return bad(format!("mixture weights sum to {total}, not 1"));
                }
            }
        }
        Ok(())
    }

    /// Density value `f(u)`.
    pub fn pdf(&self, u: f64) -> f64 {
        match *self {
            Self::Gaussian { mean, sd } => normal::pdf_scaled(u, mean, sd),
            Self::Sharkfin { q, s } => {
                if u <= 0.0 {
                    2.0 * q * normal::pdf_scaled(u, 0.0, s)
                } else {
                    2.0 * q * normal::pdf_scaled(u * q / (1.0 - q), 0.0, s)
                }
            }
            Self::Mixture { ref components } => components
                .iter()
                .map(|c| c.weight * normal::pdf_scaled(u, c.mean, c.sd))
                .sum(),
        }
    }

    /// Mean and standard deviation of `U`.
    pub fn moments(&self) -> (f64, f64) {
        match *self {
            Self::Gaussian { mean, sd } => (mean, sd),
            Self::Sharkfin { q, s } => {
                let right = s * (1.0 - q) / q;
                let half_mean = (2.0 / std::f64::consts::PI).sqrt();
                let mean = half_mean * ((1.0 - q) * right - q * s);
                let second = q * s * s + (1.0 - q) * right * right;
                (mean, (second - mean * mean).sqrt())
            }
            Self::Mixture { ref components } => {
                let mean: f64 = components.iter().map(|c| c.weight * c.mean).sum();
                let second: f64 = components
                    .iter()
                    .map(|c| c.weight * (c.sd * c.sd + c.mean * c.mean))
                    .sum();
                (mean, (second - mean * mean).sqrt())
            }
        }
    }

    pub fn sd(&self) -> f64 {
        self.moments().1
    }

    /// Quadrature rule with (about) `k` nodes per smooth piece.
    ///
    /// Gaussians use `k` Hermite nodes, mixtures the weighted union of their
    /// component rules, and the sharkfin `k/2` half-normal nodes per lobe.
    /// Mixture components narrower than unit sd get proportionally fewer
    /// nodes, never below `MIN_NODES`.
    pub fn quadrature(&self, k: usize) -> Result<QuadratureRule> {
        quadrature::check_nodes(k)?;
        self.validate()?;
        let pairs = match *self {
            Self::Gaussian { mean, sd } => gaussian_pairs(mean, sd, 1.0, k),
            Self::Sharkfin { q, s } => {
                let lobe = half_normal_rule(k.div_ceil(2));
                let mut pairs = lobe.affine_pairs(0.0, -s, q);
                pairs.extend(lobe.affine_pairs(0.0, s * (1.0 - q) / q, 1.0 - q));
                pairs
            }
            Self::Mixture { ref components } => components
                .iter()
                .filter(|c| c.weight > 0.0)
                .flat_map(|c| {
                    let kc = ((k as f64 * c.sd.min(1.0)).ceil() as usize).clamp(MIN_NODES, k);
                    gaussian_pairs(c.mean, c.sd, c.weight, kc)
                })
                .collect(),
        };
        Ok(QuadratureRule::from_pairs(pairs))
    }

    pub fn label(&self) -> String {
        match self {
            Self::Gaussian { mean, sd } => format!("N({mean},{sd})"),
            Self::Sharkfin { q, s } => format!("Shark(q={q},s={s})"),
            Self::Mixture { components } => {
                let parts: Vec<String> = components
                    .iter()
                    .map(|c| format!("{}*N({},{})", c.weight, c.mean, c.sd))
                    .collect();
                format!("Mix[{}]", parts.join("+"))
            }
        }
    }

    /// `true` when `f` is symmetric about zero.
    pub fn is_symmetric(&self) -> bool {
        match self {
            Self::Gaussian { mean, .. } => *mean == 0.0,
            Self::Sharkfin { q, .. } => *q == 0.5,
            Self::Mixture { components } => components.iter().all(|c| {
                components.iter().any(|o| {
                    o.mean == -c.mean && o.sd == c.sd && (o.weight - c.weight).abs() < 1e-15
                })
            }),
        }
    }
}

impl ConfounderModel for ConfounderDensity {
    fn rule(&self, nodes: usize) -> Result<QuadratureRule> {
        self.quadrature(nodes)
    }

    fn label(&self) -> String {
        ConfounderDensity::label(self)
    }
}

fn gaussian_pairs(mean: f64, sd: f64, mass: f64, k: usize) -> Vec<(f64, f64)> {
    if sd < POINT_MASS_SD {
        vec![(mean, mass)]
    } else {
        standard_normal_rule(k).affine_pairs(mean, sd, mass)
    }
}

/// `∫ Φ(a+u) f(u) du` with the default node count.
pub fn marginal_single(d: &ConfounderDensity, a: f64) -> Result<f64> {
    Ok(d.quadrature(DEFAULT_NODES)?.marginal_single(a))
}

/// Pair integral selected by `mode` with the default node count.
pub fn marginal_pair(d: &ConfounderDensity, a: f64, b: f64, mode: PairMode) -> Result<f64> {
    Ok(d.quadrature(DEFAULT_NODES)?.marginal_pair(a, b, mode))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Composite trapezoid of `h·f` on `[lo, hi]` with `n` intervals.
    fn trapezoid(d: &ConfounderDensity, lo: f64, hi: f64, n: usize, h: impl Fn(f64) -> f64) -> f64 {
        let step = (hi - lo) / n as f64;
        let mut acc = 0.5 * (h(lo) * d.pdf(lo) + h(hi) * d.pdf(hi));
        for i in 1..n {
            let u = lo + i as f64 * step;
            acc += h(u) * d.pdf(u);
        }
        acc * step
    }

    fn families() -> Vec<ConfounderDensity> {
        vec![
            ConfounderDensity::standard(),
            ConfounderDensity::gaussian(-1.0, 0.5).unwrap(),
            ConfounderDensity::gaussian(0.3, 2.0).unwrap(),
            ConfounderDensity::sharkfin(0.25, 0.5).unwrap(),
            ConfounderDensity::sharkfin(0.75, 1.25).unwrap(),
            ConfounderDensity::sharkfin(0.1, 0.3).unwrap(),
            ConfounderDensity::symmetric_mixture(),
            ConfounderDensity::asymmetric_mixture(),
        ]
    }

    #[test]
    fn gaussian_pdf_at_zero() {
        assert!((ConfounderDensity::standard().pdf(0.0) - 0.398_942_3).abs() < 1e-7);
    }

    #[test]
    fn symmetric_sharkfin_is_standard_normal() {
        let shark = ConfounderDensity::sharkfin(0.5, 1.0).unwrap();
        for u in [-1.3, 1.3, 0.0, 2.7] {
            assert!((shark.pdf(u) - normal::pdf(u)).abs() < 1e-15);
        }
    }

    #[test]
    fn pdfs_integrate_to_one() {
        for d in families() {
            let (m, sd) = d.moments();
            let total = trapezoid(&d, m - 12.0 * sd - 3.0, m + 12.0 * sd + 3.0, 400_000, |_| 1.0);
            assert!((total - 1.0).abs() < 1e-8, "{}: {total}", d.label());
        }
    }

    #[test]
    fn sharkfin_left_mass_is_q() {
        for (q, s) in [(0.25, 0.5), (0.75, 1.25), (0.1, 2.0)] {
            let d = ConfounderDensity::sharkfin(q, s).unwrap();
            let left = trapezoid(&d, -12.0 * s, 0.0, 200_000, |_| 1.0);
            assert!((left - q).abs() < 1e-8);
        }
    }

    #[test]
    fn reported_sd_matches_numeric_second_moment() {
        for d in families() {
            let (m, sd) = d.moments();
            let (lo, hi) = (m - 12.0 * sd - 3.0, m + 12.0 * sd + 3.0);
            let mean = trapezoid(&d, lo, hi, 400_000, |u| u);
            let var = trapezoid(&d, lo, hi, 400_000, |u| (u - mean) * (u - mean));
            assert!((var.sqrt() - sd).abs() / sd < 1e-6, "{}", d.label());
            assert!((mean - m).abs() < 1e-7);
        }
    }

    #[test]
    fn table_standard_deviations() {
        let cases = [
            (ConfounderDensity::sharkfin(0.25, 0.5).unwrap(), 1.05),
            (ConfounderDensity::sharkfin(0.75, 1.25).unwrap(), 0.88),
            (ConfounderDensity::symmetric_mixture(), 0.64),
            (ConfounderDensity::asymmetric_mixture(), 0.48),
        ];
        for (d, want) in cases {
            assert!((d.sd() - want).abs() <= 0.01, "{}: {}", d.label(), d.sd());
        }
    }

    #[test]
    fn quadrature_rejects_few_nodes() {
        let err = ConfounderDensity::standard().quadrature(8).unwrap_err();
        assert!(matches!(err, Error::TooFewNodes { got: 8, .. }));
    }

    #[test]
    fn rules_are_normalised_and_sorted() {
        for d in families() {
            let rule = d.quadrature(DEFAULT_NODES).unwrap();
            assert!((rule.total_weight() - 1.0).abs() < 1e-10, "{}", d.label());
            assert!(rule.nodes().windows(2).all(|w| w[0] < w[1]));
            assert!(rule.weights().iter().all(|&w| w >= 0.0));
        }
    }

    #[test]
    fn gaussian_identity() {
        for sd in [0.1, 0.5, 1.0, 2.0] {
            let d = ConfounderDensity::gaussian(0.0, sd).unwrap();
            let rule = d.quadrature(DEFAULT_NODES).unwrap();
            for i in 0..=60 {
                let a = -3.0 + 0.1 * i as f64;
                let want = normal::cdf(a / (1.0 + sd * sd).sqrt());
                assert!((rule.marginal_single(a) - want).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn sharkfin_second_moment_against_trapezoid() {
        let (q, s) = (0.25, 0.5);
        let d = ConfounderDensity::sharkfin(q, s).unwrap();
        let (lo, hi) = (-10.0 * s, 10.0 * s * (1.0 - q) / q);
        let oracle_raw = trapezoid(&d, lo, hi, 400_000, |u| u * u);
        let oracle_mean = trapezoid(&d, lo, hi, 400_000, |u| u);
        let rule = d.quadrature(DEFAULT_NODES).unwrap();
        let raw = rule.integrate(|u| u * u);
        let mean = rule.integrate(|u| u);
        assert!((raw - oracle_raw).abs() < 1e-8);
        assert!((raw - 1.75).abs() < 1e-10);
        // central second moment, 1.75 - 2/pi
        assert!((raw - mean * mean - 1.113_380).abs() < 1e-4);
        assert!((oracle_raw - oracle_mean * oracle_mean - 1.113_380).abs() < 1e-4);
    }

    #[test]
    fn point_mass_limit() {
        let d = ConfounderDensity::gaussian(0.0, 1e-3).unwrap();
        for (a, b) in [(0.3, -0.2), (-1.5, 1.0), (2.0, 0.1)] {
            let got = marginal_pair(&d, a, b, PairMode::BothPositive).unwrap();
            assert!((got - normal::cdf(a) * normal::cdf(b)).abs() < 1e-5);
        }
        let tiny = ConfounderDensity::gaussian(0.4, 1e-9).unwrap();
        assert_eq!(tiny.quadrature(16).unwrap().len(), 1);
    }

    #[test]
    fn symmetric_half() {
        for d in families().into_iter().filter(|d| d.is_symmetric()) {
            assert!((marginal_single(&d, 0.0).unwrap() - 0.5).abs() < 1e-8);
        }
    }

    #[test]
    fn mixture_is_linear_in_components() {
        let mix = ConfounderDensity::asymmetric_mixture();
        let ConfounderDensity::Mixture { components } = &mix else { unreachable!() };
        let (a, b) = (-0.7, 0.4);
        let whole = marginal_pair(&mix, a, b, PairMode::SecondNegative).unwrap();
        let parts: f64 = components
            .iter()
            .map(|c| {
                let g = ConfounderDensity::gaussian(c.mean, c.sd).unwrap();
                c.weight * marginal_pair(&g, a, b, PairMode::SecondNegative).unwrap()
            })
            .sum();
        assert!((whole - parts).abs() < 1e-10);
    }

    #[test]
    fn pair_against_trapezoid() {
        let d = ConfounderDensity::standard();
        let (a, b) = (0.3, -0.2);
        let want = trapezoid(&d, -8.0, 8.0, 1_000_000, |u| normal::cdf(a + u) * normal::cdf(b + u));
        let got = marginal_pair(&d, a, b, PairMode::BothPositive).unwrap();
        assert!((got - want).abs() < 1e-6);
    }

    #[test]
    fn config_round_trip() {
        let text = r#"{"kind":"sharkfin","q":0.25,"s":0.5}"#;
        let d: ConfounderDensity = serde_json::from_str(text).unwrap();
        assert_eq!(d, ConfounderDensity::sharkfin(0.25, 0.5).unwrap());
        let bad = r#"{"kind":"sharkfin","q":1.5,"s":0.5}"#;
        assert!(serde_json::from_str::<ConfounderDensity>(bad).is_err());
        let mix = r#"{"kind":"mixture","components":[{"weight":0.6,"mean":0,"sd":1},{"weight":0.5,"mean":1,"sd":1}]}"#;
        assert!(serde_json::from_str::<ConfounderDensity>(mix).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn density() -> impl Strategy<Value = ConfounderDensity> {
            prop_oneof![
                (-1.5f64..1.5, 0.05f64..2.5).prop_map(|(m, s)| ConfounderDensity::gaussian(m, s).unwrap()),
                (0.05f64..0.95, 0.1f64..1.5).prop_map(|(q, s)| ConfounderDensity::sharkfin(q, s).unwrap()),
                (0.0f64..0.2, 0.0f64..0.2, 0.02f64..0.5).prop_map(|(w1, w3, s)| {
                    ConfounderDensity::mixture_of(&[(w1, -2.0, s), (1.0 - w1 - w3, 0.0, s), (w3, 2.0, s)]).unwrap()
                }),
            ]
        }

        proptest! {
            #[test]
            fn pair_modes_sum_to_one(d in density(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
                let rule = d.quadrature(DEFAULT_NODES).unwrap();
                let total: f64 = PairMode::ALL.iter().map(|&m| rule.marginal_pair(a, b, m)).sum();
                prop_assert!((total - 1.0).abs() < 1e-8);
                prop_assert!((rule.total_weight() - 1.0).abs() < 1e-8);
            }

            #[test]
            fn marginal_single_increases(d in density(), a in -3.0f64..3.0, step in 0.01f64..1.0) {
                let rule = d.quadrature(DEFAULT_NODES).unwrap();
                prop_assert!(rule.marginal_single(a + step) > rule.marginal_single(a));
            }
        }
    }
}
