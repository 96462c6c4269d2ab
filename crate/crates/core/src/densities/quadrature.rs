//! Gaussian quadrature rules for the confounder densities.
//!
//! Every rule here is built by Golub–Welsch: the Jacobi matrix of the
//! weight function's three-term recurrence is diagonalised and the nodes
//! and weights read off its eigen-decomposition. The half-normal weight has
//! no closed-form recurrence, so its coefficients come from a discretised
//! Stieltjes procedure on a fine composite Gauss–Legendre grid.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::normal;

/// Smallest node count accepted by [`QuadratureRule`] builders.
pub const MIN_NODES: usize = 16;

/// Nodes and weights such that `∫ h(u) f(u) du ≈ Σ w_k h(u_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// Which of the four sign combinations `marginal_pair` integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairMode {
    /// `∫ Φ(a+u) Φ(b+u) f(u) du`
    BothPositive,
    /// `∫ (1-Φ(a+u)) Φ(b+u) f(u) du`
    FirstNegative,
    /// `∫ Φ(a+u) (1-Φ(b+u)) f(u) du`
    SecondNegative,
    /// `∫ (1-Φ(a+u)) (1-Φ(b+u)) f(u) du`
    BothNegative,
}

impl PairMode {
    pub const ALL: [PairMode; 4] = [
        PairMode::BothPositive,
        PairMode::FirstNegative,
        PairMode::SecondNegative,
        PairMode::BothNegative,
    ];
}

impl QuadratureRule {
    /// Builds a rule from unsorted (node, weight) pairs. Equal nodes are merged.
    pub fn from_pairs(mut pairs: Vec<(f64, f64)>) -> Self {
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut nodes: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut weights: Vec<f64> = Vec::with_capacity(pairs.len());
        for (u, w) in pairs {
            if w <= 0.0 {
                continue;
            }
            match nodes.last() {
                Some(&last) if last == u => *weights.last_mut().unwrap() += w,
                _ => {
                    nodes.push(u);
                    weights.push(w);
                }
            }
        }
        Self { nodes, weights }
    }

    /// A single node carrying all the mass.
    pub fn point_mass(at: f64) -> Self {
        Self {
            nodes: vec![at],
            weights: vec![1.0],
        }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `Σ w_k h(u_k)`.
    #[inline]
    pub fn integrate(&self, mut h: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&u, &w)| w * h(u))
            .sum()
    }

    /// `∫ Φ(a+u) f(u) du`.
    pub fn marginal_single(&self, a: f64) -> f64 {
        self.integrate(|u| normal::cdf(a + u))
    }

    /// Pair integral selected by `mode`.
    pub fn marginal_pair(&self, a: f64, b: f64, mode: PairMode) -> f64 {
        match mode {
            PairMode::BothPositive => self.integrate(|u| normal::cdf(a + u) * normal::cdf(b + u)),
            PairMode::FirstNegative => self.integrate(|u| normal::sf(a + u) * normal::cdf(b + u)),
            PairMode::SecondNegative => self.integrate(|u| normal::cdf(a + u) * normal::sf(b + u)),
            PairMode::BothNegative => self.integrate(|u| normal::sf(a + u) * normal::sf(b + u)),
        }
    }

    /// Rescales the rule: nodes map to `shift + scale * u`, weights to `mass * w`.
    pub(crate) fn affine_pairs(&self, shift: f64, scale: f64, mass: f64) -> Vec<(f64, f64)> {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&u, &w)| (shift + scale * u, mass * w))
            .collect()
    }
}

/// Reads nodes and weights from a symmetric tridiagonal Jacobi matrix.
fn golub_welsch(diag: &[f64], offdiag: &[f64], total_mass: f64) -> Vec<(f64, f64)> {
    let n = diag.len();
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        jacobi[(i, i)] = diag[i];
        if i + 1 < n {
            jacobi[(i, i + 1)] = offdiag[i];
            jacobi[(i + 1, i)] = offdiag[i];
        }
    }
    let eig = SymmetricEigen::new(jacobi);
    (0..n)
        .map(|k| {
            let v0 = eig.eigenvectors[(0, k)];
            (eig.eigenvalues[k], total_mass * v0 * v0)
        })
        .collect()
}

/// Gauss rule for the standard normal weight `φ(x)` (probabilists' Hermite).
pub fn standard_normal_rule(n: usize) -> QuadratureRule {
    let diag = vec![0.0; n];
    let off: Vec<f64> = (1..n).map(|k| (k as f64).sqrt()).collect();
    symmetrize(QuadratureRule::from_pairs(golub_welsch(&diag, &off, 1.0)))
}

/// Gauss–Legendre rule on `[-1, 1]`.
pub fn legendre_rule(n: usize) -> QuadratureRule {
    let diag = vec![0.0; n];
    let off: Vec<f64> = (1..n)
        .map(|k| {
            let k = k as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        })
        .collect();
    symmetrize(QuadratureRule::from_pairs(golub_welsch(&diag, &off, 2.0)))
}

/// Gauss–Laguerre rule for the weight `e^{-x}` on `[0, ∞)`.
pub fn laguerre_rule(n: usize) -> QuadratureRule {
    let diag: Vec<f64> = (0..n).map(|k| 2.0 * k as f64 + 1.0).collect();
    let off: Vec<f64> = (1..n).map(|k| k as f64).collect();
    QuadratureRule::from_pairs(golub_welsch(&diag, &off, 1.0))
}

/// Gauss rule for the half-normal weight `2φ(x)` on `[0, ∞)`.
pub fn half_normal_rule(n: usize) -> QuadratureRule {
    // Discretisation grid: 240 panels of width 0.05 on [0, 12], 24 nodes each.
    const UPPER: f64 = 12.0;
    const PANELS: usize = 240;
    let base = legendre_rule(24);
    let width = UPPER / PANELS as f64;
    let mut xs = Vec::with_capacity(PANELS * base.len());
    let mut ws = Vec::with_capacity(PANELS * base.len());
    for p in 0..PANELS {
        let mid = (p as f64 + 0.5) * width;
        for (&t, &w) in base.nodes().iter().zip(base.weights()) {
            let x = mid + 0.5 * width * t;
            xs.push(x);
            ws.push(0.5 * width * w * 2.0 * normal::pdf(x));
        }
    }
    let mass: f64 = ws.iter().sum();

    // Stieltjes with orthonormal polynomials evaluated on the grid.
    let mut diag = Vec::with_capacity(n);
    let mut off = Vec::with_capacity(n.saturating_sub(1));
    let mut prev = vec![0.0; xs.len()];
    let mut cur = vec![1.0 / mass.sqrt(); xs.len()];
    let mut b_prev = 0.0;
    for k in 0..n {
        let alpha: f64 = (0..xs.len()).map(|i| ws[i] * xs[i] * cur[i] * cur[i]).sum();
        diag.push(alpha);
        if k + 1 == n {
            break;
        }
        let next: Vec<f64> = (0..xs.len())
            .map(|i| (xs[i] - alpha) * cur[i] - b_prev * prev[i])
            .collect();
        let b: f64 = (0..xs.len()).map(|i| ws[i] * next[i] * next[i]).sum::<f64>().sqrt();
        off.push(b);
        prev = cur;
        cur = next.into_iter().map(|v| v / b).collect();
        b_prev = b;
    }
    let rule = QuadratureRule::from_pairs(golub_welsch(&diag, &off, mass));
    // Renormalise so the rule integrates 1 exactly.
    let total = rule.total_weight();
    QuadratureRule {
        nodes: rule.nodes,
        weights: rule.weights.into_iter().map(|w| w / total).collect(),
    }
}

/// Forces exact mirror symmetry on a rule for a symmetric weight.
fn symmetrize(rule: QuadratureRule) -> QuadratureRule {
    let n = rule.len();
    let mut nodes = rule.nodes.clone();
    let mut weights = rule.weights.clone();
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (rule.nodes[j] - rule.nodes[i]);
        let w = 0.5 * (rule.weights[i] + rule.weights[j]);
        nodes[i] = -x;
        nodes[j] = x;
        weights[i] = w;
        weights[j] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    QuadratureRule { nodes, weights }
}

pub(crate) fn check_nodes(k: usize) -> Result<()> {
    if k < MIN_NODES {
        Err(Error::TooFewNodes {
            min: MIN_NODES,
            got: k,
        })
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moment(rule: &QuadratureRule, p: i32) -> f64 {
        rule.integrate(|x| x.powi(p))
    }

    #[test]
    fn hermite_rule_matches_normal_moments() {
        let rule = standard_normal_rule(32);
        assert!((rule.total_weight() - 1.0).abs() < 1e-13);
        assert!(moment(&rule, 1).abs() < 1e-13);
        assert!((moment(&rule, 2) - 1.0).abs() < 1e-12);
        assert!((moment(&rule, 4) - 3.0).abs() < 1e-11);
        assert!((moment(&rule, 10) - 945.0).abs() < 1e-8);
    }

    #[test]
    fn legendre_rule_integrates_polynomials() {
        let rule = legendre_rule(10);
        assert!((rule.total_weight() - 2.0).abs() < 1e-13);
        assert!((moment(&rule, 18) - 2.0 / 19.0).abs() < 1e-13);
    }

    #[test]
    fn laguerre_rule_integrates_factorials() {
        let rule = laguerre_rule(16);
        assert!((rule.total_weight() - 1.0).abs() < 1e-12);
        assert!((moment(&rule, 5) - 120.0).abs() < 1e-8);
    }

    #[test]
    fn half_normal_rule_moments() {
        let rule = half_normal_rule(32);
        let mean = (2.0 / std::f64::consts::PI).sqrt();
        assert!((rule.total_weight() - 1.0).abs() < 1e-14);
        assert!((moment(&rule, 1) - mean).abs() < 1e-12);
        assert!((moment(&rule, 2) - 1.0).abs() < 1e-12);
        assert!((moment(&rule, 3) - 2.0 * mean).abs() < 1e-11);
        assert!(rule.nodes().iter().all(|&x| x > 0.0));
        assert!(rule.nodes().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn from_pairs_merges_duplicates() {
        let rule = QuadratureRule::from_pairs(vec![(1.0, 0.25), (-1.0, 0.5), (1.0, 0.25)]);
        assert_eq!(rule.nodes(), &[-1.0, 1.0]);
        assert_eq!(rule.weights(), &[0.5, 0.5]);
    }
}
