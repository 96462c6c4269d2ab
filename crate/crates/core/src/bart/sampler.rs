//! Metropolis–Hastings tree moves and the backfitting sweep.

use rand::Rng;
use rand_distr::StandardNormal;

use super::cutpoints::{BinnedRows, CutpointGrid};
use super::latent::draw_latent;
use super::tree::{split_probability, DecisionTree};
use super::BartConfig;
use crate::normal;

const GROW_PROB: f64 = 0.25;
const PRUNE_PROB: f64 = 0.25;

/// What a single MH step did to the tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MoveOutcome {
    Grew,
    Pruned,
    Changed,
    Rejected,
}

/// Read-only inputs shared by every tree update of one model.
#[derive(Clone, Copy)]
pub(crate) struct TreeContext<'a> {
    pub grid: &'a CutpointGrid,
    pub bins: &'a BinnedRows,
    /// Rows contributing to the likelihood; the rest are routed but ignored.
    pub active: &'a [bool],
    pub split_base: f64,
    pub split_power: f64,
    pub leaf_var: f64,
    pub min_leaf: usize,
    /// `false` replaces the likelihood by a constant (prior sampling).
    pub likelihood: bool,
}

impl<'a> TreeContext<'a> {
    pub fn new(
        config: &BartConfig,
        grid: &'a CutpointGrid,
        bins: &'a BinnedRows,
        active: &'a [bool],
    ) -> Self {
        let sd = config.leaf_sd();
        Self {
            grid,
            bins,
            active,
            split_base: config.split_base,
            split_power: config.split_power,
            leaf_var: sd * sd,
            min_leaf: config.min_leaf_size,
            likelihood: true,
        }
    }

    fn p_split(&self, depth: u32) -> f64 {
        split_probability(self.split_base, self.split_power, depth)
    }

    /// Log marginal likelihood of a leaf holding `n` unit-variance residuals
    /// summing to `sum`, under the `N(0, leaf_var)` leaf prior (up to terms
    /// that cancel in MH ratios).
    fn leaf_loglik(&self, n: usize, sum: f64) -> f64 {
        if !self.likelihood {
            return 0.0;
        }
        let prec = 1.0 + n as f64 * self.leaf_var;
        -0.5 * prec.ln() + 0.5 * self.leaf_var * sum * sum / prec
    }

    /// Log ratio of structural priors for growing a leaf at `depth`.
    fn log_grow_prior(&self, depth: u32) -> f64 {
        let p = self.p_split(depth);
        let pc = self.p_split(depth + 1);
        p.ln() + 2.0 * (1.0 - pc).ln() - (1.0 - p).ln()
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Stat {
    n: usize,
    sum: f64,
}

impl Stat {
    #[inline]
    fn add(&mut self, r: f64) {
        self.n += 1;
        self.sum += r;
    }
}

fn growable_leaves(tree: &DecisionTree, grid: &CutpointGrid) -> Vec<u32> {
    tree.leaves()
        .into_iter()
        .filter(|&l| !tree.available_vars(l, grid).is_empty())
        .collect()
}

fn pick<R: Rng + ?Sized, T: Copy>(items: &[T], rng: &mut R) -> T {
    items[rng.random_range(0..items.len())]
}

/// One MH step on `tree` against `residual`, keeping `leaf_of` (the leaf of
/// every row) in sync.
pub(crate) fn mh_step<R: Rng + ?Sized>(
    tree: &mut DecisionTree,
    leaf_of: &mut [u32],
    residual: &[f64],
    ctx: &TreeContext<'_>,
    rng: &mut R,
) -> MoveOutcome {
    let u: f64 = rng.random();
    if tree.is_root_only() || u < GROW_PROB {
        propose_grow(tree, leaf_of, residual, ctx, rng)
    } else if u < GROW_PROB + PRUNE_PROB {
        propose_prune(tree, leaf_of, residual, ctx, rng)
    } else {
        propose_change(tree, leaf_of, residual, ctx, rng)
    }
}

fn accept<R: Rng + ?Sized>(log_alpha: f64, rng: &mut R) -> bool {
    log_alpha >= 0.0 || rng.random::<f64>().ln() < log_alpha
}

fn propose_grow<R: Rng + ?Sized>(
    tree: &mut DecisionTree,
    leaf_of: &mut [u32],
    residual: &[f64],
    ctx: &TreeContext<'_>,
    rng: &mut R,
) -> MoveOutcome {
    let growable = growable_leaves(tree, ctx.grid);
    if growable.is_empty() {
        return MoveOutcome::Rejected;
    }
    let leaf = pick(&growable, rng);
    let var = pick(&tree.available_vars(leaf, ctx.grid), rng);
    let (lo, hi) = tree.cut_range(leaf, var, ctx.grid);
    let cut = rng.random_range(lo..hi);

    let (mut left, mut right) = (Stat::default(), Stat::default());
    for (i, &l) in leaf_of.iter().enumerate() {
        if l == leaf && ctx.active[i] {
            if ctx.bins.goes_left(i, var, cut) {
                left.add(residual[i]);
            } else {
                right.add(residual[i]);
            }
        }
    }
    if left.n < ctx.min_leaf || right.n < ctx.min_leaf {
        return MoveOutcome::Rejected;
    }

    let depth = tree.node(leaf).depth;
    let birth_prob = if tree.is_root_only() { 1.0 } else { GROW_PROB };
    let parent = tree.node(leaf).parent;
    let mut prunable_after = tree.prunable().len() + 1;
    if parent != super::tree::NO_NODE && tree.prunable().contains(&parent) {
        prunable_after -= 1;
    }
    let log_alpha = ctx.leaf_loglik(left.n, left.sum) + ctx.leaf_loglik(right.n, right.sum)
        - ctx.leaf_loglik(left.n + right.n, left.sum + right.sum)
        + ctx.log_grow_prior(depth)
        + PRUNE_PROB.ln()
        - (prunable_after as f64).ln()
        - birth_prob.ln()
        + (growable.len() as f64).ln();
    if !accept(log_alpha, rng) {
        return MoveOutcome::Rejected;
    }
    let (l_id, r_id) = tree.grow(leaf, var, cut);
    for (i, l) in leaf_of.iter_mut().enumerate() {
        if *l == leaf {
            *l = if ctx.bins.goes_left(i, var, cut) { l_id } else { r_id };
        }
    }
    MoveOutcome::Grew
}

fn propose_prune<R: Rng + ?Sized>(
    tree: &mut DecisionTree,
    leaf_of: &mut [u32],
    residual: &[f64],
    ctx: &TreeContext<'_>,
    rng: &mut R,
) -> MoveOutcome {
    let prunable = tree.prunable();
    let node = pick(&prunable, rng);
    let (l_id, r_id) = match tree.node(node).kind {
        super::tree::NodeKind::Split { left, right, .. } => (left, right),
        super::tree::NodeKind::Leaf { .. } => unreachable!(),
    };
    let (mut left, mut right) = (Stat::default(), Stat::default());
    for (i, &l) in leaf_of.iter().enumerate() {
        if ctx.active[i] {
            if l == l_id {
                left.add(residual[i]);
            } else if l == r_id {
                right.add(residual[i]);
            }
        }
    }

    // growable leaves of the pruned tree
    let mut growable_after = growable_leaves(tree, ctx.grid)
        .into_iter()
        .filter(|&l| l != l_id && l != r_id)
        .count();
    if !tree.available_vars(node, ctx.grid).is_empty() {
        growable_after += 1;
    }
    let birth_prob_after = if node == 0 { 1.0 } else { GROW_PROB };
    let depth = tree.node(node).depth;
    let log_alpha = ctx.leaf_loglik(left.n + right.n, left.sum + right.sum)
        - ctx.leaf_loglik(left.n, left.sum)
        - ctx.leaf_loglik(right.n, right.sum)
        - ctx.log_grow_prior(depth)
        + birth_prob_after.ln()
        - (growable_after as f64).ln()
        - PRUNE_PROB.ln()
        + (prunable.len() as f64).ln();
    if !accept(log_alpha, rng) {
        return MoveOutcome::Rejected;
    }
    tree.prune(node);
    for l in leaf_of.iter_mut() {
        if *l == l_id || *l == r_id {
            *l = node;
        }
    }
    MoveOutcome::Pruned
}

fn propose_change<R: Rng + ?Sized>(
    tree: &mut DecisionTree,
    leaf_of: &mut [u32],
    residual: &[f64],
    ctx: &TreeContext<'_>,
    rng: &mut R,
) -> MoveOutcome {
    let splits = tree.splits();
    let node = pick(&splits, rng);
    let var = pick(&tree.available_vars(node, ctx.grid), rng);
    let (lo, hi) = tree.cut_range(node, var, ctx.grid);
    let cut = rng.random_range(lo..hi);
    if tree.rule(node) == Some((var, cut)) {
        // identical proposal: acceptance ratio is exactly one
        return MoveOutcome::Changed;
    }

    let mut candidate = tree.clone();
    candidate.set_rule(node, var, cut);
    let mut below = Vec::new();
    tree.collect_splits(node, &mut below);
    let descendants = &below[1..];
    if descendants.iter().any(|&m| !candidate.rule_is_valid(m, ctx.grid)) {
        return MoveOutcome::Rejected;
    }
    let rule_ratio: f64 = descendants
        .iter()
        .map(|&m| candidate.log_rule_prior(m, ctx.grid) - tree.log_rule_prior(m, ctx.grid))
        .sum();

    let mut leaves = Vec::new();
    tree.collect_leaves(node, &mut leaves);
    let mut in_subtree = vec![false; tree.arena_len()];
    for &l in &leaves {
        in_subtree[l as usize] = true;
    }
    let mut old_stats = vec![Stat::default(); tree.arena_len()];
    let mut new_stats = vec![Stat::default(); tree.arena_len()];
    let mut moved: Vec<(usize, u32)> = Vec::new();
    for (i, &l) in leaf_of.iter().enumerate() {
        if in_subtree[l as usize] {
            let target = candidate.route_from(node, ctx.bins, i);
            if ctx.active[i] {
                old_stats[l as usize].add(residual[i]);
                new_stats[target as usize].add(residual[i]);
            }
            if target != l {
                moved.push((i, target));
            }
        }
    }
    if leaves.iter().any(|&l| new_stats[l as usize].n < ctx.min_leaf) {
        return MoveOutcome::Rejected;
    }
    let delta_ll: f64 = leaves
        .iter()
        .map(|&l| {
            let (o, n) = (old_stats[l as usize], new_stats[l as usize]);
            ctx.leaf_loglik(n.n, n.sum) - ctx.leaf_loglik(o.n, o.sum)
        })
        .sum();
    if !accept(delta_ll + rule_ratio, rng) {
        return MoveOutcome::Rejected;
    }
    *tree = candidate;
    for (i, target) in moved {
        leaf_of[i] = target;
    }
    MoveOutcome::Changed
}

/// Conjugate draw of every leaf value given the residuals of its rows.
pub(crate) fn draw_leaf_values<R: Rng + ?Sized>(
    tree: &mut DecisionTree,
    leaf_of: &[u32],
    residual: &[f64],
    ctx: &TreeContext<'_>,
    rng: &mut R,
) {
    let mut stats = vec![Stat::default(); tree.arena_len()];
    for (i, &l) in leaf_of.iter().enumerate() {
        if ctx.active[i] {
            stats[l as usize].add(residual[i]);
        }
    }
    for leaf in tree.leaves() {
        let s = stats[leaf as usize];
        let prec = 1.0 + s.n as f64 * ctx.leaf_var;
        let mean = ctx.leaf_var * s.sum / prec;
        let sd = (ctx.leaf_var / prec).sqrt();
        let z: f64 = rng.sample(StandardNormal);
        tree.set_leaf_value(leaf, mean + sd * z);
    }
}

/// Sum-of-trees probit ensemble over a fixed set of rows.
///
/// Rows flagged inactive are carried along (routed, and their fit kept
/// current) so that out-of-sample predictions come for free each sweep.
pub(crate) struct ProbitEnsemble {
    pub grid: CutpointGrid,
    pub bins: BinnedRows,
    pub active: Vec<bool>,
    pub trees: Vec<DecisionTree>,
    leaf_of: Vec<Vec<u32>>,
    pub fit: Vec<f64>,
    pub offset: f64,
    latent: Vec<f64>,
    partial: Vec<f64>,
    residual: Vec<f64>,
    config: BartConfig,
}

impl ProbitEnsemble {
    pub fn new(
        config: &BartConfig,
        grid: CutpointGrid,
        bins: BinnedRows,
        active: Vec<bool>,
        offset: f64,
    ) -> Self {
        let n = bins.rows();
        assert_eq!(active.len(), n);
        Self {
            grid,
            bins,
            active,
            trees: vec![DecisionTree::leaf(0.0); config.trees],
            leaf_of: vec![vec![0; n]; config.trees],
            fit: vec![0.0; n],
            offset,
            latent: vec![0.0; n],
            partial: vec![0.0; n],
            residual: vec![0.0; n],
            config: config.clone(),
        }
    }

    pub fn rows(&self) -> usize {
        self.fit.len()
    }

    /// Starts every tree at a constant leaf so the ensemble sums to `total`.
    #[cfg(test)]
    pub fn set_constant_fit(&mut self, total: f64) {
        let each = total / self.trees.len() as f64;
        for (tree, leaf_of) in self.trees.iter_mut().zip(self.leaf_of.iter_mut()) {
            *tree = DecisionTree::leaf(each);
            leaf_of.iter_mut().for_each(|l| *l = 0);
        }
        self.fit.iter_mut().for_each(|f| *f = total);
    }

    /// Linear predictor `offset + Σ trees` at `row`.
    #[inline]
    pub fn eta(&self, row: usize) -> f64 {
        self.offset + self.fit[row]
    }

    #[inline]
    pub fn probability(&self, row: usize) -> f64 {
        normal::cdf(self.eta(row))
    }

    #[cfg(test)]
    pub fn probabilities(&self) -> Vec<f64> {
        (0..self.rows()).map(|i| self.probability(i)).collect()
    }

    /// One Gibbs sweep: latent utilities for active rows, then every tree.
    pub fn sweep<R: Rng + ?Sized>(&mut self, y: &[u8], rng: &mut R) {
        debug_assert_eq!(y.len(), self.rows());
        for i in 0..self.rows() {
            if self.active[i] {
                self.latent[i] = draw_latent(y[i] == 1, self.offset + self.fit[i], rng);
            }
        }
        self.backfit(rng);
    }

    fn backfit<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let ctx = TreeContext::new(&self.config, &self.grid, &self.bins, &self.active);
        for t in 0..self.trees.len() {
            let tree = &mut self.trees[t];
            let leaf_of = &mut self.leaf_of[t];
            for i in 0..self.fit.len() {
                self.partial[i] = self.fit[i] - tree.leaf_value(leaf_of[i]);
                self.residual[i] = self.latent[i] - self.offset - self.partial[i];
            }
            mh_step(tree, leaf_of, &self.residual, &ctx, rng);
            draw_leaf_values(tree, leaf_of, &self.residual, &ctx, rng);
            for i in 0..self.fit.len() {
                self.fit[i] = self.partial[i] + tree.leaf_value(leaf_of[i]);
            }
        }
    }
}
