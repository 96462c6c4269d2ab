//! Single-tree summaries of unit-level posterior estimates.
//!
//! A small regression tree is fit once to posterior means; its largest- and
//! smallest-mean leaves then define two subgroups whose difference is
//! evaluated draw by draw.

use serde::Serialize;

use crate::data::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum CartNodeKind {
    Split {
        var: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        members: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CartNode {
    pub depth: usize,
    pub n: usize,
    pub mean: f64,
    pub sse: f64,
    pub kind: CartNodeKind,
}

/// Regression tree; node 0 is the root. Rows with `x[var] <= threshold` go left.
#[derive(Debug, Clone, PartialEq)]
pub struct CartTree {
    pub nodes: Vec<CartNode>,
    pub max_depth: usize,
    pub min_leaf: usize,
}

/// `max(50, n / 100)`.
pub fn default_min_leaf(n: usize) -> usize {
    50.max(n / 100)
}

pub const DEFAULT_MAX_DEPTH: usize = 3;

fn sse_of(y: &[f64], idx: &[usize]) -> (f64, f64) {
    let n = idx.len() as f64;
    let mean = idx.iter().map(|&i| y[i]).sum::<f64>() / n;
    (mean, idx.iter().map(|&i| (y[i] - mean).powi(2)).sum())
}

struct Best {
    var: usize,
    threshold: f64,
    sse: f64,
}

fn best_split(x: &Matrix, y: &[f64], idx: &[usize], min_leaf: usize) -> Option<Best> {
    let n = idx.len();
    let mut best: Option<Best> = None;
    let mut order = idx.to_vec();
    for var in 0..x.cols() {
        order.sort_by(|&a, &b| x.get(a, var).total_cmp(&x.get(b, var)));
        let total: f64 = order.iter().map(|&i| y[i]).sum();
        let total_sq: f64 = order.iter().map(|&i| y[i] * y[i]).sum();
        let (mut s, mut sq) = (0.0, 0.0);
        for k in 1..n {
            let yi = y[order[k - 1]];
            s += yi;
            sq += yi * yi;
            if k < min_leaf || n - k < min_leaf {
                continue;
            }
            let (lo, hi) = (x.get(order[k - 1], var), x.get(order[k], var));
            if lo >= hi {
                continue;
            }
            let (nl, nr) = (k as f64, (n - k) as f64);
            let sse = (sq - s * s / nl) + ((total_sq - sq) - (total - s).powi(2) / nr);
            if best.as_ref().is_none_or(|b| sse < b.sse) {
                best = Some(Best {
                    var,
                    threshold: 0.5 * (lo + hi),
                    sse,
                });
            }
        }
    }
    best
}

/// Greedy depth-limited regression tree minimizing within-leaf squared error.
pub fn fit_cart(x: &Matrix, y: &[f64], max_depth: usize, min_leaf: usize) -> Result<CartTree> {
    if y.is_empty() {
        return Err(Error::EmptyInput("subgroup response"));
    }
    if x.rows() != y.len() {
        return Err(Error::DimensionMismatch(format!("{} rows for {} responses", x.rows(), y.len())));
    }
    if max_depth == 0 || min_leaf == 0 {
        return Err(Error::InvalidConfig("max_depth and min_leaf must be at least 1".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("subgroup response contains non-finite values".into()));
    }
    let mut tree = CartTree {
        nodes: Vec::new(),
        max_depth,
        min_leaf,
    };
    let all: Vec<usize> = (0..y.len()).collect();
    grow(&mut tree, x, y, all, 0);
    Ok(tree)
}

fn grow(tree: &mut CartTree, x: &Matrix, y: &[f64], idx: Vec<usize>, depth: usize) -> usize {
    let (mean, sse) = sse_of(y, &idx);
    let id = tree.nodes.len();
    tree.nodes.push(CartNode {
        depth,
        n: idx.len(),
        mean,
        sse,
        kind: CartNodeKind::Leaf { members: Vec::new() },
    });
    let split = if depth < tree.max_depth && idx.len() >= 2 * tree.min_leaf {
        best_split(x, y, &idx, tree.min_leaf).filter(|b| sse - b.sse > 1e-12 * (1.0 + sse))
    } else {
        None
    };
    match split {
        None => tree.nodes[id].kind = CartNodeKind::Leaf { members: idx },
        Some(b) => {
            let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x.get(i, b.var) <= b.threshold);
            let left = grow(tree, x, y, l, depth + 1);
            let right = grow(tree, x, y, r, depth + 1);
            tree.nodes[id].kind = CartNodeKind::Split {
                var: b.var,
                threshold: b.threshold,
                left,
                right,
            };
        }
    }
    id
}

impl CartTree {
    pub fn leaves(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| matches!(self.nodes[i].kind, CartNodeKind::Leaf { .. }))
            .collect()
    }

    pub fn members(&self, leaf: usize) -> &[usize] {
        match &self.nodes[leaf].kind {
            CartNodeKind::Leaf { members } => members,
            CartNodeKind::Split { .. } => &[],
        }
    }

    /// Total within-leaf squared error.
    pub fn sse(&self) -> f64 {
        self.leaves().iter().map(|&l| self.nodes[l].sse).sum()
    }

    /// Leaf reached by a covariate row.
    pub fn leaf_of(&self, row: &[f64]) -> usize {
        let mut id = 0;
        loop {
            match self.nodes[id].kind {
                CartNodeKind::Leaf { .. } => return id,
                CartNodeKind::Split { var, threshold, left, right } => {
                    id = if row[var] <= threshold { left } else { right };
                }
            }
        }
    }

    /// Leaves with the largest and smallest mean response.
    pub fn extreme_leaves(&self) -> Option<(usize, usize)> {
        let leaves = self.leaves();
        if leaves.len() < 2 {
            return None;
        }
        let by_mean = |a: &&usize, b: &&usize| self.nodes[**a].mean.total_cmp(&self.nodes[**b].mean);
        let hi = *leaves.iter().max_by(by_mean)?;
        let lo = *leaves.iter().min_by(by_mean)?;
        Some((hi, lo))
    }

    /// Indented text rendering.
    pub fn to_text(&self, names: &[String]) -> String {
        let mut out = String::new();
        self.render(0, names, &mut out);
        out
    }

    fn render(&self, id: usize, names: &[String], out: &mut String) {
        let node = &self.nodes[id];
        let pad = "  ".repeat(node.depth);
        match node.kind {
            CartNodeKind::Leaf { .. } => {
                out.push_str(&format!("{pad}leaf {id}: n={} mean={:.6}\n", node.n, node.mean));
            }
            CartNodeKind::Split { var, threshold, left, right } => {
                let name = names.get(var).cloned().unwrap_or_else(|| format!("x{}", var + 1));
                out.push_str(&format!("{pad}{name} <= {threshold:.6} (n={} mean={:.6})\n", node.n, node.mean));
                self.render(left, names, out);
                out.push_str(&format!("{pad}{name} > {threshold:.6}\n"));
                self.render(right, names, out);
            }
        }
    }

    /// Nested machine-readable form.
    pub fn export(&self, names: &[String]) -> CartExport {
        self.export_node(0, names)
    }

    fn export_node(&self, id: usize, names: &[String]) -> CartExport {
        let node = &self.nodes[id];
        match node.kind {
            CartNodeKind::Leaf { .. } => CartExport::Leaf {
                id,
                n: node.n,
                mean: node.mean,
            },
            CartNodeKind::Split { var, threshold, left, right } => CartExport::Split {
                variable: names.get(var).cloned().unwrap_or_else(|| format!("x{}", var + 1)),
                threshold,
                n: node.n,
                mean: node.mean,
                left: Box::new(self.export_node(left, names)),
                right: Box::new(self.export_node(right, names)),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum CartExport {
    Split {
        variable: String,
        threshold: f64,
        n: usize,
        mean: f64,
        left: Box<CartExport>,
        right: Box<CartExport>,
    },
    Leaf {
        id: usize,
        n: usize,
        mean: f64,
    },
}

/// Which unit-level estimand the tree summarizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SubgroupResponse {
    #[default]
    Tau,
    Delta,
    PDo0,
}

/// Posterior of the mean difference between the two designated leaves.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubgroupDifference {
    pub high_leaf: Option<usize>,
    pub low_leaf: Option<usize>,
    /// `true` when the tree has a single leaf and no difference exists.
    pub single_leaf: bool,
    pub draws: Vec<f64>,
}

/// For each draw (rows of `values`, draw-major with `n_obs` columns), the
/// mean over the high leaf minus the mean over the low leaf. Leaves are
/// fixed by the tree, not re-chosen per draw.
pub fn subgroup_difference(tree: &CartTree, values: &[f64], n_obs: usize) -> Result<SubgroupDifference> {
    let Some((hi, lo)) = tree.extreme_leaves() else {
        return Ok(SubgroupDifference {
            high_leaf: None,
            low_leaf: None,
            single_leaf: true,
            draws: Vec::new(),
        });
    };
    if n_obs != tree.nodes[0].n || values.len() % n_obs != 0 {
        return Err(Error::DimensionMismatch(format!(
            "{} values for a tree over {} units",
            values.len(),
            tree.nodes[0].n
        )));
    }
    let (mh, ml) = (tree.members(hi), tree.members(lo));
    let draws = values
        .chunks_exact(n_obs)
        .map(|draw| {
            let a = mh.iter().map(|&i| draw[i]).sum::<f64>() / mh.len() as f64;
            let b = ml.iter().map(|&i| draw[i]).sum::<f64>() / ml.len() as f64;
            a - b
        })
        .collect();
    Ok(SubgroupDifference {
        high_leaf: Some(hi),
        low_leaf: Some(lo),
        single_leaf: false,
        draws,
    })
}
