use super::cutpoints::{BinnedRows, CutpointGrid};

pub const NO_NODE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeKind {
    Leaf { value: f64 },
    Split { var: u32, cut: u32, left: u32, right: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub parent: u32,
    pub depth: u32,
    pub kind: NodeKind,
}

/// Arena-backed binary regression tree. Node 0 is the root; freed slots are
/// recycled.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    free: Vec<u32>,
}

impl Default for DecisionTree {
    fn default() -> Self {
        Self::leaf(0.0)
    }
}

impl DecisionTree {
    /// Root-only tree.
    pub fn leaf(value: f64) -> Self {
        Self {
            nodes: vec![Node {
                parent: NO_NODE,
                depth: 0,
                kind: NodeKind::Leaf { value },
            }],
            free: Vec::new(),
        }
    }

    #[inline]
    pub fn node(&self, id: u32) -> &Node {
        &self.nodes[id as usize]
    }

    pub fn arena_len(&self) -> usize {
        self.nodes.len()
    }

    fn is_live(&self, id: u32) -> bool {
        !self.free.contains(&id)
    }

    /// Live node ids in arena order.
    pub fn node_ids(&self) -> impl Iterator<Item = u32> + '_ {
        (0..self.nodes.len() as u32).filter(move |&id| self.is_live(id))
    }

    pub fn leaves(&self) -> Vec<u32> {
        let mut out = Vec::new();
        self.collect_leaves(0, &mut out);
        out
    }

    /// Leaves in the subtree rooted at `id`.
    pub fn collect_leaves(&self, id: u32, out: &mut Vec<u32>) {
        match self.node(id).kind {
            NodeKind::Leaf { .. } => out.push(id),
            NodeKind::Split { left, right, .. } => {
                self.collect_leaves(left, out);
                self.collect_leaves(right, out);
            }
        }
    }

    /// Split nodes in the subtree rooted at `id`, `id` included.
    pub fn collect_splits(&self, id: u32, out: &mut Vec<u32>) {
        if let NodeKind::Split { left, right, .. } = self.node(id).kind {
            out.push(id);
            self.collect_splits(left, out);
            self.collect_splits(right, out);
        }
    }

    pub fn splits(&self) -> Vec<u32> {
        let mut out = Vec::new();
        self.collect_splits(0, &mut out);
        out
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves().len()
    }

    pub fn is_root_only(&self) -> bool {
        matches!(self.nodes[0].kind, NodeKind::Leaf { .. })
    }

    pub fn is_leaf(&self, id: u32) -> bool {
        matches!(self.node(id).kind, NodeKind::Leaf { .. })
    }

    /// Split nodes whose two children are both leaves.
    pub fn prunable(&self) -> Vec<u32> {
        self.splits()
            .into_iter()
            .filter(|&id| match self.node(id).kind {
                NodeKind::Split { left, right, .. } => self.is_leaf(left) && self.is_leaf(right),
                NodeKind::Leaf { .. } => false,
            })
            .collect()
    }

    pub fn leaf_value(&self, id: u32) -> f64 {
        match self.node(id).kind {
            NodeKind::Leaf { value } => value,
            NodeKind::Split { .. } => panic!("node {id} is not a leaf"),
        }
    }

    pub fn set_leaf_value(&mut self, id: u32, value: f64) {
        match &mut self.nodes[id as usize].kind {
            NodeKind::Leaf { value: v } => *v = value,
            NodeKind::Split { .. } => panic!("node {id} is not a leaf"),
        }
    }

    fn alloc(&mut self, node: Node) -> u32 {
        if let Some(id) = self.free.pop() {
            self.nodes[id as usize] = node;
            id
        } else {
            self.nodes.push(node);
            (self.nodes.len() - 1) as u32
        }
    }

    /// Turns leaf `id` into a split with two zero-valued leaf children.
    pub fn grow(&mut self, id: u32, var: usize, cut: usize) -> (u32, u32) {
        assert!(self.is_leaf(id), "grow on a split node");
        let depth = self.node(id).depth + 1;
        let child = Node {
            parent: id,
            depth,
            kind: NodeKind::Leaf { value: 0.0 },
        };
        let left = self.alloc(child);
        let right = self.alloc(child);
        self.nodes[id as usize].kind = NodeKind::Split {
            var: var as u32,
            cut: cut as u32,
            left,
            right,
        };
        (left, right)
    }

    /// Collapses a split whose children are both leaves.
    pub fn prune(&mut self, id: u32) {
        let NodeKind::Split { left, right, .. } = self.node(id).kind else {
            panic!("prune on a leaf");
        };
        assert!(self.is_leaf(left) && self.is_leaf(right), "prune needs leaf children");
        self.free.push(left);
        self.free.push(right);
        self.nodes[id as usize].kind = NodeKind::Leaf { value: 0.0 };
    }

    pub fn set_rule(&mut self, id: u32, var: usize, cut: usize) {
        match &mut self.nodes[id as usize].kind {
            NodeKind::Split { var: v, cut: c, .. } => {
                *v = var as u32;
                *c = cut as u32;
            }
            NodeKind::Leaf { .. } => panic!("set_rule on a leaf"),
        }
    }

    pub fn rule(&self, id: u32) -> Option<(usize, usize)> {
        match self.node(id).kind {
            NodeKind::Split { var, cut, .. } => Some((var as usize, cut as usize)),
            NodeKind::Leaf { .. } => None,
        }
    }

    /// Leaf reached by `row`, starting from node `from`.
    #[inline]
    pub fn route_from(&self, from: u32, bins: &BinnedRows, row: usize) -> u32 {
        let mut id = from;
        loop {
            match self.nodes[id as usize].kind {
                NodeKind::Leaf { .. } => return id,
                NodeKind::Split { var, cut, left, right } => {
                    id = if bins.goes_left(row, var as usize, cut as usize) {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    #[inline]
    pub fn route(&self, bins: &BinnedRows, row: usize) -> u32 {
        self.route_from(0, bins, row)
    }

    /// Tree output for a raw covariate vector.
    pub fn predict(&self, grid: &CutpointGrid, x: &[f64]) -> f64 {
        let mut id = 0u32;
        loop {
            match self.nodes[id as usize].kind {
                NodeKind::Leaf { value } => return value,
                NodeKind::Split { var, cut, left, right } => {
                    let c = grid.cuts(var as usize)[cut as usize];
                    id = if x[var as usize] <= c { left } else { right };
                }
            }
        }
    }

    /// Admissible cutpoint index range `[lo, hi)` for `var` at `id`, given the
    /// rules of its ancestors.
    pub fn cut_range(&self, id: u32, var: usize, grid: &CutpointGrid) -> (usize, usize) {
        if !grid.is_admissible(var) {
            return (0, 0);
        }
        let (mut lo, mut hi) = (0usize, grid.n_cuts(var));
        let mut child = id;
        let mut cur = self.node(id).parent;
        while cur != NO_NODE {
            if let NodeKind::Split { var: v, cut, left, .. } = self.node(cur).kind {
                if v as usize == var {
                    if child == left {
                        hi = hi.min(cut as usize);
                    } else {
                        lo = lo.max(cut as usize + 1);
                    }
                }
            }
            child = cur;
            cur = self.node(cur).parent;
        }
        (lo, hi.max(lo))
    }

    /// Variables with a nonempty cut range at `id`.
    pub fn available_vars(&self, id: u32, grid: &CutpointGrid) -> Vec<usize> {
        grid.admissible_vars()
            .filter(|&v| {
                let (lo, hi) = self.cut_range(id, v, grid);
                hi > lo
            })
            .collect()
    }

    /// `true` when `id`'s own rule lies inside its admissible range.
    pub fn rule_is_valid(&self, id: u32, grid: &CutpointGrid) -> bool {
        match self.rule(id) {
            Some((var, cut)) => {
                let (lo, hi) = self.cut_range(id, var, grid);
                cut >= lo && cut < hi
            }
            None => true,
        }
    }

    /// Log prior probability of choosing `id`'s rule uniformly:
    /// `-log(#vars) - log(#cuts)`.
    pub fn log_rule_prior(&self, id: u32, grid: &CutpointGrid) -> f64 {
        let (var, _) = self.rule(id).expect("split node");
        let nv = self.available_vars(id, grid).len();
        let (lo, hi) = self.cut_range(id, var, grid);
        -((nv as f64).ln() + ((hi - lo) as f64).ln())
    }

    pub fn max_depth(&self) -> u32 {
        self.leaves().iter().map(|&l| self.node(l).depth).max().unwrap_or(0)
    }
}

/// Prior probability that a node at `depth` splits: `η (1 + depth)^{-ζ}`.
#[inline]
pub fn split_probability(base: f64, power: f64, depth: u32) -> f64 {
    base * (1.0 + depth as f64).powf(-power)
}

/// Structural log prior: `log p(d)` for every split node plus `log(1 - p(d))`
/// for every leaf.
pub fn log_tree_prior(tree: &DecisionTree, base: f64, power: f64) -> f64 {
    let mut total = 0.0;
    let mut stack = vec![0u32];
    while let Some(id) = stack.pop() {
        let node = tree.node(id);
        let p = split_probability(base, power, node.depth);
        match node.kind {
            NodeKind::Leaf { .. } => total += (1.0 - p).ln(),
            NodeKind::Split { left, right, .. } => {
                total += p.ln();
                stack.push(left);
                stack.push(right);
            }
        }
    }
    total
}
