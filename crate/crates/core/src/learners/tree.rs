//! Exact greedy regression trees shared by all tree-based learners.
//!
//! A split of a node with target sum `S` over `n` rows into `(S_L, n_L)` and
//! `(S_R, n_R)` has gain
//!
//! ```text
//! S_L^2 / (n_L + l2) + S_R^2 / (n_R + l2) - S^2 / (n + l2)
//! ```
//!
//! which with `l2 = 0` is the decrease in squared error. Leaves predict
//! `S / (n + l2)`, the mean when `l2 = 0`.

use rand::seq::index;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

/// `(feature, threshold, left, right, value)`; `feature = -1` marks a leaf.
pub type NodeRow = (i64, f64, i64, i64, f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<NodeRow>,
    /// Split gain per node, 0 for leaves.
    pub gains: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeConfig {
    pub max_depth: Option<usize>,
    /// Grow best-first until this many leaves; breadth-first when `None`.
    pub max_leaves: Option<usize>,
    pub min_samples_leaf: usize,
    pub l2: f64,
    /// Size of the random feature subset tried at each split; all when `None`.
    pub max_features: Option<usize>,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            max_depth: None,
            max_leaves: None,
            min_samples_leaf: 1,
            l2: 0.0,
            max_features: None,
        }
    }
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Self {
            nodes: vec![(-1, 0.0, -1, -1, value)],
            gains: vec![0.0],
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            let (f, t, l, r, v) = self.nodes[i];
            if f < 0 {
                return v;
            }
            i = if row[f as usize] <= t { l as usize } else { r as usize };
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.0 < 0).count()
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            let (f, _, l, r, _) = t.nodes[i];
            if f < 0 {
                0
            } else {
                1 + go(t, l as usize).max(go(t, r as usize))
            }
        }
        go(self, 0)
    }

    /// Multiplies every node value by `factor`.
    pub fn scale_values(&mut self, factor: f64) {
        for n in &mut self.nodes {
            n.4 *= factor;
        }
    }

    /// Summed split gains per feature.
    pub fn raw_importance(&self, ncols: usize) -> Vec<f64> {
        let mut imp = vec![0.0; ncols];
        for (n, g) in self.nodes.iter().zip(&self.gains) {
            if n.0 >= 0 {
                imp[n.0 as usize] += g;
            }
        }
        imp
    }
}

pub(crate) fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        for x in &mut v {
            *x /= total;
        }
    } else {
        v.iter_mut().for_each(|x| *x = 0.0);
    }
    v
}

/// Weighted sum of per-tree normalized importances.
pub(crate) fn mean_normalized<'a>(trees: impl Iterator<Item = (&'a Tree, f64)>, ncols: usize) -> Vec<f64> {
    let mut acc = vec![0.0; ncols];
    for (t, w) in trees {
        for (a, v) in acc.iter_mut().zip(normalize(t.raw_importance(ncols))) {
            *a += w * v;
        }
    }
    acc
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
    n_left: usize,
}

struct Pending {
    node: usize,
    depth: usize,
    /// Range of this node's samples in `members` and in every feature segment.
    start: usize,
    end: usize,
    split: Option<Candidate>,
}

struct Grower<'a> {
    /// Column-major copy of the sampled rows: `cols[f * m + p]`.
    cols: Vec<f64>,
    m: usize,
    d: usize,
    y: Vec<f64>,
    /// Sample positions; each node's range is kept ascending.
    members: Vec<u32>,
    /// Per feature, a segment of `m` positions; each node's range is kept
    /// sorted by that feature's value.
    sorted: Vec<u32>,
    left_mask: Vec<bool>,
    scratch: Vec<u32>,
    cfg: &'a TreeConfig,
    rng: Option<&'a mut ChaCha8Rng>,
    tree: Tree,
}

impl Grower<'_> {
    fn best_split(&mut self, start: usize, end: usize, depth: usize) -> Option<Candidate> {
        let n = end - start;
        let min_leaf = self.cfg.min_samples_leaf.max(1);
        if n < 2 * min_leaf || self.cfg.max_depth.is_some_and(|d| depth >= d) {
            return None;
        }
        let d = self.d;
        let features: Vec<usize> = match (self.cfg.max_features, self.rng.as_deref_mut()) {
            (Some(m), Some(rng)) if m < d => {
                let mut f = index::sample(rng, d, m.max(1)).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..d).collect(),
        };

        let l2 = self.cfg.l2;
        let mut total = 0.0;
        let mut sq = 0.0;
        for &p in &self.members[start..end] {
            let v = self.y[p as usize];
            total += v;
            sq += v * v;
        }
        let parent = total * total / (n as f64 + l2);
        let floor = 1e-12 * sq;

        let m = self.m;
        let mut best: Option<Candidate> = None;
        for f in features {
            let order = &self.sorted[f * m + start..f * m + end];
            let col = &self.cols[f * m..(f + 1) * m];
            let mut s_left = 0.0;
            for i in 0..n - 1 {
                s_left += self.y[order[i] as usize];
                let n_left = i + 1;
                let n_right = n - n_left;
                if n_left < min_leaf {
                    continue;
                }
                if n_right < min_leaf {
                    break;
                }
                let a = col[order[i] as usize];
                let b = col[order[i + 1] as usize];
                if !(a < b) {
                    continue;
                }
                let s_right = total - s_left;
                let gain = s_left * s_left / (n_left as f64 + l2) + s_right * s_right / (n_right as f64 + l2) - parent;
                if gain > floor && gain > 0.0 && best.map_or(true, |c| gain > c.gain) {
                    let mut threshold = a * 0.5 + b * 0.5;
                    if !(threshold < b) || threshold < a {
                        threshold = a;
                    }
                    best = Some(Candidate {
                        feature: f,
                        threshold,
                        gain,
                        n_left,
                    });
                }
            }
        }
        best
    }

    fn leaf_value(&self, start: usize, end: usize) -> f64 {
        let s: f64 = self.members[start..end].iter().map(|&p| self.y[p as usize]).sum();
        s / ((end - start) as f64 + self.cfg.l2)
    }

    fn make_pending(&mut self, depth: usize, start: usize, end: usize) -> Pending {
        let value = self.leaf_value(start, end);
        let node = self.tree.nodes.len();
        self.tree.nodes.push((-1, 0.0, -1, -1, value));
        self.tree.gains.push(0.0);
        Pending {
            node,
            depth,
            start,
            end,
            split: self.best_split(start, end, depth),
        }
    }

    /// Stable in-place partition of `buf[start..end]` by `left_mask`.
    fn partition(buf: &mut [u32], mask: &[bool], scratch: &mut Vec<u32>) {
        scratch.clear();
        let mut w = 0;
        for r in 0..buf.len() {
            let q = buf[r];
            if mask[q as usize] {
                buf[w] = q;
                w += 1;
            } else {
                scratch.push(q);
            }
        }
        buf[w..].copy_from_slice(scratch);
    }

    fn apply(&mut self, p: Pending) -> (Pending, Pending) {
        let c = p.split.expect("only split nodes with a candidate");
        let m = self.m;
        let (start, end) = (p.start, p.end);
        let fseg = c.feature * m;
        for &q in &self.sorted[fseg + start..fseg + start + c.n_left] {
            self.left_mask[q as usize] = true;
        }
        Self::partition(&mut self.members[start..end], &self.left_mask, &mut self.scratch);
        // Feature orders are only read by children that may still split.
        let min_leaf = self.cfg.min_samples_leaf.max(1);
        let depth_ok = self.cfg.max_depth.map_or(true, |d| p.depth + 1 < d);
        let splittable = |n: usize| depth_ok && n >= 2 * min_leaf;
        if splittable(c.n_left) || splittable(end - start - c.n_left) {
            for f in 0..self.d {
                let seg = &mut self.sorted[f * m + start..f * m + end];
                Self::partition(seg, &self.left_mask, &mut self.scratch);
            }
        }
        for &q in &self.members[start..start + c.n_left] {
            self.left_mask[q as usize] = false;
        }
        let mid = start + c.n_left;
        let left = self.make_pending(p.depth + 1, start, mid);
        let right = self.make_pending(p.depth + 1, mid, end);
        let node = &mut self.tree.nodes[p.node];
        node.0 = c.feature as i64;
        node.1 = c.threshold;
        node.2 = left.node as i64;
        node.3 = right.node as i64;
        self.tree.gains[p.node] = c.gain;
        (left, right)
    }
}

/// Row orders of a full matrix per feature, ascending by value then row.
/// Built once per fit and shared by every tree grown on that matrix.
#[derive(Debug, Clone)]
pub struct Presort {
    order: Vec<u32>,
    n: usize,
}

impl Presort {
    pub fn new(x: &Matrix) -> Self {
        let n = x.nrows();
        let mut order = Vec::with_capacity(n * x.ncols());
        for f in 0..x.ncols() {
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| x.get(a as usize, f).total_cmp(&x.get(b as usize, f)));
            order.extend(idx);
        }
        Self { order, n }
    }
}

/// Grows a tree on `x[rows]` against `y[rows]`. `rows` may repeat indices
/// (bootstrap samples). `rng` drives per-split feature subsets. `presort`
/// must come from `x` when given.
pub fn grow(
    x: &Matrix,
    y: &[f64],
    rows: &[usize],
    cfg: &TreeConfig,
    rng: Option<&mut ChaCha8Rng>,
    presort: Option<&Presort>,
) -> Tree {
    assert!(!rows.is_empty(), "tree needs at least one row");
    let owned;
    let presort = match presort {
        Some(p) => p,
        None => {
            owned = Presort::new(x);
            &owned
        }
    };
    let n = presort.n;
    let m = rows.len();
    let d = x.ncols();
    let ys: Vec<f64> = rows.iter().map(|&r| y[r]).collect();
    let members: Vec<u32> = (0..m as u32).collect();
    let mut cols = vec![0.0; d * m];
    for (p, &r) in rows.iter().enumerate() {
        for (f, &v) in x.row(r).iter().enumerate() {
            cols[f * m + p] = v;
        }
    }
    // Positions of each row in the sample, ascending (CSR layout).
    let mut start = vec![0u32; n + 1];
    for &r in rows {
        start[r + 1] += 1;
    }
    for i in 0..n {
        start[i + 1] += start[i];
    }
    let mut fill = start.clone();
    let mut at = vec![0u32; m];
    for (p, &r) in rows.iter().enumerate() {
        at[fill[r] as usize] = p as u32;
        fill[r] += 1;
    }
    let mut sorted = Vec::with_capacity(d * m);
    for f in 0..d {
        for &r in &presort.order[f * n..(f + 1) * n] {
            sorted.extend_from_slice(&at[start[r as usize] as usize..start[r as usize + 1] as usize]);
        }
    }

    let mut g = Grower {
        cols,
        m,
        d,
        y: ys,
        members,
        sorted,
        left_mask: vec![false; m],
        scratch: Vec::with_capacity(m),
        cfg,
        rng,
        tree: Tree {
            nodes: Vec::new(),
            gains: Vec::new(),
        },
    };
    let root = g.make_pending(0, 0, m);

    match cfg.max_leaves {
        None => {
            let mut queue = std::collections::VecDeque::from([root]);
            while let Some(p) = queue.pop_front() {
                if p.split.is_some() {
                    let (l, r) = g.apply(p);
                    queue.push_back(l);
                    queue.push_back(r);
                }
            }
        }
        Some(max_leaves) => {
            let mut open = vec![root];
            let mut leaves = 1;
            while leaves < max_leaves {
                let mut pick: Option<usize> = None;
                for (i, p) in open.iter().enumerate() {
                    if let Some(c) = p.split {
                        let better = match pick {
                            None => true,
                            Some(j) => {
                                let o = open[j].split.expect("picked has split");
                                c.gain > o.gain || (c.gain == o.gain && p.node < open[j].node)
                            }
                        };
                        if better {
                            pick = Some(i);
                        }
                    }
                }
                let Some(i) = pick else { break };
                let p = open.swap_remove(i);
                let (l, r) = g.apply(p);
                open.push(l);
                open.push(r);
                leaves += 1;
            }
        }
    }
    g.tree
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::rng::stream_rng;

    fn all(n: usize) -> Vec<usize> {
        (0..n).collect()
    }

    #[test]
    fn constant_target_is_a_single_leaf() {
        let x = Matrix::from_rows(&[[1.0], [2.0], [3.0]]);
        let t = grow(&x, &[3.0, 3.0, 3.0], &all(3), &TreeConfig::default(), None, None);
        assert_eq!(t, Tree::leaf(3.0));
    }

    #[test]
    fn step_function_split_at_midpoint() {
        let x = Matrix::from_rows(&[[0.0, 5.0], [1.0, 5.0], [2.0, 5.0], [3.0, 5.0]]);
        let t = grow(&x, &[1.0, 1.0, 4.0, 4.0], &all(4), &TreeConfig::default(), None, None);
        assert_eq!(t.nodes[0].0, 0);
        assert_eq!(t.nodes[0].1, 1.5);
        assert_eq!(t.n_leaves(), 2);
        assert_eq!(t.predict_row(&[1.5, 0.0]), 1.0);
        assert_eq!(t.predict_row(&[1.6, 0.0]), 4.0);
        // SSE 9 removed entirely.
        assert_eq!(t.gains[0], 9.0);
    }

    #[test]
    fn ties_pick_lowest_feature() {
        // Columns 0 and 1 are identical, so both give the same best split.
        let x = Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]);
        let t = grow(&x, &[0.0, 0.0, 1.0], &all(3), &TreeConfig::default(), None, None);
        assert_eq!(t.nodes[0].0, 0);
    }

    #[test]
    fn min_leaf_and_depth_limits() {
        let rows: Vec<[f64; 1]> = (0..16).map(|i| [i as f64]).collect();
        let x = Matrix::from_rows(&rows);
        let y: Vec<f64> = (0..16).map(|i| ((i * 7) % 5) as f64).collect();
        let cfg = TreeConfig {
            max_depth: Some(2),
            ..Default::default()
        };
        assert!(grow(&x, &y, &all(16), &cfg, None, None).depth() <= 2);
        let cfg = TreeConfig {
            min_samples_leaf: 5,
            ..Default::default()
        };
        let t = grow(&x, &y, &all(16), &cfg, None, None);
        assert!(t.n_leaves() <= 3);
        let cfg = TreeConfig {
            max_leaves: Some(4),
            ..Default::default()
        };
        assert_eq!(grow(&x, &y, &all(16), &cfg, None, None).n_leaves(), 4);
    }

    #[test]
    fn unlimited_tree_memorizes_distinct_rows() {
        let rows: Vec<[f64; 2]> = (0..25).map(|i| [(i * 3 % 7) as f64, i as f64]).collect();
        let x = Matrix::from_rows(&rows);
        let y: Vec<f64> = (0..25).map(|i| ((i * 13) % 11) as f64).collect();
        let t = grow(&x, &y, &all(25), &TreeConfig::default(), None, None);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(t.predict_row(r), y[i]);
        }
    }

    #[test]
    fn l2_shrinks_leaf_values() {
        let x = Matrix::from_rows(&[[0.0], [1.0]]);
        let cfg = TreeConfig {
            l2: 1.0,
            max_depth: Some(0),
            ..Default::default()
        };
        let t = grow(&x, &[2.0, 4.0], &all(2), &cfg, None, None);
        assert_eq!(t.nodes[0].4, 2.0);
    }

    #[test]
    fn feature_subsets_are_seeded() {
        let rows: Vec<[f64; 6]> = (0..40).map(|i| std::array::from_fn(|j| ((i * (j + 3)) % 17) as f64)).collect();
        let x = Matrix::from_rows(&rows);
        let y: Vec<f64> = rows.iter().map(|r| r[0] + r[3] * 0.5).collect();
        let cfg = TreeConfig {
            max_features: Some(2),
            ..Default::default()
        };
        let a = grow(&x, &y, &all(40), &cfg, Some(&mut stream_rng(1, 0)), None);
        let b = grow(&x, &y, &all(40), &cfg, Some(&mut stream_rng(1, 0)), None);
        assert_eq!(a, b);
    }

    #[test]
    fn importance_from_single_relevant_column() {
        let rows: Vec<[f64; 3]> = (0..50)
            .map(|i| {
                let t = i as f64;
                [t, 1e-9 * (t * 1.7).sin(), 1e-9 * (t * 0.3).cos()]
            })
            .collect();
        let x = Matrix::from_rows(&rows);
        let y: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let cfg = TreeConfig {
            max_depth: Some(1),
            ..Default::default()
        };
        let imp = normalize(grow(&x, &y, &all(50), &cfg, None, None).raw_importance(3));
        assert!(imp[0] >= 0.99);
        assert!((imp.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
