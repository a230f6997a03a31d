use serde::{Deserialize, Serialize};

use crate::matrix::{CscMatrix, CsrMatrix};

/// Binary decision tree node. Samples with `x[feature] <= threshold` go left;
/// features absent from a sparse row read as zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    pub fn predict_row(&self, x: &CsrMatrix, r: usize) -> f64 {
        let mut node = self;
        loop {
            match node {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x.get(r, *feature) <= *threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            Node::Leaf { .. } => 1,
            Node::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }
}

/// Additive per-row statistic: `(weight, weighted positives)` for Gini trees
/// and `(gradient, hessian)` sums for boosted trees.
pub(crate) type Stat = [f64; 2];

fn add(a: Stat, b: Stat) -> Stat {
    [a[0] + b[0], a[1] + b[1]]
}

fn sub(a: Stat, b: Stat) -> Stat {
    [a[0] - b[0], a[1] - b[1]]
}

pub(crate) trait Criterion {
    /// Gain of splitting `left + right`, or `None` when a child is too small.
    fn gain(&self, left: Stat, right: Stat) -> Option<f64>;
    fn leaf(&self, s: Stat) -> f64;
    /// True when the node cannot improve by splitting.
    fn is_pure(&self, _s: Stat) -> bool {
        false
    }
}

pub(crate) struct Gini;

fn gini_impurity(s: Stat) -> f64 {
    if s[0] <= 0.0 {
        return 0.0;
    }
    2.0 * s[1] * (s[0] - s[1]) / s[0]
}

impl Criterion for Gini {
    fn gain(&self, l: Stat, r: Stat) -> Option<f64> {
        if l[0] <= 0.0 || r[0] <= 0.0 {
            return None;
        }
        Some(gini_impurity(add(l, r)) - gini_impurity(l) - gini_impurity(r))
    }

    fn leaf(&self, s: Stat) -> f64 {
        if s[0] > 0.0 {
            s[1] / s[0]
        } else {
            0.5
        }
    }

    fn is_pure(&self, s: Stat) -> bool {
        s[1] <= 0.0 || s[1] >= s[0]
    }
}

pub(crate) struct Newton {
    pub lambda: f64,
    pub min_child_weight: f64,
}

pub fn leaf_weight(grad_sum: f64, hess_sum: f64, lambda: f64) -> f64 {
    -grad_sum / (hess_sum + lambda)
}

pub fn split_gain(left: (f64, f64), right: (f64, f64), lambda: f64) -> f64 {
    let score = |g: f64, h: f64| g * g / (h + lambda);
    0.5 * (score(left.0, left.1) + score(right.0, right.1) - score(left.0 + right.0, left.1 + right.1))
}

impl Criterion for Newton {
    fn gain(&self, l: Stat, r: Stat) -> Option<f64> {
        if l[1] < self.min_child_weight || r[1] < self.min_child_weight {
            return None;
        }
        Some(split_gain((l[0], l[1]), (r[0], r[1]), self.lambda))
    }

    fn leaf(&self, s: Stat) -> f64 {
        leaf_weight(s[0], s[1], self.lambda)
    }
}

pub(crate) struct Builder<'a, C: Criterion> {
    pub x: &'a CsrMatrix,
    pub csc: &'a CscMatrix,
    pub stats: Vec<Stat>,
    pub criterion: C,
    pub max_depth: usize,
    pub min_samples_split: usize,
    member: Vec<bool>,
    entries: Vec<(f64, Stat)>,
    row_search_factor: f64,
}

impl<'a, C: Criterion> Builder<'a, C> {
    pub fn new(x: &'a CsrMatrix, csc: &'a CscMatrix, stats: Vec<Stat>, criterion: C, max_depth: usize) -> Self {
        let avg = x.nnz() as f64 / x.n_rows().max(1) as f64;
        Self {
            x,
            csc,
            stats,
            criterion,
            max_depth,
            min_samples_split: 2,
            member: vec![false; x.n_rows()],
            entries: Vec::new(),
            row_search_factor: (avg + 1.0).log2().max(1.0),
        }
    }

    /// Grow a tree over `rows`; `features` picks the candidate columns for
    /// each node.
    pub fn build(&mut self, rows: Vec<usize>, features: &mut dyn FnMut() -> Vec<usize>) -> Node {
        self.grow(rows, 0, features)
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize, features: &mut dyn FnMut() -> Vec<usize>) -> Node {
        let total = rows.iter().fold([0.0, 0.0], |acc, &r| add(acc, self.stats[r]));
        let leaf = Node::Leaf {
            value: self.criterion.leaf(total),
        };
        if depth >= self.max_depth || rows.len() < self.min_samples_split || self.criterion.is_pure(total) {
            return leaf;
        }
        let candidates = features();
        let Some((feature, threshold)) = self.best_split(&rows, total, &candidates) else {
            return leaf;
        };
        let (left, right): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&r| self.x.get(r, feature) <= threshold);
        let left = self.grow(left, depth + 1, features);
        let right = self.grow(right, depth + 1, features);
        Node::Split {
            feature,
            threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    fn gather(&mut self, rows: &[usize], j: usize) {
        self.entries.clear();
        if (self.csc.col_nnz(j) as f64) <= rows.len() as f64 * self.row_search_factor {
            for (r, v) in self.csc.col_iter(j) {
                if self.member[r] {
                    self.entries.push((v, self.stats[r]));
                }
            }
        } else {
            for &r in rows {
                let v = self.x.get(r, j);
                if v != 0.0 {
                    self.entries.push((v, self.stats[r]));
                }
            }
        }
        self.entries.sort_by(|a, b| a.0.total_cmp(&b.0));
    }

    fn best_split(&mut self, rows: &[usize], total: Stat, features: &[usize]) -> Option<(usize, f64)> {
        for &r in rows {
            self.member[r] = true;
        }
        let mut best: Option<(f64, usize, f64)> = None;
        for &j in features {
            self.gather(rows, j);
            let n_zero = rows.len() - self.entries.len();
            let nz = self.entries.iter().fold([0.0, 0.0], |acc, e| add(acc, e.1));
            let zero_stat = sub(total, nz);
            // Ordered groups: negatives, the zero block, positives.
            let split_at = self.entries.partition_point(|e| e.0 < 0.0);
            let mut groups: Vec<(f64, Stat)> = Vec::with_capacity(self.entries.len() + 1);
            groups.extend_from_slice(&self.entries[..split_at]);
            if n_zero > 0 {
                groups.push((0.0, zero_stat));
            }
            groups.extend_from_slice(&self.entries[split_at..]);

            let mut left = [0.0, 0.0];
            for k in 0..groups.len().saturating_sub(1) {
                left = add(left, groups[k].1);
                let (a, b) = (groups[k].0, groups[k + 1].0);
                if a == b {
                    continue;
                }
                let Some(gain) = self.criterion.gain(left, sub(total, left)) else {
                    continue;
                };
                if gain > 1e-12 && best.is_none_or(|(g, _, _)| gain > g) {
                    let mid = a + (b - a) / 2.0;
                    let threshold = if mid < b { mid } else { a };
                    best = Some((gain, j, threshold));
                }
            }
        }
        for &r in rows {
            self.member[r] = false;
        }
        best.map(|(_, j, t)| (j, t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gini_split_separates_classes() {
        let x = CsrMatrix::from_dense_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let csc = x.to_csc();
        let stats = vec![[1.0, 0.0], [1.0, 0.0], [1.0, 1.0], [1.0, 1.0]];
        let mut b = Builder::new(&x, &csc, stats, Gini, 5);
        let tree = b.build((0..4).collect(), &mut || vec![0]);
        match &tree {
            Node::Split { threshold, .. } => assert_eq!(*threshold, 1.5),
            _ => panic!("expected a split"),
        }
        let preds: Vec<f64> = (0..4).map(|r| tree.predict_row(&x, r)).collect();
        assert_eq!(preds, vec![0.0, 0.0, 1.0, 1.0]);
        assert_eq!(tree.depth(), 1);
    }

    #[test]
    fn zero_block_and_negative_values() {
        let x = CsrMatrix::from_dense_rows(&[vec![-2.0], vec![0.0], vec![0.0], vec![4.0]]).unwrap();
        let csc = x.to_csc();
        let stats = vec![[1.0, 1.0], [1.0, 0.0], [1.0, 0.0], [1.0, 0.0]];
        let mut b = Builder::new(&x, &csc, stats, Gini, 5);
        let tree = b.build((0..4).collect(), &mut || vec![0]);
        match &tree {
            Node::Split { threshold, .. } => assert_eq!(*threshold, -1.0),
            _ => panic!("expected a split"),
        }
    }

    #[test]
    fn newton_leaf_and_gain() {
        assert_eq!(leaf_weight(-2.0, 3.0, 1.0), 0.5);
        let g = split_gain((-2.0, 1.0), (2.0, 1.0), 1.0);
        assert!((g - 0.5 * (2.0 + 2.0 - 0.0)).abs() < 1e-12);
    }

    #[test]
    fn json_is_recursive() {
        let t = Node::Split {
            feature: 1,
            threshold: 0.5,
            left: Box::new(Node::Leaf { value: 0.1 }),
            right: Box::new(Node::Leaf { value: 0.9 }),
        };
        let s = serde_json::to_string(&t).unwrap();
        assert!(s.contains(r#""left":{"type":"leaf","value":0.1}"#));
        assert_eq!(serde_json::from_str::<Node>(&s).unwrap(), t);
    }
}
