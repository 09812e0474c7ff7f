//! CART classification trees grown to purity on Gini impurity.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A labelled feature vector.
pub type Row = (Vec<f64>, usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TreeNode {
    /// `x` goes left iff `x[feature] <= threshold`.
    Internal {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        class_id: usize,
    },
}

impl TreeNode {
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { class_id } => return *class_id,
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }
}

fn gini(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

/// Tree induction over a (possibly repeated) multiset of row indices.
pub(crate) struct Grower<'a, R: ?Sized> {
    rows: &'a [Row],
    /// Sorted distinct class ids; counts are indexed by position here.
    classes: Vec<usize>,
    class_pos: Vec<usize>,
    dim: usize,
    mtry: usize,
    min_leaf: usize,
    rng: &'a mut R,
}

struct Split {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

impl<'a, R: Rng + ?Sized> Grower<'a, R> {
    pub(crate) fn new(rows: &'a [Row], mtry: usize, min_leaf: usize, rng: &'a mut R) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::InvalidInput("cannot grow a tree on no rows".into()))?;
        let dim = first.0.len();
        if rows.iter().any(|r| r.0.len() != dim) {
            return Err(Error::InvalidInput("rows differ in dimension".into()));
        }
        if mtry == 0 || mtry > dim {
            return Err(Error::InvalidInput(format!(
                "mtry must be in 1..={dim}, got {mtry}"
            )));
        }
        if min_leaf == 0 {
            return Err(Error::InvalidInput("min_leaf must be positive".into()));
        }
        let mut classes: Vec<usize> = rows.iter().map(|r| r.1).collect();
        classes.sort_unstable();
        classes.dedup();
        let class_pos = rows
            .iter()
            .map(|r| classes.binary_search(&r.1).expect("class collected"))
            .collect();
        Ok(Self {
            rows,
            classes,
            class_pos,
            dim,
            mtry,
            min_leaf,
            rng,
        })
    }

    fn counts(&self, idx: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.classes.len()];
        for &i in idx {
            c[self.class_pos[i]] += 1;
        }
        c
    }

    /// Majority class; ties go to the lowest class id.
    fn majority(&self, counts: &[usize]) -> usize {
        let mut best = 0;
        for (pos, &c) in counts.iter().enumerate() {
            if c > counts[best] {
                best = pos;
            }
        }
        self.classes[best]
    }

    pub(crate) fn grow(&mut self, idx: &mut [usize]) -> TreeNode {
        let counts = self.counts(idx);
        let n = idx.len();
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || n < 2 * self.min_leaf {
            return TreeNode::Leaf {
                class_id: self.majority(&counts),
            };
        }
        let parent = gini(&counts, n);
        match self.best_split(idx) {
            Some(split) if split.impurity <= parent => {
                let (left, right) = partition(self.rows, idx, split.feature, split.threshold);
                let left = self.grow(left);
                let right = self.grow(right);
                TreeNode::Internal {
                    feature: split.feature,
                    threshold: split.threshold,
                    left: Box::new(left),
                    right: Box::new(right),
                }
            }
            _ => TreeNode::Leaf {
                class_id: self.majority(&counts),
            },
        }
    }

    /// Examines a random subset of `mtry` features; if none of them admits a
    /// valid threshold, keeps drawing features until one does or all are
    /// exhausted.
    fn best_split(&mut self, idx: &mut [usize]) -> Option<Split> {
        let mut features: Vec<usize> = (0..self.dim).collect();
        let mut best: Option<Split> = None;
        for k in 0..self.dim {
            let j = self.rng.random_range(k..self.dim);
            features.swap(k, j);
            if k >= self.mtry && best.is_some() {
                break;
            }
            if let Some(s) = self.best_threshold(idx, features[k]) {
                if best.as_ref().is_none_or(|b| s.impurity < b.impurity) {
                    best = Some(s);
                }
            }
        }
        best
    }

    fn best_threshold(&self, idx: &mut [usize], feature: usize) -> Option<Split> {
        let rows = self.rows;
        idx.sort_by(|&a, &b| rows[a].0[feature].total_cmp(&rows[b].0[feature]));
        let n = idx.len();
        let mut right = self.counts(idx);
        let mut left = vec![0; right.len()];
        let mut best: Option<Split> = None;
        for p in 1..n {
            let moved = self.class_pos[idx[p - 1]];
            left[moved] += 1;
            right[moved] -= 1;
            let lo = rows[idx[p - 1]].0[feature];
            let hi = rows[idx[p]].0[feature];
            if lo == hi || p < self.min_leaf || n - p < self.min_leaf {
                continue;
            }
            let impurity = (p as f64 * gini(&left, p) + (n - p) as f64 * gini(&right, n - p)) / n as f64;
            if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                let mut threshold = lo + (hi - lo) / 2.0;
                if threshold >= hi {
                    threshold = lo;
                }
                best = Some(Split {
                    feature,
                    threshold,
                    impurity,
                });
            }
        }
        best
    }
}

fn partition<'i>(rows: &[Row], idx: &'i mut [usize], feature: usize, threshold: f64) -> (&'i mut [usize], &'i mut [usize]) {
    let mut split = 0;
    for k in 0..idx.len() {
        if rows[idx[k]].0[feature] <= threshold {
            idx.swap(k, split);
            split += 1;
        }
    }
    idx.split_at_mut(split)
}

/// Grows an unpruned tree on all `rows`: Gini splits over midpoints of
/// consecutive distinct values, `mtry` random candidate features per node,
/// leaves at purity or when fewer than `2·min_leaf` rows remain.
pub fn cart_grow<R: Rng + ?Sized>(rows: &[Row], mtry: usize, rng: &mut R, min_leaf: usize) -> Result<TreeNode> {
    let mut grower = Grower::new(rows, mtry, min_leaf, rng)?;
    let mut idx: Vec<usize> = (0..rows.len()).collect();
    Ok(grower.grow(&mut idx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn pure_rows_make_a_leaf() {
        let rows = vec![(vec![0.0, 1.0], 3), (vec![5.0, 2.0], 3)];
        let t = cart_grow(&rows, 2, &mut rng::stream(0, 0), 1).unwrap();
        assert_eq!(t, TreeNode::Leaf { class_id: 3 });
    }

    #[test]
    fn single_midpoint_split() {
        let rows = vec![(vec![0.0], 0), (vec![1.0], 1)];
        let t = cart_grow(&rows, 1, &mut rng::stream(0, 0), 1).unwrap();
        match &t {
            TreeNode::Internal { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 0.5);
            }
            _ => panic!("expected a split"),
        }
        assert_eq!(t.predict(&[0.2]), 0);
        assert_eq!(t.predict(&[0.9]), 1);
    }

    #[test]
    fn xor_reaches_full_training_accuracy() {
        let rows = vec![
            (vec![0.0, 0.0], 0),
            (vec![1.0, 1.0], 0),
            (vec![0.0, 1.0], 1),
            (vec![1.0, 0.0], 1),
        ];
        for seed in 0..10 {
            let t = cart_grow(&rows, 1, &mut rng::stream(seed, 0), 1).unwrap();
            assert!(t.depth() >= 2);
            for (x, y) in &rows {
                assert_eq!(t.predict(x), *y);
            }
        }
    }

    #[test]
    fn majority_ties_go_to_lowest_class() {
        // identical features, two classes: no valid split
        let rows = vec![(vec![1.0], 4), (vec![1.0], 2)];
        let t = cart_grow(&rows, 1, &mut rng::stream(0, 0), 1).unwrap();
        assert_eq!(t, TreeNode::Leaf { class_id: 2 });
    }

    #[test]
    fn min_leaf_stops_growth() {
        let rows = vec![(vec![0.0], 0), (vec![1.0], 1), (vec![2.0], 0)];
        let t = cart_grow(&rows, 1, &mut rng::stream(0, 0), 2).unwrap();
        assert_eq!(t.leaf_count(), 1);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(cart_grow(&[], 1, &mut rng::stream(0, 0), 1).is_err());
        let rows = vec![(vec![0.0], 0)];
        assert!(cart_grow(&rows, 2, &mut rng::stream(0, 0), 1).is_err());
    }
}
