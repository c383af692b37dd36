//! CART decision trees shared by the forest and boosting models.
//!
//! Samples are passed as row indices; a bootstrap sample simply repeats
//! indices. Rows go left when `x[feature] <= threshold`.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        children: Box<[Node; 2]>,
    },
    Leaf {
        leaf: Vec<f64>,
    },
}

impl Node {
    pub fn leaf_for(&self, row: &[f64]) -> &[f64] {
        let mut node = self;
        loop {
            match node {
                Node::Leaf { leaf } => return leaf,
                Node::Split {
                    feature,
                    threshold,
                    children,
                } => node = &children[usize::from(row[*feature] > *threshold)],
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { children, .. } => 1 + children[0].depth().max(children[1].depth()),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            Node::Leaf { .. } => 1,
            Node::Split { children, .. } => children[0].leaf_count() + children[1].leaf_count(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GrowOptions {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Candidate features examined per node; `None` means all.
    pub features_per_split: Option<usize>,
}

/// Additive impurity statistic over a multiset of samples. `cost` is the
/// sample-weighted impurity, so the cost of a split is the plain sum of
/// its children's costs.
pub trait SplitStat: Clone {
    fn add(&mut self, i: usize);
    fn remove(&mut self, i: usize);
    fn count(&self) -> usize;
    fn cost(&self) -> f64;
}

#[derive(Clone)]
pub struct GiniStat<'a> {
    labels: &'a [usize],
    counts: Vec<usize>,
    n: usize,
}

impl<'a> GiniStat<'a> {
    pub fn new(labels: &'a [usize], n_classes: usize) -> Self {
        Self {
            labels,
            counts: vec![0; n_classes],
            n: 0,
        }
    }
}

impl SplitStat for GiniStat<'_> {
    fn add(&mut self, i: usize) {
        self.counts[self.labels[i]] += 1;
        self.n += 1;
    }

    fn remove(&mut self, i: usize) {
        self.counts[self.labels[i]] -= 1;
        self.n -= 1;
    }

    fn count(&self) -> usize {
        self.n
    }

    /// n · Gini = n − Σ c² / n.
    fn cost(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        let n = self.n as f64;
        let sq: f64 = self.counts.iter().map(|&c| (c as f64) * (c as f64)).sum();
        n - sq / n
    }
}

#[derive(Clone)]
pub struct SquaredErrorStat<'a> {
    targets: &'a [f64],
    sum: f64,
    sum_sq: f64,
    n: usize,
}

impl<'a> SquaredErrorStat<'a> {
    pub fn new(targets: &'a [f64]) -> Self {
        Self {
            targets,
            sum: 0.0,
            sum_sq: 0.0,
            n: 0,
        }
    }
}

impl SplitStat for SquaredErrorStat<'_> {
    fn add(&mut self, i: usize) {
        let t = self.targets[i];
        self.sum += t;
        self.sum_sq += t * t;
        self.n += 1;
    }

    fn remove(&mut self, i: usize) {
        let t = self.targets[i];
        self.sum -= t;
        self.sum_sq -= t * t;
        self.n -= 1;
    }

    fn count(&self) -> usize {
        self.n
    }

    fn cost(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        (self.sum_sq - self.sum * self.sum / self.n as f64).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BestSplit {
    pub feature: usize,
    pub threshold: f64,
    pub cost: f64,
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m >= b {
        a
    } else {
        m
    }
}

/// Lowest-cost split of `samples` over `features`, honouring `min_leaf`.
/// Earlier features and lower thresholds win ties.
pub fn best_split<S: SplitStat>(
    rows: &[Vec<f64>],
    samples: &[usize],
    features: &[usize],
    empty: &S,
    min_leaf: usize,
) -> Option<BestSplit> {
    let min_leaf = min_leaf.max(1);
    let mut best: Option<BestSplit> = None;
    let mut order = samples.to_vec();
    for &f in features {
        order.sort_by(|&a, &b| rows[a][f].total_cmp(&rows[b][f]));
        let mut left = empty.clone();
        let mut right = empty.clone();
        for &i in &order {
            right.add(i);
        }
        for w in 0..order.len() - 1 {
            let i = order[w];
            left.add(i);
            right.remove(i);
            let (lo, hi) = (rows[i][f], rows[order[w + 1]][f]);
            if lo == hi || left.count() < min_leaf || right.count() < min_leaf {
                continue;
            }
            let cost = left.cost() + right.cost();
            if best.is_none_or(|b| cost < b.cost) {
                best = Some(BestSplit {
                    feature: f,
                    threshold: midpoint(lo, hi),
                    cost,
                });
            }
        }
    }
    best
}

/// Grows a tree greedily; `leaf_value` turns the samples reaching a leaf
/// into the stored leaf vector.
pub fn grow<S, R, L>(
    rows: &[Vec<f64>],
    samples: &[usize],
    empty: &S,
    opts: &GrowOptions,
    rng: &mut R,
    leaf_value: &L,
) -> Node
where
    S: SplitStat,
    R: Rng,
    L: Fn(&[usize]) -> Vec<f64>,
{
    let n_features = rows.first().map_or(0, Vec::len);
    grow_node(rows, samples, empty, opts, rng, leaf_value, n_features, 0)
}

#[allow(clippy::too_many_arguments)]
fn grow_node<S, R, L>(
    rows: &[Vec<f64>],
    samples: &[usize],
    empty: &S,
    opts: &GrowOptions,
    rng: &mut R,
    leaf_value: &L,
    n_features: usize,
    depth: usize,
) -> Node
where
    S: SplitStat,
    R: Rng,
    L: Fn(&[usize]) -> Vec<f64>,
{
    let make_leaf = || Node::Leaf {
        leaf: leaf_value(samples),
    };
    if depth >= opts.max_depth || samples.len() < 2 * opts.min_leaf.max(1) || n_features == 0 {
        return make_leaf();
    }
    let mut parent = empty.clone();
    for &i in samples {
        parent.add(i);
    }
    let parent_cost = parent.cost();
    if parent_cost <= 1e-12 {
        return make_leaf();
    }
    let features: Vec<usize> = match opts.features_per_split {
        Some(m) if m < n_features => {
            let mut f = sample(rng, n_features, m.max(1)).into_vec();
            f.sort_unstable();
            f
        }
        _ => (0..n_features).collect(),
    };
    let Some(split) = best_split(rows, samples, &features, empty, opts.min_leaf) else {
        return make_leaf();
    };
    if parent_cost - split.cost <= 1e-12 * parent_cost.max(1.0) {
        return make_leaf();
    }
    let (left, right): (Vec<usize>, Vec<usize>) = samples
        .iter()
        .partition(|&&i| rows[i][split.feature] <= split.threshold);
    let l = grow_node(rows, &left, empty, opts, rng, leaf_value, n_features, depth + 1);
    let r = grow_node(rows, &right, empty, opts, rng, leaf_value, n_features, depth + 1);
    Node::Split {
        feature: split.feature,
        threshold: split.threshold,
        children: Box::new([l, r]),
    }
}

/// Class frequencies of `samples`.
pub fn class_frequencies(labels: &[usize], n_classes: usize, samples: &[usize]) -> Vec<f64> {
    let mut counts = vec![0.0; n_classes];
    for &i in samples {
        counts[labels[i]] += 1.0;
    }
    let n = samples.len().max(1) as f64;
    counts.iter_mut().for_each(|c| *c /= n);
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gini_cost() {
        let labels = [0, 0, 1, 1];
        let mut s = GiniStat::new(&labels, 2);
        for i in 0..4 {
            s.add(i);
        }
        assert!((s.cost() - 2.0).abs() < 1e-12);
        s.remove(2);
        s.remove(3);
        assert_eq!(s.cost(), 0.0);
    }

    #[test]
    fn stump_separates_threshold_fixture() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![f64::from(i), 5.0]).collect();
        let labels: Vec<usize> = (0..10).map(|i| usize::from(i >= 6)).collect();
        let samples: Vec<usize> = (0..10).collect();
        let opts = GrowOptions {
            max_depth: 1,
            min_leaf: 1,
            features_per_split: None,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tree = grow(
            &rows,
            &samples,
            &GiniStat::new(&labels, 2),
            &opts,
            &mut rng,
            &|s: &[usize]| class_frequencies(&labels, 2, s),
        );
        match &tree {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 5.5);
            }
            Node::Leaf { .. } => panic!("expected a split"),
        }
        assert_eq!(tree.leaf_for(&[2.0, 0.0]), &[1.0, 0.0]);
        assert_eq!(tree.leaf_for(&[9.0, 0.0]), &[0.0, 1.0]);
    }

    #[test]
    fn min_leaf_respected() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![f64::from(i)]).collect();
        let labels: Vec<usize> = (0..10).map(|i| usize::from(i == 9)).collect();
        let samples: Vec<usize> = (0..10).collect();
        let opts = GrowOptions {
            max_depth: 5,
            min_leaf: 3,
            features_per_split: None,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tree = grow(
            &rows,
            &samples,
            &GiniStat::new(&labels, 2),
            &opts,
            &mut rng,
            &|s: &[usize]| vec![s.len() as f64],
        );
        fn check(n: &Node) {
            match n {
                Node::Leaf { leaf } => assert!(leaf[0] >= 3.0),
                Node::Split { children, .. } => children.iter().for_each(check),
            }
        }
        check(&tree);
    }

    #[test]
    fn node_json_shape() {
        let n = Node::Split {
            feature: 2,
            threshold: 0.5,
            children: Box::new([Node::Leaf { leaf: vec![1.0, 0.0] }, Node::Leaf { leaf: vec![0.0, 1.0] }]),
        };
        let js = serde_json::to_string(&n).unwrap();
        assert_eq!(
            js,
            r#"{"feature":2,"threshold":0.5,"children":[{"leaf":[1.0,0.0]},{"leaf":[0.0,1.0]}]}"#
        );
        let back: Node = serde_json::from_str(&js).unwrap();
        assert_eq!(back, n);
    }
}
