//! Binary CART classification tree grown by Gini-impurity minimization over
//! axis-aligned threshold splits.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{argmax_lowest, Features, NUM_FEATURES};
use crate::{Error, Result, RouteId, NUM_ROUTES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeParams {
    /// `None` grows until leaves are pure.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Features examined per split; `None` examines all of them.
    pub max_features: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_leaf: 1,
            max_features: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum Node {
    Leaf {
        class: RouteId,
        samples: usize,
    },
    /// Rows with `features[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Nodes are stored flat; the root is `nodes[0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

impl DecisionTree {
    /// Grows a tree on rows `x` with labels `y`. `seed` drives per-split
    /// feature subsampling and is unused when all features are examined.
    pub fn fit(x: &[Features], y: &[RouteId], params: &TreeParams, seed: u64) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::Training("cannot grow a tree on an empty dataset".into()));
        }
        if params.min_samples_leaf == 0 {
            return Err(Error::config("ml.min_samples_leaf", "must be >= 1"));
        }
        if let Some(k) = params.max_features {
            if !(1..=NUM_FEATURES).contains(&k) {
                return Err(Error::config("ml.rfc_max_features", format!("must lie in 1..={NUM_FEATURES}")));
            }
        }
        let mut builder = Builder {
            x,
            y,
            params,
            rng: ChaCha8Rng::seed_from_u64(seed),
            nodes: Vec::new(),
            scratch: Vec::with_capacity(x.len()),
        };
        let mut idx: Vec<usize> = (0..x.len()).collect();
        builder.grow(&mut idx, 0);
        Ok(Self {
            nodes: builder.nodes,
        })
    }

    pub fn predict(&self, f: &Features) -> RouteId {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { class, .. } => return class,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if f[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

struct Builder<'a> {
    x: &'a [Features],
    y: &'a [RouteId],
    params: &'a TreeParams,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    scratch: Vec<usize>,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl Builder<'_> {
    fn counts(&self, idx: &[usize]) -> [usize; NUM_ROUTES] {
        let mut c = [0; NUM_ROUTES];
        for &i in idx {
            c[self.y[i] as usize] += 1;
        }
        c
    }

    fn grow(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let counts = self.counts(idx);
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf {
            class: argmax_lowest(&counts.map(|c| c as f64)) as RouteId,
            samples: idx.len(),
        });

        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let depth_reached = self.params.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_reached || idx.len() < 2 * self.params.min_samples_leaf {
            return at;
        }
        let Some(split) = self.best_split(idx, &counts) else {
            return at;
        };

        // partition in place: left block holds rows at or below the threshold
        let mut mid = 0;
        for k in 0..idx.len() {
            if self.x[idx[k]][split.feature] <= split.threshold {
                idx.swap(k, mid);
                mid += 1;
            }
        }
        let (l, r) = idx.split_at_mut(mid);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[at] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        at
    }

    /// Lowest weighted Gini impurity; ties keep the lowest feature index and
    /// then the lowest threshold. When a sampled feature subset admits no
    /// split, the remaining features are tried.
    fn best_split(&mut self, idx: &[usize], counts: &[usize; NUM_ROUTES]) -> Option<Candidate> {
        let (first, rest): (Vec<usize>, Vec<usize>) = match self.params.max_features {
            Some(k) if k < NUM_FEATURES => {
                let mut chosen = sample(&mut self.rng, NUM_FEATURES, k).into_vec();
                chosen.sort_unstable();
                let rest = (0..NUM_FEATURES).filter(|f| !chosen.contains(f)).collect();
                (chosen, rest)
            }
            _ => ((0..NUM_FEATURES).collect(), Vec::new()),
        };
        self.best_split_over(idx, counts, &first)
            .or_else(|| self.best_split_over(idx, counts, &rest))
    }

    fn best_split_over(
        &mut self,
        idx: &[usize],
        counts: &[usize; NUM_ROUTES],
        features: &[usize],
    ) -> Option<Candidate> {
        let n = idx.len();
        let min_leaf = self.params.min_samples_leaf;
        let mut best: Option<Candidate> = None;
        for &f in features {
            self.scratch.clear();
            self.scratch.extend_from_slice(idx);
            let x = self.x;
            self.scratch.sort_unstable_by(|&a, &b| x[a][f].total_cmp(&x[b][f]));

            let mut left = [0usize; NUM_ROUTES];
            for k in 0..n - 1 {
                let i = self.scratch[k];
                left[self.y[i] as usize] += 1;
                let (v, next) = (x[i][f], x[self.scratch[k + 1]][f]);
                if v == next {
                    continue;
                }
                let nl = k + 1;
                let nr = n - nl;
                if nl < min_leaf || nr < min_leaf {
                    continue;
                }
                // maximizing sum_c l_c^2 / n_l + sum_c r_c^2 / n_r minimizes
                // the weighted Gini impurity of the children
                let mut sl = 0.0;
                let mut sr = 0.0;
                for c in 0..NUM_ROUTES {
                    let l = left[c] as f64;
                    let r = (counts[c] - left[c]) as f64;
                    sl += l * l;
                    sr += r * r;
                }
                let score = sl / nl as f64 + sr / nr as f64;
                if best.as_ref().is_none_or(|b| score > b.score) {
                    let mid = v + (next - v) / 2.0;
                    let threshold = if mid < next { mid } else { v };
                    best = Some(Candidate {
                        feature: f,
                        threshold,
                        score,
                    });
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xor() -> (Vec<Features>, Vec<RouteId>) {
        let x = vec![
            [0.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [1.0, 0.0, 0.0, 0.0],
            [1.0, 1.0, 0.0, 0.0],
        ];
        (x, vec![0, 1, 1, 0])
    }

    /// Best accuracy reachable by any depth-2 tree of axis-aligned splits,
    /// found by enumerating every split at every node.
    fn brute_force_depth2_accuracy(x: &[Features], y: &[RouteId]) -> f64 {
        let mut thresholds: Vec<(usize, f64)> = Vec::new();
        for f in 0..NUM_FEATURES {
            let mut v: Vec<f64> = x.iter().map(|r| r[f]).collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            for w in v.windows(2) {
                thresholds.push((f, (w[0] + w[1]) / 2.0));
            }
        }
        let majority_hits = |rows: &[usize]| -> usize {
            let mut c = [0; NUM_ROUTES];
            rows.iter().for_each(|&i| c[y[i] as usize] += 1);
            *c.iter().max().unwrap()
        };
        let best_leafy = |rows: &[usize]| -> usize {
            let mut best = majority_hits(rows);
            for &(f, t) in &thresholds {
                let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][f] <= t);
                best = best.max(majority_hits(&l) + majority_hits(&r));
            }
            best
        };
        let all: Vec<usize> = (0..x.len()).collect();
        let mut best = best_leafy(&all);
        for &(f, t) in &thresholds {
            let (l, r): (Vec<usize>, Vec<usize>) = all.iter().partition(|&&i| x[i][f] <= t);
            best = best.max(best_leafy(&l) + best_leafy(&r));
        }
        best as f64 / x.len() as f64
    }

    #[test]
    fn xor_needs_and_fits_depth_two() {
        let (x, y) = xor();
        assert_eq!(brute_force_depth2_accuracy(&x, &y), 1.0);
        let params = TreeParams {
            max_depth: Some(2),
            ..TreeParams::default()
        };
        let tree = DecisionTree::fit(&x, &y, &params, 0).unwrap();
        for (row, &label) in x.iter().zip(&y) {
            assert_eq!(tree.predict(row), label);
        }
        assert!(tree.depth() <= 2);
    }

    #[test]
    fn depth_zero_is_majority_leaf() {
        let x = vec![[0.0; 4], [1.0, 0.0, 0.0, 0.0], [2.0, 0.0, 0.0, 0.0]];
        let y = vec![2, 2, 1];
        let params = TreeParams {
            max_depth: Some(0),
            ..TreeParams::default()
        };
        let tree = DecisionTree::fit(&x, &y, &params, 0).unwrap();
        assert_eq!(tree.nodes().len(), 1);
        assert_eq!(tree.predict(&[5.0, 5.0, 5.0, 5.0]), 2);
    }

    #[test]
    fn majority_tie_goes_to_lowest_class() {
        let x = vec![[0.0; 4], [1.0, 0.0, 0.0, 0.0]];
        let params = TreeParams {
            max_depth: Some(0),
            ..TreeParams::default()
        };
        let tree = DecisionTree::fit(&x, &[2, 1], &params, 0).unwrap();
        assert_eq!(tree.predict(&[0.0; 4]), 1);
    }

    #[test]
    fn min_samples_leaf_is_respected() {
        let x: Vec<Features> = (0..20).map(|i| [i as f64, 0.0, 0.0, 0.0]).collect();
        let y: Vec<RouteId> = (0..20).map(|i| (i % 2) as RouteId).collect();
        let params = TreeParams {
            min_samples_leaf: 4,
            ..TreeParams::default()
        };
        let tree = DecisionTree::fit(&x, &y, &params, 0).unwrap();
        for n in tree.nodes() {
            if let Node::Leaf { samples, .. } = n {
                assert!(*samples >= 4);
            }
        }
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(DecisionTree::fit(&[], &[], &TreeParams::default(), 0).is_err());
    }
}
