use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{DecisionTree, TreeParams};
use super::{argmax_lowest, Features};
use crate::{Error, Result, RouteId, NUM_ROUTES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Features drawn per split; `None` uses all of them.
    pub max_features: Option<usize>,
    /// Train each tree on a same-size resample drawn with replacement.
    pub bootstrap: bool,
    pub seed: u64,
}

/// Majority vote over bagged CART trees. Tree `i` is grown from seed
/// `seed ^ i`, so training order does not affect the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    trees: Vec<DecisionTree>,
}

impl RandomForest {
    pub fn fit(x: &[Features], y: &[RouteId], params: &ForestParams) -> Result<Self> {
        if params.n_trees == 0 {
            return Err(Error::config("ml.rfc_n_trees", "must be >= 1"));
        }
        if x.is_empty() {
            return Err(Error::Training("cannot grow a forest on an empty dataset".into()));
        }
        let tree_params = TreeParams {
            max_depth: params.max_depth,
            min_samples_leaf: params.min_samples_leaf,
            max_features: params.max_features,
        };
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|i| {
                let seed = params.seed ^ i as u64;
                if params.bootstrap {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let picks: Vec<usize> = (0..x.len()).map(|_| rng.random_range(0..x.len())).collect();
                    let bx: Vec<Features> = picks.iter().map(|&k| x[k]).collect();
                    let by: Vec<RouteId> = picks.iter().map(|&k| y[k]).collect();
                    DecisionTree::fit(&bx, &by, &tree_params, rng.random())
                } else {
                    DecisionTree::fit(x, y, &tree_params, seed)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { trees })
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    pub fn votes(&self, f: &Features) -> [usize; NUM_ROUTES] {
        let mut v = [0; NUM_ROUTES];
        for t in &self.trees {
            v[t.predict(f) as usize] += 1;
        }
        v
    }

    /// Plurality vote; ties go to the lowest route id.
    pub fn predict(&self, f: &Features) -> RouteId {
        argmax_lowest(&self.votes(f).map(|c| c as f64)) as RouteId
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (Vec<Features>, Vec<RouteId>) {
        let x: Vec<Features> = (0..60)
            .map(|i| [(i % 10) as f64, (i / 10) as f64, (i % 3) as f64, i as f64 * 0.5])
            .collect();
        let y = (0..60).map(|i| ((i * 7 + i / 9) % 3) as RouteId).collect();
        (x, y)
    }

    #[test]
    fn single_unbagged_tree_matches_plain_tree() {
        let (x, y) = toy();
        let params = ForestParams {
            n_trees: 1,
            max_depth: None,
            min_samples_leaf: 1,
            max_features: None,
            bootstrap: false,
            seed: 17,
        };
        let forest = RandomForest::fit(&x, &y, &params).unwrap();
        let tree = DecisionTree::fit(&x, &y, &TreeParams::default(), 3).unwrap();
        assert_eq!(forest.trees()[0], tree);
    }

    #[test]
    fn vote_majority_and_ties() {
        assert_eq!(argmax_lowest(&[1.0, 2.0, 0.0]), 1);
        assert_eq!(argmax_lowest(&[1.0, 1.0, 1.0]), 0);
        assert_eq!(argmax_lowest(&[0.0, 2.0, 2.0]), 1);
    }

    #[test]
    fn seeded_forest_is_reproducible() {
        let (x, y) = toy();
        let params = ForestParams {
            n_trees: 8,
            max_depth: None,
            min_samples_leaf: 1,
            max_features: Some(2),
            bootstrap: true,
            seed: 5,
        };
        assert_eq!(
            RandomForest::fit(&x, &y, &params).unwrap(),
            RandomForest::fit(&x, &y, &params).unwrap()
        );
    }

    #[test]
    fn zero_trees_is_rejected() {
        let (x, y) = toy();
        let params = ForestParams {
            n_trees: 0,
            max_depth: None,
            min_samples_leaf: 1,
            max_features: None,
            bootstrap: true,
            seed: 0,
        };
        assert!(RandomForest::fit(&x, &y, &params).is_err());
    }
}
