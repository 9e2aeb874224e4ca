//! One-vs-rest linear SVM trained by stochastic subgradient descent on the
//! L2-regularized hinge loss.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{argmax_lowest, Features, NUM_FEATURES};
use crate::{Error, Result, RouteId, NUM_ROUTES};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub epochs: usize,
    pub learning_rate: f64,
    pub regularization: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    mean: [f64; NUM_FEATURES],
    scale: [f64; NUM_FEATURES],
    weights: [[f64; NUM_FEATURES]; NUM_ROUTES],
    bias: [f64; NUM_ROUTES],
}

impl LinearSvm {
    pub fn fit(x: &[Features], y: &[RouteId], params: &SvmParams) -> Result<Self> {
        let mut present = [false; NUM_ROUTES];
        y.iter().for_each(|&c| present[c as usize] = true);
        if let Some(missing) = present.iter().position(|p| !p) {
            return Err(Error::Training(format!(
                "route {missing} has no training samples; every route needs at least one"
            )));
        }
        if params.epochs == 0 || !(params.learning_rate > 0.0) || !(params.regularization >= 0.0) {
            return Err(Error::config(
                "ml.svm_*",
                "epochs and learning rate must be > 0, regularization >= 0",
            ));
        }

        let n = x.len() as f64;
        let mut mean = [0.0; NUM_FEATURES];
        let mut scale = [0.0; NUM_FEATURES];
        for row in x {
            for f in 0..NUM_FEATURES {
                mean[f] += row[f] / n;
            }
        }
        for row in x {
            for f in 0..NUM_FEATURES {
                scale[f] += (row[f] - mean[f]).powi(2) / n;
            }
        }
        for s in &mut scale {
            *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
        }

        let z: Vec<Features> = x
            .iter()
            .map(|row| std::array::from_fn(|f| (row[f] - mean[f]) / scale[f]))
            .collect();

        let mut model = Self {
            mean,
            scale,
            weights: [[0.0; NUM_FEATURES]; NUM_ROUTES],
            bias: [0.0; NUM_ROUTES],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut order: Vec<usize> = (0..z.len()).collect();
        let (eta0, lambda) = (params.learning_rate, params.regularization);
        let mut t = 0.0;
        for _ in 0..params.epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                let eta = eta0 / (1.0 + eta0 * lambda * t);
                t += 1.0;
                for c in 0..NUM_ROUTES {
                    let target = if y[i] as usize == c { 1.0 } else { -1.0 };
                    let w = &mut model.weights[c];
                    let margin = target * (dot(w, &z[i]) + model.bias[c]);
                    let shrink = 1.0 - eta * lambda;
                    for wf in w.iter_mut() {
                        *wf *= shrink;
                    }
                    if margin < 1.0 {
                        for f in 0..NUM_FEATURES {
                            w[f] += eta * target * z[i][f];
                        }
                        model.bias[c] += eta * target;
                    }
                }
            }
        }
        Ok(model)
    }

    pub fn scores(&self, f: &Features) -> [f64; NUM_ROUTES] {
        let z: Features = std::array::from_fn(|k| (f[k] - self.mean[k]) / self.scale[k]);
        std::array::from_fn(|c| dot(&self.weights[c], &z) + self.bias[c])
    }

    pub fn predict(&self, f: &Features) -> RouteId {
        argmax_lowest(&self.scores(f)) as RouteId
    }
}

fn dot(a: &[f64; NUM_FEATURES], b: &[f64; NUM_FEATURES]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}
