//! Route classifiers and their evaluation.
//!
//! Every model maps the feature vector `(x, y, period, t_ms)` to a route id.
//! Trained models serialize to a versioned JSON document so campaigns can
//! reuse them.

pub mod forest;
pub mod metrics;
pub mod split;
pub mod svm;
pub mod tree;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::mobility::TrajectoryDataset;
use crate::{Error, Result, RouteId, NUM_ROUTES};

pub use forest::{ForestParams, RandomForest};
pub use metrics::{balanced_accuracy, ClassifierMetrics, ConfusionMatrix, METRICS_HEADER};
pub use split::split_dataset;
pub use svm::{LinearSvm, SvmParams};
pub use tree::{DecisionTree, TreeParams};

pub const NUM_FEATURES: usize = 4;

/// `[x, y, period, t_ms]`.
pub type Features = [f64; NUM_FEATURES];

const MODEL_FORMAT: &str = "udnsim-route-predictor";
const MODEL_VERSION: u32 = 1;

/// Index of the largest value; ties go to the lowest index.
pub(crate) fn argmax_lowest(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Svm,
    Dtc,
    Rfc,
    Oracle,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Svm => "svm",
            ModelKind::Dtc => "dtc",
            ModelKind::Rfc => "rfc",
            ModelKind::Oracle => "oracle",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "svm" => Ok(ModelKind::Svm),
            "dtc" => Ok(ModelKind::Dtc),
            "rfc" => Ok(ModelKind::Rfc),
            "oracle" => Ok(ModelKind::Oracle),
            other => Err(Error::InvalidArgument(format!(
                "unknown model kind `{other}` (expected svm, dtc, rfc or oracle)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DtcParams {
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub seed: u64,
}

/// Hyperparameters a model was trained with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Hyper {
    Svm(SvmParams),
    Dtc(DtcParams),
    Rfc(ForestParams),
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Svm(LinearSvm),
    Dtc(DecisionTree),
    Rfc(RandomForest),
    Oracle,
}

/// One observation of a vehicle. `true_route` is read only by the oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouteQuery {
    pub x: f64,
    pub y: f64,
    pub period: u8,
    pub t_ms: u64,
    pub true_route: RouteId,
}

impl RouteQuery {
    pub fn features(&self) -> Features {
        [self.x, self.y, self.period as f64, self.t_ms as f64]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutePredictor {
    pub hyper: Hyper,
    pub model: Model,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    predictor: RoutePredictor,
}

impl RoutePredictor {
    pub fn oracle() -> Self {
        Self {
            hyper: Hyper::Oracle,
            model: Model::Oracle,
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self.model {
            Model::Svm(_) => ModelKind::Svm,
            Model::Dtc(_) => ModelKind::Dtc,
            Model::Rfc(_) => ModelKind::Rfc,
            Model::Oracle => ModelKind::Oracle,
        }
    }

    /// Route for a feature vector. The oracle has no features to go on and
    /// answers route 0; use [`RoutePredictor::predict_route`] for it.
    pub fn predict_features(&self, f: &Features) -> RouteId {
        match &self.model {
            Model::Svm(m) => m.predict(f),
            Model::Dtc(m) => m.predict(f),
            Model::Rfc(m) => m.predict(f),
            Model::Oracle => 0,
        }
    }

    pub fn predict_route(&self, q: &RouteQuery) -> RouteId {
        match self.model {
            Model::Oracle => q.true_route,
            _ => self.predict_features(&q.features()),
        }
    }

    pub fn predict_dataset(&self, d: &TrajectoryDataset) -> Vec<RouteId> {
        d.rows
            .iter()
            .map(|s| {
                self.predict_route(&RouteQuery {
                    x: s.x,
                    y: s.y,
                    period: s.period,
                    t_ms: s.t_ms,
                    true_route: s.route,
                })
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            predictor: self.clone(),
        };
        serde_json::to_string_pretty(&file).map_err(|e| Error::format("model file", e))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::format("model file", e))?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(Error::format(
                "model file",
                format!("unsupported format {} v{}", file.format, file.version),
            ));
        }
        Ok(file.predictor)
    }
}

fn columns(d: &TrajectoryDataset) -> (Vec<Features>, Vec<RouteId>) {
    d.rows.iter().map(|s| (s.features(), s.route)).unzip()
}

pub fn train_svm(train: &TrajectoryDataset, params: &SvmParams) -> Result<RoutePredictor> {
    let (x, y) = columns(train);
    Ok(RoutePredictor {
        hyper: Hyper::Svm(*params),
        model: Model::Svm(LinearSvm::fit(&x, &y, params)?),
    })
}

pub fn train_dtc(train: &TrajectoryDataset, params: &DtcParams) -> Result<RoutePredictor> {
    let (x, y) = columns(train);
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
        max_features: None,
    };
    Ok(RoutePredictor {
        hyper: Hyper::Dtc(*params),
        model: Model::Dtc(DecisionTree::fit(&x, &y, &tree_params, params.seed)?),
    })
}

pub fn train_rfc(train: &TrajectoryDataset, params: &ForestParams) -> Result<RoutePredictor> {
    let (x, y) = columns(train);
    Ok(RoutePredictor {
        hyper: Hyper::Rfc(*params),
        model: Model::Rfc(RandomForest::fit(&x, &y, params)?),
    })
}

pub fn evaluate(model: &RoutePredictor, train: &TrajectoryDataset, test: &TrajectoryDataset) -> Result<ClassifierMetrics> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::InvalidArgument("evaluation needs non-empty train and test sets".into()));
    }
    let truth = |d: &TrajectoryDataset| d.rows.iter().map(|s| s.route).collect::<Vec<_>>();
    Ok(ClassifierMetrics::from_predictions(
        &truth(train),
        &model.predict_dataset(train),
        &truth(test),
        &model.predict_dataset(test),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodAccuracy {
    pub period: u8,
    pub dominant_route: RouteId,
    pub samples: usize,
    pub accuracy: f64,
}

/// For each period in `test`, the share of samples on that period's most
/// frequent route that the model labels correctly. Periods absent from the
/// test set are absent from the result.
pub fn per_period_accuracy(model: &RoutePredictor, test: &TrajectoryDataset) -> BTreeMap<u8, PeriodAccuracy> {
    let pred = model.predict_dataset(test);
    let mut counts: BTreeMap<u8, [usize; NUM_ROUTES]> = BTreeMap::new();
    for s in &test.rows {
        counts.entry(s.period).or_default()[s.route as usize] += 1;
    }
    counts
        .into_iter()
        .map(|(period, c)| {
            let dominant = argmax_lowest(&c.map(|v| v as f64)) as RouteId;
            let (mut hit, mut n) = (0, 0);
            for (s, &p) in test.rows.iter().zip(&pred) {
                if s.period == period && s.route == dominant {
                    n += 1;
                    hit += usize::from(p == dominant);
                }
            }
            (
                period,
                PeriodAccuracy {
                    period,
                    dominant_route: dominant,
                    samples: n,
                    accuracy: hit as f64 / n as f64,
                },
            )
        })
        .collect()
}
