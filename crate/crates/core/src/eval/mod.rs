//! Final classifier M, metrics, multi-trial experiments and rank statistics.

mod stats;
mod trials;

pub use stats::{
    friedman_test, nemenyi_posthoc, rank_blocks, studentized_range_cdf, FriedmanResult, StatTestReport,
    SIGNIFICANCE_LEVEL,
};
pub use trials::{
    build_score_matrix, job_tag, read_scores, run_trials, summarize, write_ledger, write_timing, ExperimentSpec,
    MetricSummary, ScoreMatrix, ScoreRecord, TrialResult, TrialScheme, LEDGER_HEADER,
};

use ndarray::{s, Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{Label, LabeledDataset};
use crate::nn::{chain_specs, init_network, rmsprop_step, Activation, Direction, MlpNetwork, OptimizerState};
use crate::rng::{derive_seed, rng_from_seed};
use crate::{Error, Result};

/// Training schedule and hidden widths of classifier M.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelMConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub alpha: f64,
}

impl Default for ModelMConfig {
    fn default() -> Self {
        Self {
            hidden: vec![185, 200, 185],
            epochs: 100,
            batch_size: 64,
            alpha: 1e-3,
        }
    }
}

impl ModelMConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0) {
            return Err(Error::Config("model M hidden widths must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("model M batch size must be > 0".into()));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("model M alpha must be > 0, got {}", self.alpha)));
        }
        Ok(())
    }
}

/// A trained classifier and its mean cross-entropy per epoch.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub network: MlpNetwork,
    pub loss_history: Vec<f64>,
}

fn class_index(l: Label) -> usize {
    usize::from(l.is_positive())
}

/// Trains `n → hidden… → 2` softmax on ±1 labels (class 1 is `+1`) with
/// cross-entropy and RMSProp.
pub fn train_model_m(train: &LabeledDataset, cfg: &ModelMConfig, seed: u64) -> Result<TrainedModel> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Data("model M needs a non-empty training set".into()));
    }
    if !train.has_both_classes() {
        log::warn!("model M training data {:?} has a single class", train.name());
    }
    let mut widths = vec![train.n_features()];
    widths.extend(&cfg.hidden);
    widths.push(2);
    let mut net = init_network(
        &chain_specs(&widths, Activation::Relu, Activation::Softmax),
        derive_seed(seed, 1),
    )?;
    let mut opt = OptimizerState::new(&net, cfg.alpha)?;
    let mut rng = rng_from_seed(derive_seed(seed, 2));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut loss_history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let x = train.features().select(Axis(0), chunk);
            let acts = net.forward(x.view())?;
            let probs = acts.output();
            let m = chunk.len() as f64;
            let mut d = probs.clone();
            for (r, &i) in chunk.iter().enumerate() {
                let c = class_index(train.labels()[i]);
                total -= probs[[r, c]].max(f64::MIN_POSITIVE).ln();
                d[[r, c]] -= 1.0;
            }
            d.mapv_inplace(|v| v / m);
            let grads = net.backward_from_logits(&acts, &d)?;
            rmsprop_step(&mut net, &grads, &mut opt, Direction::Descend)?;
        }
        let loss = total / train.len() as f64;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("model M loss diverged at epoch {epoch}")));
        }
        loss_history.push(loss);
    }
    Ok(TrainedModel {
        network: net,
        loss_history,
    })
}

/// Predicted labels: argmax of the two outputs, ties to `−1`.
pub fn predict_labels(model: &MlpNetwork, features: &Array2<f64>) -> Result<Vec<Label>> {
    const CHUNK: usize = 2048;
    let mut out = Vec::with_capacity(features.nrows());
    for start in (0..features.nrows()).step_by(CHUNK) {
        let end = (start + CHUNK).min(features.nrows());
        let p = model.predict(features.slice(s![start..end, ..]))?;
        out.extend(p.rows().into_iter().map(|r| {
            if r[1] > r[0] {
                Label::Positive
            } else {
                Label::Negative
            }
        }));
    }
    Ok(out)
}

/// Test-set metrics. A rate whose class is absent from the test set is `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub am: Option<f64>,
}

impl Metrics {
    pub fn from_confusion(tp: usize, fn_: usize, tn: usize, fp: usize) -> Result<Self> {
        let total = tp + fn_ + tn + fp;
        if total == 0 {
            return Err(Error::Data("cannot compute metrics on an empty test set".into()));
        }
        let ratio = |a: usize, b: usize| (a + b > 0).then(|| a as f64 / (a + b) as f64);
        let tpr = ratio(tp, fn_);
        let tnr = ratio(tn, fp);
        Ok(Self {
            accuracy: (tp + tn) as f64 / total as f64,
            tpr,
            tnr,
            am: tpr.zip(tnr).map(|(a, b)| (a + b) / 2.0),
        })
    }

    pub fn from_predictions(truth: &[Label], predicted: &[Label]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::Contract("prediction count does not match labels".into()));
        }
        let (mut tp, mut fn_, mut tn, mut fp) = (0, 0, 0, 0);
        for (t, p) in truth.iter().zip(predicted) {
            match (t.is_positive(), p.is_positive()) {
                (true, true) => tp += 1,
                (true, false) => fn_ += 1,
                (false, false) => tn += 1,
                (false, true) => fp += 1,
            }
        }
        Self::from_confusion(tp, fn_, tn, fp)
    }
}

pub fn evaluate(model: &MlpNetwork, test: &LabeledDataset) -> Result<Metrics> {
    if model.input_width() != test.n_features() || model.output_width() != 2 {
        return Err(Error::Contract(format!(
            "model maps {} -> {}, test set has {} features",
            model.input_width(),
            model.output_width(),
            test.n_features()
        )));
    }
    Metrics::from_predictions(test.labels(), &predict_labels(model, test.features())?)
}
