//! Metrics, ablation runs, tweet-count sweeps and the Naive Bayes baseline.

mod ablation;
mod nb;
mod sweep;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::ExecMode;
use crate::model::{Mdhan, Prediction, UserInput};

pub use ablation::{ablation_csv, run_ablations, AblationConfig, AblationRow, AblationSpec};
pub use nb::{nb_train, nb_train_users, NbModel};
pub use sweep::{sweep_csv, tweet_count_sweep, SweepRow};

/// Binary confusion matrix with "depressed" as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionMatrix {
    pub fn new(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        ConfusionMatrix { tp, fp, fn_, tn }
    }

    /// From `(predicted_positive, actually_positive)` pairs.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let mut cm = ConfusionMatrix::default();
        for (pred, truth) in pairs {
            match (pred, truth) {
                (true, true) => cm.tp += 1,
                (true, false) => cm.fp += 1,
                (false, true) => cm.fn_ += 1,
                (false, false) => cm.tn += 1,
            }
        }
        cm
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// The matrix seen with the negative class as positive.
    pub fn flipped(&self) -> Self {
        ConfusionMatrix { tp: self.tn, fp: self.fn_, fn_: self.fp, tn: self.tp }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// F1 as the harmonic mean of `p` and `r`; zero when both are zero.
pub fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

impl ClassMetrics {
    /// Metrics of the positive class of `cm`. Precision is 0 when nothing was
    /// predicted positive; recall is 0 when the class is absent.
    pub fn positive(cm: &ConfusionMatrix) -> Self {
        let precision = ratio(cm.tp, cm.tp + cm.fp);
        let recall = ratio(cm.tp, cm.tp + cm.fn_);
        ClassMetrics { precision, recall, f1: harmonic(precision, recall) }
    }
}

/// Accuracy plus macro-averaged precision, recall and F1 over both classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub averaging: String,
    pub positive: ClassMetrics,
    pub negative: ClassMetrics,
    pub confusion: ConfusionMatrix,
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let n = cm.total();
    if n == 0 {
        return Err(Error::invalid("confusion matrix is empty"));
    }
    let pos = ClassMetrics::positive(cm);
    let neg = ClassMetrics::positive(&cm.flipped());
    Ok(MetricsReport {
        accuracy: ratio(cm.tp + cm.tn, n),
        precision: (pos.precision + neg.precision) / 2.0,
        recall: (pos.recall + neg.recall) / 2.0,
        f1: (pos.f1 + neg.f1) / 2.0,
        averaging: "macro".into(),
        positive: pos,
        negative: neg,
        confusion: *cm,
    })
}

/// Dropout-free evaluation at threshold 0.5.
pub fn evaluate(model: &Mdhan, inputs: &[UserInput], exec: ExecMode) -> Result<(MetricsReport, Vec<Prediction>)> {
    if inputs.is_empty() {
        return Err(Error::invalid("evaluation set is empty"));
    }
    let preds = model.predict_all(inputs, exec)?;
    let cm = ConfusionMatrix::from_pairs(preds.iter().zip(inputs).map(|(p, u)| (p.positive(), u.label >= 0.5)));
    Ok((metrics(&cm)?, preds))
}
