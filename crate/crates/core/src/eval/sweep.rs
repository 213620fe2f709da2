use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{evaluate, MetricsReport};
use crate::error::{Error, Result};
use crate::exec::ExecMode;
use crate::lexicons::EmbeddingTable;
use crate::model::{train, Mdhan, ModelConfig, UserInput};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub l: usize,
    pub report: MetricsReport,
}

/// Train and evaluate with the tweet history truncated to each `L`. Values
/// are sorted and deduplicated.
pub fn tweet_count_sweep(
    ls: &[usize],
    train_set: &[UserInput],
    test_set: &[UserInput],
    embeddings: Arc<EmbeddingTable>,
    base: &ModelConfig,
    exec: ExecMode,
) -> Result<Vec<SweepRow>> {
    let mut ls = ls.to_vec();
    ls.sort_unstable();
    ls.dedup();
    if ls.first() == Some(&0) {
        return Err(Error::invalid("tweet counts must be positive"));
    }
    exec.try_map(&ls, |_, &l| {
        let mut model = Mdhan::new(ModelConfig { l_max: l, ..base.clone() }, embeddings.clone())?;
        train(&mut model, train_set, ExecMode::Sequential)?;
        let (report, _) = evaluate(&model, test_set, ExecMode::Sequential)?;
        Ok(SweepRow { l, report })
    })
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("L,accuracy,precision,recall,f1\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6}\n",
            r.l, r.report.accuracy, r.report.precision, r.report.recall, r.report.f1
        ));
    }
    out
}
