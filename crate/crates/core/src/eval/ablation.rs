use std::collections::HashSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{evaluate, MetricsReport};
use crate::error::{Error, Result};
use crate::exec::ExecMode;
use crate::features::{Modality, ModalityMask};
use crate::lexicons::EmbeddingTable;
use crate::model::{train, Mdhan, ModelConfig, UserInput};

/// One named variant: which modalities feed the MLP and whether the text
/// encoder takes part in the fusion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub name: String,
    pub use_text: bool,
    pub mask: ModalityMask,
}

impl AblationConfig {
    /// Parse a variant name: `MDHAN`, `HAN-only`, `MM-only`, `MDHAN-X` or
    /// `X+HAN` with `X` one of `S`, `E`, `T`, `D`.
    pub fn parse(name: &str) -> Result<Self> {
        let letter = |s: &str| {
            let mut cs = s.chars();
            match (cs.next().and_then(Modality::from_letter), cs.next()) {
                (Some(m), None) => Ok(m),
                _ => Err(Error::invalid(format!("unknown ablation variant `{name}`"))),
            }
        };
        let (use_text, mask) = match name {
            "MDHAN" => (true, ModalityMask::ALL),
            "HAN-only" => (true, ModalityMask::NONE),
            "MM-only" => (false, ModalityMask::ALL),
            _ => {
                if let Some(x) = name.strip_prefix("MDHAN-") {
                    (true, ModalityMask::without(letter(x)?))
                } else if let Some(x) = name.strip_suffix("+HAN") {
                    (true, ModalityMask::only(letter(x)?))
                } else {
                    return Err(Error::invalid(format!("unknown ablation variant `{name}`")));
                }
            }
        };
        Ok(AblationConfig { name: name.to_string(), use_text, mask })
    }

    pub fn apply(&self, base: &ModelConfig) -> ModelConfig {
        ModelConfig { use_text: self.use_text, modality_mask: self.mask, ..base.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationSpec {
    pub configs: Vec<AblationConfig>,
}

impl AblationSpec {
    pub fn new(configs: Vec<AblationConfig>) -> Result<Self> {
        let mut seen = HashSet::new();
        for c in &configs {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::invalid(format!("duplicate ablation name `{}`", c.name)));
            }
        }
        if configs.is_empty() {
            return Err(Error::invalid("ablation spec is empty"));
        }
        Ok(AblationSpec { configs })
    }

    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        Self::new(names.iter().map(|n| AblationConfig::parse(n.as_ref())).collect::<Result<_>>()?)
    }

    /// MDHAN, HAN-only, MM-only, MDHAN-{S,E,T,D} and {S,E,T,D}+HAN.
    pub fn standard() -> Self {
        let mut names = vec!["MDHAN".to_string(), "HAN-only".into(), "MM-only".into()];
        names.extend(Modality::ALL.iter().map(|m| format!("MDHAN-{}", m.letter())));
        names.extend(Modality::ALL.iter().map(|m| format!("{}+HAN", m.letter())));
        Self::from_names(&names).expect("standard names are valid")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub use_text: bool,
    pub modalities: String,
    pub final_train_loss: f64,
    pub report: MetricsReport,
}

/// Train and evaluate every variant on the same split from the same seed.
/// Variants run concurrently under `exec`; each run is sequential inside.
pub fn run_ablations(
    spec: &AblationSpec,
    train_set: &[UserInput],
    test_set: &[UserInput],
    embeddings: Arc<EmbeddingTable>,
    base: &ModelConfig,
    exec: ExecMode,
) -> Result<Vec<AblationRow>> {
    exec.try_map(&spec.configs, |_, c| {
        let mut model = Mdhan::new(c.apply(base), embeddings.clone())?;
        let history = train(&mut model, train_set, ExecMode::Sequential)?;
        let (report, _) = evaluate(&model, test_set, ExecMode::Sequential)?;
        Ok(AblationRow {
            name: c.name.clone(),
            use_text: c.use_text,
            modalities: c.mask.letters(),
            final_train_loss: history.epochs.last().map_or(f64::NAN, |e| e.train_loss),
            report,
        })
    })
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("name,text,modalities,accuracy,precision,recall,f1\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6},{:.6},{:.6}\n",
            r.name,
            u8::from(r.use_text),
            if r.modalities.is_empty() { "-" } else { &r.modalities },
            r.report.accuracy,
            r.report.precision,
            r.report.recall,
            r.report.f1
        ));
    }
    out
}
