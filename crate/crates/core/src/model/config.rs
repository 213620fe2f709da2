use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::N_MAX;
use crate::error::{Error, Result};
use crate::features::ModalityMask;

/// Network and training hyper-parameters. Defaults follow the published setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub embed_dim: usize,
    /// Per GRU direction; concatenated states have length `2 * hidden`.
    pub hidden: usize,
    pub n_max: usize,
    pub l_max: usize,
    pub mlp_hidden: usize,
    pub dropout: f64,
    pub batch: usize,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Stride-1 max-pool window over word annotations before attention.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_pool_words: Option<usize>,
    pub modality_mask: ModalityMask,
    /// Include the hierarchical text encoder output `s` in the fusion.
    pub use_text: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 100,
            hidden: 100,
            n_max: N_MAX,
            l_max: 200,
            mlp_hidden: 100,
            dropout: 0.5,
            batch: 16,
            lr: 0.001,
            epochs: 10,
            seed: 0,
            max_pool_words: None,
            modality_mask: ModalityMask::ALL,
            use_text: true,
        }
    }
}

impl ModelConfig {
    /// Small dimensions for single-machine experiments on synthetic corpora.
    pub fn desk() -> Self {
        ModelConfig {
            embed_dim: 16,
            hidden: 16,
            mlp_hidden: 32,
            l_max: 50,
            ..ModelConfig::default()
        }
    }

    pub fn uses_modalities(&self) -> bool {
        self.modality_mask.any()
    }

    pub fn fusion_dim(&self) -> usize {
        let p = if self.uses_modalities() { self.mlp_hidden } else { 0 };
        let s = if self.use_text { 2 * self.hidden } else { 0 };
        p + s
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("embed_dim", self.embed_dim),
            ("hidden", self.hidden),
            ("n_max", self.n_max),
            ("l_max", self.l_max),
            ("mlp_hidden", self.mlp_hidden),
            ("batch", self.batch),
            ("epochs", self.epochs),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("{name} must be positive")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!("dropout must lie in [0,1), got {}", self.dropout)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("lr must be positive, got {}", self.lr)));
        }
        if self.max_pool_words == Some(0) {
            return Err(Error::invalid("max_pool_words must be at least 1"));
        }
        if self.fusion_dim() == 0 {
            return Err(Error::invalid("model needs the text encoder or at least one modality"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Modality;

    #[test]
    fn defaults_and_validation() {
        let c = ModelConfig::default();
        assert_eq!((c.embed_dim, c.hidden, c.n_max, c.l_max, c.mlp_hidden), (100, 100, 30, 200, 100));
        assert_eq!((c.batch, c.epochs), (16, 10));
        assert_eq!(c.fusion_dim(), 300);
        c.validate().unwrap();
        let none = ModelConfig { use_text: false, modality_mask: ModalityMask::NONE, ..c.clone() };
        assert!(none.validate().is_err());
        assert!(ModelConfig { dropout: 1.0, ..c.clone() }.validate().is_err());
        assert!(ModelConfig { l_max: 0, ..c.clone() }.validate().is_err());
        let han = ModelConfig { modality_mask: ModalityMask::NONE, ..c.clone() };
        assert_eq!(han.fusion_dim(), 200);
        let mm = ModelConfig { use_text: false, modality_mask: ModalityMask::only(Modality::Topic), ..c };
        assert_eq!(mm.fusion_dim(), 100);
    }

    #[test]
    fn hash_tracks_content() {
        let a = ModelConfig::default();
        assert_eq!(a.hash(), ModelConfig::default().hash());
        assert_ne!(a.hash(), ModelConfig { seed: 1, ..a.clone() }.hash());
        let back: ModelConfig = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
        assert_eq!(back, a);
    }
}
