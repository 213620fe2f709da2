//! The run configuration file: one TOML document mirroring the library
//! configs. Every field is optional; command-line flags override file values.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use mdhan::eval::AblationSpec;
use mdhan::model::ModelConfig;
use mdhan::pipeline::PipelineConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSection {
    pub variants: Vec<String>,
}

impl Default for AblationSection {
    fn default() -> Self {
        AblationSection { variants: AblationSpec::standard().configs.into_iter().map(|c| c.name).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub l_values: Vec<usize>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection { l_values: vec![1, 5, 10, 20, 50, 100, 200] }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assets: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub model: ModelConfig,
    pub pipeline: PipelineConfig,
    pub ablation: AblationSection,
    pub sweep: SweepSection,
}

/// Marks errors caused by malformed input documents.
#[derive(Debug)]
pub struct SchemaError(pub String);

impl std::fmt::Display for SchemaError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for SchemaError {}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).map_err(|e| SchemaError(format!("{}: {}", path.display(), e.message())).into())
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Write the resolved config as `config.resolved.toml` in `dir`.
    pub fn echo(&self, dir: &Path) -> anyhow::Result<()> {
        let p = dir.join("config.resolved.toml");
        std::fs::write(&p, self.to_toml()?).with_context(|| format!("writing {}", p.display()))
    }
}
