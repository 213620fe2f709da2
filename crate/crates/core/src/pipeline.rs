//! From raw corpus to network inputs: filter, split, fit the topic model and
//! normalization on the training users, assemble features and token ids.

use serde::{Deserialize, Serialize};

use crate::corpus::{
    filter_users, preprocess_tweet_with_limit, split, Corpus, SplitSpec, UserRecord, DEFAULT_MAX_FOLLOWERS,
    DEFAULT_MIN_POSTS,
};
use crate::error::{Error, Result};
use crate::exec::ExecMode;
use crate::features::{apply_norm, assemble, fit_norm, user_document, FeatureContext, FeatureVector, NormStats};
use crate::lexicons::{expand_symptom_lexicon, EmbeddingTable, Lexicons, SymptomLexicon, DEFAULT_EXPANSION_K, DEFAULT_EXPANSION_TAU};
use crate::model::UserInput;
use crate::topics::{fit_lda, LdaConfig, LdaModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub min_posts: usize,
    pub max_followers: u64,
    pub split: SplitSpec,
    pub lda: LdaConfig,
    pub expansion_k: usize,
    pub expansion_tau: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            min_posts: DEFAULT_MIN_POSTS,
            max_followers: DEFAULT_MAX_FOLLOWERS,
            split: SplitSpec::default(),
            lda: LdaConfig::default(),
            expansion_k: DEFAULT_EXPANSION_K,
            expansion_tau: DEFAULT_EXPANSION_TAU,
        }
    }
}

/// Everything needed to turn new users into inputs for a trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub config: PipelineConfig,
    pub lda: LdaModel,
    pub norm: NormStats,
}

#[derive(Serialize, Deserialize)]
struct ArtifactsJson {
    config: PipelineConfig,
    lda: serde_json::Value,
    norm: NormStats,
}

impl Artifacts {
    pub fn to_json(&self) -> Result<serde_json::Value> {
        let lda = serde_json::from_str(&self.lda.to_json()?)?;
        Ok(serde_json::to_value(ArtifactsJson { config: self.config.clone(), lda, norm: self.norm.clone() })?)
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let a: ArtifactsJson = serde_json::from_value(v.clone())?;
        Ok(Artifacts { config: a.config, lda: LdaModel::from_json(&a.lda.to_string())?, norm: a.norm })
    }
}

/// A split corpus with features and inputs for both halves.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train_users: Corpus,
    pub test_users: Corpus,
    pub train: Vec<UserInput>,
    pub test: Vec<UserInput>,
    /// Raw (pre-normalization) feature vectors, aligned with the users.
    pub train_raw: Vec<FeatureVector>,
    pub test_raw: Vec<FeatureVector>,
    pub artifacts: Artifacts,
    pub symptoms: SymptomLexicon,
    pub warnings: Vec<String>,
}

/// Token ids per tweet; out-of-vocabulary tokens map to the UNK row.
pub fn token_ids(user: &UserRecord, lex: &Lexicons, emb: &EmbeddingTable, n_max: usize) -> Vec<Vec<usize>> {
    user.tweets
        .iter()
        .map(|t| {
            preprocess_tweet_with_limit(&t.text, &lex.stopwords, n_max)
                .tokens
                .iter()
                .map(|w| emb.index_of(w))
                .collect()
        })
        .collect()
}

fn has_text(user: &UserRecord, lex: &Lexicons) -> bool {
    user.tweets.iter().any(|t| !preprocess_tweet_with_limit(&t.text, &lex.stopwords, 1).is_empty())
}

/// Features and inputs for `users` under fitted artifacts.
pub fn encode_users(
    users: &[UserRecord],
    lex: &Lexicons,
    symptoms: &SymptomLexicon,
    emb: &EmbeddingTable,
    artifacts: &Artifacts,
    n_max: usize,
    exec: ExecMode,
) -> Result<(Vec<FeatureVector>, Vec<UserInput>)> {
    let ctx = FeatureContext { lexicons: lex, symptoms, lda: &artifacts.lda };
    let rows = exec.try_map(users, |_, u| {
        let raw = assemble(u, &ctx)?;
        let input = UserInput {
            user_id: u.user_id.clone(),
            tweets: token_ids(u, lex, emb, n_max),
            features: apply_norm(&raw, &artifacts.norm),
            label: u.label.as_f64(),
        };
        Ok::<_, Error>((raw, input))
    })?;
    Ok(rows.into_iter().unzip())
}

pub fn expanded_symptoms(lex: &Lexicons, emb: &EmbeddingTable, cfg: &PipelineConfig) -> Result<SymptomLexicon> {
    expand_symptom_lexicon(&lex.symptoms, emb, cfg.expansion_k, cfg.expansion_tau)
}

/// Filter, drop users without usable text, split, then fit the topic model
/// and normalization on the training users only.
pub fn prepare(
    corpus: &Corpus,
    lex: &Lexicons,
    emb: &EmbeddingTable,
    cfg: &PipelineConfig,
    n_max: usize,
    exec: ExecMode,
) -> Result<Prepared> {
    let filtered = filter_users(corpus, cfg.min_posts, cfg.max_followers)?;
    let mut warnings = filtered.warnings.clone();
    let (kept, dropped): (Vec<_>, Vec<_>) = filtered.users.into_iter().partition(|u| has_text(u, lex));
    for u in &dropped {
        warnings.push(format!("user `{}` has no tweets left after preprocessing and was dropped", u.user_id));
    }
    let usable = Corpus::new(corpus.name.clone(), kept)?;
    let (train_users, test_users) = split(&usable, &cfg.split)?;

    let docs: Vec<Vec<String>> = train_users.users.iter().map(|u| user_document(u, &lex.stopwords)).collect();
    let lda = fit_lda(&docs, &cfg.lda)?;
    let symptoms = expanded_symptoms(lex, emb, cfg)?;

    let ctx = FeatureContext { lexicons: lex, symptoms: &symptoms, lda: &lda };
    let train_raw = exec.try_map(&train_users.users, |_, u| assemble(u, &ctx))?;
    let norm = fit_norm(&train_raw)?;
    let artifacts = Artifacts { config: cfg.clone(), lda, norm };
    let (train_raw, train) = encode_users(&train_users.users, lex, &symptoms, emb, &artifacts, n_max, exec)?;
    let (test_raw, test) = encode_users(&test_users.users, lex, &symptoms, emb, &artifacts, n_max, exec)?;
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(Prepared { train_users, test_users, train, test, train_raw, test_raw, artifacts, symptoms, warnings })
}

/// Re-derive the split of `corpus` recorded in `artifacts` and encode both
/// halves without refitting anything.
pub fn reencode(
    corpus: &Corpus,
    lex: &Lexicons,
    emb: &EmbeddingTable,
    artifacts: &Artifacts,
    n_max: usize,
    exec: ExecMode,
) -> Result<(Vec<UserInput>, Vec<UserInput>)> {
    let cfg = &artifacts.config;
    let filtered = filter_users(corpus, cfg.min_posts, cfg.max_followers)?;
    let kept = filtered.users.into_iter().filter(|u| has_text(u, lex)).collect();
    let usable = Corpus::new(corpus.name.clone(), kept)?;
    let (train_users, test_users) = split(&usable, &cfg.split)?;
    let symptoms = expanded_symptoms(lex, emb, cfg)?;
    let (_, train) = encode_users(&train_users.users, lex, &symptoms, emb, artifacts, n_max, exec)?;
    let (_, test) = encode_users(&test_users.users, lex, &symptoms, emb, artifacts, n_max, exec)?;
    Ok((train, test))
}

/// Inputs for `n_users` synthetic users with embeddings of dimension `dim`.
/// The topic model (a short chain) and normalization are fit on the users
/// themselves; there is no split. Meant for gradient checks and benchmarks.
pub fn synthetic_inputs(n_users: usize, signal: f64, seed: u64, dim: usize, n_max: usize) -> Result<(Vec<UserInput>, EmbeddingTable)> {
    let corpus = crate::corpus::synth_corpus(n_users, signal, seed)?;
    let emb = crate::corpus::synth_embeddings(dim, seed)?;
    let lex = Lexicons::bundled();
    let docs: Vec<Vec<String>> = corpus.users.iter().map(|u| user_document(u, &lex.stopwords)).collect();
    let lda = fit_lda(&docs, &LdaConfig { iterations: 20, infer_sweeps: 10, seed, ..LdaConfig::default() })?;
    let symptoms = lex.symptoms.clone();
    let ctx = FeatureContext { lexicons: &lex, symptoms: &symptoms, lda: &lda };
    let raw = corpus.users.iter().map(|u| assemble(u, &ctx)).collect::<Result<Vec<_>>>()?;
    let norm = fit_norm(&raw)?;
    let artifacts = Artifacts { config: PipelineConfig::default(), lda, norm };
    let (_, inputs) = encode_users(&corpus.users, &lex, &symptoms, &emb, &artifacts, n_max, ExecMode::Sequential)?;
    Ok((inputs, emb))
}
