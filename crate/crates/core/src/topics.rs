//! Latent Dirichlet allocation fitted by collapsed Gibbs sampling.
//!
//! The sampler resamples every token's topic assignment from
//!
//! ```text
//! p(z = k | rest) ∝ (n_dk + alpha) * (n_kw + beta) / (n_k + V * beta)
//! ```
//!
//! where counts exclude the token being resampled. Topic-word distributions are
//! read off the final count state with `beta` smoothing. New documents are
//! folded in against the frozen topic-word distribution.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};

pub const DEFAULT_TOPICS: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdaConfig {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Fold-in sweeps used by [`infer_doc_topics`].
    pub infer_sweeps: usize,
}

impl LdaConfig {
    pub fn with_topics(k: usize) -> Self {
        LdaConfig {
            k,
            alpha: 50.0 / k as f64,
            beta: 0.01,
            iterations: 500,
            seed: 0,
            infer_sweeps: 50,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::invalid(format!("LDA needs at least 2 topics, got {}", self.k)));
        }
        if self.iterations == 0 || self.infer_sweeps == 0 {
            return Err(Error::invalid("LDA iterations and fold-in sweeps must be positive"));
        }
        if !(self.alpha > 0.0 && self.beta > 0.0) {
            return Err(Error::invalid("LDA alpha and beta must be positive"));
        }
        Ok(())
    }
}

impl Default for LdaConfig {
    fn default() -> Self {
        Self::with_topics(DEFAULT_TOPICS)
    }
}

/// Mutable collapsed-Gibbs state. Exposed so callers can observe the chain
/// between sweeps.
#[derive(Debug, Clone)]
pub struct GibbsSampler {
    cfg: LdaConfig,
    vocab: Vec<String>,
    docs: Vec<Vec<usize>>,
    assignments: Vec<Vec<usize>>,
    doc_topic: Vec<Vec<u32>>,
    topic_word: Vec<u32>,
    topic_totals: Vec<u64>,
    rng: Rng,
    scratch: Vec<f64>,
}

impl GibbsSampler {
    pub fn new(docs: &[Vec<String>], cfg: &LdaConfig) -> Result<Self> {
        cfg.validate()?;
        let vocab: Vec<String> = docs
            .iter()
            .flatten()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .cloned()
            .collect();
        if vocab.is_empty() {
            return Err(Error::invalid("LDA corpus has an empty vocabulary"));
        }
        let index: HashMap<&str, usize> = vocab.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
        let docs: Vec<Vec<usize>> = docs
            .iter()
            .map(|d| d.iter().map(|w| index[w.as_str()]).collect())
            .collect();
        let (k, v) = (cfg.k, vocab.len());
        let mut rng = rng::stream(cfg.seed, "lda-fit", 0);
        let mut doc_topic = vec![vec![0u32; k]; docs.len()];
        let mut topic_word = vec![0u32; k * v];
        let mut topic_totals = vec![0u64; k];
        let assignments = docs
            .iter()
            .enumerate()
            .map(|(d, doc)| {
                doc.iter()
                    .map(|&w| {
                        let z = rng.random_range(0..k);
                        doc_topic[d][z] += 1;
                        topic_word[z * v + w] += 1;
                        topic_totals[z] += 1;
                        z
                    })
                    .collect()
            })
            .collect();
        Ok(GibbsSampler {
            cfg: cfg.clone(),
            vocab,
            docs,
            assignments,
            doc_topic,
            topic_word,
            topic_totals,
            rng,
            scratch: vec![0.0; k],
        })
    }

    pub fn sweep(&mut self) {
        let (k, v) = (self.cfg.k, self.vocab.len());
        let (alpha, beta) = (self.cfg.alpha, self.cfg.beta);
        let vbeta = v as f64 * beta;
        for d in 0..self.docs.len() {
            for i in 0..self.docs[d].len() {
                let w = self.docs[d][i];
                let old = self.assignments[d][i];
                self.doc_topic[d][old] -= 1;
                self.topic_word[old * v + w] -= 1;
                self.topic_totals[old] -= 1;

                let mut total = 0.0;
                for t in 0..k {
                    let p = (f64::from(self.doc_topic[d][t]) + alpha)
                        * (f64::from(self.topic_word[t * v + w]) + beta)
                        / (self.topic_totals[t] as f64 + vbeta);
                    total += p;
                    self.scratch[t] = total;
                }
                let new = sample_cumulative(&self.scratch, total, &mut self.rng);

                self.assignments[d][i] = new;
                self.doc_topic[d][new] += 1;
                self.topic_word[new * v + w] += 1;
                self.topic_totals[new] += 1;
            }
        }
    }

    /// `Σ_k n(k, w)` for every vocabulary index.
    pub fn word_totals(&self) -> Vec<u64> {
        let v = self.vocab.len();
        let mut out = vec![0u64; v];
        for t in 0..self.cfg.k {
            for (o, &c) in out.iter_mut().zip(&self.topic_word[t * v..(t + 1) * v]) {
                *o += u64::from(c);
            }
        }
        out
    }

    /// Corpus frequency of every vocabulary index.
    pub fn word_frequencies(&self) -> Vec<u64> {
        let mut out = vec![0u64; self.vocab.len()];
        for &w in self.docs.iter().flatten() {
            out[w] += 1;
        }
        out
    }

    pub fn finish(self) -> LdaModel {
        let k = self.cfg.k;
        let alpha = self.cfg.alpha;
        let doc_topics = self
            .doc_topic
            .iter()
            .map(|row| {
                let n: u32 = row.iter().sum();
                let denom = f64::from(n) + k as f64 * alpha;
                row.iter().map(|&c| (f64::from(c) + alpha) / denom).collect()
            })
            .collect();
        LdaModel::from_counts(self.cfg, self.vocab, self.topic_word, doc_topics)
    }
}

fn sample_cumulative(cumulative: &[f64], total: f64, rng: &mut Rng) -> usize {
    let u = rng.random::<f64>() * total;
    cumulative
        .iter()
        .position(|&c| u < c)
        .unwrap_or(cumulative.len() - 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    config: LdaConfig,
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    topic_word: Vec<u32>,
    phi: Vec<f64>,
    doc_topics: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct LdaModelFile {
    format: String,
    config: LdaConfig,
    vocab: Vec<String>,
    /// Row-major K x V topic-word assignment counts.
    topic_word_counts: Vec<u32>,
    doc_topics: Vec<Vec<f64>>,
}

const LDA_FORMAT: &str = "mdhan-lda-v1";

impl LdaModel {
    fn from_counts(config: LdaConfig, vocab: Vec<String>, topic_word: Vec<u32>, doc_topics: Vec<Vec<f64>>) -> Self {
        let (k, v) = (config.k, vocab.len());
        let mut phi = vec![0.0; k * v];
        for t in 0..k {
            let row = &topic_word[t * v..(t + 1) * v];
            let n: u64 = row.iter().map(|&c| u64::from(c)).sum();
            let denom = n as f64 + v as f64 * config.beta;
            for (p, &c) in phi[t * v..(t + 1) * v].iter_mut().zip(row) {
                *p = (f64::from(c) + config.beta) / denom;
            }
        }
        let index = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        LdaModel {
            config,
            vocab,
            index,
            topic_word,
            phi,
            doc_topics,
        }
    }

    pub fn config(&self) -> &LdaConfig {
        &self.config
    }

    pub fn k(&self) -> usize {
        self.config.k
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn vocab_index(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Row `topic` of the topic-word distribution.
    pub fn phi(&self, topic: usize) -> &[f64] {
        let v = self.vocab.len();
        &self.phi[topic * v..(topic + 1) * v]
    }

    /// Topic distributions of the training documents from the final chain state.
    pub fn doc_topics(&self) -> &[Vec<f64>] {
        &self.doc_topics
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&LdaModelFile {
            format: LDA_FORMAT.into(),
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            topic_word_counts: self.topic_word.clone(),
            doc_topics: self.doc_topics.clone(),
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: LdaModelFile = serde_json::from_str(s)?;
        if f.format != LDA_FORMAT {
            return Err(Error::invalid(format!("unsupported LDA model format `{}`", f.format)));
        }
        f.config.validate()?;
        if f.topic_word_counts.len() != f.config.k * f.vocab.len() {
            return Err(Error::invalid("LDA count table does not match K x V"));
        }
        Ok(Self::from_counts(f.config, f.vocab, f.topic_word_counts, f.doc_topics))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Fit LDA on tokenized documents (one per user).
pub fn fit_lda(docs: &[Vec<String>], cfg: &LdaConfig) -> Result<LdaModel> {
    let mut s = GibbsSampler::new(docs, cfg)?;
    for _ in 0..cfg.iterations {
        s.sweep();
    }
    Ok(s.finish())
}

fn doc_fingerprint(ids: &[usize]) -> u64 {
    // FNV-1a over the token ids
    ids.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &w| {
        (h ^ w as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Topic distribution of a new document, by Gibbs fold-in against the frozen
/// topic-word distribution. Tokens outside the model vocabulary are skipped;
/// a document with no known tokens gets the uniform distribution. The result
/// depends only on the model and the document.
pub fn infer_doc_topics(model: &LdaModel, doc: &[String]) -> Vec<f64> {
    let k = model.k();
    let ids: Vec<usize> = doc.iter().filter_map(|t| model.vocab_index(t)).collect();
    if ids.is_empty() {
        return vec![1.0 / k as f64; k];
    }
    let alpha = model.config.alpha;
    let mut rng = rng::stream(model.config.seed, "lda-infer", doc_fingerprint(&ids));
    let mut counts = vec![0u32; k];
    let mut z: Vec<usize> = ids
        .iter()
        .map(|_| {
            let t = rng.random_range(0..k);
            counts[t] += 1;
            t
        })
        .collect();
    let sweeps = model.config.infer_sweeps;
    let burn_in = sweeps / 2;
    let mut acc = vec![0.0; k];
    let mut cumulative = vec![0.0; k];
    let denom = ids.len() as f64 + k as f64 * alpha;
    for sweep in 0..sweeps {
        for (i, &w) in ids.iter().enumerate() {
            counts[z[i]] -= 1;
            let mut total = 0.0;
            for t in 0..k {
                total += (f64::from(counts[t]) + alpha) * model.phi(t)[w];
                cumulative[t] = total;
            }
            let new = sample_cumulative(&cumulative, total, &mut rng);
            z[i] = new;
            counts[new] += 1;
        }
        if sweep >= burn_in {
            for (a, &c) in acc.iter_mut().zip(&counts) {
                *a += (f64::from(c) + alpha) / denom;
            }
        }
    }
    let s: f64 = acc.iter().sum();
    acc.iter().map(|a| a / s).collect()
}

/// The `n` most probable words of `topic`, ties broken lexicographically.
pub fn top_words(model: &LdaModel, topic: usize, n: usize) -> Result<Vec<(String, f64)>> {
    if topic >= model.k() {
        return Err(Error::invalid(format!("topic {topic} out of range for K = {}", model.k())));
    }
    let phi = model.phi(topic);
    let mut order: Vec<usize> = (0..phi.len()).collect();
    order.sort_by(|&a, &b| phi[b].total_cmp(&phi[a]).then_with(|| model.vocab[a].cmp(&model.vocab[b])));
    Ok(order
        .into_iter()
        .take(n)
        .map(|i| (model.vocab[i].clone(), phi[i]))
        .collect())
}
