//! The hierarchical attention network with a multi-modal side branch.
//!
//! Words of each tweet pass through a bidirectional GRU and additive
//! attention to give a tweet vector; tweet vectors pass through a second
//! BiGRU and attention to give the user vector `s`. The 76-d feature vector
//! goes through a one-layer rectifier MLP to give `p`. The concatenation
//! `[p, s]` feeds a single sigmoid unit.
//!
//! Every user is processed on its own tape. Padding is expressed through
//! masked softmax, so padded words and empty tweets receive exactly zero
//! attention and never affect the prediction.

mod checkpoint;
mod config;
mod train;

use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::autodiff::{sigmoid, Gradients, ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::exec::ExecMode;
use crate::features::{FeatureVector, FEATURE_DIM};
use crate::lexicons::EmbeddingTable;
use crate::rng;

pub use checkpoint::{load_checkpoint, Checkpoint, CHECKPOINT_MAGIC};
pub use config::ModelConfig;
pub use train::{train, EpochRecord, History};

/// Parameter ids of one GRU direction. Input weights are `[in, hidden]`,
/// recurrent weights `[hidden, hidden]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GruIds {
    pub w_z: ParamId,
    pub u_z: ParamId,
    pub b_z: ParamId,
    pub w_r: ParamId,
    pub u_r: ParamId,
    pub b_r: ParamId,
    pub w_h: ParamId,
    pub u_h: ParamId,
    pub b_h: ParamId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BiGruIds {
    pub fwd: GruIds,
    pub bwd: GruIds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionIds {
    pub w: ParamId,
    pub b: ParamId,
    /// Context vector.
    pub u: ParamId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    pub word_gru: BiGruIds,
    pub word_attn: AttentionIds,
    pub tweet_gru: BiGruIds,
    pub tweet_attn: AttentionIds,
    pub mlp_w: ParamId,
    pub mlp_b: ParamId,
    pub fuse_w: ParamId,
    pub fuse_b: ParamId,
}

struct Init<'r> {
    store: ParamStore,
    rng: &'r mut rng::Rng,
}

impl Init<'_> {
    fn glorot(&mut self, name: String, fan_in: usize, fan_out: usize) -> ParamId {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| self.rng.random_range(-a..a)).collect();
        self.store.add(name, Tensor::matrix(fan_in, fan_out, data).expect("sized"))
    }

    fn zeros(&mut self, name: String, n: usize) -> ParamId {
        self.store.add(name, Tensor::vector(vec![0.0; n]))
    }

    fn context(&mut self, name: String, n: usize) -> ParamId {
        let data = (0..n).map(|_| self.rng.random_range(-0.1..0.1)).collect();
        self.store.add(name, Tensor::vector(data))
    }

    fn gru(&mut self, prefix: &str, input: usize, hidden: usize) -> GruIds {
        let mut gate = |g: &str| {
            (
                self.glorot(format!("{prefix}.w_{g}"), input, hidden),
                self.glorot(format!("{prefix}.u_{g}"), hidden, hidden),
                self.zeros(format!("{prefix}.b_{g}"), hidden),
            )
        };
        let (w_z, u_z, b_z) = gate("z");
        let (w_r, u_r, b_r) = gate("r");
        let (w_h, u_h, b_h) = gate("h");
        GruIds { w_z, u_z, b_z, w_r, u_r, b_r, w_h, u_h, b_h }
    }

    fn bigru(&mut self, prefix: &str, input: usize, hidden: usize) -> BiGruIds {
        BiGruIds {
            fwd: self.gru(&format!("{prefix}.fwd"), input, hidden),
            bwd: self.gru(&format!("{prefix}.bwd"), input, hidden),
        }
    }

    fn attention(&mut self, prefix: &str, dim: usize) -> AttentionIds {
        AttentionIds {
            w: self.glorot(format!("{prefix}.w"), dim, dim),
            b: self.zeros(format!("{prefix}.b"), dim),
            u: self.context(format!("{prefix}.u"), dim),
        }
    }
}

/// Fresh seeded parameters: Glorot-uniform matrices, zero biases and
/// `U(-0.1, 0.1)` attention context vectors.
pub fn init_params(cfg: &ModelConfig) -> Result<(ParamStore, ParamLayout)> {
    cfg.validate()?;
    let mut r = rng::stream(cfg.seed, "init", 0);
    let mut init = Init { store: ParamStore::new(), rng: &mut r };
    let h2 = 2 * cfg.hidden;
    let word_gru = init.bigru("word_gru", cfg.embed_dim, cfg.hidden);
    let word_attn = init.attention("word_attn", h2);
    let tweet_gru = init.bigru("tweet_gru", h2, cfg.hidden);
    let tweet_attn = init.attention("tweet_attn", h2);
    let mlp_w = init.glorot("mlp.w".into(), FEATURE_DIM, cfg.mlp_hidden);
    let mlp_b = init.zeros("mlp.b".into(), cfg.mlp_hidden);
    let a = (6.0 / (cfg.fusion_dim() + 1) as f64).sqrt();
    let fw = (0..cfg.fusion_dim()).map(|_| init.rng.random_range(-a..a)).collect();
    let fuse_w = init.store.add("fuse.w", Tensor::vector(fw));
    let fuse_b = init.zeros("fuse.b".into(), 1);
    let layout = ParamLayout { word_gru, word_attn, tweet_gru, tweet_attn, mlp_w, mlp_b, fuse_w, fuse_b };
    Ok((init.store, layout))
}

/// One user ready for the network: token ids per tweet (oldest first) and the
/// normalized feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserInput {
    pub user_id: String,
    pub tweets: Vec<Vec<usize>>,
    pub features: FeatureVector,
    /// 1.0 for depressed, 0.0 otherwise.
    pub label: f64,
}

impl UserInput {
    /// The last `l_max` tweets, each cut to `n_max` tokens.
    pub fn truncated(&self, n_max: usize, l_max: usize) -> Vec<&[usize]> {
        let start = self.tweets.len().saturating_sub(l_max);
        self.tweets[start..].iter().map(|t| &t[..t.len().min(n_max)]).collect()
    }
}

/// Values of one forward pass. Attention vectors are copied verbatim from the
/// tape nodes that produced the prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserEncoding {
    pub s: Vec<f64>,
    pub p: Vec<f64>,
    /// Per tweet, weights over `n_max` word slots. Slots past the tweet's
    /// length are padding and hold exactly zero. Empty tweets have no entry
    /// (an empty vector).
    pub word_attn: Vec<Vec<f64>>,
    /// One weight per (truncated) tweet; empty tweets hold exactly zero.
    pub tweet_attn: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub user_id: String,
    pub y_hat: f64,
    pub logit: f64,
    pub encoding: UserEncoding,
}

impl Prediction {
    /// Classified as depressed iff `y_hat >= 0.5`.
    pub fn positive(&self) -> bool {
        self.y_hat >= 0.5
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pass {
    Eval,
    /// Dropout active with the given seed.
    Train(u64),
}

impl Pass {
    fn train(self) -> Option<u64> {
        match self {
            Pass::Eval => None,
            Pass::Train(s) => Some(s),
        }
    }
}

struct Vars<'v> {
    v: &'v [Var],
}

impl Vars<'_> {
    fn get(&self, id: ParamId) -> Var {
        self.v[id.0]
    }
}

struct Recorded {
    logit: Var,
    s: Option<Var>,
    p: Option<Var>,
    word_attn: Vec<Option<Var>>,
    tweet_attn: Option<Var>,
}

/// The trained (or trainable) network. The embedding table is frozen and kept
/// outside the parameter store.
#[derive(Debug, Clone)]
pub struct Mdhan {
    pub config: ModelConfig,
    pub layout: ParamLayout,
    pub params: ParamStore,
    pub embeddings: Arc<EmbeddingTable>,
}

impl Mdhan {
    pub fn new(config: ModelConfig, embeddings: Arc<EmbeddingTable>) -> Result<Self> {
        if embeddings.dim() != config.embed_dim {
            return Err(Error::invalid(format!(
                "embedding dimension {} does not match embed_dim {}",
                embeddings.dim(),
                config.embed_dim
            )));
        }
        let (params, layout) = init_params(&config)?;
        Ok(Mdhan { config, layout, params, embeddings })
    }

    /// Rebuild from a checkpoint; names and shapes must match the config.
    pub fn from_checkpoint(ck: &Checkpoint, embeddings: Arc<EmbeddingTable>) -> Result<Self> {
        let mut m = Mdhan::new(ck.config.clone(), embeddings)?;
        m.params
            .copy_from(&ck.params)
            .map_err(|e| Error::Checkpoint(format!("parameters do not fit the stored config: {e}")))?;
        Ok(m)
    }

    pub fn save_checkpoint(&self, path: impl AsRef<std::path::Path>, extras: &serde_json::Value) -> Result<()> {
        checkpoint::save(path.as_ref(), self, extras)
    }

    pub fn checkpoint_bytes(&self, extras: &serde_json::Value) -> Result<Vec<u8>> {
        checkpoint::to_bytes(self, extras)
    }

    fn record<'a>(
        &'a self,
        params: &'a ParamStore,
        tape: &mut Tape<'a>,
        input: &UserInput,
        pass: Pass,
    ) -> Result<Recorded> {
        let cfg = &self.config;
        let vars = tape.params(params);
        let v = Vars { v: &vars };
        let dropout = |tape: &mut Tape<'a>, x: Var, stream: u64| match pass.train() {
            Some(seed) => tape.dropout(x, cfg.dropout, true, rng::derive_seed(seed, "dropout", stream)),
            None => Ok(x),
        };

        let mut parts = Vec::with_capacity(2);
        let mut p_var = None;
        if cfg.uses_modalities() {
            let p = self.modalities(tape, &v, &input.features)?;
            p_var = Some(p);
            parts.push(dropout(tape, p, 0)?);
        }
        let mut s_var = None;
        let mut word_attn = Vec::new();
        let mut tweet_attn = None;
        if cfg.use_text {
            let tweets = input.truncated(cfg.n_max, cfg.l_max);
            let (s, wa, ta) = self.text(tape, &v, &tweets)?;
            s_var = Some(s);
            word_attn = wa;
            tweet_attn = Some(ta);
            parts.push(dropout(tape, s, 1)?);
        }
        let fused = tape.concat(&parts)?;
        let z = tape.matmul(fused, v.get(self.layout.fuse_w))?;
        let logit = tape.add(z, v.get(self.layout.fuse_b))?;
        Ok(Recorded { logit, s: s_var, p: p_var, word_attn, tweet_attn })
    }

    fn modalities<'a>(&self, tape: &mut Tape<'a>, v: &Vars<'_>, f: &FeatureVector) -> Result<Var> {
        let masked = f.masked(&self.config.modality_mask);
        let x = tape.constant(Tensor::vector(masked.values().to_vec()));
        let h = tape.matmul(x, v.get(self.layout.mlp_w))?;
        let h = tape.add(h, v.get(self.layout.mlp_b))?;
        Ok(tape.relu(h))
    }

    /// Returns `(s, word attention per tweet, tweet attention)`.
    fn text<'a>(
        &'a self,
        tape: &mut Tape<'a>,
        v: &Vars<'_>,
        tweets: &[&[usize]],
    ) -> Result<(Var, Vec<Option<Var>>, Var)> {
        let cfg = &self.config;
        let c = Common::new(tape, cfg);
        let mut tweet_vecs = Vec::new();
        let mut word_attn = Vec::with_capacity(tweets.len());
        for ids in tweets {
            if ids.is_empty() {
                word_attn.push(None);
                continue;
            }
            let (vec, alpha) = self.words(tape, v, ids, &c)?;
            tweet_vecs.push(vec);
            word_attn.push(Some(alpha));
        }
        if tweet_vecs.is_empty() {
            return Err(Error::invalid("user has no non-empty tweets"));
        }
        let hs = bigru(tape, v, &self.layout.tweet_gru, &tweet_vecs, cfg.hidden, c.ones)?;
        let present: Vec<bool> = word_attn.iter().map(Option::is_some).collect();
        let (s, alpha) = attend(tape, v, &self.layout.tweet_attn, &hs, Some(&present), tweets.len(), &c)?;
        Ok((s, word_attn, alpha))
    }

    fn materialize(&self, tape: &Tape<'_>, rec: &Recorded, user_id: &str) -> Prediction {
        let logit = tape.scalar(rec.logit);
        let n_max = self.config.n_max;
        Prediction {
            user_id: user_id.to_string(),
            y_hat: sigmoid(logit),
            logit,
            encoding: UserEncoding {
                s: rec.s.map(|x| tape.value(x).to_vec()).unwrap_or_default(),
                p: rec.p.map(|x| tape.value(x).to_vec()).unwrap_or_default(),
                word_attn: rec
                    .word_attn
                    .iter()
                    .map(|a| a.map(|x| tape.value(x)[..n_max].to_vec()).unwrap_or_default())
                    .collect(),
                tweet_attn: rec.tweet_attn.map(|x| tape.value(x).to_vec()).unwrap_or_default(),
            },
        }
    }

    /// Dropout-free forward pass.
    pub fn predict(&self, input: &UserInput) -> Result<Prediction> {
        let mut tape = Tape::new();
        let rec = self.record(&self.params, &mut tape, input, Pass::Eval)?;
        Ok(self.materialize(&tape, &rec, &input.user_id))
    }

    pub fn predict_all(&self, inputs: &[UserInput], exec: ExecMode) -> Result<Vec<Prediction>> {
        exec.try_map(inputs, |_, u| self.predict(u))
    }

    /// Cross-entropy loss for one user under `params` (which must share this
    /// model's layout), with its gradient.
    pub fn loss_and_grad(&self, params: &ParamStore, input: &UserInput, pass: Pass) -> Result<(f64, Prediction, Gradients)> {
        let mut tape = Tape::new();
        let rec = self.record(params, &mut tape, input, pass)?;
        let loss = tape.bce_with_logits(rec.logit, input.label)?;
        let grads = tape.backward(loss)?;
        Ok((tape.scalar(loss), self.materialize(&tape, &rec, &input.user_id), grads))
    }

    /// Mean loss over `inputs`, without gradients.
    pub fn batch_loss(&self, params: &ParamStore, inputs: &[UserInput], pass: Pass) -> Result<f64> {
        let mut total = 0.0;
        for u in inputs {
            let mut tape = Tape::new();
            let rec = self.record(params, &mut tape, u, pass)?;
            let loss = tape.bce_with_logits(rec.logit, u.label)?;
            total += tape.scalar(loss);
        }
        Ok(total / inputs.len().max(1) as f64)
    }

    /// Mean loss and mean gradient over `inputs`. Per-user tapes may run in
    /// parallel; gradients are summed in input order. With `Pass::Train`, user
    /// `i` uses dropout seed `derive_seed(seed, "user", i)`.
    pub fn batch_grad(&self, params: &ParamStore, inputs: &[UserInput], pass: Pass, exec: ExecMode) -> Result<(f64, Vec<Prediction>, Gradients)> {
        let per = exec.try_map(inputs, |i, u| {
            let p = match pass {
                Pass::Eval => Pass::Eval,
                Pass::Train(s) => Pass::Train(rng::derive_seed(s, "user", i as u64)),
            };
            self.loss_and_grad(params, u, p)
        })?;
        let scale = 1.0 / inputs.len().max(1) as f64;
        let mut grads = Gradients::default();
        let mut loss = 0.0;
        let mut preds = Vec::with_capacity(per.len());
        for (l, p, g) in per {
            loss += l * scale;
            grads.add_scaled(&g, scale);
            preds.push(p);
        }
        Ok((loss, preds, grads))
    }

    /// Word-level encoding of a single tweet: `(v, alpha over real tokens)`.
    pub fn encode_tweet(&self, ids: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
        if ids.is_empty() {
            return Ok((vec![0.0; 2 * self.config.hidden], Vec::new()));
        }
        let ids = &ids[..ids.len().min(self.config.n_max)];
        let mut tape = Tape::new();
        let vars = tape.params(&self.params);
        let v = Vars { v: &vars };
        let c = Common::new(&mut tape, &self.config);
        let (vec, alpha) = self.words(&mut tape, &v, ids, &c)?;
        Ok((tape.value(vec).to_vec(), tape.value(alpha)[..ids.len()].to_vec()))
    }

    fn words<'a>(&'a self, tape: &mut Tape<'a>, v: &Vars<'_>, ids: &[usize], c: &Common) -> Result<(Var, Var)> {
        let cfg = &self.config;
        let mut xs = Vec::with_capacity(ids.len());
        for &i in ids {
            if i > self.embeddings.unk_index() {
                return Err(Error::invalid(format!("token id {i} outside the embedding table")));
            }
            xs.push(tape.constant_ref(&[cfg.embed_dim], self.embeddings.row(i))?);
        }
        let mut hs = bigru(tape, v, &self.layout.word_gru, &xs, cfg.hidden, c.ones)?;
        if let Some(k) = cfg.max_pool_words {
            hs = window_max(tape, &hs, k)?;
        }
        attend(tape, v, &self.layout.word_attn, &hs, None, cfg.n_max, c)
    }
}

/// Constants shared by every step of one tape.
struct Common {
    ones: Var,
    zero_row: Var,
    zero_score: Var,
}

impl Common {
    fn new(tape: &mut Tape<'_>, cfg: &ModelConfig) -> Self {
        Common {
            ones: tape.constant(Tensor::vector(vec![1.0; cfg.hidden])),
            zero_row: tape.constant(Tensor::vector(vec![0.0; 2 * cfg.hidden])),
            zero_score: tape.constant(Tensor::scalar(0.0)),
        }
    }
}

/// One GRU step: `h = (1 - z) * h_prev + z * tanh(W_h x + U_h (r * h_prev) + b_h)`.
pub fn gru_cell(tape: &mut Tape<'_>, vars: &[Var], ids: &GruIds, x: Var, h_prev: Var, ones: Var) -> Result<Var> {
    let v = Vars { v: vars };
    gru_step(tape, &v, ids, x, h_prev, ones)
}

fn gate(tape: &mut Tape<'_>, x: Var, h: Var, w: Var, u: Var, b: Var) -> Result<Var> {
    let a = tape.matmul(x, w)?;
    let c = tape.matmul(h, u)?;
    let s = tape.add(a, c)?;
    tape.add(s, b)
}

fn gru_step(tape: &mut Tape<'_>, v: &Vars<'_>, ids: &GruIds, x: Var, h: Var, ones: Var) -> Result<Var> {
    let z = gate(tape, x, h, v.get(ids.w_z), v.get(ids.u_z), v.get(ids.b_z))?;
    let z = tape.sigmoid(z);
    let r = gate(tape, x, h, v.get(ids.w_r), v.get(ids.u_r), v.get(ids.b_r))?;
    let r = tape.sigmoid(r);
    let rh = tape.mul(r, h)?;
    let cand = gate(tape, x, rh, v.get(ids.w_h), v.get(ids.u_h), v.get(ids.b_h))?;
    let cand = tape.tanh(cand);
    let keep = tape.sub(ones, z)?;
    let old = tape.mul(keep, h)?;
    let new = tape.mul(z, cand)?;
    tape.add(old, new)
}

fn bigru(tape: &mut Tape<'_>, v: &Vars<'_>, ids: &BiGruIds, xs: &[Var], hidden: usize, ones: Var) -> Result<Vec<Var>> {
    let h0 = tape.constant(Tensor::vector(vec![0.0; hidden]));
    let mut fwd = Vec::with_capacity(xs.len());
    let mut h = h0;
    for &x in xs {
        h = gru_step(tape, v, &ids.fwd, x, h, ones)?;
        fwd.push(h);
    }
    let mut bwd = vec![h0; xs.len()];
    let mut h = h0;
    for (j, &x) in xs.iter().enumerate().rev() {
        h = gru_step(tape, v, &ids.bwd, x, h, ones)?;
        bwd[j] = h;
    }
    fwd.iter().zip(&bwd).map(|(&f, &b)| tape.concat(&[f, b])).collect()
}

/// Stride-1 window max; the output keeps the input length.
fn window_max(tape: &mut Tape<'_>, hs: &[Var], k: usize) -> Result<Vec<Var>> {
    (0..hs.len())
        .map(|j| {
            let mut m = hs[j];
            for &h in &hs[j + 1..(j + k).min(hs.len())] {
                m = tape.maximum(m, h)?;
            }
            Ok(m)
        })
        .collect()
}

/// Additive attention over `hs`, padded to `slots` positions. With `present`,
/// `hs` fills the slots flagged true in order; otherwise it fills the leading
/// slots. Returns the weighted sum and the attention node.
fn attend(
    tape: &mut Tape<'_>,
    v: &Vars<'_>,
    ids: &AttentionIds,
    hs: &[Var],
    present: Option<&[bool]>,
    slots: usize,
    c: &Common,
) -> Result<(Var, Var)> {
    let mask: Vec<bool> = match present {
        Some(p) => p.to_vec(),
        None => (0..slots).map(|j| j < hs.len()).collect(),
    };
    let mut scores = Vec::with_capacity(slots);
    let mut rows = Vec::with_capacity(slots);
    let mut it = hs.iter();
    for &real in &mask {
        if real {
            let &h = it.next().ok_or_else(|| Error::Invariant("attention mask longer than inputs".into()))?;
            let u = tape.matmul(h, v.get(ids.w))?;
            let u = tape.add(u, v.get(ids.b))?;
            let u = tape.tanh(u);
            scores.push(tape.matmul(u, v.get(ids.u))?);
            rows.push(h);
        } else {
            scores.push(c.zero_score);
            rows.push(c.zero_row);
        }
    }
    let scores = tape.concat(&scores)?;
    let alpha = tape.masked_softmax(scores, &mask)?;
    let stacked = tape.stack(&rows)?;
    Ok((tape.matmul(alpha, stacked)?, alpha))
}
