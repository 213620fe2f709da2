//! The 76-dimensional multi-modal user vector.
//!
//! | slice   | offset | len | contents |
//! |---------|--------|-----|----------|
//! | Social  | 0      | 33  | followers, friends, favourites, listed, statuses, tweet count, total characters, retweets, mentions, then 24 UTC posting-hour counts |
//! | Emotion | 33     | 8   | positive / neutral / negative emoji counts, valence / arousal / dominance sums, first-person singular and plural counts |
//! | Topic   | 41     | 25  | LDA topic distribution of the user's concatenated tweets |
//! | Domain  | 66     | 10  | mentions of the nine symptom groups, antidepressant mentions |

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use chrono::Timelike;
use serde::{Deserialize, Serialize};

use crate::corpus::{count_mentions, normalize_tokens, preprocess_tweet, Stopwords, UserRecord};
use crate::error::{Error, Result};
use crate::exec::ExecMode;
use crate::lexicons::{
    AntidepressantLexicon, EmojiLexicon, Lexicons, SymptomLexicon, VadLexicon, FIRST_PERSON_PLURAL,
    FIRST_PERSON_SINGULAR, SYMPTOM_CATEGORIES,
};
use crate::topics::{infer_doc_topics, LdaModel};

pub const SOCIAL_DIM: usize = 33;
pub const EMOTION_DIM: usize = 8;
pub const TOPIC_DIM: usize = 25;
pub const DOMAIN_DIM: usize = 10;
pub const FEATURE_DIM: usize = SOCIAL_DIM + EMOTION_DIM + TOPIC_DIM + DOMAIN_DIM;

/// Offset of the 24 posting-hour counts inside the social slice.
pub const HOUR_OFFSET: usize = 9;

const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modality {
    Social,
    Emotion,
    Topic,
    Domain,
}

impl Modality {
    pub const ALL: [Modality; 4] = [Modality::Social, Modality::Emotion, Modality::Topic, Modality::Domain];

    pub fn letter(self) -> char {
        match self {
            Modality::Social => 'S',
            Modality::Emotion => 'E',
            Modality::Topic => 'T',
            Modality::Domain => 'D',
        }
    }

    pub fn from_letter(c: char) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.letter() == c.to_ascii_uppercase())
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModalitySlice {
    pub modality: Modality,
    pub offset: usize,
    pub len: usize,
}

impl ModalitySlice {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModalityLayout {
    slices: [ModalitySlice; 4],
}

pub const LAYOUT: ModalityLayout = ModalityLayout {
    slices: [
        ModalitySlice { modality: Modality::Social, offset: 0, len: SOCIAL_DIM },
        ModalitySlice { modality: Modality::Emotion, offset: SOCIAL_DIM, len: EMOTION_DIM },
        ModalitySlice { modality: Modality::Topic, offset: SOCIAL_DIM + EMOTION_DIM, len: TOPIC_DIM },
        ModalitySlice { modality: Modality::Domain, offset: SOCIAL_DIM + EMOTION_DIM + TOPIC_DIM, len: DOMAIN_DIM },
    ],
};

impl ModalityLayout {
    pub fn slice(&self, m: Modality) -> ModalitySlice {
        self.slices[m.index()]
    }

    pub fn slices(&self) -> &[ModalitySlice; 4] {
        &self.slices
    }

    pub fn total(&self) -> usize {
        self.slices.iter().map(|s| s.len).sum()
    }

    /// Column names, one per dimension.
    pub fn names(&self) -> Vec<String> {
        let mut out: Vec<String> = [
            "followers", "friends", "favourites", "listed", "statuses", "tweet_count", "total_chars",
            "retweets", "mentions",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        out.extend((0..24).map(|h| format!("hour_{h:02}")));
        out.extend(
            ["emoji_pos", "emoji_neu", "emoji_neg", "valence", "arousal", "dominance", "fp_singular", "fp_plural"]
                .iter()
                .map(|s| s.to_string()),
        );
        out.extend((0..TOPIC_DIM).map(|t| format!("topic_{t:02}")));
        out.extend(SYMPTOM_CATEGORIES.iter().map(|c| format!("symptom_{c}")));
        out.push("antidepressants".into());
        out
    }
}

/// Which modality slices are fed to the MLP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModalityMask {
    pub social: bool,
    pub emotion: bool,
    pub topic: bool,
    pub domain: bool,
}

impl ModalityMask {
    pub const ALL: ModalityMask = ModalityMask { social: true, emotion: true, topic: true, domain: true };
    pub const NONE: ModalityMask = ModalityMask { social: false, emotion: false, topic: false, domain: false };

    pub fn only(m: Modality) -> Self {
        Self::NONE.with(m, true)
    }

    pub fn without(m: Modality) -> Self {
        Self::ALL.with(m, false)
    }

    pub fn with(mut self, m: Modality, on: bool) -> Self {
        match m {
            Modality::Social => self.social = on,
            Modality::Emotion => self.emotion = on,
            Modality::Topic => self.topic = on,
            Modality::Domain => self.domain = on,
        }
        self
    }

    pub fn enabled(&self, m: Modality) -> bool {
        match m {
            Modality::Social => self.social,
            Modality::Emotion => self.emotion,
            Modality::Topic => self.topic,
            Modality::Domain => self.domain,
        }
    }

    pub fn any(&self) -> bool {
        Modality::ALL.iter().any(|&m| self.enabled(m))
    }

    /// Letters of the enabled modalities, e.g. `"SETD"`.
    pub fn letters(&self) -> String {
        Modality::ALL.iter().filter(|&&m| self.enabled(m)).map(|m| m.letter()).collect()
    }
}

impl Default for ModalityMask {
    fn default() -> Self {
        Self::ALL
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() != FEATURE_DIM {
            return Err(Error::Invariant(format!(
                "feature vector has {} dimensions, expected {FEATURE_DIM}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invariant("feature vector has non-finite entries".into()));
        }
        Ok(FeatureVector { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn slice(&self, m: Modality) -> &[f64] {
        &self.values[LAYOUT.slice(m).range()]
    }

    pub fn hour_histogram(&self) -> &[f64] {
        &self.slice(Modality::Social)[HOUR_OFFSET..HOUR_OFFSET + 24]
    }

    /// Copy with the slices of disabled modalities set to zero.
    pub fn masked(&self, mask: &ModalityMask) -> FeatureVector {
        let mut values = self.values.clone();
        for s in LAYOUT.slices() {
            if !mask.enabled(s.modality) {
                values[s.range()].iter_mut().for_each(|v| *v = 0.0);
            }
        }
        FeatureVector { values }
    }
}

pub fn social_features(user: &UserRecord) -> [f64; SOCIAL_DIM] {
    let mut out = [0.0; SOCIAL_DIM];
    out[0] = user.followers as f64;
    out[1] = user.friends as f64;
    out[2] = user.favourites as f64;
    out[3] = user.listed as f64;
    out[4] = user.statuses as f64;
    out[5] = user.tweets.len() as f64;
    out[6] = user.tweets.iter().map(|t| t.text.chars().count()).sum::<usize>() as f64;
    out[7] = user.tweets.iter().filter(|t| t.is_retweet).count() as f64;
    out[8] = user.tweets.iter().map(|t| count_mentions(&t.text)).sum::<usize>() as f64;
    for t in &user.tweets {
        out[HOUR_OFFSET + t.timestamp.hour() as usize] += 1.0;
    }
    out
}

pub fn emotion_features(user: &UserRecord, emoji: &EmojiLexicon, vad: &VadLexicon) -> [f64; EMOTION_DIM] {
    let mut out = [0.0; EMOTION_DIM];
    for t in &user.tweets {
        let e = emoji.count(&t.text);
        for (o, c) in out[..3].iter_mut().zip(e) {
            *o += c as f64;
        }
        for tok in normalize_tokens(&t.text) {
            if let Some(v) = vad.get(&tok) {
                out[3] += v.valence;
                out[4] += v.arousal;
                out[5] += v.dominance;
            }
            if FIRST_PERSON_SINGULAR.contains(&tok.as_str()) {
                out[6] += 1.0;
            } else if FIRST_PERSON_PLURAL.contains(&tok.as_str()) {
                out[7] += 1.0;
            }
        }
    }
    out
}

/// All preprocessed tokens of a user's tweets, in timeline order.
pub fn user_document(user: &UserRecord, stopwords: &Stopwords) -> Vec<String> {
    user.tweets
        .iter()
        .flat_map(|t| preprocess_tweet(&t.text, stopwords).tokens)
        .collect()
}

pub fn topic_features(user: &UserRecord, model: &LdaModel, stopwords: &Stopwords) -> Result<[f64; TOPIC_DIM]> {
    if model.k() != TOPIC_DIM {
        return Err(Error::invalid(format!(
            "topic features need a {TOPIC_DIM}-topic model, got K = {}",
            model.k()
        )));
    }
    let theta = infer_doc_topics(model, &user_document(user, stopwords));
    let mut out = [0.0; TOPIC_DIM];
    out.copy_from_slice(&theta);
    Ok(out)
}

pub fn domain_features(
    user: &UserRecord,
    symptoms: &SymptomLexicon,
    antidepressants: &AntidepressantLexicon,
) -> [f64; DOMAIN_DIM] {
    let mut out = [0.0; DOMAIN_DIM];
    for t in &user.tweets {
        let toks = normalize_tokens(&t.text);
        for (o, c) in out[..9].iter_mut().zip(symptoms.count(&toks)) {
            *o += c as f64;
        }
        out[9] += antidepressants.count(&toks) as f64;
    }
    out
}

/// Everything [`assemble`] reads besides the user.
#[derive(Debug, Clone, Copy)]
pub struct FeatureContext<'a> {
    pub lexicons: &'a Lexicons,
    /// Symptom groups used for counting (usually the embedding-expanded lexicon).
    pub symptoms: &'a SymptomLexicon,
    pub lda: &'a LdaModel,
}

pub fn assemble(user: &UserRecord, ctx: &FeatureContext<'_>) -> Result<FeatureVector> {
    let s = social_features(user);
    let e = emotion_features(user, &ctx.lexicons.emoji, &ctx.lexicons.vad);
    let t = topic_features(user, ctx.lda, &ctx.lexicons.stopwords)?;
    let d = domain_features(user, ctx.symptoms, &ctx.lexicons.antidepressants);
    let mut values = Vec::with_capacity(FEATURE_DIM);
    for (part, m) in [(&s[..], Modality::Social), (&e[..], Modality::Emotion), (&t[..], Modality::Topic), (&d[..], Modality::Domain)] {
        if part.len() != LAYOUT.slice(m).len {
            return Err(Error::Invariant(format!("{m:?} slice has length {}", part.len())));
        }
        values.extend_from_slice(part);
    }
    FeatureVector::new(values)
}

pub fn assemble_all(users: &[UserRecord], ctx: &FeatureContext<'_>, exec: ExecMode) -> Result<Vec<FeatureVector>> {
    exec.try_map(users, |_, u| assemble(u, ctx))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Per-dimension z-score statistics. Standard deviations are floored at 1e-8.
pub fn fit_norm(train: &[FeatureVector]) -> Result<NormStats> {
    if train.is_empty() {
        return Err(Error::invalid("cannot fit normalization on an empty set"));
    }
    let n = train.len() as f64;
    let mut mean = vec![0.0; FEATURE_DIM];
    let mut std = vec![0.0; FEATURE_DIM];
    for d in 0..FEATURE_DIM {
        let col = train.iter().map(|v| v.values[d]);
        let (lo, hi) = col.clone().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| (l.min(x), h.max(x)));
        let m = if lo == hi { lo } else { col.clone().sum::<f64>() / n };
        let var = col.map(|x| (x - m) * (x - m)).sum::<f64>() / n;
        mean[d] = m;
        std[d] = var.sqrt().max(STD_FLOOR);
    }
    Ok(NormStats { mean, std })
}

pub fn apply_norm(v: &FeatureVector, stats: &NormStats) -> FeatureVector {
    let values = v
        .values
        .iter()
        .zip(stats.mean.iter().zip(&stats.std))
        .map(|(x, (m, s))| (x - m) / s)
        .collect();
    FeatureVector { values }
}

/// CSV with a `user_id,label` prefix and one column per layout dimension.
pub fn features_csv(rows: &[(String, u8, FeatureVector)]) -> String {
    let mut out = String::from("user_id,label");
    for n in LAYOUT.names() {
        out.push(',');
        out.push_str(&n);
    }
    out.push('\n');
    for (id, label, v) in rows {
        let _ = write!(out, "{id},{label}");
        for x in v.values() {
            let _ = write!(out, ",{x}");
        }
        out.push('\n');
    }
    out
}

pub fn write_features_csv(path: impl AsRef<Path>, rows: &[(String, u8, FeatureVector)]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, features_csv(rows)).map_err(|e| Error::io(path, e))
}
