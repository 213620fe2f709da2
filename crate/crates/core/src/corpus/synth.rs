//! Synthetic labelled timelines with controllable, planted signal.
//!
//! Depressed users can carry three independent signal channels:
//!
//! * text: a tweet is *signal-bearing* with probability `text_signal`; all of
//!   its content words are then drawn from the symptom vocabulary instead of
//!   the neutral vocabulary;
//! * social: a tweet is posted between 00:00 and 04:59 UTC with probability
//!   `social_signal`, otherwise at a uniformly random hour;
//! * emotion: a negative emoji is appended with probability `emotion_signal`.
//!
//! Control users, and depressed users when a channel's strength is zero, draw
//! from the same label-independent distributions. With `split_channels` the
//! depressed users alternate between carrying only the text channel and
//! carrying only the social/emotion channels.

use std::collections::HashSet;
use std::f64::consts::PI;

use chrono::{Duration, TimeZone, Utc};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{normalize_tokens, Corpus, Label, Stopwords, TweetRecord, UserRecord};
use crate::error::{Error, Result};
use crate::lexicons::{EmbeddingTable, SymptomLexicon};
use crate::rng::{self, Rng};

const NEUTRAL_WORDS: &[&str] = &[
    "coffee", "weather", "train", "garden", "movie", "music", "book", "dinner", "lunch", "office",
    "meeting", "project", "email", "phone", "laptop", "kitchen", "window", "street", "market", "city",
    "river", "mountain", "beach", "park", "bicycle", "car", "bus", "ticket", "airport", "hotel",
    "football", "game", "match", "team", "score", "season", "weekend", "morning", "evening", "afternoon",
    "breakfast", "pizza", "burger", "salad", "soup", "bread", "cheese", "apple", "orange", "banana",
    "tea", "juice", "water", "recipe", "oven", "table", "chair", "sofa", "lamp", "carpet",
    "paint", "picture", "camera", "photo", "video", "channel", "episode", "series", "album", "song",
    "guitar", "piano", "concert", "festival", "museum", "gallery", "library", "school", "class", "lecture",
    "homework", "exam", "teacher", "student", "college", "course", "lesson", "chapter", "article", "news",
    "report", "market", "price", "store", "shop", "order", "delivery", "package", "box", "bag",
    "jacket", "shirt", "shoes", "hat", "umbrella", "rain", "snow", "cloud", "sun", "wind",
    "tree", "flower", "grass", "dog", "cat", "bird", "horse", "fish", "farm", "village",
    "bridge", "road", "traffic", "parking", "garage", "engine", "wheel", "map", "route", "trip",
    "holiday", "flight", "passport", "luggage", "museum", "tour", "guide", "island", "lake", "forest",
    "software", "update", "server", "code", "keyboard", "screen", "printer", "battery", "charger", "cable",
    "budget", "invoice", "contract", "client", "schedule", "calendar", "deadline", "agenda", "notes", "folder",
];

const FILLERS: &[&str] = &["i", "my", "the", "so", "just", "a", "we", "our"];
const MENTIONS: &[&str] = &["@alex", "@sam", "@jordan", "@taylor", "@casey"];
const NEGATIVE_EMOJI: &[&str] = &["😞", "😢", "😭", "💔"];
const ANY_EMOJI: &[&str] = &["😂", "😊", "🤔", "👀", "😢", "😒"];

fn dedup(words: impl IntoIterator<Item = String>) -> Vec<String> {
    let mut seen = HashSet::new();
    words.into_iter().filter(|w| seen.insert(w.clone())).collect()
}

/// Content words used by signal-free tweets.
pub fn neutral_vocabulary() -> Vec<String> {
    dedup(NEUTRAL_WORDS.iter().map(|w| w.to_string()))
}

/// Single-token symptom keywords that survive preprocessing.
pub fn signal_vocabulary() -> Vec<String> {
    SymptomLexicon::bundled().single_token_keywords(&Stopwords::bundled())
}

/// Whether raw tweet text contains a word from [`signal_vocabulary`].
pub fn is_signal_tweet(text: &str) -> bool {
    thread_local! {
        static VOCAB: HashSet<String> = signal_vocabulary().into_iter().collect();
    }
    VOCAB.with(|v| normalize_tokens(text).iter().any(|t| v.contains(t)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_users: usize,
    pub seed: u64,
    pub text_signal: f64,
    pub social_signal: f64,
    pub emotion_signal: f64,
    pub split_channels: bool,
    pub min_tweets: usize,
    pub max_tweets: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
}

impl SynthSpec {
    /// All channels at strength `signal`.
    pub fn uniform(n_users: usize, signal: f64, seed: u64) -> Self {
        SynthSpec {
            n_users,
            seed,
            text_signal: signal,
            social_signal: signal,
            emotion_signal: signal,
            split_channels: false,
            min_tweets: 12,
            max_tweets: 20,
            min_tokens: 3,
            max_tokens: 8,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_users == 0 || !self.n_users.is_multiple_of(2) {
            return Err(Error::invalid(format!("n_users must be even and positive, got {}", self.n_users)));
        }
        for (name, v) in [
            ("text_signal", self.text_signal),
            ("social_signal", self.social_signal),
            ("emotion_signal", self.emotion_signal),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} must lie in [0,1], got {v}")));
            }
        }
        if self.min_tweets == 0 || self.min_tweets > self.max_tweets || self.min_tokens == 0 || self.min_tokens > self.max_tokens {
            return Err(Error::invalid("tweet and token ranges must be non-empty and start at 1 or more"));
        }
        Ok(())
    }

    pub fn generate(&self) -> Result<Corpus> {
        self.validate()?;
        let neutral = neutral_vocabulary();
        let signal = signal_vocabulary();
        let users = (0..self.n_users)
            .map(|i| {
                let label = if i % 2 == 0 { Label::Depressed } else { Label::NotDepressed };
                let mut r = rng::stream(self.seed, "synth-user", i as u64);
                let (text, social, emotion) = match label {
                    Label::NotDepressed => (0.0, 0.0, 0.0),
                    Label::Depressed if self.split_channels && (i / 2) % 2 == 0 => (self.text_signal, 0.0, 0.0),
                    Label::Depressed if self.split_channels => (0.0, self.social_signal, self.emotion_signal),
                    Label::Depressed => (self.text_signal, self.social_signal, self.emotion_signal),
                };
                let n_tweets = r.random_range(self.min_tweets..=self.max_tweets);
                let tweets = (0..n_tweets)
                    .map(|_| self.tweet(&mut r, &neutral, &signal, text, social, emotion))
                    .collect();
                UserRecord {
                    user_id: format!("synth-{i:05}"),
                    label,
                    followers: r.random_range(0..=3000),
                    friends: r.random_range(0..=1500),
                    favourites: r.random_range(0..=8000),
                    listed: r.random_range(0..=40),
                    statuses: r.random_range(100..=20_000),
                    tweets,
                }
            })
            .collect();
        let mut c = Corpus::new(format!("synth-{}", self.seed), users)?;
        c.name = format!("synth-n{}-s{}", self.n_users, self.seed);
        Ok(c)
    }

    fn tweet(
        &self,
        r: &mut Rng,
        neutral: &[String],
        signal: &[String],
        text_p: f64,
        social_p: f64,
        emotion_p: f64,
    ) -> TweetRecord {
        let vocab = if r.random_bool(text_p) { signal } else { neutral };
        let n = r.random_range(self.min_tokens..=self.max_tokens);
        let mut words: Vec<String> = Vec::with_capacity(n + 4);
        if r.random_bool(0.4) {
            words.push(FILLERS[r.random_range(0..FILLERS.len())].to_string());
        }
        if r.random_bool(0.15) {
            words.push(MENTIONS[r.random_range(0..MENTIONS.len())].to_string());
        }
        for k in 0..n {
            let w = &vocab[r.random_range(0..vocab.len())];
            if k == 0 && r.random_bool(0.3) {
                let mut c = w.chars();
                let first = c.next().map(|f| f.to_ascii_uppercase()).unwrap_or_default();
                words.push(std::iter::once(first).chain(c).collect());
            } else {
                words.push(w.clone());
            }
            if r.random_bool(0.15) {
                words.push(FILLERS[r.random_range(0..FILLERS.len())].to_string());
            }
        }
        if r.random_bool(emotion_p) {
            words.push(NEGATIVE_EMOJI[r.random_range(0..NEGATIVE_EMOJI.len())].to_string());
        } else if r.random_bool(0.3) {
            words.push(ANY_EMOJI[r.random_range(0..ANY_EMOJI.len())].to_string());
        }
        if r.random_bool(0.1) {
            words.push(format!("http://t.co/{:x}", r.random::<u32>()));
        }
        let hour: i64 = if r.random_bool(social_p) { r.random_range(0..5) } else { r.random_range(0..24) };
        let base = Utc.with_ymd_and_hms(2019, 1, 1, 0, 0, 0).unwrap();
        let ts = base
            + Duration::days(r.random_range(0..180))
            + Duration::hours(hour)
            + Duration::minutes(r.random_range(0..60))
            + Duration::seconds(r.random_range(0..60));
        TweetRecord {
            text: words.join(" "),
            timestamp: ts,
            is_retweet: r.random_bool(0.1),
        }
    }
}

/// Balanced corpus of `n_users` with every channel at strength `signal`.
pub fn synth_corpus(n_users: usize, signal: f64, seed: u64) -> Result<Corpus> {
    SynthSpec::uniform(n_users, signal, seed).generate()
}

fn normal(r: &mut Rng) -> f64 {
    let u1: f64 = 1.0 - r.random::<f64>();
    let u2: f64 = r.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Random embeddings for the synthetic vocabulary. Neutral words are isotropic
/// Gaussian; symptom words of the same category share a cluster direction.
pub fn synth_embeddings(dim: usize, seed: u64) -> Result<EmbeddingTable> {
    if dim == 0 {
        return Err(Error::invalid("embedding dimension must be positive"));
    }
    let scale = 1.0 / (dim as f64).sqrt();
    let mut r = rng::stream(seed, "synth-embeddings", 0);
    let lex = SymptomLexicon::bundled();
    let stop = Stopwords::bundled();
    let centers: Vec<Vec<f64>> = (0..lex.categories().len())
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| normal(&mut r)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            v.into_iter().map(|x| x / n).collect()
        })
        .collect();
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (ci, cat) in lex.categories().iter().enumerate() {
        for w in cat.keywords.iter() {
            if w.contains(' ') || stop.contains(w) || !seen.insert(w.to_string()) {
                continue;
            }
            let v = centers[ci].iter().map(|c| 0.8 * c + 0.6 * scale * normal(&mut r)).collect();
            rows.push((w.to_string(), v));
        }
    }
    for w in neutral_vocabulary() {
        if seen.insert(w.clone()) {
            let v = (0..dim).map(|_| scale * normal(&mut r)).collect();
            rows.push((w, v));
        }
    }
    EmbeddingTable::from_rows(dim, rows)
}
