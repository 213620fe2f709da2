//! Labelled user timelines: loading, cleaning, filtering, stratified splits and
//! synthetic corpora.
//!
//! # File format
//!
//! A corpus is JSON Lines, one user per line:
//!
//! ```json
//! {"user_id":"u1","label":1,"followers":12,"friends":40,"favourites":3,
//!  "listed":0,"statuses":512,
//!  "tweets":[{"text":"can't sleep again","timestamp":"2019-03-02T02:14:09Z","is_retweet":false}]}
//! ```
//!
//! `label` is `1` for depressed and `0` for not depressed. Timestamps are
//! RFC 3339; tweets are re-sorted by timestamp on load.

mod synth;
mod text;

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub use synth::{
    is_signal_tweet, neutral_vocabulary, signal_vocabulary, synth_corpus, synth_embeddings,
    SynthSpec,
};
pub use text::{
    count_mentions, normalize_tokens, preprocess_tweet, preprocess_tweet_with_limit, Stopwords,
    TokenizedTweet, N_MAX,
};

pub const DEFAULT_MIN_POSTS: usize = 10;
pub const DEFAULT_MAX_FOLLOWERS: u64 = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Label {
    NotDepressed = 0,
    Depressed = 1,
}

impl Label {
    pub fn as_f64(self) -> f64 {
        f64::from(u8::from(self))
    }

    pub fn index(self) -> usize {
        usize::from(u8::from(self))
    }

    pub const ALL: [Label; 2] = [Label::NotDepressed, Label::Depressed];
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            0 => Ok(Label::NotDepressed),
            1 => Ok(Label::Depressed),
            other => Err(format!("label must be 0 or 1, got {other}")),
        }
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        l as u8
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", u8::from(*self))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TweetRecord {
    pub text: String,
    pub timestamp: DateTime<Utc>,
    #[serde(default)]
    pub is_retweet: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRecord {
    pub user_id: String,
    pub label: Label,
    #[serde(default)]
    pub followers: u64,
    #[serde(default)]
    pub friends: u64,
    #[serde(default)]
    pub favourites: u64,
    #[serde(default)]
    pub listed: u64,
    #[serde(default)]
    pub statuses: u64,
    pub tweets: Vec<TweetRecord>,
}

impl UserRecord {
    fn sort_tweets(&mut self) {
        // stable, so equal timestamps keep file order
        self.tweets.sort_by_key(|t| t.timestamp);
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub name: String,
    pub users: Vec<UserRecord>,
    /// Non-fatal conditions raised while building this corpus (e.g. a filter
    /// that removed every user).
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub users: usize,
    pub tweets: usize,
}

impl Corpus {
    pub fn new(name: impl Into<String>, users: Vec<UserRecord>) -> Result<Self> {
        let mut seen = HashSet::new();
        for u in &users {
            if !seen.insert(u.user_id.as_str()) {
                return Err(Error::DuplicateUser(u.user_id.clone()));
            }
        }
        let mut users = users;
        users.iter_mut().for_each(UserRecord::sort_tweets);
        Ok(Corpus {
            name: name.into(),
            users,
            warnings: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    /// Per-class user and tweet counts, indexed by [`Label::index`].
    pub fn class_counts(&self) -> [ClassCounts; 2] {
        let mut out = [ClassCounts { users: 0, tweets: 0 }; 2];
        for u in &self.users {
            let c = &mut out[u.label.index()];
            c.users += 1;
            c.tweets += u.tweets.len();
        }
        out
    }

    /// Serialize to JSON Lines. Output is a pure function of the users.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for u in &self.users {
            out.push_str(&serde_json::to_string(u)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let body = self.to_jsonl()?;
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Load a JSON Lines corpus. Blank lines are ignored; tweets with blank text
/// are dropped.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut users = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut user: UserRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if !seen.insert(user.user_id.clone()) {
            return Err(Error::DuplicateUser(user.user_id));
        }
        let before = user.tweets.len();
        user.tweets.retain(|t| !t.text.trim().is_empty());
        if user.tweets.len() != before {
            log::warn!(
                "{}: dropped {} blank tweets of user {}",
                path.display(),
                before - user.tweets.len(),
                user.user_id
            );
        }
        user.sort_tweets();
        users.push(user);
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(Corpus {
        name,
        users,
        warnings: Vec::new(),
    })
}

/// Keep users with at least `min_posts` tweets and at most `max_followers`
/// followers.
pub fn filter_users(corpus: &Corpus, min_posts: usize, max_followers: u64) -> Result<Corpus> {
    if min_posts == 0 {
        return Err(Error::invalid("min_posts must be at least 1"));
    }
    let users: Vec<UserRecord> = corpus
        .users
        .iter()
        .filter(|u| u.tweets.len() >= min_posts && u.followers <= max_followers)
        .cloned()
        .collect();
    let mut warnings = corpus.warnings.clone();
    if users.is_empty() {
        let msg = format!(
            "filter (min_posts={min_posts}, max_followers={max_followers}) removed all {} users",
            corpus.len()
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    Ok(Corpus {
        name: corpus.name.clone(),
        users,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

/// Stratified, seeded train/test partition. Within each side users keep their
/// corpus order.
pub fn split(corpus: &Corpus, spec: &SplitSpec) -> Result<(Corpus, Corpus)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train_fraction must lie in (0,1), got {}",
            spec.train_fraction
        )));
    }
    let mut in_train = vec![false; corpus.len()];
    for label in Label::ALL {
        let mut idx: Vec<usize> = corpus
            .users
            .iter()
            .enumerate()
            .filter(|(_, u)| u.label == label)
            .map(|(i, _)| i)
            .collect();
        if idx.len() < 2 {
            return Err(Error::invalid(format!(
                "class {label} has {} users; a split needs at least 2",
                idx.len()
            )));
        }
        let mut r = rng::stream(spec.seed, "split", label.index() as u64);
        idx.shuffle(&mut r);
        let n_train = ((idx.len() as f64 * spec.train_fraction).round() as usize)
            .clamp(1, idx.len() - 1);
        for &i in &idx[..n_train] {
            in_train[i] = true;
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (u, t) in corpus.users.iter().zip(in_train) {
        if t {
            train.push(u.clone());
        } else {
            test.push(u.clone());
        }
    }
    let mk = |suffix: &str, users| Corpus {
        name: format!("{}-{suffix}", corpus.name),
        users,
        warnings: Vec::new(),
    };
    Ok((mk("train", train), mk("test", test)))
}
