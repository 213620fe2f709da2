//! Tweet tokenization.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Maximum tokens kept per tweet.
pub const N_MAX: usize = 30;

const BUNDLED_STOPWORDS: &str = include_str!("../../assets/stopwords.txt");

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Stopwords(HashSet<String>);

impl Stopwords {
    /// The shipped English list.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_STOPWORDS)
    }

    /// One word per line; blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Self {
        text.lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S: Into<String>> FromIterator<S> for Stopwords {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Stopwords(iter.into_iter().map(|s| s.into().to_lowercase()).collect())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct TokenizedTweet {
    pub tokens: Vec<String>,
}

impl TokenizedTweet {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn join(&self) -> String {
        self.tokens.join(" ")
    }
}

fn is_url(tok: &str) -> bool {
    tok.contains("://") || tok.starts_with("www.")
}

fn clean_token(raw: &str) -> Option<String> {
    let lower: String = raw
        .chars()
        .flat_map(char::to_lowercase)
        .filter(|c| c.is_ascii_graphic())
        .collect();
    let lead = lower.trim_start_matches(|c: char| c.is_ascii_punctuation() && c != '@' && c != '#');
    if lead.starts_with('@') || is_url(lead) {
        return None;
    }
    let tok = lead.trim_matches(|c: char| c.is_ascii_punctuation());
    if tok.is_empty() || is_url(tok) {
        return None;
    }
    Some(tok.to_string())
}

/// Clean a tweet for the text encoder, topic model and baselines.
///
/// Rules, in order: lowercase; split on Unicode whitespace; delete non-ASCII and
/// non-printable characters; drop `@mention` and URL tokens; strip leading
/// `#` and surrounding punctuation; drop stopwords; keep the first `n_max`.
pub fn preprocess_tweet_with_limit(text: &str, stopwords: &Stopwords, n_max: usize) -> TokenizedTweet {
    let tokens = text
        .split_whitespace()
        .filter_map(clean_token)
        .filter(|t| !stopwords.contains(t))
        .take(n_max)
        .collect();
    TokenizedTweet { tokens }
}

pub fn preprocess_tweet(text: &str, stopwords: &Stopwords) -> TokenizedTweet {
    preprocess_tweet_with_limit(text, stopwords, N_MAX)
}

/// Lightweight normalization used for lexicon matching: lowercase, split on
/// whitespace, strip surrounding punctuation and remove apostrophes. Stopwords
/// and non-ASCII letters are kept so that pronouns and accented names match.
pub fn normalize_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|raw| {
            let lower = raw.to_lowercase();
            let tok: String = lower
                .trim_matches(|c: char| !c.is_alphanumeric())
                .chars()
                .filter(|&c| c != '\'' && c != '\u{2019}')
                .collect();
            (!tok.is_empty()).then_some(tok)
        })
        .collect()
}

/// Number of `@user` mentions in raw tweet text.
pub fn count_mentions(text: &str) -> usize {
    text.split_whitespace()
        .filter(|t| {
            let t = t.trim_start_matches(|c: char| c.is_ascii_punctuation() && c != '@');
            t.len() > 1 && t.starts_with('@')
        })
        .count()
}
