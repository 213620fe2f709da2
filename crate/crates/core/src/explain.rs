//! Attention-based explanations and symptom word-cloud data.
//!
//! [`AttentionReport`] carries the attention weights of the classifying
//! forward pass verbatim. Its JSON form is the serde encoding of the struct:
//!
//! ```text
//! { "user_id": str, "y_hat": f64, "label": 0|1|null,
//!   "tweets": [ { "position": usize, "text": str, "weight": f64,
//!                 "tokens": [ { "position": usize, "token": str, "weight": f64 } ] } ] }
//! ```
//!
//! Tweets and tokens are ranked by descending weight, ties by position.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_tokens, preprocess_tweet, preprocess_tweet_with_limit, Stopwords, UserRecord};
use crate::error::{Error, Result};
use crate::lexicons::SymptomLexicon;
use crate::model::{Mdhan, Prediction, UserInput};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedToken {
    pub position: usize,
    pub token: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedTweet {
    /// Index in the user's timeline.
    pub position: usize,
    pub text: String,
    pub weight: f64,
    pub tokens: Vec<RankedToken>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionReport {
    pub user_id: String,
    pub y_hat: f64,
    pub label: Option<u8>,
    pub tweets: Vec<RankedTweet>,
}

fn rank<T>(items: &mut [T], key: impl Fn(&T) -> (f64, usize)) {
    items.sort_by(|a, b| {
        let (wa, pa) = key(a);
        let (wb, pb) = key(b);
        wb.total_cmp(&wa).then(pa.cmp(&pb))
    });
}

/// Build the report from an existing prediction of `user`.
pub fn report_from_prediction(
    pred: &Prediction,
    user: &UserRecord,
    stopwords: &Stopwords,
    n_max: usize,
    l_max: usize,
) -> Result<AttentionReport> {
    let enc = &pred.encoding;
    let start = user.tweets.len().saturating_sub(l_max);
    let shown = &user.tweets[start..];
    if !enc.tweet_attn.is_empty() && enc.tweet_attn.len() != shown.len() {
        return Err(Error::Invariant(format!(
            "prediction has {} tweet weights for {} tweets",
            enc.tweet_attn.len(),
            shown.len()
        )));
    }
    let mut tweets = Vec::with_capacity(enc.tweet_attn.len());
    for (i, (&w, t)) in enc.tweet_attn.iter().zip(shown).enumerate() {
        let toks = preprocess_tweet_with_limit(&t.text, stopwords, n_max).tokens;
        let alpha = &enc.word_attn[i];
        let mut tokens: Vec<RankedToken> = toks
            .into_iter()
            .enumerate()
            .map(|(j, token)| RankedToken { position: j, token, weight: alpha.get(j).copied().unwrap_or(0.0) })
            .collect();
        rank(&mut tokens, |t| (t.weight, t.position));
        tweets.push(RankedTweet { position: start + i, text: t.text.clone(), weight: w, tokens });
    }
    rank(&mut tweets, |t| (t.weight, t.position));
    Ok(AttentionReport { user_id: user.user_id.clone(), y_hat: pred.y_hat, label: Some(user.label.into()), tweets })
}

/// Dropout-free forward pass of `input` (the encoding of `user`) and its report.
pub fn extract_attention(model: &Mdhan, user: &UserRecord, input: &UserInput, stopwords: &Stopwords) -> Result<AttentionReport> {
    let pred = model.predict(input)?;
    report_from_prediction(&pred, user, stopwords, model.config.n_max, model.config.l_max)
}

impl AttentionReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

/// Standalone HTML page. Tokens are shown in their original order with
/// opacity proportional to their weight relative to the tweet's maximum;
/// tweets appear in rank order.
pub fn render_html(report: &AttentionReport) -> String {
    let mut h = String::new();
    let title = escape(&report.user_id);
    let _ = write!(
        h,
        "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>Attention report: {title}</title>\n\
<style>\nbody{{font-family:sans-serif;max-width:60em;margin:2em auto;color:#222}}\n\
.tweet{{border-bottom:1px solid #ddd;padding:.5em 0}}\n.meta{{color:#666;font-size:.85em}}\n\
.bar{{display:inline-block;height:.6em;background:#c0392b;vertical-align:middle;margin-right:.5em}}\n\
.w{{background:#c0392b;color:#fff;padding:0 .2em;margin:0 .1em;border-radius:.2em}}\n</style>\n</head>\n<body>\n\
<h1>User {title}</h1>\n<p>Predicted probability of depression: {:.4}",
        report.y_hat
    );
    if let Some(l) = report.label {
        let _ = write!(h, " (label {l})");
    }
    h.push_str("</p>\n");
    let non_empty = report.tweets.iter().any(|t| !t.tokens.is_empty());
    if !non_empty {
        h.push_str("<p class=\"empty\">no content</p>\n");
    }
    for t in report.tweets.iter().filter(|t| !t.tokens.is_empty()) {
        let max = t.tokens.iter().map(|k| k.weight).fold(0.0, f64::max);
        let _ = write!(
            h,
            "<div class=\"tweet\">\n<div class=\"meta\"><span class=\"bar\" style=\"width:{:.1}em\"></span>tweet {} &middot; weight {:.4}</div>\n<p>",
            10.0 * t.weight,
            t.position,
            t.weight
        );
        let mut in_order: Vec<&RankedToken> = t.tokens.iter().collect();
        in_order.sort_by_key(|k| k.position);
        for k in in_order {
            let opacity = if max > 0.0 { k.weight / max } else { 0.0 };
            let _ = write!(
                h,
                "<span class=\"w\" style=\"opacity:{:.3}\" title=\"{:.4}\">{}</span> ",
                0.1 + 0.9 * opacity,
                k.weight,
                escape(&k.token)
            );
        }
        h.push_str("</p>\n</div>\n");
    }
    h.push_str("</body>\n</html>\n");
    h
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordCloud {
    pub category: String,
    /// Total keyword occurrences of the category across the corpus.
    pub mentions: usize,
    /// Tweets containing at least one keyword of the category.
    pub tweets: usize,
    /// Most frequent tokens of the pooled tweets, stopwords removed.
    pub tokens: Vec<(String, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordCloudData {
    pub categories: Vec<WordCloud>,
}

/// How [`WordCloudData::top_categories`] orders categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CategoryRank {
    #[default]
    Mentions,
    Tweets,
}

/// Per symptom category: pool every tweet containing one of its keywords and
/// count the preprocessed tokens. Lists are sorted by descending count, ties
/// lexicographic, and cut to `top_n`.
pub fn symptom_wordclouds(users: &[UserRecord], symptoms: &SymptomLexicon, stopwords: &Stopwords, top_n: usize) -> WordCloudData {
    let cats = symptoms.categories();
    let mut counts: Vec<BTreeMap<String, usize>> = vec![BTreeMap::new(); cats.len()];
    let mut mentions = vec![0usize; cats.len()];
    let mut tweets = vec![0usize; cats.len()];
    for t in users.iter().flat_map(|u| &u.tweets) {
        let hits = symptoms.count(&normalize_tokens(&t.text));
        if hits.iter().all(|&h| h == 0) {
            continue;
        }
        let toks = preprocess_tweet(&t.text, stopwords).tokens;
        for (c, &h) in hits.iter().enumerate() {
            if h > 0 {
                mentions[c] += h;
                tweets[c] += 1;
                for w in &toks {
                    *counts[c].entry(w.clone()).or_default() += 1;
                }
            }
        }
    }
    let categories = cats
        .iter()
        .enumerate()
        .map(|(c, cat)| {
            let mut toks: Vec<(String, usize)> = std::mem::take(&mut counts[c]).into_iter().collect();
            toks.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            toks.truncate(top_n);
            WordCloud { category: cat.name.clone(), mentions: mentions[c], tweets: tweets[c], tokens: toks }
        })
        .collect();
    WordCloudData { categories }
}

impl WordCloudData {
    /// The `n` highest-ranked categories with at least one match; ties keep
    /// lexicon order.
    pub fn top_categories(&self, n: usize, rank: CategoryRank) -> Vec<&WordCloud> {
        let mut v: Vec<&WordCloud> = self.categories.iter().filter(|c| c.tweets > 0).collect();
        v.sort_by_key(|c| std::cmp::Reverse(match rank {
            CategoryRank::Mentions => c.mentions,
            CategoryRank::Tweets => c.tweets,
        }));
        v.truncate(n);
        v
    }

    /// Rows `category,token,count`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("category,token,count\n");
        for c in &self.categories {
            for (t, n) in &c.tokens {
                let token = if t.contains([',', '"']) { format!("\"{}\"", t.replace('"', "\"\"")) } else { t.clone() };
                let _ = writeln!(out, "{},{},{}", c.category, token, n);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use chrono::{TimeZone, Utc};

    use super::*;
    use crate::corpus::{Label, TweetRecord};
    use crate::model::UserEncoding;

    fn user(texts: &[&str]) -> UserRecord {
        UserRecord {
            user_id: "u<1>".into(),
            label: Label::Depressed,
            followers: 0,
            friends: 0,
            favourites: 0,
            listed: 0,
            statuses: 0,
            tweets: texts
                .iter()
                .enumerate()
                .map(|(i, t)| TweetRecord {
                    text: t.to_string(),
                    timestamp: Utc.timestamp_opt(1_600_000_000 + i as i64 * 60, 0).unwrap(),
                    is_retweet: false,
                })
                .collect(),
        }
    }

    fn pred(word_attn: Vec<Vec<f64>>, tweet_attn: Vec<f64>) -> Prediction {
        Prediction {
            user_id: "u<1>".into(),
            y_hat: 0.7,
            logit: 0.0,
            encoding: UserEncoding { s: vec![], p: vec![], word_attn, tweet_attn },
        }
    }

    #[test]
    fn report_ranks_and_copies_weights() {
        let u = user(&["sleep badly tonight", "", "tired"]);
        let p = pred(vec![vec![0.2, 0.5, 0.3, 0.0], vec![], vec![1.0, 0.0, 0.0, 0.0]], vec![0.25, 0.0, 0.75]);
        let r = report_from_prediction(&p, &u, &Stopwords::bundled(), 4, 10).unwrap();
        assert_eq!(r.tweets.iter().map(|t| t.position).collect::<Vec<_>>(), vec![2, 0, 1]);
        assert_eq!(r.tweets[0].weight, 0.75);
        let first = &r.tweets[1].tokens;
        assert_eq!(first.iter().map(|t| t.token.as_str()).collect::<Vec<_>>(), vec!["badly", "tonight", "sleep"]);
        assert_eq!(first[0].weight, 0.5);
    }

    #[test]
    fn html_is_complete_and_escaped() {
        let u = user(&["a<b c&d", "e"]);
        let p = pred(vec![vec![0.5, 0.5, 0.0], vec![1.0, 0.0, 0.0]], vec![0.4, 0.6]);
        let r = report_from_prediction(&p, &u, &Stopwords::default(), 3, 10).unwrap();
        let html = render_html(&r);
        assert_eq!(html.matches("<span class=\"w\"").count(), 3);
        assert!(html.contains("a&lt;b") && html.contains("c&amp;d") && html.contains("u&lt;1&gt;"));
        assert!(!html.contains("http"));
        assert_eq!(html, render_html(&r.clone()));

        let empty = AttentionReport { user_id: "x".into(), y_hat: 0.5, label: None, tweets: vec![] };
        assert!(render_html(&empty).contains("no content"));
    }

    #[test]
    fn wordclouds() {
        let lex = SymptomLexicon::bundled();
        let sw = Stopwords::bundled();
        let u = user(&["insomnia again tonight", "insomnia insomnia coffee", "nice weather"]);
        let d = symptom_wordclouds(&[u], &lex, &sw, 10);
        let nonempty: Vec<_> = d.categories.iter().filter(|c| !c.tokens.is_empty()).collect();
        assert_eq!(nonempty.len(), 1);
        assert_eq!(nonempty[0].category, "sleep_disturbance");
        assert_eq!(nonempty[0].tokens[0], ("insomnia".to_string(), 3));
        assert_eq!(nonempty[0].mentions, 3);
        assert_eq!(nonempty[0].tweets, 2);
        let top = d.top_categories(5, CategoryRank::Mentions);
        assert_eq!(top.len(), 1);
        let d1 = symptom_wordclouds(&[user(&["insomnia again tonight", "insomnia insomnia coffee"])], &lex, &sw, 1);
        let sleep = d1.categories.iter().find(|c| c.category == "sleep_disturbance").unwrap();
        assert_eq!(sleep.tokens, vec![("insomnia".to_string(), 3)]);
        assert!(d.to_csv().starts_with("category,token,count\nsleep_disturbance,insomnia,3\n"));
    }
}
