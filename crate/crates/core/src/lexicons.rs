//! Lexical resources: word embeddings, emoji polarity, valence/arousal/dominance
//! norms, depressive-symptom keyword groups and antidepressant names.
//!
//! All resources are immutable once built. The `assets/` directory of this
//! crate ships default versions of every list; they are compiled in and exposed
//! through the `bundled()` constructors.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_tokens, Stopwords};
use crate::error::{Error, Result};

const BUNDLED_EMOJI: &str = include_str!("../assets/emoji_sentiment.tsv");
const BUNDLED_VAD: &str = include_str!("../assets/vad_norms.csv");
const BUNDLED_SYMPTOMS: &str = include_str!("../assets/symptoms.txt");
const BUNDLED_ANTIDEPRESSANTS: &str = include_str!("../assets/antidepressants.txt");

pub const FIRST_PERSON_SINGULAR: [&str; 5] = ["i", "me", "my", "mine", "myself"];
pub const FIRST_PERSON_PLURAL: [&str; 5] = ["we", "us", "our", "ours", "ourselves"];

pub const DEFAULT_EXPANSION_K: usize = 5;
pub const DEFAULT_EXPANSION_TAU: f64 = 0.5;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

// ---------------------------------------------------------------------------
// Embeddings

/// Frozen word vectors. Row `len()` is the all-zero UNK vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    words: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
}

impl EmbeddingTable {
    /// Build from `(token, vector)` pairs. Duplicate tokens keep the first vector.
    pub fn from_rows<I>(dim: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, Vec<f64>)>,
    {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        let mut t = EmbeddingTable {
            dim,
            words: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
        };
        for (word, vec) in rows {
            if vec.len() != dim {
                return Err(Error::invalid(format!(
                    "vector for `{word}` has {} values, expected {dim}",
                    vec.len()
                )));
            }
            t.push(word, &vec);
        }
        t.data.extend(std::iter::repeat_n(0.0, dim));
        Ok(t)
    }

    fn push(&mut self, word: String, vec: &[f64]) {
        if self.index.contains_key(&word) {
            return;
        }
        self.index.insert(word.clone(), self.words.len());
        self.words.push(word);
        self.data.extend_from_slice(vec);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Vocabulary size, excluding UNK.
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn unk_index(&self) -> usize {
        self.words.len()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    /// Row index of `token`, or [`Self::unk_index`].
    pub fn index_of(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(self.words.len())
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn lookup(&self, token: &str) -> &[f64] {
        self.row(self.index_of(token))
    }

    /// All rows including the trailing UNK row, row-major.
    pub fn matrix(&self) -> &[f64] {
        &self.data
    }

    /// Parse the whitespace-delimited text format (`token v1 v2 ... vd` per line).
    /// The dimension is taken from the first vector line unless `dim` is given.
    /// A leading `count dim` header line is skipped.
    pub fn load_with_dim(path: impl AsRef<Path>, dim: Option<usize>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut dim = dim;
        let mut table: Option<EmbeddingTable> = None;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let vals: Vec<&str> = parts.collect();
            if i == 0 && vals.len() == 1 && word.parse::<usize>().is_ok() && vals[0].parse::<usize>().is_ok() {
                continue;
            }
            let d = *dim.get_or_insert(vals.len());
            if vals.len() != d {
                return Err(parse_err(
                    path,
                    i + 1,
                    format!("expected {d} values after token, found {}", vals.len()),
                ));
            }
            let vec = vals
                .iter()
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| parse_err(path, i + 1, e.to_string()))?;
            if vec.iter().any(|v| !v.is_finite()) {
                return Err(parse_err(path, i + 1, "non-finite embedding value"));
            }
            let t = table.get_or_insert_with(|| EmbeddingTable {
                dim: d,
                words: Vec::new(),
                index: HashMap::new(),
                data: Vec::new(),
            });
            t.push(word.to_string(), &vec);
        }
        let mut t = match table {
            Some(t) => t,
            None => {
                let d = dim.ok_or_else(|| parse_err(path, 0, "empty embedding file"))?;
                EmbeddingTable {
                    dim: d,
                    words: Vec::new(),
                    index: HashMap::new(),
                    data: Vec::new(),
                }
            }
        };
        t.data.extend(std::iter::repeat_n(0.0, t.dim));
        Ok(t)
    }

    /// Write the text format; values use shortest round-trip formatting.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        for (i, w) in self.words.iter().enumerate() {
            out.push_str(w);
            for v in self.row(i) {
                out.push(' ');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }

    fn norms(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| self.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    EmbeddingTable::load_with_dim(path, None)
}

// ---------------------------------------------------------------------------
// Phrase matching

/// Keyword set matched against normalized token streams. Multi-word entries
/// match contiguous token runs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PhraseSet {
    entries: BTreeSet<String>,
    singles: HashSet<String>,
    phrases: Vec<Vec<String>>,
}

impl PhraseSet {
    pub fn new<I, S>(items: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut s = PhraseSet::default();
        for item in items {
            s.insert(item.as_ref());
        }
        s
    }

    /// Normalizes `raw` and inserts it. Returns false for empty or existing entries.
    pub fn insert(&mut self, raw: &str) -> bool {
        let toks = normalize_tokens(raw);
        if toks.is_empty() {
            return false;
        }
        let key = toks.join(" ");
        if !self.entries.insert(key) {
            return false;
        }
        if toks.len() == 1 {
            self.singles.insert(toks.into_iter().next().unwrap());
        } else {
            self.phrases.push(toks);
        }
        true
    }

    pub fn contains(&self, entry: &str) -> bool {
        self.entries.contains(&normalize_tokens(entry).join(" "))
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of entry occurrences in `tokens`.
    pub fn count_in(&self, tokens: &[String]) -> usize {
        let singles = tokens.iter().filter(|t| self.singles.contains(*t)).count();
        let phrases: usize = self
            .phrases
            .iter()
            .map(|p| tokens.windows(p.len()).filter(|w| *w == p.as_slice()).count())
            .sum();
        singles + phrases
    }

    pub fn is_superset(&self, other: &PhraseSet) -> bool {
        self.entries.is_superset(&other.entries)
    }
}

// ---------------------------------------------------------------------------
// Emoji

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Neutral,
    Negative,
}

impl Polarity {
    pub fn index(self) -> usize {
        match self {
            Polarity::Positive => 0,
            Polarity::Neutral => 1,
            Polarity::Negative => 2,
        }
    }
}

impl std::str::FromStr for Polarity {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "positive" | "pos" => Ok(Polarity::Positive),
            "neutral" | "neu" => Ok(Polarity::Neutral),
            "negative" | "neg" => Ok(Polarity::Negative),
            other => Err(format!("unknown polarity `{other}`")),
        }
    }
}

const VARIATION_SELECTOR: char = '\u{FE0F}';

#[derive(Debug, Clone, PartialEq)]
pub struct EmojiLexicon {
    map: HashMap<String, Polarity>,
    max_chars: usize,
}

impl EmojiLexicon {
    pub fn new<I: IntoIterator<Item = (String, Polarity)>>(entries: I) -> Result<Self> {
        let mut map = HashMap::new();
        for (e, p) in entries {
            let key: String = e.chars().filter(|&c| c != VARIATION_SELECTOR).collect();
            if !key.is_empty() {
                map.entry(key).or_insert(p);
            }
        }
        if map.is_empty() {
            return Err(Error::invalid("emoji lexicon is empty"));
        }
        let max_chars = map.keys().map(|k| k.chars().count()).max().unwrap_or(1);
        Ok(EmojiLexicon { map, max_chars })
    }

    fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split('\t');
            let (Some(e), Some(p)) = (cols.next(), cols.next()) else {
                return Err(parse_err(path, i + 1, "expected `emoji<TAB>polarity`"));
            };
            let p = p.parse().map_err(|m: String| parse_err(path, i + 1, m))?;
            entries.push((e.trim().to_string(), p));
        }
        Self::new(entries)
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_EMOJI, Path::new("<bundled emoji_sentiment.tsv>")).expect("bundled emoji asset")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&read(path)?, path)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn polarity(&self, emoji: &str) -> Option<Polarity> {
        let key: String = emoji.chars().filter(|&c| c != VARIATION_SELECTOR).collect();
        self.map.get(&key).copied()
    }

    /// Emoji of each polarity in `text`, `[positive, neutral, negative]`,
    /// using greedy longest match.
    pub fn count(&self, text: &str) -> [usize; 3] {
        let chars: Vec<char> = text.chars().filter(|&c| c != VARIATION_SELECTOR).collect();
        let mut out = [0usize; 3];
        let mut i = 0;
        let mut buf = String::new();
        while i < chars.len() {
            let mut hit = None;
            for len in (1..=self.max_chars.min(chars.len() - i)).rev() {
                buf.clear();
                buf.extend(&chars[i..i + len]);
                if let Some(p) = self.map.get(&buf) {
                    hit = Some((len, *p));
                    break;
                }
            }
            match hit {
                Some((len, p)) => {
                    out[p.index()] += 1;
                    i += len;
                }
                None => i += 1,
            }
        }
        out
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, Polarity)> {
        self.map.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

// ---------------------------------------------------------------------------
// VAD norms

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vad {
    pub valence: f64,
    pub arousal: f64,
    pub dominance: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VadLexicon(HashMap<String, Vad>);

impl VadLexicon {
    fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut map = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || (i == 0 && line.starts_with("word,")) {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 4 {
                return Err(parse_err(path, i + 1, "expected word,valence,arousal,dominance"));
            }
            let num = |s: &str| -> Result<f64> {
                let v: f64 = s.parse().map_err(|_| parse_err(path, i + 1, format!("bad number `{s}`")))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(parse_err(path, i + 1, "non-finite score"))
                }
            };
            let vad = Vad {
                valence: num(cols[1])?,
                arousal: num(cols[2])?,
                dominance: num(cols[3])?,
            };
            map.entry(cols[0].to_lowercase()).or_insert(vad);
        }
        Ok(VadLexicon(map))
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_VAD, Path::new("<bundled vad_norms.csv>")).expect("bundled VAD asset")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&read(path)?, path)
    }

    pub fn get(&self, word: &str) -> Option<Vad> {
        self.0.get(word).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<(String, Vad)> for VadLexicon {
    fn from_iter<I: IntoIterator<Item = (String, Vad)>>(iter: I) -> Self {
        VadLexicon(iter.into_iter().collect())
    }
}

// ---------------------------------------------------------------------------
// Symptoms

/// The nine depressive-symptom groups, in feature order.
pub const SYMPTOM_CATEGORIES: [&str; 9] = [
    "depressed_mood",
    "diminished_interest",
    "weight_appetite",
    "sleep_disturbance",
    "psychomotor",
    "fatigue",
    "worthlessness_guilt",
    "diminished_concentration",
    "suicidal",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymptomCategory {
    pub name: String,
    pub keywords: PhraseSet,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymptomLexicon {
    categories: Vec<SymptomCategory>,
}

impl SymptomLexicon {
    pub fn new(categories: Vec<SymptomCategory>) -> Result<Self> {
        if categories.len() != SYMPTOM_CATEGORIES.len() {
            return Err(Error::invalid(format!(
                "symptom lexicon needs {} categories, got {}",
                SYMPTOM_CATEGORIES.len(),
                categories.len()
            )));
        }
        Ok(SymptomLexicon { categories })
    }

    /// Section-per-category text: `[name]` headers followed by one keyword or
    /// phrase per line.
    fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut cats: Vec<SymptomCategory> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                cats.push(SymptomCategory {
                    name: name.trim().to_string(),
                    keywords: PhraseSet::default(),
                });
            } else {
                let cat = cats
                    .last_mut()
                    .ok_or_else(|| parse_err(path, i + 1, "keyword before first [category] header"))?;
                cat.keywords.insert(line);
            }
        }
        Self::new(cats).map_err(|e| parse_err(path, 0, e.to_string()))
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_SYMPTOMS, Path::new("<bundled symptoms.txt>")).expect("bundled symptom asset")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&read(path)?, path)
    }

    pub fn categories(&self) -> &[SymptomCategory] {
        &self.categories
    }

    /// Per-category mention counts in a normalized token stream.
    pub fn count(&self, tokens: &[String]) -> [usize; 9] {
        let mut out = [0; 9];
        for (o, c) in out.iter_mut().zip(&self.categories) {
            *o = c.keywords.count_in(tokens);
        }
        out
    }

    /// Keywords of every category that are single tokens and survive
    /// `stopwords` removal, sorted and deduplicated.
    pub fn single_token_keywords(&self, stopwords: &Stopwords) -> Vec<String> {
        let set: BTreeSet<String> = self
            .categories
            .iter()
            .flat_map(|c| c.keywords.iter())
            .filter(|k| !k.contains(' ') && !stopwords.contains(k))
            .map(str::to_string)
            .collect();
        set.into_iter().collect()
    }

    pub fn is_superset(&self, other: &SymptomLexicon) -> bool {
        self.categories
            .iter()
            .zip(&other.categories)
            .all(|(a, b)| a.name == b.name && a.keywords.is_superset(&b.keywords))
    }
}

impl fmt::Display for SymptomLexicon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.categories {
            writeln!(f, "[{}]", c.name)?;
            for k in c.keywords.iter() {
                writeln!(f, "{k}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Add, for every single-token seed present in `emb`, its `k` nearest
/// vocabulary tokens with cosine similarity at least `tau`. Ties are broken
/// lexicographically, so the result for `k` is a subset of the result for `k+1`.
pub fn expand_symptom_lexicon(
    seeds: &SymptomLexicon,
    emb: &EmbeddingTable,
    k: usize,
    tau: f64,
) -> Result<SymptomLexicon> {
    if !(-1.0..=1.0).contains(&tau) {
        return Err(Error::invalid(format!("tau must lie in [-1,1], got {tau}")));
    }
    let mut out = seeds.clone();
    if k == 0 {
        return Ok(out);
    }
    let norms = emb.norms();
    for cat in &mut out.categories {
        let seed_words: Vec<String> = cat.keywords.iter().map(str::to_string).collect();
        for seed in seed_words {
            if seed.contains(' ') {
                continue;
            }
            if !emb.contains(&seed) {
                log::debug!("symptom seed `{seed}` not in embeddings; skipped");
                continue;
            }
            let si = emb.index_of(&seed);
            if norms[si] == 0.0 {
                continue;
            }
            let sv = emb.row(si);
            let mut scored: Vec<(f64, &str)> = (0..emb.len())
                .filter(|&j| j != si && norms[j] > 0.0)
                .filter_map(|j| {
                    let dot: f64 = sv.iter().zip(emb.row(j)).map(|(a, b)| a * b).sum();
                    let cos = dot / (norms[si] * norms[j]);
                    (cos >= tau).then(|| (cos, emb.words()[j].as_str()))
                })
                .collect();
            scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
            for (_, w) in scored.into_iter().take(k) {
                cat.keywords.insert(w);
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Antidepressants

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AntidepressantLexicon(PhraseSet);

impl AntidepressantLexicon {
    pub fn parse(text: &str) -> Self {
        AntidepressantLexicon(PhraseSet::new(
            text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')),
        ))
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_ANTIDEPRESSANTS)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::parse(&read(path.as_ref())?))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains(name)
    }

    pub fn count(&self, tokens: &[String]) -> usize {
        self.0.count_in(tokens)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

// ---------------------------------------------------------------------------

/// Every lexical resource the feature extractors need, minus embeddings.
#[derive(Debug, Clone)]
pub struct Lexicons {
    pub stopwords: Stopwords,
    pub emoji: EmojiLexicon,
    pub vad: VadLexicon,
    pub symptoms: SymptomLexicon,
    pub antidepressants: AntidepressantLexicon,
}

impl Lexicons {
    pub fn bundled() -> Self {
        Lexicons {
            stopwords: Stopwords::bundled(),
            emoji: EmojiLexicon::bundled(),
            vad: VadLexicon::bundled(),
            symptoms: SymptomLexicon::bundled(),
            antidepressants: AntidepressantLexicon::bundled(),
        }
    }

    /// Load from a directory laid out like `assets/`. Files that are absent
    /// fall back to the bundled copy.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        if !dir.is_dir() {
            return Err(Error::io(
                dir,
                std::io::Error::new(std::io::ErrorKind::NotFound, "asset directory not found"),
            ));
        }
        let pick = |name: &str| {
            let p = dir.join(name);
            p.exists().then_some(p)
        };
        Ok(Lexicons {
            stopwords: pick("stopwords.txt").map(Stopwords::load).transpose()?.unwrap_or_else(Stopwords::bundled),
            emoji: pick("emoji_sentiment.tsv").map(EmojiLexicon::load).transpose()?.unwrap_or_else(EmojiLexicon::bundled),
            vad: pick("vad_norms.csv").map(VadLexicon::load).transpose()?.unwrap_or_else(VadLexicon::bundled),
            symptoms: pick("symptoms.txt").map(SymptomLexicon::load).transpose()?.unwrap_or_else(SymptomLexicon::bundled),
            antidepressants: pick("antidepressants.txt")
                .map(AntidepressantLexicon::load)
                .transpose()?
                .unwrap_or_else(AntidepressantLexicon::bundled),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;


    fn toks(s: &str) -> Vec<String> {
        normalize_tokens(s)
    }

    #[test]
    fn embeddings_parse_and_unk() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "sad 0.1 0.2 0.3\nhappy -1 0 1e-2\nsad 9 9 9").unwrap();
        let t = load_embeddings(f.path()).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.dim(), 3);
        assert_eq!(t.lookup("sad"), &[0.1, 0.2, 0.3]);
        assert_eq!(t.lookup("qqqzzz"), &[0.0, 0.0, 0.0]);
        assert_eq!(t.index_of("qqqzzz"), t.unk_index());
    }

    #[test]
    fn embeddings_arity_error_names_line() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        let ok: Vec<String> = (0..100).map(|i| format!("{i}.0")).collect();
        let short: Vec<String> = (0..99).map(|i| format!("{i}.0")).collect();
        writeln!(f, "a {}\nb {}", ok.join(" "), short.join(" ")).unwrap();
        match EmbeddingTable::load_with_dim(f.path(), Some(100)) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn embeddings_write_roundtrip() {
        let t = EmbeddingTable::from_rows(
            2,
            vec![("x".to_string(), vec![0.1, 1.0 / 3.0]), ("y".to_string(), vec![-2.5, 1e-300])],
        )
        .unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        t.write(f.path()).unwrap();
        assert_eq!(load_embeddings(f.path()).unwrap(), t);
    }

    #[test]
    fn emoji_counts_and_polarities() {
        let lex = EmojiLexicon::bundled();
        assert!(lex.len() > 100);
        assert_eq!(lex.count("so sad 😞😞 but 😂 ❤️"), [2, 0, 2]);
        assert_eq!(lex.count("no emoji here"), [0, 0, 0]);
        let polarities: HashSet<Polarity> = lex.entries().map(|(_, p)| p).collect();
        assert_eq!(polarities.len(), 3);
    }

    #[test]
    fn vad_shipped_asset() {
        let v = VadLexicon::bundled();
        assert_eq!(v.len(), 1030);
        let sad = v.get("sad").unwrap();
        assert_eq!((sad.valence, sad.arousal, sad.dominance), (2.10, 3.80, 3.15));
    }

    #[test]
    fn symptom_lexicon_shape_and_phrases() {
        let s = SymptomLexicon::bundled();
        assert_eq!(s.categories().len(), 9);
        for (c, name) in s.categories().iter().zip(SYMPTOM_CATEGORIES) {
            assert_eq!(c.name, name);
            assert!(!c.keywords.is_empty());
        }
        let counts = s.count(&toks("I can't sleep, insomnia again and no energy. Insomnia!"));
        assert_eq!(counts[3], 3);
        assert_eq!(counts[5], 1);
    }

    #[test]
    fn antidepressants_cover_table() {
        let a = AntidepressantLexicon::bundled();
        for name in ["Prozac", "Zoloft", "Lexapro", "St. John's Wort", "5-HTP", "Clédial", "Levomilnac."] {
            assert!(a.contains(name), "{name}");
        }
        assert_eq!(a.count(&toks("started prozac today, PROZAC again")), 2);
        assert_eq!(a.count(&toks("tried st johns wort")), 1);
    }

    fn toy_table() -> EmbeddingTable {
        EmbeddingTable::from_rows(
            3,
            vec![
                ("insomnia".to_string(), vec![1.0, 0.0, 0.0]),
                ("sleeplessness".to_string(), vec![0.9, 0.1, 0.0]),
                ("awake".to_string(), vec![0.7, 0.7, 0.0]),
                ("banana".to_string(), vec![0.0, 0.0, 1.0]),
                ("tired".to_string(), vec![0.0, 1.0, 0.0]),
            ],
        )
        .unwrap()
    }

    fn brute_cosine(a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    }

    fn seed_lexicon(words: &[&str]) -> SymptomLexicon {
        let mut cats: Vec<SymptomCategory> = SYMPTOM_CATEGORIES
            .iter()
            .map(|n| SymptomCategory {
                name: n.to_string(),
                keywords: PhraseSet::new(["placeholder phrase"]),
            })
            .collect();
        for w in words {
            cats[3].keywords.insert(w);
        }
        SymptomLexicon::new(cats).unwrap()
    }

    #[test]
    fn expansion_matches_brute_force_cosine() {
        let emb = toy_table();
        let seeds = seed_lexicon(&["insomnia"]);
        let q = emb.lookup("insomnia");
        let mut oracle: Vec<(f64, &str)> = emb
            .words()
            .iter()
            .filter(|w| *w != "insomnia")
            .map(|w| (brute_cosine(q, emb.lookup(w)), w.as_str()))
            .filter(|(c, _)| *c >= 0.5)
            .collect();
        oracle.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        assert_eq!(oracle[0].1, "sleeplessness");

        let one = expand_symptom_lexicon(&seeds, &emb, 1, 0.5).unwrap();
        assert!(one.categories()[3].keywords.contains("sleeplessness"));
        assert!(!one.categories()[3].keywords.contains("awake"));
        let two = expand_symptom_lexicon(&seeds, &emb, 2, 0.5).unwrap();
        assert!(two.categories()[3].keywords.contains("awake"));
        assert!(!two.categories()[3].keywords.contains("banana"));
    }

    #[test]
    fn expansion_identities() {
        let emb = toy_table();
        let seeds = seed_lexicon(&["insomnia", "notinvocab"]);
        assert_eq!(expand_symptom_lexicon(&seeds, &emb, 0, 0.5).unwrap(), seeds);
        assert_eq!(expand_symptom_lexicon(&seeds, &emb, 5, 1.0).unwrap(), seeds);
        assert!(expand_symptom_lexicon(&seeds, &emb, 5, 1.5).is_err());
        let mut prev = seeds.clone();
        for k in 0..6 {
            let cur = expand_symptom_lexicon(&seeds, &emb, k, -1.0).unwrap();
            assert!(cur.is_superset(&prev));
            assert!(cur.is_superset(&seeds));
            prev = cur;
        }
    }
}
