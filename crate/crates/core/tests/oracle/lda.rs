//! Textbook collapsed Gibbs sampler for LDA with symmetric priors.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct ReferenceLda {
    pub vocab: Vec<String>,
    /// `phi[t][w]`, smoothed topic-word distributions.
    pub phi: Vec<Vec<f64>>,
    /// `theta[d][t]`, smoothed document-topic distributions.
    pub theta: Vec<Vec<f64>>,
}

pub fn reference_lda(docs: &[Vec<String>], k: usize, alpha: f64, beta: f64, iterations: usize, seed: u64) -> ReferenceLda {
    let mut ids = BTreeMap::new();
    for w in docs.iter().flatten() {
        let next = ids.len();
        ids.entry(w.clone()).or_insert(next);
    }
    let v = ids.len();
    let words: Vec<Vec<usize>> = docs.iter().map(|d| d.iter().map(|w| ids[w]).collect()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut n_dt = vec![vec![0usize; k]; docs.len()];
    let mut n_tw = vec![vec![0usize; v]; k];
    let mut n_t = vec![0usize; k];
    let mut z: Vec<Vec<usize>> = words
        .iter()
        .enumerate()
        .map(|(d, ws)| {
            ws.iter()
                .map(|&w| {
                    let t = rng.random_range(0..k);
                    n_dt[d][t] += 1;
                    n_tw[t][w] += 1;
                    n_t[t] += 1;
                    t
                })
                .collect()
        })
        .collect();
    let mut p = vec![0.0; k];
    for _ in 0..iterations {
        for (d, ws) in words.iter().enumerate() {
            for (i, &w) in ws.iter().enumerate() {
                let old = z[d][i];
                n_dt[d][old] -= 1;
                n_tw[old][w] -= 1;
                n_t[old] -= 1;
                for t in 0..k {
                    p[t] = (n_dt[d][t] as f64 + alpha) * (n_tw[t][w] as f64 + beta) / (n_t[t] as f64 + v as f64 * beta);
                }
                let total: f64 = p.iter().sum();
                let mut u = rng.random::<f64>() * total;
                let mut new = k - 1;
                for (t, &pt) in p.iter().enumerate() {
                    if u < pt {
                        new = t;
                        break;
                    }
                    u -= pt;
                }
                z[d][i] = new;
                n_dt[d][new] += 1;
                n_tw[new][w] += 1;
                n_t[new] += 1;
            }
        }
    }
    let phi = (0..k)
        .map(|t| (0..v).map(|w| (n_tw[t][w] as f64 + beta) / (n_t[t] as f64 + v as f64 * beta)).collect())
        .collect();
    let theta = n_dt
        .iter()
        .map(|row| {
            let n: usize = row.iter().sum();
            row.iter().map(|&c| (c as f64 + alpha) / (n as f64 + k as f64 * alpha)).collect()
        })
        .collect();
    let mut vocab = vec![String::new(); v];
    for (w, i) in ids {
        vocab[i] = w;
    }
    ReferenceLda { vocab, phi, theta }
}

/// `mass[t][j]`: probability topic `t` puts on the words of theme `j`.
pub fn theme_mass(phi: &[Vec<f64>], vocab: &[String], themes: &[Vec<String>]) -> Vec<Vec<f64>> {
    phi.iter()
        .map(|row| {
            themes
                .iter()
                .map(|theme| vocab.iter().zip(row).filter(|(w, _)| theme.contains(w)).map(|(_, p)| p).sum())
                .collect()
        })
        .collect()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

/// Best one-to-one topic-to-theme matching. Returns the mean matched mass
/// (purity) and `assign[t]`, the theme matched to topic `t`.
pub fn purity(mass: &[Vec<f64>]) -> (f64, Vec<usize>) {
    let k = mass.len();
    permutations(k)
        .into_iter()
        .map(|perm| {
            let score = perm.iter().enumerate().map(|(t, &j)| mass[t][j]).sum::<f64>() / k as f64;
            (score, perm)
        })
        .fold((f64::NEG_INFINITY, Vec::new()), |best, cur| if cur.0 > best.0 { cur } else { best })
}

/// Corpus of `per_theme` documents for each theme, every token drawn from its
/// document's theme.
pub fn planted_corpus(themes: &[Vec<String>], per_theme: usize, doc_len: usize, seed: u64) -> Vec<Vec<String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut docs = Vec::new();
    for d in 0..themes.len() * per_theme {
        let theme = &themes[d % themes.len()];
        docs.push((0..doc_len).map(|_| theme[rng.random_range(0..theme.len())].clone()).collect());
    }
    docs
}

pub fn themes() -> Vec<Vec<String>> {
    [
        ["ocean", "wave", "sail", "harbor", "anchor", "tide", "reef", "shore", "gull", "mast"],
        ["engine", "piston", "gear", "bolt", "wrench", "valve", "torque", "axle", "clutch", "rotor"],
        ["violin", "cello", "sonata", "chord", "tempo", "melody", "choir", "flute", "opera", "rhythm"],
    ]
    .iter()
    .map(|t| t.iter().map(|w| w.to_string()).collect())
    .collect()
}
