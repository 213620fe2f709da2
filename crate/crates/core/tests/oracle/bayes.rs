//! Brute-force Bayes for a multinomial Naive Bayes model with add-one smoothing.

use std::collections::BTreeSet;

/// Posterior over classes `0..n_classes` for `query`, computed by multiplying
/// raw probabilities token by token and normalising over all classes.
pub fn brute_force_posterior(train: &[(Vec<&str>, usize)], n_classes: usize, query: &[&str]) -> Vec<f64> {
    let vocab: BTreeSet<&str> = train.iter().flat_map(|(d, _)| d.iter().copied()).collect();
    let joint: Vec<f64> = (0..n_classes)
        .map(|c| {
            let docs: Vec<&Vec<&str>> = train.iter().filter(|(_, l)| *l == c).map(|(d, _)| d).collect();
            let prior = docs.len() as f64 / train.len() as f64;
            let total: usize = docs.iter().map(|d| d.len()).sum();
            let mut p = prior;
            for w in query.iter().filter(|w| vocab.contains(*w)) {
                let count = docs.iter().map(|d| d.iter().filter(|t| *t == w).count()).sum::<usize>();
                p *= (count as f64 + 1.0) / (total as f64 + vocab.len() as f64);
            }
            p
        })
        .collect();
    let z: f64 = joint.iter().sum();
    joint.iter().map(|p| p / z).collect()
}
