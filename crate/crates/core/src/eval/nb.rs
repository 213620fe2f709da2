use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Label, Stopwords, UserRecord};
use crate::error::{Error, Result};
use crate::features::user_document;

/// Multinomial Naive Bayes over bag-of-words counts with add-one smoothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbModel {
    vocab: BTreeMap<String, usize>,
    log_prior: [f64; 2],
    /// Per class, log P(word | class) in vocabulary order.
    log_lik: [Vec<f64>; 2],
}

/// Fit on `(tokens, label)` documents; both classes must be present.
pub fn nb_train(docs: &[(Vec<String>, Label)]) -> Result<NbModel> {
    let mut n_docs = [0usize; 2];
    for (_, l) in docs {
        n_docs[l.index()] += 1;
    }
    if n_docs.contains(&0) {
        return Err(Error::invalid("Naive Bayes needs training documents of both classes"));
    }
    let vocab: BTreeMap<String, usize> = docs
        .iter()
        .flat_map(|(d, _)| d.iter().cloned())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, w)| (w, i))
        .collect();
    let v = vocab.len();
    let mut counts = [vec![0u64; v], vec![0u64; v]];
    for (d, l) in docs {
        for w in d {
            counts[l.index()][vocab[w]] += 1;
        }
    }
    let total = docs.len() as f64;
    let lik = |c: &Vec<u64>| {
        let denom = (c.iter().sum::<u64>() as usize + v) as f64;
        c.iter().map(|&n| ((n + 1) as f64 / denom).ln()).collect::<Vec<_>>()
    };
    Ok(NbModel {
        log_prior: [(n_docs[0] as f64 / total).ln(), (n_docs[1] as f64 / total).ln()],
        log_lik: [lik(&counts[0]), lik(&counts[1])],
        vocab,
    })
}

/// Fit on users, one document per user built with the shared preprocessing.
pub fn nb_train_users(users: &[UserRecord], stopwords: &Stopwords) -> Result<NbModel> {
    let docs: Vec<_> = users.iter().map(|u| (user_document(u, stopwords), u.label)).collect();
    nb_train(&docs)
}

impl NbModel {
    /// Unnormalized log joint `log P(c) + sum log P(w|c)`; unseen words are skipped.
    pub fn log_joint(&self, doc: &[String]) -> [f64; 2] {
        let mut s = self.log_prior;
        for w in doc {
            if let Some(&i) = self.vocab.get(w) {
                s[0] += self.log_lik[0][i];
                s[1] += self.log_lik[1][i];
            }
        }
        s
    }

    /// Normalized posterior `[P(0 | doc), P(1 | doc)]`.
    pub fn posterior(&self, doc: &[String]) -> [f64; 2] {
        let [a, b] = self.log_joint(doc);
        let m = a.max(b);
        let (ea, eb) = ((a - m).exp(), (b - m).exp());
        [ea / (ea + eb), eb / (ea + eb)]
    }

    /// Arg-max class; exact ties go to label 0.
    pub fn predict(&self, doc: &[String]) -> Label {
        let [a, b] = self.log_joint(doc);
        if b > a {
            Label::Depressed
        } else {
            Label::NotDepressed
        }
    }

    pub fn predict_user(&self, user: &UserRecord, stopwords: &Stopwords) -> Label {
        self.predict(&user_document(user, stopwords))
    }
}
