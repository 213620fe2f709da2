//! Multi-modal hierarchical attention network (MDHAN) for detecting
//! depression signals in social-media user timelines.
//!
//! The crate is organised bottom-up:
//!
//! * [`corpus`] loads, cleans, filters, splits and synthesizes labelled timelines.
//! * [`lexicons`] holds embeddings and the affect / symptom / medication word lists.
//! * [`topics`] fits LDA by collapsed Gibbs sampling.
//! * [`features`] builds the 76-dimensional multi-modal user vector.
//! * [`autodiff`] is a small reverse-mode tape with Adam and gradient checking.
//! * [`model`] is the hierarchical word/tweet attention encoder fused with the
//!   modality MLP, plus the training loop and checkpoint format.
//! * [`pipeline`] wires corpus, lexicons, topics and features into model inputs.
//! * [`eval`] has metrics, the ablation and tweet-count experiments, and the
//!   naive Bayes baseline.
//! * [`explain`] exports attention explanations and symptom word clouds.
//!
//! Data-parallel loops (per-user feature extraction, per-user gradients inside a
//! mini-batch, evaluation, ablation fan-out) go through [`exec::ExecMode`]. With
//! the `parallel` feature they run on rayon; results are always reduced in input
//! order so both modes produce bit-identical output.

pub mod autodiff;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod exec;
pub mod explain;
pub mod features;
pub mod lexicons;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod topics;

pub use error::{Error, Result};
