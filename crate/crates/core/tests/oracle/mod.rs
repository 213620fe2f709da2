//! Independent reference implementations used as test oracles.
//!
//! Nothing here calls into the library's numeric code. Each oracle is a
//! direct, unoptimised transcription of the definition it checks against.
#![allow(dead_code)]

pub mod bayes;
pub mod lda;
pub mod primitives;
