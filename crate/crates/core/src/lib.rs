//! Tooling for diachronic language-model evaluation on tweet corpora.
//!
//! The crate covers the pipeline around model training: collecting and
//! cleaning time-stamped corpora ([`corpus`], [`cleaning`]), the quarterly
//! model registry and mode resolution ([`temporal`]), pseudo-log-likelihood
//! scoring against pluggable masked-LM backends ([`scoring`]), and the
//! degradation analytics built on top of pseudo-perplexity matrices
//! ([`analysis`]). The [`cli`] module wires them into the `diachron` binary.

pub mod analysis;
pub mod cleaning;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod error;
pub mod numeric;
pub mod prng;
pub mod scoring;
pub mod temporal;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/corpus.md")]
    mod corpus {}
    #[doc = include_str!("../../../book/src/cleaning.md")]
    mod cleaning {}
    #[doc = include_str!("../../../book/src/registry.md")]
    mod registry {}
    #[doc = include_str!("../../../book/src/scoring.md")]
    mod scoring {}
    #[doc = include_str!("../../../book/src/analysis.md")]
    mod analysis {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
