//! Positive-unlabeled document set expansion without a class prior.
//!
//! Given a handful of labelled seed documents (LP) and a large unlabelled
//! collection (U), the toolkit scores every document in U by an estimate of
//! `log f_p(x) - log f(x)`, the log of the ratio between the positive-data
//! density and the whole-data density. That ratio is proportional to
//! `P(Y = 1 | x)`; the unknown proportionality constant (the class prior)
//! shifts every log-score equally and therefore never changes a ranking.
//!
//! Two density estimators back the scorer:
//!
//! * [`kde`]: Gaussian kernel density estimation (optionally on VAE-reduced
//!   vectors, see [`neural::vae`]).
//! * [`ebm`]: a pair of energy networks trained by maximum likelihood with
//!   Langevin-dynamics sampling plus an auxiliary LP-vs-U classification risk.
//!
//! [`baselines`] provides BM25 query-by-documents and nnPU for comparison, and
//! [`eval`] runs transductive experiments (train on LP ∪ U, evaluate on U).

pub mod baselines;
pub mod data;
pub mod ebm;
pub mod eval;
pub mod kde;
pub mod neural;

mod binio;
mod rng;

pub use data::{Corpus, EmbeddedDoc, PuTask, PuView, SynthSpec, Truth};
pub use eval::{MethodSpec, ScoreReport, ThresholdPolicy};
