//! Truth-probe laboratory.
//!
//! Generates labeled statement datasets and their negations, trains a small
//! decoder-only transformer to obtain hidden-state embeddings, persists them
//! in a bit-exact store format, and trains two kinds of probes on top:
//! supervised feed-forward classifiers and unsupervised Contrast-Consistent
//! Search (CCS) probes. Planted-geometry stores give ground truth for what a
//! probe can and cannot recover.

pub mod ccs;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod lm;
pub mod optim;
pub mod probe;
pub mod rng;
pub mod store;

pub use error::{Error, Result};
