//! Graph-kernel outcome prediction for drug prescriptions.
//!
//! The pipeline turns timestamped patient event records into patient graphs,
//! compares graphs with three graph kernels, and trains a small network on
//! the resulting kernel rows. The network's embedding is shaped by a
//! contrastive loss under either Euclidean or cosine distance, and its
//! sigmoid head predicts treatment failure.
//!
//! | module | role |
//! |---|---|
//! | [`ehr`] | event records, disease definitions, outcome labeling |
//! | [`graph`] | patient graphs |
//! | [`kernels`] | WL subtree, temporal topological and vertex histogram kernels; Gram matrices |
//! | [`net`] | embedding network, losses, Adamax training, prediction |
//! | [`synth`] | seeded synthetic cohorts and class rebalancing |
//! | [`eval`] | cross-validation, metrics, t-tests, baselines, reports |
//! | [`cli`] | the command-line pipeline behind the `rxkernel` binary |

pub mod cli;
pub mod ehr;
pub mod error;
pub mod eval;
pub mod graph;
pub mod kernels;
pub mod net;
pub mod synth;

pub use error::{Error, Result};
