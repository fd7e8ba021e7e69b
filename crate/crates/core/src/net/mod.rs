//! Fused kernel-embedding network trained with contrastive + cross-entropy loss.
//!
//! Each case is represented by its three kernel rows (similarity to every
//! training case under the WL, temporal and vertex-histogram kernels). The
//! network maps each row through its own affine layer and a rectifier,
//! concatenates the three, and projects the result to a fusion embedding.
//! A single sigmoid unit on the embedding gives the failure probability.
//!
//! Training minimizes `contrastive(embeddings) + bce(probabilities)` over
//! minibatches with Adamax. Gradients are derived by hand for this fixed
//! architecture.

mod adamax;
mod distance;
mod gradcheck;
mod io;
mod loss;
mod model;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use adamax::Adamax;
pub use distance::{cosine_distance, euclidean_distance};
pub use gradcheck::{finite_difference_deviation, gradient_check, relative_deviation};
pub use io::{read_model, read_trace_csv, write_model, write_trace_csv, MODEL_MAGIC, MODEL_VERSION};
pub use loss::{binary_cross_entropy, contrastive_loss, joint_loss, LossParts, PROB_CLIP};
pub use model::{forward_embed, predict, EmbedNet, KernelRows, Prediction};
pub use train::{train, train_on_rows, StopReason, TrainTrace, EARLY_STOP_TOLERANCE};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Euclidean,
    Cosine,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Euclidean => "euclidean",
            Metric::Cosine => "cosine",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "cosine" => Ok(Metric::Cosine),
            _ => Err(Error::invalid(format!("unknown metric {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub embed_dim_per_kernel: usize,
    pub fusion_dim: usize,
    /// Width of the sigmoid classifier's input; equals `fusion_dim`.
    pub classifier_dim: usize,
    pub margin_lambda: f64,
    pub metric: Metric,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub seed: u64,
}

impl Default for NetConfig {
    /// Desk-scale widths (64/16/16) with the published optimizer settings.
    fn default() -> Self {
        Self {
            embed_dim_per_kernel: 64,
            fusion_dim: 16,
            classifier_dim: 16,
            margin_lambda: 1.0,
            metric: Metric::Euclidean,
            learning_rate: 1e-4,
            batch_size: 64,
            max_epochs: 1000,
            early_stop_patience: 50,
            seed: 0,
        }
    }
}

impl NetConfig {
    /// Published widths: 5000 per kernel, 50 fusion, 50 classifier.
    pub fn published_scale() -> Self {
        Self {
            embed_dim_per_kernel: 5000,
            fusion_dim: 50,
            classifier_dim: 50,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim_per_kernel == 0 || self.fusion_dim == 0 || self.classifier_dim == 0 {
            return Err(Error::invalid("network dimensions must be at least 1"));
        }
        if self.classifier_dim != self.fusion_dim {
            return Err(Error::invalid(format!(
                "classifier_dim {} must equal fusion_dim {}",
                self.classifier_dim, self.fusion_dim
            )));
        }
        if !(self.margin_lambda > 0.0 && self.margin_lambda.is_finite()) {
            return Err(Error::invalid("margin_lambda must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        if self.early_stop_patience == 0 {
            return Err(Error::invalid("early_stop_patience must be positive"));
        }
        Ok(())
    }
}
