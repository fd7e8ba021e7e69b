use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adamax::Adamax;
use super::loss::LossParts;
use super::model::{EmbedNet, KernelRows};
use super::NetConfig;
use crate::error::{Error, Result};
use crate::kernels::GramMatrix;

/// Minimum drop in epoch-mean joint loss that counts as improvement.
pub const EARLY_STOP_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxEpochs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    /// Mean over minibatches, one entry per completed epoch.
    pub epochs: Vec<LossParts>,
    pub stop_epoch: usize,
    pub stop_reason: StopReason,
}

impl TrainTrace {
    pub fn first(&self) -> Option<&LossParts> {
        self.epochs.first()
    }

    pub fn last(&self) -> Option<&LossParts> {
        self.epochs.last()
    }
}

/// Trains on three N x N Gram matrices (WL, temporal, vertex histogram).
pub fn train(
    grams: [&GramMatrix; 3],
    labels: &[u8],
    config: &NetConfig,
) -> Result<(EmbedNet, TrainTrace)> {
    let rows = KernelRows::new(grams[0].values.view(), grams[1].values.view(), grams[2].values.view())?;
    if rows.len() != rows.width() {
        return Err(Error::invalid("training Gram matrices must be square"));
    }
    train_on_rows(&rows, labels, config)
}

/// Trains on arbitrary kernel rows: one row per training case, columns
/// indexing the reference set the network will be applied against.
pub fn train_on_rows(
    rows: &KernelRows,
    labels: &[u8],
    config: &NetConfig,
) -> Result<(EmbedNet, TrainTrace)> {
    config.validate()?;
    let n = rows.len();
    if labels.len() != n {
        return Err(Error::Shape {
            expected: n,
            got: labels.len(),
        });
    }
    if n < 2 {
        return Err(Error::invalid("training needs at least two cases"));
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::invalid("labels must be 0 or 1"));
    }
    if labels.iter().all(|&y| y == labels[0]) {
        return Err(Error::SingleClass);
    }

    let mut net = EmbedNet::new(config.clone(), rows.width())?;
    let mut opt = Adamax::new(config.learning_rate, net.params().len());
    // Separate stream from parameter init so batch order does not depend on layer sizes.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = TrainTrace {
        epochs: Vec::new(),
        stop_epoch: 0,
        stop_reason: StopReason::MaxEpochs,
    };
    let mut best = f64::INFINITY;
    let mut stale = 0;

    for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        let mut sum = LossParts {
            contrastive: 0.0,
            crossentropy: 0.0,
            joint: 0.0,
        };
        let mut batches = 0;
        for chunk in order.chunks(config.batch_size) {
            let [wl, tp, vh] = rows.select(chunk);
            let batch = KernelRows::new(wl.view(), tp.view(), vh.view())?;
            let batch_labels: Vec<u8> = chunk.iter().map(|&i| labels[i]).collect();
            let (loss, grad) = net.loss_and_gradient(&batch, &batch_labels, None)?;
            if !loss.joint.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch });
            }
            opt.update(net.params_mut(), &grad);
            sum.contrastive += loss.contrastive;
            sum.crossentropy += loss.crossentropy;
            sum.joint += loss.joint;
            batches += 1;
        }
        let k = batches as f64;
        let mean = LossParts {
            contrastive: sum.contrastive / k,
            crossentropy: sum.crossentropy / k,
            joint: sum.joint / k,
        };
        trace.epochs.push(mean);
        trace.stop_epoch = epoch + 1;
        if mean.joint < best - EARLY_STOP_TOLERANCE {
            best = mean.joint;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.early_stop_patience {
                trace.stop_reason = StopReason::Converged;
                break;
            }
        }
    }
    log::debug!(
        "training stopped after {} epochs ({:?})",
        trace.stop_epoch,
        trace.stop_reason
    );
    Ok((net, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{predict, Metric};
    use ndarray::Array2;

    /// Two well-separated clusters of kernel rows.
    fn separable(n: usize) -> (Array2<f64>, Vec<u8>) {
        let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let rows = Array2::from_shape_fn((n, n), |(i, j)| {
            if labels[i] == labels[j] {
                0.9 + 0.1 * (((i * 7 + j * 3) % 5) as f64 / 5.0)
            } else {
                0.1 * (((i + j) % 3) as f64 / 3.0)
            }
        });
        (rows, labels)
    }

    fn small(metric: Metric, seed: u64) -> NetConfig {
        NetConfig {
            embed_dim_per_kernel: 16,
            fusion_dim: 8,
            classifier_dim: 8,
            metric,
            learning_rate: 1e-3,
            batch_size: 16,
            max_epochs: 150,
            early_stop_patience: 20,
            seed,
            ..NetConfig::default()
        }
    }

    #[test]
    fn loss_decreases_and_fits_separable_rows() {
        let (x, y) = separable(40);
        let rows = KernelRows::new(x.view(), x.view(), x.view()).unwrap();
        for metric in [Metric::Euclidean, Metric::Cosine] {
            let (net, trace) = train_on_rows(&rows, &y, &small(metric, 3)).unwrap();
            let first = trace.first().unwrap().joint;
            let last = trace.last().unwrap().joint;
            assert!(last < 0.5 * first, "{metric}: {first} -> {last}");
            let preds = predict(&net, &rows).unwrap();
            assert!(preds.iter().zip(&y).all(|(p, &t)| p.label == t), "{metric}");
        }
    }

    #[test]
    fn zero_epochs_returns_initial_net() {
        let (x, y) = separable(10);
        let rows = KernelRows::new(x.view(), x.view(), x.view()).unwrap();
        let cfg = NetConfig {
            max_epochs: 0,
            ..small(Metric::Euclidean, 1)
        };
        let (net, trace) = train_on_rows(&rows, &y, &cfg).unwrap();
        assert!(trace.epochs.is_empty());
        assert_eq!(trace.stop_reason, StopReason::MaxEpochs);
        assert_eq!(net, EmbedNet::new(cfg, 10).unwrap());
    }

    #[test]
    fn same_seed_same_parameters() {
        let (x, y) = separable(20);
        let rows = KernelRows::new(x.view(), x.view(), x.view()).unwrap();
        let cfg = NetConfig {
            max_epochs: 20,
            ..small(Metric::Cosine, 9)
        };
        let a = train_on_rows(&rows, &y, &cfg).unwrap();
        let b = train_on_rows(&rows, &y, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_class_is_rejected() {
        let (x, _) = separable(6);
        let rows = KernelRows::new(x.view(), x.view(), x.view()).unwrap();
        assert!(matches!(
            train_on_rows(&rows, &[1; 6], &small(Metric::Euclidean, 0)),
            Err(Error::SingleClass)
        ));
    }
}
