use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::distance::{distance, distance_grad};
use super::model::{EmbedNet, KernelRows};
use super::{Metric, NetConfig};
use crate::error::{Error, Result};

/// Probabilities are clipped to `[PROB_CLIP, 1 - PROB_CLIP]` before taking logs.
pub const PROB_CLIP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub contrastive: f64,
    pub crossentropy: f64,
    pub joint: f64,
}

fn check_labels(n: usize, labels: &[u8]) -> Result<()> {
    if labels.len() != n {
        return Err(Error::Shape {
            expected: n,
            got: labels.len(),
        });
    }
    if n == 0 {
        return Err(Error::invalid("empty batch"));
    }
    Ok(())
}

/// Contrastive loss over all ordered pairs of the batch, diagonal included:
///
/// `(1/B) sum_i sum_j (1 - Y_ij) max(0, lambda - D_ij)^2 + Y_ij D_ij`
///
/// where `Y_ij = 1` when the labels match. Similar pairs pay the plain
/// distance, dissimilar pairs a squared hinge.
pub fn contrastive_loss(
    embeddings: ArrayView2<f64>,
    labels: &[u8],
    lambda: f64,
    metric: Metric,
) -> Result<f64> {
    Ok(contrastive_impl(embeddings, labels, lambda, metric, None, false)?.0)
}

/// Per-pair derivative `dL/dD` for one ordered pair (before the `1/B` factor).
fn pair_terms(same: bool, d: f64, lambda: f64) -> (f64, f64) {
    if same {
        (d, 1.0)
    } else {
        let hinge = (lambda - d).max(0.0);
        (hinge * hinge, -2.0 * hinge)
    }
}

/// Value and, when requested, gradient with respect to each embedding row.
/// `include[[i, j]] == false` drops the pair (used to skip hinge kinks).
pub(crate) fn contrastive_impl(
    emb: ArrayView2<f64>,
    labels: &[u8],
    lambda: f64,
    metric: Metric,
    include: Option<&Array2<bool>>,
    want_grad: bool,
) -> Result<(f64, Option<Array2<f64>>)> {
    let b = emb.nrows();
    check_labels(b, labels)?;
    if lambda.is_nan() || lambda <= 0.0 {
        return Err(Error::invalid("margin lambda must be positive"));
    }
    if metric == Metric::Cosine && emb.rows().into_iter().any(|r| r.dot(&r) == 0.0) {
        return Err(Error::ZeroNorm);
    }
    let scale = 1.0 / b as f64;
    let mut total = 0.0;
    let mut grad = want_grad.then(|| Array2::<f64>::zeros(emb.raw_dim()));
    for i in 0..b {
        for j in (i + 1)..b {
            if include.is_some_and(|m| !m[[i, j]]) {
                continue;
            }
            let (ei, ej) = (emb.row(i), emb.row(j));
            let d = distance(metric, ei, ej)?;
            let (value, dl_dd) = pair_terms(labels[i] == labels[j], d, lambda);
            // (i, j) and (j, i) contribute identically
            total += 2.0 * value;
            if let Some(g) = grad.as_mut() {
                let (gi, gj) = distance_grad(metric, ei, ej)?;
                let coef = 2.0 * scale * dl_dd;
                g.row_mut(i).scaled_add(coef, &gi);
                g.row_mut(j).scaled_add(coef, &gj);
            }
        }
    }
    Ok((total * scale, grad))
}

/// Pairs whose distance sits within `band` of the margin.
pub(crate) fn hinge_kinks(
    emb: ArrayView2<f64>,
    labels: &[u8],
    lambda: f64,
    metric: Metric,
    band: f64,
) -> Result<Array2<bool>> {
    let b = emb.nrows();
    let mut include = Array2::from_elem((b, b), true);
    for i in 0..b {
        for j in (i + 1)..b {
            if labels[i] != labels[j] {
                let d = distance(metric, emb.row(i), emb.row(j))?;
                if (lambda - d).abs() < band {
                    include[[i, j]] = false;
                    include[[j, i]] = false;
                }
            }
        }
    }
    Ok(include)
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn clip(p: f64) -> f64 {
    p.clamp(PROB_CLIP, 1.0 - PROB_CLIP)
}

/// `-(1/B) sum_i [y_i ln p_i + (1 - y_i) ln(1 - p_i)]` with clipped probabilities.
pub fn binary_cross_entropy(probs: &[f64], labels: &[u8]) -> Result<f64> {
    check_labels(probs.len(), labels)?;
    let sum: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = clip(p);
            if y == 1 {
                p.ln()
            } else {
                (1.0 - p).ln()
            }
        })
        .sum();
    Ok(-sum / probs.len() as f64)
}

/// Cross-entropy from logits; returns the loss and `dL/dlogit`.
pub(crate) fn bce_from_logits(logits: ArrayView1<f64>, labels: &[u8]) -> Result<(f64, Array1<f64>)> {
    let probs: Vec<f64> = logits.iter().map(|&s| sigmoid(s)).collect();
    let loss = binary_cross_entropy(&probs, labels)?;
    let scale = 1.0 / probs.len() as f64;
    let grad = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            if clip(p) != p {
                0.0
            } else {
                (p - y as f64) * scale
            }
        })
        .collect();
    Ok((loss, grad))
}

/// Both loss terms on one shared forward pass.
pub fn joint_loss(
    net: &EmbedNet,
    rows: &KernelRows,
    labels: &[u8],
    config: &NetConfig,
) -> Result<LossParts> {
    let fwd = net.forward(rows)?;
    check_labels(fwd.emb.nrows(), labels)?;
    let contrastive = contrastive_loss(fwd.emb.view(), labels, config.margin_lambda, config.metric)?;
    let (crossentropy, _) = bce_from_logits(fwd.logits.view(), labels)?;
    Ok(LossParts {
        contrastive,
        crossentropy,
        joint: contrastive + crossentropy,
    })
}
