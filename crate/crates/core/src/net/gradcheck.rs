use super::loss::hinge_kinks;
use super::model::{EmbedNet, KernelRows};
use crate::error::{Error, Result};

/// `|a - n| / max(1e-8, |a| + |n|)`.
pub fn relative_deviation(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Largest relative deviation between `analytic` and central differences of `f`.
pub fn finite_difference_deviation(
    params: &[f64],
    analytic: &[f64],
    epsilon: f64,
    mut f: impl FnMut(&[f64]) -> Result<f64>,
) -> Result<f64> {
    if analytic.len() != params.len() {
        return Err(Error::Shape {
            expected: params.len(),
            got: analytic.len(),
        });
    }
    let mut probe = params.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        probe[i] = params[i] + epsilon;
        let up = f(&probe)?;
        probe[i] = params[i] - epsilon;
        let down = f(&probe)?;
        probe[i] = params[i];
        let numeric = (up - down) / (2.0 * epsilon);
        if !numeric.is_finite() || !analytic[i].is_finite() {
            return Err(Error::NonFiniteGradient);
        }
        worst = worst.max(relative_deviation(analytic[i], numeric));
    }
    Ok(worst)
}

/// Compares the hand-derived gradient of the joint loss with central
/// differences over every parameter.
///
/// Dissimilar pairs whose distance lies within `10 * epsilon` of the margin
/// sit on the hinge kink and are left out of both sides of the comparison.
pub fn gradient_check(
    net: &EmbedNet,
    rows: &KernelRows,
    labels: &[u8],
    epsilon: f64,
) -> Result<f64> {
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(Error::invalid(format!("epsilon {epsilon} outside [1e-7, 1e-3]")));
    }
    let cfg = net.config().clone();
    let emb = net.embed_rows(rows)?;
    let include = hinge_kinks(emb.view(), labels, cfg.margin_lambda, cfg.metric, 10.0 * epsilon)?;
    let (_, analytic) = net.loss_and_gradient(rows, labels, Some(&include))?;
    let n_inputs = net.n_inputs();
    let mut probe = net.clone();
    finite_difference_deviation(net.params(), &analytic, epsilon, |p| {
        probe.params_mut().copy_from_slice(p);
        debug_assert_eq!(probe.n_inputs(), n_inputs);
        probe.loss_only(rows, labels, Some(&include))
    })
}
