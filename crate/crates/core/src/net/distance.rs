use ndarray::{Array1, ArrayView1};

use super::Metric;
use crate::error::{Error, Result};

/// `1 - <a, b> / (|a| |b|)`, clamped to `[0, 2]`.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a, b)?;
    cosine(ArrayView1::from(a), ArrayView1::from(b))
}

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a, b)?;
    Ok(euclidean(ArrayView1::from(a), ArrayView1::from(b)))
}

fn check_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(())
}

pub(crate) fn euclidean(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub(crate) fn cosine(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Result<f64> {
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((1.0 - a.dot(&b) / (na * nb)).clamp(0.0, 2.0))
}

pub(crate) fn distance(metric: Metric, a: ArrayView1<f64>, b: ArrayView1<f64>) -> Result<f64> {
    match metric {
        Metric::Euclidean => Ok(euclidean(a, b)),
        Metric::Cosine => cosine(a, b),
    }
}

/// Gradients of `D(a, b)` with respect to `a` and `b`.
///
/// Euclidean distance has no gradient at `a == b`; zero is used there.
pub(crate) fn distance_grad(
    metric: Metric,
    a: ArrayView1<f64>,
    b: ArrayView1<f64>,
) -> Result<(Array1<f64>, Array1<f64>)> {
    match metric {
        Metric::Euclidean => {
            let diff = &a - &b;
            let d = diff.dot(&diff).sqrt();
            if d == 0.0 {
                return Ok((Array1::zeros(a.len()), Array1::zeros(a.len())));
            }
            let ga = diff / d;
            let gb = -&ga;
            Ok((ga, gb))
        }
        Metric::Cosine => {
            let na = a.dot(&a).sqrt();
            let nb = b.dot(&b).sqrt();
            if na == 0.0 || nb == 0.0 {
                return Err(Error::ZeroNorm);
            }
            let sim = a.dot(&b) / (na * nb);
            // d(1 - sim)/da = -(b / (na nb) - sim a / na^2)
            let ga = &a * (sim / (na * na)) - &b / (na * nb);
            let gb = &b * (sim / (nb * nb)) - &a / (na * nb);
            Ok((ga, gb))
        }
    }
}
