//! Linear baselines on bag-of-codes features.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::folds::FoldPlan;
use crate::ehr::LabeledCase;
use crate::error::{Error, Result};
use crate::net::Prediction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    /// Weight on the data term; the L2 penalty is `||w||^2 / 2`.
    pub c: f64,
    pub lr_iterations: usize,
    /// Passes over the training set for the SVM's stochastic subgradient steps.
    pub svm_epochs: usize,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            lr_iterations: 500,
            svm_epochs: 50,
            seed: 0,
        }
    }
}

/// Code vocabulary learned from training cases; unseen codes are dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeVocabulary {
    index: BTreeMap<String, usize>,
}

impl CodeVocabulary {
    pub fn fit<'a>(cases: impl IntoIterator<Item = &'a LabeledCase>) -> Self {
        let mut index = BTreeMap::new();
        for case in cases {
            for e in &case.record.events {
                let next = index.len();
                index.entry(e.code.clone()).or_insert(next);
            }
        }
        Self { index }
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// L2-normalized code counts.
    pub fn features(&self, case: &LabeledCase) -> Vec<f64> {
        let mut x = vec![0.0; self.len()];
        for e in &case.record.events {
            if let Some(&j) = self.index.get(&e.code) {
                x[j] += 1.0;
            }
        }
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            x.iter_mut().for_each(|v| *v /= norm);
        }
        x
    }
}

/// Linear scorer `w . x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearModel {
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    /// Sigmoid of the margin, thresholded at 0.5.
    pub fn predict(&self, x: &[f64]) -> Prediction {
        let probability = 1.0 / (1.0 + (-self.margin(x)).exp());
        Prediction {
            probability,
            label: u8::from(probability >= 0.5),
        }
    }
}

fn check(x: &[Vec<f64>], y: &[u8]) -> Result<usize> {
    if x.len() != y.len() {
        return Err(Error::Shape { expected: x.len(), got: y.len() });
    }
    if x.is_empty() {
        return Err(Error::invalid("baseline needs training cases"));
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d) {
        return Err(Error::invalid("ragged feature rows"));
    }
    Ok(d)
}

/// L2-regularized logistic regression by full-batch gradient descent on
/// `||w||^2 / 2 + c * sum log-loss` (bias unpenalized).
pub fn train_logistic(x: &[Vec<f64>], y: &[u8], cfg: &BaselineConfig) -> Result<LinearModel> {
    let d = check(x, y)?;
    let n = x.len() as f64;
    // Rows have unit norm, so the objective's gradient is (1 + c n / 4)-Lipschitz.
    let step = 1.0 / (1.0 + cfg.c * (n + 1.0) / 4.0);
    let mut m = LinearModel { weights: vec![0.0; d], bias: 0.0 };
    let mut gw = vec![0.0; d];
    for _ in 0..cfg.lr_iterations {
        gw.copy_from_slice(&m.weights);
        let mut gb = 0.0;
        for (xi, &yi) in x.iter().zip(y) {
            let p = 1.0 / (1.0 + (-m.margin(xi)).exp());
            let r = cfg.c * (p - f64::from(yi));
            for (g, v) in gw.iter_mut().zip(xi) {
                *g += r * v;
            }
            gb += r;
        }
        for (w, g) in m.weights.iter_mut().zip(&gw) {
            *w -= step * g;
        }
        m.bias -= step * gb;
    }
    Ok(m)
}

/// Linear SVM by Pegasos-style stochastic subgradient descent on
/// `||w||^2 / 2 + c * sum hinge`. The bias is an extra constant feature.
pub fn train_linear_svm(x: &[Vec<f64>], y: &[u8], cfg: &BaselineConfig) -> Result<LinearModel> {
    let d = check(x, y)?;
    let n = x.len();
    let lambda = 1.0 / (cfg.c * n as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut w = vec![0.0; d + 1];
    let steps = cfg.svm_epochs * n;
    for t in 1..=steps {
        let i = rng.random_range(0..n);
        let yi = if y[i] == 1 { 1.0 } else { -1.0 };
        let eta = 1.0 / (lambda * t as f64);
        let margin: f64 = w[..d].iter().zip(&x[i]).map(|(a, b)| a * b).sum::<f64>() + w[d];
        let shrink = 1.0 - eta * lambda;
        w.iter_mut().for_each(|v| *v *= shrink);
        if yi * margin < 1.0 {
            for (wj, v) in w[..d].iter_mut().zip(&x[i]) {
                *wj += eta * yi * v;
            }
            w[d] += eta * yi;
        }
    }
    let bias = w[d];
    w.truncate(d);
    Ok(LinearModel { weights: w, bias })
}

/// Held-out predictions of both baselines for one fold.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineFold {
    pub test: Vec<usize>,
    pub lr: Vec<Prediction>,
    pub svm: Vec<Prediction>,
}

/// Baseline predictions on one train/test split.
pub fn baseline_fold(
    cases: &[LabeledCase],
    train: &[usize],
    test: &[usize],
    cfg: &BaselineConfig,
) -> Result<BaselineFold> {
    let vocab = CodeVocabulary::fit(train.iter().map(|&i| &cases[i]));
    let xs: Vec<Vec<f64>> = train.iter().map(|&i| vocab.features(&cases[i])).collect();
    let ys: Vec<u8> = train.iter().map(|&i| cases[i].label.bit()).collect();
    let lr = train_logistic(&xs, &ys, cfg)?;
    let svm = train_linear_svm(&xs, &ys, cfg)?;
    let xt: Vec<Vec<f64>> = test.iter().map(|&i| vocab.features(&cases[i])).collect();
    Ok(BaselineFold {
        test: test.to_vec(),
        lr: xt.iter().map(|x| lr.predict(x)).collect(),
        svm: xt.iter().map(|x| svm.predict(x)).collect(),
    })
}

/// Per-fold predictions of logistic regression and the linear SVM.
pub fn run_baselines(
    cases: &[LabeledCase],
    folds: &FoldPlan,
    cfg: &BaselineConfig,
) -> Result<Vec<BaselineFold>> {
    if folds.len() != cases.len() {
        return Err(Error::Shape { expected: cases.len(), got: folds.len() });
    }
    (0..folds.k)
        .map(|f| baseline_fold(cases, &folds.train_indices(f), &folds.test_indices(f), cfg))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ehr::{Demographics, DiseaseKind, EventKind, MedicalEvent, Outcome, PatientRecord};
    use crate::eval::{compute_metrics, stratified_kfold};
    use crate::synth::{generate_cohort, CohortSpec};

    fn toy_case(id: usize, failure: bool) -> LabeledCase {
        let marker = if failure { "BAD" } else { "GOOD" };
        let events = vec![
            MedicalEvent::new(format!("N{}", id % 5), 1, EventKind::Diagnosis),
            MedicalEvent::new(marker, 3, EventKind::Prescription),
            MedicalEvent::new("IDX", 5, EventKind::Diagnosis),
        ];
        LabeledCase {
            record: PatientRecord::new(format!("p{id}"), Demographics::default(), events),
            label: if failure { Outcome::Failure } else { Outcome::Success },
            index_day: 5,
        }
    }

    fn fold_metrics(cases: &[LabeledCase], folds: &FoldPlan, pick: fn(&BaselineFold) -> &Vec<Prediction>) -> Vec<f64> {
        run_baselines(cases, folds, &BaselineConfig::default())
            .unwrap()
            .iter()
            .map(|f| {
                let p = pick(f);
                let labels: Vec<u8> = f.test.iter().map(|&i| cases[i].label.bit()).collect();
                let probs: Vec<f64> = p.iter().map(|q| q.probability).collect();
                let preds: Vec<u8> = p.iter().map(|q| q.label).collect();
                compute_metrics(&probs, &preds, &labels).unwrap().acc
            })
            .collect()
    }

    #[test]
    fn features_have_unit_norm() {
        let cases: Vec<LabeledCase> = (0..4).map(|i| toy_case(i, i % 2 == 0)).collect();
        let vocab = CodeVocabulary::fit(&cases);
        for c in &cases {
            let x = vocab.features(c);
            assert!((x.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn code_separable_cohort_is_solved() {
        let cases: Vec<LabeledCase> = (0..40).map(|i| toy_case(i, i % 2 == 0)).collect();
        let labels: Vec<u8> = cases.iter().map(|c| c.label.bit()).collect();
        let folds = stratified_kfold(&labels, 5, 1).unwrap();
        assert!(fold_metrics(&cases, &folds, |f| &f.lr).iter().all(|&a| a == 1.0));
        assert!(fold_metrics(&cases, &folds, |f| &f.svm).iter().all(|&a| a == 1.0));
    }

    #[test]
    fn null_cohort_sits_near_chance() {
        let spec = CohortSpec {
            signal_strength: 0.0,
            ..CohortSpec::new(200, 0.5, DiseaseKind::ShortTerm, 4)
        };
        let cases = generate_cohort(&spec).unwrap();
        let labels: Vec<u8> = cases.iter().map(|c| c.label.bit()).collect();
        let folds = stratified_kfold(&labels, 5, 4).unwrap();
        let cfg = BaselineConfig::default();
        let runs = run_baselines(&cases, &folds, &cfg).unwrap();
        for pick in [|f: &BaselineFold| f.lr.clone(), |f: &BaselineFold| f.svm.clone()] {
            let mut probs = Vec::new();
            let mut preds = Vec::new();
            let mut truth = Vec::new();
            for f in &runs {
                for (p, &i) in pick(f).iter().zip(&f.test) {
                    probs.push(p.probability);
                    preds.push(p.label);
                    truth.push(labels[i]);
                }
            }
            let auc = compute_metrics(&probs, &preds, &truth).unwrap().auc;
            assert!((auc - 0.5).abs() <= 0.1, "{auc}");
        }
        assert_eq!(run_baselines(&cases, &folds, &cfg).unwrap(), runs);
    }
}
