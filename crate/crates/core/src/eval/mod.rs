//! Cross-validated evaluation of the embedding network against linear
//! baselines, under both distance metrics and both class-balance modes.
//!
//! Each fold rebuilds its Gram matrices from its own training cases, so kernel
//! normalization never sees held-out data. Folds run in parallel; training
//! within a fold is sequential and seeded, which keeps reports reproducible.

mod baselines;
mod embed;
mod folds;
mod metrics;
mod report;
mod ttest;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use baselines::{
    baseline_fold, run_baselines, train_linear_svm, train_logistic, BaselineConfig, BaselineFold,
    CodeVocabulary, LinearModel,
};
pub use embed::{export_embeddings, pca_2d, EmbeddingInput, EmbeddingRow, EmbeddingTable, Split};
pub use folds::{stratified_kfold, FoldPlan};
pub use metrics::{compute_metrics, MetricColumn, Metrics};
pub use report::{ConfigurationReport, EmbeddingExport, EvalReport, ModeReport, Model, PairTest};
pub use ttest::{paired_t_test, student_t_two_sided, TTest, SIGNIFICANCE_LEVEL};

use crate::ehr::{LabeledCase, Outcome};
use crate::error::{Error, Result, StageExt};
use crate::graph::{build_patient_graph, PatientGraph};
use crate::kernels::{cross_gram, gram_matrix, self_kernels, KernelKind};
use crate::net::{predict, train_on_rows, KernelRows, Metric, NetConfig, Prediction};
use crate::synth::{rebalance, BalanceMode};

pub const DEFAULT_WL_ITERATIONS: u32 = 3;
pub const DEFAULT_TEMPORAL_ALPHA: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub k: usize,
    pub wl_h: u32,
    pub alpha: f64,
    /// Network settings; the seed is replaced per fold and metric.
    pub net: NetConfig,
    pub baselines: BaselineConfig,
    pub metrics: Vec<Metric>,
    pub balances: Vec<BalanceMode>,
    pub seed: u64,
    /// Keep first-fold embeddings of every trained network in the report.
    pub export_embeddings: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            k: 10,
            wl_h: DEFAULT_WL_ITERATIONS,
            alpha: DEFAULT_TEMPORAL_ALPHA,
            net: NetConfig::default(),
            baselines: BaselineConfig::default(),
            metrics: vec![Metric::Euclidean, Metric::Cosine],
            balances: BalanceMode::ALL.to_vec(),
            seed: 0,
            export_embeddings: false,
        }
    }
}

impl ExperimentConfig {
    /// Kernels in the order the network consumes them.
    pub fn kernels(&self) -> [KernelKind; 3] {
        [
            KernelKind::WlSubtree { h: self.wl_h },
            KernelKind::TemporalTopological { alpha: self.alpha },
            KernelKind::VertexHistogram,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::invalid("k must be at least 2"));
        }
        if self.metrics.is_empty() || self.balances.is_empty() {
            return Err(Error::invalid("experiment needs at least one metric and one balance mode"));
        }
        for k in self.kernels() {
            k.validate()?;
        }
        self.net.validate()
    }
}

/// SplitMix64 finalizer, used to derive independent sub-seeds.
fn mix(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Normalized training Grams plus test-versus-train cross rows for one fold.
pub struct FoldKernels {
    pub train: [Array2<f64>; 3],
    pub test: [Array2<f64>; 3],
}

impl FoldKernels {
    pub fn compute(
        kernels: [KernelKind; 3],
        graphs: &[PatientGraph],
        train: &[usize],
        test: &[usize],
    ) -> Result<Self> {
        if train.iter().any(|i| test.contains(i)) {
            return Err(Error::invalid("train and test indices overlap"));
        }
        let tr: Vec<PatientGraph> = train.iter().map(|&i| graphs[i].clone()).collect();
        let te: Vec<PatientGraph> = test.iter().map(|&i| graphs[i].clone()).collect();
        let mut train_m = Vec::with_capacity(3);
        let mut test_m = Vec::with_capacity(3);
        for kind in kernels {
            train_m.push(gram_matrix(kind, &tr, true)?.values);
            let diag = self_kernels(kind, &tr);
            test_m.push(cross_gram(kind, &te, &tr, &diag, true)?);
        }
        let arr = |v: Vec<Array2<f64>>| -> [Array2<f64>; 3] { v.try_into().expect("three kernels") };
        Ok(Self {
            train: arr(train_m),
            test: arr(test_m),
        })
    }

    pub fn train_rows(&self) -> Result<KernelRows<'_>> {
        KernelRows::new(self.train[0].view(), self.train[1].view(), self.train[2].view())
    }

    pub fn test_rows(&self) -> Result<KernelRows<'_>> {
        KernelRows::new(self.test[0].view(), self.test[1].view(), self.test[2].view())
    }
}

struct FoldOutcome {
    metrics: Vec<(Model, Metrics)>,
    epochs: Vec<(Model, usize)>,
    embeddings: Vec<EmbeddingExport>,
}

fn score(preds: &[Prediction], labels: &[u8]) -> Result<Metrics> {
    let probs: Vec<f64> = preds.iter().map(|p| p.probability).collect();
    let hard: Vec<u8> = preds.iter().map(|p| p.label).collect();
    compute_metrics(&probs, &hard, labels)
}

#[allow(clippy::too_many_arguments)]
fn run_fold(
    cfg: &ExperimentConfig,
    balance: BalanceMode,
    cases: &[LabeledCase],
    graphs: &[PatientGraph],
    labels: &[u8],
    plan: &FoldPlan,
    fold: usize,
    mode_seed: u64,
) -> Result<FoldOutcome> {
    let train_idx = plan.train_indices(fold);
    let test_idx = plan.test_indices(fold);
    let y_train: Vec<u8> = train_idx.iter().map(|&i| labels[i]).collect();
    let y_test: Vec<u8> = test_idx.iter().map(|&i| labels[i]).collect();
    let fk = FoldKernels::compute(cfg.kernels(), graphs, &train_idx, &test_idx).stage("gram")?;
    let grams_train = fk.train_rows()?;
    let grams_test = fk.test_rows()?;

    let ids = |idx: &[usize]| -> Vec<String> {
        idx.iter().map(|&i| cases[i].record.patient_id.clone()).collect()
    };
    let (train_ids, test_ids) = (ids(&train_idx), ids(&test_idx));

    let mut out = FoldOutcome {
        metrics: Vec::new(),
        epochs: Vec::new(),
        embeddings: Vec::new(),
    };
    for &metric in &cfg.metrics {
        let net_cfg = NetConfig {
            metric,
            seed: mix(mode_seed, 2 * fold as u64 + metric as u64 + 1),
            ..cfg.net.clone()
        };
        let (net, trace) = train_on_rows(&grams_train, &y_train, &net_cfg).stage("train")?;
        let preds = predict(&net, &grams_test).stage("predict")?;
        let model = Model::net(metric);
        out.metrics.push((model, score(&preds, &y_test).stage("metrics")?));
        out.epochs.push((model, trace.stop_epoch));
        if cfg.export_embeddings && fold == 0 {
            let table = export_embeddings(
                &net,
                &[
                    EmbeddingInput { ids: &train_ids, labels: &y_train, rows: grams_train, split: Split::Train },
                    EmbeddingInput { ids: &test_ids, labels: &y_test, rows: grams_test, split: Split::Test },
                ],
            )
            .stage("export")?;
            out.embeddings.push(EmbeddingExport { balance, metric, fold, table });
        }
    }

    let base_cfg = BaselineConfig {
        seed: mix(mode_seed, 1_000 + fold as u64),
        ..cfg.baselines.clone()
    };
    let base = baseline_fold(cases, &train_idx, &test_idx, &base_cfg).stage("baselines")?;
    out.metrics.push((Model::SvmBaseline, score(&base.svm, &y_test).stage("metrics")?));
    out.metrics.push((Model::LrBaseline, score(&base.lr, &y_test).stage("metrics")?));
    Ok(out)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn run_mode(cfg: &ExperimentConfig, all: &[LabeledCase], balance: BalanceMode) -> Result<(ModeReport, Vec<EmbeddingExport>)> {
    let mode_seed = mix(cfg.seed, balance as u64 + 1);
    let cases = rebalance(all, balance, mode_seed).stage("rebalance")?;
    let labels: Vec<u8> = cases.iter().map(|c| c.label.bit()).collect();
    let plan = stratified_kfold(&labels, cfg.k, mode_seed).stage("folds")?;
    let graphs: Vec<PatientGraph> = cases
        .iter()
        .map(build_patient_graph)
        .collect::<Result<_>>()
        .stage("graph")?;
    log::info!("{balance}: {} cases, {}-fold", cases.len(), cfg.k);

    let outcomes: Vec<FoldOutcome> = (0..cfg.k)
        .into_par_iter()
        .map(|f| run_fold(cfg, balance, &cases, &graphs, &labels, &plan, f, mode_seed))
        .collect::<Result<_>>()?;

    let mut models: Vec<Model> = cfg.metrics.iter().map(|&m| Model::net(m)).collect();
    models.extend(Model::BASELINES);
    let per_model = |model: Model| -> Vec<Metrics> {
        outcomes
            .iter()
            .map(|o| o.metrics.iter().find(|(m, _)| *m == model).expect("model scored").1)
            .collect()
    };
    let column = |folds: &[Metrics], c: MetricColumn| -> Vec<f64> { folds.iter().map(|m| m.get(c)).collect() };

    let mut t_tests = Vec::new();
    for (i, &a) in models.iter().enumerate() {
        for &b in &models[i + 1..] {
            let (fa, fb) = (per_model(a), per_model(b));
            for c in MetricColumn::ALL {
                let test = paired_t_test(&column(&fa, c), &column(&fb, c)).stage("t-test")?;
                t_tests.push(PairTest { a, b, column: c, test });
            }
        }
    }

    let configurations = models
        .iter()
        .map(|&model| {
            let folds = per_model(model);
            let stat = |c| mean_std(&column(&folds, c));
            let (acc, f1, auc) = (stat(MetricColumn::Acc), stat(MetricColumn::F1), stat(MetricColumn::Auc));
            let mean = Metrics { acc: acc.0, f1: f1.0, auc: auc.0 };
            let beats_baselines = if model.is_baseline() {
                Vec::new()
            } else {
                MetricColumn::ALL
                    .into_iter()
                    .filter(|&c| {
                        Model::BASELINES.iter().all(|&b| {
                            let base_mean = mean_std(&column(&per_model(b), c)).0;
                            let t = t_tests
                                .iter()
                                .find(|t| t.a == model && t.b == b && t.column == c)
                                .expect("pair tested");
                            mean.get(c) > base_mean && t.test.significant
                        })
                    })
                    .collect()
            };
            ConfigurationReport {
                model,
                mean,
                std: Metrics { acc: acc.1, f1: f1.1, auc: auc.1 },
                epochs: outcomes
                    .iter()
                    .flat_map(|o| o.epochs.iter().filter(|(m, _)| *m == model).map(|(_, e)| *e))
                    .collect(),
                folds,
                beats_baselines,
            }
        })
        .collect();

    let embeddings = outcomes.into_iter().flat_map(|o| o.embeddings).collect();
    let report = ModeReport {
        balance,
        n_cases: cases.len(),
        n_failures: cases.iter().filter(|c| c.label == Outcome::Failure).count(),
        configurations,
        t_tests,
    };
    Ok((report, embeddings))
}

/// Rebalances, cross-validates and compares every configured network with
/// both baselines, once per balance mode.
pub fn run_experiment(cases: &[LabeledCase], cfg: &ExperimentConfig) -> Result<EvalReport> {
    cfg.validate().stage("config")?;
    let mut modes = Vec::new();
    let mut embeddings = Vec::new();
    for &balance in &cfg.balances {
        let (m, e) = run_mode(cfg, cases, balance)?;
        modes.push(m);
        embeddings.extend(e);
    }
    Ok(EvalReport {
        seed: cfg.seed,
        k: cfg.k,
        wl_h: cfg.wl_h,
        alpha: cfg.alpha,
        net: cfg.net.clone(),
        modes,
        embeddings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ehr::DiseaseKind;
    use crate::synth::{generate_cohort, CohortSpec};

    fn smoke() -> ExperimentConfig {
        ExperimentConfig {
            k: 2,
            net: NetConfig {
                embed_dim_per_kernel: 16,
                fusion_dim: 8,
                classifier_dim: 8,
                learning_rate: 1e-3,
                max_epochs: 30,
                batch_size: 16,
                ..NetConfig::default()
            },
            seed: 5,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn smoke_report_shape_and_determinism() {
        let cases = generate_cohort(&CohortSpec::new(40, 0.5, DiseaseKind::ShortTerm, 3)).unwrap();
        let cfg = ExperimentConfig { export_embeddings: true, ..smoke() };
        let report = run_experiment(&cases, &cfg).unwrap();
        assert_eq!(report.modes.len(), 2);
        for m in &report.modes {
            assert_eq!(m.configurations.len(), 4);
            assert_eq!(m.t_tests.len(), 6 * 3);
            for c in &m.configurations {
                assert_eq!(c.folds.len(), 2);
                for col in MetricColumn::ALL {
                    assert!((0.0..=1.0).contains(&c.mean.get(col)));
                    assert!(c.std.get(col) >= 0.0 && c.std.get(col).is_finite());
                }
            }
        }
        assert_eq!(report.embeddings.len(), 4);
        let again = run_experiment(&cases, &cfg).unwrap();
        assert_eq!(report.to_json(), again.to_json());
        assert_eq!(report, again);
        let table = report.to_table();
        assert!(table.contains("euclidean") && table.contains(" ± "));
    }

    #[test]
    fn filters_restrict_the_grid() {
        let cases = generate_cohort(&CohortSpec::new(40, 0.5, DiseaseKind::ShortTerm, 3)).unwrap();
        let cfg = ExperimentConfig {
            metrics: vec![Metric::Cosine],
            balances: vec![BalanceMode::Imbalanced],
            ..smoke()
        };
        let report = run_experiment(&cases, &cfg).unwrap();
        assert_eq!(report.modes.len(), 1);
        let models: Vec<Model> = report.modes[0].configurations.iter().map(|c| c.model).collect();
        assert_eq!(models, vec![Model::Cosine, Model::SvmBaseline, Model::LrBaseline]);
    }

    #[test]
    fn fold_kernels_reject_overlap_and_keep_shapes() {
        let cases = generate_cohort(&CohortSpec::new(12, 0.5, DiseaseKind::ShortTerm, 1)).unwrap();
        let graphs: Vec<PatientGraph> = cases.iter().map(|c| build_patient_graph(c).unwrap()).collect();
        let kernels = ExperimentConfig::default().kernels();
        assert!(FoldKernels::compute(kernels, &graphs, &[0, 1, 2], &[2, 3]).is_err());
        let fk = FoldKernels::compute(kernels, &graphs, &[0, 1, 2, 5, 7], &[3, 4]).unwrap();
        for m in &fk.train {
            assert_eq!(m.dim(), (5, 5));
        }
        for m in &fk.test {
            assert_eq!(m.dim(), (2, 5));
        }
    }

    #[test]
    fn bad_config_names_its_stage() {
        let cases = generate_cohort(&CohortSpec::new(12, 0.5, DiseaseKind::ShortTerm, 1)).unwrap();
        let err = run_experiment(&cases, &ExperimentConfig { k: 1, ..smoke() }).unwrap_err();
        assert!(err.to_string().starts_with("config:"), "{err}");
    }
}
