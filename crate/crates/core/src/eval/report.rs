use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use super::embed::EmbeddingTable;
use super::metrics::{MetricColumn, Metrics};
use super::ttest::TTest;
use crate::net::{Metric, NetConfig};
use crate::synth::BalanceMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Euclidean,
    Cosine,
    SvmBaseline,
    LrBaseline,
}

impl Model {
    pub const BASELINES: [Model; 2] = [Model::SvmBaseline, Model::LrBaseline];

    pub fn as_str(self) -> &'static str {
        match self {
            Model::Euclidean => "euclidean",
            Model::Cosine => "cosine",
            Model::SvmBaseline => "svm_baseline",
            Model::LrBaseline => "lr_baseline",
        }
    }

    pub fn net(metric: Metric) -> Self {
        match metric {
            Metric::Euclidean => Model::Euclidean,
            Metric::Cosine => Model::Cosine,
        }
    }

    pub fn is_baseline(self) -> bool {
        Self::BASELINES.contains(&self)
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigurationReport {
    pub model: Model,
    pub folds: Vec<Metrics>,
    pub mean: Metrics,
    /// Sample standard deviation across folds.
    pub std: Metrics,
    /// Training epochs per fold; empty for baselines.
    pub epochs: Vec<usize>,
    /// Columns where this model beats every baseline at the significance level.
    pub beats_baselines: Vec<MetricColumn>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    pub a: Model,
    pub b: Model,
    pub column: MetricColumn,
    #[serde(flatten)]
    pub test: TTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub balance: BalanceMode,
    pub n_cases: usize,
    pub n_failures: usize,
    pub configurations: Vec<ConfigurationReport>,
    pub t_tests: Vec<PairTest>,
}

impl ModeReport {
    pub fn configuration(&self, model: Model) -> Option<&ConfigurationReport> {
        self.configurations.iter().find(|c| c.model == model)
    }

    pub fn t_test(&self, a: Model, b: Model, column: MetricColumn) -> Option<&PairTest> {
        self.t_tests
            .iter()
            .find(|t| t.column == column && ((t.a, t.b) == (a, b) || (t.a, t.b) == (b, a)))
    }
}

/// First-fold embeddings of one trained network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingExport {
    pub balance: BalanceMode,
    pub metric: Metric,
    pub fold: usize,
    pub table: EmbeddingTable,
}

impl EmbeddingExport {
    pub fn file_name(&self) -> String {
        format!("embeddings_{}_{}.csv", self.balance, self.metric)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    pub k: usize,
    pub wl_h: u32,
    pub alpha: f64,
    pub net: NetConfig,
    pub modes: Vec<ModeReport>,
    #[serde(skip)]
    pub embeddings: Vec<EmbeddingExport>,
}

impl EvalReport {
    pub fn mode(&self, balance: BalanceMode) -> Option<&ModeReport> {
        self.modes.iter().find(|m| m.balance == balance)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plain-text tables, one per balance mode, in `mean ± std` form.
    /// A `*` marks a network that beats every baseline at p < 0.01.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        for m in &self.modes {
            let _ = writeln!(
                out,
                "{} ({} cases, {} failures, {}-fold)",
                m.balance, m.n_cases, m.n_failures, self.k
            );
            let _ = write!(out, "{:<14}", "model");
            for c in MetricColumn::ALL {
                let _ = write!(out, "{:<20}", c.as_str());
            }
            out.push('\n');
            for cfg in &m.configurations {
                let _ = write!(out, "{:<14}", cfg.model.as_str());
                for c in MetricColumn::ALL {
                    let star = if cfg.beats_baselines.contains(&c) { "*" } else { "" };
                    let cell = format!("{:.4} ± {:.4}{star}", cfg.mean.get(c), cfg.std.get(c));
                    let _ = write!(out, "{cell:<20}");
                }
                out.push('\n');
            }
            out.push('\n');
        }
        out
    }
}
