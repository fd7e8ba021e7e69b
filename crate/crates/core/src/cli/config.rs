use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::ehr::DiseaseKind;
use crate::eval::{BaselineConfig, ExperimentConfig, DEFAULT_TEMPORAL_ALPHA, DEFAULT_WL_ITERATIONS};
use crate::net::{Metric, NetConfig};
use crate::synth::{BalanceMode, CohortSpec, Preset};

/// `all` or one specific value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Choice<T> {
    All,
    One(T),
}

impl<T: Copy> Choice<T> {
    pub fn select(self, all: &[T]) -> Vec<T> {
        match self {
            Choice::All => all.to_vec(),
            Choice::One(v) => vec![v],
        }
    }
}

impl<T: FromStr> FromStr for Choice<T> {
    type Err = T::Err;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "all" {
            Ok(Choice::All)
        } else {
            s.parse().map(Choice::One)
        }
    }
}

impl<T: std::fmt::Display> std::fmt::Display for Choice<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Choice::All => f.write_str("all"),
            Choice::One(v) => v.fmt(f),
        }
    }
}

/// Flat `key = value` run configuration. File values are applied first,
/// then command-line flags; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub threads: usize,
    /// Directory holding `events.tsv`, `demographics.tsv` and `disease.cfg`.
    pub data: Option<PathBuf>,
    pub events: Option<PathBuf>,
    pub demographics: Option<PathBuf>,
    pub disease: Option<PathBuf>,

    pub preset: Option<Preset>,
    pub n: usize,
    pub kind: DiseaseKind,
    pub failure_ratio: f64,
    pub signal: f64,
    pub vocab: usize,
    pub min_events: Option<usize>,
    pub max_events: Option<usize>,

    pub wl_h: u32,
    pub alpha: f64,
    pub csv: bool,

    pub k: usize,
    pub metric: Choice<Metric>,
    pub balance: Choice<BalanceMode>,
    pub embed_dim: usize,
    pub fusion_dim: usize,
    pub classifier_dim: usize,
    pub margin: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub baseline_c: f64,
    pub export_embeddings: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let net = NetConfig::default();
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            threads: 1,
            data: None,
            events: None,
            demographics: None,
            disease: None,
            preset: None,
            n: 400,
            kind: DiseaseKind::ShortTerm,
            failure_ratio: 0.5,
            signal: 1.0,
            vocab: 64,
            min_events: None,
            max_events: None,
            wl_h: DEFAULT_WL_ITERATIONS,
            alpha: DEFAULT_TEMPORAL_ALPHA,
            csv: false,
            k: 10,
            metric: Choice::All,
            balance: Choice::All,
            embed_dim: net.embed_dim_per_kernel,
            fusion_dim: net.fusion_dim,
            classifier_dim: net.classifier_dim,
            margin: net.margin_lambda,
            learning_rate: net.learning_rate,
            batch_size: net.batch_size,
            max_epochs: net.max_epochs,
            patience: net.early_stop_patience,
            baseline_c: 1.0,
            export_embeddings: true,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| format!("bad value {value:?} for {key}: {e}"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, String> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("bad value {value:?} for {key}: expected true or false")),
    }
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl RunConfig {
    pub const KEYS: [&'static str; 31] = [
        "seed", "out", "threads", "data", "events", "demographics", "disease", "preset", "n",
        "kind", "failure_ratio", "signal", "vocab", "min_events", "max_events", "wl_h", "alpha",
        "csv", "k", "metric", "balance", "embed_dim", "fusion_dim", "classifier_dim", "margin",
        "learning_rate", "batch_size", "max_epochs", "patience", "baseline_c",
        "export_embeddings",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let value = value.trim();
        match key {
            "seed" => self.seed = parse(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "threads" => self.threads = parse(key, value)?,
            "data" => self.data = opt_path(value),
            "events" => self.events = opt_path(value),
            "demographics" => self.demographics = opt_path(value),
            "disease" => self.disease = opt_path(value),
            "preset" => {
                self.preset = if value.is_empty() || value == "none" {
                    None
                } else {
                    Some(parse(key, value)?)
                }
            }
            "n" => self.n = parse(key, value)?,
            "kind" => self.kind = parse(key, value)?,
            "failure_ratio" => self.failure_ratio = parse(key, value)?,
            "signal" => self.signal = parse(key, value)?,
            "vocab" => self.vocab = parse(key, value)?,
            "min_events" => self.min_events = Some(parse(key, value)?),
            "max_events" => self.max_events = Some(parse(key, value)?),
            "wl_h" => self.wl_h = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "csv" => self.csv = parse_bool(key, value)?,
            "k" => self.k = parse(key, value)?,
            "metric" => self.metric = parse(key, value)?,
            "balance" => self.balance = parse(key, value)?,
            "embed_dim" => self.embed_dim = parse(key, value)?,
            "fusion_dim" => self.fusion_dim = parse(key, value)?,
            "classifier_dim" => self.classifier_dim = parse(key, value)?,
            "margin" => self.margin = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "max_epochs" => self.max_epochs = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "baseline_c" => self.baseline_c = parse(key, value)?,
            "export_embeddings" => self.export_embeddings = parse_bool(key, value)?,
            _ => return Err(format!("unknown config key {key:?}")),
        }
        Ok(())
    }

    /// Applies a `key = value` file. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<(), String> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key = value", i + 1))?;
            self.set(key.trim(), value).map_err(|e| format!("line {}: {e}", i + 1))?;
        }
        Ok(())
    }

    /// Every key with its resolved value, in a form [`apply_text`](Self::apply_text) reads back.
    pub fn to_text(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let opt = |v: Option<usize>| v.map(|v| v.to_string());
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("seed", self.seed.to_string());
        kv("out", self.out.display().to_string());
        kv("threads", self.threads.to_string());
        kv("data", path(&self.data));
        kv("events", path(&self.events));
        kv("demographics", path(&self.demographics));
        kv("disease", path(&self.disease));
        kv("preset", self.preset.map(|p| p.to_string()).unwrap_or_else(|| "none".into()));
        kv("n", self.n.to_string());
        kv("kind", self.kind.as_str().into());
        kv("failure_ratio", self.failure_ratio.to_string());
        kv("signal", self.signal.to_string());
        kv("vocab", self.vocab.to_string());
        if let Some(v) = opt(self.min_events) {
            kv("min_events", v);
        }
        if let Some(v) = opt(self.max_events) {
            kv("max_events", v);
        }
        kv("wl_h", self.wl_h.to_string());
        kv("alpha", self.alpha.to_string());
        kv("csv", self.csv.to_string());
        kv("k", self.k.to_string());
        kv("metric", self.metric.to_string());
        kv("balance", self.balance.to_string());
        kv("embed_dim", self.embed_dim.to_string());
        kv("fusion_dim", self.fusion_dim.to_string());
        kv("classifier_dim", self.classifier_dim.to_string());
        kv("margin", self.margin.to_string());
        kv("learning_rate", self.learning_rate.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("max_epochs", self.max_epochs.to_string());
        kv("patience", self.patience.to_string());
        kv("baseline_c", self.baseline_c.to_string());
        kv("export_embeddings", self.export_embeddings.to_string());
        s
    }

    pub fn cohort_spec(&self) -> CohortSpec {
        let base = match self.preset {
            Some(p) => CohortSpec::from_preset(p, self.n, self.seed),
            None => CohortSpec::new(self.n, self.failure_ratio, self.kind, self.seed),
        };
        let (lo, hi) = base.events_per_case;
        CohortSpec {
            signal_strength: self.signal,
            vocab_size: self.vocab,
            events_per_case: (self.min_events.unwrap_or(lo), self.max_events.unwrap_or(hi)),
            ..base
        }
    }

    pub fn net_config(&self, metric: Metric) -> NetConfig {
        NetConfig {
            embed_dim_per_kernel: self.embed_dim,
            fusion_dim: self.fusion_dim,
            classifier_dim: self.classifier_dim,
            margin_lambda: self.margin,
            metric,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            early_stop_patience: self.patience,
            seed: self.seed,
        }
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            k: self.k,
            wl_h: self.wl_h,
            alpha: self.alpha,
            net: self.net_config(Metric::Euclidean),
            baselines: BaselineConfig {
                c: self.baseline_c,
                seed: self.seed,
                ..BaselineConfig::default()
            },
            metrics: self.metric.select(&[Metric::Euclidean, Metric::Cosine]),
            balances: self.balance.select(&BalanceMode::ALL),
            seed: self.seed,
            export_embeddings: self.export_embeddings,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_text() {
        let mut c = RunConfig::default();
        c.apply_text("# comment\nseed = 9\npreset = htn\nmetric = cosine\n\nmin_events = 3\ndata = in\n")
            .unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.preset, Some(Preset::Htn));
        assert_eq!(c.metric, Choice::One(Metric::Cosine));
        let mut back = RunConfig::default();
        back.apply_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_errors() {
        let mut c = RunConfig::default();
        assert!(c.apply_text("sed = 3").unwrap_err().contains("unknown config key"));
        assert!(c.apply_text("k = ten").is_err());
        assert!(c.apply_text("just words").is_err());
        assert!(c.apply_text("preset = flu").is_err());
    }

    #[test]
    fn every_written_key_is_known() {
        let c = RunConfig {
            min_events: Some(2),
            max_events: Some(5),
            ..RunConfig::default()
        };
        for line in c.to_text().lines() {
            let key = line.split_once('=').unwrap().0.trim();
            assert!(RunConfig::KEYS.contains(&key), "{key}");
        }
    }

    #[test]
    fn cohort_spec_follows_preset() {
        let mut c = RunConfig::default();
        c.apply_text("preset = uti\nn = 400\nseed = 7").unwrap();
        let spec = c.cohort_spec();
        assert_eq!(spec.failure_count(), 188);
        assert_eq!(spec.kind, DiseaseKind::ShortTerm);
    }
}
