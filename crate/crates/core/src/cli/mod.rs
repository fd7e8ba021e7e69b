//! The `rxkernel` command line: generate, ingest, gram, train, evaluate and
//! export-embeddings, each reading and writing plain files in a run directory.
//!
//! Every subcommand writes `<subcommand>.cfg` next to its outputs. Passing
//! that file back through `--config` reproduces the outputs.
//!
//! Exit codes: 0 success, 2 usage, 3 data error, 4 numeric error.

mod config;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use config::{Choice, RunConfig};

use crate::ehr::{
    attach_demographics, label_cohort, parse_demographics, parse_records, write_demographics,
    write_labels, write_records, DiseaseSpec, LabeledCase, Outcome,
};
use crate::error::{Error, StageExt};
use crate::eval::{export_embeddings, run_experiment, EmbeddingInput, Split};
use crate::graph::{build_patient_graph, PatientGraph};
use crate::kernels::{gram_matrix, read_gram, write_gram, write_gram_csv, GramMatrix, KernelKind};
use crate::net::{read_model, train, write_model, write_trace_csv, KernelRows, Metric};
use crate::synth::{generate_records, BalanceMode, Preset};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "rxkernel", version, about = "Graph-kernel prescription outcome prediction")]
pub struct Cli {
    /// Flat key = value configuration file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run directory for outputs (and default location of inputs).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for kernel and fold parallelism.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// More log output (-v debug, -vv trace).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a cohort and write events, demographics, disease and labels.
    Generate(GenerateArgs),
    /// Label event records against a disease definition.
    Ingest(DataArgs),
    /// Build normalized WL, temporal and vertex-histogram Gram matrices.
    Gram(GramArgs),
    /// Train the embedding network on the full cohort.
    Train(TrainArgs),
    /// Cross-validate networks and baselines; write report and embeddings.
    Evaluate(EvaluateArgs),
    /// Write embeddings and 2D projections of trained models.
    ExportEmbeddings(ExportArgs),
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_metric(s: &str) -> Result<Choice<Metric>, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_balance(s: &str) -> Result<Choice<BalanceMode>, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// uti, aom, pneumonia, cystitis, htn, lipid or dm
    #[arg(long, value_parser = parse_preset)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub n: Option<usize>,
    /// short_term or chronic (ignored with --preset)
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub failure_ratio: Option<f64>,
    #[arg(long)]
    pub signal: Option<f64>,
    #[arg(long)]
    pub vocab: Option<usize>,
    #[arg(long)]
    pub min_events: Option<usize>,
    #[arg(long)]
    pub max_events: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Directory with events.tsv, demographics.tsv and disease.cfg (default: --out).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub events: Option<PathBuf>,
    #[arg(long)]
    pub demographics: Option<PathBuf>,
    #[arg(long)]
    pub disease: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct KernelArgs {
    #[arg(long)]
    pub wl_h: Option<u32>,
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GramArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub kernel: KernelArgs,
    /// Also write each Gram matrix as CSV.
    #[arg(long)]
    pub csv: bool,
}

#[derive(Debug, Args)]
pub struct NetArgs {
    /// euclidean, cosine or all
    #[arg(long, value_parser = parse_metric)]
    pub metric: Option<Choice<Metric>>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub fusion_dim: Option<usize>,
    #[arg(long)]
    pub classifier_dim: Option<usize>,
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub net: NetArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[command(flatten)]
    pub net: NetArgs,
    /// Number of cross-validation folds.
    #[arg(long)]
    pub k: Option<usize>,
    /// balanced, imbalanced or all
    #[arg(long, value_parser = parse_balance)]
    pub balance: Option<Choice<BalanceMode>>,
    /// Skip the embedding CSVs.
    #[arg(long)]
    pub no_embeddings: bool,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// euclidean, cosine or all
    #[arg(long, value_parser = parse_metric)]
    pub metric: Option<Choice<Metric>>,
}

/// Failure of a CLI run, split by exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Run(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Run(e) if e.is_numeric() => EXIT_NUMERIC,
            CliError::Run(_) => EXIT_DATA,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Run(e) => e.fmt(f),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn push<T: ToString>(sets: &mut Vec<(&'static str, String)>, key: &'static str, v: &Option<T>) {
    if let Some(v) = v {
        sets.push((key, v.to_string()));
    }
}

fn data_flags(sets: &mut Vec<(&'static str, String)>, d: &DataArgs) {
    let show = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
    push(sets, "data", &show(&d.data));
    push(sets, "events", &show(&d.events));
    push(sets, "demographics", &show(&d.demographics));
    push(sets, "disease", &show(&d.disease));
}

fn kernel_flags(sets: &mut Vec<(&'static str, String)>, k: &KernelArgs) {
    push(sets, "wl_h", &k.wl_h);
    push(sets, "alpha", &k.alpha);
}

fn net_flags(sets: &mut Vec<(&'static str, String)>, n: &NetArgs) {
    push(sets, "metric", &n.metric);
    push(sets, "embed_dim", &n.embed_dim);
    push(sets, "fusion_dim", &n.fusion_dim);
    push(sets, "classifier_dim", &n.classifier_dim);
    push(sets, "margin", &n.margin);
    push(sets, "learning_rate", &n.learning_rate);
    push(sets, "batch_size", &n.batch_size);
    push(sets, "max_epochs", &n.max_epochs);
    push(sets, "patience", &n.patience);
}

/// Resolves the run configuration: defaults, then the config file, then flags.
pub fn resolve_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        cfg.apply_text(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    }
    let mut sets = Vec::new();
    push(&mut sets, "seed", &cli.seed);
    push(&mut sets, "out", &cli.out.as_ref().map(|p| p.display().to_string()));
    push(&mut sets, "threads", &cli.threads);
    match &cli.command {
        Command::Generate(g) => {
            push(&mut sets, "preset", &g.preset);
            push(&mut sets, "n", &g.n);
            push(&mut sets, "kind", &g.kind);
            push(&mut sets, "failure_ratio", &g.failure_ratio);
            push(&mut sets, "signal", &g.signal);
            push(&mut sets, "vocab", &g.vocab);
            push(&mut sets, "min_events", &g.min_events);
            push(&mut sets, "max_events", &g.max_events);
        }
        Command::Ingest(d) => data_flags(&mut sets, d),
        Command::Gram(g) => {
            data_flags(&mut sets, &g.data);
            kernel_flags(&mut sets, &g.kernel);
            if g.csv {
                sets.push(("csv", "true".into()));
            }
        }
        Command::Train(t) => {
            data_flags(&mut sets, &t.data);
            net_flags(&mut sets, &t.net);
        }
        Command::Evaluate(e) => {
            data_flags(&mut sets, &e.data);
            kernel_flags(&mut sets, &e.kernel);
            net_flags(&mut sets, &e.net);
            push(&mut sets, "k", &e.k);
            push(&mut sets, "balance", &e.balance);
            if e.no_embeddings {
                sets.push(("export_embeddings", "false".into()));
            }
        }
        Command::ExportEmbeddings(x) => {
            data_flags(&mut sets, &x.data);
            push(&mut sets, "metric", &x.metric);
        }
    }
    for (k, v) in sets {
        cfg.set(k, &v).map_err(CliError::Usage)?;
    }
    Ok(cfg)
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Generate(_) => "generate",
        Command::Ingest(_) => "ingest",
        Command::Gram(_) => "gram",
        Command::Train(_) => "train",
        Command::Evaluate(_) => "evaluate",
        Command::ExportEmbeddings(_) => "export-embeddings",
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> crate::Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create_file(path: &Path) -> crate::Result<std::io::BufWriter<fs::File>> {
    fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> crate::Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn input_path(cfg: &RunConfig, explicit: &Option<PathBuf>, name: &str) -> PathBuf {
    explicit
        .clone()
        .unwrap_or_else(|| cfg.data.clone().unwrap_or_else(|| cfg.out.clone()).join(name))
}

/// Loads records, demographics and the disease definition, then labels them.
/// Case order is by patient id, which every subcommand relies on.
pub fn load_cohort(cfg: &RunConfig) -> crate::Result<Vec<LabeledCase>> {
    let events = input_path(cfg, &cfg.events, "events.tsv");
    let demo = input_path(cfg, &cfg.demographics, "demographics.tsv");
    let disease = input_path(cfg, &cfg.disease, "disease.cfg");
    let mut records = parse_records(&read_file(&events)?).map_err(|e| e.in_stage("events"))?;
    if demo.exists() || cfg.demographics.is_some() {
        let d = parse_demographics(&read_file(&demo)?).map_err(|e| e.in_stage("demographics"))?;
        attach_demographics(&mut records, &d);
    }
    let text = String::from_utf8(read_file(&disease)?)
        .map_err(|_| Error::invalid("disease file is not UTF-8"))?;
    let spec = DiseaseSpec::parse(&text).map_err(|e| e.in_stage("disease"))?;
    let cohort = label_cohort(&records, &spec);
    log::info!(
        "{} cases labeled, {} records without an index event",
        cohort.cases.len(),
        cohort.excluded
    );
    if cohort.cases.is_empty() {
        return Err(Error::invalid("no record contains an index event"));
    }
    Ok(cohort.cases)
}

fn kernels(cfg: &RunConfig) -> [KernelKind; 3] {
    [
        KernelKind::WlSubtree { h: cfg.wl_h },
        KernelKind::TemporalTopological { alpha: cfg.alpha },
        KernelKind::VertexHistogram,
    ]
}

fn gram_path(cfg: &RunConfig, kind: KernelKind) -> PathBuf {
    cfg.out.join(format!("{}.kgrm", kind.short_name()))
}

fn labels_of(cases: &[LabeledCase]) -> Vec<u8> {
    cases.iter().map(|c| c.label.bit()).collect()
}

fn load_grams(cfg: &RunConfig, n: usize) -> crate::Result<[GramMatrix; 3]> {
    let mut out = Vec::new();
    for kind in kernels(cfg) {
        let path = gram_path(cfg, kind);
        let g = read_gram(&read_file(&path)?[..]).map_err(|e| e.in_stage("gram"))?;
        if g.len() != n {
            return Err(Error::Shape { expected: n, got: g.len() }.in_stage("gram"));
        }
        out.push(g);
    }
    Ok(out.try_into().expect("three kernels"))
}

fn cmd_generate(cfg: &RunConfig) -> crate::Result<()> {
    let spec = cfg.cohort_spec();
    let cohort = generate_records(&spec).stage("generate")?;
    let labeled = label_cohort(&cohort.records, &cohort.disease);
    write_file(&cfg.out.join("events.tsv"), write_records(&cohort.records))?;
    write_file(&cfg.out.join("demographics.tsv"), write_demographics(&cohort.records))?;
    write_file(&cfg.out.join("disease.cfg"), cohort.disease.to_string())?;
    write_file(&cfg.out.join("labels.tsv"), write_labels(&labeled.cases))?;
    let failures = labeled.cases.iter().filter(|c| c.label == Outcome::Failure).count();
    println!(
        "generated {} cases: {} failures, {} successes",
        labeled.cases.len(),
        failures,
        labeled.cases.len() - failures
    );
    Ok(())
}

fn cmd_ingest(cfg: &RunConfig) -> crate::Result<()> {
    let cases = load_cohort(cfg).stage("ingest")?;
    let mut listing = String::new();
    for c in &cases {
        let g = build_patient_graph(c).stage("graph")?;
        listing.push_str(&format!("# {}\n", c.record.patient_id));
        listing.push_str(&g.adjacency_listing());
    }
    write_file(&cfg.out.join("labels.tsv"), write_labels(&cases))?;
    write_file(&cfg.out.join("graphs.txt"), listing)?;
    let failures = cases.iter().filter(|c| c.label == Outcome::Failure).count();
    println!("ingested {} cases: {} failures", cases.len(), failures);
    Ok(())
}

fn cmd_gram(cfg: &RunConfig) -> crate::Result<()> {
    let cases = load_cohort(cfg).stage("ingest")?;
    let graphs: Vec<PatientGraph> = cases
        .iter()
        .map(build_patient_graph)
        .collect::<crate::Result<_>>()
        .stage("graph")?;
    for kind in kernels(cfg) {
        let g = gram_matrix(kind, &graphs, true).stage("gram")?;
        let min = g.validate().stage("psd")?;
        log::info!("{kind}: N = {}, min eigenvalue {min:e}", g.len());
        let path = gram_path(cfg, kind);
        write_gram(&g, create_file(&path)?).map_err(|e| Error::io(&path, e))?;
        if cfg.csv {
            let csv = path.with_extension("csv");
            write_gram_csv(&g, create_file(&csv)?).map_err(|e| Error::io(&csv, e))?;
        }
        println!("{}: {} x {} (min eigenvalue {min:.3e})", path.display(), g.len(), g.len());
    }
    Ok(())
}

fn single_metrics(cfg: &RunConfig) -> Vec<Metric> {
    cfg.metric.select(&[Metric::Euclidean, Metric::Cosine])
}

fn cmd_train(cfg: &RunConfig) -> crate::Result<()> {
    let cases = load_cohort(cfg).stage("ingest")?;
    let labels = labels_of(&cases);
    let grams = load_grams(cfg, cases.len())?;
    for metric in single_metrics(cfg) {
        let net_cfg = cfg.net_config(metric);
        let (net, trace) = train([&grams[0], &grams[1], &grams[2]], &labels, &net_cfg).stage("train")?;
        let model = cfg.out.join(format!("model_{metric}.knet"));
        write_model(&net, create_file(&model)?).map_err(|e| Error::io(&model, e))?;
        let tpath = cfg.out.join(format!("trace_{metric}.csv"));
        write_trace_csv(&trace, create_file(&tpath)?).map_err(|e| Error::io(&tpath, e))?;
        let last = trace.last().map(|l| l.joint).unwrap_or(f64::NAN);
        println!(
            "{metric}: {} epochs ({:?}), final joint loss {last:.6}",
            trace.stop_epoch, trace.stop_reason
        );
    }
    Ok(())
}

fn cmd_evaluate(cfg: &RunConfig) -> crate::Result<()> {
    let cases = load_cohort(cfg).stage("ingest")?;
    let report = run_experiment(&cases, &cfg.experiment())?;
    write_file(&cfg.out.join("report.json"), report.to_json())?;
    let table = report.to_table();
    write_file(&cfg.out.join("report.txt"), &table)?;
    for e in &report.embeddings {
        let path = cfg.out.join(e.file_name());
        e.table.write_csv(create_file(&path)?).map_err(|err| Error::io(&path, err))?;
    }
    print!("{table}");
    Ok(())
}

fn cmd_export(cfg: &RunConfig) -> crate::Result<()> {
    let cases = load_cohort(cfg).stage("ingest")?;
    let labels = labels_of(&cases);
    let ids: Vec<String> = cases.iter().map(|c| c.record.patient_id.clone()).collect();
    let grams = load_grams(cfg, cases.len())?;
    let rows = KernelRows::new(grams[0].values.view(), grams[1].values.view(), grams[2].values.view())?;
    for metric in single_metrics(cfg) {
        let path = cfg.out.join(format!("model_{metric}.knet"));
        let net = read_model(&read_file(&path)?[..]).stage("model")?;
        let table = export_embeddings(
            &net,
            &[EmbeddingInput { ids: &ids, labels: &labels, rows, split: Split::Train }],
        )
        .stage("export")?;
        let out = cfg.out.join(format!("embeddings_{metric}.csv"));
        table.write_csv(create_file(&out)?).map_err(|e| Error::io(&out, e))?;
        println!("{}: {} rows", out.display(), table.rows.len());
    }
    Ok(())
}

/// Runs the resolved command.
pub fn execute(cli: &Cli, cfg: &RunConfig) -> CliResult<()> {
    if cfg.threads == 0 {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    // A pool may already exist when called more than once in one process.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global();
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let name = command_name(&cli.command);
    write_file(&cfg.out.join(format!("{name}.cfg")), cfg.to_text())?;
    match &cli.command {
        Command::Generate(_) => cmd_generate(cfg)?,
        Command::Ingest(_) => cmd_ingest(cfg)?,
        Command::Gram(_) => cmd_gram(cfg)?,
        Command::Train(_) => cmd_train(cfg)?,
        Command::Evaluate(_) => cmd_evaluate(cfg)?,
        Command::ExportEmbeddings(_) => cmd_export(cfg)?,
    }
    Ok(())
}

/// Parses arguments, runs, and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    let result = resolve_config(&cli).and_then(|cfg| execute(&cli, &cfg));
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
