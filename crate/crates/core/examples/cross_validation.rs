// Full evaluation: rebalancing, stratified folds, per-fold Grams, both
// network variants and both linear baselines, with t-tests.
//
// ```text
// cargo run --release --example cross_validation
// ```

use rxkernel::ehr::DiseaseKind;
use rxkernel::eval::{run_experiment, ExperimentConfig};
use rxkernel::net::NetConfig;
use rxkernel::synth::{generate_cohort, CohortSpec};

pub fn run() -> rxkernel::Result<()> {
    let cases = generate_cohort(&CohortSpec::new(80, 0.5, DiseaseKind::ShortTerm, 9))?;
    let cfg = ExperimentConfig {
        k: 3,
        net: NetConfig {
            embed_dim_per_kernel: 16,
            fusion_dim: 8,
            classifier_dim: 8,
            learning_rate: 1e-3,
            max_epochs: 150,
            ..NetConfig::default()
        },
        seed: 9,
        ..ExperimentConfig::default()
    };
    let report = run_experiment(&cases, &cfg)?;
    print!("{}", report.to_table());
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
