// Trains the embedding network on three training Grams under both metrics
// and scores a held-out split through cross-Gram rows.
//
// ```text
// cargo run --release --example train_network
// ```

use rxkernel::ehr::DiseaseKind;
use rxkernel::eval::{compute_metrics, ExperimentConfig, FoldKernels};
use rxkernel::graph::{build_patient_graph, PatientGraph};
use rxkernel::net::{predict, train_on_rows, write_model, Metric, NetConfig};
use rxkernel::synth::{generate_cohort, CohortSpec};

pub fn run() -> rxkernel::Result<()> {
    let cases = generate_cohort(&CohortSpec::new(120, 0.5, DiseaseKind::ShortTerm, 5))?;
    let graphs: Vec<PatientGraph> = cases.iter().map(build_patient_graph).collect::<Result<_, _>>()?;
    let labels: Vec<u8> = cases.iter().map(|c| c.label.bit()).collect();
    let train: Vec<usize> = (0..90).collect();
    let test: Vec<usize> = (90..120).collect();
    let fk = FoldKernels::compute(ExperimentConfig::default().kernels(), &graphs, &train, &test)?;
    let y_train: Vec<u8> = train.iter().map(|&i| labels[i]).collect();
    let y_test: Vec<u8> = test.iter().map(|&i| labels[i]).collect();

    for metric in [Metric::Euclidean, Metric::Cosine] {
        let cfg = NetConfig {
            embed_dim_per_kernel: 32,
            fusion_dim: 8,
            classifier_dim: 8,
            metric,
            learning_rate: 1e-3,
            max_epochs: 200,
            seed: 11,
            ..NetConfig::default()
        };
        let (net, trace) = train_on_rows(&fk.train_rows()?, &y_train, &cfg)?;
        let preds = predict(&net, &fk.test_rows()?)?;
        let probs: Vec<f64> = preds.iter().map(|p| p.probability).collect();
        let hard: Vec<u8> = preds.iter().map(|p| p.label).collect();
        let m = compute_metrics(&probs, &hard, &y_test)?;
        println!(
            "{metric}: joint loss {:.3} -> {:.3} in {} epochs; held-out ACC {:.3} F1 {:.3} AUC {:.3}",
            trace.first().map_or(0.0, |l| l.joint),
            trace.last().map_or(0.0, |l| l.joint),
            trace.stop_epoch,
            m.acc,
            m.f1,
            m.auc
        );
        let mut bytes = Vec::new();
        write_model(&net, &mut bytes).expect("in-memory write");
        println!("  model file: {} bytes", bytes.len());
    }
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
