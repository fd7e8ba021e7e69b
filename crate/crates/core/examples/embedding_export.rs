// Trains one network, then writes its fusion-layer embeddings with a 2D PCA
// projection as CSV.
//
// ```text
// cargo run --release --example embedding_export
// ```

use rxkernel::ehr::DiseaseKind;
use rxkernel::eval::{export_embeddings, EmbeddingInput, ExperimentConfig, FoldKernels, Split};
use rxkernel::graph::{build_patient_graph, PatientGraph};
use rxkernel::net::{train_on_rows, Metric, NetConfig};
use rxkernel::synth::{generate_cohort, CohortSpec};

pub fn run() -> rxkernel::Result<()> {
    let cases = generate_cohort(&CohortSpec::new(60, 0.5, DiseaseKind::ShortTerm, 2))?;
    let graphs: Vec<PatientGraph> = cases.iter().map(build_patient_graph).collect::<Result<_, _>>()?;
    let (train, test): (Vec<usize>, Vec<usize>) = (0..cases.len()).partition(|i| i % 4 != 0);
    let fk = FoldKernels::compute(ExperimentConfig::default().kernels(), &graphs, &train, &test)?;
    let pick = |idx: &[usize]| -> (Vec<String>, Vec<u8>) {
        idx.iter()
            .map(|&i| (cases[i].record.patient_id.clone(), cases[i].label.bit()))
            .unzip()
    };
    let (train_ids, y_train) = pick(&train);
    let (test_ids, y_test) = pick(&test);
    let cfg = NetConfig {
        embed_dim_per_kernel: 16,
        fusion_dim: 4,
        classifier_dim: 4,
        metric: Metric::Cosine,
        learning_rate: 1e-3,
        max_epochs: 150,
        seed: 2,
        ..NetConfig::default()
    };
    let (net, _) = train_on_rows(&fk.train_rows()?, &y_train, &cfg)?;
    let table = export_embeddings(
        &net,
        &[
            EmbeddingInput { ids: &train_ids, labels: &y_train, rows: fk.train_rows()?, split: Split::Train },
            EmbeddingInput { ids: &test_ids, labels: &y_test, rows: fk.test_rows()?, split: Split::Test },
        ],
    )?;
    let mut csv = Vec::new();
    table.write_csv(&mut csv).expect("in-memory write");
    let text = String::from_utf8(csv).expect("utf-8");
    for line in text.lines().take(4) {
        println!("{line}");
    }
    println!("... {} rows", table.rows.len());
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
