// Computes normalized Gram matrices for all three kernels, checks that they
// are positive semidefinite, and round-trips one through the binary format.
//
// ```text
// cargo run --release --example gram_matrices
// ```

use rxkernel::ehr::DiseaseKind;
use rxkernel::graph::{build_patient_graph, PatientGraph};
use rxkernel::kernels::{gram_matrix, read_gram, write_gram, KernelKind};
use rxkernel::synth::{generate_cohort, CohortSpec};

pub fn run() -> rxkernel::Result<()> {
    let cases = generate_cohort(&CohortSpec::new(60, 0.5, DiseaseKind::ShortTerm, 1))?;
    let graphs: Vec<PatientGraph> = cases.iter().map(build_patient_graph).collect::<Result<_, _>>()?;
    let kinds = [
        KernelKind::WlSubtree { h: 3 },
        KernelKind::TemporalTopological { alpha: 1e-3 },
        KernelKind::VertexHistogram,
    ];
    for kind in kinds {
        let g = gram_matrix(kind, &graphs, true)?;
        let min = g.validate()?;
        println!("{kind}: {n} x {n}, k(0,1) = {:.4}, min eigenvalue {min:.3e}", g.values[[0, 1]], n = g.len());

        let mut bytes = Vec::new();
        write_gram(&g, &mut bytes).expect("in-memory write");
        assert_eq!(read_gram(&bytes[..])?, g);
    }
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
