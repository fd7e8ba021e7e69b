// Builds the event-chain graph of one synthetic patient and prints its edges.
//
// ```text
// cargo run --example patient_graph
// ```

use rxkernel::ehr::DiseaseKind;
use rxkernel::graph::build_patient_graph;
use rxkernel::synth::{generate_cohort, CohortSpec};

pub fn run() -> rxkernel::Result<()> {
    let cases = generate_cohort(&CohortSpec::new(4, 0.5, DiseaseKind::ShortTerm, 3))?;
    let g = build_patient_graph(&cases[0])?;
    println!(
        "{} nodes, {} edges, demographics edge weight {}",
        g.node_count(),
        g.edges().len(),
        g.demo_edge_weight().unwrap_or(0)
    );
    print!("{}", g.adjacency_listing());
    assert!(g.is_connected() && g.is_acyclic());
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
