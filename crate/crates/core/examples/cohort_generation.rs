// Simulates a preset cohort, labels it, and rebalances it both ways.
//
// ```text
// cargo run --example cohort_generation
// ```

use rxkernel::ehr::{write_labels, Outcome};
use rxkernel::synth::{generate_cohort, rebalance, BalanceMode, CohortSpec, Preset};

fn failures(cases: &[rxkernel::ehr::LabeledCase]) -> usize {
    cases.iter().filter(|c| c.label == Outcome::Failure).count()
}

pub fn run() -> rxkernel::Result<()> {
    let spec = CohortSpec::from_preset(Preset::Uti, 400, 7);
    let cases = generate_cohort(&spec)?;
    println!("uti: {} cases, {} failures", cases.len(), failures(&cases));

    for mode in BalanceMode::ALL {
        let kept = rebalance(&cases, mode, 7)?;
        println!("{mode}: {} cases, {} failures", kept.len(), failures(&kept));
    }

    let first = &cases[0];
    println!(
        "{}: {} history events, index day {}, label {:?}",
        first.record.patient_id,
        first.record.events.len(),
        first.index_day,
        first.label
    );
    print!("{}", &write_labels(&cases)[..60]);
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
