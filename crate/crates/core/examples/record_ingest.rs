// Parses tab-separated event records and a disease definition, then labels
// each patient as a success or failure.
//
// ```text
// cargo run --example record_ingest
// ```

use rxkernel::ehr::{label_cohort, parse_records, DiseaseSpec};

const EVENTS: &str = "\
p1\t100\tdx\tJ01
p1\t110\trx\tAMOX
p1\t120\tdx\tN39
p1\t150\tdx\tN39
p2\t10\trx\tIBU
p2\t30\tdx\tN39
p2\t200\tdx\tN39
p3\t5\tdx\tJ01
";

const DISEASE: &str = "\
name = uti
kind = short_term
index_codes = N39
failure_codes = N39
history_window_days = 60
outcome_window_days = 60
";

pub fn run() -> rxkernel::Result<()> {
    let records = parse_records(EVENTS.as_bytes())?;
    let spec = DiseaseSpec::parse(DISEASE)?;
    let cohort = label_cohort(&records, &spec);
    for case in &cohort.cases {
        let codes: Vec<&str> = case.record.events.iter().map(|e| e.code.as_str()).collect();
        println!(
            "{} index day {} -> {:?}, history {:?}",
            case.record.patient_id, case.index_day, case.label, codes
        );
    }
    println!("excluded without index event: {}", cohort.excluded);
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
