//! Event records, demographics, disease definitions, and outcome labeling.
//!
//! Text formats are tab-separated, UTF-8, one row per line:
//!
//! ```text
//! events:        patient_id  day  kind(dx|rx|other)  code
//! demographics:  patient_id  gender(F|M|U)  age_years
//! labels:        patient_id  label(0|1)  index_day
//! ```
//!
//! Disease definitions are flat `key=value` files.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DAYS_PER_MONTH: u32 = 30;
pub const DAYS_PER_YEAR: u32 = 365;
pub const MAX_AGE_YEARS: u32 = 130;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Diagnosis,
    Prescription,
    Other,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Diagnosis => "dx",
            EventKind::Prescription => "rx",
            EventKind::Other => "other",
        }
    }
}

impl FromStr for EventKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "dx" => Ok(EventKind::Diagnosis),
            "rx" => Ok(EventKind::Prescription),
            "other" => Ok(EventKind::Other),
            _ => Err(format!("unknown event kind {s:?} (expected dx, rx or other)")),
        }
    }
}

/// A single coded event at a day offset from the global epoch.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MedicalEvent {
    pub code: String,
    pub day: u32,
    pub kind: EventKind,
}

impl MedicalEvent {
    pub fn new(code: impl Into<String>, day: u32, kind: EventKind) -> Self {
        Self {
            code: code.into(),
            day,
            kind,
        }
    }

    /// Ordering used for events: by day, then kind, then code.
    fn sort_key(&self) -> (u32, EventKind, &str) {
        (self.day, self.kind, self.code.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gender {
    Female,
    Male,
    Unknown,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Female => "F",
            Gender::Male => "M",
            Gender::Unknown => "U",
        }
    }
}

impl FromStr for Gender {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "F" => Ok(Gender::Female),
            "M" => Ok(Gender::Male),
            "U" => Ok(Gender::Unknown),
            _ => Err(format!("unknown gender {s:?} (expected F, M or U)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Demographics {
    pub gender: Gender,
    pub age_years: u32,
}

impl Default for Demographics {
    fn default() -> Self {
        Self {
            gender: Gender::Unknown,
            age_years: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: String,
    pub demographics: Demographics,
    /// Sorted by (day, kind, code).
    pub events: Vec<MedicalEvent>,
}

impl PatientRecord {
    pub fn new(
        patient_id: impl Into<String>,
        demographics: Demographics,
        mut events: Vec<MedicalEvent>,
    ) -> Self {
        sort_events(&mut events);
        Self {
            patient_id: patient_id.into(),
            demographics,
            events,
        }
    }
}

pub(crate) fn sort_events(events: &mut [MedicalEvent]) {
    events.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DiseaseKind {
    ShortTerm,
    Chronic,
}

impl DiseaseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DiseaseKind::ShortTerm => "short_term",
            DiseaseKind::Chronic => "chronic",
        }
    }

    /// History window used by the canned presets: two months or ten years.
    pub fn default_history_days(self) -> u32 {
        match self {
            DiseaseKind::ShortTerm => 2 * DAYS_PER_MONTH,
            DiseaseKind::Chronic => 10 * DAYS_PER_YEAR,
        }
    }
}

impl FromStr for DiseaseKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "short_term" => Ok(DiseaseKind::ShortTerm),
            "chronic" => Ok(DiseaseKind::Chronic),
            _ => Err(format!("unknown disease kind {s:?} (expected short_term or chronic)")),
        }
    }
}

/// Which events anchor a case and which later events count as treatment failure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiseaseSpec {
    pub name: String,
    pub index_codes: BTreeSet<String>,
    pub failure_codes: BTreeSet<String>,
    pub history_window_days: u32,
    pub outcome_window_days: u32,
    pub kind: DiseaseKind,
}

impl DiseaseSpec {
    pub fn validate(&self) -> Result<()> {
        if self.history_window_days == 0 {
            return Err(Error::invalid("history_window_days must be positive"));
        }
        if self.outcome_window_days == 0 {
            return Err(Error::invalid("outcome_window_days must be positive"));
        }
        if self.index_codes.is_empty() {
            return Err(Error::invalid("index_codes must not be empty"));
        }
        if self.failure_codes.is_empty() {
            return Err(Error::invalid("failure_codes must not be empty"));
        }
        Ok(())
    }

    /// Parses the flat `key=value` form. Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut fields: HashMap<&str, (usize, &str)> = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: "expected key=value".into(),
            })?;
            let key = key.trim();
            if !matches!(
                key,
                "name"
                    | "index_codes"
                    | "failure_codes"
                    | "history_window_days"
                    | "outcome_window_days"
                    | "kind"
            ) {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("unknown key {key:?}"),
                });
            }
            fields.insert(key, (i + 1, value.trim()));
        }
        let get = |key: &str| {
            fields
                .get(key)
                .copied()
                .ok_or_else(|| Error::invalid(format!("disease spec missing key {key:?}")))
        };
        let codes = |key: &str| -> Result<BTreeSet<String>> {
            let (_, v) = get(key)?;
            Ok(v.split(',')
                .map(str::trim)
                .filter(|c| !c.is_empty())
                .map(String::from)
                .collect())
        };
        let days = |key: &str| -> Result<u32> {
            let (line, v) = get(key)?;
            v.parse().map_err(|_| Error::Parse {
                line,
                message: format!("{key} must be a non-negative integer, got {v:?}"),
            })
        };
        let (kind_line, kind) = get("kind")?;
        let spec = DiseaseSpec {
            name: get("name")?.1.to_string(),
            index_codes: codes("index_codes")?,
            failure_codes: codes("failure_codes")?,
            history_window_days: days("history_window_days")?,
            outcome_window_days: days("outcome_window_days")?,
            kind: kind.parse().map_err(|message| Error::Parse {
                line: kind_line,
                message,
            })?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for DiseaseSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |s: &BTreeSet<String>| s.iter().cloned().collect::<Vec<_>>().join(",");
        writeln!(f, "name={}", self.name)?;
        writeln!(f, "index_codes={}", join(&self.index_codes))?;
        writeln!(f, "failure_codes={}", join(&self.failure_codes))?;
        writeln!(f, "history_window_days={}", self.history_window_days)?;
        writeln!(f, "outcome_window_days={}", self.outcome_window_days)?;
        writeln!(f, "kind={}", self.kind.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Success = 0,
    Failure = 1,
}

impl Outcome {
    pub fn from_bit(bit: u8) -> Option<Self> {
        match bit {
            0 => Some(Outcome::Success),
            1 => Some(Outcome::Failure),
            _ => None,
        }
    }

    pub fn bit(self) -> u8 {
        self as u8
    }
}

/// A patient's history up to and including the index event, with its outcome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledCase {
    pub record: PatientRecord,
    pub label: Outcome,
    pub index_day: u32,
}

/// Result of labeling: the kept cases plus how many records had no index event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cohort {
    pub cases: Vec<LabeledCase>,
    pub excluded: usize,
}

fn split_row(line: &str, lineno: usize, expected: usize) -> Result<Vec<&str>> {
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() != expected {
        return Err(Error::Parse {
            line: lineno,
            message: format!("expected {expected} tab-separated columns, found {}", cols.len()),
        });
    }
    Ok(cols)
}

fn utf8(input: &[u8]) -> Result<&str> {
    std::str::from_utf8(input).map_err(|e| Error::Parse {
        line: 1 + input[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count(),
        message: "input is not valid UTF-8".into(),
    })
}

fn parse_event_line(line: &str, lineno: usize) -> Result<(String, MedicalEvent)> {
    let cols = split_row(line, lineno, 4)?;
    let patient = cols[0].trim();
    if patient.is_empty() {
        return Err(Error::Parse {
            line: lineno,
            message: "empty patient_id".into(),
        });
    }
    let day_text = cols[1].trim();
    let day: i64 = day_text.parse().map_err(|_| Error::Parse {
        line: lineno,
        message: format!("day {day_text:?} is not an integer"),
    })?;
    if day < 0 {
        return Err(Error::Parse {
            line: lineno,
            message: format!("negative day {day}"),
        });
    }
    let day = u32::try_from(day).map_err(|_| Error::Parse {
        line: lineno,
        message: format!("day {day} out of range"),
    })?;
    let kind: EventKind = cols[2]
        .trim()
        .parse()
        .map_err(|message| Error::Parse { line: lineno, message })?;
    let code = cols[3].trim();
    if code.is_empty() {
        return Err(Error::Parse {
            line: lineno,
            message: "empty event code".into(),
        });
    }
    Ok((patient.to_string(), MedicalEvent::new(code, day, kind)))
}

/// Parses event rows into one record per patient, ordered by patient id.
///
/// Demographics default to unknown gender and age 0; see [`attach_demographics`].
pub fn parse_records(input: &[u8]) -> Result<Vec<PatientRecord>> {
    let text = utf8(input)?;
    let mut by_patient: BTreeMap<String, Vec<MedicalEvent>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (patient, event) = parse_event_line(line, i + 1)?;
        by_patient.entry(patient).or_default().push(event);
    }
    Ok(by_patient
        .into_iter()
        .map(|(id, mut events)| {
            sort_events(&mut events);
            events.dedup();
            PatientRecord {
                patient_id: id,
                demographics: Demographics::default(),
                events,
            }
        })
        .collect())
}

pub fn parse_demographics(input: &[u8]) -> Result<BTreeMap<String, Demographics>> {
    let text = utf8(input)?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        let cols = split_row(line, lineno, 3)?;
        let gender: Gender = cols[1]
            .trim()
            .parse()
            .map_err(|message| Error::Parse { line: lineno, message })?;
        let age: u32 = cols[2].trim().parse().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("age {:?} is not a non-negative integer", cols[2]),
        })?;
        if age > MAX_AGE_YEARS {
            return Err(Error::Parse {
                line: lineno,
                message: format!("age {age} exceeds {MAX_AGE_YEARS}"),
            });
        }
        let id = cols[0].trim().to_string();
        if out
            .insert(id.clone(), Demographics { gender, age_years: age })
            .is_some()
        {
            return Err(Error::Parse {
                line: lineno,
                message: format!("duplicate demographics for patient {id:?}"),
            });
        }
    }
    Ok(out)
}

/// Fills in demographics; patients without a row keep the unknown default.
pub fn attach_demographics(records: &mut [PatientRecord], demo: &BTreeMap<String, Demographics>) {
    for r in records {
        if let Some(d) = demo.get(&r.patient_id) {
            r.demographics = *d;
        }
    }
}

pub fn write_records(records: &[PatientRecord]) -> String {
    let mut out = String::new();
    for r in records {
        for e in &r.events {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                r.patient_id,
                e.day,
                e.kind.as_str(),
                e.code
            ));
        }
    }
    out
}

pub fn write_demographics(records: &[PatientRecord]) -> String {
    records
        .iter()
        .map(|r| {
            format!(
                "{}\t{}\t{}\n",
                r.patient_id,
                r.demographics.gender.as_str(),
                r.demographics.age_years
            )
        })
        .collect()
}

pub fn write_labels(cases: &[LabeledCase]) -> String {
    cases
        .iter()
        .map(|c| format!("{}\t{}\t{}\n", c.record.patient_id, c.label.bit(), c.index_day))
        .collect()
}

/// Parses a labels manifest, preserving row order.
pub fn parse_labels(input: &[u8]) -> Result<Vec<(String, Outcome, u32)>> {
    let text = utf8(input)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        let cols = split_row(line, lineno, 3)?;
        let label = cols[1]
            .trim()
            .parse::<u8>()
            .ok()
            .and_then(Outcome::from_bit)
            .ok_or_else(|| Error::Parse {
                line: lineno,
                message: format!("label {:?} is not 0 or 1", cols[1]),
            })?;
        let index_day = cols[2].trim().parse().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("index_day {:?} is not a non-negative integer", cols[2]),
        })?;
        out.push((cols[0].trim().to_string(), label, index_day));
    }
    Ok(out)
}

/// Rebuilds labeled cases from a labels manifest and already-truncated records.
/// Case order follows the manifest.
pub fn assemble_cases(
    labels: &[(String, Outcome, u32)],
    records: Vec<PatientRecord>,
) -> Result<Vec<LabeledCase>> {
    let mut by_id: HashMap<String, PatientRecord> =
        records.into_iter().map(|r| (r.patient_id.clone(), r)).collect();
    labels
        .iter()
        .map(|(id, label, index_day)| {
            let record = by_id
                .remove(id)
                .ok_or_else(|| Error::invalid(format!("no events for labeled patient {id:?}")))?;
            Ok(LabeledCase {
                record,
                label: *label,
                index_day: *index_day,
            })
        })
        .collect()
}

fn label_one(record: &PatientRecord, spec: &DiseaseSpec) -> Option<LabeledCase> {
    let index = record
        .events
        .iter()
        .find(|e| spec.index_codes.contains(&e.code))?;
    let index_day = index.day;
    let outcome_end = index_day.saturating_add(spec.outcome_window_days);
    let failed = record.events.iter().any(|e| {
        e.day > index_day && e.day <= outcome_end && spec.failure_codes.contains(&e.code)
    });
    let history_start = index_day.saturating_sub(spec.history_window_days);
    let events = record
        .events
        .iter()
        .filter(|e| e.day >= history_start && e.day <= index_day)
        .cloned()
        .collect();
    Some(LabeledCase {
        record: PatientRecord {
            patient_id: record.patient_id.clone(),
            demographics: record.demographics,
            events,
        },
        label: if failed { Outcome::Failure } else { Outcome::Success },
        index_day,
    })
}

/// Labels each record against a disease definition.
///
/// The first index-code event anchors the case. The case fails when any
/// failure code occurs in `(index_day, index_day + outcome_window_days]`.
/// History is cut to `[index_day - history_window_days, index_day]`. Records
/// without an index event are dropped and counted.
pub fn label_cohort(records: &[PatientRecord], spec: &DiseaseSpec) -> Cohort {
    let mut cases = Vec::with_capacity(records.len());
    let mut excluded = 0;
    for r in records {
        match label_one(r, spec) {
            Some(c) => cases.push(c),
            None => excluded += 1,
        }
    }
    Cohort { cases, excluded }
}
