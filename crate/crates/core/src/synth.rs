//! Seeded synthetic cohorts and class rebalancing.
//!
//! Real claims data is not redistributable, so cohorts are simulated. Each
//! patient gets a history of coded events before an index diagnosis, and
//! failure cases get a failure-code event inside the outcome window.
//!
//! Class signal lives in *which codes co-occur*, not in how often any
//! single code appears. The first `4g` codes of the vocabulary form four
//! groups `G1..G4`. A failure case draws its signal events from `G1 ∪ G2`
//! or `G3 ∪ G4`; a success case from `G1 ∪ G3` or `G2 ∪ G4`. Every group
//! is equally frequent in both classes, so per-code counts carry no linear
//! signal, while code co-occurrence (and hence graph structure) separates
//! the classes. With signal strength `s`, each history step emits, with
//! probability `s`, a consecutive pair of codes (one from each of the case's
//! two groups) and otherwise a single code from the uniform base vocabulary. For chronic cohorts, failure cases also have
//! inter-event gaps stretched by `1 + s`.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ehr::{
    label_cohort, Demographics, DiseaseKind, DiseaseSpec, EventKind, Gender, LabeledCase,
    MedicalEvent, Outcome, PatientRecord,
};
use crate::error::{Error, Result};

/// The seven diseases of the reference cohort, with their published sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Uti,
    Aom,
    Pneumonia,
    Cystitis,
    Htn,
    Lipid,
    Dm,
}

pub struct PresetInfo {
    pub name: &'static str,
    pub disease: &'static str,
    pub cases: u64,
    pub failures: u64,
    /// Failure share in percent, as published.
    pub failure_percent: u32,
    pub kind: DiseaseKind,
}

impl Preset {
    pub const ALL: [Preset; 7] = [
        Preset::Uti,
        Preset::Aom,
        Preset::Pneumonia,
        Preset::Cystitis,
        Preset::Htn,
        Preset::Lipid,
        Preset::Dm,
    ];

    pub fn info(self) -> PresetInfo {
        use DiseaseKind::*;
        let (name, disease, cases, failures, failure_percent, kind) = match self {
            Preset::Uti => ("uti", "Urinary tract infection", 1_501_310, 703_646, 47, ShortTerm),
            Preset::Aom => ("aom", "Acute otitis media", 151_522, 72_264, 48, ShortTerm),
            Preset::Pneumonia => ("pneumonia", "Pneumonia", 95_796, 37_724, 39, ShortTerm),
            Preset::Cystitis => ("cystitis", "Acute cystitis", 733_119, 301_902, 41, ShortTerm),
            Preset::Htn => ("htn", "Hypertension", 235_695, 104_936, 45, Chronic),
            Preset::Lipid => ("lipid", "Hyperlipidemia", 123_380, 26_043, 21, Chronic),
            Preset::Dm => ("dm", "Diabetes", 131_997, 34_414, 26, Chronic),
        };
        PresetInfo {
            name,
            disease,
            cases,
            failures,
            failure_percent,
            kind,
        }
    }

    pub fn failure_ratio(self) -> f64 {
        self.info().failure_percent as f64 / 100.0
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.info().name)
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.info().name == s)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown preset {s:?} (expected uti, aom, pneumonia, cystitis, htn, lipid or dm)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub n_cases: usize,
    pub failure_ratio: f64,
    pub kind: DiseaseKind,
    pub signal_strength: f64,
    pub vocab_size: usize,
    /// Inclusive range of history events per case, index event excluded.
    pub events_per_case: (usize, usize),
    pub seed: u64,
    pub preset: Option<Preset>,
}

impl CohortSpec {
    pub fn new(n_cases: usize, failure_ratio: f64, kind: DiseaseKind, seed: u64) -> Self {
        let events_per_case = match kind {
            DiseaseKind::ShortTerm => (4, 12),
            DiseaseKind::Chronic => (8, 40),
        };
        Self {
            n_cases,
            failure_ratio,
            kind,
            signal_strength: 1.0,
            vocab_size: 64,
            events_per_case,
            seed,
            preset: None,
        }
    }

    pub fn from_preset(preset: Preset, n_cases: usize, seed: u64) -> Self {
        let info = preset.info();
        Self {
            preset: Some(preset),
            ..Self::new(n_cases, preset.failure_ratio(), info.kind, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_cases < 2 {
            return Err(Error::invalid("cohort needs at least two cases"));
        }
        if !(self.failure_ratio > 0.0 && self.failure_ratio < 1.0) {
            return Err(Error::invalid("failure_ratio must lie in (0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.signal_strength) {
            return Err(Error::invalid("signal_strength must lie in [0, 1]"));
        }
        if self.vocab_size < 8 {
            return Err(Error::invalid("vocab_size must be at least 8"));
        }
        let (lo, hi) = self.events_per_case;
        if lo == 0 || lo > hi {
            return Err(Error::invalid("events_per_case must be a non-empty range starting at 1 or more"));
        }
        Ok(())
    }

    pub fn failure_count(&self) -> usize {
        (self.n_cases as f64 * self.failure_ratio).round() as usize
    }

    fn name(&self) -> String {
        match self.preset {
            Some(p) => p.to_string(),
            None => format!("synthetic_{}", self.kind.as_str()),
        }
    }

    /// Disease definition matching the generated records.
    pub fn disease(&self) -> DiseaseSpec {
        let name = self.name();
        let index = format!("IDX:{name}");
        let failure = match self.kind {
            DiseaseKind::ShortTerm => index.clone(),
            DiseaseKind::Chronic => format!("CMP:{name}"),
        };
        DiseaseSpec {
            index_codes: [index].into(),
            failure_codes: [failure].into(),
            history_window_days: self.kind.default_history_days(),
            outcome_window_days: match self.kind {
                DiseaseKind::ShortTerm => 2 * crate::ehr::DAYS_PER_MONTH,
                DiseaseKind::Chronic => 2 * crate::ehr::DAYS_PER_YEAR,
            },
            kind: self.kind,
            name,
        }
    }
}

/// Full event records plus the disease definition that labels them.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCohort {
    pub records: Vec<PatientRecord>,
    pub disease: DiseaseSpec,
}

fn code_name(j: usize) -> String {
    format!("C{j:03}")
}

fn code_kind(j: usize) -> EventKind {
    match j % 10 {
        0..=4 => EventKind::Diagnosis,
        5..=8 => EventKind::Prescription,
        _ => EventKind::Other,
    }
}

/// Codes making up the two signal groups for one profile.
fn signal_codes(vocab: usize, failure: bool, flip: bool) -> Vec<usize> {
    let g = (vocab / 8).max(1);
    let groups: [usize; 2] = match (failure, flip) {
        (true, false) => [0, 1],
        (true, true) => [2, 3],
        (false, false) => [0, 2],
        (false, true) => [1, 3],
    };
    groups
        .iter()
        .flat_map(|&k| k * g..(k + 1) * g)
        .collect()
}

/// History events for one case, as (offset days before index, code index).
///
/// Draws the same random sequence regardless of the label, so at signal 0
/// both classes share one distribution.
fn history(rng: &mut ChaCha8Rng, spec: &CohortSpec, failure: bool) -> Vec<(u32, usize)> {
    let (lo, hi) = spec.events_per_case;
    let n = rng.random_range(lo..=hi);
    let flip = rng.random_bool(0.5);
    let g = (spec.vocab_size / 8).max(1);
    let pool = signal_codes(spec.vocab_size, failure, flip);
    let mut codes: Vec<usize> = Vec::with_capacity(n + 1);
    while codes.len() < n {
        let from_signal = rng.random::<f64>() < spec.signal_strength;
        let first = pool[rng.random_range(0..g)];
        let second = pool[g + rng.random_range(0..g)];
        let base = rng.random_range(0..spec.vocab_size);
        if from_signal {
            codes.extend([first, second]);
        } else {
            codes.push(base);
        }
    }
    let n = codes.len();

    let window = spec.kind.default_history_days() as f64;
    let stretch = if failure && spec.kind == DiseaseKind::Chronic {
        1.0 + spec.signal_strength
    } else {
        1.0
    };
    let mean_gap = 0.45 * window / (n as f64 + 1.0);
    let mut gaps: Vec<f64> = (0..n)
        .map(|_| {
            let u: f64 = rng.random_range(f64::EPSILON..1.0);
            -u.ln() * mean_gap * stretch
        })
        .collect();
    let total: f64 = gaps.iter().sum();
    if total > window {
        for g in &mut gaps {
            *g *= window / total;
        }
    }
    // Walk backwards from the index day.
    let mut offset = 0.0;
    let mut out = Vec::with_capacity(n);
    for (g, c) in gaps.into_iter().zip(codes) {
        offset += g;
        out.push((offset.floor().min(window) as u32, c));
    }
    out
}

/// Simulates raw event records (history, index event, follow-up).
pub fn generate_records(spec: &CohortSpec) -> Result<SyntheticCohort> {
    spec.validate()?;
    let disease = spec.disease();
    let index_code = disease.index_codes.iter().next().expect("one index code").clone();
    let failure_code = disease.failure_codes.iter().next().expect("one failure code").clone();
    let history_window = disease.history_window_days;
    let outcome_window = disease.outcome_window_days;

    let mut master = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut outcomes = vec![false; spec.n_cases];
    outcomes[..spec.failure_count()].fill(true);
    outcomes.shuffle(&mut master);

    let records = outcomes
        .iter()
        .enumerate()
        .map(|(i, &failure)| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(i as u64 + 1);
            let gender = match rng.random_range(0..100) {
                0..=1 => Gender::Unknown,
                2..=50 => Gender::Female,
                _ => Gender::Male,
            };
            let age_years = rng.random_range(18..=90);
            let index_day = history_window + rng.random_range(0..1000);
            let mut events: Vec<MedicalEvent> = history(&mut rng, spec, failure)
                .into_iter()
                .map(|(off, c)| MedicalEvent::new(code_name(c), index_day - off, code_kind(c)))
                .collect();
            events.push(MedicalEvent::new(index_code.clone(), index_day, EventKind::Diagnosis));

            // Follow-up: failures inside the outcome window; some successes
            // see the failure code only after the window closes.
            let follow = rng.random_range(1..=outcome_window);
            let late = outcome_window + rng.random_range(1..=200);
            let late_recurrence = rng.random_bool(0.3);
            if failure {
                events.push(MedicalEvent::new(failure_code.clone(), index_day + follow, EventKind::Diagnosis));
            } else if late_recurrence {
                events.push(MedicalEvent::new(failure_code.clone(), index_day + late, EventKind::Diagnosis));
            }
            let noise = rng.random_range(0..spec.vocab_size);
            events.push(MedicalEvent::new(
                code_name(noise),
                index_day + rng.random_range(1..=outcome_window),
                code_kind(noise),
            ));
            PatientRecord::new(format!("P{i:06}"), Demographics { gender, age_years }, events)
        })
        .collect();
    Ok(SyntheticCohort { records, disease })
}

/// Generates labeled cases: the simulated records run through outcome labeling.
pub fn generate_cohort(spec: &CohortSpec) -> Result<Vec<LabeledCase>> {
    let cohort = generate_records(spec)?;
    let labeled = label_cohort(&cohort.records, &cohort.disease);
    debug_assert_eq!(labeled.excluded, 0);
    Ok(labeled.cases)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalanceMode {
    /// Both classes cut to the minority size.
    Balanced,
    /// Majority:minority = 70:30.
    Imbalanced,
}

impl BalanceMode {
    pub const ALL: [BalanceMode; 2] = [BalanceMode::Balanced, BalanceMode::Imbalanced];

    pub fn as_str(self) -> &'static str {
        match self {
            BalanceMode::Balanced => "balanced",
            BalanceMode::Imbalanced => "imbalanced",
        }
    }

    /// Class sizes after rebalancing, as (majority, minority).
    pub fn quotas(self, majority: usize, minority: usize) -> (usize, usize) {
        match self {
            BalanceMode::Balanced => (minority, minority),
            BalanceMode::Imbalanced => {
                let majority_quota = minority * 70 / 30;
                if majority >= majority_quota {
                    (majority_quota, minority)
                } else {
                    (majority, majority * 30 / 70)
                }
            }
        }
    }
}

impl fmt::Display for BalanceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BalanceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "balanced" => Ok(BalanceMode::Balanced),
            "imbalanced" | "imbalanced_70_30" => Ok(BalanceMode::Imbalanced),
            _ => Err(Error::invalid(format!("unknown balance mode {s:?}"))),
        }
    }
}

/// Downsamples classes to the mode's quotas, without replacement, then shuffles.
/// On a tie the success class is treated as the majority.
pub fn rebalance(cases: &[LabeledCase], mode: BalanceMode, seed: u64) -> Result<Vec<LabeledCase>> {
    let (mut fail, mut success): (Vec<usize>, Vec<usize>) =
        (0..cases.len()).partition(|&i| cases[i].label == Outcome::Failure);
    if fail.is_empty() || success.is_empty() {
        return Err(Error::SingleClass);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let failure_is_majority = fail.len() > success.len();
    let (majority, minority) = if failure_is_majority {
        (&mut fail, &mut success)
    } else {
        (&mut success, &mut fail)
    };
    let (keep_major, keep_minor) = mode.quotas(majority.len(), minority.len());
    majority.shuffle(&mut rng);
    minority.shuffle(&mut rng);
    let mut picked: Vec<usize> = majority[..keep_major]
        .iter()
        .chain(&minority[..keep_minor])
        .copied()
        .collect();
    picked.sort_unstable();
    picked.shuffle(&mut rng);
    Ok(picked.into_iter().map(|i| cases[i].clone()).collect())
}
