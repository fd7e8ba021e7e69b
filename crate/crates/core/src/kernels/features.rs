//! Explicit feature maps behind the three graph kernels.
//!
//! Every kernel here is an inner product of finite feature vectors, so any
//! Gram matrix assembled from them is PSD up to rounding.

use std::collections::HashMap;

use super::KernelKind;
use crate::graph::PatientGraph;

/// Sparse vector sorted by key.
pub type SparseVec = Vec<(u64, f64)>;

#[derive(Debug, Clone, PartialEq)]
pub enum Features {
    /// Label (or relabeled-subtree) counts.
    Counts(SparseVec),
    /// Mean edge weight per (src label, dst label) bucket.
    Buckets(SparseVec),
}

/// Compressed id per (label, predecessor labels, successor labels).
type WlDictionary = HashMap<(u32, Vec<u32>, Vec<u32>), u32>;

/// Label-compression state shared by every graph featurized with one instance.
///
/// Graphs whose features will be compared must go through the same
/// featurizer so that compressed WL labels agree.
#[derive(Debug)]
pub struct Featurizer {
    kind: KernelKind,
    labels: HashMap<String, u32>,
    wl_rounds: Vec<WlDictionary>,
}

impl Featurizer {
    pub fn new(kind: KernelKind) -> Self {
        let rounds = match kind {
            KernelKind::WlSubtree { h } => h as usize,
            _ => 0,
        };
        Self {
            kind,
            labels: HashMap::new(),
            wl_rounds: vec![HashMap::new(); rounds],
        }
    }

    fn intern(&mut self, label: &str) -> u32 {
        let next = self.labels.len() as u32;
        *self.labels.entry(label.to_owned()).or_insert(next)
    }

    pub fn features(&mut self, g: &PatientGraph) -> Features {
        let base: Vec<u32> = g.nodes().iter().map(|l| self.intern(l)).collect();
        match self.kind {
            KernelKind::VertexHistogram => Features::Counts(histogram(0, &base)),
            KernelKind::WlSubtree { .. } => Features::Counts(self.wl_features(g, base)),
            KernelKind::TemporalTopological { .. } => Features::Buckets(buckets(g, &base)),
        }
    }

    fn wl_features(&mut self, g: &PatientGraph, mut labels: Vec<u32>) -> SparseVec {
        let n = labels.len();
        let mut ins: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut outs: Vec<Vec<usize>> = vec![Vec::new(); n];
        for e in g.edges() {
            outs[e.src].push(e.dst);
            ins[e.dst].push(e.src);
        }
        let mut feats = histogram(0, &labels);
        for round in 0..self.wl_rounds.len() {
            let dict = &mut self.wl_rounds[round];
            let next: Vec<u32> = (0..n)
                .map(|v| {
                    let mut pred: Vec<u32> = ins[v].iter().map(|&u| labels[u]).collect();
                    let mut succ: Vec<u32> = outs[v].iter().map(|&u| labels[u]).collect();
                    pred.sort_unstable();
                    succ.sort_unstable();
                    let fresh = dict.len() as u32;
                    *dict.entry((labels[v], pred, succ)).or_insert(fresh)
                })
                .collect();
            labels = next;
            feats.extend(histogram(round as u64 + 1, &labels));
        }
        feats
    }
}

fn histogram(round: u64, labels: &[u32]) -> SparseVec {
    let mut keys: Vec<u64> = labels.iter().map(|&l| (round << 32) | l as u64).collect();
    keys.sort_unstable();
    let mut out: SparseVec = Vec::new();
    for k in keys {
        match out.last_mut() {
            Some((last, c)) if *last == k => *c += 1.0,
            _ => out.push((k, 1.0)),
        }
    }
    out
}

fn buckets(g: &PatientGraph, labels: &[u32]) -> SparseVec {
    let mut acc: HashMap<u64, (f64, u32)> = HashMap::new();
    for e in g.edges() {
        let key = ((labels[e.src] as u64) << 32) | labels[e.dst] as u64;
        let slot = acc.entry(key).or_insert((0.0, 0));
        slot.0 += e.weight as f64;
        slot.1 += 1;
    }
    let mut out: SparseVec = acc
        .into_iter()
        .map(|(k, (sum, n))| (k, sum / n as f64))
        .collect();
    out.sort_unstable_by_key(|&(k, _)| k);
    out
}

/// Walks keys present in both sparse vectors, in key order.
fn for_shared(a: &SparseVec, b: &SparseVec, mut f: impl FnMut(f64, f64)) {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                f(a[i].1, b[j].1);
                i += 1;
                j += 1;
            }
        }
    }
}

/// Kernel value between two feature vectors produced by the same featurizer.
pub fn evaluate(kind: KernelKind, a: &Features, b: &Features) -> f64 {
    let mut total = 0.0;
    match (a, b) {
        (Features::Counts(x), Features::Counts(y)) => for_shared(x, y, |p, q| total += p * q),
        (Features::Buckets(x), Features::Buckets(y)) => {
            let alpha = match kind {
                KernelKind::TemporalTopological { alpha } => alpha,
                _ => unreachable!("bucket features only come from the temporal kernel"),
            };
            for_shared(x, y, |p, q| {
                let d = p - q;
                total += (-alpha * d * d).exp();
            })
        }
        _ => unreachable!("features from different kernels"),
    }
    total
}
