//! Patient graphs: a demographics node followed by a time-weighted chain of events.

use std::fmt::Write as _;

use crate::ehr::{Gender, LabeledCase};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    /// Days for event edges, years of age for the demographics edge.
    pub weight: u32,
}

/// Weighted DAG over `[demo] ++ events`. Node 0 is always the demographics node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatientGraph {
    nodes: Vec<String>,
    edges: Vec<Edge>,
}

pub fn demo_label(gender: Gender) -> String {
    format!("DEMO:{}", gender.as_str())
}

impl PatientGraph {
    /// Builds a graph from raw parts. Used by tests and generators that bypass
    /// [`build_patient_graph`]; edges must point forward.
    pub fn from_parts(nodes: Vec<String>, edges: Vec<Edge>) -> Result<Self> {
        for e in &edges {
            if e.src >= e.dst || e.dst >= nodes.len() {
                return Err(Error::invalid(format!(
                    "edge {}->{} is not forward within {} nodes",
                    e.src,
                    e.dst,
                    nodes.len()
                )));
            }
        }
        Ok(Self { nodes, edges })
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn demo_edge_weight(&self) -> Option<u32> {
        self.edges.iter().find(|e| e.src == 0).map(|e| e.weight)
    }

    /// Plain-text adjacency listing, one `src\tdst\tweight` line per edge.
    pub fn adjacency_listing(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            let _ = writeln!(out, "{}\t{}\t{}", self.nodes[e.src], self.nodes[e.dst], e.weight);
        }
        out
    }

    /// True when every node is reachable from node 0 ignoring direction.
    pub fn is_connected(&self) -> bool {
        let n = self.nodes.len();
        if n == 0 {
            return true;
        }
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for e in &self.edges {
            let (a, b) = (find(&mut parent, e.src), find(&mut parent, e.dst));
            parent[a] = b;
        }
        let root = find(&mut parent, 0);
        (0..n).all(|v| find(&mut parent, v) == root)
    }

    /// Forward-only edges over node positions imply acyclicity.
    pub fn is_acyclic(&self) -> bool {
        self.edges.iter().all(|e| e.src < e.dst)
    }
}

/// Chains a case's events in day order behind a demographics node.
pub fn build_patient_graph(case: &LabeledCase) -> Result<PatientGraph> {
    let record = &case.record;
    if record.events.is_empty() {
        return Err(Error::EmptyCase(record.patient_id.clone()));
    }
    let mut events = record.events.clone();
    crate::ehr::sort_events(&mut events);

    let mut nodes = Vec::with_capacity(events.len() + 1);
    nodes.push(demo_label(record.demographics.gender));
    nodes.extend(events.iter().map(|e| e.code.clone()));

    let mut edges = Vec::with_capacity(events.len());
    edges.push(Edge {
        src: 0,
        dst: 1,
        weight: record.demographics.age_years,
    });
    for (i, pair) in events.windows(2).enumerate() {
        edges.push(Edge {
            src: i + 1,
            dst: i + 2,
            weight: pair[1].day - pair[0].day,
        });
    }
    Ok(PatientGraph { nodes, edges })
}
