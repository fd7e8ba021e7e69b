use std::fmt;
use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{EmbedNet, KernelRows};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// One group of cases to embed: their kernel rows against the training set.
#[derive(Debug, Clone, Copy)]
pub struct EmbeddingInput<'a> {
    pub ids: &'a [String],
    pub labels: &'a [u8],
    pub rows: KernelRows<'a>,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRow {
    pub id: String,
    pub split: Split,
    pub label: u8,
    pub embedding: Vec<f64>,
    pub x2d: f64,
    pub y2d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub rows: Vec<EmbeddingRow>,
}

impl EmbeddingTable {
    /// CSV with header `id,split,label,e_0..e_{d-1},x2d,y2d`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "id,split,label")?;
        for j in 0..self.dim {
            write!(w, ",e_{j}")?;
        }
        writeln!(w, ",x2d,y2d")?;
        for r in &self.rows {
            write!(w, "{},{},{}", r.id, r.split, r.label)?;
            for v in &r.embedding {
                write!(w, ",{v}")?;
            }
            writeln!(w, ",{},{}", r.x2d, r.y2d)?;
        }
        Ok(())
    }
}

/// Projects rows onto the top two principal components of the centered data.
///
/// Each component's sign is fixed so its largest-magnitude loading is positive
/// (first such index on ties). A single-column input gets a zero second axis.
pub fn pca_2d(data: &[Vec<f64>]) -> Result<Vec<(f64, f64)>> {
    let n = data.len();
    if n < 3 {
        return Err(Error::invalid(format!("2D projection needs at least 3 cases, got {n}")));
    }
    let d = data[0].len();
    if d == 0 || data.iter().any(|r| r.len() != d) {
        return Err(Error::invalid("embedding rows must share a nonzero width"));
    }
    let mean: Vec<f64> = (0..d).map(|j| data.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let x = DMatrix::from_fn(n, d, |i, j| data[i][j] - mean[j]);
    let cov = x.transpose() * &x / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let axis = |k: usize| -> Vec<f64> {
        let Some(&c) = order.get(k) else {
            return vec![0.0; d];
        };
        let mut v: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
        let mut lead = 0;
        for j in 1..d {
            if v[j].abs() > v[lead].abs() {
                lead = j;
            }
        }
        if v[lead] < 0.0 {
            v.iter_mut().for_each(|a| *a = -*a);
        }
        v
    };
    let (a, b) = (axis(0), axis(1));
    Ok((0..n)
        .map(|i| {
            let row = x.row(i);
            let p = |v: &[f64]| row.iter().zip(v).map(|(r, w)| r * w).sum::<f64>();
            (p(&a), p(&b))
        })
        .collect())
}

/// Fusion embeddings of every input group plus a joint 2D PCA projection.
pub fn export_embeddings(net: &EmbedNet, parts: &[EmbeddingInput]) -> Result<EmbeddingTable> {
    let mut rows = Vec::new();
    for part in parts {
        let n = part.rows.len();
        for len in [part.ids.len(), part.labels.len()] {
            if len != n {
                return Err(Error::Shape { expected: n, got: len });
            }
        }
        let emb = net.embed_rows(&part.rows)?;
        for i in 0..n {
            rows.push(EmbeddingRow {
                id: part.ids[i].clone(),
                split: part.split,
                label: part.labels[i],
                embedding: emb.row(i).to_vec(),
                x2d: 0.0,
                y2d: 0.0,
            });
        }
    }
    let data: Vec<Vec<f64>> = rows.iter().map(|r| r.embedding.clone()).collect();
    for (r, (x, y)) in rows.iter_mut().zip(pca_2d(&data)?) {
        r.x2d = x;
        r.y2d = y;
    }
    Ok(EmbeddingTable {
        dim: net.config().fusion_dim,
        rows,
    })
}
