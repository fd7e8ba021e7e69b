use std::io::{Read, Write};

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use rayon::prelude::*;

use super::features::{evaluate, Featurizer, Features};
use super::KernelKind;
use crate::error::{Error, Result};
use crate::graph::PatientGraph;

pub const GRAM_MAGIC: &[u8; 4] = b"KGRM";
pub const GRAM_VERSION: u32 = 1;

const SYMMETRY_TOL: f64 = 1e-9;

/// Dense symmetric kernel matrix over one list of graphs.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub values: Array2<f64>,
    pub kernel: KernelKind,
    pub normalized: bool,
}

impl GramMatrix {
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        psd_check(self)
    }

    /// Checks symmetry, unit diagonal (when normalized) and the PSD tolerance `-1e-8 * N`.
    pub fn validate(&self) -> Result<f64> {
        let n = self.len();
        if self.normalized {
            for i in 0..n {
                let d = self.values[[i, i]];
                if (d - 1.0).abs() > 1e-12 {
                    return Err(Error::invalid(format!("diagonal entry {i} is {d}, expected 1")));
                }
            }
        }
        let min = psd_check(self)?;
        if min < -1e-8 * n as f64 {
            return Err(Error::NotPsd { min_eigenvalue: min });
        }
        Ok(min)
    }
}

fn featurize_all(fz: &mut Featurizer, graphs: &[PatientGraph]) -> Vec<Features> {
    graphs.iter().map(|g| fz.features(g)).collect()
}

/// Raw (unnormalized) self-kernel values `k(g, g)`.
pub fn self_kernels(kernel: KernelKind, graphs: &[PatientGraph]) -> Vec<f64> {
    let mut fz = Featurizer::new(kernel);
    let feats = featurize_all(&mut fz, graphs);
    feats.iter().map(|f| evaluate(kernel, f, f)).collect()
}

/// Pairwise kernel matrix over `graphs`, optionally cosine-normalized.
pub fn gram_matrix(
    kernel: KernelKind,
    graphs: &[PatientGraph],
    normalize: bool,
) -> Result<GramMatrix> {
    let kernel = kernel.validate()?;
    if graphs.is_empty() {
        return Err(Error::invalid("cannot build a Gram matrix over zero graphs"));
    }
    let n = graphs.len();
    let mut fz = Featurizer::new(kernel);
    let feats = featurize_all(&mut fz, graphs);

    // Upper triangle, one row segment per task.
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (i..n).map(|j| evaluate(kernel, &feats[i], &feats[j])).collect())
        .collect();
    let mut values = Array2::<f64>::zeros((n, n));
    for (i, row) in upper.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            values[[i, i + off]] = v;
            values[[i + off, i]] = v;
        }
    }
    if normalize {
        let diag: Vec<f64> = (0..n).map(|i| values[[i, i]]).collect();
        if let Some(index) = diag.iter().position(|&d| d <= 0.0) {
            return Err(Error::ZeroSelfKernel { index });
        }
        for i in 0..n {
            for j in 0..n {
                values[[i, j]] = if i == j {
                    1.0
                } else {
                    values[[i, j]] / (diag[i] * diag[j]).sqrt()
                };
            }
        }
    }
    Ok(GramMatrix {
        values,
        kernel,
        normalized: normalize,
    })
}

/// Kernel values between each test graph (rows) and each training graph (columns).
///
/// `train_diag` holds the raw self-kernels of the training graphs, as returned
/// by [`self_kernels`].
pub fn cross_gram(
    kernel: KernelKind,
    test: &[PatientGraph],
    train: &[PatientGraph],
    train_diag: &[f64],
    normalize: bool,
) -> Result<Array2<f64>> {
    let kernel = kernel.validate()?;
    if train_diag.len() != train.len() {
        return Err(Error::Shape {
            expected: train.len(),
            got: train_diag.len(),
        });
    }
    let mut fz = Featurizer::new(kernel);
    let train_feats = featurize_all(&mut fz, train);
    let test_feats = featurize_all(&mut fz, test);
    if normalize {
        if let Some(index) = train_diag.iter().position(|&d| d <= 0.0) {
            return Err(Error::ZeroSelfKernel { index });
        }
    }
    let rows: Vec<Result<Vec<f64>>> = test_feats
        .par_iter()
        .enumerate()
        .map(|(r, tf)| {
            let self_k = evaluate(kernel, tf, tf);
            if normalize && self_k <= 0.0 {
                return Err(Error::ZeroSelfKernel { index: r });
            }
            Ok(train_feats
                .iter()
                .zip(train_diag)
                .map(|(f, &d)| {
                    let k = evaluate(kernel, tf, f);
                    if normalize {
                        k / (self_k * d).sqrt()
                    } else {
                        k
                    }
                })
                .collect())
        })
        .collect();
    let mut out = Array2::<f64>::zeros((test.len(), train.len()));
    for (r, row) in rows.into_iter().enumerate() {
        for (c, v) in row?.into_iter().enumerate() {
            out[[r, c]] = v;
        }
    }
    Ok(out)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn psd_check(m: &GramMatrix) -> Result<f64> {
    min_eigenvalue(&m.values)
}

pub(crate) fn min_eigenvalue(values: &Array2<f64>) -> Result<f64> {
    let n = values.nrows();
    if values.ncols() != n {
        return Err(Error::Shape {
            expected: n,
            got: values.ncols(),
        });
    }
    if n == 0 {
        return Err(Error::invalid("empty matrix has no eigenvalues"));
    }
    let mut asym: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            asym = asym.max((values[[i, j]] - values[[j, i]]).abs());
        }
    }
    if asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric(asym));
    }
    let dm = DMatrix::from_fn(n, n, |i, j| values[[i, j]]);
    let eig = SymmetricEigen::new(dm);
    Ok(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
}

fn kernel_tag(k: KernelKind) -> (u8, f64) {
    match k {
        KernelKind::WlSubtree { h } => (0, h as f64),
        KernelKind::TemporalTopological { alpha } => (1, alpha),
        KernelKind::VertexHistogram => (2, 0.0),
    }
}

/// Writes the `KGRM` container: magic, u32 version, u32 N, u8 kernel tag,
/// f64 kernel parameter, u8 normalized flag, then N*N f64 row-major. All
/// numbers little-endian.
pub fn write_gram<W: Write>(m: &GramMatrix, mut w: W) -> std::io::Result<()> {
    let (tag, param) = kernel_tag(m.kernel);
    w.write_all(GRAM_MAGIC)?;
    w.write_all(&GRAM_VERSION.to_le_bytes())?;
    w.write_all(&(m.len() as u32).to_le_bytes())?;
    w.write_all(&[tag])?;
    w.write_all(&param.to_le_bytes())?;
    w.write_all(&[m.normalized as u8])?;
    for v in m.values.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn take<const K: usize>(r: &mut impl Read) -> Result<[u8; K]> {
    let mut buf = [0u8; K];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Format("truncated Gram file".into()))?;
    Ok(buf)
}

pub fn read_gram<R: Read>(mut r: R) -> Result<GramMatrix> {
    if &take::<4>(&mut r)? != GRAM_MAGIC {
        return Err(Error::Format("missing KGRM magic".into()));
    }
    let version = u32::from_le_bytes(take(&mut r)?);
    if version != GRAM_VERSION {
        return Err(Error::Format(format!("unsupported Gram version {version}")));
    }
    let n = u32::from_le_bytes(take(&mut r)?) as usize;
    let [tag] = take::<1>(&mut r)?;
    let param = f64::from_le_bytes(take(&mut r)?);
    let kernel = match tag {
        0 => KernelKind::WlSubtree { h: param as u32 },
        1 => KernelKind::TemporalTopological { alpha: param },
        2 => KernelKind::VertexHistogram,
        t => return Err(Error::Format(format!("unknown kernel tag {t}"))),
    };
    let [flag] = take::<1>(&mut r)?;
    let mut values = Array2::<f64>::zeros((n, n));
    for v in values.iter_mut() {
        *v = f64::from_le_bytes(take(&mut r)?);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(|e| Error::Format(e.to_string()))? != 0 {
        return Err(Error::Format("trailing bytes after Gram payload".into()));
    }
    Ok(GramMatrix {
        values,
        kernel,
        normalized: flag != 0,
    })
}

pub fn write_gram_csv<W: Write>(m: &GramMatrix, mut w: W) -> std::io::Result<()> {
    for row in m.values.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}
