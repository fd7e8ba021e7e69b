use std::io::{BufRead, Read, Write};

use super::loss::LossParts;
use super::model::EmbedNet;
use super::train::{StopReason, TrainTrace};
use super::{Metric, NetConfig};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 4] = b"KNET";
pub const MODEL_VERSION: u32 = 1;

/// Writes the `KNET` container (all little-endian):
///
/// ```text
/// "KNET" u32:version
/// u32:embed u32:fusion u32:classifier f64:margin u8:metric f64:lr
/// u32:batch u32:max_epochs u32:patience u64:seed
/// u32:n_inputs u32:tensor_count
/// per tensor: u32:rows u32:cols f64[rows*cols]
/// ```
pub fn write_model<W: Write>(net: &EmbedNet, mut w: W) -> std::io::Result<()> {
    let c = net.config();
    w.write_all(MODEL_MAGIC)?;
    w.write_all(&MODEL_VERSION.to_le_bytes())?;
    for v in [c.embed_dim_per_kernel, c.fusion_dim, c.classifier_dim] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    w.write_all(&c.margin_lambda.to_le_bytes())?;
    w.write_all(&[match c.metric {
        Metric::Euclidean => 0,
        Metric::Cosine => 1,
    }])?;
    w.write_all(&c.learning_rate.to_le_bytes())?;
    for v in [c.batch_size, c.max_epochs, c.early_stop_patience] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    w.write_all(&c.seed.to_le_bytes())?;
    w.write_all(&(net.n_inputs() as u32).to_le_bytes())?;
    let shapes = net.tensor_shapes();
    w.write_all(&(shapes.len() as u32).to_le_bytes())?;
    let mut offset = 0;
    for (rows, cols) in shapes {
        w.write_all(&(rows as u32).to_le_bytes())?;
        w.write_all(&(cols as u32).to_le_bytes())?;
        for v in &net.params()[offset..offset + rows * cols] {
            w.write_all(&v.to_le_bytes())?;
        }
        offset += rows * cols;
    }
    Ok(())
}

fn take<const K: usize>(r: &mut impl Read) -> Result<[u8; K]> {
    let mut buf = [0u8; K];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Format("truncated model file".into()))?;
    Ok(buf)
}

fn u32_at(r: &mut impl Read) -> Result<usize> {
    Ok(u32::from_le_bytes(take(r)?) as usize)
}

fn f64_at(r: &mut impl Read) -> Result<f64> {
    Ok(f64::from_le_bytes(take(r)?))
}

pub fn read_model<R: Read>(mut r: R) -> Result<EmbedNet> {
    if &take::<4>(&mut r)? != MODEL_MAGIC {
        return Err(Error::Format("missing KNET magic".into()));
    }
    let version = u32::from_le_bytes(take(&mut r)?);
    if version != MODEL_VERSION {
        return Err(Error::Format(format!("unsupported model version {version}")));
    }
    let embed_dim_per_kernel = u32_at(&mut r)?;
    let fusion_dim = u32_at(&mut r)?;
    let classifier_dim = u32_at(&mut r)?;
    let margin_lambda = f64_at(&mut r)?;
    let metric = match take::<1>(&mut r)? {
        [0] => Metric::Euclidean,
        [1] => Metric::Cosine,
        [t] => return Err(Error::Format(format!("unknown metric tag {t}"))),
    };
    let learning_rate = f64_at(&mut r)?;
    let batch_size = u32_at(&mut r)?;
    let max_epochs = u32_at(&mut r)?;
    let early_stop_patience = u32_at(&mut r)?;
    let seed = u64::from_le_bytes(take(&mut r)?);
    let config = NetConfig {
        embed_dim_per_kernel,
        fusion_dim,
        classifier_dim,
        margin_lambda,
        metric,
        learning_rate,
        batch_size,
        max_epochs,
        early_stop_patience,
        seed,
    };
    let n_inputs = u32_at(&mut r)?;
    let expected = EmbedNet::zeros(config.clone(), n_inputs)?.tensor_shapes();
    let count = u32_at(&mut r)?;
    if count != expected.len() {
        return Err(Error::Format(format!(
            "expected {} tensors, found {count}",
            expected.len()
        )));
    }
    let mut params = Vec::with_capacity(EmbedNet::param_count(&config, n_inputs));
    for (i, want) in expected.into_iter().enumerate() {
        let shape = (u32_at(&mut r)?, u32_at(&mut r)?);
        if shape != want {
            return Err(Error::Format(format!(
                "tensor {i} has shape {shape:?}, expected {want:?}"
            )));
        }
        for _ in 0..shape.0 * shape.1 {
            params.push(f64_at(&mut r)?);
        }
    }
    EmbedNet::from_params(config, n_inputs, params)
}

pub fn write_trace_csv<W: Write>(trace: &TrainTrace, mut w: W) -> std::io::Result<()> {
    writeln!(w, "epoch,contrastive,crossentropy,joint")?;
    for (i, e) in trace.epochs.iter().enumerate() {
        writeln!(w, "{},{},{},{}", i + 1, e.contrastive, e.crossentropy, e.joint)?;
    }
    Ok(())
}

/// Reads a trace CSV back. The stop reason is not stored and comes back as `MaxEpochs`.
pub fn read_trace_csv<R: BufRead>(r: R) -> Result<TrainTrace> {
    let mut epochs = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::Format(e.to_string()))?;
        if i == 0 {
            continue;
        }
        let cols: Vec<f64> = line
            .split(',')
            .skip(1)
            .map(|c| c.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Parse {
                line: i + 1,
                message: "bad trace row".into(),
            })?;
        if cols.len() != 3 {
            return Err(Error::Parse {
                line: i + 1,
                message: "expected 4 columns".into(),
            });
        }
        epochs.push(LossParts {
            contrastive: cols[0],
            crossentropy: cols[1],
            joint: cols[2],
        });
    }
    Ok(TrainTrace {
        stop_epoch: epochs.len(),
        epochs,
        stop_reason: StopReason::MaxEpochs,
    })
}
