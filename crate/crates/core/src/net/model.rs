use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::loss::{bce_from_logits, contrastive_impl, sigmoid, LossParts};
use super::NetConfig;
use crate::error::{Error, Result};

/// Kernel rows for a set of cases, one matrix per kernel in the order
/// (WL, temporal, vertex histogram). Each matrix is `cases x training cases`.
#[derive(Debug, Clone, Copy)]
pub struct KernelRows<'a> {
    pub wl: ArrayView2<'a, f64>,
    pub tp: ArrayView2<'a, f64>,
    pub vh: ArrayView2<'a, f64>,
}

impl<'a> KernelRows<'a> {
    pub fn new(
        wl: ArrayView2<'a, f64>,
        tp: ArrayView2<'a, f64>,
        vh: ArrayView2<'a, f64>,
    ) -> Result<Self> {
        for m in [&tp, &vh] {
            if m.dim() != wl.dim() {
                return Err(Error::Shape {
                    expected: wl.nrows() * wl.ncols(),
                    got: m.nrows() * m.ncols(),
                });
            }
        }
        Ok(Self { wl, tp, vh })
    }

    pub fn len(&self) -> usize {
        self.wl.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.wl.nrows() == 0
    }

    pub fn width(&self) -> usize {
        self.wl.ncols()
    }

    fn kernels(&self) -> [&ArrayView2<'a, f64>; 3] {
        [&self.wl, &self.tp, &self.vh]
    }

    /// Copies out the given rows.
    pub fn select(&self, idx: &[usize]) -> [Array2<f64>; 3] {
        self.kernels().map(|m| m.select(Axis(0), idx))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub probability: f64,
    pub label: u8,
}

/// Network parameters, stored flat in declaration order:
/// `W_wl, b_wl, W_tp, b_tp, W_vh, b_vh, W_fuse, b_fuse, w_cls, b_cls`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbedNet {
    config: NetConfig,
    n_inputs: usize,
    params: Vec<f64>,
}

pub(crate) struct Forward {
    z: [Array2<f64>; 3],
    h: Array2<f64>,
    pub emb: Array2<f64>,
    pub logits: Array1<f64>,
}

impl EmbedNet {
    /// Seeded init: every weight and bias uniform in `±1/sqrt(fan_in)`.
    pub fn new(config: NetConfig, n_inputs: usize) -> Result<Self> {
        let mut net = Self::zeros(config, n_inputs)?;
        let mut rng = ChaCha8Rng::seed_from_u64(net.config.seed);
        let (e, f) = (net.embed(), net.fusion());
        let mut fill = |range: std::ops::Range<usize>, fan_in: usize, p: &mut [f64]| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for v in &mut p[range] {
                *v = rng.random_range(-bound..bound);
            }
        };
        let mut params = std::mem::take(&mut net.params);
        for k in 0..3 {
            let (w, b) = (net.kernel_w_offset(k), net.kernel_b_offset(k));
            fill(w..w + e * n_inputs, n_inputs, &mut params);
            fill(b..b + e, n_inputs, &mut params);
        }
        let fw = net.fusion_w_offset();
        fill(fw..fw + f * 3 * e + f, 3 * e, &mut params);
        let cw = net.cls_offset();
        fill(cw..cw + f + 1, f, &mut params);
        net.params = params;
        Ok(net)
    }

    pub fn zeros(config: NetConfig, n_inputs: usize) -> Result<Self> {
        config.validate()?;
        if n_inputs == 0 {
            return Err(Error::invalid("network needs at least one input column"));
        }
        let len = Self::param_count(&config, n_inputs);
        Ok(Self {
            config,
            n_inputs,
            params: vec![0.0; len],
        })
    }

    pub fn from_params(config: NetConfig, n_inputs: usize, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(config, n_inputs)?;
        if params.len() != net.params.len() {
            return Err(Error::Shape {
                expected: net.params.len(),
                got: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("non-finite network parameter"));
        }
        net.params = params;
        Ok(net)
    }

    pub fn param_count(config: &NetConfig, n_inputs: usize) -> usize {
        let (e, f) = (config.embed_dim_per_kernel, config.fusion_dim);
        3 * (e * n_inputs + e) + f * 3 * e + f + f + 1
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Shapes of the parameter tensors in storage order, as (rows, cols).
    pub fn tensor_shapes(&self) -> Vec<(usize, usize)> {
        let (n, e, f) = (self.n_inputs, self.embed(), self.fusion());
        let mut shapes = Vec::new();
        for _ in 0..3 {
            shapes.push((e, n));
            shapes.push((e, 1));
        }
        shapes.extend([(f, 3 * e), (f, 1), (f, 1), (1, 1)]);
        shapes
    }

    fn embed(&self) -> usize {
        self.config.embed_dim_per_kernel
    }

    fn fusion(&self) -> usize {
        self.config.fusion_dim
    }

    fn kernel_w_offset(&self, k: usize) -> usize {
        k * (self.embed() * self.n_inputs + self.embed())
    }

    fn kernel_b_offset(&self, k: usize) -> usize {
        self.kernel_w_offset(k) + self.embed() * self.n_inputs
    }

    fn fusion_w_offset(&self) -> usize {
        self.kernel_w_offset(3)
    }

    fn fusion_b_offset(&self) -> usize {
        self.fusion_w_offset() + self.fusion() * 3 * self.embed()
    }

    fn cls_offset(&self) -> usize {
        self.fusion_b_offset() + self.fusion()
    }

    fn view2(&self, off: usize, rows: usize, cols: usize) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((rows, cols), &self.params[off..off + rows * cols])
            .expect("parameter layout")
    }

    fn view1(&self, off: usize, len: usize) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.params[off..off + len])
    }

    pub(crate) fn forward(&self, rows: &KernelRows) -> Result<Forward> {
        if rows.width() != self.n_inputs {
            return Err(Error::Shape {
                expected: self.n_inputs,
                got: rows.width(),
            });
        }
        let (n, e, f) = (self.n_inputs, self.embed(), self.fusion());
        let z = [0, 1, 2].map(|k| {
            let w = self.view2(self.kernel_w_offset(k), e, n);
            let b = self.view1(self.kernel_b_offset(k), e);
            rows.kernels()[k].dot(&w.t()) + b
        });
        let acts: Vec<Array2<f64>> = z.iter().map(|m| m.mapv(|v| v.max(0.0))).collect();
        let h = concatenate(Axis(1), &[acts[0].view(), acts[1].view(), acts[2].view()])
            .expect("equal row counts");
        let wf = self.view2(self.fusion_w_offset(), f, 3 * e);
        let bf = self.view1(self.fusion_b_offset(), f);
        let emb = h.dot(&wf.t()) + bf;
        let wc = self.view1(self.cls_offset(), f);
        let bc = self.params[self.cls_offset() + f];
        let logits = emb.dot(&wc) + bc;
        Ok(Forward { z, h, emb, logits })
    }

    /// Gradient of the loss with respect to every parameter, given the
    /// loss gradients at the embedding and at the logits.
    pub(crate) fn backward(
        &self,
        rows: &KernelRows,
        fwd: &Forward,
        d_emb: &Array2<f64>,
        d_logits: &Array1<f64>,
    ) -> Vec<f64> {
        let (n, e, f) = (self.n_inputs, self.embed(), self.fusion());
        let mut grad = vec![0.0; self.params.len()];
        let wc = self.view1(self.cls_offset(), f);
        let cls = self.cls_offset();

        let g_wc = fwd.emb.t().dot(d_logits);
        grad[cls..cls + f].copy_from_slice(g_wc.as_slice().expect("contiguous"));
        grad[cls + f] = d_logits.sum();

        let mut d_emb_total = d_emb.clone();
        for (mut row, &dl) in d_emb_total.rows_mut().into_iter().zip(d_logits.iter()) {
            row.scaled_add(dl, &wc);
        }
        let g_wf = d_emb_total.t().dot(&fwd.h);
        let fw = self.fusion_w_offset();
        write_into(&mut grad[fw..fw + f * 3 * e], &g_wf);
        let fb = self.fusion_b_offset();
        write_into(&mut grad[fb..fb + f], &d_emb_total.sum_axis(Axis(0)));

        let wf = self.view2(fw, f, 3 * e);
        let d_h = d_emb_total.dot(&wf);
        for k in 0..3 {
            let mut d_z = d_h.slice(s![.., k * e..(k + 1) * e]).to_owned();
            d_z.zip_mut_with(&fwd.z[k], |d, &z| {
                if z <= 0.0 {
                    *d = 0.0;
                }
            });
            let g_w = d_z.t().dot(rows.kernels()[k]);
            let wo = self.kernel_w_offset(k);
            write_into(&mut grad[wo..wo + e * n], &g_w);
            let bo = self.kernel_b_offset(k);
            write_into(&mut grad[bo..bo + e], &d_z.sum_axis(Axis(0)));
        }
        grad
    }

    /// Joint loss and its gradient on one batch. Pairs marked `false` in
    /// `include` are left out of the contrastive term.
    pub(crate) fn loss_and_gradient(
        &self,
        rows: &KernelRows,
        labels: &[u8],
        include: Option<&Array2<bool>>,
    ) -> Result<(LossParts, Vec<f64>)> {
        let fwd = self.forward(rows)?;
        let (contrastive, d_emb) = contrastive_impl(
            fwd.emb.view(),
            labels,
            self.config.margin_lambda,
            self.config.metric,
            include,
            true,
        )?;
        let (crossentropy, d_logits) = bce_from_logits(fwd.logits.view(), labels)?;
        let grad = self.backward(rows, &fwd, &d_emb.expect("requested"), &d_logits);
        Ok((
            LossParts {
                contrastive,
                crossentropy,
                joint: contrastive + crossentropy,
            },
            grad,
        ))
    }

    pub(crate) fn loss_only(
        &self,
        rows: &KernelRows,
        labels: &[u8],
        include: Option<&Array2<bool>>,
    ) -> Result<f64> {
        let fwd = self.forward(rows)?;
        let (c, _) = contrastive_impl(
            fwd.emb.view(),
            labels,
            self.config.margin_lambda,
            self.config.metric,
            include,
            false,
        )?;
        let (ce, _) = bce_from_logits(fwd.logits.view(), labels)?;
        Ok(c + ce)
    }

    /// Fusion embeddings, one row per case.
    pub fn embed_rows(&self, rows: &KernelRows) -> Result<Array2<f64>> {
        Ok(self.forward(rows)?.emb)
    }
}

fn write_into(dst: &mut [f64], src: &ndarray::ArrayBase<impl ndarray::Data<Elem = f64>, impl ndarray::Dimension>) {
    for (d, s) in dst.iter_mut().zip(src.iter()) {
        *d = *s;
    }
}

/// Embedding of a single case from its three kernel rows.
pub fn forward_embed(net: &EmbedNet, wl: &[f64], tp: &[f64], vh: &[f64]) -> Result<Vec<f64>> {
    let as_row = |v: &[f64]| Array2::from_shape_vec((1, v.len()), v.to_vec()).expect("1 x n");
    let (a, b, c) = (as_row(wl), as_row(tp), as_row(vh));
    let rows = KernelRows::new(a.view(), b.view(), c.view())?;
    Ok(net.embed_rows(&rows)?.row(0).to_vec())
}

/// Failure probability per case; the predicted label is 1 iff the probability is at least 0.5.
pub fn predict(net: &EmbedNet, rows: &KernelRows) -> Result<Vec<Prediction>> {
    if rows.is_empty() {
        return Ok(Vec::new());
    }
    let fwd = net.forward(rows)?;
    Ok(fwd
        .logits
        .iter()
        .map(|&s| {
            let probability = sigmoid(s);
            Prediction {
                probability,
                label: u8::from(probability >= 0.5),
            }
        })
        .collect())
}
