//! Trainable DeepSets-style invariant networks with hand-derived gradients
//! and Adam.
//!
//! An input is a token matrix `X` of shape `n × d`. Equivariant layers act as
//! `Y = ReLU(X·Λ + 1·(1ᵀX)·Γ + 1·bᵀ)`, a pooling layer sums (or averages)
//! tokens, and a dense head maps the pooled vector to a scalar.
//!
//! All reductions over tokens run in lexicographic order of the input tokens.
//! Permuting the tokens therefore changes no floating-point operation, and
//! outputs, gradients and whole training runs are bitwise invariant.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::ShapeMismatch("ragged rows".into()));
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    fn uniform(rows: usize, cols: usize, bound: f64, rng: &mut impl Rng) -> Self {
        Matrix {
            rows,
            cols,
            data: (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect(),
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Reorders rows: `out.row(k) = self.row(order[k])`.
    pub fn select_rows(&self, order: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(self.data.len());
        for &r in order {
            data.extend_from_slice(self.row(r));
        }
        Matrix {
            rows: order.len(),
            cols: self.cols,
            data,
        }
    }
}

/// Token order used for every reduction: lexicographic on rows.
pub fn token_order(x: &Matrix) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..x.rows).collect();
    idx.sort_by(|&a, &b| {
        for (u, v) in x.row(a).iter().zip(x.row(b)) {
            match u.total_cmp(v) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        Ordering::Equal
    });
    idx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivariantLayer {
    /// `c_in × c_out`, applied to every token.
    pub lambda: Matrix,
    /// `c_in × c_out`, applied to the token sum.
    pub gamma: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// `in × out`.
    pub w: Matrix,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pool {
    Sum,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepSetsModel {
    pub equivariant: Vec<EquivariantLayer>,
    pub pool: Pool,
    /// ReLU on every layer except the last.
    pub head: Vec<DenseLayer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub token_dim: usize,
    pub equivariant_widths: Vec<usize>,
    pub head_widths: Vec<usize>,
    pub pool: Pool,
}

impl Architecture {
    /// `d → 128 → 64 → 32` per token, pool, `32 → 32 → 1`.
    pub fn paper_default(token_dim: usize) -> Self {
        Architecture {
            token_dim,
            equivariant_widths: vec![128, 64, 32],
            head_widths: vec![32],
            pool: Pool::Sum,
        }
    }
}

#[inline]
fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// `Z = H·Λ + 1·(sᵀΓ) + 1·bᵀ` with `s` the column sums of `h` taken in row
/// order. Rows of `h` must already be in token order.
fn equivariant_pre(layer: &EquivariantLayer, h: &Matrix) -> (Matrix, Vec<f64>) {
    let (c_in, c_out) = (layer.lambda.rows, layer.lambda.cols);
    let mut s = vec![0.0; c_in];
    for t in 0..h.rows {
        for (acc, v) in s.iter_mut().zip(h.row(t)) {
            *acc += v;
        }
    }
    let mut shared = layer.bias.clone();
    for (i, &si) in s.iter().enumerate() {
        for (acc, g) in shared.iter_mut().zip(layer.gamma.row(i)) {
            *acc += si * g;
        }
    }
    let mut z = Matrix::zeros(h.rows, c_out);
    for t in 0..h.rows {
        let zr = &mut z.data[t * c_out..(t + 1) * c_out];
        for (i, &hi) in h.row(t).iter().enumerate() {
            for (acc, l) in zr.iter_mut().zip(layer.lambda.row(i)) {
                *acc += hi * l;
            }
        }
        for (acc, sh) in zr.iter_mut().zip(&shared) {
            *acc += sh;
        }
    }
    (z, s)
}

fn relu_matrix(z: &Matrix) -> Matrix {
    Matrix {
        rows: z.rows,
        cols: z.cols,
        data: z.data.iter().map(|&v| relu(v)).collect(),
    }
}

fn check_layer_input(layer: &EquivariantLayer, x: &Matrix) -> Result<()> {
    if x.cols != layer.lambda.rows
        || layer.gamma.rows != layer.lambda.rows
        || layer.gamma.cols != layer.lambda.cols
        || layer.bias.len() != layer.lambda.cols
    {
        return Err(Error::ShapeMismatch(format!(
            "input has {} channels, layer expects {}",
            x.cols, layer.lambda.rows
        )));
    }
    Ok(())
}

/// Single equivariant layer on `x`, returned in the input's token order.
pub fn equivariant_forward(layer: &EquivariantLayer, x: &Matrix) -> Result<Matrix> {
    check_layer_input(layer, x)?;
    let order = token_order(x);
    let (z, _) = equivariant_pre(layer, &x.select_rows(&order));
    let y = relu_matrix(&z);
    let mut out = Matrix::zeros(x.rows, y.cols);
    for (k, &r) in order.iter().enumerate() {
        out.data[r * y.cols..(r + 1) * y.cols].copy_from_slice(y.row(k));
    }
    Ok(out)
}

/// Intermediates of one forward pass, in token order.
struct Trace {
    /// Inputs to each equivariant layer (plus the final token features).
    hs: Vec<Matrix>,
    /// Pre-activations of each equivariant layer.
    zs: Vec<Matrix>,
    /// Column sums of each equivariant layer's input.
    sums: Vec<Vec<f64>>,
    /// Inputs to each head layer.
    head_in: Vec<Vec<f64>>,
    /// Head pre-activations.
    head_z: Vec<Vec<f64>>,
}

impl DeepSetsModel {
    pub fn init(arch: &Architecture, rng: &mut impl Rng) -> Result<Self> {
        if arch.equivariant_widths.is_empty() {
            return Err(Error::InvalidParameter("need at least one equivariant layer".into()));
        }
        let mut equivariant = Vec::new();
        let mut c_in = arch.token_dim;
        for &c_out in &arch.equivariant_widths {
            let bound = (1.0 / c_in as f64).sqrt();
            equivariant.push(EquivariantLayer {
                lambda: Matrix::uniform(c_in, c_out, bound, rng),
                gamma: Matrix::uniform(c_in, c_out, bound, rng),
                bias: vec![0.0; c_out],
            });
            c_in = c_out;
        }
        let mut head = Vec::new();
        for &out in arch.head_widths.iter().chain(std::iter::once(&1)) {
            let bound = (1.0 / c_in as f64).sqrt();
            head.push(DenseLayer {
                w: Matrix::uniform(c_in, out, bound, rng),
                b: vec![0.0; out],
            });
            c_in = out;
        }
        Ok(DeepSetsModel {
            equivariant,
            pool: arch.pool,
            head,
        })
    }

    pub fn token_dim(&self) -> usize {
        self.equivariant[0].lambda.rows
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols != self.token_dim() || x.rows == 0 {
            return Err(Error::ShapeMismatch(format!(
                "input is {}×{}, model expects n×{}",
                x.rows,
                x.cols,
                self.token_dim()
            )));
        }
        Ok(())
    }

    fn trace(&self, x: &Matrix) -> (f64, Trace) {
        let mut h = x.select_rows(&token_order(x));
        let mut tr = Trace {
            hs: Vec::with_capacity(self.equivariant.len() + 1),
            zs: Vec::with_capacity(self.equivariant.len()),
            sums: Vec::with_capacity(self.equivariant.len()),
            head_in: Vec::with_capacity(self.head.len()),
            head_z: Vec::with_capacity(self.head.len()),
        };
        for layer in &self.equivariant {
            let (z, s) = equivariant_pre(layer, &h);
            let next = relu_matrix(&z);
            tr.hs.push(h);
            tr.zs.push(z);
            tr.sums.push(s);
            h = next;
        }
        let mut v = vec![0.0; h.cols];
        for t in 0..h.rows {
            for (acc, x) in v.iter_mut().zip(h.row(t)) {
                *acc += x;
            }
        }
        if self.pool == Pool::Mean {
            let n = h.rows as f64;
            v.iter_mut().for_each(|x| *x /= n);
        }
        tr.hs.push(h);
        let last = self.head.len() - 1;
        for (k, layer) in self.head.iter().enumerate() {
            let mut z = layer.b.clone();
            for (i, &vi) in v.iter().enumerate() {
                for (acc, w) in z.iter_mut().zip(layer.w.row(i)) {
                    *acc += vi * w;
                }
            }
            let out = if k == last {
                z.clone()
            } else {
                z.iter().map(|&u| relu(u)).collect()
            };
            tr.head_in.push(v);
            tr.head_z.push(z);
            v = out;
        }
        (v[0], tr)
    }

    pub fn forward(&self, x: &Matrix) -> Result<f64> {
        self.check_input(x)?;
        Ok(self.trace(x).0)
    }

    /// Smallest `|z|` over all hidden ReLU pre-activations at `x`.
    pub fn kink_margin(&self, x: &Matrix) -> Result<f64> {
        self.check_input(x)?;
        let (_, tr) = self.trace(x);
        let hidden_head = &tr.head_z[..tr.head_z.len() - 1];
        Ok(tr
            .zs
            .iter()
            .flat_map(|z| z.data.iter())
            .chain(hidden_head.iter().flatten())
            .fold(f64::INFINITY, |acc, v| acc.min(v.abs())))
    }

    /// Prediction and gradient of `½(f(X) − y)²` for every parameter.
    /// The ReLU derivative at 0 is taken as 0.
    pub fn backward(&self, x: &Matrix, y: f64) -> Result<(f64, DeepSetsModel)> {
        self.check_input(x)?;
        let (pred, tr) = self.trace(x);
        let mut grad = self.zeros_like();
        let last = self.head.len() - 1;

        let mut delta = vec![pred - y];
        for k in (0..self.head.len()).rev() {
            if k != last {
                for (d, &z) in delta.iter_mut().zip(&tr.head_z[k]) {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let layer = &self.head[k];
            let input = &tr.head_in[k];
            let g = &mut grad.head[k];
            for (i, &xi) in input.iter().enumerate() {
                let row = &mut g.w.data[i * layer.w.cols..(i + 1) * layer.w.cols];
                for (acc, d) in row.iter_mut().zip(&delta) {
                    *acc += xi * d;
                }
            }
            for (acc, d) in g.b.iter_mut().zip(&delta) {
                *acc += d;
            }
            delta = (0..layer.w.rows)
                .map(|i| layer.w.row(i).iter().zip(&delta).map(|(w, d)| w * d).sum())
                .collect();
        }

        // pooling
        let h_last = tr.hs.last().expect("token features");
        let scale = match self.pool {
            Pool::Sum => 1.0,
            Pool::Mean => 1.0 / h_last.rows as f64,
        };
        let mut dh = Matrix::zeros(h_last.rows, h_last.cols);
        for t in 0..dh.rows {
            for (c, d) in delta.iter().enumerate() {
                dh.data[t * dh.cols + c] = d * scale;
            }
        }

        for k in (0..self.equivariant.len()).rev() {
            let layer = &self.equivariant[k];
            let (c_in, c_out) = (layer.lambda.rows, layer.lambda.cols);
            let z = &tr.zs[k];
            let h = &tr.hs[k];
            let s = &tr.sums[k];
            let mut gz = dh;
            for (g, &zv) in gz.data.iter_mut().zip(&z.data) {
                if zv <= 0.0 {
                    *g = 0.0;
                }
            }
            let mut gsum = vec![0.0; c_out];
            for t in 0..gz.rows {
                for (acc, g) in gsum.iter_mut().zip(gz.row(t)) {
                    *acc += g;
                }
            }
            let gl = &mut grad.equivariant[k];
            for t in 0..h.rows {
                for (i, &hi) in h.row(t).iter().enumerate() {
                    let row = &mut gl.lambda.data[i * c_out..(i + 1) * c_out];
                    for (acc, g) in row.iter_mut().zip(gz.row(t)) {
                        *acc += hi * g;
                    }
                }
            }
            for (i, &si) in s.iter().enumerate() {
                let row = &mut gl.gamma.data[i * c_out..(i + 1) * c_out];
                for (acc, g) in row.iter_mut().zip(&gsum) {
                    *acc += si * g;
                }
            }
            for (acc, g) in gl.bias.iter_mut().zip(&gsum) {
                *acc += g;
            }
            if k > 0 {
                // shared part Γ·Σ_t gz_t reaches every token
                let shared: Vec<f64> = (0..c_in)
                    .map(|i| layer.gamma.row(i).iter().zip(&gsum).map(|(w, g)| w * g).sum())
                    .collect();
                let mut next = Matrix::zeros(h.rows, c_in);
                for t in 0..h.rows {
                    let gr = gz.row(t);
                    for i in 0..c_in {
                        let own: f64 = layer.lambda.row(i).iter().zip(gr).map(|(w, g)| w * g).sum();
                        next.data[t * c_in + i] = own + shared[i];
                    }
                }
                dh = next;
            } else {
                dh = Matrix::zeros(0, 0);
            }
        }
        Ok((pred, grad))
    }

    pub fn zeros_like(&self) -> DeepSetsModel {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.iter_mut().for_each(|v| *v = 0.0);
        }
        z
    }

    /// Every parameter tensor, in a fixed order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for l in &self.equivariant {
            out.push(&l.lambda.data);
            out.push(&l.gamma.data);
            out.push(&l.bias);
        }
        for l in &self.head {
            out.push(&l.w.data);
            out.push(&l.b);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.equivariant {
            out.push(&mut l.lambda.data);
            out.push(&mut l.gamma.data);
            out.push(&mut l.bias);
        }
        for l in &mut self.head {
            out.push(&mut l.w.data);
            out.push(&mut l.b);
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn add_scaled(&mut self, other: &DeepSetsModel, scale: f64) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: DeepSetsModel,
    pub second_moment: DeepSetsModel,
}

impl AdamState {
    pub fn new(model: &DeepSetsModel, config: AdamConfig) -> Self {
        AdamState {
            config,
            step: 0,
            first_moment: model.zeros_like(),
            second_moment: model.zeros_like(),
        }
    }

    /// One bias-corrected Adam update of `params` from `grads`.
    pub fn step(&mut self, params: &mut DeepSetsModel, grads: &DeepSetsModel) -> Result<()> {
        let shapes_match = params.tensors().iter().map(|t| t.len()).eq(grads.tensors().iter().map(|t| t.len()))
            && params.tensors().iter().map(|t| t.len()).eq(self.first_moment.tensors().iter().map(|t| t.len()));
        if !shapes_match {
            return Err(Error::ShapeMismatch("parameter and gradient shapes differ".into()));
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        let ps = params.tensors_mut();
        let gs = grads.tensors();
        let ms = self.first_moment.tensors_mut();
        let vs = self.second_moment.tensors_mut();
        for (((p, g), m), v) in ps.into_iter().zip(gs).zip(ms).zip(vs) {
            for k in 0..p.len() {
                m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                p[k] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Matrix,
    pub y: f64,
}

pub fn mse(model: &DeepSetsModel, data: &[Sample]) -> Result<f64> {
    let mut acc = 0.0;
    for s in data {
        let e = model.forward(&s.x)? - s.y;
        acc += e * e;
    }
    Ok(acc / data.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub initial_mse: f64,
    /// Training-set MSE after each epoch.
    pub epoch_mse: Vec<f64>,
}

/// Shuffled mini-batch Adam on the mean of `½(f − y)²` per batch. The
/// shuffle is driven by `seed` alone.
pub fn train(model: &mut DeepSetsModel, data: &[Sample], cfg: &TrainConfig) -> Result<TrainReport> {
    if data.is_empty() {
        return Err(Error::InvalidParameter("empty dataset".into()));
    }
    if cfg.batch_size == 0 || cfg.batch_size > data.len() {
        return Err(Error::InvalidParameter(format!(
            "batch size {} must lie in 1..={}",
            cfg.batch_size,
            data.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(model, cfg.adam);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let initial_mse = mse(model, data)?;
    let mut epoch_mse = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let mut grad = model.zeros_like();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let (_, g) = model.backward(&data[i].x, data[i].y)?;
                grad.add_scaled(&g, scale);
            }
            adam.step(model, &grad)?;
        }
        epoch_mse.push(mse(model, data)?);
    }
    Ok(TrainReport {
        initial_mse,
        epoch_mse,
    })
}

pub fn save_checkpoint<W: std::io::Write>(model: &DeepSetsModel, out: W) -> Result<()> {
    serde_json::to_writer(out, model)?;
    Ok(())
}

pub fn load_checkpoint<R: std::io::Read>(input: R) -> Result<DeepSetsModel> {
    let m: DeepSetsModel = serde_json::from_reader(input)?;
    let shapes_ok = !m.equivariant.is_empty()
        && !m.head.is_empty()
        && m.equivariant.iter().all(|l| {
            l.lambda.data.len() == l.lambda.rows * l.lambda.cols
                && l.gamma.rows == l.lambda.rows
                && l.gamma.cols == l.lambda.cols
                && l.gamma.data.len() == l.gamma.rows * l.gamma.cols
                && l.bias.len() == l.lambda.cols
        })
        && m.equivariant.windows(2).all(|w| w[0].lambda.cols == w[1].lambda.rows)
        && m.head.iter().all(|l| l.w.data.len() == l.w.rows * l.w.cols && l.b.len() == l.w.cols)
        && m.head.windows(2).all(|w| w[0].w.cols == w[1].w.rows)
        && m.equivariant.last().map(|l| l.lambda.cols) == m.head.first().map(|l| l.w.rows)
        && m.head.last().map(|l| l.w.cols) == Some(1);
    if !shapes_ok {
        return Err(Error::ShapeMismatch("inconsistent checkpoint shapes".into()));
    }
    Ok(m)
}

/// `epoch,train_mse` with epoch 0 the untrained model.
pub fn write_loss_csv<W: std::io::Write>(report: &TrainReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "train_mse"])?;
    let all = std::iter::once(report.initial_mse).chain(report.epoch_mse.iter().copied());
    for (e, v) in all.enumerate() {
        w.write_record([e.to_string(), format!("{v:.16e}")])?;
    }
    w.flush()?;
    Ok(())
}
