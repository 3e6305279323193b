//! Reverse-mode differentiation over a linear tape of operation records.
//!
//! Complex spectrograms travel through the graph as real tensors with
//! interleaved (re, im) columns, so every adjoint stays real-valued. The
//! STFT and inverse-STFT nodes are linear transforms whose backward pass
//! applies the corresponding adjoint transform.

use rustfft::num_complex::Complex64;

use super::tensor::Tensor;
use crate::audio::Waveform;
use crate::stft::{istft, istft_adjoint, stft, stft_adjoint, Spectrogram, StftConfig};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MatMul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Square(Var),
    Sum(Var),
    Mean(Var),
    /// Contiguous slice of the flat data, reshaped to `shape`.
    Slice { x: Var, start: usize },
    SliceCols { x: Var, start: usize, len: usize },
    ConcatCols(Var, Var),
    /// Repeats a 1 × c row tensor down to rows × c.
    BroadcastRows { x: Var, rows: usize },
    Reshape(Var),
    /// [r, c] → [r, 2c], duplicating each column into an (re, im) pair.
    InterleaveDup(Var),
    /// Linear interpolation of rows at fractional positions.
    InterpRows { x: Var, positions: Vec<f64> },
    /// Linear interpolation of columns at fractional positions.
    InterpCols { x: Var, positions: Vec<f64> },
    /// Zeroes entries where the mask is false.
    MaskSelect { x: Var, mask: Vec<bool> },
    Stft { x: Var, cfg: StftConfig, sample_rate: u32 },
    Istft { x: Var, cfg: StftConfig, sample_rate: u32 },
}

struct Node {
    op: Op,
    value: Tensor,
}

/// A computation tape: topologically ordered records with saved values.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Packs a complex spectrogram into a [frames, 2·bins] interleaved tensor.
pub fn spectrogram_to_tensor(spec: &Spectrogram) -> Tensor {
    let mut data = Vec::with_capacity(spec.data().len() * 2);
    for c in spec.data() {
        data.push(c.re);
        data.push(c.im);
    }
    Tensor::new(vec![spec.frames(), 2 * spec.bins()], data).expect("interleave shape")
}

/// Unpacks an interleaved [frames, 2·bins] tensor into a spectrogram.
pub fn tensor_to_spectrogram(t: &Tensor, cfg: StftConfig, sample_rate: u32) -> Spectrogram {
    let frames = t.rows();
    assert_eq!(t.cols(), 2 * cfg.bins(), "interleaved width");
    let data: Vec<Complex64> =
        t.data().chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
    Spectrogram::from_data(cfg, sample_rate, frames, data).expect("spectrogram shape")
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    /// Introduces an input (leaf) tensor.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip(self.value(b), |x, y| x + y);
        self.push(Op::Add(a, b), value)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip(self.value(b), |x, y| x - y);
        self.push(Op::Sub(a, b), value)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip(self.value(b), |x, y| x * y);
        self.push(Op::Mul(a, b), value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert!(ta.is_matrix() && tb.is_matrix(), "matmul needs matrices");
        assert_eq!(ta.cols(), tb.rows(), "matmul inner dimensions");
        let value = matmul_values(ta, tb, false, false);
        self.push(Op::MatMul(a, b), value)
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let value = self.value(x).map(|v| v * factor);
        self.push(Op::Scale(x, factor), value)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| 1.0 / (1.0 + (-v).exp()));
        self.push(Op::Sigmoid(x), value)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let value = self.value(x).map(f64::tanh);
        self.push(Op::Tanh(x), value)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(0.0));
        self.push(Op::Relu(x), value)
    }

    pub fn square(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v * v);
        self.push(Op::Square(x), value)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).data().iter().sum());
        self.push(Op::Sum(x), value)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let value = Tensor::scalar(t.data().iter().sum::<f64>() / t.len() as f64);
        self.push(Op::Mean(x), value)
    }

    /// Contiguous slice of the flat data, viewed with a new shape.
    pub fn slice(&mut self, x: Var, start: usize, shape: Vec<usize>) -> Var {
        let count: usize = shape.iter().product();
        let value =
            Tensor::new(shape.clone(), self.value(x).data()[start..start + count].to_vec())
                .expect("slice shape");
        self.push(Op::Slice { x, start }, value)
    }

    /// Columns [start, start + len) of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let t = self.value(x);
        let (rows, cols) = (t.rows(), t.cols());
        assert!(start + len <= cols, "column slice out of range");
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&t.data()[r * cols + start..r * cols + start + len]);
        }
        let value = Tensor::matrix(rows, len, data).expect("slice_cols shape");
        self.push(Op::SliceCols { x, start, len }, value)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.rows(), tb.rows(), "concat_cols row counts");
        let (rows, ca, cb) = (ta.rows(), ta.cols(), tb.cols());
        let mut data = Vec::with_capacity(rows * (ca + cb));
        for r in 0..rows {
            data.extend_from_slice(&ta.data()[r * ca..(r + 1) * ca]);
            data.extend_from_slice(&tb.data()[r * cb..(r + 1) * cb]);
        }
        let value = Tensor::matrix(rows, ca + cb, data).expect("concat shape");
        self.push(Op::ConcatCols(a, b), value)
    }

    /// Repeats a 1 × c tensor to rows × c (bias broadcasting).
    pub fn broadcast_rows(&mut self, x: Var, rows: usize) -> Var {
        let t = self.value(x);
        assert_eq!(t.rows(), 1, "broadcast_rows expects a single row");
        let cols = t.cols();
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            data.extend_from_slice(t.data());
        }
        let value = Tensor::matrix(rows, cols, data).expect("broadcast shape");
        self.push(Op::BroadcastRows { x, rows }, value)
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Var {
        let value = Tensor::new(shape.clone(), self.value(x).data().to_vec()).expect("reshape");
        self.push(Op::Reshape(x), value)
    }

    /// [r, c] → [r, 2c] duplicating each column into adjacent (re, im)
    /// slots, aligning real masks with interleaved spectra.
    pub fn interleave_dup(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let (rows, cols) = (t.rows(), t.cols());
        let mut data = Vec::with_capacity(rows * cols * 2);
        for v in t.data() {
            data.push(*v);
            data.push(*v);
        }
        let value = Tensor::matrix(rows, 2 * cols, data).expect("interleave shape");
        self.push(Op::InterleaveDup(x), value)
    }

    /// Resamples rows at fractional `positions` (clamped) by linear
    /// interpolation; output has positions.len() rows.
    pub fn interp_rows(&mut self, x: Var, positions: Vec<f64>) -> Var {
        let t = self.value(x);
        let (rows, cols) = (t.rows(), t.cols());
        let mut data = Vec::with_capacity(positions.len() * cols);
        for &p in &positions {
            let (i0, i1, frac) = interp_indices(p, rows);
            for c in 0..cols {
                data.push((1.0 - frac) * t.at2(i0, c) + frac * t.at2(i1, c));
            }
        }
        let value = Tensor::matrix(positions.len(), cols, data).expect("interp_rows shape");
        self.push(Op::InterpRows { x, positions }, value)
    }

    /// Resamples columns at fractional `positions` (clamped) by linear
    /// interpolation; output has positions.len() columns.
    pub fn interp_cols(&mut self, x: Var, positions: Vec<f64>) -> Var {
        let t = self.value(x);
        let (rows, cols) = (t.rows(), t.cols());
        let mut data = Vec::with_capacity(rows * positions.len());
        for r in 0..rows {
            for &p in &positions {
                let (i0, i1, frac) = interp_indices(p, cols);
                data.push((1.0 - frac) * t.at2(r, i0) + frac * t.at2(r, i1));
            }
        }
        let value = Tensor::matrix(rows, positions.len(), data).expect("interp_cols shape");
        self.push(Op::InterpCols { x, positions }, value)
    }

    /// Keeps entries where `mask` is true, zeroes the rest.
    pub fn mask_select(&mut self, x: Var, mask: Vec<bool>) -> Var {
        let t = self.value(x);
        assert_eq!(t.len(), mask.len(), "mask length");
        let data = t.data().iter().zip(&mask).map(|(&v, &m)| if m { v } else { 0.0 }).collect();
        let value = Tensor::new(t.shape().to_vec(), data).expect("mask shape");
        self.push(Op::MaskSelect { x, mask }, value)
    }

    /// STFT of a 1-D waveform tensor → [frames, 2·bins] interleaved.
    pub fn stft_node(&mut self, x: Var, cfg: StftConfig, sample_rate: u32) -> Var {
        let wave = Waveform::new(self.value(x).data().to_vec(), sample_rate);
        let spec = stft(&wave, cfg).expect("stft node input long enough");
        let value = spectrogram_to_tensor(&spec);
        self.push(Op::Stft { x, cfg, sample_rate }, value)
    }

    /// Inverse STFT of a [frames, 2·bins] interleaved tensor → 1-D waveform.
    pub fn istft_node(&mut self, x: Var, cfg: StftConfig, sample_rate: u32) -> Var {
        let spec = tensor_to_spectrogram(self.value(x), cfg, sample_rate);
        let wave = istft(&spec);
        let value = Tensor::vector(wave.into_samples());
        self.push(Op::Istft { x, cfg, sample_rate }, value)
    }

    /// Reverse-mode gradients of a scalar `loss` with respect to `leaves`.
    /// Leaves the loss cannot reach get zero gradients.
    pub fn grad(&self, loss: Var, leaves: &[Var]) -> Vec<Tensor> {
        assert_eq!(self.value(loss).len(), 1, "loss must be scalar");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            self.backward_one(id, &g, &mut grads);
            grads[id] = Some(g);
        }

        leaves
            .iter()
            .map(|leaf| {
                grads[leaf.0]
                    .clone()
                    .unwrap_or_else(|| Tensor::zeros(self.value(*leaf).shape().to_vec()))
            })
            .collect()
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], var: Var, delta: Tensor) {
        match &mut grads[var.0] {
            Some(existing) => {
                *existing = existing.zip(&delta, |a, b| a + b);
            }
            slot => *slot = Some(delta),
        }
    }

    fn backward_one(&self, id: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let ga = g.zip(self.value(*b), |gv, bv| gv * bv);
                let gb = g.zip(self.value(*a), |gv, av| gv * av);
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
            Op::MatMul(a, b) => {
                // ∂/∂A = G·Bᵀ, ∂/∂B = Aᵀ·G
                let ga = matmul_values(g, self.value(*b), false, true);
                let gb = matmul_values(self.value(*a), g, true, false);
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
            Op::Scale(x, factor) => {
                let f = *factor;
                self.accumulate(grads, *x, g.map(|v| v * f));
            }
            Op::Sigmoid(x) => {
                let y = &self.nodes[id].value;
                self.accumulate(grads, *x, g.zip(y, |gv, yv| gv * yv * (1.0 - yv)));
            }
            Op::Tanh(x) => {
                let y = &self.nodes[id].value;
                self.accumulate(grads, *x, g.zip(y, |gv, yv| gv * (1.0 - yv * yv)));
            }
            Op::Relu(x) => {
                let input = self.value(*x);
                self.accumulate(grads, *x, g.zip(input, |gv, xv| if xv > 0.0 { gv } else { 0.0 }));
            }
            Op::Square(x) => {
                let input = self.value(*x);
                self.accumulate(grads, *x, g.zip(input, |gv, xv| 2.0 * xv * gv));
            }
            Op::Sum(x) => {
                let gv = g.item();
                let shape = self.value(*x).shape().to_vec();
                let count: usize = shape.iter().product();
                self.accumulate(grads, *x, Tensor::new(shape, vec![gv; count]).unwrap());
            }
            Op::Mean(x) => {
                let t = self.value(*x);
                let gv = g.item() / t.len() as f64;
                self.accumulate(
                    grads,
                    *x,
                    Tensor::new(t.shape().to_vec(), vec![gv; t.len()]).unwrap(),
                );
            }
            Op::Slice { x, start } => {
                let mut full = Tensor::zeros(self.value(*x).shape().to_vec());
                full.data_mut()[*start..*start + g.len()].copy_from_slice(g.data());
                self.accumulate(grads, *x, full);
            }
            Op::SliceCols { x, start, len } => {
                let t = self.value(*x);
                let (rows, cols) = (t.rows(), t.cols());
                let mut full = Tensor::zeros(vec![rows, cols]);
                for r in 0..rows {
                    for c in 0..*len {
                        full.data_mut()[r * cols + start + c] = g.data()[r * len + c];
                    }
                }
                self.accumulate(grads, *x, full);
            }
            Op::ConcatCols(a, b) => {
                let (ca, cb) = (self.value(*a).cols(), self.value(*b).cols());
                let rows = self.value(*a).rows();
                let mut ga = Tensor::zeros(vec![rows, ca]);
                let mut gb = Tensor::zeros(vec![rows, cb]);
                for r in 0..rows {
                    let row = &g.data()[r * (ca + cb)..(r + 1) * (ca + cb)];
                    ga.data_mut()[r * ca..(r + 1) * ca].copy_from_slice(&row[..ca]);
                    gb.data_mut()[r * cb..(r + 1) * cb].copy_from_slice(&row[ca..]);
                }
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
            Op::BroadcastRows { x, rows } => {
                let cols = self.value(*x).cols();
                let mut gx = Tensor::zeros(vec![1, cols]);
                for r in 0..*rows {
                    for c in 0..cols {
                        gx.data_mut()[c] += g.data()[r * cols + c];
                    }
                }
                self.accumulate(grads, *x, gx);
            }
            Op::Reshape(x) => {
                let shape = self.value(*x).shape().to_vec();
                self.accumulate(grads, *x, Tensor::new(shape, g.data().to_vec()).unwrap());
            }
            Op::InterleaveDup(x) => {
                let t = self.value(*x);
                let (rows, cols) = (t.rows(), t.cols());
                let mut gx = Tensor::zeros(vec![rows, cols]);
                for r in 0..rows {
                    for c in 0..cols {
                        gx.data_mut()[r * cols + c] =
                            g.data()[r * 2 * cols + 2 * c] + g.data()[r * 2 * cols + 2 * c + 1];
                    }
                }
                self.accumulate(grads, *x, gx);
            }
            Op::InterpRows { x, positions } => {
                let t = self.value(*x);
                let (rows, cols) = (t.rows(), t.cols());
                let mut gx = Tensor::zeros(vec![rows, cols]);
                for (r_out, &p) in positions.iter().enumerate() {
                    let (i0, i1, frac) = interp_indices(p, rows);
                    for c in 0..cols {
                        let gv = g.data()[r_out * cols + c];
                        gx.data_mut()[i0 * cols + c] += (1.0 - frac) * gv;
                        gx.data_mut()[i1 * cols + c] += frac * gv;
                    }
                }
                self.accumulate(grads, *x, gx);
            }
            Op::InterpCols { x, positions } => {
                let t = self.value(*x);
                let (rows, cols) = (t.rows(), t.cols());
                let out_cols = positions.len();
                let mut gx = Tensor::zeros(vec![rows, cols]);
                for r in 0..rows {
                    for (c_out, &p) in positions.iter().enumerate() {
                        let (i0, i1, frac) = interp_indices(p, cols);
                        let gv = g.data()[r * out_cols + c_out];
                        gx.data_mut()[r * cols + i0] += (1.0 - frac) * gv;
                        gx.data_mut()[r * cols + i1] += frac * gv;
                    }
                }
                self.accumulate(grads, *x, gx);
            }
            Op::MaskSelect { x, mask } => {
                let data = g
                    .data()
                    .iter()
                    .zip(mask)
                    .map(|(&gv, &m)| if m { gv } else { 0.0 })
                    .collect();
                let gx = Tensor::new(g.shape().to_vec(), data).unwrap();
                self.accumulate(grads, *x, gx);
            }
            Op::Stft { x, cfg, sample_rate } => {
                let spec = tensor_to_spectrogram(g, *cfg, *sample_rate);
                let len = self.value(*x).len();
                let gx = Tensor::vector(stft_adjoint(&spec, len).into_samples());
                self.accumulate(grads, *x, gx);
            }
            Op::Istft { x, cfg, sample_rate } => {
                let frames = self.value(*x).rows();
                let spec = istft_adjoint(g.data(), *cfg, frames, *sample_rate)
                    .expect("istft adjoint shape");
                self.accumulate(grads, *x, spectrogram_to_tensor(&spec));
            }
        }
    }
}

fn interp_indices(p: f64, len: usize) -> (usize, usize, f64) {
    let clamped = p.clamp(0.0, (len - 1) as f64);
    let i0 = clamped.floor() as usize;
    let i1 = (i0 + 1).min(len - 1);
    (i0, i1, clamped - i0 as f64)
}

/// C = op(A)·op(B) with optional transposes.
fn matmul_values(a: &Tensor, b: &Tensor, transpose_a: bool, transpose_b: bool) -> Tensor {
    let (ar, ac) = if transpose_a { (a.cols(), a.rows()) } else { (a.rows(), a.cols()) };
    let (br, bc) = if transpose_b { (b.cols(), b.rows()) } else { (b.rows(), b.cols()) };
    assert_eq!(ac, br, "matmul inner dimensions");
    let get_a = |r: usize, k: usize| if transpose_a { a.at2(k, r) } else { a.at2(r, k) };
    let get_b = |k: usize, c: usize| if transpose_b { b.at2(c, k) } else { b.at2(k, c) };
    let mut data = vec![0.0; ar * bc];
    for r in 0..ar {
        for k in 0..ac {
            let av = get_a(r, k);
            if av == 0.0 {
                continue;
            }
            for c in 0..bc {
                data[r * bc + c] += av * get_b(k, c);
            }
        }
    }
    Tensor::matrix(ar, bc, data).expect("matmul shape")
}
