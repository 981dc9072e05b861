//! Reverse-mode automatic differentiation over real tensors.
//!
//! Complex signals live on the tape as `(L, 2)` tensors whose final axis
//! holds interleaved real/imaginary parts, so every backward rule is plain
//! real-valued calculus and central finite differences are the unambiguous
//! ground truth. The primitive set is exactly what is needed to
//! backpropagate through the transmit DSP, the split-step channel and the
//! receiver network: elementwise arithmetic, complex products, `exp(j
//! theta)`, squared magnitude, reductions, dense layers, a fused
//! softmax/cross-entropy head, embedding gather, circular FIR convolution,
//! zero-insertion/strided resampling, unitary FFTs and frequency-domain
//! masks.
//!
//! A [`Tape`] owns the recorded graph; [`Var`]s are indices into it. One
//! tape is single-threaded by construction; independent tapes may run
//! concurrently.

mod adam;
mod gradcheck;

pub use adam::{clip_global_norm, AdamState};
pub use gradcheck::grad_check;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::signal::{fft_in_place, ifft_in_place};

/// Dense row-major tensor of `f64`. Complex vectors of length `L` use shape
/// `(L, 2)`; scalars use `(1, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub data: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            data: vec![0.0; rows * cols],
            rows,
            cols,
        }
    }

    pub fn scalar(x: f64) -> Self {
        Self {
            data: vec![x],
            rows: 1,
            cols: 1,
        }
    }

    pub fn from_vec(data: Vec<f64>, rows: usize, cols: usize) -> Self {
        assert_eq!(data.len(), rows * cols, "tensor data does not match shape");
        Self { data, rows, cols }
    }

    /// Complex vector -> `(L, 2)` tensor.
    pub fn from_complex(v: &[Complex64]) -> Self {
        let mut data = Vec::with_capacity(v.len() * 2);
        for c in v {
            data.push(c.re);
            data.push(c.im);
        }
        Self {
            data,
            rows: v.len(),
            cols: 2,
        }
    }

    /// `(L, 2)` tensor -> complex vector.
    pub fn to_complex(&self) -> Vec<Complex64> {
        assert_eq!(self.cols, 2, "tensor is not a complex vector");
        self.data
            .chunks_exact(2)
            .map(|c| Complex64::new(c[0], c[1]))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn item(&self) -> f64 {
        assert_eq!(self.len(), 1, "tensor is not a scalar");
        self.data[0]
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    Mul(Var, Var),
    CMul(Var, Var),
    CMulConst(Var, Vec<Complex64>),
    ExpJ(Var),
    SqMag(Var),
    Rsqrt(Var),
    Sum(Var),
    Mean(Var),
    MeanPower(Var),
    MatMul(Var, Var),
    BiasAdd(Var, Var),
    Elu(Var),
    SoftmaxXent(Var, Vec<usize>),
    Gather(Var, Vec<usize>),
    Upsample(Var, usize),
    Downsample(Var, usize, usize),
    Fft(Var),
    Ifft(Var),
    CircularFir { x: Var, taps: Var, center: usize },
    CircEmbed { taps: Var, n: usize, center: usize },
    Window { x: Var, n_adj: usize },
    AddConst(Var),
    CScale { x: Var, s: Var },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients of a scalar loss with respect to every node, indexable by
/// [`Var`]. Leaves that the loss does not depend on report `None`.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Gradient of a leaf, or a zero tensor of the given shape when the
    /// loss does not depend on it.
    pub fn get_or_zeros(&self, v: Var, rows: usize, cols: usize) -> Tensor {
        self.grads[v.0]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(rows, cols))
    }
}

/// Recorded computation graph. Operations execute eagerly; `backward`
/// replays the tape in reverse, accumulating adjoints additively across
/// fan-out.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Record a differentiable input (parameter or signal).
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Record a non-differentiable constant. Gradients stop here.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(ta.shape(), tb.shape(), "add: shape mismatch");
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x + y).collect();
        let t = Tensor::from_vec(data, ta.rows, ta.cols);
        self.push(t, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(ta.shape(), tb.shape(), "sub: shape mismatch");
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x - y).collect();
        let t = Tensor::from_vec(data, ta.rows, ta.cols);
        self.push(t, Op::Sub(a, b))
    }

    /// Multiply by a real compile-time constant.
    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let ta = &self.nodes[a.0].value;
        let t = Tensor::from_vec(ta.data.iter().map(|x| x * c).collect(), ta.rows, ta.cols);
        self.push(t, Op::Scale(a, c))
    }

    /// Elementwise real product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(ta.shape(), tb.shape(), "mul: shape mismatch");
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x * y).collect();
        let t = Tensor::from_vec(data, ta.rows, ta.cols);
        self.push(t, Op::Mul(a, b))
    }

    /// Elementwise complex product of `(L, 2)` tensors.
    pub fn cmul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(ta.shape(), tb.shape(), "cmul: shape mismatch");
        assert_eq!(ta.cols, 2, "cmul expects complex tensors");
        let mut data = Vec::with_capacity(ta.len());
        for (x, y) in ta.data.chunks_exact(2).zip(tb.data.chunks_exact(2)) {
            data.push(x[0] * y[0] - x[1] * y[1]);
            data.push(x[0] * y[1] + x[1] * y[0]);
        }
        let t = Tensor::from_vec(data, ta.rows, 2);
        self.push(t, Op::CMul(a, b))
    }

    /// Elementwise product with a fixed complex mask (dispersion phasors,
    /// brickwall filters). The adjoint multiplies by the conjugate mask.
    pub fn cmul_const(&mut self, a: Var, mask: &[Complex64]) -> Var {
        let ta = &self.nodes[a.0].value;
        assert_eq!(ta.cols, 2, "cmul_const expects a complex tensor");
        assert_eq!(ta.rows, mask.len(), "mask length mismatch");
        let mut data = Vec::with_capacity(ta.len());
        for (x, m) in ta.data.chunks_exact(2).zip(mask) {
            data.push(x[0] * m.re - x[1] * m.im);
            data.push(x[0] * m.im + x[1] * m.re);
        }
        let t = Tensor::from_vec(data, ta.rows, 2);
        self.push(t, Op::CMulConst(a, mask.to_vec()))
    }

    /// `(L, 1)` phase -> `(L, 2)` unit phasor `exp(j theta)`.
    pub fn exp_j(&mut self, theta: Var) -> Var {
        let tt = &self.nodes[theta.0].value;
        assert_eq!(tt.cols, 1, "exp_j expects a real column");
        let mut data = Vec::with_capacity(tt.rows * 2);
        for &th in &tt.data {
            data.push(th.cos());
            data.push(th.sin());
        }
        let t = Tensor::from_vec(data, tt.rows, 2);
        self.push(t, Op::ExpJ(theta))
    }

    /// `(L, 2)` complex -> `(L, 1)` squared magnitudes.
    pub fn sq_mag(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        assert_eq!(ta.cols, 2, "sq_mag expects a complex tensor");
        let data = ta
            .data
            .chunks_exact(2)
            .map(|c| c[0] * c[0] + c[1] * c[1])
            .collect();
        let t = Tensor::from_vec(data, ta.rows, 1);
        self.push(t, Op::SqMag(a))
    }

    /// Elementwise `1/sqrt(x)` for strictly positive inputs.
    pub fn rsqrt(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        let data = ta.data.iter().map(|&x| x.sqrt().recip()).collect();
        let t = Tensor::from_vec(data, ta.rows, ta.cols);
        self.push(t, Op::Rsqrt(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.data.iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        let s = ta.data.iter().sum::<f64>() / ta.len() as f64;
        self.push(Tensor::scalar(s), Op::Mean(a))
    }

    /// Mean power of a complex tensor: `sum(data^2) / rows`.
    pub fn mean_power(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        let s = ta.data.iter().map(|x| x * x).sum::<f64>() / ta.rows as f64;
        self.push(Tensor::scalar(s), Op::MeanPower(a))
    }

    /// `(n, k) x (k, m) -> (n, m)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(ta.cols, tb.rows, "matmul: inner dimensions differ");
        let (n, k, m) = (ta.rows, ta.cols, tb.cols);
        let mut out = vec![0.0f64; n * m];
        for i in 0..n {
            for p in 0..k {
                let aip = ta.data[i * k + p];
                if aip == 0.0 {
                    continue;
                }
                let brow = &tb.data[p * m..(p + 1) * m];
                let orow = &mut out[i * m..(i + 1) * m];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += aip * bv;
                }
            }
        }
        let t = Tensor::from_vec(out, n, m);
        self.push(t, Op::MatMul(a, b))
    }

    /// Broadcast-add a `(1, m)` bias to each row of `(n, m)`.
    pub fn bias_add(&mut self, a: Var, bias: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[bias.0].value);
        assert_eq!(tb.rows, 1, "bias must be a row vector");
        assert_eq!(ta.cols, tb.cols, "bias width mismatch");
        let mut data = ta.data.clone();
        for row in data.chunks_exact_mut(ta.cols) {
            for (v, b) in row.iter_mut().zip(&tb.data) {
                *v += b;
            }
        }
        let t = Tensor::from_vec(data, ta.rows, ta.cols);
        self.push(t, Op::BiasAdd(a, bias))
    }

    /// Exponential linear unit with alpha = 1.
    pub fn elu(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        let data = ta
            .data
            .iter()
            .map(|&x| if x > 0.0 { x } else { x.exp() - 1.0 })
            .collect();
        let t = Tensor::from_vec(data, ta.rows, ta.cols);
        self.push(t, Op::Elu(a))
    }

    /// Fused softmax + mean cross-entropy against integer labels, in nats.
    /// Stable via per-row max subtraction; backward is
    /// `(softmax - onehot) / n`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Var {
        let tl = &self.nodes[logits.0].value;
        assert_eq!(tl.rows, labels.len(), "one label per row required");
        let m = tl.cols;
        let mut loss = 0.0f64;
        for (row, &label) in tl.data.chunks_exact(m).zip(labels) {
            assert!(label < m, "label out of range");
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - row[label];
        }
        loss /= labels.len() as f64;
        self.push(
            Tensor::scalar(loss),
            Op::SoftmaxXent(logits, labels.to_vec()),
        )
    }

    /// Row lookup into `(M, 2)`: embeds `indices` as an `(N, 2)` tensor.
    /// Backward scatter-adds cotangent rows into the embedding.
    pub fn gather(&mut self, table: Var, indices: &[usize]) -> Var {
        let tt = &self.nodes[table.0].value;
        let m = tt.rows;
        let cols = tt.cols;
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            assert!(i < m, "gather index out of range");
            data.extend_from_slice(&tt.data[i * cols..(i + 1) * cols]);
        }
        let t = Tensor::from_vec(data, indices.len(), cols);
        self.push(t, Op::Gather(table, indices.to_vec()))
    }

    /// Zero-insertion upsampling of a complex tensor by `factor`.
    pub fn upsample(&mut self, a: Var, factor: usize) -> Var {
        assert!(factor >= 1);
        let ta = &self.nodes[a.0].value;
        assert_eq!(ta.cols, 2);
        let mut data = vec![0.0; ta.rows * factor * 2];
        for i in 0..ta.rows {
            data[i * factor * 2] = ta.data[i * 2];
            data[i * factor * 2 + 1] = ta.data[i * 2 + 1];
        }
        let t = Tensor::from_vec(data, ta.rows * factor, 2);
        self.push(t, Op::Upsample(a, factor))
    }

    /// Strided downsampling of a complex tensor; adjoint of [`Tape::upsample`]
    /// when `offset == 0`.
    pub fn downsample(&mut self, a: Var, factor: usize, offset: usize) -> Var {
        let ta = &self.nodes[a.0].value;
        assert_eq!(ta.cols, 2);
        assert!(factor >= 1 && offset < factor);
        assert_eq!(ta.rows % factor, 0, "length not divisible by factor");
        let out_rows = ta.rows / factor;
        let mut data = Vec::with_capacity(out_rows * 2);
        for k in 0..out_rows {
            let src = k * factor + offset;
            data.push(ta.data[src * 2]);
            data.push(ta.data[src * 2 + 1]);
        }
        let t = Tensor::from_vec(data, out_rows, 2);
        self.push(t, Op::Downsample(a, factor, offset))
    }

    /// Unitary FFT of a complex tensor; the adjoint is the inverse
    /// transform applied to the cotangent.
    pub fn fft(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        assert_eq!(ta.cols, 2);
        let mut buf = ta.to_complex();
        fft_in_place(&mut buf);
        let t = Tensor::from_complex(&buf);
        self.push(t, Op::Fft(a))
    }

    /// Unitary inverse FFT; adjoint of [`Tape::fft`].
    pub fn ifft(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        assert_eq!(ta.cols, 2);
        let mut buf = ta.to_complex();
        ifft_in_place(&mut buf);
        let t = Tensor::from_complex(&buf);
        self.push(t, Op::Ifft(a))
    }

    /// Complex circular convolution with variable taps:
    /// `y[n] = sum_k taps[k] * x[(n - k + center) mod N]`.
    pub fn circular_fir(&mut self, x: Var, taps: Var, center: usize) -> Var {
        let (tx, th) = (&self.nodes[x.0].value, &self.nodes[taps.0].value);
        assert_eq!(tx.cols, 2);
        assert_eq!(th.cols, 2);
        assert!(th.rows <= tx.rows, "taps longer than signal");
        let n = tx.rows;
        let xs = tx.to_complex();
        let hs = th.to_complex();
        let mut out = vec![Complex64::ZERO; n];
        for (k, &h) in hs.iter().enumerate() {
            for (no, o) in out.iter_mut().enumerate() {
                let idx = (no + n + center - k) % n;
                *o += h * xs[idx];
            }
        }
        let t = Tensor::from_complex(&out);
        self.push(t, Op::CircularFir { x, taps, center })
    }

    /// Embed `taps` into a length-`n` circular buffer with tap `center` at
    /// position 0. `circular_fir(x, taps, center)` equals the circular
    /// convolution of `x` with this embedding.
    pub fn circ_embed(&mut self, taps: Var, n: usize, center: usize) -> Var {
        let th = &self.nodes[taps.0].value;
        assert_eq!(th.cols, 2);
        assert!(th.rows <= n);
        let mut data = vec![0.0f64; n * 2];
        for k in 0..th.rows {
            let pos = (k + n - center % n) % n;
            data[pos * 2] = th.data[k * 2];
            data[pos * 2 + 1] = th.data[k * 2 + 1];
        }
        let t = Tensor::from_vec(data, n, 2);
        self.push(t, Op::CircEmbed { taps, n, center })
    }

    /// FFT-domain circular convolution; same contract as
    /// [`Tape::circular_fir`] but O(N log N), used for long shapers.
    pub fn circular_fir_fft(&mut self, x: Var, taps: Var, center: usize) -> Var {
        let n = self.nodes[x.0].value.rows;
        let h = self.circ_embed(taps, n, center);
        let xf = self.fft(x);
        let hf = self.fft(h);
        let prod = self.cmul(xf, hf);
        let y = self.ifft(prod);
        // Unitary transforms absorb 1/sqrt(N) twice; plain circular
        // convolution needs it back.
        self.scale(y, (n as f64).sqrt())
    }

    /// Sliding circular window: row `i` of the output is the concatenated
    /// re/im of `x[(i - n_adj) mod N ..= (i + n_adj) mod N]`.
    pub fn window(&mut self, x: Var, n_adj: usize) -> Var {
        let tx = &self.nodes[x.0].value;
        assert_eq!(tx.cols, 2);
        let n = tx.rows;
        let w = 2 * n_adj + 1;
        assert!(w <= n, "window exceeds block length");
        let mut data = Vec::with_capacity(n * w * 2);
        for i in 0..n {
            for j in 0..w {
                let src = (i + n + j - n_adj) % n;
                data.push(tx.data[src * 2]);
                data.push(tx.data[src * 2 + 1]);
            }
        }
        let t = Tensor::from_vec(data, n, w * 2);
        self.push(t, Op::Window { x, n_adj })
    }

    /// Add a parameter-independent constant (e.g. sampled channel noise).
    /// The cotangent passes through unchanged.
    pub fn add_const(&mut self, a: Var, t: &Tensor) -> Var {
        let ta = &self.nodes[a.0].value;
        assert_eq!(ta.shape(), t.shape(), "add_const: shape mismatch");
        let data = ta.data.iter().zip(&t.data).map(|(x, y)| x + y).collect();
        let out = Tensor::from_vec(data, ta.rows, ta.cols);
        self.push(out, Op::AddConst(a))
    }

    /// Multiply a tensor by a scalar variable.
    pub fn cscale(&mut self, x: Var, s: Var) -> Var {
        let (tx, ts) = (&self.nodes[x.0].value, &self.nodes[s.0].value);
        assert_eq!(ts.len(), 1, "cscale expects a scalar variable");
        let sv = ts.data[0];
        let t = Tensor::from_vec(tx.data.iter().map(|v| v * sv).collect(), tx.rows, tx.cols);
        self.push(t, Op::CScale { x, s })
    }

    /// Rescale a complex tensor so its mean power equals `target`, keeping
    /// the dependence of the scale factor on the input (the gradient flows
    /// through the measured power, not around it).
    pub fn power_normalize(&mut self, x: Var, target: f64) -> Result<Var> {
        let p = self.mean_power(x);
        if self.value(p).item() <= 0.0 {
            return Err(Error::degenerate("cannot power-normalize a zero signal"));
        }
        let r = self.rsqrt(p);
        let s = self.scale(r, target.sqrt());
        Ok(self.cscale(x, s))
    }

    /// Reverse pass from a scalar loss. Returns the adjoint of every node;
    /// fan-out accumulates additively.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::invalid("loss must be a scalar"));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for id in (0..=loss.0).rev() {
            let Some(cot) = grads[id].take() else {
                continue;
            };
            self.accumulate_parents(id, &cot, &mut grads);
            grads[id] = Some(cot);
        }
        Ok(Gradients { grads })
    }

    fn add_grad(grads: &mut [Option<Tensor>], v: Var, delta: Tensor) {
        match &mut grads[v.0] {
            Some(g) => {
                for (a, b) in g.data.iter_mut().zip(&delta.data) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(delta),
        }
    }

    fn accumulate_parents(&self, id: usize, cot: &Tensor, grads: &mut [Option<Tensor>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                Self::add_grad(grads, *a, cot.clone());
                Self::add_grad(grads, *b, cot.clone());
            }
            Op::Sub(a, b) => {
                Self::add_grad(grads, *a, cot.clone());
                let neg =
                    Tensor::from_vec(cot.data.iter().map(|x| -x).collect(), cot.rows, cot.cols);
                Self::add_grad(grads, *b, neg);
            }
            Op::Scale(a, c) => {
                let g =
                    Tensor::from_vec(cot.data.iter().map(|x| x * c).collect(), cot.rows, cot.cols);
                Self::add_grad(grads, *a, g);
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let ga = Tensor::from_vec(
                    cot.data.iter().zip(&tb.data).map(|(c, y)| c * y).collect(),
                    cot.rows,
                    cot.cols,
                );
                let gb = Tensor::from_vec(
                    cot.data.iter().zip(&ta.data).map(|(c, x)| c * x).collect(),
                    cot.rows,
                    cot.cols,
                );
                Self::add_grad(grads, *a, ga);
                Self::add_grad(grads, *b, gb);
            }
            Op::CMul(a, b) => {
                // y = a ∘ b (complex); adjoints multiply by the conjugate
                // of the other factor.
                let (ta, tb) = (val(*a), val(*b));
                let mut ga = vec![0.0; ta.len()];
                let mut gb = vec![0.0; tb.len()];
                for i in 0..ta.rows {
                    let (cr, ci) = (cot.data[i * 2], cot.data[i * 2 + 1]);
                    let (ar, ai) = (ta.data[i * 2], ta.data[i * 2 + 1]);
                    let (br, bi) = (tb.data[i * 2], tb.data[i * 2 + 1]);
                    ga[i * 2] = cr * br + ci * bi;
                    ga[i * 2 + 1] = -cr * bi + ci * br;
                    gb[i * 2] = cr * ar + ci * ai;
                    gb[i * 2 + 1] = -cr * ai + ci * ar;
                }
                Self::add_grad(grads, *a, Tensor::from_vec(ga, ta.rows, 2));
                Self::add_grad(grads, *b, Tensor::from_vec(gb, tb.rows, 2));
            }
            Op::CMulConst(a, mask) => {
                let rows = cot.rows;
                let mut ga = vec![0.0; rows * 2];
                for (i, m) in mask.iter().enumerate() {
                    let (cr, ci) = (cot.data[i * 2], cot.data[i * 2 + 1]);
                    ga[i * 2] = cr * m.re + ci * m.im;
                    ga[i * 2 + 1] = -cr * m.im + ci * m.re;
                }
                Self::add_grad(grads, *a, Tensor::from_vec(ga, rows, 2));
            }
            Op::ExpJ(theta) => {
                let out = &self.nodes[id].value;
                let rows = out.rows;
                let mut g = vec![0.0; rows];
                for (i, gi) in g.iter_mut().enumerate() {
                    let (c, s) = (out.data[i * 2], out.data[i * 2 + 1]);
                    *gi = -cot.data[i * 2] * s + cot.data[i * 2 + 1] * c;
                }
                Self::add_grad(grads, *theta, Tensor::from_vec(g, rows, 1));
            }
            Op::SqMag(a) => {
                let ta = val(*a);
                let mut g = vec![0.0; ta.len()];
                for i in 0..ta.rows {
                    g[i * 2] = 2.0 * ta.data[i * 2] * cot.data[i];
                    g[i * 2 + 1] = 2.0 * ta.data[i * 2 + 1] * cot.data[i];
                }
                Self::add_grad(grads, *a, Tensor::from_vec(g, ta.rows, 2));
            }
            Op::Rsqrt(a) => {
                let out = &self.nodes[id].value;
                let g = Tensor::from_vec(
                    cot.data
                        .iter()
                        .zip(&out.data)
                        .map(|(c, y)| -0.5 * y * y * y * c)
                        .collect(),
                    cot.rows,
                    cot.cols,
                );
                Self::add_grad(grads, *a, g);
            }
            Op::Sum(a) => {
                let ta = val(*a);
                let c = cot.item();
                Self::add_grad(
                    grads,
                    *a,
                    Tensor::from_vec(vec![c; ta.len()], ta.rows, ta.cols),
                );
            }
            Op::Mean(a) => {
                let ta = val(*a);
                let c = cot.item() / ta.len() as f64;
                Self::add_grad(
                    grads,
                    *a,
                    Tensor::from_vec(vec![c; ta.len()], ta.rows, ta.cols),
                );
            }
            Op::MeanPower(a) => {
                let ta = val(*a);
                let c = 2.0 * cot.item() / ta.rows as f64;
                let g = Tensor::from_vec(ta.data.iter().map(|x| c * x).collect(), ta.rows, ta.cols);
                Self::add_grad(grads, *a, g);
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (n, k, m) = (ta.rows, ta.cols, tb.cols);
                // dA = dY * B^T
                let mut ga = vec![0.0; n * k];
                for i in 0..n {
                    for p in 0..k {
                        let brow = &tb.data[p * m..(p + 1) * m];
                        let crow = &cot.data[i * m..(i + 1) * m];
                        let mut acc = 0.0;
                        for (bv, cv) in brow.iter().zip(crow) {
                            acc += bv * cv;
                        }
                        ga[i * k + p] = acc;
                    }
                }
                // dB = A^T * dY
                let mut gb = vec![0.0; k * m];
                for i in 0..n {
                    let crow = &cot.data[i * m..(i + 1) * m];
                    for p in 0..k {
                        let aip = ta.data[i * k + p];
                        if aip == 0.0 {
                            continue;
                        }
                        let grow = &mut gb[p * m..(p + 1) * m];
                        for (g, cv) in grow.iter_mut().zip(crow) {
                            *g += aip * cv;
                        }
                    }
                }
                Self::add_grad(grads, *a, Tensor::from_vec(ga, n, k));
                Self::add_grad(grads, *b, Tensor::from_vec(gb, k, m));
            }
            Op::BiasAdd(a, bias) => {
                Self::add_grad(grads, *a, cot.clone());
                let m = cot.cols;
                let mut gb = vec![0.0; m];
                for row in cot.data.chunks_exact(m) {
                    for (g, v) in gb.iter_mut().zip(row) {
                        *g += v;
                    }
                }
                Self::add_grad(grads, *bias, Tensor::from_vec(gb, 1, m));
            }
            Op::Elu(a) => {
                let ta = val(*a);
                let out = &self.nodes[id].value;
                let g = Tensor::from_vec(
                    cot.data
                        .iter()
                        .zip(ta.data.iter().zip(&out.data))
                        .map(|(c, (&x, &y))| if x > 0.0 { *c } else { c * (y + 1.0) })
                        .collect(),
                    cot.rows,
                    cot.cols,
                );
                Self::add_grad(grads, *a, g);
            }
            Op::SoftmaxXent(logits, labels) => {
                // (softmax - onehot) / n, scaled by the incoming cotangent.
                let tl = val(*logits);
                let m = tl.cols;
                let n = labels.len() as f64;
                let c = cot.item();
                let mut g = vec![0.0; tl.len()];
                for (r, (row, &label)) in tl.data.chunks_exact(m).zip(labels).enumerate() {
                    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let denom: f64 = row.iter().map(|&v| (v - max).exp()).sum();
                    for (j, &v) in row.iter().enumerate() {
                        let p = (v - max).exp() / denom;
                        g[r * m + j] = c * (p - if j == label { 1.0 } else { 0.0 }) / n;
                    }
                }
                Self::add_grad(grads, *logits, Tensor::from_vec(g, tl.rows, m));
            }
            Op::Gather(table, indices) => {
                let tt = val(*table);
                let cols = tt.cols;
                let mut g = vec![0.0; tt.len()];
                for (r, &i) in indices.iter().enumerate() {
                    for j in 0..cols {
                        g[i * cols + j] += cot.data[r * cols + j];
                    }
                }
                Self::add_grad(grads, *table, Tensor::from_vec(g, tt.rows, cols));
            }
            Op::Upsample(a, factor) => {
                let ta = val(*a);
                let mut g = vec![0.0; ta.len()];
                for i in 0..ta.rows {
                    g[i * 2] = cot.data[i * factor * 2];
                    g[i * 2 + 1] = cot.data[i * factor * 2 + 1];
                }
                Self::add_grad(grads, *a, Tensor::from_vec(g, ta.rows, 2));
            }
            Op::Downsample(a, factor, offset) => {
                let ta = val(*a);
                let mut g = vec![0.0; ta.len()];
                for k in 0..cot.rows {
                    let dst = k * factor + offset;
                    g[dst * 2] = cot.data[k * 2];
                    g[dst * 2 + 1] = cot.data[k * 2 + 1];
                }
                Self::add_grad(grads, *a, Tensor::from_vec(g, ta.rows, 2));
            }
            Op::Fft(a) => {
                let mut buf = cot.to_complex();
                ifft_in_place(&mut buf);
                Self::add_grad(grads, *a, Tensor::from_complex(&buf));
            }
            Op::Ifft(a) => {
                let mut buf = cot.to_complex();
                fft_in_place(&mut buf);
                Self::add_grad(grads, *a, Tensor::from_complex(&buf));
            }
            Op::CircularFir { x, taps, center } => {
                let (tx, th) = (val(*x), val(*taps));
                let n = tx.rows;
                let xs = tx.to_complex();
                let hs = th.to_complex();
                let cs = cot.to_complex();
                // dx[m] = sum_k conj(h[k]) * cot[(m + k - center) mod n]
                let mut gx = vec![Complex64::ZERO; n];
                for (k, &h) in hs.iter().enumerate() {
                    let hc = h.conj();
                    for (m, g) in gx.iter_mut().enumerate() {
                        let idx = (m + n + k - center % n) % n;
                        *g += hc * cs[idx];
                    }
                }
                // dh[k] = sum_n cot[n] * conj(x[(n - k + center) mod n])
                let mut gh = vec![Complex64::ZERO; hs.len()];
                for (k, g) in gh.iter_mut().enumerate() {
                    let mut acc = Complex64::ZERO;
                    for (no, &c) in cs.iter().enumerate() {
                        let idx = (no + n + center - k) % n;
                        acc += c * xs[idx].conj();
                    }
                    *g = acc;
                }
                Self::add_grad(grads, *x, Tensor::from_complex(&gx));
                Self::add_grad(grads, *taps, Tensor::from_complex(&gh));
            }
            Op::CircEmbed { taps, n, center } => {
                let th = val(*taps);
                let mut g = vec![0.0; th.len()];
                for k in 0..th.rows {
                    let pos = (k + n - center % n) % n;
                    g[k * 2] = cot.data[pos * 2];
                    g[k * 2 + 1] = cot.data[pos * 2 + 1];
                }
                Self::add_grad(grads, *taps, Tensor::from_vec(g, th.rows, 2));
            }
            Op::Window { x, n_adj } => {
                let tx = val(*x);
                let n = tx.rows;
                let w = 2 * n_adj + 1;
                let mut g = vec![0.0; tx.len()];
                for i in 0..n {
                    for j in 0..w {
                        let src = (i + n + j - n_adj) % n;
                        g[src * 2] += cot.data[(i * w + j) * 2];
                        g[src * 2 + 1] += cot.data[(i * w + j) * 2 + 1];
                    }
                }
                Self::add_grad(grads, *x, Tensor::from_vec(g, n, 2));
            }
            Op::AddConst(a) => {
                Self::add_grad(grads, *a, cot.clone());
            }
            Op::CScale { x, s } => {
                let (tx, ts) = (val(*x), val(*s));
                let sv = ts.data[0];
                let gx = Tensor::from_vec(
                    cot.data.iter().map(|c| c * sv).collect(),
                    cot.rows,
                    cot.cols,
                );
                let gs: f64 = cot.data.iter().zip(&tx.data).map(|(c, x)| c * x).sum();
                Self::add_grad(grads, *x, gx);
                Self::add_grad(grads, *s, Tensor::scalar(gs));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn rand_tensor(rows: usize, cols: usize, rng: &mut StdRng) -> Tensor {
        Tensor::from_vec(
            (0..rows * cols)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect(),
            rows,
            cols,
        )
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(vec![1.0, 2.0, 3.0, 4.0], 2, 2));
        let loss = tape.sum(x);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data, vec![1.0; 4]);
    }

    #[test]
    fn fft_norm_gradient_is_two_x() {
        // loss = ||FFT(x)||^2 = ||x||^2 by unitarity, so grad = 2x.
        let mut rng = StdRng::seed_from_u64(1);
        let mut tape = Tape::new();
        let x = tape.leaf(rand_tensor(16, 2, &mut rng));
        let xf = tape.fft(x);
        let p = tape.sq_mag(xf);
        let loss = tape.sum(p);
        let grads = tape.backward(loss).unwrap();
        let gx = grads.get(x).unwrap();
        for (g, v) in gx.data.iter().zip(&tape.value(x).data) {
            assert!((g - 2.0 * v).abs() < 1e-12);
        }
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(4, 2));
        assert!(tape.backward(x).is_err());
    }

    #[test]
    fn fan_out_accumulates() {
        // loss = sum(x*x) + sum(x): grad = 2x + 1.
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(vec![0.5, -1.5, 2.0], 3, 1));
        let sq = tape.mul(x, x);
        let s1 = tape.sum(sq);
        let s2 = tape.sum(x);
        let loss = tape.add(s1, s2);
        let grads = tape.backward(loss).unwrap();
        let gx = grads.get(x).unwrap();
        for (g, v) in gx.data.iter().zip(&tape.value(x).data) {
            assert!((g - (2.0 * v + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_xent_backward_is_probs_minus_onehot() {
        let mut rng = StdRng::seed_from_u64(2);
        let mut tape = Tape::new();
        let logits = tape.leaf(rand_tensor(5, 4, &mut rng));
        let labels = vec![0usize, 3, 1, 2, 2];
        let loss = tape.softmax_cross_entropy(logits, &labels);
        let grads = tape.backward(loss).unwrap();
        let g = grads.get(logits).unwrap();

        let tl = tape.value(logits);
        for (r, (row, &label)) in tl.data.chunks_exact(4).zip(&labels).enumerate() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let denom: f64 = row.iter().map(|&v| (v - max).exp()).sum();
            for (j, &v) in row.iter().enumerate() {
                let p = (v - max).exp() / denom;
                let expect = (p - if j == label { 1.0 } else { 0.0 }) / 5.0;
                assert!((g.data[r * 4 + j] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fir_direct_and_fft_paths_agree() {
        let mut rng = StdRng::seed_from_u64(3);
        for &(n, k, center) in &[(16usize, 5usize, 2usize), (24, 9, 4), (32, 11, 0)] {
            let xt = rand_tensor(n, 2, &mut rng);
            let ht = rand_tensor(k, 2, &mut rng);

            let mut tape = Tape::new();
            let x = tape.leaf(xt.clone());
            let h = tape.leaf(ht.clone());
            let direct = tape.circular_fir(x, h, center);
            let viafft = tape.circular_fir_fft(x, h, center);
            let d = tape.sub(direct, viafft);
            let dsq = tape.sq_mag(d);
            let err = tape.sum(dsq);
            assert!(tape.value(err).item() < 1e-20, "paths disagree");

            // Gradients agree too.
            let loss_a = tape.sq_mag(direct);
            let la = tape.sum(loss_a);
            let ga = tape.backward(la).unwrap();
            let loss_b = tape.sq_mag(viafft);
            let lb = tape.sum(loss_b);
            let gb = tape.backward(lb).unwrap();
            for (u, v) in ga.get(h).unwrap().data.iter().zip(&gb.get(h).unwrap().data) {
                assert!((u - v).abs() < 1e-10);
            }
            for (u, v) in ga.get(x).unwrap().data.iter().zip(&gb.get(x).unwrap().data) {
                assert!((u - v).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn fir_matches_signal_core() {
        // The tape primitive and the eager implementation share semantics.
        let mut rng = StdRng::seed_from_u64(4);
        let xt = rand_tensor(20, 2, &mut rng);
        let ht = rand_tensor(7, 2, &mut rng);
        let center = 3usize;

        let mut tape = Tape::new();
        let x = tape.leaf(xt.clone());
        let h = tape.leaf(ht.clone());
        let y = tape.circular_fir(x, h, center);

        let eager =
            crate::signal::fir_filter_centered(&xt.to_complex(), &ht.to_complex(), center).unwrap();
        let got = tape.value(y).to_complex();
        for (a, b) in got.iter().zip(&eager) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn power_normalize_hits_target_exactly() {
        let mut rng = StdRng::seed_from_u64(5);
        let mut tape = Tape::new();
        let x = tape.leaf(rand_tensor(64, 2, &mut rng));
        let y = tape.power_normalize(x, 2.5e-3).unwrap();
        let p = tape.value(y).data.iter().map(|v| v * v).sum::<f64>() / 64.0;
        assert!((p - 2.5e-3).abs() / 2.5e-3 < 1e-12);

        let mut tape = Tape::new();
        let z = tape.leaf(Tensor::zeros(8, 2));
        assert!(tape.power_normalize(z, 1.0).is_err());
    }

    #[test]
    fn replay_is_bit_identical() {
        let build = || {
            let mut rng = StdRng::seed_from_u64(6);
            let mut tape = Tape::new();
            let x = tape.leaf(rand_tensor(32, 2, &mut rng));
            let f = tape.fft(x);
            let m = tape.sq_mag(f);
            let loss = tape.mean(m);
            let grads = tape.backward(loss).unwrap();
            (tape.value(loss).item(), grads.get(x).unwrap().clone())
        };
        let (l1, g1) = build();
        let (l2, g2) = build();
        assert_eq!(l1.to_bits(), l2.to_bits());
        assert_eq!(g1.data.len(), g2.data.len());
        for (a, b) in g1.data.iter().zip(&g2.data) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
