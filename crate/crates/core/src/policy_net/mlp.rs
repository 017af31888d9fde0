//! Fully connected network with tanh hidden layers and a linear output.
//!
//! Parameters live in one flat vector. Layer `l` with fan-in `i` and fan-out
//! `o` stores its weights input-major (`w[j * o + k]` connects input `j` to
//! output `k`) followed by `o` biases. Input-major storage turns both the
//! forward pass and the weight-gradient update into axpy loops.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    params: Vec<T>,
}

/// Activations recorded by [`Mlp::forward_cached`]: `acts[0]` is the input,
/// `acts[l + 1]` the output of layer `l`.
#[derive(Debug, Clone, Default)]
pub struct MlpCache<T> {
    acts: Vec<Vec<T>>,
}

impl<T> MlpCache<T> {
    pub fn output(&self) -> &[T] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

fn layout(sizes: &[usize]) -> (Vec<usize>, usize) {
    let mut offsets = Vec::with_capacity(sizes.len());
    let mut off = 0;
    for w in sizes.windows(2) {
        offsets.push(off);
        off += w[0] * w[1] + w[1];
    }
    offsets.push(off);
    (offsets, off)
}

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        s += *x * *y;
    }
    s
}

#[inline]
fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}

impl<T: Scalar> Mlp<T> {
    /// All-zero network with the given layer widths (input first).
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output widths");
        let (offsets, total) = layout(sizes);
        Mlp {
            sizes: sizes.to_vec(),
            offsets,
            params: vec![T::zero(); total],
        }
    }

    pub fn from_params(sizes: &[usize], params: Vec<T>) -> Result<Self> {
        let mut m = Self::zeros(sizes);
        if params.len() != m.params.len() {
            return Err(Error::DimensionMismatch {
                what: "mlp parameters",
                expected: m.params.len(),
                got: params.len(),
            });
        }
        m.params = params;
        Ok(m)
    }

    /// Orthogonal weights scaled by `hidden_gain` on hidden layers and
    /// `output_gain` on the last layer; zero biases.
    pub fn orthogonal(sizes: &[usize], hidden_gain: f64, output_gain: f64, rng: &mut Rng) -> Self {
        let mut m = Self::zeros(sizes);
        let layers = m.num_layers();
        for l in 0..layers {
            let (fan_in, fan_out) = (m.sizes[l], m.sizes[l + 1]);
            let gain = if l + 1 == layers { output_gain } else { hidden_gain };
            let q = orthogonal_matrix(fan_in, fan_out, rng);
            let off = m.offsets[l];
            for (p, v) in m.params[off..off + fan_in * fan_out].iter_mut().zip(q) {
                *p = T::lit(gain * v);
            }
        }
        m
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        self.sizes[self.sizes.len() - 1]
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.sizes)
    }

    fn layer(&self, l: usize) -> (&[T], &[T]) {
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        let off = self.offsets[l];
        self.params[off..off + i * o + o].split_at(i * o)
    }

    fn layer_mut(&mut self, l: usize) -> (&mut [T], &mut [T]) {
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        let off = self.offsets[l];
        self.params[off..off + i * o + o].split_at_mut(i * o)
    }

    fn check_input(&self, x: &[T]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "mlp input",
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn apply_layer(&self, l: usize, input: &[T], out: &mut Vec<T>) {
        let (w, b) = self.layer(l);
        let o = self.sizes[l + 1];
        out.clear();
        out.extend_from_slice(b);
        for (j, &xj) in input.iter().enumerate() {
            axpy(xj, &w[j * o..(j + 1) * o], out);
        }
        if l + 1 < self.num_layers() {
            for v in out.iter_mut() {
                *v = v.tanh();
            }
        }
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for l in 0..self.num_layers() {
            self.apply_layer(l, &cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Forward pass that keeps every activation for [`Mlp::backward`].
    pub fn forward_cached(&self, x: &[T], cache: &mut MlpCache<T>) -> Result<()> {
        self.check_input(x)?;
        let layers = self.num_layers();
        cache.acts.resize_with(layers + 1, Vec::new);
        cache.acts[0].clear();
        cache.acts[0].extend_from_slice(x);
        for l in 0..layers {
            let (head, tail) = cache.acts.split_at_mut(l + 1);
            self.apply_layer(l, &head[l], &mut tail[0]);
        }
        Ok(())
    }

    /// Accumulates parameter gradients into `grads` given `d_out`, the
    /// gradient of the loss with respect to the network output.
    pub fn backward(&self, cache: &MlpCache<T>, d_out: &[T], grads: &mut Mlp<T>, scratch: &mut Vec<T>) {
        debug_assert_eq!(d_out.len(), self.output_dim());
        let mut delta = d_out.to_vec();
        for l in (0..self.num_layers()).rev() {
            let o = self.sizes[l + 1];
            if l + 1 < self.num_layers() {
                for (d, a) in delta.iter_mut().zip(&cache.acts[l + 1]) {
                    *d *= T::one() - *a * *a;
                }
            }
            let input = &cache.acts[l];
            {
                let (gw, gb) = grads.layer_mut(l);
                for (g, d) in gb.iter_mut().zip(&delta) {
                    *g += *d;
                }
                for (j, &xj) in input.iter().enumerate() {
                    axpy(xj, &delta, &mut gw[j * o..(j + 1) * o]);
                }
            }
            if l > 0 {
                let (w, _) = self.layer(l);
                scratch.clear();
                scratch.extend((0..input.len()).map(|j| dot(&w[j * o..(j + 1) * o], &delta)));
                std::mem::swap(&mut delta, scratch);
            }
        }
    }
}

/// `rows x cols` matrix (row-major) with orthonormal rows or columns,
/// whichever is fewer, from Gram-Schmidt on a Gaussian draw.
fn orthogonal_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Vec<f64> {
    let (n, len) = if rows <= cols { (rows, cols) } else { (cols, rows) };
    let mut vecs: Vec<Vec<f64>> = Vec::with_capacity(n);
    while vecs.len() < n {
        let mut v: Vec<f64> = (0..len).map(|_| StandardNormal.sample(rng)).collect();
        for u in &vecs {
            let p: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            for (vi, ui) in v.iter_mut().zip(u) {
                *vi -= p * ui;
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm < 1e-10 {
            continue;
        }
        v.iter_mut().for_each(|a| *a /= norm);
        vecs.push(v);
    }
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[r * cols + c] = if rows <= cols { vecs[r][c] } else { vecs[c][r] };
        }
    }
    out
}
