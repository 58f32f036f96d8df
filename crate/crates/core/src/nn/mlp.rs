//! Fully connected tanh networks with scalar output.
//!
//! A network with layer sizes `[n0, n1, ..., nL]` is the composition
//! `Θ^{L-1} ∘ tanh ∘ ... ∘ tanh ∘ Θ^0` where each `Θ^l(a) = W^l a + b^l`.
//! The last affine layer has no activation.
//!
//! Parameters live in one flat vector, layer by layer, each layer stored as
//! its row-major weight matrix `(n_out, n_in)` followed by its bias.
//!
//! Besides plain evaluation the network propagates the triple
//! `(v, v', v'')` of value and first/second derivative with respect to a
//! scalar input. The batched [`Tape`] records everything the reverse pass
//! needs, so parameter gradients of losses built from any of the three
//! channels are exact.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Value, first and second derivative of a scalar function of a scalar input.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DerivTriple {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

impl DerivTriple {
    pub fn new(value: f64, d1: f64, d2: f64) -> Self {
        Self { value, d1, d2 }
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.d1.is_finite() && self.d2.is_finite()
    }
}

/// Which channels a batched pass carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum DerivOrder {
    /// Value only.
    #[default]
    Value,
    /// Value, first and second input derivative. Requires input width 1.
    Second,
}

impl DerivOrder {
    pub fn channels(self) -> usize {
        match self {
            DerivOrder::Value => 1,
            DerivOrder::Second => 3,
        }
    }
}

/// Parameters of one tanh MLP.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
    /// Offset of each layer's weight block in `params`.
    offsets: Vec<usize>,
}

fn layer_offsets(sizes: &[usize]) -> (Vec<usize>, usize) {
    let mut offsets = Vec::with_capacity(sizes.len() - 1);
    let mut at = 0;
    for pair in sizes.windows(2) {
        offsets.push(at);
        at += pair[0] * pair[1] + pair[1];
    }
    (offsets, at)
}

fn validate_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 {
        return Err(Error::Config(format!(
            "an MLP needs at least an input and an output layer, got {sizes:?}"
        )));
    }
    if sizes.contains(&0) {
        return Err(Error::Config(format!("layer sizes must be >= 1, got {sizes:?}")));
    }
    Ok(())
}

impl Mlp {
    /// All-zero network.
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        validate_sizes(sizes)?;
        let (offsets, count) = layer_offsets(sizes);
        Ok(Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; count],
            offsets,
        })
    }

    /// Random initialization: weights i.i.d. uniform on
    /// `[-init_scale/sqrt(fan_in), init_scale/sqrt(fan_in)]`, biases zero.
    pub fn init(sizes: &[usize], init_scale: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with_rng(sizes, init_scale, &mut rng)
    }

    pub fn init_with_rng<R: rand::Rng + ?Sized>(sizes: &[usize], init_scale: f64, rng: &mut R) -> Result<Self> {
        if !(init_scale > 0.0 && init_scale.is_finite()) {
            return Err(Error::Config(format!(
                "init_scale must be positive and finite, got {init_scale}"
            )));
        }
        let mut net = Self::zeros(sizes)?;
        for l in 0..net.num_layers() {
            let fan_in = net.sizes[l];
            let bound = init_scale / (fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            for w in net.weight_mut(l) {
                *w = dist.sample(rng);
            }
        }
        Ok(net)
    }

    /// Build from explicit per-layer weights (row-major) and biases.
    pub fn from_layers(sizes: &[usize], weights: &[Vec<f64>], biases: &[Vec<f64>]) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        let layers = net.num_layers();
        if weights.len() != layers || biases.len() != layers {
            return Err(Error::Config(format!(
                "expected {layers} weight matrices and bias vectors"
            )));
        }
        for l in 0..layers {
            let w = net.weight_mut(l);
            if weights[l].len() != w.len() {
                return Err(Error::Dimension {
                    expected: w.len(),
                    got: weights[l].len(),
                });
            }
            w.copy_from_slice(&weights[l]);
            let b = net.bias_mut(l);
            if biases[l].len() != b.len() {
                return Err(Error::Dimension {
                    expected: b.len(),
                    got: biases[l].len(),
                });
            }
            b.copy_from_slice(&biases[l]);
        }
        Ok(net)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Number of affine layers.
    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        self.sizes[self.sizes.len() - 1]
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn weight(&self, l: usize) -> &[f64] {
        let at = self.offsets[l];
        &self.params[at..at + self.sizes[l] * self.sizes[l + 1]]
    }

    pub fn weight_mut(&mut self, l: usize) -> &mut [f64] {
        let at = self.offsets[l];
        let len = self.sizes[l] * self.sizes[l + 1];
        &mut self.params[at..at + len]
    }

    pub fn bias(&self, l: usize) -> &[f64] {
        let at = self.offsets[l] + self.sizes[l] * self.sizes[l + 1];
        &self.params[at..at + self.sizes[l + 1]]
    }

    pub fn bias_mut(&mut self, l: usize) -> &mut [f64] {
        let at = self.offsets[l] + self.sizes[l] * self.sizes[l + 1];
        let len = self.sizes[l + 1];
        &mut self.params[at..at + len]
    }

    /// Offset range of the weight block of layer `l` inside the flat vector.
    pub fn weight_range(&self, l: usize) -> std::ops::Range<usize> {
        let at = self.offsets[l];
        at..at + self.sizes[l] * self.sizes[l + 1]
    }

    /// Squared Frobenius norm summed over all weight matrices (biases excluded).
    pub fn weight_sq_norm(&self) -> f64 {
        (0..self.num_layers())
            .map(|l| self.weight(l).iter().map(|w| w * w).sum::<f64>())
            .sum()
    }

    /// Adds `2 * beta * W` to the weight entries of `grad`.
    pub fn add_weight_reg_grad(&self, beta: f64, grad: &mut [f64]) {
        for l in 0..self.num_layers() {
            let range = self.weight_range(l);
            for (g, w) in grad[range.clone()].iter_mut().zip(&self.params[range]) {
                *g += 2.0 * beta * w;
            }
        }
    }

    /// Scalar output at a single point of width `input_dim`.
    pub fn forward(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.input_dim());
        let mut a = x.to_vec();
        let mut z = Vec::new();
        for l in 0..self.num_layers() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = self.weight(l);
            z.clear();
            z.extend_from_slice(self.bias(l));
            for i in 0..n_out {
                let row = &w[i * n_in..(i + 1) * n_in];
                z[i] += row.iter().zip(&a).map(|(w, a)| w * a).sum::<f64>();
            }
            if l + 1 < self.num_layers() {
                a.clear();
                a.extend(z.iter().map(|v| v.tanh()));
            }
        }
        z[0]
    }

    /// Value and first two input derivatives at a scalar input, by pushing
    /// `(v, v', v'')` through every layer.
    pub fn forward_with_input_derivs(&self, x: f64) -> Result<DerivTriple> {
        if self.input_dim() != 1 || self.output_dim() != 1 {
            return Err(Error::Dimension {
                expected: 1,
                got: self.input_dim().max(self.output_dim()),
            });
        }
        let mut a = vec![DerivTriple::new(x, 1.0, 0.0)];
        let mut z: Vec<DerivTriple> = Vec::new();
        for l in 0..self.num_layers() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = self.weight(l);
            let b = self.bias(l);
            z.clear();
            for i in 0..n_out {
                let row = &w[i * n_in..(i + 1) * n_in];
                let mut t = DerivTriple::new(b[i], 0.0, 0.0);
                for (wk, ak) in row.iter().zip(&a) {
                    t.value += wk * ak.value;
                    t.d1 += wk * ak.d1;
                    t.d2 += wk * ak.d2;
                }
                z.push(t);
            }
            if l + 1 < self.num_layers() {
                a.clear();
                a.extend(z.iter().map(|t| {
                    let s = t.value.tanh();
                    let s1 = 1.0 - s * s;
                    let s2 = -2.0 * s * s1;
                    DerivTriple::new(s, s1 * t.d1, s2 * t.d1 * t.d1 + s1 * t.d2)
                }));
            }
        }
        let out = z[0];
        if !out.is_finite() {
            return Err(Error::Numeric(format!("non-finite network output at x = {x}")));
        }
        Ok(out)
    }

    /// Batched forward pass. `inputs` has layout `[dim][batch]`. The outputs
    /// are left in `tape.output()` with layout `[channel][batch]`.
    pub fn forward_batch(&self, inputs: &[f64], batch: usize, order: DerivOrder, tape: &mut Tape) {
        let ch = order.channels();
        let dim = self.input_dim();
        assert_eq!(inputs.len(), dim * batch, "input buffer has wrong length");
        assert!(
            order == DerivOrder::Value || dim == 1,
            "input derivatives need a scalar input"
        );
        tape.reset(&self.sizes, batch, order);

        {
            let a0 = &mut tape.acts[0];
            a0[..dim * batch].copy_from_slice(inputs);
            if ch == 3 {
                a0[batch..2 * batch].fill(1.0);
                a0[2 * batch..3 * batch].fill(0.0);
            }
        }

        let layers = self.num_layers();
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = self.weight(l);
            let b = self.bias(l);
            let last = l + 1 == layers;
            let (head, tail) = tape.acts.split_at_mut(l + 1);
            let input = &head[l];
            let z: &mut [f64] = if last { &mut tape.out } else { &mut tail[0] };
            for c in 0..ch {
                let zc = &mut z[c * n_out * batch..(c + 1) * n_out * batch];
                let ac = &input[c * n_in * batch..(c + 1) * n_in * batch];
                affine(w, if c == 0 { Some(b) } else { None }, n_in, n_out, ac, zc, batch);
            }
            if !last {
                let size = n_out * batch;
                if ch == 3 {
                    let pre = &mut tape.pre[l + 1];
                    pre[..2 * size].copy_from_slice(&z[size..3 * size]);
                }
                for j in 0..size {
                    let s = z[j].tanh();
                    z[j] = s;
                    if ch == 3 {
                        let s1 = 1.0 - s * s;
                        let s2 = -2.0 * s * s1;
                        let z1 = z[size + j];
                        let z2 = z[2 * size + j];
                        z[size + j] = s1 * z1;
                        z[2 * size + j] = s2 * z1 * z1 + s1 * z2;
                    }
                }
            }
        }
    }

    /// Reverse pass for the batch recorded in `tape`. `out_adj` has layout
    /// `[channel][batch]` and holds dL/d(output channel); the parameter
    /// gradient is accumulated into `grad`.
    pub fn backward_batch(&self, tape: &mut Tape, out_adj: &[f64], grad: &mut [f64]) {
        let batch = tape.batch;
        let ch = tape.order.channels();
        assert_eq!(out_adj.len(), ch * batch);
        assert_eq!(grad.len(), self.param_count());

        let mut zbar = std::mem::take(&mut tape.zbar);
        let mut abar = std::mem::take(&mut tape.abar);
        zbar.clear();
        zbar.extend_from_slice(out_adj);

        for l in (0..self.num_layers()).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let a = &tape.acts[l];
            let w = self.weight(l);
            let at = self.offsets[l];
            {
                let (gw, gb) = grad[at..at + n_in * n_out + n_out].split_at_mut(n_in * n_out);
                for i in 0..n_out {
                    for k in 0..n_in {
                        let mut acc = 0.0;
                        for c in 0..ch {
                            let zr = &zbar[(c * n_out + i) * batch..(c * n_out + i + 1) * batch];
                            let ar = &a[(c * n_in + k) * batch..(c * n_in + k + 1) * batch];
                            acc += dot(zr, ar);
                        }
                        gw[i * n_in + k] += acc;
                    }
                    gb[i] += zbar[i * batch..(i + 1) * batch].iter().sum::<f64>();
                }
            }
            if l == 0 {
                break;
            }

            // Adjoint of this layer's input activations.
            abar.clear();
            abar.resize(ch * n_in * batch, 0.0);
            for c in 0..ch {
                for i in 0..n_out {
                    let zr = &zbar[(c * n_out + i) * batch..(c * n_out + i + 1) * batch];
                    for k in 0..n_in {
                        let wik = w[i * n_in + k];
                        let ar = &mut abar[(c * n_in + k) * batch..(c * n_in + k + 1) * batch];
                        axpy(ar, wik, zr);
                    }
                }
            }

            // Through tanh of hidden layer l.
            let size = n_in * batch;
            zbar.clear();
            zbar.resize(ch * size, 0.0);
            let s_all = &a[..size];
            if ch == 1 {
                for j in 0..size {
                    let s = s_all[j];
                    zbar[j] = abar[j] * (1.0 - s * s);
                }
            } else {
                let pre = &tape.pre[l];
                for j in 0..size {
                    let s = s_all[j];
                    let t1 = 1.0 - s * s;
                    let t2 = -2.0 * s * t1;
                    let t3 = -2.0 * t1 * t1 + 4.0 * s * s * t1;
                    let z1 = pre[j];
                    let z2 = pre[size + j];
                    let (av, a1, a2) = (abar[j], abar[size + j], abar[2 * size + j]);
                    zbar[j] = av * t1 + a1 * t2 * z1 + a2 * (t3 * z1 * z1 + t2 * z2);
                    zbar[size + j] = a1 * t1 + 2.0 * a2 * t2 * z1;
                    zbar[2 * size + j] = a2 * t1;
                }
            }
        }
        tape.zbar = zbar;
        tape.abar = abar;
    }
}

/// `out[i] = b[i] + sum_k w[i, k] * input[k]`, rows of length `batch`.
fn affine(w: &[f64], b: Option<&[f64]>, n_in: usize, n_out: usize, input: &[f64], out: &mut [f64], batch: usize) {
    for i in 0..n_out {
        let row = &mut out[i * batch..(i + 1) * batch];
        row.fill(b.map_or(0.0, |b| b[i]));
        for k in 0..n_in {
            axpy(row, w[i * n_in + k], &input[k * batch..(k + 1) * batch]);
        }
    }
}

#[inline]
fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators let the loop vectorize.
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for j in 0..chunks {
        for r in 0..4 {
            acc[r] += a[4 * j + r] * b[4 * j + r];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for j in 4 * chunks..a.len() {
        s += a[j] * b[j];
    }
    s
}

/// Activations recorded by [`Mlp::forward_batch`] for the reverse pass.
#[derive(Debug, Clone)]
pub struct Tape {
    batch: usize,
    order: DerivOrder,
    /// `acts[l]` is the input of affine layer `l`, layout `[channel][neuron][batch]`.
    acts: Vec<Vec<f64>>,
    /// Pre-activation derivative channels `(z', z'')` of hidden layers.
    pre: Vec<Vec<f64>>,
    out: Vec<f64>,
    zbar: Vec<f64>,
    abar: Vec<f64>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            batch: 0,
            order: DerivOrder::Value,
            acts: Vec::new(),
            pre: Vec::new(),
            out: Vec::new(),
            zbar: Vec::new(),
            abar: Vec::new(),
        }
    }

    fn reset(&mut self, sizes: &[usize], batch: usize, order: DerivOrder) {
        let ch = order.channels();
        self.batch = batch;
        self.order = order;
        let hidden = sizes.len() - 1;
        self.acts.resize_with(hidden, Vec::new);
        self.pre.resize_with(hidden, Vec::new);
        for l in 0..hidden {
            self.acts[l].resize(ch * sizes[l] * batch, 0.0);
            if ch == 3 {
                self.pre[l].resize(2 * sizes[l] * batch, 0.0);
            }
        }
        self.out.resize(ch * sizes[sizes.len() - 1] * batch, 0.0);
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn order(&self) -> DerivOrder {
        self.order
    }

    /// Output channels of the last forward pass, layout `[channel][batch]`.
    pub fn output(&self) -> &[f64] {
        &self.out
    }
}

/// Reverse-mode gradient of a loss built from the network's channels over a
/// batch of scalar inputs.
///
/// `loss` receives the per-point triples and returns the loss value together
/// with the per-point partials `dL/dv`, `dL/dv'`, `dL/dv''` packed as triples.
/// With [`DerivOrder::Value`] only the `value` fields are meaningful.
pub fn param_gradient<F>(net: &Mlp, xs: &[f64], order: DerivOrder, loss: F) -> Result<(f64, Vec<f64>)>
where
    F: FnOnce(&[DerivTriple]) -> (f64, Vec<DerivTriple>),
{
    let batch = xs.len() / net.input_dim();
    let mut tape = Tape::new();
    net.forward_batch(xs, batch, order, &mut tape);
    let out = tape.output();
    let triples: Vec<DerivTriple> = (0..batch)
        .map(|b| match order {
            DerivOrder::Value => DerivTriple::new(out[b], 0.0, 0.0),
            DerivOrder::Second => DerivTriple::new(out[b], out[batch + b], out[2 * batch + b]),
        })
        .collect();
    let (value, adj) = loss(&triples);
    if adj.len() != batch {
        return Err(Error::Dimension {
            expected: batch,
            got: adj.len(),
        });
    }
    let mut out_adj = vec![0.0; order.channels() * batch];
    for (b, t) in adj.iter().enumerate() {
        out_adj[b] = t.value;
        if order == DerivOrder::Second {
            out_adj[batch + b] = t.d1;
            out_adj[2 * batch + b] = t.d2;
        }
    }
    let mut grad = vec![0.0; net.param_count()];
    net.backward_batch(&mut tape, &out_adj, &mut grad);
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numeric(format!("non-finite gradient entry {i}")));
    }
    Ok((value, grad))
}

/// Sum of squared Frobenius norms of the weight matrices of all networks.
pub fn weight_reg<'a>(nets: impl IntoIterator<Item = &'a Mlp>) -> f64 {
    nets.into_iter().map(Mlp::weight_sq_norm).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_neuron() -> Mlp {
        Mlp::from_layers(&[1, 1, 1], &[vec![1.0], vec![1.0]], &[vec![0.0], vec![0.0]]).unwrap()
    }

    #[test]
    fn deep_subnet_parameter_count() {
        let net = Mlp::zeros(&[1, 40, 40, 40, 40, 1]).unwrap();
        assert_eq!(net.param_count(), 5041);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(Mlp::init(&[1], 1.0, 0).is_err());
        assert!(Mlp::init(&[1, 0, 1], 1.0, 0).is_err());
        assert!(Mlp::init(&[1, 4, 1], 0.0, 0).is_err());
        assert!(Mlp::init(&[1, 4, 1], f64::NAN, 0).is_err());
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = Mlp::init(&[1, 8, 8, 1], 0.5, 11).unwrap();
        let b = Mlp::init(&[1, 8, 8, 1], 0.5, 11).unwrap();
        assert_eq!(a.params(), b.params());
        for l in 0..a.num_layers() {
            let bound = 0.5 / (a.layer_sizes()[l] as f64).sqrt();
            assert!(a.weight(l).iter().all(|w| w.abs() <= bound));
            assert!(a.bias(l).iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn zero_network_is_zero() {
        let net = Mlp::zeros(&[1, 5, 5, 1]).unwrap();
        let t = net.forward_with_input_derivs(0.7).unwrap();
        assert_eq!(t, DerivTriple::new(0.0, 0.0, 0.0));
    }

    #[test]
    fn single_neuron_triples() {
        let net = one_neuron();
        assert_eq!(
            net.forward_with_input_derivs(0.0).unwrap(),
            DerivTriple::new(0.0, 1.0, 0.0)
        );
        let t = net.forward_with_input_derivs(0.5).unwrap();
        let s = 0.5f64.tanh();
        assert!((t.value - s).abs() < 1e-15);
        assert!((t.d1 - (1.0 - s * s)).abs() < 1e-15);
        assert!((t.d2 - (-2.0 * s * (1.0 - s * s))).abs() < 1e-15);
    }

    #[test]
    fn batched_matches_scalar() {
        let net = Mlp::init(&[1, 7, 6, 1], 1.3, 5).unwrap();
        let xs = [-1.2, -0.3, 0.0, 0.4, 2.5];
        let mut tape = Tape::new();
        net.forward_batch(&xs, xs.len(), DerivOrder::Second, &mut tape);
        let out = tape.output();
        for (b, &x) in xs.iter().enumerate() {
            let t = net.forward_with_input_derivs(x).unwrap();
            assert!((out[b] - t.value).abs() < 1e-14);
            assert!((out[5 + b] - t.d1).abs() < 1e-14);
            assert!((out[10 + b] - t.d2).abs() < 1e-14);
            assert!((net.forward(&[x]) - t.value).abs() < 1e-14);
        }
    }

    #[test]
    fn output_bias_gradient_is_twice_residual() {
        // T(x) = 1 through the output bias, y = 0.
        let mut net = Mlp::zeros(&[1, 3, 1]).unwrap();
        net.bias_mut(1)[0] = 1.0;
        let (loss, grad) = param_gradient(&net, &[0.3], DerivOrder::Value, |t| {
            let r = t[0].value - 0.0;
            (r * r, vec![DerivTriple::new(2.0 * r, 0.0, 0.0)])
        })
        .unwrap();
        assert_eq!(loss, 1.0);
        assert_eq!(*grad.last().unwrap(), 2.0);
    }

    #[test]
    fn weight_reg_examples() {
        let zero = Mlp::zeros(&[1, 2, 1]).unwrap();
        assert_eq!(weight_reg([&zero]), 0.0);
        let single = Mlp::from_layers(&[1, 1], &[vec![3.0]], &[vec![0.0]]).unwrap();
        assert_eq!(weight_reg([&single]), 9.0);
        let two = Mlp::from_layers(
            &[1, 2, 1],
            &[vec![1.0, 2.0], vec![2.0, 0.0]],
            &[vec![5.0, 5.0], vec![5.0]],
        )
        .unwrap();
        assert_eq!(weight_reg([&two]), 9.0);
    }
}
