//! The coupled phase-shifted ansatz.
//!
//! A coupled ansatz attaches two real tanh networks to every frequency `w_m`:
//!
//! - complex form: `T(x) = sum_m e^{i w_m.x} (P_m(x) + i Q_m(x))`
//! - real form:    `T(x) = sum_m A_m(x) cos(w_m.x) + B_m(x) sin(w_m.x)`
//!
//! Both are handled uniformly as `T(x) = sum_k phi_k(x) N_k(x)` where `N_k`
//! are the real networks and `phi_k` are known complex phase factors. In one
//! dimension the product rule gives `T'` and `T''` from the networks' input
//! derivatives, which is what the differential residual losses consume.

mod grid;
mod samples;
mod train;

pub use grid::FrequencyGrid;
pub use samples::SampleSet;
pub use train::{fit_loss, fit_plain, fit_train, train, train_with_observer, FitObjective, Objective};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{weight_reg, AdamState, DerivOrder, Mlp, Tape};
use crate::{Error, Result};

/// Complex value with first and second derivative.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ComplexTriple {
    pub value: Complex64,
    pub d1: Complex64,
    pub d2: Complex64,
}

impl ComplexTriple {
    pub const ZERO: Self = Self {
        value: Complex64::new(0.0, 0.0),
        d1: Complex64::new(0.0, 0.0),
        d2: Complex64::new(0.0, 0.0),
    };

    pub fn new(value: Complex64, d1: Complex64, d2: Complex64) -> Self {
        Self { value, d1, d2 }
    }

    pub fn conj(&self) -> Self {
        Self::new(self.value.conj(), self.d1.conj(), self.d2.conj())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnsatzForm {
    Complex,
    Real,
}

/// Frequencies plus two real subnetworks per frequency.
///
/// `nets[2m]` and `nets[2m + 1]` belong to frequency `m`: the real and
/// imaginary part of `T_m` in the complex form, `A_m` and `B_m` in the real
/// form.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledAnsatz {
    form: AnsatzForm,
    grid: FrequencyGrid,
    nets: Vec<Mlp>,
}

impl CoupledAnsatz {
    /// Randomly initialized ansatz; every subnet gets `layer_sizes`.
    pub fn new(
        form: AnsatzForm,
        grid: FrequencyGrid,
        layer_sizes: &[usize],
        init_scale: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nets = (0..2 * grid.len())
            .map(|_| Mlp::init_with_rng(layer_sizes, init_scale, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        Self::from_nets(form, grid, nets)
    }

    pub fn from_nets(form: AnsatzForm, grid: FrequencyGrid, nets: Vec<Mlp>) -> Result<Self> {
        if nets.len() != 2 * grid.len() {
            return Err(Error::Config(format!(
                "{} frequencies need {} subnets, got {}",
                grid.len(),
                2 * grid.len(),
                nets.len()
            )));
        }
        for net in &nets {
            if net.input_dim() != grid.dim() || net.output_dim() != 1 {
                return Err(Error::Config(format!(
                    "subnet {:?} does not map R^{} to R",
                    net.layer_sizes(),
                    grid.dim()
                )));
            }
        }
        for pair in nets.chunks(2) {
            if pair[0].layer_sizes() != pair[1].layer_sizes() {
                return Err(Error::Config("paired subnets must share layer sizes".into()));
            }
        }
        Ok(Self { form, grid, nets })
    }

    pub fn form(&self) -> AnsatzForm {
        self.form
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn num_freqs(&self) -> usize {
        self.grid.len()
    }

    pub fn nets(&self) -> &[Mlp] {
        &self.nets
    }

    pub fn nets_mut(&mut self) -> &mut [Mlp] {
        &mut self.nets
    }

    /// The two subnets of frequency `m`.
    pub fn pair(&self, m: usize) -> (&Mlp, &Mlp) {
        (&self.nets[2 * m], &self.nets[2 * m + 1])
    }

    pub fn pair_mut(&mut self, m: usize) -> (&mut Mlp, &mut Mlp) {
        let (a, b) = self.nets[2 * m..2 * m + 2].split_at_mut(1);
        (&mut a[0], &mut b[0])
    }

    pub fn param_count(&self) -> usize {
        self.nets.iter().map(Mlp::param_count).sum()
    }

    pub fn weight_reg(&self) -> f64 {
        weight_reg(&self.nets)
    }

    /// Complex conjugate of the represented function (complex form only).
    pub fn conjugated(&self) -> Result<Self> {
        if self.form != AnsatzForm::Complex {
            return Ok(self.clone());
        }
        let freqs: Vec<f64> = self.grid.as_flat().iter().map(|w| -w).collect();
        let grid = FrequencyGrid::from_vectors(self.dim(), &freqs)?;
        // conj(e^{iwx}(P + iQ)) = e^{-iwx}(P - iQ)
        let mut pairs: Vec<(Vec<f64>, Mlp, Mlp)> = (0..self.num_freqs())
            .map(|m| {
                let (p, q) = self.pair(m);
                let mut q = q.clone();
                let last = q.num_layers() - 1;
                q.weight_mut(last).iter_mut().for_each(|w| *w = -*w);
                q.bias_mut(last).iter_mut().for_each(|b| *b = -*b);
                (self.grid.get(m).iter().map(|w| -w).collect(), p.clone(), q)
            })
            .collect();
        // Keep nets aligned with the (possibly re-sorted) grid.
        let mut nets = Vec::with_capacity(self.nets.len());
        for m in 0..grid.len() {
            let at = pairs.iter().position(|(w, _, _)| w.as_slice() == grid.get(m)).unwrap();
            let (_, p, q) = pairs.swap_remove(at);
            nets.push(p);
            nets.push(q);
        }
        Self::from_nets(AnsatzForm::Complex, grid, nets)
    }

    /// True when the phase factor of net `k` vanishes identically
    /// (the sine net of a zero frequency in the real form).
    fn net_is_silent(&self, k: usize) -> bool {
        self.form == AnsatzForm::Real && k % 2 == 1 && self.grid.get(k / 2).iter().all(|&w| w == 0.0)
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got,
            });
        }
        Ok(())
    }

    /// Phase factors `(phi, phi', phi'')` of the two nets of frequency `m`
    /// at a point, derivatives taken along a scalar input.
    fn phases(&self, m: usize, x: &[f64]) -> [[Complex64; 3]; 2] {
        let w = self.grid.get(m);
        let theta: f64 = w.iter().zip(x).map(|(w, x)| w * x).sum();
        let (s, c) = theta.sin_cos();
        let w0 = w[0];
        let i = Complex64::i();
        match self.form {
            AnsatzForm::Complex => {
                let e = Complex64::new(c, s);
                let first = [e, i * w0 * e, -w0 * w0 * e];
                [first, first.map(|z| i * z)]
            }
            AnsatzForm::Real => [
                [c.into(), (-w0 * s).into(), (-w0 * w0 * c).into()],
                [s.into(), (w0 * c).into(), (-w0 * w0 * s).into()],
            ],
        }
    }

    /// `T(x)` at one point.
    pub fn eval(&self, x: &[f64]) -> Result<Complex64> {
        self.check_dim(x.len())?;
        let mut t = Complex64::new(0.0, 0.0);
        for m in 0..self.num_freqs() {
            let ph = self.phases(m, x);
            for j in 0..2 {
                if !self.net_is_silent(2 * m + j) {
                    t += ph[j][0] * self.nets[2 * m + j].forward(x);
                }
            }
        }
        Ok(t)
    }

    /// `(T, T', T'')` at a scalar point.
    pub fn eval_with_derivs(&self, x: f64) -> Result<ComplexTriple> {
        self.check_dim(1)?;
        let mut t = ComplexTriple::ZERO;
        for m in 0..self.num_freqs() {
            let ph = self.phases(m, &[x]);
            for (j, [p0, p1, p2]) in ph.into_iter().enumerate() {
                if self.net_is_silent(2 * m + j) {
                    continue;
                }
                let n = self.nets[2 * m + j].forward_with_input_derivs(x)?;
                t.value += p0 * n.value;
                t.d1 += p1 * n.value + p0 * n.d1;
                t.d2 += p2 * n.value + 2.0 * p1 * n.d1 + p0 * n.d2;
            }
        }
        Ok(t)
    }

    /// Batched `T` at many points laid out `[point][dim]`.
    pub fn eval_many(&self, points: &[f64]) -> Result<Vec<Complex64>> {
        let dim = self.dim();
        if !points.len().is_multiple_of(dim) {
            return Err(Error::Dimension {
                expected: dim,
                got: points.len() % dim,
            });
        }
        let mut pass = AnsatzPass::default();
        let mut out = Vec::with_capacity(points.len() / dim);
        for chunk in points.chunks(1024 * dim) {
            self.forward_pass(chunk, DerivOrder::Value, &mut pass);
            out.extend(pass.outputs().iter().map(|t| t.value));
        }
        Ok(out)
    }

    /// Batched `(T, T', T'')` at scalar points.
    pub fn eval_many_with_derivs(&self, xs: &[f64]) -> Result<Vec<ComplexTriple>> {
        self.check_dim(1)?;
        let mut pass = AnsatzPass::default();
        let mut out = Vec::with_capacity(xs.len());
        for chunk in xs.chunks(1024) {
            self.forward_pass(chunk, DerivOrder::Second, &mut pass);
            out.extend_from_slice(pass.outputs());
        }
        Ok(out)
    }

    /// Batched forward pass recording what [`CoupledAnsatz::backward_pass`] needs.
    /// `points` is laid out `[point][dim]`.
    pub fn forward_pass(&self, points: &[f64], order: DerivOrder, pass: &mut AnsatzPass) {
        let dim = self.dim();
        let batch = points.len() / dim;
        assert!(order == DerivOrder::Value || dim == 1);
        let ch = order.channels();
        pass.order = order;
        pass.batch = batch;
        pass.tapes.resize_with(self.nets.len(), Tape::new);
        pass.inputs.resize(dim * batch, 0.0);
        for b in 0..batch {
            for d in 0..dim {
                pass.inputs[d * batch + b] = points[b * dim + d];
            }
        }
        pass.phases.resize(self.nets.len() * ch * batch, Complex64::default());
        for m in 0..self.num_freqs() {
            for b in 0..batch {
                let ph = self.phases(m, &points[b * dim..(b + 1) * dim]);
                for (j, p) in ph.iter().enumerate() {
                    let base = (2 * m + j) * ch * batch;
                    for c in 0..ch {
                        pass.phases[base + c * batch + b] = p[c];
                    }
                }
            }
        }
        pass.outputs.clear();
        pass.outputs.resize(batch, ComplexTriple::ZERO);
        for (k, net) in self.nets.iter().enumerate() {
            if self.net_is_silent(k) {
                continue;
            }
            let tape = &mut pass.tapes[k];
            net.forward_batch(&pass.inputs, batch, order, tape);
            let out = tape.output();
            let ph = &pass.phases[k * ch * batch..(k + 1) * ch * batch];
            for b in 0..batch {
                let t = &mut pass.outputs[b];
                let n0 = out[b];
                t.value += ph[b] * n0;
                if ch == 3 {
                    let (n1, n2) = (out[batch + b], out[2 * batch + b]);
                    let (p0, p1, p2) = (ph[b], ph[batch + b], ph[2 * batch + b]);
                    t.d1 += p1 * n0 + p0 * n1;
                    t.d2 += p2 * n0 + 2.0 * p1 * n1 + p0 * n2;
                }
            }
        }
    }

    /// Reverse pass. `adj[b]` holds complex cotangents `g` of the channels at
    /// point `b`, meaning `dL = Re(sum_c g_c dT_c)`. The gradient of every
    /// subnet is accumulated into `grad` (nets concatenated in order).
    pub fn backward_pass(&self, pass: &mut AnsatzPass, adj: &[ComplexTriple], grad: &mut [f64]) {
        let batch = pass.batch;
        let ch = pass.order.channels();
        assert_eq!(adj.len(), batch);
        assert_eq!(grad.len(), self.param_count());
        let mut out_adj = std::mem::take(&mut pass.scratch);
        let mut offset = 0;
        for (k, net) in self.nets.iter().enumerate() {
            let len = net.param_count();
            if self.net_is_silent(k) {
                offset += len;
                continue;
            }
            out_adj.clear();
            out_adj.resize(ch * batch, 0.0);
            let ph = &pass.phases[k * ch * batch..(k + 1) * ch * batch];
            for b in 0..batch {
                let g = adj[b];
                if ch == 1 {
                    out_adj[b] = (g.value * ph[b]).re;
                } else {
                    let (p0, p1, p2) = (ph[b], ph[batch + b], ph[2 * batch + b]);
                    out_adj[b] = (g.value * p0 + g.d1 * p1 + g.d2 * p2).re;
                    out_adj[batch + b] = (g.d1 * p0 + 2.0 * g.d2 * p1).re;
                    out_adj[2 * batch + b] = (g.d2 * p0).re;
                }
            }
            net.backward_batch(&mut pass.tapes[k], &out_adj, &mut grad[offset..offset + len]);
            offset += len;
        }
        pass.scratch = out_adj;
    }

    /// Adds the weight-regularization gradient `2 beta W` for every subnet.
    pub fn add_weight_reg_grad(&self, beta: f64, grad: &mut [f64]) {
        let mut offset = 0;
        for net in &self.nets {
            let len = net.param_count();
            net.add_weight_reg_grad(beta, &mut grad[offset..offset + len]);
            offset += len;
        }
    }

    /// One Adam update over all subnets.
    pub fn adam_step(&mut self, adam: &mut AdamState, grad: &[f64]) {
        adam.begin_step();
        let mut offset = 0;
        for net in &mut self.nets {
            let len = net.param_count();
            adam.apply(offset, net.params_mut(), &grad[offset..offset + len]);
            offset += len;
        }
    }
}

/// Buffers for one batched forward/backward pass through a coupled ansatz.
#[derive(Debug, Default)]
pub struct AnsatzPass {
    order: DerivOrder,
    batch: usize,
    inputs: Vec<f64>,
    tapes: Vec<Tape>,
    phases: Vec<Complex64>,
    outputs: Vec<ComplexTriple>,
    scratch: Vec<f64>,
}

impl AnsatzPass {
    pub fn outputs(&self) -> &[ComplexTriple] {
        &self.outputs
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}
