use crate::{Error, Result};

pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPS: f64 = 1e-8;

/// Adam moment estimates for one flat parameter vector.
///
/// The vector may be spread over several networks: call [`AdamState::begin_step`]
/// once per update and then [`AdamState::apply`] on each contiguous segment.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    bias1: f64,
    bias2: f64,
}

impl AdamState {
    pub fn new(len: usize, lr: f64) -> Result<Self> {
        Self::with_hyper(len, lr, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPS)
    }

    pub fn with_hyper(len: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
        }
        if !(0.0 < beta1 && beta1 < 1.0 && 0.0 < beta2 && beta2 < 1.0) {
            return Err(Error::Config(format!(
                "Adam betas must lie in (0, 1), got ({beta1}, {beta2})"
            )));
        }
        if !(eps > 0.0) {
            return Err(Error::Config(format!("Adam eps must be positive, got {eps}")));
        }
        Ok(Self {
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
            lr,
            beta1,
            beta2,
            eps,
            bias1: 1.0,
            bias2: 1.0,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    /// Advance the step counter and the bias corrections.
    pub fn begin_step(&mut self) {
        self.step += 1;
        self.bias1 = 1.0 - self.beta1.powi(self.step as i32);
        self.bias2 = 1.0 - self.beta2.powi(self.step as i32);
    }

    /// Update the segment of the parameter vector starting at `offset`.
    pub fn apply(&mut self, offset: usize, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), grad.len());
        let m = &mut self.m[offset..offset + grad.len()];
        let v = &mut self.v[offset..offset + grad.len()];
        let (b1, b2) = (self.beta1, self.beta2);
        let step_size = self.lr / self.bias1;
        let inv_sqrt_bias2 = 1.0 / self.bias2.sqrt();
        for j in 0..grad.len() {
            let g = grad[j];
            m[j] = b1 * m[j] + (1.0 - b1) * g;
            v[j] = b2 * v[j] + (1.0 - b2) * g * g;
            params[j] -= step_size * m[j] / (v[j].sqrt() * inv_sqrt_bias2 + self.eps);
        }
    }

    /// One full update of a single parameter vector.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != self.len() || grad.len() != self.len() {
            return Err(Error::Dimension {
                expected: self.len(),
                got: params.len().min(grad.len()),
            });
        }
        self.begin_step();
        self.apply(0, params, grad);
        Ok(())
    }
}
