use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{AnsatzPass, ComplexTriple, CoupledAnsatz, SampleSet};
use crate::nn::{AdamState, DerivOrder, Mlp, Tape, TrainConfig};
use crate::{Error, Result};

/// A least-squares objective that can be minimized over row mini-batches.
///
/// A training step asks for the evaluation points of a batch of rows, runs
/// the ansatz there, and hands the outputs back to compute the loss and the
/// complex cotangents (`dL = Re sum_c g_c dT_c`).
pub trait Objective {
    /// Number of rows (samples, collocation points, residual rows).
    fn rows(&self) -> usize;

    /// Channels the loss needs.
    fn order(&self) -> DerivOrder;

    /// Appends the points at which the ansatz is evaluated for `rows`
    /// (layout `[point][dim]`).
    fn points(&self, rows: &[usize], out: &mut Vec<f64>);

    /// Loss over `rows` given the ansatz at [`Objective::points`]. `adj` is
    /// zeroed on entry and has one entry per evaluation point.
    fn loss_and_adjoints(&self, rows: &[usize], values: &[ComplexTriple], adj: &mut [ComplexTriple]) -> f64;
}

/// Mini-batch Adam descent on `objective + beta_reg * weight_reg`.
///
/// Rows are reshuffled every epoch; the last short batch is kept. The
/// returned history holds, per epoch, the summed batch losses divided by the
/// row count.
pub fn train(ansatz: &mut CoupledAnsatz, objective: &dyn Objective, cfg: &TrainConfig) -> Result<Vec<f64>> {
    train_with_observer(ansatz, objective, cfg, &mut |_, _| {})
}

/// [`train`] with a callback receiving `(epoch, epoch_loss)` after every epoch.
pub fn train_with_observer(
    ansatz: &mut CoupledAnsatz,
    objective: &dyn Objective,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(usize, f64),
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let rows = objective.rows();
    if rows == 0 {
        return Err(Error::Data("objective has no rows".into()));
    }
    let order = objective.order();
    let mut adam = AdamState::new(ansatz.param_count(), cfg.lr)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5DEE_CE66_D1CE_4E5B);
    let mut perm: Vec<usize> = (0..rows).collect();
    let mut pass = AnsatzPass::default();
    let mut points = Vec::new();
    let mut adj = Vec::new();
    let mut grad = vec![0.0; ansatz.param_count()];
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        perm.shuffle(&mut rng);
        adam.lr = cfg.lr_at(epoch);
        let mut total = 0.0;
        for batch in perm.chunks(cfg.batch_size) {
            points.clear();
            objective.points(batch, &mut points);
            ansatz.forward_pass(&points, order, &mut pass);
            adj.clear();
            adj.resize(pass.batch(), ComplexTriple::ZERO);
            let mut loss = objective.loss_and_adjoints(batch, pass.outputs(), &mut adj);
            grad.fill(0.0);
            ansatz.backward_pass(&mut pass, &adj, &mut grad);
            if cfg.beta_reg > 0.0 {
                loss += cfg.beta_reg * ansatz.weight_reg();
                ansatz.add_weight_reg_grad(cfg.beta_reg, &mut grad);
            }
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Training {
                    epoch,
                    reason: format!("non-finite loss {loss}"),
                    history,
                });
            }
            total += loss;
            ansatz.adam_step(&mut adam, &grad);
        }
        let mean = total / rows as f64;
        history.push(mean);
        observer(epoch, mean);
    }
    Ok(history)
}

/// Squared-modulus fit to samples.
pub struct FitObjective<'a> {
    data: &'a SampleSet,
}

impl<'a> FitObjective<'a> {
    pub fn new(data: &'a SampleSet) -> Self {
        Self { data }
    }
}

impl Objective for FitObjective<'_> {
    fn rows(&self) -> usize {
        self.data.len()
    }

    fn order(&self) -> DerivOrder {
        DerivOrder::Value
    }

    fn points(&self, rows: &[usize], out: &mut Vec<f64>) {
        for &r in rows {
            out.extend_from_slice(self.data.x(r));
        }
    }

    fn loss_and_adjoints(&self, rows: &[usize], values: &[ComplexTriple], adj: &mut [ComplexTriple]) -> f64 {
        let mut loss = 0.0;
        for (b, &r) in rows.iter().enumerate() {
            let res = values[b].value - self.data.y(r);
            loss += res.norm_sqr();
            adj[b].value = 2.0 * res.conj();
        }
        loss
    }
}

/// `sum_i |y_i - T(x_i)|^2 + beta_reg * weight_reg`.
pub fn fit_loss(ansatz: &CoupledAnsatz, batch: &SampleSet, beta_reg: f64) -> Result<f64> {
    if batch.dim() != ansatz.dim() {
        return Err(Error::Dimension {
            expected: ansatz.dim(),
            got: batch.dim(),
        });
    }
    let values = ansatz.eval_many(batch.xs())?;
    let data: f64 = values
        .iter()
        .zip(batch.ys())
        .map(|(t, y): (&Complex64, _)| (y - t).norm_sqr())
        .sum();
    Ok(data + beta_reg * ansatz.weight_reg())
}

/// Fits the ansatz to the samples; returns the per-epoch loss history.
pub fn fit_train(ansatz: &mut CoupledAnsatz, data: &SampleSet, cfg: &TrainConfig) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::Data("no training samples".into()));
    }
    if data.dim() != ansatz.dim() {
        return Err(Error::Dimension {
            expected: ansatz.dim(),
            got: data.dim(),
        });
    }
    train(ansatz, &FitObjective::new(data), cfg)
}

/// Fits a single real network to the real part of the samples with the same
/// shuffling, batching and loss as [`fit_train`]. The imaginary parts of the
/// labels enter the loss as a constant.
pub fn fit_plain(net: &mut Mlp, data: &SampleSet, cfg: &TrainConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Data("no training samples".into()));
    }
    if net.input_dim() != data.dim() || net.output_dim() != 1 {
        return Err(Error::Dimension {
            expected: net.input_dim(),
            got: data.dim(),
        });
    }
    let dim = data.dim();
    let rows = data.len();
    let mut adam = AdamState::new(net.param_count(), cfg.lr)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5DEE_CE66_D1CE_4E5B);
    let mut perm: Vec<usize> = (0..rows).collect();
    let mut tape = Tape::new();
    let mut inputs = Vec::new();
    let mut adj = Vec::new();
    let mut grad = vec![0.0; net.param_count()];
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        perm.shuffle(&mut rng);
        adam.lr = cfg.lr_at(epoch);
        let mut total = 0.0;
        for batch in perm.chunks(cfg.batch_size) {
            let b = batch.len();
            inputs.clear();
            inputs.resize(dim * b, 0.0);
            for (k, &r) in batch.iter().enumerate() {
                for (d, &x) in data.x(r).iter().enumerate() {
                    inputs[d * b + k] = x;
                }
            }
            net.forward_batch(&inputs, b, DerivOrder::Value, &mut tape);
            adj.clear();
            let mut loss = 0.0;
            for (k, &r) in batch.iter().enumerate() {
                let y = data.y(r);
                let res = tape.output()[k] - y.re;
                loss += res * res + y.im * y.im;
                adj.push(2.0 * res);
            }
            grad.fill(0.0);
            net.backward_batch(&mut tape, &adj, &mut grad);
            if cfg.beta_reg > 0.0 {
                loss += cfg.beta_reg * net.weight_sq_norm();
                net.add_weight_reg_grad(cfg.beta_reg, &mut grad);
            }
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Training {
                    epoch,
                    reason: format!("non-finite loss {loss}"),
                    history,
                });
            }
            total += loss;
            adam.step(net.params_mut(), &grad)?;
        }
        history.push(total / rows as f64);
    }
    Ok(history)
}
