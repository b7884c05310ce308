//! Optimisation: Adam, learning-rate schedules, losses and training loops.
//!
//! The supervised experiments all share the same skeleton — shuffle,
//! minibatch, forward, loss, backward, Adam — which lives in [`train`].
//! Protocols that need finer control (sequential tasks, spaced
//! repetition, the RL algorithms) drive a [`Trainer`] or a bare [`Adam`]
//! step by step instead; optimizer state deliberately persists across
//! whatever boundaries the caller chooses, since several protocols rely
//! on continuous moments.
//!
//! [`model_grad_check`] closes the loop on correctness: it compares a
//! model's analytic gradients (whatever mix of layers it contains)
//! against central finite differences of the true loss.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autodiff::{grad_rel_err, GradCheckFailure, GradCheckReport, Tape};
use crate::error::{Error, Result};
use crate::nn::Model;
use crate::rng::RngStream;
use crate::tensor::Tensor;

/// Loss threshold beyond which training aborts as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// Adam optimizer state over a fixed parameter list.
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    /// Canonical defaults: β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
    pub fn new(lr: f64, params: &[&Tensor]) -> Result<Self> {
        let m = params
            .iter()
            .map(|p| Tensor::zeros(p.shape()))
            .collect::<Result<Vec<_>>>()?;
        let v = m.clone();
        Ok(Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m,
            v,
        })
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    /// Number of updates applied so far (τ).
    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one Adam update. `names` provides parameter paths for
    /// error diagnostics; `iteration` is the caller's loop counter.
    pub fn step(
        &mut self,
        mut params: Vec<&mut Tensor>,
        grads: &[Tensor],
        names: &[String],
        iteration: usize,
    ) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(Error::InvalidConfig {
                detail: format!(
                    "adam_step: {} params, {} grads, state for {}",
                    params.len(),
                    grads.len(),
                    self.m.len()
                ),
            });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(Error::ShapeMismatch {
                    op: "adam_step",
                    left: p.shape().to_vec(),
                    right: g.shape().to_vec(),
                });
            }
            if !g.data().iter().all(|v| v.is_finite()) {
                return Err(Error::NonFiniteGrad {
                    param: names.get(i).cloned().unwrap_or_else(|| format!("param[{i}]")),
                    iteration,
                });
            }
        }

        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let pd = p.data_mut();
            let md = m.data_mut();
            let vd = v.data_mut();
            for ((pv, gv), (mv, vv)) in
                pd.iter_mut().zip(g.data()).zip(md.iter_mut().zip(vd.iter_mut()))
            {
                *mv = self.beta1 * *mv + (1.0 - self.beta1) * gv;
                *vv = self.beta2 * *vv + (1.0 - self.beta2) * gv * gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Learning-rate schedules used by the experiments.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    /// `base · decay^epoch`.
    ExpDecay { base: f64, decay: f64 },
    /// Constant rate.
    Constant { lr: f64 },
}

impl LrSchedule {
    /// Supervised default: `0.001 · 0.995^epoch`.
    pub fn supervised_default() -> Self {
        LrSchedule::ExpDecay {
            base: 1e-3,
            decay: 0.995,
        }
    }

    /// RL default: constant `5e-4`.
    pub fn rl_default() -> Self {
        LrSchedule::Constant { lr: 5e-4 }
    }

    pub fn lr(&self, epoch: usize) -> f64 {
        match *self {
            LrSchedule::ExpDecay { base, decay } => base * decay.powi(epoch as i32),
            LrSchedule::Constant { lr } => lr,
        }
    }
}

/// Builds the MSE loss `mean((pred − target)²)` on the tape.
pub fn mse_loss(tape: &mut Tape, pred: crate::autodiff::Var, target: &Tensor) -> Result<crate::autodiff::Var> {
    if tape.value(pred).shape() != target.shape() {
        return Err(Error::ShapeMismatch {
            op: "mse_loss",
            left: tape.value(pred).shape().to_vec(),
            right: target.shape().to_vec(),
        });
    }
    let t = tape.constant(target.clone());
    let diff = tape.sub(pred, t)?;
    let sq = tape.square(diff)?;
    tape.mean(sq)
}

/// Builds the NLL loss `−mean_i log_probs[i, label_i]` on the tape via a
/// constant selection mask.
pub fn nll_loss(
    tape: &mut Tape,
    log_probs: crate::autodiff::Var,
    labels: &[usize],
) -> Result<crate::autodiff::Var> {
    let (batch, classes) = tape.value(log_probs).dims2("nll_loss")?;
    if labels.len() != batch {
        return Err(Error::ShapeMismatch {
            op: "nll_loss",
            left: vec![batch, classes],
            right: vec![labels.len()],
        });
    }
    let mut mask = vec![0.0; batch * classes];
    for (i, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        mask[i * classes + label] = -1.0 / batch as f64;
    }
    let mask = tape.constant(Tensor::new(vec![batch, classes], mask)?);
    let picked = tape.mul(log_probs, mask)?;
    tape.sum(picked)
}

/// Plain-value NLL (no tape), for evaluation.
pub fn nll_value(log_probs: &Tensor, labels: &[usize]) -> Result<f64> {
    let (batch, classes) = log_probs.dims2("nll_value")?;
    if labels.len() != batch {
        return Err(Error::ShapeMismatch {
            op: "nll_value",
            left: vec![batch, classes],
            right: vec![labels.len()],
        });
    }
    let mut total = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        total -= log_probs.at2(i, label);
    }
    Ok(total / batch as f64)
}

/// Plain-value MSE (no tape), for evaluation.
pub fn mse_value(pred: &Tensor, target: &Tensor) -> Result<f64> {
    let diff = pred.sub(target)?;
    Ok(diff.square()?.mean())
}

/// Supervised dataset views.
#[derive(Clone, Copy)]
pub enum Dataset<'a> {
    Regression {
        inputs: &'a Tensor,
        targets: &'a Tensor,
    },
    Classification {
        inputs: &'a Tensor,
        labels: &'a [usize],
    },
}

/// Owned minibatch targets.
#[derive(Clone, Debug)]
pub enum BatchTarget {
    Values(Tensor),
    Labels(Vec<usize>),
}

impl<'a> Dataset<'a> {
    pub fn len(&self) -> usize {
        match self {
            Dataset::Regression { inputs, .. } | Dataset::Classification { inputs, .. } => {
                inputs.shape()[0]
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn inputs(&self) -> &'a Tensor {
        match self {
            Dataset::Regression { inputs, .. } | Dataset::Classification { inputs, .. } => inputs,
        }
    }

    /// Gathers a minibatch by row indices.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, BatchTarget)> {
        match self {
            Dataset::Regression { inputs, targets } => Ok((
                inputs.gather_rows(indices)?,
                BatchTarget::Values(targets.gather_rows(indices)?),
            )),
            Dataset::Classification { inputs, labels } => {
                let mut batch_labels = Vec::with_capacity(indices.len());
                for &i in indices {
                    batch_labels.push(*labels.get(i).ok_or_else(|| Error::InvalidConfig {
                        detail: format!("label index {i} out of range"),
                    })?);
                }
                Ok((
                    inputs.gather_rows(indices)?,
                    BatchTarget::Labels(batch_labels),
                ))
            }
        }
    }
}

/// Minibatch stepper owning the optimizer state for one model.
pub struct Trainer {
    adam: Adam,
    names: Vec<String>,
    iteration: usize,
}

impl Trainer {
    pub fn new(model: &Model, lr: f64) -> Result<Self> {
        Ok(Trainer {
            adam: Adam::new(lr, &model.params())?,
            names: model.param_names(),
            iteration: 0,
        })
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.adam.set_lr(lr);
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// One forward/backward/update on a minibatch. Returns the loss.
    pub fn step_batch(
        &mut self,
        model: &mut Model,
        inputs: &Tensor,
        target: &BatchTarget,
    ) -> Result<f64> {
        let mut tape = Tape::new();
        let x = tape.constant(inputs.clone());
        let pass = model.forward(&mut tape, x, None, true)?;
        let loss = match target {
            BatchTarget::Values(t) => mse_loss(&mut tape, pass.output, t)?,
            BatchTarget::Labels(l) => nll_loss(&mut tape, pass.output, l)?,
        };
        let loss_value = tape.value(loss).data()[0];
        if loss_value > DIVERGENCE_LIMIT {
            return Err(Error::Diverged {
                loss: loss_value,
                iteration: self.iteration,
            });
        }
        let mut grads = tape.backward(loss)?;
        let grad_list: Vec<Tensor> = pass
            .param_vars
            .iter()
            .map(|&v| grads.take(v).expect("trainable leaves always get gradients"))
            .collect();
        self.adam
            .step(model.params_mut(), &grad_list, &self.names, self.iteration)?;
        self.iteration += 1;
        Ok(loss_value)
    }
}

/// One row per training iteration.
#[derive(Clone, Debug, Default)]
pub struct TrainReport {
    /// Epoch index of each iteration.
    pub epochs: Vec<usize>,
    /// Loss of each iteration.
    pub losses: Vec<f64>,
    /// Wall time of each iteration in milliseconds.
    pub wall_ms: Vec<f64>,
}

impl TrainReport {
    pub fn iterations(&self) -> usize {
        self.losses.len()
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.losses.last().copied()
    }

    /// Mean loss over the final `window` iterations (or all, if fewer).
    pub fn tail_mean_loss(&self, window: usize) -> Option<f64> {
        if self.losses.is_empty() {
            return None;
        }
        let k = window.max(1).min(self.losses.len());
        let tail = &self.losses[self.losses.len() - k..];
        Some(tail.iter().sum::<f64>() / k as f64)
    }

    /// Mean loss per epoch, in epoch order.
    pub fn epoch_mean_losses(&self) -> Vec<f64> {
        let mut sums: Vec<(f64, usize)> = Vec::new();
        for (&e, &l) in self.epochs.iter().zip(&self.losses) {
            if e >= sums.len() {
                sums.resize(e + 1, (0.0, 0));
            }
            sums[e].0 += l;
            sums[e].1 += 1;
        }
        sums.into_iter()
            .map(|(s, n)| if n == 0 { f64::NAN } else { s / n as f64 })
            .collect()
    }

    fn push(&mut self, epoch: usize, loss: f64, wall_ms: f64) {
        self.epochs.push(epoch);
        self.losses.push(loss);
        self.wall_ms.push(wall_ms);
    }

    /// One CSV row per training iteration.
    pub fn to_csv(&self, run_id: &str) -> Result<crate::report::CsvTable> {
        let mut table =
            crate::report::CsvTable::new(&["run_id", "epoch", "iteration", "wall_ms", "loss"]);
        for i in 0..self.losses.len() {
            table.push_row(vec![
                run_id.to_string(),
                self.epochs[i].to_string(),
                i.to_string(),
                crate::report::format_f64(self.wall_ms[i]),
                crate::report::format_f64(self.losses[i]),
            ])?;
        }
        Ok(table)
    }
}

/// Epoch-driven supervised training: per epoch, shuffle with `stream` and
/// iterate minibatches (last partial batch kept); learning rate follows
/// `schedule` per epoch; optimizer state persists across epochs.
pub fn train(
    model: &mut Model,
    data: &Dataset,
    epochs: usize,
    batch_size: usize,
    schedule: LrSchedule,
    stream: &mut RngStream,
) -> Result<TrainReport> {
    if data.is_empty() {
        return Err(Error::InvalidConfig {
            detail: "cannot train on an empty dataset".to_string(),
        });
    }
    if batch_size == 0 {
        return Err(Error::InvalidConfig {
            detail: "batch_size must be positive".to_string(),
        });
    }
    let mut trainer = Trainer::new(model, schedule.lr(0))?;
    let mut report = TrainReport::default();
    let mut indices: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..epochs {
        trainer.set_lr(schedule.lr(epoch));
        stream.shuffle(&mut indices);
        for chunk in indices.chunks(batch_size) {
            let started = Instant::now();
            let (inputs, target) = data.batch(chunk)?;
            let loss = trainer.step_batch(model, &inputs, &target)?;
            report.push(epoch, loss, started.elapsed().as_secs_f64() * 1e3);
        }
    }
    Ok(report)
}

/// Fraction of samples whose argmax prediction equals the label
/// (argmax ties resolve to the lowest class index).
pub fn recall_rate(model: &Model, inputs: &Tensor, labels: &[usize]) -> Result<f64> {
    let predictions = model.predict(inputs, None)?.argmax_rows()?;
    if predictions.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "recall_rate",
            left: vec![predictions.len()],
            right: vec![labels.len()],
        });
    }
    let correct = predictions
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

/// True iff every sample is classified correctly. Evaluates in chunks and
/// stops at the first misclassification, so "not yet fully learned" is
/// much cheaper than a full [`recall_rate`] scan.
pub fn recall_is_full(
    model: &Model,
    inputs: &Tensor,
    labels: &[usize],
    chunk_rows: usize,
) -> Result<bool> {
    let n = inputs.shape()[0];
    if labels.len() != n {
        return Err(Error::ShapeMismatch {
            op: "recall_is_full",
            left: vec![n],
            right: vec![labels.len()],
        });
    }
    let chunk_rows = chunk_rows.max(1);
    let mut start = 0;
    while start < n {
        let end = (start + chunk_rows).min(n);
        let rows: Vec<usize> = (start..end).collect();
        let block = inputs.gather_rows(&rows)?;
        let predictions = model.predict(&block, None)?.argmax_rows()?;
        for (p, &l) in predictions.iter().zip(&labels[start..end]) {
            if *p != l {
                return Ok(false);
            }
        }
        start = end;
    }
    Ok(true)
}

/// Index source for iteration-driven protocols that need fixed-size
/// minibatches without an explicit epoch loop: deals shuffled passes over
/// `0..n`, reshuffling whenever fewer than a full batch remains.
pub struct BatchCursor {
    indices: Vec<usize>,
    pos: usize,
}

impl BatchCursor {
    pub fn new(n: usize) -> BatchCursor {
        BatchCursor {
            indices: (0..n).collect(),
            pos: usize::MAX, // force a shuffle on first use
        }
    }

    /// Next `batch` indices (capped at the dataset size).
    pub fn next_batch(&mut self, batch: usize, stream: &mut RngStream) -> Vec<usize> {
        let batch = batch.max(1).min(self.indices.len());
        if self.pos > self.indices.len() - batch {
            stream.shuffle(&mut self.indices);
            self.pos = 0;
        }
        let out = self.indices[self.pos..self.pos + batch].to_vec();
        self.pos += batch;
        out
    }
}

/// Loss target for [`model_grad_check`].
pub enum GradCheckLoss {
    Mse(Tensor),
    Nll(Vec<usize>),
}

/// Central-difference gradient check of a complete model under a real
/// loss. Perturbs every parameter element by `±eps` and compares against
/// the analytic gradients from one backward pass.
pub fn model_grad_check(
    model: &mut Model,
    inputs: &Tensor,
    time: Option<&Tensor>,
    loss: &GradCheckLoss,
    eps: f64,
    threshold: f64,
) -> Result<GradCheckReport> {
    let eval_loss = |m: &Model| -> Result<f64> {
        let out = m.predict(inputs, time)?;
        match loss {
            GradCheckLoss::Mse(target) => mse_value(&out, target),
            GradCheckLoss::Nll(labels) => nll_value(&out, labels),
        }
    };

    // Analytic gradients.
    let mut tape = Tape::new();
    let x = tape.constant(inputs.clone());
    let pass = model.forward(&mut tape, x, time, true)?;
    let loss_var = match loss {
        GradCheckLoss::Mse(target) => mse_loss(&mut tape, pass.output, target)?,
        GradCheckLoss::Nll(labels) => nll_loss(&mut tape, pass.output, labels)?,
    };
    let mut grads = tape.backward(loss_var)?;
    let analytic: Vec<Tensor> = pass
        .param_vars
        .iter()
        .map(|&v| grads.take(v).expect("trainable leaves always get gradients"))
        .collect();

    let mut report = GradCheckReport {
        checked: 0,
        max_rel_err: 0.0,
        failures: Vec::new(),
    };
    let n_params = analytic.len();
    for pi in 0..n_params {
        for ei in 0..analytic[pi].len() {
            let original = model.params()[pi].data()[ei];
            model.params_mut()[pi].data_mut()[ei] = original + eps;
            let plus = eval_loss(model)?;
            model.params_mut()[pi].data_mut()[ei] = original - eps;
            let minus = eval_loss(model)?;
            model.params_mut()[pi].data_mut()[ei] = original;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[pi].data()[ei];
            let rel = grad_rel_err(a, numeric);
            report.checked += 1;
            report.max_rel_err = report.max_rel_err.max(rel);
            if rel > threshold {
                report.failures.push(GradCheckFailure {
                    param: pi,
                    element: ei,
                    analytic: a,
                    numeric,
                    rel_err: rel,
                });
            }
        }
    }
    Ok(report)
}
