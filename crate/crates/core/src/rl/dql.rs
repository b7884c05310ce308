//! Deep Q-learning without experience reuse.
//!
//! The buffer holds exactly one training batch. Whenever it fills, the
//! network takes a fixed number of full-batch gradient steps on that
//! batch — recomputing the bootstrap targets from the current network
//! before every step — and the buffer is then discarded. Sequence tags
//! audit that no transition is ever trained on twice. There is no target
//! network; time-aware models receive the in-episode step index.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Model;
use crate::optim::{mse_loss, Adam, DIVERGENCE_LIMIT};
use crate::rng::RngStream;
use crate::tensor::Tensor;

use super::env::{DiscretePendulumEnv, DEFAULT_EPISODE_STEPS, OBS_DIM};
use super::eval::{evaluate_discrete, greedy_action};
use super::replay::{epsilon_for_episode, ReplayBuffer, Transition};
use super::{RlEpisodeRow, RlOutcome};

/// Hyper-parameters of the discrete learner.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DqlConfig {
    pub episodes: usize,
    /// Buffer capacity and batch size — one and the same.
    pub batch: usize,
    /// Gradient steps per filled buffer.
    pub fw_steps: usize,
    pub gamma: f64,
    pub lr: f64,
    pub eval_interval: usize,
    pub n_evals: usize,
    pub eps_start: f64,
    pub eps_decay: f64,
    pub eps_floor: f64,
    pub max_steps: usize,
}

impl Default for DqlConfig {
    fn default() -> DqlConfig {
        DqlConfig {
            episodes: 300,
            batch: 512,
            fw_steps: 50,
            gamma: 0.99,
            lr: 5e-4,
            eval_interval: 20,
            n_evals: 20,
            eps_start: 1.0,
            eps_decay: 0.996,
            eps_floor: 0.01,
            max_steps: DEFAULT_EPISODE_STEPS,
        }
    }
}

impl DqlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0
            || self.batch == 0
            || self.fw_steps == 0
            || self.n_evals == 0
            || self.max_steps == 0
            || self.eval_interval == 0
        {
            return Err(Error::InvalidConfig {
                detail: "dql: episodes, batch, fw_steps, n_evals, eval_interval and max_steps must be positive".to_string(),
            });
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig {
                detail: format!("dql: gamma {} outside [0, 1]", self.gamma),
            });
        }
        if self.lr <= 0.0 {
            return Err(Error::InvalidConfig {
                detail: format!("dql: learning rate {} must be positive", self.lr),
            });
        }
        Ok(())
    }
}

/// Bootstrap targets `y_j = r_j + γ·max_a Q(s'_j, t_j + 1, a)` under the
/// current network (`y_j = r_j` on terminal transitions), evaluated
/// without recording gradients.
pub fn dql_targets(
    model: &Model,
    batch: &[Transition<usize>],
    gamma: f64,
) -> Result<Vec<f64>> {
    let rows = batch.len();
    let mut next_data = Vec::with_capacity(rows * OBS_DIM);
    for t in batch {
        next_data.extend_from_slice(&t.next_obs);
    }
    let next = Tensor::new(vec![rows, OBS_DIM], next_data)?;
    let times = if model.bioclock.is_some() {
        Some(Tensor::new(
            vec![rows, 1],
            batch.iter().map(|t| (t.time + 1) as f64).collect(),
        )?)
    } else {
        None
    };
    let next_q = model.predict(&next, times.as_ref())?;
    let best = next_q.max_rows()?;
    Ok(batch
        .iter()
        .zip(best)
        .map(|(t, q)| {
            if t.terminal {
                t.reward
            } else {
                t.reward + gamma * q
            }
        })
        .collect())
}

/// One gradient step: full-batch TD regression of `Q(s_j, t_j, a_j)`
/// onto `targets`. Returns the mean squared TD error.
fn dql_gradient_step(
    model: &mut Model,
    adam: &mut Adam,
    names: &[String],
    iteration: usize,
    batch: &[Transition<usize>],
    targets: &[f64],
    n_actions: usize,
) -> Result<f64> {
    let rows = batch.len();
    let mut obs_data = Vec::with_capacity(rows * OBS_DIM);
    let mut mask_data = vec![0.0; rows * n_actions];
    for (j, t) in batch.iter().enumerate() {
        obs_data.extend_from_slice(&t.obs);
        mask_data[j * n_actions + t.action] = 1.0;
    }
    let obs = Tensor::new(vec![rows, OBS_DIM], obs_data)?;
    let times = if model.bioclock.is_some() {
        Some(Tensor::new(
            vec![rows, 1],
            batch.iter().map(|t| t.time as f64).collect(),
        )?)
    } else {
        None
    };
    let target = Tensor::new(vec![rows, 1], targets.to_vec())?;

    let mut tape = crate::autodiff::Tape::new();
    let x = tape.constant(obs);
    let pass = model.forward(&mut tape, x, times.as_ref(), true)?;
    // Select Q(s_j, a_j): zero out non-chosen entries, then collapse each
    // row with a ones-vector product.
    let mask = tape.constant(Tensor::new(vec![rows, n_actions], mask_data)?);
    let picked = tape.mul(pass.output, mask)?;
    let ones = tape.constant(Tensor::ones(&[n_actions, 1])?);
    let q_sa = tape.matmul(picked, ones)?;
    let loss = mse_loss(&mut tape, q_sa, &target)?;
    let loss_value = tape.value(loss).data()[0];
    if !loss_value.is_finite() || loss_value > DIVERGENCE_LIMIT {
        return Err(Error::Diverged {
            loss: loss_value,
            iteration,
        });
    }
    let mut grads = tape.backward(loss)?;
    let grad_list: Vec<Tensor> = pass
        .param_vars
        .iter()
        .map(|&v| grads.take(v).expect("trainable leaves always get gradients"))
        .collect();
    adam.step(model.params_mut(), &grad_list, names, iteration)?;
    Ok(loss_value)
}

/// Trains a Q-network on the discrete pendulum. The model must map
/// 3-column observations to one Q-value per torque.
pub fn dql_train(
    model: &mut Model,
    config: &DqlConfig,
    stream: &mut RngStream,
) -> Result<RlOutcome> {
    config.validate()?;
    let mut env = DiscretePendulumEnv::new(config.max_steps);
    let n_actions = env.n_actions();
    if model.input_dim() != OBS_DIM {
        return Err(Error::InvalidConfig {
            detail: format!(
                "dql: model consumes {} inputs, environment emits {OBS_DIM}",
                model.input_dim()
            ),
        });
    }
    if model.config().output_dim()? != n_actions {
        return Err(Error::InvalidConfig {
            detail: format!(
                "dql: model emits {} values, environment has {n_actions} actions",
                model.config().output_dim()?
            ),
        });
    }

    let mut adam = Adam::new(config.lr, &model.params())?;
    let names = model.param_names();
    let mut iteration = 0usize;
    let mut buffer: ReplayBuffer<usize> = ReplayBuffer::new(config.batch);
    let mut last_trained_seq: Option<u64> = None;

    let mut rows = Vec::with_capacity(config.episodes);
    let mut env_steps = 0usize;
    let mut eval_round = 0u64;
    let mut last_eval: Option<(f64, f64, f64)> = None;

    for episode in 0..config.episodes {
        if episode % config.eval_interval == 0 {
            let mut eval_stream = stream.split_indexed("eval", eval_round);
            eval_round += 1;
            let report = evaluate_discrete(
                model,
                config.n_evals,
                config.max_steps,
                config.gamma,
                &mut eval_stream,
            )?;
            last_eval = Some((report.mean, report.min, report.max));
        }

        let started = Instant::now();
        let epsilon = epsilon_for_episode(
            config.eps_start,
            config.eps_decay,
            config.eps_floor,
            episode,
        );
        let mut ep_stream = stream.split_indexed("episode", episode as u64);
        let mut obs = env.reset(&mut ep_stream)?;
        let mut train_reward = 0.0;
        loop {
            let step = env.env.step_index();
            let action = if ep_stream.unit() < epsilon {
                ep_stream.index(n_actions)?
            } else {
                greedy_action(model, &obs, step)?
            };
            let (next_obs, reward, done) = env.step(action)?;
            train_reward += reward;
            env_steps += 1;
            // The episode only ends at the step limit, which is a time
            // cut-off rather than an absorbing state.
            buffer.push(obs.to_vec(), action, reward, next_obs.to_vec(), step, false);
            obs = next_obs;

            if buffer.is_full() {
                let batch: Vec<Transition<usize>> = buffer.iter().cloned().collect();
                let min_seq = batch.iter().map(|t| t.seq).min().expect("non-empty batch");
                let max_seq = batch.iter().map(|t| t.seq).max().expect("non-empty batch");
                if let Some(last) = last_trained_seq {
                    if min_seq <= last {
                        return Err(Error::InvalidConfig {
                            detail: format!(
                                "dql: transition {min_seq} would be trained twice (last trained {last})"
                            ),
                        });
                    }
                }
                for _ in 0..config.fw_steps {
                    let targets = dql_targets(model, &batch, config.gamma)?;
                    dql_gradient_step(
                        model, &mut adam, &names, iteration, &batch, &targets, n_actions,
                    )?;
                    iteration += 1;
                }
                last_trained_seq = Some(max_seq);
                buffer.clear();
            }

            if done {
                break;
            }
        }

        let (eval_mean, eval_min, eval_max) =
            last_eval.expect("episode 0 always evaluates first");
        rows.push(RlEpisodeRow {
            episode,
            env_steps,
            train_reward,
            eval_mean,
            eval_min,
            eval_max,
            epsilon,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        });
    }

    let mut eval_stream = stream.split_indexed("eval", eval_round);
    let final_eval = evaluate_discrete(
        model,
        config.n_evals,
        config.max_steps,
        config.gamma,
        &mut eval_stream,
    )?;
    // Land the closing evaluation on the last row so curves end with the
    // final policy's performance.
    if let Some(last) = rows.last_mut() {
        last.eval_mean = final_eval.mean;
        last.eval_min = final_eval.min;
        last.eval_max = final_eval.max;
    }
    Ok(RlOutcome { rows, final_eval })
}
