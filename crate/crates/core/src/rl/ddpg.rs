//! Deterministic policy gradient on the continuous pendulum, without
//! target networks.
//!
//! Every environment step performs one critic regression step (bootstrap
//! targets come from the *current* actor and critic) followed by one
//! actor ascent step on `Q(s, μ(s))` with the critic's parameters frozen
//! inside the tape. Exploration adds Ornstein–Uhlenbeck noise to the
//! actor torque; the noise process restarts at every episode.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::nn::Model;
use crate::optim::{mse_loss, Adam, DIVERGENCE_LIMIT};
use crate::rng::RngStream;
use crate::tensor::Tensor;

use super::env::{PendulumEnv, DEFAULT_EPISODE_STEPS, OBS_DIM, TORQUE_LIMIT};
use super::eval::{actor_torque, evaluate_actor};
use super::replay::{OuNoise, ReplayBuffer, Transition};
use super::{RlEpisodeRow, RlOutcome};

/// Hyper-parameters of the continuous learner.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DdpgConfig {
    pub episodes: usize,
    pub batch: usize,
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub buffer_capacity: usize,
    pub eval_interval: usize,
    pub n_evals: usize,
    pub max_steps: usize,
    pub ou_theta: f64,
    pub ou_sigma: f64,
}

impl Default for DdpgConfig {
    fn default() -> DdpgConfig {
        DdpgConfig {
            episodes: 200,
            batch: 64,
            gamma: 0.99,
            actor_lr: 5e-4,
            critic_lr: 5e-4,
            buffer_capacity: 20_000,
            eval_interval: 5,
            n_evals: 20,
            max_steps: DEFAULT_EPISODE_STEPS,
            ou_theta: 0.15,
            ou_sigma: 0.2,
        }
    }
}

impl DdpgConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0
            || self.batch == 0
            || self.n_evals == 0
            || self.max_steps == 0
            || self.eval_interval == 0
        {
            return Err(Error::InvalidConfig {
                detail: "ddpg: episodes, batch, n_evals, eval_interval and max_steps must be positive".to_string(),
            });
        }
        if self.buffer_capacity < self.batch {
            return Err(Error::InvalidConfig {
                detail: format!(
                    "ddpg: buffer capacity {} below batch size {}",
                    self.buffer_capacity, self.batch
                ),
            });
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig {
                detail: format!("ddpg: gamma {} outside [0, 1]", self.gamma),
            });
        }
        if self.actor_lr <= 0.0 || self.critic_lr <= 0.0 {
            return Err(Error::InvalidConfig {
                detail: "ddpg: learning rates must be positive".to_string(),
            });
        }
        Ok(())
    }
}

fn batch_tensors(batch: &[&Transition<f64>]) -> Result<(Tensor, Tensor, Tensor, Vec<f64>, Vec<f64>)> {
    let rows = batch.len();
    let mut obs = Vec::with_capacity(rows * OBS_DIM);
    let mut next = Vec::with_capacity(rows * OBS_DIM);
    let mut act = Vec::with_capacity(rows);
    let mut times = Vec::with_capacity(rows);
    let mut rewards = Vec::with_capacity(rows);
    for t in batch {
        obs.extend_from_slice(&t.obs);
        next.extend_from_slice(&t.next_obs);
        act.push(t.action);
        times.push(t.time as f64);
        rewards.push(t.reward);
    }
    Ok((
        Tensor::new(vec![rows, OBS_DIM], obs)?,
        Tensor::new(vec![rows, OBS_DIM], next)?,
        Tensor::new(vec![rows, 1], act)?,
        times,
        rewards,
    ))
}

fn maybe_times(model: &Model, values: &[f64], offset: f64) -> Result<Option<Tensor>> {
    if model.bioclock.is_some() {
        Ok(Some(Tensor::new(
            vec![values.len(), 1],
            values.iter().map(|t| t + offset).collect(),
        )?))
    } else {
        Ok(None)
    }
}

/// Bootstrap targets `y_j = r_j + γ·Q(s'_j, t_j + 1, μ(s'_j, t_j + 1))`
/// under the current networks, evaluated without gradients. The episode
/// cut-off is a time limit, so every transition bootstraps.
fn ddpg_targets(
    actor: &Model,
    critic: &Model,
    next: &Tensor,
    times: &[f64],
    rewards: &[f64],
    gamma: f64,
) -> Result<Tensor> {
    let actor_times = maybe_times(actor, times, 1.0)?;
    let next_action = actor.predict(next, actor_times.as_ref())?.scale(TORQUE_LIMIT)?;
    let critic_input = next.concat(&next_action, 1)?;
    let critic_times = maybe_times(critic, times, 1.0)?;
    let next_q = critic.predict(&critic_input, critic_times.as_ref())?;
    let rows = rewards.len();
    let data = rewards
        .iter()
        .zip(next_q.data())
        .map(|(r, q)| r + gamma * q)
        .collect();
    Tensor::new(vec![rows, 1], data)
}

/// One critic regression step onto fixed targets. Returns the TD loss.
fn critic_step(
    critic: &mut Model,
    adam: &mut Adam,
    names: &[String],
    iteration: usize,
    obs: &Tensor,
    actions: &Tensor,
    times: &[f64],
    targets: &Tensor,
) -> Result<f64> {
    let critic_times = maybe_times(critic, times, 0.0)?;
    let mut tape = Tape::new();
    let input = tape.constant(obs.concat(actions, 1)?);
    let pass = critic.forward(&mut tape, input, critic_times.as_ref(), true)?;
    let loss = mse_loss(&mut tape, pass.output, targets)?;
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
    adam.step(critic.params_mut(), &grad_list, names, iteration)?;
    Ok(loss_value)
}

/// One actor ascent step on `mean Q(s, μ(s))`; the critic participates in
/// the tape with frozen (non-trainable) parameters. Returns the actor
/// loss `−mean Q`.
fn actor_step(
    actor: &mut Model,
    critic: &Model,
    adam: &mut Adam,
    names: &[String],
    iteration: usize,
    obs: &Tensor,
    times: &[f64],
) -> Result<f64> {
    let actor_times = maybe_times(actor, times, 0.0)?;
    let critic_times = maybe_times(critic, times, 0.0)?;
    let mut tape = Tape::new();
    let s = tape.constant(obs.clone());
    let pass = actor.forward(&mut tape, s, actor_times.as_ref(), true)?;
    let action = tape.scale(pass.output, TORQUE_LIMIT)?;
    let critic_input = tape.concat(s, action, 1)?;
    let critic_pass = critic.forward(&mut tape, critic_input, critic_times.as_ref(), false)?;
    let q_mean = tape.mean(critic_pass.output)?;
    let loss = tape.neg(q_mean)?;
    let loss_value = tape.value(loss).data()[0];
    if !loss_value.is_finite() || loss_value.abs() > DIVERGENCE_LIMIT {
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
    adam.step(actor.params_mut(), &grad_list, names, iteration)?;
    Ok(loss_value)
}

/// Trains an actor–critic pair on the continuous pendulum. The actor
/// maps 3-column observations to one tanh-bounded torque command; the
/// critic maps `[s ‖ a]` to a scalar value.
pub fn ddpg_train(
    actor: &mut Model,
    critic: &mut Model,
    config: &DdpgConfig,
    stream: &mut RngStream,
) -> Result<RlOutcome> {
    config.validate()?;
    if actor.input_dim() != OBS_DIM || actor.config().output_dim()? != 1 {
        return Err(Error::InvalidConfig {
            detail: format!(
                "ddpg: actor must map {OBS_DIM} inputs to 1 output, got {} -> {}",
                actor.input_dim(),
                actor.config().output_dim()?
            ),
        });
    }
    if critic.input_dim() != OBS_DIM + 1 || critic.config().output_dim()? != 1 {
        return Err(Error::InvalidConfig {
            detail: format!(
                "ddpg: critic must map {} inputs to 1 output, got {} -> {}",
                OBS_DIM + 1,
                critic.input_dim(),
                critic.config().output_dim()?
            ),
        });
    }

    let mut env = PendulumEnv::new(config.max_steps);
    let mut actor_adam = Adam::new(config.actor_lr, &actor.params())?;
    let mut critic_adam = Adam::new(config.critic_lr, &critic.params())?;
    let actor_names = actor.param_names();
    let critic_names = critic.param_names();
    let mut iteration = 0usize;
    let mut buffer: ReplayBuffer<f64> = ReplayBuffer::new(config.buffer_capacity);
    let mut noise = OuNoise::new(config.ou_theta, config.ou_sigma);
    let mut sample_stream = stream.split("minibatch");

    let mut rows = Vec::with_capacity(config.episodes);
    let mut env_steps = 0usize;
    let mut eval_round = 0u64;
    let mut last_eval: Option<(f64, f64, f64)> = None;

    for episode in 0..config.episodes {
        if episode % config.eval_interval == 0 {
            let mut eval_stream = stream.split_indexed("eval", eval_round);
            eval_round += 1;
            let report = evaluate_actor(
                actor,
                config.n_evals,
                config.max_steps,
                config.gamma,
                &mut eval_stream,
            )?;
            last_eval = Some((report.mean, report.min, report.max));
        }

        let started = Instant::now();
        let mut ep_stream = stream.split_indexed("episode", episode as u64);
        let mut obs = env.reset(&mut ep_stream)?;
        noise.reset();
        let mut train_reward = 0.0;
        loop {
            let step = env.step_index();
            let torque = (actor_torque(actor, &obs, step)? + noise.sample(&mut ep_stream))
                .clamp(-TORQUE_LIMIT, TORQUE_LIMIT);
            let (next_obs, reward, done) = env.step(torque)?;
            train_reward += reward;
            env_steps += 1;
            buffer.push(obs.to_vec(), torque, reward, next_obs.to_vec(), step, false);
            obs = next_obs;

            if buffer.len() >= config.batch {
                let batch = buffer.sample(config.batch, &mut sample_stream)?;
                let (obs_t, next_t, act_t, times, rewards) = batch_tensors(&batch)?;
                let targets = ddpg_targets(actor, critic, &next_t, &times, &rewards, config.gamma)?;
                critic_step(
                    critic,
                    &mut critic_adam,
                    &critic_names,
                    iteration,
                    &obs_t,
                    &act_t,
                    &times,
                    &targets,
                )?;
                actor_step(
                    actor,
                    critic,
                    &mut actor_adam,
                    &actor_names,
                    iteration,
                    &obs_t,
                    &times,
                )?;
                iteration += 1;
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
            epsilon: 0.0,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        });
    }

    let mut eval_stream = stream.split_indexed("eval", eval_round);
    let final_eval = evaluate_actor(
        actor,
        config.n_evals,
        config.max_steps,
        config.gamma,
        &mut eval_stream,
    )?;
    if let Some(last) = rows.last_mut() {
        last.eval_mean = final_eval.mean;
        last.eval_min = final_eval.min;
        last.eval_max = final_eval.max;
    }
    Ok(RlOutcome { rows, final_eval })
}
