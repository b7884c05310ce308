//! Policy evaluation on fresh environment episodes.

use crate::error::Result;
use crate::nn::Model;
use crate::rng::RngStream;
use crate::tensor::Tensor;

use super::env::{DiscretePendulumEnv, PendulumEnv, DISCRETE_TORQUES, OBS_DIM, TORQUE_LIMIT};

/// Aggregate statistics over a batch of evaluation episodes. Rewards are
/// undiscounted episode totals except for `mean_discounted`, which is the
/// mean of `G_0 = Σ γ^k r_k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalReport {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub mean_discounted: f64,
}

fn run_episodes<F>(
    n_episodes: usize,
    max_steps: usize,
    gamma: f64,
    stream: &mut RngStream,
    mut act: F,
) -> Result<EvalReport>
where
    F: FnMut(&[f64; OBS_DIM], usize, &mut RngStream) -> Result<f64>,
{
    let mut totals = Vec::with_capacity(n_episodes);
    let mut discounted = Vec::with_capacity(n_episodes);
    for episode in 0..n_episodes {
        let mut ep_stream = stream.split_indexed("eval_episode", episode as u64);
        let mut env = PendulumEnv::new(max_steps);
        let mut obs = env.reset(&mut ep_stream)?;
        let mut total = 0.0;
        let mut g0 = 0.0;
        let mut discount = 1.0;
        loop {
            let torque = act(&obs, env.step_index(), &mut ep_stream)?;
            let (next, reward, done) = env.step(torque)?;
            total += reward;
            g0 += discount * reward;
            discount *= gamma;
            obs = next;
            if done {
                break;
            }
        }
        totals.push(total);
        discounted.push(g0);
    }
    let n = totals.len() as f64;
    Ok(EvalReport {
        mean: totals.iter().sum::<f64>() / n,
        min: totals.iter().cloned().fold(f64::INFINITY, f64::min),
        max: totals.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        mean_discounted: discounted.iter().sum::<f64>() / n,
    })
}

fn time_tensor_for(model: &Model, step: usize) -> Result<Option<Tensor>> {
    if model.bioclock.is_some() {
        Ok(Some(Tensor::new(vec![1, 1], vec![step as f64])?))
    } else {
        Ok(None)
    }
}

/// Greedy torque of a Q-network for a single observation.
pub fn greedy_action(model: &Model, obs: &[f64; OBS_DIM], step: usize) -> Result<usize> {
    let x = Tensor::new(vec![1, OBS_DIM], obs.to_vec())?;
    let time = time_tensor_for(model, step)?;
    let q = model.predict(&x, time.as_ref())?;
    Ok(q.argmax_rows()?[0])
}

/// Deterministic torque of an actor network for a single observation:
/// the tanh head is scaled to the torque limit.
pub fn actor_torque(actor: &Model, obs: &[f64; OBS_DIM], step: usize) -> Result<f64> {
    let x = Tensor::new(vec![1, OBS_DIM], obs.to_vec())?;
    let time = time_tensor_for(actor, step)?;
    let out = actor.predict(&x, time.as_ref())?;
    Ok((out.data()[0] * TORQUE_LIMIT).clamp(-TORQUE_LIMIT, TORQUE_LIMIT))
}

/// Evaluates a Q-network greedily over fresh episodes.
pub fn evaluate_discrete(
    model: &Model,
    n_episodes: usize,
    max_steps: usize,
    gamma: f64,
    stream: &mut RngStream,
) -> Result<EvalReport> {
    run_episodes(n_episodes, max_steps, gamma, stream, |obs, step, _| {
        Ok(DISCRETE_TORQUES[greedy_action(model, obs, step)?])
    })
}

/// Evaluates a deterministic actor (no exploration noise).
pub fn evaluate_actor(
    actor: &Model,
    n_episodes: usize,
    max_steps: usize,
    gamma: f64,
    stream: &mut RngStream,
) -> Result<EvalReport> {
    run_episodes(n_episodes, max_steps, gamma, stream, |obs, step, _| {
        actor_torque(actor, obs, step)
    })
}

/// Uniform-random torque baseline.
pub fn evaluate_random_torque(
    n_episodes: usize,
    max_steps: usize,
    gamma: f64,
    stream: &mut RngStream,
) -> Result<EvalReport> {
    run_episodes(n_episodes, max_steps, gamma, stream, |_, _, ep_stream| {
        ep_stream.uniform(-TORQUE_LIMIT, TORQUE_LIMIT)
    })
}

/// Convenience wrapper so callers holding a discrete env don't need to
/// unpack it.
pub fn greedy_torque_discrete(
    model: &Model,
    env: &DiscretePendulumEnv,
    obs: &[f64; OBS_DIM],
) -> Result<f64> {
    Ok(DISCRETE_TORQUES[greedy_action(model, obs, env.env.step_index())?])
}
