//! Torque-controlled pendulum swing-up, reimplemented from the classic
//! control formulation, plus a three-action discrete wrapper.
//!
//! Dynamics (g = 10, m = 1, l = 1, dt = 0.05):
//!
//! ```text
//! θ̇ ← clip(θ̇ + (3g/(2l)·sin θ + 3/(m l²)·u)·Δt, ±8)
//! θ ← θ + θ̇·Δt
//! reward = −(wrap(θ)² + 0.1·θ̇² + 0.001·u²)        wrap into (−π, π]
//! ```
//!
//! The reward is computed on the post-update state. Episodes end at a
//! fixed step limit; that cut-off is a time limit, not a terminal state,
//! so value targets keep bootstrapping through it. The unit tests pin a
//! scripted trajectory against an independently computed oracle of the
//! same equations.

use crate::error::{Error, Result};
use crate::rng::RngStream;

pub const GRAVITY: f64 = 10.0;
pub const MASS: f64 = 1.0;
pub const LENGTH: f64 = 1.0;
pub const TIME_STEP: f64 = 0.05;
pub const TORQUE_LIMIT: f64 = 2.0;
pub const SPEED_LIMIT: f64 = 8.0;
/// Default episode length (time limit).
pub const DEFAULT_EPISODE_STEPS: usize = 600;

/// Observation width: `(cos θ, sin θ, θ̇)`.
pub const OBS_DIM: usize = 3;

/// Wraps an angle into `(−π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    std::f64::consts::PI - (std::f64::consts::PI - theta).rem_euclid(2.0 * std::f64::consts::PI)
}

/// Continuous-torque pendulum.
#[derive(Clone, Debug)]
pub struct PendulumEnv {
    theta: f64,
    theta_dot: f64,
    step_index: usize,
    max_steps: usize,
    done: bool,
}

impl PendulumEnv {
    pub fn new(max_steps: usize) -> PendulumEnv {
        PendulumEnv {
            theta: 0.0,
            theta_dot: 0.0,
            step_index: 0,
            max_steps: max_steps.max(1),
            done: false,
        }
    }

    /// Starts a fresh episode: θ ~ U(−π, π), θ̇ ~ U(−1, 1).
    pub fn reset(&mut self, stream: &mut RngStream) -> Result<[f64; OBS_DIM]> {
        self.theta = stream.uniform(-std::f64::consts::PI, std::f64::consts::PI)?;
        self.theta_dot = stream.uniform(-1.0, 1.0)?;
        self.step_index = 0;
        self.done = false;
        Ok(self.observation())
    }

    /// Places the pendulum in an exact state (scripted rollouts, tests).
    pub fn set_state(&mut self, theta: f64, theta_dot: f64) {
        self.theta = theta;
        self.theta_dot = theta_dot.clamp(-SPEED_LIMIT, SPEED_LIMIT);
    }

    pub fn observation(&self) -> [f64; OBS_DIM] {
        [self.theta.cos(), self.theta.sin(), self.theta_dot]
    }

    /// Step index of the *next* transition (0-based; always < the step
    /// limit while the episode is live).
    pub fn step_index(&self) -> usize {
        self.step_index
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Advances one step. Stepping a finished episode is a contract
    /// error.
    pub fn step(&mut self, torque: f64) -> Result<([f64; OBS_DIM], f64, bool)> {
        if self.done {
            return Err(Error::InvalidConfig {
                detail: format!(
                    "episode already ended at step {} — reset before stepping again",
                    self.step_index
                ),
            });
        }
        let u = torque.clamp(-TORQUE_LIMIT, TORQUE_LIMIT);
        self.theta_dot += (3.0 * GRAVITY / (2.0 * LENGTH) * self.theta.sin()
            + 3.0 / (MASS * LENGTH * LENGTH) * u)
            * TIME_STEP;
        self.theta_dot = self.theta_dot.clamp(-SPEED_LIMIT, SPEED_LIMIT);
        self.theta += self.theta_dot * TIME_STEP;
        let wrapped = wrap_angle(self.theta);
        let reward =
            -(wrapped * wrapped + 0.1 * self.theta_dot * self.theta_dot + 0.001 * u * u);
        self.step_index += 1;
        self.done = self.step_index >= self.max_steps;
        Ok((self.observation(), reward, self.done))
    }
}

/// Discrete wrapper: actions index the torque set `{−2, 0, +2}`.
#[derive(Clone, Debug)]
pub struct DiscretePendulumEnv {
    pub env: PendulumEnv,
}

/// Torques of the three discrete actions.
pub const DISCRETE_TORQUES: [f64; 3] = [-TORQUE_LIMIT, 0.0, TORQUE_LIMIT];

impl DiscretePendulumEnv {
    pub fn new(max_steps: usize) -> DiscretePendulumEnv {
        DiscretePendulumEnv {
            env: PendulumEnv::new(max_steps),
        }
    }

    pub fn n_actions(&self) -> usize {
        DISCRETE_TORQUES.len()
    }

    pub fn reset(&mut self, stream: &mut RngStream) -> Result<[f64; OBS_DIM]> {
        self.env.reset(stream)
    }

    pub fn step(&mut self, action: usize) -> Result<([f64; OBS_DIM], f64, bool)> {
        let torque = *DISCRETE_TORQUES
            .get(action)
            .ok_or(Error::LabelOutOfRange {
                label: action,
                classes: DISCRETE_TORQUES.len(),
            })?;
        self.env.step(torque)
    }
}
