//! Reinforcement learning on a scratch pendulum: a discrete Q-learner
//! that trains on each experience batch exactly once, and a DDPG variant
//! without target networks. Both accept time-aware (clocked) models.

pub mod ddpg;
pub mod dql;
pub mod env;
pub mod eval;
pub mod replay;

pub use ddpg::{ddpg_train, DdpgConfig};
pub use dql::{dql_targets, dql_train, DqlConfig};
pub use env::{
    wrap_angle, DiscretePendulumEnv, PendulumEnv, DEFAULT_EPISODE_STEPS, DISCRETE_TORQUES,
    GRAVITY, LENGTH, MASS, OBS_DIM, SPEED_LIMIT, TIME_STEP, TORQUE_LIMIT,
};
pub use eval::{
    actor_torque, evaluate_actor, evaluate_discrete, evaluate_random_torque, greedy_action,
    EvalReport,
};
pub use replay::{epsilon_for_episode, OuNoise, ReplayBuffer, Transition};

use crate::report::{format_f64, CsvTable};

/// One learning-curve row per training episode. Evaluation columns carry
/// the most recent evaluation forward between evaluation episodes, and
/// the final row holds the closing evaluation. `epsilon` is 0 for
/// learners without ε-greedy exploration.
#[derive(Clone, Debug, PartialEq)]
pub struct RlEpisodeRow {
    pub episode: usize,
    /// Cumulative environment steps up to and including this episode.
    pub env_steps: usize,
    /// Undiscounted reward total collected while exploring.
    pub train_reward: f64,
    pub eval_mean: f64,
    pub eval_min: f64,
    pub eval_max: f64,
    pub epsilon: f64,
    pub wall_ms: f64,
}

/// Full result of one training run.
#[derive(Clone, Debug)]
pub struct RlOutcome {
    pub rows: Vec<RlEpisodeRow>,
    pub final_eval: eval::EvalReport,
}

/// Learning curves of one or more runs stacked into a single table.
pub fn rl_curve_csv(runs: &[(String, RlOutcome)]) -> crate::error::Result<CsvTable> {
    let mut table = CsvTable::new(&[
        "run_id",
        "episode",
        "env_steps",
        "train_reward",
        "eval_reward_mean",
        "eval_reward_min",
        "eval_reward_max",
        "epsilon",
        "wall_ms",
    ]);
    for (run_id, outcome) in runs {
        for row in &outcome.rows {
            table.push_row(vec![
                run_id.clone(),
                row.episode.to_string(),
                row.env_steps.to_string(),
                format_f64(row.train_reward),
                format_f64(row.eval_mean),
                format_f64(row.eval_min),
                format_f64(row.eval_max),
                format_f64(row.epsilon),
                format_f64(row.wall_ms),
            ])?;
        }
    }
    Ok(table)
}

/// Final evaluation of each run: one row per run.
pub fn rl_summary_csv(runs: &[(String, RlOutcome)]) -> crate::error::Result<CsvTable> {
    let mut table = CsvTable::new(&[
        "run_id",
        "episodes",
        "env_steps",
        "final_eval_mean",
        "final_eval_min",
        "final_eval_max",
        "final_eval_mean_discounted",
    ]);
    for (run_id, outcome) in runs {
        let episodes = outcome.rows.len();
        let env_steps = outcome.rows.last().map_or(0, |r| r.env_steps);
        table.push_row(vec![
            run_id.clone(),
            episodes.to_string(),
            env_steps.to_string(),
            format_f64(outcome.final_eval.mean),
            format_f64(outcome.final_eval.min),
            format_f64(outcome.final_eval.max),
            format_f64(outcome.final_eval.mean_discounted),
        ])?;
    }
    Ok(table)
}
