//! Canonical model architectures used across the experiments.
//!
//! Every supervised experiment compares a conventional MLP against a
//! bundle network of (approximately) matched trainable-parameter count,
//! with all other settings identical. The constructors here pin those
//! architectures; [`canonical_architectures`] lists the eight reference
//! configurations whose exact parameter counts the test suite asserts.

use serde::{Deserialize, Serialize};

use crate::nn::{BioclockSpec, Init, LayerSpec, ModelConfig};

/// Which architecture family a run uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Mlp,
    Bundle,
}

impl ModelKind {
    pub fn label(&self) -> &'static str {
        match self {
            ModelKind::Mlp => "mlp",
            ModelKind::Bundle => "bundle",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mlp" => Ok(ModelKind::Mlp),
            "bundle" => Ok(ModelKind::Bundle),
            other => Err(format!("unknown model kind `{other}` (expected mlp|bundle)")),
        }
    }
}

/// Memorisation-capacity network: two stacked first-kind layers with a
/// tanh between them, 16 → hidden → 16. The MLP stacks two linear
/// layers; the bundle variant stacks two bundle layers.
pub fn capacity_config(kind: ModelKind, hidden: usize) -> ModelConfig {
    capacity_config_dims(kind, hidden, 16, 16)
}

/// [`capacity_config`] with explicit input/output widths.
pub fn capacity_config_dims(
    kind: ModelKind,
    hidden: usize,
    dim_in: usize,
    dim_out: usize,
) -> ModelConfig {
    let first = match kind {
        ModelKind::Mlp => LayerSpec::Linear {
            out: hidden,
            init: Init::FanInUniform,
        },
        ModelKind::Bundle => LayerSpec::Bundle {
            out: hidden,
            init: Init::FanInUniform,
        },
    };
    let second = match kind {
        ModelKind::Mlp => LayerSpec::Linear {
            out: dim_out,
            init: Init::FanInUniform,
        },
        ModelKind::Bundle => LayerSpec::Bundle {
            out: dim_out,
            init: Init::FanInUniform,
        },
    };
    ModelConfig {
        input_dim: dim_in,
        bioclock: None,
        layers: vec![first, LayerSpec::Tanh, second],
    }
}

/// Sequential-task regression network: first layer (linear or bundle) →
/// tanh → linear readout, 16 → hidden → 8.
pub fn sequential_config(kind: ModelKind, hidden: usize) -> ModelConfig {
    supervised_head_config(kind, 16, hidden, 8, false)
}

/// Classification network: as [`sequential_config`] but 20 outputs and a
/// log-softmax head, 16 → hidden → 20.
pub fn classification_config(kind: ModelKind, hidden: usize) -> ModelConfig {
    supervised_head_config(kind, 16, hidden, 20, true)
}

fn supervised_head_config(
    kind: ModelKind,
    input: usize,
    hidden: usize,
    output: usize,
    log_softmax: bool,
) -> ModelConfig {
    let first = match kind {
        ModelKind::Mlp => LayerSpec::Linear {
            out: hidden,
            init: Init::FanInUniform,
        },
        ModelKind::Bundle => LayerSpec::Bundle {
            out: hidden,
            init: Init::FanInUniform,
        },
    };
    let mut layers = vec![
        first,
        LayerSpec::Tanh,
        LayerSpec::Linear {
            out: output,
            init: Init::FanInUniform,
        },
    ];
    if log_softmax {
        layers.push(LayerSpec::LogSoftmax);
    }
    ModelConfig {
        input_dim: input,
        bioclock: None,
        layers,
    }
}

/// Q-network for discrete control: first layer (linear or bundle) → tanh
/// → layer norm → linear readout over action values. `clocked` prepends a
/// periodic time encoding (two extra input columns); hidden stacks use
/// orthogonal init with gain 5/3 and the readout uses fan-in uniform.
pub fn q_network_config(
    kind: ModelKind,
    clocked: bool,
    obs_dim: usize,
    n_actions: usize,
    hidden: usize,
    t_max: f64,
) -> ModelConfig {
    let init = Init::Orthogonal { gain: 5.0 / 3.0 };
    let first = match kind {
        ModelKind::Mlp => LayerSpec::Linear { out: hidden, init },
        ModelKind::Bundle => LayerSpec::Bundle { out: hidden, init },
    };
    ModelConfig {
        input_dim: obs_dim,
        bioclock: clocked.then_some(BioclockSpec {
            obs_dim,
            t_min: 1.0,
            t_max,
            init,
        }),
        layers: vec![
            first,
            LayerSpec::Tanh,
            LayerSpec::LayerNorm,
            LayerSpec::Linear {
                out: n_actions,
                init: Init::FanInUniform,
            },
        ],
    }
}

/// Deterministic-policy actor: same trunk as [`q_network_config`] with a
/// single action output (callers scale the tanh-squashed output to the
/// torque bound).
pub fn actor_config(
    kind: ModelKind,
    clocked: bool,
    obs_dim: usize,
    hidden: usize,
    t_max: f64,
) -> ModelConfig {
    let mut config = q_network_config(kind, clocked, obs_dim, 1, hidden, t_max);
    config.layers.push(LayerSpec::Tanh);
    config
}

/// State-action critic: the trunk reads `concat(observation, action)`;
/// when clocked, the time encoder conditions on the observation columns
/// only.
pub fn critic_config(
    kind: ModelKind,
    clocked: bool,
    obs_dim: usize,
    action_dim: usize,
    hidden: usize,
    t_max: f64,
) -> ModelConfig {
    let mut config = q_network_config(kind, clocked, obs_dim + action_dim, 1, hidden, t_max);
    if let Some(clock) = &mut config.bioclock {
        clock.obs_dim = obs_dim;
    }
    config
}

/// The eight reference architectures with exactly known parameter counts.
/// Returned as `(name, config, expected_count)`.
pub fn canonical_architectures() -> Vec<(&'static str, ModelConfig, usize)> {
    vec![
        ("capacity-mlp-h323", capacity_config(ModelKind::Mlp, 323), 10675),
        (
            "capacity-bundle-h16",
            capacity_config(ModelKind::Bundle, 16),
            10336,
        ),
        (
            "classification-mlp-h155",
            classification_config(ModelKind::Mlp, 155),
            5755,
        ),
        (
            "classification-bundle-h16",
            classification_config(ModelKind::Bundle, 16),
            5508,
        ),
        (
            "q-mlp-h573",
            q_network_config(ModelKind::Mlp, false, 8, 4, 573, 1e4),
            8599,
        ),
        (
            "q-mlp-clock-h492",
            q_network_config(ModelKind::Mlp, true, 8, 4, 492, 1e4),
            8594,
        ),
        (
            "q-bundle-h97",
            q_network_config(ModelKind::Bundle, false, 8, 4, 97, 1e4),
            8587,
        ),
        (
            "q-bundle-clock-h64",
            q_network_config(ModelKind::Bundle, true, 8, 4, 64, 1e4),
            8578,
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::count_parameters;

    #[test]
    fn canonical_architecture_counts_are_exact() {
        for (name, config, expected) in canonical_architectures() {
            let got = count_parameters(&config).unwrap();
            assert_eq!(got, expected, "{name}: counted {got}, expected {expected}");
        }
    }

    #[test]
    fn sequential_architectures_match_hand_counts() {
        // 16→220→8 MLP: (16·220+220) + (220·8+8) = 3960 + 1768 = 5508.
        assert_eq!(
            count_parameters(&sequential_config(ModelKind::Mlp, 220)).unwrap(),
            5508
        );
        // Bundle(16→16) 5168 + linear 16→8 readout 136 = 5304.
        assert_eq!(
            count_parameters(&sequential_config(ModelKind::Bundle, 16)).unwrap(),
            5304
        );
    }

    #[test]
    fn capacity_sweep_counts_follow_closed_forms() {
        // MLP(16→h→16): 33h + 16. Bundle pair: 18h² + 323h + 560.
        for h in [64, 130, 212, 313, 430, 565] {
            assert_eq!(
                count_parameters(&capacity_config(ModelKind::Mlp, h)).unwrap(),
                33 * h + 16
            );
        }
        for h in [4, 8, 12, 16, 20, 24] {
            assert_eq!(
                count_parameters(&capacity_config(ModelKind::Bundle, h)).unwrap(),
                18 * h * h + 323 * h + 560
            );
        }
    }

    #[test]
    fn rl_configs_shape_check() {
        use crate::rng::RngStream;
        use crate::tensor::Tensor;

        // Actor on a 3-wide observation, clocked: consumes obs + time.
        let config = actor_config(ModelKind::Bundle, true, 3, 16, 600.0);
        let model = crate::nn::Model::build(&config, &mut RngStream::new(1)).unwrap();
        let obs = Tensor::rand_normal(&[5, 3], &mut RngStream::new(2)).unwrap();
        let t = Tensor::full(&[5, 1], 3.0).unwrap();
        let out = model.predict(&obs, Some(&t)).unwrap();
        assert_eq!(out.shape(), &[5, 1]);
        // Final tanh bounds the raw action.
        assert!(out.data().iter().all(|v| v.abs() <= 1.0));

        // Critic reads concat(obs, action); its clock conditions on the
        // observation prefix only.
        let config = critic_config(ModelKind::Mlp, true, 3, 1, 16, 600.0);
        assert_eq!(config.input_dim, 4);
        assert_eq!(config.bioclock.as_ref().unwrap().obs_dim, 3);
        let model = crate::nn::Model::build(&config, &mut RngStream::new(3)).unwrap();
        let sa = Tensor::rand_normal(&[5, 4], &mut RngStream::new(4)).unwrap();
        let q = model.predict(&sa, Some(&t)).unwrap();
        assert_eq!(q.shape(), &[5, 1]);
    }
}
