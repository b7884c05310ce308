//! Experiment configuration: a flat JSON schema per experiment kind.
//!
//! Every field has a default, unknown keys are rejected, and the fully
//! resolved document is echoed to `config.resolved.json` so a run can be
//! audited and replayed. The `experiment` key selects the schema;
//! remaining keys are the experiment's own.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use bundlenet::experiments::models::ModelKind;
use bundlenet::rl::{DdpgConfig, DqlConfig};

/// Which model families a comparative experiment runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelChoice {
    Mlp,
    Bundle,
    Both,
}

impl ModelChoice {
    pub fn kinds(self) -> Vec<ModelKind> {
        match self {
            ModelChoice::Mlp => vec![ModelKind::Mlp],
            ModelChoice::Bundle => vec![ModelKind::Bundle],
            ModelChoice::Both => vec![ModelKind::Bundle, ModelKind::Mlp],
        }
    }
}

fn default_name_capacity() -> String {
    "capacity".to_string()
}
fn default_name_sequential() -> String {
    "sequential".to_string()
}
fn default_name_pca() -> String {
    "pca".to_string()
}
fn default_name_repetition() -> String {
    "repetition".to_string()
}
fn default_name_dql() -> String {
    "dql".to_string()
}
fn default_name_ddpg() -> String {
    "ddpg".to_string()
}
fn default_name_gradcheck() -> String {
    "gradcheck".to_string()
}
fn default_name_paramcount() -> String {
    "paramcount".to_string()
}
fn default_seed_zero() -> Vec<u64> {
    vec![0]
}
fn default_seeds_three() -> Vec<u64> {
    vec![0, 1, 2]
}
fn default_both() -> ModelChoice {
    ModelChoice::Both
}
fn default_bundle() -> ModelKind {
    ModelKind::Bundle
}
fn default_true() -> bool {
    true
}
fn default_lr() -> f64 {
    1e-3
}
fn default_lr_decay() -> f64 {
    0.995
}

/// Two-layer reconstruction sweep: converged loss against parameter
/// count for both families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CapacityJob {
    pub name: String,
    pub seeds: Vec<u64>,
    pub model: ModelChoice,
    pub samples: usize,
    pub dim: usize,
    pub epochs: usize,
    pub batch: usize,
    pub bundle_hidden: Vec<usize>,
    pub mlp_hidden: Vec<usize>,
    pub lr: f64,
    pub lr_decay: f64,
    /// Moving-average window for the training-curve plot.
    pub smoothing_window: usize,
}

impl Default for CapacityJob {
    fn default() -> Self {
        CapacityJob {
            name: default_name_capacity(),
            seeds: default_seed_zero(),
            model: default_both(),
            samples: 200,
            dim: 16,
            epochs: 2000,
            batch: 20,
            bundle_hidden: vec![4, 8, 12, 16, 20, 24],
            mlp_hidden: vec![64, 130, 212, 323, 430, 565],
            lr: default_lr(),
            lr_decay: default_lr_decay(),
            smoothing_window: 50,
        }
    }
}

/// Ten sequential regression tasks; forgetting measured on all tasks
/// seen so far.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SequentialJob {
    pub name: String,
    pub seeds: Vec<u64>,
    pub model: ModelChoice,
    pub tasks: usize,
    pub noise_dim: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub epochs: usize,
    pub iters_per_task: usize,
    pub batch: usize,
    pub bundle_hidden: usize,
    pub mlp_hidden: usize,
    pub lr: f64,
    pub lr_decay: f64,
}

impl Default for SequentialJob {
    fn default() -> Self {
        SequentialJob {
            name: default_name_sequential(),
            seeds: default_seed_zero(),
            model: default_both(),
            tasks: 10,
            noise_dim: 8,
            input_dim: 16,
            output_dim: 8,
            train_size: 500,
            test_size: 500,
            epochs: 3,
            iters_per_task: 500,
            batch: 50,
            bundle_hidden: 16,
            mlp_hidden: 220,
            lr: default_lr(),
            lr_decay: default_lr_decay(),
        }
    }
}

/// PCA of the per-sample generated weights of a sequentially trained
/// bundle model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PcaJob {
    pub name: String,
    pub seeds: Vec<u64>,
    pub tasks: usize,
    pub noise_dim: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub epochs: usize,
    pub iters_per_task: usize,
    pub batch: usize,
    pub bundle_hidden: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub samples_per_task: usize,
}

impl Default for PcaJob {
    fn default() -> Self {
        PcaJob {
            name: default_name_pca(),
            seeds: default_seed_zero(),
            tasks: 10,
            noise_dim: 8,
            input_dim: 16,
            output_dim: 8,
            train_size: 500,
            test_size: 500,
            epochs: 1,
            iters_per_task: 500,
            batch: 50,
            bundle_hidden: 16,
            lr: default_lr(),
            lr_decay: default_lr_decay(),
            samples_per_task: 100,
        }
    }
}

/// Spaced repetition: learn to full recall, decay on noise, relearn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RepetitionJob {
    pub name: String,
    pub seeds: Vec<u64>,
    pub model: ModelChoice,
    pub classes: usize,
    pub samples_per_class: usize,
    pub noise_dim: usize,
    pub input_dim: usize,
    pub bundle_hidden: usize,
    pub mlp_hidden: usize,
    pub repetitions: usize,
    pub max_learn_iters: usize,
    pub decay_iters: usize,
    pub batch: usize,
    pub lr: f64,
    /// Moving-average window for the recall-curve plot.
    pub recall_window: usize,
    /// Moving-average window for the relearn-steps plot.
    pub relearn_window: usize,
}

impl Default for RepetitionJob {
    fn default() -> Self {
        RepetitionJob {
            name: default_name_repetition(),
            seeds: default_seed_zero(),
            model: default_both(),
            classes: 20,
            samples_per_class: 500,
            noise_dim: 8,
            input_dim: 16,
            bundle_hidden: 16,
            mlp_hidden: 155,
            repetitions: 5,
            max_learn_iters: 501,
            decay_iters: 501,
            batch: 100,
            lr: default_lr(),
            recall_window: 2,
            relearn_window: 4,
        }
    }
}

/// Discrete Q-learning on the pendulum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DqlJob {
    pub name: String,
    pub seeds: Vec<u64>,
    pub model: ModelKind,
    pub clocked: bool,
    /// Hidden width; `null` picks the family's parameter-matched default.
    pub hidden: Option<usize>,
    pub episodes: usize,
    pub batch: usize,
    pub fw_steps: usize,
    pub gamma: f64,
    pub lr: f64,
    pub eval_interval: usize,
    pub n_evals: usize,
    pub eps_start: f64,
    pub eps_decay: f64,
    pub eps_floor: f64,
    pub max_steps: usize,
    /// Moving-average window for the train-reward plot.
    pub smoothing_window: usize,
}

impl Default for DqlJob {
    fn default() -> Self {
        let train = DqlConfig::default();
        DqlJob {
            name: default_name_dql(),
            seeds: default_seeds_three(),
            model: default_bundle(),
            clocked: default_true(),
            hidden: None,
            episodes: train.episodes,
            batch: train.batch,
            fw_steps: train.fw_steps,
            gamma: train.gamma,
            lr: train.lr,
            eval_interval: train.eval_interval,
            n_evals: train.n_evals,
            eps_start: train.eps_start,
            eps_decay: train.eps_decay,
            eps_floor: train.eps_floor,
            max_steps: train.max_steps,
            smoothing_window: 1000,
        }
    }
}

impl DqlJob {
    /// Parameter-matched hidden widths (all four variants land within a
    /// few dozen parameters of each other).
    pub fn effective_hidden(&self) -> usize {
        self.hidden.unwrap_or(match (self.model, self.clocked) {
            (ModelKind::Mlp, false) => 573,
            (ModelKind::Mlp, true) => 492,
            (ModelKind::Bundle, false) => 97,
            (ModelKind::Bundle, true) => 64,
        })
    }

    pub fn train_config(&self) -> DqlConfig {
        DqlConfig {
            episodes: self.episodes,
            batch: self.batch,
            fw_steps: self.fw_steps,
            gamma: self.gamma,
            lr: self.lr,
            eval_interval: self.eval_interval,
            n_evals: self.n_evals,
            eps_start: self.eps_start,
            eps_decay: self.eps_decay,
            eps_floor: self.eps_floor,
            max_steps: self.max_steps,
        }
    }

    pub fn label(&self) -> String {
        if self.clocked {
            format!("{}-clock", self.model.label())
        } else {
            self.model.label().to_string()
        }
    }
}

/// DDPG on the continuous pendulum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DdpgJob {
    pub name: String,
    pub seeds: Vec<u64>,
    pub model: ModelKind,
    pub clocked: bool,
    /// Hidden width of both actor and critic stacks.
    pub hidden: Option<usize>,
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
    pub smoothing_window: usize,
}

impl Default for DdpgJob {
    fn default() -> Self {
        let train = DdpgConfig::default();
        DdpgJob {
            name: default_name_ddpg(),
            seeds: default_seeds_three(),
            model: default_bundle(),
            clocked: default_true(),
            hidden: None,
            episodes: train.episodes,
            batch: train.batch,
            gamma: train.gamma,
            actor_lr: train.actor_lr,
            critic_lr: train.critic_lr,
            buffer_capacity: train.buffer_capacity,
            eval_interval: train.eval_interval,
            n_evals: train.n_evals,
            max_steps: train.max_steps,
            ou_theta: train.ou_theta,
            ou_sigma: train.ou_sigma,
            smoothing_window: 1000,
        }
    }
}

impl DdpgJob {
    pub fn effective_hidden(&self) -> usize {
        self.hidden.unwrap_or(match self.model {
            ModelKind::Mlp => 210,
            ModelKind::Bundle => 64,
        })
    }

    pub fn train_config(&self) -> DdpgConfig {
        DdpgConfig {
            episodes: self.episodes,
            batch: self.batch,
            gamma: self.gamma,
            actor_lr: self.actor_lr,
            critic_lr: self.critic_lr,
            buffer_capacity: self.buffer_capacity,
            eval_interval: self.eval_interval,
            n_evals: self.n_evals,
            max_steps: self.max_steps,
            ou_theta: self.ou_theta,
            ou_sigma: self.ou_sigma,
        }
    }

    pub fn label(&self) -> String {
        if self.clocked {
            format!("{}-clock", self.model.label())
        } else {
            self.model.label().to_string()
        }
    }
}

/// Finite-difference gradient audit of the assembled layer stacks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckJob {
    pub name: String,
    pub seeds: Vec<u64>,
    pub batch: usize,
    pub eps: f64,
    pub threshold: f64,
}

impl Default for GradcheckJob {
    fn default() -> Self {
        GradcheckJob {
            name: default_name_gradcheck(),
            seeds: default_seed_zero(),
            batch: 7,
            // Central differences on a full stack: round-off error scales
            // like ulp(loss)/(2·eps), so eps=1e-4 keeps the noise floor two
            // orders below the threshold without visible truncation error.
            eps: 1e-4,
            threshold: 1e-5,
        }
    }
}

/// Parameter-count report over the reference architectures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamcountJob {
    pub name: String,
}

impl Default for ParamcountJob {
    fn default() -> Self {
        ParamcountJob {
            name: default_name_paramcount(),
        }
    }
}

/// A fully parsed experiment configuration.
#[derive(Clone, Debug, PartialEq)]
pub enum Job {
    Capacity(CapacityJob),
    Sequential(SequentialJob),
    Pca(PcaJob),
    Repetition(RepetitionJob),
    Dql(DqlJob),
    Ddpg(DdpgJob),
    Gradcheck(GradcheckJob),
    Paramcount(ParamcountJob),
}

pub const EXPERIMENT_KINDS: [&str; 8] = [
    "capacity",
    "sequential",
    "repetition",
    "pca",
    "dql",
    "ddpg",
    "gradcheck",
    "paramcount",
];

impl Job {
    pub fn kind(&self) -> &'static str {
        match self {
            Job::Capacity(_) => "capacity",
            Job::Sequential(_) => "sequential",
            Job::Pca(_) => "pca",
            Job::Repetition(_) => "repetition",
            Job::Dql(_) => "dql",
            Job::Ddpg(_) => "ddpg",
            Job::Gradcheck(_) => "gradcheck",
            Job::Paramcount(_) => "paramcount",
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Job::Capacity(j) => &j.name,
            Job::Sequential(j) => &j.name,
            Job::Pca(j) => &j.name,
            Job::Repetition(j) => &j.name,
            Job::Dql(j) => &j.name,
            Job::Ddpg(j) => &j.name,
            Job::Gradcheck(j) => &j.name,
            Job::Paramcount(j) => &j.name,
        }
    }

    /// Default configuration of a named experiment kind.
    pub fn default_for(kind: &str) -> Result<Job, String> {
        Self::from_value(serde_json::json!({ "experiment": kind }))
    }

    /// Parses a JSON document. The `experiment` key picks the schema;
    /// every other key must belong to that schema.
    pub fn from_value(mut value: Value) -> Result<Job, String> {
        let object = value
            .as_object_mut()
            .ok_or_else(|| "configuration must be a JSON object".to_string())?;
        let kind = match object.remove("experiment") {
            Some(Value::String(s)) => s,
            Some(other) => return Err(format!("experiment: expected a string, got {other}")),
            None => return Err("missing required key: experiment".to_string()),
        };
        fn parse<T: serde::de::DeserializeOwned>(kind: &str, value: Value) -> Result<T, String> {
            serde_json::from_value(value).map_err(|e| format!("{kind}: {e}"))
        }
        match kind.as_str() {
            "capacity" => Ok(Job::Capacity(parse(&kind, value)?)),
            "sequential" => Ok(Job::Sequential(parse(&kind, value)?)),
            "pca" => Ok(Job::Pca(parse(&kind, value)?)),
            "repetition" => Ok(Job::Repetition(parse(&kind, value)?)),
            "dql" => Ok(Job::Dql(parse(&kind, value)?)),
            "ddpg" => Ok(Job::Ddpg(parse(&kind, value)?)),
            "gradcheck" => Ok(Job::Gradcheck(parse(&kind, value)?)),
            "paramcount" => Ok(Job::Paramcount(parse(&kind, value)?)),
            other => Err(format!(
                "unknown experiment kind {other:?}; expected one of {}",
                EXPERIMENT_KINDS.join(", ")
            )),
        }
    }

    pub fn from_str(text: &str) -> Result<Job, String> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| format!("configuration is not JSON: {e}"))?;
        Job::from_value(value)
    }

    /// Fully resolved document, defaults included, with the experiment
    /// tag restored. Parsing it back yields an identical `Job`.
    pub fn to_resolved_value(&self) -> Value {
        let mut value = match self {
            Job::Capacity(j) => serde_json::to_value(j),
            Job::Sequential(j) => serde_json::to_value(j),
            Job::Pca(j) => serde_json::to_value(j),
            Job::Repetition(j) => serde_json::to_value(j),
            Job::Dql(j) => serde_json::to_value(j),
            Job::Ddpg(j) => serde_json::to_value(j),
            Job::Gradcheck(j) => serde_json::to_value(j),
            Job::Paramcount(j) => serde_json::to_value(j),
        }
        .expect("experiment configs serialize infallibly");
        let object = value.as_object_mut().expect("configs are objects");
        object.insert(
            "experiment".to_string(),
            Value::String(self.kind().to_string()),
        );
        // Emit keys in a stable order with `experiment` first.
        let mut ordered = serde_json::Map::new();
        ordered.insert(
            "experiment".to_string(),
            object.remove("experiment").expect("just inserted"),
        );
        let mut keys: Vec<String> = object.keys().cloned().collect();
        keys.sort();
        for key in keys {
            let v = object.remove(&key).expect("key enumerated above");
            ordered.insert(key, v);
        }
        Value::Object(ordered)
    }

    pub fn to_resolved_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(&self.to_resolved_value())
            .expect("resolved configs serialize infallibly");
        text.push('\n');
        text
    }

    /// Replaces the seed list where the experiment has one.
    pub fn set_seeds(&mut self, seeds: Vec<u64>) -> Result<(), String> {
        match self {
            Job::Capacity(j) => j.seeds = seeds,
            Job::Sequential(j) => j.seeds = seeds,
            Job::Pca(j) => j.seeds = seeds,
            Job::Repetition(j) => j.seeds = seeds,
            Job::Dql(j) => j.seeds = seeds,
            Job::Ddpg(j) => j.seeds = seeds,
            Job::Gradcheck(j) => j.seeds = seeds,
            Job::Paramcount(_) => {
                return Err("paramcount takes no seeds".to_string());
            }
        }
        Ok(())
    }
}

/// Applies `key=value` overrides to the raw JSON document before schema
/// parsing. Values parse as JSON when possible and as strings otherwise.
pub fn apply_overrides(value: &mut Value, sets: &[String]) -> Result<(), String> {
    let object = value
        .as_object_mut()
        .ok_or_else(|| "configuration must be a JSON object".to_string())?;
    for set in sets {
        let Some((key, raw)) = set.split_once('=') else {
            return Err(format!("--set {set:?}: expected key=value"));
        };
        let parsed = serde_json::from_str::<Value>(raw)
            .unwrap_or_else(|_| Value::String(raw.to_string()));
        object.insert(key.to_string(), parsed);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_resolved_json() {
        for kind in EXPERIMENT_KINDS {
            let job = Job::default_for(kind).unwrap();
            let resolved = job.to_resolved_json();
            let reparsed = Job::from_str(&resolved).unwrap();
            assert_eq!(job, reparsed, "{kind} round trip");
            assert_eq!(reparsed.to_resolved_json(), resolved, "{kind} stability");
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = Job::from_str(r#"{"experiment":"capacity","boost":9}"#).unwrap_err();
        assert!(err.contains("boost"), "{err}");
        let err = Job::from_str(r#"{"experiment":"warp"}"#).unwrap_err();
        assert!(err.contains("unknown experiment kind"), "{err}");
        let err = Job::from_str(r#"{"seeds":[1]}"#).unwrap_err();
        assert!(err.contains("experiment"), "{err}");
    }

    #[test]
    fn rl_fields_parse_at_the_top_level() {
        let job = Job::from_str(
            r#"{"experiment":"dql","episodes":7,"gamma":0.9,"model":"mlp","clocked":false}"#,
        )
        .unwrap();
        let Job::Dql(dql) = job else { panic!("kind") };
        assert_eq!(dql.train_config().episodes, 7);
        assert_eq!(dql.train_config().gamma, 0.9);
        assert_eq!(dql.effective_hidden(), 573);
        let clocked = Job::from_str(r#"{"experiment":"dql"}"#).unwrap();
        let Job::Dql(dql) = clocked else { panic!("kind") };
        assert_eq!(dql.effective_hidden(), 64);
        let Job::Ddpg(ddpg) = Job::from_str(r#"{"experiment":"ddpg","model":"mlp"}"#).unwrap()
        else {
            panic!("kind")
        };
        assert_eq!(ddpg.effective_hidden(), 210);
        assert_eq!(ddpg.train_config().buffer_capacity, 20_000);
    }

    #[test]
    fn overrides_apply_before_parsing() {
        let mut value = serde_json::json!({"experiment": "sequential"});
        apply_overrides(
            &mut value,
            &["epochs=1".to_string(), "name=run-a".to_string()],
        )
        .unwrap();
        let Job::Sequential(job) = Job::from_value(value).unwrap() else {
            panic!("kind")
        };
        assert_eq!(job.epochs, 1);
        assert_eq!(job.name, "run-a");
        let mut value = serde_json::json!({"experiment": "sequential"});
        let err = apply_overrides(&mut value, &["epochs 1".to_string()]).unwrap_err();
        assert!(err.contains("key=value"));
    }
}
