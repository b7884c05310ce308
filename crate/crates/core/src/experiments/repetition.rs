//! Spaced-repetition protocol: alternate "learn until perfect recall"
//! periods with fixed-length "decay" periods of training on pure noise,
//! tracking how recall erodes and how quickly it can be restored.

use crate::error::{Error, Result};
use crate::experiments::data::ClassificationSuite;
use crate::experiments::models::ModelKind;
use crate::nn::Model;
use crate::optim::{recall_is_full, recall_rate, BatchCursor, BatchTarget, Trainer};
use crate::report::{format_f64, CsvTable};
use crate::rng::RngStream;
use crate::tensor::Tensor;

/// Row-chunk size used for the early-exit full-recall check.
const RECALL_CHUNK: usize = 500;

/// Protocol settings.
#[derive(Clone, Copy, Debug)]
pub struct RepetitionConfig {
    /// Number of learn/decay repetitions.
    pub repetitions: usize,
    /// Iteration cap for each learning period; hitting it without full
    /// recall marks the repetition as censored.
    pub max_learn_iters: usize,
    /// Fixed length of each decay period.
    pub decay_iters: usize,
    pub batch: usize,
    pub lr: f64,
}

impl Default for RepetitionConfig {
    fn default() -> Self {
        RepetitionConfig {
            repetitions: 5,
            max_learn_iters: 501,
            decay_iters: 501,
            batch: 100,
            lr: 1e-3,
        }
    }
}

/// One repetition's measurements.
#[derive(Clone, Debug)]
pub struct RepetitionRecord {
    /// 1-based repetition index.
    pub repetition: usize,
    /// Training iterations needed to reach 100% recall (0 if already
    /// perfect at period start).
    pub relearn_steps: usize,
    /// True if the learning period hit its cap below 100% recall.
    pub censored: bool,
    /// Recall on the full training set: index 0 is measured at decay
    /// start, then one entry per decay iteration.
    pub decay_recall: Vec<f64>,
}

impl RepetitionRecord {
    pub fn end_decay_recall(&self) -> f64 {
        *self.decay_recall.last().expect("decay curve never empty")
    }
}

#[derive(Clone, Debug, Default)]
pub struct RepetitionOutcome {
    pub records: Vec<RepetitionRecord>,
}

/// Runs the protocol on an already built classification model. Optimizer
/// state is continuous across periods and repetitions; the learning rate
/// is constant.
pub fn run_spaced_repetition(
    model: &mut Model,
    suite: &ClassificationSuite,
    config: &RepetitionConfig,
    stream: &mut RngStream,
) -> Result<RepetitionOutcome> {
    if config.repetitions == 0 || config.batch == 0 {
        return Err(Error::InvalidConfig {
            detail: "repetition protocol needs positive repetitions and batch".to_string(),
        });
    }
    let n = suite.inputs.shape()[0];
    let input_dim = suite.inputs.shape()[1];
    let mut trainer = Trainer::new(model, config.lr)?;
    let mut cursor = BatchCursor::new(n);
    let mut noise_stream = stream.split("noise");
    let mut outcome = RepetitionOutcome::default();

    for repetition in 1..=config.repetitions {
        // Learning period: train on real data until recall is perfect.
        let mut relearn_steps = 0;
        let mut censored = false;
        while !recall_is_full(model, &suite.inputs, &suite.labels, RECALL_CHUNK)? {
            if relearn_steps >= config.max_learn_iters {
                censored = true;
                break;
            }
            let idx = cursor.next_batch(config.batch, stream);
            let inputs = suite.inputs.gather_rows(&idx)?;
            let labels: Vec<usize> = idx.iter().map(|&i| suite.labels[i]).collect();
            trainer.step_batch(model, &inputs, &BatchTarget::Labels(labels))?;
            relearn_steps += 1;
        }

        // Decay period: train on fresh noise, measuring recall each step.
        let mut decay_recall = Vec::with_capacity(config.decay_iters + 1);
        decay_recall.push(recall_rate(model, &suite.inputs, &suite.labels)?);
        for _ in 0..config.decay_iters {
            let noise = Tensor::rand_normal(&[config.batch, input_dim], &mut noise_stream)?;
            let labels = (0..config.batch)
                .map(|_| noise_stream.index(suite.classes))
                .collect::<Result<Vec<usize>>>()?;
            trainer.step_batch(model, &noise, &BatchTarget::Labels(labels))?;
            decay_recall.push(recall_rate(model, &suite.inputs, &suite.labels)?);
        }

        outcome.records.push(RepetitionRecord {
            repetition,
            relearn_steps,
            censored,
            decay_recall,
        });
    }
    Ok(outcome)
}

/// Decay-curve CSV: one row per decay measurement.
pub fn repetition_curves_csv(
    runs: &[(String, ModelKind, RepetitionOutcome)],
) -> Result<CsvTable> {
    let mut table = CsvTable::new(&["run_id", "model", "repetition", "iteration", "recall"]);
    for (run_id, kind, outcome) in runs {
        for record in &outcome.records {
            for (iteration, recall) in record.decay_recall.iter().enumerate() {
                table.push_row(vec![
                    run_id.clone(),
                    kind.label().to_string(),
                    record.repetition.to_string(),
                    iteration.to_string(),
                    format_f64(*recall),
                ])?;
            }
        }
    }
    Ok(table)
}

/// Relearn-step CSV: one row per repetition.
pub fn repetition_summary_csv(
    runs: &[(String, ModelKind, RepetitionOutcome)],
) -> Result<CsvTable> {
    let mut table = CsvTable::new(&[
        "run_id",
        "model",
        "repetition",
        "relearn_steps",
        "censored",
        "end_decay_recall",
    ]);
    for (run_id, kind, outcome) in runs {
        for record in &outcome.records {
            table.push_row(vec![
                run_id.clone(),
                kind.label().to_string(),
                record.repetition.to_string(),
                record.relearn_steps.to_string(),
                (record.censored as u8).to_string(),
                format_f64(record.end_decay_recall()),
            ])?;
        }
    }
    Ok(table)
}
