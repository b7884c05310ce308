//! Sequential multi-task protocol: train on tasks strictly in order (no
//! access to earlier tasks' data) and track how performance on already
//! learned tasks degrades — the catastrophic-forgetting measurement.

use crate::error::{Error, Result};
use crate::experiments::data::ContinualTaskSuite;
use crate::experiments::models::ModelKind;
use crate::nn::Model;
use crate::optim::{mse_value, BatchCursor, BatchTarget, LrSchedule, Trainer};
use crate::report::{format_f64, CsvTable};
use crate::rng::RngStream;

/// Measurements taken after finishing one task.
#[derive(Clone, Debug)]
pub struct SequentialRecord {
    pub epoch: usize,
    /// Index of the task just trained.
    pub task: usize,
    /// Test losses of tasks `0..=task` within this epoch, in task order.
    pub test_losses: Vec<f64>,
    /// Mean of `test_losses` (the average testing loss).
    pub avg_test_loss: f64,
    /// Full train-set loss of the current task before its iterations.
    pub start_train_loss: f64,
    /// Full train-set loss of the current task after its iterations.
    pub end_train_loss: f64,
}

#[derive(Clone, Debug, Default)]
pub struct SequentialOutcome {
    pub records: Vec<SequentialRecord>,
}

impl SequentialOutcome {
    /// Average testing loss after the final task of an epoch.
    pub fn end_of_epoch_avg_loss(&self, epoch: usize) -> Option<f64> {
        self.records
            .iter()
            .filter(|r| r.epoch == epoch)
            .next_back()
            .map(|r| r.avg_test_loss)
    }
}

fn task_test_loss(model: &Model, suite: &ContinualTaskSuite, task: usize) -> Result<f64> {
    let t = &suite.tasks[task];
    mse_value(&model.predict(&t.test_inputs, None)?, &t.test_targets)
}

/// Runs the sequential protocol on an already built model. Optimizer
/// state is continuous across tasks and epochs; the learning rate follows
/// `schedule` per epoch. After each task, records the mean of test losses
/// over all tasks learned so far in the current epoch.
pub fn run_sequential_tasks(
    model: &mut Model,
    suite: &ContinualTaskSuite,
    epochs: usize,
    iters_per_task: usize,
    batch: usize,
    schedule: LrSchedule,
    stream: &mut RngStream,
) -> Result<SequentialOutcome> {
    if suite.tasks.is_empty() || epochs == 0 || iters_per_task == 0 {
        return Err(Error::InvalidConfig {
            detail: "sequential protocol needs tasks, epochs and iterations".to_string(),
        });
    }
    let mut trainer = Trainer::new(model, schedule.lr(0))?;
    let mut outcome = SequentialOutcome::default();
    for epoch in 0..epochs {
        trainer.set_lr(schedule.lr(epoch));
        for (task_index, task) in suite.tasks.iter().enumerate() {
            let start_train_loss = mse_value(
                &model.predict(&task.train_inputs, None)?,
                &task.train_targets,
            )?;
            let mut cursor = BatchCursor::new(task.train_inputs.shape()[0]);
            for _ in 0..iters_per_task {
                let idx = cursor.next_batch(batch, stream);
                let inputs = task.train_inputs.gather_rows(&idx)?;
                let targets = task.train_targets.gather_rows(&idx)?;
                trainer.step_batch(model, &inputs, &BatchTarget::Values(targets))?;
            }
            let end_train_loss = mse_value(
                &model.predict(&task.train_inputs, None)?,
                &task.train_targets,
            )?;
            let mut test_losses = Vec::with_capacity(task_index + 1);
            for learned in 0..=task_index {
                test_losses.push(task_test_loss(model, suite, learned)?);
            }
            let avg_test_loss = test_losses.iter().sum::<f64>() / test_losses.len() as f64;
            outcome.records.push(SequentialRecord {
                epoch,
                task: task_index,
                test_losses,
                avg_test_loss,
                start_train_loss,
                end_train_loss,
            });
        }
    }
    Ok(outcome)
}

/// Summary CSV: one row per (epoch, trained task).
pub fn sequential_summary_csv(runs: &[(String, ModelKind, SequentialOutcome)]) -> Result<CsvTable> {
    let mut table = CsvTable::new(&[
        "run_id",
        "model",
        "epoch",
        "task",
        "avg_test_loss",
        "start_train_loss",
        "end_train_loss",
    ]);
    for (run_id, kind, outcome) in runs {
        for r in &outcome.records {
            table.push_row(vec![
                run_id.clone(),
                kind.label().to_string(),
                r.epoch.to_string(),
                r.task.to_string(),
                format_f64(r.avg_test_loss),
                format_f64(r.start_train_loss),
                format_f64(r.end_train_loss),
            ])?;
        }
    }
    Ok(table)
}

/// Detail CSV: one row per (epoch, trained task, evaluated task).
pub fn sequential_detail_csv(runs: &[(String, ModelKind, SequentialOutcome)]) -> Result<CsvTable> {
    let mut table = CsvTable::new(&[
        "run_id",
        "model",
        "epoch",
        "trained_task",
        "eval_task",
        "test_loss",
    ]);
    for (run_id, kind, outcome) in runs {
        for r in &outcome.records {
            for (eval_task, loss) in r.test_losses.iter().enumerate() {
                table.push_row(vec![
                    run_id.clone(),
                    kind.label().to_string(),
                    r.epoch.to_string(),
                    r.task.to_string(),
                    eval_task.to_string(),
                    format_f64(*loss),
                ])?;
            }
        }
    }
    Ok(table)
}
