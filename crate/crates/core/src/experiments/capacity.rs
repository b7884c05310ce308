//! Memorisation-capacity experiment: train models of varying width on a
//! fixed random regression set and relate converged training loss to
//! trainable-parameter count.

use crate::error::Result;
use crate::experiments::data::RegressionDataset;
use crate::experiments::models::{capacity_config_dims, ModelKind};
use crate::nn::{count_parameters, Model};
use crate::optim::{train, Dataset, LrSchedule, TrainReport};
use crate::report::{format_f64, CsvTable};
use crate::rng::RngStream;

/// Result of one (kind, hidden, seed) training run.
#[derive(Clone, Debug)]
pub struct CapacityRun {
    pub kind: ModelKind,
    pub hidden: usize,
    pub params: usize,
    pub report: TrainReport,
    /// Mean training loss over the final `CONVERGENCE_WINDOW` epochs.
    pub converged_loss: f64,
}

/// Epochs averaged to define "converged" training loss.
pub const CONVERGENCE_WINDOW: usize = 50;

/// Trains one model for the capacity experiment. `stream` drives init,
/// shuffling, and nothing else; the dataset is shared across runs.
pub fn run_capacity(
    kind: ModelKind,
    hidden: usize,
    data: &RegressionDataset,
    epochs: usize,
    batch: usize,
    schedule: LrSchedule,
    stream: &mut RngStream,
) -> Result<CapacityRun> {
    let config = capacity_config_dims(
        kind,
        hidden,
        data.inputs.shape()[1],
        data.targets.shape()[1],
    );
    let params = count_parameters(&config)?;
    let mut model = Model::build(&config, &mut stream.split("init"))?;
    let report = train(
        &mut model,
        &Dataset::Regression {
            inputs: &data.inputs,
            targets: &data.targets,
        },
        epochs,
        batch,
        schedule,
        &mut stream.split("train"),
    )?;
    let epoch_losses = report.epoch_mean_losses();
    let k = CONVERGENCE_WINDOW.min(epoch_losses.len()).max(1);
    let converged_loss =
        epoch_losses[epoch_losses.len() - k..].iter().sum::<f64>() / k as f64;
    Ok(CapacityRun {
        kind,
        hidden,
        params,
        report,
        converged_loss,
    })
}

/// Sweeps a list of hidden sizes for one kind.
pub fn run_capacity_sweep(
    kind: ModelKind,
    hidden_sizes: &[usize],
    data: &RegressionDataset,
    epochs: usize,
    batch: usize,
    schedule: LrSchedule,
    stream: &mut RngStream,
) -> Result<Vec<CapacityRun>> {
    hidden_sizes
        .iter()
        .map(|&h| {
            run_capacity(
                kind,
                h,
                data,
                epochs,
                batch,
                schedule,
                &mut stream.split_indexed("hidden", h as u64),
            )
        })
        .collect()
}

/// Summary CSV: one row per run.
pub fn capacity_summary_csv(runs: &[(String, CapacityRun)]) -> Result<CsvTable> {
    let mut table = CsvTable::new(&["run_id", "model", "hidden", "params", "converged_loss"]);
    for (run_id, run) in runs {
        table.push_row(vec![
            run_id.clone(),
            run.kind.label().to_string(),
            run.hidden.to_string(),
            run.params.to_string(),
            format_f64(run.converged_loss),
        ])?;
    }
    Ok(table)
}

/// Loss-curve CSV: one row per training iteration per run.
pub fn capacity_curves_csv(runs: &[(String, CapacityRun)]) -> Result<CsvTable> {
    let mut table = CsvTable::new(&[
        "run_id", "model", "hidden", "params", "epoch", "iteration", "wall_ms", "loss",
    ]);
    for (run_id, run) in runs {
        for i in 0..run.report.losses.len() {
            table.push_row(vec![
                run_id.clone(),
                run.kind.label().to_string(),
                run.hidden.to_string(),
                run.params.to_string(),
                run.report.epochs[i].to_string(),
                i.to_string(),
                format_f64(run.report.wall_ms[i]),
                format_f64(run.report.losses[i]),
            ])?;
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::data::gen_regression;

    #[test]
    fn tiny_capacity_run_produces_consistent_artifacts() {
        let s = RngStream::new(21);
        let data = gen_regression(40, 16, 16, &mut s.split("data")).unwrap();
        let run = run_capacity(
            ModelKind::Mlp,
            32,
            &data,
            4,
            20,
            LrSchedule::supervised_default(),
            &mut s.split("run"),
        )
        .unwrap();
        assert_eq!(run.params, 33 * 32 + 16);
        // 40 samples / batch 20 = 2 iterations per epoch, 4 epochs.
        assert_eq!(run.report.iterations(), 8);
        // Convergence window caps at the number of epochs available.
        let epoch_means = run.report.epoch_mean_losses();
        let expect = epoch_means.iter().sum::<f64>() / epoch_means.len() as f64;
        assert!((run.converged_loss - expect).abs() < 1e-12);

        let runs = vec![("mlp-h32-s21".to_string(), run)];
        let summary = capacity_summary_csv(&runs).unwrap();
        assert_eq!(summary.rows.len(), 1);
        let curves = capacity_curves_csv(&runs).unwrap();
        assert_eq!(curves.rows.len(), 8);
        assert_eq!(
            curves.header,
            vec!["run_id", "model", "hidden", "params", "epoch", "iteration", "wall_ms", "loss"]
        );
    }

    #[test]
    fn sweep_repeats_bitwise_from_the_same_seed() {
        let data = gen_regression(20, 16, 16, &mut RngStream::new(22)).unwrap();
        let a = run_capacity_sweep(
            ModelKind::Bundle,
            &[4, 6],
            &data,
            2,
            10,
            LrSchedule::supervised_default(),
            &mut RngStream::new(23),
        )
        .unwrap();
        let b = run_capacity_sweep(
            ModelKind::Bundle,
            &[4, 6],
            &data,
            2,
            10,
            LrSchedule::supervised_default(),
            &mut RngStream::new(23),
        )
        .unwrap();
        for (ra, rb) in a.iter().zip(&b) {
            assert_eq!(ra.report.losses, rb.report.losses);
            assert_eq!(ra.converged_loss.to_bits(), rb.converged_loss.to_bits());
        }
    }
}
