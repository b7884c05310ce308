//! Executes experiments and materializes their artifacts: one directory
//! per run holding `config.resolved.json`, one CSV per metric stream,
//! SVG plots, and a hash manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use bundlenet::error::{Error, Result};
use bundlenet::experiments::{
    capacity_curves_csv, capacity_summary_csv, classification_config, gen_classification,
    gen_continual_tasks, gen_regression, pca_embedding_csv, pca_interpretors, pca_summary_csv,
    repetition_curves_csv, repetition_summary_csv, run_capacity_sweep, run_sequential_tasks,
    run_spaced_repetition, sequential_config, sequential_detail_csv, sequential_summary_csv,
    CapacityRun, PcaOutcome, RepetitionConfig, RepetitionOutcome, SequentialOutcome,
};
use bundlenet::experiments::models::{
    actor_config, canonical_architectures, capacity_config, critic_config, q_network_config,
    ModelKind,
};
use bundlenet::nn::{count_parameters, Model};
use bundlenet::optim::{model_grad_check, GradCheckLoss, LrSchedule};
use bundlenet::report::{format_f64, moving_average, CsvTable};
use bundlenet::rl::{ddpg_train, dql_train, rl_curve_csv, rl_summary_csv, RlOutcome, OBS_DIM};
use bundlenet::rng::RngStream;
use bundlenet::tensor::Tensor;

use crate::config::{
    CapacityJob, DdpgJob, DqlJob, GradcheckJob, Job, PcaJob, RepetitionJob, SequentialJob,
};
use crate::manifest::write_manifest;
use crate::plot::{aggregate_band, line_chart, scatter_chart, ChartSpec, ScatterGroup, Series};

pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.json";

/// Upper bound of the learnable bioclock period in the control tasks
/// (the lower bound is fixed at 1 inside the model builders).
pub const RL_CLOCK_T_MAX: f64 = 1e4;

/// CSV files an experiment produces, in write order.
pub fn table_file_names(job: &Job) -> Vec<&'static str> {
    match job {
        Job::Capacity(_) => vec!["capacity_summary.csv", "capacity_curves.csv"],
        Job::Sequential(_) => vec!["sequential_summary.csv", "sequential_detail.csv"],
        Job::Pca(_) => vec!["pca_embedding.csv", "pca_summary.csv"],
        Job::Repetition(_) => vec!["repetition_curves.csv", "repetition_summary.csv"],
        Job::Dql(_) | Job::Ddpg(_) => vec!["rl_curve.csv", "rl_summary.csv"],
        Job::Gradcheck(_) => vec!["gradcheck.csv"],
        Job::Paramcount(_) => vec!["paramcount.csv"],
    }
}

/// Runs per-seed work on scoped threads and returns results in seed
/// order, so merged outputs never depend on scheduling.
fn fan_out<T, F>(seeds: &[u64], work: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    let work = &work;
    std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| scope.spawn(move || work(seed)))
            .collect();
        handles
            .into_iter()
            .map(|handle| match handle.join() {
                Ok(result) => result,
                Err(panic) => std::panic::resume_unwind(panic),
            })
            .collect()
    })
}

fn schedule(lr: f64, decay: f64) -> LrSchedule {
    LrSchedule::ExpDecay { base: lr, decay }
}

// ---------------------------------------------------------------------
// Experiment bodies: produce the CSV tables.
// ---------------------------------------------------------------------

fn capacity_tables(job: &CapacityJob) -> Result<Vec<CsvTable>> {
    let per_seed = fan_out(&job.seeds, |seed| {
        let base = RngStream::new(seed);
        let data = gen_regression(job.samples, job.dim, job.dim, &mut base.split("data"))?;
        let mut runs: Vec<(String, CapacityRun)> = Vec::new();
        for kind in job.model.kinds() {
            let hidden = match kind {
                ModelKind::Bundle => &job.bundle_hidden,
                ModelKind::Mlp => &job.mlp_hidden,
            };
            let sweep = run_capacity_sweep(
                kind,
                hidden,
                &data,
                job.epochs,
                job.batch,
                schedule(job.lr, job.lr_decay),
                &mut base.split(kind.label()),
            )?;
            for run in sweep {
                let run_id = format!("{}-h{}-seed{}", kind.label(), run.hidden, seed);
                runs.push((run_id, run));
            }
        }
        Ok(runs)
    })?;
    let merged: Vec<(String, CapacityRun)> = per_seed.into_iter().flatten().collect();
    Ok(vec![
        capacity_summary_csv(&merged)?,
        capacity_curves_csv(&merged)?,
    ])
}

fn sequential_run_one(
    job: &SequentialJob,
    seed: u64,
) -> Result<Vec<(String, ModelKind, SequentialOutcome)>> {
    let base = RngStream::new(seed);
    let suite = gen_continual_tasks(
        job.tasks,
        job.noise_dim,
        job.input_dim,
        job.output_dim,
        job.train_size,
        job.test_size,
        &mut base.split("data"),
    )?;
    let mut outcomes = Vec::new();
    for kind in job.model.kinds() {
        let hidden = match kind {
            ModelKind::Bundle => job.bundle_hidden,
            ModelKind::Mlp => job.mlp_hidden,
        };
        let kind_stream = base.split(kind.label());
        let mut model =
            Model::build(&sequential_config(kind, hidden), &mut kind_stream.split("init"))?;
        let outcome = run_sequential_tasks(
            &mut model,
            &suite,
            job.epochs,
            job.iters_per_task,
            job.batch,
            schedule(job.lr, job.lr_decay),
            &mut kind_stream.split("train"),
        )?;
        outcomes.push((format!("{}-seed{}", kind.label(), seed), kind, outcome));
    }
    Ok(outcomes)
}

fn sequential_tables(job: &SequentialJob) -> Result<Vec<CsvTable>> {
    let per_seed = fan_out(&job.seeds, |seed| sequential_run_one(job, seed))?;
    let merged: Vec<(String, ModelKind, SequentialOutcome)> =
        per_seed.into_iter().flatten().collect();
    Ok(vec![
        sequential_summary_csv(&merged)?,
        sequential_detail_csv(&merged)?,
    ])
}

fn pca_tables(job: &PcaJob) -> Result<Vec<CsvTable>> {
    let per_seed = fan_out(&job.seeds, |seed| {
        let base = RngStream::new(seed);
        let suite = gen_continual_tasks(
            job.tasks,
            job.noise_dim,
            job.input_dim,
            job.output_dim,
            job.train_size,
            job.test_size,
            &mut base.split("data"),
        )?;
        let kind_stream = base.split(ModelKind::Bundle.label());
        let mut model = Model::build(
            &sequential_config(ModelKind::Bundle, job.bundle_hidden),
            &mut kind_stream.split("init"),
        )?;
        run_sequential_tasks(
            &mut model,
            &suite,
            job.epochs,
            job.iters_per_task,
            job.batch,
            schedule(job.lr, job.lr_decay),
            &mut kind_stream.split("train"),
        )?;
        let outcome = pca_interpretors(&model, &suite, job.samples_per_task)?;
        Ok((format!("bundle-seed{seed}"), outcome))
    })?;
    let merged: Vec<(String, PcaOutcome)> = per_seed;
    Ok(vec![pca_embedding_csv(&merged)?, pca_summary_csv(&merged)?])
}

fn repetition_tables(job: &RepetitionJob) -> Result<Vec<CsvTable>> {
    let config = RepetitionConfig {
        repetitions: job.repetitions,
        max_learn_iters: job.max_learn_iters,
        decay_iters: job.decay_iters,
        batch: job.batch,
        lr: job.lr,
    };
    let per_seed = fan_out(&job.seeds, |seed| {
        let base = RngStream::new(seed);
        let suite = gen_classification(
            job.classes,
            job.samples_per_class,
            job.noise_dim,
            job.input_dim,
            &mut base.split("data"),
        )?;
        let mut outcomes = Vec::new();
        for kind in job.model.kinds() {
            let hidden = match kind {
                ModelKind::Bundle => job.bundle_hidden,
                ModelKind::Mlp => job.mlp_hidden,
            };
            let kind_stream = base.split(kind.label());
            let mut model = Model::build(
                &classification_config(kind, hidden),
                &mut kind_stream.split("init"),
            )?;
            let outcome = run_spaced_repetition(
                &mut model,
                &suite,
                &config,
                &mut kind_stream.split("train"),
            )?;
            outcomes.push((format!("{}-seed{}", kind.label(), seed), kind, outcome));
        }
        Ok(outcomes)
    })?;
    let merged: Vec<(String, ModelKind, RepetitionOutcome)> =
        per_seed.into_iter().flatten().collect();
    Ok(vec![
        repetition_curves_csv(&merged)?,
        repetition_summary_csv(&merged)?,
    ])
}

fn dql_tables(job: &DqlJob) -> Result<Vec<CsvTable>> {
    let train = job.train_config();
    let per_seed = fan_out(&job.seeds, |seed| {
        let config = q_network_config(
            job.model,
            job.clocked,
            OBS_DIM,
            3,
            job.effective_hidden(),
            RL_CLOCK_T_MAX,
        );
        let base = RngStream::new(seed);
        let mut model = Model::build(&config, &mut base.split("init"))?;
        let outcome = dql_train(&mut model, &train, &mut base.split("train"))?;
        Ok((format!("{}-seed{}", job.label(), seed), outcome))
    })?;
    let merged: Vec<(String, RlOutcome)> = per_seed;
    Ok(vec![rl_curve_csv(&merged)?, rl_summary_csv(&merged)?])
}

fn ddpg_tables(job: &DdpgJob) -> Result<Vec<CsvTable>> {
    let train = job.train_config();
    let per_seed = fan_out(&job.seeds, |seed| {
        let hidden = job.effective_hidden();
        let t_max = RL_CLOCK_T_MAX;
        let base = RngStream::new(seed);
        let init = base.split("init");
        let mut actor = Model::build(
            &actor_config(job.model, job.clocked, OBS_DIM, hidden, t_max),
            &mut init.split("actor"),
        )?;
        let mut critic = Model::build(
            &critic_config(job.model, job.clocked, OBS_DIM, 1, hidden, t_max),
            &mut init.split("critic"),
        )?;
        let outcome = ddpg_train(&mut actor, &mut critic, &train, &mut base.split("train"))?;
        Ok((format!("{}-seed{}", job.label(), seed), outcome))
    })?;
    let merged: Vec<(String, RlOutcome)> = per_seed;
    Ok(vec![rl_curve_csv(&merged)?, rl_summary_csv(&merged)?])
}

/// The audited model stacks: every layer kind, with and without a
/// bioclock, under both loss kinds. The second element scales the
/// finite-difference step: the clock's small-period sine has third
/// derivatives of order `(2πt/T²)³`, so its step must shrink to keep
/// truncation error below the threshold.
pub fn gradcheck_cases() -> Vec<(&'static str, f64)> {
    vec![
        ("bundle-stack-mse", 1.0),
        ("bundle-clock-stack-mse", 0.1),
        ("mlp-classifier-nll", 1.0),
        ("capacity-pair-mse", 1.0),
    ]
}

fn gradcheck_case(
    name: &str,
    eps_factor: f64,
    job: &GradcheckJob,
    seed: u64,
) -> Result<(usize, f64, bool)> {
    let base = RngStream::new(seed);
    let mut data_stream = base.split("data");
    let (mut model, inputs, time, loss) = match name {
        "bundle-stack-mse" => {
            let config = q_network_config(ModelKind::Bundle, false, 6, 3, 5, 50.0);
            let model = Model::build(&config, &mut base.split("init"))?;
            let inputs = Tensor::rand_normal(&[job.batch, 6], &mut data_stream)?;
            let target = Tensor::rand_normal(&[job.batch, 3], &mut data_stream)?;
            (model, inputs, None, GradCheckLoss::Mse(target))
        }
        "bundle-clock-stack-mse" => {
            let config = q_network_config(ModelKind::Bundle, true, 6, 3, 5, 50.0);
            let model = Model::build(&config, &mut base.split("init"))?;
            let inputs = Tensor::rand_normal(&[job.batch, 6], &mut data_stream)?;
            let times: Vec<f64> = (0..job.batch).map(|i| (7 * i % 50) as f64).collect();
            let time = Tensor::new(vec![job.batch, 1], times)?;
            let target = Tensor::rand_normal(&[job.batch, 3], &mut data_stream)?;
            (model, inputs, Some(time), GradCheckLoss::Mse(target))
        }
        "mlp-classifier-nll" => {
            let config = classification_config(ModelKind::Mlp, 9);
            let model = Model::build(&config, &mut base.split("init"))?;
            let inputs = Tensor::rand_normal(&[job.batch, 16], &mut data_stream)?;
            let labels = (0..job.batch)
                .map(|_| data_stream.index(20))
                .collect::<Result<Vec<usize>>>()?;
            (model, inputs, None, GradCheckLoss::Nll(labels))
        }
        "capacity-pair-mse" => {
            let config = capacity_config(ModelKind::Bundle, 5);
            let model = Model::build(&config, &mut base.split("init"))?;
            let inputs = Tensor::rand_normal(&[job.batch, 16], &mut data_stream)?;
            let target = Tensor::rand_normal(&[job.batch, 16], &mut data_stream)?;
            (model, inputs, None, GradCheckLoss::Mse(target))
        }
        other => {
            return Err(Error::InvalidConfig {
                detail: format!("unknown gradcheck case {other:?}"),
            })
        }
    };
    let report = model_grad_check(
        &mut model,
        &inputs,
        time.as_ref(),
        &loss,
        job.eps * eps_factor,
        job.threshold,
    )?;
    Ok((report.checked, report.max_rel_err, report.passed()))
}

/// One row per (seed, case): elements checked, worst relative error,
/// verdict.
pub fn gradcheck_table(job: &GradcheckJob) -> Result<CsvTable> {
    let mut table = CsvTable::new(&["run_id", "check", "checked", "max_rel_err", "passed"]);
    for &seed in &job.seeds {
        for (name, eps_factor) in gradcheck_cases() {
            let (checked, max_rel_err, passed) = gradcheck_case(name, eps_factor, job, seed)?;
            table.push_row(vec![
                format!("seed{seed}"),
                name.to_string(),
                checked.to_string(),
                format_f64(max_rel_err),
                passed.to_string(),
            ])?;
        }
    }
    Ok(table)
}

/// Parameter counts of the eight reference architectures.
pub fn paramcount_table() -> Result<CsvTable> {
    let mut table = CsvTable::new(&["architecture", "params"]);
    for (name, config, expected) in canonical_architectures() {
        let params = count_parameters(&config)?;
        debug_assert_eq!(params, expected);
        table.push_row(vec![name.to_string(), params.to_string()])?;
    }
    Ok(table)
}

fn job_tables(job: &Job) -> Result<Vec<CsvTable>> {
    match job {
        Job::Capacity(j) => capacity_tables(j),
        Job::Sequential(j) => sequential_tables(j),
        Job::Pca(j) => pca_tables(j),
        Job::Repetition(j) => repetition_tables(j),
        Job::Dql(j) => dql_tables(j),
        Job::Ddpg(j) => ddpg_tables(j),
        Job::Gradcheck(j) => Ok(vec![gradcheck_table(j)?]),
        Job::Paramcount(_) => Ok(vec![paramcount_table()?]),
    }
}

// ---------------------------------------------------------------------
// Plot builders: SVGs from the CSV tables.
// ---------------------------------------------------------------------

/// Ordered unique values of a string column.
fn unique_ordered(values: &[String]) -> Vec<String> {
    let mut seen = Vec::new();
    for v in values {
        if !seen.contains(v) {
            seen.push(v.clone());
        }
    }
    seen
}

fn capacity_plots(job: &CapacityJob, tables: &[CsvTable]) -> Result<Vec<(String, String)>> {
    let summary = &tables[0];
    let curves = &tables[1];
    let mut plots = Vec::new();

    // Converged loss against parameter count, band = min/max over seeds.
    let models = summary.column_str("model", "capacity_summary.csv")?;
    let hidden = summary.column_f64("hidden", "capacity_summary.csv")?;
    let params = summary.column_f64("params", "capacity_summary.csv")?;
    let losses = summary.column_f64("converged_loss", "capacity_summary.csv")?;
    let mut sweep_series = Vec::new();
    for kind in unique_ordered(&models) {
        // hidden -> (params, losses over seeds)
        let mut grouped: BTreeMap<u64, (f64, Vec<f64>)> = BTreeMap::new();
        for i in 0..models.len() {
            if models[i] == kind {
                let entry = grouped
                    .entry(hidden[i] as u64)
                    .or_insert((params[i], Vec::new()));
                entry.1.push(losses[i]);
            }
        }
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        for (_, (p, seed_losses)) in grouped {
            xs.push(p);
            ys.push(seed_losses.iter().sum::<f64>() / seed_losses.len() as f64);
            lo.push(seed_losses.iter().cloned().fold(f64::INFINITY, f64::min));
            hi.push(seed_losses.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        }
        sweep_series.push(Series::new(kind, xs, ys).with_band(lo, hi));
    }
    plots.push((
        "capacity_sweep.svg".to_string(),
        line_chart(
            &ChartSpec::new(
                "Converged reconstruction loss vs parameter count",
                "parameters",
                "converged MSE",
            ),
            &sweep_series,
        )?,
    ));

    // Training curves of the widest configuration per family.
    let models = curves.column_str("model", "capacity_curves.csv")?;
    let hidden = curves.column_f64("hidden", "capacity_curves.csv")?;
    let run_ids = curves.column_str("run_id", "capacity_curves.csv")?;
    let epochs = curves.column_f64("epoch", "capacity_curves.csv")?;
    let losses = curves.column_f64("loss", "capacity_curves.csv")?;
    let mut curve_series = Vec::new();
    for kind in unique_ordered(&models) {
        let widest = (0..models.len())
            .filter(|&i| models[i] == kind)
            .map(|i| hidden[i] as u64)
            .max()
            .ok_or_else(|| Error::EmptySeries {
                detail: format!("no curve rows for model {kind}"),
            })?;
        // run_id -> per-epoch (sum, count)
        let mut per_run: BTreeMap<String, Vec<(f64, usize)>> = BTreeMap::new();
        for i in 0..models.len() {
            if models[i] == kind && hidden[i] as u64 == widest {
                let epoch = epochs[i] as usize;
                let acc = per_run.entry(run_ids[i].clone()).or_default();
                if acc.len() <= epoch {
                    acc.resize(epoch + 1, (0.0, 0));
                }
                acc[epoch].0 += losses[i];
                acc[epoch].1 += 1;
            }
        }
        let smoothed: Vec<Vec<f64>> = per_run
            .values()
            .map(|acc| {
                let means: Vec<f64> = acc.iter().map(|(s, c)| s / (*c).max(1) as f64).collect();
                moving_average(&means, job.smoothing_window)
            })
            .collect();
        let (mean, lo, hi) = aggregate_band(&smoothed)?;
        let xs: Vec<f64> = (0..mean.len()).map(|e| e as f64).collect();
        curve_series.push(
            Series::new(format!("{kind} h{widest}"), xs, mean).with_band(lo, hi),
        );
    }
    plots.push((
        "capacity_curves.svg".to_string(),
        line_chart(
            &ChartSpec::new(
                "Training loss (epoch mean, smoothed)",
                "epoch",
                "MSE",
            ),
            &curve_series,
        )?,
    ));
    Ok(plots)
}

fn sequential_plots(tables: &[CsvTable]) -> Result<Vec<(String, String)>> {
    let summary = &tables[0];
    let origin = "sequential_summary.csv";
    let models = summary.column_str("model", origin)?;
    let run_ids = summary.column_str("run_id", origin)?;
    let epochs = summary.column_f64("epoch", origin)?;
    let tasks = summary.column_f64("task", origin)?;
    let avg_losses = summary.column_f64("avg_test_loss", origin)?;
    let mut series = Vec::new();
    for kind in unique_ordered(&models) {
        let mut per_run: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
        for i in 0..models.len() {
            if models[i] == kind && epochs[i] == 0.0 {
                per_run
                    .entry(run_ids[i].clone())
                    .or_default()
                    .push((tasks[i], avg_losses[i]));
            }
        }
        let ys: Vec<Vec<f64>> = per_run
            .values()
            .map(|points| {
                let mut sorted = points.clone();
                sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
                sorted.into_iter().map(|(_, l)| l).collect()
            })
            .collect();
        let (mean, lo, hi) = aggregate_band(&ys)?;
        let xs: Vec<f64> = (0..mean.len()).map(|t| t as f64).collect();
        series.push(Series::new(kind, xs, mean).with_band(lo, hi));
    }
    Ok(vec![(
        "sequential_forgetting.svg".to_string(),
        line_chart(
            &ChartSpec::new(
                "Average test loss over tasks seen so far (first epoch)",
                "tasks trained",
                "avg test MSE",
            ),
            &series,
        )?,
    )])
}

fn pca_plots(tables: &[CsvTable]) -> Result<Vec<(String, String)>> {
    let embedding = &tables[0];
    let origin = "pca_embedding.csv";
    let run_ids = embedding.column_str("run_id", origin)?;
    let tasks = embedding.column_f64("task", origin)?;
    let xs = embedding.column_f64("x", origin)?;
    let ys = embedding.column_f64("y", origin)?;
    let first_run = run_ids.first().cloned().ok_or_else(|| Error::EmptySeries {
        detail: "pca embedding has no rows".to_string(),
    })?;
    let mut grouped: BTreeMap<u64, Vec<(f64, f64)>> = BTreeMap::new();
    for i in 0..run_ids.len() {
        if run_ids[i] == first_run {
            grouped
                .entry(tasks[i] as u64)
                .or_default()
                .push((xs[i], ys[i]));
        }
    }
    let groups: Vec<ScatterGroup> = grouped
        .into_iter()
        .map(|(task, points)| ScatterGroup {
            label: format!("task {task}"),
            points,
        })
        .collect();
    Ok(vec![(
        "pca_scatter.svg".to_string(),
        scatter_chart(
            &ChartSpec::new(
                format!("Interpretor PCA ({first_run})"),
                "PC 1",
                "PC 2",
            ),
            &groups,
        )?,
    )])
}

fn repetition_plots(job: &RepetitionJob, tables: &[CsvTable]) -> Result<Vec<(String, String)>> {
    let curves = &tables[0];
    let summary = &tables[1];
    let mut plots = Vec::new();

    let origin = "repetition_curves.csv";
    let models = curves.column_str("model", origin)?;
    let run_ids = curves.column_str("run_id", origin)?;
    let reps = curves.column_f64("repetition", origin)?;
    let recalls = curves.column_f64("recall", origin)?;
    let max_rep = reps.iter().cloned().fold(1.0, f64::max) as u64;
    let shown: Vec<u64> = if max_rep > 1 { vec![1, max_rep] } else { vec![1] };
    let mut series = Vec::new();
    for kind in unique_ordered(&models) {
        for &rep in &shown {
            let mut per_run: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for i in 0..models.len() {
                if models[i] == kind && reps[i] as u64 == rep {
                    per_run.entry(run_ids[i].clone()).or_default().push(recalls[i]);
                }
            }
            let smoothed: Vec<Vec<f64>> = per_run
                .values()
                .map(|ys| moving_average(ys, job.recall_window))
                .collect();
            let (mean, lo, hi) = aggregate_band(&smoothed)?;
            let xs: Vec<f64> = (0..mean.len()).map(|i| i as f64).collect();
            series.push(
                Series::new(format!("{kind} rep {rep}"), xs, mean).with_band(lo, hi),
            );
        }
    }
    plots.push((
        "repetition_recall.svg".to_string(),
        line_chart(
            &ChartSpec::new(
                "Recall during decay periods",
                "decay iteration",
                "recall",
            ),
            &series,
        )?,
    ));

    let origin = "repetition_summary.csv";
    let models = summary.column_str("model", origin)?;
    let run_ids = summary.column_str("run_id", origin)?;
    let reps = summary.column_f64("repetition", origin)?;
    let steps = summary.column_f64("relearn_steps", origin)?;
    let mut series = Vec::new();
    for kind in unique_ordered(&models) {
        let mut per_run: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
        for i in 0..models.len() {
            if models[i] == kind {
                per_run
                    .entry(run_ids[i].clone())
                    .or_default()
                    .push((reps[i], steps[i]));
            }
        }
        let ys: Vec<Vec<f64>> = per_run
            .values()
            .map(|points| {
                let mut sorted = points.clone();
                sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
                let raw: Vec<f64> = sorted.into_iter().map(|(_, s)| s).collect();
                moving_average(&raw, job.relearn_window)
            })
            .collect();
        let (mean, lo, hi) = aggregate_band(&ys)?;
        let xs: Vec<f64> = (1..=mean.len()).map(|r| r as f64).collect();
        series.push(Series::new(kind, xs, mean).with_band(lo, hi));
    }
    plots.push((
        "repetition_relearn.svg".to_string(),
        line_chart(
            &ChartSpec::new(
                "Steps to full recall per repetition (smoothed)",
                "repetition",
                "relearn steps",
            ),
            &series,
        )?,
    ));
    Ok(plots)
}

fn rl_plots(smoothing_window: usize, tables: &[CsvTable]) -> Result<Vec<(String, String)>> {
    let curve = &tables[0];
    let origin = "rl_curve.csv";
    let run_ids = curve.column_str("run_id", origin)?;
    let episodes = curve.column_f64("episode", origin)?;
    let train = curve.column_f64("train_reward", origin)?;
    let eval_mean = curve.column_f64("eval_reward_mean", origin)?;
    let mut eval_per_run: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut train_per_run: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut xs = Vec::new();
    for i in 0..run_ids.len() {
        eval_per_run
            .entry(run_ids[i].clone())
            .or_default()
            .push(eval_mean[i]);
        train_per_run
            .entry(run_ids[i].clone())
            .or_default()
            .push(train[i]);
        if run_ids[i] == run_ids[0] {
            xs.push(episodes[i]);
        }
    }
    let eval_series: Vec<Vec<f64>> = eval_per_run.values().cloned().collect();
    let (eval_mean_curve, eval_lo, eval_hi) = aggregate_band(&eval_series)?;
    let train_series: Vec<Vec<f64>> = train_per_run
        .values()
        .map(|ys| moving_average(ys, smoothing_window))
        .collect();
    let (train_mean_curve, _, _) = aggregate_band(&train_series)?;
    let series = vec![
        Series::new("eval reward (mean over seeds)", xs.clone(), eval_mean_curve)
            .with_band(eval_lo, eval_hi),
        Series::new("train reward (smoothed)", xs, train_mean_curve),
    ];
    Ok(vec![(
        "rl_curve.svg".to_string(),
        line_chart(
            &ChartSpec::new(
                "Learning curve",
                "episode",
                "total episode reward",
            ),
            &series,
        )?,
    )])
}

/// SVGs for a job from its tables, in `(file name, svg text)` pairs.
pub fn build_plots(job: &Job, tables: &[CsvTable]) -> Result<Vec<(String, String)>> {
    match job {
        Job::Capacity(j) => capacity_plots(j, tables),
        Job::Sequential(_) => sequential_plots(tables),
        Job::Pca(_) => pca_plots(tables),
        Job::Repetition(j) => repetition_plots(j, tables),
        Job::Dql(j) => rl_plots(j.smoothing_window, tables),
        Job::Ddpg(j) => rl_plots(j.smoothing_window, tables),
        Job::Gradcheck(_) | Job::Paramcount(_) => Ok(Vec::new()),
    }
}

// ---------------------------------------------------------------------
// Orchestration.
// ---------------------------------------------------------------------

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// Result of a completed run.
pub struct RunOutput {
    pub dir: PathBuf,
    /// Files written, manifest excluded, in manifest order.
    pub outputs: Vec<String>,
}

/// Executes a job under `out_root/<name>` and writes all artifacts. On
/// failure the partial outputs are still listed in a manifest with
/// status `error` before the error propagates.
pub fn execute(job: &Job, out_root: &Path) -> Result<RunOutput> {
    let dir = out_root.join(job.name());
    fs::create_dir_all(&dir)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", dir.display()))))?;
    let mut outputs: Vec<String> = Vec::new();

    let result = (|| -> Result<()> {
        write_text(&dir, RESOLVED_CONFIG_FILE, &job.to_resolved_json())?;
        outputs.push(RESOLVED_CONFIG_FILE.to_string());
        let tables = job_tables(job)?;
        for (name, table) in table_file_names(job).iter().zip(&tables) {
            table.write(&dir.join(name))?;
            outputs.push(name.to_string());
        }
        for (name, svg) in build_plots(job, &tables)? {
            write_text(&dir, &name, &svg)?;
            outputs.push(name);
        }
        Ok(())
    })();

    match result {
        Ok(()) => {
            write_manifest(&dir, &outputs, "ok", None)?;
            Ok(RunOutput { dir, outputs })
        }
        Err(e) => {
            // Best effort: record what exists plus the failure reason.
            let _ = write_manifest(&dir, &outputs, "error", Some(e.to_string()));
            Err(e)
        }
    }
}

/// Re-renders the SVGs of an existing run directory from its CSVs.
pub fn replot(dir: &Path) -> Result<Vec<String>> {
    let config_text = fs::read_to_string(dir.join(RESOLVED_CONFIG_FILE)).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", dir.join(RESOLVED_CONFIG_FILE).display()),
        ))
    })?;
    let job = Job::from_str(&config_text).map_err(|detail| Error::InvalidConfig { detail })?;
    let mut outputs = vec![RESOLVED_CONFIG_FILE.to_string()];
    let mut tables = Vec::new();
    for name in table_file_names(&job) {
        tables.push(CsvTable::read(&dir.join(name))?);
        outputs.push(name.to_string());
    }
    let plots = build_plots(&job, &tables)?;
    let mut written = Vec::new();
    for (name, svg) in &plots {
        write_text(dir, name, svg)?;
        outputs.push(name.clone());
        written.push(name.clone());
    }
    write_manifest(dir, &outputs, "ok", None)?;
    Ok(written)
}
