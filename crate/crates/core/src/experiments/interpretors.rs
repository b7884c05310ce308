//! Interpretor-geometry analysis: project the per-sample generated weight
//! matrices of a trained bundle model to two dimensions with PCA and
//! measure how strongly they cluster by task.

use crate::error::{Error, Result};
use crate::experiments::data::ContinualTaskSuite;
use crate::linalg::{center_columns, covariance, jacobi_eigh};
use crate::nn::Model;
use crate::report::{format_f64, CsvTable};
use crate::tensor::Tensor;

/// PCA embedding of interpretors with per-task labels.
#[derive(Clone, Debug)]
pub struct PcaOutcome {
    /// `[n × 2]` coordinates in the top-2 principal-component basis.
    pub embedding: Tensor,
    /// Task index of each embedded point.
    pub task_ids: Vec<usize>,
    /// `(λ₁+λ₂) / Σλ` — variance captured by the two components.
    pub explained_ratio: f64,
    /// Mean pairwise distance between points of the same task.
    pub intra_mean: f64,
    /// Mean pairwise distance between points of different tasks.
    pub inter_mean: f64,
}

/// Extracts interpretors for the first `samples_per_task` test samples of
/// every task, then centers, decomposes the covariance, and projects onto
/// the top-2 eigenvectors. Requires the model's first layer to generate
/// per-sample weights.
pub fn pca_interpretors(
    model: &Model,
    suite: &ContinualTaskSuite,
    samples_per_task: usize,
) -> Result<PcaOutcome> {
    if samples_per_task < 2 {
        return Err(Error::InvalidConfig {
            detail: "pca needs at least 2 samples per task".to_string(),
        });
    }
    let mut stacked_rows: Vec<f64> = Vec::new();
    let mut width = 0;
    let mut task_ids = Vec::new();
    for (task_index, task) in suite.tasks.iter().enumerate() {
        let available = task.test_inputs.shape()[0];
        let take = samples_per_task.min(available);
        let rows: Vec<usize> = (0..take).collect();
        let inputs = task.test_inputs.gather_rows(&rows)?;
        let block = model.extract_interpretors(&inputs, None)?;
        width = block.shape()[1];
        stacked_rows.extend_from_slice(block.data());
        task_ids.extend(std::iter::repeat(task_index).take(take));
    }
    let stacked = Tensor::new(vec![task_ids.len(), width], stacked_rows)?;

    let cov = covariance(&stacked)?;
    let (eigenvalues, eigenvectors) = jacobi_eigh(&cov)?;
    let d = cov.shape()[0];
    if d < 2 {
        return Err(Error::InvalidConfig {
            detail: "interpretor dimension must be at least 2 for a 2-D PCA".to_string(),
        });
    }
    let mut top2 = vec![0.0; d * 2];
    for r in 0..d {
        top2[r * 2] = eigenvectors.at2(r, 0);
        top2[r * 2 + 1] = eigenvectors.at2(r, 1);
    }
    let top2 = Tensor::new(vec![d, 2], top2)?;
    let embedding = center_columns(&stacked)?.matmul(&top2)?;

    let positive_sum: f64 = eigenvalues.iter().map(|&l| l.max(0.0)).sum();
    let explained_ratio = if positive_sum > 0.0 {
        (eigenvalues[0].max(0.0) + eigenvalues[1].max(0.0)) / positive_sum
    } else {
        0.0
    };

    let (intra_mean, inter_mean) = pairwise_distance_means(&embedding, &task_ids)?;
    Ok(PcaOutcome {
        embedding,
        task_ids,
        explained_ratio,
        intra_mean,
        inter_mean,
    })
}

fn pairwise_distance_means(embedding: &Tensor, task_ids: &[usize]) -> Result<(f64, f64)> {
    let n = embedding.shape()[0];
    if task_ids.len() != n {
        return Err(Error::ShapeMismatch {
            op: "pairwise_distance_means",
            left: vec![n],
            right: vec![task_ids.len()],
        });
    }
    let mut intra = (0.0, 0usize);
    let mut inter = (0.0, 0usize);
    for i in 0..n {
        for j in i + 1..n {
            let dx = embedding.at2(i, 0) - embedding.at2(j, 0);
            let dy = embedding.at2(i, 1) - embedding.at2(j, 1);
            let dist = (dx * dx + dy * dy).sqrt();
            if task_ids[i] == task_ids[j] {
                intra.0 += dist;
                intra.1 += 1;
            } else {
                inter.0 += dist;
                inter.1 += 1;
            }
        }
    }
    let intra_mean = if intra.1 > 0 { intra.0 / intra.1 as f64 } else { 0.0 };
    let inter_mean = if inter.1 > 0 { inter.0 / inter.1 as f64 } else { 0.0 };
    Ok((intra_mean, inter_mean))
}

/// Embedding CSV: one row per point.
pub fn pca_embedding_csv(runs: &[(String, PcaOutcome)]) -> Result<CsvTable> {
    let mut table = CsvTable::new(&["run_id", "task", "x", "y"]);
    for (run_id, outcome) in runs {
        for (i, &task) in outcome.task_ids.iter().enumerate() {
            table.push_row(vec![
                run_id.clone(),
                task.to_string(),
                format_f64(outcome.embedding.at2(i, 0)),
                format_f64(outcome.embedding.at2(i, 1)),
            ])?;
        }
    }
    Ok(table)
}

/// Summary CSV: one row per run with clustering statistics.
pub fn pca_summary_csv(runs: &[(String, PcaOutcome)]) -> Result<CsvTable> {
    let mut table = CsvTable::new(&["run_id", "explained_ratio", "intra_mean", "inter_mean"]);
    for (run_id, outcome) in runs {
        table.push_row(vec![
            run_id.clone(),
            format_f64(outcome.explained_ratio),
            format_f64(outcome.intra_mean),
            format_f64(outcome.inter_mean),
        ])?;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::data::gen_continual_tasks;
    use crate::experiments::models::{sequential_config, ModelKind};
    use crate::rng::RngStream;

    fn bundle_model(seed: u64) -> Model {
        Model::build(
            &sequential_config(ModelKind::Bundle, 8),
            &mut RngStream::new(seed),
        )
        .unwrap()
    }

    #[test]
    fn identical_inputs_embed_to_identical_points() {
        let mut suite =
            gen_continual_tasks(2, 8, 16, 8, 10, 10, &mut RngStream::new(51)).unwrap();
        // Make every test row of task 0 identical.
        let row = suite.tasks[0].test_inputs.row(0).to_vec();
        let n = suite.tasks[0].test_inputs.shape()[0];
        let data: Vec<f64> = row.iter().cycle().take(n * 16).copied().collect();
        suite.tasks[0].test_inputs = Tensor::new(vec![n, 16], data).unwrap();

        let model = bundle_model(52);
        let outcome = pca_interpretors(&model, &suite, 5).unwrap();
        for i in 1..5 {
            assert!((outcome.embedding.at2(i, 0) - outcome.embedding.at2(0, 0)).abs() < 1e-9);
            assert!((outcome.embedding.at2(i, 1) - outcome.embedding.at2(0, 1)).abs() < 1e-9);
        }
    }

    #[test]
    fn explained_ratio_is_a_valid_fraction_and_rerun_invariant() {
        let suite = gen_continual_tasks(3, 8, 16, 8, 12, 12, &mut RngStream::new(53)).unwrap();
        let model = bundle_model(54);
        let a = pca_interpretors(&model, &suite, 8).unwrap();
        assert!(a.explained_ratio > 0.0 && a.explained_ratio <= 1.0 + 1e-12);
        assert_eq!(a.embedding.shape(), &[24, 2]);
        assert_eq!(a.task_ids.len(), 24);
        // Deterministic: bitwise identical on a rerun.
        let b = pca_interpretors(&model, &suite, 8).unwrap();
        assert_eq!(a.embedding, b.embedding);
        assert_eq!(a.explained_ratio.to_bits(), b.explained_ratio.to_bits());
    }

    #[test]
    fn non_bundle_model_is_rejected() {
        let suite = gen_continual_tasks(2, 8, 16, 8, 8, 8, &mut RngStream::new(55)).unwrap();
        let mlp = Model::build(
            &sequential_config(ModelKind::Mlp, 16),
            &mut RngStream::new(56),
        )
        .unwrap();
        assert!(pca_interpretors(&mlp, &suite, 4).is_err());
    }

    #[test]
    fn distance_means_separate_constructed_clusters() {
        // Hand-built embedding: two tight clusters far apart.
        let embedding = Tensor::new(
            vec![4, 2],
            vec![0.0, 0.0, 0.1, 0.0, 10.0, 0.0, 10.1, 0.0],
        )
        .unwrap();
        let (intra, inter) = pairwise_distance_means(&embedding, &[0, 0, 1, 1]).unwrap();
        assert!((intra - 0.1).abs() < 1e-12);
        assert!(inter > 9.0);
    }

    #[test]
    fn csv_outputs_have_expected_shape() {
        let suite = gen_continual_tasks(2, 8, 16, 8, 6, 6, &mut RngStream::new(57)).unwrap();
        let model = bundle_model(58);
        let outcome = pca_interpretors(&model, &suite, 4).unwrap();
        let runs = vec![("pca-s57".to_string(), outcome)];
        let emb = pca_embedding_csv(&runs).unwrap();
        assert_eq!(emb.rows.len(), 8);
        let summary = pca_summary_csv(&runs).unwrap();
        assert_eq!(summary.rows.len(), 1);
        assert_eq!(
            summary.header,
            vec!["run_id", "explained_ratio", "intra_mean", "inter_mean"]
        );
    }
}
