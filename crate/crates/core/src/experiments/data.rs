//! Synthetic dataset generators for the supervised experiments.
//!
//! Three families share one construction idea: inputs whose first half is
//! per-sample noise and whose second half is a task/class feature vector,
//! so that the "identity" of a sample is carried by a fixed sub-vector.
//!
//! * [`RegressionDataset`] — pure memorisation: standard-normal inputs
//!   and independent standard-normal targets.
//! * [`ContinualTaskSuite`] — per task `i`: feature `v_i`, transformation
//!   `M_i`, samples `x = concat(x', v_i)`, `y = x · M_i` (exactly
//!   linear, so a least-squares oracle solves each task to machine
//!   precision).
//! * [`ClassificationSuite`] — same input construction, but the target is
//!   the class index that `v` belongs to.

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::Tensor;

/// Fixed random regression pairs (memorisation workload).
#[derive(Clone, Debug)]
pub struct RegressionDataset {
    pub inputs: Tensor,
    pub targets: Tensor,
}

/// Standard-normal inputs `[n × dim_in]` and targets `[n × dim_out]`.
pub fn gen_regression(
    n_samples: usize,
    dim_in: usize,
    dim_out: usize,
    stream: &mut RngStream,
) -> Result<RegressionDataset> {
    if n_samples == 0 || dim_in == 0 || dim_out == 0 {
        return Err(Error::InvalidConfig {
            detail: "regression dataset needs positive sample count and dims".to_string(),
        });
    }
    Ok(RegressionDataset {
        inputs: Tensor::rand_normal(&[n_samples, dim_in], stream)?,
        targets: Tensor::rand_normal(&[n_samples, dim_out], stream)?,
    })
}

/// One task of the continual-learning suite.
#[derive(Clone, Debug)]
pub struct ContinualTask {
    /// Task feature vector `v` (length `feature_dim`), appended to every
    /// input of this task.
    pub feature: Vec<f64>,
    /// Linear transformation `M` `[input_dim × output_dim]`.
    pub transform: Tensor,
    pub train_inputs: Tensor,
    pub train_targets: Tensor,
    pub test_inputs: Tensor,
    pub test_targets: Tensor,
}

/// A sequence of exactly-linear tasks with disjoint random features.
#[derive(Clone, Debug)]
pub struct ContinualTaskSuite {
    pub tasks: Vec<ContinualTask>,
    /// Per-sample noise width (first half of the input).
    pub noise_dim: usize,
    /// Full input width (`noise_dim + feature dim`).
    pub input_dim: usize,
    pub output_dim: usize,
}

fn gen_task_samples(
    feature: &[f64],
    transform: &Tensor,
    noise_dim: usize,
    size: usize,
    stream: &mut RngStream,
) -> Result<(Tensor, Tensor)> {
    let input_dim = noise_dim + feature.len();
    let mut rows = Vec::with_capacity(size * input_dim);
    for _ in 0..size {
        for _ in 0..noise_dim {
            rows.push(stream.standard_normal());
        }
        rows.extend_from_slice(feature);
    }
    let inputs = Tensor::new(vec![size, input_dim], rows)?;
    let targets = inputs.matmul(transform)?;
    Ok((inputs, targets))
}

/// Generates `n_tasks` tasks. Per task: `v_i` standard normal of length
/// `input_dim − noise_dim`, `M_i` standard normal
/// `[input_dim × output_dim]`, then independent train and test sets of the
/// given sizes.
pub fn gen_continual_tasks(
    n_tasks: usize,
    noise_dim: usize,
    input_dim: usize,
    output_dim: usize,
    train_size: usize,
    test_size: usize,
    stream: &mut RngStream,
) -> Result<ContinualTaskSuite> {
    if n_tasks == 0 || train_size == 0 || test_size == 0 {
        return Err(Error::InvalidConfig {
            detail: "continual suite needs positive task count and set sizes".to_string(),
        });
    }
    if noise_dim == 0 || noise_dim >= input_dim {
        return Err(Error::InvalidConfig {
            detail: format!("noise_dim {noise_dim} must lie strictly inside input_dim {input_dim}"),
        });
    }
    let feature_dim = input_dim - noise_dim;
    let mut tasks = Vec::with_capacity(n_tasks);
    for i in 0..n_tasks {
        let mut task_stream = stream.split_indexed("task", i as u64);
        let mut feature = vec![0.0; feature_dim];
        task_stream.fill_normal(&mut feature);
        let transform = Tensor::rand_normal(&[input_dim, output_dim], &mut task_stream)?;
        let (train_inputs, train_targets) =
            gen_task_samples(&feature, &transform, noise_dim, train_size, &mut task_stream)?;
        let (test_inputs, test_targets) =
            gen_task_samples(&feature, &transform, noise_dim, test_size, &mut task_stream)?;
        tasks.push(ContinualTask {
            feature,
            transform,
            train_inputs,
            train_targets,
            test_inputs,
            test_targets,
        });
    }
    Ok(ContinualTaskSuite {
        tasks,
        noise_dim,
        input_dim,
        output_dim,
    })
}

/// Labelled classification data: `samples_per_class` inputs per class,
/// each `concat(x', v_class)`, mixed into one shuffled dataset.
#[derive(Clone, Debug)]
pub struct ClassificationSuite {
    pub inputs: Tensor,
    pub labels: Vec<usize>,
    pub classes: usize,
    /// Per-class feature vectors, in class order.
    pub features: Vec<Vec<f64>>,
}

/// Generates the classification suite and shuffles the mixed rows.
pub fn gen_classification(
    classes: usize,
    samples_per_class: usize,
    noise_dim: usize,
    input_dim: usize,
    stream: &mut RngStream,
) -> Result<ClassificationSuite> {
    if classes < 2 || samples_per_class == 0 {
        return Err(Error::InvalidConfig {
            detail: "classification suite needs ≥2 classes and positive samples".to_string(),
        });
    }
    if noise_dim == 0 || noise_dim >= input_dim {
        return Err(Error::InvalidConfig {
            detail: format!("noise_dim {noise_dim} must lie strictly inside input_dim {input_dim}"),
        });
    }
    let feature_dim = input_dim - noise_dim;
    let n = classes * samples_per_class;
    let mut features = Vec::with_capacity(classes);
    let mut rows = Vec::with_capacity(n * input_dim);
    let mut labels = Vec::with_capacity(n);
    for c in 0..classes {
        let mut class_stream = stream.split_indexed("class", c as u64);
        let mut feature = vec![0.0; feature_dim];
        class_stream.fill_normal(&mut feature);
        for _ in 0..samples_per_class {
            for _ in 0..noise_dim {
                rows.push(class_stream.standard_normal());
            }
            rows.extend_from_slice(&feature);
            labels.push(c);
        }
        features.push(feature);
    }
    // Mix the per-class blocks into one dataset.
    let mut order: Vec<usize> = (0..n).collect();
    stream.shuffle(&mut order);
    let inputs = Tensor::new(vec![n, input_dim], rows)?.gather_rows(&order)?;
    let labels = order.iter().map(|&i| labels[i]).collect();
    Ok(ClassificationSuite {
        inputs,
        labels,
        classes,
        features,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regression_shapes_and_determinism() {
        let a = gen_regression(200, 16, 16, &mut RngStream::new(5)).unwrap();
        let b = gen_regression(200, 16, 16, &mut RngStream::new(5)).unwrap();
        assert_eq!(a.inputs.shape(), &[200, 16]);
        assert_eq!(a.targets.shape(), &[200, 16]);
        assert_eq!(a.inputs, b.inputs);
        assert_eq!(a.targets, b.targets);
        let c = gen_regression(200, 16, 16, &mut RngStream::new(6)).unwrap();
        assert_ne!(a.inputs, c.inputs);
    }

    #[test]
    fn continual_targets_are_exactly_linear() {
        let suite =
            gen_continual_tasks(10, 8, 16, 8, 40, 40, &mut RngStream::new(7)).unwrap();
        assert_eq!(suite.tasks.len(), 10);
        for task in &suite.tasks {
            // y − x·M = 0 exactly (same multiply, same order).
            let recomputed = task.train_inputs.matmul(&task.transform).unwrap();
            assert_eq!(recomputed, task.train_targets);
            // Feature half of every input row equals v.
            for r in 0..task.train_inputs.shape()[0] {
                let row = task.train_inputs.row(r);
                assert_eq!(&row[8..], task.feature.as_slice());
            }
        }
        // Distinct tasks get distinct features and transforms.
        assert_ne!(suite.tasks[0].feature, suite.tasks[1].feature);
        assert_ne!(suite.tasks[0].transform, suite.tasks[1].transform);
    }

    #[test]
    fn continual_suite_regenerates_bitwise() {
        let a = gen_continual_tasks(3, 8, 16, 8, 20, 20, &mut RngStream::new(11)).unwrap();
        let b = gen_continual_tasks(3, 8, 16, 8, 20, 20, &mut RngStream::new(11)).unwrap();
        for (ta, tb) in a.tasks.iter().zip(&b.tasks) {
            assert_eq!(ta.train_inputs, tb.train_inputs);
            assert_eq!(ta.test_targets, tb.test_targets);
            assert_eq!(ta.feature, tb.feature);
        }
    }

    #[test]
    fn least_squares_oracle_closes_each_task() {
        // Within a task the feature half of x is constant, so the target
        // is affine in the noise half: y = x'·A + b. Fit (A, b) by QR
        // least squares on the train set; the task is exactly linear, so
        // held-out MSE must be numerically zero.
        let suite = gen_continual_tasks(4, 8, 16, 8, 60, 60, &mut RngStream::new(13)).unwrap();
        for task in &suite.tasks {
            let design_train = with_intercept(&task.train_inputs, 8);
            let (q, r) = crate::linalg::householder_qr(&design_train).unwrap();
            let qty = q.transpose().unwrap().matmul(&task.train_targets).unwrap();
            let w = solve_upper(&r, &qty);
            let pred = with_intercept(&task.test_inputs, 8).matmul(&w).unwrap();
            let mse = crate::optim::mse_value(&pred, &task.test_targets).unwrap();
            assert!(mse < 1e-10, "oracle mse {mse}");
        }
    }

    /// First `keep` columns plus a ones column (test helper).
    fn with_intercept(x: &Tensor, keep: usize) -> Tensor {
        let n = x.shape()[0];
        let mut data = Vec::with_capacity(n * (keep + 1));
        for i in 0..n {
            data.extend_from_slice(&x.row(i)[..keep]);
            data.push(1.0);
        }
        Tensor::new(vec![n, keep + 1], data).unwrap()
    }

    /// Back-substitution for upper-triangular `R·W = B` (test helper).
    fn solve_upper(r: &Tensor, b: &Tensor) -> Tensor {
        let k = r.shape()[0];
        let cols = b.shape()[1];
        let mut w = vec![0.0; k * cols];
        for c in 0..cols {
            for i in (0..k).rev() {
                let mut acc = b.at2(i, c);
                for j in i + 1..k {
                    acc -= r.at2(i, j) * w[j * cols + c];
                }
                w[i * cols + c] = acc / r.at2(i, i);
            }
        }
        Tensor::new(vec![k, cols], w).unwrap()
    }

    #[test]
    fn classification_is_balanced_and_mixed() {
        let suite = gen_classification(20, 25, 8, 16, &mut RngStream::new(17)).unwrap();
        assert_eq!(suite.inputs.shape(), &[500, 16]);
        assert_eq!(suite.labels.len(), 500);
        let mut counts = vec![0usize; 20];
        for &l in &suite.labels {
            counts[l] += 1;
        }
        assert!(counts.iter().all(|&c| c == 25), "balanced classes");
        // Mixed: the first 25 rows are not all one class.
        let first: Vec<usize> = suite.labels[..25].to_vec();
        assert!(first.iter().any(|&l| l != first[0]));
        // Every row's feature half matches its label's feature vector.
        for i in 0..500 {
            let row = suite.inputs.row(i);
            assert_eq!(&row[8..], suite.features[suite.labels[i]].as_slice());
        }
    }

    #[test]
    fn generators_reject_degenerate_shapes() {
        assert!(gen_regression(0, 16, 16, &mut RngStream::new(0)).is_err());
        assert!(gen_continual_tasks(0, 8, 16, 8, 10, 10, &mut RngStream::new(0)).is_err());
        assert!(gen_continual_tasks(2, 16, 16, 8, 10, 10, &mut RngStream::new(0)).is_err());
        assert!(gen_classification(1, 10, 8, 16, &mut RngStream::new(0)).is_err());
    }
}
