//! Dense linear algebra: thin QR and a symmetric eigensolver.
//!
//! Both routines are small and written for correctness over speed — they
//! run on weight matrices (a few hundred columns at most) during init and
//! on covariance matrices during analysis, never in training hot loops.
//!
//! Sign conventions are fixed so downstream results are deterministic:
//! QR forces `diag(R) >= 0`, and eigenvectors are flipped so their
//! largest-magnitude component is positive (ties broken by lowest index).

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Threshold below which a diagonal entry of `R` counts as rank deficiency.
const RANK_TOL: f64 = 1e-12;

/// Maximum number of full Jacobi sweeps before giving up.
const JACOBI_MAX_SWEEPS: usize = 100;

/// Relative off-diagonal norm at which Jacobi iteration stops.
const JACOBI_TOL: f64 = 1e-12;

/// Thin Householder QR of a `p x q` matrix with `p >= q`.
///
/// Returns `(q_mat, r_mat)` with `q_mat` of shape `p x q` having
/// orthonormal columns, `r_mat` upper-triangular `q x q` with non-negative
/// diagonal, and `a = q_mat · r_mat`. Near-zero diagonal entries of `R`
/// are reported as [`Error::RankDeficient`].
pub fn householder_qr(a: &Tensor) -> Result<(Tensor, Tensor)> {
    let (p, q) = a.dims2("householder_qr")?;
    if p < q {
        return Err(Error::InvalidConfig {
            detail: format!("householder_qr needs rows >= cols, got {p} x {q}"),
        });
    }
    // Work array, row-major p x q; reflectors stored column by column.
    let mut work = a.data().to_vec();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(q);

    for k in 0..q {
        // Householder vector for column k, rows k..p.
        let mut v: Vec<f64> = (k..p).map(|i| work[i * q + k]).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        let alpha = if v[0] >= 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        // Apply H = I - 2 v vᵀ / |v|² to the remaining block.
        for j in k..q {
            let dot: f64 = v
                .iter()
                .enumerate()
                .map(|(i, &vi)| vi * work[(k + i) * q + j])
                .sum();
            let scale = 2.0 * dot / vnorm2;
            for (i, &vi) in v.iter().enumerate() {
                work[(k + i) * q + j] -= scale * vi;
            }
        }
        reflectors.push(v);
    }

    // R is the upper-triangular q x q block of the reduced matrix.
    let mut r_data = vec![0.0; q * q];
    for i in 0..q {
        for j in i..q {
            r_data[i * q + j] = work[i * q + j];
        }
    }

    // Thin Q: apply the reflectors in reverse to the first q identity
    // columns.
    let mut q_data = vec![0.0; p * q];
    for j in 0..q {
        q_data[j * q + j] = 1.0;
    }
    for k in (0..q).rev() {
        let v = &reflectors[k];
        if v.is_empty() {
            continue;
        }
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        for j in 0..q {
            let dot: f64 = v
                .iter()
                .enumerate()
                .map(|(i, &vi)| vi * q_data[(k + i) * q + j])
                .sum();
            let scale = 2.0 * dot / vnorm2;
            for (i, &vi) in v.iter().enumerate() {
                q_data[(k + i) * q + j] -= scale * vi;
            }
        }
    }

    // Fix signs so diag(R) >= 0, flipping matching Q columns.
    for i in 0..q {
        if r_data[i * q + i] < 0.0 {
            for j in i..q {
                r_data[i * q + j] = -r_data[i * q + j];
            }
            for row in 0..p {
                q_data[row * q + i] = -q_data[row * q + i];
            }
        }
    }

    for i in 0..q {
        let d = r_data[i * q + i];
        if d.abs() < RANK_TOL {
            return Err(Error::RankDeficient {
                op: "householder_qr",
                detail: format!("|R[{i},{i}]| = {:e} < {RANK_TOL:e}", d.abs()),
            });
        }
    }

    Ok((
        Tensor::new(vec![p, q], q_data)?,
        Tensor::new(vec![q, q], r_data)?,
    ))
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvalues sorted in
/// descending order and eigenvectors as the matching *columns* of the
/// second tensor. Each eigenvector's largest-magnitude component is made
/// positive; among tied magnitudes the lowest index decides.
pub fn jacobi_eigh(s: &Tensor) -> Result<(Vec<f64>, Tensor)> {
    let (n, m) = s.dims2("jacobi_eigh")?;
    if n != m {
        return Err(Error::ShapeMismatch {
            op: "jacobi_eigh",
            left: s.shape().to_vec(),
            right: s.shape().to_vec(),
        });
    }
    let data = s.data();
    let max_abs = data.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let mut max_asym = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            max_asym = max_asym.max((data[i * n + j] - data[j * n + i]).abs());
        }
    }
    if max_asym > 1e-8 * (1.0 + max_abs) {
        return Err(Error::NotSymmetric {
            op: "jacobi_eigh",
            max_asym,
        });
    }

    // Work on the symmetrised copy to remove rounding asymmetry.
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = 0.5 * (data[i * n + j] + data[j * n + i]);
        }
    }
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let frob: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let off = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += a[i * n + j] * a[i * n + j];
            }
        }
        (2.0 * s).sqrt()
    };

    let mut sweeps = 0;
    while off(&a) > JACOBI_TOL * frob.max(f64::MIN_POSITIVE) {
        if sweeps >= JACOBI_MAX_SWEEPS {
            return Err(Error::NoConvergence {
                op: "jacobi_eigh",
                iterations: sweeps,
                residual: off(&a),
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                // tan of the rotation angle, smaller root for stability.
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = t * c;

                // Update rows/columns p and q of A.
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - sn * akq;
                    a[k * n + q] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - sn * aqk;
                    a[q * n + k] = sn * apk + c * aqk;
                }
                // Accumulate the rotation into V (columns are eigenvectors).
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - sn * vkq;
                    v[k * n + q] = sn * vkp + c * vkq;
                }
            }
        }
    }

    // Sort eigenpairs by descending eigenvalue (stable for ties).
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[j * n + j]
            .partial_cmp(&a[i * n + i])
            .expect("eigenvalues are finite")
    });
    let eigenvalues: Vec<f64> = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (new_col, &old_col) in order.iter().enumerate() {
        // Sign convention: largest-|component| positive, lowest index wins
        // ties.
        let mut pivot = 0;
        for k in 1..n {
            if v[k * n + old_col].abs() > v[pivot * n + old_col].abs() {
                pivot = k;
            }
        }
        let flip = if v[pivot * n + old_col] < 0.0 { -1.0 } else { 1.0 };
        for k in 0..n {
            vectors[k * n + new_col] = flip * v[k * n + old_col];
        }
    }

    Ok((eigenvalues, Tensor::new(vec![n, n], vectors)?))
}

/// Column-centered covariance matrix `Xᶜᵀ Xᶜ / (n - 1)` of an `n x d`
/// data matrix. Needs at least two rows.
pub fn covariance(x: &Tensor) -> Result<Tensor> {
    let (n, _d) = x.dims2("covariance")?;
    if n < 2 {
        return Err(Error::InvalidConfig {
            detail: format!("covariance needs at least 2 samples, got {n}"),
        });
    }
    let centered = center_columns(x)?;
    let cov = centered.matmul_ta(&centered)?;
    cov.scale(1.0 / (n as f64 - 1.0))
}

/// Subtracts the column means from a data matrix.
pub fn center_columns(x: &Tensor) -> Result<Tensor> {
    let (n, d) = x.dims2("center_columns")?;
    let mut means = vec![0.0; d];
    for i in 0..n {
        for (m, &v) in means.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    for m in means.iter_mut() {
        *m /= n as f64;
    }
    x.sub(&Tensor::new(vec![d], means)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn qr_of_single_column() {
        // [3, 4]ᵀ has norm 5, so Q = [0.6, 0.8]ᵀ and R = [5] after the
        // diag(R) >= 0 sign fix.
        let a = Tensor::new(vec![2, 1], vec![3.0, 4.0]).unwrap();
        let (q, r) = householder_qr(&a).unwrap();
        assert!((q.data()[0] - 0.6).abs() < 1e-14);
        assert!((q.data()[1] - 0.8).abs() < 1e-14);
        assert!((r.data()[0] - 5.0).abs() < 1e-14);
    }

    #[test]
    fn qr_reconstructs_and_is_orthonormal() {
        let mut s = RngStream::new(21);
        for trial in 0..5 {
            let rows = 16 + trial;
            let a = Tensor::rand_normal(&[rows, 8], &mut s).unwrap();
            let (q, r) = householder_qr(&a).unwrap();
            let qr = q.matmul(&r).unwrap();
            assert!(qr.max_abs_diff(&a).unwrap() < 1e-10, "A = QR failed");
            let qtq = q.matmul_ta(&q).unwrap();
            let eye = Tensor::eye(8).unwrap();
            assert!(qtq.max_abs_diff(&eye).unwrap() < 1e-10, "QᵀQ = I failed");
            for i in 0..8 {
                assert!(r.at2(i, i) > 0.0, "diag(R) must be positive");
                for j in 0..i {
                    assert_eq!(r.at2(i, j), 0.0, "R must be upper triangular");
                }
            }
        }
    }

    #[test]
    fn qr_detects_rank_deficiency() {
        // Two identical columns.
        let a = Tensor::new(vec![3, 2], vec![1.0, 1.0, 2.0, 2.0, 3.0, 3.0]).unwrap();
        assert!(matches!(
            householder_qr(&a),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn qr_rejects_wide_matrices() {
        let a = Tensor::zeros(&[2, 3]).unwrap();
        assert!(householder_qr(&a).is_err());
    }

    #[test]
    fn eigh_two_by_two() {
        // [[2,1],[1,2]] has eigenvalues 3 and 1 with eigenvectors
        // (1,1)/√2 and (1,-1)/√2 under the sign convention.
        let s = Tensor::new(vec![2, 2], vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        let (vals, vecs) = jacobi_eigh(&s).unwrap();
        assert!((vals[0] - 3.0).abs() < 1e-12);
        assert!((vals[1] - 1.0).abs() < 1e-12);
        let inv_sqrt2 = 1.0 / 2.0_f64.sqrt();
        assert!((vecs.at2(0, 0) - inv_sqrt2).abs() < 1e-12);
        assert!((vecs.at2(1, 0) - inv_sqrt2).abs() < 1e-12);
        assert!((vecs.at2(0, 1) - inv_sqrt2).abs() < 1e-12);
        assert!((vecs.at2(1, 1) + inv_sqrt2).abs() < 1e-12);
    }

    #[test]
    fn eigh_reconstructs_random_symmetric() {
        let mut s = RngStream::new(33);
        for _ in 0..3 {
            let m = Tensor::rand_normal(&[12, 12], &mut s).unwrap();
            let sym = m.add(&m.transpose().unwrap()).unwrap().scale(0.5).unwrap();
            let (vals, vecs) = jacobi_eigh(&sym).unwrap();
            // Descending order.
            for w in vals.windows(2) {
                assert!(w[0] >= w[1] - 1e-12);
            }
            // V diag(λ) Vᵀ == S.
            let n = vals.len();
            let mut lam = Tensor::zeros(&[n, n]).unwrap();
            for (i, &l) in vals.iter().enumerate() {
                lam.data_mut()[i * n + i] = l;
            }
            let recon = vecs.matmul(&lam).unwrap().matmul_tb(&vecs).unwrap();
            assert!(recon.max_abs_diff(&sym).unwrap() < 1e-9);
            // Orthonormal columns.
            let vtv = vecs.matmul_ta(&vecs).unwrap();
            assert!(vtv.max_abs_diff(&Tensor::eye(n).unwrap()).unwrap() < 1e-10);
        }
    }

    #[test]
    fn eigh_rejects_asymmetric() {
        let m = Tensor::new(vec![2, 2], vec![1.0, 2.0, 0.0, 1.0]).unwrap();
        assert!(matches!(jacobi_eigh(&m), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn eigh_sign_convention_deterministic() {
        let mut s = RngStream::new(5);
        let m = Tensor::rand_normal(&[6, 6], &mut s).unwrap();
        let sym = m.add(&m.transpose().unwrap()).unwrap().scale(0.5).unwrap();
        let (_, v1) = jacobi_eigh(&sym).unwrap();
        let (_, v2) = jacobi_eigh(&sym).unwrap();
        assert_eq!(v1, v2);
        // Every column's largest-|component| entry is positive.
        let n = 6;
        for j in 0..n {
            let mut pivot = 0;
            for i in 1..n {
                if v1.at2(i, j).abs() > v1.at2(pivot, j).abs() {
                    pivot = i;
                }
            }
            assert!(v1.at2(pivot, j) > 0.0);
        }
    }

    #[test]
    fn covariance_known_case() {
        // Columns: [1,3] (var 2), [2,6] (var 8), covariance 4.
        let x = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 6.0]).unwrap();
        let c = covariance(&x).unwrap();
        assert_eq!(c.data(), &[2.0, 4.0, 4.0, 8.0]);
    }

    #[test]
    fn centered_columns_have_zero_mean() {
        let mut s = RngStream::new(8);
        let x = Tensor::rand_uniform(&[50, 4], -3.0, 3.0, &mut s).unwrap();
        let c = center_columns(&x).unwrap();
        for j in 0..4 {
            let mean: f64 = (0..50).map(|i| c.at2(i, j)).sum::<f64>() / 50.0;
            assert!(mean.abs() < 1e-12);
        }
    }
}
