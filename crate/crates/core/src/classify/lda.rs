use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{argmax_lowest, ClassifyError, Prediction};

/// Linear discriminant `δ_k(x) = w_kᵀx + b_k` with
/// `w_k = Σγ⁻¹ μ_k`, `b_k = -½ μ_kᵀ w_k + ln π_k`, and
/// `Σγ = (1-γ) S + γ diag(S)` for the pooled within-class covariance `S`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub shrinkage: f64,
    pub means: Vec<Vec<f64>>,
    pub priors: Vec<f64>,
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

/// Solves `Σγ v = rhs` for every column of `rhs` without forming the p×p
/// matrix: `Σγ = A + VᵀV` with diagonal `A = γ diag(S)` and
/// `V = √((1-γ)/(n-K)) Z`, inverted through the n×n Woodbury system.
fn shrunk_solve(z: &DMatrix<f64>, dof: f64, gamma: f64, rhs: &[DVector<f64>]) -> Result<Vec<DVector<f64>>, ClassifyError> {
    let p = z.ncols();
    let diag_s: Vec<f64> = (0..p).map(|j| z.column(j).norm_squared() / dof).collect();
    let mean_diag = diag_s.iter().sum::<f64>() / p as f64;
    let floor = 1e-10 * mean_diag.max(1e-300);

    if gamma <= 0.0 {
        let s = z.transpose() * z / dof;
        let chol = s.cholesky().ok_or(ClassifyError::Singular)?;
        return Ok(rhs.iter().map(|b| chol.solve(b)).collect());
    }

    let a_inv = DVector::from_iterator(p, diag_s.iter().map(|d| 1.0 / (gamma * d.max(floor))));
    let v = z * ((1.0 - gamma) / dof).sqrt();
    // M = I + V A⁻¹ Vᵀ
    let mut va = v.clone();
    for j in 0..p {
        va.column_mut(j).scale_mut(a_inv[j]);
    }
    let m = DMatrix::identity(v.nrows(), v.nrows()) + &va * v.transpose();
    let chol = m.cholesky().ok_or(ClassifyError::Singular)?;
    Ok(rhs
        .iter()
        .map(|b| {
            let y = b.component_mul(&a_inv);
            let s = chol.solve(&(&v * &y));
            y - (va.transpose() * s)
        })
        .collect())
}

impl LdaModel {
    pub fn fit(x: &[Vec<f64>], y: &[usize], k: usize, shrinkage: f64) -> Result<Self, ClassifyError> {
        let n = x.len();
        let p = x[0].len();
        let mut counts = vec![0usize; k];
        let mut means = vec![vec![0.0; p]; k];
        for (row, &c) in x.iter().zip(y) {
            counts[c] += 1;
            for (m, v) in means[c].iter_mut().zip(row) {
                *m += v;
            }
        }
        for (m, &c) in means.iter_mut().zip(&counts) {
            if c > 0 {
                m.iter_mut().for_each(|v| *v /= c as f64);
            }
        }
        let present = counts.iter().filter(|c| **c > 0).count();
        let dof = n.saturating_sub(present).max(1) as f64;
        let z = DMatrix::from_fn(n, p, |i, j| x[i][j] - means[y[i]][j]);
        let mus: Vec<DVector<f64>> = means.iter().map(|m| DVector::from_column_slice(m)).collect();
        let w = shrunk_solve(&z, dof, shrinkage, &mus)?;
        let priors: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
        let bias = (0..k)
            .map(|c| {
                if counts[c] == 0 {
                    f64::NEG_INFINITY
                } else {
                    -0.5 * mus[c].dot(&w[c]) + priors[c].ln()
                }
            })
            .collect();
        Ok(Self {
            shrinkage,
            means,
            priors,
            weights: w.into_iter().map(|v| v.as_slice().to_vec()).collect(),
            bias,
        })
    }

    pub fn discriminants(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| w.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() + b)
            .collect()
    }

    pub fn predict(&self, x: &[f64]) -> Prediction {
        let scores = self.discriminants(x);
        Prediction {
            class: argmax_lowest(&scores),
            scores,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::testutil::blobs;

    #[test]
    fn woodbury_matches_direct_inverse() {
        let (x, y) = blobs(&[vec![0.0; 6], vec![1.0; 6]], 3, 1.0, 5);
        let m = LdaModel::fit(&x, &y, 2, 0.3).unwrap();
        // direct p×p construction
        let p = 6;
        let n = x.len();
        let z = DMatrix::from_fn(n, p, |i, j| x[i][j] - m.means[y[i]][j]);
        let s = z.transpose() * &z / (n as f64 - 2.0);
        let mut sg = s.clone() * 0.7;
        for j in 0..p {
            sg[(j, j)] += 0.3 * s[(j, j)];
        }
        let inv = sg.try_inverse().unwrap();
        for c in 0..2 {
            let w = &inv * DVector::from_column_slice(&m.means[c]);
            for j in 0..p {
                assert!((w[j] - m.weights[c][j]).abs() < 1e-9 * (1.0 + w[j].abs()));
            }
        }
    }

    #[test]
    fn symmetric_gaussians_split_at_zero() {
        let (x, y) = blobs(&[vec![-2.0], vec![2.0]], 2000, 1.0, 8);
        let m = LdaModel::fit(&x, &y, 2, 0.0).unwrap();
        // boundary where the two discriminants agree
        let d = |v: f64| {
            let s = m.discriminants(&[v]);
            s[1] - s[0]
        };
        let slope = d(1.0) - d(0.0);
        let boundary = -d(0.0) / slope;
        assert!(boundary.abs() < 0.1, "{boundary}");
    }

    #[test]
    fn full_shrinkage_is_diagonal_nearest_centroid() {
        let (x, y) = blobs(&[vec![0.0, 0.0, 0.0], vec![1.0, 0.5, 0.0], vec![0.0, 1.0, 1.0]], 10, 1.0, 3);
        let m = LdaModel::fit(&x, &y, 3, 1.0).unwrap();
        let n = x.len() as f64;
        let var: Vec<f64> = (0..3)
            .map(|j| x.iter().zip(&y).map(|(r, &c)| (r[j] - m.means[c][j]).powi(2)).sum::<f64>() / (n - 3.0))
            .collect();
        for r in &x {
            let nearest = (0..3)
                .map(|c| {
                    let d2: f64 = (0..3).map(|j| (r[j] - m.means[c][j]).powi(2) / var[j]).sum();
                    -0.5 * d2 + m.priors[c].ln()
                })
                .collect::<Vec<_>>();
            assert_eq!(m.predict(r).class, argmax_lowest(&nearest));
        }
    }
}
