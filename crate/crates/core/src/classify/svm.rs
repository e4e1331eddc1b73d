use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Prediction;

const TAU: f64 = 1e-12;

/// Result of one binary dual solve.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySvmFit {
    pub w: Vec<f64>,
    pub b: f64,
    pub alpha: Vec<f64>,
    /// Dual objective `Σα - ½ αᵀQα` after each iteration, starting at α = 0.
    pub dual_history: Vec<f64>,
    /// Maximal KKT violation `m(α) - M(α)` at exit.
    pub kkt_violation: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl BinarySvmFit {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.b
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Soft-margin linear SVM dual solved by SMO with second-order working-set
/// selection. Labels are ±1.
pub fn train_binary_svm(x: &[&[f64]], y: &[f64], c: f64, tol: f64, max_iter: usize) -> BinarySvmFit {
    let n = x.len();
    let kmat: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| dot(x[i], x[j])).collect()).collect();
    let q = |i: usize, j: usize| y[i] * y[j] * kmat[i][j];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let objective = |alpha: &[f64], grad: &[f64]| -0.5 * alpha.iter().zip(grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>();
    let mut history = vec![0.0];
    let mut iterations = 0;
    let mut violation;
    let mut converged = false;

    loop {
        let in_up = |t: usize, a: &[f64]| (y[t] > 0.0 && a[t] < c) || (y[t] < 0.0 && a[t] > 0.0);
        let in_low = |t: usize, a: &[f64]| (y[t] > 0.0 && a[t] > 0.0) || (y[t] < 0.0 && a[t] < c);

        let mut i = usize::MAX;
        let mut gmax = f64::NEG_INFINITY;
        for t in 0..n {
            if in_up(t, &alpha) && -y[t] * grad[t] > gmax {
                gmax = -y[t] * grad[t];
                i = t;
            }
        }
        let mut gmin = f64::INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if !in_low(t, &alpha) {
                continue;
            }
            let v = -y[t] * grad[t];
            gmin = gmin.min(v);
            if i != usize::MAX && v < gmax {
                let b = gmax - v;
                let mut a = kmat[i][i] + kmat[t][t] - 2.0 * kmat[i][t];
                if a <= 0.0 {
                    a = TAU;
                }
                let score = -(b * b) / a;
                if score < best {
                    best = score;
                    j = t;
                }
            }
        }
        violation = (gmax - gmin).max(0.0);
        if i == usize::MAX || j == usize::MAX || gmax - gmin < tol {
            converged = true;
            break;
        }
        if iterations >= max_iter {
            break;
        }
        iterations += 1;

        let (ai, aj) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let mut quad = kmat[i][i] + kmat[j][j] + 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = kmat[i][i] + kmat[j][j] - 2.0 * kmat[i][j];
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - ai, alpha[j] - aj);
        for k in 0..n {
            grad[k] += q(i, k) * di + q(j, k) * dj;
        }
        history.push(objective(&alpha, &grad));
    }

    // bias from free vectors, else the midpoint of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 { sum_free / n_free as f64 } else { (ub + lb) / 2.0 };

    let p = x.first().map_or(0, |r| r.len());
    let mut w = vec![0.0; p];
    for t in 0..n {
        if alpha[t] != 0.0 {
            for (wj, xj) in w.iter_mut().zip(x[t]) {
                *wj += alpha[t] * y[t] * xj;
            }
        }
    }
    BinarySvmFit {
        w,
        b: -rho,
        alpha,
        dual_history: history,
        kkt_violation: violation,
        iterations,
        converged,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmMachine {
    /// Positive class.
    pub a: usize,
    /// Negative class.
    pub b: usize,
    pub w: Vec<f64>,
    pub bias: f64,
    pub n_support: usize,
    pub iterations: usize,
    pub kkt_violation: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub n_classes: usize,
    pub c: f64,
    pub machines: Vec<SvmMachine>,
}

/// One-vs-one vote over `(a, b, decision)` triples, positive decisions
/// voting for `a`. The winner has the most votes, then the largest summed
/// decision value in its favour, then the lowest index. Returns the winner
/// and the summed decision values per class.
pub fn ovo_vote(n_classes: usize, decisions: &[(usize, usize, f64)]) -> (usize, Vec<usize>, Vec<f64>) {
    let mut votes = vec![0usize; n_classes];
    let mut sums = vec![0.0; n_classes];
    for &(a, b, d) in decisions {
        if d >= 0.0 {
            votes[a] += 1;
        } else {
            votes[b] += 1;
        }
        sums[a] += d;
        sums[b] -= d;
    }
    let mut best = 0;
    for k in 1..n_classes {
        if votes[k] > votes[best] || (votes[k] == votes[best] && sums[k] > sums[best]) {
            best = k;
        }
    }
    (best, votes, sums)
}

impl SvmModel {
    pub fn fit(x: &[Vec<f64>], y: &[usize], k: usize, c: f64, tol: f64, max_iter: usize) -> Self {
        let pairs: Vec<(usize, usize)> = (0..k).flat_map(|a| (a + 1..k).map(move |b| (a, b))).collect();
        let machines = pairs
            .par_iter()
            .map(|&(a, b)| {
                let rows: Vec<usize> = (0..x.len()).filter(|&i| y[i] == a || y[i] == b).collect();
                let xs: Vec<&[f64]> = rows.iter().map(|&i| x[i].as_slice()).collect();
                let ys: Vec<f64> = rows.iter().map(|&i| if y[i] == a { 1.0 } else { -1.0 }).collect();
                let fit = train_binary_svm(&xs, &ys, c, tol, max_iter);
                if !fit.converged {
                    log::warn!("SVM {a} vs {b} stopped after {} iterations", fit.iterations);
                }
                SvmMachine {
                    a,
                    b,
                    n_support: fit.alpha.iter().filter(|v| **v > 0.0).count(),
                    w: fit.w,
                    bias: fit.b,
                    iterations: fit.iterations,
                    kkt_violation: fit.kkt_violation,
                    converged: fit.converged,
                }
            })
            .collect();
        Self { n_classes: k, c, machines }
    }

    pub fn max_kkt_violation(&self) -> f64 {
        self.machines.iter().map(|m| m.kkt_violation).fold(0.0, f64::max)
    }

    /// Scores are summed decision values per class.
    pub fn predict(&self, x: &[f64]) -> Prediction {
        let decisions: Vec<(usize, usize, f64)> = self
            .machines
            .iter()
            .map(|m| (m.a, m.b, dot(&m.w, x) + m.bias))
            .collect();
        let (class, _, scores) = ovo_vote(self.n_classes, &decisions);
        Prediction { class, scores }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::testutil::blobs;

    #[test]
    fn separable_blobs_satisfy_margins() {
        let (x, labels) = blobs(&[vec![-3.0, -3.0], vec![3.0, 3.0]], 25, 0.8, 2);
        let y: Vec<f64> = labels.iter().map(|&c| if c == 0 { 1.0 } else { -1.0 }).collect();
        let xs: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
        let fit = train_binary_svm(&xs, &y, 1.0, 1e-3, 100_000);
        assert!(fit.converged);
        assert!(fit.kkt_violation <= 1e-3);
        for (i, r) in x.iter().enumerate() {
            let m = y[i] * fit.decision(r);
            assert!(m > 0.0);
            // KKT: α = 0 ⇒ margin ≥ 1, 0 < α < C ⇒ margin = 1, α = C ⇒ margin ≤ 1
            let a = fit.alpha[i];
            if a == 0.0 {
                assert!(m >= 1.0 - 1e-3, "{m}");
            } else if a < 1.0 {
                assert!((m - 1.0).abs() <= 1e-3, "{m}");
            } else {
                assert!(m <= 1.0 + 1e-3);
            }
        }
        for w in fit.dual_history.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
        let eq: f64 = fit.alpha.iter().zip(&y).map(|(a, b)| a * b).sum();
        assert!(eq.abs() < 1e-9);
    }

    #[test]
    fn crafted_three_way_tie() {
        // each class wins one duel
        let decisions = [(0, 1, 0.5), (0, 2, -2.0), (1, 2, 0.25)];
        let (winner, votes, sums) = ovo_vote(3, &decisions);
        assert_eq!(votes, vec![1, 1, 1]);
        // brute force: pick max of sums, lowest index on ties
        let mut expected = 0;
        for k in 0..3 {
            if sums[k] > sums[expected] {
                expected = k;
            }
        }
        assert_eq!(winner, expected);
        assert_eq!(winner, 2);
        let (w2, _, _) = ovo_vote(3, &[(0, 1, 1.0), (0, 2, -1.0), (1, 2, 1.0)]);
        assert_eq!(w2, 0);
    }

    #[test]
    fn four_classes_make_six_machines() {
        let (x, y) = blobs(&[vec![0.0, 0.0], vec![5.0, 0.0], vec![0.0, 5.0], vec![5.0, 5.0]], 5, 0.3, 4);
        let m = SvmModel::fit(&x, &y, 4, 1.0, 1e-3, 100_000);
        assert_eq!(m.machines.len(), 6);
        assert!(m.max_kkt_violation() <= 1e-3);
    }
}
