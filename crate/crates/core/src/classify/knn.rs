use serde::{Deserialize, Serialize};

use super::{argmax_lowest, Prediction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Euclidean,
    /// `1 - cos(x, y)`; a zero vector is at distance 1 from everything.
    Cosine,
}

impl Metric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
            Metric::Cosine => {
                let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
                for (x, y) in a.iter().zip(b) {
                    ab += x * y;
                    aa += x * x;
                    bb += y * y;
                }
                if aa == 0.0 || bb == 0.0 {
                    1.0
                } else {
                    1.0 - ab / (aa.sqrt() * bb.sqrt())
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub metric: Metric,
    pub n_classes: usize,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<usize>,
}

impl KnnModel {
    pub fn fit(x: Vec<Vec<f64>>, y: Vec<usize>, n_classes: usize, k: usize, metric: Metric) -> Self {
        Self {
            k,
            metric,
            n_classes,
            x,
            y,
        }
    }

    /// Equal-weight vote of the k nearest rows (distance ties by row order);
    /// scores are vote fractions.
    pub fn predict(&self, q: &[f64]) -> Prediction {
        let mut d: Vec<(f64, usize)> = self
            .x
            .iter()
            .enumerate()
            .map(|(i, r)| (self.metric.distance(q, r), i))
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let k = self.k.min(d.len());
        let mut scores = vec![0.0; self.n_classes];
        for &(_, i) in &d[..k] {
            scores[self.y[i]] += 1.0 / k as f64;
        }
        Prediction {
            class: argmax_lowest(&scores),
            scores,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distances() {
        assert_eq!(Metric::Euclidean.distance(&[0.0, 3.0], &[4.0, 0.0]), 5.0);
        assert!(Metric::Cosine.distance(&[1.0, 1.0], &[2.0, 2.0]).abs() < 1e-15);
        assert_eq!(Metric::Cosine.distance(&[0.0, 0.0], &[2.0, 2.0]), 1.0);
    }

    #[test]
    fn vote_tie_goes_to_lowest_class() {
        let m = KnnModel::fit(vec![vec![1.0], vec![-1.0]], vec![1, 0], 2, 2, Metric::Euclidean);
        assert_eq!(m.predict(&[0.0]).class, 0);
        let m1 = KnnModel::fit(vec![vec![1.0], vec![-1.0]], vec![1, 0], 2, 1, Metric::Euclidean);
        assert_eq!(m1.predict(&[1.0]).class, 1);
    }
}
