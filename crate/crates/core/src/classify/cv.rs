use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train, ClassifyError, ModelSpec, TrainedModel};
use crate::features::Dataset;
use crate::metrics::{confusion, ConfusionMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub test_rows: Vec<usize>,
    pub confusion: ConfusionMatrix,
    /// Largest SVM KKT violation over the fold's machines, if an SVM.
    pub kkt_violation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub spec: ModelSpec,
    pub k: usize,
    pub seed: u64,
    /// Fold of every row.
    pub fold_of: Vec<usize>,
    pub folds: Vec<FoldResult>,
    pub pooled: ConfusionMatrix,
    pub accuracy: f64,
    /// Validation prediction of every row.
    pub predicted: Vec<usize>,
    /// Validation class scores of every row.
    pub scores: Vec<Vec<f64>>,
}

/// Stratified fold assignment: each class is shuffled with the seed and
/// dealt round-robin, continuing the deal across classes.
pub fn stratified_folds(y: &[usize], n_classes: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0; y.len()];
    let mut next = 0;
    for c in 0..n_classes {
        let mut members: Vec<usize> = (0..y.len()).filter(|&i| y[i] == c).collect();
        members.shuffle(&mut rng);
        for i in members {
            fold_of[i] = next % k;
            next += 1;
        }
    }
    fold_of
}

/// Stratified k-fold cross-validation; `k` equal to the row count is
/// leave-one-out with row `i` in fold `i`. Each fold trains a fresh model
/// (standardization included) on the other folds; folds run in parallel
/// and are merged in fold order.
pub fn cross_validate(spec: &ModelSpec, data: &Dataset, k: usize, seed: u64) -> Result<CvReport, ClassifyError> {
    spec.validate()?;
    if k < 2 {
        return Err(ClassifyError::InvalidSpec("need at least 2 folds".into()));
    }
    let loo = k == data.len();
    for (c, &count) in data.class_counts().iter().enumerate() {
        if count < k && !loo {
            return Err(ClassifyError::ClassTooSmall {
                class: data.labels[c].to_string(),
                count,
                k,
            });
        }
    }
    let fold_of = if loo {
        (0..k).collect()
    } else {
        stratified_folds(&data.y, data.n_classes(), k, seed)
    };
    let label_names: Vec<String> = data.labels.iter().map(|l| l.to_string()).collect();

    type FoldOut = (FoldResult, Vec<(usize, usize, Vec<f64>)>);
    let results: Vec<FoldOut> = (0..k)
        .into_par_iter()
        .map(|f| {
            let train_rows: Vec<usize> = (0..data.len()).filter(|&i| fold_of[i] != f).collect();
            let test_rows: Vec<usize> = (0..data.len()).filter(|&i| fold_of[i] == f).collect();
            let model: TrainedModel = train(spec, &data.subset(&train_rows))?;
            let mut out = Vec::with_capacity(test_rows.len());
            for &i in &test_rows {
                let p = model.predict(&data.x[i])?;
                out.push((i, p.class, p.scores));
            }
            let truth: Vec<usize> = test_rows.iter().map(|&i| data.y[i]).collect();
            let pred: Vec<usize> = out.iter().map(|o| o.1).collect();
            let cm = confusion(&truth, &pred, &label_names).expect("labels in range");
            let kkt = match &model.params {
                super::ModelParams::Svm(m) => Some(m.max_kkt_violation()),
                _ => None,
            };
            Ok((
                FoldResult {
                    fold: f,
                    test_rows,
                    confusion: cm,
                    kkt_violation: kkt,
                },
                out,
            ))
        })
        .collect::<Result<_, ClassifyError>>()?;

    let mut pooled = ConfusionMatrix::zeros(&label_names);
    let mut predicted = vec![0; data.len()];
    let mut scores = vec![Vec::new(); data.len()];
    let mut folds = Vec::with_capacity(k);
    for (fold, rows) in results {
        pooled.add(&fold.confusion);
        for (i, p, s) in rows {
            predicted[i] = p;
            scores[i] = s;
        }
        folds.push(fold);
    }
    Ok(CvReport {
        spec: spec.clone(),
        k,
        seed,
        fold_of,
        accuracy: pooled.trace() as f64 / pooled.total() as f64,
        folds,
        pooled,
        predicted,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::testutil::blobs;
    use crate::session::MotorTaskKind as K;

    fn data(n: usize) -> Dataset {
        let (x, y) = blobs(
            &[vec![0.0, 0.0], vec![3.0, 0.0], vec![0.0, 3.0], vec![3.0, 3.0]],
            n,
            0.7,
            6,
        );
        let kinds = K::BUILTIN;
        Dataset::from_rows(x.into_iter().zip(y).map(|(r, c)| (kinds[c].clone(), r)).collect(), None)
    }

    #[test]
    fn folds_are_stratified() {
        let d = data(20);
        let f = stratified_folds(&d.y, 4, 5, 9);
        for fold in 0..5 {
            for c in 0..4 {
                let n = (0..80).filter(|&i| f[i] == fold && d.y[i] == c).count();
                assert_eq!(n, 4);
            }
        }
    }

    #[test]
    fn pooled_equals_fold_sum_and_is_deterministic() {
        let d = data(20);
        let a = cross_validate(&ModelSpec::svm(), &d, 5, 1).unwrap();
        let b = cross_validate(&ModelSpec::svm(), &d, 5, 1).unwrap();
        assert_eq!(a, b);
        let mut sum = ConfusionMatrix::zeros(&a.pooled.labels);
        for f in &a.folds {
            sum.add(&f.confusion);
        }
        assert_eq!(sum, a.pooled);
        let c = cross_validate(&ModelSpec::svm(), &d, 5, 2).unwrap();
        for i in 0..4 {
            assert_eq!(c.pooled.row_sum(i), a.pooled.row_sum(i));
        }
    }

    #[test]
    fn leave_one_out_with_duplicates() {
        let mut d = data(3);
        let copy = d.clone();
        d.x.extend(copy.x);
        d.y.extend(copy.y);
        d.sources.extend(copy.sources);
        let r = cross_validate(&ModelSpec::knn_fine(), &d, d.len(), 0).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.folds.len(), 24);
    }

    #[test]
    fn small_class_rejected() {
        let d = data(3);
        assert!(matches!(
            cross_validate(&ModelSpec::svm(), &d, 5, 0),
            Err(ClassifyError::ClassTooSmall { .. })
        ));
    }
}
