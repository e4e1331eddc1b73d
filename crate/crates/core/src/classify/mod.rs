//! Motor-task classifiers on standardized spectral features: CART decision
//! tree, shrinkage linear discriminant, one-vs-one linear SVM and k-nearest
//! neighbours, plus stratified k-fold cross-validation.
//!
//! Ties between classes always resolve to the lowest class index (for the
//! SVM, after comparing summed decision values).

pub mod cv;
pub mod knn;
pub mod lda;
pub mod svm;
pub mod tree;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::Dataset;
use crate::session::MotorTaskKind;

pub use cv::{cross_validate, stratified_folds, CvReport, FoldResult};
pub use knn::{KnnModel, Metric};
pub use lda::LdaModel;
pub use svm::{ovo_vote, train_binary_svm, BinarySvmFit, SvmMachine, SvmModel};
pub use tree::{gini, TreeModel};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("training set has a single class")]
    SingleClass,
    #[error("need at least {needed} rows, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("class {class} has {count} rows, fewer than {k} folds")]
    ClassTooSmall { class: String, count: usize, k: usize },
    #[error("feature layout mismatch: model expects {expected} values, got {got}")]
    LayoutMismatch { expected: usize, got: usize },
    #[error("every feature has zero variance")]
    AllFeaturesConstant,
    #[error("covariance is singular; use shrinkage > 0")]
    Singular,
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("model file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum Algorithm {
    /// CART with Gini impurity, best-first growth.
    DecisionTree { max_splits: usize },
    /// Linear discriminant with pooled covariance shrunk toward its diagonal.
    Discriminant { shrinkage: f64 },
    /// Linear soft-margin SVM, one machine per class pair.
    Svm { c: f64, tol: f64, max_iter: usize },
    Knn { k: usize, metric: Metric },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub algorithm: Algorithm,
    /// z-score features with statistics from the training rows.
    #[serde(default = "yes")]
    pub standardize: bool,
}

fn yes() -> bool {
    true
}

impl ModelSpec {
    pub fn decision_tree() -> Self {
        Self::new(Algorithm::DecisionTree { max_splits: 100 })
    }

    pub fn discriminant() -> Self {
        Self::new(Algorithm::Discriminant { shrinkage: 0.1 })
    }

    pub fn svm() -> Self {
        Self::new(Algorithm::Svm {
            c: 1.0,
            tol: 1e-3,
            max_iter: 1_000_000,
        })
    }

    pub fn knn_fine() -> Self {
        Self::new(Algorithm::Knn {
            k: 1,
            metric: Metric::Euclidean,
        })
    }

    pub fn knn_cosine() -> Self {
        Self::new(Algorithm::Knn {
            k: 10,
            metric: Metric::Cosine,
        })
    }

    fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            standardize: true,
        }
    }

    /// Short name used on the command line: dt, da, svm, knn1, knn10.
    pub fn by_name(name: &str) -> Option<Self> {
        Some(match name {
            "dt" => Self::decision_tree(),
            "da" => Self::discriminant(),
            "svm" => Self::svm(),
            "knn1" | "knn" => Self::knn_fine(),
            "knn10" => Self::knn_cosine(),
            _ => return None,
        })
    }

    pub fn name(&self) -> String {
        match &self.algorithm {
            Algorithm::DecisionTree { .. } => "DT".into(),
            Algorithm::Discriminant { .. } => "DA".into(),
            Algorithm::Svm { .. } => "SVM".into(),
            Algorithm::Knn { k, .. } => format!("kNN-{k}"),
        }
    }

    pub fn validate(&self) -> Result<(), ClassifyError> {
        let bad = |m: &str| Err(ClassifyError::InvalidSpec(m.to_string()));
        match &self.algorithm {
            Algorithm::DecisionTree { max_splits } if *max_splits == 0 => bad("max_splits must be positive"),
            Algorithm::Discriminant { shrinkage } if !(0.0..=1.0).contains(shrinkage) => bad("shrinkage must lie in [0, 1]"),
            Algorithm::Svm { c, tol, .. } if !(*c > 0.0 && *tol > 0.0) => bad("C and tolerance must be positive"),
            Algorithm::Knn { k, .. } if *k == 0 => bad("k must be positive"),
            _ => Ok(()),
        }
    }
}

// ---------------------------------------------------------------------------
// Standardization
// ---------------------------------------------------------------------------

/// Per-feature affine map fit on training rows. Features with zero variance
/// in the training rows are dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub n_input: usize,
    pub keep: Vec<usize>,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &[Vec<f64>], standardize: bool) -> Result<Self, ClassifyError> {
        let p = x.first().map_or(0, Vec::len);
        let n = x.len() as f64;
        let (mut keep, mut mean, mut scale) = (Vec::new(), Vec::new(), Vec::new());
        let mut dropped = 0;
        for j in 0..p {
            let m = x.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = x.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            let sd = var.sqrt();
            if !(sd > 1e-12 * (1.0 + m.abs())) {
                dropped += 1;
                continue;
            }
            keep.push(j);
            if standardize {
                mean.push(m);
                scale.push(sd);
            } else {
                mean.push(0.0);
                scale.push(1.0);
            }
        }
        if dropped > 0 {
            log::warn!("dropped {dropped} zero-variance feature(s) of {p}");
        }
        if keep.is_empty() {
            return Err(ClassifyError::AllFeaturesConstant);
        }
        Ok(Self {
            n_input: p,
            keep,
            mean,
            scale,
        })
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>, ClassifyError> {
        if x.len() != self.n_input {
            return Err(ClassifyError::LayoutMismatch {
                expected: self.n_input,
                got: x.len(),
            });
        }
        Ok(self
            .keep
            .iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(&j, (m, s))| (x[j] - m) / s)
            .collect())
    }
}

// ---------------------------------------------------------------------------
// Trained models
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelParams {
    Tree(TreeModel),
    Lda(LdaModel),
    Svm(SvmModel),
    Knn(KnnModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub spec: ModelSpec,
    pub labels: Vec<MotorTaskKind>,
    pub standardizer: Standardizer,
    pub params: ModelParams,
    /// Hash of the feature layout descriptor the model was trained on.
    pub layout_hash: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class: usize,
    /// One score per class; larger favours the class.
    pub scores: Vec<f64>,
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax_lowest(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

pub fn train(spec: &ModelSpec, data: &Dataset) -> Result<TrainedModel, ClassifyError> {
    spec.validate()?;
    if data.len() < 2 {
        return Err(ClassifyError::TooFewSamples {
            needed: 2,
            got: data.len(),
        });
    }
    let counts = data.class_counts();
    if counts.iter().filter(|c| **c > 0).count() < 2 {
        return Err(ClassifyError::SingleClass);
    }
    let standardizer = Standardizer::fit(&data.x, spec.standardize)?;
    let z: Vec<Vec<f64>> = data
        .x
        .iter()
        .map(|r| standardizer.transform(r))
        .collect::<Result<_, _>>()?;
    let k = data.n_classes();
    let params = match &spec.algorithm {
        Algorithm::DecisionTree { max_splits } => ModelParams::Tree(TreeModel::fit(&z, &data.y, k, *max_splits)),
        Algorithm::Discriminant { shrinkage } => ModelParams::Lda(LdaModel::fit(&z, &data.y, k, *shrinkage)?),
        Algorithm::Svm { c, tol, max_iter } => ModelParams::Svm(SvmModel::fit(&z, &data.y, k, *c, *tol, *max_iter)),
        Algorithm::Knn { k: nn, metric } => ModelParams::Knn(KnnModel::fit(z, data.y.clone(), k, *nn, *metric)),
    };
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        spec: spec.clone(),
        labels: data.labels.clone(),
        standardizer,
        params,
        layout_hash: data.layout.as_ref().map(|l| l.hash()),
    })
}

impl TrainedModel {
    pub fn n_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction, ClassifyError> {
        let z = self.standardizer.transform(x)?;
        Ok(match &self.params {
            ModelParams::Tree(m) => m.predict(&z),
            ModelParams::Lda(m) => m.predict(&z),
            ModelParams::Svm(m) => m.predict(&z),
            ModelParams::Knn(m) => m.predict(&z),
        })
    }

    pub fn predict_all(&self, x: &[Vec<f64>]) -> Result<Vec<Prediction>, ClassifyError> {
        x.iter().map(|r| self.predict(r)).collect()
    }

    /// Checks that a dataset matches the layout the model was trained on.
    pub fn check_layout(&self, data: &Dataset) -> Result<(), ClassifyError> {
        if let (Some(h), Some(l)) = (self.layout_hash, &data.layout) {
            if h != l.hash() {
                return Err(ClassifyError::LayoutMismatch {
                    expected: self.standardizer.n_input,
                    got: l.len(),
                });
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ClassifyError> {
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| ClassifyError::Format(e.to_string()))?;
        match v.get("format_version").and_then(|x| x.as_u64()) {
            Some(ver) if ver == MODEL_FORMAT_VERSION as u64 => {}
            Some(ver) => return Err(ClassifyError::Format(format!("unsupported format version {ver}"))),
            None => return Err(ClassifyError::Format("missing format_version".into())),
        }
        serde_json::from_value(v).map_err(|e| ClassifyError::Format(e.to_string()))
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Dataset;
    use crate::session::MotorTaskKind as K;

    fn dataset() -> Dataset {
        let (x, y) = testutil::blobs(&[vec![0.0, 0.0, 5.0], vec![4.0, 0.0, 5.0], vec![0.0, 4.0, 5.0]], 10, 0.5, 1);
        let labels = [K::Rest, K::Posture, K::FingerToNose];
        let mut rows: Vec<(K, Vec<f64>)> = x.into_iter().zip(y).map(|(r, c)| (labels[c].clone(), r)).collect();
        for r in rows.iter_mut() {
            r.1.push(7.0);
        }
        Dataset::from_rows(rows, None)
    }

    #[test]
    fn standardizer_drops_constant_columns() {
        let ds = dataset();
        let s = Standardizer::fit(&ds.x, true).unwrap();
        assert_eq!(s.keep, vec![0, 1, 2]);
        assert!(matches!(s.transform(&[1.0]), Err(ClassifyError::LayoutMismatch { .. })));
        assert!(matches!(
            Standardizer::fit(&[vec![1.0], vec![1.0]], true),
            Err(ClassifyError::AllFeaturesConstant)
        ));
    }

    #[test]
    fn every_algorithm_fits_blobs_and_round_trips() {
        let ds = dataset();
        for spec in [
            ModelSpec::decision_tree(),
            ModelSpec::discriminant(),
            ModelSpec::svm(),
            ModelSpec::knn_fine(),
            ModelSpec::knn_cosine(),
        ] {
            let m = train(&spec, &ds).unwrap();
            let acc = ds
                .x
                .iter()
                .zip(&ds.y)
                .filter(|(x, y)| m.predict(x).unwrap().class == **y)
                .count();
            assert!(acc >= 28, "{} {acc}", spec.name());
            let back = TrainedModel::from_json(&m.to_json()).unwrap();
            assert_eq!(back, m);
        }
    }

    #[test]
    fn single_class_rejected() {
        let ds = Dataset::from_rows(vec![(K::Rest, vec![1.0]), (K::Rest, vec![2.0])], None);
        assert!(matches!(train(&ModelSpec::svm(), &ds), Err(ClassifyError::SingleClass)));
    }

    #[test]
    fn model_version_is_checked() {
        let m = train(&ModelSpec::knn_fine(), &dataset()).unwrap();
        let text = m.to_json().replacen("\"format_version\":1", "\"format_version\":9", 1);
        assert!(TrainedModel::from_json(&text).unwrap_err().to_string().contains("version 9"));
    }
}
