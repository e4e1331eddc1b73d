//! Multiclass evaluation: confusion matrices (rows = true class, columns =
//! predicted class), per-class one-vs-rest counts and ratios, overall
//! accuracy, macro accuracy, Cohen's kappa and ROC/AUC.
//!
//! Ratios whose denominator is zero are reported as 0 and listed in the
//! `degenerate` field instead of producing NaN.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("label vectors differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("label index {0} outside the {1} known classes")]
    UnknownLabel(usize, usize),
    #[error("ROC needs both positive and negative samples")]
    SingleClass,
    #[error("empty confusion matrix")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    /// `counts[true][predicted]`.
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(labels: &[String]) -> Self {
        let k = labels.len();
        Self {
            labels: labels.to_vec(),
            counts: vec![vec![0; k]; k],
        }
    }

    pub fn from_counts(labels: &[&str], counts: Vec<Vec<u64>>) -> Self {
        assert!(counts.len() == labels.len() && counts.iter().all(|r| r.len() == labels.len()));
        Self {
            labels: labels.iter().map(|s| s.to_string()).collect(),
            counts,
        }
    }

    pub fn k(&self) -> usize {
        self.labels.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|r| r[j]).sum()
    }

    pub fn add(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.k()).all(|i| (0..self.k()).all(|j| i == j || self.counts[i][j] == 0))
    }

    /// Expands the matrix back into (true, predicted) label pairs.
    pub fn to_label_vectors(&self) -> (Vec<usize>, Vec<usize>) {
        let (mut t, mut p) = (Vec::new(), Vec::new());
        for i in 0..self.k() {
            for j in 0..self.k() {
                for _ in 0..self.counts[i][j] {
                    t.push(i);
                    p.push(j);
                }
            }
        }
        (t, p)
    }
}

pub fn confusion(y_true: &[usize], y_pred: &[usize], labels: &[String]) -> Result<ConfusionMatrix, MetricsError> {
    if y_true.len() != y_pred.len() {
        return Err(MetricsError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    let k = labels.len();
    let mut cm = ConfusionMatrix::zeros(labels);
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= k {
            return Err(MetricsError::UnknownLabel(t, k));
        }
        if p >= k {
            return Err(MetricsError::UnknownLabel(p, k));
        }
        cm.counts[t][p] += 1;
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fne: u64,
    pub accuracy: f64,
    pub ppv: f64,
    pub npv: f64,
    pub tpr: f64,
    pub tnr: f64,
    pub f_score: f64,
    pub mcc: f64,
    /// Names of ratios that were 0/0.
    pub degenerate: Vec<String>,
}

fn ratio(num: f64, den: f64, name: &str, flags: &mut Vec<String>) -> f64 {
    if den == 0.0 {
        flags.push(name.to_string());
        0.0
    } else {
        num / den
    }
}

pub fn class_metrics(cm: &ConfusionMatrix, i: usize) -> ClassMetrics {
    let n = cm.total();
    let tp = cm.counts[i][i];
    let fne = cm.row_sum(i) - tp;
    let fp = cm.col_sum(i) - tp;
    let tn = n - tp - fne - fp;
    let (tpf, tnf, fpf, fnf) = (tp as f64, tn as f64, fp as f64, fne as f64);
    let mut flags = Vec::new();
    let accuracy = ratio(tpf + tnf, n as f64, "accuracy", &mut flags);
    let ppv = ratio(tpf, tpf + fpf, "ppv", &mut flags);
    let npv = ratio(tnf, tnf + fnf, "npv", &mut flags);
    let tpr = ratio(tpf, tpf + fnf, "tpr", &mut flags);
    let tnr = ratio(tnf, tnf + fpf, "tnr", &mut flags);
    let f_score = ratio(2.0 * ppv * tpr, ppv + tpr, "f_score", &mut flags);
    let mcc = ratio(
        tpf * tnf - fpf * fnf,
        ((tpf + fpf) * (tpf + fnf) * (tnf + fpf) * (tnf + fnf)).sqrt(),
        "mcc",
        &mut flags,
    );
    ClassMetrics {
        label: cm.labels[i].clone(),
        tp,
        tn,
        fp,
        fne,
        accuracy,
        ppv,
        npv,
        tpr,
        tnr,
        f_score,
        mcc,
        degenerate: flags,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallMetrics {
    pub n: u64,
    pub accuracy: f64,
    pub macro_accuracy: f64,
    pub kappa: f64,
    /// Chance agreement was 1, so kappa is undefined and reported as 0.
    pub kappa_degenerate: bool,
}

pub fn overall_metrics(cm: &ConfusionMatrix) -> Result<OverallMetrics, MetricsError> {
    let n = cm.total();
    if n == 0 {
        return Err(MetricsError::Empty);
    }
    let nf = n as f64;
    let p_o = cm.trace() as f64 / nf;
    let p_e: f64 = (0..cm.k())
        .map(|i| cm.row_sum(i) as f64 * cm.col_sum(i) as f64)
        .sum::<f64>()
        / (nf * nf);
    let macro_accuracy = (0..cm.k()).map(|i| class_metrics(cm, i).accuracy).sum::<f64>() / cm.k() as f64;
    let kappa_degenerate = (1.0 - p_e).abs() < 1e-15;
    Ok(OverallMetrics {
        n,
        accuracy: p_o,
        macro_accuracy,
        kappa: if kappa_degenerate { 0.0 } else { (p_o - p_e) / (1.0 - p_e) },
        kappa_degenerate,
    })
}

// ---------------------------------------------------------------------------
// ROC
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocResult {
    pub auc: f64,
    /// Operating point maximizing Youden's J (TPR − FPR); ties go to the
    /// higher threshold.
    pub fpr_at_operating_point: f64,
    pub tpr_at_operating_point: f64,
    pub threshold: f64,
    /// (fpr, tpr) from (0, 0) to (1, 1), one point per distinct score.
    pub curve: Vec<(f64, f64)>,
}

/// One-vs-rest ROC by sweeping every distinct score as threshold
/// (`score >= threshold` predicts positive). Tied scores move the curve
/// diagonally, which makes the trapezoid AUC equal to the Mann–Whitney
/// statistic with ties counted as one half.
pub fn roc_auc(scores: &[f64], positive: &[bool]) -> Result<RocResult, MetricsError> {
    if scores.len() != positive.len() {
        return Err(MetricsError::LengthMismatch(scores.len(), positive.len()));
    }
    let n_pos = positive.iter().filter(|p| **p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut curve = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0, f64::INFINITY);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let thr = scores[order[i]];
        while i < order.len() && scores[order[i]] == thr {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let (fpr, tpr) = (fp as f64 / n_neg as f64, tp as f64 / n_pos as f64);
        let (pf, pt) = *curve.last().unwrap();
        auc += (fpr - pf) * (tpr + pt) / 2.0;
        curve.push((fpr, tpr));
        let j = tpr - fpr;
        if j > best.0 {
            best = (j, fpr, tpr, thr);
        }
    }
    Ok(RocResult {
        auc,
        fpr_at_operating_point: best.1,
        tpr_at_operating_point: best.2,
        threshold: best.3,
        curve,
    })
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRoc {
    pub label: String,
    pub auc: f64,
    pub fpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub title: String,
    pub confusion: ConfusionMatrix,
    pub per_class: Vec<ClassMetrics>,
    pub overall: OverallMetrics,
    pub roc: Vec<ClassRoc>,
}

impl MetricReport {
    /// `scores[row][class]` enables the ROC section when given.
    pub fn new(title: &str, cm: &ConfusionMatrix, roc_input: Option<(&[Vec<f64>], &[usize])>) -> Result<Self, MetricsError> {
        let overall = overall_metrics(cm)?;
        let per_class = (0..cm.k()).map(|i| class_metrics(cm, i)).collect();
        let mut roc = Vec::new();
        if let Some((scores, y)) = roc_input {
            for (c, label) in cm.labels.iter().enumerate() {
                let s: Vec<f64> = scores.iter().map(|r| r[c]).collect();
                let pos: Vec<bool> = y.iter().map(|&t| t == c).collect();
                if let Ok(r) = roc_auc(&s, &pos) {
                    roc.push(ClassRoc {
                        label: label.clone(),
                        auc: r.auc,
                        fpr: r.fpr_at_operating_point,
                    });
                }
            }
        }
        Ok(Self {
            title: title.to_string(),
            confusion: cm.clone(),
            per_class,
            overall,
            roc,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned text: confusion matrix with row totals and TPR, then the
    /// per-class metric table and the overall figures.
    pub fn to_text(&self) -> String {
        let cm = &self.confusion;
        let w = cm.labels.iter().map(String::len).max().unwrap_or(2).max(6);
        let mut s = String::new();
        let _ = writeln!(s, "{}", self.title);
        let _ = write!(s, "{:>w$} ", "true\\pred");
        for l in &cm.labels {
            let _ = write!(s, "{l:>w$} ");
        }
        let _ = writeln!(s, "{:>w$} {:>w$} {:>w$}", "total", "FNE", "TPR");
        for (i, l) in cm.labels.iter().enumerate() {
            let _ = write!(s, "{l:>w$} ", w = w.max(9));
            for c in &cm.counts[i] {
                let _ = write!(s, "{c:>w$} ");
            }
            let m = &self.per_class[i];
            let _ = writeln!(s, "{:>w$} {:>w$} {:>w$.3}", cm.row_sum(i), m.fne, m.tpr);
        }
        let _ = write!(s, "{:>w$} ", "PPV", w = w.max(9));
        for m in &self.per_class {
            let _ = write!(s, "{:>w$.3} ", m.ppv);
        }
        let _ = writeln!(s);
        let _ = write!(s, "{:>w$} ", "FP", w = w.max(9));
        for m in &self.per_class {
            let _ = write!(s, "{:>w$} ", m.fp);
        }
        let _ = writeln!(s);
        let _ = writeln!(s);

        let _ = write!(s, "{:<12}", "metric");
        for l in &cm.labels {
            let _ = write!(s, "{l:>w$} ");
        }
        let _ = writeln!(s);
        type Getter = fn(&ClassMetrics) -> String;
        let rows: [(&str, Getter); 11] = [
            ("TP", |m| m.tp.to_string()),
            ("TN", |m| m.tn.to_string()),
            ("FP", |m| m.fp.to_string()),
            ("FNE", |m| m.fne.to_string()),
            ("accuracy", |m| format!("{:.3}", m.accuracy)),
            ("PPV", |m| format!("{:.3}", m.ppv)),
            ("TPR", |m| format!("{:.3}", m.tpr)),
            ("TNR", |m| format!("{:.3}", m.tnr)),
            ("NPV", |m| format!("{:.3}", m.npv)),
            ("F-score", |m| format!("{:.3}", m.f_score)),
            ("MCC", |m| format!("{:.3}", m.mcc)),
        ];
        for (name, get) in rows {
            let _ = write!(s, "{name:<12}");
            for m in &self.per_class {
                let _ = write!(s, "{:>w$} ", get(m));
            }
            let _ = writeln!(s);
        }
        let _ = writeln!(s);
        let o = &self.overall;
        let _ = writeln!(
            s,
            "n = {}  accuracy = {:.4}  macro accuracy = {:.4}  kappa = {:.4}",
            o.n, o.accuracy, o.macro_accuracy, o.kappa
        );
        for r in &self.roc {
            let _ = writeln!(s, "ROC {}: AUC = {:.3}, FPR = {:.3}", r.label, r.auc, r.fpr);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn diagonal_confusion() {
        let y = [0, 1, 2, 3, 3];
        let cm = confusion(&y, &y, &labels(4)).unwrap();
        assert!(cm.is_diagonal());
        let o = overall_metrics(&cm).unwrap();
        assert_eq!((o.accuracy, o.kappa), (1.0, 1.0));
        assert!(matches!(confusion(&[4], &[0], &labels(4)), Err(MetricsError::UnknownLabel(4, 4))));
    }

    #[test]
    fn one_class_matrix_is_flagged() {
        let cm = ConfusionMatrix::from_counts(&["a", "b"], vec![vec![5, 0], vec![0, 0]]);
        let m = class_metrics(&cm, 0);
        assert!(m.degenerate.contains(&"tnr".to_string()));
        assert_eq!(m.tnr, 0.0);
        let o = overall_metrics(&cm).unwrap();
        assert!(o.kappa_degenerate);
        assert_eq!(o.kappa, 0.0);
    }

    #[test]
    fn kappa_zero_at_chance() {
        // p_o = p_e = 0.5
        let cm = ConfusionMatrix::from_counts(&["a", "b"], vec![vec![1, 1], vec![1, 1]]);
        assert!(overall_metrics(&cm).unwrap().kappa.abs() < 1e-15);
    }

    #[test]
    fn roc_edge_cases() {
        let r = roc_auc(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap();
        assert_eq!(r.auc, 1.0);
        assert_eq!(r.fpr_at_operating_point, 0.0);
        let t = roc_auc(&[0.5; 6], &[true, false, true, false, false, true]).unwrap();
        assert_eq!(t.auc, 0.5);
        assert_eq!(roc_auc(&[1.0, 2.0], &[true, true]), Err(MetricsError::SingleClass));
    }

    #[test]
    fn text_report_mentions_kappa() {
        let cm = ConfusionMatrix::from_counts(&["RP", "PP"], vec![vec![9, 1], vec![2, 8]]);
        let r = MetricReport::new("demo", &cm, None).unwrap();
        let t = r.to_text();
        assert!(t.contains("kappa = 0.7000"), "{t}");
        let back: MetricReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }
}
