//! Classification metrics: confusion counts, threshold metrics, ROC/AUC,
//! binary cross-entropy and multi-class confusion matrices.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::PROB_CLAMP;

/// Decision threshold used for every reported table.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {labels} labels vs {scores} scores")]
    LengthMismatch { labels: usize, scores: usize },
    #[error("no samples to evaluate")]
    Empty,
    #[error("labels contain a single class; ROC/AUC undefined")]
    SingleClass,
    #[error("label {0} is not binary")]
    NonBinaryLabel(i32),
    #[error("class {class} out of range for {classes} classes")]
    ClassOutOfRange { class: usize, classes: usize },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// Counts plus derived metrics; serializes as one flat JSON object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(flatten)]
    pub counts: ConfusionCounts,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl RocCurve {
    /// `fpr,tpr,threshold` CSV. The opening point's threshold is `inf`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fpr,tpr,threshold\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.fpr, p.tpr, p.threshold));
        }
        out
    }
}

fn check_lengths(labels: usize, scores: usize) -> Result<(), MetricsError> {
    if labels != scores {
        return Err(MetricsError::LengthMismatch { labels, scores });
    }
    Ok(())
}

fn is_positive(label: i32) -> Result<bool, MetricsError> {
    match label {
        0 => Ok(false),
        1 => Ok(true),
        other => Err(MetricsError::NonBinaryLabel(other)),
    }
}

/// Tallies predictions, a sample being predicted positive iff `score >= threshold`.
pub fn confusion(
    labels: &[i32],
    scores: &[f64],
    threshold: f64,
) -> Result<ConfusionCounts, MetricsError> {
    check_lengths(labels.len(), scores.len())?;
    let mut c = ConfusionCounts::default();
    for (&label, &score) in labels.iter().zip(scores) {
        match (is_positive(label)?, score >= threshold) {
            (true, true) => c.tp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
        }
    }
    Ok(c)
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy, precision, recall and F1 from counts; zero denominators give 0.
/// `auc` is left at 0 for the caller to fill.
pub fn derive_metrics(c: ConfusionCounts) -> Result<MetricReport, MetricsError> {
    if c.total() == 0 {
        return Err(MetricsError::Empty);
    }
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(MetricReport {
        counts: c,
        accuracy: ratio(c.tp + c.tn, c.total()),
        precision,
        recall,
        f1,
        auc: 0.0,
    })
}

/// ROC curve over the distinct scores, highest first, with trapezoidal AUC.
///
/// Equal scores form a single threshold step, which gives tied
/// positive/negative pairs half credit.
pub fn roc_auc(labels: &[i32], scores: &[f64]) -> Result<RocCurve, MetricsError> {
    check_lengths(labels.len(), scores.len())?;
    let mut pairs = Vec::with_capacity(labels.len());
    for (&l, &s) in labels.iter().zip(scores) {
        pairs.push((s, is_positive(l)?));
    }
    let n_pos = pairs.iter().filter(|p| p.1).count();
    let n_neg = pairs.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < pairs.len() {
        let threshold = pairs[i].0;
        let (prev_tp, prev_fp) = (tp, fp);
        while i < pairs.len() && pairs[i].0 == threshold {
            if pairs[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        // Trapezoid in integer units, scaled once at the end.
        auc += (fp - prev_fp) as f64 * (tp + prev_tp) as f64 / 2.0;
        points.push(RocPoint {
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
            threshold,
        });
    }
    Ok(RocCurve {
        points,
        auc: auc / (n_pos as f64 * n_neg as f64),
    })
}

/// Mean binary cross-entropy with scores clamped to `[1e-12, 1 - 1e-12]`.
pub fn bce_loss(labels: &[i32], scores: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(labels.len(), scores.len())?;
    if labels.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut total = 0.0;
    for (&l, &s) in labels.iter().zip(scores) {
        let p = s.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        total -= if is_positive(l)? {
            p.ln()
        } else {
            (1.0 - p).ln()
        };
    }
    Ok(total / labels.len() as f64)
}

/// Confusion counts, derived metrics and AUC in one report.
pub fn evaluate(
    labels: &[i32],
    scores: &[f64],
    threshold: f64,
) -> Result<MetricReport, MetricsError> {
    let mut report = derive_metrics(confusion(labels, scores, threshold)?)?;
    report.auc = roc_auc(labels, scores)?.auc;
    Ok(report)
}

/// `matrix[true][predicted]` counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MulticlassConfusion {
    pub matrix: Vec<Vec<usize>>,
}

impl MulticlassConfusion {
    pub fn total(&self) -> usize {
        self.matrix.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let trace: usize = (0..self.matrix.len()).map(|i| self.matrix[i][i]).sum();
        ratio(trace, self.total())
    }
}

pub fn multiclass_confusion(
    labels: &[usize],
    predictions: &[usize],
    classes: usize,
) -> Result<MulticlassConfusion, MetricsError> {
    check_lengths(labels.len(), predictions.len())?;
    let mut matrix = vec![vec![0; classes]; classes];
    for (&t, &p) in labels.iter().zip(predictions) {
        for class in [t, p] {
            if class >= classes {
                return Err(MetricsError::ClassOutOfRange { class, classes });
            }
        }
        matrix[t][p] += 1;
    }
    Ok(MulticlassConfusion { matrix })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(tp: usize, tn: usize, fp: usize, fn_: usize) -> ConfusionCounts {
        ConfusionCounts { tp, tn, fp, fn_ }
    }

    #[test]
    fn confusion_perfect_and_inverted() {
        assert_eq!(
            confusion(&[1, 0], &[0.9, 0.1], 0.5).unwrap(),
            counts(1, 1, 0, 0)
        );
        assert_eq!(
            confusion(&[1, 0], &[0.1, 0.9], 0.5).unwrap(),
            counts(0, 0, 1, 1)
        );
        // the threshold itself counts as positive
        assert_eq!(confusion(&[1], &[0.5], 0.5).unwrap(), counts(1, 0, 0, 0));
    }

    #[test]
    fn confusion_errors() {
        assert!(matches!(
            confusion(&[1], &[0.1, 0.2], 0.5),
            Err(MetricsError::LengthMismatch { .. })
        ));
        assert_eq!(
            confusion(&[2], &[0.1], 0.5),
            Err(MetricsError::NonBinaryLabel(2))
        );
    }

    #[test]
    fn wdbc_table_rows() {
        let r = derive_metrics(counts(39, 73, 1, 1)).unwrap();
        assert!((r.accuracy - 0.982).abs() < 5e-4, "{}", r.accuracy);
        let r = derive_metrics(counts(43, 70, 0, 1)).unwrap();
        assert_eq!(r.precision, 1.0);
        assert!((r.recall - 0.977).abs() < 5e-4);
        // 86/87 = 0.98851, printed as 0.988
        assert!((r.f1 - 0.988).abs() < 1e-3);
    }

    #[test]
    fn pima_table_row() {
        let r = derive_metrics(counts(29, 87, 17, 21)).unwrap();
        assert!((r.accuracy - 0.753).abs() < 5e-4);
        assert!((r.precision - 0.630).abs() < 5e-4);
    }

    #[test]
    fn degenerate_denominators_are_zero() {
        let r = derive_metrics(counts(0, 5, 0, 3)).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
        assert_eq!(derive_metrics(counts(0, 0, 0, 0)), Err(MetricsError::Empty));
    }

    #[test]
    fn auc_extremes() {
        let c = roc_auc(&[0, 0, 1, 1], &[0.1, 0.2, 0.8, 0.9]).unwrap();
        assert_eq!(c.auc, 1.0);
        let c = roc_auc(&[0, 1, 0, 1], &[0.3; 4]).unwrap();
        assert_eq!(c.auc, 0.5);
        assert_eq!(c.points.len(), 2);
        assert_eq!(
            roc_auc(&[1, 1], &[0.1, 0.2]),
            Err(MetricsError::SingleClass)
        );
    }

    #[test]
    fn roc_points_span_unit_square() {
        let c = roc_auc(&[0, 1, 1, 0, 1], &[0.2, 0.7, 0.4, 0.4, 0.9]).unwrap();
        let first = c.points.first().unwrap();
        let last = c.points.last().unwrap();
        assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        assert!(c.points.windows(2).all(|w| w[0].fpr <= w[1].fpr));
        assert!(c.to_csv().starts_with("fpr,tpr,threshold\n0,0,inf\n"));
    }

    #[test]
    fn bce_values() {
        let near = bce_loss(&[1], &[1.0 - 1e-12]).unwrap();
        assert!(near > 0.0 && near < 2e-12);
        let half = bce_loss(&[1, 0], &[0.5, 0.5]).unwrap();
        assert!((half - std::f64::consts::LN_2).abs() < 1e-15);
        // -(ln 0.9 + ln 0.8 + ln 0.8)/3 = 0.1838825...
        let v = bce_loss(&[1, 0, 1], &[0.9, 0.2, 0.8]).unwrap();
        assert!((v - 0.183_882_539_428_748_6).abs() < 1e-12, "{v}");
        // saturated scores stay finite
        assert!(bce_loss(&[1, 0], &[0.0, 1.0]).unwrap().is_finite());
    }

    #[test]
    fn multiclass_matrix() {
        let m = multiclass_confusion(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
        assert_eq!(m.accuracy(), 1.0);
        assert_eq!(m.matrix, vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]);

        let mut labels: Vec<usize> = (0..30).map(|i| i / 10).collect();
        let mut preds = labels.clone();
        preds[15] = 2;
        let m = multiclass_confusion(&labels, &preds, 3).unwrap();
        assert!((m.accuracy() - 29.0 / 30.0).abs() < 1e-15);
        assert_eq!(m.matrix[1][2], 1);

        labels = vec![0, 0, 1, 1, 2, 2];
        let m = multiclass_confusion(&labels, &[0; 6], 3).unwrap();
        assert!((m.accuracy() - 1.0 / 3.0).abs() < 1e-15);

        assert!(multiclass_confusion(&[3], &[0], 3).is_err());
    }

    #[test]
    fn report_json_is_flat() {
        let mut r = derive_metrics(counts(1, 2, 3, 4)).unwrap();
        r.auc = 0.75;
        let v: serde_json::Value = serde_json::to_value(r).unwrap();
        let obj = v.as_object().unwrap();
        let mut keys: Vec<&str> = obj.keys().map(String::as_str).collect();
        keys.sort();
        assert_eq!(
            keys,
            [
                "accuracy",
                "auc",
                "f1",
                "fn",
                "fp",
                "precision",
                "recall",
                "tn",
                "tp"
            ]
        );
        assert_eq!(obj["fn"], 4);
    }
}
