//! Classification metrics, ROC/PR sweeps and rank-based AUC.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Piecewise-linear curve as (x, y) points.
pub type Curve = Vec<(f64, f64)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Scores of class 1 against the rest, with a probability threshold.
    BinaryPositive,
    /// Unweighted mean of per-class one-vs-rest scores over argmax labels.
    Macro,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub averaging: Averaging,
    /// Absent for macro averaging and when only one class is present.
    pub auc: Option<f64>,
    /// `confusion_matrix[true][predicted]`.
    pub confusion_matrix: Vec<Vec<usize>>,
    /// (false positive rate, true positive rate); binary only.
    pub roc_points: Curve,
    /// (recall, precision); binary only.
    pub pr_points: Curve,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn safe_div(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else {
        0.0
    }
}

fn prf(tp: f64, fp: f64, fneg: f64) -> (f64, f64, f64) {
    let p = safe_div(tp, tp + fp);
    let r = safe_div(tp, tp + fneg);
    (p, r, safe_div(2.0 * p * r, p + r))
}

/// Index of the largest probability; ties go to the lowest class.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = i;
        }
    }
    best
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Mann–Whitney AUC of `scores` for `positive` flags.
pub fn auc(scores: &[f64], positive: &[bool]) -> Result<f64> {
    if scores.len() != positive.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: positive.len(),
        });
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClassLabels);
    }
    let ranks = average_ranks(scores);
    let r_pos: f64 = ranks.iter().zip(positive).filter(|(_, &p)| p).map(|(r, _)| r).sum();
    let np = n_pos as f64;
    Ok((r_pos - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

/// ROC and PR points over every distinct score used as a threshold
/// (predict positive when `score >= t`), from the strictest threshold down.
pub fn threshold_sweep(scores: &[f64], positive: &[bool]) -> (Curve, Curve) {
    let n_pos = positive.iter().filter(|&&p| p).count() as f64;
    let n_neg = positive.len() as f64 - n_pos;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut roc = vec![(0.0, 0.0)];
    let mut pr = vec![(0.0, 1.0)];
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if positive[order[i]] {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        roc.push((safe_div(fp, n_neg), safe_div(tp, n_pos)));
        pr.push((safe_div(tp, n_pos), safe_div(tp, tp + fp)));
    }
    (roc, pr)
}

/// Area under a piecewise-linear curve.
pub fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

pub fn evaluate(
    probabilities: &[Vec<f64>],
    labels: &[usize],
    averaging: Averaging,
    threshold: f64,
) -> Result<EvaluationReport> {
    if probabilities.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: probabilities.len(),
            right: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::EmptyData);
    }
    let k = probabilities[0].len().max(labels.iter().max().map_or(0, |m| m + 1));
    let predicted: Vec<usize> = match averaging {
        Averaging::BinaryPositive => probabilities.iter().map(|p| usize::from(p[1] >= threshold)).collect(),
        Averaging::Macro => probabilities.iter().map(|p| argmax(p)).collect(),
    };
    let mut cm = vec![vec![0usize; k]; k];
    for (&t, &p) in labels.iter().zip(&predicted) {
        cm[t][p] += 1;
    }
    let total = labels.len() as f64;
    let accuracy = (0..k).map(|c| cm[c][c]).sum::<usize>() as f64 / total;
    let class_scores = |c: usize| {
        let tp = cm[c][c] as f64;
        let fp = (0..k).filter(|&r| r != c).map(|r| cm[r][c]).sum::<usize>() as f64;
        let fneg = (0..k).filter(|&p| p != c).map(|p| cm[c][p]).sum::<usize>() as f64;
        prf(tp, fp, fneg)
    };
    let mut warnings = Vec::new();
    let report = match averaging {
        Averaging::BinaryPositive => {
            let (precision, recall, f1) = class_scores(1);
            let scores: Vec<f64> = probabilities.iter().map(|p| p[1]).collect();
            let positive: Vec<bool> = labels.iter().map(|&l| l == 1).collect();
            let auc = match auc(&scores, &positive) {
                Ok(a) => Some(a),
                Err(Error::SingleClassLabels) => {
                    warnings.push("SingleClassLabels: AUC undefined".to_string());
                    None
                }
                Err(e) => return Err(e),
            };
            let (roc_points, pr_points) = threshold_sweep(&scores, &positive);
            EvaluationReport {
                accuracy,
                precision,
                recall,
                f1,
                averaging,
                auc,
                confusion_matrix: cm,
                roc_points,
                pr_points,
                warnings,
            }
        }
        Averaging::Macro => {
            let per: Vec<(f64, f64, f64)> = (0..k).map(class_scores).collect();
            let kf = k as f64;
            EvaluationReport {
                accuracy,
                precision: per.iter().map(|s| s.0).sum::<f64>() / kf,
                recall: per.iter().map(|s| s.1).sum::<f64>() / kf,
                f1: per.iter().map(|s| s.2).sum::<f64>() / kf,
                averaging,
                auc: None,
                confusion_matrix: cm,
                roc_points: Vec::new(),
                pr_points: Vec::new(),
                warnings,
            }
        }
    };
    Ok(report)
}

/// Writes `(x, y)` pairs as a two-column CSV with the given header names.
pub fn write_points_csv<W: Write>(out: W, header: (&str, &str), points: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([header.0, header.1])?;
    for (x, y) in points {
        w.write_record([x.to_string(), y.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary(scores: &[f64]) -> Vec<Vec<f64>> {
        scores.iter().map(|&s| vec![1.0 - s, s]).collect()
    }

    #[test]
    fn auc_example() {
        let r = evaluate(
            &binary(&[0.1, 0.4, 0.35, 0.8]),
            &[0, 0, 1, 1],
            Averaging::BinaryPositive,
            0.5,
        )
        .unwrap();
        assert!((r.auc.unwrap() - 0.75).abs() < 1e-15);
        assert!((trapezoid(&r.roc_points) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn perfect_scores() {
        let r = evaluate(
            &binary(&[0.1, 0.2, 0.9, 0.8]),
            &[0, 0, 1, 1],
            Averaging::BinaryPositive,
            0.5,
        )
        .unwrap();
        assert_eq!(
            (r.accuracy, r.precision, r.recall, r.f1, r.auc),
            (1.0, 1.0, 1.0, 1.0, Some(1.0))
        );
        assert_eq!(r.confusion_matrix, vec![vec![2, 0], vec![0, 2]]);
    }

    #[test]
    fn all_ties_half() {
        let r = evaluate(&binary(&[0.5; 6]), &[0, 1, 0, 1, 1, 0], Averaging::BinaryPositive, 0.5).unwrap();
        assert_eq!(r.auc, Some(0.5));
        assert_eq!(r.roc_points, vec![(0.0, 0.0), (1.0, 1.0)]);
    }

    #[test]
    fn single_class_flags_missing_auc() {
        let r = evaluate(&binary(&[0.2, 0.7]), &[1, 1], Averaging::BinaryPositive, 0.5).unwrap();
        assert_eq!(r.auc, None);
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn macro_scores() {
        let probs = vec![
            vec![0.8, 0.1, 0.1],
            vec![0.2, 0.7, 0.1],
            vec![0.3, 0.3, 0.4],
            vec![0.4, 0.4, 0.2],
        ];
        let r = evaluate(&probs, &[0, 1, 2, 1], Averaging::Macro, 0.5).unwrap();
        // Last row ties 0/1 and resolves to class 0.
        assert_eq!(r.confusion_matrix, vec![vec![1, 0, 0], vec![1, 1, 0], vec![0, 0, 1]]);
        assert_eq!(r.accuracy, 0.75);
        let p = (0.5 + 1.0 + 1.0) / 3.0;
        let rc = (1.0 + 0.5 + 1.0) / 3.0;
        assert!((r.precision - p).abs() < 1e-12);
        assert!((r.recall - rc).abs() < 1e-12);
        assert_eq!(r.auc, None);
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }
}
