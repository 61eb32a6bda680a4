use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn check<T: Scalar>(scores: &[T], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::invalid("scores and labels differ in length"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("scores contain NaN"));
    }
    let mut pos = 0;
    for &l in labels {
        match l {
            0 => {}
            1 => pos += 1,
            _ => return Err(Error::invalid(format!("label {l} is not binary"))),
        }
    }
    Ok((pos, labels.len() - pos))
}

fn cmp<T: Scalar>(a: &T, b: &T) -> Ordering {
    a.partial_cmp(b).unwrap_or(Ordering::Equal)
}

/// Consecutive runs of equal scores in descending score order, as
/// `(positives, negatives)` per run.
fn descending_groups<T: Scalar>(scores: &[T], labels: &[u8]) -> Vec<(usize, usize)> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| cmp(&scores[b], &scores[a]));
    let mut groups = Vec::new();
    let mut i = 0;
    while i < idx.len() {
        let s = scores[idx[i]];
        let (mut p, mut n) = (0, 0);
        while i < idx.len() && scores[idx[i]] == s {
            if labels[idx[i]] == 1 {
                p += 1;
            } else {
                n += 1;
            }
            i += 1;
        }
        groups.push((p, n));
    }
    groups
}

/// Area under the ROC curve: the probability that a random positive
/// outscores a random negative, tied pairs counting one half.
pub fn roc_auc<T: Scalar>(scores: &[T], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = check(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::degenerate("undefined AUC: labels contain a single class"));
    }
    // Trapezoidal integration over tie groups.
    let mut area = 0.0;
    let mut neg_above = 0usize;
    for (p, n) in descending_groups(scores, labels) {
        area += p as f64 * (neg - neg_above - n) as f64 + 0.5 * (p * n) as f64;
        neg_above += n;
    }
    Ok(area / (pos as f64 * neg as f64))
}

/// `Σ_n (R_n - R_{n-1}) P_n` over the distinct score thresholds in
/// descending order.
pub fn average_precision<T: Scalar>(scores: &[T], labels: &[u8]) -> Result<f64> {
    let (pos, _) = check(scores, labels)?;
    if pos == 0 {
        return Err(Error::degenerate("average precision undefined without positives"));
    }
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for (p, n) in descending_groups(scores, labels) {
        tp += p;
        fp += n;
        let recall = tp as f64 / pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision, recall and F1 predicting positive iff `score >= threshold`.
/// Precision is 0 without positive predictions, recall 0 without positive
/// labels, and F1 0 when both are 0.
pub fn prf_at_threshold<T: Scalar>(scores: &[T], labels: &[u8], threshold: T) -> Result<Prf> {
    check(scores, labels)?;
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    Ok(prf_from_counts(tp, fp, fneg))
}

pub fn prf_from_counts(tp: usize, fp: usize, fneg: usize) -> Prf {
    let ratio = |a: usize, b: usize| if a + b == 0 { 0.0 } else { a as f64 / (a + b) as f64 };
    let precision = ratio(tp, fp);
    let recall = ratio(tp, fneg);
    let f1 = f1_score(precision, recall);
    Prf { precision, recall, f1 }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// ROC curve points `(fpr, tpr)` at each distinct threshold, from (0, 0)
/// to (1, 1).
pub fn roc_curve<T: Scalar>(scores: &[T], labels: &[u8]) -> Result<Vec<(f64, f64)>> {
    let (pos, neg) = check(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::degenerate("undefined ROC: labels contain a single class"));
    }
    let mut pts = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0, 0);
    for (p, n) in descending_groups(scores, labels) {
        tp += p;
        fp += n;
        pts.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(pts)
}

/// Mean and two-sided 95% confidence half-width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub mean: f64,
    pub half_width: f64,
}

/// Arithmetic mean with a Student-t interval: `t_{0.975, n-1} · s / √n`,
/// `s` the sample standard deviation.
pub fn mean_ci(values: &[f64]) -> Result<MeanCi> {
    let n = values.len();
    if n < 2 {
        return Err(Error::invalid("confidence interval needs at least 2 values"));
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (nf - 1.0);
    let t = StudentsT::new(0.0, 1.0, nf - 1.0)
        .map_err(|e| Error::invalid(format!("student t: {e}")))?
        .inverse_cdf(0.975);
    Ok(MeanCi {
        mean,
        half_width: t * var.sqrt() / nf.sqrt(),
    })
}

/// Pearson correlation of two aligned vectors.
pub fn importance_correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid("importance vectors differ in length"));
    }
    if a.len() < 2 {
        return Err(Error::degenerate("undefined correlation: fewer than 2 values"));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::degenerate("undefined correlation: constant vector"));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}
