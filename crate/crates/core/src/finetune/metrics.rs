use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("length mismatch: {0} predictions, {1} labels")]
    Length(usize, usize),
    #[error("no rows to score")]
    Empty,
}

fn check(a: usize, b: usize) -> Result<(), MetricError> {
    if a != b {
        return Err(MetricError::Length(a, b));
    }
    if a == 0 {
        return Err(MetricError::Empty);
    }
    Ok(())
}

pub fn rmse(pred: &[f64], label: &[f64]) -> Result<f64, MetricError> {
    check(pred.len(), label.len())?;
    let mse = pred.iter().zip(label).map(|(p, y)| (p - y) * (p - y)).sum::<f64>() / pred.len() as f64;
    Ok(mse.sqrt())
}

/// RMSE over flagged rows; `None` when no row is flagged.
pub fn rmse_cliff(pred: &[f64], label: &[f64], cliff: &[bool]) -> Result<Option<f64>, MetricError> {
    check(pred.len(), label.len())?;
    check(pred.len(), cliff.len())?;
    let (p, y): (Vec<f64>, Vec<f64>) = pred
        .iter()
        .zip(label)
        .zip(cliff)
        .filter(|(_, &c)| c)
        .map(|((&p, &y), _)| (p, y))
        .unzip();
    if p.is_empty() {
        return Ok(None);
    }
    rmse(&p, &y).map(Some)
}

/// Area under the ROC curve from the rank-sum statistic; tied scores count
/// one half. `None` when either class is missing.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<Option<f64>, MetricError> {
    check(scores.len(), labels.len())?;
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok(Some((rank_sum - p * (p + 1.0) / 2.0) / (p * n)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Accuracy plus macro precision, recall and F1. Classes absent from both
/// predictions and labels are left out of the averages.
pub fn classification_report(pred: &[usize], label: &[usize]) -> Result<ClassificationReport, MetricError> {
    check(pred.len(), label.len())?;
    let classes: BTreeSet<usize> = pred.iter().chain(label).copied().collect();
    let correct = pred.iter().zip(label).filter(|(p, y)| p == y).count();
    let (mut ps, mut rs, mut fs) = (0.0, 0.0, 0.0);
    for &c in &classes {
        let tp = pred.iter().zip(label).filter(|&(&p, &y)| p == c && y == c).count() as f64;
        let pp = pred.iter().filter(|&&p| p == c).count() as f64;
        let ap = label.iter().filter(|&&y| y == c).count() as f64;
        let p = if pp > 0.0 { tp / pp } else { 0.0 };
        let r = if ap > 0.0 { tp / ap } else { 0.0 };
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        ps += p;
        rs += r;
        fs += f;
    }
    let k = classes.len() as f64;
    Ok(ClassificationReport {
        accuracy: correct as f64 / pred.len() as f64,
        precision: ps / k,
        recall: rs / k,
        f1: fs / k,
    })
}

pub fn accuracy(pred: &[usize], label: &[usize]) -> Result<f64, MetricError> {
    check(pred.len(), label.len())?;
    Ok(pred.iter().zip(label).filter(|(p, y)| p == y).count() as f64 / pred.len() as f64)
}
