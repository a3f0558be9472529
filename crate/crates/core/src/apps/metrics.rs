use super::AppError;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Fraction of queries whose gold item is among the first `k` candidates.
/// An empty query list scores 0.
pub fn recall_at_k<T: PartialEq>(rankings: &[(T, Vec<T>)], k: usize) -> Result<f64, AppError> {
    if k == 0 {
        return Err(AppError::InvalidInput("k must be at least 1".into()));
    }
    if rankings.is_empty() {
        return Ok(0.0);
    }
    let hits = rankings.iter().filter(|(gold, ranked)| ranked.iter().take(k).any(|c| c == gold)).count();
    Ok(hits as f64 / rankings.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Accuracy plus macro-averaged precision, recall and F1 over every label
/// seen in either list. Undefined ratios count as 0.
pub fn classification_metrics<T: Ord>(predictions: &[T], golds: &[T]) -> Result<ClassificationMetrics, AppError> {
    if predictions.len() != golds.len() || golds.is_empty() {
        return Err(AppError::InvalidInput(format!(
            "need equal non-empty label lists, got {} and {}",
            predictions.len(),
            golds.len()
        )));
    }
    let n = golds.len() as f64;
    let labels: BTreeSet<&T> = predictions.iter().chain(golds).collect();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let (mut p, mut r, mut f) = (0.0, 0.0, 0.0);
    for label in &labels {
        let tp = predictions.iter().zip(golds).filter(|(x, y)| x == label && y == label).count();
        let predicted = predictions.iter().filter(|x| x == label).count();
        let actual = golds.iter().filter(|y| y == label).count();
        let (pi, ri) = (ratio(tp, predicted), ratio(tp, actual));
        p += pi;
        r += ri;
        f += if pi + ri == 0.0 { 0.0 } else { 2.0 * pi * ri / (pi + ri) };
    }
    let m = labels.len() as f64;
    Ok(ClassificationMetrics {
        accuracy: predictions.iter().zip(golds).filter(|(x, y)| x == y).count() as f64 / n,
        precision: p / m,
        recall: r / m,
        f1: f / m,
    })
}
