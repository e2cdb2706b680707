//! Sibling-similarity baselines over encoder vectors.

use crate::util::dot;

/// Mean dot product between `target` and each sibling (cosines for unit vectors).
pub fn mean_cosine(target: &[f32], siblings: &[&[f32]]) -> Option<f64> {
    if siblings.is_empty() {
        return None;
    }
    Some(siblings.iter().map(|s| dot(target, s)).sum::<f64>() / siblings.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn greedy(from: &[Vec<f32>], to: &[Vec<f32>]) -> f64 {
    let total: f64 = from
        .iter()
        .map(|a| to.iter().map(|b| dot(a, b)).fold(f64::NEG_INFINITY, f64::max))
        .sum();
    total / from.len() as f64
}

/// Greedy token matching: every token is paired with its most similar token
/// on the other side. F1 is zero when either side's mean is non-positive.
pub fn greedy_f1(target: &[Vec<f32>], sibling: &[Vec<f32>]) -> Option<MatchScore> {
    if target.is_empty() || sibling.is_empty() {
        return None;
    }
    let precision = greedy(target, sibling);
    let recall = greedy(sibling, target);
    let f1 = if precision > 0.0 && recall > 0.0 {
        (2.0 * precision * recall / (precision + recall)).min(1.0)
    } else {
        0.0
    };
    Some(MatchScore { precision, recall, f1 })
}
