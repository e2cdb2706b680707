//! Ranking quality of estimator scores against execution labels.
//!
//! Global lists rank every pair of a test set together; local lists rank the
//! solutions of one problem. Both use binary-gain nDCG with ties in score
//! broken by ascending (problem_id, solution_id).

mod report;

use crate::estimators::QualityScore;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

pub use report::{evaluate_cell, sweep_k, EvalReport, ReportRow, TuningRow, CSV_HEADER};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EvalError {
    #[error("nDCG undefined: list of {len} has {positives} relevant items")]
    Degenerate { len: usize, positives: usize },
    #[error("no problem has both correct and incorrect solutions")]
    NoEligibleProblems,
    #[error("empty k grid")]
    EmptyGrid,
    #[error("duplicate score for {0}/{1}")]
    DuplicateScore(String, String),
    #[error("labeled pair {0}/{1} has no score")]
    MissingScore(String, String),
}

/// (problem_id, solution_id) → passes all tests. Pairs without a usable
/// label are simply absent.
pub type LabelMap = BTreeMap<(String, String), bool>;

/// nDCG of a gold sequence already in ranked order; `None` without any
/// relevant item.
pub fn ndcg(gold: &[u8]) -> Option<f64> {
    let discount = |i: usize| 1.0 / ((i + 2) as f64).log2();
    let dcg: f64 = gold.iter().enumerate().filter(|(_, g)| **g > 0).map(|(i, _)| discount(i)).sum();
    let relevant = gold.iter().filter(|g| **g > 0).count();
    if relevant == 0 {
        return None;
    }
    let idcg: f64 = (0..relevant).map(discount).sum();
    Some(dcg / idcg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Global,
    Local,
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Global => "global",
            Self::Local => "local",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedItem {
    pub problem_id: String,
    pub solution_id: String,
    pub score: f64,
    pub gold: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ListScope {
    Global,
    Local(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub scope: ListScope,
    pub items: Vec<RankedItem>,
}

fn rank_order(a: &RankedItem, b: &RankedItem) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.problem_id.cmp(&b.problem_id))
        .then_with(|| a.solution_id.cmp(&b.solution_id))
}

impl RankedList {
    pub fn new(scope: ListScope, mut items: Vec<RankedItem>) -> Self {
        items.sort_by(rank_order);
        Self { scope, items }
    }

    pub fn gold(&self) -> Vec<u8> {
        self.items.iter().map(|i| u8::from(i.gold)).collect()
    }

    pub fn positives(&self) -> usize {
        self.items.iter().filter(|i| i.gold).count()
    }

    /// Both classes present.
    pub fn is_informative(&self) -> bool {
        let p = self.positives();
        p > 0 && p < self.items.len()
    }

    pub fn ndcg(&self) -> Option<f64> {
        ndcg(&self.gold())
    }
}

/// Joins scores with labels; scores of unlabeled pairs are dropped.
pub fn join_labels(scores: &[QualityScore], labels: &LabelMap) -> Result<Vec<RankedItem>, EvalError> {
    let mut seen = BTreeSet::new();
    let mut items = Vec::with_capacity(scores.len());
    for s in scores {
        let key = (s.problem_id.clone(), s.solution_id.clone());
        if !seen.insert(key.clone()) {
            return Err(EvalError::DuplicateScore(key.0, key.1));
        }
        if let Some(&gold) = labels.get(&key) {
            items.push(RankedItem { problem_id: key.0, solution_id: key.1, score: s.score, gold });
        }
    }
    if let Some((p, s)) = labels.keys().find(|k| !seen.contains(*k)) {
        return Err(EvalError::MissingScore(p.clone(), s.clone()));
    }
    Ok(items)
}

pub fn global_list(scores: &[QualityScore], labels: &LabelMap) -> Result<RankedList, EvalError> {
    Ok(RankedList::new(ListScope::Global, join_labels(scores, labels)?))
}

pub fn local_lists(scores: &[QualityScore], labels: &LabelMap) -> Result<Vec<RankedList>, EvalError> {
    let mut groups: BTreeMap<String, Vec<RankedItem>> = BTreeMap::new();
    for item in join_labels(scores, labels)? {
        groups.entry(item.problem_id.clone()).or_default().push(item);
    }
    Ok(groups.into_iter().map(|(pid, items)| RankedList::new(ListScope::Local(pid), items)).collect())
}

/// nDCG over all pairs of a test set. Undefined when every pair has the same label.
pub fn global_ndcg(scores: &[QualityScore], labels: &LabelMap) -> Result<f64, EvalError> {
    let list = global_list(scores, labels)?;
    if !list.is_informative() {
        return Err(EvalError::Degenerate { len: list.items.len(), positives: list.positives() });
    }
    Ok(list.ndcg().expect("informative list has a relevant item"))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalNdcg {
    pub value: f64,
    pub eligible: usize,
    pub excluded: usize,
}

/// Mean per-problem nDCG over problems with both correct and incorrect
/// solutions; the others are counted in `excluded`.
pub fn local_ndcg(scores: &[QualityScore], labels: &LabelMap) -> Result<LocalNdcg, EvalError> {
    let lists = local_lists(scores, labels)?;
    let mut total = 0.0;
    let mut eligible = 0;
    for list in &lists {
        if list.is_informative() {
            total += list.ndcg().expect("informative list has a relevant item");
            eligible += 1;
        } else {
            log::debug!("local nDCG: excluding degenerate list {:?}", list.scope);
        }
    }
    if eligible == 0 {
        return Err(EvalError::NoEligibleProblems);
    }
    Ok(LocalNdcg { value: total / eligible as f64, eligible, excluded: lists.len() - eligible })
}

/// The k with the highest dev G-nDCG; ties go to the smallest k. Undefined
/// cells never win.
pub fn tune_k(dev_gndcg: &BTreeMap<usize, Option<f64>>) -> Result<usize, EvalError> {
    let mut best: Option<(usize, f64)> = None;
    for (&k, value) in dev_gndcg {
        let v = value.unwrap_or(f64::NEG_INFINITY);
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((k, v));
        }
    }
    best.map(|(k, _)| k).ok_or(EvalError::EmptyGrid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::Method;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn worked_values() {
        assert_eq!(ndcg(&[1, 1, 0]), Some(1.0));
        assert!(close(ndcg(&[0, 1]).unwrap(), 0.6309, 1e-4));
        assert!(close(ndcg(&[0, 1, 1]).unwrap(), 0.6934, 1e-4));
        assert_eq!(ndcg(&[0, 0]), None);
        assert_eq!(ndcg(&[]), None);
    }

    fn score(p: &str, s: &str, v: f64) -> QualityScore {
        QualityScore {
            problem_id: p.into(),
            solution_id: s.into(),
            method: Method::Zs,
            score: v,
            k_used: None,
            alpha_used: None,
            context_example_ids: None,
        }
    }

    fn labels(items: &[(&str, &str, bool)]) -> LabelMap {
        items.iter().map(|(p, s, g)| ((p.to_string(), s.to_string()), *g)).collect()
    }

    #[test]
    fn local_mean_over_two_problems() {
        let l = labels(&[("a", "1", true), ("a", "2", false), ("b", "1", false), ("b", "2", true), ("c", "1", false)]);
        let s = [score("a", "1", 0.9), score("a", "2", 0.1), score("b", "1", 0.9), score("b", "2", 0.1), score("c", "1", 0.5)];
        let r = local_ndcg(&s, &l).unwrap();
        assert!(close(r.value, 0.8155, 1e-4));
        assert_eq!((r.eligible, r.excluded), (2, 1));
    }

    #[test]
    fn ties_resolve_by_ids() {
        let l = labels(&[("a", "2", true), ("a", "1", false)]);
        let s = [score("a", "2", 0.5), score("a", "1", 0.5)];
        // a/1 sorts first, so the relevant item lands second
        assert!(close(global_ndcg(&s, &l).unwrap(), 0.6309, 1e-4));
    }

    #[test]
    fn degenerate_and_incomplete_inputs() {
        let all_pass = labels(&[("a", "1", true), ("a", "2", true)]);
        let s = [score("a", "1", 0.1), score("a", "2", 0.2)];
        assert!(matches!(global_ndcg(&s, &all_pass), Err(EvalError::Degenerate { .. })));
        assert_eq!(local_ndcg(&s, &all_pass), Err(EvalError::NoEligibleProblems));
        let l = labels(&[("a", "1", true), ("a", "3", false)]);
        assert!(matches!(global_ndcg(&s, &l), Err(EvalError::MissingScore(..))));
        let dup = [score("a", "1", 0.1), score("a", "1", 0.2)];
        assert!(matches!(global_ndcg(&dup, &l), Err(EvalError::DuplicateScore(..))));
    }

    #[test]
    fn unlabeled_scores_are_ignored() {
        let l = labels(&[("a", "1", true), ("a", "2", false)]);
        let s = [score("a", "1", 0.9), score("a", "2", 0.1), score("a", "3", 1.0)];
        assert_eq!(global_ndcg(&s, &l), Ok(1.0));
    }

    #[test]
    fn tuning_prefers_smallest_on_ties() {
        let table: BTreeMap<usize, Option<f64>> = (1..=5).map(|k| (k, Some(0.7))).collect();
        assert_eq!(tune_k(&table), Ok(1));
        let mut table = table;
        table.insert(3, Some(0.9));
        table.insert(5, Some(0.9));
        assert_eq!(tune_k(&table), Ok(3));
        table.insert(1, None);
        assert_eq!(tune_k(&table), Ok(3));
        assert_eq!(tune_k(&BTreeMap::new()), Err(EvalError::EmptyGrid));
    }
}
