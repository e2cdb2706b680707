//! Report rows and their CSV / JSONL renderings.

use super::{global_ndcg, local_ndcg, EvalError, LabelMap, Scope};
use crate::estimators::{Method, QualityScore};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write;

pub const CSV_HEADER: &str = "method,test_set,scope,k,alpha,metric,value,n_excluded_problems";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: Method,
    pub test_set: String,
    pub scope: Scope,
    pub k: Option<usize>,
    pub alpha: Option<f64>,
    pub metric: String,
    /// `None` when the metric is undefined for this cell.
    pub value: Option<f64>,
    pub n_excluded_problems: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningRow {
    pub method: Method,
    pub k: usize,
    pub dev_gndcg: Option<f64>,
    pub chosen: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
    pub tuning: Vec<TuningRow>,
    pub metadata: BTreeMap<String, String>,
}

/// Global and local rows for one (method, test set, k) cell. Undefined
/// metrics become empty values instead of errors.
pub fn evaluate_cell(
    method: Method,
    test_set: &str,
    k: Option<usize>,
    scores: &[QualityScore],
    labels: &LabelMap,
) -> Result<[ReportRow; 2], EvalError> {
    let row = |scope, value, excluded| ReportRow {
        method,
        test_set: test_set.to_string(),
        scope,
        k,
        alpha: method.alpha(),
        metric: "ndcg".to_string(),
        value,
        n_excluded_problems: excluded,
    };
    let global = match global_ndcg(scores, labels) {
        Ok(v) => Some(v),
        Err(EvalError::Degenerate { .. }) => None,
        Err(e) => return Err(e),
    };
    let (local, excluded) = match local_ndcg(scores, labels) {
        Ok(l) => (Some(l.value), l.excluded),
        Err(EvalError::NoEligibleProblems) => {
            let problems: std::collections::BTreeSet<_> = labels.keys().map(|(p, _)| p).collect();
            (None, problems.len())
        }
        Err(e) => return Err(e),
    };
    Ok([row(Scope::Global, global, 0), row(Scope::Local, local, excluded)])
}

/// One global and one local row per (method, test set, k) group.
pub fn sweep_k(
    groups: &BTreeMap<(Method, String, usize), Vec<QualityScore>>,
    labels: &BTreeMap<String, LabelMap>,
) -> Result<Vec<ReportRow>, EvalError> {
    let empty = LabelMap::new();
    let mut rows = Vec::with_capacity(groups.len() * 2);
    for ((method, set, k), scores) in groups {
        rows.extend(evaluate_cell(*method, set, Some(*k), scores, labels.get(set).unwrap_or(&empty))?);
    }
    Ok(rows)
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.method,
                r.test_set,
                r.scope,
                opt(r.k),
                opt(r.alpha),
                r.metric,
                r.value.map(|v| format!("{v:.6}")).unwrap_or_default(),
                r.n_excluded_problems
            );
        }
        out
    }

    /// One JSON object per line: metadata first, then tuning rows, then metric rows.
    pub fn to_jsonl(&self) -> String {
        #[derive(Serialize)]
        #[serde(tag = "kind", rename_all = "snake_case")]
        enum Line<'a> {
            Metadata { metadata: &'a BTreeMap<String, String> },
            Tuning(&'a TuningRow),
            Metric(&'a ReportRow),
        }
        let lines = std::iter::once(Line::Metadata { metadata: &self.metadata })
            .chain(self.tuning.iter().map(Line::Tuning))
            .chain(self.rows.iter().map(Line::Metric));
        let mut out = String::new();
        for line in lines {
            out.push_str(&serde_json::to_string(&line).expect("report rows serialize"));
            out.push('\n');
        }
        out
    }
}
