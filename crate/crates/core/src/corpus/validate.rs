use super::{CandidateSolution, ProblemSpec, TestSuite};
use serde::Serialize;
use std::collections::{HashMap, HashSet};
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "issue", rename_all = "snake_case")]
pub enum ValidationIssue {
    DuplicateProblem { id: String },
    DuplicateSuite { problem_id: String },
    DuplicateSolution { problem_id: String, solution_id: String },
    DanglingSuite { problem_id: String },
    DanglingSolution { problem_id: String, solution_id: String },
    MissingSuite { problem_id: String },
    EmptyField { record: String, field: &'static str },
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DuplicateProblem { id } => write!(f, "duplicate problem id `{id}`"),
            Self::DuplicateSuite { problem_id } => write!(f, "more than one test suite for problem `{problem_id}`"),
            Self::DuplicateSolution { problem_id, solution_id } => {
                write!(f, "duplicate solution `{solution_id}` for problem `{problem_id}`")
            }
            Self::DanglingSuite { problem_id } => write!(f, "test suite references unknown problem `{problem_id}`"),
            Self::DanglingSolution { problem_id, solution_id } => {
                write!(f, "solution `{solution_id}` references unknown problem `{problem_id}`")
            }
            Self::MissingSuite { problem_id } => write!(f, "problem `{problem_id}` has no test suite"),
            Self::EmptyField { record, field } => write!(f, "{record}: field `{field}` is empty"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Report-only consistency check over a corpus.
pub fn validate_corpus(
    problems: &[ProblemSpec],
    suites: &[TestSuite],
    solutions: &[CandidateSolution],
) -> ValidationReport {
    let mut issues = Vec::new();
    let mut ids = HashSet::new();
    for p in problems {
        if p.id.trim().is_empty() {
            issues.push(ValidationIssue::EmptyField { record: "problem".into(), field: "id" });
        }
        if p.description.trim().is_empty() {
            issues.push(ValidationIssue::EmptyField {
                record: format!("problem `{}`", p.id),
                field: "description",
            });
        }
        if !ids.insert(p.id.as_str()) {
            issues.push(ValidationIssue::DuplicateProblem { id: p.id.clone() });
        }
    }

    let mut suite_count: HashMap<&str, usize> = HashMap::new();
    for s in suites {
        if !ids.contains(s.problem_id.as_str()) {
            issues.push(ValidationIssue::DanglingSuite { problem_id: s.problem_id.clone() });
        }
        if s.cases.is_empty() {
            issues.push(ValidationIssue::EmptyField {
                record: format!("suite for `{}`", s.problem_id),
                field: "cases",
            });
        }
        let n = suite_count.entry(s.problem_id.as_str()).or_default();
        *n += 1;
        if *n == 2 {
            issues.push(ValidationIssue::DuplicateSuite { problem_id: s.problem_id.clone() });
        }
    }
    for p in problems {
        if !suite_count.contains_key(p.id.as_str()) {
            issues.push(ValidationIssue::MissingSuite { problem_id: p.id.clone() });
        }
    }

    let mut keys = HashSet::new();
    for s in solutions {
        if !ids.contains(s.problem_id.as_str()) {
            issues.push(ValidationIssue::DanglingSolution {
                problem_id: s.problem_id.clone(),
                solution_id: s.solution_id.clone(),
            });
        }
        if s.code.trim().is_empty() {
            issues.push(ValidationIssue::EmptyField {
                record: format!("solution `{}/{}`", s.problem_id, s.solution_id),
                field: "code",
            });
        }
        if !keys.insert((s.problem_id.as_str(), s.solution_id.as_str())) {
            issues.push(ValidationIssue::DuplicateSolution {
                problem_id: s.problem_id.clone(),
                solution_id: s.solution_id.clone(),
            });
        }
    }
    ValidationReport { issues }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (Vec<ProblemSpec>, Vec<TestSuite>, Vec<CandidateSolution>) {
        let p = ProblemSpec {
            id: "1".into(),
            description: "add".into(),
            entry_point: Some("add".into()),
            language: "python".into(),
            setup_code: None,
        };
        let t = TestSuite {
            problem_id: "1".into(),
            cases: vec!["assert add(1,2)==3".into()],
            setup_code: None,
        };
        let s = CandidateSolution {
            problem_id: "1".into(),
            solution_id: "s1".into(),
            code: "def add(a,b): return a+b".into(),
            rank_hint: Some(1),
            generator_tag: "m".into(),
        };
        (vec![p], vec![t], vec![s])
    }

    #[test]
    fn consistent_corpus_is_ok() {
        let (p, t, s) = toy();
        assert!(validate_corpus(&p, &t, &s).is_ok());
    }

    #[test]
    fn dangling_solution_is_named() {
        let (p, t, mut s) = toy();
        s[0].problem_id = "404".into();
        let r = validate_corpus(&p, &t, &s);
        assert_eq!(
            r.issues,
            vec![ValidationIssue::DanglingSolution { problem_id: "404".into(), solution_id: "s1".into() }]
        );
        assert!(r.issues[0].to_string().contains("404"));
    }

    #[test]
    fn second_suite_is_flagged() {
        let (p, mut t, s) = toy();
        t.push(t[0].clone());
        let r = validate_corpus(&p, &t, &s);
        assert_eq!(r.issues, vec![ValidationIssue::DuplicateSuite { problem_id: "1".into() }]);
    }
}
