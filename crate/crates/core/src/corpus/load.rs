use super::{CandidateSolution, Corpus, CorpusError, ProblemSpec, TestSuite, CANONICAL_TAG};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetFormat {
    MbppStyle,
    HumanevalStyle,
    Native,
}

impl FromStr for DatasetFormat {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mbpp-style" | "mbpp" => Ok(Self::MbppStyle),
            "humaneval-style" | "humaneval" => Ok(Self::HumanevalStyle),
            "native" => Ok(Self::Native),
            other => Err(CorpusError::UnknownFormat(other.to_string())),
        }
    }
}

impl fmt::Display for DatasetFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::MbppStyle => "mbpp-style",
            Self::HumanevalStyle => "humaneval-style",
            Self::Native => "native",
        })
    }
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    /// Language tag for records that do not carry one.
    pub language: String,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self { language: "python".into() }
    }
}

#[derive(Deserialize)]
struct MbppRecord {
    task_id: Value,
    text: String,
    code: String,
    test_list: Vec<String>,
    #[serde(default)]
    test_setup_code: Option<String>,
}

#[derive(Deserialize)]
struct HumanevalRecord {
    task_id: Value,
    prompt: String,
    canonical_solution: String,
    test: String,
    entry_point: String,
    #[serde(default)]
    language: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum NativeRecord {
    Problem(ProblemSpec),
    Suite(TestSuite),
    Solution(CandidateSolution),
}

/// Loads a JSON-lines corpus with the default options (untagged records are Python).
pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<Corpus, CorpusError> {
    load_dataset_with(path, format, &LoadOptions::default())
}

pub fn load_dataset_with(
    path: &Path,
    format: DatasetFormat,
    opts: &LoadOptions,
) -> Result<Corpus, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_dataset(&text, format, opts)
}

/// Parses corpus text. Line numbers in errors are 1-based; blank lines are skipped.
pub fn parse_dataset(text: &str, format: DatasetFormat, opts: &LoadOptions) -> Result<Corpus, CorpusError> {
    let mut corpus = Corpus::default();
    let mut seen = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let parse_err = |e: serde_json::Error| CorpusError::Parse {
            line,
            message: e.to_string(),
        };
        match format {
            DatasetFormat::MbppStyle => {
                let rec: MbppRecord = serde_json::from_str(raw).map_err(parse_err)?;
                let (problem, suite, solution) = from_mbpp(rec, line, opts)?;
                push_problem(&mut corpus, &mut seen, problem, line)?;
                corpus.suites.push(suite);
                corpus.solutions.push(solution);
            }
            DatasetFormat::HumanevalStyle => {
                let rec: HumanevalRecord = serde_json::from_str(raw).map_err(parse_err)?;
                let (problem, suite, solution) = from_humaneval(rec, line, opts)?;
                push_problem(&mut corpus, &mut seen, problem, line)?;
                corpus.suites.push(suite);
                corpus.solutions.push(solution);
            }
            DatasetFormat::Native => match serde_json::from_str(raw).map_err(parse_err)? {
                NativeRecord::Problem(p) => push_problem(&mut corpus, &mut seen, p, line)?,
                NativeRecord::Suite(s) => corpus.suites.push(s),
                NativeRecord::Solution(s) => corpus.solutions.push(s),
            },
        }
    }
    Ok(corpus)
}

fn push_problem(
    corpus: &mut Corpus,
    seen: &mut HashSet<String>,
    problem: ProblemSpec,
    line: usize,
) -> Result<(), CorpusError> {
    if !seen.insert(problem.id.clone()) {
        return Err(CorpusError::DuplicateProblem { line, id: problem.id });
    }
    corpus.problems.push(problem);
    Ok(())
}

fn task_id(value: &Value, line: usize) -> Result<String, CorpusError> {
    let id = match value {
        Value::String(s) => s.clone(),
        Value::Number(n) => n.to_string(),
        other => {
            return Err(CorpusError::Parse {
                line,
                message: format!("task_id must be a string or integer, got {other}"),
            })
        }
    };
    if id.trim().is_empty() {
        return Err(CorpusError::Parse {
            line,
            message: "task_id is empty".into(),
        });
    }
    Ok(id)
}

fn non_empty(s: &str, field: &str, line: usize) -> Result<(), CorpusError> {
    if s.trim().is_empty() {
        return Err(CorpusError::Parse {
            line,
            message: format!("field `{field}` is empty"),
        });
    }
    Ok(())
}

/// First top-level `def` line of `code`, used as the signature stub.
fn signature_stub(code: &str) -> Option<&str> {
    code.lines().map(str::trim_end).find(|l| l.starts_with("def "))
}

fn function_name(signature: &str) -> Option<String> {
    let rest = signature.strip_prefix("def ")?;
    let name: String = rest.chars().take_while(|c| c.is_alphanumeric() || *c == '_').collect();
    (!name.is_empty()).then_some(name)
}

fn from_mbpp(
    rec: MbppRecord,
    line: usize,
    opts: &LoadOptions,
) -> Result<(ProblemSpec, TestSuite, CandidateSolution), CorpusError> {
    let id = task_id(&rec.task_id, line)?;
    non_empty(&rec.text, "text", line)?;
    non_empty(&rec.code, "code", line)?;
    if rec.test_list.is_empty() {
        return Err(CorpusError::Parse {
            line,
            message: "field `test_list` is empty".into(),
        });
    }
    let signature = signature_stub(&rec.code);
    let description = match signature {
        Some(sig) if !rec.text.contains(sig) => format!("{}\n{}", rec.text.trim_end(), sig),
        _ => rec.text.clone(),
    };
    let setup = rec.test_setup_code.filter(|s| !s.trim().is_empty());
    let problem = ProblemSpec {
        id: id.clone(),
        description,
        entry_point: signature.and_then(function_name),
        language: opts.language.clone(),
        setup_code: setup.clone(),
    };
    let suite = TestSuite {
        problem_id: id.clone(),
        cases: rec.test_list,
        setup_code: setup,
    };
    let solution = CandidateSolution {
        problem_id: id,
        solution_id: CANONICAL_TAG.into(),
        code: rec.code,
        rank_hint: None,
        generator_tag: CANONICAL_TAG.into(),
    };
    Ok((problem, suite, solution))
}

fn from_humaneval(
    rec: HumanevalRecord,
    line: usize,
    opts: &LoadOptions,
) -> Result<(ProblemSpec, TestSuite, CandidateSolution), CorpusError> {
    let id = task_id(&rec.task_id, line)?;
    non_empty(&rec.prompt, "prompt", line)?;
    non_empty(&rec.test, "test", line)?;
    non_empty(&rec.entry_point, "entry_point", line)?;
    let problem = ProblemSpec {
        id: id.clone(),
        description: rec.prompt.clone(),
        entry_point: Some(rec.entry_point.clone()),
        language: rec.language.unwrap_or_else(|| opts.language.clone()),
        setup_code: None,
    };
    // The suite is a check function followed by its invocation.
    let suite = TestSuite {
        problem_id: id.clone(),
        cases: vec![rec.test, format!("check({})", rec.entry_point)],
        setup_code: None,
    };
    let solution = CandidateSolution {
        problem_id: id,
        solution_id: CANONICAL_TAG.into(),
        code: format!("{}{}", rec.prompt, rec.canonical_solution),
        rank_hint: None,
        generator_tag: CANONICAL_TAG.into(),
    };
    Ok((problem, suite, solution))
}

/// Serializes a corpus to the native JSON-lines format: problems, then suites,
/// then solutions, one tagged object per line.
pub fn export_native(corpus: &Corpus) -> String {
    let mut out = String::new();
    let records = corpus
        .problems
        .iter()
        .cloned()
        .map(NativeRecord::Problem)
        .chain(corpus.suites.iter().cloned().map(NativeRecord::Suite))
        .chain(corpus.solutions.iter().cloned().map(NativeRecord::Solution));
    for rec in records {
        out.push_str(&serde_json::to_string(&rec).expect("corpus records serialize"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mbpp_line(id: u32) -> String {
        serde_json::json!({
            "task_id": id,
            "text": "Write a function to add two numbers.",
            "code": "def add(a, b):\n    return a + b",
            "test_list": ["assert add(1, 2) == 3"],
            "test_setup_code": ""
        })
        .to_string()
    }

    #[test]
    fn mbpp_record_maps_to_problem_suite_and_canonical() {
        let c = parse_dataset(&mbpp_line(11), DatasetFormat::MbppStyle, &LoadOptions::default()).unwrap();
        assert_eq!(c.problems.len(), 1);
        let p = &c.problems[0];
        assert_eq!(p.id, "11");
        assert!(p.description.ends_with("def add(a, b):"));
        assert_eq!(p.entry_point.as_deref(), Some("add"));
        assert_eq!(p.setup_code, None);
        assert_eq!(c.suites[0].cases, vec!["assert add(1, 2) == 3"]);
        assert_eq!(c.solutions[0].generator_tag, CANONICAL_TAG);
    }

    #[test]
    fn empty_input_is_an_empty_corpus() {
        let c = parse_dataset("", DatasetFormat::MbppStyle, &LoadOptions::default()).unwrap();
        assert!(c.is_empty() && c.suites.is_empty() && c.solutions.is_empty());
    }

    #[test]
    fn missing_test_list_names_the_line() {
        let bad = r#"{"task_id": 2, "text": "t", "code": "def f(): pass"}"#;
        let text = format!("{}\n{}\n", mbpp_line(1), bad);
        let err = parse_dataset(&text, DatasetFormat::MbppStyle, &LoadOptions::default()).unwrap_err();
        match err {
            CorpusError::Parse { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("test_list"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let text = format!("{}\n{}\n", mbpp_line(5), mbpp_line(5));
        let err = parse_dataset(&text, DatasetFormat::MbppStyle, &LoadOptions::default()).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateProblem { line: 2, .. }));
    }

    #[test]
    fn humaneval_record_builds_check_invocation() {
        let rec = serde_json::json!({
            "task_id": "HumanEval/0",
            "prompt": "def inc(x):\n    \"\"\"Add one.\"\"\"\n",
            "canonical_solution": "    return x + 1\n",
            "test": "def check(candidate):\n    assert candidate(1) == 2\n",
            "entry_point": "inc"
        });
        let c = parse_dataset(&rec.to_string(), DatasetFormat::HumanevalStyle, &LoadOptions::default()).unwrap();
        assert_eq!(c.suites[0].cases[1], "check(inc)");
        assert!(c.solutions[0].code.ends_with("return x + 1\n"));
        assert_eq!(c.problems[0].language, "python");
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let err = load_dataset(Path::new("/nonexistent/corpus.jsonl"), DatasetFormat::MbppStyle).unwrap_err();
        assert!(matches!(err, CorpusError::Io { .. }));
    }

    #[test]
    fn format_tags_parse() {
        assert_eq!("mbpp-style".parse::<DatasetFormat>().unwrap(), DatasetFormat::MbppStyle);
        assert!("csv".parse::<DatasetFormat>().is_err());
    }
}
