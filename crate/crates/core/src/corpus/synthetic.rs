//! A small synthetic benchmark of linear arithmetic functions.
//!
//! Every problem asks for a function returning an integer linear expression
//! of its arguments. Canonical solutions and tests stay inside the tiny Python
//! subset understood by the in-process stub runner, so a whole experiment can
//! run offline and deterministically.

use crate::util::rng_from_parts;
use rand::Rng;
use serde_json::json;

const VERBS: &[&str] = &["compute", "return", "calculate", "derive", "produce"];
const NOUNS: &[&str] = &["weighted sum", "scaled total", "shifted score", "linear offset", "balance"];
const NAMES: &[&str] = &["combine", "weigh", "shift", "blend", "tally", "mix", "score", "merge"];

/// Renders `sum(coef * var) + constant` the way a person would write it.
pub fn render_linear(terms: &[(i64, &str)], constant: i64) -> String {
    let mut out = String::new();
    for (i, (coef, var)) in terms.iter().enumerate() {
        let mag = coef.abs();
        let term = if mag == 1 { var.to_string() } else { format!("{mag}*{var}") };
        match (i, *coef < 0) {
            (0, false) => out.push_str(&term),
            (0, true) => out.push_str(&format!("-{term}")),
            (_, false) => out.push_str(&format!(" + {term}")),
            (_, true) => out.push_str(&format!(" - {term}")),
        }
    }
    match constant.cmp(&0) {
        std::cmp::Ordering::Greater => out.push_str(&format!(" + {constant}")),
        std::cmp::Ordering::Less => out.push_str(&format!(" - {}", -constant)),
        std::cmp::Ordering::Equal => {}
    }
    out
}

/// MBPP-style JSON lines for `problems` synthetic tasks with ids
/// `{prefix}-000`, `{prefix}-001`, ...
pub fn mini_corpus_jsonl(prefix: &str, problems: usize, seed: u64) -> String {
    let mut out = String::new();
    for i in 0..problems {
        let mut rng = rng_from_parts(&["synthetic", &seed.to_string(), &i.to_string()]);
        let arity = rng.random_range(1..=2usize);
        let vars: Vec<&str> = ["x", "y"][..arity].to_vec();
        let terms: Vec<(i64, &str)> = vars
            .iter()
            .map(|v| {
                let mut c = rng.random_range(-5..=5i64);
                if c == 0 {
                    c = 2;
                }
                (c, *v)
            })
            .collect();
        let constant = rng.random_range(-9..=9i64);
        let expr = render_linear(&terms, constant);
        let name = format!("{}_{}", NAMES[rng.random_range(0..NAMES.len())], i);
        let verb = VERBS[rng.random_range(0..VERBS.len())];
        let noun = NOUNS[rng.random_range(0..NOUNS.len())];
        let params = vars.join(", ");
        let text = format!(
            "Write a function to {verb} the {noun} of the given integer{}. The function returns {expr}.",
            if arity > 1 { "s" } else { "" }
        );
        let code = format!("def {name}({params}):\n    return {expr}");
        let tests: Vec<String> = (0..3)
            .map(|_| {
                let args: Vec<i64> = (0..arity).map(|_| rng.random_range(-10..=10)).collect();
                let value: i64 = terms.iter().zip(&args).map(|((c, _), a)| c * a).sum::<i64>() + constant;
                let rendered: Vec<String> = args.iter().map(i64::to_string).collect();
                format!("assert {name}({}) == {value}", rendered.join(", "))
            })
            .collect();
        let rec = json!({
            "task_id": format!("{prefix}-{i:03}"),
            "text": text,
            "code": code,
            "test_list": tests,
        });
        out.push_str(&rec.to_string());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_dataset, DatasetFormat, LoadOptions};

    #[test]
    fn renders_signs() {
        assert_eq!(render_linear(&[(3, "x"), (-1, "y")], -4), "3*x - y - 4");
        assert_eq!(render_linear(&[(-2, "x")], 0), "-2*x");
    }

    #[test]
    fn corpus_loads_and_is_deterministic() {
        let a = mini_corpus_jsonl("syn", 20, 5);
        assert_eq!(a, mini_corpus_jsonl("syn", 20, 5));
        let c = parse_dataset(&a, DatasetFormat::MbppStyle, &LoadOptions::default()).unwrap();
        assert_eq!(c.len(), 20);
        assert!(c.problems.iter().all(|p| p.description.contains("def ")));
    }
}
