//! Prompt assembly for the zero-shot and few-shot predictors.

use crate::retrieval::{BalancedContext, ExampleLabel};
use serde::{Deserialize, Serialize};

/// Default instruction preamble.
pub const DEFAULT_INSTRUCTION: &str = "You are an experienced software engineer. Your task is to check the \
functional correctness of code for the given problem statement. Generate 'yes' if the code is functionally \
correct (i.e., code meets the problem's requirements), otherwise generate 'no'.";

/// Block formats use `{problem}`, `{code}` and (examples only) `{label}`
/// placeholders, substituted in a single pass so that braces inside code are
/// never re-expanded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PromptTemplate {
    pub instruction: String,
    pub example_block_format: String,
    pub input_block_format: String,
    pub separator: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            instruction: DEFAULT_INSTRUCTION.to_string(),
            example_block_format: "Problem:\n{problem}\nCode:\n{code}\nAnswer: {label}".to_string(),
            input_block_format: "Problem:\n{problem}\nCode:\n{code}\nAnswer:".to_string(),
            separator: "\n\n".to_string(),
        }
    }
}

pub fn label_word(label: ExampleLabel) -> &'static str {
    match label {
        ExampleLabel::Pass => "yes",
        ExampleLabel::Incorrect => "no",
    }
}

fn render(format: &str, problem: &str, code: &str, label: Option<&str>) -> String {
    let mut out = String::with_capacity(format.len() + problem.len() + code.len());
    let mut rest = format;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open..];
        let value = [("{problem}", Some(problem)), ("{code}", Some(code)), ("{label}", label)]
            .into_iter()
            .find(|(name, _)| after.starts_with(name));
        match value {
            Some((name, Some(v))) => {
                out.push_str(v);
                rest = &after[name.len()..];
            }
            _ => {
                out.push('{');
                rest = &after[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

impl PromptTemplate {
    pub fn example_block(&self, problem: &str, code: &str, label: ExampleLabel) -> String {
        render(&self.example_block_format, problem, code, Some(label_word(label)))
    }

    pub fn input_block(&self, problem: &str, code: &str) -> String {
        render(&self.input_block_format, problem, code, None)
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("query {0} is empty")]
    EmptyQuery(&'static str),
    #[error("prompt of {len} chars exceeds the {limit}-char context limit even without examples")]
    TooLong { len: usize, limit: usize },
}

/// Instruction, interleaved example blocks, then the query block.
pub fn build_prompt(
    template: &PromptTemplate,
    context: &BalancedContext<'_>,
    query: (&str, &str),
) -> Result<String, PromptError> {
    let (problem, code) = query;
    if problem.trim().is_empty() {
        return Err(PromptError::EmptyQuery("problem text"));
    }
    if code.trim().is_empty() {
        return Err(PromptError::EmptyQuery("solution code"));
    }
    let mut parts = vec![template.instruction.clone()];
    for n in context.interleaved() {
        let ex = n.example;
        parts.push(template.example_block(&ex.problem_text, &ex.solution_text, ex.label));
    }
    parts.push(template.input_block(problem, code));
    Ok(parts.join(&template.separator))
}

/// Builds the prompt, dropping the least similar pair until it fits `limit`
/// characters. Returns the prompt and the number of pairs kept.
pub fn fit_prompt(
    template: &PromptTemplate,
    context: &BalancedContext<'_>,
    query: (&str, &str),
    limit: Option<usize>,
) -> Result<(String, usize), PromptError> {
    let mut pairs = context.pairs();
    loop {
        let ctx = if pairs == context.pairs() { context.clone() } else { context.truncated(pairs) };
        let prompt = build_prompt(template, &ctx, query)?;
        let len = prompt.chars().count();
        match limit {
            Some(limit) if len > limit => {
                if pairs == 0 {
                    return Err(PromptError::TooLong { len, limit });
                }
                pairs -= 1;
            }
            _ => return Ok((prompt, pairs)),
        }
    }
}
