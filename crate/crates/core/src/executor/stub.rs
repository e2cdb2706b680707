//! In-process runner for a tiny arithmetic subset of Python.
//!
//! Supported programs are sequences of `def name(params):` blocks whose body is
//! either `return <expr>` or a `while True:` loop (reported as a timeout).
//! Test cases are `assert <expr> == <expr>`. Expressions cover integer
//! literals, parameters, calls, parentheses, unary minus, `+`, `-` and `*`.

use super::{RunOutcome, RunRequest, RunResponse, Runner, RunnerError, RunnerVerdict, SandboxConfig};
use std::collections::HashMap;
use std::path::Path;

const MAX_CALL_DEPTH: usize = 64;

#[derive(Debug, Clone, Copy, Default)]
pub struct StubRunner;

impl StubRunner {
    pub fn new() -> Self {
        Self
    }

    /// Evaluates a request without touching the file system.
    pub fn respond(&self, request: &RunRequest) -> RunResponse {
        let mut program = Program::default();
        for (origin, src) in [("setup", &request.setup), ("code", &request.code)] {
            if let Err(msg) = program.load(src) {
                return response(RunnerVerdict::Error, None, format!("SyntaxError in {origin}: {msg}"));
            }
        }
        for (idx, case) in request.tests.iter().enumerate() {
            let (lhs, rhs) = match parse_assertion(case) {
                Ok(sides) => sides,
                Err(msg) => return response(RunnerVerdict::Error, Some(idx), format!("SyntaxError in test: {msg}")),
            };
            let outcome = program
                .eval(&lhs, &HashMap::new(), 0)
                .and_then(|l| program.eval(&rhs, &HashMap::new(), 0).map(|r| (l, r)));
            match outcome {
                Ok((l, r)) if l == r => {}
                Ok((l, r)) => {
                    return response(RunnerVerdict::Fail, Some(idx), format!("AssertionError: {l} != {r}"));
                }
                Err(EvalError::Diverges) => {
                    return response(RunnerVerdict::Timeout, Some(idx), "exceeded time budget".into());
                }
                Err(EvalError::Runtime(msg)) => return response(RunnerVerdict::Fail, Some(idx), msg),
            }
        }
        response(RunnerVerdict::Pass, None, String::new())
    }
}

impl Runner for StubRunner {
    fn run(&self, request: &RunRequest, _cfg: &SandboxConfig, _workdir: &Path) -> Result<RunOutcome, RunnerError> {
        Ok(RunOutcome {
            response: self.respond(request),
            elapsed_s: 0.0,
        })
    }
}

fn response(verdict: RunnerVerdict, failed_case_index: Option<usize>, message: String) -> RunResponse {
    let failed_case_index = if verdict == RunnerVerdict::Pass { None } else { failed_case_index };
    RunResponse { verdict, failed_case_index, message }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Int(i64),
    Ident(String),
    Sym(&'static str),
}

fn tokenize(src: &str) -> Result<Vec<Token>, String> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            out.push(Token::Int(text.parse().map_err(|_| format!("integer literal too large: {text}"))?));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token::Ident(chars[start..i].iter().collect()));
        } else if c == '=' && chars.get(i + 1) == Some(&'=') {
            out.push(Token::Sym("=="));
            i += 2;
        } else {
            let sym = match c {
                '(' => "(",
                ')' => ")",
                ',' => ",",
                '+' => "+",
                '-' => "-",
                '*' => "*",
                ':' => ":",
                other => return Err(format!("unexpected character `{other}`")),
            };
            out.push(Token::Sym(sym));
            i += 1;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
enum Expr {
    Int(i64),
    Var(String),
    Neg(Box<Expr>),
    Bin(char, Box<Expr>, Box<Expr>),
    Call(String, Vec<Expr>),
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn new(tokens: Vec<Token>) -> Self {
        Self { tokens, pos: 0 }
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn eat(&mut self, sym: &str) -> bool {
        if matches!(self.peek(), Some(Token::Sym(s)) if *s == sym) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, sym: &str) -> Result<(), String> {
        if self.eat(sym) {
            Ok(())
        } else {
            Err(format!("expected `{sym}`, found {:?}", self.peek()))
        }
    }

    fn done(&self) -> bool {
        self.pos == self.tokens.len()
    }

    fn expr(&mut self) -> Result<Expr, String> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat("+") {
                '+'
            } else if self.eat("-") {
                '-'
            } else {
                return Ok(lhs);
            };
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, String> {
        let mut lhs = self.unary()?;
        while self.eat("*") {
            let rhs = self.unary()?;
            lhs = Expr::Bin('*', Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, String> {
        if self.eat("-") {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat("+") {
            return self.unary();
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, String> {
        match self.tokens.get(self.pos).cloned() {
            Some(Token::Int(v)) => {
                self.pos += 1;
                Ok(Expr::Int(v))
            }
            Some(Token::Ident(name)) => {
                self.pos += 1;
                if self.eat("(") {
                    let mut args = Vec::new();
                    if !self.eat(")") {
                        loop {
                            args.push(self.expr()?);
                            if self.eat(")") {
                                break;
                            }
                            self.expect(",")?;
                        }
                    }
                    Ok(Expr::Call(name, args))
                } else {
                    Ok(Expr::Var(name))
                }
            }
            Some(Token::Sym("(")) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(")")?;
                Ok(e)
            }
            other => Err(format!("unexpected token {other:?}")),
        }
    }
}

fn parse_expr(src: &str) -> Result<Expr, String> {
    let mut p = Parser::new(tokenize(src)?);
    let e = p.expr()?;
    if !p.done() {
        return Err(format!("trailing input in `{src}`"));
    }
    Ok(e)
}

fn parse_assertion(case: &str) -> Result<(Expr, Expr), String> {
    let body = case
        .trim()
        .strip_prefix("assert ")
        .ok_or_else(|| format!("not an assert statement: `{case}`"))?;
    let (lhs, rhs) = body
        .split_once("==")
        .ok_or_else(|| format!("assertion is not an equality: `{case}`"))?;
    Ok((parse_expr(lhs)?, parse_expr(rhs)?))
}

#[derive(Debug, Clone)]
enum Body {
    Return(Expr),
    Loop,
}

#[derive(Debug, Clone)]
struct Function {
    params: Vec<String>,
    body: Body,
}

enum EvalError {
    Runtime(String),
    Diverges,
}

#[derive(Default)]
struct Program {
    functions: HashMap<String, Function>,
}

fn parse_header(line: &str) -> Result<(String, Vec<String>, String), String> {
    let rest = line.strip_prefix("def ").ok_or("expected `def`")?;
    let open = rest.find('(').ok_or("missing `(` in def")?;
    let close = rest.find(')').ok_or("missing `)` in def")?;
    let name = rest[..open].trim().to_string();
    if name.is_empty() || !name.chars().all(|c| c.is_alphanumeric() || c == '_') {
        return Err(format!("bad function name `{name}`"));
    }
    let params: Vec<String> = rest[open + 1..close]
        .split(',')
        .map(|p| p.trim().to_string())
        .filter(|p| !p.is_empty())
        .collect();
    let after = rest[close + 1..].trim_start();
    let inline = after.strip_prefix(':').ok_or("missing `:` after def")?;
    Ok((name, params, inline.trim().to_string()))
}

fn parse_statement(stmt: &str) -> Result<Option<Body>, String> {
    let stmt = stmt.trim();
    if stmt.is_empty() || stmt == "pass" || stmt.starts_with('#') {
        return Ok(None);
    }
    if let Some(e) = stmt.strip_prefix("return ") {
        return Ok(Some(Body::Return(parse_expr(e)?)));
    }
    if stmt.starts_with("while True:") {
        return Ok(Some(Body::Loop));
    }
    Err(format!("unsupported statement `{stmt}`"))
}

impl Program {
    fn load(&mut self, src: &str) -> Result<(), String> {
        let mut current: Option<(String, Vec<String>, Option<Body>)> = None;
        for raw in src.lines() {
            let line = raw.trim_end();
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let indented = line.starts_with(' ') || line.starts_with('\t');
            if !indented {
                self.finish(current.take())?;
                let (name, params, inline) = parse_header(line)?;
                let body = parse_statement(&inline)?;
                current = Some((name, params, body));
            } else {
                let Some((_, _, body)) = current.as_mut() else {
                    return Err("unexpected indent".into());
                };
                if body.is_none() {
                    *body = parse_statement(line)?;
                } else if !matches!(body, Some(Body::Loop)) {
                    parse_statement(line)?;
                }
            }
        }
        self.finish(current)
    }

    fn finish(&mut self, def: Option<(String, Vec<String>, Option<Body>)>) -> Result<(), String> {
        if let Some((name, params, body)) = def {
            let body = body.ok_or_else(|| format!("function `{name}` has no return"))?;
            self.functions.insert(name, Function { params, body });
        }
        Ok(())
    }

    fn eval(&self, expr: &Expr, env: &HashMap<String, i64>, depth: usize) -> Result<i64, EvalError> {
        let overflow = || EvalError::Runtime("OverflowError: integer overflow".into());
        match expr {
            Expr::Int(v) => Ok(*v),
            Expr::Var(name) => env
                .get(name)
                .copied()
                .ok_or_else(|| EvalError::Runtime(format!("NameError: name '{name}' is not defined"))),
            Expr::Neg(inner) => self.eval(inner, env, depth)?.checked_neg().ok_or_else(overflow),
            Expr::Bin(op, l, r) => {
                let (l, r) = (self.eval(l, env, depth)?, self.eval(r, env, depth)?);
                match op {
                    '+' => l.checked_add(r),
                    '-' => l.checked_sub(r),
                    _ => l.checked_mul(r),
                }
                .ok_or_else(overflow)
            }
            Expr::Call(name, args) => {
                if depth >= MAX_CALL_DEPTH {
                    return Err(EvalError::Runtime("RecursionError: maximum recursion depth exceeded".into()));
                }
                let f = self
                    .functions
                    .get(name)
                    .ok_or_else(|| EvalError::Runtime(format!("NameError: name '{name}' is not defined")))?;
                if f.params.len() != args.len() {
                    return Err(EvalError::Runtime(format!(
                        "TypeError: {name}() takes {} arguments but {} were given",
                        f.params.len(),
                        args.len()
                    )));
                }
                let mut local = HashMap::new();
                for (p, a) in f.params.iter().zip(args) {
                    local.insert(p.clone(), self.eval(a, env, depth)?);
                }
                match &f.body {
                    Body::Loop => Err(EvalError::Diverges),
                    Body::Return(e) => self.eval(e, &local, depth + 1),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(code: &str, tests: &[&str]) -> RunRequest {
        RunRequest {
            setup: String::new(),
            code: code.into(),
            tests: tests.iter().map(|s| s.to_string()).collect(),
            timeout_s: 2.0,
        }
    }

    #[test]
    fn add_passes_and_sub_fails() {
        let r = StubRunner.respond(&req("def add(a,b): return a+b", &["assert add(1,2)==3"]));
        assert_eq!(r.verdict, RunnerVerdict::Pass);
        assert_eq!(r.failed_case_index, None);
        let r = StubRunner.respond(&req("def add(a,b): return a-b", &["assert add(1,2)==3"]));
        assert_eq!(r.verdict, RunnerVerdict::Fail);
        assert_eq!(r.failed_case_index, Some(0));
    }

    #[test]
    fn first_failure_index_is_reported() {
        let code = "def f(x):\n    return 2*x - 1";
        let r = StubRunner.respond(&req(code, &["assert f(1) == 1", "assert f(2) == 4", "assert f(0) == -1"]));
        assert_eq!((r.verdict, r.failed_case_index), (RunnerVerdict::Fail, Some(1)));
    }

    #[test]
    fn infinite_loop_is_timeout() {
        let code = "def spin():\n    while True:\n        pass\n    return 0";
        let r = StubRunner.respond(&req(code, &["assert spin() == 0"]));
        assert_eq!(r.verdict, RunnerVerdict::Timeout);
    }

    #[test]
    fn unparseable_code_is_error() {
        let r = StubRunner.respond(&req("def broken(:\n    return", &["assert broken() == 1"]));
        assert_eq!(r.verdict, RunnerVerdict::Error);
        assert!(r.message.starts_with("SyntaxError"));
    }

    #[test]
    fn nested_calls_and_precedence() {
        let code = "def g(x): return x * 3\ndef f(x, y):\n    return -g(x) + (y - 1) * 2";
        let r = StubRunner.respond(&req(code, &["assert f(2, 5) == 2", "assert f(-1, 0) == 1"]));
        assert_eq!(r.verdict, RunnerVerdict::Pass, "{}", r.message);
    }

    #[test]
    fn unknown_name_fails_the_case() {
        let r = StubRunner.respond(&req("def f(x): return y", &["assert f(1) == 1"]));
        assert_eq!(r.verdict, RunnerVerdict::Fail);
        assert!(r.message.contains("NameError"));
    }
}
