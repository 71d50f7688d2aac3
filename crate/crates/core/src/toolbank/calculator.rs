//! Arithmetic tool. Two input modes:
//!
//! * annotation verification: every `<<expr=val>>` fragment is evaluated and
//!   compared with its stated value;
//! * plain expression: the input is evaluated and the value returned.

use std::sync::OnceLock;

use regex::Regex;

use super::{format_number, ErrorKind, Tool, ToolResult, ToolSpec, CALCULATOR};

const REL_TOL: f64 = 1e-6;
const ABS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("cannot parse expression '{expr}' at position {position}")]
    Syntax { expr: String, position: usize },
    #[error("division by zero in '{0}'")]
    DivisionByZero(String),
}

/// Evaluates `+ - * /` (also `× ÷ −`), parentheses, unary signs and decimals.
pub fn evaluate(expr: &str) -> Result<f64, EvalError> {
    let mut p = Parser {
        src: expr,
        chars: expr.chars().collect(),
        pos: 0,
    };
    let v = p.expr()?;
    p.skip_ws();
    if p.pos != p.chars.len() {
        return Err(p.syntax());
    }
    Ok(v)
}

struct Parser<'a> {
    src: &'a str,
    chars: Vec<char>,
    pos: usize,
}

impl Parser<'_> {
    fn syntax(&self) -> EvalError {
        EvalError::Syntax {
            expr: self.src.to_string(),
            position: self.pos,
        }
    }

    fn skip_ws(&mut self) {
        while self.chars.get(self.pos).is_some_and(|c| c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<f64, EvalError> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some('+') => {
                    self.pos += 1;
                    acc += self.term()?;
                }
                Some('-' | '−') => {
                    self.pos += 1;
                    acc -= self.term()?;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<f64, EvalError> {
        let mut acc = self.unary()?;
        loop {
            match self.peek() {
                Some('*' | '×') => {
                    self.pos += 1;
                    acc *= self.unary()?;
                }
                Some('/' | '÷') => {
                    self.pos += 1;
                    let d = self.unary()?;
                    if d == 0.0 {
                        return Err(EvalError::DivisionByZero(self.src.to_string()));
                    }
                    acc /= d;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn unary(&mut self) -> Result<f64, EvalError> {
        match self.peek() {
            Some('-' | '−') => {
                self.pos += 1;
                Ok(-self.unary()?)
            }
            Some('+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<f64, EvalError> {
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let v = self.expr()?;
                if self.peek() != Some(')') {
                    return Err(self.syntax());
                }
                self.pos += 1;
                Ok(v)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => {
                let start = self.pos;
                while self
                    .chars
                    .get(self.pos)
                    .is_some_and(|c| c.is_ascii_digit() || *c == '.')
                {
                    self.pos += 1;
                }
                let lit: String = self.chars[start..self.pos].iter().collect();
                lit.parse::<f64>().map_err(|_| EvalError::Syntax {
                    expr: self.src.to_string(),
                    position: start,
                })
            }
            _ => Err(self.syntax()),
        }
    }
}

/// Equality with relative tolerance 1e-6 and an absolute floor of 1e-9.
pub fn approx_equal(a: f64, b: f64) -> bool {
    (a - b).abs() <= (REL_TOL * a.abs().max(b.abs())).max(ABS_TOL)
}

/// One `<<expr=val>>` fragment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Annotation {
    pub expr: String,
    pub value: String,
}

fn annotation_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<<([^<>]*)>>").expect("annotation regex"))
}

/// Extracts all annotations. A fragment without `=` is malformed.
pub fn annotations(input: &str) -> Result<Vec<Annotation>, String> {
    annotation_re()
        .captures_iter(input)
        .map(|c| {
            let body = &c[1];
            match body.split_once('=') {
                Some((e, v)) if !e.trim().is_empty() && !v.trim().is_empty() => Ok(Annotation {
                    expr: e.trim().to_string(),
                    value: v.trim().to_string(),
                }),
                _ => Err(format!("Malformed annotation '<<{body}>>'.")),
            }
        })
        .collect()
}

/// Runs the calculator on raw Action Input text.
pub fn calculator_execute(input: &str) -> ToolResult {
    if annotation_re().is_match(input) {
        verify_annotations(input)
    } else {
        let expr = input.trim();
        if expr.is_empty() {
            return ToolResult::invalid("Empty expression.");
        }
        match evaluate(expr) {
            Ok(v) => ToolResult::ok(format_number(v)),
            Err(e) => eval_error(e),
        }
    }
}

fn eval_error(e: EvalError) -> ToolResult {
    match e {
        EvalError::Syntax { .. } => ToolResult::invalid(format!("Invalid expression: {e}.")),
        EvalError::DivisionByZero(_) => {
            ToolResult::error(ErrorKind::ExecutionError, format!("Calculation failed: {e}."))
        }
    }
}

fn verify_annotations(input: &str) -> ToolResult {
    let anns = match annotations(input) {
        Ok(a) => a,
        Err(msg) => return ToolResult::invalid(msg),
    };
    let mut mismatches = Vec::new();
    for ann in &anns {
        let lhs = match evaluate(&ann.expr) {
            Ok(v) => v,
            Err(e) => return eval_error(e),
        };
        let rhs = match evaluate(&ann.value) {
            Ok(v) => v,
            Err(e) => return eval_error(e),
        };
        if !approx_equal(lhs, rhs) {
            mismatches.push(format!("{} not equal to {}", ann.expr, ann.value));
        }
    }
    if mismatches.is_empty() {
        ToolResult::ok("The calculations are correct.")
    } else {
        ToolResult::ok(format!(
            "The calculations are incorrect. Details: {}.",
            mismatches.join("; ")
        ))
    }
}

#[derive(Debug)]
pub struct CalculatorTool {
    spec: ToolSpec,
}

impl CalculatorTool {
    pub fn new() -> Self {
        Self {
            spec: ToolSpec {
                name: CALCULATOR.to_string(),
                arg_grammar: "an arithmetic expression, or a list of <<expr=value>> annotations to verify"
                    .to_string(),
                requires_network: false,
            },
        }
    }
}

impl Default for CalculatorTool {
    fn default() -> Self {
        Self::new()
    }
}

impl Tool for CalculatorTool {
    fn spec(&self) -> &ToolSpec {
        &self.spec
    }

    fn execute(&self, raw_input: &str) -> ToolResult {
        calculator_execute(raw_input)
    }
}
