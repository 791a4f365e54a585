//! Text form of linear constraints, e.g. `x0 + x1 <= 1` or `2x0 - 3 x2 >= -1`.
//!
//! Grammar: `term (('+' | '-') term)* op int`, where a term is an optional
//! integer coefficient (an optional `*` may follow it) and a variable `xN`.
//! A leading sign on the first term is allowed. `op` is one of `=`, `==`,
//! `<=`, `>=`, `<`, `>`; strict comparisons are shifted onto `<=` / `>=`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{LinearConstraint, Sense};

/// A comparison as written, strict forms included.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Comparison {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = ">")]
    Gt,
}

impl Comparison {
    pub const ALL: [Comparison; 5] = [
        Comparison::Eq,
        Comparison::Le,
        Comparison::Ge,
        Comparison::Lt,
        Comparison::Gt,
    ];

    pub const NON_STRICT: [Comparison; 3] = [Comparison::Eq, Comparison::Le, Comparison::Ge];

    /// The equivalent non-strict sense and right-hand side over integers.
    pub fn normalize(self, rhs: i64) -> (Sense, i64) {
        match self {
            Comparison::Eq => (Sense::Eq, rhs),
            Comparison::Le => (Sense::Le, rhs),
            Comparison::Ge => (Sense::Ge, rhs),
            Comparison::Lt => (Sense::Le, rhs - 1),
            Comparison::Gt => (Sense::Ge, rhs + 1),
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Comparison::Eq => "=",
            Comparison::Le => "<=",
            Comparison::Ge => ">=",
            Comparison::Lt => "<",
            Comparison::Gt => ">",
        }
    }
}

impl From<Sense> for Comparison {
    fn from(s: Sense) -> Self {
        match s {
            Sense::Eq => Comparison::Eq,
            Sense::Le => Comparison::Le,
            Sense::Ge => Comparison::Ge,
        }
    }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for Comparison {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "=" | "==" | "eq" | "EQ" => Comparison::Eq,
            "<=" | "le" | "LE" => Comparison::Le,
            ">=" | "ge" | "GE" => Comparison::Ge,
            "<" | "lt" | "LT" => Comparison::Lt,
            ">" | "gt" | "GT" => Comparison::Gt,
            _ => {
                return Err(Error::Parse {
                    position: 0,
                    message: format!("unknown comparison {s:?}"),
                })
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Int(i64),
    Var(usize),
    Plus,
    Minus,
    Star,
    Op(Comparison),
}

fn parse_error(position: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        position,
        message: message.into(),
    }
}

fn tokenize(text: &str) -> Result<Vec<(usize, Token)>> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    let digits_from = |start: usize| {
        let mut end = start;
        while end < bytes.len() && bytes[end].is_ascii_digit() {
            end += 1;
        }
        end
    };
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b' ' | b'\t' => i += 1,
            b'+' => {
                tokens.push((i, Token::Plus));
                i += 1;
            }
            b'-' => {
                tokens.push((i, Token::Minus));
                i += 1;
            }
            b'*' => {
                tokens.push((i, Token::Star));
                i += 1;
            }
            b'0'..=b'9' => {
                let end = digits_from(i);
                let value = text[i..end]
                    .parse()
                    .map_err(|_| parse_error(i, "integer out of range"))?;
                tokens.push((i, Token::Int(value)));
                i = end;
            }
            b'x' | b'X' => {
                let end = digits_from(i + 1);
                if end == i + 1 {
                    return Err(parse_error(i, "expected a variable index after 'x'"));
                }
                let index = text[i + 1..end]
                    .parse()
                    .map_err(|_| parse_error(i, "variable index out of range"))?;
                tokens.push((i, Token::Var(index)));
                i = end;
            }
            b'<' | b'>' | b'=' => {
                let two = bytes.get(i + 1) == Some(&b'=');
                let op = match (c, two) {
                    (b'<', true) => Comparison::Le,
                    (b'>', true) => Comparison::Ge,
                    (b'=', _) => Comparison::Eq,
                    (b'<', false) => Comparison::Lt,
                    _ => Comparison::Gt,
                };
                tokens.push((i, Token::Op(op)));
                i += if two { 2 } else { 1 };
            }
            _ => {
                let ch = text[i..].chars().next().unwrap_or('?');
                return Err(parse_error(i, format!("unexpected character {ch:?}")));
            }
        }
    }
    Ok(tokens)
}

/// A constraint as parsed, before it is given a variable count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedConstraint {
    /// `(variable, coefficient)` with repeated variables merged, ascending.
    pub terms: Vec<(usize, i64)>,
    pub comparison: Comparison,
    pub rhs: i64,
}

impl ParsedConstraint {
    /// One more than the largest variable index mentioned.
    pub fn min_variables(&self) -> usize {
        self.terms.iter().map(|&(v, _)| v + 1).max().unwrap_or(0)
    }

    /// Lowers to a [`LinearConstraint`] over `n` variables.
    pub fn to_constraint(&self, n: usize) -> Result<LinearConstraint> {
        let mut coeffs = vec![0; n];
        for &(v, c) in &self.terms {
            if v >= n {
                return Err(Error::VariableOutOfRange { index: v, n });
            }
            coeffs[v] = c;
        }
        let (sense, rhs) = self.comparison.normalize(self.rhs);
        LinearConstraint::new(coeffs, sense, rhs)
    }
}

pub fn parse(text: &str) -> Result<ParsedConstraint> {
    let tokens = tokenize(text)?;
    let end = text.len();
    let mut pos = 0;
    let at = |pos: usize| tokens.get(pos).map_or(end, |t| t.0);

    let mut terms: Vec<(usize, i64)> = Vec::new();
    let mut expect_term = true;
    let mut sign = 1i64;
    let comparison = loop {
        let Some((offset, token)) = tokens.get(pos) else {
            return Err(parse_error(end, "expected a comparison operator"));
        };
        match (expect_term, token) {
            (true, Token::Minus) if terms.is_empty() && sign == 1 => {
                sign = -1;
                pos += 1;
            }
            (true, Token::Plus) if terms.is_empty() && sign == 1 => pos += 1,
            (true, Token::Int(c)) => {
                pos += 1;
                if matches!(tokens.get(pos), Some((_, Token::Star))) {
                    pos += 1;
                }
                match tokens.get(pos) {
                    Some((_, Token::Var(v))) => {
                        terms.push((*v, sign * c));
                        pos += 1;
                        expect_term = false;
                    }
                    _ => {
                        return Err(parse_error(
                            at(pos),
                            "expected a variable after the coefficient",
                        ))
                    }
                }
            }
            (true, Token::Var(v)) => {
                terms.push((*v, sign));
                pos += 1;
                expect_term = false;
            }
            (true, _) => return Err(parse_error(*offset, "expected a term")),
            (false, Token::Plus) => {
                sign = 1;
                pos += 1;
                expect_term = true;
            }
            (false, Token::Minus) => {
                sign = -1;
                pos += 1;
                expect_term = true;
            }
            (false, Token::Op(op)) => {
                pos += 1;
                break *op;
            }
            (false, _) => return Err(parse_error(*offset, "expected '+', '-' or a comparison")),
        }
    };

    let mut rhs_sign = 1;
    if let Some((_, Token::Minus)) = tokens.get(pos) {
        rhs_sign = -1;
        pos += 1;
    }
    let rhs = match tokens.get(pos) {
        Some((_, Token::Int(b))) => rhs_sign * b,
        _ => return Err(parse_error(at(pos), "expected an integer right-hand side")),
    };
    pos += 1;
    if pos < tokens.len() {
        return Err(parse_error(
            at(pos),
            "unexpected input after the right-hand side",
        ));
    }

    terms.sort_by_key(|&(v, _)| v);
    let mut merged: Vec<(usize, i64)> = Vec::with_capacity(terms.len());
    for (v, c) in terms {
        match merged.last_mut() {
            Some(last) if last.0 == v => last.1 += c,
            _ => merged.push((v, c)),
        }
    }
    merged.retain(|&(_, c)| c != 0);
    if merged.is_empty() {
        return Err(Error::EmptySupport);
    }
    Ok(ParsedConstraint {
        terms: merged,
        comparison,
        rhs,
    })
}

/// Parses `text` into a constraint over `n` variables, or over just enough
/// variables when `n` is `None`.
pub fn parse_constraint(text: &str, n: Option<usize>) -> Result<LinearConstraint> {
    let parsed = parse(text)?;
    parsed.to_constraint(n.unwrap_or_else(|| parsed.min_variables()))
}

/// Parses several constraints onto a common variable count.
pub fn parse_constraints<S: AsRef<str>>(
    texts: &[S],
    n: Option<usize>,
) -> Result<Vec<LinearConstraint>> {
    let parsed = texts
        .iter()
        .map(|t| parse(t.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let n = n.unwrap_or_else(|| {
        parsed
            .iter()
            .map(ParsedConstraint::min_variables)
            .max()
            .unwrap_or(0)
    });
    parsed.iter().map(|p| p.to_constraint(n)).collect()
}
