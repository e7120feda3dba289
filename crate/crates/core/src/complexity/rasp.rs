//! Operation counting for a line-oriented RASP-L subset.
//!
//! ```text
//! program    := line*
//! line       := comment | assignment
//! comment    := '#' any*
//! assignment := ident '=' expr
//! expr       := ident | number | call
//! call       := ident '(' args? ')'
//! args       := expr (',' expr)*
//! ```
//!
//! Every call to a primitive is one operation. Calls to names bound earlier
//! in the program are helper calls and are not counted; calls to any other
//! name are parse errors.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Primitive operations. Each call site counts as one operation.
pub const PRIMITIVES: [&str; 13] = [
    "select",
    "aggregate",
    "selector_width",
    "map",
    "seq_map",
    "full",
    "indices",
    "tokens",
    "shift_right",
    "kqv",
    "where",
    "sort",
    "cumsum",
];

pub fn is_primitive(name: &str) -> bool {
    PRIMITIVES.contains(&name)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Expr {
    Ident(String),
    Number(String),
    Call {
        name: String,
        args: Vec<Expr>,
        primitive: bool,
    },
}

impl Expr {
    pub fn op_count(&self) -> usize {
        match self {
            Expr::Ident(_) | Expr::Number(_) => 0,
            Expr::Call { args, primitive, .. } => {
                usize::from(*primitive) + args.iter().map(Expr::op_count).sum::<usize>()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Statement {
    pub line: usize,
    pub target: String,
    pub expr: Expr,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RaspProgram {
    pub source: String,
    pub statements: Vec<Statement>,
    pub op_count: usize,
}

impl RaspProgram {
    pub fn parse(source: &str) -> Result<Self> {
        let mut bound: HashSet<String> = HashSet::new();
        let mut statements = Vec::new();
        for (index, raw) in source.lines().enumerate() {
            let line = index + 1;
            let code = raw.find('#').map_or(raw, |i| &raw[..i]);
            if code.trim().is_empty() {
                continue;
            }
            let statement = LineParser::new(code, line, &bound).assignment()?;
            bound.insert(statement.target.clone());
            statements.push(statement);
        }
        if statements.is_empty() {
            return Err(Error::EmptyProgram);
        }
        let op_count = statements.iter().map(|s| s.expr.op_count()).sum();
        Ok(Self {
            source: source.to_string(),
            statements,
            op_count,
        })
    }
}

/// Number of primitive call sites in `source`.
pub fn count_rasp_ops(source: &str) -> Result<usize> {
    Ok(RaspProgram::parse(source)?.op_count)
}

/// The first triple-backtick block of a model response, or the whole
/// response when there is none. The opening fence's info string is dropped.
pub fn extract_fenced_block(response: &str) -> &str {
    let Some(open) = response.find("```") else {
        return response;
    };
    let after = &response[open + 3..];
    let body = after.find('\n').map_or("", |nl| &after[nl + 1..]);
    match body.find("```") {
        Some(close) => &body[..close],
        None => body,
    }
}

struct LineParser<'a> {
    chars: Vec<(usize, char)>,
    pos: usize,
    line: usize,
    text: &'a str,
    bound: &'a HashSet<String>,
}

impl<'a> LineParser<'a> {
    fn new(text: &'a str, line: usize, bound: &'a HashSet<String>) -> Self {
        Self {
            chars: text.char_indices().collect(),
            pos: 0,
            line,
            text,
            bound,
        }
    }

    fn error(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            column: self.pos + 1,
            message: message.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].1.is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).map(|&(_, c)| c)
    }

    fn expect(&mut self, wanted: char) -> Result<()> {
        match self.peek() {
            Some(c) if c == wanted => {
                self.pos += 1;
                Ok(())
            }
            Some(c) => Err(self.error(format!("expected '{wanted}', found '{c}'"))),
            None => Err(self.error(format!("expected '{wanted}', found end of line"))),
        }
    }

    fn slice(&self, start: usize, end: usize) -> &'a str {
        let from = self.chars[start].0;
        let to = self.chars.get(end).map_or(self.text.len(), |&(i, _)| i);
        &self.text[from..to]
    }

    fn ident(&mut self) -> Result<String> {
        match self.peek() {
            Some(c) if c == '_' || c.is_ascii_alphabetic() => {}
            Some(c) => return Err(self.error(format!("expected identifier, found '{c}'"))),
            None => return Err(self.error("expected identifier, found end of line")),
        }
        let start = self.pos;
        while self
            .chars
            .get(self.pos)
            .is_some_and(|&(_, c)| c == '_' || c.is_ascii_alphanumeric())
        {
            self.pos += 1;
        }
        Ok(self.slice(start, self.pos).to_string())
    }

    fn number(&mut self) -> String {
        let start = self.pos;
        if self.chars[self.pos].1 == '-' {
            self.pos += 1;
        }
        while self
            .chars
            .get(self.pos)
            .is_some_and(|&(_, c)| c.is_ascii_digit() || c == '.')
        {
            self.pos += 1;
        }
        self.slice(start, self.pos).to_string()
    }

    fn assignment(mut self) -> Result<Statement> {
        let target = self.ident()?;
        self.expect('=')?;
        let expr = self.expr()?;
        if let Some(c) = self.peek() {
            return Err(self.error(format!("unexpected '{c}' after expression")));
        }
        Ok(Statement {
            line: self.line,
            target,
            expr,
        })
    }

    fn expr(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(c) if c.is_ascii_digit() || c == '-' => {
                let literal = self.number();
                if literal == "-" {
                    return Err(self.error("expected digits after '-'"));
                }
                return Ok(Expr::Number(literal));
            }
            _ => {}
        }
        let name_start = self.pos;
        let name = self.ident()?;
        if self.peek() != Some('(') {
            return Ok(Expr::Ident(name));
        }
        let primitive = is_primitive(&name);
        if !primitive && !self.bound.contains(&name) {
            self.pos = name_start;
            return Err(self.error(format!("call to unknown operation '{name}'")));
        }
        self.pos += 1;
        let mut args = Vec::new();
        if self.peek() == Some(')') {
            self.pos += 1;
        } else {
            loop {
                args.push(self.expr()?);
                match self.peek() {
                    Some(',') => self.pos += 1,
                    Some(')') => {
                        self.pos += 1;
                        break;
                    }
                    Some(c) => return Err(self.error(format!("expected ',' or ')', found '{c}'"))),
                    None => return Err(self.error("unclosed '('")),
                }
            }
        }
        Ok(Expr::Call { name, args, primitive })
    }
}
