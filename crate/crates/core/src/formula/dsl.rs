//! Constraint DSL.
//!
//! ```text
//! iff     := implies ( "<->" implies )*      left-associative
//! implies := xor ( "->" implies )?           right-associative
//! xor     := or ( "^" or )*                  left-associative
//! or      := and ( "|" and )*                n-ary
//! and     := unary ( "&" unary )*            n-ary
//! unary   := "!" unary | atom
//! atom    := IDENT | "true" | "false" | "(" iff ")"
//! ```
//!
//! `#` starts a comment running to the end of the line.

use std::collections::HashMap;

use super::{Expr, Formula, FormulaError};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    True,
    False,
    Not,
    And,
    Or,
    Xor,
    Implies,
    Iff,
    LParen,
    RParen,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::True => "`true`".into(),
            Tok::False => "`false`".into(),
            Tok::Not => "`!`".into(),
            Tok::And => "`&`".into(),
            Tok::Or => "`|`".into(),
            Tok::Xor => "`^`".into(),
            Tok::Implies => "`->`".into(),
            Tok::Iff => "`<->`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Pos {
    line: usize,
    column: usize,
}

fn syntax(pos: Pos, message: impl Into<String>) -> FormulaError {
    FormulaError::Syntax {
        line: pos.line,
        column: pos.column,
        message: message.into(),
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, Pos)>, FormulaError> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let chars: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let pos = Pos {
                line: ln + 1,
                column: i + 1,
            };
            if c == '#' {
                break;
            }
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                let tok = match word.as_str() {
                    "true" => Tok::True,
                    "false" => Tok::False,
                    _ => Tok::Ident(word),
                };
                out.push((tok, pos));
                continue;
            }
            let rest: String = chars[i..chars.len().min(i + 3)].iter().collect();
            let (tok, width) = if rest.starts_with("<->") {
                (Tok::Iff, 3)
            } else if rest.starts_with("->") {
                (Tok::Implies, 2)
            } else {
                match c {
                    '!' => (Tok::Not, 1),
                    '&' => (Tok::And, 1),
                    '|' => (Tok::Or, 1),
                    '^' => (Tok::Xor, 1),
                    '(' => (Tok::LParen, 1),
                    ')' => (Tok::RParen, 1),
                    _ => return Err(syntax(pos, format!("unexpected character `{c}`"))),
                }
            };
            out.push((tok, pos));
            i += width;
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    at: usize,
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|(t, _)| t)
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    /// Position for an error at the current token, or at the last consumed
    /// token when the input ended.
    fn here(&self) -> Pos {
        match self.toks.get(self.at) {
            Some((_, p)) => *p,
            None => self.toks.last().map(|(_, p)| *p).unwrap_or(Pos { line: 1, column: 1 }),
        }
    }

    fn iff(&mut self) -> Result<Expr, FormulaError> {
        let mut lhs = self.implies()?;
        while self.eat(&Tok::Iff) {
            let rhs = self.implies()?;
            lhs = Expr::iff(lhs, rhs);
        }
        Ok(lhs)
    }

    fn implies(&mut self) -> Result<Expr, FormulaError> {
        let lhs = self.xor()?;
        if self.eat(&Tok::Implies) {
            let rhs = self.implies()?;
            return Ok(Expr::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn xor(&mut self) -> Result<Expr, FormulaError> {
        let mut lhs = self.or()?;
        while self.eat(&Tok::Xor) {
            let rhs = self.or()?;
            lhs = Expr::xor(lhs, rhs);
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<Expr, FormulaError> {
        let mut items = vec![self.and()?];
        while self.eat(&Tok::Or) {
            items.push(self.and()?);
        }
        Ok(Expr::any(items))
    }

    fn and(&mut self) -> Result<Expr, FormulaError> {
        let mut items = vec![self.unary()?];
        while self.eat(&Tok::And) {
            items.push(self.unary()?);
        }
        Ok(Expr::all(items))
    }

    fn unary(&mut self) -> Result<Expr, FormulaError> {
        if self.eat(&Tok::Not) {
            return Ok(Expr::not(self.unary()?));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, FormulaError> {
        let pos = self.here();
        let Some((tok, _)) = self.toks.get(self.at).cloned() else {
            let after = self
                .toks
                .last()
                .map(|(t, _)| t.describe())
                .unwrap_or_default();
            return Err(syntax(pos, format!("expected operand after {after}")));
        };
        self.at += 1;
        match tok {
            Tok::Ident(name) => {
                let next = self.names.len();
                let i = *self.index.entry(name.clone()).or_insert(next);
                if i == next {
                    self.names.push(name);
                }
                Ok(Expr::Var(i))
            }
            Tok::True => Ok(Expr::Const(true)),
            Tok::False => Ok(Expr::Const(false)),
            Tok::LParen => {
                let e = self.iff()?;
                if !self.eat(&Tok::RParen) {
                    return Err(syntax(self.here(), "expected `)`"));
                }
                Ok(e)
            }
            other => Err(syntax(pos, format!("expected operand, found {}", other.describe()))),
        }
    }
}

/// Parses constraint DSL text. Variables are indexed in order of first
/// occurrence.
pub fn parse_dsl(text: &str) -> Result<Formula, FormulaError> {
    let toks = lex(text)?;
    if toks.is_empty() {
        return Err(FormulaError::Empty);
    }
    let mut p = Parser {
        toks,
        at: 0,
        names: Vec::new(),
        index: HashMap::new(),
    };
    let expr = p.iff()?;
    if let Some((tok, pos)) = p.toks.get(p.at) {
        return Err(syntax(*pos, format!("unexpected {}", tok.describe())));
    }
    Formula::new(expr, p.names)
}
