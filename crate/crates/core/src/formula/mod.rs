//! Propositional formulas over named Boolean variables.
//!
//! A [`Formula`] pairs an expression tree with an ordered variable table.
//! Variables are referenced by table index inside the tree; the table
//! order is the default variable order used by the circuit compiler.

mod dimacs;
mod dsl;

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

pub use dimacs::parse_dimacs;
pub use dsl::parse_dsl;

/// Largest variable count accepted by [`Formula::enumerate_models`].
pub const ENUMERATION_LIMIT: usize = 24;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormulaError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("empty input")]
    Empty,
    #[error("dimacs: {0}")]
    Dimacs(String),
    #[error("variable index {index} out of range for table of {len} variables")]
    UnknownVariable { index: usize, len: usize },
    #[error("duplicate variable name `{0}`")]
    DuplicateName(String),
    #[error("invalid variable name `{0}`")]
    InvalidName(String),
    #[error("{0} node with no children")]
    EmptyConnective(&'static str),
    #[error("assignment has {got} bits, formula has {expected} variables")]
    LengthMismatch { expected: usize, got: usize },
    #[error("{vars} variables exceed the enumeration guard of {limit}")]
    TooManyVariables { vars: usize, limit: usize },
}

/// Expression tree. `Var` holds an index into the owning formula's table.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr {
    Var(usize),
    Const(bool),
    Not(Box<Expr>),
    And(Vec<Expr>),
    Or(Vec<Expr>),
    Implies(Box<Expr>, Box<Expr>),
    Iff(Box<Expr>, Box<Expr>),
    Xor(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn var(i: usize) -> Expr {
        Expr::Var(i)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(e: Expr) -> Expr {
        Expr::Not(Box::new(e))
    }

    pub fn implies(a: Expr, b: Expr) -> Expr {
        Expr::Implies(Box::new(a), Box::new(b))
    }

    pub fn iff(a: Expr, b: Expr) -> Expr {
        Expr::Iff(Box::new(a), Box::new(b))
    }

    pub fn xor(a: Expr, b: Expr) -> Expr {
        Expr::Xor(Box::new(a), Box::new(b))
    }

    /// Conjunction that folds the empty case to `true` and a singleton to its child.
    pub fn all(mut items: Vec<Expr>) -> Expr {
        match items.len() {
            0 => Expr::Const(true),
            1 => items.pop().unwrap(),
            _ => Expr::And(items),
        }
    }

    /// Disjunction that folds the empty case to `false` and a singleton to its child.
    pub fn any(mut items: Vec<Expr>) -> Expr {
        match items.len() {
            0 => Expr::Const(false),
            1 => items.pop().unwrap(),
            _ => Expr::Or(items),
        }
    }

    pub fn eval(&self, bits: &[bool]) -> bool {
        match self {
            Expr::Var(i) => bits[*i],
            Expr::Const(b) => *b,
            Expr::Not(e) => !e.eval(bits),
            Expr::And(es) => es.iter().all(|e| e.eval(bits)),
            Expr::Or(es) => es.iter().any(|e| e.eval(bits)),
            Expr::Implies(a, b) => !a.eval(bits) || b.eval(bits),
            Expr::Iff(a, b) => a.eval(bits) == b.eval(bits),
            Expr::Xor(a, b) => a.eval(bits) != b.eval(bits),
        }
    }

    /// Rewrites variable indices through `f`.
    pub fn map_vars(&self, f: &impl Fn(usize) -> usize) -> Expr {
        match self {
            Expr::Var(i) => Expr::Var(f(*i)),
            Expr::Const(b) => Expr::Const(*b),
            Expr::Not(e) => Expr::not(e.map_vars(f)),
            Expr::And(es) => Expr::And(es.iter().map(|e| e.map_vars(f)).collect()),
            Expr::Or(es) => Expr::Or(es.iter().map(|e| e.map_vars(f)).collect()),
            Expr::Implies(a, b) => Expr::implies(a.map_vars(f), b.map_vars(f)),
            Expr::Iff(a, b) => Expr::iff(a.map_vars(f), b.map_vars(f)),
            Expr::Xor(a, b) => Expr::xor(a.map_vars(f), b.map_vars(f)),
        }
    }

    /// Rewrites `Implies`, `Iff` and `Xor` into `And`/`Or`/`Not`.
    pub fn desugar(&self) -> Expr {
        match self {
            Expr::Var(_) | Expr::Const(_) => self.clone(),
            Expr::Not(e) => Expr::not(e.desugar()),
            Expr::And(es) => Expr::And(es.iter().map(Expr::desugar).collect()),
            Expr::Or(es) => Expr::Or(es.iter().map(Expr::desugar).collect()),
            Expr::Implies(a, b) => Expr::Or(vec![Expr::not(a.desugar()), b.desugar()]),
            Expr::Iff(a, b) => {
                let (a, b) = (a.desugar(), b.desugar());
                Expr::Or(vec![
                    Expr::And(vec![a.clone(), b.clone()]),
                    Expr::And(vec![Expr::not(a), Expr::not(b)]),
                ])
            }
            Expr::Xor(a, b) => {
                let (a, b) = (a.desugar(), b.desugar());
                Expr::Or(vec![
                    Expr::And(vec![a.clone(), Expr::not(b.clone())]),
                    Expr::And(vec![Expr::not(a), b]),
                ])
            }
        }
    }

    fn visit_vars(&self, out: &mut impl FnMut(usize)) {
        match self {
            Expr::Var(i) => out(*i),
            Expr::Const(_) => {}
            Expr::Not(e) => e.visit_vars(out),
            Expr::And(es) | Expr::Or(es) => es.iter().for_each(|e| e.visit_vars(out)),
            Expr::Implies(a, b) | Expr::Iff(a, b) | Expr::Xor(a, b) => {
                a.visit_vars(out);
                b.visit_vars(out);
            }
        }
    }

    /// Collapses singleton `And`/`Or` nodes and rejects empty ones.
    fn normalize(self) -> Result<Expr, FormulaError> {
        Ok(match self {
            Expr::Var(_) | Expr::Const(_) => self,
            Expr::Not(e) => Expr::not(e.normalize()?),
            Expr::And(es) => {
                if es.is_empty() {
                    return Err(FormulaError::EmptyConnective("And"));
                }
                let mut es = es
                    .into_iter()
                    .map(Expr::normalize)
                    .collect::<Result<Vec<_>, _>>()?;
                if es.len() == 1 {
                    es.pop().unwrap()
                } else {
                    Expr::And(es)
                }
            }
            Expr::Or(es) => {
                if es.is_empty() {
                    return Err(FormulaError::EmptyConnective("Or"));
                }
                let mut es = es
                    .into_iter()
                    .map(Expr::normalize)
                    .collect::<Result<Vec<_>, _>>()?;
                if es.len() == 1 {
                    es.pop().unwrap()
                } else {
                    Expr::Or(es)
                }
            }
            Expr::Implies(a, b) => Expr::implies(a.normalize()?, b.normalize()?),
            Expr::Iff(a, b) => Expr::iff(a.normalize()?, b.normalize()?),
            Expr::Xor(a, b) => Expr::xor(a.normalize()?, b.normalize()?),
        })
    }

    pub fn size(&self) -> usize {
        match self {
            Expr::Var(_) | Expr::Const(_) => 1,
            Expr::Not(e) => 1 + e.size(),
            Expr::And(es) | Expr::Or(es) => 1 + es.iter().map(Expr::size).sum::<usize>(),
            Expr::Implies(a, b) | Expr::Iff(a, b) | Expr::Xor(a, b) => 1 + a.size() + b.size(),
        }
    }
}

/// A total truth assignment, indexed by a formula's variable table.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Assignment(pub Vec<bool>);

impl Assignment {
    pub fn from_bits(bits: &[u8]) -> Assignment {
        Assignment(bits.iter().map(|&b| b != 0).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Formula {
    expr: Expr,
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl PartialEq for Formula {
    fn eq(&self, other: &Formula) -> bool {
        self.expr == other.expr && self.names == other.names
    }
}

impl Eq for Formula {}

pub(crate) fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_') && name != "true" && name != "false"
}

impl Formula {
    /// Builds a formula from an expression and an explicit variable table.
    ///
    /// The table may list variables that do not occur in the expression
    /// (they are unconstrained). Singleton `And`/`Or` nodes are collapsed.
    pub fn new(expr: Expr, names: Vec<String>) -> Result<Formula, FormulaError> {
        let mut bad = None;
        expr.visit_vars(&mut |i| {
            if i >= names.len() && bad.is_none() {
                bad = Some(i);
            }
        });
        if let Some(index) = bad {
            return Err(FormulaError::UnknownVariable {
                index,
                len: names.len(),
            });
        }
        let mut index = HashMap::with_capacity(names.len());
        for (i, n) in names.iter().enumerate() {
            if !is_identifier(n) {
                return Err(FormulaError::InvalidName(n.clone()));
            }
            if index.insert(n.clone(), i).is_some() {
                return Err(FormulaError::DuplicateName(n.clone()));
            }
        }
        Ok(Formula {
            expr: expr.normalize()?,
            names,
            index,
        })
    }

    pub fn constant(value: bool) -> Formula {
        Formula {
            expr: Expr::Const(value),
            names: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn num_vars(&self) -> usize {
        self.names.len()
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn evaluate(&self, a: &Assignment) -> Result<bool, FormulaError> {
        self.evaluate_bits(a.bits())
    }

    pub fn evaluate_bits(&self, bits: &[bool]) -> Result<bool, FormulaError> {
        if bits.len() != self.names.len() {
            return Err(FormulaError::LengthMismatch {
                expected: self.names.len(),
                got: bits.len(),
            });
        }
        Ok(self.expr.eval(bits))
    }

    /// All satisfying assignments in lexicographic order (variable 0 most
    /// significant). Exponential; guarded at [`ENUMERATION_LIMIT`] variables.
    pub fn enumerate_models(&self) -> Result<Vec<Assignment>, FormulaError> {
        let b = self.names.len();
        if b > ENUMERATION_LIMIT {
            return Err(FormulaError::TooManyVariables {
                vars: b,
                limit: ENUMERATION_LIMIT,
            });
        }
        let mut out = Vec::new();
        let mut bits = vec![false; b];
        for m in 0u64..(1u64 << b) {
            for (i, bit) in bits.iter_mut().enumerate() {
                *bit = (m >> (b - 1 - i)) & 1 == 1;
            }
            if self.expr.eval(&bits) {
                out.push(Assignment(bits.clone()));
            }
        }
        Ok(out)
    }

    /// Same formula with `Implies`/`Iff`/`Xor` rewritten away.
    pub fn desugared(&self) -> Formula {
        Formula {
            expr: self.expr.desugar(),
            names: self.names.clone(),
            index: self.index.clone(),
        }
    }

    /// Conjunction of formulas, merging variable tables by name in order of
    /// first appearance across the inputs.
    pub fn conjoin(parts: &[&Formula]) -> Formula {
        let mut names: Vec<String> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut exprs = Vec::with_capacity(parts.len());
        for f in parts {
            let remap: Vec<usize> = f
                .names
                .iter()
                .map(|n| {
                    *index.entry(n.clone()).or_insert_with(|| {
                        names.push(n.clone());
                        names.len() - 1
                    })
                })
                .collect();
            exprs.push(f.expr.map_vars(&|i| remap[i]));
        }
        Formula {
            expr: Expr::all(exprs),
            names,
            index,
        }
    }

    /// Fully parenthesized DSL text; `parse_dsl` reads it back unchanged.
    pub fn pretty(&self) -> String {
        let mut s = String::new();
        self.write_expr(&self.expr, &mut s);
        s
    }

    fn write_expr(&self, e: &Expr, s: &mut String) {
        let nary = |s: &mut String, es: &[Expr], op: &str| {
            s.push('(');
            for (i, c) in es.iter().enumerate() {
                if i > 0 {
                    s.push_str(op);
                }
                self.write_expr(c, s);
            }
            s.push(')');
        };
        match e {
            Expr::Var(i) => s.push_str(&self.names[*i]),
            Expr::Const(true) => s.push_str("true"),
            Expr::Const(false) => s.push_str("false"),
            Expr::Not(c) => {
                s.push('!');
                self.write_expr(c, s);
            }
            Expr::And(es) => nary(s, es, " & "),
            Expr::Or(es) => nary(s, es, " | "),
            Expr::Implies(a, b) => nary(s, &[(**a).clone(), (**b).clone()], " -> "),
            Expr::Iff(a, b) => nary(s, &[(**a).clone(), (**b).clone()], " <-> "),
            Expr::Xor(a, b) => nary(s, &[(**a).clone(), (**b).clone()], " ^ "),
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.pretty())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xor2() -> Formula {
        Formula::new(
            Expr::xor(Expr::var(0), Expr::var(1)),
            vec!["x".into(), "y".into()],
        )
        .unwrap()
    }

    #[test]
    fn evaluate_truth_table() {
        let f = xor2();
        assert!(f.evaluate(&Assignment::from_bits(&[1, 0])).unwrap());
        assert!(!f.evaluate(&Assignment::from_bits(&[1, 1])).unwrap());
        assert!(Formula::constant(true)
            .evaluate(&Assignment(vec![]))
            .unwrap());
    }

    #[test]
    fn evaluate_length_mismatch() {
        let err = xor2().evaluate(&Assignment::from_bits(&[1])).unwrap_err();
        assert_eq!(
            err,
            FormulaError::LengthMismatch {
                expected: 2,
                got: 1
            }
        );
    }

    #[test]
    fn enumerate_examples() {
        let models = xor2().enumerate_models().unwrap();
        assert_eq!(
            models,
            vec![Assignment::from_bits(&[0, 1]), Assignment::from_bits(&[1, 0])]
        );
        assert!(Formula::constant(false).enumerate_models().unwrap().is_empty());
        let or = parse_dimacs("p cnf 2 1\n1 2 0\n").unwrap();
        assert_eq!(
            or.enumerate_models().unwrap(),
            vec![
                Assignment::from_bits(&[0, 1]),
                Assignment::from_bits(&[1, 0]),
                Assignment::from_bits(&[1, 1])
            ]
        );
    }

    #[test]
    fn enumeration_guard() {
        let names: Vec<String> = (0..25).map(|i| format!("v{i}")).collect();
        let f = Formula::new(Expr::Const(true), names).unwrap();
        assert!(matches!(
            f.enumerate_models(),
            Err(FormulaError::TooManyVariables { vars: 25, .. })
        ));
    }

    #[test]
    fn new_rejects_bad_tables() {
        assert!(matches!(
            Formula::new(Expr::var(2), vec!["a".into()]),
            Err(FormulaError::UnknownVariable { index: 2, len: 1 })
        ));
        assert!(matches!(
            Formula::new(Expr::var(0), vec!["a".into(), "a".into()]),
            Err(FormulaError::DuplicateName(_))
        ));
        assert!(matches!(
            Formula::new(Expr::And(vec![]), vec![]),
            Err(FormulaError::EmptyConnective("And"))
        ));
    }

    #[test]
    fn singleton_connectives_collapse() {
        let f = Formula::new(Expr::And(vec![Expr::var(0)]), vec!["a".into()]).unwrap();
        assert_eq!(f.expr(), &Expr::var(0));
    }

    #[test]
    fn cnf_and_native_xor_have_same_models() {
        let cnf = parse_dsl("(x | y) & (!x | !y)").unwrap();
        assert_eq!(cnf.enumerate_models().unwrap(), xor2().enumerate_models().unwrap());
        assert_eq!(
            xor2().desugared().enumerate_models().unwrap(),
            xor2().enumerate_models().unwrap()
        );
    }

    #[test]
    fn conjoin_merges_tables_by_name() {
        let a = parse_dsl("x -> y").unwrap();
        let b = parse_dsl("z | y").unwrap();
        let c = Formula::conjoin(&[&a, &b]);
        assert_eq!(c.names(), &["x", "y", "z"]);
        assert_eq!(c.pretty(), "((x -> y) & (z | y))");
    }
}
