//! Semantic loss, the Łukasiewicz fuzzy baseline and switchable
//! (conditional) constraints.

use std::collections::HashMap;

use thiserror::Error;

use crate::circuit::{Circuit, CircuitError};
use crate::formula::{Expr, Formula, FormulaError};
use crate::scalar::Scalar;

/// Floor applied to the WMC by training callers before taking the log.
pub const TRAINING_WMC_FLOOR: f64 = 1e-30;

#[derive(Debug, Error, PartialEq)]
pub enum SemLossError {
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Formula(#[from] FormulaError),
    #[error("infinite loss: all probability mass is on infeasible configurations")]
    Infeasible,
    #[error("fuzzy loss needs a desugared formula, found {0}")]
    UndesugaredConnective(&'static str),
    #[error("variable `{0}` is used both as a code and inside a constraint")]
    Collision(String),
    #[error("{codes} code names for {constraints} constraints")]
    CodeCount { codes: usize, constraints: usize },
    #[error("code has {got} bits, expected {expected}")]
    CodeLength { expected: usize, got: usize },
    #[error("prior needs at least one observation")]
    EmptyPrior,
}

/// Loss in nats and its gradient with respect to the marginals.
#[derive(Clone, Debug, PartialEq)]
pub struct LossValue<T> {
    pub value: T,
    pub gradient: Vec<T>,
}

/// `−ln P(constraint)` under independent marginals `theta`, with gradient
/// `−(∂WMC/∂θ_i)/WMC`. Falls back to log space when the linear pass
/// underflows; a WMC of exactly zero is [`SemLossError::Infeasible`].
pub fn semantic_loss<T: Scalar>(c: &Circuit, theta: &[T]) -> Result<LossValue<T>, SemLossError> {
    let w = c.wmc_checked(theta)?;
    if !w.underflow {
        return Ok(LossValue {
            value: -w.value.ln(),
            gradient: w.gradient.into_iter().map(|g| -g / w.value).collect(),
        });
    }
    let lw = c.log_wmc_gradient(theta)?;
    if lw.value == T::neg_infinity() {
        return Err(SemLossError::Infeasible);
    }
    Ok(LossValue {
        value: -lw.value,
        gradient: lw.gradient.into_iter().map(|g| -g).collect(),
    })
}

/// Training variant: an infeasible distribution gets the loss
/// `−ln TRAINING_WMC_FLOOR` and a zero gradient instead of an error.
pub fn semantic_loss_clamped<T: Scalar>(
    c: &Circuit,
    theta: &[T],
) -> Result<LossValue<T>, SemLossError> {
    match semantic_loss(c, theta) {
        Err(SemLossError::Infeasible) => Ok(LossValue {
            value: -T::lit(TRAINING_WMC_FLOOR).ln(),
            gradient: vec![T::zero(); theta.len()],
        }),
        other => other,
    }
}

/// Łukasiewicz truth value of a desugared formula.
pub fn fuzzy_truth<T: Scalar>(f: &Formula, theta: &[T]) -> Result<T, SemLossError> {
    if theta.len() != f.num_vars() {
        return Err(FormulaError::LengthMismatch {
            expected: f.num_vars(),
            got: theta.len(),
        }
        .into());
    }
    truth(f.expr(), theta)
}

fn truth<T: Scalar>(e: &Expr, theta: &[T]) -> Result<T, SemLossError> {
    let (zero, one) = (T::zero(), T::one());
    Ok(match e {
        Expr::Var(v) => theta[*v],
        Expr::Const(b) => {
            if *b {
                one
            } else {
                zero
            }
        }
        Expr::Not(c) => one - truth(c, theta)?,
        Expr::And(cs) => {
            let mut acc = one;
            for c in cs {
                acc = (acc + truth(c, theta)? - one).max(zero);
            }
            acc
        }
        Expr::Or(cs) => {
            let mut acc = zero;
            for c in cs {
                acc = (acc + truth(c, theta)?).min(one);
            }
            acc
        }
        Expr::Implies(..) => return Err(SemLossError::UndesugaredConnective("implication")),
        Expr::Iff(..) => return Err(SemLossError::UndesugaredConnective("equivalence")),
        Expr::Xor(..) => return Err(SemLossError::UndesugaredConnective("exclusive or")),
    })
}

/// `−ln` of the Łukasiewicz truth value. Unlike [`semantic_loss`] the result
/// depends on how the formula is written down.
pub fn fuzzy_loss<T: Scalar>(f: &Formula, theta: &[T]) -> Result<T, SemLossError> {
    let t = fuzzy_truth(f, theta)?;
    if t <= T::zero() {
        return Err(SemLossError::Infeasible);
    }
    Ok(-t.ln())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormalForm {
    Cnf,
    Dnf,
}

/// Canonical CNF (one clause per non-model) or DNF (one term per model),
/// by enumeration. The semantic loss is the same for both; the fuzzy loss
/// is not.
pub fn normal_form(f: &Formula, form: NormalForm) -> Result<Formula, SemLossError> {
    let b = f.num_vars();
    let models = f.enumerate_models()?;
    let lit = |i: usize, positive: bool| if positive { Expr::Var(i) } else { Expr::not(Expr::Var(i)) };
    let expr = match form {
        NormalForm::Dnf => Expr::any(
            models
                .iter()
                .map(|m| Expr::all(m.bits().iter().enumerate().map(|(i, &v)| lit(i, v)).collect()))
                .collect(),
        ),
        NormalForm::Cnf => {
            let is_model: std::collections::HashSet<&[bool]> = models.iter().map(|m| m.bits()).collect();
            let mut clauses = Vec::new();
            for m in 0u64..(1u64 << b) {
                let bits: Vec<bool> = (0..b).map(|i| (m >> (b - 1 - i)) & 1 == 1).collect();
                if !is_model.contains(bits.as_slice()) {
                    clauses.push(Expr::any(bits.iter().enumerate().map(|(i, &v)| lit(i, !v)).collect()));
                }
            }
            Expr::all(clauses)
        }
    };
    Ok(Formula::new(expr, f.names().to_vec())?)
}

/// Empirical distribution over code vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct CodePrior {
    /// Distinct codes in order of first observation, with probabilities.
    pub table: Vec<(Vec<bool>, f64)>,
}

impl CodePrior {
    pub fn from_codes(codes: &[Vec<bool>]) -> Result<CodePrior, SemLossError> {
        if codes.is_empty() {
            return Err(SemLossError::EmptyPrior);
        }
        let k = codes[0].len();
        let mut counts: Vec<(Vec<bool>, usize)> = Vec::new();
        let mut seen: HashMap<&[bool], usize> = HashMap::new();
        for c in codes {
            if c.len() != k {
                return Err(SemLossError::CodeLength {
                    expected: k,
                    got: c.len(),
                });
            }
            match seen.get(c.as_slice()) {
                Some(&i) => counts[i].1 += 1,
                None => {
                    seen.insert(c, counts.len());
                    counts.push((c.clone(), 1));
                }
            }
        }
        let n = codes.len() as f64;
        Ok(CodePrior {
            table: counts.into_iter().map(|(c, m)| (c, m as f64 / n)).collect(),
        })
    }

    /// Uniform over all `2^k` codes.
    pub fn uniform(k: usize) -> CodePrior {
        let p = 1.0 / (1u64 << k) as f64;
        CodePrior {
            table: (0..1usize << k)
                .map(|m| ((0..k).map(|i| m >> (k - 1 - i) & 1 == 1).collect(), p))
                .collect(),
        }
    }

    pub fn code_len(&self) -> usize {
        self.table.first().map_or(0, |(c, _)| c.len())
    }

    pub fn prob(&self, code: &[bool]) -> f64 {
        self.table
            .iter()
            .find(|(c, _)| c == code)
            .map_or(0.0, |&(_, p)| p)
    }

    pub fn sample(&self, rng: &mut impl rand::Rng) -> Vec<bool> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (c, p) in &self.table {
            acc += p;
            if u < acc {
                return c.clone();
            }
        }
        self.table.last().expect("prior is non-empty").0.clone()
    }
}

/// `k` named sub-constraints made switchable by code bits `c_i`.
#[derive(Clone, Debug)]
pub struct ConditionalSpec {
    pub properties: Vec<(String, Formula)>,
    pub codes: Vec<String>,
    pub prior: CodePrior,
}

impl ConditionalSpec {
    pub fn new(
        properties: Vec<(String, Formula)>,
        codes: Vec<String>,
        prior: CodePrior,
    ) -> Result<ConditionalSpec, SemLossError> {
        if codes.len() != properties.len() {
            return Err(SemLossError::CodeCount {
                codes: codes.len(),
                constraints: properties.len(),
            });
        }
        if !codes.is_empty() && prior.code_len() != codes.len() {
            return Err(SemLossError::CodeLength {
                expected: codes.len(),
                got: prior.code_len(),
            });
        }
        for (_, f) in &properties {
            if let Some(c) = codes.iter().find(|c| f.var_index(c).is_some()) {
                return Err(SemLossError::Collision(c.clone()));
            }
        }
        Ok(ConditionalSpec {
            properties,
            codes,
            prior,
        })
    }

    pub fn k(&self) -> usize {
        self.codes.len()
    }
}

/// `⋀_i (c_i ↔ ψ_i)`. The variable table lists the codes first, then the
/// union of the property tables in order of first appearance.
pub fn build_conditional(spec: &ConditionalSpec) -> Result<Formula, SemLossError> {
    let mut names = spec.codes.clone();
    let mut index: HashMap<String, usize> =
        names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
    if index.len() != names.len() {
        return Err(FormulaError::DuplicateName(spec.codes[0].clone()).into());
    }
    let mut parts = Vec::with_capacity(spec.k());
    for (i, (_, f)) in spec.properties.iter().enumerate() {
        let mut remap = Vec::with_capacity(f.num_vars());
        for n in f.names() {
            if spec.codes.contains(n) {
                return Err(SemLossError::Collision(n.clone()));
            }
            let j = *index.entry(n.clone()).or_insert_with(|| {
                names.push(n.clone());
                names.len() - 1
            });
            remap.push(j);
        }
        parts.push(Expr::iff(Expr::Var(i), f.expr().map_vars(&|v| remap[v])));
    }
    Ok(Formula::new(Expr::all(parts), names)?)
}

/// Semantic loss with the code variables clamped to `code`. `theta_rest`
/// holds the marginals of the remaining variables in table order, and the
/// gradient is reported for those only.
pub fn conditional_semantic_loss<T: Scalar>(
    c: &Circuit,
    code_vars: &[usize],
    code: &[bool],
    theta_rest: &[T],
) -> Result<LossValue<T>, SemLossError> {
    if code.len() != code_vars.len() {
        return Err(SemLossError::CodeLength {
            expected: code_vars.len(),
            got: code.len(),
        });
    }
    let b = c.num_vars();
    if theta_rest.len() + code.len() != b {
        return Err(CircuitError::LengthMismatch {
            expected: b - code.len(),
            got: theta_rest.len(),
        }
        .into());
    }
    let mut clamp = vec![None; b];
    for (&v, &bit) in code_vars.iter().zip(code) {
        clamp[v] = Some(if bit { T::one() } else { T::zero() });
    }
    let mut rest = theta_rest.iter();
    let theta: Vec<T> = clamp
        .iter()
        .map(|cl| cl.unwrap_or_else(|| *rest.next().expect("length checked")))
        .collect();
    let l = semantic_loss(c, &theta)?;
    Ok(LossValue {
        value: l.value,
        gradient: l
            .gradient
            .into_iter()
            .zip(&clamp)
            .filter(|(_, cl)| cl.is_none())
            .map(|(g, _)| g)
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse_dsl;
    use crate::rng::seeded;

    fn circ(src: &str) -> Circuit {
        Circuit::compile(&parse_dsl(src).unwrap()).unwrap()
    }

    #[test]
    fn xor_examples() {
        let c = circ("x ^ y");
        let l = semantic_loss(&c, &[0.5f64, 0.5]).unwrap();
        assert!((l.value - 2f64.ln()).abs() < 1e-15);
        let l = semantic_loss(&c, &[0.3f64, 0.8]).unwrap();
        assert!((l.value - 0.478036).abs() < 1e-6);
        assert!((l.gradient[0] - 0.967742).abs() < 1e-6);
        assert!((l.value + 0.62f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn tautology_and_contradiction() {
        let t = Circuit::compile(&Formula::constant(true)).unwrap();
        let l = semantic_loss::<f64>(&t, &[]).unwrap();
        assert_eq!(l.value, 0.0);
        let c = circ("x & !x | y & !y");
        assert_eq!(semantic_loss(&c, &[0.4, 0.2]), Err(SemLossError::Infeasible));
        let cl = semantic_loss_clamped(&c, &[0.4, 0.2]).unwrap();
        assert!((cl.value - 1e30f64.ln()).abs() < 1e-9);
        let x = circ("x & y");
        assert_eq!(semantic_loss(&x, &[1.0, 0.0]), Err(SemLossError::Infeasible));
    }

    #[test]
    fn underflow_uses_log_space() {
        let src: Vec<String> = (0..400).map(|i| format!("v{i}")).collect();
        let c = circ(&src.join(" & "));
        let theta = vec![0.1f64; 400];
        let l = semantic_loss(&c, &theta).unwrap();
        assert!((l.value - 400.0 * 10f64.ln()).abs() < 1e-9);
        assert!(l.gradient.iter().all(|g| (g + 10.0).abs() < 1e-9));
    }

    #[test]
    fn fuzzy_examples() {
        let cnf = parse_dsl("(x | y) & (!x | !y)").unwrap();
        let dnf = parse_dsl("(x & !y) | (!x & y)").unwrap();
        assert_eq!(fuzzy_truth(&cnf, &[0.5, 0.5]).unwrap(), 1.0);
        assert_eq!(fuzzy_loss(&cnf, &[0.5, 0.5]).unwrap(), 0.0);
        assert_eq!(fuzzy_truth(&dnf, &[0.5, 0.5]).unwrap(), 0.0);
        assert_eq!(fuzzy_loss(&dnf, &[0.5, 0.5]), Err(SemLossError::Infeasible));
        assert_eq!(fuzzy_truth(&cnf, &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(fuzzy_truth(&dnf, &[1.0, 0.0]).unwrap(), 1.0);
        let x = parse_dsl("x ^ y").unwrap();
        assert!(matches!(
            fuzzy_truth(&x, &[0.5, 0.5]),
            Err(SemLossError::UndesugaredConnective(_))
        ));
        assert_eq!(fuzzy_truth(&x.desugared(), &[1.0, 0.0]).unwrap(), 1.0);
    }

    fn spec(props: &[&str]) -> ConditionalSpec {
        let k = props.len();
        ConditionalSpec::new(
            props
                .iter()
                .enumerate()
                .map(|(i, p)| (format!("p{i}"), parse_dsl(p).unwrap()))
                .collect(),
            (1..=k).map(|i| format!("c_{i}")).collect(),
            CodePrior::uniform(k),
        )
        .unwrap()
    }

    #[test]
    fn conditional_builder() {
        let f = build_conditional(&spec(&["v1"])).unwrap();
        assert_eq!(f.names(), ["c_1", "v1"]);
        assert_eq!(Circuit::compile(&f).unwrap().model_count(), 2u32.into());
        let f = build_conditional(&spec(&["v1", "v2"])).unwrap();
        assert_eq!(f.names(), ["c_1", "c_2", "v1", "v2"]);
        assert_eq!(Circuit::compile(&f).unwrap().model_count(), 4u32.into());
        assert_eq!(build_conditional(&spec(&[])).unwrap().expr(), &Expr::Const(true));
        let bad = ConditionalSpec::new(
            vec![("p".into(), parse_dsl("c_1 | v").unwrap())],
            vec!["c_1".into()],
            CodePrior::uniform(1),
        );
        assert_eq!(bad.unwrap_err(), SemLossError::Collision("c_1".into()));
    }

    #[test]
    fn conditional_loss() {
        let c = Circuit::compile(&build_conditional(&spec(&["v1"])).unwrap()).unwrap();
        let on = conditional_semantic_loss(&c, &[0], &[true], &[0.9]).unwrap();
        assert!((on.value + 0.9f64.ln()).abs() < 1e-15);
        assert_eq!(on.gradient.len(), 1);
        let off = conditional_semantic_loss(&c, &[0], &[false], &[0.9]).unwrap();
        assert!((off.value + 0.1f64.ln()).abs() < 1e-14);
        let sure = conditional_semantic_loss(&c, &[0], &[true], &[1.0]).unwrap();
        assert_eq!(sure.value, 0.0);
        assert!(conditional_semantic_loss(&c, &[0], &[true, false], &[0.5]).is_err());
    }

    #[test]
    fn prior_frequencies() {
        let codes = vec![vec![true, false], vec![true, false], vec![false, false], vec![true, true]];
        let p = CodePrior::from_codes(&codes).unwrap();
        assert_eq!(p.prob(&[true, false]), 0.5);
        assert_eq!(p.prob(&[false, true]), 0.0);
        assert!((p.table.iter().map(|t| t.1).sum::<f64>() - 1.0).abs() < 1e-15);
        let mut rng = seeded(1);
        let hits = (0..4000).filter(|_| p.sample(&mut rng) == [true, false]).count();
        assert!((hits as f64 / 4000.0 - 0.5).abs() < 0.05);
        assert_eq!(CodePrior::from_codes(&[]), Err(SemLossError::EmptyPrior));
    }
}
