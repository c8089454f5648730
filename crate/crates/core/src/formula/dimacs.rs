use super::{Expr, Formula, FormulaError};

fn err(msg: impl Into<String>) -> FormulaError {
    FormulaError::Dimacs(msg.into())
}

/// Parses DIMACS CNF. Variable `i` is named `v<i>`; the table lists all
/// declared variables `v1..vV` in order.
pub fn parse_dimacs(text: &str) -> Result<Formula, FormulaError> {
    let mut header: Option<(usize, usize)> = None;
    let mut clauses: Vec<Vec<i64>> = Vec::new();
    let mut current: Vec<i64> = Vec::new();

    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('c') || line.starts_with('%') {
            continue;
        }
        if line.starts_with('p') {
            if header.is_some() {
                return Err(err(format!("line {}: duplicate header", ln + 1)));
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 4 || parts[0] != "p" || parts[1] != "cnf" {
                return Err(err(format!("line {}: malformed header `{line}`", ln + 1)));
            }
            let v = parts[2]
                .parse()
                .map_err(|_| err(format!("line {}: bad variable count", ln + 1)))?;
            let c = parts[3]
                .parse()
                .map_err(|_| err(format!("line {}: bad clause count", ln + 1)))?;
            header = Some((v, c));
            continue;
        }
        let Some((vars, _)) = header else {
            return Err(err(format!("line {}: clause before `p cnf` header", ln + 1)));
        };
        for word in line.split_whitespace() {
            let lit: i64 = word
                .parse()
                .map_err(|_| err(format!("line {}: bad literal `{word}`", ln + 1)))?;
            if lit == 0 {
                if current.is_empty() {
                    return Err(err(format!(
                        "line {}: literal index 0 inside clause (empty clause)",
                        ln + 1
                    )));
                }
                clauses.push(std::mem::take(&mut current));
            } else {
                if lit.unsigned_abs() as usize > vars {
                    return Err(err(format!(
                        "line {}: literal {lit} exceeds declared variable count {vars}",
                        ln + 1
                    )));
                }
                current.push(lit);
            }
        }
    }

    let (vars, count) = header.ok_or_else(|| err("missing `p cnf` header"))?;
    if !current.is_empty() {
        return Err(err("last clause is not terminated by 0"));
    }
    if clauses.len() != count {
        return Err(err(format!(
            "header declares {count} clauses, found {}",
            clauses.len()
        )));
    }

    let expr = Expr::all(
        clauses
            .into_iter()
            .map(|c| {
                Expr::any(
                    c.into_iter()
                        .map(|l| {
                            let v = Expr::Var(l.unsigned_abs() as usize - 1);
                            if l < 0 {
                                Expr::not(v)
                            } else {
                                v
                            }
                        })
                        .collect(),
                )
            })
            .collect(),
    );
    Formula::new(expr, (1..=vars).map(|i| format!("v{i}")).collect())
}
