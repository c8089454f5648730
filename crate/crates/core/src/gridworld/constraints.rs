//! Propositional constraints over the one-hot grid encoding.

use thiserror::Error;

use super::level::{Tile, NUM_TILES};
use crate::formula::{Expr, Formula};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConstraintError {
    #[error("grid {height}x{width} is too small (need at least 2x2)")]
    GridTooSmall { height: usize, width: usize },
}

/// Variable names of the grid encoding, row-major, tile-contiguous per cell.
pub fn grid_var_names(height: usize, width: usize) -> Vec<String> {
    let mut names = Vec::with_capacity(height * width * NUM_TILES);
    for r in 0..height {
        for c in 0..width {
            for t in Tile::ALL {
                names.push(format!("r{r}c{c}_{}", t.tag()));
            }
        }
    }
    names
}

pub(crate) struct GridVars {
    pub width: usize,
}

impl GridVars {
    pub fn lit(&self, r: usize, c: usize, t: Tile) -> Expr {
        Expr::Var((r * self.width + c) * NUM_TILES + t.index())
    }
}

pub(crate) fn exactly_one(lits: Vec<Expr>) -> Vec<Expr> {
    let mut out = vec![Expr::Or(lits.clone())];
    for i in 0..lits.len() {
        for j in i + 1..lits.len() {
            out.push(Expr::Or(vec![
                Expr::not(lits[i].clone()),
                Expr::not(lits[j].clone()),
            ]));
        }
    }
    out
}

/// Pipe well-formedness over every 2×2 window plus one tile per cell.
///
/// Clauses are emitted cell by cell in row-major order so neighbouring
/// clauses share variables, which keeps pairwise conjunction local.
pub fn build_pipe_constraint(height: usize, width: usize) -> Result<Formula, ConstraintError> {
    if height < 2 || width < 2 {
        return Err(ConstraintError::GridTooSmall { height, width });
    }
    let g = GridVars { width };
    let mut clauses = Vec::new();
    use Tile::*;
    for r in 0..height {
        for c in 0..width {
            let at = |t| g.lit(r, c, t);
            clauses.extend(exactly_one(Tile::ALL.iter().map(|&t| at(t)).collect()));

            // horizontal pairing
            if c + 1 < width {
                clauses.push(Expr::implies(at(PipeTopLeft), g.lit(r, c + 1, PipeTopRight)));
                clauses.push(Expr::implies(at(PipeBodyLeft), g.lit(r, c + 1, PipeBodyRight)));
            } else {
                clauses.push(Expr::not(at(PipeTopLeft)));
                clauses.push(Expr::not(at(PipeBodyLeft)));
            }
            if c > 0 {
                clauses.push(Expr::implies(at(PipeTopRight), g.lit(r, c - 1, PipeTopLeft)));
                clauses.push(Expr::implies(at(PipeBodyRight), g.lit(r, c - 1, PipeBodyLeft)));
            } else {
                clauses.push(Expr::not(at(PipeTopRight)));
                clauses.push(Expr::not(at(PipeBodyRight)));
            }

            // vertical structure
            if r + 1 < height {
                clauses.push(Expr::implies(at(PipeTopLeft), g.lit(r + 1, c, PipeBodyLeft)));
                clauses.push(Expr::implies(at(PipeTopRight), g.lit(r + 1, c, PipeBodyRight)));
                clauses.push(Expr::implies(
                    at(PipeBodyLeft),
                    Expr::Or(vec![g.lit(r + 1, c, PipeBodyLeft), g.lit(r + 1, c, Solid)]),
                ));
                clauses.push(Expr::implies(
                    at(PipeBodyRight),
                    Expr::Or(vec![g.lit(r + 1, c, PipeBodyRight), g.lit(r + 1, c, Solid)]),
                ));
            } else {
                clauses.push(Expr::not(at(PipeTopLeft)));
                clauses.push(Expr::not(at(PipeTopRight)));
            }
            if r > 0 {
                clauses.push(Expr::implies(
                    at(PipeBodyLeft),
                    Expr::Or(vec![g.lit(r - 1, c, PipeTopLeft), g.lit(r - 1, c, PipeBodyLeft)]),
                ));
                clauses.push(Expr::implies(
                    at(PipeBodyRight),
                    Expr::Or(vec![g.lit(r - 1, c, PipeTopRight), g.lit(r - 1, c, PipeBodyRight)]),
                ));
            }
        }
    }
    Ok(Formula::new(Expr::And(clauses), grid_var_names(height, width))
        .expect("grid variables are in range"))
}

/// Exactly one tile per cell, nothing else.
pub fn build_one_hot_constraint(height: usize, width: usize) -> Formula {
    let g = GridVars { width };
    let mut clauses = Vec::new();
    for r in 0..height {
        for c in 0..width {
            clauses.extend(exactly_one(Tile::ALL.iter().map(|&t| g.lit(r, c, t)).collect()));
        }
    }
    Formula::new(Expr::all(clauses), grid_var_names(height, width))
        .expect("grid variables are in range")
}

/// Names of the per-row reachability variables of the right-most column.
pub fn reach_var_names(height: usize) -> Vec<String> {
    (0..height).map(|r| format!("reach_{r}")).collect()
}

/// "Some right-most tile is reachable": `reach_0 ∨ … ∨ reach_{H−1}`.
pub fn build_reachability_constraint(height: usize) -> Formula {
    let expr = Expr::any((0..height).map(Expr::Var).collect());
    Formula::new(expr, reach_var_names(height)).expect("reach variables are in range")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::Circuit;
    use crate::gridworld::level::GridLevel;

    fn valid(f: &Formula, lvl: &str) -> bool {
        let l = GridLevel::parse(lvl).unwrap();
        f.evaluate_bits(&l.encode()).unwrap()
    }

    #[test]
    fn too_small() {
        assert_eq!(
            build_pipe_constraint(1, 5),
            Err(ConstraintError::GridTooSmall { height: 1, width: 5 })
        );
    }

    #[test]
    fn pipe_examples() {
        let f = build_pipe_constraint(4, 4).unwrap();
        assert!(valid(&f, "4 4\n....\n....\n....\n....\n"));
        assert!(valid(&f, "4 4\n....\n.LR.\n.[].\n####\n"));
        assert!(valid(&f, "4 4\n.LR.\n.[].\n.[].\n.[].\n"));
        // top-left whose right neighbour is empty
        assert!(!valid(&f, "4 4\n....\n.L..\n.[].\n####\n"));
        // body floating on air
        assert!(!valid(&f, "4 4\n....\n.LR.\n.[].\n....\n"));
        // top in the last row
        assert!(!valid(&f, "4 4\n....\n....\n....\nLR..\n"));
        // body without a top above
        assert!(!valid(&f, "4 4\n....\n....\n.[].\n####\n"));
        // left part in the last column
        assert!(!valid(&f, "4 4\n....\n...L\n...[\n####\n"));
    }

    #[test]
    fn reachability_constraint_counts() {
        let f = build_reachability_constraint(3);
        let c = Circuit::compile(&f).unwrap();
        assert_eq!(c.model_count(), 7u32.into());
        assert!(f.evaluate_bits(&[false, true, false]).unwrap());
        assert!(!f.evaluate_bits(&[false, false, false]).unwrap());
        assert_eq!(c.node_count(), 3);
    }
}
