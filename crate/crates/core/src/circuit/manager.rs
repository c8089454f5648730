//! Mutable diagram builder: unique table, apply cache and node budget.
//!
//! Nodes are addressed by `u32`; `0` is the false terminal and `1` the true
//! terminal. Decision nodes carry the order *position* of their variable, so
//! comparisons during apply never consult the order table.

use rustc_hash::FxHashMap;

use super::CircuitError;
use crate::formula::Expr;

pub(crate) const BOT: u32 = 0;
pub(crate) const TOP: u32 = 1;
const TERMINAL_LEVEL: u32 = u32::MAX;

/// Apply cache entries above this count trigger a flush.
const CACHE_LIMIT: usize = 1 << 22;

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum BinOp {
    And,
    Or,
    Xor,
}

#[derive(Clone, Copy)]
pub(crate) struct RawNode {
    pub level: u32,
    pub lo: u32,
    pub hi: u32,
}

pub(crate) struct Manager {
    nodes: Vec<RawNode>,
    unique: FxHashMap<(u32, u32, u32), u32>,
    cache: FxHashMap<(BinOp, u32, u32), u32>,
    not_cache: FxHashMap<u32, u32>,
    budget: usize,
}

impl Manager {
    pub fn new(budget: usize) -> Manager {
        let term = RawNode {
            level: TERMINAL_LEVEL,
            lo: 0,
            hi: 0,
        };
        Manager {
            nodes: vec![term, term],
            unique: FxHashMap::default(),
            cache: FxHashMap::default(),
            not_cache: FxHashMap::default(),
            budget,
        }
    }

    pub fn node(&self, id: u32) -> RawNode {
        self.nodes[id as usize]
    }

    fn level(&self, id: u32) -> u32 {
        self.nodes[id as usize].level
    }

    /// Number of decision nodes ever created (including unreachable ones).
    pub fn allocated(&self) -> usize {
        self.nodes.len() - 2
    }

    pub fn mk(&mut self, level: u32, lo: u32, hi: u32) -> Result<u32, CircuitError> {
        if lo == hi {
            return Ok(lo);
        }
        if let Some(&id) = self.unique.get(&(level, lo, hi)) {
            return Ok(id);
        }
        if self.allocated() >= self.budget {
            return Err(CircuitError::NodeBudget { cap: self.budget });
        }
        let id = self.nodes.len() as u32;
        self.nodes.push(RawNode { level, lo, hi });
        self.unique.insert((level, lo, hi), id);
        Ok(id)
    }

    pub fn literal(&mut self, level: u32) -> Result<u32, CircuitError> {
        self.mk(level, BOT, TOP)
    }

    pub fn not(&mut self, a: u32) -> Result<u32, CircuitError> {
        match a {
            BOT => return Ok(TOP),
            TOP => return Ok(BOT),
            _ => {}
        }
        if let Some(&r) = self.not_cache.get(&a) {
            return Ok(r);
        }
        let n = self.node(a);
        let lo = self.not(n.lo)?;
        let hi = self.not(n.hi)?;
        let r = self.mk(n.level, lo, hi)?;
        self.not_cache.insert(a, r);
        Ok(r)
    }

    pub fn or(&mut self, a: u32, b: u32) -> Result<u32, CircuitError> {
        self.apply(BinOp::Or, a, b)
    }

    pub fn xor(&mut self, a: u32, b: u32) -> Result<u32, CircuitError> {
        self.apply(BinOp::Xor, a, b)
    }

    fn apply(&mut self, op: BinOp, a: u32, b: u32) -> Result<u32, CircuitError> {
        match op {
            BinOp::And => {
                if a == BOT || b == BOT {
                    return Ok(BOT);
                }
                if a == TOP || a == b {
                    return Ok(b);
                }
                if b == TOP {
                    return Ok(a);
                }
            }
            BinOp::Or => {
                if a == TOP || b == TOP {
                    return Ok(TOP);
                }
                if a == BOT || a == b {
                    return Ok(b);
                }
                if b == BOT {
                    return Ok(a);
                }
            }
            BinOp::Xor => {
                if a == b {
                    return Ok(BOT);
                }
                if a == BOT {
                    return Ok(b);
                }
                if b == BOT {
                    return Ok(a);
                }
                if a == TOP {
                    return self.not(b);
                }
                if b == TOP {
                    return self.not(a);
                }
            }
        }
        let key = (op, a.min(b), a.max(b));
        if let Some(&r) = self.cache.get(&key) {
            return Ok(r);
        }
        let (la, lb) = (self.level(a), self.level(b));
        let top = la.min(lb);
        let (a0, a1) = if la == top {
            let n = self.node(a);
            (n.lo, n.hi)
        } else {
            (a, a)
        };
        let (b0, b1) = if lb == top {
            let n = self.node(b);
            (n.lo, n.hi)
        } else {
            (b, b)
        };
        let lo = self.apply(op, a0, b0)?;
        let hi = self.apply(op, a1, b1)?;
        let r = self.mk(top, lo, hi)?;
        if self.cache.len() >= CACHE_LIMIT {
            self.cache.clear();
        }
        self.cache.insert(key, r);
        Ok(r)
    }

    /// Builds the diagram of `e`; `position[v]` is the order position of
    /// variable `v`.
    pub fn build(&mut self, e: &Expr, position: &[usize]) -> Result<u32, CircuitError> {
        match e {
            Expr::Var(v) => self.literal(position[*v] as u32),
            Expr::Const(true) => Ok(TOP),
            Expr::Const(false) => Ok(BOT),
            Expr::Not(c) => {
                let c = self.build(c, position)?;
                self.not(c)
            }
            Expr::And(cs) => self.reduce(cs, position, BinOp::And),
            Expr::Or(cs) => self.reduce(cs, position, BinOp::Or),
            Expr::Implies(a, b) => {
                let a = self.build(a, position)?;
                let na = self.not(a)?;
                let b = self.build(b, position)?;
                self.or(na, b)
            }
            Expr::Iff(a, b) => {
                let a = self.build(a, position)?;
                let b = self.build(b, position)?;
                let x = self.xor(a, b)?;
                self.not(x)
            }
            Expr::Xor(a, b) => {
                let a = self.build(a, position)?;
                let b = self.build(b, position)?;
                self.xor(a, b)
            }
        }
    }

    /// Pairwise (balanced) reduction of an n-ary connective. Neighbouring
    /// children are combined first, which keeps intermediate diagrams small
    /// when children are listed in an order-local way.
    fn reduce(&mut self, cs: &[Expr], position: &[usize], op: BinOp) -> Result<u32, CircuitError> {
        let absorbing = if op == BinOp::And { BOT } else { TOP };
        let mut layer = Vec::with_capacity(cs.len());
        for c in cs {
            let r = self.build(c, position)?;
            if r == absorbing {
                return Ok(absorbing);
            }
            layer.push(r);
        }
        while layer.len() > 1 {
            let mut next = Vec::with_capacity(layer.len().div_ceil(2));
            for pair in layer.chunks(2) {
                let r = if pair.len() == 2 {
                    self.apply(op, pair[0], pair[1])?
                } else {
                    pair[0]
                };
                if r == absorbing {
                    return Ok(absorbing);
                }
                next.push(r);
            }
            layer = next;
        }
        Ok(layer[0])
    }
}
