//! Knowledge compilation into reduced ordered decision diagrams, and the
//! tractable queries on them: weighted model counting, exact gradients,
//! conditioning, model counting and validity checks.
//!
//! A compiled [`Circuit`] is immutable. Its decision nodes are stored in
//! post-order, so every child id is smaller than its parent's id and a plain
//! forward loop over the node vector is a bottom-up pass.

mod io;
mod manager;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::{Num, One, Zero};
use thiserror::Error;

use crate::formula::{Assignment, Formula};
use crate::scalar::Scalar;
use manager::{Manager, BOT, TOP};

pub use io::{dump, load};

/// Default cap on decision nodes allocated during compilation.
pub const DEFAULT_NODE_BUDGET: usize = 50_000_000;

/// Linear-space results below this trigger the log-space evaluator.
pub const UNDERFLOW_THRESHOLD: f64 = 1e-300;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CircuitError {
    #[error("compilation exceeded the node budget of {cap} nodes")]
    NodeBudget { cap: usize },
    #[error("variable order must be a permutation of 0..{vars}")]
    BadOrder { vars: usize },
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("variable index {index} out of range ({vars} variables)")]
    VariableOutOfRange { index: usize, vars: usize },
    #[error("circuit file: {0}")]
    Format(String),
}

/// Reference to a node: `0` is ⊥, `1` is ⊤, `n ≥ 2` is decision node `n − 2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

impl NodeId {
    pub const FALSE: NodeId = NodeId(BOT);
    pub const TRUE: NodeId = NodeId(TOP);

    pub fn is_terminal(self) -> bool {
        self.0 < 2
    }

    fn idx(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DecisionNode {
    pub var: u32,
    pub lo: NodeId,
    pub hi: NodeId,
}

#[derive(Clone, Debug)]
pub struct CompileOptions {
    /// Position → variable index. `None` uses the formula's table order.
    pub order: Option<Vec<usize>>,
    pub node_budget: usize,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions {
            order: None,
            node_budget: DEFAULT_NODE_BUDGET,
        }
    }
}

/// Evaluation instrumentation shared by clones of a circuit.
#[derive(Debug, Default)]
struct Counters {
    evaluations: AtomicU64,
    node_visits: AtomicU64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EvalStats {
    /// Calls to any evaluation entry point (wmc, gradient, validity check).
    pub evaluations: u64,
    /// Decision nodes touched, summed over all passes.
    pub node_visits: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CircuitStats {
    pub nodes: usize,
    pub vars: usize,
    /// Decision nodes on the longest root-to-terminal path.
    pub depth: usize,
    pub models: BigUint,
}

/// Value and gradient of a weighted model count.
#[derive(Clone, Debug, PartialEq)]
pub struct WmcGradient<T> {
    pub value: T,
    pub gradient: Vec<T>,
}

/// Floating-point WMC with an underflow flag.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckedWmc<T> {
    pub value: T,
    pub gradient: Vec<T>,
    /// Some intermediate or final quantity fell below [`UNDERFLOW_THRESHOLD`].
    pub underflow: bool,
}

#[derive(Clone, Debug)]
pub struct Circuit {
    names: Vec<String>,
    order: Vec<usize>,
    position: Vec<usize>,
    nodes: Vec<DecisionNode>,
    root: NodeId,
    counters: Arc<Counters>,
}

impl PartialEq for Circuit {
    fn eq(&self, other: &Circuit) -> bool {
        self.names == other.names
            && self.order == other.order
            && self.nodes == other.nodes
            && self.root == other.root
    }
}

impl Eq for Circuit {}

fn check_order(order: &[usize], vars: usize) -> Result<Vec<usize>, CircuitError> {
    if order.len() != vars {
        return Err(CircuitError::BadOrder { vars });
    }
    let mut position = vec![usize::MAX; vars];
    for (p, &v) in order.iter().enumerate() {
        if v >= vars || position[v] != usize::MAX {
            return Err(CircuitError::BadOrder { vars });
        }
        position[v] = p;
    }
    Ok(position)
}

/// Compiles `f` under `opts`.
pub fn compile(f: &Formula, opts: &CompileOptions) -> Result<Circuit, CircuitError> {
    let vars = f.num_vars();
    let order = opts.order.clone().unwrap_or_else(|| (0..vars).collect());
    let position = check_order(&order, vars)?;
    let mut m = Manager::new(opts.node_budget);
    let root = m.build(f.expr(), &position)?;
    Ok(Circuit::extract(&m, root, f.names().to_vec(), order, position))
}

impl Circuit {
    /// Compiles with the formula's table order and the default budget.
    pub fn compile(f: &Formula) -> Result<Circuit, CircuitError> {
        compile(f, &CompileOptions::default())
    }

    /// Copies the sub-diagram reachable from `root` out of the manager,
    /// numbering nodes in post-order (lo before hi).
    fn extract(
        m: &Manager,
        root: u32,
        names: Vec<String>,
        order: Vec<usize>,
        position: Vec<usize>,
    ) -> Circuit {
        let mut map: rustc_hash::FxHashMap<u32, u32> = rustc_hash::FxHashMap::default();
        map.insert(BOT, BOT);
        map.insert(TOP, TOP);
        let mut nodes = Vec::new();
        let mut stack = vec![(root, false)];
        while let Some((id, expanded)) = stack.pop() {
            if map.contains_key(&id) {
                continue;
            }
            let n = m.node(id);
            if expanded {
                nodes.push(DecisionNode {
                    var: order[n.level as usize] as u32,
                    lo: NodeId(map[&n.lo]),
                    hi: NodeId(map[&n.hi]),
                });
                map.insert(id, nodes.len() as u32 + 1);
            } else {
                stack.push((id, true));
                stack.push((n.hi, false));
                stack.push((n.lo, false));
            }
        }
        Circuit {
            names,
            order,
            position,
            nodes,
            root: NodeId(map[&root]),
            counters: Arc::default(),
        }
    }

    pub(crate) fn from_parts(
        names: Vec<String>,
        order: Vec<usize>,
        nodes: Vec<DecisionNode>,
        root: NodeId,
    ) -> Result<Circuit, CircuitError> {
        let position = check_order(&order, names.len())?;
        let bad = |msg: String| CircuitError::Format(msg);
        if root.idx() >= nodes.len() + 2 {
            return Err(bad(format!("root {} out of range", root.0)));
        }
        for (i, n) in nodes.iter().enumerate() {
            let id = i as u32 + 2;
            if n.var as usize >= names.len() {
                return Err(bad(format!("node {id}: variable {} out of range", n.var)));
            }
            if n.lo.0 >= id || n.hi.0 >= id {
                return Err(bad(format!("node {id}: children must precede parents")));
            }
            if n.lo == n.hi {
                return Err(bad(format!("node {id}: redundant (lo == hi)")));
            }
            let p = position[n.var as usize];
            for c in [n.lo, n.hi] {
                if !c.is_terminal() {
                    let cv = nodes[c.idx() - 2].var as usize;
                    if position[cv] <= p {
                        return Err(bad(format!("node {id}: child violates variable order")));
                    }
                }
            }
        }
        // Rebuild through a manager: this enforces reduction and drops
        // unreachable nodes, and the canonical numbering falls out of extract.
        let mut m = Manager::new(usize::MAX);
        let mut map = vec![BOT, TOP];
        for n in &nodes {
            let id = m.mk(
                position[n.var as usize] as u32,
                map[n.lo.idx()],
                map[n.hi.idx()],
            )?;
            map.push(id);
        }
        let root = map[root.idx()];
        Ok(Circuit::extract(&m, root, names, order, position))
    }

    pub fn num_vars(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Position → variable index.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn nodes(&self) -> &[DecisionNode] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn is_false(&self) -> bool {
        self.root == NodeId::FALSE
    }

    pub fn is_true(&self) -> bool {
        self.root == NodeId::TRUE
    }

    pub fn eval_stats(&self) -> EvalStats {
        EvalStats {
            evaluations: self.counters.evaluations.load(Ordering::Relaxed),
            node_visits: self.counters.node_visits.load(Ordering::Relaxed),
        }
    }

    fn record(&self, passes: u64) {
        self.counters.evaluations.fetch_add(1, Ordering::Relaxed);
        self.counters
            .node_visits
            .fetch_add(passes * self.nodes.len() as u64, Ordering::Relaxed);
    }

    fn check_len(&self, got: usize) -> Result<(), CircuitError> {
        if got != self.names.len() {
            return Err(CircuitError::LengthMismatch {
                expected: self.names.len(),
                got,
            });
        }
        Ok(())
    }

    /// Bottom-up values; index `i` holds the value of node id `i`.
    fn upward<T: Num + Clone>(&self, theta: &[T]) -> Vec<T> {
        let mut val: Vec<T> = Vec::with_capacity(self.nodes.len() + 2);
        val.push(T::zero());
        val.push(T::one());
        for n in &self.nodes {
            let t = theta[n.var as usize].clone();
            let v = t.clone() * val[n.hi.idx()].clone() + (T::one() - t) * val[n.lo.idx()].clone();
            val.push(v);
        }
        val
    }

    /// Weighted model count: the probability that independent Bernoulli
    /// variables with success probabilities `theta` satisfy the circuit.
    /// Generic over any commutative ring, including exact rationals.
    pub fn wmc<T: Num + Clone>(&self, theta: &[T]) -> Result<T, CircuitError> {
        self.check_len(theta.len())?;
        self.record(1);
        let val = self.upward(theta);
        Ok(val[self.root.idx()].clone())
    }

    /// Exact `∂WMC/∂θ_i` for every variable.
    pub fn wmc_gradient<T: Num + Clone>(&self, theta: &[T]) -> Result<Vec<T>, CircuitError> {
        Ok(self.wmc_and_gradient(theta)?.gradient)
    }

    /// One upward pass for values, one reverse pass for path weights.
    pub fn wmc_and_gradient<T: Num + Clone>(
        &self,
        theta: &[T],
    ) -> Result<WmcGradient<T>, CircuitError> {
        self.check_len(theta.len())?;
        self.record(2);
        let val = self.upward(theta);
        let mut reach = vec![T::zero(); val.len()];
        reach[self.root.idx()] = T::one();
        let mut gradient = vec![T::zero(); self.names.len()];
        for (i, n) in self.nodes.iter().enumerate().rev() {
            let r = reach[i + 2].clone();
            if r.is_zero() {
                continue;
            }
            let v = n.var as usize;
            let t = theta[v].clone();
            gradient[v] = gradient[v].clone()
                + r.clone() * (val[n.hi.idx()].clone() - val[n.lo.idx()].clone());
            reach[n.hi.idx()] = reach[n.hi.idx()].clone() + r.clone() * t.clone();
            reach[n.lo.idx()] = reach[n.lo.idx()].clone() + r * (T::one() - t);
        }
        Ok(WmcGradient {
            value: val[self.root.idx()].clone(),
            gradient,
        })
    }

    /// Floating-point value and gradient, flagging underflow of any node
    /// value, path weight or the result below [`UNDERFLOW_THRESHOLD`].
    pub fn wmc_checked<T: Scalar>(&self, theta: &[T]) -> Result<CheckedWmc<T>, CircuitError> {
        let thr = T::lit(UNDERFLOW_THRESHOLD);
        let tiny = |x: T| x > T::zero() && x < thr;
        self.check_len(theta.len())?;
        self.record(2);
        let val = self.upward(theta);
        let mut underflow = val.iter().any(|&v| tiny(v));
        let mut reach = vec![T::zero(); val.len()];
        reach[self.root.idx()] = T::one();
        let mut gradient = vec![T::zero(); self.names.len()];
        for (i, n) in self.nodes.iter().enumerate().rev() {
            let r = reach[i + 2];
            if r.is_zero() {
                continue;
            }
            underflow |= tiny(r);
            let v = n.var as usize;
            let t = theta[v];
            gradient[v] += r * (val[n.hi.idx()] - val[n.lo.idx()]);
            reach[n.hi.idx()] += r * t;
            reach[n.lo.idx()] += r * (T::one() - t);
        }
        let value = val[self.root.idx()];
        underflow |= value < thr;
        Ok(CheckedWmc {
            value,
            gradient,
            underflow,
        })
    }

    /// `ln WMC` computed entirely in log space.
    pub fn log_wmc<T: Scalar>(&self, theta: &[T]) -> Result<T, CircuitError> {
        self.check_len(theta.len())?;
        self.record(1);
        let lv = self.log_upward(theta);
        Ok(lv[self.root.idx()])
    }

    fn log_upward<T: Scalar>(&self, theta: &[T]) -> Vec<T> {
        let mut lv = Vec::with_capacity(self.nodes.len() + 2);
        lv.push(T::neg_infinity());
        lv.push(T::zero());
        for n in &self.nodes {
            let t = theta[n.var as usize];
            let a = t.ln() + lv[n.hi.idx()];
            let b = (T::one() - t).ln() + lv[n.lo.idx()];
            lv.push(log_add_exp(a, b));
        }
        lv
    }

    /// `ln WMC` and `∂ ln WMC / ∂θ_i`, stable when the linear value underflows.
    pub fn log_wmc_gradient<T: Scalar>(
        &self,
        theta: &[T],
    ) -> Result<WmcGradient<T>, CircuitError> {
        self.check_len(theta.len())?;
        self.record(2);
        let lv = self.log_upward(theta);
        let total = lv[self.root.idx()];
        let mut gradient = vec![T::zero(); self.names.len()];
        if total == T::neg_infinity() {
            return Ok(WmcGradient {
                value: total,
                gradient,
            });
        }
        let mut lreach = vec![T::neg_infinity(); lv.len()];
        lreach[self.root.idx()] = T::zero();
        for (i, n) in self.nodes.iter().enumerate().rev() {
            let r = lreach[i + 2];
            if r == T::neg_infinity() {
                continue;
            }
            let v = n.var as usize;
            let t = theta[v];
            let hi = (r + lv[n.hi.idx()] - total).exp();
            let lo = (r + lv[n.lo.idx()] - total).exp();
            gradient[v] += hi - lo;
            lreach[n.hi.idx()] = log_add_exp(lreach[n.hi.idx()], r + t.ln());
            lreach[n.lo.idx()] = log_add_exp(lreach[n.lo.idx()], r + (T::one() - t).ln());
        }
        Ok(WmcGradient {
            value: total,
            gradient,
        })
    }

    /// Number of satisfying assignments over all variables.
    pub fn model_count(&self) -> BigUint {
        let b = self.names.len();
        let pos = |id: NodeId| -> usize {
            if id.is_terminal() {
                b
            } else {
                self.position[self.nodes[id.idx() - 2].var as usize]
            }
        };
        let mut cnt: Vec<BigUint> = vec![BigUint::zero(), BigUint::one()];
        for n in &self.nodes {
            let p = self.position[n.var as usize];
            let lo = &cnt[n.lo.idx()] << (pos(n.lo) - p - 1);
            let hi = &cnt[n.hi.idx()] << (pos(n.hi) - p - 1);
            cnt.push(lo + hi);
        }
        &cnt[self.root.idx()] << pos(self.root)
    }

    /// The circuit with variable `var` fixed to `value`; the variable stays
    /// in the table but no longer appears in any node.
    pub fn condition(&self, var: usize, value: bool) -> Result<Circuit, CircuitError> {
        if var >= self.names.len() {
            return Err(CircuitError::VariableOutOfRange {
                index: var,
                vars: self.names.len(),
            });
        }
        let mut m = Manager::new(usize::MAX);
        let mut map = vec![BOT, TOP];
        for n in &self.nodes {
            let id = if n.var as usize == var {
                map[if value { n.hi.idx() } else { n.lo.idx() }]
            } else {
                m.mk(
                    self.position[n.var as usize] as u32,
                    map[n.lo.idx()],
                    map[n.hi.idx()],
                )?
            };
            map.push(id);
        }
        let root = map[self.root.idx()];
        Ok(Circuit::extract(
            &m,
            root,
            self.names.clone(),
            self.order.clone(),
            self.position.clone(),
        ))
    }

    /// Follows the assignment from the root to a terminal.
    pub fn check_validity(&self, a: &Assignment) -> Result<bool, CircuitError> {
        self.check_bits(a.bits())
    }

    pub fn check_bits(&self, bits: &[bool]) -> Result<bool, CircuitError> {
        self.check_len(bits.len())?;
        self.counters.evaluations.fetch_add(1, Ordering::Relaxed);
        let mut at = self.root;
        let mut visits = 0;
        while !at.is_terminal() {
            let n = &self.nodes[at.idx() - 2];
            at = if bits[n.var as usize] { n.hi } else { n.lo };
            visits += 1;
        }
        self.counters.node_visits.fetch_add(visits, Ordering::Relaxed);
        Ok(at == NodeId::TRUE)
    }

    pub fn depth(&self) -> usize {
        let mut d = vec![0usize, 0];
        for n in &self.nodes {
            d.push(1 + d[n.lo.idx()].max(d[n.hi.idx()]));
        }
        d[self.root.idx()]
    }

    pub fn stats(&self) -> CircuitStats {
        CircuitStats {
            nodes: self.nodes.len(),
            vars: self.names.len(),
            depth: self.depth(),
            models: self.model_count(),
        }
    }
}

fn log_add_exp<T: Scalar>(a: T, b: T) -> T {
    if a == T::neg_infinity() {
        return b;
    }
    if b == T::neg_infinity() {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}
