//! Versioned text format for compiled circuits.
//!
//! ```text
//! semgen-circuit 1
//! vars <b>
//! names <name_0> ... <name_{b-1}>
//! order <var at position 0> ... <var at position b-1>
//! root <id>
//! nodes <n>
//! <id> <var> <lo> <hi>        one line per decision node, ids 2..n+1
//! ```
//!
//! Ids `0` and `1` are the false and true terminals.

use std::fmt::Write;

use super::{Circuit, CircuitError, DecisionNode, NodeId};

const MAGIC: &str = "semgen-circuit 1";

pub fn dump(c: &Circuit) -> String {
    let mut s = String::new();
    let join = |xs: &mut dyn Iterator<Item = String>| xs.collect::<Vec<_>>().join(" ");
    writeln!(s, "{MAGIC}").unwrap();
    writeln!(s, "vars {}", c.num_vars()).unwrap();
    writeln!(s, "names {}", join(&mut c.names().iter().cloned())).unwrap();
    writeln!(s, "order {}", join(&mut c.order().iter().map(|v| v.to_string()))).unwrap();
    writeln!(s, "root {}", c.root().0).unwrap();
    writeln!(s, "nodes {}", c.node_count()).unwrap();
    for (i, n) in c.nodes().iter().enumerate() {
        writeln!(s, "{} {} {} {}", i + 2, n.var, n.lo.0, n.hi.0).unwrap();
    }
    s
}

fn fmt_err(line: usize, msg: impl std::fmt::Display) -> CircuitError {
    CircuitError::Format(format!("line {line}: {msg}"))
}

fn field<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>, key: &str) -> Result<(usize, Vec<&'a str>), CircuitError> {
    let (ln, line) = lines
        .next()
        .ok_or_else(|| CircuitError::Format(format!("missing `{key}` line")))?;
    let mut words = line.split_whitespace();
    if words.next() != Some(key) {
        return Err(fmt_err(ln, format!("expected `{key}`")));
    }
    Ok((ln, words.collect()))
}

fn num<T: std::str::FromStr>(ln: usize, w: &str) -> Result<T, CircuitError> {
    w.parse().map_err(|_| fmt_err(ln, format!("bad number `{w}`")))
}

pub fn load(text: &str) -> Result<Circuit, CircuitError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, l)) if l.trim() == MAGIC => {}
        _ => return Err(CircuitError::Format(format!("missing `{MAGIC}` header"))),
    }
    let (ln, w) = field(&mut lines, "vars")?;
    let vars: usize = num(ln, w.first().copied().unwrap_or(""))?;
    let (ln, names) = field(&mut lines, "names")?;
    if names.len() != vars {
        return Err(fmt_err(ln, format!("expected {vars} names")));
    }
    let names: Vec<String> = names.into_iter().map(String::from).collect();
    let (ln, order) = field(&mut lines, "order")?;
    let order = order
        .into_iter()
        .map(|w| num(ln, w))
        .collect::<Result<Vec<usize>, _>>()?;
    let (ln, w) = field(&mut lines, "root")?;
    let root: u32 = num(ln, w.first().copied().unwrap_or(""))?;
    let (ln, w) = field(&mut lines, "nodes")?;
    let count: usize = num(ln, w.first().copied().unwrap_or(""))?;
    let mut nodes = Vec::with_capacity(count);
    for (ln, line) in lines {
        let w: Vec<&str> = line.split_whitespace().collect();
        if w.len() != 4 {
            return Err(fmt_err(ln, "expected `id var lo hi`"));
        }
        let id: usize = num(ln, w[0])?;
        if id != nodes.len() + 2 {
            return Err(fmt_err(ln, format!("expected node id {}", nodes.len() + 2)));
        }
        nodes.push(DecisionNode {
            var: num(ln, w[1])?,
            lo: NodeId(num(ln, w[2])?),
            hi: NodeId(num(ln, w[3])?),
        });
    }
    if nodes.len() != count {
        return Err(CircuitError::Format(format!(
            "header declares {count} nodes, found {}",
            nodes.len()
        )));
    }
    Circuit::from_parts(names, order, nodes, NodeId(root))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse_dsl;

    #[test]
    fn dump_and_load() {
        let c = Circuit::compile(&parse_dsl("(x ^ y) | z").unwrap()).unwrap();
        let text = dump(&c);
        assert!(text.starts_with("semgen-circuit 1\nvars 3\nnames x y z\norder 0 1 2\n"));
        assert_eq!(load(&text).unwrap(), c);
    }

    #[test]
    fn xor_dump_is_stable() {
        let c = Circuit::compile(&parse_dsl("a ^ b").unwrap()).unwrap();
        assert_eq!(
            dump(&c),
            "semgen-circuit 1\nvars 2\nnames a b\norder 0 1\nroot 4\nnodes 3\n\
             2 1 0 1\n3 1 1 0\n4 0 2 3\n"
        );
    }

    #[test]
    fn rejects_malformed() {
        assert!(load("").is_err());
        assert!(load("semgen-circuit 1\nvars 1\nnames a\norder 0\nroot 2\nnodes 1\n2 0 1 1\n").is_err());
        assert!(load("semgen-circuit 1\nvars 1\nnames a\norder 0\nroot 3\nnodes 1\n2 0 0 1\n").is_err());
        assert!(load("semgen-circuit 1\nvars 2\nnames a b\norder 0 1\nroot 3\nnodes 2\n2 0 0 1\n3 1 0 2\n").is_err());
    }
}
