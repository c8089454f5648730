//! Shared helpers: a seeded random-formula corpus and brute-force oracles
//! that do not go through the circuit.

#![allow(dead_code)]

use rand::Rng;
use semgen::formula::{Expr, Formula};
use semgen::rng::{seeded, Rng as ChaCha};

pub fn random_expr(rng: &mut ChaCha, vars: usize, depth: u32) -> Expr {
    if depth == 0 || rng.random_bool(0.25) {
        return if rng.random_bool(0.05) {
            Expr::Const(rng.random_bool(0.5))
        } else {
            Expr::Var(rng.random_range(0..vars))
        };
    }
    let sub = |rng: &mut ChaCha| random_expr(rng, vars, depth - 1);
    match rng.random_range(0..7) {
        0 => Expr::not(sub(rng)),
        1 => Expr::And((0..rng.random_range(2..=3)).map(|_| sub(rng)).collect()),
        2 => Expr::Or((0..rng.random_range(2..=3)).map(|_| sub(rng)).collect()),
        3 => Expr::implies(sub(rng), sub(rng)),
        4 => Expr::iff(sub(rng), sub(rng)),
        5 => Expr::xor(sub(rng), sub(rng)),
        _ => Expr::Or(vec![sub(rng), Expr::not(sub(rng))]),
    }
}

/// `n` formulas over 1..=12 variables, deterministic in `seed`.
pub fn corpus(n: usize, seed: u64) -> Vec<Formula> {
    let mut rng = seeded(seed);
    (0..n)
        .map(|_| {
            let b = rng.random_range(1..=12);
            let e = random_expr(&mut rng, b, 5);
            Formula::new(e, (0..b).map(|i| format!("v{i}")).collect()).unwrap()
        })
        .collect()
}

pub fn random_theta(rng: &mut ChaCha, b: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..b).map(|_| rng.random_range(lo..hi)).collect()
}

fn bits(m: u64, b: usize) -> Vec<bool> {
    (0..b).map(|i| (m >> i) & 1 == 1).collect()
}

/// Σ over models of Π θ_i / (1 − θ_i), by enumeration.
pub fn brute_wmc(f: &Formula, theta: &[f64]) -> f64 {
    let b = f.num_vars();
    (0..1u64 << b)
        .map(|m| bits(m, b))
        .filter(|x| f.expr().eval(x))
        .map(|x| x.iter().zip(theta).map(|(&v, &t)| if v { t } else { 1.0 - t }).product::<f64>())
        .sum()
}

/// ∂WMC/∂θ_i as the difference of the two cofactor counts, by enumeration.
pub fn brute_gradient(f: &Formula, theta: &[f64]) -> Vec<f64> {
    let b = f.num_vars();
    let mut g = vec![0.0; b];
    for m in 0..1u64 << b {
        let x = bits(m, b);
        if !f.expr().eval(&x) {
            continue;
        }
        for i in 0..b {
            let rest: f64 = (0..b)
                .filter(|&j| j != i)
                .map(|j| if x[j] { theta[j] } else { 1.0 - theta[j] })
                .product();
            g[i] += if x[i] { rest } else { -rest };
        }
    }
    g
}

pub fn brute_model_count(f: &Formula) -> u64 {
    let b = f.num_vars();
    (0..1u64 << b).filter(|&m| f.expr().eval(&bits(m, b))).count() as u64
}
