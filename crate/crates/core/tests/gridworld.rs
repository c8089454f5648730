use std::sync::Arc;

use semgen::autodiff::{Activation, Graph, Mlp};
use semgen::circuit::Circuit;
use semgen::gridworld::{
    build_pipe_constraint, build_reachability_constraint, reach_labels, synth_dataset, train_phi,
    GridLevel, PhiConfig, Style, NUM_TILES,
};
use semgen::rng::seeded;
use semgen::trainer::latent_batch;

/// Every tile assignment of a small grid, checked against the formula.
fn enumerate_valid(h: usize, w: usize) -> u64 {
    let f = build_pipe_constraint(h, w).unwrap();
    let cells = h * w;
    let mut idx = vec![0usize; cells];
    let mut count = 0;
    loop {
        let l = GridLevel::from_indices(h, w, &idx);
        if f.evaluate_bits(&l.encode()).unwrap() {
            count += 1;
        }
        let mut i = 0;
        while i < cells {
            idx[i] += 1;
            if idx[i] < NUM_TILES {
                break;
            }
            idx[i] = 0;
            i += 1;
        }
        if i == cells {
            return count;
        }
    }
}

#[test]
fn pipe_model_count_matches_enumeration() {
    for (h, w) in [(2, 2), (2, 3), (3, 2)] {
        let c = Circuit::compile(&build_pipe_constraint(h, w).unwrap()).unwrap();
        assert_eq!(c.model_count(), enumerate_valid(h, w).into(), "{h}x{w}");
    }
}

#[test]
fn reachability_circuit_is_linear() {
    let sizes: Vec<usize> = (1..=40)
        .map(|h| Circuit::compile(&build_reachability_constraint(h)).unwrap().node_count())
        .collect();
    for (i, &n) in sizes.iter().enumerate() {
        assert_eq!(n, i + 1);
    }
}

#[test]
fn phi_learns_reachability() {
    let d = synth_dataset(2000, 8, 8, Style::Gaps, 11);
    let phi = train_phi(&d.levels, &PhiConfig { seed: 11, ..PhiConfig::default() }).unwrap();
    eprintln!(
        "phi held-out accuracy {:.4} (majority {:.4})",
        phi.heldout_accuracy, phi.majority_rate
    );
    assert!(phi.heldout_accuracy >= 0.95);
    assert!(phi.heldout_accuracy > phi.majority_rate);
    let probe = &d.levels[..50];
    let p = phi.predict(probe).unwrap();
    let (mut hit, mut total) = (0usize, 0usize);
    for (r, l) in probe.iter().enumerate() {
        for (q, t) in p.row(r).iter().zip(reach_labels(l)) {
            hit += usize::from((*q > 0.5) == (t > 0.5));
            total += 1;
        }
    }
    assert!(hit as f64 / total as f64 >= 0.95);
}

/// SL(reach circuit, φ(θ(z))) differentiated through the frozen φ down to
/// the generator parameters.
#[test]
fn phi_composed_gradient_checks() {
    let (h, w) = (4, 5);
    let d = synth_dataset(200, h, w, Style::Gaps, 2);
    let phi = train_phi(
        &d.levels,
        &PhiConfig {
            hidden: vec![16],
            activation: Activation::Tanh,
            epochs: 3,
            ..PhiConfig::default()
        },
    )
    .unwrap();
    let circuit = Arc::new(Circuit::compile(&build_reachability_constraint(h)).unwrap());
    let mut g = Graph::<f64>::new();
    let mut rng = seeded(9);
    let z = g.input();
    let gen = Mlp::new(&mut g, &[3, 8, h * w * NUM_TILES], Activation::Tanh, &mut rng);
    let logits = gen.apply(&mut g, z);
    let theta = g.group_softmax(logits, NUM_TILES);
    let net = Mlp::from_tensors(&mut g, &phi.weights.tensors, phi.activation);
    let reach = net.apply(&mut g, theta);
    let reach = g.sigmoid(reach);
    let last = g.select_cols(reach, (0..h).map(|r| r * w + w - 1).collect());
    let sl = g.semantic_loss(last, circuit);
    let loss = g.mean(sl);
    g.set_input(z, latent_batch(&mut rng, 4, 3));
    let worst = g.gradient_check(loss, &gen.params(), 1e-6).unwrap();
    assert!(worst.is_finite() && worst <= 1e-4, "worst relative error {worst}");
}
