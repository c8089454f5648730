use super::*;
use crate::formula::parse_dsl;
use crate::rng::seeded;

fn xor_problem(penalty: bool) -> TrainProblem {
    let c = Arc::new(Circuit::compile(&parse_dsl("x ^ y").unwrap()).unwrap());
    let check = c.clone();
    let data: Vec<Vec<usize>> = (0..100)
        .map(|i| match i % 10 {
            0 => vec![1, 1],
            k if k % 2 == 0 => vec![0, 1],
            _ => vec![1, 0],
        })
        .collect();
    TrainProblem {
        cells: 2,
        tiles: 2,
        data,
        penalty: if penalty {
            Penalty::Direct {
                circuit: c,
                cols: vec![1, 3],
            }
        } else {
            Penalty::None
        },
        conditioning: None,
        probe: Arc::new(move |s: &[usize]| check.check_bits(&[s[0] == 1, s[1] == 1]).unwrap()),
        meta: BTreeMap::new(),
    }
}

fn small_cfg(epochs: usize, lambda: f64) -> TrainConfig {
    TrainConfig {
        task: "xor-toy".into(),
        epochs,
        bootstrap_epochs: epochs / 4,
        ramp_epochs: epochs / 4,
        lambda_max: lambda,
        latent_dim: 4,
        g_hidden: vec![16],
        d_hidden: vec![16],
        probe_size: 64,
        ..TrainConfig::default()
    }
}

#[test]
fn gan_value_examples() {
    assert!((gan_value(&[0.5; 3], &[0.5; 3]).unwrap() + 2.0 * 2f64.ln()).abs() < 1e-15);
    assert!(gan_value(&[1.0], &[0.0]).unwrap().abs() < 1e-6);
    assert!((gan_value(&[0.9], &[0.1]).unwrap() + 0.210721).abs() < 1e-6);
    assert!(gan_value(&[0.0], &[1.0]).unwrap().is_finite());
    assert!(gan_value(&[], &[0.5]).is_err());
}

#[test]
fn can_objective_examples() {
    assert_eq!(can_objective(-1.3, 5.0, 0.0), -1.3);
    assert_eq!(can_objective(-1.3, 0.0, 0.7), -1.3);
    assert!((can_objective(-1.0, 2f64.ln(), 0.2) + 0.861371).abs() < 1e-6);
}

#[test]
fn lambda_schedule_shape() {
    let cfg = TrainConfig {
        epochs: 400,
        bootstrap_epochs: 100,
        ramp_epochs: 100,
        lambda_max: 0.2,
        ..TrainConfig::default()
    };
    assert_eq!(lambda_schedule(0, &cfg), 0.0);
    assert_eq!(lambda_schedule(99, &cfg), 0.0);
    assert!((lambda_schedule(150, &cfg) - 0.1).abs() < 1e-15);
    assert_eq!(lambda_schedule(200, &cfg), 0.2);
    assert_eq!(lambda_schedule(399, &cfg), 0.2);
}

#[test]
fn zero_epochs_keeps_initial_weights() {
    let p = xor_problem(true);
    let out = train(&small_cfg(0, 1.0), &p).unwrap();
    assert!(out.report.epochs.is_empty());
    let again = train(&small_cfg(0, 1.0), &p).unwrap();
    assert_eq!(out.generator, again.generator);
}

#[test]
fn deterministic_and_lambda_trace() {
    let p = xor_problem(true);
    let cfg = small_cfg(40, 1.0);
    let a = train(&cfg, &p).unwrap();
    let b = train(&cfg, &p).unwrap();
    assert_eq!(a.report.to_csv(), b.report.to_csv());
    assert_eq!(a.generator, b.generator);
    for r in &a.report.epochs {
        assert_eq!(r.lambda, lambda_schedule(r.epoch, &cfg));
        assert!(r.sl.is_nan() == (r.lambda == 0.0));
    }
    assert_eq!(a.report.epochs.len(), 40);
}

#[test]
fn generator_rows_are_distributions() {
    let p = xor_problem(true);
    let out = train(&small_cfg(20, 1.0), &p).unwrap();
    let mut g = Generator::from_weights(&out.generator).unwrap();
    let mut rng = seeded(5);
    let probs = g.probabilities(latent_batch(&mut rng, 32, 4), None).unwrap();
    for grp in probs.data.chunks(2) {
        assert!((grp[0] + grp[1] - 1.0).abs() < 1e-12 && grp.iter().all(|&v| v > 0.0));
    }
}

#[test]
fn sampling_contract() {
    let p = xor_problem(false);
    let out = train(&small_cfg(5, 0.0), &p).unwrap();
    let mut g = Generator::from_weights(&out.generator).unwrap();
    assert!(g.sample(0, None, &mut seeded(1)).unwrap().is_empty());
    let a = g.sample(5, None, &mut seeded(2)).unwrap();
    let b = g.sample(5, None, &mut seeded(2)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 5);
    assert!(matches!(
        g.sample(1, Some(&[true]), &mut seeded(2)),
        Err(TrainError::CodeLength { expected: 0, got: 1 })
    ));
    // weight persistence round trip
    let mut buf = Vec::new();
    crate::autodiff::write_weights(&mut buf, &g.to_weights()).unwrap();
    let w = crate::autodiff::read_weights(&mut buf.as_slice()).unwrap();
    assert_eq!(w, out.generator);
}

/// Generator whose last-layer bias makes one category overwhelmingly likely.
fn degenerate(pattern: &[usize], tiles: usize) -> Generator {
    let spec = GeneratorSpec {
        latent: 2,
        code: 0,
        hidden: vec![],
        activation: crate::autodiff::Activation::Relu,
        cells: pattern.len(),
        tiles,
    };
    let mut header = BTreeMap::new();
    spec.write_header(&mut header);
    let out = spec.output_dim();
    let mut bias = vec![-1000.0; out];
    for (c, &t) in pattern.iter().enumerate() {
        bias[c * tiles + t] = 1000.0;
    }
    Generator::from_weights(&WeightFile {
        header,
        tensors: vec![Array::zeros(2, out), Array::new(1, out, bias)],
    })
    .unwrap()
}

#[test]
fn degenerate_generator_is_deterministic() {
    let mut g = degenerate(&[2, 0, 1], 3);
    let s = g.sample(10, None, &mut seeded(0)).unwrap();
    assert!(s.iter().all(|x| x == &[2, 0, 1]));
}

#[test]
fn rejection_sampling() {
    let mut g = degenerate(&[1, 0], 2);
    let r = g.rejection_sample(7, None, 100, &mut seeded(0), |_| true).unwrap();
    assert_eq!((r.samples.len(), r.attempts, r.exhausted), (7, 7, false));
    let r = g.rejection_sample(3, None, 50, &mut seeded(0), |_| false).unwrap();
    assert_eq!((r.samples.len(), r.attempts, r.exhausted), (0, 50, true));
    assert!(g.rejection_sample(3, None, 2, &mut seeded(0), |_| true).is_err());
}

#[test]
fn xor_toy_can_beats_gan() {
    let cfg = TrainConfig {
        epochs: 600,
        bootstrap_epochs: 100,
        ramp_epochs: 100,
        ..small_cfg(0, 1.0)
    };
    let can = train(&cfg, &xor_problem(true)).unwrap();
    let gan = train(&TrainConfig { lambda_max: 0.0, ..cfg }, &xor_problem(false)).unwrap();
    let tail = |r: &TrainReport| {
        let e = &r.epochs[r.epochs.len() - 50..];
        e.iter().map(|x| x.validity).sum::<f64>() / e.len() as f64
    };
    eprintln!("xor toy: CAN {:.3} GAN {:.3}", tail(&can.report), tail(&gan.report));
    assert!(tail(&can.report) >= 0.95);
}
