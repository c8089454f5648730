//! Adversarial training with an optional semantic-loss penalty.
//!
//! One epoch is `d_steps` discriminator updates followed by one generator
//! update, each on a fresh minibatch. The discriminator sees the generator's
//! marginals θ(z) during training and one-hot encodings of real data.

mod config;
mod generator;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::Rng as _;
use thiserror::Error;

use crate::autodiff::{Adam, AdamConfig, Array, AutodiffError, Graph, Mlp, NodeId, WeightFile};
use crate::circuit::Circuit;
use crate::rng::derived;
use crate::semloss::CodePrior;

pub use config::TrainConfig;
pub use generator::{
    code_batch, latent_batch, sample_categories, Generator, GeneratorSpec, Rejection,
};

/// Discriminator outputs are clamped to `[D_CLAMP, 1 − D_CLAMP]` before logs.
pub const D_CLAMP: f64 = 1e-7;

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("config: {0}")]
    Config(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("non-finite loss at epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("code has {got} bits, expected {expected}")]
    CodeLength { expected: usize, got: usize },
    #[error("weights: {0}")]
    Weights(String),
    #[error("problem: {0}")]
    Problem(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

/// `mean ln d_real + mean ln(1 − d_fake)` with clamped inputs.
pub fn gan_value(d_real: &[f64], d_fake: &[f64]) -> Result<f64, TrainError> {
    if d_real.is_empty() || d_fake.is_empty() {
        return Err(TrainError::Problem("gan_value needs non-empty inputs".into()));
    }
    if d_real.iter().chain(d_fake).any(|p| p.is_nan()) {
        return Err(TrainError::Problem("discriminator output is NaN".into()));
    }
    let clamp = |p: f64| p.clamp(D_CLAMP, 1.0 - D_CLAMP);
    let mean = |v: &[f64], f: &dyn Fn(f64) -> f64| v.iter().map(|&p| f(clamp(p))).sum::<f64>() / v.len() as f64;
    Ok(mean(d_real, &|p| p.ln()) + mean(d_fake, &|p| (1.0 - p).ln()))
}

pub fn can_objective(gan_term: f64, sl_term: f64, lambda: f64) -> f64 {
    debug_assert!(lambda >= 0.0);
    gan_term + lambda * sl_term
}

/// 0 during the bootstrap phase, then linear up to `lambda_max` over
/// `ramp_epochs`, then constant.
pub fn lambda_schedule(epoch: usize, cfg: &TrainConfig) -> f64 {
    if epoch < cfg.bootstrap_epochs {
        return 0.0;
    }
    if cfg.ramp_epochs == 0 {
        return cfg.lambda_max;
    }
    let t = (epoch - cfg.bootstrap_epochs) as f64 / cfg.ramp_epochs as f64;
    cfg.lambda_max * t.min(1.0)
}

/// Frozen dense network (sigmoid outputs) applied to θ before the circuit.
#[derive(Clone, Debug)]
pub struct Embedding {
    pub weights: WeightFile<f64>,
    pub activation: crate::autodiff::Activation,
}

/// What the semantic loss is applied to.
#[derive(Clone)]
pub enum Penalty {
    None,
    /// Circuit variable `i` is generator output column `cols[i]`. With
    /// conditioning, the code variables come first and are clamped.
    Direct {
        circuit: Arc<Circuit>,
        cols: Vec<usize>,
    },
    /// Circuit variable `i` is output `cols[i]` of the embedding applied to
    /// the full θ.
    Embedded {
        circuit: Arc<Circuit>,
        embedding: Embedding,
        cols: Vec<usize>,
    },
}

/// Codes appended to the latent vector and clamped in the circuit.
#[derive(Clone, Debug)]
pub struct Conditioning {
    pub prior: CodePrior,
    /// Circuit variables holding the code bits, in code order.
    pub code_vars: Vec<usize>,
}

/// Validity test applied to sampled categories during probing.
pub type ProbeCheck = Arc<dyn Fn(&[usize]) -> bool + Send + Sync>;

/// Everything task-specific the training loop needs.
#[derive(Clone)]
pub struct TrainProblem {
    pub cells: usize,
    pub tiles: usize,
    /// Category per cell for every training example.
    pub data: Vec<Vec<usize>>,
    pub penalty: Penalty,
    pub conditioning: Option<Conditioning>,
    pub probe: ProbeCheck,
    /// Extra weight-file header entries (grid shape, task name).
    pub meta: BTreeMap<String, String>,
}

pub fn one_hot(rows: &[&Vec<usize>], tiles: usize) -> Array<f64> {
    let cells = rows.first().map_or(0, |r| r.len());
    let mut data = vec![0.0; rows.len() * cells * tiles];
    for (i, r) in rows.iter().enumerate() {
        for (c, &t) in r.iter().enumerate() {
            data[(i * cells + c) * tiles + t] = 1.0;
        }
    }
    Array::new(rows.len(), cells * tiles, data)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lambda: f64,
    pub d_loss: f64,
    pub g_loss: f64,
    pub sl: f64,
    pub validity: f64,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
}

pub const REPORT_CSV_HEADER: &str = "epoch,lambda,d_loss,g_loss,sl,validity";

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(REPORT_CSV_HEADER);
        s.push('\n');
        for r in &self.epochs {
            writeln!(
                s,
                "{},{},{},{},{},{}",
                r.epoch, r.lambda, r.d_loss, r.g_loss, r.sl, r.validity
            )
            .expect("string write");
        }
        s
    }

    pub fn final_validity(&self) -> Option<f64> {
        self.epochs.last().map(|r| r.validity)
    }
}

pub struct TrainOutcome {
    pub report: TrainReport,
    pub generator: WeightFile<f64>,
}

/// Training graph: generator, discriminator and the penalty, sharing
/// parameters between the real and fake discriminator branches.
struct Net {
    g: Graph<f64>,
    z: NodeId,
    codes: Option<NodeId>,
    real: NodeId,
    ones: NodeId,
    zeros: NodeId,
    lambda: NodeId,
    probs: NodeId,
    gen: Mlp,
    disc: Mlp,
    d_loss: NodeId,
    gan_g: NodeId,
    sl: Option<NodeId>,
    g_loss: NodeId,
}

fn build_net(cfg: &TrainConfig, p: &TrainProblem, spec: &GeneratorSpec) -> Result<Net, TrainError> {
    let mut rng = derived(cfg.seed, 1);
    let mut g = Graph::new();
    let z = g.input();
    let codes = (spec.code > 0).then(|| g.input());
    let input = match codes {
        Some(c) => g.concat_cols(z, c),
        None => z,
    };
    let gen = Mlp::new(&mut g, &spec.layer_sizes(), spec.activation, &mut rng);
    let logits = gen.apply(&mut g, input);
    let probs = g.group_softmax(logits, spec.tiles);

    let mut d_sizes = vec![spec.output_dim()];
    d_sizes.extend(&cfg.d_hidden);
    d_sizes.push(1);
    let disc = Mlp::new(&mut g, &d_sizes, cfg.d_activation, &mut rng);
    let real = g.input();
    let d_real = disc.apply(&mut g, real);
    let d_fake = disc.apply(&mut g, probs);
    let ones = g.input();
    let zeros = g.input();
    let lr = g.bce_with_logits(d_real, ones);
    let lf = g.bce_with_logits(d_fake, zeros);
    let d_loss = g.affine(&[(lr, 1.0), (lf, 1.0)], 0.0);
    let gan_g = g.bce_with_logits(d_fake, ones);

    let sl = match &p.penalty {
        Penalty::None => None,
        Penalty::Direct { circuit, cols } => {
            let identity = cols.len() == spec.output_dim() && cols.iter().enumerate().all(|(i, &c)| i == c);
            let theta = if identity { probs } else { g.select_cols(probs, cols.clone()) };
            let k = p.conditioning.as_ref().map_or(0, |c| c.code_vars.len());
            if cols.len() + k != circuit.num_vars() {
                return Err(TrainError::Problem(format!(
                    "circuit has {} variables, generator feeds {} plus {k} codes",
                    circuit.num_vars(),
                    cols.len()
                )));
            }
            let per_row = match (&p.conditioning, codes) {
                (Some(cond), Some(c)) => {
                    g.conditional_semantic_loss(theta, c, circuit.clone(), cond.code_vars.clone())
                }
                _ => g.semantic_loss(theta, circuit.clone()),
            };
            Some(g.mean(per_row))
        }
        Penalty::Embedded {
            circuit,
            embedding,
            cols,
        } => {
            if cols.len() != circuit.num_vars() {
                return Err(TrainError::Problem("embedding columns do not match the circuit".into()));
            }
            // frozen: its parameters are never handed to an optimizer
            let phi = Mlp::from_tensors(&mut g, &embedding.weights.tensors, embedding.activation);
            let h = phi.apply(&mut g, probs);
            let prob = g.sigmoid(h);
            let sel = g.select_cols(prob, cols.clone());
            let per_row = g.semantic_loss(sel, circuit.clone());
            Some(g.mean(per_row))
        }
    };
    let lambda = g.input();
    g.set_input(lambda, Array::scalar(0.0));
    let g_loss = match sl {
        Some(s) => {
            let w = g.mul(lambda, s);
            g.affine(&[(gan_g, 1.0), (w, 1.0)], 0.0)
        }
        None => gan_g,
    };
    Ok(Net {
        g,
        z,
        codes,
        real,
        ones,
        zeros,
        lambda,
        probs,
        gen,
        disc,
        d_loss,
        gan_g,
        sl,
        g_loss,
    })
}

pub fn generator_spec(cfg: &TrainConfig, p: &TrainProblem) -> GeneratorSpec {
    GeneratorSpec {
        latent: cfg.latent_dim,
        code: p.conditioning.as_ref().map_or(0, |c| c.code_vars.len()),
        hidden: cfg.g_hidden.clone(),
        activation: cfg.g_activation,
        cells: p.cells,
        tiles: p.tiles,
    }
}

impl Net {
    fn set_latent(&mut self, rng: &mut crate::rng::Rng, n: usize, latent: usize, cond: Option<&Conditioning>) {
        self.g.set_input(self.z, latent_batch(rng, n, latent));
        if let (Some(id), Some(c)) = (self.codes, cond) {
            let codes: Vec<Vec<bool>> = (0..n).map(|_| c.prior.sample(rng)).collect();
            self.g.set_input(id, code_batch(&codes, c.code_vars.len()));
        }
    }

    fn weights(&self, spec: &GeneratorSpec, cfg: &TrainConfig, meta: &BTreeMap<String, String>) -> WeightFile<f64> {
        let mut header = meta.clone();
        spec.write_header(&mut header);
        header.insert("seed".into(), cfg.seed.to_string());
        WeightFile {
            header,
            tensors: self
                .gen
                .params()
                .iter()
                .map(|&p| self.g.value(p).expect("parameter").clone())
                .collect(),
        }
    }
}

/// Runs `cfg.epochs` epochs. Deterministic for a given seed.
pub fn train(cfg: &TrainConfig, p: &TrainProblem) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if p.data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let spec = generator_spec(cfg, p);
    let mut net = build_net(cfg, p, &spec)?;
    let adam = AdamConfig {
        lr: cfg.lr,
        beta1: cfg.beta1,
        beta2: cfg.beta2,
        ..AdamConfig::default()
    };
    let mut opt_g = Adam::new(&net.g, net.gen.params(), adam);
    let mut opt_d = Adam::new(&net.g, net.disc.params(), adam);
    let mut rng = derived(cfg.seed, 2);
    let mut probe_rng = derived(cfg.seed, 3);
    let b = cfg.batch_size;
    net.g.set_input(net.ones, Array::new(b, 1, vec![1.0; b]));
    net.g.set_input(net.zeros, Array::new(b, 1, vec![0.0; b]));
    let cond = p.conditioning.as_ref();
    let mut report = TrainReport::default();

    for epoch in 0..cfg.epochs {
        let lambda = lambda_schedule(epoch, cfg);
        let mut d_loss = 0.0;
        for _ in 0..cfg.d_steps {
            let rows: Vec<&Vec<usize>> = (0..b).map(|_| &p.data[rng.random_range(0..p.data.len())]).collect();
            net.g.set_input(net.real, one_hot(&rows, p.tiles));
            net.set_latent(&mut rng, b, spec.latent, cond);
            d_loss = net.g.forward(net.d_loss)?.data[0];
            net.g.backward(net.d_loss)?;
            opt_d.step(&mut net.g);
        }
        net.set_latent(&mut rng, b, spec.latent, cond);
        net.g.set_input(net.lambda, Array::scalar(lambda));
        // skip the circuit entirely while the penalty weight is zero
        let target = if lambda > 0.0 { net.g_loss } else { net.gan_g };
        let g_loss = net.g.forward(target)?.data[0];
        net.g.backward(target)?;
        opt_g.step(&mut net.g);
        let sl = match net.sl {
            Some(id) if lambda > 0.0 => net.g.scalar(id).expect("computed with g_loss"),
            _ => f64::NAN,
        };
        if !d_loss.is_finite() || !g_loss.is_finite() {
            return Err(TrainError::Divergence { epoch });
        }
        let validity = probe(&mut net, cfg, p, &spec, &mut probe_rng)?;
        report.epochs.push(EpochRecord {
            epoch,
            lambda,
            d_loss,
            g_loss,
            sl,
            validity,
        });
    }
    Ok(TrainOutcome {
        report,
        generator: net.weights(&spec, cfg, &p.meta),
    })
}

fn probe(
    net: &mut Net,
    cfg: &TrainConfig,
    p: &TrainProblem,
    spec: &GeneratorSpec,
    rng: &mut crate::rng::Rng,
) -> Result<f64, TrainError> {
    let n = cfg.probe_size;
    net.set_latent(rng, n, spec.latent, p.conditioning.as_ref());
    let probs = net.g.forward(net.probs)?.clone();
    let samples = sample_categories(rng, &probs, spec.tiles);
    let valid = samples.iter().filter(|s| (p.probe)(s)).count();
    Ok(valid as f64 / n as f64)
}

#[cfg(test)]
mod tests;
