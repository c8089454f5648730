//! Dense layers, initialization and the Adam optimizer.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;

use super::{Array, Graph, NodeId};
use crate::rng::Rng;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
    /// Slope 0.2 on the negative side.
    LeakyRelu,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn apply<T: Scalar>(self, g: &mut Graph<T>, x: NodeId) -> NodeId {
        match self {
            Activation::Tanh => g.tanh(x),
            Activation::Relu => g.relu(x),
            Activation::LeakyRelu => g.leaky_relu(x, T::lit(0.2)),
            Activation::Sigmoid => g.sigmoid(x),
            Activation::Identity => x,
        }
    }
}

impl FromStr for Activation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "tanh" => Activation::Tanh,
            "relu" => Activation::Relu,
            "leaky_relu" => Activation::LeakyRelu,
            "sigmoid" => Activation::Sigmoid,
            "identity" => Activation::Identity,
            _ => return Err(format!("unknown activation `{s}`")),
        })
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::LeakyRelu => "leaky_relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Identity => "identity",
        })
    }
}

/// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot<T: Scalar>(rng: &mut Rng, fan_in: usize, fan_out: usize) -> Array<T> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| T::lit(rng.random_range(-a..a)))
        .collect();
    Array::new(fan_in, fan_out, data)
}

/// Fully connected network: hidden layers use `hidden`, the last layer is
/// linear.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    pub hidden: Activation,
    /// `(weight, bias)` per layer.
    pub layers: Vec<(NodeId, NodeId)>,
}

impl Mlp {
    pub fn new<T: Scalar>(
        g: &mut Graph<T>,
        sizes: &[usize],
        hidden: Activation,
        rng: &mut Rng,
    ) -> Mlp {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let layers = sizes
            .windows(2)
            .map(|w| {
                let wt = g.param(glorot(rng, w[0], w[1]));
                let b = g.param(Array::zeros(1, w[1]));
                (wt, b)
            })
            .collect();
        Mlp {
            sizes: sizes.to_vec(),
            hidden,
            layers,
        }
    }

    /// Network over existing weights `[W_1, b_1, W_2, b_2, …]`, added to `g`
    /// as parameters.
    pub fn from_tensors<T: Scalar>(g: &mut Graph<T>, tensors: &[Array<T>], hidden: Activation) -> Mlp {
        assert!(tensors.len() % 2 == 0 && !tensors.is_empty(), "weights come in (W, b) pairs");
        let mut sizes = vec![tensors[0].rows];
        let layers = tensors
            .chunks(2)
            .map(|pair| {
                sizes.push(pair[0].cols);
                (g.param(pair[0].clone()), g.param(pair[1].clone()))
            })
            .collect();
        Mlp { sizes, hidden, layers }
    }

    pub fn apply<T: Scalar>(&self, g: &mut Graph<T>, x: NodeId) -> NodeId {
        let mut h = x;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let z = g.matmul(h, w);
            h = g.add_bias(z, b);
            if i + 1 < self.layers.len() {
                h = self.hidden.apply(g, h);
            }
        }
        h
    }

    pub fn params(&self) -> Vec<NodeId> {
        self.layers.iter().flat_map(|&(w, b)| [w, b]).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam over a fixed parameter list.
pub struct Adam<T> {
    pub cfg: AdamConfig,
    params: Vec<NodeId>,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    t: i32,
}

impl<T: Scalar> Adam<T> {
    pub fn new(g: &Graph<T>, params: Vec<NodeId>, cfg: AdamConfig) -> Adam<T> {
        let zeros: Vec<Vec<T>> = params
            .iter()
            .map(|&p| vec![T::zero(); g.value(p).expect("parameter").data.len()])
            .collect();
        Adam {
            cfg,
            params,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    /// One descent step using the gradients of the last backward pass.
    /// Parameters the pass did not reach are left unchanged.
    pub fn step(&mut self, g: &mut Graph<T>) {
        self.t += 1;
        let (b1, b2) = (T::lit(self.cfg.beta1), T::lit(self.cfg.beta2));
        let lr = T::lit(self.cfg.lr);
        let eps = T::lit(self.cfg.eps);
        let c1 = T::one() - b1.powi(self.t);
        let c2 = T::one() - b2.powi(self.t);
        for (k, &p) in self.params.iter().enumerate() {
            let grad = g.grad(p).to_vec();
            if grad.is_empty() {
                continue;
            }
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            let w = g.value_mut(p);
            for j in 0..grad.len() {
                m[j] = b1 * m[j] + (T::one() - b1) * grad[j];
                v[j] = b2 * v[j] + (T::one() - b2) * grad[j] * grad[j];
                let mh = m[j] / c1;
                let vh = v[j] / c2;
                w.data[j] -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}
