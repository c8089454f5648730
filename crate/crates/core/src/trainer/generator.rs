//! Generator network, inference-time sampling and rejection sampling.
//!
//! Nothing here refers to a circuit: sampling needs only the weights.

use std::collections::BTreeMap;

use rand::Rng as _;
use rand_distr::StandardNormal;

use super::TrainError;
use crate::autodiff::{Activation, Array, Graph, Mlp, NodeId, WeightFile};
use crate::rng::Rng;

/// Shape of a generator: `(z ‖ code)` → MLP → one softmax group of
/// `tiles` entries per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorSpec {
    pub latent: usize,
    pub code: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub cells: usize,
    pub tiles: usize,
}

impl GeneratorSpec {
    pub fn input_dim(&self) -> usize {
        self.latent + self.code
    }

    pub fn output_dim(&self) -> usize {
        self.cells * self.tiles
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(&self.hidden);
        s.push(self.output_dim());
        s
    }

    pub(crate) fn write_header(&self, h: &mut BTreeMap<String, String>) {
        let sizes: Vec<String> = self.layer_sizes().iter().map(usize::to_string).collect();
        h.insert("layers".into(), sizes.join(","));
        h.insert("activation".into(), self.activation.to_string());
        h.insert("latent".into(), self.latent.to_string());
        h.insert("code".into(), self.code.to_string());
        h.insert("cells".into(), self.cells.to_string());
        h.insert("tiles".into(), self.tiles.to_string());
    }

    pub(crate) fn from_header(h: &BTreeMap<String, String>) -> Result<GeneratorSpec, TrainError> {
        let get = |k: &str| -> Result<&String, TrainError> {
            h.get(k)
                .ok_or_else(|| TrainError::Weights(format!("header lacks `{k}`")))
        };
        let num = |k: &str| -> Result<usize, TrainError> {
            get(k)?
                .parse()
                .map_err(|_| TrainError::Weights(format!("bad `{k}` in header")))
        };
        let layers: Vec<usize> = get("layers")?
            .split(',')
            .map(|s| s.parse())
            .collect::<Result<_, _>>()
            .map_err(|_| TrainError::Weights("bad `layers` in header".into()))?;
        let spec = GeneratorSpec {
            latent: num("latent")?,
            code: num("code")?,
            hidden: layers.get(1..layers.len().saturating_sub(1)).unwrap_or(&[]).to_vec(),
            activation: get("activation")?.parse().map_err(TrainError::Weights)?,
            cells: num("cells")?,
            tiles: num("tiles")?,
        };
        if layers.len() < 2 || spec.layer_sizes() != layers {
            return Err(TrainError::Weights("layer sizes disagree with latent/code/cells/tiles".into()));
        }
        Ok(spec)
    }
}

/// Standard-normal latent batch.
pub fn latent_batch(rng: &mut Rng, n: usize, dim: usize) -> Array<f64> {
    Array::new(n, dim, (0..n * dim).map(|_| rng.sample(StandardNormal)).collect())
}

pub fn code_batch(codes: &[Vec<bool>], k: usize) -> Array<f64> {
    Array::new(
        codes.len(),
        k,
        codes.iter().flatten().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
    )
}

/// Draws one category per softmax group.
pub fn sample_categories(rng: &mut Rng, probs: &Array<f64>, tiles: usize) -> Vec<Vec<usize>> {
    (0..probs.rows)
        .map(|r| {
            probs
                .row(r)
                .chunks(tiles)
                .map(|grp| {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    for (t, &p) in grp.iter().enumerate() {
                        acc += p;
                        if u < acc {
                            return t;
                        }
                    }
                    // round-off left `u` above the cumulative sum
                    grp.len() - 1
                })
                .collect()
        })
        .collect()
}

/// Inference-only generator.
pub struct Generator {
    pub spec: GeneratorSpec,
    pub header: BTreeMap<String, String>,
    graph: Graph<f64>,
    net: Mlp,
    z: NodeId,
    code: Option<NodeId>,
    probs: NodeId,
}

impl Generator {
    pub fn from_weights(w: &WeightFile<f64>) -> Result<Generator, TrainError> {
        let spec = GeneratorSpec::from_header(&w.header)?;
        let mut graph = Graph::new();
        let z = graph.input();
        let code = (spec.code > 0).then(|| graph.input());
        let input = match code {
            Some(c) => graph.concat_cols(z, c),
            None => z,
        };
        let sizes = spec.layer_sizes();
        if w.tensors.len() != 2 * (sizes.len() - 1) {
            return Err(TrainError::Weights(format!(
                "{} tensors for {} layers",
                w.tensors.len(),
                sizes.len() - 1
            )));
        }
        let mut layers = Vec::new();
        for (i, win) in sizes.windows(2).enumerate() {
            let (wt, b) = (&w.tensors[2 * i], &w.tensors[2 * i + 1]);
            if wt.shape() != (win[0], win[1]) || b.shape() != (1, win[1]) {
                return Err(TrainError::Weights(format!("layer {i} has the wrong shape")));
            }
            layers.push((graph.param(wt.clone()), graph.param(b.clone())));
        }
        let net = Mlp {
            sizes,
            hidden: spec.activation,
            layers,
        };
        let logits = net.apply(&mut graph, input);
        let probs = graph.group_softmax(logits, spec.tiles);
        Ok(Generator {
            spec,
            header: w.header.clone(),
            graph,
            net,
            z,
            code,
            probs,
        })
    }

    pub fn to_weights(&self) -> WeightFile<f64> {
        WeightFile {
            header: self.header.clone(),
            tensors: self
                .net
                .params()
                .iter()
                .map(|&p| self.graph.value(p).expect("parameter").clone())
                .collect(),
        }
    }

    /// θ for a latent batch (and optional codes, one row per sample).
    pub fn probabilities(
        &mut self,
        z: Array<f64>,
        codes: Option<Array<f64>>,
    ) -> Result<Array<f64>, TrainError> {
        self.graph.set_input(self.z, z);
        match (self.code, codes) {
            (Some(id), Some(c)) => self.graph.set_input(id, c),
            (None, None) => {}
            (Some(_), None) => {
                return Err(TrainError::CodeLength {
                    expected: self.spec.code,
                    got: 0,
                })
            }
            (None, Some(c)) => {
                return Err(TrainError::CodeLength {
                    expected: 0,
                    got: c.cols,
                })
            }
        }
        Ok(self.graph.forward(self.probs)?.clone())
    }

    /// `n` samples (category per cell). Conditional generators need `code`.
    pub fn sample(
        &mut self,
        n: usize,
        code: Option<&[bool]>,
        rng: &mut Rng,
    ) -> Result<Vec<Vec<usize>>, TrainError> {
        let k = code.map_or(0, <[bool]>::len);
        if k != self.spec.code {
            return Err(TrainError::CodeLength {
                expected: self.spec.code,
                got: k,
            });
        }
        if n == 0 {
            return Ok(Vec::new());
        }
        let z = latent_batch(rng, n, self.spec.latent);
        let codes = code.map(|c| code_batch(&vec![c.to_vec(); n], k));
        let probs = self.probabilities(z, codes)?;
        Ok(sample_categories(rng, &probs, self.spec.tiles))
    }

    /// Samples one at a time until `n` pass `is_valid` or `max_attempts`
    /// draws have been made.
    pub fn rejection_sample(
        &mut self,
        n: usize,
        code: Option<&[bool]>,
        max_attempts: usize,
        rng: &mut Rng,
        is_valid: impl Fn(&[usize]) -> bool,
    ) -> Result<Rejection, TrainError> {
        if max_attempts < n {
            return Err(TrainError::Config(format!(
                "max_attempts {max_attempts} is below the requested {n} samples"
            )));
        }
        let mut out = Rejection {
            samples: Vec::with_capacity(n),
            attempts: 0,
            exhausted: false,
        };
        const CHUNK: usize = 64;
        while out.samples.len() < n {
            if out.attempts == max_attempts {
                out.exhausted = true;
                break;
            }
            let m = CHUNK.min(max_attempts - out.attempts);
            for s in self.sample(m, code, rng)? {
                if out.samples.len() == n {
                    break;
                }
                out.attempts += 1;
                if is_valid(&s) {
                    out.samples.push(s);
                }
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rejection {
    pub samples: Vec<Vec<usize>>,
    pub attempts: usize,
    /// `max_attempts` ran out before `n` valid samples were found.
    pub exhausted: bool,
}
