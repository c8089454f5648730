//! Learned reachability embedding: one-hot level → per-tile probability
//! of being reachable, trained on oracle labels.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::level::{GridLevel, NUM_TILES};
use super::reach::{reachable_tiles, ReachSpec};
use crate::autodiff::{
    Activation, Adam, AdamConfig, Array, AutodiffError, Graph, Mlp, NodeId, WeightFile,
};
use crate::rng::derived;
use crate::trainer::one_hot;

#[derive(Clone, Debug, PartialEq)]
pub struct PhiConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Passes over the training split.
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for PhiConfig {
    fn default() -> Self {
        PhiConfig {
            hidden: vec![128, 128],
            activation: Activation::Relu,
            epochs: 30,
            batch_size: 64,
            lr: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PhiModel {
    pub weights: WeightFile<f64>,
    pub activation: Activation,
    pub height: usize,
    pub width: usize,
    /// Per-tile accuracy on the held-out 20%.
    pub heldout_accuracy: f64,
    /// Accuracy of always predicting the majority label on held-out data.
    pub majority_rate: f64,
    /// Every training label was the same.
    pub degenerate: bool,
}

/// Oracle labels, row-major, one per tile.
pub fn reach_labels(l: &GridLevel) -> Vec<f64> {
    reachable_tiles(l, &ReachSpec::default())
        .cells
        .iter()
        .map(|&b| if b { 1.0 } else { 0.0 })
        .collect()
}

fn label_batch(levels: &[&GridLevel]) -> Array<f64> {
    let cells = levels.first().map_or(0, |l| l.cells());
    Array::new(levels.len(), cells, levels.iter().flat_map(|l| reach_labels(l)).collect())
}

fn encode(levels: &[&GridLevel]) -> Array<f64> {
    let idx: Vec<Vec<usize>> = levels.iter().map(|l| l.tile_indices()).collect();
    let rows: Vec<&Vec<usize>> = idx.iter().collect();
    one_hot(&rows, NUM_TILES)
}

struct PhiNet {
    g: Graph<f64>,
    x: NodeId,
    y: NodeId,
    logits: NodeId,
    loss: NodeId,
    net: Mlp,
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-4, 1.0 - 1e-4);
    (p / (1.0 - p)).ln()
}

/// Trains φ on an 80/20 split of `levels`.
pub fn train_phi(levels: &[GridLevel], cfg: &PhiConfig) -> Result<PhiModel, AutodiffError> {
    assert!(!levels.is_empty(), "train_phi needs levels");
    let (h, w) = (levels[0].height(), levels[0].width());
    let cells = h * w;
    let mut rng = derived(cfg.seed, 0xF1);
    let mut order: Vec<usize> = (0..levels.len()).collect();
    order.shuffle(&mut rng);
    let split = (levels.len() * 4).div_ceil(5).min(levels.len());
    let (train_idx, test_idx) = order.split_at(split);
    let train: Vec<&GridLevel> = train_idx.iter().map(|&i| &levels[i]).collect();
    let test: Vec<&GridLevel> = test_idx.iter().map(|&i| &levels[i]).collect();

    let train_labels = label_batch(&train);
    let pos = train_labels.data.iter().sum::<f64>() / train_labels.data.len() as f64;
    let degenerate = pos == 0.0 || pos == 1.0;

    let mut g = Graph::new();
    let x = g.input();
    let y = g.input();
    let mut sizes = vec![cells * NUM_TILES];
    sizes.extend(&cfg.hidden);
    sizes.push(cells);
    let net = Mlp::new(&mut g, &sizes, cfg.activation, &mut rng);
    // untrained φ predicts the base rate everywhere
    let &(w_out, b_out) = net.layers.last().expect("at least one layer");
    g.value_mut(w_out).data.iter_mut().for_each(|v| *v = 0.0);
    g.value_mut(b_out).data.iter_mut().for_each(|v| *v = logit(pos));
    let logits = net.apply(&mut g, x);
    let loss = g.bce_with_logits(logits, y);
    let mut phi = PhiNet {
        g,
        x,
        y,
        logits,
        loss,
        net,
    };
    let mut opt = Adam::new(
        &phi.g,
        phi.net.params(),
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
    );
    let encoded: Vec<Vec<usize>> = train.iter().map(|l| l.tile_indices()).collect();
    let mut idx: Vec<usize> = (0..train.len()).collect();
    for _ in 0..cfg.epochs {
        idx.shuffle(&mut rng);
        for chunk in idx.chunks(cfg.batch_size) {
            let rows: Vec<&Vec<usize>> = chunk.iter().map(|&i| &encoded[i]).collect();
            let mut labels = Vec::with_capacity(chunk.len() * cells);
            for &i in chunk {
                labels.extend_from_slice(train_labels.row(i));
            }
            phi.g.set_input(phi.x, one_hot(&rows, NUM_TILES));
            phi.g.set_input(phi.y, Array::new(chunk.len(), cells, labels));
            phi.g.forward(phi.loss)?;
            phi.g.backward(phi.loss)?;
            opt.step(&mut phi.g);
        }
    }

    let eval_set = if test.is_empty() { &train } else { &test };
    let labels = label_batch(eval_set);
    phi.g.set_input(phi.x, encode(eval_set));
    let out = phi.g.forward(phi.logits)?;
    let correct = out
        .data
        .iter()
        .zip(&labels.data)
        .filter(|(&z, &t)| (z > 0.0) == (t > 0.5))
        .count();
    let n = labels.data.len() as f64;
    let ones = labels.data.iter().sum::<f64>();
    let mut header = BTreeMap::new();
    header.insert("kind".into(), "phi".into());
    header.insert(
        "layers".into(),
        sizes.iter().map(usize::to_string).collect::<Vec<_>>().join(","),
    );
    header.insert("activation".into(), cfg.activation.to_string());
    header.insert("height".into(), h.to_string());
    header.insert("width".into(), w.to_string());
    header.insert("seed".into(), cfg.seed.to_string());
    Ok(PhiModel {
        weights: WeightFile {
            header,
            tensors: phi
                .net
                .params()
                .iter()
                .map(|&p| phi.g.value(p).expect("parameter").clone())
                .collect(),
        },
        activation: cfg.activation,
        height: h,
        width: w,
        heldout_accuracy: correct as f64 / n,
        majority_rate: ones.max(n - ones) / n,
        degenerate,
    })
}

impl PhiModel {
    /// Reachability probabilities of the tiles of `levels` (rows × cells).
    pub fn predict(&self, levels: &[GridLevel]) -> Result<Array<f64>, AutodiffError> {
        let refs: Vec<&GridLevel> = levels.iter().collect();
        let mut g = Graph::new();
        let x = g.input();
        let net = Mlp::from_tensors(&mut g, &self.weights.tensors, self.activation);
        let hidden = net.apply(&mut g, x);
        let p = g.sigmoid(hidden);
        g.set_input(x, encode(&refs));
        Ok(g.forward(p)?.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::dataset::{synth_dataset, Style};

    #[test]
    fn untrained_phi_predicts_majority() {
        let d = synth_dataset(200, 8, 8, Style::Gaps, 1);
        let m = train_phi(
            &d.levels,
            &PhiConfig {
                epochs: 0,
                ..PhiConfig::default()
            },
        )
        .unwrap();
        assert!((m.heldout_accuracy - m.majority_rate).abs() < 1e-12);
        assert!(!m.degenerate);
    }

    #[test]
    fn degenerate_labels_are_flagged() {
        let empty = vec![GridLevel::filled(4, 4, crate::gridworld::Tile::Empty); 10];
        let m = train_phi(
            &empty,
            &PhiConfig {
                epochs: 1,
                ..PhiConfig::default()
            },
        )
        .unwrap();
        assert!(m.degenerate);
    }
}
