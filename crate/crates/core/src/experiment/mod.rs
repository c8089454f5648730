//! Built-in tasks and paired GAN/CAN experiments.
//!
//! Every experiment trains a baseline (λ = 0) and a constrained model
//! (λ = `lambda_max`) on the same data with the same seed, evaluates both on
//! fresh samples and writes a comparison.

mod run;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

use crate::circuit::{self, Circuit, CircuitError, CompileOptions};
use crate::formula::{parse_dimacs, parse_dsl, Expr, Formula, FormulaError};
use crate::gridworld::{
    build_pipe_constraint, build_reachability_constraint, corrupt_dataset, grid_var_names,
    is_playable, synth_dataset, train_phi, ConstraintError, GridLevel, LevelError, PhiConfig,
    PhiModel, Style, Tile, NUM_TILES,
};
use crate::semloss::{build_conditional, CodePrior, ConditionalSpec, SemLossError};
use crate::trainer::{Conditioning, Embedding, Penalty, ProbeCheck, TrainConfig, TrainError, TrainProblem};

pub use run::{
    evaluate, experiment_outputs, manifest, run_experiment, train_outputs, write_experiment,
    write_train_run, Adherence, ArmResult, Evaluation, ExperimentResult, ADHERENCE_SAMPLES,
    COMPARISON_CSV_HEADER, EVAL_SAMPLES,
};

/// Grid side used when the requested pipe constraint blows the node budget.
pub const FALLBACK_SIDE: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    XorToy,
    Pipes,
    Reachability,
    Conditional,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::XorToy, Task::Pipes, Task::Reachability, Task::Conditional];
}

impl FromStr for Task {
    type Err = ExperimentError;
    fn from_str(s: &str) -> Result<Task, ExperimentError> {
        Ok(match s {
            "xor-toy" => Task::XorToy,
            "pipes" => Task::Pipes,
            "reachability" => Task::Reachability,
            "conditional" => Task::Conditional,
            _ => return Err(ExperimentError::UnknownTask(s.into())),
        })
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::XorToy => "xor-toy",
            Task::Pipes => "pipes",
            Task::Reachability => "reachability",
            Task::Conditional => "conditional",
        })
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("unknown experiment `{0}` (expected xor-toy, pipes, reachability or conditional)")]
    UnknownTask(String),
    #[error("constraint does not fit the node budget: {0}")]
    Budget(CircuitError),
    #[error(transparent)]
    Circuit(CircuitError),
    #[error(transparent)]
    Formula(#[from] FormulaError),
    #[error(transparent)]
    SemLoss(#[from] SemLossError),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    Level(#[from] LevelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Autodiff(#[from] crate::autodiff::AutodiffError),
    #[error("{0}")]
    Input(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl From<CircuitError> for ExperimentError {
    fn from(e: CircuitError) -> Self {
        match e {
            CircuitError::NodeBudget { .. } => ExperimentError::Budget(e),
            _ => ExperimentError::Circuit(e),
        }
    }
}

pub(crate) fn read_file(path: &str) -> Result<String, ExperimentError> {
    std::fs::read_to_string(path).map_err(|source| ExperimentError::Io {
        path: path.into(),
        source,
    })
}

/// Desk-scale defaults per task.
pub fn default_config(task: Task) -> TrainConfig {
    let base = TrainConfig {
        task: task.to_string(),
        ..TrainConfig::default()
    };
    match task {
        Task::XorToy => TrainConfig {
            epochs: 600,
            bootstrap_epochs: 100,
            ramp_epochs: 100,
            lambda_max: 1.0,
            latent_dim: 4,
            g_hidden: vec![16],
            d_hidden: vec![16],
            probe_size: 256,
            dataset_size: 1000,
            corruption: 0.1,
            sample_count: 8,
            ..base
        },
        Task::Pipes => TrainConfig {
            epochs: 1500,
            lambda_max: 0.15,
            bootstrap_epochs: 300,
            ramp_epochs: 300,
            ..base
        },
        Task::Reachability => TrainConfig {
            style: "gaps".into(),
            epochs: 1500,
            bootstrap_epochs: 300,
            ramp_epochs: 300,
            dataset_size: 2000,
            phi_epochs: 40,
            ..base
        },
        Task::Conditional => TrainConfig {
            style: "mixed".into(),
            epochs: 600,
            lambda_max: 1.0,
            ..base
        },
    }
}

/// Shape of the generator output.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    /// Named Boolean variables, one two-way group each.
    Bits,
    /// `height × width` tiles.
    Grid { height: usize, width: usize },
}

/// A task instantiated from a config: data, constraint and checks.
pub struct Prepared {
    pub task: Task,
    pub layout: Layout,
    pub problem: TrainProblem,
    /// Training data as levels (empty for the bit task).
    pub levels: Vec<GridLevel>,
    /// Compiled constraint the penalty uses.
    pub circuit: Option<Arc<Circuit>>,
    pub phi: Option<PhiModel>,
    /// Switchable properties of the conditional task, in code order.
    pub properties: Vec<(String, fn(&GridLevel) -> bool)>,
}

impl Prepared {
    pub fn is_valid(&self, sample: &[usize]) -> bool {
        (self.problem.probe)(sample)
    }
}

/// Generator output columns feeding each circuit variable. Grid names map
/// to their one-hot column, bit names `x` to the "true" column of their
/// group, and DIMACS names `v<i>` to output variable `i − 1`.
fn columns_for(circuit: &Circuit, outputs: &[String], per_var: usize, offset: usize) -> Result<Vec<usize>, ExperimentError> {
    circuit
        .names()
        .iter()
        .map(|n| {
            if let Some(i) = outputs.iter().position(|o| o == n) {
                return Ok(i * per_var + offset);
            }
            n.strip_prefix('v')
                .and_then(|d| d.parse::<usize>().ok())
                .filter(|&i| i >= 1 && i <= outputs.len())
                .map(|i| (i - 1) * per_var + offset)
                .ok_or_else(|| ExperimentError::Input(format!("constraint variable `{n}` is not a generator output")))
        })
        .collect()
}

/// Reads a constraint file: circuit dump, DIMACS CNF or the DSL.
pub fn load_constraint(path: &str, budget: usize) -> Result<Circuit, ExperimentError> {
    let text = read_file(path)?;
    constraint_from_text(&text, budget)
}

pub fn constraint_from_text(text: &str, budget: usize) -> Result<Circuit, ExperimentError> {
    if text.starts_with("semgen-circuit") {
        return Ok(circuit::load(text)?);
    }
    let is_dimacs = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('c'))
        .is_some_and(|l| l.starts_with("p "));
    let f = if is_dimacs { parse_dimacs(text)? } else { parse_dsl(text)? };
    compile_with_budget(&f, budget)
}

fn compile_with_budget(f: &Formula, budget: usize) -> Result<Circuit, ExperimentError> {
    Ok(circuit::compile(
        f,
        &CompileOptions {
            node_budget: budget,
            ..CompileOptions::default()
        },
    )?)
}

fn load_levels(cfg: &TrainConfig, style: Style, h: usize, w: usize) -> Result<Vec<GridLevel>, ExperimentError> {
    if !cfg.dataset.is_empty() {
        let levels = crate::gridworld::parse_levels(&read_file(&cfg.dataset)?)?;
        if levels.iter().any(|l| (l.height(), l.width()) != (h, w)) {
            return Err(ExperimentError::Input(format!(
                "dataset levels must all be {h}x{w} (set height/width)"
            )));
        }
        return Ok(levels);
    }
    let d = synth_dataset(cfg.dataset_size.max(1), h, w, style, cfg.seed);
    Ok(if cfg.corruption > 0.0 {
        corrupt_dataset(&d, cfg.corruption, cfg.seed).levels
    } else {
        d.levels
    })
}

fn parse_style(s: &str) -> Result<Style, ExperimentError> {
    s.parse().map_err(ExperimentError::Input)
}

/// Builds the training problem for `cfg.task` with the default node budget.
pub fn prepare(cfg: &TrainConfig) -> Result<Prepared, ExperimentError> {
    prepare_with_budget(cfg, circuit::DEFAULT_NODE_BUDGET)
}

pub fn prepare_with_budget(cfg: &TrainConfig, budget: usize) -> Result<Prepared, ExperimentError> {
    let task: Task = cfg.task.parse()?;
    cfg.validate()?;
    match task {
        Task::XorToy => prepare_xor(cfg, budget),
        Task::Pipes => prepare_pipes(cfg, budget),
        Task::Reachability => prepare_reach(cfg, budget),
        Task::Conditional => prepare_conditional(cfg, budget),
    }
}

fn meta(task: Task, layout: Layout) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    m.insert("task".into(), task.to_string());
    if let Layout::Grid { height, width } = layout {
        m.insert("height".into(), height.to_string());
        m.insert("width".into(), width.to_string());
    }
    m
}

/// Two variables under `x ⊕ y`; the uncorrupted data is split evenly
/// between the two models and the corrupted share between the two
/// non-models. Exact counts, no shuffling.
fn prepare_xor(cfg: &TrainConfig, budget: usize) -> Result<Prepared, ExperimentError> {
    let names = vec!["x".to_string(), "y".to_string()];
    let circuit = if cfg.constraint.is_empty() {
        compile_with_budget(&parse_dsl("x ^ y")?, budget)?
    } else {
        load_constraint(&cfg.constraint, budget)?
    };
    let cols = columns_for(&circuit, &names, 2, 1)?;
    let n = cfg.dataset_size.max(1);
    let bad = (cfg.corruption * n as f64).round() as usize;
    let data: Vec<Vec<usize>> = (0..n)
        .map(|i| match (i < bad, i % 2) {
            (true, 0) => vec![1, 1],
            (true, _) => vec![0, 0],
            (false, 0) => vec![0, 1],
            (false, _) => vec![1, 0],
        })
        .collect();
    let circuit = Arc::new(circuit);
    let check = circuit.clone();
    let check_cols = cols.clone();
    let probe: ProbeCheck = Arc::new(move |s: &[usize]| {
        let bits: Vec<bool> = check_cols.iter().map(|&c| s[c / 2] == 1).collect();
        check.check_bits(&bits).expect("arity checked at construction")
    });
    let layout = Layout::Bits;
    let mut m = meta(Task::XorToy, layout);
    m.insert("vars".into(), names.join(","));
    Ok(Prepared {
        task: Task::XorToy,
        layout,
        problem: TrainProblem {
            cells: 2,
            tiles: 2,
            data,
            penalty: Penalty::Direct {
                circuit: circuit.clone(),
                cols,
            },
            conditioning: None,
            probe,
            meta: m,
        },
        levels: Vec::new(),
        circuit: Some(circuit),
        phi: None,
        properties: Vec::new(),
    })
}

/// Compiles the pipe constraint, falling back to a smaller grid when the
/// requested one does not fit the budget.
pub fn compile_pipes(h: usize, w: usize, budget: usize) -> Result<(Circuit, usize, usize), ExperimentError> {
    match compile_with_budget(&build_pipe_constraint(h, w)?, budget) {
        Err(ExperimentError::Budget(_)) if h > FALLBACK_SIDE || w > FALLBACK_SIDE => {
            let (h, w) = (h.min(FALLBACK_SIDE), w.min(FALLBACK_SIDE));
            Ok((compile_with_budget(&build_pipe_constraint(h, w)?, budget)?, h, w))
        }
        r => Ok((r?, h, w)),
    }
}

fn grid_probe(circuit: Arc<Circuit>, cols: Vec<usize>) -> ProbeCheck {
    Arc::new(move |s: &[usize]| {
        let bits: Vec<bool> = cols.iter().map(|&c| s[c / NUM_TILES] == c % NUM_TILES).collect();
        circuit.check_bits(&bits).expect("arity checked at construction")
    })
}

fn to_rows(levels: &[GridLevel]) -> Vec<Vec<usize>> {
    levels.iter().map(GridLevel::tile_indices).collect()
}

fn prepare_pipes(cfg: &TrainConfig, budget: usize) -> Result<Prepared, ExperimentError> {
    let (circuit, h, w) = if cfg.constraint.is_empty() {
        compile_pipes(cfg.height, cfg.width, budget)?
    } else {
        (load_constraint(&cfg.constraint, budget)?, cfg.height, cfg.width)
    };
    let cols = columns_for(&circuit, &grid_var_names(h, w), 1, 0)?;
    let levels = load_levels(cfg, parse_style(&cfg.style)?, h, w)?;
    let circuit = Arc::new(circuit);
    let layout = Layout::Grid { height: h, width: w };
    Ok(Prepared {
        task: Task::Pipes,
        layout,
        problem: TrainProblem {
            cells: h * w,
            tiles: NUM_TILES,
            data: to_rows(&levels),
            penalty: Penalty::Direct {
                circuit: circuit.clone(),
                cols: cols.clone(),
            },
            conditioning: None,
            probe: grid_probe(circuit.clone(), cols),
            meta: meta(Task::Pipes, layout),
        },
        levels,
        circuit: Some(circuit),
        phi: None,
        properties: Vec::new(),
    })
}

fn prepare_reach(cfg: &TrainConfig, budget: usize) -> Result<Prepared, ExperimentError> {
    let (h, w) = (cfg.height, cfg.width);
    let levels = load_levels(cfg, parse_style(&cfg.style)?, h, w)?;
    let phi = train_phi(
        &levels,
        &PhiConfig {
            hidden: cfg.phi_hidden.clone(),
            epochs: cfg.phi_epochs,
            seed: cfg.seed,
            ..PhiConfig::default()
        },
    )?;
    let circuit = Arc::new(compile_with_budget(&build_reachability_constraint(h), budget)?);
    let layout = Layout::Grid { height: h, width: w };
    let mut m = meta(Task::Reachability, layout);
    m.insert("phi_accuracy".into(), format!("{:.6}", phi.heldout_accuracy));
    let probe: ProbeCheck = Arc::new(move |s: &[usize]| is_playable(&GridLevel::from_indices(h, w, s)));
    Ok(Prepared {
        task: Task::Reachability,
        layout,
        problem: TrainProblem {
            cells: h * w,
            tiles: NUM_TILES,
            data: to_rows(&levels),
            penalty: Penalty::Embedded {
                circuit: circuit.clone(),
                embedding: Embedding {
                    weights: phi.weights.clone(),
                    activation: phi.activation,
                },
                cols: (0..h).map(|r| r * w + w - 1).collect(),
            },
            conditioning: None,
            probe,
            meta: m,
        },
        levels,
        circuit: Some(circuit),
        phi: Some(phi),
        properties: Vec::new(),
    })
}

/// Some pipe top-left tile anywhere.
pub fn has_pipe(l: &GridLevel) -> bool {
    l.tiles().contains(&Tile::PipeTopLeft)
}

/// Some bottom-row cell is not solid.
pub fn has_bottom_gap(l: &GridLevel) -> bool {
    let r = l.height() - 1;
    (0..l.width()).any(|c| l.get(r, c) != Tile::Solid)
}

fn has_pipe_formula(h: usize, w: usize) -> Formula {
    let lits = (0..h * w).map(|cell| Expr::Var(cell * NUM_TILES + Tile::PipeTopLeft.index())).collect();
    Formula::new(Expr::any(lits), grid_var_names(h, w)).expect("grid variables are in range")
}

fn bottom_gap_formula(h: usize, w: usize) -> Formula {
    let lits = (0..w)
        .map(|c| Expr::not(Expr::Var(((h - 1) * w + c) * NUM_TILES + Tile::Solid.index())))
        .collect();
    Formula::new(Expr::any(lits), grid_var_names(h, w)).expect("grid variables are in range")
}

/// Pipe well-formedness conjoined with `(c_0 ↔ has-pipe) ∧ (c_1 ↔ bottom-gap)`.
fn prepare_conditional(cfg: &TrainConfig, budget: usize) -> Result<Prepared, ExperimentError> {
    let (h, w) = (cfg.height, cfg.width);
    let levels = load_levels(cfg, parse_style(&cfg.style)?, h, w)?;
    let properties: Vec<(String, fn(&GridLevel) -> bool)> =
        vec![("has_pipe".into(), has_pipe), ("bottom_gap".into(), has_bottom_gap)];
    let codes: Vec<Vec<bool>> = levels
        .iter()
        .map(|l| properties.iter().map(|(_, f)| f(l)).collect())
        .collect();
    let spec = ConditionalSpec::new(
        vec![
            ("has_pipe".into(), has_pipe_formula(h, w)),
            ("bottom_gap".into(), bottom_gap_formula(h, w)),
        ],
        vec!["c_has_pipe".into(), "c_bottom_gap".into()],
        CodePrior::from_codes(&codes)?,
    )?;
    let switchable = build_conditional(&spec)?;
    let pipes = build_pipe_constraint(h, w)?;
    let f = Formula::conjoin(&[&switchable, &pipes]);
    let circuit = Arc::new(compile_with_budget(&f, budget)?);
    let pipe_circuit = Arc::new(compile_with_budget(&pipes, budget)?);
    let layout = Layout::Grid { height: h, width: w };
    let k = spec.k();
    Ok(Prepared {
        task: Task::Conditional,
        layout,
        problem: TrainProblem {
            cells: h * w,
            tiles: NUM_TILES,
            data: to_rows(&levels),
            penalty: Penalty::Direct {
                circuit: circuit.clone(),
                cols: (0..h * w * NUM_TILES).collect(),
            },
            conditioning: Some(Conditioning {
                prior: spec.prior.clone(),
                code_vars: (0..k).collect(),
            }),
            probe: grid_probe(pipe_circuit, (0..h * w * NUM_TILES).collect()),
            meta: meta(Task::Conditional, layout),
        },
        levels,
        circuit: Some(circuit),
        phi: None,
        properties,
    })
}

/// Validity check for samples of a saved generator, rebuilt from the
/// weight-file header.
pub fn validity_from_header(header: &BTreeMap<String, String>, budget: usize) -> Result<ProbeCheck, ExperimentError> {
    let task: Task = header
        .get("task")
        .ok_or_else(|| ExperimentError::Input("weights carry no task".into()))?
        .parse()?;
    let dim = |k: &str| -> Result<usize, ExperimentError> {
        header
            .get(k)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| ExperimentError::Input(format!("weights carry no `{k}`")))
    };
    Ok(match task {
        Task::XorToy => {
            let c = Arc::new(compile_with_budget(&parse_dsl("x ^ y")?, budget)?);
            Arc::new(move |s: &[usize]| c.check_bits(&[s[0] == 1, s[1] == 1]).expect("two variables"))
        }
        Task::Pipes | Task::Conditional => {
            let (h, w) = (dim("height")?, dim("width")?);
            let c = Arc::new(compile_with_budget(&build_pipe_constraint(h, w)?, budget)?);
            grid_probe(c, (0..h * w * NUM_TILES).collect())
        }
        Task::Reachability => {
            let (h, w) = (dim("height")?, dim("width")?);
            Arc::new(move |s: &[usize]| is_playable(&GridLevel::from_indices(h, w, s)))
        }
    })
}

/// Text form of one sample: a level render, or `name=bit` pairs.
pub fn render_sample(header: &BTreeMap<String, String>, sample: &[usize]) -> String {
    let dims = header
        .get("height")
        .zip(header.get("width"))
        .and_then(|(h, w)| Some((h.parse::<usize>().ok()?, w.parse::<usize>().ok()?)));
    match dims {
        Some((h, w)) if h * w == sample.len() => GridLevel::from_indices(h, w, sample).to_text(),
        _ => {
            let names: Vec<String> = header
                .get("vars")
                .map(|v| v.split(',').map(String::from).collect())
                .unwrap_or_default();
            let parts: Vec<String> = sample
                .iter()
                .enumerate()
                .map(|(i, v)| match names.get(i) {
                    Some(n) => format!("{n}={v}"),
                    None => format!("v{}={v}", i + 1),
                })
                .collect();
            parts.join(" ") + "\n"
        }
    }
}

/// Renders of several samples; levels are separated by blank lines as in
/// level files, bit samples take one line each.
pub fn render_sheet(header: &BTreeMap<String, String>, samples: &[Vec<usize>]) -> String {
    let sep = if header.contains_key("height") { "\n" } else { "" };
    samples
        .iter()
        .map(|s| render_sample(header, s))
        .collect::<Vec<_>>()
        .join(sep)
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[cfg(test)]
mod tests;
