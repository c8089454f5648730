//! Paired runs, evaluation and run directories.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{io_err, render_sheet, ExperimentError, Layout, Prepared, Task};
use crate::autodiff::{write_weights, WeightFile};
use crate::gridworld::{is_playable, metrics_with, GridLevel, Metrics, METRICS_CSV_HEADER};
use crate::rng::derived;
use crate::trainer::{train, Generator, TrainConfig, TrainReport};

/// Samples drawn per arm for the final evaluation.
pub const EVAL_SAMPLES: usize = 512;
/// Samples per code when measuring property adherence.
pub const ADHERENCE_SAMPLES: usize = 256;

pub const COMPARISON_CSV_HEADER: &str =
    "arm,seed,lambda_max,validity,novelty,uniqueness,diversity,pipe_tiles,playability,final_probe_validity";

#[derive(Clone, Debug, PartialEq)]
pub struct Adherence {
    pub property: String,
    pub code_bit: bool,
    /// Valid samples drawn with this bit set.
    pub valid_samples: usize,
    /// Share of those whose property value equals the bit.
    pub rate: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub metrics: Metrics,
    /// Share of samples the reachability oracle accepts (NaN for bit tasks).
    pub playability: f64,
    pub adherence: Vec<Adherence>,
}

pub struct ArmResult {
    pub arm: &'static str,
    pub lambda_max: f64,
    pub report: TrainReport,
    pub weights: WeightFile<f64>,
    pub eval: Evaluation,
    pub samples: Vec<Vec<usize>>,
}

pub struct ExperimentResult {
    pub task: Task,
    pub config: TrainConfig,
    pub gan: ArmResult,
    pub can: ArmResult,
}

fn bits_metrics(samples: &[Vec<usize>], data: &[Vec<usize>], valid: impl Fn(&[usize]) -> bool) -> Metrics {
    use std::collections::HashSet;
    let n = samples.len() as f64;
    let known: HashSet<&Vec<usize>> = data.iter().collect();
    let ok: Vec<&Vec<usize>> = samples.iter().filter(|s| valid(s)).collect();
    let novel = ok.iter().filter(|s| !known.contains(**s)).count();
    let distinct: HashSet<&Vec<usize>> = ok.iter().copied().collect();
    let mut diff = 0usize;
    for i in 0..samples.len() {
        for j in i + 1..samples.len() {
            diff += samples[i].iter().zip(&samples[j]).filter(|(a, b)| a != b).count();
        }
    }
    let pairs = samples.len() * samples.len().saturating_sub(1) / 2;
    let len = samples.first().map_or(1, Vec::len) * 2;
    Metrics {
        validity: ok.len() as f64 / n,
        novelty: if ok.is_empty() { 0.0 } else { novel as f64 / ok.len() as f64 },
        uniqueness: distinct.len() as f64 / n,
        diversity: if pairs == 0 { 0.0 } else { 2.0 * diff as f64 / pairs as f64 / len as f64 },
        pipe_tiles_per_level: 0.0,
        no_valid_samples: ok.is_empty(),
    }
}

fn all_codes(k: usize) -> Vec<Vec<bool>> {
    (0..1usize << k)
        .map(|m| (0..k).map(|i| m >> (k - 1 - i) & 1 == 1).collect())
        .collect()
}

/// Draws fresh samples from `weights` and scores them. Conditional
/// generators are sampled under every code, equally often.
pub fn evaluate(
    p: &Prepared,
    weights: &WeightFile<f64>,
    seed: u64,
) -> Result<(Evaluation, Vec<Vec<usize>>), ExperimentError> {
    let mut g = Generator::from_weights(weights)?;
    let mut rng = derived(seed, 4);
    let k = g.spec.code;
    let mut samples = Vec::new();
    let mut adherence = Vec::new();
    if k == 0 {
        samples = g.sample(EVAL_SAMPLES, None, &mut rng)?;
    } else {
        let mut per_code = Vec::new();
        for code in all_codes(k) {
            let s = g.sample(ADHERENCE_SAMPLES, Some(&code), &mut rng)?;
            samples.extend(s.iter().cloned());
            per_code.push((code, s));
        }
        if let Layout::Grid { height, width } = p.layout {
            for (i, (name, prop)) in p.properties.iter().enumerate() {
                for bit in [true, false] {
                    let (mut valid, mut hit) = (0usize, 0usize);
                    for (_, s) in per_code.iter().filter(|(c, _)| c[i] == bit) {
                        for x in s.iter().filter(|x| p.is_valid(x)) {
                            valid += 1;
                            if prop(&GridLevel::from_indices(height, width, x)) == bit {
                                hit += 1;
                            }
                        }
                    }
                    adherence.push(Adherence {
                        property: name.clone(),
                        code_bit: bit,
                        valid_samples: valid,
                        rate: if valid == 0 { 0.0 } else { hit as f64 / valid as f64 },
                    });
                }
            }
        }
    }
    let (metrics, playability) = match p.layout {
        Layout::Bits => (bits_metrics(&samples, &p.problem.data, |s| p.is_valid(s)), f64::NAN),
        Layout::Grid { height, width } => {
            let levels: Vec<GridLevel> =
                samples.iter().map(|s| GridLevel::from_indices(height, width, s)).collect();
            let m = metrics_with(&levels, &p.levels, |l| p.is_valid(&l.tile_indices()))
                .map_err(|e| ExperimentError::Input(e.to_string()))?;
            let playable = levels.iter().filter(|l| is_playable(l)).count();
            (m, playable as f64 / levels.len() as f64)
        }
    };
    Ok((
        Evaluation {
            metrics,
            playability,
            adherence,
        },
        samples,
    ))
}

fn run_arm(p: &Prepared, cfg: &TrainConfig, arm: &'static str) -> Result<ArmResult, ExperimentError> {
    let out = train(cfg, &p.problem)?;
    let (eval, samples) = evaluate(p, &out.generator, cfg.seed)?;
    Ok(ArmResult {
        arm,
        lambda_max: cfg.lambda_max,
        report: out.report,
        weights: out.generator,
        eval,
        samples,
    })
}

/// Trains the baseline and the constrained model on the same problem.
pub fn run_experiment(cfg: &TrainConfig, p: &Prepared) -> Result<ExperimentResult, ExperimentError> {
    let gan_cfg = TrainConfig {
        lambda_max: 0.0,
        ..cfg.clone()
    };
    Ok(ExperimentResult {
        task: p.task,
        config: cfg.clone(),
        gan: run_arm(p, &gan_cfg, "gan")?,
        can: run_arm(p, cfg, "can")?,
    })
}

impl ArmResult {
    pub fn csv_row(&self, seed: u64) -> String {
        let m = &self.eval.metrics;
        format!(
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.arm,
            seed,
            self.lambda_max,
            m.validity,
            m.novelty,
            m.uniqueness,
            m.diversity,
            m.pipe_tiles_per_level,
            self.eval.playability,
            self.report.final_validity().unwrap_or(f64::NAN),
        )
    }
}

impl ExperimentResult {
    pub fn comparison_csv(&self) -> String {
        let s = self.config.seed;
        format!(
            "{COMPARISON_CSV_HEADER}\n{}\n{}\n",
            self.gan.csv_row(s),
            self.can.csv_row(s)
        )
    }

    pub fn adherence_csv(&self) -> String {
        let mut s = String::from("arm,property,code_bit,valid_samples,adherence\n");
        for arm in [&self.gan, &self.can] {
            for a in &arm.eval.adherence {
                writeln!(
                    s,
                    "{},{},{},{},{:.6}",
                    arm.arm, a.property, a.code_bit as u8, a.valid_samples, a.rate
                )
                .expect("string write");
            }
        }
        s
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), ExperimentError> {
    fs::write(path, bytes).map_err(io_err(path))
}

fn weights_bytes(w: &WeightFile<f64>) -> Vec<u8> {
    let mut buf = Vec::new();
    write_weights(&mut buf, w).expect("writing to memory");
    buf
}

fn sample_sheet(w: &WeightFile<f64>, samples: &[Vec<usize>], n: usize) -> String {
    render_sheet(&w.header, &samples[..n.min(samples.len())])
}

fn write_arm(dir: &Path, arm: &ArmResult, n_render: usize, layout: Layout) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write(&dir.join("report.csv"), arm.report.to_csv())?;
    write(&dir.join("weights.bin"), weights_bytes(&arm.weights))?;
    write(&dir.join("samples.txt"), sample_sheet(&arm.weights, &arm.samples, n_render))?;
    if let Layout::Grid { .. } = layout {
        write(
            &dir.join("metrics.csv"),
            format!("{METRICS_CSV_HEADER}\n{}\n", arm.eval.metrics.csv_row()),
        )?;
    }
    Ok(())
}

/// Files a paired experiment writes, relative to the run directory.
pub fn experiment_outputs(task: Task) -> Vec<String> {
    let mut v: Vec<String> = vec!["config.txt".into(), "comparison.csv".into()];
    for arm in ["gan", "can"] {
        for f in ["report.csv", "weights.bin", "samples.txt"] {
            v.push(format!("{arm}/{f}"));
        }
        if task != Task::XorToy {
            v.push(format!("{arm}/metrics.csv"));
        }
    }
    match task {
        Task::Conditional => v.push("adherence.csv".into()),
        Task::Reachability => v.push("phi.bin".into()),
        _ => {}
    }
    v
}

pub fn write_experiment(dir: &Path, r: &ExperimentResult, p: &Prepared) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write(&dir.join("config.txt"), r.config.to_kv())?;
    write(&dir.join("comparison.csv"), r.comparison_csv())?;
    let n = r.config.sample_count;
    write_arm(&dir.join("gan"), &r.gan, n, p.layout)?;
    write_arm(&dir.join("can"), &r.can, n, p.layout)?;
    if r.task == Task::Conditional {
        write(&dir.join("adherence.csv"), r.adherence_csv())?;
    }
    if let Some(phi) = &p.phi {
        write(&dir.join("phi.bin"), weights_bytes(&phi.weights))?;
    }
    Ok(())
}

/// Files a single training run writes.
pub fn train_outputs(task: Task) -> Vec<String> {
    let mut v: Vec<String> = ["config.txt", "report.csv", "weights.bin", "samples.txt"]
        .into_iter()
        .map(String::from)
        .collect();
    if task != Task::XorToy {
        v.push("metrics.csv".into());
    }
    v
}

/// Single run (`lambda_max` as configured) written to `dir`.
pub fn write_train_run(dir: &Path, cfg: &TrainConfig, p: &Prepared) -> Result<ArmResult, ExperimentError> {
    let arm = run_arm(p, cfg, if cfg.lambda_max > 0.0 { "can" } else { "gan" })?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write(&dir.join("config.txt"), cfg.to_kv())?;
    write_arm(dir, &arm, cfg.sample_count, p.layout)?;
    Ok(arm)
}

/// Run manifest, written before any computation.
pub fn manifest(command: &str, cfg: &TrainConfig, outputs: &[String]) -> String {
    let started = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    let mut s = String::new();
    writeln!(s, "command={command}").unwrap();
    writeln!(s, "version=semgen {}", env!("CARGO_PKG_VERSION")).unwrap();
    writeln!(s, "seed={}", cfg.seed).unwrap();
    writeln!(s, "config=config.txt").unwrap();
    writeln!(s, "started_unix={started}").unwrap();
    for o in outputs {
        writeln!(s, "output={o}").unwrap();
    }
    s
}
