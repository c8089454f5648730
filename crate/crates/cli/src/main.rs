//! `semgen`: compile constraints, evaluate losses, train and sample
//! generators, run paired experiments and render levels.
//!
//! Exit codes: 0 success, 1 user or input error, 2 node budget exceeded,
//! 3 internal failure.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use semgen::autodiff::{read_weights, WeightFile};
use semgen::circuit::{self, Circuit, CircuitError, CompileOptions, DEFAULT_NODE_BUDGET};
use semgen::experiment::{
    self, default_config, experiment_outputs, manifest, prepare_with_budget, render_sheet,
    run_experiment, train_outputs, validity_from_header, write_experiment, write_train_run,
    ExperimentError, Task,
};
use semgen::formula::{parse_dimacs, parse_dsl, Formula};
use semgen::gridworld::{parse_levels, reachable_tiles, GridLevel, ReachSpec, Tile};
use semgen::rng::seeded;
use semgen::semloss::{fuzzy_loss, fuzzy_truth, normal_form, semantic_loss, NormalForm, SemLossError};
use semgen::trainer::{Generator, TrainConfig, TrainError};

#[derive(Parser)]
#[command(name = "semgen", version, about = "Constrained adversarial generation of discrete structures")]
struct Cli {
    /// Seed for every stochastic step; overrides `seed` in config files.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Node budget for constraint compilation.
    #[arg(long, global = true, default_value_t = DEFAULT_NODE_BUDGET)]
    budget: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compile a constraint (DSL or DIMACS) and print circuit statistics.
    /// A compiled circuit dump is loaded and summarized as is.
    Compile {
        file: PathBuf,
        /// `natural`, `reverse`, or a comma-separated list of variable names.
        #[arg(long, default_value = "natural")]
        order: String,
        /// Write the compiled circuit here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Weighted model count of a constraint under marginals θ.
    Wmc {
        /// Constraint file (DSL, DIMACS or compiled circuit).
        file: PathBuf,
        #[command(flatten)]
        theta: ThetaArg,
        /// Also print ∂WMC/∂θ.
        #[arg(long)]
        gradient: bool,
    },
    /// Semantic loss (−ln WMC) and its gradient.
    Sl {
        file: PathBuf,
        #[command(flatten)]
        theta: ThetaArg,
        /// Łukasiewicz fuzzy loss of the canonical CNF or DNF encoding instead.
        #[arg(long, value_parser = ["cnf", "dnf"])]
        fuzzy: Option<String>,
    },
    /// Train one generator from a key=value config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Run directory.
        #[arg(long, default_value = "runs/train")]
        out: PathBuf,
    },
    /// Sample from saved generator weights.
    Sample {
        #[arg(long)]
        weights: PathBuf,
        #[arg(short, long, default_value_t = 1)]
        n: usize,
        /// Code bits for conditional generators, e.g. `10`.
        #[arg(long)]
        code: Option<String>,
        /// Keep only samples that pass the task's validity check.
        #[arg(long)]
        reject: bool,
        #[arg(long, default_value_t = 10_000)]
        max_attempts: usize,
    },
    /// Render levels from a level file, or samples from weights.
    Render {
        /// Level file.
        file: Option<PathBuf>,
        #[arg(long, conflicts_with = "file")]
        weights: Option<PathBuf>,
        #[arg(short, long, default_value_t = 1)]
        n: usize,
        /// Mark reachable empty cells `*` and the start cell `@`.
        #[arg(long)]
        annotate_reach: bool,
    },
    /// Paired GAN (λ = 0) and CAN runs: xor-toy, pipes, reachability, conditional.
    Experiment {
        name: String,
        /// Config overriding the task defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Extra `key=value` overrides, applied last.
        #[arg(long = "set")]
        set: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize a run directory.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
}

#[derive(clap::Args)]
#[group(required = true, multiple = false)]
struct ThetaArg {
    /// Comma-separated marginals in variable-table order.
    #[arg(long)]
    theta: Option<String>,
    /// File with one marginal per line.
    #[arg(long)]
    theta_file: Option<PathBuf>,
}

impl ThetaArg {
    fn values(&self) -> Result<Vec<f64>> {
        let joined;
        let text = match (&self.theta, &self.theta_file) {
            (Some(t), _) => t.as_str(),
            (None, Some(p)) => {
                joined = read(p)?
                    .lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty() && !l.starts_with('#'))
                    .collect::<Vec<_>>()
                    .join(",");
                joined.as_str()
            }
            (None, None) => bail!("give --theta or --theta-file"),
        };
        parse_theta(text)
    }
}

/// Failure carrying its exit code.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

fn classify(err: anyhow::Error) -> Failure {
    let mut code = 1;
    for cause in err.chain() {
        if matches!(cause.downcast_ref(), Some(ExperimentError::Budget(_)))
            || matches!(cause.downcast_ref(), Some(CircuitError::NodeBudget { .. }))
        {
            code = 2;
            break;
        }
        if matches!(cause.downcast_ref(), Some(TrainError::Divergence { .. })) {
            code = 3;
            break;
        }
    }
    Failure { code, err }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // usage errors are input errors here; clap's own code 2 means "budget"
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            let f = classify(e);
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
        Err(_) => ExitCode::from(3),
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("SEMGEN_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| anyhow!("SEMGEN_THREADS must be a positive integer, got `{v}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the worker pool")
}

fn run(cli: Cli) -> Result<()> {
    let budget = cli.budget;
    match cli.cmd {
        Cmd::Compile { file, order, out } => cmd_compile(&file, &order, out.as_deref(), budget),
        Cmd::Wmc { file, theta, gradient } => cmd_wmc(&file, &theta, gradient, budget),
        Cmd::Sl { file, theta, fuzzy } => cmd_sl(&file, &theta, fuzzy.as_deref(), budget),
        Cmd::Train { config, out } => cmd_train(&config, &out, cli.seed, budget),
        Cmd::Sample {
            weights,
            n,
            code,
            reject,
            max_attempts,
        } => cmd_sample(&weights, n, code.as_deref(), reject, max_attempts, cli.seed, budget),
        Cmd::Render {
            file,
            weights,
            n,
            annotate_reach,
        } => cmd_render(file.as_deref(), weights.as_deref(), n, annotate_reach, cli.seed),
        Cmd::Experiment { name, config, set, out } => {
            cmd_experiment(&name, config.as_deref(), &set, out.as_deref(), cli.seed, budget)
        }
        Cmd::Report { run } => cmd_report(&run),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn parse_formula(text: &str) -> Result<Formula> {
    let dimacs = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('c'))
        .is_some_and(|l| l.starts_with("p "));
    Ok(if dimacs { parse_dimacs(text)? } else { parse_dsl(text)? })
}

fn load_circuit(path: &Path, budget: usize) -> Result<Circuit> {
    experiment::constraint_from_text(&read(path)?, budget)
        .with_context(|| format!("loading constraint {}", path.display()))
}

fn parse_theta(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            let v: f64 = p.trim().parse().with_context(|| format!("bad marginal `{p}`"))?;
            if !(0.0..=1.0).contains(&v) {
                bail!("marginal {v} is outside [0, 1]");
            }
            Ok(v)
        })
        .collect()
}

fn parse_order(order: &str, f: &Formula) -> Result<Option<Vec<usize>>> {
    let n = f.num_vars();
    Ok(match order {
        "natural" => None,
        "reverse" => Some((0..n).rev().collect()),
        list => Some(
            list.split(',')
                .map(|name| {
                    f.var_index(name.trim())
                        .ok_or_else(|| anyhow!("unknown variable `{name}` in --order"))
                })
                .collect::<Result<_>>()?,
        ),
    })
}

fn cmd_compile(file: &Path, order: &str, out: Option<&Path>, budget: usize) -> Result<()> {
    let text = read(file)?;
    let c = if text.trim_start().starts_with("semgen-circuit") {
        if order != "natural" {
            bail!("--order cannot reorder an already compiled circuit");
        }
        circuit::load(&text).with_context(|| format!("loading {}", file.display()))?
    } else {
        let f = parse_formula(&text).with_context(|| format!("parsing {}", file.display()))?;
        let opts = CompileOptions {
            order: parse_order(order, &f)?,
            node_budget: budget,
        };
        circuit::compile(&f, &opts)?
    };
    let s = c.stats();
    println!("nodes {}", s.nodes);
    println!("vars {}", s.vars);
    println!("depth {}", s.depth);
    println!("models {}", s.models);
    if c.is_false() {
        eprintln!("warning: constraint is unsatisfiable");
    }
    if let Some(out) = out {
        fs::write(out, circuit::dump(&c)).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}

fn join(v: &[f64]) -> String {
    // `+ 0.0` turns −0 into 0
    v.iter().map(|x| (x + 0.0).to_string()).collect::<Vec<_>>().join(",")
}

fn cmd_wmc(file: &Path, theta: &ThetaArg, gradient: bool, budget: usize) -> Result<()> {
    let c = load_circuit(file, budget)?;
    let theta = theta.values()?;
    if gradient {
        let g = c.wmc_and_gradient(&theta)?;
        println!("wmc {}", g.value);
        println!("gradient {}", join(&g.gradient));
    } else {
        println!("wmc {}", c.wmc(&theta)?);
    }
    Ok(())
}

fn cmd_sl(file: &Path, theta: &ThetaArg, fuzzy: Option<&str>, budget: usize) -> Result<()> {
    let theta = theta.values()?;
    if let Some(form) = fuzzy {
        let form = if form == "cnf" { NormalForm::Cnf } else { NormalForm::Dnf };
        let f = normal_form(&parse_formula(&read(file)?)?, form)?;
        let truth = fuzzy_truth(&f, &theta)?;
        println!("truth {}", truth + 0.0);
        match fuzzy_loss(&f, &theta) {
            Ok(l) => println!("fuzzy_loss {}", l + 0.0),
            Err(SemLossError::Infeasible) => println!("fuzzy_loss inf"),
            Err(e) => return Err(e.into()),
        }
        return Ok(());
    }
    let c = load_circuit(file, budget)?;
    match semantic_loss(&c, &theta) {
        Ok(l) => {
            println!("sl {}", l.value + 0.0);
            println!("gradient {}", join(&l.gradient));
            Ok(())
        }
        Err(SemLossError::Infeasible) => bail!("θ gives the constraint zero probability (semantic loss is infinite)"),
        Err(e) => Err(e.into()),
    }
}

fn load_config(path: Option<&Path>, base: TrainConfig, sets: &[String], seed: Option<u64>) -> Result<TrainConfig> {
    let mut cfg = base;
    if let Some(p) = path {
        for (n, line) in read(p)?.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{}:{}: expected key=value", p.display(), n + 1))?;
            cfg.set(k.trim(), v.trim())?;
        }
    }
    for s in sets {
        let (k, v) = s.split_once('=').ok_or_else(|| anyhow!("--set expects key=value, got `{s}`"))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_manifest(dir: &Path, command: &str, cfg: &TrainConfig, outputs: &[String]) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut all = vec!["manifest.txt".to_string()];
    all.extend_from_slice(outputs);
    fs::write(dir.join("manifest.txt"), manifest(command, cfg, &all)).context("writing manifest")?;
    Ok(())
}

fn cmd_train(config: &Path, out: &Path, seed: Option<u64>, budget: usize) -> Result<()> {
    let text = read(config)?;
    let mut cfg = TrainConfig::parse(&text)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let task: Task = cfg.task.parse()?;
    write_manifest(out, "train", &cfg, &train_outputs(task))?;
    let p = prepare_with_budget(&cfg, budget)?;
    let arm = write_train_run(out, &cfg, &p)?;
    println!(
        "{}: final probe validity {:.4}, eval validity {:.4}",
        out.display(),
        arm.report.final_validity().unwrap_or(f64::NAN),
        arm.eval.metrics.validity
    );
    Ok(())
}

fn load_weights(path: &Path) -> Result<WeightFile<f64>> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    read_weights(&mut bytes.as_slice()).with_context(|| format!("loading weights {}", path.display()))
}

fn parse_code(s: &str) -> Result<Vec<bool>> {
    s.chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            _ => bail!("code must be a string of 0/1, got `{s}`"),
        })
        .collect()
}

fn cmd_sample(
    weights: &Path,
    n: usize,
    code: Option<&str>,
    reject: bool,
    max_attempts: usize,
    seed: Option<u64>,
    budget: usize,
) -> Result<()> {
    let w = load_weights(weights)?;
    let mut g = Generator::from_weights(&w)?;
    let code = code.map(parse_code).transpose()?;
    let mut rng = seeded(seed.unwrap_or(0));
    let samples = if reject {
        let check = validity_from_header(&w.header, budget)?;
        let r = g.rejection_sample(n, code.as_deref(), max_attempts, &mut rng, |s| check(s))?;
        eprintln!(
            "accepted {} of {} attempts{}",
            r.samples.len(),
            r.attempts,
            if r.exhausted { " (attempts exhausted)" } else { "" }
        );
        r.samples
    } else {
        g.sample(n, code.as_deref(), &mut rng)?
    };
    print!("{}", render_sheet(&w.header, &samples));
    Ok(())
}

fn sheet(items: impl Iterator<Item = String>) -> String {
    items.collect::<Vec<_>>().join("\n")
}

/// Level text with reachable empty cells as `*` and the start cell as `@`.
fn annotate(l: &GridLevel) -> String {
    let reach = reachable_tiles(l, &ReachSpec::default());
    let mut s = format!("{} {}\n", l.height(), l.width());
    for r in 0..l.height() {
        for c in 0..l.width() {
            let t = l.get(r, c);
            s.push(if reach.start == Some((r, c)) {
                '@'
            } else if reach.get(r, c) && t == Tile::Empty {
                '*'
            } else {
                t.to_char()
            });
        }
        s.push('\n');
    }
    s
}

fn cmd_render(file: Option<&Path>, weights: Option<&Path>, n: usize, annotate_reach: bool, seed: Option<u64>) -> Result<()> {
    let levels = match (file, weights) {
        (Some(f), _) => parse_levels(&read(f)?).with_context(|| format!("parsing {}", f.display()))?,
        (None, Some(wp)) => {
            let w = load_weights(wp)?;
            let dims = |k: &str| -> Result<usize> {
                w.header
                    .get(k)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| anyhow!("weights are not a grid generator (no `{k}`)"))
            };
            let (h, wd) = (dims("height")?, dims("width")?);
            let mut g = Generator::from_weights(&w)?;
            let code = (g.spec.code > 0).then(|| vec![false; g.spec.code]);
            g.sample(n, code.as_deref(), &mut seeded(seed.unwrap_or(0)))?
                .iter()
                .map(|s| GridLevel::from_indices(h, wd, s))
                .collect()
        }
        (None, None) => bail!("render needs a level file or --weights"),
    };
    let render = |l: &GridLevel| if annotate_reach { annotate(l) } else { l.to_text() };
    print!("{}", sheet(levels.iter().map(render)));
    Ok(())
}

fn cmd_experiment(
    name: &str,
    config: Option<&Path>,
    sets: &[String],
    out: Option<&Path>,
    seed: Option<u64>,
    budget: usize,
) -> Result<()> {
    let task: Task = name.parse()?;
    let cfg = load_config(config, default_config(task), sets, seed)?;
    if cfg.task != task.to_string() {
        bail!("config task `{}` does not match experiment `{task}`", cfg.task);
    }
    let dir = out.map_or_else(|| PathBuf::from(format!("runs/{task}-seed{}", cfg.seed)), Path::to_path_buf);
    write_manifest(&dir, &format!("experiment {task}"), &cfg, &experiment_outputs(task))?;
    let p = prepare_with_budget(&cfg, budget)?;
    if let Some(phi) = &p.phi {
        eprintln!(
            "phi held-out accuracy {:.4} (majority rate {:.4}){}",
            phi.heldout_accuracy,
            phi.majority_rate,
            if phi.degenerate { ", single-class labels" } else { "" }
        );
    }
    let r = run_experiment(&cfg, &p)?;
    write_experiment(&dir, &r, &p)?;
    print!("{}", r.comparison_csv());
    Ok(())
}

fn parse_csv(text: &str) -> Result<(Vec<String>, Vec<BTreeMap<String, String>>)> {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| anyhow!("empty CSV"))?
        .split(',')
        .map(String::from)
        .collect();
    let rows = lines
        .filter(|l| !l.is_empty())
        .map(|l| header.iter().cloned().zip(l.split(',').map(String::from)).collect())
        .collect();
    Ok((header, rows))
}

fn cmd_report(run: &Path) -> Result<()> {
    let comparison = run.join("comparison.csv");
    if comparison.exists() {
        let (header, rows) = parse_csv(&read(&comparison)?)?;
        println!("{}", header.join("\t"));
        for r in &rows {
            println!("{}", header.iter().map(|h| r[h].as_str()).collect::<Vec<_>>().join("\t"));
        }
        let adherence = run.join("adherence.csv");
        if adherence.exists() {
            print!("\n{}", read(&adherence)?);
        }
        return Ok(());
    }
    let report = run.join("report.csv");
    if !report.exists() {
        bail!("{} holds neither comparison.csv nor report.csv", run.display());
    }
    let (_, rows) = parse_csv(&read(&report)?)?;
    let Some(last) = rows.last() else {
        println!("epochs 0");
        return Ok(());
    };
    let validity: Vec<f64> = rows.iter().filter_map(|r| r["validity"].parse().ok()).collect();
    let tail = &validity[validity.len() - validity.len().div_ceil(10)..];
    println!("epochs {}", rows.len());
    println!("final lambda {}", last["lambda"]);
    println!("final d_loss {}", last["d_loss"]);
    println!("final g_loss {}", last["g_loss"]);
    println!("final sl {}", last["sl"]);
    println!("final probe validity {}", last["validity"]);
    println!("mean probe validity (last 10%) {:.6}", tail.iter().sum::<f64>() / tail.len() as f64);
    Ok(())
}
