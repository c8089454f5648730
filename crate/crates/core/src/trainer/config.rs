//! Flat `key=value` training configuration.

use std::fmt::Write as _;
use std::str::FromStr;

use super::TrainError;
use crate::autodiff::Activation;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub task: String,
    pub epochs: usize,
    pub bootstrap_epochs: usize,
    pub ramp_epochs: usize,
    pub lambda_max: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Discriminator updates per generator update.
    pub d_steps: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub latent_dim: usize,
    pub g_hidden: Vec<usize>,
    pub d_hidden: Vec<usize>,
    pub g_activation: Activation,
    pub d_activation: Activation,
    pub probe_size: usize,
    pub height: usize,
    pub width: usize,
    pub dataset_size: usize,
    pub style: String,
    pub corruption: f64,
    /// Level file; synthesized from `style` when empty.
    pub dataset: String,
    /// Constraint file (DSL, DIMACS or circuit dump); the task's built-in
    /// constraint when empty.
    pub constraint: String,
    pub phi_epochs: usize,
    pub phi_hidden: Vec<usize>,
    pub sample_count: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            task: "pipes".into(),
            epochs: 300,
            bootstrap_epochs: 100,
            ramp_epochs: 100,
            lambda_max: 0.2,
            batch_size: 64,
            seed: 0,
            d_steps: 1,
            lr: 1e-3,
            beta1: 0.5,
            beta2: 0.999,
            latent_dim: 32,
            g_hidden: vec![128],
            d_hidden: vec![64],
            g_activation: Activation::Relu,
            d_activation: Activation::LeakyRelu,
            probe_size: 256,
            height: 8,
            width: 8,
            dataset_size: 1000,
            style: "pipes".into(),
            corruption: 0.0,
            dataset: String::new(),
            constraint: String::new(),
            phi_epochs: 300,
            phi_hidden: vec![128, 128],
            sample_count: 16,
        }
    }
}

fn list(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T, TrainError> {
    v.parse()
        .map_err(|_| TrainError::Config(format!("bad value `{v}` for `{key}`")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<usize>, TrainError> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|p| parse(key, p.trim())).collect()
}

impl TrainConfig {
    /// Parses `key=value` lines over the defaults. Blank lines and lines
    /// starting with `#` are skipped; unknown keys are errors.
    pub fn parse(text: &str) -> Result<TrainConfig, TrainError> {
        let mut c = TrainConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| TrainError::Config(format!("line {}: expected key=value", n + 1)))?;
            c.set(k.trim(), v.trim())?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn set(&mut self, k: &str, v: &str) -> Result<(), TrainError> {
        match k {
            "task" => self.task = v.into(),
            "epochs" => self.epochs = parse(k, v)?,
            "bootstrap_epochs" => self.bootstrap_epochs = parse(k, v)?,
            "ramp_epochs" => self.ramp_epochs = parse(k, v)?,
            "lambda_max" => self.lambda_max = parse(k, v)?,
            "batch_size" => self.batch_size = parse(k, v)?,
            "seed" => self.seed = parse(k, v)?,
            "d_steps" => self.d_steps = parse(k, v)?,
            "lr" => self.lr = parse(k, v)?,
            "beta1" => self.beta1 = parse(k, v)?,
            "beta2" => self.beta2 = parse(k, v)?,
            "latent_dim" => self.latent_dim = parse(k, v)?,
            "g_hidden" => self.g_hidden = parse_list(k, v)?,
            "d_hidden" => self.d_hidden = parse_list(k, v)?,
            "g_activation" => self.g_activation = v.parse().map_err(TrainError::Config)?,
            "d_activation" => self.d_activation = v.parse().map_err(TrainError::Config)?,
            "probe_size" => self.probe_size = parse(k, v)?,
            "height" => self.height = parse(k, v)?,
            "width" => self.width = parse(k, v)?,
            "dataset_size" => self.dataset_size = parse(k, v)?,
            "style" => self.style = v.into(),
            "corruption" => self.corruption = parse(k, v)?,
            "dataset" => self.dataset = v.into(),
            "constraint" => self.constraint = v.into(),
            "phi_epochs" => self.phi_epochs = parse(k, v)?,
            "phi_hidden" => self.phi_hidden = parse_list(k, v)?,
            "sample_count" => self.sample_count = parse(k, v)?,
            _ => return Err(TrainError::Config(format!("unknown key `{k}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |m: &str| Err(TrainError::Config(m.into()));
        if self.epochs > 0 && self.bootstrap_epochs + self.ramp_epochs > self.epochs {
            return fail("bootstrap_epochs + ramp_epochs exceeds epochs");
        }
        if !(self.lambda_max >= 0.0) {
            return fail("lambda_max must be non-negative");
        }
        if self.batch_size < 2 {
            return fail("batch_size must be at least 2");
        }
        if self.d_steps == 0 || self.latent_dim == 0 || self.probe_size == 0 {
            return fail("d_steps, latent_dim and probe_size must be positive");
        }
        if !(0.0..=1.0).contains(&self.corruption) {
            return fail("corruption must lie in [0, 1]");
        }
        Ok(())
    }

    /// Serialization read back by [`TrainConfig::parse`], one key per line
    /// in a fixed order.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k}={v}").expect("string write");
        kv("task", self.task.clone());
        kv("epochs", self.epochs.to_string());
        kv("bootstrap_epochs", self.bootstrap_epochs.to_string());
        kv("ramp_epochs", self.ramp_epochs.to_string());
        kv("lambda_max", self.lambda_max.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("seed", self.seed.to_string());
        kv("d_steps", self.d_steps.to_string());
        kv("lr", self.lr.to_string());
        kv("beta1", self.beta1.to_string());
        kv("beta2", self.beta2.to_string());
        kv("latent_dim", self.latent_dim.to_string());
        kv("g_hidden", list(&self.g_hidden));
        kv("d_hidden", list(&self.d_hidden));
        kv("g_activation", self.g_activation.to_string());
        kv("d_activation", self.d_activation.to_string());
        kv("probe_size", self.probe_size.to_string());
        kv("height", self.height.to_string());
        kv("width", self.width.to_string());
        kv("dataset_size", self.dataset_size.to_string());
        kv("style", self.style.clone());
        kv("corruption", self.corruption.to_string());
        kv("dataset", self.dataset.clone());
        kv("constraint", self.constraint.clone());
        kv("phi_epochs", self.phi_epochs.to_string());
        kv("phi_hidden", list(&self.phi_hidden));
        kv("sample_count", self.sample_count.to_string());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_errors() {
        let c = TrainConfig::parse("# demo\nepochs = 50\nbootstrap_epochs=10\nramp_epochs=10\ng_hidden=16,8\n").unwrap();
        assert_eq!(c.epochs, 50);
        assert_eq!(c.g_hidden, [16, 8]);
        assert_eq!(TrainConfig::parse(&c.to_kv()).unwrap(), c);
        assert!(TrainConfig::parse("nope=1").is_err());
        assert!(TrainConfig::parse("epochs").is_err());
        assert!(TrainConfig::parse("epochs=x").is_err());
        assert!(TrainConfig::parse("epochs=10").is_err());
        assert!(TrainConfig::parse("batch_size=1").is_err());
        assert!(TrainConfig::parse("epochs=0").is_ok());
    }
}
