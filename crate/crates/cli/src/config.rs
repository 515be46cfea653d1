//! INI-style configuration: `[section]` headers and `key = value` lines.
//! `#` and `;` start comments. Unknown sections and keys are errors.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use prak_core::am::Optimizer;
use prak_core::decoder::DecoderConfig;
use prak_core::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub dither: bool,
    pub hidden_dims: Vec<usize>,
    pub optimizer: Optimizer,
    pub decoder: DecoderConfig,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub passes_per_epoch: usize,
    pub train_seed: u64,
    pub change_threshold: f64,
    pub inventory: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    pub model: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            dither: false,
            hidden_dims: t.hidden_dims,
            optimizer: t.optimizer,
            decoder: DecoderConfig::default(),
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            passes_per_epoch: t.passes_per_epoch,
            train_seed: t.seed,
            change_threshold: t.change_threshold,
            inventory: None,
            rules: None,
            model: None,
        }
    }
}

fn parse_bool(v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => bail!("expected a boolean, got {v:?}"),
    }
}

fn parse_num<T: std::str::FromStr>(v: &str) -> Result<T>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    v.parse::<T>().with_context(|| format!("bad number {v:?}"))
}

/// An empty value clears the path.
fn path_value(v: &str, base: &Path) -> Option<PathBuf> {
    (!v.is_empty()).then(|| base.join(v))
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base).with_context(|| format!("config {}", path.display()))
    }

    /// Relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = Config::default();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split(['#', ';']).next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let lineno = i + 1;
            if let Some(name) = line.strip_prefix('[') {
                let Some(name) = name.strip_suffix(']') else {
                    bail!("line {lineno}: unterminated section header");
                };
                section = name.trim().to_string();
                if !["mfcc", "am", "decoder", "trainer", "paths"].contains(&section.as_str()) {
                    bail!("line {lineno}: unknown section [{section}]");
                }
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("line {lineno}: expected key = value");
            };
            let (key, value) = (key.trim(), value.trim());
            cfg.set(&section, key, value, base)
                .with_context(|| format!("line {lineno}: [{section}] {key}"))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, section: &str, key: &str, v: &str, base: &Path) -> Result<()> {
        match (section, key) {
            ("mfcc", "dither") => self.dither = parse_bool(v)?,
            ("am", "hidden_dims") => {
                self.hidden_dims = v
                    .split(',')
                    .map(|d| parse_num(d.trim()))
                    .collect::<Result<_>>()?
            }
            ("am", "optimizer") => {
                self.optimizer = match v {
                    "adam" => Optimizer::default(),
                    "sgd" => Optimizer::Sgd,
                    _ => bail!("expected adam or sgd, got {v:?}"),
                }
            }
            ("decoder", "alpha") => self.decoder.alpha = parse_num(v)?,
            ("decoder", "min_duration") => self.decoder.min_duration = parse_num(v)?,
            ("trainer", "epochs") => self.epochs = parse_num(v)?,
            ("trainer", "learning_rate") => self.learning_rate = parse_num(v)?,
            ("trainer", "batch_size") => self.batch_size = parse_num(v)?,
            ("trainer", "passes_per_epoch") => self.passes_per_epoch = parse_num(v)?,
            ("trainer", "seed") => self.train_seed = parse_num(v)?,
            ("trainer", "change_threshold") => self.change_threshold = parse_num(v)?,
            ("paths", "inventory") => self.inventory = path_value(v, base),
            ("paths", "rules") => self.rules = path_value(v, base),
            ("paths", "model") => self.model = path_value(v, base),
            ("", _) => bail!("key outside any section"),
            _ => bail!("unknown key"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.decoder.min_duration) {
            bail!("min_duration must be 1, 2 or 3");
        }
        if !self.decoder.alpha.is_finite() || self.decoder.alpha < 0.0 {
            bail!("alpha must be a non-negative number");
        }
        if self.hidden_dims.contains(&0) {
            bail!("hidden layer sizes must be positive");
        }
        if self.batch_size == 0 || self.passes_per_epoch == 0 {
            bail!("batch_size and passes_per_epoch must be positive");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            bail!("learning_rate must be a non-negative number");
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            passes_per_epoch: self.passes_per_epoch,
            seed: self.train_seed,
            change_threshold: self.change_threshold,
            alpha: self.decoder.alpha,
            min_duration: self.decoder.min_duration,
            optimizer: self.optimizer,
            hidden_dims: self.hidden_dims.clone(),
            ..TrainConfig::default()
        }
    }
}

impl fmt::Display for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let path = |p: &Option<PathBuf>| p.as_ref().map_or(String::new(), |p| p.display().to_string());
        let dims: Vec<String> = self.hidden_dims.iter().map(|d| d.to_string()).collect();
        writeln!(f, "[mfcc]\ndither = {}", self.dither)?;
        writeln!(
            f,
            "[am]\nhidden_dims = {}\noptimizer = {}",
            dims.join(","),
            match self.optimizer {
                Optimizer::Sgd => "sgd",
                Optimizer::Adam { .. } => "adam",
            }
        )?;
        writeln!(
            f,
            "[decoder]\nalpha = {}\nmin_duration = {}",
            self.decoder.alpha, self.decoder.min_duration
        )?;
        writeln!(
            f,
            "[trainer]\nepochs = {}\nlearning_rate = {}\nbatch_size = {}\npasses_per_epoch = {}\nseed = {}\nchange_threshold = {}",
            self.epochs, self.learning_rate, self.batch_size, self.passes_per_epoch, self.train_seed, self.change_threshold
        )?;
        write!(
            f,
            "[paths]\ninventory = {}\nrules = {}\nmodel = {}",
            path(&self.inventory),
            path(&self.rules),
            path(&self.model)
        )
    }
}
