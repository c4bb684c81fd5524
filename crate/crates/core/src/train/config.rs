//! Line-based `key = value` configuration.
//!
//! ```text
//! # desk-scale run
//! epochs = 100
//! lr = 0.01
//! seeds = 11, 22, 33
//! ```

use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::optim::AdamConfig;
use crate::error::{Error, Result};
use crate::features::selection::{DEFAULT_K_SEL, DEFAULT_MI_BINS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub dropout: f64,
    pub grad_clip_norm: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_every: usize,
    pub seeds: Vec<u64>,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr: 0.001,
            batch_size: 64,
            dropout: 0.0,
            grad_clip_norm: 1.0,
            lr_decay_factor: 0.95,
            lr_decay_every: 10,
            seeds: vec![11, 22, 33],
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be a finite value >= 0", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.grad_clip_norm > 0.0) {
            return Err(Error::Config("grad_clip_norm must be positive".into()));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0) || self.lr_decay_every == 0 {
            return Err(Error::Config("lr decay needs factor in (0, 1] and every >= 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        Ok(())
    }
}

/// Everything one protocol run needs besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    pub dataset: String,
    /// Window length `k`.
    pub window: usize,
    pub k_sel: usize,
    pub mi_bins: usize,
    pub hidden_dim: usize,
    pub n_qubits: usize,
    pub n_layers: usize,
    pub noise_p: f64,
    pub train_fraction: f64,
    pub split_seed: u64,
    /// Nominal capacity in Ah, used when extracting from raw records.
    pub q_nom: f64,
    pub exclude_cells: Vec<String>,
    pub qubit_grid: Vec<usize>,
    pub noise_grid: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            dataset: "synthetic".into(),
            window: 10,
            k_sel: DEFAULT_K_SEL,
            mi_bins: DEFAULT_MI_BINS,
            hidden_dim: 8,
            n_qubits: 4,
            n_layers: 1,
            noise_p: 0.0,
            train_fraction: 0.8,
            split_seed: 0,
            q_nom: 1.1,
            exclude_cells: Vec::new(),
            qubit_grid: vec![4, 6, 8, 10, 12],
            noise_grid: vec![0.0, 0.01, 0.02, 0.05],
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("cannot parse '{v}' for key '{key}'")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

impl ExperimentConfig {
    /// Defaults overridden by the `key = value` lines of `text`. Blank lines
    /// and `#` comments are ignored; unknown keys are an error.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            c.set(key.trim(), value.trim())?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "epochs" => t.epochs = parse(key, v)?,
            "lr" => t.lr = parse(key, v)?,
            "batch_size" => t.batch_size = parse(key, v)?,
            "dropout" => t.dropout = parse(key, v)?,
            "grad_clip_norm" => t.grad_clip_norm = parse(key, v)?,
            "lr_decay_factor" => t.lr_decay_factor = parse(key, v)?,
            "lr_decay_every" => t.lr_decay_every = parse(key, v)?,
            "seeds" => t.seeds = parse_list(key, v)?,
            "adam_beta1" => t.adam.beta1 = parse(key, v)?,
            "adam_beta2" => t.adam.beta2 = parse(key, v)?,
            "adam_eps" => t.adam.eps = parse(key, v)?,
            "dataset" => self.dataset = v.to_string(),
            "window" => self.window = parse(key, v)?,
            "k_sel" => self.k_sel = parse(key, v)?,
            "mi_bins" => self.mi_bins = parse(key, v)?,
            "hidden_dim" => self.hidden_dim = parse(key, v)?,
            "n_qubits" => self.n_qubits = parse(key, v)?,
            "n_layers" => self.n_layers = parse(key, v)?,
            "noise_p" => self.noise_p = parse(key, v)?,
            "train_fraction" => self.train_fraction = parse(key, v)?,
            "split_seed" => self.split_seed = parse(key, v)?,
            "q_nom" => self.q_nom = parse(key, v)?,
            "exclude_cells" => self.exclude_cells = parse_list(key, v)?,
            "qubit_grid" => self.qubit_grid = parse_list(key, v)?,
            "noise_grid" => self.noise_grid = parse_list(key, v)?,
            _ => return Err(Error::Config(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.window == 0 || self.hidden_dim == 0 || self.n_layers == 0 {
            return Err(Error::Config("window, hidden_dim and n_layers must be positive".into()));
        }
        if !(self.q_nom > 0.0) {
            return Err(Error::Config("q_nom must be positive".into()));
        }
        Ok(())
    }
}
