//! Flat `key = value` configuration.
//!
//! Lines are `key = value`, blank, or `#` comments. Keys are dotted
//! (`replay.strategy`) and unknown keys are rejected. Sources are applied in
//! order so later ones win: built-in defaults, then the file, then
//! command-line overrides.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::eventlog::{SynthSpec, SynthStep};
use crate::trainer::TrainingConfig;

/// Where the event table comes from.
#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    /// `None` means generate a synthetic table from `synth.*`.
    pub path: Option<PathBuf>,
    pub delimiter: u8,
    pub has_header: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            path: None,
            delimiter: b',',
            has_header: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub synth: SynthSpec,
    pub training: TrainingConfig,
}

/// Every accepted key, in snapshot order.
pub const KEYS: &[&str] = &[
    "seed",
    "data.path",
    "data.delimiter",
    "data.has_header",
    "synth.n_cases",
    "synth.process",
    "synth.noise_columns",
    "synth.noise_rate",
    "synth.noise_vocab",
    "synth.resources",
    "synth.resource_affinity",
    "env.param_grid_start",
    "env.param_grid_stop",
    "env.param_grid_step",
    "env.min_fitness",
    "env.reward_mode",
    "env.max_alphabet",
    "env.role_assignment",
    "replay.strategy",
    "replay.buffer_capacity",
    "replay.balance",
    "replay.distortion_lambda",
    "replay.distortion_mode",
    "replay.per_alpha",
    "replay.per_beta_start",
    "replay.per_beta_end",
    "replay.per_epsilon",
    "train.epochs",
    "train.trials",
    "train.gamma",
    "train.epsilon_start",
    "train.epsilon_end",
    "train.epsilon_decay_fraction",
    "train.batch_size",
    "train.updates_per_step",
    "train.learning_rate",
    "train.beta1",
    "train.beta2",
    "train.sync_every",
    "train.terminal",
    "train.pi_tradeoff",
    "train.keep_best",
    "net.profile",
];

/// Splits config text into `(line, key, value)` entries.
pub fn parse_entries(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::ConfigSyntax {
                line: i + 1,
                message: format!("expected key = value, found {line:?}"),
            });
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::ConfigSyntax {
                line: i + 1,
                message: "empty key".into(),
            });
        }
        out.push((i + 1, key.to_owned(), value.trim().to_owned()));
    }
    Ok(out)
}

/// Parses a `--set` argument of the form `key=value`.
pub fn parse_override(arg: &str) -> Result<(String, String)> {
    match arg.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_owned(), v.trim().to_owned())),
        _ => Err(Error::config(arg, "override must look like key=value")),
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e: T::Err| Error::config(key, format!("{value:?}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::config(key, format!("{value:?} is not a boolean"))),
    }
}

fn parse_delimiter(key: &str, value: &str) -> Result<u8> {
    match value {
        "tab" | "\\t" => Ok(b'\t'),
        "comma" => Ok(b','),
        "semicolon" => Ok(b';'),
        _ if value.len() == 1 && value.is_ascii() => Ok(value.as_bytes()[0]),
        _ => Err(Error::config(key, format!("{value:?} is not a single ASCII character"))),
    }
}

fn render_delimiter(d: u8) -> String {
    match d {
        b'\t' => "tab".into(),
        b',' => "comma".into(),
        b';' => "semicolon".into(),
        other => (other as char).to_string(),
    }
}

impl RunConfig {
    pub fn seed(&self) -> u64 {
        self.training.seed
    }

    /// Sets one key; the value is validated for syntax only.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.training;
        let s = &mut self.synth;
        match key {
            "seed" => t.seed = parse(key, value)?,
            "data.path" => self.data.path = (!value.is_empty()).then(|| PathBuf::from(value)),
            "data.delimiter" => self.data.delimiter = parse_delimiter(key, value)?,
            "data.has_header" => self.data.has_header = parse_bool(key, value)?,
            "synth.n_cases" => s.n_cases = parse(key, value)?,
            "synth.process" => {
                s.process = value
                    .split(',')
                    .map(|step| SynthStep::parse(step.trim()))
                    .collect::<Result<_>>()
                    .map_err(|e| Error::config(key, e.to_string()))?
            }
            "synth.noise_columns" => s.n_noise_columns = parse(key, value)?,
            "synth.noise_rate" => s.noise_rate = parse(key, value)?,
            "synth.noise_vocab" => s.noise_vocab = parse(key, value)?,
            "synth.resources" => s.n_resources = parse(key, value)?,
            "synth.resource_affinity" => s.resource_affinity = parse(key, value)?,
            "env.param_grid_start" => t.grid_start = parse(key, value)?,
            "env.param_grid_stop" => t.grid_stop = parse(key, value)?,
            "env.param_grid_step" => t.grid_step = parse(key, value)?,
            "env.min_fitness" => t.min_fitness = parse(key, value)?,
            "env.reward_mode" => t.reward_mode = parse(key, value)?,
            "env.max_alphabet" => {
                t.max_alphabet = if value == "auto" { None } else { Some(parse(key, value)?) }
            }
            "env.role_assignment" => t.roles = parse(key, value)?,
            "replay.strategy" => t.strategy = parse(key, value)?,
            "replay.buffer_capacity" => t.buffer_capacity = parse(key, value)?,
            "replay.balance" => t.balance = parse(key, value)?,
            "replay.distortion_lambda" => t.distortion_lambda = parse(key, value)?,
            "replay.distortion_mode" => t.distortion_mode = parse(key, value)?,
            "replay.per_alpha" => t.per.alpha = parse(key, value)?,
            "replay.per_beta_start" => t.per.beta_start = parse(key, value)?,
            "replay.per_beta_end" => t.per.beta_end = parse(key, value)?,
            "replay.per_epsilon" => t.per.epsilon = parse(key, value)?,
            "train.epochs" => t.epochs = parse(key, value)?,
            "train.trials" => t.trials = parse(key, value)?,
            "train.gamma" => t.gamma = parse(key, value)?,
            "train.epsilon_start" => t.epsilon_start = parse(key, value)?,
            "train.epsilon_end" => t.epsilon_end = parse(key, value)?,
            "train.epsilon_decay_fraction" => t.epsilon_decay_fraction = parse(key, value)?,
            "train.batch_size" => t.batch_size = parse(key, value)?,
            "train.updates_per_step" => t.updates_per_step = parse(key, value)?,
            "train.learning_rate" => t.learning_rate = parse(key, value)?,
            "train.beta1" => t.beta1 = parse(key, value)?,
            "train.beta2" => t.beta2 = parse(key, value)?,
            "train.sync_every" => t.sync = parse(key, value)?,
            "train.terminal" => t.terminal = parse_bool(key, value)?,
            "train.pi_tradeoff" => t.pi_tradeoff = parse(key, value)?,
            "train.keep_best" => t.keep_best = parse(key, value)?,
            "net.profile" => t.profile = parse(key, value)?,
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (_, key, value) in parse_entries(text)? {
            self.set(&key, &value)?;
        }
        Ok(())
    }

    /// Defaults, then `file`, then `overrides` in order, then `seed`.
    pub fn load(file: Option<&Path>, overrides: &[(String, String)], seed: Option<u64>) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            cfg.apply_text(&text)?;
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        if let Some(seed) = seed {
            cfg.training.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.training.validate()?;
        if self.data.path.is_none() {
            self.synth
                .validate()
                .map_err(|e| Error::config("synth", e.to_string()))?;
        }
        Ok(())
    }

    fn value_of(&self, key: &str) -> String {
        let t = &self.training;
        let s = &self.synth;
        match key {
            "seed" => t.seed.to_string(),
            "data.path" => self
                .data
                .path
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
            "data.delimiter" => render_delimiter(self.data.delimiter),
            "data.has_header" => self.data.has_header.to_string(),
            "synth.n_cases" => s.n_cases.to_string(),
            "synth.process" => s.process.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(","),
            "synth.noise_columns" => s.n_noise_columns.to_string(),
            "synth.noise_rate" => s.noise_rate.to_string(),
            "synth.noise_vocab" => s.noise_vocab.to_string(),
            "synth.resources" => s.n_resources.to_string(),
            "synth.resource_affinity" => s.resource_affinity.to_string(),
            other => training_value(t, other).unwrap_or_default(),
        }
    }

    /// All keys with their effective values; re-parsing it yields `self`.
    pub fn snapshot(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key} = {}", self.value_of(key));
        }
        out
    }
}

fn training_value(t: &TrainingConfig, key: &str) -> Option<String> {
    Some(match key {
        "seed" => t.seed.to_string(),
        "env.param_grid_start" => t.grid_start.to_string(),
        "env.param_grid_stop" => t.grid_stop.to_string(),
        "env.param_grid_step" => t.grid_step.to_string(),
        "env.min_fitness" => t.min_fitness.to_string(),
        "env.reward_mode" => t.reward_mode.to_string(),
        "env.max_alphabet" => t.max_alphabet.map_or("auto".into(), |v| v.to_string()),
        "env.role_assignment" => t.roles.to_string(),
        "replay.strategy" => t.strategy.to_string(),
        "replay.buffer_capacity" => t.buffer_capacity.to_string(),
        "replay.balance" => t.balance.to_string(),
        "replay.distortion_lambda" => t.distortion_lambda.to_string(),
        "replay.distortion_mode" => t.distortion_mode.to_string(),
        "replay.per_alpha" => t.per.alpha.to_string(),
        "replay.per_beta_start" => t.per.beta_start.to_string(),
        "replay.per_beta_end" => t.per.beta_end.to_string(),
        "replay.per_epsilon" => t.per.epsilon.to_string(),
        "train.epochs" => t.epochs.to_string(),
        "train.trials" => t.trials.to_string(),
        "train.gamma" => t.gamma.to_string(),
        "train.epsilon_start" => t.epsilon_start.to_string(),
        "train.epsilon_end" => t.epsilon_end.to_string(),
        "train.epsilon_decay_fraction" => t.epsilon_decay_fraction.to_string(),
        "train.batch_size" => t.batch_size.to_string(),
        "train.updates_per_step" => t.updates_per_step.to_string(),
        "train.learning_rate" => t.learning_rate.to_string(),
        "train.beta1" => t.beta1.to_string(),
        "train.beta2" => t.beta2.to_string(),
        "train.sync_every" => t.sync.to_string(),
        "train.terminal" => t.terminal.to_string(),
        "train.pi_tradeoff" => t.pi_tradeoff.to_string(),
        "train.keep_best" => t.keep_best.to_string(),
        "net.profile" => t.profile.to_string(),
        _ => return None,
    })
}

/// Snapshot of the training keys only.
pub fn render_training(t: &TrainingConfig) -> String {
    let mut out = String::new();
    for key in KEYS {
        if let Some(v) = training_value(t, key) {
            let _ = writeln!(out, "{key} = {v}");
        }
    }
    out
}
