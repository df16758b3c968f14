//! Declarative run configuration.
//!
//! A run is described by a TOML file with one table per concern:
//!
//! ```toml
//! out_dir = "runs"
//!
//! [dataset]
//! format = "movielens"
//! path = "data/ml-100k/u.data"
//!
//! [split]
//! train = 0.7
//! validation = 0.2
//! test = 0.1
//!
//! [model]
//! d = 100
//! omega = 0.4
//!
//! [train]
//! epochs = 4
//! seed = 42
//!
//! [eval]
//! ks = [10, 20]
//!
//! [ablation]
//! without_iti = false
//! ```
//!
//! Every key is optional. Values are resolved in this order, later wins:
//! built-in defaults, the config file, `--set section.key=value` overrides,
//! and finally the dedicated `--seed` and `--out` flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{DatasetFormat, SplitRatios};
use crate::error::{Error, Result};
use crate::eval::{AblationSpec, Experiment};
use crate::model::Hyperparams;
use crate::training::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub format: DatasetFormat,
    pub path: PathBuf,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            format: DatasetFormat::Movielens,
            path: PathBuf::from("data/ml-100k/u.data"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub ks: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { ks: vec![10, 20] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Parent of the per-run directories.
    pub out_dir: PathBuf,
    pub dataset: DatasetConfig,
    pub split: SplitRatios,
    pub model: Hyperparams,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    /// Components switched off for `train` and `evaluate`.
    pub ablation: AblationSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("runs"),
            dataset: DatasetConfig::default(),
            split: SplitRatios::default(),
            model: Hyperparams::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            ablation: AblationSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_value(parse_table(text)?)
    }

    /// Reads `path` (or starts from defaults) and applies `key=value`
    /// overrides with dotted keys such as `model.d=120`.
    pub fn resolve<S: AsRef<str>>(path: Option<&Path>, overrides: &[S]) -> Result<Self> {
        let mut table = match path {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                parse_table(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
            None => toml::Table::new(),
        };
        for item in overrides {
            apply_override(&mut table, item.as_ref())?;
        }
        Self::from_value(table)
    }

    fn from_value(table: toml::Table) -> Result<Self> {
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.split.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        if self.eval.ks.is_empty() || self.eval.ks.contains(&0) {
            return Err(Error::Config(format!(
                "eval.ks must be non-empty positive cutoffs, got {:?}",
                self.eval.ks
            )));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config is always representable as TOML")
    }

    /// Hyperparameters with the ablation switches applied.
    pub fn effective_hyperparams(&self) -> Hyperparams {
        self.ablation.apply(&self.model)
    }

    pub fn experiment(&self) -> Experiment {
        Experiment {
            hp: self.effective_hyperparams(),
            train: self.train.clone(),
            ks: self.eval.ks.clone(),
        }
    }

    /// First 16 hex digits of the SHA-256 of the resolved config, ignoring
    /// `out_dir`.
    pub fn hash(&self) -> String {
        let canonical = Self {
            out_dir: PathBuf::new(),
            ..self.clone()
        };
        let digest = Sha256::digest(canonical.to_toml().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// `out_dir/<hash>`: identical configs share a directory.
    pub fn run_dir(&self) -> PathBuf {
        self.out_dir.join(self.hash())
    }
}

fn parse_table(text: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>()
        .map_err(|e| Error::Config(e.message().to_string()))
}

/// Sets `a.b.c = value` inside `table`. The value is read as a TOML literal
/// when possible (`120`, `0.5`, `true`, `[10, 20]`) and as a bare string
/// otherwise (`max`, `data/u.data`).
pub fn apply_override(table: &mut toml::Table, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {item:?} is not of the form key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));

    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("malformed override key {key:?}")));
    }
    let (last, sections) = parts.split_last().unwrap();
    let mut cursor = table;
    for section in sections {
        let entry = cursor
            .entry(section.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cursor = entry.as_table_mut().ok_or_else(|| {
            Error::Config(format!(
                "override key {key:?}: {section:?} is not a section"
            ))
        })?;
    }
    cursor.insert(last.to_string(), value);
    Ok(())
}
