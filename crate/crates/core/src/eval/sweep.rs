use std::fmt::Write as _;

use super::{train_and_evaluate, Experiment};
use crate::data::{Split, SplitDataset};
use crate::error::{Error, Result};
use crate::model::Hyperparams;

/// Hyperparameters that can be swept.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SweepParam {
    Q,
    Omega,
    Alpha,
    Beta,
    D,
}

impl SweepParam {
    pub const ALL: [SweepParam; 5] = [Self::Q, Self::Omega, Self::Alpha, Self::Beta, Self::D];

    pub fn name(self) -> &'static str {
        match self {
            Self::Q => "q",
            Self::Omega => "omega",
            Self::Alpha => "alpha",
            Self::Beta => "beta",
            Self::D => "d",
        }
    }

    /// `hp` with this parameter set to `value`.
    pub fn set(self, hp: &Hyperparams, value: f64) -> Result<Hyperparams> {
        let integer = || {
            if value >= 1.0 && value.fract() == 0.0 && value <= u32::MAX as f64 {
                Ok(value as usize)
            } else {
                Err(Error::Config(format!(
                    "{} must be a positive integer, got {value}",
                    self.name()
                )))
            }
        };
        let mut out = hp.clone();
        match self {
            Self::Q => out.q = integer()?,
            Self::D => out.d = integer()?,
            Self::Omega => out.omega = value,
            Self::Alpha => out.alpha = value,
            Self::Beta => out.beta = value,
        }
        out.validate()?;
        Ok(out)
    }
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Self::ALL.iter().map(|p| p.name()).collect();
                Error::Config(format!(
                    "unknown sweep parameter {s:?}; valid names: {}",
                    names.join(", ")
                ))
            })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub param: SweepParam,
    pub value: f64,
    pub k: usize,
    pub recall: f64,
    pub ndcg: f64,
}

pub const SWEEP_HEADER: &str = "param\tvalue\tk\trecall\tndcg";

impl SweepRow {
    pub fn tsv_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{:.6}\t{:.6}",
            self.param.name(),
            self.value,
            self.k,
            self.recall,
            self.ndcg
        )
    }
}

pub fn sweep_table(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in rows {
        let _ = writeln!(out, "{}", r.tsv_line());
    }
    out
}

/// One full train + test evaluation per value; emits one row per
/// (value, k) and calls `on_value` after each value.
pub fn sweep(
    ds: &SplitDataset,
    base: &Experiment,
    param: SweepParam,
    values: &[f64],
    on_value: &mut dyn FnMut(&[SweepRow]) -> Result<()>,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    // Reject bad values before spending time on training.
    let configs = values
        .iter()
        .map(|&v| param.set(&base.hp, v))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (&value, hp) in values.iter().zip(configs) {
        let exp = Experiment { hp, ..base.clone() };
        let (_, _, report) = train_and_evaluate(ds, &exp, Split::Test)?;
        let batch: Vec<SweepRow> = report
            .rows
            .iter()
            .map(|r| SweepRow {
                param,
                value,
                k: r.k,
                recall: r.recall,
                ndcg: r.ndcg,
            })
            .collect();
        on_value(&batch)?;
        rows.extend(batch);
    }
    Ok(rows)
}
