use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{train_and_evaluate, Experiment, MetricsReport};
use crate::data::{Split, SplitDataset};
use crate::error::Result;
use crate::model::{Aggregation, Hyperparams};

/// Components to switch off; applies during training and evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationSpec {
    /// Sequences are aggregated directly, without attention.
    pub without_self_attention: bool,
    /// `v⁺ = 0`.
    pub without_iti: bool,
    /// `u⁺ = 0`.
    pub without_u_plus: bool,
    pub aggregation: Option<Aggregation>,
}

impl AblationSpec {
    pub fn apply(&self, hp: &Hyperparams) -> Hyperparams {
        Hyperparams {
            use_self_attention: hp.use_self_attention && !self.without_self_attention,
            use_item_trend: hp.use_item_trend && !self.without_iti,
            use_short_term: hp.use_short_term && !self.without_u_plus,
            aggregation: self.aggregation.unwrap_or(hp.aggregation),
            ..hp.clone()
        }
    }
}

const fn spec(sa: bool, iti: bool, up: bool, aggregation: Option<Aggregation>) -> AblationSpec {
    AblationSpec {
        without_self_attention: sa,
        without_iti: iti,
        without_u_plus: up,
        aggregation,
    }
}

/// The eight architectures of the ablation table, in order.
pub const ABLATION_ROWS: [(&str, AblationSpec); 8] = [
    ("(1) TRec", spec(false, false, false, None)),
    ("(2) w/o Self-Att", spec(true, false, false, None)),
    ("(3) w/o ITI", spec(false, true, false, None)),
    ("(4) w/o Self-Att&ITI", spec(true, true, false, None)),
    ("(5) w/o u+", spec(false, false, true, None)),
    ("(6) w/o u+&ITI", spec(false, true, true, None)),
    (
        "(7) aggr-avg",
        spec(false, false, false, Some(Aggregation::Mean)),
    ),
    (
        "(8) aggr-max",
        spec(false, false, false, Some(Aggregation::Max)),
    ),
];

/// Trains from scratch with `spec` applied and reports test metrics.
pub fn run_ablation(
    ds: &SplitDataset,
    base: &Experiment,
    spec: AblationSpec,
) -> Result<MetricsReport> {
    let exp = Experiment {
        hp: spec.apply(&base.hp),
        ..base.clone()
    };
    train_and_evaluate(ds, &exp, Split::Test).map(|(_, _, report)| report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub label: String,
    pub spec: AblationSpec,
    pub report: MetricsReport,
}

impl AblationRow {
    pub fn tsv_line(&self, ks: &[usize]) -> String {
        let mut line = self.label.clone();
        for &k in ks {
            let recall = self.report.recall(Split::Test, k).unwrap_or(f64::NAN);
            let ndcg = self.report.ndcg(Split::Test, k).unwrap_or(f64::NAN);
            let _ = write!(line, "\t{recall:.6}\t{ndcg:.6}");
        }
        line
    }
}

pub fn ablation_header(ks: &[usize]) -> String {
    let mut header = "architecture".to_string();
    for k in ks {
        let _ = write!(header, "\trecall@{k}\tndcg@{k}");
    }
    header
}

pub fn ablation_table(rows: &[AblationRow], ks: &[usize]) -> String {
    let mut out = ablation_header(ks);
    out.push('\n');
    for row in rows {
        out.push_str(&row.tsv_line(ks));
        out.push('\n');
    }
    out
}

/// Runs all eight rows with the base seed, calling `on_row` after each.
///
/// Rows whose effective hyperparameters coincide with an earlier row reuse
/// its result, since training is deterministic.
pub fn run_ablation_matrix(
    ds: &SplitDataset,
    base: &Experiment,
    on_row: &mut dyn FnMut(&AblationRow) -> Result<()>,
) -> Result<Vec<AblationRow>> {
    let mut done: Vec<(Hyperparams, MetricsReport)> = Vec::new();
    let mut rows = Vec::with_capacity(ABLATION_ROWS.len());
    for (label, spec) in ABLATION_ROWS {
        let hp = spec.apply(&base.hp);
        let report = match done.iter().find(|(h, _)| *h == hp) {
            Some((_, r)) => r.clone(),
            None => {
                let r = run_ablation(ds, base, spec)?;
                done.push((hp, r.clone()));
                r
            }
        };
        let row = AblationRow {
            label: label.to_string(),
            spec,
            report,
        };
        on_row(&row)?;
        rows.push(row);
    }
    Ok(rows)
}
