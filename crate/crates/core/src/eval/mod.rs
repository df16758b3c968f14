//! Top-K ranking metrics, full-catalog evaluation, ablations and sweeps.
//!
//! Every user with a non-empty target set in the evaluated split ranks the
//! whole catalog minus their training items; equal scores fall back to
//! ascending item index. Metrics are averaged uniformly over those users.

mod ablation;
mod metrics;
mod sweep;

pub use ablation::{
    ablation_header, ablation_table, run_ablation, run_ablation_matrix, AblationRow, AblationSpec,
    ABLATION_ROWS,
};
pub use metrics::{ndcg_at_k, recall_at_k, top_k, MetricRow, MetricsReport, METRICS_HEADER};
pub use sweep::{sweep, sweep_table, SweepParam, SweepRow, SWEEP_HEADER};

use crate::data::{Split, SplitDataset};
use crate::error::{Error, Result};
use crate::model::{Hyperparams, ModelParams, Scorer};
use crate::training::{train, EpochStats, TrainConfig};

/// Ranks with the model and reports metrics for `split` at every `k`.
pub fn evaluate(
    ds: &SplitDataset,
    params: &ModelParams,
    hp: &Hyperparams,
    split: Split,
    ks: &[usize],
) -> Result<MetricsReport> {
    let scorer = Scorer::new(ds, params, hp)?;
    evaluate_scores(ds, split, ks, |user| scorer.scores(user))
}

/// Like [`evaluate`] for an arbitrary scoring function returning one score
/// per item.
pub fn evaluate_scores<F>(
    ds: &SplitDataset,
    split: Split,
    ks: &[usize],
    score: F,
) -> Result<MetricsReport>
where
    F: Fn(usize) -> Result<Vec<f64>> + Sync,
{
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::Config(format!(
            "cutoffs must be positive, got {ks:?}"
        )));
    }
    let users: Vec<usize> = (0..ds.num_users())
        .filter(|&u| !ds.partition(u, split).is_empty())
        .collect();
    if users.is_empty() {
        return Err(Error::Evaluation(format!(
            "no user has {} interactions to evaluate",
            split.as_str()
        )));
    }
    let k_max = *ks.iter().max().unwrap();

    // Per-k sums of (recall, ndcg) for a slice of users.
    let work = |chunk: &[usize]| -> Result<Vec<(f64, f64)>> {
        let mut sums = vec![(0.0, 0.0); ks.len()];
        for &user in chunk {
            let scores = score(user)?;
            if scores.len() != ds.num_items() {
                return Err(Error::Evaluation(format!(
                    "scorer returned {} scores for {} items",
                    scores.len(),
                    ds.num_items()
                )));
            }
            if let Some(bad) = scores.iter().position(|s| !s.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "score of item {bad} for user {user}"
                )));
            }
            let ranked = top_k(&scores, ds.train_items(user), k_max);
            let targets = ds.targets(user, split);
            for (slot, &k) in sums.iter_mut().zip(ks) {
                slot.0 += recall_at_k(&ranked, &targets, k)?;
                slot.1 += ndcg_at_k(&ranked, &targets, k)?;
            }
        }
        Ok(sums)
    };

    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(users.len());
    let partial: Vec<Result<Vec<(f64, f64)>>> = if workers <= 1 {
        vec![work(&users)]
    } else {
        let chunk = users.len().div_ceil(workers);
        std::thread::scope(|s| {
            let handles: Vec<_> = users.chunks(chunk).map(|c| s.spawn(|| work(c))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("evaluation worker panicked"))
                .collect()
        })
    };
    let mut totals = vec![(0.0, 0.0); ks.len()];
    for part in partial {
        for (t, p) in totals.iter_mut().zip(part?) {
            t.0 += p.0;
            t.1 += p.1;
        }
    }
    let n = users.len() as f64;
    Ok(MetricsReport {
        rows: ks
            .iter()
            .zip(totals)
            .map(|(&k, (recall, ndcg))| MetricRow {
                split,
                k,
                recall: recall / n,
                ndcg: ndcg / n,
                users: users.len(),
            })
            .collect(),
    })
}

/// Everything needed to train and evaluate one model from scratch.
#[derive(Clone, Debug, PartialEq)]
pub struct Experiment {
    pub hp: Hyperparams,
    pub train: TrainConfig,
    pub ks: Vec<usize>,
}

/// Initializes from `train.seed`, trains, and evaluates `split`.
pub fn train_and_evaluate(
    ds: &SplitDataset,
    exp: &Experiment,
    split: Split,
) -> Result<(ModelParams, Vec<EpochStats>, MetricsReport)> {
    let params = ModelParams::init(ds.num_users(), ds.num_items(), &exp.hp, exp.train.seed)?;
    let (params, stats) = train(ds, params, &exp.hp, &exp.train)?;
    let report = evaluate(ds, &params, &exp.hp, split, &exp.ks)?;
    Ok((params, stats, report))
}
