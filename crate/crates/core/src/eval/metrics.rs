use std::cmp::Ordering;
use std::fmt::Write as _;

use crate::data::Split;
use crate::error::{Error, Result};

fn target_set(targets: &[usize]) -> Result<Vec<usize>> {
    if targets.is_empty() {
        return Err(Error::Evaluation("empty target set; skip this user".into()));
    }
    let mut t = targets.to_vec();
    t.sort_unstable();
    t.dedup();
    Ok(t)
}

/// `|top-k(ranked) ∩ targets| / |targets|`.
pub fn recall_at_k(ranked: &[usize], targets: &[usize], k: usize) -> Result<f64> {
    let t = target_set(targets)?;
    let hits = ranked
        .iter()
        .take(k)
        .filter(|i| t.binary_search(i).is_ok())
        .count();
    Ok(hits as f64 / t.len() as f64)
}

/// Binary-relevance NDCG with the ideal ranking truncated at
/// `min(k, |targets|)`.
pub fn ndcg_at_k(ranked: &[usize], targets: &[usize], k: usize) -> Result<f64> {
    let t = target_set(targets)?;
    let gain = |pos: usize| 1.0 / ((pos + 2) as f64).log2();
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| t.binary_search(i).is_ok())
        .fold(0.0, |acc, (pos, _)| acc + gain(pos));
    let idcg: f64 = (0..k.min(t.len())).map(gain).sum();
    Ok(if idcg > 0.0 { dcg / idcg } else { 0.0 })
}

/// Orders by descending score, then ascending item index.
fn rank_cmp(scores: &[f64]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b))
}

/// The `k` best items by score, skipping `exclude` (sorted ascending).
pub fn top_k(scores: &[f64], exclude: &[usize], k: usize) -> Vec<usize> {
    let mut candidates: Vec<usize> = (0..scores.len())
        .filter(|i| exclude.binary_search(i).is_err())
        .collect();
    let cmp = rank_cmp(scores);
    if k < candidates.len() {
        if k == 0 {
            return Vec::new();
        }
        candidates.select_nth_unstable_by(k - 1, &cmp);
        candidates.truncate(k);
    }
    candidates.sort_unstable_by(&cmp);
    candidates
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub split: Split,
    pub k: usize,
    pub recall: f64,
    pub ndcg: f64,
    pub users: usize,
}

/// Averaged metrics per split and cutoff.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsReport {
    pub rows: Vec<MetricRow>,
}

pub const METRICS_HEADER: &str = "split\tk\trecall\tndcg\tusers";

impl MetricsReport {
    pub fn get(&self, split: Split, k: usize) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.split == split && r.k == k)
    }

    pub fn recall(&self, split: Split, k: usize) -> Option<f64> {
        self.get(split, k).map(|r| r.recall)
    }

    pub fn ndcg(&self, split: Split, k: usize) -> Option<f64> {
        self.get(split, k).map(|r| r.ndcg)
    }

    pub fn extend(&mut self, other: MetricsReport) {
        self.rows.extend(other.rows);
    }

    pub fn to_tsv(&self) -> String {
        let mut out = format!("{METRICS_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{:.6}\t{:.6}\t{}",
                r.split.as_str(),
                r.k,
                r.recall,
                r.ndcg,
                r.users
            );
        }
        out
    }
}
