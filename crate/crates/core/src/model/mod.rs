//! The trend-aware scoring network.
//!
//! A score blends four representations of a (user, item) pair: the user's
//! long-term embedding `u`, the item's long-term embedding `v`, the user's
//! short-term preference `u⁺` (self-attention over the most recent items)
//! and the item's trend `v⁺` (self-attention over its most recent users):
//!
//! ```text
//! r = ω·⟨u, v + α·v⁺⟩ + (1 − ω)·⟨u⁺, v + β·v⁺⟩
//! ```
//!
//! Sequences are `n × d` matrices; attention mixes along the sequence axis
//! and aggregation reduces over it. Empty sequences yield a zero vector.

mod params;

pub use params::{
    Aggregation, Hyperparams, ModelParams, ITEM_TABLE, SEQUENCE_TABLE, TREND_TABLE, USER_TABLE,
    WK_SEQ, WK_TREND, WQ_SEQ, WQ_TREND,
};

use crate::data::SplitDataset;
use crate::error::{Error, Result};
use crate::numerics::{dot, Matrix, ParamId, Section, Tape, Var};

/// Score with its two additive parts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreBreakdown {
    pub score: f64,
    /// `ω·⟨u, v + α·v⁺⟩`
    pub long_term_component: f64,
    /// `(1 − ω)·⟨u⁺, v + β·v⁺⟩`
    pub short_term_component: f64,
}

/// `softmax(QKᵀ/√d)·X` with `Q = relu(X·W_Q)`, `K = relu(X·W_K)`.
///
/// Single head, no positional encoding, no residual; output has the shape
/// of `x`.
pub fn self_attention(tape: &mut Tape<'_>, x: Var, wq: ParamId, wk: ParamId) -> Result<Var> {
    let d = tape.value(x).cols();
    for w in [wq, wk] {
        let shape = tape.store().get(w).value().shape();
        if shape != (d, d) {
            return Err(Error::Dimension {
                op: "self_attention weights",
                left: shape,
                right: (d, d),
            });
        }
    }
    let outer = tape.enter_section(Section::Projection);
    let wq = tape.param(wq);
    let wk = tape.param(wk);
    let q = tape.matmul(x, wq)?;
    let q = tape.relu(q);
    let k = tape.matmul(x, wk)?;
    let k = tape.relu(k);
    tape.enter_section(Section::AttentionCore);
    let logits = tape.matmul_transposed(q, k)?;
    let logits = tape.scale(logits, 1.0 / (d as f64).sqrt());
    let weights = tape.softmax_rows(logits);
    let out = tape.matmul(weights, x)?;
    tape.enter_section(outer);
    Ok(out)
}

pub fn aggregate(tape: &mut Tape<'_>, x: Var, aggregation: Aggregation) -> Result<Var> {
    match aggregation {
        Aggregation::Mean => tape.mean_rows(x),
        Aggregation::Max => tape.max_rows(x),
    }
}

fn encode_sequence(
    tape: &mut Tape<'_>,
    table: ParamId,
    ids: &[usize],
    wq: ParamId,
    wk: ParamId,
    hp: &Hyperparams,
) -> Result<Option<Var>> {
    if ids.is_empty() {
        return Ok(None);
    }
    let x = tape.gather(table, ids)?;
    let attended = if hp.use_self_attention {
        self_attention(tape, x, wq, wk)?
    } else {
        x
    };
    aggregate(tape, attended, hp.aggregation).map(Some)
}

/// `u⁺` as a `1 × d` node, or `None` for an empty sequence or when `u⁺`
/// cannot affect the score.
pub fn short_term_preference_node(
    tape: &mut Tape<'_>,
    ds: &SplitDataset,
    params: &ModelParams,
    hp: &Hyperparams,
    user: usize,
) -> Result<Option<Var>> {
    if !hp.short_term_active() {
        return Ok(None);
    }
    short_term_preference_of(tape, params, hp, &ds.user_recent_sequence(user, hp.p))
}

/// `u⁺` of an explicit recent-item window.
pub fn short_term_preference_of(
    tape: &mut Tape<'_>,
    params: &ModelParams,
    hp: &Hyperparams,
    items: &[usize],
) -> Result<Option<Var>> {
    if !hp.short_term_active() {
        return Ok(None);
    }
    encode_sequence(
        tape,
        params.sequence_table,
        items,
        params.wq_seq,
        params.wk_seq,
        hp,
    )
}

/// `v⁺` as a `1 × d` node, or `None` for an unseen item or when `v⁺`
/// cannot affect the score.
pub fn item_trend_node(
    tape: &mut Tape<'_>,
    ds: &SplitDataset,
    params: &ModelParams,
    hp: &Hyperparams,
    item: usize,
) -> Result<Option<Var>> {
    if !hp.item_trend_active() {
        return Ok(None);
    }
    item_trend_of(tape, params, hp, &ds.item_recent_users(item, hp.q))
}

/// `v⁺` of an explicit recent-interactor window.
pub fn item_trend_of(
    tape: &mut Tape<'_>,
    params: &ModelParams,
    hp: &Hyperparams,
    users: &[usize],
) -> Result<Option<Var>> {
    if !hp.item_trend_active() {
        return Ok(None);
    }
    encode_sequence(
        tape,
        params.trend_table,
        users,
        params.wq_trend,
        params.wk_trend,
        hp,
    )
}

/// Nodes produced by [`score_node`].
#[derive(Clone, Copy, Debug)]
pub struct ScoreNodes {
    pub score: Var,
    pub long_term: Var,
    pub short_term: Var,
}

/// Records the blended score of `item` for a user whose long-term row is
/// `user_vec`.
pub fn score_node(
    tape: &mut Tape<'_>,
    params: &ModelParams,
    hp: &Hyperparams,
    user_vec: Var,
    u_plus: Option<Var>,
    item: usize,
    v_plus: Option<Var>,
) -> Result<ScoreNodes> {
    let d = params.d;
    let u_plus = u_plus.unwrap_or_else(|| tape.constant(Matrix::zeros(1, d)));
    let v_plus = v_plus.unwrap_or_else(|| tape.constant(Matrix::zeros(1, d)));
    let v = tape.gather(params.item_table, &[item])?;

    let trend_long = tape.scale(v_plus, hp.alpha);
    let item_long = tape.add(v, trend_long)?;
    let long = tape.dot(user_vec, item_long)?;
    let long_term = tape.scale(long, hp.omega);

    let trend_short = tape.scale(v_plus, hp.beta);
    let item_short = tape.add(v, trend_short)?;
    let short = tape.dot(u_plus, item_short)?;
    let short_term = tape.scale(short, 1.0 - hp.omega);

    let score = tape.add(long_term, short_term)?;
    Ok(ScoreNodes {
        score,
        long_term,
        short_term,
    })
}

/// `u⁺` for `user` (zero vector when the sequence is empty).
pub fn short_term_preference(
    ds: &SplitDataset,
    params: &ModelParams,
    hp: &Hyperparams,
    user: usize,
) -> Result<Vec<f64>> {
    let mut tape = Tape::new(&params.store);
    Ok(
        match short_term_preference_node(&mut tape, ds, params, hp, user)? {
            Some(v) => tape.value(v).as_slice().to_vec(),
            None => vec![0.0; params.d],
        },
    )
}

/// `v⁺` for `item` (zero vector when the item has no training interactors).
pub fn item_trend(
    ds: &SplitDataset,
    params: &ModelParams,
    hp: &Hyperparams,
    item: usize,
) -> Result<Vec<f64>> {
    let mut tape = Tape::new(&params.store);
    Ok(match item_trend_node(&mut tape, ds, params, hp, item)? {
        Some(v) => tape.value(v).as_slice().to_vec(),
        None => vec![0.0; params.d],
    })
}

/// `v + coef·v⁺`, with the same operation order as the recorded score.
fn blend(v: &[f64], v_plus: &[f64], coef: f64) -> Vec<f64> {
    v.iter().zip(v_plus).map(|(a, b)| a + b * coef).collect()
}

/// The blended score from explicit vectors.
pub fn predict(
    hp: &Hyperparams,
    u_vec: &[f64],
    v_vec: &[f64],
    u_plus: &[f64],
    v_plus: &[f64],
) -> Result<ScoreBreakdown> {
    let d = u_vec.len();
    for len in [v_vec.len(), u_plus.len(), v_plus.len()] {
        if len != d {
            return Err(Error::Dimension {
                op: "predict",
                left: (1, d),
                right: (1, len),
            });
        }
    }
    let long = blend(v_vec, v_plus, hp.alpha);
    let short = blend(v_vec, v_plus, hp.beta);
    Ok(breakdown(hp, u_vec, u_plus, &long, &short))
}

fn breakdown(
    hp: &Hyperparams,
    u_vec: &[f64],
    u_plus: &[f64],
    long: &[f64],
    short: &[f64],
) -> ScoreBreakdown {
    let long_term_component = dot(u_vec, long) * hp.omega;
    let short_term_component = dot(u_plus, short) * (1.0 - hp.omega);
    ScoreBreakdown {
        score: long_term_component + short_term_component,
        long_term_component,
        short_term_component,
    }
}

/// Precomputed item-side vectors for ranking the whole catalog.
///
/// Built once per parameter snapshot; `v⁺` depends only on the item, so
/// each user's ranking costs `O(items · d)`.
pub struct Scorer<'a> {
    ds: &'a SplitDataset,
    params: &'a ModelParams,
    hp: &'a Hyperparams,
    /// Row-major `num_items × d`: `v + α·v⁺`.
    long_items: Vec<f64>,
    /// Row-major `num_items × d`: `v + β·v⁺`.
    short_items: Vec<f64>,
}

impl<'a> Scorer<'a> {
    pub fn new(ds: &'a SplitDataset, params: &'a ModelParams, hp: &'a Hyperparams) -> Result<Self> {
        if ds.num_items() != params.num_items || ds.num_users() != params.num_users {
            return Err(Error::Dimension {
                op: "scorer catalog (users, items)",
                left: (ds.num_users(), ds.num_items()),
                right: (params.num_users, params.num_items),
            });
        }
        let d = params.d;
        let mut long_items = Vec::with_capacity(params.num_items * d);
        let mut short_items = Vec::with_capacity(params.num_items * d);
        for item in 0..params.num_items {
            let v_plus = item_trend(ds, params, hp, item)?;
            let v = params.item_row(item);
            long_items.extend(blend(v, &v_plus, hp.alpha));
            short_items.extend(blend(v, &v_plus, hp.beta));
        }
        Ok(Self {
            ds,
            params,
            hp,
            long_items,
            short_items,
        })
    }

    /// Scores of every item for `user`.
    pub fn scores(&self, user: usize) -> Result<Vec<f64>> {
        let d = self.params.d;
        let u_plus = short_term_preference(self.ds, self.params, self.hp, user)?;
        let u_vec = self.params.user_row(user);
        Ok((0..self.params.num_items)
            .map(|j| {
                let span = j * d..(j + 1) * d;
                breakdown(
                    self.hp,
                    u_vec,
                    &u_plus,
                    &self.long_items[span.clone()],
                    &self.short_items[span],
                )
                .score
            })
            .collect())
    }
}

/// Scores every item not in `exclude`; excluded items are `None`.
pub fn score_all_items(
    ds: &SplitDataset,
    params: &ModelParams,
    hp: &Hyperparams,
    user: usize,
    exclude: &[usize],
) -> Result<Vec<Option<f64>>> {
    let scorer = Scorer::new(ds, params, hp)?;
    let mut scores: Vec<Option<f64>> = scorer.scores(user)?.into_iter().map(Some).collect();
    for &item in exclude {
        if let Some(slot) = scores.get_mut(item) {
            *slot = None;
        }
    }
    Ok(scores)
}
