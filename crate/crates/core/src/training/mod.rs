//! Pairwise ranking optimization.
//!
//! Each step takes a triple `(u, i, j)` with `i` a training item of `u` and
//! `j` an item `u` never interacted with, and minimizes
//!
//! ```text
//! −ln σ(r̂ᵤᵢ − r̂ᵤⱼ) + λ·‖Θ_uij‖²
//! ```
//!
//! where `Θ_uij` holds only the rows and matrices the two scores used.

mod checkpoint;
mod gradcheck;
mod optimizer;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint,
    CHECKPOINT_VERSION,
};
pub use gradcheck::{
    check_model_gradients, GradCheckProblem, ModelCheck, GRADCHECK_EPS, GRADCHECK_LAMBDA,
    GRADCHECK_TOLERANCE,
};
pub use optimizer::{OptimizerKind, OptimizerState, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{BprTriple, Split, SplitDataset};
use crate::error::{Error, Result};
use crate::eval;
use crate::model::{item_trend_of, score_node, short_term_preference_of, Hyperparams, ModelParams};
use crate::numerics::{softplus, ParamId, ParamStore, Profile, Section, Tape, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Weight of the squared norm of the parameters a triple touches.
    pub lambda_reg: f64,
    pub epochs: usize,
    /// Sampled negatives per training interaction and epoch.
    pub negatives_per_positive: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    /// Compute validation Recall@10 after every epoch.
    pub validate_each_epoch: bool,
    /// Leave the positive item out of the user's window and the user out of
    /// the positive item's window, as they are for every held-out item.
    pub hide_target: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            lambda_reg: 1e-4,
            epochs: 8,
            negatives_per_positive: 1,
            seed: 42,
            optimizer: OptimizerKind::Adam,
            validate_each_epoch: false,
            hide_target: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.lambda_reg >= 0.0 && self.lambda_reg.is_finite()) {
            return Err(Error::Config(format!(
                "lambda_reg must be >= 0, got {}",
                self.lambda_reg
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.negatives_per_positive == 0 {
            return Err(Error::Config(
                "negatives_per_positive must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// `−ln σ(r_pos − r_neg) + λ·reg_term`.
pub fn bpr_pair_loss(r_pos: f64, r_neg: f64, reg_term: f64, lambda: f64) -> f64 {
    softplus(r_neg - r_pos) + lambda * reg_term
}

/// The sequence windows one triple reads.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TripleWindows {
    /// `L_p^u`, oldest first.
    pub recent_items: Vec<usize>,
    /// `L_q^v` of the positive item, most recent first.
    pub positive_users: Vec<usize>,
    /// `L_q^v` of the negative item.
    pub negative_users: Vec<usize>,
}

impl TripleWindows {
    /// The served windows; with `hide_target` the pair `(u, i)` is removed
    /// from both sides before truncation. The negative never shares a
    /// window with the user, so its list is unaffected.
    pub fn new(ds: &SplitDataset, hp: &Hyperparams, triple: BprTriple, hide_target: bool) -> Self {
        let BprTriple {
            user,
            positive,
            negative,
        } = triple;
        let (recent_items, positive_users) = if hide_target {
            (
                ds.user_recent_sequence_without(user, hp.p, positive),
                ds.item_recent_users_without(positive, hp.q, user),
            )
        } else {
            (
                ds.user_recent_sequence(user, hp.p),
                ds.item_recent_users(positive, hp.q),
            )
        };
        Self {
            recent_items,
            positive_users,
            negative_users: ds.item_recent_users(negative, hp.q),
        }
    }
}

/// Parameter slices used by one triple: embedding rows (each row once per
/// table) and attention matrices.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Involved {
    pub rows: Vec<(ParamId, Vec<usize>)>,
    pub matrices: Vec<ParamId>,
}

impl Involved {
    /// Slices of `triple` with the served windows.
    pub fn for_triple(
        ds: &SplitDataset,
        params: &ModelParams,
        hp: &Hyperparams,
        triple: BprTriple,
    ) -> Self {
        Self::for_windows(
            params,
            hp,
            triple,
            &TripleWindows::new(ds, hp, triple, false),
        )
    }

    pub fn for_windows(
        params: &ModelParams,
        hp: &Hyperparams,
        triple: BprTriple,
        windows: &TripleWindows,
    ) -> Self {
        let mut rows: BTreeMap<ParamId, Vec<usize>> = BTreeMap::new();
        rows.entry(params.user_table).or_default().push(triple.user);
        rows.entry(params.item_table)
            .or_default()
            .extend([triple.positive, triple.negative]);
        let mut matrices = Vec::new();
        if hp.short_term_active() {
            let seq = &windows.recent_items;
            if !seq.is_empty() && hp.use_self_attention {
                matrices.extend([params.wq_seq, params.wk_seq]);
            }
            rows.entry(params.sequence_table).or_default().extend(seq);
        }
        if hp.item_trend_active() {
            let mut any = false;
            for users in [&windows.positive_users, &windows.negative_users] {
                any |= !users.is_empty();
                rows.entry(params.trend_table).or_default().extend(users);
            }
            if any && hp.use_self_attention {
                matrices.extend([params.wq_trend, params.wk_trend]);
            }
        }
        let rows = rows
            .into_iter()
            .filter_map(|(id, mut ids)| {
                ids.sort_unstable();
                ids.dedup();
                (!ids.is_empty()).then_some((id, ids))
            })
            .collect();
        Self { rows, matrices }
    }

    /// Sum of squared entries of the involved slices.
    pub fn term(&self, store: &ParamStore) -> f64 {
        let rows: f64 = self
            .rows
            .iter()
            .map(|(id, ids)| {
                let table = store.get(*id).value();
                ids.iter()
                    .map(|&r| table.row(r).iter().map(|x| x * x).sum::<f64>())
                    .sum::<f64>()
            })
            .sum();
        rows + self
            .matrices
            .iter()
            .map(|&id| store.get(id).value().sum_squares())
            .sum::<f64>()
    }

    /// The same sum recorded on `tape`; `None` when nothing is involved.
    pub fn node(&self, tape: &mut Tape<'_>) -> Result<Option<Var>> {
        let mut total: Option<Var> = None;
        for (id, ids) in &self.rows {
            let x = tape.gather(*id, ids)?;
            let s = tape.sum_squares(x);
            total = Some(match total {
                Some(t) => tape.add(t, s)?,
                None => s,
            });
        }
        for &id in &self.matrices {
            let w = tape.param(id);
            let s = tape.sum_squares(w);
            total = Some(match total {
                Some(t) => tape.add(t, s)?,
                None => s,
            });
        }
        Ok(total)
    }
}

/// Nodes of one recorded triple loss.
#[derive(Clone, Copy, Debug)]
pub struct LossNodes {
    pub loss: Var,
    pub positive_score: Var,
    pub negative_score: Var,
}

/// Records the full regularized pairwise loss of `triple` on `tape`, with
/// the served windows.
pub fn bpr_loss_node(
    tape: &mut Tape<'_>,
    ds: &SplitDataset,
    params: &ModelParams,
    hp: &Hyperparams,
    lambda: f64,
    triple: BprTriple,
) -> Result<LossNodes> {
    let windows = TripleWindows::new(ds, hp, triple, false);
    bpr_loss_node_with(tape, params, hp, lambda, triple, &windows)
}

/// [`bpr_loss_node`] over explicit windows.
pub fn bpr_loss_node_with(
    tape: &mut Tape<'_>,
    params: &ModelParams,
    hp: &Hyperparams,
    lambda: f64,
    triple: BprTriple,
    windows: &TripleWindows,
) -> Result<LossNodes> {
    let u = tape.gather(params.user_table, &[triple.user])?;
    let u_plus = short_term_preference_of(tape, params, hp, &windows.recent_items)?;
    let pos_trend = item_trend_of(tape, params, hp, &windows.positive_users)?;
    let neg_trend = item_trend_of(tape, params, hp, &windows.negative_users)?;
    let pos = score_node(tape, params, hp, u, u_plus, triple.positive, pos_trend)?.score;
    let neg = score_node(tape, params, hp, u, u_plus, triple.negative, neg_trend)?.score;
    let margin = tape.sub(neg, pos)?;
    let mut loss = tape.softplus(margin);
    if lambda != 0.0 {
        if let Some(reg) = Involved::for_windows(params, hp, triple, windows).node(tape)? {
            let reg = tape.scale(reg, lambda);
            loss = tape.add(loss, reg)?;
        }
    }
    Ok(LossNodes {
        loss,
        positive_score: pos,
        negative_score: neg,
    })
}

fn step_profiled(
    ds: &SplitDataset,
    params: &mut ModelParams,
    hp: &Hyperparams,
    cfg: &TrainConfig,
    opt: &mut OptimizerState,
    triple: BprTriple,
) -> Result<(f64, Profile)> {
    let (loss, grads, profile) = {
        let mut tape = Tape::new(&params.store);
        tape.set_profiling(true);
        let windows = TripleWindows::new(ds, hp, triple, cfg.hide_target);
        let nodes = bpr_loss_node_with(&mut tape, params, hp, cfg.lambda_reg, triple, &windows)?;
        let loss = tape.scalar(nodes.loss);
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "training loss is {loss} for triple (user {}, positive {}, negative {}); \
                 lower learning_rate (currently {}) or raise lambda_reg (currently {})",
                triple.user, triple.positive, triple.negative, cfg.learning_rate, cfg.lambda_reg
            )));
        }
        let grads = tape.backward(nodes.loss)?;
        (loss, grads, *tape.profile())
    };
    grads.apply_to(&mut params.store);
    opt.update(&mut params.store, cfg.learning_rate);
    params.store.zero_grad();
    Ok((loss, profile))
}

/// One forward/backward pass and optimizer update; returns the loss before
/// the update.
pub fn train_step(
    ds: &SplitDataset,
    params: &mut ModelParams,
    hp: &Hyperparams,
    cfg: &TrainConfig,
    opt: &mut OptimizerState,
    triple: BprTriple,
) -> Result<f64> {
    step_profiled(ds, params, hp, cfg, opt, triple).map(|(loss, _)| loss)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    /// Zero-based epoch index.
    pub epoch: usize,
    pub mean_loss: f64,
    pub seconds: f64,
    /// Time spent in attention logits, softmax and mixing (forward and
    /// backward).
    pub attention_seconds: f64,
    pub val_recall_at_10: Option<f64>,
}

pub const TRAINING_LOG_HEADER: &str = "epoch\tloss\tseconds\tval_recall@10";

impl EpochStats {
    pub fn to_tsv_row(&self) -> String {
        let val = self
            .val_recall_at_10
            .map_or_else(|| "nan".to_string(), |v| format!("{v:.6}"));
        format!(
            "{}\t{:.6}\t{:.3}\t{val}",
            self.epoch + 1,
            self.mean_loss,
            self.seconds
        )
    }
}

pub fn training_log(stats: &[EpochStats]) -> String {
    let mut out = format!("{TRAINING_LOG_HEADER}\n");
    for s in stats {
        let _ = writeln!(out, "{}", s.to_tsv_row());
    }
    out
}

/// Triples of epoch `epoch`, in training order.
pub fn epoch_triples(ds: &SplitDataset, cfg: &TrainConfig, epoch: usize) -> Result<Vec<BprTriple>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(epoch as u64 + 1);
    let pairs = ds.train_pairs();
    let negs = cfg.negatives_per_positive;
    let mut order: Vec<usize> = (0..pairs.len() * negs).collect();
    order.shuffle(&mut rng);
    order
        .into_iter()
        .map(|k| {
            let (user, positive) = pairs[k / negs];
            let negative = ds.sample_negative(user, &mut rng)?;
            Ok(BprTriple {
                user,
                positive,
                negative,
            })
        })
        .collect()
}

/// Runs epochs `first_epoch..cfg.epochs`, calling `on_epoch` after each.
pub fn train_epochs(
    ds: &SplitDataset,
    params: &mut ModelParams,
    hp: &Hyperparams,
    cfg: &TrainConfig,
    opt: &mut OptimizerState,
    first_epoch: usize,
    on_epoch: &mut dyn FnMut(&EpochStats, &ModelParams) -> Result<()>,
) -> Result<Vec<EpochStats>> {
    cfg.validate()?;
    hp.validate()?;
    params.check_compatible(hp, ds.num_users(), ds.num_items())?;
    opt.check_matches(&params.store)?;
    if ds.num_train() == 0 {
        return Err(Error::EmptyDataset("no training interactions".into()));
    }
    let mut all = Vec::new();
    for epoch in first_epoch..cfg.epochs {
        let start = Instant::now();
        let triples = epoch_triples(ds, cfg, epoch)?;
        let mut profile = Profile::default();
        let mut total = 0.0;
        for (step, &triple) in triples.iter().enumerate() {
            let (loss, p) =
                step_profiled(ds, params, hp, cfg, opt, triple).map_err(|e| match e {
                    Error::NonFinite(msg) => {
                        Error::NonFinite(format!("epoch {}, step {}: {msg}", epoch + 1, step + 1))
                    }
                    other => other,
                })?;
            total += loss;
            profile.merge(&p);
        }
        let seconds = start.elapsed().as_secs_f64();
        let val_recall_at_10 = if cfg.validate_each_epoch {
            match eval::evaluate(ds, params, hp, Split::Validation, &[10]) {
                Ok(report) => report.recall(Split::Validation, 10),
                Err(Error::Evaluation(_)) => None,
                Err(e) => return Err(e),
            }
        } else {
            None
        };
        let stats = EpochStats {
            epoch,
            mean_loss: total / triples.len() as f64,
            seconds,
            attention_seconds: profile.get(Section::AttentionCore).as_secs_f64(),
            val_recall_at_10,
        };
        on_epoch(&stats, params)?;
        all.push(stats);
    }
    Ok(all)
}

/// Trains `params` for `cfg.epochs` epochs from a fresh optimizer.
pub fn train(
    ds: &SplitDataset,
    mut params: ModelParams,
    hp: &Hyperparams,
    cfg: &TrainConfig,
) -> Result<(ModelParams, Vec<EpochStats>)> {
    let mut opt = OptimizerState::new(cfg.optimizer, &params.store);
    let stats = train_epochs(ds, &mut params, hp, cfg, &mut opt, 0, &mut |_, _| Ok(()))?;
    Ok((params, stats))
}
