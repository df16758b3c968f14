//! Train and evaluate on MovieLens100K.
//!
//! ```text
//! cargo run --release --example movielens -- [path/to/u.data] [epochs]
//! ```

use std::time::Instant;

use trec::data::{chronological_split, load_movielens, Split, SplitRatios};
use trec::eval::evaluate;
use trec::model::{Hyperparams, ModelParams};
use trec::training::{train_epochs, OptimizerState, TrainConfig};

fn main() -> trec::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| "data/ml-100k/u.data".into());
    let epochs: usize = args
        .next()
        .map_or(10, |s| s.parse().expect("epochs must be an integer"));

    let log = load_movielens(&path)?;
    let (_, ds) = chronological_split(&log, SplitRatios::default())?;
    println!(
        "{} users, {} items, {} training interactions",
        ds.num_users(),
        ds.num_items(),
        ds.num_train()
    );

    let hp = Hyperparams::default();
    let cfg = TrainConfig {
        epochs,
        ..Default::default()
    };
    let mut params = ModelParams::init(ds.num_users(), ds.num_items(), &hp, cfg.seed)?;
    let mut opt = OptimizerState::new(cfg.optimizer, &params.store);
    train_epochs(
        &ds,
        &mut params,
        &hp,
        &cfg,
        &mut opt,
        0,
        &mut |stats, params| {
            let start = Instant::now();
            let report = evaluate(&ds, params, &hp, Split::Test, &[10, 20])?;
            println!(
            "epoch {:>2}  loss {:.4}  {:.1}s (attention {:.1}s)  test R@10 {:.4}  N@10 {:.4}  R@20 {:.4}  [eval {:.1}s]",
            stats.epoch + 1,
            stats.mean_loss,
            stats.seconds,
            stats.attention_seconds,
            report.recall(Split::Test, 10).unwrap(),
            report.ndcg(Split::Test, 10).unwrap(),
            report.recall(Split::Test, 20).unwrap(),
            start.elapsed().as_secs_f64()
        );
            Ok(())
        },
    )?;
    Ok(())
}
