//! Trains on planted clusters and recovers them.
//!
//! Every user likes only the items of their own cluster, so a model that
//! learns the structure ranks held-out cluster items first.

use trec::data::{chronological_split, Split, SplitRatios};
use trec::eval::{train_and_evaluate, Experiment};
use trec::model::Hyperparams;
use trec::synthetic::planted_clusters;
use trec::training::TrainConfig;

fn main() -> trec::Result<()> {
    let log = planted_clusters(50, 40, 2, 20, 7);
    let (_, ds) = chronological_split(&log, SplitRatios::default())?;
    let exp = Experiment {
        hp: Hyperparams {
            d: 16,
            ..Default::default()
        },
        train: TrainConfig {
            learning_rate: 0.01,
            epochs: 30,
            ..Default::default()
        },
        ks: vec![10],
    };
    let (_, stats, report) = train_and_evaluate(&ds, &exp, Split::Test)?;
    for s in stats.iter().step_by(5) {
        println!("epoch {:>2}  loss {:.4}", s.epoch + 1, s.mean_loss);
    }
    println!(
        "test Recall@10 {:.3}  NDCG@10 {:.3}",
        report.recall(Split::Test, 10).unwrap(),
        report.ndcg(Split::Test, 10).unwrap()
    );
    Ok(())
}
