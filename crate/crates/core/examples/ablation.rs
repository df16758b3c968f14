//! The eight-architecture ablation on planted clusters.
//!
//! Pass a MovieLens `u.data` path to run it on real data instead.

use trec::data::{chronological_split, load_movielens, SplitRatios};
use trec::eval::{ablation_header, run_ablation_matrix, Experiment};
use trec::model::Hyperparams;
use trec::synthetic::planted_clusters;
use trec::training::TrainConfig;

fn main() -> trec::Result<()> {
    let (log, exp) = match std::env::args().nth(1) {
        Some(path) => (
            load_movielens(path)?,
            Experiment {
                hp: Hyperparams::default(),
                train: TrainConfig::default(),
                ks: vec![10, 20],
            },
        ),
        None => (
            planted_clusters(60, 48, 3, 16, 1),
            Experiment {
                hp: Hyperparams {
                    d: 16,
                    ..Default::default()
                },
                train: TrainConfig {
                    learning_rate: 0.01,
                    epochs: 10,
                    ..Default::default()
                },
                ks: vec![10, 20],
            },
        ),
    };
    let (_, ds) = chronological_split(&log, SplitRatios::default())?;
    println!("{}", ablation_header(&exp.ks));
    run_ablation_matrix(&ds, &exp, &mut |row| {
        println!("{}", row.tsv_line(&exp.ks));
        Ok(())
    })?;
    Ok(())
}
