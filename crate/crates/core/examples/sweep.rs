//! Sensitivity of accuracy to the trend-window length `q`.

use trec::data::{chronological_split, SplitRatios};
use trec::eval::{sweep, Experiment, SweepParam, SWEEP_HEADER};
use trec::model::Hyperparams;
use trec::synthetic::planted_clusters;
use trec::training::TrainConfig;

fn main() -> trec::Result<()> {
    let log = planted_clusters(60, 48, 3, 16, 2);
    let (_, ds) = chronological_split(&log, SplitRatios::default())?;
    let base = Experiment {
        hp: Hyperparams {
            d: 16,
            ..Default::default()
        },
        train: TrainConfig {
            learning_rate: 0.01,
            epochs: 8,
            ..Default::default()
        },
        ks: vec![10],
    };
    println!("{SWEEP_HEADER}");
    sweep(
        &ds,
        &base,
        SweepParam::Q,
        &[1.0, 2.0, 4.0, 8.0],
        &mut |rows| {
            for row in rows {
                println!("{}", row.tsv_line());
            }
            Ok(())
        },
    )?;
    Ok(())
}
