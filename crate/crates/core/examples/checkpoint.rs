//! Saving a trained model and scoring with the reloaded copy.

use trec::data::{chronological_split, SplitRatios};
use trec::model::{Hyperparams, ModelParams, Scorer};
use trec::synthetic::planted_clusters;
use trec::training::{load_checkpoint, save_checkpoint, train, TrainConfig};

fn main() -> trec::Result<()> {
    let log = planted_clusters(20, 16, 2, 8, 3);
    let (_, ds) = chronological_split(&log, SplitRatios::default())?;
    let hp = Hyperparams {
        d: 8,
        ..Default::default()
    };
    let cfg = TrainConfig {
        epochs: 2,
        ..Default::default()
    };
    let params = ModelParams::init(ds.num_users(), ds.num_items(), &hp, cfg.seed)?;
    let (params, _) = train(&ds, params, &hp, &cfg)?;

    let dir = std::env::temp_dir().join("trec-checkpoint-example");
    let path = dir.join("model.bin");
    save_checkpoint(&path, &params, &hp, cfg.epochs, None)?;
    let restored = load_checkpoint(&path)?;
    println!(
        "{} bytes, {} epochs",
        std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0),
        restored.epochs_completed
    );

    let before = Scorer::new(&ds, &params, &hp)?.scores(0)?;
    let after = Scorer::new(&ds, &restored.params, &restored.hp)?.scores(0)?;
    assert_eq!(before, after);
    println!("user 0 scores identical after reload: {:?}", &after[..4]);
    std::fs::remove_dir_all(&dir).ok();
    Ok(())
}
