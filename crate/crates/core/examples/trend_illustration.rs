//! The recent-item and recent-user windows on a small hand-built log.

use trec::data::{chronological_split, SplitRatios};
use trec::synthetic::trend_illustration;

fn main() -> trec::Result<()> {
    let log = trend_illustration();
    let ratios = SplitRatios {
        train: 1.0,
        validation: 0.0,
        test: 0.0,
    };
    let (catalog, ds) = chronological_split(&log, ratios)?;
    let names = |ids: Vec<usize>, name: &dyn Fn(usize) -> String| {
        ids.into_iter().map(name).collect::<Vec<_>>().join(", ")
    };

    let u1 = catalog.user_index("u1").expect("u1 exists");
    let recent = ds.user_recent_sequence(u1, 4);
    println!(
        "4 most recent items of u1: {}",
        names(recent, &|i| catalog.item_id(i).to_string())
    );

    let v8 = catalog.item_index("v8").expect("v8 exists");
    let recent = ds.item_recent_users(v8, 4);
    println!(
        "4 most recent users of v8: {}",
        names(recent, &|u| catalog.user_id(u).to_string())
    );
    Ok(())
}
