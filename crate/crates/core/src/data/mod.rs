//! Interaction logs, cataloging, chronological splitting, the user/item
//! sequence views, and BPR triple sampling.

mod cache;
mod load;
mod split;

pub use cache::{read_prepared, write_prepared, DatasetStats, PREPARED_VERSION};
pub use load::{
    load, load_amazon_csv, load_movielens, parse_amazon_csv, parse_movielens, DatasetFormat,
    InteractionLog, RawInteraction,
};
pub use split::{
    chronological_split, BprTriple, Catalog, Interaction, Split, SplitDataset, SplitRatios,
    MIN_SPLIT_INTERACTIONS,
};
