//! Recall and NDCG on a hand-ranked list.

use trec::eval::{ndcg_at_k, recall_at_k, top_k};

fn main() -> trec::Result<()> {
    let scores = [0.1, 0.9, 0.4, 0.9, 0.7, 0.2];
    // Item 1 is a training item and never ranked; 1 and 3 tie, lower index first.
    let ranked = top_k(&scores, &[1], 4);
    println!("ranking: {ranked:?}");

    let targets = [4, 5];
    for k in [1, 2, 4] {
        println!(
            "k={k}: recall {:.4}  ndcg {:.4}",
            recall_at_k(&ranked, &targets, k)?,
            ndcg_at_k(&ranked, &targets, k)?
        );
    }
    Ok(())
}
