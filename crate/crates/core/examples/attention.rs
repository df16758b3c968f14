//! Self-attention and aggregation on a hand-written sequence.

use trec::model::{aggregate, self_attention, Aggregation};
use trec::numerics::{Matrix, ParamStore, Tape};

fn main() -> trec::Result<()> {
    let mut store = ParamStore::new();
    let wq = store.add(
        "wq",
        Matrix::from_rows(&[[1.0, 0.5, 0.0], [0.0, 1.0, 0.2], [0.3, 0.0, 1.0]]),
    );
    let wk = store.add(
        "wk",
        Matrix::from_rows(&[[0.8, 0.0, 0.1], [0.0, 0.9, 0.0], [0.2, 0.1, 0.7]]),
    );

    let mut tape = Tape::new(&store);
    let x = tape.constant(Matrix::from_rows(&[
        [1.0, 0.0, 0.0],
        [0.0, 2.0, 0.0],
        [0.5, 0.5, 1.0],
        [0.0, 0.0, 3.0],
    ]));
    let attended = self_attention(&mut tape, x, wq, wk)?;
    println!("input:\n{:?}", tape.value(x));
    println!(
        "attended (each row a convex combination of input rows):\n{:?}",
        tape.value(attended)
    );

    for aggregation in [Aggregation::Mean, Aggregation::Max] {
        let pooled = aggregate(&mut tape, attended, aggregation)?;
        println!("{aggregation:?}: {:?}", tape.value(pooled).as_slice());
    }
    Ok(())
}
