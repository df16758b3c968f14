//! Finite-difference check of the full model's loss gradient.
//!
//! ```text
//! cargo run --release --example gradcheck
//! ```

use trec::training::{check_model_gradients, GradCheckProblem, GRADCHECK_TOLERANCE};

fn main() -> trec::Result<()> {
    for seed in 0..5 {
        let problem = GradCheckProblem::small(seed)?;
        let check = check_model_gradients(&problem, seed)?;
        let worst = check.report.worst.as_ref().expect("entries were checked");
        println!(
            "seed {seed}: triple {:?}, {} entries, max rel. error {:.2e} at {}[{}, {}]",
            check.triple,
            check.report.entries_checked,
            check.report.max_rel_error,
            worst.param,
            worst.row,
            worst.col
        );
        assert!(check.report.max_rel_error < GRADCHECK_TOLERANCE);
    }
    Ok(())
}
