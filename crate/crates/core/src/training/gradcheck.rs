use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::bpr_loss_node;
use crate::data::{chronological_split, BprTriple, SplitDataset, SplitRatios};
use crate::error::{Error, Result};
use crate::model::{Hyperparams, ModelParams};
use crate::numerics::{finite_difference_check, GradCheckReport, Tape};
use crate::synthetic;

/// Largest acceptable relative error between analytic and numeric gradients.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

pub const GRADCHECK_EPS: f64 = 1e-6;

/// Regularization weight used during the check, large enough that the L2
/// gradient is visible next to the ranking term.
pub const GRADCHECK_LAMBDA: f64 = 0.05;

/// The tiny problem the full-model check runs on.
#[derive(Clone, Debug)]
pub struct GradCheckProblem {
    pub ds: SplitDataset,
    pub hp: Hyperparams,
}

impl GradCheckProblem {
    /// 10 users, 12 items, `d = 8`, `p = q = 3`.
    pub fn small(seed: u64) -> Result<Self> {
        let log = synthetic::random_log(10, 12, 5, 9, seed);
        let (_, ds) = chronological_split(&log, SplitRatios::default())?;
        Ok(Self {
            ds,
            hp: Hyperparams {
                d: 8,
                p: 3,
                q: 3,
                ..Default::default()
            },
        })
    }
}

#[derive(Clone, Debug)]
pub struct ModelCheck {
    pub seed: u64,
    pub triple: BprTriple,
    pub report: GradCheckReport,
}

impl ModelCheck {
    pub fn passed(&self) -> bool {
        self.report.max_rel_error < GRADCHECK_TOLERANCE
    }
}

/// Checks the gradient of the full BPR loss for one seeded draw of
/// parameters and training triple.
///
/// Triples whose forward pass lands within `100·eps` of a ReLU or max kink
/// are redrawn, since central differences are not defined across a kink.
pub fn check_model_gradients(problem: &GradCheckProblem, seed: u64) -> Result<ModelCheck> {
    let GradCheckProblem { ds, hp } = problem;
    let mut params = ModelParams::init(ds.num_users(), ds.num_items(), hp, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..50 {
        let triple = ds.sample_bpr_triple(&mut rng)?;
        let margin = {
            let mut tape = Tape::new(&params.store);
            bpr_loss_node(&mut tape, ds, &params, hp, GRADCHECK_LAMBDA, triple)?;
            tape.kink_margin()
        };
        if margin < 100.0 * GRADCHECK_EPS {
            continue;
        }
        let ids = params.clone();
        let report = finite_difference_check(
            |tape| Ok(bpr_loss_node(tape, ds, &ids, hp, GRADCHECK_LAMBDA, triple)?.loss),
            &mut params.store,
            GRADCHECK_EPS,
        )?;
        return Ok(ModelCheck {
            seed,
            triple,
            report,
        });
    }
    Err(Error::Sampling(format!(
        "seed {seed}: every sampled triple sits on a kink"
    )))
}
