use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, ParamStore};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Self::Sgd),
            "adam" => Ok(Self::Adam),
            other => Err(Error::Config(format!(
                "unknown optimizer {other:?} (expected sgd or adam)"
            ))),
        }
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// Per-parameter moment accumulators.
///
/// Updates touch only the rows that received gradient in the current step
/// (lazy Adam): an embedding row's moments are left as they are while the
/// row is not in use, and bias correction follows the global step count.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub step: u64,
    /// First moments, one per parameter in store order (empty for SGD).
    pub first: Vec<Matrix>,
    /// Second moments, one per parameter in store order (empty for SGD).
    pub second: Vec<Matrix>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, store: &ParamStore) -> Self {
        let zeros = || -> Vec<Matrix> {
            match kind {
                OptimizerKind::Sgd => Vec::new(),
                OptimizerKind::Adam => store
                    .iter()
                    .map(|(_, p)| {
                        let (r, c) = p.value().shape();
                        Matrix::zeros(r, c)
                    })
                    .collect(),
            }
        };
        Self {
            kind,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    /// Checks that moment shapes mirror the parameter shapes.
    pub fn check_matches(&self, store: &ParamStore) -> Result<()> {
        if self.kind == OptimizerKind::Sgd {
            return Ok(());
        }
        if self.first.len() != store.len() || self.second.len() != store.len() {
            return Err(Error::Checkpoint(format!(
                "optimizer holds {} moment tensors for {} parameters",
                self.first.len(),
                store.len()
            )));
        }
        for ((_, p), (m, v)) in store.iter().zip(self.first.iter().zip(&self.second)) {
            let shape = p.value().shape();
            if m.shape() != shape || v.shape() != shape {
                return Err(Error::Dimension {
                    op: "optimizer moments",
                    left: m.shape(),
                    right: shape,
                });
            }
        }
        Ok(())
    }

    /// Applies one update from the accumulated gradients of `store`.
    pub fn update(&mut self, store: &mut ParamStore, learning_rate: f64) {
        self.step += 1;
        let ids: Vec<_> = store.ids().collect();
        match self.kind {
            OptimizerKind::Sgd => {
                for id in ids {
                    let (value, grad, rows) = store.get_mut(id).update_view();
                    for &r in rows {
                        for (x, g) in value.row_mut(r).iter_mut().zip(grad.row(r)) {
                            *x -= learning_rate * g;
                        }
                    }
                }
            }
            OptimizerKind::Adam => {
                let t = self.step as f64;
                let step_size = learning_rate / (1.0 - ADAM_BETA1.powf(t));
                let inv_bias2 = 1.0 / (1.0 - ADAM_BETA2.powf(t));
                for id in ids {
                    let (value, grad, rows) = store.get_mut(id).update_view();
                    let first = &mut self.first[id.index()];
                    let second = &mut self.second[id.index()];
                    for &r in rows {
                        let x = value.row_mut(r);
                        let n = x.len();
                        let g = &grad.row(r)[..n];
                        let m = &mut first.row_mut(r)[..n];
                        let v = &mut second.row_mut(r)[..n];
                        for c in 0..n {
                            m[c] = ADAM_BETA1 * m[c] + (1.0 - ADAM_BETA1) * g[c];
                            v[c] = ADAM_BETA2 * v[c] + (1.0 - ADAM_BETA2) * g[c] * g[c];
                            x[c] -= step_size * m[c] / ((v[c] * inv_bias2).sqrt() + ADAM_EPSILON);
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with_grad(value: f64, grad: f64) -> ParamStore {
        let mut store = ParamStore::new();
        let id = store.add("w", Matrix::filled(2, 2, value));
        store.get_mut(id).accumulate_row(1, &[grad, -grad]);
        store
    }

    #[test]
    fn sgd_moves_only_touched_rows() {
        let mut store = store_with_grad(1.0, 0.5);
        let mut opt = OptimizerState::new(OptimizerKind::Sgd, &store);
        opt.update(&mut store, 0.1);
        let w = store.get(store.find("w").unwrap()).value();
        assert_eq!(w.row(0), &[1.0, 1.0]);
        assert_eq!(w.row(1), &[1.0 - 0.05, 1.0 + 0.05]);
    }

    #[test]
    fn first_adam_step_has_learning_rate_magnitude() {
        // With bias correction the first step is lr·g/(|g| + ε) ≈ lr·sign(g).
        let mut store = store_with_grad(0.0, 3.0);
        let mut opt = OptimizerState::new(OptimizerKind::Adam, &store);
        opt.update(&mut store, 0.01);
        let w = store.get(store.find("w").unwrap()).value();
        assert_eq!(w.row(0), &[0.0, 0.0]);
        assert!((w.get(1, 0) + 0.01).abs() < 1e-9);
        assert!((w.get(1, 1) - 0.01).abs() < 1e-9);
        assert_eq!(opt.first[0].row(0), &[0.0, 0.0]);
    }

    #[test]
    fn adam_matches_scalar_recurrence() {
        let grads = [0.3, -1.0, 2.5, 0.0, 0.7];
        let mut store = ParamStore::new();
        let id = store.add("w", Matrix::filled(1, 1, 0.2));
        let mut opt = OptimizerState::new(OptimizerKind::Adam, &store);
        let (mut x, mut m, mut v) = (0.2f64, 0.0f64, 0.0f64);
        let lr = 0.05;
        for (t, &g) in grads.iter().enumerate() {
            store.get_mut(id).accumulate_row(0, &[g]);
            opt.update(&mut store, lr);
            store.zero_grad();
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let t = (t + 1) as i32;
            let m_hat = m / (1.0 - 0.9f64.powi(t));
            let v_hat = v / (1.0 - 0.999f64.powi(t));
            x -= lr * m_hat / (v_hat.sqrt() + 1e-8);
        }
        assert!((store.get(id).value().get(0, 0) - x).abs() < 1e-15);
    }

    #[test]
    fn moment_shape_mismatch_is_reported() {
        let store = store_with_grad(0.0, 1.0);
        let mut opt = OptimizerState::new(OptimizerKind::Adam, &store);
        opt.first[0] = Matrix::zeros(3, 2);
        assert!(opt.check_matches(&store).is_err());
    }
}
