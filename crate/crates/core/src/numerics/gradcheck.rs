use super::param::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// The parameter entry with the largest disagreement.
#[derive(Clone, Debug, PartialEq)]
pub struct WorstEntry {
    pub param: String,
    pub row: usize,
    pub col: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub entries_checked: usize,
    pub worst: Option<WorstEntry>,
}

/// Which parameter entries to perturb.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Entries {
    #[default]
    All,
    /// Only rows that received a gradient in the analytic pass. Rows outside
    /// that set cannot influence the loss, so this is equivalent to `All`
    /// for gather-based models and much cheaper on large tables.
    TouchedRows,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares the tape's analytic gradient of `loss_fn` with central
/// differences `(f(θ+ε) − f(θ−ε)) / 2ε` over every parameter entry.
///
/// Gradients in `store` are reset before and after the check.
pub fn finite_difference_check<F>(
    loss_fn: F,
    store: &mut ParamStore,
    eps: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<'_>) -> Result<Var>,
{
    finite_difference_check_with(loss_fn, store, eps, Entries::All)
}

pub fn finite_difference_check_with<F>(
    loss_fn: F,
    store: &mut ParamStore,
    eps: f64,
    entries: Entries,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<'_>) -> Result<Var>,
{
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::Config(format!("eps must be positive, got {eps}")));
    }
    store.zero_grad();
    let grads = {
        let mut tape = Tape::new(store);
        let out = loss_fn(&mut tape)?;
        check_finite(tape.scalar(out))?;
        tape.backward(out)?
    };
    grads.apply_to(store);

    let mut plan: Vec<(ParamId, usize)> = Vec::new();
    for (id, p) in store.iter() {
        match entries {
            Entries::All => plan.extend((0..p.value().rows()).map(|r| (id, r))),
            Entries::TouchedRows => {
                let mut rows = p.touched_rows().to_vec();
                rows.sort_unstable();
                plan.extend(rows.into_iter().map(|r| (id, r)));
            }
        }
    }

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        entries_checked: 0,
        worst: None,
    };
    let eval = |store: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new(store);
        let out = loss_fn(&mut tape)?;
        check_finite(tape.scalar(out))
    };
    for (id, row) in plan {
        let cols = store.get(id).value().cols();
        for col in 0..cols {
            let analytic = store.get(id).grad().get(row, col);
            let original = store.get(id).value().get(row, col);
            store.get_mut(id).value_mut().set(row, col, original + eps);
            let plus = eval(store);
            store.get_mut(id).value_mut().set(row, col, original - eps);
            let minus = eval(store);
            store.get_mut(id).value_mut().set(row, col, original);
            let numeric = (plus? - minus?) / (2.0 * eps);
            let err = relative_error(analytic, numeric);
            report.entries_checked += 1;
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some(WorstEntry {
                    param: store.get(id).name().to_string(),
                    row,
                    col,
                    analytic,
                    numeric,
                });
            }
        }
    }
    store.zero_grad();
    Ok(report)
}

fn check_finite(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("loss evaluated to {v}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Matrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Random matrix whose entries all satisfy |x| ≥ 1e-3, keeping ReLU and
    /// max away from their kinks.
    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        let data = (0..rows * cols)
            .map(|_| loop {
                let v: f64 = rng.gen_range(-1.0..1.0);
                if v.abs() >= 1e-3 {
                    break v;
                }
            })
            .collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn linear_loss_has_exact_unit_gradient() {
        let mut store = ParamStore::new();
        let a = store.add("a", Matrix::from_rows(&[[0.1, 0.2], [0.3, 0.4]]));
        let b = store.add("b", Matrix::from_rows(&[[-1.0, 5.0, 2.0]]));
        let report = finite_difference_check(
            |t| {
                let (x, y) = (t.param(a), t.param(b));
                let (sx, sy) = (t.sum(x), t.sum(y));
                t.add(sx, sy)
            },
            &mut store,
            1e-5,
        )
        .unwrap();
        assert_eq!(report.entries_checked, 7);
        assert!(report.max_rel_error < 1e-9, "{report:?}");
    }

    #[test]
    fn matmul_gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut store = ParamStore::new();
        let a = store.add("a", random_matrix(&mut rng, 3, 4));
        let b = store.add("b", random_matrix(&mut rng, 4, 2));
        let report = finite_difference_check(
            |t| {
                let (x, y) = (t.param(a), t.param(b));
                let p = t.matmul(x, y)?;
                Ok(t.sum(p))
            },
            &mut store,
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-5, "{report:?}");
    }

    #[test]
    fn non_finite_loss_is_reported() {
        let mut store = ParamStore::new();
        let a = store.add("a", Matrix::from_rows(&[[1.0]]));
        let err = finite_difference_check(
            |t| {
                let x = t.param(a);
                Ok(t.map(x, |_| f64::NAN, |_| 0.0))
            },
            &mut store,
            1e-5,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    #[test]
    fn worst_entry_is_named() {
        let mut store = ParamStore::new();
        let a = store.add("weights", Matrix::from_rows(&[[0.5, 2.0]]));
        // Derivative deliberately wrong (claims 3x² for x²).
        let report = finite_difference_check(
            |t| {
                let x = t.param(a);
                let y = t.map(x, |v| v * v, |v| 3.0 * v);
                Ok(t.sum(y))
            },
            &mut store,
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_error > 0.1);
        let worst = report.worst.unwrap();
        assert_eq!(worst.param, "weights");
        assert_eq!(worst.row, 0);
    }

    mod primitives {
        use super::*;
        use proptest::prelude::*;

        fn check(seed: u64, build: impl Fn(&mut Tape<'_>, Var, Var) -> Result<Var>) -> f64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (mut store, a, b) = loop {
                let mut store = ParamStore::new();
                let a = store.add("a", random_matrix(&mut rng, 3, 4));
                let b = store.add("b", random_matrix(&mut rng, 3, 4));
                let mut t = Tape::new(&store);
                let (x, y) = (t.param(a), t.param(b));
                build(&mut t, x, y).unwrap();
                if t.kink_margin() >= 1e-3 {
                    drop(t);
                    break (store, a, b);
                }
            };
            finite_difference_check(
                |t| {
                    let (x, y) = (t.param(a), t.param(b));
                    // Random linear read-out so gradients are non-uniform.
                    let out = build(t, x, y)?;
                    let (r, c) = t.value(out).shape();
                    let mut w = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
                    let weights = random_matrix(&mut w, r, c);
                    let w = t.constant(weights);
                    t.dot(out, w)
                },
                &mut store,
                1e-5,
            )
            .unwrap()
            .max_rel_error
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn relu(seed in any::<u64>()) {
                prop_assert!(check(seed, |t, x, _| Ok(t.relu(x))) < 1e-4);
            }

            #[test]
            fn softmax(seed in any::<u64>()) {
                prop_assert!(check(seed, |t, x, _| Ok(t.softmax_rows(x))) < 1e-4);
            }

            #[test]
            fn mean_and_max(seed in any::<u64>()) {
                prop_assert!(check(seed, |t, x, _| t.mean_rows(x)) < 1e-4);
                prop_assert!(check(seed, |t, x, _| t.max_rows(x)) < 1e-4);
            }

            #[test]
            fn binary_ops(seed in any::<u64>()) {
                let errors = [
                    check(seed, |t, x, y| t.matmul_transposed(x, y)),
                    check(seed, |t, x, y| t.sub(x, y)),
                    check(seed, |t, x, y| {
                        let s = t.add(x, y)?;
                        Ok(t.scale(s, -0.7))
                    }),
                    check(seed, |t, x, y| {
                        let d = t.dot(x, y)?;
                        Ok(t.softplus(d))
                    }),
                    check(seed, |t, x, _| Ok(t.sum_squares(x))),
                ];
                for e in errors {
                    prop_assert!(e < 1e-4, "rel error {}", e);
                }
            }
        }
    }
}
