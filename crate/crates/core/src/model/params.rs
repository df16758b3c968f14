use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, ParamId, ParamStore};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Mean,
    Max,
}

impl std::str::FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Self::Mean),
            "max" => Ok(Self::Max),
            other => Err(Error::Config(format!("unknown aggregation {other:?}"))),
        }
    }
}

/// Model shape and scoring weights.
///
/// The three `use_*` switches exist for ablations; all are on for the full
/// model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Hyperparams {
    /// Embedding dimension.
    pub d: usize,
    /// Length of the user's recent-item sequence.
    pub p: usize,
    /// Length of the item's recent-interactor list.
    pub q: usize,
    /// Weight of the long-term user embedding against `u⁺`.
    pub omega: f64,
    /// Trend weight paired with the long-term user embedding.
    pub alpha: f64,
    /// Trend weight paired with `u⁺`.
    pub beta: f64,
    pub aggregation: Aggregation,
    /// Separate tables for sequence/trend lookups instead of sharing the
    /// long-term ones.
    pub untied_tables: bool,
    pub use_self_attention: bool,
    pub use_item_trend: bool,
    pub use_short_term: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            d: 100,
            p: 5,
            q: 5,
            omega: 0.4,
            alpha: 0.5,
            beta: 0.5,
            aggregation: Aggregation::Mean,
            untied_tables: false,
            use_self_attention: true,
            use_item_trend: true,
            use_short_term: true,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.p == 0 || self.q == 0 {
            return Err(Error::Config(format!(
                "d, p and q must be at least 1 (d={}, p={}, q={})",
                self.d, self.p, self.q
            )));
        }
        if !(0.0..=1.0).contains(&self.omega) {
            return Err(Error::Config(format!(
                "omega must be in [0,1], got {}",
                self.omega
            )));
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0)
            || !self.alpha.is_finite()
            || !self.beta.is_finite()
        {
            return Err(Error::Config(format!(
                "alpha and beta must be finite and non-negative (alpha={}, beta={})",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }

    /// Whether `u⁺` can change a score: switched on and weighted by
    /// `1 − ω > 0`.
    pub fn short_term_active(&self) -> bool {
        self.use_short_term && self.omega < 1.0
    }

    /// Whether `v⁺` can change a score, through `α·ω` or through `β·(1 − ω)`
    /// paired with an active `u⁺`.
    pub fn item_trend_active(&self) -> bool {
        self.use_item_trend
            && (self.alpha * self.omega != 0.0
                || (self.beta * (1.0 - self.omega) != 0.0 && self.short_term_active()))
    }

    /// The matrix-factorization special case: `ω = 1, α = 0`.
    pub fn matrix_factorization(&self) -> Self {
        Self {
            omega: 1.0,
            alpha: 0.0,
            ..self.clone()
        }
    }
}

/// Learnable tensors of the model.
#[derive(Clone, Debug)]
pub struct ModelParams {
    pub store: ParamStore,
    /// Long-term user rows; also the rows gathered for item trend lists when
    /// tables are tied.
    pub user_table: ParamId,
    /// Long-term item rows; also the rows gathered for user sequences when
    /// tables are tied.
    pub item_table: ParamId,
    /// Table gathered for user sequences.
    pub sequence_table: ParamId,
    /// Table gathered for item trend lists.
    pub trend_table: ParamId,
    pub wq_seq: ParamId,
    pub wk_seq: ParamId,
    pub wq_trend: ParamId,
    pub wk_trend: ParamId,
    pub num_users: usize,
    pub num_items: usize,
    pub d: usize,
}

pub const USER_TABLE: &str = "user_table";
pub const ITEM_TABLE: &str = "item_table";
pub const SEQUENCE_TABLE: &str = "sequence_table";
pub const TREND_TABLE: &str = "trend_table";
pub const WQ_SEQ: &str = "wq_seq";
pub const WK_SEQ: &str = "wk_seq";
pub const WQ_TREND: &str = "wq_trend";
pub const WK_TREND: &str = "wk_trend";

impl ModelParams {
    /// Fills every tensor i.i.d. from `N(0, 1/d)`, deterministically in
    /// `seed`.
    pub fn init(num_users: usize, num_items: usize, hp: &Hyperparams, seed: u64) -> Result<Self> {
        hp.validate()?;
        if num_users == 0 || num_items == 0 {
            return Err(Error::Config(
                "model needs at least one user and one item".into(),
            ));
        }
        let d = hp.d;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal =
            Normal::new(0.0, 1.0 / (d as f64).sqrt()).map_err(|e| Error::Config(e.to_string()))?;
        let mut draw = |rows: usize, cols: usize| {
            let data = (0..rows * cols).map(|_| normal.sample(&mut rng)).collect();
            Matrix::from_vec(rows, cols, data)
        };
        let mut tensors = vec![
            (USER_TABLE, draw(num_users, d)?),
            (ITEM_TABLE, draw(num_items, d)?),
        ];
        if hp.untied_tables {
            tensors.push((SEQUENCE_TABLE, draw(num_items, d)?));
            tensors.push((TREND_TABLE, draw(num_users, d)?));
        }
        for name in [WQ_SEQ, WK_SEQ, WQ_TREND, WK_TREND] {
            tensors.push((name, draw(d, d)?));
        }
        let mut store = ParamStore::new();
        for (name, value) in tensors {
            store.add(name, value);
        }
        Self::from_store(store)
    }

    /// Resolves the named tensors of a store and checks their shapes.
    pub fn from_store(store: ParamStore) -> Result<Self> {
        let get = |name: &str| {
            store
                .find(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))
        };
        let user_table = get(USER_TABLE)?;
        let item_table = get(ITEM_TABLE)?;
        let sequence_table = store.find(SEQUENCE_TABLE).unwrap_or(item_table);
        let trend_table = store.find(TREND_TABLE).unwrap_or(user_table);
        let (num_users, d) = store.get(user_table).value().shape();
        let num_items = store.get(item_table).value().rows();
        let params = Self {
            user_table,
            item_table,
            sequence_table,
            trend_table,
            wq_seq: get(WQ_SEQ)?,
            wk_seq: get(WK_SEQ)?,
            wq_trend: get(WQ_TREND)?,
            wk_trend: get(WK_TREND)?,
            num_users,
            num_items,
            d,
            store,
        };
        let expect = |id: ParamId, shape: (usize, usize)| -> Result<()> {
            let actual = params.store.get(id).value().shape();
            if actual != shape {
                return Err(Error::Dimension {
                    op: "model tensor",
                    left: actual,
                    right: shape,
                });
            }
            Ok(())
        };
        expect(params.item_table, (num_items, d))?;
        expect(params.sequence_table, (num_items, d))?;
        expect(params.trend_table, (num_users, d))?;
        for w in [
            params.wq_seq,
            params.wk_seq,
            params.wq_trend,
            params.wk_trend,
        ] {
            expect(w, (d, d))?;
        }
        Ok(params)
    }

    pub fn untied(&self) -> bool {
        self.sequence_table != self.item_table
    }

    pub fn user_row(&self, user: usize) -> &[f64] {
        self.store.get(self.user_table).value().row(user)
    }

    pub fn item_row(&self, item: usize) -> &[f64] {
        self.store.get(self.item_table).value().row(item)
    }

    /// Checks that these parameters fit a run with the given shape.
    pub fn check_compatible(
        &self,
        hp: &Hyperparams,
        num_users: usize,
        num_items: usize,
    ) -> Result<()> {
        if self.d != hp.d {
            return Err(Error::Dimension {
                op: "checkpoint embedding dimension",
                left: (self.d, 1),
                right: (hp.d, 1),
            });
        }
        if (self.num_users, self.num_items) != (num_users, num_items) {
            return Err(Error::Dimension {
                op: "checkpoint catalog (users, items)",
                left: (self.num_users, self.num_items),
                right: (num_users, num_items),
            });
        }
        if self.untied() != hp.untied_tables {
            return Err(Error::Checkpoint(format!(
                "checkpoint untied_tables={} but run has untied_tables={}",
                self.untied(),
                hp.untied_tables
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn std_dev(values: &[f64]) -> f64 {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    }

    #[test]
    fn same_seed_gives_identical_parameters() {
        let hp = Hyperparams {
            d: 8,
            ..Default::default()
        };
        let a = ModelParams::init(5, 7, &hp, 42).unwrap();
        let b = ModelParams::init(5, 7, &hp, 42).unwrap();
        for ((_, pa), (_, pb)) in a.store.iter().zip(b.store.iter()) {
            let bits = |m: &Matrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(pa.value()), bits(pb.value()));
        }
        let c = ModelParams::init(5, 7, &hp, 43).unwrap();
        assert_ne!(
            a.store.get(a.user_table).value(),
            c.store.get(c.user_table).value()
        );
    }

    #[test]
    fn table_std_is_inverse_sqrt_d() {
        let hp = Hyperparams {
            d: 64,
            ..Default::default()
        };
        let params = ModelParams::init(1000, 3, &hp, 1).unwrap();
        let s = std_dev(params.store.get(params.user_table).value().as_slice());
        assert!((s - 0.125).abs() < 0.0125, "std {s}");
    }

    #[test]
    fn unit_dimension_has_unit_std() {
        let hp = Hyperparams {
            d: 1,
            ..Default::default()
        };
        let params = ModelParams::init(20000, 3, &hp, 2).unwrap();
        let s = std_dev(params.store.get(params.user_table).value().as_slice());
        assert!((s - 1.0).abs() < 0.03, "std {s}");
    }

    #[test]
    fn tied_tables_share_storage() {
        let hp = Hyperparams {
            d: 4,
            ..Default::default()
        };
        let tied = ModelParams::init(3, 4, &hp, 0).unwrap();
        assert_eq!(tied.store.len(), 6);
        assert_eq!(tied.sequence_table, tied.item_table);
        assert_eq!(tied.trend_table, tied.user_table);
        let untied = ModelParams::init(
            3,
            4,
            &Hyperparams {
                untied_tables: true,
                ..hp
            },
            0,
        )
        .unwrap();
        assert_eq!(untied.store.len(), 8);
        assert!(untied.untied());
    }

    #[test]
    fn hyperparams_validation() {
        assert!(Hyperparams::default().validate().is_ok());
        assert!(Hyperparams {
            omega: 1.5,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(Hyperparams {
            q: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(Hyperparams {
            alpha: -1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn compatibility_check_rejects_other_dimension() {
        let hp = Hyperparams {
            d: 64,
            ..Default::default()
        };
        let params = ModelParams::init(3, 4, &hp, 0).unwrap();
        let other = Hyperparams {
            d: 128,
            ..hp.clone()
        };
        assert!(matches!(
            params.check_compatible(&other, 3, 4),
            Err(Error::Dimension { .. })
        ));
        assert!(params.check_compatible(&hp, 3, 4).is_ok());
        assert!(params.check_compatible(&hp, 3, 5).is_err());
    }
}
