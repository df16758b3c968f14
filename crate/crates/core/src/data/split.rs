use std::collections::HashMap;

use rand::Rng;

use super::load::InteractionLog;
use crate::error::{Error, Result};

/// Bijection between raw ids and dense indices, assigned in order of first
/// appearance in the log.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Catalog {
    users: Vec<String>,
    items: Vec<String>,
    user_index: HashMap<String, usize>,
    item_index: HashMap<String, usize>,
}

impl Catalog {
    pub fn from_ids(users: Vec<String>, items: Vec<String>) -> Result<Self> {
        let mut catalog = Catalog::default();
        for u in users {
            if catalog.intern_user(&u) != catalog.users.len() - 1 {
                return Err(Error::Config(format!("duplicate user id {u:?} in catalog")));
            }
        }
        for i in items {
            if catalog.intern_item(&i) != catalog.items.len() - 1 {
                return Err(Error::Config(format!("duplicate item id {i:?} in catalog")));
            }
        }
        Ok(catalog)
    }

    fn intern_user(&mut self, raw: &str) -> usize {
        intern(&mut self.users, &mut self.user_index, raw)
    }

    fn intern_item(&mut self, raw: &str) -> usize {
        intern(&mut self.items, &mut self.item_index, raw)
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn user_index(&self, raw: &str) -> Option<usize> {
        self.user_index.get(raw).copied()
    }

    pub fn item_index(&self, raw: &str) -> Option<usize> {
        self.item_index.get(raw).copied()
    }

    pub fn user_id(&self, index: usize) -> &str {
        &self.users[index]
    }

    pub fn item_id(&self, index: usize) -> &str {
        &self.items[index]
    }

    pub fn user_ids(&self) -> &[String] {
        &self.users
    }

    pub fn item_ids(&self) -> &[String] {
        &self.items
    }
}

fn intern(ids: &mut Vec<String>, index: &mut HashMap<String, usize>, raw: &str) -> usize {
    if let Some(&i) = index.get(raw) {
        return i;
    }
    ids.push(raw.to_string());
    index.insert(raw.to_string(), ids.len() - 1);
    ids.len() - 1
}

/// An indexed interaction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Interaction {
    pub user: usize,
    pub item: usize,
    pub timestamp: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.7,
            validation: 0.2,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    /// Every fraction must lie in [0,1] and they must sum to one.
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|r| !(0.0..=1.0).contains(r))
            || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::Config(format!(
                "split ratios must be in [0,1] and sum to 1, got {parts:?}"
            )));
        }
        Ok(())
    }

    /// Per-user partition sizes `(train, validation, test)` for `n`
    /// interactions.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        if n < MIN_SPLIT_INTERACTIONS {
            return (n, 0, 0);
        }
        // The epsilon absorbs products like 0.7 * 70 = 48.999…
        let train = ((self.train * n as f64) + 1e-9).floor() as usize;
        let validation = (((self.validation * n as f64) + 1e-9).floor() as usize).min(n - train);
        (train, validation, n - train - validation)
    }
}

/// Users with fewer interactions keep everything in train and are not
/// evaluated.
pub const MIN_SPLIT_INTERACTIONS: usize = 3;

/// A (user, preferred item, non-interacted item) training example.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BprTriple {
    pub user: usize,
    pub positive: usize,
    pub negative: usize,
}

/// Per-user chronological train/validation/test partitions plus the item
/// trend index built from training interactions only.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitDataset {
    num_users: usize,
    num_items: usize,
    train: Vec<Vec<(usize, i64)>>,
    validation: Vec<Vec<(usize, i64)>>,
    test: Vec<Vec<(usize, i64)>>,
    /// Sorted, deduplicated items of each user's full log (L^u).
    interacted: Vec<Vec<usize>>,
    /// Sorted, deduplicated training items per user.
    train_items: Vec<Vec<usize>>,
    /// Per item, training interactors sorted by descending timestamp.
    trend: Vec<Vec<(usize, i64)>>,
    /// Flattened training interactions, user-major in time order.
    train_pairs: Vec<(usize, usize)>,
}

impl SplitDataset {
    /// Builds a dataset from per-user, time-ascending partitions.
    pub fn from_partitions(
        num_users: usize,
        num_items: usize,
        train: Vec<Vec<(usize, i64)>>,
        validation: Vec<Vec<(usize, i64)>>,
        test: Vec<Vec<(usize, i64)>>,
    ) -> Result<Self> {
        if train.len() != num_users || validation.len() != num_users || test.len() != num_users {
            return Err(Error::Config(
                "partition count does not match num_users".into(),
            ));
        }
        let mut interacted = vec![Vec::new(); num_users];
        let mut train_items = vec![Vec::new(); num_users];
        let mut trend: Vec<Vec<(usize, i64)>> = vec![Vec::new(); num_items];
        let mut train_pairs = Vec::new();
        for u in 0..num_users {
            for part in [&train[u], &validation[u], &test[u]] {
                for &(item, _) in part {
                    if item >= num_items {
                        return Err(Error::Index {
                            what: "item",
                            index: item,
                            len: num_items,
                        });
                    }
                    interacted[u].push(item);
                }
            }
            for &(item, ts) in &train[u] {
                train_items[u].push(item);
                trend[item].push((u, ts));
                train_pairs.push((u, item));
            }
            interacted[u].sort_unstable();
            interacted[u].dedup();
            train_items[u].sort_unstable();
            train_items[u].dedup();
        }
        for list in &mut trend {
            // Stable: equal timestamps keep user-index order.
            list.sort_by_key(|&(_, ts)| std::cmp::Reverse(ts));
        }
        Ok(Self {
            num_users,
            num_items,
            train,
            validation,
            test,
            interacted,
            train_items,
            trend,
            train_pairs,
        })
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_train(&self) -> usize {
        self.train_pairs.len()
    }

    pub fn num_interactions(&self) -> usize {
        (0..self.num_users)
            .map(|u| self.train[u].len() + self.validation[u].len() + self.test[u].len())
            .sum()
    }

    /// Time-ascending `(item, timestamp)` list of one partition.
    pub fn partition(&self, user: usize, split: Split) -> &[(usize, i64)] {
        match split {
            Split::Train => &self.train[user],
            Split::Validation => &self.validation[user],
            Split::Test => &self.test[user],
        }
    }

    /// Distinct items of `split` for `user`, sorted.
    pub fn targets(&self, user: usize, split: Split) -> Vec<usize> {
        let mut items: Vec<usize> = self
            .partition(user, split)
            .iter()
            .map(|&(i, _)| i)
            .collect();
        items.sort_unstable();
        items.dedup();
        items
    }

    /// Sorted distinct training items of `user` (H_u).
    pub fn train_items(&self, user: usize) -> &[usize] {
        &self.train_items[user]
    }

    /// Sorted distinct items of `user` across all partitions (L^u).
    pub fn interacted_items(&self, user: usize) -> &[usize] {
        &self.interacted[user]
    }

    pub fn has_interacted(&self, user: usize, item: usize) -> bool {
        self.interacted[user].binary_search(&item).is_ok()
    }

    /// Training interactors of `item`, most recent first.
    pub fn trend(&self, item: usize) -> &[(usize, i64)] {
        &self.trend[item]
    }

    /// Flattened training interactions `(user, item)`.
    pub fn train_pairs(&self) -> &[(usize, usize)] {
        &self.train_pairs
    }

    /// The user's last `min(p, |train|)` training items, oldest first.
    pub fn user_recent_sequence(&self, user: usize, p: usize) -> Vec<usize> {
        let train = &self.train[user];
        let start = train.len().saturating_sub(p);
        train[start..].iter().map(|&(i, _)| i).collect()
    }

    /// The item's `min(q, |trend|)` most recent training interactors, most
    /// recent first.
    pub fn item_recent_users(&self, item: usize, q: usize) -> Vec<usize> {
        self.trend[item].iter().take(q).map(|&(u, _)| u).collect()
    }

    /// Like [`user_recent_sequence`](Self::user_recent_sequence) with every
    /// interaction with `hidden` skipped, so the window reaches further back.
    pub fn user_recent_sequence_without(&self, user: usize, p: usize, hidden: usize) -> Vec<usize> {
        let mut items: Vec<usize> = self.train[user]
            .iter()
            .rev()
            .map(|&(i, _)| i)
            .filter(|&i| i != hidden)
            .take(p)
            .collect();
        items.reverse();
        items
    }

    /// Like [`item_recent_users`](Self::item_recent_users) with `hidden`
    /// skipped.
    pub fn item_recent_users_without(&self, item: usize, q: usize, hidden: usize) -> Vec<usize> {
        self.trend[item]
            .iter()
            .map(|&(u, _)| u)
            .filter(|&u| u != hidden)
            .take(q)
            .collect()
    }

    /// Uniform negative for `user` by rejection over the item catalog.
    pub fn sample_negative<R: Rng + ?Sized>(&self, user: usize, rng: &mut R) -> Result<usize> {
        if self.interacted[user].len() >= self.num_items {
            return Err(Error::Sampling(format!(
                "user {user} has interacted with every item"
            )));
        }
        loop {
            let j = rng.gen_range(0..self.num_items);
            if !self.has_interacted(user, j) {
                return Ok(j);
            }
        }
    }

    /// Draws a training interaction uniformly, then a negative item for its
    /// user. Interactions whose user covers the whole catalog are redrawn a
    /// bounded number of times.
    pub fn sample_bpr_triple<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<BprTriple> {
        if self.train_pairs.is_empty() {
            return Err(Error::Sampling("no training interactions".into()));
        }
        const MAX_REDRAWS: usize = 1000;
        for _ in 0..MAX_REDRAWS {
            let (user, positive) = self.train_pairs[rng.gen_range(0..self.train_pairs.len())];
            if self.interacted[user].len() >= self.num_items {
                continue;
            }
            let negative = self.sample_negative(user, rng)?;
            return Ok(BprTriple {
                user,
                positive,
                negative,
            });
        }
        Err(Error::Sampling(format!(
            "no user with a non-interacted item after {MAX_REDRAWS} draws"
        )))
    }
}

/// Catalogs a log and splits each user's interactions chronologically.
///
/// Ties in timestamp keep file order.
pub fn chronological_split(
    log: &InteractionLog,
    ratios: SplitRatios,
) -> Result<(Catalog, SplitDataset)> {
    ratios.validate()?;
    if log.is_empty() {
        return Err(Error::EmptyDataset("interaction log".into()));
    }
    let mut catalog = Catalog::default();
    let mut per_user: Vec<Vec<(usize, i64)>> = Vec::new();
    for rec in &log.records {
        let u = catalog.intern_user(&rec.user);
        let i = catalog.intern_item(&rec.item);
        if u == per_user.len() {
            per_user.push(Vec::new());
        }
        per_user[u].push((i, rec.timestamp));
    }
    let num_users = catalog.num_users();
    let mut train = Vec::with_capacity(num_users);
    let mut validation = Vec::with_capacity(num_users);
    let mut test = Vec::with_capacity(num_users);
    for mut history in per_user {
        history.sort_by_key(|&(_, ts)| ts);
        let (n_train, n_valid, _) = ratios.sizes(history.len());
        let rest = history.split_off(n_train);
        let (v, t) = rest.split_at(n_valid);
        validation.push(v.to_vec());
        test.push(t.to_vec());
        train.push(history);
    }
    let ds =
        SplitDataset::from_partitions(num_users, catalog.num_items(), train, validation, test)?;
    Ok((catalog, ds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn log_of(rows: &[(&str, &str, i64)]) -> InteractionLog {
        let mut log = InteractionLog::default();
        for &(u, i, t) in rows {
            log.push(u, i, t);
        }
        log
    }

    #[test]
    fn ten_interactions_split_seven_two_one() {
        let rows: Vec<(String, String, i64)> = (0..10)
            .map(|k| ("a".into(), format!("i{k}"), 100 - k as i64))
            .collect();
        let rows: Vec<(&str, &str, i64)> = rows
            .iter()
            .map(|(u, i, t)| (u.as_str(), i.as_str(), *t))
            .collect();
        let (_, ds) = chronological_split(&log_of(&rows), SplitRatios::default()).unwrap();
        assert_eq!(ds.partition(0, Split::Train).len(), 7);
        assert_eq!(ds.partition(0, Split::Validation).len(), 2);
        assert_eq!(ds.partition(0, Split::Test).len(), 1);
        let train_ts: Vec<i64> = ds.partition(0, Split::Train).iter().map(|x| x.1).collect();
        assert_eq!(train_ts, vec![91, 92, 93, 94, 95, 96, 97]);
    }

    #[test]
    fn two_interaction_user_keeps_everything_in_train() {
        let (_, ds) = chronological_split(
            &log_of(&[("a", "x", 1), ("a", "y", 2)]),
            SplitRatios::default(),
        )
        .unwrap();
        assert_eq!(ds.partition(0, Split::Train).len(), 2);
        assert!(ds.partition(0, Split::Validation).is_empty());
        assert!(ds.partition(0, Split::Test).is_empty());
    }

    #[test]
    fn sizes_handle_inexact_products() {
        let r = SplitRatios::default();
        assert_eq!(r.sizes(70), (49, 14, 7));
        assert_eq!(r.sizes(3), (2, 0, 1));
        assert_eq!(r.sizes(20), (14, 4, 2));
    }

    #[test]
    fn empty_log_is_rejected() {
        assert!(matches!(
            chronological_split(&InteractionLog::default(), SplitRatios::default()),
            Err(Error::EmptyDataset(_))
        ));
    }

    #[test]
    fn bad_ratios_are_rejected() {
        let r = SplitRatios {
            train: 0.7,
            validation: 0.2,
            test: 0.2,
        };
        assert!(chronological_split(&log_of(&[("a", "x", 1)]), r).is_err());
    }

    #[test]
    fn sequence_truncation_and_sliding_window() {
        let rows = [("a", "x", 1), ("a", "y", 2), ("a", "z", 3)];
        let all_train = SplitRatios {
            train: 1.0,
            validation: 0.0,
            test: 0.0,
        };
        let (c, ds) = chronological_split(&log_of(&rows[..2]), all_train).unwrap();
        let x = c.item_index("x").unwrap();
        let y = c.item_index("y").unwrap();
        assert_eq!(ds.user_recent_sequence(0, 5), vec![x, y]);
        let (c, ds) = chronological_split(&log_of(&rows), all_train).unwrap();
        let z = c.item_index("z").unwrap();
        assert_eq!(ds.user_recent_sequence(0, 2), vec![y, z]);
    }

    #[test]
    fn hidden_pair_is_skipped_and_the_window_reaches_back() {
        let rows = [
            ("a", "x", 1),
            ("a", "y", 2),
            ("a", "z", 3),
            ("b", "z", 4),
            ("c", "z", 5),
        ];
        let all_train = SplitRatios {
            train: 1.0,
            validation: 0.0,
            test: 0.0,
        };
        let (c, ds) = chronological_split(&log_of(&rows), all_train).unwrap();
        let item = |s| c.item_index(s).unwrap();
        let user = |s| c.user_index(s).unwrap();
        let (a, z) = (user("a"), item("z"));
        assert_eq!(
            ds.user_recent_sequence_without(a, 2, z),
            vec![item("x"), item("y")]
        );
        assert_eq!(
            ds.user_recent_sequence_without(a, 2, item("x")),
            ds.user_recent_sequence(a, 2)
        );
        assert_eq!(ds.item_recent_users(z, 2), vec![user("c"), user("b")]);
        assert_eq!(
            ds.item_recent_users_without(z, 2, user("c")),
            vec![user("b"), a]
        );
        assert!(ds.item_recent_users_without(item("x"), 3, a).is_empty());
    }

    #[test]
    fn single_interactor_trend() {
        let (c, ds) =
            chronological_split(&log_of(&[("a", "x", 1)]), SplitRatios::default()).unwrap();
        let x = c.item_index("x").unwrap();
        assert_eq!(ds.item_recent_users(x, 4), vec![0]);
    }

    #[test]
    fn unknown_user_has_empty_sequence() {
        let ds = SplitDataset::from_partitions(
            2,
            1,
            vec![vec![(0, 1)], vec![]],
            vec![vec![]; 2],
            vec![vec![]; 2],
        )
        .unwrap();
        assert!(ds.user_recent_sequence(1, 3).is_empty());
    }

    #[test]
    fn catalog_round_trip() {
        let (c, _) = chronological_split(
            &log_of(&[("u9", "i3", 1), ("u2", "i3", 2), ("u9", "i1", 3)]),
            SplitRatios::default(),
        )
        .unwrap();
        for u in 0..c.num_users() {
            assert_eq!(c.user_index(c.user_id(u)), Some(u));
        }
        for i in 0..c.num_items() {
            assert_eq!(c.item_index(c.item_id(i)), Some(i));
        }
        assert_eq!(c.num_users(), 2);
        assert_eq!(c.num_items(), 2);
    }

    #[test]
    fn duplicates_are_kept_in_trend_index() {
        let (c, ds) = chronological_split(
            &log_of(&[("a", "x", 1), ("a", "x", 5)]),
            SplitRatios::default(),
        )
        .unwrap();
        let x = c.item_index("x").unwrap();
        assert_eq!(ds.trend(x), &[(0, 5), (0, 1)]);
        assert_eq!(ds.train_items(0), &[x]);
    }

    #[test]
    fn sampler_is_deterministic_under_seed() {
        let rows = [("a", "x", 1), ("a", "y", 2), ("b", "z", 1), ("b", "w", 2)];
        let (_, ds) = chronological_split(&log_of(&rows), SplitRatios::default()).unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50)
                .map(|_| ds.sample_bpr_triple(&mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(3), draw(3));
    }

    #[test]
    fn sampler_errors_when_no_negative_exists() {
        let (_, ds) =
            chronological_split(&log_of(&[("a", "x", 1)]), SplitRatios::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            ds.sample_bpr_triple(&mut rng),
            Err(Error::Sampling(_))
        ));
    }
}
