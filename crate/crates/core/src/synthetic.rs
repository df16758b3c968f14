//! Generated interaction logs for tests, examples and self-checks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::InteractionLog;

/// Users split into `clusters` groups; each user interacts only with items
/// of their own group (`item % clusters == user % clusters`), drawing
/// `per_user` distinct items in random order.
pub fn planted_clusters(
    num_users: usize,
    num_items: usize,
    clusters: usize,
    per_user: usize,
    seed: u64,
) -> InteractionLog {
    assert!(clusters >= 1 && num_items >= clusters);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut log = InteractionLog::default();
    for u in 0..num_users {
        let c = u % clusters;
        let mut own: Vec<usize> = (0..num_items).filter(|i| i % clusters == c).collect();
        own.shuffle(&mut rng);
        let base = 1_000_000 + rng.gen_range(0..1000) as i64;
        for (k, &item) in own.iter().take(per_user).enumerate() {
            log.push(format!("u{u}"), format!("i{item}"), base + 60 * k as i64);
        }
    }
    log
}

/// Uniformly random log: every user draws between `min_per_user` and
/// `max_per_user` interactions (repeats allowed) with random timestamps.
pub fn random_log(
    num_users: usize,
    num_items: usize,
    min_per_user: usize,
    max_per_user: usize,
    seed: u64,
) -> InteractionLog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut log = InteractionLog::default();
    for u in 0..num_users {
        let n = rng.gen_range(min_per_user..=max_per_user);
        for _ in 0..n {
            let item = rng.gen_range(0..num_items);
            log.push(
                format!("u{u}"),
                format!("i{item}"),
                rng.gen_range(0..1_000_000),
            );
        }
    }
    log
}

/// The ten-user, eight-item interaction matrix used to illustrate recent
/// user sequences and item trend lists.
///
/// Raw ids are `u1..u10` and `v1..v8`. Column `v8` carries the timestamps
/// of the illustration, in the row order it lists (most recent first);
/// `u1`'s remaining items are placed after its `v8` interaction so its four
/// most recent items are `v1, v4, v5, v7`.
pub fn trend_illustration() -> InteractionLog {
    const MATRIX: [[u8; 8]; 10] = [
        [1, 0, 1, 1, 1, 0, 1, 1],
        [0, 0, 1, 1, 0, 1, 0, 0],
        [1, 1, 0, 1, 1, 0, 0, 1],
        [0, 0, 1, 0, 1, 0, 0, 1],
        [1, 1, 0, 1, 1, 0, 0, 0],
        [0, 0, 0, 0, 1, 0, 0, 1],
        [1, 0, 0, 0, 1, 0, 0, 1],
        [1, 1, 0, 1, 1, 0, 0, 1],
        [0, 0, 1, 0, 1, 0, 0, 1],
        [0, 0, 1, 0, 1, 0, 0, 1],
    ];
    const JAN_1_2020: i64 = 1_577_836_800;
    let at =
        |day: i64, hour: i64, minute: i64| JAN_1_2020 + day * 86_400 + hour * 3_600 + minute * 60;
    // (user row, timestamp) for v8, most recent first.
    let v8 = [
        (0, at(93, 12, 30)), // Apr-3 12:30
        (2, at(91, 22, 23)), // Apr-1 22:23
        (3, at(32, 12, 30)), // Feb-2 12:30
        (5, at(31, 14, 20)), // Feb-1, listed above the 8:32 entry
        (6, at(31, 8, 32)),  // Feb-1 8:32
        (7, at(11, 2, 30)),  // Jan-12 2:30
        (8, at(10, 11, 8)),  // Jan-11 11:08
        (9, at(2, 4, 20)),   // Jan-3 4:20
    ];
    let mut log = InteractionLog::default();
    for (row, cells) in MATRIX.iter().enumerate() {
        for (col, &cell) in cells.iter().enumerate() {
            if cell == 0 {
                continue;
            }
            let ts = if col == 7 {
                v8.iter().find(|(r, _)| *r == row).map(|&(_, t)| t).unwrap()
            } else if row == 0 && col != 2 {
                // u1's recent items v1, v4, v5, v7 on May 1..4.
                at(121 + col as i64, 9, 0)
            } else {
                at(0, row as i64, col as i64)
            };
            log.push(format!("u{}", row + 1), format!("v{}", col + 1), ts);
        }
    }
    log
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_users_stay_in_cluster() {
        let log = planted_clusters(10, 40, 2, 20, 3);
        assert_eq!(log.len(), 200);
        for r in &log.records {
            let u: usize = r.user[1..].parse().unwrap();
            let i: usize = r.item[1..].parse().unwrap();
            assert_eq!(u % 2, i % 2);
        }
    }

    #[test]
    fn illustration_has_expected_counts() {
        let log = trend_illustration();
        assert_eq!(log.len(), 6 + 3 + 5 + 3 + 4 + 2 + 3 + 5 + 3 + 3);
    }
}
