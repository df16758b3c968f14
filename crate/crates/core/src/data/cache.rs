//! Line-oriented prepared-dataset file: catalog plus per-user partitions.
//!
//! ```text
//! trec-prepared<TAB>1
//! users<TAB><n>
//! items<TAB><m>
//! u<TAB><raw id>            (n lines, index order)
//! i<TAB><raw id>            (m lines, index order)
//! r<TAB><user><TAB><item><TAB><timestamp><TAB><train|validation|test>
//! sha256<TAB><hex digest of every preceding byte>
//! ```

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::split::{Catalog, Split, SplitDataset};
use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const PREPARED_VERSION: &str = "1";
const MAGIC: &str = "trec-prepared";

/// Summary printed by `prepare`.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetStats {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    pub median_per_user: f64,
}

impl DatasetStats {
    pub fn of(ds: &SplitDataset) -> Self {
        let mut counts: Vec<usize> = (0..ds.num_users())
            .map(|u| {
                [Split::Train, Split::Validation, Split::Test]
                    .iter()
                    .map(|&s| ds.partition(u, s).len())
                    .sum()
            })
            .collect();
        counts.sort_unstable();
        let n = counts.len();
        let median_per_user = match n {
            0 => 0.0,
            _ if n % 2 == 1 => counts[n / 2] as f64,
            _ => (counts[n / 2 - 1] + counts[n / 2]) as f64 / 2.0,
        };
        Self {
            users: ds.num_users(),
            items: ds.num_items(),
            interactions: ds.num_interactions(),
            median_per_user,
        }
    }

    pub fn to_tsv(&self) -> String {
        format!(
            "users\titems\tinteractions\tmedian\n{}\t{}\t{}\t{}\n",
            self.users, self.items, self.interactions, self.median_per_user
        )
    }
}

fn check_id(raw: &str) -> Result<()> {
    if raw.contains(['\t', '\n', '\r']) {
        return Err(Error::Config(format!(
            "raw id {raw:?} contains a tab or newline and cannot be cached"
        )));
    }
    Ok(())
}

pub fn encode_prepared(catalog: &Catalog, ds: &SplitDataset) -> Result<String> {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}\t{PREPARED_VERSION}");
    let _ = writeln!(out, "users\t{}", catalog.num_users());
    let _ = writeln!(out, "items\t{}", catalog.num_items());
    for id in catalog.user_ids() {
        check_id(id)?;
        let _ = writeln!(out, "u\t{id}");
    }
    for id in catalog.item_ids() {
        check_id(id)?;
        let _ = writeln!(out, "i\t{id}");
    }
    for u in 0..ds.num_users() {
        for split in [Split::Train, Split::Validation, Split::Test] {
            for &(item, ts) in ds.partition(u, split) {
                let _ = writeln!(out, "r\t{u}\t{item}\t{ts}\t{}", split.as_str());
            }
        }
    }
    let digest = hex_digest(out.as_bytes());
    let _ = writeln!(out, "sha256\t{digest}");
    Ok(out)
}

pub fn write_prepared(path: impl AsRef<Path>, catalog: &Catalog, ds: &SplitDataset) -> Result<()> {
    let body = encode_prepared(catalog, ds)?;
    write_atomic(path.as_ref(), body.as_bytes())
}

pub fn read_prepared(path: impl AsRef<Path>) -> Result<(Catalog, SplitDataset)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode_prepared(&text, path)
}

pub fn decode_prepared(text: &str, path: &Path) -> Result<(Catalog, SplitDataset)> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let first = text.lines().next().unwrap_or_default();
    let mut header = first.split('\t');
    if header.next() != Some(MAGIC) {
        return Err(parse_err(1, "not a prepared dataset file".into()));
    }
    let version = header.next().unwrap_or_default();
    if version != PREPARED_VERSION {
        return Err(Error::Version {
            path: path.to_path_buf(),
            expected: PREPARED_VERSION.into(),
            found: version.into(),
        });
    }

    // The checksum line must be last and cover every byte before it.
    let body_end = text
        .trim_end_matches('\n')
        .rfind('\n')
        .map(|i| i + 1)
        .ok_or_else(|| Error::Checksum(path.to_path_buf()))?;
    let (body, trailer) = text.split_at(body_end);
    let expected = trailer
        .trim_end()
        .strip_prefix("sha256\t")
        .ok_or_else(|| Error::Checksum(path.to_path_buf()))?;
    if hex_digest(body.as_bytes()) != expected {
        return Err(Error::Checksum(path.to_path_buf()));
    }

    let mut lines = body.lines().enumerate().skip(1);
    let mut count = |key: &str| -> Result<usize> {
        let (n, line) = lines
            .next()
            .ok_or_else(|| parse_err(0, format!("missing {key} line")))?;
        line.strip_prefix(key)
            .and_then(|s| s.strip_prefix('\t'))
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err(n + 1, format!("expected {key} count")))
    };
    let num_users = count("users")?;
    let num_items = count("items")?;
    let mut users = Vec::with_capacity(num_users);
    let mut items = Vec::with_capacity(num_items);
    let mut train = vec![Vec::new(); num_users];
    let mut validation = vec![Vec::new(); num_users];
    let mut test = vec![Vec::new(); num_users];
    for (n, line) in lines {
        let mut f = line.split('\t');
        match f.next() {
            Some("u") if users.len() < num_users => {
                users.push(f.next().unwrap_or_default().to_string())
            }
            Some("i") if items.len() < num_items => {
                items.push(f.next().unwrap_or_default().to_string())
            }
            Some("r") => {
                let fields: Vec<&str> = f.collect();
                let bad = || parse_err(n + 1, format!("malformed record {line:?}"));
                if fields.len() != 4 {
                    return Err(bad());
                }
                let u: usize = fields[0].parse().map_err(|_| bad())?;
                let i: usize = fields[1].parse().map_err(|_| bad())?;
                let ts: i64 = fields[2].parse().map_err(|_| bad())?;
                if u >= num_users || i >= num_items {
                    return Err(bad());
                }
                match fields[3].parse::<Split>().map_err(|_| bad())? {
                    Split::Train => train[u].push((i, ts)),
                    Split::Validation => validation[u].push((i, ts)),
                    Split::Test => test[u].push((i, ts)),
                }
            }
            _ => return Err(parse_err(n + 1, format!("unexpected line {line:?}"))),
        }
    }
    if users.len() != num_users || items.len() != num_items {
        return Err(parse_err(0, "catalog shorter than declared".into()));
    }
    let catalog = Catalog::from_ids(users, items)?;
    let ds = SplitDataset::from_partitions(num_users, num_items, train, validation, test)?;
    Ok((catalog, ds))
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{chronological_split, InteractionLog, SplitRatios};

    fn sample() -> (Catalog, SplitDataset) {
        let mut log = InteractionLog::default();
        for (k, (u, i)) in [
            ("a", "x"),
            ("a", "y"),
            ("a", "z"),
            ("b", "x"),
            ("a", "w"),
            ("b", "y"),
        ]
        .into_iter()
        .enumerate()
        {
            log.push(u, i, 100 + k as i64);
        }
        chronological_split(&log, SplitRatios::default()).unwrap()
    }

    #[test]
    fn round_trip_reproduces_dataset() {
        let (catalog, ds) = sample();
        let text = encode_prepared(&catalog, &ds).unwrap();
        let (c2, d2) = decode_prepared(&text, Path::new("x")).unwrap();
        assert_eq!(c2, catalog);
        assert_eq!(d2, ds);
        assert_eq!(encode_prepared(&c2, &d2).unwrap(), text);
    }

    #[test]
    fn corruption_is_detected() {
        let (catalog, ds) = sample();
        let text = encode_prepared(&catalog, &ds).unwrap();
        let tampered = text.replacen("r\t0\t0\t100", "r\t0\t0\t101", 1);
        assert!(matches!(
            decode_prepared(&tampered, Path::new("x")),
            Err(Error::Checksum(_))
        ));
        let truncated = &text[..text.len() / 2];
        assert!(matches!(
            decode_prepared(truncated, Path::new("x")),
            Err(Error::Checksum(_))
        ));
    }

    #[test]
    fn version_mismatch_is_reported() {
        let (catalog, ds) = sample();
        let text = encode_prepared(&catalog, &ds)
            .unwrap()
            .replacen("\t1\n", "\t9\n", 1);
        assert!(matches!(
            decode_prepared(&text, Path::new("x")),
            Err(Error::Version { .. })
        ));
    }

    #[test]
    fn stats_report_median() {
        let (_, ds) = sample();
        let stats = DatasetStats::of(&ds);
        assert_eq!(stats.users, 2);
        assert_eq!(stats.items, 4);
        assert_eq!(stats.interactions, 6);
        assert_eq!(stats.median_per_user, 3.0);
    }
}
