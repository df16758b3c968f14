use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};

/// One raw implicit-feedback record. Any rating value counts as presence.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RawInteraction {
    pub user: String,
    pub item: String,
    pub timestamp: i64,
}

/// Timestamped raw interactions in file order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct InteractionLog {
    pub records: Vec<RawInteraction>,
}

impl InteractionLog {
    pub fn new(records: Vec<RawInteraction>) -> Self {
        Self { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, user: impl Into<String>, item: impl Into<String>, timestamp: i64) {
        self.records.push(RawInteraction {
            user: user.into(),
            item: item.into(),
            timestamp,
        });
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    /// `user<TAB>item<TAB>rating<TAB>timestamp`
    Movielens,
    /// `item,user,rating,timestamp`, optional header row.
    AmazonCsv,
}

impl std::str::FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "movielens" => Ok(Self::Movielens),
            "amazon_csv" => Ok(Self::AmazonCsv),
            other => Err(Error::Config(format!(
                "unknown dataset format {other:?} (expected movielens or amazon_csv)"
            ))),
        }
    }
}

pub fn load(format: DatasetFormat, path: impl AsRef<Path>) -> Result<InteractionLog> {
    match format {
        DatasetFormat::Movielens => load_movielens(path),
        DatasetFormat::AmazonCsv => load_amazon_csv(path),
    }
}

pub fn load_movielens(path: impl AsRef<Path>) -> Result<InteractionLog> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_movielens(BufReader::new(file), path)
}

pub fn load_amazon_csv(path: impl AsRef<Path>) -> Result<InteractionLog> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_amazon_csv(BufReader::new(file), path)
}

pub fn parse_movielens(reader: impl BufRead, path: &Path) -> Result<InteractionLog> {
    let mut log = InteractionLog::default();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let record = parse_fields(&fields, [0, 1, 2, 3]).map_err(|message| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message,
        })?;
        log.records.push(record);
    }
    non_empty(log, path)
}

pub fn parse_amazon_csv(reader: impl BufRead, path: &Path) -> Result<InteractionLog> {
    let mut log = InteractionLog::default();
    let mut first = true;
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if std::mem::take(&mut first) && fields.len() == 4 && fields[3].parse::<i64>().is_err() {
            continue;
        }
        let record = parse_fields(&fields, [1, 0, 2, 3]).map_err(|message| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message,
        })?;
        log.records.push(record);
    }
    non_empty(log, path)
}

/// `order` gives the positions of (user, item, rating, timestamp).
fn parse_fields(fields: &[&str], order: [usize; 4]) -> std::result::Result<RawInteraction, String> {
    if fields.len() != 4 {
        return Err(format!("expected 4 fields, found {}", fields.len()));
    }
    let [u, i, r, t] = order.map(|k| fields[k]);
    if u.is_empty() || i.is_empty() {
        return Err("empty user or item id".into());
    }
    r.parse::<f64>()
        .map_err(|_| format!("invalid rating {r:?}"))?;
    let timestamp = t
        .parse::<i64>()
        .map_err(|_| format!("invalid timestamp {t:?}"))?;
    Ok(RawInteraction {
        user: u.to_string(),
        item: i.to_string(),
        timestamp,
    })
}

fn non_empty(log: InteractionLog, path: &Path) -> Result<InteractionLog> {
    if log.is_empty() {
        Err(Error::EmptyDataset(path.display().to_string()))
    } else {
        Ok(log)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ml(s: &str) -> Result<InteractionLog> {
        parse_movielens(s.as_bytes(), Path::new("u.data"))
    }

    fn amazon(s: &str) -> Result<InteractionLog> {
        parse_amazon_csv(s.as_bytes(), Path::new("a.csv"))
    }

    #[test]
    fn movielens_line_maps_fields() {
        let log = ml("1\t50\t5\t874965758\n").unwrap();
        assert_eq!(
            log.records,
            vec![RawInteraction {
                user: "1".into(),
                item: "50".into(),
                timestamp: 874965758
            }]
        );
    }

    #[test]
    fn movielens_missing_timestamp_reports_line() {
        let err = ml("1\t50\t5\t874965758\n1\t50\t5\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn every_rating_value_is_an_interaction() {
        let log = ml("1\t2\t1\t10\n1\t3\t5\t11\n2\t2\t0.5\t12\n").unwrap();
        assert_eq!(log.len(), 3);
    }

    #[test]
    fn empty_inputs_are_rejected() {
        assert!(matches!(ml(""), Err(Error::EmptyDataset(_))));
        assert!(matches!(amazon(""), Err(Error::EmptyDataset(_))));
        assert!(matches!(
            amazon("item,user,rating,timestamp\n"),
            Err(Error::EmptyDataset(_))
        ));
    }

    #[test]
    fn amazon_row_swaps_item_and_user() {
        let log = amazon("B00001,U42,4.0,1514764800\n").unwrap();
        assert_eq!(log.records[0].user, "U42");
        assert_eq!(log.records[0].item, "B00001");
        assert_eq!(log.records[0].timestamp, 1514764800);
    }

    #[test]
    fn amazon_header_is_skipped_and_duplicates_kept() {
        let log = amazon("item,user,rating,timestamp\nB1,U1,5.0,100\nB1,U1,4.0,200\n").unwrap();
        assert_eq!(log.len(), 2);
        assert_eq!(log.records[1].timestamp, 200);
    }

    #[test]
    fn amazon_header_only_allowed_on_first_line() {
        let err = amazon("B1,U1,5.0,100\nitem,user,rating,timestamp\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let err = load_movielens("/definitely/not/here.data").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert!(err.to_string().contains("/definitely/not/here.data"));
    }
}
