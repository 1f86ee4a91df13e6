use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use super::error::DataError;

/// One user–item event. Ids are dense; 0 is the reserved pad id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Interaction {
    pub user: usize,
    pub item: usize,
    pub timestamp: i64,
    pub label: u8,
}

/// Dense-id ↔ raw-id table. Dense ids start at 1 in first-appearance order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IdMap {
    raw: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_raw(raw: Vec<String>) -> Self {
        let mut map = Self::new();
        for r in raw {
            map.intern(&r);
        }
        map
    }

    pub fn intern(&mut self, raw: &str) -> usize {
        if let Some(&id) = self.lookup.get(raw) {
            return id;
        }
        self.raw.push(raw.to_string());
        let id = self.raw.len();
        self.lookup.insert(raw.to_string(), id);
        id
    }

    pub fn get(&self, raw: &str) -> Option<usize> {
        self.lookup.get(raw).copied()
    }

    /// Raw id for a dense id (`None` for the pad id or out of range).
    pub fn raw(&self, id: usize) -> Option<&str> {
        id.checked_sub(1)
            .and_then(|i| self.raw.get(i))
            .map(String::as_str)
    }

    /// Number of real ids (the pad id excluded).
    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn raw_ids(&self) -> &[String] {
        &self.raw
    }
}

/// Chronologically sorted interactions with their id tables.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct InteractionLog {
    pub interactions: Vec<Interaction>,
    pub users: IdMap,
    pub items: IdMap,
}

impl InteractionLog {
    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    /// Rebuilds dense ids in first-appearance order over the current events.
    pub fn redensify(&self, events: Vec<Interaction>) -> InteractionLog {
        let mut users = IdMap::new();
        let mut items = IdMap::new();
        let interactions = events
            .into_iter()
            .map(|e| Interaction {
                user: users.intern(self.users.raw(e.user).expect("known user")),
                item: items.intern(self.items.raw(e.item).expect("known item")),
                ..e
            })
            .collect();
        InteractionLog {
            interactions,
            users,
            items,
        }
    }

    /// Writes the dense log as CSV with the standard header.
    pub fn write_csv<W: Write>(&self, events: &[Interaction], out: W) -> Result<(), DataError> {
        write_events(events, out)
    }
}

pub fn write_events<W: Write>(events: &[Interaction], out: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| DataError::io("csv output", std::io::Error::other(e));
    w.write_record(["user_id", "item_id", "timestamp", "label"])
        .map_err(io)?;
    for e in events {
        w.write_record([
            e.user.to_string(),
            e.item.to_string(),
            e.timestamp.to_string(),
            e.label.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| DataError::io("csv output", e))
}

/// Parses interaction CSVs into dense ids, sharing id tables across calls so
/// several files (e.g. prepared splits) land in one id space.
#[derive(Clone, Debug, Default)]
pub struct Ingester {
    pub users: IdMap,
    pub items: IdMap,
}

impl Ingester {
    pub fn new() -> Self {
        Self::default()
    }

    /// Reads one CSV. Rows are numbered from 1, header excluded.
    pub fn read<R: Read>(&mut self, input: R) -> Result<Vec<Interaction>, DataError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(input);
        let header = reader
            .headers()
            .map_err(|e| DataError::Malformed {
                line: 0,
                reason: e.to_string(),
            })?
            .clone();
        let col = |name: &'static str| header.iter().position(|h| h == name);
        let user_col = col("user_id").ok_or(DataError::MissingColumn("user_id"))?;
        let item_col = col("item_id").ok_or(DataError::MissingColumn("item_id"))?;
        let ts_col = col("timestamp").ok_or(DataError::MissingColumn("timestamp"))?;
        let label_col = col("label");
        let mut events = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let line = row + 1;
            let record = record.map_err(|e| DataError::Malformed {
                line,
                reason: e.to_string(),
            })?;
            let field = |idx: usize, name: &str| {
                record
                    .get(idx)
                    .filter(|s| !s.is_empty())
                    .ok_or_else(|| DataError::Malformed {
                        line,
                        reason: format!("missing {name}"),
                    })
            };
            let user = field(user_col, "user_id")?;
            let item = field(item_col, "item_id")?;
            let ts_raw = field(ts_col, "timestamp")?;
            let timestamp = ts_raw.parse::<i64>().map_err(|_| DataError::Malformed {
                line,
                reason: format!("timestamp `{ts_raw}` is not an integer"),
            })?;
            let label = match label_col.and_then(|c| record.get(c)).filter(|s| !s.is_empty()) {
                None => 1,
                Some("0") => 0,
                Some("1") => 1,
                Some(other) => {
                    return Err(DataError::Malformed {
                        line,
                        reason: format!("label `{other}` is not 0 or 1"),
                    })
                }
            };
            events.push(Interaction {
                user: self.users.intern(user),
                item: self.items.intern(item),
                timestamp,
                label,
            });
        }
        Ok(events)
    }

    pub fn into_log(self, mut events: Vec<Interaction>) -> InteractionLog {
        events.sort_by_key(|e| e.timestamp);
        InteractionLog {
            interactions: events,
            users: self.users,
            items: self.items,
        }
    }
}

/// Reads one interaction CSV: dense ids in first-appearance order, stable
/// timestamp sort with file order as tie-break.
pub fn ingest_reader<R: Read>(input: R) -> Result<InteractionLog, DataError> {
    let mut ing = Ingester::new();
    let events = ing.read(input)?;
    if events.is_empty() {
        return Err(DataError::Empty);
    }
    Ok(ing.into_log(events))
}

pub fn ingest(path: impl AsRef<Path>) -> Result<InteractionLog, DataError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| DataError::io(path, e))?;
    ingest_reader(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_appearance_ids() {
        let csv = "user_id,item_id,timestamp,label\na,x,3,1\nb,y,1,1\na,y,2,1\n";
        let log = ingest_reader(csv.as_bytes()).unwrap();
        assert_eq!(log.users.get("a"), Some(1));
        assert_eq!(log.users.get("b"), Some(2));
        assert_eq!(log.n_users(), 2);
        let ts: Vec<i64> = log.interactions.iter().map(|e| e.timestamp).collect();
        assert_eq!(ts, vec![1, 2, 3]);
    }

    #[test]
    fn equal_timestamps_keep_file_order() {
        let csv = "user_id,item_id,timestamp\nu1,i1,5\nu2,i2,5\nu3,i3,5\nu0,i0,1\n";
        let log = ingest_reader(csv.as_bytes()).unwrap();
        let users: Vec<&str> = log
            .interactions
            .iter()
            .map(|e| log.users.raw(e.user).unwrap())
            .collect();
        assert_eq!(users, vec!["u0", "u1", "u2", "u3"]);
        assert!(log.interactions.iter().all(|e| e.label == 1));
    }

    #[test]
    fn bad_timestamp_names_line_one() {
        let csv = "user_id,item_id,timestamp,label\nx,y,notatime,1\n";
        let err = ingest_reader(csv.as_bytes()).unwrap_err();
        assert!(matches!(err, DataError::Malformed { line: 1, .. }), "{err}");
        assert!(err.to_string().starts_with("line 1"));
    }

    #[test]
    fn bad_label_and_missing_field() {
        let csv = "user_id,item_id,timestamp,label\nx,y,1,1\nx,y,2,7\n";
        assert!(matches!(
            ingest_reader(csv.as_bytes()),
            Err(DataError::Malformed { line: 2, .. })
        ));
        let csv = "user_id,item_id,timestamp\nx,,1\n";
        assert!(matches!(
            ingest_reader(csv.as_bytes()),
            Err(DataError::Malformed { line: 1, .. })
        ));
    }

    #[test]
    fn empty_and_headerless() {
        assert!(matches!(
            ingest_reader("user_id,item_id,timestamp\n".as_bytes()),
            Err(DataError::Empty)
        ));
        assert!(matches!(
            ingest_reader("a,b,c\n1,2,3\n".as_bytes()),
            Err(DataError::MissingColumn("user_id"))
        ));
    }
}
