//! On-disk prepared splits: `train.csv`, `valid.csv`, `test.csv` (dense ids,
//! standard header) and `metadata.json`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::error::DataError;
use super::filter::n_core_filter;
use super::history::HistoryIndex;
use super::log::{write_events, IdMap, Ingester, Interaction, InteractionLog};
use super::split::{chronological_split, SplitSpec, Splits};

pub const TRAIN_FILE: &str = "train.csv";
pub const VALID_FILE: &str = "valid.csv";
pub const TEST_FILE: &str = "test.csv";
pub const METADATA_FILE: &str = "metadata.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metadata {
    pub n_core: usize,
    pub train_end: i64,
    pub valid_end: i64,
    pub n_users: usize,
    pub n_items: usize,
    pub counts: [usize; 3],
    /// Raw id of dense user id `k + 1` at position `k`.
    pub user_ids: Vec<String>,
    pub item_ids: Vec<String>,
}

/// Filtered, split interaction data in one dense id space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PreparedData {
    pub users: IdMap,
    pub items: IdMap,
    pub splits: Splits,
    pub spec: SplitSpec,
    pub n_core: usize,
}

impl PreparedData {
    /// n-core filter, then chronological split.
    pub fn prepare(log: &InteractionLog, n_core: usize, spec: SplitSpec) -> Result<Self, DataError> {
        let filtered = n_core_filter(log, n_core)?;
        let splits = chronological_split(&filtered.interactions, spec)?;
        Ok(Self {
            users: filtered.users,
            items: filtered.items,
            splits,
            spec,
            n_core,
        })
    }

    pub fn from_events(events: Vec<Interaction>, n_users: usize, n_items: usize, spec: SplitSpec) -> Result<Self, DataError> {
        let splits = chronological_split(&events, spec)?;
        let ids = |n: usize| IdMap::from_raw((1..=n).map(|i| i.to_string()).collect());
        Ok(Self {
            users: ids(n_users),
            items: ids(n_items),
            splits,
            spec,
            n_core: 1,
        })
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    /// History over every split; training sets cover the train split only.
    pub fn history_index(&self) -> HistoryIndex {
        HistoryIndex::build(&self.splits.all(), self.n_users(), self.n_items(), self.spec.train_end)
    }

    pub fn metadata(&self) -> Metadata {
        Metadata {
            n_core: self.n_core,
            train_end: self.spec.train_end,
            valid_end: self.spec.valid_end,
            n_users: self.n_users(),
            n_items: self.n_items(),
            counts: [
                self.splits.train.len(),
                self.splits.valid.len(),
                self.splits.test.len(),
            ],
            user_ids: self.users.raw_ids().to_vec(),
            item_ids: self.items.raw_ids().to_vec(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<(), DataError> {
        fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
        for (name, events) in [
            (TRAIN_FILE, &self.splits.train),
            (VALID_FILE, &self.splits.valid),
            (TEST_FILE, &self.splits.test),
        ] {
            let path = dir.join(name);
            let file = fs::File::create(&path).map_err(|e| DataError::io(&path, e))?;
            write_events(events, std::io::BufWriter::new(file))?;
        }
        let path = dir.join(METADATA_FILE);
        let json = serde_json::to_string_pretty(&self.metadata())
            .map_err(|e| DataError::Metadata(e.to_string()))?;
        fs::write(&path, json + "\n").map_err(|e| DataError::io(&path, e))
    }

    /// Reads a directory written by [`PreparedData::write`]; the split files
    /// must carry the dense ids recorded in the metadata.
    pub fn read(dir: &Path) -> Result<Self, DataError> {
        let path = dir.join(METADATA_FILE);
        let text = fs::read_to_string(&path).map_err(|e| DataError::io(&path, e))?;
        let meta: Metadata = serde_json::from_str(&text).map_err(|e| DataError::Metadata(e.to_string()))?;
        let mut ing = Ingester::new();
        let mut parts = Vec::new();
        for name in [TRAIN_FILE, VALID_FILE, TEST_FILE] {
            let path = dir.join(name);
            let file = fs::File::open(&path).map_err(|e| DataError::io(&path, e))?;
            let mut events = ing.read(std::io::BufReader::new(file))?;
            events.sort_by_key(|e| e.timestamp);
            parts.push(events);
        }
        // The files hold dense ids; translate the ingester's ids back to them.
        let dense = |map: &IdMap, id: usize, n: usize| -> Result<usize, DataError> {
            let raw = map.raw(id).unwrap_or_default();
            raw.parse::<usize>()
                .ok()
                .filter(|&d| d >= 1 && d <= n)
                .ok_or_else(|| DataError::Metadata(format!("id `{raw}` outside 1..={n}")))
        };
        let mut fixed = Vec::new();
        for events in parts {
            let mut out = Vec::with_capacity(events.len());
            for e in events {
                out.push(Interaction {
                    user: dense(&ing.users, e.user, meta.n_users)?,
                    item: dense(&ing.items, e.item, meta.n_items)?,
                    ..e
                });
            }
            fixed.push(out);
        }
        let test = fixed.pop().unwrap_or_default();
        let valid = fixed.pop().unwrap_or_default();
        let train = fixed.pop().unwrap_or_default();
        if [train.len(), valid.len(), test.len()] != meta.counts {
            return Err(DataError::Metadata("split sizes disagree with metadata".into()));
        }
        if meta.user_ids.len() != meta.n_users || meta.item_ids.len() != meta.n_items {
            return Err(DataError::Metadata("id tables disagree with catalog sizes".into()));
        }
        Ok(Self {
            users: IdMap::from_raw(meta.user_ids),
            items: IdMap::from_raw(meta.item_ids),
            splits: Splits { train, valid, test },
            spec: SplitSpec::new(meta.train_end, meta.valid_end)?,
            n_core: meta.n_core,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ingest_reader;

    #[test]
    fn write_read_round_trip() {
        let mut csv = String::from("user_id,item_id,timestamp\n");
        for t in 0..40 {
            csv.push_str(&format!("user{},item{},{}\n", t % 4, (t * 3) % 5, t));
        }
        let log = ingest_reader(csv.as_bytes()).unwrap();
        let prep = PreparedData::prepare(&log, 2, SplitSpec::new(20, 30).unwrap()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        prep.write(dir.path()).unwrap();
        let back = PreparedData::read(dir.path()).unwrap();
        assert_eq!(back, prep);
    }
}
