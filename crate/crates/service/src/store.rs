//! Append-only annotation log with a materialized latest-state index.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use pamg_core::api::SCHEMA_VERSION;
use pamg_core::Mask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Auto,
    Verified,
    Refined,
}

impl Status {
    /// `auto -> verified`, `auto -> refined -> verified`; re-growing an auto
    /// mask and further refinement keep their status.
    pub fn can_follow(self, prev: Status) -> bool {
        matches!(
            (prev, self),
            (Status::Auto, _) | (Status::Refined, Status::Refined) | (Status::Refined, Status::Verified)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub v: u32,
    pub image_id: String,
    pub target_id: u32,
    pub mask: Mask,
    #[serde(default)]
    pub seed: Option<[i64; 2]>,
    #[serde(default)]
    pub r_s: Option<f64>,
    pub status: Status,
    /// Number of writes to this `(image, target)` including this one.
    pub edit_history_len: usize,
    /// Unix milliseconds.
    pub created_at: u64,
    pub updated_at: u64,
}

impl AnnotationRecord {
    fn key(&self) -> (String, u32) {
        (self.image_id.clone(), self.target_id)
    }
}

/// One log line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LogEntry {
    seq: u64,
    #[serde(flatten)]
    record: AnnotationRecord,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct NewAnnotation {
    pub image_id: String,
    pub target_id: u32,
    pub mask: Mask,
    pub status: Status,
    #[serde(default)]
    pub seed: Option<[i64; 2]>,
    #[serde(default)]
    pub r_s: Option<f64>,
    /// Optimistic check: the `edit_history_len` the writer last saw (0 for a
    /// new target). A mismatch means another write got in first.
    #[serde(default)]
    pub expected_edits: Option<usize>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum StoreError {
    #[error("write conflict on {image_id}/{target_id}: expected {expected} edits, log has {actual}")]
    Conflict {
        image_id: String,
        target_id: u32,
        expected: usize,
        actual: usize,
    },
    #[error("status {to:?} cannot follow {from:?}")]
    Transition { from: Status, to: Status },
    #[error("log line {line}: {msg}")]
    Corrupt { line: usize, msg: String },
    #[error("log i/o: {0}")]
    Io(String),
}

pub type Index = BTreeMap<(String, u32), AnnotationRecord>;

#[derive(Debug, Default)]
pub struct Store {
    file: Option<(PathBuf, File)>,
    next_seq: u64,
    index: Index,
}

/// Rebuilds the latest-state index from log text.
pub fn replay(text: &str) -> Result<(Index, u64), StoreError> {
    let mut index = Index::new();
    let mut next_seq = 0;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let e: LogEntry = serde_json::from_str(line).map_err(|err| StoreError::Corrupt {
            line: i + 1,
            msg: err.to_string(),
        })?;
        if e.seq != next_seq {
            return Err(StoreError::Corrupt {
                line: i + 1,
                msg: format!("sequence {} where {next_seq} was expected", e.seq),
            });
        }
        next_seq += 1;
        index.insert(e.record.key(), e.record);
    }
    Ok((index, next_seq))
}

fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

impl Store {
    /// Memory-only store.
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (creating if needed) the log at `path` and replays it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref();
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(StoreError::Io(e.to_string())),
        };
        let (index, next_seq) = replay(&text)?;
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| StoreError::Io(e.to_string()))?;
        Ok(Self {
            file: Some((path.to_owned(), file)),
            next_seq,
            index,
        })
    }

    pub fn log_path(&self) -> Option<&Path> {
        self.file.as_ref().map(|(p, _)| p.as_path())
    }

    pub fn index(&self) -> &Index {
        &self.index
    }

    pub fn len(&self) -> u64 {
        self.next_seq
    }

    pub fn is_empty(&self) -> bool {
        self.next_seq == 0
    }

    pub fn latest(&self, image_id: &str, target_id: u32) -> Option<&AnnotationRecord> {
        self.index.get(&(image_id.to_owned(), target_id))
    }

    /// Latest records, optionally for one image, in `(image, target)` order.
    pub fn records(&self, image_id: Option<&str>) -> Vec<AnnotationRecord> {
        self.index
            .values()
            .filter(|r| image_id.is_none_or(|id| r.image_id == id))
            .cloned()
            .collect()
    }

    fn commit(&mut self, record: AnnotationRecord) -> Result<AnnotationRecord, StoreError> {
        let entry = LogEntry {
            seq: self.next_seq,
            record,
        };
        if let Some((_, f)) = &mut self.file {
            let mut line = serde_json::to_string(&entry).map_err(|e| StoreError::Io(e.to_string()))?;
            line.push('\n');
            f.write_all(line.as_bytes())
                .and_then(|_| f.sync_data())
                .map_err(|e| StoreError::Io(e.to_string()))?;
        }
        self.next_seq += 1;
        self.index.insert(entry.record.key(), entry.record.clone());
        Ok(entry.record)
    }

    /// Validates ordering rules and appends. Mask content is checked by the caller.
    pub fn append(&mut self, new: NewAnnotation) -> Result<AnnotationRecord, StoreError> {
        let prev = self.latest(&new.image_id, new.target_id).cloned();
        let seen = prev.as_ref().map_or(0, |p| p.edit_history_len);
        if let Some(expected) = new.expected_edits {
            if expected != seen {
                return Err(StoreError::Conflict {
                    image_id: new.image_id,
                    target_id: new.target_id,
                    expected,
                    actual: seen,
                });
            }
        }
        if let Some(p) = &prev {
            if !new.status.can_follow(p.status) {
                return Err(StoreError::Transition {
                    from: p.status,
                    to: new.status,
                });
            }
        }
        let now = now_ms();
        let record = AnnotationRecord {
            v: SCHEMA_VERSION,
            image_id: new.image_id,
            target_id: new.target_id,
            mask: new.mask,
            seed: new.seed,
            r_s: new.r_s,
            status: new.status,
            edit_history_len: seen + 1,
            created_at: prev.as_ref().map_or(now, |p| p.created_at),
            updated_at: now,
        };
        self.commit(record)
    }

    /// Appends an exported record verbatim. Records identical to the current
    /// state are skipped, so importing an export twice changes nothing.
    pub fn import(&mut self, record: AnnotationRecord) -> Result<bool, StoreError> {
        let prev = self.index.get(&record.key());
        if prev == Some(&record) {
            return Ok(false);
        }
        if let Some(p) = prev {
            if !record.status.can_follow(p.status) {
                return Err(StoreError::Transition {
                    from: p.status,
                    to: record.status,
                });
            }
        }
        self.commit(record)?;
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn new(target: u32, status: Status) -> NewAnnotation {
        NewAnnotation {
            image_id: "f1".into(),
            target_id: target,
            mask: Mask::from_indices(4, 4, [0, 1]).unwrap(),
            status,
            seed: Some([1, 1]),
            r_s: None,
            expected_edits: None,
        }
    }

    #[test]
    fn transitions_follow_review_flow() {
        use Status::*;
        assert!(Verified.can_follow(Auto) && Refined.can_follow(Auto) && Verified.can_follow(Refined));
        assert!(!Auto.can_follow(Verified) && !Refined.can_follow(Verified) && !Auto.can_follow(Refined));
        assert!(!Verified.can_follow(Verified));
    }

    #[test]
    fn latest_write_wins_and_counts_edits() {
        let mut s = Store::in_memory();
        s.append(new(0, Status::Auto)).unwrap();
        s.append(new(0, Status::Refined)).unwrap();
        let r = s.append(new(0, Status::Verified)).unwrap();
        assert_eq!(r.edit_history_len, 3);
        assert_eq!(s.records(None), vec![r]);
        assert_eq!(
            s.append(new(0, Status::Refined)),
            Err(StoreError::Transition {
                from: Status::Verified,
                to: Status::Refined
            })
        );
        assert_eq!(s.len(), 3);
    }

    #[test]
    fn stale_writer_gets_a_conflict() {
        let mut s = Store::in_memory();
        let mut a = new(2, Status::Auto);
        a.expected_edits = Some(0);
        s.append(a.clone()).unwrap();
        assert!(matches!(s.append(a), Err(StoreError::Conflict { actual: 1, .. })));
    }

    #[test]
    fn replay_rebuilds_the_index() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let index = {
            let mut s = Store::open(&path).unwrap();
            for t in 0..4 {
                s.append(new(t, Status::Auto)).unwrap();
            }
            s.append(new(1, Status::Verified)).unwrap();
            s.index().clone()
        };
        let s = Store::open(&path).unwrap();
        assert_eq!(s.index(), &index);
        assert_eq!(s.len(), 5);
        assert_eq!(replay(&std::fs::read_to_string(&path).unwrap()).unwrap().0, index);
    }

    #[test]
    fn broken_sequence_is_reported() {
        let line = |seq| format!("{{\"seq\":{seq},\"v\":1,\"image_id\":\"a\",\"target_id\":0,\"mask\":{{\"w\":1,\"h\":1,\"runs\":[[0,1]]}},\"status\":\"auto\",\"edit_history_len\":1,\"created_at\":0,\"updated_at\":0}}\n");
        assert!(replay(&(line(0) + &line(1))).is_ok());
        assert!(matches!(replay(&(line(0) + &line(2))), Err(StoreError::Corrupt { line: 2, .. })));
    }

    #[test]
    fn import_skips_identical_records() {
        let mut a = Store::in_memory();
        let r = a.append(new(0, Status::Auto)).unwrap();
        let mut b = Store::in_memory();
        assert!(b.import(r.clone()).unwrap());
        assert!(!b.import(r).unwrap());
        assert_eq!(a.index(), b.index());
    }
}
