//! Versioned, file-backed record store with a hash-chained audit log.
//!
//! A data directory holds two append-only files:
//!
//! * `records.jsonl`: one line per record version,
//! * `audit.jsonl`: one [`AuditEvent`] line per write, line `n` holding seq `n`.
//!
//! Every successful [`Store::put`] appends exactly one line to each file. The
//! store is the serialization point: writes hold an exclusive lock for the
//! duration of the append, readers share a lock and never observe a half-applied
//! write.

mod audit;
mod snapshot;

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::RwLock;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use thiserror::Error;

use crate::canonical::{canonical_json, to_canonical_string};
use crate::clock::Clock;

pub use audit::{verify_audit_bytes, AuditEvent, AuditStatus, Hash, GENESIS_HASH};
pub use snapshot::{parse_snapshot, Snapshot, SnapshotCounts, SnapshotRecord};

pub const RECORDS_FILE: &str = "records.jsonl";
pub const AUDIT_FILE: &str = "audit.jsonl";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("version conflict on {kind}/{id}: expected {expected}, head is {head}")]
    VersionConflict {
        kind: String,
        id: String,
        expected: u64,
        head: u64,
    },
    #[error("{kind} {id:?} not found{}", .version.map(|v| format!(" at version {v}")).unwrap_or_default())]
    NotFound {
        kind: String,
        id: String,
        version: Option<u64>,
    },
    #[error("storage error: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt data directory: {0}")]
    Corrupt(String),
    #[error("payload encoding failed: {0}")]
    Encoding(#[from] serde_json::Error),
    #[error("import failed at line {line}: {message}")]
    Import { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StoredRecord {
    pub record_kind: String,
    pub record_id: String,
    pub version: u64,
    /// Canonical JSON text.
    pub payload: String,
    pub written_at: DateTime<Utc>,
    pub written_by: String,
}

impl StoredRecord {
    pub fn decode<T: DeserializeOwned>(&self) -> Result<T, StoreError> {
        Ok(serde_json::from_str(&self.payload)?)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine<'a> {
    kind: String,
    id: String,
    v: u64,
    #[serde(borrow)]
    payload: &'a RawValue,
    at: String,
    by: String,
}

#[derive(Default)]
struct State {
    records: BTreeMap<(String, String), Vec<StoredRecord>>,
    audit: Vec<AuditEvent>,
}

struct Files {
    records: File,
    audit: File,
    records_len: u64,
    audit_len: u64,
}

struct Inner {
    state: State,
    files: Files,
}

pub struct Store {
    dir: PathBuf,
    clock: Arc<dyn Clock>,
    sync: bool,
    inner: RwLock<Inner>,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").field("dir", &self.dir).finish_non_exhaustive()
    }
}

type Key = (String, String);

fn key(kind: &str, id: &str) -> Key {
    (kind.to_owned(), id.to_owned())
}

impl Store {
    /// Opens (creating if needed) the store in `dir`.
    ///
    /// A torn final line left by an interrupted write is discarded, as is a
    /// record line whose audit line never made it to disk.
    pub fn open(dir: impl AsRef<Path>, clock: Arc<dyn Clock>) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let rec_path = dir.join(RECORDS_FILE);
        let audit_path = dir.join(AUDIT_FILE);

        let mut rec_bytes = read_or_empty(&rec_path)?;
        let mut audit_bytes = read_or_empty(&audit_path)?;
        drop_torn_tail(&mut rec_bytes);
        drop_torn_tail(&mut audit_bytes);

        let audit: Vec<AuditEvent> = lines(&audit_bytes)
            .enumerate()
            .map(|(i, l)| {
                AuditEvent::from_line(l)
                    .map_err(|e| StoreError::Corrupt(format!("audit line {}: {e}", i + 1)))
            })
            .collect::<Result<_, _>>()?;
        if let AuditStatus::Corrupt { first_bad_seq } = verify_audit_bytes(&audit_bytes) {
            return Err(StoreError::Corrupt(format!(
                "audit chain broken at seq {first_bad_seq}"
            )));
        }

        if lines(&rec_bytes).count() == audit.len() + 1 {
            // record written, audit append lost
            let keep: usize = lines(&rec_bytes).take(audit.len()).map(|l| l.len() + 1).sum();
            rec_bytes.truncate(keep);
        }
        let rec_lines: Vec<&[u8]> = lines(&rec_bytes).collect();
        if rec_lines.len() != audit.len() {
            return Err(StoreError::Corrupt(format!(
                "{} record lines but {} audit events",
                rec_lines.len(),
                audit.len()
            )));
        }

        let mut state = State::default();
        for (i, (line, ev)) in rec_lines.iter().zip(&audit).enumerate() {
            let corrupt = |m: String| StoreError::Corrupt(format!("record line {}: {m}", i + 1));
            let text = std::str::from_utf8(line).map_err(|e| corrupt(e.to_string()))?;
            let raw: RecordLine<'_> =
                serde_json::from_str(text).map_err(|e| corrupt(e.to_string()))?;
            if (raw.kind.as_str(), raw.id.as_str()) != (ev.subject.0.as_str(), ev.subject.1.as_str())
            {
                return Err(corrupt("subject differs from audit event".into()));
            }
            let versions = state.records.entry(key(&raw.kind, &raw.id)).or_default();
            if raw.v != versions.len() as u64 + 1 {
                return Err(corrupt(format!("version {} out of sequence", raw.v)));
            }
            versions.push(StoredRecord {
                record_kind: raw.kind,
                record_id: raw.id,
                version: raw.v,
                payload: raw.payload.get().to_owned(),
                written_at: ev.at,
                written_by: ev.actor.clone(),
            });
        }
        state.audit = audit;

        fs::write(&rec_path, &rec_bytes)?;
        fs::write(&audit_path, &audit_bytes)?;
        let files = Files {
            records: OpenOptions::new().append(true).open(&rec_path)?,
            audit: OpenOptions::new().append(true).open(&audit_path)?,
            records_len: rec_bytes.len() as u64,
            audit_len: audit_bytes.len() as u64,
        };
        Ok(Store {
            dir,
            clock,
            sync: true,
            inner: RwLock::new(Inner { state, files }),
        })
    }

    /// Disables fsync after each write. Intended for tests and bulk import.
    pub fn without_fsync(mut self) -> Self {
        self.sync = false;
        self
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    /// Writes a new version with the generic `put` audit action.
    pub fn put<T: Serialize + ?Sized>(
        &self,
        kind: &str,
        id: &str,
        payload: &T,
        expected_version: u64,
        actor: &str,
    ) -> Result<u64, StoreError> {
        self.put_with_action(kind, id, payload, expected_version, actor, "put")
    }

    /// Writes version `expected_version + 1` of `(kind, id)` and appends the
    /// matching audit event. Fails with `VersionConflict` unless
    /// `expected_version` equals the current head (0 for a new record).
    pub fn put_with_action<T: Serialize + ?Sized>(
        &self,
        kind: &str,
        id: &str,
        payload: &T,
        expected_version: u64,
        actor: &str,
        action: &str,
    ) -> Result<u64, StoreError> {
        let payload = canonical_json(payload)?;
        let mut guard = self.inner.write();
        let Inner { state, files } = &mut *guard;

        let head = state
            .records
            .get(&key(kind, id))
            .map_or(0, |v| v.len() as u64);
        if head != expected_version {
            return Err(StoreError::VersionConflict {
                kind: kind.to_owned(),
                id: id.to_owned(),
                expected: expected_version,
                head,
            });
        }
        let version = head + 1;
        let at = self.clock.now();
        let prev = state.audit.last().map_or(GENESIS_HASH, |e| e.hash);
        let event = AuditEvent::chained(
            state.audit.len() as u64 + 1,
            actor,
            action,
            (kind, id),
            at,
            prev,
        );
        let rec_line = record_line(kind, id, version, &payload, &event)?;
        let audit_line = format!("{}\n", event.to_line());

        append(&mut files.records, rec_line.as_bytes(), self.sync)?;
        if let Err(e) = append(&mut files.audit, audit_line.as_bytes(), self.sync) {
            // roll the record back so both files stay in step
            let _ = files.records.set_len(files.records_len);
            let _ = files.audit.set_len(files.audit_len);
            return Err(e.into());
        }
        files.records_len += rec_line.len() as u64;
        files.audit_len += audit_line.len() as u64;

        state
            .records
            .entry(key(kind, id))
            .or_default()
            .push(StoredRecord {
                record_kind: kind.to_owned(),
                record_id: id.to_owned(),
                version,
                payload,
                written_at: at,
                written_by: actor.to_owned(),
            });
        state.audit.push(event);
        Ok(version)
    }

    /// Head version when `version` is `None`, otherwise that exact version.
    pub fn get(&self, kind: &str, id: &str, version: Option<u64>) -> Result<StoredRecord, StoreError> {
        let guard = self.inner.read();
        let versions = guard.state.records.get(&key(kind, id));
        let found = match (versions, version) {
            (Some(vs), None) => vs.last(),
            (Some(vs), Some(v)) if v >= 1 => vs.get(v as usize - 1),
            _ => None,
        };
        found.cloned().ok_or_else(|| StoreError::NotFound {
            kind: kind.to_owned(),
            id: id.to_owned(),
            version,
        })
    }

    /// Head record decoded, together with its version.
    pub fn get_as<T: DeserializeOwned>(&self, kind: &str, id: &str) -> Result<(T, u64), StoreError> {
        let rec = self.get(kind, id, None)?;
        Ok((rec.decode()?, rec.version))
    }

    pub fn head_version(&self, kind: &str, id: &str) -> u64 {
        self.inner
            .read()
            .state
            .records
            .get(&key(kind, id))
            .map_or(0, |v| v.len() as u64)
    }

    /// Head versions of every record of `kind`, ordered by id.
    pub fn heads(&self, kind: &str) -> Vec<StoredRecord> {
        let guard = self.inner.read();
        let start = key(kind, "");
        guard
            .state
            .records
            .range(start..)
            .take_while(|((k, _), _)| k == kind)
            .filter_map(|(_, vs)| vs.last().cloned())
            .collect()
    }

    pub fn count(&self, kind: &str) -> usize {
        self.heads(kind).len()
    }

    pub fn audit_events(&self) -> Vec<AuditEvent> {
        self.inner.read().state.audit.clone()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.read().state.audit.is_empty()
    }

    /// Recomputes the chain from the audit file on disk.
    pub fn verify_audit(&self) -> Result<AuditStatus, StoreError> {
        let _guard = self.inner.read();
        verify_audit_file(&self.dir)
    }

    /// Writes every record version, then every audit event, one JSON line each.
    pub fn export_snapshot<W: Write>(&self, mut out: W) -> Result<SnapshotCounts, StoreError> {
        let guard = self.inner.read();
        let state = &guard.state;
        let mut counts = SnapshotCounts::default();
        for versions in state.records.values() {
            for r in versions {
                let line = SnapshotRecord {
                    kind: r.record_kind.clone(),
                    id: r.record_id.clone(),
                    v: r.version,
                    payload: r.payload.clone(),
                }
                .to_line()?;
                writeln!(out, "{line}")?;
                counts.records += 1;
            }
        }
        for ev in &state.audit {
            writeln!(out, "{}", ev.to_line())?;
            counts.audit_events += 1;
        }
        out.flush()?;
        Ok(counts)
    }

    /// Loads a snapshot into this store, which must be empty.
    pub fn import_snapshot(&self, bytes: &[u8]) -> Result<SnapshotCounts, StoreError> {
        let snapshot = parse_snapshot(bytes)?;
        let mut guard = self.inner.write();
        if !guard.state.audit.is_empty() {
            return Err(StoreError::Import {
                line: 0,
                message: "store is not empty".into(),
            });
        }
        let Inner { state, files } = &mut *guard;

        let mut by_key: BTreeMap<Key, std::collections::VecDeque<&SnapshotRecord>> =
            BTreeMap::new();
        for r in &snapshot.records {
            by_key.entry(key(&r.kind, &r.id)).or_default().push_back(r);
        }
        let mut rec_out = String::new();
        let mut audit_out = String::new();
        let mut records: BTreeMap<Key, Vec<StoredRecord>> = BTreeMap::new();
        for ev in &snapshot.audit {
            let r = by_key
                .get_mut(&ev.subject)
                .and_then(|q| q.pop_front())
                .ok_or_else(|| StoreError::Import {
                    line: snapshot.records.len() + ev.seq as usize,
                    message: format!("audit event {} has no matching record version", ev.seq),
                })?;
            rec_out.push_str(&record_line(&r.kind, &r.id, r.v, &r.payload, ev)?);
            audit_out.push_str(&ev.to_line());
            audit_out.push('\n');
            records
                .entry(key(&r.kind, &r.id))
                .or_default()
                .push(StoredRecord {
                    record_kind: r.kind.clone(),
                    record_id: r.id.clone(),
                    version: r.v,
                    payload: r.payload.clone(),
                    written_at: ev.at,
                    written_by: ev.actor.clone(),
                });
        }
        if let Some((k, _)) = by_key.iter().find(|(_, q)| !q.is_empty()) {
            return Err(StoreError::Import {
                line: 0,
                message: format!("record {}/{} has versions without audit events", k.0, k.1),
            });
        }

        files.records.set_len(0)?;
        files.audit.set_len(0)?;
        append(&mut files.records, rec_out.as_bytes(), true)?;
        append(&mut files.audit, audit_out.as_bytes(), true)?;
        files.records_len = rec_out.len() as u64;
        files.audit_len = audit_out.len() as u64;
        state.records = records;
        state.audit = snapshot.audit.clone();
        Ok(SnapshotCounts {
            records: snapshot.records.len(),
            audit_events: snapshot.audit.len(),
        })
    }
}

/// Verifies the audit chain in `dir` without opening the store.
pub fn verify_audit_file(dir: &Path) -> Result<AuditStatus, StoreError> {
    Ok(verify_audit_bytes(&read_or_empty(&dir.join(AUDIT_FILE))?))
}

fn record_line(
    kind: &str,
    id: &str,
    v: u64,
    payload: &str,
    ev: &AuditEvent,
) -> Result<String, StoreError> {
    let raw = RawValue::from_string(payload.to_owned())?;
    let line = RecordLine {
        kind: kind.to_owned(),
        id: id.to_owned(),
        v,
        payload: &raw,
        at: crate::clock::format_timestamp(&ev.at),
        by: ev.actor.clone(),
    };
    Ok(format!("{}\n", serde_json::to_string(&line)?))
}

fn append(file: &mut File, bytes: &[u8], sync: bool) -> io::Result<()> {
    file.write_all(bytes)?;
    file.flush()?;
    if sync {
        file.sync_data()?;
    }
    Ok(())
}

fn read_or_empty(path: &Path) -> io::Result<Vec<u8>> {
    match fs::read(path) {
        Ok(b) => Ok(b),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(e),
    }
}

fn drop_torn_tail(bytes: &mut Vec<u8>) {
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    bytes.truncate(keep);
}

fn lines(bytes: &[u8]) -> impl Iterator<Item = &[u8]> {
    bytes
        .strip_suffix(b"\n")
        .unwrap_or(bytes)
        .split(|&b| b == b'\n')
        .filter(move |_| !bytes.is_empty())
}

pub(crate) fn canonical_payload(text: &str) -> Result<String, serde_json::Error> {
    Ok(to_canonical_string(&serde_json::from_str(text)?))
}
