//! Snapshot file format.
//!
//! Newline-delimited JSON, type tag first. Record versions come first, ordered by
//! `(kind, id, v)`, followed by audit events ordered by `seq`:
//!
//! ```text
//! {"t":"rec","kind":"Patient","id":"MRN00000001","v":1,"payload":{…}}
//! {"t":"audit","seq":1,"actor":"…","action":"…","subject":["Patient","MRN00000001"],"at":"…","prev":"…","hash":"…"}
//! ```
//!
//! Write times and authors are not repeated on record lines: the n-th audit event
//! naming a record is the write that produced its version n.

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use super::audit::{AuditEvent, GENESIS_HASH};
use super::{canonical_payload, StoreError};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SnapshotCounts {
    pub records: usize,
    pub audit_events: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SnapshotRecord {
    pub kind: String,
    pub id: String,
    pub v: u64,
    /// Canonical JSON text.
    pub payload: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecLine<'a> {
    t: String,
    kind: String,
    id: String,
    v: u64,
    #[serde(borrow)]
    payload: &'a RawValue,
}

impl SnapshotRecord {
    pub fn to_line(&self) -> Result<String, serde_json::Error> {
        let raw = RawValue::from_string(self.payload.clone())?;
        serde_json::to_string(&RecLine {
            t: "rec".into(),
            kind: self.kind.clone(),
            id: self.id.clone(),
            v: self.v,
            payload: &raw,
        })
    }
}

/// A fully validated snapshot: records in key order, chain intact.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Snapshot {
    pub records: Vec<SnapshotRecord>,
    pub audit: Vec<AuditEvent>,
}

fn err(line: usize, message: impl Into<String>) -> StoreError {
    StoreError::Import {
        line,
        message: message.into(),
    }
}

/// Parses and validates snapshot bytes. Each line must be byte-identical to its
/// canonical re-encoding, so a successful parse re-exports to the same bytes.
pub fn parse_snapshot(bytes: &[u8]) -> Result<Snapshot, StoreError> {
    let mut snap = Snapshot::default();
    if bytes.is_empty() {
        return Ok(snap);
    }
    let body = bytes
        .strip_suffix(b"\n")
        .ok_or_else(|| err(bytes.split(|&b| b == b'\n').count(), "missing final newline"))?;
    let mut prev_hash = GENESIS_HASH;

    for (idx, line) in body.split(|&b| b == b'\n').enumerate() {
        let n = idx + 1;
        let text = std::str::from_utf8(line).map_err(|_| err(n, "not UTF-8"))?;
        if text.starts_with(r#"{"t":"rec","#) {
            if !snap.audit.is_empty() {
                return Err(err(n, "record line after audit events"));
            }
            let raw: RecLine<'_> = serde_json::from_str(text).map_err(|e| err(n, e.to_string()))?;
            let payload =
                canonical_payload(raw.payload.get()).map_err(|e| err(n, e.to_string()))?;
            let rec = SnapshotRecord {
                kind: raw.kind,
                id: raw.id,
                v: raw.v,
                payload,
            };
            if rec.to_line().map_err(|e| err(n, e.to_string()))? != text {
                return Err(err(n, "record line is not in canonical form"));
            }
            let expected_v = match snap.records.last() {
                Some(p) if (p.kind.as_str(), p.id.as_str()) == (rec.kind.as_str(), rec.id.as_str()) => p.v + 1,
                Some(p) if (p.kind.as_str(), p.id.as_str()) > (rec.kind.as_str(), rec.id.as_str()) => {
                    return Err(err(n, "records out of (kind, id) order"))
                }
                _ => 1,
            };
            if rec.v != expected_v {
                return Err(err(n, format!("expected version {expected_v}, found {}", rec.v)));
            }
            snap.records.push(rec);
        } else if text.starts_with(r#"{"t":"audit","#) {
            let ev = AuditEvent::from_line(line).map_err(|e| err(n, e))?;
            let seq = snap.audit.len() as u64 + 1;
            if ev.seq != seq {
                return Err(err(n, format!("expected audit seq {seq}, found {}", ev.seq)));
            }
            if ev.prev_hash != prev_hash || ev.hash != ev.compute_hash() {
                return Err(err(n, format!("audit chain mismatch at seq {seq}")));
            }
            prev_hash = ev.hash;
            snap.audit.push(ev);
        } else {
            return Err(err(n, "unrecognised line"));
        }
    }
    if snap.records.len() != snap.audit.len() {
        return Err(err(
            snap.records.len() + snap.audit.len(),
            format!(
                "{} record versions but {} audit events",
                snap.records.len(),
                snap.audit.len()
            ),
        ));
    }
    Ok(snap)
}
