//! Hash-chained audit events.
//!
//! Each event's hash is `SHA-256(prev_hash || canonical(seq, actor, action, subject, at))`
//! where the canonical encoding is compact JSON with sorted keys. The first event
//! links to 32 zero bytes. On disk (and in snapshots) an event is one JSON line:
//!
//! ```text
//! {"t":"audit","seq":1,"actor":"u1","action":"register_patient","subject":["Patient","MRN00000001"],"at":"2026-10-16T08:00:00.000000Z","prev":"00…00","hash":"…"}
//! ```

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::canonical::to_canonical_string;
use crate::clock::{format_timestamp, parse_timestamp};

pub type Hash = [u8; 32];

pub const GENESIS_HASH: Hash = [0u8; 32];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditEvent {
    pub seq: u64,
    pub actor: String,
    pub action: String,
    /// `(record_kind, record_id)`
    pub subject: (String, String),
    pub at: DateTime<Utc>,
    pub prev_hash: Hash,
    pub hash: Hash,
}

/// Result of recomputing the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AuditStatus {
    Ok,
    Corrupt { first_bad_seq: u64 },
}

impl AuditEvent {
    /// Builds the event following `prev_hash` and computes its hash.
    pub fn chained(
        seq: u64,
        actor: &str,
        action: &str,
        subject: (&str, &str),
        at: DateTime<Utc>,
        prev_hash: Hash,
    ) -> Self {
        let mut ev = AuditEvent {
            seq,
            actor: actor.to_owned(),
            action: action.to_owned(),
            subject: (subject.0.to_owned(), subject.1.to_owned()),
            at,
            prev_hash,
            hash: [0; 32],
        };
        ev.hash = ev.compute_hash();
        ev
    }

    fn canonical_body(&self) -> String {
        to_canonical_string(&json!({
            "seq": self.seq,
            "actor": self.actor,
            "action": self.action,
            "subject": [self.subject.0, self.subject.1],
            "at": format_timestamp(&self.at),
        }))
    }

    pub fn compute_hash(&self) -> Hash {
        let mut h = Sha256::new();
        h.update(self.prev_hash);
        h.update(self.canonical_body().as_bytes());
        h.finalize().into()
    }

    /// One line, without the trailing newline.
    pub fn to_line(&self) -> String {
        let line = AuditLine {
            t: "audit".into(),
            seq: self.seq,
            actor: self.actor.clone(),
            action: self.action.clone(),
            subject: self.subject.clone(),
            at: format_timestamp(&self.at),
            prev: hex::encode(self.prev_hash),
            hash: hex::encode(self.hash),
        };
        serde_json::to_string(&line).expect("audit line serializes")
    }

    /// Strict inverse of [`AuditEvent::to_line`]: the input must be byte-identical to
    /// the re-encoded event. The hash is parsed, not checked.
    pub fn from_line(line: &[u8]) -> Result<Self, String> {
        let text = std::str::from_utf8(line).map_err(|_| "not UTF-8".to_owned())?;
        let raw: AuditLine = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if raw.t != "audit" {
            return Err(format!("unexpected type tag {:?}", raw.t));
        }
        let ev = AuditEvent {
            seq: raw.seq,
            actor: raw.actor,
            action: raw.action,
            subject: raw.subject,
            at: parse_timestamp(&raw.at).ok_or("malformed timestamp")?,
            prev_hash: decode_hash(&raw.prev).ok_or("malformed prev hash")?,
            hash: decode_hash(&raw.hash).ok_or("malformed hash")?,
        };
        if ev.to_line() != text {
            return Err("line is not in canonical form".into());
        }
        Ok(ev)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AuditLine {
    t: String,
    seq: u64,
    actor: String,
    action: String,
    subject: (String, String),
    at: String,
    prev: String,
    hash: String,
}

/// Lowercase 64-digit hex only.
pub(crate) fn decode_hash(s: &str) -> Option<Hash> {
    if s.len() != 64 || !s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
        return None;
    }
    let mut out = [0u8; 32];
    hex::decode_to_slice(s, &mut out).ok()?;
    Some(out)
}

/// Recomputes the chain over newline-delimited audit lines.
///
/// Line `n` must hold the event with seq `n`. The first line that fails to parse,
/// is out of sequence, links to the wrong predecessor or carries a wrong hash is
/// reported.
pub fn verify_audit_bytes(bytes: &[u8]) -> AuditStatus {
    let body = bytes.strip_suffix(b"\n").unwrap_or(bytes);
    if body.is_empty() {
        return if bytes.is_empty() {
            AuditStatus::Ok
        } else {
            AuditStatus::Corrupt { first_bad_seq: 1 }
        };
    }
    let mut prev = GENESIS_HASH;
    for (idx, line) in body.split(|&b| b == b'\n').enumerate() {
        let seq = idx as u64 + 1;
        let ok = AuditEvent::from_line(line).is_ok_and(|ev| {
            ev.seq == seq && ev.prev_hash == prev && ev.hash == ev.compute_hash() && {
                prev = ev.hash;
                true
            }
        });
        if !ok {
            return AuditStatus::Corrupt { first_bad_seq: seq };
        }
    }
    AuditStatus::Ok
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(n: u64) -> Vec<AuditEvent> {
        let mut prev = GENESIS_HASH;
        (1..=n)
            .map(|seq| {
                let ev = AuditEvent::chained(
                    seq,
                    "user-1",
                    "put",
                    ("Patient", &format!("MRN{seq:08}")),
                    DateTime::from_timestamp_micros(seq as i64 * 1_000_001).unwrap(),
                    prev,
                );
                prev = ev.hash;
                ev
            })
            .collect()
    }

    fn encode(events: &[AuditEvent]) -> Vec<u8> {
        events
            .iter()
            .flat_map(|e| format!("{}\n", e.to_line()).into_bytes())
            .collect()
    }

    #[test]
    fn hash_matches_independent_digest() {
        let ev = &chain(1)[0];
        let body = r#"{"action":"put","actor":"user-1","at":"1970-01-01T00:00:01.000001Z","seq":1,"subject":["Patient","MRN00000001"]}"#;
        let mut h = Sha256::new();
        h.update([0u8; 32]);
        h.update(body.as_bytes());
        let expected: Hash = h.finalize().into();
        assert_eq!(ev.hash, expected);
    }

    #[test]
    fn line_round_trip() {
        for ev in chain(3) {
            let line = ev.to_line();
            assert!(line.starts_with(r#"{"t":"audit","seq":"#));
            assert_eq!(AuditEvent::from_line(line.as_bytes()).unwrap(), ev);
        }
    }

    #[test]
    fn verify_ok_and_empty() {
        assert_eq!(verify_audit_bytes(b""), AuditStatus::Ok);
        assert_eq!(verify_audit_bytes(&encode(&chain(5))), AuditStatus::Ok);
    }

    #[test]
    fn detects_reordering_and_truncated_hash() {
        let mut events = chain(4);
        events.swap(1, 2);
        assert_eq!(
            verify_audit_bytes(&encode(&events)),
            AuditStatus::Corrupt { first_bad_seq: 2 }
        );
        let bytes = encode(&chain(3));
        let text = String::from_utf8(bytes).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        let cut = lines[2].replace(&hex::encode(chain(3)[2].hash), "abcd");
        let tampered = format!("{}\n{}\n{}\n", lines[0], lines[1], cut);
        assert_eq!(
            verify_audit_bytes(tampered.as_bytes()),
            AuditStatus::Corrupt { first_bad_seq: 3 }
        );
    }

    #[test]
    fn uppercase_hex_rejected() {
        let ev = &chain(1)[0];
        let upper = ev.to_line().replace(&hex::encode(ev.hash), &hex::encode_upper(ev.hash));
        assert!(AuditEvent::from_line(upper.as_bytes()).is_err());
    }

    #[test]
    fn every_single_byte_flip_is_detected() {
        let events = chain(4);
        let bytes = encode(&events);
        let mut line_of = Vec::new();
        let mut line = 1u64;
        for &b in &bytes {
            line_of.push(line);
            if b == b'\n' {
                line += 1;
            }
        }
        for pos in 0..bytes.len() {
            for mask in [0x01u8, 0x20, 0x80] {
                let mut t = bytes.clone();
                t[pos] ^= mask;
                assert_eq!(
                    verify_audit_bytes(&t),
                    AuditStatus::Corrupt {
                        first_bad_seq: line_of[pos]
                    },
                    "pos {pos} mask {mask:#x}"
                );
            }
        }
    }
}
