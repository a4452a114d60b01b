use std::collections::HashMap;

use chrono::{DateTime, TimeDelta, Utc};
use parking_lot::RwLock;
use rand::RngCore;
use serde::Serialize;

use super::{Role, User};
use crate::model::{LabPanelKind, Mrn, UserId};

/// An authenticated principal. Tokens carry 256 bits of OS randomness.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Session {
    #[serde(skip)]
    pub token: String,
    pub user_id: UserId,
    pub username: String,
    pub role: Role,
    pub linked_mrn: Option<Mrn>,
    pub assigned_lab: Option<LabPanelKind>,
    /// Set while the user still has to replace a provisioned password.
    pub restricted: bool,
    pub issued_at: DateTime<Utc>,
    pub expires_at: DateTime<Utc>,
}

impl Session {
    pub fn is_expired(&self, now: DateTime<Utc>) -> bool {
        now >= self.expires_at
    }

    /// A session for `user` not registered with any manager, e.g. for CLI work.
    pub fn for_user(user: &User, now: DateTime<Utc>, ttl: TimeDelta) -> Session {
        Session {
            token: new_token(),
            user_id: user.user_id.clone(),
            username: user.username.clone(),
            role: user.role,
            linked_mrn: user.linked_mrn.clone(),
            assigned_lab: user.assigned_lab,
            restricted: user.must_change_password,
            issued_at: now,
            expires_at: now + ttl,
        }
    }
}

fn new_token() -> String {
    let mut bytes = [0u8; 32];
    rand::rng().fill_bytes(&mut bytes);
    hex::encode(bytes)
}

/// Live sessions with sliding expiry.
#[derive(Debug)]
pub struct SessionManager {
    ttl: TimeDelta,
    sessions: RwLock<HashMap<String, Session>>,
}

impl SessionManager {
    pub fn new(ttl: TimeDelta) -> Self {
        SessionManager {
            ttl,
            sessions: RwLock::new(HashMap::new()),
        }
    }

    pub fn ttl(&self) -> TimeDelta {
        self.ttl
    }

    pub fn issue(&self, user: &User, now: DateTime<Utc>) -> Session {
        let session = Session::for_user(user, now, self.ttl);
        self.sessions
            .write()
            .insert(session.token.clone(), session.clone());
        session
    }

    /// Looks up a live session and slides its expiry forward. Expired sessions are
    /// removed.
    pub fn touch(&self, token: &str, now: DateTime<Utc>) -> Option<Session> {
        let mut sessions = self.sessions.write();
        let session = sessions.get_mut(token)?;
        if session.is_expired(now) {
            sessions.remove(token);
            return None;
        }
        session.expires_at = now + self.ttl;
        Some(session.clone())
    }

    pub fn lift_restriction(&self, token: &str) {
        if let Some(s) = self.sessions.write().get_mut(token) {
            s.restricted = false;
        }
    }

    pub fn revoke(&self, token: &str) {
        self.sessions.write().remove(token);
    }

    pub fn revoke_user(&self, user_id: &str) {
        self.sessions.write().retain(|_, s| s.user_id != user_id);
    }

    pub fn purge_expired(&self, now: DateTime<Utc>) -> usize {
        let mut sessions = self.sessions.write();
        let before = sessions.len();
        sessions.retain(|_, s| !s.is_expired(now));
        before - sessions.len()
    }
}
