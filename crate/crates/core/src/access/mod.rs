//! Five-role access control.
//!
//! Every operation asks the [`CapabilityMatrix`] whether a role may perform an
//! [`Action`] on a [`Resource`]. Rows carry a [`Scope`]: patients only ever get
//! `OwnOnly` rows on clinical resources, checked against the MRN the resource
//! belongs to. Anything without a row is denied.

mod matrix;
mod menu;
mod password;
mod session;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::EmrError;
use crate::model::{LabPanelKind, Mrn, UserId};

pub use matrix::{Authorizer, CapabilityMatrix};
pub use menu::{menu_for, MenuItem};
pub use password::{generate_password, PasswordHash, PasswordHasher};
pub use session::{Session, SessionManager};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Admin,
    Staff,
    Doctor,
    Laborant,
    Patient,
}

impl Role {
    pub const ALL: [Role; 5] = [
        Role::Admin,
        Role::Staff,
        Role::Doctor,
        Role::Laborant,
        Role::Patient,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Admin => "admin",
            Role::Staff => "staff",
            Role::Doctor => "doctor",
            Role::Laborant => "laborant",
            Role::Patient => "patient",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = EmrError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Role::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| EmrError::Validation(format!("unknown role {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Action {
    Create,
    Read,
    Update,
    Delete,
    List,
    Manage,
}

impl Action {
    pub const ALL: [Action; 6] = [
        Action::Create,
        Action::Read,
        Action::Update,
        Action::Delete,
        Action::List,
        Action::Manage,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Resource {
    User,
    Patient,
    PatientCard,
    ClinicalEntry,
    LabResult,
    TransactionItem,
    Referral,
    ReferenceItem,
    Archetype,
    Dashboard,
}

impl Resource {
    pub const ALL: [Resource; 10] = [
        Resource::User,
        Resource::Patient,
        Resource::PatientCard,
        Resource::ClinicalEntry,
        Resource::LabResult,
        Resource::TransactionItem,
        Resource::Referral,
        Resource::ReferenceItem,
        Resource::Archetype,
        Resource::Dashboard,
    ];

    /// Resources that belong to one patient's record.
    pub fn is_clinical(self) -> bool {
        matches!(
            self,
            Resource::Patient
                | Resource::PatientCard
                | Resource::ClinicalEntry
                | Resource::LabResult
                | Resource::TransactionItem
                | Resource::Referral
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scope {
    All,
    OwnOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Capability {
    pub role: Role,
    pub action: Action,
    pub resource: Resource,
    pub scope: Scope,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Allow,
    Deny,
}

impl Decision {
    pub fn is_allow(self) -> bool {
        self == Decision::Allow
    }
}

/// A user account.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct User {
    pub user_id: UserId,
    pub username: String,
    pub password_hash: PasswordHash,
    pub role: Role,
    pub must_change_password: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linked_mrn: Option<Mrn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assigned_lab: Option<LabPanelKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub specialty: Option<String>,
    pub active: bool,
}

impl User {
    /// Role-dependent attribute rules.
    pub fn check_invariants(&self) -> Result<(), EmrError> {
        let bad = |m: &str| Err(EmrError::Validation(m.into()));
        if self.username.trim().is_empty() {
            return bad("username must be non-empty");
        }
        if self.linked_mrn.is_some() != (self.role == Role::Patient) {
            return bad("linked_mrn is required for, and only for, patient accounts");
        }
        if self.assigned_lab.is_some() != (self.role == Role::Laborant) {
            return bad("assigned_lab is required for, and only for, laborant accounts");
        }
        if self.specialty.is_some() && self.role != Role::Doctor {
            return bad("specialty only applies to doctor accounts");
        }
        Ok(())
    }

    /// View without the password hash.
    pub fn summary(&self) -> UserSummary {
        UserSummary {
            user_id: self.user_id.clone(),
            username: self.username.clone(),
            role: self.role,
            must_change_password: self.must_change_password,
            linked_mrn: self.linked_mrn.clone(),
            assigned_lab: self.assigned_lab,
            specialty: self.specialty.clone(),
            active: self.active,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserSummary {
    pub user_id: UserId,
    pub username: String,
    pub role: Role,
    pub must_change_password: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub linked_mrn: Option<Mrn>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assigned_lab: Option<LabPanelKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub specialty: Option<String>,
    pub active: bool,
}
