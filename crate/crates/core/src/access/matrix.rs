use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

use chrono::{DateTime, Utc};

use super::{Action, Capability, Decision, Resource, Role, Scope, Session};
use crate::error::EmrError;
use crate::model::Mrn;

/// (role, action, resource) → scope. Absent rows deny.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CapabilityMatrix {
    rows: BTreeMap<(Role, Action, Resource), Scope>,
}

impl Default for CapabilityMatrix {
    fn default() -> Self {
        Self::standard()
    }
}

impl CapabilityMatrix {
    pub fn empty() -> Self {
        CapabilityMatrix {
            rows: BTreeMap::new(),
        }
    }

    /// The clinic's role model.
    ///
    /// Admin administers users, reference data and archetypes and may read
    /// everything, but authors no clinical content. Staff registers patients, opens
    /// cards and bills. Doctors write entries and referrals. Laborants write lab
    /// results. Staff, doctors and laborants share read access to clinical data and
    /// may move a card through the workflow. Patients read their own record only.
    /// Delete is reserved to admin.
    pub fn standard() -> Self {
        use Action::*;
        use Resource::*;
        const ALL_ACTIONS: &[Action] = &[Create, Read, Update, Delete, List, Manage];
        const RL: &[Action] = &[Read, List];

        let mut m = Self::empty();
        let mut grant = |role, actions: &[Action], resources: &[Resource], scope| {
            for &a in actions {
                for &r in resources {
                    m.insert(Capability {
                        role,
                        action: a,
                        resource: r,
                        scope,
                    });
                }
            }
        };
        let clinical = [Patient, PatientCard, ClinicalEntry, LabResult, TransactionItem, Referral];

        grant(Role::Admin, ALL_ACTIONS, &[User, ReferenceItem, Archetype], Scope::All);
        grant(Role::Admin, RL, &clinical, Scope::All);
        grant(Role::Admin, &[Read], &[Dashboard], Scope::All);

        for role in [Role::Staff, Role::Doctor, Role::Laborant] {
            grant(role, RL, &clinical, Scope::All);
            grant(role, RL, &[User, ReferenceItem, Archetype], Scope::All);
            grant(role, &[Read], &[Dashboard], Scope::All);
            grant(role, &[Update], &[PatientCard], Scope::All);
        }
        grant(Role::Staff, &[Create, Update], &[Patient], Scope::All);
        grant(Role::Staff, &[Create], &[PatientCard, TransactionItem], Scope::All);
        grant(Role::Doctor, &[Create], &[ClinicalEntry, Referral], Scope::All);
        grant(Role::Laborant, &[Create], &[LabResult], Scope::All);

        grant(Role::Patient, &[Read], &clinical, Scope::OwnOnly);
        grant(Role::Patient, &[Update], &[Patient], Scope::OwnOnly);
        grant(Role::Patient, &[Read], &[ReferenceItem, Archetype, Dashboard], Scope::All);
        m
    }

    pub fn insert(&mut self, cap: Capability) {
        self.rows
            .insert((cap.role, cap.action, cap.resource), cap.scope);
    }

    pub fn remove(&mut self, role: Role, action: Action, resource: Resource) {
        self.rows.remove(&(role, action, resource));
    }

    pub fn scope(&self, role: Role, action: Action, resource: Resource) -> Option<Scope> {
        self.rows.get(&(role, action, resource)).copied()
    }

    pub fn rows_for(&self, role: Role) -> Vec<Capability> {
        self.rows
            .iter()
            .filter(|((r, _, _), _)| *r == role)
            .map(|(&(role, action, resource), &scope)| Capability {
                role,
                action,
                resource,
                scope,
            })
            .collect()
    }

    /// Pure matrix decision for a role, with `OwnOnly` rows compared against
    /// `linked_mrn`.
    pub fn decide(
        &self,
        role: Role,
        linked_mrn: Option<&Mrn>,
        action: Action,
        resource: Resource,
        owner_mrn: Option<&Mrn>,
    ) -> Decision {
        match self.scope(role, action, resource) {
            Some(Scope::All) => Decision::Allow,
            Some(Scope::OwnOnly) => match (linked_mrn, owner_mrn) {
                (Some(mine), Some(owner)) if mine == owner => Decision::Allow,
                _ => Decision::Deny,
            },
            None => Decision::Deny,
        }
    }
}

/// Session-aware authorization over a [`CapabilityMatrix`].
///
/// Counts every call. Enforcement can be switched off so tests can prove that a
/// denial came from the matrix check on the request path.
#[derive(Debug)]
pub struct Authorizer {
    matrix: CapabilityMatrix,
    enforcing: AtomicBool,
    calls: AtomicU64,
}

impl Authorizer {
    pub fn new(matrix: CapabilityMatrix) -> Self {
        Authorizer {
            matrix,
            enforcing: AtomicBool::new(true),
            calls: AtomicU64::new(0),
        }
    }

    pub fn matrix(&self) -> &CapabilityMatrix {
        &self.matrix
    }

    /// Expired and password-change-restricted sessions authorize nothing.
    pub fn authorize(
        &self,
        session: &Session,
        action: Action,
        resource: Resource,
        owner_mrn: Option<&Mrn>,
        now: DateTime<Utc>,
    ) -> Decision {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if session.is_expired(now) || session.restricted {
            return Decision::Deny;
        }
        if !self.enforcing.load(Ordering::SeqCst) {
            return Decision::Allow;
        }
        self.matrix.decide(
            session.role,
            session.linked_mrn.as_ref(),
            action,
            resource,
            owner_mrn,
        )
    }

    pub fn require(
        &self,
        session: &Session,
        action: Action,
        resource: Resource,
        owner_mrn: Option<&Mrn>,
        now: DateTime<Utc>,
    ) -> Result<(), EmrError> {
        match self.authorize(session, action, resource, owner_mrn, now) {
            Decision::Allow => Ok(()),
            Decision::Deny => Err(EmrError::AuthorizationDenied { action, resource }),
        }
    }

    /// Test hook: with enforcement off every live, unrestricted session is allowed.
    pub fn set_enforcing(&self, on: bool) {
        self.enforcing.store(on, Ordering::SeqCst);
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Default for Authorizer {
    fn default() -> Self {
        Self::new(CapabilityMatrix::standard())
    }
}
