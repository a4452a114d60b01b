use thiserror::Error;

use crate::access::{Action, Resource};
use crate::archetype::{ConstraintViolation, ParseError, RegistryError};
use crate::model::{CardEvent, CardStatus, LabPanelKind};
use crate::store::StoreError;

/// Errors surfaced by clinic operations.
#[derive(Debug, Error)]
pub enum EmrError {
    #[error("authorization denied: {action:?} {resource:?}")]
    AuthorizationDenied { action: Action, resource: Resource },

    #[error("authentication failed")]
    AuthFailure,

    #[error("{kind} {id:?} not found")]
    NotFound { kind: String, id: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("entry violates its archetype ({} violation(s))", .0.len())]
    ConstraintViolation(Vec<ConstraintViolation>),

    #[error("illegal transition: {event} from {from}")]
    IllegalTransition { from: CardStatus, event: CardEvent },

    #[error("illegal state: {0}")]
    IllegalState(String),

    #[error("laborant assigned to {assigned:?} cannot record {panel} results")]
    LabMismatch {
        assigned: Option<LabPanelKind>,
        panel: LabPanelKind,
    },

    #[error("version conflict: {0}")]
    VersionConflict(String),

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error(transparent)]
    Store(StoreError),
}

impl EmrError {
    pub fn not_found(kind: &str, id: impl Into<String>) -> Self {
        EmrError::NotFound {
            kind: kind.to_owned(),
            id: id.into(),
        }
    }
}

impl From<StoreError> for EmrError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::VersionConflict { .. } => EmrError::VersionConflict(e.to_string()),
            StoreError::NotFound { kind, id, .. } => EmrError::NotFound { kind, id },
            other => EmrError::Store(other),
        }
    }
}

impl From<RegistryError> for EmrError {
    fn from(e: RegistryError) -> Self {
        match e {
            RegistryError::NotFound(id) => EmrError::not_found("Archetype", id),
            RegistryError::VersionConflict { .. } => EmrError::VersionConflict(e.to_string()),
        }
    }
}

pub type Result<T, E = EmrError> = std::result::Result<T, E>;
