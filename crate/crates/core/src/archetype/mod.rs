//! Archetype constraint definitions.
//!
//! An archetype is a closed schema over the fields of one [`EntryKind`]. Definitions
//! are written in a small line-oriented language:
//!
//! ```text
//! archetype openEHR-EHR-OBSERVATION.vital_signs.v1
//! kind OBSERVATION
//! field systolic_bp quantity required range 0..400 unit mmHg
//! field body_temp quantity optional range 25..45 unit C
//! field note text optional
//! ```
//!
//! [`parse_archetype`] turns such text into an [`ArchetypeDefinition`],
//! [`serialize_archetype`] writes the canonical form back, and [`validate_entry`]
//! checks a clinical entry against a definition, reporting every violation.

mod parser;
mod registry;
mod validate;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::EntryKind;

pub use parser::{parse_archetype, serialize_archetype, ParseError, ParseErrorKind};
pub use registry::{RegisterOutcome, Registry, RegistryError};
pub use validate::{validate_entry, validate_fields, ValidateError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueType {
    Quantity,
    Text,
    Coded,
}

impl ValueType {
    pub fn keyword(self) -> &'static str {
        match self {
            ValueType::Quantity => "quantity",
            ValueType::Text => "text",
            ValueType::Coded => "coded",
        }
    }

    fn from_keyword(s: &str) -> Option<ValueType> {
        match s {
            "quantity" => Some(ValueType::Quantity),
            "text" => Some(ValueType::Text),
            "coded" => Some(ValueType::Coded),
            _ => None,
        }
    }
}

/// Closed decimal interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldConstraint {
    pub name: String,
    pub value_type: ValueType,
    pub required: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<Range>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allowed_values: Option<Vec<String>>,
}

impl FieldConstraint {
    pub fn new(name: impl Into<String>, value_type: ValueType, required: bool) -> Self {
        FieldConstraint {
            name: name.into(),
            value_type,
            required,
            range: None,
            unit: None,
            allowed_values: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchetypeDefinition {
    pub archetype_id: String,
    pub kind: EntryKind,
    pub fields: Vec<FieldConstraint>,
}

impl ArchetypeDefinition {
    pub fn field(&self, name: &str) -> Option<&FieldConstraint> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn id(&self) -> ArchetypeId {
        ArchetypeId::parse(&self.archetype_id).expect("definition ids are validated on parse")
    }
}

/// Parsed form of `<ns>-EHR-<KIND>.<name>.v<digits>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ArchetypeId {
    pub namespace: String,
    pub kind: EntryKind,
    pub name: String,
    pub version: u32,
}

/// Why an archetype id failed to parse.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IdError {
    Malformed,
    UnknownKind(String),
}

impl ArchetypeId {
    pub fn parse(s: &str) -> Result<Self, IdError> {
        let (namespace, rest) = s.split_once("-EHR-").ok_or(IdError::Malformed)?;
        if !is_identifier(namespace) {
            return Err(IdError::Malformed);
        }
        let mut parts = rest.split('.');
        let (Some(kind), Some(name), Some(version), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(IdError::Malformed);
        };
        if !is_identifier(name) {
            return Err(IdError::Malformed);
        }
        let version = version
            .strip_prefix('v')
            .filter(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
            .and_then(|d| d.parse::<u32>().ok())
            .ok_or(IdError::Malformed)?;
        if kind.is_empty() || !kind.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_') {
            return Err(IdError::Malformed);
        }
        let kind = EntryKind::from_token(kind).ok_or_else(|| IdError::UnknownKind(kind.into()))?;
        Ok(ArchetypeId {
            namespace: namespace.to_owned(),
            kind,
            name: name.to_owned(),
            version,
        })
    }

    /// Everything but the version: definitions sharing a lineage replace each other.
    pub fn lineage(&self) -> String {
        format!("{}-EHR-{}.{}", self.namespace, self.kind.token(), self.name)
    }
}

impl fmt::Display for ArchetypeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.v{}", self.lineage(), self.version)
    }
}

/// Outcome class of a failed field check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ViolationClass {
    MissingField,
    UnknownField,
    TypeMismatch,
    RangeExceeded,
    UnitMismatch,
    ValueNotAllowed,
}

impl ViolationClass {
    pub const ALL: [ViolationClass; 6] = [
        ViolationClass::MissingField,
        ViolationClass::UnknownField,
        ViolationClass::TypeMismatch,
        ViolationClass::RangeExceeded,
        ViolationClass::UnitMismatch,
        ViolationClass::ValueNotAllowed,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintViolation {
    pub field: String,
    pub class: ViolationClass,
    pub detail: String,
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}
