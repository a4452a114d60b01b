use std::collections::BTreeMap;

use thiserror::Error;

use super::{ArchetypeDefinition, ConstraintViolation, ValueType, ViolationClass};
use crate::model::{ClinicalEntry, EntryKind, FieldValue};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidateError {
    #[error("entry kind {entry} does not match archetype kind {archetype}")]
    KindMismatch { entry: EntryKind, archetype: EntryKind },
    #[error("entry names archetype {entry:?}, not {archetype:?}")]
    ArchetypeMismatch { entry: String, archetype: String },
}

/// Checks `entry` against `def`, returning every violation found.
pub fn validate_entry(
    entry: &ClinicalEntry,
    def: &ArchetypeDefinition,
) -> Result<Vec<ConstraintViolation>, ValidateError> {
    if entry.archetype_id != def.archetype_id {
        return Err(ValidateError::ArchetypeMismatch {
            entry: entry.archetype_id.clone(),
            archetype: def.archetype_id.clone(),
        });
    }
    if entry.kind != def.kind {
        return Err(ValidateError::KindMismatch {
            entry: entry.kind,
            archetype: def.kind,
        });
    }
    Ok(validate_fields(&entry.fields, def))
}

/// Field-level checks shared by clinical entries and lab panels.
///
/// Declared fields are checked in declaration order, then undeclared entry
/// fields are reported in name order.
pub fn validate_fields(
    fields: &BTreeMap<String, FieldValue>,
    def: &ArchetypeDefinition,
) -> Vec<ConstraintViolation> {
    let mut out = Vec::new();
    let mut push = |field: &str, class, detail: String| {
        out.push(ConstraintViolation {
            field: field.to_owned(),
            class,
            detail,
        })
    };

    for c in &def.fields {
        let Some(value) = fields.get(&c.name) else {
            if c.required {
                push(&c.name, ViolationClass::MissingField, "required field absent".into());
            }
            continue;
        };
        match (c.value_type, value) {
            (ValueType::Quantity, FieldValue::Quantity { magnitude, unit }) => {
                if let Some(want) = &c.unit {
                    if unit != want {
                        push(
                            &c.name,
                            ViolationClass::UnitMismatch,
                            format!("unit {unit:?}, expected {want:?}"),
                        );
                    }
                }
                if let Some(r) = &c.range {
                    if !r.contains(*magnitude) {
                        push(
                            &c.name,
                            ViolationClass::RangeExceeded,
                            format!("{magnitude} outside {}..{}", r.lo, r.hi),
                        );
                    }
                }
            }
            (ValueType::Text, FieldValue::Text { .. }) => {}
            (ValueType::Coded, FieldValue::Coded { code }) => {
                if let Some(allowed) = &c.allowed_values {
                    if !allowed.iter().any(|a| a == code) {
                        push(
                            &c.name,
                            ViolationClass::ValueNotAllowed,
                            format!("code {code:?} not in {{{}}}", allowed.join(", ")),
                        );
                    }
                }
            }
            (want, got) => push(
                &c.name,
                ViolationClass::TypeMismatch,
                format!("expected {}, got {}", want.keyword(), got.type_name()),
            ),
        }
    }

    for name in fields.keys() {
        if def.field(name).is_none() {
            push(name, ViolationClass::UnknownField, "field not declared by archetype".into());
        }
    }
    out
}
