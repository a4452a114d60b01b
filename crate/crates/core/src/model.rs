//! Clinical domain types: patients, cards, entries, lab results and billing items.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::EmrError;

/// Opaque identifier of a user account.
pub type UserId = String;

/// Medical record number: `MRN` followed by eight zero-padded digits.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Mrn(String);

impl Mrn {
    pub const PREFIX: &'static str = "MRN";
    pub const DIGITS: usize = 8;
    pub const MAX_COUNTER: u64 = 99_999_999;

    pub fn from_counter(counter: u64) -> Result<Self, EmrError> {
        if counter == 0 || counter > Self::MAX_COUNTER {
            return Err(EmrError::Validation(format!(
                "MRN counter {counter} outside 1..={}",
                Self::MAX_COUNTER
            )));
        }
        Ok(Mrn(format!("{}{:08}", Self::PREFIX, counter)))
    }

    pub fn parse(s: &str) -> Result<Self, EmrError> {
        let digits = s
            .strip_prefix(Self::PREFIX)
            .filter(|d| d.len() == Self::DIGITS && d.bytes().all(|b| b.is_ascii_digit()))
            .ok_or_else(|| EmrError::Validation(format!("malformed MRN {s:?}")))?;
        if digits.bytes().all(|b| b == b'0') {
            return Err(EmrError::Validation(format!("malformed MRN {s:?}")));
        }
        Ok(Mrn(s.to_owned()))
    }

    pub fn counter(&self) -> u64 {
        self.0[Self::PREFIX.len()..]
            .parse()
            .expect("validated at construction")
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Mrn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for Mrn {
    type Err = EmrError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mrn::parse(s)
    }
}

impl TryFrom<String> for Mrn {
    type Error = EmrError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Mrn::parse(&s)
    }
}

impl From<Mrn> for String {
    fn from(m: Mrn) -> String {
        m.0
    }
}

/// Closed list of reference-data categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceCategory {
    Religion,
    Insurance,
    Sex,
    Status,
    CardStatus,
    TreatmentType,
    ServiceType,
    Role,
    Specialty,
}

impl ReferenceCategory {
    pub const ALL: [ReferenceCategory; 9] = [
        ReferenceCategory::Religion,
        ReferenceCategory::Insurance,
        ReferenceCategory::Sex,
        ReferenceCategory::Status,
        ReferenceCategory::CardStatus,
        ReferenceCategory::TreatmentType,
        ReferenceCategory::ServiceType,
        ReferenceCategory::Role,
        ReferenceCategory::Specialty,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ReferenceCategory::Religion => "religion",
            ReferenceCategory::Insurance => "insurance",
            ReferenceCategory::Sex => "sex",
            ReferenceCategory::Status => "status",
            ReferenceCategory::CardStatus => "card_status",
            ReferenceCategory::TreatmentType => "treatment_type",
            ReferenceCategory::ServiceType => "service_type",
            ReferenceCategory::Role => "role",
            ReferenceCategory::Specialty => "specialty",
        }
    }
}

impl fmt::Display for ReferenceCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReferenceCategory {
    type Err = EmrError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ReferenceCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| EmrError::Validation(format!("unknown reference category {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceItem {
    pub category: ReferenceCategory,
    pub code: String,
    pub label: String,
    pub active: bool,
}

impl ReferenceItem {
    /// Store key: `<category>/<code>`.
    pub fn key(category: ReferenceCategory, code: &str) -> String {
        format!("{}/{}", category.as_str(), code)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demographics {
    pub full_name: String,
    pub birth_date: chrono::NaiveDate,
    pub religion: String,
    pub sex: String,
    pub insurance: String,
    pub marital_status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contact: Option<String>,
}

impl Demographics {
    /// The four reference-valued attributes paired with their category.
    pub fn references(&self) -> [(ReferenceCategory, &str); 4] {
        [
            (ReferenceCategory::Religion, self.religion.as_str()),
            (ReferenceCategory::Sex, self.sex.as_str()),
            (ReferenceCategory::Insurance, self.insurance.as_str()),
            (ReferenceCategory::Status, self.marital_status.as_str()),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Patient {
    pub mrn: Mrn,
    pub demographics: Demographics,
    pub created_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub credential_ref: Option<UserId>,
}

/// Lifecycle status of a patient card.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CardStatus {
    Waiting,
    InDoctorExam,
    InLabExam,
    Complete,
}

impl CardStatus {
    pub const ALL: [CardStatus; 4] = [
        CardStatus::Waiting,
        CardStatus::InDoctorExam,
        CardStatus::InLabExam,
        CardStatus::Complete,
    ];

    /// Reference-data code for the `card_status` category.
    pub const fn code(self) -> &'static str {
        match self {
            CardStatus::Waiting => "waiting",
            CardStatus::InDoctorExam => "in_doctor_exam",
            CardStatus::InLabExam => "in_lab_exam",
            CardStatus::Complete => "complete",
        }
    }
}

impl fmt::Display for CardStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CardEvent {
    StartDoctorExam,
    SendToLab,
    LabDone,
    Close,
}

impl CardEvent {
    pub const ALL: [CardEvent; 4] = [
        CardEvent::StartDoctorExam,
        CardEvent::SendToLab,
        CardEvent::LabDone,
        CardEvent::Close,
    ];
}

impl fmt::Display for CardEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for CardEvent {
    type Err = EmrError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CardEvent::ALL
            .into_iter()
            .find(|e| format!("{e:?}") == s)
            .ok_or_else(|| EmrError::Validation(format!("unknown card event {s:?}")))
    }
}

/// The six entry kinds sharing the archetype mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EntryKind {
    Observation,
    History,
    Examination,
    Investigation,
    Evaluation,
    Instruction,
}

impl EntryKind {
    pub const ALL: [EntryKind; 6] = [
        EntryKind::Observation,
        EntryKind::History,
        EntryKind::Examination,
        EntryKind::Investigation,
        EntryKind::Evaluation,
        EntryKind::Instruction,
    ];

    /// Upper-case token used in archetype ids and the `kind` directive.
    pub fn token(self) -> &'static str {
        match self {
            EntryKind::Observation => "OBSERVATION",
            EntryKind::History => "HISTORY",
            EntryKind::Examination => "EXAMINATION",
            EntryKind::Investigation => "INVESTIGATION",
            EntryKind::Evaluation => "EVALUATION",
            EntryKind::Instruction => "INSTRUCTION",
        }
    }

    pub fn from_token(token: &str) -> Option<EntryKind> {
        EntryKind::ALL.into_iter().find(|k| k.token() == token)
    }

    /// Observation, History, Examination and Investigation carry quantified findings.
    pub fn is_observation_family(self) -> bool {
        matches!(
            self,
            EntryKind::Observation
                | EntryKind::History
                | EntryKind::Examination
                | EntryKind::Investigation
        )
    }
}

impl fmt::Display for EntryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    pub magnitude: f64,
    pub unit: String,
}

/// Value carried by one archetype-constrained field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
#[serde(try_from = "RawFieldValue")]
pub enum FieldValue {
    Quantity { magnitude: f64, unit: String },
    Text { value: String },
    Coded { code: String },
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum RawFieldValue {
    Quantity { magnitude: f64, unit: String },
    Text { value: String },
    Coded { code: String },
}

impl TryFrom<RawFieldValue> for FieldValue {
    type Error = String;
    fn try_from(raw: RawFieldValue) -> Result<Self, Self::Error> {
        let v = match raw {
            RawFieldValue::Quantity { magnitude, unit } => FieldValue::Quantity { magnitude, unit },
            RawFieldValue::Text { value } => FieldValue::Text { value },
            RawFieldValue::Coded { code } => FieldValue::Coded { code },
        };
        v.check()?;
        Ok(v)
    }
}

impl FieldValue {
    pub fn quantity(magnitude: f64, unit: impl Into<String>) -> Self {
        FieldValue::Quantity {
            magnitude,
            unit: unit.into(),
        }
    }

    pub fn text(value: impl Into<String>) -> Self {
        FieldValue::Text {
            value: value.into(),
        }
    }

    pub fn coded(code: impl Into<String>) -> Self {
        FieldValue::Coded { code: code.into() }
    }

    pub fn check(&self) -> Result<(), String> {
        match self {
            FieldValue::Quantity { magnitude, unit } => {
                if !magnitude.is_finite() {
                    return Err("quantity magnitude must be finite".into());
                }
                if unit.is_empty() {
                    return Err("quantity unit must be non-empty".into());
                }
            }
            FieldValue::Coded { code } if code.is_empty() => {
                return Err("coded value must be non-empty".into());
            }
            _ => {}
        }
        Ok(())
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            FieldValue::Quantity { .. } => "quantity",
            FieldValue::Text { .. } => "text",
            FieldValue::Coded { .. } => "coded",
        }
    }
}

impl From<Quantity> for FieldValue {
    fn from(q: Quantity) -> Self {
        FieldValue::Quantity {
            magnitude: q.magnitude,
            unit: q.unit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicalEntry {
    pub entry_id: String,
    pub kind: EntryKind,
    pub archetype_id: String,
    pub fields: BTreeMap<String, FieldValue>,
    pub author: UserId,
    pub authored_at: DateTime<Utc>,
}

/// Entry content as submitted by a doctor; ids and authorship are assigned on attach.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewEntry {
    pub kind: EntryKind,
    pub archetype_id: String,
    #[serde(default)]
    pub fields: BTreeMap<String, FieldValue>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LabPanelKind {
    Hematology,
    Urinalysis,
    Biochemistry,
}

impl LabPanelKind {
    pub const ALL: [LabPanelKind; 3] = [
        LabPanelKind::Hematology,
        LabPanelKind::Urinalysis,
        LabPanelKind::Biochemistry,
    ];

    /// Seed archetype constraining this panel's measurements.
    pub fn archetype_id(self) -> &'static str {
        match self {
            LabPanelKind::Hematology => "openEHR-EHR-OBSERVATION.lab_hematology.v1",
            LabPanelKind::Urinalysis => "openEHR-EHR-OBSERVATION.lab_urinalysis.v1",
            LabPanelKind::Biochemistry => "openEHR-EHR-OBSERVATION.lab_biochemistry.v1",
        }
    }
}

impl fmt::Display for LabPanelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabResult {
    pub result_id: String,
    pub panel: LabPanelKind,
    pub measurements: BTreeMap<String, Quantity>,
    pub author: UserId,
    pub authored_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewLabResult {
    pub panel: LabPanelKind,
    pub measurements: BTreeMap<String, Quantity>,
}

/// Money in integer minor units of the configured currency.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Money(pub i64);

impl Money {
    pub const ZERO: Money = Money(0);

    pub fn checked_add(self, other: Money) -> Option<Money> {
        self.0.checked_add(other.0).map(Money)
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ItemKind {
    Handling { treatment_type: String },
    Service { service_type: String },
}

impl ItemKind {
    pub fn reference(&self) -> (ReferenceCategory, &str) {
        match self {
            ItemKind::Handling { treatment_type } => {
                (ReferenceCategory::TreatmentType, treatment_type)
            }
            ItemKind::Service { service_type } => (ReferenceCategory::ServiceType, service_type),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransactionItem {
    pub item_id: String,
    #[serde(flatten)]
    pub kind: ItemKind,
    pub cost: Money,
    pub added_by: UserId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewTransactionItem {
    #[serde(flatten)]
    pub kind: ItemKind,
    pub cost: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientCard {
    pub card_id: String,
    pub mrn: Mrn,
    pub seq_no: u32,
    pub status: CardStatus,
    pub entries: Vec<ClinicalEntry>,
    pub lab_results: Vec<LabResult>,
    pub items: Vec<TransactionItem>,
    /// Panels requested by the latest SendToLab and not yet reported.
    #[serde(default)]
    pub pending_labs: BTreeSet<LabPanelKind>,
    pub opened_by: UserId,
    pub opened_at: DateTime<Utc>,
}

impl PatientCard {
    /// Sum of all item costs. Fails only on i64 overflow.
    pub fn total(&self) -> Result<Money, EmrError> {
        self.items
            .iter()
            .try_fold(Money::ZERO, |acc, item| acc.checked_add(item.cost))
            .ok_or_else(|| EmrError::Validation("card total overflows".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferralLetter {
    pub referral_id: String,
    pub card_id: String,
    pub mrn: Mrn,
    pub issuing_doctor: UserId,
    pub target_facility: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_specialty: Option<String>,
    pub reason: String,
    pub issued_at: DateTime<Utc>,
}
