use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::access::Role;
use crate::model::{
    CardStatus, LabPanelKind, Money, Mrn, Patient, PatientCard, ReferenceCategory, ReferralLetter,
};

pub const DEFAULT_PAGE_LIMIT: usize = 50;
pub const MAX_PAGE_LIMIT: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub struct Page {
    #[serde(default)]
    pub offset: usize,
    #[serde(default = "default_limit")]
    pub limit: usize,
}

fn default_limit() -> usize {
    DEFAULT_PAGE_LIMIT
}

impl Default for Page {
    fn default() -> Self {
        Page {
            offset: 0,
            limit: DEFAULT_PAGE_LIMIT,
        }
    }
}

impl Page {
    pub fn apply<T>(self, items: Vec<T>) -> Paged<T> {
        let limit = self.limit.clamp(1, MAX_PAGE_LIMIT);
        let total = items.len();
        let items = items.into_iter().skip(self.offset).take(limit).collect();
        Paged {
            items,
            total,
            offset: self.offset,
            limit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Paged<T> {
    pub items: Vec<T>,
    pub total: usize,
    pub offset: usize,
    pub limit: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CardView {
    #[serde(flatten)]
    pub card: PatientCard,
    pub total: Money,
}

/// Read-only copy of everything recorded about one patient.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordView {
    pub patient: Patient,
    pub cards: Vec<CardView>,
    pub referrals: Vec<ReferralLetter>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CardSummary {
    pub card_id: String,
    pub mrn: Mrn,
    pub seq_no: u32,
    pub status: CardStatus,
    pub patient_name: String,
    pub item_count: usize,
    pub total: Money,
    pub opened_at: DateTime<Utc>,
}

/// Role-specific landing data.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "role", rename_all = "lowercase")]
pub enum Dashboard {
    Admin {
        users_by_role: BTreeMap<Role, usize>,
        references_by_category: BTreeMap<ReferenceCategory, usize>,
        archetypes: usize,
    },
    Staff {
        waiting: Vec<CardSummary>,
        unbilled: Vec<CardSummary>,
    },
    Doctor {
        in_exam: Vec<CardSummary>,
        referrals: Vec<ReferralLetter>,
    },
    Laborant {
        panel: Option<LabPanelKind>,
        awaiting: Vec<CardSummary>,
    },
    Patient {
        mrn: Mrn,
        full_name: String,
        cards: Vec<CardSummary>,
    },
}

/// Outcome of patient registration: the record plus the provisioned login.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Registration {
    pub patient: Patient,
    pub username: String,
    /// Shown once; the patient must replace it at first login.
    pub initial_password: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SeedReport {
    pub added: usize,
    pub unchanged: usize,
}
