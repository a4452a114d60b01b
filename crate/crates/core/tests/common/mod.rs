#![allow(dead_code)]

use std::collections::BTreeMap;

use chrono::NaiveDate;
use emr_core::access::{PasswordHasher, Role, Session};
use emr_core::clinic::{Clinic, ClinicConfig, NewUser};
use emr_core::model::{Demographics, FieldValue, LabPanelKind, NewEntry, EntryKind};
use tempfile::TempDir;

pub struct Fixture {
    pub dir: TempDir,
    pub clinic: Clinic,
    pub admin: Session,
}

pub fn config(dir: &std::path::Path) -> ClinicConfig {
    ClinicConfig {
        password_hasher: PasswordHasher { iterations: 1_000 },
        fsync: false,
        ..ClinicConfig::new(dir)
    }
}

pub fn fixture() -> Fixture {
    let dir = TempDir::new().unwrap();
    let clinic = Clinic::open(config(dir.path())).unwrap();
    clinic.bootstrap().unwrap();
    let (_, once) = clinic.init_admin("admin").unwrap();
    let restricted = clinic.authenticate("admin", &once).unwrap();
    clinic
        .change_password(&restricted, &once, "admin-password")
        .unwrap();
    let admin = clinic.authenticate("admin", "admin-password").unwrap();
    Fixture { dir, clinic, admin }
}

impl Fixture {
    pub fn user(&self, username: &str, role: Role, lab: Option<LabPanelKind>) -> Session {
        self.clinic
            .create_user(
                &self.admin,
                NewUser {
                    username: username.into(),
                    password: format!("{username}-password"),
                    role,
                    linked_mrn: None,
                    assigned_lab: lab,
                    specialty: None,
                    must_change_password: false,
                },
            )
            .unwrap();
        self.clinic
            .authenticate(username, &format!("{username}-password"))
            .unwrap()
    }
}

pub fn demographics(name: &str) -> Demographics {
    Demographics {
        full_name: name.into(),
        birth_date: NaiveDate::from_ymd_opt(1990, 4, 1).unwrap(),
        religion: "islam".into(),
        sex: "female".into(),
        insurance: "health_insurance".into(),
        marital_status: "single".into(),
        contact: None,
    }
}

pub fn vital_signs(systolic: f64) -> NewEntry {
    NewEntry {
        kind: EntryKind::Observation,
        archetype_id: "openEHR-EHR-OBSERVATION.vital_signs.v1".into(),
        fields: BTreeMap::from([(
            "systolic_bp".to_string(),
            FieldValue::quantity(systolic, "mmHg"),
        )]),
    }
}
