//! Bootstrap reference data and archetypes.

use crate::model::{CardStatus, ReferenceCategory};

pub const REFERENCE_DATA: &[(ReferenceCategory, &[(&str, &str)])] = &[
    (
        ReferenceCategory::Religion,
        &[
            ("buddhism", "Buddhism"),
            ("catholicism", "Catholicism"),
            ("hinduism", "Hinduism"),
            ("islam", "Islam"),
            ("protestant_christian", "Protestant Christian"),
            ("other", "Other"),
        ],
    ),
    (ReferenceCategory::Sex, &[("female", "Female"), ("male", "Male")]),
    (
        ReferenceCategory::Insurance,
        &[
            ("health_insurance", "Health Insurance"),
            ("social_security", "Social Security"),
        ],
    ),
    (
        ReferenceCategory::Status,
        &[
            ("divorced", "Divorced"),
            ("married", "Married"),
            ("single", "Single"),
        ],
    ),
    (
        ReferenceCategory::TreatmentType,
        &[
            ("dental", "Dental Treatment"),
            ("eye", "Eye Doctor"),
            ("general_practitioner", "General Practitioner"),
        ],
    ),
    (
        ReferenceCategory::ServiceType,
        &[
            ("hematology_lab", "Hematology Laboratory"),
            ("urinalysis_lab", "Urinalysis Laboratory"),
            ("biochemistry_lab", "Biochemistry Laboratory"),
        ],
    ),
    (
        ReferenceCategory::CardStatus,
        &[
            (CardStatus::Waiting.code(), "Waiting"),
            (CardStatus::InDoctorExam.code(), "Examined by a Doctor"),
            (CardStatus::InLabExam.code(), "Examined by a Laboratory Assistant"),
            (CardStatus::Complete.code(), "Complete"),
        ],
    ),
    (
        ReferenceCategory::Role,
        &[
            ("admin", "Administrator"),
            ("staff", "Staff"),
            ("doctor", "Doctor"),
            ("laborant", "Laboratory Assistant"),
            ("patient", "Patient"),
        ],
    ),
    (
        ReferenceCategory::Specialty,
        &[
            ("dentist", "Dentist"),
            ("general_practitioner", "General Practitioner"),
            ("ophthalmologist", "Ophthalmologist"),
        ],
    ),
];

/// `(file name, source)` for every shipped archetype.
pub const ARCHETYPES: &[(&str, &str)] = &[
    ("vital_signs.arch", include_str!("../../archetypes/vital_signs.arch")),
    ("illness_history.arch", include_str!("../../archetypes/illness_history.arch")),
    ("physical_exam.arch", include_str!("../../archetypes/physical_exam.arch")),
    ("diagnostic_test.arch", include_str!("../../archetypes/diagnostic_test.arch")),
    ("clinical_assessment.arch", include_str!("../../archetypes/clinical_assessment.arch")),
    ("care_plan.arch", include_str!("../../archetypes/care_plan.arch")),
    ("lab_hematology.arch", include_str!("../../archetypes/lab_hematology.arch")),
    ("lab_urinalysis.arch", include_str!("../../archetypes/lab_urinalysis.arch")),
    ("lab_biochemistry.arch", include_str!("../../archetypes/lab_biochemistry.arch")),
];
