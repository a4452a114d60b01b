//! Clinic operations: registration, card workflow, clinical content, billing,
//! referrals, accounts, reference data and archetypes.
//!
//! Every operation takes the acting [`Session`] and performs exactly one
//! capability check before it touches the store. All state lives in the
//! [`Store`]; read-modify-write cycles rely on its version check and retry on
//! conflict.

mod seed;
mod views;

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::Arc;

use chrono::{DateTime, TimeDelta, Utc};
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::access::{
    generate_password, Action, Authorizer, CapabilityMatrix, PasswordHasher, Resource, Role,
    Session, SessionManager, User, UserSummary,
};
use crate::archetype::{
    parse_archetype, serialize_archetype, validate_entry, validate_fields, ArchetypeDefinition,
    RegisterOutcome, Registry,
};
use crate::clock::{Clock, SystemClock};
use crate::error::{EmrError, Result};
use crate::model::{
    CardEvent, CardStatus, ClinicalEntry, Demographics, FieldValue, LabPanelKind, LabResult, Money,
    Mrn, NewEntry, NewLabResult, NewTransactionItem, Patient, PatientCard, ReferenceCategory,
    ReferenceItem, ReferralLetter, TransactionItem,
};
use crate::store::{AuditStatus, SnapshotCounts, Store, StoreError};
use crate::workflow;

pub use seed::{ARCHETYPES as SEED_ARCHETYPES, REFERENCE_DATA};
pub use views::{
    CardSummary, CardView, Dashboard, Page, Paged, RecordView, Registration, SeedReport,
    DEFAULT_PAGE_LIMIT, MAX_PAGE_LIMIT,
};

pub mod kinds {
    pub const PATIENT: &str = "Patient";
    pub const CARD: &str = "PatientCard";
    pub const CARD_INDEX: &str = "CardIndex";
    pub const REFERRAL: &str = "Referral";
    pub const REFERENCE: &str = "ReferenceItem";
    pub const USER: &str = "User";
    pub const USERNAME: &str = "Username";
    pub const ARCHETYPE: &str = "Archetype";
}

/// Actor recorded for bootstrap writes made outside any session.
pub const SYSTEM_ACTOR: &str = "system";
pub const MIN_PASSWORD_LEN: usize = 8;
const MAX_RETRIES: usize = 16;

#[derive(Debug, Clone)]
pub struct ClinicConfig {
    pub data_dir: PathBuf,
    pub session_ttl: TimeDelta,
    pub password_hasher: PasswordHasher,
    pub currency: String,
    pub fsync: bool,
}

impl ClinicConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        ClinicConfig {
            data_dir: data_dir.into(),
            session_ttl: TimeDelta::hours(12),
            password_hasher: PasswordHasher::default(),
            currency: "IDR".into(),
            fsync: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewUser {
    pub username: String,
    pub password: String,
    pub role: Role,
    #[serde(default)]
    pub linked_mrn: Option<Mrn>,
    #[serde(default)]
    pub assigned_lab: Option<LabPanelKind>,
    #[serde(default)]
    pub specialty: Option<String>,
    #[serde(default)]
    pub must_change_password: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferralRequest {
    pub card_id: String,
    pub target_facility: String,
    #[serde(default)]
    pub target_specialty: Option<String>,
    #[serde(default)]
    pub reason: String,
}

/// Partial demographics edit. Absent fields are left unchanged; `contact: null`
/// clears the contact.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatientUpdate {
    #[serde(default)]
    pub full_name: Option<String>,
    #[serde(default)]
    pub birth_date: Option<chrono::NaiveDate>,
    #[serde(default)]
    pub religion: Option<String>,
    #[serde(default)]
    pub sex: Option<String>,
    #[serde(default)]
    pub insurance: Option<String>,
    #[serde(default)]
    pub marital_status: Option<String>,
    #[serde(default, with = "double_option")]
    pub contact: Option<Option<String>>,
}

impl PatientUpdate {
    fn touches_demographics(&self) -> bool {
        self.full_name.is_some()
            || self.birth_date.is_some()
            || self.religion.is_some()
            || self.sex.is_some()
            || self.insurance.is_some()
            || self.marital_status.is_some()
    }
}

mod double_option {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Option<String>>, s: S) -> Result<S::Ok, S::Error> {
        v.as_ref().and_then(|x| x.as_ref()).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Option<String>>, D::Error> {
        Option::<String>::deserialize(d).map(Some)
    }
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
struct CardIndex {
    cards: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct UsernameClaim {
    user_id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ArchetypeRecord {
    source: String,
}

pub struct Clinic {
    store: Store,
    registry: RwLock<Registry>,
    authz: Authorizer,
    sessions: SessionManager,
    hasher: PasswordHasher,
    currency: String,
    /// Verified against when the username is unknown, so both failure paths cost the same.
    decoy_hash: crate::access::PasswordHash,
}

impl std::fmt::Debug for Clinic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Clinic")
            .field("store", &self.store)
            .finish_non_exhaustive()
    }
}

fn new_id() -> String {
    Uuid::new_v4().simple().to_string()
}

fn denied(action: Action, resource: Resource) -> EmrError {
    EmrError::AuthorizationDenied { action, resource }
}

impl Clinic {
    pub fn open(config: ClinicConfig) -> Result<Self> {
        Self::open_with(config, Arc::new(SystemClock), CapabilityMatrix::standard())
    }

    pub fn open_with(
        config: ClinicConfig,
        clock: Arc<dyn Clock>,
        matrix: CapabilityMatrix,
    ) -> Result<Self> {
        let mut store = Store::open(&config.data_dir, clock)?;
        if !config.fsync {
            store = store.without_fsync();
        }
        let mut defs = Vec::new();
        for rec in store.heads(kinds::ARCHETYPE) {
            let r: ArchetypeRecord = rec.decode()?;
            defs.push(parse_archetype(&r.source)?);
        }
        defs.sort_by_key(|d| {
            let id = d.id();
            (id.lineage(), id.version)
        });
        let mut registry = Registry::new();
        for d in defs {
            registry.register(d)?;
        }
        Ok(Clinic {
            store,
            registry: RwLock::new(registry),
            authz: Authorizer::new(matrix),
            sessions: SessionManager::new(config.session_ttl),
            decoy_hash: config.password_hasher.hash(&new_id()),
            hasher: config.password_hasher,
            currency: config.currency,
        })
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn authorizer(&self) -> &Authorizer {
        &self.authz
    }

    pub fn sessions(&self) -> &SessionManager {
        &self.sessions
    }

    pub fn currency(&self) -> &str {
        &self.currency
    }

    fn now(&self) -> DateTime<Utc> {
        self.store.clock().now()
    }

    fn require(
        &self,
        session: &Session,
        action: Action,
        resource: Resource,
        owner: Option<&Mrn>,
    ) -> Result<()> {
        self.authz
            .require(session, action, resource, owner, self.now())
    }

    /// Loads reference data and shipped archetypes. Idempotent.
    pub fn bootstrap(&self) -> Result<(SeedReport, SeedReport)> {
        Ok((self.seed_references()?, self.seed_archetypes()?))
    }

    // ---- authentication -------------------------------------------------

    fn user_by_name(&self, username: &str) -> Result<Option<(User, u64)>> {
        match self.store.get_as::<UsernameClaim>(kinds::USERNAME, username) {
            Ok((claim, _)) => Ok(Some(self.store.get_as::<User>(kinds::USER, &claim.user_id)?)),
            Err(StoreError::NotFound { .. }) => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    /// Checks credentials and opens a session. Unknown users, inactive users and
    /// wrong passwords are indistinguishable.
    pub fn authenticate(&self, username: &str, password: &str) -> Result<Session> {
        let user = self.user_by_name(username)?;
        let ok = match &user {
            Some((u, _)) => u.password_hash.verify(password) && u.active,
            None => {
                let _ = self.decoy_hash.verify(password);
                false
            }
        };
        match user {
            Some((u, _)) if ok => Ok(self.sessions.issue(&u, self.now())),
            _ => Err(EmrError::AuthFailure),
        }
    }

    /// Resolves a bearer token to its live session, sliding its expiry.
    pub fn session(&self, token: &str) -> Option<Session> {
        self.sessions.touch(token, self.now())
    }

    pub fn logout(&self, token: &str) {
        self.sessions.revoke(token);
    }

    /// Replaces the caller's password. Allowed on restricted sessions, and lifts
    /// the restriction.
    pub fn change_password(&self, session: &Session, current: &str, new: &str) -> Result<()> {
        if session.is_expired(self.now()) {
            return Err(EmrError::AuthFailure);
        }
        if new.chars().count() < MIN_PASSWORD_LEN {
            return Err(EmrError::Validation(format!(
                "password must have at least {MIN_PASSWORD_LEN} characters"
            )));
        }
        let (mut user, version) = self.store.get_as::<User>(kinds::USER, &session.user_id)?;
        if !user.password_hash.verify(current) {
            return Err(EmrError::AuthFailure);
        }
        if current == new {
            return Err(EmrError::Validation("new password must differ".into()));
        }
        user.password_hash = self.hasher.hash(new);
        user.must_change_password = false;
        self.store.put_with_action(
            kinds::USER,
            &user.user_id,
            &user,
            version,
            &session.user_id,
            "change_password",
        )?;
        self.sessions.lift_restriction(&session.token);
        Ok(())
    }

    // ---- users ----------------------------------------------------------

    fn insert_user(&self, user: &User, actor: &str) -> Result<()> {
        user.check_invariants()?;
        self.store
            .put_with_action(
                kinds::USERNAME,
                &user.username,
                &UsernameClaim {
                    user_id: user.user_id.clone(),
                },
                0,
                actor,
                "claim_username",
            )
            .map_err(|e| match e {
                StoreError::VersionConflict { .. } => {
                    EmrError::Validation(format!("username {:?} is taken", user.username))
                }
                other => other.into(),
            })?;
        self.store
            .put_with_action(kinds::USER, &user.user_id, user, 0, actor, "create_user")?;
        Ok(())
    }

    /// Creates the first administrator with a generated one-time password.
    pub fn init_admin(&self, username: &str) -> Result<(UserSummary, String)> {
        let has_admin = self
            .store
            .heads(kinds::USER)
            .iter()
            .filter_map(|r| r.decode::<User>().ok())
            .any(|u| u.role == Role::Admin && u.active);
        if has_admin {
            return Err(EmrError::IllegalState("an administrator already exists".into()));
        }
        let password = generate_password(16);
        let user = User {
            user_id: new_id(),
            username: username.to_owned(),
            password_hash: self.hasher.hash(&password),
            role: Role::Admin,
            must_change_password: true,
            linked_mrn: None,
            assigned_lab: None,
            specialty: None,
            active: true,
        };
        self.insert_user(&user, SYSTEM_ACTOR)?;
        Ok((user.summary(), password))
    }

    pub fn create_user(&self, session: &Session, req: NewUser) -> Result<UserSummary> {
        self.require(session, Action::Create, Resource::User, None)?;
        if Mrn::parse(&req.username).is_ok() {
            return Err(EmrError::Validation(
                "usernames in MRN form are reserved for patient accounts".into(),
            ));
        }
        if req.password.chars().count() < MIN_PASSWORD_LEN {
            return Err(EmrError::Validation(format!(
                "password must have at least {MIN_PASSWORD_LEN} characters"
            )));
        }
        if let Some(mrn) = &req.linked_mrn {
            self.load_patient(mrn)?;
        }
        if let Some(code) = &req.specialty {
            self.check_reference(ReferenceCategory::Specialty, code)?;
        }
        let user = User {
            user_id: new_id(),
            username: req.username,
            password_hash: self.hasher.hash(&req.password),
            role: req.role,
            must_change_password: req.must_change_password,
            linked_mrn: req.linked_mrn,
            assigned_lab: req.assigned_lab,
            specialty: req.specialty,
            active: true,
        };
        self.insert_user(&user, &session.user_id)?;
        Ok(user.summary())
    }

    /// Deactivates an account and ends its sessions. Accounts are never erased.
    pub fn delete_user(&self, session: &Session, user_id: &str) -> Result<UserSummary> {
        self.require(session, Action::Delete, Resource::User, None)?;
        if user_id == session.user_id {
            return Err(EmrError::IllegalState("cannot delete your own account".into()));
        }
        let (mut user, version) = self.store.get_as::<User>(kinds::USER, user_id)?;
        if user.active {
            user.active = false;
            self.store.put_with_action(
                kinds::USER,
                user_id,
                &user,
                version,
                &session.user_id,
                "deactivate_user",
            )?;
        }
        self.sessions.revoke_user(user_id);
        Ok(user.summary())
    }

    pub fn list_users(&self, session: &Session, page: Page) -> Result<Paged<UserSummary>> {
        self.require(session, Action::List, Resource::User, None)?;
        let mut users = self
            .store
            .heads(kinds::USER)
            .iter()
            .map(|r| r.decode::<User>().map(|u| u.summary()))
            .collect::<Result<Vec<_>, _>>()?;
        users.sort_by(|a, b| a.username.cmp(&b.username));
        Ok(page.apply(users))
    }

    // ---- reference data -------------------------------------------------

    fn reference(&self, category: ReferenceCategory, code: &str) -> Result<Option<(ReferenceItem, u64)>> {
        match self
            .store
            .get_as::<ReferenceItem>(kinds::REFERENCE, &ReferenceItem::key(category, code))
        {
            Ok(found) => Ok(Some(found)),
            Err(StoreError::NotFound { .. }) => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    fn check_reference(&self, category: ReferenceCategory, code: &str) -> Result<()> {
        match self.reference(category, code)? {
            Some((item, _)) if item.active => Ok(()),
            _ => Err(EmrError::Validation(format!(
                "unknown reference value {code:?} for {category}"
            ))),
        }
    }

    pub fn seed_references(&self) -> Result<SeedReport> {
        let mut report = SeedReport::default();
        for (category, items) in REFERENCE_DATA {
            for (code, label) in *items {
                if self.reference(*category, code)?.is_some() {
                    report.unchanged += 1;
                    continue;
                }
                let item = ReferenceItem {
                    category: *category,
                    code: (*code).to_owned(),
                    label: (*label).to_owned(),
                    active: true,
                };
                self.store.put_with_action(
                    kinds::REFERENCE,
                    &ReferenceItem::key(*category, code),
                    &item,
                    0,
                    SYSTEM_ACTOR,
                    "seed_reference",
                )?;
                report.added += 1;
            }
        }
        Ok(report)
    }

    /// Active items of a category, ordered by code.
    pub fn references(&self, session: &Session, category: ReferenceCategory) -> Result<Vec<ReferenceItem>> {
        self.require(session, Action::Read, Resource::ReferenceItem, None)?;
        self.references_unchecked(category)
    }

    fn references_unchecked(&self, category: ReferenceCategory) -> Result<Vec<ReferenceItem>> {
        let mut out = Vec::new();
        for rec in self.store.heads(kinds::REFERENCE) {
            let item: ReferenceItem = rec.decode()?;
            if item.category == category && item.active {
                out.push(item);
            }
        }
        Ok(out)
    }

    /// Adds a reference item, or relabels/reactivates an existing one.
    pub fn upsert_reference(
        &self,
        session: &Session,
        category: ReferenceCategory,
        code: &str,
        label: &str,
    ) -> Result<ReferenceItem> {
        self.require(session, Action::Create, Resource::ReferenceItem, None)?;
        if !code
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
            || code.is_empty()
        {
            return Err(EmrError::Validation(format!(
                "reference code {code:?} must be lowercase letters, digits or '_'"
            )));
        }
        if label.trim().is_empty() {
            return Err(EmrError::Validation("label must be non-empty".into()));
        }
        let item = ReferenceItem {
            category,
            code: code.to_owned(),
            label: label.to_owned(),
            active: true,
        };
        let (action, expected) = match self.reference(category, code)? {
            Some((existing, _)) if existing == item => return Ok(item),
            Some((_, v)) => ("update_reference", v),
            None => ("create_reference", 0),
        };
        self.store.put_with_action(
            kinds::REFERENCE,
            &ReferenceItem::key(category, code),
            &item,
            expected,
            &session.user_id,
            action,
        )?;
        Ok(item)
    }

    pub fn deactivate_reference(
        &self,
        session: &Session,
        category: ReferenceCategory,
        code: &str,
    ) -> Result<ReferenceItem> {
        self.require(session, Action::Delete, Resource::ReferenceItem, None)?;
        let key = ReferenceItem::key(category, code);
        let (mut item, version) = self
            .reference(category, code)?
            .ok_or_else(|| EmrError::not_found(kinds::REFERENCE, &key))?;
        if item.active {
            item.active = false;
            self.store.put_with_action(
                kinds::REFERENCE,
                &key,
                &item,
                version,
                &session.user_id,
                "deactivate_reference",
            )?;
        }
        Ok(item)
    }

    // ---- archetypes -----------------------------------------------------

    /// Parses, registers and persists an archetype. Re-importing an identical
    /// definition is a no-op.
    pub fn import_archetype_source(&self, source: &str, actor: &str) -> Result<(ArchetypeDefinition, RegisterOutcome)> {
        let def = parse_archetype(source)?;
        let mut registry = self.registry.write();
        let outcome = registry.check(&def)?;
        if outcome == RegisterOutcome::Added {
            let record = ArchetypeRecord {
                source: serialize_archetype(&def),
            };
            self.store.put_with_action(
                kinds::ARCHETYPE,
                &def.archetype_id,
                &record,
                0,
                actor,
                "register_archetype",
            )?;
            registry.register(def.clone())?;
        }
        Ok((def, outcome))
    }

    pub fn seed_archetypes(&self) -> Result<SeedReport> {
        let mut report = SeedReport::default();
        for (_, source) in SEED_ARCHETYPES {
            match self.import_archetype_source(source, SYSTEM_ACTOR)?.1 {
                RegisterOutcome::Added => report.added += 1,
                RegisterOutcome::Unchanged => report.unchanged += 1,
            }
        }
        Ok(report)
    }

    pub fn register_archetype(
        &self,
        session: &Session,
        source: &str,
    ) -> Result<(ArchetypeDefinition, RegisterOutcome)> {
        self.require(session, Action::Create, Resource::Archetype, None)?;
        self.import_archetype_source(source, &session.user_id)
    }

    pub fn registry_resolve(&self, archetype_id: &str) -> Result<ArchetypeDefinition> {
        Ok(self.registry.read().resolve(archetype_id)?.clone())
    }

    pub fn archetype(&self, session: &Session, archetype_id: &str) -> Result<ArchetypeDefinition> {
        self.require(session, Action::Read, Resource::Archetype, None)?;
        self.registry_resolve(archetype_id)
    }

    pub fn archetypes(&self, session: &Session, page: Page) -> Result<Paged<ArchetypeDefinition>> {
        self.require(session, Action::Read, Resource::Archetype, None)?;
        Ok(page.apply(self.registry.read().iter().cloned().collect()))
    }

    // ---- patients -------------------------------------------------------

    fn load_patient(&self, mrn: &Mrn) -> Result<Patient> {
        Ok(self.store.get_as::<Patient>(kinds::PATIENT, mrn.as_str())?.0)
    }

    fn validate_demographics(&self, d: &Demographics) -> Result<()> {
        if d.full_name.trim().is_empty() {
            return Err(EmrError::Validation("full_name must be non-empty".into()));
        }
        for (category, code) in d.references() {
            self.check_reference(category, code)?;
        }
        Ok(())
    }

    fn next_mrn(&self) -> Result<Mrn> {
        let last = self
            .store
            .heads(kinds::PATIENT)
            .last()
            .map(|r| Mrn::parse(&r.record_id))
            .transpose()?;
        Mrn::from_counter(last.map_or(1, |m| m.counter() + 1))
    }

    /// Registers a patient under a fresh MRN and provisions their login, whose
    /// generated password must be changed at first use.
    pub fn register_patient(&self, session: &Session, demographics: Demographics) -> Result<Registration> {
        self.require(session, Action::Create, Resource::Patient, None)?;
        self.validate_demographics(&demographics)?;
        let user_id = new_id();

        let mut attempt = 0;
        let patient = loop {
            let patient = Patient {
                mrn: self.next_mrn()?,
                demographics: demographics.clone(),
                created_at: self.now(),
                credential_ref: Some(user_id.clone()),
            };
            match self.store.put_with_action(
                kinds::PATIENT,
                patient.mrn.as_str(),
                &patient,
                0,
                &session.user_id,
                "register_patient",
            ) {
                Ok(_) => break patient,
                Err(StoreError::VersionConflict { .. }) if attempt < MAX_RETRIES => attempt += 1,
                Err(e) => return Err(e.into()),
            }
        };

        let password = generate_password(10);
        let user = User {
            user_id,
            username: patient.mrn.to_string(),
            password_hash: self.hasher.hash(&password),
            role: Role::Patient,
            must_change_password: true,
            linked_mrn: Some(patient.mrn.clone()),
            assigned_lab: None,
            specialty: None,
            active: true,
        };
        self.insert_user(&user, &session.user_id)?;
        Ok(Registration {
            patient,
            username: user.username,
            initial_password: password,
        })
    }

    /// Edits demographics. Patients may change only their own contact field.
    pub fn update_patient(&self, session: &Session, mrn: &Mrn, update: PatientUpdate) -> Result<Patient> {
        self.require(session, Action::Update, Resource::Patient, Some(mrn))?;
        if session.role == Role::Patient && update.touches_demographics() {
            return Err(denied(Action::Update, Resource::Patient));
        }
        let mut attempt = 0;
        loop {
            let (mut patient, version) = self.store.get_as::<Patient>(kinds::PATIENT, mrn.as_str())?;
            let d = &mut patient.demographics;
            let u = update.clone();
            if let Some(v) = u.full_name {
                d.full_name = v;
            }
            if let Some(v) = u.birth_date {
                d.birth_date = v;
            }
            if let Some(v) = u.religion {
                d.religion = v;
            }
            if let Some(v) = u.sex {
                d.sex = v;
            }
            if let Some(v) = u.insurance {
                d.insurance = v;
            }
            if let Some(v) = u.marital_status {
                d.marital_status = v;
            }
            if let Some(v) = u.contact {
                d.contact = v;
            }
            self.validate_demographics(&patient.demographics)?;
            match self.store.put_with_action(
                kinds::PATIENT,
                mrn.as_str(),
                &patient,
                version,
                &session.user_id,
                "update_patient",
            ) {
                Ok(_) => return Ok(patient),
                Err(StoreError::VersionConflict { .. }) if attempt < MAX_RETRIES => attempt += 1,
                Err(e) => return Err(e.into()),
            }
        }
    }

    pub fn list_patients(&self, session: &Session, page: Page) -> Result<Paged<Patient>> {
        self.require(session, Action::List, Resource::Patient, None)?;
        let patients = self
            .store
            .heads(kinds::PATIENT)
            .iter()
            .map(|r| r.decode())
            .collect::<Result<Vec<Patient>, _>>()?;
        Ok(page.apply(patients))
    }

    fn card_ids(&self, mrn: &Mrn) -> Result<(CardIndex, u64)> {
        match self.store.get_as::<CardIndex>(kinds::CARD_INDEX, mrn.as_str()) {
            Ok(found) => Ok(found),
            Err(StoreError::NotFound { .. }) => Ok((CardIndex::default(), 0)),
            Err(e) => Err(e.into()),
        }
    }

    fn cards_of(&self, mrn: &Mrn) -> Result<Vec<PatientCard>> {
        self.card_ids(mrn)?
            .0
            .cards
            .iter()
            .map(|id| self.load_card(id).map(|(c, _)| c))
            .collect()
    }

    /// Full read-only record: demographics, every card with its total, referrals.
    pub fn patient_record_view(&self, session: &Session, mrn: &Mrn) -> Result<RecordView> {
        self.require(session, Action::Read, Resource::Patient, Some(mrn))?;
        let patient = self.load_patient(mrn)?;
        let cards = self
            .cards_of(mrn)?
            .into_iter()
            .map(|card| Ok(CardView { total: card.total()?, card }))
            .collect::<Result<Vec<_>>>()?;
        let referrals = self
            .all_referrals()?
            .into_iter()
            .filter(|r| &r.mrn == mrn)
            .collect();
        Ok(RecordView {
            patient,
            cards,
            referrals,
        })
    }

    // ---- cards ----------------------------------------------------------

    fn load_card(&self, card_id: &str) -> Result<(PatientCard, u64)> {
        Ok(self.store.get_as::<PatientCard>(kinds::CARD, card_id)?)
    }

    /// Re-reads and re-applies `f` until the write lands on the head version.
    fn update_card<F>(&self, card_id: &str, actor: &str, action: &str, mut f: F) -> Result<PatientCard>
    where
        F: FnMut(&mut PatientCard) -> Result<()>,
    {
        let mut attempt = 0;
        loop {
            let (mut card, version) = self.load_card(card_id)?;
            f(&mut card)?;
            match self
                .store
                .put_with_action(kinds::CARD, card_id, &card, version, actor, action)
            {
                Ok(_) => return Ok(card),
                Err(StoreError::VersionConflict { .. }) if attempt < MAX_RETRIES => attempt += 1,
                Err(e) => return Err(e.into()),
            }
        }
    }

    /// Opens a new Waiting card numbered one past the patient's latest.
    pub fn open_card(&self, session: &Session, mrn: &Mrn) -> Result<PatientCard> {
        self.require(session, Action::Create, Resource::PatientCard, None)?;
        self.load_patient(mrn)?;
        let mut attempt = 0;
        loop {
            let (mut index, version) = self.card_ids(mrn)?;
            let card = PatientCard {
                card_id: new_id(),
                mrn: mrn.clone(),
                seq_no: index.cards.len() as u32 + 1,
                status: CardStatus::Waiting,
                entries: Vec::new(),
                lab_results: Vec::new(),
                items: Vec::new(),
                pending_labs: BTreeSet::new(),
                opened_by: session.user_id.clone(),
                opened_at: self.now(),
            };
            index.cards.push(card.card_id.clone());
            match self.store.put_with_action(
                kinds::CARD_INDEX,
                mrn.as_str(),
                &index,
                version,
                &session.user_id,
                "index_card",
            ) {
                Ok(_) => {}
                Err(StoreError::VersionConflict { .. }) if attempt < MAX_RETRIES => {
                    attempt += 1;
                    continue;
                }
                Err(e) => return Err(e.into()),
            }
            self.store.put_with_action(
                kinds::CARD,
                &card.card_id,
                &card,
                0,
                &session.user_id,
                "open_card",
            )?;
            return Ok(card);
        }
    }

    pub fn card(&self, session: &Session, card_id: &str) -> Result<CardView> {
        let (card, _) = self.load_card(card_id)?;
        self.require(session, Action::Read, Resource::PatientCard, Some(&card.mrn))?;
        Ok(CardView {
            total: card.total()?,
            card,
        })
    }

    /// Applies a workflow event. `lab_panels` names the panels requested by
    /// `SendToLab` (all three when empty) and is ignored for other events.
    pub fn transition_card(
        &self,
        session: &Session,
        card_id: &str,
        event: CardEvent,
        lab_panels: &[LabPanelKind],
    ) -> Result<PatientCard> {
        self.require(session, Action::Update, Resource::PatientCard, None)?;
        if session.role != workflow::event_role(event) {
            return Err(denied(Action::Update, Resource::PatientCard));
        }
        let action = format!("transition_card:{event}");
        self.update_card(card_id, &session.user_id, &action, |card| {
            let next = workflow::next_status(card.status, event).ok_or(
                EmrError::IllegalTransition {
                    from: card.status,
                    event,
                },
            )?;
            card.status = next;
            match event {
                CardEvent::SendToLab if lab_panels.is_empty() => {
                    card.pending_labs = LabPanelKind::ALL.into_iter().collect();
                }
                CardEvent::SendToLab => card.pending_labs = lab_panels.iter().copied().collect(),
                CardEvent::LabDone => card.pending_labs.clear(),
                _ => {}
            }
            Ok(())
        })
    }

    /// Validates the entry against its archetype and appends it to a card under
    /// doctor examination.
    pub fn attach_entry(&self, session: &Session, card_id: &str, new: NewEntry) -> Result<PatientCard> {
        self.require(session, Action::Create, Resource::ClinicalEntry, None)?;
        let def = self.registry_resolve(&new.archetype_id).map_err(|_| {
            EmrError::Validation(format!("unknown archetype {:?}", new.archetype_id))
        })?;
        let entry = ClinicalEntry {
            entry_id: new_id(),
            kind: new.kind,
            archetype_id: new.archetype_id,
            fields: new.fields,
            author: session.user_id.clone(),
            authored_at: self.now(),
        };
        let violations =
            validate_entry(&entry, &def).map_err(|e| EmrError::Validation(e.to_string()))?;
        self.update_card(card_id, &session.user_id, "attach_entry", |card| {
            if card.status != CardStatus::InDoctorExam {
                return Err(EmrError::IllegalState(format!(
                    "entries require a card in doctor examination, card is {}",
                    card.status
                )));
            }
            if !violations.is_empty() {
                return Err(EmrError::ConstraintViolation(violations.clone()));
            }
            card.entries.push(entry.clone());
            Ok(())
        })
    }

    /// Appends a lab panel to a card in lab examination. The laborant must be
    /// assigned to that panel; measurements are checked against the panel archetype.
    pub fn attach_lab_result(&self, session: &Session, card_id: &str, new: NewLabResult) -> Result<PatientCard> {
        self.require(session, Action::Create, Resource::LabResult, None)?;
        if session.assigned_lab != Some(new.panel) {
            return Err(EmrError::LabMismatch {
                assigned: session.assigned_lab,
                panel: new.panel,
            });
        }
        let def = self.registry_resolve(new.panel.archetype_id())?;
        let fields: BTreeMap<String, FieldValue> = new
            .measurements
            .iter()
            .map(|(k, q)| (k.clone(), FieldValue::from(q.clone())))
            .collect();
        for v in fields.values() {
            v.check().map_err(EmrError::Validation)?;
        }
        let violations = validate_fields(&fields, &def);
        let result = LabResult {
            result_id: new_id(),
            panel: new.panel,
            measurements: new.measurements,
            author: session.user_id.clone(),
            authored_at: self.now(),
        };
        self.update_card(card_id, &session.user_id, "attach_lab_result", |card| {
            if card.status != CardStatus::InLabExam {
                return Err(EmrError::IllegalState(format!(
                    "lab results require a card in lab examination, card is {}",
                    card.status
                )));
            }
            if !violations.is_empty() {
                return Err(EmrError::ConstraintViolation(violations.clone()));
            }
            card.pending_labs.remove(&result.panel);
            card.lab_results.push(result.clone());
            Ok(())
        })
    }

    pub fn add_transaction_item(
        &self,
        session: &Session,
        card_id: &str,
        new: NewTransactionItem,
    ) -> Result<PatientCard> {
        self.require(session, Action::Create, Resource::TransactionItem, None)?;
        if new.cost < 0 {
            return Err(EmrError::Validation(format!("cost {} is negative", new.cost)));
        }
        let (category, code) = new.kind.reference();
        self.check_reference(category, code)?;
        let item = TransactionItem {
            item_id: new_id(),
            kind: new.kind,
            cost: Money(new.cost),
            added_by: session.user_id.clone(),
        };
        self.update_card(card_id, &session.user_id, "add_transaction_item", |card| {
            card.items.push(item.clone());
            card.total()?;
            Ok(())
        })
    }

    /// Sum of the card's item costs.
    pub fn card_total(&self, card_id: &str) -> Result<Money> {
        self.load_card(card_id)?.0.total()
    }

    // ---- referrals ------------------------------------------------------

    fn all_referrals(&self) -> Result<Vec<ReferralLetter>> {
        let mut out = self
            .store
            .heads(kinds::REFERRAL)
            .iter()
            .map(|r| r.decode())
            .collect::<Result<Vec<ReferralLetter>, _>>()?;
        out.sort_by(|a, b| (a.issued_at, &a.referral_id).cmp(&(b.issued_at, &b.referral_id)));
        Ok(out)
    }

    pub fn make_referral(&self, session: &Session, req: ReferralRequest) -> Result<ReferralLetter> {
        self.require(session, Action::Create, Resource::Referral, None)?;
        if req.target_facility.trim().is_empty() {
            return Err(EmrError::Validation("target_facility must be non-empty".into()));
        }
        if let Some(code) = &req.target_specialty {
            self.check_reference(ReferenceCategory::Specialty, code)?;
        }
        let (card, _) = self.load_card(&req.card_id)?;
        if card.status == CardStatus::Waiting {
            return Err(EmrError::IllegalState(
                "referrals require an examination to have started".into(),
            ));
        }
        let letter = ReferralLetter {
            referral_id: new_id(),
            card_id: card.card_id,
            mrn: card.mrn,
            issuing_doctor: session.user_id.clone(),
            target_facility: req.target_facility,
            target_specialty: req.target_specialty,
            reason: req.reason,
            issued_at: self.now(),
        };
        self.store.put_with_action(
            kinds::REFERRAL,
            &letter.referral_id,
            &letter,
            0,
            &session.user_id,
            "make_referral",
        )?;
        Ok(letter)
    }

    pub fn list_referrals(&self, session: &Session, page: Page) -> Result<Paged<ReferralLetter>> {
        self.require(session, Action::List, Resource::Referral, None)?;
        Ok(page.apply(self.all_referrals()?))
    }

    // ---- dashboards -----------------------------------------------------

    fn summaries<P: Fn(&PatientCard) -> bool>(&self, keep: P) -> Result<Vec<CardSummary>> {
        let mut names: BTreeMap<Mrn, String> = BTreeMap::new();
        let mut out = Vec::new();
        for rec in self.store.heads(kinds::CARD) {
            let card: PatientCard = rec.decode()?;
            if !keep(&card) {
                continue;
            }
            let name = match names.get(&card.mrn) {
                Some(n) => n.clone(),
                None => {
                    let n = self.load_patient(&card.mrn)?.demographics.full_name;
                    names.insert(card.mrn.clone(), n.clone());
                    n
                }
            };
            out.push(summary(&card, name)?);
        }
        out.sort_by(|a, b| (a.opened_at, &a.card_id).cmp(&(b.opened_at, &b.card_id)));
        Ok(out)
    }

    pub fn dashboard(&self, session: &Session) -> Result<Dashboard> {
        self.require(session, Action::Read, Resource::Dashboard, None)?;
        Ok(match session.role {
            Role::Admin => {
                let mut users_by_role = BTreeMap::new();
                for rec in self.store.heads(kinds::USER) {
                    let u: User = rec.decode()?;
                    if u.active {
                        *users_by_role.entry(u.role).or_insert(0) += 1;
                    }
                }
                let mut references_by_category = BTreeMap::new();
                for rec in self.store.heads(kinds::REFERENCE) {
                    let r: ReferenceItem = rec.decode()?;
                    if r.active {
                        *references_by_category.entry(r.category).or_insert(0) += 1;
                    }
                }
                Dashboard::Admin {
                    users_by_role,
                    references_by_category,
                    archetypes: self.registry.read().len(),
                }
            }
            Role::Staff => Dashboard::Staff {
                waiting: self.summaries(|c| c.status == CardStatus::Waiting)?,
                unbilled: self.summaries(|c| c.status == CardStatus::Complete && c.items.is_empty())?,
            },
            Role::Doctor => Dashboard::Doctor {
                in_exam: self.summaries(|c| c.status == CardStatus::InDoctorExam)?,
                referrals: self
                    .all_referrals()?
                    .into_iter()
                    .filter(|r| r.issuing_doctor == session.user_id)
                    .collect(),
            },
            Role::Laborant => {
                let panel = session.assigned_lab;
                Dashboard::Laborant {
                    panel,
                    awaiting: self.summaries(|c| {
                        c.status == CardStatus::InLabExam
                            && panel.is_some_and(|p| c.pending_labs.contains(&p))
                    })?,
                }
            }
            Role::Patient => {
                let mrn = session
                    .linked_mrn
                    .clone()
                    .ok_or_else(|| EmrError::IllegalState("patient account without MRN".into()))?;
                let patient = self.load_patient(&mrn)?;
                let name = patient.demographics.full_name.clone();
                let cards = self
                    .cards_of(&mrn)?
                    .iter()
                    .map(|c| summary(c, name.clone()))
                    .collect::<Result<Vec<_>>>()?;
                Dashboard::Patient {
                    mrn,
                    full_name: name,
                    cards,
                }
            }
        })
    }

    // ---- audit and snapshots -------------------------------------------

    pub fn verify_audit(&self) -> Result<AuditStatus> {
        Ok(self.store.verify_audit()?)
    }

    pub fn export_snapshot<W: std::io::Write>(&self, out: W) -> Result<SnapshotCounts> {
        Ok(self.store.export_snapshot(out)?)
    }
}

fn summary(card: &PatientCard, patient_name: String) -> Result<CardSummary> {
    Ok(CardSummary {
        card_id: card.card_id.clone(),
        mrn: card.mrn.clone(),
        seq_no: card.seq_no,
        status: card.status,
        patient_name,
        item_count: card.items.len(),
        total: card.total()?,
        opened_at: card.opened_at,
    })
}
