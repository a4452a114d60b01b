use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use chrono::{DateTime, Utc};
use emr_core::access::{menu_for, Capability, Role};
use emr_core::archetype::RegisterOutcome;
use emr_core::clinic::{NewUser, PatientUpdate, ReferralRequest};
use emr_core::model::{
    CardEvent, CardStatus, Demographics, LabPanelKind, Money, Mrn, NewEntry, NewLabResult,
    NewTransactionItem, ReferenceCategory,
};
use emr_core::{workflow, Clinic, EmrError};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::ApiError;
use crate::extract::{AnySession, Authed, JsonBody, MaybeSession, Paging};
use crate::AppState;

type ApiResult<T = Response> = Result<T, ApiError>;

/// Runs a clinic operation off the async executor; hashing and fsync block.
async fn run<T, F>(state: &AppState, op: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Clinic) -> Result<T, EmrError> + Send + 'static,
{
    let clinic = state.clinic.clone();
    tokio::task::spawn_blocking(move || op(&clinic))
        .await
        .map_err(|_| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", "worker failed"))?
        .map_err(ApiError::from)
}

fn ok<T: Serialize>(v: T) -> ApiResult {
    Ok(Json(v).into_response())
}

fn created<T: Serialize>(v: T) -> ApiResult {
    Ok((StatusCode::CREATED, Json(v)).into_response())
}

fn mrn_param(raw: &str) -> ApiResult<Mrn> {
    Mrn::parse(raw).map_err(|_| ApiError::not_found(format!("Patient {raw:?} not found")))
}

fn category_param(raw: &str) -> ApiResult<ReferenceCategory> {
    raw.parse()
        .map_err(|_| ApiError::not_found(format!("reference category {raw:?} not found")))
}

pub async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoginRequest {
    username: String,
    password: String,
}

#[derive(Serialize)]
struct LoginResponse {
    token: String,
    user_id: String,
    role: Role,
    must_change_password: bool,
    expires_at: DateTime<Utc>,
}

pub async fn login(State(state): State<AppState>, JsonBody(req): JsonBody<LoginRequest>) -> ApiResult {
    let s = run(&state, move |c| c.authenticate(&req.username, &req.password)).await?;
    ok(LoginResponse {
        token: s.token,
        user_id: s.user_id,
        role: s.role,
        must_change_password: s.restricted,
        expires_at: s.expires_at,
    })
}

pub async fn logout(State(state): State<AppState>, AnySession(s): AnySession) -> StatusCode {
    state.clinic.logout(&s.token);
    StatusCode::NO_CONTENT
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PasswordChange {
    current_password: String,
    new_password: String,
}

pub async fn change_password(
    State(state): State<AppState>,
    AnySession(s): AnySession,
    JsonBody(req): JsonBody<PasswordChange>,
) -> ApiResult<StatusCode> {
    run(&state, move |c| {
        c.change_password(&s, &req.current_password, &req.new_password)
    })
    .await?;
    Ok(StatusCode::NO_CONTENT)
}

pub async fn menu(State(state): State<AppState>, MaybeSession(s): MaybeSession) -> ApiResult {
    let role = s.map(|s| s.role);
    ok(json!({
        "role": role,
        "items": menu_for(role, state.clinic.authorizer().matrix()),
    }))
}

#[derive(Serialize)]
struct Transition {
    from: CardStatus,
    event: CardEvent,
    to: CardStatus,
    role: Role,
}

/// The caller's matrix rows and the card workflow table, for client-side gating.
pub async fn capabilities(State(state): State<AppState>, Authed(s): Authed) -> ApiResult {
    let rows: Vec<Capability> = state.clinic.authorizer().matrix().rows_for(s.role);
    let transitions: Vec<Transition> = CardStatus::ALL
        .into_iter()
        .flat_map(|from| {
            workflow::legal_events(from).into_iter().map(move |event| Transition {
                from,
                event,
                to: workflow::next_status(from, event).unwrap_or(from),
                role: workflow::event_role(event),
            })
        })
        .collect();
    ok(json!({ "role": s.role, "capabilities": rows, "transitions": transitions }))
}

pub async fn dashboard(State(state): State<AppState>, Authed(s): Authed) -> ApiResult {
    ok(run(&state, move |c| c.dashboard(&s)).await?)
}

// ---- users ------------------------------------------------------------

pub async fn list_users(State(state): State<AppState>, Authed(s): Authed, Paging(p): Paging) -> ApiResult {
    ok(run(&state, move |c| c.list_users(&s, p)).await?)
}

pub async fn create_user(
    State(state): State<AppState>,
    Authed(s): Authed,
    JsonBody(req): JsonBody<NewUser>,
) -> ApiResult {
    created(run(&state, move |c| c.create_user(&s, req)).await?)
}

pub async fn delete_user(
    State(state): State<AppState>,
    Authed(s): Authed,
    Path(id): Path<String>,
) -> ApiResult {
    ok(run(&state, move |c| c.delete_user(&s, &id)).await?)
}

// ---- patients ---------------------------------------------------------

pub async fn list_patients(State(state): State<AppState>, Authed(s): Authed, Paging(p): Paging) -> ApiResult {
    ok(run(&state, move |c| c.list_patients(&s, p)).await?)
}

pub async fn register_patient(
    State(state): State<AppState>,
    Authed(s): Authed,
    JsonBody(d): JsonBody<Demographics>,
) -> ApiResult {
    created(run(&state, move |c| c.register_patient(&s, d)).await?)
}

pub async fn patient_record(
    State(state): State<AppState>,
    Authed(s): Authed,
    Path(mrn): Path<String>,
) -> ApiResult {
    let mrn = mrn_param(&mrn)?;
    ok(run(&state, move |c| c.patient_record_view(&s, &mrn)).await?)
}

pub async fn update_patient(
    State(state): State<AppState>,
    Authed(s): Authed,
    Path(mrn): Path<String>,
    JsonBody(u): JsonBody<PatientUpdate>,
) -> ApiResult {
    let mrn = mrn_param(&mrn)?;
    ok(run(&state, move |c| c.update_patient(&s, &mrn, u)).await?)
}

pub async fn open_card(
    State(state): State<AppState>,
    Authed(s): Authed,
    Path(mrn): Path<String>,
) -> ApiResult {
    let mrn = mrn_param(&mrn)?;
    created(run(&state, move |c| c.open_card(&s, &mrn)).await?)
}

// ---- cards ------------------------------------------------------------

pub async fn card(State(state): State<AppState>, Authed(s): Authed, Path(id): Path<String>) -> ApiResult {
    ok(run(&state, move |c| c.card(&s, &id)).await?)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionRequest {
    event: CardEvent,
    #[serde(default)]
    panels: Vec<LabPanelKind>,
}

pub async fn transition(
    State(state): State<AppState>,
    Authed(s): Authed,
    Path(id): Path<String>,
    JsonBody(req): JsonBody<TransitionRequest>,
) -> ApiResult {
    ok(run(&state, move |c| c.transition_card(&s, &id, req.event, &req.panels)).await?)
}

pub async fn attach_entry(
    State(state): State<AppState>,
    Authed(s): Authed,
    Path(id): Path<String>,
    JsonBody(e): JsonBody<NewEntry>,
) -> ApiResult {
    created(run(&state, move |c| c.attach_entry(&s, &id, e)).await?)
}

pub async fn attach_lab(
    State(state): State<AppState>,
    Authed(s): Authed,
    Path(id): Path<String>,
    JsonBody(r): JsonBody<NewLabResult>,
) -> ApiResult {
    created(run(&state, move |c| c.attach_lab_result(&s, &id, r)).await?)
}

pub async fn add_item(
    State(state): State<AppState>,
    Authed(s): Authed,
    Path(id): Path<String>,
    JsonBody(i): JsonBody<NewTransactionItem>,
) -> ApiResult {
    created(run(&state, move |c| c.add_transaction_item(&s, &id, i)).await?)
}

#[derive(Serialize)]
struct CardTotal {
    card_id: String,
    total: Money,
    currency: String,
    item_count: usize,
}

pub async fn card_total(State(state): State<AppState>, Authed(s): Authed, Path(id): Path<String>) -> ApiResult {
    let currency = state.clinic.currency().to_owned();
    let view = run(&state, move |c| c.card(&s, &id)).await?;
    ok(CardTotal {
        card_id: view.card.card_id,
        total: view.total,
        currency,
        item_count: view.card.items.len(),
    })
}

// ---- referrals --------------------------------------------------------

pub async fn make_referral(
    State(state): State<AppState>,
    Authed(s): Authed,
    JsonBody(r): JsonBody<ReferralRequest>,
) -> ApiResult {
    created(run(&state, move |c| c.make_referral(&s, r)).await?)
}

pub async fn list_referrals(State(state): State<AppState>, Authed(s): Authed, Paging(p): Paging) -> ApiResult {
    ok(run(&state, move |c| c.list_referrals(&s, p)).await?)
}

// ---- reference data ---------------------------------------------------

pub async fn references(
    State(state): State<AppState>,
    Authed(s): Authed,
    Path(category): Path<String>,
) -> ApiResult {
    let category = category_param(&category)?;
    let items = run(&state, move |c| c.references(&s, category)).await?;
    let mut resp = Json(json!({ "category": category, "items": items })).into_response();
    resp.headers_mut().insert(
        axum::http::header::CACHE_CONTROL,
        axum::http::HeaderValue::from_static("private, max-age=300"),
    );
    Ok(resp)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceUpsert {
    category: ReferenceCategory,
    code: String,
    label: String,
}

pub async fn upsert_reference(
    State(state): State<AppState>,
    Authed(s): Authed,
    JsonBody(r): JsonBody<ReferenceUpsert>,
) -> ApiResult {
    ok(run(&state, move |c| c.upsert_reference(&s, r.category, &r.code, &r.label)).await?)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceKey {
    category: ReferenceCategory,
    code: String,
}

pub async fn deactivate_reference(
    State(state): State<AppState>,
    Authed(s): Authed,
    JsonBody(r): JsonBody<ReferenceKey>,
) -> ApiResult {
    ok(run(&state, move |c| c.deactivate_reference(&s, r.category, &r.code)).await?)
}

// ---- archetypes -------------------------------------------------------

pub async fn list_archetypes(State(state): State<AppState>, Authed(s): Authed, Paging(p): Paging) -> ApiResult {
    ok(run(&state, move |c| c.archetypes(&s, p)).await?)
}

pub async fn archetype(State(state): State<AppState>, Authed(s): Authed, Path(id): Path<String>) -> ApiResult {
    ok(run(&state, move |c| c.archetype(&s, &id)).await?)
}

pub async fn register_archetype(State(state): State<AppState>, Authed(s): Authed, body: String) -> ApiResult {
    let (def, outcome) = run(&state, move |c| c.register_archetype(&s, &body)).await?;
    let (status, label) = match outcome {
        RegisterOutcome::Added => (StatusCode::CREATED, "added"),
        RegisterOutcome::Unchanged => (StatusCode::OK, "unchanged"),
    };
    Ok((status, Json(json!({ "outcome": label, "archetype": def }))).into_response())
}

pub async fn fallback() -> ApiError {
    ApiError::not_found("no such endpoint")
}
