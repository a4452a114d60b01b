use axum::extract::{FromRequest, FromRequestParts, Query, Request};
use axum::http::header::AUTHORIZATION;
use axum::http::request::Parts;
use axum::Json;
use emr_core::access::Session;
use emr_core::clinic::Page;
use serde::de::DeserializeOwned;

use crate::error::ApiError;
use crate::AppState;

fn bearer(parts: &Parts) -> Option<&str> {
    let value = parts.headers.get(AUTHORIZATION)?.to_str().ok()?;
    let (scheme, token) = value.split_once(' ')?;
    scheme
        .eq_ignore_ascii_case("bearer")
        .then(|| token.trim())
        .filter(|t| !t.is_empty())
}

fn lookup(parts: &Parts, state: &AppState) -> Option<Session> {
    bearer(parts).and_then(|t| state.clinic.session(t))
}

/// A live session that has completed any required password change.
pub struct Authed(pub Session);

/// Any live session, including one restricted to changing its password.
pub struct AnySession(pub Session);

/// The caller's session if a valid token was sent.
pub struct MaybeSession(pub Option<Session>);

impl FromRequestParts<AppState> for Authed {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, ApiError> {
        let session = lookup(parts, state).ok_or_else(ApiError::unauthenticated)?;
        if session.restricted {
            return Err(ApiError::password_change_required());
        }
        Ok(Authed(session))
    }
}

impl FromRequestParts<AppState> for AnySession {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, ApiError> {
        lookup(parts, state)
            .map(AnySession)
            .ok_or_else(ApiError::unauthenticated)
    }
}

impl FromRequestParts<AppState> for MaybeSession {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, ApiError> {
        Ok(MaybeSession(lookup(parts, state)))
    }
}

/// JSON body whose rejections use the API error shape.
pub struct JsonBody<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for JsonBody<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(JsonBody(v)),
            Err(rejection) => Err(ApiError::bad_request(rejection.body_text())),
        }
    }
}

/// `?offset&limit` pagination.
pub struct Paging(pub Page);

impl<S: Send + Sync> FromRequestParts<S> for Paging {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, ApiError> {
        match Query::<Page>::from_request_parts(parts, state).await {
            Ok(Query(page)) => Ok(Paging(page)),
            Err(rejection) => Err(ApiError::bad_request(rejection.body_text())),
        }
    }
}
