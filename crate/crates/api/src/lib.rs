//! HTTP/JSON service over the clinic core.
//!
//! Clients authenticate with `POST /api/login` and send the returned token as
//! `Authorization: Bearer <token>`. Errors use the [`ApiError`] body shape.

mod error;
mod extract;
mod handlers;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::routing::{get, post};
use axum::Router;
use chrono::TimeDelta;
use emr_core::{Clinic, ClinicConfig, EmrError};
use thiserror::Error;
use tokio::net::TcpListener;

pub use error::ApiError;

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_DATA_DIR: &str = "./data";
pub const DEFAULT_SESSION_TTL_HOURS: i64 = 12;

#[derive(Clone)]
pub struct AppState {
    pub clinic: Arc<Clinic>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiConfig {
    pub port: u16,
    pub data_dir: PathBuf,
    pub session_ttl_hours: i64,
}

impl Default for ApiConfig {
    fn default() -> Self {
        ApiConfig {
            port: DEFAULT_PORT,
            data_dir: PathBuf::from(DEFAULT_DATA_DIR),
            session_ttl_hours: DEFAULT_SESSION_TTL_HOURS,
        }
    }
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot bind port {port}: {source}")]
    Bind {
        port: u16,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Clinic(#[from] EmrError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ApiConfig {
    /// Reads `EMR_PORT`, `EMR_DATA_DIR` and `EMR_SESSION_TTL_HOURS`, falling back
    /// to the defaults for unset variables.
    pub fn from_env() -> Result<Self, ServeError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<Self, ServeError> {
        let mut cfg = ApiConfig::default();
        if let Some(v) = get("EMR_PORT") {
            cfg.port = v
                .parse()
                .map_err(|_| ServeError::Config(format!("EMR_PORT={v:?} is not a port")))?;
        }
        if let Some(v) = get("EMR_DATA_DIR") {
            cfg.data_dir = PathBuf::from(v);
        }
        if let Some(v) = get("EMR_SESSION_TTL_HOURS") {
            cfg.session_ttl_hours = v
                .parse()
                .ok()
                .filter(|h| *h > 0)
                .ok_or_else(|| ServeError::Config(format!("EMR_SESSION_TTL_HOURS={v:?} is not a positive integer")))?;
        }
        Ok(cfg)
    }

    pub fn clinic_config(&self) -> ClinicConfig {
        ClinicConfig {
            session_ttl: TimeDelta::hours(self.session_ttl_hours),
            ..ClinicConfig::new(&self.data_dir)
        }
    }
}

pub fn router(clinic: Arc<Clinic>) -> Router {
    use handlers::*;
    Router::new()
        .route("/api/health", get(health))
        .route("/api/login", post(login))
        .route("/api/logout", post(logout))
        .route("/api/password", post(change_password))
        .route("/api/menu", get(menu))
        .route("/api/capabilities", get(capabilities))
        .route("/api/dashboard", get(dashboard))
        .route("/api/users", get(list_users).post(create_user))
        .route("/api/users/{id}", axum::routing::delete(delete_user))
        .route("/api/patients", get(list_patients).post(register_patient))
        .route("/api/patients/{mrn}", get(patient_record).patch(update_patient))
        .route("/api/patients/{mrn}/cards", post(open_card))
        .route("/api/cards/{id}", get(card))
        .route("/api/cards/{id}/transition", post(transition))
        .route("/api/cards/{id}/entries", post(attach_entry))
        .route("/api/cards/{id}/labs", post(attach_lab))
        .route("/api/cards/{id}/items", post(add_item))
        .route("/api/cards/{id}/total", get(card_total))
        .route("/api/referrals", get(list_referrals).post(make_referral))
        .route("/api/references", post(upsert_reference).delete(deactivate_reference))
        .route("/api/references/{category}", get(references))
        .route("/api/archetypes", get(list_archetypes).post(register_archetype))
        .route("/api/archetypes/{id}", get(archetype))
        .fallback(fallback)
        .with_state(AppState { clinic })
}

/// Opens the clinic in `config.data_dir`, loads reference data and shipped
/// archetypes if missing, and returns it ready to serve.
pub fn open_clinic(config: &ApiConfig) -> Result<Arc<Clinic>, ServeError> {
    std::fs::create_dir_all(&config.data_dir)?;
    let clinic = Clinic::open(config.clinic_config())?;
    clinic.bootstrap()?;
    Ok(Arc::new(clinic))
}

/// Serves on an already-bound listener until `shutdown` resolves.
pub async fn serve_on<F>(listener: TcpListener, clinic: Arc<Clinic>, shutdown: F) -> std::io::Result<()>
where
    F: std::future::Future<Output = ()> + Send + 'static,
{
    axum::serve(listener, router(clinic))
        .with_graceful_shutdown(shutdown)
        .await
}

/// Runs the service on `0.0.0.0:port` until Ctrl-C.
pub async fn serve(config: ApiConfig) -> Result<(), ServeError> {
    let clinic = open_clinic(&config)?;
    let addr = SocketAddr::from(([0, 0, 0, 0], config.port));
    let listener = TcpListener::bind(addr)
        .await
        .map_err(|source| ServeError::Bind {
            port: config.port,
            source,
        })?;
    eprintln!("emr listening on {}", listener.local_addr()?);
    serve_on(listener, clinic, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await?;
    Ok(())
}
