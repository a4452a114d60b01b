#![allow(dead_code)]

use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use emr_core::access::PasswordHasher;
use emr_core::{Clinic, ClinicConfig};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

pub struct App {
    pub _dir: TempDir,
    pub clinic: Arc<Clinic>,
    pub router: Router,
    pub admin: String,
}

pub struct Reply {
    pub status: StatusCode,
    pub bytes: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.bytes).unwrap_or(Value::Null)
    }

    pub fn code(&self) -> String {
        self.json()["code"].as_str().unwrap_or_default().to_owned()
    }
}

pub fn clinic_in(dir: &std::path::Path) -> Arc<Clinic> {
    let clinic = Clinic::open(ClinicConfig {
        password_hasher: PasswordHasher { iterations: 1_000 },
        fsync: false,
        ..ClinicConfig::new(dir)
    })
    .unwrap();
    clinic.bootstrap().unwrap();
    Arc::new(clinic)
}

impl App {
    pub async fn new() -> App {
        let dir = TempDir::new().unwrap();
        let clinic = clinic_in(dir.path());
        let (_, once) = clinic.init_admin("admin").unwrap();
        let router = emr_api::router(clinic.clone());
        let mut app = App {
            _dir: dir,
            clinic,
            router,
            admin: String::new(),
        };
        app.admin = app.login_changing("admin", &once, "admin-password").await;
        app
    }

    pub async fn send(&self, method: Method, uri: &str, token: Option<&str>, body: Option<Value>) -> Reply {
        let mut req = Request::builder().method(method).uri(uri);
        if let Some(t) = token {
            req = req.header(header::AUTHORIZATION, format!("Bearer {t}"));
        }
        let body = match body {
            Some(v) => {
                req = req.header(header::CONTENT_TYPE, "application/json");
                Body::from(v.to_string())
            }
            None => Body::empty(),
        };
        self.raw(req.body(body).unwrap()).await
    }

    pub async fn raw(&self, req: Request<Body>) -> Reply {
        let resp = self.router.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
        Reply { status, bytes }
    }

    pub async fn get(&self, uri: &str, token: Option<&str>) -> Reply {
        self.send(Method::GET, uri, token, None).await
    }

    pub async fn post(&self, uri: &str, token: Option<&str>, body: Value) -> Reply {
        self.send(Method::POST, uri, token, Some(body)).await
    }

    pub async fn login(&self, username: &str, password: &str) -> String {
        let r = self
            .post("/api/login", None, json!({ "username": username, "password": password }))
            .await;
        assert_eq!(r.status, StatusCode::OK, "{}", String::from_utf8_lossy(&r.bytes));
        r.json()["token"].as_str().unwrap().to_owned()
    }

    pub async fn login_changing(&self, username: &str, initial: &str, new: &str) -> String {
        let token = self.login(username, initial).await;
        let r = self
            .post(
                "/api/password",
                Some(&token),
                json!({ "current_password": initial, "new_password": new }),
            )
            .await;
        assert_eq!(r.status, StatusCode::NO_CONTENT);
        token
    }

    pub async fn user(&self, username: &str, role: &str, lab: Option<&str>) -> String {
        let mut body = json!({
            "username": username,
            "password": format!("{username}-password"),
            "role": role,
        });
        if let Some(lab) = lab {
            body["assigned_lab"] = json!(lab);
        }
        let r = self.post("/api/users", Some(&self.admin), body).await;
        assert_eq!(r.status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&r.bytes));
        self.login(username, &format!("{username}-password")).await
    }
}

pub fn demographics(name: &str) -> Value {
    json!({
        "full_name": name,
        "birth_date": "1985-07-12",
        "religion": "islam",
        "sex": "male",
        "insurance": "social_security",
        "marital_status": "married",
    })
}
