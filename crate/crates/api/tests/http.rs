mod common;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use common::{demographics, App};
use serde_json::{json, Value};

async fn patient(app: &App, staff: &str) -> (String, String) {
    let r = app.post("/api/patients", Some(staff), demographics("Andi")).await;
    assert_eq!(r.status, StatusCode::CREATED);
    let v = r.json();
    let mrn = v["patient"]["mrn"].as_str().unwrap().to_owned();
    let token = app
        .login_changing(
            v["username"].as_str().unwrap(),
            v["initial_password"].as_str().unwrap(),
            "patient-password",
        )
        .await;
    (mrn, token)
}

async fn card_in_exam(app: &App, staff: &str, doctor: &str, mrn: &str) -> String {
    let r = app
        .post(&format!("/api/patients/{mrn}/cards"), Some(staff), json!({}))
        .await;
    assert_eq!(r.status, StatusCode::CREATED);
    let id = r.json()["card_id"].as_str().unwrap().to_owned();
    let r = app
        .post(
            &format!("/api/cards/{id}/transition"),
            Some(doctor),
            json!({ "event": "StartDoctorExam" }),
        )
        .await;
    assert_eq!(r.status, StatusCode::OK);
    id
}

#[tokio::test]
async fn health_and_authentication() {
    let app = App::new().await;
    let r = app.get("/api/health", None).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json(), json!({ "status": "ok" }));

    let r = app.get("/api/patients", None).await;
    assert_eq!(r.status, StatusCode::UNAUTHORIZED);
    assert_eq!(r.code(), "unauthenticated");
    let r = app.get("/api/patients", Some("not-a-token")).await;
    assert_eq!(r.status, StatusCode::UNAUTHORIZED);

    app.user("staff1", "staff", None).await;
    let wrong = app
        .post("/api/login", None, json!({ "username": "staff1", "password": "nope" }))
        .await;
    let unknown = app
        .post("/api/login", None, json!({ "username": "ghost", "password": "nope" }))
        .await;
    assert_eq!(wrong.status, StatusCode::UNAUTHORIZED);
    assert_eq!(wrong.bytes, unknown.bytes);

    let r = app.post("/api/login", None, json!({ "username": "x" })).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.code(), "bad_request");
    let r = app
        .raw(
            Request::post("/api/login")
                .header(header::CONTENT_TYPE, "application/json")
                .body(Body::from("{"))
                .unwrap(),
        )
        .await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);

    let r = app.get("/api/nowhere", None).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn provisioned_password_must_be_changed_first() {
    let app = App::new().await;
    let staff = app.user("staff1", "staff", None).await;
    let r = app.post("/api/patients", Some(&staff), demographics("B")).await;
    let reg = r.json();
    let username = reg["username"].as_str().unwrap();
    let initial = reg["initial_password"].as_str().unwrap();

    let r = app
        .post("/api/login", None, json!({ "username": username, "password": initial }))
        .await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json()["must_change_password"], json!(true));
    assert_eq!(r.json()["role"], json!("patient"));
    let token = r.json()["token"].as_str().unwrap().to_owned();

    let r = app.get("/api/dashboard", Some(&token)).await;
    assert_eq!(r.status, StatusCode::FORBIDDEN);
    assert_eq!(r.code(), "password_change_required");
    let r = app.get("/api/menu", Some(&token)).await;
    assert_eq!(r.status, StatusCode::OK);

    let r = app
        .post(
            "/api/password",
            Some(&token),
            json!({ "current_password": initial, "new_password": "fresh-secret" }),
        )
        .await;
    assert_eq!(r.status, StatusCode::NO_CONTENT);
    let r = app.get("/api/dashboard", Some(&token)).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json()["role"], json!("patient"));
}

#[tokio::test]
async fn menus() {
    let app = App::new().await;
    let keys = |v: Value| -> Vec<String> {
        v["items"]
            .as_array()
            .unwrap()
            .iter()
            .map(|i| i["key"].as_str().unwrap().to_owned())
            .collect()
    };
    let r = app.get("/api/menu", None).await;
    assert_eq!(keys(r.json()), ["home", "login", "user_guide", "faq"]);
    let staff = app.user("staff1", "staff", None).await;
    let (_, me) = patient(&app, &staff).await;
    let r = app.get("/api/menu", Some(&me)).await;
    assert_eq!(keys(r.json()), ["home", "dashboard", "user_guide", "faq", "logout"]);
    let r = app.get("/api/menu", Some(&app.admin)).await;
    assert_eq!(keys(r.json()).len(), 11);

    let r = app.get("/api/capabilities", Some(&me)).await;
    let caps = r.json();
    assert!(caps["capabilities"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["action"] == "Read" && c["resource"] == "PatientCard")
        .all(|c| c["scope"] == "OwnOnly"));
    assert_eq!(caps["transitions"].as_array().unwrap().len(), 4);
}

#[tokio::test]
async fn role_gates() {
    let app = App::new().await;
    let staff = app.user("staff1", "staff", None).await;
    let doctor = app.user("doctor1", "doctor", None).await;
    let (mrn, me) = patient(&app, &staff).await;

    let r = app.get("/api/patients", Some(&me)).await;
    assert_eq!(r.status, StatusCode::FORBIDDEN);
    assert_eq!(r.code(), "forbidden");
    let r = app.get("/api/users", Some(&doctor)).await;
    assert_eq!(r.status, StatusCode::OK);
    let r = app
        .post(
            "/api/users",
            Some(&doctor),
            json!({ "username": "x1", "password": "password1", "role": "staff" }),
        )
        .await;
    assert_eq!(r.status, StatusCode::FORBIDDEN);
    let r = app
        .post(&format!("/api/patients/{mrn}/cards"), Some(&doctor), json!({}))
        .await;
    assert_eq!(r.status, StatusCode::FORBIDDEN);
    let r = app.get("/api/patients/MRN99999999", Some(&staff)).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    let r = app.get("/api/patients/garbage", Some(&staff)).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    let r = app.get(&format!("/api/patients/{mrn}"), Some(&me)).await;
    assert_eq!(r.status, StatusCode::OK);
}

#[tokio::test]
async fn disabling_the_matrix_lifts_denials() {
    let app = App::new().await;
    let staff = app.user("staff1", "staff", None).await;
    let doctor = app.user("doctor1", "doctor", None).await;
    let (mrn, me) = patient(&app, &staff).await;
    let id = card_in_exam(&app, &staff, &doctor, &mrn).await;
    let entry = json!({
        "kind": "Observation",
        "archetype_id": "openEHR-EHR-OBSERVATION.vital_signs.v1",
        "fields": { "systolic_bp": { "type": "quantity", "magnitude": 120, "unit": "mmHg" } }
    });

    let denied = [
        app.get("/api/patients", Some(&me)).await,
        app.post(&format!("/api/cards/{id}/entries"), Some(&staff), entry.clone()).await,
        app.post("/api/references", Some(&doctor), json!({ "category": "sex", "code": "x", "label": "X" })).await,
    ];
    assert!(denied.iter().all(|r| r.status == StatusCode::FORBIDDEN));

    app.clinic.authorizer().set_enforcing(false);
    assert_eq!(app.get("/api/patients", Some(&me)).await.status, StatusCode::OK);
    assert_eq!(
        app.post(&format!("/api/cards/{id}/entries"), Some(&staff), entry).await.status,
        StatusCode::CREATED
    );
    assert_eq!(
        app.post("/api/references", Some(&doctor), json!({ "category": "sex", "code": "x", "label": "X" }))
            .await
            .status,
        StatusCode::OK
    );
    app.clinic.authorizer().set_enforcing(true);
}

#[tokio::test]
async fn each_request_authorizes_once() {
    let app = App::new().await;
    let staff = app.user("staff1", "staff", None).await;
    let doctor = app.user("doctor1", "doctor", None).await;
    let (mrn, _) = patient(&app, &staff).await;
    let id = card_in_exam(&app, &staff, &doctor, &mrn).await;

    let calls = || app.clinic.authorizer().calls();
    let requests: Vec<(Method, String, String, Option<Value>)> = vec![
        (Method::POST, "/api/patients".into(), staff.clone(), Some(demographics("C"))),
        (Method::POST, format!("/api/patients/{mrn}/cards"), staff.clone(), Some(json!({}))),
        (
            Method::POST,
            format!("/api/cards/{id}/items"),
            staff.clone(),
            Some(json!({ "type": "handling", "treatment_type": "dental", "cost": 10 })),
        ),
        (
            Method::POST,
            "/api/referrals".into(),
            doctor.clone(),
            Some(json!({ "card_id": id, "target_facility": "RS" })),
        ),
        (
            Method::POST,
            format!("/api/cards/{id}/transition"),
            staff.clone(),
            Some(json!({ "event": "Close" })),
        ),
        (Method::GET, format!("/api/cards/{id}"), staff.clone(), None),
        (Method::GET, format!("/api/cards/{id}/total"), staff.clone(), None),
        (Method::GET, "/api/references/sex".into(), staff.clone(), None),
        (Method::GET, "/api/dashboard".into(), doctor.clone(), None),
        (
            Method::POST,
            "/api/references".into(),
            app.admin.clone(),
            Some(json!({ "category": "religion", "code": "kejawen", "label": "Kejawen" })),
        ),
    ];
    for (method, uri, token, body) in requests {
        let before = calls();
        let r = app.send(method.clone(), &uri, Some(&token), body).await;
        assert!(r.status.is_success(), "{method} {uri}: {}", String::from_utf8_lossy(&r.bytes));
        assert_eq!(calls() - before, 1, "{method} {uri}");
    }
}

#[tokio::test]
async fn error_taxonomy_on_the_wire() {
    let app = App::new().await;
    let staff = app.user("staff1", "staff", None).await;
    let doctor = app.user("doctor1", "doctor", None).await;
    let urine = app.user("lab_u", "laborant", Some("Urinalysis")).await;
    let (mrn, _) = patient(&app, &staff).await;
    let id = card_in_exam(&app, &staff, &doctor, &mrn).await;

    let r = app
        .post(&format!("/api/cards/{id}/transition"), Some(&doctor), json!({ "event": "StartDoctorExam" }))
        .await;
    assert_eq!((r.status, r.code().as_str()), (StatusCode::CONFLICT, "illegal_transition"));
    let r = app
        .post(&format!("/api/cards/{id}/transition"), Some(&urine), json!({ "event": "LabDone" }))
        .await;
    assert_eq!(r.status, StatusCode::CONFLICT);
    let r = app
        .post(&format!("/api/cards/{id}/transition"), Some(&staff), json!({ "event": "SendToLab" }))
        .await;
    assert_eq!(r.status, StatusCode::FORBIDDEN);

    let r = app
        .post(
            &format!("/api/cards/{id}/entries"),
            Some(&doctor),
            json!({
                "kind": "Observation",
                "archetype_id": "openEHR-EHR-OBSERVATION.vital_signs.v1",
                "fields": {
                    "systolic_bp": { "type": "quantity", "magnitude": 500, "unit": "kPa" },
                    "mood": { "type": "text", "value": "fine" }
                }
            }),
        )
        .await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(r.code(), "constraint_violation");
    let classes: Vec<String> = r.json()["details"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v["class"].as_str().unwrap().to_owned())
        .collect();
    assert_eq!(classes, ["UnitMismatch", "RangeExceeded", "UnknownField"]);

    let r = app
        .post(&format!("/api/cards/{id}/transition"), Some(&doctor), json!({ "event": "SendToLab", "panels": ["Hematology"] }))
        .await;
    assert_eq!(r.status, StatusCode::OK);
    let r = app
        .post(
            &format!("/api/cards/{id}/labs"),
            Some(&urine),
            json!({ "panel": "Hematology", "measurements": { "hemoglobin": { "magnitude": 12, "unit": "g/dL" } } }),
        )
        .await;
    assert_eq!((r.status, r.code().as_str()), (StatusCode::FORBIDDEN, "lab_mismatch"));

    let r = app
        .post(&format!("/api/cards/{id}/items"), Some(&staff), json!({ "type": "service", "service_type": "xray", "cost": 5 }))
        .await;
    assert_eq!((r.status, r.code().as_str()), (StatusCode::UNPROCESSABLE_ENTITY, "validation_failed"));
    let r = app.get("/api/cards/nope", Some(&staff)).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn archetype_endpoints() {
    let app = App::new().await;
    let doctor = app.user("doctor1", "doctor", None).await;
    let src = "archetype openEHR-EHR-EVALUATION.pain_score.v1\nkind EVALUATION\nfield score quantity required range 0..10 unit 1\n";
    let post = |token: String, body: &'static str| {
        Request::post("/api/archetypes")
            .header(header::AUTHORIZATION, format!("Bearer {token}"))
            .header(header::CONTENT_TYPE, "text/plain")
            .body(Body::from(body))
            .unwrap()
    };
    let r = app.raw(post(app.admin.clone(), src)).await;
    assert_eq!(r.status, StatusCode::CREATED);
    assert_eq!(r.json()["outcome"], "added");
    let r = app.raw(post(app.admin.clone(), src)).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json()["outcome"], "unchanged");
    let r = app.raw(post(doctor.clone(), src)).await;
    assert_eq!(r.status, StatusCode::FORBIDDEN);
    let r = app
        .raw(post(app.admin.clone(), "archetype openEHR-EHR-EVALUATION.bad.v1\nkind EVALUATION\nfield x quantity required range 9..1\n"))
        .await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.code(), "parse_error");
    assert_eq!(r.json()["details"]["line"], 3);
    let r = app
        .raw(post(app.admin.clone(), "archetype openEHR-EHR-EVALUATION.pain_score.v1\nkind EVALUATION\n"))
        .await;
    assert_eq!(r.status, StatusCode::CONFLICT);

    let r = app
        .get("/api/archetypes/openEHR-EHR-OBSERVATION.vital_signs.v1", Some(&doctor))
        .await;
    assert_eq!(r.status, StatusCode::OK);
    let def = r.json();
    let names: Vec<&str> = def["fields"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["name"].as_str().unwrap())
        .collect();
    assert_eq!(names, ["systolic_bp", "body_temp", "note"]);
    let r = app.get("/api/archetypes?limit=3", Some(&doctor)).await;
    assert_eq!(r.json()["total"], 10);
    assert_eq!(r.json()["items"].as_array().unwrap().len(), 3);
}

#[tokio::test]
async fn reference_endpoints() {
    let app = App::new().await;
    let staff = app.user("staff1", "staff", None).await;
    let r = app.get("/api/references/sex", Some(&staff)).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json()["items"].as_array().unwrap().len(), 2);
    assert_eq!(app.get("/api/references/planets", Some(&staff)).await.status, StatusCode::NOT_FOUND);

    let r = app
        .post("/api/references", Some(&app.admin), json!({ "category": "insurance", "code": "private", "label": "Private" }))
        .await;
    assert_eq!(r.status, StatusCode::OK);
    let r = app.get("/api/references/insurance", Some(&staff)).await;
    assert_eq!(r.json()["items"].as_array().unwrap().len(), 3);
    let r = app
        .send(Method::DELETE, "/api/references", Some(&app.admin), Some(json!({ "category": "insurance", "code": "private" })))
        .await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json()["active"], false);
    let r = app.get("/api/references/insurance", Some(&staff)).await;
    assert_eq!(r.json()["items"].as_array().unwrap().len(), 2);
    let r = app
        .send(Method::DELETE, "/api/references", Some(&staff), Some(json!({ "category": "insurance", "code": "health_insurance" })))
        .await;
    assert_eq!(r.status, StatusCode::FORBIDDEN);
}

#[tokio::test]
async fn users_and_pagination() {
    let app = App::new().await;
    let staff = app.user("staff1", "staff", None).await;
    for i in 0..5 {
        app.post("/api/patients", Some(&staff), demographics(&format!("P{i}"))).await;
    }
    let r = app.get("/api/patients?offset=1&limit=2", Some(&staff)).await;
    let v = r.json();
    assert_eq!((v["total"].clone(), v["offset"].clone(), v["limit"].clone()), (json!(5), json!(1), json!(2)));
    let mrns: Vec<&str> = v["items"].as_array().unwrap().iter().map(|p| p["mrn"].as_str().unwrap()).collect();
    assert_eq!(mrns, ["MRN00000002", "MRN00000003"]);
    assert_eq!(app.get("/api/patients", Some(&staff)).await.json()["limit"], 50);
    assert_eq!(app.get("/api/patients?limit=x", Some(&staff)).await.status, StatusCode::BAD_REQUEST);

    let r = app
        .post("/api/users", Some(&app.admin), json!({ "username": "MRN00000077", "password": "password1", "role": "staff" }))
        .await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    let r = app
        .post("/api/users", Some(&app.admin), json!({ "username": "staff1", "password": "password1", "role": "staff" }))
        .await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    let r = app
        .post("/api/users", Some(&app.admin), json!({ "username": "lab", "password": "password1", "role": "laborant" }))
        .await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);

    let users = app.get("/api/users?limit=500", Some(&app.admin)).await.json();
    let id = users["items"]
        .as_array()
        .unwrap()
        .iter()
        .find(|u| u["username"] == "staff1")
        .unwrap()["user_id"]
        .as_str()
        .unwrap()
        .to_owned();
    assert!(users["items"][0].get("password_hash").is_none());
    let r = app.send(Method::DELETE, &format!("/api/users/{id}"), Some(&app.admin), None).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(app.get("/api/dashboard", Some(&staff)).await.status, StatusCode::UNAUTHORIZED);
}

#[tokio::test]
async fn repeated_reads_are_byte_identical() {
    let app = App::new().await;
    let staff = app.user("staff1", "staff", None).await;
    let doctor = app.user("doctor1", "doctor", None).await;
    let (mrn, me) = patient(&app, &staff).await;
    let id = card_in_exam(&app, &staff, &doctor, &mrn).await;
    for (uri, token) in [
        (format!("/api/patients/{mrn}"), &me),
        (format!("/api/cards/{id}"), &staff),
        ("/api/dashboard".to_owned(), &doctor),
        ("/api/archetypes".to_owned(), &doctor),
        ("/api/references/religion".to_owned(), &staff),
        ("/api/menu".to_owned(), &me),
        ("/api/patients".to_owned(), &staff),
    ] {
        let a = app.get(&uri, Some(token)).await;
        let b = app.get(&uri, Some(token)).await;
        assert_eq!(a.status, StatusCode::OK, "{uri}");
        assert_eq!(a.bytes, b.bytes, "{uri}");
    }
}

#[tokio::test]
async fn patient_contact_update() {
    let app = App::new().await;
    let staff = app.user("staff1", "staff", None).await;
    let (mrn, me) = patient(&app, &staff).await;
    let r = app
        .send(Method::PATCH, &format!("/api/patients/{mrn}"), Some(&me), Some(json!({ "contact": "0812-555" })))
        .await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json()["demographics"]["contact"], "0812-555");
    let r = app
        .send(Method::PATCH, &format!("/api/patients/{mrn}"), Some(&me), Some(json!({ "religion": "hinduism" })))
        .await;
    assert_eq!(r.status, StatusCode::FORBIDDEN);
    let r = app
        .send(Method::PATCH, &format!("/api/patients/{mrn}"), Some(&staff), Some(json!({ "religion": "unknown" })))
        .await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
}
