use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use chrono::{TimeDelta, TimeZone, Utc};
use decode_core::data::{parse_cohort, CovidTest};
use decode_core::gbdt::{fit_boosted, BoostedEnsemble, Dataset, HyperParams};
use decode_core::logreg::LogisticModel;
use decode_core::{Feature, ModelFile, Term, TrainedModel};
use decode_service::{router, AppState, CaseStore, ManualClock, DEFAULT_TTL, DISCLAIMER};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn logistic_file() -> ModelFile {
    let t = |s: &str| s.parse::<Term>().unwrap();
    let m = LogisticModel::new(
        vec![
            t("days_of_symptoms"),
            t("loss_of_smell_taste"),
            t("contact_with_infected"),
            t("days_of_symptoms AND loss_of_smell_taste"),
            t("contact_with_infected AND loss_of_smell_taste"),
            t("days_of_symptoms AND temp_gt_38"),
        ],
        vec![-0.9299, -0.1720, 1.4948, 1.1546, 0.0112, -0.9736, 0.0763],
        0.3,
    )
    .unwrap();
    ModelFile::new(TrainedModel::Logistic(m), json!({"fixture": "frozen"}))
}

fn boosted_file() -> ModelFile {
    let features = vec![Term::Base(Feature::Cough), Term::Base(Feature::DaysOfSymptoms)];
    let cough: Vec<f64> = (0..40).map(|i| f64::from(i % 2)).collect();
    let days: Vec<f64> = (0..40)
        .map(|i| if i % 5 == 0 { f64::NAN } else { f64::from(i % 9) })
        .collect();
    let labels: Vec<bool> = (0..40).map(|i| i % 2 == 1 && i % 3 != 0).collect();
    let d = Dataset {
        features: features.clone(),
        columns: vec![cough, days],
        labels,
    };
    let params = HyperParams {
        n_rounds: 10,
        max_depth: 2,
        ..HyperParams::default()
    };
    let booster = fit_boosted(&d, &params, 1).unwrap();
    let m = BoostedEnsemble {
        features,
        booster,
        cutoff: 0.5,
        params: Some(params),
    };
    ModelFile::new(TrainedModel::Gbdt(m), json!({"fixture": "tiny"}))
}

struct Harness {
    app: Router,
    clock: Arc<ManualClock>,
    state: Arc<AppState>,
}

fn harness_with(file: ModelFile, store: CaseStore) -> Harness {
    let clock = Arc::new(ManualClock::new(Utc.with_ymd_and_hms(2020, 9, 1, 12, 0, 0).unwrap()));
    let state = Arc::new(AppState::new(file, store, clock.clone(), DEFAULT_TTL));
    Harness {
        app: router(state.clone()),
        clock,
        state,
    }
}

fn harness() -> Harness {
    harness_with(logistic_file(), CaseStore::in_memory())
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(serde_json::to_vec(&b).unwrap())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

fn worked_example() -> Value {
    json!({
        "days_of_symptoms": 5,
        "loss_of_smell_taste": true,
        "contact_with_infected": true,
        "temp_gt_38": false,
        "cough": true,
        "blood_type": "A+",
        "locale": "en",
    })
}

#[tokio::test]
async fn health_reports_model() {
    let h = harness();
    let (status, body) = call(&h.app, Method::GET, "/api/v1/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["model_id"], json!(h.state.model.id));
    assert_eq!(body["schema_version"], json!(1));
    assert!(body["model_id"].as_str().unwrap().starts_with("logistic-"));
}

#[tokio::test]
async fn assess_returns_probability_decision_and_token() {
    let h = harness();
    let (status, body) = call(&h.app, Method::POST, "/api/v1/assess", Some(worked_example())).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let p = body["probability"].as_f64().unwrap();
    assert!((p - 0.4855).abs() < 1e-4);
    assert_eq!(body["decision"], "Positive");
    assert_eq!(body["disclaimer"], DISCLAIMER);
    assert_eq!(body["token"].as_str().unwrap().len(), 32);
    let influences: Vec<f64> = body["contributions"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["influence"].as_f64().unwrap().abs())
        .collect();
    assert_eq!(influences.len(), 6);
    assert!(influences.windows(2).all(|w| w[0] >= w[1]));
}

#[tokio::test]
async fn round_trip_and_expiry_boundaries() {
    let h = harness();
    let (_, created) = call(&h.app, Method::POST, "/api/v1/assess", Some(worked_example())).await;
    let token = created["token"].as_str().unwrap().to_string();
    let case_uri = format!("/api/v1/case/{token}");

    let (status, case) = call(&h.app, Method::GET, &case_uri, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(case["history"].as_array().unwrap().len(), 1);
    assert_eq!(case["history"][0]["submission"]["days_of_symptoms"], json!(5));

    // Drop loss of smell: the probability falls; adding it back raises it.
    let mut without = worked_example();
    without["loss_of_smell_taste"] = json!(false);
    h.clock.advance(TimeDelta::days(2));
    let (status, lower) = call(&h.app, Method::PUT, &case_uri, Some(without)).await;
    assert_eq!(status, StatusCode::OK, "{lower}");
    assert_eq!(lower["token"], json!(token));
    let (_, higher) = call(&h.app, Method::PUT, &case_uri, Some(worked_example())).await;
    assert!(higher["probability"].as_f64().unwrap() > lower["probability"].as_f64().unwrap());

    let (status, _) = call(
        &h.app,
        Method::POST,
        &format!("{case_uri}/pcr"),
        Some(json!({"result": "positive"})),
    )
    .await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    let (_, case) = call(&h.app, Method::GET, &case_uri, None).await;
    assert_eq!(case["history"].as_array().unwrap().len(), 3);
    assert_eq!(case["pcr_result"], "positive");
    assert_eq!(case["expires_at"], created_plus_ttl(&case));

    // Inside the window: 13 days 23:59:59 after creation.
    h.clock.set(Utc.with_ymd_and_hms(2020, 9, 15, 11, 59, 59).unwrap());
    assert_eq!(call(&h.app, Method::GET, &case_uri, None).await.0, StatusCode::OK);
    h.clock.set(Utc.with_ymd_and_hms(2020, 9, 15, 12, 0, 1).unwrap());
    assert_eq!(call(&h.app, Method::GET, &case_uri, None).await.0, StatusCode::GONE);
    assert_eq!(
        call(&h.app, Method::PUT, &case_uri, Some(worked_example())).await.0,
        StatusCode::GONE
    );
    let pcr = call(
        &h.app,
        Method::POST,
        &format!("{case_uri}/pcr"),
        Some(json!({"result": "negative"})),
    )
    .await;
    assert_eq!(pcr.0, StatusCode::GONE);
}

fn created_plus_ttl(case: &Value) -> Value {
    let created: chrono::DateTime<Utc> = serde_json::from_value(case["created_at"].clone()).unwrap();
    serde_json::to_value(created + TimeDelta::days(14)).unwrap()
}

#[tokio::test]
async fn unknown_and_malformed_tokens_are_not_found() {
    let h = harness();
    let random = decode_service::store::new_token().unwrap();
    assert_eq!(
        call(&h.app, Method::GET, &format!("/api/v1/case/{random}"), None)
            .await
            .0,
        StatusCode::NOT_FOUND
    );
    assert_eq!(
        call(&h.app, Method::GET, "/api/v1/case/not-a-token", None).await.0,
        StatusCode::NOT_FOUND
    );
}

#[tokio::test]
async fn symptom_with_zero_days_is_a_field_error() {
    let h = harness();
    let (status, body) = call(
        &h.app,
        Method::POST,
        "/api/v1/assess",
        Some(json!({"cough": true, "days_of_symptoms": 0})),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"], "validation_failed");
    assert_eq!(body["fields"][0]["field"], "days_of_symptoms");
    assert!(h.state.store.is_empty());
}

#[tokio::test]
async fn invalid_update_leaves_history_unchanged() {
    let h = harness();
    let (_, created) = call(&h.app, Method::POST, "/api/v1/assess", Some(worked_example())).await;
    let uri = format!("/api/v1/case/{}", created["token"].as_str().unwrap());
    let (status, _) = call(
        &h.app,
        Method::PUT,
        &uri,
        Some(json!({"cough": true, "days_of_symptoms": 0})),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (_, case) = call(&h.app, Method::GET, &uri, None).await;
    assert_eq!(case["history"].as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn missing_model_fields_give_insufficient_data() {
    let h = harness();
    let (status, body) = call(
        &h.app,
        Method::POST,
        "/api/v1/assess",
        Some(json!({"days_of_symptoms": 3})),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"], "insufficient_data");
    let missing: Vec<&str> = body["missing_fields"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert_eq!(missing, ["temp_gt_38", "loss_of_smell_taste"]);
}

#[tokio::test]
async fn boosted_model_handles_empty_submission() {
    let h = harness_with(boosted_file(), CaseStore::in_memory());
    let (s1, a) = call(&h.app, Method::POST, "/api/v1/assess", Some(json!({}))).await;
    let (s2, b) = call(&h.app, Method::POST, "/api/v1/assess", Some(json!({}))).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert_eq!(a["probability"], b["probability"]);
    assert_eq!(a["decision"], b["decision"]);
    assert_ne!(a["token"], b["token"]);
}

#[tokio::test]
async fn malformed_bodies_are_field_errors() {
    let h = harness();
    let (status, body) = call(
        &h.app,
        Method::POST,
        "/api/v1/assess",
        Some(json!({"cough": "often", "favourite_colour": "red"})),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["fields"].as_array().unwrap().len(), 2);
    let (_, created) = call(&h.app, Method::POST, "/api/v1/assess", Some(worked_example())).await;
    let uri = format!("/api/v1/case/{}/pcr", created["token"].as_str().unwrap());
    let (status, body) = call(&h.app, Method::POST, &uri, Some(json!({"result": "maybe"}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["fields"][0]["field"], "result");
}

#[tokio::test]
async fn repeated_pcr_overwrites_with_audit_and_exports() {
    let h = harness();
    let (_, created) = call(&h.app, Method::POST, "/api/v1/assess", Some(worked_example())).await;
    let uri = format!("/api/v1/case/{}", created["token"].as_str().unwrap());
    assert_eq!(
        call(&h.app, Method::GET, &format!("{uri}/export"), None).await.0,
        StatusCode::CONFLICT
    );
    call(
        &h.app,
        Method::POST,
        &format!("{uri}/pcr"),
        Some(json!({"result": "negative"})),
    )
    .await;
    call(
        &h.app,
        Method::POST,
        &format!("{uri}/pcr"),
        Some(json!({"result": "positive"})),
    )
    .await;
    let (_, case) = call(&h.app, Method::GET, &uri, None).await;
    assert_eq!(case["pcr_result"], "positive");
    assert_eq!(case["pcr_audit"].as_array().unwrap().len(), 2);

    let (status, csv) = call(&h.app, Method::GET, &format!("{uri}/export"), None).await;
    assert_eq!(status, StatusCode::OK);
    let parsed = parse_cohort(csv.as_str().unwrap(), true).unwrap();
    assert_eq!(parsed.cohort.len(), 1);
    let r = &parsed.cohort.records[0];
    assert_eq!(r.covid_test, CovidTest::Positive);
    assert!(r.symptomatic);
    assert_eq!(r.answers.days_of_symptoms, Some(5));
    assert_eq!(h.state.store.export_cohort().records, parsed.cohort.records);
}

#[tokio::test]
async fn assessment_is_a_pure_function_of_the_submission() {
    let h = harness();
    let (_, a) = call(&h.app, Method::POST, "/api/v1/assess", Some(worked_example())).await;
    h.clock.advance(TimeDelta::days(10));
    let (_, b) = call(&h.app, Method::POST, "/api/v1/assess", Some(worked_example())).await;
    let strip = |mut v: Value| {
        v.as_object_mut().unwrap().remove("token");
        v
    };
    assert_eq!(strip(a), strip(b));
}

#[tokio::test]
async fn cases_survive_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let token = {
        let h = harness_with(logistic_file(), CaseStore::open(dir.path()).unwrap());
        let (_, created) = call(&h.app, Method::POST, "/api/v1/assess", Some(worked_example())).await;
        let token = created["token"].as_str().unwrap().to_string();
        let uri = format!("/api/v1/case/{token}");
        call(&h.app, Method::PUT, &uri, Some(worked_example())).await;
        call(
            &h.app,
            Method::POST,
            &format!("{uri}/pcr"),
            Some(json!({"result": "negative"})),
        )
        .await;
        token
    };
    let h = harness_with(logistic_file(), CaseStore::open(dir.path()).unwrap());
    let (status, case) = call(&h.app, Method::GET, &format!("/api/v1/case/{token}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(case["history"].as_array().unwrap().len(), 2);
    assert_eq!(case["pcr_result"], "negative");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_updates_are_all_kept() {
    let h = harness();
    let (_, created) = call(&h.app, Method::POST, "/api/v1/assess", Some(worked_example())).await;
    let uri = format!("/api/v1/case/{}", created["token"].as_str().unwrap());
    let tasks: Vec<_> = (0..32)
        .map(|i| {
            let app = h.app.clone();
            let uri = uri.clone();
            tokio::spawn(async move {
                let mut s = worked_example();
                s["days_of_symptoms"] = json!(1 + i % 10);
                call(&app, Method::PUT, &uri, Some(s)).await.0
            })
        })
        .collect();
    for t in tasks {
        assert_eq!(t.await.unwrap(), StatusCode::OK);
    }
    let (_, case) = call(&h.app, Method::GET, &uri, None).await;
    assert_eq!(case["history"].as_array().unwrap().len(), 33);
}

#[tokio::test]
async fn secondary_model_is_reported_alongside() {
    let clock = Arc::new(ManualClock::new(Utc::now()));
    let state =
        AppState::new(logistic_file(), CaseStore::in_memory(), clock, DEFAULT_TTL).with_secondary(boosted_file());
    let app = router(Arc::new(state));
    let (_, body) = call(&app, Method::POST, "/api/v1/assess", Some(worked_example())).await;
    assert!(body["secondary"]["model_id"].as_str().unwrap().starts_with("gbdt-"));
}
