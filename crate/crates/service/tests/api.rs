use std::collections::BTreeSet;
use std::io::Cursor;
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::http::{header, HeaderMap, Method, Request, StatusCode};
use axum::Router;
use chrono::{Duration, Utc};
use http_body_util::BodyExt;
use image::{ImageBuffer, ImageFormat, Rgb};
use radeval_core::corpus::{CaseRecord, DatasetTag, ReportDocument, ReportSource, Split, Stratum, View};
use radeval_core::text::{sha256_hex, slice};
use radeval_core::workflow::{
    generate_correction_tasks, generate_preference_tasks, RaterProfile, Response, Workflow,
};
use radeval_service::{router, AppState, ImageStore, SessionKeys, Submission, API_SCHEMA};
use serde_json::{json, Value};
use tower::ServiceExt;

const ADMIN: &str = "admin-secret";

struct Harness {
    app: Router,
    state: Arc<AppState>,
    _dir: tempfile::TempDir,
}

fn png_bytes(seed: u8) -> Vec<u8> {
    let img = ImageBuffer::from_fn(16, 12, |x, y| Rgb([seed, x as u8 * 9, y as u8 * 13]));
    let mut out = Vec::new();
    img.write_to(&mut Cursor::new(&mut out), ImageFormat::Jpeg).unwrap();
    out
}

fn cases(n: usize) -> (Vec<CaseRecord>, Vec<ReportDocument>) {
    let cases: Vec<CaseRecord> = (0..n)
        .map(|i| CaseRecord {
            case_id: format!("case{i:03}"),
            dataset_tag: DatasetTag::Us,
            image_ref: format!("{i}.jpg"),
            view: View::Pa,
            stratum: Stratum::Normal,
            split: Split::Test,
        })
        .collect();
    let reports = cases
        .iter()
        .enumerate()
        .flat_map(|(i, c)| {
            [
                ReportDocument::new(
                    format!("{}-h", c.case_id),
                    &c.case_id,
                    format!("Heart size normal. Nodule measures {i} × 4 mm."),
                    "No acute cardiopulmonary process.",
                    ReportSource::HumanOriginal,
                ),
                ReportDocument::new(
                    format!("{}-m", c.case_id),
                    &c.case_id,
                    format!("Moderate cardiomegaly. Angle 3{i}° at the costophrenic sulcus."),
                    "Mild pulmonary édema.",
                    ReportSource::ModelGenerated,
                ),
            ]
        })
        .collect();
    (cases, reports)
}

fn harness(n_cases: usize, n_raters: usize, correction: bool) -> Harness {
    let dir = tempfile::tempdir().unwrap();
    let (cases, reports) = cases(n_cases);
    let mut wf = Workflow::open(&dir.path().join("events.log")).unwrap();
    let batch = if correction {
        generate_correction_tasks(&cases, &reports, 3).unwrap()
    } else {
        generate_preference_tasks(&cases, &reports, 3).unwrap()
    };
    wf.add_batch(&batch).unwrap();
    for r in 0..n_raters {
        wf.register_rater(RaterProfile::new(format!("rater{r}"), "")).unwrap();
    }
    wf.assign_pending(2, 5).unwrap();
    let images = ImageStore::open(&dir.path().join("images")).unwrap();
    for (i, c) in cases.iter().enumerate() {
        images.ingest_bytes(&c.case_id, &png_bytes(i as u8)).unwrap();
    }
    let keys = SessionKeys::new("test-secret", Duration::hours(1));
    let state = Arc::new(AppState::new(wf, images, keys, Some(ADMIN)));
    Harness { app: router(state.clone()), state, _dir: dir }
}

async fn call(app: &Router, method: Method, uri: &str, token: Option<&str>, body: Option<Value>) -> (StatusCode, HeaderMap, Bytes) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header(header::AUTHORIZATION, format!("Bearer {t}"));
    }
    let req = match body {
        Some(v) => req.header(header::CONTENT_TYPE, "application/json").body(Body::from(v.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let (parts, body) = resp.into_parts();
    (parts.status, parts.headers, body.collect().await.unwrap().to_bytes())
}

fn json_of(bytes: &Bytes) -> Value {
    serde_json::from_slice(bytes).unwrap()
}

fn validate(def: &str, instance: &Value) {
    let mut schema: Value = serde_json::from_str(API_SCHEMA).unwrap();
    schema["$ref"] = json!(format!("#/$defs/{def}"));
    let validator = jsonschema::validator_for(&schema).unwrap();
    let problems: Vec<String> = validator.iter_errors(instance).map(|e| e.to_string()).collect();
    assert!(problems.is_empty(), "{def}: {problems:?}\n{instance}");
}

/// Fails if any key or string value names a report source.
fn assert_blind(v: &Value) {
    match v {
        Value::Object(m) => {
            for (k, v) in m {
                assert!(!matches!(k.as_str(), "source" | "blinding_seed" | "origin_report_id"), "leaked key {k}");
                assert_blind(v);
            }
        }
        Value::Array(a) => a.iter().for_each(assert_blind),
        Value::String(s) => assert!(ReportSource::ALL.iter().all(|src| !s.contains(src.as_str())), "leaked {s}"),
        _ => {}
    }
}

async fn login(h: &Harness, rater: &str) -> String {
    let code = h.state.keys.access_code(rater);
    let (status, _, body) =
        call(&h.app, Method::POST, "/v1/session", None, Some(json!({"rater_id": rater, "access_code": code}))).await;
    assert_eq!(status, StatusCode::OK);
    let v = json_of(&body);
    validate("session_token", &v);
    v["token"].as_str().unwrap().to_string()
}

async fn next(h: &Harness, token: &str) -> Value {
    let (status, _, body) = call(&h.app, Method::GET, "/v1/tasks/next", Some(token), None).await;
    assert_eq!(status, StatusCode::OK);
    let v = json_of(&body);
    validate("next_task", &v);
    assert_blind(&v);
    v
}

fn assert_error(status: StatusCode, body: &Bytes, expected: StatusCode, code: &str) -> Value {
    assert_eq!(status, expected, "{}", String::from_utf8_lossy(body));
    let v = json_of(body);
    validate("error", &v);
    assert_eq!(v["code"], code);
    v
}

#[tokio::test]
async fn sessions_and_expiry() {
    let h = harness(2, 2, false);
    let (s, _, b) = call(&h.app, Method::POST, "/v1/session", None, Some(json!({"rater_id": "rater0", "access_code": "00"}))).await;
    let v = assert_error(s, &b, StatusCode::UNAUTHORIZED, "unauthorized");
    assert_eq!(v["field"], "access_code");
    let stranger_code = h.state.keys.access_code("stranger");
    let (s, _, b) =
        call(&h.app, Method::POST, "/v1/session", None, Some(json!({"rater_id": "stranger", "access_code": stranger_code}))).await;
    assert_error(s, &b, StatusCode::UNAUTHORIZED, "unauthorized");
    let (s, _, b) = call(&h.app, Method::POST, "/v1/session", None, Some(json!({"rater_id": 3}))).await;
    assert_error(s, &b, StatusCode::BAD_REQUEST, "invalid_json");

    let expired = h.state.keys.issue_until("rater0", Utc::now() - Duration::seconds(1)).token;
    let endpoints = [
        (Method::GET, "/v1/tasks/next".to_string(), None),
        (Method::POST, "/v1/responses".to_string(), Some(json!({}))),
        (Method::GET, "/v1/cases/case000/image".to_string(), None),
    ];
    for (method, uri, body) in endpoints {
        let (s, _, b) = call(&h.app, method.clone(), &uri, Some(&expired), body.clone()).await;
        assert_error(s, &b, StatusCode::UNAUTHORIZED, "token_expired");
        let (s, _, b) = call(&h.app, method, &uri, None, body).await;
        assert_error(s, &b, StatusCode::UNAUTHORIZED, "unauthorized");
    }
}

#[tokio::test]
async fn preference_flow_until_done() {
    let h = harness(3, 2, false);
    for rater in ["rater0", "rater1"] {
        let token = login(&h, rater).await;
        let mut seen = BTreeSet::new();
        loop {
            let v = next(&h, &token).await;
            if v["status"] == "done" {
                break;
            }
            let task_id = v["task"]["task_id"].as_str().unwrap().to_string();
            assert!(seen.insert(task_id.clone()), "task served twice after answering");
            let submission = json!({"kind": "preference", "task_id": task_id, "choice": "B", "justification": "clearer"});
            validate("submission", &submission);
            let (s, _, b) = call(&h.app, Method::POST, "/v1/responses", Some(&token), Some(submission.clone())).await;
            assert_eq!(s, StatusCode::OK);
            let ack = json_of(&b);
            validate("submit_ack", &ack);
            let (s, _, b) = call(&h.app, Method::POST, "/v1/responses", Some(&token), Some(submission)).await;
            assert_eq!(s, StatusCode::OK);
            assert_eq!(json_of(&b), ack, "retry must be acknowledged with the same sequence number");
            let conflicting = json!({"kind": "preference", "task_id": task_id, "choice": "A", "justification": "clearer"});
            let (s, _, b) = call(&h.app, Method::POST, "/v1/responses", Some(&token), Some(conflicting)).await;
            assert_error(s, &b, StatusCode::CONFLICT, "conflict");
        }
        assert_eq!(seen.len(), 3);
    }
    let (s, _, b) = call(&h.app, Method::GET, "/v1/admin/progress", Some(ADMIN), None).await;
    assert_eq!(s, StatusCode::OK);
    let p = json_of(&b);
    validate("progress", &p);
    assert_blind(&p);
    assert_eq!(p["tasks"], json!({"tasks": 3, "complete": 3}));
    assert_eq!(p["responses"], 6);
}

#[tokio::test]
async fn correction_validation_errors() {
    let h = harness(1, 2, true);
    let token = login(&h, "rater0").await;
    let v = next(&h, &token).await;
    let task = &v["task"];
    let task_id = task["task_id"].as_str().unwrap();
    let hash = task["report"]["text_hash"].as_str().unwrap();
    let edit = |start: usize, end: usize| {
        json!({"span": {"start": start, "end": end}, "reason": "INCORRECT_SEVERITY", "clinically_significant": true, "replacement": "Small"})
    };

    let out_of_bounds = json!({"kind": "correction", "task_id": task_id, "image_quality_ok": true, "edits": [edit(0, 999)], "text_hash": hash});
    let (s, _, b) = call(&h.app, Method::POST, "/v1/responses", Some(&token), Some(out_of_bounds)).await;
    let e = assert_error(s, &b, StatusCode::UNPROCESSABLE_ENTITY, "validation");
    assert_eq!(e["field"], "edits[0].span");

    let wrong_kind = json!({"kind": "preference", "task_id": task_id, "choice": "A", "justification": "x"});
    let (s, _, b) = call(&h.app, Method::POST, "/v1/responses", Some(&token), Some(wrong_kind)).await;
    assert_error(s, &b, StatusCode::UNPROCESSABLE_ENTITY, "validation");

    let unknown = json!({"kind": "correction", "task_id": "t-nope", "image_quality_ok": true, "text_hash": hash});
    let (s, _, b) = call(&h.app, Method::POST, "/v1/responses", Some(&token), Some(unknown)).await;
    assert_error(s, &b, StatusCode::NOT_FOUND, "unknown_task");

    let extra = json!({"kind": "correction", "task_id": task_id, "image_quality_ok": true, "text_hash": hash, "source": "x"});
    let (s, _, b) = call(&h.app, Method::POST, "/v1/responses", Some(&token), Some(extra)).await;
    assert_error(s, &b, StatusCode::BAD_REQUEST, "invalid_json");

    let valid = json!({"kind": "correction", "task_id": task_id, "image_quality_ok": true, "edits": [edit(0, 5), edit(9, 13)], "text_hash": hash});
    validate("submission", &valid);
    let (s, _, b) = call(&h.app, Method::POST, "/v1/responses", Some(&token), Some(valid)).await;
    assert_eq!(s, StatusCode::OK, "{}", String::from_utf8_lossy(&b));

    let (outsider_status, _, b) = {
        let h2 = harness(1, 3, true);
        let wf = h2.state.workflow.read();
        let (task_id, assigned) = wf.state().assignments.iter().next().unwrap();
        let outsider = ["rater0", "rater1", "rater2"].into_iter().find(|r| !assigned.iter().any(|a| a == r)).unwrap().to_string();
        let task_id = task_id.clone();
        drop(wf);
        let token = login(&h2, &outsider).await;
        let body = json!({"kind": "correction", "task_id": task_id, "image_quality_ok": false, "text_hash": hash});
        call(&h2.app, Method::POST, "/v1/responses", Some(&token), Some(body)).await
    };
    assert_error(outsider_status, &b, StatusCode::FORBIDDEN, "forbidden");
}

#[tokio::test]
async fn images_are_content_addressed_and_authorized() {
    let h = harness(1, 3, false);
    let (assigned, outsider) = {
        let wf = h.state.workflow.read();
        let raters = wf.state().assignments.values().next().unwrap().clone();
        let outsider = ["rater0", "rater1", "rater2"].into_iter().find(|r| !raters.iter().any(|a| a == r)).unwrap();
        (raters[0].clone(), outsider.to_string())
    };
    let token = login(&h, &assigned).await;
    let (s, headers, bytes) = call(&h.app, Method::GET, "/v1/cases/case000/image", Some(&token), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(headers[header::CONTENT_TYPE], "image/png");
    let digest = h.state.images.digest("case000").unwrap();
    assert_eq!(sha256_hex(&bytes), digest);
    let etag = headers[header::ETAG].to_str().unwrap().to_string();
    assert_eq!(etag, format!("\"{digest}\""));
    assert_eq!(image::guess_format(&bytes).unwrap(), ImageFormat::Png);

    let req = Request::get("/v1/cases/case000/image")
        .header(header::AUTHORIZATION, format!("Bearer {token}"))
        .header(header::IF_NONE_MATCH, &etag)
        .body(Body::empty())
        .unwrap();
    assert_eq!(h.app.clone().oneshot(req).await.unwrap().status(), StatusCode::NOT_MODIFIED);

    let other = login(&h, &outsider).await;
    let (s, _, b) = call(&h.app, Method::GET, "/v1/cases/case000/image", Some(&other), None).await;
    assert_error(s, &b, StatusCode::FORBIDDEN, "forbidden");
}

#[tokio::test]
async fn admin_gate() {
    let h = harness(1, 2, false);
    let rater = login(&h, "rater0").await;
    for token in [None, Some("wrong"), Some(rater.as_str())] {
        let (s, _, b) = call(&h.app, Method::GET, "/v1/admin/progress", token, None).await;
        assert_error(s, &b, StatusCode::UNAUTHORIZED, "unauthorized");
    }
}

#[test]
fn recorded_fixtures_match_the_contract() {
    let fixtures: Vec<Value> = serde_json::from_str(include_str!("fixtures/submissions.json")).unwrap();
    for f in &fixtures {
        validate("submission", f);
        let parsed: Submission = serde_json::from_value(f.clone()).unwrap();
        assert_eq!(serde_json::to_value(&parsed).unwrap(), *f);
    }
    let schema: Value = serde_json::from_str(API_SCHEMA).unwrap();
    let reasons: Vec<&str> =
        schema["$defs"]["reason"]["enum"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    let wire: Vec<String> = radeval_core::workflow::ErrorReason::ALL
        .iter()
        .map(|r| serde_json::to_value(r).unwrap().as_str().unwrap().to_string())
        .collect();
    assert_eq!(reasons, wire);
    assert_eq!(reasons, ["INCORRECT_FINDING", "INCORRECT_LOCATION", "INCORRECT_SEVERITY"]);
}

#[tokio::test]
async fn highlighted_spans_round_trip() {
    let h = harness(50, 2, true);
    let token = login(&h, "rater0").await;
    let mut checked = 0;
    let mut cases = BTreeSet::new();
    loop {
        let v = next(&h, &token).await;
        if v["status"] == "done" {
            break;
        }
        let task = &v["task"];
        cases.insert(task["case_id"].as_str().unwrap().to_string());
        let text = task["report"]["text"].as_str().unwrap();
        // What a client does: pick a word and count Unicode scalars up to it.
        let words: Vec<(usize, &str)> = text
            .split(|c: char| c.is_whitespace())
            .scan(0usize, |pos, w| {
                let start = *pos;
                *pos += w.chars().count() + 1;
                Some((start, w))
            })
            .filter(|(_, w)| !w.is_ascii() || w.len() > 6)
            .collect();
        let (start, word) = words[checked % words.len()];
        let span = json!({"start": start, "end": start + word.chars().count()});
        let body = json!({
            "kind": "correction",
            "task_id": task["task_id"],
            "image_quality_ok": true,
            "edits": [{"span": span, "reason": "INCORRECT_FINDING", "clinically_significant": false, "replacement": "x"}],
            "text_hash": task["report"]["text_hash"],
        });
        let (s, _, b) = call(&h.app, Method::POST, "/v1/responses", Some(&token), Some(body)).await;
        assert_eq!(s, StatusCode::OK, "{}", String::from_utf8_lossy(&b));

        let wf = h.state.workflow.read();
        let task_id = task["task_id"].as_str().unwrap();
        let Response::Correction(c) = &wf.state().responses[task_id]["rater0"].response else { panic!() };
        let report_id = task["report"]["report_id"].as_str().unwrap();
        let stored = wf.state().report(report_id).unwrap().text();
        assert_eq!(slice(&stored, c.edits[0].span), Some(word));
        checked += 1;
    }
    assert_eq!(cases.len(), 50);
    assert_eq!(checked, 100);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_polling_never_serves_unassigned_tasks() {
    let h = Arc::new(harness(40, 2, false));
    let plan = h.state.workflow.read().state().queues.clone();
    let mut handles = Vec::new();
    for rater in ["rater0", "rater1"] {
        let h = h.clone();
        let allowed: BTreeSet<String> = plan[rater].iter().cloned().collect();
        handles.push(tokio::spawn(async move {
            let token = login(&h, rater).await;
            let mut served = 0;
            for poll in 0..1000 {
                let (s, _, b) = call(&h.app, Method::GET, "/v1/tasks/next", Some(&token), None).await;
                assert_eq!(s, StatusCode::OK);
                let v = json_of(&b);
                if v["status"] == "done" {
                    continue;
                }
                served += 1;
                let task_id = v["task"]["task_id"].as_str().unwrap().to_string();
                assert!(allowed.contains(&task_id), "{rater} served unassigned task {task_id}");
                assert_blind(&v);
                if poll % 3 == 0 {
                    let body = json!({"kind": "preference", "task_id": task_id, "choice": "EQUIVALENT", "justification": "same"});
                    let (s, _, _) = call(&h.app, Method::POST, "/v1/responses", Some(&token), Some(body)).await;
                    assert_eq!(s, StatusCode::OK);
                }
            }
            served
        }));
    }
    for handle in handles {
        assert!(handle.await.unwrap() > 0);
    }
    let wf = h.state.workflow.read();
    for (task_id, by_rater) in &wf.state().responses {
        for rater in by_rater.keys() {
            assert!(plan[rater].contains(task_id));
        }
    }
}
