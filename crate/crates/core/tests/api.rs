mod common;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use common::{config, dataset, PAYER};
use dpledger_core::service::api::{router, AccountView, ErrorBody};
use dpledger_core::{QueryResponse, QueryService, ReuseKind};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn app(dir: &std::path::Path) -> axum::Router {
    router(Arc::new(
        QueryService::open_with_dataset(&config(dir, 2.0), dataset(), None).unwrap(),
    ))
}

async fn call(app: &axum::Router, req: Request<Body>) -> (StatusCode, Value) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

fn post(body: Value) -> Request<Body> {
    Request::post("/api/queries")
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

fn query(epsilon: f64) -> Value {
    json!({
        "account_id": PAYER,
        "descriptor": {"kind": "COUNT", "predicate": {"column": "age", "op": ">", "value": 30.0}},
        "epsilon": epsilon,
        "delta": 1e-5,
    })
}

#[tokio::test]
async fn query_flow_over_http() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());

    let (status, budget) = call(&app, get("/api/budget")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(budget["remaining_epsilon"], 2.0);

    let (status, body) = call(&app, post(query(1.0))).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let first: QueryResponse = serde_json::from_value(body).unwrap();
    assert_eq!(first.reuse_kind, ReuseKind::Fresh);
    assert_eq!(first.query_type, "COUNT(*) WHERE age > 30");

    let (_, body) = call(&app, post(query(1.0))).await;
    let second: QueryResponse = serde_json::from_value(body).unwrap();
    assert_eq!(second.reuse_kind, ReuseKind::ExactMatch);
    assert_eq!(second.noisy_response, first.noisy_response);

    let (status, body) = call(&app, get(&format!("/api/history?key={}", first.query_key))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body.as_array().unwrap().len(), 2);
    let (_, all) = call(&app, get("/api/history")).await;
    assert_eq!(all.as_array().unwrap().len(), 2);

    let (status, body) = call(&app, get(&format!("/api/accounts/{PAYER}"))).await;
    assert_eq!(status, StatusCode::OK);
    let acct: AccountView = serde_json::from_value(body).unwrap();
    assert!(
        (acct.balance - (100.0 - first.blockchain_price - second.blockchain_price)).abs() < 1e-12
    );

    let (_, accounts) = call(&app, get("/api/accounts")).await;
    assert_eq!(accounts.as_array().unwrap().len(), 2);

    let (status, v) = call(&app, get("/api/ledger/verify")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v, json!({"status": "Ok", "records": 2}));

    let (_, meta) = call(&app, get("/api/meta")).await;
    assert_eq!(meta["rows"], 5);
    assert_eq!(meta["query_kinds"], json!(["COUNT", "SUM", "MEAN"]));
    assert_eq!(meta["fees"]["base_fee"], 0.001);
}

#[tokio::test]
async fn errors_carry_code_and_status() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());

    let cases = [
        (post(json!({"nonsense": true})), StatusCode::BAD_REQUEST),
        (post(query(-1.0)), StatusCode::BAD_REQUEST),
        (
            post(
                json!({"account_id": "ab".repeat(20), "descriptor": {"kind": "COUNT"}, "epsilon": 1.0, "delta": 1e-5}),
            ),
            StatusCode::NOT_FOUND,
        ),
        (
            post(
                json!({"account_id": PAYER, "descriptor": {"kind": "SUM", "column": "height"}, "epsilon": 1.0, "delta": 1e-5}),
            ),
            StatusCode::BAD_REQUEST,
        ),
        (get("/api/accounts/not-hex"), StatusCode::BAD_REQUEST),
        (
            get(&format!("/api/accounts/{}", "cd".repeat(20))),
            StatusCode::NOT_FOUND,
        ),
        (get("/api/history?key=zz"), StatusCode::BAD_REQUEST),
    ];
    for (req, expected) in cases {
        let uri = req.uri().clone();
        let (status, body) = call(&app, req).await;
        assert_eq!(status, expected, "{uri}: {body}");
        let err: ErrorBody = serde_json::from_value(body).unwrap();
        assert!(!err.code.is_empty() && !err.message.is_empty());
    }

    assert_eq!(call(&app, post(query(1.5))).await.0, StatusCode::OK);
    let (status, body) = call(&app, post(json!({"account_id": PAYER, "descriptor": {"kind": "COUNT"}, "epsilon": 1.0, "delta": 1e-5}))).await;
    assert_eq!(status, StatusCode::TOO_MANY_REQUESTS);
    assert_eq!(body["code"], "budget_exceeded");
}
