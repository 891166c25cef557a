use std::sync::Arc;

use ancestral_core::color_seq::balanced_sequence;
use ancestral_core::csa::color_splitting;
use ancestral_core::merkle::MerkleTree;
use ancestral_core::pir::{xor2_reconstruct, Indicator, PirAnswer};
use ancestral_core::wire;
use ancestral_service::{router, serve_tcp_replica, spawn_tcp_replicas, AppState, Deployment};
use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use serde_json::{json, Value};
use tower::ServiceExt;

fn deployment(h: u32) -> (MerkleTree, Deployment) {
    let items: Vec<Vec<u8>> = (0..1u32 << h)
        .map(|i| format!("item {i}").into_bytes())
        .collect();
    let tree = MerkleTree::build(&items).unwrap();
    let coloring = color_splitting(&balanced_sequence(h).unwrap()).unwrap();
    let dep = Deployment::new(&tree, &coloring).unwrap();
    (tree, dep)
}

async fn call(
    state: &AppState,
    method: &str,
    uri: &str,
    body: Option<Value>,
) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json");
    let req = req
        .body(body.map_or(Body::empty(), |b| Body::from(b.to_string())))
        .unwrap();
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (
        status,
        serde_json::from_slice(&bytes).unwrap_or(Value::Null),
    )
}

#[tokio::test]
async fn compute_endpoints() {
    let st = AppState::default();
    let (s, v) = call(&st, "GET", "/health", None).await;
    assert_eq!(
        (s, v["status"].as_str(), v["deployment"].as_bool()),
        (StatusCode::OK, Some("ok"), Some(false))
    );

    let (_, v) = call(
        &st,
        "POST",
        "/v1/feasible",
        Some(json!({"sequence": "4,5,5"})),
    )
    .await;
    assert_eq!(v, json!({"feasible": true}));
    let (_, v) = call(
        &st,
        "POST",
        "/v1/feasible",
        Some(json!({"sequence": "2,3,9"})),
    )
    .await;
    assert_eq!(v["feasible"], json!(false));
    assert!(v["violation"].as_str().unwrap().contains("prefix 2"));

    let (_, v) = call(&st, "GET", "/v1/balanced/5", None).await;
    let counts: Vec<u64> = v
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["count"].as_u64().unwrap())
        .collect();
    assert_eq!(counts, vec![12, 12, 12, 13, 13]);

    let (_, v) = call(&st, "POST", "/v1/split", Some(json!({"sequence": "4,5,5"}))).await;
    assert_eq!(
        v["left"],
        json!([{"color": 3, "count": 2}, {"color": 2, "count": 4}])
    );
    assert_eq!(
        (
            v["left_child_color"].as_u64(),
            v["right_child_color"].as_u64()
        ),
        (Some(1), Some(2))
    );

    let (_, v) = call(&st, "POST", "/v1/color", Some(json!({"h": 3}))).await;
    assert_eq!(v["classes"]["1"], json!([2, 6, 14, 15]));

    let (_, v) = call(
        &st,
        "POST",
        "/v1/subindex",
        Some(json!({"h": 3, "leaf": 11})),
    )
    .await;
    assert_eq!(v["sub_indices"], json!([1, 2, 4]));

    let (_, v) = call(&st, "GET", "/v1/cost/sealpir_pbc_model/20", None).await;
    assert_eq!(
        v,
        json!({"servers": 30, "largest_db": 209715, "total_storage": 6291450})
    );
}

#[tokio::test]
async fn compute_errors() {
    let st = AppState::default();
    let (s, v) = call(&st, "POST", "/v1/split", Some(json!({"sequence": "1,5"}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(v["error"].is_string());
    assert_eq!(
        call(&st, "GET", "/v1/cost/nope/3", None).await.0,
        StatusCode::NOT_FOUND
    );
    assert_eq!(
        call(&st, "GET", "/v1/balanced/0", None).await.0,
        StatusCode::UNPROCESSABLE_ENTITY
    );
    assert_eq!(
        call(&st, "POST", "/v1/color", Some(json!({"h": 21})))
            .await
            .0,
        StatusCode::UNPROCESSABLE_ENTITY
    );
    assert_eq!(
        call(&st, "GET", "/v1/pir/meta", None).await.0,
        StatusCode::SERVICE_UNAVAILABLE
    );
}

#[tokio::test]
async fn pir_over_http() {
    let (tree, dep) = deployment(3);
    let st = AppState::with_deployment(dep);
    let (_, meta) = call(&st, "GET", "/v1/pir/meta", None).await;
    assert_eq!(meta["root"], json!(tree.root().to_hex()));
    assert_eq!(meta["sizes"], json!({"1": 4, "2": 5, "3": 5}));

    // green class is [8,9,10,11,3]; position 4 holds swapped node 11 = original 10
    let i = Indicator::from_positions(5, &[1, 3]).unwrap();
    let mut j = i.clone();
    j.flip(4);
    let (_, a) = call(
        &st,
        "POST",
        "/v1/pir/2/xor",
        Some(serde_json::to_value(&i).unwrap()),
    )
    .await;
    let (_, b) = call(
        &st,
        "POST",
        "/v1/pir/2/xor",
        Some(serde_json::to_value(&j).unwrap()),
    )
    .await;
    let a: PirAnswer = serde_json::from_value(a).unwrap();
    let b: PirAnswer = serde_json::from_value(b).unwrap();
    assert_eq!(xor2_reconstruct(&a, &b), tree.node(10));

    let (_, p) = call(&st, "POST", "/v1/pir/1/plain", Some(json!({"target": 1}))).await;
    assert_eq!(p["digest"], json!(tree.node(3).to_hex()));
    assert_eq!(p["touched"], json!(4));

    assert_eq!(
        call(&st, "POST", "/v1/pir/9/plain", Some(json!({"target": 1})))
            .await
            .0,
        StatusCode::NOT_FOUND
    );
    let wrong = Indicator::empty(4);
    assert_eq!(
        call(
            &st,
            "POST",
            "/v1/pir/2/xor",
            Some(serde_json::to_value(&wrong).unwrap())
        )
        .await
        .0,
        StatusCode::UNPROCESSABLE_ENTITY
    );
}

#[tokio::test]
async fn pir_over_tcp() {
    let (tree, dep) = deployment(3);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let db = Arc::new(
        dep.database(ancestral_core::color_seq::ColorId(3))
            .unwrap()
            .as_ref()
            .clone(),
    );
    tokio::spawn(serve_tcp_replica(listener, db));

    let got = tokio::task::spawn_blocking(move || {
        let mut s = std::net::TcpStream::connect(addr).unwrap();
        // blue class [4,5,12,13,7]: position 2 is swapped node 5 = original 4
        wire::write_request(&mut s, &ancestral_core::pir::ServerRequest::Plain(2)).unwrap();
        let first = wire::read_answer(&mut s).unwrap();
        wire::write_request(
            &mut s,
            &ancestral_core::pir::ServerRequest::Xor(Indicator::full(5)),
        )
        .unwrap();
        let second = wire::read_answer(&mut s).unwrap();
        // out of range: the server hangs up
        wire::write_request(&mut s, &ancestral_core::pir::ServerRequest::Plain(6)).unwrap();
        let third = wire::read_answer(&mut s);
        (first, second, third.is_err())
    })
    .await
    .unwrap();
    assert_eq!(got.0, tree.node(4));
    let all = [4u64, 5, 12, 13, 7]
        .iter()
        .fold(ancestral_core::merkle::Digest::ZERO, |acc, &v| {
            acc ^ tree.node(v ^ 1)
        });
    assert_eq!(got.1, all);
    assert!(got.2);
}

#[tokio::test]
async fn tcp_replicas_use_the_port_layout() {
    let (_, dep) = deployment(2);
    let probe = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let base = probe.local_addr().unwrap().port();
    drop(probe);
    let Ok(bound) = spawn_tcp_replicas(&dep, "127.0.0.1", base, 2).await else {
        return; // ports taken by another process
    };
    let ports: Vec<u16> = bound.iter().map(|(_, a, _)| a.port()).collect();
    assert_eq!(ports, vec![base + 2, base + 3]);
}
