use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use synonymix_core::fixture::four_persona_fixture;
use synonymix_core::unify::{merge, ExactCanonical};
use synonymix_explorer::{router, ExplorerConfig, Snapshot, PAGE_SIZE};

fn app() -> Router {
    let u = merge(&four_persona_fixture(), &ExactCanonical).unwrap();
    router(Arc::new(Snapshot::new(u)), &ExplorerConfig::default()).unwrap()
}

async fn call(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    call(app, Request::get(uri).body(Body::empty()).unwrap()).await
}

async fn post(app: &Router, uri: &str, body: Value) -> (StatusCode, Value) {
    let req = Request::post(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    call(app, req).await
}

fn merged_theme(graph: &Value) -> String {
    graph["nodes"]
        .as_array()
        .unwrap()
        .iter()
        .find(|n| n["label"] == "Economic insecurity driving academic achievement")
        .unwrap()["id"]
        .as_str()
        .unwrap()
        .to_string()
}

#[tokio::test]
async fn stats_shape() {
    let (status, s) = get(&app(), "/stats").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!((s["total"].clone(), s["s"].clone(), s["f"].clone(), s["i"].clone()), (json!(226), json!(76), json!(83), json!(67)));
    assert_eq!(s["merge_rates"]["s"], json!(0.105));
    assert_eq!(s["merge_rates"]["f"], json!(0.0));
    assert_eq!(s["merge_rates"]["i"], json!(0.179));
    assert_eq!(s["dp"]["applied"], json!(false));
    assert!(s["summary"].as_str().unwrap().contains("S merge rate: 10.5%"));
}

#[tokio::test]
async fn layer_and_source_filters() {
    let app = app();
    let (_, all) = get(&app, "/unigraph").await;
    assert_eq!(all["nodes"].as_array().unwrap().len(), 226);
    let (_, s) = get(&app, "/unigraph?layer=S").await;
    assert_eq!(s["nodes"].as_array().unwrap().len(), 76);
    assert!(s["edges"].as_array().unwrap().is_empty());
    let (_, p) = get(&app, "/unigraph?source=persona-01").await;
    assert!(p["nodes"].as_array().unwrap().iter().all(|n| n["provenance"].as_array().unwrap().contains(&json!("persona-01"))));
    assert_eq!(get(&app, "/unigraph?layer=X").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(get(&app, "/unigraph?source=nobody").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn merged_node_neighborhood_resolves() {
    let app = app();
    let (_, graph) = get(&app, "/unigraph?layer=I").await;
    let id = merged_theme(&graph);
    let (status, n) = get(&app, &format!("/node/{id}/neighborhood")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(n["center"]["provenance"].as_array().unwrap().len(), 3);
    assert_eq!(n["center"]["merged"], json!(true));
    let neighbors = n["neighbors"].as_array().unwrap();
    assert_eq!(neighbors.len() as u64, n["connection_count"].as_u64().unwrap());
    for nb in neighbors {
        let (s, _) = get(&app, &format!("/node/{}", nb["node"]["id"].as_str().unwrap())).await;
        assert_eq!(s, StatusCode::OK);
    }
}

#[tokio::test]
async fn pagination_covers_every_connection() {
    // A hub with 120 spokes spans three pages.
    use synonymix_core::graph::{Edge, EdgeKind, Node, NodeKind, PersonaGraph};
    let mut g = PersonaGraph::new("p");
    g.add_node(Node::new("hub", NodeKind::Interpretive, "hub theme"));
    for i in 0..120 {
        let f = format!("f{i:03}");
        g.add_node(Node::new(f.as_str(), NodeKind::Factual, format!("event {i}")));
        g.add_edge(Edge::new("hub", f.as_str(), EdgeKind::IF, "guides"));
    }
    let u = merge(&[g], &ExactCanonical).unwrap();
    let hub = u.nodes.values().find(|n| n.kind == NodeKind::Interpretive).unwrap().id.clone();
    let app = router(Arc::new(Snapshot::new(u)), &ExplorerConfig::default()).unwrap();
    let mut seen = std::collections::BTreeSet::new();
    for page in 0..3 {
        let (status, n) = get(&app, &format!("/node/{hub}/neighborhood?page={page}")).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(n["pages"], json!(3));
        assert!(n["neighbors"].as_array().unwrap().len() <= PAGE_SIZE);
        for nb in n["neighbors"].as_array().unwrap() {
            assert!(seen.insert(nb["node"]["id"].as_str().unwrap().to_string()));
        }
    }
    assert_eq!(seen.len(), 120);
    assert_eq!(get(&app, &format!("/node/{hub}/neighborhood?page=3")).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn unknown_node_is_404_with_body() {
    let (status, body) = get(&app(), "/node/nope/neighborhood").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(body["error"].as_str().unwrap().contains("nope"));
}

#[tokio::test]
async fn sources_list_unique_counts() {
    let (_, s) = get(&app(), "/sources").await;
    let rows = s["sources"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    let unique: u64 = rows.iter().map(|r| r["unique_nodes"].as_u64().unwrap()).sum();
    assert_eq!(unique + s["merged_nodes"].as_u64().unwrap(), 226);
}

#[tokio::test]
async fn sample_is_deterministic() {
    let app = app();
    let (_, graph) = get(&app, "/unigraph?layer=I").await;
    let anchor = merged_theme(&graph);
    let body = json!({"anchor": anchor, "lambda": 0.0, "rng_seed": 42, "node_budget": 15});
    let (status, a) = post(&app, "/sample", body.clone()).await;
    assert_eq!(status, StatusCode::OK);
    let (_, b) = post(&app, "/sample", body).await;
    assert_eq!(a, b);
    assert!(a["nodes"].as_array().unwrap().len() <= 15);
    assert!(a["msc"]["msc"].as_f64().unwrap() <= 1.0);
    assert!(a["narrative"].as_str().unwrap().starts_with("Theme: Economic insecurity"));
}

#[tokio::test]
async fn sample_errors() {
    let app = app();
    let (status, _) = post(&app, "/sample", json!({"anchor": "missing"})).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (_, graph) = get(&app, "/unigraph?layer=F").await;
    let fact = graph["nodes"][0]["id"].clone();
    let (status, body) = post(&app, "/sample", json!({"anchor": fact})).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(body["error"].as_str().unwrap().contains("interpretive"));
}

#[tokio::test]
async fn cors_header_for_configured_origin() {
    let u = merge(&four_persona_fixture(), &ExactCanonical).unwrap();
    let config = ExplorerConfig { cors_origins: vec!["http://localhost:5173".into()] };
    let app = router(Arc::new(Snapshot::new(u)), &config).unwrap();
    let req = Request::get("/stats").header("origin", "http://localhost:5173").body(Body::empty()).unwrap();
    let resp = app.oneshot(req).await.unwrap();
    assert_eq!(resp.headers()["access-control-allow-origin"], "http://localhost:5173");
}
