use std::path::Path;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use pprviz::server::{bind, router, AppState, ResponseCache};
use pprviz_core::generators;
use pprviz_core::pipeline::{preprocess, PreprocessConfig, VisualizeOptions, Workspace};
use pprviz_core::ppr::Engine;
use tower::ServiceExt;

fn workspace(tmp: &Path) -> Workspace {
    let input = tmp.join("g.el");
    std::fs::write(&input, generators::two_block_sbm(60, 0.3, 0.02, 5).unwrap().to_edge_list_text())
        .unwrap();
    preprocess(&input, &tmp.join("ws"), &PreprocessConfig::new(5)).unwrap().0
}

async fn get(state: &AppState, uri: &str) -> (StatusCode, String) {
    let response = router(state.clone())
        .oneshot(Request::get(uri).body(Body::empty()).unwrap())
        .await
        .unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

fn state(tmp: &Path, cache: usize) -> AppState {
    AppState::new(workspace(tmp), cache)
}

#[tokio::test]
async fn hierarchy_and_node_endpoints() {
    let tmp = tempfile::tempdir().unwrap();
    let st = state(tmp.path(), 0);
    let ws = &st.workspace;
    let (status, body) = get(&st, "/api/hierarchy").await;
    assert_eq!(status, StatusCode::OK);
    let v: serde_json::Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["root"], ws.hierarchy().root());
    assert_eq!(v["levels"], ws.hierarchy().levels());
    assert_eq!(v["k"], 5);
    assert_eq!(v["n"], 60);

    let root = ws.hierarchy().root();
    let (status, body) = get(&st, &format!("/api/node/{root}")).await;
    assert_eq!(status, StatusCode::OK);
    let v: serde_json::Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["id"], root);
    assert!(v["parent"].is_null());
    assert_eq!(v["children"].as_array().unwrap().len(), ws.hierarchy().children(root).len());
    let (_, by_alias) = get(&st, "/api/node/root").await;
    assert_eq!(by_alias, body);

    let (status, body) = get(&st, "/healthz").await;
    assert_eq!((status, body.as_str()), (StatusCode::OK, "ok"));
}

#[tokio::test]
async fn layout_matches_the_library_byte_for_byte() {
    let tmp = tempfile::tempdir().unwrap();
    let st = state(tmp.path(), 0);
    let ws = &st.workspace;
    let root = ws.hierarchy().root();
    let lib = ws.visualize(root, &VisualizeOptions::default()).unwrap().to_json();
    let (status, body) = get(&st, &format!("/api/layout/{root}")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, lib);

    let opts = VisualizeOptions {
        seed: Some(17),
        engine: Engine::GfpOnly,
        ..VisualizeOptions::default()
    };
    let lib = ws.visualize(root, &opts).unwrap().to_json();
    let (_, body) = get(&st, &format!("/api/layout/{root}?seed=17&engine=gfp-only")).await;
    assert_eq!(body, lib);

    let (_, timed) = get(&st, &format!("/api/layout/{root}?timing=1")).await;
    let v: serde_json::Value = serde_json::from_str(&timed).unwrap();
    assert!(v["timing"]["layout_ms"].as_f64().unwrap() >= 0.0);

    let (status, metrics) = get(&st, &format!("/api/metrics/{root}")).await;
    assert_eq!(status, StatusCode::OK);
    let expected = ws.visualize(root, &VisualizeOptions::default()).unwrap().metrics;
    assert_eq!(metrics, serde_json::to_string(&expected).unwrap());
}

#[tokio::test]
async fn errors_are_json_with_status() {
    let tmp = tempfile::tempdir().unwrap();
    let st = state(tmp.path(), 0);
    let cases = [
        ("/api/layout/999999", StatusCode::NOT_FOUND),
        ("/api/node/999999", StatusCode::NOT_FOUND),
        ("/api/layout/0", StatusCode::BAD_REQUEST),
        ("/api/layout/abc", StatusCode::BAD_REQUEST),
        ("/api/layout/root?seed=-1", StatusCode::BAD_REQUEST),
        ("/api/layout/root?engine=magic", StatusCode::BAD_REQUEST),
        ("/api/layout/root?colour=red", StatusCode::BAD_REQUEST),
        ("/api/nothing", StatusCode::NOT_FOUND),
    ];
    for (uri, expected) in cases {
        let (status, body) = get(&st, uri).await;
        assert_eq!(status, expected, "{uri}");
        let v: serde_json::Value = serde_json::from_str(&body).unwrap();
        assert!(v["error"].as_str().is_some_and(|s| !s.is_empty()), "{uri}: {body}");
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn sixteen_concurrent_requests_agree() {
    let tmp = tempfile::tempdir().unwrap();
    for cache in [0, 8] {
        let st = state(tmp.path(), cache);
        let uri = format!("/api/layout/{}?seed=3", st.workspace.hierarchy().root());
        let handles: Vec<_> = (0..16)
            .map(|_| {
                let st = st.clone();
                let uri = uri.clone();
                tokio::spawn(async move { get(&st, &uri).await })
            })
            .collect();
        let mut bodies = Vec::new();
        for h in handles {
            let (status, body) = h.await.unwrap();
            assert_eq!(status, StatusCode::OK);
            bodies.push(body);
        }
        assert!(bodies.windows(2).all(|w| w[0] == w[1]));
    }
}

#[tokio::test]
async fn cache_stays_bounded_and_serves_identical_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let st = state(tmp.path(), 2);
    let root = st.workspace.hierarchy().root();
    let first = get(&st, &format!("/api/layout/{root}?seed=1")).await.1;
    for seed in 1..=4 {
        get(&st, &format!("/api/layout/{root}?seed={seed}")).await;
    }
    let cache: &ResponseCache = st.cache.as_deref().unwrap();
    assert!(cache.len() <= 2);
    let again = get(&st, &format!("/api/layout/{root}?seed=1")).await.1;
    assert_eq!(first, again);
}

#[tokio::test]
async fn busy_port_fails_at_bind() {
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = taken.local_addr().unwrap();
    assert!(bind(addr).await.is_err());
}
