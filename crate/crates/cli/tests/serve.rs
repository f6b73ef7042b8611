use std::sync::{Arc, RwLock};

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use geomodel::model::parse_document;
use geomodel::scene::{build, compile, BuildOptions, CompiledScene};
use geomodel_cli::serve::router;
use serde_json::{json, Value};
use tower::ServiceExt;

fn scene(xml: &str, optimization: u8) -> Arc<RwLock<CompiledScene>> {
    let doc = parse_document(xml).unwrap().document;
    let opts = BuildOptions {
        optimization,
        ..Default::default()
    };
    Arc::new(RwLock::new(compile(build(&doc, &opts).unwrap())))
}

const ONE_BOX: &str = r#"<AGDD world="b"><material name="Fe" density="7.87"/><box name="b" x="2" y="2" z="2" material="Fe"/></AGDD>"#;
const TWO: &str = r#"<AGDD world="w"><box name="b" x="2" y="2" z="2"/>
    <composition name="w"><posXYZ volume="b"/><posXYZ volume="b" XYZ="10;0;0"/></composition></AGDD>"#;

async fn call(s: &Arc<RwLock<CompiledScene>>, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = router(s.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn rt() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap()
}

#[test]
fn scene_tree_and_info() {
    rt().block_on(async {
        let s = scene(ONE_BOX, 1);
        let (st, v) = call(&s, "GET", "/scene", None).await;
        assert_eq!(st, StatusCode::OK);
        assert_eq!(v["version"], "1");
        assert_eq!(v["instances"].as_array().unwrap().len(), 1);
        let (_, t) = call(&s, "GET", "/tree", None).await;
        assert_eq!(t["children"][0]["name"], "b");
        let (st, info) = call(&s, "GET", "/info?path=b", None).await;
        assert_eq!(st, StatusCode::OK);
        assert_eq!(info["volume"]["solid"]["kind"], "box");
        assert_eq!(info["volume"]["material"], "Fe");
        assert_eq!(info["world_aabb"]["max"], json!([1.0, 1.0, 1.0]));
        let (st, _) = call(&s, "GET", "/info?path=nope", None).await;
        assert_eq!(st, StatusCode::NOT_FOUND);
    });
}

#[test]
fn pick_and_locate() {
    rt().block_on(async {
        let s = scene(TWO, 1);
        let (st, v) = call(&s, "POST", "/pick", Some(json!({"origin": [-10, 0, 0], "direction": [1, 0, 0]}))).await;
        assert_eq!(st, StatusCode::OK);
        assert_eq!(v["hit"]["path"], json!(["w", "b#0"]));
        assert_eq!(v["hit"]["t"], json!(9.0));
        let (_, v) = call(&s, "POST", "/pick", Some(json!({"origin": [0, 10, 0], "direction": [1, 0, 0]}))).await;
        assert_eq!(v["hit"], Value::Null);
        let (st, _) = call(&s, "POST", "/pick", Some(json!({"origin": [0, 0, 0], "direction": [0, 0, 0]}))).await;
        assert_eq!(st, StatusCode::BAD_REQUEST);
        let (_, v) = call(&s, "POST", "/locate", Some(json!({"point": [10, 0.5, 0]}))).await;
        assert_eq!(v["path"], json!(["w", "b#1"]));
        let (_, v) = call(&s, "POST", "/locate", Some(json!({"point": [5, 0, 0]}))).await;
        assert_eq!(v["path"], Value::Null);
    });
}

#[test]
fn visibility_is_reflected_in_scene() {
    rt().block_on(async {
        let s = scene(TWO, 1);
        let (st, _) = call(&s, "POST", "/visibility", Some(json!({"path": "w/b#1", "flag": false}))).await;
        assert_eq!(st, StatusCode::OK);
        let (_, v) = call(&s, "GET", "/scene", None).await;
        let vis: Vec<bool> = v["instances"]
            .as_array()
            .unwrap()
            .iter()
            .map(|i| i["visible"].as_bool().unwrap())
            .collect();
        assert_eq!(vis, [true, false]);
        let (st, v) = call(&s, "POST", "/visibility", Some(json!({"path": ["w", "zz"], "flag": false}))).await;
        assert_eq!(st, StatusCode::NOT_FOUND);
        assert_eq!(v["error"], "unknown_path");
    });
}

#[test]
fn appearance_refused_at_opt_three() {
    rt().block_on(async {
        let s = scene(TWO, 3);
        let path = s.read().unwrap().instances()[0].path.clone();
        let (st, v) = call(&s, "POST", "/appearance", Some(json!({"path": path, "delta": {"color": [1, 0, 0]}}))).await;
        assert_eq!(st, StatusCode::CONFLICT);
        assert_eq!(v["error"], "refused");
        assert!(v["reason"].as_str().unwrap().contains("discards identities"));
        let (st, _) = call(&s, "POST", "/locate", Some(json!({"point": [0, 0, 0]}))).await;
        assert_eq!(st, StatusCode::CONFLICT);

        let s = scene(TWO, 1);
        let (st, _) = call(&s, "POST", "/appearance", Some(json!({"path": "w/b#0", "delta": {"color": [1, 0, 0], "transparency": 0.5}}))).await;
        assert_eq!(st, StatusCode::OK);
        let (_, v) = call(&s, "GET", "/info?path=w/b%230", None).await;
        assert_eq!(v["appearance"]["color"], json!([1.0, 0.0, 0.0, 0.5]));
        let (st, _) = call(&s, "POST", "/appearance", Some(json!({"path": "w", "delta": {"transparency": 2}}))).await;
        assert_eq!(st, StatusCode::BAD_REQUEST);
    });
}
