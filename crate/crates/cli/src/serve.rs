//! HTTP endpoints over one compiled scene.
//!
//! GET  /scene                  wire document
//! GET  /tree                   name hierarchy
//! GET  /info?path=a/b          volume details
//! POST /pick {origin, direction}
//! POST /locate {point}
//! POST /appearance {path, delta}
//! POST /visibility {path, flag}
//!
//! Reads share a lock; mutations take it exclusively. Capability refusals
//! answer 409 with `{"error": "refused", "reason": ...}`.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use anyhow::{Context, Result};
use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use geomodel::export::{export_scene_wire, scene_tree};
use geomodel::geom::{Aabb, Point, Vector};
use geomodel::query::{locate, pick, QueryError};
use geomodel::scene::{AppearanceDelta, CompiledScene, MutationError};
use serde::Deserialize;
use serde_json::{json, Value};

pub type SharedScene = Arc<RwLock<CompiledScene>>;

/// A path given either as a list of labels or as `a/b/c`.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum PathArg {
    Labels(Vec<String>),
    Joined(String),
}

impl PathArg {
    fn labels(self) -> Vec<String> {
        match self {
            PathArg::Labels(v) => v,
            PathArg::Joined(s) => split_path(&s),
        }
    }
}

fn split_path(s: &str) -> Vec<String> {
    s.split('/').filter(|p| !p.is_empty()).map(str::to_string).collect()
}

#[derive(Debug, Deserialize)]
struct PickRequest {
    origin: [f64; 3],
    direction: [f64; 3],
}

#[derive(Debug, Deserialize)]
struct LocateRequest {
    point: [f64; 3],
}

#[derive(Debug, Deserialize)]
struct AppearanceRequest {
    path: PathArg,
    delta: AppearanceDelta,
}

#[derive(Debug, Deserialize)]
struct VisibilityRequest {
    path: PathArg,
    #[serde(alias = "visible")]
    flag: bool,
}

fn error(status: StatusCode, kind: &str, reason: String) -> Response {
    (status, Json(json!({ "error": kind, "reason": reason }))).into_response()
}

fn mutation_response(r: Result<(), MutationError>) -> Response {
    match r {
        Ok(()) => Json(json!({ "ok": true })).into_response(),
        Err(e) => {
            let status = match e {
                MutationError::UnknownPath { .. } => StatusCode::NOT_FOUND,
                MutationError::Refused { .. } => StatusCode::CONFLICT,
                MutationError::Invalid { .. } => StatusCode::BAD_REQUEST,
            };
            (status, Json(serde_json::to_value(&e).unwrap_or(Value::Null))).into_response()
        }
    }
}

fn query_error(e: QueryError) -> Response {
    match e {
        QueryError::IdentitiesDiscarded => error(StatusCode::CONFLICT, "refused", e.to_string()),
        QueryError::ZeroDirection => error(StatusCode::BAD_REQUEST, "invalid", e.to_string()),
        QueryError::UnknownPath(_) => error(StatusCode::NOT_FOUND, "unknown_path", e.to_string()),
    }
}

async fn get_scene(State(s): State<SharedScene>) -> Response {
    let body = export_scene_wire(&s.read().expect("scene lock"));
    ([(header::CONTENT_TYPE, "application/json")], body).into_response()
}

async fn get_tree(State(s): State<SharedScene>) -> Response {
    Json(scene_tree(&s.read().expect("scene lock"))).into_response()
}

async fn get_info(State(s): State<SharedScene>, Query(q): Query<HashMap<String, String>>) -> Response {
    let Some(raw) = q.get("path") else {
        return error(StatusCode::BAD_REQUEST, "invalid", "missing `path` query parameter".into());
    };
    let path = split_path(raw);
    let scene = s.read().expect("scene lock");
    let under = scene.instances_under(&path);
    if under.is_empty() {
        return error(StatusCode::NOT_FOUND, "unknown_path", format!("no volume at path `{raw}`"));
    }
    let bounds = under
        .iter()
        .fold(Aabb::empty(), |b, &i| b.union(&scene.instances()[i].bounds));
    let mut info = json!({
        "path": path,
        "instances": under.len(),
        "world_aabb": bounds,
    });
    if let Some(i) = scene.find(&path) {
        let g = scene.geometry(scene.instances()[i].geometry);
        info["volume"] = serde_json::to_value(scene.volume(i)).unwrap_or(Value::Null);
        info["appearance"] = serde_json::to_value(scene.appearance(i)).unwrap_or(Value::Null);
        info["visible"] = json!(scene.is_visible(i));
        info["geometry"] = json!({ "kind": g.kind(), "triangles": g.triangle_count() });
    }
    Json(info).into_response()
}

async fn post_pick(State(s): State<SharedScene>, Json(r): Json<PickRequest>) -> Response {
    let scene = s.read().expect("scene lock");
    let origin = Point::from(r.origin);
    let dir = Vector::from(r.direction);
    match pick(&scene, &origin, &dir) {
        Ok(hit) => Json(json!({ "hit": hit })).into_response(),
        Err(e) => query_error(e),
    }
}

async fn post_locate(State(s): State<SharedScene>, Json(r): Json<LocateRequest>) -> Response {
    let scene = s.read().expect("scene lock");
    match locate(&scene, &Point::from(r.point)) {
        Ok(path) => Json(json!({ "path": path })).into_response(),
        Err(e) => query_error(e),
    }
}

async fn post_appearance(State(s): State<SharedScene>, Json(r): Json<AppearanceRequest>) -> Response {
    let mut scene = s.write().expect("scene lock");
    mutation_response(scene.set_appearance(&r.path.labels(), &r.delta))
}

async fn post_visibility(State(s): State<SharedScene>, Json(r): Json<VisibilityRequest>) -> Response {
    let mut scene = s.write().expect("scene lock");
    mutation_response(scene.toggle_visibility(&r.path.labels(), r.flag))
}

pub fn router(scene: SharedScene) -> Router {
    Router::new()
        .route("/scene", get(get_scene))
        .route("/tree", get(get_tree))
        .route("/info", get(get_info))
        .route("/pick", post(post_pick))
        .route("/locate", post(post_locate))
        .route("/appearance", post(post_appearance))
        .route("/visibility", post(post_visibility))
        .with_state(scene)
}

/// Bind `addr` and serve until the process is stopped.
pub fn serve_blocking(scene: CompiledScene, addr: &str, err: &mut dyn std::io::Write) -> Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("cannot start the async runtime")?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("cannot listen on {addr}"))?;
        let _ = writeln!(err, "serving on http://{}", listener.local_addr()?);
        axum::serve(listener, router(Arc::new(RwLock::new(scene))))
            .await
            .context("server failed")
    })
}
