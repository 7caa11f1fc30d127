//! Local HTTP service for a gas network project.
//!
//! Reads are served from an immutable snapshot that is swapped after every
//! successful command; commands and exports go through one serialized
//! editor.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use gastopo_core::model::Dataset;
use gastopo_core::project_io::{layer_features, load_project, save_project, PLANS_DIR};
use gastopo_core::validation::{audit_topology, compute_statistics, NetworkStatistics, Scope, TopologyReport};
use gastopo_core::{Command, Editor, Error, JournalEntry};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::Mutex;

pub const DEFAULT_PORT: u16 = 8000;

const INDEX_HTML: &str = include_str!("index.html");

struct Snapshot {
    dataset: Dataset,
    journal: Vec<JournalEntry>,
}

pub struct AppState {
    root: PathBuf,
    editor: Mutex<Editor>,
    snapshot: RwLock<Arc<Snapshot>>,
}

impl AppState {
    /// Loads the project at `root`; load warnings are returned for logging.
    pub fn open(root: &Path) -> Result<(Arc<Self>, Vec<String>), Error> {
        let project = load_project(root)?;
        let editor = Editor::new(project.dataset, project.journal).with_plans_dir(project.root.join(PLANS_DIR));
        Ok((Self::with_editor(root, editor), project.warnings))
    }

    pub fn with_editor(root: &Path, editor: Editor) -> Arc<Self> {
        let snapshot = Snapshot { dataset: editor.dataset().clone(), journal: editor.journal().to_vec() };
        Arc::new(Self { root: root.to_owned(), editor: Mutex::new(editor), snapshot: RwLock::new(Arc::new(snapshot)) })
    }

    fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    fn publish(&self, editor: &Editor) {
        let next = Snapshot { dataset: editor.dataset().clone(), journal: editor.journal().to_vec() };
        *self.snapshot.write().expect("snapshot lock") = Arc::new(next);
    }

    pub fn plans_dir(&self) -> PathBuf {
        self.root.join(PLANS_DIR)
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/", get(index))
        .route("/api/dataset", get(dataset))
        .route("/api/layers/{name}", get(layer))
        .route("/api/stats", get(stats))
        .route("/api/topology", get(topology))
        .route("/api/journal", get(journal))
        .route("/api/command", post(command))
        .route("/api/export", post(export))
        .route("/plans/{file}", get(plan_image))
        .with_state(state)
}

/// Binds to `addr` and serves until the process ends.
pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

fn error_body(kind: &str, message: String) -> Value {
    json!({"status": "error", "error": {"kind": kind, "message": message}})
}

fn error_response(status: StatusCode, err: &Error) -> Response {
    (status, Json(error_body(err.kind(), err.to_string()))).into_response()
}

fn command_status(err: &Error) -> StatusCode {
    match err {
        Error::UnknownOperation(_) | Error::ValidationError(_) => StatusCode::BAD_REQUEST,
        Error::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        _ => StatusCode::UNPROCESSABLE_ENTITY,
    }
}

async fn index() -> Html<&'static str> {
    Html(INDEX_HTML)
}

async fn dataset(State(state): State<Arc<AppState>>) -> Json<Value> {
    let snap = state.snapshot();
    let ds = &snap.dataset;
    let mut layers = serde_json::Map::new();
    for cfg in &ds.layer_configs {
        if cfg.is_sublayer() {
            continue;
        }
        if let Some(fc) = layer_features(ds, &cfg.layer) {
            layers.insert(cfg.layer.clone(), fc);
        }
    }
    let groups: Vec<Value> = ds
        .groups
        .values()
        .map(|g| {
            json!({"id": g.id, "name": g.name, "member_ids": g.member_ids,
                   "total_length_km": ds.group_total_length_km(g)})
        })
        .collect();
    Json(json!({
        "layers": layers,
        "layer_configs": ds.layer_configs,
        "schemas": ds.schemas,
        "groups": groups,
        "plan_overlays": ds.plan_overlays,
        "license_text": ds.license_text,
    }))
}

async fn layer(State(state): State<Arc<AppState>>, UrlPath(name): UrlPath<String>) -> Response {
    let snap = state.snapshot();
    match layer_features(&snap.dataset, &name) {
        Some(fc) => Json(fc).into_response(),
        None => error_response(StatusCode::NOT_FOUND, &Error::UnknownLayer(name)),
    }
}

async fn stats(State(state): State<Arc<AppState>>) -> Json<NetworkStatistics> {
    Json(compute_statistics(&state.snapshot().dataset))
}

#[derive(Debug, Deserialize)]
struct TopologyQuery {
    sublayer: Option<String>,
}

async fn topology(State(state): State<Arc<AppState>>, Query(q): Query<TopologyQuery>) -> Json<TopologyReport> {
    let scope = q.sublayer.map_or(Scope::All, Scope::Sublayer);
    Json(audit_topology(&state.snapshot().dataset, &scope))
}

#[derive(Debug, Deserialize)]
struct JournalQuery {
    #[serde(default)]
    since: u64,
}

async fn journal(State(state): State<Arc<AppState>>, Query(q): Query<JournalQuery>) -> Json<Vec<JournalEntry>> {
    let snap = state.snapshot();
    Json(snap.journal.iter().filter(|e| e.seq > q.since).cloned().collect())
}

async fn command(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let cmd: Command = match serde_json::from_slice(&body) {
        Ok(cmd) => cmd,
        Err(e) => return error_response(StatusCode::BAD_REQUEST, &Error::ValidationError(format!("envelope: {e}"))),
    };
    let mut editor = state.editor.lock().await;
    match editor.dispatch(&cmd) {
        Ok(out) => {
            state.publish(&editor);
            tracing::info!(seq = out.seq, op = %cmd.op, user = %cmd.user, "command applied");
            Json(json!({"status": "ok", "seq": out.seq, "result": out.result, "affected_ids": out.affected_ids}))
                .into_response()
        }
        Err(err) => {
            tracing::warn!(op = %cmd.op, kind = err.kind(), "command rejected: {err}");
            error_response(command_status(&err), &err)
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExportRequest {
    out: Option<PathBuf>,
}

async fn export(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let req: ExportRequest = if body.iter().all(u8::is_ascii_whitespace) {
        ExportRequest::default()
    } else {
        match serde_json::from_slice(&body) {
            Ok(r) => r,
            Err(e) => return error_response(StatusCode::BAD_REQUEST, &Error::ValidationError(format!("export: {e}"))),
        }
    };
    let target = req.out.unwrap_or_else(|| state.root.clone());
    // holding the editor pauses command application while files are written
    let editor = state.editor.lock().await;
    let plans = state.plans_dir();
    match save_project(editor.dataset(), editor.journal(), &target, Some(&plans)) {
        Ok(manifest) => Json(json!({"status": "ok", "root": manifest.root, "files": manifest.files()})).into_response(),
        Err(err) => error_response(StatusCode::INTERNAL_SERVER_ERROR, &err),
    }
}

fn content_type(file: &str) -> &'static str {
    match file.rsplit_once('.').map(|(_, e)| e.to_ascii_lowercase()).as_deref() {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        Some("svg") => "image/svg+xml",
        Some("tif" | "tiff") => "image/tiff",
        _ => "application/octet-stream",
    }
}

async fn plan_image(State(state): State<Arc<AppState>>, UrlPath(file): UrlPath<String>) -> Response {
    if file.contains(['/', '\\']) || file.starts_with('.') {
        return error_response(StatusCode::BAD_REQUEST, &Error::InvalidParameter(format!("bad plan file `{file}`")));
    }
    let path = state.plans_dir().join(&file);
    match tokio::fs::read(&path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(&file))], bytes).into_response(),
        Err(e) => error_response(StatusCode::NOT_FOUND, &Error::Io { path, source: e }),
    }
}

