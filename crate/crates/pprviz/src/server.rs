use std::collections::{HashMap, VecDeque};
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use pprviz_core::pipeline::{VisualizeOptions, Workspace};
use pprviz_core::ppr::Engine;
use pprviz_core::Error;
use tokio::net::TcpListener;

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("{0}")]
    BadRequest(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("worker failed: {0}")]
    Join(String),
}

impl ApiError {
    fn status(&self) -> StatusCode {
        match self {
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::Core(Error::NotFound(_)) => StatusCode::NOT_FOUND,
            ApiError::Core(Error::Invariant(_)) | ApiError::Join(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
            ApiError::Core(e) if e.is_user_error() => StatusCode::BAD_REQUEST,
            ApiError::Core(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": self.to_string() }).to_string();
        (self.status(), [(header::CONTENT_TYPE, "application/json")], body).into_response()
    }
}

type CacheKey = (u32, u64, Engine);

/// Bounded FIFO cache of rendered layout bodies.
#[derive(Debug)]
pub struct ResponseCache {
    capacity: usize,
    inner: Mutex<(HashMap<CacheKey, Arc<str>>, VecDeque<CacheKey>)>,
}

impl ResponseCache {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            inner: Mutex::new((HashMap::new(), VecDeque::new())),
        }
    }

    fn get(&self, key: &CacheKey) -> Option<Arc<str>> {
        self.inner.lock().unwrap().0.get(key).cloned()
    }

    fn insert(&self, key: CacheKey, body: Arc<str>) {
        let mut guard = self.inner.lock().unwrap();
        let (map, order) = &mut *guard;
        if map.insert(key, body).is_none() {
            order.push_back(key);
            while order.len() > self.capacity {
                if let Some(old) = order.pop_front() {
                    map.remove(&old);
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
pub struct AppState {
    pub workspace: Arc<Workspace>,
    /// `None` disables caching.
    pub cache: Option<Arc<ResponseCache>>,
}

impl AppState {
    pub fn new(workspace: Workspace, cache_capacity: usize) -> Self {
        Self {
            workspace: Arc::new(workspace),
            cache: (cache_capacity > 0).then(|| Arc::new(ResponseCache::new(cache_capacity))),
        }
    }
}

fn json(body: impl Into<String>) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], body.into()).into_response()
}

fn parse_id(ws: &Workspace, raw: &str) -> Result<u32, ApiError> {
    if raw == "root" {
        return Ok(ws.hierarchy().root());
    }
    raw.parse()
        .map_err(|_| ApiError::BadRequest(format!("invalid node id {raw:?}")))
}

/// Options from `?seed=..&engine=..&timing=1`.
fn parse_options(query: &HashMap<String, String>) -> Result<VisualizeOptions, ApiError> {
    let mut opts = VisualizeOptions::default();
    for (key, value) in query {
        match key.as_str() {
            "seed" => {
                let seed = value
                    .parse()
                    .map_err(|_| ApiError::BadRequest(format!("invalid seed {value:?}")))?;
                opts.seed = Some(seed);
            }
            "engine" => {
                opts.engine = value
                    .parse()
                    .map_err(|e: Error| ApiError::BadRequest(e.to_string()))?;
            }
            "timing" => opts.timing = matches!(value.as_str(), "1" | "true"),
            other => return Err(ApiError::BadRequest(format!("unknown query parameter {other:?}"))),
        }
    }
    Ok(opts)
}

async fn layout_body(state: &AppState, raw_id: &str, opts: VisualizeOptions) -> Result<Arc<str>, ApiError> {
    let ws = state.workspace.clone();
    let id = parse_id(&ws, raw_id)?;
    let seed = opts.seed.unwrap_or_else(|| ws.default_seed(id));
    let key = (id, seed, opts.engine);
    let cacheable = !opts.timing;
    if cacheable {
        if let Some(hit) = state.cache.as_ref().and_then(|c| c.get(&key)) {
            return Ok(hit);
        }
    }
    let body: Arc<str> = tokio::task::spawn_blocking(move || ws.visualize(id, &opts))
        .await
        .map_err(|e| ApiError::Join(e.to_string()))??
        .to_json()
        .into();
    if cacheable {
        if let Some(cache) = &state.cache {
            cache.insert(key, body.clone());
        }
    }
    Ok(body)
}

async fn hierarchy(State(state): State<AppState>) -> Response {
    json(serde_json::to_string(&state.workspace.summary()).expect("summary serializes"))
}

async fn node(State(state): State<AppState>, Path(raw): Path<String>) -> Result<Response, ApiError> {
    let id = parse_id(&state.workspace, &raw)?;
    let info = state.workspace.node_info(id)?;
    Ok(json(serde_json::to_string(&info).expect("node info serializes")))
}

async fn layout(
    State(state): State<AppState>,
    Path(raw): Path<String>,
    Query(query): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let opts = parse_options(&query)?;
    let body = layout_body(&state, &raw, opts).await?;
    Ok(json(body.to_string()))
}

async fn metrics(
    State(state): State<AppState>,
    Path(raw): Path<String>,
    Query(query): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let mut opts = parse_options(&query)?;
    opts.timing = false;
    let ws = state.workspace.clone();
    let id = parse_id(&ws, &raw)?;
    let response = tokio::task::spawn_blocking(move || ws.visualize(id, &opts))
        .await
        .map_err(|e| ApiError::Join(e.to_string()))??;
    Ok(json(serde_json::to_string(&response.metrics).expect("metrics serialize")))
}

async fn healthz() -> &'static str {
    "ok"
}

async fn fallback() -> ApiError {
    ApiError::Core(Error::NotFound("no such route".into()))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/hierarchy", get(hierarchy))
        .route("/api/node/{id}", get(node))
        .route("/api/layout/{id}", get(layout))
        .route("/api/metrics/{id}", get(metrics))
        .route("/healthz", get(healthz))
        .fallback(fallback)
        .with_state(state)
}

/// Binds the listener; a busy port is reported here rather than at serve time.
pub async fn bind(addr: SocketAddr) -> std::io::Result<TcpListener> {
    TcpListener::bind(addr).await
}

pub async fn serve(listener: TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
