//! Read-only HTTP JSON API over one processed cohort and six trained
//! indicator models.
//!
//! Every route is a `GET` whose response is a deterministic function of the
//! URL and the loaded artifacts. Successful bodies are memoized in a bounded
//! LRU keyed by the path and the sorted query string, so a cached response
//! is byte-identical to a recomputed one.

mod error;
mod params;
mod routes;
mod state;

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use cohortgate::{Error, Result};
use serde::{Deserialize, Serialize};
use tower_http::timeout::TimeoutLayer;

pub use error::ApiError;
pub use params::{Params, DEFAULT_TOP_PAIRS, DEFAULT_WINDOW};
pub use state::{model_file_name, AppState, Loaded};

/// Value of the top-level `"v"` field in every response.
pub const API_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    /// Processed snapshot written by `preprocess`.
    pub dataset: PathBuf,
    /// Directory holding `model_<IND>.hpm` for all six indicators.
    pub model_dir: PathBuf,
    /// Memoized responses; 0 disables the cache.
    pub cache_size: usize,
    pub request_timeout_secs: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            dataset: PathBuf::from("processed.snap"),
            model_dir: PathBuf::from("models"),
            cache_size: 256,
            request_timeout_secs: 120,
        }
    }
}

impl ServiceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.listen.port() == 0 {
            return Err(Error::Config("listen port must be nonzero".into()));
        }
        for (what, p) in [("dataset snapshot", &self.dataset), ("model directory", &self.model_dir)] {
            if !p.exists() {
                return Err(Error::Artifact(format!("{what} {} does not exist", p.display())));
            }
        }
        if self.request_timeout_secs == 0 {
            return Err(Error::Config("request_timeout_secs must be positive".into()));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.request_timeout_secs)
    }
}

async fn respond(
    state: AppState,
    route: &'static str,
    id: Option<String>,
    query: BTreeMap<String, String>,
    f: routes::RouteFn,
) -> Response {
    let (generation, loaded) = match state.snapshot() {
        Ok(s) => s,
        Err(e) => return e.into_response(),
    };
    let params = Params(query);
    let key = format!("{generation}|{route}|{}|{}", id.as_deref().unwrap_or(""), params.canonical());
    if let Some(body) = state.cached(&key) {
        return ok(body);
    }
    let id = id.unwrap_or_default();
    let out = tokio::task::spawn_blocking(move || f(&loaded, &id, &params)).await;
    match out {
        Ok(Ok(body)) => {
            let body = axum::body::Bytes::from(body);
            state.store(key, body.clone());
            ok(body)
        }
        Ok(Err(e)) => e.into_response(),
        Err(e) => ApiError::internal(e.to_string()).into_response(),
    }
}

fn ok(body: axum::body::Bytes) -> Response {
    (StatusCode::OK, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

type Q = Query<BTreeMap<String, String>>;

macro_rules! plain {
    ($name:literal, $f:path) => {
        get(|State(s): State<AppState>, Query(q): Q| async move { respond(s, $name, None, q, $f).await })
    };
}

macro_rules! by_id {
    ($name:literal, $f:path) => {
        get(
            |State(s): State<AppState>, Path(id): Path<String>, Query(q): Q| async move {
                respond(s, $name, Some(id), q, $f).await
            },
        )
    };
}

/// All routes, with a per-request timeout.
pub fn router(state: AppState, timeout: Duration) -> Router {
    Router::new()
        .route("/api/health", plain!("health", routes::health))
        .route("/api/schema", plain!("schema", routes::schema))
        .route("/api/summary/categorical", plain!("summary/categorical", routes::summary_categorical))
        .route("/api/summary/correlation", plain!("summary/correlation", routes::summary_correlation))
        .route("/api/summary/importance", plain!("summary/importance", routes::summary_importance))
        .route("/api/summary/influence", plain!("summary/influence", routes::summary_influence))
        .route("/api/summary/motion", plain!("summary/motion", routes::summary_motion))
        .route("/api/group/graph", plain!("group/graph", routes::group_graph))
        .route("/api/group/importance", plain!("group/importance", routes::group_importance))
        .route("/api/group/influence", plain!("group/influence", routes::group_influence))
        .route("/api/group/context", plain!("group/context", routes::group_context))
        .route("/api/group/motion", plain!("group/motion", routes::group_motion))
        .route("/api/individual/{id}/profile", by_id!("individual/profile", routes::individual_profile))
        .route("/api/individual/{id}/importance", by_id!("individual/importance", routes::individual_importance))
        .route("/api/individual/{id}/influence", by_id!("individual/influence", routes::individual_influence))
        .route("/api/individual/{id}/context", by_id!("individual/context", routes::individual_context))
        .route("/api/individual/{id}/motion", by_id!("individual/motion", routes::individual_motion))
        .route("/api/compare", plain!("compare", routes::compare))
        .fallback(|| async { ApiError::not_found("unknown route").into_response() })
        .layer(TimeoutLayer::with_status_code(StatusCode::REQUEST_TIMEOUT, timeout))
        .with_state(state)
}

/// Loads and verifies every artifact, then serves until the process ends.
/// Startup errors name the missing or corrupt artifact. `on_ready` runs
/// once the listener is bound.
pub async fn serve(config: ServiceConfig, on_ready: impl FnOnce(SocketAddr)) -> Result<()> {
    config.validate()?;
    let (dataset, models) = (config.dataset.clone(), config.model_dir.clone());
    let loaded = tokio::task::spawn_blocking(move || Loaded::from_paths(&dataset, &models))
        .await
        .map_err(|e| Error::State(e.to_string()))??;
    let state = AppState::new(loaded, config.cache_size);
    let listener = tokio::net::TcpListener::bind(config.listen)
        .await
        .map_err(|source| Error::Io { path: config.listen.to_string().into(), source })?;
    on_ready(listener.local_addr().unwrap_or(config.listen));
    axum::serve(listener, router(state, config.timeout()))
        .await
        .map_err(|source| Error::Io { path: config.listen.to_string().into(), source })
}

/// [`serve`] on a fresh multi-threaded runtime.
pub fn serve_blocking(config: ServiceConfig, on_ready: impl FnOnce(SocketAddr)) -> Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|source| Error::Io { path: "tokio runtime".into(), source })?;
    rt.block_on(serve(config, on_ready))
}
