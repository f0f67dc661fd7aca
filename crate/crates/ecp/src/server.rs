//! HTTP facade over [`crate::query`].
//!
//! Workspaces load lazily from `root/<id>` and are shared as immutable
//! snapshots. A reload builds the new snapshot off to the side and swaps
//! the pointer, so in-flight readers finish on the old one. Simulations run
//! on the blocking pool behind a semaphore sized by the worker budget.

use std::collections::{HashMap, HashSet};
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ecp_core::frontier::{ThresholdPolicy, ValueKind};
use ecp_core::strategy::{Schedule, StrategyInstance};
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use crate::error::{Kind, Result, ServiceError};
use crate::query::{self, LiftSignal, WhatIfRequest};
use crate::workspace::{workspace_path, Workspace, MANIFEST};
use crate::render;

pub struct AppState {
    root: PathBuf,
    cache: RwLock<HashMap<String, Arc<Workspace>>>,
    /// Serializes disk loads so concurrent first readers share one load.
    load_lock: tokio::sync::Mutex<()>,
    reloading: Mutex<HashSet<String>>,
    simulations: Arc<Semaphore>,
}

impl AppState {
    pub fn new(root: PathBuf, sim_workers: usize) -> Arc<Self> {
        Arc::new(Self {
            root,
            cache: RwLock::new(HashMap::new()),
            load_lock: tokio::sync::Mutex::new(()),
            reloading: Mutex::new(HashSet::new()),
            simulations: Arc::new(Semaphore::new(sim_workers.max(1))),
        })
    }

    fn cached(&self, id: &str) -> Option<Arc<Workspace>> {
        self.cache.read().unwrap_or_else(|e| e.into_inner()).get(id).cloned()
    }

    async fn read_from_disk(&self, id: &str) -> Result<Arc<Workspace>> {
        let path = workspace_path(&self.root, id)?;
        let loaded = tokio::task::spawn_blocking(move || Workspace::load(&path))
            .await
            .map_err(|e| ServiceError::new(Kind::Internal, "internal", e.to_string()))??;
        let ws = Arc::new(loaded);
        self.cache.write().unwrap_or_else(|e| e.into_inner()).insert(id.to_string(), ws.clone());
        Ok(ws)
    }

    async fn workspace(&self, id: &str) -> Result<Arc<Workspace>> {
        if let Some(ws) = self.cached(id) {
            return Ok(ws);
        }
        let _guard = self.load_lock.lock().await;
        match self.cached(id) {
            Some(ws) => Ok(ws),
            None => self.read_from_disk(id).await,
        }
    }

    /// Rebuilds `id` from disk and swaps it in; readers keep the previous
    /// snapshot until the swap. A second reload of the same id while one is
    /// running is a conflict.
    pub async fn reload(&self, id: &str) -> Result<Arc<Workspace>> {
        if !self.reloading.lock().unwrap_or_else(|e| e.into_inner()).insert(id.to_string()) {
            return Err(ServiceError::new(
                Kind::Conflict,
                "workspace_rebuilding",
                format!("workspace `{id}` is being rebuilt; retry shortly"),
            ));
        }
        let out = self.read_from_disk(id).await;
        self.reloading.lock().unwrap_or_else(|e| e.into_inner()).remove(id);
        out
    }
}

fn json<T: Serialize>(value: &T) -> Response {
    (StatusCode::OK, [(header::CONTENT_TYPE, "application/json")], render(value)).into_response()
}

fn bad_query(e: QueryRejection) -> ServiceError {
    ServiceError::invalid(e.body_text())
}

fn bad_body(e: JsonRejection) -> ServiceError {
    ServiceError::invalid(e.body_text())
}

#[derive(Debug, Deserialize)]
struct FrontierParams {
    #[serde(default = "pci")]
    value: ValueKind,
    relatedness: Option<f64>,
    value_threshold: Option<f64>,
    #[serde(default)]
    format: Format,
}

#[derive(Debug, Default, Deserialize, PartialEq)]
#[serde(rename_all = "lowercase")]
enum Format {
    #[default]
    Json,
    Csv,
}

fn pci() -> ValueKind {
    ValueKind::Pci
}

#[derive(Debug, Deserialize)]
struct ThresholdParams {
    relatedness: Option<f64>,
    value_threshold: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct LiftParams {
    #[serde(default)]
    signal: LiftSignal,
    from: Option<String>,
    to: Option<String>,
    quantiles: Option<usize>,
}

#[derive(Debug, Deserialize)]
struct PortfolioParams {
    eci: f64,
    peak: Option<f64>,
    width: Option<f64>,
    max_unrelated: Option<f64>,
}

async fn list(State(state): State<Arc<AppState>>) -> Result<Response> {
    let mut ids = Vec::new();
    if let Ok(entries) = std::fs::read_dir(&state.root) {
        for entry in entries.flatten() {
            if entry.path().join(MANIFEST).is_file() {
                ids.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
    }
    ids.sort();
    Ok(json(&serde_json::json!({ "workspaces": ids })))
}

async fn manifest(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response> {
    Ok(json(&state.workspace(&id).await?.manifest))
}

async fn reload(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response> {
    Ok(json(&state.reload(&id).await?.manifest))
}

async fn frontier(
    State(state): State<Arc<AppState>>,
    Path((id, location)): Path<(String, String)>,
    params: std::result::Result<Query<FrontierParams>, QueryRejection>,
) -> Result<Response> {
    let Query(p) = params.map_err(bad_query)?;
    let ws = state.workspace(&id).await?;
    let policy = ThresholdPolicy { relatedness: p.relatedness, value: p.value_threshold };
    let diagram = query::frontier(&ws, &location, p.value, policy)?;
    Ok(match p.format {
        Format::Json => json(&diagram),
        Format::Csv => (StatusCode::OK, [(header::CONTENT_TYPE, "text/csv")], diagram.to_csv()).into_response(),
    })
}

async fn locations(
    State(state): State<Arc<AppState>>,
    Path((id, activity)): Path<(String, String)>,
    params: std::result::Result<Query<ThresholdParams>, QueryRejection>,
) -> Result<Response> {
    let Query(p) = params.map_err(bad_query)?;
    let ws = state.workspace(&id).await?;
    let policy = ThresholdPolicy { relatedness: p.relatedness, value: p.value_threshold };
    Ok(json(&query::locations(&ws, &activity, policy)?))
}

async fn gradients(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response> {
    let ws = state.workspace(&id).await?;
    Ok(json(&query::gradients(&ws)?))
}

async fn lift(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    params: std::result::Result<Query<LiftParams>, QueryRejection>,
) -> Result<Response> {
    let Query(p) = params.map_err(bad_query)?;
    let ws = state.workspace(&id).await?;
    let report = query::lift(
        &ws,
        p.signal,
        p.from.as_deref(),
        p.to.as_deref(),
        p.quantiles.unwrap_or(ecp_core::spatial::DEFAULT_QUANTILES),
    )?;
    Ok(json(&report))
}

async fn whatif(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: std::result::Result<Json<WhatIfRequest>, JsonRejection>,
) -> Result<Response> {
    let Json(req) = body.map_err(bad_body)?;
    let ws = state.workspace(&id).await?;
    let out = tokio::task::spawn_blocking(move || query::whatif(&ws, &req))
        .await
        .map_err(|e| ServiceError::new(Kind::Internal, "internal", e.to_string()))??;
    Ok(json(&out))
}

async fn simulate(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: std::result::Result<Json<StrategyInstance>, JsonRejection>,
) -> Result<Response> {
    let Json(instance) = body.map_err(bad_body)?;
    workspace_path(&state.root, &id)?;
    let permit = state
        .simulations
        .clone()
        .acquire_owned()
        .await
        .map_err(|e| ServiceError::new(Kind::Internal, "internal", e.to_string()))?;
    let out = tokio::task::spawn_blocking(move || {
        let _permit = permit;
        query::simulate(&instance)
    })
    .await
    .map_err(|e| ServiceError::new(Kind::Internal, "internal", e.to_string()))??;
    Ok(json(&out))
}

async fn portfolio(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    params: std::result::Result<Query<PortfolioParams>, QueryRejection>,
) -> Result<Response> {
    let Query(p) = params.map_err(bad_query)?;
    workspace_path(&state.root, &id)?;
    let d = Schedule::default();
    let schedule = Schedule {
        peak: p.peak.unwrap_or(d.peak),
        width: p.width.unwrap_or(d.width),
        max_unrelated: p.max_unrelated.unwrap_or(d.max_unrelated),
    };
    Ok(json(&query::portfolio(p.eci, schedule)?))
}

async fn fallback() -> ServiceError {
    ServiceError::new(Kind::NotFound, "not_found", "no such route")
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/workspaces", get(list))
        .route("/v1/workspaces/{id}", get(manifest))
        .route("/v1/workspaces/{id}/reload", post(reload))
        .route("/v1/workspaces/{id}/frontier/{location}", get(frontier))
        .route("/v1/workspaces/{id}/activities/{activity}/locations", get(locations))
        .route("/v1/workspaces/{id}/spatial/gradients", get(gradients))
        .route("/v1/workspaces/{id}/spatial/lift", get(lift))
        .route("/v1/workspaces/{id}/whatif", post(whatif))
        .route("/v1/workspaces/{id}/simulate", post(simulate))
        .route("/v1/workspaces/{id}/portfolio", get(portfolio))
        .fallback(fallback)
        .with_state(state)
}

pub async fn serve(addr: std::net::SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
