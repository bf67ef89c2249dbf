//! Route handlers and their JSON payloads.

use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, PathRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::Json;
use hsal_core::experiment::confusion_matrix;
use hsal_core::land::Diagnostics;
use serde::{Deserialize, Serialize};

use crate::dataset::ClassInfo;
use crate::error::ApiError;
use crate::session::{PropagationSummary, Session, Status};
use crate::state::AppState;

pub type Shared = Arc<AppState>;
type ApiResult<T> = Result<Json<T>, ApiError>;

const DEFAULT_LIMIT: usize = 20;
const MAX_LIMIT: usize = 10_000;

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload.map(|Json(v)| v).map_err(|e| ApiError::unprocessable(e.body_text()))
}

fn path<T>(p: Result<Path<T>, PathRejection>) -> Result<T, ApiError> {
    p.map(|Path(v)| v).map_err(|e| ApiError::not_found(e.body_text()))
}

fn read(session: &crate::state::SessionHandle) -> std::sync::RwLockReadGuard<'_, Session> {
    session.read().unwrap_or_else(|e| e.into_inner())
}

fn write(session: &crate::state::SessionHandle) -> std::sync::RwLockWriteGuard<'_, Session> {
    session.write().unwrap_or_else(|e| e.into_inner())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub sessions: usize,
}

pub async fn health(State(state): State<Shared>) -> Json<Health> {
    Json(Health { status: "ok".into(), sessions: state.list().len() })
}

pub async fn datasets(State(state): State<Shared>) -> Json<Vec<String>> {
    Json(state.dataset_names())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateSession {
    pub dataset: String,
    #[serde(default)]
    pub t: Option<u32>,
    /// Only used when the dataset has neither `classes.json` nor `truth.npy`.
    #[serde(default)]
    pub num_classes: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionInfo {
    pub id: String,
    pub dataset: String,
    pub n: usize,
    pub t: u32,
    pub width: usize,
    pub height: usize,
    pub bands: usize,
    pub classes: Vec<ClassInfo>,
    pub status: Status,
    pub answered: usize,
    pub has_truth: bool,
}

fn info(s: &Session) -> SessionInfo {
    let d = &s.dataset;
    SessionInfo {
        id: s.id.clone(),
        dataset: d.name.clone(),
        n: d.n(),
        t: s.t,
        width: d.width,
        height: d.height,
        bands: d.spectra.dim(),
        classes: d.classes.clone(),
        status: s.status,
        answered: s.answers().len(),
        has_truth: d.truth.is_some(),
    }
}

pub async fn create_session(
    State(state): State<Shared>,
    payload: Result<Json<CreateSession>, JsonRejection>,
) -> Result<(StatusCode, Json<SessionInfo>), ApiError> {
    let req = body(payload)?;
    let handle = state.create(&req.dataset, req.t, req.num_classes)?;
    let out = info(&read(&handle));
    log::info!("created session {} on {}", out.id, out.dataset);
    Ok((StatusCode::CREATED, Json(out)))
}

pub async fn list_sessions(State(state): State<Shared>) -> Json<Vec<SessionInfo>> {
    Json(state.list().iter().map(|h| info(&read(h))).collect())
}

pub async fn get_session(State(state): State<Shared>, id: Result<Path<String>, PathRejection>) -> ApiResult<SessionInfo> {
    let handle = state.get(&path(id)?)?;
    let out = info(&read(&handle));
    Ok(Json(out))
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct Page {
    pub offset: Option<usize>,
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct QueryItem {
    pub rank: usize,
    pub index: usize,
    pub row: usize,
    pub col: usize,
    pub score: f64,
    pub p: f64,
    pub rho: f64,
    /// The class already given for this point, if any.
    pub answered: Option<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryPage {
    pub total: usize,
    pub offset: usize,
    pub items: Vec<QueryItem>,
}

pub async fn queries(
    State(state): State<Shared>,
    id: Result<Path<String>, PathRejection>,
    page: Result<Query<Page>, QueryRejection>,
) -> ApiResult<QueryPage> {
    let handle = state.get(&path(id)?)?;
    let Query(page) = page.map_err(|e| ApiError::unprocessable(e.body_text()))?;
    let offset = page.offset.unwrap_or(0);
    let limit = page.limit.unwrap_or(DEFAULT_LIMIT).min(MAX_LIMIT);
    let s = read(&handle);
    let scores = &s.model.scores;
    let total = scores.query_order.len();
    let items = scores
        .query_order
        .iter()
        .enumerate()
        .skip(offset)
        .take(limit)
        .map(|(rank, &index)| {
            let (row, col) = s.dataset.pixel(index);
            QueryItem {
                rank,
                index,
                row,
                col,
                score: scores.score[index],
                p: scores.density[index],
                rho: scores.rho[index],
                answered: s.answer_of(index),
            }
        })
        .collect();
    Ok(Json(QueryPage { total, offset, items }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelRequest {
    pub index: usize,
    pub class: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelResponse {
    pub index: usize,
    pub class: u32,
    pub status: Status,
    pub answered: usize,
    /// False when the request repeated the stored answer.
    pub changed: bool,
}

pub async fn submit_label(
    State(state): State<Shared>,
    id: Result<Path<String>, PathRejection>,
    payload: Result<Json<LabelRequest>, JsonRejection>,
) -> ApiResult<LabelResponse> {
    let handle = state.get(&path(id)?)?;
    let req = body(payload)?;
    let mut s = write(&handle);
    let changed = s.submit(req.index, req.class)?;
    Ok(Json(LabelResponse {
        index: req.index,
        class: req.class,
        status: s.status,
        answered: s.answers().len(),
        changed,
    }))
}

pub async fn list_labels(State(state): State<Shared>, id: Result<Path<String>, PathRejection>) -> ApiResult<Vec<LabelRequest>> {
    let handle = state.get(&path(id)?)?;
    let s = read(&handle);
    Ok(Json(s.answers().iter().map(|&(index, class)| LabelRequest { index, class }).collect()))
}

pub async fn propagate(State(state): State<Shared>, id: Result<Path<String>, PathRejection>) -> ApiResult<PropagationSummary> {
    let handle = state.get(&path(id)?)?;
    let summary = write(&handle).propagate()?;
    Ok(Json(summary))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelRaster {
    pub width: usize,
    pub height: usize,
    /// Row-major, `height * width` entries; 0 = unlabeled or not a graph point.
    pub labels: Vec<u32>,
}

/// Scatters per-point labels onto the image grid.
pub fn raster(s: &Session, y: &[u32]) -> LabelRaster {
    let d = &s.dataset;
    let mut labels = vec![0u32; d.height * d.width];
    for (i, &l) in y.iter().enumerate() {
        let (r, c) = d.pixel(i);
        labels[r * d.width + c] = l;
    }
    LabelRaster { width: d.width, height: d.height, labels }
}

pub async fn map(State(state): State<Shared>, id: Result<Path<String>, PathRejection>) -> ApiResult<LabelRaster> {
    let handle = state.get(&path(id)?)?;
    let s = read(&handle);
    let y = s.map.as_ref().ok_or_else(|| ApiError::conflict("not propagated yet; POST /sessions/{id}/propagate first"))?;
    Ok(Json(raster(&s, y)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PixelInfo {
    pub index: usize,
    pub row: usize,
    pub col: usize,
    pub spectrum: Vec<f64>,
    pub p: f64,
    pub rho: f64,
    pub score: f64,
    /// Rank in the query order.
    pub rank: usize,
    /// Propagated label, 0 before propagation.
    pub label: u32,
    pub answered: Option<u32>,
    pub truth: Option<u32>,
}

pub async fn pixel(
    State(state): State<Shared>,
    params: Result<Path<(String, String)>, PathRejection>,
) -> ApiResult<PixelInfo> {
    let (id, raw) = path(params)?;
    let handle = state.get(&id)?;
    let s = read(&handle);
    let n = s.dataset.n();
    let index = raw
        .parse::<usize>()
        .ok()
        .filter(|&i| i < n)
        .ok_or_else(|| ApiError::not_found(format!("pixel {raw} is out of range (n = {n})")))?;
    let scores = &s.model.scores;
    let (row, col) = s.dataset.pixel(index);
    Ok(Json(PixelInfo {
        index,
        row,
        col,
        spectrum: s.dataset.spectra.row(index).to_vec(),
        p: scores.density[index],
        rho: scores.rho[index],
        score: scores.score[index],
        rank: scores.query_order.iter().position(|&i| i == index).unwrap_or(n),
        label: s.map.as_ref().map_or(0, |m| m[index]),
        answered: s.answer_of(index),
        truth: s.dataset.truth.as_ref().map(|t| t.labels[index]),
    }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphInfo {
    pub k: usize,
    pub num_eigs: usize,
    pub sigma: f64,
    pub sigma0: f64,
    pub krylov_dim: usize,
    pub max_residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Metrics {
    pub status: Status,
    pub answered: usize,
    pub propagations: usize,
    pub summary: Option<PropagationSummary>,
    /// `confusion[a][b]`: truth class `a + 1` predicted as `b + 1`.
    pub confusion: Option<Vec<Vec<u64>>>,
    pub graph: GraphInfo,
    pub timings: Diagnostics,
}

pub async fn metrics(State(state): State<Shared>, id: Result<Path<String>, PathRejection>) -> ApiResult<Metrics> {
    let handle = state.get(&path(id)?)?;
    let s = read(&handle);
    let confusion = match (&s.map, &s.dataset.truth) {
        (Some(y), Some(truth)) => Some(confusion_matrix(y, truth).map_err(|e| ApiError::internal(e.to_string()))?.counts),
        _ => None,
    };
    let m = &s.dataset.artifact.manifest;
    let diagnostics = s.model.diagnostics.clone();
    Ok(Json(Metrics {
        status: s.status,
        answered: s.answers().len(),
        propagations: s.propagations,
        summary: s.summary.clone(),
        confusion,
        graph: GraphInfo {
            k: m.k,
            num_eigs: m.num_eigs,
            sigma: m.sigma,
            sigma0: m.sigma0,
            krylov_dim: m.krylov_dim,
            max_residual: diagnostics.max_residual,
        },
        timings: diagnostics,
    }))
}

pub async fn no_route() -> ApiError {
    ApiError::not_found("no such route")
}
