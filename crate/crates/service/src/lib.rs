//! HTTP backend for interactive annotation: frame listing and enhanced
//! views, click-to-grow masks and an append-only annotation store.

pub mod store;
pub mod views;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use pamg_core::api::{run_grow, ErrorBody, GrowRequest, GrowResponse, SCHEMA_VERSION};
use pamg_core::dataset::Manifest;
use pamg_core::raster::SourceImage;
use pamg_core::{Error, Normalization, PamgConfig};

use store::{AnnotationRecord, NewAnnotation, Store, StoreError};
use views::{Crop, View};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const LOG_FILE: &str = "annotations.jsonl";
pub const EXPORT_DIR: &str = "exports";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub id: String,
    pub width: usize,
    pub height: usize,
    /// Position in the frame sequence.
    pub position: usize,
    #[serde(skip)]
    pub path: PathBuf,
}

/// Frames of a dataset root, from `manifest.jsonl` when present, otherwise
/// every PNG/PGM in the root sorted by name.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub root: PathBuf,
    pub images: Vec<ImageInfo>,
}

impl Dataset {
    pub fn open(root: impl AsRef<Path>) -> pamg_core::Result<Self> {
        let root = root.as_ref().to_owned();
        let manifest_path = root.join(MANIFEST_FILE);
        let manifest = if manifest_path.is_file() {
            Manifest::read(&manifest_path)?
        } else {
            Manifest::scan(&root)?
        };
        let mut images = Vec::with_capacity(manifest.records.len());
        for (position, r) in manifest.records.iter().enumerate() {
            let (w, h) = image::image_dimensions(&r.image).map_err(Error::Decode)?;
            images.push(ImageInfo {
                id: r.id()?,
                width: w as usize,
                height: h as usize,
                position,
                path: r.image.clone(),
            });
        }
        Ok(Self { root, images })
    }

    pub fn get(&self, id: &str) -> Option<&ImageInfo> {
        self.images.iter().find(|i| i.id == id)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ServiceConfig {
    pub pamg: PamgConfig,
    pub normalization: Normalization,
}

pub struct AppState {
    pub dataset: Dataset,
    pub config: ServiceConfig,
    /// Single writer for the annotation log.
    pub store: Mutex<Store>,
}

impl AppState {
    /// Dataset at `root` with its annotation log at `root/annotations.jsonl`.
    pub fn open(root: impl AsRef<Path>, config: ServiceConfig) -> Result<Self, String> {
        let dataset = Dataset::open(root.as_ref()).map_err(|e| e.to_string())?;
        let store = Store::open(root.as_ref().join(LOG_FILE)).map_err(|e| e.to_string())?;
        Ok(Self {
            dataset,
            config,
            store: Mutex::new(store),
        })
    }
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, error: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                v: SCHEMA_VERSION,
                error: error.into(),
                message: message.into(),
            },
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn unknown_image(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown_image", format!("no image with id {id:?}"))
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::OutOfBounds { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            Error::NoEnergyPeak => StatusCode::CONFLICT,
            Error::InvalidConfig(_)
            | Error::MalformedRle(_)
            | Error::DimensionMismatch(..)
            | Error::Json(_)
            | Error::Contract(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self {
            status,
            body: ErrorBody::of(&e),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let (status, tag) = match &e {
            StoreError::Conflict { .. } => (StatusCode::CONFLICT, "write_conflict"),
            StoreError::Transition { .. } => (StatusCode::CONFLICT, "invalid_transition"),
            StoreError::Corrupt { .. } | StoreError::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "store"),
        };
        Self::new(status, tag, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_json<T: serde::de::DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

fn lock(state: &AppState) -> std::sync::MutexGuard<'_, Store> {
    state.store.lock().unwrap_or_else(|p| p.into_inner())
}

#[derive(Serialize)]
struct ImageList<'a> {
    v: u32,
    images: &'a [ImageInfo],
}

async fn list_images(State(s): State<Arc<AppState>>) -> Response {
    Json(ImageList {
        v: SCHEMA_VERSION,
        images: &s.dataset.images,
    })
    .into_response()
}

#[derive(Deserialize)]
struct ViewQuery {
    view: Option<String>,
    crop: Option<String>,
}

async fn get_image(
    State(s): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<ViewQuery>,
) -> ApiResult<Response> {
    let info = s.dataset.get(&id).ok_or_else(|| ApiError::unknown_image(&id))?;
    let view = match q.view.as_deref() {
        None => View::Raw,
        Some(v) => v.parse().map_err(ApiError::bad_request)?,
    };
    let crop = match q.crop.as_deref() {
        None => None,
        Some(c) => {
            let c: Crop = c.parse().map_err(ApiError::bad_request)?;
            Some(
                views::clip_crop(c, info.width, info.height)
                    .ok_or_else(|| ApiError::bad_request("crop lies outside the image"))?,
            )
        }
    };
    let path = info.path.clone();
    let png = tokio::task::spawn_blocking(move || -> pamg_core::Result<Vec<u8>> {
        views::render(&SourceImage::read(&path)?, view, crop)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

#[derive(Deserialize)]
struct GrowBody {
    image_id: String,
    #[serde(flatten)]
    request: GrowRequest,
}

async fn grow(State(s): State<Arc<AppState>>, body: Bytes) -> ApiResult<Json<GrowResponse>> {
    let b: GrowBody = parse_json(&body)?;
    let info = s.dataset.get(&b.image_id).ok_or_else(|| ApiError::unknown_image(&b.image_id))?;
    let path = info.path.clone();
    let cfg = s.config;
    let out = tokio::task::spawn_blocking(move || -> pamg_core::Result<GrowResponse> {
        let raster = pamg_core::load_raster(&path, cfg.normalization)?;
        Ok(run_grow(&raster, &b.request, &cfg.pamg)?.response)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(Json(out))
}

async fn post_annotation(State(s): State<Arc<AppState>>, body: Bytes) -> ApiResult<Json<AnnotationRecord>> {
    let new: NewAnnotation = parse_json(&body)?;
    let info = s.dataset.get(&new.image_id).ok_or_else(|| ApiError::unknown_image(&new.image_id))?;
    if (new.mask.width(), new.mask.height()) != (info.width, info.height) {
        return Err(Error::DimensionMismatch(new.mask.width(), new.mask.height(), info.width, info.height).into());
    }
    Ok(Json(lock(&s).append(new)?))
}

#[derive(Deserialize)]
struct AnnotationQuery {
    image_id: Option<String>,
}

#[derive(Serialize, Deserialize)]
pub struct AnnotationList {
    pub v: u32,
    pub records: Vec<AnnotationRecord>,
}

async fn get_annotations(State(s): State<Arc<AppState>>, Query(q): Query<AnnotationQuery>) -> Json<AnnotationList> {
    Json(AnnotationList {
        v: SCHEMA_VERSION,
        records: lock(&s).records(q.image_id.as_deref()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExportFormat {
    #[serde(rename = "png-dir")]
    PngDir,
    #[serde(rename = "rle-jsonl")]
    RleJsonl,
}

#[derive(Deserialize)]
struct ExportBody {
    format: ExportFormat,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ExportResult {
    pub v: u32,
    pub format: ExportFormat,
    pub path: PathBuf,
    pub count: usize,
}

pub fn records_jsonl(records: &[AnnotationRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
        .collect()
}

/// Writes the latest records under `dir`: either `{image}_{target}.png`
/// plus `manifest.jsonl`, or a single `annotations.jsonl`.
pub fn export_records(records: &[AnnotationRecord], format: ExportFormat, dir: &Path) -> pamg_core::Result<PathBuf> {
    let io = |p: &Path, e| Error::io(p, e);
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    match format {
        ExportFormat::PngDir => {
            for r in records {
                let p = dir.join(format!("{}_{}.png", r.image_id, r.target_id));
                r.mask.write_png(&p)?;
            }
            let p = dir.join(MANIFEST_FILE);
            std::fs::write(&p, records_jsonl(records)).map_err(|e| io(&p, e))?;
            Ok(dir.to_owned())
        }
        ExportFormat::RleJsonl => {
            let p = dir.join(LOG_FILE);
            std::fs::write(&p, records_jsonl(records)).map_err(|e| io(&p, e))?;
            Ok(p)
        }
    }
}

async fn export(State(s): State<Arc<AppState>>, body: Bytes) -> ApiResult<Json<ExportResult>> {
    let b: ExportBody = parse_json(&body)?;
    let (records, seq) = {
        let st = lock(&s);
        (st.records(None), st.len())
    };
    let tag = match b.format {
        ExportFormat::PngDir => "png-dir",
        ExportFormat::RleJsonl => "rle-jsonl",
    };
    let dir = s.dataset.root.join(EXPORT_DIR).join(format!("{tag}-{seq}"));
    let count = records.len();
    let path = tokio::task::spawn_blocking(move || export_records(&records, b.format, &dir))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(Json(ExportResult {
        v: SCHEMA_VERSION,
        format: b.format,
        path,
        count,
    }))
}

#[derive(Deserialize)]
struct ImportBody {
    path: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ImportResult {
    pub v: u32,
    pub imported: usize,
    pub skipped: usize,
}

/// Imports an `rle-jsonl` export (the file, or a `png-dir` manifest).
async fn import(State(s): State<Arc<AppState>>, body: Bytes) -> ApiResult<Json<ImportResult>> {
    let b: ImportBody = parse_json(&body)?;
    let path = if b.path.is_dir() { b.path.join(MANIFEST_FILE) } else { b.path };
    let text = std::fs::read_to_string(&path).map_err(|e| ApiError::from(Error::io(&path, e)))?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let r: AnnotationRecord = serde_json::from_str(line)
            .map_err(|e| ApiError::bad_request(format!("{} line {}: {e}", path.display(), i + 1)))?;
        let info = s.dataset.get(&r.image_id).ok_or_else(|| ApiError::unknown_image(&r.image_id))?;
        if (r.mask.width(), r.mask.height()) != (info.width, info.height) {
            return Err(Error::DimensionMismatch(r.mask.width(), r.mask.height(), info.width, info.height).into());
        }
        records.push(r);
    }
    let mut st = lock(&s);
    let (mut imported, mut skipped) = (0, 0);
    for r in records {
        if st.import(r)? {
            imported += 1;
        } else {
            skipped += 1;
        }
    }
    Ok(Json(ImportResult {
        v: SCHEMA_VERSION,
        imported,
        skipped,
    }))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/images", get(list_images))
        .route("/images/{id}", get(get_image))
        .route("/grow", post(grow))
        .route("/annotations", post(post_annotation).get(get_annotations))
        .route("/export", post(export))
        .route("/import", post(import))
        .layer(tower_http::cors::CorsLayer::permissive())
        .with_state(state)
}

/// Serves until Ctrl-C.
pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(state)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
