use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use tower_http::cors::{AllowOrigin, CorsLayer};
use tower_http::services::ServeDir;

use crate::ops::{CompleteRequest, ErrorKind, InjectRequest, LensRequest, OpError, OpResult, Service};

pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl From<OpError> for ApiError {
    fn from(e: OpError) -> Self {
        let status = match e.kind {
            ErrorKind::BadRequest => StatusCode::BAD_REQUEST,
            ErrorKind::Unprocessable => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorKind::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self {
            status,
            message: e.message,
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self {
            status: e.status(),
            message: e.body_text(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Runs model work off the async executor.
async fn blocking<T, F>(service: Arc<Service>, f: F) -> ApiResult<T>
where
    T: Serialize + Send + 'static,
    F: FnOnce(&Service) -> OpResult<T> + Send + 'static,
{
    match tokio::task::spawn_blocking(move || f(&service)).await {
        Ok(result) => Ok(Json(result?)),
        Err(e) => Err(ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            message: format!("worker failed: {e}"),
        }),
    }
}

async fn model(State(service): State<Arc<Service>>) -> Json<memhop::ModelInfo> {
    Json(service.model_info())
}

async fn complete(
    State(service): State<Arc<Service>>,
    body: Result<Json<CompleteRequest>, JsonRejection>,
) -> ApiResult<crate::ops::CompleteResponse> {
    let Json(req) = body?;
    blocking(service, move |s| s.complete(&req)).await
}

async fn lens(
    State(service): State<Arc<Service>>,
    body: Result<Json<LensRequest>, JsonRejection>,
) -> ApiResult<memhop::LensReport> {
    let Json(req) = body?;
    blocking(service, move |s| s.lens(&req)).await
}

async fn inject(
    State(service): State<Arc<Service>>,
    body: Result<Json<InjectRequest>, JsonRejection>,
) -> ApiResult<crate::ops::InjectResponse> {
    let Json(req) = body?;
    blocking(service, move |s| s.inject(&req)).await
}

fn cors(origin: Option<&str>) -> CorsLayer {
    let allow = match origin.and_then(|o| HeaderValue::from_str(o).ok()) {
        Some(o) => AllowOrigin::exact(o),
        None => AllowOrigin::any(),
    };
    CorsLayer::new()
        .allow_origin(allow)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE])
}

/// `/api/*` routes, CORS and, when configured, the workbench's static files
/// under `/`.
pub fn router(service: Arc<Service>) -> Router {
    let config = service.config().clone();
    let mut app = Router::new()
        .route("/api/model", get(model))
        .route("/api/complete", post(complete))
        .route("/api/lens", post(lens))
        .route("/api/inject", post(inject))
        .with_state(service);
    if let Some(dir) = &config.static_dir {
        app = app.fallback_service(ServeDir::new(dir));
    }
    app.layer(cors(config.cors_origin.as_deref()))
}

pub async fn serve(service: Arc<Service>) -> std::io::Result<()> {
    let bind = service.config().bind.clone();
    let listener = tokio::net::TcpListener::bind(&bind).await?;
    log::info!("serving {} on http://{}", service.model_info().name, listener.local_addr()?);
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
