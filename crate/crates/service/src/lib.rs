//! HTTP service for interactive relighting: upload a scene once, then re-render it under
//! chosen light and albedo-edit parameters.
//!
//! Routes:
//! - `POST /scenes` (multipart, one part per scene layer) stores a scene and fits its light
//! - `GET /scenes/{id}` returns the scene's dimensions and fit
//! - `POST /scenes/{id}/render` returns a PNG; `?scale=` shrinks it, `?layer=` picks a stage

mod error;
mod multipart;
mod routes;
mod store;

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::DefaultBodyLimit;
use axum::http::HeaderValue;
use axum::routing::{get, post};
use axum::Router;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

pub use error::ApiError;
pub use multipart::encode_scene_upload;
pub use routes::{render, Layer, RenderQuery, RenderRequest};
pub use store::{SceneHandle, SceneStore, SceneSummary, Upload};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Scenes kept in memory before the least recently used is evicted.
    pub store_cap: usize,
    /// Directory where uploads are persisted and evicted scenes reloaded from.
    pub store_dir: Option<PathBuf>,
    /// Default long side for uploaded scenes.
    pub resolution: usize,
    /// Allowed browser origin; any origin when unset.
    pub cors_origin: Option<String>,
    pub body_limit: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            store_cap: 16,
            store_dir: None,
            resolution: ic_core::io::DEFAULT_RESOLUTION,
            cors_origin: None,
            body_limit: 512 * 1024 * 1024,
        }
    }
}

#[derive(Debug)]
pub struct AppState {
    pub store: SceneStore,
    pub config: ServiceConfig,
}

pub fn router(config: ServiceConfig) -> Router {
    let origin = match config.cors_origin.as_deref().map(HeaderValue::from_str) {
        Some(Ok(o)) => AllowOrigin::exact(o),
        Some(Err(_)) => {
            log::warn!("invalid CORS origin; allowing any origin");
            AllowOrigin::any()
        }
        None => AllowOrigin::any(),
    };
    let cors = CorsLayer::new()
        .allow_origin(origin)
        .allow_methods(Any)
        .allow_headers(Any);
    let state = Arc::new(AppState {
        store: SceneStore::new(config.store_cap, config.store_dir.clone()),
        config: config.clone(),
    });
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/scenes", post(routes::create_scene))
        .route("/scenes/{id}", get(routes::get_scene))
        .route("/scenes/{id}/render", post(routes::render_scene))
        .layer(DefaultBodyLimit::max(config.body_limit))
        .layer(cors)
        .with_state(state)
}
