use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Multipart, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use ic_core::io::{encode_srgb_png, SCENE_PARTS};
use ic_core::lighting::LightSpec;
use ic_core::raster::{fit_long_side, Image};
use ic_core::reshade::{harmonize, Refiner};
use ic_core::{intrinsic, EditSpec, HarmonizeOptions, IdentityRefiner, SmoothRefiner};
use serde::Deserialize;

use crate::error::ApiError;
use crate::store::{SceneHandle, Upload};
use crate::AppState;

pub async fn create_scene(State(state): State<Arc<AppState>>, mut multipart: Multipart) -> Result<Response, ApiError> {
    let mut upload = Upload {
        gamma: intrinsic::DEFAULT_GAMMA,
        resolution: state.config.resolution,
        ..Upload::default()
    };
    while let Some(field) = multipart
        .next_field()
        .await
        .map_err(|e| ApiError::bad(format!("malformed multipart body: {e}")))?
    {
        let name = field.name().unwrap_or_default().to_string();
        let bytes = field
            .bytes()
            .await
            .map_err(|e| ApiError::field(&name, format!("cannot read part `{name}`: {e}")))?;
        match name.as_str() {
            "gamma" | "resolution" => {
                let text = String::from_utf8_lossy(&bytes);
                let value: f64 = text
                    .trim()
                    .parse()
                    .map_err(|_| ApiError::field(&name, format!("`{name}` must be a number, got `{text}`")))?;
                if !(value.is_finite() && value > 0.0) {
                    return Err(ApiError::field(&name, format!("`{name}` must be positive")));
                }
                if name == "gamma" {
                    upload.gamma = value;
                } else {
                    upload.resolution = value as usize;
                }
            }
            n if SCENE_PARTS.contains(&n) => {
                upload.parts.insert(name, bytes.to_vec());
            }
            _ => log::warn!("ignoring unexpected part `{name}`"),
        }
    }
    let id = uuid::Uuid::new_v4().simple().to_string();
    let created = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let build = upload.clone();
    let handle = tokio::task::spawn_blocking(move || build.build(id, created))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))??;
    let handle = state.store.insert(handle, &upload);
    let mut body = serde_json::to_value(handle.summary()).map_err(|e| ApiError::Internal(e.to_string()))?;
    let status = if handle.fit.degenerate {
        body["error"] = "degenerate light fit: background normals do not span enough directions".into();
        StatusCode::UNPROCESSABLE_ENTITY
    } else {
        StatusCode::CREATED
    };
    Ok((status, Json(body)).into_response())
}

pub async fn get_scene(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let store = state.clone();
    let handle = tokio::task::spawn_blocking(move || store.store.get(&id))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))??;
    Ok(Json(handle.summary()).into_response())
}

/// Layer returned by a render.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Composite,
    Naive,
    Albedo,
    LambertianShading,
    RefinedShading,
}

#[derive(Debug, Deserialize)]
pub struct RenderQuery {
    pub scale: Option<f64>,
    pub layer: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RenderBody {
    #[serde(default)]
    light: Option<serde_json::Value>,
    #[serde(default)]
    edits: Option<serde_json::Value>,
    #[serde(default)]
    refiner: Option<String>,
}

/// A validated render request.
#[derive(Debug, Clone)]
pub struct RenderRequest {
    pub light: Option<ic_core::Light>,
    pub edits: Option<EditSpec>,
    pub smooth: bool,
    pub layer: Layer,
    pub scale: f64,
}

impl RenderRequest {
    pub fn parse(body: &[u8], query: &RenderQuery) -> Result<Self, ApiError> {
        let body: RenderBody = if body.iter().all(u8::is_ascii_whitespace) {
            RenderBody {
                light: None,
                edits: None,
                refiner: None,
            }
        } else {
            serde_json::from_slice(body).map_err(|e| ApiError::bad(format!("invalid render request: {e}")))?
        };
        let light = body
            .light
            .map(|v| {
                let spec: LightSpec<f64> = serde_json::from_value(v).map_err(|_| {
                    ApiError::field(
                        "light",
                        "light must be {lx, ly, lz, c} or {azimuth, elevation, intensity, ambient}",
                    )
                })?;
                spec.to_model().map_err(|e| ApiError::from_core("light", e))
            })
            .transpose()?;
        let edits = body
            .edits
            .map(|v| {
                let spec: EditSpec =
                    serde_json::from_value(v).map_err(|e| ApiError::field("edits", format!("invalid edits: {e}")))?;
                spec.params.validate().map_err(|e| ApiError::from_core("edits", e))?;
                Ok::<_, ApiError>(spec)
            })
            .transpose()?;
        let smooth = match body.refiner.as_deref() {
            None | Some("identity") => false,
            Some("smooth") => true,
            Some(other) => {
                return Err(ApiError::field(
                    "refiner",
                    format!("unknown refiner `{other}` (expected identity or smooth)"),
                ))
            }
        };
        let layer = match &query.layer {
            None => Layer::Composite,
            Some(l) => serde_json::from_value(serde_json::Value::String(l.clone())).map_err(|_| {
                ApiError::field(
                    "layer",
                    format!("unknown layer `{l}` (expected composite, naive, albedo, lambertian_shading or refined_shading)"),
                )
            })?,
        };
        let scale = query.scale.unwrap_or(1.0);
        if !(scale > 0.0 && scale <= 1.0) {
            return Err(ApiError::field(
                "scale",
                format!("scale must be in (0, 1], got {scale}"),
            ));
        }
        Ok(Self {
            light,
            edits,
            smooth,
            layer,
            scale,
        })
    }
}

/// Renders a scene to PNG bytes. A pure function of its arguments.
pub fn render(handle: &SceneHandle, req: &RenderRequest) -> Result<Vec<u8>, ApiError> {
    let scene = &handle.scene;
    let image = if req.layer == Layer::Naive {
        intrinsic::composite(&scene.fg_image, &scene.bg_image, &scene.alpha)
            .map_err(|e| ApiError::Internal(e.to_string()))?
    } else {
        let refiner: Box<dyn Refiner<f64>> = if req.smooth {
            Box::new(SmoothRefiner::default())
        } else {
            Box::new(IdentityRefiner)
        };
        let opts = HarmonizeOptions {
            light: Some(req.light.unwrap_or(handle.fit.light)),
            edits: req.edits,
            ..HarmonizeOptions::default()
        };
        let out = harmonize(scene, refiner.as_ref(), &opts).map_err(|e| ApiError::Internal(e.to_string()))?;
        match req.layer {
            Layer::Composite | Layer::Naive => out.composite,
            Layer::Albedo => out.albedo,
            Layer::LambertianShading => out.lambertian_shading,
            Layer::RefinedShading => out.refined_shading,
        }
    };
    let image = scaled(image, req.scale);
    encode_srgb_png(&image, handle.gamma).map_err(|e| ApiError::Internal(e.to_string()))
}

fn scaled(image: Image<f64>, scale: f64) -> Image<f64> {
    if scale >= 1.0 {
        return image;
    }
    let long = (image.height().max(image.width()) as f64 * scale).round().max(1.0) as usize;
    let (h, w) = fit_long_side(image.height(), image.width(), long);
    image.resize_bilinear(h, w)
}

pub async fn render_scene(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(query): Query<RenderQuery>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let store = state.clone();
    let png = tokio::task::spawn_blocking(move || {
        let handle = store.store.get(&id)?;
        let req = RenderRequest::parse(&body, &query)?;
        render(&handle, &req)
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))??;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}
