use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use ic_core::io::{assemble_scene, decode_map, SCENE_PARTS};
use ic_core::lighting::{fit_light_constrained, LightSpec};
use ic_core::{FitOptions, FitReport, LightAngles, Scene};
use indexmap::IndexMap;
use serde::Serialize;

use crate::error::ApiError;

/// An uploaded scene with its background light fit. Never mutated after creation.
#[derive(Debug)]
pub struct SceneHandle {
    pub id: String,
    pub scene: Scene,
    pub fit: FitReport,
    pub gamma: f64,
    pub created: u64,
}

#[derive(Debug, Serialize)]
pub struct Dimensions {
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Serialize)]
pub struct SceneSummary {
    pub id: String,
    pub dimensions: Dimensions,
    pub fitted_light: LightSpec<f64>,
    pub fitted_angles: LightAngles,
    pub residual: f64,
    pub degenerate: bool,
    pub fit: FitReport,
    pub created: u64,
}

impl SceneHandle {
    pub fn summary(&self) -> SceneSummary {
        SceneSummary {
            id: self.id.clone(),
            dimensions: Dimensions {
                height: self.scene.height(),
                width: self.scene.width(),
            },
            fitted_light: self.fit.light.into(),
            fitted_angles: self.fit.light.to_angles(),
            residual: self.fit.residual_mse,
            degenerate: self.fit.degenerate,
            fit: self.fit.clone(),
            created: self.created,
        }
    }
}

/// Raw uploaded parts plus the scalar settings that accompany them.
#[derive(Debug, Clone, Default)]
pub struct Upload {
    pub parts: HashMap<String, Vec<u8>>,
    pub gamma: f64,
    pub resolution: usize,
}

impl Upload {
    /// Decodes, validates and fits a scene.
    pub fn build(&self, id: String, created: u64) -> Result<SceneHandle, ApiError> {
        if let Some(missing) = SCENE_PARTS.iter().find(|p| !self.parts.contains_key(**p)) {
            return Err(ApiError::field(*missing, format!("missing part `{missing}`")));
        }
        let mut current = "";
        let scene = assemble_scene(
            |part| {
                current = part;
                decode_map(&self.parts[part])
            },
            self.gamma,
            self.resolution,
        )
        .map_err(|e| ApiError::field(current, format!("part `{current}`: {e}")))?;
        let fit = fit_light_constrained(&scene.bg_normals, &scene.bg_shading, None, &FitOptions::default())
            .map_err(|e| ApiError::field("bg_normals", format!("light fit: {e}")))?;
        Ok(SceneHandle {
            id,
            scene,
            fit,
            gamma: self.gamma,
            created,
        })
    }

    fn save(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        for (name, bytes) in &self.parts {
            fs::write(dir.join(name), bytes)?;
        }
        let settings = serde_json::json!({ "gamma": self.gamma, "resolution": self.resolution });
        fs::write(dir.join("settings.json"), settings.to_string())
    }

    fn load(dir: &Path) -> std::io::Result<Self> {
        let settings: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("settings.json"))?)?;
        let mut parts = HashMap::new();
        for name in SCENE_PARTS {
            parts.insert(name.to_string(), fs::read(dir.join(name))?);
        }
        Ok(Self {
            parts,
            gamma: settings["gamma"].as_f64().unwrap_or(ic_core::intrinsic::DEFAULT_GAMMA),
            resolution: settings["resolution"].as_u64().unwrap_or(1024) as usize,
        })
    }
}

/// Scenes by id in least-recently-used order, capped in size. With a backing directory,
/// uploads are also written to disk and evicted scenes are rebuilt on demand.
#[derive(Debug)]
pub struct SceneStore {
    scenes: Mutex<IndexMap<String, Arc<SceneHandle>>>,
    cap: usize,
    dir: Option<PathBuf>,
}

impl SceneStore {
    pub fn new(cap: usize, dir: Option<PathBuf>) -> Self {
        Self {
            scenes: Mutex::new(IndexMap::new()),
            cap: cap.max(1),
            dir,
        }
    }

    fn valid_id(id: &str) -> bool {
        !id.is_empty() && id.chars().all(|c| c.is_ascii_hexdigit() || c == '-')
    }

    pub fn insert(&self, handle: SceneHandle, upload: &Upload) -> Arc<SceneHandle> {
        if let Some(dir) = &self.dir {
            if let Err(e) = upload.save(&dir.join(&handle.id)) {
                log::warn!("cannot persist scene {}: {e}", handle.id);
            }
        }
        self.remember(Arc::new(handle))
    }

    fn remember(&self, handle: Arc<SceneHandle>) -> Arc<SceneHandle> {
        let mut scenes = self.scenes.lock().expect("scene store lock");
        scenes.shift_remove(&handle.id);
        scenes.insert(handle.id.clone(), handle.clone());
        while scenes.len() > self.cap {
            if let Some((evicted, _)) = scenes.shift_remove_index(0) {
                log::info!("evicted scene {evicted}");
            }
        }
        handle
    }

    pub fn get(&self, id: &str) -> Result<Arc<SceneHandle>, ApiError> {
        {
            let mut scenes = self.scenes.lock().expect("scene store lock");
            if let Some(index) = scenes.get_index_of(id) {
                let last = scenes.len() - 1;
                scenes.move_index(index, last);
                return Ok(scenes[last].clone());
            }
        }
        let missing = || ApiError::NotFound(id.to_string());
        let dir = match &self.dir {
            Some(d) if Self::valid_id(id) => d.join(id),
            _ => return Err(missing()),
        };
        if !dir.is_dir() {
            return Err(missing());
        }
        let upload = Upload::load(&dir).map_err(|e| ApiError::Internal(format!("cannot reload scene {id}: {e}")))?;
        let created = fs::metadata(dir.join("settings.json"))
            .and_then(|m| m.modified())
            .ok()
            .and_then(|t| t.duration_since(std::time::UNIX_EPOCH).ok())
            .map_or(0, |d| d.as_secs());
        let handle = upload.build(id.to_string(), created)?;
        Ok(self.remember(Arc::new(handle)))
    }

    pub fn len(&self) -> usize {
        self.scenes.lock().expect("scene store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
