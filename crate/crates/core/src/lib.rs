//! Intrinsic-domain image compositing.
//!
//! A foreground is composited onto a background by working on albedo and shading
//! separately: the background's lighting is fitted with a Lambertian model from its normals
//! and shading, the foreground is re-rendered under that light, a refiner turns the
//! Lambertian composite shading into the final shading, and albedo edits harmonize colour.
//! Pairwise user-study responses are ranked with a Bradley-Terry model.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases at the crate
//! root fix it to `f64`.

pub mod bt;
pub mod edits;
pub mod error;
pub mod intrinsic;
pub mod io;
pub mod lighting;
mod linalg;
pub mod optim;
pub mod raster;
pub mod reshade;
pub mod scalar;
pub mod synthetic;

pub use bt::{bt_fit, ingest_responses, read_responses_csv, report, BtOptions, BtScores, PairwiseTally, RankingTable};
pub use edits::{apply_edit_sequence, fit_edit_params, EditKind, EditOrder, EditSet};
pub use error::{Error, Result};
pub use lighting::{fit_light_constrained, fit_light_lstsq, render_lambertian, LightConstraint};
pub use raster::fit_long_side;
pub use reshade::{harmonize, ExternalRefiner, IdentityRefiner, Refiner, SmoothRefiner};
pub use scalar::Scalar;

pub type FloatImage = raster::Image<f64>;
pub type Mask = raster::AlphaMask<f64>;
pub type Depth = raster::DepthMap<f64>;
pub type Normals = lighting::NormalMap<f64>;
pub type Light = lighting::LightModel<f64>;
pub type LightAngles = lighting::LightAngles<f64>;
pub type FitOptions = lighting::FitOptions<f64>;
pub type FitReport = lighting::FitReport<f64>;
pub type EditParams = edits::EditParams<f64>;
pub type EditSpec = edits::EditSpec<f64>;
pub type Scene = reshade::Scene<f64>;
pub type RefinerInput = reshade::RefinerInput<f64>;
pub type HarmonizeOptions = reshade::HarmonizeOptions<f64>;
pub type Harmonized = reshade::Harmonized<f64>;
