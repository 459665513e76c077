use std::fs;
use std::path::{Path, PathBuf};

use ic_core::edits::{self, EditFitOptions};
use ic_core::io::{self, CorpusEntry, SceneManifest};
use ic_core::lighting::{self, LightConstraint, LightSpec};
use ic_core::reshade::{self, Refiner, DEPTH_CONVENTION};
use ic_core::HarmonizeOptions;
use ic_core::{EditSpec, ExternalRefiner, FitOptions, FitReport, IdentityRefiner, Light, Scene, SmoothRefiner};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::error::{CliError, StageContext};

pub struct Globals {
    pub gamma: Option<f64>,
    pub resolution: Option<usize>,
}

impl Globals {
    fn gamma(&self) -> f64 {
        self.gamma.unwrap_or(ic_core::intrinsic::DEFAULT_GAMMA)
    }

    fn resolution(&self) -> usize {
        self.resolution.unwrap_or(io::DEFAULT_RESOLUTION)
    }

    fn load_scene(&self, manifest: &Path) -> Result<(Scene, f64), CliError> {
        let mut m = SceneManifest::read(manifest).stage("manifest")?;
        if let Some(g) = self.gamma {
            m.gamma = g;
        }
        if let Some(r) = self.resolution {
            m.resolution = r;
        }
        let scene = m.load().stage("scene")?;
        Ok((scene, m.gamma))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FitFlags {
    pub lstsq: bool,
    pub octant: bool,
    pub allow_degenerate: bool,
}

impl FitFlags {
    fn options(&self) -> FitOptions {
        FitOptions {
            constraint: if self.octant {
                LightConstraint::Octant
            } else {
                LightConstraint::Hemisphere
            },
            ..FitOptions::default()
        }
    }

    fn fit(&self, scene: &Scene) -> Result<FitReport, CliError> {
        let opts = self.options();
        let report = if self.lstsq {
            lighting::fit_light_lstsq(&scene.bg_normals, &scene.bg_shading, None, &opts)
        } else {
            lighting::fit_light_constrained(&scene.bg_normals, &scene.bg_shading, None, &opts)
        }
        .stage("light fit")?;
        Ok(report)
    }

    fn check(&self, report: &FitReport) -> Result<(), CliError> {
        if report.degenerate && !self.allow_degenerate {
            return Err(CliError::Degenerate {
                condition_number: report.condition_number,
            });
        }
        if report.degenerate {
            log::warn!("accepting degenerate light fit");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RefinerChoice {
    Identity,
    Smooth,
    External(String),
}

pub fn parse_refiner(s: &str) -> Result<RefinerChoice, String> {
    match s {
        "identity" => Ok(RefinerChoice::Identity),
        "smooth" => Ok(RefinerChoice::Smooth),
        _ => match s.strip_prefix("external:") {
            Some(cmd) if !cmd.trim().is_empty() => Ok(RefinerChoice::External(cmd.to_string())),
            _ => Err(format!(
                "unknown refiner `{s}` (expected identity, smooth or external:<command>)"
            )),
        },
    }
}

impl RefinerChoice {
    fn build(&self) -> Result<Box<dyn Refiner<f64>>, CliError> {
        Ok(match self {
            RefinerChoice::Identity => Box::new(IdentityRefiner),
            RefinerChoice::Smooth => Box::new(SmoothRefiner::default()),
            RefinerChoice::External(cmd) => Box::new(ExternalRefiner::from_command(cmd).stage("refiner")?),
        })
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(ic_core::Error::from)?;
    text.push('\n');
    fs::write(path, text).map_err(ic_core::Error::from)?;
    Ok(())
}

/// Reads a JSON argument given inline or as a path to a file.
fn json_arg<T: serde::de::DeserializeOwned>(arg: &str, what: &str) -> Result<T, CliError> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        fs::read_to_string(arg).map_err(|e| CliError::Usage(format!("cannot read {what} file `{arg}`: {e}")))?
    };
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("invalid {what} JSON: {e}")))
}

pub fn fit_light(globals: &Globals, manifest: &Path, flags: &FitFlags, out: Option<&Path>) -> Result<(), CliError> {
    let (scene, _) = globals.load_scene(manifest)?;
    let report = flags.fit(&scene)?;
    match out {
        Some(path) => write_json(path, &report)?,
        None => println!(
            "{}",
            serde_json::to_string_pretty(&report).map_err(ic_core::Error::from)?
        ),
    }
    flags.check(&report)
}

pub struct HarmonizeArgs {
    pub manifest: PathBuf,
    pub fit: FitFlags,
    pub out: PathBuf,
    pub light: Option<String>,
    pub edits: Option<String>,
    pub refiner: RefinerChoice,
    pub intermediates: bool,
}

pub fn harmonize(globals: &Globals, args: &HarmonizeArgs) -> Result<(), CliError> {
    let (scene, gamma) = globals.load_scene(&args.manifest)?;
    fs::create_dir_all(&args.out).map_err(ic_core::Error::from)?;

    let (light, report): (Light, Option<FitReport>) = match &args.light {
        Some(arg) => {
            let spec: LightSpec<f64> = json_arg(arg, "light")?;
            (spec.to_model().stage("light override")?, None)
        }
        None => {
            let report = args.fit.fit(&scene)?;
            args.fit.check(&report)?;
            (report.light, Some(report))
        }
    };

    let edits: Option<EditSpec> = match args.edits.as_deref() {
        None => None,
        Some("stats") => {
            let target =
                edits::statistics_target(&scene.fg_albedo, &scene.bg_albedo, &scene.alpha).stage("albedo edits")?;
            let fit = edits::fit_edit_params(
                &scene.fg_albedo,
                &target,
                &scene.alpha,
                Default::default(),
                &EditFitOptions::default(),
            )
            .stage("albedo edits")?;
            log::info!("statistics-matching edits reach masked MSE {:.3e}", fit.masked_mse);
            Some(EditSpec {
                params: fit.params,
                active: fit.active,
            })
        }
        Some(arg) => {
            let spec: EditSpec = json_arg(arg, "edits")?;
            spec.params.validate().stage("albedo edits")?;
            Some(spec)
        }
    };

    let refiner = args.refiner.build()?;
    let opts = HarmonizeOptions {
        light: Some(light),
        edits,
        fit: args.fit.options(),
    };
    let result = reshade::harmonize(&scene, refiner.as_ref(), &opts).stage("harmonize")?;

    let png = io::encode_srgb_png(&result.composite, gamma).stage("composite")?;
    fs::write(args.out.join("composite.png"), png).map_err(ic_core::Error::from)?;
    write_json(
        &args.out.join("light.json"),
        &json!({
            "light": LightSpec::from(light),
            "angles": light.to_angles(),
            "fit": report,
        }),
    )?;
    if args.intermediates {
        io::write_pfm(&args.out.join("harmonized_albedo.pfm"), &result.albedo).stage("intermediates")?;
        io::write_pfm(&args.out.join("lambertian_shading.pfm"), &result.lambertian_shading).stage("intermediates")?;
        io::write_pfm(&args.out.join("refined_shading.pfm"), &result.refined_shading).stage("intermediates")?;
        io::write_pfm(&args.out.join("composite_linear.pfm"), &result.composite).stage("intermediates")?;
        if let Some(spec) = &edits {
            write_json(&args.out.join("edits.json"), spec)?;
        }
    }
    Ok(())
}

fn entry_seed(seed: u64, id: &str) -> u64 {
    // FNV-1a over the entry name keeps per-entry seeds stable when entries are added.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^ seed
}

fn gen_pair(dir: &Path, out: &Path, id: &str, seed: u64, gamma: f64, resolution: usize) -> ic_core::Result<()> {
    let entry = CorpusEntry::<f64>::load(dir, gamma, resolution)?;
    let pair = reshade::generate_pair(
        &entry.image,
        &entry.mask,
        &entry.albedo,
        &entry.shading,
        &entry.normals,
        &entry.depth,
        &FitOptions::default(),
    )?;
    let seed = entry_seed(seed, id);
    let (params, active) = edits::sample_random_edits::<f64>(seed);
    let edited = edits::apply_edit_sequence(&entry.albedo, &entry.mask, &params, active)?;

    let target = out.join(id);
    fs::create_dir_all(&target)?;
    io::write_refiner_input(&target, &pair.input)?;
    io::write_pfm(&target.join("gt_shading.pfm"), &pair.gt_shading)?;
    io::write_pfm(&target.join("albedo.pfm"), &pair.albedo)?;
    io::write_pfm(&target.join("edited_albedo.pfm"), &edited)?;
    io::write_png(&target.join("mask.png"), &pair.mask.to_image())?;
    let edit = EditSpec { params, active };
    let meta = json!({
        "id": id,
        "light": LightSpec::from(pair.fit.light),
        "residual_mse": pair.fit.residual_mse,
        "degenerate": pair.fit.degenerate,
        "condition_number": pair.fit.condition_number,
        "pixels_used": pair.fit.pixels_used,
        "depth_convention": DEPTH_CONVENTION,
        "seed": seed,
        "edit": edit,
    });
    let mut text = serde_json::to_string_pretty(&meta)?;
    text.push('\n');
    fs::write(target.join("meta.json"), text)?;
    Ok(())
}

pub fn gen_pairs(globals: &Globals, corpus: &Path, out: &Path, seed: u64) -> Result<(), CliError> {
    let mut entries: Vec<(String, PathBuf)> = fs::read_dir(corpus)
        .map_err(|e| CliError::Core(std::io::Error::new(e.kind(), format!("{}: {e}", corpus.display())).into()))?
        .filter_map(|d| d.ok())
        .filter(|d| d.path().is_dir())
        .map(|d| (d.file_name().to_string_lossy().into_owned(), d.path()))
        .collect();
    entries.sort();
    fs::create_dir_all(out).map_err(ic_core::Error::from)?;
    if entries.is_empty() {
        log::warn!("corpus {} has no entries", corpus.display());
        eprintln!("warning: corpus {} has no entries", corpus.display());
        return Ok(());
    }
    let (gamma, resolution) = (globals.gamma(), globals.resolution());
    let results: Vec<(String, ic_core::Result<()>)> = entries
        .par_iter()
        .map(|(id, dir)| (id.clone(), gen_pair(dir, out, id, seed, gamma, resolution)))
        .collect();
    let mut failed = 0;
    let mut numerical = false;
    for (id, r) in &results {
        if let Err(e) = r {
            failed += 1;
            numerical |= e.is_numerical();
            log::error!("entry {id}: {e}");
            eprintln!("entry {id} failed: {e}");
        }
    }
    if failed == results.len() {
        return Err(CliError::AllFailed {
            count: failed,
            numerical,
        });
    }
    log::info!("wrote {} pairs ({failed} failed)", results.len() - failed);
    Ok(())
}

pub fn bt_rank(csv: &Path, json: bool, smoothing: bool) -> Result<(), CliError> {
    let file = fs::File::open(csv)
        .map_err(|e| CliError::Core(std::io::Error::new(e.kind(), format!("{}: {e}", csv.display())).into()))?;
    let rows = ic_core::read_responses_csv(file)?;
    let tally = ic_core::ingest_responses(rows)?;
    let opts = ic_core::BtOptions::<f64> {
        smoothing,
        ..Default::default()
    };
    let scores = ic_core::bt_fit(&tally, &opts)?;
    let table = ic_core::report(&scores);
    if json {
        println!(
            "{}",
            serde_json::to_string_pretty(&table).map_err(ic_core::Error::from)?
        );
    } else {
        print!("{table}");
    }
    Ok(())
}
