//! Foreground re-shading: Lambertian composite shading, the 9-channel refiner input, the
//! training loss suite, self-supervised pair generation and the end-to-end harmonization
//! pipeline.

use std::path::Path;
use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::edits::{apply_edit_sequence, EditSpec};
use crate::error::{Error, Result};
use crate::intrinsic::{
    composite, downsample_half, downsample_half_adjoint, gradient_xy, gradient_xy_adjoint, reconstruct,
};
use crate::lighting::{
    fit_light_constrained, fit_light_lstsq, render_lambertian, FitOptions, FitReport, LightModel, NormalMap,
};
use crate::raster::{AlphaMask, DepthMap, Image};
use crate::scalar::Scalar;

/// Default pyramid depth of the multi-scale gradient loss.
pub const DEFAULT_SCALES: usize = 4;

/// Smallest foreground (alpha > 0.5) a training pair may be built from.
pub const MIN_PAIR_MASK_PIXELS: usize = 64;

/// Mean relative reconstruction error above which scene layers are reported as inconsistent.
pub const RECONSTRUCTION_WARN_LEVEL: f64 = 0.05;

/// Depth channel convention of the refiner input, recorded in pair metadata.
pub const DEPTH_CONVENTION: &str = "background_depth_foreground_zeroed";

/// Input layers for compositing one foreground into one background. All layers share the
/// same height and width; images are linear RGB.
#[derive(Debug, Clone)]
pub struct Scene<T> {
    pub fg_image: Image<T>,
    pub bg_image: Image<T>,
    pub fg_albedo: Image<T>,
    pub bg_albedo: Image<T>,
    pub fg_shading: Image<T>,
    pub bg_shading: Image<T>,
    pub fg_normals: NormalMap<T>,
    pub bg_normals: NormalMap<T>,
    pub bg_depth: DepthMap<T>,
    pub alpha: AlphaMask<T>,
}

impl<T: Scalar> Scene<T> {
    pub fn height(&self) -> usize {
        self.alpha.height()
    }

    pub fn width(&self) -> usize {
        self.alpha.width()
    }

    /// Checks shapes and channel counts, and warns when `albedo · shading` strays from the
    /// image by more than [`RECONSTRUCTION_WARN_LEVEL`].
    pub fn validate(&self) -> Result<()> {
        let (h, w) = (self.height(), self.width());
        for (img, c, ctx) in [
            (&self.fg_image, 3, "foreground image"),
            (&self.bg_image, 3, "background image"),
            (&self.fg_albedo, 3, "foreground albedo"),
            (&self.bg_albedo, 3, "background albedo"),
            (&self.fg_shading, 1, "foreground shading"),
            (&self.bg_shading, 1, "background shading"),
        ] {
            img.ensure_dims(h, w, ctx)?;
            img.ensure_channels(c, ctx)?;
        }
        for (n, ctx) in [
            (&self.fg_normals, "foreground normals"),
            (&self.bg_normals, "background normals"),
        ] {
            if (n.height(), n.width()) != (h, w) {
                return Err(dims_error(ctx, h, w, n.height(), n.width()));
            }
        }
        self.bg_depth.as_image().ensure_dims(h, w, "background depth")?;
        let (fg_err, bg_err) = self.reconstruction_error()?;
        for (err, which) in [(fg_err, "foreground"), (bg_err, "background")] {
            if err > T::lit(RECONSTRUCTION_WARN_LEVEL) {
                log::warn!(
                    "{which} albedo x shading deviates from the image by {:.1}% on average",
                    err.as_f64() * 100.0
                );
            }
        }
        Ok(())
    }

    /// Mean relative error of `albedo · shading` against the image, for foreground and
    /// background.
    pub fn reconstruction_error(&self) -> Result<(T, T)> {
        Ok((
            relative_l1(&reconstruct(&self.fg_albedo, &self.fg_shading)?, &self.fg_image),
            relative_l1(&reconstruct(&self.bg_albedo, &self.bg_shading)?, &self.bg_image),
        ))
    }

    /// Resamples every layer: bilinear for images, renormalized bilinear for normals and
    /// nearest-neighbour for the mask.
    pub fn resized(&self, height: usize, width: usize) -> Self {
        Self {
            fg_image: self.fg_image.resize_bilinear(height, width),
            bg_image: self.bg_image.resize_bilinear(height, width),
            fg_albedo: self.fg_albedo.resize_bilinear(height, width),
            bg_albedo: self.bg_albedo.resize_bilinear(height, width),
            fg_shading: self.fg_shading.resize_bilinear(height, width),
            bg_shading: self.bg_shading.resize_bilinear(height, width),
            fg_normals: self.fg_normals.resize_bilinear(height, width),
            bg_normals: self.bg_normals.resize_bilinear(height, width),
            bg_depth: self.bg_depth.resize_bilinear(height, width),
            alpha: self.alpha.resize_nearest(height, width),
        }
    }
}

fn dims_error(context: &'static str, h: usize, w: usize, fh: usize, fw: usize) -> Error {
    Error::DimensionMismatch {
        context,
        expected: format!("{h}x{w}"),
        found: format!("{fh}x{fw}"),
    }
}

/// `Σ|a - b| / Σ|b|`, zero when both are zero.
pub fn relative_l1<T: Scalar>(a: &Image<T>, b: &Image<T>) -> T {
    let num: T = a.data().iter().zip(b.data()).map(|(x, y)| (*x - *y).abs()).sum();
    let den: T = b.data().iter().map(|y| y.abs()).sum();
    if den == T::zero() {
        if num == T::zero() {
            T::zero()
        } else {
            T::infinity()
        }
    } else {
        num / den
    }
}

/// The stacked refiner input: `[composite RGB (3), Lambertian shading (1), normals (3),
/// depth (1), mask (1)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinerInput<T>(Image<T>);

impl<T: Scalar> RefinerInput<T> {
    pub const CHANNELS: usize = 9;
    pub const RGB: usize = 0;
    pub const SHADING: usize = 3;
    pub const NORMALS: usize = 4;
    pub const DEPTH: usize = 7;
    pub const MASK: usize = 8;

    pub fn from_image(img: Image<T>) -> Result<Self> {
        img.ensure_channels(Self::CHANNELS, "refiner input")?;
        Ok(Self(img))
    }

    pub fn as_image(&self) -> &Image<T> {
        &self.0
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    fn slice(&self, start: usize, len: usize) -> Image<T> {
        Image::from_fn(self.height(), self.width(), len, |y, x, k| self.0.get(y, x, start + k))
    }

    pub fn rgb(&self) -> Image<T> {
        self.slice(Self::RGB, 3)
    }

    pub fn shading(&self) -> Image<T> {
        self.slice(Self::SHADING, 1)
    }

    pub fn normals(&self) -> Image<T> {
        self.slice(Self::NORMALS, 3)
    }

    pub fn depth(&self) -> Image<T> {
        self.slice(Self::DEPTH, 1)
    }

    pub fn mask(&self) -> Image<T> {
        self.slice(Self::MASK, 1)
    }
}

/// Lambertian foreground shading composited over the background shading.
pub fn initial_composite_shading<T: Scalar>(scene: &Scene<T>, light: &LightModel<T>) -> Result<Image<T>> {
    let fg = render_lambertian(&scene.fg_normals, light);
    composite(&fg, &scene.bg_shading, &scene.alpha)
}

/// Packs the refiner input from already-composited layers. `depth` is used as given.
pub fn assemble_refiner_input<T: Scalar>(
    composite_albedo: &Image<T>,
    composite_shading: &Image<T>,
    normals: &NormalMap<T>,
    depth: &Image<T>,
    alpha: &AlphaMask<T>,
) -> Result<RefinerInput<T>> {
    let (h, w) = (alpha.height(), alpha.width());
    composite_albedo.ensure_channels(3, "refiner albedo")?;
    composite_albedo.ensure_dims(h, w, "refiner albedo")?;
    composite_shading.ensure_channels(1, "refiner shading")?;
    composite_shading.ensure_dims(h, w, "refiner shading")?;
    depth.ensure_dims(h, w, "refiner depth")?;
    if (normals.height(), normals.width()) != (h, w) {
        return Err(dims_error("refiner normals", h, w, normals.height(), normals.width()));
    }
    let rgb = reconstruct(composite_albedo, composite_shading)?;
    let mut data = Vec::with_capacity(h * w * RefinerInput::<T>::CHANNELS);
    for y in 0..h {
        for x in 0..w {
            data.extend_from_slice(rgb.pixel(y, x));
            data.push(composite_shading.get(y, x, 0));
            data.extend_from_slice(&normals.get(y, x));
            data.push(depth.get(y, x, 0));
            data.push(alpha.get(y, x));
        }
    }
    RefinerInput::from_image(Image::signed(h, w, RefinerInput::<T>::CHANNELS, data)?)
}

/// Background depth with the foreground region zeroed: `(1 - alpha) · depth`.
fn masked_depth<T: Scalar>(depth: &Image<T>, alpha: &AlphaMask<T>) -> Result<Image<T>> {
    let zero = Image::filled(depth.height(), depth.width(), 1, T::zero());
    composite(&zero, depth, alpha)
}

/// Builds the refiner input for a scene. Normals are the alpha blend of the foreground and
/// background fields, renormalized.
pub fn build_refiner_input<T: Scalar>(
    scene: &Scene<T>,
    composite_shading: &Image<T>,
    composite_albedo: &Image<T>,
) -> Result<RefinerInput<T>> {
    let normals = NormalMap::blend(&scene.fg_normals, &scene.bg_normals, &scene.alpha)?;
    let depth = masked_depth(scene.bg_depth.as_image(), &scene.alpha)?;
    assemble_refiner_input(composite_albedo, composite_shading, &normals, &depth, &scene.alpha)
}

fn ensure_same_shape<T: Scalar>(pred: &Image<T>, gt: &Image<T>, context: &'static str) -> Result<()> {
    gt.ensure_dims(pred.height(), pred.width(), context)?;
    gt.ensure_channels(pred.channels(), context)
}

/// Mean squared error over all samples.
pub fn loss_mse<T: Scalar>(pred: &Image<T>, gt: &Image<T>) -> Result<T> {
    ensure_same_shape(pred, gt, "mse")?;
    let n = T::count(pred.data().len().max(1));
    let sum: T = pred
        .data()
        .iter()
        .zip(gt.data())
        .map(|(p, g)| (*p - *g) * (*p - *g))
        .sum();
    Ok(sum / n)
}

fn check_scales<T: Scalar>(img: &Image<T>, scales: usize) -> Result<()> {
    if scales == 0 {
        return Err(Error::Domain("gradient loss needs at least one scale".into()));
    }
    let need = 1usize << (scales - 1);
    if img.height() < need || img.width() < need {
        return Err(Error::TooSmall(format!(
            "{}x{} image is too small for {scales} scales (needs {need} per side)",
            img.height(),
            img.width()
        )));
    }
    Ok(())
}

fn pyramid<T: Scalar>(img: &Image<T>, scales: usize) -> Result<Vec<Image<T>>> {
    let mut levels = vec![img.clone()];
    for _ in 1..scales {
        let next = downsample_half(levels.last().expect("non-empty"))?;
        levels.push(next);
    }
    Ok(levels)
}

/// `Σ_m MSE(∇pred_m, ∇gt_m)` over a box pyramid of `scales` levels. At each level the x and
/// y forward differences of every channel are pooled into one mean.
pub fn loss_multiscale_gradient<T: Scalar>(pred: &Image<T>, gt: &Image<T>, scales: usize) -> Result<T> {
    Ok(multiscale_gradient_with_grad(pred, gt, scales, false)?.0)
}

fn multiscale_gradient_with_grad<T: Scalar>(
    pred: &Image<T>,
    gt: &Image<T>,
    scales: usize,
    want_grad: bool,
) -> Result<(T, Option<Image<T>>)> {
    ensure_same_shape(pred, gt, "gradient loss")?;
    check_scales(pred, scales)?;
    let pp = pyramid(pred, scales)?;
    let gp = pyramid(gt, scales)?;
    let mut total = T::zero();
    let mut level_grads = Vec::new();
    for (p, g) in pp.iter().zip(&gp) {
        let (pdx, pdy) = gradient_xy(p);
        let (gdx, gdy) = gradient_xy(g);
        let n = T::count(2 * p.data().len());
        let diff =
            |a: &Image<T>, b: &Image<T>| -> Vec<T> { a.data().iter().zip(b.data()).map(|(x, y)| *x - *y).collect() };
        let rx = diff(&pdx, &gdx);
        let ry = diff(&pdy, &gdy);
        let sq: T = rx.iter().chain(&ry).map(|r| *r * *r).sum();
        total += sq / n;
        if want_grad {
            let scale = T::lit(2.0) / n;
            let (h, w, c) = (p.height(), p.width(), p.channels());
            let gx = Image::signed(h, w, c, rx.iter().map(|r| *r * scale).collect())?;
            let gy = Image::signed(h, w, c, ry.iter().map(|r| *r * scale).collect())?;
            level_grads.push(gradient_xy_adjoint(&gx, &gy));
        }
    }
    if !want_grad {
        return Ok((total, None));
    }
    // Pull every level's gradient back to full resolution, coarsest first.
    let mut acc = level_grads.pop().expect("at least one level");
    for level in (0..level_grads.len()).rev() {
        let fine = &pp[level];
        let up = downsample_half_adjoint(&acc, fine.height(), fine.width());
        acc = add_images(&level_grads[level], &up)?;
    }
    Ok((total, Some(acc)))
}

fn add_images<T: Scalar>(a: &Image<T>, b: &Image<T>) -> Result<Image<T>> {
    Image::signed(
        a.height(),
        a.width(),
        a.channels(),
        a.data().iter().zip(b.data()).map(|(x, y)| *x + *y).collect(),
    )
}

/// The four unit-weighted training losses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown<T> {
    pub shading: T,
    pub image: T,
    pub shading_gradient: T,
    pub image_gradient: T,
}

impl<T: Scalar> LossBreakdown<T> {
    pub fn total(&self) -> T {
        self.shading + self.image + self.shading_gradient + self.image_gradient
    }
}

/// Shading MSE, image MSE and both multi-scale gradient losses, where images are
/// `albedo · shading`.
pub fn loss_total<T: Scalar>(
    pred_shading: &Image<T>,
    gt_shading: &Image<T>,
    albedo: &Image<T>,
    scales: usize,
) -> Result<LossBreakdown<T>> {
    Ok(loss_total_with_grad(pred_shading, gt_shading, albedo, scales, false)?.0)
}

/// [`loss_total`] together with its gradient with respect to `pred_shading`.
pub fn loss_total_gradient<T: Scalar>(
    pred_shading: &Image<T>,
    gt_shading: &Image<T>,
    albedo: &Image<T>,
    scales: usize,
) -> Result<(LossBreakdown<T>, Image<T>)> {
    let (loss, grad) = loss_total_with_grad(pred_shading, gt_shading, albedo, scales, true)?;
    Ok((loss, grad.expect("gradient requested")))
}

fn loss_total_with_grad<T: Scalar>(
    pred: &Image<T>,
    gt: &Image<T>,
    albedo: &Image<T>,
    scales: usize,
    want_grad: bool,
) -> Result<(LossBreakdown<T>, Option<Image<T>>)> {
    pred.ensure_channels(1, "predicted shading")?;
    ensure_same_shape(pred, gt, "loss shading")?;
    albedo.ensure_channels(3, "loss albedo")?;
    albedo.ensure_dims(pred.height(), pred.width(), "loss albedo")?;
    let pred_img = reconstruct(albedo, pred)?;
    let gt_img = reconstruct(albedo, gt)?;

    let (sg, sg_grad) = multiscale_gradient_with_grad(pred, gt, scales, want_grad)?;
    let (ig, ig_grad) = multiscale_gradient_with_grad(&pred_img, &gt_img, scales, want_grad)?;
    let loss = LossBreakdown {
        shading: loss_mse(pred, gt)?,
        image: loss_mse(&pred_img, &gt_img)?,
        shading_gradient: sg,
        image_gradient: ig,
    };
    if !want_grad {
        return Ok((loss, None));
    }

    // d(image)/d(shading) = albedo, summed over channels.
    let n_s = T::count(pred.data().len());
    let n_i = T::count(pred_img.data().len());
    let two = T::lit(2.0);
    let ig_grad = ig_grad.expect("requested");
    let sg_grad = sg_grad.expect("requested");
    let grad = Image::signed(
        pred.height(),
        pred.width(),
        1,
        (0..pred.data().len())
            .map(|i| {
                let ds = two * (pred.data()[i] - gt.data()[i]) / n_s + sg_grad.data()[i];
                let di: T = (0..3)
                    .map(|k| {
                        let j = i * 3 + k;
                        let dimg = two * (pred_img.data()[j] - gt_img.data()[j]) / n_i + ig_grad.data()[j];
                        dimg * albedo.data()[j]
                    })
                    .sum();
                ds + di
            })
            .collect(),
    )?;
    Ok((loss, Some(grad)))
}

/// A self-supervised training example.
#[derive(Debug, Clone)]
pub struct PairSample<T> {
    pub input: RefinerInput<T>,
    pub gt_shading: Image<T>,
    pub gt_image: Image<T>,
    pub albedo: Image<T>,
    pub mask: AlphaMask<T>,
    /// Light fitted on the foreground region.
    pub fit: FitReport<T>,
}

/// Builds a training pair from one decomposed image and an object mask: fit the light on the
/// masked region (unconstrained least squares), re-render that region as Lambertian, and
/// composite it back over the original shading. The original shading is the target.
pub fn generate_pair<T: Scalar>(
    image: &Image<T>,
    mask: &AlphaMask<T>,
    albedo: &Image<T>,
    shading: &Image<T>,
    normals: &NormalMap<T>,
    depth: &DepthMap<T>,
    fit: &FitOptions<T>,
) -> Result<PairSample<T>> {
    let (h, w) = (mask.height(), mask.width());
    image.ensure_channels(3, "pair image")?;
    image.ensure_dims(h, w, "pair image")?;
    albedo.ensure_channels(3, "pair albedo")?;
    albedo.ensure_dims(h, w, "pair albedo")?;
    shading.ensure_channels(1, "pair shading")?;
    shading.ensure_dims(h, w, "pair shading")?;
    depth.as_image().ensure_dims(h, w, "pair depth")?;
    let active = mask.active_count();
    if active < MIN_PAIR_MASK_PIXELS {
        return Err(Error::InsufficientData {
            needed: MIN_PAIR_MASK_PIXELS,
            found: active,
        });
    }
    let report = fit_light_lstsq(normals, shading, Some(mask), fit)?;
    if report.degenerate {
        log::warn!(
            "foreground normals are degenerate (condition number {:.3e})",
            report.condition_number.as_f64()
        );
    }
    let gt_image = reconstruct(albedo, shading)?;
    let err = relative_l1(&gt_image, image);
    if err > T::lit(RECONSTRUCTION_WARN_LEVEL) {
        log::warn!(
            "albedo x shading deviates from the image by {:.1}%",
            err.as_f64() * 100.0
        );
    }
    let lambertian = render_lambertian(normals, &report.light);
    let input_shading = composite(&lambertian, shading, mask)?;
    let depth = masked_depth(depth.as_image(), mask)?;
    let input = assemble_refiner_input(albedo, &input_shading, normals, &depth, mask)?;
    Ok(PairSample {
        input,
        gt_shading: shading.clone(),
        gt_image,
        albedo: albedo.clone(),
        mask: mask.clone(),
        fit: report,
    })
}

/// Maps the rough Lambertian composite shading to a refined shading map.
pub trait Refiner<T> {
    fn refine(&self, input: &RefinerInput<T>) -> Result<Image<T>>;
}

/// Returns the Lambertian composite shading unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityRefiner;

impl<T: Scalar> Refiner<T> for IdentityRefiner {
    fn refine(&self, input: &RefinerInput<T>) -> Result<Image<T>> {
        Ok(input.shading())
    }
}

/// Edge-aware smoothing of the foreground shading, guided by the composite albedo. The
/// background shading passes through untouched.
#[derive(Debug, Clone, Copy)]
pub struct SmoothRefiner {
    pub iterations: usize,
    /// Albedo difference at which neighbour weights fall to `exp(-1/2)`.
    pub sigma: f64,
}

impl Default for SmoothRefiner {
    fn default() -> Self {
        Self {
            iterations: 8,
            sigma: 0.1,
        }
    }
}

impl<T: Scalar> Refiner<T> for SmoothRefiner {
    fn refine(&self, input: &RefinerInput<T>) -> Result<Image<T>> {
        let (h, w) = (input.height(), input.width());
        let src = input.shading();
        let rgb = input.rgb();
        let mask = input.mask();
        let eps = T::lit(1e-6);
        let guide: Vec<[T; 3]> = (0..h * w)
            .map(|i| {
                let s = src.data()[i].max(eps);
                let p = &rgb.data()[i * 3..i * 3 + 3];
                [p[0] / s, p[1] / s, p[2] / s]
            })
            .collect();
        let inv = T::one() / T::lit(2.0 * self.sigma * self.sigma);
        let weight = |a: usize, b: usize| {
            let d: T = (0..3).map(|k| (guide[a][k] - guide[b][k]).powi(2)).sum();
            (-d * inv).exp()
        };
        let mut cur = src.data().to_vec();
        for _ in 0..self.iterations {
            let mut next = cur.clone();
            for y in 0..h {
                for x in 0..w {
                    let i = y * w + x;
                    if mask.data()[i] == T::zero() {
                        continue;
                    }
                    let mut num = cur[i];
                    let mut den = T::one();
                    let mut visit = |j: usize| {
                        let wt = weight(i, j);
                        num += wt * cur[j];
                        den += wt;
                    };
                    if x > 0 {
                        visit(i - 1);
                    }
                    if x + 1 < w {
                        visit(i + 1);
                    }
                    if y > 0 {
                        visit(i - w);
                    }
                    if y + 1 < h {
                        visit(i + w);
                    }
                    next[i] = num / den;
                }
            }
            cur = next;
        }
        let smoothed = Image::new(h, w, 1, cur)?;
        composite(&smoothed, &src, &AlphaMask::from_image(&mask)?)
    }
}

/// Runs an external program as the refiner.
///
/// The input is written as nine single-channel PFM files `input_0.pfm` … `input_8.pfm` (in
/// the channel order of [`RefinerInput`]) into a temporary directory. The program is invoked
/// as `<program> <args…> <input_dir> <output.pfm>` and must write a single-channel PFM of the
/// same size to the output path.
#[derive(Debug, Clone)]
pub struct ExternalRefiner {
    pub program: String,
    pub args: Vec<String>,
}

impl ExternalRefiner {
    /// Splits a command line on whitespace.
    pub fn from_command(command: &str) -> Result<Self> {
        let mut parts = command.split_whitespace().map(str::to_string);
        let program = parts
            .next()
            .ok_or_else(|| Error::Refiner("empty external refiner command".into()))?;
        Ok(Self {
            program,
            args: parts.collect(),
        })
    }
}

impl<T: Scalar> Refiner<T> for ExternalRefiner {
    fn refine(&self, input: &RefinerInput<T>) -> Result<Image<T>> {
        let dir = tempfile::tempdir()?;
        crate::io::write_refiner_input(dir.path(), input)?;
        let output = dir.path().join("output.pfm");
        let status = Command::new(&self.program)
            .args(&self.args)
            .arg(dir.path())
            .arg(&output)
            .status()
            .map_err(|e| Error::Refiner(format!("cannot run `{}`: {e}", self.program)))?;
        if !status.success() {
            return Err(Error::Refiner(format!("`{}` exited with {status}", self.program)));
        }
        read_output(&output)
    }
}

fn read_output<T: Scalar>(path: &Path) -> Result<Image<T>> {
    if !path.exists() {
        return Err(Error::Refiner(format!("no output written to {}", path.display())));
    }
    crate::io::read_pfm(path)
}

/// Runs `refiner` and checks that its output is a non-negative single-channel map of the
/// input's size.
pub fn refine<T: Scalar>(input: &RefinerInput<T>, refiner: &dyn Refiner<T>) -> Result<Image<T>> {
    let out = refiner.refine(input)?;
    if out.channels() != 1 || out.height() != input.height() || out.width() != input.width() {
        return Err(Error::Refiner(format!(
            "expected a {}x{}x1 shading map, got {}x{}x{}",
            input.height(),
            input.width(),
            out.height(),
            out.width(),
            out.channels()
        )));
    }
    if !out.is_nonnegative() {
        return Err(Error::Refiner("refined shading has negative samples".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct HarmonizeOptions<T> {
    /// Use this light instead of fitting one to the background.
    pub light: Option<LightModel<T>>,
    /// Albedo edits applied to the foreground before compositing.
    pub edits: Option<EditSpec<T>>,
    pub fit: FitOptions<T>,
}

impl<T: Scalar> Default for HarmonizeOptions<T> {
    fn default() -> Self {
        Self {
            light: None,
            edits: None,
            fit: FitOptions::default(),
        }
    }
}

/// Every stage of a harmonization run.
#[derive(Debug, Clone)]
pub struct Harmonized<T> {
    /// Final linear RGB composite.
    pub composite: Image<T>,
    pub albedo: Image<T>,
    pub lambertian_shading: Image<T>,
    pub refined_shading: Image<T>,
    pub light: LightModel<T>,
    /// Present when the light was fitted rather than supplied.
    pub fit: Option<FitReport<T>>,
}

/// Albedo harmonization, background light fit, Lambertian foreground shading, refinement and
/// reconstruction.
pub fn harmonize<T: Scalar>(
    scene: &Scene<T>,
    refiner: &dyn Refiner<T>,
    opts: &HarmonizeOptions<T>,
) -> Result<Harmonized<T>> {
    scene.validate()?;
    let fg_albedo = match &opts.edits {
        Some(spec) => apply_edit_sequence(&scene.fg_albedo, &scene.alpha, &spec.params, spec.active)?,
        None => scene.fg_albedo.clone(),
    };
    let albedo = composite(&fg_albedo, &scene.bg_albedo, &scene.alpha)?;
    let (light, fit) = match opts.light {
        Some(light) => (light, None),
        None => {
            let report = fit_light_constrained(&scene.bg_normals, &scene.bg_shading, None, &opts.fit)?;
            if report.degenerate {
                log::warn!("background light fit is degenerate");
            }
            (report.light, Some(report))
        }
    };
    let lambertian_shading = initial_composite_shading(scene, &light)?;
    let input = build_refiner_input(scene, &lambertian_shading, &albedo)?;
    let refined_shading = refine(&input, refiner)?;
    let composite = reconstruct(&albedo, &refined_shading)?;
    Ok(Harmonized {
        composite,
        albedo,
        lambertian_shading,
        refined_shading,
        light,
        fit,
    })
}
