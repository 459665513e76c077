//! File formats: PFM for linear float maps, PNG for display-referred images and masks, and
//! JSON scene manifests.

use std::fs;
use std::io::{BufRead, BufReader, Cursor, Read, Write};
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageFormat};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intrinsic::{linear_to_srgb, srgb_to_linear, DEFAULT_GAMMA};
use crate::lighting::NormalMap;
use crate::raster::{fit_long_side, AlphaMask, DepthMap, Image};
use crate::reshade::{RefinerInput, Scene};
use crate::scalar::Scalar;

fn header_token(reader: &mut impl BufRead) -> Result<String> {
    let mut token = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        if reader.read(&mut byte)? == 0 {
            break;
        }
        if byte[0].is_ascii_whitespace() {
            if token.is_empty() {
                continue;
            }
            break;
        }
        token.push(byte[0]);
        if token.len() > 64 {
            return Err(Error::Format("PFM header token too long".into()));
        }
    }
    if token.is_empty() {
        return Err(Error::Format("truncated PFM header".into()));
    }
    String::from_utf8(token).map_err(|_| Error::Format("PFM header is not ASCII".into()))
}

/// Decodes a PFM stream. `PF` is three-channel, `Pf` one-channel; a negative scale marks
/// little-endian samples. Scanlines are stored bottom to top.
pub fn decode_pfm<T: Scalar>(reader: impl Read) -> Result<Image<T>> {
    let mut reader = BufReader::new(reader);
    let channels = match header_token(&mut reader)?.as_str() {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(Error::Format(format!("unknown PFM magic `{other}`"))),
    };
    let parse_dim = |s: String| {
        s.parse::<usize>()
            .ok()
            .filter(|v| *v > 0)
            .ok_or_else(|| Error::Format(format!("bad PFM dimension `{s}`")))
    };
    let width = parse_dim(header_token(&mut reader)?)?;
    let height = parse_dim(header_token(&mut reader)?)?;
    let scale_token = header_token(&mut reader)?;
    let scale: f64 = scale_token
        .parse()
        .map_err(|_| Error::Format(format!("bad PFM scale `{scale_token}`")))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::Format(format!("bad PFM scale `{scale_token}`")));
    }
    let little_endian = scale < 0.0;
    let count = width * height * channels;
    let mut bytes = vec![0u8; count * 4];
    reader
        .read_exact(&mut bytes)
        .map_err(|_| Error::Format(format!("PFM body shorter than {count} samples")))?;
    let row_len = width * channels;
    let mut data = vec![T::zero(); count];
    for (i, chunk) in bytes.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little_endian {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let (file_row, col) = (i / row_len, i % row_len);
        data[(height - 1 - file_row) * row_len + col] = T::lit(v as f64);
    }
    Image::signed(height, width, channels, data)
}

/// Encodes a one- or three-channel image as little-endian PFM.
pub fn encode_pfm<T: Scalar>(img: &Image<T>, mut writer: impl Write) -> Result<()> {
    let magic = match img.channels() {
        1 => "Pf",
        3 => "PF",
        c => {
            return Err(Error::ChannelCount {
                context: "PFM output",
                expected: 3,
                found: c,
            })
        }
    };
    write!(writer, "{magic}\n{} {}\n-1.0\n", img.width(), img.height())?;
    let row_len = img.width() * img.channels();
    let mut body = Vec::with_capacity(img.data().len() * 4);
    for row in img.data().chunks_exact(row_len).rev() {
        for v in row {
            body.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    writer.write_all(&body)?;
    Ok(())
}

pub fn read_pfm<T: Scalar>(path: &Path) -> Result<Image<T>> {
    decode_pfm(fs::File::open(path)?)
}

pub fn write_pfm<T: Scalar>(path: &Path, img: &Image<T>) -> Result<()> {
    let mut file = std::io::BufWriter::new(fs::File::create(path)?);
    encode_pfm(img, &mut file)?;
    file.flush()?;
    Ok(())
}

fn dynamic_to_image<T: Scalar>(img: DynamicImage) -> Result<Image<T>> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if img.color().has_color() {
        let data = img.to_rgb32f().into_raw();
        Image::new(h, w, 3, data.into_iter().map(|v| T::lit(v as f64)).collect())
    } else {
        let data = img.to_luma32f().into_raw();
        Image::new(h, w, 1, data.into_iter().map(|v| T::lit(v as f64)).collect())
    }
}

/// Decodes an 8- or 16-bit PNG into samples in `[0, 1]`: one channel for grayscale, three
/// otherwise. Any alpha channel is dropped.
pub fn decode_png<T: Scalar>(bytes: &[u8]) -> Result<Image<T>> {
    dynamic_to_image(image::load_from_memory_with_format(bytes, ImageFormat::Png)?)
}

pub fn read_png<T: Scalar>(path: &Path) -> Result<Image<T>> {
    decode_png(&fs::read(path)?)
}

fn quantize<T: Scalar>(v: T, max: f64) -> f64 {
    (v.as_f64().clamp(0.0, 1.0) * max).round()
}

/// Encodes samples in `[0, 1]` (clamped) as an 8-bit PNG, gray or RGB.
pub fn encode_png<T: Scalar>(img: &Image<T>) -> Result<Vec<u8>> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let bytes: Vec<u8> = img.data().iter().map(|v| quantize(*v, 255.0) as u8).collect();
    let dynamic = match img.channels() {
        1 => DynamicImage::ImageLuma8(image::GrayImage::from_raw(w, h, bytes).expect("buffer size")),
        3 => DynamicImage::ImageRgb8(image::RgbImage::from_raw(w, h, bytes).expect("buffer size")),
        c => {
            return Err(Error::ChannelCount {
                context: "PNG output",
                expected: 3,
                found: c,
            })
        }
    };
    let mut out = Cursor::new(Vec::new());
    dynamic.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub fn write_png<T: Scalar>(path: &Path, img: &Image<T>) -> Result<()> {
    fs::write(path, encode_png(img)?)?;
    Ok(())
}

/// Encodes a linear image as an sRGB PNG.
pub fn encode_srgb_png<T: Scalar>(img: &Image<T>, gamma: T) -> Result<Vec<u8>> {
    let clamped = img.map(|v| v.min(T::one()));
    encode_png(&linear_to_srgb(&clamped, gamma)?)
}

/// Writes normals as a 16-bit RGB PNG with the `(n + 1) / 2` encoding.
pub fn write_normals_png<T: Scalar>(path: &Path, normals: &NormalMap<T>) -> Result<()> {
    let (w, h) = (normals.width() as u32, normals.height() as u32);
    let data: Vec<u16> = normals
        .data()
        .iter()
        .flat_map(|n| n.map(|c| quantize((c + T::one()) * T::lit(0.5), 65535.0) as u16))
        .collect();
    let buf: image::ImageBuffer<image::Rgb<u16>, Vec<u16>> =
        image::ImageBuffer::from_raw(w, h, data).expect("buffer size");
    buf.save_with_format(path, ImageFormat::Png)?;
    Ok(())
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

/// Container a float map was decoded from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapFormat {
    Pfm,
    Png,
}

const PNG_SIGNATURE: &[u8] = b"\x89PNG\r\n\x1a\n";

/// Decodes PFM or PNG bytes, recognized by their signature.
pub fn decode_map<T: Scalar>(bytes: &[u8]) -> Result<(Image<T>, MapFormat)> {
    if bytes.starts_with(PNG_SIGNATURE) {
        Ok((decode_png(bytes)?, MapFormat::Png))
    } else if bytes.starts_with(b"PF") || bytes.starts_with(b"Pf") {
        Ok((decode_pfm(bytes)?, MapFormat::Pfm))
    } else {
        Err(Error::Format("neither a PFM nor a PNG file".into()))
    }
}

/// Reads a float map from PFM or PNG, chosen by extension.
pub fn read_map<T: Scalar>(path: &Path) -> Result<(Image<T>, MapFormat)> {
    let format = match extension(path).as_str() {
        "pfm" => MapFormat::Pfm,
        "png" => MapFormat::Png,
        other => {
            return Err(Error::Format(format!(
                "{}: unsupported extension `{other}` (expected pfm or png)",
                path.display()
            )))
        }
    };
    let bytes = fs::read(path)?;
    let img = match format {
        MapFormat::Pfm => decode_pfm(bytes.as_slice())?,
        MapFormat::Png => decode_png(&bytes)?,
    };
    Ok((img, format))
}

/// Coerces a decoded map to a non-negative layer with the given channel count. PNG colour
/// layers are decoded from display gamma when `gamma` is given.
pub fn layer_from_map<T: Scalar>(
    img: Image<T>,
    format: MapFormat,
    channels: usize,
    gamma: Option<T>,
    context: &'static str,
) -> Result<Image<T>> {
    let img = match (img.channels(), channels) {
        (c, want) if c == want => img,
        (3, 1) => img.channel(0),
        (1, 3) => Image::from_fn(img.height(), img.width(), 3, |y, x, _| img.get(y, x, 0)),
        (found, expected) => {
            return Err(Error::ChannelCount {
                context,
                expected,
                found,
            })
        }
    };
    let img = Image::new(img.height(), img.width(), img.channels(), img.into_data())?;
    match (gamma, format) {
        (Some(g), MapFormat::Png) => srgb_to_linear(&img, g),
        _ => Ok(img),
    }
}

/// Normals from a three-channel PFM, or from a PNG with the `(n + 1) / 2` encoding.
/// Vectors are renormalized.
pub fn normals_from_map<T: Scalar>(img: &Image<T>, format: MapFormat) -> Result<NormalMap<T>> {
    img.ensure_channels(3, "normals")?;
    let data = img
        .data()
        .chunks_exact(3)
        .map(|c| {
            let v = [c[0], c[1], c[2]];
            match format {
                MapFormat::Png => v.map(|s| s * T::lit(2.0) - T::one()),
                MapFormat::Pfm => v,
            }
        })
        .collect();
    NormalMap::from_unnormalized(img.height(), img.width(), data)
}

/// A mask from the first channel of a map, clamped to `[0, 1]`.
pub fn mask_from_map<T: Scalar>(img: &Image<T>) -> Result<AlphaMask<T>> {
    AlphaMask::from_image(&img.channel(0))
}

/// Reads a non-negative layer from PFM or PNG; see [`layer_from_map`].
pub fn read_layer<T: Scalar>(
    path: &Path,
    channels: usize,
    gamma: Option<T>,
    context: &'static str,
) -> Result<Image<T>> {
    let (img, format) = read_map(path)?;
    layer_from_map(img, format, channels, gamma, context)
}

pub fn read_mask<T: Scalar>(path: &Path) -> Result<AlphaMask<T>> {
    mask_from_map(&read_map::<T>(path)?.0)
}

/// Reads normals from a three-channel PFM, or from a 16-bit PNG with the `(n + 1) / 2`
/// encoding.
pub fn read_normals<T: Scalar>(path: &Path) -> Result<NormalMap<T>> {
    let (img, format) = read_map::<T>(path)?;
    normals_from_map(&img, format)
}

pub fn read_depth<T: Scalar>(path: &Path) -> Result<DepthMap<T>> {
    DepthMap::from_image(read_layer(path, 1, None, "depth")?)
}

/// Writes the refiner stack as `input_0.pfm` … `input_8.pfm` under `dir`.
pub fn write_refiner_input<T: Scalar>(dir: &Path, input: &RefinerInput<T>) -> Result<()> {
    let stack = input.as_image();
    for k in 0..stack.channels() {
        write_pfm(&dir.join(format!("input_{k}.pfm")), &stack.channel(k))?;
    }
    Ok(())
}

pub fn read_refiner_input<T: Scalar>(dir: &Path) -> Result<RefinerInput<T>> {
    let planes = (0..RefinerInput::<T>::CHANNELS)
        .map(|k| read_pfm::<T>(&dir.join(format!("input_{k}.pfm"))))
        .collect::<Result<Vec<_>>>()?;
    let (h, w) = (planes[0].height(), planes[0].width());
    for p in &planes {
        p.ensure_dims(h, w, "refiner input plane")?;
        p.ensure_channels(1, "refiner input plane")?;
    }
    let stack = Image::from_fn(h, w, planes.len(), |y, x, k| planes[k].get(y, x, 0));
    RefinerInput::from_image(stack)
}

pub const DEFAULT_RESOLUTION: usize = 1024;

fn default_resolution() -> usize {
    DEFAULT_RESOLUTION
}

fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}

/// File paths of a scene's layers, relative to the manifest's directory unless absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub fg_image: PathBuf,
    pub bg_image: PathBuf,
    pub fg_albedo: PathBuf,
    pub bg_albedo: PathBuf,
    pub fg_shading: PathBuf,
    pub bg_shading: PathBuf,
    pub fg_normals: PathBuf,
    pub bg_normals: PathBuf,
    pub bg_depth: PathBuf,
    pub mask: PathBuf,
    /// Longest side after loading; larger scenes are shrunk, smaller ones are kept.
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl SceneManifest {
    /// Manifest with the conventional file names used by [`write_scene`].
    pub fn conventional() -> Self {
        Self {
            fg_image: "fg_image.pfm".into(),
            bg_image: "bg_image.pfm".into(),
            fg_albedo: "fg_albedo.pfm".into(),
            bg_albedo: "bg_albedo.pfm".into(),
            fg_shading: "fg_shading.pfm".into(),
            bg_shading: "bg_shading.pfm".into(),
            fg_normals: "fg_normals.pfm".into(),
            bg_normals: "bg_normals.pfm".into(),
            bg_depth: "bg_depth.pfm".into(),
            mask: "mask.png".into(),
            resolution: DEFAULT_RESOLUTION,
            gamma: DEFAULT_GAMMA,
            base_dir: PathBuf::new(),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut manifest: Self = serde_json::from_slice(&fs::read(path)?)?;
        manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(manifest)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    fn path_of(&self, part: &str) -> &Path {
        match part {
            "fg_image" => &self.fg_image,
            "bg_image" => &self.bg_image,
            "fg_albedo" => &self.fg_albedo,
            "bg_albedo" => &self.bg_albedo,
            "fg_shading" => &self.fg_shading,
            "bg_shading" => &self.bg_shading,
            "fg_normals" => &self.fg_normals,
            "bg_normals" => &self.bg_normals,
            "bg_depth" => &self.bg_depth,
            _ => &self.mask,
        }
    }

    /// Loads and validates every layer, then shrinks the scene so its long side is at most
    /// `resolution`.
    pub fn load<T: Scalar>(&self) -> Result<Scene<T>> {
        assemble_scene(
            |part| {
                let path = self.resolve(self.path_of(part));
                read_map(&path).map_err(|e| match e {
                    Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
                    Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
                    other => other,
                })
            },
            self.gamma,
            self.resolution,
        )
    }
}

/// Names of a scene's layers, as used by manifests and uploads.
pub const SCENE_PARTS: [&str; 10] = [
    "fg_image",
    "bg_image",
    "fg_albedo",
    "bg_albedo",
    "fg_shading",
    "bg_shading",
    "fg_normals",
    "bg_normals",
    "bg_depth",
    "mask",
];

/// Builds a scene from decoded maps, fetched by part name (see [`SCENE_PARTS`]). Image and
/// albedo PNGs are decoded from display `gamma`; the scene is validated and shrunk so its long
/// side is at most `resolution`.
pub fn assemble_scene<T: Scalar>(
    mut get: impl FnMut(&'static str) -> Result<(Image<T>, MapFormat)>,
    gamma: f64,
    resolution: usize,
) -> Result<Scene<T>> {
    if resolution == 0 {
        return Err(Error::Domain("resolution must be positive".into()));
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::Domain(format!("gamma must be positive, got {gamma}")));
    }
    let g = Some(T::lit(gamma));
    let mut layer = |part: &'static str, channels: usize, gamma: Option<T>| {
        let (img, format) = get(part)?;
        layer_from_map(img, format, channels, gamma, part)
    };
    let fg_image = layer("fg_image", 3, g)?;
    let bg_image = layer("bg_image", 3, g)?;
    let fg_albedo = layer("fg_albedo", 3, g)?;
    let bg_albedo = layer("bg_albedo", 3, g)?;
    let fg_shading = layer("fg_shading", 1, None)?;
    let bg_shading = layer("bg_shading", 1, None)?;
    let bg_depth = DepthMap::from_image(layer("bg_depth", 1, None)?)?;
    let (n, f) = get("fg_normals")?;
    let fg_normals = normals_from_map(&n, f)?;
    let (n, f) = get("bg_normals")?;
    let bg_normals = normals_from_map(&n, f)?;
    let alpha = mask_from_map(&get("mask")?.0)?;
    let scene = Scene {
        fg_image,
        bg_image,
        fg_albedo,
        bg_albedo,
        fg_shading,
        bg_shading,
        fg_normals,
        bg_normals,
        bg_depth,
        alpha,
    };
    scene.validate()?;
    let (h, w) = fit_long_side(scene.height(), scene.width(), resolution);
    Ok(if (h, w) == (scene.height(), scene.width()) {
        scene
    } else {
        log::info!("resizing scene from {}x{} to {h}x{w}", scene.height(), scene.width());
        scene.resized(h, w)
    })
}

/// Loads the scene described by the manifest at `path`.
pub fn load_scene<T: Scalar>(path: &Path) -> Result<Scene<T>> {
    SceneManifest::read(path)?.load()
}

/// Writes every layer of `scene` under `dir` with the conventional names, plus a
/// `scene.json` manifest, and returns the manifest path.
pub fn write_scene<T: Scalar>(dir: &Path, scene: &Scene<T>) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let m = SceneManifest::conventional();
    write_pfm(&dir.join(&m.fg_image), &scene.fg_image)?;
    write_pfm(&dir.join(&m.bg_image), &scene.bg_image)?;
    write_pfm(&dir.join(&m.fg_albedo), &scene.fg_albedo)?;
    write_pfm(&dir.join(&m.bg_albedo), &scene.bg_albedo)?;
    write_pfm(&dir.join(&m.fg_shading), &scene.fg_shading)?;
    write_pfm(&dir.join(&m.bg_shading), &scene.bg_shading)?;
    write_pfm(&dir.join(&m.fg_normals), &scene.fg_normals.to_image())?;
    write_pfm(&dir.join(&m.bg_normals), &scene.bg_normals.to_image())?;
    write_pfm(&dir.join(&m.bg_depth), scene.bg_depth.as_image())?;
    write_png(&dir.join(&m.mask), &scene.alpha.to_image())?;
    let path = dir.join("scene.json");
    fs::write(&path, serde_json::to_vec_pretty(&m)?)?;
    Ok(path)
}

/// One decomposed image with an object mask: an entry of a pair-generation corpus.
#[derive(Debug, Clone)]
pub struct CorpusEntry<T> {
    pub image: Image<T>,
    pub albedo: Image<T>,
    pub shading: Image<T>,
    pub normals: NormalMap<T>,
    pub depth: DepthMap<T>,
    pub mask: AlphaMask<T>,
}

fn find_layer(dir: &Path, stem: &str) -> Result<PathBuf> {
    ["pfm", "png"]
        .iter()
        .map(|ext| dir.join(format!("{stem}.{ext}")))
        .find(|p| p.exists())
        .ok_or_else(|| {
            Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("{}: no {stem}.pfm or {stem}.png", dir.display()),
            ))
        })
}

impl<T: Scalar> CorpusEntry<T> {
    /// Reads `image`, `albedo`, `shading`, `normals`, `depth` and `mask` from `dir`, each as
    /// `.pfm` or `.png`, and shrinks the entry so its long side is at most `resolution`.
    pub fn load(dir: &Path, gamma: T, resolution: usize) -> Result<Self> {
        let g = Some(gamma);
        let entry = Self {
            image: read_layer(&find_layer(dir, "image")?, 3, g, "image")?,
            albedo: read_layer(&find_layer(dir, "albedo")?, 3, g, "albedo")?,
            shading: read_layer(&find_layer(dir, "shading")?, 1, None, "shading")?,
            normals: read_normals(&find_layer(dir, "normals")?)?,
            depth: read_depth(&find_layer(dir, "depth")?)?,
            mask: read_mask(&find_layer(dir, "mask")?)?,
        };
        let (h, w) = (entry.mask.height(), entry.mask.width());
        for (img, ctx) in [
            (&entry.image, "image"),
            (&entry.albedo, "albedo"),
            (&entry.shading, "shading"),
        ] {
            img.ensure_dims(h, w, ctx)?;
        }
        entry.depth.as_image().ensure_dims(h, w, "depth")?;
        if (entry.normals.height(), entry.normals.width()) != (h, w) {
            return Err(Error::DimensionMismatch {
                context: "normals",
                expected: format!("{h}x{w}"),
                found: format!("{}x{}", entry.normals.height(), entry.normals.width()),
            });
        }
        let (nh, nw) = fit_long_side(h, w, resolution.max(1));
        if (nh, nw) == (h, w) {
            return Ok(entry);
        }
        Ok(Self {
            image: entry.image.resize_bilinear(nh, nw),
            albedo: entry.albedo.resize_bilinear(nh, nw),
            shading: entry.shading.resize_bilinear(nh, nw),
            normals: entry.normals.resize_bilinear(nh, nw),
            depth: entry.depth.resize_bilinear(nh, nw),
            mask: entry.mask.resize_nearest(nh, nw),
        })
    }

    /// Writes the layers as PFM (mask as PNG) under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_pfm(&dir.join("image.pfm"), &self.image)?;
        write_pfm(&dir.join("albedo.pfm"), &self.albedo)?;
        write_pfm(&dir.join("shading.pfm"), &self.shading)?;
        write_pfm(&dir.join("normals.pfm"), &self.normals.to_image())?;
        write_pfm(&dir.join("depth.pfm"), self.depth.as_image())?;
        write_png(&dir.join("mask.png"), &self.mask.to_image())
    }
}
