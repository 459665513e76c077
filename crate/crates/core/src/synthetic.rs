//! Deterministic synthetic scenes with exactly known lighting, for tests, demos and
//! calibration runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::intrinsic::reconstruct;
use crate::io::CorpusEntry;
use crate::lighting::{render_lambertian, LightModel, NormalMap};
use crate::raster::{AlphaMask, DepthMap, Image};
use crate::reshade::Scene;
use crate::scalar::Scalar;

/// Light used by the synthetic scenes. Its direction is shorter than its ambient term plus
/// the `nz` floor, so no pixel of a camera-facing normal field is clamped.
pub fn default_light<T: Scalar>() -> LightModel<T> {
    LightModel::new([T::lit(0.3), T::lit(0.4), T::lit(0.7)], T::lit(0.6)).expect("finite")
}

/// Camera-facing hemisphere of a sphere inscribed in a `size × size` frame; pixels outside
/// the disc face the camera.
pub fn sphere_normals<T: Scalar>(size: usize) -> NormalMap<T> {
    let r = size as f64 / 2.0;
    let data = (0..size * size)
        .map(|i| {
            let (y, x) = (i / size, i % size);
            let u = (x as f64 + 0.5 - r) / r;
            let v = (y as f64 + 0.5 - r) / r;
            let rr = u * u + v * v;
            if rr < 1.0 {
                [T::lit(u), T::lit(-v), T::lit((1.0 - rr).sqrt())]
            } else {
                [T::zero(), T::zero(), T::one()]
            }
        })
        .collect();
    NormalMap::from_unnormalized(size, size, data).expect("camera-facing normals")
}

/// Independent normals drawn uniformly from the camera-facing hemisphere.
pub fn hemisphere_normals<T: Scalar>(height: usize, width: usize, seed: u64) -> NormalMap<T> {
    cone_normals(height, width, std::f64::consts::FRAC_PI_2, seed)
}

/// Independent normals drawn uniformly from the spherical cap within `max_polar` radians
/// of the view axis.
pub fn cone_normals<T: Scalar>(height: usize, width: usize, max_polar: f64, seed: u64) -> NormalMap<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z_min = max_polar.cos().max(0.0);
    let data = (0..height * width)
        .map(|_| {
            let z: f64 = z_min + (1.0 - z_min) * rng.random::<f64>();
            let phi = rng.random::<f64>() * std::f64::consts::TAU;
            let s = (1.0 - z * z).sqrt();
            [T::lit(s * phi.cos()), T::lit(s * phi.sin()), T::lit(z)]
        })
        .collect();
    NormalMap::from_unnormalized(height, width, data).expect("camera-facing normals")
}

/// Normals of a smooth random height field `z(x, y)`.
pub fn wavy_normals<T: Scalar>(height: usize, width: usize, seed: u64) -> NormalMap<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.random_range(0.4..1.2),
                rng.random_range(0.05..0.4),
                rng.random_range(0.05..0.4),
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let data = (0..height * width)
        .map(|i| {
            let (y, x) = ((i / width) as f64, (i % width) as f64);
            let (mut zx, mut zy) = (0.0, 0.0);
            for (amp, fx, fy, phase) in &waves {
                let c = (fx * x + fy * y + phase).cos();
                zx += amp * fx * c;
                zy += amp * fy * c;
            }
            // image y runs downward, camera y upward
            [T::lit(-zx), T::lit(zy), T::one()]
        })
        .collect();
    NormalMap::from_unnormalized(height, width, data).expect("camera-facing normals")
}

fn disc_mask<T: Scalar>(size: usize) -> AlphaMask<T> {
    let c = size as f64 / 2.0;
    let r = size as f64 * 0.3;
    AlphaMask::from_fn(size, size, |y, x| {
        let (dy, dx) = (y as f64 + 0.5 - c, x as f64 + 0.5 - c);
        if dx * dx + dy * dy < r * r {
            T::one()
        } else {
            T::zero()
        }
    })
}

fn object_normals<T: Scalar>(size: usize, seed: u64, mask: &AlphaMask<T>) -> NormalMap<T> {
    let wavy = wavy_normals::<T>(size, size, seed);
    let c = size as f64 / 2.0;
    let r = size as f64 * 0.3;
    let data = (0..size * size)
        .map(|i| {
            let (y, x) = (i / size, i % size);
            if mask.get(y, x) > T::zero() {
                let u = (x as f64 + 0.5 - c) / r;
                let v = (y as f64 + 0.5 - c) / r;
                let zz = (1.0 - u * u - v * v).max(0.0);
                [T::lit(u), T::lit(-v), T::lit(zz.sqrt())]
            } else {
                wavy.get(y, x)
            }
        })
        .collect();
    NormalMap::from_unnormalized(size, size, data).expect("camera-facing normals")
}

fn smooth_albedo<T: Scalar>(size: usize, seed: u64) -> Image<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa1bed0);
    let base: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.3..0.7));
    let freq: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.1..0.5));
    Image::from_fn(size, size, 3, |y, x, k| {
        let t = (freq[k] * x as f64 + 0.7 * freq[k] * y as f64).sin();
        T::lit(base[k] + 0.2 * t)
    })
}

/// A square scene whose foreground is the background's own object: both layers are the same
/// exactly Lambertian image lit by [`default_light`], and alpha is a centred disc.
pub fn self_composite_scene<T: Scalar>(size: usize, seed: u64) -> Scene<T> {
    textured_self_composite_scene(size, seed, 0.0)
}

/// A corpus entry holding the background layers of [`self_composite_scene`] with its disc
/// mask: exactly Lambertian everywhere.
pub fn lambertian_entry<T: Scalar>(size: usize, seed: u64) -> CorpusEntry<T> {
    let scene = self_composite_scene(size, seed);
    CorpusEntry {
        image: scene.bg_image,
        albedo: scene.bg_albedo,
        shading: scene.bg_shading,
        normals: scene.bg_normals,
        depth: scene.bg_depth,
        mask: scene.alpha,
    }
}

/// Like [`self_composite_scene`], with the shading multiplied by `1 + amplitude · noise`,
/// `noise` uniform in `[-1, 1]`, so that it is no longer exactly Lambertian.
pub fn textured_self_composite_scene<T: Scalar>(size: usize, seed: u64, amplitude: f64) -> Scene<T> {
    let alpha = disc_mask::<T>(size);
    let normals = object_normals(size, seed, &alpha);
    let albedo = smooth_albedo::<T>(size, seed);
    let lambertian = render_lambertian(&normals, &default_light());
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let noisy = lambertian
        .data()
        .iter()
        .map(|s| *s * T::lit(1.0 + amplitude * rng.random_range(-1.0..=1.0)))
        .collect();
    let shading = Image::new(size, size, 1, noisy).expect("non-negative shading");
    let image = reconstruct(&albedo, &shading).expect("matching layers");
    let image = Image::new(size, size, 3, image.into_data()).expect("non-negative image");
    let c = size as f64 / 2.0;
    let depth = DepthMap::new(
        size,
        size,
        (0..size * size)
            .map(|i| {
                let (y, x) = ((i / size) as f64, (i % size) as f64);
                T::lit(1.0 / (1.0 + 0.05 * ((x - c).abs() + (y - c).abs())))
            })
            .collect(),
    )
    .expect("positive depth");
    Scene {
        fg_image: image.clone(),
        bg_image: image,
        fg_albedo: albedo.clone(),
        bg_albedo: albedo,
        fg_shading: shading.clone(),
        bg_shading: shading,
        fg_normals: normals.clone(),
        bg_normals: normals,
        bg_depth: depth,
        alpha,
    }
}
