//! Directional-plus-ambient illumination: Lambertian rendering from a normal map and
//! recovery of the light from observed shading.
//!
//! Normals live in camera space with x to the right, y up and z toward the camera, so
//! visible surfaces have `nz >= 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::optim::{self, AdamConfig};
use crate::raster::{bilinear_taps, AlphaMask, Image};
use crate::scalar::Scalar;

/// Allowed deviation of a stored normal from unit length.
pub const UNIT_TOLERANCE: f64 = 1e-3;

/// Fewest usable pixels a light fit accepts.
pub const MIN_FIT_PIXELS: usize = 4;

/// Per-pixel unit normals.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap<T> {
    height: usize,
    width: usize,
    data: Vec<[T; 3]>,
}

fn normalize_or_up<T: Scalar>(n: [T; 3]) -> [T; 3] {
    let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    if !(len > T::lit(1e-12)) || !len.is_finite() {
        return [T::zero(), T::zero(), T::one()];
    }
    [n[0] / len, n[1] / len, n[2] / len]
}

impl<T: Scalar> NormalMap<T> {
    /// Validates unit length (within [`UNIT_TOLERANCE`]) and `nz >= 0`.
    pub fn new(height: usize, width: usize, data: Vec<[T; 3]>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::DimensionMismatch {
                context: "normal map buffer",
                expected: format!("{} normals", height * width),
                found: format!("{} normals", data.len()),
            });
        }
        let tol = T::lit(UNIT_TOLERANCE);
        for (i, n) in data.iter().enumerate() {
            if n.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("normal at pixel {i}")));
            }
            let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            if (len - T::one()).abs() > tol {
                return Err(Error::Domain(format!(
                    "normal at pixel {i} has length {len}, expected unit length"
                )));
            }
            if n[2] < -tol {
                return Err(Error::Domain(format!(
                    "normal at pixel {i} faces away from the camera (nz = {})",
                    n[2]
                )));
            }
        }
        Ok(Self { height, width, data })
    }

    /// Normalizes every vector; zero vectors become `(0, 0, 1)`. Back-facing results are
    /// still rejected.
    pub fn from_unnormalized(height: usize, width: usize, data: Vec<[T; 3]>) -> Result<Self> {
        Self::new(height, width, data.into_iter().map(normalize_or_up).collect())
    }

    /// Reads a 3-channel signed image holding `(nx, ny, nz)` per pixel.
    pub fn from_image(img: &Image<T>) -> Result<Self> {
        img.ensure_channels(3, "normal map")?;
        let data = img.data().chunks_exact(3).map(|p| [p[0], p[1], p[2]]).collect();
        Self::from_unnormalized(img.height(), img.width(), data)
    }

    pub fn to_image(&self) -> Image<T> {
        Image::signed(
            self.height,
            self.width,
            3,
            self.data.iter().flatten().copied().collect(),
        )
        .expect("finite normals")
    }

    pub fn filled(height: usize, width: usize, normal: [T; 3]) -> Result<Self> {
        Self::new(height, width, vec![normal; height * width])
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> [T; 3] {
        self.data[y * self.width + x]
    }

    pub fn data(&self) -> &[[T; 3]] {
        &self.data
    }

    /// Alpha-blends two normal fields and renormalizes.
    pub fn blend(fg: &Self, bg: &Self, alpha: &AlphaMask<T>) -> Result<Self> {
        if (fg.height, fg.width) != (bg.height, bg.width) {
            return Err(Error::DimensionMismatch {
                context: "normal blend",
                expected: format!("{}x{}", fg.height, fg.width),
                found: format!("{}x{}", bg.height, bg.width),
            });
        }
        alpha.ensure_dims(fg.height, fg.width, "normal blend mask")?;
        let data = fg
            .data
            .iter()
            .zip(&bg.data)
            .zip(alpha.data())
            .map(|((f, b), a)| {
                let a = *a;
                let ia = T::one() - a;
                normalize_or_up([a * f[0] + ia * b[0], a * f[1] + ia * b[1], a * f[2] + ia * b[2]])
            })
            .collect();
        Ok(Self {
            height: fg.height,
            width: fg.width,
            data,
        })
    }

    /// Bilinear resampling followed by renormalization.
    pub fn resize_bilinear(&self, height: usize, width: usize) -> Self {
        let sy = T::count(self.height) / T::count(height);
        let sx = T::count(self.width) / T::count(width);
        let half = T::lit(0.5);
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            let (y0, y1, fy) = bilinear_taps(T::count(y), sy, half, self.height);
            for x in 0..width {
                let (x0, x1, fx) = bilinear_taps(T::count(x), sx, half, self.width);
                let mut n = [T::zero(); 3];
                for (k, v) in n.iter_mut().enumerate() {
                    let top = self.get(y0, x0)[k] * (T::one() - fx) + self.get(y0, x1)[k] * fx;
                    let bot = self.get(y1, x0)[k] * (T::one() - fx) + self.get(y1, x1)[k] * fx;
                    *v = top * (T::one() - fy) + bot * fy;
                }
                data.push(normalize_or_up(n));
            }
        }
        Self { height, width, data }
    }
}

/// Feasible set for the light parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LightConstraint {
    /// `lz >= 0` and `c >= 0`: the light sits in the camera-facing hemisphere.
    #[default]
    Hemisphere,
    /// Every component of the direction and the ambient term non-negative.
    Octant,
}

impl LightConstraint {
    /// Projects `[lx, ly, lz, c]` onto the feasible set.
    pub fn project<T: Scalar>(self, theta: &mut [T]) {
        match self {
            LightConstraint::Hemisphere => {
                theta[2] = theta[2].max(T::zero());
                theta[3] = theta[3].max(T::zero());
            }
            LightConstraint::Octant => theta.iter_mut().for_each(|v| *v = v.max(T::zero())),
        }
    }

    pub fn contains<T: Scalar>(self, light: &LightModel<T>) -> bool {
        let [lx, ly, lz] = light.direction;
        let c = light.ambient;
        match self {
            LightConstraint::Hemisphere => lz >= T::zero() && c >= T::zero(),
            LightConstraint::Octant => [lx, ly, lz, c].iter().all(|v| *v >= T::zero()),
        }
    }
}

/// Directional light `l` (its magnitude is the intensity) plus ambient term `c`.
///
/// Serialized as `{"lx", "ly", "lz", "c"}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(
    into = "LightRecord<T>",
    from = "LightRecord<T>",
    bound = "T: Scalar + Serialize + for<'a> Deserialize<'a>"
)]
pub struct LightModel<T> {
    pub direction: [T; 3],
    pub ambient: T,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct LightRecord<T> {
    lx: T,
    ly: T,
    lz: T,
    c: T,
}

impl<T> From<LightModel<T>> for LightRecord<T> {
    fn from(l: LightModel<T>) -> Self {
        let [lx, ly, lz] = l.direction;
        Self {
            lx,
            ly,
            lz,
            c: l.ambient,
        }
    }
}

impl<T> From<LightRecord<T>> for LightModel<T> {
    fn from(r: LightRecord<T>) -> Self {
        Self {
            direction: [r.lx, r.ly, r.lz],
            ambient: r.c,
        }
    }
}

/// Human-oriented light description. Azimuth rotates about the vertical axis starting at
/// the camera direction; elevation tilts upward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LightAngles<T> {
    pub azimuth: T,
    pub elevation: T,
    pub intensity: T,
    pub ambient: T,
}

impl<T: Scalar> LightModel<T> {
    pub fn new(direction: [T; 3], ambient: T) -> Result<Self> {
        if direction.iter().chain([&ambient]).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("light parameters".into()));
        }
        Ok(Self { direction, ambient })
    }

    /// `l = intensity · (cos e · sin a, sin e, cos e · cos a)`, `c = ambient`.
    pub fn from_angles(azimuth: T, elevation: T, intensity: T, ambient: T) -> Result<Self> {
        for (name, v) in [("intensity", intensity), ("ambient", ambient)] {
            if !(v.is_finite() && v >= T::zero()) {
                return Err(Error::OutOfRange {
                    field: name.into(),
                    value: v.as_f64(),
                    lo: 0.0,
                    hi: f64::INFINITY,
                });
            }
        }
        if !(azimuth.is_finite() && elevation.is_finite()) {
            return Err(Error::NonFinite("light angles".into()));
        }
        let (se, ce) = elevation.sin_cos();
        let (sa, ca) = azimuth.sin_cos();
        Ok(Self {
            direction: [intensity * ce * sa, intensity * se, intensity * ce * ca],
            ambient,
        })
    }

    /// Inverse of [`LightModel::from_angles`]; a zero direction maps to zero angles.
    pub fn to_angles(&self) -> LightAngles<T> {
        let [lx, ly, lz] = self.direction;
        let intensity = (lx * lx + ly * ly + lz * lz).sqrt();
        if intensity == T::zero() {
            return LightAngles {
                azimuth: T::zero(),
                elevation: T::zero(),
                intensity,
                ambient: self.ambient,
            };
        }
        LightAngles {
            azimuth: lx.atan2(lz),
            elevation: (ly / intensity).max(-T::one()).min(T::one()).asin(),
            intensity,
            ambient: self.ambient,
        }
    }

    /// Unclamped linear response `n · l + c`.
    #[inline]
    pub fn linear_response(&self, n: [T; 3]) -> T {
        n[0] * self.direction[0] + n[1] * self.direction[1] + n[2] * self.direction[2] + self.ambient
    }

    /// Lambertian shading `max(0, n · l + c)`.
    #[inline]
    pub fn shade(&self, n: [T; 3]) -> T {
        self.linear_response(n).max(T::zero())
    }

    fn to_params(self) -> [T; 4] {
        let [lx, ly, lz] = self.direction;
        [lx, ly, lz, self.ambient]
    }

    fn from_params(p: &[T]) -> Self {
        Self {
            direction: [p[0], p[1], p[2]],
            ambient: p[3],
        }
    }
}

/// A light given either as the raw vector `{lx, ly, lz, c}` or as angles
/// `{azimuth, elevation, intensity, ambient}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LightSpec<T> {
    Vector { lx: T, ly: T, lz: T, c: T },
    Angles(LightAngles<T>),
}

impl<T: Scalar> LightSpec<T> {
    /// Converts to a model, rejecting non-finite values and negative ambient or intensity.
    pub fn to_model(self) -> Result<LightModel<T>> {
        match self {
            LightSpec::Vector { lx, ly, lz, c } => {
                for (field, v) in [("lx", lx), ("ly", ly), ("lz", lz), ("c", c)] {
                    if !v.is_finite() {
                        return Err(Error::NonFinite(format!("light field `{field}`")));
                    }
                }
                if c < T::zero() {
                    return Err(Error::OutOfRange {
                        field: "c".into(),
                        value: c.as_f64(),
                        lo: 0.0,
                        hi: f64::INFINITY,
                    });
                }
                LightModel::new([lx, ly, lz], c)
            }
            LightSpec::Angles(a) => {
                let half_pi = std::f64::consts::FRAC_PI_2;
                let e = a.elevation.as_f64();
                if !(-half_pi..=half_pi).contains(&e) {
                    return Err(Error::OutOfRange {
                        field: "elevation".into(),
                        value: e,
                        lo: -half_pi,
                        hi: half_pi,
                    });
                }
                LightModel::from_angles(a.azimuth, a.elevation, a.intensity, a.ambient)
            }
        }
    }
}

impl<T> From<LightModel<T>> for LightSpec<T> {
    fn from(l: LightModel<T>) -> Self {
        let [lx, ly, lz] = l.direction;
        LightSpec::Vector {
            lx,
            ly,
            lz,
            c: l.ambient,
        }
    }
}

/// Renders `max(0, n · l + c)` per pixel.
pub fn render_lambertian<T: Scalar>(normals: &NormalMap<T>, light: &LightModel<T>) -> Image<T> {
    Image::new(
        normals.height,
        normals.width,
        1,
        normals.data.iter().map(|n| light.shade(*n)).collect(),
    )
    .expect("clamped shading is finite and non-negative")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions<T> {
    pub constraint: LightConstraint,
    pub learning_rate: T,
    pub iterations: usize,
    /// Tikhonov weight on the direction components, relative to the per-pixel normal matrix.
    pub ridge: T,
    /// Use every `stride`-th usable pixel.
    pub stride: usize,
    /// Condition number of the normal matrix above which the fit is flagged degenerate.
    pub condition_limit: T,
}

impl<T: Scalar> Default for FitOptions<T> {
    fn default() -> Self {
        Self {
            constraint: LightConstraint::Hemisphere,
            learning_rate: T::lit(1e-2),
            iterations: 500,
            ridge: T::lit(1e-6),
            stride: 1,
            condition_limit: T::lit(1e8),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar + Serialize + for<'a> Deserialize<'a>")]
pub struct FitReport<T> {
    pub light: LightModel<T>,
    /// Mean squared residual of the linear model over the pixels used.
    pub residual_mse: T,
    pub iterations: usize,
    pub degenerate: bool,
    pub condition_number: T,
    pub pixels_used: usize,
}

/// Sufficient statistics of the quadratic fit objective over the selected pixels,
/// normalized by the pixel count.
struct NormalEquations<T> {
    gram: [[T; 4]; 4],
    rhs: [T; 4],
    mean_sq: T,
    count: usize,
}

impl<T: Scalar> NormalEquations<T> {
    fn value(&self, p: &[T]) -> T {
        let mut quad = T::zero();
        for i in 0..4 {
            for j in 0..4 {
                quad += p[i] * self.gram[i][j] * p[j];
            }
        }
        let lin: T = (0..4).map(|i| self.rhs[i] * p[i]).sum();
        (quad - lin - lin + self.mean_sq).max(T::zero())
    }

    fn gradient(&self, p: &[T]) -> Vec<T> {
        (0..4)
            .map(|i| {
                let mp: T = (0..4).map(|j| self.gram[i][j] * p[j]).sum();
                T::lit(2.0) * (mp - self.rhs[i])
            })
            .collect()
    }

    fn condition_number(&self) -> T {
        let eig = linalg::symmetric_eigenvalues(self.gram);
        let (lo, hi) = (eig[0], eig[3]);
        if lo <= T::zero() {
            T::infinity()
        } else {
            hi / lo
        }
    }

    fn ridge_solve(&self, ridge: T) -> [T; 4] {
        let mut a = self.gram;
        for (i, row) in a.iter_mut().enumerate().take(3) {
            row[i] += ridge;
        }
        linalg::solve(a, self.rhs).expect("ridge-regularized normal matrix is positive definite")
    }
}

struct FitProblem<T> {
    samples: Vec<([T; 3], T)>,
}

impl<T: Scalar> FitProblem<T> {
    fn gather(normals: &NormalMap<T>, shading: &Image<T>, mask: Option<&AlphaMask<T>>, stride: usize) -> Result<Self> {
        shading.ensure_channels(1, "light fit shading")?;
        shading.ensure_dims(normals.height, normals.width, "light fit shading")?;
        if let Some(m) = mask {
            m.ensure_dims(normals.height, normals.width, "light fit mask")?;
        }
        let half = T::lit(0.5);
        let samples: Vec<_> = (0..normals.data.len())
            .filter(|&i| mask.is_none_or(|m| m.data()[i] > half))
            .step_by(stride.max(1))
            .map(|i| (normals.data[i], shading.data()[i]))
            .collect();
        if samples.len() < MIN_FIT_PIXELS {
            return Err(Error::InsufficientData {
                needed: MIN_FIT_PIXELS,
                found: samples.len(),
            });
        }
        Ok(Self { samples })
    }

    fn normal_equations(&self) -> NormalEquations<T> {
        let mut gram = [[T::zero(); 4]; 4];
        let mut rhs = [T::zero(); 4];
        let mut sq = T::zero();
        for (n, s) in &self.samples {
            let row = [n[0], n[1], n[2], T::one()];
            for i in 0..4 {
                for j in 0..4 {
                    gram[i][j] += row[i] * row[j];
                }
                rhs[i] += row[i] * *s;
            }
            sq += *s * *s;
        }
        let inv = T::one() / T::count(self.samples.len());
        gram.iter_mut().flatten().for_each(|v| *v *= inv);
        rhs.iter_mut().for_each(|v| *v *= inv);
        NormalEquations {
            gram,
            rhs,
            mean_sq: sq * inv,
            count: self.samples.len(),
        }
    }

    fn residual_mse(&self, light: &LightModel<T>) -> T {
        let total: T = self
            .samples
            .iter()
            .map(|(n, s)| {
                let r = *s - light.linear_response(*n);
                r * r
            })
            .sum();
        total / T::count(self.samples.len())
    }
}

/// Least-squares light fit with projected Adam enforcing `opts.constraint`.
///
/// Starts from the ridge solution projected onto the feasible set. When `mask` is given only
/// pixels with alpha above one half contribute.
pub fn fit_light_constrained<T: Scalar>(
    normals: &NormalMap<T>,
    shading: &Image<T>,
    mask: Option<&AlphaMask<T>>,
    opts: &FitOptions<T>,
) -> Result<FitReport<T>> {
    let problem = FitProblem::gather(normals, shading, mask, opts.stride)?;
    let eq = problem.normal_equations();
    let condition = eq.condition_number();

    let mut init = eq.ridge_solve(opts.ridge).to_vec();
    opts.constraint.project(&mut init);
    let objective = |p: &[T]| (eq.value(p), eq.gradient(p));
    let constraint = opts.constraint;
    let best = optim::minimize(
        &objective,
        init,
        |p: &mut [T]| constraint.project(p),
        opts.iterations,
        AdamConfig::with_lr(opts.learning_rate),
    )?;
    let light = LightModel::from_params(&best.params);
    Ok(FitReport {
        residual_mse: problem.residual_mse(&light),
        light,
        iterations: best.iterations,
        degenerate: condition > opts.condition_limit,
        condition_number: condition,
        pixels_used: eq.count,
    })
}

/// Closed-form ridge least squares with no feasibility projection.
pub fn fit_light_lstsq<T: Scalar>(
    normals: &NormalMap<T>,
    shading: &Image<T>,
    mask: Option<&AlphaMask<T>>,
    opts: &FitOptions<T>,
) -> Result<FitReport<T>> {
    let problem = FitProblem::gather(normals, shading, mask, opts.stride)?;
    let eq = problem.normal_equations();
    let condition = eq.condition_number();
    let light = LightModel::from_params(&eq.ridge_solve(opts.ridge));
    Ok(FitReport {
        residual_mse: problem.residual_mse(&light),
        light,
        iterations: 0,
        degenerate: condition > opts.condition_limit,
        condition_number: condition,
        pixels_used: eq.count,
    })
}

/// Per-pixel form of the fit objective and its gradient with respect to `[lx, ly, lz, c]`.
pub fn light_objective<T: Scalar>(normals: &NormalMap<T>, shading: &Image<T>, params: &[T]) -> (T, Vec<T>) {
    let light = LightModel::from_params(params);
    let n = T::count(normals.data.len());
    let mut value = T::zero();
    let mut grad = vec![T::zero(); 4];
    for (nv, s) in normals.data.iter().zip(shading.data()) {
        let r = light.linear_response(*nv) - *s;
        value += r * r;
        let row = [nv[0], nv[1], nv[2], T::one()];
        for (g, a) in grad.iter_mut().zip(row) {
            *g += T::lit(2.0) * r * a;
        }
    }
    grad.iter_mut().for_each(|g| *g /= n);
    (value / n, grad)
}

impl<T: Scalar> From<LightModel<T>> for [T; 4] {
    fn from(l: LightModel<T>) -> Self {
        l.to_params()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic;
    use std::f64::consts::FRAC_PI_2;

    fn light(l: [f64; 3], c: f64) -> LightModel<f64> {
        LightModel::new(l, c).unwrap()
    }

    fn l2(a: &LightModel<f64>, b: &LightModel<f64>) -> f64 {
        let pa: [f64; 4] = (*a).into();
        let pb: [f64; 4] = (*b).into();
        pa.iter().zip(pb).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    }

    #[test]
    fn render_examples() {
        let up = NormalMap::filled(2, 2, [0.0, 0.0, 1.0]).unwrap();
        let s = render_lambertian(&up, &light([0.0, 0.0, 1.0], 0.0));
        assert!(s.data().iter().all(|v| *v == 1.0));
        let s = render_lambertian(&up, &light([0.0, 0.0, 0.0], 0.5));
        assert!(s.data().iter().all(|v| *v == 0.5));

        let normals = synthetic::sphere_normals::<f64>(16);
        let l = light([0.3, 0.2, 0.8], 0.2);
        let s = render_lambertian(&normals, &l);
        for y in 0..16 {
            for x in 0..16 {
                let n = normals.get(y, x);
                let expect = (n[0] * 0.3 + n[1] * 0.2 + n[2] * 0.8 + 0.2).max(0.0);
                assert_eq!(s.get(y, x, 0), expect);
            }
        }
    }

    #[test]
    fn back_facing_light_clamps_to_zero() {
        let n = NormalMap::filled(1, 1, [0.0, 0.0, 1.0]).unwrap();
        let s = render_lambertian(&n, &light([0.0, 0.0, -2.0], 0.5));
        assert_eq!(s.data(), &[0.0]);
    }

    #[test]
    fn normal_map_validation() {
        assert!(NormalMap::<f64>::new(1, 1, vec![[0.0, 0.0, 2.0]]).is_err());
        assert!(NormalMap::<f64>::new(1, 1, vec![[0.0, 0.6, -0.8]]).is_err());
        let n = NormalMap::<f64>::from_unnormalized(1, 2, vec![[0.0, 0.0, 0.0], [3.0, 0.0, 4.0]]).unwrap();
        assert_eq!(n.get(0, 0), [0.0, 0.0, 1.0]);
        assert!((n.get(0, 1)[0] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn recovers_generating_light() {
        let normals = synthetic::cone_normals::<f64>(24, 24, std::f64::consts::FRAC_PI_3, 7);
        let truth = light([0.3, 0.2, 0.8], 0.2);
        assert!(normals.data().iter().all(|n| truth.linear_response(*n) > 0.0));
        let shading = render_lambertian(&normals, &truth);
        let opts = FitOptions::default();
        let c = fit_light_constrained(&normals, &shading, None, &opts).unwrap();
        let u = fit_light_lstsq(&normals, &shading, None, &opts).unwrap();
        assert!(l2(&c.light, &truth) < 1e-3, "{c:?}");
        assert!(l2(&u.light, &truth) < 1e-3, "{u:?}");
        assert!(l2(&c.light, &u.light) < 1e-4);
        assert!(c.residual_mse < 1e-6 && !c.degenerate);
    }

    #[test]
    fn constant_shading_fits_ambient_only() {
        let normals = synthetic::hemisphere_normals::<f64>(16, 16, 3);
        let shading = Image::filled(16, 16, 1, 0.6);
        let u = fit_light_lstsq(&normals, &shading, None, &FitOptions::default()).unwrap();
        assert!(l2(&u.light, &light([0.0; 3], 0.6)) < 1e-4, "{u:?}");
        let c = fit_light_constrained(&normals, &shading, None, &FitOptions::default()).unwrap();
        assert!(l2(&c.light, &light([0.0; 3], 0.6)) < 1e-4, "{c:?}");
    }

    #[test]
    fn flat_wall_is_degenerate_but_finite() {
        let normals = NormalMap::filled(8, 8, [0.0, 0.0, 1.0]).unwrap();
        let shading = Image::filled(8, 8, 1, 0.7f64);
        let u = fit_light_lstsq(&normals, &shading, None, &FitOptions::default()).unwrap();
        assert!(u.degenerate);
        assert!(u.light.direction.iter().all(|v| v.is_finite()));
        assert!((u.light.linear_response([0.0, 0.0, 1.0]) - 0.7).abs() < 1e-6);
        let c = fit_light_constrained(&normals, &shading, None, &FitOptions::default()).unwrap();
        assert!(c.degenerate);
    }

    #[test]
    fn zero_shading_gives_zero_light() {
        let normals = synthetic::hemisphere_normals::<f64>(8, 8, 1);
        let shading = Image::filled(8, 8, 1, 0.0);
        let u = fit_light_lstsq(&normals, &shading, None, &FitOptions::default()).unwrap();
        assert!(u
            .light
            .direction
            .iter()
            .chain([&u.light.ambient])
            .all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn insufficient_pixels() {
        let normals = synthetic::hemisphere_normals::<f64>(4, 4, 1);
        let shading = Image::filled(4, 4, 1, 0.5);
        let mask = AlphaMask::from_fn(4, 4, |y, x| if y == 0 && x < 3 { 1.0 } else { 0.0 });
        let err = fit_light_lstsq(&normals, &shading, Some(&mask), &FitOptions::default());
        assert!(matches!(err, Err(Error::InsufficientData { found: 3, .. })));
    }

    #[test]
    fn octant_mode_clamps_every_component() {
        let normals = synthetic::hemisphere_normals::<f64>(24, 24, 9);
        let truth = light([-0.3, 0.2, 0.8], 0.9);
        let shading = render_lambertian(&normals, &truth);
        let opts = FitOptions {
            constraint: LightConstraint::Octant,
            ..FitOptions::default()
        };
        let c = fit_light_constrained(&normals, &shading, None, &opts).unwrap();
        assert!(LightConstraint::Octant.contains(&c.light));
        let unconstrained = fit_light_lstsq(&normals, &shading, None, &opts).unwrap();
        assert!(c.residual_mse >= unconstrained.residual_mse);
        let hemi = fit_light_constrained(&normals, &shading, None, &FitOptions::default()).unwrap();
        assert!(l2(&hemi.light, &truth) < 1e-3);
    }

    #[test]
    fn angle_parameterization() {
        let l = LightModel::from_angles(0.0, 0.0, 1.0, 0.0).unwrap();
        assert_eq!(l.direction, [0.0, 0.0, 1.0]);
        let l = LightModel::from_angles(1.0, 0.5, 0.0, 0.3).unwrap();
        assert_eq!(l.direction, [0.0, 0.0, 0.0]);
        assert_eq!(l.ambient, 0.3);
        let l = LightModel::from_angles(FRAC_PI_2, 0.0, 2.0, 0.0).unwrap();
        assert!((l.direction[0] - 2.0).abs() < 1e-9);
        assert!(l.direction[1].abs() < 1e-9 && l.direction[2].abs() < 1e-9);
        assert!(LightModel::from_angles(0.0, 0.0, -1.0, 0.0).is_err());
        assert!(LightModel::from_angles(0.0, 0.0, 1.0, -0.1).is_err());

        let l = LightModel::from_angles(0.4f64, 0.3, 1.7, 0.2).unwrap();
        let a = l.to_angles();
        assert!((a.azimuth - 0.4).abs() < 1e-12 && (a.elevation - 0.3).abs() < 1e-12);
        assert!((a.intensity - 1.7).abs() < 1e-12);
    }

    #[test]
    fn light_json_is_four_numbers() {
        let l = light([0.1, 0.2, 0.3], 0.4);
        let json = serde_json::to_value(l).unwrap();
        assert_eq!(json, serde_json::json!({"lx": 0.1, "ly": 0.2, "lz": 0.3, "c": 0.4}));
        let back: LightModel<f64> = serde_json::from_value(json).unwrap();
        assert_eq!(back, l);
    }

    #[test]
    fn blended_normals_renormalize() {
        let fg = NormalMap::filled(1, 1, [1.0, 0.0, 0.0]).unwrap();
        let bg = NormalMap::filled(1, 1, [0.0, 0.0, 1.0]).unwrap();
        let n = NormalMap::blend(&fg, &bg, &AlphaMask::filled(1, 1, 0.5)).unwrap();
        let s = 0.5f64.sqrt();
        assert!((n.get(0, 0)[0] - s).abs() < 1e-15 && (n.get(0, 0)[2] - s).abs() < 1e-15);
        let opposite = NormalMap::filled(1, 1, [-1.0, 0.0, 0.0]).unwrap();
        let n = NormalMap::blend(&fg, &opposite, &AlphaMask::filled(1, 1, 0.5)).unwrap();
        assert_eq!(n.get(0, 0), [0.0, 0.0, 1.0]);
    }

    #[test]
    fn light_spec_forms() {
        let v: LightSpec<f64> = serde_json::from_str(r#"{"lx":0.1,"ly":0.2,"lz":0.9,"c":0.3}"#).unwrap();
        assert_eq!(v.to_model().unwrap(), light([0.1, 0.2, 0.9], 0.3));
        let a: LightSpec<f64> =
            serde_json::from_str(r#"{"azimuth":0.0,"elevation":0.0,"intensity":2.0,"ambient":0.5}"#).unwrap();
        assert_eq!(a.to_model().unwrap(), light([0.0, 0.0, 2.0], 0.5));
        let neg: LightSpec<f64> = serde_json::from_str(r#"{"lx":0,"ly":0,"lz":1,"c":-1}"#).unwrap();
        assert!(matches!(neg.to_model(), Err(Error::OutOfRange { field, .. }) if field == "c"));
        let bad: LightSpec<f64> =
            serde_json::from_str(r#"{"azimuth":0,"elevation":0,"intensity":-1,"ambient":0}"#).unwrap();
        assert!(matches!(bad.to_model(), Err(Error::OutOfRange { field, .. }) if field == "intensity"));
        assert!(serde_json::from_str::<LightSpec<f64>>(r#"{"lx":1}"#).is_err());
    }
}
