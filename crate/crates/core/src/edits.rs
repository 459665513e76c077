//! Parameterized albedo edits (white balance, saturation, color curve, exposure), random
//! edit sampling for self-supervised mismatch data, and an optimization-based fitter that
//! recovers edit parameters from a target albedo.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intrinsic::{composite, LUMA_REC709};
use crate::optim::{self, AdamConfig};
use crate::raster::{AlphaMask, Image};
use crate::scalar::Scalar;

pub const WHITE_BALANCE_RANGE: (f64, f64) = (0.1, 1.0);
pub const SATURATION_RANGE: (f64, f64) = (0.0, 2.0);
pub const COLOR_CURVE_RANGE: (f64, f64) = (0.0, 2.0);
pub const EXPOSURE_RANGE: (f64, f64) = (0.5, 2.0);

/// Curve values below this are treated as this value.
pub const CURVE_FLOOR: f64 = 0.01;

/// Minimum number of mask pixels (alpha > 0.5) the fitter needs.
pub const MIN_FIT_MASK_PIXELS: usize = 17;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EditKind {
    WhiteBalance,
    Saturation,
    ColorCurve,
    Exposure,
}

impl EditKind {
    pub const ALL: [EditKind; 4] = [
        EditKind::WhiteBalance,
        EditKind::Saturation,
        EditKind::ColorCurve,
        EditKind::Exposure,
    ];

    pub fn letter(self) -> char {
        match self {
            EditKind::WhiteBalance => 'W',
            EditKind::Saturation => 'S',
            EditKind::ColorCurve => 'C',
            EditKind::Exposure => 'E',
        }
    }

    pub fn from_letter(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'W' => Some(EditKind::WhiteBalance),
            'S' => Some(EditKind::Saturation),
            'C' => Some(EditKind::ColorCurve),
            'E' => Some(EditKind::Exposure),
            _ => None,
        }
    }

    fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

/// Application order: a permutation of the four edit kinds, written as e.g. `"WSCE"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EditOrder([EditKind; 4]);

impl EditOrder {
    pub fn new(kinds: [EditKind; 4]) -> Result<Self> {
        let mut seen = 0u8;
        for k in kinds {
            seen |= k.bit();
        }
        if seen != 0b1111 {
            return Err(Error::Format(
                "edit order must contain each of W, S, C, E exactly once".into(),
            ));
        }
        Ok(Self(kinds))
    }

    pub fn kinds(&self) -> [EditKind; 4] {
        self.0
    }

    /// All 24 orders, lexicographic in the canonical `W, S, C, E` ranking.
    pub fn all() -> Vec<EditOrder> {
        let mut out = Vec::with_capacity(24);
        let k = EditKind::ALL;
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    for d in 0..4 {
                        if let Ok(o) = EditOrder::new([k[a], k[b], k[c], k[d]]) {
                            out.push(o);
                        }
                    }
                }
            }
        }
        out
    }
}

impl Default for EditOrder {
    fn default() -> Self {
        Self(EditKind::ALL)
    }
}

impl fmt::Display for EditOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.iter().try_for_each(|k| write!(f, "{}", k.letter()))
    }
}

impl FromStr for EditOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let kinds: Vec<EditKind> = s
            .chars()
            .map(|c| EditKind::from_letter(c).ok_or_else(|| Error::Format(format!("unknown edit `{c}`"))))
            .collect::<Result<_>>()?;
        let kinds: [EditKind; 4] = kinds
            .try_into()
            .map_err(|_| Error::Format(format!("edit order `{s}` must have 4 letters")))?;
        Self::new(kinds)
    }
}

impl TryFrom<String> for EditOrder {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<EditOrder> for String {
    fn from(o: EditOrder) -> Self {
        o.to_string()
    }
}

/// Subset of edit kinds, serialized as a letter string such as `"WE"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EditSet(u8);

impl EditSet {
    pub const EMPTY: EditSet = EditSet(0);
    pub const ALL: EditSet = EditSet(0b1111);

    pub fn only(kind: EditKind) -> Self {
        Self(kind.bit())
    }

    pub fn from_kinds(kinds: impl IntoIterator<Item = EditKind>) -> Self {
        Self(kinds.into_iter().fold(0, |acc, k| acc | k.bit()))
    }

    pub fn contains(self, kind: EditKind) -> bool {
        self.0 & kind.bit() != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }
}

impl Default for EditSet {
    fn default() -> Self {
        Self::ALL
    }
}

impl fmt::Display for EditSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        EditKind::ALL
            .iter()
            .filter(|k| self.contains(**k))
            .try_for_each(|k| write!(f, "{}", k.letter()))
    }
}

impl FromStr for EditSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| EditKind::from_letter(c).ok_or_else(|| Error::Format(format!("unknown edit `{c}`"))))
            .collect::<Result<Vec<_>>>()
            .map(EditSet::from_kinds)
    }
}

impl TryFrom<String> for EditSet {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<EditSet> for String {
    fn from(s: EditSet) -> Self {
        s.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Serialize + for<'a> Deserialize<'a>")]
pub struct EditParams<T> {
    pub white_balance: [T; 3],
    pub saturation: T,
    pub color_curve: [T; 3],
    pub exposure: T,
    pub order: EditOrder,
}

impl<T: Scalar> EditParams<T> {
    /// Parameters under which every edit leaves `[0, 1]` albedo unchanged.
    pub fn identity(order: EditOrder) -> Self {
        Self {
            white_balance: [T::one(); 3],
            saturation: T::one(),
            color_curve: [T::one(); 3],
            exposure: T::one(),
            order,
        }
    }

    /// Checks every value against its closed range, naming the first offending field.
    pub fn validate(&self) -> Result<()> {
        let wb = self
            .white_balance
            .iter()
            .enumerate()
            .map(|(i, v)| (format!("white_balance[{i}]"), *v, WHITE_BALANCE_RANGE));
        let cc = self
            .color_curve
            .iter()
            .enumerate()
            .map(|(i, v)| (format!("color_curve[{i}]"), *v, COLOR_CURVE_RANGE));
        let rest = [
            ("saturation".to_string(), self.saturation, SATURATION_RANGE),
            ("exposure".to_string(), self.exposure, EXPOSURE_RANGE),
        ];
        for (field, v, range) in wb.chain(cc).chain(rest) {
            check_range(&field, v, range)?;
        }
        Ok(())
    }

    /// Flat vector `[wb_r, wb_g, wb_b, saturation, curve_r, curve_g, curve_b, exposure]`.
    pub fn to_vector(self) -> [T; 8] {
        let [w0, w1, w2] = self.white_balance;
        let [c0, c1, c2] = self.color_curve;
        [w0, w1, w2, self.saturation, c0, c1, c2, self.exposure]
    }

    /// Inverse of [`EditParams::to_vector`]; panics if `v` has fewer than 8 entries.
    pub fn from_vector(v: &[T], order: EditOrder) -> Self {
        Self {
            white_balance: [v[0], v[1], v[2]],
            saturation: v[3],
            color_curve: [v[4], v[5], v[6]],
            exposure: v[7],
            order,
        }
    }
}

/// Edit parameters plus the subset of edits that is active; the JSON form of `--edits`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Serialize + for<'a> Deserialize<'a>")]
pub struct EditSpec<T> {
    #[serde(flatten)]
    pub params: EditParams<T>,
    #[serde(default)]
    pub active: EditSet,
}

fn check_range<T: Scalar>(field: &str, v: T, (lo, hi): (f64, f64)) -> Result<()> {
    let f = v.as_f64();
    if !(f >= lo && f <= hi) {
        return Err(Error::OutOfRange {
            field: field.to_string(),
            value: f,
            lo,
            hi,
        });
    }
    Ok(())
}

const PARAM_RANGES: [(f64, f64); 8] = [
    WHITE_BALANCE_RANGE,
    WHITE_BALANCE_RANGE,
    WHITE_BALANCE_RANGE,
    SATURATION_RANGE,
    COLOR_CURVE_RANGE,
    COLOR_CURVE_RANGE,
    COLOR_CURVE_RANGE,
    EXPOSURE_RANGE,
];

/// One pixel's RGB together with its Jacobian with respect to the 8 edit parameters.
#[derive(Clone, Copy)]
struct Dual<T> {
    v: [T; 3],
    d: [[T; 8]; 3],
}

impl<T: Scalar> Dual<T> {
    fn constant(v: [T; 3]) -> Self {
        Self {
            v,
            d: [[T::zero(); 8]; 3],
        }
    }

    fn apply(self, kind: EditKind, p: &[T; 8]) -> Self {
        match kind {
            EditKind::Exposure => self.scale([p[7]; 3], |_| Some(7)),
            EditKind::WhiteBalance => self.scale([p[0], p[1], p[2]], Some),
            EditKind::Saturation => self.saturate(p[3]),
            EditKind::ColorCurve => self.curve([p[4], p[5], p[6]]),
        }
    }

    fn scale(self, gains: [T; 3], param: impl Fn(usize) -> Option<usize>) -> Self {
        let mut out = self;
        for c in 0..3 {
            out.v[c] = gains[c] * self.v[c];
            for j in 0..8 {
                out.d[c][j] = gains[c] * self.d[c][j];
            }
            if let Some(j) = param(c) {
                out.d[c][j] += self.v[c];
            }
        }
        out
    }

    fn saturate(self, s: T) -> Self {
        let w = LUMA_REC709.map(T::lit);
        let lum = w[0] * self.v[0] + w[1] * self.v[1] + w[2] * self.v[2];
        let mut dlum = [T::zero(); 8];
        for (j, dl) in dlum.iter_mut().enumerate() {
            *dl = w[0] * self.d[0][j] + w[1] * self.d[1][j] + w[2] * self.d[2][j];
        }
        let mut out = self;
        for c in 0..3 {
            let u = lum + s * (self.v[c] - lum);
            if u <= T::zero() {
                out.v[c] = T::zero();
                out.d[c] = [T::zero(); 8];
                continue;
            }
            out.v[c] = u;
            for j in 0..8 {
                out.d[c][j] = (T::one() - s) * dlum[j] + s * self.d[c][j];
            }
            out.d[c][3] += self.v[c] - lum;
        }
        out
    }

    fn curve(self, k: [T; 3]) -> Self {
        let floor = T::lit(CURVE_FLOOR);
        let mut out = self;
        for c in 0..3 {
            let x = self.v[c];
            let kc = k[c].max(floor);
            let e = T::one() / kc;
            if x <= T::zero() || x >= T::one() {
                out.v[c] = x.max(T::zero()).min(T::one());
                out.d[c] = [T::zero(); 8];
                continue;
            }
            let y = x.powf(e);
            out.v[c] = y;
            let slope = e * y / x;
            for j in 0..8 {
                out.d[c][j] = slope * self.d[c][j];
            }
            if k[c] > floor {
                out.d[c][4 + c] += -y * x.ln() / (kc * kc);
            }
        }
        out
    }
}

fn edit_pixel<T: Scalar>(v: [T; 3], p: &[T; 8], order: EditOrder, active: EditSet) -> Dual<T> {
    order
        .kinds()
        .into_iter()
        .filter(|k| active.contains(*k))
        .fold(Dual::constant(v), |acc, k| acc.apply(k, p))
}

fn map_pixels<T: Scalar>(a: &Image<T>, f: impl Fn([T; 3]) -> [T; 3]) -> Result<Image<T>> {
    a.ensure_channels(3, "albedo edit")?;
    let data = a.data().chunks_exact(3).flat_map(|p| f([p[0], p[1], p[2]])).collect();
    Image::new(a.height(), a.width(), 3, data)
}

fn single_edit<T: Scalar>(a: &Image<T>, kind: EditKind, p: [T; 8]) -> Result<Image<T>> {
    map_pixels(a, |v| Dual::constant(v).apply(kind, &p).v)
}

fn with_params<T: Scalar>(f: impl FnOnce(&mut EditParams<T>)) -> [T; 8] {
    let mut p = EditParams::identity(EditOrder::default());
    f(&mut p);
    p.to_vector()
}

/// `out = k · a`.
pub fn apply_exposure<T: Scalar>(a: &Image<T>, k: T) -> Result<Image<T>> {
    check_range("exposure", k, EXPOSURE_RANGE)?;
    single_edit(a, EditKind::Exposure, with_params(|p| p.exposure = k))
}

/// `out = max(0, L + s · (a - L))` with `L` the Rec. 709 luminance.
pub fn apply_saturation<T: Scalar>(a: &Image<T>, s: T) -> Result<Image<T>> {
    check_range("saturation", s, SATURATION_RANGE)?;
    single_edit(a, EditKind::Saturation, with_params(|p| p.saturation = s))
}

/// Per-channel gains.
pub fn apply_white_balance<T: Scalar>(a: &Image<T>, gains: [T; 3]) -> Result<Image<T>> {
    for (i, g) in gains.iter().enumerate() {
        check_range(&format!("white_balance[{i}]"), *g, WHITE_BALANCE_RANGE)?;
    }
    single_edit(a, EditKind::WhiteBalance, with_params(|p| p.white_balance = gains))
}

/// Per-channel power curve `clamp(a, 0, 1)^(1 / max(k, 0.01))`.
pub fn apply_color_curve<T: Scalar>(a: &Image<T>, k: [T; 3]) -> Result<Image<T>> {
    for (i, v) in k.iter().enumerate() {
        check_range(&format!("color_curve[{i}]"), *v, COLOR_CURVE_RANGE)?;
    }
    single_edit(a, EditKind::ColorCurve, with_params(|p| p.color_curve = k))
}

/// Applies the active edits in `params.order` to the whole image, then composites the result
/// over the original through `mask`.
pub fn apply_edit_sequence<T: Scalar>(
    a: &Image<T>,
    mask: &AlphaMask<T>,
    params: &EditParams<T>,
    active: EditSet,
) -> Result<Image<T>> {
    params.validate()?;
    a.ensure_channels(3, "albedo edit")?;
    mask.ensure_dims(a.height(), a.width(), "albedo edit mask")?;
    if active.is_empty() {
        return Ok(a.clone());
    }
    let p = params.to_vector();
    let edited = map_pixels(a, |v| edit_pixel(v, &p, params.order, active).v)?;
    composite(&edited, a, mask)
}

/// Draws a random edit: 1–4 active edits, an order uniform over all 24 permutations and
/// each parameter uniform in its range. Deterministic in `seed`.
pub fn sample_random_edits<T: Scalar>(seed: u64) -> (EditParams<T>, EditSet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.random_range(1..=4usize);
    let mut order = EditKind::ALL;
    order.shuffle(&mut rng);
    let mut pool = EditKind::ALL;
    pool.shuffle(&mut rng);
    let active = EditSet::from_kinds(pool.into_iter().take(count));
    let mut draw = |(lo, hi): (f64, f64)| T::lit(rng.random_range(lo..=hi));
    let params = EditParams {
        white_balance: [
            draw(WHITE_BALANCE_RANGE),
            draw(WHITE_BALANCE_RANGE),
            draw(WHITE_BALANCE_RANGE),
        ],
        saturation: draw(SATURATION_RANGE),
        color_curve: [
            draw(COLOR_CURVE_RANGE),
            draw(COLOR_CURVE_RANGE),
            draw(COLOR_CURVE_RANGE),
        ],
        exposure: draw(EXPOSURE_RANGE),
        order: EditOrder::new(order).expect("shuffled permutation"),
    };
    (params, active)
}

struct MaskedTarget<'a, T> {
    fg: &'a Image<T>,
    target: &'a Image<T>,
    mask: &'a AlphaMask<T>,
    weight_sum: T,
}

impl<'a, T: Scalar> MaskedTarget<'a, T> {
    fn new(fg: &'a Image<T>, target: &'a Image<T>, mask: &'a AlphaMask<T>) -> Result<Self> {
        fg.ensure_channels(3, "edit fit albedo")?;
        target.ensure_channels(3, "edit fit target")?;
        target.ensure_dims(fg.height(), fg.width(), "edit fit target")?;
        mask.ensure_dims(fg.height(), fg.width(), "edit fit mask")?;
        let active = mask.active_count();
        if active < MIN_FIT_MASK_PIXELS {
            return Err(Error::InsufficientData {
                needed: MIN_FIT_MASK_PIXELS,
                found: active,
            });
        }
        let weight_sum = mask.data().iter().copied().sum();
        Ok(Self {
            fg,
            target,
            mask,
            weight_sum,
        })
    }

    /// Alpha-weighted MSE between the masked edit composite and the target, with its gradient
    /// in parameter space.
    fn evaluate(&self, p: &[T; 8], order: EditOrder, active: EditSet) -> (T, [T; 8]) {
        let mut value = T::zero();
        let mut grad = [T::zero(); 8];
        for ((px, tg), a) in self
            .fg
            .data()
            .chunks_exact(3)
            .zip(self.target.data().chunks_exact(3))
            .zip(self.mask.data())
        {
            let a = *a;
            if a == T::zero() {
                continue;
            }
            let e = edit_pixel([px[0], px[1], px[2]], p, order, active);
            for c in 0..3 {
                let out = a * e.v[c] + (T::one() - a) * px[c];
                let r = out - tg[c];
                value += a * r * r;
                let scale = T::lit(2.0) * a * r * a;
                for j in 0..8 {
                    grad[j] += scale * e.d[c][j];
                }
            }
        }
        let norm = T::lit(3.0) * self.weight_sum;
        grad.iter_mut().for_each(|g| *g /= norm);
        (value / norm, grad)
    }
}

/// Alpha-weighted masked MSE of `apply_edit_sequence(fg, mask, params, active)` against
/// `target`, and its gradient with respect to
/// `[wb_r, wb_g, wb_b, saturation, curve_r, curve_g, curve_b, exposure]`.
pub fn edit_objective<T: Scalar>(
    fg: &Image<T>,
    target: &Image<T>,
    mask: &AlphaMask<T>,
    params: &EditParams<T>,
    active: EditSet,
) -> Result<(T, [T; 8])> {
    let problem = MaskedTarget::new(fg, target, mask)?;
    Ok(problem.evaluate(&params.to_vector(), params.order, active))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EditFitOptions<T> {
    /// Edits the fitter may use; the rest stay at identity.
    pub active: EditSet,
    pub iterations: usize,
    pub learning_rate: T,
}

impl<T: Scalar> Default for EditFitOptions<T> {
    fn default() -> Self {
        Self {
            active: EditSet::ALL,
            iterations: 400,
            learning_rate: T::lit(0.05),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EditFit<T> {
    pub params: EditParams<T>,
    pub active: EditSet,
    pub masked_mse: T,
    pub identity_mse: T,
    pub iterations: usize,
}

fn sigmoid<T: Scalar>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

/// Fits edit parameters so that the masked edit of `fg_albedo` matches `target_albedo`.
///
/// Each parameter is optimized through a sigmoid onto its range, so Adam runs unconstrained.
/// The result is never worse than the identity edit.
pub fn fit_edit_params<T: Scalar>(
    fg_albedo: &Image<T>,
    target_albedo: &Image<T>,
    mask: &AlphaMask<T>,
    order: EditOrder,
    opts: &EditFitOptions<T>,
) -> Result<EditFit<T>> {
    let problem = MaskedTarget::new(fg_albedo, target_albedo, mask)?;
    let identity = EditParams::identity(order);
    let (identity_mse, _) = problem.evaluate(&identity.to_vector(), order, opts.active);

    let to_params = |z: &[T]| -> [T; 8] {
        let mut p = [T::zero(); 8];
        for j in 0..8 {
            let (lo, hi) = PARAM_RANGES[j];
            p[j] = T::lit(lo) + T::lit(hi - lo) * sigmoid(z[j]);
        }
        p
    };
    // Identity white balance sits on the range boundary; start just inside it.
    let init: Vec<T> = identity
        .to_vector()
        .iter()
        .zip(PARAM_RANGES)
        .map(|(v, (lo, hi))| {
            let u = ((v.as_f64() - lo) / (hi - lo)).clamp(1e-3, 1.0 - 1e-3);
            T::lit((u / (1.0 - u)).ln())
        })
        .collect();
    let objective = |z: &[T]| {
        let p = to_params(z);
        let (v, g) = problem.evaluate(&p, order, opts.active);
        let gz = (0..8)
            .map(|j| {
                let s = sigmoid(z[j]);
                let (lo, hi) = PARAM_RANGES[j];
                g[j] * T::lit(hi - lo) * s * (T::one() - s)
            })
            .collect();
        (v, gz)
    };
    let best = optim::minimize(
        &objective,
        init,
        |_| {},
        opts.iterations,
        AdamConfig::with_lr(opts.learning_rate),
    )?;
    let (params, masked_mse) = if best.value < identity_mse {
        (EditParams::from_vector(&to_params(&best.params), order), best.value)
    } else {
        (identity, identity_mse)
    };
    Ok(EditFit {
        params,
        active: opts.active,
        masked_mse,
        identity_mse,
        iterations: best.iterations,
    })
}

/// Heuristic fit target when no ground truth exists: the foreground albedo with each channel's
/// masked mean and standard deviation mapped affinely onto those of the background region.
pub fn statistics_target<T: Scalar>(
    fg_albedo: &Image<T>,
    bg_albedo: &Image<T>,
    mask: &AlphaMask<T>,
) -> Result<Image<T>> {
    fg_albedo.ensure_channels(3, "statistics target foreground")?;
    bg_albedo.ensure_channels(3, "statistics target background")?;
    bg_albedo.ensure_dims(fg_albedo.height(), fg_albedo.width(), "statistics target background")?;
    mask.ensure_dims(fg_albedo.height(), fg_albedo.width(), "statistics target mask")?;
    let fg_stats = channel_stats(fg_albedo, mask.data().iter().copied());
    let bg_stats = channel_stats(bg_albedo, mask.data().iter().map(|a| T::one() - *a));
    let (Some(fg_stats), Some(bg_stats)) = (fg_stats, bg_stats) else {
        return Err(Error::InsufficientData { needed: 1, found: 0 });
    };
    let eps = T::lit(1e-6);
    Ok(Image::from_fn(fg_albedo.height(), fg_albedo.width(), 3, |y, x, k| {
        let (mf, sf) = fg_stats[k];
        let (mb, sb) = bg_stats[k];
        ((fg_albedo.get(y, x, k) - mf) * (sb / sf.max(eps)) + mb).max(T::zero())
    }))
}

fn channel_stats<T: Scalar>(img: &Image<T>, weights: impl Iterator<Item = T>) -> Option<[(T, T); 3]> {
    let mut sw = T::zero();
    let mut s1 = [T::zero(); 3];
    let mut s2 = [T::zero(); 3];
    for (px, w) in img.data().chunks_exact(3).zip(weights) {
        sw += w;
        for k in 0..3 {
            s1[k] += w * px[k];
            s2[k] += w * px[k] * px[k];
        }
    }
    if sw <= T::zero() {
        return None;
    }
    Some(std::array::from_fn(|k| {
        let mean = s1[k] / sw;
        let var = (s2[k] / sw - mean * mean).max(T::zero());
        (mean, var.sqrt())
    }))
}
