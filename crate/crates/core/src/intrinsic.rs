//! Intrinsic-model algebra: gamma transfer, `I = S · A` reconstruction, masked
//! compositing, and the small image operators the loss suite is built from.

use crate::error::{Error, Result};
use crate::raster::{AlphaMask, Image};
use crate::scalar::Scalar;

/// Display gamma assumed for sRGB-encoded inputs.
pub const DEFAULT_GAMMA: f64 = 2.2;

/// Rec. 709 luma weights for linear RGB.
pub const LUMA_REC709: [f64; 3] = [0.2126, 0.7152, 0.0722];

/// Decodes display-referred samples in `[0, 1]` to linear light with a pure power curve.
pub fn srgb_to_linear<T: Scalar>(img: &Image<T>, gamma: T) -> Result<Image<T>> {
    check_gamma(gamma)?;
    if let (Some(lo), Some(hi)) = (img.min_sample(), img.max_sample()) {
        if lo < T::zero() {
            return Err(Error::Domain(format!("minimum sample {lo} is below 0")));
        }
        if hi > T::one() {
            return Err(Error::Domain(format!("maximum sample {hi} exceeds 1")));
        }
    }
    Ok(img.map(|v| v.powf(gamma)))
}

/// Encodes linear light for display: clamp to `[0, 1]`, then the `1/gamma` power.
pub fn linear_to_srgb<T: Scalar>(img: &Image<T>, gamma: T) -> Result<Image<T>> {
    check_gamma(gamma)?;
    let inv = T::one() / gamma;
    Ok(img.map(|v| v.max(T::zero()).min(T::one()).powf(inv)))
}

fn check_gamma<T: Scalar>(gamma: T) -> Result<()> {
    if !(gamma.is_finite() && gamma > T::zero()) {
        return Err(Error::Domain(format!("gamma {gamma} must be positive")));
    }
    Ok(())
}

/// `image[y, x, k] = albedo[y, x, k] * shading[y, x]`.
pub fn reconstruct<T: Scalar>(albedo: &Image<T>, shading: &Image<T>) -> Result<Image<T>> {
    shading.ensure_channels(1, "shading")?;
    shading.ensure_dims(albedo.height(), albedo.width(), "reconstruct")?;
    let c = albedo.channels();
    let data = albedo
        .data()
        .chunks_exact(c)
        .zip(shading.data())
        .flat_map(|(px, s)| px.iter().map(move |a| *a * *s))
        .collect();
    Image::signed(albedo.height(), albedo.width(), c, data)
}

/// Per-pixel convex blend `alpha * fg + (1 - alpha) * bg`, used for albedo and shading alike.
pub fn composite<T: Scalar>(fg: &Image<T>, bg: &Image<T>, alpha: &AlphaMask<T>) -> Result<Image<T>> {
    bg.ensure_dims(fg.height(), fg.width(), "composite background")?;
    bg.ensure_channels(fg.channels(), "composite background")?;
    alpha.ensure_dims(fg.height(), fg.width(), "composite mask")?;
    let c = fg.channels();
    let data = fg
        .data()
        .chunks_exact(c)
        .zip(bg.data().chunks_exact(c))
        .zip(alpha.data())
        .flat_map(|((f, b), a)| {
            let a = *a;
            f.iter().zip(b).map(move |(f, b)| a * *f + (T::one() - a) * *b)
        })
        .collect();
    Image::signed(fg.height(), fg.width(), c, data)
}

/// Rec. 709 luminance of a linear RGB image.
pub fn luminance<T: Scalar>(img: &Image<T>) -> Result<Image<T>> {
    img.ensure_channels(3, "luminance")?;
    let w = LUMA_REC709.map(T::lit);
    let data = img
        .data()
        .chunks_exact(3)
        .map(|p| w[0] * p[0] + w[1] * p[1] + w[2] * p[2])
        .collect();
    Image::signed(img.height(), img.width(), 1, data)
}

#[inline]
fn half_dim(d: usize) -> usize {
    d.div_ceil(2)
}

/// 2×2 box average. Odd trailing rows/columns are replicated, so each output dimension
/// is `ceil(d / 2)`.
pub fn downsample_half<T: Scalar>(img: &Image<T>) -> Result<Image<T>> {
    let (h, w) = (img.height(), img.width());
    if h < 2 || w < 2 {
        return Err(Error::TooSmall(format!(
            "cannot downsample a {h}x{w} image; both sides must be at least 2"
        )));
    }
    let quarter = T::lit(0.25);
    Ok(Image::from_fn(half_dim(h), half_dim(w), img.channels(), |y, x, k| {
        let (y0, x0) = (2 * y, 2 * x);
        let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
        (img.get(y0, x0, k) + img.get(y0, x1, k) + img.get(y1, x0, k) + img.get(y1, x1, k)) * quarter
    }))
}

/// Transpose of [`downsample_half`]: scatters each coarse sample back onto the fine grid.
pub(crate) fn downsample_half_adjoint<T: Scalar>(coarse: &Image<T>, height: usize, width: usize) -> Image<T> {
    let c = coarse.channels();
    let mut out = vec![T::zero(); height * width * c];
    let quarter = T::lit(0.25);
    for y in 0..coarse.height() {
        for x in 0..coarse.width() {
            let (y0, x0) = (2 * y, 2 * x);
            let (y1, x1) = ((y0 + 1).min(height - 1), (x0 + 1).min(width - 1));
            for k in 0..c {
                let g = coarse.get(y, x, k) * quarter;
                for (yy, xx) in [(y0, x0), (y0, x1), (y1, x0), (y1, x1)] {
                    out[(yy * width + xx) * c + k] += g;
                }
            }
        }
    }
    Image::signed(height, width, c, out).expect("finite adjoint")
}

/// Forward differences along x and y. The last column of the x-gradient and the last row of
/// the y-gradient are zero, as is every gradient along an axis of length 1.
pub fn gradient_xy<T: Scalar>(img: &Image<T>) -> (Image<T>, Image<T>) {
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let gx = Image::from_fn(h, w, c, |y, x, k| {
        if x + 1 < w {
            img.get(y, x + 1, k) - img.get(y, x, k)
        } else {
            T::zero()
        }
    });
    let gy = Image::from_fn(h, w, c, |y, x, k| {
        if y + 1 < h {
            img.get(y + 1, x, k) - img.get(y, x, k)
        } else {
            T::zero()
        }
    });
    (gx, gy)
}

/// Transpose of [`gradient_xy`] applied to a pair of upstream gradients.
pub(crate) fn gradient_xy_adjoint<T: Scalar>(gx: &Image<T>, gy: &Image<T>) -> Image<T> {
    let (h, w, c) = (gx.height(), gx.width(), gx.channels());
    let mut out = vec![T::zero(); h * w * c];
    let idx = |y: usize, x: usize, k: usize| (y * w + x) * c + k;
    for y in 0..h {
        for x in 0..w {
            for k in 0..c {
                if x + 1 < w {
                    let g = gx.get(y, x, k);
                    out[idx(y, x + 1, k)] += g;
                    out[idx(y, x, k)] -= g;
                }
                if y + 1 < h {
                    let g = gy.get(y, x, k);
                    out[idx(y + 1, x, k)] += g;
                    out[idx(y, x, k)] -= g;
                }
            }
        }
    }
    Image::signed(h, w, c, out).expect("finite adjoint")
}
