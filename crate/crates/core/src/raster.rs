//! Raster containers: multi-channel float images, alpha masks and depth maps.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major `height × width × channels` float raster in linear-light units.
///
/// Images built with [`Image::new`] hold finite, non-negative samples (albedo, shading,
/// composites). Derivative fields such as the output of
/// [`gradient_xy`](crate::intrinsic::gradient_xy) are built with [`Image::signed`] and
/// may hold negative values.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Scalar> Image<T> {
    /// Builds a non-negative image, rejecting non-finite or negative samples.
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        let img = Self::signed(height, width, channels, data)?;
        if let Some(min) = img.min_sample() {
            if min < T::zero() {
                return Err(Error::Domain(format!("image sample {min} is negative")));
            }
        }
        Ok(img)
    }

    /// Builds an image whose samples only need to be finite.
    pub fn signed(height: usize, width: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::Format("image must have at least one channel".into()));
        }
        if data.len() != height * width * channels {
            return Err(Error::DimensionMismatch {
                context: "image buffer",
                expected: format!("{} samples", height * width * channels),
                found: format!("{} samples", data.len()),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("image data".into()));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: T) -> Self {
        assert!(channels > 0 && value.is_finite());
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    /// Builds an image by evaluating `f(y, x, k)` for every sample.
    ///
    /// Panics if `f` yields a non-finite value.
    pub fn from_fn(height: usize, width: usize, channels: usize, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        assert!(channels > 0);
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for k in 0..channels {
                    let v = f(y, x, k);
                    assert!(v.is_finite(), "non-finite sample at ({y}, {x}, {k})");
                    data.push(v);
                }
            }
        }
        Self {
            height,
            width,
            channels,
            data,
        }
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
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, k: usize) -> T {
        self.data[(y * self.width + x) * self.channels + k]
    }

    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> &[T] {
        let start = (y * self.width + x) * self.channels;
        &self.data[start..start + self.channels]
    }

    pub fn min_sample(&self) -> Option<T> {
        self.data.iter().copied().reduce(T::min)
    }

    pub fn max_sample(&self) -> Option<T> {
        self.data.iter().copied().reduce(T::max)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.data.iter().all(|v| *v >= T::zero())
    }

    /// Extracts channel `k` as a single-channel image.
    pub fn channel(&self, k: usize) -> Self {
        assert!(k < self.channels);
        Self {
            height: self.height,
            width: self.width,
            channels: 1,
            data: self.data.iter().skip(k).step_by(self.channels).copied().collect(),
        }
    }

    /// Applies `f` to every sample.
    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self::from_fn(self.height, self.width, self.channels, |y, x, k| f(self.get(y, x, k)))
    }

    pub fn ensure_dims(&self, height: usize, width: usize, context: &'static str) -> Result<()> {
        if self.height != height || self.width != width {
            return Err(Error::DimensionMismatch {
                context,
                expected: format!("{height}x{width}"),
                found: format!("{}x{}", self.height, self.width),
            });
        }
        Ok(())
    }

    pub fn ensure_channels(&self, channels: usize, context: &'static str) -> Result<()> {
        if self.channels != channels {
            return Err(Error::ChannelCount {
                context,
                expected: channels,
                found: self.channels,
            });
        }
        Ok(())
    }

    /// Bilinear resampling with pixel-centre alignment.
    pub fn resize_bilinear(&self, height: usize, width: usize) -> Self {
        let sy = T::count(self.height) / T::count(height);
        let sx = T::count(self.width) / T::count(width);
        let half = T::lit(0.5);
        Self::from_fn(height, width, self.channels, |y, x, k| {
            let (y0, y1, fy) = bilinear_taps(T::count(y), sy, half, self.height);
            let (x0, x1, fx) = bilinear_taps(T::count(x), sx, half, self.width);
            let top = self.get(y0, x0, k) * (T::one() - fx) + self.get(y0, x1, k) * fx;
            let bottom = self.get(y1, x0, k) * (T::one() - fx) + self.get(y1, x1, k) * fx;
            top * (T::one() - fy) + bottom * fy
        })
    }
}

pub(crate) fn bilinear_taps<T: Scalar>(dst: T, scale: T, half: T, len: usize) -> (usize, usize, T) {
    let src = ((dst + half) * scale - half).max(T::zero());
    let i0 = src.floor().to_usize().unwrap_or(0).min(len - 1);
    let i1 = (i0 + 1).min(len - 1);
    let f = (src - T::count(i0)).min(T::one());
    (i0, i1, f)
}

/// Output size that scales the longer side down to `long_side`, keeping the aspect ratio.
/// Returns the input size when it is already small enough.
pub fn fit_long_side(height: usize, width: usize, long_side: usize) -> (usize, usize) {
    let long = height.max(width);
    if long <= long_side || long_side == 0 {
        return (height, width);
    }
    let scale = long_side as f64 / long as f64;
    let h = ((height as f64 * scale).round() as usize).max(1);
    let w = ((width as f64 * scale).round() as usize).max(1);
    (h, w)
}

/// Per-pixel compositing weight in `[0, 1]`; 1 selects the foreground.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaMask<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> AlphaMask<T> {
    pub fn new(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::DimensionMismatch {
                context: "alpha mask buffer",
                expected: format!("{} samples", height * width),
                found: format!("{} samples", data.len()),
            });
        }
        if let Some(bad) = data
            .iter()
            .find(|v| !(v.is_finite() && **v >= T::zero() && **v <= T::one()))
        {
            return Err(Error::Domain(format!("alpha sample {bad} outside [0, 1]")));
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: T) -> Self {
        assert!(value >= T::zero() && value <= T::one());
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    /// Panics if `f` leaves `[0, 1]`.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                let v = f(y, x);
                assert!(v >= T::zero() && v <= T::one(), "alpha {v} outside [0, 1]");
                data.push(v);
            }
        }
        Self { height, width, data }
    }

    /// Converts a single-channel image, clamping samples into `[0, 1]`.
    pub fn from_image(img: &Image<T>) -> Result<Self> {
        img.ensure_channels(1, "alpha mask")?;
        Ok(Self {
            height: img.height(),
            width: img.width(),
            data: img.data().iter().map(|v| v.max(T::zero()).min(T::one())).collect(),
        })
    }

    pub fn to_image(&self) -> Image<T> {
        Image {
            height: self.height,
            width: self.width,
            channels: 1,
            data: self.data.clone(),
        }
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
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> T {
        self.data[y * self.width + x]
    }

    /// `1 - alpha`, the background selector.
    pub fn inverted(&self) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|a| T::one() - *a).collect(),
        }
    }

    /// Number of pixels with alpha above one half.
    pub fn active_count(&self) -> usize {
        let half = T::lit(0.5);
        self.data.iter().filter(|a| **a > half).count()
    }

    pub fn ensure_dims(&self, height: usize, width: usize, context: &'static str) -> Result<()> {
        if self.height != height || self.width != width {
            return Err(Error::DimensionMismatch {
                context,
                expected: format!("{height}x{width}"),
                found: format!("{}x{}", self.height, self.width),
            });
        }
        Ok(())
    }

    pub fn resize_nearest(&self, height: usize, width: usize) -> Self {
        Self::from_fn(height, width, |y, x| {
            let sy = (y * self.height) / height;
            let sx = (x * self.width) / width;
            self.get(sy.min(self.height - 1), sx.min(self.width - 1))
        })
    }
}

/// Relative inverse depth; the scale is whatever the upstream estimator produced.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap<T>(Image<T>);

impl<T: Scalar> DepthMap<T> {
    pub fn new(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        Image::new(height, width, 1, data).map(Self)
    }

    pub fn from_image(img: Image<T>) -> Result<Self> {
        img.ensure_channels(1, "depth map")?;
        if !img.is_nonnegative() {
            return Err(Error::Domain("depth map has negative samples".into()));
        }
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

    pub fn get(&self, y: usize, x: usize) -> T {
        self.0.get(y, x, 0)
    }

    pub fn resize_bilinear(&self, height: usize, width: usize) -> Self {
        Self(self.0.resize_bilinear(height, width))
    }
}
