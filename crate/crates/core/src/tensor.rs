//! Dense rasters and the sampling/filter primitives the rest of the crate is
//! built on.
//!
//! Coordinates follow raster order: `x` is the column index, `y` the row
//! index, origin at the top-left pixel. All storage is `f64`, row-major per
//! channel, channels outermost.

use crate::error::{Error, Result};

/// A `channels × height × width` raster of reals.
///
/// Images live in `[0, 1]`; feature maps and flows are unrestricted.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ImageTensor {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::dim(format!(
                "tensor extents must be positive, got {channels}x{height}x{width}"
            )));
        }
        if data.len() != channels * height * width {
            return Err(Error::dim(format!(
                "data length {} does not match {channels}x{height}x{width}",
                data.len()
            )));
        }
        Ok(Self { channels, height, width, data })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, 0.0)
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f64) -> Self {
        assert!(channels > 0 && height > 0 && width > 0, "tensor extents must be positive");
        Self { channels, height, width, data: vec![value; channels * height * width] }
    }

    /// Builds a tensor from `f(channel, y, x)`.
    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        assert!(channels > 0 && height > 0 && width > 0, "tensor extents must be positive");
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self { channels, height, width, data }
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    /// `(channels, height, width)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, value: f64) {
        let i = self.index(c, y, x);
        self.data[i] = value;
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    /// Copies out a single channel as a one-channel tensor.
    pub fn channel(&self, c: usize) -> ImageTensor {
        ImageTensor {
            channels: 1,
            height: self.height,
            width: self.width,
            data: self.plane(c).to_vec(),
        }
    }

    pub fn same_shape(&self, other: &ImageTensor) -> bool {
        self.shape() == other.shape()
    }

    pub(crate) fn ensure_same_shape(&self, other: &ImageTensor, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::dim(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.shape(),
                other.shape()
            )))
        }
    }

    pub(crate) fn ensure_spatial(&self, height: usize, width: usize, what: &str) -> Result<()> {
        if self.height == height && self.width == width {
            Ok(())
        } else {
            Err(Error::dim(format!(
                "{what}: expected {height}x{width} raster, got {}x{}",
                self.height, self.width
            )))
        }
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> ImageTensor {
        self.with_data(self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &ImageTensor, f: impl Fn(f64, f64) -> f64) -> Result<ImageTensor> {
        self.ensure_same_shape(other, "zip_map")?;
        Ok(self.with_data(self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect()))
    }

    fn with_data(&self, data: Vec<f64>) -> ImageTensor {
        debug_assert_eq!(data.len(), self.data.len());
        ImageTensor { channels: self.channels, height: self.height, width: self.width, data }
    }

    pub fn scale(&self, factor: f64) -> ImageTensor {
        self.map(|v| v * factor)
    }

    pub fn clamp01(&self) -> ImageTensor {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs_diff(&self, other: &ImageTensor) -> Result<f64> {
        self.ensure_same_shape(other, "max_abs_diff")?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }

    /// Stacks tensors with equal spatial extent along the channel axis.
    pub fn concat_channels(parts: &[&ImageTensor]) -> Result<ImageTensor> {
        let first = parts.first().ok_or_else(|| Error::param("concat of zero tensors"))?;
        let (h, w) = (first.height, first.width);
        let mut data = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
        let mut channels = 0;
        for p in parts {
            p.ensure_spatial(h, w, "concat_channels")?;
            data.extend_from_slice(&p.data);
            channels += p.channels;
        }
        Ok(ImageTensor { channels, height: h, width: w, data })
    }

    /// Reads one pixel's color vector.
    pub fn pixel(&self, y: usize, x: usize) -> Vec<f64> {
        (0..self.channels).map(|c| self.get(c, y, x)).collect()
    }
}

/// A raster of exact 0/1 values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(Error::dim(format!(
                "mask data length {} does not match {height}x{width}",
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self { height, width, data: vec![false; height * width] }
    }

    pub fn ones(height: usize, width: usize) -> Self {
        Self { height, width, data: vec![true; height * width] }
    }

    /// Builds a mask from `f(y, x)`.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self { height, width, data }
    }

    /// Thresholds a single-channel raster: `value >= threshold` becomes 1.
    pub fn from_threshold(t: &ImageTensor, threshold: f64) -> Result<Self> {
        if t.channels() != 1 {
            return Err(Error::dim(format!("mask needs 1 channel, got {}", t.channels())));
        }
        Ok(Self {
            height: t.height(),
            width: t.width(),
            data: t.data().iter().map(|&v| v >= threshold).collect(),
        })
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
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, value: bool) {
        self.data[y * self.width + x] = value;
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.ensure_same_shape(other)?;
        Ok(Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a || b).collect(),
        })
    }

    pub fn intersect(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.ensure_same_shape(other)?;
        Ok(Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a && b).collect(),
        })
    }

    pub fn complement(&self) -> BinaryMask {
        Self { height: self.height, width: self.width, data: self.data.iter().map(|b| !b).collect() }
    }

    /// The mask as a `1 × H × W` real raster.
    pub fn to_tensor(&self) -> ImageTensor {
        ImageTensor::new(
            1,
            self.height,
            self.width,
            self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )
        .expect("mask extents are valid")
    }

    pub(crate) fn ensure_same_shape(&self, other: &BinaryMask) -> Result<()> {
        if self.height == other.height && self.width == other.width {
            Ok(())
        } else {
            Err(Error::dim(format!(
                "mask shapes {}x{} and {}x{} differ",
                self.height, self.width, other.height, other.width
            )))
        }
    }
}

/// Bilinear lookup at real pixel coordinates with zero padding.
///
/// Anything outside `[0, W-1] × [0, H-1]` reads as the zero vector.
pub fn bilinear_sample(img: &ImageTensor, x: f64, y: f64) -> Vec<f64> {
    let mut out = vec![0.0; img.channels()];
    bilinear_sample_into(img, x, y, &mut out);
    out
}

/// Allocation-free form of [`bilinear_sample`]; writes `channels` values.
pub fn bilinear_sample_into(img: &ImageTensor, x: f64, y: f64, out: &mut [f64]) {
    let (h, w) = (img.height(), img.width());
    let inside = x >= 0.0 && y >= 0.0 && x <= (w - 1) as f64 && y <= (h - 1) as f64;
    if !inside {
        out.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let n = h * w;
    let data = img.data();
    for (c, o) in out.iter_mut().enumerate() {
        let base = c * n;
        let v00 = data[base + y0 * w + x0];
        let v01 = data[base + y0 * w + x1];
        let v10 = data[base + y1 * w + x0];
        let v11 = data[base + y1 * w + x1];
        let top = v00 + (v01 - v00) * fx;
        let bottom = v10 + (v11 - v10) * fx;
        *o = top + (bottom - top) * fy;
    }
}

/// Samples with coordinates clamped into the raster (edge replication).
fn bilinear_clamped(plane: &[f64], h: usize, w: usize, x: f64, y: f64) -> f64 {
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
    let bottom = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Bilinear resize, half-pixel-centre convention, edge clamped.
pub fn resize_bilinear(img: &ImageTensor, new_h: usize, new_w: usize) -> Result<ImageTensor> {
    if new_h == 0 || new_w == 0 {
        return Err(Error::param(format!("resize target {new_h}x{new_w} must be positive")));
    }
    let (c, h, w) = img.shape();
    if h == new_h && w == new_w {
        return Ok(img.clone());
    }
    let sy = h as f64 / new_h as f64;
    let sx = w as f64 / new_w as f64;
    let mut data = Vec::with_capacity(c * new_h * new_w);
    for ch in 0..c {
        let plane = img.plane(ch);
        for i in 0..new_h {
            let ys = (i as f64 + 0.5) * sy - 0.5;
            for j in 0..new_w {
                let xs = (j as f64 + 0.5) * sx - 0.5;
                data.push(bilinear_clamped(plane, h, w, xs, ys));
            }
        }
    }
    ImageTensor::new(c, new_h, new_w, data)
}

const SOBEL_X: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
const SOBEL_Y: [[f64; 3]; 3] = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];

#[inline]
fn clamp_index(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Horizontal and vertical Sobel responses with replicate padding.
///
/// The output has `2 * channels` planes ordered `Gx(c0), Gy(c0), Gx(c1), ...`.
pub fn sobel_gradients(img: &ImageTensor) -> Result<ImageTensor> {
    let (c, h, w) = img.shape();
    if h < 3 || w < 3 {
        return Err(Error::dim(format!("sobel needs at least 3x3, got {h}x{w}")));
    }
    let mut out = ImageTensor::zeros(2 * c, h, w);
    for ch in 0..c {
        let plane = img.plane(ch);
        for y in 0..h {
            for x in 0..w {
                // Smoothing [1, 2, 1] across, central difference along.
                let (ym, yp) = (clamp_index(y as isize - 1, h), clamp_index(y as isize + 1, h));
                let (xm, xp) = (clamp_index(x as isize - 1, w), clamp_index(x as isize + 1, w));
                let dx = |r: usize| plane[r * w + xp] - plane[r * w + xm];
                let dy = |c: usize| plane[yp * w + c] - plane[ym * w + c];
                let gx = dx(ym) + 2.0 * dx(y) + dx(yp);
                let gy = dy(xm) + 2.0 * dy(x) + dy(xp);
                out.set(2 * ch, y, x, gx);
                out.set(2 * ch + 1, y, x, gy);
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`sobel_gradients`]: maps a `2C`-plane cotangent back onto the
/// `C`-plane input, honouring the replicate padding.
pub fn sobel_adjoint(grad: &ImageTensor) -> Result<ImageTensor> {
    let (c2, h, w) = grad.shape();
    if c2 % 2 != 0 {
        return Err(Error::dim(format!("sobel cotangent needs an even channel count, got {c2}")));
    }
    if h < 3 || w < 3 {
        return Err(Error::dim(format!("sobel needs at least 3x3, got {h}x{w}")));
    }
    let mut out = ImageTensor::zeros(c2 / 2, h, w);
    for ch in 0..c2 / 2 {
        let gxp = grad.plane(2 * ch).to_vec();
        let gyp = grad.plane(2 * ch + 1).to_vec();
        let plane = out.plane_mut(ch);
        for y in 0..h {
            for x in 0..w {
                let (gx, gy) = (gxp[y * w + x], gyp[y * w + x]);
                for ky in 0..3 {
                    let yy = clamp_index(y as isize + ky as isize - 1, h);
                    for kx in 0..3 {
                        let xx = clamp_index(x as isize + kx as isize - 1, w);
                        plane[yy * w + xx] += SOBEL_X[ky][kx] * gx + SOBEL_Y[ky][kx] * gy;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Normalized 1-D Gaussian taps of radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>> {
    if sigma.is_nan() || sigma <= 0.0 || !sigma.is_finite() {
        return Err(Error::param(format!("gaussian sigma must be positive, got {sigma}")));
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    Ok(taps.into_iter().map(|t| t / total).collect())
}

/// Separable Gaussian blur with replicate padding.
pub fn gaussian_blur(img: &ImageTensor, sigma: f64) -> Result<ImageTensor> {
    let kernel = gaussian_kernel(sigma)?;
    let radius = (kernel.len() / 2) as isize;
    let (c, h, w) = img.shape();
    let mut out = ImageTensor::zeros(c, h, w);
    let mut tmp = vec![0.0; h * w];
    for ch in 0..c {
        let src = img.plane(ch);
        for y in 0..h {
            for x in 0..w {
                tmp[y * w + x] = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, t)| t * src[y * w + clamp_index(x as isize + k as isize - radius, w)])
                    .sum();
            }
        }
        let dst = out.plane_mut(ch);
        for y in 0..h {
            for x in 0..w {
                dst[y * w + x] = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, t)| t * tmp[clamp_index(y as isize + k as isize - radius, h) * w + x])
                    .sum();
            }
        }
    }
    Ok(out)
}

/// An `s × s` grid of equally sized single-channel tiles, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSet {
    grid_scale: usize,
    patches: Vec<ImageTensor>,
}

impl PatchSet {
    pub fn grid_scale(&self) -> usize {
        self.grid_scale
    }

    pub fn patches(&self) -> &[ImageTensor] {
        &self.patches
    }

    pub fn into_patches(self) -> Vec<ImageTensor> {
        self.patches
    }

    /// `(height, width)` of every tile.
    pub fn patch_size(&self) -> (usize, usize) {
        (self.patches[0].height(), self.patches[0].width())
    }

    /// Stitches the tiles back into an `height × width` raster, dropping padding.
    pub fn reassemble(&self, height: usize, width: usize) -> Result<ImageTensor> {
        let s = self.grid_scale;
        let (ph, pw) = self.patch_size();
        if ph * s < height || pw * s < width {
            return Err(Error::dim(format!(
                "{s}x{s} grid of {ph}x{pw} tiles cannot cover {height}x{width}"
            )));
        }
        let mut out = ImageTensor::zeros(1, height, width);
        for (i, tile) in self.patches.iter().enumerate() {
            let (gy, gx) = (i / s, i % s);
            for y in 0..ph {
                for x in 0..pw {
                    let (yy, xx) = (gy * ph + y, gx * pw + x);
                    if yy < height && xx < width {
                        out.set(0, yy, xx, tile.get(0, y, x));
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Splits a single-channel raster into an `s × s` grid of
/// `ceil(H/s) × ceil(W/s)` tiles, zero-padding the right and bottom edges.
pub fn extract_patches(img: &ImageTensor, s: usize) -> Result<PatchSet> {
    let (c, h, w) = img.shape();
    if c != 1 {
        return Err(Error::dim(format!("extract_patches needs 1 channel, got {c}")));
    }
    if s == 0 || s > h.min(w) {
        return Err(Error::param(format!("grid scale {s} must lie in 1..={}", h.min(w))));
    }
    let (ph, pw) = (h.div_ceil(s), w.div_ceil(s));
    let patches = (0..s * s)
        .map(|i| {
            let (gy, gx) = (i / s, i % s);
            ImageTensor::from_fn(1, ph, pw, |_, y, x| {
                let (yy, xx) = (gy * ph + y, gx * pw + x);
                if yy < h && xx < w {
                    img.get(0, yy, xx)
                } else {
                    0.0
                }
            })
        })
        .collect();
    Ok(PatchSet { grid_scale: s, patches })
}

/// Mean absolute difference over all elements.
pub fn l1_mean(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    a.ensure_same_shape(b, "l1_mean")?;
    Ok(a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}
