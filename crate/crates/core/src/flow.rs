//! Appearance flows: backward warping, the five-level sub-flow pyramid and
//! its recurrent aggregation.
//!
//! A flow stores, for every target pixel, the displacement `(dx, dy)` in
//! pixels to the source pixel it copies: `out(y, x) = src(y + dy, x + dx)`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::gru::ConvGRUCell;
use crate::tensor::{bilinear_sample_into, resize_bilinear, BinaryMask, ImageTensor};

/// A `2 × H × W` displacement field; plane 0 is `dx`, plane 1 is `dy`.
#[derive(Debug, Clone, PartialEq)]
pub struct AppearanceFlow(ImageTensor);

impl AppearanceFlow {
    pub fn new(t: ImageTensor) -> Result<Self> {
        if t.channels() != 2 {
            return Err(Error::dim(format!("a flow has 2 channels, got {}", t.channels())));
        }
        if t.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("flow contains non-finite displacements".into()));
        }
        Ok(Self(t))
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self(ImageTensor::zeros(2, height, width))
    }

    pub fn constant(height: usize, width: usize, dx: f64, dy: f64) -> Self {
        Self(ImageTensor::from_fn(2, height, width, |c, _, _| if c == 0 { dx } else { dy }))
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn tensor(&self) -> &ImageTensor {
        &self.0
    }

    pub fn into_tensor(self) -> ImageTensor {
        self.0
    }

    #[inline]
    pub fn dx(&self, y: usize, x: usize) -> f64 {
        self.0.get(0, y, x)
    }

    #[inline]
    pub fn dy(&self, y: usize, x: usize) -> f64 {
        self.0.get(1, y, x)
    }
}

/// Backward warp with bilinear sampling; samples outside the source are zero.
pub fn warp_with_flow(src: &ImageTensor, flow: &AppearanceFlow) -> Result<ImageTensor> {
    src.ensure_spatial(flow.height(), flow.width(), "warp_with_flow")?;
    let (c, h, w) = src.shape();
    let mut out = ImageTensor::zeros(c, h, w);
    let mut px = vec![0.0; c];
    for y in 0..h {
        for x in 0..w {
            bilinear_sample_into(src, x as f64 + flow.dx(y, x), y as f64 + flow.dy(y, x), &mut px);
            for (ch, v) in px.iter().enumerate() {
                out.set(ch, y, x, *v);
            }
        }
    }
    Ok(out)
}

/// Warps a mask as a real raster and re-binarizes at 0.5.
pub fn warp_mask(mask: &BinaryMask, flow: &AppearanceFlow) -> Result<BinaryMask> {
    BinaryMask::from_threshold(&warp_with_flow(&mask.to_tensor(), flow)?, 0.5)
}

/// Resizes a flow and rescales its displacements to the new pixel grid.
pub fn upsample_flow(flow: &AppearanceFlow, new_h: usize, new_w: usize) -> Result<AppearanceFlow> {
    let (h, w) = (flow.height(), flow.width());
    if (h, w) == (new_h, new_w) {
        return Ok(flow.clone());
    }
    let mut t = resize_bilinear(flow.tensor(), new_h, new_w)?;
    let (sx, sy) = (new_w as f64 / w as f64, new_h as f64 / h as f64);
    t.plane_mut(0).iter_mut().for_each(|v| *v *= sx);
    t.plane_mut(1).iter_mut().for_each(|v| *v *= sy);
    Ok(AppearanceFlow(t))
}

/// How pyramid level sizes are derived from the full raster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PyramidMode {
    /// Level `k` is `ceil(H / (6 - k)) × ceil(W / (6 - k))`.
    #[default]
    Literal,
    /// Level `k` is `ceil(H / 2^(5 - k)) × ceil(W / 2^(5 - k))`.
    Pow2,
}

pub const PYRAMID_LEVELS: usize = 5;

impl PyramidMode {
    /// Size of level `k` in `1..=5`.
    pub fn level_size(self, height: usize, width: usize, k: usize) -> (usize, usize) {
        assert!((1..=PYRAMID_LEVELS).contains(&k), "pyramid level {k} outside 1..=5");
        let d = match self {
            PyramidMode::Literal => 6 - k,
            PyramidMode::Pow2 => 1 << (5 - k),
        };
        (height.div_ceil(d), width.div_ceil(d))
    }

    pub fn level_sizes(self, height: usize, width: usize) -> Vec<(usize, usize)> {
        (1..=PYRAMID_LEVELS).map(|k| self.level_size(height, width, k)).collect()
    }
}

/// Five sub-flows, coarse to fine; the last is full resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowPyramid {
    mode: PyramidMode,
    levels: Vec<AppearanceFlow>,
}

impl FlowPyramid {
    /// Checks level count and sizes against the `height × width` target.
    pub fn new(levels: Vec<AppearanceFlow>, mode: PyramidMode, height: usize, width: usize) -> Result<Self> {
        if levels.len() != PYRAMID_LEVELS {
            return Err(Error::Structure(format!(
                "flow pyramid needs {PYRAMID_LEVELS} levels, got {}",
                levels.len()
            )));
        }
        for (k, (level, expected)) in levels.iter().zip(mode.level_sizes(height, width)).enumerate() {
            if (level.height(), level.width()) != expected {
                return Err(Error::Structure(format!(
                    "pyramid level {} is {}x{}, expected {}x{}",
                    k + 1,
                    level.height(),
                    level.width(),
                    expected.0,
                    expected.1
                )));
            }
        }
        Ok(Self { mode, levels })
    }

    pub fn zeros(mode: PyramidMode, height: usize, width: usize) -> Self {
        let levels = mode.level_sizes(height, width).into_iter().map(|(h, w)| AppearanceFlow::zeros(h, w)).collect();
        Self { mode, levels }
    }

    pub fn mode(&self) -> PyramidMode {
        self.mode
    }

    pub fn levels(&self) -> &[AppearanceFlow] {
        &self.levels
    }

    /// Full-resolution `(height, width)`.
    pub fn size(&self) -> (usize, usize) {
        let last = &self.levels[PYRAMID_LEVELS - 1];
        (last.height(), last.width())
    }
}

/// Merges the pyramid coarse to fine: the running flow is upsampled to each
/// level and updated by one GRU step with that level's sub-flow as input.
pub fn aggregate_flows(pyramid: &FlowPyramid, cell: &ConvGRUCell) -> Result<AppearanceFlow> {
    if cell.channels() != 2 {
        return Err(Error::param(format!(
            "flow aggregation needs a 2-channel GRU state, cell has {}",
            cell.channels()
        )));
    }
    let first = &pyramid.levels[0];
    let mut state = AppearanceFlow::zeros(first.height(), first.width());
    for level in &pyramid.levels {
        state = upsample_flow(&state, level.height(), level.width())?;
        state = AppearanceFlow::new(cell.step(state.tensor(), level.tensor())?)?;
    }
    Ok(state)
}

pub const FLOW_MAGIC: &[u8; 4] = b"PLVF";

/// `PLVF` encoding: magic, `u32` height, `u32` width (little-endian), then
/// `H·W` little-endian `f32` pairs `(dx, dy)` in row-major order.
pub fn encode_flow(flow: &AppearanceFlow) -> Vec<u8> {
    let (h, w) = (flow.height(), flow.width());
    let mut out = Vec::with_capacity(12 + 8 * h * w);
    out.extend_from_slice(FLOW_MAGIC);
    out.extend_from_slice(&(h as u32).to_le_bytes());
    out.extend_from_slice(&(w as u32).to_le_bytes());
    for y in 0..h {
        for x in 0..w {
            out.extend_from_slice(&(flow.dx(y, x) as f32).to_le_bytes());
            out.extend_from_slice(&(flow.dy(y, x) as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_flow(bytes: &[u8]) -> Result<AppearanceFlow> {
    if bytes.len() < 12 || &bytes[..4] != FLOW_MAGIC {
        return Err(Error::Format("missing PLVF header".into()));
    }
    let h = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let w = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    if h == 0 || w == 0 || bytes.len() != 12 + 8 * h * w {
        return Err(Error::Format(format!(
            "PLVF body of {} bytes does not match {h}x{w}",
            bytes.len() - 12
        )));
    }
    let mut t = ImageTensor::zeros(2, h, w);
    for (i, pair) in bytes[12..].chunks_exact(8).enumerate() {
        let (y, x) = (i / w, i % w);
        t.set(0, y, x, f32::from_le_bytes(pair[..4].try_into().expect("4 bytes")) as f64);
        t.set(1, y, x, f32::from_le_bytes(pair[4..].try_into().expect("4 bytes")) as f64);
    }
    AppearanceFlow::new(t)
}

pub fn write_flow(flow: &AppearanceFlow, path: &Path) -> Result<()> {
    crate::io::write_atomic(path, &encode_flow(flow))
}

pub fn read_flow(path: &Path) -> Result<AppearanceFlow> {
    decode_flow(&std::fs::read(path)?)
}
