//! Person representation: parsing maps, keypoint maps, the clothing-agnostic
//! mask and limb-map extraction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{extract_patches, BinaryMask, ImageTensor};

/// Number of semantic classes in a parsing map.
pub const NUM_CLASSES: usize = 7;
/// Number of body keypoints (COCO-18 order).
pub const NUM_KEYPOINTS: usize = 18;

pub const BACKGROUND: usize = 0;
pub const HAIR: usize = 1;
pub const FACE: usize = 2;
pub const UPPER_CLOTHES: usize = 3;
pub const LEFT_ARM: usize = 4;
pub const RIGHT_ARM: usize = 5;
pub const LOWER_BODY: usize = 6;

/// Both arm classes; hands count as arm.
pub const ARMS: [usize; 2] = [LEFT_ARM, RIGHT_ARM];

/// A 7-class human parsing map.
///
/// Stored as one class id per pixel, which makes the one-hot invariant hold by
/// construction; [`ParsingMap::to_one_hot`] gives the 7-plane form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsingMap {
    height: usize,
    width: usize,
    labels: Vec<u8>,
}

impl ParsingMap {
    pub fn new(height: usize, width: usize, labels: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 || labels.len() != height * width {
            return Err(Error::dim(format!(
                "parsing label count {} does not match {height}x{width}",
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l as usize >= NUM_CLASSES) {
            return Err(Error::param(format!("class id {bad} outside 0..{NUM_CLASSES}")));
        }
        Ok(Self { height, width, labels })
    }

    /// Every pixel labelled `class`.
    pub fn uniform(height: usize, width: usize, class: usize) -> Result<Self> {
        Self::new(height, width, vec![class as u8; height * width])
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> usize) -> Result<Self> {
        let mut labels = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                labels.push(f(y, x) as u8);
            }
        }
        Self::new(height, width, labels)
    }

    /// Validates a `7 × H × W` one-hot tensor and converts it.
    pub fn from_one_hot(t: &ImageTensor) -> Result<Self> {
        let (c, h, w) = t.shape();
        if c != NUM_CLASSES {
            return Err(Error::dim(format!("parsing map needs {NUM_CLASSES} channels, got {c}")));
        }
        let mut labels = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                let mut hot = None;
                for k in 0..NUM_CLASSES {
                    match t.get(k, y, x) {
                        v if v == 1.0 && hot.is_none() => hot = Some(k),
                        0.0 => {}
                        v => {
                            return Err(Error::Validation(format!(
                                "pixel ({y},{x}) is not one-hot (channel {k} = {v})"
                            )))
                        }
                    }
                }
                let k = hot.ok_or_else(|| {
                    Error::Validation(format!("pixel ({y},{x}) has no active class"))
                })?;
                labels.push(k as u8);
            }
        }
        Ok(Self { height: h, width: w, labels })
    }

    /// Per-pixel argmax of a 7-channel score or probability map.
    ///
    /// Ties go to the lowest class id.
    pub fn from_argmax(scores: &ImageTensor) -> Result<Self> {
        let (c, h, w) = scores.shape();
        if c != NUM_CLASSES {
            return Err(Error::dim(format!("argmax needs {NUM_CLASSES} channels, got {c}")));
        }
        let n = h * w;
        let data = scores.data();
        let labels = (0..n)
            .map(|i| {
                let mut best = 0;
                for k in 1..NUM_CLASSES {
                    if data[k * n + i] > data[best * n + i] {
                        best = k;
                    }
                }
                best as u8
            })
            .collect();
        Ok(Self { height: h, width: w, labels })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    #[inline]
    pub fn label(&self, y: usize, x: usize) -> usize {
        self.labels[y * self.width + x] as usize
    }

    pub fn to_one_hot(&self) -> ImageTensor {
        ImageTensor::from_fn(NUM_CLASSES, self.height, self.width, |k, y, x| {
            if self.label(y, x) == k {
                1.0
            } else {
                0.0
            }
        })
    }

    /// Binary mask of the pixels whose class is in `classes`.
    pub fn class_mask(&self, classes: &[usize]) -> Result<BinaryMask> {
        let mut member = [false; NUM_CLASSES];
        for &c in classes {
            if c >= NUM_CLASSES {
                return Err(Error::param(format!("class id {c} outside 0..{NUM_CLASSES}")));
            }
            member[c] = true;
        }
        BinaryMask::new(
            self.height,
            self.width,
            self.labels.iter().map(|&l| member[l as usize]).collect(),
        )
    }

    pub(crate) fn ensure_spatial(&self, height: usize, width: usize, what: &str) -> Result<()> {
        if self.height == height && self.width == width {
            Ok(())
        } else {
            Err(Error::dim(format!(
                "{what}: parsing map is {}x{}, expected {height}x{width}",
                self.height, self.width
            )))
        }
    }
}

/// Free-function form of [`ParsingMap::class_mask`].
pub fn class_mask(parsing: &ParsingMap, classes: &[usize]) -> Result<BinaryMask> {
    parsing.class_mask(classes)
}

/// Clothing-agnostic mask: the filled bounding rectangle of the upper-clothes
/// region, united with every arm pixel.
pub fn build_agnostic_mask(parsing: &ParsingMap) -> Result<BinaryMask> {
    let clothing = parsing.class_mask(&[UPPER_CLOTHES])?;
    let rect = crate::prealign::circumscribed_rect(&clothing)
        .map_err(|_| Error::EmptyRegion("source parsing map has no clothing pixels".into()))?;
    let arms = parsing.class_mask(&ARMS)?;
    Ok(BinaryMask::from_fn(parsing.height(), parsing.width(), |y, x| {
        rect.contains(x, y) || arms.get(y, x)
    }))
}

/// Occludes the person image (fill 0) and the parsing map (fill background)
/// under `mask`.
pub fn apply_agnostic_mask(
    image: &ImageTensor,
    parsing: &ParsingMap,
    mask: &BinaryMask,
) -> Result<(ImageTensor, ParsingMap)> {
    let (h, w) = (mask.height(), mask.width());
    image.ensure_spatial(h, w, "apply_agnostic_mask")?;
    parsing.ensure_spatial(h, w, "apply_agnostic_mask")?;
    let masked_image =
        ImageTensor::from_fn(image.channels(), h, w, |c, y, x| {
            if mask.get(y, x) {
                0.0
            } else {
                image.get(c, y, x)
            }
        });
    let masked_parsing = ParsingMap {
        height: h,
        width: w,
        labels: parsing
            .labels
            .iter()
            .zip(mask.data())
            .map(|(&l, &m)| if m { BACKGROUND as u8 } else { l })
            .collect(),
    };
    Ok((masked_image, masked_parsing))
}

/// The person image restricted to arm pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct LimbMap(ImageTensor);

impl LimbMap {
    pub fn tensor(&self) -> &ImageTensor {
        &self.0
    }

    pub fn into_tensor(self) -> ImageTensor {
        self.0
    }
}

/// `L = I ⊙ arms(P)`, broadcast over the color channels.
pub fn extract_limb_map(parsing: &ParsingMap, image: &ImageTensor) -> Result<LimbMap> {
    image.ensure_spatial(parsing.height(), parsing.width(), "extract_limb_map")?;
    let arms = parsing.class_mask(&ARMS)?;
    Ok(LimbMap(ImageTensor::from_fn(image.channels(), image.height(), image.width(), |c, y, x| {
        if arms.get(y, x) {
            image.get(c, y, x)
        } else {
            0.0
        }
    })))
}

/// Splits each color channel of the limb map into an `s × s` grid and stacks
/// all tiles along the channel axis, color-major then row-major grid order.
pub fn limb_patches(limb: &LimbMap, s: usize) -> Result<ImageTensor> {
    let t = limb.tensor();
    let mut tiles = Vec::with_capacity(t.channels() * s * s);
    for c in 0..t.channels() {
        tiles.extend(extract_patches(&t.channel(c), s)?.into_patches());
    }
    let refs: Vec<&ImageTensor> = tiles.iter().collect();
    ImageTensor::concat_channels(&refs)
}

/// One body joint in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub id: usize,
    pub x: f64,
    pub y: f64,
}

/// An 18-plane keypoint raster, one rendered disk per present joint.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointMap(ImageTensor);

impl KeypointMap {
    pub fn tensor(&self) -> &ImageTensor {
        &self.0
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }
}

/// Disk radius used at a given raster height: 4 px at 256 rows, proportional.
pub fn default_keypoint_radius(height: usize) -> f64 {
    4.0 * height as f64 / 256.0
}

/// Renders each keypoint as a filled disk `{(x', y') : |(x', y') - (x, y)| <= r}`
/// on its own plane, clipped to the raster.
pub fn render_keypoints(points: &[Keypoint], height: usize, width: usize, radius: f64) -> Result<KeypointMap> {
    if height == 0 || width == 0 {
        return Err(Error::param("keypoint raster must be non-empty"));
    }
    if radius.is_nan() || radius < 0.0 {
        return Err(Error::param(format!("keypoint radius must be non-negative, got {radius}")));
    }
    let mut seen = [false; NUM_KEYPOINTS];
    let mut map = ImageTensor::zeros(NUM_KEYPOINTS, height, width);
    let r2 = radius * radius;
    for p in points {
        if p.id >= NUM_KEYPOINTS {
            return Err(Error::param(format!("keypoint id {} outside 0..{NUM_KEYPOINTS}", p.id)));
        }
        if std::mem::replace(&mut seen[p.id], true) {
            return Err(Error::param(format!("duplicate keypoint id {}", p.id)));
        }
        let y_lo = (p.y - radius).floor().max(0.0) as usize;
        let y_hi = ((p.y + radius).ceil().max(-1.0) as isize).min(height as isize - 1);
        let x_lo = (p.x - radius).floor().max(0.0) as usize;
        let x_hi = ((p.x + radius).ceil().max(-1.0) as isize).min(width as isize - 1);
        for y in y_lo as isize..=y_hi {
            for x in x_lo as isize..=x_hi {
                let (dx, dy) = (x as f64 - p.x, y as f64 - p.y);
                if dx * dx + dy * dy <= r2 {
                    map.set(p.id, y as usize, x as usize, 1.0);
                }
            }
        }
    }
    Ok(KeypointMap(map))
}
