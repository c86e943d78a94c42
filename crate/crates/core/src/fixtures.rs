//! Procedurally drawn people and garments for tests, examples and the
//! `fixtures` subcommand.
//!
//! A person faces the camera, so their left arm is on the image's right.
//! All geometry is in fractions of the raster and jittered by the seed.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io;
use crate::person::{
    default_keypoint_radius, render_keypoints, Keypoint, KeypointMap, ParsingMap, BACKGROUND, FACE, HAIR, LEFT_ARM,
    LOWER_BODY, RIGHT_ARM, UPPER_CLOTHES,
};
use crate::pipeline::TryOnInputs;
use crate::tensor::{BinaryMask, ImageTensor};

pub const CLOTH_FILE: &str = "cloth.png";
pub const CLOTH_MASK_FILE: &str = "cloth_mask.png";
pub const PERSON_FILE: &str = "person.png";
pub const PARSING_FILE: &str = "parsing.png";
pub const KEYPOINTS_FILE: &str = "keypoints.json";

/// One synthetic person wearing a shirt, and a different in-shop shirt.
#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub person: ImageTensor,
    pub parsing: ParsingMap,
    pub keypoints: Vec<Keypoint>,
    pub cloth: ImageTensor,
    pub cloth_mask: BinaryMask,
}

type Rgb = [f64; 3];

fn jitter(rng: &mut ChaCha8Rng, centre: f64, spread: f64) -> f64 {
    centre + rng.gen_range(-spread..=spread)
}

fn colour(rng: &mut ChaCha8Rng) -> Rgb {
    [rng.gen_range(0.1..0.9), rng.gen_range(0.1..0.9), rng.gen_range(0.1..0.9)]
}

/// Horizontal stripes of `a` and `b` with the given period in rows.
fn stripes(a: Rgb, b: Rgb, period: f64, y: f64) -> Rgb {
    if (y / period).floor() as i64 % 2 == 0 {
        a
    } else {
        b
    }
}

struct Body {
    cx: f64,
    head_cy: f64,
    head_rx: f64,
    head_ry: f64,
    torso_top: f64,
    torso_bottom: f64,
    torso_half: f64,
    arm_width: f64,
    arm_bottom: f64,
    legs_half: f64,
}

impl Body {
    fn random(rng: &mut ChaCha8Rng, h: f64, w: f64) -> Self {
        let cx = jitter(rng, 0.5, 0.04) * w;
        let torso_top = jitter(rng, 0.27, 0.02) * h;
        let torso_bottom = jitter(rng, 0.6, 0.04) * h;
        Self {
            cx,
            head_cy: jitter(rng, 0.15, 0.01) * h,
            head_rx: jitter(rng, 0.12, 0.01) * w,
            head_ry: jitter(rng, 0.08, 0.005) * h,
            torso_top,
            torso_bottom,
            torso_half: jitter(rng, 0.2, 0.03) * w,
            arm_width: jitter(rng, 0.07, 0.01) * w,
            arm_bottom: torso_bottom + jitter(rng, 0.06, 0.02) * h,
            legs_half: jitter(rng, 0.16, 0.02) * w,
        }
    }

    fn label(&self, y: f64, x: f64, h: f64) -> usize {
        let (dx, dy) = ((x - self.cx) / self.head_rx, (y - self.head_cy) / self.head_ry);
        if dx * dx + dy * dy <= 1.0 {
            return if dy < -0.45 { HAIR } else { FACE };
        }
        let hair_dy = (y - self.head_cy + 0.3 * self.head_ry) / (1.15 * self.head_ry);
        let hair_dx = (x - self.cx) / (1.15 * self.head_rx);
        if hair_dx * hair_dx + hair_dy * hair_dy <= 1.0 && y < self.head_cy {
            return HAIR;
        }
        let rel = x - self.cx;
        if y >= self.torso_top && y <= self.torso_bottom && rel.abs() <= self.torso_half {
            return UPPER_CLOTHES;
        }
        let arm_top = self.torso_top + 0.02 * h;
        if y >= arm_top && y <= self.arm_bottom && rel.abs() > self.torso_half && rel.abs() <= self.torso_half + self.arm_width {
            return if rel < 0.0 { RIGHT_ARM } else { LEFT_ARM };
        }
        let gap = 0.03 * h;
        if y > self.torso_bottom && y <= 0.96 * h && rel.abs() <= self.legs_half {
            let legs_split = self.torso_bottom + 0.25 * (0.96 * h - self.torso_bottom);
            if y < legs_split || rel.abs() >= gap.min(self.legs_half * 0.2) {
                return LOWER_BODY;
            }
        }
        BACKGROUND
    }

    /// COCO-18 joints, `(x, y)` in pixels.
    fn keypoints(&self, h: f64) -> Vec<Keypoint> {
        let arm_x = self.torso_half + 0.5 * self.arm_width;
        let shoulder_y = self.torso_top + 0.03 * h;
        let elbow_y = 0.5 * (shoulder_y + self.arm_bottom);
        let hip_y = self.torso_bottom;
        let knee_y = hip_y + 0.5 * (0.96 * h - hip_y);
        let leg_x = 0.5 * self.legs_half;
        let eye_y = self.head_cy - 0.15 * self.head_ry;
        let pts = [
            (self.cx, self.head_cy + 0.2 * self.head_ry),
            (self.cx, self.torso_top),
            (self.cx - arm_x, shoulder_y),
            (self.cx - arm_x, elbow_y),
            (self.cx - arm_x, self.arm_bottom - 1.0),
            (self.cx + arm_x, shoulder_y),
            (self.cx + arm_x, elbow_y),
            (self.cx + arm_x, self.arm_bottom - 1.0),
            (self.cx - leg_x, hip_y),
            (self.cx - leg_x, knee_y),
            (self.cx - leg_x, 0.95 * h),
            (self.cx + leg_x, hip_y),
            (self.cx + leg_x, knee_y),
            (self.cx + leg_x, 0.95 * h),
            (self.cx - 0.35 * self.head_rx, eye_y),
            (self.cx + 0.35 * self.head_rx, eye_y),
            (self.cx - 0.95 * self.head_rx, self.head_cy),
            (self.cx + 0.95 * self.head_rx, self.head_cy),
        ];
        pts.iter().enumerate().map(|(id, &(x, y))| Keypoint { id, x, y }).collect()
    }
}

impl Fixture {
    /// Draws a fixture at `height × width`; equal seeds give equal fixtures.
    pub fn generate(seed: u64, height: usize, width: usize) -> Result<Self> {
        if height < 32 || width < 24 {
            return Err(Error::param(format!("fixtures need at least 32x24, got {height}x{width}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h, w) = (height as f64, width as f64);
        let body = Body::random(&mut rng, h, w);

        let parsing = ParsingMap::from_fn(height, width, |y, x| body.label(y as f64 + 0.5, x as f64 + 0.5, h))?;

        let skin = [jitter(&mut rng, 0.85, 0.08), jitter(&mut rng, 0.65, 0.08), jitter(&mut rng, 0.5, 0.08)];
        let hair = [rng.gen_range(0.05..0.35), rng.gen_range(0.03..0.25), rng.gen_range(0.02..0.2)];
        let (shirt_a, shirt_b) = (colour(&mut rng), colour(&mut rng));
        let shirt_period = rng.gen_range(2.0..6.0) * h / 96.0;
        let pants = [rng.gen_range(0.05..0.3), rng.gen_range(0.1..0.35), rng.gen_range(0.3..0.7)];
        let bg = rng.gen_range(0.75..0.95);
        let person = ImageTensor::from_fn(3, height, width, |c, y, x| {
            let shade = 1.0 - 0.1 * (x as f64 / w);
            let rgb = match parsing.label(y, x) {
                HAIR => hair,
                FACE | LEFT_ARM | RIGHT_ARM => skin,
                UPPER_CLOTHES => stripes(shirt_a, shirt_b, shirt_period, y as f64),
                LOWER_BODY => pants,
                _ => [bg; 3],
            };
            (rgb[c] * shade).clamp(0.0, 1.0)
        });

        // In-shop garment: a body rectangle with short sleeves on a white page.
        let g_cx = jitter(&mut rng, 0.5, 0.05) * w;
        let g_cy = jitter(&mut rng, 0.5, 0.05) * h;
        let g_half_h = rng.gen_range(0.22..0.34) * h;
        let g_half_w = rng.gen_range(0.22..0.3) * w;
        let sleeve = rng.gen_range(0.06..0.1) * w;
        let sleeve_h = rng.gen_range(0.25..0.4) * g_half_h * 2.0;
        let (cloth_a, cloth_b) = (colour(&mut rng), colour(&mut rng));
        let cloth_period = rng.gen_range(2.0..8.0) * h / 96.0;
        let top = g_cy - g_half_h;
        let cloth_mask = BinaryMask::from_fn(height, width, |y, x| {
            let (yf, xf) = (y as f64 + 0.5, x as f64 + 0.5);
            let dx = (xf - g_cx).abs();
            let inside_y = yf >= top && yf <= g_cy + g_half_h;
            inside_y && (dx <= g_half_w || (dx <= g_half_w + sleeve && yf <= top + sleeve_h))
        });
        let cloth = ImageTensor::from_fn(3, height, width, |c, y, x| {
            if cloth_mask.get(y, x) {
                stripes(cloth_a, cloth_b, cloth_period, y as f64 - top)[c]
            } else {
                1.0
            }
        });

        Ok(Self { person, parsing, keypoints: body.keypoints(h), cloth, cloth_mask })
    }

    pub fn height(&self) -> usize {
        self.person.height()
    }

    pub fn width(&self) -> usize {
        self.person.width()
    }

    pub fn keypoint_map(&self) -> Result<KeypointMap> {
        render_keypoints(&self.keypoints, self.height(), self.width(), default_keypoint_radius(self.height()))
    }

    pub fn inputs(&self) -> Result<TryOnInputs> {
        Ok(TryOnInputs {
            cloth: self.cloth.clone(),
            cloth_mask: self.cloth_mask.clone(),
            keypoints: self.keypoint_map()?,
            parsing: self.parsing.clone(),
            person: self.person.clone(),
        })
    }

    /// Writes the five sample files into `dir`, which must exist.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        io::write_rgb_png(&self.cloth, &dir.join(CLOTH_FILE))?;
        io::write_mask_png(&self.cloth_mask, &dir.join(CLOTH_MASK_FILE))?;
        io::write_rgb_png(&self.person, &dir.join(PERSON_FILE))?;
        io::write_parsing_png(&self.parsing, &dir.join(PARSING_FILE))?;
        io::write_keypoints(&self.keypoints, &dir.join(KEYPOINTS_FILE))
    }
}

/// Reads a sample directory laid out as by [`Fixture::write_dir`].
pub fn read_sample_dir(dir: &Path) -> Result<TryOnInputs> {
    let person = io::read_rgb_png(&dir.join(PERSON_FILE))?;
    let (h, w) = (person.height(), person.width());
    let keypoints = io::read_keypoints(&dir.join(KEYPOINTS_FILE))?;
    let inputs = TryOnInputs {
        cloth: io::read_rgb_png(&dir.join(CLOTH_FILE))?,
        cloth_mask: io::read_mask_png(&dir.join(CLOTH_MASK_FILE))?,
        keypoints: render_keypoints(&keypoints, h, w, default_keypoint_radius(h))?,
        parsing: io::read_parsing_png(&dir.join(PARSING_FILE))?,
        person,
    };
    inputs.validate()?;
    Ok(inputs)
}
