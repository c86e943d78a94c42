//! Fixed, seeded stand-in for a pretrained perceptual feature network.
//!
//! Five levels at strides 1, 2, 4, 8, 16: each level is `tanh(conv(·))` of the
//! previous level after 2×2 average pooling (ceil mode, partial windows
//! averaged over the pixels they cover). The network is smooth, so perceptual
//! losses built on it have well-defined gradients everywhere off L1 ties.

use crate::error::{Error, Result};
use crate::nn::conv::Conv2D;
use crate::nn::params::{ParamVisitor, ParamVisitorMut, Parameters};
use crate::tensor::ImageTensor;

pub const LEVELS: usize = 5;
const WIDTHS: [usize; LEVELS] = [8, 12, 16, 16, 16];
/// Seed used by [`PerceptualExtractor::default`].
pub const DEFAULT_EXTRACTOR_SEED: u64 = 0x0001_91CE_5EED;

#[derive(Debug, Clone, PartialEq)]
pub struct PerceptualExtractor {
    convs: Vec<Conv2D>,
}

impl Default for PerceptualExtractor {
    fn default() -> Self {
        Self::seeded(DEFAULT_EXTRACTOR_SEED)
    }
}

fn avg_pool2(x: &ImageTensor) -> ImageTensor {
    let (c, h, w) = x.shape();
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    ImageTensor::from_fn(c, oh, ow, |ch, y, xx| {
        let (mut acc, mut n) = (0.0, 0.0);
        for yy in 2 * y..(2 * y + 2).min(h) {
            for xs in 2 * xx..(2 * xx + 2).min(w) {
                acc += x.get(ch, yy, xs);
                n += 1.0;
            }
        }
        acc / n
    })
}

fn avg_pool2_backward(grad: &ImageTensor, h: usize, w: usize) -> ImageTensor {
    let (c, _, _) = grad.shape();
    ImageTensor::from_fn(c, h, w, |ch, y, x| {
        let (py, px) = (y / 2, x / 2);
        let rows = (2 * py + 2).min(h) - 2 * py;
        let cols = (2 * px + 2).min(w) - 2 * px;
        grad.get(ch, py, px) / (rows * cols) as f64
    })
}

impl PerceptualExtractor {
    pub fn seeded(seed: u64) -> Self {
        let mut cin = 3;
        let convs = WIDTHS
            .iter()
            .enumerate()
            .map(|(i, &cout)| {
                let conv = Conv2D::seeded(seed, &format!("perceptual.{i}"), cin, cout, 1);
                cin = cout;
                conv
            })
            .collect();
        Self { convs }
    }

    fn check_input(x: &ImageTensor) -> Result<()> {
        if x.channels() != 3 {
            return Err(Error::dim(format!("perceptual features need 3 channels, got {}", x.channels())));
        }
        Ok(())
    }

    /// Feature maps at strides 1, 2, 4, 8, 16.
    pub fn features(&self, x: &ImageTensor) -> Result<Vec<ImageTensor>> {
        Self::check_input(x)?;
        let mut levels: Vec<ImageTensor> = Vec::with_capacity(LEVELS);
        for (i, conv) in self.convs.iter().enumerate() {
            let input = if i == 0 { x.clone() } else { avg_pool2(&levels[i - 1]) };
            levels.push(conv.forward(&input)?.map(f64::tanh));
        }
        Ok(levels)
    }

    /// Pulls per-level cotangents `grads[i] = ∂L/∂features[i]` back to `∂L/∂x`.
    pub fn backward(&self, x: &ImageTensor, grads: &[ImageTensor]) -> Result<ImageTensor> {
        if grads.len() != LEVELS {
            return Err(Error::Structure(format!("expected {LEVELS} level cotangents, got {}", grads.len())));
        }
        let levels = self.features(x)?;
        for (g, f) in grads.iter().zip(&levels) {
            g.ensure_same_shape(f, "perceptual cotangent")?;
        }
        // Cotangent flowing into level i's output, accumulated from deeper levels.
        let mut carried: Option<ImageTensor> = None;
        for i in (0..LEVELS).rev() {
            let mut g = grads[i].clone();
            if let Some(c) = carried.take() {
                g = g.zip_map(&c, |a, b| a + b)?;
            }
            // Through tanh: d tanh = 1 - tanh².
            let pre = g.zip_map(&levels[i], |gv, t| gv * (1.0 - t * t))?;
            let (h, w) = if i == 0 {
                (x.height(), x.width())
            } else {
                (levels[i - 1].height().div_ceil(2), levels[i - 1].width().div_ceil(2))
            };
            let gin = self.convs[i].backward_input(&pre, h, w)?;
            if i == 0 {
                return Ok(gin);
            }
            carried = Some(avg_pool2_backward(&gin, levels[i - 1].height(), levels[i - 1].width()));
        }
        unreachable!("loop returns at level 0")
    }
}

impl Parameters for PerceptualExtractor {
    fn visit(&self, prefix: &str, f: &mut ParamVisitor<'_>) {
        for (i, c) in self.convs.iter().enumerate() {
            c.visit(&format!("{prefix}.{i}"), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut ParamVisitorMut<'_>) {
        for (i, c) in self.convs.iter_mut().enumerate() {
            c.visit_mut(&format!("{prefix}.{i}"), f);
        }
    }
}

/// Features from the default-seeded extractor.
pub fn toy_perceptual_features(x: &ImageTensor) -> Result<Vec<ImageTensor>> {
    PerceptualExtractor::default().features(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn image(seed: u64, h: usize, w: usize) -> ImageTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageTensor::from_fn(3, h, w, |_, _, _| rng.gen())
    }

    #[test]
    fn level_shapes() {
        let f = toy_perceptual_features(&image(1, 45, 31)).unwrap();
        let sizes: Vec<(usize, usize)> = f.iter().map(|t| (t.height(), t.width())).collect();
        assert_eq!(sizes, vec![(45, 31), (23, 16), (12, 8), (6, 4), (3, 2)]);
        for (s, stride) in sizes.iter().zip([1usize, 2, 4, 8, 16]) {
            assert_eq!(*s, (45usize.div_ceil(stride), 31usize.div_ceil(stride)));
        }
    }

    #[test]
    fn deterministic_and_sensitive() {
        let x = image(2, 16, 16);
        let a = toy_perceptual_features(&x).unwrap();
        assert_eq!(a, toy_perceptual_features(&x).unwrap());
        let mut y = x.clone();
        y.set(1, 7, 7, 1.0 - y.get(1, 7, 7));
        let b = toy_perceptual_features(&y).unwrap();
        assert_ne!(a[0], b[0]);
        assert!(toy_perceptual_features(&ImageTensor::zeros(1, 8, 8)).is_err());
    }

    #[test]
    fn backward_matches_directional_difference() {
        let ext = PerceptualExtractor::seeded(3);
        let x = image(4, 9, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let feats = ext.features(&x).unwrap();
        let cot: Vec<ImageTensor> =
            feats.iter().map(|f| f.map(|_| rng.gen_range(-1.0..1.0))).collect();
        let dir = x.map(|_| rng.gen_range(-1.0..1.0));
        let score = |t: &ImageTensor| -> f64 {
            ext.features(t)
                .unwrap()
                .iter()
                .zip(&cot)
                .map(|(f, c)| f.data().iter().zip(c.data()).map(|(a, b)| a * b).sum::<f64>())
                .sum()
        };
        let eps = 1e-5;
        let plus = x.zip_map(&dir, |a, d| a + eps * d).unwrap();
        let minus = x.zip_map(&dir, |a, d| a - eps * d).unwrap();
        let numeric = (score(&plus) - score(&minus)) / (2.0 * eps);
        let grad = ext.backward(&x, &cot).unwrap();
        let analytic: f64 = grad.data().iter().zip(dir.data()).map(|(a, b)| a * b).sum();
        assert!((numeric - analytic).abs() <= 1e-7 * analytic.abs().max(1.0));
    }
}
