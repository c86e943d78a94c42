//! Training objectives for the three stages, their analytic gradients, and
//! the Fréchet distance between Gaussian feature statistics.
//!
//! Every L1 norm here is a mean over elements so the default weights do not
//! depend on raster size.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::AppearanceFlow;
use crate::nn::perceptual::{PerceptualExtractor, LEVELS};
use crate::person::{ParsingMap, NUM_CLASSES};
use crate::tensor::{l1_mean, sobel_adjoint, sobel_gradients, BinaryMask, ImageTensor};

/// Per-level weights of the perceptual term, shallow to deep.
pub const DEFAULT_LEVEL_WEIGHTS: [f64; LEVELS] = [1.0 / 32.0, 1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0, 1.0];

/// Smoothing inside the total-variation square root.
pub const TV_EPSILON: f64 = 1e-8;

/// Lower clamp on probabilities before the logarithm.
pub const CE_EPSILON: f64 = 1e-12;

/// Tolerance on per-pixel probability sums.
pub const PROBABILITY_SUM_TOLERANCE: f64 = 1e-5;

/// Loss report emitted by the CLI: `{name: value}`.
pub type LossReport = BTreeMap<String, f64>;

fn check_non_negative(name: &str, values: &[f64]) -> Result<()> {
    match values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        Some(v) => Err(Error::param(format!("{name} weights must be finite and >= 0, got {v}"))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeightsMCW {
    pub mask: f64,
    pub cloth: f64,
    pub vgg: f64,
    pub tv: f64,
}

impl Default for LossWeightsMCW {
    fn default() -> Self {
        Self { mask: 2.5, cloth: 5.0, vgg: 1.0, tv: 0.1 }
    }
}

impl LossWeightsMCW {
    pub fn validate(&self) -> Result<()> {
        check_non_negative("MCW loss", &[self.mask, self.cloth, self.vgg, self.tv])
    }
}

/// Per-class weights for the parsing cross-entropy, indexed by class id.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassWeights(pub [f64; NUM_CLASSES]);

impl Default for ClassWeights {
    fn default() -> Self {
        Self([1.0, 1.0, 1.0, 3.0, 3.0, 3.0, 1.0])
    }
}

impl ClassWeights {
    pub fn validate(&self) -> Result<()> {
        match self.0.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            Some(v) => Err(Error::param(format!("class weights must be > 0, got {v}"))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeightsLTF {
    pub img: f64,
    pub perceptual: f64,
    pub edge: f64,
}

impl Default for LossWeightsLTF {
    fn default() -> Self {
        Self { img: 1.0, perceptual: 2.0, edge: 0.1 }
    }
}

impl LossWeightsLTF {
    pub fn validate(&self) -> Result<()> {
        check_non_negative("LTF loss", &[self.img, self.perceptual, self.edge])
    }
}

fn mask_as_single_channel(m_w: &ImageTensor, m_gt: &BinaryMask) -> Result<ImageTensor> {
    if m_w.channels() != 1 {
        return Err(Error::dim(format!("mask loss expects a 1-channel raster, got {}", m_w.channels())));
    }
    let gt = m_gt.to_tensor();
    m_w.ensure_same_shape(&gt, "mask_loss")?;
    Ok(gt)
}

/// Mean absolute difference between a real-valued warped mask and the target.
pub fn mask_loss(m_w: &ImageTensor, m_gt: &BinaryMask) -> Result<f64> {
    l1_mean(m_w, &mask_as_single_channel(m_w, m_gt)?)
}

/// Person pixels inside the target clothing mask, black elsewhere.
pub fn cloth_ground_truth(image: &ImageTensor, m_gt: &BinaryMask) -> Result<ImageTensor> {
    image.ensure_spatial(m_gt.height(), m_gt.width(), "cloth_ground_truth")?;
    let (c, h, w) = image.shape();
    Ok(ImageTensor::from_fn(c, h, w, |ch, y, x| if m_gt.get(y, x) { image.get(ch, y, x) } else { 0.0 }))
}

pub fn cloth_loss(c_w: &ImageTensor, c_gt: &ImageTensor) -> Result<f64> {
    l1_mean(c_w, c_gt)
}

/// `Σ_i λ_i · meanL1(φ_i(a), φ_i(b))` over the extractor's levels.
pub fn perceptual_loss(
    a: &ImageTensor,
    b: &ImageTensor,
    extractor: &PerceptualExtractor,
    level_weights: &[f64; LEVELS],
) -> Result<f64> {
    a.ensure_same_shape(b, "perceptual_loss")?;
    let fa = extractor.features(a)?;
    let fb = extractor.features(b)?;
    let mut total = 0.0;
    for ((x, y), w) in fa.iter().zip(&fb).zip(level_weights) {
        total += w * l1_mean(x, y)?;
    }
    Ok(total)
}

fn check_tv_raster(flow: &AppearanceFlow) -> Result<()> {
    if flow.height() < 2 || flow.width() < 2 {
        return Err(Error::dim(format!(
            "total variation needs at least 2x2, got {}x{}",
            flow.height(),
            flow.width()
        )));
    }
    Ok(())
}

/// Forward differences at `(y, x)` of one plane; zero on the last row/column.
#[inline]
fn forward_diffs(p: &[f64], h: usize, w: usize, y: usize, x: usize) -> (f64, f64) {
    let v = p[y * w + x];
    let dx = if x + 1 < w { p[y * w + x + 1] - v } else { 0.0 };
    let dy = if y + 1 < h { p[(y + 1) * w + x] - v } else { 0.0 };
    (dx, dy)
}

/// Smoothed isotropic magnitude; elements with no variation contribute exactly 0.
#[inline]
fn tv_magnitude(dx: f64, dy: f64) -> f64 {
    if dx == 0.0 && dy == 0.0 {
        0.0
    } else {
        (dx * dx + dy * dy + TV_EPSILON).sqrt()
    }
}

/// Isotropic total variation, per-channel mean over pixels, averaged over
/// the two displacement channels.
pub fn tv_loss(flow: &AppearanceFlow) -> Result<f64> {
    check_tv_raster(flow)?;
    let (h, w) = (flow.height(), flow.width());
    let mut total = 0.0;
    for c in 0..2 {
        let p = flow.tensor().plane(c);
        for y in 0..h {
            for x in 0..w {
                let (dx, dy) = forward_diffs(p, h, w, y, x);
                total += tv_magnitude(dx, dy);
            }
        }
    }
    Ok(total / (2 * h * w) as f64)
}

fn tv_gradient(flow: &AppearanceFlow) -> Result<ImageTensor> {
    check_tv_raster(flow)?;
    let (h, w) = (flow.height(), flow.width());
    let scale = 1.0 / (2 * h * w) as f64;
    let mut grad = ImageTensor::zeros(2, h, w);
    for c in 0..2 {
        let p = flow.tensor().plane(c);
        let g = grad.plane_mut(c);
        for y in 0..h {
            for x in 0..w {
                let (dx, dy) = forward_diffs(p, h, w, y, x);
                let m = tv_magnitude(dx, dy);
                if m == 0.0 {
                    continue;
                }
                let (gx, gy) = (scale * dx / m, scale * dy / m);
                let i = y * w + x;
                if x + 1 < w {
                    g[i + 1] += gx;
                    g[i] -= gx;
                }
                if y + 1 < h {
                    g[i + w] += gy;
                    g[i] -= gy;
                }
            }
        }
    }
    Ok(grad)
}

/// The four warping-stage loss terms before weighting.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct McwParts {
    pub mask: f64,
    pub cloth: f64,
    pub vgg: f64,
    pub tv: f64,
}

pub fn mcw_loss(parts: &McwParts, weights: &LossWeightsMCW) -> f64 {
    weights.mask * parts.mask + weights.cloth * parts.cloth + weights.vgg * parts.vgg + weights.tv * parts.tv
}

fn check_ce_shapes(prob: &ImageTensor, target: &ParsingMap) -> Result<()> {
    if prob.channels() != NUM_CLASSES {
        return Err(Error::dim(format!(
            "cross-entropy expects {NUM_CLASSES} probability channels, got {}",
            prob.channels()
        )));
    }
    prob.ensure_spatial(target.height(), target.width(), "weighted_cross_entropy")
}

/// Cross-entropy evaluated without the normalization check; used for
/// finite differences where perturbed maps no longer sum to one.
pub fn weighted_cross_entropy_unchecked(prob: &ImageTensor, target: &ParsingMap, weights: &ClassWeights) -> Result<f64> {
    check_ce_shapes(prob, target)?;
    let (h, w) = (target.height(), target.width());
    let mut total = 0.0;
    for y in 0..h {
        for x in 0..w {
            let k = target.label(y, x);
            total -= weights.0[k] * prob.get(k, y, x).max(CE_EPSILON).ln();
        }
    }
    Ok(total / (h * w) as f64)
}

/// Mean over pixels of `w_class · (−log p_true)`. Probabilities must sum to
/// one per pixel.
pub fn weighted_cross_entropy(prob: &ImageTensor, target: &ParsingMap, weights: &ClassWeights) -> Result<f64> {
    check_ce_shapes(prob, target)?;
    weights.validate()?;
    let (h, w) = (target.height(), target.width());
    for y in 0..h {
        for x in 0..w {
            let s: f64 = (0..NUM_CLASSES).map(|k| prob.get(k, y, x)).sum();
            if (s - 1.0).abs().is_nan() || (s - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
                return Err(Error::Validation(format!(
                    "class probabilities at ({y}, {x}) sum to {s}, not 1"
                )));
            }
        }
    }
    weighted_cross_entropy_unchecked(prob, target, weights)
}

fn ce_gradient(prob: &ImageTensor, target: &ParsingMap, weights: &ClassWeights) -> Result<ImageTensor> {
    check_ce_shapes(prob, target)?;
    let (h, w) = (target.height(), target.width());
    let n = (h * w) as f64;
    let mut grad = ImageTensor::zeros(NUM_CLASSES, h, w);
    for y in 0..h {
        for x in 0..w {
            let k = target.label(y, x);
            let p = prob.get(k, y, x);
            if p > CE_EPSILON {
                grad.set(k, y, x, -weights.0[k] / (p * n));
            }
        }
    }
    Ok(grad)
}

/// Mean L1 distance between Sobel responses.
pub fn edge_loss(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    a.ensure_same_shape(b, "edge_loss")?;
    l1_mean(&sobel_gradients(a)?, &sobel_gradients(b)?)
}

/// Weighted sum of pixel L1, perceptual and edge terms.
pub fn composite_image_loss(
    pred: &ImageTensor,
    target: &ImageTensor,
    extractor: &PerceptualExtractor,
    weights: &LossWeightsLTF,
) -> Result<f64> {
    Ok(weights.img * l1_mean(pred, target)?
        + weights.perceptual * perceptual_loss(pred, target, extractor, &DEFAULT_LEVEL_WEIGHTS)?
        + weights.edge * edge_loss(pred, target)?)
}

/// Texture-fusion objective: the composite loss on the coarse and the fine result.
pub fn ltf_loss(
    coarse: &ImageTensor,
    fine: &ImageTensor,
    target: &ImageTensor,
    extractor: &PerceptualExtractor,
    weights: &LossWeightsLTF,
) -> Result<f64> {
    Ok(composite_image_loss(coarse, target, extractor, weights)?
        + composite_image_loss(fine, target, extractor, weights)?)
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `∂ meanL1(a, b) / ∂a`.
fn l1_gradient(a: &ImageTensor, b: &ImageTensor) -> Result<ImageTensor> {
    let n = a.len() as f64;
    a.zip_map(b, |x, y| sign(x - y) / n)
}

fn perceptual_gradient(
    a: &ImageTensor,
    b: &ImageTensor,
    extractor: &PerceptualExtractor,
    level_weights: &[f64; LEVELS],
) -> Result<ImageTensor> {
    a.ensure_same_shape(b, "perceptual_loss")?;
    let fa = extractor.features(a)?;
    let fb = extractor.features(b)?;
    let mut cotangents = Vec::with_capacity(LEVELS);
    for ((x, y), w) in fa.iter().zip(&fb).zip(level_weights) {
        cotangents.push(l1_gradient(x, y)?.scale(*w));
    }
    extractor.backward(a, &cotangents)
}

fn edge_gradient(a: &ImageTensor, b: &ImageTensor) -> Result<ImageTensor> {
    a.ensure_same_shape(b, "edge_loss")?;
    sobel_adjoint(&l1_gradient(&sobel_gradients(a)?, &sobel_gradients(b)?)?)
}

fn composite_gradient(
    a: &ImageTensor,
    b: &ImageTensor,
    extractor: &PerceptualExtractor,
    weights: &LossWeightsLTF,
) -> Result<ImageTensor> {
    let g1 = l1_gradient(a, b)?;
    let g2 = perceptual_gradient(a, b, extractor, &DEFAULT_LEVEL_WEIGHTS)?;
    let g3 = edge_gradient(a, b)?;
    let mut out = g1.scale(weights.img);
    for ((o, p), e) in out.data_mut().iter_mut().zip(g2.data()).zip(g3.data()) {
        *o += weights.perceptual * p + weights.edge * e;
    }
    Ok(out)
}

/// Which argument of a loss is being differentiated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossSlot {
    Prediction,
    Target,
}

/// A loss with every argument except one fixed. `other` is the operand not
/// being differentiated.
#[derive(Debug, Clone, Copy)]
pub enum DifferentiableLoss<'a> {
    Mask { target: &'a BinaryMask },
    Cloth { other: &'a ImageTensor },
    Perceptual { other: &'a ImageTensor, extractor: &'a PerceptualExtractor, level_weights: [f64; LEVELS] },
    Tv,
    CrossEntropy { target: &'a ParsingMap, weights: ClassWeights },
    Edge { other: &'a ImageTensor },
    Composite { other: &'a ImageTensor, extractor: &'a PerceptualExtractor, weights: LossWeightsLTF },
}

impl DifferentiableLoss<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            DifferentiableLoss::Mask { .. } => "mask",
            DifferentiableLoss::Cloth { .. } => "cloth",
            DifferentiableLoss::Perceptual { .. } => "perceptual",
            DifferentiableLoss::Tv => "tv",
            DifferentiableLoss::CrossEntropy { .. } => "cross_entropy",
            DifferentiableLoss::Edge { .. } => "edge",
            DifferentiableLoss::Composite { .. } => "composite",
        }
    }

    fn check_slot(&self, slot: LossSlot) -> Result<()> {
        let symmetric = matches!(
            self,
            DifferentiableLoss::Cloth { .. }
                | DifferentiableLoss::Perceptual { .. }
                | DifferentiableLoss::Edge { .. }
                | DifferentiableLoss::Composite { .. }
        );
        if slot == LossSlot::Target && !symmetric {
            return Err(Error::param(format!("{} loss has no differentiable target slot", self.name())));
        }
        Ok(())
    }

    /// Orders `(point, other)` into `(prediction, target)`.
    fn operands<'b>(slot: LossSlot, point: &'b ImageTensor, other: &'b ImageTensor) -> (&'b ImageTensor, &'b ImageTensor) {
        match slot {
            LossSlot::Prediction => (point, other),
            LossSlot::Target => (other, point),
        }
    }

    /// Loss value with `point` placed in `slot`.
    pub fn value(&self, slot: LossSlot, point: &ImageTensor) -> Result<f64> {
        self.check_slot(slot)?;
        match *self {
            DifferentiableLoss::Mask { target } => mask_loss(point, target),
            DifferentiableLoss::Cloth { other } => {
                let (a, b) = Self::operands(slot, point, other);
                cloth_loss(a, b)
            }
            DifferentiableLoss::Perceptual { other, extractor, level_weights } => {
                let (a, b) = Self::operands(slot, point, other);
                perceptual_loss(a, b, extractor, &level_weights)
            }
            DifferentiableLoss::Tv => tv_loss(&AppearanceFlow::new(point.clone())?),
            DifferentiableLoss::CrossEntropy { target, weights } => {
                weighted_cross_entropy_unchecked(point, target, &weights)
            }
            DifferentiableLoss::Edge { other } => {
                let (a, b) = Self::operands(slot, point, other);
                edge_loss(a, b)
            }
            DifferentiableLoss::Composite { other, extractor, weights } => {
                let (a, b) = Self::operands(slot, point, other);
                composite_image_loss(a, b, extractor, &weights)
            }
        }
    }

    /// Analytic gradient with respect to the tensor in `slot`. The symmetric
    /// losses share one formula for both slots.
    pub fn gradient(&self, slot: LossSlot, point: &ImageTensor) -> Result<ImageTensor> {
        self.check_slot(slot)?;
        match *self {
            DifferentiableLoss::Mask { target } => l1_gradient(point, &mask_as_single_channel(point, target)?),
            DifferentiableLoss::Cloth { other } => l1_gradient(point, other),
            DifferentiableLoss::Perceptual { other, extractor, level_weights } => {
                perceptual_gradient(point, other, extractor, &level_weights)
            }
            DifferentiableLoss::Tv => tv_gradient(&AppearanceFlow::new(point.clone())?),
            DifferentiableLoss::CrossEntropy { target, weights } => ce_gradient(point, target, &weights),
            DifferentiableLoss::Edge { other } => edge_gradient(point, other),
            DifferentiableLoss::Composite { other, extractor, weights } => {
                composite_gradient(point, other, extractor, &weights)
            }
        }
    }

    /// Every quantity passed through an absolute value or clamp, flattened.
    /// A sign change between two points means a kink lies between them.
    pub fn residuals(&self, slot: LossSlot, point: &ImageTensor) -> Result<Vec<f64>> {
        self.check_slot(slot)?;
        let diff = |a: &ImageTensor, b: &ImageTensor| -> Result<Vec<f64>> {
            a.ensure_same_shape(b, "residuals")?;
            Ok(a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect())
        };
        let features = |a: &ImageTensor, b: &ImageTensor, ex: &PerceptualExtractor| -> Result<Vec<f64>> {
            let mut out = Vec::new();
            for (x, y) in ex.features(a)?.iter().zip(&ex.features(b)?) {
                out.extend(diff(x, y)?);
            }
            Ok(out)
        };
        let edges = |a: &ImageTensor, b: &ImageTensor| diff(&sobel_gradients(a)?, &sobel_gradients(b)?);
        match *self {
            DifferentiableLoss::Mask { target } => diff(point, &mask_as_single_channel(point, target)?),
            DifferentiableLoss::Cloth { other } => diff(point, other),
            DifferentiableLoss::Perceptual { other, extractor, .. } => features(point, other, extractor),
            DifferentiableLoss::Tv => Ok(Vec::new()),
            DifferentiableLoss::CrossEntropy { .. } => Ok(point.data().iter().map(|p| p - CE_EPSILON).collect()),
            DifferentiableLoss::Edge { other } => edges(point, other),
            DifferentiableLoss::Composite { other, extractor, .. } => {
                let mut out = diff(point, other)?;
                out.extend(features(point, other, extractor)?);
                out.extend(edges(point, other)?);
                Ok(out)
            }
        }
    }
}

/// Analytic gradient of `loss` with respect to `slot`, evaluated at `point`.
pub fn loss_gradient(loss: &DifferentiableLoss<'_>, slot: LossSlot, point: &ImageTensor) -> Result<ImageTensor> {
    loss.gradient(slot, point)
}

/// Outcome of [`gradient_check`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientCheck {
    pub loss: String,
    /// Coordinates compared.
    pub checked: usize,
    /// Coordinates rejected because the difference stencil straddled a kink.
    pub skipped: usize,
    pub max_relative_error: f64,
}

/// Floor on the denominator of the relative error.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

/// Compares the analytic gradient with central differences of step `step` at
/// `count` random coordinates of `point`. Coordinates whose `±step` stencil
/// flips the sign of any residual are redrawn (at most `20 · count` draws).
pub fn gradient_check(
    loss: &DifferentiableLoss<'_>,
    slot: LossSlot,
    point: &ImageTensor,
    count: usize,
    step: f64,
    seed: u64,
) -> Result<GradientCheck> {
    let analytic = loss.gradient(slot, point)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradientCheck { loss: loss.name().into(), checked: 0, skipped: 0, max_relative_error: 0.0 };
    let mut draws = 0;
    while report.checked < count && draws < 20 * count.max(1) {
        draws += 1;
        let i = rng.gen_range(0..point.len());
        let mut plus = point.clone();
        plus.data_mut()[i] += step;
        let mut minus = point.clone();
        minus.data_mut()[i] -= step;
        let (rp, rm) = (loss.residuals(slot, &plus)?, loss.residuals(slot, &minus)?);
        if rp.iter().zip(&rm).any(|(a, b)| sign(*a) != sign(*b)) {
            report.skipped += 1;
            continue;
        }
        let numeric = (loss.value(slot, &plus)? - loss.value(slot, &minus)?) / (2.0 * step);
        let err = relative_error(analytic.data()[i], numeric);
        report.max_relative_error = report.max_relative_error.max(err);
        report.checked += 1;
    }
    Ok(report)
}

/// Mean and covariance of a set of feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

/// Most negative eigenvalue tolerated in a covariance.
pub const PSD_TOLERANCE: f64 = 1e-8;

impl GaussianStats {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 || cov.nrows() != d || cov.ncols() != d {
            return Err(Error::dim(format!(
                "mean of length {d} needs a {d}x{d} covariance, got {}x{}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        let scale = cov.amax().max(1.0);
        if (&cov - cov.transpose()).amax() > 1e-10 * scale {
            return Err(Error::Validation("covariance is not symmetric".into()));
        }
        let min_eig = SymmetricEigen::new(cov.clone()).eigenvalues.min();
        if min_eig < -PSD_TOLERANCE {
            return Err(Error::Validation(format!("covariance has eigenvalue {min_eig} < 0")));
        }
        Ok(Self { mean, cov })
    }

    /// Sample mean and unbiased covariance of the rows of `samples`.
    pub fn from_samples(samples: &[Vec<f64>]) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return Err(Error::param(format!("need at least 2 samples, got {n}")));
        }
        let d = samples[0].len();
        if samples.iter().any(|s| s.len() != d) {
            return Err(Error::dim("feature vectors differ in length"));
        }
        let x = DMatrix::from_fn(n, d, |i, j| samples[i][j]);
        let mean = DVector::from_fn(d, |j, _| x.column(j).mean());
        let centred = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
        let cov = centred.transpose() * &centred / (n - 1) as f64;
        let cov = (&cov + cov.transpose()) * 0.5;
        Self::new(mean, cov)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }
}

/// Principal square root of a symmetric PSD matrix, negative eigenvalues clamped.
fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new((m + m.transpose()) * 0.5);
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// `‖μ1 − μ2‖² + tr(Σ1 + Σ2 − 2 (Σ1 Σ2)^½)`.
///
/// The trace of `(Σ1 Σ2)^½` is taken as that of the symmetric
/// `(√Σ1 Σ2 √Σ1)^½`, which has the same eigenvalues.
pub fn frechet_distance(s1: &GaussianStats, s2: &GaussianStats) -> Result<f64> {
    if s1.dim() != s2.dim() {
        return Err(Error::dim(format!("statistics of dimension {} and {}", s1.dim(), s2.dim())));
    }
    let mean_term = (&s1.mean - &s2.mean).norm_squared();
    let r1 = sqrt_psd(&s1.cov);
    let inner = &r1 * &s2.cov * &r1;
    let inner = (&inner + inner.transpose()) * 0.5;
    let cross: f64 = SymmetricEigen::new(inner).eigenvalues.iter().map(|v| v.max(0.0).sqrt()).sum();
    Ok((mean_term + s1.cov.trace() + s2.cov.trace() - 2.0 * cross).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::person::{BACKGROUND, UPPER_CLOTHES};

    fn random(seed: u64, c: usize, h: usize, w: usize) -> ImageTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageTensor::from_fn(c, h, w, |_, _, _| rng.gen())
    }

    /// `base + δ` with `|δ| ∈ [0.05, 0.3]`, random sign, so no pixel ties.
    fn offset(base: &ImageTensor, seed: u64) -> ImageTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        base.map(|v| {
            let d = rng.gen_range(0.05..0.3);
            if rng.gen_bool(0.5) {
                v + d
            } else {
                v - d
            }
        })
    }

    #[test]
    fn mask_loss_examples() {
        let m = BinaryMask::from_fn(6, 5, |y, x| (x + y) % 3 == 0);
        assert_eq!(mask_loss(&m.to_tensor(), &m).unwrap(), 0.0);
        assert_eq!(mask_loss(&m.complement().to_tensor(), &m).unwrap(), 1.0);
        let soft = random(1, 1, 6, 5);
        let oracle: f64 = (0..6)
            .flat_map(|y| (0..5).map(move |x| (y, x)))
            .map(|(y, x)| (soft.get(0, y, x) - if m.get(y, x) { 1.0 } else { 0.0 }).abs())
            .sum::<f64>()
            / 30.0;
        assert!((mask_loss(&soft, &m).unwrap() - oracle).abs() < 1e-12);
        assert!(mask_loss(&random(1, 3, 6, 5), &m).is_err());
        assert!(mask_loss(&soft, &BinaryMask::zeros(5, 5)).is_err());
    }

    #[test]
    fn cloth_ground_truth_and_loss() {
        let img = random(2, 3, 5, 4);
        assert_eq!(cloth_ground_truth(&img, &BinaryMask::ones(5, 4)).unwrap(), img);
        assert!(cloth_ground_truth(&img, &BinaryMask::zeros(5, 4)).unwrap().data().iter().all(|&v| v == 0.0));
        let m = BinaryMask::from_fn(5, 4, |y, _| y < 2);
        let gt = cloth_ground_truth(&img, &m).unwrap();
        for c in 0..3 {
            for y in 0..5 {
                for x in 0..4 {
                    assert_eq!(gt.get(c, y, x), img.get(c, y, x) * if y < 2 { 1.0 } else { 0.0 });
                }
            }
        }
        assert_eq!(cloth_loss(&img, &img).unwrap(), 0.0);
        assert!((cloth_loss(&img.map(|v| v + 1.0), &img).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn perceptual_loss_examples() {
        let ex = PerceptualExtractor::default();
        let a = random(3, 3, 16, 12);
        let b = random(4, 3, 16, 12);
        assert_eq!(perceptual_loss(&a, &a, &ex, &DEFAULT_LEVEL_WEIGHTS).unwrap(), 0.0);
        assert_eq!(perceptual_loss(&a, &b, &ex, &[0.0; LEVELS]).unwrap(), 0.0);
        let (fa, fb) = (ex.features(&a).unwrap(), ex.features(&b).unwrap());
        let oracle: f64 = fa.iter().zip(&fb).map(|(x, y)| l1_mean(x, y).unwrap()).sum();
        assert!((perceptual_loss(&a, &b, &ex, &[1.0; LEVELS]).unwrap() - oracle).abs() < 1e-9);
        assert!(perceptual_loss(&a, &random(4, 1, 16, 12), &ex, &DEFAULT_LEVEL_WEIGHTS).is_err());
    }

    #[test]
    fn tv_examples() {
        assert_eq!(tv_loss(&AppearanceFlow::constant(7, 9, 1.5, -2.0)).unwrap(), 0.0);
        let (h, w) = (6, 8);
        let ramp = AppearanceFlow::new(ImageTensor::from_fn(2, h, w, |c, _, x| if c == 0 { x as f64 } else { 0.0 })).unwrap();
        let mut oracle = 0.0;
        for y in 0..h {
            for x in 0..w {
                let dx = if x + 1 < w { 1.0 } else { 0.0 };
                if dx != 0.0 {
                    oracle += (dx * dx + TV_EPSILON).sqrt();
                }
                let _ = y;
            }
        }
        oracle /= (2 * h * w) as f64;
        assert!((tv_loss(&ramp).unwrap() - oracle).abs() < 1e-9);
        assert!((tv_loss(&ramp).unwrap() - (w - 1) as f64 / (2 * w) as f64).abs() < 1e-8);

        let f = AppearanceFlow::new(random(5, 2, 10, 7).scale(4.0)).unwrap();
        for alpha in [0.0, 0.5, 2.0, 7.0] {
            let scaled = AppearanceFlow::new(f.tensor().scale(alpha)).unwrap();
            assert!((tv_loss(&scaled).unwrap() - alpha * tv_loss(&f).unwrap()).abs() <= 1e-6);
        }
        assert!(tv_loss(&AppearanceFlow::zeros(1, 5)).is_err());
    }

    #[test]
    fn mcw_weighting() {
        assert_eq!(mcw_loss(&McwParts::default(), &LossWeightsMCW::default()), 0.0);
        let unit = McwParts { mask: 1.0, cloth: 1.0, vgg: 1.0, tv: 1.0 };
        assert!((mcw_loss(&unit, &LossWeightsMCW::default()) - 8.6).abs() < 1e-12);
        let p = McwParts { mask: 0.3, cloth: 0.7, vgg: 1.9, tv: 0.01 };
        let w = LossWeightsMCW { mask: 1.0, cloth: 2.0, vgg: 3.0, tv: 4.0 };
        assert_eq!(mcw_loss(&p, &w), 0.3 + 1.4 + 1.9 * 3.0 + 0.04);
        assert!(LossWeightsMCW { tv: -1.0, ..w }.validate().is_err());
    }

    fn uniform_prob(h: usize, w: usize) -> ImageTensor {
        ImageTensor::filled(NUM_CLASSES, h, w, 1.0 / NUM_CLASSES as f64)
    }

    #[test]
    fn cross_entropy_closed_forms() {
        let cw = ClassWeights::default();
        let bg = ParsingMap::uniform(4, 3, BACKGROUND).unwrap();
        let cl = ParsingMap::uniform(4, 3, UPPER_CLOTHES).unwrap();
        let u = uniform_prob(4, 3);
        assert!((weighted_cross_entropy(&u, &bg, &cw).unwrap() - 7f64.ln()).abs() < 1e-12);
        assert!((weighted_cross_entropy(&u, &cl, &cw).unwrap() - 3.0 * 7f64.ln()).abs() < 1e-12);
        let p = ParsingMap::from_fn(4, 3, |y, x| (y * 3 + x) % NUM_CLASSES).unwrap();
        assert!(weighted_cross_entropy(&p.to_one_hot(), &p, &cw).unwrap().abs() < 1e-9);
        let bad = u.map(|v| v * 1.1);
        assert!(matches!(weighted_cross_entropy(&bad, &bg, &cw), Err(Error::Validation(_))));
    }

    #[test]
    fn cross_entropy_permutation_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (h, w) = (5, 4);
        let mut prob = ImageTensor::from_fn(NUM_CLASSES, h, w, |_, _, _| rng.gen_range(0.05..1.0));
        for y in 0..h {
            for x in 0..w {
                let s: f64 = (0..NUM_CLASSES).map(|k| prob.get(k, y, x)).sum();
                for k in 0..NUM_CLASSES {
                    prob.set(k, y, x, prob.get(k, y, x) / s);
                }
            }
        }
        let target = ParsingMap::from_fn(h, w, |_, _| rng.gen_range(0..NUM_CLASSES)).unwrap();
        let cw = ClassWeights([0.5, 1.0, 1.5, 3.0, 2.5, 3.5, 0.7]);
        let perm = [3usize, 6, 0, 5, 1, 4, 2];
        let pprob = ImageTensor::from_fn(NUM_CLASSES, h, w, |k, y, x| prob.get(perm[k], y, x));
        let inv: Vec<usize> = (0..NUM_CLASSES).map(|k| perm.iter().position(|&p| p == k).unwrap()).collect();
        let ptarget = ParsingMap::from_fn(h, w, |y, x| inv[target.label(y, x)]).unwrap();
        let pw = ClassWeights(std::array::from_fn(|k| cw.0[perm[k]]));
        let a = weighted_cross_entropy(&prob, &target, &cw).unwrap();
        let b = weighted_cross_entropy(&pprob, &ptarget, &pw).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn edge_loss_examples() {
        let a = random(6, 3, 8, 8);
        assert_eq!(edge_loss(&a, &a).unwrap(), 0.0);
        assert_eq!(edge_loss(&ImageTensor::filled(1, 6, 6, 0.2), &ImageTensor::filled(1, 6, 6, 0.9)).unwrap(), 0.0);
        // Horizontal ramp: Gx = 8 in the interior columns, 4·1·... at replicate borders.
        let ramp = ImageTensor::from_fn(1, 5, 6, |_, _, x| x as f64);
        let flat = ImageTensor::filled(1, 5, 6, 3.0);
        let s = sobel_gradients(&ramp).unwrap();
        let oracle = s.data().iter().map(|v| v.abs()).sum::<f64>() / s.len() as f64;
        assert!((edge_loss(&ramp, &flat).unwrap() - oracle).abs() < 1e-12);
        assert!((oracle - (4.0 * 8.0 + 2.0 * 4.0) * 5.0 / 60.0).abs() < 1e-12);
    }

    #[test]
    fn composite_is_sum_of_parts_and_linear() {
        let ex = PerceptualExtractor::default();
        let a = random(7, 3, 8, 8);
        let b = random(8, 3, 8, 8);
        let w = LossWeightsLTF::default();
        assert_eq!(composite_image_loss(&a, &a, &ex, &w).unwrap(), 0.0);
        let zero = LossWeightsLTF { img: 0.0, perceptual: 0.0, edge: 0.0 };
        assert_eq!(composite_image_loss(&a, &b, &ex, &zero).unwrap(), 0.0);
        let parts = [
            l1_mean(&a, &b).unwrap(),
            perceptual_loss(&a, &b, &ex, &DEFAULT_LEVEL_WEIGHTS).unwrap(),
            edge_loss(&a, &b).unwrap(),
        ];
        let v = composite_image_loss(&a, &b, &ex, &w).unwrap();
        assert!((v - (parts[0] + 2.0 * parts[1] + 0.1 * parts[2])).abs() < 1e-12);
        let w2 = LossWeightsLTF { img: 3.0, perceptual: 0.5, edge: 1.0 };
        let sum = LossWeightsLTF { img: w.img + w2.img, perceptual: w.perceptual + w2.perceptual, edge: w.edge + w2.edge };
        let lhs = composite_image_loss(&a, &b, &ex, &sum).unwrap();
        let rhs = v + composite_image_loss(&a, &b, &ex, &w2).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
        let l = ltf_loss(&a, &b, &b, &ex, &w).unwrap();
        assert!((l - composite_image_loss(&a, &b, &ex, &w).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn cloth_gradient_is_sign_over_count() {
        let gt = random(10, 3, 4, 5);
        let cw = gt.map(|v| v + 0.3);
        let loss = DifferentiableLoss::Cloth { other: &gt };
        let g = loss_gradient(&loss, LossSlot::Prediction, &cw).unwrap();
        assert!(g.data().iter().all(|&v| (v - 1.0 / 60.0).abs() < 1e-15));
        let gt_side = loss_gradient(&loss, LossSlot::Target, &cw).unwrap();
        assert!(gt_side.data().iter().all(|&v| (v - 1.0 / 60.0).abs() < 1e-15));
    }

    #[test]
    fn unsupported_slots() {
        let m = BinaryMask::ones(4, 4);
        let t = ImageTensor::zeros(1, 4, 4);
        for loss in [DifferentiableLoss::Mask { target: &m }, DifferentiableLoss::Tv] {
            assert!(matches!(loss.gradient(LossSlot::Target, &t), Err(Error::Parameter(_))));
        }
    }

    #[test]
    fn ce_gradient_closed_form() {
        let target = ParsingMap::from_fn(3, 4, |y, x| (y + 2 * x) % NUM_CLASSES).unwrap();
        let prob = uniform_prob(3, 4).map(|v| v + 0.01);
        let cw = ClassWeights::default();
        let g = DifferentiableLoss::CrossEntropy { target: &target, weights: cw }.gradient(LossSlot::Prediction, &prob).unwrap();
        for k in 0..NUM_CLASSES {
            for y in 0..3 {
                for x in 0..4 {
                    let expected = if target.label(y, x) == k { -cw.0[k] / (prob.get(k, y, x) * 12.0) } else { 0.0 };
                    assert_eq!(g.get(k, y, x), expected);
                }
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let ex = PerceptualExtractor::default();
        let a = random(11, 3, 8, 8);
        let b = offset(&a, 12);
        let flow = random(13, 2, 8, 8).scale(3.0);
        let mask = BinaryMask::from_fn(8, 8, |y, x| y > x);
        let soft = offset(&mask.to_tensor(), 14).clamp01().map(|v| v.clamp(0.05, 0.95));
        let target = ParsingMap::from_fn(8, 8, |y, x| (y * x) % NUM_CLASSES).unwrap();
        let prob = random(15, NUM_CLASSES, 8, 8).map(|v| 0.05 + v);
        let cases = [
            (DifferentiableLoss::Mask { target: &mask }, soft, LossSlot::Prediction),
            (DifferentiableLoss::Cloth { other: &a }, b.clone(), LossSlot::Prediction),
            (
                DifferentiableLoss::Perceptual { other: &a, extractor: &ex, level_weights: DEFAULT_LEVEL_WEIGHTS },
                b.clone(),
                LossSlot::Target,
            ),
            (DifferentiableLoss::Tv, flow, LossSlot::Prediction),
            (DifferentiableLoss::CrossEntropy { target: &target, weights: ClassWeights::default() }, prob, LossSlot::Prediction),
            (DifferentiableLoss::Edge { other: &a }, b.clone(), LossSlot::Prediction),
            (
                DifferentiableLoss::Composite { other: &a, extractor: &ex, weights: LossWeightsLTF::default() },
                b.clone(),
                LossSlot::Prediction,
            ),
        ];
        for (loss, point, slot) in &cases {
            let r = gradient_check(loss, *slot, point, 25, 1e-4, 99).unwrap();
            assert_eq!(r.checked, 25, "{}: too many kinks", r.loss);
            assert!(r.max_relative_error <= 1e-4, "{}: {}", r.loss, r.max_relative_error);
        }
    }

    fn stats(mean: &[f64], cov: &[f64]) -> GaussianStats {
        let d = mean.len();
        GaussianStats::new(DVector::from_column_slice(mean), DMatrix::from_row_slice(d, d, cov)).unwrap()
    }

    #[test]
    fn frechet_examples() {
        let s = stats(&[0.5, -1.0, 2.0], &[2.0, 0.3, 0.1, 0.3, 1.0, -0.2, 0.1, -0.2, 0.5]);
        assert!(frechet_distance(&s, &s).unwrap().abs() < 1e-8);
        let i1 = stats(&[0.0, 0.0], &[1.0, 0.0, 0.0, 1.0]);
        let i2 = stats(&[1.0, -2.0], &[1.0, 0.0, 0.0, 1.0]);
        assert!((frechet_distance(&i1, &i2).unwrap() - 5.0).abs() < 1e-12);
        let d4 = stats(&[0.0], &[4.0]);
        let d1 = stats(&[0.0], &[1.0]);
        assert!((frechet_distance(&d4, &d1).unwrap() - 1.0).abs() < 1e-8);
        let t = stats(&[1.0, 0.0, 0.0], &[1.0, -0.4, 0.0, -0.4, 2.0, 0.3, 0.0, 0.3, 0.8]);
        let (ab, ba) = (frechet_distance(&s, &t).unwrap(), frechet_distance(&t, &s).unwrap());
        assert!((ab - ba).abs() < 1e-8);
        assert!(ab > 0.0);
        assert!(frechet_distance(&s, &d1).is_err());
    }

    #[test]
    fn stats_validation_and_estimation() {
        assert!(GaussianStats::new(DVector::zeros(2), DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0])).is_err());
        assert!(GaussianStats::new(DVector::zeros(2), DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0])).is_err());
        let samples = vec![vec![1.0, 2.0], vec![3.0, 2.0], vec![2.0, 5.0]];
        let s = GaussianStats::from_samples(&samples).unwrap();
        assert_eq!(s.mean().as_slice(), &[2.0, 3.0]);
        // Column deviations: (-1, 1, 0) and (-1, -1, 2).
        assert!((s.cov()[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((s.cov()[(1, 1)] - 3.0).abs() < 1e-12);
        assert!((s.cov()[(0, 1)] - 0.0).abs() < 1e-12);
        assert!(GaussianStats::from_samples(&samples[..1]).is_err());
    }
}
