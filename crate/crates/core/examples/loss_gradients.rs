//! Every training loss with its analytic gradient, checked against central
//! finite differences at random coordinates.
//!
//!     cargo run --example loss_gradients

use toytryon::losses::{
    gradient_check, ClassWeights, DifferentiableLoss, LossSlot, LossWeightsLTF, DEFAULT_LEVEL_WEIGHTS,
};
use toytryon::nn::PerceptualExtractor;
use toytryon::person::NUM_CLASSES;
use toytryon::{BinaryMask, ImageTensor, ParsingMap};

fn main() -> toytryon::Result<()> {
    let (h, w) = (8, 8);
    let wave = |c: usize, y: usize, x: usize, phase: f64| 0.5 + 0.4 * (0.9 * x as f64 + 0.7 * y as f64 + 1.3 * c as f64 + phase).sin();
    let a = ImageTensor::from_fn(3, h, w, |c, y, x| wave(c, y, x, 0.0));
    let b = ImageTensor::from_fn(3, h, w, |c, y, x| wave(c, y, x, 2.0));
    let mask = BinaryMask::from_fn(h, w, |y, x| (y + x) % 3 != 0);
    let soft = ImageTensor::from_fn(1, h, w, |_, y, x| 0.3 + 0.05 * ((y * w + x) % 9) as f64);
    let flow = ImageTensor::from_fn(2, h, w, |c, y, x| wave(c, y, x, 1.0) * 4.0 - 2.0);
    let labels = ParsingMap::from_fn(h, w, |y, x| (y * 3 + x) % NUM_CLASSES)?;
    let prob = ImageTensor::from_fn(NUM_CLASSES, h, w, |c, y, x| 0.2 + wave(c, y, x, 0.5));
    let ex = PerceptualExtractor::default();

    let cases: Vec<(DifferentiableLoss<'_>, &ImageTensor)> = vec![
        (DifferentiableLoss::Mask { target: &mask }, &soft),
        (DifferentiableLoss::Cloth { other: &b }, &a),
        (DifferentiableLoss::Perceptual { other: &b, extractor: &ex, level_weights: DEFAULT_LEVEL_WEIGHTS }, &a),
        (DifferentiableLoss::Tv, &flow),
        (DifferentiableLoss::CrossEntropy { target: &labels, weights: ClassWeights::default() }, &prob),
        (DifferentiableLoss::Edge { other: &b }, &a),
        (DifferentiableLoss::Composite { other: &b, extractor: &ex, weights: LossWeightsLTF::default() }, &a),
    ];
    println!("{:<14} {:>10} {:>8} {:>8} {:>10}", "loss", "value", "checked", "skipped", "max rel");
    for (loss, point) in &cases {
        let r = gradient_check(loss, LossSlot::Prediction, point, 50, 1e-4, 7)?;
        let v = loss.value(LossSlot::Prediction, point)?;
        println!("{:<14} {:>10.5} {:>8} {:>8} {:>10.2e}", r.loss, v, r.checked, r.skipped, r.max_relative_error);
    }
    Ok(())
}
