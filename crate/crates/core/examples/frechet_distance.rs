//! Fréchet distance between Gaussian feature statistics, as used for FID,
//! on toy perceptual features of shifted image batches.
//!
//!     cargo run --example frechet_distance

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use toytryon::losses::{frechet_distance, GaussianStats};
use toytryon::nn::PerceptualExtractor;
use toytryon::ImageTensor;

/// Spatially pooled deepest features of each image.
fn pooled(ex: &PerceptualExtractor, images: &[ImageTensor]) -> toytryon::Result<Vec<Vec<f64>>> {
    images
        .iter()
        .map(|img| {
            let feats = ex.features(img)?;
            let deep = feats.last().expect("five levels");
            Ok((0..deep.channels()).map(|c| deep.channel(c).mean()).collect())
        })
        .collect()
}

fn main() -> toytryon::Result<()> {
    let a = GaussianStats::new(DVector::from_element(1, 0.0), DMatrix::from_element(1, 1, 4.0))?;
    let b = GaussianStats::new(DVector::from_element(1, 0.0), DMatrix::from_element(1, 1, 1.0))?;
    println!("N(0,4) vs N(0,1): {:.6}", frechet_distance(&a, &b)?);

    let ex = PerceptualExtractor::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let batch = |rng: &mut ChaCha8Rng, brightness: f64| -> Vec<ImageTensor> {
        (0..64).map(|_| ImageTensor::from_fn(3, 32, 32, |_, _, _| (brightness + 0.2 * rng.gen::<f64>()).min(1.0))).collect()
    };
    let reference = GaussianStats::from_samples(&pooled(&ex, &batch(&mut rng, 0.4))?)?;
    for brightness in [0.4, 0.45, 0.5, 0.6] {
        let other = GaussianStats::from_samples(&pooled(&ex, &batch(&mut rng, brightness))?)?;
        println!("brightness {brightness:.2}: distance {:.6}", frechet_distance(&reference, &other)?);
    }
    Ok(())
}
