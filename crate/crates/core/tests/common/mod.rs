#![allow(dead_code)]

pub mod golden_values;

use toytryon::fixtures::Fixture;
use toytryon::flow::{AppearanceFlow, FlowPyramid, PyramidMode};
use toytryon::nn::{Activation, ConvGRUCell, EncoderDecoder, EncoderDecoderConfig, PerceptualExtractor};
use toytryon::pipeline::{PipelineConfig, TryOnBundle, TryOnModel};
use toytryon::ImageTensor;

/// Number of evenly spaced elements sampled into a digest.
pub const DIGEST_SAMPLES: usize = 16;

/// Mean followed by `DIGEST_SAMPLES` evenly spaced elements.
pub fn digest(t: &ImageTensor) -> Vec<f64> {
    let d = t.data();
    let mut out = vec![t.mean()];
    out.extend((0..DIGEST_SAMPLES).map(|i| d[i * (d.len() - 1) / (DIGEST_SAMPLES - 1)]));
    out
}

pub fn max_drift(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Smooth deterministic test signal.
pub fn wave(c: usize, h: usize, w: usize, phase: f64) -> ImageTensor {
    ImageTensor::from_fn(c, h, w, |ch, y, x| {
        0.5 + 0.4 * ((0.37 * x as f64 + 0.23 * y as f64 + 1.7 * ch as f64 + phase).sin())
    })
}

pub fn golden_bundle() -> TryOnBundle {
    let inputs = Fixture::generate(0, 96, 64).unwrap().inputs().unwrap();
    TryOnModel::new(PipelineConfig::toy()).unwrap().run_pipeline(&inputs).unwrap()
}

/// Named tensors whose digests are frozen.
pub fn golden_tensors() -> Vec<(&'static str, ImageTensor)> {
    let net = EncoderDecoder::seeded(7, EncoderDecoderConfig::new(5, 3).with_squeeze_excite());
    let encdec = net.forward(&wave(5, 32, 64, 0.0)).unwrap();
    let feats = PerceptualExtractor::default().features(&wave(3, 24, 20, 1.0)).unwrap();
    let cell = ConvGRUCell::seeded(11, 2, 8, Activation::Tanh);
    let gru = cell.step(&wave(2, 9, 7, 2.0), &wave(2, 9, 7, 3.0)).unwrap();
    let levels = PyramidMode::Literal
        .level_sizes(30, 20)
        .into_iter()
        .enumerate()
        .map(|(k, (h, w))| AppearanceFlow::new(wave(2, h, w, k as f64).map(|v| 4.0 * v - 2.0)).unwrap())
        .collect();
    let pyramid = FlowPyramid::new(levels, PyramidMode::Literal, 30, 20).unwrap();
    let merged = toytryon::flow::aggregate_flows(&pyramid, &cell).unwrap();
    let b = golden_bundle();
    vec![
        ("encdec", encdec),
        ("perceptual_0", feats[0].clone()),
        ("perceptual_4", feats[4].clone()),
        ("gru_step", gru),
        ("aggregate", merged.into_tensor()),
        ("bundle_flow", b.flow.into_tensor()),
        ("bundle_warped", b.warped),
        ("bundle_parsing_prob", b.parsing_prob),
        ("bundle_coarse", b.coarse),
        ("bundle_fine", b.fine),
    ]
}
