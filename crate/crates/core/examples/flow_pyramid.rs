//! Multi-scale flow aggregation with the convolutional GRU: pyramid sizes,
//! the two gating limits and a seeded cell.
//!
//!     cargo run --example flow_pyramid

use toytryon::flow::{aggregate_flows, FlowPyramid, PyramidMode};
use toytryon::nn::{Activation, ConvGRUCell, GatingLimit};
use toytryon::{AppearanceFlow, ImageTensor};

fn main() -> toytryon::Result<()> {
    let (h, w) = (96, 64);
    for mode in [PyramidMode::Literal, PyramidMode::Pow2] {
        println!("{mode:?} level sizes: {:?}", mode.level_sizes(h, w));
    }

    // Level k holds a constant flow of k pixels to the right.
    let levels = PyramidMode::Literal
        .level_sizes(h, w)
        .into_iter()
        .zip(1..)
        .map(|((lh, lw), k)| AppearanceFlow::constant(lh, lw, k as f64, 0.0))
        .collect();
    let pyramid = FlowPyramid::new(levels, PyramidMode::Literal, h, w)?;

    let report = |name: &str, cell: &ConvGRUCell| -> toytryon::Result<()> {
        let f = aggregate_flows(&pyramid, cell)?;
        let mean = f.tensor().channel(0).mean();
        println!("{name:>10}: mean dx {mean:.4}, mean dy {:.4}", f.tensor().channel(1).mean());
        Ok(())
    };
    report("update-all", &ConvGRUCell::gating_limit(GatingLimit::UpdateAll, 2, 8)?)?;
    report("freeze", &ConvGRUCell::gating_limit(GatingLimit::Freeze, 2, 8)?)?;
    let seeded = ConvGRUCell::seeded(3, 2, 8, Activation::ScaledTanh(0.1 * h as f64));
    report("seeded", &seeded)?;

    // One raw step on a random-looking input.
    let x = ImageTensor::from_fn(2, 12, 8, |c, y, x| ((c + 3 * y + 5 * x) % 7) as f64 - 3.0);
    let h1 = seeded.step(&ImageTensor::zeros(2, 12, 8), &x)?;
    println!("single step from zero state: |h| max {:.4}", h1.map(f64::abs).max());
    Ok(())
}
