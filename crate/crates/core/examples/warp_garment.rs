//! Backward warping with a hand-made appearance flow: a rigid shift and a
//! horizontal squeeze, plus the PLVF round trip.
//!
//!     cargo run --example warp_garment -- [OUT_DIR]

use std::path::PathBuf;

use toytryon::fixtures::Fixture;
use toytryon::flow::{read_flow, warp_mask, warp_with_flow, write_flow};
use toytryon::io::{write_mask_png, write_rgb_png};
use toytryon::{AppearanceFlow, ImageTensor};

fn main() -> toytryon::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("toytryon-warp"));
    std::fs::create_dir_all(&out)?;
    let f = Fixture::generate(1, 96, 64)?;
    let (h, w) = (96, 64);

    // out(y, x) = src(y + dy, x + dx): a positive dx moves the content left.
    let shift = AppearanceFlow::constant(h, w, 6.0, -4.0);
    let squeeze = AppearanceFlow::new(ImageTensor::from_fn(2, h, w, |c, _, x| {
        if c == 0 { 0.3 * (x as f64 - w as f64 / 2.0) } else { 0.0 }
    }))?;

    for (name, flow) in [("shift", &shift), ("squeeze", &squeeze)] {
        let warped = warp_with_flow(&f.cloth, flow)?;
        let mask = warp_mask(&f.cloth_mask, flow)?;
        write_rgb_png(&warped, &out.join(format!("{name}.png")))?;
        write_mask_png(&mask, &out.join(format!("{name}_mask.png")))?;
        println!("{name}: mask area {} -> {}", f.cloth_mask.count(), mask.count());
    }

    let path = out.join("squeeze.plvf");
    write_flow(&squeeze, &path)?;
    let back = read_flow(&path)?;
    // PLVF stores f32, so the round trip is exact only to single precision.
    println!("plvf round trip max error {:.2e}", back.tensor().max_abs_diff(squeeze.tensor())?);
    println!("wrote {}", out.display());
    Ok(())
}
