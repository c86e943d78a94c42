//! Garment pre-alignment on a batch of synthetic people: centring on the
//! torso, then scaling to the worn clothing height.
//!
//!     cargo run --example prealign_garment -- [OUT_DIR]

use std::path::PathBuf;

use toytryon::fixtures::Fixture;
use toytryon::io::{write_mask_png, write_rgb_png};
use toytryon::person::UPPER_CLOTHES;
use toytryon::prealign::{circumscribed_rect, prealign, rect_center};

fn main() -> toytryon::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("toytryon-prealign"));
    std::fs::create_dir_all(&out)?;
    println!("seed  target centre   garment centre  target h  garment h");
    for seed in 0..6 {
        let f = Fixture::generate(seed, 128, 96)?;
        let r = prealign(&f.cloth, &f.cloth_mask, &f.parsing)?;
        let target = circumscribed_rect(&f.parsing.class_mask(&[UPPER_CLOTHES])?)?;
        let got = circumscribed_rect(&r.scaled_mask)?;
        let (tc, gc) = (rect_center(&target), rect_center(&got));
        println!(
            "{seed:>4}  ({:>5.1}, {:>5.1})  ({:>5.1}, {:>5.1})  {:>8}  {:>9}",
            tc.0, tc.1, gc.0, gc.1, target.height(), got.height()
        );
        write_rgb_png(&r.shifted, &out.join(format!("{seed}_C_l.png")))?;
        write_rgb_png(&r.scaled, &out.join(format!("{seed}_C_s.png")))?;
        write_mask_png(&r.scaled_mask, &out.join(format!("{seed}_C_s_mask.png")))?;
    }
    println!("wrote {}", out.display());
    Ok(())
}
