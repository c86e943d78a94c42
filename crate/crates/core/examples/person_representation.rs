//! Person representation: the clothing-agnostic mask, the masked inputs,
//! the limb texture map, its patches and the keypoint heatmaps.
//!
//!     cargo run --example person_representation -- [OUT_DIR]

use std::path::PathBuf;

use toytryon::fixtures::Fixture;
use toytryon::io::{write_mask_png, write_parsing_png, write_rgb_png};
use toytryon::ImageTensor;
use toytryon::person::{apply_agnostic_mask, build_agnostic_mask, extract_limb_map, limb_patches, ARMS};

fn main() -> toytryon::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("toytryon-person"));
    std::fs::create_dir_all(&out)?;
    let f = Fixture::generate(2, 128, 96)?;

    let agnostic = build_agnostic_mask(&f.parsing)?;
    let (person_masked, parsing_masked) = apply_agnostic_mask(&f.person, &f.parsing, &agnostic)?;
    let limb = extract_limb_map(&f.parsing, &f.person)?;
    let patches = limb_patches(&limb, 4)?;
    let keypoints = f.keypoint_map()?;

    println!("agnostic pixels: {} of {}", agnostic.count(), 128 * 96);
    println!("arm pixels: {}", f.parsing.class_mask(&ARMS)?.count());
    println!("limb patches: {:?} channels x {}x{}", patches.channels(), patches.height(), patches.width());
    println!("keypoint heatmaps: {} channels", keypoints.tensor().channels());

    write_mask_png(&agnostic, &out.join("agnostic.png"))?;
    write_rgb_png(&person_masked, &out.join("person_masked.png"))?;
    write_parsing_png(&parsing_masked, &out.join("parsing_masked.png"))?;
    write_rgb_png(limb.tensor(), &out.join("limb.png"))?;
    let k = keypoints.tensor();
    let heat = ImageTensor::from_fn(3, k.height(), k.width(), |_, y, x| k.pixel(y, x).into_iter().fold(0.0, f64::max));
    write_rgb_png(&heat, &out.join("keypoints.png"))?;
    println!("wrote {}", out.display());
    Ok(())
}
