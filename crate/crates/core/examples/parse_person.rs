//! Target parsing estimation: softmax probabilities, the argmax map written
//! as an indexed PNG, and its weighted cross-entropy against the source map.
//!
//!     cargo run --example parse_person -- [OUT_DIR]

use std::path::PathBuf;

use toytryon::fixtures::Fixture;
use toytryon::io::write_parsing_png;
use toytryon::losses::{weighted_cross_entropy, ClassWeights};
use toytryon::person::{apply_agnostic_mask, build_agnostic_mask, NUM_CLASSES};
use toytryon::{PipelineConfig, TryOnModel};

fn main() -> toytryon::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("toytryon-parse"));
    std::fs::create_dir_all(&out)?;
    let inputs = Fixture::generate(4, 96, 64)?.inputs()?;
    let model = TryOnModel::new(PipelineConfig::toy())?;

    let agnostic = build_agnostic_mask(&inputs.parsing)?;
    let (person_masked, parsing_masked) = apply_agnostic_mask(&inputs.person, &inputs.parsing, &agnostic)?;
    let mcw = model.run_mcw(&inputs.cloth, &inputs.cloth_mask, &inputs.keypoints, &inputs.parsing)?;
    let hpe = model.run_hpe(&mcw.warped, &inputs.keypoints, &parsing_masked, &person_masked)?;

    let mut counts = [0usize; NUM_CLASSES];
    for &l in hpe.parsing.labels() {
        counts[l as usize] += 1;
    }
    println!("predicted class histogram: {counts:?}");
    let ce = weighted_cross_entropy(&hpe.prob, &inputs.parsing, &ClassWeights::default())?;
    println!("untrained cross-entropy vs source parsing: {ce:.4} (uniform guess: {:.4})", (NUM_CLASSES as f64).ln());
    write_parsing_png(&hpe.parsing, &out.join("P_t.png"))?;
    write_parsing_png(&inputs.parsing, &out.join("P_s.png"))?;
    println!("wrote {}", out.display());
    Ok(())
}
