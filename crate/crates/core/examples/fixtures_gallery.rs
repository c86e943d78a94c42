//! Synthetic sample directories in the layout the CLI reads, then read back.
//!
//!     cargo run --example fixtures_gallery -- [OUT_DIR] [COUNT]

use std::path::PathBuf;

use toytryon::fixtures::{read_sample_dir, Fixture};

fn main() -> toytryon::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let out = args.first().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("toytryon-fixtures"));
    let count: u64 = args.get(1).and_then(|c| c.parse().ok()).unwrap_or(4);
    for seed in 0..count {
        let dir = out.join(format!("sample_{seed:03}"));
        std::fs::create_dir_all(&dir)?;
        let f = Fixture::generate(seed, 128, 96)?;
        f.write_dir(&dir)?;
        let back = read_sample_dir(&dir)?;
        println!(
            "{}: {} keypoints, garment {} px, round trip parsing equal: {}",
            dir.display(),
            f.keypoints.len(),
            f.cloth_mask.count(),
            back.parsing == f.parsing
        );
    }
    Ok(())
}
