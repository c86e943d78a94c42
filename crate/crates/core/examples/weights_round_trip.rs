//! Seeded weight initialisation and the PLVW dump format: equal seeds give
//! equal dumps, and a loaded dump reproduces the seeded model to f32 precision.
//!
//!     cargo run --example weights_round_trip -- [OUT_DIR]

use std::path::PathBuf;

use toytryon::fixtures::Fixture;
use toytryon::nn::{dump_weights, read_weights, write_weights, Parameters};
use toytryon::{PipelineConfig, TryOnModel};

fn main() -> toytryon::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("toytryon-weights"));
    std::fs::create_dir_all(&out)?;
    let cfg = |seed| PipelineConfig { seed, ..PipelineConfig::toy() };

    let a = TryOnModel::new(cfg(1))?;
    let same = TryOnModel::new(cfg(1))?;
    let other = TryOnModel::new(cfg(2))?;
    println!("parameters: {}", a.parameter_count());
    println!("seed 1 == seed 1: {}", dump_weights(&a, "") == dump_weights(&same, ""));
    println!("seed 1 == seed 2: {}", dump_weights(&a, "") == dump_weights(&other, ""));

    let path = out.join("model.plvw");
    write_weights(&a, "", &path)?;
    let mut loaded = TryOnModel::new(cfg(2))?;
    read_weights(&mut loaded, "", &path)?;

    let inputs = Fixture::generate(0, 96, 64)?.inputs()?;
    let x = a.run_pipeline(&inputs)?;
    let y = loaded.run_pipeline(&inputs)?;
    // Dumps hold f32, so the loaded model matches to single precision and
    // dumping it again gives the same bytes.
    println!("I_f max difference after loading: {:.2e}", x.fine.max_abs_diff(&y.fine)?);
    println!("re-dump byte-identical: {}", dump_weights(&loaded, "") == std::fs::read(&path)?);
    println!("wrote {} ({} bytes)", path.display(), std::fs::metadata(&path)?.len());
    Ok(())
}
