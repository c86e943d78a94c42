//! The full toy pipeline on a synthetic sample: every intermediate is saved,
//! and the training losses are reported. Pass `train` to blur the coarse
//! result on the arms before fusion.
//!
//!     cargo run --example try_on -- [OUT_DIR] [train]

use std::path::PathBuf;
use std::time::Instant;

use toytryon::fixtures::Fixture;
use toytryon::flow::write_flow;
use toytryon::io::{write_mask_png, write_parsing_png, write_rgb_png};
use toytryon::{Mode, PipelineConfig, TryOnModel};

fn main() -> toytryon::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let out = args.first().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("toytryon-tryon"));
    let mode = if args.iter().any(|a| a == "train") { Mode::Train } else { Mode::Eval };
    std::fs::create_dir_all(&out)?;

    let inputs = Fixture::generate(0, 96, 64)?.inputs()?;
    let model = TryOnModel::new(PipelineConfig { mode, ..PipelineConfig::toy() })?;
    let t = Instant::now();
    let b = model.run_pipeline(&inputs)?;
    println!("pipeline ({mode:?}) took {:.0} ms", t.elapsed().as_secs_f64() * 1e3);
    b.check_invariants()?;

    write_rgb_png(&b.inputs.person, &out.join("I.png"))?;
    write_rgb_png(&b.inputs.cloth, &out.join("C.png"))?;
    write_rgb_png(&b.scaled, &out.join("C_s.png"))?;
    write_rgb_png(&b.warped, &out.join("C_w.png"))?;
    write_mask_png(&b.warped_mask, &out.join("M_w.png"))?;
    write_rgb_png(&b.person_masked, &out.join("I_a.png"))?;
    write_parsing_png(&b.parsing_target, &out.join("P_t.png"))?;
    write_rgb_png(&b.coarse, &out.join("I_c.png"))?;
    write_rgb_png(&b.fine, &out.join("I_f.png"))?;
    write_flow(&b.flow, &out.join("flow.plvf"))?;

    for (name, v) in model.training_losses(&b)? {
        println!("{name:>6}: {v:.5}");
    }
    println!("wrote {}", out.display());
    Ok(())
}
