//! The `toytryon` command line. Every command computes all of its outputs in
//! memory first and only then writes them, each through an atomic rename.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fixtures::{read_sample_dir, Fixture};
use crate::flow::{encode_flow, read_flow};
use crate::io::{self, encode_mask_png, encode_parsing_png, encode_rgb_png, write_atomic};
use crate::losses::{
    composite_image_loss, edge_loss, mask_loss, mcw_loss, perceptual_loss, tv_loss, weighted_cross_entropy,
    LossReport, McwParts,
};
use crate::nn::params::{dump_weights, read_weights};
use crate::pipeline::{Mode, PipelineConfig, TryOnInputs, TryOnModel};
use crate::prealign::prealign;

#[derive(Debug, Parser)]
#[command(name = "toytryon", version, about = "Toy-scale garment warping and virtual try-on")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON file with pipeline settings [default: built-in defaults at the input size]
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed for every network [default: 42, or the config's]
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// train blurs the coarse result on the arms before fusion [default: eval]
    #[arg(long, global = true)]
    pub mode: Option<Mode>,
    /// Output directory, created if missing
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads when several samples are given [default: all cores]
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// PLVW weight dump to load instead of the seeded weights
    #[arg(long, global = true)]
    pub weights: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Sample directory holding cloth.png, cloth_mask.png, person.png,
    /// parsing.png and keypoints.json; repeatable
    #[arg(long = "sample", required = true)]
    pub samples: Vec<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pre-align the garment: writes C_l.png, C_s.png, C_s_mask.png
    Prealign(SampleArgs),
    /// Warp the garment: writes flow.plvf, C_s.png, C_w.png, M_w.png
    Warp {
        #[command(flatten)]
        samples: SampleArgs,
        /// Force every predicted flow to zero
        #[arg(long)]
        zero_flow: bool,
    },
    /// Predict the target parsing map: writes P_t.png (indexed)
    Parse(SampleArgs),
    /// Full try-on: writes I_c.png, I_f.png, C_w.png, P_t.png, flow.plvf
    Tryon(SampleArgs),
    /// Loss report between a prediction and a target
    Losses(LossArgs),
    /// Write synthetic sample directories sample_000, sample_001, ...
    Fixtures {
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 96)]
        height: usize,
        #[arg(long, default_value_t = 64)]
        width: usize,
    },
    /// Dump the seeded weights of every network to model.plvw
    Weights,
}

#[derive(Debug, Args)]
pub struct LossArgs {
    /// Predicted RGB image
    #[arg(long)]
    pub pred: PathBuf,
    /// Target RGB image
    #[arg(long)]
    pub target: PathBuf,
    /// Predicted (warped) mask; needs --target-mask
    #[arg(long, requires = "target_mask")]
    pub pred_mask: Option<PathBuf>,
    #[arg(long, requires = "pred_mask")]
    pub target_mask: Option<PathBuf>,
    /// Predicted parsing map, scored as one-hot probabilities; needs --target-parsing
    #[arg(long, requires = "target_parsing")]
    pub pred_parsing: Option<PathBuf>,
    #[arg(long, requires = "pred_parsing")]
    pub target_parsing: Option<PathBuf>,
    /// Appearance flow (.plvf) for the smoothness term
    #[arg(long)]
    pub flow: Option<PathBuf>,
}

/// Written as `manifest.json` next to every command's outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: PipelineConfig,
    pub seed: u64,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    /// Wall-clock milliseconds per stage, summed over samples.
    pub stage_ms: BTreeMap<String, f64>,
    pub losses: BTreeMap<String, LossReport>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Files to write, relative to the output directory.
#[derive(Default)]
struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
    stage_ms: BTreeMap<String, f64>,
    losses: BTreeMap<String, LossReport>,
}

impl Outputs {
    fn push(&mut self, rel: PathBuf, bytes: Vec<u8>) {
        self.files.push((rel, bytes));
    }

    fn time(&mut self, stage: &str, start: Instant) {
        *self.stage_ms.entry(stage.to_string()).or_default() += start.elapsed().as_secs_f64() * 1e3;
    }

    fn merge(&mut self, other: Outputs) {
        self.files.extend(other.files);
        for (k, v) in other.stage_ms {
            *self.stage_ms.entry(k).or_default() += v;
        }
        self.losses.extend(other.losses);
    }
}

/// Exit status for an error: 2 for violated internal invariants, else 1.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Structure(_) => 2,
        _ => 1,
    }
}

/// `{"error": code, "message": text}`.
pub fn error_json(code: &str, message: &str) -> String {
    serde_json::json!({ "error": code, "message": message }).to_string()
}

fn resolve_config(common: &CommonArgs, size: Option<(usize, usize)>) -> Result<PipelineConfig> {
    let mut cfg = match &common.config {
        Some(path) => PipelineConfig::from_json(&String::from_utf8_lossy(&std::fs::read(path)?))?,
        None => {
            let mut c = PipelineConfig::default();
            if let Some((h, w)) = size {
                (c.height, c.width) = (h, w);
            }
            c
        }
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = common.mode {
        cfg.mode = mode;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn build_model(common: &CommonArgs, cfg: PipelineConfig) -> Result<TryOnModel> {
    let mut model = TryOnModel::new(cfg)?;
    if let Some(path) = &common.weights {
        read_weights(&mut model, "", path)?;
    }
    Ok(model)
}

/// Output subdirectory per sample: none for a single sample.
fn sample_dirs(samples: &[PathBuf]) -> Vec<PathBuf> {
    if samples.len() == 1 {
        return vec![PathBuf::new()];
    }
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let name = s.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            PathBuf::from(format!("{i:03}_{name}"))
        })
        .collect()
}

fn run_samples(
    common: &CommonArgs,
    samples: &[PathBuf],
    cfg_override: impl Fn(&mut PipelineConfig),
    per_sample: impl Fn(&TryOnModel, &TryOnInputs, &Path) -> Result<Outputs> + Sync,
) -> Result<(PipelineConfig, Outputs)> {
    let loaded: Vec<TryOnInputs> = samples.iter().map(|s| read_sample_dir(s)).collect::<Result<_>>()?;
    let mut cfg = resolve_config(common, Some(loaded[0].size()))?;
    cfg_override(&mut cfg);
    let model = build_model(common, cfg.clone())?;
    let dirs = sample_dirs(samples);
    let work = || -> Result<Vec<Outputs>> {
        loaded.par_iter().zip(&dirs).map(|(inputs, dir)| per_sample(&model, inputs, dir)).collect()
    };
    let results = match common.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::param(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    let mut all = Outputs::default();
    for r in results {
        all.merge(r);
    }
    Ok((cfg, all))
}

fn png_rgb(t: &crate::tensor::ImageTensor) -> Result<Vec<u8>> {
    encode_rgb_png(t)
}

fn cmd_prealign(model: &TryOnModel, inputs: &TryOnInputs, dir: &Path) -> Result<Outputs> {
    let mut out = Outputs::default();
    model.check_size(inputs)?;
    let t = Instant::now();
    let r = prealign(&inputs.cloth, &inputs.cloth_mask, &inputs.parsing)?;
    out.time("prealign", t);
    out.push(dir.join("C_l.png"), png_rgb(&r.shifted)?);
    out.push(dir.join("C_s.png"), png_rgb(&r.scaled)?);
    out.push(dir.join("C_s_mask.png"), encode_mask_png(&r.scaled_mask)?);
    Ok(out)
}

fn cmd_warp(model: &TryOnModel, inputs: &TryOnInputs, dir: &Path) -> Result<Outputs> {
    let mut out = Outputs::default();
    model.check_size(inputs)?;
    let t = Instant::now();
    let r = model.run_mcw(&inputs.cloth, &inputs.cloth_mask, &inputs.keypoints, &inputs.parsing)?;
    out.time("mcw", t);
    out.push(dir.join("flow.plvf"), encode_flow(&r.flow));
    out.push(dir.join("C_s.png"), png_rgb(&r.prealigned.scaled)?);
    out.push(dir.join("C_w.png"), png_rgb(&r.warped)?);
    out.push(dir.join("M_w.png"), encode_mask_png(&r.warped_mask)?);
    Ok(out)
}

fn cmd_parse(model: &TryOnModel, inputs: &TryOnInputs, dir: &Path) -> Result<Outputs> {
    let mut out = Outputs::default();
    model.check_size(inputs)?;
    let agnostic = crate::person::build_agnostic_mask(&inputs.parsing)?;
    let (person_masked, parsing_masked) = crate::person::apply_agnostic_mask(&inputs.person, &inputs.parsing, &agnostic)?;
    let t = Instant::now();
    let mcw = model.run_mcw(&inputs.cloth, &inputs.cloth_mask, &inputs.keypoints, &inputs.parsing)?;
    out.time("mcw", t);
    let t = Instant::now();
    let hpe = model.run_hpe(&mcw.warped, &inputs.keypoints, &parsing_masked, &person_masked)?;
    out.time("hpe", t);
    out.push(dir.join("P_t.png"), encode_parsing_png(&hpe.parsing)?);
    Ok(out)
}

fn cmd_tryon(model: &TryOnModel, inputs: &TryOnInputs, dir: &Path) -> Result<Outputs> {
    let mut out = Outputs::default();
    let t = Instant::now();
    let bundle = model.run_pipeline(inputs)?;
    out.time("pipeline", t);
    let t = Instant::now();
    let report = model.training_losses(&bundle)?;
    out.time("losses", t);
    out.losses.insert(dir.to_string_lossy().into_owned(), report);
    out.push(dir.join("I_c.png"), png_rgb(&bundle.coarse)?);
    out.push(dir.join("I_f.png"), png_rgb(&bundle.fine)?);
    out.push(dir.join("C_w.png"), png_rgb(&bundle.warped)?);
    out.push(dir.join("P_t.png"), encode_parsing_png(&bundle.parsing_target)?);
    out.push(dir.join("flow.plvf"), encode_flow(&bundle.flow));
    Ok(out)
}

/// Loss report between rasters on disk; terms whose inputs are absent are
/// omitted, and `mcw` appears only when mask and flow are both given.
pub fn loss_report(args: &LossArgs, cfg: &PipelineConfig) -> Result<LossReport> {
    let pred = io::read_rgb_png(&args.pred)?;
    let target = io::read_rgb_png(&args.target)?;
    let extractor = crate::nn::perceptual::PerceptualExtractor::seeded(cfg.extractor_seed);
    let mut report = LossReport::new();
    let l1 = crate::tensor::l1_mean(&pred, &target)?;
    let vgg = perceptual_loss(&pred, &target, &extractor, &cfg.level_weights)?;
    report.insert("l1".into(), l1);
    report.insert("perceptual".into(), vgg);
    report.insert("edge".into(), edge_loss(&pred, &target)?);
    report.insert("composite".into(), composite_image_loss(&pred, &target, &extractor, &cfg.ltf_weights)?);
    let mask = match (&args.pred_mask, &args.target_mask) {
        (Some(p), Some(t)) => {
            let v = mask_loss(&io::read_mask_png(p)?.to_tensor(), &io::read_mask_png(t)?)?;
            report.insert("mask".into(), v);
            Some(v)
        }
        _ => None,
    };
    if let (Some(p), Some(t)) = (&args.pred_parsing, &args.target_parsing) {
        let prob = io::read_parsing_png(p)?.to_one_hot();
        let v = weighted_cross_entropy(&prob, &io::read_parsing_png(t)?, &cfg.class_weights)?;
        report.insert("cross_entropy".into(), v);
    }
    if let Some(f) = &args.flow {
        let tv = tv_loss(&read_flow(f)?)?;
        report.insert("tv".into(), tv);
        if let Some(mask) = mask {
            let parts = McwParts { mask, cloth: l1, vgg, tv };
            report.insert("mcw".into(), mcw_loss(&parts, &cfg.mcw_weights));
        }
    }
    Ok(report)
}

fn write_outputs(out_dir: &Path, outputs: &Outputs) -> Result<Vec<String>> {
    let mut written = Vec::with_capacity(outputs.files.len());
    for (rel, bytes) in &outputs.files {
        let path = out_dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        write_atomic(&path, bytes)?;
        written.push(path.to_string_lossy().into_owned());
    }
    Ok(written)
}

/// Runs one parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    let common = &cli.common;
    let (name, inputs, cfg, outputs) = match &cli.command {
        Command::Prealign(s) => {
            let (cfg, o) = run_samples(common, &s.samples, |_| {}, cmd_prealign)?;
            ("prealign", s.samples.clone(), cfg, o)
        }
        Command::Warp { samples, zero_flow } => {
            let zf = *zero_flow;
            let (cfg, o) = run_samples(common, &samples.samples, |c| c.zero_flow |= zf, cmd_warp)?;
            ("warp", samples.samples.clone(), cfg, o)
        }
        Command::Parse(s) => {
            let (cfg, o) = run_samples(common, &s.samples, |_| {}, cmd_parse)?;
            ("parse", s.samples.clone(), cfg, o)
        }
        Command::Tryon(s) => {
            let (cfg, o) = run_samples(common, &s.samples, |_| {}, cmd_tryon)?;
            ("tryon", s.samples.clone(), cfg, o)
        }
        Command::Losses(args) => {
            let cfg = resolve_config(common, None)?;
            let t = Instant::now();
            let report = loss_report(args, &cfg)?;
            let mut o = Outputs::default();
            o.time("losses", t);
            let json = serde_json::to_string_pretty(&report).expect("report serializes");
            o.push(PathBuf::from("losses.json"), json.into_bytes());
            o.losses.insert(String::new(), report);
            ("losses", vec![args.pred.clone(), args.target.clone()], cfg, o)
        }
        Command::Fixtures { count, height, width } => {
            let cfg = resolve_config(common, Some((*height, *width)))?;
            let t = Instant::now();
            let mut o = Outputs::default();
            for i in 0..*count {
                let f = Fixture::generate(cfg.seed.wrapping_add(i as u64), *height, *width)?;
                let dir = PathBuf::from(format!("sample_{i:03}"));
                o.push(dir.join(crate::fixtures::CLOTH_FILE), encode_rgb_png(&f.cloth)?);
                o.push(dir.join(crate::fixtures::CLOTH_MASK_FILE), encode_mask_png(&f.cloth_mask)?);
                o.push(dir.join(crate::fixtures::PERSON_FILE), encode_rgb_png(&f.person)?);
                o.push(dir.join(crate::fixtures::PARSING_FILE), encode_parsing_png(&f.parsing)?);
                o.push(dir.join(crate::fixtures::KEYPOINTS_FILE), io::keypoints_json(&f.keypoints).into_bytes());
            }
            o.time("fixtures", t);
            ("fixtures", Vec::new(), cfg, o)
        }
        Command::Weights => {
            let cfg = resolve_config(common, None)?;
            let model = build_model(common, cfg.clone())?;
            let mut o = Outputs::default();
            o.push(PathBuf::from("model.plvw"), dump_weights(&model, ""));
            ("weights", Vec::new(), cfg, o)
        }
    };
    std::fs::create_dir_all(&common.out)?;
    let written = write_outputs(&common.out, &outputs)?;
    let manifest = RunManifest {
        command: name.into(),
        seed: cfg.seed,
        config: cfg,
        inputs: inputs.iter().map(|p| p.to_string_lossy().into_owned()).collect(),
        outputs: written,
        stage_ms: outputs.stage_ms,
        losses: outputs.losses,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_atomic(&common.out.join(MANIFEST_FILE), json.as_bytes())
}

/// Parses `args`, runs the command and returns the process exit code.
/// Errors go to stderr as one line of JSON.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprintln!("{}", error_json("usage", e.to_string().trim()));
            return 1;
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => 0,
        Ok(Err(e)) => {
            eprintln!("{}", error_json(e.code(), &e.to_string()));
            exit_code(&e)
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "internal error".into());
            eprintln!("{}", error_json("internal", &msg));
            2
        }
    }
}
