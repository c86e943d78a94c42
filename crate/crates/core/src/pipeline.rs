//! The cascaded try-on: clothing warping, parsing estimation and texture
//! fusion, plus self-supervised sample assembly.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{aggregate_flows, warp_mask, warp_with_flow, AppearanceFlow, FlowPyramid, PyramidMode, PYRAMID_LEVELS};
use crate::losses::{
    cloth_ground_truth, cloth_loss, ltf_loss, mask_loss, mcw_loss, perceptual_loss, tv_loss, weighted_cross_entropy,
    ClassWeights, LossReport, LossWeightsLTF, LossWeightsMCW, McwParts, DEFAULT_LEVEL_WEIGHTS,
};
use crate::nn::conv::{sigmoid, Conv2D};
use crate::nn::encdec::{EncoderDecoder, EncoderDecoderConfig, SIZE_MULTIPLE};
use crate::nn::gru::{Activation, ConvGRUCell};
use crate::nn::init::derive_seed;
use crate::nn::params::{ParamVisitor, ParamVisitorMut, Parameters};
use crate::nn::perceptual::{PerceptualExtractor, DEFAULT_EXTRACTOR_SEED, LEVELS};
use crate::person::{
    apply_agnostic_mask, build_agnostic_mask, extract_limb_map, limb_patches, KeypointMap, LimbMap, ParsingMap, ARMS,
    NUM_CLASSES, NUM_KEYPOINTS, UPPER_CLOTHES,
};
use crate::prealign::{prealign, PreAlignResult};
use crate::tensor::{gaussian_blur, resize_bilinear, BinaryMask, ImageTensor};

/// Train mode blurs the coarse result inside the arm regions before fusion;
/// eval mode feeds it unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    #[default]
    Eval,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Mode::Train),
            "eval" => Ok(Mode::Eval),
            other => Err(Error::param(format!("mode must be train or eval, got {other:?}"))),
        }
    }
}

impl FromStr for PyramidMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(PyramidMode::Literal),
            "pow2" => Ok(PyramidMode::Pow2),
            other => Err(Error::param(format!("pyramid mode must be literal or pow2, got {other:?}"))),
        }
    }
}

/// Optimisation settings of the reference training runs. Informational only:
/// nothing here is trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingSchedule {
    pub mcw_steps: u64,
    pub hpe_steps: u64,
    pub ltf_steps: u64,
    pub mcw_batch: usize,
    pub hpe_batch: usize,
    pub ltf_batch: usize,
    pub learning_rate: f64,
    pub adam_betas: (f64, f64),
}

impl Default for TrainingSchedule {
    fn default() -> Self {
        Self {
            mcw_steps: 24_000,
            hpe_steps: 40_000,
            ltf_steps: 80_000,
            mcw_batch: 16,
            hpe_batch: 16,
            ltf_batch: 4,
            learning_rate: 1e-4,
            adam_betas: (0.5, 0.999),
        }
    }
}

/// Every knob of a run. Serialized as a flat JSON object; missing fields
/// take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub height: usize,
    pub width: usize,
    /// Limb patch grid is `patch_scale × patch_scale`.
    pub patch_scale: usize,
    /// Sigma of the train-mode limb blur; 0 disables it.
    pub blur_sigma: f64,
    pub pyramid_mode: PyramidMode,
    /// Master seed; every network derives its own from it.
    pub seed: u64,
    pub extractor_seed: u64,
    pub base_width: usize,
    pub gate_width: usize,
    /// Largest sub-flow displacement as a fraction of the level's size.
    pub flow_scale: f64,
    /// Forces every sub-flow and the merged flow to zero.
    pub zero_flow: bool,
    pub mode: Mode,
    pub mcw_weights: LossWeightsMCW,
    pub class_weights: ClassWeights,
    pub ltf_weights: LossWeightsLTF,
    pub level_weights: [f64; LEVELS],
    pub training: TrainingSchedule,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            height: 256,
            width: 192,
            patch_scale: 4,
            blur_sigma: 3.0,
            pyramid_mode: PyramidMode::Literal,
            seed: 42,
            extractor_seed: DEFAULT_EXTRACTOR_SEED,
            base_width: 8,
            gate_width: 8,
            flow_scale: 0.1,
            zero_flow: false,
            mode: Mode::Eval,
            mcw_weights: LossWeightsMCW::default(),
            class_weights: ClassWeights::default(),
            ltf_weights: LossWeightsLTF::default(),
            level_weights: DEFAULT_LEVEL_WEIGHTS,
            training: TrainingSchedule::default(),
        }
    }
}

impl PipelineConfig {
    /// The 96×64 raster used by tests and fixtures.
    pub fn toy() -> Self {
        Self { height: 96, width: 64, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.height < 2 || self.width < 2 {
            return Err(Error::param(format!("image size {}x{} is too small", self.height, self.width)));
        }
        if self.patch_scale == 0 || self.patch_scale > self.height.min(self.width) {
            return Err(Error::param(format!("patch scale {} is out of range", self.patch_scale)));
        }
        if !(self.blur_sigma >= 0.0 && self.blur_sigma.is_finite()) {
            return Err(Error::param(format!("blur sigma must be >= 0, got {}", self.blur_sigma)));
        }
        if self.base_width == 0 {
            return Err(Error::param("base width must be positive"));
        }
        if self.gate_width == 0 {
            return Err(Error::param("gate width must be positive"));
        }
        if !(self.flow_scale > 0.0 && self.flow_scale.is_finite()) {
            return Err(Error::param(format!("flow scale must be positive, got {}", self.flow_scale)));
        }
        self.mcw_weights.validate()?;
        self.class_weights.validate()?;
        self.ltf_weights.validate()?;
        if self.level_weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::param("perceptual level weights must be >= 0"));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Format(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Raw inputs of one try-on: the in-shop garment and the person.
#[derive(Debug, Clone, PartialEq)]
pub struct TryOnInputs {
    pub cloth: ImageTensor,
    pub cloth_mask: BinaryMask,
    pub keypoints: KeypointMap,
    /// Full parsing of the person, used for alignment and masking.
    pub parsing: ParsingMap,
    pub person: ImageTensor,
}

impl TryOnInputs {
    pub fn size(&self) -> (usize, usize) {
        (self.person.height(), self.person.width())
    }

    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.size();
        for (name, c) in [("cloth", self.cloth.channels()), ("person", self.person.channels())] {
            if c != 3 {
                return Err(Error::dim(format!("{name} must have 3 channels, got {c}")));
            }
        }
        self.cloth.ensure_spatial(h, w, "cloth")?;
        if (self.cloth_mask.height(), self.cloth_mask.width()) != (h, w) {
            return Err(Error::dim(format!(
                "cloth mask is {}x{}, person is {h}x{w}",
                self.cloth_mask.height(),
                self.cloth_mask.width()
            )));
        }
        if (self.keypoints.height(), self.keypoints.width()) != (h, w) {
            return Err(Error::dim(format!(
                "keypoint map is {}x{}, person is {h}x{w}",
                self.keypoints.height(),
                self.keypoints.width()
            )));
        }
        self.parsing.ensure_spatial(h, w, "parsing")
    }
}

/// Everything a run produces, inputs included.
#[derive(Debug, Clone, PartialEq)]
pub struct TryOnBundle {
    pub inputs: TryOnInputs,
    pub agnostic_mask: BinaryMask,
    /// `I_mask`: person with the agnostic region zeroed.
    pub person_masked: ImageTensor,
    pub parsing_masked: ParsingMap,
    /// `C_l`: garment moved onto the person's clothing centre.
    pub shifted: ImageTensor,
    /// `C_s`: garment moved and rescaled.
    pub scaled: ImageTensor,
    pub scaled_mask: BinaryMask,
    pub pyramid: FlowPyramid,
    /// `f_a`.
    pub flow: AppearanceFlow,
    /// `C_w`.
    pub warped: ImageTensor,
    /// `M^w_c`.
    pub warped_mask: BinaryMask,
    /// Per-pixel class probabilities behind `parsing_target`.
    pub parsing_prob: ImageTensor,
    /// `P^t`.
    pub parsing_target: ParsingMap,
    /// `L`.
    pub limb: LimbMap,
    /// `L_p`: `3 s²` tiles at tile size.
    pub limb_patches: ImageTensor,
    /// `I_c`.
    pub coarse: ImageTensor,
    /// `I_c` as fed to the fine network (blurred on the arms in train mode).
    pub coarse_fed: ImageTensor,
    /// `I_f`.
    pub fine: ImageTensor,
}

impl TryOnBundle {
    /// Shared raster size, one-hot parsing and `[0, 1]` outputs.
    pub fn check_invariants(&self) -> Result<()> {
        let (h, w) = self.inputs.size();
        self.inputs.validate()?;
        let images = [
            ("person_masked", &self.person_masked),
            ("shifted", &self.shifted),
            ("scaled", &self.scaled),
            ("warped", &self.warped),
            ("parsing_prob", &self.parsing_prob),
            ("limb", self.limb.tensor()),
            ("coarse", &self.coarse),
            ("coarse_fed", &self.coarse_fed),
            ("fine", &self.fine),
            ("flow", self.flow.tensor()),
        ];
        for (name, t) in images {
            t.ensure_spatial(h, w, name).map_err(|e| Error::Structure(e.to_string()))?;
        }
        for (name, m) in [("agnostic_mask", &self.agnostic_mask), ("scaled_mask", &self.scaled_mask), ("warped_mask", &self.warped_mask)] {
            if (m.height(), m.width()) != (h, w) {
                return Err(Error::Structure(format!("{name} is {}x{}, expected {h}x{w}", m.height(), m.width())));
            }
        }
        for p in [&self.parsing_masked, &self.parsing_target] {
            p.ensure_spatial(h, w, "parsing").map_err(|e| Error::Structure(e.to_string()))?;
            let one_hot = p.to_one_hot();
            for i in 0..h * w {
                let s: f64 = (0..NUM_CLASSES).map(|k| one_hot.data()[k * h * w + i]).sum();
                if s != 1.0 {
                    return Err(Error::Structure("parsing map is not one-hot".into()));
                }
            }
        }
        if self.pyramid.size() != (h, w) {
            return Err(Error::Structure("flow pyramid does not end at full resolution".into()));
        }
        for (name, t) in [("coarse", &self.coarse), ("fine", &self.fine)] {
            if t.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Structure(format!("{name} result leaves [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Warping-stage outputs.
#[derive(Debug, Clone)]
pub struct McwOutput {
    pub prealigned: PreAlignResult,
    pub pyramid: FlowPyramid,
    pub flow: AppearanceFlow,
    pub warped: ImageTensor,
    pub warped_mask: BinaryMask,
}

/// Parsing-stage outputs.
#[derive(Debug, Clone)]
pub struct HpeOutput {
    pub prob: ImageTensor,
    pub parsing: ParsingMap,
}

/// Fusion-stage outputs.
#[derive(Debug, Clone)]
pub struct LtfOutput {
    pub limb: LimbMap,
    pub limb_patches: ImageTensor,
    pub coarse: ImageTensor,
    pub coarse_fed: ImageTensor,
    pub fine: ImageTensor,
}

/// Zero-pads on the bottom and right up to a multiple of the network stride.
fn pad_to_multiple(t: &ImageTensor) -> ImageTensor {
    let (c, h, w) = t.shape();
    let (ph, pw) = EncoderDecoder::padded_size(h, w);
    if (ph, pw) == (h, w) {
        return t.clone();
    }
    ImageTensor::from_fn(c, ph, pw, |ch, y, x| if y < h && x < w { t.get(ch, y, x) } else { 0.0 })
}

fn crop(t: &ImageTensor, h: usize, w: usize) -> ImageTensor {
    if (t.height(), t.width()) == (h, w) {
        return t.clone();
    }
    ImageTensor::from_fn(t.channels(), h, w, |c, y, x| t.get(c, y, x))
}

/// Per-pixel softmax over channels.
pub fn softmax_channels(scores: &ImageTensor) -> ImageTensor {
    let (c, h, w) = scores.shape();
    let mut out = ImageTensor::zeros(c, h, w);
    for y in 0..h {
        for x in 0..w {
            let m = (0..c).map(|k| scores.get(k, y, x)).fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = (0..c).map(|k| (scores.get(k, y, x) - m).exp()).collect();
            let s: f64 = e.iter().sum();
            for (k, v) in e.into_iter().enumerate() {
                out.set(k, y, x, v / s);
            }
        }
    }
    out
}

/// Replaces `img` by its Gaussian blur inside `region`.
fn blur_region(img: &ImageTensor, region: &BinaryMask, sigma: f64) -> Result<ImageTensor> {
    if sigma == 0.0 || region.is_empty() {
        return Ok(img.clone());
    }
    let blurred = gaussian_blur(img, sigma)?;
    let (c, h, w) = img.shape();
    Ok(ImageTensor::from_fn(c, h, w, |ch, y, x| {
        if region.get(y, x) {
            blurred.get(ch, y, x)
        } else {
            img.get(ch, y, x)
        }
    }))
}

/// The seeded networks of all three stages.
#[derive(Debug, Clone, PartialEq)]
pub struct TryOnModel {
    config: PipelineConfig,
    mcw: EncoderDecoder,
    /// Sub-flow heads for pyramid levels 1 to 4; level 5 uses the network head.
    flow_heads: Vec<Conv2D>,
    gru: ConvGRUCell,
    hpe: EncoderDecoder,
    ltf_coarse: EncoderDecoder,
    ltf_fine: EncoderDecoder,
    extractor: PerceptualExtractor,
}

const MCW_IN: usize = 3 + NUM_KEYPOINTS + NUM_CLASSES;
const HPE_IN: usize = 3 + NUM_KEYPOINTS + NUM_CLASSES + 3;
const LTF_COARSE_IN: usize = 3 + NUM_KEYPOINTS + NUM_CLASSES + 3;

impl TryOnModel {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let seed = config.seed;
        let bw = config.base_width;
        let mcw_cfg = EncoderDecoderConfig::new(MCW_IN, 2).with_base_width(bw);
        let mcw_seed = derive_seed(seed, "mcw");
        let dec = mcw_cfg.decoder_widths();
        let flow_heads = (0..PYRAMID_LEVELS - 1)
            .map(|k| Conv2D::seeded(mcw_seed, &format!("flow_head.{k}"), dec[k], 2, 1))
            .collect();
        let bound = config.flow_scale * config.height.max(config.width) as f64;
        let gru = ConvGRUCell::seeded(derive_seed(seed, "gru"), 2, config.gate_width, Activation::ScaledTanh(bound));
        let hpe = EncoderDecoder::seeded(
            derive_seed(seed, "hpe"),
            EncoderDecoderConfig::new(HPE_IN, NUM_CLASSES).with_base_width(bw).with_squeeze_excite(),
        );
        let ltf_coarse =
            EncoderDecoder::seeded(derive_seed(seed, "ltf.coarse"), EncoderDecoderConfig::new(LTF_COARSE_IN, 3).with_base_width(bw));
        let fine_in = 3 * config.patch_scale * config.patch_scale + NUM_KEYPOINTS + 3 + NUM_CLASSES + 3;
        let ltf_fine =
            EncoderDecoder::seeded(derive_seed(seed, "ltf.fine"), EncoderDecoderConfig::new(fine_in, 3).with_base_width(bw));
        let extractor = PerceptualExtractor::seeded(config.extractor_seed);
        Ok(Self {
            mcw: EncoderDecoder::seeded(mcw_seed, mcw_cfg),
            flow_heads,
            gru,
            hpe,
            ltf_coarse,
            ltf_fine,
            extractor,
            config,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    /// Inputs must match the configured raster size.
    pub fn check_size(&self, inputs: &TryOnInputs) -> Result<()> {
        let (h, w) = inputs.size();
        if (h, w) != (self.config.height, self.config.width) {
            return Err(Error::dim(format!(
                "inputs are {h}x{w} but the config expects {}x{}",
                self.config.height, self.config.width
            )));
        }
        Ok(())
    }

    pub fn extractor(&self) -> &PerceptualExtractor {
        &self.extractor
    }

    pub fn gru(&self) -> &ConvGRUCell {
        &self.gru
    }

    /// Runs `net` on `input`, padding to the network stride and cropping back.
    fn run_net(net: &EncoderDecoder, input: &ImageTensor) -> Result<ImageTensor> {
        let (h, w) = (input.height(), input.width());
        Ok(crop(&net.forward(&pad_to_multiple(input))?, h, w))
    }

    /// Predicts the five sub-flows from `(C_s, K, P_s)`.
    pub fn predict_pyramid(&self, scaled: &ImageTensor, keypoints: &KeypointMap, parsing: &ParsingMap) -> Result<FlowPyramid> {
        let (h, w) = (scaled.height(), scaled.width());
        let mode = self.config.pyramid_mode;
        if self.config.zero_flow {
            return Ok(FlowPyramid::zeros(mode, h, w));
        }
        let input = ImageTensor::concat_channels(&[scaled, keypoints.tensor(), &parsing.to_one_hot()])?;
        let out = self.mcw.forward_detailed(&pad_to_multiple(&input))?;
        let mut levels = Vec::with_capacity(PYRAMID_LEVELS);
        for (k, (lh, lw)) in mode.level_sizes(h, w).into_iter().enumerate() {
            let raw = if k + 1 < PYRAMID_LEVELS {
                let map = &out.decoder_maps[k];
                let stride = 1 << (PYRAMID_LEVELS - 1 - k);
                let head = self.flow_heads[k].forward(map)?;
                crop(&head, h.div_ceil(stride), w.div_ceil(stride))
            } else {
                crop(&out.output, h, w)
            };
            let raw = resize_bilinear(&raw, lh, lw)?;
            let (sx, sy) = (self.config.flow_scale * lw as f64, self.config.flow_scale * lh as f64);
            let flow = ImageTensor::from_fn(2, lh, lw, |c, y, x| {
                raw.get(c, y, x).tanh() * if c == 0 { sx } else { sy }
            });
            levels.push(AppearanceFlow::new(flow)?);
        }
        FlowPyramid::new(levels, mode, h, w)
    }

    /// Clothing warping: pre-align, predict sub-flows, merge, warp.
    pub fn run_mcw(
        &self,
        cloth: &ImageTensor,
        cloth_mask: &BinaryMask,
        keypoints: &KeypointMap,
        parsing: &ParsingMap,
    ) -> Result<McwOutput> {
        let prealigned = prealign(cloth, cloth_mask, parsing)?;
        let pyramid = self.predict_pyramid(&prealigned.scaled, keypoints, parsing)?;
        let flow = if self.config.zero_flow {
            AppearanceFlow::zeros(cloth.height(), cloth.width())
        } else {
            aggregate_flows(&pyramid, &self.gru)?
        };
        let warped = warp_with_flow(&prealigned.scaled, &flow)?;
        let warped_mask = warp_mask(&prealigned.scaled_mask, &flow)?;
        Ok(McwOutput { prealigned, pyramid, flow, warped, warped_mask })
    }

    /// Parsing estimation from `(C_w, K, P_s masked, I_mask)`.
    pub fn run_hpe(
        &self,
        warped: &ImageTensor,
        keypoints: &KeypointMap,
        parsing_masked: &ParsingMap,
        person_masked: &ImageTensor,
    ) -> Result<HpeOutput> {
        let input = ImageTensor::concat_channels(&[
            warped,
            keypoints.tensor(),
            &parsing_masked.to_one_hot(),
            person_masked,
        ])?;
        let prob = softmax_channels(&Self::run_net(&self.hpe, &input)?);
        let parsing = ParsingMap::from_argmax(&prob)?;
        Ok(HpeOutput { prob, parsing })
    }

    /// Texture fusion: coarse result, limb patches, optional blur, refinement.
    pub fn run_ltf(
        &self,
        warped: &ImageTensor,
        keypoints: &KeypointMap,
        parsing_target: &ParsingMap,
        person_masked: &ImageTensor,
        person: &ImageTensor,
        mode: Mode,
    ) -> Result<LtfOutput> {
        let (h, w) = (person.height(), person.width());
        let target_one_hot = parsing_target.to_one_hot();
        let coarse_in = ImageTensor::concat_channels(&[warped, keypoints.tensor(), &target_one_hot, person_masked])?;
        let coarse = Self::run_net(&self.ltf_coarse, &coarse_in)?.map(sigmoid).clamp01();

        let limb = extract_limb_map(parsing_target, person)?;
        let patches = limb_patches(&limb, self.config.patch_scale)?;
        let coarse_fed = match mode {
            Mode::Eval => coarse.clone(),
            Mode::Train => blur_region(&coarse, &parsing_target.class_mask(&ARMS)?, self.config.blur_sigma)?,
        };
        let fine_in = ImageTensor::concat_channels(&[
            &resize_bilinear(&patches, h, w)?,
            keypoints.tensor(),
            person_masked,
            &target_one_hot,
            &coarse_fed,
        ])?;
        let fine = Self::run_net(&self.ltf_fine, &fine_in)?.map(sigmoid).clamp01();
        Ok(LtfOutput { limb, limb_patches: patches, coarse, coarse_fed, fine })
    }

    /// All three stages; the bundle's invariants are checked before returning.
    pub fn run_pipeline(&self, inputs: &TryOnInputs) -> Result<TryOnBundle> {
        inputs.validate()?;
        self.check_size(inputs)?;
        let agnostic_mask = build_agnostic_mask(&inputs.parsing)?;
        let (person_masked, parsing_masked) = apply_agnostic_mask(&inputs.person, &inputs.parsing, &agnostic_mask)?;
        let mcw = self.run_mcw(&inputs.cloth, &inputs.cloth_mask, &inputs.keypoints, &inputs.parsing)?;
        let hpe = self.run_hpe(&mcw.warped, &inputs.keypoints, &parsing_masked, &person_masked)?;
        let ltf = self.run_ltf(&mcw.warped, &inputs.keypoints, &hpe.parsing, &person_masked, &inputs.person, self.config.mode)?;
        let bundle = TryOnBundle {
            inputs: inputs.clone(),
            agnostic_mask,
            person_masked,
            parsing_masked,
            shifted: mcw.prealigned.shifted,
            scaled: mcw.prealigned.scaled,
            scaled_mask: mcw.prealigned.scaled_mask,
            pyramid: mcw.pyramid,
            flow: mcw.flow,
            warped: mcw.warped,
            warped_mask: mcw.warped_mask,
            parsing_prob: hpe.prob,
            parsing_target: hpe.parsing,
            limb: ltf.limb,
            limb_patches: ltf.limb_patches,
            coarse: ltf.coarse,
            coarse_fed: ltf.coarse_fed,
            fine: ltf.fine,
        };
        bundle.check_invariants()?;
        Ok(bundle)
    }

    /// Self-supervised objectives of a bundle whose garment is the one the
    /// person wears: the person image is the reconstruction target.
    pub fn training_losses(&self, bundle: &TryOnBundle) -> Result<LossReport> {
        let cfg = &self.config;
        let inputs = &bundle.inputs;
        let mask_gt = inputs.parsing.class_mask(&[UPPER_CLOTHES])?;
        let cloth_gt = cloth_ground_truth(&inputs.person, &mask_gt)?;
        let parts = McwParts {
            mask: mask_loss(&bundle.warped_mask.to_tensor(), &mask_gt)?,
            cloth: cloth_loss(&bundle.warped, &cloth_gt)?,
            vgg: perceptual_loss(&bundle.warped, &cloth_gt, &self.extractor, &cfg.level_weights)?,
            tv: tv_loss(&bundle.flow)?,
        };
        let hpe = weighted_cross_entropy(&bundle.parsing_prob, &inputs.parsing, &cfg.class_weights)?;
        let ltf = ltf_loss(&bundle.coarse, &bundle.fine, &inputs.person, &self.extractor, &cfg.ltf_weights)?;
        Ok(LossReport::from([
            ("mask".to_string(), parts.mask),
            ("cloth".to_string(), parts.cloth),
            ("vgg".to_string(), parts.vgg),
            ("tv".to_string(), parts.tv),
            ("mcw".to_string(), mcw_loss(&parts, &cfg.mcw_weights)),
            ("hpe".to_string(), hpe),
            ("ltf".to_string(), ltf),
        ]))
    }
}

impl Parameters for TryOnModel {
    fn visit(&self, prefix: &str, f: &mut ParamVisitor<'_>) {
        self.mcw.visit(&format!("{prefix}mcw"), f);
        for (k, head) in self.flow_heads.iter().enumerate() {
            head.visit(&format!("{prefix}mcw.flow_head.{k}"), f);
        }
        self.gru.visit(&format!("{prefix}gru"), f);
        self.hpe.visit(&format!("{prefix}hpe"), f);
        self.ltf_coarse.visit(&format!("{prefix}ltf.coarse"), f);
        self.ltf_fine.visit(&format!("{prefix}ltf.fine"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut ParamVisitorMut<'_>) {
        self.mcw.visit_mut(&format!("{prefix}mcw"), f);
        for (k, head) in self.flow_heads.iter_mut().enumerate() {
            head.visit_mut(&format!("{prefix}mcw.flow_head.{k}"), f);
        }
        self.gru.visit_mut(&format!("{prefix}gru"), f);
        self.hpe.visit_mut(&format!("{prefix}hpe"), f);
        self.ltf_coarse.visit_mut(&format!("{prefix}ltf.coarse"), f);
        self.ltf_fine.visit_mut(&format!("{prefix}ltf.fine"), f);
    }
}

/// Builds the model for `config` and runs every stage.
pub fn run_pipeline(inputs: &TryOnInputs, config: &PipelineConfig) -> Result<TryOnBundle> {
    TryOnModel::new(config.clone())?.run_pipeline(inputs)
}

/// Supervision for a self-supervised sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTargets {
    /// `M^gt_c`: the person's clothing region.
    pub clothing_mask: BinaryMask,
    /// `C^gt_w = I ⊙ M^gt_c`.
    pub cloth: ImageTensor,
    pub parsing: ParsingMap,
    pub image: ImageTensor,
}

/// A person used as both input and target.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub inputs: TryOnInputs,
    pub agnostic_mask: BinaryMask,
    pub person_masked: ImageTensor,
    pub parsing_masked: ParsingMap,
    pub targets: TrainingTargets,
}

pub fn make_training_sample(
    person: &ImageTensor,
    parsing: &ParsingMap,
    keypoints: &KeypointMap,
    cloth: &ImageTensor,
    cloth_mask: &BinaryMask,
) -> Result<TrainingSample> {
    let inputs = TryOnInputs {
        cloth: cloth.clone(),
        cloth_mask: cloth_mask.clone(),
        keypoints: keypoints.clone(),
        parsing: parsing.clone(),
        person: person.clone(),
    };
    inputs.validate()?;
    let agnostic_mask = build_agnostic_mask(parsing)?;
    let (person_masked, parsing_masked) = apply_agnostic_mask(person, parsing, &agnostic_mask)?;
    let clothing_mask = parsing.class_mask(&[UPPER_CLOTHES])?;
    let targets = TrainingTargets {
        cloth: cloth_ground_truth(person, &clothing_mask)?,
        clothing_mask,
        parsing: parsing.clone(),
        image: person.clone(),
    };
    Ok(TrainingSample { inputs, agnostic_mask, person_masked, parsing_masked, targets })
}

/// Raster size the networks see for an `h × w` input.
pub fn network_size(h: usize, w: usize) -> (usize, usize) {
    (h.next_multiple_of(SIZE_MULTIPLE), w.next_multiple_of(SIZE_MULTIPLE))
}
