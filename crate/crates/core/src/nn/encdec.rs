use crate::error::{Error, Result};
use crate::nn::conv::{relu_in_place, upsample2, Conv2D};
use crate::nn::params::{ParamVisitor, ParamVisitorMut, Parameters};
use crate::nn::se::SEBlock;
use crate::tensor::ImageTensor;

/// Number of stride-2 encoder stages (and decoder layers).
pub const DEPTH: usize = 5;
/// Inputs must be divisible by this.
pub const SIZE_MULTIPLE: usize = 1 << DEPTH;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EncoderDecoderConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    pub base_width: usize,
    /// Insert an SE block after every downsampling stage.
    pub squeeze_excite: bool,
    pub se_reduction: usize,
}

impl EncoderDecoderConfig {
    pub fn new(in_channels: usize, out_channels: usize) -> Self {
        Self { in_channels, out_channels, base_width: 8, squeeze_excite: false, se_reduction: 4 }
    }

    pub fn with_squeeze_excite(mut self) -> Self {
        self.squeeze_excite = true;
        self
    }

    pub fn with_base_width(mut self, width: usize) -> Self {
        self.base_width = width;
        self
    }

    /// Channel widths of encoder stages 1..=5.
    fn encoder_widths(&self) -> [usize; DEPTH] {
        let w = self.base_width;
        [w, 2 * w, 4 * w, 8 * w, 8 * w]
    }

    /// Channel widths of decoder layers 1..=5 (coarse to fine).
    pub fn decoder_widths(&self) -> [usize; DEPTH] {
        let w = self.base_width;
        [8 * w, 4 * w, 2 * w, w, w]
    }
}

/// Strided conv followed by a two-conv residual branch.
#[derive(Debug, Clone, PartialEq)]
struct ResidualDown {
    down: Conv2D,
    conv_a: Conv2D,
    conv_b: Conv2D,
}

impl ResidualDown {
    fn seeded(seed: u64, name: &str, cin: usize, cout: usize) -> Self {
        Self {
            down: Conv2D::seeded(seed, &format!("{name}.down"), cin, cout, 2),
            conv_a: Conv2D::seeded(seed, &format!("{name}.a"), cout, cout, 1),
            conv_b: Conv2D::seeded(seed, &format!("{name}.b"), cout, cout, 1),
        }
    }

    fn forward(&self, x: &ImageTensor) -> Result<ImageTensor> {
        let mut d = self.down.forward(x)?;
        relu_in_place(&mut d);
        let mut a = self.conv_a.forward(&d)?;
        relu_in_place(&mut a);
        let b = self.conv_b.forward(&a)?;
        let mut out = d.zip_map(&b, |p, q| p + q)?;
        relu_in_place(&mut out);
        Ok(out)
    }
}

impl Parameters for ResidualDown {
    fn visit(&self, prefix: &str, f: &mut ParamVisitor<'_>) {
        self.down.visit(&format!("{prefix}.down"), f);
        self.conv_a.visit(&format!("{prefix}.a"), f);
        self.conv_b.visit(&format!("{prefix}.b"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut ParamVisitorMut<'_>) {
        self.down.visit_mut(&format!("{prefix}.down"), f);
        self.conv_a.visit_mut(&format!("{prefix}.a"), f);
        self.conv_b.visit_mut(&format!("{prefix}.b"), f);
    }
}

/// Upsample ×2, concatenate the skip, two ReLU convs.
#[derive(Debug, Clone, PartialEq)]
struct DecoderLayer {
    conv_a: Conv2D,
    conv_b: Conv2D,
}

impl DecoderLayer {
    fn forward(&self, prev: &ImageTensor, skip: &ImageTensor) -> Result<ImageTensor> {
        let up = upsample2(prev);
        let mut a = self.conv_a.forward(&ImageTensor::concat_channels(&[&up, skip])?)?;
        relu_in_place(&mut a);
        let mut b = self.conv_b.forward(&a)?;
        relu_in_place(&mut b);
        Ok(b)
    }
}

/// Output of a forward pass: the head output plus every decoder layer's map.
#[derive(Debug, Clone)]
pub struct EncDecOutput {
    pub output: ImageTensor,
    /// Decoder layer `k` (index `k - 1`) at `1 / 2^(5-k)` resolution.
    pub decoder_maps: Vec<ImageTensor>,
}

/// Five-stage residual encoder, five-layer decoder with skip connections and
/// a linear 3×3 output head.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderDecoder {
    config: EncoderDecoderConfig,
    stem: Conv2D,
    stages: Vec<ResidualDown>,
    se: Vec<SEBlock>,
    decoder: Vec<DecoderLayer>,
    head: Conv2D,
}

impl EncoderDecoder {
    pub fn seeded(seed: u64, config: EncoderDecoderConfig) -> Self {
        let w = config.base_width;
        let enc = config.encoder_widths();
        let dec = config.decoder_widths();
        let stem = Conv2D::seeded(seed, "stem", config.in_channels, w, 1);
        let mut stages = Vec::with_capacity(DEPTH);
        let mut se = Vec::new();
        let mut cin = w;
        for (i, &cout) in enc.iter().enumerate() {
            stages.push(ResidualDown::seeded(seed, &format!("enc.{i}"), cin, cout));
            if config.squeeze_excite {
                se.push(SEBlock::seeded(seed, &format!("se.{i}"), cout, config.se_reduction));
            }
            cin = cout;
        }
        // Skip sources for decoder layers 1..=5: stage 4, 3, 2, 1 outputs, then the stem.
        let skips = [enc[3], enc[2], enc[1], enc[0], w];
        let mut decoder = Vec::with_capacity(DEPTH);
        let mut prev = enc[4];
        for k in 0..DEPTH {
            decoder.push(DecoderLayer {
                conv_a: Conv2D::seeded(seed, &format!("dec.{k}.a"), prev + skips[k], dec[k], 1),
                conv_b: Conv2D::seeded(seed, &format!("dec.{k}.b"), dec[k], dec[k], 1),
            });
            prev = dec[k];
        }
        let head = Conv2D::seeded(seed, "head", prev, config.out_channels, 1);
        Self { config, stem, stages, se, decoder, head }
    }

    pub fn config(&self) -> &EncoderDecoderConfig {
        &self.config
    }

    /// Smallest size `>= (h, w)` that the network accepts.
    pub fn padded_size(h: usize, w: usize) -> (usize, usize) {
        (h.next_multiple_of(SIZE_MULTIPLE), w.next_multiple_of(SIZE_MULTIPLE))
    }

    pub fn forward_detailed(&self, x: &ImageTensor) -> Result<EncDecOutput> {
        let (c, h, w) = x.shape();
        if c != self.config.in_channels {
            return Err(Error::dim(format!(
                "encoder-decoder expects {} input channels, got {c}",
                self.config.in_channels
            )));
        }
        if h % SIZE_MULTIPLE != 0 || w % SIZE_MULTIPLE != 0 {
            let (ph, pw) = Self::padded_size(h, w);
            return Err(Error::dim(format!(
                "input {h}x{w} is not divisible by {SIZE_MULTIPLE}; pad it to {ph}x{pw}"
            )));
        }
        let mut stem = self.stem.forward(x)?;
        relu_in_place(&mut stem);
        let mut features = vec![stem];
        for (i, stage) in self.stages.iter().enumerate() {
            let mut f = stage.forward(features.last().expect("non-empty"))?;
            if let Some(se) = self.se.get(i) {
                f = se.forward(&f)?;
            }
            features.push(f);
        }
        let mut decoder_maps = Vec::with_capacity(DEPTH);
        let mut prev = features[DEPTH].clone();
        for (k, layer) in self.decoder.iter().enumerate() {
            prev = layer.forward(&prev, &features[DEPTH - 1 - k])?;
            decoder_maps.push(prev.clone());
        }
        let output = self.head.forward(&prev)?;
        Ok(EncDecOutput { output, decoder_maps })
    }

    pub fn forward(&self, x: &ImageTensor) -> Result<ImageTensor> {
        Ok(self.forward_detailed(x)?.output)
    }
}

impl Parameters for EncoderDecoder {
    fn visit(&self, prefix: &str, f: &mut ParamVisitor<'_>) {
        self.stem.visit(&format!("{prefix}.stem"), f);
        for (i, s) in self.stages.iter().enumerate() {
            s.visit(&format!("{prefix}.enc.{i}"), f);
        }
        for (i, s) in self.se.iter().enumerate() {
            s.visit(&format!("{prefix}.se.{i}"), f);
        }
        for (k, d) in self.decoder.iter().enumerate() {
            d.conv_a.visit(&format!("{prefix}.dec.{k}.a"), f);
            d.conv_b.visit(&format!("{prefix}.dec.{k}.b"), f);
        }
        self.head.visit(&format!("{prefix}.head"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut ParamVisitorMut<'_>) {
        self.stem.visit_mut(&format!("{prefix}.stem"), f);
        for (i, s) in self.stages.iter_mut().enumerate() {
            s.visit_mut(&format!("{prefix}.enc.{i}"), f);
        }
        for (i, s) in self.se.iter_mut().enumerate() {
            s.visit_mut(&format!("{prefix}.se.{i}"), f);
        }
        for (k, d) in self.decoder.iter_mut().enumerate() {
            d.conv_a.visit_mut(&format!("{prefix}.dec.{k}.a"), f);
            d.conv_b.visit_mut(&format!("{prefix}.dec.{k}.b"), f);
        }
        self.head.visit_mut(&format!("{prefix}.head"), f);
    }
}

/// Free-function form of [`EncoderDecoder::forward`].
pub fn encdec_forward(net: &EncoderDecoder, x: &ImageTensor) -> Result<ImageTensor> {
    net.forward(x)
}
