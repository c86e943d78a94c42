use crate::error::{Error, Result};
use crate::nn::init::{layer_rng, uniform_fan_in};
use crate::nn::params::{ParamVisitor, ParamVisitorMut, Parameters};
use crate::tensor::ImageTensor;

/// 3×3 convolution with zero padding 1.
///
/// Weights are laid out `[out][in][ky][kx]`; biases start at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2D {
    in_channels: usize,
    out_channels: usize,
    stride: usize,
    weight: Vec<f64>,
    bias: Vec<f64>,
}

impl Conv2D {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        stride: usize,
        weight: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if !(1..=2).contains(&stride) {
            return Err(Error::param(format!("conv stride must be 1 or 2, got {stride}")));
        }
        if in_channels == 0 || out_channels == 0 {
            return Err(Error::param("conv channel counts must be positive"));
        }
        if weight.len() != out_channels * in_channels * 9 || bias.len() != out_channels {
            return Err(Error::dim(format!(
                "conv {in_channels}->{out_channels} needs {} weights and {out_channels} biases, got {} and {}",
                out_channels * in_channels * 9,
                weight.len(),
                bias.len()
            )));
        }
        if weight.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::param("conv parameters must be finite"));
        }
        Ok(Self { in_channels, out_channels, stride, weight, bias })
    }

    /// Seeded `uniform(±sqrt(1/fan_in))` weights, zero bias.
    pub fn seeded(seed: u64, name: &str, in_channels: usize, out_channels: usize, stride: usize) -> Self {
        let fan_in = in_channels * 9;
        let weight = uniform_fan_in(&mut layer_rng(seed, name), out_channels * fan_in, fan_in);
        Self::new(in_channels, out_channels, stride, weight, vec![0.0; out_channels])
            .expect("seeded conv shape is valid")
    }

    /// All-zero kernel and bias.
    pub fn zeroed(in_channels: usize, out_channels: usize, stride: usize) -> Self {
        Self::new(in_channels, out_channels, stride, vec![0.0; out_channels * in_channels * 9], vec![
            0.0;
            out_channels
        ])
        .expect("zeroed conv shape is valid")
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weight_at(&self, o: usize, i: usize, ky: usize, kx: usize) -> f64 {
        self.weight[((o * self.in_channels + i) * 3 + ky) * 3 + kx]
    }

    pub fn set_weight(&mut self, o: usize, i: usize, ky: usize, kx: usize, v: f64) {
        self.weight[((o * self.in_channels + i) * 3 + ky) * 3 + kx] = v;
    }

    pub fn set_bias(&mut self, o: usize, v: f64) {
        self.bias[o] = v;
    }

    /// Output spatial size for an `h × w` input.
    pub fn output_size(&self, h: usize, w: usize) -> (usize, usize) {
        (h.div_ceil(self.stride), w.div_ceil(self.stride))
    }

    pub fn forward(&self, x: &ImageTensor) -> Result<ImageTensor> {
        let (c, h, w) = x.shape();
        if c != self.in_channels {
            return Err(Error::dim(format!(
                "conv expects {} input channels, got {c}",
                self.in_channels
            )));
        }
        let s = self.stride;
        let (oh, ow) = self.output_size(h, w);
        let mut out = ImageTensor::zeros(self.out_channels, oh, ow);
        for o in 0..self.out_channels {
            let bias = self.bias[o];
            let dst = out.plane_mut(o);
            dst.iter_mut().for_each(|v| *v = bias);
            for i in 0..c {
                let src = x.plane(i);
                for ky in 0..3 {
                    for kx in 0..3 {
                        let k = self.weight[((o * c + i) * 3 + ky) * 3 + kx];
                        if k == 0.0 {
                            continue;
                        }
                        let (ox_lo, ox_hi) = tap_range(kx, s, w, ow);
                        for oy in 0..oh {
                            let iy = (oy * s + ky) as isize - 1;
                            if iy < 0 || iy as usize >= h {
                                continue;
                            }
                            let row = &src[iy as usize * w..(iy as usize + 1) * w];
                            let drow = &mut dst[oy * ow..(oy + 1) * ow];
                            for ox in ox_lo..ox_hi {
                                drow[ox] += k * row[ox * s + kx - 1];
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Gradient of `<grad_out, forward(x)>` with respect to `x`, for an input
    /// of spatial size `h × w`.
    pub fn backward_input(&self, grad_out: &ImageTensor, h: usize, w: usize) -> Result<ImageTensor> {
        let (oc, oh, ow) = grad_out.shape();
        if oc != self.out_channels || (oh, ow) != self.output_size(h, w) {
            return Err(Error::dim(format!(
                "conv cotangent {:?} does not match output of a {h}x{w} input",
                grad_out.shape()
            )));
        }
        let s = self.stride;
        let c = self.in_channels;
        let mut grad_in = ImageTensor::zeros(c, h, w);
        for o in 0..oc {
            let g = grad_out.plane(o);
            for i in 0..c {
                let dst = grad_in.plane_mut(i);
                for ky in 0..3 {
                    for kx in 0..3 {
                        let k = self.weight[((o * c + i) * 3 + ky) * 3 + kx];
                        if k == 0.0 {
                            continue;
                        }
                        let (ox_lo, ox_hi) = tap_range(kx, s, w, ow);
                        for oy in 0..oh {
                            let iy = (oy * s + ky) as isize - 1;
                            if iy < 0 || iy as usize >= h {
                                continue;
                            }
                            let base = iy as usize * w;
                            for ox in ox_lo..ox_hi {
                                dst[base + ox * s + kx - 1] += k * g[oy * ow + ox];
                            }
                        }
                    }
                }
            }
        }
        Ok(grad_in)
    }
}

/// Output columns `ox` whose input column `ox * s + kx - 1` lies in `0..w`.
#[inline]
fn tap_range(kx: usize, s: usize, w: usize, ow: usize) -> (usize, usize) {
    let lo = if kx == 0 { 1 } else { 0 };
    // ox * s + kx - 1 <= w - 1  <=>  ox <= (w - kx) / s
    let hi = if w + 1 > kx { ((w - kx) / s + 1).min(ow) } else { 0 };
    (lo, hi.max(lo))
}

impl Parameters for Conv2D {
    fn visit(&self, prefix: &str, f: &mut ParamVisitor<'_>) {
        f(&format!("{prefix}.weight"), &[self.out_channels, self.in_channels, 3, 3], &self.weight);
        f(&format!("{prefix}.bias"), &[self.out_channels], &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut ParamVisitorMut<'_>) {
        f(&format!("{prefix}.weight"), &[self.out_channels, self.in_channels, 3, 3], &mut self.weight);
        f(&format!("{prefix}.bias"), &[self.out_channels], &mut self.bias);
    }
}

/// Free-function form of [`Conv2D::forward`].
pub fn conv_forward(layer: &Conv2D, x: &ImageTensor) -> Result<ImageTensor> {
    layer.forward(x)
}

/// Fully connected layer, `[out][in]` weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    in_features: usize,
    out_features: usize,
    weight: Vec<f64>,
    bias: Vec<f64>,
}

impl Linear {
    pub fn new(in_features: usize, out_features: usize, weight: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weight.len() != in_features * out_features || bias.len() != out_features {
            return Err(Error::dim(format!(
                "linear {in_features}->{out_features} got {} weights and {} biases",
                weight.len(),
                bias.len()
            )));
        }
        Ok(Self { in_features, out_features, weight, bias })
    }

    pub fn seeded(seed: u64, name: &str, in_features: usize, out_features: usize) -> Self {
        let weight = uniform_fan_in(&mut layer_rng(seed, name), in_features * out_features, in_features);
        Self { in_features, out_features, weight, bias: vec![0.0; out_features] }
    }

    pub fn in_features(&self) -> usize {
        self.in_features
    }

    pub fn out_features(&self) -> usize {
        self.out_features
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.in_features, "linear input width");
        (0..self.out_features)
            .map(|o| {
                let row = &self.weight[o * self.in_features..(o + 1) * self.in_features];
                self.bias[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }
}

impl Parameters for Linear {
    fn visit(&self, prefix: &str, f: &mut ParamVisitor<'_>) {
        f(&format!("{prefix}.weight"), &[self.out_features, self.in_features], &self.weight);
        f(&format!("{prefix}.bias"), &[self.out_features], &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut ParamVisitorMut<'_>) {
        f(&format!("{prefix}.weight"), &[self.out_features, self.in_features], &mut self.weight);
        f(&format!("{prefix}.bias"), &[self.out_features], &mut self.bias);
    }
}

pub(crate) fn relu_in_place(t: &mut ImageTensor) {
    t.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Nearest-neighbour ×2 upsampling.
pub(crate) fn upsample2(x: &ImageTensor) -> ImageTensor {
    let (c, h, w) = x.shape();
    ImageTensor::from_fn(c, 2 * h, 2 * w, |ch, y, xx| x.get(ch, y / 2, xx / 2))
}
