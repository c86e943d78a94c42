use crate::error::{Error, Result};
use crate::nn::conv::{relu_in_place, sigmoid, Conv2D};
use crate::nn::params::{ParamVisitor, ParamVisitorMut, Parameters};
use crate::tensor::ImageTensor;

/// Output nonlinearity of the candidate state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Tanh,
    /// `bound * tanh(v / bound)`: tanh stretched to `(-bound, bound)`.
    ScaledTanh(f64),
    Identity,
}

impl Activation {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::ScaledTanh(b) => b * (v / b).tanh(),
            Activation::Identity => v,
        }
    }
}

/// Two stacked 3×3 convolutions with a ReLU between them.
#[derive(Debug, Clone, PartialEq)]
pub struct GateConv {
    pub first: Conv2D,
    pub second: Conv2D,
}

impl GateConv {
    fn seeded(seed: u64, name: &str, inputs: usize, width: usize, outputs: usize) -> Self {
        Self {
            first: Conv2D::seeded(seed, &format!("{name}.0"), inputs, width, 1),
            second: Conv2D::seeded(seed, &format!("{name}.1"), width, outputs, 1),
        }
    }

    pub fn forward(&self, x: &ImageTensor) -> Result<ImageTensor> {
        let mut hidden = self.first.forward(x)?;
        relu_in_place(&mut hidden);
        self.second.forward(&hidden)
    }
}

impl Parameters for GateConv {
    fn visit(&self, prefix: &str, f: &mut ParamVisitor<'_>) {
        self.first.visit(&format!("{prefix}.0"), f);
        self.second.visit(&format!("{prefix}.1"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut ParamVisitorMut<'_>) {
        self.first.visit_mut(&format!("{prefix}.0"), f);
        self.second.visit_mut(&format!("{prefix}.1"), f);
    }
}

/// Which gating limit [`ConvGRUCell::gating_limit`] should hard-wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GatingLimit {
    /// `z ≡ 1` and the candidate reproduces the input: the step returns `x`.
    UpdateAll,
    /// `z ≡ 0`: the step returns `h` unchanged.
    Freeze,
}

/// Convolutional GRU over a `channels`-plane state (2 for flows):
///
/// ```text
/// z  = σ(G_z([h, x]))
/// r  = σ(G_r([h, x]))
/// ĥ  = act(G_h([r ⊙ h, x]))
/// h' = (1 - z) ⊙ h + z ⊙ ĥ
/// ```
///
/// Each `G` is a [`GateConv`] of hidden width `gate_width`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGRUCell {
    channels: usize,
    pub update: GateConv,
    pub reset: GateConv,
    pub candidate: GateConv,
    pub activation: Activation,
}

impl ConvGRUCell {
    pub fn seeded(seed: u64, channels: usize, gate_width: usize, activation: Activation) -> Self {
        let inputs = 2 * channels;
        Self {
            channels,
            update: GateConv::seeded(seed, "gru.update", inputs, gate_width, channels),
            reset: GateConv::seeded(seed, "gru.reset", inputs, gate_width, channels),
            candidate: GateConv::seeded(seed, "gru.candidate", inputs, gate_width, channels),
            activation,
        }
    }

    /// Builds a cell whose weights pin the gates at one of their limits.
    ///
    /// The update gate has zero kernels and a ±1000 bias, which saturates the
    /// sigmoid to exactly 0 or 1 in `f64`. For [`GatingLimit::UpdateAll`] the
    /// candidate copies `x` through the ReLU as `relu(x) - relu(-x)`, with an
    /// identity output activation. Needs `gate_width >= 2 * channels`.
    pub fn gating_limit(limit: GatingLimit, channels: usize, gate_width: usize) -> Result<Self> {
        if gate_width < 2 * channels {
            return Err(Error::param(format!(
                "gate width {gate_width} cannot carry {channels} signed channels"
            )));
        }
        let inputs = 2 * channels;
        let bias = match limit {
            GatingLimit::UpdateAll => 1000.0,
            GatingLimit::Freeze => -1000.0,
        };
        let mut update = GateConv {
            first: Conv2D::zeroed(inputs, gate_width, 1),
            second: Conv2D::zeroed(gate_width, channels, 1),
        };
        for c in 0..channels {
            update.second.set_bias(c, bias);
        }
        let reset = update.clone();
        let mut candidate = GateConv {
            first: Conv2D::zeroed(inputs, gate_width, 1),
            second: Conv2D::zeroed(gate_width, channels, 1),
        };
        for c in 0..channels {
            // x occupies input planes channels..2*channels of [r ⊙ h, x].
            candidate.first.set_weight(2 * c, channels + c, 1, 1, 1.0);
            candidate.first.set_weight(2 * c + 1, channels + c, 1, 1, -1.0);
            candidate.second.set_weight(c, 2 * c, 1, 1, 1.0);
            candidate.second.set_weight(c, 2 * c + 1, 1, 1, -1.0);
        }
        Ok(Self { channels, update, reset, candidate, activation: Activation::Identity })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// One recurrent step. Returns `(h', z, r, ĥ)`.
    pub fn step_detailed(
        &self,
        h: &ImageTensor,
        x: &ImageTensor,
    ) -> Result<(ImageTensor, ImageTensor, ImageTensor, ImageTensor)> {
        h.ensure_same_shape(x, "gru_step")?;
        if h.channels() != self.channels {
            return Err(Error::dim(format!(
                "GRU state has {} channels, cell expects {}",
                h.channels(),
                self.channels
            )));
        }
        let hx = ImageTensor::concat_channels(&[h, x])?;
        let z = self.update.forward(&hx)?.map(sigmoid);
        let r = self.reset.forward(&hx)?.map(sigmoid);
        let rh = r.zip_map(h, |a, b| a * b)?;
        let act = self.activation;
        let cand = self.candidate.forward(&ImageTensor::concat_channels(&[&rh, x])?)?.map(|v| act.apply(v));
        let mut next = h.clone();
        for (((o, &zv), &hv), &cv) in next.data_mut().iter_mut().zip(z.data()).zip(h.data()).zip(cand.data()) {
            *o = (1.0 - zv) * hv + zv * cv;
        }
        Ok((next, z, r, cand))
    }

    pub fn step(&self, h: &ImageTensor, x: &ImageTensor) -> Result<ImageTensor> {
        Ok(self.step_detailed(h, x)?.0)
    }
}

impl Parameters for ConvGRUCell {
    fn visit(&self, prefix: &str, f: &mut ParamVisitor<'_>) {
        self.update.visit(&format!("{prefix}.update"), f);
        self.reset.visit(&format!("{prefix}.reset"), f);
        self.candidate.visit(&format!("{prefix}.candidate"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut ParamVisitorMut<'_>) {
        self.update.visit_mut(&format!("{prefix}.update"), f);
        self.reset.visit_mut(&format!("{prefix}.reset"), f);
        self.candidate.visit_mut(&format!("{prefix}.candidate"), f);
    }
}

/// Free-function form of [`ConvGRUCell::step`].
pub fn gru_step(cell: &ConvGRUCell, h: &ImageTensor, x: &ImageTensor) -> Result<ImageTensor> {
    cell.step(h, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(seed: u64, h: usize, w: usize) -> ImageTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageTensor::from_fn(2, h, w, |_, _, _| rng.gen_range(-3.0..3.0))
    }

    #[test]
    fn update_all_returns_input() {
        let cell = ConvGRUCell::gating_limit(GatingLimit::UpdateAll, 2, 8).unwrap();
        let (h, x) = (random(1, 6, 5), random(2, 6, 5));
        assert!(cell.step(&h, &x).unwrap().max_abs_diff(&x).unwrap() <= 1e-9);
    }

    #[test]
    fn freeze_returns_state() {
        let cell = ConvGRUCell::gating_limit(GatingLimit::Freeze, 2, 8).unwrap();
        let (h, x) = (random(3, 6, 5), random(4, 6, 5));
        assert!(cell.step(&h, &x).unwrap().max_abs_diff(&h).unwrap() <= 1e-9);
        assert!(ConvGRUCell::gating_limit(GatingLimit::Freeze, 2, 3).is_err());
    }

    /// Re-derives every gate with explicit per-pixel convolution sums.
    #[test]
    fn matches_gate_formula_oracle() {
        let cell = ConvGRUCell::seeded(17, 2, 8, Activation::Tanh);
        let (h, x) = (random(5, 5, 4), random(6, 5, 4));
        let out = cell.step(&h, &x).unwrap();

        fn conv_at(layer: &Conv2D, input: &dyn Fn(usize, isize, isize) -> f64, o: usize, y: usize, x: usize) -> f64 {
            let mut acc = layer.bias()[o];
            for i in 0..layer.in_channels() {
                for ky in 0..3 {
                    for kx in 0..3 {
                        acc += layer.weight_at(o, i, ky, kx)
                            * input(i, y as isize + ky as isize - 1, x as isize + kx as isize - 1);
                    }
                }
            }
            acc
        }
        let (hh, ww) = (5usize, 4usize);
        let inside = |y: isize, x: isize| y >= 0 && x >= 0 && (y as usize) < hh && (x as usize) < ww;
        let gate = |g: &GateConv, input: &dyn Fn(usize, isize, isize) -> f64, o: usize, y: usize, x: usize| {
            let hidden = |k: usize, yy: isize, xx: isize| {
                if inside(yy, xx) {
                    conv_at(&g.first, input, k, yy as usize, xx as usize).max(0.0)
                } else {
                    0.0
                }
            };
            conv_at(&g.second, &hidden, o, y, x)
        };
        let hx = |i: usize, y: isize, xx: isize| {
            if !inside(y, xx) {
                0.0
            } else if i < 2 {
                h.get(i, y as usize, xx as usize)
            } else {
                x.get(i - 2, y as usize, xx as usize)
            }
        };
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let r_at = |c: usize, y: usize, xx: usize| sig(gate(&cell.reset, &hx, c, y, xx));
        let rhx = |i: usize, y: isize, xx: isize| {
            if !inside(y, xx) {
                0.0
            } else if i < 2 {
                r_at(i, y as usize, xx as usize) * h.get(i, y as usize, xx as usize)
            } else {
                x.get(i - 2, y as usize, xx as usize)
            }
        };
        for c in 0..2 {
            for y in 0..hh {
                for xx in 0..ww {
                    let z = sig(gate(&cell.update, &hx, c, y, xx));
                    let cand = gate(&cell.candidate, &rhx, c, y, xx).tanh();
                    let expected = (1.0 - z) * h.get(c, y, xx) + z * cand;
                    assert!((out.get(c, y, xx) - expected).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn output_is_convex_combination() {
        for seed in 0..10 {
            let cell = ConvGRUCell::seeded(seed, 2, 8, Activation::ScaledTanh(4.0));
            let (h, x) = (random(seed + 10, 6, 6), random(seed + 20, 6, 6));
            let (next, z, r, cand) = cell.step_detailed(&h, &x).unwrap();
            assert!(z.data().iter().chain(r.data()).all(|&v| v > 0.0 && v < 1.0));
            for i in 0..next.len() {
                let (a, b) = (h.data()[i], cand.data()[i]);
                assert!(next.data()[i] >= a.min(b) - 1e-9 && next.data()[i] <= a.max(b) + 1e-9);
            }
        }
    }

    #[test]
    fn shape_errors() {
        let cell = ConvGRUCell::seeded(1, 2, 8, Activation::Tanh);
        assert!(cell.step(&random(1, 4, 4), &random(1, 4, 5)).is_err());
        let three = ImageTensor::zeros(3, 4, 4);
        assert!(cell.step(&three, &three).is_err());
    }
}
