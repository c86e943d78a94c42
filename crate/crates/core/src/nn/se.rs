use crate::error::{Error, Result};
use crate::nn::conv::{sigmoid, Linear};
use crate::nn::params::{ParamVisitor, ParamVisitorMut, Parameters};
use crate::tensor::ImageTensor;

/// Squeeze-and-excitation channel reweighting.
///
/// Global average pool, then `Linear(c, c/r) → ReLU → Linear(c/r, c) → sigmoid`,
/// and each channel is scaled by its gate.
#[derive(Debug, Clone, PartialEq)]
pub struct SEBlock {
    channels: usize,
    squeeze: Linear,
    excite: Linear,
}

impl SEBlock {
    pub fn new(squeeze: Linear, excite: Linear) -> Result<Self> {
        let channels = squeeze.in_features();
        if excite.in_features() != squeeze.out_features() || excite.out_features() != channels {
            return Err(Error::dim(format!(
                "SE layers {}->{} and {}->{} do not chain",
                squeeze.in_features(),
                squeeze.out_features(),
                excite.in_features(),
                excite.out_features()
            )));
        }
        Ok(Self { channels, squeeze, excite })
    }

    pub fn seeded(seed: u64, name: &str, channels: usize, reduction: usize) -> Self {
        let reduced = (channels / reduction.max(1)).max(1);
        Self {
            channels,
            squeeze: Linear::seeded(seed, &format!("{name}.squeeze"), channels, reduced),
            excite: Linear::seeded(seed, &format!("{name}.excite"), reduced, channels),
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Per-channel gates in `(0, 1)` for input `x`.
    pub fn gates(&self, x: &ImageTensor) -> Result<Vec<f64>> {
        if x.channels() != self.channels {
            return Err(Error::dim(format!(
                "SE block expects {} channels, got {}",
                self.channels,
                x.channels()
            )));
        }
        let pooled: Vec<f64> = (0..self.channels)
            .map(|c| x.plane(c).iter().sum::<f64>() / (x.height() * x.width()) as f64)
            .collect();
        let hidden: Vec<f64> = self.squeeze.forward(&pooled).into_iter().map(|v| v.max(0.0)).collect();
        Ok(self.excite.forward(&hidden).into_iter().map(sigmoid).collect())
    }

    pub fn forward(&self, x: &ImageTensor) -> Result<ImageTensor> {
        let gates = self.gates(x)?;
        let mut out = x.clone();
        for (c, g) in gates.iter().enumerate() {
            out.plane_mut(c).iter_mut().for_each(|v| *v *= g);
        }
        Ok(out)
    }
}

impl Parameters for SEBlock {
    fn visit(&self, prefix: &str, f: &mut ParamVisitor<'_>) {
        self.squeeze.visit(&format!("{prefix}.squeeze"), f);
        self.excite.visit(&format!("{prefix}.excite"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut ParamVisitorMut<'_>) {
        self.squeeze.visit_mut(&format!("{prefix}.squeeze"), f);
        self.excite.visit_mut(&format!("{prefix}.excite"), f);
    }
}

/// Free-function form of [`SEBlock::forward`].
pub fn se_forward(block: &SEBlock, x: &ImageTensor) -> Result<ImageTensor> {
    block.forward(x)
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(seed: u64, c: usize) -> ImageTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageTensor::from_fn(c, 5, 6, |_, _, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn saturated_gates_pass_through() {
        let squeeze = Linear::new(4, 1, vec![0.0; 4], vec![0.0]).unwrap();
        let excite = Linear::new(1, 4, vec![0.0; 4], vec![1000.0; 4]).unwrap();
        let block = SEBlock::new(squeeze, excite).unwrap();
        let x = random(1, 4);
        assert_eq!(block.forward(&x).unwrap(), x);
    }

    #[test]
    fn zero_channel_stays_zero() {
        let block = SEBlock::seeded(3, "se", 8, 4);
        let mut x = random(2, 8);
        x.plane_mut(5).iter_mut().for_each(|v| *v = 0.0);
        let y = block.forward(&x).unwrap();
        assert!(y.plane(5).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matches_pool_affine_sigmoid_oracle() {
        let block = SEBlock::seeded(7, "se", 8, 4);
        let x = random(3, 8);
        let y = block.forward(&x).unwrap();
        let (sq, ex) = (&block.squeeze, &block.excite);
        let n = 30.0;
        let pooled: Vec<f64> = (0..8).map(|c| x.plane(c).iter().sum::<f64>() / n).collect();
        let mut hidden = [0.0; 2];
        for (j, h) in hidden.iter_mut().enumerate() {
            let mut acc = sq.bias()[j];
            for c in 0..8 {
                acc += sq.weight()[j * 8 + c] * pooled[c];
            }
            *h = f64::max(acc, 0.0);
        }
        for c in 0..8 {
            let mut acc = ex.bias()[c];
            for j in 0..2 {
                acc += ex.weight()[c * 2 + j] * hidden[j];
            }
            let gate = 1.0 / (1.0 + (-acc).exp());
            assert!(gate > 0.0 && gate < 1.0);
            for i in 0..30 {
                assert!((y.plane(c)[i] - gate * x.plane(c)[i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn never_amplifies() {
        for seed in 0..20 {
            let block = SEBlock::seeded(seed, "se", 6, 4);
            let x = random(seed + 100, 6);
            let y = block.forward(&x).unwrap();
            for c in 0..6 {
                let nx: f64 = x.plane(c).iter().map(|v| v.abs()).sum();
                let ny: f64 = y.plane(c).iter().map(|v| v.abs()).sum();
                assert!(ny <= nx);
            }
            assert!(block.gates(&x).unwrap().iter().all(|&g| g > 0.0 && g < 1.0));
        }
        assert!(SEBlock::seeded(0, "se", 6, 4).forward(&random(0, 5)).is_err());
    }
}
