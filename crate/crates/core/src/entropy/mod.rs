//! Quantisation, discretised likelihoods and rate.
//!
//! Every coded latent element is an integer symbol. Latents `y` are coded as
//! `round(y - mu)` about their predicted mean and reconstructed as
//! `symbol + mu`, so the bin masses below are always evaluated relative to
//! the coding centre.

mod factorized;
mod likelihood;

pub use factorized::FactorizedPrior;
pub use likelihood::{element_params, gaussian_likelihood, gmm_likelihood, softmax_weights, EntropyParams};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensors::scalar::{round_half_away, std_normal_cdf};
use crate::tensors::{Tensor, Var};

/// Smallest predicted scale.
pub const SIGMA_MIN: f64 = 0.11;
/// Probability mass allowed outside the coding range of one element.
pub const TAIL_MASS: f64 = 1.0 / 65536.0;
/// Masses are floored here before taking logs.
pub const MASS_FLOOR: f64 = 5.421_010_862_427_522e-20; // 2^-64
/// Coded symbols never leave `[-SYMBOL_LIMIT, SYMBOL_LIMIT]`.
pub const SYMBOL_LIMIT: i32 = 255;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EntropyVariant {
    Gaussian,
    Gmm { k: usize },
}

impl EntropyVariant {
    /// Parameter-network output channels per latent channel.
    pub fn params_per_channel(self) -> usize {
        match self {
            EntropyVariant::Gaussian => 2,
            EntropyVariant::Gmm { k } => 3 * k,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuantMode {
    Train,
    Infer,
}

/// Result of [`quantize`]; `symbols` is set in inference mode only.
#[derive(Clone, Debug)]
pub struct Quantized {
    pub yhat: Var,
    pub symbols: Option<Vec<i32>>,
}

/// Training: additive `U[-0.5, 0.5)` noise. Inference: mean-centred rounding,
/// half away from zero.
pub fn quantize(y: &Var, mu: &Tensor, mode: QuantMode, rng: &mut impl Rng) -> Result<Quantized> {
    if y.shape() != mu.shape() {
        return Err(Error::Shape(format!("quantize {:?} vs mean {:?}", y.shape(), mu.shape())));
    }
    match mode {
        QuantMode::Train => {
            let noise = Tensor::from_fn(y.shape(), |_| rng.gen::<f64>() - 0.5);
            Ok(Quantized { yhat: y.add(&Var::constant(noise))?, symbols: None })
        }
        QuantMode::Infer => {
            let symbols: Vec<i32> = y
                .value()
                .data()
                .iter()
                .zip(mu.data())
                .map(|(&v, &m)| round_half_away(v - m) as i32)
                .collect();
            let yhat = Tensor::from_fn(y.shape(), |i| symbols[i] as f64 + mu.data()[i]);
            Ok(Quantized { yhat: Var::constant(yhat), symbols: Some(symbols) })
        }
    }
}

/// Mass of the unit bin centred on `x` under `N(delta, sigma^2)`.
///
/// Evaluated on the lower tail of the folded distance so that far-out bins
/// keep full relative precision.
pub fn gaussian_mass_at(x: f64, delta: f64, sigma: f64) -> f64 {
    let v = (x - delta).abs();
    std_normal_cdf((0.5 - v) / sigma) - std_normal_cdf((-0.5 - v) / sigma)
}

/// `Phi((s + 0.5 - delta) / sigma) - Phi((s - 0.5 - delta) / sigma)`, where
/// `delta` is the distribution mean relative to the coding centre (0 for
/// mean-centred Gaussian coding).
pub fn gaussian_bin_mass(symbol: i32, delta: f64, sigma: f64) -> f64 {
    gaussian_mass_at(symbol as f64, delta, sigma)
}

/// One mixture component relative to the coding centre.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub delta: f64,
    pub sigma: f64,
}

pub fn gmm_bin_mass(symbol: i32, components: &[Component]) -> f64 {
    components
        .iter()
        .map(|c| c.weight * gaussian_bin_mass(symbol, c.delta, c.sigma))
        .sum()
}

/// Grid onto which coding parameters are snapped before table construction.
pub const PARAM_GRID: f64 = 4096.0;

pub fn snap(v: f64) -> f64 {
    (v * PARAM_GRID).round() / PARAM_GRID
}

/// Coding distribution of one latent element.
#[derive(Clone, Debug, PartialEq)]
pub enum ElementParams {
    Gaussian { mu: f64, sigma: f64 },
    Mixture(Vec<(f64, f64, f64)>),
}

impl ElementParams {
    /// Snaps every parameter to the 1/4096 grid. Scales stay above
    /// [`SIGMA_MIN`]; mixture weights are renormalised after snapping.
    pub fn snapped(&self) -> Result<Self> {
        let check = |v: f64| {
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Numerical(format!("non-finite entropy parameter {v}")))
            }
        };
        match self {
            ElementParams::Gaussian { mu, sigma } => Ok(ElementParams::Gaussian {
                mu: snap(check(*mu)?),
                sigma: snap(check(*sigma)?).max(SIGMA_MIN),
            }),
            ElementParams::Mixture(comps) => {
                let mut out = Vec::with_capacity(comps.len());
                for &(w, mu, sigma) in comps {
                    out.push((snap(check(w)?).max(0.0), snap(check(mu)?), snap(check(sigma)?).max(SIGMA_MIN)));
                }
                let total: f64 = out.iter().map(|c| c.0).sum();
                if total <= 0.0 {
                    // Every weight rounded to zero: fall back to uniform weights.
                    let k = out.len() as f64;
                    out.iter_mut().for_each(|c| c.0 = 1.0 / k);
                } else {
                    out.iter_mut().for_each(|c| c.0 /= total);
                }
                Ok(ElementParams::Mixture(out))
            }
        }
    }

    /// Value about which the element is rounded.
    pub fn center(&self) -> f64 {
        match self {
            ElementParams::Gaussian { mu, .. } => *mu,
            ElementParams::Mixture(comps) => snap(comps.iter().map(|c| c.0 * c.1).sum()),
        }
    }

    /// Components relative to [`Self::center`].
    pub fn components(&self) -> Vec<Component> {
        let c = self.center();
        match self {
            ElementParams::Gaussian { mu, sigma } => {
                vec![Component { weight: 1.0, delta: mu - c, sigma: *sigma }]
            }
            ElementParams::Mixture(comps) => comps
                .iter()
                .map(|&(w, mu, sigma)| Component { weight: w, delta: mu - c, sigma })
                .collect(),
        }
    }

    /// Inclusive symbol bounds: centre +- max(16 sigma, 4), capped at
    /// +-[`SYMBOL_LIMIT`]. For mixtures the widest component reach is used.
    pub fn bounds(&self) -> (i32, i32) {
        let reach = self
            .components()
            .iter()
            .map(|c| c.delta.abs() + 16.0 * c.sigma)
            .fold(4.0f64, f64::max);
        let b = (reach.ceil() as i64).min(SYMBOL_LIMIT as i64) as i32;
        (-b, b)
    }

    pub fn mass(&self, symbol: i32) -> f64 {
        match self {
            ElementParams::Gaussian { .. } => {
                let c = self.components()[0];
                gaussian_bin_mass(symbol, c.delta, c.sigma)
            }
            ElementParams::Mixture(_) => gmm_bin_mass(symbol, &self.components()),
        }
    }
}

/// Accumulates `-log2` masses; zero masses are floored and counted.
#[derive(Clone, Debug, Default)]
pub struct RateMeter {
    pub bits: f64,
    pub elements: usize,
    pub floored: usize,
}

impl RateMeter {
    pub fn add_mass(&mut self, mass: f64) {
        let m = if mass.is_nan() || mass < MASS_FLOOR {
            self.floored += 1;
            MASS_FLOOR
        } else {
            mass
        };
        self.bits -= m.log2();
        self.elements += 1;
    }
}

/// `-sum log2(mass)` over `masses` with flooring; returns bits and the
/// number of floored entries.
pub fn rate_bits(masses: impl IntoIterator<Item = f64>) -> (f64, usize) {
    let mut meter = RateMeter::default();
    for m in masses {
        meter.add_mass(m);
    }
    (meter.bits, meter.floored)
}

/// Differentiable `-sum log2(max(mass, floor))`.
pub fn rate_bits_var(mass: &Var) -> Var {
    mass.clamp_min(MASS_FLOOR).ln().sum().scale(-std::f64::consts::LOG2_E)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn infer_quantization_rounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let y = Var::constant(Tensor::new(vec![3], vec![1.4, 2.3, -2.5]).unwrap());
        let mu = Tensor::new(vec![3], vec![0.0, 2.3, 0.0]).unwrap();
        let q = quantize(&y, &mu, QuantMode::Infer, &mut rng).unwrap();
        assert_eq!(q.symbols.as_deref(), Some(&[1, 0, -3][..]));
        assert_eq!(q.yhat.value().data(), &[1.0, 2.3, -3.0]);
    }

    #[test]
    fn train_noise_is_centered() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 1_000_000;
        let y = Var::constant(Tensor::zeros(&[n]));
        let q = quantize(&y, &Tensor::zeros(&[n]), QuantMode::Train, &mut rng).unwrap();
        assert!(q.symbols.is_none());
        let d = q.yhat.value().data();
        let mean = d.iter().sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.002, "{mean}");
        assert!(d.iter().all(|&u| (-0.5..0.5).contains(&u)));
    }

    #[test]
    fn gaussian_unit_scale_center_bin() {
        // Phi(0.5) - Phi(-0.5) = erf(0.5 / sqrt 2)
        let want = libm::erf(0.5 / std::f64::consts::SQRT_2);
        let got = gaussian_bin_mass(0, 0.0, 1.0);
        assert!((got - want).abs() < 1e-15);
        assert!((got - 0.3829249).abs() < 1e-7);
    }

    #[test]
    fn gaussian_wide_scale() {
        let got = gaussian_bin_mass(0, 0.0, 100.0);
        let want = libm::erf(0.005 / std::f64::consts::SQRT_2);
        assert!((got - want).abs() < 1e-15);
        assert!((got - 0.0039894).abs() < 1e-7);
    }

    #[test]
    fn gaussian_masses_normalize() {
        for &sigma in &[0.11f64, 0.7, 3.0, 12.5] {
            let b = (40.0 * sigma).ceil() as i32;
            let total: f64 = (-b..=b).map(|s| gaussian_bin_mass(s, 0.0, sigma)).sum();
            assert!((total - 1.0).abs() < 1e-12, "sigma {sigma}: {total}");
        }
    }

    #[test]
    fn mixture_degenerate_cases() {
        let single = [Component { weight: 1.0, delta: 0.3, sigma: 1.7 }];
        let twin = [
            Component { weight: 0.5, delta: 0.3, sigma: 1.7 },
            Component { weight: 0.5, delta: 0.3, sigma: 1.7 },
        ];
        for s in -5..=5 {
            let g = gaussian_bin_mass(s, 0.3, 1.7);
            assert_eq!(gmm_bin_mass(s, &single), g);
            assert!((gmm_bin_mass(s, &twin) - g).abs() < 1e-16);
        }
    }

    #[test]
    fn rate_examples() {
        assert_eq!(rate_bits(vec![0.5; 10]).0, 10.0);
        assert_eq!(rate_bits([1.0]).0, 0.0);
        let (bits, floored) = rate_bits([0.0, 0.5]);
        assert_eq!(floored, 1);
        assert_eq!(bits, 65.0);
    }

    #[test]
    fn bounds_follow_scale() {
        let p = ElementParams::Gaussian { mu: 0.0, sigma: 0.11 };
        assert_eq!(p.bounds(), (-4, 4));
        let p = ElementParams::Gaussian { mu: 3.0, sigma: 2.0 };
        assert_eq!(p.bounds(), (-32, 32));
        let p = ElementParams::Gaussian { mu: 0.0, sigma: 100.0 };
        assert_eq!(p.bounds(), (-255, 255));
    }

    #[test]
    fn snapping_keeps_sigma_floor() {
        let p = ElementParams::Gaussian { mu: 0.123456, sigma: 0.11 }.snapped().unwrap();
        match p {
            ElementParams::Gaussian { mu, sigma } => {
                assert_eq!(mu * 4096.0, (mu * 4096.0).round());
                assert!(sigma >= SIGMA_MIN);
            }
            _ => unreachable!(),
        }
        assert!(ElementParams::Gaussian { mu: f64::NAN, sigma: 1.0 }.snapped().is_err());
    }
}
