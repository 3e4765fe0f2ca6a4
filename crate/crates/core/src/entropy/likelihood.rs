use crate::entropy::{ElementParams, EntropyVariant, SIGMA_MIN};
use crate::error::{Error, Result};
use crate::tensors::scalar::softplus;
use crate::tensors::{Tensor, Var};

/// Differentiable unit-bin mass of `yhat` under `N(mu, sigma^2)`; `yhat` need
/// not be an integer offset from `mu` (noise-relaxed training).
pub fn gaussian_likelihood(yhat: &Var, mu: &Var, sigma: &Var) -> Result<Var> {
    let v = yhat.sub(mu)?.abs();
    let upper = v.affine(-1.0, 0.5).div(sigma)?.normal_cdf();
    let lower = v.affine(-1.0, -0.5).div(sigma)?.normal_cdf();
    upper.sub(&lower)
}

/// Softmax across mixture components, element by element.
pub fn softmax_weights(logits: &[Var]) -> Result<Vec<Var>> {
    let first = logits.first().ok_or_else(|| Error::Shape("softmax of no logits".into()))?;
    let mut max = first.value().clone();
    for l in &logits[1..] {
        max = max.zip_map(l.value(), f64::max);
    }
    let max = Var::constant(max);
    let exps = logits.iter().map(|l| l.sub(&max).map(|d| d.exp())).collect::<Result<Vec<_>>>()?;
    let mut total = exps[0].clone();
    for e in &exps[1..] {
        total = total.add(e)?;
    }
    exps.iter().map(|e| e.div(&total)).collect()
}

pub fn gmm_likelihood(yhat: &Var, means: &[Var], sigmas: &[Var], weights: &[Var]) -> Result<Var> {
    let mut acc: Option<Var> = None;
    for ((m, s), w) in means.iter().zip(sigmas).zip(weights) {
        let term = w.mul(&gaussian_likelihood(yhat, m, s)?)?;
        acc = Some(match acc {
            None => term,
            Some(a) => a.add(&term)?,
        });
    }
    acc.ok_or_else(|| Error::Shape("mixture with no components".into()))
}

/// Per-element conditional distribution over one latent slice.
#[derive(Clone, Debug)]
pub enum EntropyParams {
    Gaussian { mu: Var, sigma: Var },
    Mixture { means: Vec<Var>, sigmas: Vec<Var>, weights: Vec<Var> },
}

impl EntropyParams {
    /// Splits a parameter-network output `[H, W, P * width]` into distribution
    /// parameters. Scales are `softplus(raw) + SIGMA_MIN`.
    pub fn from_raw(raw: &Var, width: usize, variant: EntropyVariant) -> Result<Self> {
        let (_, _, c) = raw.value().hwc()?;
        if c != variant.params_per_channel() * width {
            return Err(Error::Shape(format!(
                "parameter tensor has {c} channels, expected {} for width {width}",
                variant.params_per_channel() * width
            )));
        }
        let block = |i: usize| raw.slice_channels(i * width, (i + 1) * width);
        let scale = |v: Var| v.softplus().add_scalar(SIGMA_MIN);
        match variant {
            EntropyVariant::Gaussian => Ok(EntropyParams::Gaussian { mu: block(0)?, sigma: scale(block(1)?) }),
            EntropyVariant::Gmm { k } => {
                let means = (0..k).map(block).collect::<Result<Vec<_>>>()?;
                let sigmas = (k..2 * k).map(|i| block(i).map(scale)).collect::<Result<Vec<_>>>()?;
                let logits = (2 * k..3 * k).map(block).collect::<Result<Vec<_>>>()?;
                Ok(EntropyParams::Mixture { means, sigmas, weights: softmax_weights(&logits)? })
            }
        }
    }

    pub fn likelihood(&self, yhat: &Var) -> Result<Var> {
        match self {
            EntropyParams::Gaussian { mu, sigma } => gaussian_likelihood(yhat, mu, sigma),
            EntropyParams::Mixture { means, sigmas, weights } => gmm_likelihood(yhat, means, sigmas, weights),
        }
    }

    /// Mean used for mean-centred coding (mixture: weighted mean).
    pub fn mean(&self) -> Tensor {
        match self {
            EntropyParams::Gaussian { mu, .. } => mu.value().clone(),
            EntropyParams::Mixture { means, weights, .. } => {
                let mut acc = Tensor::zeros(means[0].shape());
                for (m, w) in means.iter().zip(weights) {
                    acc.add_assign(&m.value().zip_map(w.value(), |a, b| a * b));
                }
                acc
            }
        }
    }
}

/// Coding distribution for channel `c` of one pixel, read from that pixel's
/// raw parameter-network output (`P * width` values, channel-major blocks as
/// in [`EntropyParams::from_raw`]).
pub fn element_params(raw_pixel: &[f64], c: usize, width: usize, variant: EntropyVariant) -> ElementParams {
    let scale = |r: f64| softplus(r) + SIGMA_MIN;
    match variant {
        EntropyVariant::Gaussian => ElementParams::Gaussian { mu: raw_pixel[c], sigma: scale(raw_pixel[width + c]) },
        EntropyVariant::Gmm { k } => {
            let logits: Vec<f64> = (0..k).map(|i| raw_pixel[(2 * k + i) * width + c]).collect();
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            ElementParams::Mixture(
                (0..k)
                    .map(|i| (exps[i] / total, raw_pixel[i * width + c], scale(raw_pixel[(k + i) * width + c])))
                    .collect(),
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::{gaussian_bin_mass, gmm_bin_mass, Component};

    fn t(v: &[f64]) -> Var {
        Var::constant(Tensor::new(vec![1, 1, v.len()], v.to_vec()).unwrap())
    }

    #[test]
    fn single_component_mixture_equals_gaussian() {
        let raw_g = t(&[0.3, -0.2, 1.1, 0.4]);
        let raw_m = t(&[0.3, -0.2, 1.1, 0.4, 5.0, -3.0]);
        let yhat = t(&[0.9, -1.6]);
        let g = EntropyParams::from_raw(&raw_g, 2, EntropyVariant::Gaussian).unwrap();
        let m = EntropyParams::from_raw(&raw_m, 2, EntropyVariant::Gmm { k: 1 }).unwrap();
        if let EntropyParams::Mixture { weights, .. } = &m {
            assert_eq!(weights[0].value().data(), &[1.0, 1.0]);
        }
        let lg = g.likelihood(&yhat).unwrap();
        let lm = m.likelihood(&yhat).unwrap();
        for (a, b) in lg.value().data().iter().zip(lm.value().data()) {
            assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn var_mass_matches_scalar_at_integers() {
        let mu = t(&[0.25]);
        let sigma = t(&[1.3]);
        for s in -4..=4 {
            let y = t(&[s as f64 + 0.25]);
            let v = gaussian_likelihood(&y, &mu, &sigma).unwrap().value().item();
            assert!((v - gaussian_bin_mass(s, 0.0, 1.3)).abs() < 1e-15);
        }
    }

    #[test]
    fn element_params_mixture_weights_normalized() {
        let raw = [0.1, 0.2, -0.5, 1.0, 0.0, 2.0, 0.3, -1.2, 0.7];
        let p = element_params(&raw, 0, 1, EntropyVariant::Gmm { k: 3 });
        let ElementParams::Mixture(c) = &p else { unreachable!() };
        let total: f64 = c.iter().map(|x| x.0).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(c.iter().all(|x| x.0 > 0.0));
        let comps: Vec<Component> =
            c.iter().map(|&(w, mu, s)| Component { weight: w, delta: mu, sigma: s }).collect();
        let brute: f64 = c.iter().map(|&(w, mu, s)| w * gaussian_bin_mass(2, mu, s)).sum();
        assert!((gmm_bin_mass(2, &comps) - brute).abs() < 1e-15);
    }
}
