use rand::Rng;

use crate::entropy::{SYMBOL_LIMIT, TAIL_MASS};
use crate::error::{Error, Result};
use crate::tensors::scalar::{sigmoid, softplus};
use crate::tensors::{Tensor, Var};

/// Unit widths through the per-channel CDF chain: scalar in, three hidden
/// layers of width 3, scalar logit out.
const WIDTHS: [usize; 5] = [1, 3, 3, 3, 1];
const LAYERS: usize = WIDTHS.len() - 1;
const INIT_SCALE: f64 = 1.0;

/// Learned per-channel density for the side latent.
///
/// Each channel owns a monotone map `v -> logit(CDF(v))` built from
/// positive-weight affine layers (softplus-reparameterised) interleaved with
/// `h + tanh(a) * tanh(h)` units, which are monotone because `|tanh(a)| < 1`.
#[derive(Clone, Debug)]
pub struct FactorizedPrior {
    channels: usize,
    /// `matrices[l]` is `[out, in, C]`.
    matrices: Vec<Var>,
    /// `biases[l]` is `[out, C]`.
    biases: Vec<Var>,
    /// `factors[l]` is `[out, C]` for the hidden layers.
    factors: Vec<Var>,
}

impl FactorizedPrior {
    /// Parameter names and initial values.
    pub fn init(channels: usize, rng: &mut impl Rng) -> Vec<(String, Tensor)> {
        let scale = INIT_SCALE.powf(1.0 / LAYERS as f64);
        let mut out = Vec::new();
        for l in 0..LAYERS {
            let (fin, fout) = (WIDTHS[l], WIDTHS[l + 1]);
            let m = (1.0 / scale / fout as f64).exp_m1().ln();
            out.push((format!("matrix{l}"), Tensor::full(&[fout, fin, channels], m)));
            out.push((
                format!("bias{l}"),
                Tensor::from_fn(&[fout, channels], |_| rng.gen::<f64>() - 0.5),
            ));
            if l + 1 < LAYERS {
                out.push((format!("factor{l}"), Tensor::zeros(&[fout, channels])));
            }
        }
        out
    }

    /// Builds the prior from named parameters (as produced by [`Self::init`]).
    pub fn from_params(channels: usize, mut get: impl FnMut(&str) -> Result<Var>) -> Result<Self> {
        let mut matrices = Vec::new();
        let mut biases = Vec::new();
        let mut factors = Vec::new();
        for l in 0..LAYERS {
            let (fin, fout) = (WIDTHS[l], WIDTHS[l + 1]);
            let m = get(&format!("matrix{l}"))?;
            let b = get(&format!("bias{l}"))?;
            if m.shape() != [fout, fin, channels] || b.shape() != [fout, channels] {
                return Err(Error::Shape(format!("factorized prior layer {l} has wrong shape")));
            }
            matrices.push(m);
            biases.push(b);
            if l + 1 < LAYERS {
                let f = get(&format!("factor{l}"))?;
                if f.shape() != [fout, channels] {
                    return Err(Error::Shape(format!("factorized prior factor {l} has wrong shape")));
                }
                factors.push(f);
            }
        }
        Ok(Self { channels, matrices, biases, factors })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    fn row(v: &Var, idx: usize, c: usize) -> Result<Var> {
        v.slice_flat(idx * c, c)
    }

    /// Differentiable logits of the CDF at every element of `v` (`[.., C]`).
    pub fn logits(&self, v: &Var) -> Result<Var> {
        let c = self.channels;
        if v.shape().last() != Some(&c) {
            return Err(Error::Shape(format!("prior over {c} channels applied to {:?}", v.shape())));
        }
        let mut units = vec![v.clone()];
        for l in 0..LAYERS {
            let (fin, fout) = (WIDTHS[l], WIDTHS[l + 1]);
            let mut next = Vec::with_capacity(fout);
            for i in 0..fout {
                let mut acc: Option<Var> = None;
                for (j, u) in units.iter().enumerate().take(fin) {
                    let w = Self::row(&self.matrices[l], i * fin + j, c)?.softplus();
                    let term = u.mul_channels(&w)?;
                    acc = Some(match acc {
                        None => term,
                        Some(a) => a.add(&term)?,
                    });
                }
                let mut h = acc.expect("fin >= 1").add_channels(&Self::row(&self.biases[l], i, c)?)?;
                if l + 1 < LAYERS {
                    let a = Self::row(&self.factors[l], i, c)?.tanh();
                    h = h.add(&h.tanh().mul_channels(&a)?)?;
                }
                next.push(h);
            }
            units = next;
        }
        Ok(units.pop().expect("one output unit"))
    }

    /// Differentiable unit-bin mass at every element of `v`.
    pub fn likelihood(&self, v: &Var) -> Result<Var> {
        let lower = self.logits(&v.add_scalar(-0.5))?;
        let upper = self.logits(&v.add_scalar(0.5))?;
        // Flip to the side where both sigmoids are small for precision.
        let sign = lower.value().zip_map(upper.value(), |a, b| if a + b > 0.0 { -1.0 } else { 1.0 });
        let sign = Var::constant(sign);
        let hi = upper.mul(&sign)?.sigmoid();
        let lo = lower.mul(&sign)?.sigmoid();
        Ok(hi.sub(&lo)?.abs())
    }

    /// Scalar logit for channel `c`.
    pub fn logit(&self, v: f64, c: usize) -> f64 {
        let ch = self.channels;
        let mut units = [v, 0.0, 0.0];
        for l in 0..LAYERS {
            let (fin, fout) = (WIDTHS[l], WIDTHS[l + 1]);
            let m = self.matrices[l].value().data();
            let b = self.biases[l].value().data();
            let mut next = [0.0; 3];
            for (i, n) in next.iter_mut().enumerate().take(fout) {
                let mut h = 0.0;
                for (j, &u) in units.iter().enumerate().take(fin) {
                    h += softplus(m[(i * fin + j) * ch + c]) * u;
                }
                h += b[i * ch + c];
                if l + 1 < LAYERS {
                    let a = self.factors[l].value().data()[i * ch + c].tanh();
                    h += h.tanh() * a;
                }
                *n = h;
            }
            units = next;
        }
        units[0]
    }

    pub fn cdf(&self, v: f64, c: usize) -> f64 {
        sigmoid(self.logit(v, c))
    }

    /// Mass of the unit bin centred on `symbol` for channel `c`.
    pub fn bin_mass(&self, symbol: i32, c: usize) -> f64 {
        let lower = self.logit(symbol as f64 - 0.5, c);
        let upper = self.logit(symbol as f64 + 0.5, c);
        let sign = if lower + upper > 0.0 { -1.0 } else { 1.0 };
        (sigmoid(sign * upper) - sigmoid(sign * lower)).abs()
    }

    /// Smallest symbol range (always containing 0) leaving at most
    /// `TAIL_MASS / 2` on each side, capped at +-[`SYMBOL_LIMIT`].
    pub fn coding_bounds(&self, c: usize) -> (i32, i32) {
        let half = TAIL_MASS / 2.0;
        let mut lo = 0;
        while lo > -SYMBOL_LIMIT && self.cdf(lo as f64 - 0.5, c) > half {
            lo -= 1;
        }
        let mut hi = 0;
        while hi < SYMBOL_LIMIT && sigmoid(-self.logit(hi as f64 + 0.5, c)) > half {
            hi += 1;
        }
        (lo, hi)
    }
}
