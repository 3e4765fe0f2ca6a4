//! Codec building blocks: GDN/IGDN, causally masked convolutions and the
//! squeeze-and-excitation gate.

use crate::error::{Error, Result};
use crate::tensors::{Reduce, Tensor, Var};

/// Lower bound enforced on GDN offsets after every optimizer step.
pub const GDN_BETA_MIN: f64 = 1e-6;

/// Divisive normalisation parameters for `C` channels.
#[derive(Clone, Debug)]
pub struct GdnParams {
    pub beta: Var,
    /// `[C, C]`, row `i` mixes the squared inputs seen by output channel `i`.
    pub gamma: Var,
    pub inverse: bool,
}

/// `y_i = x_i / sqrt(beta_i + sum_j gamma_ij x_j^2)`, or the product form when
/// `inverse` is set. Applied independently at every spatial position.
pub fn gdn(input: &Var, params: &GdnParams) -> Result<Var> {
    let (h, w, c) = input.value().hwc()?;
    if params.beta.value().len() != c || params.gamma.shape() != [c, c] {
        return Err(Error::Shape(format!(
            "gdn params beta {:?} gamma {:?} for {c} channels",
            params.beta.shape(),
            params.gamma.shape()
        )));
    }
    let power = if params.inverse { 0.5 } else { -0.5 };
    let x = input.value().data();
    let beta = params.beta.value().data();
    let gamma = params.gamma.value().data();
    let mut y = vec![0.0; x.len()];
    let mut norm = vec![0.0; x.len()];
    let mut factor = vec![0.0; x.len()];
    let mut sq = vec![0.0; c];
    for pix in 0..h * w {
        let xs = &x[pix * c..(pix + 1) * c];
        for (s, &v) in sq.iter_mut().zip(xs) {
            *s = v * v;
        }
        for i in 0..c {
            let row = &gamma[i * c..(i + 1) * c];
            let mut n = beta[i];
            for (g, s) in row.iter().zip(&sq) {
                n += g * s;
            }
            let f = if params.inverse { n.sqrt() } else { 1.0 / n.sqrt() };
            norm[pix * c + i] = n;
            factor[pix * c + i] = f;
            y[pix * c + i] = xs[i] * f;
        }
    }
    let out = Tensor::from_parts(vec![h, w, c], y);
    let (xv, gv) = (input.clone(), params.gamma.clone());
    Ok(Var::record(
        if params.inverse { "igdn" } else { "gdn" },
        out,
        vec![input.clone(), params.beta.clone(), params.gamma.clone()],
        move |g, need| {
            let x = xv.value().data();
            let gamma = gv.value().data();
            let gd = g.data();
            let mut gx = vec![0.0; x.len()];
            let mut gbeta = vec![0.0; c];
            let mut ggamma = vec![0.0; c * c];
            let mut t = vec![0.0; c];
            for pix in 0..h * w {
                let base = pix * c;
                for i in 0..c {
                    t[i] = gd[base + i] * x[base + i] * power * factor[base + i] / norm[base + i];
                }
                for j in 0..c {
                    let xj = x[base + j];
                    let mut s = 0.0;
                    for i in 0..c {
                        s += t[i] * gamma[i * c + j];
                    }
                    gx[base + j] = gd[base + j] * factor[base + j] + 2.0 * xj * s;
                }
                if need[1] || need[2] {
                    for i in 0..c {
                        gbeta[i] += t[i];
                        if need[2] {
                            let row = &mut ggamma[i * c..(i + 1) * c];
                            for j in 0..c {
                                let xj = x[base + j];
                                row[j] += t[i] * xj * xj;
                            }
                        }
                    }
                }
            }
            vec![
                need[0].then(|| Tensor::from_parts(vec![h, w, c], gx)),
                need[1].then(|| Tensor::from_parts(vec![c], gbeta)),
                need[2].then(|| Tensor::from_parts(vec![c, c], ggamma)),
            ]
        },
    ))
}

/// Projects GDN parameters back onto the feasible set in place.
pub fn reproject_gdn(beta: &mut Tensor, gamma: &mut Tensor) {
    for b in beta.data_mut() {
        *b = b.max(GDN_BETA_MIN);
    }
    for g in gamma.data_mut() {
        *g = g.max(0.0);
    }
}

/// Which taps of a `k x k` kernel survive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum MaskType {
    /// Strictly raster-earlier taps.
    A,
    /// Raster-earlier taps plus the centre.
    B,
    /// The four edge-adjacent neighbours (checkerboard non-anchor context).
    Cross,
}

impl MaskType {
    /// `k x k` binary pattern, row-major.
    pub fn pattern(self, k: usize) -> Vec<f64> {
        let c = k / 2;
        let mut p = vec![0.0; k * k];
        for ky in 0..k {
            for kx in 0..k {
                let keep = match self {
                    MaskType::A => ky < c || (ky == c && kx < c),
                    MaskType::B => ky < c || (ky == c && kx <= c),
                    MaskType::Cross => (ky.abs_diff(c) + kx.abs_diff(c)) == 1,
                };
                p[ky * k + kx] = if keep { 1.0 } else { 0.0 };
            }
        }
        p
    }

    /// Full `[k, k, cin, cout]` mask.
    pub fn kernel_mask(self, k: usize, cin: usize, cout: usize) -> Tensor {
        let pat = self.pattern(k);
        let mut data = Vec::with_capacity(k * k * cin * cout);
        for &p in &pat {
            data.resize(data.len() + cin * cout, p);
        }
        Tensor::from_parts(vec![k, k, cin, cout], data)
    }
}

#[derive(Clone, Debug)]
pub struct MaskedKernel {
    pub kernel: Var,
    pub mask_type: MaskType,
}

impl MaskedKernel {
    /// Kernel with the mask multiplied in. Called on every forward so that
    /// whatever the optimizer wrote into masked taps is ignored.
    pub fn effective(&self) -> Result<Var> {
        let s = self.kernel.shape();
        let mask = self.mask_type.kernel_mask(s[0], s[2], s[3]);
        self.kernel.mul(&Var::constant(mask))
    }
}

/// Stride-1 convolution with a masked kernel.
pub fn masked_conv(input: &Var, mk: &MaskedKernel) -> Result<Var> {
    input.conv2d(&mk.effective()?, 1, false)
}

/// Squeeze-and-excitation weights: `w1` is `[C, C/r]`, `w2` is `[C/r, C]`.
#[derive(Clone, Debug)]
pub struct SeParams {
    pub w1: Var,
    pub w2: Var,
}

impl SeParams {
    pub fn check(&self, c: usize) -> Result<()> {
        match (self.w1.shape(), self.w2.shape()) {
            ([a, b], [b2, a2]) if *a == c && *a2 == c && b == b2 => Ok(()),
            (s1, s2) => Err(Error::Shape(format!("se weights {s1:?}/{s2:?} for {c} channels"))),
        }
    }
}

/// Bottleneck width for `channels` at reduction `r`.
pub fn se_hidden(channels: usize, r: usize) -> Result<usize> {
    if r == 0 || channels % r != 0 {
        return Err(Error::Config(format!("SE reduction {r} does not divide {channels} channels")));
    }
    Ok(channels / r)
}

/// Channel gates `sigmoid(relu(s W1) W2)` from the per-channel spatial mean `s`.
pub fn se_gates(input: &Var, params: &SeParams) -> Result<Var> {
    let (_, _, c) = input.value().hwc()?;
    params.check(c)?;
    let s = input.reduce(Reduce::Mean, &[0, 1])?.reshape(&[1, c])?;
    s.matmul(&params.w1)?.relu().matmul(&params.w2)?.sigmoid().reshape(&[c])
}

pub fn se_block(input: &Var, params: &SeParams) -> Result<Var> {
    input.mul_channels(&se_gates(input, params)?)
}
