use crate::error::{Error, Result};
use crate::eval::Image;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Psnr {
    Db(f64),
    /// Identical images.
    Lossless,
}

impl Psnr {
    /// Decibels, with `inf` for the lossless case.
    pub fn db(self) -> f64 {
        match self {
            Psnr::Db(v) => v,
            Psnr::Lossless => f64::INFINITY,
        }
    }
}

fn check_extents(a: &Image, b: &Image) -> Result<()> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::Shape(format!(
            "image extents differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

/// Mean squared error over every 8-bit sample.
pub fn mse_u8(a: &Image, b: &Image) -> Result<f64> {
    check_extents(a, b)?;
    let sum: u64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| {
            let d = i64::from(x) - i64::from(y);
            (d * d) as u64
        })
        .sum();
    Ok(sum as f64 / a.data.len() as f64)
}

/// `10 log10(255^2 / MSE)` over the full pixel array.
pub fn psnr(a: &Image, b: &Image) -> Result<Psnr> {
    let mse = mse_u8(a, b)?;
    if mse == 0.0 {
        return Ok(Psnr::Lossless);
    }
    Ok(Psnr::Db(10.0 * (255.0 * 255.0 / mse).log10()))
}

pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
const WINDOW: usize = 11;
const WINDOW_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MsSsim {
    pub score: f64,
    /// The image was too small for five scales and single-scale SSIM was used.
    pub single_scale: bool,
}

struct Plane {
    w: usize,
    h: usize,
    v: Vec<f64>,
}

impl Plane {
    fn downsample(&self) -> Plane {
        let (w, h) = (self.w / 2, self.h / 2);
        let mut v = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let at = |yy: usize, xx: usize| self.v[yy * self.w + xx];
                v.push((at(2 * y, 2 * x) + at(2 * y, 2 * x + 1) + at(2 * y + 1, 2 * x) + at(2 * y + 1, 2 * x + 1)) / 4.0);
            }
        }
        Plane { w, h, v }
    }
}

fn gaussian_window(n: usize) -> Vec<f64> {
    let c = (n / 2) as f64;
    let g: Vec<f64> = (0..n).map(|i| (-((i as f64 - c).powi(2)) / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp()).collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable 'valid' filtering.
fn filter(p: &Plane, g: &[f64]) -> Plane {
    let n = g.len();
    let (ow, oh) = (p.w - n + 1, p.h - n + 1);
    let mut tmp = vec![0.0; oh * p.w];
    for y in 0..oh {
        for x in 0..p.w {
            tmp[y * p.w + x] = g.iter().enumerate().map(|(k, &gk)| gk * p.v[(y + k) * p.w + x]).sum();
        }
    }
    let mut v = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            v[y * ow + x] = g.iter().enumerate().map(|(k, &gk)| gk * tmp[y * p.w + x + k]).sum();
        }
    }
    Plane { w: ow, h: oh, v }
}

/// Mean luminance and contrast-structure terms at one scale.
fn ssim_terms(a: &Plane, b: &Plane, g: &[f64]) -> (f64, f64) {
    let c1 = (K1 * 255.0) * (K1 * 255.0);
    let c2 = (K2 * 255.0) * (K2 * 255.0);
    let prod = |f: fn(f64, f64) -> f64| Plane { w: a.w, h: a.h, v: a.v.iter().zip(&b.v).map(|(&x, &y)| f(x, y)).collect() };
    let mu_a = filter(a, g);
    let mu_b = filter(b, g);
    let aa = filter(&prod(|x, _| x * x), g);
    let bb = filter(&prod(|_, y| y * y), g);
    let ab = filter(&prod(|x, y| x * y), g);
    let n = mu_a.v.len() as f64;
    let (mut l_sum, mut cs_sum) = (0.0, 0.0);
    for i in 0..mu_a.v.len() {
        let (ma, mb) = (mu_a.v[i], mu_b.v[i]);
        let va = aa.v[i] - ma * ma;
        let vb = bb.v[i] - mb * mb;
        let cov = ab.v[i] - ma * mb;
        let l = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
        let cs = (2.0 * cov + c2) / (va + vb + c2);
        l_sum += l * cs;
        cs_sum += cs;
    }
    (l_sum / n, cs_sum / n)
}

fn channel_plane(img: &Image, ch: usize) -> Plane {
    Plane { w: img.width, h: img.height, v: img.data.iter().skip(ch).step_by(3).map(|&v| f64::from(v)).collect() }
}

/// Five-scale MS-SSIM (Gaussian window 11, sigma 1.5), computed per colour
/// channel and averaged. Per-scale terms are clamped at 0 so the score stays
/// in `[0, 1]`. Images under 176 pixels on a side fall back to single-scale
/// SSIM with the window shrunk to fit if needed.
pub fn ms_ssim(a: &Image, b: &Image) -> Result<MsSsim> {
    check_extents(a, b)?;
    let min_side = a.width.min(a.height);
    let single = min_side < WINDOW << 4;
    let window = if min_side >= WINDOW { WINDOW } else { (min_side - 1) | 1 };
    let g = gaussian_window(window);
    let mut total = 0.0;
    for ch in 0..3 {
        let (mut pa, mut pb) = (channel_plane(a, ch), channel_plane(b, ch));
        let score = if single {
            ssim_terms(&pa, &pb, &g).0.max(0.0)
        } else {
            let mut s = 1.0;
            for (scale, &wt) in MS_SSIM_WEIGHTS.iter().enumerate() {
                let (lcs, cs) = ssim_terms(&pa, &pb, &g);
                if scale + 1 == MS_SSIM_WEIGHTS.len() {
                    s *= lcs.max(0.0).powf(wt);
                } else {
                    s *= cs.max(0.0).powf(wt);
                    pa = pa.downsample();
                    pb = pb.downsample();
                }
            }
            s
        };
        total += score;
    }
    Ok(MsSsim { score: (total / 3.0).min(1.0), single_scale: single })
}
