use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QualityAxis {
    Psnr,
    Msssim,
}

impl QualityAxis {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "psnr" => Some(QualityAxis::Psnr),
            "msssim" | "ms-ssim" | "ms_ssim" => Some(QualityAxis::Msssim),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdPoint {
    pub bpp: f64,
    pub psnr_db: f64,
    pub msssim: f64,
    /// Model or lambda tag.
    pub tag: String,
}

impl RdPoint {
    pub fn quality(&self, axis: QualityAxis) -> f64 {
        match axis {
            QualityAxis::Psnr => self.psnr_db,
            QualityAxis::Msssim => self.msssim,
        }
    }
}

/// At least four points with strictly increasing rate.
#[derive(Clone, Debug, PartialEq)]
pub struct RdCurve {
    pub label: String,
    points: Vec<RdPoint>,
}

impl RdCurve {
    pub fn new(label: impl Into<String>, mut points: Vec<RdPoint>) -> Result<Self> {
        if points.len() < 4 {
            return Err(Error::Invalid(format!("an RD curve needs at least 4 points, got {}", points.len())));
        }
        if points.iter().any(|p| !(p.bpp > 0.0 && p.bpp.is_finite())) {
            return Err(Error::Invalid("rates must be positive and finite".into()));
        }
        points.sort_by(|a, b| a.bpp.total_cmp(&b.bpp));
        if points.windows(2).any(|w| w[0].bpp == w[1].bpp) {
            return Err(Error::Invalid("duplicate rate in RD curve".into()));
        }
        Ok(Self { label: label.into(), points })
    }

    pub fn points(&self) -> &[RdPoint] {
        &self.points
    }

    fn quality_range(&self, axis: QualityAxis) -> Result<(f64, f64)> {
        let q: Vec<f64> = self.points.iter().map(|p| p.quality(axis)).collect();
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("quality values must be finite".into()));
        }
        Ok((q.iter().copied().fold(f64::INFINITY, f64::min), q.iter().copied().fold(f64::NEG_INFINITY, f64::max)))
    }
}

/// Cubic in the normalised quality `(q - shift) / scale`.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    pub coeffs: [f64; 4],
    pub shift: f64,
    pub scale: f64,
}

impl Polynomial {
    pub fn eval(&self, q: f64) -> f64 {
        let t = (q - self.shift) / self.scale;
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }

    /// Exact integral over `[a, b]` in quality units.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        let anti = |q: f64| {
            let t = (q - self.shift) / self.scale;
            self.coeffs.iter().enumerate().map(|(i, &c)| c * t.powi(i as i32 + 1) / (i + 1) as f64).sum::<f64>()
        };
        (anti(b) - anti(a)) * self.scale
    }
}

/// Least-squares cubic fit of `ln(bpp)` against quality.
pub fn fit_log_rate(curve: &RdCurve, axis: QualityAxis) -> Result<Polynomial> {
    let (lo, hi) = curve.quality_range(axis)?;
    let shift = 0.5 * (lo + hi);
    let scale = if hi > lo { 0.5 * (hi - lo) } else { 1.0 };
    let n = curve.points.len();
    let a = DMatrix::from_fn(n, 4, |r, c| ((curve.points[r].quality(axis) - shift) / scale).powi(c as i32));
    let b = DVector::from_iterator(n, curve.points.iter().map(|p| p.bpp.ln()));
    let sol = a
        .svd(true, true)
        .solve(&b, 1e-12)
        .map_err(|e| Error::Numerical(format!("cubic fit failed: {e}")))?;
    Ok(Polynomial { coeffs: [sol[0], sol[1], sol[2], sol[3]], shift, scale })
}

/// Bjontegaard delta rate of `test` against `anchor` in percent; negative
/// means `test` needs fewer bits for the same quality.
pub fn bd_rate(anchor: &RdCurve, test: &RdCurve, axis: QualityAxis) -> Result<f64> {
    let (a_lo, a_hi) = anchor.quality_range(axis)?;
    let (t_lo, t_hi) = test.quality_range(axis)?;
    let (lo, hi) = (a_lo.max(t_lo), a_hi.min(t_hi));
    if lo >= hi {
        return Err(Error::Invalid(format!(
            "quality ranges do not overlap: anchor [{a_lo}, {a_hi}], test [{t_lo}, {t_hi}]"
        )));
    }
    let pa = fit_log_rate(anchor, axis)?;
    let pt = fit_log_rate(test, axis)?;
    let avg = (pt.integral(lo, hi) - pa.integral(lo, hi)) / (hi - lo);
    Ok(avg.exp_m1() * 100.0)
}
