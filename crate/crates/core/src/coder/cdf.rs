use crate::coder::range::PROB_SCALE;
use crate::entropy::{ElementParams, FactorizedPrior};
use crate::error::{Error, Result};

/// Cumulative frequencies for the inclusive symbol range `[lo, hi]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CdfTable {
    lo: i32,
    /// `hi - lo + 2` entries, `cum[0] = 0`, last entry [`PROB_SCALE`].
    cum: Vec<u32>,
}

impl CdfTable {
    pub fn from_counts(lo: i32, counts: &[u32]) -> Result<Self> {
        if counts.is_empty() || counts.contains(&0) {
            return Err(Error::Invalid("every symbol needs a positive count".into()));
        }
        let mut cum = Vec::with_capacity(counts.len() + 1);
        cum.push(0u32);
        let mut acc = 0u32;
        for &c in counts {
            acc = acc.checked_add(c).ok_or_else(|| Error::Invalid("count overflow".into()))?;
            cum.push(acc);
        }
        if acc != PROB_SCALE {
            return Err(Error::Invalid(format!("counts sum to {acc}, expected {PROB_SCALE}")));
        }
        Ok(Self { lo, cum })
    }

    /// Scales `masses` (one per symbol from `lo`) to [`PROB_SCALE`] counts.
    /// Each symbol first gets one count; the rest are shared in proportion
    /// to mass by floor plus largest remainder (ties to the lower symbol).
    pub fn from_masses(lo: i32, masses: &[f64]) -> Result<Self> {
        let n = masses.len();
        if n == 0 || n as u32 > PROB_SCALE {
            return Err(Error::Invalid(format!("cannot build a table over {n} symbols")));
        }
        if masses.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(Error::Numerical("table masses must be finite and nonnegative".into()));
        }
        let total: f64 = masses.iter().sum();
        let spare = (PROB_SCALE - n as u32) as f64;
        let mut counts = vec![1u32; n];
        let mut rem: Vec<(f64, usize)> = Vec::with_capacity(n);
        let mut used = 0u32;
        for (i, &m) in masses.iter().enumerate() {
            let share = if total > 0.0 { m / total * spare } else { spare / n as f64 };
            let f = share.floor();
            counts[i] += f as u32;
            used += f as u32;
            rem.push((share - f, i));
        }
        let left = PROB_SCALE - n as u32 - used;
        rem.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, i) in rem.iter().take(left as usize) {
            counts[i] += 1;
        }
        Self::from_counts(lo, &counts)
    }

    /// Table for one latent element from its snapped parameters.
    pub fn for_element(params: &ElementParams) -> Result<Self> {
        let (lo, hi) = params.bounds();
        let masses: Vec<f64> = (lo..=hi).map(|s| params.mass(s)).collect();
        Self::from_masses(lo, &masses)
    }

    /// Table for channel `c` of the side latent.
    pub fn for_prior(prior: &FactorizedPrior, c: usize) -> Result<Self> {
        let (lo, hi) = prior.coding_bounds(c);
        let masses: Vec<f64> = (lo..=hi).map(|s| prior.bin_mass(s, c)).collect();
        Self::from_masses(lo, &masses)
    }

    pub fn lo(&self) -> i32 {
        self.lo
    }

    pub fn hi(&self) -> i32 {
        self.lo + self.cum.len() as i32 - 2
    }

    pub fn cum(&self) -> &[u32] {
        &self.cum
    }

    pub fn count(&self, symbol: i32) -> u32 {
        let i = (symbol - self.lo) as usize;
        self.cum[i + 1] - self.cum[i]
    }

    pub fn clamp(&self, symbol: i32) -> i32 {
        symbol.clamp(self.lo, self.hi())
    }

    /// `(cum, freq)` of an in-range symbol.
    pub fn interval(&self, symbol: i32) -> (u32, u32) {
        let i = (symbol - self.lo) as usize;
        (self.cum[i], self.cum[i + 1] - self.cum[i])
    }

    /// Symbol whose interval contains `target`.
    pub fn lookup(&self, target: u32) -> i32 {
        let i = self.cum.partition_point(|&c| c <= target) - 1;
        self.lo + i.min(self.cum.len() - 2) as i32
    }
}
