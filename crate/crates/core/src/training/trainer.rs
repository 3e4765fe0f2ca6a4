use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::entropy::EntropyVariant;
use crate::error::{Error, Result};
use crate::model::{init_weights, Checkpoint, ModelConfig, ModelWeights, Net, OptimizerState};
use crate::tensors::{Tensor, Var};
use crate::training::{load_corpus, synthetic_corpus, Adam, CropSampler};

/// MSE on `[0, 1]` is weighted by `lambda * LAMBDA_SCALE`, i.e. the
/// distortion term is measured on the 8-bit scale.
pub const LAMBDA_SCALE: f64 = 255.0 * 255.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RdLossBreakdown {
    pub rate_bpp: f64,
    pub distortion_mse: f64,
    /// `rate_bpp + lambda * LAMBDA_SCALE * distortion_mse`.
    pub total: f64,
}

impl RdLossBreakdown {
    pub fn new(rate_bpp: f64, distortion_mse: f64, lambda: f64) -> Self {
        Self { rate_bpp, distortion_mse, total: rate_bpp + lambda * LAMBDA_SCALE * distortion_mse }
    }
}

/// Differentiable RD loss of one image plus its breakdown.
pub fn rd_loss(net: &Net, x: &Tensor, lambda: f64, rng: &mut impl Rng) -> Result<(Var, RdLossBreakdown)> {
    let (h, w, _) = x.hwc()?;
    let xv = Var::constant(x.clone());
    let fw = net.forward_train(&xv, rng)?;
    let rate = fw.bits.scale(1.0 / (h * w) as f64);
    let mse = fw.xhat.sub(&xv)?.square().mean();
    let total = rate.add(&mse.scale(lambda * LAMBDA_SCALE))?;
    let b = RdLossBreakdown::new(rate.value().item(), mse.value().item(), lambda);
    Ok((total, b))
}

/// One model plus its optimizer.
pub struct Trainer {
    pub weights: ModelWeights,
    pub state: OptimizerState,
    pub adam: Adam,
    pub lambda: f64,
    rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(weights: ModelWeights, learning_rate: f64, seed: u64) -> Self {
        let state = OptimizerState::zeros(&weights.params);
        let lambda = weights.config.lambda;
        Self { weights, state, adam: Adam::new(learning_rate), lambda, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Resumes from a checkpoint (fresh moments if it has none).
    pub fn from_checkpoint(ckpt: Checkpoint, learning_rate: f64, seed: u64) -> Self {
        let mut t = Self::new(ckpt.weights, learning_rate, seed);
        if let Some(s) = ckpt.optimizer {
            t.state = s;
        }
        t
    }

    /// Loss of `batch` without updating anything.
    pub fn evaluate(&mut self, batch: &[Tensor]) -> Result<RdLossBreakdown> {
        let net = Net::new(&self.weights, false);
        let mut acc = (0.0, 0.0);
        for x in batch {
            let (_, b) = rd_loss(&net, x, self.lambda, &mut self.rng)?;
            acc.0 += b.rate_bpp;
            acc.1 += b.distortion_mse;
        }
        let n = batch.len() as f64;
        Ok(RdLossBreakdown::new(acc.0 / n, acc.1 / n, self.lambda))
    }

    /// Gradients of the batch-mean loss, in parameter order.
    pub fn gradients(&mut self, batch: &[Tensor]) -> Result<(Vec<Tensor>, RdLossBreakdown)> {
        if batch.is_empty() {
            return Err(Error::Invalid("empty batch".into()));
        }
        let net = Net::new(&self.weights, true);
        let n = batch.len() as f64;
        let mut acc = (0.0, 0.0);
        for x in batch {
            let (total, b) = rd_loss(&net, x, self.lambda, &mut self.rng)?;
            if !b.total.is_finite() {
                return Err(Error::Numerical(format!(
                    "step {}: non-finite loss (rate {} bpp, mse {})",
                    self.state.step + 1,
                    b.rate_bpp,
                    b.distortion_mse
                )));
            }
            total.scale(1.0 / n).backward()?;
            acc.0 += b.rate_bpp;
            acc.1 += b.distortion_mse;
        }
        Ok((net.params.take_grads(), RdLossBreakdown::new(acc.0 / n, acc.1 / n, self.lambda)))
    }

    /// One optimizer step on the batch mean; returns the pre-step loss.
    pub fn step(&mut self, batch: &[Tensor]) -> Result<RdLossBreakdown> {
        let (grads, b) = self.gradients(batch)?;
        self.adam.step(&mut self.weights.params, &grads, &mut self.state)?;
        Ok(b)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint { weights: self.weights.clone(), optimizer: Some(self.state.clone()) }
    }
}

fn default_preset() -> String {
    "desk".into()
}
fn default_batch() -> usize {
    1
}
fn default_lr() -> f64 {
    1e-4
}
fn default_crop() -> usize {
    64
}
fn default_synthetic_images() -> usize {
    24
}
fn default_synthetic_size() -> usize {
    128
}
fn default_every() -> usize {
    500
}

/// Training run description, usually read from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// `desk`, `desk_checkerboard`, `paper` or `paper_checkerboard`.
    #[serde(default = "default_preset")]
    pub preset: String,
    /// Full architecture; overrides `preset` when present.
    #[serde(default)]
    pub model: Option<ModelConfig>,
    /// Re-split the latent into this many equal slices.
    #[serde(default)]
    pub slices: Option<usize>,
    /// `no_mcm` (drop spatial context) or `no_ar` (hyperprior only).
    #[serde(default)]
    pub ablation: Option<String>,
    #[serde(default)]
    pub entropy: Option<EntropyVariant>,
    pub lambda: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    pub steps: usize,
    #[serde(default = "default_crop")]
    pub crop_size: usize,
    #[serde(default)]
    pub seed: u64,
    /// Directory of PPM images; a synthetic corpus is generated when absent.
    #[serde(default)]
    pub corpus: Option<PathBuf>,
    #[serde(default = "default_synthetic_images")]
    pub synthetic_images: usize,
    #[serde(default = "default_synthetic_size")]
    pub synthetic_size: usize,
    #[serde(default = "default_every")]
    pub checkpoint_every: usize,
}

impl TrainConfig {
    pub fn desk(lambda: f64, steps: usize) -> Self {
        Self {
            preset: default_preset(),
            model: None,
            slices: None,
            ablation: None,
            entropy: None,
            lambda,
            batch_size: default_batch(),
            learning_rate: default_lr(),
            steps,
            crop_size: default_crop(),
            seed: 0,
            corpus: None,
            synthetic_images: default_synthetic_images(),
            synthetic_size: default_synthetic_size(),
            checkpoint_every: default_every(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.crop_size == 0 || self.crop_size % 16 != 0 {
            return Err(Error::Config(format!("crop size {} must be a positive multiple of 16", self.crop_size)));
        }
        if self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::Config("batch size and learning rate must be positive".into()));
        }
        self.model_config().map(|_| ())
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        let mut m = match &self.model {
            Some(m) => m.clone(),
            None => match self.preset.as_str() {
                "desk" => ModelConfig::desk(),
                "desk_checkerboard" => ModelConfig::desk_checkerboard(),
                "paper" => ModelConfig::paper(),
                "paper_checkerboard" => ModelConfig::paper_checkerboard(),
                p => return Err(Error::Config(format!("unknown preset {p:?}"))),
            },
        };
        if let Some(n) = self.slices {
            m = m.with_uniform_slices(n)?;
        }
        m = match self.ablation.as_deref() {
            None => m,
            Some("no_mcm") => m.without_context(),
            Some("no_ar") => m.without_autoregression(),
            Some(a) => return Err(Error::Config(format!("unknown ablation {a:?}"))),
        };
        if let Some(e) = self.entropy {
            m.entropy = e;
        }
        m.lambda = self.lambda;
        m.validate()?;
        Ok(m)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub loss: RdLossBreakdown,
}

#[derive(Debug)]
pub struct TrainReport {
    pub trace: Vec<TraceRow>,
    pub final_checkpoint: PathBuf,
    pub trace_path: PathBuf,
    pub weights: ModelWeights,
}

impl TrainConfig {
    /// Runs training, writing `ckpt_<step>.arcw` every `checkpoint_every`
    /// steps, `final.arcw` and `trace.csv` (`step,total,rate_bpp,mse`) into
    /// `out_dir`.
    pub fn run(&self, out_dir: &Path) -> Result<TrainReport> {
        self.validate()?;
        std::fs::create_dir_all(out_dir)?;
        let images = match &self.corpus {
            Some(dir) => {
                let c = load_corpus(dir, self.crop_size)?;
                if c.malformed > 0 || c.too_small > 0 {
                    log::warn!("corpus: {} malformed and {} undersized images skipped", c.malformed, c.too_small);
                }
                c.images
            }
            None => synthetic_corpus(self.synthetic_images, self.synthetic_size, self.seed ^ 0x5eed),
        };
        let mut sampler = CropSampler::new(images, self.crop_size, self.seed)?;
        let weights = init_weights(&self.model_config()?, self.seed)?;
        let mut trainer = Trainer::new(weights, self.learning_rate, self.seed.wrapping_add(1));
        let mut trace = Vec::with_capacity(self.steps);
        let mut csv = String::from("step,total,rate_bpp,mse\n");
        for step in 0..self.steps {
            let batch: Vec<Tensor> = (0..self.batch_size).map(|_| sampler.next_crop()).collect();
            let loss = trainer.step(&batch)?;
            csv.push_str(&format!("{step},{},{},{}\n", loss.total, loss.rate_bpp, loss.distortion_mse));
            trace.push(TraceRow { step, loss });
            if step % 100 == 0 {
                log::info!("step {step}: total {:.4} rate {:.4} bpp mse {:.6}", loss.total, loss.rate_bpp, loss.distortion_mse);
            }
            if self.checkpoint_every > 0 && (step + 1) % self.checkpoint_every == 0 {
                trainer.checkpoint().save(&out_dir.join(format!("ckpt_{:06}.arcw", step + 1)))?;
            }
        }
        let final_checkpoint = out_dir.join("final.arcw");
        trainer.checkpoint().save(&final_checkpoint)?;
        let trace_path = out_dir.join("trace.csv");
        std::fs::write(&trace_path, csv)?;
        Ok(TrainReport { trace, final_checkpoint, trace_path, weights: trainer.weights })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn breakdown_total() {
        let b = RdLossBreakdown::new(1.0 / 256.0, 0.0, 0.01);
        assert_eq!(b.total, 1.0 / 256.0);
        let b = RdLossBreakdown::new(0.5, 0.01, 0.01);
        assert_eq!(b.total, 0.5 + 0.01 * LAMBDA_SCALE * 0.01);
    }

    #[test]
    fn toml_config() {
        let c = TrainConfig::from_toml("lambda = 0.01\nsteps = 10\nslices = 1\nablation = \"no_ar\"\n").unwrap();
        let m = c.model_config().unwrap();
        assert_eq!(m.slice_widths, vec![64]);
        assert!(!m.channel_conditioning);
        assert!(TrainConfig::from_toml("lambda = 0.01\nsteps = 1\ncrop_size = 40\n").is_err());
        assert!(TrainConfig::from_toml("lambda = 0.01\nsteps = 1\nbogus = 1\n").is_err());
    }
}
