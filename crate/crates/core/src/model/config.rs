use serde::{Deserialize, Serialize};

use crate::entropy::EntropyVariant;
use crate::error::{Error, Result};

/// Spatial context used inside a latent slice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextVariant {
    /// Masked convolutions, one element at a time in raster order.
    #[serde(alias = "raster")]
    MaskedRaster,
    /// Anchors first without spatial context, then non-anchors from their
    /// four anchor neighbours.
    Checkerboard,
    /// Hyperprior and channel context only.
    None,
}

impl ContextVariant {
    pub fn tag(self) -> u8 {
        match self {
            ContextVariant::MaskedRaster => 0,
            ContextVariant::Checkerboard => 1,
            ContextVariant::None => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(ContextVariant::MaskedRaster),
            1 => Some(ContextVariant::Checkerboard),
            2 => Some(ContextVariant::None),
            _ => None,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "raster" | "masked_raster" => Some(ContextVariant::MaskedRaster),
            "checkerboard" => Some(ContextVariant::Checkerboard),
            "none" => Some(ContextVariant::None),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ContextVariant::MaskedRaster => "raster",
            ContextVariant::Checkerboard => "checkerboard",
            ContextVariant::None => "none",
        }
    }
}

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub main_channels: usize,
    pub latent_depth: usize,
    pub hyper_depth: usize,
    /// Width of the middle hyper-analysis layer and the second hyper-synthesis
    /// stage.
    pub hyper_hidden: usize,
    /// Masked convolutions inside the hyper-synthesis transform.
    pub hyper_masked: bool,
    pub slice_widths: Vec<usize>,
    /// Hidden width of the slice transform carrying the SE gate.
    pub slice_hidden: usize,
    pub slice_mid: usize,
    pub se_reduction: usize,
    pub use_se: bool,
    pub context_variant: ContextVariant,
    pub context_width: usize,
    pub context_layers: usize,
    pub channel_conditioning: bool,
    pub channel_width: usize,
    pub param_hidden: usize,
    pub lrp_hidden: usize,
    pub lrp_init: f64,
    pub entropy: EntropyVariant,
    pub lambda: f64,
}

impl ModelConfig {
    /// Full-size architecture.
    pub fn paper() -> Self {
        Self {
            main_channels: 192,
            latent_depth: 320,
            hyper_depth: 192,
            hyper_hidden: 256,
            hyper_masked: true,
            slice_widths: vec![32; 10],
            slice_hidden: 224,
            slice_mid: 128,
            se_reduction: 16,
            use_se: true,
            context_variant: ContextVariant::MaskedRaster,
            context_width: 192,
            context_layers: 2,
            channel_conditioning: true,
            channel_width: 64,
            param_hidden: 224,
            lrp_hidden: 224,
            lrp_init: 0.5,
            entropy: EntropyVariant::Gaussian,
            lambda: 0.01,
        }
    }

    /// Full-size checkerboard variant with content-adaptive slice widths.
    pub fn paper_checkerboard() -> Self {
        Self {
            context_variant: ContextVariant::Checkerboard,
            slice_widths: vec![48, 40, 36, 32, 32, 32, 28, 24, 24, 24],
            ..Self::paper()
        }
    }

    /// CPU-trainable configuration that exercises every code path.
    pub fn desk() -> Self {
        Self {
            main_channels: 32,
            latent_depth: 64,
            hyper_depth: 32,
            hyper_hidden: 48,
            hyper_masked: true,
            slice_widths: vec![16; 4],
            slice_hidden: 48,
            slice_mid: 24,
            se_reduction: 16,
            use_se: true,
            context_variant: ContextVariant::MaskedRaster,
            context_width: 32,
            context_layers: 2,
            channel_conditioning: true,
            channel_width: 64,
            param_hidden: 64,
            lrp_hidden: 32,
            lrp_init: 0.5,
            entropy: EntropyVariant::Gaussian,
            lambda: 0.01,
        }
    }

    /// Desk-scale checkerboard variant; adaptive widths scaled to depth 64.
    pub fn desk_checkerboard() -> Self {
        Self {
            context_variant: ContextVariant::Checkerboard,
            slice_widths: vec![24, 16, 12, 12],
            ..Self::desk()
        }
    }

    pub fn num_slices(&self) -> usize {
        self.slice_widths.len()
    }

    /// Channel offset of slice `m` inside the latent.
    pub fn slice_offset(&self, m: usize) -> usize {
        self.slice_widths[..m].iter().sum()
    }

    /// Channels of the hyper-synthesis output.
    pub fn hyper_features(&self) -> usize {
        2 * self.latent_depth
    }

    /// Channels of the conditioning tensor fed to slice transforms.
    pub fn conditioning_width(&self) -> usize {
        self.hyper_features() + self.channel_width
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.slice_widths.is_empty() || self.slice_widths.contains(&0) {
            return bad(format!("slice widths {:?} must be nonempty and positive", self.slice_widths));
        }
        let total: usize = self.slice_widths.iter().sum();
        if total != self.latent_depth {
            return bad(format!("slice widths sum to {total}, latent depth is {}", self.latent_depth));
        }
        if self.se_reduction == 0 || self.slice_hidden % self.se_reduction != 0 {
            return bad(format!(
                "SE reduction {} must divide the slice-transform width {}",
                self.se_reduction, self.slice_hidden
            ));
        }
        let widths = [
            self.main_channels,
            self.latent_depth,
            self.hyper_depth,
            self.hyper_hidden,
            self.slice_hidden,
            self.slice_mid,
            self.context_width,
            self.channel_width,
            self.param_hidden,
            self.lrp_hidden,
        ];
        if widths.contains(&0) {
            return bad("all layer widths must be positive".into());
        }
        if self.context_layers == 0 {
            return bad("context stack needs at least one layer".into());
        }
        if let EntropyVariant::Gmm { k } = self.entropy {
            if k == 0 {
                return bad("mixture needs at least one component".into());
            }
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        Ok(())
    }

    /// Ablation: drop the masked spatial context model.
    pub fn without_context(&self) -> Self {
        Self { context_variant: ContextVariant::None, ..self.clone() }
    }

    /// Ablation: hyperprior-only entropy model (no spatial context, no
    /// channel conditioning, no masked layers in the hyper decoder).
    pub fn without_autoregression(&self) -> Self {
        Self {
            context_variant: ContextVariant::None,
            channel_conditioning: false,
            hyper_masked: false,
            ..self.clone()
        }
    }

    /// Same latent depth split into `n` equal slices.
    pub fn with_uniform_slices(&self, n: usize) -> Result<Self> {
        if n == 0 || self.latent_depth % n != 0 {
            return Err(Error::Config(format!("{} channels do not split into {n} slices", self.latent_depth)));
        }
        Ok(Self { slice_widths: vec![self.latent_depth / n; n], ..self.clone() })
    }
}

/// Trade-off weights of the rate-distortion sweep.
pub const LAMBDAS: [f64; 8] = [0.001, 0.005, 0.007, 0.01, 0.03, 0.05, 0.07, 0.1];

/// Index of `lambda` in [`LAMBDAS`], or 255 when it is off the sweep.
pub fn lambda_index(lambda: f64) -> u8 {
    LAMBDAS
        .iter()
        .position(|&l| (l - lambda).abs() <= 1e-12 * l)
        .map_or(255, |i| i as u8)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for c in [
            ModelConfig::paper(),
            ModelConfig::paper_checkerboard(),
            ModelConfig::desk(),
            ModelConfig::desk_checkerboard(),
        ] {
            c.validate().unwrap();
        }
        assert_eq!(ModelConfig::paper().slice_widths.iter().sum::<usize>(), 320);
        assert_eq!(ModelConfig::paper_checkerboard().slice_widths.iter().sum::<usize>(), 320);
    }

    #[test]
    fn rejects_bad_slices() {
        let mut c = ModelConfig::desk();
        c.slice_widths = vec![16, 16, 16];
        assert!(c.validate().is_err());
        assert!(ModelConfig::desk().with_uniform_slices(3).is_err());
        assert_eq!(ModelConfig::desk().with_uniform_slices(1).unwrap().slice_widths, vec![64]);
    }

    #[test]
    fn lambda_indices() {
        assert_eq!(lambda_index(0.001), 0);
        assert_eq!(lambda_index(0.1), 7);
        assert_eq!(lambda_index(0.02), 255);
    }

    #[test]
    fn variant_tags_round_trip() {
        for v in [ContextVariant::MaskedRaster, ContextVariant::Checkerboard, ContextVariant::None] {
            assert_eq!(ContextVariant::from_tag(v.tag()), Some(v));
            assert_eq!(ContextVariant::parse(v.name()), Some(v));
        }
        assert_eq!(ContextVariant::from_tag(3), None);
    }
}
