use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::{list_ppm_files, read_ppm_file, Image};
use crate::tensors::Tensor;

/// Number of distinct top-left corners for a `crop x crop` window.
pub fn crop_positions(height: usize, width: usize, crop: usize) -> usize {
    if crop > height || crop > width {
        0
    } else {
        (height - crop + 1) * (width - crop + 1)
    }
}

#[derive(Clone, Debug, Default)]
pub struct LoadedCorpus {
    pub images: Vec<Image>,
    pub too_small: usize,
    pub malformed: usize,
}

/// Reads every PPM image in `dir`. Unreadable files and images smaller than
/// the crop are skipped and counted.
pub fn load_corpus(dir: &Path, crop: usize) -> Result<LoadedCorpus> {
    let mut out = LoadedCorpus::default();
    for path in list_ppm_files(dir)? {
        match read_ppm_file(&path) {
            Ok(img) if img.width < crop || img.height < crop => {
                log::warn!("skipping {}: smaller than the {crop}px crop", path.display());
                out.too_small += 1;
            }
            Ok(img) => out.images.push(img),
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                out.malformed += 1;
            }
        }
    }
    Ok(out)
}

/// Smooth gradients, an oriented grating, flat shapes and mild noise.
pub fn synthetic_image(height: usize, width: usize, rng: &mut impl Rng) -> Image {
    let mut base = [0.0f64; 3];
    let mut grad = [(0.0f64, 0.0f64); 3];
    for c in 0..3 {
        base[c] = rng.gen_range(40.0..215.0);
        grad[c] = (rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
    }
    let freq = rng.gen_range(0.05..0.45);
    let angle: f64 = rng.gen_range(0.0..std::f64::consts::PI);
    let amp = rng.gen_range(10.0..45.0);
    let tint = [rng.gen_range(0.3..1.0), rng.gen_range(0.3..1.0), rng.gen_range(0.3..1.0)];
    let shapes: Vec<(f64, f64, f64, [f64; 3], bool)> = (0..rng.gen_range(1..5))
        .map(|_| {
            (
                rng.gen_range(0.0..height as f64),
                rng.gen_range(0.0..width as f64),
                rng.gen_range(4.0..(height.min(width) as f64 / 2.0).max(5.0)),
                [rng.gen_range(0.0..255.0), rng.gen_range(0.0..255.0), rng.gen_range(0.0..255.0)],
                rng.gen_bool(0.5),
            )
        })
        .collect();
    let (ca, sa) = (angle.cos(), angle.sin());
    let scale = 64.0 / height.max(width) as f64;
    let mut data = Vec::with_capacity(height * width * 3);
    for y in 0..height {
        for x in 0..width {
            let (fy, fx) = (y as f64, x as f64);
            let wave = (freq * (fx * ca + fy * sa)).sin();
            let shape = shapes.iter().rev().find(|&&(cy, cx, r, _, disc)| {
                if disc {
                    (fy - cy).powi(2) + (fx - cx).powi(2) < r * r
                } else {
                    (fy - cy).abs() < r && (fx - cx).abs() < r * 0.6
                }
            });
            for c in 0..3 {
                let mut v = base[c] + scale * (grad[c].0 * fy + grad[c].1 * fx) + amp * tint[c] * wave;
                if let Some(s) = shape {
                    v = 0.7 * s.3[c] + 0.3 * v;
                }
                v += rng.gen_range(-3.0..3.0);
                data.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Image { width, height, data }
}

pub fn synthetic_corpus(count: usize, size: usize, seed: u64) -> Vec<Image> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| synthetic_image(size, size, &mut rng)).collect()
}

/// Seeded uniform random crops, scaled to `[0, 1]`.
pub struct CropSampler {
    images: Vec<Image>,
    crop: usize,
    rng: ChaCha8Rng,
}

impl CropSampler {
    pub fn new(images: Vec<Image>, crop: usize, seed: u64) -> Result<Self> {
        if crop == 0 || crop % 16 != 0 {
            return Err(Error::Config(format!("crop size {crop} must be a positive multiple of 16")));
        }
        let images: Vec<Image> = images.into_iter().filter(|i| i.width >= crop && i.height >= crop).collect();
        if images.is_empty() {
            return Err(Error::Invalid(format!("no image is at least {crop}x{crop}")));
        }
        Ok(Self { images, crop, rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    pub fn images(&self) -> &[Image] {
        &self.images
    }

    /// Image index and top-left corner of the next crop.
    pub fn next_position(&mut self) -> (usize, usize, usize) {
        let i = self.rng.gen_range(0..self.images.len());
        let img = &self.images[i];
        let top = self.rng.gen_range(0..=img.height - self.crop);
        let left = self.rng.gen_range(0..=img.width - self.crop);
        (i, top, left)
    }

    pub fn next_crop(&mut self) -> Tensor {
        let (i, top, left) = self.next_position();
        self.images[i].crop(top, left, self.crop, self.crop).expect("crop inside image").to_tensor()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kodak_crop_positions() {
        assert_eq!(crop_positions(512, 768, 256), 257 * 513);
        assert_eq!(crop_positions(100, 100, 128), 0);
    }

    #[test]
    fn constant_image_crop() {
        let mut s = CropSampler::new(vec![Image::filled(80, 64, 128)], 64, 1).unwrap();
        let t = s.next_crop();
        assert_eq!(t.shape(), &[64, 64, 3]);
        assert!(t.data().iter().all(|&v| v == 128.0 / 255.0));
    }

    #[test]
    fn same_seed_same_crops() {
        let imgs = synthetic_corpus(3, 96, 9);
        let mut a = CropSampler::new(imgs.clone(), 32, 5).unwrap();
        let mut b = CropSampler::new(imgs, 32, 5).unwrap();
        for _ in 0..20 {
            assert_eq!(a.next_position(), b.next_position());
        }
    }

    #[test]
    fn corners_cover_range() {
        let mut s = CropSampler::new(vec![Image::filled(18, 17, 0)], 16, 3).unwrap();
        let mut seen = std::collections::HashSet::new();
        for _ in 0..500 {
            seen.insert(s.next_position());
        }
        assert_eq!(seen.len(), crop_positions(17, 18, 16));
    }

    #[test]
    fn synthetic_is_deterministic_and_textured() {
        let a = synthetic_corpus(2, 64, 4);
        assert_eq!(a, synthetic_corpus(2, 64, 4));
        let distinct: std::collections::HashSet<u8> = a[0].data.iter().copied().collect();
        assert!(distinct.len() > 20);
    }
}
