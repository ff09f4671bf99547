//! The training augmentation pipeline: resize to the working size, then
//! optionally flip, grayscale, color-jitter, and perspective-warp, then
//! normalize. Every stage's random draws are consumed in a fixed order even
//! when the stage is skipped, so derived RNG streams stay aligned.

use serde::{Deserialize, Serialize};

use super::{
    bilinear_resize, color_jitter, horizontal_flip, normalize, random_perspective, to_grayscale,
    ImageBuffer,
};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub flip_prob: f64,
    pub grayscale_prob: f64,
    pub jitter_prob: f64,
    pub perspective_prob: f64,
    /// Jitter factors are drawn uniformly in [1−β, 1+β].
    pub jitter_strength: f64,
    /// Corner displacements are drawn in ±δ·min(H, W).
    pub perspective_distortion: f64,
    /// Broadcast to all channels when a single value is given.
    pub normalize_mean: Vec<f32>,
    pub normalize_std: Vec<f32>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            flip_prob: 0.5,
            grayscale_prob: 0.2,
            jitter_prob: 0.5,
            perspective_prob: 0.5,
            jitter_strength: 0.2,
            perspective_distortion: 0.2,
            normalize_mean: vec![0.5],
            normalize_std: vec![0.5],
        }
    }
}

impl AugmentConfig {
    /// Disable every random stage, keeping resize + normalize.
    pub fn deterministic(mut self) -> Self {
        self.flip_prob = 0.0;
        self.grayscale_prob = 0.0;
        self.jitter_prob = 0.0;
        self.perspective_prob = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("flip_prob", self.flip_prob),
            ("grayscale_prob", self.grayscale_prob),
            ("jitter_prob", self.jitter_prob),
            ("perspective_prob", self.perspective_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("augment.{name} must be in [0,1], got {p}")));
            }
        }
        if self.normalize_std.iter().any(|&s| s <= 0.0) {
            return Err(Error::Config("augment.normalize_std must be > 0".into()));
        }
        if self.jitter_strength < 0.0 || self.perspective_distortion < 0.0 {
            return Err(Error::Config(
                "augment strengths must be non-negative".into(),
            ));
        }
        Ok(())
    }

    fn channel_params(&self, channels: usize) -> Result<(Vec<f32>, Vec<f32>)> {
        let expand = |v: &Vec<f32>, what: &str| -> Result<Vec<f32>> {
            if v.len() == channels {
                Ok(v.clone())
            } else if v.len() == 1 {
                Ok(vec![v[0]; channels])
            } else {
                Err(Error::Config(format!(
                    "augment.{what} has {} entries for a {channels}-channel image",
                    v.len()
                )))
            }
        };
        Ok((
            expand(&self.normalize_mean, "normalize_mean")?,
            expand(&self.normalize_std, "normalize_std")?,
        ))
    }
}

/// Resize + normalize only: the evaluation-time pipeline.
pub fn eval_transform(img: &ImageBuffer, target_side: usize, cfg: &AugmentConfig) -> Result<ImageBuffer> {
    let resized = bilinear_resize(img, target_side, target_side)?;
    let (mean, std) = cfg.channel_params(resized.channels)?;
    normalize(&resized, &mean, &std)
}

/// Full training pipeline. The fixed stage order is resize → flip? →
/// grayscale? → jitter? → perspective? → normalize.
pub fn apply_augmentations(
    img: &ImageBuffer,
    target_side: usize,
    cfg: &AugmentConfig,
    rng: &mut Rng,
) -> Result<ImageBuffer> {
    let mut out = bilinear_resize(img, target_side, target_side)?;

    let flip_draw = rng.next_f64();
    if flip_draw < cfg.flip_prob {
        out = horizontal_flip(&out);
    }

    let gray_draw = rng.next_f64();
    if gray_draw < cfg.grayscale_prob && out.channels == 3 {
        out = to_grayscale(&out)?;
    }

    let jitter_draw = rng.next_f64();
    let b = rng.uniform_f64(1.0 - cfg.jitter_strength, 1.0 + cfg.jitter_strength) as f32;
    let c = rng.uniform_f64(1.0 - cfg.jitter_strength, 1.0 + cfg.jitter_strength) as f32;
    let s = rng.uniform_f64(1.0 - cfg.jitter_strength, 1.0 + cfg.jitter_strength) as f32;
    if jitter_draw < cfg.jitter_prob {
        out = color_jitter(&out, b, c, s)?;
    }

    let persp_draw = rng.next_f64();
    let delta = cfg.perspective_distortion * out.shortest_side() as f64;
    let mut disp = [(0.0f64, 0.0f64); 4];
    for d in disp.iter_mut() {
        d.0 = rng.uniform_f64(-delta, delta);
        d.1 = rng.uniform_f64(-delta, delta);
    }
    if persp_draw < cfg.perspective_prob {
        out = random_perspective(&out, &disp)?;
    }

    let (mean, std) = cfg.channel_params(out.channels)?;
    normalize(&out, &mean, &std)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_image() -> ImageBuffer {
        let mut px = Vec::new();
        for y in 0..16 {
            for x in 0..16 {
                px.push(((x * 16 + y) % 256) as f32 / 255.0);
            }
        }
        ImageBuffer::new(16, 16, 1, px).unwrap().with_native(16)
    }

    #[test]
    fn zero_probs_is_resize_normalize_only() {
        let img = test_image();
        let cfg = AugmentConfig::default().deterministic();
        let mut rng = Rng::from_seed(1);
        let out = apply_augmentations(&img, 16, &cfg, &mut rng).unwrap();
        let expect = eval_transform(&img, 16, &cfg).unwrap();
        assert_eq!(out.pixels, expect.pixels);
    }

    #[test]
    fn same_seed_same_output() {
        let img = test_image();
        let cfg = AugmentConfig::default();
        let a = apply_augmentations(&img, 16, &cfg, &mut Rng::from_seed(9)).unwrap();
        let b = apply_augmentations(&img, 16, &cfg, &mut Rng::from_seed(9)).unwrap();
        assert_eq!(a.pixels, b.pixels);
    }

    #[test]
    fn forced_flip_twice_restores_original() {
        let img = test_image();
        let mut cfg = AugmentConfig::default().deterministic();
        cfg.flip_prob = 1.0;
        cfg.normalize_mean = vec![0.0];
        cfg.normalize_std = vec![1.0];
        let once = apply_augmentations(&img, 16, &cfg, &mut Rng::from_seed(3)).unwrap();
        let twice = apply_augmentations(&once, 16, &cfg, &mut Rng::from_seed(4)).unwrap();
        for (a, b) in img.pixels.iter().zip(&twice.pixels) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn draws_consumed_even_when_stages_skipped() {
        // With all gates closed vs all gates open the *same number* of draws
        // must be consumed, so the stream position afterwards is identical.
        let img = test_image();
        let open = {
            let mut c = AugmentConfig::default();
            c.flip_prob = 1.0;
            c.grayscale_prob = 1.0;
            c.jitter_prob = 1.0;
            c.perspective_prob = 1.0;
            c
        };
        let closed = AugmentConfig::default().deterministic();
        let mut r1 = Rng::from_seed(77);
        let mut r2 = Rng::from_seed(77);
        apply_augmentations(&img, 16, &open, &mut r1).unwrap();
        apply_augmentations(&img, 16, &closed, &mut r2).unwrap();
        assert_eq!(r1.next_u64(), r2.next_u64());
    }

    #[test]
    fn shape_is_preserved_across_stages() {
        let img = test_image();
        let cfg = AugmentConfig {
            flip_prob: 1.0,
            grayscale_prob: 1.0,
            jitter_prob: 1.0,
            perspective_prob: 1.0,
            ..AugmentConfig::default()
        };
        let out = apply_augmentations(&img, 32, &cfg, &mut Rng::from_seed(5)).unwrap();
        assert_eq!((out.height, out.width, out.channels), (32, 32, 1));
    }

    #[test]
    fn invalid_probability_rejected() {
        let cfg = AugmentConfig {
            flip_prob: 1.5,
            ..AugmentConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
