//! Curriculum multi-resolution transform: with probability p(t) an input
//! image is downsampled to a randomly drawn shortest side (never below the
//! floor, never above its native resolution) and then restored to the fixed
//! network input size.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageops::{bilinear_resize, ImageBuffer};
use crate::rng::Rng;

/// Linear ramp p(t) = p_max · min(1, t / warmup_steps).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurriculumSchedule {
    pub p_max: f64,
    pub warmup_steps: u64,
}

impl Default for CurriculumSchedule {
    fn default() -> Self {
        CurriculumSchedule {
            p_max: 0.75,
            warmup_steps: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolutionLaw {
    Uniform,
    LogUniform,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MultiResConfig {
    pub p_max: f64,
    pub warmup_steps: u64,
    pub min_side: usize,
    pub law: ResolutionLaw,
}

impl Default for MultiResConfig {
    fn default() -> Self {
        MultiResConfig {
            p_max: 0.75,
            warmup_steps: 1000,
            min_side: 16,
            law: ResolutionLaw::Uniform,
        }
    }
}

impl MultiResConfig {
    pub fn schedule(&self) -> CurriculumSchedule {
        CurriculumSchedule {
            p_max: self.p_max,
            warmup_steps: self.warmup_steps,
        }
    }

    pub fn validate(&self, network_input: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_max) {
            return Err(Error::Config(format!(
                "multires.p_max must be in [0,1], got {}",
                self.p_max
            )));
        }
        if self.warmup_steps == 0 {
            return Err(Error::Config("multires.warmup_steps must be positive".into()));
        }
        if self.min_side == 0 || self.min_side > network_input {
            return Err(Error::Config(format!(
                "multires.min_side {} must be in [1, network input {network_input}]",
                self.min_side
            )));
        }
        Ok(())
    }
}

/// Degradation probability at step `t`.
pub fn curriculum_prob(sched: &CurriculumSchedule, t: u64) -> f64 {
    let frac = (t as f64 / sched.warmup_steps as f64).min(1.0);
    sched.p_max * frac
}

/// Draw a target shortest side in [min_side, cap] inclusive.
pub fn sample_target_resolution(cfg: &MultiResConfig, cap: usize, rng: &mut Rng) -> usize {
    match cfg.law {
        ResolutionLaw::Uniform => rng.uniform_usize(cfg.min_side, cap),
        ResolutionLaw::LogUniform => {
            let lo = (cfg.min_side as f64).ln();
            let hi = (cap as f64 + 1.0).ln();
            let r = rng.uniform_f64(lo, hi).exp().floor() as usize;
            r.clamp(cfg.min_side, cap)
        }
    }
}

/// Apply the curriculum transform at step `t` and return an image at
/// `network_input`×`network_input`. Both random draws (gate and target
/// resolution) are consumed on every call so streams stay aligned across
/// branches.
pub fn apply_multires(
    img: &ImageBuffer,
    cfg: &MultiResConfig,
    network_input: usize,
    t: u64,
    rng: &mut Rng,
) -> Result<ImageBuffer> {
    let gate = rng.next_f64();
    let target = sample_target_resolution(cfg, network_input, rng);
    let native = img.native_shortest_side.unwrap_or_else(|| img.shortest_side());

    let degrade = gate < curriculum_prob(&cfg.schedule(), t) && target < native;
    if !degrade {
        return bilinear_resize(img, network_input, network_input);
    }

    // aspect-preserving downsample so the shortest side equals `target`
    let (h, w) = (img.height, img.width);
    let (dh, dw) = if h <= w {
        let dw = ((w as f64 * target as f64 / h as f64).round() as usize).max(1);
        (target, dw)
    } else {
        let dh = ((h as f64 * target as f64 / w as f64).round() as usize).max(1);
        (dh, target)
    };
    let down = bilinear_resize(img, dh, dw)?;
    bilinear_resize(&down, network_input, network_input)
}
