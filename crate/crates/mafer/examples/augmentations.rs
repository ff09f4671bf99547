//! Renders one synthetic glyph, pushes it through the training
//! augmentation pipeline a few times, and writes each variant as a P5
//! pixmap so the stages can be inspected by eye.

use mafer::data::synth::{render_sample, SynthSpec};
use mafer::imageops::augment::apply_augmentations;
use mafer::imageops::{pnm, AugmentConfig};
use mafer::rng::{stream, Rng};

fn main() -> anyhow::Result<()> {
    let spec = SynthSpec {
        native_side: 96,
        noise_sigma: 0.02,
        ..SynthSpec::default()
    };
    let img = render_sample(&spec, 2, 0);

    // keep pixel values in [0,1] so the pixmaps stay viewable
    let cfg = AugmentConfig {
        normalize_mean: vec![0.0],
        normalize_std: vec![1.0],
        ..AugmentConfig::default()
    };

    let dir = std::env::temp_dir().join("mafer_augmentations");
    std::fs::create_dir_all(&dir)?;
    pnm::write_file(&dir.join("original.pgm"), &img)?;
    for variant in 0..6u64 {
        let mut rng = Rng::from_parts(0, &[stream::AUGMENT, variant]);
        let out = apply_augmentations(&img, 64, &cfg, &mut rng)?;
        pnm::write_file(&dir.join(format!("variant_{variant}.pgm")), &out)?;

        // the same sub-stream always reproduces the same variant
        let mut rng2 = Rng::from_parts(0, &[stream::AUGMENT, variant]);
        let again = apply_augmentations(&img, 64, &cfg, &mut rng2)?;
        assert_eq!(out.pixels, again.pixels);
    }
    println!("wrote original + 6 variants to {}", dir.display());
    Ok(())
}
