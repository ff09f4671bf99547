//! Trains a quick model on the synthetic glyphs and runs the retrieval
//! protocol on its embeddings: correctly classified images become queries,
//! the rest form the gallery, and Precision@k / mAP are reported.

use mafer::data::{generate_synthetic, SynthSpec};
use mafer::eval::{run_cbir, CbirConfig};
use mafer::nn::ModelConfig;
use mafer::train::{run_training, RunConfig, Step2Config, TrainMode};

fn main() -> anyhow::Result<()> {
    let ds = generate_synthetic(&SynthSpec {
        num_classes: 4,
        native_side: 48,
        samples_per_class: 40,
        noise_sigma: 0.04,
        seed: 11,
    });

    let cfg = RunConfig {
        mode: TrainMode::Base,
        seed: 5,
        batch_size: 16,
        val_fraction: 0.15,
        model: ModelConfig {
            in_channels: 1,
            channels: vec![8, 16],
            embed_dim: 32,
            num_classes: 4,
            input_side: 32,
        },
        step2: Step2Config {
            max_epochs: 12,
            patience_epochs: 4,
            ..Step2Config::default()
        },
        ..RunConfig::default()
    };
    let (model, _) = run_training(&ds, &cfg, None)?;

    let cbir = CbirConfig {
        queries_per_class: 10,
        ks: vec![1, 5, 10, 50],
        seed: 5,
        ..CbirConfig::default()
    };
    let report = run_cbir(&model, &ds, cfg.batch_size, &cfg.augment, &cbir)?;

    println!("queries used: {}", report.q);
    for p in &report.precision_at_k {
        println!("precision@{:<3} {:.3} ± {:.3}", p.k, p.mean, p.sd);
    }
    println!("mAP          {:.3} ± {:.3}", report.map_mean, report.map_sd);
    if !report.short_classes.is_empty() {
        println!("classes under quota: {:?}", report.short_classes);
    }
    Ok(())
}
