//! Shows the multi-resolution curriculum: the degradation probability
//! ramps up over training, and degraded targets are drawn between the
//! floor resolution and the network input.

use mafer::multires::{apply_multires, curriculum_prob, MultiResConfig};
use mafer::rng::{stream, Rng};

fn main() -> anyhow::Result<()> {
    let cfg = MultiResConfig::default();
    let sched = cfg.schedule();

    println!("step      p(degrade)");
    for t in [0u64, 100, 250, 500, 750, 1000, 2000] {
        println!("{t:>6}    {:.3}", curriculum_prob(&sched, t));
    }

    // empirical degradation rate at full ramp on a 128px image
    let mut rng = Rng::from_seed(0);
    let px: Vec<f32> = (0..128 * 128).map(|_| rng.next_f32()).collect();
    let img = mafer::imageops::ImageBuffer::new(128, 128, 1, px)?.with_native(128);

    let network_input = 64;
    let trials = 2000u64;
    let mut degraded = 0;
    for i in 0..trials {
        let mut r = Rng::from_parts(7, &[stream::MULTIRES, i]);
        let out = apply_multires(&img, &cfg, network_input, 10_000, &mut r)?;
        // the non-degraded path is a plain resize; compare against it
        let plain = mafer::imageops::bilinear_resize(&img, network_input, network_input)?;
        if out.pixels != plain.pixels {
            degraded += 1;
        }
    }
    println!(
        "\nat step 10000: {degraded}/{trials} samples degraded (expected ≈ {:.0})",
        cfg.p_max * trials as f64 * 63.0 / 64.0 // target may equal the cap
    );
    Ok(())
}
