//! Finite-difference oracle for the analytic gradients: the full network
//! is instantiated in f64 across many random configurations and every
//! parameter entry is compared against central differences.

use mafer::nn::{CnnModel, Graph, ModelConfig, Tensor};
use mafer::rng::Rng;

fn loss_for(model: &CnnModel<f64>, batch: &Tensor<f64>, labels: &[usize], sw: &[f64]) -> f64 {
    let mut g = Graph::new();
    let fw = model.forward(&mut g, batch, false).unwrap();
    let loss = g.weighted_cross_entropy(fw.logits, labels, sw).unwrap();
    g.data(loss)[0]
}

/// Worst relative error across every parameter entry of one random setup.
fn check_one(rng: &mut Rng) -> f64 {
    let blocks = rng.uniform_usize(1, 2);
    let channels: Vec<usize> = (0..blocks).map(|_| rng.uniform_usize(2, 4)).collect();
    let num_classes = rng.uniform_usize(2, 5);
    let config = ModelConfig {
        in_channels: if rng.next_f64() < 0.5 { 1 } else { 3 },
        channels,
        embed_dim: rng.uniform_usize(3, 8),
        num_classes,
        input_side: 4 * (1 << blocks), // divisible by 2^blocks, small for speed
    };
    let mut model: CnnModel<f64> = CnnModel::init(config.clone(), rng).unwrap();

    let bsz = rng.uniform_usize(1, 3);
    let numel = bsz * config.in_channels * config.input_side * config.input_side;
    let batch = Tensor::new(
        vec![bsz, config.in_channels, config.input_side, config.input_side],
        (0..numel).map(|_| rng.uniform_f64(-1.0, 1.0)).collect(),
    )
    .unwrap();
    let labels: Vec<usize> = (0..bsz).map(|_| rng.uniform_usize(0, num_classes - 1)).collect();
    let sw: Vec<f64> = (0..bsz).map(|_| rng.uniform_f64(0.3, 1.7)).collect();

    let mut g = Graph::new();
    let fw = model.forward(&mut g, &batch, true).unwrap();
    let loss = g.weighted_cross_entropy(fw.logits, &labels, &sw).unwrap();
    g.backward(loss).unwrap();
    let analytic: Vec<Vec<f64>> = fw.param_nodes.iter().map(|&n| g.grad(n).to_vec()).collect();

    let eps = 1e-6;
    let mut worst: f64 = 0.0;
    let n_params = model.named_parameters().len();
    for pi in 0..n_params {
        for j in 0..analytic[pi].len() {
            let orig = model.parameters_mut()[pi].2.data[j];
            model.parameters_mut()[pi].2.data[j] = orig + eps;
            let up = loss_for(&model, &batch, &labels, &sw);
            model.parameters_mut()[pi].2.data[j] = orig - eps;
            let down = loss_for(&model, &batch, &labels, &sw);
            model.parameters_mut()[pi].2.data[j] = orig;

            let numeric = (up - down) / (2.0 * eps);
            let exact = analytic[pi][j];
            // floor of 1e-3 keeps the check relative where gradients are
            // O(1) while allowing for fd roundoff (~1e-10 absolute) on
            // near-zero entries; a wrong analytic gradient would still
            // trip the 1e-8 absolute tolerance this implies
            let rel = (numeric - exact).abs() / numeric.abs().max(exact.abs()).max(1e-3);
            worst = worst.max(rel);
        }
    }
    worst
}

#[test]
fn finite_differences_agree_across_20_random_configs() {
    let mut rng = Rng::from_seed(2024);
    for case in 0..20 {
        let worst = check_one(&mut rng);
        assert!(
            worst < 1e-5,
            "config {case}: worst relative gradient error {worst:.3e} exceeds 1e-5"
        );
    }
}

#[test]
fn gradients_vanish_for_irrelevant_batch_entries() {
    // two identical samples with weights (w, 0): the zero-weight sample
    // must contribute nothing, so doubling the other's weight halves nothing
    let config = ModelConfig {
        in_channels: 1,
        channels: vec![3],
        embed_dim: 4,
        num_classes: 3,
        input_side: 8,
    };
    let mut rng = Rng::from_seed(5);
    let model: CnnModel<f64> = CnnModel::init(config, &mut rng).unwrap();
    let one: Vec<f64> = (0..64).map(|_| rng.uniform_f64(-1.0, 1.0)).collect();
    let other: Vec<f64> = (0..64).map(|_| rng.uniform_f64(-1.0, 1.0)).collect();
    let mut both = one.clone();
    both.extend_from_slice(&other);
    let batch = Tensor::new(vec![2, 1, 8, 8], both).unwrap();
    let solo = Tensor::new(vec![1, 1, 8, 8], one).unwrap();

    let grads = |batch: &Tensor<f64>, labels: &[usize], sw: &[f64]| -> Vec<Vec<f64>> {
        let mut g = Graph::new();
        let fw = model.forward(&mut g, batch, true).unwrap();
        let loss = g.weighted_cross_entropy(fw.logits, labels, sw).unwrap();
        g.backward(loss).unwrap();
        fw.param_nodes.iter().map(|&n| g.grad(n).to_vec()).collect()
    };
    // weighted mean normalization: a zero-weight companion changes nothing
    let masked = grads(&batch, &[1, 2], &[0.8, 0.0]);
    let alone = grads(&solo, &[1], &[0.8]);
    for (a, b) in masked.iter().zip(&alone) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
    }
}
