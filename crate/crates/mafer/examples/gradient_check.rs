//! Finite-difference gradient check: runs the full network in f64, perturbs
//! a few parameters of every layer, and compares the analytic gradients
//! from the tape against central differences.

use mafer::nn::{CnnModel, Graph, ModelConfig, Tensor};
use mafer::rng::Rng;

fn loss_for(model: &CnnModel<f64>, batch: &Tensor<f64>, labels: &[usize], sw: &[f64]) -> f64 {
    let mut g = Graph::new();
    let fw = model.forward(&mut g, batch, false).unwrap();
    let loss = g.weighted_cross_entropy(fw.logits, labels, sw).unwrap();
    g.data(loss)[0]
}

fn main() -> anyhow::Result<()> {
    let config = ModelConfig {
        in_channels: 1,
        channels: vec![3, 5],
        embed_dim: 7,
        num_classes: 4,
        input_side: 8,
    };
    let mut rng = Rng::from_seed(42);
    let mut model: CnnModel<f64> = CnnModel::init(config, &mut rng)?;

    let batch_data: Vec<f64> = (0..2 * 64).map(|_| rng.uniform_f64(-1.0, 1.0)).collect();
    let batch = Tensor::new(vec![2, 1, 8, 8], batch_data)?;
    let labels = [1usize, 3];
    let sw = [0.7, 1.3];

    // analytic gradients
    let mut g = Graph::new();
    let fw = model.forward(&mut g, &batch, true)?;
    let loss = g.weighted_cross_entropy(fw.logits, &labels, &sw)?;
    g.backward(loss)?;
    let analytic: Vec<Vec<f64>> = fw.param_nodes.iter().map(|&n| g.grad(n).to_vec()).collect();

    let eps = 1e-6;
    let mut worst: f64 = 0.0;
    let names: Vec<String> = model
        .named_parameters()
        .iter()
        .map(|(n, _, _)| n.clone())
        .collect();
    for (pi, name) in names.iter().enumerate() {
        // probe three scattered entries per parameter tensor
        let numel = model.named_parameters()[pi].2.numel();
        for probe in 0..3.min(numel) {
            let j = probe * numel / 3;
            let orig = model.parameters_mut()[pi].2.data[j];
            model.parameters_mut()[pi].2.data[j] = orig + eps;
            let up = loss_for(&model, &batch, &labels, &sw);
            model.parameters_mut()[pi].2.data[j] = orig - eps;
            let down = loss_for(&model, &batch, &labels, &sw);
            model.parameters_mut()[pi].2.data[j] = orig;

            let numeric = (up - down) / (2.0 * eps);
            let exact = analytic[pi][j];
            let rel = (numeric - exact).abs() / numeric.abs().max(exact.abs()).max(1e-8);
            worst = worst.max(rel);
            println!("{name:<24} [{j:>3}]  analytic {exact:>12.6e}  numeric {numeric:>12.6e}  rel {rel:.2e}");
        }
    }
    println!("\nworst relative error: {worst:.2e}");
    assert!(worst < 1e-5, "gradient check failed");
    Ok(())
}
