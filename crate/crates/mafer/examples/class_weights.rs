//! Computes per-class loss weights (w = 1 − n/N) from the class counts of
//! a well-known facial-expression training split and prints the table.

use mafer::data::ClassWeights;

fn main() -> anyhow::Result<()> {
    let names = [
        "anger",
        "disgust",
        "fear",
        "happiness",
        "sadness",
        "surprise",
        "neutral",
    ];
    let counts = [3995usize, 436, 4097, 7215, 4830, 3171, 4965];

    let weights = ClassWeights::from_counts(&counts)?;
    let lw = weights.loss_weights();
    println!("class       count   weight");
    for i in 0..names.len() {
        println!("{:<10} {:>6}   {:.3}", names[i], counts[i], lw[i]);
    }
    println!("\nrarer classes get larger weights; the majority class is damped most");
    Ok(())
}
