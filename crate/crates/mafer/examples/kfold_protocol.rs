//! Demonstrates the k-fold protocol: when samples carry subject ids the
//! folds are subject-disjoint, so no identity appears in both the train
//! and test side of any fold.

use mafer::data::{generate_synthetic, kfold_split, SynthSpec};

fn main() -> anyhow::Result<()> {
    // tag the synthetic samples with 10 fake subjects
    let mut ds = generate_synthetic(&SynthSpec {
        num_classes: 3,
        native_side: 32,
        samples_per_class: 20,
        ..SynthSpec::default()
    });
    for (i, s) in ds.samples.iter_mut().enumerate() {
        s.subject_id = Some((i % 10) as u32);
    }

    let k = 5;
    let plan = kfold_split(&ds, k, 0)?;
    for fold in 0..k {
        let test = plan.fold_indices(fold);
        let train = plan.complement_indices(fold);
        let test_subjects: std::collections::BTreeSet<u32> =
            test.iter().map(|&i| ds.samples[i].subject_id.unwrap()).collect();
        let train_subjects: std::collections::BTreeSet<u32> =
            train.iter().map(|&i| ds.samples[i].subject_id.unwrap()).collect();
        let overlap = test_subjects.intersection(&train_subjects).count();
        println!(
            "fold {fold}: {} test samples, subjects {:?}, overlap with train: {overlap}",
            test.len(),
            test_subjects
        );
        assert_eq!(overlap, 0, "folds must be subject-disjoint");
    }
    println!("\nall {k} folds are subject-disjoint");
    Ok(())
}
