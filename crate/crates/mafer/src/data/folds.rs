//! k-fold planning. When subject ids exist, whole subjects are assigned to
//! folds (no identity leaks across a fold boundary); otherwise folds are
//! stratified by class with sizes within ±1 of proportional.

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::{stream, Rng};

#[derive(Debug, Clone)]
pub struct FoldPlan {
    pub k: usize,
    /// sample index → fold id in [0, k)
    pub assignments: Vec<usize>,
}

impl FoldPlan {
    pub fn fold_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == fold)
            .collect()
    }

    pub fn complement_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] != fold)
            .collect()
    }
}

pub fn kfold_split(ds: &LabeledDataset, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidArgument("k must be at least 2".into()));
    }
    if k > ds.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds dataset size {}",
            ds.len()
        )));
    }

    let mut assignments = vec![0usize; ds.len()];
    if ds.has_subject_ids() {
        // group by subject; samples without an id become singleton groups
        let mut subjects: Vec<(Option<u32>, Vec<usize>)> = Vec::new();
        for (i, s) in ds.samples.iter().enumerate() {
            match s.subject_id {
                Some(id) => {
                    if let Some(entry) = subjects.iter_mut().find(|(sid, _)| *sid == Some(id)) {
                        entry.1.push(i);
                    } else {
                        subjects.push((Some(id), vec![i]));
                    }
                }
                None => subjects.push((None, vec![i])),
            }
        }
        if k > subjects.len() {
            return Err(Error::InvalidArgument(format!(
                "k = {k} exceeds the {} distinct subjects",
                subjects.len()
            )));
        }
        let mut order: Vec<usize> = (0..subjects.len()).collect();
        let mut rng = Rng::from_parts(seed, &[stream::FOLD]);
        rng.shuffle(&mut order);
        for (slot, &subj) in order.iter().enumerate() {
            let fold = slot % k;
            for &i in &subjects[subj].1 {
                assignments[i] = fold;
            }
        }
    } else {
        // stratified: shuffle within each class, assign with one rolling
        // round-robin counter so both per-class and global sizes stay within ±1
        let mut rng = Rng::from_parts(seed, &[stream::FOLD]);
        let mut counter = 0usize;
        for c in 0..ds.num_classes() {
            let mut idx: Vec<usize> = (0..ds.len()).filter(|&i| ds.label(i) == c).collect();
            rng.shuffle(&mut idx);
            for &i in &idx {
                assignments[i] = counter % k;
                counter += 1;
            }
        }
    }
    Ok(FoldPlan { k, assignments })
}
