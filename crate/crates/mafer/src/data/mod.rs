//! Dataset ingestion and sampling: FER2013-style CSV, class-per-directory
//! pixmap trees, a synthetic glyph generator, class-imbalance weights,
//! k-fold planning, and deterministic shuffled batching.

pub mod directory;
pub mod fer_csv;
pub mod folds;
pub mod synth;

pub use directory::load_image_directory;
pub use fer_csv::{load_fer2013_csv, Usage};
pub use folds::{kfold_split, FoldPlan};
pub use synth::{generate_synthetic, SynthSpec};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageops::{pnm, ImageBuffer};
use crate::rng::{stream, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

/// Where a sample's pixels come from. CSV-backed samples keep raw bytes and
/// decode on access so FER-scale data fits modest memory.
#[derive(Debug, Clone)]
pub enum ImageSource {
    Memory(ImageBuffer),
    PixmapFile(PathBuf),
    /// Square grayscale stored as one byte per pixel.
    GrayBytes { side: usize, bytes: Vec<u8> },
}

#[derive(Debug, Clone)]
pub struct SampleRecord {
    pub source: ImageSource,
    pub class_id: usize,
    pub subject_id: Option<u32>,
}

#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub samples: Vec<SampleRecord>,
    pub class_names: Vec<String>,
    pub split_tag: SplitTag,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn label(&self, i: usize) -> usize {
        self.samples[i].class_id
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.class_id).collect()
    }

    /// Decode sample `i` into pixels in [0,1].
    pub fn image(&self, i: usize) -> Result<ImageBuffer> {
        match &self.samples[i].source {
            ImageSource::Memory(img) => Ok(img.clone()),
            ImageSource::PixmapFile(path) => pnm::read_file(path),
            ImageSource::GrayBytes { side, bytes } => {
                let pixels = bytes.iter().map(|&b| b as f32 / 255.0).collect();
                Ok(ImageBuffer::new(*side, *side, 1, pixels)?.with_native(*side))
            }
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes()];
        for s in &self.samples {
            counts[s.class_id] += 1;
        }
        counts
    }

    pub fn has_subject_ids(&self) -> bool {
        self.samples.iter().any(|s| s.subject_id.is_some())
    }

    pub fn subset(&self, indices: &[usize], tag: SplitTag) -> LabeledDataset {
        LabeledDataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            class_names: self.class_names.clone(),
            split_tag: tag,
        }
    }

    /// Deterministic stratified holdout: per class, shuffle with a stream
    /// derived from `seed` and move `val_fraction` of the samples (at least
    /// one when the class has ≥ 2) into the validation set.
    pub fn split_holdout(&self, val_fraction: f64, seed: u64) -> (LabeledDataset, LabeledDataset) {
        let mut train_idx = Vec::new();
        let mut val_idx = Vec::new();
        for c in 0..self.num_classes() {
            let mut idx: Vec<usize> = (0..self.len()).filter(|&i| self.label(i) == c).collect();
            let mut rng = Rng::from_parts(seed, &[stream::SPLIT, c as u64]);
            rng.shuffle(&mut idx);
            let n_val = if idx.len() >= 2 {
                ((idx.len() as f64 * val_fraction).round() as usize).clamp(1, idx.len() - 1)
            } else {
                0
            };
            val_idx.extend_from_slice(&idx[..n_val]);
            train_idx.extend_from_slice(&idx[n_val..]);
        }
        train_idx.sort_unstable();
        val_idx.sort_unstable();
        (
            self.subset(&train_idx, SplitTag::Train),
            self.subset(&val_idx, SplitTag::Val),
        )
    }
}

/// Per-class loss weights: w_c = 1 − n_c / N. Larger classes get strictly
/// smaller weights; the weights do not sum to one.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassWeights {
    pub per_class_count: Vec<usize>,
    pub total_count: usize,
    pub weights: Vec<f64>,
}

impl ClassWeights {
    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::Dataset("no classes to weight".into()));
        }
        if let Some(c) = counts.iter().position(|&n| n == 0) {
            return Err(Error::Dataset(format!(
                "class {c} has no samples; cannot compute weights"
            )));
        }
        let total: usize = counts.iter().sum();
        let weights = counts
            .iter()
            .map(|&n| 1.0 - n as f64 / total as f64)
            .collect();
        Ok(ClassWeights {
            per_class_count: counts.to_vec(),
            total_count: total,
            weights,
        })
    }

    /// Weights to feed the loss. A single-class dataset would get the
    /// degenerate weight 0, which makes the loss vanish; substitute 1 there
    /// (callers should warn).
    pub fn loss_weights(&self) -> Vec<f64> {
        if self.weights.len() == 1 {
            vec![1.0]
        } else {
            self.weights.clone()
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.weights.len() == 1
    }
}

pub fn compute_class_weights(ds: &LabeledDataset) -> Result<ClassWeights> {
    ClassWeights::from_counts(&ds.class_counts())
}

/// Deterministic shuffled batches for one epoch. The last short batch is
/// kept.
pub fn batches(len: usize, batch_size: usize, epoch: u64, seed: u64) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch_size must be at least 1");
    let mut idx: Vec<usize> = (0..len).collect();
    let mut rng = Rng::from_parts(seed, &[stream::BATCH, epoch]);
    rng.shuffle(&mut idx);
    idx.chunks(batch_size).map(|c| c.to_vec()).collect()
}
