//! Accuracy protocols, confusion matrices, and feature extraction.

pub mod cbir;

pub use cbir::{
    average_precision, knn_classify, mean_average_precision, precision_at_k, run_cbir, CbirConfig,
    CbirReport, QueryEligibility, RetrievalResult,
};

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::imageops::augment::{eval_transform, AugmentConfig};
use crate::imageops::ImageBuffer;
use crate::nn::{CnnModel, Graph, Tensor};

/// Fraction of predictions that match, over all samples at once.
pub fn overall_accuracy(preds: &[usize], labels: &[usize]) -> Result<f64> {
    if preds.is_empty() || preds.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "need equal non-empty prediction/label lists, got {} / {}",
            preds.len(),
            labels.len()
        )));
    }
    let correct = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / preds.len() as f64)
}

/// Mean of per-class recalls, with the population standard deviation over
/// classes. Every class in [0, num_classes) must appear in `labels`.
pub fn average_accuracy(
    preds: &[usize],
    labels: &[usize],
    num_classes: usize,
) -> Result<(f64, f64)> {
    if preds.is_empty() || preds.len() != labels.len() {
        return Err(Error::InvalidArgument(
            "need equal non-empty prediction/label lists".into(),
        ));
    }
    let mut totals = vec![0usize; num_classes];
    let mut correct = vec![0usize; num_classes];
    for (&p, &l) in preds.iter().zip(labels) {
        totals[l] += 1;
        if p == l {
            correct[l] += 1;
        }
    }
    let absent: Vec<usize> = (0..num_classes).filter(|&c| totals[c] == 0).collect();
    if !absent.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "classes absent from labels: {absent:?}"
        )));
    }
    let recalls: Vec<f64> = (0..num_classes)
        .map(|c| correct[c] as f64 / totals[c] as f64)
        .collect();
    let mean = recalls.iter().sum::<f64>() / num_classes as f64;
    let var = recalls.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / num_classes as f64;
    Ok((mean, var.sqrt()))
}

/// K×K confusion counts, rows = true class, columns = predicted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
    pub class_names: Vec<String>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> usize {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    /// Rows rescaled to sum to 1 (empty rows stay zero).
    pub fn row_normalized(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let sum: usize = row.iter().sum();
                row.iter()
                    .map(|&c| {
                        if sum == 0 {
                            0.0
                        } else {
                            c as f64 / sum as f64
                        }
                    })
                    .collect()
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\pred");
        for name in &self.class_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (i, row) in self.counts.iter().enumerate() {
            out.push_str(&self.class_names[i]);
            for &c in row {
                out.push(',');
                out.push_str(&c.to_string());
            }
            out.push('\n');
        }
        out
    }
}

pub fn confusion(
    preds: &[usize],
    labels: &[usize],
    class_names: &[String],
) -> Result<ConfusionMatrix> {
    let k = class_names.len();
    let mut counts = vec![vec![0usize; k]; k];
    for (&p, &l) in preds.iter().zip(labels) {
        if p >= k || l >= k {
            return Err(Error::InvalidArgument(format!(
                "class id out of range [0, {k}): pred {p}, label {l}"
            )));
        }
        counts[l][p] += 1;
    }
    Ok(ConfusionMatrix {
        counts,
        class_names: class_names.to_vec(),
    })
}

/// Stack images into a B×C×H×W tensor. All images must share shape.
pub fn batch_tensor(images: &[ImageBuffer]) -> Result<Tensor<f32>> {
    let first = images
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
    let (h, w, c) = (first.height, first.width, first.channels);
    let mut data = Vec::with_capacity(images.len() * c * h * w);
    for img in images {
        if (img.height, img.width, img.channels) != (h, w, c) {
            return Err(Error::Shape("batch images differ in shape".into()));
        }
        // HWC -> CHW
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    data.push(img.get(y, x, ch));
                }
            }
        }
    }
    Tensor::new(vec![images.len(), c, h, w], data)
}

/// Argmax predictions for a frozen model over an augmentation-free pipeline
/// (resize + normalize only).
pub fn predict(
    model: &CnnModel<f32>,
    ds: &LabeledDataset,
    batch_size: usize,
    aug: &AugmentConfig,
) -> Result<Vec<usize>> {
    predict_at(model, ds, batch_size, aug, None)
}

/// Like `predict`, but first degrades each image to the given shortest
/// side (never upsampling past its native resolution).
pub fn predict_at(
    model: &CnnModel<f32>,
    ds: &LabeledDataset,
    batch_size: usize,
    aug: &AugmentConfig,
    degrade_to: Option<usize>,
) -> Result<Vec<usize>> {
    let mut preds = Vec::with_capacity(ds.len());
    let side = model.config.input_side;
    let idx: Vec<usize> = (0..ds.len()).collect();
    for chunk in idx.chunks(batch_size.max(1)) {
        let images: Vec<ImageBuffer> = chunk
            .iter()
            .map(|&i| {
                let img = ds.image(i)?;
                let img = match degrade_to {
                    Some(r) => degrade_image(&img, r)?,
                    None => img,
                };
                eval_transform(&img, side, aug)
            })
            .collect::<Result<_>>()?;
        let batch = batch_tensor(&images)?;
        let mut graph = Graph::new();
        let fw = model.forward(&mut graph, &batch, false)?;
        let logits = graph.data(fw.logits);
        let k = model.config.num_classes;
        for row in logits.chunks(k) {
            let arg = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            preds.push(arg);
        }
    }
    Ok(preds)
}

/// Embedding vectors for every sample, in dataset order, via the
/// deterministic resize + normalize pipeline.
pub fn extract_features(
    model: &CnnModel<f32>,
    ds: &LabeledDataset,
    batch_size: usize,
    aug: &AugmentConfig,
) -> Result<(Vec<Vec<f32>>, Vec<usize>)> {
    extract_features_at(model, ds, batch_size, aug, None)
}

/// Like `extract_features`, but first degrades each image to the given
/// shortest side (never upsampling past its native resolution).
pub fn extract_features_at(
    model: &CnnModel<f32>,
    ds: &LabeledDataset,
    batch_size: usize,
    aug: &AugmentConfig,
    degrade_to: Option<usize>,
) -> Result<(Vec<Vec<f32>>, Vec<usize>)> {
    let mut features = Vec::with_capacity(ds.len());
    let side = model.config.input_side;
    let idx: Vec<usize> = (0..ds.len()).collect();
    for chunk in idx.chunks(batch_size.max(1)) {
        let images: Vec<ImageBuffer> = chunk
            .iter()
            .map(|&i| {
                let img = ds.image(i)?;
                let img = match degrade_to {
                    Some(r) => degrade_image(&img, r)?,
                    None => img,
                };
                eval_transform(&img, side, aug)
            })
            .collect::<Result<_>>()?;
        let batch = batch_tensor(&images)?;
        let mut graph = Graph::new();
        let fw = model.forward(&mut graph, &batch, false)?;
        let d = model.config.embed_dim;
        for row in graph.data(fw.features).chunks(d) {
            features.push(row.to_vec());
        }
    }
    Ok((features, ds.labels()))
}

/// Resolution degradation used by evaluation sweeps: downsample so the
/// shortest side is `target` (aspect preserved), unless the image is already
/// at or below that resolution.
pub fn degrade_image(img: &ImageBuffer, target: usize) -> Result<ImageBuffer> {
    let native = img
        .native_shortest_side
        .unwrap_or_else(|| img.shortest_side());
    if target >= native {
        return Ok(img.clone());
    }
    let (h, w) = (img.height, img.width);
    let (dh, dw) = if h <= w {
        (target, ((w as f64 * target as f64 / h as f64).round() as usize).max(1))
    } else {
        (((h as f64 * target as f64 / w as f64).round() as usize).max(1), target)
    };
    crate::imageops::bilinear_resize(img, dh, dw)
}

/// Features exported as CSV `sample_id,label,f0..f{D-1}`.
pub fn features_to_csv(features: &[Vec<f32>], labels: &[usize]) -> String {
    let d = features.first().map(|f| f.len()).unwrap_or(0);
    let mut out = String::from("sample_id,label");
    for i in 0..d {
        out.push_str(&format!(",f{i}"));
    }
    out.push('\n');
    for (i, (f, l)) in features.iter().zip(labels).enumerate() {
        out.push_str(&format!("{i},{l}"));
        for v in f {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SynthSpec};
    use crate::nn::ModelConfig;

    #[test]
    fn overall_accuracy_counts() {
        assert_eq!(overall_accuracy(&[0, 1, 1], &[0, 1, 0]).unwrap(), 2.0 / 3.0);
        assert_eq!(overall_accuracy(&[2, 2], &[2, 2]).unwrap(), 1.0);
        assert!(overall_accuracy(&[], &[]).is_err());
    }

    #[test]
    fn overall_equals_confusion_trace() {
        let preds = [0, 1, 2, 1, 0, 2, 2];
        let labels = [0, 1, 1, 1, 2, 2, 0];
        let names: Vec<String> = (0..3).map(|c| format!("c{c}")).collect();
        let cm = confusion(&preds, &labels, &names).unwrap();
        let acc = overall_accuracy(&preds, &labels).unwrap();
        assert!((acc - cm.trace() as f64 / cm.total() as f64).abs() < 1e-12);
    }

    #[test]
    fn average_accuracy_hand_case() {
        let (mean, _) = average_accuracy(&[0, 0, 0, 0], &[0, 0, 0, 1], 2).unwrap();
        assert!((mean - 0.5).abs() < 1e-12);
    }

    #[test]
    fn average_accuracy_balanced_equals_overall() {
        let preds = [0, 1, 0, 1];
        let labels = [0, 1, 1, 1];
        // not balanced; use a balanced case
        let preds2 = [0, 0, 1, 1];
        let labels2 = [0, 1, 1, 0];
        let (avg, _) = average_accuracy(&preds2, &labels2, 2).unwrap();
        let overall = overall_accuracy(&preds2, &labels2).unwrap();
        assert!((avg - overall).abs() < 1e-12);
        let _ = (preds, labels);
    }

    #[test]
    fn equal_recalls_have_zero_sd() {
        let (_, sd) = average_accuracy(&[0, 1], &[0, 1], 2).unwrap();
        assert_eq!(sd, 0.0);
    }

    #[test]
    fn absent_class_is_reported() {
        match average_accuracy(&[0, 0], &[0, 0], 2) {
            Err(Error::InvalidArgument(msg)) => assert!(msg.contains('1'), "{msg}"),
            other => panic!("expected error, got {other:?}"),
        }
    }

    #[test]
    fn confusion_perfect_is_diagonal() {
        let names: Vec<String> = (0..3).map(|c| format!("c{c}")).collect();
        let cm = confusion(&[0, 1, 2], &[0, 1, 2], &names).unwrap();
        assert_eq!(cm.trace(), 3);
        assert_eq!(cm.total(), 3);
    }

    #[test]
    fn confusion_single_off_diagonal() {
        let names: Vec<String> = (0..6).map(|c| format!("c{c}")).collect();
        let cm = confusion(&[5], &[2], &names).unwrap();
        assert_eq!(cm.counts[2][5], 1);
        assert_eq!(cm.total(), 1);
    }

    #[test]
    fn row_normalized_rows_sum_to_one() {
        let names: Vec<String> = (0..2).map(|c| format!("c{c}")).collect();
        let cm = confusion(&[0, 1, 1, 0], &[0, 0, 1, 1], &names).unwrap();
        for row in cm.row_normalized() {
            let s: f64 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn confusion_rejects_out_of_range() {
        let names: Vec<String> = (0..2).map(|c| format!("c{c}")).collect();
        assert!(confusion(&[2], &[0], &names).is_err());
    }

    #[test]
    fn zero_weight_model_features_are_constant() {
        let cfg = ModelConfig {
            in_channels: 1,
            channels: vec![4],
            embed_dim: 4,
            num_classes: 3,
            input_side: 16,
        };
        let model = CnnModel::<f32>::zeros(cfg).unwrap();
        let ds = generate_synthetic(&SynthSpec {
            num_classes: 3,
            samples_per_class: 2,
            native_side: 16,
            ..SynthSpec::default()
        });
        let aug = AugmentConfig::default();
        let (features, labels) = extract_features(&model, &ds, 4, &aug).unwrap();
        assert_eq!(labels.len(), 6);
        for f in &features[1..] {
            assert_eq!(f, &features[0]);
        }
    }

    #[test]
    fn duplicate_samples_have_identical_feature_rows() {
        let spec = SynthSpec {
            num_classes: 2,
            samples_per_class: 1,
            native_side: 16,
            ..SynthSpec::default()
        };
        let mut ds = generate_synthetic(&spec);
        let dup = ds.samples[0].clone();
        ds.samples.push(dup);
        let cfg = ModelConfig {
            in_channels: 1,
            channels: vec![4],
            embed_dim: 8,
            num_classes: 2,
            input_side: 16,
        };
        let mut rng = crate::Rng::from_seed(3);
        let model = CnnModel::<f32>::init(cfg, &mut rng).unwrap();
        let aug = AugmentConfig::default();
        let (features, _) = extract_features(&model, &ds, 2, &aug).unwrap();
        assert_eq!(features[0], features[2]);
        assert_eq!(features[0].len(), 8);
    }
}
