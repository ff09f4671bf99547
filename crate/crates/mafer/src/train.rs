//! Two-step training driver: multi-resolution pretraining followed by a
//! single-resolution fine-tuning pass, plus the k-fold evaluation loop.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{batches, compute_class_weights, kfold_split, LabeledDataset, SplitTag};
use crate::error::{Error, Result};
use crate::eval::{batch_tensor, overall_accuracy, predict};
use crate::imageops::augment::{apply_augmentations, AugmentConfig};
use crate::imageops::ImageBuffer;
use crate::multires::{apply_multires, MultiResConfig};
use crate::nn::{
    save_checkpoint, AdamConfig, AdamState, CnnModel, Graph, GroupLrs, ModelConfig,
    PlateauScheduler,
};
use crate::rng::{stream, Rng};

/// Learning rates below this floor end the current training phase.
pub const LR_FLOOR: f64 = 1e-6;

/// Which pipeline to run: fine-tuning only, or multi-resolution
/// pretraining followed by fine-tuning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    Base,
    MaferSimplified,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Step1Config {
    pub lr_classifier: f64,
    pub lr_backbone: f64,
    pub weight_decay: f64,
    /// Steps between validation passes (also the scheduler's event unit).
    pub validate_every: usize,
    /// Plateau patience measured in steps; converted to validation events.
    pub patience_steps: usize,
    pub max_steps: usize,
}

impl Default for Step1Config {
    fn default() -> Self {
        Step1Config {
            lr_classifier: 1e-2,
            lr_backbone: 1e-3,
            weight_decay: 1e-4,
            validate_every: 200,
            patience_steps: 2000,
            max_steps: 20_000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Step2Config {
    /// None means the mode default: 1e-2 after pretraining, 1e-3 otherwise.
    pub lr_classifier: Option<f64>,
    /// None means the mode default: 1e-4 after pretraining, 1e-5 otherwise.
    pub lr_backbone: Option<f64>,
    pub weight_decay: f64,
    pub patience_epochs: usize,
    pub max_epochs: usize,
}

impl Default for Step2Config {
    fn default() -> Self {
        Step2Config {
            lr_classifier: None,
            lr_backbone: None,
            weight_decay: 5e-4,
            patience_epochs: 10,
            max_epochs: 100,
        }
    }
}

impl Step2Config {
    /// Mode-resolved learning rates.
    pub fn lrs(&self, mode: TrainMode) -> GroupLrs {
        let (dc, db) = match mode {
            TrainMode::MaferSimplified => (1e-2, 1e-4),
            TrainMode::Base => (1e-3, 1e-5),
        };
        GroupLrs {
            classifier: self.lr_classifier.unwrap_or(dc),
            backbone: self.lr_backbone.unwrap_or(db),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub mode: TrainMode,
    pub seed: u64,
    pub batch_size: usize,
    /// Fraction of the training set held out for validation.
    pub val_fraction: f64,
    pub model: ModelConfig,
    pub multires: MultiResConfig,
    pub augment: AugmentConfig,
    pub step1: Step1Config,
    pub step2: Step2Config,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: TrainMode::MaferSimplified,
            seed: 0,
            batch_size: 32,
            val_fraction: 0.1,
            model: ModelConfig::default(),
            multires: MultiResConfig::default(),
            augment: AugmentConfig::default(),
            step1: Step1Config::default(),
            step2: Step2Config::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.augment.validate()?;
        self.multires.validate(self.model.input_side)?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) || self.val_fraction <= 0.0 {
            return Err(Error::Config(format!(
                "val_fraction must be in (0, 1), got {}",
                self.val_fraction
            )));
        }
        if self.step1.validate_every == 0 {
            return Err(Error::Config("step1.validate_every must be positive".into()));
        }
        Ok(())
    }
}

/// One logged measurement. `step` is the cumulative optimizer-step count
/// across both phases.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProgressRow {
    pub phase: u8,
    pub step: u64,
    pub split: String,
    pub loss: f64,
    pub acc: f64,
    pub lr_classifier: f64,
    pub lr_backbone: f64,
}

/// Everything a finished run reports. Wall-clock time is kept out of the
/// serialized form so identical runs produce identical JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub history: Vec<ProgressRow>,
    pub final_val_accuracy: f64,
    /// Checkpoint file names, relative to the run's output directory, so
    /// reports from identical runs are byte-identical wherever they land.
    pub checkpoints: Vec<PathBuf>,
    #[serde(skip)]
    pub wall_seconds: f64,
}

impl RunReport {
    /// History as CSV: `step,split,loss,acc,lr_cls,lr_bb`.
    pub fn history_csv(&self) -> String {
        let mut out = String::from("step,split,loss,acc,lr_cls,lr_bb\n");
        for r in &self.history {
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{:e},{:e}\n",
                r.step, r.split, r.loss, r.acc, r.lr_classifier, r.lr_backbone
            ));
        }
        out
    }
}

/// Forward + backward on one prepared batch. Returns (loss, accuracy,
/// per-parameter gradients in `named_parameters` order).
fn batch_step(
    model: &CnnModel<f32>,
    images: &[ImageBuffer],
    labels: &[usize],
    sample_weights: &[f32],
) -> Result<(f64, f64, Vec<Vec<f32>>)> {
    let batch = batch_tensor(images)?;
    let mut graph = Graph::new();
    let fw = model.forward(&mut graph, &batch, true)?;
    let loss = graph.weighted_cross_entropy(fw.logits, labels, sample_weights)?;
    let loss_val = graph.data(loss)[0] as f64;
    let k = model.config.num_classes;
    let correct = graph
        .data(fw.logits)
        .chunks(k)
        .zip(labels)
        .filter(|(row, &y)| {
            row.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0
                == y
        })
        .count();
    graph.backward(loss)?;
    let grads: Vec<Vec<f32>> = fw
        .param_nodes
        .iter()
        .map(|&id| graph.grad(id).to_vec())
        .collect();
    Ok((loss_val, correct as f64 / labels.len() as f64, grads))
}

fn per_sample_weights(loss_weights: &[f64], labels: &[usize]) -> Vec<f32> {
    labels.iter().map(|&y| loss_weights[y] as f32).collect()
}

/// Phase 1: multi-resolution pretraining. Validates every
/// `validate_every` steps; learning rates drop on plateau and the phase
/// ends at the LR floor or the step budget.
pub fn train_step1_multires(
    model: &mut CnnModel<f32>,
    train: &LabeledDataset,
    val: &LabeledDataset,
    cfg: &RunConfig,
    history: &mut Vec<ProgressRow>,
) -> Result<u64> {
    let weights = compute_class_weights(train)?;
    let loss_weights = weights.loss_weights();
    let mut optim = AdamState::new(
        model,
        AdamConfig {
            weight_decay: cfg.step1.weight_decay,
            ..AdamConfig::default()
        },
    );
    let patience_events = (cfg.step1.patience_steps / cfg.step1.validate_every).max(1);
    let mut sched = PlateauScheduler::new(
        GroupLrs {
            classifier: cfg.step1.lr_classifier,
            backbone: cfg.step1.lr_backbone,
        },
        patience_events,
        1e-4,
    );

    let side = model.config.input_side;
    let mut t: u64 = 0;
    'outer: for epoch in 0.. {
        for batch_idx in batches(train.len(), cfg.batch_size, epoch, cfg.seed) {
            let mut images = Vec::with_capacity(batch_idx.len());
            let mut labels = Vec::with_capacity(batch_idx.len());
            for &i in &batch_idx {
                let img = train.image(i)?;
                let mut mr_rng = Rng::from_parts(cfg.seed, &[stream::MULTIRES, t, i as u64]);
                let img = apply_multires(&img, &cfg.multires, side, t, &mut mr_rng)?;
                let mut aug_rng = Rng::from_parts(cfg.seed, &[stream::AUGMENT, 1, t, i as u64]);
                images.push(apply_augmentations(&img, side, &cfg.augment, &mut aug_rng)?);
                labels.push(train.label(i));
            }
            let sw = per_sample_weights(&loss_weights, &labels);
            let (loss, acc, grads) = batch_step(model, &images, &labels, &sw)?;
            optim.step(model, &grads, sched.lrs)?;
            t += 1;

            if t % cfg.step1.validate_every as u64 == 0 {
                history.push(ProgressRow {
                    phase: 1,
                    step: t,
                    split: "train".into(),
                    loss,
                    acc,
                    lr_classifier: sched.lrs.classifier,
                    lr_backbone: sched.lrs.backbone,
                });
                let preds = predict(model, val, cfg.batch_size, &cfg.augment)?;
                let val_acc = overall_accuracy(&preds, &val.labels())?;
                sched.observe(val_acc);
                history.push(ProgressRow {
                    phase: 1,
                    step: t,
                    split: "val".into(),
                    loss: f64::NAN,
                    acc: val_acc,
                    lr_classifier: sched.lrs.classifier,
                    lr_backbone: sched.lrs.backbone,
                });
                if sched.min_lr() < LR_FLOOR {
                    break 'outer;
                }
            }
            if t >= cfg.step1.max_steps as u64 {
                break 'outer;
            }
        }
    }
    Ok(t)
}

/// Phase 2: single-resolution fine-tuning with per-epoch validation and
/// best-validation weight restoration.
pub fn train_step2_task(
    model: &mut CnnModel<f32>,
    train: &LabeledDataset,
    val: &LabeledDataset,
    cfg: &RunConfig,
    start_step: u64,
    history: &mut Vec<ProgressRow>,
) -> Result<f64> {
    let weights = compute_class_weights(train)?;
    let loss_weights = weights.loss_weights();
    let mut optim = AdamState::new(
        model,
        AdamConfig {
            weight_decay: cfg.step2.weight_decay,
            ..AdamConfig::default()
        },
    );
    let mut sched = PlateauScheduler::new(cfg.step2.lrs(cfg.mode), cfg.step2.patience_epochs, 1e-4);

    let side = model.config.input_side;
    let mut best_acc = f64::NEG_INFINITY;
    let mut best_model = model.clone();
    let mut global_step = start_step;
    for epoch in 0..cfg.step2.max_epochs as u64 {
        let mut epoch_loss = 0.0;
        let mut epoch_acc = 0.0;
        let mut batches_seen = 0usize;
        for batch_idx in batches(train.len(), cfg.batch_size, epoch, cfg.seed ^ 0x5f2c) {
            let mut images = Vec::with_capacity(batch_idx.len());
            let mut labels = Vec::with_capacity(batch_idx.len());
            for &i in &batch_idx {
                let img = train.image(i)?;
                let mut aug_rng =
                    Rng::from_parts(cfg.seed, &[stream::AUGMENT, 2, epoch, i as u64]);
                images.push(apply_augmentations(&img, side, &cfg.augment, &mut aug_rng)?);
                labels.push(train.label(i));
            }
            let sw = per_sample_weights(&loss_weights, &labels);
            let (loss, acc, grads) = batch_step(model, &images, &labels, &sw)?;
            optim.step(model, &grads, sched.lrs)?;
            global_step += 1;
            epoch_loss += loss;
            epoch_acc += acc;
            batches_seen += 1;
        }
        history.push(ProgressRow {
            phase: 2,
            step: global_step,
            split: "train".into(),
            loss: epoch_loss / batches_seen as f64,
            acc: epoch_acc / batches_seen as f64,
            lr_classifier: sched.lrs.classifier,
            lr_backbone: sched.lrs.backbone,
        });

        let preds = predict(model, val, cfg.batch_size, &cfg.augment)?;
        let val_acc = overall_accuracy(&preds, &val.labels())?;
        if val_acc > best_acc {
            best_acc = val_acc;
            best_model = model.clone();
        }
        sched.observe(val_acc);
        history.push(ProgressRow {
            phase: 2,
            step: global_step,
            split: "val".into(),
            loss: f64::NAN,
            acc: val_acc,
            lr_classifier: sched.lrs.classifier,
            lr_backbone: sched.lrs.backbone,
        });
        if sched.min_lr() < LR_FLOOR {
            break;
        }
    }
    *model = best_model;
    Ok(best_acc.max(0.0))
}

/// Full run: holdout split, seeded initialization, the phases selected by
/// `cfg.mode`, and optional checkpoints under `out_dir`.
pub fn run_training(
    ds: &LabeledDataset,
    cfg: &RunConfig,
    out_dir: Option<&Path>,
) -> Result<(CnnModel<f32>, RunReport)> {
    cfg.validate()?;
    let started = std::time::Instant::now();
    let (train, val) = ds.split_holdout(cfg.val_fraction, cfg.seed);
    if train.is_empty() || val.is_empty() {
        return Err(Error::Dataset(
            "holdout split produced an empty train or validation set".into(),
        ));
    }

    let mut init_rng = Rng::from_parts(cfg.seed, &[stream::INIT]);
    let mut model = CnnModel::init(cfg.model.clone(), &mut init_rng)?;
    let mut history = Vec::new();
    let mut checkpoints = Vec::new();

    let mut step1_steps = 0;
    if cfg.mode == TrainMode::MaferSimplified {
        step1_steps = train_step1_multires(&mut model, &train, &val, cfg, &mut history)?;
        if let Some(dir) = out_dir {
            save_checkpoint(&dir.join("step1.mafk"), &model, None)?;
            checkpoints.push(PathBuf::from("step1.mafk"));
        }
    }
    let final_val_accuracy =
        train_step2_task(&mut model, &train, &val, cfg, step1_steps, &mut history)?;
    if let Some(dir) = out_dir {
        save_checkpoint(&dir.join("model.mafk"), &model, None)?;
        checkpoints.push(PathBuf::from("model.mafk"));
    }

    let report = RunReport {
        config: cfg.clone(),
        history,
        final_val_accuracy,
        checkpoints,
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    Ok((model, report))
}

/// Per-fold accuracy plus the `mean ± sd` summary (population sd).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KfoldReport {
    pub k: usize,
    pub fold_accuracy: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
}

impl KfoldReport {
    pub fn summary_line(&self) -> String {
        format!("{}-fold accuracy: {:.3} ± {:.3}", self.k, self.mean, self.sd)
    }
}

/// Train one model per fold on the complement and test on the held-out
/// fold. Subject-disjoint folds are used when subject ids are present.
pub fn kfold_evaluate(ds: &LabeledDataset, k: usize, cfg: &RunConfig) -> Result<KfoldReport> {
    let plan = kfold_split(ds, k, cfg.seed)?;
    let mut fold_accuracy = Vec::with_capacity(k);
    for fold in 0..k {
        let test = ds.subset(&plan.fold_indices(fold), SplitTag::Test);
        let train = ds.subset(&plan.complement_indices(fold), SplitTag::Train);
        let fold_cfg = RunConfig {
            seed: cfg.seed.wrapping_add(fold as u64),
            ..cfg.clone()
        };
        let (model, _) = run_training(&train, &fold_cfg, None)?;
        let preds = predict(&model, &test, cfg.batch_size, &cfg.augment)?;
        fold_accuracy.push(overall_accuracy(&preds, &test.labels())?);
    }
    let n = fold_accuracy.len() as f64;
    let mean = fold_accuracy.iter().sum::<f64>() / n;
    let var = fold_accuracy.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    Ok(KfoldReport {
        k,
        fold_accuracy,
        mean,
        sd: var.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SynthSpec};

    fn tiny_run_config() -> RunConfig {
        RunConfig {
            batch_size: 8,
            val_fraction: 0.2,
            model: ModelConfig {
                in_channels: 1,
                channels: vec![4, 8],
                embed_dim: 16,
                num_classes: 3,
                input_side: 32,
            },
            multires: MultiResConfig {
                warmup_steps: 20,
                ..MultiResConfig::default()
            },
            augment: AugmentConfig {
                perspective_prob: 0.0,
                jitter_prob: 0.0,
                ..AugmentConfig::default()
            },
            step1: Step1Config {
                validate_every: 5,
                patience_steps: 20,
                max_steps: 30,
                ..Step1Config::default()
            },
            step2: Step2Config {
                max_epochs: 3,
                ..Step2Config::default()
            },
            ..RunConfig::default()
        }
    }

    fn tiny_dataset() -> LabeledDataset {
        generate_synthetic(&SynthSpec {
            num_classes: 3,
            native_side: 32,
            samples_per_class: 12,
            noise_sigma: 0.02,
            seed: 7,
        })
    }

    #[test]
    fn mode_default_lrs_resolve() {
        let s2 = Step2Config::default();
        let m = s2.lrs(TrainMode::MaferSimplified);
        assert_eq!((m.classifier, m.backbone), (1e-2, 1e-4));
        let b = s2.lrs(TrainMode::Base);
        assert_eq!((b.classifier, b.backbone), (1e-3, 1e-5));
        let overridden = Step2Config {
            lr_classifier: Some(0.5),
            ..Step2Config::default()
        };
        assert_eq!(overridden.lrs(TrainMode::Base).classifier, 0.5);
    }

    #[test]
    fn run_training_is_deterministic() {
        let ds = tiny_dataset();
        let cfg = tiny_run_config();
        let (m1, r1) = run_training(&ds, &cfg, None).unwrap();
        let (m2, r2) = run_training(&ds, &cfg, None).unwrap();
        for ((_, _, a), (_, _, b)) in m1.named_parameters().iter().zip(m2.named_parameters()) {
            assert_eq!(a.data, b.data);
        }
        assert_eq!(
            serde_json::to_string(&r1).unwrap(),
            serde_json::to_string(&r2).unwrap()
        );
    }

    #[test]
    fn different_seeds_differ() {
        let ds = tiny_dataset();
        let cfg = tiny_run_config();
        let other = RunConfig { seed: 1, ..cfg.clone() };
        let (m1, _) = run_training(&ds, &cfg, None).unwrap();
        let (m2, _) = run_training(&ds, &other, None).unwrap();
        let same = m1
            .named_parameters()
            .iter()
            .zip(m2.named_parameters())
            .all(|((_, _, a), (_, _, b))| a.data == b.data);
        assert!(!same, "different seeds should not produce identical weights");
    }

    #[test]
    fn base_mode_skips_phase_one() {
        let ds = tiny_dataset();
        let cfg = RunConfig {
            mode: TrainMode::Base,
            ..tiny_run_config()
        };
        let (_, report) = run_training(&ds, &cfg, None).unwrap();
        assert!(report.history.iter().all(|r| r.phase == 2));
    }

    #[test]
    fn mafer_mode_runs_both_phases() {
        let ds = tiny_dataset();
        let cfg = tiny_run_config();
        let (_, report) = run_training(&ds, &cfg, None).unwrap();
        assert!(report.history.iter().any(|r| r.phase == 1));
        assert!(report.history.iter().any(|r| r.phase == 2));
    }

    #[test]
    fn lrs_never_increase_within_phase() {
        let ds = tiny_dataset();
        let (_, report) = run_training(&ds, &tiny_run_config(), None).unwrap();
        for phase in [1u8, 2] {
            let mut prev = f64::INFINITY;
            for r in report.history.iter().filter(|r| r.phase == phase) {
                assert!(r.lr_classifier <= prev + 1e-18);
                prev = r.lr_classifier;
            }
        }
    }

    #[test]
    fn history_csv_has_header_and_rows() {
        let ds = tiny_dataset();
        let (_, report) = run_training(&ds, &tiny_run_config(), None).unwrap();
        let csv = report.history_csv();
        assert!(csv.starts_with("step,split,loss,acc,lr_cls,lr_bb\n"));
        assert_eq!(csv.lines().count(), report.history.len() + 1);
    }

    #[test]
    fn checkpoints_written_when_out_dir_given() {
        let ds = tiny_dataset();
        let dir = tempfile::tempdir().unwrap();
        let (_, report) = run_training(&ds, &tiny_run_config(), Some(dir.path())).unwrap();
        assert_eq!(report.checkpoints.len(), 2);
        for p in &report.checkpoints {
            assert!(dir.path().join(p).exists());
        }
    }

    #[test]
    fn kfold_reports_k_accuracies() {
        let ds = tiny_dataset();
        let cfg = RunConfig {
            mode: TrainMode::Base,
            step2: Step2Config {
                max_epochs: 1,
                ..Step2Config::default()
            },
            ..tiny_run_config()
        };
        let report = kfold_evaluate(&ds, 3, &cfg).unwrap();
        assert_eq!(report.fold_accuracy.len(), 3);
        assert!(report.mean >= 0.0 && report.mean <= 1.0);
        assert!(report.summary_line().contains("±"));
    }
}
