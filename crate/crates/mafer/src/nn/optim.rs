//! Adam with two learning-rate groups (classifier head vs. backbone) and a
//! reduce-on-plateau scheduler driven by validation accuracy.

use super::model::{CnnModel, ParamGroup};
use super::tensor::Scalar;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Coupled L2: added to the gradient before the moment updates.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GroupLrs {
    pub classifier: f64,
    pub backbone: f64,
}

#[derive(Debug, Clone)]
pub struct AdamState<T: Scalar> {
    pub config: AdamConfig,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(model: &CnnModel<T>, config: AdamConfig) -> Self {
        let sizes: Vec<usize> = model
            .named_parameters()
            .iter()
            .map(|(_, _, p)| p.numel())
            .collect();
        AdamState {
            config,
            m: sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            t: 0,
        }
    }

    /// One optimizer step. `grads` must align with `model.named_parameters()`
    /// order. A non-finite gradient aborts the step untouched.
    pub fn step(
        &mut self,
        model: &mut CnnModel<T>,
        grads: &[Vec<T>],
        lrs: GroupLrs,
    ) -> Result<()> {
        for (i, g) in grads.iter().enumerate() {
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "gradient of parameter {i} contains NaN/Inf; step aborted"
                )));
            }
        }
        self.t += 1;
        let b1 = T::from_f64(self.config.beta1);
        let b2 = T::from_f64(self.config.beta2);
        let one = T::one();
        let eps = T::from_f64(self.config.eps);
        let wd = T::from_f64(self.config.weight_decay);
        let bias1 = T::from_f64(1.0 - self.config.beta1.powi(self.t as i32));
        let bias2 = T::from_f64(1.0 - self.config.beta2.powi(self.t as i32));

        for (idx, (_, group, param)) in model.parameters_mut().into_iter().enumerate() {
            let lr = T::from_f64(match group {
                ParamGroup::Classifier => lrs.classifier,
                ParamGroup::Backbone => lrs.backbone,
            });
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            let g = &grads[idx];
            debug_assert_eq!(param.numel(), g.len());
            for i in 0..param.data.len() {
                let grad = g[i] + wd * param.data[i];
                m[i] = b1 * m[i] + (one - b1) * grad;
                v[i] = b2 * v[i] + (one - b2) * grad * grad;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                param.data[i] = param.data[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Drops all group learning rates by `factor` when the observed metric has
/// not improved by more than `min_delta` for strictly more than `patience`
/// consecutive observations.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    pub patience: usize,
    pub factor: f64,
    pub min_delta: f64,
    pub best_metric: f64,
    pub events_since_best: usize,
    pub lrs: GroupLrs,
    pub drops: usize,
}

impl PlateauScheduler {
    pub fn new(initial: GroupLrs, patience: usize, min_delta: f64) -> Self {
        PlateauScheduler {
            patience,
            factor: 0.1,
            min_delta,
            best_metric: f64::NEG_INFINITY,
            events_since_best: 0,
            lrs: initial,
            drops: 0,
        }
    }

    /// Returns true when this observation triggered a drop.
    pub fn observe(&mut self, val_metric: f64) -> bool {
        if val_metric > self.best_metric + self.min_delta {
            self.best_metric = val_metric;
            self.events_since_best = 0;
            return false;
        }
        self.events_since_best += 1;
        if self.events_since_best > self.patience {
            self.lrs.classifier *= self.factor;
            self.lrs.backbone *= self.factor;
            self.events_since_best = 0;
            self.drops += 1;
            return true;
        }
        false
    }

    pub fn min_lr(&self) -> f64 {
        self.lrs.classifier.min(self.lrs.backbone)
    }
}
