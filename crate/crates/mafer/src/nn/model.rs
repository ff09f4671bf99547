//! Small CNN classifier: a stack of conv(3x3)-ReLU-maxpool blocks, global
//! average pooling, a linear embedding head, and a linear classifier. The
//! embedding output is the "deep feature" vector used for retrieval.

use serde::{Deserialize, Serialize};

use super::graph::{Graph, NodeId};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub in_channels: usize,
    pub channels: Vec<usize>,
    pub embed_dim: usize,
    pub num_classes: usize,
    pub input_side: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            in_channels: 1,
            channels: vec![16, 32, 64],
            embed_dim: 64,
            num_classes: 6,
            input_side: 64,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() {
            return Err(Error::Config("model.channels must be non-empty".into()));
        }
        if self.embed_dim == 0 || self.num_classes == 0 || self.in_channels == 0 {
            return Err(Error::Config(
                "model dims (in_channels, embed_dim, num_classes) must be positive".into(),
            ));
        }
        let divisor = 1usize << self.channels.len();
        if self.input_side == 0 || self.input_side % divisor != 0 {
            return Err(Error::Config(format!(
                "model.input_side {} must be a positive multiple of {} (2^blocks)",
                self.input_side, divisor
            )));
        }
        Ok(())
    }
}

/// Which learning-rate group a parameter belongs to. The classifier head has
/// its own rate; everything else is "backbone".
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    Backbone,
    Classifier,
}

#[derive(Debug, Clone)]
struct ConvBlock<T: Scalar> {
    weight: Tensor<T>, // out_ch × in_ch × 3 × 3
    bias: Tensor<T>,   // out_ch
}

#[derive(Debug, Clone)]
struct LinearLayer<T: Scalar> {
    weight: Tensor<T>, // out × in
    bias: Tensor<T>,   // out
}

#[derive(Debug, Clone)]
pub struct CnnModel<T: Scalar> {
    pub config: ModelConfig,
    blocks: Vec<ConvBlock<T>>,
    embedding: LinearLayer<T>,
    classifier: LinearLayer<T>,
}

/// Node handles produced by one forward build.
pub struct ForwardPass {
    pub logits: NodeId,
    pub features: NodeId,
    /// Leaf nodes for each parameter, in `named_parameters` order.
    pub param_nodes: Vec<NodeId>,
}

impl<T: Scalar> CnnModel<T> {
    /// He-uniform initialization from the given stream; biases zero.
    pub fn init(config: ModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let mut blocks = Vec::new();
        let mut in_ch = config.in_channels;
        for &out_ch in &config.channels {
            let fan_in = in_ch * 9;
            blocks.push(ConvBlock {
                weight: he_uniform(vec![out_ch, in_ch, 3, 3], fan_in, rng),
                bias: Tensor::zeros(vec![out_ch]),
            });
            in_ch = out_ch;
        }
        let feat_dim = *config.channels.last().unwrap();
        let embedding = LinearLayer {
            weight: he_uniform(vec![config.embed_dim, feat_dim], feat_dim, rng),
            bias: Tensor::zeros(vec![config.embed_dim]),
        };
        let classifier = LinearLayer {
            weight: he_uniform(
                vec![config.num_classes, config.embed_dim],
                config.embed_dim,
                rng,
            ),
            bias: Tensor::zeros(vec![config.num_classes]),
        };
        Ok(CnnModel {
            config,
            blocks,
            embedding,
            classifier,
        })
    }

    /// Build a model with all weights and biases zero (tests, loading).
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut blocks = Vec::new();
        let mut in_ch = config.in_channels;
        for &out_ch in &config.channels {
            blocks.push(ConvBlock {
                weight: Tensor::zeros(vec![out_ch, in_ch, 3, 3]),
                bias: Tensor::zeros(vec![out_ch]),
            });
            in_ch = out_ch;
        }
        let feat_dim = *config.channels.last().unwrap();
        let embedding = LinearLayer {
            weight: Tensor::zeros(vec![config.embed_dim, feat_dim]),
            bias: Tensor::zeros(vec![config.embed_dim]),
        };
        let classifier = LinearLayer {
            weight: Tensor::zeros(vec![config.num_classes, config.embed_dim]),
            bias: Tensor::zeros(vec![config.num_classes]),
        };
        Ok(CnnModel {
            config,
            blocks,
            embedding,
            classifier,
        })
    }

    pub fn named_parameters(&self) -> Vec<(String, ParamGroup, &Tensor<T>)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            out.push((format!("blocks.{i}.conv.weight"), ParamGroup::Backbone, &b.weight));
            out.push((format!("blocks.{i}.conv.bias"), ParamGroup::Backbone, &b.bias));
        }
        out.push((
            "embedding.weight".into(),
            ParamGroup::Backbone,
            &self.embedding.weight,
        ));
        out.push((
            "embedding.bias".into(),
            ParamGroup::Backbone,
            &self.embedding.bias,
        ));
        out.push((
            "classifier.weight".into(),
            ParamGroup::Classifier,
            &self.classifier.weight,
        ));
        out.push((
            "classifier.bias".into(),
            ParamGroup::Classifier,
            &self.classifier.bias,
        ));
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<(String, ParamGroup, &mut Tensor<T>)> {
        let mut out: Vec<(String, ParamGroup, &mut Tensor<T>)> = Vec::new();
        for (i, b) in self.blocks.iter_mut().enumerate() {
            out.push((
                format!("blocks.{i}.conv.weight"),
                ParamGroup::Backbone,
                &mut b.weight,
            ));
            out.push((
                format!("blocks.{i}.conv.bias"),
                ParamGroup::Backbone,
                &mut b.bias,
            ));
        }
        out.push((
            "embedding.weight".into(),
            ParamGroup::Backbone,
            &mut self.embedding.weight,
        ));
        out.push((
            "embedding.bias".into(),
            ParamGroup::Backbone,
            &mut self.embedding.bias,
        ));
        out.push((
            "classifier.weight".into(),
            ParamGroup::Classifier,
            &mut self.classifier.weight,
        ));
        out.push((
            "classifier.bias".into(),
            ParamGroup::Classifier,
            &mut self.classifier.bias,
        ));
        out
    }

    pub fn param_count(&self) -> usize {
        self.named_parameters()
            .iter()
            .map(|(_, _, t)| t.numel())
            .sum()
    }

    /// Build the forward computation on `graph`. `train` controls whether
    /// parameter leaves track gradients.
    pub fn forward(
        &self,
        graph: &mut Graph<T>,
        batch: &Tensor<T>,
        train: bool,
    ) -> Result<ForwardPass> {
        if batch.shape.len() != 4 {
            return Err(Error::Shape(format!(
                "batch must be B×C×H×W, got {:?}",
                batch.shape
            )));
        }
        let (c, h, w) = (batch.shape[1], batch.shape[2], batch.shape[3]);
        if c != self.config.in_channels {
            return Err(Error::Shape(format!(
                "batch has {c} channels, model expects {}",
                self.config.in_channels
            )));
        }
        let divisor = 1usize << self.blocks.len();
        if h % divisor != 0 || w % divisor != 0 {
            return Err(Error::Shape(format!(
                "input {h}×{w} must be a multiple of {divisor} (2^blocks)"
            )));
        }

        let mut param_nodes = Vec::new();
        let push_param =
            |g: &mut Graph<T>, t: &Tensor<T>| g.leaf(t.shape.clone(), t.data.clone(), train);

        let input = graph.leaf(batch.shape.clone(), batch.data.clone(), false);
        let mut x = input;
        for b in &self.blocks {
            let wid = push_param(graph, &b.weight);
            let bid = push_param(graph, &b.bias);
            param_nodes.push(wid);
            param_nodes.push(bid);
            x = graph.conv3x3(x, wid, bid)?;
            x = graph.relu(x);
            x = graph.max_pool2(x)?;
        }
        let pooled = graph.global_avg_pool(x)?;
        let ew = push_param(graph, &self.embedding.weight);
        let eb = push_param(graph, &self.embedding.bias);
        param_nodes.push(ew);
        param_nodes.push(eb);
        let features = graph.linear(pooled, ew, eb)?;
        let cw = push_param(graph, &self.classifier.weight);
        let cb = push_param(graph, &self.classifier.bias);
        param_nodes.push(cw);
        param_nodes.push(cb);
        let logits = graph.linear(features, cw, cb)?;

        Ok(ForwardPass {
            logits,
            features,
            param_nodes,
        })
    }
}

fn he_uniform<T: Scalar>(shape: Vec<usize>, fan_in: usize, rng: &mut Rng) -> Tensor<T> {
    let limit = (6.0 / fan_in as f64).sqrt();
    let numel: usize = shape.iter().product();
    let data = (0..numel)
        .map(|_| T::from_f64(rng.uniform_f64(-limit, limit)))
        .collect();
    Tensor::new(shape, data).unwrap()
}
