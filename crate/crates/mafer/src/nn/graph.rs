//! Reverse-mode autodiff tape specialized to the ops this crate's CNN needs:
//! 3x3 same-padding convolution, ReLU, 2x2 max pooling, global average
//! pooling, linear layers, and weighted softmax cross-entropy.
//!
//! A forward pass builds nodes on a fresh `Graph`; `backward` walks the tape
//! in reverse exactly once. Parameters enter the graph as leaves and their
//! gradients are read back out by the optimizer.

use super::tensor::Scalar;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Conv3x3 {
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
    },
    Relu {
        input: NodeId,
    },
    Square {
        input: NodeId,
    },
    MaxPool2 {
        input: NodeId,
        argmax: Vec<usize>,
    },
    GlobalAvgPool {
        input: NodeId,
    },
    Linear {
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
    },
    WeightedCrossEntropy {
        logits: NodeId,
        labels: Vec<usize>,
        sample_weights: Vec<T>,
        softmax: Vec<T>,
    },
}

#[derive(Debug)]
struct Node<T> {
    shape: Vec<usize>,
    data: Vec<T>,
    grad: Vec<T>,
    needs_grad: bool,
    op: Op<T>,
}

#[derive(Debug)]
pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
    consumed: bool,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            consumed: false,
        }
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<T>, needs_grad: bool, op: Op<T>) -> NodeId {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.nodes.push(Node {
            shape,
            data,
            grad: Vec::new(),
            needs_grad,
            op,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, shape: Vec<usize>, data: Vec<T>, needs_grad: bool) -> NodeId {
        self.push(shape, data, needs_grad, Op::Leaf)
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn data(&self, id: NodeId) -> &[T] {
        &self.nodes[id.0].data
    }

    /// Gradient of a node after `backward`. Empty slice if the node did not
    /// require gradients.
    pub fn grad(&self, id: NodeId) -> &[T] {
        &self.nodes[id.0].grad
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// 3x3 convolution, stride 1, zero padding 1. Input B×C×H×W, weight
    /// O×C×3×3, bias O; output B×O×H×W.
    pub fn conv3x3(&mut self, input: NodeId, weight: NodeId, bias: NodeId) -> Result<NodeId> {
        let ishape = self.shape(input).to_vec();
        let wshape = self.shape(weight).to_vec();
        let bshape = self.shape(bias).to_vec();
        if ishape.len() != 4 {
            return Err(Error::Shape(format!(
                "conv3x3 input must be B×C×H×W, got {ishape:?}"
            )));
        }
        let (bsz, in_ch, h, w) = (ishape[0], ishape[1], ishape[2], ishape[3]);
        if wshape != [wshape[0], in_ch, 3, 3] || wshape.len() != 4 {
            return Err(Error::Shape(format!(
                "conv3x3 weight must be O×{in_ch}×3×3, got {wshape:?}"
            )));
        }
        let out_ch = wshape[0];
        if bshape != [out_ch] {
            return Err(Error::Shape(format!(
                "conv3x3 bias must be [{out_ch}], got {bshape:?}"
            )));
        }

        let mut out = vec![T::zero(); bsz * out_ch * h * w];
        {
            let inp = &self.nodes[input.0].data;
            let wt = &self.nodes[weight.0].data;
            let bs = &self.nodes[bias.0].data;
            for b in 0..bsz {
                for o in 0..out_ch {
                    let out_plane = &mut out[(b * out_ch + o) * h * w..(b * out_ch + o + 1) * h * w];
                    let bias_val = bs[o];
                    for v in out_plane.iter_mut() {
                        *v = bias_val;
                    }
                    for c in 0..in_ch {
                        let in_plane = &inp[(b * in_ch + c) * h * w..(b * in_ch + c + 1) * h * w];
                        let wbase = (o * in_ch + c) * 9;
                        for ky in 0..3usize {
                            let dy = ky as isize - 1;
                            for kx in 0..3usize {
                                let dx = kx as isize - 1;
                                let wv = wt[wbase + ky * 3 + kx];
                                if wv == T::zero() {
                                    continue;
                                }
                                let y0 = (-dy).max(0) as usize;
                                let y1 = ((h as isize - dy).min(h as isize)) as usize;
                                let x0 = (-dx).max(0) as usize;
                                let x1 = ((w as isize - dx).min(w as isize)) as usize;
                                for y in y0..y1 {
                                    let sy = (y as isize + dy) as usize;
                                    let orow = &mut out_plane[y * w + x0..y * w + x1];
                                    let irow = &in_plane
                                        [sy * w + (x0 as isize + dx) as usize..]
                                        [..x1 - x0];
                                    for (ov, iv) in orow.iter_mut().zip(irow) {
                                        *ov = *ov + wv * *iv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        let needs = self.needs(input) || self.needs(weight) || self.needs(bias);
        Ok(self.push(
            vec![bsz, out_ch, h, w],
            out,
            needs,
            Op::Conv3x3 {
                input,
                weight,
                bias,
            },
        ))
    }

    pub fn relu(&mut self, input: NodeId) -> NodeId {
        let data: Vec<T> = self.nodes[input.0]
            .data
            .iter()
            .map(|&x| if x > T::zero() { x } else { T::zero() })
            .collect();
        let shape = self.shape(input).to_vec();
        let needs = self.needs(input);
        self.push(shape, data, needs, Op::Relu { input })
    }

    /// Elementwise square.
    pub fn square(&mut self, input: NodeId) -> NodeId {
        let data: Vec<T> = self.nodes[input.0].data.iter().map(|&x| x * x).collect();
        let shape = self.shape(input).to_vec();
        let needs = self.needs(input);
        self.push(shape, data, needs, Op::Square { input })
    }

    /// 2x2 max pooling with stride 2. H and W must be even.
    pub fn max_pool2(&mut self, input: NodeId) -> Result<NodeId> {
        let ishape = self.shape(input).to_vec();
        if ishape.len() != 4 || ishape[2] % 2 != 0 || ishape[3] % 2 != 0 {
            return Err(Error::Shape(format!(
                "max_pool2 needs B×C×H×W with even H, W; got {ishape:?}"
            )));
        }
        let (bsz, ch, h, w) = (ishape[0], ishape[1], ishape[2], ishape[3]);
        let (oh, ow) = (h / 2, w / 2);
        let mut out = Vec::with_capacity(bsz * ch * oh * ow);
        let mut argmax = Vec::with_capacity(bsz * ch * oh * ow);
        {
            let inp = &self.nodes[input.0].data;
            for bc in 0..bsz * ch {
                let plane = &inp[bc * h * w..(bc + 1) * h * w];
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best_idx = (2 * oy) * w + 2 * ox;
                        let mut best = plane[best_idx];
                        for (dy, dx) in [(0usize, 1usize), (1, 0), (1, 1)] {
                            let idx = (2 * oy + dy) * w + 2 * ox + dx;
                            if plane[idx] > best {
                                best = plane[idx];
                                best_idx = idx;
                            }
                        }
                        out.push(best);
                        argmax.push(bc * h * w + best_idx);
                    }
                }
            }
        }
        let needs = self.needs(input);
        Ok(self.push(
            vec![bsz, ch, oh, ow],
            out,
            needs,
            Op::MaxPool2 { input, argmax },
        ))
    }

    /// B×C×H×W → B×C spatial mean.
    pub fn global_avg_pool(&mut self, input: NodeId) -> Result<NodeId> {
        let ishape = self.shape(input).to_vec();
        if ishape.len() != 4 {
            return Err(Error::Shape(format!(
                "global_avg_pool needs B×C×H×W, got {ishape:?}"
            )));
        }
        let (bsz, ch, h, w) = (ishape[0], ishape[1], ishape[2], ishape[3]);
        let area = T::from_f64((h * w) as f64);
        let mut out = Vec::with_capacity(bsz * ch);
        {
            let inp = &self.nodes[input.0].data;
            for bc in 0..bsz * ch {
                let mut acc = T::zero();
                for &v in &inp[bc * h * w..(bc + 1) * h * w] {
                    acc = acc + v;
                }
                out.push(acc / area);
            }
        }
        let needs = self.needs(input);
        Ok(self.push(vec![bsz, ch], out, needs, Op::GlobalAvgPool { input }))
    }

    /// Affine layer: input B×In, weight Out×In, bias Out → B×Out.
    pub fn linear(&mut self, input: NodeId, weight: NodeId, bias: NodeId) -> Result<NodeId> {
        let ishape = self.shape(input).to_vec();
        let wshape = self.shape(weight).to_vec();
        if ishape.len() != 2 || wshape.len() != 2 || ishape[1] != wshape[1] {
            return Err(Error::Shape(format!(
                "linear: input {ishape:?} incompatible with weight {wshape:?}"
            )));
        }
        let (bsz, in_dim) = (ishape[0], ishape[1]);
        let out_dim = wshape[0];
        if self.shape(bias) != [out_dim] {
            return Err(Error::Shape(format!(
                "linear bias must be [{out_dim}], got {:?}",
                self.shape(bias)
            )));
        }
        let mut out = Vec::with_capacity(bsz * out_dim);
        {
            let inp = &self.nodes[input.0].data;
            let wt = &self.nodes[weight.0].data;
            let bs = &self.nodes[bias.0].data;
            for b in 0..bsz {
                let row = &inp[b * in_dim..(b + 1) * in_dim];
                for o in 0..out_dim {
                    let wrow = &wt[o * in_dim..(o + 1) * in_dim];
                    let mut acc = bs[o];
                    for (x, w) in row.iter().zip(wrow) {
                        acc = acc + *x * *w;
                    }
                    out.push(acc);
                }
            }
        }
        let needs = self.needs(input) || self.needs(weight) || self.needs(bias);
        Ok(self.push(
            vec![bsz, out_dim],
            out,
            needs,
            Op::Linear {
                input,
                weight,
                bias,
            },
        ))
    }

    /// Weighted softmax cross-entropy over logits B×K.
    ///
    /// loss = Σ_i w_i · (−log softmax(logits_i)[y_i]) / Σ_i w_i
    pub fn weighted_cross_entropy(
        &mut self,
        logits: NodeId,
        labels: &[usize],
        sample_weights: &[T],
    ) -> Result<NodeId> {
        let lshape = self.shape(logits).to_vec();
        if lshape.len() != 2 || lshape[0] != labels.len() || labels.len() != sample_weights.len() {
            return Err(Error::Shape(format!(
                "cross entropy: logits {lshape:?} vs {} labels, {} weights",
                labels.len(),
                sample_weights.len()
            )));
        }
        let (bsz, k) = (lshape[0], lshape[1]);
        for (i, &y) in labels.iter().enumerate() {
            if y >= k {
                return Err(Error::InvalidArgument(format!(
                    "label {y} out of range [0, {k}) at batch index {i}"
                )));
            }
        }
        let mut weight_sum = T::zero();
        for &w in sample_weights {
            weight_sum = weight_sum + w;
        }
        if weight_sum <= T::zero() {
            return Err(Error::InvalidArgument(
                "sum of sample weights must be positive".into(),
            ));
        }

        let mut softmax = vec![T::zero(); bsz * k];
        let mut loss = T::zero();
        {
            let lg = &self.nodes[logits.0].data;
            for i in 0..bsz {
                let row = &lg[i * k..(i + 1) * k];
                let max = row.iter().cloned().fold(row[0], |a, b| a.max(b));
                let mut denom = T::zero();
                for (j, &x) in row.iter().enumerate() {
                    let e = (x - max).exp();
                    softmax[i * k + j] = e;
                    denom = denom + e;
                }
                for j in 0..k {
                    softmax[i * k + j] = softmax[i * k + j] / denom;
                }
                let p = softmax[i * k + labels[i]];
                loss = loss - sample_weights[i] * p.ln();
            }
        }
        loss = loss / weight_sum;
        let needs = self.needs(logits);
        Ok(self.push(
            vec![],
            vec![loss],
            needs,
            Op::WeightedCrossEntropy {
                logits,
                labels: labels.to_vec(),
                sample_weights: sample_weights.to_vec(),
                softmax,
            },
        ))
    }

    /// Softmax probabilities for a logits node (forward-only convenience).
    pub fn softmax_rows(&self, logits: NodeId) -> Vec<T> {
        let shape = self.shape(logits);
        let (bsz, k) = (shape[0], shape[1]);
        let lg = self.data(logits);
        let mut out = vec![T::zero(); bsz * k];
        for i in 0..bsz {
            let row = &lg[i * k..(i + 1) * k];
            let max = row.iter().cloned().fold(row[0], |a, b| a.max(b));
            let mut denom = T::zero();
            for (j, &x) in row.iter().enumerate() {
                let e = (x - max).exp();
                out[i * k + j] = e;
                denom = denom + e;
            }
            for j in 0..k {
                out[i * k + j] = out[i * k + j] / denom;
            }
        }
        out
    }

    /// Reverse pass from a scalar loss node. Errors if called twice on the
    /// same graph.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.consumed {
            return Err(Error::BackwardConsumed);
        }
        self.consumed = true;
        if !self.nodes[loss.0].shape.is_empty() {
            return Err(Error::Shape(format!(
                "backward needs a scalar node, got shape {:?}",
                self.nodes[loss.0].shape
            )));
        }
        for node in self.nodes.iter_mut() {
            if node.needs_grad {
                node.grad = vec![T::zero(); node.data.len()];
            }
        }
        if self.nodes[loss.0].needs_grad {
            self.nodes[loss.0].grad[0] = T::one();
        }

        for idx in (0..self.nodes.len()).rev() {
            if !self.nodes[idx].needs_grad || self.nodes[idx].grad.is_empty() {
                continue;
            }
            // Split borrow: take the op and grad out, write into inputs.
            let upstream = std::mem::take(&mut self.nodes[idx].grad);
            match &self.nodes[idx].op {
                Op::Leaf => {
                    self.nodes[idx].grad = upstream;
                    continue;
                }
                _ => {}
            }
            self.backprop_node(idx, &upstream);
            self.nodes[idx].grad = upstream;
        }
        Ok(())
    }

    fn backprop_node(&mut self, idx: usize, upstream: &[T]) {
        // The op is read immutably; inputs are disjoint earlier nodes.
        let op = std::mem::replace(&mut self.nodes[idx].op, Op::Leaf);
        match &op {
            Op::Leaf => {}
            Op::Conv3x3 {
                input,
                weight,
                bias,
            } => {
                let ishape = self.nodes[input.0].shape.clone();
                let wshape = self.nodes[weight.0].shape.clone();
                let (bsz, in_ch, h, w) = (ishape[0], ishape[1], ishape[2], ishape[3]);
                let out_ch = wshape[0];
                let need_in = self.needs(*input);
                let need_w = self.needs(*weight);
                let need_b = self.needs(*bias);

                if need_b {
                    for b in 0..bsz {
                        for o in 0..out_ch {
                            let mut acc = T::zero();
                            for &g in &upstream[(b * out_ch + o) * h * w..(b * out_ch + o + 1) * h * w]
                            {
                                acc = acc + g;
                            }
                            self.nodes[bias.0].grad[o] = self.nodes[bias.0].grad[o] + acc;
                        }
                    }
                }
                if need_in || need_w {
                    let inp = std::mem::take(&mut self.nodes[input.0].data);
                    let wt = std::mem::take(&mut self.nodes[weight.0].data);
                    {
                        for b in 0..bsz {
                            for o in 0..out_ch {
                                let up_plane =
                                    &upstream[(b * out_ch + o) * h * w..(b * out_ch + o + 1) * h * w];
                                for c in 0..in_ch {
                                    let base_in = (b * in_ch + c) * h * w;
                                    let wbase = (o * in_ch + c) * 9;
                                    for ky in 0..3usize {
                                        let dy = ky as isize - 1;
                                        for kx in 0..3usize {
                                            let dx = kx as isize - 1;
                                            let y0 = (-dy).max(0) as usize;
                                            let y1 = ((h as isize - dy).min(h as isize)) as usize;
                                            let x0 = (-dx).max(0) as usize;
                                            let x1 = ((w as isize - dx).min(w as isize)) as usize;
                                            if need_w {
                                                let mut acc = T::zero();
                                                for y in y0..y1 {
                                                    let sy = (y as isize + dy) as usize;
                                                    let urow = &up_plane[y * w + x0..y * w + x1];
                                                    let irow = &inp[base_in
                                                        + sy * w
                                                        + (x0 as isize + dx) as usize..]
                                                        [..x1 - x0];
                                                    for (u, iv) in urow.iter().zip(irow) {
                                                        acc = acc + *u * *iv;
                                                    }
                                                }
                                                let g = &mut self.nodes[weight.0].grad
                                                    [wbase + ky * 3 + kx];
                                                *g = *g + acc;
                                            }
                                            if need_in {
                                                let wv = wt[wbase + ky * 3 + kx];
                                                if wv == T::zero() {
                                                    continue;
                                                }
                                                for y in y0..y1 {
                                                    let sy = (y as isize + dy) as usize;
                                                    let urow = &up_plane[y * w + x0..y * w + x1];
                                                    let gstart = base_in
                                                        + sy * w
                                                        + (x0 as isize + dx) as usize;
                                                    let grow = &mut self.nodes[input.0].grad
                                                        [gstart..gstart + x1 - x0];
                                                    for (gv, u) in grow.iter_mut().zip(urow) {
                                                        *gv = *gv + wv * *u;
                                                    }
                                                }
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                    self.nodes[input.0].data = inp;
                    self.nodes[weight.0].data = wt;
                }
            }
            Op::Relu { input } => {
                if self.needs(*input) {
                    let out_data = std::mem::take(&mut self.nodes[idx].data);
                    for (i, (&o, &u)) in out_data.iter().zip(upstream).enumerate() {
                        if o > T::zero() {
                            self.nodes[input.0].grad[i] = self.nodes[input.0].grad[i] + u;
                        }
                    }
                    self.nodes[idx].data = out_data;
                }
            }
            Op::Square { input } => {
                if self.needs(*input) {
                    let two = T::from_f64(2.0);
                    let xs = std::mem::take(&mut self.nodes[input.0].data);
                    for (i, (&x, &u)) in xs.iter().zip(upstream).enumerate() {
                        self.nodes[input.0].grad[i] = self.nodes[input.0].grad[i] + two * x * u;
                    }
                    self.nodes[input.0].data = xs;
                }
            }
            Op::MaxPool2 { input, argmax } => {
                if self.needs(*input) {
                    for (&src, &u) in argmax.iter().zip(upstream) {
                        self.nodes[input.0].grad[src] = self.nodes[input.0].grad[src] + u;
                    }
                }
            }
            Op::GlobalAvgPool { input } => {
                if self.needs(*input) {
                    let ishape = &self.nodes[input.0].shape;
                    let (h, w) = (ishape[2], ishape[3]);
                    let inv_area = T::one() / T::from_f64((h * w) as f64);
                    for (bc, &u) in upstream.iter().enumerate() {
                        let g = u * inv_area;
                        for v in &mut self.nodes[input.0].grad[bc * h * w..(bc + 1) * h * w] {
                            *v = *v + g;
                        }
                    }
                }
            }
            Op::Linear {
                input,
                weight,
                bias,
            } => {
                let (bsz, in_dim) = {
                    let s = &self.nodes[input.0].shape;
                    (s[0], s[1])
                };
                let out_dim = self.nodes[weight.0].shape[0];
                if self.needs(*bias) {
                    for b in 0..bsz {
                        for o in 0..out_dim {
                            self.nodes[bias.0].grad[o] =
                                self.nodes[bias.0].grad[o] + upstream[b * out_dim + o];
                        }
                    }
                }
                if self.needs(*weight) {
                    let inp = std::mem::take(&mut self.nodes[input.0].data);
                    for b in 0..bsz {
                        let row = &inp[b * in_dim..(b + 1) * in_dim];
                        for o in 0..out_dim {
                            let u = upstream[b * out_dim + o];
                            if u == T::zero() {
                                continue;
                            }
                            let gw = &mut self.nodes[weight.0].grad[o * in_dim..(o + 1) * in_dim];
                            for (g, x) in gw.iter_mut().zip(row) {
                                *g = *g + u * *x;
                            }
                        }
                    }
                    self.nodes[input.0].data = inp;
                }
                if self.needs(*input) {
                    let wt = std::mem::take(&mut self.nodes[weight.0].data);
                    for b in 0..bsz {
                        for o in 0..out_dim {
                            let u = upstream[b * out_dim + o];
                            if u == T::zero() {
                                continue;
                            }
                            let wrow = &wt[o * in_dim..(o + 1) * in_dim];
                            let gi = &mut self.nodes[input.0].grad[b * in_dim..(b + 1) * in_dim];
                            for (g, w) in gi.iter_mut().zip(wrow) {
                                *g = *g + u * *w;
                            }
                        }
                    }
                    self.nodes[weight.0].data = wt;
                }
            }
            Op::WeightedCrossEntropy {
                logits,
                labels,
                sample_weights,
                softmax,
            } => {
                if self.needs(*logits) {
                    let k = self.nodes[logits.0].shape[1];
                    let mut weight_sum = T::zero();
                    for &w in sample_weights {
                        weight_sum = weight_sum + w;
                    }
                    let u = upstream[0] / weight_sum;
                    for (i, &y) in labels.iter().enumerate() {
                        let wi = sample_weights[i];
                        for j in 0..k {
                            let indicator = if j == y { T::one() } else { T::zero() };
                            let g = u * wi * (softmax[i * k + j] - indicator);
                            self.nodes[logits.0].grad[i * k + j] =
                                self.nodes[logits.0].grad[i * k + j] + g;
                        }
                    }
                }
            }
        }
        self.nodes[idx].op = op;
    }
}
