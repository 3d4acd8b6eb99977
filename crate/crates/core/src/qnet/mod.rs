//! Convolutional Q-value approximator: three conv blocks (convolution, batch
//! normalization, ReLU), one dense block with batch normalization, and a
//! linear head with one output per action.
//!
//! Everything runs in `f64` on flat NCHW buffers. Training-mode forward passes
//! return a [`ForwardCache`] that [`backward`] turns into [`Gradients`];
//! running batch-norm statistics are only touched through
//! [`NetworkParams::update_running_stats`].

mod adam;
mod checkpoint;
mod layers;

use rand::Rng;

pub use adam::{adam_step, OptimizerState};
pub use checkpoint::{load_checkpoint, load_checkpoint_for, save_checkpoint, CHECKPOINT_VERSION};

use crate::error::{Error, Result};
use crate::rl_env::{StateTensor, STATE_CHANNELS, STATE_SIDE};
use layers::{BnCache, ConvGeom, Dims};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "{} values for shape {shape:?}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn uniform<R: Rng>(shape: &[usize], bound: f64, rng: &mut R) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(|_| rng.random_range(-bound..=bound)).collect(),
        }
    }

    /// Stacks equally sized state encodings into `[batch, 3, side, side]`.
    pub fn stack_states<'a>(states: impl IntoIterator<Item = &'a StateTensor>) -> Result<Self> {
        let mut data = Vec::new();
        let mut side = None;
        let mut n = 0;
        for s in states {
            if *side.get_or_insert(s.side) != s.side {
                return Err(Error::Shape("states of different sizes in one batch".into()));
            }
            data.extend_from_slice(&s.data);
            n += 1;
        }
        let side = side.unwrap_or(0);
        Ok(Self {
            shape: vec![n, STATE_CHANNELS, side, side],
            data,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvSpec {
    pub const fn new(out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        Self {
            out_channels,
            kernel,
            stride,
            padding,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub input_side: usize,
    pub input_channels: usize,
    pub conv: [ConvSpec; 3],
    pub hidden: usize,
    pub n_actions: usize,
}

/// Activation shapes (height, width, channels) of the full-size network up to
/// the hidden layer.
pub const FULL_SHAPE_CHAIN: [[usize; 3]; 5] = [
    [128, 128, 3],
    [32, 32, 32],
    [14, 14, 64],
    [12, 12, 64],
    [1, 1, 512],
];

impl Architecture {
    /// 128x128x3 -> 32x32x32 -> 14x14x64 -> 12x12x64 -> 512 -> actions.
    pub fn full(n_actions: usize) -> Self {
        Self {
            input_side: STATE_SIDE,
            input_channels: STATE_CHANNELS,
            conv: [
                ConvSpec::new(32, 8, 4, 2),
                ConvSpec::new(64, 6, 2, 0),
                ConvSpec::new(64, 3, 1, 0),
            ],
            hidden: 512,
            n_actions,
        }
    }

    /// 16x16x3 -> 8x8x8 -> 6x6x16 -> 4x4x16 -> 64 -> actions.
    pub fn reduced(n_actions: usize) -> Self {
        Self {
            input_side: 16,
            input_channels: STATE_CHANNELS,
            conv: [
                ConvSpec::new(8, 4, 2, 1),
                ConvSpec::new(16, 3, 1, 0),
                ConvSpec::new(16, 3, 1, 0),
            ],
            hidden: 64,
            n_actions,
        }
    }

    /// 8x8x3 -> 8x8x4 -> 3x3x8 -> 2x2x8 -> 16 -> actions.
    pub fn tiny(n_actions: usize) -> Self {
        Self {
            input_side: 8,
            input_channels: STATE_CHANNELS,
            conv: [
                ConvSpec::new(4, 3, 1, 1),
                ConvSpec::new(8, 3, 2, 0),
                ConvSpec::new(8, 2, 1, 0),
            ],
            hidden: 16,
            n_actions,
        }
    }

    /// `[h, w, c]` after the input and every block, ending with the head.
    pub fn shape_chain(&self) -> Result<Vec<[usize; 3]>> {
        if self.input_side == 0 || self.input_channels == 0 || self.hidden == 0 || self.n_actions == 0 {
            return Err(Error::Shape(format!("degenerate architecture {self:?}")));
        }
        let mut chain = vec![[self.input_side, self.input_side, self.input_channels]];
        let mut side = self.input_side;
        for (i, spec) in self.conv.iter().enumerate() {
            let padded = side + 2 * spec.padding;
            if spec.kernel == 0 || spec.stride == 0 || spec.out_channels == 0 || padded < spec.kernel {
                return Err(Error::Shape(format!(
                    "conv block {} does not fit a {side}x{side} input",
                    i + 1
                )));
            }
            side = (padded - spec.kernel) / spec.stride + 1;
            chain.push([side, side, spec.out_channels]);
        }
        chain.push([1, 1, self.hidden]);
        chain.push([1, 1, self.n_actions]);
        Ok(chain)
    }

    fn geometries(&self) -> Result<Vec<ConvGeom>> {
        let chain = self.shape_chain()?;
        Ok(self
            .conv
            .iter()
            .enumerate()
            .map(|(i, spec)| {
                let [ih, iw, ic] = chain[i];
                let [oh, ow, oc] = chain[i + 1];
                ConvGeom {
                    input: Dims { c: ic, h: ih, w: iw },
                    output: Dims { c: oc, h: oh, w: ow },
                    kernel: spec.kernel,
                    stride: spec.stride,
                    padding: spec.padding,
                }
            })
            .collect())
    }

    fn flat_features(&self) -> Result<usize> {
        let chain = self.shape_chain()?;
        let [h, w, c] = chain[3];
        Ok(h * w * c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
}

impl BatchNorm {
    fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::filled(&[channels], 1.0),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::filled(&[channels], 1.0),
        }
    }

    fn update(&mut self, cache: &BnCache, momentum: f64) {
        let n = cache.count as f64;
        let unbias = if cache.count > 1 { n / (n - 1.0) } else { 1.0 };
        for c in 0..cache.mean.len() {
            let rm = &mut self.running_mean.data[c];
            *rm = (1.0 - momentum) * *rm + momentum * cache.mean[c];
            let rv = &mut self.running_var.data[c];
            *rv = (1.0 - momentum) * *rv + momentum * cache.var[c] * unbias;
        }
    }
}

/// Convolution (no bias: the following normalization absorbs it) and its
/// batch normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock {
    pub weight: Tensor,
    pub bn: BatchNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub arch: Architecture,
    pub conv: Vec<ConvBlock>,
    /// `[hidden, flat_features]`.
    pub fc1: Tensor,
    pub fc1_bn: BatchNorm,
    /// `[n_actions, hidden]`.
    pub head: Tensor,
    pub head_bias: Tensor,
}

pub const BN_MOMENTUM: f64 = 0.1;

impl NetworkParams {
    /// Fan-in scaled uniform weights, unit scale and zero shift.
    pub fn init<R: Rng>(arch: &Architecture, rng: &mut R) -> Result<Self> {
        Self::build(arch, |shape, fan_in| {
            Tensor::uniform(shape, 1.0 / (fan_in as f64).sqrt(), rng)
        })
    }

    /// All weights and biases zero, normalization at identity.
    pub fn zeros(arch: &Architecture) -> Result<Self> {
        Self::build(arch, |shape, _| Tensor::zeros(shape))
    }

    fn build(arch: &Architecture, mut weights: impl FnMut(&[usize], usize) -> Tensor) -> Result<Self> {
        let chain = arch.shape_chain()?;
        if arch.input_side == STATE_SIDE && arch.conv == Architecture::full(1).conv && arch.hidden == 512 {
            assert_eq!(&chain[..5], &FULL_SHAPE_CHAIN[..], "full-size shape chain");
        }
        let mut conv = Vec::new();
        let mut in_c = arch.input_channels;
        for spec in &arch.conv {
            let fan_in = in_c * spec.kernel * spec.kernel;
            conv.push(ConvBlock {
                weight: weights(&[spec.out_channels, in_c, spec.kernel, spec.kernel], fan_in),
                bn: BatchNorm::new(spec.out_channels),
            });
            in_c = spec.out_channels;
        }
        let flat = arch.flat_features()?;
        let fc1 = weights(&[arch.hidden, flat], flat);
        let head = weights(&[arch.n_actions, arch.hidden], arch.hidden);
        let head_bias = weights(&[arch.n_actions], arch.hidden);
        Ok(Self {
            arch: arch.clone(),
            conv,
            fc1,
            fc1_bn: BatchNorm::new(arch.hidden),
            head,
            head_bias,
        })
    }

    /// Parameters updated by the optimizer, in a fixed order.
    pub fn trainable(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for b in &self.conv {
            out.extend([&b.weight, &b.bn.gamma, &b.bn.beta]);
        }
        out.extend([&self.fc1, &self.fc1_bn.gamma, &self.fc1_bn.beta, &self.head, &self.head_bias]);
        out
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for b in &mut self.conv {
            out.extend([&mut b.weight, &mut b.bn.gamma, &mut b.bn.beta]);
        }
        out.extend([
            &mut self.fc1,
            &mut self.fc1_bn.gamma,
            &mut self.fc1_bn.beta,
            &mut self.head,
            &mut self.head_bias,
        ]);
        out
    }

    /// Running normalization statistics, in a fixed order.
    pub fn buffers(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for b in &self.conv {
            out.extend([&b.bn.running_mean, &b.bn.running_var]);
        }
        out.extend([&self.fc1_bn.running_mean, &self.fc1_bn.running_var]);
        out
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for b in &mut self.conv {
            out.extend([&mut b.bn.running_mean, &mut b.bn.running_var]);
        }
        out.extend([&mut self.fc1_bn.running_mean, &mut self.fc1_bn.running_var]);
        out
    }

    /// Trainable tensors followed by running statistics.
    pub fn all_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut trainable = Vec::new();
        let mut buffers = Vec::new();
        for b in &mut self.conv {
            trainable.extend([&mut b.weight, &mut b.bn.gamma, &mut b.bn.beta]);
            buffers.extend([&mut b.bn.running_mean, &mut b.bn.running_var]);
        }
        let fc1_bn = &mut self.fc1_bn;
        trainable.extend([
            &mut self.fc1,
            &mut fc1_bn.gamma,
            &mut fc1_bn.beta,
            &mut self.head,
            &mut self.head_bias,
        ]);
        buffers.extend([&mut fc1_bn.running_mean, &mut fc1_bn.running_var]);
        trainable.extend(buffers);
        trainable
    }

    pub fn n_parameters(&self) -> usize {
        self.trainable().iter().map(|t| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.trainable()
            .into_iter()
            .chain(self.buffers())
            .all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    pub fn update_running_stats(&mut self, cache: &ForwardCache) {
        for (block, c) in self.conv.iter_mut().zip(&cache.conv) {
            block.bn.update(&c.bn, BN_MOMENTUM);
        }
        self.fc1_bn.update(&cache.fc1_bn, BN_MOMENTUM);
    }

    fn check_input(&self, states: &Tensor) -> Result<usize> {
        let a = &self.arch;
        match states.shape.as_slice() {
            [n, c, h, w] if *c == a.input_channels && *h == a.input_side && *w == a.input_side => {
                if states.data.len() != n * c * h * w {
                    return Err(Error::Shape("state buffer length".into()));
                }
                Ok(*n)
            }
            other => Err(Error::Shape(format!(
                "expected [batch, {}, {}, {}] input, got {other:?}",
                a.input_channels, a.input_side, a.input_side
            ))),
        }
    }
}

/// Copies every parameter and statistic of `policy` into `target`.
pub fn sync_target(policy: &NetworkParams, target: &mut NetworkParams) -> Result<()> {
    if policy.arch != target.arch {
        return Err(Error::Shape(format!(
            "cannot sync {:?} into {:?}",
            policy.arch, target.arch
        )));
    }
    target.clone_from(policy);
    Ok(())
}

#[derive(Debug, Clone)]
struct ConvCache {
    dims: [usize; 3],
    input: Vec<f64>,
    bn: BnCache,
    output: Vec<f64>,
}

/// Intermediate activations of a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch: usize,
    conv: Vec<ConvCache>,
    fc1_input: Vec<f64>,
    fc1_bn: BnCache,
    hidden: Vec<f64>,
    n_outputs: usize,
}

impl ForwardCache {
    /// `[h, w, c]` of every block output as produced by the pass, derived
    /// from the cached buffer lengths.
    pub fn activation_shapes(&self) -> Vec<[usize; 3]> {
        let mut out: Vec<[usize; 3]> = self
            .conv
            .iter()
            .map(|c| {
                let [h, w, ch] = c.dims;
                assert_eq!(c.output.len(), self.batch * h * w * ch);
                c.dims
            })
            .collect();
        out.push([1, 1, self.hidden.len() / self.batch.max(1)]);
        out.push([1, 1, self.n_outputs]);
        out
    }
}

/// Inference-mode Q-values, `[batch, n_actions]`, using running statistics.
pub fn forward(params: &NetworkParams, states: &Tensor) -> Result<Tensor> {
    let batch = params.check_input(states)?;
    let geoms = params.arch.geometries()?;
    let mut x = states.data.clone();
    for (block, g) in params.conv.iter().zip(&geoms) {
        let z = layers::conv_forward(&x, batch, g, &block.weight.data);
        let spatial = g.output.h * g.output.w;
        x = layers::bn_forward_inference(
            &z,
            batch,
            g.output.c,
            spatial,
            &block.bn.gamma.data,
            &block.bn.beta.data,
            &block.bn.running_mean.data,
            &block.bn.running_var.data,
        );
        layers::relu_inplace(&mut x);
        debug_assert_eq!(x.len(), batch * g.output.size());
    }
    let (flat, hidden, n_actions) = (params.arch.flat_features()?, params.arch.hidden, params.arch.n_actions);
    let z = layers::dense_forward(&x, batch, flat, hidden, &params.fc1.data, None);
    let bn = &params.fc1_bn;
    let mut h = layers::bn_forward_inference(
        &z,
        batch,
        hidden,
        1,
        &bn.gamma.data,
        &bn.beta.data,
        &bn.running_mean.data,
        &bn.running_var.data,
    );
    layers::relu_inplace(&mut h);
    let q = layers::dense_forward(&h, batch, hidden, n_actions, &params.head.data, Some(&params.head_bias.data));
    Tensor::from_vec(&[batch, n_actions], q)
}

/// Training-mode forward pass normalizing with batch statistics.
pub fn forward_train(params: &NetworkParams, states: &Tensor) -> Result<(Tensor, ForwardCache)> {
    let batch = params.check_input(states)?;
    let geoms = params.arch.geometries()?;
    let mut x = states.data.clone();
    let mut conv = Vec::with_capacity(3);
    for (block, g) in params.conv.iter().zip(&geoms) {
        let z = layers::conv_forward(&x, batch, g, &block.weight.data);
        let (mut y, bn) = layers::bn_forward_train(
            &z,
            batch,
            g.output.c,
            g.output.h * g.output.w,
            &block.bn.gamma.data,
            &block.bn.beta.data,
        );
        layers::relu_inplace(&mut y);
        conv.push(ConvCache {
            dims: [g.output.h, g.output.w, g.output.c],
            input: std::mem::replace(&mut x, y.clone()),
            bn,
            output: y,
        });
    }
    let (flat, hidden, n_actions) = (params.arch.flat_features()?, params.arch.hidden, params.arch.n_actions);
    let z = layers::dense_forward(&x, batch, flat, hidden, &params.fc1.data, None);
    let (mut h, fc1_bn) =
        layers::bn_forward_train(&z, batch, hidden, 1, &params.fc1_bn.gamma.data, &params.fc1_bn.beta.data);
    layers::relu_inplace(&mut h);
    let q = layers::dense_forward(&h, batch, hidden, n_actions, &params.head.data, Some(&params.head_bias.data));
    Ok((
        Tensor::from_vec(&[batch, n_actions], q)?,
        ForwardCache {
            batch,
            conv,
            fc1_input: x,
            fc1_bn,
            hidden: h,
            n_outputs: n_actions,
        },
    ))
}

/// Gradients in [`NetworkParams::trainable`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        Self {
            tensors: params.trainable().iter().map(|t| Tensor::zeros(&t.shape)).collect(),
        }
    }
}

/// Back-propagates `dq` (`[batch, n_actions]`) through a training forward pass.
pub fn backward(params: &NetworkParams, cache: &ForwardCache, dq: &Tensor) -> Result<Gradients> {
    let a = &params.arch;
    let batch = cache.batch;
    if dq.shape != [batch, a.n_actions] {
        return Err(Error::Shape(format!(
            "output gradient {:?} for batch {batch} x {}",
            dq.shape, a.n_actions
        )));
    }
    let geoms = a.geometries()?;
    let flat = a.flat_features()?;
    let mut grads = Gradients::zeros_like(params);
    let n_conv = params.conv.len();
    // trainable order: conv blocks (weight, gamma, beta) then fc1, fc1 gamma,
    // fc1 beta, head, head bias
    let base = 3 * n_conv;

    let (before_head, head_part) = grads.tensors.split_at_mut(base + 3);
    let (head_w, head_b) = head_part.split_at_mut(1);
    let mut dh = layers::dense_backward(
        &cache.hidden,
        &dq.data,
        batch,
        a.hidden,
        a.n_actions,
        &params.head.data,
        &mut head_w[0].data,
        Some(&mut head_b[0].data),
    );
    layers::relu_backward_inplace(&mut dh, &cache.hidden);

    let (conv_grads, fc_grads) = before_head.split_at_mut(base);
    let (fc1_w, fc1_bn) = fc_grads.split_at_mut(1);
    let (g_gamma, g_beta) = fc1_bn.split_at_mut(1);
    let dz = layers::bn_backward(
        &dh,
        &cache.fc1_bn,
        batch,
        a.hidden,
        1,
        &params.fc1_bn.gamma.data,
        &mut g_gamma[0].data,
        &mut g_beta[0].data,
    );
    let mut dx = layers::dense_backward(
        &cache.fc1_input,
        &dz,
        batch,
        flat,
        a.hidden,
        &params.fc1.data,
        &mut fc1_w[0].data,
        None,
    );

    for i in (0..n_conv).rev() {
        let g = &geoms[i];
        let c = &cache.conv[i];
        let block = &params.conv[i];
        layers::relu_backward_inplace(&mut dx, &c.output);
        let slot = &mut conv_grads[3 * i..3 * i + 3];
        let (w_slot, bn_slot) = slot.split_at_mut(1);
        let (gam, bet) = bn_slot.split_at_mut(1);
        let dz = layers::bn_backward(
            &dx,
            &c.bn,
            batch,
            g.output.c,
            g.output.h * g.output.w,
            &block.bn.gamma.data,
            &mut gam[0].data,
            &mut bet[0].data,
        );
        let mut dinput = if i > 0 { Some(vec![0.0; c.input.len()]) } else { None };
        layers::conv_backward(
            &c.input,
            &dz,
            batch,
            g,
            &block.weight.data,
            &mut w_slot[0].data,
            dinput.as_deref_mut(),
        );
        if let Some(d) = dinput {
            dx = d;
        }
    }
    Ok(grads)
}

/// Experiences prepared for one optimization step.
#[derive(Debug, Clone)]
pub struct TrainBatch {
    /// `[batch, 3, side, side]`.
    pub states: Tensor,
    pub action_indices: Vec<usize>,
    pub rewards: Vec<f64>,
    pub next_states: Tensor,
    pub terminal: Vec<bool>,
}

impl TrainBatch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    fn validate(&self) -> Result<()> {
        let n = self.rewards.len();
        let ok = self.action_indices.len() == n
            && self.terminal.len() == n
            && self.states.shape.first() == Some(&n)
            && self.next_states.shape.first() == Some(&n);
        if ok {
            Ok(())
        } else {
            Err(Error::Shape("train batch fields differ in length".into()))
        }
    }
}

/// `y = r + gamma * max_a Q'(s', a)` for non-terminal entries, `y = r`
/// otherwise. Only the target network is consulted.
pub fn td_targets(batch: &TrainBatch, target: &NetworkParams, gamma: f64) -> Result<Vec<f64>> {
    batch.validate()?;
    let mut y = batch.rewards.clone();
    if gamma == 0.0 || batch.terminal.iter().all(|&t| t) {
        return Ok(y);
    }
    let q = forward(target, &batch.next_states)?;
    let n_actions = target.arch.n_actions;
    for (i, yi) in y.iter_mut().enumerate() {
        if !batch.terminal[i] {
            let row = &q.data[i * n_actions..][..n_actions];
            *yi += gamma * row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        }
    }
    Ok(y)
}

/// Mean squared TD error at the taken actions.
pub fn td_loss(q_pred: &Tensor, action_indices: &[usize], targets: &[f64]) -> Result<f64> {
    td_loss_and_grad(q_pred, action_indices, targets, None).map(|(loss, _, _)| loss)
}

/// Loss, its gradient with respect to `q_pred`, and the per-sample TD errors
/// `y - Q(s, a)`. Optional weights scale each squared error.
pub fn td_loss_and_grad(
    q_pred: &Tensor,
    action_indices: &[usize],
    targets: &[f64],
    weights: Option<&[f64]>,
) -> Result<(f64, Tensor, Vec<f64>)> {
    let [batch, n_actions] = q_pred.shape[..] else {
        return Err(Error::Shape(format!("Q matrix shape {:?}", q_pred.shape)));
    };
    if action_indices.len() != batch || targets.len() != batch || weights.is_some_and(|w| w.len() != batch) {
        return Err(Error::Shape("loss inputs differ in length".into()));
    }
    let mut grad = Tensor::zeros(&[batch, n_actions]);
    let mut errors = Vec::with_capacity(batch);
    let mut loss = 0.0;
    for (i, (&a, &y)) in action_indices.iter().zip(targets).enumerate() {
        if a >= n_actions {
            return Err(Error::ActionIndex { index: a, len: n_actions });
        }
        let w = weights.map_or(1.0, |w| w[i]);
        let err = y - q_pred.data[i * n_actions + a];
        loss += w * err * err;
        grad.data[i * n_actions + a] = -2.0 * w * err / batch as f64;
        errors.push(err);
    }
    Ok((loss / batch.max(1) as f64, grad, errors))
}
