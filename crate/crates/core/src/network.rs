//! A small feedforward network whose hidden layers all share one width,
//! trained on a task loss plus the Entropy Loss over its hidden activations.

use std::fmt;

use log::debug;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::loss::{combined_entropy_loss, entropy_loss_with_gradients, EntropyLossConfig, EntropyLossValue};
use crate::matrix::SampleMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `h`.
    #[inline]
    fn derivative(self, z: f64, h: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - h * h,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkDims {
    pub input_dim: usize,
    pub hidden_width: usize,
    pub hidden_count: usize,
    pub output_dim: usize,
}

impl Default for NetworkDims {
    fn default() -> Self {
        NetworkDims {
            input_dim: 2,
            hidden_width: 32,
            hidden_count: 4,
            output_dim: 2,
        }
    }
}

impl NetworkDims {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_count < 2 {
            return Err(Error::invalid_argument(format!(
                "hidden_count must be at least 2 for entropy deltas to exist, got {}",
                self.hidden_count
            )));
        }
        if self.input_dim == 0 || self.hidden_width == 0 || self.output_dim == 0 {
            return Err(Error::invalid_argument("network dimensions must be positive"));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every dense layer, input to output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = vec![(self.input_dim, self.hidden_width)];
        shapes.extend((1..self.hidden_count).map(|_| (self.hidden_width, self.hidden_width)));
        shapes.push((self.hidden_width, self.output_dim));
        shapes
    }
}

/// A dense layer `x ↦ x·W + b` with `W` stored `fan_in × fan_out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weights: SampleMatrix,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Dense {
            weights: SampleMatrix::zeros(fan_in, fan_out),
            bias: vec![0.0; fan_out],
        }
    }

    fn forward(&self, x: &SampleMatrix) -> SampleMatrix {
        let (n, fan_in, fan_out) = (x.rows(), self.weights.rows(), self.weights.cols());
        let mut out = Vec::with_capacity(n * fan_out);
        for i in 0..n {
            let mut row = self.bias.clone();
            for (kk, &xv) in x.row(i).iter().enumerate().take(fan_in) {
                for (o, w) in row.iter_mut().zip(self.weights.row(kk)) {
                    *o += xv * w;
                }
            }
            out.extend(row);
        }
        SampleMatrix::from_raw(n, fan_out, out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyNetwork {
    pub dims: NetworkDims,
    pub activation: Activation,
    /// `hidden_count` hidden layers followed by the output layer.
    pub layers: Vec<Dense>,
}

impl ToyNetwork {
    /// A network with every parameter zero.
    pub fn zeros(dims: NetworkDims, activation: Activation) -> Result<Self> {
        dims.validate()?;
        let layers = dims.layer_shapes().into_iter().map(|(i, o)| Dense::zeros(i, o)).collect();
        Ok(ToyNetwork { dims, activation, layers })
    }

    /// Parameter tensors as flat slices: `w_0, b_0, w_1, b_1, …`.
    pub fn parameters(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }
}

/// Glorot-uniform weights (half-width `sqrt(6 / (fan_in + fan_out))`), zero biases.
pub fn init_network(dims: NetworkDims, activation: Activation, seed: u64) -> Result<ToyNetwork> {
    let mut net = ToyNetwork::zeros(dims, activation)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for layer in &mut net.layers {
        let (fan_in, fan_out) = (layer.weights.rows(), layer.weights.cols());
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for w in layer.weights.as_mut_slice() {
            *w = rng.gen_range(-limit..limit);
        }
    }
    Ok(net)
}

/// Everything backpropagation needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub inputs: SampleMatrix,
    /// Hidden pre-activations, one per hidden layer.
    pub pre_activations: Vec<SampleMatrix>,
    /// Hidden post-activations, one per hidden layer.
    pub activations: Vec<SampleMatrix>,
    pub logits: SampleMatrix,
}

pub fn forward(net: &ToyNetwork, batch: &SampleMatrix) -> Result<ForwardPass> {
    if batch.cols() != net.dims.input_dim {
        return Err(Error::invalid_argument(format!(
            "batch has {} columns, network expects {}",
            batch.cols(),
            net.dims.input_dim
        )));
    }
    let hidden = net.dims.hidden_count;
    let mut pre_activations = Vec::with_capacity(hidden);
    let mut activations: Vec<SampleMatrix> = Vec::with_capacity(hidden);
    for layer in &net.layers[..hidden] {
        let z = layer.forward(activations.last().unwrap_or(batch));
        let h = SampleMatrix::from_raw(
            z.rows(),
            z.cols(),
            z.as_slice().iter().map(|&v| net.activation.apply(v)).collect(),
        );
        pre_activations.push(z);
        activations.push(h);
    }
    let logits = net.layers[hidden].forward(activations.last().expect("hidden_count ≥ 2"));
    Ok(ForwardPass {
        inputs: batch.clone(),
        pre_activations,
        activations,
        logits,
    })
}

/// Supervision for a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Targets {
    /// Class labels for softmax cross-entropy.
    Classes(Vec<usize>),
    /// Real targets for mean squared error.
    Values(SampleMatrix),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(c) => c.len(),
            Targets::Values(v) => v.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, order: &[usize]) -> Targets {
        match self {
            Targets::Classes(c) => Targets::Classes(order.iter().map(|&i| c[i]).collect()),
            Targets::Values(v) => Targets::Values(v.select_rows(order)),
        }
    }
}

/// Mean softmax cross-entropy (class targets) or mean squared error summed
/// over output columns (value targets), with its gradient w.r.t. the logits.
pub fn task_loss(logits: &SampleMatrix, targets: &Targets) -> Result<(f64, SampleMatrix)> {
    let (n, c) = (logits.rows(), logits.cols());
    if targets.len() != n {
        return Err(Error::invalid_argument(format!(
            "{} targets for {n} logit rows",
            targets.len()
        )));
    }
    let nf = n as f64;
    let mut grad = SampleMatrix::zeros(n, c);
    let mut total = 0.0;
    match targets {
        Targets::Classes(labels) => {
            for (i, &label) in labels.iter().enumerate() {
                if label >= c {
                    return Err(Error::invalid_data(format!(
                        "label {label} at row {i} is outside 0..{c}"
                    )));
                }
                let row = logits.row(i);
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let sum_exp: f64 = row.iter().map(|v| (v - max).exp()).sum();
                let log_z = max + sum_exp.ln();
                total += log_z - row[label];
                for (j, g) in grad.row_mut(i).iter_mut().enumerate() {
                    let p = (row[j] - log_z).exp();
                    *g = (p - if j == label { 1.0 } else { 0.0 }) / nf;
                }
            }
        }
        Targets::Values(t) => {
            if t.cols() != c {
                return Err(Error::invalid_argument(format!(
                    "targets have {} columns, logits {c}",
                    t.cols()
                )));
            }
            for i in 0..n {
                for j in 0..c {
                    let r = logits.get(i, j) - t.get(i, j);
                    total += r * r;
                    grad.set(i, j, 2.0 * r / nf);
                }
            }
        }
    }
    Ok((total / nf, grad))
}

/// Where the Entropy Loss reads the hidden layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyAttachment {
    #[default]
    PostActivation,
    PreActivation,
}

impl EntropyAttachment {
    pub fn layers<'a>(&self, pass: &'a ForwardPass) -> &'a [SampleMatrix] {
        match self {
            EntropyAttachment::PostActivation => &pass.activations,
            EntropyAttachment::PreActivation => &pass.pre_activations,
        }
    }
}

/// Parameter gradients (same layout as [`ToyNetwork::parameters`]) and the
/// gradient w.r.t. the network input.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
    pub inputs: SampleMatrix,
}

impl Gradients {
    pub fn parameters(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }
}

/// Backpropagates `dlogits`, adding `hidden_grads[ℓ]` to the gradient of
/// hidden layer ℓ at the given attachment point.
pub fn backward(
    net: &ToyNetwork,
    pass: &ForwardPass,
    dlogits: &SampleMatrix,
    hidden_grads: Option<(&[SampleMatrix], EntropyAttachment)>,
) -> Gradients {
    let hidden = net.dims.hidden_count;
    let mut layers: Vec<Dense> = net
        .layers
        .iter()
        .map(|l| Dense::zeros(l.weights.rows(), l.weights.cols()))
        .collect();
    let mut delta = dlogits.clone();
    let mut input_grad = None;

    for l in (0..=hidden).rev() {
        let input = if l == 0 { &pass.inputs } else { &pass.activations[l - 1] };
        let weights = &net.layers[l].weights;
        let (fan_in, fan_out) = (weights.rows(), weights.cols());
        let n = delta.rows();

        let grad = &mut layers[l];
        for i in 0..n {
            let (x, d) = (input.row(i), delta.row(i));
            for (kk, &xv) in x.iter().enumerate() {
                for (g, &dv) in grad.weights.row_mut(kk).iter_mut().zip(d) {
                    *g += xv * dv;
                }
            }
            for (b, &dv) in grad.bias.iter_mut().zip(d) {
                *b += dv;
            }
        }

        // δ·Wᵀ
        let mut upstream = SampleMatrix::zeros(n, fan_in);
        for i in 0..n {
            let d = delta.row(i);
            let out = upstream.row_mut(i);
            for (kk, o) in out.iter_mut().enumerate() {
                let w = &weights.as_slice()[kk * fan_out..(kk + 1) * fan_out];
                *o = w.iter().zip(d).map(|(a, b)| a * b).sum();
            }
        }

        if l == 0 {
            input_grad = Some(upstream);
            break;
        }
        let h_idx = l - 1;
        let (pre, post) = (&pass.pre_activations[h_idx], &pass.activations[h_idx]);
        let mut dh = upstream;
        if let Some((extra, EntropyAttachment::PostActivation)) = hidden_grads {
            for (a, b) in dh.as_mut_slice().iter_mut().zip(extra[h_idx].as_slice()) {
                *a += b;
            }
        }
        for ((g, &z), &h) in dh.as_mut_slice().iter_mut().zip(pre.as_slice()).zip(post.as_slice()) {
            *g *= net.activation.derivative(z, h);
        }
        if let Some((extra, EntropyAttachment::PreActivation)) = hidden_grads {
            for (a, b) in dh.as_mut_slice().iter_mut().zip(extra[h_idx].as_slice()) {
                *a += b;
            }
        }
        delta = dh;
    }

    Gradients {
        layers,
        inputs: input_grad.expect("loop reaches the input layer"),
    }
}

/// Plain gradient step, `p ← p − lr·g`.
pub fn sgd_update(params: &mut [f64], grads: &[f64], lr: f64) {
    for (p, g) in params.iter_mut().zip(grads) {
        *p -= lr * g;
    }
}

/// Momentum as an exponentially weighted average of past gradients:
/// `v ← β·v + (1 − β)·g`, `p ← p − lr·v`. With β = 0 this is [`sgd_update`].
pub fn momentum_update(params: &mut [f64], velocity: &mut [f64], grads: &[f64], lr: f64, beta: f64) {
    for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(grads) {
        *v = beta * *v + (1.0 - beta) * g;
        *p -= lr * *v;
    }
}

/// Adam with bias-corrected moments. `step` is the 1-based step count.
#[allow(clippy::too_many_arguments)]
pub fn adam_update(
    params: &mut [f64],
    m: &mut [f64],
    v: &mut [f64],
    grads: &[f64],
    step: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) {
    let c1 = 1.0 - beta1.powf(step as f64);
    let c2 = 1.0 - beta2.powf(step as f64);
    for (((p, m), v), &g) in params.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(grads) {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerConfig {
    Sgd { lr: f64 },
    Momentum { lr: f64, beta: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::adam(1e-3)
    }
}

impl OptimizerConfig {
    pub fn adam(lr: f64) -> Self {
        OptimizerConfig::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            OptimizerConfig::Sgd { lr } | OptimizerConfig::Momentum { lr, .. } | OptimizerConfig::Adam { lr, .. } => lr,
        }
    }
}

impl fmt::Display for OptimizerConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OptimizerConfig::Sgd { lr } => write!(f, "sgd(lr={lr})"),
            OptimizerConfig::Momentum { lr, beta } => write!(f, "momentum(lr={lr}, beta={beta})"),
            OptimizerConfig::Adam { lr, beta1, beta2, eps } => {
                write!(f, "adam(lr={lr}, beta1={beta1}, beta2={beta2}, eps={eps})")
            }
        }
    }
}

/// Optimizer hyperparameters plus accumulators shaped like the network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: OptimizerConfig,
    pub step: u64,
    /// Momentum velocity or Adam first moment.
    pub first: Vec<Vec<f64>>,
    /// Adam second moment.
    pub second: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, net: &ToyNetwork) -> Self {
        let zeros = || net.parameters().iter().map(|p| vec![0.0; p.len()]).collect::<Vec<_>>();
        let (first, second) = match config {
            OptimizerConfig::Sgd { .. } => (Vec::new(), Vec::new()),
            OptimizerConfig::Momentum { .. } => (zeros(), Vec::new()),
            OptimizerConfig::Adam { .. } => (zeros(), zeros()),
        };
        OptimizerState {
            config,
            step: 0,
            first,
            second,
        }
    }

    pub fn apply(&mut self, net: &mut ToyNetwork, grads: &Gradients) {
        self.step += 1;
        let grads = grads.parameters();
        let params = net.parameters_mut();
        assert_eq!(params.len(), grads.len());
        for (t, (p, g)) in params.into_iter().zip(grads).enumerate() {
            match self.config {
                OptimizerConfig::Sgd { lr } => sgd_update(p, g, lr),
                OptimizerConfig::Momentum { lr, beta } => momentum_update(p, &mut self.first[t], g, lr, beta),
                OptimizerConfig::Adam { lr, beta1, beta2, eps } => adam_update(
                    p,
                    &mut self.first[t],
                    &mut self.second[t],
                    g,
                    self.step,
                    lr,
                    beta1,
                    beta2,
                    eps,
                ),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepMetrics {
    pub task_loss: f64,
    /// Entropy Loss at this step. `None` only when the loss is disabled and
    /// the measurement itself failed (e.g. duplicate activations).
    pub entropy: Option<EntropyLossValue>,
    /// Task loss plus the weighted Entropy Loss.
    pub total: f64,
}

/// Task loss, Entropy Loss and their combined gradient for one batch, without
/// touching the parameters.
pub fn objective_gradients(
    net: &ToyNetwork,
    batch: &SampleMatrix,
    targets: &Targets,
    config: &EntropyLossConfig,
    attachment: EntropyAttachment,
    exec: Execution,
) -> Result<(StepMetrics, Gradients)> {
    let pass = forward(net, batch)?;
    let (task, dlogits) = task_loss(&pass.logits, targets)?;
    if config.is_enabled() {
        let (value, hidden_grads) = entropy_loss_with_gradients(attachment.layers(&pass), config, exec)?;
        let grads = backward(net, &pass, &dlogits, Some((&hidden_grads, attachment)));
        let metrics = StepMetrics {
            task_loss: task,
            total: task + value.total,
            entropy: Some(value),
        };
        Ok((metrics, grads))
    } else {
        let grads = backward(net, &pass, &dlogits, None);
        let entropy = match combined_entropy_loss(attachment.layers(&pass), config) {
            Ok(v) => Some(v),
            Err(e) => {
                debug!("entropy measurement skipped: {e}");
                None
            }
        };
        Ok((StepMetrics { task_loss: task, entropy, total: task }, grads))
    }
}

/// Fuses the task loss with the Entropy Loss and applies one optimizer update.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub optimizer: OptimizerState,
    pub entropy: EntropyLossConfig,
    pub attachment: EntropyAttachment,
    pub exec: Execution,
}

impl Trainer {
    pub fn new(net: &ToyNetwork, optimizer: OptimizerConfig, entropy: EntropyLossConfig) -> Self {
        Trainer {
            optimizer: OptimizerState::new(optimizer, net),
            entropy,
            attachment: EntropyAttachment::default(),
            exec: Execution::default(),
        }
    }

    pub fn step(&mut self, net: &mut ToyNetwork, batch: &SampleMatrix, targets: &Targets) -> Result<StepMetrics> {
        let (metrics, grads) =
            objective_gradients(net, batch, targets, &self.entropy, self.attachment, self.exec)?;
        self.optimizer.apply(net, &grads);
        Ok(metrics)
    }
}

/// One training step with post-activation attachment.
pub fn train_step(
    net: &mut ToyNetwork,
    optimizer: &mut OptimizerState,
    batch: &SampleMatrix,
    targets: &Targets,
    config: &EntropyLossConfig,
) -> Result<StepMetrics> {
    let (metrics, grads) = objective_gradients(
        net,
        batch,
        targets,
        config,
        EntropyAttachment::PostActivation,
        Execution::default(),
    )?;
    optimizer.apply(net, &grads);
    Ok(metrics)
}

/// Labeled inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub inputs: SampleMatrix,
    pub targets: Targets,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Accuracy in `[0, 1]` for class targets, mean squared error for value targets.
pub fn evaluate(net: &ToyNetwork, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid_argument("cannot evaluate on an empty dataset"));
    }
    let pass = forward(net, &data.inputs)?;
    match &data.targets {
        Targets::Classes(labels) => {
            let correct = labels
                .iter()
                .enumerate()
                .filter(|&(i, &y)| argmax(pass.logits.row(i)) == y)
                .count();
            Ok(correct as f64 / labels.len() as f64)
        }
        Targets::Values(_) => task_loss(&pass.logits, &data.targets).map(|(v, _)| v),
    }
}
