//! LeNet-5 style classifier, trained from scratch with mini-batch SGD.
//!
//! Layout: 1×28×28 → conv 6@5×5 (pad 2) → ReLU → max-pool 2 → conv 16@5×5 →
//! ReLU → max-pool 2 → dense 400→120 → ReLU → dense 120→84 → ReLU →
//! dense 84→10 → softmax.
//!
//! Everything is generic over [`Scalar`] so the same code runs in `f32` for
//! training and in `f64` for finite-difference gradient checks.

pub mod io;
pub mod layers;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mr::{LabeledSample, NUM_CLASSES};
use crate::seed;
use crate::transforms::GrayImage;

pub use layers::Scalar;
use layers::{relu_backward, relu_inplace, softmax, Conv2d, Dense, MaxPool2};

pub const INPUT_SIDE: usize = 28;

const CONV1: Conv2d = Conv2d {
    in_channels: 1,
    out_channels: 6,
    kernel: 5,
    padding: 2,
    in_height: 28,
    in_width: 28,
};
const POOL1: MaxPool2 = MaxPool2 {
    channels: 6,
    in_height: 28,
    in_width: 28,
};
const CONV2: Conv2d = Conv2d {
    in_channels: 6,
    out_channels: 16,
    kernel: 5,
    padding: 0,
    in_height: 14,
    in_width: 14,
};
const POOL2: MaxPool2 = MaxPool2 {
    channels: 16,
    in_height: 10,
    in_width: 10,
};
const FC1: Dense = Dense {
    inputs: 400,
    outputs: 120,
};
const FC2: Dense = Dense {
    inputs: 120,
    outputs: 84,
};
const FC3: Dense = Dense {
    inputs: 84,
    outputs: NUM_CLASSES,
};

/// Weights and biases of every layer, in serialisation order.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams<T = f32> {
    pub conv1_w: Vec<T>,
    pub conv1_b: Vec<T>,
    pub conv2_w: Vec<T>,
    pub conv2_b: Vec<T>,
    pub fc1_w: Vec<T>,
    pub fc1_b: Vec<T>,
    pub fc2_w: Vec<T>,
    pub fc2_b: Vec<T>,
    pub fc3_w: Vec<T>,
    pub fc3_b: Vec<T>,
}

/// Name and shape of each parameter tensor, in storage order.
pub const TENSOR_SHAPES: [(&str, &[usize]); 10] = [
    ("conv1.weight", &[6, 1, 5, 5]),
    ("conv1.bias", &[6]),
    ("conv2.weight", &[16, 6, 5, 5]),
    ("conv2.bias", &[16]),
    ("fc1.weight", &[120, 400]),
    ("fc1.bias", &[120]),
    ("fc2.weight", &[84, 120]),
    ("fc2.bias", &[84]),
    ("fc3.weight", &[10, 84]),
    ("fc3.bias", &[10]),
];

impl<T: Scalar> NetworkParams<T> {
    pub fn zeros() -> Self {
        let z = |n: usize| vec![T::zero(); n];
        Self {
            conv1_w: z(CONV1.weight_len()),
            conv1_b: z(CONV1.out_channels),
            conv2_w: z(CONV2.weight_len()),
            conv2_b: z(CONV2.out_channels),
            fc1_w: z(FC1.weight_len()),
            fc1_b: z(FC1.outputs),
            fc2_w: z(FC2.weight_len()),
            fc2_b: z(FC2.outputs),
            fc3_w: z(FC3.weight_len()),
            fc3_b: z(FC3.outputs),
        }
    }

    pub fn tensors(&self) -> [&[T]; 10] {
        [
            &self.conv1_w,
            &self.conv1_b,
            &self.conv2_w,
            &self.conv2_b,
            &self.fc1_w,
            &self.fc1_b,
            &self.fc2_w,
            &self.fc2_b,
            &self.fc3_w,
            &self.fc3_b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<T>; 10] {
        [
            &mut self.conv1_w,
            &mut self.conv1_b,
            &mut self.conv2_w,
            &mut self.conv2_b,
            &mut self.fc1_w,
            &mut self.fc1_b,
            &mut self.fc2_w,
            &mut self.fc2_b,
            &mut self.fc3_w,
            &mut self.fc3_b,
        ]
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.tensors()
            .iter()
            .zip(other.tensors())
            .flat_map(|(a, b)| a.iter().zip(b.iter()))
            .map(|(&x, &y)| (x - y).abs().to_f64().unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max)
    }

    /// `self -= lr * grads`.
    pub fn sgd_step(&mut self, grads: &Self, lr: T) {
        for (p, g) in self.tensors_mut().into_iter().zip(grads.tensors()) {
            for (pv, &gv) in p.iter_mut().zip(g) {
                *pv -= lr * gv;
            }
        }
    }

    fn fill_zero(&mut self) {
        for t in self.tensors_mut() {
            t.fill(T::zero());
        }
    }

    pub fn cast<U: Scalar>(&self) -> NetworkParams<U> {
        let mut out = NetworkParams::<U>::zeros();
        for (dst, src) in out.tensors_mut().into_iter().zip(self.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = U::from_f64_lossy(s.to_f64().unwrap_or(f64::NAN));
            }
        }
        out
    }
}

/// He-uniform weights (bound `sqrt(6 / fan_in)`), zero biases.
pub fn init_params<T: Scalar>(seed: u64) -> NetworkParams<T> {
    let mut rng = seed::rng_from(seed);
    let mut params = NetworkParams::<T>::zeros();
    let fan_ins = [
        CONV1.fan_in(),
        CONV2.fan_in(),
        FC1.inputs,
        FC2.inputs,
        FC3.inputs,
    ];
    let weights = [
        &mut params.conv1_w,
        &mut params.conv2_w,
        &mut params.fc1_w,
        &mut params.fc2_w,
        &mut params.fc3_w,
    ];
    for (w, fan_in) in weights.into_iter().zip(fan_ins) {
        let bound = (6.0 / fan_in as f64).sqrt();
        for v in w.iter_mut() {
            *v = T::from_f64_lossy(rng.gen_range(-bound..bound));
        }
    }
    params
}

/// Activation buffers for one sample, reused across calls.
#[derive(Clone, Debug)]
pub struct Workspace<T> {
    input: Vec<T>,
    cols1: Vec<T>,
    a1: Vec<T>,
    p1: Vec<T>,
    arg1: Vec<usize>,
    cols2: Vec<T>,
    a2: Vec<T>,
    p2: Vec<T>,
    arg2: Vec<usize>,
    h1: Vec<T>,
    h2: Vec<T>,
    logits: Vec<T>,
    // backward scratch
    d_logits: Vec<T>,
    d_h2: Vec<T>,
    d_h1: Vec<T>,
    d_p2: Vec<T>,
    d_a2: Vec<T>,
    d_cols2: Vec<T>,
    d_p1: Vec<T>,
    d_a1: Vec<T>,
}

impl<T: Scalar> Default for Workspace<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Workspace<T> {
    pub fn new() -> Self {
        let z = |n: usize| vec![T::zero(); n];
        let plane1 = CONV1.out_height() * CONV1.out_width();
        let plane2 = CONV2.out_height() * CONV2.out_width();
        Self {
            input: z(CONV1.in_len()),
            cols1: z(CONV1.patch_len() * plane1),
            a1: z(CONV1.out_len()),
            p1: z(POOL1.out_len()),
            arg1: vec![0; POOL1.out_len()],
            cols2: z(CONV2.patch_len() * plane2),
            a2: z(CONV2.out_len()),
            p2: z(POOL2.out_len()),
            arg2: vec![0; POOL2.out_len()],
            h1: z(FC1.outputs),
            h2: z(FC2.outputs),
            logits: z(FC3.outputs),
            d_logits: z(FC3.outputs),
            d_h2: z(FC2.outputs),
            d_h1: z(FC1.outputs),
            d_p2: z(POOL2.out_len()),
            d_a2: z(CONV2.out_len()),
            d_cols2: z(CONV2.patch_len() * plane2),
            d_p1: z(POOL1.out_len()),
            d_a1: z(CONV1.out_len()),
        }
    }

    pub fn logits(&self) -> &[T] {
        &self.logits
    }

    /// Which ReLUs fired and which pool inputs won in the last forward pass.
    /// The network is smooth in its parameters wherever this stays constant.
    pub fn activation_pattern(&self) -> ActivationPattern {
        let on = |v: &[T]| v.iter().map(|&x| x > T::zero()).collect();
        ActivationPattern {
            relu: [on(&self.a1), on(&self.a2), on(&self.h1), on(&self.h2)],
            pool: [self.arg1.clone(), self.arg2.clone()],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActivationPattern {
    relu: [Vec<bool>; 4],
    pool: [Vec<usize>; 2],
}

fn check_shape(img: &GrayImage) -> Result<()> {
    if img.dims() != (INPUT_SIDE, INPUT_SIDE) {
        return Err(Error::Shape {
            expected: format!("{INPUT_SIDE}x{INPUT_SIDE} image"),
            actual: format!("{}x{} image", img.height(), img.width()),
        });
    }
    Ok(())
}

/// Runs the forward pass, leaving activations in `ws`; returns class probabilities.
pub fn forward_with<T: Scalar>(
    params: &NetworkParams<T>,
    img: &GrayImage,
    ws: &mut Workspace<T>,
) -> Result<Vec<f64>> {
    check_shape(img)?;
    for (dst, &src) in ws.input.iter_mut().zip(img.pixels()) {
        *dst = T::from_f32(src).unwrap_or_else(T::zero);
    }
    CONV1.im2col(&ws.input, &mut ws.cols1);
    CONV1.forward(&ws.cols1, &params.conv1_w, &params.conv1_b, &mut ws.a1);
    relu_inplace(&mut ws.a1);
    POOL1.forward(&ws.a1, &mut ws.p1, &mut ws.arg1);

    CONV2.im2col(&ws.p1, &mut ws.cols2);
    CONV2.forward(&ws.cols2, &params.conv2_w, &params.conv2_b, &mut ws.a2);
    relu_inplace(&mut ws.a2);
    POOL2.forward(&ws.a2, &mut ws.p2, &mut ws.arg2);

    FC1.forward(&params.fc1_w, &params.fc1_b, &ws.p2, &mut ws.h1);
    relu_inplace(&mut ws.h1);
    FC2.forward(&params.fc2_w, &params.fc2_b, &ws.h1, &mut ws.h2);
    relu_inplace(&mut ws.h2);
    FC3.forward(&params.fc3_w, &params.fc3_b, &ws.h2, &mut ws.logits);
    Ok(softmax(&ws.logits))
}

/// Class probabilities for one 28×28 image.
pub fn forward<T: Scalar>(params: &NetworkParams<T>, img: &GrayImage) -> Result<Vec<f64>> {
    forward_with(params, img, &mut Workspace::new())
}

/// Backpropagates `d_logits` (already in `ws`) and accumulates into `grads`.
fn backward<T: Scalar>(
    params: &NetworkParams<T>,
    ws: &mut Workspace<T>,
    grads: &mut NetworkParams<T>,
) {
    FC3.backward(
        &params.fc3_w,
        &ws.h2,
        &ws.d_logits,
        &mut grads.fc3_w,
        &mut grads.fc3_b,
        Some(&mut ws.d_h2),
    );
    relu_backward(&ws.h2, &mut ws.d_h2);
    FC2.backward(
        &params.fc2_w,
        &ws.h1,
        &ws.d_h2,
        &mut grads.fc2_w,
        &mut grads.fc2_b,
        Some(&mut ws.d_h1),
    );
    relu_backward(&ws.h1, &mut ws.d_h1);
    FC1.backward(
        &params.fc1_w,
        &ws.p2,
        &ws.d_h1,
        &mut grads.fc1_w,
        &mut grads.fc1_b,
        Some(&mut ws.d_p2),
    );
    POOL2.backward(&ws.d_p2, &ws.arg2, &mut ws.d_a2);
    relu_backward(&ws.a2, &mut ws.d_a2);
    CONV2.backward(
        &ws.cols2,
        &params.conv2_w,
        &ws.d_a2,
        &mut grads.conv2_w,
        &mut grads.conv2_b,
        Some(&mut ws.d_cols2),
    );
    CONV2.col2im(&ws.d_cols2, &mut ws.d_p1);
    POOL1.backward(&ws.d_p1, &ws.arg1, &mut ws.d_a1);
    relu_backward(&ws.a1, &mut ws.d_a1);
    CONV1.backward(
        &ws.cols1,
        &params.conv1_w,
        &ws.d_a1,
        &mut grads.conv1_w,
        &mut grads.conv1_b,
        None,
    );
}

/// Cross-entropy of one sample; accumulates `scale * dloss/dparams` into `grads`.
fn accumulate_sample<T: Scalar>(
    params: &NetworkParams<T>,
    sample: &LabeledSample,
    scale: f64,
    ws: &mut Workspace<T>,
    grads: &mut NetworkParams<T>,
) -> Result<f64> {
    let probs = forward_with(params, &sample.image, ws)?;
    let label = usize::from(sample.label);
    if label >= NUM_CLASSES {
        return Err(Error::Range(format!(
            "label {label} outside 0..{NUM_CLASSES}"
        )));
    }
    for (c, (d, &p)) in ws.d_logits.iter_mut().zip(&probs).enumerate() {
        let target = if c == label { 1.0 } else { 0.0 };
        *d = T::from_f64_lossy((p - target) * scale);
    }
    backward(params, ws, grads);
    Ok(-probs[label].ln())
}

/// Mean cross-entropy over `batch` and its exact gradient.
pub fn loss_and_grads<T: Scalar>(
    params: &NetworkParams<T>,
    batch: &[LabeledSample],
) -> Result<(f64, NetworkParams<T>)> {
    if batch.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut grads = NetworkParams::zeros();
    let mut ws = Workspace::new();
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    for sample in batch {
        total += accumulate_sample(params, sample, scale, &mut ws, &mut grads)?;
    }
    Ok((total * scale, grads))
}

/// Mean cross-entropy without gradients.
pub fn mean_loss<T: Scalar>(params: &NetworkParams<T>, batch: &[LabeledSample]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut ws = Workspace::new();
    let mut total = 0.0;
    for s in batch {
        let probs = forward_with(params, &s.image, &mut ws)?;
        total -= probs[usize::from(s.label)].ln();
    }
    Ok(total / batch.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Multiplier applied to the learning rate after every epoch.
    pub lr_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            learning_rate: 0.05,
            lr_decay: 0.95,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config(format!(
                "lr_decay must lie in (0, 1], got {}",
                self.lr_decay
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Trained<T = f32> {
    pub params: NetworkParams<T>,
    /// Mean training loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Seeded-shuffle mini-batch SGD.
pub fn train<T: Scalar>(
    mut params: NetworkParams<T>,
    data: &[LabeledSample],
    cfg: &TrainConfig,
) -> Result<Trained<T>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptySet);
    }
    for s in data {
        check_shape(&s.image)?;
    }
    let mut ws = Workspace::new();
    let mut grads = NetworkParams::<T>::zeros();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut lr = cfg.learning_rate;
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut rng = seed::rng_from(seed::derive(cfg.seed, "shuffle", epoch as u64));
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.fill_zero();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                total += accumulate_sample(&params, &data[i], scale, &mut ws, &mut grads)?;
            }
            if !total.is_finite() {
                return Err(Error::Divergence { epoch, loss: total });
            }
            params.sgd_step(&grads, T::from_f64_lossy(lr));
        }
        let mean = total / data.len() as f64;
        if !params.all_finite() {
            return Err(Error::Divergence {
                epoch,
                loss: f64::NAN,
            });
        }
        log::debug!("epoch {epoch}: loss {mean:.5} lr {lr:.5}");
        epoch_losses.push(mean);
        lr *= cfg.lr_decay;
    }
    Ok(Trained {
        params,
        epoch_losses,
    })
}

/// Index of the largest probability; ties go to the lowest class.
pub fn argmax(probs: &[f64]) -> usize {
    probs
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        })
        .0
}

pub fn predict<T: Scalar>(params: &NetworkParams<T>, img: &GrayImage) -> Result<usize> {
    Ok(argmax(&forward(params, img)?))
}

/// Fraction of samples whose prediction equals the label.
pub fn accuracy<T: Scalar>(params: &NetworkParams<T>, test_set: &[LabeledSample]) -> Result<f64> {
    if test_set.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut ws = Workspace::new();
    let mut correct = 0usize;
    for s in test_set {
        if argmax(&forward_with(params, &s.image, &mut ws)?) == usize::from(s.label) {
            correct += 1;
        }
    }
    Ok(correct as f64 / test_set.len() as f64)
}
