//! Network shapes and parameter storage.
//!
//! The network is a fixed four-block CNN:
//! `Conv3x3 → Scaler → BatchNorm → ReLU → MaxPool` for the first three blocks,
//! `Conv3x3 → Scaler → BatchNorm → ReLU → GlobalAvgPool` for the fourth,
//! then `Flatten → Dense(classes)`. Block widths are `(u, 2u, 4u, 8u)`.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Scalar;
use crate::seed::SeedPath;

pub const NUM_BLOCKS: usize = 4;
pub const KERNEL: usize = 3;
pub const KERNEL_AREA: usize = KERNEL * KERNEL;
/// Multipliers of the complexity factor `u` for each conv block.
pub const WIDTH_MULTIPLIERS: [usize; NUM_BLOCKS] = [1, 2, 4, 8];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    Conv2D,
    Scaler,
    BatchNorm,
    ReLU,
    MaxPool2D,
    GlobalAvgPool2D,
    Flatten,
    Dense,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: Option<(usize, usize)>,
}

impl LayerSpec {
    fn passthrough(kind: LayerKind, channels: usize) -> Self {
        LayerSpec {
            kind,
            in_channels: channels,
            out_channels: channels,
            kernel: None,
        }
    }
}

/// Shape of one network instance: image channels, block widths and class count.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Architecture {
    pub image_channels: usize,
    pub classes: usize,
    pub widths: [usize; NUM_BLOCKS],
}

impl Architecture {
    pub fn new(u: usize, image_channels: usize, classes: usize) -> Result<Self> {
        if u == 0 {
            return Err(Error::config("complexity factor u must be at least 1"));
        }
        Self::from_widths(WIDTH_MULTIPLIERS.map(|m| m * u), image_channels, classes)
    }

    pub fn from_widths(
        widths: [usize; NUM_BLOCKS],
        image_channels: usize,
        classes: usize,
    ) -> Result<Self> {
        if image_channels == 0 {
            return Err(Error::config("image_channels must be at least 1"));
        }
        if classes < 2 {
            return Err(Error::config("need at least 2 classes"));
        }
        if widths.contains(&0) {
            return Err(Error::config(format!("zero block width in {widths:?}")));
        }
        Ok(Architecture {
            image_channels,
            classes,
            widths,
        })
    }

    pub fn block_inputs(&self, block: usize) -> usize {
        if block == 0 {
            self.image_channels
        } else {
            self.widths[block - 1]
        }
    }

    pub fn dense_inputs(&self) -> usize {
        self.widths[NUM_BLOCKS - 1]
    }

    /// Complexity factor, if the widths follow the `(u, 2u, 4u, 8u)` pattern.
    pub fn complexity(&self) -> Option<usize> {
        let u = self.widths[0];
        (self.widths == WIDTH_MULTIPLIERS.map(|m| m * u)).then_some(u)
    }

    pub fn layers(&self) -> Vec<LayerSpec> {
        let mut out = Vec::with_capacity(NUM_BLOCKS * 5 + 2);
        for b in 0..NUM_BLOCKS {
            let n = self.widths[b];
            out.push(LayerSpec {
                kind: LayerKind::Conv2D,
                in_channels: self.block_inputs(b),
                out_channels: n,
                kernel: Some((KERNEL, KERNEL)),
            });
            out.push(LayerSpec::passthrough(LayerKind::Scaler, n));
            out.push(LayerSpec::passthrough(LayerKind::BatchNorm, n));
            out.push(LayerSpec::passthrough(LayerKind::ReLU, n));
            let pool = if b + 1 < NUM_BLOCKS {
                LayerKind::MaxPool2D
            } else {
                LayerKind::GlobalAvgPool2D
            };
            out.push(LayerSpec::passthrough(pool, n));
        }
        out.push(LayerSpec::passthrough(LayerKind::Flatten, self.dense_inputs()));
        out.push(LayerSpec {
            kind: LayerKind::Dense,
            in_channels: self.dense_inputs(),
            out_channels: self.classes,
            kernel: None,
        });
        out
    }

    /// Every stored tensor with its shape, in canonical order.
    pub fn tensor_shapes(&self) -> Vec<(TensorKind, Vec<usize>)> {
        let mut out = Vec::with_capacity(NUM_BLOCKS * 6 + 2);
        for b in 0..NUM_BLOCKS {
            let n = self.widths[b];
            let m = self.block_inputs(b);
            out.push((TensorKind::ConvWeight(b), vec![n, m, KERNEL, KERNEL]));
            out.push((TensorKind::ConvBias(b), vec![n]));
            out.push((TensorKind::BnGain(b), vec![n]));
            out.push((TensorKind::BnBias(b), vec![n]));
            out.push((TensorKind::BnMean(b), vec![n]));
            out.push((TensorKind::BnVar(b), vec![n]));
        }
        out.push((TensorKind::DenseWeight, vec![self.classes, self.dense_inputs()]));
        out.push((TensorKind::DenseBias, vec![self.classes]));
        out
    }

    pub fn trainable_count(&self) -> usize {
        self.tensor_shapes()
            .into_iter()
            .filter(|(k, _)| k.is_trainable())
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }
}

/// Exact trainable parameter count of the CIFAR-10 shaped network (3 image
/// channels, 10 classes) at complexity `u`. Running statistics are excluded.
pub fn param_count(u: usize) -> Result<usize> {
    Ok(Architecture::new(u, 3, 10)?.trainable_count())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TensorKind {
    ConvWeight(usize),
    ConvBias(usize),
    BnGain(usize),
    BnBias(usize),
    BnMean(usize),
    BnVar(usize),
    DenseWeight,
    DenseBias,
}

impl TensorKind {
    pub fn is_trainable(self) -> bool {
        !matches!(self, TensorKind::BnMean(_) | TensorKind::BnVar(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormConfig {
    pub momentum: f64,
    pub eps: f64,
}

impl Default for NormConfig {
    fn default() -> Self {
        NormConfig {
            momentum: 0.1,
            eps: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockParams<T> {
    /// `(out, in, 3, 3)` row-major.
    pub conv_weight: Vec<T>,
    pub conv_bias: Vec<T>,
    pub bn_gain: Vec<T>,
    pub bn_bias: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<T> {
    pub arch: Architecture,
    pub norm: NormConfig,
    pub blocks: Vec<BlockParams<T>>,
    /// `(classes, in)` row-major.
    pub dense_weight: Vec<T>,
    pub dense_bias: Vec<T>,
}

impl<T: Scalar> ModelParams<T> {
    /// Parameters with every tensor, including running statistics, set to zero.
    pub fn zeros(arch: &Architecture) -> Self {
        let blocks = (0..NUM_BLOCKS)
            .map(|b| {
                let n = arch.widths[b];
                let m = arch.block_inputs(b);
                BlockParams {
                    conv_weight: vec![T::zero(); n * m * KERNEL_AREA],
                    conv_bias: vec![T::zero(); n],
                    bn_gain: vec![T::zero(); n],
                    bn_bias: vec![T::zero(); n],
                    running_mean: vec![T::zero(); n],
                    running_var: vec![T::zero(); n],
                }
            })
            .collect();
        ModelParams {
            arch: arch.clone(),
            norm: NormConfig::default(),
            blocks,
            dense_weight: vec![T::zero(); arch.classes * arch.dense_inputs()],
            dense_bias: vec![T::zero(); arch.classes],
        }
    }

    /// He fan-in normal initialization for conv and dense weights; zero biases;
    /// BatchNorm gain 1, bias 0, running mean 0, running variance 1.
    pub fn init(arch: &Architecture, seed: u64) -> Self {
        let mut p = Self::zeros(arch);
        let mut rng = SeedPath::root(seed).with("init").rng();
        for (b, block) in p.blocks.iter_mut().enumerate() {
            let fan_in = (arch.block_inputs(b) * KERNEL_AREA) as f64;
            let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("valid std");
            for w in block.conv_weight.iter_mut() {
                *w = T::of(normal.sample(&mut rng));
            }
            block.bn_gain.fill(T::one());
            block.running_var.fill(T::one());
        }
        let normal = Normal::new(0.0, (2.0 / arch.dense_inputs() as f64).sqrt()).expect("valid std");
        for w in p.dense_weight.iter_mut() {
            *w = T::of(normal.sample(&mut rng));
        }
        p
    }

    pub fn tensors(&self) -> Vec<(TensorKind, &Vec<T>)> {
        let mut out = Vec::with_capacity(NUM_BLOCKS * 6 + 2);
        for (b, blk) in self.blocks.iter().enumerate() {
            out.push((TensorKind::ConvWeight(b), &blk.conv_weight));
            out.push((TensorKind::ConvBias(b), &blk.conv_bias));
            out.push((TensorKind::BnGain(b), &blk.bn_gain));
            out.push((TensorKind::BnBias(b), &blk.bn_bias));
            out.push((TensorKind::BnMean(b), &blk.running_mean));
            out.push((TensorKind::BnVar(b), &blk.running_var));
        }
        out.push((TensorKind::DenseWeight, &self.dense_weight));
        out.push((TensorKind::DenseBias, &self.dense_bias));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(TensorKind, &mut Vec<T>)> {
        let mut out = Vec::with_capacity(NUM_BLOCKS * 6 + 2);
        for (b, blk) in self.blocks.iter_mut().enumerate() {
            out.push((TensorKind::ConvWeight(b), &mut blk.conv_weight));
            out.push((TensorKind::ConvBias(b), &mut blk.conv_bias));
            out.push((TensorKind::BnGain(b), &mut blk.bn_gain));
            out.push((TensorKind::BnBias(b), &mut blk.bn_bias));
            out.push((TensorKind::BnMean(b), &mut blk.running_mean));
            out.push((TensorKind::BnVar(b), &mut blk.running_var));
        }
        out.push((TensorKind::DenseWeight, &mut self.dense_weight));
        out.push((TensorKind::DenseBias, &mut self.dense_bias));
        out
    }

    pub fn trainable(&self) -> Vec<&Vec<T>> {
        self.tensors()
            .into_iter()
            .filter(|(k, _)| k.is_trainable())
            .map(|(_, t)| t)
            .collect()
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Vec<T>> {
        self.tensors_mut()
            .into_iter()
            .filter(|(k, _)| k.is_trainable())
            .map(|(_, t)| t)
            .collect()
    }

    pub fn num_trainable(&self) -> usize {
        self.trainable().iter().map(|t| t.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let conv = |v: &Vec<T>| v.iter().map(|x| U::of(x.f64())).collect::<Vec<U>>();
        ModelParams {
            arch: self.arch.clone(),
            norm: self.norm,
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockParams {
                    conv_weight: conv(&b.conv_weight),
                    conv_bias: conv(&b.conv_bias),
                    bn_gain: conv(&b.bn_gain),
                    bn_bias: conv(&b.bn_bias),
                    running_mean: conv(&b.running_mean),
                    running_var: conv(&b.running_var),
                })
                .collect(),
            dense_weight: conv(&self.dense_weight),
            dense_bias: conv(&self.dense_bias),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|x| x.is_finite()))
    }
}

/// Fully initialized network of complexity `u`.
pub fn build_model(
    u: usize,
    image_channels: usize,
    classes: usize,
    seed: u64,
) -> Result<ModelParams<f32>> {
    let arch = Architecture::new(u, image_channels, classes)?;
    Ok(ModelParams::init(&arch, seed))
}
