//! Desk-scale residual CNN and the parameter store it trains.
//!
//! Architecture: stem conv → residual blocks (conv-ReLU-conv + skip, 1×1
//! projection when width or stride changes) → global average pool → dense
//! head. No normalization layers.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::data::ImageDims;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub input_height: usize,
    pub input_width: usize,
    pub input_channels: usize,
    pub stem_width: usize,
    pub stem_stride: usize,
    /// One entry per residual block.
    pub block_widths: Vec<usize>,
    pub block_strides: Vec<usize>,
    pub num_classes: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_height: 32,
            input_width: 32,
            input_channels: 3,
            stem_width: 16,
            stem_stride: 2,
            block_widths: vec![16, 32, 32],
            block_strides: vec![1, 2, 1],
            num_classes: 10,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config("num_classes must be >= 2".into()));
        }
        if self.block_widths.is_empty() {
            return Err(Error::Config("at least one residual block required".into()));
        }
        if self.block_widths.len() != self.block_strides.len() {
            return Err(Error::Config(
                "block_widths and block_strides differ in length".into(),
            ));
        }
        let widths_ok = self.stem_width >= 1 && self.block_widths.iter().all(|&w| w >= 1);
        let strides_ok = self.stem_stride >= 1 && self.block_strides.iter().all(|&s| s >= 1);
        if !widths_ok || !strides_ok {
            return Err(Error::Config("widths and strides must be >= 1".into()));
        }
        if self.input_height == 0 || self.input_width == 0 || self.input_channels == 0 {
            return Err(Error::Config("input dimensions must be >= 1".into()));
        }
        Ok(())
    }

    pub fn dims(&self) -> ImageDims {
        ImageDims::new(self.input_height, self.input_width, self.input_channels)
    }

    /// Channel count of the last residual block, i.e. the pooled feature size.
    pub fn feature_width(&self) -> usize {
        *self.block_widths.last().expect("validated")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Weight,
    Bias,
}

/// A live parameter together with its value at construction time.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter<T> {
    pub kind: ParamKind,
    value: Tensor<T>,
    init: Tensor<T>,
}

impl<T: Scalar> Parameter<T> {
    pub fn value(&self) -> &Tensor<T> {
        &self.value
    }

    pub fn value_mut(&mut self) -> &mut Tensor<T> {
        &mut self.value
    }

    pub fn init(&self) -> &Tensor<T> {
        &self.init
    }
}

/// Named parameters ordered by name, each carrying its initialization
/// snapshot.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<T> {
    params: BTreeMap<String, Parameter<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            params: BTreeMap::new(),
        }
    }

    /// Adds a parameter; its current value becomes the init snapshot.
    pub fn insert(&mut self, name: &str, kind: ParamKind, value: Tensor<T>) -> Result<()> {
        let init = value.clone();
        self.insert_with_init(name, kind, value, init)
    }

    pub fn insert_with_init(
        &mut self,
        name: &str,
        kind: ParamKind,
        value: Tensor<T>,
        init: Tensor<T>,
    ) -> Result<()> {
        if value.shape() != init.shape() {
            return Err(Error::ShapeMismatch {
                op: "init snapshot",
                left: value.shape().to_vec(),
                right: init.shape().to_vec(),
            });
        }
        if self.params.contains_key(name) {
            return Err(Error::invalid(format!("duplicate parameter name {name}")));
        }
        self.params
            .insert(name.to_string(), Parameter { kind, value, init });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Parameter<T>> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Parameter<T>> {
        self.params.get_mut(name)
    }

    pub fn value(&self, name: &str) -> Result<&Tensor<T>> {
        self.params
            .get(name)
            .map(|p| &p.value)
            .ok_or_else(|| Error::invalid(format!("unknown parameter {name}")))
    }

    /// Replaces a live value; the shape must not change.
    pub fn set_value(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        let p = self
            .params
            .get_mut(name)
            .ok_or_else(|| Error::invalid(format!("unknown parameter {name}")))?;
        if p.value.shape() != value.shape() {
            return Err(Error::ShapeMismatch {
                op: "set_value",
                left: p.value.shape().to_vec(),
                right: value.shape().to_vec(),
            });
        }
        p.value = value;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Parameter<T>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Parameter<T>)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn weights(&self) -> impl Iterator<Item = (&str, &Parameter<T>)> {
        self.iter().filter(|(_, p)| p.kind == ParamKind::Weight)
    }

    pub fn names(&self) -> Vec<String> {
        self.params.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn parameter_count(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    pub fn weight_count(&self) -> usize {
        self.weights().map(|(_, p)| p.value.len()).sum()
    }

    /// Snapshot of the init values as a fresh store.
    pub fn init_store(&self) -> ParamStore<T> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|(k, p)| {
                    (
                        k.clone(),
                        Parameter {
                            kind: p.kind,
                            value: p.init.clone(),
                            init: p.init.clone(),
                        },
                    )
                })
                .collect(),
        }
    }

    /// Binds every parameter into `g` as a leaf.
    pub fn bind(&self, g: &mut Graph<T>, requires_grad: bool) -> BoundParams {
        BoundParams {
            vars: self
                .params
                .iter()
                .map(|(k, p)| (k.clone(), g.leaf(p.value.clone(), requires_grad)))
                .collect(),
        }
    }
}

/// Parameter name → graph node.
pub struct BoundParams {
    vars: BTreeMap<String, Var>,
}

impl BoundParams {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::invalid(format!("parameter {name} not bound")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, &v)| (k.as_str(), v))
    }
}

/// Anything that maps an `N×C×H×W` batch to `[N, classes]` logits inside a graph.
pub trait ImageModel<T: Scalar>: Sync {
    fn dims(&self) -> ImageDims;
    fn num_classes(&self) -> usize;
    /// Parameters enter the graph as constants.
    fn logits(&self, g: &mut Graph<T>, x: Var) -> Result<Var>;
}

/// Nodes produced by one forward pass of [`Network`].
pub struct ForwardVars {
    pub logits: Var,
    /// Output of the last residual block (post-ReLU, pre-pool).
    pub tap: Var,
    pub pooled: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    config: ModelConfig,
    pub params: ParamStore<T>,
}

struct ConvSpec {
    name: String,
    out_ch: usize,
    in_ch: usize,
    k: usize,
    bias: bool,
    gain: f64,
}

fn block_prefix(i: usize) -> String {
    format!("block{i}")
}

impl<T: Scalar> Network<T> {
    /// He-initialized network; the init snapshot is captured immediately.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new();
        for spec in Self::conv_specs(&config) {
            let fan_in = (spec.in_ch * spec.k * spec.k) as f64;
            let normal = Normal::new(0.0, spec.gain * (2.0 / fan_in).sqrt()).expect("valid std");
            let shape = [spec.out_ch, spec.in_ch, spec.k, spec.k];
            let w = Tensor::from_fn(&shape, |_| T::from_f64(normal.sample(&mut rng)));
            params.insert(&format!("{}.weight", spec.name), ParamKind::Weight, w)?;
            if spec.bias {
                params.insert(
                    &format!("{}.bias", spec.name),
                    ParamKind::Bias,
                    Tensor::zeros(&[spec.out_ch]),
                )?;
            }
        }
        let feat = config.feature_width();
        let normal = Normal::new(0.0, (1.0 / feat as f64).sqrt()).expect("valid std");
        let w = Tensor::from_fn(&[feat, config.num_classes], |_| {
            T::from_f64(normal.sample(&mut rng))
        });
        params.insert("head.weight", ParamKind::Weight, w)?;
        params.insert("head.bias", ParamKind::Bias, Tensor::zeros(&[config.num_classes]))?;
        Ok(Network { config, params })
    }

    /// Wraps existing parameters after checking them against `config`.
    pub fn from_params(config: ModelConfig, params: ParamStore<T>) -> Result<Self> {
        let reference = Network::<T>::new(config.clone())?;
        if reference.params.names() != params.names() {
            return Err(Error::invalid(
                "parameter names do not match model config".to_string(),
            ));
        }
        for (name, p) in reference.params.iter() {
            let other = params.get(name).expect("same names");
            if other.value.shape() != p.value.shape() || other.kind != p.kind {
                return Err(Error::ShapeMismatch {
                    op: "from_params",
                    left: p.value.shape().to_vec(),
                    right: other.value.shape().to_vec(),
                });
            }
        }
        Ok(Network { config, params })
    }

    fn conv_specs(config: &ModelConfig) -> Vec<ConvSpec> {
        let c = config.input_channels;
        let mut specs = vec![ConvSpec {
            name: "stem".into(),
            out_ch: config.stem_width,
            in_ch: c,
            k: 3,
            bias: true,
            gain: 1.0,
        }];
        let mut in_ch = config.stem_width;
        for (i, (&w, &s)) in config
            .block_widths
            .iter()
            .zip(&config.block_strides)
            .enumerate()
        {
            let p = block_prefix(i);
            specs.push(ConvSpec {
                name: format!("{p}.conv1"),
                out_ch: w,
                in_ch,
                k: 3,
                bias: true,
                gain: 1.0,
            });
            // residual branch starts small so the identity path dominates early
            specs.push(ConvSpec {
                name: format!("{p}.conv2"),
                out_ch: w,
                in_ch: w,
                k: 3,
                bias: true,
                gain: 0.5,
            });
            if w != in_ch || s != 1 {
                specs.push(ConvSpec {
                    name: format!("{p}.shortcut"),
                    out_ch: w,
                    in_ch,
                    k: 1,
                    bias: false,
                    gain: 1.0,
                });
            }
            in_ch = w;
        }
        specs
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Full forward pass with explicitly bound parameters.
    pub fn forward(&self, g: &mut Graph<T>, p: &BoundParams, x: Var) -> Result<ForwardVars> {
        // Pixels in [0, 1] are mapped to [-1, 1].
        let shift = g.constant(Tensor::full(&[self.config.input_channels], T::from_f64(-0.5)));
        let x = g.add_bias(x, shift)?;
        let x = g.scale(x, T::from_f64(2.0));
        let stem = g.conv2d(x, p.get("stem.weight")?, self.config.stem_stride, 1)?;
        let stem = g.add_bias(stem, p.get("stem.bias")?)?;
        let mut h = g.relu(stem);
        for (i, &stride) in self.config.block_strides.iter().enumerate() {
            let pre = block_prefix(i);
            let a = g.conv2d(h, p.get(&format!("{pre}.conv1.weight"))?, stride, 1)?;
            let a = g.add_bias(a, p.get(&format!("{pre}.conv1.bias"))?)?;
            let a = g.relu(a);
            let b = g.conv2d(a, p.get(&format!("{pre}.conv2.weight"))?, 1, 1)?;
            let b = g.add_bias(b, p.get(&format!("{pre}.conv2.bias"))?)?;
            let skip = match p.get(&format!("{pre}.shortcut.weight")) {
                Ok(w) => g.conv2d(h, w, stride, 0)?,
                Err(_) => h,
            };
            let sum = g.add(b, skip)?;
            h = g.relu(sum);
        }
        let pooled = g.global_avg_pool(h)?;
        let logits = g.matmul(pooled, p.get("head.weight")?)?;
        let logits = g.add_bias(logits, p.get("head.bias")?)?;
        Ok(ForwardVars {
            logits,
            tap: h,
            pooled,
        })
    }

    /// Dense head applied to pooled features: the class logits.
    pub fn head_logits(&self, pooled: &[f64]) -> Vec<f64> {
        let w = self.params.value("head.weight").expect("head present");
        let b = self.params.value("head.bias").expect("head present");
        let k = self.config.num_classes;
        let mut out: Vec<f64> = b.data().iter().map(|v| v.as_f64()).collect();
        for (i, &f) in pooled.iter().enumerate() {
            for (j, o) in out.iter_mut().enumerate() {
                *o += f * w.data()[i * k + j].as_f64();
            }
        }
        out
    }

    /// Pooled tap-layer features `[N, feature_width]` for an NCHW batch.
    pub fn pooled_features(&self, batch: Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g, false);
        let x = g.constant(batch);
        let fwd = self.forward(&mut g, &p, x)?;
        Ok(g.value(fwd.pooled).clone())
    }
}

impl<T: Scalar> ImageModel<T> for Network<T> {
    fn dims(&self) -> ImageDims {
        self.config.dims()
    }

    fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    fn logits(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let p = self.params.bind(g, false);
        Ok(self.forward(g, &p, x)?.logits)
    }
}

/// `logits = flatten(x) · W + b` with `W: [C·H·W, classes]` in CHW order.
#[derive(Debug, Clone)]
pub struct LinearModel<T> {
    dims: ImageDims,
    weight: Tensor<T>,
    bias: Tensor<T>,
}

impl<T: Scalar> LinearModel<T> {
    pub fn new(dims: ImageDims, weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        if weight.ndim() != 2 || weight.shape()[0] != dims.len() || bias.shape() != [weight.shape()[1]] {
            return Err(Error::ShapeMismatch {
                op: "linear model",
                left: weight.shape().to_vec(),
                right: bias.shape().to_vec(),
            });
        }
        Ok(LinearModel { dims, weight, bias })
    }
}

impl<T: Scalar> ImageModel<T> for LinearModel<T> {
    fn dims(&self) -> ImageDims {
        self.dims
    }

    fn num_classes(&self) -> usize {
        self.bias.len()
    }

    fn logits(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let n = g.value(x).shape()[0];
        let flat = g.reshape(x, &[n, self.dims.len()])?;
        let w = g.constant(self.weight.clone());
        let b = g.constant(self.bias.clone());
        let y = g.matmul(flat, w)?;
        g.add_bias(y, b)
    }
}
