use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::element::Element;
use crate::error::{invalid, Error, Result};
use crate::graph::{Graph, Var};
use crate::ops::{BatchNormConfig, Conv2dParams, NormStats};
use crate::tensor::Tensor;

/// Where a layer reads its input from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    Input,
    Layer(usize),
}

/// How a convolution participates in the architecture. Used by the analyzer's
/// depth-counting convention.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvRole {
    Standard,
    Depthwise,
    Pointwise,
    Projection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        groups: usize,
        bias: bool,
        role: ConvRole,
    },
    BatchNorm {
        channels: usize,
    },
    Relu,
    MaxPool {
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    AdaptiveAvgPool {
        out_h: usize,
        out_w: usize,
    },
    Flatten,
    Linear {
        in_features: usize,
        out_features: usize,
    },
    Add,
}

impl LayerKind {
    pub fn label(&self) -> &'static str {
        match self {
            LayerKind::Conv {
                role: ConvRole::Depthwise,
                ..
            } => "conv_dw",
            LayerKind::Conv {
                role: ConvRole::Pointwise,
                ..
            } => "conv_pw",
            LayerKind::Conv {
                role: ConvRole::Projection,
                ..
            } => "conv_proj",
            LayerKind::Conv { .. } => "conv",
            LayerKind::BatchNorm { .. } => "batchnorm",
            LayerKind::Relu => "relu",
            LayerKind::MaxPool { .. } => "maxpool",
            LayerKind::AdaptiveAvgPool { .. } => "adaptiveavgpool",
            LayerKind::Flatten => "flatten",
            LayerKind::Linear { .. } => "linear",
            LayerKind::Add => "add",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub name: String,
    pub kind: LayerKind,
    pub inputs: Vec<Source>,
    pub params: Vec<usize>,
    pub buffers: Vec<usize>,
}

/// What a parameter tensor is, for initialization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamRole {
    Weight { fan_in: usize },
    Bias,
    Gamma,
    Beta,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub trainable: bool,
    pub role: ParamRole,
    pub layer: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Buffer<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub layer: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Node handles produced by one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardPass {
    pub output: Var,
    /// Output of every layer, in layer order.
    pub layers: Vec<Var>,
}

/// Ordered layers with explicit edges, named parameters and buffers.
///
/// The last layer is the single output terminal; [`Source::Input`] is the
/// single input terminal.
#[derive(Clone, Debug)]
pub struct Model<T> {
    arch: String,
    input_channels: usize,
    layers: Vec<Layer>,
    params: Vec<Param<T>>,
    buffers: Vec<Buffer<T>>,
    norm: BatchNormConfig,
}

/// `name` equals `prefix` or continues it with a `.`-separated path segment.
pub fn matches_prefix(name: &str, prefix: &str) -> bool {
    prefix.is_empty()
        || name == prefix
        || (name.len() > prefix.len()
            && name.starts_with(prefix)
            && name.as_bytes()[prefix.len()] == b'.')
}

impl<T: Element> Model<T> {
    pub fn arch(&self) -> &str {
        &self.arch
    }

    pub fn input_channels(&self) -> usize {
        self.input_channels
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn buffers(&self) -> &[Buffer<T>] {
        &self.buffers
    }

    pub fn buffers_mut(&mut self) -> &mut [Buffer<T>] {
        &mut self.buffers
    }

    pub fn norm_config(&self) -> BatchNormConfig {
        self.norm
    }

    pub fn param(&self, name: &str) -> Option<&Param<T>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Param<T>> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    pub fn layer(&self, name: &str) -> Option<&Layer> {
        self.layers.iter().find(|l| l.name == name)
    }

    /// Number of output classes, read from the final linear layer.
    pub fn num_outputs(&self) -> Option<usize> {
        self.layers.iter().rev().find_map(|l| match l.kind {
            LayerKind::Linear { out_features, .. } => Some(out_features),
            _ => None,
        })
    }

    /// Parameters handed to an optimizer: trainable ones only, in model order.
    pub fn trainable_params(&self) -> impl Iterator<Item = (usize, &Param<T>)> {
        self.params.iter().enumerate().filter(|(_, p)| p.trainable)
    }

    pub fn set_all_trainable(&mut self, trainable: bool) {
        self.params.iter_mut().for_each(|p| p.trainable = trainable);
    }

    /// Sets the trainable flag on every parameter under any of `prefixes`.
    /// Each prefix must match at least one parameter.
    pub fn set_trainable(&mut self, prefixes: &[&str], trainable: bool) -> Result<()> {
        for prefix in prefixes {
            if !self.params.iter().any(|p| matches_prefix(&p.name, prefix)) {
                return Err(invalid!("prefix {prefix:?} matches no parameter"));
            }
        }
        for p in &mut self.params {
            if prefixes.iter().any(|pre| matches_prefix(&p.name, pre)) {
                p.trainable = trainable;
            }
        }
        Ok(())
    }

    /// Registers every parameter as a graph leaf. Leaves require gradients iff
    /// `with_grad` and the parameter is trainable.
    pub fn bind(&self, g: &mut Graph<T>, with_grad: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| g.leaf(p.value.clone(), with_grad && p.trainable))
            .collect()
    }

    /// Forward pass. In [`Mode::Train`], batch-norm layers with at least one
    /// trainable affine parameter use batch statistics and update their running
    /// estimates; fully frozen batch-norm layers always use running estimates.
    pub fn forward(
        &mut self,
        g: &mut Graph<T>,
        params: &[Var],
        input: Var,
        mode: Mode,
    ) -> Result<ForwardPass> {
        let (pass, updates) = self.run(g, params, input, mode)?;
        for (idx, value) in updates {
            self.buffers[idx].value.data_mut().copy_from_slice(&value);
        }
        Ok(pass)
    }

    /// Evaluation-mode forward pass; never mutates the model.
    pub fn forward_eval(
        &self,
        g: &mut Graph<T>,
        params: &[Var],
        input: Var,
    ) -> Result<ForwardPass> {
        self.run(g, params, input, Mode::Eval).map(|(pass, _)| pass)
    }

    #[allow(clippy::type_complexity)]
    fn run(
        &self,
        g: &mut Graph<T>,
        params: &[Var],
        input: Var,
        mode: Mode,
    ) -> Result<(ForwardPass, Vec<(usize, Vec<T>)>)> {
        if params.len() != self.params.len() {
            return Err(invalid!(
                "{} parameter bindings for {} parameters",
                params.len(),
                self.params.len()
            ));
        }
        let mut outs: Vec<Var> = Vec::with_capacity(self.layers.len());
        let mut updates = Vec::new();
        for layer in &self.layers {
            let src = |s: &Source| match *s {
                Source::Input => input,
                Source::Layer(i) => outs[i],
            };
            let x = src(&layer.inputs[0]);
            let ctx = |e: Error| match e {
                Error::InvalidArgument(m) => {
                    Error::InvalidArgument(format!("layer {}: {m}", layer.name))
                }
                other => other,
            };
            let y = match &layer.kind {
                LayerKind::Conv {
                    stride,
                    padding,
                    groups,
                    bias,
                    ..
                } => {
                    let w = params[layer.params[0]];
                    let b = bias.then(|| params[layer.params[1]]);
                    g.conv2d(x, w, b, Conv2dParams::new(*stride, *padding, *groups))
                }
                LayerKind::BatchNorm { .. } => {
                    let (gi, bi) = (layer.params[0], layer.params[1]);
                    let (mi, vi) = (layer.buffers[0], layer.buffers[1]);
                    let frozen = !self.params[gi].trainable && !self.params[bi].trainable;
                    if mode == Mode::Train && !frozen {
                        let mut mean = self.buffers[mi].value.data().to_vec();
                        let mut var = self.buffers[vi].value.data().to_vec();
                        let out = g.batch_norm2d(
                            x,
                            params[gi],
                            params[bi],
                            NormStats::Train {
                                running_mean: &mut mean,
                                running_var: &mut var,
                            },
                            self.norm,
                        );
                        updates.push((mi, mean));
                        updates.push((vi, var));
                        out
                    } else {
                        let stats = NormStats::Eval {
                            running_mean: self.buffers[mi].value.data(),
                            running_var: self.buffers[vi].value.data(),
                        };
                        g.batch_norm2d(x, params[gi], params[bi], stats, self.norm)
                    }
                }
                LayerKind::Relu => g.relu(x),
                LayerKind::MaxPool {
                    kernel,
                    stride,
                    padding,
                } => g.max_pool2d_padded(x, *kernel, *stride, *padding),
                LayerKind::AdaptiveAvgPool { out_h, out_w } => {
                    g.adaptive_avg_pool2d(x, *out_h, *out_w)
                }
                LayerKind::Flatten => g.flatten(x),
                LayerKind::Linear { .. } => {
                    g.linear(x, params[layer.params[0]], Some(params[layer.params[1]]))
                }
                LayerKind::Add => g.add(x, src(&layer.inputs[1])),
            }
            .map_err(ctx)?;
            outs.push(y);
        }
        let output = *outs.last().ok_or_else(|| invalid!("model has no layers"))?;
        Ok((
            ForwardPass {
                output,
                layers: outs,
            },
            updates,
        ))
    }

    /// Every parameter and buffer as `(name, is_buffer, tensor)`, parameters first.
    pub fn state_entries(&self) -> impl Iterator<Item = (&str, bool, &Tensor<T>)> {
        self.params
            .iter()
            .map(|p| (p.name.as_str(), false, &p.value))
            .chain(
                self.buffers
                    .iter()
                    .map(|b| (b.name.as_str(), true, &b.value)),
            )
    }

    /// Looks up a parameter or buffer tensor by name.
    pub fn state_tensor_mut(&mut self, name: &str, buffer: bool) -> Option<&mut Tensor<T>> {
        if buffer {
            self.buffers
                .iter_mut()
                .find(|b| b.name == name)
                .map(|b| &mut b.value)
        } else {
            self.params
                .iter_mut()
                .find(|p| p.name == name)
                .map(|p| &mut p.value)
        }
    }

    /// Order-sensitive hash over names and value bits of all parameters and
    /// buffers (FNV-1a).
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |bytes: &[u8]| {
            for &b in bytes {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for (name, _, t) in self.state_entries() {
            feed(name.as_bytes());
            for v in t.data() {
                feed(&v.as_f64().to_bits().to_le_bytes());
            }
        }
        h
    }
}

/// Incremental construction of a [`Model`]. Every `add_*` call returns the new
/// layer as a [`Source`] for downstream layers.
pub struct ModelBuilder<T> {
    model: Model<T>,
}

impl<T: Element> ModelBuilder<T> {
    pub fn new(arch: &str, input_channels: usize) -> Self {
        Self {
            model: Model {
                arch: arch.to_string(),
                input_channels,
                layers: Vec::new(),
                params: Vec::new(),
                buffers: Vec::new(),
                norm: BatchNormConfig::default(),
            },
        }
    }

    fn push(&mut self, name: &str, kind: LayerKind, inputs: Vec<Source>) -> Result<Source> {
        if self.model.layers.iter().any(|l| l.name == name) {
            return Err(invalid!("duplicate layer name {name:?}"));
        }
        for s in &inputs {
            if let Source::Layer(i) = s {
                if *i >= self.model.layers.len() {
                    return Err(invalid!("layer {name:?} reads from undefined layer {i}"));
                }
            }
        }
        self.model.layers.push(Layer {
            name: name.to_string(),
            kind,
            inputs,
            params: Vec::new(),
            buffers: Vec::new(),
        });
        Ok(Source::Layer(self.model.layers.len() - 1))
    }

    fn param(&mut self, layer: Source, suffix: &str, value: Tensor<T>, role: ParamRole) {
        let Source::Layer(li) = layer else {
            unreachable!("parameters attach to layers")
        };
        let name = format!("{}.{suffix}", self.model.layers[li].name);
        self.model.params.push(Param {
            name,
            value,
            trainable: true,
            role,
            layer: li,
        });
        let idx = self.model.params.len() - 1;
        self.model.layers[li].params.push(idx);
    }

    fn buffer(&mut self, layer: Source, suffix: &str, value: Tensor<T>) {
        let Source::Layer(li) = layer else {
            unreachable!("buffers attach to layers")
        };
        let name = format!("{}.{suffix}", self.model.layers[li].name);
        self.model.buffers.push(Buffer {
            name,
            value,
            layer: li,
        });
        let idx = self.model.buffers.len() - 1;
        self.model.layers[li].buffers.push(idx);
    }

    #[allow(clippy::too_many_arguments)]
    pub fn conv(
        &mut self,
        name: &str,
        from: Source,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        groups: usize,
        bias: bool,
        role: ConvRole,
    ) -> Result<Source> {
        if in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0 || groups == 0 {
            return Err(invalid!(
                "conv {name:?}: channels, kernel, stride and groups must be positive"
            ));
        }
        if !in_channels.is_multiple_of(groups) || !out_channels.is_multiple_of(groups) {
            return Err(invalid!(
                "conv {name:?}: channels not divisible by groups {groups}"
            ));
        }
        let kind = LayerKind::Conv {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            groups,
            bias,
            role,
        };
        let l = self.push(name, kind, vec![from])?;
        let fan_in = in_channels / groups * kernel * kernel;
        let w = Tensor::zeros(&[out_channels, in_channels / groups, kernel, kernel])?;
        self.param(l, "weight", w, ParamRole::Weight { fan_in });
        if bias {
            self.param(l, "bias", Tensor::zeros(&[out_channels])?, ParamRole::Bias);
        }
        Ok(l)
    }

    pub fn batch_norm(&mut self, name: &str, from: Source, channels: usize) -> Result<Source> {
        let l = self.push(name, LayerKind::BatchNorm { channels }, vec![from])?;
        self.param(
            l,
            "weight",
            Tensor::full(&[channels], T::one())?,
            ParamRole::Gamma,
        );
        self.param(l, "bias", Tensor::zeros(&[channels])?, ParamRole::Beta);
        self.buffer(l, "running_mean", Tensor::zeros(&[channels])?);
        self.buffer(l, "running_var", Tensor::full(&[channels], T::one())?);
        Ok(l)
    }

    pub fn relu(&mut self, name: &str, from: Source) -> Result<Source> {
        self.push(name, LayerKind::Relu, vec![from])
    }

    pub fn max_pool(
        &mut self,
        name: &str,
        from: Source,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Source> {
        self.push(
            name,
            LayerKind::MaxPool {
                kernel,
                stride,
                padding,
            },
            vec![from],
        )
    }

    pub fn adaptive_avg_pool(
        &mut self,
        name: &str,
        from: Source,
        out_h: usize,
        out_w: usize,
    ) -> Result<Source> {
        self.push(
            name,
            LayerKind::AdaptiveAvgPool { out_h, out_w },
            vec![from],
        )
    }

    pub fn flatten(&mut self, name: &str, from: Source) -> Result<Source> {
        self.push(name, LayerKind::Flatten, vec![from])
    }

    pub fn linear(
        &mut self,
        name: &str,
        from: Source,
        in_features: usize,
        out_features: usize,
    ) -> Result<Source> {
        if in_features == 0 || out_features == 0 {
            return Err(invalid!("linear {name:?}: features must be positive"));
        }
        let l = self.push(
            name,
            LayerKind::Linear {
                in_features,
                out_features,
            },
            vec![from],
        )?;
        let w = Tensor::zeros(&[out_features, in_features])?;
        self.param(
            l,
            "weight",
            w,
            ParamRole::Weight {
                fan_in: in_features,
            },
        );
        self.param(l, "bias", Tensor::zeros(&[out_features])?, ParamRole::Bias);
        Ok(l)
    }

    pub fn add(&mut self, name: &str, a: Source, b: Source) -> Result<Source> {
        self.push(name, LayerKind::Add, vec![a, b])
    }

    pub fn finish(self) -> Result<Model<T>> {
        if self.model.layers.is_empty() {
            return Err(invalid!("model has no layers"));
        }
        Ok(self.model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Model<f64> {
        let mut b = ModelBuilder::new("tiny", 1);
        let c = b
            .conv(
                "body.conv",
                Source::Input,
                1,
                2,
                3,
                1,
                1,
                1,
                false,
                ConvRole::Standard,
            )
            .unwrap();
        let n = b.batch_norm("body.bn", c, 2).unwrap();
        let p = b.adaptive_avg_pool("pool", n, 1, 1).unwrap();
        let f = b.flatten("flatten", p).unwrap();
        b.linear("head", f, 2, 2).unwrap();
        b.finish().unwrap()
    }

    #[test]
    fn prefix_matching_is_segment_aware() {
        assert!(matches_prefix("head.weight", "head"));
        assert!(matches_prefix("head.weight", "head.weight"));
        assert!(!matches_prefix("header.weight", "head"));
        assert!(matches_prefix("anything", ""));
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut b = ModelBuilder::<f32>::new("x", 1);
        b.relu("a", Source::Input).unwrap();
        assert!(b.relu("a", Source::Input).is_err());
    }

    #[test]
    fn freeze_partition() {
        let mut m = tiny();
        assert_eq!(m.trainable_params().count(), m.params().len());
        m.set_all_trainable(false);
        m.set_trainable(&["head"], true).unwrap();
        let names: Vec<_> = m.trainable_params().map(|(_, p)| p.name.clone()).collect();
        assert_eq!(names, ["head.weight", "head.bias"]);
        let err = m.set_trainable(&["nope"], true).unwrap_err();
        assert!(format!("{err}").contains("nope"));
    }

    #[test]
    fn train_forward_updates_running_stats_only_when_unfrozen() {
        let mut m = tiny();
        m.params_mut()[0]
            .value
            .data_mut()
            .iter_mut()
            .for_each(|v| *v = 0.5);
        let x = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();

        let before = m.fingerprint();
        let mut g = Graph::new();
        let p = m.bind(&mut g, true);
        let xv = g.leaf(x.clone(), false);
        m.forward(&mut g, &p, xv, Mode::Train).unwrap();
        assert_ne!(m.fingerprint(), before);

        m.set_all_trainable(false);
        let frozen = m.fingerprint();
        let mut g = Graph::new();
        let p = m.bind(&mut g, true);
        let xv = g.leaf(x, false);
        m.forward(&mut g, &p, xv, Mode::Train).unwrap();
        assert_eq!(m.fingerprint(), frozen);
    }

    #[test]
    fn forward_errors_name_the_layer() {
        let m = tiny();
        let mut g = Graph::new();
        let p = m.bind(&mut g, false);
        let x = g.leaf(Tensor::zeros(&[1, 3, 4, 4]).unwrap(), false);
        let err = m.forward_eval(&mut g, &p, x).unwrap_err();
        assert!(format!("{err}").contains("body.conv"), "{err}");
    }
}
