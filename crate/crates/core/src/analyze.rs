//! Static accounting over a [`Model`]: parameter and buffer counts, 32-bit
//! storage size, multiply-accumulate estimates and a per-layer summary.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::Serialize;

use crate::element::Element;
use crate::error::{invalid, Result};
use crate::nn::{ConvRole, LayerKind, Model, Source};

/// Bytes per stored element (32-bit floats).
pub const BYTES_PER_ELEMENT: u64 = 4;

pub const DEPTH_CONVENTION: &str =
    "convolutional depth counts standard convolutions and one per depthwise-separable \
unit (depthwise + pointwise together); 1x1 projection shortcuts are excluded. \
Pooling/FC depth counts max pooling, adaptive average pooling and linear layers.";

/// Size figure published for the hybrid network, in "MB".
pub const PUBLISHED_CUSTOM_SIZE: f64 = 0.85;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ParamCounts {
    pub trainable: u64,
    pub frozen: u64,
    pub buffers: u64,
}

impl ParamCounts {
    pub fn total(&self) -> u64 {
        self.trainable + self.frozen + self.buffers
    }
}

pub fn count_parameters<T: Element>(model: &Model<T>) -> ParamCounts {
    let mut c = ParamCounts::default();
    for p in model.params() {
        if p.trainable {
            c.trainable += p.value.len() as u64;
        } else {
            c.frozen += p.value.len() as u64;
        }
    }
    c.buffers = model.buffers().iter().map(|b| b.value.len() as u64).sum();
    c
}

/// MiB (2^20 bytes) of 32-bit storage for parameters and buffers.
pub fn model_size_mib<T: Element>(model: &Model<T>) -> f64 {
    mib(count_parameters(model).total())
}

fn mib(elements: u64) -> f64 {
    (BYTES_PER_ELEMENT * elements) as f64 / (1u64 << 20) as f64
}

/// Per-sample output shape of every layer for an input of `[C, H, W]`.
pub fn infer_shapes<T: Element>(model: &Model<T>, input: [usize; 3]) -> Result<Vec<Vec<usize>>> {
    let mut shapes: Vec<Vec<usize>> = Vec::with_capacity(model.layers().len());
    for layer in model.layers() {
        let get = |s: &Source| match *s {
            Source::Input => input.to_vec(),
            Source::Layer(i) => shapes[i].clone(),
        };
        let x = get(&layer.inputs[0]);
        let spatial = |x: &[usize]| -> Result<(usize, usize, usize)> {
            match *x {
                [c, h, w] => Ok((c, h, w)),
                _ => Err(invalid!(
                    "layer {}: expected C x H x W input, got {x:?}",
                    layer.name
                )),
            }
        };
        let window = |len: usize, k: usize, s: usize, p: usize| -> Result<usize> {
            if k > len + 2 * p {
                return Err(invalid!(
                    "layer {}: window {k} exceeds extent {len} (+2x{p} padding)",
                    layer.name
                ));
            }
            Ok((len + 2 * p - k) / s + 1)
        };
        let out = match &layer.kind {
            LayerKind::Conv {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
                ..
            } => {
                let (c, h, w) = spatial(&x)?;
                if c != *in_channels {
                    return Err(invalid!(
                        "layer {}: expects {in_channels} channels, got {c}",
                        layer.name
                    ));
                }
                vec![
                    *out_channels,
                    window(h, *kernel, *stride, *padding)?,
                    window(w, *kernel, *stride, *padding)?,
                ]
            }
            LayerKind::BatchNorm { channels } => {
                let (c, _, _) = spatial(&x)?;
                if c != *channels {
                    return Err(invalid!(
                        "layer {}: expects {channels} channels, got {c}",
                        layer.name
                    ));
                }
                x
            }
            LayerKind::Relu => x,
            LayerKind::MaxPool {
                kernel,
                stride,
                padding,
            } => {
                let (c, h, w) = spatial(&x)?;
                vec![
                    c,
                    window(h, *kernel, *stride, *padding)?,
                    window(w, *kernel, *stride, *padding)?,
                ]
            }
            LayerKind::AdaptiveAvgPool { out_h, out_w } => {
                let (c, _, _) = spatial(&x)?;
                vec![c, *out_h, *out_w]
            }
            LayerKind::Flatten => vec![x.iter().product()],
            LayerKind::Linear {
                in_features,
                out_features,
            } => {
                if x != [*in_features] {
                    return Err(invalid!(
                        "layer {}: expects [{in_features}] features, got {x:?}",
                        layer.name
                    ));
                }
                vec![*out_features]
            }
            LayerKind::Add => {
                let y = get(&layer.inputs[1]);
                if x != y {
                    return Err(invalid!(
                        "layer {}: operand shapes differ ({x:?} vs {y:?})",
                        layer.name
                    ));
                }
                x
            }
        };
        shapes.push(out);
    }
    Ok(shapes)
}

fn layer_macs(kind: &LayerKind, out: &[usize]) -> u64 {
    match kind {
        LayerKind::Conv {
            in_channels,
            out_channels,
            kernel,
            groups,
            ..
        } => (out[1] * out[2] * out_channels * (in_channels / groups) * kernel * kernel) as u64,
        LayerKind::Linear {
            in_features,
            out_features,
        } => (in_features * out_features) as u64,
        _ => 0,
    }
}

/// Multiply-accumulates per layer and in total for one sample of `[C, H, W]`.
/// Only convolutions and linear layers contribute.
pub fn flops_estimate<T: Element>(model: &Model<T>, input: [usize; 3]) -> Result<(Vec<u64>, u64)> {
    let shapes = infer_shapes(model, input)?;
    let per: Vec<u64> = model
        .layers()
        .iter()
        .zip(&shapes)
        .map(|(l, s)| layer_macs(&l.kind, s))
        .collect();
    let total = per.iter().sum();
    Ok((per, total))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct DepthCount {
    pub convolutional: usize,
    pub pooling_fc: usize,
}

pub fn depth_count<T: Element>(model: &Model<T>) -> DepthCount {
    let mut d = DepthCount::default();
    for l in model.layers() {
        match l.kind {
            LayerKind::Conv {
                role: ConvRole::Standard | ConvRole::Depthwise,
                ..
            } => d.convolutional += 1,
            LayerKind::MaxPool { .. }
            | LayerKind::AdaptiveAvgPool { .. }
            | LayerKind::Linear { .. } => d.pooling_fc += 1,
            _ => {}
        }
    }
    d
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LayerRow {
    pub name: String,
    pub kind: String,
    pub out_shape: Vec<usize>,
    pub params: u64,
    pub buffers: u64,
    pub macs: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ArchSummary {
    pub arch: String,
    pub input: [usize; 3],
    pub rows: Vec<LayerRow>,
    pub counts: ParamCounts,
    pub total_macs: u64,
    pub size_mib: f64,
    pub depth: DepthCount,
}

/// Per-layer table. `params` counts trainable elements.
pub fn summary_table<T: Element>(model: &Model<T>, input: [usize; 3]) -> Result<ArchSummary> {
    let shapes = infer_shapes(model, input)?;
    let rows: Vec<LayerRow> = model
        .layers()
        .iter()
        .zip(shapes)
        .map(|(l, out)| LayerRow {
            name: l.name.clone(),
            kind: l.kind.label().into(),
            params: l
                .params
                .iter()
                .map(|&i| &model.params()[i])
                .filter(|p| p.trainable)
                .map(|p| p.value.len() as u64)
                .sum(),
            buffers: l
                .buffers
                .iter()
                .map(|&i| model.buffers()[i].value.len() as u64)
                .sum(),
            macs: layer_macs(&l.kind, &out),
            out_shape: out,
        })
        .collect();
    Ok(ArchSummary {
        arch: model.arch().into(),
        input,
        total_macs: rows.iter().map(|r| r.macs).sum(),
        counts: count_parameters(model),
        size_mib: model_size_mib(model),
        depth: depth_count(model),
        rows,
    })
}

fn shape_str(s: &[usize]) -> String {
    s.iter()
        .map(|d| format!("{d}"))
        .collect::<Vec<_>>()
        .join("x")
}

impl ArchSummary {
    /// `name,kind,out_shape,params,buffers,macs` rows plus a `total` footer.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("name,kind,out_shape,params,buffers,macs\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.name,
                r.kind,
                shape_str(&r.out_shape),
                r.params,
                r.buffers,
                r.macs
            );
        }
        let _ = writeln!(
            s,
            "total,,,{},{},{}",
            self.counts.trainable, self.counts.buffers, self.total_macs
        );
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "architecture: {}  input: {}",
            self.arch,
            shape_str(&self.input)
        );
        let _ = writeln!(
            s,
            "{:<28} {:<16} {:<14} {:>12} {:>8} {:>14}",
            "layer", "kind", "output", "params", "buffers", "MACs"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<28} {:<16} {:<14} {:>12} {:>8} {:>14}",
                r.name,
                r.kind,
                shape_str(&r.out_shape),
                r.params,
                r.buffers,
                r.macs
            );
        }
        let c = &self.counts;
        let _ = writeln!(s, "trainable parameters: {}", c.trainable);
        let _ = writeln!(s, "frozen parameters:    {}", c.frozen);
        let _ = writeln!(s, "buffer elements:      {}", c.buffers);
        let _ = writeln!(s, "total MACs:           {}", self.total_macs);
        let _ = writeln!(s, "size (32-bit, MiB):   {:.4}", self.size_mib);
        let _ = writeln!(
            s,
            "depth: {} layers ({} convolutional + {} pooling/FC)",
            self.depth.convolutional + self.depth.pooling_fc,
            self.depth.convolutional,
            self.depth.pooling_fc
        );
        let _ = writeln!(s, "depth convention: {DEPTH_CONVENTION}");
        if self.arch == "custom" {
            let params_m = (c.trainable + c.frozen) as f64 / 1e6;
            let _ = writeln!(
                s,
                "note: the published size figure for this network is {PUBLISHED_CUSTOM_SIZE} MB, which does not match \
its {:.4} MiB of 32-bit storage; it does match the parameter count in millions ({params_m:.4} M).",
                self.size_mib
            );
        }
        s
    }
}
