use alloc::format;
use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::element::Element;
use crate::error::{invalid, Error, Result};
use crate::nn::blocks::{basic_block, conv_block, depthwise_separable, residual_down_block};
use crate::nn::model::{ConvRole, Model, ModelBuilder, Source};

/// Name of the classification layer in every architecture.
pub const HEAD: &str = "head";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Custom,
    Resnet18,
    Vgg16,
}

impl Arch {
    pub const ALL: [Arch; 3] = [Arch::Custom, Arch::Resnet18, Arch::Vgg16];

    pub fn as_str(self) -> &'static str {
        match self {
            Arch::Custom => "custom",
            Arch::Resnet18 => "resnet18",
            Arch::Vgg16 => "vgg16",
        }
    }

    pub fn build<T: Element>(self, num_classes: usize) -> Result<Model<T>> {
        match self {
            Arch::Custom => build_custom_cnn(num_classes),
            Arch::Resnet18 => build_resnet18(num_classes),
            Arch::Vgg16 => build_vgg16(num_classes),
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Arch::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| {
                let valid: String = Arch::ALL
                    .iter()
                    .map(|a| a.as_str())
                    .collect::<alloc::vec::Vec<_>>()
                    .join(", ");
                invalid!("unknown architecture {s:?}; valid values: {valid}")
            })
    }
}

fn check_classes(num_classes: usize) -> Result<()> {
    if num_classes < 2 {
        return Err(invalid!(
            "num_classes must be at least 2, got {num_classes}"
        ));
    }
    Ok(())
}

/// Hybrid network: conv stem, one residual downsampling block, two
/// depthwise-separable stages, global pooling and a linear head.
///
/// Spatial trace at 224: 224 -> 112 (pool) -> 56 (residual) -> 28 -> 14 -> 1.
pub fn build_custom_cnn<T: Element>(num_classes: usize) -> Result<Model<T>> {
    check_classes(num_classes)?;
    let mut b = ModelBuilder::new(Arch::Custom.as_str(), 3);
    let x = conv_block(&mut b, "stem.block1", Source::Input, 3, 32, 1)?;
    let x = conv_block(&mut b, "stem.block2", x, 32, 32, 1)?;
    let x = b.max_pool("stem.pool", x, 2, 2, 0)?;
    let x = residual_down_block(&mut b, "res", x, 32, 64)?;
    let x = depthwise_separable(&mut b, "stage2.ds", x, 64, 128, 2)?;
    let x = conv_block(&mut b, "stage2.conv", x, 128, 128, 1)?;
    let x = depthwise_separable(&mut b, "stage3.ds", x, 128, 256, 2)?;
    let x = conv_block(&mut b, "stage3.conv", x, 256, 256, 1)?;
    let x = b.adaptive_avg_pool("pool", x, 1, 1)?;
    let x = b.flatten("flatten", x)?;
    b.linear(HEAD, x, 256, num_classes)?;
    b.finish()
}

/// 18-layer residual network with basic blocks and projection shortcuts at the
/// entry of stages 2-4.
pub fn build_resnet18<T: Element>(num_classes: usize) -> Result<Model<T>> {
    check_classes(num_classes)?;
    let mut b = ModelBuilder::new(Arch::Resnet18.as_str(), 3);
    let x = b.conv(
        "stem.conv",
        Source::Input,
        3,
        64,
        7,
        2,
        3,
        1,
        false,
        ConvRole::Standard,
    )?;
    let x = b.batch_norm("stem.bn", x, 64)?;
    let x = b.relu("stem.relu", x)?;
    let mut x = b.max_pool("stem.pool", x, 3, 2, 1)?;
    let mut in_ch = 64;
    for (stage, out_ch) in [64usize, 128, 256, 512].into_iter().enumerate() {
        let stride = if stage == 0 { 1 } else { 2 };
        x = basic_block(
            &mut b,
            &format!("layer{}.0", stage + 1),
            x,
            in_ch,
            out_ch,
            stride,
        )?;
        x = basic_block(
            &mut b,
            &format!("layer{}.1", stage + 1),
            x,
            out_ch,
            out_ch,
            1,
        )?;
        in_ch = out_ch;
    }
    let x = b.adaptive_avg_pool("pool", x, 1, 1)?;
    let x = b.flatten("flatten", x)?;
    b.linear(HEAD, x, 512, num_classes)?;
    b.finish()
}

/// Configuration "D": thirteen 3x3 convolutions with bias in five pooled
/// stages, 7x7 adaptive pooling and three linear layers. Layer indices follow
/// the conventional `features.N` / `classifier.N` numbering; dropout is absent.
pub fn build_vgg16<T: Element>(num_classes: usize) -> Result<Model<T>> {
    const CFG: [Option<usize>; 18] = [
        Some(64),
        Some(64),
        None,
        Some(128),
        Some(128),
        None,
        Some(256),
        Some(256),
        Some(256),
        None,
        Some(512),
        Some(512),
        Some(512),
        None,
        Some(512),
        Some(512),
        Some(512),
        None,
    ];
    check_classes(num_classes)?;
    let mut b = ModelBuilder::new(Arch::Vgg16.as_str(), 3);
    let mut x = Source::Input;
    let mut in_ch = 3;
    let mut idx = 0;
    for item in CFG {
        match item {
            Some(out_ch) => {
                x = b.conv(
                    &format!("features.{idx}"),
                    x,
                    in_ch,
                    out_ch,
                    3,
                    1,
                    1,
                    1,
                    true,
                    ConvRole::Standard,
                )?;
                x = b.relu(&format!("features.{}", idx + 1), x)?;
                in_ch = out_ch;
                idx += 2;
            }
            None => {
                x = b.max_pool(&format!("features.{idx}"), x, 2, 2, 0)?;
                idx += 1;
            }
        }
    }
    let x = b.adaptive_avg_pool("pool", x, 7, 7)?;
    let x = b.flatten("flatten", x)?;
    let x = b.linear("classifier.0", x, 512 * 7 * 7, 4096)?;
    let x = b.relu("classifier.1", x)?;
    let x = b.linear("classifier.3", x, 4096, 4096)?;
    let x = b.relu("classifier.4", x)?;
    b.linear(HEAD, x, 4096, num_classes)?;
    b.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_names() {
        assert_eq!("resnet18".parse::<Arch>().unwrap(), Arch::Resnet18);
        let err = "alexnet".parse::<Arch>().unwrap_err();
        assert!(format!("{err}").contains("custom, resnet18, vgg16"));
    }

    #[test]
    fn rejects_single_class() {
        assert!(build_custom_cnn::<f32>(1).is_err());
    }
}
