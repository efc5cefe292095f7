//! Reusable sub-networks. Each function appends layers named under `name` and
//! returns the block's output.

use alloc::format;

use crate::element::Element;
use crate::error::Result;
use crate::nn::model::{ConvRole, ModelBuilder, Source};

/// 3x3 convolution (padding 1, no bias) -> batch norm -> ReLU.
pub fn conv_block<T: Element>(
    b: &mut ModelBuilder<T>,
    name: &str,
    from: Source,
    in_ch: usize,
    out_ch: usize,
    stride: usize,
) -> Result<Source> {
    let x = b.conv(
        &format!("{name}.conv"),
        from,
        in_ch,
        out_ch,
        3,
        stride,
        1,
        1,
        false,
        ConvRole::Standard,
    )?;
    let x = b.batch_norm(&format!("{name}.bn"), x, out_ch)?;
    b.relu(&format!("{name}.relu"), x)
}

/// Depthwise 3x3 (one filter per channel) -> BN -> ReLU -> pointwise 1x1 ->
/// BN -> ReLU.
pub fn depthwise_separable<T: Element>(
    b: &mut ModelBuilder<T>,
    name: &str,
    from: Source,
    in_ch: usize,
    out_ch: usize,
    stride: usize,
) -> Result<Source> {
    let x = b.conv(
        &format!("{name}.depthwise"),
        from,
        in_ch,
        in_ch,
        3,
        stride,
        1,
        in_ch,
        false,
        ConvRole::Depthwise,
    )?;
    let x = b.batch_norm(&format!("{name}.dw_bn"), x, in_ch)?;
    let x = b.relu(&format!("{name}.dw_relu"), x)?;
    let x = b.conv(
        &format!("{name}.pointwise"),
        x,
        in_ch,
        out_ch,
        1,
        1,
        0,
        1,
        false,
        ConvRole::Pointwise,
    )?;
    let x = b.batch_norm(&format!("{name}.pw_bn"), x, out_ch)?;
    b.relu(&format!("{name}.pw_relu"), x)
}

/// Stride-2 residual unit: `relu(main(x) + skip(x))` where main is two conv
/// blocks (the first strided) and skip is a strided 1x1 projection plus BN.
pub fn residual_down_block<T: Element>(
    b: &mut ModelBuilder<T>,
    name: &str,
    from: Source,
    in_ch: usize,
    out_ch: usize,
) -> Result<Source> {
    let main = conv_block(b, &format!("{name}.main1"), from, in_ch, out_ch, 2)?;
    let main = conv_block(b, &format!("{name}.main2"), main, out_ch, out_ch, 1)?;
    let skip = b.conv(
        &format!("{name}.skip.conv"),
        from,
        in_ch,
        out_ch,
        1,
        2,
        0,
        1,
        false,
        ConvRole::Projection,
    )?;
    let skip = b.batch_norm(&format!("{name}.skip.bn"), skip, out_ch)?;
    let sum = b.add(&format!("{name}.add"), main, skip)?;
    b.relu(&format!("{name}.relu"), sum)
}

/// ResNet basic block: conv3x3 -> BN -> ReLU -> conv3x3 -> BN, plus identity or
/// 1x1 projection shortcut, then ReLU.
pub fn basic_block<T: Element>(
    b: &mut ModelBuilder<T>,
    name: &str,
    from: Source,
    in_ch: usize,
    out_ch: usize,
    stride: usize,
) -> Result<Source> {
    let x = b.conv(
        &format!("{name}.conv1"),
        from,
        in_ch,
        out_ch,
        3,
        stride,
        1,
        1,
        false,
        ConvRole::Standard,
    )?;
    let x = b.batch_norm(&format!("{name}.bn1"), x, out_ch)?;
    let x = b.relu(&format!("{name}.relu1"), x)?;
    let x = b.conv(
        &format!("{name}.conv2"),
        x,
        out_ch,
        out_ch,
        3,
        1,
        1,
        1,
        false,
        ConvRole::Standard,
    )?;
    let x = b.batch_norm(&format!("{name}.bn2"), x, out_ch)?;
    let shortcut = if stride != 1 || in_ch != out_ch {
        let s = b.conv(
            &format!("{name}.downsample.conv"),
            from,
            in_ch,
            out_ch,
            1,
            stride,
            0,
            1,
            false,
            ConvRole::Projection,
        )?;
        b.batch_norm(&format!("{name}.downsample.bn"), s, out_ch)?
    } else {
        from
    };
    let sum = b.add(&format!("{name}.add"), x, shortcut)?;
    b.relu(&format!("{name}.relu2"), sum)
}
