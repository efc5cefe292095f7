//! Layer graphs, building blocks and the three supported architectures.

pub mod arch;
pub mod blocks;
pub mod init;
pub mod model;

pub use arch::{build_custom_cnn, build_resnet18, build_vgg16, Arch, HEAD};
pub use init::{init_matching, init_parameters};
pub use model::{
    ConvRole, ForwardPass, Layer, LayerKind, Mode, Model, ModelBuilder, Param, ParamRole, Source,
};
