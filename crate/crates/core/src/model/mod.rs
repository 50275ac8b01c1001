//! Generator and discriminator networks built from [`crate::tensor`] primitives.

mod analysis;
mod discriminator;
mod generator;
mod init;
mod stack;

pub use analysis::{
    count_parameters, receptive_field, receptive_field_table, ParamConvention, RfRow,
};
pub use discriminator::{Discriminator, DiscriminatorConfig};
pub use generator::{
    composite, composite_backward, Generator, GeneratorConfig, MAX_DILATED_LAYERS,
};
pub use init::{identity_init, xavier_bound, xavier_init};
pub use stack::{Activation, ConvLayer, ConvStack, ForwardCache, Norm, Param};

/// Whether batch norm uses batch statistics (and updates its running
/// averages) or the stored running statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}
