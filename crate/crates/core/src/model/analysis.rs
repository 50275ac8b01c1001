//! Receptive-field arithmetic and parameter counting.

use crate::error::{PceError, Result};
use crate::tensor::Scalar;

use super::generator::GeneratorConfig;
use super::stack::ConvStack;

/// One row of the encoder receptive-field table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RfRow {
    pub depth: usize,
    pub dilation: usize,
    pub stride: usize,
    pub receptive_field: usize,
}

/// Receptive field of every encoder layer, in input pixels.
///
/// `RF_1 = k`, `RF_l = RF_{l-1} + (k - 1) * d_l * (product of earlier strides)`.
pub fn receptive_field_table(config: &GeneratorConfig) -> Result<Vec<RfRow>> {
    config.validate()?;
    let k = config.kernel;
    let layers = std::iter::repeat((1usize, 2usize))
        .take(config.downsample_layers)
        .chain(config.dilation_schedule.iter().map(|&d| (d, 1)));
    let mut rows = Vec::new();
    let mut rf = 1;
    let mut jump = 1;
    for (i, (dilation, stride)) in layers.enumerate() {
        rf += (k - 1) * dilation * jump;
        jump *= stride;
        rows.push(RfRow {
            depth: i + 1,
            dilation,
            stride,
            receptive_field: rf,
        });
    }
    Ok(rows)
}

/// Receptive field after the first `depth` encoder layers.
pub fn receptive_field(depth: usize, config: &GeneratorConfig) -> Result<usize> {
    let table = receptive_field_table(config)?;
    if depth == 0 || depth > table.len() {
        return Err(PceError::config(format!(
            "depth {depth} outside 1..={} for this encoder",
            table.len()
        )));
    }
    Ok(table[depth - 1].receptive_field)
}

/// Which tensors count toward a parameter total.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamConvention {
    /// One bias per output channel of every convolution.
    pub conv_bias: bool,
    /// Scale and shift per channel of every batch-norm layer.
    pub bn_affine: bool,
    /// The mask is fed to the first layer as an extra input channel.
    pub mask_channel: bool,
}

impl ParamConvention {
    pub const WEIGHTS_ONLY: ParamConvention = ParamConvention {
        conv_bias: false,
        bn_affine: false,
        mask_channel: false,
    };

    /// All eight flag combinations.
    pub fn all() -> Vec<ParamConvention> {
        (0..8u8)
            .map(|bits| ParamConvention {
                conv_bias: bits & 1 != 0,
                bn_affine: bits & 2 != 0,
                mask_channel: bits & 4 != 0,
            })
            .collect()
    }
}

impl std::fmt::Display for ParamConvention {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "conv_bias={} bn_affine={} mask_channel={}",
            self.conv_bias, self.bn_affine, self.mask_channel
        )
    }
}

/// Parameter total of a convolution stack under `convention`.
///
/// Counts are derived from layer geometry, so they hold whether or not the
/// stack actually stores biases or an extra mask channel.
pub fn count_parameters<T: Scalar>(stack: &ConvStack<T>, convention: ParamConvention) -> usize {
    stack
        .layers
        .iter()
        .enumerate()
        .map(|(i, layer)| {
            let s = &layer.spec;
            let cin = s.in_channels + usize::from(convention.mask_channel && i == 0);
            let mut total = s.out_channels * cin * s.kernel * s.kernel;
            if convention.conv_bias {
                total += s.out_channels;
            }
            if convention.bn_affine && layer.norm.is_some() {
                total += 2 * s.out_channels;
            }
            total
        })
        .sum()
}
