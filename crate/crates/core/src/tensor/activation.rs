use crate::error::{PceError, Result};

use super::{Scalar, Tensor4};

fn same_shape<T: Scalar>(a: &Tensor4<T>, b: &Tensor4<T>, op: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(PceError::shape(format!(
            "{op}: gradient {:?} does not match input {:?}",
            b.shape(),
            a.shape()
        )));
    }
    Ok(())
}

/// Exponential linear unit with unit scale: `x` for `x >= 0`, `exp(x) - 1` otherwise.
pub fn elu<T: Scalar>(input: &Tensor4<T>) -> Tensor4<T> {
    input.map(|x| if x >= T::zero() { x } else { x.exp_m1() })
}

pub fn elu_backward<T: Scalar>(input: &Tensor4<T>, grad_output: &Tensor4<T>) -> Result<Tensor4<T>> {
    same_shape(input, grad_output, "elu_backward")?;
    let data = input
        .data()
        .iter()
        .zip(grad_output.data())
        .map(|(&x, &g)| if x >= T::zero() { g } else { g * x.exp() })
        .collect();
    Tensor4::from_vec(input.shape(), data)
}

pub fn leaky_relu<T: Scalar>(input: &Tensor4<T>, alpha: T) -> Tensor4<T> {
    input.map(|x| if x >= T::zero() { x } else { alpha * x })
}

pub fn leaky_relu_backward<T: Scalar>(
    input: &Tensor4<T>,
    grad_output: &Tensor4<T>,
    alpha: T,
) -> Result<Tensor4<T>> {
    same_shape(input, grad_output, "leaky_relu_backward")?;
    let data = input
        .data()
        .iter()
        .zip(grad_output.data())
        .map(|(&x, &g)| if x >= T::zero() { g } else { alpha * g })
        .collect();
    Tensor4::from_vec(input.shape(), data)
}
