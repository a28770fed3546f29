use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Row-major flatten to rank 1.
pub fn flatten(x: &Tensor) -> Tensor {
    let n = x.len();
    x.clone().reshape(&[n]).expect("same element count")
}

/// Concatenates two vectors; fused models always pass `(vibration, acoustic)`.
pub fn concat(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 1 || b.rank() != 1 {
        return Err(Error::Shape(format!(
            "concat expects vectors, got {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut data = Vec::with_capacity(a.len() + b.len());
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    Ok(Tensor::from_vec(data))
}

/// Splits a concatenation gradient back into its two parts.
pub fn split_concat(grad: &Tensor, first_len: usize) -> Result<(Tensor, Tensor)> {
    if grad.rank() != 1 || first_len == 0 || first_len >= grad.len() {
        return Err(Error::Shape(format!(
            "cannot split {:?} at {first_len}",
            grad.shape()
        )));
    }
    let (a, b) = grad.data().split_at(first_len);
    Ok((Tensor::from_vec(a.to_vec()), Tensor::from_vec(b.to_vec())))
}
