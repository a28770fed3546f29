use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct ReluCache {
    input: Tensor,
}

pub fn relu(x: &Tensor) -> (Tensor, ReluCache) {
    let mut y = x.clone();
    for v in y.data_mut() {
        *v = v.max(0.0);
    }
    (y, ReluCache { input: x.clone() })
}

/// Gradient passes where the input was strictly positive; the derivative at 0 is 0.
pub fn relu_backward(cache: &ReluCache, grad_out: &Tensor) -> Result<Tensor> {
    if grad_out.shape() != cache.input.shape() {
        return Err(Error::Shape(format!(
            "relu grad {:?} vs input {:?}",
            grad_out.shape(),
            cache.input.shape()
        )));
    }
    let mut g = grad_out.clone();
    for (gv, &xv) in g.data_mut().iter_mut().zip(cache.input.data()) {
        if xv <= 0.0 {
            *gv = 0.0;
        }
    }
    Ok(g)
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(z: &Tensor) -> Tensor {
    let n = z.len();
    Tensor::new(softmax_slice(z.data()), &[n]).expect("non-empty")
}

pub(crate) fn softmax_slice(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_forward_backward() {
        let x = Tensor::from_vec(vec![-1.0, 0.0, 2.0]);
        let (y, cache) = relu(&x);
        assert_eq!(y.data(), &[0.0, 0.0, 2.0]);
        let g = relu_backward(&cache, &Tensor::from_vec(vec![5.0, 5.0, 5.0])).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 5.0]);
        assert_eq!(relu(&y).0, y);
    }

    #[test]
    fn softmax_examples() {
        let p = softmax(&Tensor::zeros(&[9]));
        assert!(p.data().iter().all(|&v| (v - 1.0 / 9.0).abs() < 1e-15));
        let p = softmax(&Tensor::from_vec(vec![2f64.ln(), 0.0]));
        assert!((p.data()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p.data()[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_survives_large_logits() {
        let p = softmax(&Tensor::from_vec(vec![1000.0, 0.0, -1000.0]));
        assert!(p.is_finite());
        assert!((p.data()[0] - 1.0).abs() < 1e-15);
    }

    proptest::proptest! {
        #[test]
        fn softmax_is_shift_invariant_distribution(
            z in proptest::collection::vec(-15.0f64..15.0, 2..12),
            c in -50.0f64..50.0,
        ) {
            let p = softmax(&Tensor::from_vec(z.clone()));
            let q = softmax(&Tensor::from_vec(z.iter().map(|v| v + c).collect()));
            let sum: f64 = p.data().iter().sum();
            proptest::prop_assert!((sum - 1.0).abs() < 1e-12);
            for (a, b) in p.data().iter().zip(q.data()) {
                proptest::prop_assert!(*a > 0.0 && *a < 1.0);
                proptest::prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
