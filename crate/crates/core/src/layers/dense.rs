use crate::error::{Error, Result};
use crate::tensor::{axpy, dot, glorot_uniform, Rng, Tensor};

/// Fully connected layer on a flat vector: `y = x W + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// `[in_dim, out_dim]`
    pub weights: Tensor,
    /// `[out_dim]`
    pub bias: Tensor,
}

#[derive(Clone, Debug)]
pub struct DenseCache {
    input: Tensor,
}

#[derive(Clone, Debug)]
pub struct DenseGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut Rng) -> Result<Self> {
        Ok(Self {
            weights: glorot_uniform(in_dim, out_dim, rng)?,
            bias: Tensor::zeros(&[out_dim.max(1)]),
        })
    }

    pub fn from_parts(weights: Tensor, bias: Tensor) -> Result<Self> {
        match (weights.shape(), bias.shape()) {
            ([_, o], [b]) if o == b => Ok(Self { weights, bias }),
            (w, b) => Err(Error::Shape(format!("dense weights {:?} with bias {:?}", w, b))),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, DenseCache)> {
        if x.rank() != 1 || x.len() != self.in_dim() {
            return Err(Error::Shape(format!(
                "dense expects [{}], got {:?}",
                self.in_dim(),
                x.shape()
            )));
        }
        let n = self.out_dim();
        let w = self.weights.data();
        let mut y = self.bias.data().to_vec();
        for (i, &xv) in x.data().iter().enumerate() {
            if xv != 0.0 {
                axpy(xv, &w[i * n..(i + 1) * n], &mut y);
            }
        }
        Ok((Tensor::new(y, &[n])?, DenseCache { input: x.clone() }))
    }

    pub fn backward(&self, cache: &DenseCache, grad_out: &Tensor) -> Result<DenseGrads> {
        let mut grads = [self.weights.zeros_like(), self.bias.zeros_like()];
        let input = self.backward_into(cache, grad_out, &mut grads)?;
        let [weights, bias] = grads;
        Ok(DenseGrads { input, weights, bias })
    }

    pub(crate) fn backward_into(
        &self,
        cache: &DenseCache,
        grad_out: &Tensor,
        grads: &mut [Tensor],
    ) -> Result<Tensor> {
        let n = self.out_dim();
        if grad_out.shape() != [n] || cache.input.len() != self.in_dim() {
            return Err(Error::Shape(format!(
                "dense grad {:?} does not match output [{n}]",
                grad_out.shape()
            )));
        }
        let [gw, gb] = grads else {
            return Err(Error::Shape("dense needs two gradient slots".into()));
        };
        let g = grad_out.data();
        axpy(1.0, g, gb.data_mut());
        let w = self.weights.data();
        let gwd = gw.data_mut();
        let mut gx = vec![0.0; self.in_dim()];
        for (i, (&xv, gxv)) in cache.input.data().iter().zip(gx.iter_mut()).enumerate() {
            let row = i * n..(i + 1) * n;
            if xv != 0.0 {
                axpy(xv, g, &mut gwd[row.clone()]);
            }
            *gxv = dot(&w[row], g);
        }
        Tensor::new(gx, &[self.in_dim()])
    }
}
