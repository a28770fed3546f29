use crate::error::{Error, Result};
use crate::layers::conv::seq_dims;
use crate::tensor::Tensor;

/// Non-overlapping max pooling along time (`stride == pool_size`); the
/// trailing `T mod pool_size` steps are dropped and ties go to the lowest index.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MaxPool1d {
    pool_size: usize,
}

#[derive(Clone, Debug)]
pub struct PoolCache {
    input_shape: [usize; 2],
    /// Flat input offset of the winner for every output element.
    argmax: Vec<usize>,
}

impl MaxPool1d {
    pub fn new(pool_size: usize) -> Result<Self> {
        if pool_size < 2 {
            return Err(Error::Config(format!("pool size must be >= 2, got {pool_size}")));
        }
        Ok(Self { pool_size })
    }

    pub fn pool_size(&self) -> usize {
        self.pool_size
    }

    pub fn output_len(&self, input_len: usize) -> Option<usize> {
        (input_len >= self.pool_size).then(|| input_len / self.pool_size)
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, PoolCache)> {
        let (t_in, c) = seq_dims(x)?;
        let t_out = self.output_len(t_in).ok_or_else(|| {
            Error::Shape(format!("window shorter than pool ({t_in} < {})", self.pool_size))
        })?;
        let xd = x.data();
        let mut y = Vec::with_capacity(t_out * c);
        let mut argmax = Vec::with_capacity(t_out * c);
        for t in 0..t_out {
            let start = t * self.pool_size;
            for ch in 0..c {
                let mut best = start * c + ch;
                for s in start + 1..start + self.pool_size {
                    let idx = s * c + ch;
                    if xd[idx] > xd[best] {
                        best = idx;
                    }
                }
                y.push(xd[best]);
                argmax.push(best);
            }
        }
        Ok((
            Tensor::new(y, &[t_out, c])?,
            PoolCache {
                input_shape: [t_in, c],
                argmax,
            },
        ))
    }

    pub fn backward(&self, cache: &PoolCache, grad_out: &Tensor) -> Result<Tensor> {
        if grad_out.len() != cache.argmax.len() {
            return Err(Error::Shape(format!(
                "pool grad {:?} does not match cached output of {} values",
                grad_out.shape(),
                cache.argmax.len()
            )));
        }
        let [t, c] = cache.input_shape;
        let mut gx = vec![0.0; t * c];
        for (&idx, &g) in cache.argmax.iter().zip(grad_out.data()) {
            gx[idx] += g;
        }
        Tensor::new(gx, &[t, c])
    }
}
