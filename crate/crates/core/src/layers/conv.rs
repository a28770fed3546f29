use crate::error::{Error, Result};
use crate::tensor::{axpy, glorot_uniform_shaped, Rng, Tensor};

/// Valid-padding, stride-1 1D cross-correlation over `[time, channels]` input.
///
/// `y[t, o] = bias[o] + sum_{k, c} x[t + k, c] * kernels[k, c, o]`
#[derive(Clone, Debug, PartialEq)]
pub struct Conv1d {
    /// `[kernel_size, in_channels, out_channels]`
    pub kernels: Tensor,
    /// `[out_channels]`
    pub bias: Tensor,
}

#[derive(Clone, Debug)]
pub struct Conv1dCache {
    input: Tensor,
}

#[derive(Clone, Debug)]
pub struct Conv1dGrads {
    pub input: Tensor,
    pub kernels: Tensor,
    pub bias: Tensor,
}

impl Conv1d {
    pub fn new(kernel_size: usize, in_channels: usize, out_channels: usize, rng: &mut Rng) -> Result<Self> {
        let kernels = glorot_uniform_shaped(
            kernel_size * in_channels,
            kernel_size * out_channels,
            &[kernel_size, in_channels, out_channels],
            rng,
        )?;
        Ok(Self {
            kernels,
            bias: Tensor::zeros(&[out_channels]),
        })
    }

    pub fn from_parts(kernels: Tensor, bias: Tensor) -> Result<Self> {
        match (kernels.shape(), bias.shape()) {
            ([_, _, o], [b]) if o == b => Ok(Self { kernels, bias }),
            (k, b) => Err(Error::Shape(format!("conv kernels {:?} with bias {:?}", k, b))),
        }
    }

    pub fn kernel_size(&self) -> usize {
        self.kernels.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.kernels.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.kernels.shape()[2]
    }

    pub fn output_len(&self, input_len: usize) -> Option<usize> {
        (input_len >= self.kernel_size()).then(|| input_len - self.kernel_size() + 1)
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Conv1dCache)> {
        let (t_in, cin) = seq_dims(x)?;
        if cin != self.in_channels() {
            return Err(Error::Shape(format!(
                "conv expects {} input channels, got input {:?}",
                self.in_channels(),
                x.shape()
            )));
        }
        let k = self.kernel_size();
        let cout = self.out_channels();
        let t_out = self
            .output_len(t_in)
            .ok_or_else(|| Error::Shape(format!("window shorter than kernel ({t_in} < {k})")))?;
        let w = self.kernels.data();
        let xd = x.data();
        let mut y = vec![0.0; t_out * cout];
        for t in 0..t_out {
            let row = &mut y[t * cout..(t + 1) * cout];
            row.copy_from_slice(self.bias.data());
            // x[t..t+k, :] is contiguous, and so is kernels[k, c, :] for every (k, c).
            let patch = &xd[t * cin..(t + k) * cin];
            for (j, &xv) in patch.iter().enumerate() {
                axpy(xv, &w[j * cout..(j + 1) * cout], row);
            }
        }
        Ok((
            Tensor::new(y, &[t_out, cout])?,
            Conv1dCache { input: x.clone() },
        ))
    }

    pub fn backward(&self, cache: &Conv1dCache, grad_out: &Tensor) -> Result<Conv1dGrads> {
        let mut grads = [self.kernels.zeros_like(), self.bias.zeros_like()];
        let input = self.backward_into(cache, grad_out, &mut grads)?;
        let [kernels, bias] = grads;
        Ok(Conv1dGrads { input, kernels, bias })
    }

    /// Accumulates parameter gradients into `grads = [kernels, bias]`, returns the input gradient.
    pub(crate) fn backward_into(
        &self,
        cache: &Conv1dCache,
        grad_out: &Tensor,
        grads: &mut [Tensor],
    ) -> Result<Tensor> {
        let x = &cache.input;
        let (t_in, cin) = seq_dims(x)?;
        let k = self.kernel_size();
        let cout = self.out_channels();
        let t_out = t_in + 1 - k;
        if grad_out.shape() != [t_out, cout] {
            return Err(Error::Shape(format!(
                "conv grad {:?} does not match output [{t_out}, {cout}]",
                grad_out.shape()
            )));
        }
        let [gk, gb] = grads else {
            return Err(Error::Shape("conv needs two gradient slots".into()));
        };
        let xd = x.data();
        let g = grad_out.data();
        let kc = k * cin;
        // Work per output channel so the inner loops run over whole patches,
        // and skip the zeros that ReLU and pooling leave in the gradient.
        let wt = self.kernels.clone().reshape(&[kc, cout])?.transpose()?;
        let wt = wt.data();
        let mut gkt = vec![0.0; cout * kc];
        let mut gx = vec![0.0; t_in * cin];
        for t in 0..t_out {
            let go = &g[t * cout..(t + 1) * cout];
            axpy(1.0, go, gb.data_mut());
            let patch = &xd[t * cin..t * cin + kc];
            let gpatch = &mut gx[t * cin..t * cin + kc];
            for (o, &gv) in go.iter().enumerate() {
                if gv != 0.0 {
                    axpy(gv, patch, &mut gkt[o * kc..(o + 1) * kc]);
                    axpy(gv, &wt[o * kc..(o + 1) * kc], gpatch);
                }
            }
        }
        let gkd = gk.data_mut();
        for j in 0..kc {
            for o in 0..cout {
                gkd[j * cout + o] += gkt[o * kc + j];
            }
        }
        Tensor::new(gx, &[t_in, cin])
    }
}

pub(crate) fn seq_dims(x: &Tensor) -> Result<(usize, usize)> {
    match x.shape() {
        [t, c] => Ok((*t, *c)),
        s => Err(Error::Shape(format!("expected [time, channels], got {:?}", s))),
    }
}
