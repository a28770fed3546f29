use crate::error::{Error, Result};
use crate::layers::conv::seq_dims;
use crate::tensor::{axpy, dot, glorot_uniform, matmul_into, Rng, Tensor};

/// Single LSTM layer over a `[time, channels]` sequence.
///
/// Gate blocks are laid out along the last axis in the order `(i, f, g, o)`:
///
/// ```text
/// z_t = x_t W + h_{t-1} U + b
/// i, f, o = sigmoid(z_i), sigmoid(z_f), sigmoid(z_o);  g = tanh(z_g)
/// c_t = f * c_{t-1} + i * g
/// h_t = o * tanh(c_t)
/// ```
///
/// `h_0 = c_0 = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct Lstm {
    /// `[in_channels, 4 * units]`
    pub input_kernel: Tensor,
    /// `[units, 4 * units]`
    pub recurrent_kernel: Tensor,
    /// `[4 * units]`
    pub bias: Tensor,
    /// Emit every `h_t` (`[T, units]`) instead of only `h_T` (`[units]`).
    pub return_sequences: bool,
}

#[derive(Clone, Debug)]
pub struct LstmCache {
    input: Tensor,
    /// Post-activation gates per step, `[T, 4 * units]`.
    gates: Vec<f64>,
    /// Cell states per step, `[T, units]`.
    cells: Vec<f64>,
    /// `tanh(c_t)` per step.
    cells_tanh: Vec<f64>,
    /// Hidden states per step.
    hidden: Vec<f64>,
}

impl LstmCache {
    pub fn hidden_states(&self) -> &[f64] {
        &self.hidden
    }

    pub fn cell_states(&self) -> &[f64] {
        &self.cells
    }
}

#[derive(Clone, Debug)]
pub struct LstmGrads {
    pub input: Tensor,
    pub input_kernel: Tensor,
    pub recurrent_kernel: Tensor,
    pub bias: Tensor,
}

impl Lstm {
    /// Glorot kernels, forget-gate bias 1, other biases 0.
    pub fn new(in_channels: usize, units: usize, return_sequences: bool, rng: &mut Rng) -> Result<Self> {
        let input_kernel = glorot_uniform(in_channels, 4 * units, rng)?;
        let recurrent_kernel = glorot_uniform(units, 4 * units, rng)?;
        let mut bias = Tensor::zeros(&[4 * units]);
        bias.data_mut()[units..2 * units].fill(1.0);
        Ok(Self {
            input_kernel,
            recurrent_kernel,
            bias,
            return_sequences,
        })
    }

    pub fn from_parts(
        input_kernel: Tensor,
        recurrent_kernel: Tensor,
        bias: Tensor,
        return_sequences: bool,
    ) -> Result<Self> {
        let ok = match (input_kernel.shape(), recurrent_kernel.shape(), bias.shape()) {
            ([_, g1], [u, g2], [g3]) => *g1 == 4 * u && g2 == g1 && g3 == g1,
            _ => false,
        };
        if !ok {
            return Err(Error::Shape(format!(
                "lstm kernels {:?}, {:?}, bias {:?}",
                input_kernel.shape(),
                recurrent_kernel.shape(),
                bias.shape()
            )));
        }
        Ok(Self {
            input_kernel,
            recurrent_kernel,
            bias,
            return_sequences,
        })
    }

    pub fn units(&self) -> usize {
        self.recurrent_kernel.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.input_kernel.shape()[0]
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, LstmCache)> {
        let (steps, cin) = match x.shape() {
            [0, _] => return Err(Error::Shape("empty sequence".into())),
            _ => seq_dims(x)?,
        };
        if cin != self.in_channels() {
            return Err(Error::Shape(format!(
                "lstm expects {} input channels, got input {:?}",
                self.in_channels(),
                x.shape()
            )));
        }
        let u = self.units();
        let g4 = 4 * u;
        let rk = self.recurrent_kernel.data();

        // Input projection for all steps at once, then the recurrence.
        let mut gates = vec![0.0; steps * g4];
        for row in gates.chunks_exact_mut(g4) {
            row.copy_from_slice(self.bias.data());
        }
        matmul_into(x.data(), self.input_kernel.data(), &mut gates, steps, cin, g4);

        let mut cells = vec![0.0; steps * u];
        let mut cells_tanh = vec![0.0; steps * u];
        let mut hidden = vec![0.0; steps * u];
        for t in 0..steps {
            let z = &mut gates[t * g4..(t + 1) * g4];
            if t > 0 {
                let h_prev = &hidden[(t - 1) * u..t * u];
                for (j, &hv) in h_prev.iter().enumerate() {
                    axpy(hv, &rk[j * g4..(j + 1) * g4], z);
                }
            }
            for v in &mut z[..2 * u] {
                *v = sigmoid(*v);
            }
            for v in &mut z[2 * u..3 * u] {
                *v = v.tanh();
            }
            for v in &mut z[3 * u..] {
                *v = sigmoid(*v);
            }
            for j in 0..u {
                let c_prev = if t > 0 { cells[(t - 1) * u + j] } else { 0.0 };
                let c = z[u + j] * c_prev + z[j] * z[2 * u + j];
                let tc = c.tanh();
                cells[t * u + j] = c;
                cells_tanh[t * u + j] = tc;
                hidden[t * u + j] = z[3 * u + j] * tc;
            }
        }

        let out = if self.return_sequences {
            Tensor::new(hidden.clone(), &[steps, u])?
        } else {
            Tensor::new(hidden[(steps - 1) * u..].to_vec(), &[u])?
        };
        Ok((
            out,
            LstmCache {
                input: x.clone(),
                gates,
                cells,
                cells_tanh,
                hidden,
            },
        ))
    }

    pub fn backward(&self, cache: &LstmCache, grad_out: &Tensor) -> Result<LstmGrads> {
        let mut grads = [
            self.input_kernel.zeros_like(),
            self.recurrent_kernel.zeros_like(),
            self.bias.zeros_like(),
        ];
        let input = self.backward_into(cache, grad_out, &mut grads)?;
        let [input_kernel, recurrent_kernel, bias] = grads;
        Ok(LstmGrads {
            input,
            input_kernel,
            recurrent_kernel,
            bias,
        })
    }

    /// Backpropagation through time; accumulates into `[input_kernel, recurrent_kernel, bias]`.
    pub(crate) fn backward_into(
        &self,
        cache: &LstmCache,
        grad_out: &Tensor,
        grads: &mut [Tensor],
    ) -> Result<Tensor> {
        let (steps, cin) = seq_dims(&cache.input)?;
        let u = self.units();
        let g4 = 4 * u;
        let expected: &[usize] = if self.return_sequences { &[steps, u] } else { &[u] };
        if grad_out.shape() != expected || cache.hidden.len() != steps * u {
            return Err(Error::Shape(format!(
                "lstm grad {:?}, expected {:?}",
                grad_out.shape(),
                expected
            )));
        }
        let [g_in, g_rec, g_bias] = grads else {
            return Err(Error::Shape("lstm needs three gradient slots".into()));
        };
        let rk = self.recurrent_kernel.data();
        let go = grad_out.data();

        let mut dz_all = vec![0.0; steps * g4];
        let mut dh_next = vec![0.0; u];
        let mut dc_next = vec![0.0; u];
        let mut dh = vec![0.0; u];
        for t in (0..steps).rev() {
            dh.copy_from_slice(&dh_next);
            if self.return_sequences {
                axpy(1.0, &go[t * u..(t + 1) * u], &mut dh);
            } else if t == steps - 1 {
                axpy(1.0, go, &mut dh);
            }
            let a = &cache.gates[t * g4..(t + 1) * g4];
            let dz = &mut dz_all[t * g4..(t + 1) * g4];
            for j in 0..u {
                let (i, f, g, o) = (a[j], a[u + j], a[2 * u + j], a[3 * u + j]);
                let tc = cache.cells_tanh[t * u + j];
                let c_prev = if t > 0 { cache.cells[(t - 1) * u + j] } else { 0.0 };
                let d_o = dh[j] * tc;
                let dc = dh[j] * o * (1.0 - tc * tc) + dc_next[j];
                dz[j] = dc * g * i * (1.0 - i);
                dz[u + j] = dc * c_prev * f * (1.0 - f);
                dz[2 * u + j] = dc * i * (1.0 - g * g);
                dz[3 * u + j] = d_o * o * (1.0 - o);
                dc_next[j] = dc * f;
            }
            if t > 0 {
                let h_prev = &cache.hidden[(t - 1) * u..t * u];
                let grd = g_rec.data_mut();
                for j in 0..u {
                    axpy(h_prev[j], dz, &mut grd[j * g4..(j + 1) * g4]);
                    dh_next[j] = dot(&rk[j * g4..(j + 1) * g4], dz);
                }
            } else {
                dh_next.fill(0.0);
            }
        }

        let wk = self.input_kernel.data();
        let xd = cache.input.data();
        let gid = g_in.data_mut();
        let mut gx = vec![0.0; steps * cin];
        for t in 0..steps {
            let dz = &dz_all[t * g4..(t + 1) * g4];
            axpy(1.0, dz, g_bias.data_mut());
            for c in 0..cin {
                let row = c * g4..(c + 1) * g4;
                axpy(xd[t * cin + c], dz, &mut gid[row.clone()]);
                gx[t * cin + c] = dot(&wk[row], dz);
            }
        }
        Tensor::new(gx, &[steps, cin])
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
