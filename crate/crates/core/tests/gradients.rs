//! Randomized finite-difference checks over layer shapes.

use fdiag::layers::{Conv1d, Dense, Lstm};
use fdiag::{Rng, Tensor};
use proptest::prelude::*;

const H: f64 = 1e-6;

fn random(shape: &[usize], rng: &mut Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new((0..n).map(|_| rng.normal()).collect(), shape).unwrap()
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn numeric(x: &Tensor, i: usize, f: &dyn Fn(&Tensor) -> f64) -> f64 {
    let mut p = x.clone();
    p.data_mut()[i] += H;
    let up = f(&p);
    p.data_mut()[i] -= 2.0 * H;
    (up - f(&p)) / (2.0 * H)
}

fn close(a: f64, n: f64, tol: f64) -> bool {
    (a - n).abs() <= tol * a.abs().max(n.abs()).max(1e-4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn conv_input_and_kernel_gradients(k in 1usize..5, cin in 1usize..4, cout in 1usize..4, extra in 0usize..6, seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let layer = Conv1d::new(k, cin, cout, &mut rng).unwrap();
        let x = random(&[k + extra, cin], &mut rng);
        let (y, cache) = layer.forward(&x).unwrap();
        let r = random(y.shape(), &mut rng);
        let g = layer.backward(&cache, &r).unwrap();
        for i in 0..x.len() {
            let n = numeric(&x, i, &|x| dot(&layer.forward(x).unwrap().0, &r));
            prop_assert!(close(g.input.data()[i], n, 1e-6));
        }
        for i in 0..layer.kernels.len() {
            let n = numeric(&layer.kernels, i, &|w| {
                let l = Conv1d::from_parts(w.clone(), layer.bias.clone()).unwrap();
                dot(&l.forward(&x).unwrap().0, &r)
            });
            prop_assert!(close(g.kernels.data()[i], n, 1e-6));
        }
    }

    #[test]
    fn dense_gradients(din in 1usize..8, dout in 1usize..8, seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let layer = Dense::new(din, dout, &mut rng).unwrap();
        let x = random(&[din], &mut rng);
        let (y, cache) = layer.forward(&x).unwrap();
        let r = random(y.shape(), &mut rng);
        let g = layer.backward(&cache, &r).unwrap();
        for i in 0..x.len() {
            let n = numeric(&x, i, &|x| dot(&layer.forward(x).unwrap().0, &r));
            prop_assert!(close(g.input.data()[i], n, 1e-6));
        }
        for i in 0..layer.weights.len() {
            let n = numeric(&layer.weights, i, &|w| {
                let l = Dense::from_parts(w.clone(), layer.bias.clone()).unwrap();
                dot(&l.forward(&x).unwrap().0, &r)
            });
            prop_assert!(close(g.weights.data()[i], n, 1e-6));
        }
    }

    #[test]
    fn lstm_gradients(steps in 1usize..6, cin in 1usize..4, units in 1usize..4, seq in any::<bool>(), seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let layer = Lstm::new(cin, units, seq, &mut rng).unwrap();
        let x = random(&[steps, cin], &mut rng);
        let (y, cache) = layer.forward(&x).unwrap();
        let r = random(y.shape(), &mut rng);
        let g = layer.backward(&cache, &r).unwrap();
        for i in 0..x.len() {
            let n = numeric(&x, i, &|x| dot(&layer.forward(x).unwrap().0, &r));
            prop_assert!(close(g.input.data()[i], n, 1e-4));
        }
        for i in 0..layer.recurrent_kernel.len() {
            let n = numeric(&layer.recurrent_kernel, i, &|w| {
                let l = Lstm::from_parts(layer.input_kernel.clone(), w.clone(), layer.bias.clone(), seq).unwrap();
                dot(&l.forward(&x).unwrap().0, &r)
            });
            prop_assert!(close(g.recurrent_kernel.data()[i], n, 1e-4));
        }
    }
}
