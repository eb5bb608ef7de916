#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use volcast::deepnet::{LossKind, NetConfig, Network, Tensor};

/// Direct double-loop summation of a dilated causal convolution.
pub fn naive_conv(x: &[Vec<f64>], kernel: &[Vec<Vec<f64>>], bias: &[f64], dilation: usize) -> Vec<Vec<f64>> {
    let t_len = x[0].len();
    let mut y = vec![vec![0.0; t_len]; kernel.len()];
    for (c, row) in y.iter_mut().enumerate() {
        for (t, out) in row.iter_mut().enumerate() {
            let mut acc = bias[c];
            for (cp, xs) in x.iter().enumerate() {
                for (tau, &w) in kernel[c][cp].iter().enumerate() {
                    let back = dilation * tau;
                    if t >= back {
                        acc += w * xs[t - back];
                    }
                }
            }
            *out = acc;
        }
    }
    y
}

pub fn random_network(cfg: NetConfig, seed: u64) -> Network<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Network::<f64>::zeros(cfg).unwrap();
    for t in net.params.iter_mut() {
        for v in t.data.iter_mut() {
            *v = rng.random_range(-0.6..0.6);
        }
    }
    net
}

pub fn random_windows(n: usize, len: usize, scale: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..len).map(|_| rng.random_range(-scale..scale)).collect()).collect()
}

/// Largest relative discrepancy between backprop and central differences,
/// with the denominator floored at 1e-8.
pub fn worst_gradient_error(
    net: &Network<f64>,
    windows: &[Vec<f64>],
    aux: Option<&[Vec<f64>]>,
    targets: &[f64],
    kind: LossKind,
    step: f64,
) -> (f64, usize) {
    let inputs: Vec<&[f64]> = windows.iter().map(|w| w.as_slice()).collect();
    let aux_views: Option<Vec<&[f64]>> = aux.map(|a| a.iter().map(|v| v.as_slice()).collect());
    let (_, grad) = net.loss_and_gradient(&inputs, aux_views.as_deref(), targets, kind).unwrap();
    let base = net.flat();
    let mut probe = net.clone();
    let mut eval = |flat: &[f64]| {
        probe.set_flat(flat).unwrap();
        let h = probe.forward_batch(&inputs, aux_views.as_deref()).unwrap();
        kind.evaluate(&h, targets).unwrap()
    };
    let mut worst = (0.0, 0);
    let mut x = base.clone();
    for i in 0..base.len() {
        x[i] = base[i] + step;
        let up = eval(&x);
        x[i] = base[i] - step;
        let down = eval(&x);
        x[i] = base[i];
        let fd = (up - down) / (2.0 * step);
        let err = (grad[i] - fd).abs() / grad[i].abs().max(1e-8);
        if err > worst.0 {
            worst = (err, i);
        }
    }
    worst
}

pub fn tensor3(data: &[Vec<Vec<f64>>]) -> Tensor<f64> {
    let (a, b, c) = (data.len(), data[0].len(), data[0][0].len());
    Tensor::new(vec![a, b, c], data.iter().flatten().flatten().copied().collect()).unwrap()
}
