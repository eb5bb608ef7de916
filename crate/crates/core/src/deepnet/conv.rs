//! Dilated causal 1-D convolution.

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Kernel `[out, in, s]`, per-output bias, dilation factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvLayer<F> {
    pub kernel: Tensor<F>,
    pub bias: Vec<F>,
    pub dilation: usize,
}

impl<F: Scalar> ConvLayer<F> {
    pub fn new(kernel: Tensor<F>, bias: Vec<F>, dilation: usize) -> Result<Self> {
        if kernel.rank() != 3 || kernel.dim(0) != bias.len() || dilation == 0 {
            return Err(Error::Shape(format!(
                "kernel {:?} with {} biases and dilation {dilation}",
                kernel.shape,
                bias.len()
            )));
        }
        Ok(ConvLayer { kernel, bias, dilation })
    }

    pub fn out_channels(&self) -> usize {
        self.kernel.dim(0)
    }

    pub fn in_channels(&self) -> usize {
        self.kernel.dim(1)
    }

    pub fn width(&self) -> usize {
        self.kernel.dim(2)
    }
}

/// Dilated causal convolution of a `[channels, time]` signal; left
/// zero-padding keeps the output length equal to the input length.
pub fn dilated_causal_conv<F: Scalar>(x: &Tensor<F>, layer: &ConvLayer<F>) -> Result<Tensor<F>> {
    if x.rank() != 2 {
        return Err(Error::Shape(format!("expected [channels, time], got {:?}", x.shape)));
    }
    let batched = Tensor {
        shape: vec![1, x.dim(0), x.dim(1)],
        data: x.data.clone(),
    };
    let y = conv_forward(&batched, &layer.kernel, &layer.bias, layer.dilation)?;
    Ok(Tensor {
        shape: vec![y.dim(1), y.dim(2)],
        data: y.data,
    })
}

/// Batched form over `[batch, in, time]`.
pub fn conv_forward<F: Scalar>(x: &Tensor<F>, kernel: &Tensor<F>, bias: &[F], dilation: usize) -> Result<Tensor<F>> {
    let (b, ci, t) = (x.dim(0), x.dim(1), x.dim(2));
    let (co, kci, s) = (kernel.dim(0), kernel.dim(1), kernel.dim(2));
    if kci != ci {
        return Err(Error::Shape(format!("kernel expects {kci} input channels, signal has {ci}")));
    }
    if t == 0 {
        return Err(Error::Shape("empty time axis".into()));
    }
    let mut y = vec![F::zero(); b * co * t];
    for bi in 0..b {
        for c in 0..co {
            let out = &mut y[(bi * co + c) * t..(bi * co + c + 1) * t];
            out.iter_mut().for_each(|v| *v = bias[c]);
            for cp in 0..ci {
                let inp = &x.data[(bi * ci + cp) * t..(bi * ci + cp + 1) * t];
                for tau in 0..s {
                    let w = kernel.data[(c * ci + cp) * s + tau];
                    let shift = dilation * tau;
                    if shift >= t || w == F::zero() {
                        continue;
                    }
                    for (o, &xv) in out[shift..].iter_mut().zip(&inp[..t - shift]) {
                        *o += w * xv;
                    }
                }
            }
        }
    }
    Tensor::new(vec![b, co, t], y)
}

/// Gradients of a batched convolution given the output gradient `dy`;
/// returns `(dx, dkernel, dbias)`.
pub fn conv_backward<F: Scalar>(
    x: &Tensor<F>,
    kernel: &Tensor<F>,
    dilation: usize,
    dy: &Tensor<F>,
) -> (Tensor<F>, Tensor<F>, Vec<F>) {
    let (b, ci, t) = (x.dim(0), x.dim(1), x.dim(2));
    let (co, s) = (kernel.dim(0), kernel.dim(2));
    let mut dx = vec![F::zero(); x.len()];
    let mut dk = vec![F::zero(); kernel.len()];
    let mut db = vec![F::zero(); co];
    for bi in 0..b {
        for c in 0..co {
            let g = &dy.data[(bi * co + c) * t..(bi * co + c + 1) * t];
            db[c] += g.iter().copied().sum::<F>();
            for cp in 0..ci {
                let row = (bi * ci + cp) * t;
                for tau in 0..s {
                    let shift = dilation * tau;
                    if shift >= t {
                        continue;
                    }
                    let ki = (c * ci + cp) * s + tau;
                    let w = kernel.data[ki];
                    let inp = &x.data[row..row + t - shift];
                    let mut acc = F::zero();
                    for (&gv, &xv) in g[shift..].iter().zip(inp) {
                        acc += gv * xv;
                    }
                    dk[ki] += acc;
                    if w != F::zero() {
                        for (d, &gv) in dx[row..row + t - shift].iter_mut().zip(&g[shift..]) {
                            *d += w * gv;
                        }
                    }
                }
            }
        }
    }
    (
        Tensor {
            shape: x.shape.clone(),
            data: dx,
        },
        Tensor {
            shape: kernel.shape.clone(),
            data: dk,
        },
        db,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(k: Vec<f64>, d: usize) -> ConvLayer<f64> {
        let s = k.len();
        ConvLayer::new(Tensor::new(vec![1, 1, s], k).unwrap(), vec![0.0], d).unwrap()
    }

    #[test]
    fn hand_convolution() {
        let x = Tensor::new(vec![1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = dilated_causal_conv(&x, &single(vec![1.0, 1.0], 2)).unwrap();
        assert_eq!(y.data, vec![1.0, 2.0, 4.0, 6.0]);
    }

    #[test]
    fn identity_and_zero_kernels() {
        let x = Tensor::new(vec![1, 5], vec![0.3, -1.0, 2.0, 0.5, 7.0]).unwrap();
        for d in [1, 2, 4, 8] {
            assert_eq!(dilated_causal_conv(&x, &single(vec![1.0, 0.0], d)).unwrap().data, x.data);
            assert!(dilated_causal_conv(&x, &single(vec![0.0, 0.0], d)).unwrap().data.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn channel_mismatch() {
        let x = Tensor::new(vec![2, 3], vec![0.0; 6]).unwrap();
        assert!(dilated_causal_conv(&x, &single(vec![1.0, 0.0], 1)).is_err());
    }
}
