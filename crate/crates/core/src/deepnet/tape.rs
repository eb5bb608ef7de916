//! Reverse-mode differentiation over a linear tape of tensor operations.

use super::conv::{conv_backward, conv_forward};
use super::loss::LossKind;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::{logistic, softplus, Scalar};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    /// Node position in recording order.
    pub fn index(self) -> usize {
        self.0
    }

    pub fn from_index(i: usize) -> Self {
        Var(i)
    }
}

#[derive(Debug, Clone)]
enum Op<F> {
    Leaf,
    Conv { x: Var, kernel: Var, bias: Var, dilation: usize },
    Relu(Var),
    Add(Var, Var),
    /// `[B, 1, T]` → `[B, C, T]`.
    Broadcast(Var),
    /// `[B, C, T]` → `[B, C]`.
    LastStep(Var),
    /// `[B, K]·w[K] (+ b[0])` → `[B]`.
    Affine { x: Var, w: Var, b: Option<Var> },
    /// `w[0] + Σ_l w[l+1]·terms[l]`, all terms `[B]`.
    WeightedSum { terms: Vec<Var>, weights: Var },
    /// softplus(x) + floor.
    Positive(Var),
    Loss { h: Var, target: Vec<F>, kind: LossKind },
}

#[derive(Debug, Clone)]
struct Node<F> {
    value: Tensor<F>,
    op: Op<F>,
}

#[derive(Debug, Clone, Default)]
pub struct Tape<F> {
    nodes: Vec<Node<F>>,
}

/// Output floor added after the softplus.
pub const POSITIVE_FLOOR: f64 = 1e-6;

impl<F: Scalar> Tape<F> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor<F>, op: Op<F>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    pub fn leaf(&mut self, value: Tensor<F>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn conv(&mut self, x: Var, kernel: Var, bias: Var, dilation: usize) -> Result<Var> {
        let y = conv_forward(self.value(x), self.value(kernel), &self.value(bias).data, dilation)?;
        Ok(self.push(y, Op::Conv { x, kernel, bias, dilation }))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = self.value(x).map(|v| v.max(F::zero()));
        self.push(y, Op::Relu(x))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape != tb.shape {
            return Err(Error::Shape(format!("add {:?} + {:?}", ta.shape, tb.shape)));
        }
        let mut y = ta.clone();
        y.add_assign(tb);
        Ok(self.push(y, Op::Add(a, b)))
    }

    pub fn broadcast_channels(&mut self, x: Var, channels: usize) -> Result<Var> {
        let t = self.value(x);
        if t.rank() != 3 || t.dim(1) != 1 {
            return Err(Error::Shape(format!("broadcast needs [B, 1, T], got {:?}", t.shape)));
        }
        let (b, len) = (t.dim(0), t.dim(2));
        let mut data = Vec::with_capacity(b * channels * len);
        for bi in 0..b {
            let row = &t.data[bi * len..(bi + 1) * len];
            for _ in 0..channels {
                data.extend_from_slice(row);
            }
        }
        let y = Tensor::new(vec![b, channels, len], data)?;
        Ok(self.push(y, Op::Broadcast(x)))
    }

    pub fn last_step(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let (b, c, len) = (t.dim(0), t.dim(1), t.dim(2));
        let data = (0..b * c).map(|i| t.data[i * len + len - 1]).collect();
        let y = Tensor {
            shape: vec![b, c],
            data,
        };
        self.push(y, Op::LastStep(x))
    }

    pub fn affine(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (tx, tw) = (self.value(x), self.value(w));
        if tx.rank() != 2 || tx.dim(1) != tw.len() {
            return Err(Error::Shape(format!("affine {:?} · {:?}", tx.shape, tw.shape)));
        }
        let k = tw.len();
        let offset = b.map(|b| self.value(b).data[0]).unwrap_or_else(F::zero);
        let data = tx
            .data
            .chunks(k.max(1))
            .take(tx.dim(0))
            .map(|row| offset + row.iter().zip(&tw.data).map(|(&a, &b)| a * b).sum::<F>())
            .collect::<Vec<F>>();
        let y = Tensor::vector(data);
        Ok(self.push(y, Op::Affine { x, w, b }))
    }

    pub fn weighted_sum(&mut self, terms: Vec<Var>, weights: Var) -> Result<Var> {
        let w = self.value(weights);
        if w.len() != terms.len() + 1 || terms.is_empty() {
            return Err(Error::Shape(format!("{} weights for {} terms", w.len(), terms.len())));
        }
        let b = self.value(terms[0]).len();
        let mut y = vec![w.data[0]; b];
        for (l, &term) in terms.iter().enumerate() {
            let wl = w.data[l + 1];
            for (o, &v) in y.iter_mut().zip(&self.value(term).data) {
                *o += wl * v;
            }
        }
        let y = Tensor::vector(y);
        Ok(self.push(y, Op::WeightedSum { terms, weights }))
    }

    pub fn positive(&mut self, x: Var) -> Var {
        let floor = F::lit(POSITIVE_FLOOR);
        let y = self.value(x).map(|v| softplus(v) + floor);
        self.push(y, Op::Positive(x))
    }

    pub fn loss(&mut self, h: Var, target: &[F], kind: LossKind) -> Result<Var> {
        let hv = &self.value(h).data;
        let value = kind.evaluate(hv, target)?;
        Ok(self.push(
            Tensor::scalar(value),
            Op::Loss {
                h,
                target: target.to_vec(),
                kind,
            },
        ))
    }

    /// Gradients of the scalar `output` with respect to every node.
    pub fn backward(&self, output: Var) -> Gradients<F> {
        let mut grads: Vec<Option<Tensor<F>>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Tensor::filled(self.value(output).shape.clone(), F::one()));
        fn acc<F: Scalar>(grads: &mut [Option<Tensor<F>>], v: Var, g: Tensor<F>) {
            match &mut grads[v.0] {
                Some(t) => t.add_assign(&g),
                slot => *slot = Some(g),
            }
        }
        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Conv { x, kernel, bias, dilation } => {
                    let (dx, dk, db) = conv_backward(self.value(*x), self.value(*kernel), *dilation, &g);
                    acc(&mut grads, *x, dx);
                    acc(&mut grads, *kernel, dk);
                    acc(&mut grads, *bias, Tensor::vector(db));
                }
                Op::Relu(x) => {
                    let xv = self.value(*x);
                    let data = g
                        .data
                        .iter()
                        .zip(&xv.data)
                        .map(|(&gv, &v)| if v > F::zero() { gv } else { F::zero() })
                        .collect();
                    acc(&mut grads, *x, Tensor { shape: g.shape.clone(), data });
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g.clone());
                }
                Op::Broadcast(x) => {
                    let (b, c, len) = (g.dim(0), g.dim(1), g.dim(2));
                    let mut d = vec![F::zero(); b * len];
                    for bi in 0..b {
                        for ci in 0..c {
                            let row = &g.data[(bi * c + ci) * len..(bi * c + ci + 1) * len];
                            for (o, &v) in d[bi * len..(bi + 1) * len].iter_mut().zip(row) {
                                *o += v;
                            }
                        }
                    }
                    acc(&mut grads, *x, Tensor { shape: vec![b, 1, len], data: d });
                }
                Op::LastStep(x) => {
                    let xv = self.value(*x);
                    let len = xv.dim(2);
                    let mut d = Tensor::zeros(xv.shape.clone());
                    for (i, &v) in g.data.iter().enumerate() {
                        d.data[i * len + len - 1] = v;
                    }
                    acc(&mut grads, *x, d);
                }
                Op::Affine { x, w, b } => {
                    let (xv, wv) = (self.value(*x), self.value(*w));
                    let k = wv.len();
                    let mut dx = Tensor::zeros(xv.shape.clone());
                    let mut dw = Tensor::zeros(wv.shape.clone());
                    for (bi, &gv) in g.data.iter().enumerate() {
                        for j in 0..k {
                            dx.data[bi * k + j] = gv * wv.data[j];
                            dw.data[j] += gv * xv.data[bi * k + j];
                        }
                    }
                    acc(&mut grads, *x, dx);
                    acc(&mut grads, *w, dw);
                    if let Some(b) = b {
                        acc(&mut grads, *b, Tensor::scalar(g.data.iter().copied().sum()));
                    }
                }
                Op::WeightedSum { terms, weights } => {
                    let wv = self.value(*weights);
                    let mut dw = Tensor::zeros(wv.shape.clone());
                    dw.data[0] = g.data.iter().copied().sum();
                    for (l, &term) in terms.iter().enumerate() {
                        let tv = self.value(term);
                        dw.data[l + 1] = g.data.iter().zip(&tv.data).map(|(&a, &b)| a * b).sum();
                        acc(&mut grads, term, g.map(|v| v * wv.data[l + 1]));
                    }
                    acc(&mut grads, *weights, dw);
                }
                Op::Positive(x) => {
                    let xv = self.value(*x);
                    let data = g.data.iter().zip(&xv.data).map(|(&gv, &v)| gv * logistic(v)).collect();
                    acc(&mut grads, *x, Tensor { shape: g.shape.clone(), data });
                }
                Op::Loss { h, target, kind } => {
                    let hv = &self.value(*h).data;
                    let d = kind.gradient(hv, target).into_iter().map(|v| v * g.data[0]).collect();
                    acc(&mut grads, *h, Tensor::vector(d));
                }
            }
            grads[i] = Some(g);
        }
        Gradients { grads }
    }
}

/// Per-node gradients from [`Tape::backward`]; nodes the output does not
/// depend on have none.
#[derive(Debug, Clone)]
pub struct Gradients<F> {
    grads: Vec<Option<Tensor<F>>>,
}

impl<F: Scalar> Gradients<F> {
    pub fn get(&self, v: Var) -> Option<&Tensor<F>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_and_sum_gradients() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let w = tape.leaf(Tensor::vector(vec![0.5, -1.0]));
        let b = tape.leaf(Tensor::scalar(0.25));
        let y = tape.affine(x, w, Some(b)).unwrap();
        assert_eq!(tape.value(y).data, vec![-1.25, -2.25]);
        let weights = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        let s = tape.weighted_sum(vec![y], weights).unwrap();
        let h = tape.positive(s);
        let l = tape.loss(h, &[1.0, 1.0], LossKind::Qlike).unwrap();
        let g = tape.backward(l);
        assert_eq!(g.get(w).unwrap().len(), 2);
        assert!(g.get(b).unwrap().data[0].is_finite());
    }
}
