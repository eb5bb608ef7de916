//! The DeepVol network: a stack of dilated causal convolutions with
//! residual connections, per-layer last-step readouts and a weighted ReLU
//! aggregation head.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::conv::ConvLayer;
use super::loss::LossKind;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::{inverse_softplus, Scalar};

pub const NET_SCHEMA: &str = "volcast_net_v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    /// Window length N (receptive-field days × returns per day).
    pub input_len: usize,
    pub channels: usize,
    pub kernel_width: usize,
    pub layers: usize,
    /// Lagged realised variances fed to the linear fusion term (0 for plain DeepVol).
    pub rv_inputs: usize,
}

impl NetConfig {
    /// Smallest doubling stack whose receptive field covers `input_len`.
    pub fn for_window(input_len: usize, channels: usize, kernel_width: usize) -> Self {
        let mut cfg = NetConfig {
            input_len,
            channels,
            kernel_width,
            layers: 1,
            rv_inputs: 0,
        };
        if kernel_width >= 2 {
            while cfg.receptive_field() < input_len {
                cfg.layers += 1;
            }
        }
        cfg
    }

    pub fn with_rv_inputs(mut self, n: usize) -> Self {
        self.rv_inputs = n;
        self
    }

    /// (s − 1)(2^L − 1) + 1.
    pub fn receptive_field(&self) -> usize {
        (self.kernel_width.saturating_sub(1)) * ((1usize << self.layers) - 1) + 1
    }

    pub fn dilation(layer: usize) -> usize {
        1 << layer
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_len == 0 || self.channels == 0 || self.kernel_width == 0 || self.layers == 0 {
            return Err(Error::invalid(format!("degenerate network configuration {self:?}")));
        }
        if self.layers > 24 {
            return Err(Error::invalid(format!("{} layers is beyond any supported window", self.layers)));
        }
        Ok(())
    }

    /// Parameter tensor shapes in storage order.
    pub fn shapes(&self) -> Vec<Vec<usize>> {
        let c = self.channels;
        let mut shapes = Vec::new();
        for l in 0..self.layers {
            let cin = if l == 0 { 1 } else { c };
            shapes.push(vec![c, cin, self.kernel_width]);
            shapes.push(vec![c]);
            shapes.push(vec![c]);
            shapes.push(vec![1]);
        }
        shapes.push(vec![self.layers + 1]);
        if self.rv_inputs > 0 {
            shapes.push(vec![self.rv_inputs]);
        }
        shapes
    }
}

/// How a network's input window is cut from a panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    pub granularity: u32,
    pub receptive_field_days: usize,
    pub day_len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<F> {
    pub config: NetConfig,
    pub window: Option<WindowSpec>,
    /// Per layer: kernel, conv bias, readout weights, readout bias; then the
    /// aggregation weights α_0..α_L; then the fusion weights if any.
    pub params: Vec<Tensor<F>>,
}

impl<F: Scalar> Network<F> {
    pub fn zeros(config: NetConfig) -> Result<Self> {
        config.validate()?;
        let params = config.shapes().into_iter().map(Tensor::zeros).collect();
        Ok(Network {
            config,
            window: None,
            params,
        })
    }

    /// Kernels uniform on ±1/√fan-in, small random readouts and α, α_0 at
    /// inverse-softplus of `target_mean` so the initial output is that constant.
    pub fn init(config: NetConfig, target_mean: F, rng: &mut impl Rng) -> Result<Self> {
        let mut net = Self::zeros(config)?;
        let small = 0.1;
        for l in 0..config.layers {
            let k = &mut net.params[4 * l];
            let fan_in = (k.dim(1) * k.dim(2)) as f64;
            let bound = 1.0 / fan_in.sqrt();
            for v in k.data.iter_mut() {
                *v = F::lit(rng.random_range(-bound..bound));
            }
            for v in net.params[4 * l + 2].data.iter_mut() {
                *v = F::lit(rng.random_range(-small..small));
            }
            net.params[4 * l + 3].data[0] = F::lit(rng.random_range(-small..small));
        }
        let alpha = &mut net.params[4 * config.layers];
        for v in alpha.data.iter_mut().skip(1) {
            *v = F::lit(rng.random_range(-small..small));
        }
        let floor = F::lit(super::tape::POSITIVE_FLOOR);
        alpha.data[0] = inverse_softplus((target_mean - floor).max(F::lit(1e-6)));
        Ok(net)
    }

    pub fn kernel_index(layer: usize) -> usize {
        4 * layer
    }

    pub fn alpha_index(&self) -> usize {
        4 * self.config.layers
    }

    pub fn rv_index(&self) -> Option<usize> {
        (self.config.rv_inputs > 0).then(|| 4 * self.config.layers + 1)
    }

    pub fn layer(&self, l: usize) -> ConvLayer<F> {
        ConvLayer {
            kernel: self.params[4 * l].clone(),
            bias: self.params[4 * l + 1].data.clone(),
            dilation: NetConfig::dilation(l),
        }
    }

    pub fn n_params(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn flat(&self) -> Vec<F> {
        self.params.iter().flat_map(|t| t.data.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[F]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::Shape(format!("{} values for {} parameters", flat.len(), self.n_params())));
        }
        let mut off = 0;
        for t in self.params.iter_mut() {
            let n = t.len();
            t.data.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    fn check_inputs(&self, inputs: &[&[F]], aux: Option<&[&[F]]>) -> Result<()> {
        if inputs.is_empty() {
            return Err(Error::Shape("empty batch".into()));
        }
        let n = self.config.input_len;
        if let Some(bad) = inputs.iter().position(|w| w.len() != n) {
            return Err(Error::Shape(format!("window {bad} has {} entries, network expects {n}", inputs[bad].len())));
        }
        match (self.config.rv_inputs, aux) {
            (0, None) => Ok(()),
            (0, Some(_)) => Err(Error::Shape("plain network given realised-variance inputs".into())),
            (_, None) => Err(Error::Shape("fusion network needs realised-variance inputs".into())),
            (r, Some(a)) => {
                if a.len() != inputs.len() || a.iter().any(|v| v.len() != r) {
                    Err(Error::Shape(format!("each sample needs {r} realised-variance inputs")))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Records the forward pass of a batch; returns the parameter leaves and the
    /// `[B]` output node.
    pub fn record(&self, tape: &mut Tape<F>, inputs: &[&[F]], aux: Option<&[&[F]]>) -> Result<(Vec<Var>, Var)> {
        self.check_inputs(inputs, aux)?;
        let cfg = self.config;
        let b = inputs.len();
        let params: Vec<Var> = self.params.iter().map(|t| tape.leaf(t.clone())).collect();
        let x = Tensor::new(vec![b, 1, cfg.input_len], inputs.iter().flat_map(|w| w.iter().copied()).collect())?;
        if let Some(i) = x.first_non_finite() {
            return Err(Error::NonFinite {
                context: "network input".into(),
                index: i,
            });
        }
        let mut h = tape.leaf(x);
        let mut reads = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let conv = tape.conv(h, params[4 * l], params[4 * l + 1], NetConfig::dilation(l))?;
            let act = tape.relu(conv);
            let residual = if l == 0 { tape.broadcast_channels(h, cfg.channels)? } else { h };
            h = tape.add(act, residual)?;
            if let Some(i) = tape.value(h).first_non_finite() {
                return Err(Error::NonFinite {
                    context: format!("layer {}", l + 1),
                    index: i,
                });
            }
            let last = tape.last_step(h);
            let r = tape.affine(last, params[4 * l + 2], Some(params[4 * l + 3]))?;
            reads.push(tape.relu(r));
        }
        let mut raw = tape.weighted_sum(reads, params[4 * cfg.layers])?;
        if let (Some(idx), Some(a)) = (self.rv_index(), aux) {
            let av = Tensor::new(vec![b, cfg.rv_inputs], a.iter().flat_map(|v| v.iter().copied()).collect())?;
            let av = tape.leaf(av);
            let lin = tape.affine(av, params[idx], None)?;
            raw = tape.add(raw, lin)?;
        }
        let out = tape.positive(raw);
        if let Some(i) = tape.value(out).first_non_finite() {
            return Err(Error::NonFinite {
                context: "network output".into(),
                index: i,
            });
        }
        Ok((params, out))
    }

    pub fn forward_batch(&self, inputs: &[&[F]], aux: Option<&[&[F]]>) -> Result<Vec<F>> {
        let mut tape = Tape::new();
        let (_, out) = self.record(&mut tape, inputs, aux)?;
        Ok(tape.value(out).data.clone())
    }

    pub fn forward(&self, window: &[F], aux: Option<&[F]>) -> Result<F> {
        let a;
        let aux = match aux {
            Some(v) => {
                a = [v];
                Some(&a[..])
            }
            None => None,
        };
        Ok(self.forward_batch(&[window], aux)?[0])
    }

    /// Batch loss and its gradient with respect to every parameter, flattened
    /// in storage order.
    pub fn loss_and_gradient(
        &self,
        inputs: &[&[F]],
        aux: Option<&[&[F]]>,
        targets: &[F],
        kind: LossKind,
    ) -> Result<(F, Vec<F>)> {
        let mut tape = Tape::new();
        let (params, out) = self.record(&mut tape, inputs, aux)?;
        let loss = tape.loss(out, targets, kind)?;
        let grads = tape.backward(loss);
        let mut flat = Vec::with_capacity(self.n_params());
        for (p, t) in params.iter().zip(&self.params) {
            match grads.get(*p) {
                Some(g) => flat.extend_from_slice(&g.data),
                None => flat.extend(std::iter::repeat_n(F::zero(), t.len())),
            }
        }
        Ok((tape.value(loss).data[0], flat))
    }

    pub fn cast<G: Scalar>(&self) -> Network<G> {
        Network {
            config: self.config,
            window: self.window,
            params: self.params.iter().map(Tensor::cast).collect(),
        }
    }
}

/// On-disk network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetFile {
    pub schema: String,
    pub config: NetConfig,
    pub window: Option<WindowSpec>,
    /// Free-form echo of the training configuration.
    pub training: Option<serde_json::Value>,
    pub layer_shapes: Vec<Vec<usize>>,
    pub params: Vec<Vec<f64>>,
}

impl<F: Scalar> Network<F> {
    pub fn to_file(&self, training: Option<serde_json::Value>) -> NetFile {
        NetFile {
            schema: NET_SCHEMA.into(),
            config: self.config,
            window: self.window,
            training,
            layer_shapes: self.params.iter().map(|t| t.shape.clone()).collect(),
            params: self.params.iter().map(|t| t.data.iter().map(|v| v.to_f64_lossy()).collect()).collect(),
        }
    }

    pub fn from_file(file: &NetFile) -> Result<Self> {
        if file.schema != NET_SCHEMA {
            return Err(Error::Schema {
                expected: NET_SCHEMA.into(),
                found: file.schema.clone(),
            });
        }
        let shapes = file.config.shapes();
        if shapes != file.layer_shapes || shapes.len() != file.params.len() {
            return Err(Error::Shape("network file shapes disagree with its configuration".into()));
        }
        let params = shapes
            .into_iter()
            .zip(&file.params)
            .map(|(s, d)| Tensor::new(s, d.iter().map(|&v| F::lit(v)).collect()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Network {
            config: file.config,
            window: file.window,
            params,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>, training: Option<serde_json::Value>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(&self.to_file(training))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_file(&serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::softplus;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_depth_covers_window() {
        assert_eq!(NetConfig::for_window(77, 8, 2).layers, 7);
        assert_eq!(NetConfig::for_window(75, 8, 2).layers, 7);
        assert_eq!(NetConfig::for_window(25, 8, 2).layers, 5);
        assert_eq!(NetConfig::for_window(128, 8, 2).receptive_field(), 128);
        assert_eq!(NetConfig::for_window(129, 8, 2).layers, 8);
    }

    #[test]
    fn constant_network() {
        let cfg = NetConfig::for_window(16, 3, 2);
        let mut net = Network::<f64>::zeros(cfg).unwrap();
        let a = net.alpha_index();
        net.params[a].data[0] = 0.7;
        let expect = softplus(0.7) + 1e-6;
        for w in [vec![0.0; 16], (0..16).map(|i| i as f64 - 3.0).collect()] {
            assert_eq!(net.forward(&w, None).unwrap(), expect);
        }
    }

    #[test]
    fn hand_computed_single_layer() {
        // one channel, kernel [a, b] at dilation 1, window x (length 4)
        let cfg = NetConfig {
            input_len: 4,
            channels: 1,
            kernel_width: 2,
            layers: 1,
            rv_inputs: 0,
        };
        let mut net = Network::<f64>::zeros(cfg).unwrap();
        net.params[0].data = vec![0.5, -1.0]; // k[τ=0], k[τ=1]
        net.params[1].data = vec![0.1];
        net.params[2].data = vec![2.0];
        net.params[3].data = vec![-0.3];
        net.params[4].data = vec![0.2, 0.8];
        let x = [1.0, -2.0, 0.5, 3.0];
        // last step: conv = 0.1 + 0.5·3 − 1·0.5 = 1.1, relu 1.1, + residual 3 = 4.1
        // readout = 2·4.1 − 0.3 = 7.9, ĥ = softplus(0.2 + 0.8·7.9) + 1e-6
        let expect = softplus(0.2 + 0.8 * 7.9) + 1e-6;
        assert!((net.forward(&x, None).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn init_output_is_target_mean() {
        let cfg = NetConfig::for_window(77, 8, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = Network::<f64>::init(cfg, 1.3, &mut rng).unwrap();
        let a = net.alpha_index();
        for v in net.params[a].data.iter_mut().skip(1) {
            *v = 0.0;
        }
        let h = net.forward(&vec![0.1; 77], None).unwrap();
        assert!((h - 1.3).abs() < 1e-9);
    }

    #[test]
    fn window_length_checked() {
        let net = Network::<f64>::zeros(NetConfig::for_window(8, 2, 2)).unwrap();
        assert!(net.forward(&[0.0; 7], None).is_err());
        assert!(net.forward(&[0.0; 8], Some(&[1.0])).is_err());
    }
}
