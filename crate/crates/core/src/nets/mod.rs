//! Network architectures, their forward/backward passes, saliency map
//! plumbing and checkpoints.
//!
//! A network is a straight chain of [`Layer`]s over batched tensors
//! (`N x H x W x C` for images, `N x len` for vectors). Parameters live in a
//! [`ParamSet`] named `<layer>.<kind>`, in layer order.

mod checkpoint;
mod maps;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::diffcore::ops::{
    activation_backward, argmax_backward, conv2d_backward, conv2d_forward, dense_backward, maxpool2x2_forward,
    pairwise_max_forward, ArgmaxCache, Conv2dCache,
};
use crate::diffcore::{apply_activation, dense, Activation, Gradients, Padding, ParamSet, Real, Tensor};
use crate::error::{Error, Result};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta, CHECKPOINT_VERSION};
pub use maps::{incorporate_saliency, normalize_map, upsample_map, NORMALIZE_EPS};

/// The supervised saliency network: three conv/relu/pool blocks, a pairwise
/// max over the flattened features and a linear dense layer reshaped to a
/// square map at half the input resolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoadSalSpec {
    pub input: usize,
    pub channels: [usize; 3],
    pub kernels: [usize; 3],
}

impl Default for RoadSalSpec {
    fn default() -> Self {
        RoadSalSpec {
            input: 96,
            channels: [16, 24, 32],
            kernels: [5, 3, 3],
        }
    }
}

impl RoadSalSpec {
    /// Side of the output map.
    pub fn output_side(&self) -> usize {
        self.input / 2
    }
}

/// Fully convolutional attention network with a sigmoid single-channel output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Net1Spec {
    pub input: usize,
    pub widths: Vec<usize>,
    pub kernel: usize,
    pub padding: Padding,
}

impl Default for Net1Spec {
    fn default() -> Self {
        Net1Spec {
            input: 96,
            widths: vec![16, 16, 16, 1],
            kernel: 3,
            padding: Padding::Same,
        }
    }
}

/// Driving agent: three conv blocks, a hidden dense layer and three linear
/// outputs (steering, throttle, brake).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub input: usize,
    pub widths: [usize; 3],
    pub kernels: [usize; 3],
    pub hidden: usize,
}

impl Default for AgentSpec {
    fn default() -> Self {
        AgentSpec {
            input: 96,
            widths: [8, 16, 32],
            kernels: [5, 3, 3],
            hidden: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ArchSpec {
    RoadSal(RoadSalSpec),
    Net1(Net1Spec),
    Agent(AgentSpec),
}

impl ArchSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ArchSpec::RoadSal(_) => "roadsal",
            ArchSpec::Net1(_) => "net1",
            ArchSpec::Agent(_) => "agent",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Conv {
        name: String,
        kernel: usize,
        in_channels: usize,
        filters: usize,
        padding: Padding,
        activation: Activation,
    },
    MaxPool,
    Flatten,
    PairwiseMax,
    Dense {
        name: String,
        inputs: usize,
        units: usize,
        activation: Activation,
    },
}

/// What each layer keeps from the forward pass for the backward pass.
enum LayerCache<T> {
    Conv { conv: Conv2dCache<T>, output: Tensor<T> },
    Argmax(ArgmaxCache),
    Flatten { shape: Vec<usize> },
    Dense { input: Tensor<T>, output: Tensor<T> },
}

/// Per-layer state recorded by [`Net::forward_trace`].
pub struct Trace<T> {
    caches: Vec<LayerCache<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Net {
    pub spec: ArchSpec,
    pub layers: Vec<Layer>,
    /// `H x W x C` of one input.
    pub input_shape: [usize; 3],
}

fn conv(name: &str, kernel: usize, in_channels: usize, filters: usize, padding: Padding, activation: Activation) -> Layer {
    Layer::Conv {
        name: name.into(),
        kernel,
        in_channels,
        filters,
        padding,
        activation,
    }
}

fn check_odd_kernels(kernels: &[usize]) -> Result<()> {
    if kernels.iter().any(|&k| k == 0 || k % 2 == 0) {
        return Err(Error::invalid(format!("kernel sizes must be odd and positive, got {kernels:?}")));
    }
    Ok(())
}

impl Net {
    pub fn new(spec: ArchSpec) -> Result<Self> {
        let mut layers = Vec::new();
        let input_shape;
        match &spec {
            ArchSpec::RoadSal(s) => {
                if s.input == 0 || s.input % 8 != 0 {
                    return Err(Error::invalid(format!("RoadSal input {} must be a positive multiple of 8", s.input)));
                }
                if s.channels[2] != 32 {
                    return Err(Error::invalid(format!(
                        "RoadSal block 3 must emit 32 channels so the flattened features pair down to the output map, got {}",
                        s.channels[2]
                    )));
                }
                if s.channels.contains(&0) {
                    return Err(Error::invalid("RoadSal channel widths must be positive"));
                }
                check_odd_kernels(&s.kernels)?;
                input_shape = [s.input, s.input, 3];
                let mut c_in = 3;
                for (i, (&c, &k)) in s.channels.iter().zip(&s.kernels).enumerate() {
                    layers.push(conv(&format!("conv{}", i + 1), k, c_in, c, Padding::Same, Activation::Relu));
                    layers.push(Layer::MaxPool);
                    c_in = c;
                }
                let side = s.input / 8;
                let flat = side * side * 32;
                let out = s.output_side() * s.output_side();
                layers.push(Layer::Flatten);
                layers.push(Layer::PairwiseMax);
                layers.push(Layer::Dense {
                    name: "dense".into(),
                    inputs: flat / 2,
                    units: out,
                    activation: Activation::Linear,
                });
            }
            ArchSpec::Net1(s) => {
                if s.input == 0 {
                    return Err(Error::invalid("Net1 input must be positive"));
                }
                if s.widths.last() != Some(&1) || s.widths.contains(&0) {
                    return Err(Error::invalid(format!(
                        "Net1 widths must be positive and end in a single channel, got {:?}",
                        s.widths
                    )));
                }
                check_odd_kernels(&[s.kernel])?;
                if s.padding == Padding::Valid {
                    return Err(Error::invalid("Net1 must preserve spatial size (same or periodic padding)"));
                }
                input_shape = [s.input, s.input, 3];
                let mut c_in = 3;
                let last = s.widths.len() - 1;
                for (i, &w) in s.widths.iter().enumerate() {
                    let act = if i == last { Activation::Sigmoid } else { Activation::Relu };
                    layers.push(conv(&format!("conv{}", i + 1), s.kernel, c_in, w, s.padding, act));
                    c_in = w;
                }
            }
            ArchSpec::Agent(s) => {
                if s.input == 0 || s.input % 8 != 0 {
                    return Err(Error::invalid(format!("agent input {} must be a positive multiple of 8", s.input)));
                }
                if s.widths.contains(&0) || s.hidden == 0 {
                    return Err(Error::invalid("agent widths must be positive"));
                }
                check_odd_kernels(&s.kernels)?;
                input_shape = [s.input, s.input, 3];
                let mut c_in = 3;
                for (i, (&w, &k)) in s.widths.iter().zip(&s.kernels).enumerate() {
                    layers.push(conv(&format!("conv{}", i + 1), k, c_in, w, Padding::Same, Activation::Relu));
                    layers.push(Layer::MaxPool);
                    c_in = w;
                }
                let side = s.input / 8;
                layers.push(Layer::Flatten);
                layers.push(Layer::Dense {
                    name: "dense1".into(),
                    inputs: side * side * s.widths[2],
                    units: s.hidden,
                    activation: Activation::Relu,
                });
                layers.push(Layer::Dense {
                    name: "dense2".into(),
                    inputs: s.hidden,
                    units: 3,
                    activation: Activation::Linear,
                });
            }
        }
        Ok(Net {
            spec,
            layers,
            input_shape,
        })
    }

    /// Parameter names and shapes, in storage order.
    pub fn param_layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv {
                    name,
                    kernel,
                    in_channels,
                    filters,
                    ..
                } => {
                    out.push((format!("{name}.kernels"), vec![*kernel, *kernel, *in_channels, *filters]));
                    out.push((format!("{name}.bias"), vec![*filters]));
                }
                Layer::Dense { name, inputs, units, .. } => {
                    out.push((format!("{name}.weights"), vec![*inputs, *units]));
                    out.push((format!("{name}.bias"), vec![*units]));
                }
                _ => {}
            }
        }
        out
    }

    /// He-normal weights, zero biases.
    pub fn init_params(&self, seed: u64) -> ParamSet<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        for (name, shape) in self.param_layout() {
            let value = if name.ends_with(".bias") {
                Tensor::zeros(shape)
            } else {
                let fan_in: usize = shape[..shape.len() - 1].iter().product();
                let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("fan-in is positive");
                Tensor::from_fn(shape, |_| normal.sample(&mut rng) as f32)
            };
            params.push(name, value).expect("layer names are unique");
        }
        params
    }

    /// Zero-valued parameters of the right layout.
    pub fn zero_params<T: Real>(&self) -> ParamSet<T> {
        let mut params = ParamSet::new();
        for (name, shape) in self.param_layout() {
            params.push(name, Tensor::zeros(shape)).expect("layer names are unique");
        }
        params
    }

    pub fn check_params<T: Real>(&self, params: &ParamSet<T>) -> Result<()> {
        let layout = self.param_layout();
        if layout.len() != params.len() {
            return Err(Error::invalid(format!(
                "{} network expects {} parameters, got {}",
                self.spec.kind(),
                layout.len(),
                params.len()
            )));
        }
        for ((name, shape), p) in layout.iter().zip(params.iter()) {
            if *name != p.name || shape.as_slice() != p.value.shape() {
                return Err(Error::invalid(format!(
                    "parameter mismatch: expected {name} {shape:?}, got {} {:?}",
                    p.name,
                    p.value.shape()
                )));
            }
        }
        Ok(())
    }

    fn batch_input<T: Real>(&self, input: &Tensor<T>) -> Result<(Tensor<T>, bool)> {
        let [h, w, c] = self.input_shape;
        match *input.shape() {
            [ih, iw, ic] if [ih, iw, ic] == [h, w, c] => Ok((input.clone().reshape(vec![1, h, w, c])?, false)),
            [_, ih, iw, ic] if [ih, iw, ic] == [h, w, c] => Ok((input.clone(), true)),
            _ => Err(Error::shape(self.spec.kind(), &[h, w, c], input.shape())),
        }
    }

    /// Output for an `H x W x C` image or an `N x H x W x C` batch. The
    /// unbatched form drops the leading batch axis of the output.
    pub fn forward<T: Real>(&self, params: &ParamSet<T>, input: &Tensor<T>) -> Result<Tensor<T>> {
        let (out, _) = self.run(params, input, false)?;
        Ok(out)
    }

    /// Forward pass on a batch, keeping what [`Net::backward`] needs.
    pub fn forward_trace<T: Real>(&self, params: &ParamSet<T>, input: &Tensor<T>) -> Result<(Tensor<T>, Trace<T>)> {
        self.run(params, input, true)
    }

    fn run<T: Real>(&self, params: &ParamSet<T>, input: &Tensor<T>, keep: bool) -> Result<(Tensor<T>, Trace<T>)> {
        self.check_params(params)?;
        let (mut x, batched) = self.batch_input(input)?;
        let n = x.shape()[0];
        let mut caches = Vec::new();
        let mut p = 0;
        for layer in &self.layers {
            x = match layer {
                Layer::Conv {
                    padding, activation, ..
                } => {
                    let (y, cache) = conv2d_forward(&x, params.value(p), params.value(p + 1), *padding)?;
                    p += 2;
                    let y = apply_activation(*activation, &y);
                    if keep {
                        caches.push(LayerCache::Conv {
                            conv: cache,
                            output: y.clone(),
                        });
                    }
                    y
                }
                Layer::MaxPool => {
                    let (y, cache) = maxpool2x2_forward(&x)?;
                    if keep {
                        caches.push(LayerCache::Argmax(cache));
                    }
                    y
                }
                Layer::Flatten => {
                    let shape = x.shape().to_vec();
                    let len = x.len() / n;
                    if keep {
                        caches.push(LayerCache::Flatten { shape });
                    }
                    x.reshape(vec![n, len])?
                }
                Layer::PairwiseMax => {
                    let (y, cache) = pairwise_max_forward(&x)?;
                    if keep {
                        caches.push(LayerCache::Argmax(cache));
                    }
                    y
                }
                Layer::Dense { activation, .. } => {
                    let y = dense(&x, params.value(p), params.value(p + 1))?;
                    p += 2;
                    let y = apply_activation(*activation, &y);
                    if keep {
                        caches.push(LayerCache::Dense {
                            input: x,
                            output: y.clone(),
                        });
                    }
                    y
                }
            };
        }
        if !batched {
            let shape = x.shape()[1..].to_vec();
            x = x.reshape(shape)?;
        }
        Ok((x, Trace { caches }))
    }

    /// Backpropagates `grad_out` through a recorded forward pass.
    ///
    /// Parameter gradients are added into `grads` when it is given. Returns the
    /// gradient with respect to the input batch when `want_input` is set.
    pub fn backward<T: Real>(
        &self,
        params: &ParamSet<T>,
        trace: Trace<T>,
        grad_out: &Tensor<T>,
        mut grads: Option<&mut Gradients<T>>,
        want_input: bool,
    ) -> Result<Option<Tensor<T>>> {
        if trace.caches.len() != self.layers.len() {
            return Err(Error::invalid("trace does not belong to this network"));
        }
        let mut p = self.param_layout().len();
        let mut g = grad_out.clone();
        let mut caches = trace.caches;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let cache = caches.pop().expect("one cache per layer");
            let need_input = want_input || i > 0;
            g = match (layer, cache) {
                (Layer::Conv { activation, .. }, LayerCache::Conv { conv, output }) => {
                    p -= 2;
                    let g = activation_backward(*activation, &output, &g.reshape(output.shape().to_vec())?)?;
                    let cg = conv2d_backward(&conv, params.value(p), &g, need_input)?;
                    if let Some(grads) = grads.as_deref_mut() {
                        grads.get_mut(p).add_assign(&cg.kernels)?;
                        grads.get_mut(p + 1).add_assign(&cg.bias)?;
                    }
                    match cg.input {
                        Some(dx) => dx,
                        None => return Ok(None),
                    }
                }
                (Layer::MaxPool | Layer::PairwiseMax, LayerCache::Argmax(cache)) => argmax_backward(&cache, &g)?,
                (Layer::Flatten, LayerCache::Flatten { shape }) => g.reshape(shape)?,
                (Layer::Dense { activation, .. }, LayerCache::Dense { input, output }) => {
                    p -= 2;
                    let g = activation_backward(*activation, &output, &g.reshape(output.shape().to_vec())?)?;
                    let dg = dense_backward(&input, params.value(p), &g, need_input)?;
                    if let Some(grads) = grads.as_deref_mut() {
                        grads.get_mut(p).add_assign(&dg.weights)?;
                        grads.get_mut(p + 1).add_assign(&dg.bias)?;
                    }
                    match dg.input {
                        Some(dx) => dx,
                        None => return Ok(None),
                    }
                }
                _ => return Err(Error::invalid("trace does not match the layer sequence")),
            };
        }
        Ok(want_input.then_some(g))
    }

    /// Shape of each intermediate activation for an `N = 1` input, in layer order.
    pub fn shape_chain(&self) -> Vec<Vec<usize>> {
        let [h, w, c] = self.input_shape;
        let mut shape = vec![h, w, c];
        let mut out = Vec::new();
        for layer in &self.layers {
            shape = match layer {
                Layer::Conv { filters, .. } => vec![shape[0], shape[1], *filters],
                Layer::MaxPool => vec![shape[0] / 2, shape[1] / 2, shape[2]],
                Layer::Flatten => vec![shape.iter().product()],
                Layer::PairwiseMax => vec![shape[0] / 2],
                Layer::Dense { units, .. } => vec![*units],
            };
            out.push(shape.clone());
        }
        out
    }
}

/// RoadSal raw output, `side x side` per image (`N x side x side` for a batch).
pub fn roadsal_forward<T: Real>(net: &Net, params: &ParamSet<T>, image: &Tensor<T>) -> Result<Tensor<T>> {
    let ArchSpec::RoadSal(spec) = &net.spec else {
        return Err(Error::invalid(format!("expected a roadsal network, got {}", net.spec.kind())));
    };
    let out = net.forward(params, image)?;
    let side = spec.output_side();
    let shape = if out.shape().len() == 1 {
        vec![side, side]
    } else {
        vec![out.shape()[0], side, side]
    };
    out.reshape(shape)
}

/// Net1 attention map, `H x W` per image (`N x H x W` for a batch).
pub fn net1_forward<T: Real>(net: &Net, params: &ParamSet<T>, image: &Tensor<T>) -> Result<Tensor<T>> {
    if !matches!(net.spec, ArchSpec::Net1(_)) {
        return Err(Error::invalid(format!("expected a net1 network, got {}", net.spec.kind())));
    }
    let out = net.forward(params, image)?;
    let shape = out.shape();
    let trimmed = shape[..shape.len() - 1].to_vec();
    out.reshape(trimmed)
}

/// Raw (unclamped) steering, throttle and brake per image.
pub fn agent_forward<T: Real>(net: &Net, params: &ParamSet<T>, image: &Tensor<T>) -> Result<Tensor<T>> {
    if !matches!(net.spec, ArchSpec::Agent(_)) {
        return Err(Error::invalid(format!("expected an agent network, got {}", net.spec.kind())));
    }
    net.forward(params, image)
}

#[cfg(test)]
mod tests {
    use rand::Rng;

    use super::*;
    use crate::diffcore::gradcheck::{compare_with_finite_differences, MAX_REL_ERR};

    #[test]
    fn roadsal_shape_chain() {
        let net = Net::new(ArchSpec::RoadSal(RoadSalSpec::default())).unwrap();
        let chain = net.shape_chain();
        let pooled: Vec<usize> = net
            .layers
            .iter()
            .zip(&chain)
            .filter(|(l, _)| matches!(l, Layer::MaxPool))
            .map(|(_, s)| s[0])
            .collect();
        assert_eq!(pooled, vec![48, 24, 12]);
        let tail: Vec<_> = chain[chain.len() - 3..].to_vec();
        assert_eq!(tail, vec![vec![4608], vec![2304], vec![2304]]);
        let bad = RoadSalSpec {
            channels: [16, 24, 30],
            ..RoadSalSpec::default()
        };
        assert!(Net::new(ArchSpec::RoadSal(bad)).is_err());
    }

    #[test]
    fn roadsal_zero_image_gives_zero_map() {
        let net = Net::new(ArchSpec::RoadSal(RoadSalSpec::default())).unwrap();
        let params = net.init_params(1);
        let out = roadsal_forward(&net, &params, &Tensor::<f32>::zeros(vec![96, 96, 3])).unwrap();
        assert_eq!(out.shape(), &[48, 48]);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn net1_outputs() {
        let net = Net::new(ArchSpec::Net1(Net1Spec::default())).unwrap();
        let zero = net.zero_params::<f32>();
        let img = Tensor::from_fn(vec![96, 96, 3], |i| (i % 7) as f32 / 7.0);
        let out = net1_forward(&net, &zero, &img).unwrap();
        assert_eq!(out.shape(), &[96, 96]);
        assert!(out.data().iter().all(|&v| v == 0.5));
        let random = net1_forward(&net, &net.init_params(3), &img).unwrap();
        assert!(random.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn agent_outputs() {
        let net = Net::new(ArchSpec::Agent(AgentSpec::default())).unwrap();
        let img = Tensor::from_fn(vec![96, 96, 3], |i| (i % 5) as f32 / 5.0);
        let out = agent_forward(&net, &net.zero_params::<f32>(), &img).unwrap();
        assert_eq!(out.data(), &[0.0, 0.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for seed in 0..100 {
            let params = net.init_params(seed);
            let img = Tensor::from_fn(vec![96, 96, 3], |_| rng.random::<f32>());
            let out = agent_forward(&net, &params, &img).unwrap();
            assert_eq!(out.len(), 3);
            assert!(out.is_finite());
        }
    }

    #[test]
    fn forward_is_pure() {
        let net = Net::new(ArchSpec::Agent(AgentSpec::default())).unwrap();
        let params = net.init_params(2);
        let img = Tensor::from_fn(vec![2, 96, 96, 3], |i| ((i * 31) % 17) as f32 / 17.0);
        let a = net.forward(&params, &img).unwrap();
        let b = net.forward(&params, &img).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn batched_matches_single() {
        let net = Net::new(ArchSpec::Agent(AgentSpec::default())).unwrap();
        let params = net.init_params(4);
        let img = Tensor::from_fn(vec![2, 96, 96, 3], |i| ((i * 13) % 11) as f32 / 11.0);
        let both = net.forward(&params, &img).unwrap();
        let second = Tensor::new(vec![96, 96, 3], img.data()[96 * 96 * 3..].to_vec()).unwrap();
        let one = net.forward(&params, &second).unwrap();
        for (a, b) in both.data()[3..].iter().zip(one.data()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn param_mismatch_rejected() {
        let agent = Net::new(ArchSpec::Agent(AgentSpec::default())).unwrap();
        let net1 = Net::new(ArchSpec::Net1(Net1Spec::default())).unwrap();
        let img = Tensor::<f32>::zeros(vec![96, 96, 3]);
        assert!(agent.forward(&net1.init_params(0), &img).is_err());
        assert!(agent.forward(&agent.init_params(0), &Tensor::zeros(vec![48, 48, 3])).is_err());
    }

    #[test]
    fn periodic_net1_is_shift_equivariant() {
        let spec = Net1Spec {
            input: 24,
            padding: Padding::Periodic,
            ..Net1Spec::default()
        };
        let net = Net::new(ArchSpec::Net1(spec)).unwrap();
        let params = net.init_params(8);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let img: Tensor<f32> = Tensor::from_fn(vec![24, 24, 3], |_| rng.random());
        let (dy, dx) = (5, 17);
        let shifted = Tensor::from_fn(vec![24, 24, 3], |i| {
            let (y, x, c) = (i / 72, (i / 3) % 24, i % 3);
            img.data()[(((y + 24 - dy) % 24) * 24 + (x + 24 - dx) % 24) * 3 + c]
        });
        let a = net1_forward(&net, &params, &img).unwrap();
        let b = net1_forward(&net, &params, &shifted).unwrap();
        for y in 0..24 {
            for x in 0..24 {
                let want = a.data()[((y + 24 - dy) % 24) * 24 + (x + 24 - dx) % 24];
                assert!((b.data()[y * 24 + x] - want).abs() < 1e-6);
            }
        }
    }

    /// Whole-network backward against finite differences, in double precision.
    #[test]
    fn small_networks_backprop_correctly() {
        let specs = [
            ArchSpec::Agent(AgentSpec {
                input: 16,
                widths: [2, 3, 4],
                kernels: [3, 3, 1],
                hidden: 5,
            }),
            ArchSpec::RoadSal(RoadSalSpec {
                input: 16,
                channels: [2, 3, 32],
                kernels: [3, 1, 1],
            }),
            ArchSpec::Net1(Net1Spec {
                input: 6,
                widths: vec![3, 1],
                kernel: 3,
                padding: Padding::Periodic,
            }),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for spec in specs {
            let net = Net::new(spec).unwrap();
            let params: ParamSet<f64> = {
                let p32 = net.init_params(5);
                let mut p = ParamSet::new();
                for param in p32.iter() {
                    // Small nonzero biases keep relu units away from their kink.
                    let v = if param.name.ends_with(".bias") {
                        Tensor::from_fn(param.value.shape().to_vec(), |_| rng.random_range(0.05..0.2))
                    } else {
                        param.value.cast::<f64>()
                    };
                    p.push(param.name.clone(), v).unwrap();
                }
                p
            };
            let [h, w, c] = net.input_shape;
            let x = Tensor::from_fn(vec![2, h, w, c], |_| rng.random_range(0.0..1.0));
            let out_len = net.forward(&params, &x).unwrap().len();
            let weights: Vec<f64> = (0..out_len).map(|_| rng.random_range(-1.0..1.0)).collect();
            let objective = |p: &ParamSet<f64>, x: &Tensor<f64>| -> f64 {
                let y = net.forward(p, x).unwrap();
                y.data().iter().zip(&weights).map(|(a, b)| a * b).sum()
            };
            let (y, trace) = net.forward_trace(&params, &x).unwrap();
            let gy = Tensor::new(y.shape().to_vec(), weights.clone()).unwrap();
            let mut grads = params.zero_grads();
            let dx = net.backward(&params, trace, &gy, Some(&mut grads), true).unwrap().unwrap();

            let err = compare_with_finite_differences(|v| objective(&params, &Tensor::new(x.shape().to_vec(), v.to_vec()).unwrap()), x.data(), dx.data());
            assert!(err < MAX_REL_ERR, "{} input grad rel err {err}", net.spec.kind());
            for (i, param) in params.iter().enumerate() {
                let f = |v: &[f64]| {
                    let mut p = params.clone();
                    p.value_mut(i).data_mut().copy_from_slice(v);
                    objective(&p, &x)
                };
                let err = compare_with_finite_differences(f, param.value.data(), grads.get(i).data());
                assert!(err < MAX_REL_ERR, "{} {} rel err {err}", net.spec.kind(), param.name);
            }
        }
    }
}
