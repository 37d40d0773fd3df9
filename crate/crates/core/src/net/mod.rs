//! A small DnCNN-style denoiser: a stack of zero-padded convolutions with
//! ReLU between them, optionally residual (the network predicts the noise and
//! the output is `input − prediction`), together with exact reverse-mode
//! gradients.
//!
//! Computation is in `f64`. Parameters produced by initialization, training
//! and loading are always `f32`-representable, which is what makes the weight
//! file round trip bit-exact.

mod conv;
pub mod io;
pub mod loss;
pub mod optim;
pub mod train;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::SeededStream;

pub use io::{load_params, save_params};
pub use loss::{loss_and_grad, LossKind, TrainingSample};
pub use optim::{adam_step, sgd_step, AdamState, Optimizer};
pub use train::{evaluation_noise, make_sample, mean_psnr, train, EpochRecord, LrSchedule, TrainConfig, TrainLog};

/// Dense `(batch, channels, height, width)` array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    dims: [usize; 4],
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn new(dims: [usize; 4], data: Vec<f64>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Shape(format!("tensor dims must be positive, got {dims:?}")));
        }
        if data.len() != dims.iter().product::<usize>() {
            return Err(Error::Shape(format!(
                "tensor {dims:?} needs {} values, got {}",
                dims.iter().product::<usize>(),
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tensor contains non-finite values".into()));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: [usize; 4]) -> Self {
        Self {
            dims,
            data: vec![0.0; dims.iter().product()],
        }
    }

    /// Stacks single-channel images into a `(n, 1, h, w)` batch.
    pub fn from_images(images: &[Image]) -> Result<Self> {
        let first = images
            .first()
            .ok_or_else(|| Error::Shape("empty image batch".into()))?;
        let (w, h) = first.dims();
        let mut data = Vec::with_capacity(images.len() * w * h);
        for img in images {
            first.check_same_dims(img)?;
            data.extend_from_slice(img.data());
        }
        Ok(Self {
            dims: [images.len(), 1, h, w],
            data,
        })
    }

    /// Splits a single-channel batch back into images.
    pub fn to_images(&self) -> Result<Vec<Image>> {
        let [n, c, h, w] = self.dims;
        if c != 1 {
            return Err(Error::Shape(format!("expected 1 channel, got {c}")));
        }
        Ok((0..n)
            .map(|i| Image::from_vec_unchecked(w, h, self.data[i * h * w..(i + 1) * h * w].to_vec()))
            .collect())
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn item(&self, i: usize) -> &[f64] {
        let per = self.dims[1] * self.dims[2] * self.dims[3];
        &self.data[i * per..(i + 1) * per]
    }
}

/// Architecture hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetConfig {
    /// Number of convolution layers.
    pub depth: usize,
    /// Feature maps in hidden layers.
    pub channels: usize,
    /// Spatial kernel size (odd).
    pub kernel: usize,
    /// Predict the noise and subtract it from the input.
    pub residual: bool,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            depth: 5,
            channels: 16,
            kernel: 3,
            residual: true,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth < 2 {
            return Err(Error::param("depth", format!("must be >= 2, got {}", self.depth)));
        }
        if self.channels == 0 {
            return Err(Error::param("channels", "must be >= 1"));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::param("kernel", format!("must be odd, got {}", self.kernel)));
        }
        Ok(())
    }

    /// `(out_channels, in_channels)` of each layer, input first.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        (0..self.depth)
            .map(|l| {
                let in_ch = if l == 0 { 1 } else { self.channels };
                let out_ch = if l + 1 == self.depth { 1 } else { self.channels };
                (out_ch, in_ch)
            })
            .collect()
    }
}

/// One convolution layer; weights laid out `[out, in, k, k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn new(out_channels: usize, in_channels: usize, kernel: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if out_channels == 0 || in_channels == 0 || kernel % 2 == 0 {
            return Err(Error::Shape(format!(
                "bad layer shape out={out_channels} in={in_channels} k={kernel}"
            )));
        }
        if weights.len() != out_channels * in_channels * kernel * kernel || bias.len() != out_channels {
            return Err(Error::Shape(format!(
                "layer {out_channels}x{in_channels}x{kernel}x{kernel} got {} weights and {} biases",
                weights.len(),
                bias.len()
            )));
        }
        Ok(Self {
            out_channels,
            in_channels,
            kernel,
            weights,
            bias,
        })
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// How the parameters were initialized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InitRecord {
    pub scheme: String,
    pub seed: u64,
}

/// Trainable parameters plus the residual flag they are evaluated with.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    pub layers: Vec<Layer>,
    pub residual: bool,
    pub init: InitRecord,
}

/// Rounds to the nearest `f32`, keeping parameters storable without loss.
#[inline]
pub(crate) fn to_f32_grid(v: f64) -> f64 {
    v as f32 as f64
}

/// He-normal initialization: weights `N(0, 2/fan_in)` (rounded to `f32`),
/// biases zero. Layer `l` draws from `SeededStream::from_seed(seed).child(0).child(l)`.
pub fn net_init(config: &NetConfig, seed: u64) -> Result<NetParams> {
    config.validate()?;
    let root = SeededStream::from_seed(seed).child(0);
    let k = config.kernel;
    let layers = config
        .layer_shapes()
        .into_iter()
        .enumerate()
        .map(|(l, (out_ch, in_ch))| {
            let fan_in = (in_ch * k * k) as f64;
            let std = (2.0 / fan_in).sqrt();
            let mut rng = root.child(l as u64).rng();
            let weights = (0..out_ch * in_ch * k * k)
                .map(|_| to_f32_grid(std * rng.sample::<f64, _>(StandardNormal)))
                .collect();
            Layer::new(out_ch, in_ch, k, weights, vec![0.0; out_ch])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NetParams {
        layers,
        residual: config.residual,
        init: InitRecord {
            scheme: "he_normal".into(),
            seed,
        },
    })
}

impl NetParams {
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Checks the layers against `config`, naming the first mismatching layer.
    pub fn check_config(&self, config: &NetConfig) -> Result<()> {
        config.validate()?;
        let expected = config.layer_shapes();
        let k = config.kernel;
        for (i, (out_ch, in_ch)) in expected.iter().copied().enumerate() {
            let Some(layer) = self.layers.get(i) else {
                return Err(Error::Shape(format!(
                    "layer {i}: missing, config expects {out_ch}x{in_ch}x{k}x{k}"
                )));
            };
            if (layer.out_channels, layer.in_channels, layer.kernel) != (out_ch, in_ch, k) {
                return Err(Error::Shape(format!(
                    "layer {i}: found {}x{}x{k2}x{k2}, config expects {out_ch}x{in_ch}x{k}x{k}",
                    layer.out_channels,
                    layer.in_channels,
                    k2 = layer.kernel
                )));
            }
        }
        if self.layers.len() > expected.len() {
            let i = expected.len();
            return Err(Error::Shape(format!(
                "layer {i}: present in parameters but config has depth {}",
                expected.len()
            )));
        }
        Ok(())
    }

    /// Checks that consecutive layers chain and the net maps 1 channel to 1.
    fn check_chain(&self) -> Result<()> {
        let first = self
            .layers
            .first()
            .ok_or_else(|| Error::Shape("network has no layers".into()))?;
        if first.in_channels != 1 || self.layers.last().map(|l| l.out_channels) != Some(1) {
            return Err(Error::Shape("network must map 1 channel to 1 channel".into()));
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[0].out_channels != pair[1].in_channels {
                return Err(Error::Shape(format!(
                    "layer {} outputs {} channels but layer {} expects {}",
                    i,
                    pair[0].out_channels,
                    i + 1,
                    pair[1].in_channels
                )));
            }
        }
        Ok(())
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            weights: self.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: self.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    /// Flat view of all parameters, layer by layer, weights before biases.
    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    /// Mutable access to the `index`-th parameter in [`NetParams::flat`] order.
    pub fn flat_mut(&mut self, mut index: usize) -> &mut f64 {
        for l in &mut self.layers {
            if index < l.weights.len() {
                return &mut l.weights[index];
            }
            index -= l.weights.len();
            if index < l.bias.len() {
                return &mut l.bias[index];
            }
            index -= l.bias.len();
        }
        panic!("parameter index out of range");
    }
}

/// Parameter gradients, shaped like [`NetParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.weights
            .iter_mut()
            .chain(self.biases.iter_mut())
            .flat_map(|v| v.iter_mut())
            .for_each(|x| *x *= s);
    }

    /// Flat view in [`NetParams::flat`] order.
    pub fn flat(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b).copied())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(&self.biases)
            .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// Intermediate values of one forward pass on one image.
pub(crate) struct Trace {
    h: usize,
    w: usize,
    /// im2col buffer of each layer's input.
    cols: Vec<Vec<f64>>,
    /// Pre-activation output of each layer.
    pre: Vec<Vec<f64>>,
    pub(crate) output: Vec<f64>,
}

/// Forward pass on one single-channel image plane of `h × w`.
pub(crate) fn forward_single(params: &NetParams, input: &[f64], h: usize, w: usize) -> Trace {
    let depth = params.layers.len();
    let mut cols = Vec::with_capacity(depth);
    let mut pre = Vec::with_capacity(depth);
    let mut act = input.to_vec();
    for (l, layer) in params.layers.iter().enumerate() {
        let (out, col) = conv::conv_forward(
            &act,
            layer.in_channels,
            h,
            w,
            &layer.weights,
            &layer.bias,
            layer.out_channels,
            layer.kernel,
        );
        cols.push(col);
        act = if l + 1 < depth {
            out.iter().map(|&v| v.max(0.0)).collect()
        } else {
            out.clone()
        };
        pre.push(out);
    }
    let output = if params.residual {
        input.iter().zip(&act).map(|(x, p)| x - p).collect()
    } else {
        act
    };
    Trace {
        h,
        w,
        cols,
        pre,
        output,
    }
}

/// Reverse pass for one image: accumulates into `grads`; returns the input
/// gradient when requested.
pub(crate) fn backward_single(
    params: &NetParams,
    trace: &Trace,
    upstream: &[f64],
    grads: &mut Gradients,
    need_input_grad: bool,
) -> Option<Vec<f64>> {
    let depth = params.layers.len();
    let (h, w) = (trace.h, trace.w);
    // d(last pre-activation)
    let mut grad: Vec<f64> = if params.residual {
        upstream.iter().map(|g| -g).collect()
    } else {
        upstream.to_vec()
    };
    let mut input_grad = None;
    for l in (0..depth).rev() {
        let layer = &params.layers[l];
        if l + 1 < depth {
            for (g, &p) in grad.iter_mut().zip(&trace.pre[l]) {
                if p <= 0.0 {
                    *g = 0.0;
                }
            }
        }
        let want_input = l > 0 || need_input_grad;
        let g_in = conv::conv_backward(
            &grad,
            &trace.cols[l],
            layer.in_channels,
            h,
            w,
            &layer.weights,
            layer.out_channels,
            layer.kernel,
            &mut grads.weights[l],
            &mut grads.biases[l],
            want_input,
        );
        if l > 0 {
            grad = g_in.expect("input gradient requested");
        } else {
            input_grad = g_in;
        }
    }
    if need_input_grad {
        let mut g = input_grad.expect("input gradient requested");
        if params.residual {
            g.iter_mut().zip(upstream).for_each(|(a, u)| *a += u);
        }
        Some(g)
    } else {
        None
    }
}

fn check_input(params: &NetParams, input: &Tensor4) -> Result<()> {
    params.check_chain()?;
    if input.dims[1] != 1 {
        return Err(Error::Shape(format!(
            "network expects 1 input channel, got {}",
            input.dims[1]
        )));
    }
    Ok(())
}

/// Applies the network to every item of a `(n, 1, h, w)` batch.
pub fn net_forward(params: &NetParams, input: &Tensor4) -> Result<Tensor4> {
    check_input(params, input)?;
    let [n, _, h, w] = input.dims;
    let mut data = Vec::with_capacity(input.data.len());
    for i in 0..n {
        data.extend(forward_single(params, input.item(i), h, w).output);
    }
    Ok(Tensor4 {
        dims: input.dims,
        data,
    })
}

/// Gradients of `Σ upstream ⊙ net(input)` with respect to parameters and input.
pub fn net_backward(params: &NetParams, input: &Tensor4, upstream: &Tensor4) -> Result<(Gradients, Tensor4)> {
    check_input(params, input)?;
    if upstream.dims != input.dims {
        return Err(Error::Shape(format!(
            "upstream gradient {:?} does not match output {:?}",
            upstream.dims, input.dims
        )));
    }
    let [n, _, h, w] = input.dims;
    let mut grads = params.zero_gradients();
    let mut input_grad = Vec::with_capacity(input.data.len());
    for i in 0..n {
        let trace = forward_single(params, input.item(i), h, w);
        let g = backward_single(params, &trace, upstream.item(i), &mut grads, true)
            .expect("input gradient requested");
        input_grad.extend(g);
    }
    Ok((
        grads,
        Tensor4 {
            dims: input.dims,
            data: input_grad,
        },
    ))
}

/// Adapts trained parameters to the [`Denoiser`] interface.
#[derive(Debug, Clone)]
pub struct NetDenoiser<'a> {
    params: &'a NetParams,
}

impl<'a> NetDenoiser<'a> {
    pub fn new(params: &'a NetParams) -> Result<Self> {
        params.check_chain()?;
        Ok(Self { params })
    }
}

impl Denoiser for NetDenoiser<'_> {
    fn name(&self) -> String {
        format!("dncnn{}", self.params.layers.len())
    }

    fn denoise(&self, y: &Image) -> Result<Image> {
        let (w, h) = y.dims();
        let out = forward_single(self.params, y.data(), h, w).output;
        Ok(Image::from_vec_unchecked(w, h, out))
    }
}
