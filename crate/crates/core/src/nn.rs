//! Feed-forward layers with explicit forward/backward passes.
//!
//! Batched tensors carry the batch as their leading dimension: dense and
//! PReLU layers accept `[N, D]`, convolution and pooling accept
//! `[N, C, H, W]`. Backward passes take whatever the matching forward pass
//! needs as arguments; no layer keeps mutable state between calls.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::{axpy, dot, Tensor};

pub const PRELU_INIT_SLOPE: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerSpec {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    /// 2×2 max pooling with stride 2; odd trailing rows/columns are dropped.
    MaxPool2x2,
    /// One learnable slope per channel (or a single shared slope).
    Prelu {
        channels: usize,
    },
    Flatten,
}

impl LayerSpec {
    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let bad = |expected: String| Err(Error::shape(format!("{self:?}"), expected, input));
        match *self {
            LayerSpec::Dense { inputs, outputs } => match input {
                [d] if *d == inputs => Ok(vec![outputs]),
                _ => bad(format!("[{inputs}]")),
            },
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => match *input {
                [c, h, w] if c == in_channels && kernel > 0 && stride > 0 => {
                    if h + 2 * padding < kernel || w + 2 * padding < kernel {
                        return bad(format!("spatial extent >= kernel {kernel} after padding"));
                    }
                    let ho = (h + 2 * padding - kernel) / stride + 1;
                    let wo = (w + 2 * padding - kernel) / stride + 1;
                    Ok(vec![out_channels, ho, wo])
                }
                _ => bad(format!("[{in_channels}, H, W]")),
            },
            LayerSpec::MaxPool2x2 => match *input {
                [c, h, w] if h >= 2 && w >= 2 => Ok(vec![c, h / 2, w / 2]),
                _ => bad("[C, H>=2, W>=2]".into()),
            },
            LayerSpec::Prelu { channels } => match input.first() {
                Some(&c) if channels == c || channels == 1 => Ok(input.to_vec()),
                _ => bad(format!("leading extent {channels} (or a shared slope)")),
            },
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    /// Per-sample input shape, e.g. `[1, 28, 28]` or `[2]`.
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(input_shape: Vec<usize>, layers: Vec<LayerSpec>) -> Result<Self> {
        let spec = NetworkSpec {
            input_shape,
            layers,
        };
        spec.feature_dim()?;
        Ok(spec)
    }

    /// Shapes after every layer, starting with the input shape.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shapes = vec![self.input_shape.clone()];
        for layer in &self.layers {
            let next = layer.output_shape(shapes.last().unwrap())?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn output_shape(&self) -> Result<Vec<usize>> {
        Ok(self.shapes()?.pop().unwrap())
    }

    /// Width `D` of the feature vector fed to the loss.
    pub fn feature_dim(&self) -> Result<usize> {
        match self.output_shape()?[..] {
            [d] => Ok(d),
            ref other => Err(Error::InvalidNetwork(format!(
                "network must end in a flat feature vector, ends in {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    Weight,
    Bias,
    Slope,
}

impl ParamRole {
    /// Weight decay applies to weights and PReLU slopes, never to biases.
    pub fn decays(self) -> bool {
        !matches!(self, ParamRole::Bias)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams {
    Dense { weight: Tensor, bias: Tensor },
    Conv { weight: Tensor, bias: Tensor },
    Prelu { slopes: Tensor },
    None,
}

impl LayerParams {
    fn zeros_like(&self) -> LayerParams {
        let z = |t: &Tensor| Tensor::zeros(t.shape());
        match self {
            LayerParams::Dense { weight, bias } => LayerParams::Dense {
                weight: z(weight),
                bias: z(bias),
            },
            LayerParams::Conv { weight, bias } => LayerParams::Conv {
                weight: z(weight),
                bias: z(bias),
            },
            LayerParams::Prelu { slopes } => LayerParams::Prelu { slopes: z(slopes) },
            LayerParams::None => LayerParams::None,
        }
    }
}

/// Parameters of every layer, in layer order. Also used for gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub layers: Vec<LayerParams>,
}

impl NetworkParams {
    pub fn zeros_like(&self) -> NetworkParams {
        NetworkParams {
            layers: self.layers.iter().map(LayerParams::zeros_like).collect(),
        }
    }

    pub fn tensors(&self) -> Vec<(ParamRole, &Tensor)> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                LayerParams::Dense { weight, bias } | LayerParams::Conv { weight, bias } => {
                    out.push((ParamRole::Weight, weight));
                    out.push((ParamRole::Bias, bias));
                }
                LayerParams::Prelu { slopes } => out.push((ParamRole::Slope, slopes)),
                LayerParams::None => {}
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(ParamRole, &mut Tensor)> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                LayerParams::Dense { weight, bias } | LayerParams::Conv { weight, bias } => {
                    out.push((ParamRole::Weight, weight));
                    out.push((ParamRole::Bias, bias));
                }
                LayerParams::Prelu { slopes } => out.push((ParamRole::Slope, slopes)),
                LayerParams::None => {}
            }
        }
        out
    }
}

/// Fan-in scaled Gaussian for a weight tensor, `std = sqrt(2 / fan_in)`.
pub fn he_normal(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let std = (2.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("finite std");
    let len = shape.iter().product();
    let data = (0..len).map(|_| normal.sample(rng)).collect();
    Tensor::from_vec(shape, data).expect("length matches shape")
}

/// He-initialised weights, zero biases and PReLU slopes of 0.25.
pub fn init_params(spec: &NetworkSpec, seed: u64) -> Result<NetworkParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    init_params_with(spec, &mut rng)
}

pub fn init_params_with(spec: &NetworkSpec, rng: &mut ChaCha8Rng) -> Result<NetworkParams> {
    spec.shapes()?;
    let layers = spec
        .layers
        .iter()
        .map(|layer| match *layer {
            LayerSpec::Dense { inputs, outputs } => LayerParams::Dense {
                weight: he_normal(&[outputs, inputs], inputs, rng),
                bias: Tensor::zeros(&[outputs]),
            },
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => LayerParams::Conv {
                weight: he_normal(
                    &[out_channels, in_channels, kernel, kernel],
                    in_channels * kernel * kernel,
                    rng,
                ),
                bias: Tensor::zeros(&[out_channels]),
            },
            LayerSpec::Prelu { channels } => LayerParams::Prelu {
                slopes: Tensor::filled(&[channels], PRELU_INIT_SLOPE),
            },
            LayerSpec::MaxPool2x2 | LayerSpec::Flatten => LayerParams::None,
        })
        .collect();
    Ok(NetworkParams { layers })
}

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

pub fn dense_forward(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (n, din) = x.matrix_dims("dense input")?;
    let (dout, win) = weight.matrix_dims("dense weight")?;
    if win != din {
        return Err(Error::shape("dense weight columns", din, win));
    }
    if bias.shape() != [dout] {
        return Err(Error::shape("dense bias", [dout], bias.shape()));
    }
    let mut y = Tensor::zeros(&[n, dout]);
    for i in 0..n {
        let xi = x.row(i);
        let yi = y.row_mut(i);
        for (o, out) in yi.iter_mut().enumerate() {
            *out = dot(weight.row(o), xi) + bias.data()[o];
        }
    }
    Ok(y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

pub fn dense_backward(grad_out: &Tensor, x: &Tensor, weight: &Tensor) -> Result<DenseGrads> {
    let (n, din) = x.matrix_dims("dense input")?;
    let (dout, win) = weight.matrix_dims("dense weight")?;
    if win != din {
        return Err(Error::shape("dense weight columns", din, win));
    }
    if grad_out.shape() != [n, dout] {
        return Err(Error::shape("dense grad_out", [n, dout], grad_out.shape()));
    }
    let mut gx = Tensor::zeros(&[n, din]);
    let mut gw = Tensor::zeros(&[dout, din]);
    let mut gb = Tensor::zeros(&[dout]);
    for i in 0..n {
        let g = grad_out.row(i);
        let xi = x.row(i);
        for (o, &go) in g.iter().enumerate() {
            if go == 0.0 {
                continue;
            }
            axpy(go, weight.row(o), gx.row_mut(i));
            axpy(go, xi, gw.row_mut(o));
            gb.data_mut()[o] += go;
        }
    }
    Ok(DenseGrads {
        input: gx,
        weight: gw,
        bias: gb,
    })
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

fn dims4(t: &Tensor, context: &str) -> Result<[usize; 4]> {
    match *t.shape() {
        [a, b, c, d] => Ok([a, b, c, d]),
        _ => Err(Error::shape(context, "rank-4 tensor", t.shape())),
    }
}

/// Output positions `ox` whose input column `ox·s + kx − p` lies in `[0, w)`.
#[inline]
fn valid_range(kx: usize, stride: usize, padding: usize, w: usize, wo: usize) -> (usize, usize) {
    // first: smallest ox with ox·s + kx >= p
    let first = if kx >= padding {
        0
    } else {
        (padding - kx).div_ceil(stride)
    };
    // end: one past the largest ox with ox·s + kx − p <= w − 1
    let end = if w + padding < kx + 1 {
        0
    } else {
        ((w + padding - kx - 1) / stride + 1).min(wo)
    };
    (first, end.max(first))
}

fn conv_geometry(
    x: &Tensor,
    weight: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<([usize; 4], [usize; 4], usize, usize)> {
    let xd = dims4(x, "conv input")?;
    let wd = dims4(weight, "conv weight")?;
    let [_, c, h, w] = xd;
    let [_, wc, kh, kw] = wd;
    if wc != c {
        return Err(Error::shape("conv input channels", wc, c));
    }
    if kh != kw || kh == 0 || stride == 0 {
        return Err(Error::shape("conv kernel", "square kernel and stride >= 1", wd));
    }
    if h + 2 * padding < kh || w + 2 * padding < kw {
        return Err(Error::shape("conv input extent", format!(">= {kh} after padding"), xd));
    }
    let ho = (h + 2 * padding - kh) / stride + 1;
    let wo = (w + 2 * padding - kw) / stride + 1;
    Ok((xd, wd, ho, wo))
}

/// Direct convolution: `[N, C, H, W] ⊛ [O, C, K, K] + b → [N, O, Ho, Wo]`.
pub fn conv2d_forward(
    x: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let ([n, c, h, w], [o, _, k, _], ho, wo) = conv_geometry(x, weight, stride, padding)?;
    if bias.shape() != [o] {
        return Err(Error::shape("conv bias", [o], bias.shape()));
    }
    let mut y = Tensor::zeros(&[n, o, ho, wo]);
    let xs = x.data();
    let ws = weight.data();
    let ys = y.data_mut();
    for ni in 0..n {
        for oc in 0..o {
            let out = &mut ys[(ni * o + oc) * ho * wo..(ni * o + oc + 1) * ho * wo];
            out.fill(bias.data()[oc]);
            for ci in 0..c {
                let plane = &xs[(ni * c + ci) * h * w..(ni * c + ci + 1) * h * w];
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = ws[((oc * c + ci) * k + ky) * k + kx];
                        let (first, end) = valid_range(kx, stride, padding, w, wo);
                        for oy in 0..ho {
                            let iy = oy * stride + ky;
                            if iy < padding || iy - padding >= h {
                                continue;
                            }
                            let in_row = &plane[(iy - padding) * w..(iy - padding + 1) * w];
                            let out_row = &mut out[oy * wo..(oy + 1) * wo];
                            if stride == 1 {
                                let shift = first + kx - padding;
                                let len = end - first;
                                axpy(wv, &in_row[shift..shift + len], &mut out_row[first..end]);
                            } else {
                                for ox in first..end {
                                    out_row[ox] += wv * in_row[ox * stride + kx - padding];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

pub fn conv2d_backward(
    grad_out: &Tensor,
    x: &Tensor,
    weight: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<ConvGrads> {
    let ([n, c, h, w], [o, _, k, _], ho, wo) = conv_geometry(x, weight, stride, padding)?;
    if grad_out.shape() != [n, o, ho, wo] {
        return Err(Error::shape("conv grad_out", [n, o, ho, wo], grad_out.shape()));
    }
    let mut gx = Tensor::zeros(x.shape());
    let mut gw = Tensor::zeros(weight.shape());
    let mut gb = Tensor::zeros(&[o]);
    let xs = x.data();
    let ws = weight.data();
    let gs = grad_out.data();
    {
        let gxs = gx.data_mut();
        let gws = gw.data_mut();
        let gbs = gb.data_mut();
        for ni in 0..n {
            for oc in 0..o {
                let g = &gs[(ni * o + oc) * ho * wo..(ni * o + oc + 1) * ho * wo];
                gbs[oc] += g.iter().sum::<f64>();
                for ci in 0..c {
                    let base = (ni * c + ci) * h * w;
                    for ky in 0..k {
                        for kx in 0..k {
                            let widx = ((oc * c + ci) * k + ky) * k + kx;
                            let wv = ws[widx];
                            let (first, end) = valid_range(kx, stride, padding, w, wo);
                            let mut acc = 0.0;
                            for oy in 0..ho {
                                let iy = oy * stride + ky;
                                if iy < padding || iy - padding >= h {
                                    continue;
                                }
                                let row = base + (iy - padding) * w;
                                let g_row = &g[oy * wo..(oy + 1) * wo];
                                if stride == 1 {
                                    let shift = row + first + kx - padding;
                                    let len = end - first;
                                    acc += dot(&g_row[first..end], &xs[shift..shift + len]);
                                    axpy(wv, &g_row[first..end], &mut gxs[shift..shift + len]);
                                } else {
                                    for ox in first..end {
                                        let ix = row + ox * stride + kx - padding;
                                        acc += g_row[ox] * xs[ix];
                                        gxs[ix] += wv * g_row[ox];
                                    }
                                }
                            }
                            gws[widx] += acc;
                        }
                    }
                }
            }
        }
    }
    Ok(ConvGrads {
        input: gx,
        weight: gw,
        bias: gb,
    })
}

// ---------------------------------------------------------------------------
// Pooling
// ---------------------------------------------------------------------------

/// 2×2 max pooling, stride 2. Returns the output and, per output element,
/// the flat input index that won (first maximum in row-major order).
pub fn maxpool_forward(x: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let [n, c, h, w] = dims4(x, "maxpool input")?;
    if h < 2 || w < 2 {
        return Err(Error::shape("maxpool input extent", ">= 2x2", x.shape()));
    }
    let (ho, wo) = (h / 2, w / 2);
    let mut y = Tensor::zeros(&[n, c, ho, wo]);
    let mut argmax = Vec::with_capacity(n * c * ho * wo);
    let xs = x.data();
    let ys = y.data_mut();
    let mut out = 0;
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..ho {
            for ox in 0..wo {
                let top = base + 2 * oy * w + 2 * ox;
                let mut best = top;
                for cand in [top + 1, top + w, top + w + 1] {
                    if xs[cand] > xs[best] {
                        best = cand;
                    }
                }
                ys[out] = xs[best];
                argmax.push(best);
                out += 1;
            }
        }
    }
    Ok((y, argmax))
}

pub fn maxpool_backward(grad_out: &Tensor, argmax: &[usize], input_shape: &[usize]) -> Result<Tensor> {
    if grad_out.len() != argmax.len() {
        return Err(Error::shape("maxpool grad_out", argmax.len(), grad_out.len()));
    }
    let mut gx = Tensor::zeros(input_shape);
    let gxs = gx.data_mut();
    for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
        gxs[idx] += g;
    }
    Ok(gx)
}

// ---------------------------------------------------------------------------
// PReLU
// ---------------------------------------------------------------------------

/// Channel of each element: dimension 1 of `[N, C, ...]`.
fn prelu_layout(x: &Tensor, slopes: &Tensor) -> Result<(usize, usize, usize)> {
    if x.rank() < 2 {
        return Err(Error::shape("prelu input", "rank >= 2", x.shape()));
    }
    let c = x.shape()[1];
    let inner: usize = x.shape()[2..].iter().product();
    let s = slopes.len();
    if slopes.rank() != 1 || (s != c && s != 1) {
        return Err(Error::shape("prelu slopes", format!("[{c}] or [1]"), slopes.shape()));
    }
    Ok((x.dim0(), c, inner))
}

pub fn prelu_forward(x: &Tensor, slopes: &Tensor) -> Result<Tensor> {
    let (n, c, inner) = prelu_layout(x, slopes)?;
    let shared = slopes.len() == 1;
    let mut y = x.clone();
    let ys = y.data_mut();
    for ni in 0..n {
        for ci in 0..c {
            let a = slopes.data()[if shared { 0 } else { ci }];
            let start = (ni * c + ci) * inner;
            for v in &mut ys[start..start + inner] {
                if *v <= 0.0 {
                    *v *= a;
                }
            }
        }
    }
    Ok(y)
}

pub fn prelu_backward(grad_out: &Tensor, x: &Tensor, slopes: &Tensor) -> Result<(Tensor, Tensor)> {
    let (n, c, inner) = prelu_layout(x, slopes)?;
    if grad_out.shape() != x.shape() {
        return Err(Error::shape("prelu grad_out", x.shape(), grad_out.shape()));
    }
    let shared = slopes.len() == 1;
    let mut gx = grad_out.clone();
    let mut gs = Tensor::zeros(slopes.shape());
    let xs = x.data();
    let gxs = gx.data_mut();
    for ni in 0..n {
        for ci in 0..c {
            let si = if shared { 0 } else { ci };
            let a = slopes.data()[si];
            let start = (ni * c + ci) * inner;
            let mut acc = 0.0;
            for idx in start..start + inner {
                if xs[idx] <= 0.0 {
                    acc += gxs[idx] * xs[idx];
                    gxs[idx] *= a;
                }
            }
            gs.data_mut()[si] += acc;
        }
    }
    Ok((gx, gs))
}

// ---------------------------------------------------------------------------
// Flatten
// ---------------------------------------------------------------------------

pub fn flatten_forward(x: &Tensor) -> Result<Tensor> {
    let n = x.dim0();
    let w = x.row_len();
    x.clone().reshape(&[n, w])
}

pub fn flatten_backward(grad_out: &Tensor, input_shape: &[usize]) -> Result<Tensor> {
    grad_out.clone().reshape(input_shape)
}

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

/// Per-call record of what each layer saw on the way forward.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Tensor>,
    argmax: Vec<Option<Vec<usize>>>,
}

fn check_batch_shape(spec: &NetworkSpec, input: &Tensor) -> Result<()> {
    if input.rank() != spec.input_shape.len() + 1 || input.shape()[1..] != spec.input_shape[..] {
        let mut expected = vec![input.dim0()];
        expected.extend_from_slice(&spec.input_shape);
        return Err(Error::shape("network input", expected, input.shape()));
    }
    Ok(())
}

fn layer_mismatch(index: usize) -> Error {
    Error::InvalidNetwork(format!("parameters of layer {index} do not match its spec"))
}

/// Runs the stack and returns `[N, D]` features plus the backward cache.
pub fn network_forward(
    spec: &NetworkSpec,
    params: &NetworkParams,
    input: &Tensor,
) -> Result<(Tensor, ForwardCache)> {
    check_batch_shape(spec, input)?;
    if params.layers.len() != spec.layers.len() {
        return Err(Error::InvalidNetwork(format!(
            "{} layer specs but {} parameter blocks",
            spec.layers.len(),
            params.layers.len()
        )));
    }
    let mut cache = ForwardCache {
        inputs: Vec::with_capacity(spec.layers.len()),
        argmax: Vec::with_capacity(spec.layers.len()),
    };
    let mut current = input.clone();
    for (idx, (layer, p)) in spec.layers.iter().zip(&params.layers).enumerate() {
        let mut argmax = None;
        let next = match (layer, p) {
            (LayerSpec::Dense { .. }, LayerParams::Dense { weight, bias }) => {
                dense_forward(&current, weight, bias)?
            }
            (
                LayerSpec::Conv2d { stride, padding, .. },
                LayerParams::Conv { weight, bias },
            ) => conv2d_forward(&current, weight, bias, *stride, *padding)?,
            (LayerSpec::MaxPool2x2, LayerParams::None) => {
                let (y, a) = maxpool_forward(&current)?;
                argmax = Some(a);
                y
            }
            (LayerSpec::Prelu { .. }, LayerParams::Prelu { slopes }) => prelu_forward(&current, slopes)?,
            (LayerSpec::Flatten, LayerParams::None) => flatten_forward(&current)?,
            _ => return Err(layer_mismatch(idx)),
        };
        if !next.is_finite() {
            return Err(Error::NonFiniteActivation { layer: idx });
        }
        cache.inputs.push(std::mem::replace(&mut current, next));
        cache.argmax.push(argmax);
    }
    Ok((current, cache))
}

/// Forward pass without keeping the cache.
pub fn network_features(spec: &NetworkSpec, params: &NetworkParams, input: &Tensor) -> Result<Tensor> {
    Ok(network_forward(spec, params, input)?.0)
}

/// Gradients of every parameter and of the input, given `∂L/∂features`.
pub fn network_backward(
    spec: &NetworkSpec,
    params: &NetworkParams,
    cache: &ForwardCache,
    grad_features: &Tensor,
) -> Result<(NetworkParams, Tensor)> {
    let mut grads = params.zeros_like();
    let mut g = grad_features.clone();
    for idx in (0..spec.layers.len()).rev() {
        let x = &cache.inputs[idx];
        let next = match (&spec.layers[idx], &params.layers[idx], &mut grads.layers[idx]) {
            (
                LayerSpec::Dense { .. },
                LayerParams::Dense { weight, .. },
                LayerParams::Dense {
                    weight: gw,
                    bias: gb,
                },
            ) => {
                let d = dense_backward(&g, x, weight)?;
                *gw = d.weight;
                *gb = d.bias;
                d.input
            }
            (
                LayerSpec::Conv2d { stride, padding, .. },
                LayerParams::Conv { weight, .. },
                LayerParams::Conv {
                    weight: gw,
                    bias: gb,
                },
            ) => {
                let d = conv2d_backward(&g, x, weight, *stride, *padding)?;
                *gw = d.weight;
                *gb = d.bias;
                d.input
            }
            (LayerSpec::MaxPool2x2, LayerParams::None, _) => {
                let argmax = cache.argmax[idx].as_ref().ok_or_else(|| layer_mismatch(idx))?;
                maxpool_backward(&g, argmax, x.shape())?
            }
            (LayerSpec::Prelu { .. }, LayerParams::Prelu { slopes }, LayerParams::Prelu { slopes: gs }) => {
                let (gx, ga) = prelu_backward(&g, x, slopes)?;
                *gs = ga;
                gx
            }
            (LayerSpec::Flatten, LayerParams::None, _) => flatten_backward(&g, x.shape())?,
            _ => return Err(layer_mismatch(idx)),
        };
        g = next;
    }
    Ok((grads, g))
}
