use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore};

use super::kernels::{self, ConvGeom};
use super::{Architecture, Batch, LayerSpec, NnError, Real, Shape};
use crate::math;

/// Weights and biases of one parametric layer.
///
/// Conv weights are laid out `[out_c][in_c][ky][kx]`, dense weights
/// `[units][inputs]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Params<S> {
    pub weights: Vec<S>,
    pub bias: Vec<S>,
}

impl<S: Real> Params<S> {
    fn zeros_like(&self) -> Self {
        Self { weights: kernels::zeros(self.weights.len()), bias: kernels::zeros(self.bias.len()) }
    }

    pub fn len(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &S> {
        self.weights.iter().chain(&self.bias)
    }
}

/// Per-layer parameter gradients, aligned with the network's layers.
/// Frozen layers carry all-zero buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<S> {
    pub layers: Vec<Option<Params<S>>>,
}

enum Cache<S> {
    Input(Vec<S>),
    Argmax(Vec<u32>),
    Mask(Vec<S>),
    Output(Vec<S>),
    Nothing,
}

struct Trace<S> {
    n: usize,
    caches: Vec<Cache<S>>,
    output: Vec<S>,
}

/// A feed-forward network over the layer vocabulary of [`LayerSpec`].
pub struct Network<S: Real = f64> {
    arch: Architecture,
    shapes: Vec<Shape>,
    params: Vec<Option<Params<S>>>,
    frozen: Vec<bool>,
    trace: Option<Trace<S>>,
}

impl<S: Real> Clone for Network<S> {
    fn clone(&self) -> Self {
        Self {
            arch: self.arch.clone(),
            shapes: self.shapes.clone(),
            params: self.params.clone(),
            frozen: self.frozen.clone(),
            trace: None,
        }
    }
}

impl<S: Real> core::fmt::Debug for Network<S> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Network").field("arch", &self.arch.canonical()).field("frozen", &self.frozen).finish()
    }
}

fn param_sizes(spec: &LayerSpec, input: Shape) -> Option<(usize, usize, usize)> {
    match *spec {
        LayerSpec::Conv2d { filters, kernel } => {
            let fan_in = input.channels * kernel * kernel;
            Some((filters * fan_in, filters, fan_in))
        }
        LayerSpec::Dense { units } => Some((units * input.len(), units, input.len())),
        _ => None,
    }
}

impl<S: Real> Network<S> {
    /// He-uniform initialization for every parametric layer except the
    /// classifier head, which starts at zero so an untrained network
    /// predicts the uniform distribution.
    pub fn new<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Result<Self, NnError> {
        let shapes = arch.shapes()?;
        let head = arch.head_index();
        let mut params = Vec::with_capacity(arch.layers.len());
        for (i, spec) in arch.layers.iter().enumerate() {
            params.push(param_sizes(spec, shapes[i]).map(|(nw, nb, fan_in)| {
                if Some(i) == head {
                    return Params { weights: kernels::zeros(nw), bias: kernels::zeros(nb) };
                }
                let limit = math::sqrt(6.0 / fan_in as f64);
                Params {
                    weights: (0..nw).map(|_| S::from_f64(rng.random_range(-limit..limit))).collect(),
                    bias: kernels::zeros(nb),
                }
            }));
        }
        let frozen = vec![false; arch.layers.len()];
        Ok(Self { arch, shapes, params, frozen, trace: None })
    }

    /// Assembles a network from stored parameters.
    pub fn from_parts(arch: Architecture, params: Vec<Option<Params<S>>>, frozen: Vec<bool>) -> Result<Self, NnError> {
        let shapes = arch.shapes()?;
        if params.len() != arch.layers.len() || frozen.len() != arch.layers.len() {
            return Err(NnError::InvalidArchitecture("parameter list does not match layers"));
        }
        for (i, (spec, p)) in arch.layers.iter().zip(&params).enumerate() {
            match (param_sizes(spec, shapes[i]), p) {
                (None, None) => {}
                (Some((nw, nb, _)), Some(p)) if p.weights.len() == nw && p.bias.len() == nb => {}
                (Some((nw, nb, _)), Some(p)) => {
                    return Err(NnError::ShapeMismatch { expected: nw + nb, actual: p.len() })
                }
                _ => return Err(NnError::InvalidArchitecture("parameter presence does not match layers")),
            }
        }
        Ok(Self { arch, shapes, params, frozen, trace: None })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn input_shape(&self) -> Shape {
        self.arch.input
    }

    pub fn output_len(&self) -> usize {
        self.shapes.last().map_or(0, Shape::len)
    }

    /// Input shape of each layer followed by the output shape.
    pub fn shapes(&self) -> &[Shape] {
        &self.shapes
    }

    pub fn layer_params(&self, i: usize) -> Option<&Params<S>> {
        self.params.get(i).and_then(Option::as_ref)
    }

    pub fn layer_params_mut(&mut self, i: usize) -> Option<&mut Params<S>> {
        self.params.get_mut(i).and_then(Option::as_mut)
    }

    pub fn params(&self) -> &[Option<Params<S>>] {
        &self.params
    }

    pub fn is_frozen(&self, i: usize) -> bool {
        self.frozen.get(i).copied().unwrap_or(false)
    }

    pub fn frozen_flags(&self) -> &[bool] {
        &self.frozen
    }

    pub fn set_frozen(&mut self, i: usize, frozen: bool) {
        if let Some(f) = self.frozen.get_mut(i) {
            *f = frozen;
        }
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().flatten().map(Params::len).sum()
    }

    /// Converts parameters to another scalar type.
    pub fn cast<T: Real>(&self) -> Network<T> {
        let params = self
            .params
            .iter()
            .map(|p| {
                p.as_ref().map(|p| Params {
                    weights: p.weights.iter().map(|v| T::from_f64(v.as_f64())).collect(),
                    bias: p.bias.iter().map(|v| T::from_f64(v.as_f64())).collect(),
                })
            })
            .collect();
        Network {
            arch: self.arch.clone(),
            shapes: self.shapes.clone(),
            params,
            frozen: self.frozen.clone(),
            trace: None,
        }
    }

    /// Inference-mode forward pass (dropout is the identity).
    pub fn forward(&self, batch: &Batch<S>) -> Result<Batch<S>, NnError> {
        self.forward_until(batch, self.arch.layers.len())
    }

    /// Inference-mode activations after the first `layers` layers.
    pub fn forward_until(&self, batch: &Batch<S>, layers: usize) -> Result<Batch<S>, NnError> {
        self.check_input(batch)?;
        let layers = layers.min(self.arch.layers.len());
        let n = batch.len();
        let mut cur = batch.data().to_vec();
        let mut scratch = Vec::new();
        for i in 0..layers {
            cur = self.layer_forward(i, n, cur, None, None, &mut scratch);
        }
        Batch::new(self.shapes[layers], cur)
    }

    /// Training-mode forward pass. Dropout masks are drawn from `rng`, and
    /// the activations needed by [`Network::backward`] are recorded.
    pub fn forward_train<R: RngCore>(&mut self, batch: &Batch<S>, rng: &mut R) -> Result<Batch<S>, NnError> {
        self.check_input(batch)?;
        let n = batch.len();
        let mut caches = Vec::with_capacity(self.arch.layers.len());
        let mut cur = batch.data().to_vec();
        let mut scratch = Vec::new();
        for i in 0..self.arch.layers.len() {
            let mut cache = Cache::Nothing;
            cur = self.layer_forward(i, n, cur, Some(&mut *rng as &mut dyn RngCore), Some(&mut cache), &mut scratch);
            caches.push(cache);
        }
        self.trace = Some(Trace { n, caches, output: cur.clone() });
        Batch::new(*self.shapes.last().unwrap(), cur)
    }

    fn check_input(&self, batch: &Batch<S>) -> Result<(), NnError> {
        if batch.shape() != self.arch.input {
            return Err(NnError::ShapeMismatch { expected: self.arch.input.len(), actual: batch.shape().len() });
        }
        Ok(())
    }

    fn layer_forward(
        &self,
        i: usize,
        n: usize,
        x: Vec<S>,
        rng: Option<&mut dyn RngCore>,
        cache: Option<&mut Cache<S>>,
        scratch: &mut Vec<S>,
    ) -> Vec<S> {
        let in_shape = self.shapes[i];
        let out_shape = self.shapes[i + 1];
        let (il, ol) = (in_shape.len(), out_shape.len());
        match self.arch.layers[i] {
            LayerSpec::Conv2d { filters, kernel } => {
                let p = self.params[i].as_ref().expect("conv params");
                let g = ConvGeom::new(in_shape, filters, kernel);
                let mut out = kernels::zeros(n * ol);
                for s in 0..n {
                    kernels::conv_forward(
                        &g,
                        &p.weights,
                        &p.bias,
                        &x[s * il..(s + 1) * il],
                        &mut out[s * ol..(s + 1) * ol],
                        scratch,
                    );
                }
                if let Some(c) = cache {
                    *c = Cache::Input(x);
                }
                out
            }
            LayerSpec::MaxPool2x2 => {
                let mut out = kernels::zeros(n * ol);
                let mut argmax = vec![0u32; n * ol];
                for s in 0..n {
                    kernels::maxpool_forward(
                        in_shape,
                        &x[s * il..(s + 1) * il],
                        &mut out[s * ol..(s + 1) * ol],
                        &mut argmax[s * ol..(s + 1) * ol],
                    );
                }
                if let Some(c) = cache {
                    *c = Cache::Argmax(argmax);
                }
                out
            }
            LayerSpec::Dropout { rate } => match (rng, cache) {
                (Some(rng), Some(c)) if rate > 0.0 => {
                    let keep = S::from_f64(1.0 / (1.0 - rate));
                    let mask: Vec<S> =
                        (0..x.len()).map(|_| if rng.random::<f64>() < rate { S::zero() } else { keep }).collect();
                    let out = x.iter().zip(&mask).map(|(&a, &m)| a * m).collect();
                    *c = Cache::Mask(mask);
                    out
                }
                _ => x,
            },
            LayerSpec::Flatten => x,
            LayerSpec::Dense { units } => {
                let p = self.params[i].as_ref().expect("dense params");
                let mut out = kernels::zeros(n * units);
                kernels::dense_forward(n, il, units, &p.weights, &p.bias, &x, &mut out);
                if let Some(c) = cache {
                    *c = Cache::Input(x);
                }
                out
            }
            LayerSpec::Relu => {
                let out: Vec<S> = x.into_iter().map(|v| v.max(S::zero())).collect();
                if let Some(c) = cache {
                    *c = Cache::Output(out.clone());
                }
                out
            }
            LayerSpec::Softmax => {
                let mut out = kernels::zeros(x.len());
                for (src, dst) in x.chunks(il).zip(out.chunks_mut(il)) {
                    kernels::softmax_row(src, dst);
                }
                if let Some(c) = cache {
                    *c = Cache::Output(out.clone());
                }
                out
            }
        }
    }

    /// Backpropagates `doutput` (gradient of the loss with respect to the
    /// network output) through the recorded forward pass.
    ///
    /// When `fused_softmax` is set and the final layer is a softmax,
    /// `doutput` is taken to already be the gradient with respect to the
    /// softmax input (the cross-entropy shortcut `p - y`).
    pub fn backward_from(&mut self, doutput: Vec<S>, fused_softmax: bool) -> Result<Gradients<S>, NnError> {
        let trace = self.trace.take().ok_or(NnError::NoForwardState)?;
        let n = trace.n;
        let expected = n * self.output_len();
        if doutput.len() != expected {
            return Err(NnError::ShapeMismatch { expected, actual: doutput.len() });
        }
        let first_param = self.arch.layers.iter().position(LayerSpec::has_params).unwrap_or(usize::MAX);
        let mut grads: Vec<Option<Params<S>>> =
            self.params.iter().map(|p| p.as_ref().map(Params::zeros_like)).collect();
        let mut grad = doutput;
        let mut scratch = Vec::new();
        let mut dcol = Vec::new();
        let last = self.arch.layers.len();
        for i in (0..last).rev() {
            if i < first_param {
                break;
            }
            let in_shape = self.shapes[i];
            let out_shape = self.shapes[i + 1];
            let (il, ol) = (in_shape.len(), out_shape.len());
            let need_dinput = i > first_param;
            let frozen = self.frozen[i];
            grad = match (&self.arch.layers[i], &trace.caches[i]) {
                (LayerSpec::Conv2d { filters, kernel }, Cache::Input(x)) => {
                    let p = self.params[i].as_ref().expect("conv params");
                    let g = ConvGeom::new(in_shape, *filters, *kernel);
                    let gp = grads[i].as_mut().expect("conv grads");
                    let mut dx = if need_dinput { kernels::zeros(n * il) } else { Vec::new() };
                    for s in 0..n {
                        let dw = (!frozen).then(|| (&mut gp.weights[..], &mut gp.bias[..]));
                        let din = need_dinput.then(|| &mut dx[s * il..(s + 1) * il]);
                        if dw.is_none() && din.is_none() {
                            continue;
                        }
                        kernels::conv_backward(
                            &g,
                            &p.weights,
                            &x[s * il..(s + 1) * il],
                            &grad[s * ol..(s + 1) * ol],
                            dw,
                            din,
                            &mut scratch,
                            &mut dcol,
                        );
                    }
                    dx
                }
                (LayerSpec::MaxPool2x2, Cache::Argmax(argmax)) => {
                    let mut dx = kernels::zeros(n * il);
                    for s in 0..n {
                        let d = &mut dx[s * il..(s + 1) * il];
                        for (o, &src) in argmax[s * ol..(s + 1) * ol].iter().enumerate() {
                            d[src as usize] = d[src as usize] + grad[s * ol + o];
                        }
                    }
                    dx
                }
                (LayerSpec::Dropout { .. }, Cache::Mask(mask)) => grad.iter().zip(mask).map(|(&g, &m)| g * m).collect(),
                (LayerSpec::Dropout { .. }, _) | (LayerSpec::Flatten, _) => grad,
                (LayerSpec::Dense { units }, Cache::Input(x)) => {
                    let p = self.params[i].as_ref().expect("dense params");
                    let gp = grads[i].as_mut().expect("dense grads");
                    let mut dx = if need_dinput { kernels::zeros(n * il) } else { Vec::new() };
                    kernels::dense_backward(
                        n,
                        il,
                        *units,
                        &p.weights,
                        x,
                        &grad,
                        (!frozen).then(|| (&mut gp.weights[..], &mut gp.bias[..])),
                        need_dinput.then_some(&mut dx[..]),
                    );
                    dx
                }
                (LayerSpec::Relu, Cache::Output(y)) => {
                    grad.iter().zip(y).map(|(&g, &v)| if v > S::zero() { g } else { S::zero() }).collect()
                }
                (LayerSpec::Softmax, Cache::Output(p)) => {
                    if fused_softmax && i + 1 == last {
                        grad
                    } else {
                        let mut dx = kernels::zeros(grad.len());
                        for ((g, pr), d) in grad.chunks(il).zip(p.chunks(il)).zip(dx.chunks_mut(il)) {
                            let dot = g.iter().zip(pr).fold(S::zero(), |a, (&x, &y)| a + x * y);
                            for ((dv, &gv), &pv) in d.iter_mut().zip(g).zip(pr) {
                                *dv = pv * (gv - dot);
                            }
                        }
                        dx
                    }
                }
                _ => return Err(NnError::NoForwardState),
            };
        }
        Ok(Gradients { layers: grads })
    }

    /// Output probabilities recorded by the last training forward pass.
    pub fn last_output(&self) -> Option<&[S]> {
        self.trace.as_ref().map(|t| &t.output[..])
    }

    /// Class probabilities for `f64` inputs, evaluated `chunk` samples at a
    /// time in inference mode.
    pub fn predict_proba(&self, inputs: &[&[f64]], chunk: usize) -> Result<Vec<Vec<f64>>, NnError> {
        let mut out = Vec::with_capacity(inputs.len());
        for group in inputs.chunks(chunk.max(1)) {
            let batch = Batch::from_samples(self.arch.input, group)?;
            out.extend(self.forward(&batch)?.to_rows());
        }
        Ok(out)
    }

    /// Copies every non-head parameter from `source` into `self`, leaving
    /// the head as freshly initialized, and optionally freezes the first
    /// convolution.
    pub fn transfer_from(mut self, source: &Network<S>, freeze_first_conv: bool) -> Result<Self, NnError> {
        if !self.arch.matches_except_head(&source.arch) {
            return Err(NnError::ArchitectureMismatch);
        }
        let head = self.arch.head_index();
        for i in 0..self.params.len() {
            if Some(i) == head {
                continue;
            }
            if let (Some(dst), Some(src)) = (self.params[i].as_mut(), source.params[i].as_ref()) {
                dst.clone_from(src);
            }
        }
        if freeze_first_conv {
            if let Some(c) = self.arch.first_conv_index() {
                self.frozen[c] = true;
            }
        }
        Ok(self)
    }
}
