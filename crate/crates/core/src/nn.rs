//! Fixed-topology multilayer perceptron.
//!
//! Hidden layers use ReLU; the output layer is either linear (critics) or
//! tanh (actor). Each layer computes `z = W x + b` with `W` stored as an
//! `(out_dim, in_dim)` matrix, so a batch `X` of shape `(batch, in_dim)` maps
//! to `X Wᵀ + b`.
//!
//! Gradients are exact reverse-mode derivatives of `outputᵀ · output_grad`
//! summed over the batch. All arithmetic is `f64`.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::{rng, Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    /// ReLU hidden layers, identity output.
    #[serde(rename = "linear-output")]
    LinearOutput,
    /// ReLU hidden layers, tanh output.
    #[serde(rename = "tanh-output")]
    TanhOutput,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    /// Shape `(out_dim, in_dim)`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LayerParams {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weight: Array2::zeros((out_dim, in_dim)),
            bias: Array1::zeros(out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }
}

/// Parameters of one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ParamSetDoc", try_from = "ParamSetDoc")]
pub struct ParamSet {
    layers: Vec<LayerParams>,
    activation: Activation,
}

/// Gradient (or moment) arrays congruent with a [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub layers: Vec<LayerParams>,
}

/// Intermediate values from a batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer, `(batch, in_dim)`.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each layer, `(batch, out_dim)`.
    pre: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }

    pub fn pre_activations(&self) -> &[Array2<f64>] {
        &self.pre
    }
}

fn validate_shapes(shapes: &[(usize, usize)]) -> Result<()> {
    if shapes.is_empty() {
        return Err(Error::Shape("empty layer shape list".into()));
    }
    for (k, &(i, o)) in shapes.iter().enumerate() {
        if i == 0 || o == 0 {
            return Err(Error::Shape(format!("layer {k} has a zero dimension ({i}, {o})")));
        }
    }
    for (k, pair) in shapes.windows(2).enumerate() {
        if pair[0].1 != pair[1].0 {
            return Err(Error::Shape(format!(
                "layer {k} out_dim {} does not chain into layer {} in_dim {}",
                pair[0].1,
                k + 1,
                pair[1].0
            )));
        }
    }
    Ok(())
}

/// Shapes for an MLP `input -> hidden x n -> output`.
pub fn mlp_shapes(input: usize, hidden: &[usize], output: usize) -> Vec<(usize, usize)> {
    let mut dims = Vec::with_capacity(hidden.len() + 2);
    dims.push(input);
    dims.extend_from_slice(hidden);
    dims.push(output);
    dims.windows(2).map(|w| (w[0], w[1])).collect()
}

impl ParamSet {
    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    /// The same seed always yields the same parameters.
    pub fn init(shapes: &[(usize, usize)], activation: Activation, seed: u64) -> Result<Self> {
        validate_shapes(shapes)?;
        let mut rng = rng::from_seed(seed);
        let layers = shapes
            .iter()
            .map(|&(i, o)| {
                let bound = (6.0 / (i + o) as f64).sqrt();
                let weight = Array2::from_shape_simple_fn((o, i), || rng.random_range(-bound..bound));
                LayerParams {
                    weight,
                    bias: Array1::zeros(o),
                }
            })
            .collect();
        Ok(Self { layers, activation })
    }

    pub fn from_layers(layers: Vec<LayerParams>, activation: Activation) -> Result<Self> {
        let shapes: Vec<_> = layers.iter().map(|l| (l.in_dim(), l.out_dim())).collect();
        validate_shapes(&shapes)?;
        for (k, l) in layers.iter().enumerate() {
            if l.bias.len() != l.out_dim() {
                return Err(Error::Shape(format!("layer {k} bias length {} != out_dim {}", l.bias.len(), l.out_dim())));
            }
        }
        Ok(Self { layers, activation })
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerParams] {
        &mut self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.in_dim(), l.out_dim())).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    fn same_shape(&self, other: &[LayerParams]) -> bool {
        self.layers.len() == other.len()
            && self
                .layers
                .iter()
                .zip(other)
                .all(|(a, b)| a.weight.dim() == b.weight.dim() && a.bias.len() == b.bias.len())
    }

    /// Single-input forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        let x = ArrayView2::from_shape((1, input.len()), input).expect("row view");
        let cache = self.forward_batch(x)?;
        Ok((cache.output.row(0).to_vec(), cache))
    }

    /// Batched forward pass; rows of `x` are independent inputs.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<ForwardCache> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimMismatch {
                what: "network input",
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut pre = Vec::with_capacity(n);
        let mut a = x.to_owned();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weight.t());
            z += &layer.bias;
            let out = if k + 1 < n {
                z.mapv(|v| v.max(0.0))
            } else {
                match self.activation {
                    Activation::LinearOutput => z.clone(),
                    Activation::TanhOutput => z.mapv(f64::tanh),
                }
            };
            inputs.push(a);
            pre.push(z);
            a = out;
        }
        Ok(ForwardCache { inputs, pre, output: a })
    }

    /// Forward pass without keeping intermediates.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimMismatch {
                what: "network input",
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        let n = self.layers.len();
        let mut a = x.to_owned();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weight.t());
            z += &layer.bias;
            if k + 1 < n {
                z.mapv_inplace(|v| v.max(0.0));
            } else if self.activation == Activation::TanhOutput {
                z.mapv_inplace(f64::tanh);
            }
            a = z;
        }
        Ok(a)
    }

    /// Single-input backward pass.
    pub fn backward(&self, cache: &ForwardCache, output_grad: &[f64]) -> Result<(ParamGrads, Vec<f64>)> {
        let g = ArrayView2::from_shape((1, output_grad.len()), output_grad).expect("row view");
        let (grads, dx) = self.backward_batch(cache, g)?;
        Ok((grads, dx.row(0).to_vec()))
    }

    /// Gradients of `Σ_rows outputᵀ · output_grad` with respect to the
    /// parameters and to each input row.
    pub fn backward_batch(&self, cache: &ForwardCache, output_grad: ArrayView2<f64>) -> Result<(ParamGrads, Array2<f64>)> {
        let n = self.layers.len();
        if cache.inputs.len() != n
            || cache
                .inputs
                .iter()
                .zip(&self.layers)
                .any(|(a, l)| a.ncols() != l.in_dim())
        {
            return Err(Error::Shape("forward cache does not match these parameters".into()));
        }
        if output_grad.dim() != cache.output.dim() {
            return Err(Error::DimMismatch {
                what: "output gradient",
                expected: cache.output.len(),
                got: output_grad.len(),
            });
        }

        let mut delta = match self.activation {
            Activation::LinearOutput => output_grad.to_owned(),
            Activation::TanhOutput => {
                let mut d = output_grad.to_owned();
                Zip::from(&mut d).and(&cache.output).for_each(|d, &y| *d *= 1.0 - y * y);
                d
            }
        };
        let mut grads: Vec<Option<LayerParams>> = vec![None; n];
        let mut input_grad = None;
        for k in (0..n).rev() {
            let layer = &self.layers[k];
            let weight = delta.t().dot(&cache.inputs[k]);
            let bias = delta.sum_axis(Axis(0));
            let mut dx = delta.dot(&layer.weight);
            grads[k] = Some(LayerParams { weight, bias });
            if k > 0 {
                Zip::from(&mut dx)
                    .and(&cache.pre[k - 1])
                    .for_each(|d, &z| if z <= 0.0 { *d = 0.0 });
                delta = dx;
            } else {
                input_grad = Some(dx);
            }
        }
        Ok((
            ParamGrads {
                layers: grads.into_iter().map(|g| g.expect("every layer visited")).collect(),
            },
            input_grad.expect("layer 0 visited"),
        ))
    }

    /// Input gradient only; same result as the second half of
    /// [`ParamSet::backward_batch`] without forming the weight gradients.
    pub fn input_grad_batch(&self, cache: &ForwardCache, output_grad: ArrayView2<f64>) -> Result<Array2<f64>> {
        if cache.inputs.len() != self.layers.len() || output_grad.dim() != cache.output.dim() {
            return Err(Error::Shape("forward cache does not match these parameters".into()));
        }
        let mut delta = output_grad.to_owned();
        if self.activation == Activation::TanhOutput {
            Zip::from(&mut delta).and(&cache.output).for_each(|d, &y| *d *= 1.0 - y * y);
        }
        for k in (0..self.layers.len()).rev() {
            let mut dx = delta.dot(&self.layers[k].weight);
            if k > 0 {
                Zip::from(&mut dx)
                    .and(&cache.pre[k - 1])
                    .for_each(|d, &z| if z <= 0.0 { *d = 0.0 });
            }
            delta = dx;
        }
        Ok(delta)
    }

    /// Flattens parameters layer by layer: weights row-major, then biases.
    pub fn flatten(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::DimMismatch {
                what: "flat parameter vector",
                expected: self.num_params(),
                got: flat.len(),
            });
        }
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            l.weight.iter_mut().for_each(|w| *w = it.next().unwrap());
            l.bias.iter_mut().for_each(|b| *b = it.next().unwrap());
        }
        Ok(())
    }

    /// Largest absolute component-wise difference to `other`.
    pub fn max_abs_diff(&self, other: &ParamSet) -> f64 {
        self.flatten()
            .iter()
            .zip(other.flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn flatten_layers(layers: &[LayerParams]) -> Vec<f64> {
    let mut out = Vec::new();
    for l in layers {
        out.extend(l.weight.iter().copied());
        out.extend(l.bias.iter().copied());
    }
    out
}

impl ParamGrads {
    pub fn zeros_like(params: &ParamSet) -> Self {
        Self {
            layers: params.layers.iter().map(|l| LayerParams::zeros(l.in_dim(), l.out_dim())).collect(),
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }

    pub fn add_assign(&mut self, other: &ParamGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weight *= factor;
            l.bias *= factor;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }
}

/// Adam moment accumulators for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    pub first_moment: ParamGrads,
    pub second_moment: ParamGrads,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptState {
    pub fn new(params: &ParamSet) -> Self {
        Self {
            first_moment: ParamGrads::zeros_like(params),
            second_moment: ParamGrads::zeros_like(params),
            step_count: 0,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            epsilon: ADAM_EPSILON,
        }
    }
}

/// Element-wise Adam update with bias correction; `t` is the 1-based step.
#[allow(clippy::too_many_arguments)]
pub fn adam_update_slice(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) {
    let bc1 = 1.0 - beta1.powi(t as i32);
    let bc2 = 1.0 - beta2.powi(t as i32);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// One Adam step. Rejects non-finite gradients without touching any state.
pub fn adam_step(params: &mut ParamSet, grads: &ParamGrads, opt: &mut OptState, lr: f64) -> Result<()> {
    if !params.same_shape(&grads.layers)
        || !params.same_shape(&opt.first_moment.layers)
        || !params.same_shape(&opt.second_moment.layers)
    {
        return Err(Error::Shape("adam: parameters, gradients and moments are not congruent".into()));
    }
    if !grads.all_finite() {
        return Err(Error::Numerical("adam: non-finite gradient component".into()));
    }
    let t = opt.step_count + 1;
    let (b1, b2, eps) = (opt.beta1, opt.beta2, opt.epsilon);
    let bc1 = 1.0 - b1.powi(t as i32);
    let bc2 = 1.0 - b2.powi(t as i32);
    let update = |p: &mut f64, &g: &f64, m: &mut f64, v: &mut f64| {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
    };
    for (k, layer) in params.layers.iter_mut().enumerate() {
        let g = &grads.layers[k];
        let m = &mut opt.first_moment.layers[k];
        let v = &mut opt.second_moment.layers[k];
        Zip::from(&mut layer.weight)
            .and(&g.weight)
            .and(&mut m.weight)
            .and(&mut v.weight)
            .for_each(update);
        Zip::from(&mut layer.bias)
            .and(&g.bias)
            .and(&mut m.bias)
            .and(&mut v.bias)
            .for_each(update);
    }
    opt.step_count = t;
    Ok(())
}

/// `target ← tau·online + (1 − tau)·target`, component-wise.
pub fn polyak_update(target: &mut ParamSet, online: &ParamSet, tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidArgument(format!("tau must lie in [0, 1], got {tau}")));
    }
    if !target.same_shape(&online.layers) {
        return Err(Error::Shape("polyak: target and online shapes differ".into()));
    }
    for (t, o) in target.layers.iter_mut().zip(&online.layers) {
        Zip::from(&mut t.weight)
            .and(&o.weight)
            .for_each(|t, &o| *t = tau * o + (1.0 - tau) * *t);
        Zip::from(&mut t.bias)
            .and(&o.bias)
            .for_each(|t, &o| *t = tau * o + (1.0 - tau) * *t);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// JSON documents

/// Serialized form of a [`ParamSet`]. Field order: `layer_shapes`,
/// `activation`, `weights` (per layer, `out_dim` rows of `in_dim` values),
/// `biases`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamSetDoc {
    pub layer_shapes: Vec<(usize, usize)>,
    pub activation: Activation,
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerArraysDoc {
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentsDoc {
    pub first: LayerArraysDoc,
    pub second: LayerArraysDoc,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

/// A network plus its optimizer state. Field order: `layer_shapes`,
/// `activation`, `weights`, `biases`, `moments`, `step_count`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkDoc {
    pub layer_shapes: Vec<(usize, usize)>,
    pub activation: Activation,
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
    pub moments: MomentsDoc,
    pub step_count: u64,
}

fn layers_to_doc(layers: &[LayerParams]) -> LayerArraysDoc {
    LayerArraysDoc {
        weights: layers
            .iter()
            .map(|l| l.weight.rows().into_iter().map(|r| r.to_vec()).collect())
            .collect(),
        biases: layers.iter().map(|l| l.bias.to_vec()).collect(),
    }
}

fn layers_from_doc(shapes: &[(usize, usize)], doc: &LayerArraysDoc) -> Result<Vec<LayerParams>> {
    if doc.weights.len() != shapes.len() || doc.biases.len() != shapes.len() {
        return Err(Error::Shape("layer count does not match layer_shapes".into()));
    }
    shapes
        .iter()
        .zip(doc.weights.iter().zip(&doc.biases))
        .enumerate()
        .map(|(k, (&(i, o), (w, b)))| {
            if w.len() != o || w.iter().any(|r| r.len() != i) || b.len() != o {
                return Err(Error::Shape(format!("layer {k} arrays do not match shape ({i}, {o})")));
            }
            let flat: Vec<f64> = w.iter().flatten().copied().collect();
            Ok(LayerParams {
                weight: Array2::from_shape_vec((o, i), flat).expect("checked shape"),
                bias: Array1::from(b.clone()),
            })
        })
        .collect()
}

impl From<ParamSet> for ParamSetDoc {
    fn from(p: ParamSet) -> Self {
        let arrays = layers_to_doc(&p.layers);
        ParamSetDoc {
            layer_shapes: p.layer_shapes(),
            activation: p.activation,
            weights: arrays.weights,
            biases: arrays.biases,
        }
    }
}

impl TryFrom<ParamSetDoc> for ParamSet {
    type Error = Error;

    fn try_from(doc: ParamSetDoc) -> Result<Self> {
        validate_shapes(&doc.layer_shapes)?;
        let layers = layers_from_doc(
            &doc.layer_shapes,
            &LayerArraysDoc {
                weights: doc.weights,
                biases: doc.biases,
            },
        )?;
        ParamSet::from_layers(layers, doc.activation)
    }
}

impl NetworkDoc {
    pub fn new(params: &ParamSet, opt: &OptState) -> Self {
        let arrays = layers_to_doc(&params.layers);
        NetworkDoc {
            layer_shapes: params.layer_shapes(),
            activation: params.activation,
            weights: arrays.weights,
            biases: arrays.biases,
            moments: MomentsDoc {
                first: layers_to_doc(&opt.first_moment.layers),
                second: layers_to_doc(&opt.second_moment.layers),
                beta1: opt.beta1,
                beta2: opt.beta2,
                epsilon: opt.epsilon,
            },
            step_count: opt.step_count,
        }
    }

    pub fn into_parts(self) -> Result<(ParamSet, OptState)> {
        validate_shapes(&self.layer_shapes)?;
        let layers = layers_from_doc(
            &self.layer_shapes,
            &LayerArraysDoc {
                weights: self.weights,
                biases: self.biases,
            },
        )?;
        let params = ParamSet::from_layers(layers, self.activation)?;
        let opt = OptState {
            first_moment: ParamGrads {
                layers: layers_from_doc(&self.layer_shapes, &self.moments.first)?,
            },
            second_moment: ParamGrads {
                layers: layers_from_doc(&self.layer_shapes, &self.moments.second)?,
            },
            step_count: self.step_count,
            beta1: self.moments.beta1,
            beta2: self.moments.beta2,
            epsilon: self.moments.epsilon,
        };
        Ok((params, opt))
    }
}
