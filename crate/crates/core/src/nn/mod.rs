//! Dense feed-forward networks with exact backpropagation.
//!
//! Batches are row-major: one example per row, one feature per column. Layer
//! weights have shape `(output_width, input_width)`, so a layer computes
//! `z = a · Wᵀ + b` followed by its activation.
//!
//! The engine is deliberately small: it covers exactly what the generator,
//! critic and classifier need (relu/linear/sigmoid/softmax dense layers,
//! RMSProp and weight clipping), all in `f64`.

mod io;
mod optim;

pub use io::{NetworkDocument, NETWORK_FORMAT, NETWORK_FORMAT_VERSION};
pub use optim::{rmsprop_step, Direction, OptimizerState};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::rng::rng_from_seed;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
    Sigmoid,
    /// Row-wise softmax. Only valid on the final layer.
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input_width: usize,
    pub output_width: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(input_width: usize, output_width: usize, activation: Activation) -> Self {
        Self {
            input_width,
            output_width,
            activation,
        }
    }
}

/// Builds a chain of layer specs from a width list, e.g. `[789, 64, 128, 128, 789]`.
///
/// Hidden layers use `hidden`, the last layer uses `output`.
pub fn chain_specs(widths: &[usize], hidden: Activation, output: Activation) -> Vec<LayerSpec> {
    let n = widths.len().saturating_sub(1);
    widths
        .windows(2)
        .enumerate()
        .map(|(i, w)| LayerSpec::new(w[0], w[1], if i + 1 == n { output } else { hidden }))
        .collect()
}

pub(crate) fn validate_specs(specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::Config("network needs at least one layer".into()));
    }
    for (i, s) in specs.iter().enumerate() {
        if s.input_width == 0 || s.output_width == 0 {
            return Err(Error::Config(format!("layer {i}: widths must be > 0")));
        }
        if s.activation == Activation::Softmax && i + 1 != specs.len() {
            return Err(Error::Config(format!(
                "layer {i}: softmax is only allowed on the final layer"
            )));
        }
    }
    for (i, pair) in specs.windows(2).enumerate() {
        if pair[0].output_width != pair[1].input_width {
            return Err(Error::Config(format!(
                "layer {} output width {} does not match layer {} input width {}",
                i,
                pair[0].output_width,
                i + 1,
                pair[1].input_width
            )));
        }
    }
    Ok(())
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn softmax_rows(z: &Array2<f64>) -> Array2<f64> {
    let mut out = z.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

impl Activation {
    fn apply(self, z: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Relu => z.mapv(|v| v.max(0.0)),
            Activation::Linear => z.clone(),
            Activation::Sigmoid => z.mapv(sigmoid),
            Activation::Softmax => softmax_rows(z),
        }
    }

    /// Maps dL/d(output) to dL/d(pre-activation).
    fn backprop(self, z: &Array2<f64>, out: &Array2<f64>, grad: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Relu => {
                let mut d = grad.clone();
                Zip::from(&mut d).and(z).for_each(|d, &z| {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                });
                d
            }
            Activation::Linear => grad.clone(),
            Activation::Sigmoid => {
                let mut d = grad.clone();
                Zip::from(&mut d).and(out).for_each(|d, &s| *d *= s * (1.0 - s));
                d
            }
            Activation::Softmax => {
                let dots = (grad * out).sum_axis(Axis(1)).insert_axis(Axis(1));
                out * &(grad - &dots)
            }
        }
    }
}

/// Cached intermediate values of one forward pass, consumed by backprop.
#[derive(Debug, Clone)]
pub struct Activations {
    input: Array2<f64>,
    pre: Vec<Array2<f64>>,
    post: Vec<Array2<f64>>,
}

impl Activations {
    pub fn input(&self) -> &Array2<f64> {
        &self.input
    }

    /// Pre-activation values of layer `i`.
    pub fn pre_activation(&self, i: usize) -> &Array2<f64> {
        &self.pre[i]
    }

    /// Post-activation values of layer `i`.
    pub fn layer_output(&self, i: usize) -> &Array2<f64> {
        &self.post[i]
    }

    pub fn output(&self) -> &Array2<f64> {
        self.post.last().expect("network has at least one layer")
    }

    pub fn into_output(mut self) -> Array2<f64> {
        self.post.pop().expect("network has at least one layer")
    }

    pub fn num_layers(&self) -> usize {
        self.post.len()
    }
}

/// Parameter gradients, shaped exactly like the network they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &MlpNetwork) -> Self {
        Self {
            weights: net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: net.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for w in &mut self.weights {
            *w *= factor;
        }
        for b in &mut self.biases {
            *b *= factor;
        }
    }

    /// `self += factor * other`.
    pub fn add_scaled(&mut self, other: &Gradients, factor: f64) -> Result<()> {
        self.check_same_shape(other)?;
        for (w, o) in self.weights.iter_mut().zip(&other.weights) {
            w.scaled_add(factor, o);
        }
        for (b, o) in self.biases.iter_mut().zip(&other.biases) {
            b.scaled_add(factor, o);
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        self.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// All entries, weights first (layer by layer, row-major), then biases.
    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights
            .iter()
            .flat_map(|w| w.iter().copied())
            .chain(self.biases.iter().flat_map(|b| b.iter().copied()))
    }

    fn check_same_shape(&self, other: &Gradients) -> Result<()> {
        let same = self.weights.len() == other.weights.len()
            && self.biases.len() == other.biases.len()
            && self.weights.iter().zip(&other.weights).all(|(a, b)| a.dim() == b.dim())
            && self.biases.iter().zip(&other.biases).all(|(a, b)| a.dim() == b.dim());
        if same {
            Ok(())
        } else {
            Err(Error::Contract("gradient shapes differ".into()))
        }
    }
}

/// A dense multi-layer perceptron.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpNetwork {
    specs: Vec<LayerSpec>,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

/// Builds a network with uniform ±√(6/(fan_in+fan_out)) weights and zero biases.
///
/// Weights are drawn layer by layer in row-major order from a ChaCha8 stream
/// seeded with `seed`, so equal inputs give bit-identical networks.
pub fn init_network(specs: &[LayerSpec], seed: u64) -> Result<MlpNetwork> {
    validate_specs(specs)?;
    let mut rng = rng_from_seed(seed);
    let mut weights = Vec::with_capacity(specs.len());
    let mut biases = Vec::with_capacity(specs.len());
    for s in specs {
        let limit = (6.0 / (s.input_width + s.output_width) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit)
            .map_err(|e| Error::Config(format!("weight init: {e}")))?;
        let w = Array2::from_shape_simple_fn((s.output_width, s.input_width), || {
            dist.sample(&mut rng)
        });
        weights.push(w);
        biases.push(Array1::zeros(s.output_width));
    }
    Ok(MlpNetwork {
        specs: specs.to_vec(),
        weights,
        biases,
    })
}

impl MlpNetwork {
    /// Assembles a network from explicit parameters.
    pub fn from_parameters(
        specs: Vec<LayerSpec>,
        weights: Vec<Array2<f64>>,
        biases: Vec<Array1<f64>>,
    ) -> Result<Self> {
        validate_specs(&specs)?;
        if weights.len() != specs.len() || biases.len() != specs.len() {
            return Err(Error::Contract(
                "parameter count does not match layer count".into(),
            ));
        }
        for (i, s) in specs.iter().enumerate() {
            if weights[i].dim() != (s.output_width, s.input_width) {
                return Err(Error::Contract(format!(
                    "layer {i}: weight shape {:?}, expected {:?}",
                    weights[i].dim(),
                    (s.output_width, s.input_width)
                )));
            }
            if biases[i].len() != s.output_width {
                return Err(Error::Contract(format!(
                    "layer {i}: bias length {}, expected {}",
                    biases[i].len(),
                    s.output_width
                )));
            }
        }
        Ok(Self {
            specs,
            weights,
            biases,
        })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn num_layers(&self) -> usize {
        self.specs.len()
    }

    pub fn input_width(&self) -> usize {
        self.specs[0].input_width
    }

    pub fn output_width(&self) -> usize {
        self.specs[self.specs.len() - 1].output_width
    }

    pub fn weights(&self, layer: usize) -> &Array2<f64> {
        &self.weights[layer]
    }

    pub fn biases(&self, layer: usize) -> &Array1<f64> {
        &self.biases[layer]
    }

    pub fn weights_mut(&mut self, layer: usize) -> &mut Array2<f64> {
        &mut self.weights[layer]
    }

    pub fn biases_mut(&mut self, layer: usize) -> &mut Array1<f64> {
        &mut self.biases[layer]
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// All parameters, weights first (layer by layer, row-major), then biases.
    pub fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights
            .iter()
            .flat_map(|w| w.iter().copied())
            .chain(self.biases.iter().flat_map(|b| b.iter().copied()))
    }

    pub fn max_abs_param(&self) -> f64 {
        self.params().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(f64::is_finite)
    }

    /// Runs the network and keeps every intermediate value for backprop.
    pub fn forward(&self, batch: ArrayView2<'_, f64>) -> Result<Activations> {
        if batch.ncols() != self.input_width() {
            return Err(Error::Contract(format!(
                "batch has {} columns, network expects {}",
                batch.ncols(),
                self.input_width()
            )));
        }
        if !batch.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric("non-finite value in network input".into()));
        }
        let mut pre = Vec::with_capacity(self.specs.len());
        let mut post: Vec<Array2<f64>> = Vec::with_capacity(self.specs.len());
        for (i, spec) in self.specs.iter().enumerate() {
            let a = if i == 0 { batch } else { post[i - 1].view() };
            let z = a.dot(&self.weights[i].t()) + &self.biases[i];
            post.push(spec.activation.apply(&z));
            pre.push(z);
        }
        Ok(Activations {
            input: batch.to_owned(),
            pre,
            post,
        })
    }

    /// Output of the final layer only.
    pub fn predict(&self, batch: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(self.forward(batch)?.into_output())
    }

    /// Gradients of a scalar loss whose gradient w.r.t. the network output is `d_output`.
    pub fn backward(&self, acts: &Activations, d_output: &Array2<f64>) -> Result<Gradients> {
        Ok(self.backward_with_input_grad(acts, d_output)?.0)
    }

    /// Like [`MlpNetwork::backward`] but also returns dL/d(input), which lets a
    /// gradient flow on into an upstream network.
    pub fn backward_with_input_grad(
        &self,
        acts: &Activations,
        d_output: &Array2<f64>,
    ) -> Result<(Gradients, Array2<f64>)> {
        self.check_activations(acts)?;
        let last = self.specs.len() - 1;
        if d_output.dim() != acts.post[last].dim() {
            return Err(Error::Contract(format!(
                "output gradient shape {:?} does not match output shape {:?}",
                d_output.dim(),
                acts.post[last].dim()
            )));
        }
        let delta = self.specs[last]
            .activation
            .backprop(&acts.pre[last], &acts.post[last], d_output);
        Ok(self.backprop_from(acts, delta))
    }

    /// Backprop starting from dL/d(final pre-activation), skipping the final
    /// activation's Jacobian. Used with softmax cross-entropy, whose logit
    /// gradient `(p − y)/m` is numerically safer than going through `1/p`.
    pub fn backward_from_logits(
        &self,
        acts: &Activations,
        d_logits: &Array2<f64>,
    ) -> Result<Gradients> {
        self.check_activations(acts)?;
        let last = self.specs.len() - 1;
        if d_logits.dim() != acts.pre[last].dim() {
            return Err(Error::Contract(format!(
                "logit gradient shape {:?} does not match {:?}",
                d_logits.dim(),
                acts.pre[last].dim()
            )));
        }
        Ok(self.backprop_from(acts, d_logits.clone()).0)
    }

    fn check_activations(&self, acts: &Activations) -> Result<()> {
        let ok = acts.pre.len() == self.specs.len()
            && acts.input.ncols() == self.input_width()
            && acts
                .post
                .iter()
                .zip(&self.specs)
                .all(|(a, s)| a.ncols() == s.output_width);
        if ok {
            Ok(())
        } else {
            Err(Error::Contract(
                "activations were not produced by this network".into(),
            ))
        }
    }

    fn backprop_from(&self, acts: &Activations, mut delta: Array2<f64>) -> (Gradients, Array2<f64>) {
        let n = self.specs.len();
        let mut gw = Vec::with_capacity(n);
        let mut gb = Vec::with_capacity(n);
        for i in (0..n).rev() {
            let a_prev = if i == 0 { &acts.input } else { &acts.post[i - 1] };
            gw.push(delta.t().dot(a_prev));
            gb.push(delta.sum_axis(Axis(0)));
            let d_prev = delta.dot(&self.weights[i]);
            delta = if i == 0 {
                d_prev
            } else {
                self.specs[i - 1]
                    .activation
                    .backprop(&acts.pre[i - 1], &acts.post[i - 1], &d_prev)
            };
        }
        gw.reverse();
        gb.reverse();
        (
            Gradients {
                weights: gw,
                biases: gb,
            },
            delta,
        )
    }

    /// Clamps every weight and bias into `[-c, c]`.
    pub fn clip_weights(&mut self, c: f64) -> Result<()> {
        if !(c > 0.0) {
            return Err(Error::Config(format!("clip bound must be > 0, got {c}")));
        }
        for w in &mut self.weights {
            w.mapv_inplace(|v| v.clamp(-c, c));
        }
        for b in &mut self.biases {
            b.mapv_inplace(|v| v.clamp(-c, c));
        }
        Ok(())
    }

    pub(crate) fn params_mut(
        &mut self,
    ) -> (&mut Vec<Array2<f64>>, &mut Vec<Array1<f64>>) {
        (&mut self.weights, &mut self.biases)
    }
}
