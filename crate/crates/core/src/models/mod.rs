//! Small differentiable models with analytic per-example gradients.
//!
//! Parameters live in one flat `f64` vector; a [`Segment`] layout names the
//! pieces. Weight matrices are row-major `[out, in]`.

mod checkpoint;

use rand::Rng;
use rand_distr::Uniform;
use serde::{Deserialize, Serialize};

use crate::data::{DataItem, SubjectId};
use crate::rng::{stream, Purpose, StreamKey};
use crate::{Error, Result};

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CheckpointSidecar, CHECKPOINT_FORMAT_VERSION};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    /// Multinomial logistic regression. Convex in its parameters.
    LogisticRegression { fit_intercept: bool },
    /// Fully connected network with tanh hidden layers.
    Mlp { hidden: Vec<usize> },
}

/// Architecture of a model. The loss is always softmax cross-entropy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub d_in: usize,
    pub num_classes: usize,
}

/// A named slice of the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ModelSpec {
    pub fn logistic(d_in: usize, num_classes: usize, fit_intercept: bool) -> Self {
        Self {
            kind: ModelKind::LogisticRegression { fit_intercept },
            d_in,
            num_classes,
        }
    }

    /// MLP with one hidden layer per entry of `hidden`.
    pub fn mlp(d_in: usize, num_classes: usize, hidden: Vec<usize>) -> Self {
        Self {
            kind: ModelKind::Mlp { hidden },
            d_in,
            num_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_in == 0 {
            return Err(Error::InvalidConfig("model input dimension must be at least 1".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidConfig("a classifier needs at least 2 classes".into()));
        }
        if let ModelKind::Mlp { hidden } = &self.kind {
            if hidden.is_empty() || hidden.contains(&0) {
                return Err(Error::InvalidConfig("mlp hidden sizes must be non-empty and positive".into()));
            }
        }
        Ok(())
    }

    pub fn is_convex(&self) -> bool {
        matches!(self.kind, ModelKind::LogisticRegression { .. })
    }

    /// Layer widths from input to logits.
    fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.d_in];
        if let ModelKind::Mlp { hidden } = &self.kind {
            w.extend_from_slice(hidden);
        }
        w.push(self.num_classes);
        w
    }

    fn has_bias(&self) -> bool {
        match self.kind {
            ModelKind::LogisticRegression { fit_intercept } => fit_intercept,
            ModelKind::Mlp { .. } => true,
        }
    }

    pub fn layout(&self) -> Vec<Segment> {
        let widths = self.widths();
        let layers = widths.len() - 1;
        let mut segments = Vec::new();
        let mut offset = 0;
        for l in 0..layers {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let prefix = if layers == 1 { String::new() } else { format!("layer{l}.") };
            segments.push(Segment {
                name: format!("{prefix}weight"),
                offset,
                shape: vec![fan_out, fan_in],
            });
            offset += fan_out * fan_in;
            if self.has_bias() {
                segments.push(Segment {
                    name: format!("{prefix}bias"),
                    offset,
                    shape: vec![fan_out],
                });
                offset += fan_out;
            }
        }
        segments
    }

    /// Number of parameters.
    pub fn dimension(&self) -> usize {
        self.layout().iter().map(Segment::len).sum()
    }
}

/// Flat parameter vector with its segment layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: Vec<Segment>,
}

impl ParamVector {
    pub fn zeros(spec: &ModelSpec) -> Self {
        Self {
            values: vec![0.0; spec.dimension()],
            layout: spec.layout(),
        }
    }

    pub fn from_values(spec: &ModelSpec, values: Vec<f64>) -> Result<Self> {
        Self::with_layout(spec.layout(), values)
    }

    pub fn with_layout(layout: Vec<Segment>, values: Vec<f64>) -> Result<Self> {
        let mut expected = 0usize;
        for seg in &layout {
            if seg.offset != expected {
                return Err(Error::Checkpoint(format!("segment {} starts at {} but {} was expected", seg.name, seg.offset, expected)));
            }
            expected = seg
                .shape
                .iter()
                .try_fold(1usize, |a, &b| a.checked_mul(b))
                .and_then(|n| expected.checked_add(n))
                .ok_or_else(|| Error::Checkpoint(format!("segment {} is too large", seg.name)))?;
        }
        if expected != values.len() {
            return Err(Error::DimensionMismatch {
                expected,
                actual: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient { index });
        }
        Ok(Self { values, layout })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn layout(&self) -> &[Segment] {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn segment(&self, name: &str) -> Option<&[f64]> {
        self.layout
            .iter()
            .find(|s| s.name == name)
            .map(|s| &self.values[s.offset..s.offset + s.len()])
    }
}

/// Initial parameters: zeros for logistic regression, and
/// `uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))` for every MLP parameter.
pub fn init_params(spec: &ModelSpec, seed: u64) -> Result<ParamVector> {
    spec.validate()?;
    let mut params = ParamVector::zeros(spec);
    if let ModelKind::Mlp { .. } = spec.kind {
        let mut rng = stream(seed, StreamKey::new(Purpose::Init));
        let layout = params.layout.clone();
        for seg in &layout {
            let fan_in = if seg.shape.len() == 2 { seg.shape[1] } else { fan_in_of_bias(&layout, seg) };
            let bound = 1.0 / (fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).map_err(|e| Error::InvalidConfig(e.to_string()))?;
            for v in &mut params.values[seg.offset..seg.offset + seg.len()] {
                *v = rng.sample(dist);
            }
        }
    }
    Ok(params)
}

fn fan_in_of_bias(layout: &[Segment], bias: &Segment) -> usize {
    layout
        .iter()
        .rev()
        .find(|s| s.shape.len() == 2 && s.offset < bias.offset)
        .map_or(1, |w| w.shape[1])
}

/// Gradient of one item's loss.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleGradient {
    pub grad: Vec<f64>,
    pub loss: f64,
    pub subject: SubjectId,
    pub clipped: bool,
    pub pre_clip_norm: f64,
}

impl ExampleGradient {
    /// Clips in place to norm `c`.
    pub fn clip(&mut self, c: f64) {
        let (norm, clipped) = clip_in_place(&mut self.grad, c);
        self.pre_clip_norm = norm;
        self.clipped = clipped;
    }
}

fn check_item(spec: &ModelSpec, item: &DataItem) -> Result<()> {
    if item.features.len() != spec.d_in {
        return Err(Error::DimensionMismatch {
            expected: spec.d_in,
            actual: item.features.len(),
        });
    }
    if item.label >= spec.num_classes {
        return Err(Error::InvalidConfig(format!("label {} out of range for {} classes", item.label, spec.num_classes)));
    }
    Ok(())
}

fn check_params(spec: &ModelSpec, params: &ParamVector) -> Result<()> {
    let d = spec.dimension();
    if params.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: params.len(),
        });
    }
    Ok(())
}

/// Writes `W x + b` for the layer whose weight starts at `offset` into `out`.
fn affine(values: &[f64], offset: usize, fan_in: usize, fan_out: usize, bias: bool, x: &[f64], out: &mut [f64]) {
    let w = &values[offset..offset + fan_in * fan_out];
    for (o, row) in out.iter_mut().zip(w.chunks_exact(fan_in)) {
        *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
    }
    if bias {
        let b = &values[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
        for (o, bi) in out.iter_mut().zip(b) {
            *o += bi;
        }
    }
}

/// Stable `log(sum(exp(z)))`.
fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Forward pass; returns the activations of every layer (input first,
/// logits last).
fn forward(spec: &ModelSpec, values: &[f64], x: &[f64]) -> Vec<Vec<f64>> {
    let widths = spec.widths();
    let bias = spec.has_bias();
    let layers = widths.len() - 1;
    let mut acts = Vec::with_capacity(widths.len());
    acts.push(x.to_vec());
    let mut offset = 0;
    for l in 0..layers {
        let (fan_in, fan_out) = (widths[l], widths[l + 1]);
        let mut out = vec![0.0; fan_out];
        affine(values, offset, fan_in, fan_out, bias, &acts[l], &mut out);
        if l + 1 < layers {
            out.iter_mut().for_each(|v| *v = v.tanh());
        }
        acts.push(out);
        offset += fan_in * fan_out + if bias { fan_out } else { 0 };
    }
    acts
}

/// Class scores for one feature vector.
pub fn logits(spec: &ModelSpec, params: &ParamVector, features: &[f64]) -> Result<Vec<f64>> {
    check_params(spec, params)?;
    if features.len() != spec.d_in {
        return Err(Error::DimensionMismatch {
            expected: spec.d_in,
            actual: features.len(),
        });
    }
    Ok(forward(spec, params.values(), features).pop().unwrap_or_default())
}

/// Cross-entropy loss of one item.
pub fn item_loss(spec: &ModelSpec, params: &ParamVector, item: &DataItem) -> Result<f64> {
    check_item(spec, item)?;
    let z = logits(spec, params, &item.features)?;
    Ok(log_sum_exp(&z) - z[item.label])
}

/// Loss and gradient of one item, gradient written into `grad`.
fn loss_and_grad(spec: &ModelSpec, values: &[f64], item: &DataItem, grad: &mut [f64]) -> f64 {
    let widths = spec.widths();
    let bias = spec.has_bias();
    let layers = widths.len() - 1;
    let acts = forward(spec, values, &item.features);
    let z = &acts[layers];
    let lse = log_sum_exp(z);
    let loss = lse - z[item.label];

    // dL/dlogits = softmax(z) - onehot(y)
    let mut delta: Vec<f64> = z.iter().map(|v| (v - lse).exp()).collect();
    delta[item.label] -= 1.0;

    let mut offsets = Vec::with_capacity(layers);
    let mut offset = 0;
    for l in 0..layers {
        offsets.push(offset);
        offset += widths[l] * widths[l + 1] + if bias { widths[l + 1] } else { 0 };
    }

    for l in (0..layers).rev() {
        let (fan_in, fan_out) = (widths[l], widths[l + 1]);
        let off = offsets[l];
        let input = &acts[l];
        for (k, dk) in delta.iter().enumerate() {
            let row = &mut grad[off + k * fan_in..off + (k + 1) * fan_in];
            for (g, xi) in row.iter_mut().zip(input) {
                *g = dk * xi;
            }
        }
        if bias {
            grad[off + fan_in * fan_out..off + fan_in * fan_out + fan_out].copy_from_slice(&delta);
        }
        if l > 0 {
            let w = &values[off..off + fan_in * fan_out];
            let mut back = vec![0.0; fan_in];
            for (k, dk) in delta.iter().enumerate() {
                for (b, wkj) in back.iter_mut().zip(&w[k * fan_in..(k + 1) * fan_in]) {
                    *b += dk * wkj;
                }
            }
            // tanh' = 1 - a^2
            for (b, a) in back.iter_mut().zip(input) {
                *b *= 1.0 - a * a;
            }
            delta = back;
        }
    }
    loss
}

/// One analytic gradient per item, unclipped.
pub fn per_example_gradients(spec: &ModelSpec, params: &ParamVector, items: &[&DataItem]) -> Result<Vec<ExampleGradient>> {
    check_params(spec, params)?;
    let d = params.len();
    items
        .iter()
        .enumerate()
        .map(|(index, item)| {
            check_item(spec, item)?;
            let mut grad = vec![0.0; d];
            let loss = loss_and_grad(spec, params.values(), item, &mut grad);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteGradient { index });
            }
            let pre_clip_norm = l2_norm(&grad);
            Ok(ExampleGradient {
                grad,
                loss,
                subject: item.subject,
                clipped: false,
                pre_clip_norm,
            })
        })
        .collect()
}

/// Mean gradient and mean loss over `items`.
pub fn batch_gradient(spec: &ModelSpec, params: &ParamVector, items: &[&DataItem]) -> Result<(Vec<f64>, f64)> {
    if items.is_empty() {
        return Err(Error::EmptyDataset("gradient of an empty batch".into()));
    }
    let grads = per_example_gradients(spec, params, items)?;
    let n = grads.len() as f64;
    let mut mean = vec![0.0; params.len()];
    let mut loss = 0.0;
    for g in &grads {
        add_assign(&mut mean, &g.grad);
        loss += g.loss;
    }
    mean.iter_mut().for_each(|v| *v /= n);
    Ok((mean, loss / n))
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn add_assign(acc: &mut [f64], v: &[f64]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

pub(crate) fn scale(v: &mut [f64], s: f64) {
    v.iter_mut().for_each(|x| *x *= s);
}

/// Clips `g` in place to L2 norm at most `c`: `g / max(1, |g| / c)`.
/// Returns the pre-clip norm and whether scaling happened.
pub fn clip_in_place(g: &mut [f64], c: f64) -> (f64, bool) {
    let norm = l2_norm(g);
    let factor = norm / c;
    if factor > 1.0 {
        scale(g, 1.0 / factor);
        // Rounding can leave the norm a few ulps above c.
        let mut after = l2_norm(g);
        while after > c {
            scale(g, c / after * (1.0 - f64::EPSILON));
            after = l2_norm(g);
        }
        (norm, true)
    } else {
        (norm, false)
    }
}

/// Returns a copy of `g` clipped to norm `c`.
pub fn clip(g: &[f64], c: f64) -> Vec<f64> {
    let mut out = g.to_vec();
    clip_in_place(&mut out, c);
    out
}

/// `params - eta * grad`.
pub fn apply_update(params: &ParamVector, grad: &[f64], eta: f64) -> Result<ParamVector> {
    let mut next = params.clone();
    apply_update_in_place(&mut next, grad, eta)?;
    Ok(next)
}

pub fn apply_update_in_place(params: &mut ParamVector, grad: &[f64], eta: f64) -> Result<()> {
    if grad.len() != params.len() {
        return Err(Error::DimensionMismatch {
            expected: params.len(),
            actual: grad.len(),
        });
    }
    if eta == 0.0 {
        return Ok(());
    }
    let mut next = params.values.clone();
    for (p, g) in next.iter_mut().zip(grad) {
        *p -= eta * g;
    }
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteUpdate);
    }
    params.values = next;
    Ok(())
}

/// Mean loss and accuracy over a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
}

pub fn evaluate(spec: &ModelSpec, params: &ParamVector, items: &[DataItem]) -> Result<Evaluation> {
    check_params(spec, params)?;
    if items.is_empty() {
        return Err(Error::EmptyDataset("evaluation set is empty".into()));
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for item in items {
        check_item(spec, item)?;
        let z = forward(spec, params.values(), &item.features).pop().unwrap_or_default();
        loss += log_sum_exp(&z) - z[item.label];
        // First maximum wins ties.
        let mut best = 0;
        for (k, v) in z.iter().enumerate() {
            if *v > z[best] {
                best = k;
            }
        }
        if best == item.label {
            correct += 1;
        }
    }
    let n = items.len() as f64;
    Ok(Evaluation {
        loss: loss / n,
        accuracy: correct as f64 / n,
    })
}

/// An upper bound on per-example gradient norms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzEstimate {
    pub value: f64,
    pub method: &'static str,
}

/// Lipschitz constant of the softmax cross-entropy loss of a logistic model
/// over `items`.
///
/// The gradient is `(p - e_y) x~^T` with `x~` the input augmented by the
/// intercept, and `|p - e_y| <= sqrt(2)`, giving `sqrt(2) * max |x~|`.
pub fn estimate_lipschitz(spec: &ModelSpec, items: &[DataItem]) -> Result<LipschitzEstimate> {
    let ModelKind::LogisticRegression { fit_intercept } = spec.kind else {
        return Err(Error::NonConvex("model is non-convex; bounds not applicable".into()));
    };
    let extra = if fit_intercept { 1.0 } else { 0.0 };
    let mut max_sq: f64 = 0.0;
    for item in items {
        check_item(spec, item)?;
        max_sq = max_sq.max(item.features.iter().map(|x| x * x).sum::<f64>() + extra);
    }
    Ok(LipschitzEstimate {
        value: std::f64::consts::SQRT_2 * max_sq.sqrt(),
        method: "softmax_xent_feature_norm",
    })
}
