//! Minimal fully-connected classifier with analytic gradients.
//!
//! The twin model is an MLP with ReLU hidden layers and a softmax output,
//! trained by full-batch gradient descent on softmax cross-entropy. Weights
//! live in one flat `Vec<f64>` (per layer: row-major `(out, in)` weight block
//! followed by the bias block), which keeps snapshots, anchors, and penalty
//! terms simple elementwise operations over a single vector.
//!
//! Every operation here is a pure function of its inputs. Batch reductions
//! run on a fixed binary tree over sample indices, so results are bitwise
//! identical regardless of thread count.

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Layer widths of the classifier: `[input, hidden..., output]`.
///
/// Hidden layers use ReLU, the output layer softmax; the architecture is
/// fixed to that family, so the spec is just the widths.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LayerSpec {
    sizes: Vec<usize>,
}

impl LayerSpec {
    /// `sizes` must list input width, at least one hidden width, and the
    /// class count, all nonzero.
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.len() < 3 {
            return Err(Error::Config(format!(
                "layer sizes need input, at least one hidden layer, and output; got {:?}",
                sizes
            )));
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(Error::Config(format!(
                "all layer widths must be at least 1; got {:?}",
                sizes
            )));
        }
        Ok(Self { sizes })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    /// Number of classes (output width).
    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    /// Number of affine layers.
    pub fn layer_count(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Total parameter count, biases included: `Σ (in·out + out)`.
    pub fn param_count(&self) -> usize {
        self.sizes
            .windows(2)
            .map(|pair| pair[0] * pair[1] + pair[1])
            .sum()
    }
}

/// The twin's state: a flat parameter vector conforming to a [`LayerSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelWeights {
    spec: LayerSpec,
    values: Vec<f64>,
}

impl ModelWeights {
    /// Seeded initialization: weights uniform in ±√(6/(fan_in+fan_out))
    /// per layer, biases zero. Identical seeds give identical weights.
    pub fn init(spec: LayerSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = vec![0.0; spec.param_count()];
        let mut offset = 0;
        for pair in spec.sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("limit is finite");
            for w in &mut values[offset..offset + fan_in * fan_out] {
                *w = dist.sample(&mut rng);
            }
            // bias block stays zero
            offset += fan_in * fan_out + fan_out;
        }
        Self { spec, values }
    }

    pub fn from_values(spec: LayerSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.param_count() {
            return Err(Error::ShapeMismatch {
                what: "model weights",
                expected: spec.param_count(),
                got: values.len(),
            });
        }
        Ok(Self { spec, values })
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// One labeled observation: feature vector plus class index.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Feature values, normalized to `[0, 1]` by the loaders.
    pub features: Vec<f32>,
    /// Class index in `0..C`.
    pub label: usize,
}

/// Gradient-descent settings for one training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Upper bound on iterations per episode (`n_max`).
    pub max_iterations: usize,
    /// Seeds the mini-batch order; unused in full-batch mode.
    pub seed: u64,
    #[serde(default)]
    pub batch: BatchMode,
}

/// Full-batch is the default; mini-batch mode exists for experimentation
/// and is never used by the preset reproductions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchMode {
    #[default]
    Full,
    Mini {
        size: usize,
    },
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if let BatchMode::Mini { size } = self.batch {
            if size == 0 {
                return Err(Error::Config("mini-batch size must be at least 1".into()));
            }
        }
        Ok(())
    }
}

/// Indexed, thread-shareable access to a set of samples.
///
/// Lets the accumulated multi-episode dataset feed the same batch kernels
/// as a plain slice without concatenating storage.
pub trait SampleSet: Sync {
    fn len(&self) -> usize;
    fn get(&self, index: usize) -> &Sample;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl SampleSet for [Sample] {
    fn len(&self) -> usize {
        <[Sample]>::len(self)
    }
    fn get(&self, index: usize) -> &Sample {
        &self[index]
    }
}

impl<'a> SampleSet for Vec<&'a Sample> {
    fn len(&self) -> usize {
        <[&Sample]>::len(self)
    }
    fn get(&self, index: usize) -> &Sample {
        self[index]
    }
}

/// A sequence of slices viewed as one contiguous sample set.
pub struct MultiSlice<'a> {
    parts: Vec<&'a [Sample]>,
    /// Cumulative end offsets, one per part.
    ends: Vec<usize>,
}

impl<'a> MultiSlice<'a> {
    pub fn new(parts: Vec<&'a [Sample]>) -> Self {
        let mut ends = Vec::with_capacity(parts.len());
        let mut total = 0;
        for p in &parts {
            total += p.len();
            ends.push(total);
        }
        Self { parts, ends }
    }
}

impl SampleSet for MultiSlice<'_> {
    fn len(&self) -> usize {
        self.ends.last().copied().unwrap_or(0)
    }

    fn get(&self, index: usize) -> &Sample {
        let part = self.ends.partition_point(|&end| end <= index);
        let start = if part == 0 { 0 } else { self.ends[part - 1] };
        &self.parts[part][index - start]
    }
}

// ---------------------------------------------------------------------------
// forward / backward kernels
// ---------------------------------------------------------------------------

/// Samples per leaf of the fixed reduction tree. A constant (rather than
/// anything derived from thread count) so the summation order, and thus
/// every bit of the result, depends only on the batch length.
const LEAF_SAMPLES: usize = 512;

struct LayerView<'a> {
    weights: &'a [f64],
    biases: &'a [f64],
    in_dim: usize,
    out_dim: usize,
    weight_offset: usize,
    bias_offset: usize,
}

fn layer_views<'a>(spec: &LayerSpec, values: &'a [f64]) -> Vec<LayerView<'a>> {
    let mut views = Vec::with_capacity(spec.layer_count());
    let mut offset = 0;
    for pair in spec.sizes().windows(2) {
        let (in_dim, out_dim) = (pair[0], pair[1]);
        let weight_offset = offset;
        let bias_offset = offset + in_dim * out_dim;
        views.push(LayerView {
            weights: &values[weight_offset..bias_offset],
            biases: &values[bias_offset..bias_offset + out_dim],
            in_dim,
            out_dim,
            weight_offset,
            bias_offset,
        });
        offset = bias_offset + out_dim;
    }
    views
}

/// Reusable per-sample buffers: `acts[j]` is the activation entering affine
/// layer `j` (`acts[0]` is the input, `acts[L]` the output probabilities),
/// `deltas[j]` is dL/dz of affine layer `j`.
struct Scratch {
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

impl Scratch {
    fn new(spec: &LayerSpec) -> Self {
        let acts = spec.sizes().iter().map(|&s| vec![0.0; s]).collect();
        let deltas = spec.sizes()[1..].iter().map(|&s| vec![0.0; s]).collect();
        Self { acts, deltas }
    }
}

/// In-place softmax; returns log-sum-exp of the original logits.
fn softmax_in_place(z: &mut [f64]) -> f64 {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    let inv = 1.0 / sum;
    for v in z.iter_mut() {
        *v *= inv;
    }
    max + sum.ln()
}

/// Forward pass for one sample; fills `scratch.acts` and returns the
/// cross-entropy loss −ln p(label).
fn sample_forward_loss(views: &[LayerView], sample: &Sample, scratch: &mut Scratch) -> f64 {
    let layer_count = views.len();
    for (a, &x) in scratch.acts[0].iter_mut().zip(&sample.features) {
        *a = f64::from(x);
    }
    for (j, view) in views.iter().enumerate() {
        let (head, tail) = scratch.acts.split_at_mut(j + 1);
        let input = &head[j];
        let output = &mut tail[0];
        for o in 0..view.out_dim {
            let row = &view.weights[o * view.in_dim..(o + 1) * view.in_dim];
            let mut z = view.biases[o];
            for (&w, &a) in row.iter().zip(input.iter()) {
                z += w * a;
            }
            output[o] = z;
        }
        if j + 1 < layer_count {
            for v in output.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
    }
    let logits = scratch.acts.last_mut().unwrap();
    let z_label = logits[sample.label];
    let lse = softmax_in_place(logits);
    lse - z_label
}

/// Backward pass for one sample. With `SQUARE = false` accumulates the
/// gradient into `grad`; with `SQUARE = true` accumulates its elementwise
/// square (the empirical Fisher contribution).
fn sample_backward<const SQUARE: bool>(
    views: &[LayerView],
    label: usize,
    scratch: &mut Scratch,
    grad: &mut [f64],
) {
    let last = views.len() - 1;
    {
        let probs = scratch.acts.last().unwrap();
        let delta = &mut scratch.deltas[last];
        delta.copy_from_slice(probs);
        delta[label] -= 1.0;
    }
    for j in (0..views.len()).rev() {
        let view = &views[j];
        let input = &scratch.acts[j];
        let (lower, upper) = scratch.deltas.split_at_mut(j);
        let delta = &upper[0];
        for o in 0..view.out_dim {
            let dz = delta[o];
            let row = view.weight_offset + o * view.in_dim;
            let gw = &mut grad[row..row + view.in_dim];
            if SQUARE {
                for (g, &a) in gw.iter_mut().zip(input.iter()) {
                    let d = dz * a;
                    *g += d * d;
                }
                let db = &mut grad[view.bias_offset + o];
                *db += dz * dz;
            } else {
                for (g, &a) in gw.iter_mut().zip(input.iter()) {
                    *g += dz * a;
                }
                grad[view.bias_offset + o] += dz;
            }
        }
        if j > 0 {
            // dL/dz of the previous layer: W^T·delta masked by ReLU'.
            let prev = &mut lower[j - 1];
            prev.iter_mut().for_each(|v| *v = 0.0);
            for o in 0..view.out_dim {
                let dz = delta[o];
                let row = &view.weights[o * view.in_dim..(o + 1) * view.in_dim];
                for (p, &w) in prev.iter_mut().zip(row.iter()) {
                    *p += w * dz;
                }
            }
            for (p, &a) in prev.iter_mut().zip(input.iter()) {
                if a <= 0.0 {
                    *p = 0.0;
                }
            }
        }
    }
}

fn reduce_loss_grad<S: SampleSet + ?Sized, const SQUARE: bool>(
    spec: &LayerSpec,
    values: &[f64],
    set: &S,
    lo: usize,
    hi: usize,
) -> (f64, Vec<f64>) {
    if hi - lo <= LEAF_SAMPLES {
        let views = layer_views(spec, values);
        let mut scratch = Scratch::new(spec);
        let mut grad = vec![0.0; values.len()];
        let mut loss = 0.0;
        for i in lo..hi {
            let sample = set.get(i);
            loss += sample_forward_loss(&views, sample, &mut scratch);
            sample_backward::<SQUARE>(&views, sample.label, &mut scratch, &mut grad);
        }
        (loss, grad)
    } else {
        let mid = lo + (hi - lo) / 2;
        let (mut left, right) = rayon::join(
            || reduce_loss_grad::<S, SQUARE>(spec, values, set, lo, mid),
            || reduce_loss_grad::<S, SQUARE>(spec, values, set, mid, hi),
        );
        left.0 += right.0;
        for (a, b) in left.1.iter_mut().zip(&right.1) {
            *a += *b;
        }
        left
    }
}

fn reduce_loss<S: SampleSet + ?Sized>(
    spec: &LayerSpec,
    values: &[f64],
    set: &S,
    lo: usize,
    hi: usize,
) -> f64 {
    if hi - lo <= LEAF_SAMPLES {
        let views = layer_views(spec, values);
        let mut scratch = Scratch::new(spec);
        (lo..hi)
            .map(|i| sample_forward_loss(&views, set.get(i), &mut scratch))
            .sum()
    } else {
        let mid = lo + (hi - lo) / 2;
        let (left, right) = rayon::join(
            || reduce_loss(spec, values, set, lo, mid),
            || reduce_loss(spec, values, set, mid, hi),
        );
        left + right
    }
}

fn reduce_correct<S: SampleSet + ?Sized>(
    spec: &LayerSpec,
    values: &[f64],
    set: &S,
    lo: usize,
    hi: usize,
) -> usize {
    if hi - lo <= LEAF_SAMPLES {
        let views = layer_views(spec, values);
        let mut scratch = Scratch::new(spec);
        let mut correct = 0;
        for i in lo..hi {
            let sample = set.get(i);
            sample_forward_loss(&views, sample, &mut scratch);
            let probs = scratch.acts.last().unwrap();
            if argmax(probs) == sample.label {
                correct += 1;
            }
        }
        correct
    } else {
        let mid = lo + (hi - lo) / 2;
        let (left, right) = rayon::join(
            || reduce_correct(spec, values, set, lo, mid),
            || reduce_correct(spec, values, set, mid, hi),
        );
        left + right
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn validate_set<S: SampleSet + ?Sized>(w: &ModelWeights, set: &S, what: &'static str) -> Result<()> {
    if set.is_empty() {
        return Err(Error::EmptyInput(what));
    }
    let (input_dim, classes) = (w.spec.input_dim(), w.spec.output_dim());
    for i in 0..set.len() {
        let s = set.get(i);
        if s.features.len() != input_dim {
            return Err(Error::ShapeMismatch {
                what: "sample features",
                expected: input_dim,
                got: s.features.len(),
            });
        }
        if s.label >= classes {
            return Err(Error::ShapeMismatch {
                what: "sample label (class index)",
                expected: classes,
                got: s.label,
            });
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// public operations
// ---------------------------------------------------------------------------

/// Class probabilities for one input: ReLU hidden layers, softmax output.
pub fn forward(w: &ModelWeights, x: &[f32]) -> Result<Vec<f64>> {
    if x.len() != w.spec.input_dim() {
        return Err(Error::ShapeMismatch {
            what: "input features",
            expected: w.spec.input_dim(),
            got: x.len(),
        });
    }
    let views = layer_views(&w.spec, &w.values);
    let mut scratch = Scratch::new(&w.spec);
    let sample = Sample {
        features: x.to_vec(),
        label: 0,
    };
    sample_forward_loss(&views, &sample, &mut scratch);
    Ok(scratch.acts.last().unwrap().clone())
}

/// Mean cross-entropy over the batch and its exact gradient.
pub fn loss_and_grad(w: &ModelWeights, batch: &[Sample]) -> Result<(f64, Vec<f64>)> {
    loss_and_grad_set(w, batch)
}

/// [`loss_and_grad`] over any [`SampleSet`].
pub fn loss_and_grad_set<S: SampleSet + ?Sized>(
    w: &ModelWeights,
    set: &S,
) -> Result<(f64, Vec<f64>)> {
    validate_set(w, set, "training batch")?;
    let n = set.len() as f64;
    let (mut loss, mut grad) =
        reduce_loss_grad::<S, false>(&w.spec, &w.values, set, 0, set.len());
    loss /= n;
    for g in &mut grad {
        *g /= n;
    }
    Ok((loss, grad))
}

/// Mean cross-entropy over the batch (no gradient).
pub fn batch_loss(w: &ModelWeights, batch: &[Sample]) -> Result<f64> {
    batch_loss_set(w, batch)
}

pub fn batch_loss_set<S: SampleSet + ?Sized>(w: &ModelWeights, set: &S) -> Result<f64> {
    validate_set(w, set, "loss batch")?;
    Ok(reduce_loss(&w.spec, &w.values, set, 0, set.len()) / set.len() as f64)
}

/// Mean over the set of the elementwise-squared per-sample log-likelihood
/// gradient: the empirical Fisher diagonal at `w`.
pub(crate) fn mean_squared_grad_set<S: SampleSet + ?Sized>(
    w: &ModelWeights,
    set: &S,
) -> Result<Vec<f64>> {
    validate_set(w, set, "fisher estimation data")?;
    let n = set.len() as f64;
    let (_, mut sq) = reduce_loss_grad::<S, true>(&w.spec, &w.values, set, 0, set.len());
    for v in &mut sq {
        *v /= n;
    }
    Ok(sq)
}

/// One gradient-descent step: returns `w − η·grad`.
pub fn gd_step(w: &ModelWeights, grad: &[f64], learning_rate: f64) -> Result<ModelWeights> {
    if grad.len() != w.values.len() {
        return Err(Error::ShapeMismatch {
            what: "gradient",
            expected: w.values.len(),
            got: grad.len(),
        });
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numeric {
            context: "gradient passed to gd_step".into(),
        });
    }
    let values = w
        .values
        .iter()
        .zip(grad)
        .map(|(v, g)| v - learning_rate * g)
        .collect();
    Ok(ModelWeights {
        spec: w.spec.clone(),
        values,
    })
}

/// Fraction of samples whose argmax class equals the label; argmax ties
/// break to the lowest class index.
pub fn evaluate_accuracy(w: &ModelWeights, data: &[Sample]) -> Result<f64> {
    let (correct, total) = evaluate_counts(w, data)?;
    Ok(correct as f64 / total as f64)
}

/// Correct/total counts behind [`evaluate_accuracy`]; exact integers so
/// callers can combine split accuracies without rounding.
pub fn evaluate_counts(w: &ModelWeights, data: &[Sample]) -> Result<(usize, usize)> {
    validate_set(w, data, "evaluation data")?;
    let correct = reduce_correct(&w.spec, &w.values, data, 0, data.len());
    Ok((correct, data.len()))
}
