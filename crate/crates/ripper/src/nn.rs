//! Dense feed-forward classifier engine: ReLU hidden layers, softmax output,
//! soft-label cross-entropy, Adam, and a finite-difference gradient check.
//! Everything is plain `f64` with seeded initialization; a given seed and
//! input always reproduce the same bits.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::{add_bias_rows, matmul_a_bt, matmul_at_b, sum_rows, Tensor};

/// Probabilities are clipped to at least this value before `ln` so that
/// hard-zero predictions yield a large finite loss instead of infinity.
pub const EPS_LOG: f64 = 1e-12;

/// Clip that still propagates NaN: a diverged prediction must surface as a
/// non-finite loss, not get silently clamped to `EPS_LOG`.
#[inline]
fn clip_prob(p: f64) -> f64 {
    if p < EPS_LOG {
        EPS_LOG
    } else {
        p
    }
}

/// Softmax over one logit vector, shifted by the max for stability.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; logits.len()];
    softmax_into(logits, &mut out);
    out
}

pub(crate) fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        let e = (z - max).exp();
        *o = e;
        sum += e;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Row-wise softmax of a logit matrix, in place.
pub(crate) fn softmax_rows(logits: &mut Tensor) {
    let cols = logits.cols();
    let mut scratch = vec![0.0; cols];
    for r in 0..logits.rows() {
        let row = logits.row_mut(r);
        scratch.copy_from_slice(row);
        softmax_into(&scratch, row);
    }
}

/// Cross-entropy of a predicted distribution against a soft target:
/// `-Σ tᵢ ln(pᵢ)` with probabilities clipped at [`EPS_LOG`].
pub fn cross_entropy_soft(target: &[f64], predicted: &[f64]) -> Result<f64> {
    if target.len() != predicted.len() {
        return Err(Error::shape(format!(
            "cross entropy: target has {} classes, prediction {}",
            target.len(),
            predicted.len()
        )));
    }
    let mut loss = 0.0;
    for (&t, &p) in target.iter().zip(predicted) {
        loss -= t * clip_prob(p).ln();
    }
    Ok(loss)
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Fully-connected classifier: `dims[0]` inputs, ReLU hidden layers, and a
/// softmax over `dims.last()` classes.
#[derive(Debug, Clone)]
pub struct Classifier {
    dims: Vec<usize>,
    weights: Vec<Tensor>,
    biases: Vec<Tensor>,
}

impl Classifier {
    /// Seeded init: weights `N(0, 1/√fan_in)`, biases zero.
    pub fn new(dims: &[usize], seed: u64) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::invalid("classifier needs at least input and output dims"));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid("classifier layer sizes must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let normal = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt()).unwrap();
            let data: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| normal.sample(&mut rng))
                .collect();
            weights.push(Tensor::new(vec![fan_in, fan_out], data)?);
            biases.push(Tensor::zeros(vec![fan_out]));
        }
        Ok(Classifier {
            dims: dims.to_vec(),
            weights,
            biases,
        })
    }

    pub(crate) fn from_parts(dims: Vec<usize>, weights: Vec<Tensor>, biases: Vec<Tensor>) -> Self {
        Classifier {
            dims,
            weights,
            biases,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn n_classes(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub(crate) fn weights(&self) -> &[Tensor] {
        &self.weights
    }

    pub(crate) fn biases(&self) -> &[Tensor] {
        &self.biases
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.iter().map(Tensor::len).sum::<usize>()
            + self.biases.iter().map(Tensor::len).sum::<usize>()
    }

    fn check_batch(&self, batch: &Tensor) -> Result<()> {
        if batch.cols() != self.input_dim() {
            return Err(Error::shape(format!(
                "batch has {} features, classifier expects {}",
                batch.cols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Raw pre-softmax output for a `b×d` batch, plus the post-activation of
    /// every layer (needed for backprop).
    fn forward_cached(&self, batch: &Tensor) -> Result<(Vec<Tensor>, Tensor)> {
        let mut activations = Vec::with_capacity(self.weights.len());
        let mut current = batch.clone();
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = current.matmul(w)?;
            add_bias_rows(&mut z, b);
            if l < last {
                for v in z.data_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            activations.push(current);
            current = z;
        }
        Ok((activations, current))
    }

    /// Pre-softmax logits for a `b×d` batch.
    pub fn logits(&self, batch: &Tensor) -> Result<Tensor> {
        self.check_batch(batch)?;
        Ok(self.forward_cached(batch)?.1)
    }

    /// Class probabilities for a `b×d` batch: each output row sums to one.
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        let mut logits = self.logits(batch)?;
        softmax_rows(&mut logits);
        Ok(logits)
    }

    /// Mean soft-label cross-entropy over a batch plus the gradients for
    /// every weight and bias tensor, interleaved `[w0, b0, w1, b1, ...]`.
    fn loss_and_gradients(&self, batch: &Tensor, soft_targets: &Tensor) -> Result<(f64, Vec<Tensor>)> {
        self.check_batch(batch)?;
        let b = batch.rows();
        if soft_targets.rows() != b || soft_targets.cols() != self.n_classes() {
            return Err(Error::shape(format!(
                "targets are {}x{}, expected {}x{}",
                soft_targets.rows(),
                soft_targets.cols(),
                b,
                self.n_classes()
            )));
        }
        let (activations, logits) = self.forward_cached(batch)?;
        let mut probs = logits;
        softmax_rows(&mut probs);

        let mut loss = 0.0;
        for r in 0..b {
            loss += cross_entropy_soft(soft_targets.row(r), probs.row(r))?;
        }
        loss /= b as f64;

        // d(loss)/d(logits) = (p - t) / b, then walk the layers backwards.
        let mut dz = probs;
        {
            let inv_b = 1.0 / b as f64;
            for (d, &t) in dz.data_mut().iter_mut().zip(soft_targets.data()) {
                *d = (*d - t) * inv_b;
            }
        }
        let mut grads_rev = Vec::with_capacity(self.weights.len() * 2);
        for l in (0..self.weights.len()).rev() {
            let a_prev = &activations[l];
            let dw = matmul_at_b(a_prev, &dz);
            let db = sum_rows(&dz);
            if l > 0 {
                let mut da = matmul_a_bt(&dz, &self.weights[l]);
                // ReLU mask from the stored post-activation of layer l-1.
                for (d, &a) in da.data_mut().iter_mut().zip(activations[l].data()) {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                }
                dz = da;
            }
            grads_rev.push(db);
            grads_rev.push(dw);
        }
        grads_rev.reverse();
        Ok((loss, grads_rev))
    }
}

/// Adam optimizer state for a fixed list of parameter tensors.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(learning_rate: f64, shapes: &[&[usize]]) -> Self {
        let zeros: Vec<Tensor> = shapes.iter().map(|s| Tensor::zeros(s.to_vec())).collect();
        AdamState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn for_classifier(model: &Classifier, learning_rate: f64) -> Self {
        let mut shapes: Vec<&[usize]> = Vec::new();
        for (w, b) in model.weights().iter().zip(model.biases()) {
            shapes.push(w.shape());
            shapes.push(b.shape());
        }
        AdamState::new(learning_rate, &shapes)
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One Adam update over matched parameter/gradient lists.
    pub(crate) fn apply(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape(format!(
                "optimizer tracks {} tensors, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let corr1 = 1.0 - self.beta1.powi(t);
        let corr2 = 1.0 - self.beta2.powi(t);
        for ((param, grad), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            if param.shape() != grad.shape() {
                return Err(Error::shape(format!(
                    "optimizer: param {:?} vs grad {:?}",
                    param.shape(),
                    grad.shape()
                )));
            }
            for ((p, &g), (mm, vv)) in param
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()))
            {
                *mm = self.beta1 * *mm + (1.0 - self.beta1) * g;
                *vv = self.beta2 * *vv + (1.0 - self.beta2) * g * g;
                let m_hat = *mm / corr1;
                let v_hat = *vv / corr2;
                *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

/// One optimization step on soft targets; returns the pre-update mean batch
/// loss. A non-finite prediction keeps the loss non-finite (never clipped),
/// so callers can detect divergence.
pub fn train_step(
    model: &mut Classifier,
    opt: &mut AdamState,
    batch: &Tensor,
    soft_targets: &Tensor,
) -> Result<f64> {
    let (loss, grads) = model.loss_and_gradients(batch, soft_targets)?;
    let mut params: Vec<&mut Tensor> = Vec::with_capacity(grads.len());
    for (w, b) in model.weights.iter_mut().zip(model.biases.iter_mut()) {
        params.push(w);
        params.push(b);
    }
    opt.apply(&mut params, &grads)?;
    Ok(loss)
}

/// Sum of per-row soft-label cross-entropies for a whole batch, sharing the
/// forward pass and loss kernel with training.
pub fn batch_cross_entropy(model: &Classifier, batch: &Tensor, soft_targets: &Tensor) -> Result<f64> {
    let probs = model.forward(batch)?;
    if soft_targets.rows() != probs.rows() || soft_targets.cols() != probs.cols() {
        return Err(Error::shape(format!(
            "targets are {}x{}, predictions {}x{}",
            soft_targets.rows(),
            soft_targets.cols(),
            probs.rows(),
            probs.cols()
        )));
    }
    let mut total = 0.0;
    for r in 0..probs.rows() {
        total += cross_entropy_soft(soft_targets.row(r), probs.row(r))?;
    }
    Ok(total)
}

/// Central finite-difference check of the analytic gradients on a seeded 5%
/// subsample of all parameters. Returns the worst relative error
/// `|a - n| / max(|a| + |n|, 1e-8)`.
pub fn gradient_check(
    model: &mut Classifier,
    batch: &Tensor,
    soft_targets: &Tensor,
    eps: f64,
    seed: u64,
) -> Result<f64> {
    let (_, grads) = model.loss_and_gradients(batch, soft_targets)?;
    let total = model.parameter_count();
    let sample = (total / 20).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = sample_indices(total, sample, &mut rng);

    let b = batch.rows() as f64;
    let mut worst: f64 = 0.0;
    for flat in picks {
        let analytic = {
            let (tensor_idx, offset) = locate(model, flat);
            grads[tensor_idx].data()[offset]
        };
        let numeric = {
            let orig = read_param(model, flat);
            write_param(model, flat, orig + eps);
            let plus = batch_cross_entropy(model, batch, soft_targets)? / b;
            write_param(model, flat, orig - eps);
            let minus = batch_cross_entropy(model, batch, soft_targets)? / b;
            write_param(model, flat, orig);
            (plus - minus) / (2.0 * eps)
        };
        let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8);
        if rel > worst {
            worst = rel;
        }
    }
    Ok(worst)
}

/// Draws `count` distinct indices in `0..total` (seeded partial
/// Fisher-Yates).
pub(crate) fn sample_indices(total: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    use rand::Rng;
    let mut all: Vec<usize> = (0..total).collect();
    let count = count.min(total);
    for i in 0..count {
        let j = rng.random_range(i..total);
        all.swap(i, j);
    }
    all.truncate(count);
    all
}

/// Flattened parameter order: `[w0, b0, w1, b1, ...]`, row-major inside each
/// tensor — matching the gradient list from `loss_and_gradients`.
fn locate(model: &Classifier, mut flat: usize) -> (usize, usize) {
    let mut tensor_idx = 0;
    for (w, b) in model.weights.iter().zip(&model.biases) {
        if flat < w.len() {
            return (tensor_idx, flat);
        }
        flat -= w.len();
        tensor_idx += 1;
        if flat < b.len() {
            return (tensor_idx, flat);
        }
        flat -= b.len();
        tensor_idx += 1;
    }
    unreachable!("flat index out of range")
}

fn read_param(model: &Classifier, flat: usize) -> f64 {
    let (idx, off) = locate(model, flat);
    let tensors: Vec<&Tensor> = model
        .weights
        .iter()
        .zip(&model.biases)
        .flat_map(|(w, b)| [w, b])
        .collect();
    tensors[idx].data()[off]
}

fn write_param(model: &mut Classifier, flat: usize, value: f64) {
    let (idx, off) = locate(model, flat);
    let mut tensors: Vec<&mut Tensor> = Vec::new();
    for (w, b) in model.weights.iter_mut().zip(model.biases.iter_mut()) {
        tensors.push(w);
        tensors.push(b);
    }
    tensors[idx].data_mut()[off] = value;
}

impl Classifier {
    /// Serializes dims plus all weights/biases into a BBR1 container.
    pub fn save(&self, path: &std::path::Path, extra_meta: &[(String, String)]) -> Result<()> {
        use crate::checkpoint::{write_container, Container};
        let mut c = Container::new();
        c.push_meta("kind", "classifier");
        let dims: Vec<String> = self.dims.iter().map(|d| d.to_string()).collect();
        c.push_meta("dims", dims.join(","));
        for (k, v) in extra_meta {
            c.push_meta(k.clone(), v.clone());
        }
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            c.push_tensor(format!("w{i}"), w.clone());
            c.push_tensor(format!("b{i}"), b.clone());
        }
        write_container(path, &c)
    }

    pub fn load(path: &std::path::Path) -> Result<Classifier> {
        Ok(Classifier::load_with_meta(path)?.0)
    }

    pub fn load_with_meta(path: &std::path::Path) -> Result<(Classifier, Vec<(String, String)>)> {
        use crate::checkpoint::read_container;
        let display = path.display().to_string();
        let c = read_container(path)?;
        if c.meta("kind") != Some("classifier") {
            return Err(Error::format(&display, "not a classifier container"));
        }
        let dims: Vec<usize> = c
            .meta("dims")
            .ok_or_else(|| Error::format(&display, "missing dims metadata"))?
            .split(',')
            .map(|t| t.parse().map_err(|_| Error::format(&display, "bad dims metadata")))
            .collect::<Result<_>>()?;
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(Error::format(&display, "degenerate dims metadata"));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (i, pair) in dims.windows(2).enumerate() {
            let w = c.require(path, &format!("w{i}"))?.clone();
            let b = c.require(path, &format!("b{i}"))?.clone();
            if w.shape() != [pair[0], pair[1]] || b.shape() != [pair[1]] {
                return Err(Error::format(
                    &display,
                    format!("layer {i} tensors do not match dims {pair:?}"),
                ));
            }
            weights.push(w);
            biases.push(b);
        }
        Ok((Classifier::from_parts(dims, weights, biases), c.meta))
    }
}

/// Builds one-hot soft targets from integer labels.
pub fn one_hot(labels: &[usize], n_classes: usize) -> Result<Tensor> {
    let mut t = Tensor::zeros(vec![labels.len(), n_classes]);
    for (r, &label) in labels.iter().enumerate() {
        if label >= n_classes {
            return Err(Error::invalid(format!(
                "label {label} out of range for {n_classes} classes"
            )));
        }
        t.row_mut(r)[label] = 1.0;
    }
    Ok(t)
}

/// Fraction of rows whose argmax prediction matches the label.
pub fn accuracy(model: &Classifier, images: &Tensor, labels: &[usize]) -> Result<f64> {
    if images.rows() != labels.len() {
        return Err(Error::shape(format!(
            "{} images vs {} labels",
            images.rows(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::invalid("accuracy over empty dataset"));
    }
    let probs = model.forward(images)?;
    let hits = labels
        .iter()
        .enumerate()
        .filter(|&(r, &label)| argmax(probs.row(r)) == label)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

#[derive(Debug, Clone)]
pub struct FitConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

/// Supervised training on fixed targets with per-epoch reshuffling. Returns
/// per-epoch mean losses; a non-finite loss aborts with a divergence error
/// carrying the global step index.
pub fn fit_classifier(
    model: &mut Classifier,
    images: &Tensor,
    targets: &Tensor,
    cfg: &FitConfig,
) -> Result<Vec<f64>> {
    use rand::seq::SliceRandom;
    if cfg.batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    if images.rows() == 0 {
        return Err(Error::invalid("cannot fit on an empty dataset"));
    }
    let n = images.rows();
    let mut opt = AdamState::for_classifier(model, cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut global_step: u64 = 0;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = gather_rows(images, chunk);
            let target = gather_rows(targets, chunk);
            let loss = train_step(model, &mut opt, &batch, &target)?;
            global_step += 1;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    step: global_step,
                    reason: format!("loss became {loss}"),
                });
            }
            weighted += loss * chunk.len() as f64;
        }
        epoch_losses.push(weighted / n as f64);
    }
    Ok(epoch_losses)
}

/// Copies the given rows of a matrix into a new tensor, in index order.
pub(crate) fn gather_rows(mat: &Tensor, rows: &[usize]) -> Tensor {
    let cols = mat.cols();
    let mut out = Tensor::zeros(vec![rows.len(), cols]);
    for (dst, &src) in rows.iter().enumerate() {
        out.row_mut(dst).copy_from_slice(mat.row(src));
    }
    out
}
