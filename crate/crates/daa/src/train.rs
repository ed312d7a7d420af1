//! Toy full-batch gradient-descent training.
//!
//! The synthetic task is built so that the class signal lives only in the
//! per-residue interaction scores: every sample carries one residue at
//! `+c*u` and one at `-c*u` (a fixed unit direction), so the row-mean of
//! the embeddings is class-uninformative by construction. Class 0 samples
//! put a high score on the `+c*u` residue, class 1 on the `-c*u` residue.
//! A model that routes attention by the scores pools `+c*u` for one class
//! and `-c*u` for the other and separates linearly; a static mean-pool
//! cannot.
//!
//! The optimizer is plain full-batch gradient descent on binary logistic
//! loss. Per-sample forward/backward passes run in parallel; the gradient
//! reduction is sequential in sample order, so training is deterministic.

use rayon::prelude::*;

use crate::analysis::{self, two_proportion_z_test, ZTestResult};
use crate::attention::{backward_mode, forward_mode, AttnMode, DaaGrads, DaaParams};
use crate::fmt::fmt_sig6;
use crate::ljscore::smooth_scores;
use crate::mat::{dot, Mat};
use crate::rng::SeededRng;
use crate::structio::EmbeddingMatrix;

/// Signal magnitude along the shared direction `u`.
const SIGNAL_SCALE: f64 = 3.0;
/// Standard deviation of the embedding noise.
const NOISE_SD: f64 = 0.5;
/// Raw interaction score planted on the class's signal residue.
const SCORE_HI: f64 = 10.0;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("n_samples must be even and at least 4, got {0}")]
    BadSampleCount(usize),
    #[error("need at least 4 residues per sample, got {0}")]
    BadResidueCount(usize),
    #[error("need embedding dimension at least 2, got {0}")]
    BadDim(usize),
    #[error("learning rate must be positive and finite, got {0}")]
    BadLearningRate(f64),
    #[error("l2 penalty must be non-negative and finite, got {0}")]
    BadL2(f64),
    #[error("task has no samples")]
    EmptyTask,
    #[error("train split must leave samples on both sides, got {n_train} of {total}")]
    BadSplit { n_train: usize, total: usize },
    #[error("sample {sample}: scores length does not match residue count")]
    SampleShape { sample: usize },
    #[error("sample {sample}: embedding dimension differs from sample 1")]
    MixedDims { sample: usize },
    #[error("sample {sample}: label must be 0 or 1")]
    BadLabel { sample: usize },
    #[error("{split} split does not contain both classes")]
    MissingClass { split: &'static str },
    #[error("loss diverged to a non-finite value at step {step}")]
    Divergence { step: usize },
    #[error("mismatched test-set sizes: {a} vs {b}")]
    TestSetMismatch { a: u64, b: u64 },
    #[error(transparent)]
    Attention(#[from] crate::attention::Error),
    #[error(transparent)]
    Score(#[from] crate::ljscore::Error),
    #[error(transparent)]
    Analysis(#[from] analysis::Error),
}

/// One training instance: residue embeddings, the raw (pre-smoothing)
/// interaction scores, and a binary label. Smoothing happens inside the
/// forward pass with the model's current beta, which is trained jointly.
#[derive(Clone, Debug, PartialEq)]
pub struct ToySample {
    pub embeddings: EmbeddingMatrix,
    pub scores: Vec<f64>,
    pub label: u8,
}

/// A deterministic synthetic classification task with a fixed train/test
/// split: the first `n_train` samples train, the rest test.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyTask {
    pub samples: Vec<ToySample>,
    pub n_train: usize,
    pub seed: u64,
}

impl ToyTask {
    pub fn train_samples(&self) -> &[ToySample] {
        &self.samples[..self.n_train]
    }

    pub fn test_samples(&self) -> &[ToySample] {
        &self.samples[self.n_train..]
    }

    /// Structural checks: consistent shapes, binary labels, and both
    /// classes present on both sides of the split.
    pub fn validate(&self) -> Result<(), Error> {
        if self.samples.is_empty() {
            return Err(Error::EmptyTask);
        }
        if self.n_train == 0 || self.n_train >= self.samples.len() {
            return Err(Error::BadSplit { n_train: self.n_train, total: self.samples.len() });
        }
        let d = self.samples[0].embeddings.d();
        for (i, s) in self.samples.iter().enumerate() {
            let sample = i + 1;
            if s.embeddings.d() != d {
                return Err(Error::MixedDims { sample });
            }
            if s.scores.len() != s.embeddings.n() {
                return Err(Error::SampleShape { sample });
            }
            if s.label > 1 {
                return Err(Error::BadLabel { sample });
            }
        }
        for (split, samples) in
            [("train", self.train_samples()), ("test", self.test_samples())]
        {
            let has0 = samples.iter().any(|s| s.label == 0);
            let has1 = samples.iter().any(|s| s.label == 1);
            if !(has0 && has1) {
                return Err(Error::MissingClass { split });
            }
        }
        Ok(())
    }

    /// The standard demonstration fixture: 200 samples of 6 residues in 4
    /// dimensions, split 100/100.
    pub fn default_task() -> ToyTask {
        make_toy_task(200, 6, 4, 40).expect("default dimensions are valid")
    }
}

/// Build the synthetic task. Labels alternate 0,1,0,1,... so both halves of
/// the split are balanced. Draw order per seed: first the unit direction
/// `u`, then per sample the n*d embedding noise values row-major.
pub fn make_toy_task(n_samples: usize, n: usize, d: usize, seed: u64) -> Result<ToyTask, Error> {
    if n_samples < 4 || !n_samples.is_multiple_of(2) {
        return Err(Error::BadSampleCount(n_samples));
    }
    if n < 4 {
        return Err(Error::BadResidueCount(n));
    }
    if d < 2 {
        return Err(Error::BadDim(d));
    }
    let mut rng = SeededRng::new(seed);
    let mut u = rng.normal_vec(d);
    let norm = dot(&u, &u).sqrt();
    for x in &mut u {
        *x /= norm;
    }

    let mut samples = Vec::with_capacity(n_samples);
    for s in 0..n_samples {
        let label = (s % 2) as u8;
        let mut values = Mat::zeros(n, d);
        for i in 0..n {
            // Residue 0 carries +c*u, residue 1 carries -c*u; their sum
            // cancels in the row-mean. Remaining residues are pure noise.
            let base = match i {
                0 => SIGNAL_SCALE,
                1 => -SIGNAL_SCALE,
                _ => 0.0,
            };
            for (j, &u_j) in u.iter().enumerate() {
                values.set(i, j, base * u_j + NOISE_SD * rng.normal());
            }
        }
        let mut scores = vec![0.0; n];
        // The class determines which signal residue gets the high score.
        scores[label as usize] = SCORE_HI;
        samples.push(ToySample {
            embeddings: EmbeddingMatrix { values },
            scores,
            label,
        });
    }
    Ok(ToyTask { samples, n_train: n_samples / 2, seed })
}

/// Return a copy of the task with the labels permuted (Fisher-Yates on the
/// label sequence), decoupling labels from the score signal.
pub fn shuffle_labels(task: &ToyTask, seed: u64) -> ToyTask {
    let mut rng = SeededRng::new(seed);
    let mut labels: Vec<u8> = task.samples.iter().map(|s| s.label).collect();
    for i in (1..labels.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        labels.swap(i, j);
    }
    let mut out = task.clone();
    for (s, l) in out.samples.iter_mut().zip(labels) {
        s.label = l;
    }
    out
}

/// Gradient-descent settings. `steps = 0` is allowed and returns the
/// initial model unchanged (with one metrics record).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub steps: usize,
    pub seed: u64,
    pub l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 0.05, steps: 500, seed: 17, l2: 0.0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::BadLearningRate(self.learning_rate));
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return Err(Error::BadL2(self.l2));
        }
        Ok(())
    }
}

/// Binary logistic read-out on a pooled representation.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearHead {
    pub w: Vec<f64>,
    pub b: f64,
}

impl LinearHead {
    pub fn zeros(d: usize) -> Self {
        Self { w: vec![0.0; d], b: 0.0 }
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        dot(&self.w, x) + self.b
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `softplus(t) - y*t`.
fn logistic_loss(t: f64, y: f64) -> f64 {
    let softplus = if t > 0.0 { t + (-t).exp().ln_1p() } else { t.exp().ln_1p() };
    softplus - y * t
}

/// Metrics at one step: full-batch training loss and both accuracies,
/// evaluated *before* the update of that step.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub step: usize,
    pub loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
}

/// History plus the final test-set tally used for significance testing.
#[derive(Clone, Debug, PartialEq)]
pub struct RunMetrics {
    pub history: Vec<MetricsRecord>,
    pub test_correct: u64,
    pub test_total: u64,
}

impl RunMetrics {
    pub fn final_test_accuracy(&self) -> f64 {
        self.test_correct as f64 / self.test_total as f64
    }
}

/// Render a metrics history as TSV: `step<TAB>loss<TAB>train_acc<TAB>test_acc`.
pub fn format_metrics_tsv(history: &[MetricsRecord]) -> String {
    let mut out = String::from("# columns: step loss train_acc test_acc\n");
    for r in history {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            r.step,
            fmt_sig6(r.loss),
            fmt_sig6(r.train_acc),
            fmt_sig6(r.test_acc)
        ));
    }
    out
}

/// A trained attention model with its logistic head.
#[derive(Clone, Debug)]
pub struct TrainedDaa {
    pub params: DaaParams,
    pub head: LinearHead,
    pub metrics: RunMetrics,
    pub mode: AttnMode,
}

/// A trained mean-pool baseline.
#[derive(Clone, Debug)]
pub struct TrainedBaseline {
    pub head: LinearHead,
    pub metrics: RunMetrics,
}

struct SamplePass {
    loss: f64,
    correct: bool,
    grads: Option<(DaaGrads, f64, Vec<f64>, f64)>, // (attention grads, d_beta, d_head_w, d_head_b)
}

/// Forward (and optionally backward) pass for one sample under the given
/// ablation mode.
fn daa_sample_pass(
    sample: &ToySample,
    params: &DaaParams,
    head: &LinearHead,
    mode: AttnMode,
    with_grads: bool,
) -> Result<SamplePass, Error> {
    let s_hat = smooth_scores(&sample.scores, params.beta)?;
    let out = forward_mode(&sample.embeddings, &s_hat, params, mode)?;
    let t = head.logit(&out.representation);
    let y = sample.label as f64;
    let loss = logistic_loss(t, y);
    let correct = (t > 0.0) == (sample.label == 1);
    if !with_grads {
        return Ok(SamplePass { loss, correct, grads: None });
    }

    let residual = sigmoid(t) - y;
    let upstream: Vec<f64> = head.w.iter().map(|w| residual * w).collect();
    let grads = backward_mode(&sample.embeddings, &s_hat, params, &upstream, mode)?;

    // Chain through the smoothing: d s_hat_i / d beta = v_i - mean(v).
    let mean = sample.scores.iter().sum::<f64>() / sample.scores.len() as f64;
    let d_beta = grads
        .s_hat
        .iter()
        .zip(&sample.scores)
        .map(|(g, v)| g * (v - mean))
        .sum::<f64>();

    let d_head_w: Vec<f64> = out.representation.iter().map(|p| residual * p).collect();
    Ok(SamplePass { loss, correct, grads: Some((grads, d_beta, d_head_w, residual)) })
}

struct BatchResult {
    loss: f64,
    accuracy: f64,
    correct: u64,
    grads: Option<BatchGrads>,
}

struct BatchGrads {
    w_q: Mat,
    w_k: Mat,
    w_v: Mat,
    q_pool: Vec<f64>,
    gamma: f64,
    beta: f64,
    head_w: Vec<f64>,
    head_b: f64,
}

/// Run all samples in parallel, then reduce losses and gradients in sample
/// order so the result is independent of scheduling.
fn daa_batch(
    samples: &[ToySample],
    params: &DaaParams,
    head: &LinearHead,
    mode: AttnMode,
    with_grads: bool,
) -> Result<BatchResult, Error> {
    let passes: Vec<SamplePass> = samples
        .par_iter()
        .map(|s| daa_sample_pass(s, params, head, mode, with_grads))
        .collect::<Result<_, _>>()?;

    let n = samples.len() as f64;
    let mut loss = 0.0;
    let mut correct = 0u64;
    let mut grads = with_grads.then(|| BatchGrads {
        w_q: Mat::zeros(params.d(), params.d_h()),
        w_k: Mat::zeros(params.d(), params.d_h()),
        w_v: Mat::zeros(params.d(), params.d_v()),
        q_pool: vec![0.0; params.d()],
        gamma: 0.0,
        beta: 0.0,
        head_w: vec![0.0; head.w.len()],
        head_b: 0.0,
    });
    for pass in &passes {
        loss += pass.loss / n;
        correct += pass.correct as u64;
        if let (Some(acc), Some((g, d_beta, d_hw, d_hb))) = (grads.as_mut(), pass.grads.as_ref())
        {
            acc.w_q.add_scaled(&g.w_q, 1.0 / n);
            acc.w_k.add_scaled(&g.w_k, 1.0 / n);
            acc.w_v.add_scaled(&g.w_v, 1.0 / n);
            for (a, b) in acc.q_pool.iter_mut().zip(&g.q_pool) {
                *a += b / n;
            }
            acc.gamma += g.gamma / n;
            acc.beta += d_beta / n;
            for (a, b) in acc.head_w.iter_mut().zip(d_hw) {
                *a += b / n;
            }
            acc.head_b += d_hb / n;
        }
    }
    Ok(BatchResult { loss, accuracy: correct as f64 / n, correct, grads })
}

/// Gradient step with L2 decay on matrices and vectors (scalars and the
/// head bias are not decayed). Beta is clamped back into [0, 1].
fn apply_daa_update(params: &mut DaaParams, head: &mut LinearHead, g: &BatchGrads, lr: f64, l2: f64) {
    let decay = 1.0 - lr * l2;
    for (mat, gm) in [
        (&mut params.w_q, &g.w_q),
        (&mut params.w_k, &g.w_k),
        (&mut params.w_v, &g.w_v),
    ] {
        for v in mat.data_mut() {
            *v *= decay;
        }
        mat.add_scaled(gm, -lr);
    }
    for (p, gv) in params.q_pool.iter_mut().zip(&g.q_pool) {
        *p = *p * decay - lr * gv;
    }
    params.gamma -= lr * g.gamma;
    params.beta = (params.beta - lr * g.beta).clamp(0.0, 1.0);
    for (w, gv) in head.w.iter_mut().zip(&g.head_w) {
        *w = *w * decay - lr * gv;
    }
    head.b -= lr * g.head_b;
}

/// Train the full model (or an ablation) on the task's train split.
pub fn train_daa_with_mode(
    task: &ToyTask,
    config: &TrainConfig,
    mode: AttnMode,
) -> Result<TrainedDaa, Error> {
    task.validate()?;
    config.validate()?;
    let d = task.samples[0].embeddings.d();
    let mut params = DaaParams::init(d, d, d, config.seed)?;
    let mut head = LinearHead::zeros(d);

    let mut history = Vec::with_capacity(config.steps + 1);
    let mut test_correct = 0;
    for step in 0..=config.steps {
        let with_grads = step < config.steps;
        let train = daa_batch(task.train_samples(), &params, &head, mode, with_grads)
            .map_err(|e| step_error(e, step))?;
        if !train.loss.is_finite() {
            return Err(Error::Divergence { step });
        }
        let test = daa_batch(task.test_samples(), &params, &head, mode, false)
            .map_err(|e| step_error(e, step))?;
        history.push(MetricsRecord {
            step,
            loss: train.loss,
            train_acc: train.accuracy,
            test_acc: test.accuracy,
        });
        if let Some(g) = &train.grads {
            apply_daa_update(&mut params, &mut head, g, config.learning_rate, config.l2);
        } else {
            test_correct = test.correct;
        }
    }
    let test_total = task.test_samples().len() as u64;
    Ok(TrainedDaa {
        params,
        head,
        metrics: RunMetrics { history, test_correct, test_total },
        mode,
    })
}

/// Non-finite intermediates during a step are divergence, not input errors.
fn step_error(e: Error, step: usize) -> Error {
    match e {
        Error::Attention(crate::attention::Error::NonFinite(_)) => Error::Divergence { step },
        other => other,
    }
}

/// Train the full docking-aware model.
pub fn train_daa_classifier(task: &ToyTask, config: &TrainConfig) -> Result<TrainedDaa, Error> {
    train_daa_with_mode(task, config, AttnMode::Full)
}

/// Train a logistic head on the row-mean of the embeddings, ignoring the
/// interaction scores entirely.
pub fn train_static_baseline(
    task: &ToyTask,
    config: &TrainConfig,
) -> Result<TrainedBaseline, Error> {
    task.validate()?;
    config.validate()?;
    let d = task.samples[0].embeddings.d();
    let mut head = LinearHead::zeros(d);

    let mean_features = |samples: &[ToySample]| -> Vec<(Vec<f64>, f64)> {
        samples
            .iter()
            .map(|s| {
                let n = s.embeddings.n();
                let mut x = vec![0.0; d];
                for i in 0..n {
                    for (j, xv) in x.iter_mut().enumerate() {
                        *xv += s.embeddings.values.get(i, j) / n as f64;
                    }
                }
                (x, s.label as f64)
            })
            .collect()
    };
    let train_feats = mean_features(task.train_samples());
    let test_feats = mean_features(task.test_samples());

    let eval = |head: &LinearHead, feats: &[(Vec<f64>, f64)]| -> (f64, f64, u64) {
        let mut loss = 0.0;
        let mut correct = 0u64;
        for (x, y) in feats {
            let t = head.logit(x);
            loss += logistic_loss(t, *y) / feats.len() as f64;
            correct += ((t > 0.0) == (*y == 1.0)) as u64;
        }
        (loss, correct as f64 / feats.len() as f64, correct)
    };

    let mut history = Vec::with_capacity(config.steps + 1);
    let mut test_correct = 0;
    for step in 0..=config.steps {
        let (loss, train_acc, _) = eval(&head, &train_feats);
        if !loss.is_finite() {
            return Err(Error::Divergence { step });
        }
        let (_, test_acc, correct) = eval(&head, &test_feats);
        history.push(MetricsRecord { step, loss, train_acc, test_acc });
        if step == config.steps {
            test_correct = correct;
            break;
        }
        let n = train_feats.len() as f64;
        let mut d_w = vec![0.0; d];
        let mut d_b = 0.0;
        for (x, y) in &train_feats {
            let residual = sigmoid(head.logit(x)) - y;
            for (gw, xv) in d_w.iter_mut().zip(x) {
                *gw += residual * xv / n;
            }
            d_b += residual / n;
        }
        let decay = 1.0 - config.learning_rate * config.l2;
        for (w, gv) in head.w.iter_mut().zip(&d_w) {
            *w = *w * decay - config.learning_rate * gv;
        }
        head.b -= config.learning_rate * d_b;
    }
    let test_total = task.test_samples().len() as u64;
    Ok(TrainedBaseline { head, metrics: RunMetrics { history, test_correct, test_total } })
}

/// Accuracy delta and two-proportion z-test between two runs evaluated on
/// test sets of the same size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunComparison {
    pub accuracy_delta: f64,
    pub ztest: ZTestResult,
}

pub fn compare_runs(a: &RunMetrics, b: &RunMetrics) -> Result<RunComparison, Error> {
    if a.test_total != b.test_total {
        return Err(Error::TestSetMismatch { a: a.test_total, b: b.test_total });
    }
    let ztest = two_proportion_z_test(a.test_correct, a.test_total, b.test_correct, b.test_total)?;
    Ok(RunComparison {
        accuracy_delta: a.final_test_accuracy() - b.final_test_accuracy(),
        ztest,
    })
}
