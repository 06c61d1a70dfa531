//! Task-discriminant decoding and information transfer rate bookkeeping.
//!
//! Training finds a spatial filter bank `W` that separates classes of
//! multi-channel epochs. With class means `Xbar_c`, grand mean `Xbar`, trial
//! count `N_t`, and class count `N_c`, the between- and within-class scatter
//! matrices are built from the horizontally stacked blocks
//!
//! ```text
//! H_b = (1/sqrt(N_c)) [Xbar_1 - Xbar, ..., Xbar_Nc - Xbar]
//! H_w = (1/sqrt(N_t)) [X_1 - Xbar_c(1), ..., X_Nt - Xbar_c(Nt)]
//! S_b = H_b H_b^T      S_w = H_w H_w^T
//! ```
//!
//! `W`'s columns are the leading generalized eigenvectors of
//! `(S_b, S_w + gamma * (tr(S_w)/N_ch) * I)`, i.e. directions with maximal
//! between-class over within-class energy. Classification correlates the
//! filtered trial with per-class filtered templates and sums the Pearson
//! coefficients across components.

use std::collections::BTreeMap;

use ndarray::{Array2, Array3, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg;
use crate::stats::pearson;

// ---------------------------------------------------------------------------
// Recording
// ---------------------------------------------------------------------------

/// A labeled set of epochs: `n_trials x n_channels x n_samples`.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub data: Array3<f64>,
    pub labels: Vec<u32>,
    pub sample_rate_hz: f64,
    /// Visual-pathway latency compensation applied when the epochs were cut;
    /// carried as metadata.
    pub latency_offset_s: f64,
}

impl Recording {
    pub fn new(
        data: Array3<f64>,
        labels: Vec<u32>,
        sample_rate_hz: f64,
        latency_offset_s: f64,
    ) -> Result<Self> {
        if labels.len() != data.shape()[0] {
            return Err(Error::InvalidParam(format!(
                "{} labels for {} trials",
                labels.len(),
                data.shape()[0]
            )));
        }
        if !sample_rate_hz.is_finite() || sample_rate_hz <= 0.0 {
            return Err(Error::InvalidParam(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if !latency_offset_s.is_finite() || latency_offset_s < 0.0 {
            return Err(Error::InvalidParam(format!(
                "latency offset must be non-negative, got {latency_offset_s}"
            )));
        }
        Ok(Recording { data, labels, sample_rate_hz, latency_offset_s })
    }

    pub fn n_trials(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn n_channels(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn n_samples(&self) -> usize {
        self.data.shape()[2]
    }

    /// Sorted distinct labels present in the recording.
    pub fn class_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.labels.clone();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Trial indices carrying `class_id`, in recording order.
    pub fn trials_of(&self, class_id: u32) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| (l == class_id).then_some(i))
            .collect()
    }

    pub fn trial(&self, index: usize) -> ArrayView2<'_, f64> {
        self.data.index_axis(ndarray::Axis(0), index)
    }

    /// Channel-weighted single trace of one trial: `w^T X`.
    pub fn weighted_trace(&self, trial: usize, weights: &[f64]) -> Result<Vec<f64>> {
        if weights.len() != self.n_channels() {
            return Err(Error::InvalidParam(format!(
                "{} weights for {} channels",
                weights.len(),
                self.n_channels()
            )));
        }
        let x = self.trial(trial);
        let mut out = vec![0.0; self.n_samples()];
        for (c, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (t, o) in out.iter_mut().enumerate() {
                *o += w * x[[c, t]];
            }
        }
        Ok(out)
    }

    /// New recording containing the given trials, in the given order.
    pub fn select_trials(&self, indices: &[usize]) -> Result<Recording> {
        if indices.iter().any(|&i| i >= self.n_trials()) {
            return Err(Error::InvalidParam("trial index out of range".into()));
        }
        let mut data = Array3::zeros((indices.len(), self.n_channels(), self.n_samples()));
        let mut labels = Vec::with_capacity(indices.len());
        for (dst, &src) in indices.iter().enumerate() {
            data.index_axis_mut(ndarray::Axis(0), dst).assign(&self.trial(src));
            labels.push(self.labels[src]);
        }
        Recording::new(data, labels, self.sample_rate_hz, self.latency_offset_s)
    }

    /// Trials whose label is in `class_ids`, preserving recording order.
    pub fn restrict_to_classes(&self, class_ids: &[u32]) -> Result<Recording> {
        let keep: Vec<usize> = self
            .labels
            .iter()
            .enumerate()
            .filter_map(|(i, l)| class_ids.contains(l).then_some(i))
            .collect();
        if keep.is_empty() {
            return Err(Error::TooFewTrials {
                scope: "restricted recording".into(),
                found: 0,
                needed: 1,
            });
        }
        self.select_trials(&keep)
    }

    fn class_mean(&self, trials: &[usize]) -> Array2<f64> {
        let mut mean = Array2::<f64>::zeros((self.n_channels(), self.n_samples()));
        for &i in trials {
            mean = mean + self.trial(i);
        }
        mean / trials.len() as f64
    }
}

// ---------------------------------------------------------------------------
// Scatter matrices and training
// ---------------------------------------------------------------------------

/// Between- and within-class scatter matrices `(S_b, S_w)`.
pub fn scatter_matrices(rec: &Recording) -> Result<(Array2<f64>, Array2<f64>)> {
    let classes = rec.class_ids();
    if classes.len() < 2 {
        return Err(Error::TooFewTrials {
            scope: "recording classes".into(),
            found: classes.len(),
            needed: 2,
        });
    }
    for &c in &classes {
        let n = rec.trials_of(c).len();
        if n < 2 {
            return Err(Error::DegenerateClass {
                class_id: c,
                reason: format!("only {n} trial(s); scatter needs at least 2"),
            });
        }
    }
    let n_ch = rec.n_channels();
    let n_t = rec.n_trials();
    let grand = {
        let all: Vec<usize> = (0..n_t).collect();
        rec.class_mean(&all)
    };
    let mut s_b = Array2::<f64>::zeros((n_ch, n_ch));
    let mut s_w = Array2::<f64>::zeros((n_ch, n_ch));
    for &c in &classes {
        let trials = rec.trials_of(c);
        let mean_c = rec.class_mean(&trials);
        let d = &mean_c - &grand;
        s_b = s_b + d.dot(&d.t());
        for &i in &trials {
            let e = &rec.trial(i) - &mean_c;
            s_w = s_w + e.dot(&e.t());
        }
    }
    s_b /= classes.len() as f64;
    s_w /= n_t as f64;
    Ok((s_b, s_w))
}

/// Fisher trace objective `tr(W^T S_b W) / tr(W^T S_w W)` of a filter bank.
pub fn fisher_objective(s_b: &Array2<f64>, s_w: &Array2<f64>, w: &Array2<f64>) -> f64 {
    let num = w.t().dot(s_b).dot(w).diag().sum();
    let den = w.t().dot(s_w).dot(w).diag().sum();
    num / den
}

/// A trained decoder: spatial filters plus filtered class templates.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderModel {
    /// `n_channels x n_components` filter bank, leading component first.
    pub weights: Array2<f64>,
    /// Per-class filtered mean responses, `n_components x n_samples` each.
    pub templates: BTreeMap<u32, Array2<f64>>,
    pub n_components: usize,
    pub shrinkage_gamma: f64,
    pub sample_rate_hz: f64,
}

impl DecoderModel {
    pub fn class_ids(&self) -> Vec<u32> {
        self.templates.keys().copied().collect()
    }

    pub fn n_channels(&self) -> usize {
        self.weights.nrows()
    }

    pub fn template_samples(&self) -> usize {
        self.templates.values().next().map_or(0, |t| t.ncols())
    }
}

/// Default number of spatial components retained by training.
pub const DEFAULT_N_COMPONENTS: usize = 8;

/// Default shrinkage weight on the within-class scatter ridge.
pub const DEFAULT_SHRINKAGE_GAMMA: f64 = 0.01;

/// Train the discriminant decoder.
///
/// `W` holds the `n_components` leading generalized eigenvectors of
/// `(S_b, S_w + gamma * nu * I)` where `nu = tr(S_w)/n_channels` (or 1 when
/// `S_w` vanishes, so a fully degenerate within-class scatter still yields a
/// defined, identity-regularized problem).
pub fn train_tdca(rec: &Recording, n_components: usize, gamma: f64) -> Result<DecoderModel> {
    let n_ch = rec.n_channels();
    if n_components == 0 || n_components > n_ch {
        return Err(Error::InvalidParam(format!(
            "n_components must be in 1..={n_ch}, got {n_components}"
        )));
    }
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(Error::InvalidParam(format!("gamma must be >= 0, got {gamma}")));
    }
    let (s_b, s_w) = scatter_matrices(rec)?;
    let trace = s_w.diag().sum();
    let nu = if trace > 0.0 { trace / n_ch as f64 } else { 1.0 };
    let mut s_w_reg = s_w;
    for i in 0..n_ch {
        s_w_reg[[i, i]] += gamma * nu;
    }
    let (_values, vectors) = linalg::eigh_generalized(&s_b, &s_w_reg)
        .map_err(|e| Error::EigSolverFailure(format!("discriminant eigenproblem: {e}")))?;
    let weights = vectors.slice(ndarray::s![.., ..n_components]).to_owned();
    let mut templates = BTreeMap::new();
    for c in rec.class_ids() {
        let mean_c = rec.class_mean(&rec.trials_of(c));
        templates.insert(c, weights.t().dot(&mean_c));
    }
    Ok(DecoderModel {
        weights,
        templates,
        n_components,
        shrinkage_gamma: gamma,
        sample_rate_hz: rec.sample_rate_hz,
    })
}

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

/// Outcome of scoring one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub predicted: u32,
    /// `(class_id, score)` in ascending class order.
    pub scores: Vec<(u32, f64)>,
    /// Set when the filtered trial had zero variance in every component; all
    /// scores are 0 and the lowest class id is returned.
    pub degenerate_trial: bool,
}

fn window_samples(model: &DecoderModel, window_s: f64) -> Result<usize> {
    if !window_s.is_finite() || window_s <= 0.0 {
        return Err(Error::InvalidParam(format!("window must be positive, got {window_s} s")));
    }
    let n = (window_s * model.sample_rate_hz).round() as usize;
    if n < 2 {
        return Err(Error::InvalidParam(format!(
            "window of {window_s} s holds fewer than 2 samples at {} Hz",
            model.sample_rate_hz
        )));
    }
    Ok(n)
}

/// Correlation-sum classification of a single `n_channels x n_samples` trial
/// over the first `window_s` seconds.
pub fn classify(
    model: &DecoderModel,
    trial: ArrayView2<'_, f64>,
    window_s: f64,
) -> Result<Classification> {
    let win = window_samples(model, window_s)?;
    if trial.nrows() != model.n_channels() {
        return Err(Error::InvalidParam(format!(
            "trial has {} channels, model expects {}",
            trial.nrows(),
            model.n_channels()
        )));
    }
    if win > trial.ncols() || win > model.template_samples() {
        return Err(Error::WindowTooLong {
            window_samples: win,
            available_samples: trial.ncols().min(model.template_samples()),
        });
    }
    let proj = model.weights.t().dot(&trial.slice(ndarray::s![.., ..win]));
    let degenerate = (0..proj.nrows()).all(|j| {
        let row = proj.row(j);
        crate::stats::variance(row.as_slice().unwrap_or(&row.to_vec())) == 0.0
    });
    let mut scores = Vec::with_capacity(model.templates.len());
    for (&c, tmpl) in &model.templates {
        let score = if degenerate {
            0.0
        } else {
            let mut sum = 0.0;
            for j in 0..model.n_components {
                let a = proj.row(j).to_vec();
                let b = tmpl.slice(ndarray::s![j, ..win]).to_vec();
                sum += pearson(&a, &b);
            }
            sum
        };
        scores.push((c, score));
    }
    // Arg-max with ties resolved toward the lowest class id: strict
    // greater-than on a class-ascending scan.
    let mut best = scores[0];
    for &(c, s) in &scores[1..] {
        if s > best.1 {
            best = (c, s);
        }
    }
    Ok(Classification { predicted: best.0, scores, degenerate_trial: degenerate })
}

/// Accuracy plus row-stochastic confusion matrix over the model's classes.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    /// `confusion[[i, j]]` = fraction of class `class_ids[i]` trials decoded
    /// as `class_ids[j]`. Rows with no trials are left at zero.
    pub confusion: Array2<f64>,
    pub class_ids: Vec<u32>,
    pub n_trials: usize,
}

pub fn evaluate(model: &DecoderModel, rec: &Recording, window_s: f64) -> Result<Evaluation> {
    let class_ids = model.class_ids();
    let index_of: BTreeMap<u32, usize> =
        class_ids.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    for &l in &rec.labels {
        if !index_of.contains_key(&l) {
            return Err(Error::UnknownClass { class_id: l });
        }
    }
    let k = class_ids.len();
    let mut counts = Array2::<f64>::zeros((k, k));
    let mut correct = 0usize;
    for i in 0..rec.n_trials() {
        let out = classify(model, rec.trial(i), window_s)?;
        let t = index_of[&rec.labels[i]];
        let p = index_of[&out.predicted];
        counts[[t, p]] += 1.0;
        if out.predicted == rec.labels[i] {
            correct += 1;
        }
    }
    let mut confusion = counts;
    for mut row in confusion.rows_mut() {
        let total: f64 = row.sum();
        if total > 0.0 {
            row.mapv_inplace(|v| v / total);
        }
    }
    Ok(Evaluation {
        accuracy: correct as f64 / rec.n_trials() as f64,
        confusion,
        class_ids,
        n_trials: rec.n_trials(),
    })
}

/// Pairwise Pearson correlations between the filtered class-mean responses of
/// a recording, over the first `window_s` seconds. Entry `(i, j)` refers to
/// the sorted class list returned alongside.
pub fn class_correlation_matrix(
    model: &DecoderModel,
    rec: &Recording,
    window_s: f64,
) -> Result<(Vec<u32>, Array2<f64>)> {
    let win = window_samples(model, window_s)?;
    if win > rec.n_samples() {
        return Err(Error::WindowTooLong {
            window_samples: win,
            available_samples: rec.n_samples(),
        });
    }
    let classes = rec.class_ids();
    let mut flattened: Vec<Vec<f64>> = Vec::with_capacity(classes.len());
    for &c in &classes {
        let mean_c = rec.class_mean(&rec.trials_of(c));
        let proj = model.weights.t().dot(&mean_c.slice(ndarray::s![.., ..win]));
        let flat: Vec<f64> = proj.iter().copied().collect();
        if crate::stats::variance(&flat) == 0.0 {
            return Err(Error::DegenerateTemplate { class_id: c });
        }
        flattened.push(flat);
    }
    let k = classes.len();
    let mut m = Array2::<f64>::zeros((k, k));
    for i in 0..k {
        m[[i, i]] = 1.0;
        for j in i + 1..k {
            let r = pearson(&flattened[i], &flattened[j]);
            m[[i, j]] = r;
            m[[j, i]] = r;
        }
    }
    Ok((classes, m))
}

// ---------------------------------------------------------------------------
// Information transfer rate
// ---------------------------------------------------------------------------

/// ITR of an `m`-class selection at accuracy `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ItrResult {
    pub m: usize,
    pub p: f64,
    pub stim_time_s: f64,
    pub gaze_time_s: f64,
    /// Bits conveyed per selection.
    pub bits_per_trial: f64,
    /// Bits per minute including the gaze-shift overhead.
    pub itr_bpm: f64,
    /// Bits per second over stimulation time only.
    pub itr_star_bps: f64,
}

/// Information transfer rate.
///
/// `bits = log2 M + P log2 P + (1-P) log2((1-P)/(M-1))`, with the `P = 0`
/// and `P = 1` limits taken analytically. The per-minute rate divides by
/// stimulation plus gaze-shift time; the starred per-second rate divides by
/// stimulation time alone.
pub fn itr(m: usize, p: f64, stim_time_s: f64, gaze_time_s: f64) -> Result<ItrResult> {
    if m < 2 {
        return Err(Error::InvalidParam(format!("ITR needs at least 2 classes, got {m}")));
    }
    if !(0.0..=1.0).contains(&p) || !p.is_finite() {
        return Err(Error::InvalidParam(format!("accuracy must be in [0, 1], got {p}")));
    }
    if !stim_time_s.is_finite() || stim_time_s <= 0.0 {
        return Err(Error::InvalidParam(format!(
            "stimulation time must be positive, got {stim_time_s}"
        )));
    }
    if !gaze_time_s.is_finite() || gaze_time_s < 0.0 {
        return Err(Error::InvalidParam(format!(
            "gaze-shift time must be non-negative, got {gaze_time_s}"
        )));
    }
    let m_f = m as f64;
    let bits = if p == 1.0 {
        m_f.log2()
    } else if p == 0.0 {
        (m_f / (m_f - 1.0)).log2()
    } else {
        m_f.log2() + p * p.log2() + (1.0 - p) * ((1.0 - p) / (m_f - 1.0)).log2()
    };
    Ok(ItrResult {
        m,
        p,
        stim_time_s,
        gaze_time_s,
        bits_per_trial: bits,
        itr_bpm: 60.0 * bits / (stim_time_s + gaze_time_s),
        itr_star_bps: bits / stim_time_s,
    })
}
