//! Two-stage stimulus code selection.
//!
//! Stage one picks a group-level subset from a large candidate pool by
//! simulated annealing, maximizing the minimum pairwise Euclidean distance
//! between the responses a group TRF predicts for each code — codes whose
//! predicted responses crowd together are hard to tell apart, so the
//! objective pushes them apart. Stage two personalizes: with a decoder
//! trained once on the full pool (spatial weights are never refitted), many
//! random subsets are scored by restricted classification accuracy and the
//! best one wins.
//!
//! Both stages are deterministic given their seeds. Annealing restarts and
//! subset-sampling chunks each own an RNG stream keyed by `(seed, index)`,
//! and ties are broken by the lowest index, so results never depend on
//! thread count or scheduling.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decoder::{classify, DecoderModel, Recording};
use crate::encoder::{predict_response, Trf};
use crate::error::{Error, Result};
use crate::rng::{KeyedStream, StreamKind};
use crate::stimgen::{upsample_to_signal, CodeSet, CodeStage};

// ---------------------------------------------------------------------------
// Configuration and trace
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SaConfig {
    pub iterations: usize,
    /// Starting temperature; `None` derives it from the spread (standard
    /// deviation) of all pairwise response distances in the pool.
    pub initial_temp: Option<f64>,
    /// Geometric cooling factor in (0, 1).
    pub cooling: f64,
    pub seed: u64,
    pub pool_size: usize,
    pub select_size: usize,
    /// Independent annealing runs; the best result wins, ties going to the
    /// lowest restart index.
    pub restarts: usize,
}

impl Default for SaConfig {
    fn default() -> Self {
        SaConfig {
            iterations: 20_000,
            initial_temp: None,
            cooling: 0.995,
            seed: 0,
            pool_size: 160,
            select_size: 40,
            restarts: 4,
        }
    }
}

impl SaConfig {
    fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be at least 1".into()));
        }
        if !(self.cooling > 0.0 && self.cooling < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "cooling must lie in (0, 1), got {}",
                self.cooling
            )));
        }
        if let Some(t) = self.initial_temp {
            if !t.is_finite() || t <= 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "initial_temp must be positive, got {t}"
                )));
            }
        }
        if self.restarts == 0 {
            return Err(Error::InvalidConfig("restarts must be at least 1".into()));
        }
        if self.select_size < 2 {
            return Err(Error::InvalidConfig(format!(
                "select_size must be at least 2 for a pairwise objective, got {}",
                self.select_size
            )));
        }
        if self.select_size > self.pool_size {
            return Err(Error::InvalidConfig(format!(
                "select_size {} exceeds pool_size {}",
                self.select_size, self.pool_size
            )));
        }
        Ok(())
    }
}

/// Audit trail of one annealing run (the winning restart).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationTrace {
    /// Objective of the proposed subset at each iteration.
    pub objective: Vec<f64>,
    pub accepted: Vec<bool>,
    pub temperature: Vec<f64>,
    /// Running maximum over accepted states; monotone non-decreasing.
    pub best_so_far: Vec<f64>,
    pub best_objective: f64,
    /// Selected class ids, ascending.
    pub best_subset: Vec<u32>,
    pub restart_index: usize,
}

// ---------------------------------------------------------------------------
// Objective
// ---------------------------------------------------------------------------

/// Predicted single-component response for every code in the pool, one row
/// per code in pool order, at the TRF's sample rate.
pub fn estimate_group_responses(trf_group: &Trf, pool: &CodeSet) -> Result<Array2<f64>> {
    let fs = trf_group.sample_rate_hz;
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(pool.codes.len());
    for code in &pool.codes {
        let stim = upsample_to_signal(code, fs)?;
        rows.push(predict_response(trf_group, &stim)?.samples);
    }
    let n_samples = rows[0].len();
    let mut out = Array2::<f64>::zeros((rows.len(), n_samples));
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            out[[i, j]] = v;
        }
    }
    Ok(out)
}

/// Minimum Euclidean distance over all unordered row pairs.
pub fn min_pairwise_distance(responses: &ArrayView2<f64>) -> Result<f64> {
    let n = responses.nrows();
    if n < 2 {
        return Err(Error::TooFewRows { found: n, needed: 2 });
    }
    let mut min = f64::INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            let d: f64 = responses
                .row(i)
                .iter()
                .zip(responses.row(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if d < min {
                min = d;
            }
        }
    }
    Ok(min)
}

fn distance_matrix(responses: &Array2<f64>) -> Array2<f64> {
    let n = responses.nrows();
    let mut d = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let dist: f64 = responses
                .row(i)
                .iter()
                .zip(responses.row(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            d[[i, j]] = dist;
            d[[j, i]] = dist;
        }
    }
    d
}

fn subset_objective(dist: &Array2<f64>, subset: &[usize]) -> f64 {
    let mut min = f64::INFINITY;
    for (a, &i) in subset.iter().enumerate() {
        for &j in &subset[(a + 1)..] {
            let d = dist[[i, j]];
            if d < min {
                min = d;
            }
        }
    }
    min
}

// ---------------------------------------------------------------------------
// Simulated annealing
// ---------------------------------------------------------------------------

/// Select `config.select_size` codes out of the pool by simulated annealing
/// on the minimum pairwise response distance.
///
/// The move swaps one selected code with one unselected code (both uniform);
/// improvements are always accepted, worsenings with probability
/// `exp(delta/T)`; the temperature cools geometrically each iteration. Each
/// restart runs on its own RNG stream and the best restart wins.
pub fn sa_optimize(
    pool: &CodeSet,
    responses: &Array2<f64>,
    config: &SaConfig,
) -> Result<(CodeSet, OptimizationTrace)> {
    config.validate()?;
    if responses.nrows() != pool.codes.len() {
        return Err(Error::InvalidConfig(format!(
            "response matrix has {} rows for a pool of {} codes",
            responses.nrows(),
            pool.codes.len()
        )));
    }
    if config.pool_size != pool.codes.len() {
        return Err(Error::InvalidConfig(format!(
            "config pool_size {} does not match pool of {} codes",
            config.pool_size,
            pool.codes.len()
        )));
    }
    let dist = distance_matrix(responses);
    let n = pool.codes.len();
    let k = config.select_size;

    if k == n {
        // Single possible subset; no moves exist.
        let subset: Vec<usize> = (0..n).collect();
        let objective = subset_objective(&dist, &subset);
        return finish(pool, &dist, subset, OptimizationTrace {
            objective: vec![],
            accepted: vec![],
            temperature: vec![],
            best_so_far: vec![],
            best_objective: objective,
            best_subset: vec![],
            restart_index: 0,
        });
    }

    let t0 = match config.initial_temp {
        Some(t) => t,
        None => {
            // Spread of the full pairwise distance set; a scale on which
            // objective differences are meaningful.
            let mut all = Vec::with_capacity(n * (n - 1) / 2);
            for i in 0..n {
                for j in (i + 1)..n {
                    all.push(dist[[i, j]]);
                }
            }
            let sd = crate::stats::variance(&all).sqrt();
            if sd > 0.0 {
                sd
            } else {
                1.0
            }
        }
    };

    let runs: Vec<(usize, OptimizationTrace, Vec<usize>)> = (0..config.restarts)
        .into_par_iter()
        .map(|restart| {
            let mut rng =
                KeyedStream::new(config.seed, restart as u64, StreamKind::AnnealRestart);
            let mut selected = rng.subset(n, k);
            let mut complement: Vec<usize> =
                (0..n).filter(|i| !selected.contains(i)).collect();
            let mut current = subset_objective(&dist, &selected);
            let mut best = current;
            let mut best_subset = selected.clone();
            let mut trace = OptimizationTrace {
                objective: Vec::with_capacity(config.iterations),
                accepted: Vec::with_capacity(config.iterations),
                temperature: Vec::with_capacity(config.iterations),
                best_so_far: Vec::with_capacity(config.iterations),
                best_objective: 0.0,
                best_subset: vec![],
                restart_index: restart,
            };
            let mut temp = t0;
            for _ in 0..config.iterations {
                let si = rng.below(k);
                let ui = rng.below(n - k);
                std::mem::swap(&mut selected[si], &mut complement[ui]);
                let proposed = subset_objective(&dist, &selected);
                let delta = proposed - current;
                let accept = delta > 0.0 || rng.uniform() < (delta / temp).exp();
                if accept {
                    current = proposed;
                    if current > best {
                        best = current;
                        best_subset = selected.clone();
                    }
                } else {
                    std::mem::swap(&mut selected[si], &mut complement[ui]);
                }
                trace.objective.push(proposed);
                trace.accepted.push(accept);
                trace.temperature.push(temp);
                trace.best_so_far.push(best);
                temp *= config.cooling;
            }
            trace.best_objective = best;
            (restart, trace, best_subset)
        })
        .collect();

    let (_, trace, subset) = runs
        .into_iter()
        .max_by(|(ra, ta, _), (rb, tb, _)| {
            ta.best_objective
                .partial_cmp(&tb.best_objective)
                .unwrap()
                .then(rb.cmp(ra))
        })
        .expect("at least one restart");
    finish(pool, &dist, subset, trace)
}

fn finish(
    pool: &CodeSet,
    dist: &Array2<f64>,
    mut subset: Vec<usize>,
    mut trace: OptimizationTrace,
) -> Result<(CodeSet, OptimizationTrace)> {
    subset.sort_unstable();
    trace.best_objective = subset_objective(dist, &subset);
    let mut ids: Vec<u32> = subset.iter().map(|&i| pool.codes[i].class_id).collect();
    ids.sort_unstable();
    trace.best_subset = ids.clone();
    let mut selected = pool.subset(&ids, CodeStage::GroupOptimized)?;
    selected.objective = Some(trace.best_objective);
    Ok((selected, trace))
}

// ---------------------------------------------------------------------------
// Personal subset selection
// ---------------------------------------------------------------------------

const SAMPLING_CHUNKS: usize = 64;

/// Classification accuracy of `rec` when predictions are restricted to the
/// classes in `subset`. Equals `decoder::evaluate` on a recording filtered
/// to those classes with a correspondingly pruned template set.
pub fn restricted_accuracy(
    model: &DecoderModel,
    rec: &Recording,
    subset: &[u32],
    window_s: f64,
) -> Result<f64> {
    let scores = score_table(model, rec, window_s)?;
    scores.accuracy(subset)
}

/// Per-trial correlation scores against every template, precomputed once so
/// thousands of candidate subsets can be ranked cheaply.
struct ScoreTable {
    class_ids: Vec<u32>,
    /// `scores[trial][class_index]`, classes in ascending id order.
    scores: Vec<Vec<f64>>,
    labels: Vec<u32>,
}

impl ScoreTable {
    /// Accuracy over trials whose label lies in `subset`, predicting the
    /// best-scoring subset class (ties to the lowest class id, matching the
    /// classifier's rule).
    fn accuracy(&self, subset: &[u32]) -> Result<f64> {
        let mut cols = Vec::with_capacity(subset.len());
        for &id in subset {
            match self.class_ids.binary_search(&id) {
                Ok(i) => cols.push(i),
                Err(_) => return Err(Error::UnknownClass { class_id: id }),
            }
        }
        cols.sort_unstable();
        let mut total = 0usize;
        let mut correct = 0usize;
        for (trial, label) in self.labels.iter().enumerate() {
            if !subset.contains(label) {
                continue;
            }
            total += 1;
            let row = &self.scores[trial];
            let mut best_col = cols[0];
            for &c in &cols[1..] {
                if row[c] > row[best_col] {
                    best_col = c;
                }
            }
            if self.class_ids[best_col] == *label {
                correct += 1;
            }
        }
        if total == 0 {
            return Err(Error::TooFewTrials {
                scope: "trials labeled inside the candidate subset".into(),
                found: 0,
                needed: 1,
            });
        }
        Ok(correct as f64 / total as f64)
    }
}

fn score_table(model: &DecoderModel, rec: &Recording, window_s: f64) -> Result<ScoreTable> {
    let class_ids = model.class_ids();
    let rows: Vec<Vec<f64>> = (0..rec.n_trials())
        .into_par_iter()
        .map(|trial| {
            let c = classify(model, rec.trial(trial), window_s)?;
            Ok(c.scores.into_iter().map(|(_, s)| s).collect())
        })
        .collect::<Result<_>>()?;
    Ok(ScoreTable { class_ids, scores: rows, labels: rec.labels.clone() })
}

/// Pick the `subset_size`-class code set with the best restricted accuracy
/// over `n_samples` uniformly drawn candidate subsets.
///
/// The model's spatial weights are reused unchanged for every candidate; only
/// the allowed templates vary. Sampling is split over fixed logical chunks
/// with independent RNG streams, and ties are broken by the earliest global
/// sample index, so the winner is independent of thread count.
pub fn personal_optimize(
    model: &DecoderModel,
    rec: &Recording,
    pool: &CodeSet,
    subset_size: usize,
    n_samples: usize,
    seed: u64,
) -> Result<(CodeSet, f64)> {
    let pool_ids = {
        let mut ids = pool.class_ids();
        ids.sort_unstable();
        ids
    };
    if subset_size > pool_ids.len() {
        return Err(Error::SubsetTooLarge { requested: subset_size, available: pool_ids.len() });
    }
    if subset_size < 2 {
        return Err(Error::InvalidConfig(format!(
            "subset_size must be at least 2, got {subset_size}"
        )));
    }
    if n_samples == 0 {
        return Err(Error::InvalidConfig("n_samples must be at least 1".into()));
    }
    for id in model.class_ids() {
        if pool_ids.binary_search(&id).is_err() {
            return Err(Error::UnknownClass { class_id: id });
        }
    }
    let window_s = model.template_samples() as f64 / model.sample_rate_hz;
    let table = score_table(model, rec, window_s)?;

    let base = n_samples / SAMPLING_CHUNKS;
    let extra = n_samples % SAMPLING_CHUNKS;
    let chunk_results: Vec<(f64, usize, Vec<u32>)> = (0..SAMPLING_CHUNKS)
        .into_par_iter()
        .filter_map(|chunk| {
            let quota = base + usize::from(chunk < extra);
            if quota == 0 {
                return None;
            }
            let start = chunk * base + chunk.min(extra);
            let mut rng = KeyedStream::new(seed, chunk as u64, StreamKind::SubsetSampling);
            let mut best: Option<(f64, usize, Vec<u32>)> = None;
            for local in 0..quota {
                let pick = rng.subset(pool_ids.len(), subset_size);
                let ids: Vec<u32> = pick.iter().map(|&i| pool_ids[i]).collect();
                let acc = match table.accuracy(&ids) {
                    Ok(a) => a,
                    Err(e) => return Some(Err(e)),
                };
                let global = start + local;
                let better = match &best {
                    None => true,
                    Some((b, g, _)) => acc > *b || (acc == *b && global < *g),
                };
                if better {
                    best = Some((acc, global, ids));
                }
            }
            best.map(Ok)
        })
        .collect::<Result<_>>()?;

    let (accuracy, _, ids) = chunk_results
        .into_iter()
        .min_by(|(aa, ga, _), (ab, gb, _)| {
            ab.partial_cmp(aa).unwrap().then(ga.cmp(gb))
        })
        .expect("n_samples >= 1 guarantees at least one evaluated subset");
    let mut selected = pool.subset(&ids, CodeStage::Personal)?;
    selected.objective = Some(accuracy);
    Ok((selected, accuracy))
}

/// Prune a trained model's templates to `class_ids` (weights untouched).
pub fn prune_model(model: &DecoderModel, class_ids: &[u32]) -> Result<DecoderModel> {
    let mut pruned = model.clone();
    for id in class_ids {
        if !model.templates.contains_key(id) {
            return Err(Error::UnknownClass { class_id: *id });
        }
    }
    pruned.templates.retain(|id, _| class_ids.contains(id));
    Ok(pruned)
}

// ---------------------------------------------------------------------------
