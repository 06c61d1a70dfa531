//! End-to-end experiment orchestration.
//!
//! A single JSON config drives the whole flow: synthesize a broadband-coded
//! recording, fit the temporal response function on the first half of the
//! blocks, bracket the channel's information rate on the held-out half,
//! train and evaluate the decoder across stimulation windows, run the
//! two-stage code optimization, and emit information-transfer-rate tables
//! for every configured paradigm branch. Each stage writes its artifacts as
//! soon as it finishes, so a failing stage leaves everything before it on
//! disk; stage errors carry the stage name.
//!
//! Outputs are deterministic byte-for-byte given the same config: no
//! timestamps, ordered maps, and fixed-seed RNG streams throughout.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::capacity::{
    lower_bound_snr, mutual_information, upper_bound_snr, SnrOptions, SpectralSnr,
};
use crate::decoder::{evaluate, itr, train_tdca, DecoderModel, Recording};
use crate::encoder::{fit_trf, LagWindow, Trf};
use crate::error::{Error, Result};
use crate::fourier;
use crate::io;
use crate::optimizer::{
    estimate_group_responses, personal_optimize, restricted_accuracy, sa_optimize, SaConfig,
};
use crate::signal::SampledSignal;
use crate::simulator::{simulate_recording, SimConfig};
use crate::stimgen::{
    generate_jfpm, generate_white_noise, upsample_to_signal, CodeSet, JfpmParams,
    WhiteNoiseParams,
};

pub const PIPELINE_VERSION: u32 = 1;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrfFitConfig {
    pub lag_min_s: f64,
    pub lag_max_s: f64,
    /// `None` lets the fit pick its scale-aware ridge default.
    pub ridge_lambda: Option<f64>,
}

impl Default for TrfFitConfig {
    fn default() -> Self {
        TrfFitConfig { lag_min_s: 0.0, lag_max_s: 0.5, ridge_lambda: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CapacityConfig {
    pub band_hz: (f64, f64),
    pub snr_max: f64,
    /// Wiener damping for the reconstruction bound; `None` derives a
    /// conservative value from the estimated noise and stimulus spectra.
    pub wiener_lambda: Option<f64>,
}

impl Default for CapacityConfig {
    fn default() -> Self {
        CapacityConfig { band_hz: (1.0, 30.0), snr_max: 1e6, wiener_lambda: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoderConfig {
    pub n_components: usize,
    pub shrinkage_gamma: f64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            n_components: crate::decoder::DEFAULT_N_COMPONENTS,
            shrinkage_gamma: crate::decoder::DEFAULT_SHRINKAGE_GAMMA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Stimulation windows (seconds) scored during evaluation.
    pub windows_s: Vec<f64>,
    /// Gaze-shift time added to each trial when converting to bits/min.
    pub gaze_time_s: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { windows_s: vec![0.1, 0.2, 0.3, 0.4, 0.5], gaze_time_s: 0.5 }
    }
}

/// Broadband (white-noise coded) branch: the preliminary phase (TRF +
/// capacity bounds), decoding, and both optimization stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WnBranchConfig {
    pub params: WhiteNoiseParams,
    pub sa: SaConfig,
    pub personal_subset_size: usize,
    pub personal_samples: usize,
    pub personal_seed: u64,
}

impl Default for WnBranchConfig {
    fn default() -> Self {
        WnBranchConfig {
            params: WhiteNoiseParams { n_classes: 40, seed: 1001, ..WhiteNoiseParams::default() },
            sa: SaConfig {
                pool_size: 40,
                select_size: 16,
                iterations: 20_000,
                restarts: 4,
                seed: 2002,
                ..SaConfig::default()
            },
            personal_subset_size: 8,
            personal_samples: 2000,
            personal_seed: 3003,
        }
    }
}

/// Narrowband (frequency/phase coded) branch: decoding and ITR only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JfpmBranchConfig {
    pub params: JfpmParams,
}

impl Default for JfpmBranchConfig {
    fn default() -> Self {
        JfpmBranchConfig { params: JfpmParams::default() }
    }
}

fn default_version() -> u32 {
    PIPELINE_VERSION
}

fn default_wn() -> Option<WnBranchConfig> {
    Some(WnBranchConfig::default())
}

fn default_jfpm() -> Option<JfpmBranchConfig> {
    Some(JfpmBranchConfig::default())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_version")]
    pub version: u32,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub trf: TrfFitConfig,
    #[serde(default)]
    pub capacity: CapacityConfig,
    #[serde(default)]
    pub decoder: DecoderConfig,
    #[serde(default)]
    pub evaluation: EvalConfig,
    #[serde(default = "default_wn")]
    pub wn: Option<WnBranchConfig>,
    #[serde(default = "default_jfpm")]
    pub jfpm: Option<JfpmBranchConfig>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            version: PIPELINE_VERSION,
            sim: SimConfig::default(),
            trf: TrfFitConfig::default(),
            capacity: CapacityConfig::default(),
            decoder: DecoderConfig::default(),
            evaluation: EvalConfig::default(),
            wn: default_wn(),
            jfpm: default_jfpm(),
        }
    }
}

impl PipelineConfig {
    /// Fill derived fields and validate cross-module consistency. The
    /// resolved config is what a run writes next to its outputs.
    pub fn resolve(&self) -> Result<PipelineConfig> {
        let mut out = self.clone();
        if out.version != PIPELINE_VERSION {
            return Err(Error::VersionUnsupported {
                offset: 0,
                found: out.version,
                supported: PIPELINE_VERSION,
            });
        }
        out.sim.validate()?;
        if out.sim.n_blocks < 4 || out.sim.n_blocks % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "n_blocks must be even and at least 4 to give both halves two \
                 repetitions per class, got {}",
                out.sim.n_blocks
            )));
        }
        if out.decoder.n_components == 0 || out.decoder.n_components > out.sim.n_channels() {
            return Err(Error::InvalidConfig(format!(
                "decoder needs 1..={} components for {} channels, got {}",
                out.sim.n_channels(),
                out.sim.n_channels(),
                out.decoder.n_components
            )));
        }
        if out.evaluation.windows_s.is_empty() {
            return Err(Error::InvalidConfig("evaluation windows must not be empty".into()));
        }
        for &w in &out.evaluation.windows_s {
            if !(w > 0.0 && w <= out.sim.epoch_s) {
                return Err(Error::InvalidConfig(format!(
                    "evaluation window {w} s must lie in (0, epoch {} s]",
                    out.sim.epoch_s
                )));
            }
        }
        if !(out.evaluation.gaze_time_s >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "gaze time must be non-negative, got {}",
                out.evaluation.gaze_time_s
            )));
        }
        if let Some(wn) = &mut out.wn {
            wn.sa.pool_size = wn.params.n_classes;
            if wn.personal_subset_size < 2 || wn.personal_subset_size > wn.params.n_classes {
                return Err(Error::InvalidConfig(format!(
                    "personal subset of {} from a pool of {} classes",
                    wn.personal_subset_size, wn.params.n_classes
                )));
            }
            if wn.personal_samples == 0 {
                return Err(Error::InvalidConfig("personal_samples must be at least 1".into()));
            }
        }
        if out.wn.is_none() && out.jfpm.is_none() {
            return Err(Error::InvalidConfig(
                "pipeline needs at least one paradigm branch (wn or jfpm)".into(),
            ));
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Report bundle
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItrRow {
    pub window_s: f64,
    pub m: usize,
    pub accuracy: f64,
    pub bits_per_trial: f64,
    pub itr_bpm: f64,
    pub itr_star_bps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacitySummary {
    pub band_hz: (f64, f64),
    pub upper_bits_per_second: f64,
    pub lower_bits_per_second: f64,
    pub n_trials_m: usize,
    pub upper_capped: bool,
    pub lower_capped: bool,
    pub wiener_lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub objective: f64,
    pub selected: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonalSummary {
    /// Restricted accuracy on the selection (training) half.
    pub train_accuracy: f64,
    pub selected: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineBundle {
    pub version: u32,
    /// Artifact name to file name inside the output directory.
    pub artifacts: BTreeMap<String, String>,
    pub seeds: BTreeMap<String, u64>,
    pub capacity: Option<CapacitySummary>,
    pub group_optimization: Option<GroupSummary>,
    pub personal_selection: Option<PersonalSummary>,
    /// One table per paradigm, keyed `wn_pool` / `wn_personal` / `jfpm`.
    pub itr_tables: BTreeMap<String, Vec<ItrRow>>,
}

/// Full spectral report persisted per capacity run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CapacityReport {
    pub band_hz: (f64, f64),
    pub freqs_hz: Vec<f64>,
    pub upper_snr: Vec<f64>,
    pub lower_snr: Vec<f64>,
    pub upper_bits_per_second: f64,
    pub lower_bits_per_second: f64,
    pub n_trials_m: usize,
    pub upper_capped: bool,
    pub lower_capped: bool,
    pub wiener_lambda: f64,
}

// ---------------------------------------------------------------------------
// Stage plumbing
// ---------------------------------------------------------------------------

fn stage<T>(name: &str, body: impl FnOnce() -> Result<T>) -> Result<T> {
    body().map_err(|e| e.in_stage(name))
}

/// Split a block-major balanced recording into (first half, second half).
fn split_blocks(rec: &Recording, n_classes: usize, n_blocks: usize) -> Result<(Recording, Recording)> {
    let half = n_blocks / 2 * n_classes;
    let train: Vec<usize> = (0..half).collect();
    let test: Vec<usize> = (half..rec.n_trials()).collect();
    Ok((rec.select_trials(&train)?, rec.select_trials(&test)?))
}

/// Stimulus signals aligned with the recording's epochs: upsampled to the
/// recording rate and zero-padded to the epoch length.
pub fn epoch_stimuli(codes: &CodeSet, fs: f64, n_samples: usize) -> Result<BTreeMap<u32, SampledSignal>> {
    let mut out = BTreeMap::new();
    for code in &codes.codes {
        let mut s = upsample_to_signal(code, fs)?;
        if s.len() > n_samples {
            return Err(Error::InvalidConfig(format!(
                "epoch of {n_samples} samples does not cover the {}-sample stimulus of class {}",
                s.len(),
                code.class_id
            )));
        }
        s.samples.resize(n_samples, 0.0);
        out.insert(code.class_id, s);
    }
    Ok(out)
}

/// Fit a TRF on every trial of a recording, pairing each epoch's aligned
/// stimulus with the trial's weighted channel combination.
pub fn fit_recording_trf(
    train: &Recording,
    stimuli: &BTreeMap<u32, SampledSignal>,
    weights: &[f64],
    cfg: &TrfFitConfig,
) -> Result<Trf> {
    let fs = train.sample_rate_hz;
    let traces: Vec<SampledSignal> = (0..train.n_trials())
        .map(|i| SampledSignal::new(train.weighted_trace(i, weights)?, fs))
        .collect::<Result<_>>()?;
    let pairs: Vec<(&SampledSignal, &SampledSignal)> = train
        .labels
        .iter()
        .zip(&traces)
        .map(|(label, trace)| {
            stimuli
                .get(label)
                .map(|stim| (stim, trace))
                .ok_or(Error::UnknownClass { class_id: *label })
        })
        .collect::<Result<_>>()?;
    let window = LagWindow { min_s: cfg.lag_min_s, max_s: cfg.lag_max_s };
    fit_trf(&pairs, &window, cfg.ridge_lambda)
}

/// Conservative Wiener damping: the worst in-band ratio of estimated noise
/// power to class-averaged stimulus power. At this damping the
/// reconstruction bound cannot overshoot the repetition bound's per-bin SNR.
pub fn auto_wiener_lambda(
    upper: &SpectralSnr,
    stimuli: &BTreeMap<u32, SampledSignal>,
    band_hz: (f64, f64),
) -> f64 {
    let n_bins = upper.freqs_hz.len();
    let mut stim_power = vec![0.0; n_bins];
    for s in stimuli.values() {
        let centered: Vec<f64> = {
            let m = crate::stats::mean(&s.samples);
            s.samples.iter().map(|v| v - m).collect()
        };
        let spec = fourier::dft(&centered);
        for k in 0..n_bins {
            stim_power[k] += spec[k].norm_sqr();
        }
    }
    for p in stim_power.iter_mut() {
        *p /= stimuli.len() as f64;
    }
    let peak = stim_power.iter().cloned().fold(0.0f64, f64::max);
    let mut lambda = 0.0f64;
    for k in 0..n_bins {
        let f = upper.freqs_hz[k];
        if f < band_hz.0 || f >= band_hz.1 || stim_power[k] <= 1e-12 * peak {
            continue;
        }
        lambda = lambda.max(upper.noise_power[k] / stim_power[k]);
    }
    if lambda > 0.0 {
        lambda
    } else {
        1.0
    }
}

fn itr_table(
    model: &DecoderModel,
    test: &Recording,
    subset: Option<&[u32]>,
    m: usize,
    eval: &EvalConfig,
) -> Result<Vec<ItrRow>> {
    let mut rows = Vec::with_capacity(eval.windows_s.len());
    for &w in &eval.windows_s {
        let accuracy = match subset {
            None => evaluate(model, test, w)?.accuracy,
            Some(ids) => restricted_accuracy(model, test, ids, w)?,
        };
        let r = itr(m, accuracy, w, eval.gaze_time_s)?;
        rows.push(ItrRow {
            window_s: w,
            m,
            accuracy,
            bits_per_trial: r.bits_per_trial,
            itr_bpm: r.itr_bpm,
            itr_star_bps: r.itr_star_bps,
        });
    }
    Ok(rows)
}

fn write_itr_csv(path: &Path, rows: &[ItrRow]) -> Result<()> {
    let lines: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{:.3},{},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.window_s, r.m, r.accuracy, r.bits_per_trial, r.itr_bpm, r.itr_star_bps
            )
        })
        .collect();
    io::write_table(path, "window_s,m,accuracy,bits_per_trial,itr_bpm,itr_star_bps", &lines)
}

// ---------------------------------------------------------------------------
// The pipeline
// ---------------------------------------------------------------------------

/// Run the full experiment into `out_dir` and return the report bundle
/// (also written as `bundle.json`).
pub fn run_pipeline(config: &PipelineConfig, out_dir: &Path) -> Result<PipelineBundle> {
    fs::create_dir_all(out_dir)
        .map_err(|e| Error::io(format!("creating {}", out_dir.display()), e))?;
    let config = stage("config", || config.resolve())?;

    let mut bundle = PipelineBundle {
        version: PIPELINE_VERSION,
        artifacts: BTreeMap::new(),
        seeds: BTreeMap::new(),
        capacity: None,
        group_optimization: None,
        personal_selection: None,
        itr_tables: BTreeMap::new(),
    };
    fn record(bundle: &mut PipelineBundle, name: &str, file: &str) {
        bundle.artifacts.insert(name.to_string(), file.to_string());
    }

    stage("config", || io::write_json(&config, &out_dir.join("resolved_config.json")))?;
    record(&mut bundle, "resolved_config", "resolved_config.json");
    bundle.seeds.insert("sim".into(), config.sim.seed);

    let fs_hz = config.sim.sample_rate_hz;

    if let Some(wn) = &config.wn {
        bundle.seeds.insert("wn_codes".into(), wn.params.seed);
        bundle.seeds.insert("sa".into(), wn.sa.seed);
        bundle.seeds.insert("personal".into(), wn.personal_seed);

        let pool = stage("gen-wn", || {
            let pool = generate_white_noise(&wn.params)?;
            io::write_code_set(&pool, &out_dir.join("codes_wn_pool.csv"))?;
            Ok(pool)
        })?;
        record(&mut bundle, "codes_wn_pool", "codes_wn_pool.csv");

        let rec = stage("simulate-wn", || {
            let (rec, _) = simulate_recording(&config.sim, &pool)?;
            io::write_recording(&rec, &out_dir.join("recording_wn.veprec"))?;
            Ok(rec)
        })?;
        record(&mut bundle, "recording_wn", "recording_wn.veprec");

        let n_classes = pool.codes.len();
        let (train, test) = split_blocks(&rec, n_classes, config.sim.n_blocks)?;
        let stimuli = epoch_stimuli(&pool, fs_hz, rec.n_samples())?;

        let trf = stage("fit-trf", || {
            let trf = fit_recording_trf(&train, &stimuli, &config.sim.mixing, &config.trf)?;
            io::write_trf(&trf, &out_dir.join("trf_wn.json"))?;
            Ok(trf)
        })?;
        record(&mut bundle, "trf_wn", "trf_wn.json");

        stage("capacity", || {
            let opts =
                SnrOptions { band_hz: config.capacity.band_hz, snr_max: config.capacity.snr_max };
            let upper = upper_bound_snr(&test, &pool, &config.sim.mixing, &opts)?;
            let lambda = config
                .capacity
                .wiener_lambda
                .unwrap_or_else(|| auto_wiener_lambda(&upper, &stimuli, opts.band_hz));
            let lower =
                lower_bound_snr(&test, &pool, &trf, &config.sim.mixing, lambda, &opts)?;
            let upper_info = mutual_information(&upper)?;
            let lower_info = mutual_information(&lower)?;
            let report = CapacityReport {
                band_hz: opts.band_hz,
                freqs_hz: upper.freqs_hz.clone(),
                upper_snr: upper.snr.clone(),
                lower_snr: lower.snr.clone(),
                upper_bits_per_second: upper_info.bits_per_second,
                lower_bits_per_second: lower_info.bits_per_second,
                n_trials_m: upper.n_trials_m,
                upper_capped: upper.capped,
                lower_capped: lower.capped,
                wiener_lambda: lambda,
            };
            io::write_json(&report, &out_dir.join("capacity_wn.json"))?;
            bundle.capacity = Some(CapacitySummary {
                band_hz: opts.band_hz,
                upper_bits_per_second: upper_info.bits_per_second,
                lower_bits_per_second: lower_info.bits_per_second,
                n_trials_m: upper.n_trials_m,
                upper_capped: upper.capped,
                lower_capped: lower.capped,
                wiener_lambda: lambda,
            });
            Ok(())
        })?;
        record(&mut bundle, "capacity_wn", "capacity_wn.json");

        let model = stage("train-wn", || {
            let model =
                train_tdca(&train, config.decoder.n_components, config.decoder.shrinkage_gamma)?;
            io::write_model(&model, &out_dir.join("model_wn.json"))?;
            Ok(model)
        })?;
        record(&mut bundle, "model_wn", "model_wn.json");

        stage("evaluate-wn", || {
            let rows = itr_table(&model, &test, None, n_classes, &config.evaluation)?;
            write_itr_csv(&out_dir.join("itr_wn_pool.csv"), &rows)?;
            bundle.itr_tables.insert("wn_pool".into(), rows);
            Ok(())
        })?;
        record(&mut bundle, "itr_wn_pool", "itr_wn_pool.csv");

        stage("optimize-group", || {
            let responses = estimate_group_responses(&trf, &pool)?;
            let (group, trace) = sa_optimize(&pool, &responses, &wn.sa)?;
            io::write_code_set(&group, &out_dir.join("codes_wn_group.csv"))?;
            io::write_json(&trace, &out_dir.join("sa_trace.json"))?;
            bundle.group_optimization = Some(GroupSummary {
                objective: trace.best_objective,
                selected: trace.best_subset.clone(),
            });
            Ok(())
        })?;
        record(&mut bundle, "codes_wn_group", "codes_wn_group.csv");
        record(&mut bundle, "sa_trace", "sa_trace.json");

        let personal_ids = stage("optimize-personal", || {
            let (personal, accuracy) = personal_optimize(
                &model,
                &train,
                &pool,
                wn.personal_subset_size,
                wn.personal_samples,
                wn.personal_seed,
            )?;
            io::write_code_set(&personal, &out_dir.join("codes_wn_personal.csv"))?;
            let ids = personal.class_ids();
            bundle.personal_selection =
                Some(PersonalSummary { train_accuracy: accuracy, selected: ids.clone() });
            Ok(ids)
        })?;
        record(&mut bundle, "codes_wn_personal", "codes_wn_personal.csv");

        stage("evaluate-personal", || {
            let rows = itr_table(
                &model,
                &test,
                Some(&personal_ids),
                wn.personal_subset_size,
                &config.evaluation,
            )?;
            write_itr_csv(&out_dir.join("itr_wn_personal.csv"), &rows)?;
            bundle.itr_tables.insert("wn_personal".into(), rows);
            Ok(())
        })?;
        record(&mut bundle, "itr_wn_personal", "itr_wn_personal.csv");
    }

    if let Some(jfpm) = &config.jfpm {
        let codes = stage("gen-jfpm", || {
            let codes = generate_jfpm(&jfpm.params)?;
            io::write_code_set(&codes, &out_dir.join("codes_jfpm.csv"))?;
            Ok(codes)
        })?;
        record(&mut bundle, "codes_jfpm", "codes_jfpm.csv");

        let rec = stage("simulate-jfpm", || {
            let (rec, _) = simulate_recording(&config.sim, &codes)?;
            io::write_recording(&rec, &out_dir.join("recording_jfpm.veprec"))?;
            Ok(rec)
        })?;
        record(&mut bundle, "recording_jfpm", "recording_jfpm.veprec");

        let n_classes = codes.codes.len();
        let (train, test) = split_blocks(&rec, n_classes, config.sim.n_blocks)?;

        let model = stage("train-jfpm", || {
            let model =
                train_tdca(&train, config.decoder.n_components, config.decoder.shrinkage_gamma)?;
            io::write_model(&model, &out_dir.join("model_jfpm.json"))?;
            Ok(model)
        })?;
        record(&mut bundle, "model_jfpm", "model_jfpm.json");

        stage("evaluate-jfpm", || {
            let rows = itr_table(&model, &test, None, n_classes, &config.evaluation)?;
            write_itr_csv(&out_dir.join("itr_jfpm.csv"), &rows)?;
            bundle.itr_tables.insert("jfpm".into(), rows);
            Ok(())
        })?;
        record(&mut bundle, "itr_jfpm", "itr_jfpm.csv");
    }

    stage("bundle", || io::write_json(&bundle, &out_dir.join("bundle.json")))?;
    Ok(bundle)
}

// ---------------------------------------------------------------------------
