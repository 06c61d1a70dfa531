//! Synthetic forward model with known ground truth.
//!
//! Every estimator in the crate is validated against data from this module:
//! a known impulse response convolves the upsampled stimulus code, an
//! optional mean-removed quadratic adds a controlled nonlinear component,
//! a spatial topography spreads the clean component across channels, and
//! three noise sources are layered on top — spectrally shaped background
//! noise (`1/f^alpha`), a narrowband oscillation with a fresh random phase
//! per trial, and white sensor noise.
//!
//! Trial noise comes from per-trial RNG streams keyed by `(seed, trial)`,
//! so generation order (or parallel scheduling) never changes the output
//! and any single trial can be regenerated in isolation.

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::decoder::Recording;
use crate::encoder::{predict_response, Trf};
use crate::error::{Error, Result};
use crate::fourier;
use crate::rng::{KeyedStream, StreamKind};
use crate::signal::SampledSignal;
use crate::stimgen::{upsample_to_signal, CodeSet};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Serializable description of the true impulse response. The sample rate is
/// taken from the owning [`SimConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrfSpec {
    pub coeffs: Vec<f64>,
    pub lag_min_s: f64,
}

impl TrfSpec {
    pub fn to_trf(&self, sample_rate_hz: f64, n_fft: usize) -> Result<Trf> {
        Trf::from_coeffs(self.coeffs.clone(), sample_rate_hz, self.lag_min_s, 0.0, n_fft)
    }
}

/// Narrowband endogenous oscillation added to every trial with a fresh
/// uniform random phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaOscillator {
    pub freq_hz: f64,
    pub amplitude: f64,
    /// Per-channel projection of the oscillation; same length as the mixing
    /// vector.
    pub topography: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub trf_true: TrfSpec,
    /// Channel topography of the evoked component; must have unit L2 norm.
    pub mixing: Vec<f64>,
    /// Spectral exponent of the background noise (`0` = white, `1` = pink).
    pub noise_alpha_exponent: f64,
    /// Standard deviation of the background noise per channel.
    pub background_noise_sigma: f64,
    pub alpha_osc: AlphaOscillator,
    /// Standard deviation of the white sensor noise per channel.
    pub sensor_noise_sigma: f64,
    /// Gain of the mean-removed quadratic distortion (0 = purely linear).
    pub nonlinearity_gain: f64,
    /// Number of balanced repetition blocks (one trial per class per block).
    pub n_blocks: usize,
    pub sample_rate_hz: f64,
    pub epoch_s: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        let mixing = unit_norm(vec![1.0, 0.8, 0.6, 0.45, 0.3, 0.2, 0.12, 0.06]);
        let topography = vec![0.3, 0.5, 0.7, 1.0, 1.0, 0.7, 0.5, 0.3];
        SimConfig {
            trf_true: TrfSpec { coeffs: damped_oscillation_trf(240.0, 0.25, 7.0, 0.05), lag_min_s: 0.0 },
            mixing,
            noise_alpha_exponent: 1.0,
            background_noise_sigma: 1.0,
            alpha_osc: AlphaOscillator { freq_hz: 10.0, amplitude: 0.5, topography },
            sensor_noise_sigma: 0.25,
            nonlinearity_gain: 0.0,
            n_blocks: 4,
            sample_rate_hz: 240.0,
            epoch_s: 1.0,
            seed: 42,
        }
    }
}

impl SimConfig {
    pub fn n_channels(&self) -> usize {
        self.mixing.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mixing.is_empty() {
            return Err(Error::InvalidConfig("mixing vector must not be empty".into()));
        }
        let norm: f64 = self.mixing.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidConfig(format!(
                "mixing must have unit L2 norm, got {norm:.9}"
            )));
        }
        if self.alpha_osc.topography.len() != self.mixing.len() {
            return Err(Error::InvalidConfig(format!(
                "oscillator topography has {} channels, mixing has {}",
                self.alpha_osc.topography.len(),
                self.mixing.len()
            )));
        }
        for (name, v) in [
            ("noise_alpha_exponent", self.noise_alpha_exponent),
            ("background_noise_sigma", self.background_noise_sigma),
            ("alpha amplitude", self.alpha_osc.amplitude),
            ("sensor_noise_sigma", self.sensor_noise_sigma),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidConfig(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !self.nonlinearity_gain.is_finite() {
            return Err(Error::InvalidConfig("nonlinearity_gain must be finite".into()));
        }
        if !self.sample_rate_hz.is_finite() || self.sample_rate_hz <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "sample rate must be positive, got {}",
                self.sample_rate_hz
            )));
        }
        if self.alpha_osc.freq_hz <= 0.0 || self.alpha_osc.freq_hz >= self.sample_rate_hz / 2.0 {
            return Err(Error::InvalidConfig(format!(
                "oscillator at {} Hz must lie below the Nyquist limit {} Hz",
                self.alpha_osc.freq_hz,
                self.sample_rate_hz / 2.0
            )));
        }
        if !self.epoch_s.is_finite() || self.epoch_s <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "epoch length must be positive, got {}",
                self.epoch_s
            )));
        }
        if self.n_blocks == 0 {
            return Err(Error::InvalidConfig("n_blocks must be at least 1".into()));
        }
        if self.trf_true.coeffs.is_empty() {
            return Err(Error::InvalidConfig("true TRF must have at least one tap".into()));
        }
        Ok(())
    }

    fn epoch_samples(&self) -> Result<usize> {
        let n = (self.epoch_s * self.sample_rate_hz).round() as usize;
        if n < 2 {
            return Err(Error::InvalidConfig(format!(
                "epoch of {} s at {} Hz yields fewer than 2 samples",
                self.epoch_s, self.sample_rate_hz
            )));
        }
        Ok(n)
    }
}

/// Normalize a topography to unit L2 norm.
pub fn unit_norm(mut v: Vec<f64>) -> Vec<f64> {
    let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    v
}

/// Exponentially damped sinusoid, peak-normalized — a plausible evoked
/// impulse response for synthetic experiments.
pub fn damped_oscillation_trf(
    sample_rate_hz: f64,
    duration_s: f64,
    freq_hz: f64,
    decay_s: f64,
) -> Vec<f64> {
    let n = (duration_s * sample_rate_hz).round().max(1.0) as usize;
    let mut h: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / sample_rate_hz;
            (-t / decay_s).exp() * (2.0 * std::f64::consts::PI * freq_hz * t).sin()
        })
        .collect();
    let peak = h.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    if peak > 0.0 {
        for v in h.iter_mut() {
            *v /= peak;
        }
    }
    h
}

// ---------------------------------------------------------------------------
// Ground truth sidecar
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisePsdParams {
    pub alpha_exponent: f64,
    pub background_sigma: f64,
    pub alpha_freq_hz: f64,
    pub alpha_amplitude: f64,
    pub sensor_sigma: f64,
}

/// Everything needed to reconstruct each simulated trial exactly:
/// `trial = mixing * (linear + nonlinear) + noise`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Per-trial linear component (single source, before mixing).
    pub linear: Vec<Vec<f64>>,
    /// Per-trial nonlinear component (zero when the gain is 0).
    pub nonlinear: Vec<Vec<f64>>,
    /// Per-trial multichannel noise realization, channel-major.
    pub noise: Vec<Vec<Vec<f64>>>,
    pub mixing: Vec<f64>,
    pub trf_true: TrfSpec,
    pub noise_psd_params: NoisePsdParams,
}

// ---------------------------------------------------------------------------
// Noise synthesis
// ---------------------------------------------------------------------------

/// Multichannel noise for one epoch, `n_channels x n_samples`.
///
/// Draw order on the stream is fixed and documented: first the oscillator
/// phase (always drawn, even at amplitude 0), then `n_samples` Gaussians per
/// channel for the background noise, then `n_samples` Gaussians per channel
/// for the sensor noise. Background shaping multiplies the white spectrum by
/// `|f|^(-alpha/2)` (DC gain 0 for `alpha > 0`), normalized so the output
/// variance matches `background_noise_sigma^2`; at `alpha = 0` the transform
/// is skipped and the white draw is used as-is.
pub fn generate_noise(
    config: &SimConfig,
    n_samples: usize,
    rng: &mut KeyedStream,
) -> Result<Array2<f64>> {
    config.validate()?;
    if n_samples < 2 {
        return Err(Error::InvalidConfig(format!(
            "noise epoch needs at least 2 samples, got {n_samples}"
        )));
    }
    let n_ch = config.n_channels();
    let fs = config.sample_rate_hz;
    let phase = 2.0 * std::f64::consts::PI * rng.uniform();
    let mut out = Array2::<f64>::zeros((n_ch, n_samples));

    let alpha = config.noise_alpha_exponent;
    let gains: Option<Vec<f64>> = if alpha == 0.0 {
        None
    } else {
        let mut g: Vec<f64> = (0..n_samples)
            .map(|k| {
                let f = fourier::folded_freq(k, n_samples, fs);
                if f == 0.0 {
                    0.0
                } else {
                    f.powf(-alpha / 2.0)
                }
            })
            .collect();
        let mean_sq = g.iter().map(|v| v * v).sum::<f64>() / n_samples as f64;
        let scale = mean_sq.sqrt();
        for v in g.iter_mut() {
            *v /= scale;
        }
        Some(g)
    };

    for ch in 0..n_ch {
        let white: Vec<f64> = (0..n_samples).map(|_| rng.gaussian()).collect();
        let colored = match &gains {
            None => white,
            Some(g) => {
                let mut spec = fourier::dft(&white);
                for (c, gain) in spec.iter_mut().zip(g) {
                    *c *= *gain;
                }
                fourier::idft_real(&spec)
            }
        };
        for t in 0..n_samples {
            out[[ch, t]] = config.background_noise_sigma * colored[t];
        }
    }

    let osc = &config.alpha_osc;
    if osc.amplitude > 0.0 {
        for t in 0..n_samples {
            let v = osc.amplitude
                * (2.0 * std::f64::consts::PI * osc.freq_hz * t as f64 / fs + phase).sin();
            for ch in 0..n_ch {
                out[[ch, t]] += osc.topography[ch] * v;
            }
        }
    }

    for ch in 0..n_ch {
        for t in 0..n_samples {
            out[[ch, t]] += config.sensor_noise_sigma * rng.gaussian();
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Forward simulation
// ---------------------------------------------------------------------------

/// Simulate a balanced multi-block recording of every code in `codes`.
///
/// Trials are block-major: block `b` holds one trial of every class in
/// ascending class order, so `trial = b * n_classes + class_index`. The
/// returned sidecar holds the exact per-trial components.
pub fn simulate_recording(config: &SimConfig, codes: &CodeSet) -> Result<(Recording, GroundTruth)> {
    config.validate()?;
    let n = config.epoch_samples()?;
    let fs = config.sample_rate_hz;
    let n_ch = config.n_channels();
    let class_ids = codes.class_ids();
    let n_classes = class_ids.len();
    let trf = config.trf_true.to_trf(fs, n)?;

    // Clean components are identical for every repetition of a class.
    let mut linear_by_class = Vec::with_capacity(n_classes);
    let mut nonlinear_by_class = Vec::with_capacity(n_classes);
    for &c in &class_ids {
        let stim = upsample_to_signal(codes.code(c)?, fs)?;
        if stim.len() > n {
            return Err(Error::InvalidConfig(format!(
                "epoch of {n} samples does not cover the {}-sample stimulus of class {c}",
                stim.len()
            )));
        }
        let mut padded = stim.samples;
        padded.resize(n, 0.0);
        let lin = predict_response(&trf, &SampledSignal::new(padded, fs)?)?.samples;
        let mean_sq = lin.iter().map(|v| v * v).sum::<f64>() / n as f64;
        let nonlin: Vec<f64> = lin
            .iter()
            .map(|v| config.nonlinearity_gain * (v * v - mean_sq))
            .collect();
        linear_by_class.push(lin);
        nonlinear_by_class.push(nonlin);
    }

    let n_trials = config.n_blocks * n_classes;
    let trial_rows: Vec<(Array2<f64>, Array2<f64>)> = {
        use rayon::prelude::*;
        (0..n_trials)
            .into_par_iter()
            .map(|trial| {
                let ci = trial % n_classes;
                let mut rng = KeyedStream::new(config.seed, trial as u64, StreamKind::TrialNoise);
                let noise = generate_noise(config, n, &mut rng)?;
                let mut data = Array2::<f64>::zeros((n_ch, n));
                for ch in 0..n_ch {
                    for t in 0..n {
                        data[[ch, t]] = config.mixing[ch]
                            * (linear_by_class[ci][t] + nonlinear_by_class[ci][t])
                            + noise[[ch, t]];
                    }
                }
                Ok((data, noise))
            })
            .collect::<Result<_>>()?
    };

    let mut data = Array3::<f64>::zeros((n_trials, n_ch, n));
    let mut labels = Vec::with_capacity(n_trials);
    let mut gt_linear = Vec::with_capacity(n_trials);
    let mut gt_nonlinear = Vec::with_capacity(n_trials);
    let mut gt_noise = Vec::with_capacity(n_trials);
    for (trial, (row, noise)) in trial_rows.into_iter().enumerate() {
        let ci = trial % n_classes;
        data.slice_mut(ndarray::s![trial, .., ..]).assign(&row);
        labels.push(class_ids[ci]);
        gt_linear.push(linear_by_class[ci].clone());
        gt_nonlinear.push(nonlinear_by_class[ci].clone());
        gt_noise.push((0..n_ch).map(|ch| noise.row(ch).to_vec()).collect());
    }

    let rec = Recording::new(data, labels, fs, 0.0)?;
    let truth = GroundTruth {
        linear: gt_linear,
        nonlinear: gt_nonlinear,
        noise: gt_noise,
        mixing: config.mixing.clone(),
        trf_true: config.trf_true.clone(),
        noise_psd_params: NoisePsdParams {
            alpha_exponent: config.noise_alpha_exponent,
            background_sigma: config.background_noise_sigma,
            alpha_freq_hz: config.alpha_osc.freq_hz,
            alpha_amplitude: config.alpha_osc.amplitude,
            sensor_sigma: config.sensor_noise_sigma,
        },
    };
    Ok((rec, truth))
}
