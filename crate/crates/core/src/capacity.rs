//! Spectral SNR estimation and mutual information of the visual channel.
//!
//! The evoked channel is treated as additive and Gaussian per frequency bin,
//! so the information rate is the band integral
//!
//! ```text
//! I = integral over band of log2(1 + SNR(f)) df     [bits/s]
//! ```
//!
//! Two estimators bracket the truth:
//!
//! * [`upper_bound_snr`] uses trial repetition. Per class, the trial-averaged
//!   spectrum estimates the evoked signal and the residual spread estimates
//!   the noise. Small-m bias is handled by scaling the residual by
//!   `m/(m-1)` (unbiased noise power) and subtracting `P_noise/m` from the
//!   averaged signal power (the noise leakage into the mean), clamped at 0.
//!   Signal and noise powers are averaged across classes before the ratio.
//! * [`lower_bound_snr`] reflects what a concrete linear decoder can extract:
//!   each trial is passed through a Wiener-regularized TRF inversion and the
//!   reconstruction is compared with the true stimulus code. The TRF must
//!   come from data disjoint with the scored trials; that split is the
//!   caller's responsibility.
//!
//! Bins whose residual power vanishes (identical trials, or a noise-free
//! channel) are reported through [`SpectralSnr::capped`] and pinned at the
//! configured `snr_max` rather than producing infinities.

use rustfft::num_complex::Complex64;

use crate::decoder::Recording;
use crate::encoder::{reconstruct_stimulus, Trf};
use crate::error::{Error, Result};
use crate::fourier;
use crate::signal::SampledSignal;
use crate::stimgen::{upsample_to_signal, CodeSet};

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundMethod {
    Upper,
    Lower,
}

/// Estimation options shared by both bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrOptions {
    /// Integration band `[lo, hi)` in Hz.
    pub band_hz: (f64, f64),
    /// Ceiling applied to degenerate (zero-noise) bins.
    pub snr_max: f64,
}

impl Default for SnrOptions {
    fn default() -> Self {
        SnrOptions { band_hz: (1.0, 30.0), snr_max: 1e6 }
    }
}

/// A spectral SNR estimate on a uniform one-sided frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSnr {
    pub freqs_hz: Vec<f64>,
    pub snr: Vec<f64>,
    /// Smallest per-class trial count that entered the estimate.
    pub n_trials_m: usize,
    pub method: BoundMethod,
    pub band_hz: (f64, f64),
    /// True when any bin was pinned at `snr_max` because its residual power
    /// vanished (or its ratio exceeded the cap).
    pub capped: bool,
    /// Per-class SNR curves on the same grid, ascending class id.
    pub per_class: Vec<(u32, Vec<f64>)>,
    /// Class-averaged signal power per bin (the ratio's numerator).
    pub signal_power: Vec<f64>,
    /// Class-averaged noise power per bin (the ratio's denominator).
    pub noise_power: Vec<f64>,
}

/// Integrated information rate.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoReport {
    pub method: BoundMethod,
    pub band_hz: (f64, f64),
    pub bits_per_second: f64,
    pub per_class_bits: Option<Vec<(u32, f64)>>,
}

// ---------------------------------------------------------------------------
// Spectra
// ---------------------------------------------------------------------------

/// Full-length complex spectra of every trial of `class_id`, after channel
/// weighting and per-epoch mean removal. Needs at least 2 trials.
pub fn trial_spectra(
    rec: &Recording,
    class_id: u32,
    weights: &[f64],
) -> Result<Vec<Vec<Complex64>>> {
    let trials = rec.trials_of(class_id);
    if trials.len() < 2 {
        return Err(Error::TooFewTrials {
            scope: format!("class {class_id} trials"),
            found: trials.len(),
            needed: 2,
        });
    }
    trials.iter().map(|&i| weighted_spectrum(rec, i, weights)).collect()
}

fn weighted_spectrum(rec: &Recording, trial: usize, weights: &[f64]) -> Result<Vec<Complex64>> {
    let mut trace = rec.weighted_trace(trial, weights)?;
    let m = crate::stats::mean(&trace);
    for v in trace.iter_mut() {
        *v -= m;
    }
    Ok(fourier::dft(&trace))
}

fn validate_labels(rec: &Recording, codes: &CodeSet) -> Result<Vec<u32>> {
    let code_ids = codes.class_ids();
    for &l in &rec.labels {
        if !code_ids.contains(&l) {
            return Err(Error::UnknownClass { class_id: l });
        }
    }
    Ok(rec.class_ids())
}

/// Ratio with degenerate-bin handling: bins where both powers vanish score 0
/// (e.g. the DC bin after mean removal); bins with signal but no noise are
/// pinned at `snr_max`.
fn snr_from_powers(signal: &[f64], noise: &[f64], snr_max: f64, capped: &mut bool) -> Vec<f64> {
    let scale = signal
        .iter()
        .zip(noise)
        .map(|(s, n)| s + n)
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let tiny = 1e-14 * scale;
    signal
        .iter()
        .zip(noise)
        .map(|(&s, &n)| {
            if n <= tiny {
                if s <= tiny {
                    0.0
                } else {
                    *capped = true;
                    snr_max
                }
            } else {
                let r = s / n;
                if r > snr_max {
                    *capped = true;
                    snr_max
                } else {
                    r
                }
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Upper bound
// ---------------------------------------------------------------------------

/// Repetition-based SNR estimate (channel capacity direction).
pub fn upper_bound_snr(
    rec: &Recording,
    codes: &CodeSet,
    weights: &[f64],
    opts: &SnrOptions,
) -> Result<SpectralSnr> {
    validate_options(opts)?;
    let classes = validate_labels(rec, codes)?;
    let n = rec.n_samples();
    let half = fourier::half_len(n);
    let mut sig_sum = vec![0.0; half];
    let mut noise_sum = vec![0.0; half];
    let mut per_class_powers: Vec<(u32, Vec<f64>, Vec<f64>)> = Vec::new();
    let mut m_min = usize::MAX;
    for &c in &classes {
        let spectra = trial_spectra(rec, c, weights)?;
        let m = spectra.len();
        m_min = m_min.min(m);
        let mut sig_c = vec![0.0; half];
        let mut noise_c = vec![0.0; half];
        for k in 0..half {
            let mean_k = spectra.iter().map(|s| s[k]).sum::<Complex64>() / m as f64;
            let resid: f64 =
                spectra.iter().map(|s| (s[k] - mean_k).norm_sqr()).sum::<f64>() / m as f64;
            let p_noise = resid * m as f64 / (m as f64 - 1.0);
            let p_signal = (mean_k.norm_sqr() - p_noise / m as f64).max(0.0);
            sig_c[k] = p_signal;
            noise_c[k] = p_noise;
        }
        for k in 0..half {
            sig_sum[k] += sig_c[k];
            noise_sum[k] += noise_c[k];
        }
        per_class_powers.push((c, sig_c, noise_c));
    }
    let n_classes = classes.len() as f64;
    for k in 0..half {
        sig_sum[k] /= n_classes;
        noise_sum[k] /= n_classes;
    }
    let mut capped = false;
    let snr = snr_from_powers(&sig_sum, &noise_sum, opts.snr_max, &mut capped);
    let per_class = per_class_powers
        .into_iter()
        .map(|(c, s, nz)| {
            let curve = snr_from_powers(&s, &nz, opts.snr_max, &mut capped);
            (c, curve)
        })
        .collect();
    Ok(SpectralSnr {
        freqs_hz: fourier::half_freqs(n, rec.sample_rate_hz),
        snr,
        n_trials_m: m_min,
        method: BoundMethod::Upper,
        band_hz: opts.band_hz,
        capped,
        per_class,
        signal_power: sig_sum,
        noise_power: noise_sum,
    })
}

// ---------------------------------------------------------------------------
// Lower bound
// ---------------------------------------------------------------------------

/// Reconstruction-based SNR estimate (decoder-attainable direction).
///
/// Per trial, the weighted trace is inverted through `trf` with Wiener
/// damping `wiener_lambda`; reconstruction power counts as signal, deviation
/// from the true (upsampled, mean-removed) code as noise. The `trf` must be
/// fitted on trials disjoint from `rec`.
pub fn lower_bound_snr(
    rec: &Recording,
    codes: &CodeSet,
    trf: &Trf,
    weights: &[f64],
    wiener_lambda: f64,
    opts: &SnrOptions,
) -> Result<SpectralSnr> {
    validate_options(opts)?;
    let classes = validate_labels(rec, codes)?;
    let n = rec.n_samples();
    let half = fourier::half_len(n);
    let mut sig_sum = vec![0.0; half];
    let mut noise_sum = vec![0.0; half];
    let mut per_class_powers: Vec<(u32, Vec<f64>, Vec<f64>)> = Vec::new();
    let mut m_min = usize::MAX;
    for &c in &classes {
        let code = codes.code(c)?;
        let stim = padded_stimulus(code_signal(code, rec.sample_rate_hz)?, n)?;
        let s_true = {
            let mut s = stim.samples.clone();
            let m = crate::stats::mean(&s);
            for v in s.iter_mut() {
                *v -= m;
            }
            fourier::dft(&s)
        };
        let trials = rec.trials_of(c);
        let m = trials.len();
        m_min = m_min.min(m);
        let mut sig_c = vec![0.0; half];
        let mut noise_c = vec![0.0; half];
        for &i in &trials {
            let mut trace = rec.weighted_trace(i, weights)?;
            let mean = crate::stats::mean(&trace);
            for v in trace.iter_mut() {
                *v -= mean;
            }
            let trace = SampledSignal::new(trace, rec.sample_rate_hz)?;
            let s_hat = reconstruct_stimulus(trf, &trace, wiener_lambda)?;
            let s_hat_spec = fourier::dft(&s_hat.samples);
            for k in 0..half {
                sig_c[k] += s_hat_spec[k].norm_sqr();
                noise_c[k] += (s_true[k] - s_hat_spec[k]).norm_sqr();
            }
        }
        for k in 0..half {
            sig_c[k] /= m as f64;
            noise_c[k] /= m as f64;
        }
        for k in 0..half {
            sig_sum[k] += sig_c[k];
            noise_sum[k] += noise_c[k];
        }
        per_class_powers.push((c, sig_c, noise_c));
    }
    let n_classes = classes.len() as f64;
    for k in 0..half {
        sig_sum[k] /= n_classes;
        noise_sum[k] /= n_classes;
    }
    let mut capped = false;
    let snr = snr_from_powers(&sig_sum, &noise_sum, opts.snr_max, &mut capped);
    let per_class = per_class_powers
        .into_iter()
        .map(|(c, s, nz)| {
            let curve = snr_from_powers(&s, &nz, opts.snr_max, &mut capped);
            (c, curve)
        })
        .collect();
    Ok(SpectralSnr {
        freqs_hz: fourier::half_freqs(n, rec.sample_rate_hz),
        snr,
        n_trials_m: m_min,
        method: BoundMethod::Lower,
        band_hz: opts.band_hz,
        capped,
        per_class,
        signal_power: sig_sum,
        noise_power: noise_sum,
    })
}

fn code_signal(code: &crate::stimgen::StimulusCode, fs: f64) -> Result<SampledSignal> {
    upsample_to_signal(code, fs)
}

fn padded_stimulus(mut sig: SampledSignal, n: usize) -> Result<SampledSignal> {
    if sig.len() > n {
        return Err(Error::InvalidParam(format!(
            "epoch of {n} samples does not cover the {}-sample stimulus",
            sig.len()
        )));
    }
    sig.samples.resize(n, 0.0);
    Ok(sig)
}

fn validate_options(opts: &SnrOptions) -> Result<()> {
    let (lo, hi) = opts.band_hz;
    if !lo.is_finite() || !hi.is_finite() || lo < 0.0 || hi <= lo {
        return Err(Error::InvalidParam(format!("band [{lo}, {hi}] must satisfy 0 <= lo < hi")));
    }
    if !opts.snr_max.is_finite() || opts.snr_max <= 0.0 {
        return Err(Error::InvalidParam(format!("snr_max must be positive, got {}", opts.snr_max)));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Mutual information
// ---------------------------------------------------------------------------

/// Left-endpoint Riemann sum of `log2(1 + SNR)` over the estimate's band.
/// Bins with `band_lo <= f < band_hi` contribute `log2(1 + snr) * df`.
pub fn mutual_information(snr: &SpectralSnr) -> Result<InfoReport> {
    let freqs = &snr.freqs_hz;
    if freqs.len() < 2 {
        return Err(Error::InvalidParam("SNR grid needs at least 2 bins".into()));
    }
    let df = freqs[1] - freqs[0];
    for w in freqs.windows(2) {
        if ((w[1] - w[0]) - df).abs() > 1e-9 {
            return Err(Error::InvalidParam("SNR frequency grid is not uniform".into()));
        }
    }
    let (lo, hi) = snr.band_hz;
    let eps = 1e-9;
    let grid_max = freqs[freqs.len() - 1] + df;
    if lo < freqs[0] - eps || hi > grid_max + eps {
        return Err(Error::BandOutOfRange { lo, hi, min: freqs[0], max: grid_max });
    }
    let integrate = |curve: &[f64]| -> f64 {
        freqs
            .iter()
            .zip(curve)
            .filter(|(f, _)| **f >= lo - eps && **f < hi - eps)
            .map(|(_, &s)| (1.0 + s).log2() * df)
            .sum()
    };
    let bits_per_second = integrate(&snr.snr);
    let per_class_bits = if snr.per_class.is_empty() {
        None
    } else {
        Some(snr.per_class.iter().map(|(c, curve)| (*c, integrate(curve))).collect())
    };
    Ok(InfoReport { method: snr.method, band_hz: snr.band_hz, bits_per_second, per_class_bits })
}
