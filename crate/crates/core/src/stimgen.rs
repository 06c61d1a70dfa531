//! Stimulus code generation.
//!
//! Two families of visual stimulation codes are produced at the display frame
//! rate:
//!
//! * **Frequency/phase coded sinusoids** — class `c` (zero-based) flickers at
//!   `f0 + c * delta_f` Hz with phase `phi0 + c * delta_phi`. The raw sinusoid
//!   in `[-1, 1]` is affinely mapped to luminance in `[0, 1]` via
//!   `0.5 * (1 + x)`; the raw value stays available through
//!   [`jfpm_raw_value`].
//! * **White-noise codes** — independent uniform `[0, 1)` luminance per frame,
//!   drawn from the keyed stream `(seed, class_id)` with the frozen generator
//!   `"chacha12-u53"` (see [`crate::rng`]). At the default 60 Hz frame rate
//!   the codes occupy the full `[0, 30]` Hz band.
//!
//! Codes live at the frame rate; [`upsample_to_signal`] converts them to a
//! recording-rate stimulus by zero-order hold.
//!
//! ## Example
//!
//! ```
//! use veplab_core::stimgen::{generate_jfpm, JfpmParams};
//!
//! let params = JfpmParams { n_targets: 8, duration_s: 1.0, ..JfpmParams::default() };
//! let set = generate_jfpm(&params).unwrap();
//! assert_eq!(set.codes.len(), 8);
//! assert_eq!(set.codes[0].values.len(), 60);
//! ```

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{KeyedStream, StreamKind, GENERATOR_NAME};
use crate::signal::SampledSignal;

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CodeKind {
    #[serde(rename = "JFPM")]
    Jfpm,
    #[serde(rename = "WHITE_NOISE")]
    WhiteNoise,
}

/// Where in the optimization ladder a code set sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CodeStage {
    #[serde(rename = "RAW_POOL")]
    RawPool,
    #[serde(rename = "GROUP_OPTIMIZED")]
    GroupOptimized,
    #[serde(rename = "PERSONAL")]
    Personal,
}

/// One stimulation code: per-frame luminance values for one class.
#[derive(Debug, Clone, PartialEq)]
pub struct StimulusCode {
    pub class_id: u32,
    pub frame_rate_hz: f64,
    pub values: Vec<f64>,
    pub kind: CodeKind,
    /// Root seed for stochastic codes, `None` for deterministic families.
    pub seed: Option<u64>,
}

impl StimulusCode {
    pub fn new(
        class_id: u32,
        frame_rate_hz: f64,
        values: Vec<f64>,
        kind: CodeKind,
        seed: Option<u64>,
    ) -> Result<Self> {
        if !frame_rate_hz.is_finite() || frame_rate_hz <= 0.0 {
            return Err(Error::InvalidParam(format!(
                "frame rate must be positive, got {frame_rate_hz}"
            )));
        }
        if values.is_empty() {
            return Err(Error::InvalidParam("code must contain at least one frame".into()));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v) || !v.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "code value {v} for class {class_id} is outside [0, 1]"
            )));
        }
        Ok(StimulusCode { class_id, frame_rate_hz, values, kind, seed })
    }

    pub fn n_frames(&self) -> usize {
        self.values.len()
    }

    pub fn duration_s(&self) -> f64 {
        self.values.len() as f64 / self.frame_rate_hz
    }
}

/// An ordered collection of codes sharing frame rate and length.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeSet {
    pub codes: Vec<StimulusCode>,
    pub stage: CodeStage,
    /// Objective value attached by an optimization stage, if any.
    pub objective: Option<f64>,
    /// Free-form generation metadata carried into file sidecars.
    pub provenance: BTreeMap<String, String>,
}

impl CodeSet {
    pub fn new(codes: Vec<StimulusCode>, stage: CodeStage) -> Result<Self> {
        if codes.is_empty() {
            return Err(Error::InvalidParam("code set must not be empty".into()));
        }
        let rate = codes[0].frame_rate_hz;
        let len = codes[0].values.len();
        let mut seen = std::collections::BTreeSet::new();
        for code in &codes {
            if (code.frame_rate_hz - rate).abs() > 1e-9 {
                return Err(Error::RateMismatch { left_hz: rate, right_hz: code.frame_rate_hz });
            }
            if code.values.len() != len {
                return Err(Error::InvalidParam(format!(
                    "code {} has {} frames, expected {}",
                    code.class_id,
                    code.values.len(),
                    len
                )));
            }
            if !seen.insert(code.class_id) {
                return Err(Error::InvalidParam(format!(
                    "duplicate class id {} in code set",
                    code.class_id
                )));
            }
        }
        Ok(CodeSet { codes, stage, objective: None, provenance: BTreeMap::new() })
    }

    pub fn frame_rate_hz(&self) -> f64 {
        self.codes[0].frame_rate_hz
    }

    pub fn n_frames(&self) -> usize {
        self.codes[0].values.len()
    }

    pub fn class_ids(&self) -> Vec<u32> {
        self.codes.iter().map(|c| c.class_id).collect()
    }

    pub fn code(&self, class_id: u32) -> Result<&StimulusCode> {
        self.codes
            .iter()
            .find(|c| c.class_id == class_id)
            .ok_or(Error::UnknownClass { class_id })
    }

    /// Sub-set restricted to `class_ids`, preserving this set's frame data.
    pub fn subset(&self, class_ids: &[u32], stage: CodeStage) -> Result<CodeSet> {
        let mut codes = Vec::with_capacity(class_ids.len());
        for &id in class_ids {
            codes.push(self.code(id)?.clone());
        }
        let mut out = CodeSet::new(codes, stage)?;
        out.provenance = self.provenance.clone();
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Frequency/phase coded generation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JfpmParams {
    pub n_targets: usize,
    pub f0_hz: f64,
    pub delta_f_hz: f64,
    pub phi0_rad: f64,
    pub delta_phi_rad: f64,
    pub frame_rate_hz: f64,
    pub duration_s: f64,
}

impl Default for JfpmParams {
    fn default() -> Self {
        JfpmParams {
            n_targets: 40,
            f0_hz: 8.0,
            delta_f_hz: 0.2,
            phi0_rad: 0.0,
            delta_phi_rad: 0.35 * PI,
            frame_rate_hz: 60.0,
            duration_s: 1.0,
        }
    }
}

/// Raw sinusoid value in `[-1, 1]` for zero-based class `c` at frame `k`.
pub fn jfpm_raw_value(params: &JfpmParams, class_index: usize, frame_index: usize) -> f64 {
    let t = frame_index as f64 / params.frame_rate_hz;
    let f = params.f0_hz + class_index as f64 * params.delta_f_hz;
    let phi = params.phi0_rad + class_index as f64 * params.delta_phi_rad;
    (2.0 * PI * f * t + phi).sin()
}

fn frame_count(duration_s: f64, frame_rate_hz: f64) -> Result<usize> {
    if !duration_s.is_finite() || duration_s <= 0.0 {
        return Err(Error::InvalidParam(format!("duration must be positive, got {duration_s}")));
    }
    if !frame_rate_hz.is_finite() || frame_rate_hz <= 0.0 {
        return Err(Error::InvalidParam(format!(
            "frame rate must be positive, got {frame_rate_hz}"
        )));
    }
    let exact = duration_s * frame_rate_hz;
    let rounded = exact.round();
    if (exact - rounded).abs() > 1e-9 {
        log::warn!(
            "duration {duration_s} s is not an integral number of frames at {frame_rate_hz} Hz \
             ({exact} frames); rounding to {rounded}"
        );
    }
    if rounded < 1.0 {
        return Err(Error::InvalidParam(format!(
            "duration {duration_s} s yields zero frames at {frame_rate_hz} Hz"
        )));
    }
    Ok(rounded as usize)
}

/// Generate a frequency/phase coded set. Class `c` (zero-based) gets
/// frequency `f0 + c * delta_f` and phase `phi0 + c * delta_phi`; values are
/// the luminance-mapped sinusoid `0.5 * (1 + x)`.
pub fn generate_jfpm(params: &JfpmParams) -> Result<CodeSet> {
    if params.n_targets == 0 {
        return Err(Error::InvalidParam("n_targets must be at least 1".into()));
    }
    let top = params.f0_hz + (params.n_targets - 1) as f64 * params.delta_f_hz;
    if top >= params.frame_rate_hz / 2.0 {
        return Err(Error::NyquistViolation {
            frequency_hz: top,
            frame_rate_hz: params.frame_rate_hz,
        });
    }
    let n_frames = frame_count(params.duration_s, params.frame_rate_hz)?;
    let mut codes = Vec::with_capacity(params.n_targets);
    for c in 0..params.n_targets {
        let values: Vec<f64> = (0..n_frames)
            .map(|k| 0.5 * (1.0 + jfpm_raw_value(params, c, k)))
            .collect();
        codes.push(StimulusCode::new(
            c as u32,
            params.frame_rate_hz,
            values,
            CodeKind::Jfpm,
            None,
        )?);
    }
    let mut set = CodeSet::new(codes, CodeStage::RawPool)?;
    set.provenance.insert("generator".into(), "jfpm".into());
    set.provenance.insert("f0_hz".into(), format!("{}", params.f0_hz));
    set.provenance.insert("delta_f_hz".into(), format!("{}", params.delta_f_hz));
    set.provenance.insert("phi0_rad".into(), format!("{}", params.phi0_rad));
    set.provenance.insert("delta_phi_rad".into(), format!("{}", params.delta_phi_rad));
    Ok(set)
}

// ---------------------------------------------------------------------------
// White-noise generation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WhiteNoiseParams {
    pub n_classes: usize,
    pub frame_rate_hz: f64,
    pub duration_s: f64,
    pub seed: u64,
}

impl Default for WhiteNoiseParams {
    fn default() -> Self {
        WhiteNoiseParams { n_classes: 160, frame_rate_hz: 60.0, duration_s: 1.0, seed: 0 }
    }
}

/// Generate independent uniform `[0, 1)` codes. Class `c`'s frames come from
/// the keyed stream `(seed, c)`, so any single class can be regenerated
/// without producing the others.
pub fn generate_white_noise(params: &WhiteNoiseParams) -> Result<CodeSet> {
    if params.n_classes == 0 {
        return Err(Error::InvalidParam("n_classes must be at least 1".into()));
    }
    let n_frames = frame_count(params.duration_s, params.frame_rate_hz)?;
    let mut codes = Vec::with_capacity(params.n_classes);
    for c in 0..params.n_classes {
        let mut rng = KeyedStream::new(params.seed, c as u64, StreamKind::NoiseCode);
        let values: Vec<f64> = (0..n_frames).map(|_| rng.uniform()).collect();
        codes.push(StimulusCode::new(
            c as u32,
            params.frame_rate_hz,
            values,
            CodeKind::WhiteNoise,
            Some(params.seed),
        )?);
    }
    let mut set = CodeSet::new(codes, CodeStage::RawPool)?;
    set.provenance.insert("generator".into(), GENERATOR_NAME.into());
    set.provenance.insert("seed".into(), format!("{}", params.seed));
    Ok(set)
}

// ---------------------------------------------------------------------------
// Upsampling
// ---------------------------------------------------------------------------

/// Zero-order-hold upsampling of a frame-rate code to `sample_rate_hz`.
/// The rates must be commensurate: `sample_rate / frame_rate` integral within
/// 1e-9.
pub fn upsample_to_signal(code: &StimulusCode, sample_rate_hz: f64) -> Result<SampledSignal> {
    if !sample_rate_hz.is_finite() || sample_rate_hz <= 0.0 {
        return Err(Error::InvalidParam(format!(
            "sample rate must be positive, got {sample_rate_hz}"
        )));
    }
    let ratio = sample_rate_hz / code.frame_rate_hz;
    let hold = ratio.round();
    if (ratio - hold).abs() > 1e-9 || hold < 1.0 {
        return Err(Error::RateMismatch {
            left_hz: code.frame_rate_hz,
            right_hz: sample_rate_hz,
        });
    }
    let hold = hold as usize;
    let mut samples = Vec::with_capacity(code.values.len() * hold);
    for &v in &code.values {
        samples.extend(std::iter::repeat(v).take(hold));
    }
    SampledSignal::new(samples, sample_rate_hz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier;
    use crate::stats::pearson;

    #[test]
    fn jfpm_frame_one_matches_frozen_value() {
        // Independent evaluation of the class-0 sinusoid at frame 1 of a
        // 60 Hz display: sin(2 * pi * 8 / 60).
        let params = JfpmParams::default();
        let raw = jfpm_raw_value(&params, 0, 1);
        assert!((raw - 0.7431448254773942).abs() < 1e-12, "raw {raw}");
        let set = generate_jfpm(&JfpmParams { n_targets: 1, ..params }).unwrap();
        let mapped = set.codes[0].values[1];
        assert!((mapped - 0.8715724127386971).abs() < 1e-12, "mapped {mapped}");
        assert_eq!(set.codes[0].values[0], 0.5, "phase 0 starts mid-luminance");
    }

    #[test]
    fn jfpm_defaults_match_published_protocol() {
        let p = JfpmParams::default();
        assert_eq!(p.f0_hz, 8.0);
        assert_eq!(p.delta_f_hz, 0.2);
        assert_eq!(p.phi0_rad, 0.0);
        assert!((p.delta_phi_rad - 0.35 * PI).abs() < 1e-15);
        assert_eq!(p.frame_rate_hz, 60.0);
        assert_eq!(p.n_targets, 40);
    }

    #[test]
    fn jfpm_generation_is_bit_exact_deterministic() {
        let p = JfpmParams { n_targets: 6, duration_s: 0.5, ..JfpmParams::default() };
        let a = generate_jfpm(&p).unwrap();
        let b = generate_jfpm(&p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn jfpm_rejects_designs_beyond_nyquist() {
        let p = JfpmParams { n_targets: 120, ..JfpmParams::default() };
        match generate_jfpm(&p) {
            Err(Error::NyquistViolation { frequency_hz, .. }) => {
                assert!((frequency_hz - 31.8).abs() < 1e-9);
            }
            other => panic!("expected NyquistViolation, got {other:?}"),
        }
    }

    #[test]
    fn jfpm_spectrum_peaks_at_design_frequency() {
        // 4 s of code gives 0.25 Hz resolution; the magnitude peak of each
        // mean-removed code must land within one bin of its design frequency.
        let p = JfpmParams { n_targets: 40, duration_s: 4.0, ..JfpmParams::default() };
        let set = generate_jfpm(&p).unwrap();
        for (c, code) in set.codes.iter().enumerate() {
            let m = crate::stats::mean(&code.values);
            let centered: Vec<f64> = code.values.iter().map(|v| v - m).collect();
            let spec = fourier::dft(&centered);
            let half = fourier::half_len(centered.len());
            let (mut best_k, mut best_mag) = (0, 0.0);
            for (k, c) in spec.iter().enumerate().take(half).skip(1) {
                if c.norm() > best_mag {
                    best_mag = c.norm();
                    best_k = k;
                }
            }
            let bin_hz = p.frame_rate_hz / centered.len() as f64;
            let peak_hz = best_k as f64 * bin_hz;
            let design_hz = p.f0_hz + c as f64 * p.delta_f_hz;
            assert!(
                (peak_hz - design_hz).abs() <= bin_hz + 1e-9,
                "class {c}: peak {peak_hz} Hz vs design {design_hz} Hz"
            );
        }
    }

    #[test]
    fn white_noise_mean_converges_to_half() {
        let p = WhiteNoiseParams {
            n_classes: 1,
            duration_s: 1_000_000.0 / 60.0,
            seed: 42,
            ..WhiteNoiseParams::default()
        };
        let set = generate_white_noise(&p).unwrap();
        assert_eq!(set.codes[0].values.len(), 1_000_000);
        let m = crate::stats::mean(&set.codes[0].values);
        assert!((m - 0.5).abs() < 0.01, "mean {m}");
    }

    #[test]
    fn white_noise_is_keyed_by_seed_and_class() {
        let p = WhiteNoiseParams { n_classes: 3, duration_s: 1.0, seed: 7, ..Default::default() };
        let a = generate_white_noise(&p).unwrap();
        let b = generate_white_noise(&p).unwrap();
        assert_eq!(a, b, "same seed must reproduce bit-exactly");
        // A class regenerated in isolation matches its in-set twin.
        let solo = generate_white_noise(&WhiteNoiseParams { n_classes: 1, ..p.clone() }).unwrap();
        assert_eq!(solo.codes[0].values, a.codes[0].values);
        let other = generate_white_noise(&WhiteNoiseParams { seed: 8, ..p }).unwrap();
        assert_ne!(a.codes[0].values, other.codes[0].values);
    }

    #[test]
    fn white_noise_classes_are_nearly_uncorrelated() {
        let p = WhiteNoiseParams {
            n_classes: 8,
            duration_s: 10.0,
            seed: 3,
            ..WhiteNoiseParams::default()
        };
        let set = generate_white_noise(&p).unwrap();
        assert_eq!(set.n_frames(), 600);
        for i in 0..set.codes.len() {
            for j in i + 1..set.codes.len() {
                let r = pearson(&set.codes[i].values, &set.codes[j].values);
                assert!(r.abs() < 0.1, "classes {i},{j} correlate at {r}");
            }
        }
    }

    #[test]
    fn upsample_repeats_each_frame() {
        let code =
            StimulusCode::new(0, 60.0, vec![0.25, 1.0], CodeKind::WhiteNoise, Some(0)).unwrap();
        let sig = upsample_to_signal(&code, 240.0).unwrap();
        assert_eq!(sig.samples, vec![0.25, 0.25, 0.25, 0.25, 1.0, 1.0, 1.0, 1.0]);
        assert_eq!(sig.sample_rate_hz, 240.0);
    }

    #[test]
    fn upsample_rejects_incommensurate_rates() {
        let code = StimulusCode::new(0, 60.0, vec![0.5], CodeKind::Jfpm, None).unwrap();
        assert!(matches!(
            upsample_to_signal(&code, 90.0),
            Err(Error::RateMismatch { .. })
        ));
        assert!(upsample_to_signal(&code, 60.0).is_ok());
    }

    #[test]
    fn code_values_outside_unit_interval_are_rejected() {
        assert!(StimulusCode::new(0, 60.0, vec![1.2], CodeKind::WhiteNoise, None).is_err());
        assert!(StimulusCode::new(0, 60.0, vec![-0.1], CodeKind::WhiteNoise, None).is_err());
        assert!(StimulusCode::new(0, 60.0, vec![], CodeKind::WhiteNoise, None).is_err());
    }

    #[test]
    fn code_set_enforces_uniform_shape_and_unique_ids() {
        let a = StimulusCode::new(0, 60.0, vec![0.5, 0.5], CodeKind::Jfpm, None).unwrap();
        let b = StimulusCode::new(0, 60.0, vec![0.5, 0.5], CodeKind::Jfpm, None).unwrap();
        assert!(CodeSet::new(vec![a.clone(), b], CodeStage::RawPool).is_err());
        let short = StimulusCode::new(1, 60.0, vec![0.5], CodeKind::Jfpm, None).unwrap();
        assert!(CodeSet::new(vec![a, short], CodeStage::RawPool).is_err());
    }

    #[test]
    fn sub_second_durations_that_round_to_zero_fail() {
        let p = JfpmParams { duration_s: 0.001, ..JfpmParams::default() };
        assert!(matches!(generate_jfpm(&p), Err(Error::InvalidParam(_))));
    }
}
