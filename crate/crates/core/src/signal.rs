//! A real-valued series tagged with its sample rate.

use crate::error::{Error, Result};

/// Samples plus the rate they were taken at. Most operations that consume two
/// signals require the rates to agree within [`RATE_TOLERANCE_HZ`].
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal {
    pub samples: Vec<f64>,
    pub sample_rate_hz: f64,
}

/// Absolute tolerance for treating two sample rates as equal.
pub const RATE_TOLERANCE_HZ: f64 = 1e-9;

impl SampledSignal {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64) -> Result<Self> {
        if !sample_rate_hz.is_finite() || sample_rate_hz <= 0.0 {
            return Err(Error::InvalidParam(format!(
                "sample rate must be positive and finite, got {sample_rate_hz}"
            )));
        }
        Ok(SampledSignal { samples, sample_rate_hz })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    /// Error unless `other` shares this signal's sample rate.
    pub fn check_rate(&self, other_rate_hz: f64) -> Result<()> {
        if (self.sample_rate_hz - other_rate_hz).abs() > RATE_TOLERANCE_HZ {
            return Err(Error::RateMismatch {
                left_hz: self.sample_rate_hz,
                right_hz: other_rate_hz,
            });
        }
        Ok(())
    }
}
