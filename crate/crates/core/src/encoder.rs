//! Temporal response function (TRF) estimation and application.
//!
//! The visual pathway is modelled as a causal finite impulse response from
//! stimulus luminance to an evoked component:
//!
//! ```text
//! r(t) = sum_tau h(tau) s(t - tau) + noise
//! ```
//!
//! [`fit_trf`] estimates `h` over a lag window by (optionally ridge-damped)
//! least squares on the lag-matrix normal equations
//! `(S^T S + lambda I) h = S^T r`. [`predict_response`] runs the model
//! forward, [`reconstruct_stimulus`] inverts it with a Wiener-regularized
//! spectral division, and [`decompose_response`] splits a measured response
//! into the TRF-explained part and the residual.

use ndarray::{Array1, Array2};
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fourier;
use crate::linalg;
use crate::signal::SampledSignal;

/// Condition-estimate ceiling above which an unregularized fit is refused.
pub const CONDITION_LIMIT: f64 = 1e12;

/// `|H(f)|` floor below which an unregularized spectral inverse is refused.
pub const INVERSE_MAGNITUDE_FLOOR: f64 = 1e-9;

// ---------------------------------------------------------------------------
// Lag window
// ---------------------------------------------------------------------------

/// Inclusive lag window in seconds. Lags are non-negative (causal model) and
/// discretized at the signal sample rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagWindow {
    pub min_s: f64,
    pub max_s: f64,
}

impl Default for LagWindow {
    fn default() -> Self {
        LagWindow { min_s: 0.0, max_s: 0.5 }
    }
}

impl LagWindow {
    pub fn new(min_s: f64, max_s: f64) -> Result<Self> {
        if !min_s.is_finite() || !max_s.is_finite() || min_s < 0.0 || max_s < min_s {
            return Err(Error::InvalidParam(format!(
                "lag window [{min_s}, {max_s}] must satisfy 0 <= min <= max"
            )));
        }
        Ok(LagWindow { min_s, max_s })
    }

    /// Sample offsets covered by the window at `sample_rate_hz`.
    pub fn offsets(&self, sample_rate_hz: f64) -> (usize, usize) {
        let lo = (self.min_s * sample_rate_hz).round() as usize;
        let hi = (self.max_s * sample_rate_hz).round() as usize;
        (lo, hi)
    }

    pub fn n_lags(&self, sample_rate_hz: f64) -> usize {
        let (lo, hi) = self.offsets(sample_rate_hz);
        hi - lo + 1
    }
}

// ---------------------------------------------------------------------------
// The fitted model
// ---------------------------------------------------------------------------

/// A fitted (or constructed) temporal response function.
#[derive(Debug, Clone, PartialEq)]
pub struct Trf {
    pub coeffs: Vec<f64>,
    pub sample_rate_hz: f64,
    pub lag_min_s: f64,
    pub lag_max_s: f64,
    pub ridge_lambda: f64,
    /// DFT of the zero-padded coefficients on the fitting window's grid.
    pub frequency_response: Vec<Complex64>,
}

impl Trf {
    /// Build a TRF directly from coefficients. `lag_min_s` anchors the first
    /// coefficient; subsequent lags step by one sample. `n_fft` sets the grid
    /// of the cached [`Trf::frequency_response`].
    pub fn from_coeffs(
        coeffs: Vec<f64>,
        sample_rate_hz: f64,
        lag_min_s: f64,
        ridge_lambda: f64,
        n_fft: usize,
    ) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidParam("TRF must have at least one coefficient".into()));
        }
        if !sample_rate_hz.is_finite() || sample_rate_hz <= 0.0 {
            return Err(Error::InvalidParam(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if lag_min_s < 0.0 {
            return Err(Error::InvalidParam("lag_min_s must be non-negative".into()));
        }
        let lag_max_s = lag_min_s + (coeffs.len() - 1) as f64 / sample_rate_hz;
        let n_fft = n_fft.max(coeffs.len());
        let offset = (lag_min_s * sample_rate_hz).round() as usize;
        let frequency_response = Self::response_on_grid(&coeffs, offset, n_fft);
        Ok(Trf {
            coeffs,
            sample_rate_hz,
            lag_min_s,
            lag_max_s,
            ridge_lambda,
            frequency_response,
        })
    }

    pub fn n_lags(&self) -> usize {
        self.coeffs.len()
    }

    /// Lag times in seconds, one per coefficient.
    pub fn lags_s(&self) -> Vec<f64> {
        let (lo, _) = LagWindow { min_s: self.lag_min_s, max_s: self.lag_max_s }
            .offsets(self.sample_rate_hz);
        (0..self.coeffs.len())
            .map(|j| (lo + j) as f64 / self.sample_rate_hz)
            .collect()
    }

    fn lag_offset(&self) -> usize {
        (self.lag_min_s * self.sample_rate_hz).round() as usize
    }

    fn response_on_grid(coeffs: &[f64], offset: usize, n_fft: usize) -> Vec<Complex64> {
        let mut padded = vec![0.0; n_fft.max(offset + coeffs.len())];
        for (j, &c) in coeffs.iter().enumerate() {
            padded[offset + j] = c;
        }
        padded.truncate(n_fft.max(offset + coeffs.len()));
        if padded.len() != n_fft {
            // The anchor offset pushed past the requested grid; fall back to
            // the minimal grid that holds the shifted kernel.
            return fourier::dft(&padded);
        }
        fourier::dft(&padded)
    }

    /// Frequency response evaluated on an `n`-point DFT grid.
    pub fn frequency_response_at(&self, n: usize) -> Vec<Complex64> {
        Self::response_on_grid(&self.coeffs, self.lag_offset(), n)
    }

    /// True when the cached [`Trf::frequency_response`] equals a fresh DFT of
    /// the zero-padded coefficients.
    pub fn frequency_response_is_consistent(&self) -> bool {
        let fresh = self.frequency_response_at(self.frequency_response.len());
        fresh.len() == self.frequency_response.len()
            && fresh
                .iter()
                .zip(&self.frequency_response)
                .all(|(a, b)| (a - b).norm() <= 1e-9 * (1.0 + b.norm()))
    }
}

// ---------------------------------------------------------------------------
// Lag matrix and fitting
// ---------------------------------------------------------------------------

/// Time-lagged design matrix: row `t`, column `j` holds the stimulus at
/// `t - tau_j`, zero-padded before stimulus onset.
pub fn build_lag_matrix(
    stimulus: &SampledSignal,
    window: &LagWindow,
    ) -> Result<Array2<f64>> {
    let fs = stimulus.sample_rate_hz;
    let (lo, hi) = window.offsets(fs);
    let n_lags = hi - lo + 1;
    let n = stimulus.len();
    if n <= n_lags {
        return Err(Error::InvalidParam(format!(
            "stimulus of {n} samples cannot support a {n_lags}-lag window"
        )));
    }
    let mut m = Array2::<f64>::zeros((n, n_lags));
    for t in 0..n {
        for j in 0..n_lags {
            let tau = lo + j;
            if t >= tau {
                m[[t, j]] = stimulus.samples[t - tau];
            }
        }
    }
    Ok(m)
}

fn pooled_normal_equations(
    pairs: &[(&SampledSignal, &SampledSignal)],
    window: &LagWindow,
) -> Result<(Array2<f64>, Array1<f64>, usize, f64)> {
    if pairs.is_empty() {
        return Err(Error::InvalidParam("fit_trf needs at least one stimulus/response pair".into()));
    }
    let fs = pairs[0].0.sample_rate_hz;
    let n_lags = window.n_lags(fs);
    let mut gram = Array2::<f64>::zeros((n_lags, n_lags));
    let mut moment = Array1::<f64>::zeros(n_lags);
    let mut rows = 0usize;
    for (stim, resp) in pairs {
        stim.check_rate(fs)?;
        resp.check_rate(fs)?;
        if stim.len() != resp.len() {
            return Err(Error::InvalidParam(format!(
                "stimulus ({}) and response ({}) lengths differ",
                stim.len(),
                resp.len()
            )));
        }
        let s = build_lag_matrix(stim, window)?;
        let r = Array1::from_vec(resp.samples.clone());
        gram = gram + s.t().dot(&s);
        moment = moment + s.t().dot(&r);
        rows += s.nrows();
    }
    Ok((gram, moment, rows, fs))
}

/// Fit a TRF on pooled stimulus/response pairs.
///
/// `ridge_lambda = None` selects the default damping `1e-3 * mean(diag(S^T S))`;
/// `Some(0.0)` requests the exact least-squares solution and fails with
/// [`Error::SingularSystem`] when the normal equations are ill-conditioned
/// beyond [`CONDITION_LIMIT`].
pub fn fit_trf(
    pairs: &[(&SampledSignal, &SampledSignal)],
    window: &LagWindow,
    ridge_lambda: Option<f64>,
) -> Result<Trf> {
    let (gram, moment, rows, fs) = pooled_normal_equations(pairs, window)?;
    let n_lags = gram.nrows();
    if rows < 10 * n_lags {
        log::warn!(
            "fitting {n_lags} lags on only {rows} pooled samples; estimates may be unstable"
        );
    }
    let mean_diag = (0..n_lags).map(|i| gram[[i, i]]).sum::<f64>() / n_lags as f64;
    let lambda = match ridge_lambda {
        Some(l) if l.is_finite() && l >= 0.0 => l,
        Some(l) => {
            return Err(Error::InvalidParam(format!("ridge lambda must be >= 0, got {l}")))
        }
        None => 1e-3 * mean_diag,
    };
    let mut system = gram;
    for i in 0..n_lags {
        system[[i, i]] += lambda;
    }
    let chol = match linalg::cholesky(&system) {
        Ok(l) => l,
        Err(_) => {
            return Err(Error::SingularSystem {
                cond_estimate: f64::INFINITY,
                limit: CONDITION_LIMIT,
            })
        }
    };
    if lambda == 0.0 {
        let cond = linalg::cholesky_condition_estimate(&chol);
        if cond > CONDITION_LIMIT {
            return Err(Error::SingularSystem { cond_estimate: cond, limit: CONDITION_LIMIT });
        }
    }
    let coeffs = linalg::solve_with_cholesky(&chol, &moment).to_vec();
    let n_fft = pairs[0].0.len();
    Trf::from_coeffs(coeffs, fs, window.min_s, lambda, n_fft)
}

// ---------------------------------------------------------------------------
// Forward and inverse application
// ---------------------------------------------------------------------------

/// Causal convolution of the stimulus with the TRF; output length equals the
/// stimulus length.
pub fn predict_response(trf: &Trf, stimulus: &SampledSignal) -> Result<SampledSignal> {
    stimulus.check_rate(trf.sample_rate_hz)?;
    let lo = trf.lag_offset();
    let n = stimulus.len();
    let mut out = vec![0.0; n];
    for (j, &h) in trf.coeffs.iter().enumerate() {
        let tau = lo + j;
        if h == 0.0 {
            continue;
        }
        for t in tau..n {
            out[t] += h * stimulus.samples[t - tau];
        }
    }
    SampledSignal::new(out, stimulus.sample_rate_hz)
}

/// Wiener-regularized spectral inversion of the response:
/// `S_hat(f) = conj(H) R / (|H|^2 + lambda)`.
///
/// With `wiener_lambda = 0` the division is exact and fails with
/// [`Error::DivergentInverse`] wherever `|H(f)|` drops below
/// [`INVERSE_MAGNITUDE_FLOOR`].
pub fn reconstruct_stimulus(
    trf: &Trf,
    response: &SampledSignal,
    wiener_lambda: f64,
) -> Result<SampledSignal> {
    if !wiener_lambda.is_finite() || wiener_lambda < 0.0 {
        return Err(Error::InvalidParam(format!(
            "Wiener lambda must be >= 0, got {wiener_lambda}"
        )));
    }
    response.check_rate(trf.sample_rate_hz)?;
    let n = response.len();
    if n == 0 {
        return Err(Error::InvalidParam("cannot reconstruct from an empty response".into()));
    }
    let h = trf.frequency_response_at(n);
    if wiener_lambda == 0.0 {
        for (k, hk) in h.iter().enumerate() {
            if hk.norm() < INVERSE_MAGNITUDE_FLOOR {
                return Err(Error::DivergentInverse {
                    frequency_hz: fourier::folded_freq(k, n, trf.sample_rate_hz),
                    magnitude: hk.norm(),
                });
            }
        }
    }
    let r = fourier::dft(&response.samples);
    let s_hat: Vec<Complex64> = h
        .iter()
        .zip(&r)
        .map(|(hk, rk)| hk.conj() * rk / (hk.norm_sqr() + wiener_lambda))
        .collect();
    SampledSignal::new(fourier::idft_real(&s_hat), response.sample_rate_hz)
}

// ---------------------------------------------------------------------------
// Decomposition
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComponentKind {
    Full,
    Linear,
    Nonlinear,
}

/// A response component tagged with its role in the decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSignal {
    pub signal: SampledSignal,
    pub kind: ComponentKind,
}

/// Split a measured response into the TRF-explained linear part and the
/// residual. The two parts sum back to the input sample-for-sample.
pub fn decompose_response(
    trf: &Trf,
    stimulus: &SampledSignal,
    response: &SampledSignal,
) -> Result<(ComponentSignal, ComponentSignal)> {
    stimulus.check_rate(response.sample_rate_hz)?;
    if stimulus.len() != response.len() {
        return Err(Error::InvalidParam(format!(
            "stimulus ({}) and response ({}) lengths differ",
            stimulus.len(),
            response.len()
        )));
    }
    let linear = predict_response(trf, stimulus)?;
    let residual: Vec<f64> = response
        .samples
        .iter()
        .zip(&linear.samples)
        .map(|(r, l)| r - l)
        .collect();
    let nonlinear = SampledSignal::new(residual, response.sample_rate_hz)?;
    Ok((
        ComponentSignal { signal: linear, kind: ComponentKind::Linear },
        ComponentSignal { signal: nonlinear, kind: ComponentKind::Nonlinear },
    ))
}
