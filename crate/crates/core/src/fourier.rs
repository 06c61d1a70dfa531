//! Thin DFT helpers on top of `rustfft`.
//!
//! Transforms are unnormalized in the forward direction and carry the `1/N`
//! factor on the inverse, so `idft(dft(x)) == x` up to rounding. Spectra of
//! real inputs are Hermitian; the one-sided helpers expose bins `0..=N/2`
//! whose center frequencies are `k / duration`.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// Forward DFT of a real series (unnormalized).
pub fn dft(x: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    if buf.len() > 1 {
        FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    }
    buf
}

/// Inverse DFT returning the real part, normalized by `1/N`.
pub fn idft_real(spectrum: &[Complex64]) -> Vec<f64> {
    let n = spectrum.len();
    let mut buf = spectrum.to_vec();
    if n > 1 {
        FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    }
    buf.iter().map(|c| c.re / n as f64).collect()
}

/// Number of one-sided bins for a length-`n` transform (`0..=n/2`).
pub fn half_len(n: usize) -> usize {
    n / 2 + 1
}

/// Center frequencies of the one-sided bins of a length-`n` transform.
pub fn half_freqs(n: usize, sample_rate_hz: f64) -> Vec<f64> {
    (0..half_len(n)).map(|k| k as f64 * sample_rate_hz / n as f64).collect()
}

/// Frequency of full-grid bin `k`, folded to the `[0, fs/2]` magnitude axis.
pub fn folded_freq(k: usize, n: usize, sample_rate_hz: f64) -> f64 {
    let k = k.min(n - k);
    k as f64 * sample_rate_hz / n as f64
}

/// DFT of `coeffs` zero-padded to length `n_fft`.
pub fn padded_dft(coeffs: &[f64], n_fft: usize) -> Vec<Complex64> {
    assert!(n_fft >= coeffs.len(), "padded_dft: n_fft shorter than input");
    let mut padded = vec![0.0; n_fft];
    padded[..coeffs.len()].copy_from_slice(coeffs);
    dft(&padded)
}
