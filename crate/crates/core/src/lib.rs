//! # veplab-core
//!
//! A toolbox for visual evoked potential (VEP) brain-computer interfaces built
//! around an information-theoretic view of the visual channel.
//!
//! The crate covers the full loop from stimulus design to decoded output:
//!
//! * [`stimgen`] — periodic (frequency/phase coded) and broadband (white noise)
//!   stimulus code generation, plus upsampling of frame-rate codes to
//!   recording-rate signals.
//! * [`encoder`] — temporal response function (TRF) estimation by ridge
//!   regression, forward prediction, Wiener-regularized stimulus
//!   reconstruction, and linear/nonlinear response decomposition.
//! * [`capacity`] — spectral SNR estimation from repeated trials (upper bound)
//!   and from single-trial reconstructions (lower bound), integrated into
//!   mutual information rates in bits/s.
//! * [`decoder`] — task-discriminant spatial filtering, template correlation
//!   classification, and information transfer rate (ITR) bookkeeping.
//! * [`optimizer`] — simulated-annealing selection of code subsets that
//!   maximize pairwise separation of predicted responses, and a personalized
//!   subset search driven by held-out classification accuracy.
//! * [`simulator`] — synthetic EEG generation with a known ground-truth TRF,
//!   1/f background noise, an occipital alpha oscillator, and sensor noise.
//! * [`io`] — binary recording files, CSV code sets with JSON sidecars, and
//!   JSON model/TRF serialization.
//! * [`pipeline`] — an end-to-end batch run wiring all stages together.
//!
//! All randomness is driven by explicitly keyed counter-mode streams (see
//! [`rng`]) so that every artifact is reproducible from a root seed.

pub mod capacity;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod fourier;
pub mod io;
pub mod linalg;
pub mod optimizer;
pub mod pipeline;
pub mod rng;
pub mod signal;
pub mod simulator;
pub mod stats;
pub mod stimgen;

pub use error::{Error, Result};
pub use signal::SampledSignal;
