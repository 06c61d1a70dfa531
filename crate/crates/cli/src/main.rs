//! `veplab` — one binary with subcommands covering the whole toolkit:
//! stimulus code generation, recording simulation, encoder fitting and
//! prediction, channel-capacity bounds, decoder training and evaluation,
//! information-transfer-rate arithmetic, the two code-optimization stages,
//! and a `run` command that executes the full pipeline from a single JSON
//! config.
//!
//! Every subcommand is deterministic given its flags and seeds. Exit codes:
//! 0 success, 2 configuration error, 3 data/file error, 4 numeric failure.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use veplab_core::capacity::{lower_bound_snr, mutual_information, upper_bound_snr, SnrOptions};
use veplab_core::decoder::{classify, evaluate, itr, train_tdca, Recording};
use veplab_core::encoder::{decompose_response, predict_response, reconstruct_stimulus};
use veplab_core::error::ErrorCategory;
use veplab_core::io;
use veplab_core::optimizer::{
    estimate_group_responses, personal_optimize, sa_optimize, SaConfig,
};
use veplab_core::pipeline::{
    auto_wiener_lambda, epoch_stimuli, fit_recording_trf, run_pipeline, CapacityReport,
    PipelineConfig, TrfFitConfig,
};
use veplab_core::signal::SampledSignal;
use veplab_core::simulator::{simulate_recording, SimConfig};
use veplab_core::stimgen::{
    generate_jfpm, generate_white_noise, upsample_to_signal, JfpmParams, WhiteNoiseParams,
};
use veplab_core::{Error, Result};

// ---------------------------------------------------------------------------
// Argument surface
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(name = "veplab", version, about = "Visual evoked potential BCI toolkit")]
struct Cli {
    /// Cap on worker threads (falls back to VEPLAB_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a frequency/phase coded stimulus set (CSV + JSON sidecar).
    GenJfpm {
        #[arg(long, default_value_t = 40)]
        n_targets: usize,
        #[arg(long, default_value_t = 8.0)]
        f0_hz: f64,
        #[arg(long, default_value_t = 0.2)]
        delta_f_hz: f64,
        #[arg(long, default_value_t = 0.0)]
        phi0_rad: f64,
        #[arg(long, default_value_t = 0.35 * PI)]
        delta_phi_rad: f64,
        #[arg(long, default_value_t = 60.0)]
        frame_rate_hz: f64,
        #[arg(long, default_value_t = 1.0)]
        duration_s: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a white-noise coded stimulus set (CSV + JSON sidecar).
    GenWn {
        #[arg(long, default_value_t = 160)]
        n_classes: usize,
        #[arg(long, default_value_t = 60.0)]
        frame_rate_hz: f64,
        #[arg(long, default_value_t = 1.0)]
        duration_s: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate a multichannel recording for a code set.
    Simulate {
        /// Code set CSV (sidecar required next to it).
        #[arg(long)]
        codes: PathBuf,
        /// Simulator config JSON; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the per-trial ground-truth decomposition as JSON.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Fit a temporal response function on a recording.
    FitTrf {
        #[arg(long)]
        recording: PathBuf,
        #[arg(long)]
        codes: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        lag_min_s: f64,
        #[arg(long, default_value_t = 0.5)]
        lag_max_s: f64,
        /// Ridge damping; omitted = scale-aware default, 0 = exact LS.
        #[arg(long)]
        ridge_lambda: Option<f64>,
        /// Comma-separated channel weights; omitted = uniform average.
        #[arg(long)]
        weights: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict the response a code evokes under a fitted TRF.
    Predict {
        #[arg(long)]
        trf: PathBuf,
        #[arg(long)]
        codes: PathBuf,
        #[arg(long)]
        class_id: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct the stimulus drive from one trial by Wiener inversion.
    Reconstruct {
        #[arg(long)]
        trf: PathBuf,
        #[arg(long)]
        recording: PathBuf,
        #[arg(long)]
        trial: usize,
        #[arg(long, default_value_t = 0.1)]
        wiener_lambda: f64,
        #[arg(long)]
        weights: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split one trial into the TRF-explained part and the residual.
    Decompose {
        #[arg(long)]
        trf: PathBuf,
        #[arg(long)]
        recording: PathBuf,
        #[arg(long)]
        codes: PathBuf,
        #[arg(long)]
        trial: usize,
        #[arg(long)]
        weights: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bracket the visual channel's information rate from repetitions.
    Capacity {
        #[arg(long)]
        recording: PathBuf,
        #[arg(long)]
        codes: PathBuf,
        /// Fitted TRF; enables the reconstruction (lower) bound.
        #[arg(long)]
        trf: Option<PathBuf>,
        #[arg(long)]
        weights: Option<String>,
        #[arg(long, default_value_t = 1.0)]
        band_lo_hz: f64,
        #[arg(long, default_value_t = 30.0)]
        band_hi_hz: f64,
        #[arg(long, default_value_t = 1e6)]
        snr_max: f64,
        /// Wiener damping for the lower bound; omitted = derived from the
        /// estimated noise and stimulus spectra.
        #[arg(long)]
        wiener_lambda: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the task-discriminant decoder on a recording.
    Train {
        #[arg(long)]
        recording: PathBuf,
        #[arg(long, default_value_t = veplab_core::decoder::DEFAULT_N_COMPONENTS)]
        n_components: usize,
        #[arg(long, default_value_t = veplab_core::decoder::DEFAULT_SHRINKAGE_GAMMA)]
        shrinkage_gamma: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify one trial and print per-class scores.
    Classify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        recording: PathBuf,
        #[arg(long)]
        trial: usize,
        #[arg(long)]
        window_s: f64,
    },
    /// Score a model over a whole recording at one window length.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        recording: PathBuf,
        #[arg(long)]
        window_s: f64,
        /// Write accuracy and the confusion matrix as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Information-transfer-rate arithmetic for a single operating point.
    Itr {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        accuracy: f64,
        #[arg(long)]
        stim_time_s: f64,
        #[arg(long, default_value_t = 0.5)]
        gaze_time_s: f64,
    },
    /// Select a maximally spread code subset by simulated annealing.
    OptimizeGroup {
        #[arg(long)]
        trf: PathBuf,
        #[arg(long)]
        codes: PathBuf,
        #[arg(long)]
        select_size: usize,
        #[arg(long, default_value_t = 20_000)]
        iterations: usize,
        #[arg(long, default_value_t = 4)]
        restarts: usize,
        #[arg(long, default_value_t = 0.995)]
        cooling: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        initial_temp: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the per-iteration annealing trace as JSON.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Select the per-user code subset with the best decoding accuracy.
    OptimizePersonal {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        recording: PathBuf,
        #[arg(long)]
        codes: PathBuf,
        #[arg(long)]
        subset_size: usize,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Execute the full pipeline from a JSON config into a directory.
    Run {
        /// Pipeline config JSON; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

// ---------------------------------------------------------------------------
// Small JSON payloads for signal-valued outputs
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SignalFile {
    sample_rate_hz: f64,
    samples: Vec<f64>,
}

impl From<SampledSignal> for SignalFile {
    fn from(s: SampledSignal) -> Self {
        SignalFile { sample_rate_hz: s.sample_rate_hz, samples: s.samples }
    }
}

#[derive(Serialize)]
struct DecompositionFile {
    sample_rate_hz: f64,
    class_id: u32,
    linear: Vec<f64>,
    nonlinear: Vec<f64>,
}

#[derive(Serialize)]
struct EvaluationFile {
    accuracy: f64,
    n_trials: usize,
    window_s: f64,
    class_ids: Vec<u32>,
    /// `confusion[i][j]` = fraction of `class_ids[i]` trials decoded as `class_ids[j]`.
    confusion: Vec<Vec<f64>>,
}

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

fn parse_weights(spec: &Option<String>, n_channels: usize) -> Result<Vec<f64>> {
    match spec {
        None => Ok(vec![1.0 / n_channels as f64; n_channels]),
        Some(text) => {
            let weights: Vec<f64> = text
                .split(',')
                .map(|tok| {
                    tok.trim().parse::<f64>().map_err(|_| {
                        Error::InvalidParam(format!("weight '{tok}' is not a number"))
                    })
                })
                .collect::<Result<_>>()?;
            if weights.len() != n_channels {
                return Err(Error::InvalidParam(format!(
                    "{} weights given for {} channels",
                    weights.len(),
                    n_channels
                )));
            }
            Ok(weights)
        }
    }
}

fn check_trial(rec: &Recording, trial: usize) -> Result<()> {
    if trial >= rec.n_trials() {
        return Err(Error::InvalidParam(format!(
            "trial {trial} out of range for a recording with {} trials",
            rec.n_trials()
        )));
    }
    Ok(())
}

fn weighted_signal(rec: &Recording, trial: usize, weights: &[f64]) -> Result<SampledSignal> {
    SampledSignal::new(rec.weighted_trace(trial, weights)?, rec.sample_rate_hz)
}

fn init_threads(flag: Option<usize>) {
    let n = flag.or_else(|| {
        std::env::var("VEPLAB_THREADS").ok().and_then(|v| v.parse::<usize>().ok())
    });
    if let Some(n) = n {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already initialized: {e}");
        }
    }
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::GenJfpm {
            n_targets,
            f0_hz,
            delta_f_hz,
            phi0_rad,
            delta_phi_rad,
            frame_rate_hz,
            duration_s,
            out,
        } => {
            let params = JfpmParams {
                n_targets,
                f0_hz,
                delta_f_hz,
                phi0_rad,
                delta_phi_rad,
                frame_rate_hz,
                duration_s,
            };
            let codes = generate_jfpm(&params)?;
            io::write_code_set(&codes, &out)?;
            println!("wrote {} frequency/phase codes to {}", codes.codes.len(), out.display());
            Ok(())
        }
        Command::GenWn { n_classes, frame_rate_hz, duration_s, seed, out } => {
            let params = WhiteNoiseParams { n_classes, frame_rate_hz, duration_s, seed };
            let codes = generate_white_noise(&params)?;
            io::write_code_set(&codes, &out)?;
            println!("wrote {} white-noise codes to {}", codes.codes.len(), out.display());
            Ok(())
        }
        Command::Simulate { codes, config, out, truth } => {
            let codes = io::read_code_set(&codes)?;
            let sim: SimConfig = match config {
                Some(path) => io::read_json(&path)?,
                None => SimConfig::default(),
            };
            let (rec, ground_truth) = simulate_recording(&sim, &codes)?;
            io::write_recording(&rec, &out)?;
            if let Some(truth_path) = truth {
                io::write_json(&ground_truth, &truth_path)?;
            }
            println!(
                "wrote {} trials x {} channels x {} samples at {} Hz to {}",
                rec.n_trials(),
                rec.n_channels(),
                rec.n_samples(),
                rec.sample_rate_hz,
                out.display()
            );
            Ok(())
        }
        Command::FitTrf { recording, codes, lag_min_s, lag_max_s, ridge_lambda, weights, out } => {
            let rec = io::read_recording(&recording)?;
            let codes = io::read_code_set(&codes)?;
            let weights = parse_weights(&weights, rec.n_channels())?;
            let stimuli = epoch_stimuli(&codes, rec.sample_rate_hz, rec.n_samples())?;
            let cfg = TrfFitConfig { lag_min_s, lag_max_s, ridge_lambda };
            let trf = fit_recording_trf(&rec, &stimuli, &weights, &cfg)?;
            io::write_trf(&trf, &out)?;
            println!(
                "fitted {} lags over [{}, {}] s from {} trials to {}",
                trf.coeffs.len(),
                trf.lag_min_s,
                trf.lag_max_s,
                rec.n_trials(),
                out.display()
            );
            Ok(())
        }
        Command::Predict { trf, codes, class_id, out } => {
            let trf = io::read_trf(&trf)?;
            let codes = io::read_code_set(&codes)?;
            let stim = upsample_to_signal(codes.code(class_id)?, trf.sample_rate_hz)?;
            let predicted = predict_response(&trf, &stim)?;
            io::write_json(&SignalFile::from(predicted), &out)?;
            println!("wrote predicted response for class {class_id} to {}", out.display());
            Ok(())
        }
        Command::Reconstruct { trf, recording, trial, wiener_lambda, weights, out } => {
            let trf = io::read_trf(&trf)?;
            let rec = io::read_recording(&recording)?;
            check_trial(&rec, trial)?;
            let weights = parse_weights(&weights, rec.n_channels())?;
            let response = weighted_signal(&rec, trial, &weights)?;
            let estimate = reconstruct_stimulus(&trf, &response, wiener_lambda)?;
            io::write_json(&SignalFile::from(estimate), &out)?;
            println!("wrote reconstructed stimulus for trial {trial} to {}", out.display());
            Ok(())
        }
        Command::Decompose { trf, recording, codes, trial, weights, out } => {
            let trf = io::read_trf(&trf)?;
            let rec = io::read_recording(&recording)?;
            let codes = io::read_code_set(&codes)?;
            check_trial(&rec, trial)?;
            let weights = parse_weights(&weights, rec.n_channels())?;
            let class_id = rec.labels[trial];
            let stimuli = epoch_stimuli(&codes, rec.sample_rate_hz, rec.n_samples())?;
            let stimulus = stimuli
                .get(&class_id)
                .ok_or(Error::UnknownClass { class_id })?;
            let response = weighted_signal(&rec, trial, &weights)?;
            let (linear, nonlinear) = decompose_response(&trf, stimulus, &response)?;
            let file = DecompositionFile {
                sample_rate_hz: rec.sample_rate_hz,
                class_id,
                linear: linear.signal.samples,
                nonlinear: nonlinear.signal.samples,
            };
            io::write_json(&file, &out)?;
            println!("wrote decomposition of trial {trial} (class {class_id}) to {}", out.display());
            Ok(())
        }
        Command::Capacity {
            recording,
            codes,
            trf,
            weights,
            band_lo_hz,
            band_hi_hz,
            snr_max,
            wiener_lambda,
            out,
        } => {
            let rec = io::read_recording(&recording)?;
            let codes = io::read_code_set(&codes)?;
            let weights = parse_weights(&weights, rec.n_channels())?;
            let opts = SnrOptions { band_hz: (band_lo_hz, band_hi_hz), snr_max };
            let upper = upper_bound_snr(&rec, &codes, &weights, &opts)?;
            let upper_info = mutual_information(&upper)?;
            println!("upper bound: {:.2} bits/s", upper_info.bits_per_second);
            match trf {
                Some(trf_path) => {
                    let trf = io::read_trf(&trf_path)?;
                    let stimuli = epoch_stimuli(&codes, rec.sample_rate_hz, rec.n_samples())?;
                    let lambda = wiener_lambda
                        .unwrap_or_else(|| auto_wiener_lambda(&upper, &stimuli, opts.band_hz));
                    let lower = lower_bound_snr(&rec, &codes, &trf, &weights, lambda, &opts)?;
                    let lower_info = mutual_information(&lower)?;
                    println!("lower bound: {:.2} bits/s", lower_info.bits_per_second);
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
                    io::write_json(&report, &out)?;
                }
                None => {
                    let report = serde_json::json!({
                        "band_hz": opts.band_hz,
                        "freqs_hz": upper.freqs_hz,
                        "upper_snr": upper.snr,
                        "upper_bits_per_second": upper_info.bits_per_second,
                        "n_trials_m": upper.n_trials_m,
                        "upper_capped": upper.capped,
                    });
                    io::write_json(&report, &out)?;
                }
            }
            Ok(())
        }
        Command::Train { recording, n_components, shrinkage_gamma, out } => {
            let rec = io::read_recording(&recording)?;
            let model = train_tdca(&rec, n_components, shrinkage_gamma)?;
            io::write_model(&model, &out)?;
            println!(
                "trained {}-component model on {} classes to {}",
                n_components,
                model.class_ids().len(),
                out.display()
            );
            Ok(())
        }
        Command::Classify { model, recording, trial, window_s } => {
            let model = io::read_model(&model)?;
            let rec = io::read_recording(&recording)?;
            check_trial(&rec, trial)?;
            let result = classify(&model, rec.trial(trial), window_s)?;
            println!("trial {trial}: predicted class {}", result.predicted);
            if result.degenerate_trial {
                println!("warning: trial is constant over the window; scores are all zero");
            }
            for (class_id, score) in &result.scores {
                println!("  class {class_id}: {score:.6}");
            }
            Ok(())
        }
        Command::Evaluate { model, recording, window_s, out } => {
            let model = io::read_model(&model)?;
            let rec = io::read_recording(&recording)?;
            let eval = evaluate(&model, &rec, window_s)?;
            println!(
                "accuracy {:.4} over {} trials at {window_s} s",
                eval.accuracy, eval.n_trials
            );
            if let Some(path) = out {
                let confusion: Vec<Vec<f64>> =
                    eval.confusion.rows().into_iter().map(|r| r.to_vec()).collect();
                let file = EvaluationFile {
                    accuracy: eval.accuracy,
                    n_trials: eval.n_trials,
                    window_s,
                    class_ids: eval.class_ids,
                    confusion,
                };
                io::write_json(&file, &path)?;
            }
            Ok(())
        }
        Command::Itr { m, accuracy, stim_time_s, gaze_time_s } => {
            let r = itr(m, accuracy, stim_time_s, gaze_time_s)?;
            println!("bits/trial: {:.4}", r.bits_per_trial);
            println!("ITR: {:.2} bits/min", r.itr_bpm);
            println!("ITR*: {:.2} bits/s", r.itr_star_bps);
            Ok(())
        }
        Command::OptimizeGroup {
            trf,
            codes,
            select_size,
            iterations,
            restarts,
            cooling,
            seed,
            initial_temp,
            out,
            trace,
        } => {
            let trf = io::read_trf(&trf)?;
            let pool = io::read_code_set(&codes)?;
            let config = SaConfig {
                iterations,
                initial_temp,
                cooling,
                seed,
                pool_size: pool.codes.len(),
                select_size,
                restarts,
            };
            let responses = estimate_group_responses(&trf, &pool)?;
            let (selected, trace_data) = sa_optimize(&pool, &responses, &config)?;
            io::write_code_set(&selected, &out)?;
            if let Some(trace_path) = trace {
                io::write_json(&trace_data, &trace_path)?;
            }
            println!(
                "selected {:?} with objective {:.6}",
                trace_data.best_subset, trace_data.best_objective
            );
            Ok(())
        }
        Command::OptimizePersonal { model, recording, codes, subset_size, samples, seed, out } => {
            let model = io::read_model(&model)?;
            let rec = io::read_recording(&recording)?;
            let pool = io::read_code_set(&codes)?;
            let (selected, accuracy) =
                personal_optimize(&model, &rec, &pool, subset_size, samples, seed)?;
            io::write_code_set(&selected, &out)?;
            println!(
                "selected {:?} with training accuracy {:.4}",
                selected.class_ids(),
                accuracy
            );
            Ok(())
        }
        Command::Run { config, out_dir } => {
            let config: PipelineConfig = match config {
                Some(path) => io::read_json(&path)?,
                None => PipelineConfig::default(),
            };
            let bundle = run_pipeline(&config, &out_dir)?;
            if let Some(cap) = &bundle.capacity {
                println!(
                    "capacity: upper {:.2} bits/s, lower {:.2} bits/s",
                    cap.upper_bits_per_second, cap.lower_bits_per_second
                );
            }
            for (name, rows) in &bundle.itr_tables {
                let best =
                    rows.iter().map(|r| r.itr_star_bps).fold(f64::NEG_INFINITY, f64::max);
                println!("itr table {name}: {} windows, peak ITR* {best:.2} bits/s", rows.len());
            }
            println!("bundle: {}", out_dir.join("bundle.json").display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    init_threads(cli.threads);
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.category() {
                ErrorCategory::Config => 2u8,
                ErrorCategory::Data => 3u8,
                ErrorCategory::Numeric => 4u8,
            })
        }
    }
}
