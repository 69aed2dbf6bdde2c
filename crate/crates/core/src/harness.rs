//! Monte-Carlo SER/MSE evaluation engine, delay and feedback-overhead
//! models, experiment presets, and deterministic CSV/JSON reporting.
//!
//! Every random quantity flows from named seeds; identical specs produce
//! identical result files apart from wall-clock columns.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{self, AnalogMode};
use crate::bcd::{self, BcdSettings};
use crate::channel::{sample_channel, scale_channels, ChannelProcess, ChannelSet};
use crate::config::{ChannelModel, SystemConfig};
use crate::error::{Error, Result};
use crate::linalg::{cx, CMat, CVec};
use crate::objective::{self, TransceiverState};
use crate::thp::{order_users, thp_encode, QamConstellation, ThpState};
use crate::tosca::{self, PhaseInit, Timeline};

/// Algorithms the evaluation harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    NonlinearJoint,
    NonlinearSeparate,
    LinearJoint,
    LinearSeparate,
    Zf,
    Fd,
    Tts,
}

impl Algorithm {
    pub const ALL_SINGLE_TIMESCALE: [Algorithm; 6] = [
        Algorithm::Fd,
        Algorithm::NonlinearJoint,
        Algorithm::NonlinearSeparate,
        Algorithm::LinearJoint,
        Algorithm::LinearSeparate,
        Algorithm::Zf,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::NonlinearJoint => "nonlinear-joint",
            Algorithm::NonlinearSeparate => "nonlinear-separate",
            Algorithm::LinearJoint => "linear-joint",
            Algorithm::LinearSeparate => "linear-separate",
            Algorithm::Zf => "zf",
            Algorithm::Fd => "fd",
            Algorithm::Tts => "tts",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nonlinear-joint" => Ok(Algorithm::NonlinearJoint),
            "nonlinear-separate" => Ok(Algorithm::NonlinearSeparate),
            "linear-joint" => Ok(Algorithm::LinearJoint),
            "linear-separate" => Ok(Algorithm::LinearSeparate),
            "zf" => Ok(Algorithm::Zf),
            "fd" => Ok(Algorithm::Fd),
            "tts" | "two-timescale" => Ok(Algorithm::Tts),
            other => Err(Error::InvalidArgument(format!("unknown algorithm {other}"))),
        }
    }
}

/// Experiment presets mirroring the standard evaluation plots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Solver convergence trace.
    Fig3,
    /// SER comparison across algorithms, plus ordering and robustness studies.
    Fig4,
    /// MSE comparison across algorithms.
    Fig5,
    /// CSI feedback overhead table.
    Fig7,
    /// SER versus SNR under a fixed CSI delay.
    Fig8,
    /// SER versus CSI delay.
    Fig9,
    /// Fast desk-scale comparison.
    Desk,
    /// Full-scale configuration.
    Paper,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig3" => Ok(Preset::Fig3),
            "fig4" => Ok(Preset::Fig4),
            "fig5" => Ok(Preset::Fig5),
            "fig7" => Ok(Preset::Fig7),
            "fig8" => Ok(Preset::Fig8),
            "fig9" => Ok(Preset::Fig9),
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            other => Err(Error::InvalidArgument(format!("unknown preset {other}"))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Preset::Fig3 => "fig3",
            Preset::Fig4 => "fig4",
            Preset::Fig5 => "fig5",
            Preset::Fig7 => "fig7",
            Preset::Fig8 => "fig8",
            Preset::Fig9 => "fig9",
            Preset::Desk => "desk",
            Preset::Paper => "paper",
        };
        f.write_str(name)
    }
}

/// Fully resolved description of one experiment run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub preset: Preset,
    pub snr_db: Vec<f64>,
    pub seeds: Vec<u64>,
    /// QAM symbols per (algorithm, SNR, seed) cell.
    pub symbols: usize,
    pub algorithms: Vec<Algorithm>,
    /// CSI delays in milliseconds for the delay studies.
    pub delays_ms: Vec<f64>,
    pub out_dir: PathBuf,
    pub system: SystemConfig,
    pub channel: ChannelModel,
    pub frames: usize,
    pub slots_per_frame: usize,
    pub slot_duration: f64,
    pub solver_tolerance: f64,
    pub solver_max_iterations: usize,
}

impl ExperimentSpec {
    pub fn preset(preset: Preset) -> Self {
        let mut spec = ExperimentSpec {
            preset,
            snr_db: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            seeds: (0..20).collect(),
            symbols: 100_000,
            algorithms: Algorithm::ALL_SINGLE_TIMESCALE.to_vec(),
            delays_ms: vec![0.0, 1.0, 2.0, 4.0],
            out_dir: PathBuf::from("out"),
            system: SystemConfig::desk(),
            channel: ChannelModel::default(),
            frames: 60,
            slots_per_frame: 4,
            slot_duration: 1e-4,
            solver_tolerance: 1e-6,
            solver_max_iterations: 500,
        };
        match preset {
            Preset::Fig3 => {
                spec.snr_db = vec![20.0];
                spec.seeds = (0..5).collect();
                spec.algorithms = vec![Algorithm::NonlinearJoint];
            }
            Preset::Fig4 | Preset::Desk => {
                spec.snr_db = vec![10.0, 15.0, 20.0];
            }
            Preset::Fig5 => {
                spec.snr_db = vec![0.0, 5.0, 10.0, 15.0, 20.0];
                spec.symbols = 20_000;
            }
            Preset::Fig7 => {
                // overhead accounting uses the full-scale chain counts
                spec.system = SystemConfig::paper();
            }
            Preset::Fig8 => {
                spec.snr_db = vec![10.0, 15.0, 20.0];
                spec.algorithms = vec![Algorithm::Fd, Algorithm::NonlinearJoint, Algorithm::Tts];
                spec.delays_ms = vec![4.0];
                spec.channel.doppler_hz = 200.0;
                spec.seeds = (0..10).collect();
            }
            Preset::Fig9 => {
                spec.snr_db = vec![20.0];
                spec.algorithms = vec![Algorithm::Fd, Algorithm::NonlinearJoint, Algorithm::Tts];
                spec.channel.doppler_hz = 200.0;
                spec.seeds = (0..10).collect();
                spec.symbols = 40_000;
            }
            Preset::Paper => {
                spec.system = SystemConfig::paper();
                spec.seeds = (0..10).collect();
            }
        }
        spec
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.channel.validate()?;
        if self.snr_db.is_empty() {
            return Err(Error::InvalidConfig("SNR grid must be non-empty".into()));
        }
        if self.symbols < 1_000 {
            return Err(Error::InvalidConfig(
                "at least 1000 symbols per point required".into(),
            ));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("need at least one seed".into()));
        }
        Ok(())
    }

    pub fn solver_settings(&self) -> BcdSettings {
        BcdSettings::default()
            .with_tolerance(self.solver_tolerance)
            .with_max_iterations(self.solver_max_iterations)
    }

    /// FNV-1a content hash of the canonical JSON form.
    pub fn content_hash(&self) -> String {
        let json = serde_json::to_string(self).unwrap_or_default();
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for byte in json.as_bytes() {
            hash ^= *byte as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{hash:016x}")
    }
}

/// Monte-Carlo symbol-error-rate estimate with its binomial confidence
/// halfwidth.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SerEstimate {
    pub ser: f64,
    /// 95% binomial confidence halfwidth.
    pub ci_halfwidth: f64,
    pub errors: u64,
    pub symbols: u64,
}

/// Simulates the full signal chain on true channels: permutation, THP
/// encoding, transmission with fresh receiver noise, hybrid combining,
/// design-gain normalization, and modulo slicing, counting symbol errors
/// against the original streams.
///
/// `design_channels` are the (estimated) channels the state was designed on.
/// Each receiver slices v̂_k / g_k where g_k is the own-symbol coefficient
/// its design predicts; this is pure receiver-side knowledge and removes the
/// scale bias of MMSE estimates, which otherwise drags the outer
/// constellation points into neighboring decision cells at desk-scale SNR.
/// Zero design gains (e.g. an all-zero precoder) skip the normalization.
pub fn simulate_ser(
    state: &TransceiverState,
    true_channels: &[&CMat],
    design_channels: &[&CMat],
    sigma: &[f64],
    qam: &QamConstellation,
    n_symbols: usize,
    seed: u64,
) -> Result<SerEstimate> {
    if n_symbols == 0 {
        return Err(Error::InvalidArgument("need at least one symbol".into()));
    }
    if true_channels.len() != state.users() || design_channels.len() != state.users() {
        return Err(Error::Dimension("one channel per user required".into()));
    }
    let d = state.total_streams();
    let counts = state.stream_counts();
    let thp = ThpState::new(state.feedback_strict(), state.ordering.clone())?;
    let tw = &state.tx_analog * &state.tx_digital;
    // encode position of each source stream
    let mut position = vec![0usize; d];
    for (pos, &src) in state.ordering.order().iter().enumerate() {
        position[src] = pos;
    }

    // true symbol gains, design-side slicing references, per-user noise shapers
    let mut gains = Vec::with_capacity(state.users());
    let mut references = Vec::with_capacity(d);
    let mut noise_shapers = Vec::with_capacity(state.users());
    let mut row = 0;
    for (m, h) in true_channels.iter().enumerate() {
        let pf = &state.rx_digital[m] * &state.rx_analog[m];
        let designed = &pf * design_channels[m] * &tw;
        for k in 0..counts[m] {
            references.push(designed[(k, position[row + k])]);
        }
        gains.push(&pf * *h * &tw);
        let cov = &pf * pf.adjoint() * cx(sigma[m] * sigma[m], 0.0);
        let dim = cov.nrows();
        let chol = ((&cov + CMat::identity(dim, dim) * cx(1e-300, 0.0)).cholesky())
            .map(|c| c.l())
            .unwrap_or_else(|| CMat::zeros(dim, dim));
        noise_shapers.push(chol);
        row += counts[m];
    }

    let uses = n_symbols.div_ceil(d);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut errors = 0u64;
    let mut total = 0u64;
    for _ in 0..uses {
        let original = qam.random_vector(&mut rng, d);
        let permuted = state.ordering.apply(&original);
        let (x, _) = thp_encode(&permuted, &thp, qam)?;
        let mut row = 0;
        for m in 0..state.users() {
            let dm = counts[m];
            let mut received = &gains[m] * &x;
            let white = CVec::from_fn(dm, |_, _| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                cx(re, im) / std::f64::consts::SQRT_2
            });
            received += &noise_shapers[m] * white;
            for k in 0..dm {
                let reference = references[row + k];
                let statistic = if reference.norm() > 1e-12 {
                    received[k] / reference
                } else {
                    received[k]
                };
                let (folded, _) = qam.modulo_complex(statistic);
                let decided = qam.slice_complex(folded);
                if decided != original[row + k] {
                    errors += 1;
                }
                total += 1;
            }
            row += dm;
        }
    }
    let ser = errors as f64 / total as f64;
    let ci_halfwidth = 1.96 * (ser * (1.0 - ser) / total as f64).sqrt();
    Ok(SerEstimate {
        ser,
        ci_halfwidth,
        errors,
        symbols: total,
    })
}

/// Ratio between full-CSI delay and effective-CSI delay,
/// N_s ΣN_d / (R_s ΣR_d).
pub fn delay_ratio(cfg: &SystemConfig) -> f64 {
    (cfg.tx_antennas * cfg.sum_rx_antennas()) as f64
        / (cfg.tx_chains * cfg.sum_rx_chains()) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OverheadMode {
    SingleTimescale,
    TwoTimescale,
}

/// CSI feedback element count per super-frame (B = 1 quantization bit per
/// element; multiply externally for other depths).
pub fn feedback_overhead(frames: u64, slots_per_frame: u64, cfg: &SystemConfig, mode: OverheadMode) -> u64 {
    let full = (cfg.tx_antennas * cfg.sum_rx_antennas()) as u64;
    let effective = (cfg.tx_chains * cfg.sum_rx_chains()) as u64;
    match mode {
        OverheadMode::SingleTimescale => frames * slots_per_frame * full,
        OverheadMode::TwoTimescale => frames * full + frames * (slots_per_frame - 1) * effective,
    }
}

/// One (algorithm, SNR, seed) evaluation cell.
#[derive(Debug, Clone, Serialize)]
pub struct CellResult {
    pub algorithm: Algorithm,
    pub snr_db: f64,
    pub seed: u64,
    pub mse: f64,
    pub ser: f64,
    pub ci: f64,
    pub iterations: usize,
    pub wall_ms: f64,
}

/// Collected results of one experiment plus output bookkeeping.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub cells: Vec<CellResult>,
    pub config_hash: String,
    pub files: Vec<PathBuf>,
}

impl RunReport {
    pub fn mean_mse(&self, algorithm: Algorithm, snr_db: f64) -> f64 {
        mean(self
            .cells
            .iter()
            .filter(|c| c.algorithm == algorithm && c.snr_db == snr_db)
            .map(|c| c.mse))
    }

    pub fn mean_ser(&self, algorithm: Algorithm, snr_db: f64) -> f64 {
        mean(self
            .cells
            .iter()
            .filter(|c| c.algorithm == algorithm && c.snr_db == snr_db)
            .map(|c| c.ser))
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut acc = 0.0;
    let mut n = 0usize;
    for v in values {
        acc += v;
        n += 1;
    }
    if n == 0 {
        f64::NAN
    } else {
        acc / n as f64
    }
}

fn ser_seed(seed: u64) -> u64 {
    seed ^ 0x5eaf_00d5_eed5_eed5
}

/// Designs and evaluates one single-timescale cell on a fresh channel draw.
pub fn run_single_cell(
    algorithm: Algorithm,
    cfg: &SystemConfig,
    model: &ChannelModel,
    seed: u64,
    symbols: usize,
    settings: &BcdSettings,
) -> Result<CellResult> {
    let started = Instant::now();
    let (_, cs) = sample_channel(cfg, model, seed)?;
    let ordering = order_users(&cs.scaled_norms_sq(), &cfg.streams);
    let (state, iterations) = match algorithm {
        Algorithm::NonlinearJoint => {
            let (s, t) = bcd::solve(cfg, &cs, &ordering, settings)?;
            (s, t.iterations)
        }
        Algorithm::NonlinearSeparate => {
            let (s, t) = baselines::nonlinear_separate_solve(cfg, &cs, &ordering, settings)?;
            (s, t.iterations)
        }
        Algorithm::LinearJoint => {
            let (s, t) = baselines::linear_solve(cfg, &cs, settings, AnalogMode::Joint)?;
            (s, t.iterations)
        }
        Algorithm::LinearSeparate => {
            let (s, t) = baselines::linear_solve(cfg, &cs, settings, AnalogMode::Separate)?;
            (s, t.iterations)
        }
        Algorithm::Zf => {
            let (s, _) = baselines::zf_solve(cfg, &cs)?;
            (s, 1)
        }
        Algorithm::Fd => {
            let (s, t) = baselines::fd_solve(cfg, &cs, &ordering, settings)?;
            (s, t.iterations)
        }
        Algorithm::Tts => {
            return Err(Error::InvalidArgument(
                "two-timescale cells need a channel process; use run_tts_cell".into(),
            ))
        }
    };
    let est = cs.estimated();
    let mse = objective::mse(&state, &est, &cfg.noise_std, &cfg.csi_error_std)?;
    let qam = QamConstellation::new(cfg.qam_order)?;
    let truth = cs.true_channels();
    let ser = simulate_ser(&state, &truth, &est, &cfg.noise_std, &qam, symbols, ser_seed(seed))?;
    let snr_db = 10.0 * (cfg.power_budget / (cfg.noise_std[0] * cfg.noise_std[0])).log10();
    Ok(CellResult {
        algorithm,
        snr_db,
        seed,
        mse,
        ser: ser.ser,
        ci: ser.ci_halfwidth,
        iterations,
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

/// Runs a two-timescale cell: one super-frame, SER measured on the trailing
/// frames against the evolving true channel.
pub fn run_tts_cell(
    cfg: &SystemConfig,
    model: &ChannelModel,
    timeline: &Timeline,
    seed: u64,
    symbols: usize,
    settings: &BcdSettings,
) -> Result<CellResult> {
    let process = ChannelProcess::new(cfg, model, seed)?;
    run_tts_cell_with_process(cfg, &process, timeline, seed, symbols, settings)
}

/// Robust design (σ̂_e as configured) against a nonrobust variant that
/// ignores the CSI error statistics inside the optimizer; both evaluated on
/// the true channels of the same seed.
#[derive(Debug, Clone, Serialize)]
pub struct RobustPair {
    pub snr_db: f64,
    pub seed: u64,
    pub ser_robust: f64,
    pub ser_nonrobust: f64,
    pub mse_robust: f64,
    pub mse_nonrobust: f64,
}

pub fn robust_vs_nonrobust(
    cfg: &SystemConfig,
    model: &ChannelModel,
    seed: u64,
    symbols: usize,
    settings: &BcdSettings,
) -> Result<RobustPair> {
    let (_, cs) = sample_channel(cfg, model, seed)?;
    let ordering = order_users(&cs.scaled_norms_sq(), &cfg.streams);
    let qam = QamConstellation::new(cfg.qam_order)?;
    let truth = cs.true_channels();

    let (robust, _) = bcd::solve(cfg, &cs, &ordering, settings)?;
    // nonrobust: the optimizer sees σ̂_e = 0 on the same estimates
    let blind = scale_channels(&cs, &cfg.noise_std, &vec![0.0; cfg.users])?;
    let (nonrobust, _) = bcd::solve(cfg, &blind, &ordering, settings)?;

    let est = cs.estimated();
    let mse_robust = objective::mse(&robust, &est, &cfg.noise_std, &cfg.csi_error_std)?;
    let mse_nonrobust = objective::mse(&nonrobust, &est, &cfg.noise_std, &cfg.csi_error_std)?;
    let ser_robust =
        simulate_ser(&robust, &truth, &est, &cfg.noise_std, &qam, symbols, ser_seed(seed))?.ser;
    let ser_nonrobust = simulate_ser(
        &nonrobust,
        &truth,
        &est,
        &cfg.noise_std,
        &qam,
        symbols,
        ser_seed(seed),
    )?
    .ser;
    let snr_db = 10.0 * (cfg.power_budget / (cfg.noise_std[0] * cfg.noise_std[0])).log10();
    Ok(RobustPair {
        snr_db,
        seed,
        ser_robust,
        ser_nonrobust,
        mse_robust,
        mse_nonrobust,
    })
}

/// SER of single-timescale and two-timescale designs under one CSI delay.
#[derive(Debug, Clone, Serialize)]
pub struct DelayPoint {
    pub delay_ms: f64,
    pub seed: u64,
    pub ser_single: f64,
    pub ser_tts: f64,
    pub ser_fd: f64,
}

/// For each delay τ: the single-timescale designs re-solve on CSI delayed by
/// τ while the two-timescale digital updates see effective CSI delayed by
/// τ / delay_ratio; SER is always measured on the current true channels.
pub fn delay_sweep(
    cfg: &SystemConfig,
    model: &ChannelModel,
    timeline: &Timeline,
    delays_ms: &[f64],
    seeds: &[u64],
    symbols: usize,
    settings: &BcdSettings,
) -> Result<Vec<DelayPoint>> {
    let ratio = delay_ratio(cfg);
    let qam = QamConstellation::new(cfg.qam_order)?;
    let mut out = Vec::with_capacity(delays_ms.len() * seeds.len());
    for &delay_ms in delays_ms {
        let tau = delay_ms * 1e-3;
        for &seed in seeds {
            let process = ChannelProcess::new(cfg, model, seed)?;
            let tl = Timeline {
                full_csi_delay: tau,
                effective_csi_delay: tau / ratio,
                ..timeline.clone()
            };
            // two-timescale run with SER probing on the trailing frames
            let tts_cell = {
                let mut cfg_cell = cfg.clone();
                cfg_cell.power_budget = cfg.power_budget;
                run_tts_cell_with_process(&cfg_cell, &process, &tl, seed, symbols, settings)?
            };

            // single-timescale designs at a few measurement instants
            let measure_frames = tl.frames.min(6).max(1);
            let first = tl.frames - measure_frames;
            let per_point = (symbols / measure_frames).max(500);
            let mut single_err = 0u64;
            let mut fd_err = 0u64;
            let mut total = 0u64;
            for k in 0..measure_frames {
                let frame = first + k;
                let t_now =
                    (frame * tl.slots_per_frame) as f64 * tl.slot_duration;
                let event = (3u64 << 48) + frame as u64;
                let delayed = process.estimate_at(cfg, t_now - tau, event)?;
                let ordering = order_users(&delayed.scaled_norms_sq(), &cfg.streams);
                let truth = process.true_channels_at(cfg, t_now)?;
                let truth_refs: Vec<&CMat> = truth.iter().collect();

                let design = delayed.estimated();
                let (single_state, _) = bcd::solve(cfg, &delayed, &ordering, settings)?;
                let est = simulate_ser(
                    &single_state,
                    &truth_refs,
                    &design,
                    &cfg.noise_std,
                    &qam,
                    per_point,
                    ser_seed(seed) ^ (7 << 40) ^ frame as u64,
                )?;
                single_err += est.errors;

                let (fd_state, _) = baselines::fd_solve(cfg, &delayed, &ordering, settings)?;
                let est_fd = simulate_ser(
                    &fd_state,
                    &truth_refs,
                    &design,
                    &cfg.noise_std,
                    &qam,
                    per_point,
                    ser_seed(seed) ^ (9 << 40) ^ frame as u64,
                )?;
                fd_err += est_fd.errors;
                total += est.symbols;
            }
            out.push(DelayPoint {
                delay_ms,
                seed,
                ser_single: single_err as f64 / total as f64,
                ser_tts: tts_cell.ser,
                ser_fd: fd_err as f64 / total as f64,
            });
        }
    }
    Ok(out)
}

fn run_tts_cell_with_process(
    cfg: &SystemConfig,
    process: &ChannelProcess,
    timeline: &Timeline,
    seed: u64,
    symbols: usize,
    settings: &BcdSettings,
) -> Result<CellResult> {
    let started = Instant::now();
    let qam = QamConstellation::new(cfg.qam_order)?;
    let measure_frames = timeline.frames.min(8).max(1);
    let measure_from = timeline.frames - measure_frames;
    let slots = measure_frames * timeline.slots_per_frame;
    let per_slot = (symbols / slots).max(500);

    use std::cell::RefCell;
    let tallies: RefCell<(u64, u64)> = RefCell::new((0, 0));
    let slot_counter = RefCell::new(0usize);
    let sigma = cfg.noise_std.clone();
    let probe = |state: &TransceiverState, truth: &[&CMat], design: &[&CMat]| -> f64 {
        let mut idx = slot_counter.borrow_mut();
        *idx += 1;
        let current_frame = (*idx - 1) / timeline.slots_per_frame;
        if current_frame < measure_from {
            return f64::NAN;
        }
        match simulate_ser(
            state,
            truth,
            design,
            &sigma,
            &qam,
            per_slot,
            ser_seed(seed) ^ (*idx as u64),
        ) {
            Ok(est) => {
                let mut t = tallies.borrow_mut();
                t.0 += est.errors;
                t.1 += est.symbols;
                est.ser
            }
            Err(_) => f64::NAN,
        }
    };
    let report = tosca::run_super_frame(
        cfg,
        process,
        timeline,
        1.0,
        PhaseInit::ChannelMatched,
        settings,
        Some(&probe),
    )?;
    let (errors, total) = *tallies.borrow();
    let ser = if total > 0 {
        errors as f64 / total as f64
    } else {
        f64::NAN
    };
    let ci = if total > 0 {
        1.96 * (ser * (1.0 - ser) / total as f64).sqrt()
    } else {
        f64::NAN
    };
    let tail_mse = mean(report.frame_mse[measure_from..].iter().copied());
    let snr_db = 10.0 * (cfg.power_budget / (cfg.noise_std[0] * cfg.noise_std[0])).log10();
    Ok(CellResult {
        algorithm: Algorithm::Tts,
        snr_db,
        seed,
        mse: tail_mse,
        ser,
        ci,
        iterations: timeline.frames,
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

fn write_results_csv(path: &Path, cells: &[CellResult]) -> Result<()> {
    let mut file = fs::File::create(path)?;
    writeln!(file, "algo,snr_db,seed,mse,ser,ci,iters,wall_ms")?;
    for c in cells {
        writeln!(
            file,
            "{},{},{},{},{},{},{},{:.3}",
            c.algorithm, c.snr_db, c.seed, c.mse, c.ser, c.ci, c.iterations, c.wall_ms
        )?;
    }
    Ok(())
}

/// Executes the experiment described by `spec`, writing a results CSV plus a
/// JSON sidecar with the resolved configuration and its content hash.
pub fn run_preset(spec: &ExperimentSpec) -> Result<RunReport> {
    spec.validate()?;
    fs::create_dir_all(&spec.out_dir)?;
    let hash = spec.content_hash();
    let mut files = Vec::new();
    let settings = spec.solver_settings();

    let mut cells: Vec<CellResult> = Vec::new();

    match spec.preset {
        Preset::Fig3 => {
            // convergence traces, one CSV per seed
            for &seed in &spec.seeds {
                let cfg = spec.system.clone().with_snr_db(spec.snr_db[0]);
                let (_, cs) = sample_channel(&cfg, &spec.channel, seed)?;
                let ordering = order_users(&cs.scaled_norms_sq(), &cfg.streams);
                let (_, trace) = bcd::solve(&cfg, &cs, &ordering, &settings)?;
                let path = spec.out_dir.join(format!("fig3_trace_seed{seed}.csv"));
                let file = fs::File::create(&path)?;
                trace.write_csv(file)?;
                files.push(path);
            }
        }
        Preset::Fig7 => {
            let path = spec.out_dir.join("fig7_overhead.csv");
            let mut file = fs::File::create(&path)?;
            writeln!(file, "antennas,frames,slots_per_frame,single,two_timescale")?;
            for exp in 3..=8u32 {
                let n = 1usize << exp;
                let mut cfg = spec.system.clone();
                cfg.tx_antennas = n;
                cfg.rx_antennas = vec![n / cfg.users.max(1); cfg.users];
                let single = feedback_overhead(1000, 10, &cfg, OverheadMode::SingleTimescale);
                let tts = feedback_overhead(1000, 10, &cfg, OverheadMode::TwoTimescale);
                writeln!(file, "{n},1000,10,{single},{tts}")?;
            }
            files.push(path);
        }
        Preset::Fig9 => {
            let cfg = spec.system.clone().with_snr_db(spec.snr_db[0]);
            let timeline = Timeline {
                frames: spec.frames,
                slots_per_frame: spec.slots_per_frame,
                slot_duration: spec.slot_duration,
                full_csi_delay: 0.0,
                effective_csi_delay: 0.0,
            };
            let points = delay_sweep(
                &cfg,
                &spec.channel,
                &timeline,
                &spec.delays_ms,
                &spec.seeds,
                spec.symbols,
                &settings,
            )?;
            let path = spec.out_dir.join("fig9_delay.csv");
            let mut file = fs::File::create(&path)?;
            writeln!(file, "delay_ms,seed,ser_single,ser_tts,ser_fd")?;
            for p in &points {
                writeln!(
                    file,
                    "{},{},{},{},{}",
                    p.delay_ms, p.seed, p.ser_single, p.ser_tts, p.ser_fd
                )?;
            }
            files.push(path);
        }
        _ => {
            // grid of (snr, algorithm, seed) cells, evaluated in parallel
            let delay = spec.delays_ms.first().copied().unwrap_or(0.0) * 1e-3;
            let jobs: Vec<(f64, Algorithm, u64)> = spec
                .snr_db
                .iter()
                .flat_map(|&snr| {
                    spec.algorithms
                        .iter()
                        .flat_map(move |&algo| spec.seeds.iter().map(move |&s| (snr, algo, s)))
                })
                .collect();
            let results: Vec<Result<CellResult>> = jobs
                .par_iter()
                .map(|&(snr, algo, seed)| {
                    let cfg = spec.system.clone().with_snr_db(snr);
                    match algo {
                        Algorithm::Tts => {
                            let ratio = delay_ratio(&cfg);
                            let timeline = Timeline {
                                frames: spec.frames,
                                slots_per_frame: spec.slots_per_frame,
                                slot_duration: spec.slot_duration,
                                full_csi_delay: delay,
                                effective_csi_delay: delay / ratio,
                            };
                            let mut model = spec.channel.clone();
                            if spec.preset == Preset::Fig8 && model.doppler_hz == 0.0 {
                                model.doppler_hz = 200.0;
                            }
                            let process = ChannelProcess::new(&cfg, &model, seed)?;
                            run_tts_cell_with_process(
                                &cfg, &process, &timeline, seed, spec.symbols, &settings,
                            )
                        }
                        _ if delay > 0.0 => {
                            // single-timescale cell under delay: design on old CSI
                            run_delayed_single_cell(
                                algo, &cfg, &spec.channel, delay, seed, spec.symbols, &settings,
                            )
                        }
                        _ => run_single_cell(
                            algo,
                            &cfg,
                            &spec.channel,
                            seed,
                            spec.symbols,
                            &settings,
                        ),
                    }
                })
                .collect();
            for r in results {
                cells.push(r?);
            }
            // deterministic ordering of rows
            cells.sort_by(|a, b| {
                a.snr_db
                    .partial_cmp(&b.snr_db)
                    .unwrap()
                    .then(a.algorithm.name().cmp(b.algorithm.name()))
                    .then(a.seed.cmp(&b.seed))
            });
            let path = spec.out_dir.join(format!("{}_results.csv", spec.preset));
            write_results_csv(&path, &cells)?;
            files.push(path);

            if spec.preset == Preset::Fig4 {
                // robustness study rides along with the SER comparison
                let pairs: Vec<Result<RobustPair>> = spec
                    .snr_db
                    .iter()
                    .flat_map(|&snr| spec.seeds.iter().map(move |&s| (snr, s)))
                    .collect::<Vec<_>>()
                    .par_iter()
                    .map(|&(snr, seed)| {
                        let cfg = spec.system.clone().with_snr_db(snr);
                        robust_vs_nonrobust(&cfg, &spec.channel, seed, spec.symbols, &settings)
                    })
                    .collect();
                let path = spec.out_dir.join("fig4_robustness.csv");
                let mut file = fs::File::create(&path)?;
                writeln!(
                    file,
                    "snr_db,seed,ser_robust,ser_nonrobust,mse_robust,mse_nonrobust"
                )?;
                let mut rows: Vec<RobustPair> = Vec::new();
                for p in pairs {
                    rows.push(p?);
                }
                rows.sort_by(|a, b| {
                    a.snr_db
                        .partial_cmp(&b.snr_db)
                        .unwrap()
                        .then(a.seed.cmp(&b.seed))
                });
                for p in &rows {
                    writeln!(
                        file,
                        "{},{},{},{},{},{}",
                        p.snr_db, p.seed, p.ser_robust, p.ser_nonrobust, p.mse_robust, p.mse_nonrobust
                    )?;
                }
                files.push(path);
            }
        }
    }

    // JSON sidecar with the resolved spec and content hash
    let sidecar = spec.out_dir.join(format!("{}_config.json", spec.preset));
    let payload = serde_json::json!({
        "config_hash": hash,
        "spec": spec,
        "files": files.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    });
    fs::write(&sidecar, serde_json::to_string_pretty(&payload)?)?;
    files.push(sidecar);

    Ok(RunReport {
        cells,
        config_hash: hash,
        files,
    })
}

fn run_delayed_single_cell(
    algorithm: Algorithm,
    cfg: &SystemConfig,
    model: &ChannelModel,
    tau: f64,
    seed: u64,
    symbols: usize,
    settings: &BcdSettings,
) -> Result<CellResult> {
    let started = Instant::now();
    let process = ChannelProcess::new(cfg, model, seed)?;
    let qam = QamConstellation::new(cfg.qam_order)?;
    let points = 6usize;
    let per_point = (symbols / points).max(500);
    let slot = 1e-4;
    let mut errors = 0u64;
    let mut total = 0u64;
    let mut mse_acc = 0.0;
    let mut iterations = 0;
    for k in 0..points {
        let t_now = (50 + 10 * k) as f64 * slot;
        let delayed = process.estimate_at(cfg, t_now - tau, (5u64 << 48) + k as u64)?;
        let ordering = order_users(&delayed.scaled_norms_sq(), &cfg.streams);
        let (state, trace_iters) = match algorithm {
            Algorithm::Fd => {
                let (s, t) = baselines::fd_solve(cfg, &delayed, &ordering, settings)?;
                (s, t.iterations)
            }
            Algorithm::NonlinearSeparate => {
                let (s, t) =
                    baselines::nonlinear_separate_solve(cfg, &delayed, &ordering, settings)?;
                (s, t.iterations)
            }
            Algorithm::LinearJoint => {
                let (s, t) = baselines::linear_solve(cfg, &delayed, settings, AnalogMode::Joint)?;
                (s, t.iterations)
            }
            Algorithm::LinearSeparate => {
                let (s, t) =
                    baselines::linear_solve(cfg, &delayed, settings, AnalogMode::Separate)?;
                (s, t.iterations)
            }
            Algorithm::Zf => {
                let (s, _) = baselines::zf_solve(cfg, &delayed)?;
                (s, 1)
            }
            _ => {
                let (s, t) = bcd::solve(cfg, &delayed, &ordering, settings)?;
                (s, t.iterations)
            }
        };
        iterations = iterations.max(trace_iters);
        let truth = process.true_channels_at(cfg, t_now)?;
        let refs: Vec<&CMat> = truth.iter().collect();
        let zero = vec![0.0; cfg.users];
        mse_acc += objective::mse(&state, &refs, &cfg.noise_std, &zero)?;
        let design = delayed.estimated();
        let est = simulate_ser(
            &state,
            &refs,
            &design,
            &cfg.noise_std,
            &qam,
            per_point,
            ser_seed(seed) ^ (11 << 40) ^ k as u64,
        )?;
        errors += est.errors;
        total += est.symbols;
    }
    let ser = errors as f64 / total as f64;
    let snr_db = 10.0 * (cfg.power_budget / (cfg.noise_std[0] * cfg.noise_std[0])).log10();
    Ok(CellResult {
        algorithm,
        snr_db,
        seed,
        mse: mse_acc / points as f64,
        ser,
        ci: 1.96 * (ser * (1.0 - ser) / total as f64).sqrt(),
        iterations,
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

/// Evaluates a state on one channel set: analytic MSE and simulated SER.
pub fn evaluate_state(
    state: &TransceiverState,
    cs: &ChannelSet,
    cfg: &SystemConfig,
    symbols: usize,
    seed: u64,
) -> Result<(f64, SerEstimate)> {
    let est = cs.estimated();
    let mse = objective::mse(state, &est, &cfg.noise_std, &cfg.csi_error_std)?;
    let qam = QamConstellation::new(cfg.qam_order)?;
    let truth = cs.true_channels();
    let ser = simulate_ser(state, &truth, &est, &cfg.noise_std, &qam, symbols, seed)?;
    Ok((mse, ser))
}
