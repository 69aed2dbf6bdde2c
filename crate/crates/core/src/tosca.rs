//! Two-timescale transceiver design: per-slot digital solves on
//! low-dimensional effective CSI, and per-frame stochastic surrogate updates
//! of the analog phase matrices driven by single (possibly outdated) channel
//! samples.
//!
//! The long-timescale objective is the original sum MSE evaluated at the
//! scaled digital solution of the current sample; its phase gradients come
//! from the analog-matrix Wirtinger gradients through the chain rule
//! ∂g/∂θ = ∂g/∂T ∘ jT − ∂g/∂T* ∘ jT*.

use num_complex::Complex64;

use crate::bcd::BcdSettings;
use crate::channel::{ChannelProcess, ChannelSet};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::linalg::{cx, strict_lower, CMat, Permutation, RMat, C_ONE};
use crate::objective::{self, NoiseCoeffs, TransceiverState};
use crate::thp::order_users;

/// Frame/slot timing hierarchy and the CSI delays attached to each timescale.
#[derive(Debug, Clone, PartialEq)]
pub struct Timeline {
    /// Frames per super-frame.
    pub frames: usize,
    /// Slots per frame.
    pub slots_per_frame: usize,
    /// Slot duration in seconds.
    pub slot_duration: f64,
    /// Delay of full-dimension CSI (frame samples and single-timescale
    /// designs), seconds.
    pub full_csi_delay: f64,
    /// Delay of the low-dimensional effective CSI used per slot, seconds.
    pub effective_csi_delay: f64,
}

impl Timeline {
    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.slots_per_frame == 0 {
            return Err(Error::InvalidConfig(
                "timeline needs at least one frame and one slot".into(),
            ));
        }
        if !(self.slot_duration > 0.0)
            || !(self.full_csi_delay >= 0.0)
            || !(self.effective_csi_delay >= 0.0)
        {
            return Err(Error::InvalidConfig("timeline durations out of range".into()));
        }
        Ok(())
    }
}

impl Default for Timeline {
    fn default() -> Self {
        Timeline {
            frames: 200,
            slots_per_frame: 4,
            slot_duration: 1e-4,
            full_csi_delay: 0.0,
            effective_csi_delay: 0.0,
        }
    }
}

/// Long-timescale phase variables and the recursive surrogate accumulators.
#[derive(Debug, Clone)]
pub struct TwoTimescaleState {
    pub phase_tx: RMat,
    pub phase_rx: Vec<RMat>,
    pub objective_acc: f64,
    pub grad_tx_acc: RMat,
    pub grad_rx_acc: Vec<RMat>,
    /// Completed frame updates.
    pub frame: usize,
    /// Proximal weight of the quadratic surrogate.
    pub tau_prox: f64,
}

impl TwoTimescaleState {
    /// Starts from given analog matrices, taking their entry phases.
    pub fn from_analog(tx_analog: &CMat, rx_analog: &[CMat], tau_prox: f64) -> Result<Self> {
        if !(tau_prox > 0.0) {
            return Err(Error::InvalidArgument("tau_prox must be > 0".into()));
        }
        let phase_tx = tx_analog.map(|z| z.arg());
        let phase_rx: Vec<RMat> = rx_analog.iter().map(|f| f.map(|z| z.arg())).collect();
        let grad_tx_acc = RMat::zeros(phase_tx.nrows(), phase_tx.ncols());
        let grad_rx_acc = phase_rx
            .iter()
            .map(|p| RMat::zeros(p.nrows(), p.ncols()))
            .collect();
        Ok(TwoTimescaleState {
            phase_tx,
            phase_rx,
            objective_acc: 0.0,
            grad_tx_acc,
            grad_rx_acc,
            frame: 0,
            tau_prox,
        })
    }

    /// Analog precoder reconstructed from phases; exactly unit modulus.
    pub fn analog_tx(&self) -> CMat {
        self.phase_tx.map(|p| cx(p.cos(), p.sin()))
    }

    pub fn analog_rx(&self) -> Vec<CMat> {
        self.phase_rx
            .iter()
            .map(|m| m.map(|p| cx(p.cos(), p.sin())))
            .collect()
    }
}

/// Default step sequences ρ^t = t^{−0.6} and γ^t = t^{−0.9}: ρ vanishes
/// slower than γ, Σρ² and Σγ² converge, Σγ diverges, γ/ρ = t^{−0.3} → 0.
pub fn step_schedules(t: usize) -> Result<(f64, f64)> {
    if t < 1 {
        return Err(Error::InvalidArgument(
            "frame index for schedules starts at 1".into(),
        ));
    }
    let tf = t as f64;
    Ok((tf.powf(-0.6), tf.powf(-0.9)))
}

/// Recursive surrogate averaging: acc ← (1−ρ)acc + ρ·sample for the
/// objective value and both gradient accumulators.
pub fn surrogate_update(
    tts: &mut TwoTimescaleState,
    objective_sample: f64,
    grad_tx: &RMat,
    grad_rx: &[RMat],
    rho: f64,
) {
    tts.objective_acc = (1.0 - rho) * tts.objective_acc + rho * objective_sample;
    tts.grad_tx_acc = &tts.grad_tx_acc * (1.0 - rho) + grad_tx * rho;
    for (acc, g) in tts.grad_rx_acc.iter_mut().zip(grad_rx) {
        *acc = &*acc * (1.0 - rho) + g * rho;
    }
}

/// Exact minimizer of the quadratic surrogate (θ̄ = θ − acc/(2τ)) blended
/// into the iterate with weight γ.
pub fn long_timescale_step(tts: &mut TwoTimescaleState, gamma: f64) {
    let scale = 1.0 / (2.0 * tts.tau_prox);
    tts.phase_tx = &tts.phase_tx - &tts.grad_tx_acc * (scale * gamma);
    for (phase, acc) in tts.phase_rx.iter_mut().zip(&tts.grad_rx_acc) {
        *phase = &*phase - acc * (scale * gamma);
    }
    tts.frame += 1;
}

/// Wirtinger gradients of the original sum MSE with respect to the analog
/// matrices, at the given state and estimated channels.
pub fn gradients_analog(
    state: &TransceiverState,
    estimated: &[&CMat],
    sigma: &[f64],
    sigma_e: &[f64],
) -> Result<(CMat, Vec<CMat>)> {
    if estimated.len() != state.users() {
        return Err(Error::Dimension("one channel per user required".into()));
    }
    let coeffs = NoiseCoeffs::original(sigma, sigma_e);
    let gt = objective::grad_tx_analog(state, estimated, &coeffs);
    let gf = (0..state.users())
        .map(|m| objective::grad_rx_analog(state, estimated, &coeffs, m))
        .collect();
    Ok((gt, gf))
}

fn phase_grad_one(grad_conj: &CMat, analog: &CMat) -> Result<RMat> {
    let mut out = RMat::zeros(grad_conj.nrows(), grad_conj.ncols());
    for i in 0..grad_conj.nrows() {
        for j in 0..grad_conj.ncols() {
            let g = grad_conj[(i, j)];
            let t = analog[(i, j)];
            let imag = Complex64::new(0.0, 1.0);
            // ∂g/∂θ = (∂g/∂T)·jT − (∂g/∂T*)·jT*, with ∂g/∂T = conj(∂g/∂T*)
            let z = g.conj() * (imag * t) - g * (imag * t.conj());
            let scale = z.norm().max(1.0);
            if z.im.abs() > 1e-12 * scale {
                return Err(Error::InvalidArgument(format!(
                    "phase gradient has imaginary residue {}",
                    z.im
                )));
            }
            out[(i, j)] = z.re;
        }
    }
    Ok(out)
}

/// Chain rule from analog-matrix gradients to phase gradients; the result is
/// exactly real (imaginary parts below 1e−12 are truncated).
pub fn gradients_phase(
    state: &TransceiverState,
    grad_tx: &CMat,
    grad_rx: &[CMat],
) -> Result<(RMat, Vec<RMat>)> {
    let pt = phase_grad_one(grad_tx, &state.tx_analog)?;
    let pf = grad_rx
        .iter()
        .zip(&state.rx_analog)
        .map(|(g, f)| phase_grad_one(g, f))
        .collect::<Result<Vec<_>>>()?;
    Ok((pt, pf))
}

/// Low-dimensional quantities the per-slot digital design needs: effective
/// channels plus the analog Gram matrices entering the noise terms.
#[derive(Debug, Clone)]
pub struct EffectiveCsi {
    /// H̃_m = F_m Ĥ_m T (rx_chains × tx_chains).
    pub channels: Vec<CMat>,
    /// F_m F_mᴴ per user.
    pub rx_gram: Vec<CMat>,
    /// TᴴT.
    pub tx_gram: CMat,
    /// σ̂_e per user.
    pub scaled_err: Vec<f64>,
}

impl EffectiveCsi {
    pub fn new(cs: &ChannelSet, rx_analog: &[CMat], tx_analog: &CMat) -> Result<Self> {
        let channels = crate::channel::effective_csi(cs, rx_analog, tx_analog)?;
        let rx_gram = rx_analog.iter().map(|f| f * f.adjoint()).collect();
        let tx_gram = tx_analog.adjoint() * tx_analog;
        Ok(EffectiveCsi {
            channels,
            rx_gram,
            tx_gram,
            scaled_err: cs.scaled_error_std(),
        })
    }

    fn precoder_norm_sq(&self, w: &CMat) -> f64 {
        (w.adjoint() * &self.tx_gram * w).trace().re
    }
}

/// Digital solution of the per-slot subproblem in the transformed domain,
/// already mapped back to the power-constrained problem.
#[derive(Debug, Clone)]
pub struct ShortTimescaleSolution {
    pub rx_digital: Vec<CMat>,
    pub tx_digital: CMat,
    pub feedback: CMat,
    pub objective: Vec<f64>,
    pub iterations: usize,
}

fn effective_objective(
    eff: &EffectiveCsi,
    rx_digital: &[CMat],
    w: &CMat,
    lt_u: &CMat,
    p_t: f64,
) -> f64 {
    let twq = eff.precoder_norm_sq(w);
    let mut total = 0.0;
    let mut row = 0;
    for (m, h) in eff.channels.iter().enumerate() {
        let p = &rx_digital[m];
        let dm = p.nrows();
        let err = p * h * w - lt_u.rows(row, dm);
        let noise = (eff.scaled_err[m] * eff.scaled_err[m] + 1.0 / p_t) * twq;
        total += err.norm_squared() + noise * (p * &eff.rx_gram[m] * p.adjoint()).trace().re;
        row += dm;
    }
    total
}

/// Coordinate descent over the digital blocks on effective CSI, equivalent
/// to the full solver with the analog blocks skipped, followed by the
/// power scaling.
pub fn short_timescale_solve(
    eff: &EffectiveCsi,
    cfg: &SystemConfig,
    ordering: &Permutation,
    settings: &BcdSettings,
) -> Result<ShortTimescaleSolution> {
    let users = eff.channels.len();
    if users != cfg.users {
        return Err(Error::Dimension("effective CSI user count mismatch".into()));
    }
    let d = cfg.total_streams();
    let r_s = eff.tx_gram.nrows();
    let p_t = cfg.power_budget;
    let l_t = ordering.to_matrix().transpose();

    // identity-padded precoder meeting the power budget, U = I, P = 0
    let mut pad = CMat::zeros(r_s, d);
    for k in 0..d {
        pad[(k, k)] = C_ONE;
    }
    let mut w = &pad * cx((p_t / eff.precoder_norm_sq(&pad)).sqrt(), 0.0);
    let mut u = CMat::identity(d, d);
    let mut rx_digital: Vec<CMat> = (0..users)
        .map(|m| CMat::zeros(cfg.streams[m], eff.channels[m].nrows()))
        .collect();

    let mut objective = Vec::with_capacity(settings.max_iterations + 1);
    let lt_u0 = &l_t * &u;
    objective.push(effective_objective(eff, &rx_digital, &w, &lt_u0, p_t));
    let mut iterations = 0;

    for _ in 0..settings.max_iterations {
        let lt_u = &l_t * &u;
        // digital receivers
        let twq = eff.precoder_norm_sq(&w);
        let mut row = 0;
        for m in 0..users {
            let fx = &eff.channels[m] * &w;
            let noise = (eff.scaled_err[m] * eff.scaled_err[m] + 1.0 / p_t) * twq;
            let gram = &fx * fx.adjoint() + &eff.rx_gram[m] * cx(noise, 0.0);
            let desired = lt_u.rows(row, cfg.streams[m]).into_owned();
            let solved = hermitian_solve(&gram, &(&fx * desired.adjoint()));
            rx_digital[m] = solved.adjoint();
            row += cfg.streams[m];
        }
        // feedback
        let mut stacked = CMat::zeros(d, d);
        let mut row = 0;
        for m in 0..users {
            let block = &rx_digital[m] * &eff.channels[m] * &w;
            stacked.rows_mut(row, block.nrows()).copy_from(&block);
            row += block.nrows();
        }
        let permuted = ordering.to_matrix() * stacked;
        u = CMat::identity(d, d) + strict_lower(&permuted)?;
        // digital precoder
        let lt_u = &l_t * &u;
        let mut gram = CMat::zeros(r_s, r_s);
        let mut rhs = CMat::zeros(r_s, d);
        let mut kappa = 0.0;
        let mut row = 0;
        for m in 0..users {
            let ph = &rx_digital[m] * &eff.channels[m];
            gram += ph.adjoint() * &ph;
            rhs += ph.adjoint() * lt_u.rows(row, cfg.streams[m]);
            kappa += (eff.scaled_err[m] * eff.scaled_err[m] + 1.0 / p_t)
                * (&rx_digital[m] * &eff.rx_gram[m] * rx_digital[m].adjoint())
                    .trace()
                    .re;
            row += cfg.streams[m];
        }
        gram += &eff.tx_gram * cx(kappa, 0.0);
        w = hermitian_solve(&gram, &rhs);

        iterations += 1;
        let lt_u = &l_t * &u;
        let value = effective_objective(eff, &rx_digital, &w, &lt_u, p_t);
        let previous = *objective.last().unwrap();
        objective.push(value);
        if (previous - value).abs() < settings.tolerance {
            break;
        }
    }

    // scale back to the power-constrained problem
    let norm = eff.precoder_norm_sq(&w).sqrt();
    if norm <= 0.0 {
        return Err(Error::DegeneratePrecoder(
            "short-timescale precoder collapsed to zero".into(),
        ));
    }
    let a = p_t.sqrt() / norm;
    let tx_digital = &w * cx(a, 0.0);
    for (p, &s) in rx_digital.iter_mut().zip(&cfg.noise_std) {
        *p *= cx(1.0 / (a * s), 0.0);
    }
    Ok(ShortTimescaleSolution {
        rx_digital,
        tx_digital,
        feedback: u,
        objective,
        iterations,
    })
}

fn hermitian_solve(m: &CMat, rhs: &CMat) -> CMat {
    let n = m.nrows();
    let sym = (m + m.adjoint()) * cx(0.5, 0.0);
    if let Some(ch) = sym.clone().cholesky() {
        return ch.solve(rhs);
    }
    let trace_avg = (sym.trace().re / n as f64).abs().max(1e-30);
    let mut eps = 1e-10 * trace_avg;
    for _ in 0..60 {
        let shifted = &sym + CMat::identity(n, n) * cx(eps, 0.0);
        if let Some(ch) = shifted.cholesky() {
            return ch.solve(rhs);
        }
        eps *= 100.0;
    }
    CMat::zeros(n, rhs.ncols())
}

/// One slot record of a super-frame run.
#[derive(Debug, Clone)]
pub struct FrameRecord {
    pub frame: usize,
    pub slot: usize,
    /// Deployed-system MSE on the true channel of that slot.
    pub objective: f64,
    /// Monte-Carlo SER for the slot when a probe was supplied, else NaN.
    pub ser: f64,
}

/// Result of one super-frame: per-slot records, per-frame means, the
/// sampled long-timescale objective and the final phase state.
#[derive(Debug, Clone)]
pub struct TtsReport {
    pub records: Vec<FrameRecord>,
    pub frame_mse: Vec<f64>,
    pub sampled_objective: Vec<f64>,
    /// Recursive objective accumulator f^t after each frame, the online
    /// estimate of the long-timescale objective.
    pub surrogate_objective: Vec<f64>,
    pub final_state: TwoTimescaleState,
}

impl TtsReport {
    /// Running mean of the per-frame MSE, the quantity whose plateau marks
    /// convergence of the long-timescale iteration.
    pub fn running_mean_mse(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.frame_mse.len());
        let mut acc = 0.0;
        for (k, v) in self.frame_mse.iter().enumerate() {
            acc += v;
            out.push(acc / (k + 1) as f64);
        }
        out
    }

    /// CSV rows (frame, slot, objective, ser).
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "frame,slot,objective,ser")?;
        for r in &self.records {
            writeln!(w, "{},{},{},{}", r.frame, r.slot, r.objective, r.ser)?;
        }
        Ok(())
    }
}

/// Per-slot SER probe: (state, true channels at the slot, channels the
/// state was designed on) → SER estimate.
pub type SerProbe<'a> = dyn Fn(&TransceiverState, &[&CMat], &[&CMat]) -> f64 + 'a;

/// Starting point of the long-timescale phases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseInit {
    /// Phases of the channel-matched analog construction on the first
    /// sample; the deployed configuration.
    ChannelMatched,
    /// All-zero phases (all-ones matrices); a feasible but unoptimized
    /// start that exhibits the full convergence transient.
    Flat,
}

/// Runs one super-frame: per slot, the digital stages are redesigned on
/// (possibly delayed) effective CSI; at each frame end one full CSI sample
/// drives the surrogate recursion and the analog phase update.
pub fn run_super_frame(
    cfg: &SystemConfig,
    process: &ChannelProcess,
    timeline: &Timeline,
    tau_prox: f64,
    init: PhaseInit,
    digital_settings: &BcdSettings,
    ser_probe: Option<&SerProbe>,
) -> Result<TtsReport> {
    cfg.validate()?;
    timeline.validate()?;

    let initial = process.estimate_at(cfg, 0.0, 0)?;
    let (t0, f0) = match init {
        PhaseInit::ChannelMatched => {
            let scaled0 = initial.scaled();
            crate::baselines::channel_match_analog(&scaled0, cfg.tx_chains, &cfg.rx_chains)?
        }
        PhaseInit::Flat => (
            CMat::from_element(cfg.tx_antennas, cfg.tx_chains, C_ONE),
            cfg.rx_chains
                .iter()
                .zip(&cfg.rx_antennas)
                .map(|(&r, &n)| CMat::from_element(r, n, C_ONE))
                .collect(),
        ),
    };
    let mut tts = TwoTimescaleState::from_analog(&t0, &f0, tau_prox)?;
    let ordering = order_users(&initial.scaled_norms_sq(), &cfg.streams);

    let mut records = Vec::new();
    let mut frame_mse = Vec::with_capacity(timeline.frames);
    let mut sampled_objective = Vec::with_capacity(timeline.frames);
    let mut surrogate_objective = Vec::with_capacity(timeline.frames);
    let zero_err = vec![0.0; cfg.users];

    for frame in 0..timeline.frames {
        let tx_analog = tts.analog_tx();
        let rx_analog = tts.analog_rx();
        let mut acc = 0.0;
        for slot in 0..timeline.slots_per_frame {
            let global_slot = frame * timeline.slots_per_frame + slot;
            let t_now = global_slot as f64 * timeline.slot_duration;
            let cs_delayed = process.estimate_at(
                cfg,
                t_now - timeline.effective_csi_delay,
                1 + global_slot as u64,
            )?;
            let eff = EffectiveCsi::new(&cs_delayed, &rx_analog, &tx_analog)?;
            let digital = short_timescale_solve(&eff, cfg, &ordering, digital_settings)?;
            let state = TransceiverState {
                rx_digital: digital.rx_digital,
                rx_analog: rx_analog.clone(),
                tx_analog: tx_analog.clone(),
                tx_digital: digital.tx_digital,
                feedback: digital.feedback,
                ordering: ordering.clone(),
            };
            let truth = process.true_channels_at(cfg, t_now)?;
            let truth_refs: Vec<&CMat> = truth.iter().collect();
            let deployed = objective::mse(&state, &truth_refs, &cfg.noise_std, &zero_err)?;
            let ser = ser_probe.map_or(f64::NAN, |probe| {
                probe(&state, &truth_refs, &cs_delayed.estimated())
            });
            records.push(FrameRecord {
                frame,
                slot,
                objective: deployed,
                ser,
            });
            acc += deployed;
        }
        frame_mse.push(acc / timeline.slots_per_frame as f64);

        // frame-end sample, digital re-solve, surrogate and phase update
        let t_end = ((frame + 1) * timeline.slots_per_frame) as f64 * timeline.slot_duration;
        let sample = process.estimate_at(
            cfg,
            t_end - timeline.full_csi_delay,
            (1u64 << 48) + frame as u64,
        )?;
        let eff = EffectiveCsi::new(&sample, &rx_analog, &tx_analog)?;
        let digital = short_timescale_solve(&eff, cfg, &ordering, digital_settings)?;
        let state = TransceiverState {
            rx_digital: digital.rx_digital,
            rx_analog: rx_analog.clone(),
            tx_analog: tx_analog.clone(),
            tx_digital: digital.tx_digital,
            feedback: digital.feedback,
            ordering: ordering.clone(),
        };
        let est = sample.estimated();
        let g = objective::mse(&state, &est, &cfg.noise_std, &cfg.csi_error_std)?;
        sampled_objective.push(g);
        let (gt, gf) = gradients_analog(&state, &est, &cfg.noise_std, &cfg.csi_error_std)?;
        let (pt, pf) = gradients_phase(&state, &gt, &gf)?;
        let (rho, gamma) = step_schedules(frame + 1)?;
        surrogate_update(&mut tts, g, &pt, &pf, rho);
        surrogate_objective.push(tts.objective_acc);
        long_timescale_step(&mut tts, gamma);
    }

    Ok(TtsReport {
        records,
        frame_mse,
        sampled_objective,
        surrogate_objective,
        final_state: tts,
    })
}
