//! Reference designs: fully-digital THP, linear joint/separate variants with
//! the feedback stage disabled, channel-matched analog construction, and
//! zero-forcing digital precoding.

use crate::bcd::{self, BcdSettings, BcdTrace, BlockSet};
use crate::channel::ChannelSet;
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::linalg::{cx, CMat, Permutation, C_ONE};
use crate::objective::{scale_to_power_budget, TransceiverState};

/// Comparison algorithms from the evaluation suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaselineKind {
    FdNonlinear,
    LinearJoint,
    LinearSeparate,
    NonlinearSeparate,
    Zf,
}

/// Whether the analog stages are optimized jointly or pinned to the
/// channel-matched construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnalogMode {
    Joint,
    Separate,
}

fn phases_of(column: &CMat) -> CMat {
    CMat::from_fn(column.nrows(), column.ncols(), |i, j| {
        let z = column[(i, j)];
        if z.norm() == 0.0 {
            C_ONE
        } else {
            z / z.norm()
        }
    })
}

/// Rotates each column so its largest-modulus entry is real positive; makes
/// the SVD-based constructions deterministic and scale invariant.
fn canonicalize_columns(m: &mut CMat) {
    for j in 0..m.ncols() {
        let mut best = 0;
        let mut best_mag = 0.0;
        for i in 0..m.nrows() {
            let mag = m[(i, j)].norm();
            if mag > best_mag {
                best_mag = mag;
                best = i;
            }
        }
        if best_mag > 0.0 {
            let rot = (m[(best, j)] / best_mag).conj();
            for i in 0..m.nrows() {
                m[(i, j)] *= rot;
            }
        }
    }
}

/// Channel-matched analog construction: the precoder takes the phases of the
/// dominant right singular vectors of the stacked scaled channel, each
/// combiner the phases of its own channel's dominant left singular vectors.
/// All entries are exactly unit modulus.
pub fn channel_match_analog(
    scaled: &[&CMat],
    tx_chains: usize,
    rx_chains: &[usize],
) -> Result<(CMat, Vec<CMat>)> {
    if scaled.is_empty() || scaled.len() != rx_chains.len() {
        return Err(Error::Dimension(
            "one channel and chain count per user required".into(),
        ));
    }
    let tx_antennas = scaled[0].ncols();
    let total_rx: usize = scaled.iter().map(|h| h.nrows()).sum();
    let mut stacked = CMat::zeros(total_rx, tx_antennas);
    let mut row = 0;
    for h in scaled {
        stacked.rows_mut(row, h.nrows()).copy_from(*h);
        row += h.nrows();
    }
    if tx_chains > tx_antennas.min(total_rx) {
        return Err(Error::Dimension(format!(
            "cannot extract {tx_chains} right singular vectors from a {total_rx}x{tx_antennas} stack"
        )));
    }
    let svd = stacked.svd(false, true);
    let v = svd
        .v_t
        .ok_or_else(|| Error::Dimension("SVD did not return right singular vectors".into()))?
        .adjoint();
    let mut top = v.columns(0, tx_chains).into_owned();
    canonicalize_columns(&mut top);
    let tx_analog = phases_of(&top);

    let mut rx_analog = Vec::with_capacity(scaled.len());
    for (h, &chains) in scaled.iter().zip(rx_chains) {
        if chains > h.nrows() {
            return Err(Error::Dimension(format!(
                "cannot extract {chains} left singular vectors from a {}x{} channel",
                h.nrows(),
                h.ncols()
            )));
        }
        let svd = (*h).clone().svd(true, false);
        let u = svd
            .u
            .ok_or_else(|| Error::Dimension("SVD did not return left singular vectors".into()))?;
        let mut top = u.columns(0, chains).into_owned();
        canonicalize_columns(&mut top);
        rx_analog.push(phases_of(&top).adjoint());
    }
    Ok((tx_analog, rx_analog))
}

/// Fully-digital THP design: one RF chain per antenna, identity analog
/// stages, digital blocks optimized with the unit-modulus sweeps skipped.
pub fn fd_solve(
    cfg: &SystemConfig,
    cs: &ChannelSet,
    ordering: &Permutation,
    settings: &BcdSettings,
) -> Result<(TransceiverState, BcdTrace)> {
    cfg.validate()?;
    let d = cfg.total_streams();
    let mut pad = CMat::zeros(cfg.tx_antennas, d);
    for k in 0..d {
        pad[(k, k)] = C_ONE;
    }
    let tx_digital = &pad * cx((cfg.power_budget / pad.norm_squared()).sqrt(), 0.0);
    let state = TransceiverState {
        rx_digital: (0..cfg.users)
            .map(|m| CMat::zeros(cfg.streams[m], cfg.rx_antennas[m]))
            .collect(),
        rx_analog: cfg
            .rx_antennas
            .iter()
            .map(|&n| CMat::identity(n, n))
            .collect(),
        tx_analog: CMat::identity(cfg.tx_antennas, cfg.tx_antennas),
        tx_digital,
        feedback: CMat::identity(d, d),
        ordering: ordering.clone(),
    };
    let scaled = cs.scaled();
    let (state, trace) = bcd::solve_blocks(
        state,
        &scaled,
        &cs.scaled_error_std(),
        cfg.power_budget,
        BlockSet::digital(),
        settings,
    )?;
    let state = scale_to_power_budget(&state, cfg.power_budget, &cfg.noise_std)?;
    Ok((state, trace))
}

/// Linear hybrid design: the feedback stage is pinned to U = I, analog
/// stages either optimized jointly or pinned to the channel-matched
/// construction.
pub fn linear_solve(
    cfg: &SystemConfig,
    cs: &ChannelSet,
    settings: &BcdSettings,
    mode: AnalogMode,
) -> Result<(TransceiverState, BcdTrace)> {
    cfg.validate()?;
    let scaled = cs.scaled();
    let ordering = Permutation::identity(cfg.total_streams());
    let state = bcd::initial_state(cfg, &scaled, &ordering)?;
    let blocks = match mode {
        AnalogMode::Joint => BlockSet::all().without_feedback(),
        AnalogMode::Separate => BlockSet::digital().without_feedback(),
    };
    let (state, trace) = bcd::solve_blocks(
        state,
        &scaled,
        &cs.scaled_error_std(),
        cfg.power_budget,
        blocks,
        settings,
    )?;
    let state = scale_to_power_budget(&state, cfg.power_budget, &cfg.noise_std)?;
    Ok((state, trace))
}

/// THP design with channel-matched (pinned) analog stages and jointly
/// optimized digital processing.
pub fn nonlinear_separate_solve(
    cfg: &SystemConfig,
    cs: &ChannelSet,
    ordering: &Permutation,
    settings: &BcdSettings,
) -> Result<(TransceiverState, BcdTrace)> {
    cfg.validate()?;
    let scaled = cs.scaled();
    let state = bcd::initial_state(cfg, &scaled, ordering)?;
    let (state, trace) = bcd::solve_blocks(
        state,
        &scaled,
        &cs.scaled_error_std(),
        cfg.power_budget,
        BlockSet::digital(),
        settings,
    )?;
    let state = scale_to_power_budget(&state, cfg.power_budget, &cfg.noise_std)?;
    Ok((state, trace))
}

/// Zero-forcing baseline: channel-matched analog stages, transmit
/// pseudo-inverse of the combined effective channel scaled to the power
/// budget, per-user MMSE receivers, no feedback.
///
/// The receive side uses MMSE combining since plain ZF is undefined when a
/// user has fewer streams than chains. Returns the state and whether a
/// rank-deficient effective channel forced a pseudo-inverse.
pub fn zf_solve(cfg: &SystemConfig, cs: &ChannelSet) -> Result<(TransceiverState, bool)> {
    cfg.validate()?;
    let scaled = cs.scaled();
    let (tx_analog, rx_analog) = channel_match_analog(&scaled, cfg.tx_chains, &cfg.rx_chains)?;
    let d = cfg.total_streams();

    // unitary per-user pre-combiners pick the dominant effective subspace
    let mut stacked = CMat::zeros(d, cfg.tx_chains);
    let mut row = 0;
    for m in 0..cfg.users {
        let eff = &rx_analog[m] * scaled[m] * &tx_analog;
        let svd = eff.clone().svd(true, false);
        let u = svd
            .u
            .ok_or_else(|| Error::Dimension("SVD did not return left singular vectors".into()))?;
        let combiner = u.columns(0, cfg.streams[m]).adjoint();
        stacked
            .rows_mut(row, cfg.streams[m])
            .copy_from(&(&combiner * &eff));
        row += cfg.streams[m];
    }

    // right pseudo-inverse of the stacked effective channel
    let gram = &stacked * stacked.adjoint();
    let (inv, degenerate) = match gram.clone().cholesky() {
        Some(ch) => (ch.inverse(), false),
        None => (
            gram.pseudo_inverse(1e-12)
                .unwrap_or_else(|_| CMat::zeros(d, d)),
            true,
        ),
    };
    let w_raw = stacked.adjoint() * inv;
    let norm_sq = (&tx_analog * &w_raw).norm_squared();
    if norm_sq <= 0.0 {
        return Err(Error::DegeneratePrecoder(
            "zero-forcing precoder has zero norm".into(),
        ));
    }
    let tx_digital = w_raw * cx((cfg.power_budget / norm_sq).sqrt(), 0.0);

    // per-user MMSE receivers on the estimated channels
    let tw = &tx_analog * &tx_digital;
    let twq = tw.norm_squared();
    let mut rx_digital = Vec::with_capacity(cfg.users);
    let mut row = 0;
    for m in 0..cfg.users {
        let f = &rx_analog[m];
        let h = &cs.users[m].estimated;
        let fx = f * h * &tw;
        let sigma_e = cfg.csi_error_std[m];
        let noise = sigma_e * sigma_e * twq + cfg.noise_std[m] * cfg.noise_std[m];
        let gram = &fx * fx.adjoint() + f * f.adjoint() * cx(noise, 0.0);
        let mut cross = CMat::zeros(cfg.streams[m], fx.nrows());
        // E[s_m r_mᴴ] = rows of (TW)ᴴ H̄ᴴ Fᴴ for user m's streams
        cross.copy_from(&fx.adjoint().rows(row, cfg.streams[m]));
        let solved = gram
            .clone()
            .cholesky()
            .map(|ch| ch.solve(&cross.adjoint()).adjoint())
            .unwrap_or_else(|| {
                &cross
                    * gram
                        .pseudo_inverse(1e-12)
                        .unwrap_or_else(|_| CMat::zeros(fx.nrows(), fx.nrows()))
            });
        rx_digital.push(solved);
        row += cfg.streams[m];
    }

    Ok((
        TransceiverState {
            rx_digital,
            rx_analog,
            tx_analog,
            tx_digital,
            feedback: CMat::identity(d, d),
            ordering: Permutation::identity(d),
        },
        degenerate,
    ))
}
