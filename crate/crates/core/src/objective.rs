//! Robust sum-MSE objectives, the scaling between the power-constrained and
//! transformed problems, Wirtinger gradients, and KKT residual certificates.
//!
//! Both objectives share one compact form. With E_m = P_m F_m H_m T W − R_m,
//! where R_m holds user m's rows of LᵀU, the sum MSE is
//!
//!   Σ_m ‖E_m‖² + (κ_m ‖TW‖² + c_m) ‖P_m F_m‖²
//!
//! The original (power-constrained) objective uses the estimated channels
//! with κ_m = σ_e,m² and c_m = σ_m²; the transformed one uses the
//! noise-scaled channels with κ_m = σ̂_e,m² + 1/P_t and c_m = 0. Expanding
//! the square recovers the usual trace expansion term by term, including the
//! +tr(UUᴴ) contribution (Σ_m ‖R_m‖² = tr(UUᴴ)). Expectations over the CSI
//! error and noise are analytic; nothing is sampled here.

use crate::error::{Error, Result};
use crate::linalg::{cx, strict_lower, vec_lt, CMat, Permutation};

/// The full variable set of the transceiver design problem.
#[derive(Debug, Clone)]
pub struct TransceiverState {
    /// Digital receive matrices P_m (streams × rx_chains).
    pub rx_digital: Vec<CMat>,
    /// Analog combiners F_m (rx_chains × rx_antennas), unit-modulus entries.
    pub rx_analog: Vec<CMat>,
    /// Analog precoder T (tx_antennas × tx_chains), unit-modulus entries.
    pub tx_analog: CMat,
    /// Digital precoder W (tx_chains × total streams).
    pub tx_digital: CMat,
    /// Feedback matrix U = I + C, unit lower triangular.
    pub feedback: CMat,
    /// Stream-level cancellation order L.
    pub ordering: Permutation,
}

impl TransceiverState {
    pub fn stream_counts(&self) -> Vec<usize> {
        self.rx_digital.iter().map(|p| p.nrows()).collect()
    }

    pub fn total_streams(&self) -> usize {
        self.rx_digital.iter().map(|p| p.nrows()).sum()
    }

    pub fn users(&self) -> usize {
        self.rx_digital.len()
    }

    /// Strictly lower feedback part C = U − I.
    pub fn feedback_strict(&self) -> CMat {
        strict_lower(&self.feedback).expect("U is square")
    }

    /// LᵀU: desired-signal coefficients in natural stream order.
    pub fn desired_rows(&self) -> CMat {
        self.ordering.to_matrix().transpose() * &self.feedback
    }

    /// ‖TW‖², the radiated power before scaling.
    pub fn precoder_norm_sq(&self) -> f64 {
        (&self.tx_analog * &self.tx_digital).norm_squared()
    }

    /// Largest deviation of any analog entry modulus from 1.
    pub fn unit_modulus_deviation(&self) -> f64 {
        let mut dev: f64 = 0.0;
        for z in self.tx_analog.iter() {
            dev = dev.max((z.norm() - 1.0).abs());
        }
        for f in &self.rx_analog {
            for z in f.iter() {
                dev = dev.max((z.norm() - 1.0).abs());
            }
        }
        dev
    }

    fn check_channels(&self, channels: &[&CMat]) -> Result<()> {
        if channels.len() != self.users() {
            return Err(Error::Dimension(format!(
                "{} channels for {} users",
                channels.len(),
                self.users()
            )));
        }
        let d = self.total_streams();
        if self.feedback.nrows() != d || self.ordering.len() != d {
            return Err(Error::Dimension(
                "feedback/ordering size does not match stream count".into(),
            ));
        }
        for (m, h) in channels.iter().enumerate() {
            let p = &self.rx_digital[m];
            let f = &self.rx_analog[m];
            if f.nrows() != p.ncols()
                || f.ncols() != h.nrows()
                || h.ncols() != self.tx_analog.nrows()
                || self.tx_analog.ncols() != self.tx_digital.nrows()
                || self.tx_digital.ncols() != d
            {
                return Err(Error::Dimension(format!(
                    "user {m}: inconsistent chain {}x{} · {}x{} · {}x{} · {}x{} · {}x{}",
                    p.nrows(),
                    p.ncols(),
                    f.nrows(),
                    f.ncols(),
                    h.nrows(),
                    h.ncols(),
                    self.tx_analog.nrows(),
                    self.tx_analog.ncols(),
                    self.tx_digital.nrows(),
                    self.tx_digital.ncols()
                )));
            }
        }
        Ok(())
    }
}

/// Per-user coefficients (κ_m, c_m) of the noise term κ_m‖TW‖² + c_m.
#[derive(Debug, Clone)]
pub(crate) struct NoiseCoeffs {
    pub kappa: Vec<f64>,
    pub constant: Vec<f64>,
}

impl NoiseCoeffs {
    pub fn original(sigma: &[f64], sigma_e: &[f64]) -> Self {
        NoiseCoeffs {
            kappa: sigma_e.iter().map(|s| s * s).collect(),
            constant: sigma.iter().map(|s| s * s).collect(),
        }
    }

    pub fn transformed(scaled_err: &[f64], p_t: f64) -> Self {
        NoiseCoeffs {
            kappa: scaled_err.iter().map(|s| s * s + 1.0 / p_t).collect(),
            constant: vec![0.0; scaled_err.len()],
        }
    }
}

pub(crate) fn objective_value(
    state: &TransceiverState,
    channels: &[&CMat],
    coeffs: &NoiseCoeffs,
) -> Result<f64> {
    state.check_channels(channels)?;
    let tw = &state.tx_analog * &state.tx_digital;
    let twq = tw.norm_squared();
    let lt_u = state.desired_rows();
    let mut total = 0.0;
    let mut row = 0;
    for (m, h) in channels.iter().enumerate() {
        let pf = &state.rx_digital[m] * &state.rx_analog[m];
        let dm = pf.nrows();
        let eff = &pf * *h * &tw;
        let desired = lt_u.rows(row, dm);
        total += (eff - desired).norm_squared();
        total += (coeffs.kappa[m] * twq + coeffs.constant[m]) * pf.norm_squared();
        row += dm;
    }
    Ok(total)
}

/// Sum MSE of the original problem, marginalized analytically over the CSI
/// error and receiver noise. Uses the estimated channels.
pub fn mse(
    state: &TransceiverState,
    estimated: &[&CMat],
    sigma: &[f64],
    sigma_e: &[f64],
) -> Result<f64> {
    objective_value(state, estimated, &NoiseCoeffs::original(sigma, sigma_e))
}

/// Transformed objective on noise-scaled channels, with the power constraint
/// replaced by the 1/P_t penalty.
pub fn mse_sigma(
    state: &TransceiverState,
    scaled: &[&CMat],
    scaled_err: &[f64],
    p_t: f64,
) -> Result<f64> {
    objective_value(state, scaled, &NoiseCoeffs::transformed(scaled_err, p_t))
}

/// Maps a stationary point of the transformed problem to the original one:
/// W̄ = aW with a = √P_t/‖TW‖, and P̄_m = P_m/(a σ_m). After scaling,
/// ‖TW̄‖² = P_t exactly and the original MSE at the scaled point equals the
/// transformed objective at the input point.
pub fn scale_to_power_budget(
    state: &TransceiverState,
    p_t: f64,
    sigma: &[f64],
) -> Result<TransceiverState> {
    if sigma.len() != state.users() {
        return Err(Error::Dimension("one noise level per user".into()));
    }
    let tw_norm = state.precoder_norm_sq().sqrt();
    if tw_norm <= 0.0 {
        return Err(Error::DegeneratePrecoder(
            "‖TW‖ = 0, cannot meet the power budget".into(),
        ));
    }
    let a = p_t.sqrt() / tw_norm;
    let mut out = state.clone();
    out.tx_digital *= cx(a, 0.0);
    for (p, &s) in out.rx_digital.iter_mut().zip(sigma) {
        *p *= cx(1.0 / (a * s), 0.0);
    }
    Ok(out)
}

/// ∂MSE/∂P_m* (conjugate Wirtinger derivative).
pub(crate) fn grad_rx_digital(
    state: &TransceiverState,
    channels: &[&CMat],
    coeffs: &NoiseCoeffs,
    m: usize,
) -> CMat {
    let tw = &state.tx_analog * &state.tx_digital;
    let twq = tw.norm_squared();
    let lt_u = state.desired_rows();
    let row = state.stream_counts()[..m].iter().sum::<usize>();
    let pf = &state.rx_digital[m] * &state.rx_analog[m];
    let x = channels[m] * &tw;
    let err = &pf * &x - lt_u.rows(row, pf.nrows());
    let c = coeffs.kappa[m] * twq + coeffs.constant[m];
    err * x.adjoint() * state.rx_analog[m].adjoint() + &pf * state.rx_analog[m].adjoint() * cx(c, 0.0)
}

/// ∂MSE/∂U* in full matrix form; only its strictly-lower part is free.
pub(crate) fn grad_feedback(state: &TransceiverState, channels: &[&CMat]) -> CMat {
    let d = state.total_streams();
    let tw = &state.tx_analog * &state.tx_digital;
    let mut stacked = CMat::zeros(d, d);
    let mut row = 0;
    for (m, h) in channels.iter().enumerate() {
        let block = &state.rx_digital[m] * &state.rx_analog[m] * *h * &tw;
        stacked.rows_mut(row, block.nrows()).copy_from(&block);
        row += block.nrows();
    }
    &state.feedback - state.ordering.to_matrix() * stacked
}

/// ∂MSE/∂W*.
pub(crate) fn grad_tx_digital(
    state: &TransceiverState,
    channels: &[&CMat],
    coeffs: &NoiseCoeffs,
) -> CMat {
    let lt_u = state.desired_rows();
    let mut grad = CMat::zeros(state.tx_digital.nrows(), state.tx_digital.ncols());
    let mut kappa_weight = 0.0;
    let mut row = 0;
    for (m, h) in channels.iter().enumerate() {
        let pf = &state.rx_digital[m] * &state.rx_analog[m];
        let front = &pf * *h * &state.tx_analog; // P F H T
        let err = &front * &state.tx_digital - lt_u.rows(row, pf.nrows());
        grad += front.adjoint() * err;
        kappa_weight += coeffs.kappa[m] * pf.norm_squared();
        row += pf.nrows();
    }
    grad + state.tx_analog.adjoint() * &state.tx_analog * &state.tx_digital * cx(kappa_weight, 0.0)
}

/// ∂MSE/∂T*.
pub(crate) fn grad_tx_analog(
    state: &TransceiverState,
    channels: &[&CMat],
    coeffs: &NoiseCoeffs,
) -> CMat {
    let tw = &state.tx_analog * &state.tx_digital;
    let lt_u = state.desired_rows();
    let mut grad = CMat::zeros(state.tx_analog.nrows(), state.tx_analog.ncols());
    let mut kappa_weight = 0.0;
    let mut row = 0;
    for (m, h) in channels.iter().enumerate() {
        let pf = &state.rx_digital[m] * &state.rx_analog[m];
        let pfh = &pf * *h; // P F H
        let err = &pfh * &tw - lt_u.rows(row, pf.nrows());
        grad += pfh.adjoint() * err * state.tx_digital.adjoint();
        kappa_weight += coeffs.kappa[m] * pf.norm_squared();
        row += pf.nrows();
    }
    grad + &tw * state.tx_digital.adjoint() * cx(kappa_weight, 0.0)
}

/// ∂MSE/∂F_m*.
pub(crate) fn grad_rx_analog(
    state: &TransceiverState,
    channels: &[&CMat],
    coeffs: &NoiseCoeffs,
    m: usize,
) -> CMat {
    let tw = &state.tx_analog * &state.tx_digital;
    let twq = tw.norm_squared();
    let lt_u = state.desired_rows();
    let row = state.stream_counts()[..m].iter().sum::<usize>();
    let p = &state.rx_digital[m];
    let y = channels[m] * &tw; // H T W
    let err = p * &state.rx_analog[m] * &y - lt_u.rows(row, p.nrows());
    let c = coeffs.kappa[m] * twq + coeffs.constant[m];
    p.adjoint() * err * y.adjoint() + p.adjoint() * p * &state.rx_analog[m] * cx(c, 0.0)
}

/// Component of `g` tangent to the per-entry unit-modulus circles of `x`:
/// g − Re(g ∘ x̄) ∘ x.
pub(crate) fn tangent_project(g: &CMat, x: &CMat) -> CMat {
    CMat::from_fn(g.nrows(), g.ncols(), |i, j| {
        let radial = (g[(i, j)] * x[(i, j)].conj()).re;
        g[(i, j)] - x[(i, j)] * cx(radial, 0.0)
    })
}

/// One block's stationarity residual together with the gradient magnitude it
/// should be compared against.
#[derive(Debug, Clone, Copy)]
pub struct BlockResidual {
    pub residual: f64,
    pub gradient_scale: f64,
}

impl BlockResidual {
    /// Residual normalized by 1 + gradient scale.
    pub fn scaled(&self) -> f64 {
        self.residual / (1.0 + self.gradient_scale)
    }
}

/// Numerical first-order-optimality certificate for the original problem.
#[derive(Debug, Clone)]
pub struct KktReport {
    pub rx_digital: Vec<BlockResidual>,
    pub feedback: BlockResidual,
    pub tx_digital: BlockResidual,
    pub tx_analog: BlockResidual,
    pub rx_analog: Vec<BlockResidual>,
    /// |‖TW‖² − P_t|.
    pub power_slack: f64,
    /// Estimated multiplier of the power constraint.
    pub multiplier: f64,
    /// Whether the point satisfies unit-modulus and power feasibility.
    pub feasible: bool,
}

impl KktReport {
    pub fn max_scaled(&self) -> f64 {
        let mut v = self
            .rx_digital
            .iter()
            .chain(&self.rx_analog)
            .map(|b| b.scaled())
            .fold(0.0f64, f64::max);
        v = v.max(self.feedback.scaled());
        v = v.max(self.tx_digital.scaled());
        v.max(self.tx_analog.scaled())
    }
}

/// Evaluates the stationarity system of the power-constrained problem at a
/// (scaled) point. The power multiplier is the closed-form
/// λ = Σ_m (σ_m²/P_t)‖P̄_m F_m‖², and element-wise unit-modulus multipliers
/// are eliminated by projecting the analog gradients onto the tangent space
/// of the unit circle. Infeasibility is reported, not raised.
pub fn kkt_residual(
    state: &TransceiverState,
    estimated: &[&CMat],
    sigma: &[f64],
    sigma_e: &[f64],
    p_t: f64,
) -> Result<KktReport> {
    state.check_channels(estimated)?;
    let coeffs = NoiseCoeffs::original(sigma, sigma_e);
    let multiplier: f64 = state
        .rx_digital
        .iter()
        .zip(&state.rx_analog)
        .zip(sigma)
        .map(|((p, f), &s)| s * s / p_t * (p * f).norm_squared())
        .sum();

    let rx_digital = (0..state.users())
        .map(|m| {
            let g = grad_rx_digital(state, estimated, &coeffs, m);
            BlockResidual {
                residual: g.norm(),
                gradient_scale: g.norm(),
            }
        })
        .collect();

    let gu = grad_feedback(state, estimated);
    let gu_free = vec_lt(&gu)?.norm();
    let feedback = BlockResidual {
        residual: gu_free,
        gradient_scale: gu_free,
    };

    let gw = grad_tx_digital(state, estimated, &coeffs);
    let power_w =
        state.tx_analog.adjoint() * &state.tx_analog * &state.tx_digital * cx(multiplier, 0.0);
    let tx_digital = BlockResidual {
        residual: (&gw + power_w).norm(),
        gradient_scale: gw.norm(),
    };

    let gt = grad_tx_analog(state, estimated, &coeffs)
        + (&state.tx_analog * &state.tx_digital) * state.tx_digital.adjoint() * cx(multiplier, 0.0);
    let tx_analog = BlockResidual {
        residual: tangent_project(&gt, &state.tx_analog).norm(),
        gradient_scale: gt.norm(),
    };

    let rx_analog = (0..state.users())
        .map(|m| {
            let g = grad_rx_analog(state, estimated, &coeffs, m);
            BlockResidual {
                residual: tangent_project(&g, &state.rx_analog[m]).norm(),
                gradient_scale: g.norm(),
            }
        })
        .collect();

    let power_slack = (state.precoder_norm_sq() - p_t).abs();
    let feasible = state.unit_modulus_deviation() <= 1e-9 && power_slack <= 1e-6 * p_t.max(1.0);

    Ok(KktReport {
        rx_digital,
        feedback,
        tx_digital,
        tx_analog,
        rx_analog,
        power_slack,
        multiplier,
        feasible,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{CVec, C_ONE};
    use crate::oracle;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn scalar_state() -> TransceiverState {
        TransceiverState {
            rx_digital: vec![CMat::identity(1, 1)],
            rx_analog: vec![CMat::identity(1, 1)],
            tx_analog: CMat::identity(1, 1),
            tx_digital: CMat::identity(1, 1),
            feedback: CMat::identity(1, 1),
            ordering: Permutation::identity(1),
        }
    }

    #[test]
    fn mse_scalar_all_ones() {
        // signal 1, cross −2, noise 1, tr(UUᴴ) 1 → 1
        let s = scalar_state();
        let h = CMat::identity(1, 1);
        let v = mse(&s, &[&h], &[1.0], &[0.0]).unwrap();
        assert!((v - 1.0).abs() < 1e-14);
    }

    #[test]
    fn mse_zero_tx_digital() {
        // W = 0 → Σ σ² tr(PFFᴴPᴴ) + tr(UUᴴ)
        let mut s = scalar_state();
        s.tx_digital = CMat::zeros(1, 1);
        let h = CMat::identity(1, 1);
        let v = mse(&s, &[&h], &[2.0], &[0.3]).unwrap();
        assert!((v - (4.0 + 1.0)).abs() < 1e-14);
    }

    #[test]
    fn mse_sigma_scalar_cases() {
        let s = scalar_state();
        let h = CMat::identity(1, 1);
        let v = mse_sigma(&s, &[&h], &[0.0], 1.0).unwrap();
        assert!((v - 1.0).abs() < 1e-14);

        let mut s2 = s.clone();
        s2.rx_digital[0] = CMat::from_element(1, 1, cx(0.5, 0.0));
        let v = mse_sigma(&s2, &[&h], &[0.0], 1.0).unwrap();
        assert!((v - 0.5).abs() < 1e-14);

        let mut s3 = s.clone();
        s3.tx_digital = CMat::zeros(1, 1);
        let v = mse_sigma(&s3, &[&h], &[0.0], 1.0).unwrap();
        assert!((v - 1.0).abs() < 1e-14); // tr(UUᴴ) only
    }

    #[test]
    fn scale_to_power_budget_arithmetic() {
        // ‖TW‖ = 2, P_t = 1 → a = 0.5, W̄ = 0.5 W, P̄ = 2 P at σ = 1.
        let mut s = scalar_state();
        s.tx_digital = CMat::from_element(1, 1, cx(2.0, 0.0));
        let scaled = scale_to_power_budget(&s, 1.0, &[1.0]).unwrap();
        assert!((scaled.tx_digital[(0, 0)] - C_ONE).norm() < 1e-14);
        assert!((scaled.rx_digital[0][(0, 0)] - cx(2.0, 0.0)).norm() < 1e-14);
        assert!((scaled.precoder_norm_sq() - 1.0).abs() < 1e-12);

        // already at the budget → identity scaling for σ = 1
        let s = scalar_state();
        let scaled = scale_to_power_budget(&s, 1.0, &[1.0]).unwrap();
        assert!((scaled.tx_digital[(0, 0)] - C_ONE).norm() < 1e-14);
        assert!((scaled.rx_digital[0][(0, 0)] - C_ONE).norm() < 1e-14);

        let mut degenerate = scalar_state();
        degenerate.tx_digital = CMat::zeros(1, 1);
        assert!(scale_to_power_budget(&degenerate, 1.0, &[1.0]).is_err());
    }

    #[test]
    fn power_scaling_equality_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..50 {
            let (state, _channels) = oracle::random_instance(&mut rng, 2, 4, 3, &[2, 1]);
            let p_t = 0.5 + rng.random::<f64>() * 10.0;
            let sigma = vec![0.5 + rng.random::<f64>(), 0.5 + rng.random::<f64>()];
            let scaled = scale_to_power_budget(&state, p_t, &sigma).unwrap();
            assert!((scaled.precoder_norm_sq() - p_t).abs() < 1e-9);
        }
    }

    #[test]
    fn power_scaling_objective_matching() {
        // mse(scale(s)) = mse_sigma(s) for any point, any noise profile.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..50 {
            let (state, channels) = oracle::random_instance(&mut rng, 2, 4, 3, &[1, 2]);
            let p_t = 0.5 + rng.random::<f64>() * 4.0;
            let sigma = vec![0.4 + rng.random::<f64>(), 0.4 + rng.random::<f64>()];
            let sigma_e = vec![0.3 * rng.random::<f64>(), 0.3 * rng.random::<f64>()];
            let est: Vec<CMat> = channels.clone();
            let scaled_ch: Vec<CMat> = est
                .iter()
                .zip(&sigma)
                .map(|(h, &s)| h / cx(s, 0.0))
                .collect();
            let scaled_err: Vec<f64> = sigma_e.iter().zip(&sigma).map(|(&e, &s)| e / s).collect();

            let est_refs: Vec<&CMat> = est.iter().collect();
            let sc_refs: Vec<&CMat> = scaled_ch.iter().collect();
            let v_sigma = mse_sigma(&state, &sc_refs, &scaled_err, p_t).unwrap();
            let mapped = scale_to_power_budget(&state, p_t, &sigma).unwrap();
            let v_orig = mse(&mapped, &est_refs, &sigma, &sigma_e).unwrap();
            assert!(
                (v_orig - v_sigma).abs() < 1e-9 * (1.0 + v_sigma.abs()),
                "trial {trial}: {v_orig} vs {v_sigma}"
            );
        }
    }

    #[test]
    fn mse_matches_sampling_oracle() {
        // Monte-Carlo over (ΔH, n) with the symbol covariance marginalized.
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (state, channels) = oracle::random_instance(&mut rng, 2, 6, 3, &[1, 1]);
        let sigma = vec![0.8, 1.2];
        let sigma_e = vec![0.15, 0.25];
        let est_refs: Vec<&CMat> = channels.iter().collect();
        let analytic = mse(&state, &est_refs, &sigma, &sigma_e).unwrap();

        let tw = &state.tx_analog * &state.tx_digital;
        let lt_u = state.desired_rows();
        let n_samples = 100_000;
        let mut acc = 0.0;
        for _ in 0..n_samples {
            let mut row = 0;
            for m in 0..2 {
                let pf = &state.rx_digital[m] * &state.rx_analog[m];
                let dm = pf.nrows();
                let (nr, nc) = channels[m].shape();
                let dh = CMat::from_fn(nr, nc, |_, _| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    cx(re, im) / std::f64::consts::SQRT_2
                });
                let h = &channels[m] + &dh * cx(sigma_e[m], 0.0);
                let eff = &pf * &h * &tw - lt_u.rows(row, dm);
                let noise = CVec::from_fn(nr, |_, _| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    cx(re, im) * sigma[m] / std::f64::consts::SQRT_2
                });
                acc += eff.norm_squared() + (&pf * noise).norm_squared();
                row += dm;
            }
        }
        let estimate = acc / n_samples as f64;
        assert!(
            (estimate - analytic).abs() < 0.01 * analytic,
            "sampled {estimate} vs analytic {analytic}"
        );
    }

    #[test]
    fn feedback_identity_floor() {
        // tr(UUᴴ) ≥ D with equality iff C = 0: W = 0 isolates the term.
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let (mut state, channels) = oracle::random_instance(&mut rng, 2, 4, 3, &[1, 1]);
        state.tx_digital = CMat::zeros(state.tx_digital.nrows(), state.tx_digital.ncols());
        let refs: Vec<&CMat> = channels.iter().collect();
        let with_c = mse_sigma(&state, &refs, &[0.0, 0.0], 1.0).unwrap();
        let d = state.total_streams() as f64;
        assert!(with_c >= d - 1e-12);
        state.feedback = CMat::identity(2, 2);
        let without_c = mse_sigma(&state, &refs, &[0.0, 0.0], 1.0).unwrap();
        assert!((without_c - d).abs() < 1e-12);
        assert!(with_c >= without_c);
    }

    #[test]
    fn kkt_random_state_has_positive_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let (state, channels) = oracle::random_instance(&mut rng, 2, 4, 3, &[1, 1]);
        let scaled = scale_to_power_budget(&state, 2.0, &[1.0, 1.0]).unwrap();
        let refs: Vec<&CMat> = channels.iter().collect();
        let report = kkt_residual(&scaled, &refs, &[1.0, 1.0], &[0.1, 0.1], 2.0).unwrap();
        assert!(report.max_scaled() > 1e-3);
        assert!(report.power_slack < 1e-9);
        assert!(report.feasible);
    }
}
