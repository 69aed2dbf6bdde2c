//! Clustered mmWave channel generation with uniform linear arrays, Gaussian
//! CSI error injection, Doppler evolution for delay experiments, and scaled /
//! effective CSI construction.
//!
//! A channel is a sum over clusters of ray dyads,
//! `H = Σ_cl Γ_cl (1/√N_p) Σ_ray a_r a_tᴴ exp(jφ)`, with a complex Gaussian
//! gain per cluster, Laplacian per-ray angle biases around uniformly drawn
//! cluster centers, and one Doppler phase state per ray. Steering vectors are
//! unit norm, so each ray dyad has unit Frobenius norm and the expected
//! channel energy equals the number of clusters.

use std::io::Write;

use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::config::{ChannelModel, SystemConfig};
use crate::error::{Error, Result};
use crate::linalg::{cx, CMat, CVec};

/// One propagation ray inside a cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct Ray {
    /// Departure-angle bias around the cluster center (rad).
    pub departure_bias: f64,
    /// Arrival-angle bias around the cluster center (rad).
    pub arrival_bias: f64,
    /// Accumulated Doppler phase (rad).
    pub doppler_phase: f64,
}

/// One cluster: a shared complex gain, center angles and its rays.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub gain: Complex64,
    pub departure_center: f64,
    pub arrival_center: f64,
    pub rays: Vec<Ray>,
}

/// Ray-level description of one user's channel; everything needed to
/// re-assemble the matrix at any time instant.
#[derive(Debug, Clone, PartialEq)]
pub struct RayParameters {
    pub clusters: Vec<Cluster>,
}

/// Per-user channel matrices: truth, estimate, injected error and the
/// noise-scaled estimate used by the transformed problem.
#[derive(Debug, Clone)]
pub struct UserChannel {
    /// True channel H (rx_antennas × tx_antennas).
    pub true_ch: CMat,
    /// Estimated channel H̄ with H = H̄ + σ_e ΔH.
    pub estimated: CMat,
    /// Unit-variance estimation error draw ΔH.
    pub error: CMat,
    /// Scaled channel Ĥ = H̄ / σ.
    pub scaled: CMat,
    /// Scaled error deviation σ̂_e = σ_e / σ.
    pub scaled_error_std: f64,
}

#[derive(Debug, Clone)]
pub struct ChannelSet {
    pub users: Vec<UserChannel>,
}

impl ChannelSet {
    pub fn estimated(&self) -> Vec<&CMat> {
        self.users.iter().map(|u| &u.estimated).collect()
    }

    pub fn scaled(&self) -> Vec<&CMat> {
        self.users.iter().map(|u| &u.scaled).collect()
    }

    pub fn true_channels(&self) -> Vec<&CMat> {
        self.users.iter().map(|u| &u.true_ch).collect()
    }

    pub fn scaled_error_std(&self) -> Vec<f64> {
        self.users.iter().map(|u| u.scaled_error_std).collect()
    }

    /// Squared Frobenius norms of the scaled channels, the ordering metric.
    pub fn scaled_norms_sq(&self) -> Vec<f64> {
        self.users.iter().map(|u| u.scaled.norm_squared()).collect()
    }
}

/// ULA array response a(θ) = (1/√N)[1, e^{jκ sinθ}, …, e^{jκ(N−1) sinθ}]ᵀ.
pub fn array_response(theta: f64, n: usize, spacing_phase: f64) -> Result<CVec> {
    if n == 0 {
        return Err(Error::Dimension("array needs at least one element".into()));
    }
    let scale = 1.0 / (n as f64).sqrt();
    let step = spacing_phase * theta.sin();
    Ok(CVec::from_iterator(
        n,
        (0..n).map(|k| {
            let phase = step * k as f64;
            cx(phase.cos() * scale, phase.sin() * scale)
        }),
    ))
}

/// Builds the channel matrix for the current ray state.
pub fn assemble_channel(
    params: &RayParameters,
    rx_antennas: usize,
    tx_antennas: usize,
    spacing_phase: f64,
) -> Result<CMat> {
    let mut h = CMat::zeros(rx_antennas, tx_antennas);
    for cluster in &params.clusters {
        let ray_scale = 1.0 / (cluster.rays.len() as f64).sqrt();
        for ray in &cluster.rays {
            let a_t = array_response(
                cluster.departure_center + ray.departure_bias,
                tx_antennas,
                spacing_phase,
            )?;
            let a_r = array_response(
                cluster.arrival_center + ray.arrival_bias,
                rx_antennas,
                spacing_phase,
            )?;
            let rot = cx(ray.doppler_phase.cos(), ray.doppler_phase.sin());
            let weight = cluster.gain * rot * ray_scale;
            // h += weight * a_r a_tᴴ
            for j in 0..tx_antennas {
                let tj = a_t[j].conj() * weight;
                for i in 0..rx_antennas {
                    h[(i, j)] += a_r[i] * tj;
                }
            }
        }
    }
    Ok(h)
}

fn laplacian(rng: &mut ChaCha8Rng, std_dev: f64) -> f64 {
    // Inverse-CDF sampling; the Laplace scale b relates to the standard
    // deviation via var = 2b².
    let b = std_dev / std::f64::consts::SQRT_2;
    let u: f64 = rng.random::<f64>() - 0.5;
    -b * u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln()
}

fn complex_gaussian(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    cx(re, im) / std::f64::consts::SQRT_2
}

fn sample_ray_parameters(rng: &mut ChaCha8Rng, model: &ChannelModel) -> RayParameters {
    let clusters = (0..model.clusters)
        .map(|_| {
            let gain = complex_gaussian(rng);
            let departure_center = (rng.random::<f64>() * 2.0 - 1.0) * model.center_angle_range;
            let arrival_center = (rng.random::<f64>() * 2.0 - 1.0) * model.center_angle_range;
            let rays = (0..model.rays_per_cluster)
                .map(|_| Ray {
                    departure_bias: laplacian(rng, model.angle_spread),
                    arrival_bias: laplacian(rng, model.angle_spread),
                    doppler_phase: rng.random::<f64>() * std::f64::consts::TAU,
                })
                .collect();
            Cluster {
                gain,
                departure_center,
                arrival_center,
                rays,
            }
        })
        .collect();
    RayParameters { clusters }
}

fn build_user_channel(
    true_ch: CMat,
    sigma: f64,
    sigma_e: f64,
    rng: &mut ChaCha8Rng,
) -> UserChannel {
    let (rows, cols) = true_ch.shape();
    let error = CMat::from_fn(rows, cols, |_, _| complex_gaussian(rng));
    let estimated = &true_ch - &error * cx(sigma_e, 0.0);
    // store the truth as estimate + σ_e ΔH so the decomposition is bit-exact
    let true_ch = &estimated + &error * cx(sigma_e, 0.0);
    let scaled = &estimated / cx(sigma, 0.0);
    UserChannel {
        true_ch,
        estimated,
        error,
        scaled,
        scaled_error_std: sigma_e / sigma,
    }
}

/// Draws one channel realization per user together with its estimation error.
///
/// Deterministic in `seed`; the estimated channel satisfies H = H̄ + σ_e ΔH
/// exactly as stored.
pub fn sample_channel(
    cfg: &SystemConfig,
    model: &ChannelModel,
    seed: u64,
) -> Result<(Vec<RayParameters>, ChannelSet)> {
    cfg.validate()?;
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Vec::with_capacity(cfg.users);
    let mut users = Vec::with_capacity(cfg.users);
    for m in 0..cfg.users {
        let p = sample_ray_parameters(&mut rng, model);
        let h = assemble_channel(&p, cfg.rx_antennas[m], cfg.tx_antennas, model.spacing_phase)?;
        users.push(build_user_channel(
            h,
            cfg.noise_std[m],
            cfg.csi_error_std[m],
            &mut rng,
        ));
        params.push(p);
    }
    Ok((params, ChannelSet { users }))
}

/// Advances every ray's Doppler phase by 2π f_d Δt cos(arrival angle);
/// gains and angles are untouched and evolve(0) is the identity.
pub fn evolve_channel(params: &RayParameters, dt: f64, doppler_hz: f64) -> Result<RayParameters> {
    if !(dt >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "time step must be >= 0, got {dt}"
        )));
    }
    let mut out = params.clone();
    for cluster in &mut out.clusters {
        for ray in &mut cluster.rays {
            let angle = cluster.arrival_center + ray.arrival_bias;
            ray.doppler_phase += std::f64::consts::TAU * doppler_hz * dt * angle.cos();
        }
    }
    Ok(out)
}

/// Re-derives the scaled channels Ĥ = H̄/σ and σ̂_e = σ_e/σ for new noise
/// levels.
pub fn scale_channels(cs: &ChannelSet, sigma: &[f64], sigma_e: &[f64]) -> Result<ChannelSet> {
    if sigma.len() != cs.users.len() || sigma_e.len() != cs.users.len() {
        return Err(Error::Dimension(
            "one noise/error deviation per user required".into(),
        ));
    }
    if sigma.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::InvalidArgument("noise std must be > 0".into()));
    }
    let users = cs
        .users
        .iter()
        .zip(sigma.iter().zip(sigma_e))
        .map(|(u, (&s, &se))| UserChannel {
            true_ch: u.true_ch.clone(),
            estimated: u.estimated.clone(),
            error: u.error.clone(),
            scaled: &u.estimated / cx(s, 0.0),
            scaled_error_std: se / s,
        })
        .collect();
    Ok(ChannelSet { users })
}

/// Effective CSI seen by the digital processing: H̃_m = F_m Ĥ_m T.
pub fn effective_csi(cs: &ChannelSet, rx_analog: &[CMat], tx_analog: &CMat) -> Result<Vec<CMat>> {
    if rx_analog.len() != cs.users.len() {
        return Err(Error::Dimension("one combiner per user required".into()));
    }
    cs.users
        .iter()
        .zip(rx_analog)
        .map(|(u, f)| {
            if f.ncols() != u.scaled.nrows() || u.scaled.ncols() != tx_analog.nrows() {
                return Err(Error::Dimension(format!(
                    "effective CSI: {}x{} combiner, {}x{} channel, {}x{} precoder",
                    f.nrows(),
                    f.ncols(),
                    u.scaled.nrows(),
                    u.scaled.ncols(),
                    tx_analog.nrows(),
                    tx_analog.ncols()
                )));
            }
            Ok(f * &u.scaled * tx_analog)
        })
        .collect()
}

/// Writes one CSV record per ray for reproducibility audits.
pub fn dump_rays<W: Write>(params: &[RayParameters], mut w: W) -> std::io::Result<()> {
    writeln!(
        w,
        "user,cluster,ray,gain_re,gain_im,departure_center,arrival_center,departure_bias,arrival_bias,doppler_phase"
    )?;
    for (u, p) in params.iter().enumerate() {
        for (c, cluster) in p.clusters.iter().enumerate() {
            for (r, ray) in cluster.rays.iter().enumerate() {
                writeln!(
                    w,
                    "{u},{c},{r},{},{},{},{},{},{},{}",
                    cluster.gain.re,
                    cluster.gain.im,
                    cluster.departure_center,
                    cluster.arrival_center,
                    ray.departure_bias,
                    ray.arrival_bias,
                    ray.doppler_phase
                )?;
            }
        }
    }
    Ok(())
}

/// A time-evolving channel with on-demand delayed estimates, used by the
/// delay experiments. Geometry is frozen at construction; Doppler phases
/// drift with time and every estimation event draws a fresh error matrix
/// deterministically derived from (seed, event id).
#[derive(Debug, Clone)]
pub struct ChannelProcess {
    pub params: Vec<RayParameters>,
    pub model: ChannelModel,
    seed: u64,
}

impl ChannelProcess {
    pub fn new(cfg: &SystemConfig, model: &ChannelModel, seed: u64) -> Result<Self> {
        let (params, _) = sample_channel(cfg, model, seed)?;
        Ok(ChannelProcess {
            params,
            model: model.clone(),
            seed,
        })
    }

    /// True channels at absolute time `t` (seconds from generation).
    pub fn true_channels_at(&self, cfg: &SystemConfig, t: f64) -> Result<Vec<CMat>> {
        self.params
            .iter()
            .enumerate()
            .map(|(m, p)| {
                let evolved = evolve_channel(p, t, self.model.doppler_hz)?;
                assemble_channel(
                    &evolved,
                    cfg.rx_antennas[m],
                    cfg.tx_antennas,
                    self.model.spacing_phase,
                )
            })
            .collect()
    }

    /// Channel estimate taken at time `t` (clamped at 0), as a full
    /// `ChannelSet` whose true matrices are the channels at `t`.
    ///
    /// `event` distinguishes estimation instants so repeated estimates of the
    /// same instant reuse the same error draw.
    pub fn estimate_at(&self, cfg: &SystemConfig, t: f64, event: u64) -> Result<ChannelSet> {
        let t = t.max(0.0);
        let truth = self.true_channels_at(cfg, t)?;
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix(self.seed ^ 0x9d5c_f0a1_17b4_2e63, event));
        let users = truth
            .into_iter()
            .enumerate()
            .map(|(m, h)| build_user_channel(h, cfg.noise_std[m], cfg.csi_error_std[m], &mut rng))
            .collect();
        Ok(ChannelSet { users })
    }
}

fn splitmix(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::all_finite;
    use proptest::prelude::*;

    fn desk_model() -> ChannelModel {
        ChannelModel::default()
    }

    #[test]
    fn array_response_zero_angle() {
        let a = array_response(0.0, 4, std::f64::consts::PI).unwrap();
        for k in 0..4 {
            assert!((a[k] - cx(0.5, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn array_response_broadside_pair() {
        // θ=π/2, N=2, κ=π → (1/√2)[1, −1]
        let a = array_response(std::f64::consts::FRAC_PI_2, 2, std::f64::consts::PI).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert!((a[0] - cx(s, 0.0)).norm() < 1e-12);
        assert!((a[1] - cx(-s, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn array_response_rejects_empty() {
        assert!(array_response(0.3, 0, std::f64::consts::PI).is_err());
    }

    #[test]
    fn sample_is_deterministic_and_consistent() {
        let cfg = SystemConfig::desk();
        let model = desk_model();
        let (p1, cs1) = sample_channel(&cfg, &model, 42).unwrap();
        let (p2, cs2) = sample_channel(&cfg, &model, 42).unwrap();
        assert_eq!(p1, p2);
        for (u1, u2) in cs1.users.iter().zip(&cs2.users) {
            assert_eq!(u1.true_ch, u2.true_ch);
            assert_eq!(u1.estimated, u2.estimated);
        }
        // H = H̄ + σ_e ΔH reconstructs bit-exactly
        for (m, u) in cs1.users.iter().enumerate() {
            let rebuilt = &u.estimated + &u.error * cx(cfg.csi_error_std[m], 0.0);
            assert_eq!(rebuilt, u.true_ch);
            assert!(all_finite(&u.true_ch));
        }
    }

    #[test]
    fn zero_error_means_exact_estimate() {
        let mut cfg = SystemConfig::desk();
        cfg.csi_error_std = vec![0.0, 0.0];
        let (_, cs) = sample_channel(&cfg, &desk_model(), 7).unwrap();
        for u in &cs.users {
            assert_eq!(u.estimated, u.true_ch);
        }
    }

    #[test]
    fn mean_channel_energy_matches_cluster_count() {
        // E‖H‖² = number of clusters for unit-norm ray dyads.
        let cfg = SystemConfig::desk();
        let model = desk_model();
        let n = 10_000;
        let mut acc = 0.0;
        for seed in 0..n {
            let (_, cs) = sample_channel(&cfg, &model, seed).unwrap();
            acc += cs.users[0].true_ch.norm_squared();
        }
        let mean = acc / n as f64;
        let expect = model.clusters as f64;
        assert!(
            (mean - expect).abs() < 0.05 * expect,
            "mean energy {mean} vs {expect}"
        );
    }

    #[test]
    fn evolve_identity_cases() {
        let cfg = SystemConfig::desk();
        let (params, _) = sample_channel(&cfg, &desk_model(), 3).unwrap();
        let p = &params[0];
        assert_eq!(evolve_channel(p, 0.0, 150.0).unwrap(), *p);
        assert_eq!(evolve_channel(p, 0.25, 0.0).unwrap(), *p);
        assert!(evolve_channel(p, -1.0, 10.0).is_err());
    }

    #[test]
    fn evolve_preserves_ray_magnitudes() {
        let cfg = SystemConfig::desk();
        let model = desk_model();
        let (params, _) = sample_channel(&cfg, &model, 11).unwrap();
        let evolved = evolve_channel(&params[0], 1e-3, 200.0).unwrap();
        for (c0, c1) in params[0].clusters.iter().zip(&evolved.clusters) {
            assert_eq!(c0.gain, c1.gain);
            for (r0, r1) in c0.rays.iter().zip(&c1.rays) {
                assert_eq!(r0.departure_bias, r1.departure_bias);
                assert_eq!(r0.arrival_bias, r1.arrival_bias);
                assert_ne!(r0.doppler_phase, r1.doppler_phase);
            }
        }
        // single-ray dyad magnitude is |Γ| regardless of the phase state
        let single = RayParameters {
            clusters: vec![Cluster {
                gain: cx(0.8, -0.6),
                departure_center: 0.2,
                arrival_center: -0.1,
                rays: vec![Ray {
                    departure_bias: 0.01,
                    arrival_bias: -0.02,
                    doppler_phase: 0.0,
                }],
            }],
        };
        let h0 = assemble_channel(&single, 4, 16, model.spacing_phase).unwrap();
        let moved = evolve_channel(&single, 2e-3, 300.0).unwrap();
        let h1 = assemble_channel(&moved, 4, 16, model.spacing_phase).unwrap();
        assert!((h0.norm() - 1.0).abs() < 1e-12);
        assert!((h1.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scale_channels_halves_entries() {
        let cfg = SystemConfig::desk();
        let (_, cs) = sample_channel(&cfg, &desk_model(), 5).unwrap();
        // unit noise level keeps the estimate unchanged
        let unit = scale_channels(&cs, &[1.0, 1.0], &[0.1, 0.1]).unwrap();
        for (u0, u1) in cs.users.iter().zip(&unit.users) {
            assert_eq!(u1.scaled, u0.estimated);
        }
        let scaled = scale_channels(&cs, &[2.0, 2.0], &[0.1, 0.1]).unwrap();
        for (u0, u1) in cs.users.iter().zip(&scaled.users) {
            let expect = &u0.estimated / cx(2.0, 0.0);
            assert_eq!(u1.scaled, expect);
            assert!((u1.scaled.norm() - u0.estimated.norm() / 2.0).abs() < 1e-12);
            assert!((u1.scaled_error_std - 0.05).abs() < 1e-15);
        }
        assert!(scale_channels(&cs, &[0.0, 1.0], &[0.1, 0.1]).is_err());
    }

    #[test]
    fn effective_csi_shapes_and_identity() {
        let cfg = SystemConfig::desk();
        let (_, cs) = sample_channel(&cfg, &desk_model(), 9).unwrap();
        let t = CMat::identity(cfg.tx_antennas, cfg.tx_antennas);
        let f: Vec<CMat> = cfg
            .rx_antennas
            .iter()
            .map(|&n| CMat::identity(n, n))
            .collect();
        let eff = effective_csi(&cs, &f, &t).unwrap();
        for (e, u) in eff.iter().zip(&cs.users) {
            assert_eq!(e, &u.scaled);
        }

        // contract shapes with real combiner sizes
        let t = CMat::from_element(cfg.tx_antennas, cfg.tx_chains, cx(1.0, 0.0));
        let f: Vec<CMat> = (0..cfg.users)
            .map(|m| CMat::from_element(cfg.rx_chains[m], cfg.rx_antennas[m], cx(1.0, 0.0)))
            .collect();
        let eff = effective_csi(&cs, &f, &t).unwrap();
        for (m, e) in eff.iter().enumerate() {
            assert_eq!(e.shape(), (cfg.rx_chains[m], cfg.tx_chains));
        }

        // zero channel maps to zero effective channel
        let mut zeroed = cs.clone();
        for u in &mut zeroed.users {
            u.scaled = CMat::zeros(u.scaled.nrows(), u.scaled.ncols());
        }
        let eff = effective_csi(&zeroed, &f, &t).unwrap();
        assert!(eff.iter().all(|e| e.norm() == 0.0));
    }

    #[test]
    fn dump_rays_has_header_and_rows() {
        let cfg = SystemConfig::desk();
        let model = desk_model();
        let (params, _) = sample_channel(&cfg, &model, 1).unwrap();
        let mut buf = Vec::new();
        dump_rays(&params, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("user,cluster,ray"));
        assert_eq!(
            lines.len(),
            1 + cfg.users * model.clusters * model.rays_per_cluster
        );
    }

    #[test]
    fn process_estimates_are_reproducible() {
        let cfg = SystemConfig::desk();
        let mut model = desk_model();
        model.doppler_hz = 100.0;
        let proc = ChannelProcess::new(&cfg, &model, 77).unwrap();
        let a = proc.estimate_at(&cfg, 1e-3, 4).unwrap();
        let b = proc.estimate_at(&cfg, 1e-3, 4).unwrap();
        assert_eq!(a.users[0].estimated, b.users[0].estimated);
        let c = proc.estimate_at(&cfg, 1e-3, 5).unwrap();
        assert_ne!(a.users[0].estimated, c.users[0].estimated);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn array_response_is_unit_norm(theta in -1.5f64..1.5, n in 1usize..40) {
            let a = array_response(theta, n, std::f64::consts::PI).unwrap();
            prop_assert!((a.norm() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn evolve_composes(seed in 0u64..500, t1 in 0f64..5e-3, t2 in 0f64..5e-3) {
            let cfg = SystemConfig::desk();
            let model = desk_model();
            let (params, _) = sample_channel(&cfg, &model, seed).unwrap();
            let fd = 180.0;
            let two_step = evolve_channel(&evolve_channel(&params[0], t1, fd).unwrap(), t2, fd).unwrap();
            let one_step = evolve_channel(&params[0], t1 + t2, fd).unwrap();
            let h2 = assemble_channel(&two_step, 4, 8, model.spacing_phase).unwrap();
            let h1 = assemble_channel(&one_step, 4, 8, model.spacing_phase).unwrap();
            prop_assert!((h2 - h1).norm() < 1e-9);
        }
    }
}
