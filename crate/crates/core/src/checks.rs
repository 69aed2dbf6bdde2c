//! The acceptance suite: every release criterion as an executable check
//! with pinned tolerances, shared between the `acceptance` integration
//! tests and the CLI `check` subcommand.
//!
//! `quick` mode trims seed counts and symbol budgets for interactive runs;
//! the pass rules never change.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::baselines;
use crate::bcd::{self, BcdSettings, ExitReason};
use crate::channel::{sample_channel, ChannelProcess};
use crate::config::{ChannelModel, SystemConfig};
use crate::error::Result;
use crate::harness::{
    self, delay_ratio, feedback_overhead, simulate_ser, Algorithm, OverheadMode,
};
use crate::linalg::{cx, phase_project, vec_lt, CMat, Permutation, C_ONE, C_ZERO};
use crate::objective::{self, mse_sigma};
use crate::oracle;
use crate::thp::{order_users, thp_encode, QamConstellation, ThpState};
use crate::tosca::{self, PhaseInit, Timeline};

/// Result of one acceptance criterion.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub details: String,
}

impl CheckOutcome {
    fn new(name: &'static str, passed: bool, details: String) -> Self {
        CheckOutcome {
            name,
            passed,
            details,
        }
    }
}

/// Four-user fully loaded desk-scale system (chains = streams at the BS):
/// the regime where interference pre-subtraction and robustness effects are
/// first-order, used by the comparative criteria.
pub fn desk_loaded() -> SystemConfig {
    SystemConfig {
        users: 4,
        tx_antennas: 16,
        tx_chains: 4,
        rx_antennas: vec![4; 4],
        rx_chains: vec![2; 4],
        streams: vec![1; 4],
        qam_order: 16,
        power_budget: 100.0,
        noise_std: vec![1.0; 4],
        csi_error_std: vec![0.1; 4],
    }
}

/// Criterion 1: per-block monotonicity and convergence of the joint solver
/// within 500 iterations at 20 dB on the desk configuration.
pub fn bcd_monotonicity(quick: bool) -> CheckOutcome {
    let seeds = if quick { 8 } else { 50 };
    let cfg = SystemConfig::desk().with_snr_db(20.0);
    let model = ChannelModel::default();
    let settings = BcdSettings::default().with_audit();
    let mut max_iters = 0usize;
    let mut worst_increase: f64 = 0.0;
    let mut converged = 0usize;
    for seed in 0..seeds {
        let outcome = (|| -> Result<(bool, usize, f64)> {
            let (_, cs) = sample_channel(&cfg, &model, seed)?;
            let ordering = order_users(&cs.scaled_norms_sq(), &cfg.streams);
            let (_, trace) = bcd::solve(&cfg, &cs, &ordering, &settings)?;
            let mut worst = 0.0f64;
            for pair in trace.block_objective.windows(2) {
                let rise = (pair[1] - pair[0]) / pair[0].abs().max(1e-300);
                worst = worst.max(rise);
            }
            Ok((
                trace.exit == ExitReason::Converged,
                trace.iterations,
                worst,
            ))
        })();
        match outcome {
            Ok((conv, iters, worst)) => {
                converged += conv as usize;
                max_iters = max_iters.max(iters);
                worst_increase = worst_increase.max(worst);
            }
            Err(e) => {
                return CheckOutcome::new(
                    "bcd-monotonicity",
                    false,
                    format!("seed {seed} failed: {e}"),
                )
            }
        }
    }
    let passed = converged == seeds as usize && max_iters <= 500 && worst_increase <= 1e-10;
    CheckOutcome::new(
        "bcd-monotonicity",
        passed,
        format!(
            "{converged}/{seeds} converged, max iterations {max_iters}, worst relative block increase {worst_increase:.2e}"
        ),
    )
}

/// Criterion 2: closed-form block updates match independent numerical
/// minimizers within 1e−6; unit-modulus entry updates match a 4096-point
/// phase grid search within grid resolution.
pub fn closed_form_oracles(quick: bool) -> CheckOutcome {
    let instances = if quick { 6 } else { 20 };
    let entry_budget = if quick { 24 } else { 100 };
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_block: f64 = 0.0;
    for _ in 0..instances {
        let (state, channels) = oracle::random_instance(&mut rng, 3, 4, 4, &[2, 2]);
        let refs: Vec<&CMat> = channels.iter().collect();
        let err = vec![0.15, 0.1];
        let p_t = 2.0;

        let (p_new, _) = match bcd::update_p(&state, &refs, &err, p_t) {
            Ok(v) => v,
            Err(e) => return CheckOutcome::new("closed-form-oracles", false, e.to_string()),
        };
        let op = oracle::quadratic_block_minimizer(&state.rx_digital[0], 400, |c| {
            let mut s = state.clone();
            s.rx_digital[0] = c.clone();
            mse_sigma(&s, &refs, &err, p_t).unwrap()
        });
        worst_block = worst_block.max((&p_new[0] - &op).norm());

        let (w_new, _) = bcd::update_w(&state, &refs, &err, p_t).unwrap();
        let ow = oracle::quadratic_block_minimizer(&state.tx_digital, 400, |c| {
            let mut s = state.clone();
            s.tx_digital = c.clone();
            mse_sigma(&s, &refs, &err, p_t).unwrap()
        });
        worst_block = worst_block.max((&w_new - &ow).norm());

        let u_new = bcd::update_u(&state, &refs).unwrap();
        let ou = oracle::quadratic_block_minimizer(&state.feedback, 400, |c| {
            let mut u = c.clone();
            let d = u.nrows();
            for i in 0..d {
                for j in i..d {
                    u[(i, j)] = if i == j { C_ONE } else { C_ZERO };
                }
            }
            let mut s = state.clone();
            s.feedback = u;
            mse_sigma(&s, &refs, &err, p_t).unwrap()
        });
        worst_block =
            worst_block.max((vec_lt(&u_new).unwrap() - vec_lt(&ou).unwrap()).norm());
    }

    // element-wise unit-modulus updates against the brute-force phase grid:
    // per entry, evaluate the production coefficient rule at the current
    // state, compare its phase to the 4096-point minimizer of the true
    // objective restricted to that entry, then apply and move on
    let grid = 4096;
    let resolution = std::f64::consts::TAU / grid as f64;
    let mut worst_phase: f64 = 0.0;
    let mut checked = 0usize;
    'outer: while checked < entry_budget {
        let (mut state, channels) = oracle::random_instance(&mut rng, 2, 3, 2, &[1, 1]);
        let refs: Vec<&CMat> = channels.iter().collect();
        let err = vec![0.15, 0.05];
        let p_t = 1.5;
        for target in 0..2u8 {
            let (rows, cols) = if target == 0 {
                state.rx_analog[0].shape()
            } else {
                state.tx_analog.shape()
            };
            for i in 0..rows {
                for j in 0..cols {
                    let best = oracle::phase_grid_search(grid, |cand| {
                        let mut s = state.clone();
                        if target == 0 {
                            s.rx_analog[0][(i, j)] = cand;
                        } else {
                            s.tx_analog[(i, j)] = cand;
                        }
                        mse_sigma(&s, &refs, &err, p_t).unwrap()
                    });
                    let (a, b, c) = if target == 0 {
                        bcd::rx_analog_coeffs(&state, refs[0], err[0], p_t, 0)
                    } else {
                        bcd::tx_analog_coeffs(&state, &refs, &err, p_t)
                    };
                    let x = if target == 0 {
                        &state.rx_analog[0]
                    } else {
                        &state.tx_analog
                    };
                    let bbar = bcd::entry_coefficient(x, &a, &b, &c, i, j);
                    if let Some(next) = phase_project(bbar) {
                        let diff = (next.arg() - best).rem_euclid(std::f64::consts::TAU);
                        let diff = diff.min(std::f64::consts::TAU - diff);
                        worst_phase = worst_phase.max(diff);
                        checked += 1;
                        if target == 0 {
                            state.rx_analog[0][(i, j)] = next;
                        } else {
                            state.tx_analog[(i, j)] = next;
                        }
                    }
                    if checked >= entry_budget {
                        break 'outer;
                    }
                }
            }
        }
    }
    let passed = worst_block <= 1e-6 && worst_phase <= resolution + 1e-9;
    CheckOutcome::new(
        "closed-form-oracles",
        passed,
        format!(
            "worst block gap {worst_block:.2e} (tol 1e-6); worst entry phase error {worst_phase:.2e} over {checked} entries (grid resolution {resolution:.2e})"
        ),
    )
}

/// Criterion 3: analog-matrix gradients and the phase chain rule agree with
/// central finite differences of the sum MSE within 1e−5 relative; phase
/// gradients are real to 1e−12.
pub fn gradient_correctness(quick: bool) -> CheckOutcome {
    let states = if quick { 6 } else { 20 };
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut worst: f64 = 0.0;
    for _ in 0..states {
        let (state, channels) = oracle::random_instance(&mut rng, 2, 3, 2, &[1, 1]);
        let refs: Vec<&CMat> = channels.iter().collect();
        let sigma = vec![0.9, 1.1];
        let sigma_e = vec![0.2, 0.1];
        let (gt, gf) = match tosca::gradients_analog(&state, &refs, &sigma, &sigma_e) {
            Ok(v) => v,
            Err(e) => return CheckOutcome::new("gradient-correctness", false, e.to_string()),
        };
        let fd_t = oracle::fd_wirtinger_grad(&state.tx_analog, 1e-6, |cand| {
            let mut s = state.clone();
            s.tx_analog = cand.clone();
            objective::mse(&s, &refs, &sigma, &sigma_e).unwrap()
        });
        worst = worst.max((&gt - &fd_t).norm() / (1.0 + gt.norm()));
        for m in 0..2 {
            let fd_f = oracle::fd_wirtinger_grad(&state.rx_analog[m], 1e-6, |cand| {
                let mut s = state.clone();
                s.rx_analog[m] = cand.clone();
                objective::mse(&s, &refs, &sigma, &sigma_e).unwrap()
            });
            worst = worst.max((&gf[m] - &fd_f).norm() / (1.0 + gf[m].norm()));
        }
        // phase chain rule vs per-angle finite differences; the realness
        // gate (1e−12) lives inside gradients_phase
        let (pt, _) = match tosca::gradients_phase(&state, &gt, &gf) {
            Ok(v) => v,
            Err(e) => {
                return CheckOutcome::new(
                    "gradient-correctness",
                    false,
                    format!("imaginary residue: {e}"),
                )
            }
        };
        let theta0 = state.tx_analog.map(|z| z.arg());
        let fd_theta = oracle::fd_real_grad(&theta0, 1e-6, |angles| {
            let mut s = state.clone();
            s.tx_analog = angles.map(|p| cx(p.cos(), p.sin()));
            objective::mse(&s, &refs, &sigma, &sigma_e).unwrap()
        });
        worst = worst.max((&pt - &fd_theta).norm() / (1.0 + pt.norm()));
    }
    CheckOutcome::new(
        "gradient-correctness",
        worst <= 1e-5,
        format!("worst relative gradient deviation {worst:.2e} over {states} states (tol 1e-5)"),
    )
}

/// Criterion 4: after the power scaling, |‖TW̄‖² − P_t| < 1e−9 and converged
/// states satisfy the first-order system of the power-constrained problem
/// with scaled residuals ≤ 1e−3 and the closed-form multiplier.
pub fn power_scaling_kkt(quick: bool) -> CheckOutcome {
    let seeds = if quick { 3 } else { 10 };
    let cfg = SystemConfig::desk().with_snr_db(20.0);
    let model = ChannelModel::default();
    let settings = BcdSettings::default()
        .with_tolerance(1e-10)
        .with_max_iterations(3000);
    let mut worst_slack: f64 = 0.0;
    let mut worst_resid: f64 = 0.0;
    let mut worst_mult_gap: f64 = 0.0;
    for seed in 0..seeds {
        let result = (|| -> Result<(f64, f64, f64)> {
            let (_, cs) = sample_channel(&cfg, &model, seed)?;
            let ordering = order_users(&cs.scaled_norms_sq(), &cfg.streams);
            let (state, _) = bcd::solve(&cfg, &cs, &ordering, &settings)?;
            let est = cs.estimated();
            let report = objective::kkt_residual(
                &state,
                &est,
                &cfg.noise_std,
                &cfg.csi_error_std,
                cfg.power_budget,
            )?;
            let hand: f64 = state
                .rx_digital
                .iter()
                .zip(&state.rx_analog)
                .zip(&cfg.noise_std)
                .map(|((p, f), s)| s * s / cfg.power_budget * (p * f).norm_squared())
                .sum();
            Ok((
                report.power_slack,
                report.max_scaled(),
                (report.multiplier - hand).abs(),
            ))
        })();
        match result {
            Ok((slack, resid, gap)) => {
                worst_slack = worst_slack.max(slack);
                worst_resid = worst_resid.max(resid);
                worst_mult_gap = worst_mult_gap.max(gap);
            }
            Err(e) => return CheckOutcome::new("power-scaling-kkt", false, e.to_string()),
        }
    }
    let passed = worst_slack < 1e-9 && worst_resid <= 1e-3 && worst_mult_gap < 1e-12;
    CheckOutcome::new(
        "power-scaling-kkt",
        passed,
        format!(
            "worst power slack {worst_slack:.2e} (tol 1e-9), worst scaled residual {worst_resid:.2e} (tol 1e-3), multiplier identity gap {worst_mult_gap:.2e}"
        ),
    )
}

/// Criterion 5: the feedback stage's MSE advantage equals −‖Δ(LĀTW)‖²
/// within 1e−8 on converged states, and is never positive.
pub fn thp_gain_identity(quick: bool) -> CheckOutcome {
    let seeds = if quick { 3 } else { 10 };
    let cfg = SystemConfig::desk().with_snr_db(15.0);
    let model = ChannelModel::default();
    let settings = BcdSettings::default();
    let mut worst: f64 = 0.0;
    let mut max_gain = f64::NEG_INFINITY;
    for seed in 0..seeds {
        let result = (|| -> Result<(f64, f64)> {
            let (_, cs) = sample_channel(&cfg, &model, seed)?;
            let ordering = order_users(&cs.scaled_norms_sq(), &cfg.streams);
            let (mut state, _) = bcd::solve(&cfg, &cs, &ordering, &settings)?;
            let scaled = cs.scaled();
            let errs = cs.scaled_error_std();
            // refresh the feedback stage so it is exactly optimal for the
            // current linear stages
            state.feedback = bcd::update_u(&state, &scaled)?;
            let with_feedback = mse_sigma(&state, &scaled, &errs, cfg.power_budget)?;
            let mut linear = state.clone();
            let d = linear.total_streams();
            linear.feedback = CMat::identity(d, d);
            let without = mse_sigma(&linear, &scaled, &errs, cfg.power_budget)?;
            let gain = crate::thp::thp_gain(
                &state.rx_digital,
                &state.rx_analog,
                &state.tx_analog,
                &state.tx_digital,
                &state.ordering,
                &scaled.iter().map(|h| (*h).clone()).collect::<Vec<_>>(),
            )?;
            Ok(((with_feedback - without - gain).abs(), gain))
        })();
        match result {
            Ok((gap, gain)) => {
                worst = worst.max(gap);
                max_gain = max_gain.max(gain);
            }
            Err(e) => return CheckOutcome::new("thp-gain-identity", false, e.to_string()),
        }
    }
    let passed = worst <= 1e-8 && max_gain <= 0.0;
    CheckOutcome::new(
        "thp-gain-identity",
        passed,
        format!("worst identity gap {worst:.2e} (tol 1e-8), largest gain {max_gain:.2e} (must be ≤ 0)"),
    )
}

fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 1 {
        return vec![vec![0]];
    }
    let mut out = Vec::new();
    for p in all_permutations(n - 1) {
        for k in 0..n {
            let mut q: Vec<usize> = p.iter().map(|&v| if v >= k { v + 1 } else { v }).collect();
            q.insert(0, k);
            out.push(q);
        }
    }
    out
}

/// Criterion 6: the ordering heuristic maximizes the weighted norm sum
/// (brute force up to 6 users) and beats random orderings on mean MSE.
pub fn ordering_optimality(quick: bool) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mut worst_defect: f64 = 0.0;
    for n in 1..=6usize {
        for _ in 0..20 {
            let norms: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 10.0).collect();
            let chosen = order_users(&norms, &vec![1usize; n]);
            let weighted = |order: &[usize]| -> f64 {
                order
                    .iter()
                    .enumerate()
                    .map(|(i, &u)| (i + 1) as f64 * norms[u])
                    .sum()
            };
            let best = all_permutations(n)
                .iter()
                .map(|p| weighted(p))
                .fold(f64::NEG_INFINITY, f64::max);
            worst_defect = worst_defect.max(best - weighted(chosen.order()));
        }
    }

    let seeds = if quick { 8 } else { 30 };
    let cfg = desk_loaded().with_snr_db(20.0);
    let model = ChannelModel::default();
    let settings = BcdSettings::default();
    let mut proposed = 0.0;
    let mut random = 0.0;
    for seed in 0..seeds {
        let outcome = (|| -> Result<(f64, f64)> {
            let (_, cs) = sample_channel(&cfg, &model, seed)?;
            let est = cs.estimated();
            let ordering = order_users(&cs.scaled_norms_sq(), &cfg.streams);
            let (s1, _) = bcd::solve(&cfg, &cs, &ordering, &settings)?;
            let m1 = objective::mse(&s1, &est, &cfg.noise_std, &cfg.csi_error_std)?;
            let mut shuffle_rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            let mut order: Vec<usize> = (0..cfg.total_streams()).collect();
            order.shuffle(&mut shuffle_rng);
            let (s2, _) = bcd::solve(&cfg, &cs, &Permutation::new(order)?, &settings)?;
            let m2 = objective::mse(&s2, &est, &cfg.noise_std, &cfg.csi_error_std)?;
            Ok((m1, m2))
        })();
        match outcome {
            Ok((m1, m2)) => {
                proposed += m1;
                random += m2;
            }
            Err(e) => return CheckOutcome::new("ordering-optimality", false, e.to_string()),
        }
    }
    let passed = worst_defect <= 1e-12 && proposed <= random;
    CheckOutcome::new(
        "ordering-optimality",
        passed,
        format!(
            "brute-force defect {worst_defect:.2e}; mean MSE proposed {:.5} vs random {:.5} over {seeds} seeds",
            proposed / seeds as f64,
            random / seeds as f64
        ),
    )
}

/// Criterion 7: mean converged MSE and SER orderings across the algorithm
/// family at 10 and 20 dB on the loaded desk system.
pub fn baseline_ordering(quick: bool) -> CheckOutcome {
    let seeds = if quick { 6 } else { 20 };
    let symbols = if quick { 20_000 } else { 100_000 };
    let model = ChannelModel::default();
    let settings = BcdSettings::default();
    let mut details = String::new();
    let mut passed = true;
    for snr in [10.0, 20.0] {
        let cfg = desk_loaded().with_snr_db(snr);
        let mut mse = std::collections::HashMap::new();
        let mut ser = std::collections::HashMap::new();
        for algo in Algorithm::ALL_SINGLE_TIMESCALE {
            let mut m = 0.0;
            let mut s = 0.0;
            for seed in 0..seeds {
                match harness::run_single_cell(algo, &cfg, &model, seed, symbols, &settings) {
                    Ok(c) => {
                        m += c.mse;
                        s += c.ser;
                    }
                    Err(e) => {
                        return CheckOutcome::new("baseline-ordering", false, e.to_string())
                    }
                }
            }
            mse.insert(algo, m / seeds as f64);
            ser.insert(algo, s / seeds as f64);
        }
        let chains: [(&str, Algorithm, Algorithm); 7] = [
            ("fd ≤ nonlinear-joint", Algorithm::Fd, Algorithm::NonlinearJoint),
            (
                "nonlinear-joint ≤ nonlinear-separate",
                Algorithm::NonlinearJoint,
                Algorithm::NonlinearSeparate,
            ),
            (
                "nonlinear-separate ≤ linear-separate",
                Algorithm::NonlinearSeparate,
                Algorithm::LinearSeparate,
            ),
            (
                "nonlinear-joint ≤ linear-joint",
                Algorithm::NonlinearJoint,
                Algorithm::LinearJoint,
            ),
            (
                "linear-joint ≤ linear-separate",
                Algorithm::LinearJoint,
                Algorithm::LinearSeparate,
            ),
            (
                "linear-joint ≤ zf",
                Algorithm::LinearJoint,
                Algorithm::Zf,
            ),
            (
                "linear-separate ≤ zf",
                Algorithm::LinearSeparate,
                Algorithm::Zf,
            ),
        ];
        for (label, lo, hi) in chains {
            for (metric, table) in [("mse", &mse), ("ser", &ser)] {
                let ok = table[&lo] <= table[&hi];
                if !ok {
                    passed = false;
                    details.push_str(&format!(
                        "VIOLATED {metric} {label} at {snr} dB: {:.5} vs {:.5}; ",
                        table[&lo], table[&hi]
                    ));
                }
            }
        }
        details.push_str(&format!(
            "snr {snr}: mse fd {:.4} nlj {:.4} nls {:.4} lj {:.4} ls {:.4} zf {:.4}; ser nlj {:.4} lj {:.4}; ",
            mse[&Algorithm::Fd],
            mse[&Algorithm::NonlinearJoint],
            mse[&Algorithm::NonlinearSeparate],
            mse[&Algorithm::LinearJoint],
            mse[&Algorithm::LinearSeparate],
            mse[&Algorithm::Zf],
            ser[&Algorithm::NonlinearJoint],
            ser[&Algorithm::LinearJoint],
        ));
        // SER levels must be in the resolvable regime
        if ser[&Algorithm::NonlinearJoint] < 1e-3 {
            passed = false;
            details.push_str("SER below the 1e-3 comparison floor; ");
        }
    }
    CheckOutcome::new("baseline-ordering", passed, details)
}

/// Criterion 8: robust mean SER ≤ nonrobust at 20 dB and the gap does not
/// decrease over SNR ∈ {10, 15, 20} dB at σ_e = 0.1. The measured gaps are
/// small, so this check always runs its full seed and symbol budget.
pub fn robustness_study(_quick: bool) -> CheckOutcome {
    let seeds = 20;
    let symbols = 100_000;
    let model = ChannelModel::default();
    let settings = BcdSettings::default();
    let mut gaps = Vec::new();
    let mut details = String::new();
    let mut robust_at_20 = 0.0;
    let mut nonrobust_at_20 = 0.0;
    for snr in [10.0, 15.0, 20.0] {
        let cfg = desk_loaded().with_snr_db(snr);
        let mut robust = 0.0;
        let mut nonrobust = 0.0;
        for seed in 0..seeds {
            match harness::robust_vs_nonrobust(&cfg, &model, seed, symbols, &settings) {
                Ok(p) => {
                    robust += p.ser_robust;
                    nonrobust += p.ser_nonrobust;
                }
                Err(e) => return CheckOutcome::new("robustness", false, e.to_string()),
            }
        }
        robust /= seeds as f64;
        nonrobust /= seeds as f64;
        gaps.push(nonrobust - robust);
        details.push_str(&format!(
            "snr {snr}: robust {robust:.5} nonrobust {nonrobust:.5} gap {:+.5}; ",
            nonrobust - robust
        ));
        if snr == 20.0 {
            robust_at_20 = robust;
            nonrobust_at_20 = nonrobust;
        }
    }
    let monotone = gaps.windows(2).all(|w| w[1] >= w[0]);
    let passed = robust_at_20 <= nonrobust_at_20 && monotone;
    CheckOutcome::new("robustness", passed, details)
}

/// Criterion 9: the delay-ratio and feedback-overhead formulas reproduce
/// their exact reference values.
pub fn exact_arithmetic(_quick: bool) -> CheckOutcome {
    let paper = SystemConfig::paper();
    let ratio = delay_ratio(&paper);
    let tau_tts_ms = 1.0 / ratio;
    let single = feedback_overhead(1000, 10, &paper, OverheadMode::SingleTimescale);
    let tts = feedback_overhead(1000, 10, &paper, OverheadMode::TwoTimescale);
    let passed = ratio == 16.0
        && (tau_tts_ms - 0.0625).abs() < 1e-15
        && single == 10_240_000
        && tts == 1_600_000;
    CheckOutcome::new(
        "exact-arithmetic",
        passed,
        format!(
            "delay ratio {ratio} (τ=1ms → τ_tts={tau_tts_ms}ms), overhead single {single} vs two-timescale {tts}"
        ),
    )
}

/// Criterion 10: the two-timescale objective plateaus on a static channel
/// within 500 frames, and a delay crossover exists on the desk grid.
pub fn two_timescale_behavior(quick: bool) -> CheckOutcome {
    // plateau on a static process from a flat start
    let plateau_seeds: &[u64] = if quick { &[11] } else { &[11, 23, 91] };
    let mut cfg = SystemConfig::desk().with_snr_db(15.0);
    cfg.csi_error_std = vec![0.05; 2];
    let model = ChannelModel::default();
    let mut details = String::new();
    let mut passed = true;
    for &seed in plateau_seeds {
        let outcome = (|| -> Result<(Option<usize>, f64, f64)> {
            let process = ChannelProcess::new(&cfg, &model, seed)?;
            let timeline = Timeline {
                frames: 500,
                slots_per_frame: 4,
                slot_duration: 1e-4,
                full_csi_delay: 0.0,
                effective_csi_delay: 0.0,
            };
            let report = tosca::run_super_frame(
                &cfg,
                &process,
                &timeline,
                1.0,
                PhaseInit::Flat,
                &BcdSettings::default().with_max_iterations(60),
                None,
            )?;
            let fm = &report.frame_mse;
            let wmean =
                |a: usize, b: usize| fm[a..b].iter().sum::<f64>() / (b - a) as f64;
            let mut hit = None;
            for end in (100..=500).step_by(10) {
                let m1 = wmean(end - 100, end - 50);
                let m2 = wmean(end - 50, end);
                if ((m2 - m1) / m2).abs() < 0.01 {
                    hit = Some(end);
                    break;
                }
            }
            Ok((hit, fm[0], wmean(450, 500)))
        })();
        match outcome {
            Ok((hit, start, tail)) => {
                let ok = hit.is_some() && tail < start;
                passed &= ok;
                details.push_str(&format!(
                    "seed {seed}: plateau at frame {hit:?}, mse {start:.3} → {tail:.3}; "
                ));
            }
            Err(e) => return CheckOutcome::new("two-timescale", false, e.to_string()),
        }
    }

    // delay crossover: single-timescale wins at zero delay, the
    // two-timescale design wins at the largest delay tested
    let seeds: Vec<u64> = if quick { (0..3).collect() } else { (0..8).collect() };
    let symbols = if quick { 8_000 } else { 24_000 };
    let mut dcfg = SystemConfig::desk().with_snr_db(20.0);
    dcfg.csi_error_std = vec![0.05; 2];
    let mut dmodel = ChannelModel::default();
    dmodel.doppler_hz = 200.0;
    let timeline = Timeline {
        frames: 30,
        slots_per_frame: 4,
        slot_duration: 1e-4,
        full_csi_delay: 0.0,
        effective_csi_delay: 0.0,
    };
    match harness::delay_sweep(
        &dcfg,
        &dmodel,
        &timeline,
        &[0.0, 2.0, 4.0],
        &seeds,
        symbols,
        &BcdSettings::default().with_max_iterations(300),
    ) {
        Ok(points) => {
            let mean_at = |d: f64, tts: bool| -> f64 {
                let sel: Vec<f64> = points
                    .iter()
                    .filter(|p| p.delay_ms == d)
                    .map(|p| if tts { p.ser_tts } else { p.ser_single })
                    .collect();
                sel.iter().sum::<f64>() / sel.len() as f64
            };
            let single0 = mean_at(0.0, false);
            let tts0 = mean_at(0.0, true);
            let single4 = mean_at(4.0, false);
            let tts4 = mean_at(4.0, true);
            let crossover = single0 <= tts0 && tts4 <= single4;
            passed &= crossover;
            details.push_str(&format!(
                "delay 0ms: single {single0:.4} vs tts {tts0:.4}; 4ms: single {single4:.4} vs tts {tts4:.4}"
            ));
        }
        Err(e) => return CheckOutcome::new("two-timescale", false, e.to_string()),
    }
    CheckOutcome::new("two-timescale", passed, details)
}

/// Criterion 11: modulo exactness, a clean fully-digital chain decodes with
/// zero errors, and the encoded-symbol covariance matches the identity
/// approximation in its validity regime.
pub fn thp_modulo_suite(_quick: bool) -> CheckOutcome {
    let qam = QamConstellation::new(16).unwrap();
    let mut details = String::new();
    let mut passed = true;

    // modulo range, lattice identity and idempotence
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let a = qam.half_period();
    for _ in 0..5000 {
        let x = (rng.random::<f64>() - 0.5) * 30.0;
        let (v, e) = qam.modulo(x);
        let steps = e / (2.0 * a);
        let ok = v >= -a
            && v < a
            && (steps - steps.round()).abs() < 1e-9
            && qam.modulo(v) == (v, 0.0)
            && (qam.modulo(x + 4.0 * a).0 - v).abs() < 1e-9;
        if !ok {
            passed = false;
            details.push_str(&format!("modulo violation at {x}; "));
            break;
        }
    }

    // noiseless fully-digital chain: zero symbol errors
    let mut cfg = SystemConfig::desk().with_snr_db(20.0);
    cfg.csi_error_std = vec![0.0; 2];
    let model = ChannelModel::default();
    match (|| -> Result<u64> {
        let (_, cs) = sample_channel(&cfg, &model, 1)?;
        let ordering = order_users(&cs.scaled_norms_sq(), &cfg.streams);
        let (state, _) = baselines::fd_solve(&cfg, &cs, &ordering, &BcdSettings::default())?;
        let truth = cs.true_channels();
        let est = cs.estimated();
        let tiny = vec![1e-9; 2];
        let ser = simulate_ser(&state, &truth, &est, &tiny, &qam, 20_000, 2)?;
        Ok(ser.errors)
    })() {
        Ok(errors) => {
            if errors != 0 {
                passed = false;
            }
            details.push_str(&format!("noiseless fd errors {errors}; "));
        }
        Err(e) => return CheckOutcome::new("thp-modulo-suite", false, e.to_string()),
    }

    // second-order whiteness of the encoder in the approximation's
    // validity regime (weak feedback, no wraps): every covariance entry
    // within 3% of the identity. The cross-correlation of an unwrapped
    // entry is exactly −C, so this budget-independent check always uses
    // the full vector count.
    let vectors = 100_000;
    let d = 4;
    let mut c = CMat::zeros(d, d);
    let mut phase_rng = ChaCha8Rng::seed_from_u64(66);
    for i in 0..d {
        for j in 0..i {
            let phase = phase_rng.random::<f64>() * std::f64::consts::TAU;
            c[(i, j)] = cx(phase.cos(), phase.sin()) * 0.015;
        }
    }
    let state = ThpState::new(c, Permutation::identity(d)).unwrap();
    let mut cov = CMat::zeros(d, d);
    for _ in 0..vectors {
        let s = qam.random_vector(&mut phase_rng, d);
        let (x, _) = thp_encode(&s, &state, &qam).unwrap();
        cov += &x * x.adjoint();
    }
    cov /= cx(vectors as f64, 0.0);
    let mut worst_cov: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            let target = if i == j { C_ONE } else { C_ZERO };
            worst_cov = worst_cov.max((cov[(i, j)] - target).norm());
        }
    }
    if worst_cov > 0.03 {
        passed = false;
    }
    details.push_str(&format!(
        "max covariance deviation {worst_cov:.4} at weak feedback (tol 0.03)"
    ));

    CheckOutcome::new("thp-modulo-suite", passed, details)
}

/// Runs the full acceptance suite; `quick` trims the Monte-Carlo budgets.
pub fn run_all(quick: bool) -> Vec<CheckOutcome> {
    vec![
        bcd_monotonicity(quick),
        closed_form_oracles(quick),
        gradient_correctness(quick),
        power_scaling_kkt(quick),
        thp_gain_identity(quick),
        ordering_optimality(quick),
        baseline_ordering(quick),
        robustness_study(quick),
        exact_arithmetic(quick),
        two_timescale_behavior(quick),
        thp_modulo_suite(quick),
    ]
}
