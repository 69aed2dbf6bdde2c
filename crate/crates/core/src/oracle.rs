//! Independent verification utilities: random feasible instances,
//! finite-difference gradients, phase grid search, a derivative-free
//! quadratic block minimizer, and the closed-form square-QAM AWGN symbol
//! error rate. Everything here recomputes quantities through routes
//! deliberately different from the production code paths it is used to
//! check.

use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{cx, CMat, Permutation, RMat};
use crate::objective::TransceiverState;

pub fn random_complex(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    cx(re, im) / std::f64::consts::SQRT_2
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| random_complex(rng))
}

pub fn random_unit_modulus(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        let phase = rng.random::<f64>() * std::f64::consts::TAU;
        cx(phase.cos(), phase.sin())
    })
}

pub fn random_permutation(rng: &mut ChaCha8Rng, n: usize) -> Permutation {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    Permutation::new(order).expect("shuffled identity")
}

/// Random feasible state plus matching random channels for a small system:
/// analog entries exactly unit modulus, U unit lower triangular, random L.
///
/// `streams[m]` data streams per user; every user gets `rx_chains` chains and
/// `rx_antennas` antennas.
pub fn random_instance(
    rng: &mut ChaCha8Rng,
    rx_chains: usize,
    tx_antennas: usize,
    rx_antennas: usize,
    streams: &[usize],
) -> (TransceiverState, Vec<CMat>) {
    let users = streams.len();
    let d: usize = streams.iter().sum();
    let tx_chains = d.max(2);
    let rx_digital = streams
        .iter()
        .map(|&dm| random_matrix(rng, dm, rx_chains))
        .collect();
    let rx_analog = (0..users)
        .map(|_| random_unit_modulus(rng, rx_chains, rx_antennas))
        .collect();
    let tx_analog = random_unit_modulus(rng, tx_antennas, tx_chains);
    let tx_digital = random_matrix(rng, tx_chains, d);
    let mut feedback = CMat::identity(d, d);
    for i in 0..d {
        for j in 0..i {
            feedback[(i, j)] = random_complex(rng);
        }
    }
    let ordering = random_permutation(rng, d);
    let channels = (0..users)
        .map(|_| random_matrix(rng, rx_antennas, tx_antennas))
        .collect();
    (
        TransceiverState {
            rx_digital,
            rx_analog,
            tx_analog,
            tx_digital,
            feedback,
            ordering,
        },
        channels,
    )
}

/// Central finite differences of a real function over the real and imaginary
/// parts of one complex matrix, reported as the conjugate Wirtinger gradient
/// ∂f/∂X* = (∂f/∂Re + j ∂f/∂Im)/2.
pub fn fd_wirtinger_grad<F>(x: &CMat, h: f64, mut f: F) -> CMat
where
    F: FnMut(&CMat) -> f64,
{
    let mut grad = CMat::zeros(x.nrows(), x.ncols());
    let mut probe = x.clone();
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            let base = x[(i, j)];
            probe[(i, j)] = base + cx(h, 0.0);
            let fp = f(&probe);
            probe[(i, j)] = base - cx(h, 0.0);
            let fm = f(&probe);
            let d_re = (fp - fm) / (2.0 * h);
            probe[(i, j)] = base + cx(0.0, h);
            let fp = f(&probe);
            probe[(i, j)] = base - cx(0.0, h);
            let fm = f(&probe);
            let d_im = (fp - fm) / (2.0 * h);
            probe[(i, j)] = base;
            grad[(i, j)] = cx(d_re / 2.0, d_im / 2.0);
        }
    }
    grad
}

/// Central finite differences over a real matrix (e.g. a phase matrix).
pub fn fd_real_grad<F>(x: &RMat, h: f64, mut f: F) -> RMat
where
    F: FnMut(&RMat) -> f64,
{
    let mut grad = RMat::zeros(x.nrows(), x.ncols());
    let mut probe = x.clone();
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            let base = x[(i, j)];
            probe[(i, j)] = base + h;
            let fp = f(&probe);
            probe[(i, j)] = base - h;
            let fm = f(&probe);
            probe[(i, j)] = base;
            grad[(i, j)] = (fp - fm) / (2.0 * h);
        }
    }
    grad
}

/// Minimizes f(e^{jθ}) over a uniform phase grid; returns the best phase.
pub fn phase_grid_search<F>(points: usize, mut f: F) -> f64
where
    F: FnMut(Complex64) -> f64,
{
    let mut best_phase = 0.0;
    let mut best_value = f64::INFINITY;
    for k in 0..points {
        let phase = std::f64::consts::TAU * k as f64 / points as f64;
        let value = f(cx(phase.cos(), phase.sin()));
        if value < best_value {
            best_value = value;
            best_phase = phase;
        }
    }
    best_phase
}

/// Derivative-free minimizer for a convex quadratic over the real/imaginary
/// parts of one complex matrix block: nonlinear conjugate gradients on
/// finite-difference gradients with exact quadratic line search, restarted
/// periodically. On a quadratic this terminates (up to finite-difference
/// noise) within a few sweeps over the dimension count, independent of any
/// closed-form solution it is used to validate.
pub fn quadratic_block_minimizer<F>(x0: &CMat, iters: usize, mut f: F) -> CMat
where
    F: FnMut(&CMat) -> f64,
{
    let mut x = x0.clone();
    let h = 1e-5;
    let dims = 2 * x0.nrows() * x0.ncols();
    let mut grad = fd_wirtinger_grad(&x, h, &mut f);
    let mut dir = -&grad;
    for step in 0..iters {
        if grad.norm() < 1e-13 {
            break;
        }
        // exact line search on a 1-D quadratic: sample f at t = 0, 1, 2
        let f0 = f(&x);
        let f1 = f(&(&x + &dir));
        let f2 = f(&(&x + &dir * cx(2.0, 0.0)));
        let denom = f2 - 2.0 * f1 + f0;
        let t = if denom.abs() < 1e-300 {
            1.0
        } else {
            (3.0 * f0 - 4.0 * f1 + f2) / (2.0 * denom)
        };
        let cand = &x + &dir * cx(t, 0.0);
        if f(&cand) <= f0 {
            x = cand;
        } else if f1 <= f0 {
            x = &x + &dir;
        }
        let next_grad = fd_wirtinger_grad(&x, h, &mut f);
        // Polak–Ribière with periodic steepest-descent restarts
        let beta = if (step + 1) % dims.max(4) == 0 {
            0.0
        } else {
            let num: f64 = next_grad
                .iter()
                .zip(grad.iter())
                .map(|(n, o)| (n.conj() * (n - o)).re)
                .sum();
            (num / grad.norm_squared().max(1e-300)).max(0.0)
        };
        dir = -&next_grad + &dir * cx(beta, 0.0);
        grad = next_grad;
    }
    x
}

/// Exact symbol error probability of square M-QAM over AWGN at symbol SNR
/// Es/N0 with a conventional nearest-point slicer:
/// 1 − (1 − 2(1−1/√M)Q(√(3 Es/N0 /(M−1))))².
pub fn awgn_qam_ser(order: u32, es_n0: f64) -> f64 {
    let m = order as f64;
    let arg = (3.0 * es_n0 / (m - 1.0)).sqrt();
    let q = 0.5 * erfc_scalar(arg / std::f64::consts::SQRT_2);
    let p_dim = 2.0 * (1.0 - 1.0 / m.sqrt()) * q;
    1.0 - (1.0 - p_dim) * (1.0 - p_dim)
}

/// Symbol error probability of square M-QAM when the receiver folds into the
/// modulo period before slicing: the fold puts an error boundary on the
/// outside of the outer points too, so every dimension is two-sided and
/// SER = 1 − (1 − 2Q(√(3 Es/N0 /(M−1))))².
pub fn awgn_qam_ser_with_modulo(order: u32, es_n0: f64) -> f64 {
    let m = order as f64;
    let arg = (3.0 * es_n0 / (m - 1.0)).sqrt();
    let q = 0.5 * erfc_scalar(arg / std::f64::consts::SQRT_2);
    let p_dim = 2.0 * q;
    1.0 - (1.0 - p_dim) * (1.0 - p_dim)
}

/// Complementary error function via the Abramowitz–Stegun 7.1.26 rational
/// polynomial (absolute error below 1.5e−7, plenty for SER comparisons).
pub fn erfc_scalar(x: f64) -> f64 {
    let sign_negative = x < 0.0;
    let x_abs = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x_abs);
    let poly = t
        * (0.254829592 + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    let erf = 1.0 - poly * (-x_abs * x_abs).exp();
    let erf = if sign_negative { -erf } else { erf };
    1.0 - erf
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_gradient_of_quadratic() {
        // f(X) = ‖X − A‖² has ∂f/∂X* = X − A.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_matrix(&mut rng, 3, 2);
        let x = random_matrix(&mut rng, 3, 2);
        let g = fd_wirtinger_grad(&x, 1e-6, |m| (m - &a).norm_squared());
        let expect = &x - &a;
        assert!((g - expect).norm() < 1e-7);
    }

    #[test]
    fn grid_search_finds_alignment() {
        // min over |x|=1 of −Re(b̄* x) is the phase of b̄
        let b = cx(-1.0, 2.0);
        let phase = phase_grid_search(4096, |x| -(b.conj() * x).re);
        let diff = (phase - b.arg()).rem_euclid(std::f64::consts::TAU);
        let diff = diff.min(std::f64::consts::TAU - diff);
        assert!(diff <= std::f64::consts::TAU / 4096.0 + 1e-12);
    }

    #[test]
    fn quadratic_minimizer_reaches_center() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let center = random_matrix(&mut rng, 2, 2);
        let x0 = random_matrix(&mut rng, 2, 2);
        let got = quadratic_block_minimizer(&x0, 40, |m| (m - &center).norm_squared());
        assert!((got - &center).norm() < 1e-6);
    }

    #[test]
    fn erfc_reference_points() {
        assert!((erfc_scalar(0.0) - 1.0).abs() < 2e-7);
        assert!((erfc_scalar(1.0) - 0.157299).abs() < 2e-6);
        assert!((erfc_scalar(-1.0) - 1.842701).abs() < 2e-6);
        assert!(erfc_scalar(5.0) < 2e-7);
    }

    #[test]
    fn qam_ser_sanity() {
        // 16-QAM at 20 dB symbol SNR sits near 1.2e-5; monotone in SNR.
        let p20 = awgn_qam_ser(16, 100.0);
        assert!(p20 > 5e-6 && p20 < 5e-5, "{p20}");
        assert!(awgn_qam_ser(16, 10.0) > p20);
    }
}
