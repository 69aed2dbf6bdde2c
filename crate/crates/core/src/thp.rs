//! QAM alphabet handling, the modulo operator, THP successive encoding and
//! decoding, and the norm-based cancellation-ordering heuristic.

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{cx, strict_lower, unit_lower, CMat, CVec, Permutation};

/// Square QAM constellation with unit average symbol power.
///
/// The per-dimension alphabet is {±d, ±3d, …, ±(√Q−1)d} with
/// d = √(3 / (2(Q−1))), and the modulo half-period A = √(3Q / (2(Q−1)))
/// tiles the constellation exactly under shifts of 2A.
#[derive(Debug, Clone, PartialEq)]
pub struct QamConstellation {
    order: u32,
    step: f64,
    half_period: f64,
    levels: Vec<f64>,
}

impl QamConstellation {
    pub fn new(order: u32) -> Result<Self> {
        if !(order >= 4 && order.is_power_of_two() && order.trailing_zeros() % 2 == 0) {
            return Err(Error::InvalidArgument(format!(
                "QAM order {order} is not a square power of 4"
            )));
        }
        let q = order as f64;
        let step = (3.0 / (2.0 * (q - 1.0))).sqrt();
        let half_period = (3.0 * q / (2.0 * (q - 1.0))).sqrt();
        let side = (order as f64).sqrt() as i64;
        let levels = (0..side)
            .map(|k| (2 * k + 1 - side) as f64 * step)
            .collect();
        Ok(QamConstellation {
            order,
            step,
            half_period,
            levels,
        })
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    /// Smallest positive alphabet point d; adjacent points differ by 2d.
    pub fn step(&self) -> f64 {
        self.step
    }

    /// Modulo half-period A; outputs live in [−A, A).
    pub fn half_period(&self) -> f64 {
        self.half_period
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Reduces a real value into [−A, A), returning `(value, residual)` with
    /// value = x + residual and residual an integer multiple of 2A.
    pub fn modulo(&self, x: f64) -> (f64, f64) {
        let a = self.half_period;
        let value = x - 2.0 * a * ((x + a) / (2.0 * a)).floor();
        (value, value - x)
    }

    /// Componentwise modulo on real and imaginary parts.
    pub fn modulo_complex(&self, z: Complex64) -> (Complex64, Complex64) {
        let (re, ere) = self.modulo(z.re);
        let (im, eim) = self.modulo(z.im);
        (cx(re, im), cx(ere, eim))
    }

    /// Nearest per-dimension alphabet point.
    pub fn slice(&self, x: f64) -> f64 {
        let side = self.levels.len() as f64;
        let idx = ((x / self.step - 1.0) / 2.0 + side / 2.0).round();
        let idx = idx.clamp(0.0, side - 1.0) as usize;
        self.levels[idx]
    }

    pub fn slice_complex(&self, z: Complex64) -> Complex64 {
        cx(self.slice(z.re), self.slice(z.im))
    }

    /// Uniform random constellation symbol.
    pub fn random_symbol<R: Rng + ?Sized>(&self, rng: &mut R) -> Complex64 {
        let n = self.levels.len();
        let re = self.levels[rng.random_range(0..n)];
        let im = self.levels[rng.random_range(0..n)];
        cx(re, im)
    }

    pub fn random_vector<R: Rng + ?Sized>(&self, rng: &mut R, len: usize) -> CVec {
        CVec::from_iterator(len, (0..len).map(|_| self.random_symbol(rng)))
    }
}

/// Feedback filter and cancellation order of the THP encoder.
#[derive(Debug, Clone)]
pub struct ThpState {
    /// Strictly lower triangular feedback matrix C.
    pub feedback: CMat,
    /// Stream-level cancellation order.
    pub ordering: Permutation,
}

impl ThpState {
    pub fn new(feedback: CMat, ordering: Permutation) -> Result<Self> {
        let d = ordering.len();
        if feedback.nrows() != d || feedback.ncols() != d {
            return Err(Error::Dimension(format!(
                "feedback is {}x{}, expected {d}x{d}",
                feedback.nrows(),
                feedback.ncols()
            )));
        }
        let lower = strict_lower(&feedback)?;
        if (&lower - &feedback).norm() != 0.0 {
            return Err(Error::InvalidArgument(
                "feedback matrix must be strictly lower triangular".into(),
            ));
        }
        Ok(ThpState { feedback, ordering })
    }

    /// No feedback: C = 0 (linear precoding).
    pub fn passthrough(d: usize) -> Self {
        ThpState {
            feedback: CMat::zeros(d, d),
            ordering: Permutation::identity(d),
        }
    }

    /// U = I + C.
    pub fn unit_lower(&self) -> CMat {
        unit_lower(&self.feedback).expect("feedback is square by construction")
    }
}

/// Successive THP encoding: x_k = MOD(s_k − Σ_{n<k} C_{k,n} x_n).
///
/// Returns `(x, v)` with v = s + e = U·x; every component of x lies in
/// [−A, A) per dimension.
pub fn thp_encode(s: &CVec, state: &ThpState, qam: &QamConstellation) -> Result<(CVec, CVec)> {
    let d = s.len();
    if state.feedback.nrows() != d {
        return Err(Error::Dimension(format!(
            "symbol vector of length {d} vs feedback {}x{}",
            state.feedback.nrows(),
            state.feedback.ncols()
        )));
    }
    let mut x = CVec::zeros(d);
    let mut v = CVec::zeros(d);
    for k in 0..d {
        let mut acc = s[k];
        for n in 0..k {
            acc -= state.feedback[(k, n)] * x[n];
        }
        let (xk, e) = qam.modulo_complex(acc);
        x[k] = xk;
        v[k] = s[k] + e;
    }
    Ok((x, v))
}

/// Componentwise modulo followed by nearest-point slicing.
pub fn thp_decode(v_hat: &CVec, qam: &QamConstellation) -> CVec {
    CVec::from_iterator(
        v_hat.len(),
        v_hat.iter().map(|&z| {
            let (folded, _) = qam.modulo_complex(z);
            qam.slice_complex(folded)
        }),
    )
}

/// Near-optimal cancellation order: users sorted ascending by scaled channel
/// energy, ties broken by user index, expanded to stream level with each
/// user's streams kept in natural order.
pub fn order_users(channel_norms_sq: &[f64], streams: &[usize]) -> Permutation {
    assert_eq!(channel_norms_sq.len(), streams.len());
    let mut users: Vec<usize> = (0..channel_norms_sq.len()).collect();
    users.sort_by(|&a, &b| {
        channel_norms_sq[a]
            .partial_cmp(&channel_norms_sq[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let offsets: Vec<usize> = streams
        .iter()
        .scan(0usize, |acc, &d| {
            let o = *acc;
            *acc += d;
            Some(o)
        })
        .collect();
    let mut order = Vec::with_capacity(streams.iter().sum());
    for &u in &users {
        order.extend(offsets[u]..offsets[u] + streams[u]);
    }
    Permutation::new(order).expect("constructed from disjoint stream ranges")
}

/// MSE improvement of THP over the matched linear design with the same
/// linear stages: −‖Δ(L Ā T W)‖² where Ā stacks the per-user effective
/// receive chains P_m F_m Ĥ_m. Always ≤ 0; 0 iff the strictly-lower part of
/// the permuted effective matrix vanishes.
pub fn thp_gain(
    rx_digital: &[CMat],
    rx_analog: &[CMat],
    tx_analog: &CMat,
    tx_digital: &CMat,
    ordering: &Permutation,
    scaled_channels: &[CMat],
) -> Result<f64> {
    if rx_digital.len() != scaled_channels.len() || rx_analog.len() != scaled_channels.len() {
        return Err(Error::Dimension(
            "per-user matrix lists must have equal length".into(),
        ));
    }
    let d: usize = rx_digital.iter().map(|p| p.nrows()).sum();
    if ordering.len() != d {
        return Err(Error::Dimension(format!(
            "ordering over {} streams, state has {d}",
            ordering.len()
        )));
    }
    // G = L · stack_m(P_m F_m Ĥ_m T W)
    let mut g = CMat::zeros(d, d);
    let mut row = 0;
    for ((p, f), h) in rx_digital.iter().zip(rx_analog).zip(scaled_channels) {
        let block = p * f * h * tx_analog * tx_digital;
        if block.ncols() != d {
            return Err(Error::Dimension(format!(
                "effective block is {}x{}, expected width {d}",
                block.nrows(),
                block.ncols()
            )));
        }
        g.rows_mut(row, block.nrows()).copy_from(&block);
        row += block.nrows();
    }
    let g = ordering.to_matrix() * g;
    Ok(-strict_lower(&g)?.norm_squared())
}
