//! Structural matrix operators shared by every algorithm: strictly-lower
//! extraction, unit-modulus phase projection, stream permutations and small
//! Frobenius-norm helpers over complex matrices.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;
pub type RMat = DMatrix<f64>;

pub const C_ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const C_ONE: Complex64 = Complex64::new(1.0, 0.0);

#[inline]
pub fn cx(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Squared Frobenius norm.
#[inline]
pub fn frob2(x: &CMat) -> f64 {
    x.norm_squared()
}

/// True when no entry is NaN or infinite.
pub fn all_finite(x: &CMat) -> bool {
    x.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Extracts the strictly-lower-triangular entries of a square matrix column
/// by column: [X]_{2,1}, …, [X]_{n,1}, [X]_{3,2}, …, [X]_{n,n−1}.
pub fn vec_lt(x: &CMat) -> Result<CVec> {
    let n = square_side(x)?;
    let mut out = Vec::with_capacity(n * (n.saturating_sub(1)) / 2);
    for j in 0..n {
        for i in (j + 1)..n {
            out.push(x[(i, j)]);
        }
    }
    Ok(CVec::from_vec(out))
}

/// Zeros everything on and above the main diagonal, keeping the strictly
/// lower triangle.
pub fn strict_lower(x: &CMat) -> Result<CMat> {
    let n = square_side(x)?;
    let mut out = CMat::zeros(n, n);
    for j in 0..n {
        for i in (j + 1)..n {
            out[(i, j)] = x[(i, j)];
        }
    }
    Ok(out)
}

/// I + C for a strictly lower triangular C.
pub fn unit_lower(c: &CMat) -> Result<CMat> {
    let n = square_side(c)?;
    let mut u = c.clone();
    for i in 0..n {
        u[(i, i)] += C_ONE;
    }
    Ok(u)
}

/// Projects a nonzero coefficient onto the unit circle: b/|b|.
///
/// Returns `None` for b = 0, where the per-entry objective is constant in
/// the phase; callers keep the previous value in that case.
#[inline]
pub fn phase_project(b: Complex64) -> Option<Complex64> {
    let mag = b.norm();
    if mag == 0.0 {
        None
    } else {
        Some(b / mag)
    }
}

fn square_side(x: &CMat) -> Result<usize> {
    if x.nrows() != x.ncols() {
        return Err(Error::Dimension(format!(
            "expected square matrix, got {}x{}",
            x.nrows(),
            x.ncols()
        )));
    }
    Ok(x.nrows())
}

/// Stream permutation: position `k` of the permuted vector holds source
/// stream `order[k]` (0-based), i.e. applying the matrix form L to the
/// original vector s̃ yields s with s[k] = s̃[order[k]].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    order: Vec<usize>,
}

impl Permutation {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let n = order.len();
        let mut seen = vec![false; n];
        for &k in &order {
            if k >= n || seen[k] {
                return Err(Error::InvalidPermutation(format!(
                    "order {order:?} is not a permutation of 0..{n}"
                )));
            }
            seen[k] = true;
        }
        Ok(Permutation { order })
    }

    pub fn identity(n: usize) -> Self {
        Permutation {
            order: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// 0/1 matrix form with exactly one 1 per row and column.
    pub fn to_matrix(&self) -> CMat {
        let n = self.len();
        let mut l = CMat::zeros(n, n);
        for (k, &src) in self.order.iter().enumerate() {
            l[(k, src)] = C_ONE;
        }
        l
    }

    /// s = L s̃.
    pub fn apply(&self, v: &CVec) -> CVec {
        CVec::from_iterator(self.len(), self.order.iter().map(|&src| v[src]))
    }

    /// Lᵀ v, undoing `apply`.
    pub fn apply_inverse(&self, v: &CVec) -> CVec {
        let mut out = CVec::zeros(self.len());
        for (k, &src) in self.order.iter().enumerate() {
            out[src] = v[k];
        }
        out
    }
}
