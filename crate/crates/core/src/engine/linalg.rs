//! Dense LU with partial pivoting over `f64` and `Complex64`.

use std::ops::{Add, Div, Mul, Neg, Sub};

use num_complex::Complex64;

pub(crate) trait Scalar:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self>
{
    fn zero() -> Self;
    fn modulus(self) -> f64;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn modulus(self) -> f64 {
        self.norm()
    }
}

/// Row-major square matrix.
#[derive(Debug, Clone)]
pub(crate) struct Matrix<T> {
    pub n: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![T::zero(); n * n] }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> T {
        self.data[r * self.n + c]
    }

    #[inline]
    pub fn add(&mut self, r: usize, c: usize, v: T) {
        let n = self.n;
        self.data[r * n + c] = self.data[r * n + c] + v;
    }
}

/// Pivots smaller than this fraction of the largest entry count as zero.
const SINGULAR_RATIO: f64 = 1e-20;

/// Solve `a x = b` in place; `b` receives `x`. On a singular matrix the
/// returned error is the column (unknown) that had no usable pivot.
pub(crate) fn solve<T: Scalar>(a: &mut Matrix<T>, b: &mut [T]) -> Result<(), usize> {
    let n = a.n;
    debug_assert_eq!(b.len(), n);
    let scale = a.data.iter().fold(0.0f64, |m, v| m.max(v.modulus()));
    let tiny = if scale > 0.0 { scale * SINGULAR_RATIO } else { f64::MIN_POSITIVE };
    for k in 0..n {
        let (mut piv, mut best) = (k, a.at(k, k).modulus());
        for r in k + 1..n {
            let m = a.at(r, k).modulus();
            if m > best {
                best = m;
                piv = r;
            }
        }
        if !(best > tiny) {
            return Err(k);
        }
        if piv != k {
            for c in 0..n {
                a.data.swap(k * n + c, piv * n + c);
            }
            b.swap(k, piv);
        }
        let pivot = a.at(k, k);
        for r in k + 1..n {
            let factor = a.at(r, k) / pivot;
            if factor.modulus() == 0.0 {
                continue;
            }
            for c in k + 1..n {
                let v = a.at(k, c);
                a.data[r * n + c] = a.data[r * n + c] - factor * v;
            }
            a.data[r * n + k] = T::zero();
            b[r] = b[r] - factor * b[k];
        }
    }
    for k in (0..n).rev() {
        let mut acc = b[k];
        for c in k + 1..n {
            acc = acc - a.at(k, c) * b[c];
        }
        b[k] = acc / a.at(k, k);
    }
    Ok(())
}
