//! Scalars that rate functions are generic over.
//!
//! Models implement their right-hand side once, for any [`Scalar`]. Calling
//! it with `f64` evaluates the rate; calling it with [`Dual`] seeded along a
//! unit direction yields one column of a Jacobian (forward-mode AD).

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

pub trait Scalar:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + AddAssign
    + SubAssign
{
    fn from_f64(v: f64) -> Self;
    fn value(self) -> f64;
    fn tanh(self) -> Self;
    fn abs(self) -> Self;
    fn powi(self, n: i32) -> Self;
    /// Sign with `sign(0) = 0`; its derivative is zero everywhere.
    fn sign(self) -> Self;
    /// Macaulay power `⟨x⟩^n = max(x, 0)^n`, zero (with zero derivative) for `x ≤ 0`.
    fn macaulay_pow(self, n: Self) -> Self;
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    #[inline]
    fn abs(self) -> Self {
        f64::abs(self)
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    #[inline]
    fn sign(self) -> Self {
        sign0(self)
    }
    #[inline]
    fn macaulay_pow(self, n: Self) -> Self {
        if self > 0.0 {
            self.powf(n)
        } else {
            0.0
        }
    }
}

#[inline]
pub(crate) fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// First-order dual number `val + dot·ε` with `ε² = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dual {
    pub val: f64,
    pub dot: f64,
}

impl Dual {
    #[inline]
    pub fn new(val: f64, dot: f64) -> Self {
        Self { val, dot }
    }

    #[inline]
    pub fn constant(val: f64) -> Self {
        Self { val, dot: 0.0 }
    }

    #[inline]
    pub fn variable(val: f64) -> Self {
        Self { val, dot: 1.0 }
    }
}

impl Scalar for Dual {
    #[inline]
    fn from_f64(v: f64) -> Self {
        Dual::constant(v)
    }
    #[inline]
    fn value(self) -> f64 {
        self.val
    }
    #[inline]
    fn tanh(self) -> Self {
        let t = self.val.tanh();
        Dual::new(t, self.dot * (1.0 - t * t))
    }
    #[inline]
    fn abs(self) -> Self {
        Dual::new(self.val.abs(), self.dot * sign0(self.val))
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Dual::constant(1.0);
        }
        Dual::new(self.val.powi(n), self.dot * n as f64 * self.val.powi(n - 1))
    }
    #[inline]
    fn sign(self) -> Self {
        Dual::constant(sign0(self.val))
    }
    #[inline]
    fn macaulay_pow(self, n: Self) -> Self {
        if self.val <= 0.0 {
            return Dual::constant(0.0);
        }
        let p = self.val.powf(n.val);
        let mut dot = self.dot * n.val * self.val.powf(n.val - 1.0);
        if n.dot != 0.0 {
            dot += n.dot * p * self.val.ln();
        }
        Dual::new(p, dot)
    }
}

impl Add for Dual {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        Dual::new(self.val + rhs.val, self.dot + rhs.dot)
    }
}

impl Sub for Dual {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        Dual::new(self.val - rhs.val, self.dot - rhs.dot)
    }
}

impl Mul for Dual {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        Dual::new(self.val * rhs.val, self.dot * rhs.val + self.val * rhs.dot)
    }
}

impl Div for Dual {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let inv = 1.0 / rhs.val;
        Dual::new(
            self.val * inv,
            (self.dot * rhs.val - self.val * rhs.dot) * inv * inv,
        )
    }
}

impl Neg for Dual {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Dual::new(-self.val, -self.dot)
    }
}

impl Add<f64> for Dual {
    type Output = Self;
    #[inline]
    fn add(self, rhs: f64) -> Self {
        Dual::new(self.val + rhs, self.dot)
    }
}

impl Sub<f64> for Dual {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: f64) -> Self {
        Dual::new(self.val - rhs, self.dot)
    }
}

impl Mul<f64> for Dual {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: f64) -> Self {
        Dual::new(self.val * rhs, self.dot * rhs)
    }
}

impl Div<f64> for Dual {
    type Output = Self;
    #[inline]
    fn div(self, rhs: f64) -> Self {
        Dual::new(self.val / rhs, self.dot / rhs)
    }
}

impl AddAssign for Dual {
    #[inline]
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl SubAssign for Dual {
    #[inline]
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn fd<F: Fn(f64) -> f64>(f: F, x: f64) -> f64 {
        let h = 1e-6 * (1.0 + x.abs());
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn product_and_quotient_rules() {
        let x = Dual::variable(3.0);
        let y = x * x / (x + 1.0);
        // d/dx x²/(x+1) = (x² + 2x)/(x+1)²
        assert!((y.dot - 15.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn sign_of_zero() {
        assert_eq!(0.0_f64.sign(), 0.0);
        assert_eq!(Dual::variable(0.0).sign(), Dual::constant(0.0));
        assert_eq!(Dual::variable(0.0).abs().dot, 0.0);
    }

    #[test]
    fn macaulay_below_and_above() {
        let n = Dual::constant(5.0);
        assert_eq!(Dual::variable(-0.5).macaulay_pow(n), Dual::constant(0.0));
        assert_eq!(Dual::variable(0.0).macaulay_pow(n), Dual::constant(0.0));
        let v = Dual::variable(0.5).macaulay_pow(n);
        assert!((v.val - 0.03125).abs() < 1e-16);
        assert!((v.dot - 5.0 * 0.0625).abs() < 1e-15);
        // derivative in the exponent
        let e = Dual::constant(0.5).macaulay_pow(Dual::variable(5.0));
        assert!((e.dot - 0.03125 * 0.5_f64.ln()).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn polynomial_is_exact(x in -3.0..3.0f64) {
            let d = Dual::variable(x);
            let y = d.powi(3) * 2.0 - d * d + d * 4.0 - 1.0;
            let exact = 6.0 * x * x - 2.0 * x + 4.0;
            prop_assert!((y.dot - exact).abs() <= 1e-12 * (1.0 + exact.abs()));
        }

        #[test]
        fn tanh_matches_fd(x in -3.0..3.0f64) {
            let d = Dual::variable(x).tanh();
            prop_assert!((d.dot - fd(f64::tanh, x)).abs() < 1e-8);
        }
    }
}
