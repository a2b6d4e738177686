use std::fmt::{Debug, Display};
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::atomic::{AtomicU64, Ordering};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Default magnitude below which float coefficients are dropped.
pub const DEFAULT_ZERO_EPS: f64 = 1e-12;

static ZERO_EPS_BITS: AtomicU64 = AtomicU64::new(0x3D71_9799_812D_EA11); // 1e-12

/// Current zero-epsilon used when pruning float coefficients.
pub fn zero_epsilon() -> f64 {
    f64::from_bits(ZERO_EPS_BITS.load(Ordering::Relaxed))
}

/// Changes the process-wide zero-epsilon. Exact coefficients are unaffected.
pub fn set_zero_epsilon(eps: f64) {
    assert!(eps >= 0.0 && eps.is_finite(), "zero epsilon must be finite and nonnegative");
    ZERO_EPS_BITS.store(eps.to_bits(), Ordering::Relaxed);
}

/// Exact rational coefficient used by the symbolic lemma checks.
pub type Rational = BigRational;

/// Scalar field a [`Polynomial`](super::Polynomial) can be built over.
///
/// Two implementations exist: `f64` (pruned with the zero-epsilon) and
/// [`Rational`] (exact, pruned only at true zero).
pub trait Coeff:
    Clone
    + Debug
    + Display
    + PartialEq
    + PartialOrd
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
{
    fn zero() -> Self;
    fn one() -> Self;
    fn from_i64(v: i64) -> Self;
    /// `num / den`; `den` must be nonzero.
    fn from_ratio(num: i64, den: i64) -> Self;
    fn is_negligible(&self) -> bool;
    fn abs(&self) -> Self;
    fn to_f64(&self) -> f64;
    /// Parses the textual form written by `Display`.
    fn parse_coeff(s: &str) -> Option<Self>;
    fn is_exact() -> bool;
}

impl Coeff for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_i64(v: i64) -> Self {
        v as f64
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }
    fn is_negligible(&self) -> bool {
        f64::abs(*self) <= zero_epsilon()
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn parse_coeff(s: &str) -> Option<Self> {
        s.parse().ok()
    }
    fn is_exact() -> bool {
        false
    }
}

impl Coeff for Rational {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn from_i64(v: i64) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }
    fn from_ratio(num: i64, den: i64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }
    fn is_negligible(&self) -> bool {
        self.is_zero()
    }
    fn abs(&self) -> Self {
        Signed::abs(self)
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn parse_coeff(s: &str) -> Option<Self> {
        s.parse().ok()
    }
    fn is_exact() -> bool {
        true
    }
}

/// Exact power of a rational, `base^exp` for possibly negative `exp`.
pub fn rational_pow(base: i64, exp: i64) -> Rational {
    let b = BigInt::from(base);
    let mag = num_traits::pow(b, exp.unsigned_abs() as usize);
    if exp >= 0 {
        BigRational::from_integer(mag)
    } else {
        BigRational::new(BigInt::one(), mag)
    }
}
