use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul, Neg};

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};

/// A dyadic rational `(-1)^negative * significand * 2^exp2`, kept canonical
/// (odd significand, or zero with `exp2 = 0` and positive sign).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ExactNumber {
    negative: bool,
    significand: BigUint,
    exp2: i64,
}

impl ExactNumber {
    pub fn zero() -> Self {
        ExactNumber {
            negative: false,
            significand: BigUint::zero(),
            exp2: 0,
        }
    }

    pub fn new(negative: bool, significand: impl Into<BigUint>, exp2: i64) -> Self {
        let mut significand: BigUint = significand.into();
        if significand.is_zero() {
            return Self::zero();
        }
        let tz = significand.trailing_zeros().unwrap_or(0);
        significand >>= tz;
        ExactNumber {
            negative,
            significand,
            exp2: exp2 + tz as i64,
        }
    }

    pub fn from_i64(v: i64) -> Self {
        Self::new(v < 0, v.unsigned_abs(), 0)
    }

    /// Exact conversion; every finite `f64` is dyadic.
    pub fn from_f64(v: f64) -> Self {
        assert!(v.is_finite(), "non-finite value {v}");
        if v == 0.0 {
            return Self::zero();
        }
        let bits = v.to_bits();
        let negative = bits >> 63 == 1;
        let exp = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (sig, e) = if exp == 0 {
            (frac, -1074)
        } else {
            (frac | (1u64 << 52), exp - 1075)
        };
        Self::new(negative, sig, e)
    }

    pub fn is_zero(&self) -> bool {
        self.significand.is_zero()
    }
    pub fn is_negative(&self) -> bool {
        self.negative
    }
    pub fn significand(&self) -> &BigUint {
        &self.significand
    }
    pub fn exp2(&self) -> i64 {
        self.exp2
    }

    /// `floor(log2 |v|)`; `None` for zero.
    pub fn floor_log2(&self) -> Option<i64> {
        if self.is_zero() {
            None
        } else {
            Some(self.significand.bits() as i64 - 1 + self.exp2)
        }
    }

    pub fn abs(&self) -> Self {
        ExactNumber {
            negative: false,
            ..self.clone()
        }
    }

    /// Multiplies by `2^k`.
    pub fn scale2(&self, k: i64) -> Self {
        if self.is_zero() {
            return Self::zero();
        }
        ExactNumber {
            exp2: self.exp2 + k,
            ..self.clone()
        }
    }

    pub fn cmp_abs(&self, other: &Self) -> Ordering {
        match (self.is_zero(), other.is_zero()) {
            (true, true) => return Ordering::Equal,
            (true, false) => return Ordering::Less,
            (false, true) => return Ordering::Greater,
            _ => {}
        }
        let lo = self.exp2.min(other.exp2);
        let a = &self.significand << (self.exp2 - lo) as u64;
        let b = &other.significand << (other.exp2 - lo) as u64;
        a.cmp(&b)
    }

    /// Nearest `f64` (for reporting only).
    pub fn to_f64(&self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let bits = self.significand.bits() as i64;
        // keep 64 leading bits so the conversion is correctly scaled
        let (sig, e) = if bits > 64 {
            ((&self.significand >> (bits - 64) as u64).to_f64().unwrap(), self.exp2 + bits - 64)
        } else {
            (self.significand.to_f64().unwrap(), self.exp2)
        };
        let v = sig * 2f64.powi(e.clamp(-1100, 1100) as i32);
        if self.negative {
            -v
        } else {
            v
        }
    }

    /// Integer part toward zero, as a magnitude.
    pub fn trunc_magnitude(&self) -> BigUint {
        if self.exp2 >= 0 {
            &self.significand << self.exp2 as u64
        } else {
            &self.significand >> (-self.exp2) as u64
        }
    }
}

impl Default for ExactNumber {
    fn default() -> Self {
        Self::zero()
    }
}

impl Neg for ExactNumber {
    type Output = ExactNumber;
    fn neg(mut self) -> ExactNumber {
        if !self.is_zero() {
            self.negative = !self.negative;
        }
        self
    }
}

impl Add for &ExactNumber {
    type Output = ExactNumber;

    /// Exact sum. When the signs differ the result takes the sign of the
    /// larger-magnitude operand.
    fn add(self, rhs: &ExactNumber) -> ExactNumber {
        if self.is_zero() {
            return rhs.clone();
        }
        if rhs.is_zero() {
            return self.clone();
        }
        let lo = self.exp2.min(rhs.exp2);
        let a = &self.significand << (self.exp2 - lo) as u64;
        let b = &rhs.significand << (rhs.exp2 - lo) as u64;
        if self.negative == rhs.negative {
            return ExactNumber::new(self.negative, a + b, lo);
        }
        match a.cmp(&b) {
            Ordering::Equal => ExactNumber::zero(),
            Ordering::Greater => ExactNumber::new(self.negative, a - b, lo),
            Ordering::Less => ExactNumber::new(rhs.negative, b - a, lo),
        }
    }
}

impl Add for ExactNumber {
    type Output = ExactNumber;
    fn add(self, rhs: ExactNumber) -> ExactNumber {
        &self + &rhs
    }
}

impl Mul for &ExactNumber {
    type Output = ExactNumber;
    fn mul(self, rhs: &ExactNumber) -> ExactNumber {
        if self.is_zero() || rhs.is_zero() {
            return ExactNumber::zero();
        }
        ExactNumber::new(
            self.negative != rhs.negative,
            &self.significand * &rhs.significand,
            self.exp2 + rhs.exp2,
        )
    }
}

impl Mul for ExactNumber {
    type Output = ExactNumber;
    fn mul(self, rhs: ExactNumber) -> ExactNumber {
        &self * &rhs
    }
}

impl std::iter::Sum for ExactNumber {
    fn sum<I: Iterator<Item = ExactNumber>>(iter: I) -> Self {
        iter.fold(ExactNumber::zero(), |acc, x| &acc + &x)
    }
}

impl PartialOrd for ExactNumber {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExactNumber {
    fn cmp(&self, other: &Self) -> Ordering {
        let sa = if self.is_zero() { 0 } else if self.negative { -1 } else { 1 };
        let sb = if other.is_zero() { 0 } else if other.negative { -1 } else { 1 };
        match sa.cmp(&sb) {
            Ordering::Equal if sa < 0 => other.cmp_abs(self),
            Ordering::Equal => self.cmp_abs(other),
            o => o,
        }
    }
}

impl fmt::Display for ExactNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.negative { "-" } else { "" };
        write!(f, "{sign}{}*2^{}", self.significand, self.exp2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(v: f64) -> ExactNumber {
        ExactNumber::from_f64(v)
    }

    #[test]
    fn canonical_form() {
        let a = ExactNumber::new(false, 12u32, 0);
        assert_eq!(a.significand(), &BigUint::from(3u32));
        assert_eq!(a.exp2(), 2);
        assert_eq!(ExactNumber::new(true, 0u32, 5), ExactNumber::zero());
    }

    #[test]
    fn addition_examples() {
        assert!((&x(2.75) + &x(-2.75)).is_zero());
        assert_eq!(&x(1.5) + &x(2.0), x(3.5));
        assert_eq!(&x(0.09375) + &x(56.0), x(56.09375));
        // sign of the larger magnitude wins
        assert_eq!(&x(-3.0) + &x(1.0), x(-2.0));
        assert_eq!(&x(3.0) + &x(-1.0), x(2.0));
    }

    #[test]
    fn tiny_and_huge_scales_stay_exact() {
        let a = ExactNumber::new(false, 1u32, -4000);
        let b = ExactNumber::new(false, 1u32, 4000);
        let s = &a + &b;
        assert_eq!(s.significand().bits(), 8001);
        assert_eq!(&s + &(-b), a);
    }

    #[test]
    fn ordering_and_f64() {
        assert!(x(-1.0) < x(0.5));
        assert!(x(-2.0) < x(-1.0));
        assert_eq!(x(-0.1875).to_f64(), -0.1875);
        assert_eq!(x(6.0).floor_log2(), Some(2));
        assert_eq!(x(0.75).floor_log2(), Some(-1));
    }
}
