use bitvec::prelude::*;
use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use super::exact::ExactNumber;
use super::format::FormatSpec;
use crate::error::{bail, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rounding {
    /// What the datapath does: drop every bit below the last mantissa bit.
    #[default]
    TruncateTowardZero,
    NearestEven,
}

/// One decoded scalar.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ScalarValue {
    pub sign: bool,
    pub exp_field: u32,
    pub man_field: u64,
    pub format: FormatSpec,
    pub is_zero: bool,
}

impl ScalarValue {
    pub fn zero(format: FormatSpec) -> Self {
        ScalarValue {
            sign: false,
            exp_field: 0,
            man_field: 0,
            format,
            is_zero: true,
        }
    }

    /// Splits a right-aligned word into its fields.
    pub fn from_word(word: u64, format: FormatSpec) -> Result<Self> {
        let total = format.total_bits();
        if word >> total != 0 {
            bail!(Format, "word {word:#x} does not fit {format} ({total} bits)");
        }
        let man_field = word & format.man_mask();
        let exp_field = ((word >> format.man_bits()) & u64::from(format.max_exp_field())) as u32;
        let sign = format.signed() && (word >> (total - 1)) & 1 == 1;
        Ok(ScalarValue {
            sign,
            exp_field,
            man_field,
            format,
            is_zero: word == 0,
        })
    }

    pub fn to_word(&self) -> u64 {
        let f = &self.format;
        let mut w = self.man_field | (u64::from(self.exp_field) << f.man_bits());
        if self.sign {
            w |= 1 << (f.total_bits() - 1);
        }
        w
    }

    /// Exact real value.
    pub fn value(&self) -> ExactNumber {
        let f = &self.format;
        if self.is_zero {
            return ExactNumber::zero();
        }
        if f.is_float() {
            let sig = self.man_field | (1u64 << f.man_bits());
            let exp = i64::from(self.exp_field) - i64::from(f.bias()) - i64::from(f.man_bits());
            ExactNumber::new(self.sign, sig, exp)
        } else {
            ExactNumber::new(self.sign, self.man_field, 0)
        }
    }

    pub fn to_f64(&self) -> f64 {
        self.value().to_f64()
    }
}

/// Decodes an MSB-first word.
pub fn decode(word: &BitSlice<u8, Msb0>, fmt: FormatSpec) -> Result<ScalarValue> {
    if word.len() != fmt.total_bits() as usize {
        bail!(Format, "word has {} bits but {fmt} needs {}", word.len(), fmt.total_bits());
    }
    let w = word.iter().fold(0u64, |acc, b| (acc << 1) | u64::from(*b));
    ScalarValue::from_word(w, fmt)
}

/// Rounds `v` into `fmt`. Exponent overflow saturates to the largest finite
/// magnitude; underflow flushes to zero.
pub fn encode(v: &ExactNumber, fmt: FormatSpec, rounding: Rounding) -> ScalarValue {
    if v.is_zero() {
        return ScalarValue::zero(fmt);
    }
    let sign = v.is_negative();
    if !fmt.is_float() {
        return encode_int(v, fmt, rounding);
    }
    let m = fmt.man_bits() as i64;
    let k = v.floor_log2().expect("nonzero");
    // scaled = |v| * 2^(m - k), whose integer part is 1.mmm with m fraction bits
    let sig = v.significand();
    let shift = v.exp2() + m - k;
    let (mut int_part, rem_cmp_half) = shift_with_remainder(sig, shift);
    if rounding == Rounding::NearestEven
        && (rem_cmp_half == Some(std::cmp::Ordering::Greater)
            || (rem_cmp_half == Some(std::cmp::Ordering::Equal) && int_part.is_odd()))
    {
        int_part += 1u32;
    }
    let mut man = int_part.to_u64().expect("mantissa fits u64");
    let mut e = k + i64::from(fmt.bias());
    if man >> (m + 1) != 0 {
        // rounding carried into a new binade
        man >>= 1;
        e += 1;
    }
    let max_e = i64::from(fmt.max_exp_field());
    if e > max_e {
        return ScalarValue {
            sign,
            exp_field: fmt.max_exp_field(),
            man_field: fmt.man_mask(),
            format: fmt,
            is_zero: false,
        };
    }
    if e < 0 {
        return ScalarValue::zero(fmt);
    }
    let man_field = man & fmt.man_mask();
    let is_zero = !sign && e == 0 && man_field == 0;
    ScalarValue {
        sign: sign && !is_zero,
        exp_field: e as u32,
        man_field,
        format: fmt,
        is_zero,
    }
}

fn encode_int(v: &ExactNumber, fmt: FormatSpec, rounding: Rounding) -> ScalarValue {
    let (mut mag, rem) = shift_with_remainder(v.significand(), v.exp2());
    if rounding == Rounding::NearestEven
        && (rem == Some(std::cmp::Ordering::Greater)
            || (rem == Some(std::cmp::Ordering::Equal) && mag.is_odd()))
    {
        mag += 1u32;
    }
    if v.is_negative() && !fmt.signed() {
        return ScalarValue::zero(fmt);
    }
    let max = BigUint::from(fmt.man_mask());
    let mag = if mag > max { fmt.man_mask() } else { mag.to_u64().unwrap() };
    let sign = v.is_negative() && mag != 0;
    ScalarValue {
        sign,
        exp_field: 0,
        man_field: mag,
        format: fmt,
        is_zero: mag == 0,
    }
}

/// `floor(sig * 2^shift)` plus how the dropped remainder compares to one half
/// (`None` when nothing was dropped).
fn shift_with_remainder(sig: &BigUint, shift: i64) -> (BigUint, Option<std::cmp::Ordering>) {
    if shift >= 0 {
        return (sig << shift as u64, None);
    }
    let s = (-shift) as u64;
    let int_part = sig >> s;
    let rem = sig - (&int_part << s);
    if rem.is_zero() {
        return (int_part, None);
    }
    let half = BigUint::one() << (s - 1);
    (int_part, Some(rem.cmp(&half)))
}
