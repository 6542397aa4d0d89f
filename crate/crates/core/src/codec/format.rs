use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{bail, Error, Result};

/// Widest scalar the PE register partition can hold at the default
/// configuration (`R_M + R_E`).
pub const MAX_TOTAL_BITS: u32 = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FormatKind {
    Float,
    Int,
}

/// An arbitrary floating point or integer scalar format.
///
/// Floats are laid out MSB-first as `[sign | exponent | mantissa]` with an
/// implicit leading one and no subnormals, infinities or NaNs. The all-zero
/// word is the only encoding of zero. Signed integers are sign-magnitude:
/// `[sign | magnitude]`, with the magnitude living in the mantissa field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct FormatSpec {
    kind: FormatKind,
    exp_bits: u32,
    man_bits: u32,
    signed: bool,
    bias: i32,
}

impl FormatSpec {
    /// `eXmY` float with the default bias `2^(X-1) - 1`.
    pub fn float(exp_bits: u32, man_bits: u32) -> Result<Self> {
        if exp_bits == 0 || exp_bits > 16 {
            bail!(Format, "float exponent width must be in 1..=16, got {exp_bits}");
        }
        Self::checked(FormatSpec {
            kind: FormatKind::Float,
            exp_bits,
            man_bits,
            signed: true,
            bias: Self::default_bias(exp_bits),
        })
    }

    /// Integer format of `bits` total bits (sign-magnitude when signed).
    pub fn int(bits: u32, signed: bool) -> Result<Self> {
        let man_bits = if signed { bits.saturating_sub(1) } else { bits };
        Self::checked(FormatSpec {
            kind: FormatKind::Int,
            exp_bits: 0,
            man_bits,
            signed,
            bias: 0,
        })
    }

    /// Same format with a non-default exponent bias.
    pub fn with_bias(mut self, bias: i32) -> Result<Self> {
        if self.kind != FormatKind::Float {
            bail!(Format, "integer formats carry no exponent bias");
        }
        self.bias = bias;
        Ok(self)
    }

    fn checked(f: FormatSpec) -> Result<Self> {
        let total = f.total_bits();
        if !(2..=MAX_TOTAL_BITS).contains(&total) {
            bail!(Format, "{f} has {total} bits; supported range is 2..={MAX_TOTAL_BITS}");
        }
        Ok(f)
    }

    pub fn default_bias(exp_bits: u32) -> i32 {
        (1i32 << (exp_bits - 1)) - 1
    }

    pub fn kind(&self) -> FormatKind {
        self.kind
    }
    pub fn is_float(&self) -> bool {
        self.kind == FormatKind::Float
    }
    pub fn exp_bits(&self) -> u32 {
        self.exp_bits
    }
    pub fn man_bits(&self) -> u32 {
        self.man_bits
    }
    pub fn signed(&self) -> bool {
        self.signed
    }
    pub fn bias(&self) -> i32 {
        self.bias
    }
    pub fn sign_bits(&self) -> u32 {
        u32::from(self.signed)
    }

    pub fn total_bits(&self) -> u32 {
        self.sign_bits() + self.exp_bits + self.man_bits
    }

    /// Floats carry an implicit leading one; integers do not.
    pub fn has_implicit_one(&self) -> bool {
        self.is_float()
    }

    /// Number of mantissa bits that sit below the binary point.
    pub fn frac_bits(&self) -> u32 {
        if self.is_float() {
            self.man_bits
        } else {
            0
        }
    }

    pub fn max_exp_field(&self) -> u32 {
        (1u32 << self.exp_bits) - 1
    }

    pub fn man_mask(&self) -> u64 {
        (1u64 << self.man_bits) - 1
    }

    /// Number of distinct words, `2^total_bits`.
    pub fn word_count(&self) -> u64 {
        1u64 << self.total_bits()
    }

    /// A float format wide enough to hold the exact product of `a` and `b`
    /// whenever the product exponent is in range.
    pub fn product_format(a: &FormatSpec, b: &FormatSpec) -> Result<FormatSpec> {
        match (a.kind, b.kind) {
            (FormatKind::Float, FormatKind::Float) => {
                let e = a.exp_bits.max(b.exp_bits) + 1;
                FormatSpec::float(e, a.man_bits + b.man_bits + 1)?.with_bias(a.bias + b.bias)
            }
            (FormatKind::Int, FormatKind::Int) => {
                FormatSpec::int(a.man_bits + b.man_bits + 1, a.signed || b.signed)
            }
            _ => {
                let (i, f) = if a.is_float() { (b, a) } else { (a, b) };
                // exponent must cover the float range plus the integer's own magnitude
                let needed = (1u32 << f.exp_bits) + i.man_bits + 1;
                let e = u32::BITS - (needed - 1).leading_zeros();
                FormatSpec::float(e, i.man_bits + f.man_bits)?.with_bias(f.bias)
            }
        }
    }

    /// Every float format `eXmY` with `1 + X + Y` total bits in `bits`.
    pub fn all_floats(bits: std::ops::RangeInclusive<u32>) -> Vec<FormatSpec> {
        let mut out = Vec::new();
        for total in bits {
            for e in 1..total {
                let m = total - 1 - e;
                if let Ok(f) = FormatSpec::float(e, m) {
                    out.push(f);
                }
            }
        }
        out
    }
}

impl fmt::Display for FormatSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            FormatKind::Float => {
                write!(f, "e{}m{}", self.exp_bits, self.man_bits)?;
                if self.bias != Self::default_bias(self.exp_bits) {
                    write!(f, "b{}", self.bias)?;
                }
                Ok(())
            }
            FormatKind::Int if self.signed => write!(f, "int{}", self.total_bits()),
            FormatKind::Int => write!(f, "uint{}", self.total_bits()),
        }
    }
}

fn parse_num<T: FromStr>(s: &str, whole: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Format(format!("malformed format string {whole:?}")))
}

fn parse_exmy(body: &str, whole: &str) -> Result<FormatSpec> {
    let rest = body
        .strip_prefix('e')
        .ok_or_else(|| Error::Format(format!("malformed format string {whole:?}")))?;
    let (e, rest) = rest
        .split_once('m')
        .ok_or_else(|| Error::Format(format!("malformed format string {whole:?}")))?;
    let (m, bias) = match rest.split_once('b') {
        Some((m, b)) => (m, Some(parse_num::<i32>(b, whole)?)),
        None => (rest, None),
    };
    let f = FormatSpec::float(parse_num(e, whole)?, parse_num(m, whole)?)?;
    match bias {
        Some(b) => f.with_bias(b),
        None => Ok(f),
    }
}

impl FromStr for FormatSpec {
    type Err = Error;

    /// Accepts `eXmY`, `eXmYbZ`, `fpN:eXmY`, `intN`, `uintN` and the aliases
    /// `fp16`/`bf16`, case-insensitively.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "fp16" | "half" => return FormatSpec::float(5, 10),
            "bf16" => return FormatSpec::float(8, 7),
            _ => {}
        }
        if let Some(n) = lower.strip_prefix("uint") {
            return FormatSpec::int(parse_num(n, s)?, false);
        }
        if let Some(n) = lower.strip_prefix("int") {
            return FormatSpec::int(parse_num(n, s)?, true);
        }
        if let Some(rest) = lower.strip_prefix("fp") {
            let (n, body) = rest
                .split_once(':')
                .ok_or_else(|| Error::Format(format!("malformed format string {s:?}")))?;
            let f = parse_exmy(body, s)?;
            let n: u32 = parse_num(n, s)?;
            if n != f.total_bits() {
                bail!(Format, "{s:?}: {} has {} bits, not {n}", f, f.total_bits());
            }
            return Ok(f);
        }
        parse_exmy(&lower, s)
    }
}

impl TryFrom<String> for FormatSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<FormatSpec> for String {
    fn from(f: FormatSpec) -> String {
        f.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_render_round_trip() {
        for s in ["e2m3", "e3m2", "e5m10", "e1m0", "int4", "uint8", "e6m13b5"] {
            let f: FormatSpec = s.parse().unwrap();
            assert_eq!(f.to_string(), s);
        }
        let f: FormatSpec = "E2M3".parse().unwrap();
        assert_eq!((f.exp_bits(), f.man_bits(), f.bias()), (2, 3, 1));
        assert_eq!("fp6:e2m3".parse::<FormatSpec>().unwrap(), f);
        assert_eq!("FP16".parse::<FormatSpec>().unwrap().to_string(), "e5m10");
    }

    #[test]
    fn total_bits_by_kind() {
        assert_eq!(FormatSpec::float(2, 3).unwrap().total_bits(), 6);
        assert_eq!(FormatSpec::int(4, true).unwrap().man_bits(), 3);
        assert_eq!(FormatSpec::int(4, false).unwrap().total_bits(), 4);
    }

    #[test]
    fn rejects_bad_strings() {
        assert!("fp7:e2m3".parse::<FormatSpec>().is_err());
        assert!("e0m3".parse::<FormatSpec>().is_err());
        assert!("e2x3".parse::<FormatSpec>().is_err());
        assert!("int1".parse::<FormatSpec>().is_err());
        assert!("e8m23".parse::<FormatSpec>().is_err());
    }

    #[test]
    fn float_enumeration_counts() {
        // t - 1 layouts for each total width t
        assert_eq!(FormatSpec::all_floats(3..=12).len(), (3..=12).map(|t| t - 1).sum::<u32>() as usize);
    }

    #[test]
    fn product_format_widths() {
        let a: FormatSpec = "e5m10".parse().unwrap();
        let b: FormatSpec = "e2m3".parse().unwrap();
        let p = FormatSpec::product_format(&a, &b).unwrap();
        assert_eq!((p.exp_bits(), p.man_bits(), p.bias()), (6, 14, 16));
        let i = FormatSpec::product_format(&"int4".parse().unwrap(), &"int6".parse().unwrap()).unwrap();
        assert_eq!(i.man_bits(), 8);
    }
}
