use super::exact::ExactNumber;
use super::format::FormatSpec;
use super::scalar::ScalarValue;
use crate::error::{bail, Result};

/// Exact product. Each operand contributes through its own bias, so mixed
/// formats multiply correctly.
pub fn mul_ref(a: &ScalarValue, b: &ScalarValue) -> ExactNumber {
    &a.value() * &b.value()
}

/// Exact sum; no truncation happens at this level.
pub fn add_ref(a: &ExactNumber, b: &ExactNumber) -> ExactNumber {
    a + b
}

/// A block of elements sharing one scaling factor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MxBlock {
    pub scale: ScalarValue,
    pub elements: Vec<ScalarValue>,
}

impl MxBlock {
    pub fn new(scale: ScalarValue, elements: Vec<ScalarValue>) -> Result<Self> {
        if let Some(first) = elements.first() {
            if elements.iter().any(|e| e.format != first.format) {
                bail!(Format, "MX block elements must share one format");
            }
        }
        Ok(MxBlock { scale, elements })
    }

    pub fn block_size(&self) -> usize {
        self.elements.len()
    }

    pub fn element_format(&self) -> Option<FormatSpec> {
        self.elements.first().map(|e| e.format)
    }
}

/// `X(A) * X(W) * sum_i P_i(A) * P_i(W)`, exactly.
pub fn mx_dot_ref(a: &MxBlock, w: &MxBlock) -> Result<ExactNumber> {
    if a.block_size() != w.block_size() {
        bail!(Shape, "MX block sizes differ: {} vs {}", a.block_size(), w.block_size());
    }
    let dot: ExactNumber = a
        .elements
        .iter()
        .zip(&w.elements)
        .map(|(x, y)| mul_ref(x, y))
        .sum();
    Ok(&(&a.scale.value() * &w.scale.value()) * &dot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{encode, Rounding};

    fn fmt(s: &str) -> FormatSpec {
        s.parse().unwrap()
    }

    fn val(v: f64, f: &str) -> ScalarValue {
        let s = encode(&ExactNumber::from_f64(v), fmt(f), Rounding::TruncateTowardZero);
        assert_eq!(s.to_f64(), v, "{v} not representable in {f}");
        s
    }

    #[test]
    fn multiply_examples() {
        assert_eq!(mul_ref(&val(1.5, "e2m3"), &val(2.0, "e2m3")).to_f64(), 3.0);
        assert!(mul_ref(&val(1.5, "e2m3"), &ScalarValue::zero(fmt("e2m3"))).is_zero());
        let max = ScalarValue::from_word(0b0_11_111, fmt("e2m3")).unwrap();
        assert_eq!(max.to_f64(), 7.5);
        assert_eq!(mul_ref(&max, &max).to_f64(), 56.25);
    }

    #[test]
    fn mixed_bias_product() {
        // e2m3 bias 1 and e4m3 bias 7
        let a = val(1.25, "e2m3");
        let b = val(0.0625, "e4m3");
        assert_eq!(mul_ref(&a, &b).to_f64(), 0.078125);
    }

    #[test]
    fn mx_examples() {
        let one = val(1.0, "e3m2");
        let a = MxBlock::new(one, vec![val(1.5, "e2m3")]).unwrap();
        let w = MxBlock::new(one, vec![val(2.0, "e2m3")]).unwrap();
        assert_eq!(mx_dot_ref(&a, &w).unwrap().to_f64(), 3.0);

        let a = MxBlock::new(val(2.0, "e3m2"), vec![val(1.0, "e2m3"); 2]).unwrap();
        let w = MxBlock::new(one, vec![val(1.0, "e2m3"), val(-1.0, "e2m3")]).unwrap();
        assert!(mx_dot_ref(&a, &w).unwrap().is_zero());

        let short = MxBlock::new(one, vec![val(1.0, "e2m3")]).unwrap();
        assert!(mx_dot_ref(&a, &short).is_err());
    }

    #[test]
    fn mx_random_block_matches_elementwise_sum() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let e2m1 = fmt("e2m1");
        let scale_fmt = fmt("e3m0");
        for _ in 0..200 {
            let draw = |rng: &mut rand_chacha::ChaCha8Rng, f| ScalarValue::from_word(rng.gen_range(0..16), f).unwrap();
            let xa = draw(&mut rng, scale_fmt);
            let xw = draw(&mut rng, scale_fmt);
            let pa: Vec<_> = (0..4).map(|_| draw(&mut rng, e2m1)).collect();
            let pw: Vec<_> = (0..4).map(|_| draw(&mut rng, e2m1)).collect();
            // brute force in f64, which is exact at these widths
            let expect: f64 = xa.to_f64() * xw.to_f64() * pa.iter().zip(&pw).map(|(a, b)| a.to_f64() * b.to_f64()).sum::<f64>();
            let a = MxBlock::new(xa, pa).unwrap();
            let w = MxBlock::new(xw, pw).unwrap();
            assert_eq!(mx_dot_ref(&a, &w).unwrap().to_f64(), expect);
        }
    }
}
