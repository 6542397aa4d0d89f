//! Scalar formats, exact encode/decode and the golden reference arithmetic
//! every datapath stage is checked against.

mod arith;
mod exact;
mod format;
mod scalar;

pub use arith::{add_ref, mul_ref, mx_dot_ref, MxBlock};
pub use exact::ExactNumber;
pub use format::{FormatKind, FormatSpec, MAX_TOTAL_BITS};
pub use scalar::{decode, encode, Rounding, ScalarValue};

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn small_float() -> impl Strategy<Value = FormatSpec> {
        (1u32..=6, 0u32..=6).prop_map(|(e, m)| FormatSpec::float(e, m).unwrap())
    }

    fn scalar() -> impl Strategy<Value = ScalarValue> {
        small_float().prop_flat_map(|f| (0..f.word_count()).prop_map(move |w| ScalarValue::from_word(w, f).unwrap()))
    }

    proptest! {
        #[test]
        fn product_is_commutative_with_xor_sign(a in scalar(), b in scalar()) {
            let ab = mul_ref(&a, &b);
            prop_assert_eq!(&ab, &mul_ref(&b, &a));
            if !a.is_zero && !b.is_zero {
                prop_assert_eq!(ab.is_negative(), a.sign ^ b.sign);
            }
        }

        #[test]
        fn addition_is_associative(a in scalar(), b in scalar(), c in scalar()) {
            let (a, b, c) = (a.value(), b.value(), c.value());
            prop_assert_eq!(add_ref(&add_ref(&a, &b), &c), add_ref(&a, &add_ref(&b, &c)));
        }

        #[test]
        fn truncation_never_grows_magnitude(a in scalar(), b in scalar(), out in small_float()) {
            let exact = mul_ref(&a, &b);
            let enc = encode(&exact, out, Rounding::TruncateTowardZero).value();
            let max = ScalarValue { sign: false, exp_field: out.max_exp_field(), man_field: out.man_mask(), format: out, is_zero: false }.value();
            // saturation is the only way to leave the truncation bound
            if exact.cmp_abs(&max) != std::cmp::Ordering::Greater {
                prop_assert!(enc.cmp_abs(&exact) != std::cmp::Ordering::Greater);
            }
        }
    }
}
