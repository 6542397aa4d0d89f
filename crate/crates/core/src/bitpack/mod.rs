//! Padded host streams, the bit-packing crossbar and packed buffers.

mod bpu;
mod buffer;
mod file;

pub use bpu::{pack, unpack, BitPackUnit, INTERFACE_BITS};
pub use buffer::{PackedBuffer, PackedMetadata, PaddedStream};
pub use file::{decode_fxbp, encode_fxbp, read_fxbp, write_fxbp, MAGIC, VERSION};

/// Bits a padded container of width `container_bits` wastes per element.
pub fn padding_bits(container_bits: u32, precision: u32) -> u32 {
    container_bits.saturating_sub(precision)
}

/// Smallest power-of-two container (at least one byte) that holds `precision` bits.
pub fn natural_container(precision: u32) -> u32 {
    precision.next_power_of_two().max(8)
}

#[cfg(test)]
mod props {
    use super::*;
    use crate::codec::FormatSpec;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn pack_then_unpack_is_identity(
            e in 1u32..=5, m in 0u32..=6, extra in 0u32..=4, start in 0usize..40,
            seed in proptest::collection::vec(any::<u64>(), 0..200)
        ) {
            let f = FormatSpec::float(e, m).unwrap();
            let c = f.total_bits() + extra;
            let words: Vec<u64> = seed.iter().map(|w| w % f.word_count()).collect();
            let s = PaddedStream::from_elements(&words, c, f).unwrap();
            let p = pack(&s, start).unwrap();
            prop_assert_eq!(p.words(), words);
            prop_assert_eq!(p.bits.len(), start + s.len() * f.total_bits() as usize);
            prop_assert_eq!(unpack(&p, c).unwrap(), s);
        }
    }

    #[test]
    fn natural_containers() {
        assert_eq!(natural_container(6), 8);
        assert_eq!(natural_container(3), 8);
        assert_eq!(natural_container(12), 16);
        assert_eq!(padding_bits(8, 5), 3);
    }
}
