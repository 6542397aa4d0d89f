//! On-disk container for packed buffers.
//!
//! Layout (all integers little-endian):
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 4    | magic `FXBP`                            |
//! | 4      | 1    | version (1)                             |
//! | 5      | 1    | kind: 0 float, 1 signed int, 2 unsigned |
//! | 6      | 1    | exponent bits                           |
//! | 7      | 1    | mantissa bits                           |
//! | 8      | 8    | element count                           |
//! | 16     | 2    | start bit                               |
//! | 18     | ...  | payload bits, MSB first, zero padded    |
//!
//! The payload holds bits `[0, start_bit + count * P)` of the buffer.

use std::io::{Read, Write};
use std::path::Path;

use bitvec::prelude::*;

use super::buffer::PackedBuffer;
use crate::codec::FormatSpec;
use crate::error::{bail, Result};

pub const MAGIC: &[u8; 4] = b"FXBP";
pub const VERSION: u8 = 1;
const HEADER_LEN: usize = 18;

pub fn encode_fxbp(buf: &PackedBuffer) -> Result<Vec<u8>> {
    let f = buf.fmt;
    let kind = match (f.is_float(), f.signed()) {
        (true, _) => 0u8,
        (false, true) => 1,
        (false, false) => 2,
    };
    if f.is_float() && f.bias() != FormatSpec::default_bias(f.exp_bits()) {
        bail!(Format, "{f} uses a custom bias, which the file header cannot carry");
    }
    let Ok(start) = u16::try_from(buf.start_bit) else {
        bail!(Format, "start bit {} exceeds the header field", buf.start_bit);
    };
    let mut out = Vec::with_capacity(HEADER_LEN + buf.bits.len().div_ceil(8));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[VERSION, kind, f.exp_bits() as u8, f.man_bits() as u8]);
    out.extend_from_slice(&(buf.elem_count as u64).to_le_bytes());
    out.extend_from_slice(&start.to_le_bytes());
    let used = buf.start_bit + buf.packed_bits();
    let mut payload: BitVec<u8, Msb0> = buf.bits[..used].to_bitvec();
    payload.set_uninitialized(false);
    out.extend_from_slice(payload.as_raw_slice());
    Ok(out)
}

pub fn decode_fxbp(bytes: &[u8]) -> Result<PackedBuffer> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        bail!(Format, "not an FXBP file");
    }
    if bytes[4] != VERSION {
        bail!(Format, "unsupported FXBP version {}", bytes[4]);
    }
    let (e, m) = (u32::from(bytes[6]), u32::from(bytes[7]));
    let fmt = match bytes[5] {
        0 => FormatSpec::float(e, m)?,
        1 | 2 => {
            if e != 0 {
                bail!(Format, "integer payload with {e} exponent bits");
            }
            let signed = bytes[5] == 1;
            FormatSpec::int(m + u32::from(signed), signed)?
        }
        k => bail!(Format, "unknown format kind {k}"),
    };
    let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let start = usize::from(u16::from_le_bytes(bytes[16..18].try_into().unwrap()));
    let Some(used) = usize::try_from(count)
        .ok()
        .and_then(|c| c.checked_mul(fmt.total_bits() as usize))
        .and_then(|b| b.checked_add(start))
    else {
        bail!(Format, "element count {count} overflows");
    };
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != used.div_ceil(8) {
        bail!(
            Format,
            "payload is {} bytes, header implies {}",
            payload.len(),
            used.div_ceil(8)
        );
    }
    let mut bits = BitVec::<u8, Msb0>::from_slice(payload);
    bits.truncate(used);
    Ok(PackedBuffer {
        bits,
        elem_count: count as usize,
        fmt,
        start_bit: start,
    })
}

pub fn write_fxbp(path: &Path, buf: &PackedBuffer) -> Result<()> {
    let bytes = encode_fxbp(buf)?;
    std::fs::File::create(path)?.write_all(&bytes)?;
    Ok(())
}

pub fn read_fxbp(path: &Path) -> Result<PackedBuffer> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_fxbp(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_round_trip() {
        for (s, start) in [("e2m3", 0), ("e5m10", 7), ("int4", 3), ("uint5", 0)] {
            let f: FormatSpec = s.parse().unwrap();
            let words: Vec<u64> = (0..37).map(|k| k % f.word_count()).collect();
            let b = PackedBuffer::from_words(&words, f, start).unwrap();
            let bytes = encode_fxbp(&b).unwrap();
            assert_eq!(bytes.len(), HEADER_LEN + (start + 37 * f.total_bits() as usize).div_ceil(8));
            assert_eq!(decode_fxbp(&bytes).unwrap(), b);
        }
    }

    #[test]
    fn rejects_corruption() {
        let f: FormatSpec = "e2m3".parse().unwrap();
        let b = PackedBuffer::from_words(&[1, 2, 3], f, 0).unwrap();
        let good = encode_fxbp(&b).unwrap();
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(decode_fxbp(&bad).is_err());
        let mut bad = good.clone();
        bad[4] = 9;
        assert!(decode_fxbp(&bad).is_err());
        let mut bad = good.clone();
        bad.push(0);
        assert!(decode_fxbp(&bad).is_err());
        assert!(decode_fxbp(&good[..10]).is_err());
    }
}
