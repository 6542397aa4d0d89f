use bitvec::prelude::*;
use serde::Serialize;

use crate::codec::{FormatSpec, ScalarValue};
use crate::error::{bail, Result};

/// Back-to-back packed elements, MSB of each element first. Element `k`
/// occupies bits `[start_bit + k*P, start_bit + (k+1)*P)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PackedBuffer {
    pub bits: BitVec<u8, Msb0>,
    pub elem_count: usize,
    pub fmt: FormatSpec,
    pub start_bit: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct PackedMetadata {
    /// Bit offset of the first element.
    pub start_addr: usize,
    pub precision: u32,
    pub elem_count: usize,
}

impl PackedBuffer {
    pub fn empty(fmt: FormatSpec, start_bit: usize) -> Self {
        PackedBuffer {
            bits: bitvec![u8, Msb0; 0; start_bit],
            elem_count: 0,
            fmt,
            start_bit,
        }
    }

    /// Packs right-aligned element words.
    pub fn from_words(words: &[u64], fmt: FormatSpec, start_bit: usize) -> Result<Self> {
        let mut buf = Self::empty(fmt, start_bit);
        buf.bits.reserve(words.len() * fmt.total_bits() as usize);
        for &w in words {
            buf.push(w)?;
        }
        Ok(buf)
    }

    pub fn from_scalars(values: &[ScalarValue], fmt: FormatSpec) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| v.format != fmt) {
            bail!(Format, "scalar in {} pushed into a {fmt} buffer", v.format);
        }
        let words: Vec<u64> = values.iter().map(ScalarValue::to_word).collect();
        Self::from_words(&words, fmt, 0)
    }

    pub fn push(&mut self, word: u64) -> Result<()> {
        let p = self.precision();
        if word >> p != 0 {
            bail!(Format, "word {word:#x} wider than {p} bits");
        }
        let end = self.start_bit + self.elem_count * p as usize;
        self.bits.truncate(end);
        for i in (0..p).rev() {
            self.bits.push((word >> i) & 1 == 1);
        }
        self.elem_count += 1;
        Ok(())
    }

    pub fn precision(&self) -> u32 {
        self.fmt.total_bits()
    }

    /// Payload size: exactly `elem_count * P` bits.
    pub fn packed_bits(&self) -> usize {
        self.elem_count * self.precision() as usize
    }

    pub fn element(&self, k: usize) -> u64 {
        assert!(k < self.elem_count, "element {k} out of {}", self.elem_count);
        let p = self.precision() as usize;
        let lo = self.start_bit + k * p;
        self.bits[lo..lo + p].iter().fold(0u64, |acc, b| (acc << 1) | u64::from(*b))
    }

    pub fn words(&self) -> Vec<u64> {
        (0..self.elem_count).map(|k| self.element(k)).collect()
    }

    pub fn scalars(&self) -> Vec<ScalarValue> {
        self.words()
            .into_iter()
            .map(|w| ScalarValue::from_word(w, self.fmt).expect("word width matches format"))
            .collect()
    }

    pub fn metadata(&self) -> PackedMetadata {
        PackedMetadata {
            start_addr: self.start_bit,
            precision: self.precision(),
            elem_count: self.elem_count,
        }
    }
}

/// Host layout: one element per container, left-aligned, low bits zero.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PaddedStream {
    pub words: Vec<u64>,
    pub container_bits: u32,
    pub fmt: FormatSpec,
}

impl PaddedStream {
    pub fn new(container_bits: u32, fmt: FormatSpec) -> Result<Self> {
        check_container(container_bits, fmt)?;
        Ok(PaddedStream {
            words: Vec::new(),
            container_bits,
            fmt,
        })
    }

    pub fn from_elements(elements: &[u64], container_bits: u32, fmt: FormatSpec) -> Result<Self> {
        let mut s = Self::new(container_bits, fmt)?;
        let pad = container_bits - fmt.total_bits();
        for &e in elements {
            if e >> fmt.total_bits() != 0 {
                bail!(Format, "element {e:#x} wider than {fmt}");
            }
            s.words.push(e << pad);
        }
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn elements(&self) -> Vec<u64> {
        let pad = self.container_bits - self.fmt.total_bits();
        self.words.iter().map(|w| w >> pad).collect()
    }

    /// The stream as the MSB-first bit sequence seen on the host interface.
    pub fn to_bits(&self) -> BitVec<u8, Msb0> {
        let c = self.container_bits;
        let mut bits = BitVec::with_capacity(self.words.len() * c as usize);
        for w in &self.words {
            for i in (0..c).rev() {
                bits.push((w >> i) & 1 == 1);
            }
        }
        bits
    }

    /// Big-endian container bytes. Container width must be a whole number of bytes.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if self.container_bits % 8 != 0 {
            bail!(Format, "container width {} is not byte aligned", self.container_bits);
        }
        let n = (self.container_bits / 8) as usize;
        let mut out = Vec::with_capacity(self.words.len() * n);
        for w in &self.words {
            out.extend_from_slice(&w.to_be_bytes()[8 - n..]);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], container_bits: u32, fmt: FormatSpec) -> Result<Self> {
        let mut s = Self::new(container_bits, fmt)?;
        if container_bits % 8 != 0 {
            bail!(Format, "container width {container_bits} is not byte aligned");
        }
        let n = (container_bits / 8) as usize;
        if bytes.len() % n != 0 {
            bail!(Format, "{} bytes is not a whole number of {n}-byte containers", bytes.len());
        }
        let pad_mask = (1u64 << (container_bits - fmt.total_bits())) - 1;
        for (k, chunk) in bytes.chunks(n).enumerate() {
            let w = chunk.iter().fold(0u64, |acc, b| (acc << 8) | u64::from(*b));
            if w & pad_mask != 0 {
                bail!(Format, "container {k} has nonzero padding bits");
            }
            s.words.push(w);
        }
        Ok(s)
    }
}

pub(crate) fn check_container(container_bits: u32, fmt: FormatSpec) -> Result<()> {
    let p = fmt.total_bits();
    if container_bits < p {
        bail!(Format, "container of {container_bits} bits cannot hold {fmt} ({p} bits)");
    }
    if container_bits > 64 {
        bail!(Format, "containers wider than the 64-bit interface are unsupported");
    }
    Ok(())
}
