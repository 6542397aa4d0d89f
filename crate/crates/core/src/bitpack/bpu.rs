use bitvec::prelude::*;

use super::buffer::{check_container, PackedBuffer, PaddedStream};
use crate::codec::FormatSpec;
use crate::error::Result;

/// Width of the off-chip interface one base unit serves. Wider channels
/// replicate the base unit.
pub const INTERFACE_BITS: u32 = 64;

/// The crossbar packer. Each beat carries as many whole containers as fit in
/// the interface; `start_idx` carries over between beats.
#[derive(Clone, Debug)]
pub struct BitPackUnit {
    container: u32,
    precision: u32,
    start_idx: usize,
}

impl BitPackUnit {
    pub fn new(container: u32, fmt: FormatSpec, start_idx: usize) -> Result<Self> {
        check_container(container, fmt)?;
        Ok(BitPackUnit {
            container,
            precision: fmt.total_bits(),
            start_idx,
        })
    }

    pub fn start_idx(&self) -> usize {
        self.start_idx
    }

    pub fn containers_per_beat(&self) -> usize {
        (INTERFACE_BITS / self.container) as usize
    }

    /// Output position of useful input bit `i` within the current beat, or
    /// `None` for a padding bit.
    pub fn map_bit(&self, i: usize) -> Option<usize> {
        let c = self.container as usize;
        let p = self.precision as usize;
        if i % c >= p {
            return None;
        }
        Some(self.start_idx + i - (i / c) * (c - p))
    }

    /// Routes one beat into `out`, growing it as needed.
    pub fn pack_beat(&mut self, beat: &BitSlice<u8, Msb0>, out: &mut BitVec<u8, Msb0>) {
        let c = self.container as usize;
        let elems = beat.len() / c;
        let end = self.start_idx + elems * self.precision as usize;
        if out.len() < end {
            out.resize(end, false);
        }
        for (i, bit) in beat.iter().enumerate() {
            if let Some(j) = self.map_bit(i) {
                out.set(j, *bit);
            }
        }
        self.start_idx = end;
    }

    /// Inverse crossbar: fills one beat of containers from the packed buffer.
    pub fn unpack_beat(&mut self, packed: &BitSlice<u8, Msb0>, elems: usize) -> BitVec<u8, Msb0> {
        let c = self.container as usize;
        let mut beat = bitvec![u8, Msb0; 0; elems * c];
        for i in 0..elems * c {
            if let Some(j) = self.map_bit(i) {
                beat.set(i, packed[j]);
            }
        }
        self.start_idx += elems * self.precision as usize;
        beat
    }
}

/// Drops the padding bits of every container, writing element bits back to
/// back starting at `start_idx`.
pub fn pack(stream: &PaddedStream, start_idx: usize) -> Result<PackedBuffer> {
    let mut unit = BitPackUnit::new(stream.container_bits, stream.fmt, start_idx)?;
    let mut out = PackedBuffer::empty(stream.fmt, start_idx);
    let beat_bits = unit.containers_per_beat() * stream.container_bits as usize;
    let input = stream.to_bits();
    for beat in input.chunks(beat_bits) {
        unit.pack_beat(beat, &mut out.bits);
    }
    out.elem_count = stream.len();
    Ok(out)
}

/// Restores the padded host layout for writeback.
pub fn unpack(buf: &PackedBuffer, container_bits: u32) -> Result<PaddedStream> {
    let mut unit = BitPackUnit::new(container_bits, buf.fmt, buf.start_bit)?;
    let mut stream = PaddedStream::new(container_bits, buf.fmt)?;
    let per_beat = unit.containers_per_beat();
    let c = container_bits as usize;
    let mut remaining = buf.elem_count;
    while remaining > 0 {
        let elems = remaining.min(per_beat);
        let beat = unit.unpack_beat(&buf.bits, elems);
        for chunk in beat.chunks(c) {
            stream.words.push(chunk.iter().fold(0u64, |acc, b| (acc << 1) | u64::from(*b)));
        }
        remaining -= elems;
    }
    Ok(stream)
}
