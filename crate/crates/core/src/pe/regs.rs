use std::fmt;

use bitvec::prelude::*;

use crate::codec::ScalarValue;
use crate::control::PEConfig;

/// A register of up to 64 bits addressed MSB-first: position 0 is the
/// leftmost bit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct BitReg {
    pub width: u32,
    pub bits: u64,
}

impl BitReg {
    pub fn new(width: u32) -> Self {
        assert!(width <= 64, "register wider than 64 bits");
        BitReg { width, bits: 0 }
    }

    #[inline]
    pub fn get(&self, pos: usize) -> bool {
        (self.bits >> (self.width as usize - 1 - pos)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, pos: usize, v: bool) {
        let mask = 1u64 << (self.width as usize - 1 - pos);
        if v {
            self.bits |= mask;
        } else {
            self.bits &= !mask;
        }
    }

    /// `len` bits starting at `pos`, MSB first.
    #[inline]
    pub fn field(&self, pos: usize, len: u32) -> u64 {
        if len == 0 {
            return 0;
        }
        let shift = self.width as usize - pos - len as usize;
        (self.bits >> shift) & ((1u64 << len) - 1)
    }

    pub fn clear(&mut self) {
        self.bits = 0;
    }
}

impl fmt::Display for BitReg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.width as usize {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Architectural state of one PE.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PERegisters {
    pub act_reg: BitReg,
    pub wgt_reg: BitReg,
    pub act_sign: BitReg,
    pub wgt_sign: BitReg,
    pub act_exp: BitReg,
    pub wgt_exp: BitReg,
    pub act_man: BitReg,
    pub wgt_man: BitReg,
    /// Primitive register, index-addressed (bit `b` is primitive `b`).
    pub prim: BitVec<u64, Lsb0>,
    pub mx_scale_act: Option<ScalarValue>,
    pub mx_scale_wgt: Option<ScalarValue>,
}

impl PERegisters {
    pub fn new(cfg: &PEConfig) -> Self {
        PERegisters {
            act_reg: BitReg::new(cfg.reg_width),
            wgt_reg: BitReg::new(cfg.reg_width),
            act_sign: BitReg::new(cfg.r_s.min(64)),
            wgt_sign: BitReg::new(cfg.r_s.min(64)),
            act_exp: BitReg::new(cfg.r_e),
            wgt_exp: BitReg::new(cfg.r_e),
            act_man: BitReg::new(cfg.r_m),
            wgt_man: BitReg::new(cfg.r_m),
            prim: bitvec![u64, Lsb0; 0; cfg.l_prim as usize],
            mx_scale_act: None,
            mx_scale_wgt: None,
        }
    }

    /// Writes right-aligned `words` of `precision` bits back to back from the
    /// left edge of `reg`; bits past the last element are zero.
    pub fn load(reg: &mut BitReg, words: &[u64], precision: u32) {
        reg.clear();
        let mut acc = 0u64;
        for &w in words {
            acc = (acc << precision) | w;
        }
        let used = precision * words.len() as u32;
        if used > 0 {
            reg.bits = acc << (reg.width - used);
        }
    }
}

impl fmt::Display for PERegisters {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "act_reg  {}", self.act_reg)?;
        writeln!(f, "wgt_reg  {}", self.wgt_reg)?;
        writeln!(f, "act_sign {}", self.act_sign)?;
        writeln!(f, "wgt_sign {}", self.wgt_sign)?;
        writeln!(f, "act_exp  {}", self.act_exp)?;
        writeln!(f, "wgt_exp  {}", self.wgt_exp)?;
        writeln!(f, "act_man  {}", self.act_man)?;
        writeln!(f, "wgt_man  {}", self.wgt_man)?;
        write!(f, "prim     ")?;
        for b in self.prim.iter() {
            f.write_str(if *b { "1" } else { "0" })?;
        }
        writeln!(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn msb_first_addressing() {
        let mut r = BitReg::new(6);
        r.set(0, true);
        assert_eq!(r.bits, 0b100000);
        r.set(5, true);
        assert_eq!(r.to_string(), "100001");
        assert_eq!(r.field(0, 3), 0b100);
        assert_eq!(r.field(3, 3), 0b001);
    }

    #[test]
    fn load_packs_from_the_left() {
        let mut r = BitReg::new(24);
        PERegisters::load(&mut r, &[0b101101, 0b010011], 6);
        assert_eq!(r.to_string(), "101101010011000000000000");
    }
}
