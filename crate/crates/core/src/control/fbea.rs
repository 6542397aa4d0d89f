use serde::{Deserialize, Serialize};

use super::config::PEConfig;
use crate::codec::FormatSpec;

/// Carry-break layout of the segmentable exponent adder.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FbeaConfig {
    /// Widest exponent field of the two operands.
    pub add_width: u32,
    /// `add_width` plus one guard bit for the carry out.
    pub seg_width: u32,
    pub segments: u32,
    /// `breaks[i]` kills the carry out of bit `i` (LSB = 0).
    pub breaks: Vec<bool>,
}

impl FbeaConfig {
    /// Integer pairs have no exponents; the adder is bypassed.
    pub fn is_bypassed(&self) -> bool {
        self.add_width == 0
    }

    /// Adder passes needed for `ops` exponent sums.
    pub fn passes(&self, ops: u32) -> u32 {
        if self.is_bypassed() {
            0
        } else {
            ops.div_ceil(self.segments)
        }
    }
}

pub fn compile_fbea(fmt_a: FormatSpec, fmt_w: FormatSpec, cfg: &PEConfig) -> FbeaConfig {
    let add_width = fmt_a.exp_bits().max(fmt_w.exp_bits());
    compile_fbea_width(add_width, cfg.l_add)
}

pub fn compile_fbea_width(add_width: u32, l_add: u32) -> FbeaConfig {
    if add_width == 0 {
        return FbeaConfig {
            add_width,
            seg_width: 0,
            segments: 0,
            breaks: vec![false; l_add as usize],
        };
    }
    let seg_width = (add_width + 1).min(l_add);
    let breaks = (0..l_add).map(|i| (i + 1) % seg_width == 0).collect();
    FbeaConfig {
        add_width,
        seg_width,
        segments: l_add / seg_width,
        breaks,
    }
}
