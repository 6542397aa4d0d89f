//! Bit-level model of one processing element.

mod accumulate;
mod datapath;
mod regs;
mod tree;

pub use accumulate::{
    concat_shift, normalize_big, normalize_exponents, pe_dot, pe_mac_tile, Accumulator, AlignedOperand, DotResult,
    MxScales, Shifted, TileResult,
};
pub use datapath::{apply_implicit_one, normalize_to, pe_multiply, segmented_add, Fault, OpTrace, Pe, Product};
pub use regs::{BitReg, PERegisters};
pub use tree::TreeProgram;
