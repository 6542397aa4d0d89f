use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};

/// Widths of the PE's registers and reduction structures, in bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PEConfig {
    pub reg_width: u32,
    pub r_m: u32,
    pub r_e: u32,
    pub r_s: u32,
    pub l_prim: u32,
    pub l_add: u32,
    pub l_acc: u32,
    pub l_cst: u32,
}

impl Default for PEConfig {
    fn default() -> Self {
        PEConfig {
            reg_width: 24,
            r_m: 12,
            r_e: 12,
            r_s: 12,
            l_prim: 144,
            l_add: 144,
            l_acc: 144,
            l_cst: 144,
        }
    }
}

impl PEConfig {
    /// Scales every width with the input register, keeping the default ratios.
    pub fn for_reg_width(reg_width: u32) -> Result<Self> {
        let half = reg_width / 2;
        let cfg = PEConfig {
            reg_width,
            r_m: half,
            r_e: half,
            r_s: half,
            l_prim: half * half,
            l_add: half * half,
            l_acc: half * half,
            l_cst: half * half,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.reg_width == 0 || self.reg_width > 64 {
            bail!(Config, "reg_width must be in 1..=64, got {}", self.reg_width);
        }
        if self.r_m > self.reg_width || self.r_e > self.reg_width || self.r_s > self.reg_width {
            bail!(Config, "sign/exponent/mantissa registers may not exceed reg_width");
        }
        if self.r_m > 64 || self.r_e > 64 {
            bail!(Config, "field registers wider than 64 bits are unsupported");
        }
        if self.l_prim < self.r_m {
            bail!(Config, "L_prim ({}) must be at least R_M ({})", self.l_prim, self.r_m);
        }
        if self.l_prim > 4096 || self.l_add == 0 || self.l_acc < 8 || self.l_cst == 0 {
            bail!(Config, "reduction widths out of range");
        }
        Ok(())
    }

    /// Leaves of the reduction tree: next power of two covering `L_prim`.
    pub fn tree_leaves(&self) -> usize {
        (self.l_prim as usize).next_power_of_two()
    }
}
