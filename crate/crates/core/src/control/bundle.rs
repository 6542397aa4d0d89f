use serde::{Deserialize, Serialize};

use super::config::PEConfig;
use super::fbea::{compile_fbea, FbeaConfig};
use super::fbrt::{compile_fbrt, FbrtConfig};
use super::primgen::{compile_primgen, PrimRoutes};
use super::separator::{compile_separator, SeparatorRoutes};
use crate::codec::FormatSpec;
use crate::error::{Error, Result};

/// Cycles to broadcast a new bundle into the PE control registers.
pub const RECONFIG_CYCLES: u64 = 64;

/// Which operand moves when two exponents are aligned.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AlignPolicy {
    /// Keep the larger exponent; shift the smaller operand right.
    #[default]
    ShiftSmaller,
    /// Keep the smaller exponent; shift the larger operand left.
    ShiftLarger,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CstConfig {
    /// Bits each aligned product gets in the shift tree.
    pub seg_width: u32,
    pub policy: AlignPolicy,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnuConfig {
    pub out_fmt: FormatSpec,
    pub acc_width: u32,
}

/// Every control signal one layer needs, computed once and broadcast.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlBundle {
    pub cfg: PEConfig,
    pub fmt_a: FormatSpec,
    pub fmt_w: FormatSpec,
    pub sep_act: SeparatorRoutes,
    pub sep_wgt: SeparatorRoutes,
    pub prim: PrimRoutes,
    /// One tree configuration per primitive pass.
    pub fbrt: Vec<FbrtConfig>,
    pub fbea: FbeaConfig,
    pub cst: CstConfig,
    pub anu: AnuConfig,
}

impl ControlBundle {
    pub fn num_acts(&self) -> usize {
        self.prim.num_acts as usize
    }

    pub fn num_wgts(&self) -> usize {
        self.prim.num_wgts as usize
    }

    /// Width of a product significand including both implicit ones.
    pub fn product_sig_width(&self) -> u32 {
        product_sig_width(self.fmt_a, self.fmt_w)
    }

    pub fn reconfig_cycles(&self) -> u64 {
        RECONFIG_CYCLES
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bundle serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Control(format!("bad bundle file: {e}")))
    }
}

pub fn product_sig_width(a: FormatSpec, w: FormatSpec) -> u32 {
    a.man_bits() + u32::from(a.has_implicit_one()) + w.man_bits() + u32::from(w.has_implicit_one())
}

pub fn compile_bundle(fmt_a: FormatSpec, fmt_w: FormatSpec, fmt_o: FormatSpec, cfg: &PEConfig) -> Result<ControlBundle> {
    compile_bundle_with(fmt_a, fmt_w, fmt_o, cfg, AlignPolicy::default())
}

pub fn compile_bundle_with(
    fmt_a: FormatSpec,
    fmt_w: FormatSpec,
    fmt_o: FormatSpec,
    cfg: &PEConfig,
    policy: AlignPolicy,
) -> Result<ControlBundle> {
    cfg.validate()?;
    let sep_act = compile_separator(fmt_a, cfg)?;
    let sep_wgt = compile_separator(fmt_w, cfg)?;
    let prim = compile_primgen(&sep_act, &sep_wgt, cfg);
    let fbrt = prim
        .passes
        .iter()
        .map(|p| compile_fbrt(p, cfg))
        .collect::<Result<Vec<_>>>()?;
    let fbea = compile_fbea(fmt_a, fmt_w, cfg);
    let sig = product_sig_width(fmt_a, fmt_w);
    let cst = CstConfig {
        seg_width: (cfg.l_cst / prim.ops_per_pass.max(1)).max(sig),
        policy,
    };
    let anu = AnuConfig {
        out_fmt: fmt_o,
        acc_width: cfg.l_acc,
    };
    Ok(ControlBundle {
        cfg: *cfg,
        fmt_a,
        fmt_w,
        sep_act,
        sep_wgt,
        prim,
        fbrt,
        fbea,
        cst,
        anu,
    })
}
