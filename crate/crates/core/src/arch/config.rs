use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::control::PEConfig;
use crate::error::{bail, Error, Result};

const MIB: u64 = 1 << 20;

fn default_clock() -> f64 {
    1e9
}

/// One accelerator instance: PE array, buffers and bandwidths.
///
/// Bandwidths are in GB/s (10^9 bytes); buffer sizes in bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcceleratorConfig {
    pub name: String,
    pub num_pes: u64,
    pub array_x: u64,
    pub array_y: u64,
    pub reg_width: u32,
    pub wgt_glb_bytes: u64,
    pub act_out_glb_bytes: u64,
    pub local_buf_bytes_per_pe: u64,
    /// Per bus of the weight network; there is one bus per array column.
    pub noc_w_gbps: f64,
    /// Per bus of the activation/output network; one bus per array row.
    pub noc_a_gbps: f64,
    pub offchip_gbps: f64,
    #[serde(default = "default_clock")]
    pub clock_hz: f64,
}

impl AcceleratorConfig {
    #[allow(clippy::too_many_arguments)]
    fn preset(name: &str, x: u64, y: u64, wgt_mb: u64, act_mb: u64, noc_w: f64, noc_a: f64, offchip: f64) -> Self {
        AcceleratorConfig {
            name: name.to_string(),
            num_pes: x * y,
            array_x: x,
            array_y: y,
            reg_width: 24,
            wgt_glb_bytes: wgt_mb * MIB,
            act_out_glb_bytes: act_mb * MIB,
            local_buf_bytes_per_pe: 184,
            noc_w_gbps: noc_w,
            noc_a_gbps: noc_a,
            offchip_gbps: offchip,
            clock_hz: default_clock(),
        }
    }

    pub fn mobile_a() -> Self {
        Self::preset("Mobile-A", 32, 32, 2, 1, 32.0, 32.0, 16.0)
    }

    pub fn mobile_b() -> Self {
        Self::preset("Mobile-B", 64, 64, 4, 2, 64.0, 64.0, 16.0)
    }

    pub fn cloud_a() -> Self {
        Self::preset("Cloud-A", 128, 64, 16, 8, 128.0, 64.0, 128.0)
    }

    pub fn cloud_b() -> Self {
        Self::preset("Cloud-B", 128, 128, 32, 16, 128.0, 128.0, 128.0)
    }

    pub fn presets() -> Vec<Self> {
        vec![Self::mobile_a(), Self::mobile_b(), Self::cloud_a(), Self::cloud_b()]
    }

    /// Looks a preset up by name, ignoring case and dashes.
    pub fn by_name(name: &str) -> Result<Self> {
        let key = |s: &str| s.to_ascii_lowercase().replace(['-', '_'], "");
        Self::presets()
            .into_iter()
            .find(|p| key(&p.name) == key(name))
            .ok_or_else(|| Error::Config(format!("no machine preset named {name:?}")))
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_pes == 0 || self.num_pes != self.array_x * self.array_y {
            bail!(Config, "{}: num_pes must equal array_x * array_y", self.name);
        }
        if self.wgt_glb_bytes == 0 || self.act_out_glb_bytes == 0 || self.local_buf_bytes_per_pe == 0 {
            bail!(Config, "{}: buffers must be non-empty", self.name);
        }
        let rates = [self.noc_w_gbps, self.noc_a_gbps, self.offchip_gbps, self.clock_hz];
        if rates.iter().any(|r| !r.is_finite() || *r <= 0.0) {
            bail!(Config, "{}: bandwidths and clock must be positive", self.name);
        }
        PEConfig::for_reg_width(self.reg_width)?;
        Ok(())
    }

    /// PE parameters implied by `reg_width`.
    pub fn pe_config(&self) -> Result<PEConfig> {
        PEConfig::for_reg_width(self.reg_width)
    }

    fn bits_per_cycle(&self, gbps: f64) -> f64 {
        gbps * 8e9 / self.clock_hz
    }

    pub fn dram_bits_per_cycle(&self) -> f64 {
        self.bits_per_cycle(self.offchip_gbps)
    }

    /// Aggregate over all column buses.
    pub fn noc_w_bits_per_cycle(&self) -> f64 {
        self.bits_per_cycle(self.noc_w_gbps) * self.array_y as f64
    }

    /// Aggregate over all row buses.
    pub fn noc_a_bits_per_cycle(&self) -> f64 {
        self.bits_per_cycle(self.noc_a_gbps) * self.array_x as f64
    }

    pub fn local_bits(&self) -> u64 {
        self.local_buf_bytes_per_pe * 8
    }

    /// Mean hop count of a transfer on the 2-D bus.
    pub fn mean_hops(&self) -> f64 {
        (self.array_x + self.array_y) as f64 / 2.0
    }
}
