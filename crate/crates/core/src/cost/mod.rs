//! Energy, area and derived metrics priced from a per-action table.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::arch::{AcceleratorConfig, MachineKind, SimReport};
use crate::codec::FormatSpec;
use crate::control::PEConfig;
use crate::error::{bail, Error, Result};

/// The shipped table. Its numbers are placeholders, not measurements.
pub const DEFAULT_TABLE: &str = include_str!("../../../../configs/energy/synthetic.toml");

const PJ: f64 = 1e-12;
const MIB: f64 = (1u64 << 20) as f64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyTable {
    /// Where the numbers came from. Required.
    pub provenance: String,
    pub energy: ActionEnergy,
    pub area: AreaTable,
}

/// Picojoules per action. Bits are counted after packing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionEnergy {
    pub prim_and_pj: f64,
    pub tree_node_pj: f64,
    pub fbea_pj: f64,
    pub sram_rd_pj: f64,
    pub sram_wr_pj: f64,
    /// Per bit per hop.
    pub noc_pj: f64,
    pub dram_pj: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AreaTable {
    pub reference_reg_width: u32,
    pub pe_blocks_mm2: PeBlocks,
    pub misc: MiscArea,
    /// PE area relative to the reference width, keyed by register width.
    pub reg_width_scale: BTreeMap<String, f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeBlocks {
    pub registers: f64,
    pub separator: f64,
    pub primitive_generator: f64,
    pub reduction_tree: f64,
    pub exponent_adder: f64,
    pub accumulator: f64,
}

impl PeBlocks {
    pub fn total(&self) -> f64 {
        self.registers + self.separator + self.primitive_generator + self.reduction_tree + self.exponent_adder + self.accumulator
    }

    fn values(&self) -> [f64; 6] {
        [
            self.registers,
            self.separator,
            self.primitive_generator,
            self.reduction_tree,
            self.exponent_adder,
            self.accumulator,
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MiscArea {
    pub glb_mm2_per_mib: f64,
    pub noc_mm2: f64,
    pub bpu_mm2: f64,
    pub tensor_core_pe_mm2: f64,
    pub bit_fusion_pe_mm2: f64,
}

/// Joules by component. `total` is their sum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub compute_j: f64,
    pub sram_j: f64,
    pub noc_j: f64,
    pub dram_j: f64,
}

impl EnergyBreakdown {
    pub fn total(&self) -> f64 {
        self.compute_j + self.sram_j + self.noc_j + self.dram_j
    }
}

impl Default for EnergyTable {
    fn default() -> Self {
        Self::from_toml_str(DEFAULT_TABLE).expect("shipped energy table parses")
    }
}

impl EnergyTable {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let t: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.provenance.trim().is_empty() {
            bail!(Config, "energy table needs a provenance string");
        }
        let e = &self.energy;
        let m = &self.area.misc;
        let entries = [
            e.prim_and_pj,
            e.tree_node_pj,
            e.fbea_pj,
            e.sram_rd_pj,
            e.sram_wr_pj,
            e.noc_pj,
            e.dram_pj,
            m.glb_mm2_per_mib,
            m.noc_mm2,
            m.bpu_mm2,
            m.tensor_core_pe_mm2,
            m.bit_fusion_pe_mm2,
        ];
        let scales = self.area.reg_width_scale.values().copied();
        if entries.into_iter().chain(self.area.pe_blocks_mm2.values()).chain(scales).any(|v| !v.is_finite() || v < 0.0) {
            bail!(Config, "energy and area entries must be finite and non-negative");
        }
        for k in self.area.reg_width_scale.keys() {
            if k.parse::<u32>().is_err() {
                bail!(Config, "reg_width_scale key {k:?} is not a register width");
            }
        }
        self.pe_area_mm2(self.area.reference_reg_width)?;
        Ok(())
    }

    /// Area of one FlexiBit PE at `reg_width`.
    pub fn pe_area_mm2(&self, reg_width: u32) -> Result<f64> {
        let scale = self
            .area
            .reg_width_scale
            .get(&reg_width.to_string())
            .ok_or_else(|| Error::Config(format!("no area scale for reg_width {reg_width}")))?;
        Ok(self.area.pe_blocks_mm2.total() * scale)
    }

    /// Die area of `kind` built at the size of `acc`.
    pub fn machine_area_mm2(&self, acc: &AcceleratorConfig, kind: MachineKind) -> Result<f64> {
        let m = &self.area.misc;
        let pe = match kind {
            MachineKind::FlexiBit | MachineKind::FlexiBitPadded => self.pe_area_mm2(acc.reg_width)?,
            MachineKind::TensorCoreLike => m.tensor_core_pe_mm2,
            MachineKind::BitFusionLike => m.bit_fusion_pe_mm2,
        };
        let glb = (acc.wgt_glb_bytes + acc.act_out_glb_bytes) as f64 / MIB * m.glb_mm2_per_mib;
        let bpu = if kind == MachineKind::FlexiBit { m.bpu_mm2 } else { 0.0 };
        Ok(pe * acc.num_pes as f64 + glb + m.noc_mm2 + bpu)
    }
}

/// Prices the action counts of `report`.
pub fn energy(report: &SimReport, table: &EnergyTable) -> EnergyBreakdown {
    let e = &table.energy;
    let a = &report.actions;
    EnergyBreakdown {
        compute_j: (a.prim_ands as f64 * e.prim_and_pj + a.tree_node_bits as f64 * e.tree_node_pj + a.fbea_bits as f64 * e.fbea_pj)
            * PJ,
        sram_j: (a.sram_read_bits as f64 * e.sram_rd_pj + a.sram_write_bits as f64 * e.sram_wr_pj) * PJ,
        noc_j: a.noc_bit_hops * e.noc_pj * PJ,
        dram_j: (a.dram_read_bits + a.dram_write_bits) as f64 * e.dram_pj * PJ,
    }
}

/// Copy of `report` with `energy_j` filled in.
pub fn priced(report: &SimReport, table: &EnergyTable) -> SimReport {
    let mut r = report.clone();
    r.energy_j = energy(report, table).total();
    r
}

/// MACs per second per mm².
pub fn perf_per_area(report: &SimReport, area_mm2: f64) -> Result<f64> {
    if !(area_mm2 > 0.0) {
        bail!(Config, "area must be positive, got {area_mm2}");
    }
    if report.seconds == 0.0 {
        return Ok(0.0);
    }
    Ok(report.macs as f64 / report.seconds / area_mm2)
}

/// Energy-delay product in the units of the inputs multiplied.
pub fn edp(seconds: f64, joules: f64) -> f64 {
    seconds * joules
}

/// Analytic stand-in for a bit-serial design relative to a reference run:
/// it takes `latency_factor` times as long at `1/power_divisor` the power.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BitSerialStub {
    pub latency_factor: f64,
    pub power_divisor: f64,
}

impl Default for BitSerialStub {
    fn default() -> Self {
        BitSerialStub { latency_factor: 52.0, power_divisor: 7.1 }
    }
}

impl BitSerialStub {
    /// (seconds, joules) of the stub given the reference's.
    pub fn derive(&self, seconds: f64, joules: f64) -> (f64, f64) {
        let t = seconds * self.latency_factor;
        let power = if seconds > 0.0 { joules / seconds } else { 0.0 };
        (t, power / self.power_divisor * t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RegWidthPoint {
    pub reg_width: u32,
    /// Mean over the pairs, zero where a pair does not fit.
    pub mean_macs_per_cycle: f64,
    pub pe_area_mm2: f64,
    pub macs_per_cycle_per_mm2: f64,
}

/// Peak PE throughput per unit area across register widths.
pub fn reg_width_sweep(table: &EnergyTable, widths: &[u32], pairs: &[(FormatSpec, FormatSpec)]) -> Result<Vec<RegWidthPoint>> {
    if pairs.is_empty() {
        bail!(Config, "reg_width sweep needs at least one precision pair");
    }
    widths
        .iter()
        .map(|&r| {
            let cfg = PEConfig::for_reg_width(r)?;
            let total: u64 = pairs.iter().map(|&(a, w)| crate::arch::pe_throughput(a, w, &cfg)).sum();
            let mean = total as f64 / pairs.len() as f64;
            let area = table.pe_area_mm2(r)?;
            Ok(RegWidthPoint {
                reg_width: r,
                mean_macs_per_cycle: mean,
                pe_area_mm2: area,
                macs_per_cycle_per_mm2: if area > 0.0 { mean / area } else { 0.0 },
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{simulate_baseline, simulate_best, GemmWorkload};
    use crate::workloads::standard_pairs;

    fn f(s: &str) -> FormatSpec {
        s.parse().unwrap()
    }

    #[test]
    fn default_table_is_labelled() {
        let t = EnergyTable::default();
        assert_eq!(t.provenance, "synthetic, not paper-derived");
        assert!((t.pe_area_mm2(24).unwrap() - 0.0125).abs() < 1e-12);
    }

    #[test]
    fn missing_entry_is_a_config_error() {
        let cut = DEFAULT_TABLE.replace("dram_pj = 8.0\n", "");
        assert!(matches!(EnergyTable::from_toml_str(&cut), Err(Error::Config(_))));
        let anon = DEFAULT_TABLE.replace("provenance = \"synthetic, not paper-derived\"", "provenance = \" \"");
        assert!(EnergyTable::from_toml_str(&anon).is_err());
        let negative = DEFAULT_TABLE.replace("noc_pj = 0.004", "noc_pj = -1.0");
        assert!(EnergyTable::from_toml_str(&negative).is_err());
    }

    #[test]
    fn breakdown_sums_and_is_linear() {
        let t = EnergyTable::default();
        let acc = AcceleratorConfig::mobile_a();
        let w = GemmWorkload::new(512, 768, 768, f("e2m3"), f("e2m3"), "g");
        let r = simulate_best(&w, &acc, &PEConfig::default()).unwrap();
        let b = energy(&r, &t);
        assert!(b.compute_j > 0.0 && b.sram_j > 0.0 && b.noc_j > 0.0 && b.dram_j > 0.0);
        let mut t2 = t.clone();
        t2.energy.dram_pj *= 2.0;
        let b2 = energy(&r, &t2);
        assert_eq!(b2.compute_j, b.compute_j);
        assert_eq!(b2.sram_j, b.sram_j);
        assert!((b2.dram_j - 2.0 * b.dram_j).abs() <= 1e-12 * b.dram_j);
    }

    #[test]
    fn zero_work_costs_nothing() {
        let r = simulate_best(
            &GemmWorkload::new(1, 1, 1, f("e2m3"), f("e2m3"), "x"),
            &AcceleratorConfig::mobile_a(),
            &PEConfig::default(),
        )
        .unwrap();
        let mut z = r.clone();
        z.actions = Default::default();
        assert_eq!(energy(&z, &EnergyTable::default()).total(), 0.0);
    }

    #[test]
    fn fp6_is_cheaper_than_upcast_fp8() {
        let t = EnergyTable::default();
        let acc = AcceleratorConfig::mobile_a();
        let w = GemmWorkload::new(2048, 768, 768, f("e2m3"), f("e2m3"), "g");
        let fb = energy(&simulate_best(&w, &acc, &PEConfig::default()).unwrap(), &t).total();
        let tc = energy(&simulate_baseline(&w, &acc, MachineKind::TensorCoreLike).unwrap(), &t).total();
        assert!(fb < tc);
    }

    #[test]
    fn area_scaling() {
        let t = EnergyTable::default();
        let r = simulate_best(
            &GemmWorkload::new(256, 256, 256, f("e2m3"), f("e2m3"), "x"),
            &AcceleratorConfig::mobile_a(),
            &PEConfig::default(),
        )
        .unwrap();
        let full = perf_per_area(&r, 10.0).unwrap();
        assert!((perf_per_area(&r, 5.0).unwrap() - 2.0 * full).abs() <= 1e-9 * full);
        assert!(perf_per_area(&r, 0.0).is_err());
        let acc = AcceleratorConfig::mobile_a();
        let packed = t.machine_area_mm2(&acc, MachineKind::FlexiBit).unwrap();
        let padded = t.machine_area_mm2(&acc, MachineKind::FlexiBitPadded).unwrap();
        assert!((packed - padded - t.area.misc.bpu_mm2).abs() < 1e-12);
    }

    #[test]
    fn reg_width_peak() {
        let t = EnergyTable::default();
        let widths: Vec<u32> = (16..=32).step_by(2).collect();
        let pts = reg_width_sweep(&t, &widths, &standard_pairs()).unwrap();
        let best = pts.iter().max_by(|a, b| a.macs_per_cycle_per_mm2.total_cmp(&b.macs_per_cycle_per_mm2)).unwrap();
        assert_eq!(best.reg_width, 24);
        assert!(t.pe_area_mm2(17).is_err());
    }

    #[test]
    fn bit_serial_edp_is_worse() {
        let (s, j) = (2.0, 3.0);
        let (s2, j2) = BitSerialStub::default().derive(s, j);
        assert_eq!(s2, 104.0);
        assert!(edp(s2, j2) > edp(s, j));
        assert_eq!(edp(2.0 * s, j), 2.0 * edp(s, j));
    }
}
