use serde::{Deserialize, Serialize};

use super::config::AcceleratorConfig;
use super::tiling::{evaluate_plan, search, Cost, Datapath, Dataflow, Dims, TilePlan};
use crate::bitpack::natural_container;
use crate::codec::{FormatKind, FormatSpec};
use crate::control::{compile_fbea, PEConfig, RECONFIG_CYCLES};
use crate::error::{bail, Result};

/// One GEMM, repeated `batch` times with independent operands.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GemmWorkload {
    pub m: u64,
    pub n: u64,
    pub k: u64,
    pub batch: u64,
    pub fmt_a: FormatSpec,
    pub fmt_w: FormatSpec,
    pub fmt_o: FormatSpec,
    pub label: String,
}

impl GemmWorkload {
    /// Single GEMM whose output keeps the activation format.
    pub fn new(m: u64, n: u64, k: u64, fmt_a: FormatSpec, fmt_w: FormatSpec, label: &str) -> Self {
        GemmWorkload {
            m,
            n,
            k,
            batch: 1,
            fmt_a,
            fmt_w,
            fmt_o: fmt_a,
            label: label.to_string(),
        }
    }

    pub fn with_batch(mut self, batch: u64) -> Self {
        self.batch = batch;
        self
    }

    pub fn macs(&self) -> u64 {
        self.m * self.n * self.k * self.batch
    }

    fn dims(&self) -> Result<Dims> {
        if self.m == 0 || self.n == 0 || self.k == 0 || self.batch == 0 {
            bail!(Shape, "{}: GEMM dimensions must be positive", self.label);
        }
        Ok(Dims {
            m: self.m,
            n: self.n,
            k: self.k,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MachineKind {
    FlexiBit,
    /// FlexiBit with container-padded memory instead of bit packing.
    FlexiBitPadded,
    TensorCoreLike,
    BitFusionLike,
}

impl MachineKind {
    pub fn label(&self) -> &'static str {
        match self {
            MachineKind::FlexiBit => "flexibit",
            MachineKind::FlexiBitPadded => "flexibit-padded",
            MachineKind::TensorCoreLike => "tensorcore",
            MachineKind::BitFusionLike => "bitfusion",
        }
    }
}

/// Multiply-accumulates per cycle of one PE for an operand pair.
///
/// Limited both by how many operands a register load holds and by how many
/// primitives one tree pass reduces.
pub fn pe_throughput(fmt_a: FormatSpec, fmt_w: FormatSpec, cfg: &PEConfig) -> u64 {
    let (pa, pw) = (fmt_a.total_bits(), fmt_w.total_bits());
    let by_regs = u64::from(cfg.reg_width / pa) * u64::from(cfg.reg_width / pw);
    let prims = (fmt_a.man_bits() * fmt_w.man_bits()).max(1);
    by_regs.min(u64::from(cfg.l_prim / prims))
}

fn datapath(fa: FormatSpec, fw: FormatSpec, fo: FormatSpec, cfg: &PEConfig, padded: bool) -> Datapath {
    let store = |f: FormatSpec| {
        let p = f.total_bits();
        u64::from(if padded { natural_container(p) } else { p })
    };
    Datapath {
        macs_per_cycle: pe_throughput(fa, fw, cfg),
        bits_a: store(fa),
        bits_w: store(fw),
        bits_o: store(fo),
        man_a: fa.man_bits(),
        man_w: fw.man_bits(),
        add_width: compile_fbea(fa, fw, cfg).add_width + 1,
    }
}

fn float(e: u32, m: u32) -> FormatSpec {
    FormatSpec::float(e, m).expect("static format")
}

/// Formats a fixed-function FP8/FP16/INT8 array runs a pair at.
pub fn tensor_core_upcast(fa: FormatSpec, fw: FormatSpec) -> Result<(FormatSpec, FormatSpec)> {
    let fits = |f: &FormatSpec, e: u32, m: u32| f.is_float() && f.exp_bits() <= e && f.man_bits() <= m;
    let int8 = |f: &FormatSpec| f.kind() == FormatKind::Int && f.total_bits() <= 8;
    let fp16 = |f: &FormatSpec| fits(f, 5, 10) || (f.kind() == FormatKind::Int && f.man_bits() <= 11);
    if int8(&fa) && int8(&fw) {
        let i = FormatSpec::int(8, true)?;
        return Ok((i, i));
    }
    if fits(&fa, 4, 3) && fits(&fw, 4, 3) {
        return Ok((float(4, 3), float(4, 3)));
    }
    if fp16(&fa) && fp16(&fw) {
        return Ok((float(5, 10), float(5, 10)));
    }
    bail!(Config, "{fa} x {fw} has no FP8/FP16/INT8 upcast");
}

fn bit_fusion_width(f: FormatSpec) -> Result<u32> {
    let p = f.total_bits().next_power_of_two().max(2);
    if p > 16 {
        bail!(Config, "{f} is wider than the 16-bit fused unit");
    }
    Ok(p)
}

fn tensor_core_datapath(w: &GemmWorkload, cfg: &PEConfig) -> Result<Datapath> {
    let (fa, fw) = tensor_core_upcast(w.fmt_a, w.fmt_w)?;
    let (fo, _) = tensor_core_upcast(w.fmt_o, w.fmt_o)?;
    let mut dp = datapath(fa, fw, fo, cfg, false);
    dp.bits_o = u64::from(fo.total_bits());
    Ok(dp)
}

/// Bit bricks fuse in powers of two for storage and register slots, and in
/// two-bit steps along each mantissa.
fn bit_fusion_datapath(w: &GemmWorkload, cfg: &PEConfig) -> Result<Datapath> {
    let (pa, pw, po) = (bit_fusion_width(w.fmt_a)?, bit_fusion_width(w.fmt_w)?, bit_fusion_width(w.fmt_o)?);
    let brick = |m: u32| m.div_ceil(2) * 2;
    let (ma, mw) = (brick(w.fmt_a.man_bits()), brick(w.fmt_w.man_bits()));
    let by_regs = u64::from(cfg.reg_width / pa) * u64::from(cfg.reg_width / pw);
    Ok(Datapath {
        macs_per_cycle: by_regs.min(u64::from(cfg.l_prim / (ma * mw).max(1))),
        bits_a: u64::from(pa),
        bits_w: u64::from(pw),
        bits_o: u64::from(po),
        man_a: ma,
        man_w: mw,
        add_width: compile_fbea(w.fmt_a, w.fmt_w, cfg).add_width + 1,
    })
}

/// Per-component action counts consumed by the energy model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ActionCounts {
    pub macs: u64,
    pub prim_ands: u64,
    pub tree_node_bits: u64,
    pub fbea_bits: u64,
    pub sram_read_bits: u64,
    pub sram_write_bits: u64,
    pub noc_bit_hops: f64,
    pub dram_read_bits: u64,
    pub dram_write_bits: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub machine: String,
    pub kind: MachineKind,
    pub dataflow: Option<Dataflow>,
    pub plan: Option<TilePlan>,
    pub cycles: u64,
    pub compute_cycles: u64,
    pub memory_cycles: u64,
    pub reconfig_cycles: u64,
    pub seconds: f64,
    /// Zero until a cost table is applied.
    pub energy_j: f64,
    pub dram_bits_read: u64,
    pub dram_bits_written: u64,
    pub noc_bits: u64,
    pub pe_util: f64,
    pub macs: u64,
    pub macs_per_cycle: f64,
    /// Only functional runs see rounding; the analytic model leaves this at zero.
    pub precision_loss_events: u64,
    pub peak_macs_per_cycle: u64,
    pub actions: ActionCounts,
}

impl SimReport {
    fn build(acc: &AcceleratorConfig, kind: MachineKind, w: &GemmWorkload, dp: &Datapath, plan: TilePlan, c: Cost) -> Self {
        let b = w.batch;
        let macs = w.macs();
        let noc = (c.noc_w_bits + c.noc_a_bits) * b;
        let dram_r = c.dram_read_bits * b;
        let dram_w = c.dram_write_bits * b;
        let actions = ActionCounts {
            macs,
            prim_ands: macs * u64::from(dp.man_a * dp.man_w),
            tree_node_bits: macs * u64::from((dp.man_a + 1) * (dp.man_w + 1)),
            fbea_bits: macs * u64::from(dp.add_width),
            sram_read_bits: noc + dram_w,
            sram_write_bits: c.glb_fill_bits * b,
            noc_bit_hops: noc as f64 * acc.mean_hops(),
            dram_read_bits: dram_r,
            dram_write_bits: dram_w,
        };
        let mut r = SimReport {
            machine: acc.name.clone(),
            kind,
            dataflow: Some(plan.dataflow),
            plan: Some(plan),
            cycles: c.cycles * b,
            compute_cycles: c.compute_cycles * b,
            memory_cycles: c.memory_cycles * b,
            reconfig_cycles: 0,
            seconds: 0.0,
            energy_j: 0.0,
            dram_bits_read: dram_r,
            dram_bits_written: dram_w,
            noc_bits: noc,
            pe_util: 0.0,
            macs,
            macs_per_cycle: 0.0,
            precision_loss_events: 0,
            peak_macs_per_cycle: dp.macs_per_cycle * acc.num_pes,
            actions,
        };
        r.refresh(acc.clock_hz);
        r
    }

    fn refresh(&mut self, clock_hz: f64) {
        self.seconds = self.cycles as f64 / clock_hz;
        self.macs_per_cycle = self.macs as f64 / self.cycles.max(1) as f64;
        self.pe_util = if self.peak_macs_per_cycle == 0 {
            0.0
        } else {
            (self.macs_per_cycle / self.peak_macs_per_cycle as f64).min(1.0)
        };
    }

    /// Adds `other`, run after `self` on the same machine.
    pub fn absorb(&mut self, other: &SimReport, clock_hz: f64) {
        if self.dataflow != other.dataflow {
            self.dataflow = None;
        }
        self.plan = None;
        self.cycles += other.cycles;
        self.compute_cycles += other.compute_cycles;
        self.memory_cycles += other.memory_cycles;
        self.reconfig_cycles += other.reconfig_cycles;
        self.energy_j += other.energy_j;
        self.dram_bits_read += other.dram_bits_read;
        self.dram_bits_written += other.dram_bits_written;
        self.noc_bits += other.noc_bits;
        // peak is a time-weighted mean so utilization stays meaningful
        let peak_work = self.peak_macs_per_cycle as f64 * (self.cycles - other.cycles) as f64
            + other.peak_macs_per_cycle as f64 * other.cycles as f64;
        self.peak_macs_per_cycle = (peak_work / self.cycles.max(1) as f64).round() as u64;
        self.macs += other.macs;
        self.precision_loss_events += other.precision_loss_events;
        let a = &mut self.actions;
        let o = &other.actions;
        a.macs += o.macs;
        a.prim_ands += o.prim_ands;
        a.tree_node_bits += o.tree_node_bits;
        a.fbea_bits += o.fbea_bits;
        a.sram_read_bits += o.sram_read_bits;
        a.sram_write_bits += o.sram_write_bits;
        a.noc_bit_hops += o.noc_bit_hops;
        a.dram_read_bits += o.dram_read_bits;
        a.dram_write_bits += o.dram_write_bits;
        self.refresh(clock_hz);
    }

    /// Scales every count by `times`, for a GEMM repeated across layers.
    pub fn repeated(&self, times: u64, clock_hz: f64) -> SimReport {
        let mut r = self.clone();
        r.cycles *= times;
        r.compute_cycles *= times;
        r.memory_cycles *= times;
        r.reconfig_cycles *= times;
        r.energy_j *= times as f64;
        r.dram_bits_read *= times;
        r.dram_bits_written *= times;
        r.noc_bits *= times;
        r.macs *= times;
        r.precision_loss_events *= times;
        let a = &mut r.actions;
        a.macs *= times;
        a.prim_ands *= times;
        a.tree_node_bits *= times;
        a.fbea_bits *= times;
        a.sram_read_bits *= times;
        a.sram_write_bits *= times;
        a.noc_bit_hops *= times as f64;
        a.dram_read_bits *= times;
        a.dram_write_bits *= times;
        r.refresh(clock_hz);
        r
    }
}

fn check_pe(acc: &AcceleratorConfig, pe_cfg: &PEConfig) -> Result<()> {
    acc.validate()?;
    pe_cfg.validate()?;
    if pe_cfg.reg_width != acc.reg_width {
        bail!(Config, "{} has {}-bit registers but the PE config says {}", acc.name, acc.reg_width, pe_cfg.reg_width);
    }
    Ok(())
}

fn flexibit_datapath(w: &GemmWorkload, pe_cfg: &PEConfig, padded: bool) -> Result<Datapath> {
    let dp = datapath(w.fmt_a, w.fmt_w, w.fmt_o, pe_cfg, padded);
    if dp.macs_per_cycle == 0 {
        bail!(Config, "{} x {} does not fit {}-bit registers", w.fmt_a, w.fmt_w, pe_cfg.reg_width);
    }
    Ok(dp)
}

/// Tiles and times `w` on FlexiBit under one dataflow.
pub fn plan_tiles(w: &GemmWorkload, acc: &AcceleratorConfig, df: Dataflow) -> Result<TilePlan> {
    let pe_cfg = acc.pe_config()?;
    let dp = flexibit_datapath(w, &pe_cfg, false)?;
    Ok(search(acc, &dp, w.dims()?, df)?.0)
}

pub fn simulate(w: &GemmWorkload, acc: &AcceleratorConfig, df: Dataflow, pe_cfg: &PEConfig) -> Result<SimReport> {
    check_pe(acc, pe_cfg)?;
    let dp = flexibit_datapath(w, pe_cfg, false)?;
    let (plan, cost) = search(acc, &dp, w.dims()?, df)?;
    Ok(SimReport::build(acc, MachineKind::FlexiBit, w, &dp, plan, cost))
}

/// Runs both dataflows and keeps the faster (WS on ties).
pub fn simulate_best(w: &GemmWorkload, acc: &AcceleratorConfig, pe_cfg: &PEConfig) -> Result<SimReport> {
    let ws = simulate(w, acc, Dataflow::WeightStationary, pe_cfg)?;
    let os = simulate(w, acc, Dataflow::OutputStationary, pe_cfg)?;
    Ok(if os.cycles < ws.cycles { os } else { ws })
}

/// Fixed-precision and power-of-two-fusion baselines. Both are
/// weight-stationary and keep data padded to their native widths.
pub fn simulate_baseline(w: &GemmWorkload, acc: &AcceleratorConfig, kind: MachineKind) -> Result<SimReport> {
    acc.validate()?;
    let cfg = acc.pe_config()?;
    let dp = match kind {
        MachineKind::TensorCoreLike => tensor_core_datapath(w, &cfg)?,
        MachineKind::BitFusionLike => bit_fusion_datapath(w, &cfg)?,
        MachineKind::FlexiBitPadded => flexibit_datapath(w, &cfg, true)?,
        MachineKind::FlexiBit => flexibit_datapath(w, &cfg, false)?,
    };
    let (plan, cost) = search(acc, &dp, w.dims()?, Dataflow::WeightStationary)?;
    Ok(SimReport::build(acc, kind, w, &dp, plan, cost))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ablation {
    pub packed: SimReport,
    pub padded: SimReport,
}

impl Ablation {
    /// Fractional latency saved by packing.
    pub fn improvement(&self) -> f64 {
        1.0 - self.packed.cycles as f64 / self.padded.cycles as f64
    }
}

/// FlexiBit with and without bit packing. The padded machine picks its best
/// plan and the packed one reuses it, so only the memory layout differs.
pub fn packing_ablation(w: &GemmWorkload, acc: &AcceleratorConfig) -> Result<Ablation> {
    let cfg = acc.pe_config()?;
    let dims = w.dims()?;
    let padded_dp = flexibit_datapath(w, &cfg, true)?;
    let packed_dp = flexibit_datapath(w, &cfg, false)?;
    let mut best: Option<(TilePlan, Cost)> = None;
    for df in Dataflow::ALL {
        let r = search(acc, &padded_dp, dims, df)?;
        if best.as_ref().map_or(true, |b| r.1.cycles < b.1.cycles) {
            best = Some(r);
        }
    }
    let (plan, padded_cost) = best.expect("two dataflows searched");
    let packed_cost = evaluate_plan(acc, &packed_dp, dims, &plan)?;
    Ok(Ablation {
        packed: SimReport::build(acc, MachineKind::FlexiBit, w, &packed_dp, plan, packed_cost),
        padded: SimReport::build(acc, MachineKind::FlexiBitPadded, w, &padded_dp, plan, padded_cost),
    })
}

/// Runs GEMMs back to back, charging a reconfiguration whenever the operand
/// formats change between neighbours.
pub fn simulate_sequence(ws: &[GemmWorkload], acc: &AcceleratorConfig, pe_cfg: &PEConfig) -> Result<Option<SimReport>> {
    let mut total: Option<SimReport> = None;
    let mut prev: Option<(FormatSpec, FormatSpec)> = None;
    for w in ws {
        let mut r = simulate_best(w, acc, pe_cfg)?;
        let pair = (w.fmt_a, w.fmt_w);
        if prev.is_some_and(|p| p != pair) {
            r.reconfig_cycles = RECONFIG_CYCLES;
            r.cycles += RECONFIG_CYCLES;
        }
        prev = Some(pair);
        match &mut total {
            None => total = Some(r),
            Some(t) => t.absorb(&r, acc.clock_hz),
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(s: &str) -> FormatSpec {
        s.parse().unwrap()
    }

    #[test]
    fn throughput_examples() {
        let cfg = PEConfig::default();
        assert_eq!(pe_throughput(f("e2m3"), f("e2m3"), &cfg), 16);
        assert_eq!(pe_throughput(f("e4m3"), f("e4m3"), &cfg), 9);
        assert_eq!(pe_throughput(f("e5m10"), f("e5m10"), &cfg), 1);
        let wide = FormatSpec::float(12, 11).unwrap();
        assert_eq!(pe_throughput(wide, wide, &cfg), 1);
    }

    #[test]
    fn upcasts() {
        assert_eq!(tensor_core_upcast(f("e2m3"), f("e2m1")).unwrap(), (f("e4m3"), f("e4m3")));
        assert_eq!(tensor_core_upcast(f("e5m10"), f("e4m3")).unwrap(), (f("fp16"), f("fp16")));
        assert_eq!(tensor_core_upcast(f("int4"), f("int8")).unwrap(), (f("int8"), f("int8")));
        assert_eq!(tensor_core_upcast(f("fp16"), f("int4")).unwrap(), (f("fp16"), f("fp16")));
        assert!(tensor_core_upcast(f("bf16"), f("e4m3")).is_err());
        assert_eq!(bit_fusion_width(f("e2m3")).unwrap(), 8);
        assert_eq!(bit_fusion_width(f("e2m1")).unwrap(), 4);
    }

    #[test]
    fn unit_gemm_takes_a_cycle() {
        let acc = AcceleratorConfig::mobile_a();
        let w = GemmWorkload::new(1, 1, 1, f("e2m3"), f("e2m3"), "one");
        let r = simulate(&w, &acc, Dataflow::WeightStationary, &PEConfig::default()).unwrap();
        assert!(r.cycles >= 1);
        assert!(r.pe_util <= 1.0);
    }

    #[test]
    fn mismatched_register_width_is_rejected() {
        let acc = AcceleratorConfig::mobile_a();
        let w = GemmWorkload::new(8, 8, 8, f("e2m3"), f("e2m3"), "x");
        let cfg = PEConfig::for_reg_width(32).unwrap();
        assert!(matches!(simulate(&w, &acc, Dataflow::WeightStationary, &cfg), Err(crate::Error::Config(_))));
    }

    #[test]
    fn reconfiguration_only_on_change() {
        let acc = AcceleratorConfig::mobile_a();
        let cfg = PEConfig::default();
        let a = GemmWorkload::new(64, 64, 64, f("e2m3"), f("e2m3"), "a");
        let b = GemmWorkload::new(64, 64, 64, f("e4m3"), f("e2m3"), "b");
        let same = simulate_sequence(&[a.clone(), a.clone()], &acc, &cfg).unwrap().unwrap();
        let diff = simulate_sequence(&[a.clone(), b.clone()], &acc, &cfg).unwrap().unwrap();
        assert_eq!(same.reconfig_cycles, 0);
        assert_eq!(diff.reconfig_cycles, RECONFIG_CYCLES);
        let alone = simulate_best(&b, &acc, &cfg).unwrap().cycles + simulate_best(&a, &acc, &cfg).unwrap().cycles;
        assert_eq!(diff.cycles, alone + RECONFIG_CYCLES);
    }

    #[test]
    fn packing_changes_memory_only() {
        let acc = AcceleratorConfig::mobile_a();
        let w = GemmWorkload::new(2048, 2048, 2048, f("e2m3"), f("e2m3"), "sq");
        let ab = packing_ablation(&w, &acc).unwrap();
        assert_eq!(ab.packed.plan, ab.padded.plan);
        assert_eq!(ab.packed.compute_cycles, ab.padded.compute_cycles);
        assert_eq!(ab.packed.dram_bits_read * 8, ab.padded.dram_bits_read * 6);
        assert!(ab.improvement() > 0.0 && ab.improvement() <= 0.25 + 1e-12);

        let w8 = GemmWorkload::new(512, 512, 512, f("e4m3"), f("e4m3"), "fp8");
        assert_eq!(packing_ablation(&w8, &acc).unwrap().improvement(), 0.0);
    }

    #[test]
    fn large_square_gemm_hits_peak() {
        let acc = AcceleratorConfig::cloud_b();
        let n = 8192u64;
        let w = GemmWorkload::new(n, n, n, f("e2m3"), f("e2m3"), "sq");
        let r = simulate_best(&w, &acc, &PEConfig::default()).unwrap();
        assert!(r.compute_cycles >= r.memory_cycles);
        let ideal = (n * n * n) as f64 / (acc.num_pes * 16) as f64;
        assert!((r.cycles as f64 / ideal - 1.0).abs() <= 0.05);
    }
}
