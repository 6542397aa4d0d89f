//! Manifest-driven sweeps over models, machines and precision pairs.
//!
//! Points are simulated in parallel and written in a fixed order, so the
//! CSV bytes depend only on the manifest.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arch::{
    packing_ablation, simulate, simulate_baseline, simulate_best, AcceleratorConfig, Dataflow, GemmWorkload, MachineKind,
    SimReport,
};
use crate::codec::FormatSpec;
use crate::cost::{self, EnergyTable};
use crate::error::{bail, Error, Result};
use crate::workloads::{precision_sweep, standard_pairs, LayerGemm, ModelSpec};

pub const SCHEMA: &str = "# schema v1";

/// Columns of the run CSV. Counts and times cover all `layers` repeats.
///
/// | column | meaning |
/// |---|---|
/// | model, layer_class, layers | workload and how often it repeats |
/// | machine, kind | machine size and design |
/// | act_fmt, wgt_fmt | precision pair |
/// | dataflow | `WS` or `OS` |
/// | m, n, k, batch | GEMM shape of one repeat |
/// | macs | multiply-accumulates |
/// | cycles, compute_cycles, memory_cycles | latency and its bounds |
/// | seconds | latency at the machine clock |
/// | dram_bits, noc_bits | traffic after packing |
/// | pe_util | achieved over peak MACs/cycle |
/// | energy_j and energy_{compute,sram,noc,dram}_j | priced by the energy table |
/// | area_mm2 | die area from the table |
/// | perf_per_mm2 | MACs/s/mm² |
/// | edp_js | energy × seconds |
/// | norm_latency | cycles over the TensorCoreLike cycles of the same point; empty if that baseline cannot run it |
pub const RUN_COLUMNS: [&str; 26] = [
    "model",
    "layer_class",
    "layers",
    "machine",
    "kind",
    "act_fmt",
    "wgt_fmt",
    "dataflow",
    "m",
    "n",
    "k",
    "batch",
    "macs",
    "cycles",
    "compute_cycles",
    "memory_cycles",
    "seconds",
    "dram_bits",
    "noc_bits",
    "pe_util",
    "energy_j",
    "energy_compute_j",
    "energy_sram_j",
    "energy_noc_j",
    "energy_dram_j",
    "area_mm2",
];

const RUN_TAIL: [&str; 3] = ["perf_per_mm2", "edp_js", "norm_latency"];

/// Columns of the ablation CSV. Latencies are normalized to TensorCoreLike.
pub const ABLATION_COLUMNS: [&str; 14] = [
    "model",
    "layer_class",
    "layers",
    "machine",
    "act_fmt",
    "wgt_fmt",
    "dataflow",
    "tc_cycles",
    "padded_cycles",
    "packed_cycles",
    "padded_norm",
    "packed_norm",
    "improvement",
    "memory_bound",
];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataflowPolicy {
    Ws,
    Os,
    #[default]
    Best,
}

impl std::str::FromStr for DataflowPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ws" => Ok(DataflowPolicy::Ws),
            "os" => Ok(DataflowPolicy::Os),
            "best" => Ok(DataflowPolicy::Best),
            _ => Err(Error::Config(format!("unknown dataflow policy {s:?}"))),
        }
    }
}

/// Everything a sweep needs. Machines and models are preset names or paths
/// to TOML files; relative paths resolve against `base_dir`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    #[serde(default = "default_machines")]
    pub machines: Vec<String>,
    #[serde(default = "default_models")]
    pub models: Vec<String>,
    /// Defaults to the thirteen standard pairs.
    #[serde(default = "standard_pairs")]
    pub pairs: Vec<(FormatSpec, FormatSpec)>,
    #[serde(default)]
    pub dataflow: DataflowPolicy,
    #[serde(default)]
    pub energy_table: Option<PathBuf>,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    /// Seeds the sampled validation sweeps; the analytic sweep has no randomness.
    #[serde(default)]
    pub seed: u64,
    /// Also emit TensorCoreLike and BitFusionLike rows.
    #[serde(default = "yes")]
    pub baselines: bool,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_machines() -> Vec<String> {
    vec!["Mobile-A".into()]
}

fn default_models() -> Vec<String> {
    vec!["Bert-Base-uncased".into()]
}

fn default_out() -> PathBuf {
    PathBuf::from("results")
}

fn yes() -> bool {
    true
}

impl Default for RunManifest {
    fn default() -> Self {
        RunManifest {
            machines: default_machines(),
            models: default_models(),
            pairs: standard_pairs(),
            dataflow: DataflowPolicy::Best,
            energy_table: None,
            output_dir: default_out(),
            seed: 0,
            baselines: true,
            base_dir: PathBuf::from("."),
        }
    }
}

fn is_path(s: &str) -> bool {
    s.ends_with(".toml") || s.contains('/')
}

impl RunManifest {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut m = Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn machine_configs(&self) -> Result<Vec<AcceleratorConfig>> {
        self.machines
            .iter()
            .map(|s| if is_path(s) { AcceleratorConfig::load(&self.resolve(Path::new(s))) } else { AcceleratorConfig::by_name(s) })
            .collect()
    }

    pub fn model_specs(&self) -> Result<Vec<ModelSpec>> {
        self.models
            .iter()
            .map(|s| if is_path(s) { ModelSpec::load(&self.resolve(Path::new(s))) } else { ModelSpec::by_name(s) })
            .collect()
    }

    pub fn table(&self) -> Result<EnergyTable> {
        match &self.energy_table {
            Some(p) => EnergyTable::load(&self.resolve(p)),
            None => Ok(EnergyTable::default()),
        }
    }

    /// Checks that every referenced file loads.
    pub fn validate(&self) -> Result<()> {
        if self.machines.is_empty() || self.models.is_empty() {
            bail!(Config, "manifest needs at least one machine and one model");
        }
        self.machine_configs()?;
        self.model_specs()?;
        self.table()?;
        Ok(())
    }
}

/// One CSV row of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRow {
    pub model: String,
    pub class: String,
    pub layers: u64,
    pub gemm: GemmWorkload,
    pub report: SimReport,
    pub energy: cost::EnergyBreakdown,
    pub area_mm2: f64,
    pub norm_latency: Option<f64>,
}

struct Point<'a> {
    model: &'a ModelSpec,
    acc: &'a AcceleratorConfig,
    pair: (FormatSpec, FormatSpec),
    layer: LayerGemm,
}

fn points<'a>(models: &'a [ModelSpec], machines: &'a [AcceleratorConfig], pairs: &[(FormatSpec, FormatSpec)]) -> Vec<Point<'a>> {
    let mut out = Vec::new();
    for model in models {
        for (pair, layers) in precision_sweep(model, pairs) {
            for layer in layers {
                for acc in machines {
                    out.push(Point { model, acc, pair, layer: layer.clone() });
                }
            }
        }
    }
    out
}

fn flexibit_reports(p: &Point, policy: DataflowPolicy) -> Result<Vec<SimReport>> {
    let cfg = p.acc.pe_config()?;
    let g = &p.layer.gemm;
    Ok(match policy {
        DataflowPolicy::Ws => vec![simulate(g, p.acc, Dataflow::WeightStationary, &cfg)?],
        DataflowPolicy::Os => vec![simulate(g, p.acc, Dataflow::OutputStationary, &cfg)?],
        DataflowPolicy::Best => vec![simulate_best(g, p.acc, &cfg)?],
    })
}

fn baseline(p: &Point, kind: MachineKind) -> Option<SimReport> {
    match simulate_baseline(&p.layer.gemm, p.acc, kind) {
        Ok(r) => Some(r),
        Err(e) => {
            log::warn!("{} cannot run {}: {e}", kind.label(), p.layer.gemm.label);
            None
        }
    }
}

fn eval_point(p: &Point, m: &RunManifest, table: &EnergyTable) -> Result<Vec<RunRow>> {
    let times = p.layer.layers;
    let tc = baseline(p, MachineKind::TensorCoreLike).map(|r| r.repeated(times, p.acc.clock_hz));
    let mut reports: Vec<SimReport> = flexibit_reports(p, m.dataflow)?;
    if m.baselines {
        reports.extend(tc.clone());
        reports.extend(baseline(p, MachineKind::BitFusionLike));
    }
    reports
        .into_iter()
        .map(|r| {
            let r = if r.kind == MachineKind::TensorCoreLike { r } else { r.repeated(times, p.acc.clock_hz) };
            let r = cost::priced(&r, table);
            Ok(RunRow {
                model: p.model.name.clone(),
                class: p.layer.class.name().to_string(),
                layers: times,
                gemm: p.layer.gemm.clone(),
                energy: cost::energy(&r, table),
                area_mm2: table.machine_area_mm2(p.acc, r.kind)?,
                norm_latency: tc.as_ref().map(|t| r.cycles as f64 / t.cycles.max(1) as f64),
                report: r,
            })
        })
        .collect()
}

/// Simulates every point of the manifest. Row order is model, pair, layer
/// class, machine, then design, whatever the thread count.
pub fn run(m: &RunManifest) -> Result<Vec<RunRow>> {
    let machines = m.machine_configs()?;
    let models = m.model_specs()?;
    let table = m.table()?;
    let pts = points(&models, &machines, &m.pairs);
    let chunks: Vec<Vec<RunRow>> = pts.par_iter().map(|p| eval_point(p, m, &table)).collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

fn fmt_f(x: f64) -> String {
    format!("{x:.6e}")
}

pub fn write_run_csv<W: Write>(rows: &[RunRow], mut out: W) -> Result<()> {
    writeln!(out, "{SCHEMA}")?;
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(RUN_COLUMNS.iter().chain(RUN_TAIL.iter())).map_err(io)?;
    for row in rows {
        let r = &row.report;
        let g = &row.gemm;
        let e = &row.energy;
        let rec = [
            row.model.clone(),
            row.class.clone(),
            row.layers.to_string(),
            r.machine.clone(),
            r.kind.label().to_string(),
            g.fmt_a.to_string(),
            g.fmt_w.to_string(),
            r.dataflow.map(|d| d.short().to_string()).unwrap_or_default(),
            g.m.to_string(),
            g.n.to_string(),
            g.k.to_string(),
            g.batch.to_string(),
            r.macs.to_string(),
            r.cycles.to_string(),
            r.compute_cycles.to_string(),
            r.memory_cycles.to_string(),
            fmt_f(r.seconds),
            (r.dram_bits_read + r.dram_bits_written).to_string(),
            r.noc_bits.to_string(),
            format!("{:.6}", r.pe_util),
            fmt_f(e.total()),
            fmt_f(e.compute_j),
            fmt_f(e.sram_j),
            fmt_f(e.noc_j),
            fmt_f(e.dram_j),
            format!("{:.4}", row.area_mm2),
            fmt_f(cost::perf_per_area(r, row.area_mm2)?),
            fmt_f(cost::edp(r.seconds, e.total())),
            row.norm_latency.map(|x| format!("{x:.6}")).unwrap_or_default(),
        ];
        w.write_record(&rec).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Totals per (model, machine, design, pair) for the terminal.
pub fn summary(rows: &[RunRow]) -> String {
    use std::collections::BTreeMap;
    let mut acc: BTreeMap<(String, String, String, String), (u64, f64)> = BTreeMap::new();
    let mut order = Vec::new();
    for row in rows {
        let r = &row.report;
        let key = (
            row.model.clone(),
            r.machine.clone(),
            format!("{} x {}", row.gemm.fmt_a, row.gemm.fmt_w),
            r.kind.label().to_string(),
        );
        let e = acc.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            (0, 0.0)
        });
        e.0 += r.cycles;
        e.1 += row.energy.total();
    }
    let mut s = format!("{:<20} {:<10} {:<16} {:<15} {:>16} {:>12} {:>8}\n", "model", "machine", "pair", "design", "cycles", "energy_j", "vs TC");
    for key in &order {
        let (cycles, energy) = acc[key];
        let tc = acc.get(&(key.0.clone(), key.1.clone(), key.2.clone(), MachineKind::TensorCoreLike.label().to_string()));
        let norm = tc.map(|t| format!("{:.3}", cycles as f64 / t.0.max(1) as f64)).unwrap_or_else(|| "-".into());
        s += &format!("{:<20} {:<10} {:<16} {:<15} {:>16} {:>12.4e} {:>8}\n", key.0, key.1, key.2, key.3, cycles, energy, norm);
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub model: String,
    pub class: String,
    pub layers: u64,
    pub machine: String,
    pub pair: (FormatSpec, FormatSpec),
    pub dataflow: Dataflow,
    pub tc_cycles: Option<u64>,
    pub padded_cycles: u64,
    pub packed_cycles: u64,
    pub memory_bound: bool,
}

impl AblationRow {
    pub fn improvement(&self) -> f64 {
        1.0 - self.packed_cycles as f64 / self.padded_cycles.max(1) as f64
    }
}

/// Packed versus padded storage on the same plan, per layer.
pub fn ablate(m: &RunManifest) -> Result<Vec<AblationRow>> {
    let machines = m.machine_configs()?;
    let models = m.model_specs()?;
    let pts = points(&models, &machines, &m.pairs);
    pts.par_iter()
        .map(|p| {
            let ab = packing_ablation(&p.layer.gemm, p.acc)?;
            let times = p.layer.layers;
            Ok(AblationRow {
                model: p.model.name.clone(),
                class: p.layer.class.name().to_string(),
                layers: times,
                machine: p.acc.name.clone(),
                pair: p.pair,
                dataflow: ab.padded.dataflow.expect("single GEMM has a dataflow"),
                tc_cycles: baseline(p, MachineKind::TensorCoreLike).map(|r| r.cycles * times),
                padded_cycles: ab.padded.cycles * times,
                packed_cycles: ab.packed.cycles * times,
                memory_bound: ab.padded.memory_cycles > ab.padded.compute_cycles,
            })
        })
        .collect()
}

pub fn write_ablation_csv<W: Write>(rows: &[AblationRow], mut out: W) -> Result<()> {
    writeln!(out, "{SCHEMA}")?;
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(ABLATION_COLUMNS).map_err(io)?;
    for r in rows {
        let norm = |c: u64| r.tc_cycles.map(|t| format!("{:.6}", c as f64 / t.max(1) as f64)).unwrap_or_default();
        let rec = [
            r.model.clone(),
            r.class.clone(),
            r.layers.to_string(),
            r.machine.clone(),
            r.pair.0.to_string(),
            r.pair.1.to_string(),
            r.dataflow.short().to_string(),
            r.tc_cycles.map(|c| c.to_string()).unwrap_or_default(),
            r.padded_cycles.to_string(),
            r.packed_cycles.to_string(),
            norm(r.padded_cycles),
            norm(r.packed_cycles),
            format!("{:.6}", r.improvement()),
            r.memory_bound.to_string(),
        ];
        w.write_record(&rec).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}
