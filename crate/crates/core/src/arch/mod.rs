//! Accelerator-level cycle model: PE array, buffers, NoC and DRAM.

mod config;
mod sim;
mod tiling;

pub use config::AcceleratorConfig;
pub use sim::{
    pe_throughput, packing_ablation, plan_tiles, simulate, simulate_baseline, simulate_best, simulate_sequence,
    tensor_core_upcast, Ablation, ActionCounts, GemmWorkload, MachineKind, SimReport,
};
pub use tiling::{Datapath, Dataflow, TilePlan};
