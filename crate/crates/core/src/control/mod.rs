//! Static control generation: everything the PE needs for one format pair.

mod bundle;
mod config;
mod fbea;
mod fbrt;
mod primgen;
mod separator;

pub use bundle::{
    compile_bundle, compile_bundle_with, product_sig_width, AlignPolicy, AnuConfig, ControlBundle, CstConfig,
    RECONFIG_CYCLES,
};
pub use config::PEConfig;
pub use fbea::{compile_fbea, compile_fbea_width, FbeaConfig};
pub use fbrt::{compile_fbrt, has_link, leaf_weights, FbrtConfig, Merge, ModeKind, NodeControl, Side, SwitchMode};
pub use primgen::{compile_primgen, PrimPass, PrimRoutes, PrimSource};
pub use separator::{compile_separator, elements_per_load, Route, SeparatorRoutes};

pub(crate) use fbrt::compile_labels;
