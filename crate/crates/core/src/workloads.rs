//! Transformer layers as GEMM lists.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::arch::GemmWorkload;
use crate::codec::FormatSpec;
use crate::error::{bail, Error, Result};

/// Widest operand the default PE register partition takes.
const MAX_PLAN_BITS: u32 = 16;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    pub seq_len: u64,
    pub num_layers: u64,
    pub d_model: u64,
    pub d_ff: u64,
    /// Defaults to `d_model / 64`.
    #[serde(default)]
    pub heads: Option<u64>,
    /// Include the two per-head attention GEMMs.
    #[serde(default = "yes")]
    pub attention: bool,
    /// Projection (activation, weight) formats; sweeps override it.
    #[serde(default = "fp16_pair")]
    pub precision: (FormatSpec, FormatSpec),
    /// Separate pair for the attention GEMMs.
    #[serde(default)]
    pub attention_precision: Option<(FormatSpec, FormatSpec)>,
}

fn yes() -> bool {
    true
}

fn fp16_pair() -> (FormatSpec, FormatSpec) {
    let h = FormatSpec::float(5, 10).expect("fp16");
    (h, h)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LayerClass {
    Qkv,
    Scores,
    Context,
    OutProj,
    FfnUp,
    FfnDown,
}

impl LayerClass {
    pub const ALL: [LayerClass; 6] = [
        LayerClass::Qkv,
        LayerClass::Scores,
        LayerClass::Context,
        LayerClass::OutProj,
        LayerClass::FfnUp,
        LayerClass::FfnDown,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LayerClass::Qkv => "qkv",
            LayerClass::Scores => "scores",
            LayerClass::Context => "context",
            LayerClass::OutProj => "out_proj",
            LayerClass::FfnUp => "ffn_up",
            LayerClass::FfnDown => "ffn_down",
        }
    }

    pub fn is_attention(&self) -> bool {
        matches!(self, LayerClass::Scores | LayerClass::Context)
    }
}

/// One GEMM class of a layer, repeated `layers` times.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerGemm {
    pub class: LayerClass,
    pub layers: u64,
    pub gemm: GemmWorkload,
}

impl LayerGemm {
    pub fn total_macs(&self) -> u64 {
        self.gemm.macs() * self.layers
    }
}

impl ModelSpec {
    fn new(name: &str, seq_len: u64, num_layers: u64, d_model: u64, d_ff: u64) -> Self {
        ModelSpec {
            name: name.to_string(),
            seq_len,
            num_layers,
            d_model,
            d_ff,
            heads: None,
            attention: true,
            precision: fp16_pair(),
            attention_precision: None,
        }
    }

    pub fn bert_base() -> Self {
        Self::new("Bert-Base-uncased", 2048, 12, 768, 3072)
    }

    pub fn llama2_7b() -> Self {
        Self::new("Llama-2-7b", 2048, 32, 4096, 11008)
    }

    pub fn llama2_70b() -> Self {
        Self::new("Llama-2-70b", 2048, 80, 8192, 28672)
    }

    pub fn gpt3() -> Self {
        Self::new("GPT-3", 2048, 96, 12288, 49152)
    }

    pub fn presets() -> Vec<Self> {
        vec![Self::bert_base(), Self::llama2_7b(), Self::llama2_70b(), Self::gpt3()]
    }

    pub fn by_name(name: &str) -> Result<Self> {
        let key = |s: &str| s.to_ascii_lowercase().replace(['-', '_', ' '], "");
        let k = key(name);
        Self::presets()
            .into_iter()
            .find(|p| key(&p.name) == k || (key(&p.name).starts_with(&k) && k.len() >= 4))
            .ok_or_else(|| Error::Config(format!("no model preset named {name:?}")))
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let spec: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn head_count(&self) -> u64 {
        self.heads.unwrap_or((self.d_model / 64).max(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seq_len == 0 || self.num_layers == 0 || self.d_model == 0 || self.d_ff == 0 {
            bail!(Config, "{}: dimensions must be positive", self.name);
        }
        let h = self.head_count();
        if h == 0 || self.d_model % h != 0 {
            bail!(Config, "{}: {h} heads do not divide d_model {}", self.name, self.d_model);
        }
        let pairs = std::iter::once(self.precision).chain(self.attention_precision);
        for (a, w) in pairs {
            check_pair(a, w)?;
        }
        Ok(())
    }

    pub fn with_precision(mut self, a: FormatSpec, w: FormatSpec) -> Self {
        self.precision = (a, w);
        self
    }

    /// Per-layer GEMMs, each tagged with how many layers repeat it.
    pub fn expand(&self) -> Vec<LayerGemm> {
        let (s, d, f) = (self.seq_len, self.d_model, self.d_ff);
        let h = self.head_count();
        let hd = d / h;
        let (pa, pw) = self.precision;
        let (aa, aw) = self.attention_precision.unwrap_or(self.precision);
        LayerClass::ALL
            .iter()
            .filter(|c| self.attention || !c.is_attention())
            .map(|&class| {
                let (m, n, k, batch) = match class {
                    LayerClass::Qkv => (s, 3 * d, d, 1),
                    LayerClass::Scores => (s, s, hd, h),
                    LayerClass::Context => (s, hd, s, h),
                    LayerClass::OutProj => (s, d, d, 1),
                    LayerClass::FfnUp => (s, f, d, 1),
                    LayerClass::FfnDown => (s, d, f, 1),
                };
                let (a, w) = if class.is_attention() { (aa, aw) } else { (pa, pw) };
                let label = format!("{}/{}", self.name, class.name());
                LayerGemm {
                    class,
                    layers: self.num_layers,
                    gemm: GemmWorkload::new(m, n, k, a, w, &label).with_batch(batch),
                }
            })
            .collect()
    }

    pub fn total_macs(&self) -> u64 {
        self.expand().iter().map(LayerGemm::total_macs).sum()
    }
}

fn check_pair(a: FormatSpec, w: FormatSpec) -> Result<()> {
    for f in [a, w] {
        if f.total_bits() > MAX_PLAN_BITS {
            bail!(Config, "{f} is wider than {MAX_PLAN_BITS} bits");
        }
    }
    Ok(())
}

/// The thirteen (activation, weight) pairs of the precision study, labelled
/// by total bits. Narrow floats use two exponent bits.
pub fn standard_pairs() -> Vec<(FormatSpec, FormatSpec)> {
    let fmt = |bits: u32| -> FormatSpec {
        let s = match bits {
            16 => "e5m10",
            8 => "e4m3",
            6 => "e2m3",
            5 => "e2m2",
            4 => "e2m1",
            _ => unreachable!(),
        };
        s.parse().expect("static format")
    };
    [
        (16, 16),
        (16, 8),
        (16, 6),
        (16, 5),
        (16, 4),
        (8, 8),
        (8, 6),
        (8, 4),
        (6, 6),
        (6, 5),
        (6, 4),
        (5, 5),
        (4, 4),
    ]
    .iter()
    .map(|&(a, w)| (fmt(a), fmt(w)))
    .collect()
}

/// One model re-expanded at each pair. Pairs the PE cannot take are skipped
/// with a warning.
pub fn precision_sweep(model: &ModelSpec, pairs: &[(FormatSpec, FormatSpec)]) -> Vec<((FormatSpec, FormatSpec), Vec<LayerGemm>)> {
    pairs
        .iter()
        .filter_map(|&(a, w)| match check_pair(a, w) {
            Ok(()) => Some(((a, w), model.clone().with_precision(a, w).expand())),
            Err(e) => {
                log::warn!("skipping {a} x {w}: {e}");
                None
            }
        })
        .collect()
}
