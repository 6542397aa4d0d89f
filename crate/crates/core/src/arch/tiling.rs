//! Buffer-constrained tiling and the per-phase roofline.
//!
//! A GEMM `C[MxN] = A[MxK] * W[KxN]` is cut into global-buffer tiles. Under
//! weight-stationary (WS) a `Tk x Tn` weight tile stays put while all of `M`
//! streams past it, with K mapped to the array's x axis and N to y. Under
//! output-stationary (OS) a `Tm x Tn` output tile stays put while all of `K`
//! streams, with M on x and N on y. One phase is one stationary tile; its
//! cost is the max of compute, DRAM and NoC time, and phases add up.

use serde::{Deserialize, Serialize};

use super::config::AcceleratorConfig;
use crate::error::{bail, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dataflow {
    WeightStationary,
    OutputStationary,
}

impl Dataflow {
    pub const ALL: [Dataflow; 2] = [Dataflow::WeightStationary, Dataflow::OutputStationary];

    pub fn short(&self) -> &'static str {
        match self {
            Dataflow::WeightStationary => "WS",
            Dataflow::OutputStationary => "OS",
        }
    }
}

impl std::fmt::Display for Dataflow {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.short())
    }
}

/// What one PE computes per cycle and how wide each tensor is in memory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Datapath {
    pub macs_per_cycle: u64,
    pub bits_a: u64,
    pub bits_w: u64,
    pub bits_o: u64,
    pub man_a: u32,
    pub man_w: u32,
    pub add_width: u32,
}

/// GEMM dimensions for one batch element.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub m: u64,
    pub n: u64,
    pub k: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TilePlan {
    pub dataflow: Dataflow,
    pub tile_m: u64,
    pub tile_n: u64,
    pub tile_k: u64,
    /// Stationary tiles visited.
    pub steps: u64,
    /// Uses of each weight tile per DRAM fetch (`M / tile_m` under WS).
    pub weight_reuse: f64,
    /// Uses of each partial output before it leaves the array (`K / tile_k` under OS).
    pub output_reuse: f64,
    pub wgt_glb_bits: u64,
    pub act_out_glb_bits: u64,
    /// Element width the split of stationary data across PE local buffers
    /// was planned for.
    pub pe_tile_bits: u64,
}

/// Traffic and time of one plan, for one batch element.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Cost {
    pub cycles: u64,
    pub compute_cycles: u64,
    pub memory_cycles: u64,
    pub dram_read_bits: u64,
    pub dram_write_bits: u64,
    pub noc_w_bits: u64,
    pub noc_a_bits: u64,
    /// Bits written into the global buffers from the array.
    pub glb_fill_bits: u64,
}

/// `(size, count)` pieces of a dimension cut into tiles of `t`.
fn parts(d: u64, t: u64) -> [(u64, u64); 2] {
    [(t, d / t), (d % t, u64::from(d % t > 0))]
}

/// Array passes needed when each PE must hold a `rows x cols` block of
/// `bits`-wide values in `cap` bits. Columns are split first.
fn local_passes(rows: u64, cols: u64, bits: u64, cap: u64) -> (u64, u64) {
    if rows * cols * bits <= cap {
        return (1, 1);
    }
    let cols_fit = cap / (rows * bits);
    if cols_fit >= 1 {
        (1, cols.div_ceil(cols_fit))
    } else {
        ((rows * bits).div_ceil(cap.max(1)), cols)
    }
}

/// Tile sizes tried per dimension: powers of two with quarter steps between
/// them, so narrow formats can use the buffer capacity they free up.
fn candidates(d: u64) -> Vec<u64> {
    let mut c: Vec<u64> = (0..62)
        .map(|i| 1u64 << i)
        .take_while(|t| *t < d)
        .flat_map(|p| [4 * p, 5 * p, 6 * p, 7 * p])
        .filter(|q| q % 4 == 0)
        .map(|q| q / 4)
        .filter(|t| *t < d)
        .collect();
    c.sort_unstable();
    c.dedup();
    c.push(d);
    c
}

struct Ctx<'a> {
    acc: &'a AcceleratorConfig,
    dp: &'a Datapath,
    d: Dims,
}

impl Ctx<'_> {
    fn fits(&self, df: Dataflow, tm: u64, tn: u64, tk: u64) -> Option<(u64, u64)> {
        let dp = self.dp;
        let w = tk * tn * dp.bits_w;
        let a = match df {
            Dataflow::WeightStationary => tm * (tk * dp.bits_a + tn * dp.bits_o),
            Dataflow::OutputStationary => tm * tk * dp.bits_a + tm * tn * dp.bits_o,
        };
        (w <= self.acc.wgt_glb_bytes * 8 && a <= self.acc.act_out_glb_bytes * 8).then_some((w, a))
    }

    fn evaluate(&self, df: Dataflow, tm: u64, tn: u64, tk: u64, pe_bits: u64) -> Cost {
        let Dims { m, n, k } = self.d;
        let dp = self.dp;
        let acc = self.acc;
        let (ax, ay) = (acc.array_x, acc.array_y);
        let tput = dp.macs_per_cycle;
        let cap = acc.local_bits() / 2;
        let (mt, nt, kt) = (m.div_ceil(tm), n.div_ceil(tn), k.div_ceil(tk));
        let (bw_dram, bw_w, bw_a) = (acc.dram_bits_per_cycle(), acc.noc_w_bits_per_cycle(), acc.noc_a_bits_per_cycle());
        let (ba, bw, bo) = (dp.bits_a as f64, dp.bits_w as f64, dp.bits_o as f64);

        let mut c = Cost::default();
        let mut cycles = 0.0;
        let mut compute_total = 0.0;
        let mut memory_total = 0.0;
        let mut noc_w = 0.0;
        let mut noc_a = 0.0;
        let mut fill = 0.0;
        match df {
            Dataflow::WeightStationary => {
                let acts_resident = mt == 1 && kt == 1;
                let psum_resident = mt == 1;
                c.dram_read_bits = k * n * dp.bits_w
                    + m * k * dp.bits_a * if acts_resident { 1 } else { nt }
                    + if psum_resident { 0 } else { m * n * dp.bits_o * (kt - 1) };
                c.dram_write_bits = m * n * dp.bits_o * if psum_resident { 1 } else { kt };
                for (tn_, cn) in parts(n, tn) {
                    for (tk_, ck) in parts(k, tk) {
                        let count = cn * ck;
                        if count == 0 {
                            continue;
                        }
                        let (kpe, npe) = (tk_.div_ceil(ax), tn_.div_ceil(ay));
                        let mut compute = 0.0;
                        for (tm_, cm) in parts(m, tm) {
                            compute += (cm * (tm_ * kpe * npe).div_ceil(tput)) as f64;
                        }
                        let (nk, nn) = (tk_ as f64, tn_ as f64);
                        let a = m as f64 * nk * ba * if acts_resident { 1.0 / nt as f64 } else { 1.0 };
                        let o = m as f64 * nn * bo * if psum_resident { 1.0 / kt as f64 } else { 2.0 - 1.0 / kt as f64 };
                        let dram = (nk * nn * bw + a + o) / bw_dram;
                        let (ap_k, ap_n) = local_passes(kpe, npe, pe_bits, cap);
                        let w_net = nk * nn * bw;
                        let a_net = m as f64 * nk * ba * ap_n as f64
                            + m as f64 * nn * bo * ((2 * ap_k - 1) as f64 + 1.0 - 1.0 / kt as f64);
                        let noc = (w_net / bw_w).max(a_net / bw_a);
                        let memory = dram.max(noc);
                        let f = count as f64;
                        cycles += f * compute.max(memory);
                        compute_total += f * compute;
                        memory_total += f * memory;
                        noc_w += f * w_net;
                        noc_a += f * a_net;
                        fill += f * m as f64 * nn * bo * ap_k as f64;
                    }
                }
            }
            Dataflow::OutputStationary => {
                let wgts_resident = kt == 1 && nt == 1;
                c.dram_read_bits = m * k * dp.bits_a * if kt == 1 { 1 } else { nt }
                    + k * n * dp.bits_w * if wgts_resident { 1 } else { mt };
                c.dram_write_bits = m * n * dp.bits_o;
                for (tm_, cm) in parts(m, tm) {
                    for (tn_, cn) in parts(n, tn) {
                        let count = cm * cn;
                        if count == 0 {
                            continue;
                        }
                        let (mpe, npe) = (tm_.div_ceil(ax), tn_.div_ceil(ay));
                        let compute = (mpe * npe * k).div_ceil(tput) as f64;
                        let (nm, nn, nk) = (tm_ as f64, tn_ as f64, k as f64);
                        let a = nm * nk * ba * if kt == 1 { 1.0 / nt as f64 } else { 1.0 };
                        let w = nk * nn * bw * if wgts_resident { 1.0 / mt as f64 } else { 1.0 };
                        let dram = (a + w + nm * nn * bo) / bw_dram;
                        let (ap_m, ap_n) = local_passes(mpe, npe, pe_bits, cap);
                        let w_net = nk * nn * bw * ap_m as f64;
                        let a_net = nm * nk * ba * ap_n as f64 + nm * nn * bo;
                        let noc = (w_net / bw_w).max(a_net / bw_a);
                        let memory = dram.max(noc);
                        let f = count as f64;
                        cycles += f * compute.max(memory);
                        compute_total += f * compute;
                        memory_total += f * memory;
                        noc_w += f * w_net;
                        noc_a += f * a_net;
                        fill += f * nm * nn * bo;
                    }
                }
            }
        }
        c.cycles = (cycles.ceil() as u64).max(1);
        c.compute_cycles = compute_total.ceil() as u64;
        c.memory_cycles = memory_total.ceil() as u64;
        c.noc_w_bits = noc_w.round() as u64;
        c.noc_a_bits = noc_a.round() as u64;
        c.glb_fill_bits = fill.round() as u64 + c.dram_read_bits;
        c
    }

    fn stationary_bits(&self, df: Dataflow) -> u64 {
        match df {
            Dataflow::WeightStationary => self.dp.bits_w,
            Dataflow::OutputStationary => self.dp.bits_o,
        }
    }

    fn plan(&self, df: Dataflow, tm: u64, tn: u64, tk: u64, occ: (u64, u64)) -> TilePlan {
        let Dims { m, n, k } = self.d;
        let (mt, nt, kt) = (m.div_ceil(tm), n.div_ceil(tn), k.div_ceil(tk));
        TilePlan {
            dataflow: df,
            tile_m: tm,
            tile_n: tn,
            tile_k: tk,
            steps: match df {
                Dataflow::WeightStationary => nt * kt,
                Dataflow::OutputStationary => mt * nt,
            },
            weight_reuse: match df {
                Dataflow::WeightStationary => m as f64 / tm as f64,
                Dataflow::OutputStationary => 1.0,
            },
            output_reuse: match df {
                Dataflow::WeightStationary => 1.0,
                Dataflow::OutputStationary => k as f64 / tk as f64,
            },
            wgt_glb_bits: occ.0,
            act_out_glb_bits: occ.1,
            pe_tile_bits: self.stationary_bits(df),
        }
    }
}

/// Searches tile shapes for `df` and returns the fastest plan with its cost.
/// Ties go to less DRAM traffic, then to the earlier candidate.
pub(crate) fn search(acc: &AcceleratorConfig, dp: &Datapath, d: Dims, df: Dataflow) -> Result<(TilePlan, Cost)> {
    if d.m == 0 || d.n == 0 || d.k == 0 {
        bail!(Shape, "GEMM dimensions must be positive");
    }
    if dp.macs_per_cycle == 0 {
        bail!(Config, "operands do not fit the PE registers");
    }
    let ctx = Ctx { acc, dp, d };
    let a_cap = acc.act_out_glb_bytes * 8;
    let w_cap = acc.wgt_glb_bytes * 8;
    let mut best: Option<(TilePlan, Cost)> = None;
    let mut consider = |tm: u64, tn: u64, tk: u64| {
        if tm == 0 || tn == 0 || tk == 0 {
            return;
        }
        let Some(occ) = ctx.fits(df, tm, tn, tk) else {
            return;
        };
        let cost = ctx.evaluate(df, tm, tn, tk, ctx.stationary_bits(df));
        let key = |p: &TilePlan, c: &Cost| (c.cycles, c.dram_read_bits + c.dram_write_bits, p.steps);
        let plan = ctx.plan(df, tm, tn, tk, occ);
        let better = match &best {
            None => true,
            Some((bp, bc)) => key(&plan, &cost) < key(bp, bc),
        };
        if better {
            best = Some((plan, cost));
        }
    };
    match df {
        Dataflow::WeightStationary => {
            for tk in candidates(d.k) {
                for tn in candidates(d.n) {
                    let per_row = tk * dp.bits_a + tn * dp.bits_o;
                    consider((a_cap / per_row).min(d.m), tn, tk);
                }
            }
        }
        Dataflow::OutputStationary => {
            for tm in candidates(d.m) {
                for tn in candidates(d.n) {
                    let out = tm * tn * dp.bits_o;
                    if out >= a_cap {
                        continue;
                    }
                    let tk = ((a_cap - out) / (tm * dp.bits_a)).min(w_cap / (tn * dp.bits_w)).min(d.k);
                    consider(tm, tn, tk);
                }
            }
        }
    }
    best.ok_or_else(|| crate::Error::Config(format!("no {df} tiling fits the buffers of {}", acc.name)))
}

/// Cost of a fixed plan, including its local-buffer split, under a
/// (possibly narrower) datapath.
pub(crate) fn evaluate_plan(acc: &AcceleratorConfig, dp: &Datapath, d: Dims, plan: &TilePlan) -> Result<Cost> {
    let ctx = Ctx { acc, dp, d };
    if ctx.fits(plan.dataflow, plan.tile_m, plan.tile_n, plan.tile_k).is_none() {
        bail!(Config, "plan does not fit the buffers of {}", acc.name);
    }
    Ok(ctx.evaluate(plan.dataflow, plan.tile_m, plan.tile_n, plan.tile_k, plan.pe_tile_bits))
}
