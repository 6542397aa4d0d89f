//! Switch configuration for the reduction tree.
//!
//! Leaves hold primitives; every internal node sees the partial products its
//! two children pass up. A node may merge the rightmost partial of its left
//! child with the leftmost partial of its right child, either by
//! concatenation (both pieces in one segment) or by shift-add. Adjacent nodes
//! with different parents are joined by an extra link; the left node may hand
//! its rightmost partial across so the right node finishes the product
//! without climbing to the common ancestor. Finished products leave the tree
//! at the node that completes them.

use serde::{Deserialize, Serialize};

use super::config::PEConfig;
use super::primgen::PrimPass;
use crate::error::{bail, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Merge {
    Concat,
    Add,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModeKind {
    D,
    C2,
    C3,
    A2,
    A3,
    ConcatAdd,
    Idle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SwitchMode {
    pub kind: ModeKind,
    pub side: Side,
}

/// Everything one node does in a pass. `mode` is the summary name; the other
/// fields are what the datapath acts on.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeControl {
    pub mode: SwitchMode,
    pub child_merge: Option<Merge>,
    /// Hand the rightmost partial to the right neighbour.
    pub link_out: bool,
    /// Fold the left neighbour's partial into this node's leftmost one.
    pub link_in: Option<Merge>,
    /// Operations finished here.
    pub emits: Vec<u32>,
}

impl NodeControl {
    fn idle() -> Self {
        NodeControl {
            mode: SwitchMode {
                kind: ModeKind::Idle,
                side: Side::None,
            },
            child_merge: None,
            link_out: false,
            link_in: None,
            emits: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FbrtConfig {
    pub leaves: usize,
    pub oids: Vec<Option<u32>>,
    pub sids: Vec<Option<u32>>,
    /// `levels[0]` combines leaf pairs; the last level is the root.
    pub levels: Vec<Vec<NodeControl>>,
}

impl FbrtConfig {
    pub fn mode_counts(&self) -> std::collections::BTreeMap<String, usize> {
        let mut m = std::collections::BTreeMap::new();
        for n in self.levels.iter().flatten() {
            *m.entry(format!("{:?}", n.mode.kind)).or_insert(0) += 1;
        }
        m
    }

    /// Leaves whose significance within their operation is `i + j`.
    pub fn leaf_weights(&self) -> Vec<Option<u32>> {
        leaf_weights(&self.oids, &self.sids)
    }
}

/// Extra links join node `2k+1` and `2k+2` of a level.
pub fn has_link(index: usize, level_len: usize) -> Option<usize> {
    if index % 2 == 1 && index + 1 < level_len {
        Some(index + 1)
    } else if index % 2 == 0 && index > 0 {
        Some(index - 1)
    } else {
        None
    }
}

/// Significance of each leaf: its segment id plus its position in the segment.
pub fn leaf_weights(oids: &[Option<u32>], sids: &[Option<u32>]) -> Vec<Option<u32>> {
    let mut out = vec![None; oids.len()];
    let mut run = 0;
    for b in 0..oids.len() {
        let (Some(o), Some(s)) = (oids[b], sids[b]) else {
            continue;
        };
        if b > 0 && oids[b - 1] == Some(o) && sids[b - 1] == Some(s) {
            run += 1;
        } else {
            run = 0;
        }
        out[b] = Some(s + run);
    }
    out
}

/// A partial product: the contiguous leaves `[lo, hi]` of one operation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Piece {
    pub oid: u32,
    pub sid_lo: u32,
    pub sid_hi: u32,
    pub lo: usize,
    pub hi: usize,
}

impl Piece {
    pub fn merge_kind(&self, other: &Piece) -> Merge {
        if self.sid_lo == self.sid_hi && other.sid_lo == other.sid_hi && self.sid_lo == other.sid_lo {
            Merge::Concat
        } else {
            Merge::Add
        }
    }

    pub fn join(&self, other: &Piece) -> Piece {
        Piece {
            oid: self.oid,
            sid_lo: self.sid_lo.min(other.sid_lo),
            sid_hi: self.sid_hi.max(other.sid_hi),
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }
}

/// First and last leaf of every operation, checking the label invariants.
pub(crate) fn op_spans(oids: &[Option<u32>], sids: &[Option<u32>]) -> Result<Vec<(u32, usize, usize)>> {
    if oids.len() != sids.len() {
        bail!(Control, "oid/sid arrays differ in length");
    }
    let mut spans: Vec<(u32, usize, usize)> = Vec::new();
    let mut last_sid = 0;
    for (b, (o, s)) in oids.iter().zip(sids).enumerate() {
        match (o, s) {
            (None, None) => continue,
            (Some(o), Some(s)) => {
                match spans.last_mut() {
                    Some((prev, _, hi)) if *prev == *o => {
                        if *hi + 1 != b {
                            bail!(Control, "operation {o} is not contiguous at leaf {b}");
                        }
                        if *s < last_sid {
                            bail!(Control, "segment ids decrease inside operation {o}");
                        }
                        *hi = b;
                    }
                    Some((prev, _, _)) if *prev > *o => {
                        bail!(Control, "operation ids decrease at leaf {b}");
                    }
                    _ => {
                        if spans.iter().any(|sp| sp.0 == *o) {
                            bail!(Control, "operation {o} is not contiguous at leaf {b}");
                        }
                        spans.push((*o, b, b));
                    }
                }
                last_sid = *s;
            }
            _ => bail!(Control, "leaf {b} has an oid without a sid or vice versa"),
        }
    }
    Ok(spans)
}

/// Assigns node controls bottom-up from the leaf labels of one pass.
pub fn compile_fbrt(pass: &PrimPass, cfg: &PEConfig) -> Result<FbrtConfig> {
    compile_labels(&pass.oids, &pass.sids, cfg.tree_leaves())
}

pub(crate) fn compile_labels(oids: &[Option<u32>], sids: &[Option<u32>], leaves: usize) -> Result<FbrtConfig> {
    if !leaves.is_power_of_two() || oids.len() > leaves {
        bail!(Control, "{} labels do not fit a {leaves}-leaf tree", oids.len());
    }
    let spans = op_spans(oids, sids)?;
    let complete = |p: &Piece| spans.iter().any(|&(o, lo, hi)| o == p.oid && lo == p.lo && hi == p.hi);

    let mut pad_oids = oids.to_vec();
    let mut pad_sids = sids.to_vec();
    pad_oids.resize(leaves, None);
    pad_sids.resize(leaves, None);

    let mut cur: Vec<Vec<Piece>> = (0..leaves)
        .map(|b| match (pad_oids[b], pad_sids[b]) {
            (Some(oid), Some(s)) => vec![Piece {
                oid,
                sid_lo: s,
                sid_hi: s,
                lo: b,
                hi: b,
            }],
            _ => Vec::new(),
        })
        .collect();

    let mut levels = Vec::new();
    while cur.len() > 1 {
        let n = cur.len() / 2;
        let mut ctrl: Vec<NodeControl> = (0..n).map(|_| NodeControl::idle()).collect();
        let mut next: Vec<Vec<Piece>> = Vec::with_capacity(n);
        let mut touched = vec![false; n];
        for k in 0..n {
            let left = &cur[2 * k];
            let right = &cur[2 * k + 1];
            touched[k] = !left.is_empty() || !right.is_empty();
            let mut items: Vec<Piece> = left.clone();
            let mut rest = right.as_slice();
            if let (Some(l), Some(r)) = (left.last(), right.first()) {
                if l.oid == r.oid {
                    ctrl[k].child_merge = Some(l.merge_kind(r));
                    let j = l.join(r);
                    *items.last_mut().unwrap() = j;
                    rest = &right[1..];
                }
            }
            items.extend_from_slice(rest);
            next.push(items);
        }
        for k in (1..n.saturating_sub(1)).step_by(2) {
            let (Some(s), Some(r)) = (next[k].last().copied(), next[k + 1].first().copied()) else {
                continue;
            };
            if s.oid != r.oid {
                continue;
            }
            ctrl[k].link_out = true;
            ctrl[k + 1].link_in = Some(s.merge_kind(&r));
            next[k].pop();
            next[k + 1][0] = s.join(&r);
        }
        for k in 0..n {
            let mut kept = Vec::with_capacity(next[k].len());
            for p in &next[k] {
                if complete(p) {
                    ctrl[k].emits.push(p.oid);
                } else {
                    kept.push(*p);
                }
            }
            next[k] = kept;
            ctrl[k].mode = derive_mode(&ctrl[k], touched[k]);
        }
        levels.push(ctrl);
        cur = next;
    }
    if cur.iter().any(|v| !v.is_empty()) {
        bail!(Control, "tree root is left holding unfinished partial products");
    }
    Ok(FbrtConfig {
        leaves,
        oids: pad_oids,
        sids: pad_sids,
        levels,
    })
}

fn derive_mode(c: &NodeControl, touched: bool) -> SwitchMode {
    let side = if c.link_in.is_some() {
        Side::Left
    } else if c.link_out {
        Side::Right
    } else {
        Side::None
    };
    let merges: Vec<Merge> = c.child_merge.into_iter().chain(c.link_in).collect();
    let kind = match merges.as_slice() {
        [] if !touched => ModeKind::Idle,
        [] => ModeKind::D,
        [Merge::Concat] => ModeKind::C2,
        [Merge::Add] => ModeKind::A2,
        [Merge::Concat, Merge::Concat] => ModeKind::C3,
        [Merge::Add, Merge::Add] => ModeKind::A3,
        _ => ModeKind::ConcatAdd,
    };
    SwitchMode { kind, side }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::primgen::compile_primgen;
    use crate::control::separator::compile_separator;

    fn config(a: &str, w: &str) -> FbrtConfig {
        let cfg = PEConfig::default();
        let sa = compile_separator(a.parse().unwrap(), &cfg).unwrap();
        let sw = compile_separator(w.parse().unwrap(), &cfg).unwrap();
        let r = compile_primgen(&sa, &sw, &cfg);
        compile_fbrt(&r.passes[0], &cfg).unwrap()
    }

    #[test]
    fn every_operation_is_emitted_once() {
        for (a, w) in [("e2m3", "e2m2"), ("e2m3", "e2m3"), ("e1m1", "e1m1"), ("e1m6", "e3m5"), ("e1m10", "e1m10")] {
            let c = config(a, w);
            let mut emitted: Vec<u32> = c.levels.iter().flatten().flat_map(|n| n.emits.clone()).collect();
            emitted.sort_unstable();
            let mut ops: Vec<u32> = c.oids.iter().flatten().copied().collect();
            ops.dedup();
            assert_eq!(emitted, ops, "{a} x {w}");
        }
    }

    #[test]
    fn three_way_modes_only_on_linked_nodes() {
        let c = config("e2m3", "e2m2");
        for level in &c.levels {
            for (k, n) in level.iter().enumerate() {
                if matches!(n.mode.kind, ModeKind::C3 | ModeKind::A3 | ModeKind::ConcatAdd) {
                    assert!(has_link(k, level.len()).is_some());
                }
            }
        }
    }

    #[test]
    fn first_pair_concatenates() {
        // leaves 0,1 hold P(0,0), P(1,0) of operation 0
        let c = config("e2m3", "e2m2");
        assert_eq!(c.levels[0][0].mode.kind, ModeKind::C2);
        assert_eq!(c.levels[0][0].child_merge, Some(Merge::Concat));
    }

    #[test]
    fn single_bit_products_leave_at_level_one() {
        let c = config("e1m1", "e1m1");
        assert_eq!(c.levels[0][0].emits, vec![0, 1]);
        assert_eq!(c.levels[0][0].mode.kind, ModeKind::D);
        assert!(c.levels[0][40].emits.is_empty());
        assert_eq!(c.levels[0][40].mode.kind, ModeKind::Idle);
    }

    #[test]
    fn one_operation_spanning_the_tree() {
        let oids = vec![Some(0); 8];
        let sids: Vec<Option<u32>> = (0..8).map(|b| Some(b / 4)).collect();
        let c = compile_labels(&oids, &sids, 8).unwrap();
        assert_eq!(c.levels.last().unwrap()[0].emits, vec![0]);
        // nodes 1 and 2 of the first level are linked, so node 2 both
        // concatenates its children and adds the piece handed across
        assert_eq!(c.levels[0].iter().filter(|n| n.mode.kind == ModeKind::C2).count(), 3);
        assert_eq!(c.levels[0][2].mode.kind, ModeKind::ConcatAdd);
        assert_eq!(c.levels[2][0].mode.kind, ModeKind::A2);
        assert!(c.levels.iter().flatten().all(|n| n.mode.kind != ModeKind::Idle));
    }

    #[test]
    fn links_carry_straddling_operations() {
        // an operation over leaves 3..=4 straddles nodes 1 and 2 of level 1
        let oids = vec![Some(0), Some(0), Some(0), Some(1), Some(1), Some(2), Some(2), Some(2)];
        let sids = vec![Some(0), Some(0), Some(1), Some(0), Some(0), Some(0), Some(1), Some(1)];
        let c = compile_labels(&oids, &sids, 8).unwrap();
        assert!(c.levels[0][1].link_out);
        assert_eq!(c.levels[0][2].link_in, Some(Merge::Concat));
        assert!(c.levels[0][2].emits.contains(&1));
        assert_eq!(c.levels[0][2].mode.side, Side::Left);
    }

    #[test]
    fn rejects_broken_labels() {
        let oids = vec![Some(0), Some(1), Some(0), None];
        let sids = vec![Some(0); 4];
        assert!(compile_labels(&oids, &[Some(0), Some(0), Some(0), None], 4).is_err());
        assert!(compile_labels(&oids[..2], &sids[..1], 4).is_err());
        let desc = vec![Some(0), Some(0)];
        assert!(compile_labels(&desc, &[Some(1), Some(0)], 4).is_err());
    }

    #[test]
    fn leaf_weights_follow_segments() {
        let c = config("e2m3", "e2m2");
        let w = c.leaf_weights();
        assert_eq!(&w[..6], &[Some(0), Some(1), Some(2), Some(1), Some(2), Some(3)]);
    }
}
