//! Executes a reduction-tree configuration.
//!
//! The node controls are interpreted once, symbolically, to check that every
//! mode receives operands it can handle and to flatten the tree into a list
//! of shift/concat/add steps. Running a pass then only replays those steps.

use bitvec::prelude::*;

use crate::control::{leaf_weights, FbrtConfig, Merge};
use crate::error::{bail, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Step {
    dst: u16,
    a: u16,
    sa: u8,
    b: u16,
    sb: u8,
    concat: bool,
}

#[derive(Clone, Debug)]
pub struct TreeProgram {
    leaves: Vec<u16>,
    leaf_count: usize,
    steps: Vec<Step>,
    /// (local operation index, slot)
    emits: Vec<(u32, u16)>,
    op_count: usize,
}

#[derive(Clone, Copy, Debug)]
struct Sym {
    oid: u32,
    sid_lo: u32,
    sid_hi: u32,
    lo: usize,
    hi: usize,
    base: u32,
    slot: u16,
}

impl Sym {
    fn single_segment_with(&self, o: &Sym) -> bool {
        self.sid_lo == self.sid_hi && o.sid_lo == o.sid_hi && self.sid_lo == o.sid_lo
    }
}

fn merge(a: &Sym, b: &Sym, kind: Merge, steps: &mut Vec<Step>, at: &str) -> Result<Sym> {
    if a.oid != b.oid {
        bail!(Control, "{at}: merge of operations {} and {}", a.oid, b.oid);
    }
    if kind == Merge::Concat && !a.single_segment_with(b) {
        bail!(Control, "{at}: concatenation across segments of operation {}", a.oid);
    }
    if a.hi + 1 != b.lo {
        bail!(Control, "{at}: pieces of operation {} are not adjacent", a.oid);
    }
    let base = a.base.min(b.base);
    steps.push(Step {
        dst: a.slot,
        a: a.slot,
        sa: (a.base - base) as u8,
        b: b.slot,
        sb: (b.base - base) as u8,
        concat: kind == Merge::Concat,
    });
    Ok(Sym {
        oid: a.oid,
        sid_lo: a.sid_lo.min(b.sid_lo),
        sid_hi: a.sid_hi.max(b.sid_hi),
        lo: a.lo,
        hi: b.hi,
        base,
        slot: a.slot,
    })
}

impl TreeProgram {
    /// Interprets `cfg` for a pass whose first operation is `first_op`.
    pub fn lower(cfg: &FbrtConfig, first_op: u32, op_count: u32) -> Result<Self> {
        let leaves = cfg.leaves;
        if cfg.oids.len() != leaves || cfg.sids.len() != leaves || leaves > u16::MAX as usize {
            bail!(Control, "label arrays do not match the {leaves}-leaf tree");
        }
        let weights = leaf_weights(&cfg.oids, &cfg.sids);
        let mut spans: Vec<Option<(usize, usize)>> = vec![None; op_count as usize];
        let mut cur: Vec<Vec<Sym>> = Vec::with_capacity(leaves);
        let mut active = Vec::new();
        for b in 0..leaves {
            match (cfg.oids[b], cfg.sids[b], weights[b]) {
                (Some(oid), Some(sid), Some(w)) => {
                    let local = oid.checked_sub(first_op).filter(|l| *l < op_count);
                    let Some(local) = local else {
                        bail!(Control, "leaf {b} belongs to operation {oid} outside this pass");
                    };
                    let sp = spans[local as usize].get_or_insert((b, b));
                    sp.1 = b;
                    active.push(b as u16);
                    cur.push(vec![Sym {
                        oid,
                        sid_lo: sid,
                        sid_hi: sid,
                        lo: b,
                        hi: b,
                        base: w,
                        slot: b as u16,
                    }]);
                }
                _ => cur.push(Vec::new()),
            }
        }
        let mut steps = Vec::new();
        let mut emits = Vec::new();
        for (lvl, ctrls) in cfg.levels.iter().enumerate() {
            let n = cur.len() / 2;
            if ctrls.len() != n {
                bail!(Control, "level {lvl} has {} controls for {n} nodes", ctrls.len());
            }
            let mut next: Vec<Vec<Sym>> = Vec::with_capacity(n);
            for (k, c) in ctrls.iter().enumerate() {
                let mut items = std::mem::take(&mut cur[2 * k]);
                let right = std::mem::take(&mut cur[2 * k + 1]);
                let mut rest = right.as_slice();
                if let Some(kind) = c.child_merge {
                    let at = format!("level {lvl} node {k}");
                    let (Some(l), Some(r)) = (items.last(), right.first()) else {
                        bail!(Control, "{at}: merge configured but a child is empty");
                    };
                    let m = merge(l, r, kind, &mut steps, &at)?;
                    *items.last_mut().unwrap() = m;
                    rest = &right[1..];
                }
                items.extend_from_slice(rest);
                next.push(items);
            }
            for k in 0..n {
                let c = &ctrls[k];
                if c.link_out {
                    let at = format!("level {lvl} link {k}->{}", k + 1);
                    if k % 2 == 0 || k + 1 >= n {
                        bail!(Control, "{at}: no such link");
                    }
                    let Some(kind) = ctrls[k + 1].link_in else {
                        bail!(Control, "{at}: receiver is not listening");
                    };
                    let (Some(s), Some(r)) = (next[k].last().copied(), next[k + 1].first().copied()) else {
                        bail!(Control, "{at}: nothing to send or to merge with");
                    };
                    let m = merge(&s, &r, kind, &mut steps, &at)?;
                    next[k].pop();
                    next[k + 1][0] = m;
                } else if c.link_in.is_some() && (k == 0 || !ctrls[k - 1].link_out) {
                    bail!(Control, "level {lvl} node {k}: listening on a silent link");
                }
            }
            for k in 0..n {
                for &oid in &ctrls[k].emits {
                    let at = format!("level {lvl} node {k}");
                    let Some(pos) = next[k].iter().position(|s| s.oid == oid) else {
                        bail!(Control, "{at}: emits operation {oid} it does not hold");
                    };
                    let s = next[k].remove(pos);
                    let local = (oid - first_op) as usize;
                    if spans[local] != Some((s.lo, s.hi)) || s.base != 0 {
                        bail!(Control, "{at}: emits an unfinished operation {oid}");
                    }
                    emits.push((oid - first_op, s.slot));
                }
            }
            cur = next;
        }
        if cur.len() != 1 || !cur[0].is_empty() {
            bail!(Control, "partial products never leave the tree");
        }
        Ok(TreeProgram {
            leaves: active,
            leaf_count: leaves,
            steps,
            emits,
            op_count: op_count as usize,
        })
    }

    pub fn op_count(&self) -> usize {
        self.op_count
    }

    /// Reduces `prim` into one raw mantissa product per operation.
    /// `slots` is scratch space reused across passes.
    pub fn run(&self, prim: &BitSlice<u64, Lsb0>, slots: &mut Vec<u64>, out: &mut [u64]) {
        slots.resize(self.leaf_count, 0);
        for &b in &self.leaves {
            slots[b as usize] = u64::from(prim[b as usize]);
        }
        for s in &self.steps {
            let x = slots[s.a as usize] << s.sa;
            let y = slots[s.b as usize] << s.sb;
            slots[s.dst as usize] = if s.concat { x | y } else { x + y };
        }
        out[..self.op_count].fill(0);
        for &(op, slot) in &self.emits {
            out[op as usize] = slots[slot as usize];
        }
    }

    /// Drops the last merge; used to model a broken switch.
    pub(crate) fn with_fault(&self) -> Self {
        let mut t = self.clone();
        if let Some(s) = t.steps.last_mut() {
            s.sb = s.sb.wrapping_add(1);
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{compile_labels, compile_primgen, compile_separator, PEConfig};

    fn prims_for(p: u32, q: u32, a: u64, w: u64) -> (BitVec<u64, Lsb0>, Vec<Option<u32>>, Vec<Option<u32>>) {
        let mut prim = BitVec::new();
        let mut oids = Vec::new();
        let mut sids = Vec::new();
        for j in 0..q {
            for i in 0..p {
                prim.push((a >> i) & 1 == 1 && (w >> j) & 1 == 1);
                oids.push(Some(0));
                sids.push(Some(j));
            }
        }
        (prim, oids, sids)
    }

    #[test]
    fn exhaustive_single_operation_products() {
        let mut slots = Vec::new();
        let mut out = [0u64; 1];
        for p in 1..=6u32 {
            for q in 1..=6u32 {
                let (_, oids, sids) = prims_for(p, q, 0, 0);
                let leaves = ((p * q) as usize).next_power_of_two().max(2);
                let cfg = compile_labels(&oids, &sids, leaves).unwrap();
                let prog = TreeProgram::lower(&cfg, 0, 1).unwrap();
                for a in 0..1u64 << p {
                    for w in 0..1u64 << q {
                        let (mut prim, _, _) = prims_for(p, q, a, w);
                        prim.resize(leaves, false);
                        prog.run(&prim, &mut slots, &mut out);
                        assert_eq!(out[0], a * w, "p={p} q={q} a={a} w={w}");
                    }
                }
            }
        }
    }

    #[test]
    fn walkthrough_pair() {
        let cfg = PEConfig::default();
        let sa = compile_separator("e2m3".parse().unwrap(), &cfg).unwrap();
        let sw = compile_separator("e2m2".parse().unwrap(), &cfg).unwrap();
        let r = compile_primgen(&sa, &sw, &cfg);
        let f = crate::control::compile_fbrt(&r.passes[0], &cfg).unwrap();
        let prog = TreeProgram::lower(&f, 0, r.passes[0].op_count).unwrap();
        // a = 101, w = 11 for operation 0 only
        let mut prim = bitvec![u64, Lsb0; 0; 256];
        for (b, bit) in [1, 0, 1, 1, 0, 1].iter().enumerate() {
            prim.set(b, *bit == 1);
        }
        let mut out = vec![0; prog.op_count()];
        prog.run(&prim, &mut Vec::new(), &mut out);
        assert_eq!(out[0], 15);
        assert!(out[1..].iter().all(|v| *v == 0));
    }

    #[test]
    fn inconsistent_controls_are_rejected() {
        let oids = vec![Some(0), Some(0), Some(1), Some(1)];
        let sids = vec![Some(0), Some(1), Some(0), Some(0)];
        let good = compile_labels(&oids, &sids, 4).unwrap();
        TreeProgram::lower(&good, 0, 2).unwrap();

        let mut bad = good.clone();
        bad.levels[0][0].child_merge = Some(Merge::Concat);
        assert!(matches!(TreeProgram::lower(&bad, 0, 2), Err(crate::Error::Control(_))));

        let mut bad = good.clone();
        bad.levels[0][1].emits.clear();
        assert!(TreeProgram::lower(&bad, 0, 2).is_err());

        let mut bad = good.clone();
        bad.levels[1][0].emits.push(0);
        assert!(TreeProgram::lower(&bad, 0, 2).is_err());
    }
}
