use serde::{Deserialize, Serialize};

use super::config::PEConfig;
use super::separator::SeparatorRoutes;

/// Mantissa register positions ANDed into one primitive bit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PrimSource {
    pub act: u16,
    pub wgt: u16,
}

/// One trip through the primitive register and the reduction tree.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrimPass {
    pub first_op: u32,
    pub op_count: u32,
    /// Per prim-register bit; `None` marks an inactive bit.
    pub routes: Vec<Option<PrimSource>>,
    pub oids: Vec<Option<u32>>,
    pub sids: Vec<Option<u32>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrimRoutes {
    pub num_acts: u32,
    pub num_wgts: u32,
    /// Activation / weight mantissa widths.
    pub p: u32,
    pub q: u32,
    pub ops_per_pass: u32,
    pub passes: Vec<PrimPass>,
}

impl PrimRoutes {
    pub fn op_count(&self) -> u32 {
        self.num_acts * self.num_wgts
    }

    /// Operand indices of operation `o`: weights outer, activations inner.
    pub fn operands(&self, o: u32) -> (u32, u32) {
        (o % self.num_acts, o / self.num_acts)
    }

    pub fn serialization(&self) -> usize {
        self.passes.len()
    }

    pub fn prims_per_op(&self) -> u32 {
        self.p * self.q
    }
}

/// Lays every (activation, weight) mantissa product out as `q` segments of
/// `p` primitives, segment `j` holding `A[i] AND W[j]` for ascending `i`.
/// Operations that do not fit `L_prim` spill into further passes; an
/// operation is never split across passes.
pub fn compile_primgen(act: &SeparatorRoutes, wgt: &SeparatorRoutes, cfg: &PEConfig) -> PrimRoutes {
    let p = act.fmt.man_bits();
    let q = wgt.fmt.man_bits();
    let num_acts = act.elements as u32;
    let num_wgts = wgt.elements as u32;
    let ops = num_acts * num_wgts;
    let per_op = p * q;
    let ops_per_pass = if per_op == 0 { ops } else { (cfg.l_prim / per_op).min(ops) };
    let mut routes = PrimRoutes {
        num_acts,
        num_wgts,
        p,
        q,
        ops_per_pass,
        passes: Vec::new(),
    };
    let mut first = 0;
    while first < ops {
        let count = ops_per_pass.min(ops - first);
        let l = cfg.l_prim as usize;
        let mut pass = PrimPass {
            first_op: first,
            op_count: count,
            routes: vec![None; l],
            oids: vec![None; l],
            sids: vec![None; l],
        };
        let mut b = 0;
        for o in first..first + count {
            let (a, w) = routes.operands(o);
            for j in 0..q {
                for i in 0..p {
                    pass.routes[b] = Some(PrimSource {
                        act: act.man_pos(a as usize, i) as u16,
                        wgt: wgt.man_pos(w as usize, j) as u16,
                    });
                    pass.oids[b] = Some(o);
                    pass.sids[b] = Some(j);
                    b += 1;
                }
            }
        }
        routes.passes.push(pass);
        first += count;
    }
    routes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::separator::compile_separator;

    fn routes(a: &str, w: &str, cfg: &PEConfig) -> PrimRoutes {
        let sa = compile_separator(a.parse().unwrap(), cfg).unwrap();
        let sw = compile_separator(w.parse().unwrap(), cfg).unwrap();
        compile_primgen(&sa, &sw, cfg)
    }

    #[test]
    fn walkthrough_primitive_order() {
        let cfg = PEConfig::default();
        let sa = compile_separator("e2m3".parse().unwrap(), &cfg).unwrap();
        let sw = compile_separator("e2m2".parse().unwrap(), &cfg).unwrap();
        let r = compile_primgen(&sa, &sw, &cfg);
        let pass = &r.passes[0];
        // P(0,0) P(1,0) P(2,0) P(0,1) P(1,1) P(2,1)
        let expect: Vec<PrimSource> = [(0, 0), (1, 0), (2, 0), (0, 1), (1, 1), (2, 1)]
            .iter()
            .map(|&(i, j)| PrimSource {
                act: sa.man_pos(0, i) as u16,
                wgt: sw.man_pos(0, j) as u16,
            })
            .collect();
        let got: Vec<PrimSource> = pass.routes[..6].iter().map(|x| x.unwrap()).collect();
        assert_eq!(got, expect);
        assert_eq!(&pass.sids[..6], &[Some(0), Some(0), Some(0), Some(1), Some(1), Some(1)]);
        // the second operation pairs the next activation with the same weight
        assert_eq!(r.operands(1), (1, 0));
        assert_eq!(pass.routes[6].unwrap().act, sa.man_pos(1, 0) as u16);
    }

    #[test]
    fn fp6_fills_the_prim_register() {
        let r = routes("e2m3", "e2m3", &PEConfig::default());
        assert_eq!((r.op_count(), r.prims_per_op(), r.serialization()), (16, 9, 1));
        assert!(r.passes[0].routes.iter().all(Option::is_some));
    }

    #[test]
    fn single_bit_mantissas() {
        let r = routes("e1m1", "e1m1", &PEConfig::default());
        assert_eq!(r.op_count(), 64);
        assert_eq!(r.passes[0].routes.iter().filter(|x| x.is_some()).count(), 64);
    }

    #[test]
    fn spills_into_extra_passes() {
        let cfg = PEConfig { l_prim: 40, ..PEConfig::default() };
        let r = routes("e2m3", "e2m3", &cfg);
        assert_eq!(r.ops_per_pass, 4);
        assert_eq!(r.serialization(), 4);
        assert_eq!(r.passes[3].first_op, 12);
    }

    #[test]
    fn zero_width_mantissa_has_no_prims() {
        let r = routes("e3m0", "e2m3", &PEConfig::default());
        assert_eq!(r.serialization(), 1);
        assert!(r.passes[0].routes.iter().all(Option::is_none));
    }

    #[test]
    fn labels_are_sorted() {
        let r = routes("e1m4", "e2m2", &PEConfig::default());
        let oids: Vec<u32> = r.passes[0].oids.iter().flatten().copied().collect();
        assert!(oids.windows(2).all(|w| w[0] <= w[1]));
    }
}
