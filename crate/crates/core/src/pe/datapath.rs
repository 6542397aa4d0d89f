use bitvec::prelude::*;
use serde::{Deserialize, Serialize};

use super::regs::{BitReg, PERegisters};
use super::tree::TreeProgram;
use crate::bitpack::PackedBuffer;
use crate::codec::{FormatSpec, ScalarValue};
use crate::control::{ControlBundle, FbeaConfig, Route, SeparatorRoutes};
use crate::error::{bail, Result};

/// A stage to corrupt on purpose, for checking that validation notices.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Fault {
    #[default]
    None,
    Separator,
    PrimGen,
    Tree,
    ImplicitOne,
    ExpAdd,
    Normalize,
}

impl std::str::FromStr for Fault {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "none" => Fault::None,
            "separator" => Fault::Separator,
            "primgen" => Fault::PrimGen,
            "tree" | "fbrt" => Fault::Tree,
            "implicit-one" | "implicit_one" => Fault::ImplicitOne,
            "exp-add" | "fbea" => Fault::ExpAdd,
            "normalize" => Fault::Normalize,
            _ => bail!(Config, "unknown fault site {s:?}"),
        })
    }
}

/// One product before rounding: `(-1)^sign * sig * 2^exp`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Product {
    pub sign: bool,
    pub zero: bool,
    pub sig: u64,
    /// Biased exponent sum from the segmented adder.
    pub exp_sum: i64,
    /// Unbiased exponent of the significand's least significant bit.
    pub exp: i64,
}

/// Stage-by-stage values of one operation, for localizing mismatches.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OpTrace {
    pub op: u32,
    pub act: usize,
    pub wgt: usize,
    /// (sign, exponent, mantissa) fields as separated.
    pub act_fields: (bool, u64, u64),
    pub wgt_fields: (bool, u64, u64),
    pub raw: u64,
    pub with_implicit: u64,
    pub exp_sum: i64,
    pub word: u64,
}

/// `(2^p + a)(2^q + w)` built from the tree's raw `a * w`: first the shifted
/// weight, then the shifted activation and the leading one.
pub fn apply_implicit_one(raw: u64, a: u64, w: u64, p: u32, q: u32) -> u64 {
    let step1 = raw + (w << p);
    step1 + (a << q) + (1u64 << (p + q))
}

/// Same, with each implicit one switched on only for float operands.
fn implicit_terms(raw: u64, a: u64, w: u64, p: u32, q: u32, ia: bool, iw: bool) -> u64 {
    match (ia, iw) {
        (true, true) => apply_implicit_one(raw, a, w, p, q),
        (true, false) => raw + (w << p),
        (false, true) => raw + (a << q),
        (false, false) => raw,
    }
}

/// Ripple-carry add over `l` bits with carries killed at `breaks`.
pub fn segmented_add(x: &BitSlice<u64, Lsb0>, y: &BitSlice<u64, Lsb0>, breaks: &[bool], out: &mut BitVec<u64, Lsb0>) {
    let l = x.len().min(y.len()).min(breaks.len());
    out.clear();
    out.resize(l, false);
    let mut c = false;
    for i in 0..l {
        let (a, b) = (x[i], y[i]);
        out.set(i, a ^ b ^ c);
        let carry = (a & b) | (c & (a ^ b));
        c = carry && !breaks[i];
    }
}

/// Rounds `(-1)^sign * sig * 2^exp` into `fmt` by truncation, saturating
/// on overflow and flushing on underflow. Returns the word and whether it
/// saturated.
pub fn normalize_to(sign: bool, sig: u128, exp: i64, fmt: FormatSpec) -> (u64, bool) {
    if sig == 0 {
        return (0, false);
    }
    let sign_bit = |w: u64| if sign { w | (1u64 << (fmt.total_bits() - 1)) } else { w };
    if !fmt.is_float() {
        if sign && !fmt.signed() {
            return (0, false);
        }
        let lead = 127 - sig.leading_zeros() as i64;
        let mag = if exp >= 0 {
            if lead + exp >= fmt.man_bits() as i64 {
                return (sign_bit(fmt.man_mask()), true);
            }
            (sig << exp) as u64
        } else if -exp > 127 {
            0
        } else {
            (sig >> -exp) as u64
        };
        if mag > fmt.man_mask() {
            return (sign_bit(fmt.man_mask()), true);
        }
        return if mag == 0 { (0, false) } else { (sign_bit(mag), false) };
    }
    let m = fmt.man_bits() as i64;
    let lead = 127 - sig.leading_zeros() as i64;
    let field = lead + exp + i64::from(fmt.bias());
    if field > i64::from(fmt.max_exp_field()) {
        let w = (u64::from(fmt.max_exp_field()) << m) | fmt.man_mask();
        return (sign_bit(w), true);
    }
    if field < 0 {
        return (0, false);
    }
    let man = if lead >= m { (sig >> (lead - m)) as u64 } else { (sig << (m - lead)) as u64 } & fmt.man_mask();
    let w = ((field as u64) << m) | man;
    if w == 0 && !sign {
        return (0, false);
    }
    (sign_bit(w), false)
}

/// One PE executing a fixed bundle.
pub struct Pe<'b> {
    bundle: &'b ControlBundle,
    programs: Vec<TreeProgram>,
    pub regs: PERegisters,
    fault: Fault,
    poison: bool,
    slots: Vec<u64>,
    raw: Vec<u64>,
    sigs: Vec<u64>,
    fbea_x: BitVec<u64, Lsb0>,
    fbea_y: BitVec<u64, Lsb0>,
    fbea_s: BitVec<u64, Lsb0>,
    n_act: usize,
    n_wgt: usize,
    /// Products emitted since construction.
    pub products: u64,
    pub saturations: u64,
}

impl<'b> Pe<'b> {
    pub fn new(bundle: &'b ControlBundle) -> Result<Self> {
        let programs = bundle
            .prim
            .passes
            .iter()
            .zip(&bundle.fbrt)
            .map(|(p, f)| TreeProgram::lower(f, p.first_op, p.op_count))
            .collect::<Result<Vec<_>>>()?;
        let l_add = bundle.cfg.l_add as usize;
        Ok(Pe {
            bundle,
            programs,
            regs: PERegisters::new(&bundle.cfg),
            fault: Fault::None,
            poison: false,
            slots: Vec::new(),
            raw: vec![0; bundle.prim.op_count() as usize],
            sigs: vec![0; bundle.prim.op_count() as usize],
            fbea_x: bitvec![u64, Lsb0; 0; l_add],
            fbea_y: bitvec![u64, Lsb0; 0; l_add],
            fbea_s: BitVec::new(),
            n_act: 0,
            n_wgt: 0,
            products: 0,
            saturations: 0,
        })
    }

    pub fn bundle(&self) -> &ControlBundle {
        self.bundle
    }

    pub fn with_fault(mut self, fault: Fault) -> Self {
        if fault == Fault::Tree {
            self.programs = self.programs.iter().map(TreeProgram::with_fault).collect();
        }
        self.fault = fault;
        self
    }

    /// Fill every bit the compiler marked inactive with ones before each
    /// stage reads it.
    pub fn with_poison(mut self, on: bool) -> Self {
        self.poison = on;
        self
    }

    /// Loads right-aligned operand words into the input registers.
    pub fn load(&mut self, acts: &[u64], wgts: &[u64]) -> Result<()> {
        let b = self.bundle;
        if acts.len() > b.num_acts() || wgts.len() > b.num_wgts() {
            bail!(
                Capacity,
                "{}x{} operands exceed one {}x{} register load",
                acts.len(),
                wgts.len(),
                b.num_acts(),
                b.num_wgts()
            );
        }
        PERegisters::load(&mut self.regs.act_reg, acts, b.fmt_a.total_bits());
        PERegisters::load(&mut self.regs.wgt_reg, wgts, b.fmt_w.total_bits());
        self.n_act = acts.len();
        self.n_wgt = wgts.len();
        if self.poison {
            poison_tail(&mut self.regs.act_reg, &b.sep_act);
            poison_tail(&mut self.regs.wgt_reg, &b.sep_wgt);
        }
        Ok(())
    }

    pub fn load_packed(&mut self, acts: &PackedBuffer, wgts: &PackedBuffer) -> Result<()> {
        if acts.fmt != self.bundle.fmt_a || wgts.fmt != self.bundle.fmt_w {
            bail!(Format, "buffers hold {} x {}, bundle expects {} x {}", acts.fmt, wgts.fmt, self.bundle.fmt_a, self.bundle.fmt_w);
        }
        self.load(&acts.words(), &wgts.words())
    }

    /// Routes input bits into the sign, exponent and mantissa registers.
    pub fn separate(&mut self) {
        let b = self.bundle;
        let r = &mut self.regs;
        for (reg, sign, exp, man, routes) in [
            (&r.act_reg, &mut r.act_sign, &mut r.act_exp, &mut r.act_man, &b.sep_act),
            (&r.wgt_reg, &mut r.wgt_sign, &mut r.wgt_exp, &mut r.wgt_man, &b.sep_wgt),
        ] {
            sign.clear();
            exp.clear();
            man.clear();
            for (i, route) in routes.routes.iter().enumerate() {
                let bit = reg.get(i);
                match *route {
                    Route::Sign(k) => sign.set(k as usize, bit),
                    Route::Exp(k) => exp.set(k as usize, bit),
                    Route::Man(k) => man.set(k as usize, bit),
                    Route::Inactive => {}
                }
            }
        }
        if self.fault == Fault::Separator && self.regs.act_man.width > 0 {
            self.regs.act_man.bits ^= 1 << (self.regs.act_man.width - 1);
        }
        if self.poison {
            poison_fields(&mut self.regs.act_man, b.sep_act.elements as u32 * b.fmt_a.man_bits());
            poison_fields(&mut self.regs.wgt_man, b.sep_wgt.elements as u32 * b.fmt_w.man_bits());
            poison_fields(&mut self.regs.act_exp, b.sep_act.elements as u32 * b.fmt_a.exp_bits());
            poison_fields(&mut self.regs.wgt_exp, b.sep_wgt.elements as u32 * b.fmt_w.exp_bits());
        }
    }

    /// ANDs mantissa bit pairs into the primitive register for one pass.
    pub fn gen_primitives(&mut self, pass: usize) {
        let routes = &self.bundle.prim.passes[pass].routes;
        let r = &mut self.regs;
        for (b, src) in routes.iter().enumerate() {
            let v = match src {
                Some(s) => r.act_man.get(s.act as usize) & r.wgt_man.get(s.wgt as usize),
                None => self.poison,
            };
            r.prim.set(b, v);
        }
        if self.fault == Fault::PrimGen && !r.prim.is_empty() {
            let v = r.prim[0];
            r.prim.set(0, !v);
        }
    }

    /// Raw mantissa products (no implicit ones) for every operation of a
    /// pass, written into the per-operation buffer.
    pub fn run_fbrt(&mut self, pass: usize) -> &[u64] {
        let prog = &self.programs[pass];
        let first = self.bundle.prim.passes[pass].first_op as usize;
        let n = prog.op_count();
        prog.run(&self.regs.prim, &mut self.slots, &mut self.raw[first..first + n]);
        &self.raw[first..first + n]
    }

    /// Biased exponent sums `eA + eW` for every operation, computed on the
    /// segmented adder.
    pub fn add_exponents(&mut self) -> Vec<i64> {
        let mut out = vec![0i64; self.bundle.prim.op_count() as usize];
        self.add_exponents_into(&mut out);
        out
    }

    fn add_exponents_into(&mut self, out: &mut [i64]) {
        let b = self.bundle;
        let fbea: &FbeaConfig = &b.fbea;
        if fbea.is_bypassed() {
            out.fill(0);
            return;
        }
        // a faulty adder uses the bare break period, without the guard bit
        let fault = self.fault == Fault::ExpAdd;
        let bare: Vec<bool>;
        let (seg, brk) = if fault {
            let w = fbea.add_width as usize;
            bare = (0..fbea.breaks.len()).map(|i| (i + 1) % w == 0).collect();
            (w, bare.as_slice())
        } else {
            (fbea.seg_width as usize, fbea.breaks.as_slice())
        };
        let (ea, ew) = (b.fmt_a.exp_bits(), b.fmt_w.exp_bits());
        let ops = out.len();
        let per_pass = brk.len() / seg;
        let mut first = 0;
        while first < ops {
            let count = per_pass.min(ops - first);
            let used = count * seg;
            self.fbea_x[..used].fill(false);
            self.fbea_y[..used].fill(false);
            for s in 0..count {
                let (a, w) = b.prim.operands((first + s) as u32);
                let xa = self.regs.act_exp.field(a as usize * ea as usize, ea);
                let xw = self.regs.wgt_exp.field(w as usize * ew as usize, ew);
                let lo = s * seg;
                self.fbea_x[lo..lo + seg].store(xa);
                self.fbea_y[lo..lo + seg].store(xw);
            }
            segmented_add(&self.fbea_x[..used], &self.fbea_y[..used], &brk[..used], &mut self.fbea_s);
            for s in 0..count {
                let lo = s * seg;
                out[first + s] = self.fbea_s[lo..lo + seg].load::<u64>() as i64;
            }
            first += count;
        }
    }

    /// Runs every pass for the loaded operands and returns one product per
    /// operation in operation order (weights outer, activations inner).
    pub fn multiply(&mut self, out: &mut Vec<Product>) {
        let b = self.bundle;
        self.separate();
        for pass in 0..b.prim.passes.len() {
            self.gen_primitives(pass);
            self.run_fbrt(pass);
        }
        let ops = b.prim.op_count() as usize;
        let mut sums = vec![0i64; ops];
        self.add_exponents_into(&mut sums);
        let (fa, fw) = (b.fmt_a, b.fmt_w);
        let (p, q) = (fa.man_bits(), fw.man_bits());
        let scale = -i64::from(fa.bias()) - i64::from(fw.bias()) - i64::from(fa.frac_bits()) - i64::from(fw.frac_bits());
        out.clear();
        for o in 0..ops as u32 {
            let (a, w) = b.prim.operands(o);
            let (a, w) = (a as usize, w as usize);
            if a >= self.n_act || w >= self.n_wgt {
                continue;
            }
            let r = &self.regs;
            let zero_a = elem_is_zero(&r.act_reg, fa, a);
            let zero_w = elem_is_zero(&r.wgt_reg, fw, w);
            let sa = fa.signed() && r.act_sign.get(a);
            let sw = fw.signed() && r.wgt_sign.get(w);
            let ma = r.act_man.field(a * p as usize, p);
            let mw = r.wgt_man.field(w * q as usize, q);
            let mut sig = implicit_terms(self.raw[o as usize], ma, mw, p, q, fa.has_implicit_one(), fw.has_implicit_one());
            if self.fault == Fault::ImplicitOne && fa.has_implicit_one() && fw.has_implicit_one() {
                sig -= 1 << (p + q);
            }
            self.sigs[o as usize] = sig;
            let zero = zero_a || zero_w || sig == 0;
            out.push(Product {
                sign: (sa ^ sw) && !zero,
                zero,
                sig: if zero { 0 } else { sig },
                exp_sum: sums[o as usize],
                exp: sums[o as usize] + scale,
            });
        }
        self.products += out.len() as u64;
    }

    /// Rounds a product into `fmt` on the datapath's own normalizer.
    pub fn encode_product(&mut self, prod: &Product, fmt: FormatSpec) -> u64 {
        if prod.zero {
            return 0;
        }
        let exp = if self.fault == Fault::Normalize { prod.exp + 1 } else { prod.exp };
        let (w, sat) = normalize_to(prod.sign, u128::from(prod.sig), exp, fmt);
        self.saturations += u64::from(sat);
        w
    }

    /// Outer product of the loaded operands rounded into `fmt`, as words.
    pub fn multiply_words(&mut self, acts: &[u64], wgts: &[u64], fmt: FormatSpec, out: &mut Vec<u64>) -> Result<()> {
        self.load(acts, wgts)?;
        let mut prods = Vec::with_capacity(acts.len() * wgts.len());
        self.multiply(&mut prods);
        out.clear();
        for p in &prods {
            let w = self.encode_product(p, fmt);
            out.push(w);
        }
        Ok(())
    }

    /// Per-operation stage values for the loaded operands.
    pub fn trace(&mut self, fmt: FormatSpec) -> Vec<OpTrace> {
        let b = self.bundle;
        let mut prods = Vec::new();
        self.multiply(&mut prods);
        let (fa, fw) = (b.fmt_a, b.fmt_w);
        let (p, q) = (fa.man_bits(), fw.man_bits());
        let mut out = Vec::new();
        let mut k = 0;
        for o in 0..b.prim.op_count() {
            let (a, w) = b.prim.operands(o);
            let (a, w) = (a as usize, w as usize);
            if a >= self.n_act || w >= self.n_wgt {
                continue;
            }
            let r = &self.regs;
            let act_fields = (
                fa.signed() && r.act_sign.get(a),
                r.act_exp.field(a * fa.exp_bits() as usize, fa.exp_bits()),
                r.act_man.field(a * p as usize, p),
            );
            let wgt_fields = (
                fw.signed() && r.wgt_sign.get(w),
                r.wgt_exp.field(w * fw.exp_bits() as usize, fw.exp_bits()),
                r.wgt_man.field(w * q as usize, q),
            );
            let prod = prods[k];
            k += 1;
            let with_implicit = self.sigs[o as usize];
            let word = self.encode_product(&prod, fmt);
            out.push(OpTrace {
                op: o,
                act: a,
                wgt: w,
                act_fields,
                wgt_fields,
                raw: self.raw[o as usize],
                with_implicit,
                exp_sum: prod.exp_sum,
                word,
            });
        }
        out
    }

    /// Text dump of every register after the last pass.
    pub fn dump(&self) -> String {
        self.regs.to_string()
    }
}

fn elem_is_zero(reg: &BitReg, fmt: FormatSpec, k: usize) -> bool {
    let p = fmt.total_bits();
    reg.field(k * p as usize, p) == 0
}

fn poison_tail(reg: &mut BitReg, routes: &SeparatorRoutes) {
    for (i, r) in routes.routes.iter().enumerate() {
        if *r == Route::Inactive {
            reg.set(i, true);
        }
    }
}

fn poison_fields(reg: &mut BitReg, used: u32) {
    for i in used as usize..reg.width as usize {
        reg.set(i, true);
    }
}

/// Outer product of two single-load buffers, rounded into `out_fmt`, in
/// operation order: weight-major, activation-minor.
pub fn pe_multiply(act: &PackedBuffer, wgt: &PackedBuffer, bundle: &ControlBundle, out_fmt: FormatSpec) -> Result<Vec<ScalarValue>> {
    let mut pe = Pe::new(bundle)?;
    let mut words = Vec::new();
    pe.multiply_words(&act.words(), &wgt.words(), out_fmt, &mut words)?;
    words.into_iter().map(|w| ScalarValue::from_word(w, out_fmt)).collect()
}
