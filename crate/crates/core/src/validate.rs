//! Datapath-versus-oracle sweeps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bitpack::{pack, unpack, BitPackUnit, PackedBuffer, PaddedStream};
use crate::codec::{encode, mul_ref, FormatSpec, Rounding, ScalarValue};
use crate::control::{compile_bundle, compile_fbea_width, compile_labels, ControlBundle, PEConfig};
use crate::error::{bail, Result};
use crate::pe::{apply_implicit_one, segmented_add, Fault, Pe, TreeProgram};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Scope {
    Codec,
    Pe,
    Pack,
    All,
}

impl std::str::FromStr for Scope {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "codec" => Scope::Codec,
            "pe" => Scope::Pe,
            "pack" => Scope::Pack,
            "all" => Scope::All,
            _ => bail!(Config, "unknown scope {s:?}"),
        })
    }
}

#[derive(Clone, Debug)]
pub struct ValidateOptions {
    pub scope: Scope,
    /// Widest operand format swept.
    pub max_bits: u32,
    /// Operand widths up to this are swept exhaustively; wider ones are sampled.
    pub exhaustive_bits: u32,
    pub samples: usize,
    pub seed: u64,
    pub fault: Fault,
    pub cfg: PEConfig,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        ValidateOptions {
            scope: Scope::All,
            max_bits: 12,
            exhaustive_bits: 8,
            samples: 10_000,
            seed: 0,
            fault: Fault::None,
            cfg: PEConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Category {
    pub name: String,
    pub cases: u64,
    pub mismatches: u64,
    /// Description of the first mismatch, naming the stage that went wrong.
    pub first_failure: Option<String>,
}

impl Category {
    fn new(name: &str) -> Self {
        Category {
            name: name.to_string(),
            ..Default::default()
        }
    }

    fn fail(&mut self, what: impl FnOnce() -> String) {
        self.mismatches += 1;
        if self.first_failure.is_none() {
            self.first_failure = Some(what());
        }
    }

    fn absorb(&mut self, other: Category) {
        self.cases += other.cases;
        self.mismatches += other.mismatches;
        if self.first_failure.is_none() {
            self.first_failure = other.first_failure;
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Report {
    pub categories: Vec<Category>,
}

impl Report {
    pub fn mismatches(&self) -> u64 {
        self.categories.iter().map(|c| c.mismatches).sum()
    }

    pub fn cases(&self) -> u64 {
        self.categories.iter().map(|c| c.cases).sum()
    }

    pub fn passed(&self) -> bool {
        self.mismatches() == 0
    }
}

impl std::fmt::Display for Report {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for c in &self.categories {
            writeln!(f, "{:<10} {} mismatches / {} cases", c.name, c.mismatches, c.cases)?;
            if let Some(m) = &c.first_failure {
                writeln!(f, "           first: {m}")?;
            }
        }
        write!(f, "total      {} mismatches / {} cases", self.mismatches(), self.cases())
    }
}

pub fn run(opts: &ValidateOptions) -> Result<Report> {
    if !(3..=crate::codec::MAX_TOTAL_BITS).contains(&opts.max_bits) {
        bail!(Config, "max_bits must be in 3..={}", crate::codec::MAX_TOTAL_BITS);
    }
    let mut report = Report::default();
    let want = |s: Scope| opts.scope == s || opts.scope == Scope::All;
    if want(Scope::Codec) {
        report.categories.push(codec_round_trip(opts.max_bits));
    }
    if want(Scope::Pack) {
        report.categories.push(pack_sweep(opts.seed));
    }
    if want(Scope::Pe) {
        report.categories.push(tree_sweep(6));
        report.categories.push(fbea_sweep(opts.seed, opts.samples));
        report.categories.push(multiply_sweep(opts, false)?);
        report.categories.push(multiply_sweep(opts, true)?);
    }
    Ok(report)
}

fn codec_round_trip(max_bits: u32) -> Category {
    let mut c = Category::new("codec");
    let mut formats = FormatSpec::all_floats(2..=max_bits.min(16));
    formats.extend((2..=max_bits).flat_map(|n| [FormatSpec::int(n, true), FormatSpec::int(n, false)]).flatten());
    for fmt in formats {
        for w in 0..fmt.word_count() {
            let v = ScalarValue::from_word(w, fmt).expect("in range");
            if !fmt.is_float() && v.sign && v.man_field == 0 {
                continue;
            }
            c.cases += 1;
            let back = encode(&v.value(), fmt, Rounding::TruncateTowardZero).to_word();
            if back != w {
                c.fail(|| format!("{fmt} word {w:#b} re-encodes to {back:#b}"));
            }
        }
    }
    c
}

fn pack_sweep(seed: u64) -> Category {
    let mut c = Category::new("pack");
    let unit = BitPackUnit::new(8, FormatSpec::float(2, 3).unwrap(), 0).unwrap();
    for i in 8..14 {
        c.cases += 1;
        if unit.map_bit(i) != Some(i - 2) {
            c.fail(|| format!("FP6 input bit {i} maps to {:?}", unit.map_bit(i)));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..1000 {
        let e = rng.gen_range(1..=5);
        let m = rng.gen_range(0..=5);
        let f = FormatSpec::float(e, m).unwrap();
        let container = crate::bitpack::natural_container(f.total_bits()) + rng.gen_range(0..=8);
        let n = rng.gen_range(0..64);
        let start = rng.gen_range(0..32);
        let words: Vec<u64> = (0..n).map(|_| rng.gen_range(0..f.word_count())).collect();
        let buf = PackedBuffer::from_words(&words, f, start).unwrap();
        c.cases += 1;
        let ok = unpack(&buf, container)
            .and_then(|s: PaddedStream| pack(&s, start))
            .map(|b| b == buf)
            .unwrap_or(false);
        if !ok {
            c.fail(|| format!("{f} buffer of {n} elements in {container}-bit containers did not round trip"));
        }
    }
    c
}

/// Every mantissa pair with `p, q <= max_w` through a dedicated tree and the
/// implicit-one step.
pub fn tree_sweep(max_w: u32) -> Category {
    let mut c = Category::new("fbrt");
    let mut slots = Vec::new();
    for p in 0..=max_w {
        for q in 0..=max_w {
            let prims = (p * q) as usize;
            let mut oids = vec![Some(0); prims];
            let sids: Vec<Option<u32>> = (0..prims).map(|b| Some(b as u32 / p.max(1))).collect();
            let leaves = prims.next_power_of_two().max(2);
            if prims == 0 {
                oids.clear();
            }
            let prog = compile_labels(&oids, &sids[..oids.len()], leaves)
                .and_then(|cfg| TreeProgram::lower(&cfg, 0, u32::from(prims > 0)));
            let prog = match prog {
                Ok(p) => p,
                Err(e) => {
                    c.fail(|| format!("p={p} q={q}: {e}"));
                    continue;
                }
            };
            let mut prim = bitvec::bitvec![u64, bitvec::order::Lsb0; 0; leaves];
            let mut out = [0u64; 1];
            for a in 0..1u64 << p {
                for w in 0..1u64 << q {
                    for j in 0..q {
                        for i in 0..p {
                            prim.set((j * p + i) as usize, (a >> i) & 1 == 1 && (w >> j) & 1 == 1);
                        }
                    }
                    prog.run(&prim, &mut slots, &mut out);
                    let raw = if prims == 0 { 0 } else { out[0] };
                    let got = apply_implicit_one(raw, a, w, p, q);
                    let expect = ((1u64 << p) + a) * ((1u64 << q) + w);
                    c.cases += 1;
                    if got != expect {
                        c.fail(|| format!("p={p} q={q} a={a} w={w}: tree gave {got}, expected {expect}"));
                    }
                }
            }
        }
    }
    c
}

/// Segmented exponent sums against scalar adds.
pub fn fbea_sweep(seed: u64, samples: usize) -> Category {
    use bitvec::prelude::*;
    let mut c = Category::new("fbea");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfbea);
    let l_add = 144;
    let mut out = BitVec::new();
    for w in 1..=12u32 {
        let cfg = compile_fbea_width(w, l_add);
        let seg = cfg.seg_width as usize;
        let segs = cfg.segments as usize;
        let mut check = |xs: &[u64], ys: &[u64], c: &mut Category| {
            let mut x = bitvec![u64, Lsb0; 0; l_add as usize];
            let mut y = bitvec![u64, Lsb0; 0; l_add as usize];
            for (s, (a, b)) in xs.iter().zip(ys).enumerate() {
                x[s * seg..(s + 1) * seg].store(*a);
                y[s * seg..(s + 1) * seg].store(*b);
            }
            segmented_add(&x, &y, &cfg.breaks, &mut out);
            for (s, (a, b)) in xs.iter().zip(ys).enumerate() {
                c.cases += 1;
                let got: u64 = out[s * seg..(s + 1) * seg].load();
                if got != a + b {
                    c.fail(|| format!("width {w} segment {s}: {a} + {b} gave {got}"));
                }
            }
            // nothing may spill into the unused tail
            if out[xs.len() * seg..].any() {
                c.fail(|| format!("width {w}: carry leaked past the last segment"));
            }
        };
        if w <= 6 {
            let max = 1u64 << w;
            let pairs: Vec<(u64, u64)> = (0..max).flat_map(|a| (0..max).map(move |b| (a, b))).collect();
            for chunk in pairs.chunks(segs) {
                let xs: Vec<u64> = chunk.iter().map(|p| p.0).collect();
                let ys: Vec<u64> = chunk.iter().map(|p| p.1).collect();
                check(&xs, &ys, &mut c);
            }
        } else {
            let mut left = samples;
            while left > 0 {
                let n = left.min(segs);
                let xs: Vec<u64> = (0..n).map(|_| rng.gen_range(0..1u64 << w)).collect();
                let ys: Vec<u64> = (0..n).map(|_| rng.gen_range(0..1u64 << w)).collect();
                check(&xs, &ys, &mut c);
                left -= n;
            }
        }
    }
    c
}

/// Operand words for one side of a sweep: every word, or `samples` random ones.
fn operand_words(fmt: FormatSpec, exhaustive: bool, samples: usize, rng: &mut ChaCha8Rng) -> Vec<u64> {
    if exhaustive {
        (0..fmt.word_count()).collect()
    } else {
        (0..samples).map(|_| rng.gen_range(0..fmt.word_count())).collect()
    }
}

/// Localizes a mismatch by replaying the load that produced it with tracing on.
fn localize(bundle: &ControlBundle, fault: Fault, ac: &[u64], wc: &[u64], ai: usize, wi: usize, out_fmt: FormatSpec) -> String {
    let fa = bundle.fmt_a;
    let fw = bundle.fmt_w;
    let (a, w) = (ac[ai], wc[wi]);
    let Ok(pe) = Pe::new(bundle) else {
        return "bundle failed to lower".into();
    };
    let mut pe = pe.with_fault(fault);
    if pe.load(ac, wc).is_err() {
        return "load failed".into();
    }
    let traces = pe.trace(out_fmt);
    let Some(t) = traces.iter().find(|t| t.act == ai && t.wgt == wi) else {
        return "no product emitted".into();
    };
    let va = ScalarValue::from_word(a, fa).unwrap();
    let vw = ScalarValue::from_word(w, fw).unwrap();
    let head = format!("{fa} {a:#b} x {fw} {w:#b}");
    if t.act_fields != (va.sign, u64::from(va.exp_field), va.man_field)
        || t.wgt_fields != (vw.sign, u64::from(vw.exp_field), vw.man_field)
    {
        return format!("{head}: separator split fields wrongly");
    }
    let (p, q) = (fa.man_bits(), fw.man_bits());
    let (ma, mw) = (va.man_field, vw.man_field);
    if t.raw != ma * mw {
        let prim_ok = bundle.prim.passes[0].routes.iter().enumerate().all(|(b, r)| match r {
            Some(src) => pe.regs.prim[b] == (pe.regs.act_man.get(src.act as usize) & pe.regs.wgt_man.get(src.wgt as usize)),
            None => true,
        });
        let stage = if prim_ok { "reduction tree" } else { "primitive generator" };
        return format!("{head}: {stage} produced {} instead of {}", t.raw, ma * mw);
    }
    let ia = if fa.has_implicit_one() { 1u64 << p } else { 0 };
    let iw = if fw.has_implicit_one() { 1u64 << q } else { 0 };
    if t.with_implicit != (ia + ma) * (iw + mw) {
        return format!("{head}: implicit-one correction produced {}", t.with_implicit);
    }
    if t.exp_sum != i64::from(va.exp_field) + i64::from(vw.exp_field) {
        return format!("{head}: exponent adder produced {}", t.exp_sum);
    }
    let expect = encode(&mul_ref(&va, &vw), out_fmt, Rounding::TruncateTowardZero).to_word();
    format!("{head}: normalizer produced {:#b}, expected {expect:#b}", t.word)
}

/// Checks every product of one format pair into `out_fmt`.
pub fn check_pair(
    fa: FormatSpec,
    fw: FormatSpec,
    out_fmt: FormatSpec,
    cfg: &PEConfig,
    acts: &[u64],
    wgts: &[u64],
    fault: Fault,
    paired: bool,
) -> Result<Category> {
    let bundle = compile_bundle(fa, fw, out_fmt, cfg)?;
    let mut pe = Pe::new(&bundle)?.with_fault(fault);
    let mut c = Category::new("pe");
    let va: Vec<ScalarValue> = acts.iter().map(|&w| ScalarValue::from_word(w, fa).unwrap()).collect();
    let vw: Vec<ScalarValue> = wgts.iter().map(|&w| ScalarValue::from_word(w, fw).unwrap()).collect();
    let mut out = Vec::new();
    // (chunk, index within chunk, index into the sweep) for each side
    let report = |c: &mut Category, a: (&[u64], usize, usize), w: (&[u64], usize, usize), got: u64| {
        c.cases += 1;
        let expect = encode(&mul_ref(&va[a.2], &vw[w.2]), out_fmt, Rounding::TruncateTowardZero).to_word();
        if got != expect {
            c.fail(|| localize(&bundle, fault, a.0, w.0, a.1, w.1, out_fmt));
        }
    };
    if paired {
        // random pairs: a block of activations against a block of weights
        let (na, nw) = (bundle.num_acts(), bundle.num_wgts());
        let step = na.max(nw);
        let mut i = 0;
        while i < acts.len() {
            let ac = &acts[i..(i + na).min(acts.len())];
            let wc = &wgts[i..(i + nw).min(wgts.len())];
            pe.multiply_words(ac, wc, out_fmt, &mut out)?;
            // keep only the diagonal so each sampled pair is checked once
            for k in 0..ac.len().min(wc.len()) {
                report(&mut c, (ac, k, i + k), (wc, k, i + k), out[k * ac.len() + k]);
            }
            i += step.min(ac.len().min(wc.len())).max(1);
        }
    } else {
        for (wi0, wc) in wgts.chunks(bundle.num_wgts()).enumerate() {
            for (ai0, ac) in acts.chunks(bundle.num_acts()).enumerate() {
                pe.multiply_words(ac, wc, out_fmt, &mut out)?;
                for (idx, got) in out.iter().enumerate() {
                    let (wj, ai) = (idx / ac.len(), idx % ac.len());
                    report(
                        &mut c,
                        (ac, ai, ai0 * bundle.num_acts() + ai),
                        (wc, wj, wi0 * bundle.num_wgts() + wj),
                        *got,
                    );
                }
            }
        }
    }
    Ok(c)
}

/// All float pairs (or integer pairs) with widths in `3..=max_bits`.
fn multiply_sweep(opts: &ValidateOptions, ints: bool) -> Result<Category> {
    let formats: Vec<FormatSpec> = if ints {
        (3..=opts.max_bits).map(|n| FormatSpec::int(n, true).unwrap()).collect()
    } else {
        FormatSpec::all_floats(3..=opts.max_bits)
    };
    let pairs: Vec<(usize, FormatSpec, FormatSpec)> = formats
        .iter()
        .flat_map(|a| formats.iter().map(move |w| (*a, *w)))
        .enumerate()
        .map(|(i, (a, w))| (i, a, w))
        .collect();
    let results: Vec<Result<Category>> = pairs
        .par_iter()
        .map(|&(i, fa, fw)| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(i as u64));
            let small = fa.total_bits() <= opts.exhaustive_bits && fw.total_bits() <= opts.exhaustive_bits;
            let acts = operand_words(fa, small, opts.samples, &mut rng);
            let wgts = operand_words(fw, small, opts.samples, &mut rng);
            let mut c = Category::new("pe");
            let product = FormatSpec::product_format(&fa, &fw)?;
            c.absorb(check_pair(fa, fw, product, &opts.cfg, &acts, &wgts, opts.fault, !small)?);
            Ok(c)
        })
        .collect();
    let mut c = Category::new(if ints { "pe-int" } else { "pe-float" });
    for r in results {
        c.absorb(r?);
    }
    Ok(c)
}
