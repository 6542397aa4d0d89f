use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{ToPrimitive, Zero};

use super::datapath::{normalize_to, Pe, Product};
use crate::bitpack::PackedBuffer;
use crate::codec::{FormatSpec, ScalarValue};
use crate::control::{AlignPolicy, ControlBundle, CstConfig};
use crate::error::{bail, Result};

/// A product lined up against the group's reference exponent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AlignedOperand {
    /// Signed significand.
    pub significand: i64,
    /// Unbiased exponent of the significand's LSB.
    pub exp: i64,
    /// Largest `exp` in the group.
    pub ref_exp: i64,
    pub delta: u32,
}

/// Output of the shift tree: signed segment values sharing one LSB exponent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Shifted {
    pub values: Vec<i128>,
    pub lsb_exp: i64,
    pub loss_events: u64,
}

/// Picks the largest exponent of the group as reference; zero products
/// take part with delta 0 and a zero significand.
pub fn normalize_exponents(products: &[Product]) -> Vec<AlignedOperand> {
    let ref_exp = products.iter().filter(|p| !p.zero).map(|p| p.exp).max().unwrap_or(0);
    products
        .iter()
        .map(|p| {
            if p.zero {
                AlignedOperand {
                    significand: 0,
                    exp: ref_exp,
                    ref_exp,
                    delta: 0,
                }
            } else {
                let s = p.sig as i64;
                AlignedOperand {
                    significand: if p.sign { -s } else { s },
                    exp: p.exp,
                    ref_exp,
                    delta: (ref_exp - p.exp) as u32,
                }
            }
        })
        .collect()
}

/// Aligns every operand inside a `cst.seg_width`-bit segment. With the
/// default policy each significand is parked at the top of its segment and
/// shifted right by its delta; bits falling off the bottom are lost.
pub fn concat_shift(aligned: &[AlignedOperand], cst: &CstConfig, sig_width: u32) -> Shifted {
    let seg = cst.seg_width.max(sig_width);
    let mut loss = 0;
    let Some(first) = aligned.first() else {
        return Shifted {
            values: Vec::new(),
            lsb_exp: 0,
            loss_events: 0,
        };
    };
    let ref_exp = first.ref_exp;
    match cst.policy {
        AlignPolicy::ShiftSmaller => {
            let up = seg - sig_width;
            let values = aligned
                .iter()
                .map(|x| {
                    let mag = u128::from(x.significand.unsigned_abs()) << up;
                    let v = if x.delta >= seg {
                        0
                    } else {
                        mag >> x.delta
                    };
                    if mag != 0 && (v << x.delta.min(seg)) != mag {
                        loss += 1;
                    }
                    if x.significand < 0 {
                        -(v as i128)
                    } else {
                        v as i128
                    }
                })
                .collect();
            Shifted {
                values,
                lsb_exp: ref_exp - i64::from(up),
                loss_events: loss,
            }
        }
        AlignPolicy::ShiftLarger => {
            let min_exp = aligned.iter().filter(|x| x.significand != 0).map(|x| x.exp).min().unwrap_or(ref_exp);
            let cap = (1u128 << seg) - 1;
            let values = aligned
                .iter()
                .map(|x| {
                    let mag = u128::from(x.significand.unsigned_abs());
                    let left = (x.exp - min_exp).max(0) as u32;
                    let v = if mag == 0 {
                        0
                    } else if 128 - mag.leading_zeros() + left > seg {
                        loss += 1;
                        cap
                    } else {
                        mag << left
                    };
                    if x.significand < 0 {
                        -(v as i128)
                    } else {
                        v as i128
                    }
                })
                .collect();
            Shifted {
                values,
                lsb_exp: min_exp,
                loss_events: loss,
            }
        }
    }
}

/// Running sum held in a `width`-bit two's-complement register with a
/// floating frame: `value * 2^lsb`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Accumulator {
    width: u32,
    value: BigInt,
    lsb: i64,
    pub loss_events: u64,
}

impl Accumulator {
    pub fn new(width: u32) -> Self {
        Accumulator {
            width,
            value: BigInt::zero(),
            lsb: 0,
            loss_events: 0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.value.is_zero()
    }

    pub fn value(&self) -> (&BigInt, i64) {
        (&self.value, self.lsb)
    }

    /// Adds `v * 2^lsb`, renormalizing so the magnitude keeps one sign and one
    /// carry bit of headroom.
    pub fn add(&mut self, v: &BigInt, lsb: i64) {
        if v.is_zero() {
            return;
        }
        if self.value.is_zero() {
            self.value = v.clone();
            self.lsb = lsb;
        } else {
            let m = self.lsb.min(lsb);
            self.value = (&self.value << (self.lsb - m) as usize) + (v << (lsb - m) as usize);
            self.lsb = m;
        }
        self.fit();
    }

    pub fn add_shifted(&mut self, s: &Shifted) {
        self.loss_events += s.loss_events;
        let sum: i128 = s.values.iter().sum();
        self.add(&BigInt::from(sum), s.lsb_exp);
    }

    fn fit(&mut self) {
        let room = u64::from(self.width.saturating_sub(2).max(1));
        let bits = self.value.bits();
        if bits > room {
            let drop = bits - room;
            let mag = self.value.magnitude();
            let kept = mag >> drop as usize;
            if &(&kept << drop as usize) != mag {
                self.loss_events += 1;
            }
            self.value = BigInt::from_biguint(self.value.sign(), kept);
            self.lsb += drop as i64;
        }
        if self.value.is_zero() {
            self.lsb = 0;
        }
    }

    /// Multiplies by `scale` exactly before it is folded anywhere else.
    pub fn scaled(&self, scale: (BigInt, i64)) -> (BigInt, i64) {
        (&self.value * scale.0, self.lsb + scale.1)
    }

    /// Single truncation into `fmt`. Returns the word and whether it saturated.
    pub fn finalize(&self, fmt: FormatSpec) -> (u64, bool) {
        normalize_big(&self.value, self.lsb, fmt)
    }
}

/// Rounds `v * 2^lsb` into `fmt` by truncation.
pub fn normalize_big(v: &BigInt, lsb: i64, fmt: FormatSpec) -> (u64, bool) {
    if v.is_zero() {
        return (0, false);
    }
    let neg = v.sign() == Sign::Minus;
    let mag: &BigUint = v.magnitude();
    let bits = mag.bits();
    let (top, lsb) = if bits > 120 {
        let d = bits - 120;
        ((mag >> d as usize).to_u128().unwrap(), lsb + d as i64)
    } else {
        (mag.to_u128().unwrap(), lsb)
    };
    normalize_to(neg, top, lsb, fmt)
}

/// Significand and LSB exponent of a scale factor, decoded on the datapath.
fn scale_parts(s: &ScalarValue) -> (BigInt, i64) {
    if s.is_zero {
        return (BigInt::zero(), 0);
    }
    let f = s.format;
    let (sig, exp) = if f.is_float() {
        (
            s.man_field | (1u64 << f.man_bits()),
            i64::from(s.exp_field) - i64::from(f.bias()) - i64::from(f.man_bits()),
        )
    } else {
        (s.man_field, 0)
    };
    let v = BigInt::from(sig);
    (if s.sign { -v } else { v }, exp)
}

/// Result of a dot product on the datapath.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DotResult {
    pub word: u64,
    pub loss_events: u64,
    pub max_delta: u32,
    pub saturated: bool,
}

/// `sum_k a_k * w_k`: each load pairs activation `k` with weight `k`, the
/// shift tree aligns the pass's products and the accumulator folds them in.
pub fn pe_dot(pe: &mut Pe<'_>, acts: &[u64], wgts: &[u64], out_fmt: FormatSpec) -> Result<DotResult> {
    if acts.len() != wgts.len() {
        bail!(Shape, "dot operands have lengths {} and {}", acts.len(), wgts.len());
    }
    let b = pe.bundle();
    let cst = b.cst.clone();
    let sig_width = b.product_sig_width();
    let chunk = b.num_acts().min(b.num_wgts());
    let mut acc = Accumulator::new(b.anu.acc_width);
    let mut prods = Vec::new();
    let mut diag = Vec::with_capacity(chunk);
    let mut max_delta = 0;
    for (a, w) in acts.chunks(chunk).zip(wgts.chunks(chunk)) {
        pe.load(a, w)?;
        pe.multiply(&mut prods);
        // outer product of a partial load is dense over the loaded operands
        let n = a.len();
        diag.clear();
        for k in 0..n {
            diag.push(prods[k * n + k]);
        }
        let aligned = normalize_exponents(&diag);
        max_delta = max_delta.max(aligned.iter().map(|x| x.delta).max().unwrap_or(0));
        let shifted = concat_shift(&aligned, &cst, sig_width);
        acc.add_shifted(&shifted);
    }
    let (word, saturated) = acc.finalize(out_fmt);
    Ok(DotResult {
        word,
        loss_events: acc.loss_events,
        max_delta,
        saturated,
    })
}

/// Per-block scale factors for an MX tile: `act[i * blocks + b]` scales row
/// `i` of block `b`, `wgt[j * blocks + b]` column `j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MxScales {
    pub block: usize,
    pub act: Vec<ScalarValue>,
    pub wgt: Vec<ScalarValue>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TileResult {
    /// Row-major `m x n` outputs.
    pub out: PackedBuffer,
    pub loss_events: u64,
    pub saturations: u64,
}

/// Outer-product GEMM tile. `a` is stored `[k][m]`, `w` is `[k][n]`. Each
/// step loads a column of activations and a row of weights and adds every
/// product into its output's accumulator; scales are applied once per block.
pub fn pe_mac_tile(
    a: &PackedBuffer,
    w: &PackedBuffer,
    (m, n, k): (usize, usize, usize),
    bundle: &ControlBundle,
    out_fmt: FormatSpec,
    mx: Option<&MxScales>,
) -> Result<TileResult> {
    if a.elem_count != m * k || w.elem_count != k * n {
        bail!(Shape, "tile buffers hold {} and {} elements for {m}x{n}x{k}", a.elem_count, w.elem_count);
    }
    if let Some(s) = mx {
        if s.block == 0 || k % s.block != 0 {
            bail!(Shape, "K = {k} is not a whole number of {}-element blocks", s.block);
        }
        let blocks = k / s.block;
        if s.act.len() != m * blocks || s.wgt.len() != n * blocks {
            bail!(Shape, "scale arrays do not match {blocks} blocks");
        }
    }
    let mut pe = Pe::new(bundle)?;
    let aw = a.words();
    let ww = w.words();
    let width = bundle.anu.acc_width;
    let block = mx.map_or(k, |s| s.block);
    let blocks = k / block.max(1);
    let mut part: Vec<Accumulator> = (0..m * n).map(|_| Accumulator::new(width)).collect();
    let mut total: Vec<Accumulator> = (0..m * n).map(|_| Accumulator::new(width)).collect();
    let sig_width = bundle.product_sig_width();
    let (na, nw) = (bundle.num_acts(), bundle.num_wgts());
    let mut prods = Vec::new();
    for kk in 0..k {
        let col = &aw[kk * m..(kk + 1) * m];
        let row = &ww[kk * n..(kk + 1) * n];
        for (ci, ac) in col.chunks(na).enumerate() {
            for (cj, wc) in row.chunks(nw).enumerate() {
                pe.load(ac, wc)?;
                pe.multiply(&mut prods);
                for (idx, p) in prods.iter().enumerate() {
                    let (jj, ii) = (idx / ac.len(), idx % ac.len());
                    let (i, j) = (ci * na + ii, cj * nw + jj);
                    let aligned = normalize_exponents(std::slice::from_ref(p));
                    let s = concat_shift(&aligned, &bundle.cst, sig_width);
                    part[i * n + j].add_shifted(&s);
                }
            }
        }
        if (kk + 1) % block == 0 {
            let bi = kk / block;
            for i in 0..m {
                for j in 0..n {
                    let acc = &mut part[i * n + j];
                    let (v, lsb) = match mx {
                        Some(s) => {
                            let (sa, ea) = scale_parts(&s.act[i * blocks + bi]);
                            let (sw, ew) = scale_parts(&s.wgt[j * blocks + bi]);
                            acc.scaled((sa * sw, ea + ew))
                        }
                        None => (acc.value().0.clone(), acc.value().1),
                    };
                    let t = &mut total[i * n + j];
                    t.loss_events += acc.loss_events;
                    t.add(&v, lsb);
                    *acc = Accumulator::new(width);
                }
            }
        }
    }
    let mut out = PackedBuffer::empty(out_fmt, 0);
    let mut loss = 0;
    let mut sats = 0;
    for t in &total {
        let (word, sat) = t.finalize(out_fmt);
        out.push(word)?;
        loss += t.loss_events;
        sats += u64::from(sat);
    }
    Ok(TileResult {
        out,
        loss_events: loss,
        saturations: sats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{encode, mul_ref, ExactNumber, Rounding};
    use crate::control::{compile_bundle, PEConfig};

    fn f(s: &str) -> FormatSpec {
        s.parse().unwrap()
    }

    fn prod(sign: bool, sig: u64, exp: i64) -> Product {
        Product {
            sign,
            zero: false,
            sig,
            exp_sum: exp,
            exp,
        }
    }

    #[test]
    fn reference_is_the_largest_exponent() {
        let a = normalize_exponents(&[prod(false, 9, 3), prod(true, 9, 1)]);
        assert_eq!((a[0].delta, a[1].delta), (0, 2));
        let same = normalize_exponents(&[prod(false, 9, 2), prod(false, 12, 2)]);
        assert!(same.iter().all(|x| x.delta == 0));
    }

    #[test]
    fn shift_tree_drops_low_bits() {
        let cst = CstConfig {
            seg_width: 8,
            policy: AlignPolicy::ShiftSmaller,
        };
        // 1.101 parked at the top of an 8-bit segment, moved right by 2
        let al = normalize_exponents(&[prod(false, 0b1101, 2), prod(false, 0b1101, 0)]);
        let s = concat_shift(&al, &cst, 4);
        assert_eq!(s.values, vec![0b1101_0000, 0b0011_0100]);
        assert_eq!(s.loss_events, 0);
        let far = normalize_exponents(&[prod(false, 0b1101, 8), prod(false, 0b1101, 0)]);
        let s = concat_shift(&far, &cst, 4);
        assert_eq!(s.values[1], 0);
        assert_eq!(s.loss_events, 1);
    }

    #[test]
    fn shift_larger_policy_is_exact_when_it_fits() {
        let cst = CstConfig {
            seg_width: 16,
            policy: AlignPolicy::ShiftLarger,
        };
        let al = normalize_exponents(&[prod(false, 0b1101, 2), prod(true, 0b1001, 0)]);
        let s = concat_shift(&al, &cst, 4);
        assert_eq!(s.values, vec![0b110100, -0b1001]);
        assert_eq!(s.lsb_exp, 0);
    }

    #[test]
    fn cancellation_gives_zero() {
        let mut acc = Accumulator::new(144);
        acc.add(&BigInt::from(13), -3);
        acc.add(&BigInt::from(-13), -3);
        assert!(acc.is_zero());
        assert_eq!(acc.finalize(f("e2m3")), (0, false));
    }

    #[test]
    fn narrow_accumulator_counts_losses() {
        let mut acc = Accumulator::new(8);
        acc.add(&BigInt::from(1), -20);
        acc.add(&BigInt::from(1), 0);
        assert_eq!(acc.loss_events, 1);
        assert_eq!(acc.finalize(f("e4m3")).0, normalize_to(false, 1, 0, f("e4m3")).0);
    }

    fn words(fmt: FormatSpec, vals: &[f64]) -> Vec<u64> {
        vals.iter()
            .map(|v| encode(&ExactNumber::from_f64(*v), fmt, Rounding::TruncateTowardZero).to_word())
            .collect()
    }

    #[test]
    fn fp6_dot_of_four() {
        let fa = f("e2m3");
        let b = compile_bundle(fa, fa, f("e5m10"), &PEConfig::default()).unwrap();
        let mut pe = Pe::new(&b).unwrap();
        let a = words(fa, &[1.5, -2.0, 0.75, 3.0]);
        let w = words(fa, &[1.0, 1.25, -1.5, 0.625]);
        let r = pe_dot(&mut pe, &a, &w, f("e5m10")).unwrap();
        let exact: ExactNumber = a
            .iter()
            .zip(&w)
            .map(|(x, y)| mul_ref(&ScalarValue::from_word(*x, fa).unwrap(), &ScalarValue::from_word(*y, fa).unwrap()))
            .sum();
        assert_eq!(exact.to_f64(), 1.5 - 2.5 - 1.125 + 1.875);
        let expect = encode(&exact, f("e5m10"), Rounding::TruncateTowardZero).to_word();
        if r.loss_events == 0 {
            assert_eq!(r.word, expect);
        }
    }

    #[test]
    fn single_element_tile_is_a_multiply() {
        let fa = f("e2m3");
        let fo = FormatSpec::product_format(&fa, &fa).unwrap();
        let b = compile_bundle(fa, fa, fo, &PEConfig::default()).unwrap();
        let a = PackedBuffer::from_words(&[0b0_10_011], fa, 0).unwrap();
        let w = PackedBuffer::from_words(&[0b1_01_101], fa, 0).unwrap();
        let t = pe_mac_tile(&a, &w, (1, 1, 1), &b, fo, None).unwrap();
        let direct = crate::pe::pe_multiply(&a, &w, &b, fo).unwrap();
        assert_eq!(t.out.words(), vec![direct[0].to_word()]);
    }

    #[test]
    fn tile_shape_errors() {
        let fa = f("e2m3");
        let b = compile_bundle(fa, fa, fa, &PEConfig::default()).unwrap();
        let a = PackedBuffer::from_words(&[1, 2], fa, 0).unwrap();
        assert!(pe_mac_tile(&a, &a, (2, 2, 2), &b, fa, None).is_err());
    }
}
