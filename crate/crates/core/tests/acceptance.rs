//! Acceptance gate. Each test checks one criterion and writes a single
//! `criterion N ... PASS|FAIL` line straight to stderr, so the lines show up
//! even when the harness captures output.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use bitvec::prelude::*;
use flexibit_core::arch::{
    packing_ablation, pe_throughput, simulate_baseline, simulate_best, AcceleratorConfig, GemmWorkload, MachineKind,
};
use flexibit_core::bitpack::{pack, unpack, BitPackUnit, PaddedStream};
use flexibit_core::codec::FormatSpec;
use flexibit_core::control::{compile_bundle, compile_fbea_width, PEConfig};
use flexibit_core::cost::{edp, BitSerialStub};
use flexibit_core::pe::{pe_dot, segmented_add, Pe};
use flexibit_core::sweep::{self, RunManifest};
use flexibit_core::workloads::{standard_pairs, ModelSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

fn verdict(n: &str, name: &str, pass: bool, detail: &str) {
    let line = format!("criterion {n:<3} {name:<34} {} ({detail})\n", if pass { "PASS" } else { "FAIL" });
    std::io::stderr().write_all(line.as_bytes()).unwrap();
    assert!(pass, "criterion {n} failed: {detail}");
}

fn f(s: &str) -> FormatSpec {
    s.parse().unwrap()
}

// ---- independent float oracle -------------------------------------------
//
// Words are [sign | exponent | mantissa] with an implicit one, no special
// values, and the all-zero word as the only zero. Values are kept as
// (negative, significand, exponent of the significand's LSB).

fn float_value(word: u64, fmt: FormatSpec) -> Option<(bool, u128, i64)> {
    if word == 0 {
        return None;
    }
    let (e, m) = (fmt.exp_bits(), fmt.man_bits());
    let man = word & ((1 << m) - 1);
    let exp = (word >> m) & ((1 << e) - 1);
    let neg = (word >> (e + m)) & 1 == 1;
    Some((neg, u128::from(man | (1 << m)), exp as i64 - i64::from(fmt.bias()) - i64::from(m)))
}

/// Truncates toward zero, saturates on overflow, flushes on underflow.
fn truncate_into(v: Option<(bool, u128, i64)>, fmt: FormatSpec) -> u64 {
    let Some((neg, sig, lsb)) = v else { return 0 };
    if sig == 0 {
        return 0;
    }
    let (e, m) = (i64::from(fmt.exp_bits()), i64::from(fmt.man_bits()));
    let top = 127 - i64::from(sig.leading_zeros());
    let mant = if top >= m { sig >> (top - m) } else { sig << (m - top) } as u64;
    let field = top + lsb + i64::from(fmt.bias());
    let sign = u64::from(neg) << (e + m);
    let max_e = (1i64 << e) - 1;
    let mask = (1u64 << m) - 1;
    if field > max_e {
        return sign | ((max_e as u64) << m) | mask;
    }
    if field < 0 {
        return 0;
    }
    sign | ((field as u64) << m) | (mant & mask)
}

fn product_oracle(a: u64, fa: FormatSpec, w: u64, fw: FormatSpec, out: FormatSpec) -> u64 {
    let p = match (float_value(a, fa), float_value(w, fw)) {
        (Some((na, sa, ea)), Some((nw, sw, ew))) => Some((na ^ nw, sa * sw, ea + ew)),
        _ => None,
    };
    truncate_into(p, out)
}

fn as_f64(word: u64, fmt: FormatSpec) -> f64 {
    match float_value(word, fmt) {
        None => 0.0,
        Some((neg, sig, lsb)) => {
            let v = sig as f64 * 2f64.powi(lsb as i32);
            if neg {
                -v
            } else {
                v
            }
        }
    }
}

// ---- criterion 1 ---------------------------------------------------------

/// Mismatches and cases for one format pair.
fn sweep_pair(fa: FormatSpec, fw: FormatSpec, seed: u64) -> (u64, u64, Option<String>) {
    let out = FormatSpec::product_format(&fa, &fw).unwrap();
    let bundle = compile_bundle(fa, fw, out, &PEConfig::default()).unwrap();
    let mut pe = Pe::new(&bundle).unwrap();
    let (na, nw) = (bundle.num_acts(), bundle.num_wgts());
    let mut res = Vec::new();
    let (mut bad, mut cases, mut first) = (0u64, 0u64, None);
    let mut check = |ac: &[u64], wc: &[u64], pe: &mut Pe| {
        pe.multiply_words(ac, wc, out, &mut res).unwrap();
        for (idx, got) in res.iter().enumerate() {
            let (a, w) = (ac[idx % ac.len()], wc[idx / ac.len()]);
            let want = product_oracle(a, fa, w, fw, out);
            cases += 1;
            if *got != want {
                bad += 1;
                first.get_or_insert_with(|| format!("{fa} {a:#x} x {fw} {w:#x}: got {got:#x} want {want:#x}"));
            }
        }
    };
    if fa.total_bits() <= 8 && fw.total_bits() <= 8 {
        let acts: Vec<u64> = (0..fa.word_count()).collect();
        let wgts: Vec<u64> = (0..fw.word_count()).collect();
        for wc in wgts.chunks(nw) {
            for ac in acts.chunks(na) {
                check(ac, wc, &mut pe);
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pairs = 0;
        while pairs < 10_000 {
            let ac: Vec<u64> = (0..na).map(|_| rng.gen_range(0..fa.word_count())).collect();
            let wc: Vec<u64> = (0..nw).map(|_| rng.gen_range(0..fw.word_count())).collect();
            check(&ac, &wc, &mut pe);
            pairs += na * nw;
        }
    }
    (bad, cases, first)
}

#[test]
fn c1_exhaustive_multiply() {
    let t = Instant::now();
    let formats = FormatSpec::all_floats(3..=12);
    let pairs: Vec<(usize, FormatSpec, FormatSpec)> = formats
        .iter()
        .flat_map(|a| formats.iter().map(move |w| (*a, *w)))
        .enumerate()
        .map(|(i, (a, w))| (i, a, w))
        .collect();
    let results: Vec<_> = pairs.par_iter().map(|&(i, a, w)| sweep_pair(a, w, i as u64)).collect();
    let bad: u64 = results.iter().map(|r| r.0).sum();
    let cases: u64 = results.iter().map(|r| r.1).sum();
    let first = results.iter().find_map(|r| r.2.clone()).unwrap_or_default();
    let took = t.elapsed();
    verdict(
        "1",
        "exhaustive multiply oracle",
        bad == 0 && took < Duration::from_secs(300),
        &format!("{bad} mismatches / {cases} cases over {} pairs in {:.1}s {first}", pairs.len(), took.as_secs_f64()),
    );
}

// ---- criterion 2 ---------------------------------------------------------

#[test]
fn c2_tree_with_implicit_one() {
    let t = Instant::now();
    let (mut bad, mut cases) = (0u64, 0u64);
    for p in 0..=6u32 {
        for q in 0..=6u32 {
            let (fa, fw) = (FormatSpec::float(1, p).unwrap(), FormatSpec::float(1, q).unwrap());
            let out = FormatSpec::product_format(&fa, &fw).unwrap();
            let bundle = compile_bundle(fa, fw, out, &PEConfig::default()).unwrap();
            let mut pe = Pe::new(&bundle).unwrap();
            // exponent field one, sign clear: the word's low bits are the mantissa
            let acts: Vec<u64> = (0..1u64 << p).map(|a| (1 << p) | a).collect();
            let wgts: Vec<u64> = (0..1u64 << q).map(|w| (1 << q) | w).collect();
            for wc in wgts.chunks(bundle.num_wgts()) {
                for ac in acts.chunks(bundle.num_acts()) {
                    pe.load(ac, wc).unwrap();
                    let traces = pe.trace(out);
                    assert_eq!(traces.len(), ac.len() * wc.len());
                    for tr in traces {
                        let a = ac[tr.act] & ((1 << p) - 1);
                        let w = wc[tr.wgt] & ((1 << q) - 1);
                        cases += 1;
                        if tr.with_implicit != ((1 << p) + a) * ((1 << q) + w) {
                            bad += 1;
                        }
                    }
                }
            }
        }
    }
    let took = t.elapsed();
    verdict(
        "2",
        "reduction tree + implicit one",
        bad == 0 && cases == 127 * 127 && took < Duration::from_secs(30),
        &format!("{bad} mismatches / {cases} cases in {:.2}s", took.as_secs_f64()),
    );
}

// ---- criterion 3 ---------------------------------------------------------

#[test]
fn c3_segmented_exponent_adder() {
    let l_add = PEConfig::default().l_add as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut bad, mut cases) = (0u64, 0u64);
    let mut out = BitVec::<u64, Lsb0>::new();
    for width in 1..=12u32 {
        let cfg = compile_fbea_width(width, l_add as u32);
        let seg = (width + 1) as usize;
        let segs = l_add / seg;
        let operands: Vec<(u64, u64)> = if width <= 6 {
            (0..1u64 << width).flat_map(|a| (0..1u64 << width).map(move |b| (a, b))).collect()
        } else {
            (0..10_000).map(|_| (rng.gen_range(0..1u64 << width), rng.gen_range(0..1u64 << width))).collect()
        };
        for chunk in operands.chunks(segs) {
            let mut x = bitvec![u64, Lsb0; 0; l_add];
            let mut y = bitvec![u64, Lsb0; 0; l_add];
            for (s, (a, b)) in chunk.iter().enumerate() {
                x[s * seg..(s + 1) * seg].store(*a);
                y[s * seg..(s + 1) * seg].store(*b);
            }
            segmented_add(&x, &y, &cfg.breaks, &mut out);
            for (s, (a, b)) in chunk.iter().enumerate() {
                cases += 1;
                // the whole segment, guard bit included, holds the sum and nothing else
                if out[s * seg..(s + 1) * seg].load::<u64>() != a + b {
                    bad += 1;
                }
            }
            if out[chunk.len() * seg..].any() {
                bad += 1;
            }
        }
    }
    // the check has teeth: an unbroken chain does leak
    let ones = bitvec![u64, Lsb0; 1; l_add];
    let mut whole = BitVec::new();
    segmented_add(&ones, &ones, &vec![false; l_add], &mut whole);
    let leaks = whole[..7].load::<u64>() != 0b111_1110 || whole[7];
    verdict(
        "3",
        "segmented exponent adder",
        bad == 0 && leaks,
        &format!("{bad} mismatches / {cases} segment sums, widths 1..=12"),
    );
}

// ---- criterion 4 ---------------------------------------------------------

#[test]
fn c4_bit_packing() {
    let fp6 = f("e2m3");
    let bpu = BitPackUnit::new(8, fp6, 0).unwrap();
    let mapped: Vec<Option<usize>> = (0..16).map(|i| bpu.map_bit(i)).collect();
    let example = (8..=13).map(|i| mapped[i]).eq((6..=11).map(Some));
    let head = (0..6).all(|i| mapped[i] == Some(i)) && mapped[6].is_none() && mapped[7].is_none();

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut round_trips = 0;
    for _ in 0..1000 {
        let fmt = FormatSpec::float(rng.gen_range(1..=5), rng.gen_range(0..=6)).unwrap();
        let container = fmt.total_bits() + rng.gen_range(0..=4);
        let words: Vec<u64> = (0..rng.gen_range(0..300)).map(|_| rng.gen_range(0..fmt.word_count())).collect();
        let stream = PaddedStream::from_elements(&words, container, fmt).unwrap();
        let packed = pack(&stream, rng.gen_range(0..64)).unwrap();
        if unpack(&packed, container).unwrap() == stream && packed.words() == words {
            round_trips += 1;
        }
    }

    let stream = PaddedStream::from_elements(&vec![0b101_011; 4096], 8, fp6).unwrap();
    let bits_ratio = pack(&stream, 0).unwrap().packed_bits() as f64 / stream.to_bits().len() as f64;
    let ab = packing_ablation(&GemmWorkload::new(2048, 768, 768, fp6, fp6, "fp6"), &AcceleratorConfig::mobile_a()).unwrap();
    let dram_ratio = (ab.packed.dram_bits_read + ab.packed.dram_bits_written) as f64
        / (ab.padded.dram_bits_read + ab.padded.dram_bits_written) as f64;
    verdict(
        "4",
        "bit packing unit",
        example && head && round_trips == 1000 && bits_ratio == 0.75 && dram_ratio == 0.75,
        &format!("bits 8..=13 -> {:?}, {round_trips}/1000 round trips, packed/padded {bits_ratio} storage {dram_ratio} DRAM", &mapped[8..14]),
    );
}

// ---- criterion 5 ---------------------------------------------------------

#[test]
fn c5_accumulation() {
    let fp6 = f("e2m3");
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut checked, mut exact_checked, mut bad, mut lossy) = (0, 0, 0, 0);
    for out_name in ["e5m10", "e4m3", "e3m4"] {
        let out = f(out_name);
        let bundle = compile_bundle(fp6, fp6, out, &PEConfig::default()).unwrap();
        let mut pe = Pe::new(&bundle).unwrap();
        for _ in 0..8000 {
            let len = rng.gen_range(1..=16);
            let acts: Vec<u64> = (0..len).map(|_| rng.gen_range(0..64)).collect();
            let wgts: Vec<u64> = (0..len).map(|_| rng.gen_range(0..64)).collect();
            // exact sum in units of the smallest product LSB
            let lsb0 = 2 * (-i64::from(fp6.bias()) - i64::from(fp6.man_bits()));
            let sum: i128 = acts
                .iter()
                .zip(&wgts)
                .filter_map(|(&a, &w)| {
                    let (na, sa, ea) = float_value(a, fp6)?;
                    let (nw, sw, ew) = float_value(w, fp6)?;
                    let v = ((sa * sw) << (ea + ew - lsb0)) as i128;
                    Some(if na ^ nw { -v } else { v })
                })
                .sum();
            let want = truncate_into(Some((sum < 0, sum.unsigned_abs(), lsb0)), out);
            let r = pe_dot(&mut pe, &acts, &wgts, out).unwrap();
            if r.saturated {
                continue;
            }
            if r.loss_events > 0 {
                lossy += 1;
                continue;
            }
            checked += 1;
            let exact = sum as f64 * 2f64.powi(lsb0 as i32);
            // spacing of the output grid around `exact`. Near zero the only
            // neighbour is zero itself; +2^-bias would encode as the zero word,
            // so on the positive side the first step is one mantissa LSB wider.
            let floor = 2f64.powi(-out.bias()) * (1.0 + 2f64.powi(-(out.man_bits() as i32)));
            let ulp = if exact.abs() <= floor {
                floor
            } else {
                2f64.powi(exact.abs().log2().floor() as i32 - out.man_bits() as i32)
            };
            if r.max_delta == 0 {
                exact_checked += 1;
            }
            let ok = r.word == want && (as_f64(r.word, out) - exact).abs() <= ulp;
            if !ok {
                bad += 1;
            }
        }
    }
    verdict(
        "5",
        "accumulation within one ulp",
        bad == 0 && checked > 5000 && exact_checked > 0,
        &format!("{bad} failures over {checked} loss-free dots ({exact_checked} with zero deltas, {lossy} lossy skipped)"),
    );
}

// ---- criterion 6 ---------------------------------------------------------

#[test]
fn c6_throughput_model() {
    let cfg = PEConfig::default();
    let fp6 = pe_throughput(f("e2m3"), f("e2m3"), &cfg);
    let fp8 = pe_throughput(f("e4m3"), f("e4m3"), &cfg);
    let mut worst: f64 = 0.0;
    let mut bound = 0;
    for acc in [AcceleratorConfig::cloud_a(), AcceleratorConfig::cloud_b()] {
        for n in [8192u64, 16384] {
            let w = GemmWorkload::new(n, n, n, f("e2m3"), f("e2m3"), "square");
            let r = simulate_best(&w, &acc, &cfg).unwrap();
            if r.compute_cycles < r.memory_cycles {
                continue;
            }
            bound += 1;
            let ideal = (n * n * n) as f64 / (acc.num_pes * 16) as f64;
            worst = worst.max((r.cycles as f64 / ideal - 1.0).abs());
        }
    }
    verdict(
        "6",
        "throughput model",
        fp6 == 16 && fp8 == 9 && bound >= 3 && worst <= 0.05,
        &format!("FP6 {fp6}, FP8 {fp8} MACs/cycle/PE; {bound} compute-bound squares, worst deviation {:.3}%", 100.0 * worst),
    );
}

// ---- criterion 7 ---------------------------------------------------------

/// Whole-model cycles per (machine, model, pair): FlexiBit best, TensorCoreLike, BitFusionLike.
type Totals = BTreeMap<(String, String, usize), (u64, u64, u64)>;

struct Study {
    totals: Totals,
    /// Layers where FlexiBit took longer than the TensorCoreLike baseline.
    slower: Vec<String>,
    layers: usize,
}

fn study() -> &'static Study {
    static S: OnceLock<Study> = OnceLock::new();
    S.get_or_init(|| {
        let pairs = standard_pairs();
        let mut points = Vec::new();
        for acc in AcceleratorConfig::presets() {
            for model in ModelSpec::presets() {
                for (pi, &(a, w)) in pairs.iter().enumerate() {
                    for layer in model.clone().with_precision(a, w).expand() {
                        points.push((acc.clone(), model.name.clone(), pi, layer));
                    }
                }
            }
        }
        let rows: Vec<_> = points
            .par_iter()
            .map(|(acc, model, pi, layer)| {
                let cfg = acc.pe_config().unwrap();
                let fb = simulate_best(&layer.gemm, acc, &cfg).unwrap().cycles * layer.layers;
                let tc = simulate_baseline(&layer.gemm, acc, MachineKind::TensorCoreLike).unwrap().cycles * layer.layers;
                let bf = simulate_baseline(&layer.gemm, acc, MachineKind::BitFusionLike).unwrap().cycles * layer.layers;
                (acc.name.clone(), model.clone(), *pi, layer.gemm.label.clone(), fb, tc, bf)
            })
            .collect();
        let mut totals = Totals::new();
        let mut slower = Vec::new();
        for (acc, model, pi, label, fb, tc, bf) in &rows {
            let e = totals.entry((acc.clone(), model.clone(), *pi)).or_default();
            e.0 += fb;
            e.1 += tc;
            e.2 += bf;
            if fb > tc {
                slower.push(format!("{acc} {label} pair {pi}"));
            }
        }
        Study { totals, slower, layers: rows.len() }
    })
}

fn pair_index(a: &str, w: &str) -> usize {
    standard_pairs().iter().position(|p| *p == (f(a), f(w))).unwrap()
}

fn reduction(t: &(u64, u64, u64)) -> (f64, f64) {
    (1.0 - t.0 as f64 / t.1 as f64, 1.0 - t.0 as f64 / t.2 as f64)
}

#[test]
fn c7a_fp16_parity() {
    let s = study();
    let fp16 = pair_index("e5m10", "e5m10");
    let worst = s
        .totals
        .iter()
        .filter(|(k, _)| k.2 == fp16)
        .map(|(_, t)| reduction(t).0.abs())
        .fold(0.0, f64::max);
    verdict("7a", "FP16 within 10% of TensorCoreLike", worst <= 0.10, &format!("largest gap {:.1}% over all machines and models", 100.0 * worst));
}

#[test]
fn c7b_fp6_gains() {
    let s = study();
    let fp6 = pair_index("e2m3", "e2m3");
    let bert = &s.totals[&("Mobile-A".to_string(), "Bert-Base-uncased".to_string(), fp6)];
    let (vs_tc, vs_bf) = reduction(bert);
    let mut monotone = true;
    let mut trail = Vec::new();
    for acc in AcceleratorConfig::presets() {
        let gains: Vec<f64> =
            ModelSpec::presets().iter().map(|m| reduction(&s.totals[&(acc.name.clone(), m.name.clone(), fp6)]).0).collect();
        monotone &= gains.windows(2).all(|g| g[1] >= g[0]);
        trail.push(format!("{} {}", acc.name, gains.iter().map(|g| format!("{:.3}", g)).collect::<Vec<_>>().join("<=")));
    }
    verdict(
        "7b",
        "FP6 gains and size trend",
        (0.20..=0.70).contains(&vs_tc) && (0.10..=0.50).contains(&vs_bf) && monotone,
        &format!("Bert/Mobile-A {:.1}% vs TC, {:.1}% vs BF; {}", 100.0 * vs_tc, 100.0 * vs_bf, trail.join("; ")),
    );
}

#[test]
fn c7c_packing_ablation() {
    let fp6 = f("e2m3");
    let mut layers = Vec::new();
    for acc in AcceleratorConfig::presets() {
        for m in ModelSpec::presets() {
            for l in m.with_precision(fp6, fp6).expand() {
                layers.push((acc.clone(), l.gemm));
            }
        }
    }
    let ab: Vec<_> = layers.par_iter().map(|(acc, g)| packing_ablation(g, acc).unwrap()).collect();
    let bound: Vec<f64> = ab.iter().filter(|a| a.padded.memory_cycles > a.padded.compute_cycles).map(|a| a.improvement()).collect();
    let ok = !bound.is_empty() && bound.iter().all(|&x| x > 0.0 && x <= 0.30);
    let mean = bound.iter().sum::<f64>() / bound.len().max(1) as f64;
    let (lo, hi) = bound.iter().fold((1.0f64, 0.0f64), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    verdict(
        "7c",
        "packing ablation",
        ok,
        &format!("{} memory-bound FP6 layers, improvement {:.1}%..{:.1}%, mean {:.1}%", bound.len(), 100.0 * lo, 100.0 * hi, 100.0 * mean),
    );
}

#[test]
fn c7d_dominance() {
    let s = study();
    verdict(
        "7d",
        "never slower than TensorCoreLike",
        s.slower.is_empty(),
        &format!("{} slower of {} layer points over 13 pairs {:?}", s.slower.len(), s.layers, s.slower.first()),
    );
}

// ---- criterion 8 ---------------------------------------------------------

#[test]
fn c8_edp_table() {
    // (scale, design, model, latency s, energy uJ, EDP uJ*s)
    #[rustfmt::skip]
    let table = [
        ("Mobile-B", "Cambricon-P", "7b", 83.95, 0.54, 45.33),
        ("Mobile-B", "Cambricon-P", "70b", 1195.55, 7.62, 9110.09),
        ("Mobile-B", "BitMod", "7b", 6.94, 2.99, 20.75),
        ("Mobile-B", "BitMod", "70b", 151.12, 36.18, 5467.52),
        ("Mobile-B", "FlexiBit", "7b", 1.52, 9.84, 14.95),
        ("Mobile-B", "FlexiBit", "70b", 20.52, 135.86, 2787.84),
        ("Cloud-B", "Cambricon-P", "7b", 20.58, 0.38, 7.82),
        ("Cloud-B", "Cambricon-P", "70b", 249.28, 4.65, 1159.15),
        ("Cloud-B", "BitMod", "7b", 1.73, 2.99, 5.17),
        ("Cloud-B", "BitMod", "70b", 37.78, 36.18, 1366.88),
        ("Cloud-B", "FlexiBit", "7b", 0.45, 8.92, 4.01),
        ("Cloud-B", "FlexiBit", "70b", 4.78, 97.70, 467.01),
    ];
    let mut worst: f64 = 0.0;
    for (_, _, _, s, e, want) in table {
        worst = worst.max((edp(s, e) - want).abs() / want);
    }
    let (s, e) = (4.78, 97.70);
    let (ss, se) = BitSerialStub::default().derive(s, e);
    let stub_worse = edp(ss, se) > edp(s, e);
    verdict(
        "8",
        "EDP table consistency",
        worst <= 0.01 && stub_worse,
        &format!("12 cells, worst relative error {:.3}%; bit-serial stub EDP {:.0}x FlexiBit", 100.0 * worst, edp(ss, se) / edp(s, e)),
    );
}

// ---- criterion 9 ---------------------------------------------------------

#[test]
fn c9_determinism() {
    let m = RunManifest {
        machines: vec!["Mobile-A".into(), "Cloud-B".into()],
        models: vec!["Bert-Base-uncased".into()],
        pairs: vec![(f("e2m3"), f("e2m3")), (f("e5m10"), f("int4")), (f("e4m3"), f("e2m1"))],
        ..RunManifest::default()
    };
    let csv = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let mut buf = Vec::new();
            sweep::write_run_csv(&sweep::run(&m).unwrap(), &mut buf).unwrap();
            buf
        })
    };
    let (a, b, c) = (csv(1), csv(4), csv(4));
    verdict(
        "9",
        "deterministic run output",
        a == b && b == c && a.len() > 1000,
        &format!("{} bytes, identical across 1 and 4 threads and repeated runs", a.len()),
    );
}
