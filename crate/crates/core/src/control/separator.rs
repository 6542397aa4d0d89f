use serde::{Deserialize, Serialize};

use super::config::PEConfig;
use crate::codec::FormatSpec;
use crate::error::{bail, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Route {
    Sign(u16),
    Exp(u16),
    Man(u16),
    Inactive,
}

/// Where every input register bit goes, plus the resulting element layout.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeparatorRoutes {
    pub fmt: FormatSpec,
    pub elements: usize,
    pub routes: Vec<Route>,
}

impl SeparatorRoutes {
    pub fn active_bits(&self) -> usize {
        self.elements * self.fmt.total_bits() as usize
    }

    /// Mantissa register position of bit `i` (LSB = 0) of element `k`.
    pub fn man_pos(&self, k: usize, i: u32) -> usize {
        let m = self.fmt.man_bits();
        k * m as usize + (m - 1 - i) as usize
    }

    /// Exponent register position of bit `i` (LSB = 0) of element `k`.
    pub fn exp_pos(&self, k: usize, i: u32) -> usize {
        let e = self.fmt.exp_bits();
        k * e as usize + (e - 1 - i) as usize
    }
}

/// Elements of `fmt` one register load can hold given every field register.
pub fn elements_per_load(fmt: FormatSpec, cfg: &PEConfig) -> usize {
    let fit = |cap: u32, w: u32| if w == 0 { usize::MAX } else { (cap / w) as usize };
    fit(cfg.reg_width, fmt.total_bits())
        .min(fit(cfg.r_m, fmt.man_bits()))
        .min(fit(cfg.r_e, fmt.exp_bits()))
        .min(fit(cfg.r_s, fmt.sign_bits()))
}

/// Scans the input register MSB-first, sending each element's sign, exponent
/// and mantissa bits to their own registers.
pub fn compile_separator(fmt: FormatSpec, cfg: &PEConfig) -> Result<SeparatorRoutes> {
    let n = elements_per_load(fmt, cfg);
    if n == 0 {
        bail!(
            Capacity,
            "{fmt} needs {}/{}/{} sign/exp/man bits; PE has {}/{}/{}",
            fmt.sign_bits(),
            fmt.exp_bits(),
            fmt.man_bits(),
            cfg.r_s,
            cfg.r_e,
            cfg.r_m
        );
    }
    let p = fmt.total_bits() as usize;
    let s = fmt.sign_bits() as usize;
    let e = fmt.exp_bits() as usize;
    let (mut si, mut ei, mut mi) = (0u16, 0u16, 0u16);
    let mut routes = Vec::with_capacity(cfg.reg_width as usize);
    for i in 0..cfg.reg_width as usize {
        let elem = i / p;
        let bit = i % p;
        let r = if elem >= n {
            Route::Inactive
        } else if bit < s {
            si += 1;
            Route::Sign(si - 1)
        } else if bit < s + e {
            ei += 1;
            Route::Exp(ei - 1)
        } else {
            mi += 1;
            Route::Man(mi - 1)
        };
        routes.push(r);
    }
    Ok(SeparatorRoutes { fmt, elements: n, routes })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn positions(r: &SeparatorRoutes, pick: fn(&Route) -> bool) -> Vec<usize> {
        r.routes.iter().enumerate().filter(|(_, x)| pick(x)).map(|(i, _)| i).collect()
    }

    #[test]
    fn fp6_layout() {
        let r = compile_separator("e2m3".parse().unwrap(), &PEConfig::default()).unwrap();
        assert_eq!(r.elements, 4);
        assert_eq!(positions(&r, |x| matches!(x, Route::Sign(_))), vec![0, 6, 12, 18]);
        assert_eq!(positions(&r, |x| matches!(x, Route::Exp(_))), vec![1, 2, 7, 8, 13, 14, 19, 20]);
        assert_eq!(
            positions(&r, |x| matches!(x, Route::Man(_))),
            vec![3, 4, 5, 9, 10, 11, 15, 16, 17, 21, 22, 23]
        );
    }

    #[test]
    fn destination_indices_run_consecutively() {
        let r = compile_separator("e3m4".parse().unwrap(), &PEConfig::default()).unwrap();
        let mans: Vec<u16> = r
            .routes
            .iter()
            .filter_map(|x| if let Route::Man(k) = x { Some(*k) } else { None })
            .collect();
        assert_eq!(mans, (0..mans.len() as u16).collect::<Vec<_>>());
        // 8-bit elements, three fit by width but only three 4-bit mantissas fit R_M
        assert_eq!(r.elements, 3);
    }

    #[test]
    fn mantissa_register_limits_elements() {
        let r = compile_separator("e1m4".parse().unwrap(), &PEConfig::default()).unwrap();
        assert_eq!(r.elements, 3);
        assert!(r.routes[18..].iter().all(|x| *x == Route::Inactive));
    }

    #[test]
    fn one_full_width_element() {
        let cfg = PEConfig { reg_width: 12, ..PEConfig::default() };
        let r = compile_separator("e4m7".parse().unwrap(), &cfg).unwrap();
        assert_eq!(r.elements, 1);
        assert_eq!(r.routes.iter().filter(|x| matches!(x, Route::Exp(_))).count(), 4);
        assert_eq!(r.routes.iter().filter(|x| matches!(x, Route::Man(_))).count(), 7);
    }

    #[test]
    fn capacity_error() {
        let cfg = PEConfig { r_m: 4, ..PEConfig::default() };
        assert!(matches!(
            compile_separator("e2m5".parse().unwrap(), &cfg),
            Err(crate::Error::Capacity(_))
        ));
    }

    #[test]
    fn integers_have_no_exponent_routes() {
        let r = compile_separator("int4".parse().unwrap(), &PEConfig::default()).unwrap();
        assert_eq!(r.elements, 4);
        assert!(!r.routes.iter().any(|x| matches!(x, Route::Exp(_))));
    }
}
