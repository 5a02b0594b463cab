//! Closed-form security arithmetic: expected collisions and guesses, attack
//! complexities (log2), and the stretch above which an (n, r) pair falls.

use serde::Serialize;

use crate::error::{arg_err, Error, Result};
use crate::prg::output_len_f64;

/// Expected number of linear equations gained from collisions among `m`
/// uniformly random quadratic terms over `n` variables,
/// `m - N + N((N-1)/N)^m` with `N = C(n, 2)`.
pub fn expected_collisions(n: usize, m: u64) -> f64 {
    let big_n = n as f64 * (n as f64 - 1.0) / 2.0;
    if big_n <= 1.0 || m == 0 {
        return 0.0;
    }
    let m = m as f64;
    // N(1 - 1/N)^m - N = N * expm1(m * ln(1 - 1/N)), kept in log form.
    let tail = big_n * (m * (-1.0 / big_n).ln_1p()).exp_m1();
    (m + tail).max(0.0)
}

/// Guesses needed for `n` linear equations,
/// `ceil((n - c) / (4 n^{s-1} + 2) + 1)`, floored at 0.
pub fn expected_guesses(n: usize, s: f64) -> u64 {
    let c = expected_collisions(n, output_len_f64(n, s) as u64);
    let nf = n as f64;
    let l = ((nf - c) / (4.0 * nf.powf(s - 1.0) + 2.0) + 1.0).ceil();
    l.max(0.0) as u64
}

/// `log2(2^l * n^2)`.
pub fn gd_complexity_log2(n: usize, l: f64) -> f64 {
    l + 2.0 * (n as f64).log2()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecodeMode {
    /// `1/p * 2^l * 40 * n^s`: every path runs up to 40 BP iterations.
    WithDecoding,
    /// `1/p * 2^l * n`: secrets recovered without iterating.
    Direct,
}

/// Number of iterations priced into a decoding path.
pub const PRICED_ITERATIONS: f64 = 40.0;

pub fn decode_complexity_log2(n: usize, s: f64, l: f64, p: f64, mode: DecodeMode) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return arg_err(format!("success probability {p} outside (0, 1]"));
    }
    let lg = (n as f64).log2();
    Ok(match mode {
        DecodeMode::WithDecoding => l + PRICED_ITERATIONS.log2() + s * lg - p.log2(),
        DecodeMode::Direct => l + lg - p.log2(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bound {
    /// `4(R-1) n^{s-1} + c + 2R - 2 >= n` for this attack.
    New,
    /// `2R n^{s-1} + c + R >= n` for the earlier worst-case analysis.
    Prior,
}

/// Linear equations available after `R = r - 2 log2 n` guesses, minus `n`.
fn stretch_slack(n: usize, r: f64, s: f64, bound: Bound) -> f64 {
    let nf = n as f64;
    let big_r = r - 2.0 * nf.log2();
    let c = expected_collisions(n, output_len_f64(n, s) as u64);
    let grow = nf.powf(s - 1.0);
    let lhs = match bound {
        Bound::New => 4.0 * (big_r - 1.0) * grow + c + 2.0 * big_r - 2.0,
        Bound::Prior => 2.0 * big_r * grow + c + big_r,
    };
    lhs - nf
}

pub const STRETCH_TOL: f64 = 1e-6;

/// Smallest stretch in `[1, 2]` at which `r`-bit security is lost; stretches
/// above it are vulnerable. A range error means the whole interval is on one
/// side of the limit.
pub fn vulnerable_stretch(n: usize, r: f64, bound: Bound) -> Result<f64> {
    if n < 2 || r <= 2.0 * (n as f64).log2() + 1.0 {
        return arg_err(format!("r = {r} needs to exceed 2 log2 n + 1 = {:.3}", 2.0 * (n as f64).log2() + 1.0));
    }
    let f = |s| stretch_slack(n, r, s, bound);
    let (mut lo, mut hi) = (1.0, 2.0);
    if f(hi) < 0.0 {
        return Err(Error::Range(format!("n = {n}, r = {r}: secure for every stretch up to 2")));
    }
    if f(lo) >= 0.0 {
        return Err(Error::Range(format!("n = {n}, r = {r}: vulnerable already at stretch 1")));
    }
    while hi - lo > STRETCH_TOL {
        let mid = 0.5 * (lo + hi);
        if f(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Parameters entering the estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SecurityParams {
    pub n: usize,
    pub s: f64,
    pub r: f64,
    pub guesses: f64,
    pub collisions: f64,
    pub p: f64,
}

impl SecurityParams {
    /// Fills in `c` and the expected guesses for `(n, s)`.
    pub fn new(n: usize, s: f64, r: f64) -> Result<Self> {
        if n < 2 || !(s >= 1.0) {
            return arg_err(format!("need n >= 2 and s >= 1, got n = {n}, s = {s}"));
        }
        Ok(SecurityParams {
            n,
            s,
            r,
            guesses: expected_guesses(n, s) as f64,
            collisions: expected_collisions(n, output_len_f64(n, s) as u64),
            p: 1.0,
        })
    }

    pub fn gd_complexity_log2(&self) -> f64 {
        gd_complexity_log2(self.n, self.guesses)
    }

    pub fn is_secure(&self) -> bool {
        self.gd_complexity_log2() >= self.r
    }
}
