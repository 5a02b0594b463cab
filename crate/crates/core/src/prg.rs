//! Local PRG instances: predicates, planted sampling, evaluation and the
//! on-disk instance record.
//!
//! Every output bit is `y_i = x[t_0] ^ ... ^ x[t_{k-1}] ^ N(x[t_k], ..., x[t_{k+q-1}])`
//! where `t` is the i-th index tuple and `N` is either an AND of the `q`
//! trailing inputs or a threshold "at least `d` of `q`" function.
//!
//! Sampling uses ChaCha20 (`rand_chacha::ChaCha20Rng`) seeded with
//! `seed_from_u64`, so a `(n, s, predicate, seed)` quadruple replays to the
//! same instance on every platform.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Error, Result};

/// Non-linear block family of a predicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    XorAnd,
    XorThr,
}

/// An `XOR_k-AND_q` or `XOR_k-THR_{d,q}` predicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Predicate {
    family: Family,
    k: usize,
    q: usize,
    d: usize,
}

impl Predicate {
    /// `x1 ^ x2 ^ x3 ^ x4 x5`.
    pub const P5: Predicate = Predicate {
        family: Family::XorAnd,
        k: 3,
        q: 2,
        d: 2,
    };

    pub fn xor_and(k: usize, q: usize) -> Result<Self> {
        if q == 0 {
            return arg_err("AND block needs q >= 1");
        }
        Ok(Predicate {
            family: Family::XorAnd,
            k,
            q,
            d: q,
        })
    }

    pub fn xor_thr(k: usize, d: usize, q: usize) -> Result<Self> {
        if q == 0 || d == 0 || d > q {
            return arg_err(format!("threshold needs 1 <= d <= q, got d={d} q={q}"));
        }
        Ok(Predicate {
            family: Family::XorThr,
            k,
            q,
            d,
        })
    }

    /// `XOR_k-MAJ_q`, i.e. threshold `ceil(q/2)`.
    pub fn xor_maj(k: usize, q: usize) -> Result<Self> {
        Self::xor_thr(k, q.div_ceil(2), q)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// Number of linear (XOR) inputs.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of non-linear inputs.
    pub fn q(&self) -> usize {
        self.q
    }

    /// Threshold; equals `q` for AND blocks.
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn locality(&self) -> usize {
        self.k + self.q
    }

    /// Evaluates the predicate; the first `k` bits are the XOR inputs.
    pub fn eval(&self, bits: &[bool]) -> Result<bool> {
        if bits.len() != self.locality() {
            return arg_err(format!(
                "predicate takes {} inputs, got {}",
                self.locality(),
                bits.len()
            ));
        }
        Ok(self.eval_unchecked(bits))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, bits: &[bool]) -> bool {
        let (lin, nl) = bits.split_at(self.k);
        let x = lin.iter().fold(false, |acc, &b| acc ^ b);
        let block = match self.family {
            Family::XorAnd => nl.iter().all(|&b| b),
            Family::XorThr => nl.iter().filter(|&&b| b).count() >= self.d,
        };
        x ^ block
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            Family::XorAnd if self.k == 3 && self.q == 2 => write!(f, "p5"),
            Family::XorAnd => write!(f, "xor{}-and{}", self.k, self.q),
            Family::XorThr => write!(f, "xor{}-thr{}of{}", self.k, self.d, self.q),
        }
    }
}

impl FromStr for Predicate {
    type Err = Error;

    /// Accepts `p5`, `xor{k}-and{q}`, `xor{k}-thr{d}of{q}` and `xor{k}-maj{q}`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "p5" {
            return Ok(Predicate::P5);
        }
        let bad = || Error::Argument(format!("unrecognised predicate `{s}`"));
        let rest = s.strip_prefix("xor").ok_or_else(bad)?;
        let (k, block) = rest.split_once('-').ok_or_else(bad)?;
        let k: usize = k.parse().map_err(|_| bad())?;
        if let Some(q) = block.strip_prefix("and") {
            Predicate::xor_and(k, q.parse().map_err(|_| bad())?)
        } else if let Some(q) = block.strip_prefix("maj") {
            Predicate::xor_maj(k, q.parse().map_err(|_| bad())?)
        } else if let Some(dq) = block.strip_prefix("thr") {
            let (d, q) = dq.split_once("of").ok_or_else(bad)?;
            Predicate::xor_thr(k, d.parse().map_err(|_| bad())?, q.parse().map_err(|_| bad())?)
        } else {
            Err(bad())
        }
    }
}

/// `floor(n^s)`.
///
/// Stretches with at most four decimals go through exact big-integer
/// arithmetic (`floor((n^p)^(1/q))` for `s = p/q`); anything else uses the
/// float power. The two paths are cross-checked in tests.
pub fn output_len(n: usize, s: f64) -> Result<usize> {
    if !(s.is_finite() && s > 0.0) || n == 0 {
        return arg_err(format!("need n >= 1 and s > 0, got n={n} s={s}"));
    }
    if let Some((p, q)) = decimal_ratio(s) {
        let root = BigUint::from(n).pow(p).nth_root(q);
        return root
            .to_usize()
            .ok_or_else(|| Error::Argument(format!("n^s overflows for n={n} s={s}")));
    }
    let v = (n as f64).powf(s);
    if !v.is_finite() || v > usize::MAX as f64 {
        return arg_err(format!("n^s overflows for n={n} s={s}"));
    }
    Ok(v.floor() as usize)
}

/// Float-only `floor(n^s)`, used where `s` is a continuous search variable.
pub fn output_len_f64(n: usize, s: f64) -> usize {
    (n as f64).powf(s).floor() as usize
}

fn decimal_ratio(s: f64) -> Option<(u32, u32)> {
    let mut den = 1u64;
    while den <= 10_000 {
        let num = (s * den as f64).round();
        if (num / den as f64 - s).abs() < 1e-12 && num <= u32::MAX as f64 {
            let num = num as u64;
            let g = num.gcd(&den);
            return Some(((num / g) as u32, (den / g) as u32));
        }
        den *= 10;
    }
    None
}

/// Ordered index tuple; the first `k` positions are the linear slots.
pub type IndexTuple = Vec<u32>;

/// A public PRG instance, optionally carrying the planted seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub n: usize,
    /// Stretch the instance was generated with (informational).
    pub s: f64,
    pub predicate: Predicate,
    pub tuples: Vec<IndexTuple>,
    pub outputs: Vec<bool>,
    pub planted_secret: Option<Vec<bool>>,
    pub rng_seed: Option<u64>,
}

impl Instance {
    /// Builds an instance from explicit tuples and a secret, computing outputs.
    pub fn from_secret(predicate: Predicate, tuples: Vec<IndexTuple>, secret: Vec<bool>) -> Result<Self> {
        let n = secret.len();
        validate_tuples(n, &predicate, &tuples)?;
        let outputs = tuples.iter().map(|t| eval_tuple(&predicate, t, &secret)).collect();
        let m = tuples.len();
        Ok(Instance {
            n,
            s: stretch_of(n, m),
            predicate,
            tuples,
            outputs,
            planted_secret: Some(secret),
            rng_seed: None,
        })
    }

    /// Builds a public instance (no secret).
    pub fn from_outputs(n: usize, predicate: Predicate, tuples: Vec<IndexTuple>, outputs: Vec<bool>) -> Result<Self> {
        validate_tuples(n, &predicate, &tuples)?;
        if outputs.len() != tuples.len() {
            return arg_err("one output bit per tuple required");
        }
        let m = tuples.len();
        Ok(Instance {
            n,
            s: stretch_of(n, m),
            predicate,
            tuples,
            outputs,
            planted_secret: None,
            rng_seed: None,
        })
    }

    pub fn m(&self) -> usize {
        self.tuples.len()
    }

    /// Copy of the instance with the planted secret removed.
    pub fn public(&self) -> Instance {
        Instance {
            planted_secret: None,
            ..self.clone()
        }
    }
}

fn stretch_of(n: usize, m: usize) -> f64 {
    if n > 1 && m > 0 {
        (m as f64).ln() / (n as f64).ln()
    } else {
        0.0
    }
}

fn validate_tuples(n: usize, predicate: &Predicate, tuples: &[IndexTuple]) -> Result<()> {
    for (i, t) in tuples.iter().enumerate() {
        if t.len() != predicate.locality() {
            return arg_err(format!("tuple {i} has {} indices, expected {}", t.len(), predicate.locality()));
        }
        for (a, &x) in t.iter().enumerate() {
            if x as usize >= n {
                return arg_err(format!("tuple {i} index {x} out of range for n={n}"));
            }
            if t[..a].contains(&x) {
                return arg_err(format!("tuple {i} repeats index {x}"));
            }
        }
    }
    Ok(())
}

#[inline]
pub(crate) fn eval_tuple(predicate: &Predicate, tuple: &[u32], x: &[bool]) -> bool {
    let mut bits = [false; 32];
    if tuple.len() <= bits.len() {
        for (b, &i) in bits.iter_mut().zip(tuple) {
            *b = x[i as usize];
        }
        predicate.eval_unchecked(&bits[..tuple.len()])
    } else {
        let bits: Vec<bool> = tuple.iter().map(|&i| x[i as usize]).collect();
        predicate.eval_unchecked(&bits)
    }
}

/// Evaluates `pred` on `bits`.
pub fn eval_predicate(pred: &Predicate, bits: &[bool]) -> Result<bool> {
    pred.eval(bits)
}

/// Samples a planted instance with `m = floor(n^s)` uniformly drawn tuples.
pub fn sample_instance(n: usize, s: f64, pred: Predicate, rng_seed: u64) -> Result<Instance> {
    if n < pred.locality() {
        return arg_err(format!("n={n} is smaller than the locality {}", pred.locality()));
    }
    let m = output_len(n, s)?;
    if m == 0 {
        return arg_err(format!("n^s < 1 for n={n} s={s}"));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(rng_seed);
    let secret: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
    let loc = pred.locality();
    let mut tuples = Vec::with_capacity(m);
    for _ in 0..m {
        let mut t: IndexTuple = Vec::with_capacity(loc);
        while t.len() < loc {
            let x = rng.gen_range(0..n as u32);
            if !t.contains(&x) {
                t.push(x);
            }
        }
        tuples.push(t);
    }
    let outputs = tuples.iter().map(|t| eval_tuple(&pred, t, &secret)).collect();
    Ok(Instance {
        n,
        s,
        predicate: pred,
        tuples,
        outputs,
        planted_secret: Some(secret),
        rng_seed: Some(rng_seed),
    })
}

/// True iff `candidate` reproduces every output bit.
pub fn verify_secret(inst: &Instance, candidate: &[bool]) -> Result<bool> {
    if candidate.len() != inst.n {
        return arg_err(format!("candidate has {} bits, instance has n={}", candidate.len(), inst.n));
    }
    Ok(verify_unchecked(inst, candidate))
}

#[inline]
pub(crate) fn verify_unchecked(inst: &Instance, candidate: &[bool]) -> bool {
    inst.tuples
        .iter()
        .zip(&inst.outputs)
        .all(|(t, &y)| eval_tuple(&inst.predicate, t, candidate) == y)
}

/// Renders bits as an ASCII `0`/`1` string.
pub fn bits_to_string(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

pub fn bits_from_str(s: &str) -> Result<Vec<bool>> {
    s.chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            other => Err(Error::Format(format!("bit string contains `{other}`"))),
        })
        .collect()
}

pub const INSTANCE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PredicateRecord {
    family: Family,
    k: usize,
    q: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    d: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct InstanceRecord {
    version: u32,
    n: usize,
    s: f64,
    predicate: PredicateRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rng_seed: Option<u64>,
    tuples: Vec<Vec<u32>>,
    outputs: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    secret: Option<String>,
}

impl Instance {
    /// Serializes to the JSON instance record.
    pub fn to_json(&self) -> Result<String> {
        let p = &self.predicate;
        let rec = InstanceRecord {
            version: INSTANCE_FORMAT_VERSION,
            n: self.n,
            s: self.s,
            predicate: PredicateRecord {
                family: p.family,
                k: p.k,
                q: p.q,
                d: (p.family == Family::XorThr).then_some(p.d),
            },
            rng_seed: self.rng_seed,
            tuples: self.tuples.clone(),
            outputs: bits_to_string(&self.outputs),
            secret: self.planted_secret.as_deref().map(bits_to_string),
        };
        Ok(serde_json::to_string(&rec)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rec: InstanceRecord = serde_json::from_str(text)?;
        if rec.version != INSTANCE_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {}", rec.version)));
        }
        let p = &rec.predicate;
        let predicate = match p.family {
            Family::XorAnd => Predicate::xor_and(p.k, p.q)?,
            Family::XorThr => {
                let d = p.d.ok_or_else(|| Error::Format("xor-thr predicate needs `d`".into()))?;
                Predicate::xor_thr(p.k, d, p.q)?
            }
        };
        validate_tuples(rec.n, &predicate, &rec.tuples)?;
        let outputs = bits_from_str(&rec.outputs)?;
        if outputs.len() != rec.tuples.len() {
            return Err(Error::Format(format!(
                "{} outputs for {} tuples",
                outputs.len(),
                rec.tuples.len()
            )));
        }
        let planted_secret = rec.secret.as_deref().map(bits_from_str).transpose()?;
        if let Some(x) = &planted_secret {
            if x.len() != rec.n {
                return Err(Error::Format(format!("secret has {} bits, n={}", x.len(), rec.n)));
            }
        }
        Ok(Instance {
            n: rec.n,
            s: rec.s,
            predicate,
            tuples: rec.tuples,
            outputs,
            planted_secret,
            rng_seed: rec.rng_seed,
        })
    }
}
