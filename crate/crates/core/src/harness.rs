//! Batch experiments: per-trial rows, aggregates, and flat-file output.
//!
//! Trial `i` always attacks the instance seeded with `rng::trial_seed(seed, i)`
//! (the same instance for every ℓ of a sweep and every worker count), so a
//! record replays bit-for-bit from its config apart from wall-clock columns.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bp::{guess_and_decode, GadParams};
use crate::error::{arg_err, Error, Result};
use crate::estimator::{decode_complexity_log2, expected_guesses, gd_complexity_log2, vulnerable_stretch, Bound, DecodeMode};
use crate::gd::{gd_attack, guesses_to_budget, GdLimits, MeanVar};
use crate::prg::{sample_instance, verify_secret, Predicate};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    AvgGuesses,
    KeyRecovery,
    SuccessSweep,
    StretchSearch,
    Estimate,
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Argument(format!("unknown experiment kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub n: usize,
    pub s: f64,
    /// Descending stretch scan for `StretchSearch`: `s_max` down to `s_min`.
    pub s_max: f64,
    pub s_min: f64,
    pub s_step: f64,
    #[serde(with = "predicate_str")]
    pub predicate: Predicate,
    pub l_min: usize,
    pub l_max: usize,
    pub l_step: usize,
    pub iter_max: usize,
    pub trials: usize,
    pub seed: u64,
    /// 0 = rayon's default.
    pub workers: usize,
    /// Target security in bits (stretch search).
    pub r: f64,
    /// Required excess over `r`, as a fraction of `r`.
    pub margin: f64,
    pub max_nodes: u64,
    pub out: Option<PathBuf>,
}

mod predicate_str {
    use super::Predicate;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(p: &Predicate, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(p)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Predicate, D::Error> {
        String::deserialize(d)?.parse().map_err(D::Error::custom)
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            kind: ExperimentKind::AvgGuesses,
            n: 256,
            s: 1.45,
            s_max: 1.3,
            s_min: 1.0,
            s_step: 0.01,
            predicate: Predicate::P5,
            l_min: 0,
            l_max: 0,
            l_step: 1,
            iter_max: 40,
            trials: 100,
            seed: 1,
            workers: 0,
            r: 80.0,
            margin: 0.10,
            max_nodes: GdLimits::default().max_nodes,
            out: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return arg_err("trials must be at least 1");
        }
        if self.n < self.predicate.locality() {
            return arg_err(format!("n = {} below locality {}", self.n, self.predicate.locality()));
        }
        if self.kind == ExperimentKind::SuccessSweep || self.kind == ExperimentKind::StretchSearch {
            if self.l_step == 0 || self.l_min > self.l_max {
                return arg_err("empty guess range");
            }
        }
        if self.kind == ExperimentKind::StretchSearch && !(self.s_step > 0.0 && self.s_max >= self.s_min) {
            return arg_err("empty stretch range");
        }
        Ok(())
    }

    fn guess_counts(&self) -> impl Iterator<Item = usize> {
        (self.l_min..=self.l_max).step_by(self.l_step.max(1))
    }

    /// `s_max, s_max - step, ...` down to `s_min`, on a decimal grid.
    fn stretches(&self) -> Vec<f64> {
        let count = ((self.s_max - self.s_min) / self.s_step + 1e-9).floor() as usize;
        (0..=count).map(|i| round6(self.s_max - i as f64 * self.s_step)).collect()
    }
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

/// One trial. Columns that do not apply to an experiment stay empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial: usize,
    pub n: usize,
    pub s: f64,
    pub l: Option<usize>,
    pub instance_seed: u64,
    pub guesses: Option<usize>,
    pub solves: Option<u64>,
    pub nodes: Option<u64>,
    pub iterations: Option<usize>,
    pub outcome: String,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub n: usize,
    pub s: f64,
    pub l: Option<usize>,
    pub trials: usize,
    pub mean_guesses: Option<f64>,
    pub var_guesses: Option<f64>,
    pub mean_solves: Option<f64>,
    pub mean_nodes: Option<f64>,
    pub mean_iterations: Option<f64>,
    /// Fraction of successful trials.
    pub p: f64,
    pub p_direct: Option<f64>,
    /// log2 complexity; `mode` says which formula.
    pub complexity_log2: Option<f64>,
    pub mode: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub trials: Vec<TrialRow>,
    pub aggregates: Vec<AggregateRow>,
    /// Stretch search: the largest secure stretch found.
    pub s_limit: Option<f64>,
}

impl RunRecord {
    /// Iteration counts of successful decodes at `l` (0 = direct).
    pub fn iteration_histogram(&self, l: usize) -> BTreeMap<usize, usize> {
        let mut h = BTreeMap::new();
        for t in self.trials.iter().filter(|t| t.l == Some(l) && t.outcome != "failed") {
            *h.entry(t.iterations.unwrap_or(0)).or_insert(0) += 1;
        }
        h
    }

    /// Lowest-complexity aggregate row.
    pub fn best(&self) -> Option<&AggregateRow> {
        self.aggregates
            .iter()
            .filter(|a| a.complexity_log2.is_some())
            .min_by(|a, b| a.complexity_log2.partial_cmp(&b.complexity_log2).unwrap())
    }

    /// Writes the record: JSON as one document, CSV as the aggregates at
    /// `path` plus the per-trial rows next to it (`*.trials.csv`).
    pub fn write(&self, path: &Path, format: Format) -> Result<()> {
        match format {
            Format::Json => {
                let f = File::create(path)?;
                serde_json::to_writer_pretty(f, self)?;
            }
            Format::Csv => {
                write_csv(File::create(path)?, &self.aggregates)?;
                if !self.trials.is_empty() {
                    write_csv(File::create(trials_path(path))?, &self.trials)?;
                }
            }
        }
        Ok(())
    }
}

pub fn trials_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.trials.csv"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

pub fn write_csv<W: Write, T: Serialize>(w: W, rows: &[T]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

/// Runs `f(i)` for every trial on a pool of `workers` threads, in order.
fn par_trials<T: Send>(workers: usize, trials: usize, f: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Argument(e.to_string()))?;
    pool.install(|| (0..trials).into_par_iter().map(&f).collect())
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, c) = xs.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    (c > 0).then(|| s / c as f64)
}

/// Guesses until `n` linear equations are available (random guess values).
pub fn run_avg_guesses(cfg: &ExperimentConfig) -> Result<RunRecord> {
    cfg.validate()?;
    let trials = par_trials(cfg.workers, cfg.trials, |i| {
        let t = Instant::now();
        let seed = rng::trial_seed(cfg.seed, i as u64);
        let inst = sample_instance(cfg.n, cfg.s, cfg.predicate, seed)?;
        let (g, conflict) = guesses_to_budget(&inst, &mut rng::trial_rng(seed, 1))?;
        Ok(TrialRow {
            trial: i,
            n: cfg.n,
            s: cfg.s,
            l: None,
            instance_seed: seed,
            guesses: Some(g),
            solves: None,
            nodes: None,
            iterations: None,
            outcome: if conflict { "conflict" } else { "budget" }.into(),
            wall_ms: ms_since(t),
        })
    })?;
    let g: Vec<f64> = trials.iter().map(|t| t.guesses.unwrap() as f64).collect();
    let mv = MeanVar::of(&g);
    let mean_guesses = mv.mean;
    let agg = AggregateRow {
        n: cfg.n,
        s: cfg.s,
        l: None,
        trials: trials.len(),
        mean_guesses: Some(mean_guesses),
        var_guesses: Some(mv.variance),
        mean_solves: None,
        mean_nodes: None,
        mean_iterations: None,
        p: trials.iter().filter(|t| t.outcome == "budget").count() as f64 / trials.len() as f64,
        p_direct: None,
        complexity_log2: Some(gd_complexity_log2(cfg.n, mean_guesses)),
        mode: Some("gd".into()),
    };
    Ok(RunRecord {
        config: cfg.clone(),
        trials,
        aggregates: vec![agg],
        s_limit: None,
    })
}

/// Full guess-and-determine key recovery.
pub fn run_key_recovery(cfg: &ExperimentConfig) -> Result<RunRecord> {
    cfg.validate()?;
    let limits = GdLimits {
        max_nodes: cfg.max_nodes,
        ..GdLimits::default()
    };
    let trials = par_trials(cfg.workers, cfg.trials, |i| {
        let t = Instant::now();
        let seed = rng::trial_seed(cfg.seed, i as u64);
        let inst = sample_instance(cfg.n, cfg.s, cfg.predicate, seed)?;
        let row = |guesses, solves, nodes, outcome: &str| TrialRow {
            trial: i,
            n: cfg.n,
            s: cfg.s,
            l: None,
            instance_seed: seed,
            guesses,
            solves,
            nodes,
            iterations: None,
            outcome: outcome.into(),
            wall_ms: ms_since(t),
        };
        Ok(match gd_attack(&inst, limits) {
            Ok(o) => {
                let ok = verify_secret(&inst, &o.secret)?;
                let st = o.stats;
                row(Some(st.guesses_on_path), Some(st.solves), Some(st.nodes), if ok { "recovered" } else { "wrong" })
            }
            Err(Error::Exhausted { nodes, .. }) => row(None, None, Some(nodes), "exhausted"),
            Err(e) => return Err(e),
        })
    })?;
    let ok: Vec<&TrialRow> = trials.iter().filter(|t| t.outcome == "recovered").collect();
    let g: Vec<f64> = ok.iter().map(|t| t.guesses.unwrap() as f64).collect();
    let mv = MeanVar::of(&g);
    let agg = AggregateRow {
        n: cfg.n,
        s: cfg.s,
        l: None,
        trials: trials.len(),
        mean_guesses: (!g.is_empty()).then_some(mv.mean),
        var_guesses: (!g.is_empty()).then_some(mv.variance),
        mean_solves: mean(ok.iter().map(|t| t.solves.unwrap() as f64)),
        mean_nodes: mean(ok.iter().map(|t| t.nodes.unwrap() as f64)),
        mean_iterations: None,
        p: ok.len() as f64 / trials.len() as f64,
        p_direct: None,
        complexity_log2: None,
        mode: None,
    };
    Ok(RunRecord {
        config: cfg.clone(),
        trials,
        aggregates: vec![agg],
        s_limit: None,
    })
}

fn sweep_at(cfg: &ExperimentConfig, s: f64) -> Result<(Vec<TrialRow>, Vec<AggregateRow>)> {
    let ls: Vec<usize> = cfg.guess_counts().collect();
    // One trial = one instance decoded at every ℓ.
    let per_instance = par_trials(cfg.workers, cfg.trials, |i| {
        let seed = rng::trial_seed(cfg.seed, i as u64);
        let inst = sample_instance(cfg.n, s, cfg.predicate, seed)?;
        let mut rows = Vec::with_capacity(ls.len());
        for &l in &ls {
            if l > cfg.n {
                break;
            }
            let t = Instant::now();
            let params = GadParams {
                guesses: l,
                paths: 1,
                iter_max: cfg.iter_max,
                oracle: true,
                seed,
                collisions: true,
            };
            let o = match guess_and_decode(&inst, params) {
                Ok(o) => o,
                // Fewer free variables than guesses: nothing left to try at
                // this or any larger ℓ.
                Err(Error::Argument(_)) => break,
                Err(e) => return Err(e),
            };
            rows.push(TrialRow {
                trial: i,
                n: cfg.n,
                s,
                l: Some(l),
                instance_seed: seed,
                guesses: Some(o.stats.guesses),
                solves: None,
                nodes: None,
                iterations: Some(o.result.iterations()),
                outcome: o.result.label().into(),
                wall_ms: ms_since(t),
            });
        }
        Ok(rows)
    })?;
    let mut trials: Vec<TrialRow> = Vec::new();
    for &l in &ls {
        trials.extend(per_instance.iter().flatten().filter(|r| r.l == Some(l)).cloned());
    }

    let mut aggs = Vec::new();
    for &l in &ls {
        let rows: Vec<&TrialRow> = trials.iter().filter(|t| t.l == Some(l)).collect();
        if rows.is_empty() {
            continue;
        }
        let total = rows.len() as f64;
        let ok: Vec<&&TrialRow> = rows.iter().filter(|t| t.outcome != "failed").collect();
        let direct = rows.iter().filter(|t| t.outcome == "direct").count() as f64;
        let p = ok.len() as f64 / total;
        let p_direct = direct / total;
        let base = AggregateRow {
            n: cfg.n,
            s,
            l: Some(l),
            trials: rows.len(),
            mean_guesses: mean(rows.iter().map(|t| t.guesses.unwrap() as f64)),
            var_guesses: None,
            mean_solves: None,
            mean_nodes: None,
            mean_iterations: mean(ok.iter().map(|t| t.iterations.unwrap() as f64)),
            p,
            p_direct: Some(p_direct),
            complexity_log2: decode_complexity_log2(cfg.n, s, l as f64, p, DecodeMode::WithDecoding).ok(),
            mode: Some("with-decoding".into()),
        };
        if p_direct > 0.0 {
            aggs.push(AggregateRow {
                complexity_log2: decode_complexity_log2(cfg.n, s, l as f64, p_direct, DecodeMode::Direct).ok(),
                mode: Some("direct".into()),
                ..base.clone()
            });
        }
        aggs.insert(aggs.len() - (p_direct > 0.0) as usize, base);
    }
    Ok((trials, aggs))
}

/// Oracle-mode guess-and-decode over a range of guess counts.
pub fn run_success_sweep(cfg: &ExperimentConfig) -> Result<RunRecord> {
    cfg.validate()?;
    let (trials, aggregates) = sweep_at(cfg, cfg.s)?;
    Ok(RunRecord {
        config: cfg.clone(),
        trials,
        aggregates,
        s_limit: None,
    })
}

/// Scans stretches downwards and reports the largest one whose best attack
/// complexity (guess-and-determine, decoding or direct) is at least
/// `r (1 + margin)` bits.
pub fn run_stretch_search(cfg: &ExperimentConfig) -> Result<RunRecord> {
    cfg.validate()?;
    let need = cfg.r * (1.0 + cfg.margin);
    let mut trials = Vec::new();
    let mut aggregates = Vec::new();
    let mut s_limit = None;
    for s in cfg.stretches() {
        let (t, mut a) = sweep_at(cfg, s)?;
        let gd = gd_complexity_log2(cfg.n, expected_guesses(cfg.n, s) as f64);
        a.push(AggregateRow {
            n: cfg.n,
            s,
            l: Some(expected_guesses(cfg.n, s) as usize),
            trials: 0,
            mean_guesses: None,
            var_guesses: None,
            mean_solves: None,
            mean_nodes: None,
            mean_iterations: None,
            p: 1.0,
            p_direct: None,
            complexity_log2: Some(gd),
            mode: Some("gd".into()),
        });
        let best = a.iter().filter_map(|r| r.complexity_log2).fold(f64::INFINITY, f64::min);
        trials.extend(t);
        aggregates.extend(a);
        if best >= need {
            s_limit = Some(s);
            break;
        }
    }
    Ok(RunRecord {
        config: cfg.clone(),
        trials,
        aggregates,
        s_limit,
    })
}

/// Closed-form stretch limits: one row per `(n, bound)` with a column per
/// target `r`; empty where no limit exists in `[1, 2]`.
pub fn estimate_table(ns: &[usize], rs: &[f64]) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut header = vec!["n".to_string(), "bound".to_string()];
    header.extend(rs.iter().map(|r| format!("s_limit_{r}")));
    let mut rows = Vec::new();
    for &n in ns {
        for (bound, name) in [(Bound::New, "new"), (Bound::Prior, "prior")] {
            let mut row = vec![n.to_string(), name.to_string()];
            for &r in rs {
                row.push(match vulnerable_stretch(n, r, bound) {
                    Ok(s) => format!("{s:.6}"),
                    Err(Error::Range(_)) => String::new(),
                    Err(e) => return Err(e),
                });
            }
            rows.push(row);
        }
    }
    Ok((header, rows))
}

/// Dispatches on `cfg.kind` (`Estimate` uses `n` and `r` only).
pub fn run(cfg: &ExperimentConfig) -> Result<RunRecord> {
    match cfg.kind {
        ExperimentKind::AvgGuesses => run_avg_guesses(cfg),
        ExperimentKind::KeyRecovery => run_key_recovery(cfg),
        ExperimentKind::SuccessSweep => run_success_sweep(cfg),
        ExperimentKind::StretchSearch => run_stretch_search(cfg),
        ExperimentKind::Estimate => {
            let mut aggregates = Vec::new();
            for (bound, name) in [(Bound::New, "new"), (Bound::Prior, "prior")] {
                let s = vulnerable_stretch(cfg.n, cfg.r, bound)?;
                aggregates.push(AggregateRow {
                    n: cfg.n,
                    s,
                    l: Some(expected_guesses(cfg.n, s) as usize),
                    trials: 0,
                    mean_guesses: None,
                    var_guesses: None,
                    mean_solves: None,
                    mean_nodes: None,
                    mean_iterations: None,
                    p: 1.0,
                    p_direct: None,
                    complexity_log2: None,
                    mode: Some(name.into()),
                });
            }
            Ok(RunRecord {
                config: cfg.clone(),
                trials: Vec::new(),
                aggregates,
                s_limit: None,
            })
        }
    }
}
