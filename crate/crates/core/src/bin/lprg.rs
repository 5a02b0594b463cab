use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use lprg::bp::{decode, guess_and_decode_traced, guess_phase, GadParams, TraceRow};
use lprg::error::{Error, Result};
use lprg::gd::{gd_attack, initial_state, AttackRecord, GdLimits};
use lprg::harness::{self, estimate_table, ExperimentConfig, ExperimentKind, Format};
use lprg::prg::{bits_to_string, sample_instance, Instance, Predicate};
use lprg::rng;

/// Seed-recovery attacks on Goldreich-style local PRGs.
#[derive(Parser)]
#[command(name = "lprg", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Output file (stdout if absent).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample an instance and write it as JSON.
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        s: f64,
        #[arg(long, default_value = "p5")]
        pred: Predicate,
        /// Leave the planted secret out of the file.
        #[arg(long)]
        public: bool,
    },
    /// Guess-and-determine key recovery.
    AttackGd {
        instance: PathBuf,
        #[arg(long, default_value_t = GdLimits::default().max_nodes)]
        max_nodes: u64,
    },
    /// Guess-and-decode key recovery.
    AttackDecode {
        instance: PathBuf,
        /// Number of guesses.
        #[arg(long, default_value_t = 0)]
        l: usize,
        /// Guessing paths to try.
        #[arg(long, default_value_t = 1)]
        paths: u64,
        #[arg(long, default_value_t = 40)]
        iter_max: usize,
        /// Guess the planted values (success probability of the right path).
        #[arg(long)]
        oracle: bool,
        #[arg(long)]
        no_collisions: bool,
        /// Per-iteration CSV of the last decode.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Closed-form vulnerable-stretch limits.
    Estimate {
        /// Seed lengths: `a..b` (doubling) or a comma list.
        #[arg(long, default_value = "512..4096")]
        n: String,
        /// Security levels, comma separated.
        #[arg(long, default_value = "80,128")]
        r: String,
    },
    /// Time belief-propagation iterations.
    Bench {
        #[arg(long, default_value_t = 512)]
        n: usize,
        #[arg(long, default_value_t = 1.12)]
        s: f64,
        #[arg(long, default_value_t = 30)]
        l: usize,
        #[arg(long, default_value_t = 40)]
        iter_max: usize,
        #[arg(long, default_value_t = 10)]
        trials: usize,
    },
    /// Batch experiment from a JSON config and/or flags.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    kind: Option<ExperimentKind>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    s: Option<f64>,
    #[arg(long)]
    s_max: Option<f64>,
    #[arg(long)]
    s_min: Option<f64>,
    #[arg(long)]
    s_step: Option<f64>,
    #[arg(long)]
    pred: Option<Predicate>,
    #[arg(long)]
    l_min: Option<usize>,
    #[arg(long)]
    l_max: Option<usize>,
    #[arg(long)]
    l_step: Option<usize>,
    #[arg(long)]
    iter_max: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    max_nodes: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Argument(_) | Error::Range(_) | Error::Format(_) => 2,
                Error::Exhausted { .. } | Error::NothingToGuess => 3,
                _ => 1,
            })
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn render<T: Serialize>(format: Format, rows: &[T]) -> Result<String> {
    Ok(match format {
        Format::Json if rows.len() == 1 => serde_json::to_string_pretty(&rows[0])? + "\n",
        Format::Json => serde_json::to_string_pretty(rows)? + "\n",
        Format::Csv => {
            let mut buf = Vec::new();
            harness::write_csv(&mut buf, rows)?;
            String::from_utf8(buf).expect("csv is utf-8")
        }
    })
}

fn load(path: &Path) -> Result<Instance> {
    Instance::from_json(&fs::read_to_string(path)?)
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|x| x.trim().parse().map_err(|_| Error::Argument(format!("bad {what} {x:?}"))))
        .collect()
}

/// `a..b` doubles from `a` up to `b`; otherwise a comma list.
fn parse_sizes(s: &str) -> Result<Vec<usize>> {
    let Some((a, b)) = s.split_once("..") else {
        return parse_list(s, "seed length");
    };
    let (a, b): (usize, usize) = match (a.trim().parse(), b.trim().parse()) {
        (Ok(a), Ok(b)) if a >= 2 && a <= b => (a, b),
        _ => return Err(Error::Argument(format!("bad range {s:?}"))),
    };
    Ok(std::iter::successors(Some(a), |&x| Some(x * 2)).take_while(|&x| x <= b).collect())
}

#[derive(Serialize)]
struct DecodeRecord {
    outcome: &'static str,
    secret: Option<String>,
    iterations: usize,
    paths_tried: u64,
    guesses: usize,
    wall_ms: f64,
}

#[derive(Serialize)]
struct BenchRow {
    n: usize,
    s: f64,
    l: usize,
    trials: usize,
    iterations: usize,
    ms_per_iteration: f64,
}

fn run(cli: &Cli) -> Result<ExitCode> {
    let out = cli.out.as_deref();
    match &cli.cmd {
        Cmd::Gen { n, s, pred, public } => {
            let inst = sample_instance(*n, *s, *pred, cli.seed)?;
            let inst = if *public { inst.public() } else { inst };
            emit(out, &(inst.to_json()? + "\n"))?;
        }
        Cmd::AttackGd { instance, max_nodes } => {
            let inst = load(instance)?;
            let limits = GdLimits {
                max_nodes: *max_nodes,
                ..GdLimits::default()
            };
            let o = gd_attack(&inst, limits)?;
            let rec = AttackRecord::new(&o, inst.rng_seed);
            emit(out, &render(cli.format, &[rec])?)?;
        }
        Cmd::AttackDecode {
            instance,
            l,
            paths,
            iter_max,
            oracle,
            no_collisions,
            trace,
        } => {
            let inst = load(instance)?;
            let params = GadParams {
                guesses: *l,
                paths: *paths,
                iter_max: *iter_max,
                oracle: *oracle,
                seed: cli.seed,
                collisions: !no_collisions,
            };
            let mut rows: Vec<TraceRow> = Vec::new();
            let o = guess_and_decode_traced(&inst, params, trace.as_ref().map(|_| &mut rows))?;
            if let Some(p) = trace {
                // Keep the header even when no path reached the decoder.
                let text = match rows.is_empty() {
                    true => "iter,mean_abs_posterior,flipped_bits,satisfied_checks\n".to_string(),
                    false => render(Format::Csv, &rows)?,
                };
                fs::write(p, text)?;
            }
            let rec = DecodeRecord {
                outcome: o.result.label(),
                secret: o.result.secret().map(bits_to_string),
                iterations: o.result.iterations(),
                paths_tried: o.stats.paths_tried,
                guesses: o.stats.guesses,
                wall_ms: o.stats.wall_ms,
            };
            emit(out, &render(cli.format, &[rec])?)?;
            if !o.result.is_success() {
                return Ok(ExitCode::from(3));
            }
        }
        Cmd::Estimate { n, r } => {
            let ns = parse_sizes(n)?;
            let rs: Vec<f64> = parse_list(r, "security level")?;
            let (header, rows) = estimate_table(&ns, &rs)?;
            let text = match cli.format {
                Format::Csv => {
                    let mut w = csv::Writer::from_writer(Vec::new());
                    w.write_record(&header)?;
                    for row in &rows {
                        w.write_record(row)?;
                    }
                    String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?).expect("csv is utf-8")
                }
                Format::Json => {
                    let objs: Vec<serde_json::Map<String, serde_json::Value>> = rows
                        .iter()
                        .map(|row| {
                            header
                                .iter()
                                .zip(row)
                                .map(|(h, v)| {
                                    let v = match v.parse::<f64>() {
                                        Ok(x) => serde_json::json!(x),
                                        Err(_) if v.is_empty() => serde_json::Value::Null,
                                        Err(_) => serde_json::json!(v),
                                    };
                                    (h.clone(), v)
                                })
                                .collect()
                        })
                        .collect();
                    serde_json::to_string_pretty(&objs)? + "\n"
                }
            };
            emit(out, &text)?;
        }
        Cmd::Bench { n, s, l, iter_max, trials } => {
            let mut iterations = 0;
            let mut ms = 0.0;
            for i in 0..*trials {
                let inst = sample_instance(*n, *s, Predicate::P5, rng::trial_seed(cli.seed, i as u64))?;
                let secret = inst.planted_secret.clone().expect("sampled instances carry the secret");
                let (root, _) = initial_state(&inst)?;
                let (st, _) = guess_phase(&root, *l, |_, v, _| secret[v as usize]);
                let t = Instant::now();
                let r = decode(&st, &inst, *iter_max);
                ms += t.elapsed().as_secs_f64() * 1e3;
                iterations += r.iterations();
            }
            let row = BenchRow {
                n: *n,
                s: *s,
                l: *l,
                trials: *trials,
                iterations,
                ms_per_iteration: if iterations == 0 { 0.0 } else { ms / iterations as f64 },
            };
            emit(out, &render(cli.format, &[row])?)?;
        }
        Cmd::Experiment(a) => {
            let mut cfg = match &a.config {
                Some(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
                None => ExperimentConfig::default(),
            };
            macro_rules! set {
                ($($flag:ident => $field:ident),*) => {
                    $(if let Some(v) = a.$flag.clone() { cfg.$field = v; })*
                };
            }
            set!(kind => kind, n => n, s => s, s_max => s_max, s_min => s_min, s_step => s_step,
                pred => predicate, l_min => l_min, l_max => l_max, l_step => l_step,
                iter_max => iter_max, trials => trials, r => r, margin => margin, max_nodes => max_nodes);
            if a.l_max.is_none() && a.l_min.is_some() && cfg.l_max < cfg.l_min {
                cfg.l_max = cfg.l_min;
            }
            cfg.seed = cli.seed;
            cfg.workers = cli.workers;
            if out.is_some() {
                cfg.out = cli.out.clone();
            }
            let rec = harness::run(&cfg)?;
            match cfg.out.as_deref() {
                Some(p) => rec.write(p, cli.format)?,
                None => match cli.format {
                    Format::Json => emit(None, &(serde_json::to_string_pretty(&rec)? + "\n"))?,
                    Format::Csv => emit(None, &render(Format::Csv, &rec.aggregates)?)?,
                },
            }
            if let Some(s) = rec.s_limit {
                eprintln!("s_limit = {s}");
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
