//! Property checks shared by the property tests and the acceptance run.
//! Each returns `Err` with a description of the first counterexample.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lprg::bp::{
    boxplus, check_update, hard_decision, iterate, variable_update, BlockKind, CheckShape, Messages, Scratch,
    TannerGraph, LLR_MAX,
};
use lprg::eqsys::{Block, Equation, Provenance, SystemState, Var, VarList};
use lprg::gd::{initial_state, select_variable};
use lprg::prg::{sample_instance, Instance, Predicate};

pub type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn p0(l: f64) -> f64 {
    1.0 / (1.0 + (-l).exp())
}

/// Random factor tree over `n` variables: every check adds at least one new
/// variable and touches exactly one old one. Right-hand sides come from `x`.
pub fn random_tree(rng: &mut ChaCha8Rng, n: usize, x: &[bool], linear_only: bool) -> Vec<Equation> {
    let mut eqs = Vec::new();
    let mut next = 1usize;
    while next < n {
        let left = n - next;
        // (linear vars, block vars, thr d)
        let shapes: &[(usize, usize, Option<u32>)] = if linear_only {
            &[(2, 0, None), (3, 0, None), (4, 0, None)]
        } else {
            // Linear, ClassIII quadratic, AND-only, P5, THR.
            &[(2, 0, None), (3, 0, None), (1, 2, None), (0, 2, None), (3, 2, None), (1, 3, Some(2))]
        };
        let fitting: Vec<_> = shapes.iter().filter(|s| s.0 + s.1 - 1 <= left).collect();
        let &&(k, q, thr) = fitting.choose(rng).unwrap();
        let old = rng.gen_range(0..next) as Var;
        let mut vars: Vec<Var> = vec![old];
        vars.extend((next..next + k + q - 1).map(|v| v as Var));
        next += k + q - 1;
        vars.shuffle(rng);
        let (lin, nl) = vars.split_at(k);
        let block = (q > 0).then(|| {
            let v: VarList = nl.iter().copied().collect();
            match thr {
                Some(d) => Block::Thr { vars: v, d },
                None => Block::And(v),
            }
        });
        let probe = Equation::new(lin.iter().copied(), block.clone(), false);
        let rhs = !probe.is_satisfied_by(x);
        eqs.push(Equation::new(lin.iter().copied(), block, rhs));
    }
    eqs
}

/// Exact `log P(x_v = 0) / P(x_v = 1)` per variable under independent priors.
pub fn brute_force_llr(n: usize, eqs: &[Equation], prior: &[f64]) -> Vec<f64> {
    let mut w0 = vec![0.0; n];
    let mut w1 = vec![0.0; n];
    let mut x = vec![false; n];
    for bits in 0u32..1 << n {
        for (i, b) in x.iter_mut().enumerate() {
            *b = bits >> i & 1 == 1;
        }
        if !eqs.iter().all(|e| e.is_satisfied_by(&x)) {
            continue;
        }
        let w: f64 = (0..n).map(|v| if x[v] { 1.0 - p0(prior[v]) } else { p0(prior[v]) }).product();
        for v in 0..n {
            if x[v] {
                w1[v] += w;
            } else {
                w0[v] += w;
            }
        }
    }
    (0..n).map(|v| (w0[v].ln() - w1[v].ln()).clamp(-LLR_MAX, LLR_MAX)).collect()
}

/// Posteriors per variable after enough flooding iterations for a tree.
pub fn run_bp(n: usize, eqs: &[Equation], prior: &[f64]) -> Vec<f64> {
    let g = TannerGraph::from_equations(n, eqs);
    let node_prior: Vec<f64> = g.vars.iter().map(|&v| prior[v as usize]).collect();
    let mut msg = Messages::with_prior(&g, node_prior);
    let mut scratch = Scratch::default();
    for _ in 0..2 * n + 2 {
        iterate(&g, &mut msg, &mut scratch);
    }
    let mut post = vec![f64::NAN; n];
    for (node, &v) in g.vars.iter().enumerate() {
        post[v as usize] = msg.posterior[node];
    }
    post
}

/// BP on random trees (n <= 12) against brute-force marginals.
pub fn tree_exactness(linear_only: bool, seed: u64, trees: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trees {
        let n = rng.gen_range(2..=12);
        let x: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
        let eqs = random_tree(&mut rng, n, &x, linear_only);
        let prior: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let want = brute_force_llr(n, &eqs, &prior);
        let got = run_bp(n, &eqs, &prior);
        for v in 0..n {
            if want[v].abs() < 25.0 {
                ensure!((got[v] - want[v]).abs() < 1e-9, "x{v}: bp {} exact {} in {eqs:?}", got[v], want[v]);
            } else {
                // Forced bits: the exact marginal is infinite and messages
                // saturate, so only the direction is comparable.
                ensure!(got[v] * want[v].signum() > 20.0, "x{v}: bp {} exact {} in {eqs:?}", got[v], want[v]);
            }
        }
    }
    Ok(())
}

/// Random LLRs with a good share of saturated, zero and tiny values.
pub fn llrs(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len)
        .map(|_| match rng.gen_range(0..10) {
            0 => LLR_MAX,
            1 => -LLR_MAX,
            2 => 0.0,
            3 => rng.gen_range(-1e-12..1e-12),
            _ => rng.gen_range(-LLR_MAX..LLR_MAX),
        })
        .collect()
}

pub fn update(shape: CheckShape, lin: &[f64], blk: &[f64], scratch: &mut Scratch) -> (Vec<f64>, Vec<f64>) {
    let mut lo = vec![0.0; lin.len()];
    let mut bo = vec![0.0; blk.len()];
    check_update(shape, lin, blk, &mut lo, &mut bo, scratch);
    (lo, bo)
}

/// THR with `d = q` against AND, every edge, `trials` random checks.
pub fn thr_matches_and(seed: u64, trials: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scratch = Scratch::default();
    for _ in 0..trials {
        let q = rng.gen_range(1..=6);
        let k = rng.gen_range(0..=4);
        let rhs = rng.gen();
        let blk: Vec<f64> = (0..q).map(|_| rng.gen_range(-8.0..8.0)).collect();
        let lin: Vec<f64> = (0..k).map(|_| rng.gen_range(-8.0..8.0)).collect();
        let and = update(CheckShape { block: Some(BlockKind::And), rhs }, &lin, &blk, &mut scratch);
        let thr = update(CheckShape { block: Some(BlockKind::Thr { d: q }), rhs }, &lin, &blk, &mut scratch);
        for (a, t) in and.0.iter().chain(&and.1).zip(thr.0.iter().chain(&thr.1)) {
            ensure!((a - t).abs() < 1e-12, "{a} vs {t} (lin {lin:?}, blk {blk:?}, rhs {rhs})");
        }
    }
    Ok(())
}

/// `updates` random check and variable updates, all outputs finite and
/// within the clamp.
pub fn messages_bounded(seed: u64, updates: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scratch = Scratch::default();
    let ok = |x: f64| x.is_finite() && x.abs() <= LLR_MAX;
    let mut done = 0;
    while done < updates {
        let k = rng.gen_range(0..=4);
        let q = if k == 0 { rng.gen_range(2..=5) } else { rng.gen_range(0..=5) };
        let block = match q {
            0 | 1 => None,
            q if rng.gen() => Some(BlockKind::Thr { d: rng.gen_range(1..=q) }),
            _ => Some(BlockKind::And),
        };
        let q = if block.is_none() { 0 } else { q };
        let lin = llrs(&mut rng, k);
        let blk = llrs(&mut rng, q);
        let (lo, bo) = update(CheckShape { block, rhs: rng.gen() }, &lin, &blk, &mut scratch);
        ensure!(lo.iter().chain(&bo).all(|&x| ok(x)), "{lin:?} {blk:?} {block:?} -> {lo:?} {bo:?}");
        let deg = rng.gen_range(0..=8);
        let incoming = llrs(&mut rng, deg);
        let mut out = vec![0.0; incoming.len()];
        let post = variable_update(&incoming, llrs(&mut rng, 1)[0], &mut out);
        ensure!(ok(post) && out.iter().all(|&x| ok(x)), "variable update {incoming:?} -> {post} {out:?}");
        done += 2;
    }
    Ok(())
}

/// First iteration on `x0 + x1 x2 = 0` and `x3 x4 = 0` with no priors.
pub fn bias_values() -> Check {
    let eqs = [
        Equation::new([0], Some(Block::And([1, 2].into_iter().collect())), false),
        Equation::new([], Some(Block::And([3, 4].into_iter().collect())), false),
    ];
    let g = TannerGraph::from_equations(5, &eqs);
    let mut msg = Messages::new(&g);
    iterate(&g, &mut msg, &mut Scratch::default());
    let lin_edge = g.check_edges(0).start;
    ensure!(g.vars[g.edge_node(lin_edge)] == 0, "first edge of the quadratic check is not x0");
    ensure!((msg.c2v[lin_edge] - 3f64.ln()).abs() < 1e-12, "linear edge sent {}", msg.c2v[lin_edge]);
    for e in g.check_edges(1) {
        ensure!((msg.c2v[e] - 2f64.ln()).abs() < 1e-12, "AND-only edge sent {}", msg.c2v[e]);
    }
    Ok(())
}

pub fn tie_rule() -> Check {
    let got = hard_decision(&[0.0, -0.0, 1e-300, -1e-300]);
    ensure!(got == [false, false, false, true], "{got:?}");
    Ok(())
}

/// Identity, absorption and commutativity on `samples` random pairs.
pub fn boxplus_laws(seed: u64, samples: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let a = rng.gen_range(-LLR_MAX..LLR_MAX);
        let b = rng.gen_range(-LLR_MAX..LLR_MAX);
        ensure!(boxplus(a, b) == boxplus(b, a), "boxplus({a}, {b}) not symmetric");
        ensure!(boxplus(0.0, a).abs() < 1e-12, "boxplus(0, {a}) = {}", boxplus(0.0, a));
        let c = a / 3.0;
        ensure!((boxplus(LLR_MAX, c) - c).abs() < 1e-8, "boxplus(max, {c}) = {}", boxplus(LLR_MAX, c));
    }
    Ok(())
}

/// Greedy guessing with the planted values until `n` linear equations are
/// available, checking the counters after each step.
pub fn truth_path(inst: &Instance) -> Result<SystemState, String> {
    let secret = inst.planted_secret.as_ref().unwrap();
    let (mut st, _) = initial_state(inst).map_err(|e| e.to_string())?;
    while st.linear_budget() < inst.n && !st.is_conflict() {
        let Ok(v) = select_variable(&st) else { break };
        st.reduce(v, secret[v as usize], Provenance::Guessed);
        st.check_invariants()?;
    }
    Ok(st)
}

/// Truth-path reduction over `count` random small instances never
/// conflicts and only derives planted values.
pub fn truth_paths_consistent(seed: u64, count: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let preds = [
        Predicate::P5,
        Predicate::xor_and(2, 3).unwrap(),
        Predicate::xor_thr(3, 2, 3).unwrap(),
        Predicate::xor_thr(2, 1, 2).unwrap(),
    ];
    for i in 0..count {
        let pred = preds[i % preds.len()];
        let n = rng.gen_range(16..=96);
        let s = rng.gen_range(1.0..1.5);
        let inst = sample_instance(n, s, pred, rng.gen()).unwrap();
        let st = truth_path(&inst)?;
        ensure!(!st.is_conflict(), "instance {i}: conflict ({pred}, n = {n}, s = {s})");
        let secret = inst.planted_secret.as_ref().unwrap();
        for v in 0..n as Var {
            if let Some(b) = st.value(v) {
                ensure!(b == secret[v as usize], "instance {i}: x{v} derived wrong");
            }
        }
        ensure!(st.equations().all(|e| e.is_satisfied_by(secret)), "instance {i}: live equation broken");
    }
    Ok(())
}
