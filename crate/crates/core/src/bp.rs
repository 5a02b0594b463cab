//! Guess-and-decode: belief propagation on the reduced quadratic system.
//!
//! After a guessing phase the remaining equations become check nodes of a
//! Tanner graph. Linear edges ("type 1") use the usual box-plus rule with the
//! non-linear block folded in as one extra XOR input; block edges ("type 2")
//! use the exact extrinsic marginal of the block variable given the linear
//! part and the other block variables. Checks with right-hand side 1 swap the
//! roles of 0 and 1 for the linear part. There is no a-priori information:
//! the first useful messages come from the bias of short quadratic checks.
//!
//! LLRs are `log P(0)/P(1)` and are clamped to `[-LLR_MAX, LLR_MAX]` after
//! every update. The schedule is flooding: all checks, then all variables.

use std::time::Instant;

use rand::Rng;
use serde::Serialize;

use crate::eqsys::{classify, Block, Equation, EquationClass, Provenance, SystemState, Var};
use crate::error::{arg_err, Result};
use crate::gd::{initial_state, preferred_first_value, select_with, SelectionRule};
use crate::prg::{verify_unchecked, Instance};
use crate::rng;

pub const LLR_MAX: f64 = 30.0;

#[inline]
pub fn clamp(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(-LLR_MAX, LLR_MAX)
    }
}

/// `log(1 + e^x)` without overflow.
#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `log P(1)` for a bit with LLR `l`.
#[inline]
fn ln_p1(l: f64) -> f64 {
    -softplus(l)
}

#[inline]
fn p0(l: f64) -> f64 {
    1.0 / (1.0 + (-l).exp())
}

#[inline]
fn p1(l: f64) -> f64 {
    1.0 / (1.0 + l.exp())
}

/// `log(p0/p1)` with zero probabilities saturating.
#[inline]
fn llr_from(p0: f64, p1: f64) -> f64 {
    match (p0 > 0.0, p1 > 0.0) {
        (true, true) => clamp(p0.ln() - p1.ln()),
        (true, false) => LLR_MAX,
        (false, true) => -LLR_MAX,
        (false, false) => 0.0,
    }
}

/// LLR of the XOR of two independent bits,
/// `log((1 + e^{a+b}) / (e^a + e^b))`.
#[inline]
pub fn boxplus(a: f64, b: f64) -> f64 {
    let s = a + b;
    let num = s.max(0.0) + (-s.abs()).exp().ln_1p();
    let den = a.max(b) + (-(a - b).abs()).exp().ln_1p();
    clamp(num - den)
}

/// Equivalent LLR of the product of independent bits,
/// `log(prod(1 + e^{L_i}) - 1)`.
pub fn equivalent_llr_and(incoming: &[f64]) -> f64 {
    let s: f64 = incoming.iter().map(|&l| softplus(l)).sum();
    if s <= 0.0 {
        return -LLR_MAX;
    }
    // log(e^s - 1) = s + log(1 - e^{-s})
    clamp(s + (-(-s).exp_m1()).ln())
}

/// Distribution of the number of ones among independent bits.
fn count_distribution(incoming: impl Iterator<Item = f64>, out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    for l in incoming {
        let (q0, q1) = (p0(l), p1(l));
        out.push(0.0);
        for c in (0..out.len()).rev() {
            let carry = if c > 0 { out[c - 1] * q1 } else { 0.0 };
            out[c] = out[c] * q0 + carry;
        }
    }
}

/// `(P(count < d), P(count >= d))`, each summed from its own side.
fn split_at(dist: &[f64], d: usize) -> (f64, f64) {
    let d = d.min(dist.len());
    (dist[..d].iter().sum(), dist[d..].iter().sum())
}

/// Equivalent LLR of a "at least `d` ones" block.
pub fn equivalent_llr_thr(incoming: &[f64], d: usize) -> f64 {
    let mut dist = Vec::with_capacity(incoming.len() + 1);
    count_distribution(incoming.iter().copied(), &mut dist);
    let (below, above) = split_at(&dist, d);
    llr_from(below, above)
}

/// Non-linear block of a check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    And,
    Thr { d: usize },
}

/// Shape of a check node: the linear inputs come first, then the block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckShape {
    pub block: Option<BlockKind>,
    pub rhs: bool,
}

/// Box-plus fold of all inputs but one, for every position (prefix/suffix).
fn leave_one_out_boxplus(inputs: &[f64], extra: Option<f64>, out: &mut [f64]) {
    let k = inputs.len();
    if k == 0 {
        return;
    }
    // Suffix folds are written into `out`, then combined with a running prefix.
    let mut acc: Option<f64> = extra;
    for i in (0..k).rev() {
        out[i] = acc.unwrap_or(LLR_MAX);
        acc = Some(match acc {
            Some(a) => boxplus(a, inputs[i]),
            None => inputs[i],
        });
    }
    let mut prefix: Option<f64> = None;
    for i in 0..k {
        let suffix = out[i];
        let has_suffix = i + 1 < k || extra.is_some();
        out[i] = match (prefix, has_suffix) {
            (Some(p), true) => boxplus(p, suffix),
            (Some(p), false) => p,
            (None, true) => suffix,
            // Single linear input and nothing else: the check alone says
            // nothing useful about it beyond the rhs.
            (None, false) => LLR_MAX,
        };
        prefix = Some(match prefix {
            Some(p) => boxplus(p, inputs[i]),
            None => inputs[i],
        });
    }
}

/// Reusable buffers for check updates.
#[derive(Debug, Default)]
pub struct Scratch {
    dist: Vec<f64>,
}

/// Computes all outgoing check-to-variable messages of one check.
///
/// `lin_in`/`blk_in` are the incoming variable-to-check messages of the
/// linear and block edges; outputs are written to `lin_out`/`blk_out`.
pub fn check_update(
    shape: CheckShape,
    lin_in: &[f64],
    blk_in: &[f64],
    lin_out: &mut [f64],
    blk_out: &mut [f64],
    scratch: &mut Scratch,
) {
    let sign = if shape.rhs { -1.0 } else { 1.0 };

    // Type 1 edges.
    let block_llr = shape.block.map(|b| match b {
        BlockKind::And => equivalent_llr_and(blk_in),
        BlockKind::Thr { d } => equivalent_llr_thr(blk_in, d),
    });
    leave_one_out_boxplus(lin_in, block_llr, lin_out);
    for o in lin_out.iter_mut() {
        *o = clamp(sign * *o);
    }

    let Some(kind) = shape.block else { return };

    // Probabilities that the linear part equals rhs (a) or its complement (b).
    let (a, b) = if lin_in.is_empty() {
        // Empty XOR is the constant 0.
        if shape.rhs {
            (0.0, 1.0)
        } else {
            (1.0, 0.0)
        }
    } else {
        let l = lin_in[1..].iter().fold(lin_in[0], |acc, &x| boxplus(acc, x));
        let l = sign * l;
        (p0(l), p1(l))
    };

    // Type 2 edges.
    match kind {
        BlockKind::And => {
            let total: f64 = blk_in.iter().map(|&l| ln_p1(l)).sum();
            for (j, o) in blk_out.iter_mut().enumerate() {
                let ln_partner1 = total - ln_p1(blk_in[j]);
                let partner1 = ln_partner1.exp();
                let partner0 = -ln_partner1.exp_m1();
                // x_j = 0: block is 0, linear part must equal rhs.
                // x_j = 1: block equals the partner product.
                *o = llr_from(a, a * partner0 + b * partner1);
            }
        }
        BlockKind::Thr { d } => {
            for j in 0..blk_in.len() {
                let partners = blk_in.iter().enumerate().filter(|&(i, _)| i != j).map(|(_, &l)| l);
                count_distribution(partners, &mut scratch.dist);
                // V: partners alone reach d; W: partners reach d - 1.
                let (v_bar, v) = split_at(&scratch.dist, d);
                let (w_bar, w) = split_at(&scratch.dist, d.saturating_sub(1));
                let num0 = b * v + a * v_bar;
                let num1 = b * w + a * w_bar;
                blk_out[j] = llr_from(num0, num1);
            }
        }
    }
}

/// Variable node update: extrinsic sums and the posterior.
pub fn variable_update(incoming: &[f64], a_priori: f64, out: &mut [f64]) -> f64 {
    let total: f64 = a_priori + incoming.iter().sum::<f64>();
    for (o, &m) in out.iter_mut().zip(incoming) {
        *o = clamp(total - m);
    }
    clamp(total)
}

/// Bit decision: 1 iff the posterior is negative.
pub fn hard_decision(posteriors: &[f64]) -> Vec<bool> {
    posteriors.iter().map(|&l| l < 0.0).collect()
}

/// Edge type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    Linear,
    Nonlinear,
}

#[derive(Debug, Clone)]
struct CheckNode {
    shape: CheckShape,
    /// Edge range; linear edges first, `n_lin` of them.
    start: usize,
    n_lin: usize,
    len: usize,
}

/// Tanner graph over the unassigned variables of a reduced system.
#[derive(Debug, Clone)]
pub struct TannerGraph {
    /// Instance variable index of each variable node.
    pub vars: Vec<Var>,
    checks: Vec<CheckNode>,
    /// Variable node of each edge.
    edge_var: Vec<u32>,
    /// CSR adjacency variable node -> edges.
    var_start: Vec<usize>,
    var_edges: Vec<u32>,
}

impl TannerGraph {
    pub fn from_state(state: &SystemState) -> Self {
        Self::from_equations(state.n(), state.equations())
    }

    /// Graph over the variables of `eqs`, taken as they are.
    pub fn from_equations<'a>(n: usize, eqs: impl IntoIterator<Item = &'a Equation>) -> Self {
        let mut node_of = vec![u32::MAX; n];
        let mut vars = Vec::new();
        let mut checks = Vec::new();
        let mut edge_var = Vec::new();
        for e in eqs {
            let start = edge_var.len();
            for v in e.vars() {
                let slot = &mut node_of[v as usize];
                if *slot == u32::MAX {
                    *slot = vars.len() as u32;
                    vars.push(v);
                }
                edge_var.push(*slot);
            }
            let block = e.block().map(|b| match b {
                Block::And(_) => BlockKind::And,
                Block::Thr { d, .. } => BlockKind::Thr { d: *d as usize },
            });
            checks.push(CheckNode {
                shape: CheckShape { block, rhs: e.rhs },
                start,
                n_lin: e.linear().len(),
                len: edge_var.len() - start,
            });
        }
        let mut deg = vec![0usize; vars.len() + 1];
        for &v in &edge_var {
            deg[v as usize + 1] += 1;
        }
        for i in 1..deg.len() {
            deg[i] += deg[i - 1];
        }
        let var_start = deg.clone();
        let mut fill = deg;
        let mut var_edges = vec![0u32; edge_var.len()];
        for (e, &v) in edge_var.iter().enumerate() {
            var_edges[fill[v as usize]] = e as u32;
            fill[v as usize] += 1;
        }
        TannerGraph {
            vars,
            checks,
            edge_var,
            var_start,
            var_edges,
        }
    }

    pub fn n_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn n_checks(&self) -> usize {
        self.checks.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edge_var.len()
    }

    /// Edges of check `c`, linear ones first.
    pub fn check_edges(&self, c: usize) -> std::ops::Range<usize> {
        self.checks[c].start..self.checks[c].start + self.checks[c].len
    }

    /// Variable node at the end of `edge`.
    pub fn edge_node(&self, edge: usize) -> usize {
        self.edge_var[edge] as usize
    }

    pub fn edge_kind(&self, edge: usize) -> EdgeKind {
        let c = self.checks.partition_point(|c| c.start + c.len <= edge);
        if edge - self.checks[c].start < self.checks[c].n_lin {
            EdgeKind::Linear
        } else {
            EdgeKind::Nonlinear
        }
    }

    fn var_edge_range(&self, v: usize) -> std::ops::Range<usize> {
        self.var_start[v]..self.var_start[v + 1]
    }
}

/// Message state of a running decoder.
#[derive(Debug, Clone)]
pub struct Messages {
    pub v2c: Vec<f64>,
    pub c2v: Vec<f64>,
    pub posterior: Vec<f64>,
    /// A-priori LLR per variable node; all zero in the attack.
    pub prior: Vec<f64>,
}

impl Messages {
    pub fn new(g: &TannerGraph) -> Self {
        Self::with_prior(g, vec![0.0; g.n_vars()])
    }

    pub fn with_prior(g: &TannerGraph, prior: Vec<f64>) -> Self {
        assert_eq!(prior.len(), g.n_vars());
        Messages {
            v2c: g.edge_var.iter().map(|&v| prior[v as usize]).collect(),
            c2v: vec![0.0; g.n_edges()],
            posterior: prior.clone(),
            prior,
        }
    }
}

/// One flooding iteration: every check, then every variable.
pub fn iterate(g: &TannerGraph, msg: &mut Messages, scratch: &mut Scratch) {
    for c in &g.checks {
        let range = c.start..c.start + c.len;
        let (lin_in, blk_in) = msg.v2c[range.clone()].split_at(c.n_lin);
        let (lin_out, blk_out) = msg.c2v[range].split_at_mut(c.n_lin);
        check_update(c.shape, lin_in, blk_in, lin_out, blk_out, scratch);
    }
    let mut incoming = Vec::new();
    let mut out = Vec::new();
    for v in 0..g.n_vars() {
        let r = g.var_edge_range(v);
        incoming.clear();
        incoming.extend(g.var_edges[r.clone()].iter().map(|&e| msg.c2v[e as usize]));
        out.resize(incoming.len(), 0.0);
        msg.posterior[v] = variable_update(&incoming, msg.prior[v], &mut out);
        for (&e, &o) in g.var_edges[r].iter().zip(&out) {
            msg.v2c[e as usize] = o;
        }
    }
}

/// How a decode ended.
#[derive(Debug, Clone, PartialEq)]
pub enum DecodeResult {
    Converged { secret: Vec<bool>, iterations: usize },
    DirectRecovery { secret: Vec<bool> },
    Failed { iterations: usize },
}

impl DecodeResult {
    pub fn secret(&self) -> Option<&[bool]> {
        match self {
            DecodeResult::Converged { secret, .. } | DecodeResult::DirectRecovery { secret } => Some(secret),
            DecodeResult::Failed { .. } => None,
        }
    }

    pub fn iterations(&self) -> usize {
        match self {
            DecodeResult::Converged { iterations, .. } | DecodeResult::Failed { iterations } => *iterations,
            DecodeResult::DirectRecovery { .. } => 0,
        }
    }

    pub fn is_success(&self) -> bool {
        self.secret().is_some()
    }

    pub fn label(&self) -> &'static str {
        match self {
            DecodeResult::Converged { .. } => "converged",
            DecodeResult::DirectRecovery { .. } => "direct",
            DecodeResult::Failed { .. } => "failed",
        }
    }
}

/// One row of a decode trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub iter: usize,
    pub mean_abs_posterior: f64,
    pub flipped_bits: usize,
    pub satisfied_checks: usize,
}

/// Candidate without decoding: the assignment, with every remaining variable
/// set to the rhs of a class III quadratic equation it is the linear term of.
/// `None` if some variable is not covered that way.
pub fn direct_candidate(state: &SystemState) -> Option<Vec<bool>> {
    let mut x = state.candidate_with(|_| false);
    for v in state.unassigned() {
        let e = state
            .equations_with(v)
            .find(|e| !e.is_linear() && classify(e) == EquationClass::ClassIII && e.linear() == [v])?;
        x[v as usize] = e.rhs;
    }
    Some(x)
}

/// Decodes the reduced system `state` of `inst`.
pub fn decode(state: &SystemState, inst: &Instance, iter_max: usize) -> DecodeResult {
    decode_traced(state, inst, iter_max, None)
}

/// [`decode`] that optionally records a per-iteration trace.
pub fn decode_traced(state: &SystemState, inst: &Instance, iter_max: usize, mut trace: Option<&mut Vec<TraceRow>>) -> DecodeResult {
    if state.is_conflict() {
        return DecodeResult::Failed { iterations: 0 };
    }
    if let Some(x) = direct_candidate(state) {
        if verify_unchecked(inst, &x) {
            return DecodeResult::DirectRecovery { secret: x };
        }
    }

    let g = TannerGraph::from_state(state);
    let mut msg = Messages::new(&g);
    let mut scratch = Scratch::default();
    let mut x = state.candidate_with(|_| false);
    let mut prev: Vec<bool> = vec![false; g.n_vars()];
    for it in 1..=iter_max {
        iterate(&g, &mut msg, &mut scratch);
        let bits = hard_decision(&msg.posterior);
        for (&v, &b) in g.vars.iter().zip(&bits) {
            x[v as usize] = b;
        }
        if let Some(t) = trace.as_deref_mut() {
            let satisfied = state.equations().filter(|e| e.is_satisfied_by(&x)).count();
            let mean_abs = if g.n_vars() == 0 {
                0.0
            } else {
                msg.posterior.iter().map(|l| l.abs()).sum::<f64>() / g.n_vars() as f64
            };
            t.push(TraceRow {
                iter: it,
                mean_abs_posterior: mean_abs,
                flipped_bits: bits.iter().zip(&prev).filter(|(a, b)| a != b).count(),
                satisfied_checks: satisfied,
            });
        }
        prev = bits;
        if verify_unchecked(inst, &x) {
            return DecodeResult::Converged { secret: x, iterations: it };
        }
    }
    DecodeResult::Failed { iterations: iter_max }
}

/// Parameters of a guess-and-decode run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GadParams {
    /// Number of guesses.
    pub guesses: usize,
    /// Guessing paths to try in attack mode.
    pub paths: u64,
    pub iter_max: usize,
    /// Guesses take the planted values (success probability of the correct
    /// path). Otherwise, if `paths >= 2^guesses` the whole guess tree is
    /// walked (conflicting branches are never decoded); else `paths` random
    /// value assignments are tried.
    pub oracle: bool,
    /// Seeds randomised path values in attack mode.
    pub seed: u64,
    /// Run the collision pass before guessing.
    pub collisions: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GadStats {
    pub paths_tried: u64,
    /// Guesses actually made on the last path.
    pub guesses: usize,
    /// BP iterations summed over all paths.
    pub total_iterations: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GadOutcome {
    pub result: DecodeResult,
    pub stats: GadStats,
}

/// Guessing phase of guess-and-decode: `guesses` greedy picks that never
/// take a variable from a quadratic class III equation while a linear class
/// III equation exists. `value` chooses the bit for guess `i` of variable `v`.
pub fn guess_phase(root: &SystemState, guesses: usize, mut value: impl FnMut(usize, Var, &SystemState) -> bool) -> (SystemState, usize) {
    let mut st = root.clone();
    let mut made = 0;
    while made < guesses && !st.is_conflict() {
        let Ok(v) = select_with(&st, SelectionRule::LinearClassThree) else { break };
        let b = value(made, v, &st);
        st.reduce(v, b, Provenance::Guessed);
        made += 1;
    }
    (st, made)
}

/// Guess-and-decode on `inst`.
pub fn guess_and_decode(inst: &Instance, params: GadParams) -> Result<GadOutcome> {
    guess_and_decode_traced(inst, params, None)
}

/// [`guess_and_decode`] that keeps the decode trace of the last path tried.
pub fn guess_and_decode_traced(inst: &Instance, params: GadParams, mut trace: Option<&mut Vec<TraceRow>>) -> Result<GadOutcome> {
    let start = Instant::now();
    if params.guesses > inst.n {
        return arg_err(format!("{} guesses exceed the {} variables", params.guesses, inst.n));
    }
    let root = if params.collisions {
        initial_state(inst)?.0
    } else {
        SystemState::from_instance(inst)
    };
    if params.guesses > root.n() - root.n_assigned() {
        return arg_err("more guesses than unassigned variables");
    }
    let planted = match (params.oracle, inst.planted_secret.as_ref()) {
        (true, None) => return arg_err("oracle mode needs the planted secret"),
        (true, Some(x)) => Some(x),
        (false, _) => None,
    };

    let mut stats = GadStats {
        paths_tried: 0,
        guesses: 0,
        total_iterations: 0,
        wall_ms: 0.0,
    };
    let mut last = DecodeResult::Failed { iterations: 0 };
    let mut leaf = |st: &SystemState, made: usize, last: &mut DecodeResult, stats: &mut GadStats| {
        if let Some(t) = trace.as_deref_mut() {
            t.clear();
        }
        *last = decode_traced(st, inst, params.iter_max, trace.as_deref_mut());
        stats.paths_tried += 1;
        stats.guesses = made;
        stats.total_iterations += last.iterations();
        last.is_success()
    };

    if let Some(x) = planted {
        let (st, made) = guess_phase(&root, params.guesses, |_, v, _| x[v as usize]);
        leaf(&st, made, &mut last, &mut stats);
    } else if params.guesses < 64 && (1u64 << params.guesses) <= params.paths {
        // Exhaustive: depth-first over the guess tree, preferred value first,
        // sharing prefixes and dropping subtrees that hit a conflict.
        let mut stack = vec![(root, 0usize)];
        while let Some((st, depth)) = stack.pop() {
            if st.is_conflict() {
                continue;
            }
            let v = if depth < params.guesses { select_with(&st, SelectionRule::LinearClassThree).ok() } else { None };
            let Some(v) = v else {
                if leaf(&st, depth, &mut last, &mut stats) {
                    break;
                }
                continue;
            };
            let pref = preferred_first_value(&st, v);
            let mut other = st.clone();
            other.reduce(v, !pref, Provenance::Guessed);
            let mut first = st;
            first.reduce(v, pref, Provenance::Guessed);
            stack.push((other, depth + 1));
            stack.push((first, depth + 1));
        }
    } else {
        // Independent paths; path 0 takes the preferred values.
        for p in 0..params.paths.max(1) {
            let mut rng = rng::trial_rng(params.seed, p);
            let (st, made) = guess_phase(&root, params.guesses, |_, v, st| {
                if p == 0 {
                    preferred_first_value(st, v)
                } else {
                    rng.gen()
                }
            });
            if leaf(&st, made, &mut last, &mut stats) {
                break;
            }
        }
    }
    stats.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(GadOutcome { result: last, stats })
}
