//! Guess-and-determine key recovery.
//!
//! Variables are picked greedily from the smallest non-empty equation class,
//! each guess is propagated through [`SystemState::reduce`], and once enough
//! linear information is available the linear part is solved over GF(2) and
//! the candidate is checked against the instance. Wrong leaves are undone by
//! depth-first backtracking, flipping each guessed value at most once.

use std::time::Instant;

use rand::Rng;
use serde::Serialize;

use crate::eqsys::{Bucket, EquationClass, Provenance, SystemState, Var};
use crate::error::{Error, Result};
use crate::prg::{bits_to_string, verify_unchecked, Instance};

/// Which equations a selector may pick from, in priority order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionRule {
    /// Class III, then II, then I.
    Classes,
    /// Like [`SelectionRule::Classes`], but class III is restricted to its
    /// purely linear equations so quadratic class III checks stay intact for
    /// decoding.
    LinearClassThree,
}

/// A class group: variables are drawn from `from` and ranked by their
/// occurrences in `count`.
struct Group {
    from: &'static [Bucket],
    count: &'static [Bucket],
}

const CLASS_III: &[Bucket] = &[Bucket::IIILinear, Bucket::IIIQuadratic];

const CLASSES: [Group; 4] = [
    Group { from: CLASS_III, count: CLASS_III },
    Group { from: &[Bucket::II], count: &[Bucket::II] },
    Group { from: &[Bucket::I], count: &[Bucket::I] },
    Group { from: &[Bucket::NonlinearOnly], count: &[Bucket::NonlinearOnly] },
];

// Candidates come from linear class III equations only, but are still ranked
// by their count over the whole class.
const LINEAR_CLASS_THREE: [Group; 4] = [
    Group { from: &[Bucket::IIILinear], count: CLASS_III },
    Group { from: &[Bucket::II], count: &[Bucket::II] },
    Group { from: &[Bucket::I], count: &[Bucket::I] },
    Group { from: &[Bucket::NonlinearOnly], count: &[Bucket::NonlinearOnly] },
];

/// Greedy choice: most frequent variable in the first non-empty class
/// group; ties go to the globally most frequent, then to the lowest index.
pub fn select_with(state: &SystemState, rule: SelectionRule) -> Result<Var> {
    let groups = match rule {
        SelectionRule::Classes => &CLASSES,
        SelectionRule::LinearClassThree => &LINEAR_CLASS_THREE,
    };
    for group in groups {
        if group.from.iter().all(|&b| state.bucket_len(b) == 0) {
            continue;
        }
        let mut best: Option<(u32, u32, Var)> = None;
        for v in 0..state.n() as Var {
            if group.from.iter().all(|&b| state.occurrences_in(b, v) == 0) {
                continue;
            }
            let local: u32 = group.count.iter().map(|&b| state.occurrences_in(b, v)).sum();
            let key = (local, state.occurrences(v));
            if best.is_none_or(|(l, g, _)| key > (l, g)) {
                best = Some((key.0, key.1, v));
            }
        }
        if let Some((_, _, v)) = best {
            return Ok(v);
        }
    }
    Err(Error::NothingToGuess)
}

/// Variable selection for guess-and-determine.
pub fn select_variable(state: &SystemState) -> Result<Var> {
    select_with(state, SelectionRule::Classes)
}

/// First value to try for `var`: the right-hand side of a class III
/// quadratic equation in which `var` is the linear term, otherwise 0.
pub fn preferred_first_value(state: &SystemState, var: Var) -> bool {
    state
        .equations_with(var)
        .find(|e| {
            !e.is_linear() && EquationClass::ClassIII == crate::eqsys::classify(e) && e.linear() == [var]
        })
        .is_some_and(|e| e.rhs)
}

/// Linear rows `XOR(vars) = rhs`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Gf2System {
    pub rows: Vec<(Vec<Var>, bool)>,
}

impl Gf2System {
    /// The live purely linear equations of `state`.
    pub fn from_state(state: &SystemState) -> Self {
        Gf2System {
            rows: state
                .equations()
                .filter(|e| e.is_linear())
                .map(|e| (e.linear().to_vec(), e.rhs))
                .collect(),
        }
    }
}

/// Row-reduced echelon form of a [`Gf2System`], bit-packed.
#[derive(Debug, Clone)]
pub struct Gf2Echelon {
    cols: Vec<Var>,
    words: usize,
    /// Pivot rows, each `words` limbs wide; rhs kept separately.
    rows: Vec<Vec<u64>>,
    rhs: Vec<bool>,
    pivots: Vec<usize>,
    inconsistent: bool,
}

impl Gf2Echelon {
    pub fn new(sys: &Gf2System) -> Self {
        let mut cols: Vec<Var> = sys.rows.iter().flat_map(|(v, _)| v.iter().copied()).collect();
        cols.sort_unstable();
        cols.dedup();
        let words = cols.len().div_ceil(64).max(1);
        let col_of = |v: Var| cols.binary_search(&v).expect("column");
        let mut mat: Vec<Vec<u64>> = Vec::with_capacity(sys.rows.len());
        let mut rhs = Vec::with_capacity(sys.rows.len());
        for (vars, b) in &sys.rows {
            let mut row = vec![0u64; words];
            for &v in vars {
                let c = col_of(v);
                row[c / 64] ^= 1 << (c % 64);
            }
            mat.push(row);
            rhs.push(*b);
        }

        let mut pivots = Vec::new();
        let mut rank = 0;
        for c in 0..cols.len() {
            let (w, bit) = (c / 64, 1u64 << (c % 64));
            let Some(p) = (rank..mat.len()).find(|&r| mat[r][w] & bit != 0) else {
                continue;
            };
            mat.swap(rank, p);
            rhs.swap(rank, p);
            let prow = mat[rank].clone();
            let prhs = rhs[rank];
            for (r, row) in mat.iter_mut().enumerate() {
                if r != rank && row[w] & bit != 0 {
                    for (a, b) in row[w..].iter_mut().zip(&prow[w..]) {
                        *a ^= b;
                    }
                    rhs[r] ^= prhs;
                }
            }
            pivots.push(c);
            rank += 1;
        }
        let inconsistent = rhs[rank..].iter().any(|&b| b);
        mat.truncate(rank);
        rhs.truncate(rank);
        Gf2Echelon {
            cols,
            words,
            rows: mat,
            rhs,
            pivots,
            inconsistent,
        }
    }

    pub fn rank(&self) -> usize {
        self.pivots.len()
    }

    pub fn is_inconsistent(&self) -> bool {
        self.inconsistent
    }

    fn row_is_unit(&self, r: usize) -> bool {
        let c = self.pivots[r];
        self.rows[r].iter().enumerate().all(|(w, &x)| {
            let expect = if w == c / 64 { 1u64 << (c % 64) } else { 0 };
            x == expect
        })
    }

    /// Variables whose value the system fixes outright.
    pub fn pinned(&self) -> Vec<(Var, bool)> {
        (0..self.rank())
            .filter(|&r| self.row_is_unit(r))
            .map(|r| (self.cols[self.pivots[r]], self.rhs[r]))
            .collect()
    }

    /// Columns without a pivot.
    pub fn free_vars(&self) -> Vec<Var> {
        let mut is_pivot = vec![false; self.cols.len()];
        for &p in &self.pivots {
            is_pivot[p] = true;
        }
        self.cols
            .iter()
            .zip(is_pivot)
            .filter(|(_, p)| !p)
            .map(|(&v, _)| v)
            .collect()
    }

    /// Pivot values given values for the free columns (in `free_vars` order).
    pub fn back_substitute(&self, free_values: &[bool]) -> Vec<(Var, bool)> {
        let free = self.free_vars();
        let mut fixed = vec![0u64; self.words];
        for (&v, &b) in free.iter().zip(free_values) {
            if b {
                let c = self.cols.binary_search(&v).expect("column");
                fixed[c / 64] |= 1 << (c % 64);
            }
        }
        (0..self.rank())
            .map(|r| {
                let par = self.rows[r].iter().zip(&fixed).map(|(a, b)| (a & b).count_ones()).sum::<u32>() & 1;
                (self.cols[self.pivots[r]], self.rhs[r] ^ (par == 1))
            })
            .collect()
    }
}

/// Outcome of a single elimination.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gf2Solution {
    pub pinned: Vec<(Var, bool)>,
    pub rank: usize,
    pub inconsistent: bool,
}

/// Gaussian elimination over GF(2); pins every variable the rows determine.
pub fn solve_gf2(sys: &Gf2System) -> Gf2Solution {
    let ech = Gf2Echelon::new(sys);
    Gf2Solution {
        pinned: if ech.inconsistent { Vec::new() } else { ech.pinned() },
        rank: ech.rank(),
        inconsistent: ech.inconsistent,
    }
}

/// Largest number of undetermined variables enumerated after the
/// solve/propagate loop stalls.
pub const MAX_ENUMERATED_FREE: usize = 12;

/// Solves the linear part of `state`, feeds the pinned values back through
/// propagation and repeats until nothing new is pinned. Remaining free
/// variables (at most [`MAX_ENUMERATED_FREE`]) are enumerated. Returns a
/// secret that reproduces every output of `inst`, if one is found.
pub fn solve_system(state: &SystemState, inst: &Instance) -> Option<Vec<bool>> {
    let mut st = state.clone();
    loop {
        if st.is_conflict() {
            return None;
        }
        if st.n_assigned() == st.n() {
            let x = st.candidate_with(|_| false);
            return verify_unchecked(inst, &x).then_some(x);
        }
        let ech = Gf2Echelon::new(&Gf2System::from_state(&st));
        if ech.is_inconsistent() {
            return None;
        }
        let pinned = ech.pinned();
        if pinned.is_empty() {
            return enumerate_rest(&st, &ech, inst);
        }
        for (v, b) in pinned {
            st.reduce(v, b, Provenance::Solved);
        }
    }
}

fn enumerate_rest(st: &SystemState, ech: &Gf2Echelon, inst: &Instance) -> Option<Vec<bool>> {
    let free_cols = ech.free_vars();
    let pivot_vars: std::collections::HashSet<Var> = ech.pivots.iter().map(|&c| ech.cols[c]).collect();
    let loose: Vec<Var> = st.unassigned().filter(|v| !ech.cols.contains(v)).collect();
    let nfree = free_cols.len() + loose.len();
    if nfree > MAX_ENUMERATED_FREE {
        return None;
    }
    debug_assert!(loose.iter().all(|v| !pivot_vars.contains(v)));
    let mut base = st.candidate_with(|_| false);
    for mask in 0u32..(1 << nfree) {
        let fv: Vec<bool> = (0..free_cols.len()).map(|i| mask >> i & 1 == 1).collect();
        for (i, &v) in free_cols.iter().enumerate() {
            base[v as usize] = fv[i];
        }
        for (j, &v) in loose.iter().enumerate() {
            base[v as usize] = mask >> (free_cols.len() + j) & 1 == 1;
        }
        for (v, b) in ech.back_substitute(&fv) {
            base[v as usize] = b;
        }
        if verify_unchecked(inst, &base) {
            return Some(base);
        }
    }
    None
}

/// Search limits for [`gd_attack`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GdLimits {
    pub max_nodes: u64,
    /// Guess depth at which a leaf is solved regardless of the budget.
    pub max_depth: usize,
}

impl Default for GdLimits {
    fn default() -> Self {
        GdLimits {
            max_nodes: 1 << 20,
            max_depth: usize::MAX,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct GdStats {
    /// Guesses on the path that produced the secret.
    pub guesses_on_path: usize,
    pub solves: u64,
    /// Guessed values tried, including reversals.
    pub nodes: u64,
    pub conflicts: u64,
    /// Linear equations from the collision pass.
    pub collisions: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GdOutcome {
    pub secret: Vec<bool>,
    pub stats: GdStats,
}

struct Level {
    var: Var,
    value: bool,
    reversed: bool,
    snapshot: SystemState,
}

/// Initial system: one equation per output, plus collision equations for
/// AND predicates.
pub fn initial_state(inst: &Instance) -> Result<(SystemState, usize)> {
    let mut st = SystemState::from_instance(inst);
    let c = st.find_collisions(inst.predicate.q()).len();
    if st.is_conflict() {
        return Err(Error::InconsistentInstance("contradiction among the initial equations".into()));
    }
    Ok((st, c))
}

/// Full guess-and-determine key recovery.
pub fn gd_attack(inst: &Instance, limits: GdLimits) -> Result<GdOutcome> {
    let start = Instant::now();
    let (root, collisions) = initial_state(inst)?;
    let mut stats = GdStats {
        collisions,
        ..Default::default()
    };
    let mut stack: Vec<Level> = Vec::new();
    let mut state = root;
    let n = inst.n;

    'search: loop {
        let mut leaf = state.is_conflict();
        if state.is_conflict() {
            stats.conflicts += 1;
        } else {
            let stop = state.linear_budget() >= n || stack.len() >= limits.max_depth;
            let next = if stop { None } else { select_variable(&state).ok() };
            match next {
                Some(var) if stats.nodes < limits.max_nodes => {
                    let value = preferred_first_value(&state, var);
                    let snapshot = state.clone();
                    state.reduce(var, value, Provenance::Guessed);
                    stack.push(Level {
                        var,
                        value,
                        reversed: false,
                        snapshot,
                    });
                    stats.nodes += 1;
                    continue 'search;
                }
                Some(_) => {
                    return Err(exhausted(stats, "node limit"));
                }
                None => {
                    stats.solves += 1;
                    if let Some(secret) = solve_system(&state, inst) {
                        stats.guesses_on_path = stack.len();
                        stats.wall_ms = start.elapsed().as_secs_f64() * 1e3;
                        return Ok(GdOutcome { secret, stats });
                    }
                    leaf = true;
                }
            }
        }
        debug_assert!(leaf);
        // Backtrack to the deepest level that has not been reversed yet.
        loop {
            let Some(level) = stack.last_mut() else {
                return Err(exhausted(stats, "search tree exhausted"));
            };
            if level.reversed {
                stack.pop();
                continue;
            }
            if stats.nodes >= limits.max_nodes {
                return Err(exhausted(stats, "node limit"));
            }
            level.reversed = true;
            level.value = !level.value;
            state = level.snapshot.clone();
            state.reduce(level.var, level.value, Provenance::Guessed);
            stats.nodes += 1;
            continue 'search;
        }
    }
}

fn exhausted(stats: GdStats, reason: &str) -> Error {
    Error::Exhausted {
        nodes: stats.nodes,
        reason: reason.to_string(),
    }
}

/// One CSV row of an attack run.
#[derive(Debug, Clone, Serialize)]
pub struct AttackRecord {
    pub secret: String,
    pub guesses_on_path: usize,
    pub solves: u64,
    pub nodes: u64,
    pub wall_ms: f64,
    pub rng_seed: Option<u64>,
}

impl AttackRecord {
    pub fn new(outcome: &GdOutcome, rng_seed: Option<u64>) -> Self {
        AttackRecord {
            secret: bits_to_string(&outcome.secret),
            guesses_on_path: outcome.stats.guesses_on_path,
            solves: outcome.stats.solves,
            nodes: outcome.stats.nodes,
            wall_ms: outcome.stats.wall_ms,
            rng_seed,
        }
    }
}

/// Guesses along one path, with uniformly random values, until the linear
/// budget reaches `n`. Returns the number of guesses and whether the path
/// ran into a contradiction on the way.
pub fn guesses_to_budget<R: Rng>(inst: &Instance, rng: &mut R) -> Result<(usize, bool)> {
    let (mut st, _) = initial_state(inst)?;
    let mut guesses = 0;
    while st.linear_budget() < inst.n && !st.is_conflict() {
        let Ok(v) = select_variable(&st) else { break };
        st.reduce(v, rng.gen(), Provenance::Guessed);
        guesses += 1;
    }
    Ok((guesses, st.is_conflict()))
}

/// Mean and (population) variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanVar {
    pub mean: f64,
    pub variance: f64,
}

impl MeanVar {
    pub fn of(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return MeanVar { mean: f64::NAN, variance: f64::NAN };
        }
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let variance = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        MeanVar { mean, variance }
    }
}
