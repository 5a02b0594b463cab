//! Reduced equation systems.
//!
//! A [`SystemState`] holds the live equations of an instance after some
//! variables have been fixed. Substituting a variable folds it out of every
//! equation, re-buckets the touched equations by class, and then keeps
//! harvesting variables that the reduced equations force ("free" variables)
//! until nothing more is forced. Contradictions set a sticky conflict flag.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use smallvec::SmallVec;

use crate::prg::{Family, Instance};

pub type Var = u32;
pub type VarList = SmallVec<[Var; 8]>;

/// Non-linear block of a reduced equation.
///
/// Canonical blocks never fold to a constant or a single linear variable:
/// AND blocks hold at least two variables, THR blocks satisfy
/// `1 <= d <= vars.len()` and `vars.len() >= 2`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Block {
    And(VarList),
    Thr { vars: VarList, d: u32 },
}

impl Block {
    pub fn vars(&self) -> &[Var] {
        match self {
            Block::And(v) => v,
            Block::Thr { vars, .. } => vars,
        }
    }

    pub fn contains(&self, v: Var) -> bool {
        self.vars().binary_search(&v).is_ok()
    }

    /// Residual threshold; `len` for AND blocks.
    pub fn threshold(&self) -> usize {
        match self {
            Block::And(v) => v.len(),
            Block::Thr { d, .. } => *d as usize,
        }
    }

    pub fn is_and(&self) -> bool {
        matches!(self, Block::And(_))
    }

    fn eval(&self, x: &[bool]) -> bool {
        let ones = self.vars().iter().filter(|&&v| x[v as usize]).count();
        ones >= self.threshold()
    }
}

/// Result of folding a block after substitutions.
enum Folded {
    Block(Block),
    Linear(Var),
    Const(bool),
}

fn fold_and(vars: VarList) -> Folded {
    match vars.len() {
        0 => Folded::Const(true),
        1 => Folded::Linear(vars[0]),
        _ => Folded::Block(Block::And(vars)),
    }
}

fn fold_thr(vars: VarList, d: i64) -> Folded {
    if d <= 0 {
        Folded::Const(true)
    } else if d as usize > vars.len() {
        Folded::Const(false)
    } else if vars.len() == 1 {
        Folded::Linear(vars[0])
    } else {
        Folded::Block(Block::Thr { vars, d: d as u32 })
    }
}

/// Left-hand side of an equation; the dedup key.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Lhs {
    pub linear: VarList,
    pub block: Option<Block>,
}

/// One reduced constraint `XOR(linear) ^ block = rhs`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Equation {
    pub lhs: Lhs,
    pub rhs: bool,
}

/// Sorts and XOR-cancels repeated variables.
fn canonical_linear(mut v: VarList) -> VarList {
    v.sort_unstable();
    let mut out = VarList::new();
    let mut i = 0;
    while i < v.len() {
        let mut j = i;
        while j < v.len() && v[j] == v[i] {
            j += 1;
        }
        if (j - i) % 2 == 1 {
            out.push(v[i]);
        }
        i = j;
    }
    out
}

fn toggle(linear: &mut VarList, v: Var) {
    match linear.binary_search(&v) {
        Ok(i) => {
            linear.remove(i);
        }
        Err(i) => linear.insert(i, v),
    }
}

impl Equation {
    /// Builds a canonical equation. Repeated linear variables cancel; a block
    /// that folds to a constant or a single variable is merged.
    pub fn new(linear: impl IntoIterator<Item = Var>, block: Option<Block>, rhs: bool) -> Self {
        let mut linear = canonical_linear(linear.into_iter().collect());
        let mut rhs = rhs;
        let block = match block {
            None => None,
            Some(Block::And(mut v)) => {
                v.sort_unstable();
                v.dedup();
                match fold_and(v) {
                    Folded::Block(b) => Some(b),
                    Folded::Linear(x) => {
                        toggle(&mut linear, x);
                        None
                    }
                    Folded::Const(c) => {
                        rhs ^= c;
                        None
                    }
                }
            }
            Some(Block::Thr { mut vars, d }) => {
                vars.sort_unstable();
                vars.dedup();
                match fold_thr(vars, d as i64) {
                    Folded::Block(b) => Some(b),
                    Folded::Linear(x) => {
                        toggle(&mut linear, x);
                        None
                    }
                    Folded::Const(c) => {
                        rhs ^= c;
                        None
                    }
                }
            }
        };
        Equation {
            lhs: Lhs { linear, block },
            rhs,
        }
    }

    pub fn linear(&self) -> &[Var] {
        &self.lhs.linear
    }

    pub fn block(&self) -> Option<&Block> {
        self.lhs.block.as_ref()
    }

    pub fn is_linear(&self) -> bool {
        self.lhs.block.is_none()
    }

    pub fn term_count(&self) -> usize {
        self.lhs.linear.len() + usize::from(self.lhs.block.is_some())
    }

    pub fn contains(&self, v: Var) -> bool {
        self.lhs.linear.binary_search(&v).is_ok() || self.lhs.block.as_ref().is_some_and(|b| b.contains(v))
    }

    /// All variables, linear first.
    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.lhs
            .linear
            .iter()
            .copied()
            .chain(self.lhs.block.iter().flat_map(|b| b.vars().iter().copied()))
    }

    pub fn is_satisfied_by(&self, x: &[bool]) -> bool {
        let lin = self.lhs.linear.iter().fold(false, |a, &v| a ^ x[v as usize]);
        let blk = self.lhs.block.as_ref().is_some_and(|b| b.eval(x));
        lin ^ blk == self.rhs
    }

    /// Substitutes `var := value`. Returns `None` when `var` does not occur.
    pub fn substitute(&self, var: Var, value: bool) -> Option<Equation> {
        let mut linear = self.lhs.linear.clone();
        let mut rhs = self.rhs;
        let mut hit = false;
        if let Ok(i) = linear.binary_search(&var) {
            linear.remove(i);
            rhs ^= value;
            hit = true;
        }
        let block = match &self.lhs.block {
            Some(b) if b.contains(var) => {
                hit = true;
                let mut vars: VarList = b.vars().iter().copied().filter(|&v| v != var).collect();
                let folded = match b {
                    Block::And(_) => {
                        if value {
                            fold_and(vars)
                        } else {
                            Folded::Const(false)
                        }
                    }
                    Block::Thr { d, .. } => {
                        let d = *d as i64 - i64::from(value);
                        fold_thr(std::mem::take(&mut vars), d)
                    }
                };
                match folded {
                    Folded::Block(b) => Some(b),
                    Folded::Linear(x) => {
                        toggle(&mut linear, x);
                        None
                    }
                    Folded::Const(c) => {
                        rhs ^= c;
                        None
                    }
                }
            }
            other => other.clone(),
        };
        hit.then(|| Equation {
            lhs: Lhs { linear, block },
            rhs,
        })
    }

    /// Equation from an instance tuple.
    pub fn from_tuple(family: Family, k: usize, d: usize, tuple: &[u32], y: bool) -> Self {
        let (lin, nl) = tuple.split_at(k);
        let vars: VarList = nl.iter().copied().collect();
        let block = match family {
            Family::XorAnd => Block::And(vars),
            Family::XorThr => Block::Thr { vars, d: d as u32 },
        };
        Equation::new(lin.iter().copied(), Some(block), y)
    }
}

impl fmt::Display for Equation {
    /// `lin=[..] and=[..] thr=(d';[..]) rhs=b class=<I|II|III|N|S>`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn list(v: &[Var]) -> String {
            v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
        }
        let (and, thr) = match &self.lhs.block {
            None => (String::new(), String::new()),
            Some(Block::And(v)) => (list(v), String::new()),
            Some(Block::Thr { vars, d }) => (String::new(), format!("{d};[{}]", list(vars))),
        };
        write!(
            f,
            "lin=[{}] and=[{}] thr=({}) rhs={} class={}",
            list(&self.lhs.linear),
            and,
            thr,
            u8::from(self.rhs),
            classify(self).code()
        )
    }
}

/// Term-count class of an equation (a non-linear block counts as one term).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EquationClass {
    ClassI,
    ClassII,
    ClassIII,
    NonlinearOnly,
    Settled,
}

impl EquationClass {
    pub fn code(self) -> &'static str {
        match self {
            EquationClass::ClassI => "I",
            EquationClass::ClassII => "II",
            EquationClass::ClassIII => "III",
            EquationClass::NonlinearOnly => "N",
            EquationClass::Settled => "S",
        }
    }
}

pub fn classify(eq: &Equation) -> EquationClass {
    match eq.term_count() {
        c if c >= 4 => EquationClass::ClassI,
        3 => EquationClass::ClassII,
        2 => EquationClass::ClassIII,
        1 if eq.lhs.block.is_some() => EquationClass::NonlinearOnly,
        _ => EquationClass::Settled,
    }
}

/// Finer bucket used for occurrence counting: class III is split into its
/// linear and quadratic halves so the decoding-phase selector can restrict
/// itself to linear class III equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(usize)]
pub enum Bucket {
    I = 0,
    II = 1,
    IIILinear = 2,
    IIIQuadratic = 3,
    NonlinearOnly = 4,
}

const N_BUCKETS: usize = 5;

fn bucket_of(eq: &Equation) -> Option<Bucket> {
    match classify(eq) {
        EquationClass::ClassI => Some(Bucket::I),
        EquationClass::ClassII => Some(Bucket::II),
        EquationClass::ClassIII if eq.is_linear() => Some(Bucket::IIILinear),
        EquationClass::ClassIII => Some(Bucket::IIIQuadratic),
        EquationClass::NonlinearOnly => Some(Bucket::NonlinearOnly),
        EquationClass::Settled => None,
    }
}

/// How a variable got its value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    Guessed,
    Free,
    Collision,
    Solved,
}

/// Per-variable value and provenance.
pub type Assignment = Vec<Option<(bool, Provenance)>>;

/// Live equations, occurrence counts, assignment and conflict flag.
#[derive(Debug, Clone)]
pub struct SystemState {
    n: usize,
    family: Family,
    slots: Vec<Option<Equation>>,
    bucket_of_slot: Vec<Option<Bucket>>,
    index: HashMap<Lhs, usize>,
    incidence: Vec<Vec<u32>>,
    occ_global: Vec<u32>,
    occ_bucket: [Vec<u32>; N_BUCKETS],
    bucket_len: [usize; N_BUCKETS],
    live: usize,
    live_linear: usize,
    assignment: Assignment,
    n_assigned: usize,
    n_guessed: usize,
    conflict: bool,
    duplicate_events: usize,
}

impl SystemState {
    /// Empty system over `n` variables.
    pub fn new(n: usize, family: Family) -> Self {
        SystemState {
            n,
            family,
            slots: Vec::new(),
            bucket_of_slot: Vec::new(),
            index: HashMap::new(),
            incidence: vec![Vec::new(); n],
            occ_global: vec![0; n],
            occ_bucket: std::array::from_fn(|_| vec![0; n]),
            bucket_len: [0; N_BUCKETS],
            live: 0,
            live_linear: 0,
            assignment: vec![None; n],
            n_assigned: 0,
            n_guessed: 0,
            conflict: false,
            duplicate_events: 0,
        }
    }

    /// One equation per output bit.
    pub fn from_instance(inst: &Instance) -> Self {
        let p = inst.predicate;
        let mut st = SystemState::new(inst.n, p.family());
        for (t, &y) in inst.tuples.iter().zip(&inst.outputs) {
            st.insert(Equation::from_tuple(p.family(), p.k(), p.d(), t, y), Provenance::Free);
        }
        st
    }

    /// Builds a system from explicit equations (tests, toy systems).
    pub fn from_equations(n: usize, family: Family, eqs: impl IntoIterator<Item = Equation>) -> Self {
        let mut st = SystemState::new(n, family);
        for e in eqs {
            st.insert(e, Provenance::Free);
        }
        st
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn is_conflict(&self) -> bool {
        self.conflict
    }

    pub fn assignment(&self) -> &Assignment {
        &self.assignment
    }

    pub fn value(&self, v: Var) -> Option<bool> {
        self.assignment[v as usize].map(|(b, _)| b)
    }

    pub fn n_assigned(&self) -> usize {
        self.n_assigned
    }

    pub fn n_guessed(&self) -> usize {
        self.n_guessed
    }

    pub fn n_live(&self) -> usize {
        self.live
    }

    pub fn n_live_linear(&self) -> usize {
        self.live_linear
    }

    /// Pairs of equations that shared both their block and all linear
    /// variables (a distinguisher); recorded and otherwise ignored.
    pub fn duplicate_events(&self) -> usize {
        self.duplicate_events
    }

    pub fn class_len(&self, class: EquationClass) -> usize {
        match class {
            EquationClass::ClassI => self.bucket_len[Bucket::I as usize],
            EquationClass::ClassII => self.bucket_len[Bucket::II as usize],
            EquationClass::ClassIII => {
                self.bucket_len[Bucket::IIILinear as usize] + self.bucket_len[Bucket::IIIQuadratic as usize]
            }
            EquationClass::NonlinearOnly => self.bucket_len[Bucket::NonlinearOnly as usize],
            EquationClass::Settled => 0,
        }
    }

    pub fn bucket_len(&self, b: Bucket) -> usize {
        self.bucket_len[b as usize]
    }

    /// Occurrences of `v` inside live equations of bucket `b`.
    pub fn occurrences_in(&self, b: Bucket, v: Var) -> u32 {
        self.occ_bucket[b as usize][v as usize]
    }

    pub fn occurrences(&self, v: Var) -> u32 {
        self.occ_global[v as usize]
    }

    /// Live equations in slot order.
    pub fn equations(&self) -> impl Iterator<Item = &Equation> {
        self.slots.iter().flatten()
    }

    /// Live equations containing `v`.
    pub fn equations_with(&self, v: Var) -> impl Iterator<Item = &Equation> {
        self.incidence[v as usize]
            .iter()
            .filter_map(move |&id| self.slots[id as usize].as_ref().filter(|e| e.contains(v)))
    }

    /// Unassigned variables, ascending.
    pub fn unassigned(&self) -> impl Iterator<Item = Var> + '_ {
        (0..self.n as Var).filter(move |&v| self.assignment[v as usize].is_none())
    }

    /// Debug dump, one equation per line.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for e in self.equations() {
            s.push_str(&e.to_string());
            s.push('\n');
        }
        s
    }

    /// `#assigned + #live purely-linear equations`; guessing may stop once
    /// this reaches `n`.
    pub fn linear_budget(&self) -> usize {
        self.n_assigned + self.live_linear
    }

    fn add_counts(&mut self, id: usize, sign: i32) {
        let eq = self.slots[id].as_ref().expect("live slot");
        let b = self.bucket_of_slot[id];
        let vars: VarList = eq.vars().collect();
        let is_lin = eq.is_linear();
        for v in vars {
            let g = &mut self.occ_global[v as usize];
            *g = (*g as i32 + sign) as u32;
            if let Some(b) = b {
                let c = &mut self.occ_bucket[b as usize][v as usize];
                *c = (*c as i32 + sign) as u32;
            }
        }
        if let Some(b) = b {
            let l = &mut self.bucket_len[b as usize];
            *l = (*l as i64 + sign as i64) as usize;
        }
        self.live = (self.live as i64 + sign as i64) as usize;
        if is_lin {
            self.live_linear = (self.live_linear as i64 + sign as i64) as usize;
        }
    }

    fn remove_slot(&mut self, id: usize) -> Equation {
        self.add_counts(id, -1);
        let eq = self.slots[id].take().expect("live slot");
        self.bucket_of_slot[id] = None;
        if self.index.get(&eq.lhs) == Some(&id) {
            self.index.remove(&eq.lhs);
        }
        eq
    }

    /// Places `eq` or harvests what it forces. Returns the slot when the
    /// equation stays live.
    fn place(&mut self, eq: Equation, reuse: Option<usize>, prov: Provenance, queue: &mut VecDeque<(Var, bool, Provenance)>) -> Option<usize> {
        let lin = eq.linear();
        match (&eq.lhs.block, lin.len()) {
            (None, 0) => {
                if eq.rhs {
                    self.conflict = true;
                }
                return None;
            }
            (None, 1) => {
                queue.push_back((lin[0], eq.rhs, prov));
                return None;
            }
            (Some(Block::And(vars)), 0) if eq.rhs => {
                queue.extend(vars.iter().map(|&v| (v, true, prov)));
                return None;
            }
            (Some(Block::Thr { vars, d }), 0) => {
                if eq.rhs && *d as usize == vars.len() {
                    queue.extend(vars.iter().map(|&v| (v, true, prov)));
                    return None;
                }
                if !eq.rhs && *d == 1 {
                    queue.extend(vars.iter().map(|&v| (v, false, prov)));
                    return None;
                }
            }
            _ => {}
        }
        if let Some(&other) = self.index.get(&eq.lhs) {
            let same = self.slots[other].as_ref().map(|e| e.rhs) == Some(eq.rhs);
            if !same {
                self.conflict = true;
            }
            return None;
        }
        let id = match reuse {
            Some(id) => id,
            None => {
                let id = self.slots.len();
                self.slots.push(None);
                self.bucket_of_slot.push(None);
                for v in eq.vars() {
                    self.incidence[v as usize].push(id as u32);
                }
                id
            }
        };
        self.bucket_of_slot[id] = bucket_of(&eq);
        self.index.insert(eq.lhs.clone(), id);
        self.slots[id] = Some(eq);
        self.add_counts(id, 1);
        Some(id)
    }

    /// Inserts a new equation, substituting already-assigned variables first.
    pub fn insert(&mut self, eq: Equation, prov: Provenance) -> bool {
        let mut eq = eq;
        for v in eq.vars().collect::<VarList>() {
            if let Some(b) = self.value(v) {
                eq = eq.substitute(v, b).expect("variable occurs");
            }
        }
        let mut queue = VecDeque::new();
        let placed = self.place(eq, None, prov, &mut queue).is_some();
        self.drain(&mut queue);
        placed
    }

    /// Substitutes `var := value` everywhere and harvests free variables to a
    /// fixpoint. A no-op once the state is in conflict.
    pub fn reduce(&mut self, var: Var, value: bool, prov: Provenance) {
        let mut queue = VecDeque::new();
        queue.push_back((var, value, prov));
        self.drain(&mut queue);
        #[cfg(debug_assertions)]
        self.debug_check();
    }

    fn drain(&mut self, queue: &mut VecDeque<(Var, bool, Provenance)>) {
        while let Some((v, val, prov)) = queue.pop_front() {
            if self.conflict {
                return;
            }
            match self.assignment[v as usize] {
                Some((b, _)) => {
                    if b != val {
                        self.conflict = true;
                        return;
                    }
                    continue;
                }
                None => {
                    self.assignment[v as usize] = Some((val, prov));
                    self.n_assigned += 1;
                    if prov == Provenance::Guessed {
                        self.n_guessed += 1;
                    }
                }
            }
            let ids = std::mem::take(&mut self.incidence[v as usize]);
            for id in ids {
                let id = id as usize;
                let Some(eq) = self.slots[id].as_ref() else { continue };
                if !eq.contains(v) {
                    continue;
                }
                let old = self.remove_slot(id);
                let new = old.substitute(v, val).expect("variable occurs");
                // Follow-on harvests are free regardless of what triggered them.
                self.place(new, Some(id), Provenance::Free, queue);
                if self.conflict {
                    return;
                }
            }
        }
    }

    /// XORs pairs of equations with identical full-size AND blocks.
    ///
    /// Within a group sharing a block every member is paired with the
    /// group's first equation, so a group of `g` yields `g - 1` independent
    /// linear equations. Returns the equations actually inserted.
    pub fn find_collisions(&mut self, q: usize) -> Vec<Equation> {
        if self.family != Family::XorAnd {
            return Vec::new();
        }
        let mut groups: HashMap<VarList, Vec<usize>> = HashMap::new();
        for (id, e) in self.slots.iter().enumerate() {
            if let Some(Equation {
                lhs: Lhs { block: Some(Block::And(b)), .. },
                ..
            }) = e
            {
                if b.len() == q {
                    groups.entry(b.clone()).or_default().push(id);
                }
            }
        }
        let mut keys: Vec<_> = groups.into_iter().filter(|(_, ids)| ids.len() > 1).collect();
        keys.sort();
        let mut created = Vec::new();
        for (_, ids) in keys {
            let first = self.slots[ids[0]].clone().expect("live");
            for &other in &ids[1..] {
                let Some(e) = self.slots[other].clone() else { continue };
                let x = Equation::new(first.linear().iter().chain(e.linear()).copied(), None, first.rhs ^ e.rhs);
                if x.linear().is_empty() {
                    if x.rhs {
                        self.conflict = true;
                    } else {
                        self.duplicate_events += 1;
                    }
                    continue;
                }
                if self.index.contains_key(&x.lhs) {
                    // Already present; `insert` flags a contradicting rhs.
                    self.insert(x, Provenance::Collision);
                    continue;
                }
                if self.insert(x.clone(), Provenance::Collision) {
                    created.push(x);
                }
            }
        }
        created
    }

    /// Current assignment as bits, unassigned positions filled from `fill`.
    pub fn candidate_with(&self, mut fill: impl FnMut(Var) -> bool) -> Vec<bool> {
        (0..self.n as Var)
            .map(|v| self.value(v).unwrap_or_else(|| fill(v)))
            .collect()
    }

    /// Recounts everything from scratch and compares against the
    /// incrementally maintained counters.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut g = vec![0u32; self.n];
        let mut b: [Vec<u32>; N_BUCKETS] = std::array::from_fn(|_| vec![0; self.n]);
        let mut blen = [0usize; N_BUCKETS];
        let (mut live, mut lin) = (0, 0);
        for (id, e) in self.slots.iter().enumerate() {
            let Some(e) = e else { continue };
            live += 1;
            if e.is_linear() {
                lin += 1;
            }
            let bk = bucket_of(e);
            if bk != self.bucket_of_slot[id] {
                return Err(format!("slot {id} bucketed as {:?}, classifies as {:?}", self.bucket_of_slot[id], bk));
            }
            let bk = bk.ok_or_else(|| format!("settled equation left live: {e}"))?;
            blen[bk as usize] += 1;
            for v in e.vars() {
                if self.assignment[v as usize].is_some() {
                    return Err(format!("live equation {e} references assigned x{v}"));
                }
                g[v as usize] += 1;
                b[bk as usize][v as usize] += 1;
            }
        }
        if g != self.occ_global {
            return Err("global occurrence counts drifted".into());
        }
        if b != self.occ_bucket || blen != self.bucket_len {
            return Err("per-class occurrence counts drifted".into());
        }
        if live != self.live || lin != self.live_linear {
            return Err("live counters drifted".into());
        }
        let assigned = self.assignment.iter().filter(|a| a.is_some()).count();
        if assigned != self.n_assigned {
            return Err("assigned counter drifted".into());
        }
        Ok(())
    }

    #[cfg(debug_assertions)]
    fn debug_check(&self) {
        if !self.conflict {
            if let Err(e) = self.check_invariants() {
                panic!("system state invariant violated: {e}");
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use smallvec::smallvec;

    fn and(v: &[Var]) -> Option<Block> {
        Some(Block::And(v.iter().copied().collect()))
    }

    fn eq(lin: &[Var], blk: Option<Block>, rhs: u8) -> Equation {
        Equation::new(lin.iter().copied(), blk, rhs == 1)
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify(&eq(&[1, 2, 3], and(&[4, 5]), 0)), EquationClass::ClassI);
        assert_eq!(classify(&eq(&[1], and(&[2, 3]), 1)), EquationClass::ClassIII);
        assert_eq!(classify(&eq(&[], and(&[2, 3]), 0)), EquationClass::NonlinearOnly);
        assert_eq!(classify(&eq(&[1, 2, 3, 4], None, 0)), EquationClass::ClassI);
        assert_eq!(classify(&eq(&[1, 2], and(&[3, 4]), 0)), EquationClass::ClassII);
        assert_eq!(classify(&eq(&[1, 2], None, 0)), EquationClass::ClassIII);
        assert_eq!(classify(&eq(&[1], None, 0)), EquationClass::Settled);
        assert_eq!(classify(&eq(&[], None, 0)), EquationClass::Settled);
    }

    #[test]
    fn construction_cancels_and_folds() {
        let e = eq(&[3, 1, 3, 2], None, 0);
        assert_eq!(e.linear(), &[1, 2]);
        let e = eq(&[1], and(&[7]), 1);
        assert_eq!(e.linear(), &[1, 7]);
        assert!(e.is_linear());
        let e = Equation::new([1], Some(Block::Thr { vars: smallvec![2, 3], d: 3 }), true);
        assert_eq!(e, eq(&[1], None, 1));
        let e = Equation::new([1], Some(Block::Thr { vars: smallvec![2, 3], d: 0 }), true);
        assert_eq!(e, eq(&[1], None, 0));
    }

    #[test]
    fn dump_format() {
        assert_eq!(eq(&[1, 2], and(&[4, 5]), 1).to_string(), "lin=[1,2] and=[4,5] thr=() rhs=1 class=II");
        let t = Equation::new([0], Some(Block::Thr { vars: smallvec![2, 3, 4], d: 2 }), false);
        assert_eq!(t.to_string(), "lin=[0] and=[] thr=(2;[2,3,4]) rhs=0 class=III");
    }

    fn free_of(st: &SystemState, v: Var) -> Option<(bool, Provenance)> {
        st.assignment()[v as usize]
    }

    #[test]
    fn quadratic_class_three_frees_both_and_vars() {
        let mut st = SystemState::from_equations(4, Family::XorAnd, [eq(&[1], and(&[2, 3]), 1)]);
        st.reduce(1, false, Provenance::Guessed);
        assert_eq!(free_of(&st, 2), Some((true, Provenance::Free)));
        assert_eq!(free_of(&st, 3), Some((true, Provenance::Free)));
        assert_eq!(st.n_live(), 0);
        assert!(!st.is_conflict());
    }

    #[test]
    fn linear_pair_frees_partner() {
        let mut st = SystemState::from_equations(3, Family::XorAnd, [eq(&[1, 2], None, 1)]);
        st.reduce(1, true, Provenance::Guessed);
        assert_eq!(free_of(&st, 2), Some((false, Provenance::Free)));
    }

    #[test]
    fn and_only_one_set_frees_partner_zero() {
        let mut st = SystemState::from_equations(4, Family::XorAnd, [eq(&[], and(&[2, 3]), 0)]);
        st.reduce(2, true, Provenance::Guessed);
        assert_eq!(free_of(&st, 3), Some((false, Provenance::Free)));
    }

    #[test]
    fn and_var_zero_frees_linear_term() {
        let mut st = SystemState::from_equations(4, Family::XorAnd, [eq(&[1], and(&[2, 3]), 1)]);
        st.reduce(3, false, Provenance::Guessed);
        assert_eq!(free_of(&st, 1), Some((true, Provenance::Free)));
        assert_eq!(free_of(&st, 2), None);
    }

    #[test]
    fn chained_harvest_reaches_fixpoint() {
        // x0 = 1 => x1 = 0 => (x2 x3 = 1) => x2 = x3 = 1 => x4 = 0
        let st_eqs = [
            eq(&[0, 1], None, 1),
            eq(&[1], and(&[2, 3]), 1),
            eq(&[2, 4], None, 1),
        ];
        let mut st = SystemState::from_equations(5, Family::XorAnd, st_eqs);
        st.reduce(0, true, Provenance::Guessed);
        let vals: Vec<_> = (0..5).map(|v| st.value(v)).collect();
        assert_eq!(vals, vec![Some(true), Some(false), Some(true), Some(true), Some(false)]);
        assert_eq!(st.n_guessed(), 1);
    }

    #[test]
    fn conflict_on_contradiction() {
        let mut st = SystemState::from_equations(3, Family::XorAnd, [eq(&[0, 1], None, 0), eq(&[0, 2], None, 0), eq(&[1, 2], None, 1)]);
        st.reduce(0, true, Provenance::Guessed);
        assert!(st.is_conflict());
    }

    #[test]
    fn contradictory_duplicates_conflict() {
        let mut st = SystemState::from_equations(4, Family::XorAnd, [eq(&[0, 1, 3], None, 0), eq(&[0, 1, 2], None, 1)]);
        assert_eq!(st.n_live(), 2);
        st.reduce(3, false, Provenance::Guessed);
        st.reduce(2, false, Provenance::Guessed);
        assert!(st.is_conflict());
    }

    #[test]
    fn equal_duplicates_merge() {
        let st = SystemState::from_equations(4, Family::XorAnd, [eq(&[0, 1], None, 1), eq(&[1, 0], None, 1)]);
        assert_eq!(st.n_live(), 1);
        assert!(!st.is_conflict());
    }

    #[test]
    fn thr_rules() {
        let thr = |lin: &[Var], vars: &[Var], d: u32, rhs: u8| {
            Equation::new(lin.iter().copied(), Some(Block::Thr { vars: vars.iter().copied().collect(), d }), rhs == 1)
        };
        // Settled THR frees the linear term: 2-of-3 with two ones.
        let mut st = SystemState::from_equations(5, Family::XorThr, [thr(&[0], &[1, 2, 3], 2, 0)]);
        st.reduce(1, true, Provenance::Guessed);
        st.reduce(2, true, Provenance::Guessed);
        assert_eq!(st.value(0), Some(true));
        // THR-only, rhs 0, d-1 ones present => rest zero.
        let mut st = SystemState::from_equations(5, Family::XorThr, [thr(&[], &[1, 2, 3, 4], 2, 0)]);
        st.reduce(1, true, Provenance::Guessed);
        assert_eq!((st.value(2), st.value(3), st.value(4)), (Some(false), Some(false), Some(false)));
        // THR-only, rhs 1, q-d zeros present => rest one.
        let mut st = SystemState::from_equations(5, Family::XorThr, [thr(&[], &[1, 2, 3, 4], 2, 1)]);
        st.reduce(1, false, Provenance::Guessed);
        assert_eq!(st.value(2), None);
        st.reduce(2, false, Provenance::Guessed);
        assert_eq!((st.value(3), st.value(4)), (Some(true), Some(true)));
        // THR zero input only shrinks the block.
        let e = thr(&[0], &[1, 2, 3], 2, 0).substitute(1, false).unwrap();
        assert_eq!(e.block(), Some(&Block::Thr { vars: smallvec![2, 3], d: 2 }));
    }

    #[test]
    fn collisions_examples() {
        let mut st = SystemState::from_equations(10, Family::XorAnd, [eq(&[1, 2, 3], and(&[7, 9]), 0), eq(&[2, 4, 5], and(&[7, 9]), 1)]);
        let c = st.find_collisions(2);
        assert_eq!(c, vec![eq(&[1, 3, 4, 5], None, 1)]);
        assert_eq!(classify(&c[0]), EquationClass::ClassI);
        assert_eq!(st.linear_budget(), 1);

        let mut st = SystemState::from_equations(10, Family::XorAnd, [eq(&[1, 2, 3], and(&[7, 9]), 0), eq(&[1, 2, 4], and(&[7, 9]), 0)]);
        let c = st.find_collisions(2);
        assert_eq!(c, vec![eq(&[3, 4], None, 0)]);
        assert_eq!(classify(&c[0]), EquationClass::ClassIII);
    }

    #[test]
    fn collision_contradiction_is_conflict() {
        let st = SystemState::from_equations(10, Family::XorAnd, [eq(&[1, 2, 3], and(&[7, 9]), 0), eq(&[3, 2, 1], and(&[9, 7]), 1)]);
        // Identical left-hand sides with differing rhs conflict at insertion.
        assert!(st.is_conflict());
        let mut st = SystemState::from_equations(10, Family::XorAnd, [eq(&[1, 2, 3], and(&[7, 9]), 0), eq(&[1, 2, 3], and(&[7, 9]), 0)]);
        assert!(st.find_collisions(2).is_empty());
        assert!(!st.is_conflict());
    }

    #[test]
    fn budget_counts_assigned_and_linear() {
        let mut st = SystemState::from_equations(6, Family::XorAnd, [eq(&[0, 1, 2], and(&[3, 4]), 0)]);
        assert_eq!(st.linear_budget(), 0);
        st.reduce(3, true, Provenance::Guessed);
        // x0+x1+x2+x4 = 0 is now linear; x3 assigned.
        assert_eq!(st.linear_budget(), 2);
    }
}
