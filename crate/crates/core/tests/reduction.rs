mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lprg::eqsys::{Block, Equation, Provenance, SystemState, VarList};
use lprg::gd::{initial_state, select_variable};
use lprg::prg::{sample_instance, Instance, Predicate};

#[test]
fn truth_path_never_conflicts() {
    common::truth_paths_consistent(21, 1000).unwrap();
}

#[test]
fn wrong_guesses_keep_counters_consistent() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..200 {
        let inst = sample_instance(64, 1.3, Predicate::P5, rng.gen()).unwrap();
        let (mut st, _) = initial_state(&inst).unwrap();
        while !st.is_conflict() {
            let Ok(v) = select_variable(&st) else { break };
            st.reduce(v, rng.gen(), Provenance::Guessed);
            if !st.is_conflict() {
                st.check_invariants().unwrap();
            }
        }
    }
}

#[test]
fn collision_equations_hold_on_the_secret() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..50 {
        let inst = sample_instance(128, 1.45, Predicate::P5, rng.gen()).unwrap();
        let mut st = SystemState::from_instance(&inst);
        let made = st.find_collisions(2);
        let secret = inst.planted_secret.as_ref().unwrap();
        assert!(made.iter().all(|e| e.is_linear() && e.is_satisfied_by(secret)));
        assert!(!st.is_conflict());
    }
}

fn equation() -> impl Strategy<Value = Equation> {
    let vars = proptest::sample::subsequence((0..8u32).collect::<Vec<_>>(), 1..=8).prop_shuffle();
    (vars, 0usize..=4, 0u8..3, any::<bool>(), 1u32..=4).prop_map(|(vars, k, kind, rhs, d)| {
        let k = k.min(vars.len());
        let (lin, nl) = vars.split_at(k);
        let nl: VarList = nl.iter().copied().collect();
        let block = match kind {
            _ if nl.is_empty() => None,
            0 => None,
            1 => Some(Block::And(nl)),
            _ => {
                let d = d.min(nl.len() as u32);
                Some(Block::Thr { vars: nl, d })
            }
        };
        Equation::new(lin.iter().copied(), block, rhs)
    })
}

proptest! {
    #[test]
    fn substitution_preserves_truth(e in equation(), bits in any::<u8>(), v in 0u32..8) {
        let x: Vec<bool> = (0..8).map(|i| bits >> i & 1 == 1).collect();
        match e.substitute(v, x[v as usize]) {
            None => prop_assert!(!e.contains(v)),
            Some(r) => {
                prop_assert!(!r.contains(v));
                prop_assert_eq!(r.is_satisfied_by(&x), e.is_satisfied_by(&x));
            }
        }
    }

    #[test]
    fn canonical_form_is_idempotent(e in equation()) {
        let again = Equation::new(e.linear().iter().copied(), e.block().cloned(), e.rhs);
        prop_assert_eq!(again, e);
    }

    #[test]
    fn instance_json_round_trip(n in 5usize..40, s in 1.0..1.4f64, seed in any::<u64>(), thr in any::<bool>()) {
        let pred = if thr { Predicate::xor_thr(2, 2, 3).unwrap() } else { Predicate::P5 };
        let inst = sample_instance(n, s, pred, seed).unwrap();
        prop_assert_eq!(&Instance::from_json(&inst.to_json().unwrap()).unwrap(), &inst);
        let public = inst.public();
        prop_assert_eq!(Instance::from_json(&public.to_json().unwrap()).unwrap(), public);
    }

    #[test]
    fn predicate_names_round_trip(k in 0usize..6, q in 1usize..6, d in 1usize..6, thr in any::<bool>()) {
        let p = if thr { Predicate::xor_thr(k, d.min(q), q) } else { Predicate::xor_and(k, q) };
        if let Ok(p) = p {
            prop_assert_eq!(p.to_string().parse::<Predicate>().unwrap(), p);
        }
    }
}
