mod common;

use common::{any_term, assignment, shallow_term, value_term};
use dynid_core::deduce::{can_derive, closure, DeductionLimit, Derivability, DerivationStep, KnowledgeSet, Rule};
use dynid_core::term::Term;
use dynid_core::value::{HashFunction, ValueSpace};
use proptest::prelude::*;

fn space_strategy() -> impl Strategy<Value = ValueSpace> {
    (prop_oneof![Just(16usize), Just(20), Just(32), Just(48)], prop_oneof![Just(HashFunction::Std256), Just(HashFunction::Toy)])
        .prop_map(|(w, h)| ValueSpace::new(w, h).unwrap())
}

/// Checks that each step follows from the knowledge and earlier steps.
fn replay(knowledge: &KnowledgeSet, trace: &[DerivationStep]) -> KnowledgeSet {
    let mut known = knowledge.clone();
    for step in trace {
        for p in &step.premises {
            assert!(known.contains(p), "premise {p} not yet known");
        }
        let expected = match step.rule {
            Rule::Xor => Term::Xor(step.premises.clone()),
            Rule::Hash => {
                assert_eq!(step.premises.len(), 1);
                Term::hash(step.premises[0].clone())
            }
            Rule::Concat => Term::Concat(step.premises.clone()),
            Rule::Project => {
                assert_eq!(step.premises.len(), 1);
                let Term::Concat(parts) = step.premises[0].normalize() else {
                    panic!("projection from a non-concatenation");
                };
                assert!(parts.contains(&step.result.normalize()));
                step.result.clone()
            }
        };
        assert_eq!(expected.normalize(), step.result.normalize());
        known.insert(step.result.clone());
    }
    known
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn normalization_preserves_evaluation(t in any_term(), s in space_strategy(), seed in any::<u64>()) {
        let a = assignment(&s, seed);
        let raw = t.evaluate(&s, &a).unwrap();
        let norm = t.normalize().evaluate(&s, &a).unwrap();
        prop_assert_eq!(raw, norm);
    }

    #[test]
    fn normalize_is_idempotent(t in any_term()) {
        let n = t.normalize();
        prop_assert!(n.is_canonical());
        prop_assert_eq!(n.normalize(), n);
    }

    #[test]
    fn display_round_trips(t in any_term()) {
        let n = t.normalize();
        let parsed: Term = n.to_string().parse().unwrap();
        prop_assert_eq!(parsed.normalize(), n);
    }
}

fn tiny_limit() -> DeductionLimit {
    DeductionLimit { max_depth: 1, max_terms: 5_000 }
}

fn search_limit() -> DeductionLimit {
    DeductionLimit { max_depth: 3, max_terms: 5_000 }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn closure_is_monotone(k in proptest::collection::vec(shallow_term(), 1..3), extra in shallow_term()) {
        let small: KnowledgeSet = k.iter().cloned().collect();
        let big: KnowledgeSet = k.into_iter().chain([extra]).collect();
        let cs = closure(&small, tiny_limit());
        let cb = closure(&big, tiny_limit());
        prop_assume!(!cs.is_partial() && !cb.is_partial());
        prop_assert!(small.is_subset(&cs.knowledge));
        prop_assert!(cs.knowledge.is_subset(&cb.knowledge));
    }

    #[test]
    fn derivations_are_sound(k in proptest::collection::vec(value_term(), 1..4), goal in value_term()) {
        let knowledge: KnowledgeSet = k.into_iter().collect();
        if let Derivability::Derivable(trace) = can_derive(&knowledge, &goal, search_limit()) {
            let known = replay(&knowledge, &trace);
            prop_assert!(known.contains(&goal));
        }
    }

    #[test]
    fn closure_members_are_derivable(k in proptest::collection::vec(shallow_term(), 1..3)) {
        let knowledge: KnowledgeSet = k.into_iter().collect();
        let c = closure(&knowledge, tiny_limit());
        prop_assume!(!c.is_partial());
        for t in c.knowledge.iter().filter(|t| t.is_value_typed()).take(40) {
            let d = can_derive(&knowledge, t, search_limit());
            prop_assert!(d.is_derivable(), "{} from {:?}", t, knowledge);
            replay(&knowledge, d.trace().unwrap());
        }
    }
}
