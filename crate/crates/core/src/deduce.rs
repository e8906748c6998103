//! Bounded intruder deduction over canonical terms.
//!
//! The adversary knows a set of terms and may, in each round, XOR two known
//! value terms, hash any known term, concatenate two to six known value
//! terms, or split a known concatenation into its parts. No rule inverts a
//! hash. [`closure`] materializes the rounds literally; [`can_derive`] runs
//! the same rules but only builds hash and concatenation nodes that occur as
//! subterms of the knowledge or the goal, which keeps the search finite
//! without losing derivations for XOR with free function symbols.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::ops::ControlFlow;

use serde::Serialize;

use crate::term::Term;

/// Longest concatenation the adversary builds in one step.
pub const MAX_CONCAT_PARTS: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct DeductionLimit {
    pub max_depth: usize,
    pub max_terms: usize,
}

impl Default for DeductionLimit {
    fn default() -> Self {
        DeductionLimit {
            max_depth: 4,
            max_terms: 20_000,
        }
    }
}

/// A set of canonical terms known to the adversary.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KnowledgeSet(BTreeSet<Term>);

impl KnowledgeSet {
    pub fn new<I: IntoIterator<Item = Term>>(terms: I) -> Self {
        KnowledgeSet(terms.into_iter().map(|t| t.normalize()).collect())
    }

    pub fn contains(&self, t: &Term) -> bool {
        self.0.contains(&t.normalize())
    }

    pub fn insert(&mut self, t: Term) -> bool {
        self.0.insert(t.normalize())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Term> {
        self.0.iter()
    }

    pub fn is_subset(&self, other: &KnowledgeSet) -> bool {
        self.0.is_subset(&other.0)
    }
}

impl FromIterator<Term> for KnowledgeSet {
    fn from_iter<I: IntoIterator<Item = Term>>(iter: I) -> Self {
        KnowledgeSet::new(iter)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Rule {
    Xor,
    Hash,
    Concat,
    Project,
}

/// One rule application in a derivation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DerivationStep {
    pub rule: Rule,
    pub premises: Vec<Term>,
    pub result: Term,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ClosureStatus {
    /// No rule produces anything new.
    Fixpoint,
    /// `max_depth` rounds ran without reaching a fixpoint.
    DepthBound,
    /// `max_terms` was hit; the set is partial.
    LimitExceeded,
}

#[derive(Clone, Debug)]
pub struct Closure {
    pub knowledge: KnowledgeSet,
    pub status: ClosureStatus,
    pub rounds: usize,
}

impl Closure {
    pub fn is_partial(&self) -> bool {
        self.status == ClosureStatus::LimitExceeded
    }
}

/// Result of a goal-directed search.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Derivability {
    Derivable(Vec<DerivationStep>),
    NotDerivable,
    /// The term budget ran out before the goal was found or ruled out.
    Unknown,
}

impl Derivability {
    pub fn is_derivable(&self) -> bool {
        matches!(self, Derivability::Derivable(_))
    }

    pub fn trace(&self) -> Option<&[DerivationStep]> {
        match self {
            Derivability::Derivable(steps) => Some(steps),
            _ => None,
        }
    }
}

/// Number of XOR applications in a trace.
pub fn xor_steps(trace: &[DerivationStep]) -> usize {
    trace.iter().filter(|s| s.rule == Rule::Xor).count()
}

#[derive(Clone, Debug)]
enum Origin {
    Given,
    Derived { rule: Rule, premises: Vec<usize> },
}

enum Insert {
    Added(usize),
    Known,
    Full,
}

struct Saturation<'a> {
    terms: Vec<Term>,
    origins: Vec<Origin>,
    index: HashMap<Term, usize>,
    max_terms: usize,
    // Hash and concat results are only built when listed here.
    universe: Option<&'a HashSet<Term>>,
    goals: &'a [Term],
    // goals not yet derived
    remaining: usize,
}

impl<'a> Saturation<'a> {
    fn new(knowledge: &KnowledgeSet, max_terms: usize) -> Self {
        let mut s = Saturation {
            terms: Vec::new(),
            origins: Vec::new(),
            index: HashMap::new(),
            max_terms,
            universe: None,
            goals: &[],
            remaining: 0,
        };
        for t in knowledge.iter() {
            s.index.insert(t.clone(), s.terms.len());
            s.terms.push(t.clone());
            s.origins.push(Origin::Given);
        }
        s
    }

    fn insert(&mut self, t: Term, rule: Rule, premises: Vec<usize>) -> Insert {
        if self.index.contains_key(&t) {
            return Insert::Known;
        }
        if self.terms.len() >= self.max_terms {
            return Insert::Full;
        }
        let id = self.terms.len();
        self.index.insert(t.clone(), id);
        self.terms.push(t);
        self.origins.push(Origin::Derived { rule, premises });
        Insert::Added(id)
    }

    fn allowed(&self, t: &Term) -> bool {
        self.universe.is_none_or(|u| u.contains(t))
    }

    /// Runs one round. `prev..start` are the terms added by the previous
    /// round; every new derivation uses at least one of them and only terms
    /// below `start`.
    fn round(&mut self, prev: usize, start: usize) -> ControlFlow<Stop, ()> {
        let emit = |s: &mut Self, t: Term, rule: Rule, premises: Vec<usize>| match s.insert(t, rule, premises) {
            Insert::Full => ControlFlow::Break(Stop::Full),
            Insert::Added(id) if s.goals.contains(&s.terms[id]) => {
                s.remaining -= 1;
                if s.remaining == 0 {
                    ControlFlow::Break(Stop::Goals)
                } else {
                    ControlFlow::Continue(())
                }
            }
            _ => ControlFlow::Continue(()),
        };

        for i in prev..start {
            if let Term::Concat(parts) = &self.terms[i] {
                for part in parts.clone() {
                    emit(self, part, Rule::Project, vec![i])?;
                }
            }
        }

        for i in prev..start {
            let h = Term::Hash(Box::new(self.terms[i].clone()));
            if self.allowed(&h) {
                emit(self, h, Rule::Hash, vec![i])?;
            }
        }

        let value_typed: Vec<usize> = (0..start).filter(|&i| self.terms[i].is_value_typed()).collect();
        for &j in value_typed.iter().filter(|&&j| j >= prev) {
            for &i in value_typed.iter().take_while(|&&i| i < j) {
                let x = Term::xor(self.terms[i].clone(), self.terms[j].clone());
                emit(self, x, Rule::Xor, vec![i, j])?;
            }
        }

        match self.universe {
            Some(universe) => {
                let mut targets: Vec<&Term> = universe
                    .iter()
                    .filter(|t| matches!(t, Term::Concat(p) if p.len() <= MAX_CONCAT_PARTS))
                    .collect();
                targets.sort();
                for target in targets {
                    if self.index.contains_key(target) {
                        continue;
                    }
                    let Term::Concat(parts) = target else { unreachable!() };
                    let ids: Option<Vec<usize>> = parts
                        .iter()
                        .map(|p| self.index.get(p).copied().filter(|&id| id < start))
                        .collect();
                    if let Some(ids) = ids {
                        emit(self, target.clone(), Rule::Concat, ids)?;
                    }
                }
            }
            None => {
                let old: Vec<usize> = value_typed.iter().copied().filter(|&i| i < prev).collect();
                let new: Vec<usize> = value_typed.iter().copied().filter(|&i| i >= prev).collect();
                for len in 2..=MAX_CONCAT_PARTS {
                    for first_new in 0..len {
                        let mut lists: Vec<&[usize]> = Vec::with_capacity(len);
                        lists.extend(std::iter::repeat_n(old.as_slice(), first_new));
                        lists.push(new.as_slice());
                        lists.extend(std::iter::repeat_n(value_typed.as_slice(), len - first_new - 1));
                        let mut chosen = Vec::with_capacity(len);
                        for_each_tuple(&lists, &mut chosen, &mut |ids| {
                            let t = Term::concat(ids.iter().map(|&i| self.terms[i].clone()));
                            emit(self, t, Rule::Concat, ids.to_vec())
                        })?;
                    }
                }
            }
        }
        ControlFlow::Continue(())
    }

    fn run(&mut self, max_depth: usize) -> (ClosureStatus, usize) {
        let mut prev = 0;
        for depth in 1..=max_depth {
            let start = self.terms.len();
            match self.round(prev, start) {
                ControlFlow::Break(Stop::Full) => return (ClosureStatus::LimitExceeded, depth),
                ControlFlow::Break(Stop::Goals) => return (ClosureStatus::DepthBound, depth),
                ControlFlow::Continue(()) => {}
            }
            if self.terms.len() == start {
                return (ClosureStatus::Fixpoint, depth);
            }
            prev = start;
        }
        (ClosureStatus::DepthBound, max_depth)
    }

    fn trace(&self, goal: usize) -> Vec<DerivationStep> {
        let mut steps = Vec::new();
        let mut seen = HashSet::new();
        self.collect(goal, &mut seen, &mut steps);
        steps
    }

    fn collect(&self, id: usize, seen: &mut HashSet<usize>, out: &mut Vec<DerivationStep>) {
        if !seen.insert(id) {
            return;
        }
        if let Origin::Derived { rule, premises } = &self.origins[id] {
            for &p in premises {
                self.collect(p, seen, out);
            }
            out.push(DerivationStep {
                rule: *rule,
                premises: premises.iter().map(|&p| self.terms[p].clone()).collect(),
                result: self.terms[id].clone(),
            });
        }
    }
}

enum Stop {
    Full,
    Goals,
}

fn for_each_tuple<F>(lists: &[&[usize]], chosen: &mut Vec<usize>, f: &mut F) -> ControlFlow<Stop, ()>
where
    F: FnMut(&[usize]) -> ControlFlow<Stop, ()>,
{
    match lists.split_first() {
        None => f(chosen),
        Some((head, rest)) => {
            for &id in head.iter() {
                chosen.push(id);
                let r = for_each_tuple(rest, chosen, f);
                chosen.pop();
                r?;
            }
            ControlFlow::Continue(())
        }
    }
}

/// Literal bounded closure of `knowledge`.
pub fn closure(knowledge: &KnowledgeSet, limit: DeductionLimit) -> Closure {
    let mut sat = Saturation::new(knowledge, limit.max_terms);
    let (status, rounds) = if limit.max_depth == 0 {
        (ClosureStatus::DepthBound, 0)
    } else {
        sat.run(limit.max_depth)
    };
    Closure {
        knowledge: sat.terms.into_iter().collect(),
        status,
        rounds,
    }
}

/// Decides whether `goal` is derivable from `knowledge` within `limit`,
/// returning the rule applications on success.
pub fn can_derive(knowledge: &KnowledgeSet, goal: &Term, limit: DeductionLimit) -> Derivability {
    can_derive_all(knowledge, std::slice::from_ref(goal), limit)
        .pop()
        .expect("one result per goal")
}

/// [`can_derive`] for several goals over one shared search. Hash and
/// concatenation nodes of every goal are admitted, so a goal may be found
/// through another goal's subterms; every reported trace is still a valid
/// derivation.
pub fn can_derive_all(knowledge: &KnowledgeSet, goals: &[Term], limit: DeductionLimit) -> Vec<Derivability> {
    let goals: Vec<Term> = goals.iter().map(Term::normalize).collect();
    let mut pending: Vec<Term> = goals.iter().filter(|g| !knowledge.contains(g)).cloned().collect();
    pending.sort();
    pending.dedup();
    let mut universe: HashSet<Term> = HashSet::new();
    for t in knowledge.iter().chain(&pending) {
        for s in t.subterms() {
            if matches!(s, Term::Hash(_) | Term::Concat(_)) {
                universe.insert(s.clone());
            }
        }
    }
    let mut sat = Saturation::new(knowledge, limit.max_terms);
    let status = if pending.is_empty() {
        ClosureStatus::Fixpoint
    } else {
        sat.universe = Some(&universe);
        sat.goals = &pending;
        sat.remaining = pending.len();
        sat.run(limit.max_depth).0
    };
    goals
        .iter()
        .map(|g| match sat.index.get(g) {
            Some(&id) => Derivability::Derivable(sat.trace(id)),
            None if status == ClosureStatus::LimitExceeded => Derivability::Unknown,
            None => Derivability::NotDerivable,
        })
        .collect()
}
