#![allow(dead_code)]

use std::collections::HashMap;

use dynid_core::term::Term;
use dynid_core::value::{Rng, Value, ValueSpace};
use proptest::prelude::*;

pub const ATOMS: [&str; 5] = ["a", "b", "c", "d", "e"];

/// Raw (unnormalized) terms that denote one value: nested and repeated XOR
/// operands, zeros, singleton concatenations, hashes over concatenations.
pub fn value_term() -> impl Strategy<Value = Term> {
    let leaf = prop_oneof![
        4 => proptest::sample::select(&ATOMS[..]).prop_map(Term::atom),
        1 => Just(Term::Zero),
    ];
    leaf.prop_recursive(4, 32, 4, |inner| {
        prop_oneof![
            3 => proptest::collection::vec(inner.clone(), 1..5).prop_map(Term::Xor),
            2 => inner.clone().prop_map(|t| Term::Hash(Box::new(t))),
            2 => proptest::collection::vec(inner.clone(), 2..4)
                .prop_map(|p| Term::Hash(Box::new(Term::Concat(p)))),
            1 => inner.prop_map(|t| Term::Concat(vec![t])),
        ]
    })
}

/// Any well-typed term: a value term or a concatenation of value terms.
pub fn any_term() -> impl Strategy<Value = Term> {
    prop_oneof![
        3 => value_term(),
        1 => proptest::collection::vec(value_term(), 2..4).prop_map(Term::Concat),
    ]
}

pub fn assignment(space: &ValueSpace, seed: u64) -> HashMap<String, Value> {
    let mut rng = Rng::new(seed);
    ATOMS.iter().map(|a| (a.to_string(), rng.next_nonce(space.width))).collect()
}

/// Shallow value terms, small enough for literal closures to terminate.
pub fn shallow_term() -> impl Strategy<Value = Term> {
    let atom = proptest::sample::select(&ATOMS[..3]).prop_map(Term::atom);
    prop_oneof![
        2 => atom.clone(),
        1 => atom.clone().prop_map(Term::hash),
        1 => (atom.clone(), atom).prop_map(|(a, b)| Term::xor(a, b)),
    ]
}

use dynid_core::attacks::{run_attack, AttackId, Variant};
use dynid_core::harness::{drive_session, Credentials, Endpoint, Message, SessionRun, SmartCard, Transcript};
use dynid_core::schemes::{deploy, run_honest_session, Deployment, SchemeId};

pub struct Fixture {
    pub deployment: Box<dyn Deployment>,
    pub creds: Credentials,
    pub card: SmartCard,
    pub sid: Value,
}

/// A deployment with random master secrets, one random server and one
/// random user.
pub fn fixture(scheme: SchemeId, space: ValueSpace, seed: u64) -> Fixture {
    let mut rng = Rng::new(seed);
    let mut deployment = deploy(scheme, space, &mut rng);
    let sid = rng.next_nonce(space.width);
    deployment.register_server(&sid);
    let creds = Credentials::random(&space, &mut rng);
    let card = deployment.register_user(&creds, &mut rng);
    Fixture { deployment, creds, card, sid }
}

/// Honest sessions for `sessions` seeds; returns the first failing seed.
pub fn honest_sessions(scheme: SchemeId, space: ValueSpace, sessions: u64) -> Result<(), String> {
    for seed in 0..sessions {
        let f = fixture(scheme, space, seed);
        let mut rng = Rng::new(seed ^ 0x5eed);
        let run = run_honest_session(f.deployment.as_ref(), &f.creds, &f.card, &f.sid, &mut rng)
            .map_err(|e| format!("{scheme} seed {seed}: {e}"))?;
        if !run.both_accepted_with_equal_keys() {
            return Err(format!("{scheme} seed {seed}: user {:?} server {:?}", run.user, run.server));
        }
    }
    Ok(())
}

pub struct TamperedRun {
    pub run: SessionRun,
    /// Whether any party, the registration centre included, rejected.
    pub rejected: bool,
}

/// Runs the fixture's session with `hook` applied, keeping hold of every
/// endpoint so the registration centre's verdict is visible too.
pub fn tampered_session(f: &Fixture, seed: u64, hook: &mut dyn FnMut(usize, &mut Message)) -> TamperedRun {
    let mut rng = Rng::new(seed);
    let mut user = f.deployment.user(&f.creds, &f.card, &f.sid).unwrap();
    let mut server = f.deployment.server(&f.sid).unwrap();
    let mut rc = f.deployment.rc();
    let transcript = Transcript::new(f.deployment.scheme(), Some(seed), f.sid.clone());
    let run = drive_session(
        transcript,
        user.as_mut(),
        server.as_mut(),
        rc.as_mut().map(|r| r.as_mut() as &mut dyn Endpoint),
        &mut rng,
        Some(hook),
    )
    .unwrap();
    let rejected = run.user.rejection().is_some()
        || run.server.rejection().is_some()
        || rc.as_ref().is_some_and(|r| r.outcome().rejection().is_some());
    TamperedRun { run, rejected }
}

/// Flips `bits_per_field` spread-out bits in every field of every message
/// of an honest session, one flip per session. Returns the number of
/// tampered sessions.
pub fn tamper_sweep(scheme: SchemeId, space: ValueSpace, seed: u64, bits_per_field: usize) -> Result<usize, String> {
    let f = fixture(scheme, space, seed);
    let honest = tampered_session(&f, seed, &mut |_, _| {});
    if !honest.run.both_accepted_with_equal_keys() || honest.rejected {
        return Err(format!("{scheme}: untampered session failed"));
    }
    let total_bits = space.width * 8;
    let mut count = 0;
    for (pos, msg) in honest.run.transcript.entries.iter().enumerate() {
        for (field, _) in &msg.fields {
            for k in 0..bits_per_field {
                let bit = (k * total_bits / bits_per_field + k) % total_bits;
                let mut hook = |at: usize, m: &mut Message| {
                    if at == pos {
                        let v = m.field_mut(field).expect("field present");
                        *v = v.flip_bit(bit);
                    }
                };
                let t = tampered_session(&f, seed, &mut hook);
                count += 1;
                if t.run.both_accepted_with_equal_keys() || t.run.server.is_accepted() || !t.rejected {
                    return Err(format!(
                        "{scheme}: flipping bit {bit} of {}.{field} was not rejected (user {:?}, server {:?})",
                        msg.label, t.run.user.status, t.run.server.status
                    ));
                }
            }
        }
    }
    Ok(count)
}

/// Runs `attack` under `variant` for `seeds` seeds; `expect_success`
/// selects whether every run must succeed or every run must be rejected.
pub fn attack_seeds(attack: AttackId, variant: Variant, seeds: u64, expect_success: bool) -> Result<(), String> {
    for seed in 0..seeds {
        let v = run_attack(attack, variant, ValueSpace::default(), seed).map_err(|e| format!("{attack} seed {seed}: {e}"))?;
        let ok = if expect_success {
            v.server_accepted && v.keys_match
        } else {
            !v.server_accepted
        };
        if !ok {
            return Err(format!(
                "{attack} {variant:?} seed {seed}: server_accepted={} keys_match={}",
                v.server_accepted, v.keys_match
            ));
        }
    }
    Ok(())
}
