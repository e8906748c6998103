//! Hash and scheme outputs against values computed by an independent
//! Python implementation (hashlib plus a re-implementation of the toy mixer).

use std::collections::BTreeMap;

use dynid_core::schemes::hsiang_shih as hs;
use dynid_core::schemes::lee;
use dynid_core::schemes::li;
use dynid_core::schemes::liao_wang as lw;
use dynid_core::value::{GoldenVector, Value, ValueSpace};

#[test]
fn hash_golden_vectors() {
    let vectors: Vec<GoldenVector> =
        serde_json::from_str(include_str!("data/golden_vectors.json")).unwrap();
    assert_eq!(vectors.len(), 60);
    for v in &vectors {
        assert!(v.check().unwrap(), "{} w={} input={}", v.hash.name(), v.width, v.input_hex);
    }
}

struct Vectors {
    inputs: BTreeMap<String, Value>,
    schemes: BTreeMap<String, BTreeMap<String, Value>>,
}

fn vectors() -> Vectors {
    let raw: BTreeMap<String, BTreeMap<String, String>> =
        serde_json::from_str(include_str!("data/scheme_vectors.json")).unwrap();
    let mut schemes: BTreeMap<String, BTreeMap<String, Value>> = raw
        .into_iter()
        .map(|(k, m)| (k, m.into_iter().map(|(n, h)| (n, Value::from_hex(&h).unwrap())).collect()))
        .collect();
    let inputs = schemes.remove("inputs").unwrap();
    Vectors { inputs, schemes }
}

fn check(want: &BTreeMap<String, Value>, name: &str, got: &Value) {
    assert_eq!(want.get(name), Some(got), "{name}");
}

fn check_msg(want: &BTreeMap<String, Value>, msg: &dynid_core::harness::Message) {
    for (name, value) in &msg.fields {
        if let Some(w) = want.get(name) {
            assert_eq!(w, value, "{} field {name}", msg.label);
        }
    }
}

#[test]
fn liao_wang_matches_oracle() {
    let v = vectors();
    let i = |k: &str| v.inputs[k].clone();
    let want = &v.schemes["lw"];
    let s = ValueSpace::default();
    let rc = lw::LwRcState { space: s, krc: i("Krc"), nrc: i("Nrc") };
    let card = lw::lw_register_user(&rc, &i("ID"), &i("PW"));
    check(want, "V_i", &card.v);
    check(want, "B_i", &card.b);
    check(want, "H_i", &card.h);
    let st = rc.provision_server(&i("SID"));
    let (us, login) = lw::lw_build_login(&s, &card, &i("ID"), &i("PW"), &i("SID"), &i("Ni")).unwrap();
    check_msg(want, &login);
    let (ss, ack) = lw::lw_server_verify_login(&st, &login, &i("Nj")).unwrap();
    check_msg(want, &ack);
    let (ua, sk) = lw::lw_user_finish(&s, &us, &ack).unwrap();
    check_msg(want, &ua);
    check(want, "SK", &sk);
    check(want, "SK", &lw::lw_server_finish(&st, &ss, &ua).unwrap());
}

#[test]
fn hsiang_shih_matches_oracle() {
    let v = vectors();
    let i = |k: &str| v.inputs[k].clone();
    let want = &v.schemes["hs"];
    let s = ValueSpace::default();
    let mut rc = hs::HsRcState {
        space: s,
        krc: i("Krc"),
        nrc: i("Nrc"),
        nr: i("Nr"),
        servers: Default::default(),
    };
    let st = rc.provision_server(&i("SID"));
    let card = hs::hs_register_user(&rc, &i("ID"), &i("PW"), &i("Nb"));
    for (name, got) in [("V_i", &card.v), ("B_i", &card.b), ("H_i", &card.h), ("R_i", &card.r)] {
        check(want, name, got);
    }
    let (us, login) = hs::hs_build_login(&s, &card, &i("ID"), &i("PW"), &i("SID"), &i("Ni")).unwrap();
    check_msg(want, &login);
    let (pending, fwd) = hs::hs_server_forward(&st, &login, &i("Njr")).unwrap();
    check_msg(want, &fwd);
    let rc_ack = hs::hs_rc_verify(&rc, &fwd, &i("Nrj")).unwrap();
    check_msg(want, &rc_ack);
    let (ss, ack) = hs::hs_server_verify_login(&st, &pending, &rc_ack, &i("Nj")).unwrap();
    check_msg(want, &ack);
    let (ua, sk) = hs::hs_user_finish(&s, &us, &ack).unwrap();
    check_msg(want, &ua);
    check(want, "SK", &sk);
    check(want, "SK", &hs::hs_server_finish(&st, &ss, &ua).unwrap());
}

#[test]
fn lee_matches_oracle() {
    let v = vectors();
    let i = |k: &str| v.inputs[k].clone();
    let want = &v.schemes["lee"];
    let s = ValueSpace::default();
    let rc = lee::LeeRcState { space: s, krc: i("Krc"), nrc: i("Nrc") };
    let st = rc.provision_server(&i("SID"));
    let card = lee::lee_register_user(&rc, &i("ID"), &i("PW"), &i("Nb"));
    for (name, got) in [("V_i", &card.v), ("B_i", &card.b), ("H_i", &card.h), ("h(Nrc)", &card.h_nrc)] {
        check(want, name, got);
    }
    let (us, login) = lee::lee_build_login(&s, &card, &i("ID"), &i("PW"), &i("SID"), &i("Ni")).unwrap();
    check_msg(want, &login);
    let (ss, ack) = lee::lee_server_verify_login(&st, &login, &i("Nj")).unwrap();
    check_msg(want, &ack);
    let (ua, sk) = lee::lee_user_finish(&s, &us, &ack).unwrap();
    check_msg(want, &ua);
    check(want, "SK", &sk);
    check(want, "SK", &lee::lee_server_finish(&st, &ss, &ua).unwrap());
}

#[test]
fn li_matches_oracle() {
    let v = vectors();
    let i = |k: &str| v.inputs[k].clone();
    let want = &v.schemes["li"];
    let s = ValueSpace::default();
    let rc = li::LiRcState { space: s, krc: i("Krc"), nrc: i("Nrc") };
    let st = rc.provision_server(&i("SID"));
    let card = li::li_register_user(&rc, &i("ID"), &i("PW"), &i("Nb"));
    for (name, got) in [("C_i", &card.c), ("D_i", &card.d), ("E_i", &card.e), ("h(Nrc)", &card.h_nrc)] {
        check(want, name, got);
    }
    let (us, login) = li::li_build_login(&s, &card, &i("ID"), &i("PW"), &i("SID"), &i("Ni")).unwrap();
    check_msg(want, &login);
    let (ss, ack) = li::li_server_verify_login(&st, &login, &i("Nj")).unwrap();
    check_msg(want, &ack);
    let (ua, sk) = li::li_user_finish(&s, &us, &ack).unwrap();
    check_msg(want, &ua);
    check(want, "SK", &sk);
    check(want, "SK", &li::li_server_finish(&st, &ss, &ua).unwrap());
}

#[test]
fn symbolic_cards_evaluate_to_issued_cards() {
    let v = vectors();
    let i = |k: &str| v.inputs[k].clone();
    let s = ValueSpace::default();
    let assignment: std::collections::HashMap<String, Value> =
        v.inputs.iter().map(|(k, x)| (k.clone(), x.clone())).collect();
    let mut hs_rc = hs::HsRcState {
        space: s,
        krc: i("Krc"),
        nrc: i("Nrc"),
        nr: i("Nr"),
        servers: Default::default(),
    };
    hs_rc.provision_server(&i("SID"));
    let lw_rc = lw::LwRcState { space: s, krc: i("Krc"), nrc: i("Nrc") };
    let lee_rc = lee::LeeRcState { space: s, krc: i("Krc"), nrc: i("Nrc") };
    let li_rc = li::LiRcState { space: s, krc: i("Krc"), nrc: i("Nrc") };
    let cases = [
        (lw::lw_register_user(&lw_rc, &i("ID"), &i("PW")).to_smart_card(s), lw::symbolic_card()),
        (hs::hs_register_user(&hs_rc, &i("ID"), &i("PW"), &i("Nb")).to_smart_card(s), hs::symbolic_card()),
        (lee::lee_register_user(&lee_rc, &i("ID"), &i("PW"), &i("Nb")).to_smart_card(s), lee::symbolic_card()),
        (li::li_register_user(&li_rc, &i("ID"), &i("PW"), &i("Nb")).to_smart_card(s), li::symbolic_card()),
    ];
    for (card, symbolic) in cases {
        assert_eq!(card.tokens.len(), symbolic.len(), "{}", card.scheme);
        for (name, term) in symbolic {
            let got = term.evaluate_to_value(&s, &assignment).unwrap();
            assert_eq!(card.token(name).unwrap(), &got, "{} {name}", card.scheme);
        }
    }
}
