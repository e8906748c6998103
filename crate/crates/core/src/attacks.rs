//! Scripted impersonation attacks.
//!
//! Each script talks to honest endpoints only through [`inject`], so a
//! verdict means a real server state machine accepted the forgery. The
//! scripts build their forged messages with the same `compose_login`
//! functions honest users run.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::harness::{
    extract_card, inject, record, AdversaryContext, Credentials, Endpoint, HarnessError, Message,
    RoleKind, Transcript,
};
use crate::schemes::hsiang_shih::{self as hs, HsCard, HsLoginSecrets};
use crate::schemes::lee::{self, LeeCard, LeeLoginSecrets};
use crate::schemes::li::{self, LiCard, LiLoginSecrets};
use crate::schemes::liao_wang::{self as lw, LwCard, LwLoginSecrets};
use crate::schemes::{deploy, run_honest_session, Deployment, DeploymentError, SchemeId};
use crate::value::{Rng, Value, ValueSpace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum AttackId {
    #[serde(rename = "lw-fictitious")]
    LwFictitious,
    #[serde(rename = "hs-fictitious")]
    HsFictitious,
    #[serde(rename = "lee-fictitious")]
    LeeFictitious,
    #[serde(rename = "li-fictitious")]
    LiFictitious,
    #[serde(rename = "li-stolen-owner")]
    LiStolenOwner,
}

impl AttackId {
    pub const ALL: [AttackId; 5] = [
        AttackId::LwFictitious,
        AttackId::HsFictitious,
        AttackId::LeeFictitious,
        AttackId::LiFictitious,
        AttackId::LiStolenOwner,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackId::LwFictitious => "lw-fictitious",
            AttackId::HsFictitious => "hs-fictitious",
            AttackId::LeeFictitious => "lee-fictitious",
            AttackId::LiFictitious => "li-fictitious",
            AttackId::LiStolenOwner => "li-stolen-owner",
        }
    }

    pub fn scheme(self) -> SchemeId {
        match self {
            AttackId::LwFictitious => SchemeId::LiaoWang,
            AttackId::HsFictitious => SchemeId::HsiangShih,
            AttackId::LeeFictitious => SchemeId::Lee,
            AttackId::LiFictitious | AttackId::LiStolenOwner => SchemeId::Li,
        }
    }

    pub fn for_scheme(scheme: SchemeId) -> impl Iterator<Item = AttackId> {
        AttackId::ALL.into_iter().filter(move |a| a.scheme() == scheme)
    }

    pub fn prerequisites(self) -> &'static str {
        match self {
            AttackId::LwFictitious | AttackId::HsFictitious | AttackId::LeeFictitious => {
                "adversary is a registered user holding its own card and password"
            }
            AttackId::LiFictitious => "an extracted card of some registered user",
            AttackId::LiStolenOwner => {
                "an extracted card plus one recorded login of its owner to any server"
            }
        }
    }

    /// Whether the attack relies on card tokens working for someone other
    /// than the party the card was issued to: either a centre secret read off
    /// a card, or a stolen card used without its password.
    pub fn exploits_card_tokens(self) -> bool {
        !matches!(self, AttackId::LeeFictitious)
    }
}

impl fmt::Display for AttackId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AttackId::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown attack `{s}`"))
    }
}

/// How the secret the attack depends on is obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// The scripted derivation.
    Genuine,
    /// Negative control: the derived secret or stolen token is replaced by
    /// an unrelated random value.
    RandomStandIn,
    /// Negative control: the derived secret or stolen token has one bit
    /// flipped.
    BitFlip,
}

impl Variant {
    fn apply(self, v: Value, rng: &mut Rng) -> Value {
        match self {
            Variant::Genuine => v,
            Variant::RandomStandIn => rng.next_nonce(v.width()),
            Variant::BitFlip => v.flip_bit(0),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AttackError {
    #[error("prerequisite missing: {0}")]
    PrerequisiteMissing(&'static str),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Deployment(#[from] DeploymentError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Step {
    pub id: String,
    pub action: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    pub scenario: AttackId,
    pub variant: Variant,
    pub seed: u64,
    pub server_accepted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adversary_key: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub server_key: Option<Value>,
    pub keys_match: bool,
    pub steps: Vec<Step>,
    /// Values the adversary derived along the way, by name.
    pub facts: BTreeMap<String, Value>,
    /// Stolen-owner only: the recovered `A_i` equals the victim's.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recovered_matches_victim: Option<bool>,
    pub transcript: Transcript,
}

impl Verdict {
    pub fn succeeded(&self) -> bool {
        self.server_accepted && self.keys_match
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("verdict serializes")
    }
}

/// Accumulates steps and outcome while a script runs.
struct Script {
    scenario: AttackId,
    variant: Variant,
    seed: u64,
    steps: Vec<Step>,
    facts: BTreeMap<String, Value>,
    transcript: Transcript,
}

impl Script {
    fn new(scenario: AttackId, variant: Variant, seed: u64, sid: &Value) -> Self {
        Script {
            scenario,
            variant,
            seed,
            steps: Vec::new(),
            facts: BTreeMap::new(),
            transcript: Transcript::new(scenario.scheme(), Some(seed), sid.clone()),
        }
    }

    fn step(&mut self, action: impl Into<String>) {
        let id = format!("A{}", self.steps.len() + 1);
        self.steps.push(Step {
            id,
            action: action.into(),
        });
    }

    /// Records a server-side step only if the server has accepted.
    fn step_if(&mut self, server: &dyn Endpoint, action: &str) {
        if server.outcome().is_accepted() {
            self.step(action);
        }
    }

    fn fact(&mut self, name: &str, v: &Value) {
        self.facts.insert(name.to_string(), v.clone());
    }

    fn finish(self, server: &dyn Endpoint, adversary_key: Option<Value>) -> Verdict {
        let outcome = server.outcome();
        let server_key = outcome.session_key.clone();
        let keys_match = matches!((&adversary_key, &server_key), (Some(a), Some(b)) if a == b);
        Verdict {
            scenario: self.scenario,
            variant: self.variant,
            seed: self.seed,
            server_accepted: outcome.is_accepted(),
            adversary_key,
            server_key,
            keys_match,
            steps: self.steps,
            facts: self.facts,
            recovered_matches_victim: None,
            transcript: self.transcript,
        }
    }
}

/// Sends `msg` to the server and relays any server↔centre traffic until the
/// server addresses the user. Returns that message, or `None` on rejection.
fn exchange(
    ctx: &mut AdversaryContext,
    transcript: &mut Transcript,
    msg: Message,
    server: &mut dyn Endpoint,
    mut rc: Option<&mut dyn Endpoint>,
) -> Result<Option<Message>, HarnessError> {
    let mut pending = vec![msg];
    while let Some(m) = pending.pop() {
        let target: &mut dyn Endpoint = match m.receiver {
            RoleKind::Server => server,
            RoleKind::RegistrationCentre => match rc.as_deref_mut() {
                Some(rc) => rc,
                None => {
                    return Err(HarnessError::NoRoute {
                        label: m.label,
                        receiver: m.receiver,
                    })
                }
            },
            RoleKind::User => {
                transcript.push(m.clone());
                return Ok(Some(m));
            }
            RoleKind::Adversary => {
                return Err(HarnessError::NoRoute {
                    label: m.label,
                    receiver: m.receiver,
                })
            }
        };
        let receipt = inject(ctx, transcript, m, target)?;
        if receipt.rejected.is_some() {
            return Ok(None);
        }
        pending.extend(receipt.replies.into_iter().rev());
    }
    Ok(None)
}

fn finish_with_ack(
    ctx: &mut AdversaryContext,
    script: &mut Script,
    server: &mut dyn Endpoint,
    ua: Message,
) -> Result<(), HarnessError> {
    inject(ctx, &mut script.transcript, ua, server)?;
    Ok(())
}

fn own_credentials(ctx: &AdversaryContext) -> Result<(Credentials, crate::harness::SmartCard), AttackError> {
    ctx.own_credentials
        .clone()
        .ok_or(AttackError::PrerequisiteMissing("adversary has no registered credentials"))
}

pub fn attack_lw_fictitious(
    ctx: &mut AdversaryContext,
    deployment: &dyn Deployment,
    sid: &Value,
    variant: Variant,
    seed: u64,
) -> Result<Verdict, AttackError> {
    let (creds, card) = own_credentials(ctx)?;
    let card = LwCard::from_smart_card(&card).map_err(DeploymentError::from)?;
    let s = deployment.space();
    let w = s.width;
    let mut server = deployment.server(sid).ok_or_else(|| DeploymentError::UnknownServer(sid.clone()))?;
    let mut sc = Script::new(AttackId::LwFictitious, variant, seed, sid);

    let h_krc = variant.apply(&card.b ^ &s.h(&[&creds.password]), &mut ctx.rng);
    sc.fact("h(Krc)", &h_krc);
    let n_pw = ctx.rng.next_nonce(w);
    let n_t = ctx.rng.next_nonce(w);
    let b_forged = &s.h(&[&n_pw]) ^ &h_krc;
    sc.step("h(Krc) = B_a xor h(PW_a) from own card; pick N_PWi, N_Ti; B^A = h(N_PWi) xor h(Krc)");

    let ni = ctx.rng.next_nonce(w);
    let secrets = LwLoginSecrets {
        t: n_t,
        h_pw: s.h(&[&n_pw]),
        b: b_forged,
        nrc: card.nrc.clone(),
    };
    let (sess, login) = lw::lw_compose_login(&s, &secrets, sid, &ni);
    sc.step("pick Ni; send login (DID_i, Pij, Qi, Ni) built from (N_Ti, N_PWi, B^A)");
    let Some(ack) = exchange(ctx, &mut sc.transcript, login, server.as_mut(), None)? else {
        return Ok(sc.finish(server.as_ref(), None));
    };
    sc.step("S_j recomputes B^A, accepts Qi and replies (SA, Nj)");

    let Ok((ua, sk)) = lw::lw_user_finish(&s, &sess, &ack) else {
        return Ok(sc.finish(server.as_ref(), None));
    };
    sc.step("check SA, send UA and derive SK");

    finish_with_ack(ctx, &mut sc, server.as_mut(), ua)?;
    sc.step_if(server.as_ref(), "S_j accepts UA");
    Ok(sc.finish(server.as_ref(), Some(sk)))
}

pub fn attack_hs_fictitious(
    ctx: &mut AdversaryContext,
    deployment: &dyn Deployment,
    sid: &Value,
    variant: Variant,
    seed: u64,
) -> Result<Verdict, AttackError> {
    let (creds, card) = own_credentials(ctx)?;
    let card = HsCard::from_smart_card(&card).map_err(DeploymentError::from)?;
    let s = deployment.space();
    let w = s.width;
    let mut server = deployment.server(sid).ok_or_else(|| DeploymentError::UnknownServer(sid.clone()))?;
    let mut rc = deployment.rc();
    let mut sc = Script::new(AttackId::HsFictitious, variant, seed, sid);

    let mpw_a = hs::masked_password(&s, &card.nb, &creds.password);
    let a_a = &card.b ^ &mpw_a;
    let key = variant.apply(&a_a ^ &card.r, &mut ctx.rng);
    sc.fact("h(Krc xor Nr)", &key);
    let n_r = ctx.rng.next_nonce(w);
    let n_spw = ctx.rng.next_nonce(w);
    let n_t = ctx.rng.next_nonce(w);
    let a_forged = &n_r ^ &key;
    let b_forged = &a_forged ^ &n_spw;
    sc.step(
        "h(Krc xor Nr) = B_a xor h(Nb_a xor PW_a) xor R_a from own card; pick N_Ri, N_SPWi, N_Ti; \
         A^A = N_Ri xor h(Krc xor Nr); B^A = A^A xor N_SPWi",
    );

    let ni = ctx.rng.next_nonce(w);
    let secrets = HsLoginSecrets {
        t: n_t,
        mpw: n_spw,
        a: a_forged,
        b: b_forged,
        r: n_r,
    };
    let (sess, login) = hs::hs_compose_login(&s, &secrets, sid, &ni);
    sc.step("pick Ni; send login (DID_i, Pij, Q_i, Di, Co, Ni) built from the forged values");
    let reply = exchange(
        ctx,
        &mut sc.transcript,
        login,
        server.as_mut(),
        rc.as_mut().map(|r| r.as_mut() as &mut dyn Endpoint),
    )?;
    if sc.transcript.find(hs::RC_REQUEST.label).is_some() {
        sc.step("S_j forwards (Mjr, SID_j, Di, Co, Ni) to RC");
    }
    if sc.transcript.find(hs::RC_ACK.label).is_some() {
        sc.step("RC recovers A^A, accepts Co and replies (C1, C2, Nrj)");
    }
    let Some(ack) = reply else {
        return Ok(sc.finish(server.as_ref(), None));
    };
    sc.step("S_j accepts C1, recovers A^A and B^A, accepts Q_i and replies (SA, Nj)");

    let Ok((ua, sk)) = hs::hs_user_finish(&s, &sess, &ack) else {
        return Ok(sc.finish(server.as_ref(), None));
    };
    sc.step("check SA, send UA and derive SK");
    finish_with_ack(ctx, &mut sc, server.as_mut(), ua)?;
    sc.step_if(server.as_ref(), "S_j accepts UA");
    Ok(sc.finish(server.as_ref(), Some(sk)))
}

pub fn attack_lee_fictitious(
    ctx: &mut AdversaryContext,
    deployment: &dyn Deployment,
    sid: &Value,
    variant: Variant,
    seed: u64,
) -> Result<Verdict, AttackError> {
    let (creds, card) = own_credentials(ctx)?;
    let card = LeeCard::from_smart_card(&card).map_err(DeploymentError::from)?;
    let s = deployment.space();
    let w = s.width;
    let mut server = deployment.server(sid).ok_or_else(|| DeploymentError::UnknownServer(sid.clone()))?;
    let mut sc = Script::new(AttackId::LeeFictitious, variant, seed, sid);

    let n_t = ctx.rng.next_nonce(w);
    let mpw_a = hs::masked_password(&s, &card.nb, &creds.password);
    let b_a = variant.apply(card.b.clone(), &mut ctx.rng);
    sc.fact("B_a", &b_a);
    sc.step("pick N_Ti in place of T_i; reuse own h(Nb_a xor PW_a), B_a and h(Nrc)");

    let ni = ctx.rng.next_nonce(w);
    let secrets = LeeLoginSecrets {
        t: n_t,
        mpw: mpw_a,
        b: b_a,
        h_nrc: card.h_nrc.clone(),
    };
    let (sess, login) = lee::lee_compose_login(&s, &secrets, sid, &ni);
    sc.step("pick Ni; send login (DID_i, Pij, Q_i, Ni) built from N_Ti");
    let Some(ack) = exchange(ctx, &mut sc.transcript, login, server.as_mut(), None)? else {
        return Ok(sc.finish(server.as_ref(), None));
    };
    sc.step("S_j recovers T_i = N_Ti, rebuilds B_a, accepts Q_i and replies (SA, Nj)");

    let Ok((ua, sk)) = lee::lee_user_finish(&s, &sess, &ack) else {
        return Ok(sc.finish(server.as_ref(), None));
    };
    sc.step("check SA, send UA and derive SK");
    finish_with_ack(ctx, &mut sc, server.as_mut(), ua)?;
    sc.step_if(server.as_ref(), "S_j accepts UA");
    Ok(sc.finish(server.as_ref(), Some(sk)))
}

fn stolen_li_card(ctx: &AdversaryContext) -> Result<LiCard, AttackError> {
    let extracted = ctx
        .extracted_cards()
        .iter()
        .rev()
        .find(|c| c.scheme == SchemeId::Li)
        .ok_or(AttackError::PrerequisiteMissing("no extracted card"))?;
    LiCard::from_tokens(&extracted.tokens).map_err(|e| AttackError::Deployment(e.into()))
}

pub fn attack_li_fictitious(
    ctx: &mut AdversaryContext,
    deployment: &dyn Deployment,
    sid: &Value,
    variant: Variant,
    seed: u64,
) -> Result<Verdict, AttackError> {
    let card = stolen_li_card(ctx)?;
    let s = deployment.space();
    let w = s.width;
    let mut server = deployment.server(sid).ok_or_else(|| DeploymentError::UnknownServer(sid.clone()))?;
    let mut sc = Script::new(AttackId::LiFictitious, variant, seed, sid);

    let d = variant.apply(card.d.clone(), &mut ctx.rng);
    sc.fact("D_i", &d);
    let n_a = ctx.rng.next_nonce(w);
    let ni = ctx.rng.next_nonce(w);
    sc.step("pick N_Ai in place of A_i; use D_i, E_i, h(Nrc) from the stolen card");

    let secrets = LiLoginSecrets {
        a: n_a,
        d,
        e: card.e.clone(),
        h_nrc: card.h_nrc.clone(),
    };
    let (sess, login) = li::li_compose_login(&s, &secrets, sid, &ni);
    sc.step("pick Ni; send login (DID_i, Pij, M1, M2) built from (N_Ai, D_i, E_i)");
    let Some(ack) = exchange(ctx, &mut sc.transcript, login, server.as_mut(), None)? else {
        return Ok(sc.finish(server.as_ref(), None));
    };
    sc.step("S_j rebuilds D_i from E_i, recovers N_Ai, accepts M1 and replies (M3, M4)");

    let Ok((ua, sk)) = li::li_user_finish(&s, &sess, &ack) else {
        return Ok(sc.finish(server.as_ref(), None));
    };
    sc.step("recover Nj from M4, check M3, send UA and derive SK");
    finish_with_ack(ctx, &mut sc, server.as_mut(), ua)?;
    sc.step_if(server.as_ref(), "S_j accepts UA");
    Ok(sc.finish(server.as_ref(), Some(sk)))
}

pub fn attack_li_stolen_owner(
    ctx: &mut AdversaryContext,
    deployment: &dyn Deployment,
    sid: &Value,
    variant: Variant,
    seed: u64,
) -> Result<Verdict, AttackError> {
    let card = stolen_li_card(ctx)?;
    let (sid_k, recorded) = ctx
        .recorded
        .iter()
        .rev()
        .filter(|t| t.scheme == SchemeId::Li)
        .find_map(|t| t.find(li::LOGIN_REQUEST.label).map(|m| (t.server.clone(), m.clone())))
        .ok_or(AttackError::PrerequisiteMissing("no recorded login of the card owner"))?;
    let s = deployment.space();
    let w = s.width;
    let mut server = deployment.server(sid).ok_or_else(|| DeploymentError::UnknownServer(sid.clone()))?;
    let mut sc = Script::new(AttackId::LiStolenOwner, variant, seed, sid);

    let d = variant.apply(card.d.clone(), &mut ctx.rng);
    let (_, a_i) = li::li_open_login(&s, &d, &card.h_nrc, &sid_k, &recorded)
        .ok_or(AttackError::PrerequisiteMissing("recorded message is not a login request"))?;
    sc.step("N_ik = M2k xor h(SID_k || h(Nrc)); A_i = DID_ik xor h(D_i || SID_k || N_ik)");
    sc.fact("A_i", &a_i);

    let ni = ctx.rng.next_nonce(w);
    let secrets = LiLoginSecrets {
        a: a_i,
        d,
        e: card.e.clone(),
        h_nrc: card.h_nrc.clone(),
    };
    let (sess, login) = li::li_compose_login(&s, &secrets, sid, &ni);
    sc.step("pick Ni; send login (DID_i, Pij, M1, M2) as U_i to S_j and finish the handshake as specified");
    let Some(ack) = exchange(ctx, &mut sc.transcript, login, server.as_mut(), None)? else {
        return Ok(sc.finish(server.as_ref(), None));
    };
    let Ok((ua, sk)) = li::li_user_finish(&s, &sess, &ack) else {
        return Ok(sc.finish(server.as_ref(), None));
    };
    finish_with_ack(ctx, &mut sc, server.as_mut(), ua)?;
    Ok(sc.finish(server.as_ref(), Some(sk)))
}

pub const TARGET_SERVER: &str = "S1";
pub const OTHER_SERVER: &str = "S2";

/// Builds a fresh deployment with servers `S1`, `S2`, provisions the
/// adversary's prerequisites and runs `attack` against `S1`.
pub fn run_attack(attack: AttackId, variant: Variant, space: ValueSpace, seed: u64) -> Result<Verdict, AttackError> {
    let mut rng = Rng::new(seed);
    let mut deployment = deploy(attack.scheme(), space, &mut rng);
    let sid_j = space.encode_atom(TARGET_SERVER).expect("short label");
    let sid_k = space.encode_atom(OTHER_SERVER).expect("short label");
    deployment.register_server(&sid_j);
    deployment.register_server(&sid_k);

    let mut ctx = AdversaryContext::new(Rng::new(rng.next_u64()));
    let mut victim_a = None;
    match attack {
        AttackId::LwFictitious | AttackId::HsFictitious | AttackId::LeeFictitious => {
            let creds = Credentials::random(&space, &mut rng);
            let card = deployment.register_user(&creds, &mut rng);
            ctx.own_credentials = Some((creds, card));
        }
        AttackId::LiFictitious | AttackId::LiStolenOwner => {
            let victim = Credentials::random(&space, &mut rng);
            let card = deployment.register_user(&victim, &mut rng);
            if attack == AttackId::LiStolenOwner {
                let run = run_honest_session(deployment.as_ref(), &victim, &card, &sid_k, &mut rng)?;
                record(&mut ctx, run.transcript);
                victim_a = Some(hs::masked_password(&space, card.token("Nb").expect("li card"), &victim.password));
            }
            extract_card(&mut ctx, &card);
        }
    }

    let mut verdict = run_script(attack, &mut ctx, deployment.as_ref(), &sid_j, variant, seed)?;
    if let Some(a) = victim_a {
        verdict.recovered_matches_victim = Some(verdict.facts.get("A_i") == Some(&a));
    }
    Ok(verdict)
}

pub fn run_script(
    attack: AttackId,
    ctx: &mut AdversaryContext,
    deployment: &dyn Deployment,
    sid: &Value,
    variant: Variant,
    seed: u64,
) -> Result<Verdict, AttackError> {
    match attack {
        AttackId::LwFictitious => attack_lw_fictitious(ctx, deployment, sid, variant, seed),
        AttackId::HsFictitious => attack_hs_fictitious(ctx, deployment, sid, variant, seed),
        AttackId::LeeFictitious => attack_lee_fictitious(ctx, deployment, sid, variant, seed),
        AttackId::LiFictitious => attack_li_fictitious(ctx, deployment, sid, variant, seed),
        AttackId::LiStolenOwner => attack_li_stolen_owner(ctx, deployment, sid, variant, seed),
    }
}

/// Outcome of substituting a random value for one user-side token.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SubstitutionProbe {
    pub scheme: SchemeId,
    /// The token replaced by a random value.
    pub substituted: &'static str,
    pub trials: usize,
    pub accepted: usize,
}

impl SubstitutionProbe {
    pub fn found_forgery(&self) -> bool {
        self.accepted > 0
    }
}

/// Replaces one token of an otherwise genuine login by fresh random values
/// and counts how often the verifying side still accepts. Only the login
/// verification is exercised; the handshake afterwards is covered by the
/// attack scripts.
pub fn substitution_probe(scheme: SchemeId, space: ValueSpace, trials: usize, seed: u64) -> SubstitutionProbe {
    let mut rng = Rng::new(seed);
    let w = space.width;
    let sid = space.encode_atom(TARGET_SERVER).expect("short label");
    let c = Credentials::random(&space, &mut rng);
    let mut accepted = 0;
    let substituted = match scheme {
        SchemeId::LiaoWang => {
            let rc = lw::LwRcState::generate(space, &mut rng);
            let st = rc.provision_server(&sid);
            let card = lw::lw_register_user(&rc, &c.id, &c.password);
            let genuine = lw::lw_unlock(&space, &card, &c.id, &c.password).expect("own card");
            for _ in 0..trials {
                let sec = LwLoginSecrets {
                    t: rng.next_nonce(w),
                    ..genuine.clone()
                };
                let (_, login) = lw::lw_compose_login(&space, &sec, &sid, &rng.next_nonce(w));
                accepted += lw::lw_server_verify_login(&st, &login, &rng.next_nonce(w)).is_ok() as usize;
            }
            "T_i"
        }
        SchemeId::HsiangShih => {
            let mut rc = hs::HsRcState::generate(space, &mut rng);
            let st = rc.provision_server(&sid);
            let nb = rng.next_nonce(w);
            let card = hs::hs_register_user(&rc, &c.id, &c.password, &nb);
            let genuine = hs::hs_unlock(&space, &card, &c.id, &c.password).expect("own card");
            let key = &genuine.a ^ &genuine.r;
            for _ in 0..trials {
                let r = rng.next_nonce(w);
                let a = &r ^ &key;
                let sec = HsLoginSecrets {
                    b: &a ^ &genuine.mpw,
                    a,
                    r,
                    ..genuine.clone()
                };
                let (_, login) = hs::hs_compose_login(&space, &sec, &sid, &rng.next_nonce(w));
                let ok = hs::hs_server_forward(&st, &login, &rng.next_nonce(w)).and_then(|(pending, fwd)| {
                    let ack = hs::hs_rc_verify(&rc, &fwd, &rng.next_nonce(w))?;
                    hs::hs_server_verify_login(&st, &pending, &ack, &rng.next_nonce(w))
                });
                accepted += ok.is_ok() as usize;
            }
            "R_i"
        }
        SchemeId::Lee => {
            let rc = lee::LeeRcState::generate(space, &mut rng);
            let st = rc.provision_server(&sid);
            let nb = rng.next_nonce(w);
            let card = lee::lee_register_user(&rc, &c.id, &c.password, &nb);
            let genuine = lee::lee_unlock(&space, &card, &c.id, &c.password).expect("own card");
            for _ in 0..trials {
                let sec = LeeLoginSecrets {
                    t: rng.next_nonce(w),
                    ..genuine.clone()
                };
                let (_, login) = lee::lee_compose_login(&space, &sec, &sid, &rng.next_nonce(w));
                accepted += lee::lee_server_verify_login(&st, &login, &rng.next_nonce(w)).is_ok() as usize;
            }
            "T_i"
        }
        SchemeId::Li => {
            let rc = li::LiRcState::generate(space, &mut rng);
            let st = rc.provision_server(&sid);
            let nb = rng.next_nonce(w);
            let card = li::li_register_user(&rc, &c.id, &c.password, &nb);
            let genuine = li::li_unlock(&space, &card, &c.id, &c.password).expect("own card");
            for _ in 0..trials {
                let sec = LiLoginSecrets {
                    a: rng.next_nonce(w),
                    ..genuine.clone()
                };
                let (_, login) = li::li_compose_login(&space, &sec, &sid, &rng.next_nonce(w));
                accepted += li::li_server_verify_login(&st, &login, &rng.next_nonce(w)).is_ok() as usize;
            }
            "A_i"
        }
    };
    SubstitutionProbe {
        scheme,
        substituted,
        trials,
        accepted,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_attack_succeeds_at_seed_7() {
        for a in AttackId::ALL {
            let v = run_attack(a, Variant::Genuine, ValueSpace::default(), 7).unwrap();
            assert!(v.succeeded(), "{a}: {:?}", v.transcript.outcomes);
        }
    }

    #[test]
    fn step_counts() {
        let counts = [5, 7, 5, 5, 2];
        for (a, n) in AttackId::ALL.into_iter().zip(counts) {
            let v = run_attack(a, Variant::Genuine, ValueSpace::default(), 1).unwrap();
            assert_eq!(v.steps.len(), n, "{a}");
            assert_eq!(v.steps[0].id, "A1");
        }
    }

    #[test]
    fn controls_are_rejected() {
        for a in AttackId::ALL {
            for variant in [Variant::RandomStandIn, Variant::BitFlip] {
                let v = run_attack(a, variant, ValueSpace::default(), 7).unwrap();
                assert!(!v.server_accepted, "{a} {variant:?}");
            }
        }
    }

    #[test]
    fn hs_control_fails_at_centre() {
        let v = run_attack(AttackId::HsFictitious, Variant::RandomStandIn, ValueSpace::default(), 3).unwrap();
        assert_eq!(v.transcript.labels(), ["LoginRequest", "RcRequest"]);
        let genuine = run_attack(AttackId::HsFictitious, Variant::Genuine, ValueSpace::default(), 3).unwrap();
        assert_eq!(
            genuine.transcript.labels(),
            ["LoginRequest", "RcRequest", "RcAck", "ServerAck", "UserAck"]
        );
    }

    #[test]
    fn stolen_owner_recovers_victim_token() {
        let v = run_attack(AttackId::LiStolenOwner, Variant::Genuine, ValueSpace::default(), 7).unwrap();
        assert_eq!(v.recovered_matches_victim, Some(true));
    }

    #[test]
    fn missing_prerequisites() {
        let space = ValueSpace::default();
        let mut rng = Rng::new(0);
        for a in AttackId::ALL {
            let mut d = deploy(a.scheme(), space, &mut rng);
            let sid = space.encode_atom("S1").unwrap();
            d.register_server(&sid);
            let mut ctx = AdversaryContext::new(Rng::new(1));
            let err = run_script(a, &mut ctx, d.as_ref(), &sid, Variant::Genuine, 0).unwrap_err();
            assert!(matches!(err, AttackError::PrerequisiteMissing(_)), "{a}");
        }
        // card alone is not enough for the stolen-owner attack
        let mut d = deploy(SchemeId::Li, space, &mut rng);
        let sid = space.encode_atom("S1").unwrap();
        d.register_server(&sid);
        let victim = Credentials::random(&space, &mut rng);
        let card = d.register_user(&victim, &mut rng);
        let mut ctx = AdversaryContext::new(Rng::new(1));
        extract_card(&mut ctx, &card);
        assert!(matches!(
            attack_li_stolen_owner(&mut ctx, d.as_ref(), &sid, Variant::Genuine, 0),
            Err(AttackError::PrerequisiteMissing(_))
        ));
    }

    #[test]
    fn probes_find_forgeries() {
        for s in SchemeId::ALL {
            let p = substitution_probe(s, ValueSpace::default(), 20, 0);
            assert_eq!(p.accepted, p.trials, "{s}");
        }
    }
}
