//! Li et al.: card tokens `(C_i, D_i, E_i, h(Nrc), Nb)`, servers hold
//! `h(Krc‖Nrc)` and their own `h(SID_j‖h(Nrc))`.
//!
//! The password-derived `A_i` is bound only by the card-side check
//! `C_i = h(ID‖h(Nrc)‖A_i)`; servers never see `C_i`.

use std::collections::BTreeMap;

use crate::harness::{
    CardError, Credentials, Endpoint, Initiator, Message, MessageTemplate, RejectReason, RoleKind,
    SessionOutcome, SmartCard,
};
use crate::schemes::hsiang_shih::masked_password;
use crate::schemes::{check_card, Deployment, Phase, SchemeId};
use crate::term::Term;
use crate::value::{Rng, Value, ValueSpace};

pub static LOGIN_REQUEST: MessageTemplate = MessageTemplate {
    label: "LoginRequest",
    fields: &["DID_i", "Pij", "M1", "M2"],
    sender: RoleKind::User,
    receiver: RoleKind::Server,
};

pub static SERVER_ACK: MessageTemplate = MessageTemplate {
    label: "ServerAck",
    fields: &["M3", "M4"],
    sender: RoleKind::Server,
    receiver: RoleKind::User,
};

pub static USER_ACK: MessageTemplate = MessageTemplate {
    label: "UserAck",
    fields: &["UA"],
    sender: RoleKind::User,
    receiver: RoleKind::Server,
};

pub static TEMPLATES: &[&MessageTemplate] = &[&LOGIN_REQUEST, &SERVER_ACK, &USER_ACK];

#[derive(Clone, Debug)]
pub struct LiRcState {
    pub space: ValueSpace,
    pub krc: Value,
    pub nrc: Value,
}

impl LiRcState {
    pub fn generate(space: ValueSpace, rng: &mut Rng) -> Self {
        LiRcState {
            space,
            krc: rng.next_nonce(space.width),
            nrc: rng.next_nonce(space.width),
        }
    }

    pub fn h_nrc(&self) -> Value {
        self.space.h(&[&self.nrc])
    }

    pub fn h_krc_nrc(&self) -> Value {
        self.space.h(&[&self.krc, &self.nrc])
    }

    pub fn provision_server(&self, sid: &Value) -> LiServerState {
        LiServerState {
            space: self.space,
            sid: sid.clone(),
            h_krc_nrc: self.h_krc_nrc(),
            h_sid_hnrc: self.space.h(&[sid, &self.h_nrc()]),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LiServerState {
    pub space: ValueSpace,
    pub sid: Value,
    pub h_krc_nrc: Value,
    pub h_sid_hnrc: Value,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LiCard {
    pub c: Value,
    pub d: Value,
    pub e: Value,
    pub h_nrc: Value,
    pub nb: Value,
}

impl LiCard {
    pub fn to_smart_card(&self, space: ValueSpace) -> SmartCard {
        SmartCard::new(SchemeId::Li, space)
            .with("C_i", self.c.clone())
            .with("D_i", self.d.clone())
            .with("E_i", self.e.clone())
            .with("h(Nrc)", self.h_nrc.clone())
            .with("Nb", self.nb.clone())
    }

    pub fn from_tokens(tokens: &BTreeMap<String, Value>) -> Result<Self, CardError> {
        let get = |k: &str| tokens.get(k).cloned().ok_or_else(|| CardError::MissingToken(k.into()));
        Ok(LiCard {
            c: get("C_i")?,
            d: get("D_i")?,
            e: get("E_i")?,
            h_nrc: get("h(Nrc)")?,
            nb: get("Nb")?,
        })
    }

    pub fn from_smart_card(card: &SmartCard) -> Result<Self, CardError> {
        check_card(card, SchemeId::Li)?;
        Self::from_tokens(&card.tokens)
    }
}

/// Centre side of registration; `a` is the user's `h(Nb ⊕ PW)`.
pub fn li_issue_card(rc: &LiRcState, id: &Value, a: &Value, nb: &Value) -> LiCard {
    let s = &rc.space;
    let h_nrc = rc.h_nrc();
    let hkn = rc.h_krc_nrc();
    let b = s.h(&[id, &rc.krc]);
    LiCard {
        c: s.h(&[id, &h_nrc, a]),
        d: s.h(&[&b, &hkn]),
        e: &b ^ &hkn,
        h_nrc,
        nb: nb.clone(),
    }
}

pub fn li_register_user(rc: &LiRcState, id: &Value, pw: &Value, nb: &Value) -> LiCard {
    li_issue_card(rc, id, &masked_password(&rc.space, nb, pw), nb)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LiLoginSecrets {
    pub a: Value,
    pub d: Value,
    pub e: Value,
    pub h_nrc: Value,
}

pub fn li_unlock(space: &ValueSpace, card: &LiCard, id: &Value, pw: &Value) -> Result<LiLoginSecrets, RejectReason> {
    let a = masked_password(space, &card.nb, pw);
    if space.h(&[id, &card.h_nrc, &a]) != card.c {
        return Err(RejectReason::LocalPasswordCheck);
    }
    Ok(LiLoginSecrets {
        a,
        d: card.d.clone(),
        e: card.e.clone(),
        h_nrc: card.h_nrc.clone(),
    })
}

#[derive(Clone, Debug)]
pub struct LiUserSession {
    pub sid: Value,
    pub ni: Value,
    pub a: Value,
    pub d: Value,
}

pub fn li_compose_login(space: &ValueSpace, sec: &LiLoginSecrets, sid: &Value, ni: &Value) -> (LiUserSession, Message) {
    let h_sid = space.h(&[sid, &sec.h_nrc]);
    let did = &sec.a ^ &space.h(&[&sec.d, sid, ni]);
    let pij = &sec.e ^ &space.h(&[&h_sid, ni]);
    let m1 = space.h(&[&pij, &did, &sec.d, ni]);
    let m2 = &h_sid ^ ni;
    let session = LiUserSession {
        sid: sid.clone(),
        ni: ni.clone(),
        a: sec.a.clone(),
        d: sec.d.clone(),
    };
    (session, LOGIN_REQUEST.build([did, pij, m1, m2]))
}

pub fn li_build_login(
    space: &ValueSpace,
    card: &LiCard,
    id: &Value,
    pw: &Value,
    sid: &Value,
    ni: &Value,
) -> Result<(LiUserSession, Message), RejectReason> {
    let sec = li_unlock(space, card, id, pw)?;
    Ok(li_compose_login(space, &sec, sid, ni))
}

/// Inverts an observed login request given the card's `D_i` and `h(Nrc)`:
/// returns `(N_i, A_i)`.
pub fn li_open_login(space: &ValueSpace, d: &Value, h_nrc: &Value, sid: &Value, login: &Message) -> Option<(Value, Value)> {
    let [did, _pij, _m1, m2] = LOGIN_REQUEST.unpack(login).ok()?;
    let ni = &m2 ^ &space.h(&[sid, h_nrc]);
    let a = &did ^ &space.h(&[d, sid, &ni]);
    Some((ni, a))
}

#[derive(Clone, Debug)]
pub struct LiServerSession {
    pub ni: Value,
    pub nj: Value,
    pub a: Value,
    pub d: Value,
}

pub fn li_server_verify_login(
    st: &LiServerState,
    msg: &Message,
    nj: &Value,
) -> Result<(LiServerSession, Message), RejectReason> {
    let s = &st.space;
    let [did, pij, m1, m2] = LOGIN_REQUEST.unpack(msg).map_err(|_| RejectReason::UnexpectedMessage)?;
    let ni = &m2 ^ &st.h_sid_hnrc;
    let e = &pij ^ &s.h(&[&st.h_sid_hnrc, &ni]);
    let b = &e ^ &st.h_krc_nrc;
    let d = s.h(&[&b, &st.h_krc_nrc]);
    let a = &did ^ &s.h(&[&d, &st.sid, &ni]);
    if s.h(&[&pij, &did, &d, &ni]) != m1 {
        return Err(RejectReason::LoginVerify);
    }
    let m3 = s.h(&[&d, &a, nj, &st.sid]);
    let m4 = &(&a ^ &ni) ^ nj;
    let session = LiServerSession {
        ni,
        nj: nj.clone(),
        a,
        d,
    };
    Ok((session, SERVER_ACK.build([m3, m4])))
}

pub fn li_user_finish(space: &ValueSpace, sess: &LiUserSession, ack: &Message) -> Result<(Message, Value), RejectReason> {
    let [m3, m4] = SERVER_ACK.unpack(ack).map_err(|_| RejectReason::UnexpectedMessage)?;
    let nj = &(&m4 ^ &sess.a) ^ &sess.ni;
    if space.h(&[&sess.d, &sess.a, &nj, &sess.sid]) != m3 {
        return Err(RejectReason::ServerAckVerify);
    }
    let ua = space.h(&[&sess.d, &sess.a, &sess.ni, &sess.sid]);
    let sk = space.h(&[&sess.d, &sess.a, &sess.ni, &nj, &sess.sid]);
    Ok((USER_ACK.build([ua]), sk))
}

pub fn li_server_finish(st: &LiServerState, sess: &LiServerSession, ua: &Message) -> Result<Value, RejectReason> {
    let s = &st.space;
    let [ua] = USER_ACK.unpack(ua).map_err(|_| RejectReason::UnexpectedMessage)?;
    if s.h(&[&sess.d, &sess.a, &sess.ni, &st.sid]) != ua {
        return Err(RejectReason::UserAckVerify);
    }
    Ok(s.h(&[&sess.d, &sess.a, &sess.ni, &sess.nj, &st.sid]))
}

pub struct LiUser {
    space: ValueSpace,
    creds: Credentials,
    card: LiCard,
    sid: Value,
    phase: Phase<LiUserSession>,
    outcome: SessionOutcome,
}

impl LiUser {
    pub fn new(space: ValueSpace, creds: Credentials, card: LiCard, sid: Value) -> Self {
        LiUser {
            space,
            creds,
            card,
            sid,
            phase: Phase::Idle,
            outcome: SessionOutcome::pending(),
        }
    }

    fn fail(&mut self, reason: RejectReason) -> RejectReason {
        self.phase = Phase::Done;
        self.outcome = SessionOutcome::rejected(reason);
        reason
    }
}

impl Endpoint for LiUser {
    fn role(&self) -> RoleKind {
        RoleKind::User
    }

    fn handle(&mut self, msg: &Message, _rng: &mut Rng) -> Result<Vec<Message>, RejectReason> {
        let Phase::Waiting(sess) = std::mem::replace(&mut self.phase, Phase::Done) else {
            return Err(self.fail(RejectReason::UnexpectedMessage));
        };
        match li_user_finish(&self.space, &sess, msg) {
            Ok((ua, sk)) => {
                self.outcome = SessionOutcome::accepted(sk);
                Ok(vec![ua])
            }
            Err(r) => Err(self.fail(r)),
        }
    }

    fn outcome(&self) -> SessionOutcome {
        self.outcome.clone()
    }
}

impl Initiator for LiUser {
    fn initiate(&mut self, rng: &mut Rng) -> Result<Message, RejectReason> {
        let ni = rng.next_nonce(self.space.width);
        match li_build_login(&self.space, &self.card, &self.creds.id, &self.creds.password, &self.sid, &ni) {
            Ok((sess, msg)) => {
                self.phase = Phase::Waiting(sess);
                Ok(msg)
            }
            Err(r) => Err(self.fail(r)),
        }
    }
}

pub struct LiServer {
    state: LiServerState,
    phase: Phase<LiServerSession>,
    outcome: SessionOutcome,
}

impl LiServer {
    pub fn new(state: LiServerState) -> Self {
        LiServer {
            state,
            phase: Phase::Idle,
            outcome: SessionOutcome::pending(),
        }
    }

    fn fail(&mut self, reason: RejectReason) -> RejectReason {
        self.phase = Phase::Done;
        self.outcome = SessionOutcome::rejected(reason);
        reason
    }
}

impl Endpoint for LiServer {
    fn role(&self) -> RoleKind {
        RoleKind::Server
    }

    fn handle(&mut self, msg: &Message, rng: &mut Rng) -> Result<Vec<Message>, RejectReason> {
        match std::mem::replace(&mut self.phase, Phase::Done) {
            Phase::Idle => {
                let nj = rng.next_nonce(self.state.space.width);
                match li_server_verify_login(&self.state, msg, &nj) {
                    Ok((sess, ack)) => {
                        self.phase = Phase::Waiting(sess);
                        Ok(vec![ack])
                    }
                    Err(r) => Err(self.fail(r)),
                }
            }
            Phase::Waiting(sess) => match li_server_finish(&self.state, &sess, msg) {
                Ok(sk) => {
                    self.outcome = SessionOutcome::accepted(sk);
                    Ok(Vec::new())
                }
                Err(r) => Err(self.fail(r)),
            },
            Phase::Done => Err(self.fail(RejectReason::UnexpectedMessage)),
        }
    }

    fn outcome(&self) -> SessionOutcome {
        self.outcome.clone()
    }
}

pub struct LiDeployment {
    pub rc: LiRcState,
    pub servers: BTreeMap<Value, LiServerState>,
}

impl LiDeployment {
    pub fn new(space: ValueSpace, rng: &mut Rng) -> Self {
        LiDeployment {
            rc: LiRcState::generate(space, rng),
            servers: BTreeMap::new(),
        }
    }
}

impl Deployment for LiDeployment {
    fn scheme(&self) -> SchemeId {
        SchemeId::Li
    }

    fn space(&self) -> ValueSpace {
        self.rc.space
    }

    fn register_server(&mut self, sid: &Value) {
        let st = self.rc.provision_server(sid);
        self.servers.insert(sid.clone(), st);
    }

    fn register_user(&self, creds: &Credentials, rng: &mut Rng) -> SmartCard {
        let nb = rng.next_nonce(self.rc.space.width);
        li_register_user(&self.rc, &creds.id, &creds.password, &nb).to_smart_card(self.rc.space)
    }

    fn user(&self, creds: &Credentials, card: &SmartCard, sid: &Value) -> Result<Box<dyn Initiator>, CardError> {
        let card = LiCard::from_smart_card(card)?;
        Ok(Box::new(LiUser::new(self.rc.space, creds.clone(), card, sid.clone())))
    }

    fn server(&self, sid: &Value) -> Option<Box<dyn Endpoint>> {
        self.servers
            .get(sid)
            .map(|st| Box::new(LiServer::new(st.clone())) as Box<dyn Endpoint>)
    }
}

/// Card contents over the atoms `ID`, `PW`, `Nb`, `Krc`, `Nrc`.
pub fn symbolic_card() -> Vec<(&'static str, Term)> {
    let (id, krc, nrc) = (Term::atom("ID"), Term::atom("Krc"), Term::atom("Nrc"));
    let a = crate::schemes::hsiang_shih::symbolic_mpw();
    let h_nrc = Term::h([nrc.clone()]);
    let hkn = Term::h([krc.clone(), nrc]);
    let b = Term::h([id.clone(), krc]);
    vec![
        ("C_i", Term::h([id, h_nrc.clone(), a])),
        ("D_i", Term::h([b.clone(), hkn.clone()])),
        ("E_i", Term::xor(b, hkn)),
        ("h(Nrc)", h_nrc),
        ("Nb", Term::atom("Nb")),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (ValueSpace, LiRcState, LiServerState, Value, Rng) {
        let s = ValueSpace::default();
        let mut rng = Rng::new(17);
        let rc = LiRcState::generate(s, &mut rng);
        let sid = s.encode_atom("S1").unwrap();
        let st = rc.provision_server(&sid);
        (s, rc, st, sid, rng)
    }

    #[test]
    fn round_trip_with_recomputed_fields() {
        let (s, rc, st, sid, mut rng) = setup();
        let (id, pw, nb) = (rng.next_nonce(32), rng.next_nonce(32), rng.next_nonce(32));
        let card = li_register_user(&rc, &id, &pw, &nb);
        let ni = rng.next_nonce(32);
        let (usess, login) = li_build_login(&s, &card, &id, &pw, &sid, &ni).unwrap();

        let hn = s.hash_bytes(rc.nrc.as_bytes());
        let hs = s.hash_bytes(&[sid.as_bytes(), hn.as_bytes()].concat());
        assert_eq!(login.field("M2").unwrap(), &(&hs ^ &ni));

        let nj = rng.next_nonce(32);
        let (ssess, ack) = li_server_verify_login(&st, &login, &nj).unwrap();
        assert_eq!(ssess.a, masked_password(&s, &nb, &pw));
        assert_eq!(ssess.d, card.d);
        let (ua, sk) = li_user_finish(&s, &usess, &ack).unwrap();
        assert_eq!(li_server_finish(&st, &ssess, &ua).unwrap(), sk);
    }

    #[test]
    fn card_and_login_reveal_a() {
        let (s, rc, _, sid, mut rng) = setup();
        let (id, pw, nb) = (rng.next_nonce(32), rng.next_nonce(32), rng.next_nonce(32));
        let card = li_register_user(&rc, &id, &pw, &nb);
        let ni = rng.next_nonce(32);
        let (_, login) = li_build_login(&s, &card, &id, &pw, &sid, &ni).unwrap();
        let (got_ni, a) = li_open_login(&s, &card.d, &card.h_nrc, &sid, &login).unwrap();
        assert_eq!(got_ni, ni);
        assert_eq!(a, masked_password(&s, &nb, &pw));
    }

    #[test]
    fn tampered_m1_and_m4_rejected() {
        let (s, rc, st, sid, mut rng) = setup();
        let (id, pw, nb) = (rng.next_nonce(32), rng.next_nonce(32), rng.next_nonce(32));
        let card = li_register_user(&rc, &id, &pw, &nb);
        let ni = rng.next_nonce(32);
        let nj = rng.next_nonce(32);
        let (usess, login) = li_build_login(&s, &card, &id, &pw, &sid, &ni).unwrap();
        let mut bad = login.clone();
        let m1 = bad.field_mut("M1").unwrap();
        *m1 = m1.flip_bit(100);
        assert_eq!(li_server_verify_login(&st, &bad, &nj).unwrap_err(), RejectReason::LoginVerify);

        let (_, mut ack) = li_server_verify_login(&st, &login, &nj).unwrap();
        let m4 = ack.field_mut("M4").unwrap();
        *m4 = m4.flip_bit(3);
        assert_eq!(li_user_finish(&s, &usess, &ack).unwrap_err(), RejectReason::ServerAckVerify);
    }

    #[test]
    fn wrong_password_fails_unlock() {
        let (s, rc, _, _, mut rng) = setup();
        let (id, pw, nb) = (rng.next_nonce(32), rng.next_nonce(32), rng.next_nonce(32));
        let card = li_register_user(&rc, &id, &pw, &nb);
        assert_eq!(li_unlock(&s, &card, &id, &id).unwrap_err(), RejectReason::LocalPasswordCheck);
    }
}
