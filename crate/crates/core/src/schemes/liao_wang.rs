//! Liao–Wang: three-message login with card tokens `(V_i, B_i, H_i, Nrc)`.
//!
//! Servers hold `Nrc` and `h(Krc)`; every server-side equation uses only
//! these two values.

use std::collections::BTreeMap;

use crate::harness::{
    CardError, Credentials, Endpoint, Initiator, Message, MessageTemplate, RejectReason, RoleKind,
    SessionOutcome, SmartCard,
};
use crate::schemes::{check_card, Deployment, Phase, SchemeId};
use crate::term::Term;
use crate::value::{Rng, Value, ValueSpace};

pub static LOGIN_REQUEST: MessageTemplate = MessageTemplate {
    label: "LoginRequest",
    fields: &["DID_i", "Pij", "Qi", "Ni"],
    sender: RoleKind::User,
    receiver: RoleKind::Server,
};

pub static SERVER_ACK: MessageTemplate = MessageTemplate {
    label: "ServerAck",
    fields: &["SA", "Nj"],
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
pub struct LwRcState {
    pub space: ValueSpace,
    pub krc: Value,
    pub nrc: Value,
}

impl LwRcState {
    pub fn generate(space: ValueSpace, rng: &mut Rng) -> Self {
        LwRcState {
            space,
            krc: rng.next_nonce(space.width),
            nrc: rng.next_nonce(space.width),
        }
    }

    pub fn provision_server(&self, sid: &Value) -> LwServerState {
        LwServerState {
            space: self.space,
            nrc: self.nrc.clone(),
            h_krc: self.space.h(&[&self.krc]),
            sid: sid.clone(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LwServerState {
    pub space: ValueSpace,
    pub nrc: Value,
    pub h_krc: Value,
    pub sid: Value,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LwCard {
    pub v: Value,
    pub b: Value,
    pub h: Value,
    pub nrc: Value,
}

impl LwCard {
    pub fn to_smart_card(&self, space: ValueSpace) -> SmartCard {
        SmartCard::new(SchemeId::LiaoWang, space)
            .with("V_i", self.v.clone())
            .with("B_i", self.b.clone())
            .with("H_i", self.h.clone())
            .with("Nrc", self.nrc.clone())
    }

    pub fn from_tokens(tokens: &BTreeMap<String, Value>) -> Result<Self, CardError> {
        let get = |k: &str| tokens.get(k).cloned().ok_or_else(|| CardError::MissingToken(k.into()));
        Ok(LwCard {
            v: get("V_i")?,
            b: get("B_i")?,
            h: get("H_i")?,
            nrc: get("Nrc")?,
        })
    }

    pub fn from_smart_card(card: &SmartCard) -> Result<Self, CardError> {
        check_card(card, SchemeId::LiaoWang)?;
        Self::from_tokens(&card.tokens)
    }
}

pub fn lw_register_user(rc: &LwRcState, id: &Value, pw: &Value) -> LwCard {
    let s = &rc.space;
    let t = s.h(&[id, &rc.krc]);
    LwCard {
        v: &t ^ &s.h(&[id, pw]),
        b: &s.h(&[pw]) ^ &s.h(&[&rc.krc]),
        h: s.h(&[&t]),
        nrc: rc.nrc.clone(),
    }
}

/// User-side values that enter the login equations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LwLoginSecrets {
    pub t: Value,
    pub h_pw: Value,
    pub b: Value,
    pub nrc: Value,
}

/// Card unlock: recovers `T_i` and checks it against `H_i`.
pub fn lw_unlock(space: &ValueSpace, card: &LwCard, id: &Value, pw: &Value) -> Result<LwLoginSecrets, RejectReason> {
    let t = &card.v ^ &space.h(&[id, pw]);
    if space.h(&[&t]) != card.h {
        return Err(RejectReason::LocalPasswordCheck);
    }
    Ok(LwLoginSecrets {
        t,
        h_pw: space.h(&[pw]),
        b: card.b.clone(),
        nrc: card.nrc.clone(),
    })
}

#[derive(Clone, Debug)]
pub struct LwUserSession {
    pub sid: Value,
    pub ni: Value,
    pub b: Value,
    pub nrc: Value,
}

/// The login equations, applied to whatever secrets the caller holds.
pub fn lw_compose_login(space: &ValueSpace, secrets: &LwLoginSecrets, sid: &Value, ni: &Value) -> (LwUserSession, Message) {
    let did = &secrets.h_pw ^ &space.h(&[&secrets.t, &secrets.nrc, ni]);
    let pij = &secrets.t ^ &space.h(&[&secrets.nrc, ni, sid]);
    let qi = space.h(&[&secrets.b, &secrets.nrc, ni]);
    let session = LwUserSession {
        sid: sid.clone(),
        ni: ni.clone(),
        b: secrets.b.clone(),
        nrc: secrets.nrc.clone(),
    };
    (session, LOGIN_REQUEST.build([did, pij, qi, ni.clone()]))
}

pub fn lw_build_login(
    space: &ValueSpace,
    card: &LwCard,
    id: &Value,
    pw: &Value,
    sid: &Value,
    ni: &Value,
) -> Result<(LwUserSession, Message), RejectReason> {
    let secrets = lw_unlock(space, card, id, pw)?;
    Ok(lw_compose_login(space, &secrets, sid, ni))
}

#[derive(Clone, Debug)]
pub struct LwServerSession {
    pub ni: Value,
    pub nj: Value,
    pub t: Value,
    pub h_pw: Value,
    pub b: Value,
}

pub fn lw_server_verify_login(
    st: &LwServerState,
    msg: &Message,
    nj: &Value,
) -> Result<(LwServerSession, Message), RejectReason> {
    let s = &st.space;
    let [did, pij, qi, ni] = LOGIN_REQUEST.unpack(msg).map_err(|_| RejectReason::UnexpectedMessage)?;
    let t = &pij ^ &s.h(&[&st.nrc, &ni, &st.sid]);
    let h_pw = &did ^ &s.h(&[&t, &st.nrc, &ni]);
    let b = &h_pw ^ &st.h_krc;
    if s.h(&[&b, &st.nrc, &ni]) != qi {
        return Err(RejectReason::LoginVerify);
    }
    let sa = s.h(&[&b, &ni, &st.nrc, &st.sid]);
    let session = LwServerSession {
        ni,
        nj: nj.clone(),
        t,
        h_pw,
        b,
    };
    Ok((session, SERVER_ACK.build([sa, nj.clone()])))
}

/// Verifies `SA` and returns `(UserAck, SK)`.
pub fn lw_user_finish(space: &ValueSpace, sess: &LwUserSession, ack: &Message) -> Result<(Message, Value), RejectReason> {
    let [sa, nj] = SERVER_ACK.unpack(ack).map_err(|_| RejectReason::UnexpectedMessage)?;
    if space.h(&[&sess.b, &sess.ni, &sess.nrc, &sess.sid]) != sa {
        return Err(RejectReason::ServerAckVerify);
    }
    let ua = space.h(&[&sess.b, &nj, &sess.nrc, &sess.sid]);
    let sk = space.h(&[&sess.b, &sess.ni, &nj, &sess.nrc, &sess.sid]);
    Ok((USER_ACK.build([ua]), sk))
}

pub fn lw_server_finish(st: &LwServerState, sess: &LwServerSession, ua: &Message) -> Result<Value, RejectReason> {
    let s = &st.space;
    let [ua] = USER_ACK.unpack(ua).map_err(|_| RejectReason::UnexpectedMessage)?;
    if s.h(&[&sess.b, &sess.nj, &st.nrc, &st.sid]) != ua {
        return Err(RejectReason::UserAckVerify);
    }
    Ok(s.h(&[&sess.b, &sess.ni, &sess.nj, &st.nrc, &st.sid]))
}

pub struct LwUser {
    space: ValueSpace,
    creds: Credentials,
    card: LwCard,
    sid: Value,
    phase: Phase<LwUserSession>,
    outcome: SessionOutcome,
}

impl LwUser {
    pub fn new(space: ValueSpace, creds: Credentials, card: LwCard, sid: Value) -> Self {
        LwUser {
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

impl Endpoint for LwUser {
    fn role(&self) -> RoleKind {
        RoleKind::User
    }

    fn handle(&mut self, msg: &Message, _rng: &mut Rng) -> Result<Vec<Message>, RejectReason> {
        let Phase::Waiting(sess) = std::mem::replace(&mut self.phase, Phase::Done) else {
            return Err(self.fail(RejectReason::UnexpectedMessage));
        };
        match lw_user_finish(&self.space, &sess, msg) {
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

impl Initiator for LwUser {
    fn initiate(&mut self, rng: &mut Rng) -> Result<Message, RejectReason> {
        let ni = rng.next_nonce(self.space.width);
        match lw_build_login(&self.space, &self.card, &self.creds.id, &self.creds.password, &self.sid, &ni) {
            Ok((sess, msg)) => {
                self.phase = Phase::Waiting(sess);
                Ok(msg)
            }
            Err(r) => Err(self.fail(r)),
        }
    }
}

pub struct LwServer {
    state: LwServerState,
    phase: Phase<LwServerSession>,
    outcome: SessionOutcome,
}

impl LwServer {
    pub fn new(state: LwServerState) -> Self {
        LwServer {
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

impl Endpoint for LwServer {
    fn role(&self) -> RoleKind {
        RoleKind::Server
    }

    fn handle(&mut self, msg: &Message, rng: &mut Rng) -> Result<Vec<Message>, RejectReason> {
        match std::mem::replace(&mut self.phase, Phase::Done) {
            Phase::Idle => {
                let nj = rng.next_nonce(self.state.space.width);
                match lw_server_verify_login(&self.state, msg, &nj) {
                    Ok((sess, ack)) => {
                        self.phase = Phase::Waiting(sess);
                        Ok(vec![ack])
                    }
                    Err(r) => Err(self.fail(r)),
                }
            }
            Phase::Waiting(sess) => match lw_server_finish(&self.state, &sess, msg) {
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

pub struct LwDeployment {
    pub rc: LwRcState,
    pub servers: BTreeMap<Value, LwServerState>,
}

impl LwDeployment {
    pub fn new(space: ValueSpace, rng: &mut Rng) -> Self {
        LwDeployment {
            rc: LwRcState::generate(space, rng),
            servers: BTreeMap::new(),
        }
    }
}

impl Deployment for LwDeployment {
    fn scheme(&self) -> SchemeId {
        SchemeId::LiaoWang
    }

    fn space(&self) -> ValueSpace {
        self.rc.space
    }

    fn register_server(&mut self, sid: &Value) {
        let st = self.rc.provision_server(sid);
        self.servers.insert(sid.clone(), st);
    }

    fn register_user(&self, creds: &Credentials, _rng: &mut Rng) -> SmartCard {
        lw_register_user(&self.rc, &creds.id, &creds.password).to_smart_card(self.rc.space)
    }

    fn user(&self, creds: &Credentials, card: &SmartCard, sid: &Value) -> Result<Box<dyn Initiator>, CardError> {
        let card = LwCard::from_smart_card(card)?;
        Ok(Box::new(LwUser::new(self.rc.space, creds.clone(), card, sid.clone())))
    }

    fn server(&self, sid: &Value) -> Option<Box<dyn Endpoint>> {
        self.servers
            .get(sid)
            .map(|st| Box::new(LwServer::new(st.clone())) as Box<dyn Endpoint>)
    }
}

/// Card contents over the atoms `ID`, `PW`, `Krc`, `Nrc`.
pub fn symbolic_card() -> Vec<(&'static str, Term)> {
    let (id, pw, krc) = (Term::atom("ID"), Term::atom("PW"), Term::atom("Krc"));
    let t = Term::h([id.clone(), krc.clone()]);
    vec![
        ("V_i", Term::xor(t.clone(), Term::h([id, pw.clone()]))),
        ("B_i", Term::xor(Term::h([pw]), Term::h([krc]))),
        ("H_i", Term::h([t])),
        ("Nrc", Term::atom("Nrc")),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (ValueSpace, LwRcState, Rng) {
        let space = ValueSpace::default();
        let mut rng = Rng::new(7);
        let rc = LwRcState::generate(space, &mut rng);
        (space, rc, rng)
    }

    #[test]
    fn card_reveals_hashed_krc_with_password() {
        let (s, rc, mut rng) = setup();
        let id = rng.next_nonce(32);
        let pw = rng.next_nonce(32);
        let card = lw_register_user(&rc, &id, &pw);
        assert_eq!(&card.b ^ &s.h(&[&pw]), s.h(&[&rc.krc]));
        assert_eq!(card.h, s.h(&[&(&card.v ^ &s.h(&[&id, &pw]))]));
    }

    #[test]
    fn same_password_different_id_gives_different_v() {
        let (s, rc, mut rng) = setup();
        let pw = rng.next_nonce(32);
        let (id1, id2) = (rng.next_nonce(32), rng.next_nonce(32));
        let c1 = lw_register_user(&rc, &id1, &pw);
        let c2 = lw_register_user(&rc, &id2, &pw);
        // recomputation: T differs, so V differs
        let t1 = s.h(&[&id1, &rc.krc]);
        let t2 = s.h(&[&id2, &rc.krc]);
        assert_ne!(t1, t2);
        assert_eq!(c1.v, &t1 ^ &s.h(&[&id1, &pw]));
        assert_ne!(c1.v, c2.v);
    }

    #[test]
    fn login_fields_match_straight_line_recomputation() {
        let (s, rc, mut rng) = setup();
        let sid = s.encode_atom("S1").unwrap();
        let id = rng.next_nonce(32);
        let pw = rng.next_nonce(32);
        let ni = rng.next_nonce(32);
        let card = lw_register_user(&rc, &id, &pw);
        let (_, msg) = lw_build_login(&s, &card, &id, &pw, &sid, &ni).unwrap();

        let t = s.hash_bytes(&[id.as_bytes(), rc.krc.as_bytes()].concat());
        let h_pw = s.hash_bytes(pw.as_bytes());
        let b = &h_pw ^ &s.hash_bytes(rc.krc.as_bytes());
        let did = &h_pw ^ &s.hash_bytes(&[t.as_bytes(), rc.nrc.as_bytes(), ni.as_bytes()].concat());
        let mask = s.hash_bytes(&[rc.nrc.as_bytes(), ni.as_bytes(), sid.as_bytes()].concat());
        let pij = &t ^ &mask;
        let qi = s.hash_bytes(&[b.as_bytes(), rc.nrc.as_bytes(), ni.as_bytes()].concat());
        assert_eq!(LOGIN_REQUEST.unpack(&msg).unwrap(), [did, pij.clone(), qi, ni]);
        assert_eq!(&pij ^ &mask, t);
    }

    #[test]
    fn wrong_password_fails_unlock() {
        let (s, rc, mut rng) = setup();
        let id = rng.next_nonce(32);
        let pw = rng.next_nonce(32);
        let card = lw_register_user(&rc, &id, &pw);
        let wrong = rng.next_nonce(32);
        let ni = rng.next_nonce(32);
        assert_eq!(
            lw_build_login(&s, &card, &id, &wrong, &s.zero(), &ni).unwrap_err(),
            RejectReason::LocalPasswordCheck
        );
    }

    #[test]
    fn server_recovers_user_values() {
        let (s, rc, mut rng) = setup();
        let sid = s.encode_atom("S1").unwrap();
        let st = rc.provision_server(&sid);
        let id = rng.next_nonce(32);
        let pw = rng.next_nonce(32);
        let card = lw_register_user(&rc, &id, &pw);
        let secrets = lw_unlock(&s, &card, &id, &pw).unwrap();
        let ni = rng.next_nonce(32);
        let nj = rng.next_nonce(32);
        let (usess, login) = lw_compose_login(&s, &secrets, &sid, &ni);
        let (ssess, ack) = lw_server_verify_login(&st, &login, &nj).unwrap();
        assert_eq!((ssess.t.clone(), ssess.h_pw.clone(), ssess.b.clone()), (secrets.t, secrets.h_pw, secrets.b));
        let (ua, sk_user) = lw_user_finish(&s, &usess, &ack).unwrap();
        assert_eq!(lw_server_finish(&st, &ssess, &ua).unwrap(), sk_user);
    }

    #[test]
    fn tampered_qi_rejected() {
        let (s, rc, mut rng) = setup();
        let sid = s.encode_atom("S1").unwrap();
        let st = rc.provision_server(&sid);
        let id = rng.next_nonce(32);
        let pw = rng.next_nonce(32);
        let card = lw_register_user(&rc, &id, &pw);
        let ni = rng.next_nonce(32);
        let (_, mut login) = lw_build_login(&s, &card, &id, &pw, &sid, &ni).unwrap();
        for bit in 0..256 {
            let mut m = login.clone();
            let q = m.field_mut("Qi").unwrap();
            *q = q.flip_bit(bit);
            assert_eq!(lw_server_verify_login(&st, &m, &ni).unwrap_err(), RejectReason::LoginVerify);
        }
        login.fields.pop();
        assert_eq!(lw_server_verify_login(&st, &login, &ni).unwrap_err(), RejectReason::UnexpectedMessage);
    }
}
