//! Lee et al.: card tokens `(V_i, B_i, H_i, h(Nrc), Nb)`; servers hold
//! `h(Nrc)` and `h(Krc‖Nrc)`.

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
    fields: &["DID_i", "Pij", "Q_i", "Ni"],
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
pub struct LeeRcState {
    pub space: ValueSpace,
    pub krc: Value,
    pub nrc: Value,
}

impl LeeRcState {
    pub fn generate(space: ValueSpace, rng: &mut Rng) -> Self {
        LeeRcState {
            space,
            krc: rng.next_nonce(space.width),
            nrc: rng.next_nonce(space.width),
        }
    }

    pub fn h_krc_nrc(&self) -> Value {
        self.space.h(&[&self.krc, &self.nrc])
    }

    pub fn provision_server(&self, sid: &Value) -> LeeServerState {
        LeeServerState {
            space: self.space,
            sid: sid.clone(),
            h_nrc: self.space.h(&[&self.nrc]),
            h_krc_nrc: self.h_krc_nrc(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LeeServerState {
    pub space: ValueSpace,
    pub sid: Value,
    pub h_nrc: Value,
    pub h_krc_nrc: Value,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LeeCard {
    pub v: Value,
    pub b: Value,
    pub h: Value,
    pub h_nrc: Value,
    pub nb: Value,
}

impl LeeCard {
    pub fn to_smart_card(&self, space: ValueSpace) -> SmartCard {
        SmartCard::new(SchemeId::Lee, space)
            .with("V_i", self.v.clone())
            .with("B_i", self.b.clone())
            .with("H_i", self.h.clone())
            .with("h(Nrc)", self.h_nrc.clone())
            .with("Nb", self.nb.clone())
    }

    pub fn from_tokens(tokens: &BTreeMap<String, Value>) -> Result<Self, CardError> {
        let get = |k: &str| tokens.get(k).cloned().ok_or_else(|| CardError::MissingToken(k.into()));
        Ok(LeeCard {
            v: get("V_i")?,
            b: get("B_i")?,
            h: get("H_i")?,
            h_nrc: get("h(Nrc)")?,
            nb: get("Nb")?,
        })
    }

    pub fn from_smart_card(card: &SmartCard) -> Result<Self, CardError> {
        check_card(card, SchemeId::Lee)?;
        Self::from_tokens(&card.tokens)
    }
}

pub fn lee_issue_card(rc: &LeeRcState, id: &Value, mpw: &Value, nb: &Value) -> LeeCard {
    let s = &rc.space;
    let t = s.h(&[id, &rc.krc]);
    LeeCard {
        v: &t ^ &s.h(&[id, mpw]),
        b: s.h(&[mpw, &rc.h_krc_nrc()]),
        h: s.h(&[&t]),
        h_nrc: s.h(&[&rc.nrc]),
        nb: nb.clone(),
    }
}

pub fn lee_register_user(rc: &LeeRcState, id: &Value, pw: &Value, nb: &Value) -> LeeCard {
    lee_issue_card(rc, id, &masked_password(&rc.space, nb, pw), nb)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LeeLoginSecrets {
    pub t: Value,
    pub mpw: Value,
    pub b: Value,
    pub h_nrc: Value,
}

pub fn lee_unlock(space: &ValueSpace, card: &LeeCard, id: &Value, pw: &Value) -> Result<LeeLoginSecrets, RejectReason> {
    let mpw = masked_password(space, &card.nb, pw);
    let t = &card.v ^ &space.h(&[id, &mpw]);
    if space.h(&[&t]) != card.h {
        return Err(RejectReason::LocalPasswordCheck);
    }
    Ok(LeeLoginSecrets {
        t,
        mpw,
        b: card.b.clone(),
        h_nrc: card.h_nrc.clone(),
    })
}

#[derive(Clone, Debug)]
pub struct LeeUserSession {
    pub sid: Value,
    pub ni: Value,
    pub a: Value,
    pub b: Value,
}

pub fn lee_compose_login(space: &ValueSpace, sec: &LeeLoginSecrets, sid: &Value, ni: &Value) -> (LeeUserSession, Message) {
    let a = space.h(&[&sec.t, &sec.h_nrc, ni]);
    let did = &sec.mpw ^ &space.h(&[&sec.t, &a, ni]);
    let pij = &sec.t ^ &space.h(&[&sec.h_nrc, ni, sid]);
    let q = space.h(&[&sec.b, &a, ni]);
    let session = LeeUserSession {
        sid: sid.clone(),
        ni: ni.clone(),
        a,
        b: sec.b.clone(),
    };
    (session, LOGIN_REQUEST.build([did, pij, q, ni.clone()]))
}

pub fn lee_build_login(
    space: &ValueSpace,
    card: &LeeCard,
    id: &Value,
    pw: &Value,
    sid: &Value,
    ni: &Value,
) -> Result<(LeeUserSession, Message), RejectReason> {
    let sec = lee_unlock(space, card, id, pw)?;
    Ok(lee_compose_login(space, &sec, sid, ni))
}

#[derive(Clone, Debug)]
pub struct LeeServerSession {
    pub ni: Value,
    pub nj: Value,
    pub t: Value,
    pub a: Value,
    pub b: Value,
}

pub fn lee_server_verify_login(
    st: &LeeServerState,
    msg: &Message,
    nj: &Value,
) -> Result<(LeeServerSession, Message), RejectReason> {
    let s = &st.space;
    let [did, pij, q, ni] = LOGIN_REQUEST.unpack(msg).map_err(|_| RejectReason::UnexpectedMessage)?;
    let t = &pij ^ &s.h(&[&st.h_nrc, &ni, &st.sid]);
    let a = s.h(&[&t, &st.h_nrc, &ni]);
    let mpw = &did ^ &s.h(&[&t, &a, &ni]);
    let b = s.h(&[&mpw, &st.h_krc_nrc]);
    if s.h(&[&b, &a, &ni]) != q {
        return Err(RejectReason::LoginVerify);
    }
    let sa = s.h(&[&b, &ni, &a, &st.sid]);
    let session = LeeServerSession {
        ni,
        nj: nj.clone(),
        t,
        a,
        b,
    };
    Ok((session, SERVER_ACK.build([sa, nj.clone()])))
}

pub fn lee_user_finish(space: &ValueSpace, sess: &LeeUserSession, ack: &Message) -> Result<(Message, Value), RejectReason> {
    let [sa, nj] = SERVER_ACK.unpack(ack).map_err(|_| RejectReason::UnexpectedMessage)?;
    if space.h(&[&sess.b, &sess.ni, &sess.a, &sess.sid]) != sa {
        return Err(RejectReason::ServerAckVerify);
    }
    let ua = space.h(&[&sess.b, &nj, &sess.a, &sess.sid]);
    let sk = space.h(&[&sess.b, &sess.ni, &nj, &sess.a, &sess.sid]);
    Ok((USER_ACK.build([ua]), sk))
}

pub fn lee_server_finish(st: &LeeServerState, sess: &LeeServerSession, ua: &Message) -> Result<Value, RejectReason> {
    let s = &st.space;
    let [ua] = USER_ACK.unpack(ua).map_err(|_| RejectReason::UnexpectedMessage)?;
    if s.h(&[&sess.b, &sess.nj, &sess.a, &st.sid]) != ua {
        return Err(RejectReason::UserAckVerify);
    }
    Ok(s.h(&[&sess.b, &sess.ni, &sess.nj, &sess.a, &st.sid]))
}

pub struct LeeUser {
    space: ValueSpace,
    creds: Credentials,
    card: LeeCard,
    sid: Value,
    phase: Phase<LeeUserSession>,
    outcome: SessionOutcome,
}

impl LeeUser {
    pub fn new(space: ValueSpace, creds: Credentials, card: LeeCard, sid: Value) -> Self {
        LeeUser {
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

impl Endpoint for LeeUser {
    fn role(&self) -> RoleKind {
        RoleKind::User
    }

    fn handle(&mut self, msg: &Message, _rng: &mut Rng) -> Result<Vec<Message>, RejectReason> {
        let Phase::Waiting(sess) = std::mem::replace(&mut self.phase, Phase::Done) else {
            return Err(self.fail(RejectReason::UnexpectedMessage));
        };
        match lee_user_finish(&self.space, &sess, msg) {
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

impl Initiator for LeeUser {
    fn initiate(&mut self, rng: &mut Rng) -> Result<Message, RejectReason> {
        let ni = rng.next_nonce(self.space.width);
        match lee_build_login(&self.space, &self.card, &self.creds.id, &self.creds.password, &self.sid, &ni) {
            Ok((sess, msg)) => {
                self.phase = Phase::Waiting(sess);
                Ok(msg)
            }
            Err(r) => Err(self.fail(r)),
        }
    }
}

pub struct LeeServer {
    state: LeeServerState,
    phase: Phase<LeeServerSession>,
    outcome: SessionOutcome,
}

impl LeeServer {
    pub fn new(state: LeeServerState) -> Self {
        LeeServer {
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

impl Endpoint for LeeServer {
    fn role(&self) -> RoleKind {
        RoleKind::Server
    }

    fn handle(&mut self, msg: &Message, rng: &mut Rng) -> Result<Vec<Message>, RejectReason> {
        match std::mem::replace(&mut self.phase, Phase::Done) {
            Phase::Idle => {
                let nj = rng.next_nonce(self.state.space.width);
                match lee_server_verify_login(&self.state, msg, &nj) {
                    Ok((sess, ack)) => {
                        self.phase = Phase::Waiting(sess);
                        Ok(vec![ack])
                    }
                    Err(r) => Err(self.fail(r)),
                }
            }
            Phase::Waiting(sess) => match lee_server_finish(&self.state, &sess, msg) {
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

pub struct LeeDeployment {
    pub rc: LeeRcState,
    pub servers: BTreeMap<Value, LeeServerState>,
}

impl LeeDeployment {
    pub fn new(space: ValueSpace, rng: &mut Rng) -> Self {
        LeeDeployment {
            rc: LeeRcState::generate(space, rng),
            servers: BTreeMap::new(),
        }
    }
}

impl Deployment for LeeDeployment {
    fn scheme(&self) -> SchemeId {
        SchemeId::Lee
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
        lee_register_user(&self.rc, &creds.id, &creds.password, &nb).to_smart_card(self.rc.space)
    }

    fn user(&self, creds: &Credentials, card: &SmartCard, sid: &Value) -> Result<Box<dyn Initiator>, CardError> {
        let card = LeeCard::from_smart_card(card)?;
        Ok(Box::new(LeeUser::new(self.rc.space, creds.clone(), card, sid.clone())))
    }

    fn server(&self, sid: &Value) -> Option<Box<dyn Endpoint>> {
        self.servers
            .get(sid)
            .map(|st| Box::new(LeeServer::new(st.clone())) as Box<dyn Endpoint>)
    }
}

/// Card contents over the atoms `ID`, `PW`, `Nb`, `Krc`, `Nrc`.
pub fn symbolic_card() -> Vec<(&'static str, Term)> {
    let (id, krc, nrc) = (Term::atom("ID"), Term::atom("Krc"), Term::atom("Nrc"));
    let mpw = crate::schemes::hsiang_shih::symbolic_mpw();
    let t = Term::h([id.clone(), krc.clone()]);
    vec![
        ("V_i", Term::xor(t.clone(), Term::h([id, mpw.clone()]))),
        ("B_i", Term::h([mpw, Term::h([krc, nrc.clone()])])),
        ("H_i", Term::h([t])),
        ("h(Nrc)", Term::h([nrc])),
        ("Nb", Term::atom("Nb")),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (ValueSpace, LeeRcState, Rng) {
        let s = ValueSpace::default();
        let mut rng = Rng::new(13);
        let rc = LeeRcState::generate(s, &mut rng);
        (s, rc, rng)
    }

    #[test]
    fn b_binds_masked_password_not_identity() {
        let (s, rc, mut rng) = setup();
        let (id, pw, nb) = (rng.next_nonce(32), rng.next_nonce(32), rng.next_nonce(32));
        let card = lee_register_user(&rc, &id, &pw, &nb);
        let mpw = s.hash_bytes((&nb ^ &pw).as_bytes());
        let hkn = s.hash_bytes(&[rc.krc.as_bytes(), rc.nrc.as_bytes()].concat());
        assert_eq!(card.b, s.hash_bytes(&[mpw.as_bytes(), hkn.as_bytes()].concat()));
        // a different identity with the same masked password gets the same B_i
        let other = lee_issue_card(&rc, &rng.next_nonce(32), &mpw, &nb);
        assert_eq!(other.b, card.b);
        assert_ne!(other.v, card.v);
    }

    #[test]
    fn round_trip_and_tamper() {
        let (s, rc, mut rng) = setup();
        let sid = s.encode_atom("S1").unwrap();
        let st = rc.provision_server(&sid);
        let (id, pw, nb) = (rng.next_nonce(32), rng.next_nonce(32), rng.next_nonce(32));
        let card = lee_register_user(&rc, &id, &pw, &nb);
        let ni = rng.next_nonce(32);
        let nj = rng.next_nonce(32);
        let (usess, login) = lee_build_login(&s, &card, &id, &pw, &sid, &ni).unwrap();
        let (ssess, ack) = lee_server_verify_login(&st, &login, &nj).unwrap();
        assert_eq!(ssess.t, s.h(&[&id, &rc.krc]));
        let (ua, sk) = lee_user_finish(&s, &usess, &ack).unwrap();
        assert_eq!(lee_server_finish(&st, &ssess, &ua).unwrap(), sk);

        for name in ["DID_i", "Pij", "Q_i", "Ni"] {
            let mut m = login.clone();
            let v = m.field_mut(name).unwrap();
            *v = v.flip_bit(17);
            assert_eq!(lee_server_verify_login(&st, &m, &nj).unwrap_err(), RejectReason::LoginVerify, "{name}");
        }
    }

    #[test]
    fn wrong_password_fails_unlock() {
        let (s, rc, mut rng) = setup();
        let (id, pw, nb) = (rng.next_nonce(32), rng.next_nonce(32), rng.next_nonce(32));
        let card = lee_register_user(&rc, &id, &pw, &nb);
        assert_eq!(
            lee_unlock(&s, &card, &id, &nb).unwrap_err(),
            RejectReason::LocalPasswordCheck
        );
    }
}
