//! Hsiang–Shih: the registration centre takes part in every login.
//!
//! The user masks the card value `R_i` into `D_i`; the centre unmasks it,
//! rebuilds `A_i` and hands it to the server under a key derived from
//! `h(SID_j‖Nrc)`.

use std::collections::{BTreeMap, BTreeSet};

use crate::harness::{
    CardError, Credentials, Endpoint, Initiator, Message, MessageTemplate, RejectReason, RoleKind,
    SessionOutcome, SmartCard,
};
use crate::schemes::{check_card, Deployment, Phase, SchemeId};
use crate::term::Term;
use crate::value::{Rng, Value, ValueSpace};

pub static LOGIN_REQUEST: MessageTemplate = MessageTemplate {
    label: "LoginRequest",
    fields: &["DID_i", "Pij", "Q_i", "Di", "Co", "Ni"],
    sender: RoleKind::User,
    receiver: RoleKind::Server,
};

pub static RC_REQUEST: MessageTemplate = MessageTemplate {
    label: "RcRequest",
    fields: &["Mjr", "SID_j", "Di", "Co", "Ni"],
    sender: RoleKind::Server,
    receiver: RoleKind::RegistrationCentre,
};

pub static RC_ACK: MessageTemplate = MessageTemplate {
    label: "RcAck",
    fields: &["C1", "C2", "Nrj"],
    sender: RoleKind::RegistrationCentre,
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

pub static TEMPLATES: &[&MessageTemplate] = &[&LOGIN_REQUEST, &RC_REQUEST, &RC_ACK, &SERVER_ACK, &USER_ACK];

#[derive(Clone, Debug)]
pub struct HsRcState {
    pub space: ValueSpace,
    pub krc: Value,
    pub nrc: Value,
    pub nr: Value,
    pub servers: BTreeSet<Value>,
}

impl HsRcState {
    pub fn generate(space: ValueSpace, rng: &mut Rng) -> Self {
        HsRcState {
            space,
            krc: rng.next_nonce(space.width),
            nrc: rng.next_nonce(space.width),
            nr: rng.next_nonce(space.width),
            servers: BTreeSet::new(),
        }
    }

    pub fn provision_server(&mut self, sid: &Value) -> HsServerState {
        self.servers.insert(sid.clone());
        HsServerState {
            space: self.space,
            sid: sid.clone(),
            h_sid_nrc: self.space.h(&[sid, &self.nrc]),
        }
    }

    /// The centre secret `h(Krc ⊕ Nr)` behind every `A_i`.
    pub fn a_key(&self) -> Value {
        self.space.h(&[&(&self.krc ^ &self.nr)])
    }
}

#[derive(Clone, Debug)]
pub struct HsServerState {
    pub space: ValueSpace,
    pub sid: Value,
    pub h_sid_nrc: Value,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HsCard {
    pub v: Value,
    pub b: Value,
    pub h: Value,
    pub r: Value,
    pub nb: Value,
}

impl HsCard {
    pub fn to_smart_card(&self, space: ValueSpace) -> SmartCard {
        SmartCard::new(SchemeId::HsiangShih, space)
            .with("V_i", self.v.clone())
            .with("B_i", self.b.clone())
            .with("H_i", self.h.clone())
            .with("R_i", self.r.clone())
            .with("Nb", self.nb.clone())
    }

    pub fn from_tokens(tokens: &BTreeMap<String, Value>) -> Result<Self, CardError> {
        let get = |k: &str| tokens.get(k).cloned().ok_or_else(|| CardError::MissingToken(k.into()));
        Ok(HsCard {
            v: get("V_i")?,
            b: get("B_i")?,
            h: get("H_i")?,
            r: get("R_i")?,
            nb: get("Nb")?,
        })
    }

    pub fn from_smart_card(card: &SmartCard) -> Result<Self, CardError> {
        check_card(card, SchemeId::HsiangShih)?;
        Self::from_tokens(&card.tokens)
    }
}

pub fn masked_password(space: &ValueSpace, nb: &Value, pw: &Value) -> Value {
    space.h(&[&(nb ^ pw)])
}

/// Centre side of registration; `mpw` arrives from the user.
pub fn hs_issue_card(rc: &HsRcState, id: &Value, mpw: &Value, nb: &Value) -> HsCard {
    let s = &rc.space;
    let t = s.h(&[id, &rc.krc]);
    let r = s.h(&[mpw, &rc.nr]);
    let a = &r ^ &rc.a_key();
    HsCard {
        v: &t ^ &s.h(&[id, mpw]),
        b: &a ^ mpw,
        h: s.h(&[&t]),
        r,
        nb: nb.clone(),
    }
}

pub fn hs_register_user(rc: &HsRcState, id: &Value, pw: &Value, nb: &Value) -> HsCard {
    hs_issue_card(rc, id, &masked_password(&rc.space, nb, pw), nb)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HsLoginSecrets {
    pub t: Value,
    pub mpw: Value,
    pub a: Value,
    pub b: Value,
    pub r: Value,
}

pub fn hs_unlock(space: &ValueSpace, card: &HsCard, id: &Value, pw: &Value) -> Result<HsLoginSecrets, RejectReason> {
    let mpw = masked_password(space, &card.nb, pw);
    let t = &card.v ^ &space.h(&[id, &mpw]);
    if space.h(&[&t]) != card.h {
        return Err(RejectReason::LocalPasswordCheck);
    }
    Ok(HsLoginSecrets {
        a: &card.b ^ &mpw,
        t,
        mpw,
        b: card.b.clone(),
        r: card.r.clone(),
    })
}

#[derive(Clone, Debug)]
pub struct HsUserSession {
    pub sid: Value,
    pub ni: Value,
    pub a: Value,
    pub b: Value,
}

pub fn hs_compose_login(space: &ValueSpace, sec: &HsLoginSecrets, sid: &Value, ni: &Value) -> (HsUserSession, Message) {
    let did = &sec.mpw ^ &space.h(&[&sec.t, &sec.a, ni]);
    let pij = &sec.t ^ &space.h(&[&sec.a, ni, sid]);
    let q = space.h(&[&sec.b, &sec.a, ni]);
    let di = &(&sec.r ^ sid) ^ ni;
    let co = space.h(&[&sec.a, &ni.add_one(), sid]);
    let session = HsUserSession {
        sid: sid.clone(),
        ni: ni.clone(),
        a: sec.a.clone(),
        b: sec.b.clone(),
    };
    (session, LOGIN_REQUEST.build([did, pij, q, di, co, ni.clone()]))
}

pub fn hs_build_login(
    space: &ValueSpace,
    card: &HsCard,
    id: &Value,
    pw: &Value,
    sid: &Value,
    ni: &Value,
) -> Result<(HsUserSession, Message), RejectReason> {
    let sec = hs_unlock(space, card, id, pw)?;
    Ok(hs_compose_login(space, &sec, sid, ni))
}

/// What the server keeps between forwarding the login and the centre's reply.
#[derive(Clone, Debug)]
pub struct HsPendingLogin {
    pub did: Value,
    pub pij: Value,
    pub q: Value,
    pub ni: Value,
    pub njr: Value,
}

pub fn hs_server_forward(
    st: &HsServerState,
    msg: &Message,
    njr: &Value,
) -> Result<(HsPendingLogin, Message), RejectReason> {
    let [did, pij, q, di, co, ni] = LOGIN_REQUEST.unpack(msg).map_err(|_| RejectReason::UnexpectedMessage)?;
    let mjr = &st.h_sid_nrc ^ njr;
    let fwd = RC_REQUEST.build([mjr, st.sid.clone(), di, co, ni.clone()]);
    let pending = HsPendingLogin {
        did,
        pij,
        q,
        ni,
        njr: njr.clone(),
    };
    Ok((pending, fwd))
}

/// Centre check of a forwarded login: recovers `A_i` from `D_i` and checks `Co`.
pub fn hs_rc_verify(rc: &HsRcState, msg: &Message, nrj: &Value) -> Result<Message, RejectReason> {
    let s = &rc.space;
    let [mjr, sid, di, co, ni] = RC_REQUEST.unpack(msg).map_err(|_| RejectReason::UnexpectedMessage)?;
    if !rc.servers.contains(&sid) {
        return Err(RejectReason::UnknownServer);
    }
    let h_sid_nrc = s.h(&[&sid, &rc.nrc]);
    let njr = &mjr ^ &h_sid_nrc;
    let r = &(&di ^ &sid) ^ &ni;
    let a = &r ^ &rc.a_key();
    if s.h(&[&a, &ni.add_one(), &sid]) != co {
        return Err(RejectReason::RcVerify);
    }
    let c1 = s.h(&[&njr, &h_sid_nrc, nrj]);
    let c2 = &a ^ &s.h(&[&(&h_sid_nrc ^ &njr)]);
    Ok(RC_ACK.build([c1, c2, nrj.clone()]))
}

#[derive(Clone, Debug)]
pub struct HsServerSession {
    pub ni: Value,
    pub nj: Value,
    pub a: Value,
    pub b: Value,
}

pub fn hs_server_verify_login(
    st: &HsServerState,
    pending: &HsPendingLogin,
    ack: &Message,
    nj: &Value,
) -> Result<(HsServerSession, Message), RejectReason> {
    let s = &st.space;
    let [c1, c2, nrj] = RC_ACK.unpack(ack).map_err(|_| RejectReason::UnexpectedMessage)?;
    if s.h(&[&pending.njr, &st.h_sid_nrc, &nrj]) != c1 {
        return Err(RejectReason::RcAckVerify);
    }
    let a = &c2 ^ &s.h(&[&(&st.h_sid_nrc ^ &pending.njr)]);
    let t = &pending.pij ^ &s.h(&[&a, &pending.ni, &st.sid]);
    let mpw = &pending.did ^ &s.h(&[&t, &a, &pending.ni]);
    let b = &a ^ &mpw;
    if s.h(&[&b, &a, &pending.ni]) != pending.q {
        return Err(RejectReason::LoginVerify);
    }
    let sa = s.h(&[&b, &pending.ni, &a, &st.sid]);
    let session = HsServerSession {
        ni: pending.ni.clone(),
        nj: nj.clone(),
        a,
        b,
    };
    Ok((session, SERVER_ACK.build([sa, nj.clone()])))
}

pub fn hs_user_finish(space: &ValueSpace, sess: &HsUserSession, ack: &Message) -> Result<(Message, Value), RejectReason> {
    let [sa, nj] = SERVER_ACK.unpack(ack).map_err(|_| RejectReason::UnexpectedMessage)?;
    if space.h(&[&sess.b, &sess.ni, &sess.a, &sess.sid]) != sa {
        return Err(RejectReason::ServerAckVerify);
    }
    let ua = space.h(&[&sess.b, &nj, &sess.a, &sess.sid]);
    let sk = space.h(&[&sess.b, &sess.a, &sess.ni, &nj, &sess.sid]);
    Ok((USER_ACK.build([ua]), sk))
}

pub fn hs_server_finish(st: &HsServerState, sess: &HsServerSession, ua: &Message) -> Result<Value, RejectReason> {
    let s = &st.space;
    let [ua] = USER_ACK.unpack(ua).map_err(|_| RejectReason::UnexpectedMessage)?;
    if s.h(&[&sess.b, &sess.nj, &sess.a, &st.sid]) != ua {
        return Err(RejectReason::UserAckVerify);
    }
    Ok(s.h(&[&sess.b, &sess.a, &sess.ni, &sess.nj, &st.sid]))
}

pub struct HsUser {
    space: ValueSpace,
    creds: Credentials,
    card: HsCard,
    sid: Value,
    phase: Phase<HsUserSession>,
    outcome: SessionOutcome,
}

impl HsUser {
    pub fn new(space: ValueSpace, creds: Credentials, card: HsCard, sid: Value) -> Self {
        HsUser {
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

impl Endpoint for HsUser {
    fn role(&self) -> RoleKind {
        RoleKind::User
    }

    fn handle(&mut self, msg: &Message, _rng: &mut Rng) -> Result<Vec<Message>, RejectReason> {
        let Phase::Waiting(sess) = std::mem::replace(&mut self.phase, Phase::Done) else {
            return Err(self.fail(RejectReason::UnexpectedMessage));
        };
        match hs_user_finish(&self.space, &sess, msg) {
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

impl Initiator for HsUser {
    fn initiate(&mut self, rng: &mut Rng) -> Result<Message, RejectReason> {
        let ni = rng.next_nonce(self.space.width);
        match hs_build_login(&self.space, &self.card, &self.creds.id, &self.creds.password, &self.sid, &ni) {
            Ok((sess, msg)) => {
                self.phase = Phase::Waiting(sess);
                Ok(msg)
            }
            Err(r) => Err(self.fail(r)),
        }
    }
}

enum ServerPhase {
    Idle,
    AwaitRc(HsPendingLogin),
    AwaitUser(HsServerSession),
    Done,
}

pub struct HsServer {
    state: HsServerState,
    phase: ServerPhase,
    outcome: SessionOutcome,
}

impl HsServer {
    pub fn new(state: HsServerState) -> Self {
        HsServer {
            state,
            phase: ServerPhase::Idle,
            outcome: SessionOutcome::pending(),
        }
    }

    fn fail(&mut self, reason: RejectReason) -> RejectReason {
        self.phase = ServerPhase::Done;
        self.outcome = SessionOutcome::rejected(reason);
        reason
    }
}

impl Endpoint for HsServer {
    fn role(&self) -> RoleKind {
        RoleKind::Server
    }

    fn handle(&mut self, msg: &Message, rng: &mut Rng) -> Result<Vec<Message>, RejectReason> {
        let w = self.state.space.width;
        match std::mem::replace(&mut self.phase, ServerPhase::Done) {
            ServerPhase::Idle => {
                let njr = rng.next_nonce(w);
                match hs_server_forward(&self.state, msg, &njr) {
                    Ok((pending, fwd)) => {
                        self.phase = ServerPhase::AwaitRc(pending);
                        Ok(vec![fwd])
                    }
                    Err(r) => Err(self.fail(r)),
                }
            }
            ServerPhase::AwaitRc(pending) => {
                let nj = rng.next_nonce(w);
                match hs_server_verify_login(&self.state, &pending, msg, &nj) {
                    Ok((sess, ack)) => {
                        self.phase = ServerPhase::AwaitUser(sess);
                        Ok(vec![ack])
                    }
                    Err(r) => Err(self.fail(r)),
                }
            }
            ServerPhase::AwaitUser(sess) => match hs_server_finish(&self.state, &sess, msg) {
                Ok(sk) => {
                    self.outcome = SessionOutcome::accepted(sk);
                    Ok(Vec::new())
                }
                Err(r) => Err(self.fail(r)),
            },
            ServerPhase::Done => Err(self.fail(RejectReason::UnexpectedMessage)),
        }
    }

    fn outcome(&self) -> SessionOutcome {
        self.outcome.clone()
    }
}

/// Online registration centre. Its outcome stays pending unless it rejects.
pub struct HsRc {
    state: HsRcState,
    outcome: SessionOutcome,
}

impl HsRc {
    pub fn new(state: HsRcState) -> Self {
        HsRc {
            state,
            outcome: SessionOutcome::pending(),
        }
    }
}

impl Endpoint for HsRc {
    fn role(&self) -> RoleKind {
        RoleKind::RegistrationCentre
    }

    fn handle(&mut self, msg: &Message, rng: &mut Rng) -> Result<Vec<Message>, RejectReason> {
        let nrj = rng.next_nonce(self.state.space.width);
        match hs_rc_verify(&self.state, msg, &nrj) {
            Ok(ack) => Ok(vec![ack]),
            Err(r) => {
                self.outcome = SessionOutcome::rejected(r);
                Err(r)
            }
        }
    }

    fn outcome(&self) -> SessionOutcome {
        self.outcome.clone()
    }
}

pub struct HsDeployment {
    pub rc: HsRcState,
    pub servers: BTreeMap<Value, HsServerState>,
}

impl HsDeployment {
    pub fn new(space: ValueSpace, rng: &mut Rng) -> Self {
        HsDeployment {
            rc: HsRcState::generate(space, rng),
            servers: BTreeMap::new(),
        }
    }
}

impl Deployment for HsDeployment {
    fn scheme(&self) -> SchemeId {
        SchemeId::HsiangShih
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
        hs_register_user(&self.rc, &creds.id, &creds.password, &nb).to_smart_card(self.rc.space)
    }

    fn user(&self, creds: &Credentials, card: &SmartCard, sid: &Value) -> Result<Box<dyn Initiator>, CardError> {
        let card = HsCard::from_smart_card(card)?;
        Ok(Box::new(HsUser::new(self.rc.space, creds.clone(), card, sid.clone())))
    }

    fn server(&self, sid: &Value) -> Option<Box<dyn Endpoint>> {
        self.servers
            .get(sid)
            .map(|st| Box::new(HsServer::new(st.clone())) as Box<dyn Endpoint>)
    }

    fn rc(&self) -> Option<Box<dyn Endpoint>> {
        Some(Box::new(HsRc::new(self.rc.clone())))
    }
}

/// `h(Nb ⊕ PW)` as a term.
pub fn symbolic_mpw() -> Term {
    Term::h([Term::xor(Term::atom("Nb"), Term::atom("PW"))])
}

/// Card contents over the atoms `ID`, `PW`, `Nb`, `Krc`, `Nr`.
pub fn symbolic_card() -> Vec<(&'static str, Term)> {
    let (id, krc, nr) = (Term::atom("ID"), Term::atom("Krc"), Term::atom("Nr"));
    let mpw = symbolic_mpw();
    let t = Term::h([id.clone(), krc.clone()]);
    let r = Term::h([mpw.clone(), nr.clone()]);
    let a = Term::xor(r.clone(), Term::h([Term::xor(krc, nr)]));
    vec![
        ("V_i", Term::xor(t.clone(), Term::h([id, mpw.clone()]))),
        ("B_i", Term::xor(a, mpw)),
        ("H_i", Term::h([t])),
        ("R_i", r),
        ("Nb", Term::atom("Nb")),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixture {
        s: ValueSpace,
        rc: HsRcState,
        st: HsServerState,
        id: Value,
        pw: Value,
        card: HsCard,
        sid: Value,
        rng: Rng,
    }

    fn fixture() -> Fixture {
        let s = ValueSpace::default();
        let mut rng = Rng::new(11);
        let mut rc = HsRcState::generate(s, &mut rng);
        let sid = s.encode_atom("S1").unwrap();
        let st = rc.provision_server(&sid);
        let (id, pw, nb) = (rng.next_nonce(32), rng.next_nonce(32), rng.next_nonce(32));
        let card = hs_register_user(&rc, &id, &pw, &nb);
        Fixture { s, rc, st, id, pw, card, sid, rng }
    }

    #[test]
    fn card_values_expose_centre_key_to_owner() {
        let f = fixture();
        let mpw = f.s.hash_bytes((&f.card.nb ^ &f.pw).as_bytes());
        let a = &f.card.b ^ &mpw;
        assert_eq!(&a ^ &f.card.r, f.rc.a_key());
        let r = f.s.hash_bytes(&[mpw.as_bytes(), f.rc.nr.as_bytes()].concat());
        assert_eq!(r, f.card.r);
    }

    #[test]
    fn full_round_trip_through_centre() {
        let mut f = fixture();
        let ni = f.rng.next_nonce(32);
        let (usess, login) = hs_build_login(&f.s, &f.card, &f.id, &f.pw, &f.sid, &ni).unwrap();
        let njr = f.rng.next_nonce(32);
        let (pending, fwd) = hs_server_forward(&f.st, &login, &njr).unwrap();
        let nrj = f.rng.next_nonce(32);
        let ack = hs_rc_verify(&f.rc, &fwd, &nrj).unwrap();
        let nj = f.rng.next_nonce(32);
        let (ssess, sack) = hs_server_verify_login(&f.st, &pending, &ack, &nj).unwrap();
        assert_eq!(ssess.a, usess.a);
        let (ua, sk) = hs_user_finish(&f.s, &usess, &sack).unwrap();
        assert_eq!(hs_server_finish(&f.st, &ssess, &ua).unwrap(), sk);
    }

    #[test]
    fn centre_rejects_unknown_server_and_bad_co() {
        let mut f = fixture();
        let ni = f.rng.next_nonce(32);
        let (_, login) = hs_build_login(&f.s, &f.card, &f.id, &f.pw, &f.sid, &ni).unwrap();
        let njr = f.rng.next_nonce(32);
        let (_, fwd) = hs_server_forward(&f.st, &login, &njr).unwrap();

        let mut stranger = fwd.clone();
        *stranger.field_mut("SID_j").unwrap() = f.s.encode_atom("S9").unwrap();
        assert_eq!(hs_rc_verify(&f.rc, &stranger, &ni).unwrap_err(), RejectReason::UnknownServer);

        let mut bad = fwd;
        let co = bad.field_mut("Co").unwrap();
        *co = co.flip_bit(5);
        assert_eq!(hs_rc_verify(&f.rc, &bad, &ni).unwrap_err(), RejectReason::RcVerify);
    }

    #[test]
    fn server_rejects_forged_centre_ack() {
        let mut f = fixture();
        let ni = f.rng.next_nonce(32);
        let (_, login) = hs_build_login(&f.s, &f.card, &f.id, &f.pw, &f.sid, &ni).unwrap();
        let njr = f.rng.next_nonce(32);
        let (pending, fwd) = hs_server_forward(&f.st, &login, &njr).unwrap();
        let ack = hs_rc_verify(&f.rc, &fwd, &ni).unwrap();
        let mut bad = ack.clone();
        let c1 = bad.field_mut("C1").unwrap();
        *c1 = c1.flip_bit(0);
        assert_eq!(
            hs_server_verify_login(&f.st, &pending, &bad, &ni).unwrap_err(),
            RejectReason::RcAckVerify
        );
        let mut bad = ack;
        let c2 = bad.field_mut("C2").unwrap();
        *c2 = c2.flip_bit(0);
        assert_eq!(
            hs_server_verify_login(&f.st, &pending, &bad, &ni).unwrap_err(),
            RejectReason::LoginVerify
        );
    }

    #[test]
    fn wrong_password_fails_unlock() {
        let mut f = fixture();
        let wrong = f.rng.next_nonce(32);
        assert_eq!(
            hs_unlock(&f.s, &f.card, &f.id, &wrong).unwrap_err(),
            RejectReason::LocalPasswordCheck
        );
    }
}
