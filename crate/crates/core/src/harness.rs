//! Scheme-agnostic session machinery.
//!
//! Parties are [`Endpoint`]s exchanging [`Message`]s over an insecure
//! in-memory channel. Every message placed on the channel is appended to a
//! [`Transcript`]. An optional tamper hook sees each in-flight message before
//! delivery; the adversary surface ([`AdversaryContext`], [`inject`],
//! [`extract_card`], [`record`]) works against the same endpoints.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::ser::{SerializeMap, SerializeStruct};
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::schemes::SchemeId;
use crate::value::{Rng, Value, ValueSpace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum RoleKind {
    User,
    Server,
    RegistrationCentre,
    Adversary,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Role {
    pub kind: RoleKind,
    pub identity: Value,
}

/// Fixed shape of one protocol message.
#[derive(Debug, PartialEq, Eq)]
pub struct MessageTemplate {
    pub label: &'static str,
    pub fields: &'static [&'static str],
    pub sender: RoleKind,
    pub receiver: RoleKind,
}

impl MessageTemplate {
    /// Builds a message; `values` are in template field order.
    pub fn build<const N: usize>(&'static self, values: [Value; N]) -> Message {
        assert_eq!(N, self.fields.len(), "wrong arity for {}", self.label);
        Message {
            label: self.label.to_string(),
            fields: self
                .fields
                .iter()
                .map(|f| f.to_string())
                .zip(values)
                .collect(),
            sender: self.sender,
            receiver: self.receiver,
        }
    }

    pub fn matches(&self, msg: &Message) -> bool {
        msg.label == self.label
            && msg.sender == self.sender
            && msg.receiver == self.receiver
            && msg.fields.len() == self.fields.len()
            && msg.fields.iter().zip(self.fields).all(|((name, _), want)| name == want)
    }

    /// Field values in template order.
    pub fn unpack<const N: usize>(&self, msg: &Message) -> Result<[Value; N], TemplateMismatch> {
        if N != self.fields.len() || !self.matches(msg) {
            return Err(TemplateMismatch {
                expected: self.label,
                got: msg.label.clone(),
            });
        }
        Ok(std::array::from_fn(|i| msg.fields[i].1.clone()))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("message `{got}` does not match template `{expected}`")]
pub struct TemplateMismatch {
    pub expected: &'static str,
    pub got: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Message {
    pub label: String,
    pub fields: Vec<(String, Value)>,
    pub sender: RoleKind,
    pub receiver: RoleKind,
}

impl Message {
    pub fn field(&self, name: &str) -> Option<&Value> {
        self.fields.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn field_mut(&mut self, name: &str) -> Option<&mut Value> {
        self.fields.iter_mut().find(|(n, _)| n == name).map(|(_, v)| v)
    }
}

struct FieldMap<'a>(&'a [(String, Value)]);

impl Serialize for FieldMap<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (name, value) in self.0 {
            map.serialize_entry(name, value)?;
        }
        map.end()
    }
}

impl Serialize for Message {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("Message", 4)?;
        s.serialize_field("label", &self.label)?;
        s.serialize_field("sender", &self.sender)?;
        s.serialize_field("receiver", &self.receiver)?;
        s.serialize_field("fields", &FieldMap(&self.fields))?;
        s.end()
    }
}

/// Which comparator failed, at which step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum RejectReason {
    /// Card unlock failed before any message was sent.
    LocalPasswordCheck,
    /// Server-side check of the login request.
    LoginVerify,
    /// User-side check of the server acknowledgement.
    ServerAckVerify,
    /// Server-side check of the user acknowledgement.
    UserAckVerify,
    /// Registration centre check of the forwarded login.
    RcVerify,
    /// Server-side check of the registration centre acknowledgement.
    RcAckVerify,
    /// Registration centre does not know the requesting server.
    UnknownServer,
    /// Message arrived in a state that does not expect it.
    UnexpectedMessage,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "status", content = "reason")]
pub enum SessionStatus {
    Pending,
    Accepted,
    Rejected(RejectReason),
}

/// One party's view of how the session ended.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SessionOutcome {
    #[serde(flatten)]
    pub status: SessionStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub session_key: Option<Value>,
}

impl SessionOutcome {
    pub fn pending() -> Self {
        SessionOutcome {
            status: SessionStatus::Pending,
            session_key: None,
        }
    }

    pub fn accepted(key: Value) -> Self {
        SessionOutcome {
            status: SessionStatus::Accepted,
            session_key: Some(key),
        }
    }

    pub fn rejected(reason: RejectReason) -> Self {
        SessionOutcome {
            status: SessionStatus::Rejected(reason),
            session_key: None,
        }
    }

    pub fn is_accepted(&self) -> bool {
        self.status == SessionStatus::Accepted
    }

    pub fn rejection(&self) -> Option<RejectReason> {
        match self.status {
            SessionStatus::Rejected(r) => Some(r),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Outcomes {
    pub user: SessionOutcome,
    pub server: SessionOutcome,
}

/// Append-only log of one session's channel traffic.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Transcript {
    pub scheme: SchemeId,
    pub seed: Option<u64>,
    /// Identity of the server the session was addressed to.
    pub server: Value,
    pub entries: Vec<Message>,
    pub outcomes: Option<Outcomes>,
}

impl Transcript {
    pub fn new(scheme: SchemeId, seed: Option<u64>, server: Value) -> Self {
        Transcript {
            scheme,
            seed,
            server,
            entries: Vec::new(),
            outcomes: None,
        }
    }

    pub fn push(&mut self, msg: Message) {
        self.entries.push(msg);
    }

    pub fn labels(&self) -> Vec<&str> {
        self.entries.iter().map(|m| m.label.as_str()).collect()
    }

    pub fn find(&self, label: &str) -> Option<&Message> {
        self.entries.iter().find(|m| m.label == label)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("transcript serializes")
    }
}

/// Tokens issued by a registration centre, plus values the user adds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SmartCard {
    pub scheme: SchemeId,
    pub space: ValueSpace,
    pub tokens: BTreeMap<String, Value>,
}

impl SmartCard {
    pub fn new(scheme: SchemeId, space: ValueSpace) -> Self {
        SmartCard {
            scheme,
            space,
            tokens: BTreeMap::new(),
        }
    }

    pub fn with(mut self, name: &str, value: Value) -> Self {
        self.tokens.insert(name.to_string(), value);
        self
    }

    pub fn token(&self, name: &str) -> Result<&Value, CardError> {
        self.tokens.get(name).ok_or_else(|| CardError::MissingToken(name.to_string()))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CardError {
    #[error("card was issued for {found:?}, expected {expected:?}")]
    WrongScheme { expected: SchemeId, found: SchemeId },
    #[error("card has no token `{0}`")]
    MissingToken(String),
}

/// Everything read off a card by the adversary.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ExtractedCard {
    pub scheme: SchemeId,
    pub hash: crate::value::HashFunction,
    pub tokens: BTreeMap<String, Value>,
}

/// User-side credentials.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Credentials {
    pub id: Value,
    pub password: Value,
}

impl Credentials {
    pub fn random(space: &ValueSpace, rng: &mut Rng) -> Self {
        Credentials {
            id: rng.next_nonce(space.width),
            password: rng.next_nonce(space.width),
        }
    }
}

/// A protocol party.
pub trait Endpoint {
    fn role(&self) -> RoleKind;

    /// Processes one delivered message and returns the replies to send.
    fn handle(&mut self, msg: &Message, rng: &mut Rng) -> Result<Vec<Message>, RejectReason>;

    fn outcome(&self) -> SessionOutcome;
}

/// The party that opens a session.
pub trait Initiator: Endpoint {
    fn initiate(&mut self, rng: &mut Rng) -> Result<Message, RejectReason>;
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HarnessError {
    #[error("no party to receive `{label}` for {receiver:?}")]
    NoRoute { label: String, receiver: RoleKind },
    #[error(transparent)]
    TemplateMismatch(#[from] TemplateMismatch),
    #[error("message `{0}` matches no template of this scheme")]
    UnknownMessage(String),
}

/// Called with the channel position and each message before delivery.
pub type TamperHook<'a> = dyn FnMut(usize, &mut Message) + 'a;

/// Complete result of one driven session.
#[derive(Clone, Debug)]
pub struct SessionRun {
    pub transcript: Transcript,
    pub user: SessionOutcome,
    pub server: SessionOutcome,
}

impl SessionRun {
    pub fn both_accepted_with_equal_keys(&self) -> bool {
        self.user.is_accepted()
            && self.server.is_accepted()
            && self.user.session_key.is_some()
            && self.user.session_key == self.server.session_key
    }
}

/// Drives a session from the user's first message until the channel is
/// quiet or some party rejects.
pub fn drive_session(
    transcript: Transcript,
    user: &mut dyn Initiator,
    server: &mut dyn Endpoint,
    mut rc: Option<&mut dyn Endpoint>,
    rng: &mut Rng,
    mut tamper: Option<&mut TamperHook<'_>>,
) -> Result<SessionRun, HarnessError> {
    let mut transcript = transcript;
    let mut queue = VecDeque::new();
    if let Ok(first) = user.initiate(rng) {
        queue.push_back(first);
    }
    while let Some(mut msg) = queue.pop_front() {
        if let Some(hook) = tamper.as_mut() {
            hook(transcript.entries.len(), &mut msg);
        }
        transcript.push(msg.clone());
        let target: &mut dyn Endpoint = match msg.receiver {
            RoleKind::User => user,
            RoleKind::Server => server,
            RoleKind::RegistrationCentre => match rc.as_deref_mut() {
                Some(rc) => rc,
                None => {
                    return Err(HarnessError::NoRoute {
                        label: msg.label,
                        receiver: msg.receiver,
                    })
                }
            },
            RoleKind::Adversary => {
                return Err(HarnessError::NoRoute {
                    label: msg.label,
                    receiver: msg.receiver,
                })
            }
        };
        match target.handle(&msg, rng) {
            Ok(replies) => queue.extend(replies),
            Err(_) => break,
        }
    }
    let outcomes = Outcomes {
        user: user.outcome(),
        server: server.outcome(),
    };
    transcript.outcomes = Some(outcomes.clone());
    Ok(SessionRun {
        transcript,
        user: outcomes.user,
        server: outcomes.server,
    })
}

/// Adversary state across one attack.
pub struct AdversaryContext {
    pub recorded: Vec<Transcript>,
    extracted_cards: Vec<ExtractedCard>,
    pub own_credentials: Option<(Credentials, SmartCard)>,
    pub rng: Rng,
}

impl AdversaryContext {
    pub fn new(rng: Rng) -> Self {
        AdversaryContext {
            recorded: Vec::new(),
            extracted_cards: Vec::new(),
            own_credentials: None,
            rng,
        }
    }

    pub fn extracted_cards(&self) -> &[ExtractedCard] {
        &self.extracted_cards
    }
}

/// Reads every stored token off `card`.
pub fn extract_card(ctx: &mut AdversaryContext, card: &SmartCard) -> BTreeMap<String, Value> {
    let extracted = ExtractedCard {
        scheme: card.scheme,
        hash: card.space.hash,
        tokens: card.tokens.clone(),
    };
    ctx.extracted_cards.push(extracted);
    card.tokens.clone()
}

/// Stores an observed transcript.
pub fn record(ctx: &mut AdversaryContext, transcript: Transcript) {
    ctx.recorded.push(transcript);
}

/// What happened when an injected message was delivered.
#[derive(Clone, Debug)]
pub struct DeliveryReceipt {
    pub replies: Vec<Message>,
    pub rejected: Option<RejectReason>,
    pub target_outcome: SessionOutcome,
}

/// Delivers `msg` to `target` as if it came from its claimed sender and
/// appends it to `transcript`. Replies are returned, not logged: they are
/// logged when the caller delivers them onward.
pub fn inject(
    ctx: &mut AdversaryContext,
    transcript: &mut Transcript,
    msg: Message,
    target: &mut dyn Endpoint,
) -> Result<DeliveryReceipt, HarnessError> {
    let templates = transcript.scheme.templates();
    let Some(template) = templates.iter().find(|t| t.label == msg.label) else {
        return Err(HarnessError::UnknownMessage(msg.label));
    };
    if !template.matches(&msg) {
        return Err(TemplateMismatch {
            expected: template.label,
            got: msg.label,
        }
        .into());
    }
    if msg.receiver != target.role() {
        return Err(HarnessError::NoRoute {
            label: msg.label,
            receiver: msg.receiver,
        });
    }
    transcript.push(msg.clone());
    let (replies, rejected) = match target.handle(&msg, &mut ctx.rng) {
        Ok(replies) => (replies, None),
        Err(reason) => (Vec::new(), Some(reason)),
    };
    Ok(DeliveryReceipt {
        replies,
        rejected,
        target_outcome: target.outcome(),
    })
}
