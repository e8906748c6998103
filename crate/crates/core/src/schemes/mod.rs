//! The four analysed schemes and a common deployment interface.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::harness::{
    drive_session, CardError, Credentials, Endpoint, HarnessError, Initiator, MessageTemplate,
    SessionRun, SmartCard, TamperHook, Transcript,
};
use crate::value::{Rng, Value, ValueSpace};

pub mod hsiang_shih;
pub mod lee;
pub mod li;
pub mod liao_wang;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum SchemeId {
    #[serde(rename = "lw")]
    LiaoWang,
    #[serde(rename = "hs")]
    HsiangShih,
    #[serde(rename = "lee")]
    Lee,
    #[serde(rename = "li")]
    Li,
}

impl SchemeId {
    pub const ALL: [SchemeId; 4] = [SchemeId::LiaoWang, SchemeId::HsiangShih, SchemeId::Lee, SchemeId::Li];

    pub fn short(self) -> &'static str {
        match self {
            SchemeId::LiaoWang => "lw",
            SchemeId::HsiangShih => "hs",
            SchemeId::Lee => "lee",
            SchemeId::Li => "li",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            SchemeId::LiaoWang => "Liao and Wang Scheme",
            SchemeId::HsiangShih => "Hsiang and Shih Scheme",
            SchemeId::Lee => "Lee et al. Scheme",
            SchemeId::Li => "Li et al. Scheme",
        }
    }

    /// Message templates in flow order.
    pub fn templates(self) -> &'static [&'static MessageTemplate] {
        match self {
            SchemeId::LiaoWang => liao_wang::TEMPLATES,
            SchemeId::HsiangShih => hsiang_shih::TEMPLATES,
            SchemeId::Lee => lee::TEMPLATES,
            SchemeId::Li => li::TEMPLATES,
        }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

impl FromStr for SchemeId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SchemeId::ALL
            .into_iter()
            .find(|id| id.short() == s)
            .ok_or_else(|| format!("unknown scheme `{s}` (expected lw, hs, lee or li)"))
    }
}

pub(crate) fn check_card(card: &SmartCard, scheme: SchemeId) -> Result<(), CardError> {
    if card.scheme != scheme {
        return Err(CardError::WrongScheme {
            expected: scheme,
            found: card.scheme,
        });
    }
    Ok(())
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DeploymentError {
    #[error(transparent)]
    Card(#[from] CardError),
    #[error("server {0} is not registered")]
    UnknownServer(Value),
    #[error(transparent)]
    Harness(#[from] HarnessError),
}

/// A registration centre together with the servers it provisioned.
///
/// Registration happens over trusted direct calls; only login traffic goes
/// over the channel.
pub trait Deployment {
    fn scheme(&self) -> SchemeId;

    fn space(&self) -> ValueSpace;

    fn register_server(&mut self, sid: &Value);

    /// Runs user registration, including any user-side precomputation, and
    /// returns the issued card.
    fn register_user(&self, creds: &Credentials, rng: &mut Rng) -> SmartCard;

    fn user(&self, creds: &Credentials, card: &SmartCard, sid: &Value) -> Result<Box<dyn Initiator>, CardError>;

    fn server(&self, sid: &Value) -> Option<Box<dyn Endpoint>>;

    /// Online registration-centre endpoint, for schemes that have one.
    fn rc(&self) -> Option<Box<dyn Endpoint>> {
        None
    }
}

/// Creates a fresh registration centre for `scheme`, drawing its master
/// secrets from `rng`.
pub fn deploy(scheme: SchemeId, space: ValueSpace, rng: &mut Rng) -> Box<dyn Deployment> {
    match scheme {
        SchemeId::LiaoWang => Box::new(liao_wang::LwDeployment::new(space, rng)),
        SchemeId::HsiangShih => Box::new(hsiang_shih::HsDeployment::new(space, rng)),
        SchemeId::Lee => Box::new(lee::LeeDeployment::new(space, rng)),
        SchemeId::Li => Box::new(li::LiDeployment::new(space, rng)),
    }
}

/// Runs the complete login flow between an honest user and server `sid`.
pub fn run_honest_session(
    deployment: &dyn Deployment,
    creds: &Credentials,
    card: &SmartCard,
    sid: &Value,
    rng: &mut Rng,
) -> Result<SessionRun, DeploymentError> {
    run_session_with(deployment, creds, card, sid, rng, None)
}

/// As [`run_honest_session`], with a hook that may alter messages in flight.
pub fn run_session_with(
    deployment: &dyn Deployment,
    creds: &Credentials,
    card: &SmartCard,
    sid: &Value,
    rng: &mut Rng,
    tamper: Option<&mut TamperHook<'_>>,
) -> Result<SessionRun, DeploymentError> {
    let mut user = deployment.user(creds, card, sid)?;
    let mut server = deployment
        .server(sid)
        .ok_or_else(|| DeploymentError::UnknownServer(sid.clone()))?;
    let mut rc = deployment.rc();
    let transcript = Transcript::new(deployment.scheme(), Some(rng.seed()), sid.clone());
    let run = drive_session(
        transcript,
        user.as_mut(),
        server.as_mut(),
        rc.as_mut().map(|r| r.as_mut() as &mut dyn Endpoint),
        rng,
        tamper,
    )?;
    Ok(run)
}

/// Small helper shared by all endpoint implementations.
#[derive(Clone, Debug)]
pub(crate) enum Phase<S> {
    Idle,
    Waiting(S),
    Done,
}
