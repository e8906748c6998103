//! Command-line front end.
//!
//! Exit codes: 0 when the run ends as expected, 1 on an unexpected
//! outcome, 2 on configuration errors.

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::attacks::{run_attack, AttackId, Variant};
use crate::audit::{audit, user_knowledge};
use crate::deduce::{can_derive, DeductionLimit, DerivationStep, Derivability};
use crate::harness::Credentials;
use crate::schemes::{deploy, run_honest_session, SchemeId};
use crate::term::Term;
use crate::value::{HashFunction, Rng, ValueSpace, DEFAULT_WIDTH};

pub const EXIT_OK: i32 = 0;
pub const EXIT_UNEXPECTED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "dynid", version, about = "Dynamic-ID multi-server authentication lab")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an honest session, an attack, or the audit.
    Run(RunArgs),
    /// Ask the deduction engine whether a card holder can derive a term.
    Derive(DeriveArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Honest,
    Attack,
    Audit,
}

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    #[arg(long, value_parser = parse_scheme)]
    pub scheme: SchemeId,
    #[arg(long, value_enum)]
    pub mode: Mode,
    #[arg(long, value_parser = parse_attack)]
    pub attack: Option<AttackId>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value = "std256", value_parser = parse_hash)]
    pub hash: HashFunction,
    #[arg(long, default_value_t = DEFAULT_WIDTH)]
    pub width: usize,
    /// Write the JSON artifact here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct DeriveArgs {
    #[arg(long, value_parser = parse_scheme)]
    pub scheme: SchemeId,
    /// Goal term as an s-expression, e.g. `(hash Krc)`.
    #[arg(long)]
    pub goal: String,
    #[arg(long, default_value_t = DeductionLimit::default().max_depth)]
    pub depth: usize,
    #[arg(long, default_value_t = DeductionLimit::default().max_terms)]
    pub max_terms: usize,
}

fn parse_scheme(s: &str) -> Result<SchemeId, String> {
    s.parse()
}

fn parse_attack(s: &str) -> Result<AttackId, String> {
    s.parse()
}

fn parse_hash(s: &str) -> Result<HashFunction, String> {
    s.parse()
}

/// A validated `run` configuration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CliConfig {
    pub scheme: SchemeId,
    pub mode: Mode,
    pub attack: Option<AttackId>,
    pub seed: u64,
    pub space: ValueSpace,
    pub out: Option<PathBuf>,
}

impl CliConfig {
    pub fn from_args(args: &RunArgs) -> Result<Self, String> {
        let space = ValueSpace::new(args.width, args.hash).map_err(|e| e.to_string())?;
        match (args.mode, args.attack) {
            (Mode::Attack, None) => return Err("--mode attack requires --attack".into()),
            (Mode::Attack, Some(a)) if a.scheme() != args.scheme => {
                return Err(format!("attack {a} targets scheme {}, not {}", a.scheme(), args.scheme))
            }
            (Mode::Honest | Mode::Audit, Some(_)) => return Err("--attack is only valid with --mode attack".into()),
            _ => {}
        }
        Ok(CliConfig {
            scheme: args.scheme,
            mode: args.mode,
            attack: args.attack,
            seed: args.seed,
            space,
            out: args.out.clone(),
        })
    }
}

/// Parses `argv` and runs; returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match cli.command {
        Command::Run(args) => match CliConfig::from_args(&args) {
            Ok(cfg) => run(&cfg),
            Err(msg) => {
                eprintln!("error: {msg}");
                EXIT_CONFIG
            }
        },
        Command::Derive(args) => derive(&args),
    }
}

fn emit(out: &Option<PathBuf>, json: &str) -> Result<(), i32> {
    let result = match out {
        Some(path) => std::fs::write(path, format!("{json}\n")),
        None => writeln!(std::io::stdout().lock(), "{json}"),
    };
    result.map_err(|e| {
        eprintln!("error: cannot write output: {e}");
        EXIT_CONFIG
    })
}

pub fn run(cfg: &CliConfig) -> i32 {
    let (json, ok, summary) = match cfg.mode {
        Mode::Honest => {
            let mut rng = Rng::new(cfg.seed);
            let mut deployment = deploy(cfg.scheme, cfg.space, &mut rng);
            let sid = cfg.space.encode_atom("S1").expect("short label");
            deployment.register_server(&sid);
            let creds = Credentials {
                id: cfg.space.encode_atom("alice").expect("short label"),
                password: cfg.space.encode_atom("alice-password").expect("short label"),
            };
            let card = deployment.register_user(&creds, &mut rng);
            match run_honest_session(deployment.as_ref(), &creds, &card, &sid, &mut rng) {
                Ok(run) => {
                    let ok = run.both_accepted_with_equal_keys();
                    (run.transcript.to_json(), ok, format!("user {:?}, server {:?}", run.user.status, run.server.status))
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_UNEXPECTED;
                }
            }
        }
        Mode::Attack => {
            let attack = cfg.attack.expect("validated");
            match run_attack(attack, Variant::Genuine, cfg.space, cfg.seed) {
                Ok(v) => (
                    v.to_json(),
                    v.succeeded(),
                    format!("server_accepted={} keys_match={}", v.server_accepted, v.keys_match),
                ),
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_UNEXPECTED;
                }
            }
        }
        Mode::Audit => {
            let report = audit(cfg.scheme, cfg.space);
            let ok = report.matches_baseline;
            (report.to_json(), ok, format!("matches baseline: {ok}"))
        }
    };
    if let Err(code) = emit(&cfg.out, &json) {
        return code;
    }
    eprintln!("{} {:?} seed {}: {summary}", cfg.scheme, cfg.mode, cfg.seed);
    if ok {
        EXIT_OK
    } else {
        EXIT_UNEXPECTED
    }
}

#[derive(Serialize)]
struct DeriveOutput<'a> {
    scheme: SchemeId,
    goal: Term,
    derivable: bool,
    unknown: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    trace: Option<&'a [DerivationStep]>,
}

pub fn derive(args: &DeriveArgs) -> i32 {
    let goal: Term = match args.goal.parse() {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: bad goal term: {e}");
            return EXIT_CONFIG;
        }
    };
    let limit = DeductionLimit {
        max_depth: args.depth,
        max_terms: args.max_terms,
    };
    let d = can_derive(&user_knowledge(args.scheme), &goal, limit);
    let out = DeriveOutput {
        scheme: args.scheme,
        goal: goal.normalize(),
        derivable: d.is_derivable(),
        unknown: d == Derivability::Unknown,
        trace: d.trace(),
    };
    println!("{}", serde_json::to_string_pretty(&out).expect("serializes"));
    if d.is_derivable() {
        EXIT_OK
    } else {
        EXIT_UNEXPECTED
    }
}
