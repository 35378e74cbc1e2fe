//! Scenario files: one term per line, `#` starts a comment line.
//!
//! ```text
//! seed(7)
//! ca_key("secret")
//! pool(64)
//! domain("db://enterprise/")
//! community(main, be)
//! community(other, "other.law")
//! adopt(alice, [role(manager), group(t1)])
//! adopt(bob, [group(t1)], [community(other), db("db://enterprise/bob")])
//! subscribe(bob, alice)
//! publish(alice, #memo#, "hello")
//! drain
//! ```
//!
//! Without a `community` line there is one community, `main`, under the
//! built-in enterprise law. A run with steps always ends drained.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::controller::DomainPolicy;
use crate::law::{parse_law, Law, LawError};
use crate::law_be::be_law;
use crate::member::CrudQuery;
use crate::search::PostPredicate;
use crate::support::AgentName;
use crate::syntax::SyntaxError;
use crate::term::Term;

use super::net::{Network, SimError, Transport};

pub const DEFAULT_POOL: usize = 1024;
pub const DEFAULT_CA_KEY: &str = "community-ca-key";

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LawSource {
    /// The built-in enterprise law.
    Be,
    /// A law file, relative to the scenario file.
    File(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommunitySpec {
    pub name: String,
    pub law: LawSource,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdoptOptions {
    pub community: Option<String>,
    pub db: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Step {
    Adopt {
        name: String,
        attrs: Vec<Term>,
        opts: AdoptOptions,
    },
    /// Adopt under `name` reusing the certificate `agent` was admitted with.
    Readopt { agent: AgentName, name: String },
    Certify { agent: AgentName, attrs: Vec<Term> },
    AddProfile { agent: AgentName, attr: Term },
    UpdateProfile { agent: AgentName, attr: Term },
    AddFilter { agent: AgentName, attr: Term },
    Publish { agent: AgentName, kind: String, body: String },
    Subscribe { subscriber: AgentName, publisher: AgentName },
    Dm { from: AgentName, to: AgentName, kind: String, body: String },
    Db { agent: AgentName, query: CrudQuery },
    Search { origin: AgentName, pred: PostPredicate, ttl: i64, threshold: i64 },
    Revoke { by: AgentName, target: AgentName },
    Send { from: AgentName, to: AgentName, msg: Term },
    Detach(AgentName),
    Attach(AgentName),
    Drain,
}

fn name_term(a: &AgentName) -> Term {
    a.to_term()
}

impl Step {
    pub fn to_term(&self) -> Term {
        let app = Term::app;
        match self {
            Step::Adopt { name, attrs, opts } => {
                let mut args = vec![Term::atom(name.clone()), Term::list(attrs.clone())];
                let mut o = Vec::new();
                if let Some(c) = &opts.community {
                    o.push(app("community", vec![Term::atom(c.clone())]));
                }
                if let Some(d) = &opts.db {
                    o.push(app("db", vec![Term::str(d.clone())]));
                }
                if !o.is_empty() {
                    args.push(Term::list(o));
                }
                app("adopt", args)
            }
            Step::Readopt { agent, name } => app("readopt", vec![name_term(agent), Term::atom(name.clone())]),
            Step::Certify { agent, attrs } => app("certify", vec![name_term(agent), Term::list(attrs.clone())]),
            Step::AddProfile { agent, attr } => app("add_profile", vec![name_term(agent), attr.clone()]),
            Step::UpdateProfile { agent, attr } => app("update_profile", vec![name_term(agent), attr.clone()]),
            Step::AddFilter { agent, attr } => app("add_filter", vec![name_term(agent), attr.clone()]),
            Step::Publish { agent, kind, body } => app(
                "publish",
                vec![name_term(agent), Term::tag(kind.clone()), Term::str(body.clone())],
            ),
            Step::Subscribe { subscriber, publisher } => {
                app("subscribe", vec![name_term(subscriber), name_term(publisher)])
            }
            Step::Dm { from, to, kind, body } => app(
                "dm",
                vec![
                    name_term(from),
                    name_term(to),
                    Term::tag(kind.clone()),
                    Term::str(body.clone()),
                ],
            ),
            Step::Db { agent, query } => app("db", vec![name_term(agent), query.to_term()]),
            Step::Search {
                origin,
                pred,
                ttl,
                threshold,
            } => app(
                "search",
                vec![name_term(origin), pred.to_term(), Term::Int(*ttl), Term::Int(*threshold)],
            ),
            Step::Revoke { by, target } => app("revoke", vec![name_term(by), name_term(target)]),
            Step::Send { from, to, msg } => app("send", vec![name_term(from), name_term(to), msg.clone()]),
            Step::Detach(a) => app("detach", vec![name_term(a)]),
            Step::Attach(a) => app("attach", vec![name_term(a)]),
            Step::Drain => Term::atom("drain"),
        }
    }

    fn from_term(t: &Term) -> Option<Step> {
        let a = t.args();
        let ag = |i: usize| AgentName::from_term(&a[i]);
        let kind = |i: usize| match &a[i] {
            Term::Tag(k) | Term::Atom(k) => Some(k.clone()),
            _ => None,
        };
        let text = |i: usize| a[i].as_str().map(str::to_string);
        let list = |i: usize| a[i].as_list().map(<[Term]>::to_vec);
        Some(match (t.functor()?, a.len()) {
            ("adopt", 2 | 3) => {
                let mut opts = AdoptOptions {
                    community: None,
                    db: None,
                };
                if a.len() == 3 {
                    for o in a[2].as_list()? {
                        if o.is("community", 1) {
                            opts.community = Some(o.args()[0].as_atom()?.to_string());
                        } else if o.is("db", 1) {
                            opts.db = Some(o.args()[0].as_str()?.to_string());
                        } else {
                            return None;
                        }
                    }
                }
                Step::Adopt {
                    name: a[0].as_atom()?.to_string(),
                    attrs: list(1)?,
                    opts,
                }
            }
            ("readopt", 2) => Step::Readopt {
                agent: ag(0)?,
                name: a[1].as_atom()?.to_string(),
            },
            ("certify", 2) => Step::Certify {
                agent: ag(0)?,
                attrs: list(1)?,
            },
            ("add_profile", 2) => Step::AddProfile {
                agent: ag(0)?,
                attr: a[1].clone(),
            },
            ("update_profile", 2) => Step::UpdateProfile {
                agent: ag(0)?,
                attr: a[1].clone(),
            },
            ("add_filter", 2) => Step::AddFilter {
                agent: ag(0)?,
                attr: a[1].clone(),
            },
            ("publish", 3) => Step::Publish {
                agent: ag(0)?,
                kind: kind(1)?,
                body: text(2)?,
            },
            ("subscribe", 2) => Step::Subscribe {
                subscriber: ag(0)?,
                publisher: ag(1)?,
            },
            ("dm", 4) => Step::Dm {
                from: ag(0)?,
                to: ag(1)?,
                kind: kind(2)?,
                body: text(3)?,
            },
            ("db", 2) => Step::Db {
                agent: ag(0)?,
                query: CrudQuery::from_term(&a[1]).ok()?,
            },
            ("search", 4) => Step::Search {
                origin: ag(0)?,
                pred: PostPredicate::from_term(&a[1])?,
                ttl: a[2].as_int()?,
                threshold: a[3].as_int()?,
            },
            ("revoke", 2) => Step::Revoke {
                by: ag(0)?,
                target: ag(1)?,
            },
            ("send", 3) => Step::Send {
                from: ag(0)?,
                to: ag(1)?,
                msg: a[2].clone(),
            },
            ("detach", 1) => Step::Detach(ag(0)?),
            ("attach", 1) => Step::Attach(ag(0)?),
            ("drain", 0) => Step::Drain,
            _ => return None,
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("line {line}: {source}")]
    Syntax { line: usize, source: SyntaxError },
    #[error("line {line}: unrecognised line `{text}`")]
    Unknown { line: usize, text: String },
    #[error("line {line}: search parameters must be non-negative")]
    NegativeSearch { line: usize },
    #[error("law `{path}`: {source}")]
    Law { path: String, source: LawError },
    #[error("reading `{path}`: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scenario {
    pub seed: u64,
    pub ca_key: String,
    pub pool: usize,
    pub domain: Vec<String>,
    pub communities: Vec<CommunitySpec>,
    pub steps: Vec<Step>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            seed: 0,
            ca_key: DEFAULT_CA_KEY.to_string(),
            pool: DEFAULT_POOL,
            domain: DomainPolicy::default().prefixes,
            communities: Vec::new(),
            steps: Vec::new(),
        }
    }
}

impl Scenario {
    pub fn new(seed: u64) -> Self {
        Scenario {
            seed,
            ..Default::default()
        }
    }

    pub fn push(&mut self, step: Step) -> &mut Self {
        self.steps.push(step);
        self
    }

    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        let mut s = Scenario::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let src = raw.trim();
            if src.is_empty() || src.starts_with('#') {
                continue;
            }
            let t = Term::parse(src).map_err(|source| ScenarioError::Syntax { line, source })?;
            let unknown = || ScenarioError::Unknown {
                line,
                text: src.to_string(),
            };
            let a = t.args();
            match (t.functor(), a.len()) {
                (Some("seed"), 1) => s.seed = a[0].as_int().and_then(|n| u64::try_from(n).ok()).ok_or_else(unknown)?,
                (Some("ca_key"), 1) => s.ca_key = a[0].as_str().ok_or_else(unknown)?.to_string(),
                (Some("pool"), 1) => {
                    s.pool = a[0].as_int().and_then(|n| usize::try_from(n).ok()).ok_or_else(unknown)?
                }
                (Some("domain"), 1) => {
                    if s.domain == DomainPolicy::default().prefixes {
                        s.domain.clear();
                    }
                    s.domain.push(a[0].as_str().ok_or_else(unknown)?.to_string());
                }
                (Some("community"), 2) => {
                    let name = a[0].as_atom().ok_or_else(unknown)?.to_string();
                    let law = match &a[1] {
                        Term::Atom(b) if b == "be" => LawSource::Be,
                        Term::Str(p) => LawSource::File(p.clone()),
                        _ => return Err(unknown()),
                    };
                    s.communities.push(CommunitySpec { name, law });
                }
                _ => {
                    let step = Step::from_term(&t).ok_or_else(unknown)?;
                    if let Step::Search { ttl, threshold, .. } = &step {
                        if *ttl < 0 || *threshold < 0 {
                            return Err(ScenarioError::NegativeSearch { line });
                        }
                    }
                    s.steps.push(step);
                }
            }
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Scenario::parse(&text)
    }

    fn community_specs(&self) -> Vec<CommunitySpec> {
        if self.communities.is_empty() {
            vec![CommunitySpec {
                name: "main".into(),
                law: LawSource::Be,
            }]
        } else {
            self.communities.clone()
        }
    }

    /// Loads every law the scenario names. File paths resolve against
    /// `base`.
    pub fn load_laws(&self, base: &Path) -> Result<Vec<(String, Arc<Law>)>, ScenarioError> {
        self.community_specs()
            .into_iter()
            .map(|c| {
                let law = match &c.law {
                    LawSource::Be => be_law(),
                    LawSource::File(p) => {
                        let path: PathBuf = base.join(p);
                        let text = std::fs::read_to_string(&path).map_err(|source| ScenarioError::Io {
                            path: path.display().to_string(),
                            source,
                        })?;
                        Arc::new(parse_law(&text).map_err(|source| ScenarioError::Law {
                            path: path.display().to_string(),
                            source,
                        })?)
                    }
                };
                Ok((c.name, law))
            })
            .collect()
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "seed({})", self.seed)?;
        writeln!(f, "ca_key({})", Term::str(self.ca_key.clone()))?;
        writeln!(f, "pool({})", self.pool)?;
        for d in &self.domain {
            writeln!(f, "domain({})", Term::str(d.clone()))?;
        }
        for c in &self.communities {
            let law = match &c.law {
                LawSource::Be => Term::atom("be"),
                LawSource::File(p) => Term::str(p.clone()),
            };
            writeln!(f, "community({}, {law})", c.name)?;
        }
        for s in &self.steps {
            writeln!(f, "{}", s.to_term())?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("setup: {0}")]
    Setup(SimError),
    #[error("step {step}: {source}")]
    Step { step: usize, source: SimError },
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub transport: Transport,
    /// Directory law file paths are relative to.
    pub base_dir: Option<PathBuf>,
}

/// Runs a scenario to completion. Refused adoptions and refused sends are
/// outcomes recorded in the trace; only malformed steps abort the run.
pub fn run(scenario: &Scenario, opts: &RunOptions) -> Result<Network, RunError> {
    let laws = scenario.load_laws(opts.base_dir.as_deref().unwrap_or(Path::new(".")))?;
    run_with_laws(scenario, laws, opts)
}

pub fn run_with_laws(
    scenario: &Scenario,
    laws: Vec<(String, Arc<Law>)>,
    opts: &RunOptions,
) -> Result<Network, RunError> {
    let seed = opts.seed.unwrap_or(scenario.seed);
    let mut net = Network::with_transport(seed, opts.transport).map_err(RunError::Setup)?;
    for (name, law) in laws {
        let domain = DomainPolicy {
            prefixes: scenario.domain.clone(),
        };
        net.add_community(&name, law, scenario.ca_key.as_bytes(), scenario.pool, domain)
            .map_err(RunError::Setup)?;
    }
    for (i, step) in scenario.steps.iter().enumerate() {
        net.mark_step(i, step.to_term());
        apply(&mut net, step).map_err(|source| RunError::Step { step: i, source })?;
    }
    let drained = scenario.steps.last().is_none_or(|s| *s == Step::Drain);
    if !drained || net.pending() > 0 {
        net.drain();
    }
    Ok(net)
}

fn apply(net: &mut Network, step: &Step) -> Result<(), SimError> {
    match step {
        Step::Adopt { name, attrs, opts } => {
            match net.adopt(name, attrs.clone(), opts.community.as_deref(), opts.db.clone()) {
                Ok(_) | Err(SimError::Refused { .. }) => Ok(()),
                Err(e) => Err(e),
            }
        }
        Step::Readopt { agent, name } => {
            let cert = net
                .certificate(agent)
                .cloned()
                .ok_or_else(|| SimError::UnknownAgent(agent.to_string()))?;
            let community = net.community_of(agent).map(str::to_string);
            match net.adopt_with_cert(name, cert, community.as_deref(), None) {
                Ok(_) | Err(SimError::Refused { .. }) => Ok(()),
                Err(e) => Err(e),
            }
        }
        Step::Certify { agent, attrs } => net.certify(agent, attrs.clone()),
        Step::AddProfile { agent, attr } => net.add_profile(agent, attr.clone()),
        Step::UpdateProfile { agent, attr } => net.update_profile(agent, attr.clone()),
        Step::AddFilter { agent, attr } => net.add_filter(agent, attr.clone()),
        Step::Publish { agent, kind, body } => net.publish(agent, kind, body).map(|_| ()),
        Step::Subscribe { subscriber, publisher } => net.subscribe(subscriber, publisher),
        Step::Dm { from, to, kind, body } => net.dm(from, to, kind, body),
        Step::Db { agent, query } => net.db(agent, query),
        Step::Search {
            origin,
            pred,
            ttl,
            threshold,
        } => net.search(origin, pred, *ttl, *threshold).map(|_| ()),
        Step::Revoke { by, target } => net.revoke(by, target),
        Step::Send { from, to, msg } => net.send(from, to, msg.clone()),
        Step::Detach(a) => net.detach(a),
        Step::Attach(a) => net.attach(a).map(|_| ()),
        Step::Drain => {
            net.drain();
            Ok(())
        }
    }
}
