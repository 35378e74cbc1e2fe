//! The generic controller: hosts one agent's control state under one law,
//! evaluates its events one at a time and carries out the rulings.

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::law::{evaluate, EvalDiagnostic, Event, Law, LawHash, RulingOp};
use crate::member::{CrudQuery, MemberDatabase};
use crate::search::search_db;
use crate::state::ControlState;
use crate::support::{AgentName, Certificate, ControllerConfig, ControllerId, Fingerprint};
use crate::term::Term;
use crate::wire::Envelope;

/// Resource name the law uses for the member database.
pub const DB_RESOURCE: &str = "db";

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CertificateBlacklist {
    entries: BTreeSet<Fingerprint>,
}

impl CertificateBlacklist {
    /// Returns false when the fingerprint was already present.
    pub fn insert(&mut self, fp: Fingerprint) -> bool {
        self.entries.insert(fp)
    }

    pub fn contains(&self, fp: &Fingerprint) -> bool {
        self.entries.contains(fp)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Fingerprint> {
        self.entries.iter()
    }
}

/// Database locators a member may supply at adoption.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DomainPolicy {
    pub prefixes: Vec<String>,
}

impl Default for DomainPolicy {
    fn default() -> Self {
        DomainPolicy {
            prefixes: vec!["db://enterprise/".to_string()],
        }
    }
}

impl DomainPolicy {
    pub fn allows(&self, address: &str) -> bool {
        self.prefixes.iter().any(|p| address.starts_with(p.as_str()))
    }

    /// Address used when a member supplies none.
    pub fn default_address(&self, name: &AgentName) -> String {
        let prefix = self.prefixes.first().map(String::as_str).unwrap_or("db://");
        format!("{prefix}{name}")
    }
}

/// One evaluation as the controller performed it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalRecord {
    pub event: Event,
    pub rule: Option<String>,
    pub ops: Vec<RulingOp>,
    pub diagnostic: Option<EvalDiagnostic>,
}

impl EvalRecord {
    pub fn fired(&self) -> bool {
        self.rule.is_some() && self.diagnostic.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Delivery {
    pub src: Term,
    pub msg: Term,
    /// False when the actor was detached and the message went nowhere.
    pub online: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DbCall {
    pub query: Term,
    pub result: Term,
}

/// Everything one event caused at this controller.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dispatch {
    pub eval: EvalRecord,
    pub envelopes: Vec<Envelope>,
    pub deliveries: Vec<Delivery>,
    /// Messages parked in the offline queue.
    pub queued: Vec<Term>,
    /// Database calls made; each result comes back later as a
    /// `submitted` event.
    pub db_calls: Vec<DbCall>,
    /// Fingerprint to broadcast to every controller.
    pub broadcast: Option<Fingerprint>,
    pub quit: bool,
    /// Ops that could not be carried out, with the reason.
    pub skipped: Vec<(RulingOp, String)>,
}

impl Dispatch {
    fn new(eval: EvalRecord) -> Self {
        Dispatch {
            eval,
            envelopes: Vec::new(),
            deliveries: Vec::new(),
            queued: Vec::new(),
            db_calls: Vec::new(),
            broadcast: None,
            quit: false,
            skipped: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ControllerError {
    #[error("no law loaded")]
    NoLaw,
    #[error("controller has not been adopted")]
    NotAdopted,
    #[error("controller is already adopted")]
    AlreadyAdopted,
    #[error("agent has quit")]
    Dead,
    #[error("certificate signature does not verify")]
    InvalidSignature,
    #[error("certificate {0} is blacklisted")]
    Blacklisted(Fingerprint),
    #[error("database address `{0}` is outside the allowed domain")]
    DomainViolation(String),
    #[error("the law refused the adoption")]
    RefusedByLaw(Box<EvalRecord>),
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum Rejection {
    #[error("controller is not serving an agent")]
    NotAdopted,
    #[error("agent has quit")]
    Dead,
    #[error("envelope addressed to `{0}`")]
    Misrouted(AgentName),
    #[error("sender operates under law {got}, expected {expected}")]
    Untrusted { expected: LawHash, got: LawHash },
}

impl Rejection {
    pub fn reason(&self) -> &'static str {
        match self {
            Rejection::NotAdopted => "notAdopted",
            Rejection::Dead => "dead",
            Rejection::Misrouted(_) => "misrouted",
            Rejection::Untrusted { .. } => "untrusted",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Controller {
    id: ControllerId,
    config: ControllerConfig,
    law: Option<Arc<Law>>,
    agent: Option<AgentName>,
    state: ControlState,
    cert: Option<Certificate>,
    db: Option<MemberDatabase>,
    blacklist: CertificateBlacklist,
    alive: bool,
    quit: bool,
    attached: bool,
    offline: Vec<Term>,
}

impl Controller {
    /// A fresh controller: no law, no agent, empty state.
    pub fn new(id: ControllerId, config: ControllerConfig, blacklist: CertificateBlacklist) -> Self {
        Controller {
            id,
            config,
            law: None,
            agent: None,
            state: ControlState::default(),
            cert: None,
            db: None,
            blacklist,
            alive: false,
            quit: false,
            attached: true,
            offline: Vec::new(),
        }
    }

    pub fn id(&self) -> ControllerId {
        self.id
    }

    pub fn law(&self) -> Option<&Arc<Law>> {
        self.law.as_ref()
    }

    pub fn agent(&self) -> Option<&AgentName> {
        self.agent.as_ref()
    }

    pub fn state(&self) -> &ControlState {
        &self.state
    }

    pub fn certificate(&self) -> Option<&Certificate> {
        self.cert.as_ref()
    }

    pub fn database(&self) -> Option<&MemberDatabase> {
        self.db.as_ref()
    }

    pub fn blacklist(&self) -> &CertificateBlacklist {
        &self.blacklist
    }

    pub fn is_alive(&self) -> bool {
        self.alive
    }

    pub fn has_quit(&self) -> bool {
        self.quit
    }

    pub fn is_attached(&self) -> bool {
        self.attached
    }

    pub fn offline_queue(&self) -> &[Term] {
        &self.offline
    }

    pub fn load_law(&mut self, law: Arc<Law>) {
        self.state = law.fresh_state();
        self.law = Some(law);
    }

    fn law_or_err(&self) -> Result<Arc<Law>, ControllerError> {
        self.law.clone().ok_or(ControllerError::NoLaw)
    }

    fn check_cert(&self, cert: &Certificate) -> Result<(), ControllerError> {
        if !self.config.ca.verify(cert) {
            return Err(ControllerError::InvalidSignature);
        }
        let fp = cert.fingerprint();
        if self.blacklist.contains(&fp) {
            return Err(ControllerError::Blacklisted(fp));
        }
        Ok(())
    }

    /// Fires `adopted` for `name`. The law refuses by ruling nothing or by
    /// ruling `quit`; the controller then stays fresh.
    pub fn adopt(
        &mut self,
        name: AgentName,
        cert: Certificate,
        db_address: Option<String>,
    ) -> Result<Dispatch, ControllerError> {
        let law = self.law_or_err()?;
        if self.agent.is_some() || self.quit {
            return Err(ControllerError::AlreadyAdopted);
        }
        self.check_cert(&cert)?;
        let address = db_address.unwrap_or_else(|| self.config.domain.default_address(&name));
        if !self.config.domain.allows(&address) {
            return Err(ControllerError::DomainViolation(address));
        }

        let event = Event::adopted(&name, cert.content_term());
        let ruling = evaluate(&law, &event, &law.fresh_state());
        let record = EvalRecord {
            event,
            rule: ruling.rule.clone(),
            ops: ruling.ops.clone(),
            diagnostic: ruling.diagnostic.clone(),
        };
        if !record.fired() || record.ops.contains(&RulingOp::Quit) {
            return Err(ControllerError::RefusedByLaw(Box::new(record)));
        }
        self.agent = Some(name);
        self.cert = Some(cert);
        self.db = Some(MemberDatabase::new(address));
        self.alive = true;
        self.state = law.fresh_state();
        Ok(self.execute(record, ruling.state))
    }

    /// Presents an additional certificate after adoption.
    pub fn on_certificate(&mut self, cert: Certificate) -> Result<Dispatch, ControllerError> {
        let me = self.live_agent()?;
        self.check_cert(&cert)?;
        self.fire(Event::certified(&me, cert.content_term()))
    }

    pub fn on_actor_send(&mut self, target: &AgentName, msg: Term) -> Result<Dispatch, ControllerError> {
        let me = self.live_agent()?;
        self.fire(Event::sent(&me, msg, target))
    }

    /// Accepts iff the sender's controller runs the same law.
    pub fn verify_peer(&self, env: &Envelope) -> bool {
        self.law.as_ref().is_some_and(|l| l.hash() == env.law_hash)
    }

    pub fn on_network_arrival(&mut self, env: &Envelope) -> Result<Dispatch, Rejection> {
        let Some(me) = self.agent.clone() else {
            return Err(Rejection::NotAdopted);
        };
        if !self.alive {
            return Err(Rejection::Dead);
        }
        if env.dst != me {
            return Err(Rejection::Misrouted(env.dst.clone()));
        }
        if !self.verify_peer(env) {
            let expected = self.law.as_ref().map(|l| l.hash()).unwrap_or(LawHash([0; 32]));
            return Err(Rejection::Untrusted {
                expected,
                got: env.law_hash,
            });
        }
        let event = Event::arrived(&env.src, env.payload(), &me);
        self.fire(event).map_err(|_| Rejection::Dead)
    }

    /// The database's answer to an earlier `release`.
    pub fn on_db_reply(&mut self, result: Term) -> Result<Dispatch, ControllerError> {
        let me = self.live_agent()?;
        self.fire(Event::submitted(DB_RESOURCE, result, &me))
    }

    pub fn on_blacklist_notice(&mut self, fp: Fingerprint) -> bool {
        self.blacklist.insert(fp)
    }

    /// Idempotent.
    pub fn execute_quit(&mut self) {
        self.alive = false;
        self.quit = true;
        self.offline.clear();
    }

    pub fn detach(&mut self) {
        self.attached = false;
    }

    /// Reattaches the actor and hands over the offline queue.
    pub fn attach(&mut self) -> Vec<Term> {
        self.attached = true;
        std::mem::take(&mut self.offline)
    }

    fn live_agent(&self) -> Result<AgentName, ControllerError> {
        match (&self.agent, self.alive) {
            (Some(a), true) => Ok(a.clone()),
            (Some(_), false) => Err(ControllerError::Dead),
            (None, _) if self.quit => Err(ControllerError::Dead),
            (None, _) if self.law.is_none() => Err(ControllerError::NoLaw),
            (None, _) => Err(ControllerError::NotAdopted),
        }
    }

    fn fire(&mut self, event: Event) -> Result<Dispatch, ControllerError> {
        let law = self.law_or_err()?;
        let ruling = evaluate(&law, &event, &self.state);
        let record = EvalRecord {
            event,
            rule: ruling.rule,
            ops: ruling.ops,
            diagnostic: ruling.diagnostic,
        };
        Ok(self.execute(record, ruling.state))
    }

    fn execute(&mut self, record: EvalRecord, new_state: ControlState) -> Dispatch {
        self.state = new_state;
        let law_hash = self.law.as_ref().map(|l| l.hash()).expect("law loaded");
        let me = self.agent.clone().expect("adopted");
        let mut d = Dispatch::new(record);
        let ops = d.eval.ops.clone();
        for op in ops {
            if d.quit && !op.is_delta() {
                d.skipped.push((op, "agent has quit".into()));
                continue;
            }
            match &op {
                RulingOp::Forward { msg, dst, profile, .. } => match AgentName::from_term(dst) {
                    Some(dst) => d.envelopes.push(Envelope {
                        src: me.clone(),
                        dst,
                        msg: msg.clone(),
                        law_hash,
                        profile: profile.clone(),
                    }),
                    None => d.skipped.push((op.clone(), "destination is not an agent name".into())),
                },
                RulingOp::Deliver { src, msg, .. } => d.deliveries.push(Delivery {
                    src: src.clone(),
                    msg: msg.clone(),
                    online: self.attached,
                }),
                RulingOp::Release { msg, resource, .. } => {
                    if resource.as_atom() != Some(DB_RESOURCE) {
                        d.skipped.push((op.clone(), format!("unknown resource `{resource}`")));
                        continue;
                    }
                    let db = self.db.as_mut().expect("adopted controllers own a database");
                    let result = run_db(db, msg);
                    d.db_calls.push(DbCall {
                        query: msg.clone(),
                        result,
                    });
                }
                RulingOp::Inform { msg, audience } => {
                    match (msg.as_atom(), audience.as_atom()) {
                        (Some("certificateBlacklist"), Some("allControllers")) => {
                            let fp = self.cert.as_ref().expect("adopted").fingerprint();
                            self.blacklist.insert(fp);
                            d.broadcast = Some(fp);
                        }
                        (_, Some("offline")) => {
                            if !self.attached {
                                self.offline.push(msg.clone());
                                d.queued.push(msg.clone());
                            }
                        }
                        _ => d.skipped.push((op.clone(), format!("unknown audience `{audience}`"))),
                    }
                }
                RulingOp::Quit => {
                    self.execute_quit();
                    d.quit = true;
                }
                RulingOp::AddState(_) | RulingOp::RemoveState(_) => {}
            }
        }
        d
    }
}

fn run_db(db: &mut MemberDatabase, query: &Term) -> Term {
    if let Some(found) = search_db(db, query) {
        return found;
    }
    match CrudQuery::from_term(query) {
        Ok(q) => db.crud_execute(&q),
        Err(_) => Term::app("error", vec![Term::app("unsupported", vec![query.clone()])]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::law_be::be_law;
    use crate::support::CertificateAuthority;

    fn t(s: &str) -> Term {
        Term::parse(s).unwrap()
    }

    fn config() -> ControllerConfig {
        ControllerConfig {
            ca: Arc::new(CertificateAuthority::new("ca", b"k".to_vec())),
            domain: DomainPolicy::default(),
        }
    }

    fn controller(id: u32) -> Controller {
        let mut c = Controller::new(ControllerId(id), config(), CertificateBlacklist::default());
        c.load_law(be_law());
        c
    }

    fn adopted(id: u32, name: &str, attrs: &[&str]) -> Controller {
        let mut c = controller(id);
        let cert = config().ca.issue(name, attrs.iter().map(|a| t(a))).unwrap();
        c.adopt(AgentName::new(name), cert, None).unwrap();
        c
    }

    #[test]
    fn adoption_installs_certified_attributes() {
        let c = adopted(1, "alice", &["role(manager)", "group(t1)"]);
        assert!(c.is_alive());
        assert!(c.state().contains(&t("role(manager)")));
        assert!(c.state().contains(&t("loginID(alice)")));
        assert_eq!(c.database().unwrap().address(), "db://enterprise/alice");
    }

    #[test]
    fn adoption_without_law_fails() {
        let mut c = Controller::new(ControllerId(1), config(), CertificateBlacklist::default());
        let cert = config().ca.issue("a", [t("group(t1)")]).unwrap();
        assert_eq!(c.adopt("a".into(), cert, None).unwrap_err(), ControllerError::NoLaw);
    }

    #[test]
    fn blacklisted_certificate_is_refused() {
        let cert = config().ca.issue("a", [t("group(t1)")]).unwrap();
        let mut bl = CertificateBlacklist::default();
        bl.insert(cert.fingerprint());
        let mut c = Controller::new(ControllerId(1), config(), bl);
        c.load_law(be_law());
        let err = c.adopt("a".into(), cert.clone(), None).unwrap_err();
        assert_eq!(err, ControllerError::Blacklisted(cert.fingerprint()));
        assert!(!c.is_alive());
    }

    #[test]
    fn forged_certificate_is_refused() {
        let mut cert = config().ca.issue("a", [t("role(staff)")]).unwrap();
        cert.attributes = vec![t("role(manager)")];
        let err = controller(1).adopt("a".into(), cert, None).unwrap_err();
        assert_eq!(err, ControllerError::InvalidSignature);
    }

    #[test]
    fn database_outside_domain_is_refused() {
        let cert = config().ca.issue("a", [t("group(t1)")]).unwrap();
        let err = controller(1)
            .adopt("a".into(), cert, Some("db://elsewhere/a".into()))
            .unwrap_err();
        assert_eq!(err, ControllerError::DomainViolation("db://elsewhere/a".into()));
    }

    #[test]
    fn non_manager_revoke_is_answered_locally() {
        let mut c = adopted(1, "bob", &["role(staff)"]);
        let d = c.on_actor_send(&"carol".into(), t("#revoke#")).unwrap();
        assert!(d.envelopes.is_empty());
        assert_eq!(d.deliveries.len(), 1);
        assert_eq!(d.deliveries[0].msg, t("notAllow"));
    }

    #[test]
    fn envelopes_carry_own_name_and_law() {
        let mut c = adopted(1, "alice", &["role(manager)"]);
        let d = c.on_actor_send(&"bob".into(), t("#revoke#")).unwrap();
        assert_eq!(d.envelopes.len(), 1);
        let env = &d.envelopes[0];
        assert_eq!(env.src, AgentName::new("alice"));
        assert_eq!(env.law_hash, be_law().hash());
    }

    #[test]
    fn revoked_controller_quits_and_rejects_everything() {
        let mut c = adopted(1, "bob", &["role(staff)", "group(t1)"]);
        let fp = c.certificate().unwrap().fingerprint();
        let env = Envelope {
            src: "alice".into(),
            dst: "bob".into(),
            msg: t("#revoke#"),
            law_hash: be_law().hash(),
            profile: None,
        };
        let d = c.on_network_arrival(&env).unwrap();
        assert!(d.quit);
        assert_eq!(d.broadcast, Some(fp));
        assert!(c.blacklist().contains(&fp));
        assert!(c.has_quit() && !c.is_alive());
        assert_eq!(c.on_actor_send(&"x".into(), t("dm(#a#, \"b\")")).unwrap_err(), ControllerError::Dead);
        assert_eq!(c.on_network_arrival(&env).unwrap_err(), Rejection::Dead);
        c.execute_quit();
        assert!(c.has_quit());
    }

    #[test]
    fn one_bit_law_difference_is_untrusted() {
        let mut c = adopted(1, "bob", &["group(t1)"]);
        let mut hash = be_law().hash();
        hash.0[31] ^= 1;
        let env = Envelope {
            src: "alice".into(),
            dst: "bob".into(),
            msg: t("dm(#memo#, \"x\")"),
            law_hash: hash,
            profile: Some(vec![t("group(t1)")]),
        };
        assert!(!c.verify_peer(&env));
        assert!(matches!(c.on_network_arrival(&env), Err(Rejection::Untrusted { .. })));
    }

    #[test]
    fn misrouted_envelope_is_rejected() {
        let mut c = adopted(1, "bob", &["group(t1)"]);
        let env = Envelope {
            src: "alice".into(),
            dst: "carol".into(),
            msg: t("requestSubscribe"),
            law_hash: be_law().hash(),
            profile: None,
        };
        assert_eq!(c.on_network_arrival(&env).unwrap_err(), Rejection::Misrouted("carol".into()));
    }

    #[test]
    fn detached_actor_gets_posts_queued() {
        let mut c = adopted(1, "bob", &["group(t1)"]);
        c.detach();
        let env = Envelope {
            src: "alice".into(),
            dst: "bob".into(),
            msg: t("post(pid(alice, 1), #general#, \"hi\")"),
            law_hash: be_law().hash(),
            profile: None,
        };
        let d = c.on_network_arrival(&env).unwrap();
        assert!(!d.deliveries[0].online);
        assert_eq!(d.queued.len(), 1);
        assert_eq!(c.attach(), vec![env.msg.clone()]);
        assert!(c.offline_queue().is_empty());
    }

    #[test]
    fn db_release_runs_and_reply_is_an_event() {
        let mut c = adopted(1, "alice", &["group(t1)"]);
        let d = c
            .on_actor_send(&"alice".into(), t("db(create(post(pid(alice, 1), #general#, \"x\")))"))
            .unwrap();
        assert_eq!(d.db_calls.len(), 1);
        assert_eq!(d.db_calls[0].result, t("created(pid(alice, 1))"));
        assert_eq!(c.database().unwrap().len(), 1);
        let reply = c.on_db_reply(d.db_calls[0].result.clone()).unwrap();
        assert_eq!(reply.deliveries[0].msg, t("created(pid(alice, 1))"));
        assert_eq!(reply.deliveries[0].src, t("db"));
    }
}
