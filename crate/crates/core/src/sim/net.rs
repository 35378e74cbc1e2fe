//! Deterministic simulated network of controllers.
//!
//! Every ordered pair of endpoints has its own FIFO channel. The scheduler
//! picks uniformly among non-empty channels with a seeded generator, so a
//! run is a pure function of its seed and inputs.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::controller::{CertificateBlacklist, Controller, ControllerError, Dispatch, DomainPolicy};
use crate::law::Law;
use crate::member::{msg, CrudQuery, Post, PostId};
use crate::search::{PostPredicate, SearchResult};
use crate::state::ControlState;
use crate::support::{
    AgentName, Certificate, CertificateAuthority, ControllerConfig, ControllerId, ControllerPool, NameRegistry,
    SupportError,
};
use crate::term::Term;
use crate::wire::{read_frame, write_frame, Envelope, WireError};

use super::trace::{AdoptOutcome, Entry, Trace};

/// Controller ids of different communities never collide.
const COMMUNITY_ID_STRIDE: u32 = 1_000_000;

/// Name the certification authority signs with; laws match on it.
pub const CA_NAME: &str = "ca";

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("unknown agent `{0}`")]
    UnknownAgent(String),
    #[error("unknown community `{0}`")]
    UnknownCommunity(String),
    #[error("community `{0}` defined twice")]
    DuplicateCommunity(String),
    #[error("no community defined")]
    NoCommunity,
    #[error("adoption of `{name}` refused: {error}")]
    Refused { name: String, error: ControllerError },
    #[error("search parameters must be non-negative")]
    InvalidSearch,
    #[error(transparent)]
    Support(#[from] SupportError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("socket transport: {0}")]
    Io(#[from] std::io::Error),
}

impl SimError {
    /// Trace atom for a refused adoption.
    fn refusal_reason(e: &ControllerError) -> &'static str {
        match e {
            ControllerError::NoLaw => "noLaw",
            ControllerError::NotAdopted => "notAdopted",
            ControllerError::AlreadyAdopted => "alreadyAdopted",
            ControllerError::Dead => "dead",
            ControllerError::InvalidSignature => "invalidSignature",
            ControllerError::Blacklisted(_) => "blacklisted",
            ControllerError::DomainViolation(_) => "domainViolation",
            ControllerError::RefusedByLaw(_) => "refusedByLaw",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Transport {
    /// Envelopes stay in memory.
    #[default]
    Sim,
    /// Every envelope is framed, written to a loopback TCP socket and
    /// decoded from what comes back out.
    Socket,
}

struct SocketLink {
    tx: TcpStream,
    rx: TcpStream,
}

impl SocketLink {
    fn open() -> std::io::Result<SocketLink> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let tx = TcpStream::connect(listener.local_addr()?)?;
        let (rx, _) = listener.accept()?;
        tx.set_nodelay(true)?;
        Ok(SocketLink { tx, rx })
    }

    fn carry(&mut self, env: &Envelope) -> Result<Envelope, WireError> {
        write_frame(&mut self.tx, env)?;
        let frame = read_frame(&mut self.rx)?;
        Envelope::decode(&frame)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Endpoint {
    Controller(ControllerId),
    /// The controller service: database replies and blacklist notices.
    Service,
}

type ChannelKey = (Endpoint, ControllerId);

#[derive(Clone, Debug)]
enum Packet {
    Envelope { id: u64, env: Envelope },
    DbReply { result: Term },
    Blacklist { fp: crate::support::Fingerprint },
}

struct Community {
    name: String,
    law: Arc<Law>,
    ca: Arc<CertificateAuthority>,
    pool: ControllerPool,
}

struct Slot {
    controller: Controller,
    community: usize,
}

/// A search started through [`Network::search`].
#[derive(Clone, Debug)]
pub struct SearchRecord {
    pub origin: AgentName,
    pub predicate: Term,
    pub ttl: i64,
    pub threshold: i64,
    pub result: SearchResult,
    reported: bool,
}

/// Message as the actor received it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Received {
    pub from: Term,
    pub msg: Term,
}

pub struct Network {
    seed: u64,
    rng: ChaCha8Rng,
    socket: Option<SocketLink>,
    registry: NameRegistry,
    communities: Vec<Community>,
    slots: BTreeMap<ControllerId, Slot>,
    agents: BTreeMap<AgentName, ControllerId>,
    subjects: BTreeMap<AgentName, String>,
    channels: BTreeMap<ChannelKey, VecDeque<Packet>>,
    ready: Vec<ChannelKey>,
    ready_pos: BTreeMap<ChannelKey, usize>,
    trace: Trace,
    next_eval: u64,
    next_env: u64,
    post_seq: BTreeMap<AgentName, u64>,
    next_qid: u64,
    searches: BTreeMap<Term, SearchRecord>,
    inboxes: BTreeMap<AgentName, Vec<Received>>,
}

impl Network {
    pub fn new(seed: u64) -> Self {
        let mut trace = Trace::new();
        trace.push(Entry::Run { seed });
        Network {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            socket: None,
            registry: NameRegistry::new(),
            communities: Vec::new(),
            slots: BTreeMap::new(),
            agents: BTreeMap::new(),
            subjects: BTreeMap::new(),
            channels: BTreeMap::new(),
            ready: Vec::new(),
            ready_pos: BTreeMap::new(),
            trace,
            next_eval: 0,
            next_env: 0,
            post_seq: BTreeMap::new(),
            next_qid: 0,
            searches: BTreeMap::new(),
            inboxes: BTreeMap::new(),
        }
    }

    pub fn with_transport(seed: u64, transport: Transport) -> Result<Self, SimError> {
        let mut net = Network::new(seed);
        if transport == Transport::Socket {
            net.socket = Some(SocketLink::open()?);
        }
        Ok(net)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn into_trace(self) -> Trace {
        self.trace
    }

    /// Records a scenario step marker.
    pub fn mark_step(&mut self, index: usize, action: Term) {
        self.trace.push(Entry::Step { index, action });
    }

    pub fn add_community(
        &mut self,
        name: &str,
        law: Arc<Law>,
        ca_key: &[u8],
        pool: usize,
        domain: DomainPolicy,
    ) -> Result<(), SimError> {
        if self.communities.iter().any(|c| c.name == name) {
            return Err(SimError::DuplicateCommunity(name.to_string()));
        }
        let ca = Arc::new(CertificateAuthority::new(CA_NAME, ca_key.to_vec()));
        let first_id = self.communities.len() as u32 * COMMUNITY_ID_STRIDE + 1;
        let config = ControllerConfig { ca: ca.clone(), domain };
        let schema = law.schema();
        let sorted = |v: &BTreeSet<String>| v.iter().cloned().collect::<Vec<_>>();
        self.trace.push(Entry::Boot {
            community: name.to_string(),
            law_name: law.name().to_string(),
            law_hash: law.hash(),
            controlled: sorted(&schema.controlled),
            single: sorted(&schema.single),
            internal: sorted(&schema.internal),
            pool,
        });
        self.communities.push(Community {
            name: name.to_string(),
            law,
            ca,
            pool: ControllerPool::new(pool, first_id, config),
        });
        Ok(())
    }

    fn community_index(&self, name: Option<&str>) -> Result<usize, SimError> {
        match name {
            None if self.communities.is_empty() => Err(SimError::NoCommunity),
            None => Ok(0),
            Some(n) => self
                .communities
                .iter()
                .position(|c| c.name == n)
                .ok_or_else(|| SimError::UnknownCommunity(n.to_string())),
        }
    }

    /// Issues a certificate from a community's authority.
    pub fn issue(&self, community: Option<&str>, subject: &str, attrs: Vec<Term>) -> Result<Certificate, SimError> {
        let ci = self.community_index(community)?;
        Ok(self.communities[ci].ca.issue(subject, attrs)?)
    }

    /// Issues a certificate for `requested` and adopts it.
    pub fn adopt(
        &mut self,
        requested: &str,
        attrs: Vec<Term>,
        community: Option<&str>,
        db_address: Option<String>,
    ) -> Result<AgentName, SimError> {
        let cert = self.issue(community, requested, attrs)?;
        self.adopt_with_cert(requested, cert, community, db_address)
    }

    /// Adopts with an existing certificate, as when a revoked member tries
    /// to come back.
    pub fn adopt_with_cert(
        &mut self,
        requested: &str,
        cert: Certificate,
        community: Option<&str>,
        db_address: Option<String>,
    ) -> Result<AgentName, SimError> {
        let ci = self.community_index(community)?;
        let cname = self.communities[ci].name.clone();
        let name = self.registry.propose(requested)?;
        self.trace.push(Entry::Name {
            requested: requested.to_string(),
            assigned: name.clone(),
            community: cname.clone(),
        });
        let fp = cert.fingerprint();
        let refused = |net: &mut Network, controller: Option<ControllerId>, reason: &str| {
            net.trace.push(Entry::Adopt {
                agent: name.clone(),
                community: cname.clone(),
                controller,
                fp,
                outcome: AdoptOutcome::Refused(reason.to_string()),
            });
        };
        let mut ctrl = match self.communities[ci].pool.allocate_controller() {
            Ok(c) => c,
            Err(e) => {
                refused(self, None, "poolExhausted");
                return Err(e.into());
            }
        };
        let id = ctrl.id();
        ctrl.load_law(self.communities[ci].law.clone());
        let subject = cert.subject.clone();
        match ctrl.adopt(name.clone(), cert, db_address) {
            Ok(d) => {
                self.registry.register_name(requested)?;
                self.registry.bind(&name, id);
                self.agents.insert(name.clone(), id);
                self.subjects.insert(name.clone(), subject);
                self.slots.insert(
                    id,
                    Slot {
                        controller: ctrl,
                        community: ci,
                    },
                );
                let eval = self.push_eval(&name, &d);
                self.trace.push(Entry::Adopt {
                    agent: name.clone(),
                    community: cname.clone(),
                    controller: Some(id),
                    fp,
                    outcome: AdoptOutcome::Admitted,
                });
                self.carry_out(id, &name, eval, d);
                Ok(name)
            }
            Err(e) => {
                self.communities[ci].pool.release(id);
                if let ControllerError::RefusedByLaw(rec) = &e {
                    let eval = self.fresh_eval();
                    self.trace.push(Entry::Eval {
                        id: eval,
                        agent: name.clone(),
                        event: rec.event.to_term(),
                        rule: rec.rule.clone(),
                        ops: rec.ops.iter().map(|o| o.to_term()).collect(),
                        diagnostic: rec.diagnostic.as_ref().map(|d| d.to_string()),
                    });
                }
                refused(self, Some(id), SimError::refusal_reason(&e));
                Err(SimError::Refused {
                    name: name.to_string(),
                    error: e,
                })
            }
        }
    }

    fn id_of(&self, agent: &AgentName) -> Result<ControllerId, SimError> {
        self.agents
            .get(agent)
            .copied()
            .ok_or_else(|| SimError::UnknownAgent(agent.to_string()))
    }

    pub fn agents(&self) -> impl Iterator<Item = &AgentName> {
        self.agents.keys()
    }

    pub fn controller(&self, agent: &AgentName) -> Option<&Controller> {
        self.slots.get(self.agents.get(agent)?).map(|s| &s.controller)
    }

    pub fn state(&self, agent: &AgentName) -> Option<&ControlState> {
        self.controller(agent).map(|c| c.state())
    }

    pub fn community_of(&self, agent: &AgentName) -> Option<&str> {
        let slot = self.slots.get(self.agents.get(agent)?)?;
        Some(&self.communities[slot.community].name)
    }

    pub fn certificate(&self, agent: &AgentName) -> Option<&Certificate> {
        self.controller(agent).and_then(|c| c.certificate())
    }

    pub fn is_live(&self, agent: &AgentName) -> bool {
        self.registry.is_live(agent)
    }

    pub fn inbox(&self, agent: &AgentName) -> &[Received] {
        self.inboxes.get(agent).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn search_record(&self, qid: &Term) -> Option<&SearchRecord> {
        self.searches.get(qid)
    }

    pub fn pending(&self) -> usize {
        self.channels.values().map(VecDeque::len).sum()
    }

    /// Presents a fresh certificate with `attrs` for an adopted agent.
    pub fn certify(&mut self, agent: &AgentName, attrs: Vec<Term>) -> Result<(), SimError> {
        let id = self.id_of(agent)?;
        let ci = self.slots[&id].community;
        let subject = self.subjects[agent].clone();
        let cert = self.communities[ci].ca.issue(subject, attrs)?;
        self.certify_with(agent, cert)
    }

    pub fn certify_with(&mut self, agent: &AgentName, cert: Certificate) -> Result<(), SimError> {
        let id = self.id_of(agent)?;
        let action = Term::app("certify", vec![agent.to_term()]);
        let r = self.slot_mut(id).on_certificate(cert);
        self.finish(id, agent, action, r)
    }

    /// The actor of `from` sends `msg` to `to` through its controller.
    pub fn send(&mut self, from: &AgentName, to: &AgentName, message: Term) -> Result<(), SimError> {
        let id = self.id_of(from)?;
        self.id_of(to)?;
        let action = Term::app("send", vec![to.to_term(), message.clone()]);
        let r = self.slot_mut(id).on_actor_send(to, message);
        self.finish(id, from, action, r)
    }

    fn slot_mut(&mut self, id: ControllerId) -> &mut Controller {
        &mut self.slots.get_mut(&id).expect("slot exists").controller
    }

    fn finish(
        &mut self,
        id: ControllerId,
        agent: &AgentName,
        action: Term,
        r: Result<Dispatch, ControllerError>,
    ) -> Result<(), SimError> {
        match r {
            Ok(d) => {
                let eval = self.push_eval(agent, &d);
                self.carry_out(id, agent, eval, d);
            }
            Err(e) => self.trace.push(Entry::Refuse {
                agent: agent.clone(),
                action,
                reason: SimError::refusal_reason(&e).to_string(),
            }),
        }
        Ok(())
    }

    pub fn add_profile(&mut self, agent: &AgentName, attr: Term) -> Result<(), SimError> {
        self.send(agent, &agent.clone(), msg::add_profile(attr))
    }

    pub fn update_profile(&mut self, agent: &AgentName, attr: Term) -> Result<(), SimError> {
        self.send(agent, &agent.clone(), msg::update_profile(attr))
    }

    pub fn add_filter(&mut self, agent: &AgentName, attr: Term) -> Result<(), SimError> {
        self.send(agent, &agent.clone(), msg::add_filter(attr))
    }

    /// Publishes a post with the next sequence number of `agent`.
    pub fn publish(&mut self, agent: &AgentName, kind: &str, body: &str) -> Result<PostId, SimError> {
        self.id_of(agent)?;
        let seq = self.post_seq.entry(agent.clone()).or_insert(0);
        *seq += 1;
        let post = Post::new(PostId::new(agent.clone(), *seq), kind, body);
        let id = post.id.clone();
        self.send(agent, &agent.clone(), msg::publish(post.to_term()))?;
        Ok(id)
    }

    pub fn subscribe(&mut self, subscriber: &AgentName, publisher: &AgentName) -> Result<(), SimError> {
        self.send(subscriber, publisher, msg::request_subscribe())
    }

    pub fn dm(&mut self, from: &AgentName, to: &AgentName, kind: &str, body: &str) -> Result<(), SimError> {
        self.send(from, to, msg::dm(kind, body))
    }

    pub fn db(&mut self, agent: &AgentName, query: &CrudQuery) -> Result<(), SimError> {
        self.send(agent, &agent.clone(), msg::db(query.to_term()))
    }

    pub fn revoke(&mut self, by: &AgentName, target: &AgentName) -> Result<(), SimError> {
        self.send(by, target, msg::revoke())
    }

    /// Starts a search at `origin` and returns its query id.
    pub fn search(&mut self, origin: &AgentName, pred: &PostPredicate, ttl: i64, threshold: i64) -> Result<Term, SimError> {
        if ttl < 0 || threshold < 0 {
            return Err(SimError::InvalidSearch);
        }
        self.id_of(origin)?;
        self.next_qid += 1;
        let qid = Term::atom(format!("q{}", self.next_qid));
        self.searches.insert(
            qid.clone(),
            SearchRecord {
                origin: origin.clone(),
                predicate: pred.to_term(),
                ttl,
                threshold,
                result: SearchResult::new(qid.clone()),
                reported: false,
            },
        );
        self.send(origin, &origin.clone(), msg::search(qid.clone(), pred.to_term(), ttl, threshold))?;
        Ok(qid)
    }

    pub fn detach(&mut self, agent: &AgentName) -> Result<(), SimError> {
        let id = self.id_of(agent)?;
        self.slot_mut(id).detach();
        self.trace.push(Entry::Detach { agent: agent.clone() });
        Ok(())
    }

    /// Reattaches and hands the offline queue to the actor.
    pub fn attach(&mut self, agent: &AgentName) -> Result<Vec<Term>, SimError> {
        let id = self.id_of(agent)?;
        let queued = self.slot_mut(id).attach();
        self.trace.push(Entry::Attach { agent: agent.clone() });
        for m in &queued {
            self.trace.push(Entry::Flush {
                to: agent.clone(),
                msg: m.clone(),
            });
        }
        Ok(queued)
    }

    fn fresh_eval(&mut self) -> u64 {
        let e = self.next_eval;
        self.next_eval += 1;
        e
    }

    fn push_eval(&mut self, agent: &AgentName, d: &Dispatch) -> u64 {
        let id = self.fresh_eval();
        self.trace.push(Entry::Eval {
            id,
            agent: agent.clone(),
            event: d.eval.event.to_term(),
            rule: d.eval.rule.clone(),
            ops: d.eval.ops.iter().map(|o| o.to_term()).collect(),
            diagnostic: d.eval.diagnostic.as_ref().map(|x| x.to_string()),
        });
        id
    }

    /// Routes and records everything a ruling caused.
    fn carry_out(&mut self, id: ControllerId, agent: &AgentName, eval: u64, d: Dispatch) {
        for env in d.envelopes {
            self.route(id, eval, env);
        }
        for del in d.deliveries {
            if del.online {
                if del.msg.is("hit", 4) {
                    let qid = &del.msg.args()[0];
                    if let Some(rec) = self.searches.get_mut(qid) {
                        if &rec.origin == agent {
                            rec.result.absorb(&del.msg);
                        }
                    }
                }
                self.inboxes.entry(agent.clone()).or_default().push(Received {
                    from: del.src.clone(),
                    msg: del.msg.clone(),
                });
                self.trace.push(Entry::Deliver {
                    eval,
                    to: agent.clone(),
                    from: del.src,
                    msg: del.msg,
                });
            } else {
                self.trace.push(Entry::Undelivered {
                    eval,
                    to: agent.clone(),
                    from: del.src,
                    msg: del.msg,
                });
            }
        }
        for m in d.queued {
            self.trace.push(Entry::Queued {
                eval,
                to: agent.clone(),
                msg: m,
            });
        }
        for call in d.db_calls {
            self.trace.push(Entry::DbQuery {
                eval,
                agent: agent.clone(),
                query: call.query,
                result: call.result.clone(),
            });
            self.enqueue((Endpoint::Service, id), Packet::DbReply { result: call.result });
        }
        for (op, reason) in d.skipped {
            self.trace.push(Entry::Skipped {
                eval,
                op: op.to_term(),
                reason,
            });
        }
        if let Some(fp) = d.broadcast {
            let ci = self.slots[&id].community;
            self.communities[ci].pool.note_blacklisted(fp);
            let mut to = Vec::new();
            for (name, cid) in self.registry.live() {
                if cid != id && self.slots.get(&cid).is_some_and(|s| s.community == ci) {
                    to.push((name.clone(), cid));
                }
            }
            self.trace.push(Entry::Broadcast {
                eval,
                origin: agent.clone(),
                fp,
                to: to.iter().map(|(n, _)| n.clone()).collect(),
            });
            for (_, cid) in to {
                self.enqueue((Endpoint::Service, cid), Packet::Blacklist { fp });
            }
        }
        if d.quit {
            self.registry.deregister(agent);
            let fp = self.slots[&id]
                .controller
                .certificate()
                .map(|c| c.fingerprint())
                .expect("adopted");
            self.trace.push(Entry::Quit {
                eval,
                agent: agent.clone(),
                fp,
            });
        }
    }

    fn route(&mut self, from: ControllerId, eval: u64, env: Envelope) {
        let id = self.next_env;
        self.next_env += 1;
        self.trace.push(Entry::Send {
            env: id,
            eval,
            src: env.src.clone(),
            dst: env.dst.clone(),
            msg: env.msg.clone(),
            law: env.law_hash,
            profile: env.profile.clone(),
        });
        let dst = match self.registry.resolve(&env.dst) {
            Ok(d) => d,
            Err(_) => {
                self.trace.push(Entry::Drop {
                    env: id,
                    reason: "unknownDestination".into(),
                });
                return;
            }
        };
        let env = match self.socket.as_mut() {
            None => env,
            Some(link) => match link.carry(&env) {
                Ok(e) => e,
                Err(_) => {
                    self.trace.push(Entry::Drop {
                        env: id,
                        reason: "malformed".into(),
                    });
                    return;
                }
            },
        };
        self.enqueue((Endpoint::Controller(from), dst), Packet::Envelope { id, env });
    }

    fn enqueue(&mut self, key: ChannelKey, p: Packet) {
        let q = self.channels.entry(key).or_default();
        if q.is_empty() {
            self.ready_pos.insert(key, self.ready.len());
            self.ready.push(key);
        }
        q.push_back(p);
    }

    fn take_next(&mut self) -> Option<(ControllerId, Packet)> {
        if self.ready.is_empty() {
            return None;
        }
        let i = self.rng.gen_range(0..self.ready.len());
        let key = self.ready[i];
        let q = self.channels.get_mut(&key).expect("ready channel exists");
        let p = q.pop_front().expect("ready channel is non-empty");
        if q.is_empty() {
            self.ready.swap_remove(i);
            self.ready_pos.remove(&key);
            if let Some(moved) = self.ready.get(i) {
                self.ready_pos.insert(*moved, i);
            }
        }
        Some((key.1, p))
    }

    /// Delivers one pending packet. Returns false when nothing is pending.
    pub fn step(&mut self) -> bool {
        let Some((dst, packet)) = self.take_next() else {
            return false;
        };
        match packet {
            Packet::Envelope { id, env } => {
                let r = self.slot_mut(dst).on_network_arrival(&env);
                match r {
                    Ok(d) => {
                        self.trace.push(Entry::Arrive {
                            env: id,
                            eval: self.next_eval,
                        });
                        let agent = env.dst.clone();
                        let eval = self.push_eval(&agent, &d);
                        self.carry_out(dst, &agent, eval, d);
                    }
                    Err(rej) => self.trace.push(Entry::Drop {
                        env: id,
                        reason: rej.reason().to_string(),
                    }),
                }
            }
            Packet::DbReply { result } => {
                let agent = self.slots[&dst].controller.agent().cloned().expect("adopted");
                let action = Term::app("submitted", vec![result.clone()]);
                let r = self.slot_mut(dst).on_db_reply(result);
                // cannot fail: the only error is an unknown agent
                let _ = self.finish(dst, &agent, action, r);
            }
            Packet::Blacklist { fp } => {
                let c = self.slot_mut(dst);
                if c.is_alive() {
                    c.on_blacklist_notice(fp);
                    let agent = c.agent().cloned().expect("adopted");
                    self.trace.push(Entry::Blacklisted { agent, fp });
                }
            }
        }
        true
    }

    /// Runs until no packet is pending, then records a snapshot of every
    /// adopted agent and any finished search. Returns the hop count.
    pub fn drain(&mut self) -> u64 {
        let mut hops = 0;
        while self.step() {
            hops += 1;
        }
        self.trace.push(Entry::Drain { hops });
        let snaps: Vec<Entry> = self
            .agents
            .iter()
            .map(|(a, id)| Entry::Snapshot {
                agent: a.clone(),
                state: self.slots[id].controller.state().attributes().cloned().collect(),
            })
            .collect();
        for s in snaps {
            self.trace.push(s);
        }
        let mut done = Vec::new();
        for (qid, rec) in self.searches.iter_mut().filter(|(_, r)| !r.reported) {
            rec.reported = true;
            let mut hits: BTreeMap<AgentName, Vec<Term>> = BTreeMap::new();
            for (r, pid) in &rec.result.hits {
                hits.entry(r.clone()).or_default().push(pid.to_term());
            }
            done.push(Entry::SearchResult {
                qid: qid.clone(),
                origin: rec.origin.clone(),
                ttl: rec.ttl,
                threshold: rec.threshold,
                pred: rec.predicate.clone(),
                hits: hits.into_iter().collect(),
            });
        }
        for e in done {
            self.trace.push(e);
        }
        hops
    }

    /// Ids of agents live in the secretary's directory.
    pub fn live_agents(&self) -> Vec<AgentName> {
        self.registry.live().map(|(n, _)| n.clone()).collect()
    }

    /// The blacklist a new controller of `community` would start with.
    pub fn pool_blacklist(&self, community: Option<&str>) -> Result<&CertificateBlacklist, SimError> {
        let ci = self.community_index(community)?;
        Ok(self.communities[ci].pool.blacklist())
    }
}
