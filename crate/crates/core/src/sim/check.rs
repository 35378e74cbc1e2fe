//! Trace checker. Replays every control state and database from the trace
//! alone and reports each violated property with the offending entry.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use crate::law::{apply_delta, LawHash, RulingOp};
use crate::law_be::{audience, filters, groups, groups_in, neighbors};
use crate::member::{CrudQuery, CrudVerb, MemberDatabase, Post};
use crate::search::{bfs_oracle, forward_bound, search_db, Graph, PostPredicate};
use crate::state::{ControlState, StateSchema, StateSelector};
use crate::support::{AgentName, Fingerprint};
use crate::term::Term;

use super::trace::{AdoptOutcome, Entry, Trace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Suite {
    DualMediation,
    Trust,
    GroupIsolation,
    Revocation,
    FilterSoundness,
    FanOut,
    ManagementGating,
    SearchBounds,
    StateCustody,
    LastTen,
    ControlledProtection,
    DbIsolation,
    NameUniqueness,
    Conservation,
    SerialOrder,
}

impl Suite {
    pub const ALL: [Suite; 15] = [
        Suite::DualMediation,
        Suite::Trust,
        Suite::GroupIsolation,
        Suite::Revocation,
        Suite::FilterSoundness,
        Suite::FanOut,
        Suite::ManagementGating,
        Suite::SearchBounds,
        Suite::StateCustody,
        Suite::LastTen,
        Suite::ControlledProtection,
        Suite::DbIsolation,
        Suite::NameUniqueness,
        Suite::Conservation,
        Suite::SerialOrder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::DualMediation => "dual-mediation",
            Suite::Trust => "trust",
            Suite::GroupIsolation => "group-isolation",
            Suite::Revocation => "revocation",
            Suite::FilterSoundness => "filter-soundness",
            Suite::FanOut => "fan-out",
            Suite::ManagementGating => "management-gating",
            Suite::SearchBounds => "search-bounds",
            Suite::StateCustody => "state-custody",
            Suite::LastTen => "last-ten",
            Suite::ControlledProtection => "controlled-protection",
            Suite::DbIsolation => "db-isolation",
            Suite::NameUniqueness => "name-uniqueness",
            Suite::Conservation => "conservation",
            Suite::SerialOrder => "serial-order",
        }
    }

    pub fn from_name(s: &str) -> Option<Suite> {
        Suite::ALL.into_iter().find(|x| x.name() == s)
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub suite: Suite,
    /// Index of the offending trace entry.
    pub index: usize,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] entry {}: {}", self.suite, self.index, self.message)
    }
}

#[derive(Clone, Debug, Default)]
pub struct Report {
    pub suites: Vec<Suite>,
    pub violations: Vec<Violation>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn for_suite(&self, s: Suite) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(move |v| v.suite == s)
    }

    pub fn suite_passed(&self, s: Suite) -> bool {
        self.for_suite(s).next().is_none()
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.suites {
            let n = self.for_suite(*s).count();
            if n == 0 {
                writeln!(f, "PASS {s}")?;
            } else {
                writeln!(f, "FAIL {s} ({n} violations)")?;
                for v in self.for_suite(*s).take(20) {
                    writeln!(f, "  {v}")?;
                }
            }
        }
        Ok(())
    }
}

/// Checks `trace` against `suites`.
pub fn check(trace: &Trace, suites: &[Suite]) -> Report {
    let mut c = Checker::default();
    for (i, e) in trace.entries().iter().enumerate() {
        c.entry(i, e);
    }
    c.finish(trace.len());
    let wanted: BTreeSet<Suite> = suites.iter().copied().collect();
    Report {
        suites: Suite::ALL.into_iter().filter(|s| wanted.contains(s)).collect(),
        violations: c.out.into_iter().filter(|v| wanted.contains(&v.suite)).collect(),
    }
}

pub fn check_all(trace: &Trace) -> Report {
    check(trace, &Suite::ALL)
}

struct EvalInfo {
    agent: AgentName,
    kind: String,
    ops: Vec<RulingOp>,
}

struct SendInfo {
    eval: u64,
    src: AgentName,
    dst: AgentName,
    law: LawHash,
}

struct SearchStart {
    graph: Graph,
    max_degree: usize,
    quits: usize,
    db_writes: u64,
}

struct Broadcast {
    index: usize,
    fp: Fingerprint,
    to: Vec<AgentName>,
}

#[derive(Default)]
struct Checker {
    out: Vec<Violation>,
    laws: BTreeMap<String, (Arc<StateSchema>, LawHash)>,
    community: BTreeMap<AgentName, String>,
    states: BTreeMap<AgentName, ControlState>,
    admitted: BTreeSet<AgentName>,
    quit: BTreeSet<AgentName>,
    next_eval: u64,
    evals: BTreeMap<u64, EvalInfo>,
    sends: BTreeMap<u64, SendInfo>,
    arrival_of: BTreeMap<u64, u64>,
    settled: BTreeSet<u64>,
    dm_ok: BTreeMap<u64, bool>,
    management_ok: BTreeMap<Term, bool>,
    published: BTreeMap<AgentName, Vec<Term>>,
    broadcasts: Vec<Broadcast>,
    noticed: BTreeSet<(AgentName, Fingerprint)>,
    revoked: BTreeSet<Fingerprint>,
    dbs: BTreeMap<AgentName, MemberDatabase>,
    db_writes: u64,
    searches: BTreeMap<Term, SearchStart>,
    found: BTreeMap<Term, BTreeMap<AgentName, BTreeSet<Term>>>,
    forwards: BTreeMap<Term, u64>,
}

fn is_tag(t: &Term, tag: &str) -> bool {
    matches!(t, Term::Tag(x) if x == tag)
}

impl Checker {
    fn flag(&mut self, suite: Suite, index: usize, message: impl Into<String>) {
        self.out.push(Violation {
            suite,
            index,
            message: message.into(),
        });
    }

    fn law_of(&self, agent: &AgentName) -> Option<LawHash> {
        self.laws.get(self.community.get(agent)?).map(|(_, h)| *h)
    }

    fn entry(&mut self, i: usize, e: &Entry) {
        match e {
            Entry::Boot {
                community,
                law_hash,
                controlled,
                single,
                internal,
                ..
            } => {
                let schema = StateSchema {
                    controlled: controlled.iter().cloned().collect(),
                    single: single.iter().cloned().collect(),
                    internal: internal.iter().cloned().collect(),
                };
                self.laws.insert(community.clone(), (Arc::new(schema), *law_hash));
            }
            Entry::Name {
                assigned, community, ..
            } => {
                if self.admitted.contains(assigned) {
                    self.flag(Suite::NameUniqueness, i, format!("name `{assigned}` proposed again"));
                    return;
                }
                let schema = match self.laws.get(community) {
                    Some((s, _)) => s.clone(),
                    None => {
                        self.flag(Suite::StateCustody, i, format!("unknown community `{community}`"));
                        Arc::new(StateSchema::default())
                    }
                };
                self.community.insert(assigned.clone(), community.clone());
                self.states.insert(assigned.clone(), ControlState::new(schema));
            }
            Entry::Adopt {
                agent, fp, outcome, ..
            } => match outcome {
                AdoptOutcome::Admitted => {
                    if !self.admitted.insert(agent.clone()) {
                        self.flag(Suite::NameUniqueness, i, format!("`{agent}` admitted twice"));
                    }
                    if self.revoked.contains(fp) {
                        self.flag(Suite::Revocation, i, format!("`{agent}` admitted with a revoked certificate"));
                    }
                    self.dbs.insert(agent.clone(), MemberDatabase::new(agent.as_str()));
                }
                AdoptOutcome::Refused(_) => {
                    if !self.admitted.contains(agent) {
                        self.states.remove(agent);
                        self.community.remove(agent);
                    }
                }
            },
            Entry::Eval {
                id,
                agent,
                event,
                ops,
                ..
            } => self.eval(i, *id, agent, event, ops),
            Entry::Send {
                env,
                eval,
                src,
                dst,
                law,
                ..
            } => {
                if self.quit.contains(src) {
                    self.flag(Suite::Revocation, i, format!("`{src}` sent after quitting"));
                }
                match self.evals.get(eval) {
                    Some(ev) if &ev.agent == src => {}
                    _ => self.flag(Suite::DualMediation, i, format!("send not caused by an evaluation at `{src}`")),
                }
                if self.sends.contains_key(env) {
                    self.flag(Suite::Conservation, i, format!("envelope {env} sent twice"));
                }
                self.sends.insert(
                    *env,
                    SendInfo {
                        eval: *eval,
                        src: src.clone(),
                        dst: dst.clone(),
                        law: *law,
                    },
                );
            }
            Entry::Arrive { env, eval } => {
                self.settle(i, *env);
                if let Some(s) = self.sends.get(env) {
                    let (dst, law) = (s.dst.clone(), s.law);
                    if self.law_of(&dst) != Some(law) {
                        self.flag(Suite::Trust, i, format!("`{dst}` accepted an envelope from another law"));
                    }
                    if self.quit.contains(&dst) {
                        self.flag(Suite::Revocation, i, format!("envelope accepted by `{dst}` after it quit"));
                    }
                }
                self.arrival_of.insert(*eval, *env);
            }
            Entry::Drop { env, .. } => self.settle(i, *env),
            Entry::Deliver { eval, to, from, msg } => self.deliver(i, *eval, to, from, msg),
            Entry::DbQuery {
                eval,
                agent,
                query,
                result,
            } => self.db_query(i, *eval, agent, query, result),
            Entry::DbLoad { agent, posts } => {
                let mut db = MemberDatabase::new(agent.as_str());
                for p in posts {
                    if let Some(post) = Post::from_term(p) {
                        db.crud_execute(&CrudQuery::new(CrudVerb::Create, post.to_term()));
                    }
                }
                self.db_writes += 1;
                self.dbs.insert(agent.clone(), db);
            }
            Entry::Quit { eval, agent, .. } => {
                let ok = self
                    .evals
                    .get(eval)
                    .is_some_and(|ev| &ev.agent == agent && ev.ops.contains(&RulingOp::Quit));
                if !ok {
                    self.flag(Suite::Revocation, i, format!("`{agent}` quit without a ruling to quit"));
                }
                self.quit.insert(agent.clone());
            }
            Entry::Broadcast { fp, to, .. } => self.broadcasts.push(Broadcast {
                index: i,
                fp: *fp,
                to: to.clone(),
            }),
            Entry::Blacklisted { agent, fp } => {
                if !self.broadcasts.iter().any(|b| &b.fp == fp && b.to.contains(agent)) {
                    self.flag(Suite::Revocation, i, format!("`{agent}` blacklisted an unannounced certificate"));
                }
                self.noticed.insert((agent.clone(), *fp));
            }
            Entry::Drain { .. } => self.drain(i),
            Entry::Snapshot { agent, state } => self.snapshot(i, agent, state),
            Entry::SearchResult {
                qid,
                origin,
                ttl,
                threshold,
                pred,
                hits,
            } => self.search_result(i, qid, origin, *ttl, *threshold, pred, hits),
            Entry::Run { .. }
            | Entry::Step { .. }
            | Entry::Undelivered { .. }
            | Entry::Queued { .. }
            | Entry::Flush { .. }
            | Entry::Skipped { .. }
            | Entry::Refuse { .. }
            | Entry::Detach { .. }
            | Entry::Attach { .. } => {}
        }
    }

    fn settle(&mut self, i: usize, env: u64) {
        if !self.sends.contains_key(&env) {
            self.flag(Suite::Conservation, i, format!("envelope {env} was never sent"));
        } else if !self.settled.insert(env) {
            self.flag(Suite::Conservation, i, format!("envelope {env} settled twice"));
        }
    }

    fn eval(&mut self, i: usize, id: u64, agent: &AgentName, event: &Term, op_terms: &[Term]) {
        if id != self.next_eval {
            self.flag(
                Suite::SerialOrder,
                i,
                format!("evaluation {id} out of order, expected {}", self.next_eval),
            );
        }
        self.next_eval = self.next_eval.max(id + 1);
        if self.quit.contains(agent) {
            self.flag(Suite::Revocation, i, format!("`{agent}` evaluated an event after quitting"));
        }
        let mut ops = Vec::with_capacity(op_terms.len());
        for t in op_terms {
            match RulingOp::from_term(t) {
                Some(op) => ops.push(op),
                None => self.flag(Suite::StateCustody, i, format!("unreadable op `{t}`")),
            }
        }
        let Some(pre) = self.states.get(agent).cloned() else {
            self.flag(Suite::StateCustody, i, format!("evaluation for unknown agent `{agent}`"));
            return;
        };
        let kind = event.functor().unwrap_or("").to_string();
        let ea = event.args();
        let payload = ea.get(1).cloned().unwrap_or_else(|| Term::atom("none"));
        let src = ea.first().and_then(AgentName::from_term);

        if kind == "sent" && (payload.is("addProfile", 1) || payload.is("updateProfile", 1)) {
            for op in &ops {
                let touched = match op {
                    RulingOp::AddState(t) => t.functor().map(str::to_string),
                    RulingOp::RemoveState(StateSelector::Term(t)) => t.functor().map(str::to_string),
                    RulingOp::RemoveState(StateSelector::Functor(f)) => Some(f.clone()),
                    _ => None,
                };
                if let Some(f) = touched.filter(|f| pre.schema().is_controlled(f)) {
                    self.flag(Suite::ControlledProtection, i, format!("profile edit by `{agent}` touched `{f}`"));
                }
            }
        }

        if kind == "arrived" && payload.is("profiled", 2) {
            let inner = &payload.args()[0];
            let profile = payload.args()[1].as_list().unwrap_or(&[]);
            if inner.is("requestSubscribe", 0) || inner.as_atom() == Some("requestSubscribe") {
                let blocked = filters(&pre).iter().any(|f| profile.contains(f));
                let added = ops.iter().any(|op| {
                    matches!(op, RulingOp::AddState(t) if t.is("subList", 2)
                        && src.as_ref().is_some_and(|s| t.args()[1] == s.to_term()))
                });
                if blocked && added {
                    self.flag(
                        Suite::FilterSoundness,
                        i,
                        format!("`{agent}` accepted a subscriber its filters match"),
                    );
                }
            }
            if inner.is("dm", 2) {
                let shared = !groups_in(profile).is_disjoint(&groups(&pre));
                self.dm_ok.insert(id, shared);
            }
        }

        if kind == "sent" && payload.is("publish", 1) && payload.args()[0].is("post", 3) {
            let post = &payload.args()[0];
            let pid = post.args()[0].clone();
            let released = ops.iter().any(|op| {
                matches!(op, RulingOp::Release { msg, .. } if msg.is("create", 1) && msg.args()[0] == *post)
            });
            let dsts: Vec<Term> = ops
                .iter()
                .filter_map(|op| match op {
                    RulingOp::Forward { msg, dst, .. } if msg == post => Some(dst.clone()),
                    _ => None,
                })
                .collect();
            if released {
                let expected: BTreeSet<Term> = audience(&pre).iter().map(AgentName::to_term).collect();
                let got: BTreeSet<Term> = dsts.iter().cloned().collect();
                if got != expected || dsts.len() != expected.len() {
                    self.flag(
                        Suite::FanOut,
                        i,
                        format!(
                            "publish by `{agent}` forwarded {} copies to {} subscribers",
                            dsts.len(),
                            expected.len()
                        ),
                    );
                }
                self.published.entry(agent.clone()).or_default().push(pid.clone());
            } else if !dsts.is_empty() {
                self.flag(Suite::FanOut, i, format!("suppressed publish by `{agent}` still forwarded"));
            }
            if is_tag(&post.args()[1], "management") {
                let manager = pre.contains(&Term::app("role", vec![Term::atom("manager")]));
                if (released || !dsts.is_empty()) && !manager {
                    self.flag(
                        Suite::ManagementGating,
                        i,
                        format!("`{agent}` published a management post without role(manager)"),
                    );
                }
                self.management_ok.insert(pid, manager);
            }
        }

        for op in &ops {
            if let RulingOp::Forward { msg, .. } = op {
                if msg.is("query", 6) {
                    *self.forwards.entry(msg.args()[0].clone()).or_default() += 1;
                }
            }
        }

        if kind == "sent" && payload.is("search", 4) {
            let qid = payload.args()[0].clone();
            let started = ops
                .iter()
                .any(|op| matches!(op, RulingOp::AddState(t) if t.is("seenQuery", 2) && t.args()[0] == qid));
            if started {
                let start = self.search_start();
                self.searches.insert(qid, start);
            }
        }

        let mut post_state = pre;
        for op in &ops {
            apply_delta(&mut post_state, op);
        }
        self.states.insert(agent.clone(), post_state);
        self.evals.insert(
            id,
            EvalInfo {
                agent: agent.clone(),
                kind,
                ops,
            },
        );
    }

    /// Neighbour graph over live admitted agents.
    fn search_start(&self) -> SearchStart {
        let live: BTreeSet<&AgentName> = self.admitted.iter().filter(|a| !self.quit.contains(*a)).collect();
        let mut graph = Graph::new();
        for a in &live {
            let ns: BTreeSet<AgentName> = neighbors(&self.states[*a])
                .into_iter()
                .filter(|n| live.contains(n))
                .collect();
            graph.insert((*a).clone(), ns);
        }
        SearchStart {
            max_degree: graph.values().map(BTreeSet::len).max().unwrap_or(0),
            graph,
            quits: self.quit.len(),
            db_writes: self.db_writes,
        }
    }

    fn deliver(&mut self, i: usize, eval: u64, to: &AgentName, from: &Term, msg: &Term) {
        if self.quit.contains(to) {
            self.flag(Suite::Revocation, i, format!("delivery to `{to}` after it quit"));
        }
        let Some(ev) = self.evals.get(&eval) else {
            self.flag(Suite::DualMediation, i, format!("delivery names unknown evaluation {eval}"));
            return;
        };
        if &ev.agent != to {
            self.flag(Suite::DualMediation, i, format!("delivery to `{to}` ruled at `{}`", ev.agent));
            return;
        }
        let sender = AgentName::from_term(from).filter(|s| s != to && s.as_str() != "db");
        if let Some(sender) = sender.clone() {
            let ok = ev.kind == "arrived"
                && self.arrival_of.get(&eval).and_then(|env| self.sends.get(env)).is_some_and(|s| {
                    s.src == sender && &s.dst == to && self.evals.get(&s.eval).is_some_and(|x| x.agent == sender)
                });
            if !ok {
                self.flag(
                    Suite::DualMediation,
                    i,
                    format!("`{sender}` -> `{to}` delivered without both controllers ruling"),
                );
            } else {
                let law = self.arrival_of.get(&eval).and_then(|env| self.sends.get(env)).map(|s| s.law);
                if law != self.law_of(to) {
                    self.flag(Suite::Trust, i, format!("`{to}` got a message sent under another law"));
                }
            }
        }
        if msg.is("dm", 2) && sender.is_some() && self.dm_ok.get(&eval) != Some(&true) {
            self.flag(Suite::GroupIsolation, i, format!("dm to `{to}` across disjoint groups"));
        }
        if msg.is("post", 3)
            && is_tag(&msg.args()[1], "management")
            && self.management_ok.get(&msg.args()[0]) != Some(&true)
        {
            self.flag(
                Suite::ManagementGating,
                i,
                format!("management post {} reached `{to}`", msg.args()[0]),
            );
        }
    }

    fn db_query(&mut self, i: usize, eval: u64, agent: &AgentName, query: &Term, result: &Term) {
        let released = self.evals.get(&eval).is_some_and(|ev| {
            &ev.agent == agent
                && ev
                    .ops
                    .iter()
                    .any(|op| matches!(op, RulingOp::Release { msg, .. } if msg == query))
        });
        if !released {
            self.flag(Suite::DbIsolation, i, format!("database of `{agent}` reached without a release"));
        }
        let Some(db) = self.dbs.get_mut(agent) else {
            self.flag(Suite::DbIsolation, i, format!("`{agent}` has no database"));
            return;
        };
        if let Some(expected) = search_db(db, query) {
            if &expected != result {
                self.flag(Suite::SearchBounds, i, format!("search answer of `{agent}` differs from its database"));
            }
            if result.is("found", 4) {
                let ids: BTreeSet<Term> = result.args()[3].as_list().unwrap_or(&[]).iter().cloned().collect();
                self.found
                    .entry(query.args()[0].clone())
                    .or_default()
                    .entry(agent.clone())
                    .or_default()
                    .extend(ids);
            }
            return;
        }
        if let Ok(q) = CrudQuery::from_term(query) {
            let expected = db.crud_execute(&q);
            if q.verb != CrudVerb::Read {
                self.db_writes += 1;
            }
            if &expected != result {
                self.flag(Suite::DbIsolation, i, format!("database result of `{agent}` diverges from replay"));
            }
        }
    }

    fn drain(&mut self, i: usize) {
        for b in std::mem::take(&mut self.broadcasts) {
            for r in &b.to {
                if !self.quit.contains(r) && !self.noticed.contains(&(r.clone(), b.fp)) {
                    self.flag(
                        Suite::Revocation,
                        b.index,
                        format!("`{r}` never received the blacklist broadcast"),
                    );
                }
            }
            self.revoked.insert(b.fp);
        }
        let open: Vec<u64> = self
            .sends
            .keys()
            .filter(|e| !self.settled.contains(*e))
            .copied()
            .collect();
        for env in open {
            self.flag(Suite::Conservation, i, format!("envelope {env} neither arrived nor dropped"));
            self.settled.insert(env);
        }
    }

    fn snapshot(&mut self, i: usize, agent: &AgentName, attrs: &[Term]) {
        let Some(replayed) = self.states.get(agent) else {
            self.flag(Suite::StateCustody, i, format!("snapshot of unknown agent `{agent}`"));
            return;
        };
        let got: BTreeSet<&Term> = attrs.iter().collect();
        let want: BTreeSet<&Term> = replayed.attributes().collect();
        if got != want {
            let extra: Vec<String> = got.difference(&want).map(|t| t.to_string()).collect();
            let missing: Vec<String> = want.difference(&got).map(|t| t.to_string()).collect();
            self.flag(
                Suite::StateCustody,
                i,
                format!(
                    "state of `{agent}` differs from replay: extra [{}], missing [{}]",
                    extra.join(", "),
                    missing.join(", ")
                ),
            );
        }
        let last: Vec<&Term> = attrs.iter().filter(|t| t.is("lastTenPosts", 1)).collect();
        let list: Vec<Term> = last
            .first()
            .and_then(|t| t.args()[0].as_list())
            .map(<[Term]>::to_vec)
            .unwrap_or_default();
        let expected: Vec<Term> = self
            .published
            .get(agent)
            .map(|p| p.iter().rev().take(10).cloned().collect())
            .unwrap_or_default();
        if last.len() > 1 || list.len() > 10 || list != expected {
            self.flag(
                Suite::LastTen,
                i,
                format!("lastTenPosts of `{agent}` is {} posts, expected {}", list.len(), expected.len()),
            );
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn search_result(
        &mut self,
        i: usize,
        qid: &Term,
        origin: &AgentName,
        ttl: i64,
        threshold: i64,
        pred: &Term,
        hits: &[(AgentName, Vec<Term>)],
    ) {
        let contributors: BTreeSet<AgentName> = hits
            .iter()
            .filter(|(_, ids)| !ids.is_empty())
            .map(|(r, _)| r.clone())
            .collect();
        let Some(start) = self.searches.remove(qid) else {
            if !contributors.is_empty() {
                self.flag(Suite::SearchBounds, i, format!("hits for search {qid} that never started"));
            }
            return;
        };
        let reach = bfs_oracle(&start.graph, origin, ttl.max(0) as u32);
        for r in contributors.difference(&reach) {
            self.flag(Suite::SearchBounds, i, format!("`{r}` answered {qid} from beyond {ttl} hops"));
        }
        let found = self.found.remove(qid);
        for (r, ids) in hits {
            for id in ids {
                if !found.as_ref().and_then(|f| f.get(r)).is_some_and(|s| s.contains(id)) {
                    self.flag(Suite::SearchBounds, i, format!("hit {id} not reported by `{r}`'s database"));
                }
            }
        }
        let bound = forward_bound(ttl.max(0) as u32, threshold.max(0) as u64);
        let sent = self.forwards.get(qid).copied().unwrap_or(0);
        if sent > bound {
            self.flag(Suite::SearchBounds, i, format!("{qid} forwarded {sent} times, bound {bound}"));
        }
        let settled = start.quits == self.quit.len() && start.db_writes == self.db_writes;
        if threshold >= 0 && threshold as usize >= start.max_degree && settled {
            if let Some(p) = PostPredicate::from_term(pred) {
                let expected: BTreeSet<AgentName> = reach
                    .iter()
                    .filter(|n| self.dbs.get(*n).is_some_and(|db| db.matching(&p).next().is_some()))
                    .cloned()
                    .collect();
                if expected != contributors {
                    self.flag(
                        Suite::SearchBounds,
                        i,
                        format!(
                            "search {qid} found {} contributors, expected {}",
                            contributors.len(),
                            expected.len()
                        ),
                    );
                }
            }
        }
    }

    fn finish(&mut self, len: usize) {
        if !self.broadcasts.is_empty() || self.settled.len() < self.sends.len() {
            self.drain(len.saturating_sub(1));
        }
    }
}
