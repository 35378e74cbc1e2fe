//! Run traces: one canonical term per line, in execution order.
//!
//! ```text
//! run(seed(N))
//! boot(community(C), law(Name, "hash"), controlled([..]), single([..]), internal([..]), pool(N))
//! step(K, Action)
//! name(requested("alice"), assigned(alice), community(C))
//! adopt(A, community(C), ctrl(N) | ctrl(none), fp("hex"), admitted | refused(Reason))
//! eval(E, A, Event, rule(Label) | norule, ops([..]), ok | diag("text"))
//! send(env(N), eval(E), src(S), dst(D), msg(M), law("hash"), profile([..]) | noprofile)
//! arrive(env(N), eval(E))
//! drop(env(N), reason(R))
//! deliver(eval(E), to(A), from(S), msg(M))
//! undelivered(eval(E), to(A), from(S), msg(M))
//! queued(eval(E), to(A), msg(M))
//! flush(to(A), msg(M))
//! dbquery(eval(E), agent(A), query(Q), result(R))
//! dbload(A, [Post, ..])
//! skipped(eval(E), op(Op), reason("text"))
//! refuse(agent(A), action(T), reason(R))
//! quit(eval(E), agent(A), fp("hex"))
//! broadcast(eval(E), origin(A), fp("hex"), to([..]))
//! blacklisted(agent(A), fp("hex"))
//! detach(A)
//! attach(A)
//! drain(hops(N))
//! snapshot(A, [Attr, ..])
//! searchResult(qid(Q), origin(O), ttl(T), thr(H), pred(P), hits([hit(R, [Id, ..]), ..]))
//! ```
//!
//! `arrive` precedes the `eval` it names; every other entry follows the
//! `eval` it names.

use std::fmt;

use crate::law::LawHash;
use crate::support::{AgentName, ControllerId, Fingerprint};
use crate::syntax::SyntaxError;
use crate::term::Term;

/// Depth allowed when reading trace lines: entries wrap events that wrap
/// messages.
pub const TRACE_DEPTH: usize = 64;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AdoptOutcome {
    Admitted,
    Refused(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Entry {
    Run {
        seed: u64,
    },
    Boot {
        community: String,
        law_name: String,
        law_hash: LawHash,
        controlled: Vec<String>,
        single: Vec<String>,
        internal: Vec<String>,
        pool: usize,
    },
    Step {
        index: usize,
        action: Term,
    },
    Name {
        requested: String,
        assigned: AgentName,
        community: String,
    },
    Adopt {
        agent: AgentName,
        community: String,
        controller: Option<ControllerId>,
        fp: Fingerprint,
        outcome: AdoptOutcome,
    },
    Eval {
        id: u64,
        agent: AgentName,
        event: Term,
        rule: Option<String>,
        ops: Vec<Term>,
        diagnostic: Option<String>,
    },
    Send {
        env: u64,
        eval: u64,
        src: AgentName,
        dst: AgentName,
        msg: Term,
        law: LawHash,
        profile: Option<Vec<Term>>,
    },
    Arrive {
        env: u64,
        eval: u64,
    },
    Drop {
        env: u64,
        reason: String,
    },
    Deliver {
        eval: u64,
        to: AgentName,
        from: Term,
        msg: Term,
    },
    Undelivered {
        eval: u64,
        to: AgentName,
        from: Term,
        msg: Term,
    },
    Queued {
        eval: u64,
        to: AgentName,
        msg: Term,
    },
    Flush {
        to: AgentName,
        msg: Term,
    },
    DbQuery {
        eval: u64,
        agent: AgentName,
        query: Term,
        result: Term,
    },
    DbLoad {
        agent: AgentName,
        posts: Vec<Term>,
    },
    Skipped {
        eval: u64,
        op: Term,
        reason: String,
    },
    Refuse {
        agent: AgentName,
        action: Term,
        reason: String,
    },
    Quit {
        eval: u64,
        agent: AgentName,
        fp: Fingerprint,
    },
    Broadcast {
        eval: u64,
        origin: AgentName,
        fp: Fingerprint,
        to: Vec<AgentName>,
    },
    Blacklisted {
        agent: AgentName,
        fp: Fingerprint,
    },
    Detach {
        agent: AgentName,
    },
    Attach {
        agent: AgentName,
    },
    Drain {
        hops: u64,
    },
    Snapshot {
        agent: AgentName,
        state: Vec<Term>,
    },
    SearchResult {
        qid: Term,
        origin: AgentName,
        ttl: i64,
        threshold: i64,
        pred: Term,
        hits: Vec<(AgentName, Vec<Term>)>,
    },
}

fn app(f: &str, args: Vec<Term>) -> Term {
    Term::app(f, args)
}

fn wrap(f: &str, t: Term) -> Term {
    Term::app(f, vec![t])
}

fn int(n: u64) -> Term {
    Term::Int(n as i64)
}

fn name(a: &AgentName) -> Term {
    a.to_term()
}

fn names(v: &[AgentName]) -> Term {
    Term::list(v.iter().map(name).collect())
}

fn atoms(v: &[String]) -> Term {
    Term::list(v.iter().map(|s| Term::atom(s.clone())).collect())
}

fn hex(s: String) -> Term {
    Term::str(s)
}

impl Entry {
    pub fn to_term(&self) -> Term {
        match self {
            Entry::Run { seed } => wrap("run", wrap("seed", int(*seed))),
            Entry::Boot {
                community,
                law_name,
                law_hash,
                controlled,
                single,
                internal,
                pool,
            } => app(
                "boot",
                vec![
                    wrap("community", Term::atom(community.clone())),
                    app("law", vec![Term::atom(law_name.clone()), hex(law_hash.to_hex())]),
                    wrap("controlled", atoms(controlled)),
                    wrap("single", atoms(single)),
                    wrap("internal", atoms(internal)),
                    wrap("pool", int(*pool as u64)),
                ],
            ),
            Entry::Step { index, action } => app("step", vec![int(*index as u64), action.clone()]),
            Entry::Name {
                requested,
                assigned,
                community,
            } => app(
                "name",
                vec![
                    wrap("requested", Term::str(requested.clone())),
                    wrap("assigned", name(assigned)),
                    wrap("community", Term::atom(community.clone())),
                ],
            ),
            Entry::Adopt {
                agent,
                community,
                controller,
                fp,
                outcome,
            } => app(
                "adopt",
                vec![
                    name(agent),
                    wrap("community", Term::atom(community.clone())),
                    wrap(
                        "ctrl",
                        controller.map(|c| int(c.0 as u64)).unwrap_or_else(|| Term::atom("none")),
                    ),
                    wrap("fp", hex(fp.to_hex())),
                    match outcome {
                        AdoptOutcome::Admitted => Term::atom("admitted"),
                        AdoptOutcome::Refused(r) => wrap("refused", Term::atom(r.clone())),
                    },
                ],
            ),
            Entry::Eval {
                id,
                agent,
                event,
                rule,
                ops,
                diagnostic,
            } => app(
                "eval",
                vec![
                    int(*id),
                    name(agent),
                    event.clone(),
                    match rule {
                        Some(r) => wrap("rule", Term::atom(r.clone())),
                        None => Term::atom("norule"),
                    },
                    wrap("ops", Term::list(ops.clone())),
                    match diagnostic {
                        Some(d) => wrap("diag", Term::str(d.clone())),
                        None => Term::atom("ok"),
                    },
                ],
            ),
            Entry::Send {
                env,
                eval,
                src,
                dst,
                msg,
                law,
                profile,
            } => app(
                "send",
                vec![
                    wrap("env", int(*env)),
                    wrap("eval", int(*eval)),
                    wrap("src", name(src)),
                    wrap("dst", name(dst)),
                    wrap("msg", msg.clone()),
                    wrap("law", hex(law.to_hex())),
                    match profile {
                        Some(p) => wrap("profile", Term::list(p.clone())),
                        None => Term::atom("noprofile"),
                    },
                ],
            ),
            Entry::Arrive { env, eval } => app("arrive", vec![wrap("env", int(*env)), wrap("eval", int(*eval))]),
            Entry::Drop { env, reason } => app(
                "drop",
                vec![wrap("env", int(*env)), wrap("reason", Term::atom(reason.clone()))],
            ),
            Entry::Deliver { eval, to, from, msg } | Entry::Undelivered { eval, to, from, msg } => app(
                if matches!(self, Entry::Deliver { .. }) {
                    "deliver"
                } else {
                    "undelivered"
                },
                vec![
                    wrap("eval", int(*eval)),
                    wrap("to", name(to)),
                    wrap("from", from.clone()),
                    wrap("msg", msg.clone()),
                ],
            ),
            Entry::Queued { eval, to, msg } => app(
                "queued",
                vec![wrap("eval", int(*eval)), wrap("to", name(to)), wrap("msg", msg.clone())],
            ),
            Entry::Flush { to, msg } => app("flush", vec![wrap("to", name(to)), wrap("msg", msg.clone())]),
            Entry::DbQuery {
                eval,
                agent,
                query,
                result,
            } => app(
                "dbquery",
                vec![
                    wrap("eval", int(*eval)),
                    wrap("agent", name(agent)),
                    wrap("query", query.clone()),
                    wrap("result", result.clone()),
                ],
            ),
            Entry::DbLoad { agent, posts } => app("dbload", vec![name(agent), Term::list(posts.clone())]),
            Entry::Skipped { eval, op, reason } => app(
                "skipped",
                vec![
                    wrap("eval", int(*eval)),
                    wrap("op", op.clone()),
                    wrap("reason", Term::str(reason.clone())),
                ],
            ),
            Entry::Refuse { agent, action, reason } => app(
                "refuse",
                vec![
                    wrap("agent", name(agent)),
                    wrap("action", action.clone()),
                    wrap("reason", Term::atom(reason.clone())),
                ],
            ),
            Entry::Quit { eval, agent, fp } => app(
                "quit",
                vec![
                    wrap("eval", int(*eval)),
                    wrap("agent", name(agent)),
                    wrap("fp", hex(fp.to_hex())),
                ],
            ),
            Entry::Broadcast { eval, origin, fp, to } => app(
                "broadcast",
                vec![
                    wrap("eval", int(*eval)),
                    wrap("origin", name(origin)),
                    wrap("fp", hex(fp.to_hex())),
                    wrap("to", names(to)),
                ],
            ),
            Entry::Blacklisted { agent, fp } => app(
                "blacklisted",
                vec![wrap("agent", name(agent)), wrap("fp", hex(fp.to_hex()))],
            ),
            Entry::Detach { agent } => wrap("detach", name(agent)),
            Entry::Attach { agent } => wrap("attach", name(agent)),
            Entry::Drain { hops } => wrap("drain", wrap("hops", int(*hops))),
            Entry::Snapshot { agent, state } => app("snapshot", vec![name(agent), Term::list(state.clone())]),
            Entry::SearchResult {
                qid,
                origin,
                ttl,
                threshold,
                pred,
                hits,
            } => app(
                "searchResult",
                vec![
                    wrap("qid", qid.clone()),
                    wrap("origin", name(origin)),
                    wrap("ttl", Term::Int(*ttl)),
                    wrap("thr", Term::Int(*threshold)),
                    wrap("pred", pred.clone()),
                    wrap(
                        "hits",
                        Term::list(
                            hits.iter()
                                .map(|(r, ids)| app("hit", vec![name(r), Term::list(ids.clone())]))
                                .collect(),
                        ),
                    ),
                ],
            ),
        }
    }

    pub fn from_term(t: &Term) -> Option<Entry> {
        let a = t.args();
        let f = |i: usize, n: &str| -> Option<&Term> {
            let x = a.get(i)?;
            x.is(n, 1).then(|| &x.args()[0])
        };
        let u = |x: &Term| -> Option<u64> { u64::try_from(x.as_int()?).ok() };
        let ag = |x: &Term| AgentName::from_term(x);
        let fp = |x: &Term| Fingerprint::from_hex(x.as_str()?);
        let lh = |x: &Term| LawHash::from_hex(x.as_str()?);
        let strings = |x: &Term| -> Option<Vec<String>> {
            x.as_list()?
                .iter()
                .map(|s| s.as_atom().map(str::to_string))
                .collect()
        };
        let list = |x: &Term| x.as_list().map(<[Term]>::to_vec);
        Some(match (t.functor()?, a.len()) {
            ("run", 1) => Entry::Run {
                seed: u(f(0, "seed")?)?,
            },
            ("boot", 6) => {
                let law = &a[1];
                if !law.is("law", 2) {
                    return None;
                }
                Entry::Boot {
                    community: f(0, "community")?.as_atom()?.to_string(),
                    law_name: law.args()[0].as_atom()?.to_string(),
                    law_hash: lh(&law.args()[1])?,
                    controlled: strings(f(2, "controlled")?)?,
                    single: strings(f(3, "single")?)?,
                    internal: strings(f(4, "internal")?)?,
                    pool: u(f(5, "pool")?)? as usize,
                }
            }
            ("step", 2) => Entry::Step {
                index: u(&a[0])? as usize,
                action: a[1].clone(),
            },
            ("name", 3) => Entry::Name {
                requested: f(0, "requested")?.as_str()?.to_string(),
                assigned: ag(f(1, "assigned")?)?,
                community: f(2, "community")?.as_atom()?.to_string(),
            },
            ("adopt", 5) => Entry::Adopt {
                agent: ag(&a[0])?,
                community: f(1, "community")?.as_atom()?.to_string(),
                controller: match f(2, "ctrl")? {
                    Term::Atom(n) if n == "none" => None,
                    x => Some(ControllerId(u32::try_from(x.as_int()?).ok()?)),
                },
                fp: fp(f(3, "fp")?)?,
                outcome: match &a[4] {
                    Term::Atom(s) if s == "admitted" => AdoptOutcome::Admitted,
                    r if r.is("refused", 1) => AdoptOutcome::Refused(r.args()[0].as_atom()?.to_string()),
                    _ => return None,
                },
            },
            ("eval", 6) => Entry::Eval {
                id: u(&a[0])?,
                agent: ag(&a[1])?,
                event: a[2].clone(),
                rule: match &a[3] {
                    Term::Atom(s) if s == "norule" => None,
                    r if r.is("rule", 1) => Some(r.args()[0].as_atom()?.to_string()),
                    _ => return None,
                },
                ops: list(f(4, "ops")?)?,
                diagnostic: match &a[5] {
                    Term::Atom(s) if s == "ok" => None,
                    d if d.is("diag", 1) => Some(d.args()[0].as_str()?.to_string()),
                    _ => return None,
                },
            },
            ("send", 7) => Entry::Send {
                env: u(f(0, "env")?)?,
                eval: u(f(1, "eval")?)?,
                src: ag(f(2, "src")?)?,
                dst: ag(f(3, "dst")?)?,
                msg: f(4, "msg")?.clone(),
                law: lh(f(5, "law")?)?,
                profile: match &a[6] {
                    Term::Atom(s) if s == "noprofile" => None,
                    p if p.is("profile", 1) => Some(list(&p.args()[0])?),
                    _ => return None,
                },
            },
            ("arrive", 2) => Entry::Arrive {
                env: u(f(0, "env")?)?,
                eval: u(f(1, "eval")?)?,
            },
            ("drop", 2) => Entry::Drop {
                env: u(f(0, "env")?)?,
                reason: f(1, "reason")?.as_atom()?.to_string(),
            },
            ("deliver", 4) => Entry::Deliver {
                eval: u(f(0, "eval")?)?,
                to: ag(f(1, "to")?)?,
                from: f(2, "from")?.clone(),
                msg: f(3, "msg")?.clone(),
            },
            ("undelivered", 4) => Entry::Undelivered {
                eval: u(f(0, "eval")?)?,
                to: ag(f(1, "to")?)?,
                from: f(2, "from")?.clone(),
                msg: f(3, "msg")?.clone(),
            },
            ("queued", 3) => Entry::Queued {
                eval: u(f(0, "eval")?)?,
                to: ag(f(1, "to")?)?,
                msg: f(2, "msg")?.clone(),
            },
            ("flush", 2) => Entry::Flush {
                to: ag(f(0, "to")?)?,
                msg: f(1, "msg")?.clone(),
            },
            ("dbquery", 4) => Entry::DbQuery {
                eval: u(f(0, "eval")?)?,
                agent: ag(f(1, "agent")?)?,
                query: f(2, "query")?.clone(),
                result: f(3, "result")?.clone(),
            },
            ("dbload", 2) => Entry::DbLoad {
                agent: ag(&a[0])?,
                posts: list(&a[1])?,
            },
            ("skipped", 3) => Entry::Skipped {
                eval: u(f(0, "eval")?)?,
                op: f(1, "op")?.clone(),
                reason: f(2, "reason")?.as_str()?.to_string(),
            },
            ("refuse", 3) => Entry::Refuse {
                agent: ag(f(0, "agent")?)?,
                action: f(1, "action")?.clone(),
                reason: f(2, "reason")?.as_atom()?.to_string(),
            },
            ("quit", 3) => Entry::Quit {
                eval: u(f(0, "eval")?)?,
                agent: ag(f(1, "agent")?)?,
                fp: fp(f(2, "fp")?)?,
            },
            ("broadcast", 4) => Entry::Broadcast {
                eval: u(f(0, "eval")?)?,
                origin: ag(f(1, "origin")?)?,
                fp: fp(f(2, "fp")?)?,
                to: f(3, "to")?.as_list()?.iter().map(ag).collect::<Option<_>>()?,
            },
            ("blacklisted", 2) => Entry::Blacklisted {
                agent: ag(f(0, "agent")?)?,
                fp: fp(f(1, "fp")?)?,
            },
            ("detach", 1) => Entry::Detach { agent: ag(&a[0])? },
            ("attach", 1) => Entry::Attach { agent: ag(&a[0])? },
            ("drain", 1) => Entry::Drain {
                hops: u(f(0, "hops")?)?,
            },
            ("snapshot", 2) => Entry::Snapshot {
                agent: ag(&a[0])?,
                state: list(&a[1])?,
            },
            ("searchResult", 6) => Entry::SearchResult {
                qid: f(0, "qid")?.clone(),
                origin: ag(f(1, "origin")?)?,
                ttl: f(2, "ttl")?.as_int()?,
                threshold: f(3, "thr")?.as_int()?,
                pred: f(4, "pred")?.clone(),
                hits: f(5, "hits")?
                    .as_list()?
                    .iter()
                    .map(|h| {
                        if !h.is("hit", 2) {
                            return None;
                        }
                        Some((ag(&h.args()[0])?, list(&h.args()[1])?))
                    })
                    .collect::<Option<_>>()?,
            },
            _ => return None,
        })
    }
}

impl fmt::Display for Entry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_term())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("line {line}: {source}")]
    Syntax { line: usize, source: SyntaxError },
    #[error("line {line}: unrecognised entry `{text}`")]
    Unknown { line: usize, text: String },
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Trace {
    entries: Vec<Entry>,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, e: Entry) {
        self.entries.push(e);
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries_mut(&mut self) -> &mut Vec<Entry> {
        &mut self.entries
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&e.to_string());
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Trace, TraceError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let t = Term::parse_with_depth(line, TRACE_DEPTH).map_err(|source| TraceError::Syntax { line: i + 1, source })?;
            let e = Entry::from_term(&t).ok_or_else(|| TraceError::Unknown {
                line: i + 1,
                text: line.chars().take(80).collect(),
            })?;
            entries.push(e);
        }
        Ok(Trace { entries })
    }
}
