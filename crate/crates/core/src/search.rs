//! Gossip search over member databases.
//!
//! Queries travel as law-governed messages:
//! `query(Qid, Pred, Ttl, Threshold, Origin, Hops)` between controllers and
//! `hit(Qid, Responder, [PostId], Hops)` straight back to the origin. The
//! database side runs `search(Qid, Pred, Origin, Hops)` and answers with
//! `found(Qid, Origin, Hops, [PostId])`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::member::{MemberDatabase, Post, PostId};
use crate::support::AgentName;
use crate::term::Term;

pub const DEFAULT_TTL: i64 = 5;
pub const DEFAULT_THRESHOLD: i64 = 3;

/// Ground predicate over post fields.
///
/// `any`, `type(#t#)`, `id(pid(A, N))`, `author(A)`, `contains("text")`,
/// `and(P, Q)`, `or(P, Q)`, `not(P)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PostPredicate {
    Any,
    Type(String),
    Id(PostId),
    Author(AgentName),
    Contains(String),
    And(Box<PostPredicate>, Box<PostPredicate>),
    Or(Box<PostPredicate>, Box<PostPredicate>),
    Not(Box<PostPredicate>),
}

impl PostPredicate {
    pub fn from_term(t: &Term) -> Option<PostPredicate> {
        let a = t.args();
        let sub = |i: usize| PostPredicate::from_term(&a[i]).map(Box::new);
        Some(match (t.functor()?, a.len()) {
            ("any", 0) => PostPredicate::Any,
            ("type", 1) => match &a[0] {
                Term::Tag(k) => PostPredicate::Type(k.clone()),
                _ => return None,
            },
            ("id", 1) => PostPredicate::Id(PostId::from_term(&a[0])?),
            ("author", 1) => PostPredicate::Author(AgentName::from_term(&a[0])?),
            ("contains", 1) => PostPredicate::Contains(a[0].as_str()?.to_string()),
            ("and", 2) => PostPredicate::And(sub(0)?, sub(1)?),
            ("or", 2) => PostPredicate::Or(sub(0)?, sub(1)?),
            ("not", 1) => PostPredicate::Not(sub(0)?),
            _ => return None,
        })
    }

    pub fn to_term(&self) -> Term {
        match self {
            PostPredicate::Any => Term::atom("any"),
            PostPredicate::Type(k) => Term::app("type", vec![Term::tag(k.clone())]),
            PostPredicate::Id(id) => Term::app("id", vec![id.to_term()]),
            PostPredicate::Author(a) => Term::app("author", vec![a.to_term()]),
            PostPredicate::Contains(s) => Term::app("contains", vec![Term::str(s.clone())]),
            PostPredicate::And(p, q) => Term::app("and", vec![p.to_term(), q.to_term()]),
            PostPredicate::Or(p, q) => Term::app("or", vec![p.to_term(), q.to_term()]),
            PostPredicate::Not(p) => Term::app("not", vec![p.to_term()]),
        }
    }

    pub fn matches(&self, post: &Post) -> bool {
        match self {
            PostPredicate::Any => true,
            PostPredicate::Type(k) => &post.kind == k,
            PostPredicate::Id(id) => &post.id == id,
            PostPredicate::Author(a) => post.author() == a,
            PostPredicate::Contains(s) => post.body.contains(s.as_str()),
            PostPredicate::And(p, q) => p.matches(post) && q.matches(post),
            PostPredicate::Or(p, q) => p.matches(post) || q.matches(post),
            PostPredicate::Not(p) => !p.matches(post),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SearchQuery {
    pub qid: Term,
    pub predicate: PostPredicate,
    pub ttl: i64,
    pub threshold: i64,
    pub origin: AgentName,
}

/// Answers a `search(Qid, Pred, Origin, Hops)` database request. A
/// predicate that does not parse matches nothing.
pub fn search_db(db: &MemberDatabase, request: &Term) -> Option<Term> {
    if !request.is("search", 4) {
        return None;
    }
    let a = request.args();
    let ids = match PostPredicate::from_term(&a[1]) {
        Some(p) => db.matching(&p).map(|post| post.id.to_term()).collect(),
        None => Vec::new(),
    };
    Some(Term::app(
        "found",
        vec![a[0].clone(), a[2].clone(), a[3].clone(), Term::list(ids)],
    ))
}

/// Hits collected at the origin.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SearchResult {
    pub qid: Option<Term>,
    pub hits: BTreeSet<(AgentName, PostId)>,
    /// Fewest hops at which each responder answered.
    pub hops: BTreeMap<AgentName, u32>,
}

impl SearchResult {
    pub fn new(qid: Term) -> Self {
        SearchResult {
            qid: Some(qid),
            ..Default::default()
        }
    }

    /// Folds in one `hit(Qid, Responder, Ids, Hops)` message.
    pub fn absorb(&mut self, hit: &Term) -> bool {
        if !hit.is("hit", 4) {
            return false;
        }
        let a = hit.args();
        let (Some(responder), Some(ids), Some(h)) =
            (AgentName::from_term(&a[1]), a[2].as_list(), a[3].as_int())
        else {
            return false;
        };
        let h = u32::try_from(h).unwrap_or(u32::MAX);
        for id in ids.iter().filter_map(PostId::from_term) {
            self.hits.insert((responder.clone(), id));
        }
        let e = self.hops.entry(responder).or_insert(h);
        *e = (*e).min(h);
        true
    }

    /// Members that returned at least one hit.
    pub fn contributors(&self) -> BTreeSet<AgentName> {
        self.hits.iter().map(|(a, _)| a.clone()).collect()
    }
}

/// Directed neighbour graph.
pub type Graph = BTreeMap<AgentName, BTreeSet<AgentName>>;

/// Nodes within `ttl` hops of `origin`.
pub fn bfs_oracle(graph: &Graph, origin: &AgentName, ttl: u32) -> BTreeSet<AgentName> {
    let mut seen = BTreeSet::from([origin.clone()]);
    let mut frontier = VecDeque::from([(origin.clone(), 0u32)]);
    while let Some((node, d)) = frontier.pop_front() {
        if d == ttl {
            continue;
        }
        for n in graph.get(&node).into_iter().flatten() {
            if seen.insert(n.clone()) {
                frontier.push_back((n.clone(), d + 1));
            }
        }
    }
    seen
}

/// Upper bound on forwards for one query: Σ_{h=0}^{ttl} threshold^h.
pub fn forward_bound(ttl: u32, threshold: u64) -> u64 {
    (0..=ttl).fold(0u64, |acc, h| acc.saturating_add(threshold.saturating_pow(h)))
}
