//! The actor-facing half of a member: posts, the private database behind
//! the controller, and the profile editing API.

use std::collections::BTreeMap;
use std::fmt;

use crate::controller::{Controller, ControllerError, Dispatch};
use crate::search::PostPredicate;
use crate::support::AgentName;
use crate::term::Term;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum MemberError {
    #[error("`{0}` is not a CRUD query")]
    NotCrud(Term),
    #[error("`{0}` is not a post")]
    NotAPost(Term),
    #[error("line {line}: {message}")]
    BadDump { line: usize, message: String },
}

/// `pid(Author, Seq)`: unique because each author numbers its own posts.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PostId {
    pub author: AgentName,
    pub seq: u64,
}

impl PostId {
    pub fn new(author: impl Into<AgentName>, seq: u64) -> Self {
        PostId {
            author: author.into(),
            seq,
        }
    }

    pub fn to_term(&self) -> Term {
        Term::app("pid", vec![self.author.to_term(), Term::Int(self.seq as i64)])
    }

    pub fn from_term(t: &Term) -> Option<PostId> {
        if !t.is("pid", 2) {
            return None;
        }
        let author = AgentName::from_term(&t.args()[0])?;
        let seq = u64::try_from(t.args()[1].as_int()?).ok()?;
        Some(PostId { author, seq })
    }
}

impl fmt::Display for PostId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_term())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Post {
    pub id: PostId,
    /// Tag name without the `#` delimiters, e.g. `management`.
    pub kind: String,
    pub body: String,
}

impl Post {
    pub fn new(id: PostId, kind: impl Into<String>, body: impl Into<String>) -> Self {
        Post {
            id,
            kind: kind.into(),
            body: body.into(),
        }
    }

    pub fn author(&self) -> &AgentName {
        &self.id.author
    }

    /// `post(pid(A, N), #type#, "body")`
    pub fn to_term(&self) -> Term {
        Term::app(
            "post",
            vec![self.id.to_term(), Term::tag(self.kind.clone()), Term::str(self.body.clone())],
        )
    }

    pub fn from_term(t: &Term) -> Option<Post> {
        if !t.is("post", 3) {
            return None;
        }
        let a = t.args();
        let id = PostId::from_term(&a[0])?;
        let kind = match &a[1] {
            Term::Tag(k) if !k.is_empty() => k.clone(),
            _ => return None,
        };
        Some(Post::new(id, kind, a[2].as_str()?))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CrudVerb {
    Create,
    Read,
    Update,
    Delete,
}

impl CrudVerb {
    pub const ALL: [CrudVerb; 4] = [CrudVerb::Create, CrudVerb::Read, CrudVerb::Update, CrudVerb::Delete];

    pub fn name(self) -> &'static str {
        match self {
            CrudVerb::Create => "create",
            CrudVerb::Read => "read",
            CrudVerb::Update => "update",
            CrudVerb::Delete => "delete",
        }
    }
}

/// `create(Post)`, `read(Predicate)`, `update(Post)` or `delete(PostId)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CrudQuery {
    pub verb: CrudVerb,
    pub payload: Term,
}

impl CrudQuery {
    pub fn new(verb: CrudVerb, payload: Term) -> Self {
        CrudQuery { verb, payload }
    }

    pub fn to_term(&self) -> Term {
        Term::app(self.verb.name(), vec![self.payload.clone()])
    }

    pub fn from_term(t: &Term) -> Result<CrudQuery, MemberError> {
        let verb = CrudVerb::ALL
            .into_iter()
            .find(|v| t.is(v.name(), 1))
            .ok_or_else(|| MemberError::NotCrud(t.clone()))?;
        Ok(CrudQuery::new(verb, t.args()[0].clone()))
    }
}

/// A member's private post store. Only its controller's `release` reaches it.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MemberDatabase {
    address: String,
    records: BTreeMap<PostId, Post>,
}

impl MemberDatabase {
    pub fn new(address: impl Into<String>) -> Self {
        MemberDatabase {
            address: address.into(),
            records: BTreeMap::new(),
        }
    }

    pub fn address(&self) -> &str {
        &self.address
    }

    pub fn records(&self) -> impl Iterator<Item = &Post> {
        self.records.values()
    }

    pub fn get(&self, id: &PostId) -> Option<&Post> {
        self.records.get(id)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn matching<'a>(&'a self, pred: &'a PostPredicate) -> impl Iterator<Item = &'a Post> + 'a {
        self.records.values().filter(move |p| pred.matches(p))
    }

    /// Runs one query and returns the result term handed back to the
    /// controller as a `submitted` event.
    pub fn crud_execute(&mut self, q: &CrudQuery) -> Term {
        let invalid = || Term::app("invalid", vec![q.to_term()]);
        match q.verb {
            CrudVerb::Create => {
                let Some(post) = Post::from_term(&q.payload) else {
                    return invalid();
                };
                let id = post.id.to_term();
                if self.records.contains_key(&post.id) {
                    return Term::app("exists", vec![id]);
                }
                self.records.insert(post.id.clone(), post);
                Term::app("created", vec![id])
            }
            CrudVerb::Read => {
                let Some(pred) = PostPredicate::from_term(&q.payload) else {
                    return invalid();
                };
                let hits = self.matching(&pred).map(Post::to_term).collect();
                Term::app("records", vec![q.payload.clone(), Term::list(hits)])
            }
            CrudVerb::Update => {
                let Some(post) = Post::from_term(&q.payload) else {
                    return invalid();
                };
                let id = post.id.to_term();
                match self.records.get_mut(&post.id) {
                    Some(slot) => {
                        *slot = post;
                        Term::app("updated", vec![id])
                    }
                    None => Term::app("notFound", vec![id]),
                }
            }
            CrudVerb::Delete => {
                let Some(id) = PostId::from_term(&q.payload) else {
                    return invalid();
                };
                match self.records.remove(&id) {
                    Some(_) => Term::app("deleted", vec![id.to_term()]),
                    None => Term::app("notFound", vec![id.to_term()]),
                }
            }
        }
    }

    /// One canonical post term per line.
    pub fn dump(&self) -> String {
        self.records.values().map(|p| format!("{}\n", p.to_term())).collect()
    }

    pub fn load(address: impl Into<String>, text: &str) -> Result<MemberDatabase, MemberError> {
        let mut db = MemberDatabase::new(address);
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let bad = |message: String| MemberError::BadDump {
                line: i + 1,
                message,
            };
            let t = Term::parse(line).map_err(|e| bad(e.to_string()))?;
            let post = Post::from_term(&t).ok_or_else(|| bad(format!("`{t}` is not a post")))?;
            db.records.insert(post.id.clone(), post);
        }
        Ok(db)
    }
}

/// Message terms an actor sends to its own controller.
pub mod msg {
    use crate::term::Term;

    pub fn add_profile(attr: Term) -> Term {
        Term::app("addProfile", vec![attr])
    }

    pub fn update_profile(attr: Term) -> Term {
        Term::app("updateProfile", vec![attr])
    }

    pub fn add_filter(attr: Term) -> Term {
        Term::app("addFilter", vec![attr])
    }

    pub fn publish(post: Term) -> Term {
        Term::app("publish", vec![post])
    }

    pub fn request_subscribe() -> Term {
        Term::atom("requestSubscribe")
    }

    pub fn dm(kind: &str, body: &str) -> Term {
        Term::app("dm", vec![Term::tag(kind), Term::str(body)])
    }

    pub fn db(query: Term) -> Term {
        Term::app("db", vec![query])
    }

    pub fn revoke() -> Term {
        Term::tag("revoke")
    }

    pub fn search(qid: Term, pred: Term, ttl: i64, threshold: i64) -> Term {
        Term::app("search", vec![qid, pred, Term::Int(ttl), Term::Int(threshold)])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProfileEdit {
    Accepted,
    Rejected,
}

fn edit(c: &mut Controller, message: Term, expect: Term) -> Result<(ProfileEdit, Dispatch), ControllerError> {
    let me = c.agent().cloned().ok_or(ControllerError::NotAdopted)?;
    let d = c.on_actor_send(&me, message)?;
    let fired = d.eval.fired();
    let outcome = if fired && c.state().contains(&expect) {
        ProfileEdit::Accepted
    } else {
        ProfileEdit::Rejected
    };
    Ok((outcome, d))
}

/// Adds a discretionary attribute; the law refuses controlled ones.
pub fn add_profile_attribute(c: &mut Controller, attr: Term) -> Result<(ProfileEdit, Dispatch), ControllerError> {
    edit(c, msg::add_profile(attr.clone()), attr)
}

/// Replaces every attribute sharing `attr`'s functor with `attr`.
pub fn update_profile_attribute(c: &mut Controller, attr: Term) -> Result<(ProfileEdit, Dispatch), ControllerError> {
    edit(c, msg::update_profile(attr.clone()), attr)
}

pub fn add_filter(c: &mut Controller, attr: Term) -> Result<(ProfileEdit, Dispatch), ControllerError> {
    let expect = Term::app("filter", vec![attr.clone()]);
    edit(c, msg::add_filter(attr), expect)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Term {
        Term::parse(s).unwrap()
    }

    fn post(seq: u64, body: &str) -> Post {
        Post::new(PostId::new("alice", seq), "note", body)
    }

    #[test]
    fn create_then_read_by_id() {
        let mut db = MemberDatabase::new("db://enterprise/alice");
        let p = post(1, "hello");
        assert_eq!(
            db.crud_execute(&CrudQuery::new(CrudVerb::Create, p.to_term())),
            t("created(pid(alice, 1))")
        );
        let r = db.crud_execute(&CrudQuery::new(CrudVerb::Read, t("id(pid(alice, 1))")));
        assert_eq!(r, Term::app("records", vec![t("id(pid(alice, 1))"), Term::list(vec![p.to_term()])]));
    }

    #[test]
    fn read_of_nothing_is_an_empty_list() {
        let mut db = MemberDatabase::new("x");
        let r = db.crud_execute(&CrudQuery::new(CrudVerb::Read, t("any")));
        assert_eq!(r, t("records(any, [])"));
    }

    #[test]
    fn update_and_delete_of_missing_ids() {
        let mut db = MemberDatabase::new("x");
        let p = post(9, "x");
        assert_eq!(
            db.crud_execute(&CrudQuery::new(CrudVerb::Update, p.to_term())),
            t("notFound(pid(alice, 9))")
        );
        assert_eq!(
            db.crud_execute(&CrudQuery::new(CrudVerb::Delete, t("pid(alice, 9)"))),
            t("notFound(pid(alice, 9))")
        );
    }

    #[test]
    fn non_crud_verbs_are_not_queries() {
        assert!(CrudQuery::from_term(&t("drop(all)")).is_err());
        assert_eq!(
            CrudQuery::from_term(&t("delete(pid(a, 1))")).unwrap().verb,
            CrudVerb::Delete
        );
    }

    #[test]
    fn dump_and_load_round_trip() {
        let mut db = MemberDatabase::new("db://enterprise/alice");
        for i in 0..3 {
            db.crud_execute(&CrudQuery::new(CrudVerb::Create, post(i, &format!("b\"{i}")).to_term()));
        }
        let text = db.dump();
        assert_eq!(MemberDatabase::load("db://enterprise/alice", &text).unwrap(), db);
        assert!(matches!(
            MemberDatabase::load("x", "post(1)\n"),
            Err(MemberError::BadDump { line: 1, .. })
        ));
    }

    #[test]
    fn post_terms_round_trip() {
        let p = Post::new(PostId::new("alice-2", 3), "management", "q3 plan");
        assert_eq!(p.to_term().to_string(), "post(pid('alice-2', 3), #management#, \"q3 plan\")");
        assert_eq!(Post::from_term(&p.to_term()), Some(p));
    }
}
