//! The enterprise community law and read-only views over states it governs.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, OnceLock};

use crate::law::{parse_law, Law};
use crate::member::PostId;
use crate::state::ControlState;
use crate::support::AgentName;
use crate::term::Term;

pub const BE_LAW_SOURCE: &str = include_str!("../laws/be.law");

/// The parsed enterprise law, shared.
pub fn be_law() -> Arc<Law> {
    static LAW: OnceLock<Arc<Law>> = OnceLock::new();
    LAW.get_or_init(|| Arc::new(parse_law(BE_LAW_SOURCE).expect("be.law parses")))
        .clone()
}

/// A group identifier such as `t1` or `management`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroupTag(pub Term);

impl GroupTag {
    pub fn new(id: &str) -> Self {
        GroupTag(Term::atom(id))
    }

    pub fn attribute(&self) -> Term {
        Term::app("group", vec![self.0.clone()])
    }
}

/// Group ids of `group(G)` terms in `attrs`.
pub fn groups_in<'a>(attrs: impl IntoIterator<Item = &'a Term>) -> BTreeSet<GroupTag> {
    attrs
        .into_iter()
        .filter(|t| t.is("group", 1))
        .map(|t| GroupTag(t.args()[0].clone()))
        .collect()
}

pub fn groups(state: &ControlState) -> BTreeSet<GroupTag> {
    groups_in(state.attributes())
}

/// Per-group subscriber lists held by a publisher.
pub fn subscriber_lists(state: &ControlState) -> BTreeMap<GroupTag, BTreeSet<AgentName>> {
    let mut out: BTreeMap<GroupTag, BTreeSet<AgentName>> = BTreeMap::new();
    for t in state.with_functor("subList").filter(|t| t.arity() == 2) {
        if let Some(s) = AgentName::from_term(&t.args()[1]) {
            out.entry(GroupTag(t.args()[0].clone())).or_default().insert(s);
        }
    }
    out
}

/// Everyone a publish would reach: the union of the lists of groups the
/// publisher holds.
pub fn audience(state: &ControlState) -> BTreeSet<AgentName> {
    let held = groups(state);
    subscriber_lists(state)
        .into_iter()
        .filter(|(g, _)| held.contains(g))
        .flat_map(|(_, s)| s)
        .collect()
}

pub fn filters(state: &ControlState) -> BTreeSet<Term> {
    state
        .with_functor("filter")
        .filter(|t| t.arity() == 1)
        .map(|t| t.args()[0].clone())
        .collect()
}

/// Subscribers and subscribees: the search neighbourhood.
pub fn neighbors(state: &ControlState) -> BTreeSet<AgentName> {
    state
        .with_functor("neighbor")
        .filter(|t| t.arity() == 1)
        .filter_map(|t| AgentName::from_term(&t.args()[0]))
        .collect()
}

/// Most recent first.
pub fn last_ten_posts(state: &ControlState) -> Vec<PostId> {
    state
        .with_functor("lastTenPosts")
        .next()
        .and_then(|t| t.args().first())
        .and_then(Term::as_list)
        .map(|l| l.iter().filter_map(PostId::from_term).collect())
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::law::{evaluate, Event, RulingOp};
    use crate::state::StateSelector;

    fn t(s: &str) -> Term {
        Term::parse(s).unwrap()
    }

    fn state(attrs: &[&str]) -> ControlState {
        ControlState::with_attributes(be_law().schema().clone(), attrs.iter().map(|a| t(a)))
    }

    fn forwards(ops: &[RulingOp]) -> Vec<(Term, Term)> {
        ops.iter()
            .filter_map(|op| match op {
                RulingOp::Forward { msg, dst, .. } => Some((msg.clone(), dst.clone())),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn parses_and_round_trips() {
        let law = be_law();
        let again = parse_law(law.canonical_text()).unwrap();
        assert_eq!(again, *law);
        assert_eq!(again.hash(), law.hash());
        assert!(law.rule("r1").is_some() && law.rule("r15").is_some());
    }

    // Changing be.law changes every controller's identity; update deliberately.
    #[test]
    fn hash_is_pinned() {
        use sha2::{Digest, Sha256};
        let law = be_law();
        let digest = hex::encode(Sha256::digest(law.canonical_text().as_bytes()));
        assert_eq!(law.hash().to_hex(), digest);
        assert_eq!(digest, "061c54e96769ea4237101d0669718c7105281f9eb6ab07d67bb9a6333bb0a887");
    }

    #[test]
    fn rule1_inserts_certified_attributes() {
        let r = evaluate(
            &be_law(),
            &Event::adopted("alice", t("cert(issuer(ca), subj(alice), attr([role(manager)]))")),
            &state(&[]),
        );
        assert_eq!(r.rule.as_deref(), Some("r1"));
        assert!(r.state.contains(&t("role(manager)")));
        assert!(r.ops.iter().all(RulingOp::is_delta));
    }

    #[test]
    fn rule2_requires_matching_login() {
        let s = state(&["loginID(alice)"]);
        let ok = evaluate(&be_law(), &Event::certified("alice", t("cert(issuer(ca), subj(alice), attr([group(t1)]))")), &s);
        assert!(ok.state.contains(&t("group(t1)")));
        let other = evaluate(&be_law(), &Event::certified("alice", t("cert(issuer(ca), subj(bob), attr([group(t1)]))")), &s);
        assert!(!other.fired());
    }

    #[test]
    fn rule3_rejects_controlled_attributes() {
        let s = state(&["loginID(bob)"]);
        let ok = evaluate(&be_law(), &Event::sent("bob", t("addProfile(interest(chess))"), "bob"), &s);
        assert!(ok.state.contains(&t("interest(chess)")));
        let no = evaluate(&be_law(), &Event::sent("bob", t("addProfile(role(manager))"), "bob"), &s);
        assert_eq!(no.state, s);
        assert!(no.ops.is_empty());
    }

    #[test]
    fn rule4_replaces_by_functor() {
        let s = state(&["interest(chess)", "interest(tennis)"]);
        let r = evaluate(&be_law(), &Event::sent("bob", t("updateProfile(interest(go))"), "bob"), &s);
        assert_eq!(r.state.with_functor("interest").cloned().collect::<Vec<_>>(), vec![t("interest(go)")]);
        assert_eq!(r.ops[0], RulingOp::RemoveState(StateSelector::Functor("interest".into())));
    }

    #[test]
    fn rule5_filters_are_a_set() {
        let s = state(&["filter(group(t2))"]);
        let r = evaluate(&be_law(), &Event::sent("bob", t("addFilter(group(t2))"), "bob"), &s);
        assert_eq!(filters(&r.state).len(), 1);
    }

    #[test]
    fn rule6_only_managers_revoke() {
        let m = evaluate(&be_law(), &Event::sent("alice", t("#revoke#"), "bob"), &state(&["role(manager)"]));
        assert_eq!(forwards(&m.ops), vec![(t("#revoke#"), t("bob"))]);
        let n = evaluate(&be_law(), &Event::sent("carol", t("#revoke#"), "bob"), &state(&["role(staff)"]));
        assert_eq!(
            n.ops,
            vec![RulingOp::Deliver {
                src: t("carol"),
                msg: t("notAllow"),
                dst: t("carol")
            }]
        );
    }

    #[test]
    fn rule7_informs_and_quits() {
        let r = evaluate(&be_law(), &Event::arrived("alice", t("#revoke#"), "bob"), &state(&[]));
        assert_eq!(
            r.ops,
            vec![
                RulingOp::Inform {
                    msg: t("certificateBlacklist"),
                    audience: t("allControllers")
                },
                RulingOp::Quit
            ]
        );
    }

    #[test]
    fn rule8_releases_only_crud() {
        let ok = evaluate(&be_law(), &Event::sent("bob", t("db(read(any))"), "bob"), &state(&[]));
        assert!(matches!(&ok.ops[..], [RulingOp::Release { .. }]));
        let no = evaluate(&be_law(), &Event::sent("bob", t("db(drop(all))"), "bob"), &state(&[]));
        assert!(no.ops.is_empty());
    }

    #[test]
    fn rule9_delivers_database_results() {
        let r = evaluate(&be_law(), &Event::submitted("db", t("records(any, [])"), "bob"), &state(&[]));
        assert_eq!(r.rule.as_deref(), Some("r9"));
        assert!(matches!(&r.ops[..], [RulingOp::Deliver { .. }]));
    }

    #[test]
    fn rule10_fans_out_to_the_union_of_held_groups() {
        let s = state(&[
            "group(t1)",
            "group(t2)",
            "subList(t1, b)",
            "subList(t1, c)",
            "subList(t2, c)",
            "subList(t2, d)",
            "subList(t3, e)",
        ]);
        let r = evaluate(&be_law(), &Event::sent("a", t("publish(post(pid(a, 1), #news#, \"x\"))"), "a"), &s);
        let dsts: Vec<Term> = forwards(&r.ops).into_iter().map(|(_, d)| d).collect();
        assert_eq!(dsts, vec![t("b"), t("c"), t("d")]);
        assert_eq!(last_ten_posts(&r.state), vec![PostId::new("a", 1)]);
    }

    #[test]
    fn rule10_suppresses_management_posts_of_non_managers() {
        let s = state(&["group(t1)", "subList(t1, b)"]);
        let r = evaluate(&be_law(), &Event::sent("a", t("publish(post(pid(a, 1), #management#, \"x\"))"), "a"), &s);
        assert!(r.ops.is_empty());
        assert_eq!(r.state, s);
    }

    #[test]
    fn rule10_keeps_ten_most_recent() {
        let mut s = state(&["group(t1)"]);
        for n in 1..=12 {
            let msg = Term::parse(&format!("publish(post(pid(a, {n}), #news#, \"x\"))")).unwrap();
            s = evaluate(&be_law(), &Event::sent("a", msg, "a"), &s).state;
        }
        let expect: Vec<PostId> = (3..=12).rev().map(|n| PostId::new("a", n)).collect();
        assert_eq!(last_ten_posts(&s), expect);
    }

    #[test]
    fn rule10_empty_list_means_state_and_release_only() {
        let r = evaluate(&be_law(), &Event::sent("a", t("publish(post(pid(a, 1), #news#, \"x\"))"), "a"), &state(&["group(t1)"]));
        assert!(forwards(&r.ops).is_empty());
        assert!(r.ops.iter().any(|op| matches!(op, RulingOp::Release { .. })));
    }

    #[test]
    fn rule11_delivers_and_informs() {
        let r = evaluate(&be_law(), &Event::arrived("a", t("post(pid(a, 1), #news#, \"x\")"), "b"), &state(&[]));
        assert_eq!(r.ops.len(), 2);
        assert!(matches!(r.ops[1], RulingOp::Inform { .. }));
    }

    #[test]
    fn rule12_attaches_profile() {
        let s = state(&["group(t1)", "neighbor(x)"]);
        let r = evaluate(&be_law(), &Event::sent("b", t("requestSubscribe"), "a"), &s);
        match &r.ops[..] {
            [RulingOp::Forward { profile: Some(p), .. }] => assert_eq!(p, &vec![t("group(t1)")]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rule13_filter_refuses() {
        let s = state(&["group(t1)", "filter(group(t2))"]);
        let r = evaluate(&be_law(), &Event::arrived("b", t("profiled(requestSubscribe, [group(t1), group(t2)])"), "a"), &s);
        assert_eq!(forwards(&r.ops), vec![(t("subscribeNotAllowed"), t("b"))]);
        assert!(subscriber_lists(&r.state).is_empty());
    }

    #[test]
    fn rule13_accepts_shared_groups_once() {
        let s = state(&["group(t1)", "group(t2)"]);
        let ev = Event::arrived("b", t("profiled(requestSubscribe, [group(t1), group(t2)])"), "a");
        let r = evaluate(&be_law(), &ev, &s);
        assert_eq!(forwards(&r.ops), vec![(t("subscribeAllowed"), t("b"))]);
        let again = evaluate(&be_law(), &ev, &r.state);
        assert_eq!(subscriber_lists(&again.state), subscriber_lists(&r.state));
        assert_eq!(audience(&again.state).len(), 1);
    }

    #[test]
    fn rule15_needs_a_shared_group() {
        let law = be_law();
        let dm = |p: &str| Event::arrived("a", t(&format!("profiled(dm(#chat#, \"hi\"), {p})")), "b");
        assert!(evaluate(&law, &dm("[group(t1)]"), &state(&["group(t1)"])).fired());
        assert!(!evaluate(&law, &dm("[group(t1)]"), &state(&["group(t2)"])).fired());
        assert!(evaluate(&law, &dm("[group(t1), group(t2)]"), &state(&["group(t2)"])).fired());
    }

    #[test]
    fn reserved_replies_cannot_be_sent_by_actors() {
        for m in ["subscribeAllowed", "notAllow", "post(pid(a, 1), #news#, \"x\")", "hit(q, a, [], 0)"] {
            let r = evaluate(&be_law(), &Event::sent("a", t(m), "b"), &state(&["group(t1)", "role(manager)"]));
            assert!(forwards(&r.ops).is_empty(), "{m} was forwarded");
        }
    }

    #[test]
    fn search_start_forwards_to_smallest_neighbours() {
        let s = state(&["neighbor(d)", "neighbor(b)", "neighbor(c)"]);
        let r = evaluate(&be_law(), &Event::sent("a", t("search(q1, any, 2, 2)"), "a"), &s);
        assert_eq!(
            forwards(&r.ops),
            vec![(t("query(q1, any, 1, 2, a, 1)"), t("b")), (t("query(q1, any, 1, 2, a, 1)"), t("c"))]
        );
        let none = evaluate(&be_law(), &Event::sent("a", t("search(q2, any, 0, 2)"), "a"), &s);
        assert!(forwards(&none.ops).is_empty());
    }

    #[test]
    fn query_with_no_budget_left_is_answered_locally_only() {
        let s = state(&["neighbor(c)", "neighbor(d)"]);
        let r = evaluate(&be_law(), &Event::arrived("b", t("query(q1, any, 0, 3, a, 2)"), "c"), &s);
        assert!(forwards(&r.ops).is_empty());
        assert!(matches!(&r.ops[..], [RulingOp::AddState(_), RulingOp::Release { .. }]));
    }

    #[test]
    fn duplicate_query_is_ignored_unless_it_carries_more_budget() {
        let s = state(&["neighbor(c)", "seenQuery(q1, 1)"]);
        let dup = evaluate(&be_law(), &Event::arrived("b", t("query(q1, any, 1, 3, a, 2)"), "x"), &s);
        assert!(dup.ops.is_empty());
        let better = evaluate(&be_law(), &Event::arrived("b", t("query(q1, any, 2, 3, a, 1)"), "x"), &s);
        assert_eq!(forwards(&better.ops), vec![(t("query(q1, any, 1, 3, a, 2)"), t("c"))]);
        assert!(!better.ops.iter().any(|op| matches!(op, RulingOp::Release { .. })));
    }
}
