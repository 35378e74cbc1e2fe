//! The control state of one agent: the attribute set the law can see.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use crate::term::{match_pattern, Term};

/// Attribute classes a law declares for the states it governs.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StateSchema {
    /// Functors members cannot set through profile edits.
    pub controlled: BTreeSet<String>,
    /// Functors holding at most one attribute at a time.
    pub single: BTreeSet<String>,
    /// Bookkeeping functors left out of the published profile.
    pub internal: BTreeSet<String>,
}

impl StateSchema {
    pub fn is_controlled(&self, functor: &str) -> bool {
        self.controlled.contains(functor)
    }

    pub fn is_single(&self, functor: &str) -> bool {
        self.single.contains(functor)
    }

    pub fn is_internal(&self, functor: &str) -> bool {
        self.internal.contains(functor)
    }
}

/// Selects what a `RemoveState` op removes.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum StateSelector {
    Term(Term),
    Functor(String),
}

#[derive(Clone, Debug, Default)]
pub struct ControlState {
    attributes: BTreeSet<Term>,
    controlled_marks: BTreeSet<String>,
    schema: Arc<StateSchema>,
}

impl PartialEq for ControlState {
    fn eq(&self, other: &Self) -> bool {
        self.attributes == other.attributes && self.controlled_marks == other.controlled_marks
    }
}

impl Eq for ControlState {}

impl ControlState {
    pub fn new(schema: Arc<StateSchema>) -> Self {
        ControlState {
            attributes: BTreeSet::new(),
            controlled_marks: BTreeSet::new(),
            schema,
        }
    }

    pub fn with_attributes(schema: Arc<StateSchema>, attrs: impl IntoIterator<Item = Term>) -> Self {
        let mut s = ControlState::new(schema);
        for a in attrs {
            s.insert(a);
        }
        s
    }

    pub fn schema(&self) -> &Arc<StateSchema> {
        &self.schema
    }

    pub fn attributes(&self) -> impl Iterator<Item = &Term> {
        self.attributes.iter()
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn contains(&self, t: &Term) -> bool {
        self.attributes.contains(t)
    }

    /// Functors of present attributes that the schema declares controlled.
    pub fn controlled_marks(&self) -> &BTreeSet<String> {
        &self.controlled_marks
    }

    /// Attributes whose functor is `functor`, in canonical order.
    pub fn with_functor<'a>(&'a self, functor: &'a str) -> impl Iterator<Item = &'a Term> + 'a {
        self.attributes
            .iter()
            .filter(move |t| t.functor() == Some(functor))
    }

    /// Attributes matching `pattern` (variables act as wildcards).
    pub fn matching<'a>(&'a self, pattern: &'a Term) -> impl Iterator<Item = &'a Term> + 'a {
        let functor = pattern.functor();
        self.attributes
            .iter()
            .filter(move |t| functor.is_none() || t.functor() == functor)
            .filter(move |t| match_pattern(pattern, t).is_some())
    }

    /// The published profile: every attribute that is not internal bookkeeping.
    pub fn profile(&self) -> Vec<Term> {
        self.attributes
            .iter()
            .filter(|t| !t.functor().is_some_and(|f| self.schema.is_internal(f)))
            .cloned()
            .collect()
    }

    pub fn insert(&mut self, t: Term) {
        if let Some(f) = t.functor() {
            if self.schema.is_single(f) {
                let f = f.to_string();
                self.attributes.retain(|a| a.functor() != Some(f.as_str()));
            }
            if self.schema.is_controlled(f) {
                self.controlled_marks.insert(f.to_string());
            }
        }
        self.attributes.insert(t);
    }

    pub fn remove(&mut self, sel: &StateSelector) {
        match sel {
            StateSelector::Term(t) => {
                self.attributes.remove(t);
                if let Some(f) = t.functor() {
                    self.unmark_if_absent(f.to_string());
                }
            }
            StateSelector::Functor(f) => {
                self.attributes.retain(|a| a.functor() != Some(f.as_str()));
                self.controlled_marks.remove(f);
            }
        }
    }

    fn unmark_if_absent(&mut self, functor: String) {
        if !self.attributes.iter().any(|a| a.functor() == Some(functor.as_str())) {
            self.controlled_marks.remove(&functor);
        }
    }
}

impl fmt::Display for ControlState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", Term::list(self.attributes.iter().cloned().collect()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Arc<StateSchema> {
        Arc::new(StateSchema {
            controlled: ["role", "lastTenPosts"].iter().map(|s| s.to_string()).collect(),
            single: ["lastTenPosts"].iter().map(|s| s.to_string()).collect(),
            internal: ["subList"].iter().map(|s| s.to_string()).collect(),
        })
    }

    fn t(s: &str) -> Term {
        Term::parse(s).unwrap()
    }

    #[test]
    fn single_valued_attribute_replaces() {
        let mut s = ControlState::new(schema());
        s.insert(t("lastTenPosts([p1])"));
        s.insert(t("lastTenPosts([p2, p1])"));
        assert_eq!(s.with_functor("lastTenPosts").count(), 1);
        assert!(s.contains(&t("lastTenPosts([p2, p1])")));
    }

    #[test]
    fn controlled_marks_follow_presence() {
        let mut s = ControlState::new(schema());
        s.insert(t("role(manager)"));
        s.insert(t("interest(chess)"));
        assert!(s.controlled_marks().contains("role"));
        assert!(!s.controlled_marks().contains("interest"));
        s.remove(&StateSelector::Term(t("role(manager)")));
        assert!(s.controlled_marks().is_empty());
    }

    #[test]
    fn profile_hides_internal_attributes() {
        let s = ControlState::with_attributes(schema(), [t("subList(t1, bob)"), t("group(t1)")]);
        assert_eq!(s.profile(), vec![t("group(t1)")]);
    }
}
