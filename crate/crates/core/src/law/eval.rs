use std::collections::BTreeSet;
use std::fmt;

use super::{ArithOp, CmpOp, Expr, Guard, IterSource, Law, Stmt, STEP_BUDGET};
use crate::state::{ControlState, StateSelector};
use crate::term::{match_into, match_pattern, substitute, Bindings, Term, DEFAULT_MAX_DEPTH};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    Adopted,
    Certified,
    Sent,
    Arrived,
    Submitted,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::Adopted => "adopted",
            EventKind::Certified => "certified",
            EventKind::Sent => "sent",
            EventKind::Arrived => "arrived",
            EventKind::Submitted => "submitted",
        }
    }

    pub fn from_name(s: &str) -> Option<EventKind> {
        Some(match s {
            "adopted" => EventKind::Adopted,
            "certified" => EventKind::Certified,
            "sent" => EventKind::Sent,
            "arrived" => EventKind::Arrived,
            "submitted" => EventKind::Submitted,
            _ => return None,
        })
    }
}

/// An interactive event at one agent.
///
/// `adopted` and `certified` are written `kind(Agent, Certificate)`; the
/// other kinds are written `kind(Source, Payload, Target)`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Event {
    pub kind: EventKind,
    pub source: Term,
    pub target: Term,
    pub payload: Term,
}

impl Event {
    pub fn new(kind: EventKind, source: impl Into<Term>, payload: Term, target: impl Into<Term>) -> Event {
        Event {
            kind,
            source: source.into(),
            target: target.into(),
            payload,
        }
    }

    pub fn adopted(agent: impl Into<Term>, cert: Term) -> Event {
        let a = agent.into();
        Event::new(EventKind::Adopted, a.clone(), cert, a)
    }

    pub fn certified(agent: impl Into<Term>, cert: Term) -> Event {
        let a = agent.into();
        Event::new(EventKind::Certified, a.clone(), cert, a)
    }

    pub fn sent(src: impl Into<Term>, msg: Term, dst: impl Into<Term>) -> Event {
        Event::new(EventKind::Sent, src, msg, dst)
    }

    pub fn arrived(src: impl Into<Term>, msg: Term, dst: impl Into<Term>) -> Event {
        Event::new(EventKind::Arrived, src, msg, dst)
    }

    pub fn submitted(resource: impl Into<Term>, result: Term, agent: impl Into<Term>) -> Event {
        Event::new(EventKind::Submitted, resource, result, agent)
    }

    pub fn to_term(&self) -> Term {
        let name = self.kind.name();
        match self.kind {
            EventKind::Adopted | EventKind::Certified => {
                Term::app(name, vec![self.source.clone(), self.payload.clone()])
            }
            _ => Term::app(
                name,
                vec![self.source.clone(), self.payload.clone(), self.target.clone()],
            ),
        }
    }

    pub fn from_term(t: &Term) -> Option<Event> {
        let kind = EventKind::from_name(t.functor()?)?;
        let a = t.args();
        match (kind, a.len()) {
            (EventKind::Adopted | EventKind::Certified, 2) => {
                Some(Event::new(kind, a[0].clone(), a[1].clone(), a[0].clone()))
            }
            (EventKind::Sent | EventKind::Arrived | EventKind::Submitted, 3) => {
                Some(Event::new(kind, a[0].clone(), a[1].clone(), a[2].clone()))
            }
            _ => None,
        }
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_term())
    }
}

/// An operation a ruling mandates.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum RulingOp {
    /// Send `msg` to `dst`'s controller; `profile` is attached when the
    /// rule asked for it.
    Forward {
        src: Term,
        msg: Term,
        dst: Term,
        profile: Option<Vec<Term>>,
    },
    Deliver {
        src: Term,
        msg: Term,
        dst: Term,
    },
    Release {
        src: Term,
        msg: Term,
        resource: Term,
    },
    AddState(Term),
    RemoveState(StateSelector),
    Inform {
        msg: Term,
        audience: Term,
    },
    Quit,
}

impl RulingOp {
    pub fn is_delta(&self) -> bool {
        matches!(self, RulingOp::AddState(_) | RulingOp::RemoveState(_))
    }

    pub fn to_term(&self) -> Term {
        match self {
            RulingOp::Forward {
                src,
                msg,
                dst,
                profile,
            } => {
                let mut args = vec![src.clone(), msg.clone(), dst.clone()];
                if let Some(p) = profile {
                    args.push(Term::app("profile", vec![Term::list(p.clone())]));
                }
                Term::app("forward", args)
            }
            RulingOp::Deliver { src, msg, dst } => {
                Term::app("deliver", vec![src.clone(), msg.clone(), dst.clone()])
            }
            RulingOp::Release { src, msg, resource } => {
                Term::app("release", vec![src.clone(), msg.clone(), resource.clone()])
            }
            RulingOp::AddState(t) => Term::app("add", vec![t.clone()]),
            RulingOp::RemoveState(StateSelector::Term(t)) => Term::app("remove", vec![t.clone()]),
            RulingOp::RemoveState(StateSelector::Functor(f)) => {
                Term::app("clear", vec![Term::atom(f.clone())])
            }
            RulingOp::Inform { msg, audience } => {
                Term::app("inform", vec![msg.clone(), audience.clone()])
            }
            RulingOp::Quit => Term::atom("quit"),
        }
    }

    pub fn from_term(t: &Term) -> Option<RulingOp> {
        let a = t.args();
        Some(match (t.functor()?, a.len()) {
            ("forward", 3) => RulingOp::Forward {
                src: a[0].clone(),
                msg: a[1].clone(),
                dst: a[2].clone(),
                profile: None,
            },
            ("forward", 4) if a[3].is("profile", 1) => RulingOp::Forward {
                src: a[0].clone(),
                msg: a[1].clone(),
                dst: a[2].clone(),
                profile: Some(a[3].args()[0].as_list()?.to_vec()),
            },
            ("deliver", 3) => RulingOp::Deliver {
                src: a[0].clone(),
                msg: a[1].clone(),
                dst: a[2].clone(),
            },
            ("release", 3) => RulingOp::Release {
                src: a[0].clone(),
                msg: a[1].clone(),
                resource: a[2].clone(),
            },
            ("add", 1) => RulingOp::AddState(a[0].clone()),
            ("remove", 1) => RulingOp::RemoveState(StateSelector::Term(a[0].clone())),
            ("clear", 1) => RulingOp::RemoveState(StateSelector::Functor(a[0].as_atom()?.to_string())),
            ("inform", 2) => RulingOp::Inform {
                msg: a[0].clone(),
                audience: a[1].clone(),
            },
            ("quit", 0) => RulingOp::Quit,
            _ => return None,
        })
    }
}

impl fmt::Display for RulingOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_term())
    }
}

/// Why an evaluation fell back to the empty ruling.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EvalDiagnostic {
    BudgetExceeded { rule: Option<String>, budget: usize },
    Runtime { rule: String, message: String },
}

impl fmt::Display for EvalDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalDiagnostic::BudgetExceeded { rule: Some(r), budget } => {
                write!(f, "rule {r} exceeded the step budget of {budget}")
            }
            EvalDiagnostic::BudgetExceeded { rule: None, budget } => {
                write!(f, "rule selection exceeded the step budget of {budget}")
            }
            EvalDiagnostic::Runtime { rule, message } => write!(f, "rule {rule}: {message}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ruling {
    pub state: ControlState,
    pub ops: Vec<RulingOp>,
    /// Label of the rule that produced the ruling.
    pub rule: Option<String>,
    pub diagnostic: Option<EvalDiagnostic>,
}

impl Ruling {
    fn unchanged(state: &ControlState) -> Ruling {
        Ruling {
            state: state.clone(),
            ops: Vec::new(),
            rule: None,
            diagnostic: None,
        }
    }

    pub fn fired(&self) -> bool {
        self.rule.is_some() && self.diagnostic.is_none()
    }

    /// Applies this ruling's state deltas, in order, to `input`.
    pub fn apply_deltas(&self, input: &ControlState) -> ControlState {
        let mut s = input.clone();
        for op in &self.ops {
            apply_delta(&mut s, op);
        }
        s
    }
}

/// Applies an `AddState`/`RemoveState` op; other ops leave the state alone.
pub fn apply_delta(state: &mut ControlState, op: &RulingOp) {
    match op {
        RulingOp::AddState(t) => state.insert(t.clone()),
        RulingOp::RemoveState(sel) => state.remove(sel),
        _ => {}
    }
}

/// Evaluates the law for one event against one control state.
///
/// The first rule whose event pattern matches and whose guards hold
/// produces the ruling. Nothing but the three arguments is consulted.
pub fn evaluate(law: &Law, event: &Event, state: &ControlState) -> Ruling {
    evaluate_with_budget(law, event, state, STEP_BUDGET)
}

pub fn evaluate_with_budget(law: &Law, event: &Event, state: &ControlState, budget: usize) -> Ruling {
    let ev = event.to_term();
    let mut m = Machine {
        law,
        steps: 0,
        budget,
    };
    for rule in law.rules() {
        if m.tick().is_err() {
            return fault(state, None, Fault::Budget, budget);
        }
        let Some(env) = match_pattern(&rule.event, &ev) else {
            continue;
        };
        let env = match m.first(&rule.guards, state, &env) {
            Ok(Some(env)) => env,
            Ok(None) => continue,
            Err(f) => return fault(state, Some(&rule.label), f, budget),
        };
        let mut env = env;
        let mut working = state.clone();
        let mut ops = Vec::new();
        return match m.exec(&rule.body, &mut env, &mut working, &mut ops) {
            Ok(_) => Ruling {
                state: working,
                ops,
                rule: Some(rule.label.clone()),
                diagnostic: None,
            },
            Err(f) => fault(state, Some(&rule.label), f, budget),
        };
    }
    Ruling::unchanged(state)
}

fn fault(state: &ControlState, rule: Option<&String>, f: Fault, budget: usize) -> Ruling {
    let diagnostic = match f {
        Fault::Budget => EvalDiagnostic::BudgetExceeded {
            rule: rule.cloned(),
            budget,
        },
        Fault::Runtime(message) => EvalDiagnostic::Runtime {
            rule: rule.cloned().unwrap_or_default(),
            message,
        },
    };
    Ruling {
        state: state.clone(),
        ops: Vec::new(),
        rule: rule.cloned(),
        diagnostic: Some(diagnostic),
    }
}

enum Fault {
    Budget,
    Runtime(String),
}

type Res<T> = Result<T, Fault>;

enum Flow {
    Continue,
    Return,
}

struct Machine<'a> {
    law: &'a Law,
    steps: usize,
    budget: usize,
}

impl Machine<'_> {
    fn tick(&mut self) -> Res<()> {
        self.steps += 1;
        if self.steps > self.budget {
            Err(Fault::Budget)
        } else {
            Ok(())
        }
    }

    fn ground(&self, t: &Term, env: &Bindings) -> Res<Term> {
        let s = substitute(t, env);
        if !s.is_ground() {
            return Err(Fault::Runtime(format!("unbound variable in `{t}`")));
        }
        if s.depth() > DEFAULT_MAX_DEPTH {
            return Err(Fault::Runtime(format!(
                "term deeper than {DEFAULT_MAX_DEPTH} levels"
            )));
        }
        Ok(s)
    }

    fn first(&mut self, goals: &[Guard], state: &ControlState, env: &Bindings) -> Res<Option<Bindings>> {
        let mut out = None;
        self.solve(goals, state, env, &mut |e| {
            out = Some(e.clone());
            true
        })?;
        Ok(out)
    }

    fn all(&mut self, goals: &[Guard], state: &ControlState, env: &Bindings) -> Res<Vec<Bindings>> {
        let mut out = Vec::new();
        self.solve(goals, state, env, &mut |e| {
            out.push(e.clone());
            false
        })?;
        Ok(out)
    }

    /// Backtracking search over a guard conjunction. `k` sees each solution
    /// and returns true to stop the search.
    fn solve(
        &mut self,
        goals: &[Guard],
        state: &ControlState,
        env: &Bindings,
        k: &mut dyn FnMut(&Bindings) -> bool,
    ) -> Res<bool> {
        let Some((goal, rest)) = goals.split_first() else {
            return Ok(k(env));
        };
        self.tick()?;
        match goal {
            Guard::InState(p) => {
                let p = substitute(p, env);
                for attr in state.matching(&p) {
                    self.tick()?;
                    let mut e = env.clone();
                    if match_into(&p, attr, &mut e) && self.solve(rest, state, &e, k)? {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
            Guard::In(p, list) => {
                let l = self.ground(list, env)?;
                let Some(items) = l.as_list() else {
                    return Err(Fault::Runtime(format!("`in` expects a list, got `{l}`")));
                };
                for item in items {
                    self.tick()?;
                    let mut e = env.clone();
                    if match_into(p, item, &mut e) && self.solve(rest, state, &e, k)? {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
            Guard::Not(inner) => {
                if self.solve(inner, state, env, &mut |_| true)? {
                    Ok(false)
                } else {
                    self.solve(rest, state, env, k)
                }
            }
            Guard::Cmp(a, op, b) => {
                let a = self.ground(a, env)?;
                let b = self.ground(b, env)?;
                let holds = match op {
                    CmpOp::Eq => a == b,
                    CmpOp::Ne => a != b,
                    _ => match (a.as_int(), b.as_int()) {
                        (Some(x), Some(y)) => match op {
                            CmpOp::Lt => x < y,
                            CmpOp::Le => x <= y,
                            CmpOp::Gt => x > y,
                            CmpOp::Ge => x >= y,
                            CmpOp::Eq | CmpOp::Ne => unreachable!(),
                        },
                        _ => false,
                    },
                };
                if holds {
                    self.solve(rest, state, env, k)
                } else {
                    Ok(false)
                }
            }
            Guard::Functor(t, f) => {
                let t = self.ground(t, env)?;
                let Some(name) = t.functor() else {
                    return Ok(false);
                };
                let mut e = env.clone();
                if match_into(f, &Term::atom(name), &mut e) {
                    self.solve(rest, state, &e, k)
                } else {
                    Ok(false)
                }
            }
            Guard::Controlled(f) => {
                let f = self.ground(f, env)?;
                let controlled = f
                    .as_atom()
                    .is_some_and(|name| self.law.schema().is_controlled(name));
                if controlled {
                    self.solve(rest, state, env, k)
                } else {
                    Ok(false)
                }
            }
        }
    }

    fn eval_expr(&mut self, e: &Expr, env: &Bindings, st: &ControlState) -> Res<Term> {
        self.tick()?;
        match e {
            Expr::Term(t) => self.ground(t, env),
            Expr::Profile => Ok(Term::list(st.profile())),
            Expr::Take(n, l) => {
                let n = self.eval_expr(n, env, st)?;
                let l = self.eval_expr(l, env, st)?;
                match (n.as_int(), l.as_list()) {
                    (Some(n), Some(items)) if n >= 0 => {
                        Ok(Term::list(items.iter().take(n as usize).cloned().collect()))
                    }
                    _ => Err(Fault::Runtime(format!("take({n}, {l}) is ill-typed"))),
                }
            }
            Expr::Collect(template, goals) => {
                let sols = self.all(goals, st, env)?;
                let mut set = BTreeSet::new();
                for s in &sols {
                    set.insert(self.ground(template, s)?);
                }
                Ok(Term::list(set.into_iter().collect()))
            }
            Expr::Arith(first, rest) => {
                let int = |m: &Self, t: &Term| -> Res<i64> {
                    let v = m.ground(t, env)?;
                    v.as_int()
                        .ok_or_else(|| Fault::Runtime(format!("`{v}` is not an integer")))
                };
                let mut acc = int(self, first)?;
                for (op, t) in rest {
                    let v = int(self, t)?;
                    acc = match op {
                        ArithOp::Add => acc.checked_add(v),
                        ArithOp::Sub => acc.checked_sub(v),
                    }
                    .ok_or_else(|| Fault::Runtime("integer overflow".into()))?;
                }
                Ok(Term::Int(acc))
            }
        }
    }

    fn exec(
        &mut self,
        stmts: &[Stmt],
        env: &mut Bindings,
        st: &mut ControlState,
        ops: &mut Vec<RulingOp>,
    ) -> Res<Flow> {
        for stmt in stmts {
            self.tick()?;
            match stmt {
                Stmt::Add(t) => {
                    let t = self.ground(t, env)?;
                    st.insert(t.clone());
                    ops.push(RulingOp::AddState(t));
                }
                Stmt::Remove(p) => {
                    let p = substitute(p, env);
                    if p.is_ground() {
                        let sel = StateSelector::Term(p);
                        st.remove(&sel);
                        ops.push(RulingOp::RemoveState(sel));
                    } else {
                        let hits: Vec<Term> = st.matching(&p).cloned().collect();
                        for h in hits {
                            let sel = StateSelector::Term(h);
                            st.remove(&sel);
                            ops.push(RulingOp::RemoveState(sel));
                        }
                    }
                }
                Stmt::Clear(f) => {
                    let f = self.ground(f, env)?;
                    let Some(name) = f.as_atom() else {
                        return Err(Fault::Runtime(format!("clear expects a functor, got `{f}`")));
                    };
                    let sel = StateSelector::Functor(name.to_string());
                    st.remove(&sel);
                    ops.push(RulingOp::RemoveState(sel));
                }
                Stmt::Forward {
                    src,
                    msg,
                    dst,
                    with_profile,
                } => ops.push(RulingOp::Forward {
                    src: self.ground(src, env)?,
                    msg: self.ground(msg, env)?,
                    dst: self.ground(dst, env)?,
                    profile: with_profile.then(|| st.profile()),
                }),
                Stmt::Deliver { src, msg, dst } => ops.push(RulingOp::Deliver {
                    src: self.ground(src, env)?,
                    msg: self.ground(msg, env)?,
                    dst: self.ground(dst, env)?,
                }),
                Stmt::Release { src, msg, resource } => ops.push(RulingOp::Release {
                    src: self.ground(src, env)?,
                    msg: self.ground(msg, env)?,
                    resource: self.ground(resource, env)?,
                }),
                Stmt::Inform { msg, audience } => ops.push(RulingOp::Inform {
                    msg: self.ground(msg, env)?,
                    audience: self.ground(audience, env)?,
                }),
                Stmt::Quit => ops.push(RulingOp::Quit),
                Stmt::Return => return Ok(Flow::Return),
                Stmt::Let(v, e) => {
                    let val = self.eval_expr(e, env, st)?;
                    env.insert(v.clone(), val);
                }
                Stmt::If {
                    branches,
                    otherwise,
                } => {
                    let mut taken = false;
                    for (guards, body) in branches {
                        if let Some(mut e) = self.first(guards, st, env)? {
                            taken = true;
                            if let Flow::Return = self.exec(body, &mut e, st, ops)? {
                                return Ok(Flow::Return);
                            }
                            break;
                        }
                    }
                    if !taken {
                        if let Some(body) = otherwise {
                            let mut e = env.clone();
                            if let Flow::Return = self.exec(body, &mut e, st, ops)? {
                                return Ok(Flow::Return);
                            }
                        }
                    }
                }
                Stmt::ForEach { var, source, body } => {
                    let items: Vec<Term> = match source {
                        IterSource::In(l) => {
                            let l = self.ground(l, env)?;
                            match l.as_list() {
                                Some(items) => items.to_vec(),
                                None => {
                                    return Err(Fault::Runtime(format!(
                                        "forEach expects a list, got `{l}`"
                                    )))
                                }
                            }
                        }
                        IterSource::Where(goals) => {
                            let mut set = BTreeSet::new();
                            for sol in self.all(goals, st, env)? {
                                if let Some(v) = sol.get(var) {
                                    set.insert(v.clone());
                                }
                            }
                            set.into_iter().collect()
                        }
                    };
                    for item in items {
                        let mut e = env.clone();
                        e.insert(var.clone(), item);
                        if let Flow::Return = self.exec(body, &mut e, st, ops)? {
                            return Ok(Flow::Return);
                        }
                    }
                }
            }
        }
        Ok(Flow::Continue)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::law::parse_law;

    fn t(s: &str) -> Term {
        Term::parse(s).unwrap()
    }

    fn law(src: &str) -> Law {
        parse_law(src).unwrap()
    }

    #[test]
    fn adopted_certificate_attribute_is_inserted() {
        let l = law("law x;\nr1: UPON adopted(X, cert(issuer(ca), subj(X), attr(A))) { +A; }");
        let ev = Event::adopted("alice", t("cert(issuer(ca), subj(alice), attr(role(manager)))"));
        let r = evaluate(&l, &ev, &l.fresh_state());
        assert_eq!(r.state.attributes().cloned().collect::<Vec<_>>(), vec![t("role(manager)")]);
        assert_eq!(r.ops, vec![RulingOp::AddState(t("role(manager)"))]);
        assert_eq!(r.rule.as_deref(), Some("r1"));
    }

    #[test]
    fn empty_law_rules_nothing() {
        let l = law("law nothing;");
        let s = ControlState::with_attributes(l.schema().clone(), [t("a(1)")]);
        let r = evaluate(&l, &Event::sent("a", t("hi"), "b"), &s);
        assert_eq!(r.state, s);
        assert!(r.ops.is_empty());
        assert!(!r.fired());
    }

    #[test]
    fn first_matching_rule_wins() {
        let l = law(
            "law x;\n\
             a: UPON sent(X, M, Y) :- blocked@CS { deliver(X, no, X); }\n\
             b: UPON sent(X, M, Y) { forward(X, M, Y); }\n\
             c: UPON sent(X, M, Y) { quit; }",
        );
        let r = evaluate(&l, &Event::sent("a", t("m"), "b"), &l.fresh_state());
        assert_eq!(r.rule.as_deref(), Some("b"));
        let blocked = ControlState::with_attributes(l.schema().clone(), [t("blocked")]);
        let r = evaluate(&l, &Event::sent("a", t("m"), "b"), &blocked);
        assert_eq!(r.rule.as_deref(), Some("a"));
    }

    #[test]
    fn guards_backtrack_across_attributes() {
        let l = law(
            "law x;\nr: UPON arrived(X, p(Pr), Y) :- group(G)@CS, group(G) in Pr { deliver(X, ok, Y); }",
        );
        let s = ControlState::with_attributes(l.schema().clone(), [t("group(t1)"), t("group(t2)")]);
        let hit = evaluate(&l, &Event::arrived("a", t("p([group(t2)])"), "b"), &s);
        assert!(hit.fired());
        let miss = evaluate(&l, &Event::arrived("a", t("p([group(t3)])"), "b"), &s);
        assert!(!miss.fired());
    }

    #[test]
    fn add_then_remove_leaves_term_absent_and_deltas_replay() {
        let l = law("law x;\nr: UPON sent(X, M, Y) { +seen(M); +tmp(M); -tmp(M); clear old; }");
        let s = ControlState::with_attributes(l.schema().clone(), [t("old(1)"), t("old(2)")]);
        let r = evaluate(&l, &Event::sent("a", t("m"), "b"), &s);
        assert!(!r.state.contains(&t("tmp(m)")));
        assert!(r.state.contains(&t("seen(m)")));
        assert_eq!(r.state.with_functor("old").count(), 0);
        assert_eq!(r.apply_deltas(&s), r.state);
    }

    #[test]
    fn pattern_removal_expands_to_concrete_terms() {
        let l = law("law x;\nr: UPON sent(X, M, Y) { -sub(_, Y); }");
        let s = ControlState::with_attributes(
            l.schema().clone(),
            [t("sub(t1, b)"), t("sub(t2, b)"), t("sub(t1, c)")],
        );
        let r = evaluate(&l, &Event::sent("a", t("m"), "b"), &s);
        assert_eq!(r.ops.len(), 2);
        assert_eq!(r.state.len(), 1);
    }

    #[test]
    fn runaway_iteration_hits_the_budget() {
        let l = law(
            "law x;\nr: UPON sent(X, M, Y) :- n(A)@CS, n(B)@CS, n(C)@CS, n(D)@CS, A == nope { +x; }",
        );
        let s = ControlState::with_attributes(l.schema().clone(), (0..20).map(|i| t(&format!("n({i})"))));
        let r = evaluate(&l, &Event::sent("a", t("m"), "b"), &s);
        assert!(matches!(r.diagnostic, Some(EvalDiagnostic::BudgetExceeded { .. })));
        assert_eq!(r.state, s);
        assert!(r.ops.is_empty());
    }

    #[test]
    fn runtime_errors_default_to_the_empty_ruling() {
        let l = law("law x;\nr: UPON sent(X, M, Y) { +before; forEach A in M { +A; } }");
        let r = evaluate(&l, &Event::sent("a", t("notalist"), "b"), &l.fresh_state());
        assert!(matches!(r.diagnostic, Some(EvalDiagnostic::Runtime { .. })));
        assert!(r.state.is_empty());
        assert!(r.ops.is_empty());
    }

    #[test]
    fn collect_take_and_arithmetic() {
        let l = law(
            "law x;\nr: UPON sent(X, go(T), Y) {\n\
               let Ns = collect N where nb(N)@CS, N != Y;\n\
               let Two = take(2, Ns);\n\
               let Next = T - 1;\n\
               forEach N in Two { forward(X, q(Next), N); }\n\
             }",
        );
        let s = ControlState::with_attributes(
            l.schema().clone(),
            ["nb(d)", "nb(b)", "nb(c)", "nb(a)"].map(t),
        );
        let r = evaluate(&l, &Event::sent("x", t("go(3)"), "b"), &s);
        let dsts: Vec<Term> = r
            .ops
            .iter()
            .map(|op| match op {
                RulingOp::Forward { dst, msg, .. } => {
                    assert_eq!(msg, &t("q(2)"));
                    dst.clone()
                }
                other => panic!("unexpected {other}"),
            })
            .collect();
        assert_eq!(dsts, vec![t("a"), t("c")]);
    }

    #[test]
    fn forward_with_profile_attaches_the_non_internal_state() {
        let l = law("law x;\ninternal secret;\nr: UPON sent(X, M, Y) { forward(X, M, Y) with profile; }");
        let s = ControlState::with_attributes(l.schema().clone(), [t("group(t1)"), t("secret(1)")]);
        let r = evaluate(&l, &Event::sent("a", t("m"), "b"), &s);
        assert_eq!(
            r.ops,
            vec![RulingOp::Forward {
                src: t("a"),
                msg: t("m"),
                dst: t("b"),
                profile: Some(vec![t("group(t1)")]),
            }]
        );
    }

    #[test]
    fn ops_and_events_round_trip_through_terms() {
        let ops = [
            RulingOp::Forward {
                src: t("a"),
                msg: t("m"),
                dst: t("b"),
                profile: Some(vec![t("group(t1)")]),
            },
            RulingOp::Deliver {
                src: t("a"),
                msg: t("m"),
                dst: t("b"),
            },
            RulingOp::Release {
                src: t("a"),
                msg: t("read(any)"),
                resource: t("db"),
            },
            RulingOp::AddState(t("x(1)")),
            RulingOp::RemoveState(StateSelector::Term(t("x(1)"))),
            RulingOp::RemoveState(StateSelector::Functor("x".into())),
            RulingOp::Inform {
                msg: t("certificateBlacklist"),
                audience: t("allControllers"),
            },
            RulingOp::Quit,
        ];
        for op in ops {
            assert_eq!(RulingOp::from_term(&op.to_term()), Some(op));
        }
        let ev = Event::submitted("db", t("created(p)"), "alice");
        assert_eq!(Event::from_term(&ev.to_term()), Some(ev));
    }
}
