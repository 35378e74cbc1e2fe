use std::collections::BTreeSet;

use super::{ArithOp, CmpOp, EventKind, Expr, Guard, IterSource, Law, Rule, Stmt};
use crate::state::StateSchema;
use crate::syntax::{Cursor, SyntaxError, Tok};
use crate::term::{parse_term, Term, DEFAULT_MAX_DEPTH};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum LawError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("{line}:{col}: duplicate rule label `{label}`")]
    DuplicateLabel { label: String, line: usize, col: usize },
    #[error("{line}:{col}: rule `{label}` does not match a known event: {message}")]
    BadEvent {
        label: String,
        message: String,
        line: usize,
        col: usize,
    },
    #[error("{line}:{col}: rule `{label}`: variable `{var}` is used before it is bound")]
    Unbound {
        label: String,
        var: String,
        line: usize,
        col: usize,
    },
    #[error("{line}:{col}: rule `{label}`: `_` cannot appear where a value is required")]
    Anonymous { label: String, line: usize, col: usize },
    #[error("{line}:{col}: rule `{label}`: variable `{var}` is already bound")]
    Rebound {
        label: String,
        var: String,
        line: usize,
        col: usize,
    },
}

impl LawError {
    pub fn position(&self) -> (usize, usize) {
        match self {
            LawError::Syntax(e) => (e.line, e.col),
            LawError::DuplicateLabel { line, col, .. }
            | LawError::BadEvent { line, col, .. }
            | LawError::Unbound { line, col, .. }
            | LawError::Anonymous { line, col, .. }
            | LawError::Rebound { line, col, .. } => (*line, *col),
        }
    }
}

/// Parses law source text, rejecting duplicate labels and rules that use a
/// variable before any pattern or guard binds it.
pub fn parse_law(src: &str) -> Result<Law, LawError> {
    let mut cur = Cursor::new(src)?;
    cur.expect_keyword("law")?;
    let name = parse_name(&mut cur)?;
    cur.expect(&Tok::Semi)?;

    let mut schema = StateSchema::default();
    loop {
        let set = match cur.peek() {
            Some(Tok::Ident(w)) if cur.peek_at(1) != Some(&Tok::Colon) => match w.as_str() {
                "controlled" => &mut schema.controlled,
                "single" => &mut schema.single,
                "internal" => &mut schema.internal,
                _ => break,
            },
            _ => break,
        };
        cur.bump();
        loop {
            set.insert(parse_name(&mut cur)?);
            if !cur.eat(&Tok::Comma) {
                break;
            }
        }
        cur.expect(&Tok::Semi)?;
    }

    let mut rules: Vec<Rule> = Vec::new();
    let mut labels = BTreeSet::new();
    while !cur.at_end() {
        let (line, col) = cur.position();
        let rule = parse_rule(&mut cur)?;
        if !labels.insert(rule.label.clone()) {
            return Err(LawError::DuplicateLabel {
                label: rule.label,
                line,
                col,
            });
        }
        check_rule(&rule, line, col)?;
        rules.push(rule);
    }
    Ok(Law::new(name, schema, rules))
}

fn parse_name(cur: &mut Cursor) -> Result<String, SyntaxError> {
    match cur.peek() {
        Some(Tok::Ident(s)) | Some(Tok::QAtom(s)) => {
            let s = s.clone();
            cur.bump();
            Ok(s)
        }
        _ => Err(cur.unexpected("a name")),
    }
}

fn term(cur: &mut Cursor) -> Result<Term, SyntaxError> {
    parse_term(cur, DEFAULT_MAX_DEPTH)
}

fn parse_rule(cur: &mut Cursor) -> Result<Rule, SyntaxError> {
    let label = parse_name(cur)?;
    cur.expect(&Tok::Colon)?;
    match cur.peek() {
        Some(Tok::Var(w)) if w == "UPON" => {
            cur.bump();
        }
        _ => return Err(cur.unexpected("`UPON`")),
    }
    let event = term(cur)?;
    let guards = if cur.eat(&Tok::Neck) {
        parse_guards(cur)?
    } else {
        Vec::new()
    };
    let body = parse_block(cur)?;
    Ok(Rule {
        label,
        event,
        guards,
        body,
    })
}

fn parse_guards(cur: &mut Cursor) -> Result<Vec<Guard>, SyntaxError> {
    let mut gs = vec![parse_guard(cur)?];
    while cur.eat(&Tok::Comma) {
        gs.push(parse_guard(cur)?);
    }
    Ok(gs)
}

fn keyword_call(cur: &Cursor, word: &str) -> bool {
    cur.is_keyword(word) && cur.peek_at(1) == Some(&Tok::LParen)
}

fn parse_guard(cur: &mut Cursor) -> Result<Guard, SyntaxError> {
    if keyword_call(cur, "not") {
        cur.bump();
        cur.bump();
        let inner = parse_guards(cur)?;
        cur.expect(&Tok::RParen)?;
        return Ok(Guard::Not(inner));
    }
    if keyword_call(cur, "functor") {
        cur.bump();
        cur.bump();
        let t = term(cur)?;
        cur.expect(&Tok::Comma)?;
        let f = term(cur)?;
        cur.expect(&Tok::RParen)?;
        return Ok(Guard::Functor(t, f));
    }
    if keyword_call(cur, "controlled") {
        cur.bump();
        cur.bump();
        let f = term(cur)?;
        cur.expect(&Tok::RParen)?;
        return Ok(Guard::Controlled(f));
    }
    let t = term(cur)?;
    if cur.eat(&Tok::At) {
        match cur.peek() {
            Some(Tok::Var(w)) if w == "CS" => {
                cur.bump();
                return Ok(Guard::InState(t));
            }
            _ => return Err(cur.unexpected("`CS`")),
        }
    }
    if cur.eat_keyword("in") {
        return Ok(Guard::In(t, term(cur)?));
    }
    let op = match cur.peek() {
        Some(Tok::EqEq) => CmpOp::Eq,
        Some(Tok::NotEq) => CmpOp::Ne,
        Some(Tok::Lt) => CmpOp::Lt,
        Some(Tok::Le) => CmpOp::Le,
        Some(Tok::Gt) => CmpOp::Gt,
        Some(Tok::Ge) => CmpOp::Ge,
        _ => return Err(cur.unexpected("`@CS`, `in` or a comparison")),
    };
    cur.bump();
    Ok(Guard::Cmp(t, op, term(cur)?))
}

fn parse_block(cur: &mut Cursor) -> Result<Vec<Stmt>, SyntaxError> {
    cur.expect(&Tok::LBrace)?;
    let mut body = Vec::new();
    while !cur.eat(&Tok::RBrace) {
        if cur.at_end() {
            return Err(cur.unexpected("`}`"));
        }
        body.push(parse_stmt(cur)?);
    }
    Ok(body)
}

fn call_args(cur: &mut Cursor, n: usize) -> Result<Vec<Term>, SyntaxError> {
    cur.expect(&Tok::LParen)?;
    let mut out = vec![term(cur)?];
    for _ in 1..n {
        cur.expect(&Tok::Comma)?;
        out.push(term(cur)?);
    }
    cur.expect(&Tok::RParen)?;
    Ok(out)
}

fn parse_var(cur: &mut Cursor) -> Result<String, SyntaxError> {
    match cur.peek() {
        Some(Tok::Var(v)) if v != "_" => {
            let v = v.clone();
            cur.bump();
            Ok(v)
        }
        _ => Err(cur.unexpected("a variable")),
    }
}

fn parse_stmt(cur: &mut Cursor) -> Result<Stmt, SyntaxError> {
    let stmt = if cur.eat(&Tok::Plus) {
        Stmt::Add(term(cur)?)
    } else if cur.eat(&Tok::Minus) {
        Stmt::Remove(term(cur)?)
    } else if cur.eat_keyword("clear") {
        Stmt::Clear(term(cur)?)
    } else if cur.eat_keyword("forward") {
        let mut a = call_args(cur, 3)?.into_iter();
        let (src, msg, dst) = (a.next().unwrap(), a.next().unwrap(), a.next().unwrap());
        let with_profile = if cur.eat_keyword("with") {
            cur.expect_keyword("profile")?;
            true
        } else {
            false
        };
        Stmt::Forward {
            src,
            msg,
            dst,
            with_profile,
        }
    } else if cur.eat_keyword("deliver") {
        let mut a = call_args(cur, 3)?.into_iter();
        Stmt::Deliver {
            src: a.next().unwrap(),
            msg: a.next().unwrap(),
            dst: a.next().unwrap(),
        }
    } else if cur.eat_keyword("release") {
        let mut a = call_args(cur, 3)?.into_iter();
        Stmt::Release {
            src: a.next().unwrap(),
            msg: a.next().unwrap(),
            resource: a.next().unwrap(),
        }
    } else if cur.eat_keyword("inform") {
        let mut a = call_args(cur, 2)?.into_iter();
        Stmt::Inform {
            msg: a.next().unwrap(),
            audience: a.next().unwrap(),
        }
    } else if cur.eat_keyword("quit") {
        Stmt::Quit
    } else if cur.eat_keyword("return") {
        Stmt::Return
    } else if cur.eat_keyword("let") {
        let v = parse_var(cur)?;
        cur.expect(&Tok::Eq)?;
        Stmt::Let(v, parse_expr(cur, true)?)
    } else if cur.eat_keyword("if") {
        let mut branches = vec![(parse_guards(cur)?, parse_block(cur)?)];
        let mut otherwise = None;
        while cur.eat_keyword("else") {
            if cur.eat_keyword("if") {
                branches.push((parse_guards(cur)?, parse_block(cur)?));
            } else {
                otherwise = Some(parse_block(cur)?);
                break;
            }
        }
        return Ok(Stmt::If {
            branches,
            otherwise,
        });
    } else if cur.eat_keyword("forEach") {
        let var = parse_var(cur)?;
        let source = if cur.eat_keyword("in") {
            IterSource::In(term(cur)?)
        } else if cur.eat_keyword("where") {
            IterSource::Where(parse_guards(cur)?)
        } else {
            return Err(cur.unexpected("`in` or `where`"));
        };
        let body = parse_block(cur)?;
        return Ok(Stmt::ForEach { var, source, body });
    } else {
        return Err(cur.unexpected("a statement"));
    };
    cur.expect(&Tok::Semi)?;
    Ok(stmt)
}

/// `collect` is only allowed at the top of a `let`, where its guard list
/// cannot swallow a following argument.
fn parse_expr(cur: &mut Cursor, allow_collect: bool) -> Result<Expr, SyntaxError> {
    if keyword_call(cur, "take") {
        cur.bump();
        cur.bump();
        let n = parse_expr(cur, false)?;
        cur.expect(&Tok::Comma)?;
        let l = parse_expr(cur, false)?;
        cur.expect(&Tok::RParen)?;
        return Ok(Expr::Take(Box::new(n), Box::new(l)));
    }
    if cur.is_keyword("collect") && cur.peek_at(1) != Some(&Tok::LParen) {
        if !allow_collect {
            return Err(cur.error("`collect` must be the whole right-hand side of a `let`"));
        }
        cur.bump();
        let t = term(cur)?;
        cur.expect_keyword("where")?;
        return Ok(Expr::Collect(t, parse_guards(cur)?));
    }
    if cur.is_keyword("profile") && cur.peek_at(1) != Some(&Tok::LParen) {
        cur.bump();
        return Ok(Expr::Profile);
    }
    let first = term(cur)?;
    let mut rest = Vec::new();
    loop {
        let op = if cur.eat(&Tok::Plus) {
            ArithOp::Add
        } else if cur.eat(&Tok::Minus) {
            ArithOp::Sub
        } else {
            break;
        };
        rest.push((op, term(cur)?));
    }
    if rest.is_empty() {
        Ok(Expr::Term(first))
    } else {
        Ok(Expr::Arith(first, rest))
    }
}

enum CheckError {
    Unbound(String),
    Anonymous,
    Rebound(String),
}

type Bound = BTreeSet<String>;

fn check_rule(rule: &Rule, line: usize, col: usize) -> Result<(), LawError> {
    let bad_event = |message: String| LawError::BadEvent {
        label: rule.label.clone(),
        message,
        line,
        col,
    };
    let Some(kind) = rule.event_kind() else {
        return Err(bad_event(format!("`{}`", rule.event)));
    };
    let want = match kind {
        EventKind::Adopted | EventKind::Certified => 2,
        _ => 3,
    };
    if rule.event.arity() != want {
        return Err(bad_event(format!("`{}` takes {want} arguments", kind.name())));
    }

    let mut bound = Bound::new();
    rule.event.collect_vars(&mut bound);
    let result = bind_guards(&rule.guards, &mut bound).and_then(|_| check_block(&rule.body, &bound));
    result.map_err(|e| match e {
        CheckError::Unbound(var) => LawError::Unbound {
            label: rule.label.clone(),
            var,
            line,
            col,
        },
        CheckError::Anonymous => LawError::Anonymous {
            label: rule.label.clone(),
            line,
            col,
        },
        CheckError::Rebound(var) => LawError::Rebound {
            label: rule.label.clone(),
            var,
            line,
            col,
        },
    })
}

fn has_anonymous(t: &Term) -> bool {
    match t {
        Term::Var(v) => v == "_",
        Term::List(items, tail) => items.iter().chain(tail.as_deref()).any(has_anonymous),
        Term::Compound(_, args) => args.iter().any(has_anonymous),
        _ => false,
    }
}

/// `t` must be fully determined by `bound`.
fn need(t: &Term, bound: &Bound) -> Result<(), CheckError> {
    if has_anonymous(t) {
        return Err(CheckError::Anonymous);
    }
    need_named(t, bound)
}

fn need_named(t: &Term, bound: &Bound) -> Result<(), CheckError> {
    let mut vars = Bound::new();
    t.collect_vars(&mut vars);
    match vars.into_iter().find(|v| !bound.contains(v)) {
        Some(v) => Err(CheckError::Unbound(v)),
        None => Ok(()),
    }
}

fn bind_guards(gs: &[Guard], bound: &mut Bound) -> Result<(), CheckError> {
    for g in gs {
        match g {
            Guard::InState(t) => t.collect_vars(bound),
            Guard::In(t, l) => {
                need(l, bound)?;
                t.collect_vars(bound);
            }
            Guard::Not(inner) => bind_guards(inner, &mut bound.clone())?,
            Guard::Cmp(a, _, b) => {
                need(a, bound)?;
                need(b, bound)?;
            }
            Guard::Functor(t, f) => {
                need(t, bound)?;
                f.collect_vars(bound);
            }
            Guard::Controlled(f) => need(f, bound)?,
        }
    }
    Ok(())
}

fn check_expr(e: &Expr, bound: &Bound) -> Result<(), CheckError> {
    match e {
        Expr::Term(t) => need(t, bound),
        Expr::Take(n, l) => {
            check_expr(n, bound)?;
            check_expr(l, bound)
        }
        Expr::Collect(t, gs) => {
            let mut inner = bound.clone();
            bind_guards(gs, &mut inner)?;
            need(t, &inner)
        }
        Expr::Profile => Ok(()),
        Expr::Arith(first, rest) => {
            need(first, bound)?;
            rest.iter().try_for_each(|(_, t)| need(t, bound))
        }
    }
}

fn check_block(body: &[Stmt], outer: &Bound) -> Result<(), CheckError> {
    let mut bound = outer.clone();
    for stmt in body {
        match stmt {
            Stmt::Add(t) | Stmt::Clear(t) => need(t, &bound)?,
            Stmt::Remove(t) => need_named(t, &bound)?,
            Stmt::Forward { src, msg, dst, .. } | Stmt::Deliver { src, msg, dst } => {
                need(src, &bound)?;
                need(msg, &bound)?;
                need(dst, &bound)?;
            }
            Stmt::Release { src, msg, resource } => {
                need(src, &bound)?;
                need(msg, &bound)?;
                need(resource, &bound)?;
            }
            Stmt::Inform { msg, audience } => {
                need(msg, &bound)?;
                need(audience, &bound)?;
            }
            Stmt::Quit | Stmt::Return => {}
            Stmt::Let(v, e) => {
                check_expr(e, &bound)?;
                if !bound.insert(v.clone()) {
                    return Err(CheckError::Rebound(v.clone()));
                }
            }
            Stmt::If {
                branches,
                otherwise,
            } => {
                for (gs, body) in branches {
                    let mut inner = bound.clone();
                    bind_guards(gs, &mut inner)?;
                    check_block(body, &inner)?;
                }
                if let Some(body) = otherwise {
                    check_block(body, &bound)?;
                }
            }
            Stmt::ForEach { var, source, body } => {
                if bound.contains(var) {
                    return Err(CheckError::Rebound(var.clone()));
                }
                match source {
                    IterSource::In(l) => need(l, &bound)?,
                    IterSource::Where(gs) => {
                        let mut inner = bound.clone();
                        bind_guards(gs, &mut inner)?;
                        if !inner.contains(var) {
                            return Err(CheckError::Unbound(var.clone()));
                        }
                    }
                }
                let mut inner = bound.clone();
                inner.insert(var.clone());
                check_block(body, &inner)?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
        law demo;
        controlled role;
        single lastTenPosts;

        # a comment
        r1: UPON adopted(X, cert(issuer(ca), subj(S), attr(As))) {
            +loginID(S);
            forEach A in As { +A; }
        }
        r2: UPON sent(X, M, Y) :- not(blocked(Y)@CS), M != #spam# {
            let N = 1 + 2 - 1;
            if role(manager)@CS { forward(X, M, Y) with profile; } else { deliver(X, no, X); }
        }
    "#;

    #[test]
    fn parses_and_round_trips() {
        let law = parse_law(SMALL).unwrap();
        assert_eq!(law.rules().len(), 2);
        assert!(law.schema().is_controlled("role"));
        let again = parse_law(law.canonical_text()).unwrap();
        assert_eq!(again, law);
        assert_eq!(again.canonical_text(), law.canonical_text());
        assert_eq!(again.hash(), law.hash());
    }

    #[test]
    fn comments_and_whitespace_do_not_change_the_hash() {
        let a = parse_law(SMALL).unwrap();
        let squeezed = SMALL.replace("# a comment", "").replace("\n        ", "\n");
        assert_eq!(parse_law(&squeezed).unwrap().hash(), a.hash());
    }

    #[test]
    fn unbound_variable_is_rejected() {
        let err = parse_law("law x;\nr1: UPON sent(X, M, Y) {\n +seen(Z);\n}\n").unwrap_err();
        assert_eq!(
            err,
            LawError::Unbound {
                label: "r1".into(),
                var: "Z".into(),
                line: 2,
                col: 1
            }
        );
    }

    #[test]
    fn guard_bindings_reach_the_body() {
        assert!(parse_law("law x;\nr1: UPON sent(X, M, Y) :- friend(F)@CS { +seen(F); }").is_ok());
        // bindings under `not` are local
        assert!(parse_law("law x;\nr1: UPON sent(X, M, Y) :- not(friend(F)@CS) { +seen(F); }").is_err());
    }

    #[test]
    fn duplicate_labels_are_rejected() {
        let err = parse_law("law x;\nr1: UPON sent(X,M,Y) {}\nr1: UPON sent(X,M,Y) {}").unwrap_err();
        assert!(matches!(err, LawError::DuplicateLabel { line: 3, .. }));
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let err = parse_law("law x;\nr1: UPON sent(X,M,Y) {\n  +a(X)\n}").unwrap_err();
        assert_eq!(err.position(), (4, 1));
    }

    #[test]
    fn anonymous_variable_cannot_be_added() {
        assert!(matches!(
            parse_law("law x;\nr1: UPON sent(X,M,Y) { +a(_); }"),
            Err(LawError::Anonymous { .. })
        ));
        assert!(parse_law("law x;\nr1: UPON sent(X,M,Y) { -a(_); }").is_ok());
    }

    #[test]
    fn unknown_event_kind_is_rejected() {
        assert!(matches!(
            parse_law("law x;\nr1: UPON received(X,M,Y) {}"),
            Err(LawError::BadEvent { .. })
        ));
    }
}
