//! First-order terms: the single data representation used for attributes,
//! messages, events, certificates, envelopes and trace records.

use std::collections::BTreeMap;
use std::fmt;

use crate::syntax::{is_ident_char, Cursor, SyntaxError, Tok};

/// Default nesting limit for terms read from laws and envelopes.
pub const DEFAULT_MAX_DEPTH: usize = 16;

/// A term. Variables only appear in patterns; values are ground.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Int(i64),
    Str(String),
    Atom(String),
    /// `#name#` type tag.
    Tag(String),
    Var(String),
    /// `[a, b | Tail]`; the tail is only ever present in patterns.
    List(Vec<Term>, Option<Box<Term>>),
    Compound(String, Vec<Term>),
}

pub type Bindings = BTreeMap<String, Term>;

impl Term {
    pub fn atom(name: impl Into<String>) -> Term {
        Term::Atom(name.into())
    }

    pub fn str(s: impl Into<String>) -> Term {
        Term::Str(s.into())
    }

    pub fn tag(s: impl Into<String>) -> Term {
        Term::Tag(s.into())
    }

    pub fn var(s: impl Into<String>) -> Term {
        Term::Var(s.into())
    }

    pub fn list(items: Vec<Term>) -> Term {
        Term::List(items, None)
    }

    /// Builds `functor(args...)`, or a bare atom when `args` is empty.
    pub fn app(functor: impl Into<String>, args: Vec<Term>) -> Term {
        let f = functor.into();
        if args.is_empty() {
            Term::Atom(f)
        } else {
            Term::Compound(f, args)
        }
    }

    pub fn functor(&self) -> Option<&str> {
        match self {
            Term::Atom(a) => Some(a),
            Term::Compound(f, _) => Some(f),
            _ => None,
        }
    }

    pub fn args(&self) -> &[Term] {
        match self {
            Term::Compound(_, args) => args,
            _ => &[],
        }
    }

    pub fn arity(&self) -> usize {
        self.args().len()
    }

    pub fn as_atom(&self) -> Option<&str> {
        match self {
            Term::Atom(a) => Some(a),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Term::Int(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Term::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[Term]> {
        match self {
            Term::List(items, None) => Some(items),
            _ => None,
        }
    }

    /// True when `self` is `functor(..)` with the given name and arity.
    pub fn is(&self, functor: &str, arity: usize) -> bool {
        self.functor() == Some(functor) && self.arity() == arity
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Term::Var(_) => false,
            Term::List(items, tail) => {
                tail.is_none() && items.iter().all(Term::is_ground)
            }
            Term::Compound(_, args) => args.iter().all(Term::is_ground),
            _ => true,
        }
    }

    /// Nesting depth: atomic terms have depth 1.
    pub fn depth(&self) -> usize {
        match self {
            Term::List(items, tail) => {
                1 + items
                    .iter()
                    .chain(tail.as_deref())
                    .map(Term::depth)
                    .max()
                    .unwrap_or(0)
            }
            Term::Compound(_, args) => 1 + args.iter().map(Term::depth).max().unwrap_or(0),
            _ => 1,
        }
    }

    /// Adds every named variable in the term to `out`; `_` is skipped.
    pub fn collect_vars(&self, out: &mut std::collections::BTreeSet<String>) {
        match self {
            Term::Var(v) if v != "_" => {
                out.insert(v.clone());
            }
            Term::List(items, tail) => {
                for t in items.iter().chain(tail.as_deref()) {
                    t.collect_vars(out);
                }
            }
            Term::Compound(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
            _ => {}
        }
    }

    pub fn parse(src: &str) -> Result<Term, SyntaxError> {
        Term::parse_with_depth(src, DEFAULT_MAX_DEPTH)
    }

    pub fn parse_with_depth(src: &str, max_depth: usize) -> Result<Term, SyntaxError> {
        let mut cur = Cursor::new(src)?;
        let t = parse_term(&mut cur, max_depth)?;
        if !cur.at_end() {
            return Err(cur.unexpected("end of term"));
        }
        Ok(t)
    }
}

impl From<&str> for Term {
    fn from(s: &str) -> Term {
        Term::atom(s)
    }
}

/// One-way matching of `pattern` against `value`, extending `env`.
///
/// Variables already bound in `env` must equal the corresponding subterm.
/// `_` matches anything without binding. On failure `env` may hold partial
/// bindings; callers match against a scratch copy.
pub fn match_into(pattern: &Term, value: &Term, env: &mut Bindings) -> bool {
    match pattern {
        Term::Var(v) if v == "_" => true,
        Term::Var(v) => match env.get(v) {
            Some(bound) => bound == value,
            None => {
                env.insert(v.clone(), value.clone());
                true
            }
        },
        Term::Compound(f, pargs) => match value {
            Term::Compound(g, vargs) if f == g && pargs.len() == vargs.len() => pargs
                .iter()
                .zip(vargs)
                .all(|(p, v)| match_into(p, v, env)),
            _ => false,
        },
        Term::List(pitems, ptail) => {
            let Term::List(vitems, None) = value else {
                return false;
            };
            match ptail {
                None => {
                    pitems.len() == vitems.len()
                        && pitems.iter().zip(vitems).all(|(p, v)| match_into(p, v, env))
                }
                Some(tail) => {
                    if vitems.len() < pitems.len() {
                        return false;
                    }
                    let (head, rest) = vitems.split_at(pitems.len());
                    pitems.iter().zip(head).all(|(p, v)| match_into(p, v, env))
                        && match_into(tail, &Term::list(rest.to_vec()), env)
                }
            }
        }
        other => other == value,
    }
}

/// Returns the bindings under which `pattern` matches `value`, if any.
pub fn match_pattern(pattern: &Term, value: &Term) -> Option<Bindings> {
    let mut env = Bindings::new();
    match_into(pattern, value, &mut env).then_some(env)
}

/// Replaces bound variables. Unbound variables are left in place; callers
/// that need a ground result check [`Term::is_ground`].
pub fn substitute(term: &Term, env: &Bindings) -> Term {
    match term {
        Term::Var(v) => env.get(v).cloned().unwrap_or_else(|| term.clone()),
        Term::Compound(f, args) => {
            Term::Compound(f.clone(), args.iter().map(|a| substitute(a, env)).collect())
        }
        Term::List(items, tail) => {
            let mut out: Vec<Term> = items.iter().map(|a| substitute(a, env)).collect();
            match tail.as_deref().map(|t| substitute(t, env)) {
                None => Term::List(out, None),
                Some(Term::List(rest, rest_tail)) => {
                    out.extend(rest);
                    Term::List(out, rest_tail)
                }
                Some(other) => Term::List(out, Some(Box::new(other))),
            }
        }
        _ => term.clone(),
    }
}

pub(crate) fn is_plain_atom(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase()) && chars.all(is_ident_char)
}

fn write_quoted(f: &mut fmt::Formatter<'_>, s: &str, quote: char) -> fmt::Result {
    write!(f, "{quote}")?;
    for c in s.chars() {
        match c {
            '\\' => write!(f, "\\\\")?,
            '\n' => write!(f, "\\n")?,
            '\t' => write!(f, "\\t")?,
            '\r' => write!(f, "\\r")?,
            c if c == quote => write!(f, "\\{c}")?,
            c => write!(f, "{c}")?,
        }
    }
    write!(f, "{quote}")
}

pub(crate) fn write_atom(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    if is_plain_atom(s) {
        write!(f, "{s}")
    } else {
        write_quoted(f, s, '\'')
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Int(n) => write!(f, "{n}"),
            Term::Str(s) => write_quoted(f, s, '"'),
            Term::Atom(a) => write_atom(f, a),
            Term::Tag(t) => write!(f, "#{t}#"),
            Term::Var(v) => write!(f, "{v}"),
            Term::List(items, tail) => {
                write!(f, "[")?;
                for (i, t) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{t}")?;
                }
                if let Some(t) = tail {
                    write!(f, " | {t}")?;
                }
                write!(f, "]")
            }
            Term::Compound(func, args) => {
                write_atom(f, func)?;
                write!(f, "(")?;
                for (i, t) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{t}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// Reads one term at the cursor.
pub fn parse_term(cur: &mut Cursor, max_depth: usize) -> Result<Term, SyntaxError> {
    parse_term_at(cur, max_depth, 1)
}

fn parse_term_at(cur: &mut Cursor, max_depth: usize, depth: usize) -> Result<Term, SyntaxError> {
    if depth > max_depth {
        return Err(cur.error(format!("term nesting exceeds depth limit {max_depth}")));
    }
    let Some(tok) = cur.bump() else {
        return Err(cur.unexpected("a term"));
    };
    match tok.tok {
        Tok::Int(n) => Ok(Term::Int(n)),
        Tok::Minus => match cur.bump() {
            Some(t) => match t.tok {
                Tok::Int(n) => Ok(Term::Int(-n)),
                _ => Err(SyntaxError::new(t.line, t.col, "expected integer after `-`")),
            },
            None => Err(cur.unexpected("an integer")),
        },
        Tok::Str(s) => Ok(Term::Str(s)),
        Tok::Tag(t) => Ok(Term::Tag(t)),
        Tok::Var(v) => Ok(Term::Var(v)),
        Tok::Ident(name) | Tok::QAtom(name) => {
            if cur.eat(&Tok::LParen) {
                let mut args = vec![parse_term_at(cur, max_depth, depth + 1)?];
                while cur.eat(&Tok::Comma) {
                    args.push(parse_term_at(cur, max_depth, depth + 1)?);
                }
                cur.expect(&Tok::RParen)?;
                Ok(Term::Compound(name, args))
            } else {
                Ok(Term::Atom(name))
            }
        }
        Tok::LBrack => {
            let mut items = Vec::new();
            let mut tail = None;
            if !cur.eat(&Tok::RBrack) {
                items.push(parse_term_at(cur, max_depth, depth + 1)?);
                while cur.eat(&Tok::Comma) {
                    items.push(parse_term_at(cur, max_depth, depth + 1)?);
                }
                if cur.eat(&Tok::Bar) {
                    tail = Some(Box::new(parse_term_at(cur, max_depth, depth + 1)?));
                }
                cur.expect(&Tok::RBrack)?;
            }
            Ok(Term::List(items, tail))
        }
        other => Err(SyntaxError::new(
            tok.line,
            tok.col,
            format!("expected a term, found {other}"),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Term {
        Term::parse(s).unwrap()
    }

    #[test]
    fn certificate_pattern_binds_subject_and_attribute() {
        let b = match_pattern(
            &t("cert(issuer(ca), subj(X), attr(A))"),
            &t("cert(issuer(ca), subj(alice), attr(role(manager)))"),
        )
        .unwrap();
        assert_eq!(b.get("X"), Some(&t("alice")));
        assert_eq!(b.get("A"), Some(&t("role(manager)")));
        assert_eq!(b.len(), 2);
    }

    #[test]
    fn repeated_variable_must_agree() {
        assert!(match_pattern(&t("f(X, X)"), &t("f(a, b)")).is_none());
        assert!(match_pattern(&t("f(X, X)"), &t("f(a, a)")).is_some());
    }

    #[test]
    fn list_tail_patterns() {
        let b = match_pattern(&t("[H | T]"), &t("[1, 2, 3]")).unwrap();
        assert_eq!(b["H"], Term::Int(1));
        assert_eq!(b["T"], t("[2, 3]"));
        assert!(match_pattern(&t("[H | T]"), &t("[]")).is_none());
        let env: Bindings = [("L".to_string(), t("[b, c]"))].into();
        assert_eq!(substitute(&t("[a | L]"), &env), t("[a, b, c]"));
    }

    #[test]
    fn printing_quotes_non_identifiers() {
        assert_eq!(t("'alice-2'").to_string(), "'alice-2'");
        assert_eq!(t("f('A', \"x\\\"y\", #t#, -3)").to_string(), "f('A', \"x\\\"y\", #t#, -3)");
        assert_eq!(t("[a,b|T]").to_string(), "[a, b | T]");
    }

    #[test]
    fn depth_limit_is_enforced() {
        let deep = "f(".repeat(16) + "x" + &")".repeat(16);
        assert!(Term::parse(&deep).is_err());
        let ok = "f(".repeat(15) + "x" + &")".repeat(15);
        assert_eq!(Term::parse(&ok).unwrap().depth(), 16);
    }

    #[test]
    fn anonymous_variable_never_binds() {
        let b = match_pattern(&t("f(_, _)"), &t("f(a, b)")).unwrap();
        assert!(b.is_empty());
    }
}
