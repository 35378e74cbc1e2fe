//! The law language and its evaluator.
//!
//! A law maps an interactive event and the local control state to a new
//! control state plus a sequence of operations for the controller to carry
//! out. Rulings depend on nothing but those two inputs.
//!
//! Grammar, informally:
//!
//! ```text
//! law      := 'law' name ';' decl* rule*
//! decl     := ('controlled' | 'single' | 'internal') ident (',' ident)* ';'
//! rule     := label ':' 'UPON' term [':-' guards] block
//! guards   := guard (',' guard)*
//! guard    := term '@' 'CS' | term 'in' term | 'not' '(' guards ')'
//!           | 'functor' '(' term ',' term ')' | 'controlled' '(' term ')'
//!           | term ('==' | '!=' | '<' | '<=' | '>' | '>=') term
//! block    := '{' stmt* '}'
//! stmt     := '+' term ';' | '-' term ';' | 'clear' term ';'
//!           | 'forward' '(' term ',' term ',' term ')' ['with' 'profile'] ';'
//!           | 'deliver' '(' term ',' term ',' term ')' ';'
//!           | 'release' '(' term ',' term ',' term ')' ';'
//!           | 'inform' '(' term ',' term ')' ';'
//!           | 'quit' ';' | 'return' ';' | 'let' Var '=' expr ';'
//!           | 'if' guards block ('else' 'if' guards block)* ['else' block]
//!           | 'forEach' Var ('in' term | 'where' guards) block
//! expr     := 'take' '(' expr ',' expr ')' | 'collect' term 'where' guards
//!           | 'profile' | term (('+' | '-') term)*
//! ```

mod eval;
mod parser;
mod printer;

use std::fmt;
use std::sync::Arc;

use sha2::{Digest, Sha256};

pub use eval::{apply_delta, evaluate, evaluate_with_budget, EvalDiagnostic, Event, EventKind, Ruling, RulingOp};
pub use parser::{parse_law, LawError};

use crate::state::StateSchema;
use crate::term::Term;

/// Guard/body steps one evaluation may take before the law is declared
/// malformed for that input.
pub const STEP_BUDGET: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Guard {
    /// `T@CS`: some attribute of the control state matches `T`.
    InState(Term),
    /// `T in L`: some element of list `L` matches `T`.
    In(Term, Term),
    Not(Vec<Guard>),
    Cmp(Term, CmpOp, Term),
    /// `functor(T, F)`: binds `F` to the functor of `T` as an atom.
    Functor(Term, Term),
    /// `controlled(F)`: `F` names a controlled attribute.
    Controlled(Term),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    Term(Term),
    Take(Box<Expr>, Box<Expr>),
    Collect(Term, Vec<Guard>),
    Profile,
    Arith(Term, Vec<(ArithOp, Term)>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum IterSource {
    In(Term),
    Where(Vec<Guard>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Stmt {
    Add(Term),
    Remove(Term),
    Clear(Term),
    Forward {
        src: Term,
        msg: Term,
        dst: Term,
        with_profile: bool,
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
    Inform {
        msg: Term,
        audience: Term,
    },
    Quit,
    Return,
    Let(String, Expr),
    If {
        branches: Vec<(Vec<Guard>, Vec<Stmt>)>,
        otherwise: Option<Vec<Stmt>>,
    },
    ForEach {
        var: String,
        source: IterSource,
        body: Vec<Stmt>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rule {
    pub label: String,
    pub event: Term,
    pub guards: Vec<Guard>,
    pub body: Vec<Stmt>,
}

impl Rule {
    /// Event kind named by the pattern's functor.
    pub fn event_kind(&self) -> Option<EventKind> {
        self.event.functor().and_then(EventKind::from_name)
    }
}

/// SHA-256 of a law's canonical text.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LawHash(pub [u8; 32]);

impl LawHash {
    pub fn of(text: &str) -> Self {
        LawHash(Sha256::digest(text.as_bytes()).into())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let bytes = hex::decode(s).ok()?;
        Some(LawHash(bytes.try_into().ok()?))
    }
}

impl fmt::Display for LawHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for LawHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LawHash({})", &self.to_hex()[..12])
    }
}

#[derive(Clone, Debug)]
pub struct Law {
    name: String,
    rules: Vec<Rule>,
    schema: Arc<StateSchema>,
    canonical: String,
    hash: LawHash,
}

impl PartialEq for Law {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.rules == other.rules && *self.schema == *other.schema
    }
}

impl Eq for Law {}

impl Law {
    pub fn new(name: impl Into<String>, schema: StateSchema, rules: Vec<Rule>) -> Law {
        let name = name.into();
        let canonical = printer::print_law(&name, &schema, &rules);
        let hash = LawHash::of(&canonical);
        Law {
            name,
            rules,
            schema: Arc::new(schema),
            canonical,
            hash,
        }
    }

    /// The law that rules nothing: every event yields an empty ruling.
    pub fn empty(name: impl Into<String>) -> Law {
        Law::new(name, StateSchema::default(), Vec::new())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn rule(&self, label: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.label == label)
    }

    pub fn schema(&self) -> &Arc<StateSchema> {
        &self.schema
    }

    /// Canonical text: whitespace normalised, comments dropped.
    pub fn canonical_text(&self) -> &str {
        &self.canonical
    }

    pub fn hash(&self) -> LawHash {
        self.hash
    }

    pub fn fresh_state(&self) -> crate::state::ControlState {
        crate::state::ControlState::new(self.schema.clone())
    }
}

impl fmt::Display for Law {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical)
    }
}
