//! Canonical law text. Parsing the output yields the same law.

use std::fmt::Write;

use super::{ArithOp, Expr, Guard, IterSource, Rule, Stmt};
use crate::state::StateSchema;
use crate::term::Term;

const INDENT: &str = "    ";

pub(super) fn print_law(name: &str, schema: &StateSchema, rules: &[Rule]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "law {};", Term::atom(name));
    let decls = [
        ("controlled", &schema.controlled),
        ("single", &schema.single),
        ("internal", &schema.internal),
    ];
    let mut any_decl = false;
    for (kw, set) in decls {
        if set.is_empty() {
            continue;
        }
        if !any_decl {
            out.push('\n');
            any_decl = true;
        }
        let names: Vec<String> = set.iter().map(|s| Term::atom(s.as_str()).to_string()).collect();
        let _ = writeln!(out, "{kw} {};", names.join(", "));
    }
    for rule in rules {
        out.push('\n');
        print_rule(&mut out, rule);
    }
    out
}

fn print_rule(out: &mut String, rule: &Rule) {
    let _ = write!(out, "{}: UPON {}", Term::atom(rule.label.as_str()), rule.event);
    if !rule.guards.is_empty() {
        let _ = write!(out, " :- {}", guards(&rule.guards));
    }
    out.push(' ');
    print_block(out, &rule.body, 0);
    out.push('\n');
}

pub(super) fn guards(gs: &[Guard]) -> String {
    gs.iter().map(guard).collect::<Vec<_>>().join(", ")
}

fn guard(g: &Guard) -> String {
    match g {
        Guard::InState(t) => format!("{t}@CS"),
        Guard::In(t, l) => format!("{t} in {l}"),
        Guard::Not(inner) => format!("not({})", guards(inner)),
        Guard::Cmp(a, op, b) => format!("{a} {} {b}", op.symbol()),
        Guard::Functor(t, f) => format!("functor({t}, {f})"),
        Guard::Controlled(f) => format!("controlled({f})"),
    }
}

fn expr(e: &Expr) -> String {
    match e {
        Expr::Term(t) => t.to_string(),
        Expr::Take(n, l) => format!("take({}, {})", expr(n), expr(l)),
        Expr::Collect(t, gs) => format!("collect {t} where {}", guards(gs)),
        Expr::Profile => "profile".to_string(),
        Expr::Arith(first, rest) => {
            let mut s = first.to_string();
            for (op, t) in rest {
                let sym = match op {
                    ArithOp::Add => '+',
                    ArithOp::Sub => '-',
                };
                let _ = write!(s, " {sym} {t}");
            }
            s
        }
    }
}

fn print_block(out: &mut String, body: &[Stmt], level: usize) {
    out.push_str("{\n");
    for stmt in body {
        print_stmt(out, stmt, level + 1);
    }
    out.push_str(&INDENT.repeat(level));
    out.push('}');
}

fn print_stmt(out: &mut String, stmt: &Stmt, level: usize) {
    let pad = INDENT.repeat(level);
    out.push_str(&pad);
    match stmt {
        Stmt::Add(t) => {
            let _ = write!(out, "+{t};");
        }
        Stmt::Remove(t) => {
            let _ = write!(out, "-{t};");
        }
        Stmt::Clear(t) => {
            let _ = write!(out, "clear {t};");
        }
        Stmt::Forward {
            src,
            msg,
            dst,
            with_profile,
        } => {
            let _ = write!(out, "forward({src}, {msg}, {dst})");
            if *with_profile {
                out.push_str(" with profile");
            }
            out.push(';');
        }
        Stmt::Deliver { src, msg, dst } => {
            let _ = write!(out, "deliver({src}, {msg}, {dst});");
        }
        Stmt::Release { src, msg, resource } => {
            let _ = write!(out, "release({src}, {msg}, {resource});");
        }
        Stmt::Inform { msg, audience } => {
            let _ = write!(out, "inform({msg}, {audience});");
        }
        Stmt::Quit => out.push_str("quit;"),
        Stmt::Return => out.push_str("return;"),
        Stmt::Let(v, e) => {
            let _ = write!(out, "let {v} = {};", expr(e));
        }
        Stmt::If {
            branches,
            otherwise,
        } => {
            for (i, (gs, body)) in branches.iter().enumerate() {
                if i > 0 {
                    out.push_str(" else ");
                }
                let _ = write!(out, "if {} ", guards(gs));
                print_block(out, body, level);
            }
            if let Some(body) = otherwise {
                out.push_str(" else ");
                print_block(out, body, level);
            }
        }
        Stmt::ForEach { var, source, body } => {
            match source {
                IterSource::In(l) => {
                    let _ = write!(out, "forEach {var} in {l} ");
                }
                IterSource::Where(gs) => {
                    let _ = write!(out, "forEach {var} where {} ", guards(gs));
                }
            }
            print_block(out, body, level);
        }
    }
    out.push('\n');
}
