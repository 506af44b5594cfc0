use std::fmt;

use super::{Formula, Rel, Term};
use crate::signature::SignatureSpec;

/// Canonical text. Variables carry `:sort` when the signature has more than
/// one sort, so the output parses back to the same formula.
pub fn print(f: &Formula, sig: &SignatureSpec) -> String {
    let mut out = String::new();
    write_formula(&mut out, f, sig, sig.sorts().len() > 1);
    out
}

/// Display adapter; omits sort annotations.
pub struct Printed<'a> {
    pub formula: &'a Formula,
    pub sig: &'a SignatureSpec,
}

impl<'a> Printed<'a> {
    pub fn new(formula: &'a Formula, sig: &'a SignatureSpec) -> Self {
        Printed { formula, sig }
    }
}

impl fmt::Display for Printed<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        write_formula(&mut out, self.formula, self.sig, false);
        f.write_str(&out)
    }
}

fn write_term(out: &mut String, t: &Term, sig: &SignatureSpec, sorts: bool) {
    match t {
        Term::Var(v) => {
            out.push_str(&v.name);
            if sorts {
                out.push(':');
                out.push_str(&sig.sorts()[v.sort]);
            }
        }
        Term::Const(c) => out.push_str(&sig.constants()[*c].name),
    }
}

fn is_quantifier(f: &Formula) -> bool {
    matches!(f, Formula::Exists(..) | Formula::Forall(..) | Formula::LocalExists { .. })
}

fn write_child(out: &mut String, f: &Formula, sig: &SignatureSpec, sorts: bool) {
    let wrap = matches!(f, Formula::And(_) | Formula::Or(_)) || is_quantifier(f);
    if wrap {
        out.push('(');
    }
    write_formula(out, f, sig, sorts);
    if wrap {
        out.push(')');
    }
}

fn write_formula(out: &mut String, f: &Formula, sig: &SignatureSpec, sorts: bool) {
    match f {
        Formula::Top => out.push_str("true"),
        Formula::Bot => out.push_str("false"),
        Formula::Equal(a, b) => {
            write_term(out, a, sig, sorts);
            out.push_str(" = ");
            write_term(out, b, sig, sorts);
        }
        Formula::Atom { rel, args } => {
            match rel {
                Rel::Sym(r) => out.push_str(&sig.relations()[*r].name),
                Rel::Loc(s, d) => out.push_str(sig.monoid(*s).name(*d)),
            }
            out.push('(');
            for (i, t) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_term(out, t, sig, sorts);
            }
            out.push(')');
        }
        Formula::And(fs) | Formula::Or(fs) if fs.is_empty() => {
            out.push_str(if matches!(f, Formula::And(_)) { "true" } else { "false" })
        }
        Formula::And(fs) | Formula::Or(fs) if fs.len() == 1 => write_formula(out, &fs[0], sig, sorts),
        Formula::And(fs) | Formula::Or(fs) => {
            let sep = if matches!(f, Formula::And(_)) { " & " } else { " | " };
            for (i, g) in fs.iter().enumerate() {
                if i > 0 {
                    out.push_str(sep);
                }
                write_child(out, g, sig, sorts);
            }
        }
        Formula::Not(g) => {
            out.push('!');
            let wrap = !matches!(**g, Formula::Top | Formula::Bot | Formula::Atom { .. } | Formula::Not(_));
            if wrap {
                out.push('(');
            }
            write_formula(out, g, sig, sorts);
            if wrap {
                out.push(')');
            }
        }
        Formula::Exists(v, body) | Formula::Forall(v, body) => {
            out.push_str(if matches!(f, Formula::Exists(..)) { "exists " } else { "forall " });
            write_term(out, &Term::Var(v.clone()), sig, sorts);
            out.push_str(". ");
            write_formula(out, body, sig, sorts);
        }
        Formula::LocalExists { var, d, anchor, body } => {
            out.push_str("exists ");
            write_term(out, &Term::Var(var.clone()), sig, sorts);
            out.push_str(" in ");
            out.push_str(sig.monoid(var.sort).name(*d));
            out.push('(');
            write_term(out, anchor, sig, sorts);
            out.push_str("). ");
            write_formula(out, body, sig, sorts);
        }
    }
}
