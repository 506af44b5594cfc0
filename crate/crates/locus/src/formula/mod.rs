//! Formulas over a local language.
//!
//! Names of relations, constants and locality elements are resolved against
//! a [`SignatureSpec`] when a formula is parsed or built, so the AST carries
//! indices. Variables keep their names and sorts.

mod classify;
mod enumerate;
mod normalize;
mod parse;
mod print;

use std::collections::BTreeSet;

use thiserror::Error;

use crate::signature::{ConstId, LocId, RelId, SignatureSpec, SortId};

pub use classify::{classify, FormulaClass};
pub use enumerate::{enumerate_fragment, ClassFilter, Fragment};
pub use normalize::{normalize, NormalForm};
pub use parse::{parse, parse_in_context};
pub use print::{print, Printed};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormulaError {
    #[error("syntax error at {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("sort error in {atom}: {msg}")]
    Sort { atom: String, msg: String },
    #[error("bound variable {0} occurs in the anchor of its own local quantifier")]
    AnchorContainsBoundVar(String),
    #[error("formula is not in the class required for {0}")]
    ClassMismatch(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var {
    pub name: String,
    pub sort: SortId,
}

impl Var {
    pub fn new(name: impl Into<String>, sort: SortId) -> Self {
        Var { name: name.into(), sort }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Var(Var),
    Const(ConstId),
}

impl Term {
    pub fn var(name: impl Into<String>, sort: SortId) -> Self {
        Term::Var(Var::new(name, sort))
    }

    pub fn sort(&self, sig: &SignatureSpec) -> SortId {
        match self {
            Term::Var(v) => v.sort,
            Term::Const(c) => sig.constants()[*c].sort,
        }
    }

    pub fn as_var(&self) -> Option<&Var> {
        match self {
            Term::Var(v) => Some(v),
            Term::Const(_) => None,
        }
    }
}

/// The symbol of an atomic formula: a declared relation or a locality element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rel {
    Sym(RelId),
    Loc(SortId, LocId),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Formula {
    Top,
    Bot,
    Equal(Term, Term),
    Atom { rel: Rel, args: Vec<Term> },
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Not(Box<Formula>),
    Exists(Var, Box<Formula>),
    Forall(Var, Box<Formula>),
    LocalExists { var: Var, d: LocId, anchor: Term, body: Box<Formula> },
}

impl Formula {
    pub fn atom(rel: RelId, args: Vec<Term>) -> Self {
        Formula::Atom { rel: Rel::Sym(rel), args }
    }

    pub fn loc(sort: SortId, d: LocId, a: Term, b: Term) -> Self {
        Formula::Atom { rel: Rel::Loc(sort, d), args: vec![a, b] }
    }

    pub fn eq(a: Term, b: Term) -> Self {
        Formula::Equal(a, b)
    }

    /// Conjunction; a single conjunct is returned as is and none gives `⊤`.
    pub fn and(mut parts: Vec<Formula>) -> Self {
        match parts.len() {
            0 => Formula::Top,
            1 => parts.pop().unwrap(),
            _ => Formula::And(parts),
        }
    }

    /// Disjunction; a single disjunct is returned as is and none gives `⊥`.
    pub fn or(mut parts: Vec<Formula>) -> Self {
        match parts.len() {
            0 => Formula::Bot,
            1 => parts.pop().unwrap(),
            _ => Formula::Or(parts),
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn exists(var: Var, body: Formula) -> Self {
        Formula::Exists(var, Box::new(body))
    }

    pub fn forall(var: Var, body: Formula) -> Self {
        Formula::Forall(var, Box::new(body))
    }

    pub fn exists_in(var: Var, d: LocId, anchor: Term, body: Formula) -> Self {
        Formula::LocalExists { var, d, anchor, body: Box::new(body) }
    }

    /// `∃v1 … ∃vn body`.
    pub fn exists_many(vars: impl IntoIterator<Item = Var>, body: Formula) -> Self {
        let vars: Vec<Var> = vars.into_iter().collect();
        vars.into_iter().rev().fold(body, |acc, v| Formula::exists(v, acc))
    }

    /// `∀v1 … ∀vn body`.
    pub fn forall_many(vars: impl IntoIterator<Item = Var>, body: Formula) -> Self {
        let vars: Vec<Var> = vars.into_iter().collect();
        vars.into_iter().rev().fold(body, |acc, v| Formula::forall(v, acc))
    }

    pub fn free_variables(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }

    fn collect_free(&self, bound: &mut Vec<Var>, out: &mut BTreeSet<Var>) {
        let term = |t: &Term, bound: &Vec<Var>, out: &mut BTreeSet<Var>| {
            if let Term::Var(v) = t {
                if !bound.contains(v) {
                    out.insert(v.clone());
                }
            }
        };
        match self {
            Formula::Top | Formula::Bot => {}
            Formula::Equal(a, b) => {
                term(a, bound, out);
                term(b, bound, out);
            }
            Formula::Atom { args, .. } => args.iter().for_each(|t| term(t, bound, out)),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().for_each(|f| f.collect_free(bound, out)),
            Formula::Not(f) => f.collect_free(bound, out),
            Formula::Exists(v, f) | Formula::Forall(v, f) => {
                bound.push(v.clone());
                f.collect_free(bound, out);
                bound.pop();
            }
            Formula::LocalExists { var, anchor, body, .. } => {
                term(anchor, bound, out);
                bound.push(var.clone());
                body.collect_free(bound, out);
                bound.pop();
            }
        }
    }

    pub fn is_sentence(&self) -> bool {
        self.free_variables().is_empty()
    }

    /// Quantifier nesting depth.
    pub fn depth(&self) -> usize {
        match self {
            Formula::Top | Formula::Bot | Formula::Equal(..) | Formula::Atom { .. } => 0,
            Formula::And(fs) | Formula::Or(fs) => fs.iter().map(Formula::depth).max().unwrap_or(0),
            Formula::Not(f) => f.depth(),
            Formula::Exists(_, f) | Formula::Forall(_, f) => 1 + f.depth(),
            Formula::LocalExists { body, .. } => 1 + body.depth(),
        }
    }

    /// Largest arity of a connective; atoms count as width 1.
    pub fn width(&self) -> usize {
        match self {
            Formula::Top | Formula::Bot | Formula::Equal(..) | Formula::Atom { .. } => 1,
            Formula::And(fs) | Formula::Or(fs) => {
                fs.len().max(fs.iter().map(Formula::width).max().unwrap_or(0))
            }
            Formula::Not(f) => f.width(),
            Formula::Exists(_, f) | Formula::Forall(_, f) => f.width(),
            Formula::LocalExists { body, .. } => body.width(),
        }
    }

    /// Number of atomic subformulas.
    pub fn atom_count(&self) -> usize {
        match self {
            Formula::Top | Formula::Bot | Formula::Equal(..) | Formula::Atom { .. } => 1,
            Formula::And(fs) | Formula::Or(fs) => fs.iter().map(Formula::atom_count).sum(),
            Formula::Not(f) => f.atom_count(),
            Formula::Exists(_, f) | Formula::Forall(_, f) => f.atom_count(),
            Formula::LocalExists { body, .. } => body.atom_count(),
        }
    }

    /// True iff `v` occurs free.
    pub fn occurs_free(&self, v: &Var) -> bool {
        let in_term = |t: &Term| t.as_var() == Some(v);
        match self {
            Formula::Top | Formula::Bot => false,
            Formula::Equal(a, b) => in_term(a) || in_term(b),
            Formula::Atom { args, .. } => args.iter().any(in_term),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().any(|f| f.occurs_free(v)),
            Formula::Not(f) => f.occurs_free(v),
            Formula::Exists(w, f) | Formula::Forall(w, f) => w != v && f.occurs_free(v),
            Formula::LocalExists { var, anchor, body, .. } => in_term(anchor) || (var != v && body.occurs_free(v)),
        }
    }

    /// Replaces free occurrences of `from` by `to`. Bound variables that
    /// would capture `to` must have been renamed beforehand.
    pub fn substitute(&self, from: &Var, to: &Term) -> Formula {
        let sub = |t: &Term| match t {
            Term::Var(v) if v == from => to.clone(),
            other => other.clone(),
        };
        match self {
            Formula::Top | Formula::Bot => self.clone(),
            Formula::Equal(a, b) => Formula::Equal(sub(a), sub(b)),
            Formula::Atom { rel, args } => Formula::Atom { rel: *rel, args: args.iter().map(sub).collect() },
            Formula::And(fs) => Formula::And(fs.iter().map(|f| f.substitute(from, to)).collect()),
            Formula::Or(fs) => Formula::Or(fs.iter().map(|f| f.substitute(from, to)).collect()),
            Formula::Not(f) => Formula::not(f.substitute(from, to)),
            Formula::Exists(v, f) if v == from => Formula::Exists(v.clone(), f.clone()),
            Formula::Exists(v, f) => Formula::exists(v.clone(), f.substitute(from, to)),
            Formula::Forall(v, f) if v == from => Formula::Forall(v.clone(), f.clone()),
            Formula::Forall(v, f) => Formula::forall(v.clone(), f.substitute(from, to)),
            Formula::LocalExists { var, d, anchor, body } => {
                let body = if var == from { (**body).clone() } else { body.substitute(from, to) };
                Formula::exists_in(var.clone(), *d, sub(anchor), body)
            }
        }
    }

    /// All variable names, free or bound.
    pub fn variable_names(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit_vars(&mut |v| {
            out.insert(v.name.clone());
        });
        out
    }

    fn visit_vars(&self, f: &mut impl FnMut(&Var)) {
        let term = |t: &Term, f: &mut dyn FnMut(&Var)| {
            if let Term::Var(v) = t {
                f(v)
            }
        };
        match self {
            Formula::Top | Formula::Bot => {}
            Formula::Equal(a, b) => {
                term(a, f);
                term(b, f);
            }
            Formula::Atom { args, .. } => args.iter().for_each(|t| term(t, f)),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().for_each(|g| g.visit_vars(f)),
            Formula::Not(g) => g.visit_vars(f),
            Formula::Exists(v, g) | Formula::Forall(v, g) => {
                f(v);
                g.visit_vars(f);
            }
            Formula::LocalExists { var, anchor, body, .. } => {
                f(var);
                term(anchor, f);
                body.visit_vars(f);
            }
        }
    }

    /// Checks sorts of every atom and the anchor condition of local quantifiers.
    pub fn check(&self, sig: &SignatureSpec) -> Result<(), FormulaError> {
        let serr = |atom: &str, msg: &str| FormulaError::Sort { atom: atom.to_string(), msg: msg.to_string() };
        let term_ok = |t: &Term| -> Result<(), FormulaError> {
            match t {
                Term::Var(v) if v.sort >= sig.sorts().len() => Err(serr(&v.name, "unknown sort")),
                Term::Const(c) if *c >= sig.constants().len() => Err(serr("constant", "unknown constant")),
                _ => Ok(()),
            }
        };
        match self {
            Formula::Top | Formula::Bot => Ok(()),
            Formula::Equal(a, b) => {
                term_ok(a)?;
                term_ok(b)?;
                if a.sort(sig) != b.sort(sig) {
                    return Err(serr("=", "operands have different sorts"));
                }
                Ok(())
            }
            Formula::Atom { rel: Rel::Sym(r), args } => {
                let sym = sig.relations().get(*r).ok_or_else(|| serr("relation", "unknown relation"))?;
                if sym.profile.len() != args.len() {
                    return Err(serr(&sym.name, "wrong arity"));
                }
                for (t, &s) in args.iter().zip(&sym.profile) {
                    term_ok(t)?;
                    if t.sort(sig) != s {
                        return Err(serr(&sym.name, "argument sort does not match the profile"));
                    }
                }
                Ok(())
            }
            Formula::Atom { rel: Rel::Loc(s, d), args } => {
                if *s >= sig.sorts().len() || *d >= sig.monoid(*s).len() {
                    return Err(serr("locality", "unknown locality element"));
                }
                let name = sig.monoid(*s).name(*d);
                if args.len() != 2 {
                    return Err(serr(name, "locality atoms are binary"));
                }
                for t in args {
                    term_ok(t)?;
                    if t.sort(sig) != *s {
                        return Err(serr(name, "argument sort does not match the locality sort"));
                    }
                }
                Ok(())
            }
            Formula::And(fs) | Formula::Or(fs) => fs.iter().try_for_each(|f| f.check(sig)),
            Formula::Not(f) => f.check(sig),
            Formula::Exists(v, f) | Formula::Forall(v, f) => {
                term_ok(&Term::Var(v.clone()))?;
                f.check(sig)
            }
            Formula::LocalExists { var, d, anchor, body } => {
                term_ok(&Term::Var(var.clone()))?;
                term_ok(anchor)?;
                if anchor.as_var() == Some(var) {
                    return Err(FormulaError::AnchorContainsBoundVar(var.name.clone()));
                }
                if anchor.sort(sig) != var.sort {
                    return Err(serr(&var.name, "anchor sort differs from the bound variable"));
                }
                if *d >= sig.monoid(var.sort).len() {
                    return Err(serr(&var.name, "unknown locality element"));
                }
                body.check(sig)
            }
        }
    }
}

/// Picks a name with the given prefix that is not in `taken`.
pub(crate) fn fresh_name(prefix: &str, taken: &BTreeSet<String>) -> String {
    (0..)
        .map(|i| format!("{prefix}{i}"))
        .find(|n| !taken.contains(n))
        .expect("unbounded")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signature::LocalityMonoid;

    fn sig() -> SignatureSpec {
        SignatureSpec::one_sorted("s", &[("P", 1), ("Q", 1)], &["c"], LocalityMonoid::saturating(4)).unwrap()
    }

    #[test]
    fn free_variables_of_local_quantifier() {
        let s = sig();
        let f = parse("exists y in d1(x). P(y)", &s).unwrap();
        let names: Vec<String> = f.free_variables().into_iter().map(|v| v.name).collect();
        assert_eq!(names, vec!["x"]);
    }

    #[test]
    fn free_variables_of_conjunction_and_sentence() {
        let s = sig();
        let f = parse("P(x) & Q(y)", &s).unwrap();
        let names: Vec<String> = f.free_variables().into_iter().map(|v| v.name).collect();
        assert_eq!(names, vec!["x", "y"]);
        assert!(parse("!exists x. P(x)", &s).unwrap().is_sentence());
    }

    #[test]
    fn measures() {
        let s = sig();
        let f = parse("exists y. P(y) & Q(y) & d1(y, x)", &s).unwrap();
        assert_eq!(f.depth(), 1);
        assert_eq!(f.width(), 3);
        assert_eq!(f.atom_count(), 3);
        let g = parse("P(x) | (exists y. P(y) & Q(y) & d1(y, x))", &s).unwrap();
        assert_eq!((g.depth(), g.width(), g.atom_count()), (1, 3, 4));
    }

    #[test]
    fn substitution_respects_binding() {
        let s = sig();
        let f = parse("P(x) & exists x. Q(x)", &s).unwrap();
        let g = f.substitute(&Var::new("x", 0), &Term::Const(0));
        assert_eq!(print(&g, &s), "P(c) & (exists x. Q(x))");
    }
}
