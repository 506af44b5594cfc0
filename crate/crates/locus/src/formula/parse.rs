//! Concrete syntax.
//!
//! ```text
//! formula  := quant | disj
//! quant    := ("exists" | "forall") binders "." formula
//!           | "exists" binder "in" IDENT "(" term ")" "." formula
//! binders  := binder ("," ? binder)*
//! binder   := IDENT (":" IDENT)?
//! disj     := conj ("|" conj)*
//! conj     := unary ("&" unary)*
//! unary    := "!" unary | quant | "(" formula ")" | atom
//! atom     := "true" | "false" | IDENT "(" term ("," term)* ")" | term "=" term
//! term     := IDENT (":" IDENT)?
//! ```
//!
//! Identifiers are runs of ASCII letters, digits, `_` and `'`. A declared
//! constant name always denotes the constant. Sorts of variables are
//! inferred from the atoms they occur in; `x:s` fixes one explicitly.

use std::collections::{BTreeMap, BTreeSet};

use super::{Formula, FormulaError, Rel, Term, Var};
use crate::signature::{SignatureSpec, SortId};

pub fn parse(text: &str, sig: &SignatureSpec) -> Result<Formula, FormulaError> {
    parse_in_context(text, sig, &[])
}

/// Parses with some free variables already declared.
pub fn parse_in_context(text: &str, sig: &SignatureSpec, free: &[Var]) -> Result<Formula, FormulaError> {
    let tokens = lex(text)?;
    let mut p = Parser { tokens, at: 0, end: text.len() };
    let tree = p.formula()?;
    if p.at < p.tokens.len() {
        return Err(p.error("unexpected input after formula"));
    }
    let mut r = Resolver::new(sig);
    for v in free {
        let tv = r.fresh(v.name.clone());
        r.fix(tv, v.sort, &v.name)?;
        r.free.insert(v.name.clone(), tv);
    }
    let typed = r.resolve(&tree, &mut Vec::new())?;
    r.finish(&typed)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    LParen,
    RParen,
    Comma,
    Eq,
    Amp,
    Bar,
    Bang,
    Dot,
    Colon,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, FormulaError> {
    let mut out = Vec::new();
    let bytes: Vec<char> = text.chars().collect();
    let mut offsets = Vec::with_capacity(bytes.len());
    {
        let mut o = 0;
        for c in &bytes {
            offsets.push(o);
            o += c.len_utf8();
        }
    }
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let pos = offsets[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let tok = match c {
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            ',' => Tok::Comma,
            '=' => Tok::Eq,
            '&' => Tok::Amp,
            '|' => Tok::Bar,
            '!' => Tok::Bang,
            '.' => Tok::Dot,
            ':' => Tok::Colon,
            c if is_ident_char(c) => {
                let start = i;
                while i < bytes.len() && is_ident_char(bytes[i]) {
                    i += 1;
                }
                out.push((Tok::Ident(bytes[start..i].iter().collect()), pos));
                continue;
            }
            other => {
                return Err(FormulaError::Syntax { pos, msg: format!("unexpected character {other:?}") })
            }
        };
        out.push((tok, pos));
        i += 1;
    }
    Ok(out)
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '\''
}

#[derive(Debug, Clone)]
struct PTerm {
    name: String,
    sort: Option<String>,
    pos: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum QKind {
    Exists,
    Forall,
}

#[derive(Debug, Clone)]
enum PF {
    Top,
    Bot,
    Eq(PTerm, PTerm),
    App { name: String, args: Vec<PTerm>, pos: usize },
    And(Vec<PF>),
    Or(Vec<PF>),
    Not(Box<PF>),
    Quant { kind: QKind, var: PTerm, local: Option<(String, PTerm)>, body: Box<PF> },
}

struct Parser {
    tokens: Vec<(Tok, usize)>,
    at: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.at).map(|(t, _)| t)
    }

    fn peek2(&self) -> Option<&Tok> {
        self.tokens.get(self.at + 1).map(|(t, _)| t)
    }

    fn pos(&self) -> usize {
        self.tokens.get(self.at).map(|(_, p)| *p).unwrap_or(self.end)
    }

    fn error(&self, msg: &str) -> FormulaError {
        FormulaError::Syntax { pos: self.pos(), msg: msg.to_string() }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), FormulaError> {
        if self.peek() == Some(&tok) {
            self.at += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected {what}")))
        }
    }

    fn ident(&mut self) -> Result<(String, usize), FormulaError> {
        match self.tokens.get(self.at) {
            Some((Tok::Ident(s), p)) => {
                let out = (s.clone(), *p);
                self.at += 1;
                Ok(out)
            }
            _ => Err(self.error("expected identifier")),
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == kw)
    }

    fn formula(&mut self) -> Result<PF, FormulaError> {
        if self.is_keyword("exists") || self.is_keyword("forall") {
            return self.quant();
        }
        self.disj()
    }

    fn quant(&mut self) -> Result<PF, FormulaError> {
        let kind = if self.is_keyword("exists") { QKind::Exists } else { QKind::Forall };
        self.at += 1;
        let mut binders = vec![self.term()?];
        let mut local = None;
        if self.is_keyword("in") {
            if kind == QKind::Forall {
                return Err(self.error("only existential quantifiers take a locality bound"));
            }
            self.at += 1;
            let (d, _) = self.ident()?;
            self.expect(Tok::LParen, "'('")?;
            let anchor = self.term()?;
            self.expect(Tok::RParen, "')'")?;
            local = Some((d, anchor));
        } else {
            loop {
                if self.peek() == Some(&Tok::Comma) {
                    self.at += 1;
                }
                match self.peek() {
                    Some(Tok::Ident(s)) if s != "in" => binders.push(self.term()?),
                    _ => break,
                }
            }
        }
        for b in &binders {
            if is_reserved(&b.name) {
                return Err(FormulaError::Syntax { pos: b.pos, msg: format!("{} is reserved", b.name) });
            }
        }
        self.expect(Tok::Dot, "'.'")?;
        let body = self.formula()?;
        let mut out = body;
        let last = binders.len() - 1;
        for (i, var) in binders.into_iter().enumerate().rev() {
            let local = if i == last { local.take() } else { None };
            out = PF::Quant { kind, var, local, body: Box::new(out) };
        }
        Ok(out)
    }

    fn disj(&mut self) -> Result<PF, FormulaError> {
        let mut parts = vec![self.conj()?];
        while self.peek() == Some(&Tok::Bar) {
            self.at += 1;
            parts.push(self.conj()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { PF::Or(parts) })
    }

    fn conj(&mut self) -> Result<PF, FormulaError> {
        let mut parts = vec![self.unary()?];
        while self.peek() == Some(&Tok::Amp) {
            self.at += 1;
            parts.push(self.unary()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { PF::And(parts) })
    }

    fn unary(&mut self) -> Result<PF, FormulaError> {
        match self.peek() {
            Some(Tok::Bang) => {
                self.at += 1;
                Ok(PF::Not(Box::new(self.unary()?)))
            }
            Some(Tok::LParen) => {
                self.at += 1;
                let f = self.formula()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(f)
            }
            Some(Tok::Ident(s)) if s == "exists" || s == "forall" => self.quant(),
            Some(Tok::Ident(s)) if s == "true" => {
                self.at += 1;
                Ok(PF::Top)
            }
            Some(Tok::Ident(s)) if s == "false" => {
                self.at += 1;
                Ok(PF::Bot)
            }
            Some(Tok::Ident(_)) if self.peek2() == Some(&Tok::LParen) => {
                let (name, pos) = self.ident()?;
                self.at += 1;
                let mut args = vec![self.term()?];
                while self.peek() == Some(&Tok::Comma) {
                    self.at += 1;
                    args.push(self.term()?);
                }
                self.expect(Tok::RParen, "')'")?;
                Ok(PF::App { name, args, pos })
            }
            Some(Tok::Ident(_)) => {
                let a = self.term()?;
                self.expect(Tok::Eq, "'=' or '('")?;
                let b = self.term()?;
                Ok(PF::Eq(a, b))
            }
            _ => Err(self.error("expected a formula")),
        }
    }

    fn term(&mut self) -> Result<PTerm, FormulaError> {
        let (name, pos) = self.ident()?;
        if is_reserved(&name) {
            return Err(FormulaError::Syntax { pos, msg: format!("{name} is reserved") });
        }
        let sort = if self.peek() == Some(&Tok::Colon) {
            self.at += 1;
            Some(self.ident()?.0)
        } else {
            None
        };
        Ok(PTerm { name, sort, pos })
    }
}

fn is_reserved(name: &str) -> bool {
    matches!(name, "exists" | "forall" | "in" | "true" | "false")
}

// ---------------------------------------------------------------------------
// Sort inference

type TyVar = usize;

#[derive(Debug, Clone)]
enum TTerm {
    Var(String, TyVar),
    Const(usize),
}

#[derive(Debug, Clone)]
enum TF {
    Top,
    Bot,
    Eq(TTerm, TTerm),
    Rel(usize, Vec<TTerm>),
    Loc(String, TTerm, TTerm),
    And(Vec<TF>),
    Or(Vec<TF>),
    Not(Box<TF>),
    Quant { kind: QKind, var: (String, TyVar), local: Option<(String, TTerm)>, body: Box<TF> },
}

struct Resolver<'a> {
    sig: &'a SignatureSpec,
    parent: Vec<TyVar>,
    fixed: Vec<Option<SortId>>,
    cands: Vec<Option<BTreeSet<SortId>>>,
    names: Vec<String>,
    free: BTreeMap<String, TyVar>,
}

impl<'a> Resolver<'a> {
    fn new(sig: &'a SignatureSpec) -> Self {
        Resolver { sig, parent: vec![], fixed: vec![], cands: vec![], names: vec![], free: BTreeMap::new() }
    }

    fn fresh(&mut self, name: String) -> TyVar {
        self.parent.push(self.parent.len());
        self.fixed.push(None);
        self.cands.push(None);
        self.names.push(name);
        self.parent.len() - 1
    }

    fn find(&mut self, v: TyVar) -> TyVar {
        let mut r = v;
        while self.parent[r] != r {
            r = self.parent[r];
        }
        let mut c = v;
        while self.parent[c] != r {
            let n = self.parent[c];
            self.parent[c] = r;
            c = n;
        }
        r
    }

    fn sort_err(&self, atom: &str, msg: String) -> FormulaError {
        FormulaError::Sort { atom: atom.to_string(), msg }
    }

    fn fix(&mut self, v: TyVar, sort: SortId, ctx: &str) -> Result<(), FormulaError> {
        let r = self.find(v);
        match self.fixed[r] {
            Some(s) if s != sort => Err(self.sort_err(
                ctx,
                format!(
                    "{} has sort {} but is used at sort {}",
                    self.names[v], self.sig.sorts()[s], self.sig.sorts()[sort]
                ),
            )),
            _ => {
                if let Some(c) = &self.cands[r] {
                    if !c.contains(&sort) {
                        return Err(self.sort_err(ctx, format!("{} cannot have sort {}", self.names[v], self.sig.sorts()[sort])));
                    }
                }
                self.fixed[r] = Some(sort);
                Ok(())
            }
        }
    }

    fn restrict(&mut self, v: TyVar, allowed: &BTreeSet<SortId>, ctx: &str) -> Result<(), FormulaError> {
        let r = self.find(v);
        if let Some(s) = self.fixed[r] {
            if !allowed.contains(&s) {
                return Err(self.sort_err(ctx, format!("{} has sort {}", self.names[v], self.sig.sorts()[s])));
            }
        }
        let next: BTreeSet<SortId> = match &self.cands[r] {
            Some(c) => c.intersection(allowed).copied().collect(),
            None => allowed.clone(),
        };
        if next.is_empty() {
            return Err(self.sort_err(ctx, format!("no sort fits {}", self.names[v])));
        }
        self.cands[r] = Some(next);
        Ok(())
    }

    fn union(&mut self, a: TyVar, b: TyVar, ctx: &str) -> Result<(), FormulaError> {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return Ok(());
        }
        self.parent[rb] = ra;
        if let Some(s) = self.fixed[rb] {
            self.fix(ra, s, ctx)?;
        }
        if let Some(c) = self.cands[rb].clone() {
            self.restrict(ra, &c, ctx)?;
        }
        Ok(())
    }

    fn unify_term_sort(&mut self, t: &TTerm, sort: SortId, ctx: &str) -> Result<(), FormulaError> {
        match t {
            TTerm::Var(_, v) => self.fix(*v, sort, ctx),
            TTerm::Const(c) => {
                if self.sig.constants()[*c].sort == sort {
                    Ok(())
                } else {
                    Err(self.sort_err(ctx, format!("constant {} has the wrong sort", self.sig.constants()[*c].name)))
                }
            }
        }
    }

    fn unify_terms(&mut self, a: &TTerm, b: &TTerm, ctx: &str) -> Result<(), FormulaError> {
        match (a, b) {
            (TTerm::Var(_, x), TTerm::Var(_, y)) => self.union(*x, *y, ctx),
            (TTerm::Var(..), TTerm::Const(c)) | (TTerm::Const(c), TTerm::Var(..)) => {
                let s = self.sig.constants()[*c].sort;
                let t = if matches!(a, TTerm::Var(..)) { a } else { b };
                self.unify_term_sort(t, s, ctx)
            }
            (TTerm::Const(c), TTerm::Const(d)) => {
                if self.sig.constants()[*c].sort == self.sig.constants()[*d].sort {
                    Ok(())
                } else {
                    Err(self.sort_err(ctx, "constants of different sorts".into()))
                }
            }
        }
    }

    fn annotate(&mut self, t: &PTerm, tt: &TTerm) -> Result<(), FormulaError> {
        if let Some(sname) = &t.sort {
            let s = self
                .sig
                .sort_index(sname)
                .ok_or_else(|| FormulaError::Syntax { pos: t.pos, msg: format!("unknown sort {sname}") })?;
            self.unify_term_sort(tt, s, &t.name)?;
        }
        Ok(())
    }

    fn term(&mut self, t: &PTerm, scope: &[(String, TyVar)]) -> Result<TTerm, FormulaError> {
        let tt = if let Some(c) = self.sig.constant_index(&t.name) {
            TTerm::Const(c)
        } else if let Some((_, v)) = scope.iter().rev().find(|(n, _)| *n == t.name) {
            TTerm::Var(t.name.clone(), *v)
        } else if let Some(&v) = self.free.get(&t.name) {
            TTerm::Var(t.name.clone(), v)
        } else {
            let v = self.fresh(t.name.clone());
            self.free.insert(t.name.clone(), v);
            TTerm::Var(t.name.clone(), v)
        };
        self.annotate(t, &tt)?;
        Ok(tt)
    }

    fn resolve(&mut self, f: &PF, scope: &mut Vec<(String, TyVar)>) -> Result<TF, FormulaError> {
        Ok(match f {
            PF::Top => TF::Top,
            PF::Bot => TF::Bot,
            PF::Eq(a, b) => {
                let (ta, tb) = (self.term(a, scope)?, self.term(b, scope)?);
                self.unify_terms(&ta, &tb, "=")?;
                TF::Eq(ta, tb)
            }
            PF::App { name, args, pos } => {
                let targs = args.iter().map(|a| self.term(a, scope)).collect::<Result<Vec<_>, _>>()?;
                if let Some(r) = self.sig.relation_index(name) {
                    let profile = self.sig.relations()[r].profile.clone();
                    if profile.len() != targs.len() {
                        return Err(self.sort_err(
                            name,
                            format!("expected {} arguments, found {}", profile.len(), targs.len()),
                        ));
                    }
                    for (t, s) in targs.iter().zip(profile) {
                        self.unify_term_sort(t, s, name)?;
                    }
                    TF::Rel(r, targs)
                } else {
                    let sorts: BTreeSet<SortId> = self.sig.sorts_with_locality(name).into_iter().collect();
                    if sorts.is_empty() {
                        return Err(FormulaError::Syntax { pos: *pos, msg: format!("unknown relation {name}") });
                    }
                    if targs.len() != 2 {
                        return Err(self.sort_err(name, "locality atoms take two arguments".into()));
                    }
                    self.unify_terms(&targs[0], &targs[1], name)?;
                    self.restrict_term(&targs[0], &sorts, name)?;
                    TF::Loc(name.clone(), targs[0].clone(), targs[1].clone())
                }
            }
            PF::And(fs) => TF::And(fs.iter().map(|g| self.resolve(g, scope)).collect::<Result<_, _>>()?),
            PF::Or(fs) => TF::Or(fs.iter().map(|g| self.resolve(g, scope)).collect::<Result<_, _>>()?),
            PF::Not(g) => TF::Not(Box::new(self.resolve(g, scope)?)),
            PF::Quant { kind, var, local, body } => {
                if self.sig.constant_index(&var.name).is_some() {
                    return Err(FormulaError::Syntax {
                        pos: var.pos,
                        msg: format!("cannot bind the constant {}", var.name),
                    });
                }
                let local = match local {
                    Some((d, anchor)) => {
                        if anchor.name == var.name {
                            return Err(FormulaError::AnchorContainsBoundVar(var.name.clone()));
                        }
                        let ta = self.term(anchor, scope)?;
                        Some((d.clone(), ta))
                    }
                    None => None,
                };
                let tv = self.fresh(var.name.clone());
                let tvar = TTerm::Var(var.name.clone(), tv);
                self.annotate(var, &tvar)?;
                if let Some((d, ta)) = &local {
                    let sorts: BTreeSet<SortId> = self.sig.sorts_with_locality(d).into_iter().collect();
                    if sorts.is_empty() {
                        return Err(FormulaError::Syntax { pos: var.pos, msg: format!("unknown locality element {d}") });
                    }
                    self.unify_terms(&tvar, ta, d)?;
                    self.restrict(tv, &sorts, d)?;
                }
                scope.push((var.name.clone(), tv));
                let b = self.resolve(body, scope);
                scope.pop();
                TF::Quant { kind: *kind, var: (var.name.clone(), tv), local, body: Box::new(b?) }
            }
        })
    }

    fn restrict_term(&mut self, t: &TTerm, sorts: &BTreeSet<SortId>, ctx: &str) -> Result<(), FormulaError> {
        match t {
            TTerm::Var(_, v) => self.restrict(*v, sorts, ctx),
            TTerm::Const(c) => {
                if sorts.contains(&self.sig.constants()[*c].sort) {
                    Ok(())
                } else {
                    Err(self.sort_err(ctx, "constant of the wrong sort".into()))
                }
            }
        }
    }

    fn sort_of(&mut self, v: TyVar) -> Result<SortId, FormulaError> {
        let r = self.find(v);
        if let Some(s) = self.fixed[r] {
            return Ok(s);
        }
        let cands: Vec<SortId> = match &self.cands[r] {
            Some(c) => c.iter().copied().collect(),
            None => (0..self.sig.sorts().len()).collect(),
        };
        if cands.len() == 1 {
            return Ok(cands[0]);
        }
        Err(self.sort_err(&self.names[v].clone(), format!("cannot infer the sort of {}; annotate it", self.names[v])))
    }

    fn finish_term(&mut self, t: &TTerm) -> Result<Term, FormulaError> {
        Ok(match t {
            TTerm::Var(n, v) => Term::Var(Var::new(n.clone(), self.sort_of(*v)?)),
            TTerm::Const(c) => Term::Const(*c),
        })
    }

    fn finish(&mut self, f: &TF) -> Result<Formula, FormulaError> {
        Ok(match f {
            TF::Top => Formula::Top,
            TF::Bot => Formula::Bot,
            TF::Eq(a, b) => Formula::Equal(self.finish_term(a)?, self.finish_term(b)?),
            TF::Rel(r, args) => Formula::Atom {
                rel: Rel::Sym(*r),
                args: args.iter().map(|t| self.finish_term(t)).collect::<Result<_, _>>()?,
            },
            TF::Loc(d, a, b) => {
                let (a, b) = (self.finish_term(a)?, self.finish_term(b)?);
                let s = a.sort(self.sig);
                let di = self.sig.locality_index(s, d).expect("restricted to sorts with this element");
                Formula::loc(s, di, a, b)
            }
            TF::And(fs) => Formula::And(fs.iter().map(|g| self.finish(g)).collect::<Result<_, _>>()?),
            TF::Or(fs) => Formula::Or(fs.iter().map(|g| self.finish(g)).collect::<Result<_, _>>()?),
            TF::Not(g) => Formula::not(self.finish(g)?),
            TF::Quant { kind, var, local, body } => {
                let v = Var::new(var.0.clone(), self.sort_of(var.1)?);
                let b = self.finish(body)?;
                match (kind, local) {
                    (QKind::Exists, None) => Formula::exists(v, b),
                    (QKind::Forall, _) => Formula::forall(v, b),
                    (QKind::Exists, Some((d, anchor))) => {
                        let anchor = self.finish_term(anchor)?;
                        let di = self.sig.locality_index(v.sort, d).expect("restricted to sorts with this element");
                        Formula::exists_in(v, di, anchor, b)
                    }
                }
            }
        })
    }
}
