//! Homomorphisms, positive embeddings and positive closedness.
//!
//! Homomorphism search is a constraint search with forward checking: the
//! domain of each source element is a bit set over the target sort, pair
//! constraints are precomputed from every binary relation and locality
//! relation of the source, and the next element to assign is the one with
//! the smallest remaining domain (ties by sort then index).

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::eval::{all_tuples, definable_set, EvalError, Evaluator};
use crate::formula::{classify, enumerate_fragment, print, Formula, Fragment, Term, Var};
use crate::signature::{LocId, SignatureSpec, SortId};
use crate::structure::{check_locality_axioms, FiniteStructure, PairTable};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MorphismError {
    #[error("structures are over different signatures")]
    SignatureMismatch,
    #[error("bad pin: {0}")]
    BadPin(String),
    #[error("structure is not local: {0}")]
    NotLocal(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("retraction and formula checks disagree: {0}")]
    OracleDisagreement(String),
    #[error("element {0} is not isolated by any formula of the fragment")]
    NotIsolated(String),
}

/// Per-sort element maps.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Homomorphism {
    pub maps: Vec<Vec<usize>>,
}

impl Homomorphism {
    pub fn identity(m: &FiniteStructure) -> Self {
        Homomorphism { maps: (0..m.sig().sorts().len()).map(|s| (0..m.size(s)).collect()).collect() }
    }

    pub fn apply(&self, sort: SortId, e: usize) -> usize {
        self.maps[sort][e]
    }

    /// `g ∘ self`.
    pub fn then(&self, g: &Homomorphism) -> Homomorphism {
        Homomorphism {
            maps: self.maps.iter().enumerate().map(|(s, m)| m.iter().map(|&e| g.maps[s][e]).collect()).collect(),
        }
    }

    pub fn is_injective(&self) -> bool {
        self.maps.iter().all(|m| {
            let mut seen = std::collections::BTreeSet::new();
            m.iter().all(|e| seen.insert(*e))
        })
    }

    /// Map by labels, sort by sort.
    pub fn labels(&self, a: &FiniteStructure, b: &FiniteStructure) -> Vec<Vec<(String, String)>> {
        self.maps
            .iter()
            .enumerate()
            .map(|(s, m)| m.iter().enumerate().map(|(e, &t)| (a.label(s, e).into(), b.label(s, t).into())).collect())
            .collect()
    }
}

/// Direct check that `h` preserves constants, relations and locality.
pub fn is_homomorphism(a: &FiniteStructure, b: &FiniteStructure, h: &Homomorphism) -> bool {
    let sig = a.sig();
    if h.maps.len() != sig.sorts().len() || (0..sig.sorts().len()).any(|s| h.maps[s].len() != a.size(s)) {
        return false;
    }
    if h.maps.iter().enumerate().any(|(s, m)| m.iter().any(|&e| e >= b.size(s))) {
        return false;
    }
    for (c, sym) in sig.constants().iter().enumerate() {
        if h.apply(sym.sort, a.constant(c)) != b.constant(c) {
            return false;
        }
    }
    for (r, sym) in sig.relations().iter().enumerate() {
        for t in a.tuples(r) {
            let image: Vec<usize> = t.iter().zip(&sym.profile).map(|(&e, &s)| h.apply(s, e)).collect();
            if !b.holds(r, &image) {
                return false;
            }
        }
    }
    for s in 0..sig.sorts().len() {
        for d in 0..sig.monoid(s).len() {
            if a.loc(s, d).pairs().any(|(x, y)| !b.related(s, d, h.apply(s, x), h.apply(s, y))) {
                return false;
            }
        }
    }
    true
}

struct Csp<'a> {
    a: &'a FiniteStructure,
    b: &'a FiniteStructure,
    /// First variable of each sort.
    offset: Vec<usize>,
    var_sort: Vec<SortId>,
    words: Vec<usize>,
    /// Constraints `(other, table)` with `h(other) ∈ table.row(h(var))`.
    cons: Vec<Vec<(usize, Arc<PairTable>)>>,
    injective: bool,
    limit: Option<usize>,
    out: Vec<Homomorphism>,
}

fn bit_count(words: &[u64]) -> u32 {
    words.iter().map(|w| w.count_ones()).sum()
}

fn bits(words: &[u64]) -> impl Iterator<Item = usize> + '_ {
    words.iter().enumerate().flat_map(|(i, &w)| (0..64).filter(move |k| w >> k & 1 == 1).map(move |k| i * 64 + k))
}

impl<'a> Csp<'a> {
    fn new(a: &'a FiniteStructure, b: &'a FiniteStructure, injective: bool, limit: Option<usize>) -> Self {
        let sig = a.sig();
        let nsorts = sig.sorts().len();
        let mut offset = Vec::with_capacity(nsorts);
        let mut var_sort = Vec::new();
        for s in 0..nsorts {
            offset.push(var_sort.len());
            var_sort.extend(std::iter::repeat_n(s, a.size(s)));
        }
        let words = var_sort.iter().map(|&s| b.size(s).div_ceil(64).max(1)).collect();
        Csp {
            a,
            b,
            offset,
            cons: vec![Vec::new(); var_sort.len()],
            var_sort,
            words,
            injective,
            limit,
            out: Vec::new(),
        }
    }

    fn var(&self, s: SortId, e: usize) -> usize {
        self.offset[s] + e
    }

    /// Initial domains, or `None` if some element has nowhere to go.
    fn domains(&mut self, pins: &[(SortId, usize, usize)]) -> Option<Vec<Vec<u64>>> {
        let (a, b) = (self.a, self.b);
        let sig = a.sig();
        let n = self.var_sort.len();
        let mut dom: Vec<Vec<u64>> = (0..n)
            .map(|v| {
                let size = b.size(self.var_sort[v]);
                let mut w = vec![0u64; self.words[v]];
                for x in 0..size {
                    w[x / 64] |= 1 << (x % 64);
                }
                w
            })
            .collect();
        let restrict = |dom: &mut Vec<Vec<u64>>, v: usize, keep: &dyn Fn(usize) -> bool| {
            for x in bits(&dom[v].clone()).collect::<Vec<_>>() {
                if !keep(x) {
                    dom[v][x / 64] &= !(1 << (x % 64));
                }
            }
        };
        for &(s, e, t) in pins {
            let v = self.var(s, e);
            restrict(&mut dom, v, &|x| x == t);
        }
        for (c, sym) in sig.constants().iter().enumerate() {
            let v = self.var(sym.sort, a.constant(c));
            let t = b.constant(c);
            restrict(&mut dom, v, &|x| x == t);
        }
        // nullary relations and unary restrictions
        for (r, sym) in sig.relations().iter().enumerate() {
            match sym.profile.len() {
                0 => {
                    if a.holds(r, &[]) && !b.holds(r, &[]) {
                        return None;
                    }
                }
                1 => {
                    for t in a.tuples(r) {
                        let v = self.var(sym.profile[0], t[0]);
                        restrict(&mut dom, v, &|x| b.holds(r, &[x]));
                    }
                }
                _ => {}
            }
        }
        // reflexive locality pairs and pair constraints
        let mut pair_rels: HashMap<(usize, usize), Vec<(bool, Option<usize>, SortId, LocId)>> = HashMap::new();
        for s in 0..sig.sorts().len() {
            for d in 0..sig.monoid(s).len() {
                for (x, y) in a.loc(s, d).pairs() {
                    if x == y {
                        let v = self.var(s, x);
                        restrict(&mut dom, v, &|t| b.related(s, d, t, t));
                    } else {
                        pair_rels.entry((self.var(s, x), self.var(s, y))).or_default().push((true, None, s, d));
                    }
                }
            }
        }
        for (r, sym) in sig.relations().iter().enumerate() {
            if sym.profile.len() == 2 {
                for t in a.tuples(r) {
                    let (u, v) = (self.var(sym.profile[0], t[0]), self.var(sym.profile[1], t[1]));
                    if u == v {
                        restrict(&mut dom, u, &|x| b.holds(r, &[x, x]));
                    } else {
                        pair_rels.entry((u, v)).or_default().push((false, Some(r), 0, 0));
                    }
                }
            }
        }
        if dom.iter().any(|d| bit_count(d) == 0) {
            return None;
        }
        let mut cache: HashMap<(usize, usize, Vec<(bool, Option<usize>, SortId, LocId)>), Arc<PairTable>> =
            HashMap::new();
        let mut keys: Vec<_> = pair_rels.into_iter().collect();
        keys.sort();
        for ((u, v), mut rels) in keys {
            rels.sort();
            let (su, sv) = (self.var_sort[u], self.var_sort[v]);
            let table = cache
                .entry((su, sv, rels.clone()))
                .or_insert_with(|| {
                    Arc::new(PairTable::from_fn(b.size(su), b.size(sv), |x, y| {
                        rels.iter().all(|&(is_loc, r, s, d)| if is_loc { b.related(s, d, x, y) } else { b.holds(r.unwrap(), &[x, y]) })
                    }))
                })
                .clone();
            let transposed = Arc::new(PairTable::from_fn(b.size(sv), b.size(su), |y, x| table.contains(x, y)));
            self.cons[u].push((v, table));
            self.cons[v].push((u, transposed));
        }
        Some(dom)
    }

    fn nary_ok(&self, assign: &[usize]) -> bool {
        let sig = self.a.sig();
        sig.relations().iter().enumerate().filter(|(_, s)| s.profile.len() > 2).all(|(r, sym)| {
            self.a.tuples(r).iter().all(|t| {
                let img: Vec<usize> =
                    t.iter().zip(&sym.profile).map(|(&e, &s)| assign[self.var(s, e)]).collect();
                self.b.holds(r, &img)
            })
        })
    }

    fn done(&self) -> bool {
        self.limit.is_some_and(|l| self.out.len() >= l)
    }

    fn search(&mut self, dom: &mut Vec<Vec<u64>>, assign: &mut Vec<usize>) {
        if self.done() {
            return;
        }
        let next = (0..assign.len())
            .filter(|&v| assign[v] == usize::MAX)
            .min_by_key(|&v| (bit_count(&dom[v]), v));
        let Some(v) = next else {
            if self.nary_ok(assign) {
                let nsorts = self.offset.len();
                let maps = (0..nsorts)
                    .map(|s| (0..self.a.size(s)).map(|e| assign[self.var(s, e)]).collect())
                    .collect();
                self.out.push(Homomorphism { maps });
            }
            return;
        };
        let values: Vec<usize> = bits(&dom[v]).collect();
        let cons = self.cons[v].clone();
        for x in values {
            let mut trail: Vec<(usize, Vec<u64>)> = Vec::new();
            let mut ok = true;
            for (u, table) in &cons {
                if assign[*u] != usize::MAX {
                    continue;
                }
                let row = table.row_words(x);
                let before = dom[*u].clone();
                for (w, r) in dom[*u].iter_mut().zip(row) {
                    *w &= r;
                }
                if dom[*u] != before {
                    trail.push((*u, before));
                }
                if bit_count(&dom[*u]) == 0 {
                    ok = false;
                    break;
                }
            }
            if ok && self.injective {
                let s = self.var_sort[v];
                for u in self.offset[s]..self.offset[s] + self.a.size(s) {
                    if assign[u] == usize::MAX && u != v && dom[u][x / 64] >> (x % 64) & 1 == 1 {
                        trail.push((u, dom[u].clone()));
                        dom[u][x / 64] &= !(1 << (x % 64));
                        if bit_count(&dom[u]) == 0 {
                            ok = false;
                            break;
                        }
                    }
                }
            }
            if ok {
                assign[v] = x;
                self.search(dom, assign);
                assign[v] = usize::MAX;
            }
            for (u, before) in trail.into_iter().rev() {
                dom[u] = before;
            }
            if self.done() {
                return;
            }
        }
    }
}

fn same_signature(a: &FiniteStructure, b: &FiniteStructure) -> Result<(), MorphismError> {
    if a.sig() != b.sig() {
        return Err(MorphismError::SignatureMismatch);
    }
    Ok(())
}

fn run_search(
    a: &FiniteStructure,
    b: &FiniteStructure,
    pins: &[(SortId, usize, usize)],
    limit: Option<usize>,
    injective: bool,
) -> Result<Vec<Homomorphism>, MorphismError> {
    same_signature(a, b)?;
    for &(s, e, t) in pins {
        if s >= a.sig().sorts().len() || e >= a.size(s) || t >= b.size(s) {
            return Err(MorphismError::BadPin(format!("sort {s}: {e} -> {t}")));
        }
    }
    if limit == Some(0) {
        return Ok(vec![]);
    }
    let mut csp = Csp::new(a, b, injective, limit);
    let Some(mut dom) = csp.domains(pins) else { return Ok(vec![]) };
    let mut assign = vec![usize::MAX; csp.var_sort.len()];
    csp.search(&mut dom, &mut assign);
    Ok(csp.out)
}

/// All homomorphisms `a → b` extending `pins` (`(sort, source, target)`),
/// or the first `limit` of them, in search order.
pub fn find_homomorphisms(
    a: &FiniteStructure,
    b: &FiniteStructure,
    pins: &[(SortId, usize, usize)],
    limit: Option<usize>,
) -> Result<Vec<Homomorphism>, MorphismError> {
    run_search(a, b, pins, limit, false)
}

/// Injective homomorphisms only.
pub fn find_injective_homomorphisms(
    a: &FiniteStructure,
    b: &FiniteStructure,
    pins: &[(SortId, usize, usize)],
    limit: Option<usize>,
) -> Result<Vec<Homomorphism>, MorphismError> {
    run_search(a, b, pins, limit, true)
}

/// A bijective homomorphism whose inverse is also a homomorphism.
pub fn find_isomorphism(a: &FiniteStructure, b: &FiniteStructure) -> Result<Option<Homomorphism>, MorphismError> {
    same_signature(a, b)?;
    if (0..a.sig().sorts().len()).any(|s| a.size(s) != b.size(s)) {
        return Ok(None);
    }
    for h in find_injective_homomorphisms(a, b, &[], None)? {
        let inv = Homomorphism {
            maps: h
                .maps
                .iter()
                .map(|m| {
                    let mut inv = vec![0; m.len()];
                    for (e, &t) in m.iter().enumerate() {
                        inv[t] = e;
                    }
                    inv
                })
                .collect(),
        };
        if is_homomorphism(b, a, &inv) {
            return Ok(Some(h));
        }
    }
    Ok(None)
}

/// Free variables `x0, x1, …` per sort (prefixed by the sort name when
/// there is more than one sort).
pub fn context_vars(sig: &SignatureSpec, per_sort: usize) -> Vec<Var> {
    let multi = sig.sorts().len() > 1;
    (0..sig.sorts().len())
        .flat_map(|s| {
            (0..per_sort).map(move |i| {
                let name = if multi { format!("{}_x{i}", sig.sorts()[s]) } else { format!("x{i}") };
                Var::new(name, s)
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum DiagAtom {
    Rel(usize, [Option<(SortId, usize)>; 2], usize),
    Loc(SortId, LocId, usize, usize),
    /// Two source elements with the same image.
    Same(SortId, usize, usize),
}

/// The positive diagram of `b` over the image of `h`, as a primitive
/// positive formula in variables for the elements of `a`.
#[derive(Debug, Clone)]
pub struct Diagram {
    sorts: usize,
    /// For each target element, a source element mapping to it.
    rep: Vec<Vec<Option<usize>>>,
    atoms: Vec<DiagAtom>,
    nary: Vec<(usize, Vec<(SortId, usize)>)>,
}

fn xvar(sig: &SignatureSpec, s: SortId, e: usize) -> Var {
    Var::new(format!("a{}_{e}", if sig.sorts().len() > 1 { sig.sorts()[s].as_str() } else { "" }), s)
}

fn yvar(sig: &SignatureSpec, s: SortId, e: usize) -> Var {
    Var::new(format!("b{}_{e}", if sig.sorts().len() > 1 { sig.sorts()[s].as_str() } else { "" }), s)
}

impl Diagram {
    pub fn new(a: &FiniteStructure, b: &FiniteStructure, h: &Homomorphism) -> Self {
        let sig = b.sig();
        let ns = sig.sorts().len();
        let mut rep = vec![Vec::new(); ns];
        let mut atoms = Vec::new();
        for s in 0..ns {
            rep[s] = vec![None; b.size(s)];
            for e in 0..a.size(s) {
                let t = h.apply(s, e);
                match rep[s][t] {
                    None => rep[s][t] = Some(e),
                    Some(first) => atoms.push(DiagAtom::Same(s, first, e)),
                }
            }
        }
        let mut nary = Vec::new();
        for (r, sym) in sig.relations().iter().enumerate() {
            for t in b.tuples(r) {
                match sym.profile.len() {
                    1 => atoms.push(DiagAtom::Rel(r, [Some((sym.profile[0], t[0])), None], 1)),
                    2 => atoms.push(DiagAtom::Rel(
                        r,
                        [Some((sym.profile[0], t[0])), Some((sym.profile[1], t[1]))],
                        2,
                    )),
                    _ => nary.push((r, t.iter().zip(&sym.profile).map(|(&e, &s)| (s, e)).collect())),
                }
            }
        }
        for s in 0..ns {
            let mon = sig.monoid(s);
            for x in 0..b.size(s) {
                for y in 0..b.size(s) {
                    let holding: Vec<LocId> = (0..mon.len()).filter(|&d| b.related(s, d, x, y)).collect();
                    if x == y {
                        for &d in &holding {
                            if !mon.le(mon.identity(), d) {
                                atoms.push(DiagAtom::Loc(s, d, x, y));
                            }
                        }
                        continue;
                    }
                    // minimal relating elements; larger ones follow by monotonicity
                    for d in mon.minimal_where(|d| holding.contains(&d)) {
                        atoms.push(DiagAtom::Loc(s, d, x, y));
                    }
                }
            }
        }
        Diagram { sorts: ns, rep, atoms, nary }
    }

    fn term(&self, sig: &SignatureSpec, s: SortId, b: usize) -> Term {
        match self.rep[s][b] {
            Some(a) => Term::Var(xvar(sig, s, a)),
            None => Term::Var(yvar(sig, s, b)),
        }
    }

    fn atom_formula(&self, sig: &SignatureSpec, atom: &DiagAtom) -> Formula {
        match *atom {
            DiagAtom::Rel(r, args, k) => Formula::atom(
                r,
                args[..k].iter().map(|a| {
                    let (s, b) = a.unwrap();
                    self.term(sig, s, b)
                }).collect(),
            ),
            DiagAtom::Loc(s, d, x, y) => Formula::loc(s, d, self.term(sig, s, x), self.term(sig, s, y)),
            DiagAtom::Same(s, a1, a2) => Formula::eq(Term::Var(xvar(sig, s, a1)), Term::Var(xvar(sig, s, a2))),
        }
    }

    /// The formula built from the selected atoms (all when `keep` is `None`).
    fn formula_from(&self, sig: &SignatureSpec, keep: &[bool]) -> Formula {
        let mut parts: Vec<Formula> =
            self.atoms.iter().zip(keep).filter(|(_, &k)| k).map(|(a, _)| self.atom_formula(sig, a)).collect();
        parts.extend(self.nary.iter().map(|(r, args)| {
            Formula::atom(*r, args.iter().map(|&(s, b)| self.term(sig, s, b)).collect())
        }));
        let body = Formula::and(parts);
        let fv = body.free_variables();
        let mut bound = Vec::new();
        for s in 0..self.sorts {
            for b in 0..self.rep[s].len() {
                let y = yvar(sig, s, b);
                if self.rep[s][b].is_none() && fv.contains(&y) {
                    bound.push(y);
                }
            }
        }
        Formula::exists_many(bound, body)
    }

    pub fn formula(&self, sig: &SignatureSpec) -> Formula {
        self.formula_from(sig, &vec![true; self.atoms.len()])
    }

    fn mentions(&self, atom: &DiagAtom, s: SortId, b: usize) -> bool {
        match *atom {
            DiagAtom::Rel(_, args, _) => args.iter().flatten().any(|&(t, e)| t == s && e == b),
            DiagAtom::Loc(t, _, x, y) => t == s && (x == b || y == b),
            DiagAtom::Same(t, a1, a2) => t == s && (self.rep[s][b] == Some(a1) || self.rep[s][b] == Some(a2)),
        }
    }
}

/// Free variables of `f` with their elements under the identity reading
/// of diagram variables.
fn diagram_tuple(a: &FiniteStructure, f: &Formula) -> (Vec<Var>, Vec<usize>) {
    let sig = a.sig();
    let mut vars = Vec::new();
    let mut vals = Vec::new();
    for v in f.free_variables() {
        let e = (0..a.size(v.sort)).find(|&e| xvar(sig, v.sort, e) == v).expect("diagram variable");
        vars.push(v);
        vals.push(e);
    }
    (vars, vals)
}

fn holds_at(m: &FiniteStructure, f: &Formula, vars: &[Var], vals: &[usize]) -> Result<bool, EvalError> {
    Ok(Evaluator::new(m, f, vars)?.eval(vals))
}

/// How a positive embedding is decided.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EmbeddingMode {
    /// A homomorphism back whose composite is the identity.
    Retraction,
    /// Evaluation of the target's positive diagram in the source.
    Diagram,
    /// Reflection of every positive formula in the fragment, plus the
    /// target's positive diagram when `with_diagram` is set.
    Fragment { frag: Fragment, with_diagram: bool },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EmbeddingCertificate {
    Retraction(Homomorphism),
    /// `target ⊨ formula(h(tuple))` but `source ⊭ formula(tuple)`.
    Violation { formula: Formula, vars: Vec<Var>, tuple: Vec<usize> },
    /// No violation among the checked formulas.
    Reflected { checked: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmbeddingVerdict {
    pub positive: bool,
    pub certificate: EmbeddingCertificate,
}

/// First fragment formula violating reflection along `h`.
fn fragment_violation(
    a: &FiniteStructure,
    b: &FiniteStructure,
    h: &Homomorphism,
    frag: &Fragment,
) -> Result<(Option<(Formula, Vec<Var>, Vec<usize>)>, usize), MorphismError> {
    let sig = a.sig();
    let ctx = context_vars(sig, frag.max_free_per_sort);
    let formulas: Vec<Formula> =
        enumerate_fragment(sig, frag, &ctx).into_iter().filter(|f| classify(f, sig).positive).collect();
    let checked = formulas.len();
    let found: Result<Vec<Option<(Formula, Vec<Var>, Vec<usize>)>>, EvalError> = formulas
        .par_iter()
        .map(|f| {
            let fv: Vec<Var> = f.free_variables().into_iter().collect();
            let mut ea = Evaluator::new(a, f, &fv)?;
            let mut eb = Evaluator::new(b, f, &fv)?;
            for t in all_tuples(a, &fv) {
                let image: Vec<usize> = fv.iter().zip(&t).map(|(v, &e)| h.apply(v.sort, e)).collect();
                if eb.eval(&image) && !ea.eval(&t) {
                    return Ok(Some((f.clone(), fv.clone(), t)));
                }
            }
            Ok(None)
        })
        .collect();
    Ok((found?.into_iter().flatten().next(), checked))
}

/// Shrinks a failing diagram: first whole target elements, then single atoms,
/// keeping `source ⊭ φ(tuple)` throughout.
fn minimized_diagram(a: &FiniteStructure, b: &FiniteStructure, diag: &Diagram) -> Result<Formula, EvalError> {
    let sig = b.sig();
    let fails = |keep: &[bool]| -> Result<bool, EvalError> {
        let f = diag.formula_from(sig, keep);
        let (vars, vals) = diagram_tuple(a, &f);
        Ok(!holds_at(a, &f, &vars, &vals)?)
    };
    let mut keep = vec![true; diag.atoms.len()];
    let mut order: Vec<(bool, SortId, usize)> = Vec::new();
    for s in 0..diag.sorts {
        for e in 0..b.size(s) {
            order.push((diag.rep[s][e].is_some(), s, e));
        }
    }
    order.sort();
    for (_, s, e) in order {
        let trial: Vec<bool> =
            keep.iter().zip(&diag.atoms).map(|(&k, atom)| k && !diag.mentions(atom, s, e)).collect();
        if trial != keep && fails(&trial)? {
            keep = trial;
        }
    }
    for i in 0..keep.len() {
        if keep[i] {
            keep[i] = false;
            if !fails(&keep)? {
                keep[i] = true;
            }
        }
    }
    Ok(diag.formula_from(sig, &keep))
}

/// Whether `h: a → b` reflects positive formulas.
pub fn is_positive_embedding(
    a: &FiniteStructure,
    b: &FiniteStructure,
    h: &Homomorphism,
    mode: &EmbeddingMode,
) -> Result<EmbeddingVerdict, MorphismError> {
    same_signature(a, b)?;
    match mode {
        EmbeddingMode::Retraction => {
            let mut pins = Vec::new();
            for (s, m) in h.maps.iter().enumerate() {
                for (e, &t) in m.iter().enumerate() {
                    if pins.iter().any(|&(ps, pt, pe)| ps == s && pt == t && pe != e) {
                        return Ok(EmbeddingVerdict {
                            positive: false,
                            certificate: diagram_violation(a, b, h)?,
                        });
                    }
                    pins.push((s, t, e));
                }
            }
            match find_homomorphisms(b, a, &pins, Some(1))?.pop() {
                Some(r) => Ok(EmbeddingVerdict { positive: true, certificate: EmbeddingCertificate::Retraction(r) }),
                None => Ok(EmbeddingVerdict { positive: false, certificate: diagram_violation(a, b, h)? }),
            }
        }
        EmbeddingMode::Diagram => {
            let diag = Diagram::new(a, b, h);
            let f = diag.formula(b.sig());
            let (vars, vals) = diagram_tuple(a, &f);
            if holds_at(a, &f, &vars, &vals)? {
                Ok(EmbeddingVerdict { positive: true, certificate: EmbeddingCertificate::Reflected { checked: 1 } })
            } else {
                Ok(EmbeddingVerdict { positive: false, certificate: diagram_violation(a, b, h)? })
            }
        }
        EmbeddingMode::Fragment { frag, with_diagram } => {
            let (found, mut checked) = fragment_violation(a, b, h, frag)?;
            if let Some((formula, vars, tuple)) = found {
                return Ok(EmbeddingVerdict {
                    positive: false,
                    certificate: EmbeddingCertificate::Violation { formula, vars, tuple },
                });
            }
            if *with_diagram {
                checked += 1;
                let diag = Diagram::new(a, b, h);
                let f = diag.formula(b.sig());
                let (vars, vals) = diagram_tuple(a, &f);
                if !holds_at(a, &f, &vars, &vals)? {
                    return Ok(EmbeddingVerdict { positive: false, certificate: diagram_violation(a, b, h)? });
                }
            }
            Ok(EmbeddingVerdict { positive: true, certificate: EmbeddingCertificate::Reflected { checked } })
        }
    }
}

fn diagram_violation(
    a: &FiniteStructure,
    b: &FiniteStructure,
    h: &Homomorphism,
) -> Result<EmbeddingCertificate, MorphismError> {
    let diag = Diagram::new(a, b, h);
    let formula = minimized_diagram(a, b, &diag)?;
    let (vars, tuple) = diagram_tuple(a, &formula);
    Ok(EmbeddingCertificate::Violation { formula, vars, tuple })
}

/// A hom into a catalogue member that is not a positive embedding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PcWitness {
    pub target: usize,
    pub hom: Homomorphism,
    pub formula: Formula,
    pub vars: Vec<Var>,
    pub tuple: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PcVerdict {
    Yes { homs_checked: usize },
    No(PcWitness),
}

impl PcVerdict {
    pub fn is_yes(&self) -> bool {
        matches!(self, PcVerdict::Yes { .. })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PcReport {
    pub verdict: &'static str,
    pub homs_checked: Option<usize>,
    pub target: Option<usize>,
    pub hom: Option<Vec<Vec<(String, String)>>>,
    pub formula: Option<String>,
    pub tuple: Option<Vec<(String, String)>>,
}

impl PcVerdict {
    pub fn report(&self, m: &FiniteStructure, catalogue: &[FiniteStructure]) -> PcReport {
        match self {
            PcVerdict::Yes { homs_checked } => PcReport {
                verdict: "yes",
                homs_checked: Some(*homs_checked),
                target: None,
                hom: None,
                formula: None,
                tuple: None,
            },
            PcVerdict::No(w) => PcReport {
                verdict: "no",
                homs_checked: None,
                target: Some(w.target),
                hom: Some(w.hom.labels(m, &catalogue[w.target])),
                formula: Some(print(&w.formula, m.sig())),
                tuple: Some(
                    w.vars.iter().zip(&w.tuple).map(|(v, &e)| (v.name.clone(), m.label(v.sort, e).to_string())).collect(),
                ),
            },
        }
    }
}

fn require_local(m: &FiniteStructure) -> Result<(), MorphismError> {
    let report = check_locality_axioms(m);
    match report.first_failure_among(&[1, 2, 3, 4, 5]) {
        Some(w) => Err(MorphismError::NotLocal(format!("{w:?}"))),
        None => Ok(()),
    }
}

/// Whether every hom from `m` into a catalogue member is a positive
/// embedding. Decided by retractions; when `frag` is given, each verdict is
/// cross-checked by formula reflection over the fragment and the diagram.
pub fn check_locally_positively_closed(
    m: &FiniteStructure,
    catalogue: &[FiniteStructure],
    frag: Option<&Fragment>,
) -> Result<PcVerdict, MorphismError> {
    require_local(m)?;
    let mut checked = 0;
    for (k, n) in catalogue.iter().enumerate() {
        require_local(n)?;
        same_signature(m, n)?;
        for h in find_homomorphisms(m, n, &[], None)? {
            checked += 1;
            let verdict = is_positive_embedding(m, n, &h, &EmbeddingMode::Retraction)?;
            if let Some(frag) = frag {
                let mode = EmbeddingMode::Fragment { frag: frag.clone(), with_diagram: true };
                let cross = is_positive_embedding(m, n, &h, &mode)?;
                if cross.positive != verdict.positive {
                    return Err(MorphismError::OracleDisagreement(format!("catalogue member {k}, hom {:?}", h.maps)));
                }
                if let (false, EmbeddingCertificate::Violation { formula, vars, tuple }) =
                    (cross.positive, &cross.certificate)
                {
                    return Ok(PcVerdict::No(PcWitness {
                        target: k,
                        hom: h,
                        formula: formula.clone(),
                        vars: vars.clone(),
                        tuple: tuple.clone(),
                    }));
                }
            }
            if let EmbeddingCertificate::Violation { formula, vars, tuple } = verdict.certificate {
                return Ok(PcVerdict::No(PcWitness { target: k, hom: h, formula, vars, tuple }));
            }
        }
    }
    Ok(PcVerdict::Yes { homs_checked: checked })
}

/// For each sort and element, a positive formula in one free variable that
/// holds of that element alone. Candidates are the fragment's formulas and
/// conjunctions of two of them.
pub fn isolation_certificate(m: &FiniteStructure, frag: &Fragment) -> Result<Vec<Vec<Formula>>, MorphismError> {
    require_local(m)?;
    let sig = m.sig();
    let mut out = Vec::new();
    for s in 0..sig.sorts().len() {
        let x = context_vars(sig, 1).into_iter().find(|v| v.sort == s).expect("one variable per sort");
        let n = m.size(s);
        if n == 1 {
            out.push(vec![Formula::Top]);
            continue;
        }
        let formulas: Vec<Formula> = enumerate_fragment(sig, &frag.clone().with_free(1), std::slice::from_ref(&x))
            .into_iter()
            .filter(|f| classify(f, sig).positive)
            .collect();
        let sets: Vec<Vec<bool>> = formulas
            .par_iter()
            .map(|f| {
                let set = definable_set(m, f, std::slice::from_ref(&x))?;
                let mut v = vec![false; n];
                for t in set {
                    v[t[0]] = true;
                }
                Ok(v)
            })
            .collect::<Result<_, EvalError>>()?;
        let mut per = Vec::with_capacity(n);
        for e in 0..n {
            let single = |v: &[bool]| v[e] && v.iter().filter(|&&b| b).count() == 1;
            let found = sets.iter().position(|v| single(v)).map(|i| formulas[i].clone()).or_else(|| {
                let holding: Vec<usize> = (0..sets.len()).filter(|&i| sets[i][e]).collect();
                holding.iter().enumerate().find_map(|(k, &i)| {
                    holding[k + 1..].iter().find_map(|&j| {
                        let both: Vec<bool> = sets[i].iter().zip(&sets[j]).map(|(p, q)| *p && *q).collect();
                        single(&both).then(|| Formula::and(vec![formulas[i].clone(), formulas[j].clone()]))
                    })
                })
            });
            match found {
                Some(f) => per.push(f),
                None => return Err(MorphismError::NotIsolated(m.label(s, e).to_string())),
            }
        }
        out.push(per);
    }
    Ok(out)
}

/// Whether `formula` holds at `h(tuple)` in `b` and fails at `tuple` in `a`.
pub fn violation_holds(
    a: &FiniteStructure,
    b: &FiniteStructure,
    h: &Homomorphism,
    formula: &Formula,
    vars: &[Var],
    tuple: &[usize],
) -> Result<bool, EvalError> {
    let image: Vec<usize> = vars.iter().zip(tuple).map(|(v, &e)| h.apply(v.sort, e)).collect();
    Ok(holds_at(b, formula, vars, &image)? && !holds_at(a, formula, vars, tuple)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::eval::eval;
    use crate::formula::{parse, ClassFilter};
    use crate::signature::LocalityMonoid;

    /// Every map `a → b`, filtered by the direct homomorphism check.
    fn brute_force(a: &FiniteStructure, b: &FiniteStructure) -> Vec<Homomorphism> {
        assert_eq!(a.sig().sorts().len(), 1);
        let (n, k) = (a.size(0), b.size(0));
        let mut out = Vec::new();
        let mut cur = vec![0usize; n];
        loop {
            let h = Homomorphism { maps: vec![cur.clone()] };
            if is_homomorphism(a, b, &h) {
                out.push(h);
            }
            let mut i = n;
            loop {
                if i == 0 {
                    out.sort();
                    return out;
                }
                i -= 1;
                cur[i] += 1;
                if cur[i] < k {
                    break;
                }
                cur[i] = 0;
            }
        }
    }

    fn sorted(mut v: Vec<Homomorphism>) -> Vec<Homomorphism> {
        v.sort();
        v
    }

    #[test]
    fn search_matches_brute_force() {
        let pairs = [
            (corpus::z(2), corpus::i_point(2)),
            (corpus::i_point(2), corpus::z(2)),
            (corpus::c_scaled(1, 2), corpus::z(2)),
            (corpus::segment(0, 2, 2), corpus::z(2)),
            (corpus::z(2), corpus::z(2)),
        ];
        for (a, b) in &pairs {
            assert_eq!(sorted(find_homomorphisms(a, b, &[], None).unwrap()), brute_force(a, b));
        }
    }

    /// A constant-free structure with no unary predicates except P0 on all.
    fn plain_path(n: usize, cap: usize) -> FiniteStructure {
        let sig = Arc::new(SignatureSpec::one_sorted("s", &[("E", 2)], &[], LocalityMonoid::saturating(cap)).unwrap());
        let mut m = FiniteStructure::new(sig, vec![(0..n).map(|i| i.to_string()).collect()]).unwrap();
        for i in 0..n.saturating_sub(1) {
            m.add_tuple_named("E", &[&i.to_string(), &(i + 1).to_string()]).unwrap();
        }
        for d in 1..=cap {
            m.set_locality(0, d, PairTable::full(n, n)).unwrap();
        }
        m
    }

    #[test]
    fn binary_relations_and_limits() {
        let a = plain_path(3, 1);
        let b = plain_path(4, 1);
        let all = find_homomorphisms(&a, &b, &[], None).unwrap();
        assert_eq!(sorted(all.clone()), brute_force(&a, &b));
        assert_eq!(all.len(), 2);
        assert_eq!(find_homomorphisms(&a, &b, &[], Some(1)).unwrap(), all[..1].to_vec());
        let pinned = find_homomorphisms(&a, &b, &[(0, 0, 1)], None).unwrap();
        assert_eq!(pinned, vec![Homomorphism { maps: vec![vec![1, 2, 3]] }]);
        assert!(find_homomorphisms(&b, &a, &[], None).unwrap().is_empty());
    }

    #[test]
    fn identity_pins() {
        let z = corpus::z(3);
        let pins: Vec<_> = (0..7).map(|e| (0, e, e)).collect();
        assert_eq!(find_homomorphisms(&z, &z, &pins, None).unwrap(), vec![Homomorphism::identity(&z)]);
    }

    #[test]
    fn mismatched_signatures() {
        assert_eq!(
            find_homomorphisms(&corpus::z(2), &corpus::z(3), &[], None),
            Err(MorphismError::SignatureMismatch)
        );
    }

    #[test]
    fn identity_is_positive_embedding() {
        let z = corpus::z(3);
        let id = Homomorphism::identity(&z);
        let v = is_positive_embedding(&z, &z, &id, &EmbeddingMode::Retraction).unwrap();
        assert_eq!(v, EmbeddingVerdict { positive: true, certificate: EmbeddingCertificate::Retraction(id.clone()) });
        assert!(is_positive_embedding(&z, &z, &id, &EmbeddingMode::Diagram).unwrap().positive);
    }

    #[test]
    fn inclusion_of_smaller_interval() {
        let (a, b) = (corpus::c_scaled(1, 2), corpus::z(2));
        let frag = Fragment::new(1, 2, ClassFilter::Positive).with_atoms(2).with_free(1);
        for h in find_homomorphisms(&a, &b, &[], None).unwrap() {
            let r = is_positive_embedding(&a, &b, &h, &EmbeddingMode::Retraction).unwrap();
            let f = is_positive_embedding(&a, &b, &h, &EmbeddingMode::Fragment { frag: frag.clone(), with_diagram: true })
                .unwrap();
            assert_eq!(r.positive, f.positive);
            assert!(!r.positive);
            let EmbeddingCertificate::Violation { formula, vars, tuple } = r.certificate else { panic!() };
            assert!(violation_holds(&a, &b, &h, &formula, &vars, &tuple).unwrap());
        }
    }

    #[test]
    fn collapse_to_point_is_not_positive() {
        // drop the Q predicates so that the interval maps onto the point
        let a = corpus::segment(0, 2, 2);
        let i = corpus::i_point(2);
        let homs = find_homomorphisms(&a, &i, &[], None).unwrap();
        assert!(homs.is_empty(), "0 satisfies Q0 and the point does not");
        let homs = find_homomorphisms(&corpus::segment(1, 2, 2), &i, &[], None).unwrap();
        assert_eq!(homs.len(), 1);
        let v = is_positive_embedding(&corpus::segment(1, 2, 2), &i, &homs[0], &EmbeddingMode::Retraction).unwrap();
        assert!(!v.positive);
        let EmbeddingCertificate::Violation { formula, vars, tuple } = v.certificate else { panic!() };
        assert!(violation_holds(&corpus::segment(1, 2, 2), &i, &homs[0], &formula, &vars, &tuple).unwrap());
    }

    #[test]
    fn segment_is_not_pc_in_window() {
        let seg = corpus::segment(0, 4, 10);
        let z = corpus::z(10);
        let v = check_locally_positively_closed(&seg, std::slice::from_ref(&z), None).unwrap();
        let PcVerdict::No(w) = v else { panic!("{v:?}") };
        assert!(is_homomorphism(&seg, &z, &w.hom));
        assert!(violation_holds(&seg, &z, &w.hom, &w.formula, &w.vars, &w.tuple).unwrap());
        assert!(w.formula.atom_count() <= 2, "{}", print(&w.formula, z.sig()));
    }

    #[test]
    fn singleton_is_pc_for_itself() {
        let i = corpus::i_point(3);
        assert_eq!(
            check_locally_positively_closed(&i, std::slice::from_ref(&i), None).unwrap(),
            PcVerdict::Yes { homs_checked: 1 }
        );
    }

    #[test]
    fn hamming_isolation() {
        let h = corpus::hamming(3);
        let frag = Fragment::new(0, 3, ClassFilter::QfPositive).with_atoms(3);
        let certs = isolation_certificate(&h, &frag).unwrap();
        for (e, f) in certs[0].iter().enumerate() {
            let x = f.free_variables().into_iter().next().unwrap();
            assert_eq!(definable_set(&h, f, &[x]).unwrap(), vec![vec![e]]);
        }
        // the conjunction of P_i / Q_i literals read off the label isolates it
        for (e, label) in h.universe(0).iter().enumerate() {
            let text: Vec<String> = label
                .chars()
                .enumerate()
                .map(|(i, c)| if c == '1' { format!("P{i}(x)") } else { format!("Q{i}(x)") })
                .collect();
            let f = parse(&text.join(" & "), h.sig()).unwrap();
            assert_eq!(definable_set(&h, &f, &[Var::new("x", 0)]).unwrap(), vec![vec![e]]);
        }
    }

    #[test]
    fn interval_isolation() {
        let z = corpus::z(3);
        let frag = Fragment::new(1, 1, ClassFilter::LocalPositive).with_free(1);
        let certs = isolation_certificate(&z, &frag).unwrap();
        for (e, f) in certs[0].iter().enumerate() {
            let fv: Vec<Var> = f.free_variables().into_iter().collect();
            assert_eq!(definable_set(&z, f, &fv).unwrap(), vec![vec![e]]);
        }
        let i = corpus::i_point(3);
        assert_eq!(isolation_certificate(&i, &frag).unwrap(), vec![vec![Formula::Top]]);
    }

    #[test]
    fn isomorphism_of_copies() {
        let a = corpus::c_scaled(2, 3);
        let b = corpus::c_scaled(2, 3);
        assert_eq!(find_isomorphism(&a, &b).unwrap(), Some(Homomorphism::identity(&a)));
        assert_eq!(find_isomorphism(&a, &corpus::c_scaled(1, 3)).unwrap(), None);
    }

    #[test]
    fn diagram_formula_holds_in_target() {
        let (a, b) = (corpus::c_scaled(1, 2), corpus::z(2));
        let h = find_homomorphisms(&a, &b, &[], Some(1)).unwrap().remove(0);
        let f = Diagram::new(&a, &b, &h).formula(b.sig());
        let (vars, vals) = diagram_tuple(&a, &f);
        let image: Vec<usize> = vars.iter().zip(&vals).map(|(v, &e)| h.apply(v.sort, e)).collect();
        let env = crate::eval::Environment::from_tuple(&vars, &image);
        assert!(eval(&b, &f, &env).unwrap());
        assert!(classify(&f, b.sig()).primitive_positive);
    }
}
