//! Irreducibility, joint continuation, comparison of negative theories and
//! the completeness hierarchy.

use std::collections::BTreeMap;

use super::{
    bits_any, bits_iter, locally_entails, positive_part_membership, Bits, Profiles, TheoryError, TheoryMode,
    TheorySpec,
};
use crate::eval::holds;
use crate::formula::{classify, enumerate_fragment, Formula, Fragment, Term, Var};
use crate::morphism::{check_locally_positively_closed, find_homomorphisms, Homomorphism};
use crate::signature::{LocId, SignatureSpec};
use crate::structure::{check_locality_axioms, FiniteStructure};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IrreducibilityMode {
    /// Jointly realizable anywhere.
    Plain,
    /// Jointly realizable within the given locality element of each sort.
    Uniform(Vec<LocId>),
    /// `Uniform` for every choice of locality elements.
    UniformSearch,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UniformResult {
    pub d: Vec<LocId>,
    pub holds: bool,
    pub certificate: Option<(Formula, Formula)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IrreducibilityReport {
    pub holds: bool,
    /// Fragment formulas consistent with the theory.
    pub formulas: usize,
    /// Classes of those formulas with the same satisfying sets.
    pub classes: usize,
    /// For the two uniform modes, one entry per choice of elements.
    pub per_d: Vec<UniformResult>,
    /// A failing pair `(∃x φ, ∃y ψ)` for the plain or fixed mode, or for the
    /// first choice in search mode.
    pub certificate: Option<(Formula, Formula)>,
    /// Memberships were decided exactly rather than up to the size bound.
    pub complete: bool,
}

/// One variable per sort, `prefix` alone when the signature has one sort.
pub(crate) fn sort_vars(sig: &SignatureSpec, prefix: &str) -> Vec<Var> {
    let n = sig.sorts().len();
    (0..n)
        .map(|s| if n == 1 { Var::new(prefix, s) } else { Var::new(format!("{prefix}_{}", sig.sorts()[s]), s) })
        .collect()
}

fn rename(f: &Formula, from: &[Var], to: &[Var]) -> Formula {
    from.iter().zip(to).fold(f.clone(), |acc, (a, b)| acc.substitute(a, &Term::Var(b.clone())))
}

fn loc_atoms(xs: &[Var], ys: &[Var], d: &[LocId]) -> Vec<Formula> {
    xs.iter()
        .zip(ys)
        .zip(d)
        .map(|((x, y), &d)| Formula::loc(x.sort, d, Term::Var(x.clone()), Term::Var(y.clone())))
        .collect()
}

fn loc_tuples(sig: &SignatureSpec) -> Vec<Vec<LocId>> {
    let mut out = vec![vec![]];
    for s in 0..sig.sorts().len() {
        let k = sig.monoid(s).len();
        out = out.into_iter().flat_map(|v: Vec<LocId>| (0..k).map(move |d| [v.clone(), vec![d]].concat())).collect();
    }
    out
}

struct Classes {
    reps: Vec<Formula>,
    profiles: Vec<Vec<Bits>>,
    formulas: usize,
}

fn catalogue_classes(t: &TheorySpec, cat: &[FiniteStructure], xs: &[Var]) -> Result<(Classes, Profiles), TheoryError> {
    let fs: Vec<Formula> = enumerate_fragment(t.sig(), &t.fragment, xs)
        .into_iter()
        .filter(|f| classify(f, t.sig()).positive)
        .collect();
    let prof = Profiles::new(cat, xs);
    let computed = prof.compute_all(cat, xs, &fs)?;
    let mut seen: BTreeMap<Vec<Bits>, usize> = BTreeMap::new();
    let mut classes = Classes { reps: vec![], profiles: vec![], formulas: 0 };
    for (f, p) in fs.into_iter().zip(computed) {
        if !p.iter().any(|b| bits_any(b)) {
            continue;
        }
        classes.formulas += 1;
        if !seen.contains_key(&p) {
            seen.insert(p.clone(), classes.reps.len());
            classes.reps.push(f);
            classes.profiles.push(p);
        }
    }
    Ok((classes, prof))
}

fn catalogue_joint(
    cat: &[FiniteStructure],
    prof: &Profiles,
    a: &[Bits],
    b: &[Bits],
    d: Option<&[LocId]>,
) -> bool {
    cat.iter().enumerate().any(|(k, m)| {
        if !bits_any(&a[k]) || !bits_any(&b[k]) {
            return false;
        }
        let Some(d) = d else { return true };
        bits_iter(&a[k]).any(|i| {
            bits_iter(&b[k]).any(|j| {
                let (u, v) = (&prof.tuples[k][i], &prof.tuples[k][j]);
                d.iter().enumerate().all(|(s, &ds)| m.related(s, ds, u[s], v[s]))
            })
        })
    })
}

/// Checks that any two consistent fragment formulas in disjoint variables
/// are jointly consistent, optionally within fixed locality elements.
pub fn check_irreducibility(t: &TheorySpec, mode: &IrreducibilityMode) -> Result<IrreducibilityReport, TheoryError> {
    let sig = t.sig();
    let xs = sort_vars(sig, "x");
    let ys = sort_vars(sig, "y");
    if let IrreducibilityMode::Uniform(d) = mode {
        if d.len() != xs.len() || d.iter().enumerate().any(|(s, &e)| e >= sig.monoid(s).len()) {
            return Err(TheoryError::ClassMismatch(format!("locality choice {d:?}")));
        }
    }
    let choices: Vec<Option<Vec<LocId>>> = match mode {
        IrreducibilityMode::Plain => vec![None],
        IrreducibilityMode::Uniform(d) => vec![Some(d.clone())],
        IrreducibilityMode::UniformSearch => loc_tuples(sig).into_iter().map(Some).collect(),
    };
    let cert = |phi: &Formula, psi: &Formula| {
        (Formula::exists_many(xs.clone(), phi.clone()), Formula::exists_many(ys.clone(), rename(psi, &xs, &ys)))
    };
    let mut results: Vec<(Option<Vec<LocId>>, Option<(Formula, Formula)>)> = Vec::new();
    let (formulas, classes, complete);
    match t.mode() {
        TheoryMode::ModelClass(cat) => {
            let (cls, prof) = catalogue_classes(t, cat, &xs)?;
            formulas = cls.formulas;
            classes = cls.reps.len();
            complete = true;
            for d in choices {
                let mut failure = None;
                'pairs: for i in 0..cls.reps.len() {
                    for j in i..cls.reps.len() {
                        if !catalogue_joint(cat, &prof, &cls.profiles[i], &cls.profiles[j], d.as_deref()) {
                            failure = Some(cert(&cls.reps[i], &cls.reps[j]));
                            break 'pairs;
                        }
                    }
                }
                results.push((d, failure));
            }
        }
        TheoryMode::ExplicitSentences(_) => {
            let mut reps = Vec::new();
            let mut all_complete = true;
            for f in enumerate_fragment(sig, &t.fragment, &xs) {
                if !classify(&f, sig).positive {
                    continue;
                }
                match positive_part_membership(t, &Formula::exists_many(xs.clone(), f.clone()))? {
                    super::Membership::Witness { .. } => reps.push(f),
                    super::Membership::NotInTPlus { complete, .. } => all_complete &= complete,
                }
            }
            formulas = reps.len();
            classes = reps.len();
            for d in choices {
                let mut failure = None;
                'pairs_e: for i in 0..reps.len() {
                    for j in i..reps.len() {
                        let mut parts = vec![reps[i].clone(), rename(&reps[j], &xs, &ys)];
                        if let Some(d) = &d {
                            parts.extend(loc_atoms(&xs, &ys, d));
                        }
                        let joint = Formula::exists_many(xs.iter().chain(&ys).cloned(), Formula::and(parts));
                        match positive_part_membership(t, &joint)? {
                            super::Membership::Witness { .. } => {}
                            super::Membership::NotInTPlus { complete, .. } => {
                                all_complete &= complete;
                                failure = Some(cert(&reps[i], &reps[j]));
                                break 'pairs_e;
                            }
                        }
                    }
                }
                results.push((d, failure));
            }
            complete = all_complete;
        }
    }
    let holds = results.iter().any(|(_, f)| f.is_none());
    let certificate = match mode {
        IrreducibilityMode::UniformSearch if holds => None,
        _ => results.iter().find_map(|(_, f)| f.clone()),
    };
    let per_d = match mode {
        IrreducibilityMode::Plain => vec![],
        _ => results
            .into_iter()
            .map(|(d, f)| UniformResult { d: d.unwrap_or_default(), holds: f.is_none(), certificate: f })
            .collect(),
    };
    Ok(IrreducibilityReport { holds, formulas, classes, per_d, certificate, complete })
}

/// The positive diagram of `m` as `(variables, conjunction)`: relation
/// tuples, the minimal locality elements of each pair and the constants.
pub fn structure_diagram(m: &FiniteStructure, prefix: &str) -> (Vec<Vec<Var>>, Formula) {
    let sig = m.sig();
    let multi = sig.sorts().len() > 1;
    let vars: Vec<Vec<Var>> = (0..sig.sorts().len())
        .map(|s| {
            (0..m.size(s))
                .map(|e| if multi { Var::new(format!("{prefix}{s}_{e}"), s) } else { Var::new(format!("{prefix}{e}"), s) })
                .collect()
        })
        .collect();
    let term = |s: usize, e: usize| Term::Var(vars[s][e].clone());
    let mut atoms = Vec::new();
    for (r, sym) in sig.relations().iter().enumerate() {
        for t in m.tuples(r) {
            atoms.push(Formula::atom(r, t.iter().zip(&sym.profile).map(|(&e, &s)| term(s, e)).collect()));
        }
    }
    for s in 0..sig.sorts().len() {
        let mon = sig.monoid(s);
        for a in 0..m.size(s) {
            for b in a + 1..m.size(s) {
                for d in mon.minimal_where(|d| m.related(s, d, a, b)) {
                    atoms.push(Formula::loc(s, d, term(s, a), term(s, b)));
                }
            }
        }
    }
    for (c, sym) in sig.constants().iter().enumerate() {
        atoms.push(Formula::eq(term(sym.sort, m.constant(c)), Term::Const(c)));
    }
    (vars, Formula::and(atoms))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LjcpWitness {
    pub a: usize,
    pub b: usize,
    pub target: usize,
    pub hom_a: Homomorphism,
    pub hom_b: Homomorphism,
}

/// A pair with no common continuation, and the negative sentence the theory
/// entails because of it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LjcpFailure {
    pub a: usize,
    pub b: usize,
    pub obstruction: Formula,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LjcpReport {
    pub holds: bool,
    pub bound: usize,
    pub witnesses: Vec<LjcpWitness>,
    pub failures: Vec<LjcpFailure>,
}

/// For every pair of catalogue members, a member both map into.
pub fn check_ljcp(t: &TheorySpec, size_bound: usize) -> Result<LjcpReport, TheoryError> {
    let cat = t.catalogue().ok_or(TheoryError::NotModelClass)?;
    let mut witnesses = Vec::new();
    let mut failures = Vec::new();
    for a in 0..cat.len() {
        for b in a..cat.len() {
            let mut found = None;
            for (k, target) in cat.iter().enumerate() {
                let ha = find_homomorphisms(&cat[a], target, &[], Some(1))?;
                if ha.is_empty() {
                    continue;
                }
                let hb = find_homomorphisms(&cat[b], target, &[], Some(1))?;
                if let (Some(hom_a), Some(hom_b)) = (ha.into_iter().next(), hb.into_iter().next()) {
                    found = Some(LjcpWitness { a, b, target: k, hom_a, hom_b });
                    break;
                }
            }
            match found {
                Some(w) => witnesses.push(w),
                None => {
                    let (va, da) = structure_diagram(&cat[a], "a");
                    let (vb, db) = structure_diagram(&cat[b], "b");
                    let vars = va.into_iter().flatten().chain(vb.into_iter().flatten());
                    let obstruction = Formula::not(Formula::exists_many(vars, Formula::and(vec![da, db])));
                    if !locally_entails(t, &obstruction, size_bound)?.is_entailed() {
                        return Err(TheoryError::NoWitness("joint diagram obstruction".into()));
                    }
                    failures.push(LjcpFailure { a, b, obstruction });
                }
            }
        }
    }
    Ok(LjcpReport { holds: failures.is_empty(), bound: size_bound, witnesses, failures })
}

/// Which structure satisfies a distinguishing negative sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    First,
    Second,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TheoryComparison {
    Equal { checked: usize },
    /// Every negative sentence `¬χ` of the fragment true on exactly one side.
    Differ { checked: usize, witnesses: Vec<(Formula, Side)> },
}

fn positive_sentences(sig: &SignatureSpec, frag: &Fragment) -> Vec<Formula> {
    enumerate_fragment(sig, frag, &[]).into_iter().filter(|f| classify(f, sig).positive).collect()
}

/// Compares the negative sentences of the fragment true in `m` and in `n`.
pub fn compare_negative_theories(
    m: &FiniteStructure,
    n: &FiniteStructure,
    frag: &Fragment,
) -> Result<TheoryComparison, TheoryError> {
    if m.sig() != n.sig() {
        return Err(TheoryError::SignatureMismatch(1));
    }
    for (index, s) in [m, n].into_iter().enumerate() {
        if let Some(w) = check_locality_axioms(s).first_failure_among(&[1, 2, 3, 4, 5]) {
            return Err(TheoryError::NotLocal { index, witness: format!("{w:?}") });
        }
    }
    let sentences = positive_sentences(m.sig(), frag);
    let mut witnesses = Vec::new();
    for chi in &sentences {
        let (in_m, in_n) = (holds(m, chi)?, holds(n, chi)?);
        if in_m != in_n {
            let side = if in_m { Side::Second } else { Side::First };
            witnesses.push((Formula::not(chi.clone()), side));
        }
    }
    let checked = sentences.len();
    Ok(if witnesses.is_empty() {
        TheoryComparison::Equal { checked }
    } else {
        TheoryComparison::Differ { checked, witnesses }
    })
}

/// The completeness hierarchy of a catalogue theory at its fragment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HierarchyReport {
    /// Uniform irreducibility, with the first locality choice that works.
    pub ui: Option<Vec<LocId>>,
    pub ljcp: bool,
    /// Some member is positively closed, and every such member has the
    /// theory's fragment sentences.
    pub catalogue_complete: bool,
    /// Some positively closed member has the theory's fragment sentences.
    pub weakly_complete: bool,
    pub irreducible: bool,
    pub pc_members: Vec<usize>,
    pub pointed: bool,
    pub bound: usize,
}

impl HierarchyReport {
    /// Implications that fail, by name.
    pub fn violations(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.ui.is_some() && !self.ljcp {
            out.push("UI => LJCP");
        }
        if self.ljcp && !self.catalogue_complete {
            out.push("LJCP => C");
        }
        if self.catalogue_complete && !self.weakly_complete {
            out.push("C => wC");
        }
        if self.weakly_complete && !self.irreducible {
            out.push("wC => I");
        }
        if self.pointed && self.irreducible && !self.ljcp {
            out.push("pointed: I => LJCP");
        }
        out
    }
}

pub fn hierarchy_report(t: &TheorySpec) -> Result<HierarchyReport, TheoryError> {
    let cat = t.catalogue().ok_or(TheoryError::NotModelClass)?;
    let ui_report = check_irreducibility(t, &IrreducibilityMode::UniformSearch)?;
    let ui = ui_report.per_d.iter().find(|r| r.holds).map(|r| r.d.clone());
    let ljcp = check_ljcp(t, t.size_bound)?.holds;
    let irreducible = check_irreducibility(t, &IrreducibilityMode::Plain)?.holds;
    let mut pc_members = Vec::new();
    for (i, m) in cat.iter().enumerate() {
        if check_locally_positively_closed(m, cat, None)?.is_yes() {
            pc_members.push(i);
        }
    }
    let sentences = positive_sentences(t.sig(), &t.fragment);
    let truth: Vec<Vec<bool>> = cat
        .iter()
        .map(|m| sentences.iter().map(|chi| holds(m, chi)).collect::<Result<_, _>>())
        .collect::<Result<_, _>>()?;
    let theory: Vec<bool> = (0..sentences.len()).map(|j| truth.iter().any(|row| row[j])).collect();
    let matches: Vec<bool> = pc_members.iter().map(|&i| truth[i] == theory).collect();
    Ok(HierarchyReport {
        ui,
        ljcp,
        catalogue_complete: !matches.is_empty() && matches.iter().all(|&b| b),
        weakly_complete: matches.iter().any(|&b| b),
        irreducible,
        pc_members,
        pointed: t.is_pointed(),
        bound: t.size_bound,
    })
}
