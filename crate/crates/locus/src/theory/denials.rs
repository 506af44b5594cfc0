//! Denials, approximation and complementarity.

use std::collections::HashMap;

use super::{bits_and, bits_any, locally_entails, Bits, Profiles, TheoryError, TheoryMode, TheorySpec};
use crate::formula::{classify, enumerate_fragment, print, ClassFilter, Formula, Fragment, Var};

/// A formula `ψ` with `¬∃x (φ ∧ ψ)` entailed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Denial {
    pub formula: Formula,
    pub vars: Vec<Var>,
    pub local: bool,
    pub bound: usize,
    /// The entailment holds at every size, not just up to `bound`.
    pub complete: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApproxMode {
    /// `φ ≤ ψ`: every denial of `ψ` denies `φ`.
    Approximates,
    /// `φ ⊤ ψ`: every denial of `ψ` approximates `φ`.
    Complementary,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ApproxCertificate {
    /// `theta` denies `ψ` but not `φ`.
    NotApproximation { theta: Formula },
    /// `theta` denies `ψ`; `chi` denies `φ` but not `theta`.
    NotComplementary { theta: Formula, chi: Formula },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApproxVerdict {
    pub holds: bool,
    pub mode: ApproxMode,
    pub vars: Vec<Var>,
    pub denials_checked: usize,
    pub certificate: Option<ApproxCertificate>,
}

/// Primitive positive candidates over `ctx`, local ones first.
pub(crate) fn pp_candidates(t: &TheorySpec, frag: &Fragment, ctx: &[Var]) -> Vec<Formula> {
    let mut out = enumerate_fragment(t.sig(), &frag.clone().with_class(ClassFilter::LocalPp), ctx);
    let mut seen: std::collections::HashSet<Formula> = out.iter().cloned().collect();
    for f in enumerate_fragment(t.sig(), &frag.clone().with_class(ClassFilter::Pp), ctx) {
        if seen.insert(f.clone()) {
            out.push(f);
        }
    }
    out
}

/// Decides `¬∃ctx (a ∧ b)`: by satisfying sets in catalogue members, or by
/// entailment for explicit theories.
enum Oracle<'t> {
    Catalogue { t: &'t TheorySpec, ctx: Vec<Var>, prof: Profiles, cache: HashMap<Formula, Vec<Bits>> },
    Explicit { t: &'t TheorySpec, ctx: Vec<Var>, complete: bool },
}

impl<'t> Oracle<'t> {
    fn new(t: &'t TheorySpec, ctx: &[Var]) -> Self {
        match t.mode() {
            TheoryMode::ModelClass(cat) => Oracle::Catalogue {
                t,
                ctx: ctx.to_vec(),
                prof: Profiles::new(cat, ctx),
                cache: HashMap::new(),
            },
            TheoryMode::ExplicitSentences(_) => Oracle::Explicit { t, ctx: ctx.to_vec(), complete: true },
        }
    }

    fn warm(&mut self, fs: &[Formula]) -> Result<(), TheoryError> {
        if let Oracle::Catalogue { t, ctx, prof, cache } = self {
            let cat = t.catalogue().expect("catalogue mode");
            let missing: Vec<Formula> = fs.iter().filter(|f| !cache.contains_key(*f)).cloned().collect();
            let computed = prof.compute_all(cat, ctx, &missing)?;
            cache.extend(missing.into_iter().zip(computed));
        }
        Ok(())
    }

    fn disjoint(&mut self, a: &Formula, b: &Formula) -> Result<bool, TheoryError> {
        match self {
            Oracle::Catalogue { .. } => {
                self.warm(&[a.clone(), b.clone()])?;
                let Oracle::Catalogue { cache, .. } = self else { unreachable!() };
                let (pa, pb) = (&cache[a], &cache[b]);
                Ok(pa.iter().zip(pb).all(|(x, y)| !bits_any(&bits_and(x, y))))
            }
            Oracle::Explicit { t, ctx, complete } => {
                let joint = Formula::exists_many(ctx.iter().cloned(), Formula::and(vec![a.clone(), b.clone()]));
                match locally_entails(t, &Formula::not(joint), t.size_bound)? {
                    super::Entailment::Entailed { complete: c, .. } => {
                        *complete &= c;
                        Ok(true)
                    }
                    super::Entailment::Countermodel { .. } => Ok(false),
                }
            }
        }
    }

    fn complete(&self) -> bool {
        match self {
            Oracle::Catalogue { .. } => true,
            Oracle::Explicit { complete, .. } => *complete,
        }
    }
}

fn context_of(fs: &[&Formula]) -> Vec<Var> {
    let mut set = std::collections::BTreeSet::new();
    for f in fs {
        set.extend(f.free_variables());
    }
    set.into_iter().collect()
}

/// Primitive positive formulas of `frag` over the free variables of `phi`
/// that `t` denies jointly with `phi`. Local ones come first.
pub fn find_denials(t: &TheorySpec, phi: &Formula, frag: &Fragment) -> Result<Vec<Denial>, TheoryError> {
    phi.check(t.sig())?;
    if !classify(phi, t.sig()).local_positive {
        return Err(TheoryError::ClassMismatch(print(phi, t.sig())));
    }
    let ctx = context_of(&[phi]);
    let candidates = pp_candidates(t, frag, &ctx);
    let mut oracle = Oracle::new(t, &ctx);
    let mut all = candidates.clone();
    all.push(phi.clone());
    oracle.warm(&all)?;
    let mut found = Vec::new();
    for psi in candidates {
        if oracle.disjoint(phi, &psi)? {
            let local = classify(&psi, t.sig()).local_primitive_positive;
            found.push((psi, local));
        }
    }
    let complete = oracle.complete();
    Ok(found
        .into_iter()
        .map(|(formula, local)| Denial { formula, vars: ctx.clone(), local, bound: t.size_bound, complete })
        .collect())
}

/// Checks `φ ≤ ψ` or `φ ⊤ ψ` over the primitive positive formulas of `frag`.
pub fn check_approx_complementary(
    t: &TheorySpec,
    phi: &Formula,
    psi: &Formula,
    mode: ApproxMode,
    frag: &Fragment,
) -> Result<ApproxVerdict, TheoryError> {
    for f in [phi, psi] {
        f.check(t.sig())?;
        if !classify(f, t.sig()).positive {
            return Err(TheoryError::ClassMismatch(print(f, t.sig())));
        }
    }
    let ctx = context_of(&[phi, psi]);
    let candidates = pp_candidates(t, frag, &ctx);
    let mut oracle = Oracle::new(t, &ctx);
    let mut all = candidates.clone();
    all.push(phi.clone());
    all.push(psi.clone());
    oracle.warm(&all)?;
    let mut denies_psi = Vec::new();
    for c in &candidates {
        if oracle.disjoint(psi, c)? {
            denies_psi.push(c.clone());
        }
    }
    let verdict = |holds, certificate| ApproxVerdict {
        holds,
        mode,
        vars: ctx.clone(),
        denials_checked: denies_psi.len(),
        certificate,
    };
    match mode {
        ApproxMode::Approximates => {
            for theta in &denies_psi {
                if !oracle.disjoint(phi, theta)? {
                    return Ok(verdict(false, Some(ApproxCertificate::NotApproximation { theta: theta.clone() })));
                }
            }
        }
        ApproxMode::Complementary => {
            let mut denies_phi = Vec::new();
            for c in &candidates {
                if oracle.disjoint(phi, c)? {
                    denies_phi.push(c.clone());
                }
            }
            for theta in &denies_psi {
                for chi in &denies_phi {
                    if !oracle.disjoint(theta, chi)? {
                        return Ok(verdict(
                            false,
                            Some(ApproxCertificate::NotComplementary { theta: theta.clone(), chi: chi.clone() }),
                        ));
                    }
                }
            }
        }
    }
    Ok(verdict(true, None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{hamming, tree, z};
    use crate::formula::parse;

    fn theory(m: crate::structure::FiniteStructure) -> TheorySpec {
        TheorySpec::model_class(vec![m], Fragment::new(0, 1, ClassFilter::Pp), 4).unwrap()
    }

    fn has(ds: &[Denial], text: &str, t: &TheorySpec) -> bool {
        let f = parse(text, t.sig()).unwrap();
        ds.iter().any(|d| d.formula == f)
    }

    #[test]
    fn denials_in_z6() {
        let t = theory(z(6));
        let phi = parse("P1(x)", t.sig()).unwrap();
        let ds = find_denials(&t, &phi, &Fragment::new(0, 1, ClassFilter::Pp)).unwrap();
        assert!(has(&ds, "Q0(x)", &t));
        assert!(!has(&ds, "P0(x)", &t));
        assert!(ds.iter().all(|d| d.complete));
    }

    #[test]
    fn top_is_denied_only_by_unsatisfiable_formulas() {
        let t = theory(z(3));
        let ds = find_denials(&t, &Formula::Top, &Fragment::new(1, 2, ClassFilter::Pp)).unwrap();
        assert!(!ds.is_empty());
        for d in &ds {
            assert!(!crate::eval::holds(&z(3), &d.formula).unwrap());
        }
    }

    #[test]
    fn hamming_coordinates_deny_each_other() {
        let t = theory(hamming(3));
        let phi = parse("P0(x)", t.sig()).unwrap();
        let ds = find_denials(&t, &phi, &Fragment::new(0, 1, ClassFilter::Pp)).unwrap();
        assert!(has(&ds, "Q0(x)", &t));
        assert!(!has(&ds, "Q1(x)", &t));
    }

    #[test]
    fn local_denials_come_first() {
        let t = theory(crate::corpus::pointed_z(3));
        let phi = parse("P2(x)", t.sig()).unwrap();
        let ds = find_denials(&t, &phi, &Fragment::new(1, 1, ClassFilter::Pp)).unwrap();
        let first_plain = ds.iter().position(|d| !d.local).unwrap_or(ds.len());
        assert!(ds[first_plain..].iter().all(|d| !d.local));
        assert!(has(&ds, "d1(x, 0)", &t));
    }

    #[test]
    fn tree_approximations() {
        let t = theory(tree(5));
        let frag = Fragment::new(0, 1, ClassFilter::Pp);
        let p0 = parse("P0(x)", t.sig()).unwrap();
        let q0 = parse("Q0(x)", t.sig()).unwrap();
        let v = check_approx_complementary(&t, &p0, &q0, ApproxMode::Complementary, &frag).unwrap();
        assert!(v.holds, "{v:?}");
        let q2 = parse("Q2(x)", t.sig()).unwrap();
        assert!(check_approx_complementary(&t, &q2, &q0, ApproxMode::Approximates, &frag).unwrap().holds);
        assert!(check_approx_complementary(&t, &q0, &q0, ApproxMode::Approximates, &frag).unwrap().holds);
        let v = check_approx_complementary(&t, &q0, &q2, ApproxMode::Approximates, &frag).unwrap();
        assert!(!v.holds);
        let Some(ApproxCertificate::NotApproximation { theta }) = v.certificate else { panic!() };
        // theta denies Q2 but meets Q0
        let cat = [tree(5)];
        let joint_q0 = Formula::exists_many(v.vars.clone(), Formula::and(vec![q0, theta.clone()]));
        assert!(cat.iter().any(|m| crate::eval::holds(m, &joint_q0).unwrap()));
    }
}
