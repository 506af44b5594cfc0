//! Bounds of variables, locality-gap probes and ball witnesses.

use serde::Serialize;

use super::search::tightest;
use super::{bits_and, bits_any, bits_iter, positive_part_membership, Bits, Membership, Profiles, TheoryError, TheorySpec};
use crate::eval::{all_tuples, Evaluator};
use crate::formula::{classify, enumerate_fragment, print, Formula, Fragment, Term, Var};
use crate::signature::{ConstId, LocId, SortId};
use crate::structure::FiniteStructure;

/// A quantifier-free positive locality type: each variable may be tied to
/// a constant of its sort, and each same-sort pair of variables is tied to
/// each other.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundType {
    pub vars: Vec<Var>,
    pub anchors: Vec<Option<(ConstId, LocId)>>,
    pub pairs: Vec<(usize, usize, LocId)>,
}

impl BoundType {
    pub fn to_formula(&self) -> Formula {
        let mut atoms = Vec::new();
        for (v, anchor) in self.vars.iter().zip(&self.anchors) {
            if let Some((c, d)) = anchor {
                atoms.push(Formula::loc(v.sort, *d, Term::Var(v.clone()), Term::Const(*c)));
            }
        }
        for &(i, j, d) in &self.pairs {
            let (x, y) = (&self.vars[i], &self.vars[j]);
            atoms.push(Formula::loc(x.sort, d, Term::Var(x.clone()), Term::Var(y.clone())));
        }
        Formula::and(atoms)
    }
}

/// Reads a bound off a tuple realizing `phi` in a model of `t`, using the
/// tightest locality element for each anchor and pair.
pub fn synthesize_bound_at(
    t: &TheorySpec,
    phi: &Formula,
    vars: &[Var],
    model: &FiniteStructure,
    tuple: &[usize],
) -> Result<BoundType, TheoryError> {
    let sig = t.sig();
    if !Evaluator::new(model, phi, vars)?.eval(tuple) {
        return Err(TheoryError::NoWitness(print(phi, sig)));
    }
    let mut anchors = Vec::new();
    for (v, &a) in vars.iter().zip(tuple) {
        anchors.push(sig.constants_of_sort(v.sort).next().map(|c| {
            let d = tightest(model, v.sort, a, model.constant(c)).expect("local structure");
            (c, d)
        }));
    }
    let mut pairs = Vec::new();
    for i in 0..vars.len() {
        for j in i + 1..vars.len() {
            if vars[i].sort == vars[j].sort {
                let d = tightest(model, vars[i].sort, tuple[i], tuple[j]).expect("local structure");
                pairs.push((i, j, d));
            }
        }
    }
    let bound = BoundType { vars: vars.to_vec(), anchors, pairs };
    let check = Formula::exists_many(vars.iter().cloned(), Formula::and(vec![bound.to_formula(), phi.clone()]));
    match positive_part_membership(t, &check)? {
        Membership::Witness { .. } => Ok(bound),
        Membership::NotInTPlus { .. } => Err(TheoryError::NoWitness(print(&check, sig))),
    }
}

/// A bound for the free variables of `phi`, read off the first witness.
pub fn synthesize_bound(t: &TheorySpec, phi: &Formula) -> Result<BoundType, TheoryError> {
    phi.check(t.sig())?;
    if !classify(phi, t.sig()).positive {
        return Err(TheoryError::ClassMismatch(print(phi, t.sig())));
    }
    let vars: Vec<Var> = phi.free_variables().into_iter().collect();
    let models: Vec<FiniteStructure> = match t.catalogue() {
        Some(cat) => cat.to_vec(),
        None => match positive_part_membership(t, &Formula::exists_many(vars.clone(), phi.clone()))? {
            Membership::Witness { model, .. } => vec![model],
            Membership::NotInTPlus { .. } => vec![],
        },
    };
    for m in &models {
        let mut ev = Evaluator::new(m, phi, &vars)?;
        if let Some(tuple) = all_tuples(m, &vars).find(|tu| ev.eval(tu)) {
            return synthesize_bound_at(t, phi, &vars, m, &tuple);
        }
    }
    Err(TheoryError::NoWitness(print(phi, t.sig())))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProbeOutcome {
    /// `gamma(x, y)` is consistent with the theory, but only at the
    /// greatest locality element `horizon` of the sort.
    LocalityGap { gamma: Vec<Formula>, x: Var, y: Var, horizon: LocId },
    /// No gap among the sets grown from `seeds` candidates.
    NoGap { bound: usize, seeds: usize },
}

struct PairProfiles<'a> {
    cat: &'a [FiniteStructure],
    prof: Profiles,
    sort: SortId,
    horizon: LocId,
}

impl PairProfiles<'_> {
    fn realized(&self, p: &[Bits]) -> bool {
        p.iter().any(|b| bits_any(b))
    }

    /// Realized, and every realizing pair is related only at the horizon.
    fn gap(&self, p: &[Bits]) -> bool {
        if !self.realized(p) {
            return false;
        }
        let mon = self.cat[0].sig().monoid(self.sort);
        self.cat.iter().enumerate().all(|(k, m)| {
            bits_iter(&p[k]).all(|i| {
                let tu = &self.prof.tuples[k][i];
                (0..mon.len()).all(|d| d == self.horizon || !m.related(self.sort, d, tu[0], tu[1]))
            })
        })
    }

    fn meet(&self, items: &[&Vec<Bits>]) -> Vec<Bits> {
        let mut acc = items[0].clone();
        for p in &items[1..] {
            acc = acc.iter().zip(p.iter()).map(|(a, b)| bits_and(a, b)).collect();
        }
        acc
    }
}

/// Whether `gamma(x, y)` is consistent with the catalogue theory but only at
/// the greatest locality element of the sort.
pub fn locality_gap(t: &TheorySpec, gamma: &[Formula], x: &Var, y: &Var) -> Result<bool, TheoryError> {
    let cat = t.catalogue().ok_or(TheoryError::NotModelClass)?;
    let Some(horizon) = t.sig().monoid(x.sort).top() else { return Ok(false) };
    let ctx = [x.clone(), y.clone()];
    let pp = PairProfiles { cat, prof: Profiles::new(cat, &ctx), sort: x.sort, horizon };
    let profiles = pp.prof.compute_all(cat, &ctx, gamma)?;
    if profiles.is_empty() {
        return Ok(false);
    }
    Ok(pp.gap(&pp.meet(&profiles.iter().collect::<Vec<_>>())))
}

/// Grows, from each fragment formula in two variables of one sort, a set
/// of formulas that stays consistent with the theory, and reports the first
/// one realized only at the greatest locality element, minimized.
pub fn inherent_locality_probe(t: &TheorySpec, frag: &Fragment, size_bound: usize) -> Result<ProbeOutcome, TheoryError> {
    let cat = t.catalogue().ok_or(TheoryError::NotModelClass)?;
    let sig = t.sig();
    let mut seeds = 0;
    for sort in 0..sig.sorts().len() {
        let Some(horizon) = sig.monoid(sort).top() else { continue };
        let x = Var::new("x", sort);
        let y = Var::new("y", sort);
        let ctx = [x.clone(), y.clone()];
        let pp = PairProfiles { cat, prof: Profiles::new(cat, &ctx), sort, horizon };
        let fs: Vec<Formula> =
            enumerate_fragment(sig, frag, &ctx).into_iter().filter(|f| classify(f, sig).positive).collect();
        let profiles = pp.prof.compute_all(cat, &ctx, &fs)?;
        let live: Vec<usize> = (0..fs.len()).filter(|&i| pp.realized(&profiles[i])).collect();
        for &seed in &live {
            seeds += 1;
            let mut chosen = vec![seed];
            let mut acc = profiles[seed].clone();
            for &c in &live {
                if c == seed {
                    continue;
                }
                let next = pp.meet(&[&acc, &profiles[c]]);
                if pp.realized(&next) {
                    chosen.push(c);
                    acc = next;
                }
            }
            if !pp.gap(&acc) {
                continue;
            }
            let mut i = 0;
            while i < chosen.len() && chosen.len() > 1 {
                let rest: Vec<&Vec<Bits>> =
                    chosen.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &c)| &profiles[c]).collect();
                if pp.gap(&pp.meet(&rest)) {
                    chosen.remove(i);
                } else {
                    i += 1;
                }
            }
            chosen.sort_unstable();
            let gamma = chosen.into_iter().map(|c| fs[c].clone()).collect();
            return Ok(ProbeOutcome::LocalityGap { gamma, x, y, horizon });
        }
    }
    Ok(ProbeOutcome::NoGap { bound: size_bound, seeds })
}

/// A centre per sort and a locality element per sort whose ball is the
/// whole universe.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BallWitness {
    pub centre: Vec<usize>,
    pub radius: Vec<LocId>,
}

/// Tightest ball presentation of each sort of `m`.
pub fn ball_witness(m: &FiniteStructure) -> Option<BallWitness> {
    let sig = m.sig();
    let mut centre = Vec::new();
    let mut radius = Vec::new();
    for s in 0..sig.sorts().len() {
        let n = m.size(s);
        let covers = |d: LocId, o: usize| m.ball(d, s, o).len() == n;
        let d = sig.monoid(s).minimal_where(|d| (0..n).any(|o| covers(d, o))).into_iter().next()?;
        centre.push((0..n).find(|&o| covers(d, o))?);
        radius.push(d);
    }
    Some(BallWitness { centre, radius })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{c, pointed_z, z, zdist};
    use crate::formula::{parse, parse_in_context, ClassFilter};

    fn theory(m: FiniteStructure) -> TheorySpec {
        TheorySpec::model_class(vec![m], Fragment::new(1, 2, ClassFilter::Positive), 4).unwrap()
    }

    #[test]
    fn bound_from_a_pointed_witness() {
        let t = theory(pointed_z(6));
        let phi = parse("P2(x)", t.sig()).unwrap();
        let b = synthesize_bound(&t, &phi).unwrap();
        assert_eq!(b.to_formula(), parse_in_context("d2(x, 0)", t.sig(), &b.vars).unwrap());
        let eq = parse("x = 0", t.sig()).unwrap();
        let b = synthesize_bound(&t, &eq).unwrap();
        assert_eq!(b.to_formula(), parse_in_context("d0(x, 0)", t.sig(), &b.vars).unwrap());
    }

    #[test]
    fn bound_at_a_chosen_pair() {
        let t = theory(pointed_z(6));
        let phi = parse("d3(x, y)", t.sig()).unwrap();
        let vars: Vec<Var> = phi.free_variables().into_iter().collect();
        let m = pointed_z(6);
        let e = |l: &str| m.element(0, l).unwrap();
        let b = synthesize_bound_at(&t, &phi, &vars, &m, &[e("0"), e("3")]).unwrap();
        assert_eq!(b.pairs, vec![(0, 1, 3)]);
        assert_eq!(b.anchors[1].unwrap().1, 3);
        assert!(synthesize_bound(&theory(z(2)), &parse("P0(x) & Q1(x)", z(2).sig()).unwrap()).is_err());
    }

    #[test]
    fn pointed_z_has_a_gap() {
        let t = theory(pointed_z(3));
        let frag = Fragment::new(0, 2, ClassFilter::QfPositive);
        let ProbeOutcome::LocalityGap { gamma, x, y, horizon } = inherent_locality_probe(&t, &frag, 4).unwrap() else {
            panic!()
        };
        assert_eq!(horizon, 6);
        assert!(locality_gap(&t, &gamma, &x, &y).unwrap());
    }

    #[test]
    fn singleton_has_no_gap() {
        let t = theory(crate::corpus::i_point(2));
        let frag = Fragment::new(0, 2, ClassFilter::QfPositive);
        assert!(matches!(inherent_locality_probe(&t, &frag, 4).unwrap(), ProbeOutcome::NoGap { .. }));
    }

    #[test]
    fn distance_structure_without_far_relations_has_no_gap() {
        let t = theory(zdist(4));
        let frag = Fragment::new(0, 2, ClassFilter::QfPositive).with_relations(&["e0", "e1", "e2"]).with_locality(&["d1", "d2"]);
        assert!(matches!(inherent_locality_probe(&t, &frag, 4).unwrap(), ProbeOutcome::NoGap { .. }));
    }

    #[test]
    fn intervals_are_balls() {
        let w = ball_witness(&c(3)).unwrap();
        assert_eq!(w.radius, vec![3]);
        assert_eq!(c(3).label(0, w.centre[0]), "0");
    }
}
