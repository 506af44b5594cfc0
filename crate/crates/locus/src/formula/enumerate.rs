//! Finite formula spaces.
//!
//! A [`Fragment`] bounds quantifier depth, connective width and the total
//! number of atoms. Enumeration is canonical: conjunctions and disjunctions
//! list their children in increasing order, bound variables get names fixed
//! by their nesting level, and the output is sorted by depth, then width,
//! then the derived structural order on [`Formula`] (which lists `⊤`, `⊥`,
//! equalities, declared relations and locality atoms in that order).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{Formula, Term, Var};
use crate::signature::{LocId, RelId, SignatureSpec, SortId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassFilter {
    Positive,
    Pp,
    LocalPositive,
    LocalPp,
    QfPositive,
    /// Negations of positive formulas.
    Negative,
    /// `∀x φ` and `∀x ¬φ` over the free context, with `φ` local positive.
    Pi1Local,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fragment {
    pub max_depth: usize,
    pub max_width: usize,
    /// Total atom budget; defaults to `max_width`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_atoms: Option<usize>,
    pub max_free_per_sort: usize,
    pub class: ClassFilter,
    /// Relation symbols that may occur; all when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relations: Option<Vec<String>>,
    /// Locality elements usable in atoms and as quantifier bounds; all when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub locality: Option<Vec<String>>,
}

impl Fragment {
    pub fn new(max_depth: usize, max_width: usize, class: ClassFilter) -> Self {
        Fragment {
            max_depth,
            max_width,
            max_atoms: None,
            max_free_per_sort: 2,
            class,
            relations: None,
            locality: None,
        }
    }

    pub fn with_atoms(mut self, n: usize) -> Self {
        self.max_atoms = Some(n);
        self
    }

    pub fn with_free(mut self, n: usize) -> Self {
        self.max_free_per_sort = n;
        self
    }

    pub fn with_relations<S: AsRef<str>>(mut self, names: &[S]) -> Self {
        self.relations = Some(names.iter().map(|s| s.as_ref().to_string()).collect());
        self
    }

    pub fn with_locality<S: AsRef<str>>(mut self, names: &[S]) -> Self {
        self.locality = Some(names.iter().map(|s| s.as_ref().to_string()).collect());
        self
    }

    pub fn with_class(mut self, class: ClassFilter) -> Self {
        self.class = class;
        self
    }

    pub fn atom_budget(&self) -> usize {
        self.max_atoms.unwrap_or(self.max_width).max(1)
    }
}

struct Gen<'a> {
    sig: &'a SignatureSpec,
    rels: Vec<RelId>,
    locs: Vec<Vec<LocId>>,
    plain: bool,
    local: bool,
    disj: bool,
    width: usize,
    budget: usize,
    prefix: String,
    n_free: usize,
}

impl Gen<'_> {
    fn terms(&self, ctx: &[Var]) -> Vec<Term> {
        let mut out: Vec<Term> = ctx.iter().cloned().map(Term::Var).collect();
        out.extend((0..self.sig.constants().len()).map(Term::Const));
        out.sort();
        out
    }

    fn atoms(&self, ctx: &[Var]) -> Vec<Formula> {
        let terms = self.terms(ctx);
        let sort = |t: &Term| t.sort(self.sig);
        let mut out = Vec::new();
        for (i, a) in terms.iter().enumerate() {
            for b in &terms[i + 1..] {
                if sort(a) == sort(b) {
                    out.push(Formula::Equal(a.clone(), b.clone()));
                }
            }
        }
        for &r in &self.rels {
            let profile = &self.sig.relations()[r].profile;
            let mut tuples: Vec<Vec<Term>> = vec![vec![]];
            for &s in profile {
                let cands: Vec<&Term> = terms.iter().filter(|t| sort(t) == s).collect();
                tuples = tuples
                    .into_iter()
                    .flat_map(|tup| {
                        cands.iter().map(move |t| {
                            let mut n = tup.clone();
                            n.push((*t).clone());
                            n
                        })
                    })
                    .collect();
            }
            out.extend(tuples.into_iter().map(|args| Formula::atom(r, args)));
        }
        for (s, ds) in self.locs.iter().enumerate() {
            for &d in ds {
                for (i, a) in terms.iter().enumerate() {
                    if sort(a) != s {
                        continue;
                    }
                    for b in &terms[i + 1..] {
                        if sort(b) == s {
                            out.push(Formula::loc(s, d, a.clone(), b.clone()));
                        }
                    }
                }
            }
        }
        out
    }

    fn bound_var(&self, level: usize, sort: SortId) -> Var {
        Var::new(format!("{}{}", self.prefix, level), sort)
    }

    /// Nontrivial formulas over `ctx` of depth at most `depth`.
    fn layer(&self, ctx: &[Var], depth: usize) -> Vec<Formula> {
        let mut basics = self.atoms(ctx);
        if depth > 0 && (self.plain || self.local) {
            let level = ctx.len() - self.n_free;
            let terms = self.terms(ctx);
            for s in 0..self.sig.sorts().len() {
                let y = self.bound_var(level, s);
                let mut inner = ctx.to_vec();
                inner.push(y.clone());
                let bodies: Vec<Formula> = self
                    .layer(&inner, depth - 1)
                    .into_iter()
                    .filter(|b| b.occurs_free(&y))
                    .collect();
                if self.plain {
                    for b in &bodies {
                        basics.push(Formula::exists(y.clone(), b.clone()));
                    }
                }
                if self.local {
                    for &d in &self.locs[s] {
                        for t in terms.iter().filter(|t| t.sort(self.sig) == s) {
                            for b in &bodies {
                                basics.push(Formula::exists_in(y.clone(), d, t.clone(), b.clone()));
                            }
                        }
                    }
                }
            }
        }
        basics.sort_unstable();
        basics.dedup();
        let conj = combos(&basics, self.width, self.budget)
            .into_iter()
            .map(Formula::And)
            .collect::<Vec<_>>();
        let mut out = basics.clone();
        if self.disj {
            let mut items = basics;
            items.extend(conj.iter().cloned());
            items.sort_unstable();
            out.extend(combos(&items, self.width, self.budget).into_iter().map(Formula::Or));
        }
        out.extend(conj);
        out
    }
}

/// Strictly increasing selections of 2..=width items whose atoms fit the budget.
fn combos(items: &[Formula], width: usize, budget: usize) -> Vec<Vec<Formula>> {
    // indices grouped by atom count, so over-budget items are never visited
    let mut by_size: Vec<Vec<usize>> = vec![Vec::new(); budget + 1];
    for (i, f) in items.iter().enumerate() {
        let k = f.atom_count();
        if k <= budget {
            by_size[k].push(i);
        }
    }
    struct Walk<'a> {
        items: &'a [Formula],
        by_size: &'a [Vec<usize>],
        width: usize,
        budget: usize,
        stack: Vec<usize>,
        out: Vec<Vec<Formula>>,
    }
    impl Walk<'_> {
        fn rec(&mut self, start: usize, used: usize) {
            if self.stack.len() >= 2 {
                self.out.push(self.stack.iter().map(|&i| self.items[i].clone()).collect());
            }
            if self.stack.len() == self.width {
                return;
            }
            for k in 0..=self.budget - used {
                let from = self.by_size[k].partition_point(|&i| i < start);
                for pos in from..self.by_size[k].len() {
                    let i = self.by_size[k][pos];
                    self.stack.push(i);
                    self.rec(i + 1, used + k);
                    self.stack.pop();
                }
            }
        }
    }
    if width < 2 {
        return Vec::new();
    }
    let mut walk = Walk { items, by_size: &by_size, width, budget, stack: Vec::new(), out: Vec::new() };
    walk.rec(0, 0);
    walk.out
}

/// All formulas of the fragment whose free variables lie in `free`.
pub fn enumerate_fragment(sig: &SignatureSpec, frag: &Fragment, free: &[Var]) -> Vec<Formula> {
    let mut per_sort = vec![0usize; sig.sorts().len()];
    let mut ctx: Vec<Var> = Vec::new();
    for v in free {
        if per_sort[v.sort] < frag.max_free_per_sort && !ctx.contains(v) {
            per_sort[v.sort] += 1;
            ctx.push(v.clone());
        }
    }

    let rels: Vec<RelId> = (0..sig.relations().len())
        .filter(|&r| match &frag.relations {
            Some(names) => names.contains(&sig.relations()[r].name),
            None => true,
        })
        .collect();
    let locs: Vec<Vec<LocId>> = (0..sig.sorts().len())
        .map(|s| {
            let m = sig.monoid(s);
            (0..m.len())
                .filter(|&d| d != m.identity())
                .filter(|&d| match &frag.locality {
                    Some(names) => names.iter().any(|n| n == m.name(d)),
                    None => true,
                })
                .collect()
        })
        .collect();

    let (plain, local, disj) = match frag.class {
        ClassFilter::Positive | ClassFilter::Negative => (true, true, true),
        ClassFilter::Pp => (true, true, false),
        ClassFilter::LocalPositive | ClassFilter::Pi1Local => (false, true, true),
        ClassFilter::LocalPp => (false, true, false),
        ClassFilter::QfPositive => (false, false, true),
    };
    let taken: BTreeSet<&str> = ctx
        .iter()
        .map(|v| v.name.as_str())
        .chain(sig.constants().iter().map(|c| c.name.as_str()))
        .collect();
    let prefix = ["y", "z", "w", "u", "v", "bound_"]
        .into_iter()
        .find(|p| (0..=frag.max_depth).all(|k| !taken.contains(format!("{p}{k}").as_str())))
        .unwrap_or("bound_")
        .to_string();

    let gen = Gen {
        sig,
        rels,
        locs,
        plain,
        local,
        disj,
        width: frag.max_width,
        budget: frag.atom_budget(),
        prefix,
        n_free: ctx.len(),
    };
    let depth = if frag.class == ClassFilter::QfPositive { 0 } else { frag.max_depth };
    let mut positive = vec![Formula::Top, Formula::Bot];
    positive.extend(ctx.iter().map(|v| Formula::Equal(Term::Var(v.clone()), Term::Var(v.clone()))));
    positive.extend(gen.layer(&ctx, depth));

    let mut keyed: Vec<(usize, usize, Formula)> =
        positive.into_iter().map(|f| (f.depth(), f.width(), f)).collect();
    keyed.sort_unstable();
    keyed.dedup();
    let positive: Vec<Formula> = keyed.into_iter().map(|(_, _, f)| f).collect();
    match frag.class {
        ClassFilter::Negative => positive.into_iter().map(Formula::not).collect(),
        ClassFilter::Pi1Local => {
            let mut out = Vec::with_capacity(positive.len() * 2);
            for f in positive {
                out.push(Formula::forall_many(ctx.iter().cloned(), f.clone()));
                out.push(Formula::forall_many(ctx.iter().cloned(), Formula::not(f)));
            }
            out
        }
        _ => positive,
    }
}

#[cfg(test)]
mod tests {
    use super::super::{classify, print};
    use super::*;
    use crate::signature::LocalityMonoid;
    use proptest::prelude::*;

    fn unary_p() -> SignatureSpec {
        SignatureSpec::one_sorted("s", &[("P", 1)], &[], LocalityMonoid::saturating(0)).unwrap()
    }

    #[test]
    fn depth_zero_width_one() {
        let s = unary_p();
        let fs = enumerate_fragment(&s, &Fragment::new(0, 1, ClassFilter::Positive), &[Var::new("x", 0)]);
        let printed: Vec<String> = fs.iter().map(|f| print(f, &s)).collect();
        // by hand: the atoms over {x} are x = x and P(x), plus the two constants
        assert_eq!(printed, vec!["true", "false", "x = x", "P(x)"]);
    }

    #[test]
    fn empty_language_sentences() {
        let s = SignatureSpec::one_sorted("s", &[], &[], LocalityMonoid::saturating(0)).unwrap();
        let fs = enumerate_fragment(&s, &Fragment::new(0, 1, ClassFilter::Positive), &[]);
        assert_eq!(fs, vec![Formula::Top, Formula::Bot]);
    }

    #[test]
    fn classes_are_respected() {
        let s = SignatureSpec::one_sorted("s", &[("P", 1), ("R", 2)], &["c"], LocalityMonoid::saturating(2)).unwrap();
        let free = [Var::new("x", 0)];
        for (class, check) in [
            (ClassFilter::Pp, (|c: super::super::FormulaClass| c.primitive_positive) as fn(_) -> bool),
            (ClassFilter::LocalPositive, |c| c.local_positive),
            (ClassFilter::LocalPp, |c| c.local_primitive_positive),
            (ClassFilter::QfPositive, |c| c.positive && c.quantifier_free),
            (ClassFilter::Negative, |c| c.negative),
            (ClassFilter::Pi1Local, |c| c.pi1_local),
        ] {
            let fs = enumerate_fragment(&s, &Fragment::new(1, 2, class), &free);
            assert!(!fs.is_empty());
            for f in &fs {
                assert!(check(classify(f, &s)), "{class:?}: {}", print(f, &s));
                assert!(f.free_variables().iter().all(|v| free.contains(v)) || class == ClassFilter::Pi1Local);
            }
        }
    }

    #[test]
    fn no_duplicates_and_sorted() {
        let s = SignatureSpec::one_sorted("s", &[("P", 1), ("R", 2)], &[], LocalityMonoid::saturating(2)).unwrap();
        let fs = enumerate_fragment(&s, &Fragment::new(1, 2, ClassFilter::Positive), &[Var::new("x", 0)]);
        let keys: Vec<_> = fs.iter().map(|f| (f.depth(), f.width(), f.clone())).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn relation_and_locality_filters() {
        let s = SignatureSpec::one_sorted("s", &[("P", 1), ("Q", 1)], &[], LocalityMonoid::saturating(3)).unwrap();
        let frag = Fragment::new(1, 1, ClassFilter::LocalPp).with_relations(&["Q"]).with_locality(&["d2"]);
        for f in enumerate_fragment(&s, &frag, &[Var::new("x", 0)]) {
            let text = print(&f, &s);
            assert!(!text.contains("P(") && !text.contains("d1") && !text.contains("d3"), "{text}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn count_is_monotone(depth in 0usize..2, width in 1usize..3, free in 0usize..2, which in 0usize..3) {
            let s = SignatureSpec::one_sorted("s", &[("P", 1), ("Q", 1)], &["c"], LocalityMonoid::saturating(1)).unwrap();
            let vars = [Var::new("x", 0), Var::new("x'", 0)];
            let base = Fragment::new(depth, width, ClassFilter::Positive).with_free(free);
            let bigger = match which {
                0 => Fragment { max_depth: depth + 1, ..base.clone() },
                1 => Fragment { max_width: width + 1, ..base.clone() },
                _ => Fragment { max_free_per_sort: free + 1, ..base.clone() },
            };
            let small: BTreeSet<Formula> = enumerate_fragment(&s, &base, &vars).into_iter().collect();
            let large: BTreeSet<Formula> = enumerate_fragment(&s, &bigger, &vars).into_iter().collect();
            prop_assert!(small.is_subset(&large));
        }
    }
}
