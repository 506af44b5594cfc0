//! Model construction: canonical models of primitive positive sentences and
//! bounded enumeration of small local structures.

use std::sync::Arc;

use crate::formula::{normalize, Formula, NormalForm, Rel, Term, Var};
use crate::signature::{LocId, SignatureSpec, SortId};
use crate::structure::{check_locality_axioms, FiniteStructure, PairTable};

/// Result of building the canonical model of a primitive positive formula.
#[derive(Debug, Clone)]
pub(crate) enum Canonical {
    Model(FiniteStructure),
    /// The formula contains `⊥`.
    Unsat,
    /// Some sort has no greatest locality element, so totality has no
    /// canonical solution.
    NoTop,
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, a: usize) -> usize {
        let mut r = a;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut x = a;
        while self.0[x] != r {
            let next = self.0[x];
            self.0[x] = r;
            x = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (lo, hi) = (ra.min(rb), ra.max(rb));
        self.0[hi] = lo;
        true
    }
}

/// Splits a primitive positive formula into existential variables and atoms.
pub(crate) fn pp_parts(f: &Formula, sig: &SignatureSpec) -> Option<(Vec<Var>, Vec<Formula>)> {
    let prenex = normalize(f, NormalForm::PrenexPp, sig).ok()?;
    let mut vars = Vec::new();
    let mut cur = &prenex;
    while let Formula::Exists(v, body) = cur {
        vars.push(v.clone());
        cur = body;
    }
    let atoms = match cur {
        Formula::And(fs) => fs.clone(),
        Formula::Top => vec![],
        other => vec![other.clone()],
    };
    Some((vars, atoms))
}

/// The least local structure with elements for `free`, the variables of
/// `f` and the constants, satisfying the atoms of `f` under the identity
/// assignment. Every local model of `f` (with the free variables assigned)
/// receives a homomorphism from it.
pub(crate) fn canonical_model(sig: &Arc<SignatureSpec>, free: &[Var], f: &Formula) -> Canonical {
    let Some((bound, atoms)) = pp_parts(f, sig) else { return Canonical::Unsat };
    let ns = sig.sorts().len();
    if (0..ns).any(|s| sig.monoid(s).top().is_none()) {
        return Canonical::NoTop;
    }
    let vars: Vec<Var> = free.iter().cloned().chain(bound).collect();
    let nv = vars.len();
    let nodes = nv + sig.constants().len();
    let node_sort: Vec<SortId> =
        vars.iter().map(|v| v.sort).chain(sig.constants().iter().map(|c| c.sort)).collect();
    let node_of = |t: &Term| -> usize {
        match t {
            Term::Var(v) => vars.iter().rposition(|w| w == v).expect("variable of the formula"),
            Term::Const(c) => nv + c,
        }
    };
    let mut uf = UnionFind((0..nodes).collect());
    let mut rel_atoms: Vec<(usize, Vec<usize>)> = Vec::new();
    let mut loc_atoms: Vec<(SortId, LocId, usize, usize)> = Vec::new();
    for a in &atoms {
        match a {
            Formula::Top => {}
            Formula::Bot => return Canonical::Unsat,
            Formula::Equal(t1, t2) => {
                uf.union(node_of(t1), node_of(t2));
            }
            Formula::Atom { rel: Rel::Sym(r), args } => rel_atoms.push((*r, args.iter().map(node_of).collect())),
            Formula::Atom { rel: Rel::Loc(s, d), args } => {
                let (x, y) = (node_of(&args[0]), node_of(&args[1]));
                if *d == sig.monoid(*s).identity() {
                    uf.union(x, y);
                } else {
                    loc_atoms.push((*s, *d, x, y));
                }
            }
            _ => return Canonical::Unsat,
        }
    }
    loop {
        // elements per sort, numbered by first node
        let mut elem_of = vec![usize::MAX; nodes];
        let mut members: Vec<Vec<Vec<usize>>> = vec![Vec::new(); ns];
        for node in 0..nodes {
            let r = uf.find(node);
            if elem_of[r] == usize::MAX {
                elem_of[r] = members[node_sort[node]].len();
                members[node_sort[node]].push(Vec::new());
            }
            elem_of[node] = elem_of[r];
            members[node_sort[node]][elem_of[node]].push(node);
        }
        let sizes: Vec<usize> = members.iter().map(|m| m.len().max(1)).collect();
        let mut tables: Vec<Vec<PairTable>> = (0..ns)
            .map(|s| {
                let m = sig.monoid(s);
                (0..m.len())
                    .map(|d| {
                        if d == m.top().unwrap() {
                            PairTable::full(sizes[s], sizes[s])
                        } else if m.le(m.identity(), d) {
                            PairTable::diagonal(sizes[s])
                        } else {
                            PairTable::new(sizes[s], sizes[s])
                        }
                    })
                    .collect()
            })
            .collect();
        for &(s, d, x, y) in &loc_atoms {
            tables[s][d].insert(elem_of[x], elem_of[y]);
        }
        for c1 in 0..sig.constants().len() {
            for c2 in 0..sig.constants().len() {
                let s = sig.constants()[c1].sort;
                if sig.constants()[c2].sort == s {
                    tables[s][sig.bound(c1, c2)].insert(elem_of[nv + c1], elem_of[nv + c2]);
                }
            }
        }
        let mut merge = None;
        'sorts: for s in 0..ns {
            close(&mut tables[s], sig, s, sizes[s]);
            let id = sig.monoid(s).identity();
            for (a, b) in tables[s][id].pairs() {
                if a != b {
                    merge = Some((members[s][a][0], members[s][b][0]));
                    break 'sorts;
                }
            }
        }
        if let Some((x, y)) = merge {
            uf.union(x, y);
            continue;
        }
        let universes: Vec<Vec<String>> = (0..ns)
            .map(|s| {
                if members[s].is_empty() {
                    return vec!["_".to_string()];
                }
                members[s]
                    .iter()
                    .map(|class| {
                        class
                            .iter()
                            .map(|&n| if n < nv { vars[n].name.clone() } else { sig.constants()[n - nv].name.clone() })
                            .collect::<Vec<_>>()
                            .join("=")
                    })
                    .collect()
            })
            .collect();
        let mut m = FiniteStructure::new(sig.clone(), universes).expect("distinct labels");
        for c in 0..sig.constants().len() {
            m.set_constant(c, elem_of[nv + c]).expect("constant in range");
        }
        for (r, args) in &rel_atoms {
            m.add_tuple(*r, args.iter().map(|&n| elem_of[n]).collect()).expect("sorted tuple");
        }
        for (s, row) in tables.into_iter().enumerate() {
            let id = sig.monoid(s).identity();
            for (d, t) in row.into_iter().enumerate() {
                if d != id {
                    m.set_locality(s, d, t).expect("square table");
                }
            }
        }
        return Canonical::Model(m);
    }
}

/// Closes one sort's locality tables under symmetry, monotonicity and
/// composition.
fn close(tables: &mut [PairTable], sig: &SignatureSpec, s: SortId, n: usize) {
    let mon = sig.monoid(s);
    let k = mon.len();
    let mut changed = true;
    while changed {
        changed = false;
        for d in 0..k {
            let pairs: Vec<(usize, usize)> = tables[d].pairs().collect();
            for (a, b) in pairs {
                if !tables[d].contains(b, a) {
                    tables[d].insert(b, a);
                    changed = true;
                }
                for e in 0..k {
                    if e != d && mon.le(d, e) && !tables[e].contains(a, b) {
                        tables[e].insert(a, b);
                        changed = true;
                    }
                }
            }
        }
        for d1 in 0..k {
            for d2 in 0..k {
                let t = mon.op(d1, d2);
                for a in 0..n {
                    let mids: Vec<usize> = tables[d1].row(a).collect();
                    for b in mids {
                        let ends: Vec<usize> = tables[d2].row(b).collect();
                        for c in ends {
                            if !tables[t].contains(a, c) {
                                tables[t].insert(a, c);
                                changed = true;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// How a bounded enumeration ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum SearchEnd {
    /// The callback accepted a structure.
    Found,
    /// Every structure up to the bound was visited.
    Exhausted,
    /// The candidate budget ran out first.
    Budget,
}

/// Candidates examined before a bounded search gives up.
pub const SEARCH_BUDGET: usize = 2_000_000;

/// Nonempty up-sets of the order that avoid the identity: the possible sets
/// of locality elements relating two distinct elements.
fn pair_labels(sig: &SignatureSpec, s: SortId) -> Vec<Vec<LocId>> {
    let m = sig.monoid(s);
    let others: Vec<LocId> = (0..m.len()).filter(|&d| d != m.identity()).collect();
    let mut out = Vec::new();
    for mask in 1u64..(1u64 << others.len().min(20)) {
        let set: Vec<LocId> = others.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &d)| d).collect();
        let up = set.iter().all(|&d| (0..m.len()).all(|e| !m.le(d, e) || set.contains(&e)));
        if up {
            out.push(set);
        }
    }
    out
}

fn size_vectors(ns: usize, bound: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..ns {
        out = out.into_iter().flat_map(|v: Vec<usize>| (1..=bound).map(move |k| [v.clone(), vec![k]].concat())).collect();
    }
    out.sort_by_key(|v| (v.iter().sum::<usize>(), v.clone()));
    out
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

/// A structure in cell form, for canonical comparison.
struct Cells<'a> {
    sig: &'a SignatureSpec,
    sizes: &'a [usize],
    labels: &'a [Vec<usize>],
    pair_index: &'a [Vec<Vec<usize>>],
    consts: &'a [usize],
    tuples: &'a [Vec<Vec<usize>>],
    rel_bits: &'a [Vec<bool>],
}

impl Cells<'_> {
    fn encode(&self, perm: &[Vec<usize>]) -> Vec<usize> {
        let mut out = Vec::new();
        for (c, sym) in self.sig.constants().iter().enumerate() {
            out.push(perm[sym.sort][self.consts[c]]);
        }
        for s in 0..self.sizes.len() {
            let n = self.sizes[s];
            let mut inv = vec![0; n];
            for (a, &pa) in perm[s].iter().enumerate() {
                inv[pa] = a;
            }
            for a in 0..n {
                for b in a + 1..n {
                    out.push(self.labels[s][self.pair_index[s][inv[a]][inv[b]]]);
                }
            }
        }
        for (r, sym) in self.sig.relations().iter().enumerate() {
            let mut set: Vec<Vec<usize>> = self.tuples[r]
                .iter()
                .zip(&self.rel_bits[r])
                .filter(|(_, &b)| b)
                .map(|(t, _)| t.iter().zip(&sym.profile).map(|(&e, &s)| perm[s][e]).collect())
                .collect();
            set.sort();
            let mut bits: Vec<usize> = self.tuples[r].iter().map(|t| usize::from(set.binary_search(t).is_ok())).collect();
            // larger tuples first so that fewer facts sort earlier
            bits.reverse();
            out.extend(bits);
        }
        out
    }
}

fn all_perms(sizes: &[usize]) -> Vec<Vec<Vec<usize>>> {
    let mut out: Vec<Vec<Vec<usize>>> = vec![vec![]];
    for &n in sizes {
        let ps = permutations(n);
        out = out
            .into_iter()
            .flat_map(|acc| ps.iter().map(move |p| [acc.clone(), vec![p.clone()]].concat()))
            .collect();
    }
    out
}

fn mixed_radix_next(counter: &mut [usize], radix: &[usize]) -> bool {
    for i in (0..counter.len()).rev() {
        counter[i] += 1;
        if counter[i] < radix[i] {
            return true;
        }
        counter[i] = 0;
    }
    false
}

fn product_tuples(profile: &[SortId], sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &s in profile {
        out = out.into_iter().flat_map(|t: Vec<usize>| (0..sizes[s]).map(move |e| [t.clone(), vec![e]].concat())).collect();
    }
    out
}

/// Visits local structures with at most `bound` elements per sort, one per
/// isomorphism class (lexicographically least cell encoding), until `visit`
/// returns true or `budget` candidates have been built. Reflexive pairs lie
/// exactly in the elements above the identity.
pub(crate) fn enumerate_models(
    sig: &Arc<SignatureSpec>,
    bound: usize,
    budget: usize,
    mut visit: impl FnMut(&FiniteStructure) -> bool,
) -> SearchEnd {
    let ns = sig.sorts().len();
    let labels_per_sort: Vec<Vec<Vec<LocId>>> = (0..ns).map(|s| pair_labels(sig, s)).collect();
    let mut spent = 0usize;
    for sizes in size_vectors(ns, bound) {
        let pair_index: Vec<Vec<Vec<usize>>> = sizes
            .iter()
            .map(|&n| {
                let mut idx = vec![vec![usize::MAX; n]; n];
                let mut k = 0;
                for a in 0..n {
                    for b in a + 1..n {
                        idx[a][b] = k;
                        idx[b][a] = k;
                        k += 1;
                    }
                }
                idx
            })
            .collect();
        let npairs: Vec<usize> = sizes.iter().map(|&n| n * (n - 1) / 2).collect();
        if npairs.iter().zip(&labels_per_sort).any(|(&p, l)| p > 0 && l.is_empty()) {
            continue;
        }
        let perms = all_perms(&sizes);
        let tuples: Vec<Vec<Vec<usize>>> = sig.relations().iter().map(|r| product_tuples(&r.profile, &sizes)).collect();
        let label_radix: Vec<usize> =
            (0..ns).flat_map(|s| std::iter::repeat_n(labels_per_sort[s].len(), npairs[s])).collect();
        let mut label_counter = vec![0usize; label_radix.len()];
        loop {
            let labels: Vec<Vec<usize>> = {
                let mut it = label_counter.iter().copied();
                (0..ns).map(|s| (0..npairs[s]).map(|_| it.next().unwrap()).collect()).collect()
            };
            let mut base = FiniteStructure::new(
                sig.clone(),
                sizes.iter().map(|&n| (0..n).map(|e| format!("m{e}")).collect()).collect(),
            )
            .expect("fresh universe");
            for s in 0..ns {
                let mon = sig.monoid(s);
                let n = sizes[s];
                for d in 0..mon.len() {
                    if d == mon.identity() {
                        continue;
                    }
                    let t = PairTable::from_fn(n, n, |a, b| {
                        if a == b {
                            mon.le(mon.identity(), d)
                        } else {
                            labels_per_sort[s][labels[s][pair_index[s][a][b]]].contains(&d)
                        }
                    });
                    base.set_locality(s, d, t).expect("square table");
                }
            }
            let report = check_locality_axioms(&base);
            let shape_ok = report.first_failure_among(&[1, 2, 3, 5]).is_none();
            if shape_ok {
                let const_radix: Vec<usize> = sig.constants().iter().map(|c| sizes[c.sort]).collect();
                let mut consts = vec![0usize; const_radix.len()];
                loop {
                    let mut with_consts = base.clone();
                    for (c, &e) in consts.iter().enumerate() {
                        with_consts.set_constant(c, e).expect("in range");
                    }
                    if check_locality_axioms(&with_consts).a4.passed() {
                        let bit_radix: Vec<usize> = tuples.iter().flat_map(|ts| std::iter::repeat_n(2, ts.len())).collect();
                        let mut bits = vec![0usize; bit_radix.len()];
                        loop {
                            spent += 1;
                            if spent > budget {
                                return SearchEnd::Budget;
                            }
                            let rel_bits: Vec<Vec<bool>> = {
                                let mut it = bits.iter().copied();
                                tuples.iter().map(|ts| ts.iter().map(|_| it.next().unwrap() == 1).collect()).collect()
                            };
                            let cells = Cells {
                                sig,
                                sizes: &sizes,
                                labels: &labels,
                                pair_index: &pair_index,
                                consts: &consts,
                                tuples: &tuples,
                                rel_bits: &rel_bits,
                            };
                            let own = cells.encode(&perms[0]);
                            if perms[1..].iter().all(|p| cells.encode(p) >= own) {
                                let mut m = with_consts.clone();
                                for (r, ts) in tuples.iter().enumerate() {
                                    for (t, &b) in ts.iter().zip(&rel_bits[r]) {
                                        if b {
                                            m.add_tuple(r, t.clone()).expect("sorted tuple");
                                        }
                                    }
                                }
                                if visit(&m) {
                                    return SearchEnd::Found;
                                }
                            }
                            if !mixed_radix_next(&mut bits, &bit_radix) {
                                break;
                            }
                        }
                    }
                    if !mixed_radix_next(&mut consts, &const_radix) {
                        break;
                    }
                }
            }
            if !mixed_radix_next(&mut label_counter, &label_radix) {
                break;
            }
        }
    }
    SearchEnd::Exhausted
}

/// Minimal locality elements relating two elements, first in index order.
pub(crate) fn tightest(m: &FiniteStructure, s: SortId, a: usize, b: usize) -> Option<LocId> {
    m.sig().monoid(s).minimal_where(|d| m.related(s, d, a, b)).into_iter().next()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse;
    use crate::morphism::find_homomorphisms;
    use crate::signature::LocalityMonoid;

    fn small_sig() -> Arc<SignatureSpec> {
        Arc::new(SignatureSpec::one_sorted("s", &[("P", 1)], &[], LocalityMonoid::saturating(2)).unwrap())
    }

    #[test]
    fn canonical_model_is_initial() {
        let sig = small_sig();
        let f = parse("exists x y. (d1(x, y) & P(x))", &sig).unwrap();
        let Canonical::Model(c) = canonical_model(&sig, &[], &f) else { panic!() };
        assert!(check_locality_axioms(&c).all_pass());
        assert_eq!(c.size(0), 2);
        // every local model of the sentence up to size 3 receives a hom
        enumerate_models(&sig, 3, SEARCH_BUDGET, |m| {
            if crate::eval::holds(m, &f).unwrap() {
                assert!(!find_homomorphisms(&c, m, &[], Some(1)).unwrap().is_empty());
            }
            false
        });
    }

    #[test]
    fn identity_atoms_merge() {
        let sig = small_sig();
        let f = parse("exists x y. (d0(x, y) & P(y))", &sig).unwrap();
        let Canonical::Model(c) = canonical_model(&sig, &[], &f) else { panic!() };
        assert_eq!(c.size(0), 1);
        assert_eq!(canonical_model(&sig, &[], &Formula::Bot).clone_kind(), "unsat");
    }

    impl Canonical {
        fn clone_kind(&self) -> &'static str {
            match self {
                Canonical::Model(_) => "model",
                Canonical::Unsat => "unsat",
                Canonical::NoTop => "notop",
            }
        }
    }

    /// Brute-force count of isomorphism classes for one unary predicate and
    /// the monoid d0 ≤ d1 ≤ d2 (d1 ∗ d1 = d2): on n elements, pair labels
    /// {d1,d2} or {d2} with the triangle rule, times predicate subsets.
    #[test]
    fn enumeration_counts_isomorphism_classes() {
        let sig = small_sig();
        let mut per_size = [0usize; 4];
        let end = enumerate_models(&sig, 3, SEARCH_BUDGET, |m| {
            assert!(check_locality_axioms(m).all_pass());
            per_size[m.size(0)] += 1;
            false
        });
        assert_eq!(end, SearchEnd::Exhausted);
        // size 1: P or not
        assert_eq!(per_size[1], 2);
        // size 2: the pair is near or far; predicate up to swap: 3 each
        assert_eq!(per_size[2], 6);
    }

    #[test]
    fn permutation_listing() {
        assert_eq!(permutations(3).len(), 6);
        assert_eq!(size_vectors(2, 2), vec![vec![1, 1], vec![1, 2], vec![2, 1], vec![2, 2]]);
    }
}
