//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line to stderr
//! (bypassing the harness capture) and then asserts its verdict.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io::Write;
use std::sync::Arc;

use locus::corpus::{
    c, c_scaled, c_theory, full_distance_decomposition, hamming, hamming_point, hamming_theory, i_point,
    interval_chain, j_point, pointed_z, pointed_z_theory, segment, singleton_theory, tree, tree_coords,
    tree_obstruction, tree_theory, z, z_family_theory, z_signature, zdist, zdist_decomposition_fragments,
    zdist_theory, zdist_ui_sentence, zdist_window_fragment, Decomposition,
};
use locus::eval::{all_tuples, definable_set, holds, Evaluator};
use locus::formula::{classify, enumerate_fragment, parse, parse_in_context, print, ClassFilter, Formula, Fragment, Var};
use locus::limits::{direct_limit, verify_limit_lemma};
use locus::morphism::{
    check_locally_positively_closed, find_homomorphisms, find_isomorphism, is_positive_embedding,
    EmbeddingCertificate, EmbeddingMode, Homomorphism, PcVerdict,
};
use locus::signature::SignatureSpec;
use locus::structure::{check_locality_axioms, AxiomOutcome, AxiomWitness, FiniteStructure, PairTable};
use locus::theory::{
    ball_witness, check_approx_complementary, check_irreducibility, check_ljcp, find_denials, hierarchy_report,
    inherent_locality_probe, locally_entails, positive_part_membership, ApproxMode, Entailment, IrreducibilityMode, ProbeOutcome, TheorySpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(n: usize, title: &str, ok: bool, detail: &str) {
    let tag = if ok { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr().lock(), "{tag} criterion {n:>2}: {title} ({detail})");
    assert!(ok, "criterion {n} failed: {detail}");
}

fn value(m: &FiniteStructure, e: usize) -> i64 {
    m.label(0, e).parse().expect("integer label")
}

/// Homomorphism check written against the raw tables.
fn preserves(a: &FiniteStructure, b: &FiniteStructure, h: &Homomorphism) -> bool {
    let sig = a.sig();
    for (r, rel) in sig.relations().iter().enumerate() {
        for t in a.tuples(r) {
            let img: Vec<usize> = t.iter().zip(&rel.profile).map(|(&e, &s)| h.maps[s][e]).collect();
            if !b.holds(r, &img) {
                return false;
            }
        }
    }
    for s in 0..sig.sorts().len() {
        for d in 0..sig.monoid(s).len() {
            if a.loc(s, d).pairs().any(|(x, y)| !b.related(s, d, h.maps[s][x], h.maps[s][y])) {
                return false;
            }
        }
    }
    (0..sig.constants().len()).all(|k| {
        let s = sig.constants()[k].sort;
        h.maps[s][a.constant(k)] == b.constant(k)
    })
}

fn compose(f: &Homomorphism, g: &Homomorphism) -> Homomorphism {
    Homomorphism { maps: f.maps.iter().zip(&g.maps).map(|(fm, gm)| fm.iter().map(|&e| gm[e]).collect()).collect() }
}

fn holds_at(m: &FiniteStructure, f: &Formula, vars: &[Var], tuple: &[usize]) -> bool {
    Evaluator::new(m, f, vars).unwrap().eval(tuple)
}

// ---------------------------------------------------------------------------

fn corpus_structures() -> Vec<(String, FiniteStructure)> {
    let mut v = vec![
        ("Z(10)".to_string(), z(10)),
        ("I".into(), i_point(10)),
        ("J".into(), j_point(10)),
        ("hamming(4)".into(), hamming(4)),
        ("tree(5)".into(), tree(5)),
        ("zdist(8)".into(), zdist(8)),
    ];
    v.extend((1..=4).map(|n| (format!("C({n})"), c(n))));
    v
}

#[test]
fn criterion_01_axiom_soundness() {
    let mut notes = Vec::new();
    let mut ok = true;
    for (name, m) in corpus_structures() {
        let r = check_locality_axioms(&m);
        if !r.all_pass() {
            ok = false;
            notes.push(format!("{name} fails: {r:?}"));
            continue;
        }
        if m.size(0) < 3 {
            continue;
        }

        // Drop one direction of a d1 pair.
        let (a, b) = m.loc(0, 1).pairs().find(|(a, b)| a != b).expect("a d1 edge");
        let mut sym = m.clone();
        sym.remove_locality_pair(0, 1, b, a).unwrap();
        let caught = match &check_locality_axioms(&sym).a1 {
            AxiomOutcome::Fail(w @ AxiomWitness::Symmetry { d, a: wa, b: wb, .. }) => {
                let (f, env) = w.as_formula(&sym);
                d == "d1"
                    && wa == m.label(0, a)
                    && wb == m.label(0, b)
                    && locus::eval::eval(&sym, &f, &env).unwrap()
                    && !locus::eval::eval(&m, &f, &env).unwrap()
            }
            _ => false,
        };
        ok &= caught;
        notes.push(format!("{name}: symmetry {}", if caught { "caught" } else { "MISSED" }));

        // Remove a d2 pair that is a d1 path of length two.
        let sig = m.sig();
        if sig.monoid(0).top() != Some(2) && sig.monoid(0).len() > 2 {
            let triple = (0..m.size(0)).find_map(|x| {
                (0..m.size(0)).find_map(|z| {
                    if m.related(0, 2, x, z) && !m.related(0, 1, x, z) {
                        (0..m.size(0)).find(|&y| m.related(0, 1, x, y) && m.related(0, 1, y, z)).map(|y| (x, y, z))
                    } else {
                        None
                    }
                })
            });
            if let Some((x, _, zz)) = triple {
                let mut comp = m.clone();
                comp.remove_locality_pair(0, 2, x, zz).unwrap();
                comp.remove_locality_pair(0, 2, zz, x).unwrap();
                let r = check_locality_axioms(&comp);
                let caught = match &r.a3 {
                    AxiomOutcome::Fail(AxiomWitness::Composition { d1, d2, a, b, c, .. }) => {
                        let s = comp.sig();
                        let (i, j) = (s.locality_index(0, d1).unwrap(), s.locality_index(0, d2).unwrap());
                        let (ea, eb, ec) =
                            (comp.element(0, a).unwrap(), comp.element(0, b).unwrap(), comp.element(0, c).unwrap());
                        let ends: BTreeSet<usize> = [ea, ec].into();
                        comp.related(0, i, ea, eb)
                            && comp.related(0, j, eb, ec)
                            && !comp.related(0, s.monoid(0).op(i, j), ea, ec)
                            && ends == BTreeSet::from([x, zz])
                    }
                    _ => false,
                };
                ok &= caught && r.a1.passed() && r.a2.passed();
                notes.push(format!("{name}: composition {}", if caught { "caught" } else { "MISSED" }));
            }
        }

        // Shrink every ball around one element to the element itself.
        if sig.constants().is_empty() {
            let o = m.size(0) / 2;
            let mut lone = m.clone();
            for d in 1..sig.monoid(0).len() {
                for e in 0..m.size(0) {
                    if e != o {
                        lone.remove_locality_pair(0, d, o, e).unwrap();
                        lone.remove_locality_pair(0, d, e, o).unwrap();
                    }
                }
            }
            let r = check_locality_axioms(&lone);
            let label = m.label(0, o).to_string();
            let caught = r.premodel()
                && match &r.a5 {
                    AxiomOutcome::Fail(AxiomWitness::Totality { a, b, .. }) => {
                        (a == &label) != (b == &label)
                            && (0..lone.sig().monoid(0).len()).all(|d| {
                                !lone.related(0, d, lone.element(0, a).unwrap(), lone.element(0, b).unwrap())
                            })
                    }
                    _ => false,
                };
            ok &= caught;
            notes.push(format!("{name}: ball {}", if caught { "caught" } else { "MISSED" }));
        }
    }
    verdict(1, "axiom soundness and mutations", ok, &notes.join("; "))
}

// ---------------------------------------------------------------------------

/// Clusters of integers; `d_k` relates points of one cluster at distance at
/// most `k`, the top element relates whole clusters. Returns the structure
/// and the cluster of each element.
fn clustered(rng: &mut ChaCha8Rng, pointed: bool) -> (FiniteStructure, Vec<usize>) {
    let n = 2i64;
    let cap = 2 * n as usize;
    let sig = z_signature(n, if pointed { &["0"] } else { &[] });
    let clusters = rng.gen_range(2..=4);
    let mut labels = Vec::new();
    let mut values = Vec::new();
    let mut cluster = Vec::new();
    for k in 0..clusters {
        for i in 0..rng.gen_range(1..=5) {
            labels.push(format!("c{k}_{i}"));
            values.push(rng.gen_range(-3i64..=3));
            cluster.push(k);
        }
    }
    let len = labels.len();
    let mut m = FiniteStructure::new(Arc::clone(&sig), vec![labels]).unwrap();
    for r in 0..sig.relations().len() {
        for e in 0..len {
            if rng.gen_bool(0.4) {
                m.add_tuple(r, vec![e]).unwrap();
            }
        }
    }
    for d in 1..=cap {
        let t = PairTable::from_fn(len, len, |a, b| {
            cluster[a] == cluster[b] && (d == cap || (values[a] - values[b]).unsigned_abs() as usize <= d)
        });
        m.set_locality(0, d, t).unwrap();
    }
    if pointed {
        m.set_constant(0, 0).unwrap();
    }
    (m, cluster)
}

fn pi1_local_sentences(sig: &SignatureSpec) -> Vec<Formula> {
    let xs = [Var::new("x0", 0), Var::new("x1", 0)];
    let mut out = enumerate_fragment(sig, &Fragment::new(1, 2, ClassFilter::Pi1Local).with_free(1), &xs[..1]);
    out.extend(enumerate_fragment(sig, &Fragment::new(0, 2, ClassFilter::Pi1Local).with_free(2), &xs));
    out.retain(|f| f.is_sentence() && f.depth() <= 2);
    out
}

#[test]
fn criterion_02_local_component() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x10ca1);
    let sentences = pi1_local_sentences(&z_signature(2, &[]));
    let pointed_sentences = pi1_local_sentences(&z_signature(2, &["0"]));
    let mut ok = true;
    let mut notes = Vec::new();
    let mut transferred = 0usize;
    for round in 0..100 {
        let pointed = round % 4 == 3;
        let (m, cluster) = clustered(&mut rng, pointed);
        let parent = check_locality_axioms(&m);
        if !parent.premodel() || parent.a5.passed() {
            ok = false;
            notes.push(format!("round {round}: generator produced {parent:?}"));
            continue;
        }
        let base = if pointed {
            loop {
                let o = rng.gen_range(0..m.size(0));
                if cluster[o] == cluster[0] {
                    break o;
                }
            }
        } else {
            rng.gen_range(0..m.size(0))
        };
        let comp = match m.local_component(&[base]) {
            Ok(c) => c,
            Err(e) => {
                ok = false;
                notes.push(format!("round {round}: {e}"));
                continue;
            }
        };
        let expected: BTreeSet<&str> =
            (0..m.size(0)).filter(|&e| cluster[e] == cluster[base]).map(|e| m.label(0, e)).collect();
        let got: BTreeSet<&str> = comp.universe(0).iter().map(|s| s.as_str()).collect();
        if got != expected || !check_locality_axioms(&comp).all_pass() {
            ok = false;
            notes.push(format!("round {round}: component {got:?}, expected {expected:?}"));
            continue;
        }
        let pool = if pointed { &pointed_sentences } else { &sentences };
        for f in pool {
            if holds(&m, f).unwrap() {
                transferred += 1;
                if !holds(&comp, f).unwrap() {
                    ok = false;
                    notes.push(format!("round {round}: {} lost", print(f, m.sig())));
                    break;
                }
            }
        }
    }
    ok &= transferred > 0;
    notes.insert(0, format!("100 structures, {} sentences, {transferred} transfers checked", sentences.len()));
    verdict(2, "local component lemma", ok, &notes.join("; "))
}

// ---------------------------------------------------------------------------

fn embedding_groups() -> Vec<Vec<(String, FiniteStructure)>> {
    let sub = |m: &FiniteStructure, keep: &[&str]| m.induced_substructure_named(&[keep.to_vec()]).unwrap();
    let h3 = hamming(3);
    let t1 = tree(1);
    let zd = zdist(3);
    let pz = pointed_z(3);
    vec![
        vec![
            ("C(1)".into(), c_scaled(1, 3)),
            ("C(2)".into(), c_scaled(2, 3)),
            ("C(3)".into(), c(3)),
            ("[0,3]".into(), segment(0, 3, 3)),
            ("[-3,-1]".into(), segment(-3, -1, 3)),
            ("[1,2]".into(), segment(1, 2, 3)),
            ("I".into(), i_point(3)),
            ("J".into(), j_point(3)),
        ],
        vec![
            ("hamming(3)".into(), h3.clone()),
            ("010".into(), hamming_point(3, "010").unwrap()),
            ("111".into(), hamming_point(3, "111").unwrap()),
            ("{000,100,010}".into(), sub(&h3, &["000", "100", "010"])),
            ("{000,111}".into(), sub(&h3, &["000", "111"])),
        ],
        vec![
            ("tree(1)".into(), t1.clone()),
            ("tree path".into(), sub(&t1, &["(-1,1)", "(0,1)", "(1,1)"])),
            ("tree stem".into(), sub(&t1, &["(0,0)", "(0,1)"])),
        ],
        vec![
            ("zdist(3)".into(), zd.clone()),
            ("zdist [-1,1]".into(), sub(&zd, &["-1", "0", "1"])),
            ("zdist [0,3]".into(), sub(&zd, &["0", "1", "2", "3"])),
            ("zdist {-3,3}".into(), sub(&zd, &["-3", "3"])),
        ],
        vec![
            ("pointedZ(3)".into(), pz.clone()),
            ("pointed [-1,1]".into(), sub(&pz, &["-1", "0", "1"])),
            ("pointed [0,2]".into(), sub(&pz, &["0", "1", "2"])),
        ],
    ]
}

#[test]
fn criterion_03_embedding_oracles_agree() {
    let frag = Fragment::new(0, 2, ClassFilter::Positive);
    let fragment_mode = EmbeddingMode::Fragment { frag, with_diagram: true };
    let mut ok = true;
    let mut notes = Vec::new();
    let (mut homs, mut positive) = (0usize, 0usize);
    for group in embedding_groups() {
        for (na, a) in &group {
            for (nb, b) in &group {
                assert!(a.total_size() <= 8 && b.total_size() <= 8);
                for h in find_homomorphisms(a, b, &[], None).unwrap() {
                    homs += 1;
                    let r = is_positive_embedding(a, b, &h, &EmbeddingMode::Retraction).unwrap();
                    let f = is_positive_embedding(a, b, &h, &fragment_mode).unwrap();
                    if r.positive != f.positive {
                        ok = false;
                        notes.push(format!("{na} -> {nb} {:?}: retraction {} fragment {}", h.maps, r.positive, f.positive));
                    }
                    match &r.certificate {
                        EmbeddingCertificate::Retraction(back) => {
                            positive += 1;
                            let id = compose(&h, back);
                            let is_id = id.maps.iter().all(|m| m.iter().enumerate().all(|(i, &e)| i == e));
                            if !preserves(b, a, back) || !is_id {
                                ok = false;
                                notes.push(format!("{na} -> {nb}: bad retraction"));
                            }
                        }
                        EmbeddingCertificate::Violation { formula, vars, tuple } => {
                            let image: Vec<usize> = vars.iter().zip(tuple).map(|(v, &e)| h.apply(v.sort, e)).collect();
                            if !holds_at(b, formula, vars, &image) || holds_at(a, formula, vars, tuple) {
                                ok = false;
                                notes.push(format!("{na} -> {nb}: certificate is not a violation"));
                            }
                        }
                        EmbeddingCertificate::Reflected { .. } => ok = false,
                    }
                }
            }
        }
    }
    notes.insert(0, format!("{homs} homs, {positive} positive"));
    verdict(3, "retraction and fragment modes agree", ok && homs > 0, &notes.join("; "))
}

// ---------------------------------------------------------------------------

fn pc_certificate_checks(m: &FiniteStructure, cat: &[FiniteStructure], v: &PcVerdict) -> bool {
    match v {
        PcVerdict::Yes { .. } => true,
        PcVerdict::No(w) => {
            let target = &cat[w.target];
            let image: Vec<usize> = w.vars.iter().zip(&w.tuple).map(|(v, &e)| w.hom.apply(v.sort, e)).collect();
            preserves(m, target, &w.hom)
                && classify(&w.formula, m.sig()).positive
                && holds_at(target, &w.formula, &w.vars, &image)
                && !holds_at(m, &w.formula, &w.vars, &w.tuple)
        }
    }
}

#[test]
fn criterion_04_pc_triple() {
    let cat = vec![z(10), i_point(10), j_point(10)];
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, m) in ["Z(10)", "I", "J"].iter().zip(&cat) {
        let v = check_locally_positively_closed(m, &cat, None).unwrap();
        ok &= v.is_yes() && pc_certificate_checks(m, &cat, &v);
        let shown = serde_json::to_string(&v.report(m, &cat)).unwrap();
        notes.push(format!("{name}: {shown}"));
    }
    let only_z = vec![z(10)];
    let seg = segment(0, 4, 10);
    let v = check_locally_positively_closed(&seg, &only_z, None).unwrap();
    ok &= !v.is_yes() && pc_certificate_checks(&seg, &only_z, &v);
    notes.push(format!("[0,4]: {}", serde_json::to_string(&v.report(&seg, &only_z)).unwrap()));
    verdict(4, "pc triple Z, I, J and the non-pc interval", ok, &notes.join("; "))
}

// ---------------------------------------------------------------------------

/// Every failing (φ, a) is covered by a returned denial, and each denial is
/// disjoint from φ on every catalogue member.
fn dichotomy(t: &TheorySpec, m: &FiniteStructure, want_local: bool) -> Result<String, String> {
    let x = Var::new("x", 0);
    let ctx = [x.clone()];
    let phi_frag = Fragment::new(1, 1, ClassFilter::LocalPositive).with_free(1);
    let psi_frag = Fragment::new(1, 1, ClassFilter::Pp).with_free(1);
    let phis: Vec<Formula> = enumerate_fragment(t.sig(), &phi_frag, &ctx)
        .into_iter()
        .filter(|f| classify(f, t.sig()).local_positive && f.occurs_free(&x))
        .collect();
    let cat = t.catalogue().unwrap();
    let mut covered = 0;
    for phi in &phis {
        let misses: Vec<Vec<usize>> = all_tuples(m, &ctx).filter(|a| !holds_at(m, phi, &ctx, a)).collect();
        if misses.is_empty() {
            continue;
        }
        let denials = find_denials(t, phi, &psi_frag).map_err(|e| e.to_string())?;
        for d in &denials {
            let dv = &d.vars;
            let joint = Formula::and(vec![phi.clone(), d.formula.clone()]);
            for member in cat {
                if dv.len() == 1 && all_tuples(member, dv).any(|a| holds_at(member, &joint, dv, &a)) {
                    return Err(format!("{} meets {}", print(&d.formula, t.sig()), print(phi, t.sig())));
                }
            }
        }
        for a in misses {
            let hit = denials.iter().any(|d| {
                (!want_local || classify(&d.formula, t.sig()).local_primitive_positive) && holds_at(m, &d.formula, &d.vars, &a)
            });
            if !hit {
                return Err(format!("{} at {}: no denial holds", print(phi, t.sig()), m.label(0, a[0])));
            }
            covered += 1;
        }
    }
    Ok(format!("{} formulas, {covered} failures covered", phis.len()))
}

#[test]
fn criterion_05_denial_dichotomy() {
    let z6 = TheorySpec::model_class(vec![z(6)], Fragment::new(0, 1, ClassFilter::Positive), 4).unwrap();
    let runs = [
        ("Z(6)", dichotomy(&z6, &z(6), false)),
        ("hamming(3)", dichotomy(&hamming_theory(3), &hamming(3), false)),
        ("pointedZ(6), local", dichotomy(&pointed_z_theory(6), &pointed_z(6), true)),
    ];
    let ok = runs.iter().all(|(_, r)| r.is_ok());
    let notes: Vec<String> = runs.iter().map(|(n, r)| format!("{n}: {}", r.clone().unwrap_or_else(|e| e))).collect();
    verdict(5, "denial dichotomy", ok, &notes.join("; "))
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_06_hierarchy_implications() {
    let theories = [
        ("C(3)", c_theory(3)),
        ("pointedZ(6)", pointed_z_theory(6)),
        ("Z-family(10)", z_family_theory(10)),
        ("I", singleton_theory(10, true)),
        ("J", singleton_theory(10, false)),
    ];
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, t) in &theories {
        let r = hierarchy_report(t).unwrap();
        let cat = t.catalogue().unwrap();
        // Recompute weak and full completeness from fragment sentences.
        let sentences: Vec<Formula> = enumerate_fragment(t.sig(), &t.fragment, &[])
            .into_iter()
            .filter(|f| f.is_sentence() && classify(f, t.sig()).positive)
            .collect();
        let truth: Vec<Vec<bool>> =
            cat.iter().map(|m| sentences.iter().map(|f| holds(m, f).unwrap()).collect()).collect();
        let theory: Vec<bool> = (0..sentences.len()).map(|j| truth.iter().any(|row| row[j])).collect();
        let weak = r.pc_members.iter().any(|&i| truth[i] == theory);
        let full = !r.pc_members.is_empty() && r.pc_members.iter().all(|&i| truth[i] == theory);
        let ljcp = check_ljcp(t, t.size_bound).unwrap();
        let witnesses_ok = ljcp
            .witnesses
            .iter()
            .all(|w| preserves(&cat[w.a], &cat[w.target], &w.hom_a) && preserves(&cat[w.b], &cat[w.target], &w.hom_b));
        let implications = [
            ("UI => LJCP", r.ui.is_none() || r.ljcp),
            ("LJCP => C", !r.ljcp || full),
            ("C => wC", !full || weak),
            ("wC => I", !weak || r.irreducible),
            ("pointed: I => LJCP", !(t.is_pointed() && r.irreducible) || r.ljcp),
        ];
        let failed: Vec<&str> = implications.iter().filter(|(_, b)| !b).map(|(n, _)| *n).collect();
        let agree = weak == r.weakly_complete && full == r.catalogue_complete && ljcp.holds == r.ljcp;
        ok &= failed.is_empty() && r.violations().is_empty() && agree && witnesses_ok;
        notes.push(format!(
            "{name}: ui {} ljcp {} C {full} wC {weak} I {} {failed:?}",
            r.ui.is_some(),
            r.ljcp,
            r.irreducible
        ));
    }
    let pz = hierarchy_report(&pointed_z_theory(6)).unwrap();
    let collapse = pz.pointed && pz.irreducible == pz.ljcp;
    ok &= collapse;
    notes.push(format!("pointed collapse {collapse}"));
    verdict(6, "hierarchy implications", ok, &notes.join("; "))
}

// ---------------------------------------------------------------------------

/// Smallest `|x − y|` with `P_k(x)` and `Q_k(y)` in a structure on integers.
fn pq_gap(m: &FiniteStructure, k: i64) -> Option<i64> {
    let vals: Vec<i64> = (0..m.size(0)).map(|e| value(m, e)).collect();
    let ps = vals.iter().filter(|&&v| v >= k);
    ps.flat_map(|&p| vals.iter().filter(|&&v| v <= -k).map(move |&q| (p - q).abs())).min()
}

#[test]
fn criterion_07_uniform_irreducibility_pair() {
    let mut ok = true;
    let mut notes = Vec::new();

    let ct = c_theory(3);
    let d6 = check_irreducibility(&ct, &IrreducibilityMode::Uniform(vec![6])).unwrap();
    ok &= d6.holds;
    notes.push(format!("C(3) d6 {}", d6.holds));

    let t = pointed_z_theory(6);
    let m = pointed_z(6);
    let top = t.sig().monoid(0).top().unwrap();
    for d in 0..top {
        let k = d / 2 + 1;
        let (pk, qk) = (format!("P{k}"), format!("Q{k}"));
        let pair = t.clone().with_fragment(
            Fragment::new(0, 1, ClassFilter::Positive).with_relations(&[&pk, &qk]).with_locality::<&str>(&[]),
        );
        let r = check_irreducibility(&pair, &IrreducibilityMode::Uniform(vec![d])).unwrap();
        let cert = r.certificate.as_ref().map(|(a, b)| (print(a, t.sig()), print(b, t.sig())));
        // The pair itself: each half is consistent, the pair within d is not.
        let member = |text: &str| positive_part_membership(&t, &parse(text, t.sig()).unwrap()).unwrap().is_member();
        let names_pair = member(&format!("exists x. {pk}(x)"))
            && member(&format!("exists y. {qk}(y)"))
            && !member(&format!("exists x y. ({pk}(x) & {qk}(y) & d{d}(x, y))"));
        // Independently: P_k and Q_k points are 2k > d apart.
        let apart = pq_gap(&m, k as i64).is_some_and(|g| g as usize > d);
        ok &= !r.holds && names_pair && apart;
        if r.holds || !names_pair {
            notes.push(format!("d{d}: {cert:?}"));
        }
    }
    let six = t.clone().with_fragment(
        Fragment::new(0, 1, ClassFilter::Positive).with_relations(&["P6", "Q6"]).with_locality::<&str>(&[]),
    );
    let search = check_irreducibility(&six, &IrreducibilityMode::UniformSearch).unwrap();
    let below: Vec<bool> = search.per_d.iter().filter(|u| u.d[0] < top).map(|u| u.holds).collect();
    let at_top = search.per_d.iter().find(|u| u.d[0] == top).map(|u| u.holds);
    ok &= below.len() == top && below.iter().all(|h| !h) && at_top == Some(true);
    notes.push(format!("pointedZ(6): fails for d0..d{}, search below top {below:?}, top {at_top:?}", top - 1));
    verdict(7, "uniform irreducibility positive and negative", ok, &notes.join("; "))
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_08_pc_members_are_balls() {
    let t = c_theory(3);
    let cat = t.catalogue().unwrap();
    let r = hierarchy_report(&t).unwrap();
    let mut ok = !r.pc_members.is_empty();
    let mut notes = Vec::new();
    for &i in &r.pc_members {
        let m = &cat[i];
        match ball_witness(m) {
            Some(w) => {
                let covered = m.loc(0, w.radius[0]).row(w.centre[0]).count() == m.size(0);
                ok &= covered;
                notes.push(format!("member {i}: d{}-ball at {} covers {covered}", w.radius[0], m.label(0, w.centre[0])));
            }
            None => {
                ok = false;
                notes.push(format!("member {i}: no ball"));
            }
        }
    }
    verdict(8, "pc members of the C(3) theory are balls", ok, &notes.join("; "))
}

// ---------------------------------------------------------------------------

/// Graph distances of the truncated tree by breadth-first search.
fn tree_distances(m: &FiniteStructure) -> Vec<Vec<i64>> {
    let coords: Vec<(i64, i64)> = m.universe(0).iter().map(|l| tree_coords(l).unwrap()).collect();
    let index: BTreeMap<(i64, i64), usize> = coords.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let neighbours = |(v1, v2): (i64, i64)| {
        let mut out = vec![(v1 - 1, v2), (v1 + 1, v2)];
        if v1 == 0 {
            out.extend([(0, v2 - 1), (0, v2 + 1)]);
        }
        out.into_iter().filter_map(|c| index.get(&c).copied()).collect::<Vec<_>>()
    };
    (0..coords.len())
        .map(|s| {
            let mut dist = vec![i64::MAX; coords.len()];
            dist[s] = 0;
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                for v in neighbours(coords[u]) {
                    if dist[v] == i64::MAX {
                        dist[v] = dist[u] + 1;
                        queue.push_back(v);
                    }
                }
            }
            dist
        })
        .collect()
}

#[test]
fn criterion_09_tree_relations() {
    let t = tree_theory(5);
    let m = tree(5);
    let sig = t.sig();
    let mut ok = true;
    let mut notes = Vec::new();

    let p0 = parse("P0(x)", sig).unwrap();
    let q0 = parse("Q0(x)", sig).unwrap();
    let top = check_approx_complementary(&t, &p0, &q0, ApproxMode::Complementary, &t.fragment).unwrap();
    ok &= top.holds;
    notes.push(format!("P0 T Q0 {} ({} denials)", top.holds, top.denials_checked));

    let x = Var::new("x", 0);
    for n in 0..=5 {
        let qn = parse(&format!("Q{n}(x)"), sig).unwrap();
        let v = check_approx_complementary(&t, &qn, &q0, ApproxMode::Approximates, &t.fragment).unwrap();
        // Q_n implies Q_0 pointwise, which is enough for approximation.
        let implied = all_tuples(&m, &[x.clone()])
            .all(|a| !holds_at(&m, &qn, &[x.clone()], &a) || holds_at(&m, &q0, &[x.clone()], &a));
        ok &= v.holds && implied;
        if !v.holds {
            notes.push(format!("Q{n} <= Q0 fails: {:?}", v.certificate));
        }
    }
    notes.push("Qn <= Q0 for n <= 5".into());

    let dist = tree_distances(&m);
    let coords: Vec<(i64, i64)> = m.universe(0).iter().map(|l| tree_coords(l).unwrap()).collect();
    for k in [1i64, 2] {
        let f = tree_obstruction(&m, k as usize).unwrap();
        let entailed = locally_entails(&t, &f, t.size_bound).unwrap().is_entailed();
        let in_tree = holds(&m, &f).unwrap();
        let oracle = !(0..coords.len()).any(|xi| {
            let (a1, a2) = coords[xi];
            let theta = a1.abs() == a2 && (0..coords.len()).any(|z| coords[z].0 == 0 && dist[xi][z] <= k);
            theta && (0..coords.len()).any(|y| coords[y].0 >= 2 * k && dist[xi][y] <= 3 * k)
        });
        ok &= entailed && in_tree && oracle;
        notes.push(format!("k={k}: entailed {entailed}, holds {in_tree}, coordinates {oracle}"));
    }
    verdict(9, "tree relations and obstructions", ok, &notes.join("; "))
}

// ---------------------------------------------------------------------------

/// Whether `f` depends only on the pairwise distances of its free variables
/// on tuples at least `margin` inside the window.
fn distance_invariant(m: &FiniteStructure, f: &Formula, vars: &[Var], margin: i64) -> bool {
    let n = (0..m.size(0)).map(|e| value(m, e)).max().unwrap();
    let mut seen: BTreeMap<Vec<i64>, bool> = BTreeMap::new();
    let mut ev = Evaluator::new(m, f, vars).unwrap();
    for t in all_tuples(m, vars) {
        let vals: Vec<i64> = t.iter().map(|&e| value(m, e)).collect();
        if vals.iter().any(|v| v.abs() + margin > n) {
            continue;
        }
        let key: Vec<i64> =
            (0..vals.len()).flat_map(|i| (i + 1..vals.len()).map(move |j| (i, j))).map(|(i, j)| (vals[i] - vals[j]).abs()).collect();
        let got = ev.eval(&t);
        if *seen.entry(key).or_insert(got) != got {
            return false;
        }
    }
    true
}

#[test]
fn criterion_10_full_distance_decomposition() {
    let m = zdist(8);
    let xs = [Var::new("x0", 0), Var::new("x1", 0)];
    let fs: Vec<Formula> =
        zdist_decomposition_fragments().iter().flat_map(|f| enumerate_fragment(m.sig(), f, &xs)).collect();
    let mut failed = Vec::new();
    for (i, f) in fs.iter().enumerate() {
        let order: Vec<Var> = xs.iter().filter(|v| f.occurs_free(v)).cloned().collect();
        let exact = matches!(full_distance_decomposition(f, &m, &order).unwrap(), Decomposition::Exact { .. });
        let invariant = i % 53 != 0 || distance_invariant(&m, f, &order, 4);
        if !exact || !invariant {
            failed.push(print(f, m.sig()));
        }
    }
    let t = zdist_theory(8);
    let ui = zdist_ui_sentence(&m, 1, 1).unwrap();
    let entailed = match locally_entails(&t, &ui, t.size_bound).unwrap() {
        Entailment::Entailed { bound, complete } => format!("entailed to size {bound}, complete {complete}"),
        Entailment::Countermodel { source, .. } => format!("countermodel {source:?}"),
    };
    // Brute force: |y0 - y1| = 3 cannot happen with both within 1 of one point.
    let vals: Vec<i64> = (-8..=8).collect();
    let brute = !vals.iter().any(|&x| {
        vals.iter().any(|&y0| vals.iter().any(|&y1| (y0 - y1).abs() == 3 && (x - y0).abs() <= 1 && (x - y1).abs() <= 1))
    });
    let ok = failed.is_empty() && entailed.starts_with("entailed") && brute && holds(&m, &ui).unwrap();
    let detail = format!("{} formulas, {} failed {:?}; UI sentence {entailed}", fs.len(), failed.len(), failed.first());
    verdict(10, "full distance decomposition", ok, &detail)
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_11_locality_gap_probe() {
    let mut ok = true;
    let mut notes = Vec::new();

    let t = pointed_z_theory(6);
    let m = pointed_z(6);
    let top = t.sig().monoid(0).top().unwrap();
    match inherent_locality_probe(&t, &Fragment::new(0, 2, ClassFilter::Pp), t.size_bound).unwrap() {
        ProbeOutcome::LocalityGap { gamma, x, y, horizon } => {
            let joint = Formula::and(gamma.clone());
            let pairs = definable_set(&m, &joint, &[x.clone(), y.clone()]).unwrap();
            let only_top = !pairs.is_empty()
                && pairs.iter().all(|p| (value(&m, p[0]) - value(&m, p[1])).unsigned_abs() as usize >= top);
            let shown: Vec<String> = gamma.iter().map(|f| print(f, t.sig())).collect();
            let pq = shown.iter().any(|s| s.starts_with('P')) && shown.iter().any(|s| s.starts_with('Q'));
            ok &= horizon == top && only_top && pq;
            notes.push(format!("pointedZ(6): gap {shown:?} at d{horizon}, {} pairs all at the top", pairs.len()));
        }
        ProbeOutcome::NoGap { bound, seeds } => {
            ok = false;
            notes.push(format!("pointedZ(6): no gap ({seeds} seeds, bound {bound})"));
        }
    }

    let zt = zdist_theory(8);
    match inherent_locality_probe(&zt, &zdist_window_fragment(8), zt.size_bound).unwrap() {
        ProbeOutcome::NoGap { bound, seeds } => {
            ok &= bound == zt.size_bound && seeds > 0;
            notes.push(format!("zdist(8): no gap, bound {bound}, {seeds} seeds"));
        }
        ProbeOutcome::LocalityGap { gamma, .. } => {
            ok = false;
            let shown: Vec<String> = gamma.iter().map(|f| print(f, zt.sig())).collect();
            notes.push(format!("zdist(8): gap {shown:?}"));
        }
    }
    verdict(11, "locality gap probe", ok, &notes.join("; "))
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_12_direct_limit_lemma() {
    let sys = interval_chain().unwrap();
    let lim = direct_limit(&sys).unwrap();
    let target = c(3);
    let iso = find_isomorphism(&lim.structure, &target).unwrap().is_some();
    let sig = lim.structure.sig();
    let sentences: Vec<Formula> = enumerate_fragment(sig, &Fragment::new(1, 2, ClassFilter::Positive), &[])
        .into_iter()
        .filter(|f| f.is_sentence())
        .collect();
    let stages: Vec<FiniteStructure> = (1..=3).map(|n| c_scaled(n, 3)).collect();
    let mut bad = Vec::new();
    for f in &sentences {
        let r = verify_limit_lemma(&sys, &lim, f, &[], &[]).unwrap();
        // Existential positive sentences hold in the limit iff at some stage.
        let some_stage = stages.iter().any(|s| holds(s, f).unwrap());
        let in_limit = holds(&lim.structure, f).unwrap();
        if !r.verified || r.in_limit != in_limit || in_limit != some_stage || in_limit != holds(&target, f).unwrap() {
            bad.push(print(f, sig));
        }
    }
    let labels: BTreeSet<&str> = lim.structure.universe(0).iter().map(|s| s.as_str()).collect();
    let ok = iso && bad.is_empty() && !sentences.is_empty() && labels.len() == 7;
    let detail = format!("isomorphic to C(3) {iso}; {} sentences, {} failures {:?}", sentences.len(), bad.len(), bad.first());
    verdict(12, "direct limit lemma on C(1) -> C(2) -> C(3)", ok, &detail)
}

#[test]
fn parse_helpers_agree() {
    // The obstruction and UI sentence builders produce what the grammar parses.
    let m = tree(2);
    let f = tree_obstruction(&m, 1).unwrap();
    let again = parse(&print(&f, m.sig()), m.sig()).unwrap();
    assert_eq!(f, again);
    let zd = zdist(3);
    let ui = zdist_ui_sentence(&zd, 1, 1).unwrap();
    assert!(ui.is_sentence());
    let x = Var::new("x", 0);
    assert!(parse_in_context("e1(x, x)", zd.sig(), &[x]).is_ok());
}
