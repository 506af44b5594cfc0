//! Example-specific checks, run per example and collected into one report.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use super::theories::{c_theory, hamming_theory, pointed_z_theory, tree_theory, z_family_theory, zdist_theory};
use super::{c, c_scaled, full_distance_decomposition, hamming, i_point, j_point, pointed_z, segment, tree, z, zdist};
use super::{CorpusError, Decomposition};
use crate::eval::{all_tuples, Evaluator};
use crate::formula::{classify, enumerate_fragment, parse, parse_in_context, print, ClassFilter, Formula, Fragment, Var};
use crate::limits::{direct_limit, inclusion_by_labels, verify_limit_lemma, DirectSystem};
use crate::morphism::{check_locally_positively_closed, find_homomorphisms, find_isomorphism, PcVerdict};
use crate::structure::{check_locality_axioms, FiniteStructure};
use crate::theory::{
    ball_witness, check_approx_complementary, check_irreducibility, find_denials, hierarchy_report,
    inherent_locality_probe, locality_gap, locally_entails, synthesize_bound, ApproxMode, IrreducibilityMode,
    ProbeOutcome, TheorySpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Example {
    ZFamily,
    PointedZ,
    Hamming,
    Tree,
    Zdist,
    Intervals,
}

impl Example {
    pub const ALL: [Example; 6] =
        [Example::ZFamily, Example::PointedZ, Example::Hamming, Example::Tree, Example::Zdist, Example::Intervals];
}

impl fmt::Display for Example {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Example::ZFamily => "z-family",
            Example::PointedZ => "pointed-z",
            Example::Hamming => "hamming",
            Example::Tree => "tree",
            Example::Zdist => "zdist",
            Example::Intervals => "intervals",
        })
    }
}

impl FromStr for Example {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, CorpusError> {
        let key: String = s.trim().to_ascii_lowercase().chars().filter(|c| c.is_ascii_alphanumeric()).collect();
        Ok(match key.as_str() {
            "zfamily" | "z" => Example::ZFamily,
            "pointedz" => Example::PointedZ,
            "hamming" => Example::Hamming,
            "tree" => Example::Tree,
            "zdist" => Example::Zdist,
            "intervals" | "c" => Example::Intervals,
            _ => return Err(CorpusError::UnknownId(s.to_string())),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CheckEntry {
    pub example: Example,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ExampleReport {
    pub entries: Vec<CheckEntry>,
}

impl ExampleReport {
    pub fn all_passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckEntry> {
        self.entries.iter().filter(|e| !e.passed)
    }
}

type Outcome = Result<(bool, String), String>;

fn err(e: impl fmt::Display) -> String {
    e.to_string()
}

fn checks_for(example: Example) -> Vec<(&'static str, fn() -> Outcome)> {
    match example {
        Example::ZFamily => vec![
            ("axioms of Z(10), I, J", z_axioms as fn() -> Outcome),
            ("Z(10) is pc in {Z(10), I, J}", || pc_member(0)),
            ("I is pc in {Z(10), I, J}", || pc_member(1)),
            ("J is pc in {Z(10), I, J}", || pc_member(2)),
            ("[0,4] is not pc in {Z(10)}", segment_not_pc),
            ("I and J are not jointly irreducible", opposite_points),
        ],
        Example::PointedZ => vec![
            ("uniform irreducibility fails below the diameter", pointed_ui as fn() -> Outcome),
            ("pointed collapse of the hierarchy", pointed_collapse),
            ("locality gap for P6(x), Q6(y)", pointed_gap),
            ("bound of P2(x) is d2(x, 0)", pointed_bound),
            ("local denials in the pointed language", pointed_denials),
        ],
        Example::Hamming => vec![
            ("axioms of hamming(4)", hamming_axioms as fn() -> Outcome),
            ("denial dichotomy on hamming(3)", hamming_denials),
        ],
        Example::Tree => vec![
            ("P0 and Q0 are complementary", tree_complementary as fn() -> Outcome),
            ("Qn approximates Q0 for n <= 5", tree_approximations),
            ("obstruction sentences for k = 1, 2", tree_obstructions),
        ],
        Example::Zdist => vec![
            ("axioms of zdist(8)", zdist_axioms as fn() -> Outcome),
            ("full distance decomposition", zdist_decomposition),
            ("uniform irreducibility failure sentence", zdist_ui_check),
            ("no locality gap below the diameter", zdist_no_gap),
            ("automorphisms are translations or reflections", zdist_automorphisms),
        ],
        Example::Intervals => vec![
            ("C(3) is d6-irreducible and not d5-irreducible", intervals_ui as fn() -> Outcome),
            ("pc members of the C(3) theory are balls", intervals_balls),
            ("direct limit of C(1) -> C(2) -> C(3)", intervals_limit),
            ("hierarchy implications on the C(3) theory", intervals_hierarchy),
        ],
    }
}

/// Runs every check of the chosen examples, concurrently, in a stable order.
pub fn run_example_checks(scope: &[Example]) -> ExampleReport {
    let jobs: Vec<(Example, &'static str, fn() -> Outcome)> =
        scope.iter().flat_map(|&ex| checks_for(ex).into_iter().map(move |(n, f)| (ex, n, f))).collect();
    let entries = jobs
        .into_par_iter()
        .map(|(example, name, f)| {
            let (passed, detail) = match f() {
                Ok(r) => r,
                Err(e) => (false, format!("error: {e}")),
            };
            CheckEntry { example, name: name.to_string(), passed, detail }
        })
        .collect();
    ExampleReport { entries }
}

fn axioms_of(ms: &[(&str, FiniteStructure)]) -> Outcome {
    for (name, m) in ms {
        let r = check_locality_axioms(m);
        if let Some(w) = r.first_failure_among(&[1, 2, 3, 4, 5]) {
            return Ok((false, format!("{name}: {w:?}")));
        }
    }
    Ok((true, format!("{} structures pass A1-A5", ms.len())))
}

fn z_axioms() -> Outcome {
    axioms_of(&[("Z(10)", z(10)), ("I", i_point(10)), ("J", j_point(10))])
}

fn pc_detail(m: &FiniteStructure, cat: &[FiniteStructure], v: &PcVerdict) -> String {
    serde_json::to_string(&v.report(m, cat)).unwrap_or_default()
}

fn pc_member(index: usize) -> Outcome {
    let t = z_family_theory(10);
    let cat = t.catalogue().ok_or("not a catalogue")?;
    let v = check_locally_positively_closed(&cat[index], cat, None).map_err(err)?;
    Ok((v.is_yes(), pc_detail(&cat[index], cat, &v)))
}

fn segment_not_pc() -> Outcome {
    let cat = vec![z(10)];
    let m = segment(0, 4, 10);
    let v = check_locally_positively_closed(&m, &cat, None).map_err(err)?;
    Ok((!v.is_yes(), pc_detail(&m, &cat, &v)))
}

fn opposite_points() -> Outcome {
    let t = TheorySpec::model_class(vec![i_point(10), j_point(10)], Fragment::new(0, 1, ClassFilter::Positive), 4)
        .map_err(err)?;
    let r = check_irreducibility(&t, &IrreducibilityMode::Plain).map_err(err)?;
    let Some((a, b)) = &r.certificate else { return Ok((false, "irreducible".into())) };
    Ok((!r.holds, format!("{} / {}", print(a, t.sig()), print(b, t.sig()))))
}

fn pointed_ui() -> Outcome {
    let n = 6usize;
    let t = pointed_z_theory(n);
    let top = t.sig().monoid(0).top().ok_or("no top element")?;
    let mut notes = Vec::new();
    for d in 0..top {
        // the smallest k with 2k > d is the pair that needs more room than d
        let k = d / 2 + 1;
        let (pk, qk) = (format!("P{k}"), format!("Q{k}"));
        let pair = t.clone().with_fragment(
            Fragment::new(0, 1, ClassFilter::Positive).with_relations(&[&pk, &qk]).with_locality::<&str>(&[]),
        );
        let r = check_irreducibility(&pair, &IrreducibilityMode::Uniform(vec![d])).map_err(err)?;
        if r.holds {
            return Ok((false, format!("d{d}: ({pk}, {qk}) jointly realized")));
        }
        let (a, b) = r.certificate.ok_or("missing certificate")?;
        notes.push(format!("d{d}: {} / {}", print(&a, t.sig()), print(&b, t.sig())));
    }
    let r = check_irreducibility(&t, &IrreducibilityMode::Uniform(vec![top])).map_err(err)?;
    notes.push(format!("d{top}: holds={}", r.holds));
    Ok((r.holds, notes.join("; ")))
}

fn pointed_collapse() -> Outcome {
    let r = hierarchy_report(&pointed_z_theory(6)).map_err(err)?;
    let ok = r.pointed && r.irreducible == r.ljcp && r.violations().is_empty();
    Ok((ok, format!("{r:?}")))
}

fn pointed_gap() -> Outcome {
    let t = pointed_z_theory(6);
    let frag = Fragment::new(0, 2, ClassFilter::Pp);
    let probe = inherent_locality_probe(&t, &frag, t.size_bound).map_err(err)?;
    let x = Var::new("x", 0);
    let y = Var::new("y", 0);
    let gamma = vec![
        parse_in_context("P6(x)", t.sig(), &[x.clone()]).map_err(err)?,
        parse_in_context("Q6(y)", t.sig(), &[y.clone()]).map_err(err)?,
    ];
    let named = locality_gap(&t, &gamma, &x, &y).map_err(err)?;
    match probe {
        ProbeOutcome::LocalityGap { gamma: found, horizon, .. } => {
            let shown: Vec<String> = found.iter().map(|f| print(f, t.sig())).collect();
            Ok((named, format!("probe: {shown:?} only at d{horizon}; P6(x), Q6(y) gap = {named}")))
        }
        ProbeOutcome::NoGap { bound, seeds } => Ok((false, format!("no gap found ({seeds} seeds, bound {bound})"))),
    }
}

fn pointed_bound() -> Outcome {
    let t = pointed_z_theory(6);
    let b = synthesize_bound(&t, &parse("P2(x)", t.sig()).map_err(err)?).map_err(err)?;
    let expected = parse_in_context("d2(x, 0)", t.sig(), &b.vars).map_err(err)?;
    Ok((b.to_formula() == expected, print(&b.to_formula(), t.sig())))
}

/// For each formula of `phi_frag` in one variable and each tuple where it
/// fails, looks for a returned denial true at that tuple, local when
/// `want_local`.
fn dichotomy(t: &TheorySpec, m: &FiniteStructure, phi_frag: &Fragment, psi_frag: &Fragment, want_local: bool) -> Outcome {
    let x = Var::new("x", 0);
    let ctx = [x.clone()];
    let phis: Vec<Formula> = enumerate_fragment(t.sig(), phi_frag, &ctx)
        .into_iter()
        .filter(|f| classify(f, t.sig()).local_positive && f.occurs_free(&x))
        .collect();
    let mut failing_pairs = 0;
    for phi in &phis {
        let mut ev = Evaluator::new(m, phi, &ctx).map_err(err)?;
        let misses: Vec<Vec<usize>> = all_tuples(m, &ctx).filter(|a| !ev.eval(a)).collect();
        if misses.is_empty() {
            continue;
        }
        let denials = find_denials(t, phi, psi_frag).map_err(err)?;
        let mut evs = denials
            .iter()
            .filter(|d| !want_local || d.local)
            .map(|d| Evaluator::new(m, &d.formula, &ctx))
            .collect::<Result<Vec<_>, _>>()
            .map_err(err)?;
        for a in misses {
            failing_pairs += 1;
            if !evs.iter_mut().any(|e| e.eval(&a)) {
                return Ok((false, format!("{} at {}: no denial holds", print(phi, t.sig()), m.label(0, a[0]))));
            }
        }
    }
    Ok((true, format!("{} formulas, {failing_pairs} failing tuples covered", phis.len())))
}

fn dichotomy_fragments() -> (Fragment, Fragment) {
    (Fragment::new(1, 1, ClassFilter::LocalPositive).with_free(1), Fragment::new(1, 1, ClassFilter::Pp).with_free(1))
}

fn pointed_denials() -> Outcome {
    let t = pointed_z_theory(6);
    let (phi, psi) = dichotomy_fragments();
    dichotomy(&t, &pointed_z(6), &phi, &psi, true)
}

fn hamming_axioms() -> Outcome {
    axioms_of(&[("hamming(4)", hamming(4))])
}

fn hamming_denials() -> Outcome {
    let t = hamming_theory(3);
    let (phi, psi) = dichotomy_fragments();
    dichotomy(&t, &hamming(3), &phi, &psi, false)
}

fn tree_complementary() -> Outcome {
    let t = tree_theory(5);
    let p0 = parse("P0(x)", t.sig()).map_err(err)?;
    let q0 = parse("Q0(x)", t.sig()).map_err(err)?;
    let v = check_approx_complementary(&t, &p0, &q0, ApproxMode::Complementary, &t.fragment).map_err(err)?;
    Ok((v.holds, format!("{} denials of Q0 checked; {:?}", v.denials_checked, v.certificate)))
}

fn tree_approximations() -> Outcome {
    let t = tree_theory(5);
    let q0 = parse("Q0(x)", t.sig()).map_err(err)?;
    for n in 0..=5 {
        let qn = parse(&format!("Q{n}(x)"), t.sig()).map_err(err)?;
        let v = check_approx_complementary(&t, &qn, &q0, ApproxMode::Approximates, &t.fragment).map_err(err)?;
        if !v.holds {
            return Ok((false, format!("Q{n}: {:?}", v.certificate)));
        }
    }
    Ok((true, "Q0..Q5".into()))
}

/// `¬∃x y (S(x) ∧ ∃z (d_k(x, z) ∧ P0(z) ∧ Q0(z)) ∧ P_{2k}(y) ∧ d_{3k}(x, y))`.
pub fn tree_obstruction(m: &FiniteStructure, k: usize) -> Result<Formula, crate::formula::FormulaError> {
    parse(
        &format!(
            "!exists x y. (S(x) & (exists z. (d{k}(x, z) & P0(z) & Q0(z))) & P{}(y) & d{}(x, y))",
            2 * k,
            3 * k
        ),
        m.sig(),
    )
}

fn tree_obstructions() -> Outcome {
    let t = tree_theory(5);
    let m = tree(5);
    let mut notes = Vec::new();
    for k in [1, 2] {
        let f = tree_obstruction(&m, k).map_err(err)?;
        let e = locally_entails(&t, &f, t.size_bound).map_err(err)?;
        if !e.is_entailed() {
            return Ok((false, format!("k={k}: countermodel")));
        }
        notes.push(format!("k={k} entailed"));
    }
    Ok((true, notes.join(", ")))
}

fn zdist_axioms() -> Outcome {
    axioms_of(&[("zdist(8)", zdist(8))])
}

/// Fragments of the decomposition check over two free variables and one
/// bound one: primitive positive formulas with up to three atoms, and
/// positive formulas, disjunctions included, with up to two.
pub fn zdist_decomposition_fragments() -> [Fragment; 2] {
    [
        Fragment::new(1, 3, ClassFilter::Pp).with_relations(&["e1", "e2", "e3"]).with_locality(&["d1"]).with_free(2),
        Fragment::new(1, 2, ClassFilter::Positive)
            .with_relations(&["e0", "e1", "e2", "e3"])
            .with_locality(&["d1", "d2"])
            .with_free(2),
    ]
}

fn zdist_decomposition() -> Outcome {
    let m = zdist(8);
    let xs = [Var::new("x0", 0), Var::new("x1", 0)];
    let fs: Vec<Formula> =
        zdist_decomposition_fragments().iter().flat_map(|frag| enumerate_fragment(m.sig(), frag, &xs)).collect();
    let failed: Vec<String> = fs
        .par_iter()
        .filter_map(|f| {
            let order: Vec<Var> = xs.iter().filter(|v| f.occurs_free(v)).cloned().collect();
            match full_distance_decomposition(f, &m, &order) {
                Ok(Decomposition::Exact { .. }) => None,
                Ok(Decomposition::Failed { residual, .. }) => Some(format!("{}: {residual:?}", print(f, m.sig()))),
                Err(e) => Some(e.to_string()),
            }
        })
        .collect();
    match failed.first() {
        Some(first) => Ok((false, format!("{} of {} failed, first {first}", failed.len(), fs.len()))),
        None => Ok((true, format!("{} formulas decomposed", fs.len()))),
    }
}

/// `¬∃x0 x1 y0 y1 (x0 = x1 ∧ e_{a+b+1}(y0, y1) ∧ d_a(x0, y0) ∧ d_b(x1, y1))`.
pub fn zdist_ui_sentence(m: &FiniteStructure, a: usize, b: usize) -> Result<Formula, crate::formula::FormulaError> {
    parse(
        &format!("!exists x0 x1 y0 y1. (x0 = x1 & e{}(y0, y1) & d{a}(x0, y0) & d{b}(x1, y1))", a + b + 1),
        m.sig(),
    )
}

fn zdist_ui_check() -> Outcome {
    let t = zdist_theory(8);
    let f = zdist_ui_sentence(&zdist(8), 1, 1).map_err(err)?;
    Ok(match locally_entails(&t, &f, t.size_bound).map_err(err)? {
        crate::theory::Entailment::Entailed { bound, complete } => (true, format!("bound {bound}, complete {complete}")),
        crate::theory::Entailment::Countermodel { source, .. } => (false, format!("countermodel from {source:?}")),
    })
}

/// Relations and locality elements strictly below the diameter of `zdist(n)`.
pub fn zdist_window_fragment(n: usize) -> Fragment {
    let rels: Vec<String> = (0..2 * n).map(|k| format!("e{k}")).collect();
    let locs: Vec<String> = (1..2 * n).map(|k| format!("d{k}")).collect();
    Fragment::new(0, 2, ClassFilter::Pp).with_relations(&rels).with_locality(&locs)
}

fn zdist_no_gap() -> Outcome {
    let t = zdist_theory(8);
    match inherent_locality_probe(&t, &zdist_window_fragment(8), t.size_bound).map_err(err)? {
        ProbeOutcome::NoGap { bound, seeds } => Ok((true, format!("{seeds} seeds, bound {bound}"))),
        ProbeOutcome::LocalityGap { gamma, .. } => {
            let shown: Vec<String> = gamma.iter().map(|f| print(f, t.sig())).collect();
            Ok((false, format!("gap {shown:?}")))
        }
    }
}

fn zdist_automorphisms() -> Outcome {
    for n in 1..=5i64 {
        let m = zdist(n);
        let vals: Vec<i64> = m.universe(0).iter().map(|l| l.parse().unwrap()).collect();
        let homs = find_homomorphisms(&m, &m, &[], None).map_err(err)?;
        for h in &homs {
            let img: Vec<i64> = (0..vals.len()).map(|e| vals[h.apply(0, e)]).collect();
            let shift = img[0] - vals[0];
            let refl = img[0] + vals[0];
            let ok = vals.iter().zip(&img).all(|(x, y)| *y == x + shift)
                || vals.iter().zip(&img).all(|(x, y)| *y == refl - x);
            if !ok {
                return Ok((false, format!("N={n}: {img:?}")));
            }
        }
        if homs.len() != 2 {
            return Ok((false, format!("N={n}: {} maps", homs.len())));
        }
    }
    Ok((true, "identity and reflection for N = 1..5".into()))
}

fn intervals_ui() -> Outcome {
    let t = c_theory(3);
    let d6 = check_irreducibility(&t, &IrreducibilityMode::Uniform(vec![6])).map_err(err)?;
    let d5 = check_irreducibility(&t, &IrreducibilityMode::Uniform(vec![5])).map_err(err)?;
    let cert = d5.certificate.as_ref().map(|(a, b)| format!("{} / {}", print(a, t.sig()), print(b, t.sig())));
    Ok((d6.holds && !d5.holds, format!("d6 {}, d5 {} {cert:?}", d6.holds, d5.holds)))
}

fn intervals_balls() -> Outcome {
    let t = c_theory(3);
    let cat = t.catalogue().ok_or("not a catalogue")?;
    let r = hierarchy_report(&t).map_err(err)?;
    if r.pc_members.is_empty() {
        return Ok((false, "no pc member".into()));
    }
    let mut notes = Vec::new();
    for &i in &r.pc_members {
        let m = &cat[i];
        let Some(w) = ball_witness(m) else { return Ok((false, format!("member {i} is not a ball"))) };
        notes.push(format!("member {i}: d{}-ball at {}", w.radius[0], m.label(0, w.centre[0])));
    }
    Ok((true, notes.join("; ")))
}

/// The chain `C(1) ⊆ C(2) ⊆ C(3)` in the signature of `C(3)`.
pub fn interval_chain() -> Result<DirectSystem, crate::limits::LimitError> {
    let cs: Vec<FiniteStructure> = (1..=3).map(|n| c_scaled(n, 3)).collect();
    let edges = vec![(0, 1, inclusion_by_labels(&cs[0], &cs[1])?), (1, 2, inclusion_by_labels(&cs[1], &cs[2])?)];
    DirectSystem::new(cs, edges)
}

fn intervals_limit() -> Outcome {
    let sys = interval_chain().map_err(err)?;
    let lim = direct_limit(&sys).map_err(err)?;
    let iso = find_isomorphism(&lim.structure, &c(3)).map_err(err)?.is_some();
    let sig = lim.structure.sig();
    let sentences: Vec<Formula> = enumerate_fragment(sig, &Fragment::new(1, 1, ClassFilter::Positive), &[])
        .into_iter()
        .filter(|f| f.is_sentence())
        .collect();
    for f in &sentences {
        let r = verify_limit_lemma(&sys, &lim, f, &[], &[]).map_err(err)?;
        if !r.verified {
            return Ok((false, format!("{} fails the limit lemma", print(f, sig))));
        }
    }
    Ok((iso, format!("isomorphic to C(3): {iso}; {} sentences verified", sentences.len())))
}

fn intervals_hierarchy() -> Outcome {
    let r = hierarchy_report(&c_theory(3)).map_err(err)?;
    let v = r.violations();
    Ok((v.is_empty(), format!("ui {:?}, violations {v:?}", r.ui)))
}
