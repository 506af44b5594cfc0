//! Parameterized example structures.
//!
//! All ℕ-indexed predicate families are truncated at the structure
//! parameter, and locality monoids saturate at the diameter so that the
//! top element is the total relation.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::eval::{definable_set, EvalError};
use crate::formula::{Formula, Rel, Term, Var};
use crate::signature::{LocalityMonoid, SignatureSpec};
use crate::structure::{FiniteStructure, PairTable};

mod checks;
mod theories;

pub use checks::{
    interval_chain, run_example_checks, tree_obstruction, zdist_decomposition_fragments, zdist_ui_sentence,
    zdist_window_fragment, CheckEntry, Example, ExampleReport,
};
pub use theories::{
    c_theory, hamming_theory, pointed_z_theory, singleton_theory, tree_theory, z_family_theory, zdist_theory,
    TheoryId, EXAMPLE_SIZE_BOUND,
};

/// Largest parameter accepted by the builders.
pub const MAX_PARAM: usize = 24;
/// Largest Hamming cube dimension.
pub const MAX_HAMMING: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CorpusError {
    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),
    #[error("unknown corpus id {0}")]
    UnknownId(String),
}

/// A named corpus entry with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum CorpusId {
    Z { n: usize },
    PointedZ { n: usize },
    I { n: usize },
    J { n: usize },
    /// `[−n, n]` inside the signature of `Z(scale)`.
    C { n: usize, scale: usize },
    /// `[lo, hi]` inside the signature of `Z(scale)`.
    Segment { lo: i64, hi: i64, scale: usize },
    Hamming { n: usize },
    Tree { n: usize },
    Zdist { n: usize },
}

impl CorpusId {
    pub fn build(&self) -> Result<FiniteStructure, CorpusError> {
        let range = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(CorpusError::ParameterOutOfRange(what.to_string()))
            }
        };
        match *self {
            CorpusId::Z { n } | CorpusId::PointedZ { n } | CorpusId::I { n } | CorpusId::J { n } => {
                range((1..=MAX_PARAM).contains(&n), "n must be in 1..=24")?
            }
            CorpusId::C { n, scale } => range(n <= scale && (1..=MAX_PARAM).contains(&scale), "need n <= scale <= 24")?,
            CorpusId::Segment { lo, hi, scale } => range(
                (1..=MAX_PARAM).contains(&scale) && -(scale as i64) <= lo && lo <= hi && hi <= scale as i64,
                "need -scale <= lo <= hi <= scale",
            )?,
            CorpusId::Hamming { n } => range((1..=MAX_HAMMING).contains(&n), "n must be in 1..=10")?,
            CorpusId::Tree { n } => range((1..=12).contains(&n), "n must be in 1..=12")?,
            CorpusId::Zdist { n } => range((1..=MAX_PARAM).contains(&n), "n must be in 1..=24")?,
        }
        Ok(match *self {
            CorpusId::Z { n } => z(n as i64),
            CorpusId::PointedZ { n } => pointed_z(n as i64),
            CorpusId::I { n } => i_point(n as i64),
            CorpusId::J { n } => j_point(n as i64),
            CorpusId::C { n, scale } => c_scaled(n as i64, scale as i64),
            CorpusId::Segment { lo, hi, scale } => segment(lo, hi, scale as i64),
            CorpusId::Hamming { n } => hamming(n),
            CorpusId::Tree { n } => tree(n as i64),
            CorpusId::Zdist { n } => zdist(n as i64),
        })
    }

    /// Representative ids listed by the CLI.
    pub fn catalogue() -> Vec<CorpusId> {
        vec![
            CorpusId::Z { n: 10 },
            CorpusId::PointedZ { n: 6 },
            CorpusId::I { n: 10 },
            CorpusId::J { n: 10 },
            CorpusId::C { n: 3, scale: 3 },
            CorpusId::Segment { lo: 0, hi: 4, scale: 10 },
            CorpusId::Hamming { n: 4 },
            CorpusId::Tree { n: 5 },
            CorpusId::Zdist { n: 8 },
        ]
    }
}

impl fmt::Display for CorpusId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CorpusId::Z { n } => write!(f, "z({n})"),
            CorpusId::PointedZ { n } => write!(f, "pointed_z({n})"),
            CorpusId::I { n } => write!(f, "i({n})"),
            CorpusId::J { n } => write!(f, "j({n})"),
            CorpusId::C { n, scale } if n == scale => write!(f, "c({n})"),
            CorpusId::C { n, scale } => write!(f, "c({n},{scale})"),
            CorpusId::Segment { lo, hi, scale } => write!(f, "segment({lo},{hi},{scale})"),
            CorpusId::Hamming { n } => write!(f, "hamming({n})"),
            CorpusId::Tree { n } => write!(f, "tree({n})"),
            CorpusId::Zdist { n } => write!(f, "zdist({n})"),
        }
    }
}

impl FromStr for CorpusId {
    type Err = CorpusError;

    /// Parses `name(a,b,…)`, e.g. `z(10)` or `c(2,3)`.
    fn from_str(s: &str) -> Result<Self, CorpusError> {
        let bad = || CorpusError::UnknownId(s.to_string());
        let s2 = s.trim();
        let (name, args) = match s2.find('(') {
            Some(i) if s2.ends_with(')') => (&s2[..i], &s2[i + 1..s2.len() - 1]),
            _ => (s2, ""),
        };
        let nums: Vec<i64> = if args.trim().is_empty() {
            vec![]
        } else {
            args.split(',').map(|a| a.trim().parse::<i64>().map_err(|_| bad())).collect::<Result<_, _>>()?
        };
        let u = |i: usize| -> Result<usize, CorpusError> {
            let v = *nums.get(i).ok_or_else(bad)?;
            usize::try_from(v).map_err(|_| CorpusError::ParameterOutOfRange(s.to_string()))
        };
        let id = match (name.to_ascii_lowercase().as_str(), nums.len()) {
            ("z", 1) => CorpusId::Z { n: u(0)? },
            ("pointed_z" | "pointedz", 1) => CorpusId::PointedZ { n: u(0)? },
            ("i", 1) => CorpusId::I { n: u(0)? },
            ("j", 1) => CorpusId::J { n: u(0)? },
            ("c", 1) => CorpusId::C { n: u(0)?, scale: u(0)? },
            ("c", 2) => CorpusId::C { n: u(0)?, scale: u(1)? },
            ("segment", 3) => CorpusId::Segment { lo: nums[0], hi: nums[1], scale: u(2)? },
            ("hamming", 1) => CorpusId::Hamming { n: u(0)? },
            ("tree", 1) => CorpusId::Tree { n: u(0)? },
            ("zdist", 1) => CorpusId::Zdist { n: u(0)? },
            _ => return Err(bad()),
        };
        Ok(id)
    }
}

fn pq_names(n: usize) -> Vec<String> {
    (0..n).map(|k| format!("P{k}")).chain((0..n).map(|k| format!("Q{k}"))).collect()
}

fn unary(names: &[String]) -> Vec<(&str, usize)> {
    names.iter().map(|s| (s.as_str(), 1)).collect()
}

fn integer_labels(lo: i64, hi: i64) -> Vec<String> {
    (lo..=hi).map(|x| x.to_string()).collect()
}

/// Signature of the integer examples: `P0..Pn`, `Q0..Qn`, `d0..d2n`.
pub fn z_signature(n: i64, constants: &[&str]) -> Arc<SignatureSpec> {
    let names = pq_names(n as usize + 1);
    let sig = SignatureSpec::one_sorted("s", &unary(&names), constants, LocalityMonoid::saturating(2 * n as usize))
        .expect("integer signature is valid");
    Arc::new(sig)
}

fn fill_integer(m: &mut FiniteStructure, values: &[i64], n: i64) {
    let len = values.len();
    for k in 0..=n {
        let p = m.sig().relation_index(&format!("P{k}")).unwrap();
        let q = m.sig().relation_index(&format!("Q{k}")).unwrap();
        for (e, &x) in values.iter().enumerate() {
            if x >= k {
                m.add_tuple(p, vec![e]).unwrap();
            }
            if x <= -k {
                m.add_tuple(q, vec![e]).unwrap();
            }
        }
    }
    let cap = 2 * n as usize;
    for d in 1..=cap {
        let t = PairTable::from_fn(len, len, |a, b| d == cap || (values[a] - values[b]).unsigned_abs() as usize <= d);
        m.set_locality(0, d, t).unwrap();
    }
}

/// `[−n, n]` with `P_k ⇔ x ≥ k`, `Q_k ⇔ x ≤ −k` and `d_k ⇔ |x − y| ≤ k`.
pub fn z(n: i64) -> FiniteStructure {
    segment(-n, n, n)
}

/// `z(n)` with a constant `0` naming the origin.
pub fn pointed_z(n: i64) -> FiniteStructure {
    let sig = z_signature(n, &["0"]);
    let values: Vec<i64> = (-n..=n).collect();
    let mut m = FiniteStructure::new(sig, vec![integer_labels(-n, n)]).unwrap();
    fill_integer(&mut m, &values, n);
    m.set_constant_named("0", "0").unwrap();
    m
}

/// `[lo, hi]` as a substructure of `z(scale)`.
pub fn segment(lo: i64, hi: i64, scale: i64) -> FiniteStructure {
    let sig = z_signature(scale, &[]);
    let values: Vec<i64> = (lo..=hi).collect();
    let mut m = FiniteStructure::new(sig, vec![integer_labels(lo, hi)]).unwrap();
    fill_integer(&mut m, &values, scale);
    m
}

/// The interval `[−n, n]` with the signature of `z(scale)`.
pub fn c_scaled(n: i64, scale: i64) -> FiniteStructure {
    segment(-n, n, scale)
}

/// The interval `[−n, n]` with monoid saturating at `2n`.
pub fn c(n: i64) -> FiniteStructure {
    c_scaled(n, n)
}

fn singleton(n: i64, label: &str, positive: bool) -> FiniteStructure {
    let sig = z_signature(n, &[]);
    let mut m = FiniteStructure::new(sig, vec![vec![label.to_string()]]).unwrap();
    for k in 0..=n {
        let name = if positive { format!("P{k}") } else { format!("Q{k}") };
        m.add_tuple_named(&name, &[label]).unwrap();
    }
    for d in 1..=2 * n as usize {
        m.set_locality(0, d, PairTable::full(1, 1)).unwrap();
    }
    m
}

/// The point at `+∞`: every `P_k` and no `Q_k`.
pub fn i_point(n: i64) -> FiniteStructure {
    singleton(n, "inf", true)
}

/// The point at `−∞`: every `Q_k` and no `P_k`.
pub fn j_point(n: i64) -> FiniteStructure {
    singleton(n, "-inf", false)
}

fn bits_label(x: usize, n: usize) -> String {
    (0..n).map(|k| if x >> k & 1 == 1 { '1' } else { '0' }).collect()
}

fn hamming_signature(n: usize) -> Arc<SignatureSpec> {
    let names = pq_names(n);
    Arc::new(SignatureSpec::one_sorted("s", &unary(&names), &[], LocalityMonoid::saturating(n)).unwrap())
}

fn fill_hamming(m: &mut FiniteStructure, words: &[usize], n: usize) {
    for k in 0..n {
        for (e, &w) in words.iter().enumerate() {
            let name = if w >> k & 1 == 1 { format!("P{k}") } else { format!("Q{k}") };
            let r = m.sig().relation_index(&name).unwrap();
            m.add_tuple(r, vec![e]).unwrap();
        }
    }
    let len = words.len();
    for d in 1..=n {
        let t = PairTable::from_fn(len, len, |a, b| (words[a] ^ words[b]).count_ones() as usize <= d);
        m.set_locality(0, d, t).unwrap();
    }
}

/// `{0,1}^n`; labels list `η(0)…η(n−1)`. `d_k` is Hamming distance at most `k`,
/// `P_k(η) ⇔ η(k) = 1`, `Q_k(η) ⇔ η(k) = 0`.
pub fn hamming(n: usize) -> FiniteStructure {
    let words: Vec<usize> = (0..1usize << n).collect();
    let mut m = FiniteStructure::new(hamming_signature(n), vec![words.iter().map(|&w| bits_label(w, n)).collect()])
        .unwrap();
    fill_hamming(&mut m, &words, n);
    m
}

/// The single point `η` of the Hamming cube, with the cube's signature.
pub fn hamming_point(n: usize, eta: &str) -> Result<FiniteStructure, CorpusError> {
    if eta.len() != n || !eta.chars().all(|c| c == '0' || c == '1') {
        return Err(CorpusError::ParameterOutOfRange(eta.to_string()));
    }
    let w = eta.chars().enumerate().map(|(k, c)| ((c == '1') as usize) << k).sum::<usize>();
    let mut m = FiniteStructure::new(hamming_signature(n), vec![vec![eta.to_string()]]).unwrap();
    fill_hamming(&mut m, &[w], n);
    Ok(m)
}

/// Coordinates of a tree label `(v1,v2)`.
pub fn tree_coords(label: &str) -> Option<(i64, i64)> {
    let inner = label.strip_prefix('(')?.strip_suffix(')')?;
    let (a, b) = inner.split_once(',')?;
    Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
}

/// Graph distance in the tree of paths joined at their centres.
fn tree_distance((a1, a2): (i64, i64), (b1, b2): (i64, i64)) -> i64 {
    if a2 == b2 {
        (a1 - b1).abs()
    } else {
        a1.abs() + (a2 - b2).abs() + b1.abs()
    }
}

/// Vertices `(v1, v2)` with `|v1| ≤ v2 ≤ n`; `d_k` is graph distance at most
/// `k`, `P_k ⇔ v1 ≥ k`, `Q_k ⇔ v1 ≤ −k`, `S ⇔ |v1| = v2`.
pub fn tree(n: i64) -> FiniteStructure {
    let mut names = vec!["S".to_string()];
    names.extend(pq_names(n as usize + 1));
    let cap = 2 * n as usize;
    let sig = Arc::new(SignatureSpec::one_sorted("s", &unary(&names), &[], LocalityMonoid::saturating(cap)).unwrap());
    let verts: Vec<(i64, i64)> = (0..=n).flat_map(|v2| (-v2..=v2).map(move |v1| (v1, v2))).collect();
    let labels = verts.iter().map(|(a, b)| format!("({a},{b})")).collect();
    let mut m = FiniteStructure::new(sig, vec![labels]).unwrap();
    let s = m.sig().relation_index("S").unwrap();
    for (e, &(v1, v2)) in verts.iter().enumerate() {
        if v1.abs() == v2 {
            m.add_tuple(s, vec![e]).unwrap();
        }
        for k in 0..=n {
            if v1 >= k {
                m.add_tuple_named(&format!("P{k}"), &[&format!("({v1},{v2})")]).unwrap();
            }
            if v1 <= -k {
                m.add_tuple_named(&format!("Q{k}"), &[&format!("({v1},{v2})")]).unwrap();
            }
        }
    }
    let len = verts.len();
    for d in 1..=cap {
        let t = PairTable::from_fn(len, len, |a, b| tree_distance(verts[a], verts[b]) <= d as i64);
        m.set_locality(0, d, t).unwrap();
    }
    m
}

/// `[−n, n]` with binary `e_k ⇔ |x − y| = k` for `k ≤ 2n` and `d_k` as in `z(n)`.
pub fn zdist(n: i64) -> FiniteStructure {
    let cap = 2 * n as usize;
    let names: Vec<String> = (0..=cap).map(|k| format!("e{k}")).collect();
    let rels: Vec<(&str, usize)> = names.iter().map(|s| (s.as_str(), 2)).collect();
    let sig = Arc::new(SignatureSpec::one_sorted("s", &rels, &[], LocalityMonoid::saturating(cap)).unwrap());
    let values: Vec<i64> = (-n..=n).collect();
    let e: Vec<usize> = names.iter().map(|k| sig.relation_index(k).unwrap()).collect();
    let mut m = FiniteStructure::new(sig, vec![integer_labels(-n, n)]).unwrap();
    for (a, &x) in values.iter().enumerate() {
        for (b, &y) in values.iter().enumerate() {
            m.add_tuple(e[(x - y).unsigned_abs() as usize], vec![a, b]).unwrap();
        }
    }
    let len = values.len();
    for d in 1..=cap {
        let t = PairTable::from_fn(len, len, |a, b| d == cap || (values[a] - values[b]).unsigned_abs() as usize <= d);
        m.set_locality(0, d, t).unwrap();
    }
    m
}

/// Outcome of decomposing a formula over a distance structure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Decomposition {
    /// `formula` is a disjunction of full distance formulas with the same
    /// satisfying tuples on the interior window.
    Exact { formula: String, patterns: Vec<Vec<usize>>, radius: usize },
    /// Tuples on which no full-distance disjunction can agree.
    Failed { residual: Vec<Vec<String>>, radius: usize },
}

/// Largest numeric index in any `e_k` or `d_k` symbol of `f`.
fn max_index(f: &Formula, m: &FiniteStructure) -> usize {
    fn walk(f: &Formula, m: &FiniteStructure, best: &mut usize) {
        match f {
            Formula::Atom { rel, .. } => {
                let name = match rel {
                    Rel::Sym(r) => m.sig().relations()[*r].name.clone(),
                    Rel::Loc(s, d) => m.sig().monoid(*s).name(*d).to_string(),
                };
                if let Ok(k) = name[1..].parse::<usize>() {
                    *best = (*best).max(k);
                }
            }
            Formula::And(fs) | Formula::Or(fs) => fs.iter().for_each(|g| walk(g, m, best)),
            Formula::Not(g) | Formula::Exists(_, g) | Formula::Forall(_, g) => walk(g, m, best),
            Formula::LocalExists { d, var, body, .. } => {
                if let Ok(k) = m.sig().monoid(var.sort).name(*d)[1..].parse::<usize>() {
                    *best = (*best).max(k);
                }
                walk(body, m, best)
            }
            _ => {}
        }
    }
    let mut best = 0;
    walk(f, m, &mut best);
    best
}

/// The full distance formula fixing the pairwise distances of `pattern`
/// (upper triangle, row major) over `vars`.
pub fn full_distance_formula(m: &FiniteStructure, vars: &[Var], pattern: &[usize]) -> Formula {
    let e = |k: usize| m.sig().relation_index(&format!("e{k}")).expect("distance relation");
    if vars.len() == 1 {
        let x = Term::Var(vars[0].clone());
        return Formula::atom(e(0), vec![x.clone(), x]);
    }
    let mut parts = Vec::new();
    let mut k = 0;
    for i in 0..vars.len() {
        for j in i + 1..vars.len() {
            parts.push(Formula::atom(e(pattern[k]), vec![Term::Var(vars[i].clone()), Term::Var(vars[j].clone())]));
            k += 1;
        }
    }
    Formula::and(parts)
}

/// Rewrites a positive formula over `zdist(n)` as a disjunction of full
/// distance formulas. Agreement is checked on tuples whose coordinates stay
/// at least `radius` away from the window edge, `radius` being the largest
/// distance index times the quantifier depth, since witnesses further out
/// fall outside the window.
pub fn full_distance_decomposition(
    phi: &Formula,
    m: &FiniteStructure,
    vars: &[Var],
) -> Result<Decomposition, EvalError> {
    let values: Vec<i64> = m.universe(0).iter().map(|l| l.parse().expect("integer labels")).collect();
    let n = *values.iter().max().unwrap_or(&0);
    let radius = max_index(phi, m) * phi.depth();
    let interior: Vec<usize> =
        (0..values.len()).filter(|&e| values[e].abs() + radius as i64 <= n).collect();
    let in_window = |t: &[usize]| t.iter().all(|e| interior.contains(e));
    let sat: BTreeSet<Vec<usize>> = definable_set(m, phi, vars)?.into_iter().filter(|t| in_window(t)).collect();
    let pattern_of = |t: &[usize]| -> Vec<usize> {
        let mut p = Vec::new();
        for i in 0..t.len() {
            for j in i + 1..t.len() {
                p.push((values[t[i]] - values[t[j]]).unsigned_abs() as usize);
            }
        }
        p
    };
    let patterns: BTreeSet<Vec<usize>> = sat.iter().map(|t| pattern_of(t)).collect();
    let disjunction = Formula::or(patterns.iter().map(|p| full_distance_formula(m, vars, p)).collect());
    let formula = if vars.is_empty() {
        if sat.is_empty() {
            Formula::Bot
        } else {
            Formula::Top
        }
    } else {
        disjunction
    };
    let got: BTreeSet<Vec<usize>> =
        definable_set(m, &formula, vars)?.into_iter().filter(|t| in_window(t)).collect();
    if got == sat {
        Ok(Decomposition::Exact {
            formula: crate::formula::print(&formula, m.sig()),
            patterns: patterns.into_iter().collect(),
            radius,
        })
    } else {
        let residual = got
            .symmetric_difference(&sat)
            .map(|t| vars.iter().zip(t).map(|(v, &e)| m.label(v.sort, e).to_string()).collect())
            .collect();
        Ok(Decomposition::Failed { residual, radius })
    }
}
