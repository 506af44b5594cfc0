//! Direct systems of finite structures and their direct limits.
//!
//! The limit identifies `a ∈ M_i` with `b ∈ M_j` when some `k ⪰ i, j`
//! sends both to the same element; it is computed by union-find, joining
//! every element with its images under the connecting maps.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CorpusId;
use crate::eval::{EvalError, Evaluator};
use crate::formula::{classify, print, Formula, Var};
use crate::morphism::{is_homomorphism, Homomorphism};
use crate::structure::{FiniteStructure, PairTable, StructureError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LimitError {
    #[error("system has no structures")]
    Empty,
    #[error("structures {0} and {1} have different signatures")]
    SignatureMismatch(usize, usize),
    #[error("map {from} -> {to} is not a homomorphism")]
    NotHomomorphism { from: usize, to: usize },
    #[error("maps do not commute: f[{i},{j}] after f[{j},{k}] differs from f[{i},{k}]")]
    IncoherentSystem { i: usize, j: usize, k: usize },
    #[error("indices {0} and {1} lie on a cycle")]
    NotPartialOrder(usize, usize),
    #[error("indices {0} and {1} have no common upper bound")]
    NotDirected(usize, usize),
    #[error("order pair {0} <= {1} has no map")]
    MissingMap(usize, usize),
    #[error("bad map: {0}")]
    BadMap(String),
    #[error("formula has the wrong class: {0}")]
    ClassMismatch(String),
    #[error("bad system file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Structure(#[from] StructureError),
}

/// Structures indexed by `0..n` with maps `f[i][j]: M_j → M_i` for `i ⪰ j`.
#[derive(Debug, Clone)]
pub struct DirectSystem {
    structures: Vec<FiniteStructure>,
    maps: BTreeMap<(usize, usize), Homomorphism>,
}

impl DirectSystem {
    /// Builds the system from generating maps `(from, to, hom)`; the order
    /// and the remaining maps are their reflexive, transitive closure.
    pub fn new(structures: Vec<FiniteStructure>, edges: Vec<(usize, usize, Homomorphism)>) -> Result<Self, LimitError> {
        let n = structures.len();
        if n == 0 {
            return Err(LimitError::Empty);
        }
        for (i, m) in structures.iter().enumerate() {
            if m.sig() != structures[0].sig() {
                return Err(LimitError::SignatureMismatch(0, i));
            }
        }
        let mut maps: BTreeMap<(usize, usize), Homomorphism> = BTreeMap::new();
        for (i, m) in structures.iter().enumerate() {
            maps.insert((i, i), Homomorphism::identity(m));
        }
        for (from, to, h) in edges {
            if from >= n || to >= n {
                return Err(LimitError::BadMap(format!("index out of range in {from} -> {to}")));
            }
            if !is_homomorphism(&structures[from], &structures[to], &h) {
                return Err(LimitError::NotHomomorphism { from, to });
            }
            match maps.get(&(to, from)) {
                Some(g) if *g != h => {
                    return Err(if from == to {
                        LimitError::NotPartialOrder(from, to)
                    } else {
                        LimitError::IncoherentSystem { i: to, j: from, k: from }
                    })
                }
                _ => {
                    maps.insert((to, from), h);
                }
            }
        }
        loop {
            let mut added = Vec::new();
            for (&(i, j), f_ij) in &maps {
                for (&(j2, k), f_jk) in maps.range((j, 0)..=(j, n)) {
                    debug_assert_eq!(j2, j);
                    if i == j || j == k {
                        continue;
                    }
                    let composed = f_jk.then(f_ij);
                    match maps.get(&(i, k)) {
                        Some(g) if *g == composed => {}
                        Some(_) if i == k => return Err(LimitError::NotPartialOrder(i, j)),
                        Some(_) => return Err(LimitError::IncoherentSystem { i, j, k }),
                        None if i == k => return Err(LimitError::NotPartialOrder(i, j)),
                        None => added.push(((i, k), composed)),
                    }
                }
            }
            if added.is_empty() {
                break;
            }
            for (key, h) in added {
                if let Some(g) = maps.get(&key) {
                    if *g != h {
                        return Err(LimitError::IncoherentSystem { i: key.0, j: key.1, k: key.1 });
                    }
                }
                maps.insert(key, h);
            }
        }
        let sys = DirectSystem { structures, maps };
        for i in 0..n {
            for j in i + 1..n {
                if sys.upper_bound(i, j).is_none() {
                    return Err(LimitError::NotDirected(i, j));
                }
            }
        }
        Ok(sys)
    }

    pub fn structures(&self) -> &[FiniteStructure] {
        &self.structures
    }

    pub fn len(&self) -> usize {
        self.structures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.structures.is_empty()
    }

    /// `i ⪰ j`.
    pub fn above(&self, i: usize, j: usize) -> bool {
        self.maps.contains_key(&(i, j))
    }

    /// `f[i][j]` for `i ⪰ j`.
    pub fn map(&self, i: usize, j: usize) -> Option<&Homomorphism> {
        self.maps.get(&(i, j))
    }

    /// The first index above both.
    pub fn upper_bound(&self, i: usize, j: usize) -> Option<usize> {
        (0..self.len()).find(|&k| self.above(k, i) && self.above(k, j))
    }
}

/// The limit structure and the coprojections `f_i: M_i → M`.
#[derive(Debug, Clone)]
pub struct DirectLimit {
    pub structure: FiniteStructure,
    pub coprojections: Vec<Homomorphism>,
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut a: usize) -> usize {
        while self.0[a] != a {
            self.0[a] = self.0[self.0[a]];
            a = self.0[a];
        }
        a
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Quotient of the disjoint union. Each class is labelled by its element in
/// the highest-numbered structure it meets, as `label@index`.
pub fn direct_limit(sys: &DirectSystem) -> Result<DirectLimit, LimitError> {
    let sig = sys.structures[0].sig_arc().clone();
    let n = sys.len();
    let ns = sig.sorts().len();
    let mut universes = Vec::new();
    let mut coprojections: Vec<Vec<Vec<usize>>> = vec![vec![]; n];
    for s in 0..ns {
        let offsets: Vec<usize> = sys
            .structures
            .iter()
            .scan(0, |acc, m| {
                let o = *acc;
                *acc += m.size(s);
                Some(o)
            })
            .collect();
        let total: usize = sys.structures.iter().map(|m| m.size(s)).sum();
        let mut uf = UnionFind((0..total).collect());
        for (&(i, j), h) in &sys.maps {
            for (a, &b) in h.maps[s].iter().enumerate() {
                uf.union(offsets[j] + a, offsets[i] + b);
            }
        }
        let mut class_of = BTreeMap::new();
        let mut labels: Vec<(usize, String)> = Vec::new();
        for node in 0..total {
            let r = uf.find(node);
            let i = offsets.iter().rposition(|&o| o <= node).expect("node in range");
            let label = format!("{}@{i}", sys.structures[i].label(s, node - offsets[i]));
            let next = class_of.len();
            let c = *class_of.entry(r).or_insert(next);
            if c == labels.len() {
                labels.push((i, label));
            } else if i >= labels[c].0 {
                labels[c] = (i, label);
            }
            if coprojections[i].len() <= s {
                coprojections[i].resize(s + 1, vec![]);
            }
            coprojections[i][s].push(c);
        }
        universes.push(labels.into_iter().map(|(_, l)| l).collect::<Vec<_>>());
    }
    let coprojections: Vec<Homomorphism> = coprojections.into_iter().map(|maps| Homomorphism { maps }).collect();
    let mut limit = FiniteStructure::new(sig.clone(), universes)?;
    for (i, m) in sys.structures.iter().enumerate() {
        let f = &coprojections[i];
        for (r, sym) in sig.relations().iter().enumerate() {
            for t in m.tuples(r) {
                limit.add_tuple(r, t.iter().zip(&sym.profile).map(|(&e, &s)| f.apply(s, e)).collect())?;
            }
        }
        for c in 0..sig.constants().len() {
            limit.set_constant(c, f.apply(sig.constants()[c].sort, m.constant(c)))?;
        }
    }
    for s in 0..ns {
        let mon = sig.monoid(s);
        let size = limit.size(s);
        for d in 0..mon.len() {
            if d == mon.identity() {
                continue;
            }
            let mut t = PairTable::new(size, size);
            for (i, m) in sys.structures.iter().enumerate() {
                for (a, b) in m.loc(s, d).pairs() {
                    t.insert(coprojections[i].apply(s, a), coprojections[i].apply(s, b));
                }
            }
            limit.set_locality(s, d, t)?;
        }
    }
    Ok(DirectLimit { structure: limit, coprojections })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LemmaClause {
    /// Positive formulas hold in the limit exactly when they hold of some
    /// preimage.
    Positive,
    /// Existential formulas that hold in the limit hold of some preimage.
    Existential,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LimitLemmaReport {
    pub clause: LemmaClause,
    pub in_limit: bool,
    /// First `(index, preimage)` satisfying the formula.
    pub witness: Option<(usize, Vec<usize>)>,
    pub verified: bool,
}

/// No universal quantifier in positive position and no existential one in
/// negative position.
fn existential(f: &Formula, negated: bool) -> bool {
    match f {
        Formula::Top | Formula::Bot | Formula::Equal(..) | Formula::Atom { .. } => true,
        Formula::And(fs) | Formula::Or(fs) => fs.iter().all(|g| existential(g, negated)),
        Formula::Not(g) => existential(g, !negated),
        Formula::Exists(_, g) | Formula::LocalExists { body: g, .. } => !negated && existential(g, negated),
        Formula::Forall(_, g) => negated && existential(g, negated),
    }
}

pub fn is_existential(f: &Formula) -> bool {
    existential(f, false)
}

pub fn is_universal(f: &Formula) -> bool {
    existential(f, true)
}

/// Checks the preservation lemma for `phi` at the tuple `a` of the limit.
pub fn verify_limit_lemma(
    sys: &DirectSystem,
    limit: &DirectLimit,
    phi: &Formula,
    vars: &[Var],
    a: &[usize],
) -> Result<LimitLemmaReport, LimitError> {
    let sig = limit.structure.sig();
    let clause = if classify(phi, sig).positive {
        LemmaClause::Positive
    } else if is_existential(phi) {
        LemmaClause::Existential
    } else {
        return Err(LimitError::ClassMismatch(print(phi, sig)));
    };
    if vars.len() != a.len() {
        return Err(LimitError::BadMap("tuple length differs from variable count".into()));
    }
    let in_limit = Evaluator::new(&limit.structure, phi, vars)?.eval(a);
    let mut witness = None;
    'outer: for (i, m) in sys.structures.iter().enumerate() {
        let f = &limit.coprojections[i];
        let pre: Vec<Vec<usize>> = vars
            .iter()
            .zip(a)
            .map(|(v, &x)| (0..m.size(v.sort)).filter(|&e| f.apply(v.sort, e) == x).collect())
            .collect();
        if pre.iter().any(|p| p.is_empty()) {
            continue;
        }
        let mut ev = Evaluator::new(m, phi, vars)?;
        let mut idx = vec![0usize; pre.len()];
        loop {
            let tuple: Vec<usize> = idx.iter().zip(&pre).map(|(&k, p)| p[k]).collect();
            if ev.eval(&tuple) {
                witness = Some((i, tuple));
                break 'outer;
            }
            let mut pos = idx.len();
            loop {
                if pos == 0 {
                    continue 'outer;
                }
                pos -= 1;
                idx[pos] += 1;
                if idx[pos] < pre[pos].len() {
                    break;
                }
                idx[pos] = 0;
            }
        }
    }
    let verified = match clause {
        LemmaClause::Positive => in_limit == witness.is_some(),
        LemmaClause::Existential => !in_limit || witness.is_some(),
    };
    Ok(LimitLemmaReport { clause, in_limit, witness, verified })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UniversalTransfer {
    pub checked: usize,
    /// Sentences true in every structure of the system.
    pub common: usize,
    /// Common sentences that fail in the limit.
    pub failures: Vec<Formula>,
}

/// The limit satisfies every universal sentence common to the system.
pub fn verify_universal_transfer(
    sys: &DirectSystem,
    limit: &DirectLimit,
    sentences: &[Formula],
) -> Result<UniversalTransfer, LimitError> {
    let sig = limit.structure.sig();
    let mut common = 0;
    let mut failures = Vec::new();
    for f in sentences {
        if !is_universal(f) || !f.is_sentence() {
            return Err(LimitError::ClassMismatch(print(f, sig)));
        }
        let mut all = true;
        for m in &sys.structures {
            if !crate::eval::holds(m, f)? {
                all = false;
                break;
            }
        }
        if all {
            common += 1;
            if !crate::eval::holds(&limit.structure, f)? {
                failures.push(f.clone());
            }
        }
    }
    Ok(UniversalTransfer { checked: sentences.len(), common, failures })
}

/// A connecting map in file form: `to ⪰ from`, with per-sort label maps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawMap {
    pub from: usize,
    pub to: usize,
    pub map: BTreeMap<String, BTreeMap<String, String>>,
}

/// File form. Structure entries are paths or `corpus:` ids; `order` lists
/// extra pairs `[j, i]` with `j ⪯ i` that the maps must already cover.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSystem {
    pub structures: Vec<String>,
    #[serde(default)]
    pub order: Vec<(usize, usize)>,
    pub maps: Vec<RawMap>,
}

impl RawSystem {
    pub fn from_file(path: &Path) -> Result<DirectSystem, LimitError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| LimitError::Malformed(format!("{}: {e}", path.display())))?;
        let raw: RawSystem = serde_json::from_str(&text).map_err(|e| LimitError::Malformed(e.to_string()))?;
        raw.build(path.parent())
    }

    pub fn build(&self, base: Option<&Path>) -> Result<DirectSystem, LimitError> {
        let mut structures = Vec::new();
        for e in &self.structures {
            let m = match e.strip_prefix("corpus:") {
                Some(id) => id
                    .parse::<CorpusId>()
                    .and_then(|id| id.build())
                    .map_err(|err| LimitError::Malformed(err.to_string()))?,
                None => {
                    let p = Path::new(e);
                    let path = match base {
                        Some(b) if p.is_relative() => b.join(p),
                        _ => p.to_path_buf(),
                    };
                    FiniteStructure::from_file(&path)?
                }
            };
            structures.push(m);
        }
        let mut edges = Vec::new();
        for rm in &self.maps {
            let (Some(a), Some(b)) = (structures.get(rm.from), structures.get(rm.to)) else {
                return Err(LimitError::BadMap(format!("index out of range in {} -> {}", rm.from, rm.to)));
            };
            let sig = a.sig();
            let mut maps = Vec::new();
            for s in 0..sig.sorts().len() {
                let table = rm.map.get(&sig.sorts()[s]);
                let mut row = Vec::new();
                for e in 0..a.size(s) {
                    let src = a.label(s, e);
                    let tgt = table
                        .and_then(|t| t.get(src))
                        .ok_or_else(|| LimitError::BadMap(format!("{} -> {}: no image for {src}", rm.from, rm.to)))?;
                    row.push(b.element(s, tgt)?);
                }
                maps.push(row);
            }
            edges.push((rm.from, rm.to, Homomorphism { maps }));
        }
        let sys = DirectSystem::new(structures, edges)?;
        for &(j, i) in &self.order {
            if !sys.above(i, j) {
                return Err(LimitError::MissingMap(j, i));
            }
        }
        Ok(sys)
    }
}

/// Inclusion map between structures that share labels.
pub fn inclusion_by_labels(a: &FiniteStructure, b: &FiniteStructure) -> Result<Homomorphism, LimitError> {
    let sig = a.sig();
    let maps = (0..sig.sorts().len())
        .map(|s| (0..a.size(s)).map(|e| b.element(s, a.label(s, e)).map_err(LimitError::from)).collect())
        .collect::<Result<Vec<Vec<usize>>, _>>()?;
    Ok(Homomorphism { maps })
}
