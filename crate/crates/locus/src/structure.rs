//! Finite structures for a local language.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formula::{Formula, Term, Var};
use crate::signature::{ConstId, LocId, RawSignature, RelId, SignatureError, SignatureSpec, SortId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StructureError {
    #[error(transparent)]
    Signature(#[from] SignatureError),
    #[error("sort {0} has an empty universe")]
    EmptySort(String),
    #[error("unknown element {label} of sort {sort}")]
    UnknownElement { sort: String, label: String },
    #[error("duplicate element {label} in sort {sort}")]
    DuplicateElement { sort: String, label: String },
    #[error("unknown symbol {0}")]
    UnknownSymbol(String),
    #[error("sort mismatch: {0}")]
    SortMismatch(String),
    #[error("constant {0} is not interpreted")]
    UninterpretedConstant(String),
    #[error("subset omits the interpretation of constant {0}")]
    ConstantsNotContained(String),
    #[error("constant {constant} of sort {sort} lies outside the local component")]
    ConstantOutsideComponent { sort: String, constant: String },
    #[error("the identity locality element of sort {0} must be equality")]
    IdentityNotDiagonal(String),
    #[error("locality axioms fail: {0}")]
    AxiomsViolated(String),
    #[error("structures are over different signatures")]
    SignatureMismatch,
    #[error("malformed structure: {0}")]
    Malformed(String),
    #[error("cannot read {path}: {msg}")]
    Io { path: String, msg: String },
}

/// A bit matrix of element pairs.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PairTable {
    rows: usize,
    cols: usize,
    words: usize,
    bits: Vec<u64>,
}

impl PairTable {
    pub fn new(rows: usize, cols: usize) -> Self {
        let words = cols.div_ceil(64).max(1);
        PairTable { rows, cols, words, bits: vec![0; rows * words] }
    }

    pub fn diagonal(n: usize) -> Self {
        let mut t = Self::new(n, n);
        for i in 0..n {
            t.insert(i, i);
        }
        t
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        let mut t = Self::new(rows, cols);
        for a in 0..rows {
            for b in 0..cols {
                t.insert(a, b);
            }
        }
        t
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut t = Self::new(rows, cols);
        for a in 0..rows {
            for b in 0..cols {
                if f(a, b) {
                    t.insert(a, b);
                }
            }
        }
        t
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn contains(&self, a: usize, b: usize) -> bool {
        self.bits[a * self.words + b / 64] >> (b % 64) & 1 == 1
    }

    pub fn insert(&mut self, a: usize, b: usize) {
        self.bits[a * self.words + b / 64] |= 1 << (b % 64);
    }

    pub fn remove(&mut self, a: usize, b: usize) {
        self.bits[a * self.words + b / 64] &= !(1 << (b % 64));
    }

    pub fn row_words(&self, a: usize) -> &[u64] {
        &self.bits[a * self.words..(a + 1) * self.words]
    }

    pub fn row(&self, a: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.cols).filter(move |&b| self.contains(a, b))
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.rows).flat_map(move |a| self.row(a).map(move |b| (a, b)))
    }

    pub fn len(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(|&w| w == 0)
    }

    /// True iff row `a` of `self` is contained in row `b` of `other`.
    pub fn row_subset(&self, a: usize, other: &PairTable, b: usize) -> bool {
        self.row_words(a).iter().zip(other.row_words(b)).all(|(x, y)| x & !y == 0)
    }

    pub fn is_subset(&self, other: &PairTable) -> bool {
        self.bits.iter().zip(&other.bits).all(|(x, y)| x & !y == 0)
    }

    /// Table over the selected rows and columns, renumbered in order.
    pub fn restrict(&self, rows: &[usize], cols: &[usize]) -> PairTable {
        PairTable::from_fn(rows.len(), cols.len(), |i, j| self.contains(rows[i], cols[j]))
    }
}

/// Lookup tables derived from a structure.
#[derive(Debug)]
pub(crate) struct Index {
    /// Per relation: membership for unary relations.
    pub unary: Vec<Option<Vec<bool>>>,
    /// Per relation: bit matrix for binary relations.
    pub binary: Vec<Option<PairTable>>,
    /// Per binary relation: successors and predecessors.
    pub succ: Vec<Option<Vec<Vec<usize>>>>,
    pub pred: Vec<Option<Vec<Vec<usize>>>>,
    /// Per sort and locality element: neighbour lists.
    pub balls: Vec<Vec<Vec<Vec<usize>>>>,
}

#[derive(Debug)]
pub struct FiniteStructure {
    sig: Arc<SignatureSpec>,
    universes: Vec<Vec<String>>,
    relations: Vec<BTreeSet<Vec<usize>>>,
    constants: Vec<Option<usize>>,
    locality: Vec<Vec<PairTable>>,
    index: OnceLock<Arc<Index>>,
}

impl Clone for FiniteStructure {
    fn clone(&self) -> Self {
        FiniteStructure {
            sig: self.sig.clone(),
            universes: self.universes.clone(),
            relations: self.relations.clone(),
            constants: self.constants.clone(),
            locality: self.locality.clone(),
            index: self.index.clone(),
        }
    }
}

impl PartialEq for FiniteStructure {
    fn eq(&self, other: &Self) -> bool {
        self.sig == other.sig
            && self.universes == other.universes
            && self.relations == other.relations
            && self.constants == other.constants
            && self.locality == other.locality
    }
}

impl Eq for FiniteStructure {}

impl FiniteStructure {
    /// A structure with the given universes, no relation tuples and every
    /// locality element other than the identity empty. Constants must be
    /// set before the structure is used.
    pub fn new(sig: Arc<SignatureSpec>, universes: Vec<Vec<String>>) -> Result<Self, StructureError> {
        if universes.len() != sig.sorts().len() {
            return Err(StructureError::Malformed("one universe per sort is required".into()));
        }
        for (s, u) in universes.iter().enumerate() {
            if u.is_empty() {
                return Err(StructureError::EmptySort(sig.sorts()[s].clone()));
            }
            let mut seen = BTreeSet::new();
            for l in u {
                if !seen.insert(l) {
                    return Err(StructureError::DuplicateElement { sort: sig.sorts()[s].clone(), label: l.clone() });
                }
            }
        }
        let locality = (0..sig.sorts().len())
            .map(|s| {
                let n = universes[s].len();
                let m = sig.monoid(s);
                (0..m.len())
                    .map(|d| if d == m.identity() { PairTable::diagonal(n) } else { PairTable::new(n, n) })
                    .collect()
            })
            .collect();
        Ok(FiniteStructure {
            relations: vec![BTreeSet::new(); sig.relations().len()],
            constants: vec![None; sig.constants().len()],
            locality,
            universes,
            sig,
            index: OnceLock::new(),
        })
    }

    fn touch(&mut self) {
        self.index = OnceLock::new();
    }

    pub fn sig(&self) -> &SignatureSpec {
        &self.sig
    }

    pub fn sig_arc(&self) -> &Arc<SignatureSpec> {
        &self.sig
    }

    pub fn universe(&self, sort: SortId) -> &[String] {
        &self.universes[sort]
    }

    pub fn size(&self, sort: SortId) -> usize {
        self.universes[sort].len()
    }

    /// Total number of elements over all sorts.
    pub fn total_size(&self) -> usize {
        self.universes.iter().map(Vec::len).sum()
    }

    pub fn label(&self, sort: SortId, e: usize) -> &str {
        &self.universes[sort][e]
    }

    pub fn element(&self, sort: SortId, label: &str) -> Result<usize, StructureError> {
        self.universes[sort].iter().position(|l| l == label).ok_or_else(|| StructureError::UnknownElement {
            sort: self.sig.sorts()[sort].clone(),
            label: label.to_string(),
        })
    }

    pub fn tuples(&self, r: RelId) -> &BTreeSet<Vec<usize>> {
        &self.relations[r]
    }

    pub fn holds(&self, r: RelId, args: &[usize]) -> bool {
        self.relations[r].contains(args)
    }

    pub fn constant(&self, c: ConstId) -> usize {
        self.constants[c].expect("constants are interpreted")
    }

    pub fn loc(&self, sort: SortId, d: LocId) -> &PairTable {
        &self.locality[sort][d]
    }

    pub fn related(&self, sort: SortId, d: LocId, a: usize, b: usize) -> bool {
        self.locality[sort][d].contains(a, b)
    }

    pub fn set_constant(&mut self, c: ConstId, e: usize) -> Result<(), StructureError> {
        let sort = self.sig.constants()[c].sort;
        if e >= self.size(sort) {
            return Err(StructureError::SortMismatch(self.sig.constants()[c].name.clone()));
        }
        self.constants[c] = Some(e);
        self.touch();
        Ok(())
    }

    pub fn set_constant_named(&mut self, name: &str, label: &str) -> Result<(), StructureError> {
        let c = self.sig.constant_index(name).ok_or_else(|| StructureError::UnknownSymbol(name.to_string()))?;
        let e = self.element(self.sig.constants()[c].sort, label)?;
        self.set_constant(c, e)
    }

    pub fn add_tuple(&mut self, r: RelId, args: Vec<usize>) -> Result<(), StructureError> {
        let profile = &self.sig.relations()[r].profile;
        if profile.len() != args.len() || args.iter().zip(profile).any(|(&e, &s)| e >= self.universes[s].len()) {
            return Err(StructureError::SortMismatch(self.sig.relations()[r].name.clone()));
        }
        self.relations[r].insert(args);
        self.touch();
        Ok(())
    }

    pub fn remove_tuple(&mut self, r: RelId, args: &[usize]) {
        self.relations[r].remove(args);
        self.touch();
    }

    pub fn add_tuple_named(&mut self, rel: &str, labels: &[&str]) -> Result<(), StructureError> {
        let r = self.sig.relation_index(rel).ok_or_else(|| StructureError::UnknownSymbol(rel.to_string()))?;
        let profile = self.sig.relations()[r].profile.clone();
        if profile.len() != labels.len() {
            return Err(StructureError::SortMismatch(rel.to_string()));
        }
        let args = labels.iter().zip(&profile).map(|(l, &s)| self.element(s, l)).collect::<Result<Vec<_>, _>>()?;
        self.add_tuple(r, args)
    }

    /// Replaces the interpretation of a non-identity locality element.
    pub fn set_locality(&mut self, sort: SortId, d: LocId, table: PairTable) -> Result<(), StructureError> {
        let n = self.size(sort);
        if table.rows() != n || table.cols() != n {
            return Err(StructureError::Malformed("locality table has the wrong size".into()));
        }
        if d == self.sig.monoid(sort).identity() && table != PairTable::diagonal(n) {
            return Err(StructureError::IdentityNotDiagonal(self.sig.sorts()[sort].clone()));
        }
        self.locality[sort][d] = table;
        self.touch();
        Ok(())
    }

    pub fn insert_locality_pair(&mut self, sort: SortId, d: LocId, a: usize, b: usize) -> Result<(), StructureError> {
        if d == self.sig.monoid(sort).identity() && a != b {
            return Err(StructureError::IdentityNotDiagonal(self.sig.sorts()[sort].clone()));
        }
        self.locality[sort][d].insert(a, b);
        self.touch();
        Ok(())
    }

    pub fn remove_locality_pair(&mut self, sort: SortId, d: LocId, a: usize, b: usize) -> Result<(), StructureError> {
        if d == self.sig.monoid(sort).identity() {
            return Err(StructureError::IdentityNotDiagonal(self.sig.sorts()[sort].clone()));
        }
        self.locality[sort][d].remove(a, b);
        self.touch();
        Ok(())
    }

    /// Fails if some constant has no interpretation.
    pub fn check_complete(&self) -> Result<(), StructureError> {
        for (c, v) in self.constants.iter().enumerate() {
            if v.is_none() {
                return Err(StructureError::UninterpretedConstant(self.sig.constants()[c].name.clone()));
            }
        }
        Ok(())
    }

    pub(crate) fn index(&self) -> Arc<Index> {
        self.index.get_or_init(|| Arc::new(self.build_index())).clone()
    }

    fn build_index(&self) -> Index {
        let rels = self.sig.relations();
        let mut unary = Vec::with_capacity(rels.len());
        let mut binary = Vec::with_capacity(rels.len());
        let mut succ = Vec::with_capacity(rels.len());
        let mut pred = Vec::with_capacity(rels.len());
        for (r, sym) in rels.iter().enumerate() {
            match sym.profile.as_slice() {
                [s] => {
                    let mut v = vec![false; self.size(*s)];
                    for t in &self.relations[r] {
                        v[t[0]] = true;
                    }
                    unary.push(Some(v));
                    binary.push(None);
                    succ.push(None);
                    pred.push(None);
                }
                [s, t] => {
                    let mut m = PairTable::new(self.size(*s), self.size(*t));
                    let mut out = vec![Vec::new(); self.size(*s)];
                    let mut inn = vec![Vec::new(); self.size(*t)];
                    for tup in &self.relations[r] {
                        m.insert(tup[0], tup[1]);
                        out[tup[0]].push(tup[1]);
                        inn[tup[1]].push(tup[0]);
                    }
                    unary.push(None);
                    binary.push(Some(m));
                    succ.push(Some(out));
                    pred.push(Some(inn));
                }
                _ => {
                    unary.push(None);
                    binary.push(None);
                    succ.push(None);
                    pred.push(None);
                }
            }
        }
        let balls = self
            .locality
            .iter()
            .map(|per_d| per_d.iter().map(|t| (0..t.rows()).map(|a| t.row(a).collect()).collect()).collect())
            .collect();
        Index { unary, binary, succ, pred, balls }
    }

    /// `{ b : d(a, b) }`.
    pub fn ball(&self, d: LocId, sort: SortId, a: usize) -> Vec<usize> {
        self.locality[sort][d].row(a).collect()
    }

    /// Ball by names; the sort is that of the element's owner.
    pub fn ball_named(&self, sort: &str, d: &str, label: &str) -> Result<Vec<String>, StructureError> {
        let s = self.sig.sort_index(sort).ok_or_else(|| StructureError::UnknownSymbol(sort.to_string()))?;
        let di = self.sig.locality_index(s, d).ok_or_else(|| StructureError::SortMismatch(d.to_string()))?;
        let a = self.element(s, label)?;
        Ok(self.ball(di, s, a).into_iter().map(|b| self.label(s, b).to_string()).collect())
    }

    /// Restriction to the given element indices per sort (kept in the given order).
    pub fn induced_substructure(&self, subsets: &[Vec<usize>]) -> Result<FiniteStructure, StructureError> {
        if subsets.len() != self.sig.sorts().len() {
            return Err(StructureError::Malformed("one subset per sort is required".into()));
        }
        let mut pos: Vec<BTreeMap<usize, usize>> = Vec::new();
        for (s, sub) in subsets.iter().enumerate() {
            if sub.is_empty() {
                return Err(StructureError::EmptySort(self.sig.sorts()[s].clone()));
            }
            let mut m = BTreeMap::new();
            for (i, &e) in sub.iter().enumerate() {
                if e >= self.size(s) || m.insert(e, i).is_some() {
                    return Err(StructureError::Malformed("subset lists an element twice or out of range".into()));
                }
            }
            pos.push(m);
        }
        for (c, sym) in self.sig.constants().iter().enumerate() {
            if !pos[sym.sort].contains_key(&self.constant(c)) {
                return Err(StructureError::ConstantsNotContained(sym.name.clone()));
            }
        }
        let universes =
            subsets.iter().enumerate().map(|(s, sub)| sub.iter().map(|&e| self.universes[s][e].clone()).collect()).collect();
        let mut out = FiniteStructure::new(self.sig.clone(), universes)?;
        for (r, sym) in self.sig.relations().iter().enumerate() {
            for t in &self.relations[r] {
                let mapped: Option<Vec<usize>> =
                    t.iter().zip(&sym.profile).map(|(e, &s)| pos[s].get(e).copied()).collect();
                if let Some(m) = mapped {
                    out.relations[r].insert(m);
                }
            }
        }
        for (c, sym) in self.sig.constants().iter().enumerate() {
            out.constants[c] = Some(pos[sym.sort][&self.constant(c)]);
        }
        for (s, sub) in subsets.iter().enumerate() {
            for d in 0..self.sig.monoid(s).len() {
                out.locality[s][d] = self.locality[s][d].restrict(sub, sub);
            }
        }
        Ok(out)
    }

    /// Restriction by labels.
    pub fn induced_substructure_named(&self, subsets: &[Vec<&str>]) -> Result<FiniteStructure, StructureError> {
        let idx = subsets
            .iter()
            .enumerate()
            .map(|(s, labels)| labels.iter().map(|l| self.element(s, l)).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        self.induced_substructure(&idx)
    }

    /// The union of all balls at `o[s]` in each sort, as a substructure.
    /// The input must satisfy the first four locality axioms; the output is
    /// checked against all five.
    pub fn local_component(&self, o: &[usize]) -> Result<FiniteStructure, StructureError> {
        let report = check_locality_axioms(self);
        if let Some(w) = report.first_failure_among(&[1, 2, 3, 4]) {
            return Err(StructureError::AxiomsViolated(format!("{w:?}")));
        }
        if o.len() != self.sig.sorts().len() {
            return Err(StructureError::Malformed("one base point per sort is required".into()));
        }
        let mut subsets = Vec::new();
        for (s, &base) in o.iter().enumerate() {
            if base >= self.size(s) {
                return Err(StructureError::SortMismatch(format!("base point of sort {}", self.sig.sorts()[s])));
            }
            let mut members = vec![false; self.size(s)];
            for t in &self.locality[s] {
                for b in t.row(base) {
                    members[b] = true;
                }
            }
            for c in self.sig.constants_of_sort(s) {
                if !members[self.constant(c)] {
                    return Err(StructureError::ConstantOutsideComponent {
                        sort: self.sig.sorts()[s].clone(),
                        constant: self.sig.constants()[c].name.clone(),
                    });
                }
            }
            subsets.push((0..self.size(s)).filter(|&e| members[e]).collect::<Vec<_>>());
        }
        let out = self.induced_substructure(&subsets)?;
        let check = check_locality_axioms(&out);
        if let Some(w) = check.first_failure_among(&[1, 2, 3, 4, 5]) {
            return Err(StructureError::AxiomsViolated(format!("component: {w:?}")));
        }
        Ok(out)
    }

    pub fn from_json(text: &str, base: Option<&Path>) -> Result<Self, StructureError> {
        let raw: RawStructure = serde_json::from_str(text).map_err(|e| StructureError::Malformed(e.to_string()))?;
        raw.build(base)
    }

    pub fn from_file(path: &Path) -> Result<Self, StructureError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| StructureError::Io { path: path.display().to_string(), msg: e.to_string() })?;
        Self::from_json(&text, path.parent())
    }

    pub fn to_raw(&self) -> RawStructure {
        let sig = &self.sig;
        let universes = sig.sorts().iter().cloned().zip(self.universes.iter().cloned()).collect();
        let relations = sig
            .relations()
            .iter()
            .enumerate()
            .map(|(r, sym)| {
                let tuples = self.relations[r]
                    .iter()
                    .map(|t| t.iter().zip(&sym.profile).map(|(&e, &s)| self.universes[s][e].clone()).collect())
                    .collect();
                (sym.name.clone(), tuples)
            })
            .collect();
        let constants = sig
            .constants()
            .iter()
            .enumerate()
            .filter_map(|(c, sym)| self.constants[c].map(|e| (sym.name.clone(), self.universes[sym.sort][e].clone())))
            .collect();
        let locality = sig
            .sorts()
            .iter()
            .enumerate()
            .map(|(s, name)| {
                let m = sig.monoid(s);
                let per_d = (0..m.len())
                    .filter(|&d| d != m.identity())
                    .map(|d| {
                        let pairs = self.locality[s][d]
                            .pairs()
                            .map(|(a, b)| (self.universes[s][a].clone(), self.universes[s][b].clone()))
                            .collect();
                        (m.name(d).to_string(), pairs)
                    })
                    .collect();
                (name.clone(), per_d)
            })
            .collect();
        RawStructure {
            signature: SignatureRef::Inline(Box::new(sig.to_raw())),
            universes,
            relations,
            constants,
            locality,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_raw()).expect("structure serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SignatureRef {
    Inline(Box<RawSignature>),
    Path(String),
}

/// File form. Element names are labels; maps are keyed by symbol name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawStructure {
    pub signature: SignatureRef,
    pub universes: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub relations: BTreeMap<String, Vec<Vec<String>>>,
    #[serde(default)]
    pub constants: BTreeMap<String, String>,
    #[serde(default)]
    pub locality: BTreeMap<String, BTreeMap<String, Vec<(String, String)>>>,
}

impl RawStructure {
    pub fn build(&self, base: Option<&Path>) -> Result<FiniteStructure, StructureError> {
        let raw_sig = match &self.signature {
            SignatureRef::Inline(raw) => (**raw).clone(),
            SignatureRef::Path(p) => {
                let path = match base {
                    Some(b) if Path::new(p).is_relative() => b.join(p),
                    _ => Path::new(p).to_path_buf(),
                };
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| StructureError::Io { path: path.display().to_string(), msg: e.to_string() })?;
                serde_json::from_str(&text).map_err(|e| StructureError::Malformed(e.to_string()))?
            }
        };
        let sig = Arc::new(crate::signature::validate_signature(&raw_sig)?);
        self.build_with(sig)
    }

    pub fn build_with(&self, sig: Arc<SignatureSpec>) -> Result<FiniteStructure, StructureError> {
        for k in self.universes.keys() {
            if sig.sort_index(k).is_none() {
                return Err(StructureError::UnknownSymbol(k.clone()));
            }
        }
        let universes = sig
            .sorts()
            .iter()
            .map(|s| self.universes.get(s).cloned().ok_or_else(|| StructureError::EmptySort(s.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        let mut m = FiniteStructure::new(sig.clone(), universes)?;
        for (name, tuples) in &self.relations {
            for t in tuples {
                let labels: Vec<&str> = t.iter().map(String::as_str).collect();
                m.add_tuple_named(name, &labels)?;
            }
        }
        for (c, label) in &self.constants {
            m.set_constant_named(c, label)?;
        }
        for (sort, per_d) in &self.locality {
            let s = sig.sort_index(sort).ok_or_else(|| StructureError::UnknownSymbol(sort.clone()))?;
            for (d, pairs) in per_d {
                let di = sig.locality_index(s, d).ok_or_else(|| StructureError::UnknownSymbol(d.clone()))?;
                for (a, b) in pairs {
                    let (ia, ib) = (m.element(s, a)?, m.element(s, b)?);
                    m.insert_locality_pair(s, di, ia, ib)?;
                }
            }
        }
        m.check_complete()?;
        Ok(m)
    }
}

// ---------------------------------------------------------------------------
// Locality axioms

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AxiomWitness {
    /// `d(a, b)` holds but `d(b, a)` does not.
    Symmetry { sort: String, d: String, a: String, b: String },
    /// `lo ≼ hi` and `lo(a, b)` but not `hi(a, b)`.
    Monotonicity { sort: String, lo: String, hi: String, a: String, b: String },
    /// `d1(a, b)` and `d2(b, c)` but not `(d1 ∗ d2)(a, c)`.
    Composition { sort: String, d1: String, d2: String, a: String, b: String, c: String },
    /// The bound element does not relate the two constants.
    Bound { c1: String, c2: String, d: String },
    /// No locality element relates `a` and `b`.
    Totality { sort: String, a: String, b: String },
}

impl AxiomWitness {
    /// A formula and environment that evaluate to true exactly when the
    /// violation is present.
    pub fn as_formula(&self, m: &FiniteStructure) -> (Formula, crate::eval::Environment) {
        let sig = m.sig();
        let mut env = crate::eval::Environment::new();
        let sort_of = |name: &str| sig.sort_index(name).expect("witness sort");
        let bind = |env: &mut crate::eval::Environment, v: &str, s: SortId, label: &str| {
            env.bind(v, s, m.element(s, label).expect("witness element"));
            Term::Var(Var::new(v, s))
        };
        match self {
            AxiomWitness::Symmetry { sort, d, a, b } => {
                let s = sort_of(sort);
                let di = sig.locality_index(s, d).unwrap();
                let (ta, tb) = (bind(&mut env, "a", s, a), bind(&mut env, "b", s, b));
                let f = Formula::And(vec![
                    Formula::loc(s, di, ta.clone(), tb.clone()),
                    Formula::not(Formula::loc(s, di, tb, ta)),
                ]);
                (f, env)
            }
            AxiomWitness::Monotonicity { sort, lo, hi, a, b } => {
                let s = sort_of(sort);
                let (l, h) = (sig.locality_index(s, lo).unwrap(), sig.locality_index(s, hi).unwrap());
                let (ta, tb) = (bind(&mut env, "a", s, a), bind(&mut env, "b", s, b));
                let f = Formula::And(vec![
                    Formula::loc(s, l, ta.clone(), tb.clone()),
                    Formula::not(Formula::loc(s, h, ta, tb)),
                ]);
                (f, env)
            }
            AxiomWitness::Composition { sort, d1, d2, a, b, c } => {
                let s = sort_of(sort);
                let (x, y) = (sig.locality_index(s, d1).unwrap(), sig.locality_index(s, d2).unwrap());
                let z = sig.monoid(s).op(x, y);
                let ta = bind(&mut env, "a", s, a);
                let tb = bind(&mut env, "b", s, b);
                let tc = bind(&mut env, "c", s, c);
                let f = Formula::And(vec![
                    Formula::loc(s, x, ta.clone(), tb.clone()),
                    Formula::loc(s, y, tb, tc.clone()),
                    Formula::not(Formula::loc(s, z, ta, tc)),
                ]);
                (f, env)
            }
            AxiomWitness::Bound { c1, c2, d } => {
                let i = sig.constant_index(c1).unwrap();
                let j = sig.constant_index(c2).unwrap();
                let s = sig.constants()[i].sort;
                let di = sig.locality_index(s, d).unwrap();
                (Formula::not(Formula::loc(s, di, Term::Const(i), Term::Const(j))), env)
            }
            AxiomWitness::Totality { sort, a, b } => {
                let s = sort_of(sort);
                let (ta, tb) = (bind(&mut env, "a", s, a), bind(&mut env, "b", s, b));
                let f = Formula::and(
                    (0..sig.monoid(s).len())
                        .map(|d| Formula::not(Formula::loc(s, d, ta.clone(), tb.clone())))
                        .collect(),
                );
                (f, env)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", content = "witness", rename_all = "snake_case")]
pub enum AxiomOutcome {
    Pass,
    Fail(AxiomWitness),
}

impl AxiomOutcome {
    pub fn passed(&self) -> bool {
        matches!(self, AxiomOutcome::Pass)
    }
}

/// Outcome of each of the five locality axioms: symmetry, monotonicity,
/// composition, bounds on constants, totality.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AxiomReport {
    pub a1: AxiomOutcome,
    pub a2: AxiomOutcome,
    pub a3: AxiomOutcome,
    pub a4: AxiomOutcome,
    pub a5: AxiomOutcome,
}

impl AxiomReport {
    pub fn all_pass(&self) -> bool {
        self.outcomes().iter().all(|o| o.passed())
    }

    /// Axioms one to four.
    pub fn premodel(&self) -> bool {
        self.first_failure_among(&[1, 2, 3, 4]).is_none()
    }

    pub fn outcomes(&self) -> [&AxiomOutcome; 5] {
        [&self.a1, &self.a2, &self.a3, &self.a4, &self.a5]
    }

    pub fn first_failure_among(&self, axioms: &[usize]) -> Option<&AxiomWitness> {
        axioms.iter().find_map(|&i| match self.outcomes()[i - 1] {
            AxiomOutcome::Fail(w) => Some(w),
            AxiomOutcome::Pass => None,
        })
    }
}

pub fn check_locality_axioms(m: &FiniteStructure) -> AxiomReport {
    let sig = m.sig();
    let lab = |s: SortId, e: usize| m.label(s, e).to_string();
    let sname = |s: SortId| sig.sorts()[s].clone();

    let a1 = (|| {
        for s in 0..sig.sorts().len() {
            let mon = sig.monoid(s);
            for d in 0..mon.len() {
                let t = m.loc(s, d);
                for (a, b) in t.pairs() {
                    if !t.contains(b, a) {
                        return AxiomOutcome::Fail(AxiomWitness::Symmetry {
                            sort: sname(s),
                            d: mon.name(d).to_string(),
                            a: lab(s, a),
                            b: lab(s, b),
                        });
                    }
                }
            }
        }
        AxiomOutcome::Pass
    })();

    let a2 = (|| {
        for s in 0..sig.sorts().len() {
            let mon = sig.monoid(s);
            for lo in 0..mon.len() {
                for hi in 0..mon.len() {
                    if lo == hi || !mon.le(lo, hi) {
                        continue;
                    }
                    let (tl, th) = (m.loc(s, lo), m.loc(s, hi));
                    if let Some((a, b)) = tl.pairs().find(|&(a, b)| !th.contains(a, b)) {
                        return AxiomOutcome::Fail(AxiomWitness::Monotonicity {
                            sort: sname(s),
                            lo: mon.name(lo).to_string(),
                            hi: mon.name(hi).to_string(),
                            a: lab(s, a),
                            b: lab(s, b),
                        });
                    }
                }
            }
        }
        AxiomOutcome::Pass
    })();

    let a3 = (|| {
        for s in 0..sig.sorts().len() {
            let mon = sig.monoid(s);
            let n = m.size(s);
            for d1 in 0..mon.len() {
                for d2 in 0..mon.len() {
                    let (t1, t2, t3) = (m.loc(s, d1), m.loc(s, d2), m.loc(s, mon.op(d1, d2)));
                    for a in 0..n {
                        for b in t1.row(a) {
                            if !t2.row_subset(b, t3, a) {
                                let c = t2.row(b).find(|&c| !t3.contains(a, c)).expect("row differs");
                                return AxiomOutcome::Fail(AxiomWitness::Composition {
                                    sort: sname(s),
                                    d1: mon.name(d1).to_string(),
                                    d2: mon.name(d2).to_string(),
                                    a: lab(s, a),
                                    b: lab(s, b),
                                    c: lab(s, c),
                                });
                            }
                        }
                    }
                }
            }
        }
        AxiomOutcome::Pass
    })();

    let a4 = (|| {
        let consts = sig.constants();
        for i in 0..consts.len() {
            for j in i..consts.len() {
                if consts[i].sort != consts[j].sort {
                    continue;
                }
                let s = consts[i].sort;
                let d = sig.bound(i, j);
                if !m.related(s, d, m.constant(i), m.constant(j)) {
                    return AxiomOutcome::Fail(AxiomWitness::Bound {
                        c1: consts[i].name.clone(),
                        c2: consts[j].name.clone(),
                        d: sig.monoid(s).name(d).to_string(),
                    });
                }
            }
        }
        AxiomOutcome::Pass
    })();

    let a5 = (|| {
        for s in 0..sig.sorts().len() {
            let n = m.size(s);
            let mut union = PairTable::new(n, n);
            for d in 0..sig.monoid(s).len() {
                for (a, b) in m.loc(s, d).pairs() {
                    union.insert(a, b);
                }
            }
            for a in 0..n {
                for b in 0..n {
                    if !union.contains(a, b) {
                        return AxiomOutcome::Fail(AxiomWitness::Totality { sort: sname(s), a: lab(s, a), b: lab(s, b) });
                    }
                }
            }
        }
        AxiomOutcome::Pass
    })();

    AxiomReport { a1, a2, a3, a4, a5 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::eval::eval;
    use crate::signature::LocalityMonoid;
    use proptest::prelude::*;

    /// Independent construction of the integer window with |x−y| ≤ k.
    fn window_oracle(n: i64, cap: usize) -> FiniteStructure {
        let names: Vec<String> = (0..=n).flat_map(|k| vec![format!("P{k}"), format!("Q{k}")]).collect();
        let rels: Vec<(&str, usize)> = names.iter().map(|s| (s.as_str(), 1)).collect();
        let sig = Arc::new(SignatureSpec::one_sorted("s", &rels, &[], LocalityMonoid::saturating(cap)).unwrap());
        let elems: Vec<i64> = (-n..=n).collect();
        let mut m = FiniteStructure::new(sig, vec![elems.iter().map(|x| x.to_string()).collect()]).unwrap();
        for d in 1..=cap {
            let t = PairTable::from_fn(elems.len(), elems.len(), |a, b| {
                d == cap || (elems[a] - elems[b]).unsigned_abs() as usize <= d
            });
            m.set_locality(0, d, t).unwrap();
        }
        m
    }

    #[test]
    fn balls_in_integer_window() {
        let z = corpus::z(10);
        assert_eq!(z.ball_named("s", "d2", "0").unwrap(), vec!["-2", "-1", "0", "1", "2"]);
        assert_eq!(z.ball_named("s", "d0", "7").unwrap(), vec!["7"]);
        let oracle = window_oracle(10, 20);
        let e = oracle.element(0, "0").unwrap();
        let expected: Vec<&str> = oracle.ball(2, 0, e).into_iter().map(|b| oracle.label(0, b)).collect();
        assert_eq!(z.ball_named("s", "d2", "0").unwrap(), expected);
    }

    #[test]
    fn hamming_ball() {
        let h = corpus::hamming(4);
        let mut ball = h.ball_named("s", "d1", "0000").unwrap();
        ball.sort();
        // every string at Hamming distance at most one from 0000
        let mut expected: Vec<String> = (0..16u32)
            .filter(|x| x.count_ones() <= 1)
            .map(|x| (0..4).map(|k| if x >> k & 1 == 1 { '1' } else { '0' }).collect())
            .collect();
        expected.sort();
        assert_eq!(ball, expected);
    }

    #[test]
    fn integer_window_is_local() {
        assert!(check_locality_axioms(&corpus::z(10)).all_pass());
        assert!(check_locality_axioms(&corpus::i_point(10)).all_pass());
    }

    #[test]
    fn emptied_top_breaks_totality() {
        let mut z = corpus::z(10);
        let top = z.sig().monoid(0).top().unwrap();
        z.set_locality(0, top, PairTable::new(21, 21)).unwrap();
        let report = check_locality_axioms(&z);
        // exhaustive scan: |−10 − 10| = 20 is the only distance beyond d19
        let expected = (0..21usize)
            .flat_map(|a| (0..21usize).map(move |b| (a, b)))
            .find(|&(a, b)| (a as i64 - b as i64).abs() > 19)
            .unwrap();
        assert_eq!(
            report.a5,
            AxiomOutcome::Fail(AxiomWitness::Totality {
                sort: "s".into(),
                a: z.label(0, expected.0).into(),
                b: z.label(0, expected.1).into()
            })
        );
        assert_eq!(expected, (0, 20));
        assert_eq!(z.label(0, 0), "-10");
        // A2 also fails since d19 is no longer contained in d20
        assert!(!report.a2.passed());
    }

    #[test]
    fn witnesses_recheck_by_evaluation() {
        let mut z = corpus::z(3);
        let d1 = 1;
        z.remove_locality_pair(0, d1, 2, 3).unwrap();
        let report = check_locality_axioms(&z);
        for o in report.outcomes() {
            if let AxiomOutcome::Fail(w) = o {
                let (f, env) = w.as_formula(&z);
                assert!(eval(&z, &f, &env).unwrap(), "{w:?}");
            }
        }
        assert!(!report.a1.passed());
    }

    #[test]
    fn substructure_of_window() {
        let z = corpus::z(10);
        let sub = z.induced_substructure_named(&[(-3..=3).map(|x| x.to_string()).collect::<Vec<_>>().iter().map(String::as_str).collect()]).unwrap();
        let oracle = window_oracle(3, 20);
        assert_eq!(sub.universe(0), oracle.universe(0));
        for d in 0..=20 {
            assert_eq!(sub.loc(0, d), oracle.loc(0, d), "d{d}");
        }
        let full: Vec<usize> = (0..21).collect();
        assert_eq!(z.induced_substructure(&[full]).unwrap(), z);
    }

    #[test]
    fn substructure_must_keep_constants() {
        let z = corpus::pointed_z(4);
        let err = z.induced_substructure_named(&[vec!["1", "2"]]);
        assert_eq!(err, Err(StructureError::ConstantsNotContained("0".into())));
    }

    /// Two copies of a window glued only by the top relation being absent.
    fn two_copies(with_constant: bool) -> FiniteStructure {
        let cap = 10;
        let consts: &[&str] = if with_constant { &["0"] } else { &[] };
        let sig = Arc::new(SignatureSpec::one_sorted("s", &[("P", 1)], consts, LocalityMonoid::saturating(cap)).unwrap());
        let labels: Vec<String> = (0..2).flat_map(|c| (-5..=5).map(move |x| format!("{c}:{x}"))).collect();
        let mut m = FiniteStructure::new(sig, vec![labels]).unwrap();
        let pos = |i: usize| (i / 11, i as i64 % 11 - 5);
        for d in 1..=cap {
            let t = PairTable::from_fn(22, 22, |a, b| {
                let ((ca, xa), (cb, xb)) = (pos(a), pos(b));
                ca == cb && ((xa - xb).unsigned_abs() as usize <= d)
            });
            m.set_locality(0, d, t).unwrap();
        }
        if with_constant {
            m.set_constant_named("0", "1:0").unwrap();
        }
        m
    }

    /// Connected components of the union of all locality graphs.
    fn component_oracle(m: &FiniteStructure, sort: SortId, o: usize) -> Vec<usize> {
        let n = m.size(sort);
        let mut seen = vec![false; n];
        let mut stack = vec![o];
        seen[o] = true;
        while let Some(a) = stack.pop() {
            for d in 0..m.sig().monoid(sort).len() {
                for b in 0..n {
                    if m.related(sort, d, a, b) && !seen[b] {
                        seen[b] = true;
                        stack.push(b);
                    }
                }
            }
        }
        (0..n).filter(|&e| seen[e]).collect()
    }

    #[test]
    fn component_of_disjoint_union() {
        let m = two_copies(false);
        assert!(!check_locality_axioms(&m).a5.passed());
        let o = m.element(0, "0:2").unwrap();
        let comp = m.local_component(&[o]).unwrap();
        let expected: Vec<&str> = component_oracle(&m, 0, o).into_iter().map(|e| m.label(0, e)).collect();
        assert_eq!(comp.universe(0).iter().map(String::as_str).collect::<Vec<_>>(), expected);
        assert!(check_locality_axioms(&comp).all_pass());
        assert_eq!(comp.local_component(&[comp.element(0, "0:2").unwrap()]).unwrap(), comp);
    }

    #[test]
    fn component_of_local_structure_is_itself() {
        let z = corpus::z(4);
        assert_eq!(z.local_component(&[3]).unwrap(), z);
    }

    #[test]
    fn constant_outside_component() {
        let m = two_copies(true);
        let o = m.element(0, "0:0").unwrap();
        assert_eq!(
            m.local_component(&[o]),
            Err(StructureError::ConstantOutsideComponent { sort: "s".into(), constant: "0".into() })
        );
        // the oracle agrees: the constant is not reachable from o
        assert!(!component_oracle(&m, 0, o).contains(&m.constant(0)));
    }

    #[test]
    fn json_round_trip() {
        let z = corpus::pointed_z(3);
        let text = z.to_json();
        let back = FiniteStructure::from_json(&text, None).unwrap();
        assert_eq!(back, z);
        assert_eq!(back.to_json(), text);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn balls_are_nested(n in 1i64..6, a in 0usize..11, d1 in 0usize..10, d2 in 0usize..10) {
            let z = corpus::z(n);
            let size = z.size(0);
            let a = a % size;
            let cap = z.sig().monoid(0).len();
            let (lo, hi) = (d1.min(d2) % cap, d1.max(d2) % cap);
            let (lo, hi) = (lo.min(hi), lo.max(hi));
            let small = z.ball(lo, 0, a);
            let big = z.ball(hi, 0, a);
            prop_assert!(small.iter().all(|e| big.contains(e)));
        }

        #[test]
        fn substructures_stay_premodels(mask in 1u32..(1 << 9)) {
            let z = corpus::z(4);
            let sub: Vec<usize> = (0..9).filter(|i| mask >> i & 1 == 1).collect();
            let m = z.induced_substructure(&[sub]).unwrap();
            prop_assert!(check_locality_axioms(&m).premodel());
        }
    }
}
