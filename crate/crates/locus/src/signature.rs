//! Local languages: sorts, relation and constant symbols, per-sort locality
//! monoids and the bound function on constant pairs.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type SortId = usize;
pub type RelId = usize;
pub type ConstId = usize;
/// Index of a locality element inside its sort's monoid.
pub type LocId = usize;

/// Names that the formula grammar reserves.
const RESERVED: &[&str] = &["true", "false", "exists", "forall", "in"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonoidLaw {
    Closure,
    Identity,
    Commutativity,
    Associativity,
    OrderReflexive,
    OrderAntisymmetric,
    OrderTransitive,
    IdentityLeast,
    Monotonicity,
}

impl fmt::Display for MonoidLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MonoidLaw::Closure => "closure",
            MonoidLaw::Identity => "identity",
            MonoidLaw::Commutativity => "commutativity",
            MonoidLaw::Associativity => "associativity",
            MonoidLaw::OrderReflexive => "order reflexivity",
            MonoidLaw::OrderAntisymmetric => "order antisymmetry",
            MonoidLaw::OrderTransitive => "order transitivity",
            MonoidLaw::IdentityLeast => "identity is least",
            MonoidLaw::Monotonicity => "monotonicity",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SignatureError {
    #[error("monoid law violated in sort {sort}: {law} (witness {witness:?})")]
    MonoidLawViolation {
        sort: String,
        law: MonoidLaw,
        witness: (String, String, String),
    },
    #[error("bound missing for constants {0} and {1}")]
    BoundIncomplete(String, String),
    #[error("conflicting bounds for constants {0} and {1}")]
    BoundConflict(String, String),
    #[error("sort mismatch at symbol {0}")]
    SortMismatch(String),
    #[error("unknown sort {0}")]
    UnknownSort(String),
    #[error("unknown constant {0}")]
    UnknownConstant(String),
    #[error("unknown locality element {element} in sort {sort}")]
    UnknownLocality { sort: String, element: String },
    #[error("symbol {0} declared twice or clashes with another symbol")]
    DuplicateSymbol(String),
    #[error("symbol name {0} is reserved or not an identifier")]
    BadName(String),
    #[error("sort {0} has no locality monoid")]
    MissingMonoid(String),
    #[error("constant {0} has no bound row to a same-sort anchor")]
    MissingAnchor(String),
    #[error("malformed signature: {0}")]
    Malformed(String),
}

/// A finite partially ordered commutative monoid of locality symbols.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalityMonoid {
    elements: Vec<String>,
    identity: LocId,
    op: Vec<Vec<LocId>>,
    order: Vec<Vec<bool>>,
}

impl LocalityMonoid {
    /// Builds a monoid from raw tables without checking the laws.
    /// The identity is taken to be the first two-sided unit, or 0.
    pub fn from_tables(elements: Vec<String>, op: Vec<Vec<LocId>>, order: Vec<Vec<bool>>) -> Self {
        let n = elements.len();
        let identity = (0..n)
            .find(|&e| {
                (0..n).all(|d| {
                    op.get(e).and_then(|r| r.get(d)) == Some(&d)
                        && op.get(d).and_then(|r| r.get(e)) == Some(&d)
                })
            })
            .unwrap_or(0);
        LocalityMonoid { elements, identity, op, order }
    }

    /// `d0..d_cap` with `d_i * d_j = d_min(i+j, cap)` and `d_i <= d_j` iff `i <= j`.
    pub fn saturating(cap: usize) -> Self {
        let n = cap + 1;
        let elements = (0..n).map(|i| format!("d{i}")).collect();
        let op = (0..n).map(|i| (0..n).map(|j| (i + j).min(cap)).collect()).collect();
        let order = (0..n).map(|i| (0..n).map(|j| i <= j).collect()).collect();
        LocalityMonoid { elements, identity: 0, op, order }
    }

    /// The cap `N` if this is exactly the saturating monoid `d0..dN`.
    pub fn saturating_cap(&self) -> Option<usize> {
        let cap = self.elements.len().checked_sub(1)?;
        (*self == Self::saturating(cap)).then_some(cap)
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[String] {
        &self.elements
    }

    pub fn name(&self, d: LocId) -> &str {
        &self.elements[d]
    }

    pub fn index_of(&self, name: &str) -> Option<LocId> {
        self.elements.iter().position(|e| e == name)
    }

    pub fn identity(&self) -> LocId {
        self.identity
    }

    pub fn op(&self, a: LocId, b: LocId) -> LocId {
        self.op[a][b]
    }

    /// `a ≼ b`.
    pub fn le(&self, a: LocId, b: LocId) -> bool {
        self.order[a][b]
    }

    pub fn op_table(&self) -> &[Vec<LocId>] {
        &self.op
    }

    pub fn order_table(&self) -> &[Vec<bool>] {
        &self.order
    }

    /// The greatest element, if the order has one.
    pub fn top(&self) -> Option<LocId> {
        (0..self.len()).find(|&t| (0..self.len()).all(|d| self.le(d, t)))
    }

    /// Elements that are minimal among those satisfying `pred`.
    pub fn minimal_where(&self, pred: impl Fn(LocId) -> bool) -> Vec<LocId> {
        let cands: Vec<LocId> = (0..self.len()).filter(|&d| pred(d)).collect();
        cands
            .iter()
            .copied()
            .filter(|&d| !cands.iter().any(|&e| e != d && self.le(e, d)))
            .collect()
    }

    /// Checks every monoid and order law; the first failure is reported with
    /// a witness triple of element names.
    pub fn check_laws(&self) -> Result<(), (MonoidLaw, (String, String, String))> {
        let n = self.len();
        let nm = |i: usize| self.elements[i].clone();
        let w = |a: usize, b: usize, c: usize| (nm(a), nm(b), nm(c));
        if n == 0 {
            return Err((MonoidLaw::Closure, (String::new(), String::new(), String::new())));
        }
        if self.op.len() != n || self.order.len() != n {
            return Err((MonoidLaw::Closure, w(0, 0, 0)));
        }
        for a in 0..n {
            if self.op[a].len() != n || self.order[a].len() != n {
                return Err((MonoidLaw::Closure, w(a, a, a)));
            }
            for b in 0..n {
                if self.op[a][b] >= n {
                    return Err((MonoidLaw::Closure, w(a, b, a)));
                }
            }
        }
        let e = self.identity;
        for d in 0..n {
            if self.op[e][d] != d || self.op[d][e] != d {
                return Err((MonoidLaw::Identity, w(e, d, self.op[e][d])));
            }
        }
        for a in 0..n {
            for b in 0..n {
                if self.op[a][b] != self.op[b][a] {
                    return Err((MonoidLaw::Commutativity, w(a, b, self.op[a][b])));
                }
            }
        }
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    if self.op[self.op[a][b]][c] != self.op[a][self.op[b][c]] {
                        return Err((MonoidLaw::Associativity, w(a, b, c)));
                    }
                }
            }
        }
        for a in 0..n {
            if !self.order[a][a] {
                return Err((MonoidLaw::OrderReflexive, w(a, a, a)));
            }
        }
        for a in 0..n {
            for b in 0..n {
                if a != b && self.order[a][b] && self.order[b][a] {
                    return Err((MonoidLaw::OrderAntisymmetric, w(a, b, a)));
                }
            }
        }
        for a in 0..n {
            for b in 0..n {
                if !self.order[a][b] {
                    continue;
                }
                for c in 0..n {
                    if self.order[b][c] && !self.order[a][c] {
                        return Err((MonoidLaw::OrderTransitive, w(a, b, c)));
                    }
                }
            }
        }
        for d in 0..n {
            if !self.order[e][d] {
                return Err((MonoidLaw::IdentityLeast, w(e, d, e)));
            }
        }
        for a in 0..n {
            for b in 0..n {
                if !self.order[a][b] {
                    continue;
                }
                for c in 0..n {
                    if !self.order[self.op[a][c]][self.op[b][c]] {
                        return Err((MonoidLaw::Monotonicity, w(a, b, c)));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationSymbol {
    pub name: String,
    pub profile: Vec<SortId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstantSymbol {
    pub name: String,
    pub sort: SortId,
}

/// How missing bound entries were filled in by [`expand_with_constants`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundPolicy {
    /// `(constant, anchor)` for every constant added by an expansion.
    pub anchors: Vec<(String, String)>,
    /// Entries computed by composing through anchors: `(c1, c2, element)`.
    pub completed: Vec<(String, String, String)>,
}

/// A validated local language.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignatureSpec {
    sorts: Vec<String>,
    relations: Vec<RelationSymbol>,
    constants: Vec<ConstantSymbol>,
    locality: Vec<LocalityMonoid>,
    bounds: BTreeMap<(ConstId, ConstId), LocId>,
    bound_policy: Option<BoundPolicy>,
}

impl SignatureSpec {
    pub fn sorts(&self) -> &[String] {
        &self.sorts
    }

    pub fn relations(&self) -> &[RelationSymbol] {
        &self.relations
    }

    pub fn constants(&self) -> &[ConstantSymbol] {
        &self.constants
    }

    pub fn monoid(&self, sort: SortId) -> &LocalityMonoid {
        &self.locality[sort]
    }

    pub fn bound_policy(&self) -> Option<&BoundPolicy> {
        self.bound_policy.as_ref()
    }

    pub fn sort_index(&self, name: &str) -> Option<SortId> {
        self.sorts.iter().position(|s| s == name)
    }

    pub fn relation_index(&self, name: &str) -> Option<RelId> {
        self.relations.iter().position(|r| r.name == name)
    }

    pub fn constant_index(&self, name: &str) -> Option<ConstId> {
        self.constants.iter().position(|c| c.name == name)
    }

    pub fn locality_index(&self, sort: SortId, name: &str) -> Option<LocId> {
        self.locality[sort].index_of(name)
    }

    /// Sorts whose monoid contains an element called `name`.
    pub fn sorts_with_locality(&self, name: &str) -> Vec<SortId> {
        (0..self.sorts.len()).filter(|&s| self.locality[s].index_of(name).is_some()).collect()
    }

    pub fn constants_of_sort(&self, sort: SortId) -> impl Iterator<Item = ConstId> + '_ {
        (0..self.constants.len()).filter(move |&c| self.constants[c].sort == sort)
    }

    /// `B_{c1,c2}`.
    pub fn bound(&self, c1: ConstId, c2: ConstId) -> LocId {
        let key = if c1 <= c2 { (c1, c2) } else { (c2, c1) };
        self.bounds[&key]
    }

    /// True iff every sort outside `occupied` carries a constant.
    pub fn pointed_outside(&self, occupied: &[SortId]) -> bool {
        (0..self.sorts.len())
            .filter(|s| !occupied.contains(s))
            .all(|s| self.constants_of_sort(s).next().is_some())
    }

    /// One-sorted signature with the given monoid and unary/binary relations.
    /// Convenience for tests and the corpus; validates like any other input.
    pub fn one_sorted(
        sort: &str,
        relations: &[(&str, usize)],
        constants: &[&str],
        monoid: LocalityMonoid,
    ) -> Result<Self, SignatureError> {
        let raw = RawSignature {
            sorts: vec![sort.to_string()],
            relations: relations
                .iter()
                .map(|(n, k)| RawRelation { name: n.to_string(), sorts: vec![sort.to_string(); *k] })
                .collect(),
            constants: constants
                .iter()
                .map(|c| RawConstant { name: c.to_string(), sort: sort.to_string() })
                .collect(),
            locality: [(sort.to_string(), RawMonoid::from_monoid(&monoid))].into_iter().collect(),
            bounds: {
                let top = monoid.top().map(|t| monoid.name(t).to_string());
                let mut rows = Vec::new();
                for (i, a) in constants.iter().enumerate() {
                    for b in &constants[i..] {
                        let d = if a == b {
                            monoid.name(monoid.identity()).to_string()
                        } else {
                            top.clone().unwrap_or_else(|| monoid.name(monoid.identity()).to_string())
                        };
                        rows.push((a.to_string(), b.to_string(), d));
                    }
                }
                rows
            },
            bound_policy: None,
        };
        validate_signature(&raw)
    }

    pub fn to_raw(&self) -> RawSignature {
        let locality = self
            .sorts
            .iter()
            .zip(&self.locality)
            .map(|(s, m)| (s.clone(), RawMonoid::from_monoid(m)))
            .collect();
        let bounds = self
            .bounds
            .iter()
            .map(|(&(a, b), &d)| {
                let sort = self.constants[a].sort;
                (
                    self.constants[a].name.clone(),
                    self.constants[b].name.clone(),
                    self.locality[sort].name(d).to_string(),
                )
            })
            .collect();
        RawSignature {
            sorts: self.sorts.clone(),
            relations: self
                .relations
                .iter()
                .map(|r| RawRelation {
                    name: r.name.clone(),
                    sorts: r.profile.iter().map(|&s| self.sorts[s].clone()).collect(),
                })
                .collect(),
            constants: self
                .constants
                .iter()
                .map(|c| RawConstant { name: c.name.clone(), sort: self.sorts[c.sort].clone() })
                .collect(),
            locality,
            bounds,
            bound_policy: self.bound_policy.clone(),
        }
    }

    /// Canonical JSON text.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_raw()).expect("signature serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SignatureError> {
        let raw: RawSignature =
            serde_json::from_str(text).map_err(|e| SignatureError::Malformed(e.to_string()))?;
        validate_signature(&raw)
    }
}

// ---------------------------------------------------------------------------
// Raw (file) form

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawRelation {
    pub name: String,
    pub sorts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawConstant {
    pub name: String,
    pub sort: String,
}

/// A monoid as written in a file: either the saturating shorthand or full tables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawMonoid {
    Saturating { saturating: usize },
    Tables { elements: Vec<String>, op: Vec<Vec<usize>>, order: Vec<Vec<bool>> },
}

impl RawMonoid {
    pub fn from_monoid(m: &LocalityMonoid) -> Self {
        match m.saturating_cap() {
            Some(cap) => RawMonoid::Saturating { saturating: cap },
            None => RawMonoid::Tables {
                elements: m.elements.clone(),
                op: m.op.clone(),
                order: m.order.clone(),
            },
        }
    }

    fn to_monoid(&self) -> LocalityMonoid {
        match self {
            RawMonoid::Saturating { saturating } => LocalityMonoid::saturating(*saturating),
            RawMonoid::Tables { elements, op, order } => {
                LocalityMonoid::from_tables(elements.clone(), op.clone(), order.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSignature {
    pub sorts: Vec<String>,
    #[serde(default)]
    pub relations: Vec<RawRelation>,
    #[serde(default)]
    pub constants: Vec<RawConstant>,
    pub locality: BTreeMap<String, RawMonoid>,
    #[serde(default)]
    pub bounds: Vec<(String, String, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound_policy: Option<BoundPolicy>,
}

fn is_identifier(name: &str) -> bool {
    !name.is_empty()
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '\'')
        && !RESERVED.contains(&name)
}

/// Validates a raw description: names, sorts, monoid laws, bound totality.
pub fn validate_signature(raw: &RawSignature) -> Result<SignatureSpec, SignatureError> {
    let mut seen: Vec<&str> = Vec::new();
    let claim = |name: &str| -> Result<(), SignatureError> {
        if !is_identifier(name) {
            return Err(SignatureError::BadName(name.to_string()));
        }
        Ok(())
    };
    for s in &raw.sorts {
        claim(s)?;
        if raw.sorts.iter().filter(|t| *t == s).count() > 1 {
            return Err(SignatureError::DuplicateSymbol(s.clone()));
        }
    }
    let sort_of = |name: &str| -> Result<SortId, SignatureError> {
        raw.sorts
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| SignatureError::UnknownSort(name.to_string()))
    };

    for key in raw.locality.keys() {
        sort_of(key)?;
    }
    let mut locality = Vec::with_capacity(raw.sorts.len());
    for s in &raw.sorts {
        let m = raw
            .locality
            .get(s)
            .ok_or_else(|| SignatureError::MissingMonoid(s.clone()))?
            .to_monoid();
        for e in &m.elements {
            claim(e)?;
        }
        for (i, e) in m.elements.iter().enumerate() {
            if m.elements[..i].contains(e) {
                return Err(SignatureError::DuplicateSymbol(e.clone()));
            }
        }
        m.check_laws().map_err(|(law, witness)| SignatureError::MonoidLawViolation {
            sort: s.clone(),
            law,
            witness,
        })?;
        locality.push(m);
    }

    let mut relations = Vec::new();
    for r in &raw.relations {
        claim(&r.name)?;
        if seen.contains(&r.name.as_str()) || locality.iter().any(|m| m.index_of(&r.name).is_some()) {
            return Err(SignatureError::DuplicateSymbol(r.name.clone()));
        }
        seen.push(&r.name);
        let profile = r
            .sorts
            .iter()
            .map(|s| sort_of(s).map_err(|_| SignatureError::SortMismatch(r.name.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        relations.push(RelationSymbol { name: r.name.clone(), profile });
    }

    let mut constants = Vec::new();
    for c in &raw.constants {
        claim(&c.name)?;
        if seen.contains(&c.name.as_str()) || locality.iter().any(|m| m.index_of(&c.name).is_some()) {
            return Err(SignatureError::DuplicateSymbol(c.name.clone()));
        }
        seen.push(&c.name);
        let sort = sort_of(&c.sort).map_err(|_| SignatureError::SortMismatch(c.name.clone()))?;
        constants.push(ConstantSymbol { name: c.name.clone(), sort });
    }
    let const_of = |name: &str| -> Result<ConstId, SignatureError> {
        constants
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| SignatureError::UnknownConstant(name.to_string()))
    };

    let mut bounds: BTreeMap<(ConstId, ConstId), LocId> = BTreeMap::new();
    for (a, b, d) in &raw.bounds {
        let (ia, ib) = (const_of(a)?, const_of(b)?);
        let sort = constants[ia].sort;
        if constants[ib].sort != sort {
            return Err(SignatureError::SortMismatch(b.clone()));
        }
        let di = locality[sort].index_of(d).ok_or_else(|| SignatureError::UnknownLocality {
            sort: raw.sorts[sort].clone(),
            element: d.clone(),
        })?;
        let key = if ia <= ib { (ia, ib) } else { (ib, ia) };
        if let Some(&prev) = bounds.get(&key) {
            if prev != di {
                return Err(SignatureError::BoundConflict(a.clone(), b.clone()));
            }
        }
        bounds.insert(key, di);
    }
    for i in 0..constants.len() {
        for j in i..constants.len() {
            if constants[i].sort == constants[j].sort && !bounds.contains_key(&(i, j)) {
                return Err(SignatureError::BoundIncomplete(
                    constants[i].name.clone(),
                    constants[j].name.clone(),
                ));
            }
        }
    }

    Ok(SignatureSpec {
        sorts: raw.sorts.clone(),
        relations,
        constants,
        locality,
        bounds,
        bound_policy: raw.bound_policy.clone(),
    })
}

/// Decides whether a variable tuple (given by its sorts) is pointed: every
/// sort not occurring in it carries a constant. With no variables this
/// decides pointedness of the language.
pub fn is_pointed(spec: &SignatureSpec, var_sorts: &[&str]) -> Result<bool, SignatureError> {
    let occupied = var_sorts
        .iter()
        .map(|s| spec.sort_index(s).ok_or_else(|| SignatureError::UnknownSort(s.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(spec.pointed_outside(&occupied))
}

/// A tuple of locality elements over a tuple sort.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ProductLocality {
    pub sorts: Vec<SortId>,
    pub components: Vec<LocId>,
}

impl ProductLocality {
    /// Builds a product from `(sort, element)` names.
    pub fn from_names(spec: &SignatureSpec, parts: &[(&str, &str)]) -> Result<Self, SignatureError> {
        let mut sorts = Vec::new();
        let mut components = Vec::new();
        for (s, d) in parts {
            let si = spec.sort_index(s).ok_or_else(|| SignatureError::UnknownSort(s.to_string()))?;
            let di = spec.locality_index(si, d).ok_or_else(|| SignatureError::UnknownLocality {
                sort: s.to_string(),
                element: d.to_string(),
            })?;
            sorts.push(si);
            components.push(di);
        }
        Ok(ProductLocality { sorts, components })
    }

    pub fn names(&self, spec: &SignatureSpec) -> Vec<String> {
        self.sorts
            .iter()
            .zip(&self.components)
            .map(|(&s, &d)| spec.monoid(s).name(d).to_string())
            .collect()
    }

    /// Pointwise order.
    pub fn le(&self, spec: &SignatureSpec, other: &ProductLocality) -> bool {
        self.sorts == other.sorts
            && self
                .sorts
                .iter()
                .enumerate()
                .all(|(i, &s)| spec.monoid(s).le(self.components[i], other.components[i]))
    }
}

/// Componentwise `∗` on products over the same tuple sort.
pub fn compose_locality(
    spec: &SignatureSpec,
    a: &ProductLocality,
    b: &ProductLocality,
) -> Result<ProductLocality, SignatureError> {
    if a.sorts != b.sorts || a.components.len() != a.sorts.len() || b.components.len() != b.sorts.len() {
        return Err(SignatureError::SortMismatch("product locality".into()));
    }
    let components = a
        .sorts
        .iter()
        .enumerate()
        .map(|(i, &s)| spec.monoid(s).op(a.components[i], b.components[i]))
        .collect();
    Ok(ProductLocality { sorts: a.sorts.clone(), components })
}

/// A constant to be added by [`expand_with_constants`], with the bound rows
/// the caller knows. The first row to a same-sort constant that already
/// exists (or, in a sort without constants, to an earlier new constant)
/// names the anchor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewConstant {
    pub name: String,
    pub sort: String,
    pub rows: Vec<(String, String)>,
}

/// Adds constants and completes the bound function: a missing entry
/// `B_{a,b}` is `B_{a,anchor(a)} ∗ B_{anchor(a),anchor(b)} ∗ B_{anchor(b),b}`,
/// where an old constant is its own anchor. The anchors and every computed
/// entry are recorded in the result's bound policy.
pub fn expand_with_constants(
    spec: &SignatureSpec,
    new_constants: &[NewConstant],
) -> Result<SignatureSpec, SignatureError> {
    let mut raw = spec.to_raw();
    let old_count = spec.constants.len();
    for nc in new_constants {
        raw.constants.push(RawConstant { name: nc.name.clone(), sort: nc.sort.clone() });
    }
    // Validate names and sorts early by building a bound-free copy.
    let names: Vec<String> = raw.constants.iter().map(|c| c.name.clone()).collect();
    let sort_names: Vec<String> = raw.constants.iter().map(|c| c.sort.clone()).collect();
    for (i, n) in names.iter().enumerate() {
        if names[..i].contains(n) {
            return Err(SignatureError::DuplicateSymbol(n.clone()));
        }
    }
    let idx = |n: &str| names.iter().position(|m| m == n);
    let sort_ix = |c: usize| -> Result<SortId, SignatureError> {
        spec.sort_index(&sort_names[c]).ok_or_else(|| SignatureError::UnknownSort(sort_names[c].clone()))
    };

    let mut table: BTreeMap<(usize, usize), LocId> = BTreeMap::new();
    for (&(a, b), &d) in &spec.bounds {
        table.insert((a, b), d);
    }
    let key = |a: usize, b: usize| if a <= b { (a, b) } else { (b, a) };

    let mut anchors: Vec<(String, String)> = Vec::new();
    let mut anchor_of: BTreeMap<usize, usize> = BTreeMap::new();
    for (k, nc) in new_constants.iter().enumerate() {
        let me = old_count + k;
        let sort = sort_ix(me)?;
        let monoid = spec.monoid(sort);
        for (other, d) in &nc.rows {
            let o = idx(other).ok_or_else(|| SignatureError::UnknownConstant(other.clone()))?;
            if sort_ix(o)? != sort {
                return Err(SignatureError::SortMismatch(other.clone()));
            }
            let di = monoid.index_of(d).ok_or_else(|| SignatureError::UnknownLocality {
                sort: spec.sorts[sort].clone(),
                element: d.clone(),
            })?;
            if let Some(&prev) = table.get(&key(me, o)) {
                if prev != di {
                    return Err(SignatureError::BoundConflict(nc.name.clone(), other.clone()));
                }
            }
            table.insert(key(me, o), di);
        }
        table.entry((me, me)).or_insert(monoid.identity());
        let has_old = (0..old_count).any(|c| spec.constants[c].sort == sort);
        let anchor = if has_old {
            nc.rows
                .iter()
                .filter_map(|(o, _)| idx(o))
                .find(|&o| o < old_count)
                .ok_or_else(|| SignatureError::MissingAnchor(nc.name.clone()))?
        } else {
            let first_new = (old_count..me + 1).find(|&c| sort_ix(c).ok() == Some(sort)).unwrap_or(me);
            if first_new == me {
                me
            } else {
                nc.rows
                    .iter()
                    .filter_map(|(o, _)| idx(o))
                    .find(|&o| o < me && o >= old_count)
                    .ok_or_else(|| SignatureError::MissingAnchor(nc.name.clone()))?
            }
        };
        anchor_of.insert(me, anchor);
        anchors.push((nc.name.clone(), names[anchor].clone()));
    }

    let anchor = |c: usize| -> usize { *anchor_of.get(&c).unwrap_or(&c) };
    let mut completed = Vec::new();
    let total = names.len();
    // Resolve anchors transitively so chains of new constants reach an old one.
    let root = |mut c: usize| -> usize {
        for _ in 0..total {
            let a = anchor(c);
            if a == c {
                break;
            }
            c = a;
        }
        c
    };
    for a in 0..total {
        for b in a..total {
            let sort = sort_ix(a)?;
            if sort_ix(b)? != sort || table.contains_key(&(a, b)) {
                continue;
            }
            let m = spec.monoid(sort);
            let get = |x: usize, y: usize, table: &BTreeMap<(usize, usize), LocId>| -> Option<LocId> {
                if x == y {
                    Some(m.identity())
                } else {
                    table.get(&key(x, y)).copied()
                }
            };
            // Walk each constant up to its root, composing as we go.
            let path = |c: usize, table: &BTreeMap<(usize, usize), LocId>| -> Option<(usize, LocId)> {
                let mut acc = m.identity();
                let mut cur = c;
                for _ in 0..total {
                    let nxt = anchor(cur);
                    if nxt == cur {
                        break;
                    }
                    acc = m.op(acc, get(cur, nxt, table)?);
                    cur = nxt;
                }
                Some((cur, acc))
            };
            let (ra, da) = path(a, &table).ok_or_else(|| {
                SignatureError::BoundIncomplete(names[a].clone(), names[root(a)].clone())
            })?;
            let (rb, db) = path(b, &table).ok_or_else(|| {
                SignatureError::BoundIncomplete(names[b].clone(), names[root(b)].clone())
            })?;
            let mid = get(ra, rb, &table)
                .ok_or_else(|| SignatureError::BoundIncomplete(names[ra].clone(), names[rb].clone()))?;
            let d = m.op(m.op(da, mid), db);
            table.insert((a, b), d);
            completed.push((names[a].clone(), names[b].clone(), m.name(d).to_string()));
        }
    }

    raw.bounds = table
        .iter()
        .map(|(&(a, b), &d)| {
            let sort = sort_ix(a).expect("checked above");
            (names[a].clone(), names[b].clone(), spec.monoid(sort).name(d).to_string())
        })
        .collect();
    let mut policy = spec.bound_policy.clone().unwrap_or(BoundPolicy { anchors: vec![], completed: vec![] });
    policy.anchors.extend(anchors);
    policy.completed.extend(completed);
    raw.bound_policy = Some(policy);
    validate_signature(&raw)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z_sig(constants: &[&str]) -> SignatureSpec {
        SignatureSpec::one_sorted("s", &[("P", 1), ("Q", 1)], constants, LocalityMonoid::saturating(20)).unwrap()
    }

    #[test]
    fn saturating_twenty_is_valid() {
        assert!(LocalityMonoid::saturating(20).check_laws().is_ok());
        assert!(z_sig(&[]).monoid(0).top() == Some(20));
    }

    #[test]
    fn identity_only_monoid_is_valid() {
        let m = LocalityMonoid::saturating(0);
        assert_eq!(m.len(), 1);
        assert!(m.check_laws().is_ok());
    }

    #[test]
    fn non_commutative_table_is_rejected() {
        let names = vec!["d0".to_string(), "d1".into(), "d2".into()];
        let op = vec![vec![0, 1, 2], vec![1, 2, 2], vec![2, 1, 2]];
        let order = vec![vec![true, true, true], vec![false, true, true], vec![false, false, true]];
        let raw = RawSignature {
            sorts: vec!["s".into()],
            relations: vec![],
            constants: vec![],
            locality: [("s".to_string(), RawMonoid::Tables { elements: names, op, order })].into(),
            bounds: vec![],
            bound_policy: None,
        };
        match validate_signature(&raw) {
            Err(SignatureError::MonoidLawViolation { law, witness, .. }) => {
                assert_eq!(law, MonoidLaw::Commutativity);
                assert_eq!((witness.0.as_str(), witness.1.as_str()), ("d1", "d2"));
            }
            other => panic!("expected a commutativity violation, got {other:?}"),
        }
    }

    #[test]
    fn missing_bound_is_reported() {
        let mut raw = z_sig(&["a", "b"]).to_raw();
        raw.bounds.retain(|(x, y, _)| !(x == "a" && y == "b"));
        assert_eq!(
            validate_signature(&raw),
            Err(SignatureError::BoundIncomplete("a".into(), "b".into()))
        );
    }

    #[test]
    fn pointedness() {
        assert!(is_pointed(&z_sig(&["0"]), &[]).unwrap());
        assert!(!is_pointed(&z_sig(&[]), &[]).unwrap());
        assert!(is_pointed(&z_sig(&[]), &["s"]).unwrap());
        assert!(matches!(is_pointed(&z_sig(&[]), &["t"]), Err(SignatureError::UnknownSort(_))));
    }

    #[test]
    fn product_composition() {
        let raw = RawSignature {
            sorts: vec!["s".into(), "t".into()],
            relations: vec![],
            constants: vec![],
            locality: [
                ("s".to_string(), RawMonoid::Saturating { saturating: 20 }),
                ("t".to_string(), RawMonoid::Saturating { saturating: 20 }),
            ]
            .into(),
            bounds: vec![],
            bound_policy: None,
        };
        let sig = validate_signature(&raw).unwrap();
        let a = ProductLocality::from_names(&sig, &[("s", "d1"), ("t", "d2")]).unwrap();
        let b = ProductLocality::from_names(&sig, &[("s", "d3"), ("t", "d0")]).unwrap();
        assert_eq!(compose_locality(&sig, &a, &b).unwrap().names(&sig), vec!["d4", "d2"]);
        let c = ProductLocality::from_names(&sig, &[("s", "d15")]).unwrap();
        let d = ProductLocality::from_names(&sig, &[("s", "d10")]).unwrap();
        assert_eq!(compose_locality(&sig, &c, &d).unwrap().names(&sig), vec!["d20"]);
        assert!(compose_locality(&sig, &a, &c).is_err());
    }

    #[test]
    fn expansion_through_anchor() {
        let sig = z_sig(&["0"]);
        let out = expand_with_constants(
            &sig,
            &[
                NewConstant { name: "a".into(), sort: "s".into(), rows: vec![("0".into(), "d3".into())] },
                NewConstant { name: "b".into(), sort: "s".into(), rows: vec![("0".into(), "d5".into())] },
            ],
        )
        .unwrap();
        let ix = |n: &str| out.constant_index(n).unwrap();
        let m = out.monoid(0);
        assert_eq!(m.name(out.bound(ix("a"), ix("a"))), "d0");
        assert_eq!(m.name(out.bound(ix("a"), ix("b"))), "d8");
        assert_eq!(m.name(out.bound(ix("b"), ix("0"))), "d5");
        let policy = out.bound_policy().unwrap();
        assert!(policy.completed.contains(&("a".into(), "b".into(), "d8".into())));
        assert_eq!(policy.anchors[0], ("a".into(), "0".into()));
    }

    #[test]
    fn expansion_into_empty_sort() {
        let sig = z_sig(&[]);
        let out = expand_with_constants(
            &sig,
            &[NewConstant { name: "a".into(), sort: "s".into(), rows: vec![("a".into(), "d0".into())] }],
        )
        .unwrap();
        assert_eq!(out.constants().len(), 1);
    }

    #[test]
    fn expansion_without_anchor_fails() {
        let sig = z_sig(&["0"]);
        let err = expand_with_constants(
            &sig,
            &[NewConstant { name: "a".into(), sort: "s".into(), rows: vec![] }],
        );
        assert_eq!(err, Err(SignatureError::MissingAnchor("a".into())));
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let sig = z_sig(&["0", "c"]);
        let text = sig.to_json();
        let back = SignatureSpec::from_json(&text).unwrap();
        assert_eq!(back, sig);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn relation_named_like_locality_is_rejected() {
        let err = SignatureSpec::one_sorted("s", &[("d1", 2)], &[], LocalityMonoid::saturating(2));
        assert_eq!(err, Err(SignatureError::DuplicateSymbol("d1".into())));
    }
}
