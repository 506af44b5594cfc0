//! Normal forms of positive and local positive formulas.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::classify::classify;
use super::{fresh_name, Formula, FormulaError, Rel, Term, Var};
use crate::signature::{LocId, SignatureSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalForm {
    /// Positive formula as a disjunction of primitive positive ones.
    PpDisjunction,
    /// Primitive positive formula as `∃x θ` with `θ` quantifier free.
    PrenexPp,
    /// Local positive formula as `∃x1∈d1(t1) … θ` with `θ` quantifier free.
    /// Equivalence uses that every ball contains its centre.
    LocalPrenex,
    /// Local quantifiers rewritten as `∃x (d(x,t) ∧ φ)`.
    Desugar,
}

pub fn normalize(f: &Formula, target: NormalForm, sig: &SignatureSpec) -> Result<Formula, FormulaError> {
    let class = classify(f, sig);
    match target {
        NormalForm::Desugar => Ok(desugar(f)),
        NormalForm::PpDisjunction => {
            if !class.positive {
                return Err(FormulaError::ClassMismatch("pp-disjunction".into()));
            }
            if class.primitive_positive {
                return Ok(f.clone());
            }
            if let Formula::Or(fs) = f {
                if fs.iter().all(|g| classify(g, sig).primitive_positive) {
                    return Ok(f.clone());
                }
            }
            Ok(Formula::or(dnf(f)))
        }
        NormalForm::PrenexPp => {
            if !class.primitive_positive {
                return Err(FormulaError::ClassMismatch("prenex pp".into()));
            }
            if is_exists_prefix(f) {
                return Ok(f.clone());
            }
            let g = desugar(f);
            let mut taken = g.variable_names();
            let (vars, matrix) = prenex_pp(&g, &mut taken);
            Ok(Formula::exists_many(vars, Formula::and(flatten_and(matrix))))
        }
        NormalForm::LocalPrenex => {
            if !class.local_positive {
                return Err(FormulaError::ClassMismatch("local prenex".into()));
            }
            if is_local_prefix(f) {
                return Ok(f.clone());
            }
            let g = resugar(f);
            let mut taken = g.variable_names();
            let (prefix, matrix) = prenex_local(&g, &mut taken);
            Ok(prefix.into_iter().rev().fold(matrix, |acc, (v, d, t)| Formula::exists_in(v, d, t, acc)))
        }
    }
}

fn flatten_and(f: Formula) -> Vec<Formula> {
    match f {
        Formula::And(fs) => fs.into_iter().flat_map(flatten_and).collect(),
        Formula::Top => vec![],
        other => vec![other],
    }
}

fn is_exists_prefix(f: &Formula) -> bool {
    match f {
        Formula::Exists(_, g) => is_exists_prefix(g),
        g => g.depth() == 0,
    }
}

fn is_local_prefix(f: &Formula) -> bool {
    match f {
        Formula::LocalExists { body, .. } => is_local_prefix(body),
        g => g.depth() == 0,
    }
}

pub(crate) fn desugar(f: &Formula) -> Formula {
    match f {
        Formula::Top | Formula::Bot | Formula::Equal(..) | Formula::Atom { .. } => f.clone(),
        Formula::And(fs) => Formula::And(fs.iter().map(desugar).collect()),
        Formula::Or(fs) => Formula::Or(fs.iter().map(desugar).collect()),
        Formula::Not(g) => Formula::not(desugar(g)),
        Formula::Exists(v, g) => Formula::exists(v.clone(), desugar(g)),
        Formula::Forall(v, g) => Formula::forall(v.clone(), desugar(g)),
        Formula::LocalExists { var, d, anchor, body } => {
            let guard = Formula::loc(var.sort, *d, Term::Var(var.clone()), anchor.clone());
            let mut parts = vec![guard];
            match desugar(body) {
                Formula::And(fs) => parts.extend(fs),
                Formula::Top => {}
                b => parts.push(b),
            }
            Formula::exists(var.clone(), Formula::and(parts))
        }
    }
}

/// Turns desugared `∃v (d(v,t) ∧ …)` back into local quantifiers.
fn resugar(f: &Formula) -> Formula {
    match f {
        Formula::Top | Formula::Bot | Formula::Equal(..) | Formula::Atom { .. } => f.clone(),
        Formula::And(fs) => Formula::And(fs.iter().map(resugar).collect()),
        Formula::Or(fs) => Formula::Or(fs.iter().map(resugar).collect()),
        Formula::Not(g) => Formula::not(resugar(g)),
        Formula::Forall(v, g) => Formula::forall(v.clone(), resugar(g)),
        Formula::LocalExists { var, d, anchor, body } => Formula::exists_in(var.clone(), *d, anchor.clone(), resugar(body)),
        Formula::Exists(v, g) => {
            let parts: Vec<Formula> = match &**g {
                Formula::And(fs) => fs.clone(),
                other => vec![other.clone()],
            };
            let guard = parts.iter().position(|p| guard_of(p, v).is_some());
            match guard {
                Some(i) => {
                    let (d, t) = guard_of(&parts[i], v).unwrap();
                    let rest: Vec<Formula> =
                        parts.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, p)| resugar(p)).collect();
                    Formula::exists_in(v.clone(), d, t, Formula::and(rest))
                }
                None => Formula::exists(v.clone(), resugar(g)),
            }
        }
    }
}

fn guard_of(f: &Formula, v: &Var) -> Option<(LocId, Term)> {
    if let Formula::Atom { rel: Rel::Loc(_, d), args } = f {
        let is_v = |t: &Term| t.as_var() == Some(v);
        if is_v(&args[0]) && !is_v(&args[1]) {
            return Some((*d, args[1].clone()));
        }
        if is_v(&args[1]) && !is_v(&args[0]) {
            return Some((*d, args[0].clone()));
        }
    }
    None
}

fn dnf(f: &Formula) -> Vec<Formula> {
    match f {
        Formula::Top | Formula::Bot | Formula::Equal(..) | Formula::Atom { .. } => vec![f.clone()],
        Formula::Or(fs) => fs.iter().flat_map(dnf).collect(),
        Formula::And(fs) => {
            let mut acc: Vec<Vec<Formula>> = vec![vec![]];
            for g in fs {
                let ds = dnf(g);
                let mut next = Vec::with_capacity(acc.len() * ds.len());
                for prefix in &acc {
                    for d in &ds {
                        let mut p = prefix.clone();
                        match d {
                            Formula::And(inner) => p.extend(inner.iter().cloned()),
                            other => p.push(other.clone()),
                        }
                        next.push(p);
                    }
                }
                acc = next;
            }
            acc.into_iter().map(Formula::and).collect()
        }
        Formula::Exists(v, g) => dnf(g).into_iter().map(|d| Formula::exists(v.clone(), d)).collect(),
        Formula::LocalExists { var, d, anchor, body } => dnf(body)
            .into_iter()
            .map(|b| Formula::exists_in(var.clone(), *d, anchor.clone(), b))
            .collect(),
        Formula::Not(_) | Formula::Forall(..) => vec![f.clone()],
    }
}

fn prenex_pp(f: &Formula, taken: &mut BTreeSet<String>) -> (Vec<Var>, Formula) {
    match f {
        Formula::Exists(v, g) => {
            let (mut vars, m) = prenex_pp(g, taken);
            vars.insert(0, v.clone());
            (vars, m)
        }
        Formula::And(fs) => {
            let mut vars: Vec<Var> = Vec::new();
            let mut matrices = Vec::new();
            // Free names of the whole conjunction must not be captured.
            let free: BTreeSet<String> = f.free_variables().into_iter().map(|v| v.name).collect();
            let mut used: BTreeSet<String> = free.clone();
            for g in fs {
                let (vs, mut m) = prenex_pp(g, taken);
                for v in vs {
                    let v2 = if used.contains(&v.name) {
                        let n = fresh_name(&v.name, taken);
                        taken.insert(n.clone());
                        let nv = Var::new(n, v.sort);
                        m = m.substitute(&v, &Term::Var(nv.clone()));
                        nv
                    } else {
                        v
                    };
                    used.insert(v2.name.clone());
                    vars.push(v2);
                }
                matrices.extend(flatten_and(m));
            }
            (vars, Formula::and(matrices))
        }
        other => (vec![], other.clone()),
    }
}

type Prefix = Vec<(Var, LocId, Term)>;

fn prenex_local(f: &Formula, taken: &mut BTreeSet<String>) -> (Prefix, Formula) {
    match f {
        Formula::LocalExists { var, d, anchor, body } => {
            let (mut prefix, m) = prenex_local(body, taken);
            prefix.insert(0, (var.clone(), *d, anchor.clone()));
            (prefix, m)
        }
        Formula::And(fs) | Formula::Or(fs) => {
            let free: BTreeSet<String> = f.free_variables().into_iter().map(|v| v.name).collect();
            let mut used = free;
            let mut prefix: Prefix = Vec::new();
            let mut matrices = Vec::new();
            for g in fs {
                let (p, mut m) = prenex_local(g, taken);
                let mut p = p;
                for i in 0..p.len() {
                    let v = p[i].0.clone();
                    if used.contains(&v.name) {
                        let n = fresh_name(&v.name, taken);
                        taken.insert(n.clone());
                        let nv = Var::new(n, v.sort);
                        let nt = Term::Var(nv.clone());
                        for later in p.iter_mut().skip(i + 1) {
                            if later.2.as_var() == Some(&v) {
                                later.2 = nt.clone();
                            }
                        }
                        m = m.substitute(&v, &nt);
                        p[i].0 = nv;
                    }
                    used.insert(p[i].0.name.clone());
                }
                prefix.extend(p);
                matrices.push(m);
            }
            let matrix = if matches!(f, Formula::And(_)) {
                Formula::and(matrices.into_iter().flat_map(flatten_and).collect())
            } else {
                Formula::or(matrices)
            };
            (prefix, matrix)
        }
        other => (vec![], other.clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::super::{parse, print};
    use super::*;
    use crate::signature::LocalityMonoid;

    fn sig() -> SignatureSpec {
        SignatureSpec::one_sorted("s", &[("P", 1), ("Q", 1), ("R", 2)], &["c"], LocalityMonoid::saturating(3)).unwrap()
    }

    fn norm(text: &str, t: NormalForm) -> String {
        let s = sig();
        print(&normalize(&parse(text, &s).unwrap(), t, &s).unwrap(), &s)
    }

    #[test]
    fn distributes_local_quantifier_over_disjunction() {
        assert_eq!(
            norm("exists y in d1(c). P(y) | Q(y)", NormalForm::PpDisjunction),
            "(exists y in d1(c). P(y)) | (exists y in d1(c). Q(y))"
        );
    }

    #[test]
    fn desugars_local_quantifier() {
        assert_eq!(norm("exists y in d1(x). P(y)", NormalForm::Desugar), "exists y. d1(y, x) & P(y)");
    }

    #[test]
    fn already_normal_is_unchanged() {
        for t in [NormalForm::PpDisjunction, NormalForm::PrenexPp, NormalForm::LocalPrenex, NormalForm::Desugar] {
            assert_eq!(norm("P(x) & R(x, c)", t), "P(x) & R(x, c)");
        }
    }

    #[test]
    fn prenex_renames_apart() {
        assert_eq!(
            norm("(exists y. R(x, y)) & (exists y. P(y))", NormalForm::PrenexPp),
            "exists y. exists y0. R(x, y) & P(y0)"
        );
        assert_eq!(
            norm("(exists y in d1(x). P(y)) | (exists y in d2(c). Q(y) & R(y, x))", NormalForm::LocalPrenex),
            "exists y in d1(x). exists y0 in d2(c). P(y) | (Q(y0) & R(y0, x))"
        );
    }

    #[test]
    fn class_mismatch() {
        let s = sig();
        let f = parse("!P(x)", &s).unwrap();
        assert!(matches!(normalize(&f, NormalForm::PpDisjunction, &s), Err(FormulaError::ClassMismatch(_))));
        let g = parse("exists y. P(y)", &s).unwrap();
        assert!(matches!(normalize(&g, NormalForm::LocalPrenex, &s), Err(FormulaError::ClassMismatch(_))));
    }
}
