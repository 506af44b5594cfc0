use serde::Serialize;

use super::{Formula, Rel, Term, Var};
use crate::signature::SignatureSpec;

/// Syntactic class flags.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct FormulaClass {
    pub quantifier_free: bool,
    pub positive: bool,
    pub primitive_positive: bool,
    pub negative: bool,
    pub local: bool,
    pub local_positive: bool,
    pub local_primitive_positive: bool,
    pub pi1_local: bool,
}

pub fn classify(f: &Formula, sig: &SignatureSpec) -> FormulaClass {
    let positive = is_positive(f, false);
    let primitive_positive = is_positive(f, true);
    let local = is_local(f, sig);
    FormulaClass {
        quantifier_free: f.depth() == 0,
        positive,
        primitive_positive,
        negative: matches!(f, Formula::Not(g) if is_positive(g, false)),
        local,
        local_positive: local && positive,
        local_primitive_positive: local && primitive_positive,
        pi1_local: is_pi1_local(f, sig),
    }
}

fn is_positive(f: &Formula, primitive: bool) -> bool {
    match f {
        Formula::Top | Formula::Bot | Formula::Equal(..) | Formula::Atom { .. } => true,
        Formula::And(fs) => fs.iter().all(|g| is_positive(g, primitive)),
        Formula::Or(fs) => !primitive && fs.iter().all(|g| is_positive(g, primitive)),
        Formula::Not(_) | Formula::Forall(..) => false,
        Formula::Exists(_, g) => is_positive(g, primitive),
        Formula::LocalExists { body, .. } => is_positive(body, primitive),
    }
}

/// `d(v, t)` or `d(t, v)` with `t` a term other than `v`.
fn bounds_var(f: &Formula, v: &Var) -> bool {
    match f {
        Formula::Atom { rel: Rel::Loc(..), args } => {
            let is_v = |t: &Term| t.as_var() == Some(v);
            (is_v(&args[0]) && !is_v(&args[1])) || (is_v(&args[1]) && !is_v(&args[0]))
        }
        _ => false,
    }
}

/// The conjuncts of an unrestricted `∃v` body if it has the shape
/// `d(v, t) ∧ rest`, i.e. a desugared local quantifier.
fn desugared_rest<'a>(v: &Var, body: &'a Formula) -> Option<Vec<&'a Formula>> {
    match body {
        f if bounds_var(f, v) => Some(vec![]),
        Formula::And(fs) => {
            let i = fs.iter().position(|g| bounds_var(g, v))?;
            Some(fs.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, g)| g).collect())
        }
        _ => None,
    }
}

pub(crate) fn is_local(f: &Formula, sig: &SignatureSpec) -> bool {
    match f {
        Formula::Top | Formula::Bot | Formula::Equal(..) | Formula::Atom { .. } => true,
        Formula::And(fs) | Formula::Or(fs) => fs.iter().all(|g| is_local(g, sig)),
        Formula::Not(g) => is_local(g, sig),
        Formula::LocalExists { body, .. } => is_local(body, sig),
        Formula::Exists(v, body) => match desugared_rest(v, body) {
            Some(rest) => rest.iter().all(|g| is_local(g, sig)),
            None => false,
        },
        // ∀v (¬d(v,t) ∨ rest)
        Formula::Forall(v, body) => match &**body {
            Formula::Or(fs) => {
                let guard = fs.iter().position(|g| matches!(g, Formula::Not(a) if bounds_var(a, v)));
                match guard {
                    Some(i) => fs.iter().enumerate().all(|(j, g)| j == i || is_local(g, sig)),
                    None => false,
                }
            }
            Formula::Not(a) => bounds_var(a, v),
            _ => false,
        },
    }
}

fn is_pi1_local(f: &Formula, sig: &SignatureSpec) -> bool {
    let mut cur = f.clone();
    loop {
        if is_local(&cur, sig) {
            return true;
        }
        cur = match cur {
            Formula::Forall(_, g) => *g,
            // ¬∃v g is ∀v ¬g
            Formula::Not(g) => match *g {
                Formula::Exists(_, h) => Formula::Not(h),
                Formula::Not(h) => *h,
                _ => return false,
            },
            _ => return false,
        };
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;
    use crate::signature::LocalityMonoid;

    fn sig() -> SignatureSpec {
        SignatureSpec::one_sorted("s", &[("P1", 1), ("P2", 1), ("Q0", 1)], &["c"], LocalityMonoid::saturating(3))
            .unwrap()
    }

    fn class(text: &str) -> FormulaClass {
        let s = sig();
        classify(&parse(text, &s).unwrap(), &s)
    }

    #[test]
    fn negative_sentence_is_pi1_local() {
        let c = class("!exists x. P1(x) & Q0(x)");
        // hand evaluation: Not of a pp body, unrestricted quantifier
        assert!(c.negative && c.pi1_local);
        assert!(!c.positive && !c.local && !c.quantifier_free);
    }

    #[test]
    fn local_pp() {
        let c = class("exists y in d1(x). P2(y)");
        assert!(c.local_primitive_positive && c.primitive_positive && c.positive && c.local);
        assert!(!c.negative);
    }

    #[test]
    fn plain_exists_is_not_local() {
        let c = class("exists y. P2(y)");
        assert!(c.primitive_positive && !c.local && !c.local_positive);
        assert!(!c.pi1_local);
    }

    #[test]
    fn desugared_local_quantifier_is_local() {
        assert!(class("exists y. d1(y, x) & P2(y)").local_primitive_positive);
        assert!(class("forall y. !d1(y, c) | P2(y)").local);
        assert!(!class("exists y. d1(y, y) & P2(y)").local);
    }

    #[test]
    fn disjunction_is_positive_not_pp() {
        let c = class("P1(x) | Q0(x)");
        assert!(c.positive && !c.primitive_positive && c.local_positive && c.quantifier_free);
        assert!(class("false").primitive_positive);
    }
}
