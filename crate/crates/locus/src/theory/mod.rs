//! Negative local theories, given either by negative sentences or by a
//! finite catalogue of local models.
//!
//! A catalogue `K_1 … K_m` stands for the theory of negative sentences true
//! in every member. A finite local structure is a model of that theory
//! exactly when it maps homomorphically into some member, and a positive
//! sentence is consistent with it exactly when some member satisfies it, so
//! questions about negative and positive sentences are settled by scanning
//! the catalogue. Theories given by sentences go through the canonical model
//! of each primitive positive disjunct, or through bounded enumeration of
//! small local structures when some sort has no greatest locality element.

mod bounds;
mod denials;
mod hierarchy;
mod raw;
pub(crate) mod search;

use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::eval::{all_tuples, holds, EvalError, Evaluator};
use crate::formula::{classify, normalize, Formula, FormulaError, Fragment, NormalForm, Var};
use crate::morphism::{find_homomorphisms, MorphismError};
use crate::signature::SignatureSpec;
use crate::structure::{check_locality_axioms, FiniteStructure, StructureError};

pub use bounds::{
    ball_witness, inherent_locality_probe, locality_gap, synthesize_bound, synthesize_bound_at, BallWitness,
    BoundType, ProbeOutcome,
};
pub use denials::{check_approx_complementary, find_denials, ApproxCertificate, ApproxMode, ApproxVerdict, Denial};
pub use hierarchy::{
    check_irreducibility, check_ljcp, compare_negative_theories, hierarchy_report, structure_diagram,
    HierarchyReport, IrreducibilityMode, IrreducibilityReport, LjcpFailure, LjcpReport, LjcpWitness, Side,
    TheoryComparison, UniformResult,
};
pub use raw::RawTheory;
pub use search::SEARCH_BUDGET;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TheoryError {
    #[error("catalogue is empty")]
    EmptyCatalogue,
    #[error("catalogue member {0} has a different signature")]
    SignatureMismatch(usize),
    #[error("catalogue member {index} is not local: {witness}")]
    NotLocal { index: usize, witness: String },
    #[error("not a sentence: {0}")]
    NotSentence(String),
    #[error("not a negative sentence: {0}")]
    NotNegative(String),
    #[error("formula has the wrong class: {0}")]
    ClassMismatch(String),
    #[error("operation needs a catalogue theory")]
    NotModelClass,
    #[error("no witness for {0}")]
    NoWitness(String),
    #[error("bad theory file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Formula(#[from] FormulaError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Morphism(#[from] MorphismError),
    #[error(transparent)]
    Structure(#[from] StructureError),
}

#[derive(Debug, Clone)]
pub enum TheoryMode {
    ExplicitSentences(Vec<Formula>),
    ModelClass(Vec<FiniteStructure>),
}

/// A theory together with the formula space and search bound its checks use.
#[derive(Debug, Clone)]
pub struct TheorySpec {
    sig: Arc<SignatureSpec>,
    mode: TheoryMode,
    pub fragment: Fragment,
    pub size_bound: usize,
}

impl TheorySpec {
    pub fn explicit(
        sig: Arc<SignatureSpec>,
        sentences: Vec<Formula>,
        fragment: Fragment,
        size_bound: usize,
    ) -> Result<Self, TheoryError> {
        for f in &sentences {
            f.check(&sig)?;
            if !f.is_sentence() {
                return Err(TheoryError::NotSentence(crate::formula::print(f, &sig)));
            }
            if !classify(f, &sig).negative {
                return Err(TheoryError::NotNegative(crate::formula::print(f, &sig)));
            }
        }
        Ok(TheorySpec { sig, mode: TheoryMode::ExplicitSentences(sentences), fragment, size_bound })
    }

    pub fn model_class(
        catalogue: Vec<FiniteStructure>,
        fragment: Fragment,
        size_bound: usize,
    ) -> Result<Self, TheoryError> {
        let first = catalogue.first().ok_or(TheoryError::EmptyCatalogue)?;
        let sig = first.sig_arc().clone();
        for (index, m) in catalogue.iter().enumerate() {
            if m.sig() != &*sig {
                return Err(TheoryError::SignatureMismatch(index));
            }
            if let Some(w) = check_locality_axioms(m).first_failure_among(&[1, 2, 3, 4, 5]) {
                return Err(TheoryError::NotLocal { index, witness: format!("{w:?}") });
            }
        }
        Ok(TheorySpec { sig, mode: TheoryMode::ModelClass(catalogue), fragment, size_bound })
    }

    pub fn sig(&self) -> &SignatureSpec {
        &self.sig
    }

    pub fn sig_arc(&self) -> &Arc<SignatureSpec> {
        &self.sig
    }

    pub fn mode(&self) -> &TheoryMode {
        &self.mode
    }

    pub fn catalogue(&self) -> Option<&[FiniteStructure]> {
        match &self.mode {
            TheoryMode::ModelClass(c) => Some(c),
            TheoryMode::ExplicitSentences(_) => None,
        }
    }

    pub fn with_fragment(mut self, fragment: Fragment) -> Self {
        self.fragment = fragment;
        self
    }

    pub fn with_size_bound(mut self, size_bound: usize) -> Self {
        self.size_bound = size_bound;
        self
    }

    /// Every sort carries a constant.
    pub fn is_pointed(&self) -> bool {
        self.sig.pointed_outside(&[])
    }

    /// Whether a finite structure is a local model of the theory.
    pub fn is_model(&self, m: &FiniteStructure) -> Result<bool, TheoryError> {
        if m.sig() != self.sig() || !check_locality_axioms(m).all_pass() {
            return Ok(false);
        }
        self.satisfies_theory(m)
    }

    /// Theory check for a structure already known to be local.
    fn satisfies_theory(&self, m: &FiniteStructure) -> Result<bool, TheoryError> {
        match &self.mode {
            TheoryMode::ModelClass(cat) => {
                for k in cat {
                    if !find_homomorphisms(m, k, &[], Some(1))?.is_empty() {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
            TheoryMode::ExplicitSentences(fs) => {
                for f in fs {
                    if !holds(m, f)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
        }
    }

    /// Smallest local model of the theory satisfying `pred`, up to the bound.
    fn search(
        &self,
        bound: usize,
        mut pred: impl FnMut(&FiniteStructure) -> Result<bool, TheoryError>,
    ) -> Result<(Option<FiniteStructure>, search::SearchEnd), TheoryError> {
        let mut found = None;
        let mut err = None;
        let end = search::enumerate_models(&self.sig, bound, SEARCH_BUDGET, |m| {
            let ok = pred(m).and_then(|p| if p { self.satisfies_theory(m) } else { Ok(false) });
            match ok {
                Ok(true) => {
                    found = Some(m.clone());
                    true
                }
                Ok(false) => false,
                Err(e) => {
                    err = Some(e);
                    true
                }
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        Ok((found, end))
    }

    /// A local model of an explicit theory satisfying the positive sentence.
    fn explicit_witness(&self, chi: &Formula, bound: usize) -> Result<Membership, TheoryError> {
        let disjuncts = match normalize(chi, NormalForm::PpDisjunction, &self.sig)? {
            Formula::Or(fs) => fs,
            Formula::Bot => vec![],
            other => vec![other],
        };
        let mut needs_search = false;
        for d in &disjuncts {
            match search::canonical_model(&self.sig, &[], d) {
                search::Canonical::Model(m) => {
                    if self.satisfies_theory(&m)? {
                        return Ok(Membership::Witness { model: m, source: ModelSource::Canonical });
                    }
                }
                search::Canonical::Unsat => {}
                search::Canonical::NoTop => needs_search = true,
            }
        }
        if !needs_search {
            return Ok(Membership::NotInTPlus { bound, complete: true });
        }
        let (found, _) = self.search(bound, |m| Ok(holds(m, chi)?))?;
        Ok(match found {
            Some(m) => {
                let size = m.total_size();
                Membership::Witness { model: m, source: ModelSource::Search { size } }
            }
            None => Membership::NotInTPlus { bound, complete: false },
        })
    }
}

/// Where a model returned by a theory query came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelSource {
    Catalogue(usize),
    /// Canonical model of a primitive positive disjunct.
    Canonical,
    /// Bounded enumeration; `size` is the total number of elements.
    Search { size: usize },
}

#[derive(Debug, Clone)]
pub enum Entailment {
    /// No countermodel exists up to `bound` elements per sort. `complete`
    /// means no countermodel exists at any size.
    Entailed { bound: usize, complete: bool },
    /// A local model of the theory in which the sentence fails.
    Countermodel { model: FiniteStructure, source: ModelSource },
}

impl Entailment {
    pub fn is_entailed(&self) -> bool {
        matches!(self, Entailment::Entailed { .. })
    }
}

#[derive(Debug, Clone)]
pub enum Membership {
    Witness { model: FiniteStructure, source: ModelSource },
    NotInTPlus { bound: usize, complete: bool },
}

impl Membership {
    pub fn is_member(&self) -> bool {
        matches!(self, Membership::Witness { .. })
    }
}

fn require_sentence(t: &TheorySpec, f: &Formula) -> Result<(), TheoryError> {
    f.check(t.sig())?;
    if !f.is_sentence() {
        return Err(TheoryError::NotSentence(crate::formula::print(f, t.sig())));
    }
    Ok(())
}

/// Whether every local model of `t` satisfies `phi`, searching models with
/// at most `size_bound` elements per sort. Negative sentences are decided
/// exactly.
pub fn locally_entails(t: &TheorySpec, phi: &Formula, size_bound: usize) -> Result<Entailment, TheoryError> {
    require_sentence(t, phi)?;
    if *phi == Formula::Top {
        return Ok(Entailment::Entailed { bound: size_bound, complete: true });
    }
    if let TheoryMode::ModelClass(cat) = &t.mode {
        for (i, k) in cat.iter().enumerate() {
            if !holds(k, phi)? {
                return Ok(Entailment::Countermodel { model: k.clone(), source: ModelSource::Catalogue(i) });
            }
        }
    }
    let negated = match phi {
        Formula::Not(chi) if classify(chi, t.sig()).positive => Some(&**chi),
        _ => None,
    };
    if let Some(chi) = negated {
        return match &t.mode {
            TheoryMode::ModelClass(_) => Ok(Entailment::Entailed { bound: size_bound, complete: true }),
            TheoryMode::ExplicitSentences(_) => Ok(match t.explicit_witness(chi, size_bound)? {
                Membership::Witness { model, source } => Entailment::Countermodel { model, source },
                Membership::NotInTPlus { bound, complete } => Entailment::Entailed { bound, complete },
            }),
        };
    }
    let (found, _) = t.search(size_bound, |m| Ok(!holds(m, phi)?))?;
    Ok(match found {
        Some(model) => {
            let size = model.total_size();
            Entailment::Countermodel { model, source: ModelSource::Search { size } }
        }
        None => Entailment::Entailed { bound: size_bound, complete: false },
    })
}

/// Whether the positive sentence `phi` is consistent with `t`, with a model
/// as witness.
pub fn positive_part_membership(t: &TheorySpec, phi: &Formula) -> Result<Membership, TheoryError> {
    require_sentence(t, phi)?;
    if !classify(phi, t.sig()).positive {
        return Err(TheoryError::ClassMismatch(crate::formula::print(phi, t.sig())));
    }
    match &t.mode {
        TheoryMode::ModelClass(cat) => {
            for (i, k) in cat.iter().enumerate() {
                if holds(k, phi)? {
                    return Ok(Membership::Witness { model: k.clone(), source: ModelSource::Catalogue(i) });
                }
            }
            Ok(Membership::NotInTPlus { bound: t.size_bound, complete: true })
        }
        TheoryMode::ExplicitSentences(_) => t.explicit_witness(phi, t.size_bound),
    }
}

/// Satisfying tuples of formulas over a fixed context, per catalogue member,
/// as bitsets indexed by the position in [`all_tuples`] order.
pub(crate) struct Profiles {
    pub tuples: Vec<Vec<Vec<usize>>>,
}

pub(crate) type Bits = Vec<u64>;

impl Profiles {
    pub fn new(cat: &[FiniteStructure], ctx: &[Var]) -> Self {
        Profiles { tuples: cat.iter().map(|m| all_tuples(m, ctx).collect()).collect() }
    }

    pub fn compute(&self, cat: &[FiniteStructure], ctx: &[Var], f: &Formula) -> Result<Vec<Bits>, EvalError> {
        cat.iter()
            .zip(&self.tuples)
            .map(|(m, ts)| {
                let mut ev = Evaluator::new(m, f, ctx)?;
                let mut bits = vec![0u64; ts.len().div_ceil(64)];
                for (i, t) in ts.iter().enumerate() {
                    if ev.eval(t) {
                        bits[i / 64] |= 1 << (i % 64);
                    }
                }
                Ok(bits)
            })
            .collect()
    }

    pub fn compute_all(
        &self,
        cat: &[FiniteStructure],
        ctx: &[Var],
        fs: &[Formula],
    ) -> Result<Vec<Vec<Bits>>, EvalError> {
        fs.par_iter().map(|f| self.compute(cat, ctx, f)).collect()
    }
}

pub(crate) fn bits_and(a: &[u64], b: &[u64]) -> Bits {
    a.iter().zip(b).map(|(x, y)| x & y).collect()
}

pub(crate) fn bits_any(a: &[u64]) -> bool {
    a.iter().any(|&w| w != 0)
}

pub(crate) fn bits_iter(a: &[u64]) -> impl Iterator<Item = usize> + '_ {
    a.iter().enumerate().flat_map(|(i, &w)| (0..64).filter(move |b| w >> b & 1 == 1).map(move |b| i * 64 + b))
}
