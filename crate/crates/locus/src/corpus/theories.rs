//! Catalogue theories built from the example structures.

use std::fmt;
use std::str::FromStr;

use super::{CorpusError, CorpusId};
use crate::formula::{ClassFilter, Fragment};
use crate::theory::{RawTheory, TheorySpec};

/// Search bound used by the example theories.
pub const EXAMPLE_SIZE_BOUND: usize = 4;

/// A theory given by a catalogue of corpus structures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TheoryId {
    /// `{Z(n), I(n), J(n)}`.
    ZFamily { n: usize },
    PointedZ { n: usize },
    /// The interval `[−n, n]`.
    C { n: usize },
    /// The point at `+∞` when `positive`, else the point at `−∞`.
    Singleton { n: usize, positive: bool },
    Hamming { n: usize },
    Tree { n: usize },
    Zdist { n: usize },
}

impl TheoryId {
    pub fn members(&self) -> Vec<CorpusId> {
        match *self {
            TheoryId::ZFamily { n } => vec![CorpusId::Z { n }, CorpusId::I { n }, CorpusId::J { n }],
            TheoryId::PointedZ { n } => vec![CorpusId::PointedZ { n }],
            TheoryId::C { n } => vec![CorpusId::C { n, scale: n }],
            TheoryId::Singleton { n, positive: true } => vec![CorpusId::I { n }],
            TheoryId::Singleton { n, positive: false } => vec![CorpusId::J { n }],
            TheoryId::Hamming { n } => vec![CorpusId::Hamming { n }],
            TheoryId::Tree { n } => vec![CorpusId::Tree { n }],
            TheoryId::Zdist { n } => vec![CorpusId::Zdist { n }],
        }
    }

    pub fn fragment(&self) -> Fragment {
        match self {
            TheoryId::ZFamily { .. } | TheoryId::PointedZ { .. } => Fragment::new(0, 1, ClassFilter::Positive),
            TheoryId::C { .. } | TheoryId::Singleton { .. } => Fragment::new(1, 1, ClassFilter::Positive),
            TheoryId::Hamming { .. } | TheoryId::Tree { .. } | TheoryId::Zdist { .. } => {
                Fragment::new(0, 1, ClassFilter::Pp)
            }
        }
    }

    pub fn build(&self) -> Result<TheorySpec, CorpusError> {
        let cat = self.members().iter().map(|id| id.build()).collect::<Result<Vec<_>, _>>()?;
        TheorySpec::model_class(cat, self.fragment(), EXAMPLE_SIZE_BOUND)
            .map_err(|e| CorpusError::ParameterOutOfRange(e.to_string()))
    }

    /// File form, with catalogue entries written as corpus ids.
    pub fn to_raw(&self) -> RawTheory {
        RawTheory {
            signature: None,
            sentences: None,
            catalogue: Some(self.members().iter().map(|id| format!("corpus:{id}")).collect()),
            fragment: self.fragment(),
            size_bound: EXAMPLE_SIZE_BOUND,
        }
    }

    pub fn catalogue() -> Vec<TheoryId> {
        vec![
            TheoryId::ZFamily { n: 10 },
            TheoryId::PointedZ { n: 6 },
            TheoryId::C { n: 3 },
            TheoryId::Singleton { n: 10, positive: true },
            TheoryId::Singleton { n: 10, positive: false },
            TheoryId::Hamming { n: 3 },
            TheoryId::Tree { n: 5 },
            TheoryId::Zdist { n: 8 },
        ]
    }
}

impl fmt::Display for TheoryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TheoryId::ZFamily { n } => write!(f, "z_family({n})"),
            TheoryId::PointedZ { n } => write!(f, "pointed_z_theory({n})"),
            TheoryId::C { n } => write!(f, "c_theory({n})"),
            TheoryId::Singleton { n, positive: true } => write!(f, "i_theory({n})"),
            TheoryId::Singleton { n, positive: false } => write!(f, "j_theory({n})"),
            TheoryId::Hamming { n } => write!(f, "hamming_theory({n})"),
            TheoryId::Tree { n } => write!(f, "tree_theory({n})"),
            TheoryId::Zdist { n } => write!(f, "zdist_theory({n})"),
        }
    }
}

impl FromStr for TheoryId {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, CorpusError> {
        let bad = || CorpusError::UnknownId(s.to_string());
        let t = s.trim();
        let open = t.find('(').ok_or_else(bad)?;
        let n: usize = t[open + 1..].strip_suffix(')').ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
        Ok(match t[..open].to_ascii_lowercase().as_str() {
            "z_family" => TheoryId::ZFamily { n },
            "pointed_z_theory" => TheoryId::PointedZ { n },
            "c_theory" => TheoryId::C { n },
            "i_theory" => TheoryId::Singleton { n, positive: true },
            "j_theory" => TheoryId::Singleton { n, positive: false },
            "hamming_theory" => TheoryId::Hamming { n },
            "tree_theory" => TheoryId::Tree { n },
            "zdist_theory" => TheoryId::Zdist { n },
            _ => return Err(bad()),
        })
    }
}

fn built(id: TheoryId) -> TheorySpec {
    id.build().expect("corpus theory parameters are in range")
}

pub fn z_family_theory(n: usize) -> TheorySpec {
    built(TheoryId::ZFamily { n })
}

pub fn pointed_z_theory(n: usize) -> TheorySpec {
    built(TheoryId::PointedZ { n })
}

pub fn c_theory(n: usize) -> TheorySpec {
    built(TheoryId::C { n })
}

pub fn singleton_theory(n: usize, positive: bool) -> TheorySpec {
    built(TheoryId::Singleton { n, positive })
}

pub fn hamming_theory(n: usize) -> TheorySpec {
    built(TheoryId::Hamming { n })
}

pub fn tree_theory(n: usize) -> TheorySpec {
    built(TheoryId::Tree { n })
}

pub fn zdist_theory(n: usize) -> TheorySpec {
    built(TheoryId::Zdist { n })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theory_ids_round_trip() {
        for id in TheoryId::catalogue() {
            assert_eq!(id.to_string().parse::<TheoryId>().unwrap(), id);
            let raw = id.to_raw();
            let t = raw.build(None).unwrap();
            assert_eq!(t.catalogue().unwrap().len(), id.members().len());
        }
        assert!("z_family(0)".parse::<TheoryId>().unwrap().build().is_err());
        assert!("z(3)".parse::<TheoryId>().is_err());
    }
}
