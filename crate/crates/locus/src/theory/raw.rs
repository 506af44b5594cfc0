//! File form of a theory.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{TheoryError, TheorySpec};
use crate::corpus::CorpusId;
use crate::formula::{parse, Fragment};
use crate::signature::SignatureSpec;
use crate::structure::{FiniteStructure, SignatureRef};

/// Either `sentences` (with a `signature`) or a `catalogue` of structures.
/// Catalogue entries are file paths, or corpus ids written `corpus:Z(10)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawTheory {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signature: Option<SignatureRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentences: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catalogue: Option<Vec<String>>,
    pub fragment: Fragment,
    pub size_bound: usize,
}

fn resolve(base: Option<&Path>, p: &str) -> PathBuf {
    match base {
        Some(b) if Path::new(p).is_relative() => b.join(p),
        _ => PathBuf::from(p),
    }
}

impl RawTheory {
    pub fn from_json(text: &str) -> Result<Self, TheoryError> {
        serde_json::from_str(text).map_err(|e| TheoryError::Malformed(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<TheorySpec, TheoryError> {
        let text = std::fs::read_to_string(path).map_err(|e| TheoryError::Malformed(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)?.build(path.parent())
    }

    pub fn build(&self, base: Option<&Path>) -> Result<TheorySpec, TheoryError> {
        match (&self.sentences, &self.catalogue) {
            (Some(sentences), None) => {
                let sig = match &self.signature {
                    Some(SignatureRef::Inline(raw)) => crate::signature::validate_signature(raw)
                        .map_err(|e| TheoryError::Malformed(e.to_string()))?,
                    Some(SignatureRef::Path(p)) => {
                        let path = resolve(base, p);
                        let text = std::fs::read_to_string(&path)
                            .map_err(|e| TheoryError::Malformed(format!("{}: {e}", path.display())))?;
                        SignatureSpec::from_json(&text).map_err(|e| TheoryError::Malformed(e.to_string()))?
                    }
                    None => return Err(TheoryError::Malformed("sentences need a signature".into())),
                };
                let sig = Arc::new(sig);
                let fs = sentences.iter().map(|s| parse(s, &sig)).collect::<Result<Vec<_>, _>>()?;
                TheorySpec::explicit(sig, fs, self.fragment.clone(), self.size_bound)
            }
            (None, Some(entries)) => {
                let mut cat = Vec::new();
                for e in entries {
                    let m = match e.strip_prefix("corpus:") {
                        Some(id) => id
                            .parse::<CorpusId>()
                            .and_then(|id| id.build())
                            .map_err(|err| TheoryError::Malformed(err.to_string()))?,
                        None => FiniteStructure::from_file(&resolve(base, e))?,
                    };
                    cat.push(m);
                }
                TheorySpec::model_class(cat, self.fragment.clone(), self.size_bound)
            }
            _ => Err(TheoryError::Malformed("give exactly one of sentences and catalogue".into())),
        }
    }
}
