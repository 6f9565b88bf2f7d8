use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::alloc::{AllocationLaw, Provenance, SparsityLaw};
use crate::error::{invalid, Result};
use crate::scaling::{LawCoefficients, LossLawCoefficients};

pub const LAW_STORE_SCHEMA_VERSION: u32 = 1;

/// Loss-law coefficients tagged with where they came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoredLossLaw {
    pub provenance: Provenance,
    pub coefficients: LawCoefficients,
}

/// Every fitted coefficient set the tools share, in one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawStore {
    pub schema_version: u32,
    /// Takes precedence over `sparsity_law` when set.
    #[serde(default)]
    pub allocation_law: Option<AllocationLaw>,
    pub sparsity_law: SparsityLaw,
    pub loss_law: StoredLossLaw,
}

impl Default for LawStore {
    /// The published coefficients.
    fn default() -> Self {
        Self {
            schema_version: LAW_STORE_SCHEMA_VERSION,
            allocation_law: None,
            sparsity_law: SparsityLaw::PUBLISHED,
            loss_law: StoredLossLaw {
                provenance: Provenance::Published,
                coefficients: LawCoefficients::Final(LossLawCoefficients::PUBLISHED),
            },
        }
    }
}

impl LawStore {
    pub fn from_json(text: &str) -> Result<Self> {
        let store: LawStore = serde_json::from_str(text)?;
        if store.schema_version != LAW_STORE_SCHEMA_VERSION {
            return Err(invalid(format!(
                "unsupported law store schema_version {} (expected {LAW_STORE_SCHEMA_VERSION})",
                store.schema_version
            )));
        }
        Ok(store)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Falls back to the built-in store when the file does not exist yet.
    pub fn load_or_default(path: &Path) -> Result<Self> {
        match std::fs::read_to_string(path) {
            Ok(text) => Self::from_json(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(e.into()),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn allocation_for(&self, sparsity: f64) -> Result<AllocationLaw> {
        match self.allocation_law {
            Some(law) => Ok(law),
            None => self.sparsity_law.coefficients(sparsity),
        }
    }

    /// The extended law's coefficients, if that is what the store holds.
    pub fn final_loss_law(&self) -> Option<LossLawCoefficients> {
        match self.loss_law.coefficients {
            LawCoefficients::Final(c) => Some(c),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let store = LawStore::default();
        let back = LawStore::from_json(&store.to_json().unwrap()).unwrap();
        assert_eq!(store, back);
        assert_eq!(back.final_loss_law(), Some(LossLawCoefficients::PUBLISHED));
        assert_eq!(back.loss_law.provenance, Provenance::Published);
    }

    #[test]
    fn explicit_allocation_wins() {
        let mut store = LawStore::default();
        assert_eq!(store.allocation_for(0.9).unwrap().provenance, Provenance::SparsityLaw);
        store.allocation_law = Some(AllocationLaw::new(1.0, 0.0, Provenance::User).unwrap());
        assert_eq!(store.allocation_for(0.9).unwrap().alpha_r, 1.0);
    }

    #[test]
    fn rejects_other_versions() {
        let mut store = LawStore::default();
        store.schema_version = 99;
        let text = serde_json::to_string(&store).unwrap();
        assert!(LawStore::from_json(&text).is_err());
    }
}
