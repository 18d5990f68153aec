//! Candidate policies and availability masks.

use std::collections::{BTreeMap, BTreeSet};

use super::expr::Valuation;
use super::pmdp::{ActionId, Pmdp, StateId};
use super::ModelError;

/// One availability rule: in states whose labels satisfy every `key=value`
/// test of the predicate, only the listed actions stay enabled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskRule {
    pub predicate: Vec<(String, String)>,
    pub allowed: BTreeSet<ActionId>,
}

impl MaskRule {
    pub fn matches(&self, labels: &BTreeMap<String, String>) -> bool {
        self.predicate
            .iter()
            .all(|(k, v)| labels.get(k).is_some_and(|val| val == v))
    }
}

/// Conjunction of availability rules. States matching no rule are
/// unconstrained; when several rules match one state, the allowed sets
/// intersect.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AvailabilityMask {
    pub rules: Vec<MaskRule>,
}

impl AvailabilityMask {
    /// Mask with no rules; leaves every model unchanged.
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// `None` means the state is unrestricted.
    pub fn allowed_for(&self, labels: &BTreeMap<String, String>) -> Option<BTreeSet<ActionId>> {
        let mut allowed: Option<BTreeSet<ActionId>> = None;
        for rule in &self.rules {
            if !rule.matches(labels) {
                continue;
            }
            allowed = Some(match allowed {
                None => rule.allowed.clone(),
                Some(prev) => prev.intersection(&rule.allowed).cloned().collect(),
            });
        }
        allowed
    }

    /// Checks that every referenced action exists in `m`.
    pub fn validate_against(&self, m: &Pmdp) -> Result<(), ModelError> {
        for rule in &self.rules {
            for a in &rule.allowed {
                if !m.actions().contains(a) {
                    return Err(ModelError::UnknownAction(a.to_string()));
                }
            }
        }
        Ok(())
    }

    /// Allowed action set for a concrete state of `m` (`None` if untouched).
    pub fn allowed_at(&self, m: &Pmdp, s: StateId) -> Option<BTreeSet<ActionId>> {
        self.allowed_for(&m.state(s).labels)
    }
}

/// A candidate policy: a valuation of the policy parameters, optionally
/// carrying its own availability mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy {
    pub id: String,
    pub valuation: Valuation,
    pub mask: Option<AvailabilityMask>,
}

impl Policy {
    pub fn new(id: impl Into<String>, valuation: Valuation) -> Self {
        Policy {
            id: id.into(),
            valuation,
            mask: None,
        }
    }
}
