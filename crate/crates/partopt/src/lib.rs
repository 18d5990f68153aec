//! Partitioning-aware policy selection for parametric MDPs.
//!
//! The library models systems whose transition probabilities are linear
//! expressions over named parameters. A candidate policy is a valuation of
//! the policy parameters, optionally paired with an availability mask that
//! forbids actions in states matching label predicates. Applying mask and
//! valuation prunes the model; the strongly connected components of the
//! result are scored by two structural metrics, and a search ranks the
//! candidates of a situation category by that score.
//!
//! The pipeline lives in five modules: [`model`] (types and validation),
//! [`format`] (text grammar), [`prune`] (the two elimination rounds),
//! [`scc`] (decomposition) and [`metrics`] (scoring). [`search`] drives the
//! pipeline over candidate sets and renders reports, and [`casegen`]
//! generates the energy-harvesting sensor case study used as the default
//! workload.

pub mod casegen;
pub mod format;
pub mod metrics;
pub mod model;
pub mod prune;
pub mod scc;
pub mod search;

pub use model::{
    ActionId, AvailabilityMask, Branch, LinExpr, MaskRule, ModelError, ParamGroup, ParamId, Pmdp,
    PmdpBuilder, Policy, Rational, StateId, Valuation, Violation,
};
