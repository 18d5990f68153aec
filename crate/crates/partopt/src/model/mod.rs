//! Core model types: parameters, linear expressions, valuations, the
//! parametric MDP itself and candidate policies.
//!
//! Probabilities are kept as exact rationals everywhere the structure of a
//! model is decided (validation, substitution, pruning). Floating point only
//! enters later, in the metric layer.

mod expr;
mod pmdp;
mod policy;

pub(crate) use expr::rational_str;
pub use expr::{LinExpr, ParamGroup, ParamId, Rational, Valuation};
pub(crate) use pmdp::reduce_group_sums;
pub use pmdp::{
    validate_model, ActionId, Branch, Pmdp, PmdpBuilder, StateId, StateInfo, Violation,
    ViolationKind, STUTTER_ACTION,
};
pub use policy::{AvailabilityMask, MaskRule, Policy};

use thiserror::Error;

/// Errors raised while building or evaluating model structure.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("invalid identifier `{0}`")]
    InvalidIdentifier(String),
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("duplicate state `{0}`")]
    DuplicateState(String),
    #[error("parameter `{0}` declared twice")]
    DuplicateParam(String),
    #[error("parameter `{0}` belongs to more than one group")]
    GroupOverlap(String),
    #[error("group needs at least two members")]
    GroupTooSmall,
    #[error("value {0} outside [0, 1]")]
    ValueOutOfRange(String),
    #[error("branch expression is identically zero")]
    ZeroBranch,
    #[error("duplicate branch target `{0}` in one distribution")]
    DuplicateTarget(String),
    #[error("duplicate distribution for `{0}`")]
    DuplicateEntry(String),
    #[error("model has no states")]
    NoStates,
    #[error("no initial state set")]
    NoInitial,
    #[error("parameter `{0}` is unbound")]
    UnboundParameter(String),
    #[error("group {{{group}}} sums to {sum}, expected 1")]
    GroupSum { group: String, sum: String },
}
