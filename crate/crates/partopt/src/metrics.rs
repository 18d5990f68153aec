//! Partition quality metrics.
//!
//! Two structural scores are computed over a component decomposition. The
//! balancing metric rewards partitions whose weight sits in large, evenly
//! sized components: it divides the component count by a sum in which each
//! multi-state size class is discounted by its distance from the largest
//! size. A partition of nothing but singletons has an empty denominator
//! and scores positive infinity, the worst possible outcome.
//!
//! The variation metric measures how widely parameters spread across
//! components: each component contributes the weights of the parameters it
//! touches, normalised by the total parameter weight times the component
//! count. It is 0 when no component carries a parameter and 1 when every
//! component carries every parameter.
//!
//! The combined score is `balancing + 10 * variation`; the factor keeps a
//! variation difference visible next to typical balancing magnitudes.
//! All metric arithmetic is 64-bit floating point.

use std::collections::BTreeSet;

use num::ToPrimitive;
use thiserror::Error;

use crate::model::{ParamId, Valuation};
use crate::scc::{ComponentSet, SizeHistogram};

/// Weight of the variation term inside the combined score.
pub const VARIATION_WEIGHT: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("empty partition")]
    EmptyPartition,
    #[error("parameter `{0}` has no weight assigned")]
    UnboundParameter(String),
}

/// The three per-candidate metric values. `balancing` and `score` may be
/// positive infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricValue {
    pub balancing: f64,
    pub variation: f64,
    pub score: f64,
}

/// Balance of a size histogram. The denominator discounts each size class
/// `i < max` by `max - i + 1`; only the largest class counts at full
/// weight. All-singleton partitions return `f64::INFINITY`.
pub fn balancing(h: &SizeHistogram) -> Result<f64, MetricsError> {
    if h.counts.is_empty() {
        return Err(MetricsError::EmptyPartition);
    }
    let max = h.max_size();
    let numerator = h.total() as f64;
    let mut denominator = 0.0;
    for (&size, &count) in &h.counts {
        if size < 2 {
            continue;
        }
        denominator += count as f64 / ((max - size) as f64 + 1.0);
    }
    if denominator == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(numerator / denominator)
    }
}

/// Spread of parameter weight across components, in `[0, 1]`.
///
/// `theta` must assign a weight to every member of `all_params`; the
/// denominator uses the full declared parameter set even if pruning removed
/// some parameters together with their transitions. Returns 0 when there
/// are no parameters or all weights are zero.
pub fn variation(
    cs: &ComponentSet,
    theta: &Valuation,
    all_params: &BTreeSet<ParamId>,
) -> Result<f64, MetricsError> {
    if cs.is_empty() {
        return Err(MetricsError::EmptyPartition);
    }
    let weight = |p: &ParamId| -> Result<f64, MetricsError> {
        theta
            .get(p)
            .and_then(|r| r.to_f64())
            .ok_or_else(|| MetricsError::UnboundParameter(p.to_string()))
    };
    let mut total_weight = 0.0;
    for p in all_params {
        total_weight += weight(p)?;
    }
    if all_params.is_empty() || total_weight == 0.0 {
        return Ok(0.0);
    }
    let mut numerator = 0.0;
    for c in &cs.components {
        for p in &c.params {
            numerator += weight(p)?;
        }
    }
    Ok(numerator / (total_weight * cs.len() as f64))
}

/// Combined score; infinity propagates.
pub fn score(balancing: f64, variation: f64) -> f64 {
    balancing + VARIATION_WEIGHT * variation
}

/// Ids of components whose parameter sets intersect `changed`, ascending.
pub fn affected_components(cs: &ComponentSet, changed: &BTreeSet<ParamId>) -> Vec<usize> {
    cs.components
        .iter()
        .filter(|c| c.params.intersection(changed).next().is_some())
        .map(|c| c.id)
        .collect()
}
