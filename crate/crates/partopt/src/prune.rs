//! The two pruning rounds.
//!
//! Round one removes `(state, action)` entries whose action an availability
//! mask forbids. Round two substitutes a policy valuation into every branch
//! expression and drops branches whose probability became exactly zero.
//! Both rounds finish by removing states no longer reachable from the
//! initial state. A surviving state stripped of its last action receives a
//! constant self-loop on the reserved `stutter` action so the model stays
//! total; the initial state is never rescued that way, losing its last
//! action there is an error.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use num::{One, Signed, Zero};
use thiserror::Error;

use crate::model::reduce_group_sums;
use crate::model::{
    ActionId, AvailabilityMask, Branch, LinExpr, ParamGroup, ParamId, Pmdp, Policy, Rational,
    StateId,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PruneError {
    #[error("every action of the initial state was eliminated")]
    InitialStateEliminated,
    #[error("state `{state}`, action `{action}`: {detail}")]
    InvalidDistribution {
        state: String,
        action: String,
        detail: String,
    },
}

/// What the rounds removed. Counts are branches; state sets hold names so
/// they stay meaningful after reindexing. The two rounds never remove the
/// same state.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PruneTrace {
    pub removed_states_round1: BTreeSet<String>,
    pub removed_transitions_round1: usize,
    pub removed_states_round2: BTreeSet<String>,
    pub removed_transitions_round2: usize,
}

impl PruneTrace {
    pub fn is_empty(&self) -> bool {
        self.removed_states_round1.is_empty()
            && self.removed_states_round2.is_empty()
            && self.removed_transitions_round1 == 0
            && self.removed_transitions_round2 == 0
    }

    /// Combines traces of consecutive rounds.
    pub fn merge(mut self, later: PruneTrace) -> PruneTrace {
        self.removed_states_round1
            .extend(later.removed_states_round1);
        self.removed_transitions_round1 += later.removed_transitions_round1;
        self.removed_states_round2
            .extend(later.removed_states_round2);
        self.removed_transitions_round2 += later.removed_transitions_round2;
        self
    }
}

/// States reachable from the initial state, following every branch.
pub fn reachable_states(m: &Pmdp) -> BTreeSet<StateId> {
    let transitions: Vec<_> = (0..m.state_count())
        .map(|i| m.transitions(StateId(i)).clone())
        .collect();
    reachable_over(&transitions, m.initial())
        .into_iter()
        .map(StateId)
        .collect()
}

fn reachable_over(
    transitions: &[BTreeMap<ActionId, Vec<Branch>>],
    initial: StateId,
) -> BTreeSet<usize> {
    let mut seen = BTreeSet::from([initial.0]);
    let mut queue = VecDeque::from([initial.0]);
    while let Some(s) = queue.pop_front() {
        for branches in transitions[s].values() {
            for b in branches {
                if seen.insert(b.target.0) {
                    queue.push_back(b.target.0);
                }
            }
        }
    }
    seen
}

/// Restriction outcome: branches dropped with whole entries, and how many
/// stutter loops were inserted.
struct RestrictStats {
    dropped_entry_branches: usize,
    stutter_filled: usize,
}

/// Restricts `transitions` to `keep`, reindexing densely in original state
/// order. An entry with any branch leaving `keep` is dropped whole, a
/// distribution cannot lose part of its mass. Kept states left without
/// actions get a stutter self-loop.
fn restrict_and_rebuild(
    m: &Pmdp,
    transitions: Vec<BTreeMap<ActionId, Vec<Branch>>>,
    keep: &BTreeSet<usize>,
    params: Vec<ParamId>,
    groups: Vec<ParamGroup>,
) -> (Pmdp, RestrictStats) {
    let mut remap = vec![usize::MAX; m.state_count()];
    for (new, &old) in keep.iter().enumerate() {
        remap[old] = new;
    }
    let mut stats = RestrictStats {
        dropped_entry_branches: 0,
        stutter_filled: 0,
    };
    let mut new_states = Vec::with_capacity(keep.len());
    let mut new_transitions = Vec::with_capacity(keep.len());
    let mut uses_stutter = false;
    for (old, acts) in transitions.into_iter().enumerate() {
        if remap[old] == usize::MAX {
            continue;
        }
        let mut new_acts: BTreeMap<ActionId, Vec<Branch>> = BTreeMap::new();
        for (a, branches) in acts {
            if branches.iter().any(|b| remap[b.target.0] == usize::MAX) {
                stats.dropped_entry_branches += branches.len();
                continue;
            }
            let rebased = branches
                .into_iter()
                .map(|b| Branch {
                    expr: b.expr,
                    target: StateId(remap[b.target.0]),
                })
                .collect();
            new_acts.insert(a, rebased);
        }
        if new_acts.is_empty() {
            new_acts.insert(
                ActionId::stutter(),
                vec![Branch {
                    expr: LinExpr::one(),
                    target: StateId(remap[old]),
                }],
            );
            stats.stutter_filled += 1;
        }
        uses_stutter |= new_acts.keys().any(|a| *a == ActionId::stutter());
        new_states.push(m.states()[old].clone());
        new_transitions.push(new_acts);
    }
    let mut actions = m.actions().clone();
    if uses_stutter {
        actions.insert(ActionId::stutter());
    }
    let initial = StateId(remap[m.initial().0]);
    let rebuilt = Pmdp::from_parts(
        m.name().to_string(),
        new_states,
        initial,
        actions,
        new_transitions,
        params,
        groups,
    );
    (rebuilt, stats)
}

/// Names of `m`'s states outside `keep`.
fn dropped_names(m: &Pmdp, keep: &BTreeSet<usize>) -> BTreeSet<String> {
    (0..m.state_count())
        .filter(|i| !keep.contains(i))
        .map(|i| m.states()[i].name.clone())
        .collect()
}

/// Round one: drop every `(state, action)` entry the mask forbids, then
/// prune unreachable states. Errors when the mask leaves the initial state
/// without any action.
pub fn eliminate_unavailable(
    m: &Pmdp,
    mask: &AvailabilityMask,
) -> Result<(Pmdp, PruneTrace), PruneError> {
    let mut transitions: Vec<_> = (0..m.state_count())
        .map(|i| m.transitions(StateId(i)).clone())
        .collect();
    let mut removed_branches = 0usize;
    for (i, acts) in transitions.iter_mut().enumerate() {
        let Some(allowed) = mask.allowed_at(m, StateId(i)) else {
            continue;
        };
        let forbidden: Vec<ActionId> = acts
            .keys()
            .filter(|a| !allowed.contains(*a))
            .cloned()
            .collect();
        for a in forbidden {
            removed_branches += acts.remove(&a).map_or(0, |b| b.len());
        }
    }
    if transitions[m.initial().0].is_empty() {
        return Err(PruneError::InitialStateEliminated);
    }
    let keep = reachable_over(&transitions, m.initial());
    let removed_states = dropped_names(m, &keep);
    for (i, acts) in transitions.iter().enumerate() {
        if !keep.contains(&i) {
            removed_branches += acts.values().map(Vec::len).sum::<usize>();
        }
    }
    let (result, stats) = restrict_and_rebuild(
        m,
        transitions,
        &keep,
        m.params().to_vec(),
        m.groups().to_vec(),
    );
    removed_branches += stats.dropped_entry_branches;
    let trace = PruneTrace {
        removed_states_round1: removed_states,
        removed_transitions_round1: removed_branches,
        ..Default::default()
    };
    Ok((result, trace))
}

/// Round two: substitute the policy valuation into every branch, drop
/// branches that became exactly zero, then prune unreachable states.
/// Parameters the policy assigns disappear from the result's declarations
/// together with their groups; everything else stays symbolic.
pub fn apply_policy(m: &Pmdp, pol: &Policy) -> Result<(Pmdp, PruneTrace), PruneError> {
    let assigned = &pol.valuation;
    let mut transitions: Vec<BTreeMap<ActionId, Vec<Branch>>> = Vec::with_capacity(m.state_count());
    let mut removed_branches = 0usize;
    for i in 0..m.state_count() {
        let mut new_acts = BTreeMap::new();
        for (a, branches) in m.transitions(StateId(i)) {
            let mut kept = Vec::with_capacity(branches.len());
            for b in branches {
                let expr = b.expr.substitute(assigned);
                match expr.as_constant() {
                    Some(c) if c.is_zero() => {
                        removed_branches += 1;
                        continue;
                    }
                    Some(c) if c.is_negative() || c > &Rational::one() => {
                        return Err(PruneError::InvalidDistribution {
                            state: m.states()[i].name.clone(),
                            action: a.to_string(),
                            detail: format!("branch probability {expr} outside [0, 1]"),
                        });
                    }
                    _ => {}
                }
                kept.push(Branch {
                    expr,
                    target: b.target,
                });
            }
            if !kept.is_empty() {
                new_acts.insert(a.clone(), kept);
            }
        }
        transitions.push(new_acts);
    }
    if transitions[m.initial().0].is_empty() {
        return Err(PruneError::InitialStateEliminated);
    }

    let params: Vec<ParamId> = m
        .params()
        .iter()
        .filter(|p| !assigned.contains(p))
        .cloned()
        .collect();
    let groups: Vec<ParamGroup> = m
        .groups()
        .iter()
        .filter(|g| g.members().iter().all(|p| !assigned.contains(p)))
        .cloned()
        .collect();

    let keep = reachable_over(&transitions, m.initial());
    let removed_states = dropped_names(m, &keep);
    for (i, acts) in transitions.iter().enumerate() {
        if !keep.contains(&i) {
            removed_branches += acts.values().map(Vec::len).sum::<usize>();
        }
    }
    let (result, stats) = restrict_and_rebuild(m, transitions, &keep, params, groups);
    removed_branches += stats.dropped_entry_branches;

    // every surviving distribution must still carry total mass
    for (s, a, branches) in result.entries() {
        if *a == ActionId::stutter() {
            continue;
        }
        let mut sum = LinExpr::default();
        for b in branches {
            sum = sum.add(&b.expr);
        }
        let reduced = reduce_group_sums(&sum, result.groups());
        if reduced.as_constant() != Some(&Rational::one()) {
            return Err(PruneError::InvalidDistribution {
                state: result.state(s).name.clone(),
                action: a.to_string(),
                detail: format!("distribution sums to {sum} after substitution"),
            });
        }
    }

    let trace = PruneTrace {
        removed_states_round2: removed_states,
        removed_transitions_round2: removed_branches,
        ..Default::default()
    };
    Ok((result, trace))
}

/// Submodel induced by `keep`. Entries with a branch leaving the set are
/// dropped whole; kept states losing every action get a stutter loop.
/// Errors when `keep` excludes the initial state.
pub fn induced_submodel(m: &Pmdp, keep: &BTreeSet<StateId>) -> Result<Pmdp, PruneError> {
    if !keep.contains(&m.initial()) {
        return Err(PruneError::InitialStateEliminated);
    }
    let keep_raw: BTreeSet<usize> = keep.iter().map(|s| s.0).collect();
    let transitions: Vec<_> = (0..m.state_count())
        .map(|i| m.transitions(StateId(i)).clone())
        .collect();
    let (result, _) = restrict_and_rebuild(
        m,
        transitions,
        &keep_raw,
        m.params().to_vec(),
        m.groups().to_vec(),
    );
    Ok(result)
}

/// Runs the full pipeline: availability round with `mask`, an extra
/// availability round when the policy embeds its own mask, then the
/// application round.
pub fn prune_pipeline(
    m: &Pmdp,
    mask: Option<&AvailabilityMask>,
    pol: Option<&Policy>,
) -> Result<(Pmdp, PruneTrace), PruneError> {
    let mut trace = PruneTrace::default();
    let mut current = m.clone();
    if let Some(mask) = mask {
        let (next, t) = eliminate_unavailable(&current, mask)?;
        current = next;
        trace = trace.merge(t);
    }
    if let Some(pol) = pol {
        if let Some(pol_mask) = &pol.mask {
            let (next, t) = eliminate_unavailable(&current, pol_mask)?;
            current = next;
            trace = trace.merge(t);
        }
        let (next, t) = apply_policy(&current, pol)?;
        current = next;
        trace = trace.merge(t);
    }
    Ok((current, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MaskRule, ParamId, PmdpBuilder, Valuation};
    use num::BigInt;
    use std::collections::BTreeMap;

    fn rat(n: i64, d: i64) -> Rational {
        Rational::new(BigInt::from(n), BigInt::from(d))
    }

    fn pid(name: &str) -> ParamId {
        ParamId::new(name).unwrap()
    }

    fn labels(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    fn mask(pred: &[(&str, &str)], allowed: &[&str]) -> AvailabilityMask {
        AvailabilityMask {
            rules: vec![MaskRule {
                predicate: pred
                    .iter()
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .collect(),
                allowed: allowed.iter().map(|a| ActionId::new(*a).unwrap()).collect(),
            }],
        }
    }

    /// s0 -(go)-> s1 -(go)-> s2, each with a (stay) self-loop.
    fn chain3() -> Pmdp {
        let mut b = PmdpBuilder::new("chain");
        b.action("go").unwrap();
        b.action("stay").unwrap();
        b.state_with("s0", rat(0, 1), labels(&[("tier", "a")]))
            .unwrap();
        b.state_with("s1", rat(0, 1), labels(&[("tier", "b")]))
            .unwrap();
        b.state_with("s2", rat(0, 1), labels(&[("tier", "c")]))
            .unwrap();
        b.initial("s0");
        for (s, next) in [("s0", "s1"), ("s1", "s2")] {
            b.transition(s, "go", vec![(LinExpr::one(), next.to_string())]);
            b.transition(s, "stay", vec![(LinExpr::one(), s.to_string())]);
        }
        b.transition("s2", "stay", vec![(LinExpr::one(), "s2".into())]);
        b.build().unwrap()
    }

    #[test]
    fn empty_mask_is_identity() {
        let m = chain3();
        let (out, trace) = eliminate_unavailable(&m, &AvailabilityMask::empty()).unwrap();
        assert_eq!(out, m);
        assert!(trace.is_empty());
    }

    #[test]
    fn masking_the_only_entry_prunes_downstream_states() {
        let m = chain3();
        // forbidding `go` at s1 orphans s2
        let (out, trace) = eliminate_unavailable(&m, &mask(&[("tier", "b")], &["stay"])).unwrap();
        assert_eq!(out.state_count(), 2);
        assert!(out.state_id("s2").is_none());
        assert_eq!(
            trace.removed_states_round1,
            BTreeSet::from(["s2".to_string()])
        );
        // s1's go entry plus s2's lone stay branch
        assert_eq!(trace.removed_transitions_round1, 2);
        assert!(out.validate().is_empty());
    }

    #[test]
    fn stutter_loop_rescues_stripped_state() {
        let m = chain3();
        // s1 keeps no action at all
        let (out, _) = eliminate_unavailable(&m, &mask(&[("tier", "b")], &[])).unwrap();
        let s1 = out.state_id("s1").unwrap();
        let acts = out.enabled_actions(s1);
        assert_eq!(acts.len(), 1);
        assert_eq!(acts.iter().next().unwrap().as_str(), "stutter");
        let branches = &out.transitions(s1)[&ActionId::stutter()];
        assert_eq!(branches[0].target, s1);
        assert_eq!(branches[0].expr, LinExpr::one());
        assert!(out.validate().is_empty());
    }

    #[test]
    fn initial_state_losing_all_actions_is_an_error() {
        let m = chain3();
        let err = eliminate_unavailable(&m, &mask(&[("tier", "a")], &[])).unwrap_err();
        assert_eq!(err, PruneError::InitialStateEliminated);
    }

    #[test]
    fn mask_round_is_idempotent() {
        let m = chain3();
        let mk = mask(&[("tier", "b")], &["stay"]);
        let (once, _) = eliminate_unavailable(&m, &mk).unwrap();
        let (twice, trace) = eliminate_unavailable(&once, &mk).unwrap();
        assert_eq!(once, twice);
        assert!(trace.is_empty());
    }

    /// Four-way parametric choice out of s0 over a declared group.
    fn group_model() -> Pmdp {
        let mut b = PmdpBuilder::new("grp");
        let members: Vec<ParamId> = ["p2", "p3", "p4", "p0"]
            .iter()
            .map(|n| b.param(n).unwrap())
            .collect();
        b.group(members).unwrap();
        b.action("switch").unwrap();
        for s in ["s0", "s1", "s2", "s3"] {
            b.state(s).unwrap();
        }
        b.initial("s0");
        b.transition(
            "s0",
            "switch",
            vec![
                (LinExpr::param(pid("p2")), "s0".into()),
                (LinExpr::param(pid("p3")), "s1".into()),
                (LinExpr::param(pid("p4")), "s2".into()),
                (LinExpr::param(pid("p0")), "s3".into()),
            ],
        );
        for s in ["s1", "s2", "s3"] {
            b.transition(s, "switch", vec![(LinExpr::one(), "s0".into())]);
        }
        b.build().unwrap()
    }

    #[test]
    fn deterministic_policy_leaves_one_branch() {
        let m = group_model();
        let val = Valuation::from_pairs([
            (pid("p2"), rat(1, 1)),
            (pid("p3"), rat(0, 1)),
            (pid("p4"), rat(0, 1)),
            (pid("p0"), rat(0, 1)),
        ])
        .unwrap();
        let (out, trace) = apply_policy(&m, &Policy::new("det", val)).unwrap();
        // only the self-loop branch survives, the rest of the model is unreachable
        assert_eq!(out.state_count(), 1);
        let s0 = out.state_id("s0").unwrap();
        let branches = &out.transitions(s0)[&ActionId::new("switch").unwrap()];
        assert_eq!(branches.len(), 1);
        assert_eq!(branches[0].expr, LinExpr::one());
        assert_eq!(trace.removed_transitions_round2, 6);
        assert_eq!(trace.removed_states_round2.len(), 3);
        assert!(out.params().is_empty());
        assert!(out.groups().is_empty());
    }

    #[test]
    fn fractional_policy_keeps_weighted_branches() {
        let mut b = PmdpBuilder::new("two");
        let p = b.param("p").unwrap();
        let q = b.param("q").unwrap();
        b.group(vec![p.clone(), q.clone()]).unwrap();
        b.action("a").unwrap();
        b.state("s0").unwrap();
        b.state("s1").unwrap();
        b.initial("s0");
        b.transition(
            "s0",
            "a",
            vec![
                (LinExpr::param(p), "s0".into()),
                (LinExpr::param(q), "s1".into()),
            ],
        );
        b.transition("s1", "a", vec![(LinExpr::one(), "s0".into())]);
        let m = b.build().unwrap();
        let val = Valuation::from_pairs([(pid("p"), rat(1, 2)), (pid("q"), rat(1, 2))]).unwrap();
        let (out, _) = apply_policy(&m, &Policy::new("half", val)).unwrap();
        let s0 = out.state_id("s0").unwrap();
        let branches = &out.transitions(s0)[&ActionId::new("a").unwrap()];
        assert_eq!(branches.len(), 2);
        for b in branches {
            assert_eq!(b.expr, LinExpr::constant(rat(1, 2)));
        }
    }

    #[test]
    fn empty_valuation_is_identity() {
        let m = group_model();
        let (out, trace) = apply_policy(&m, &Policy::new("id", Valuation::new())).unwrap();
        assert_eq!(out, m);
        assert!(trace.is_empty());
    }

    #[test]
    fn partial_group_assignment_breaks_the_distribution() {
        let m = group_model();
        let val = Valuation::from_pairs([(pid("p2"), rat(3, 10))]).unwrap();
        let err = apply_policy(&m, &Policy::new("partial", val)).unwrap_err();
        assert!(matches!(err, PruneError::InvalidDistribution { .. }));
    }

    #[test]
    fn application_is_idempotent_on_its_output() {
        let m = group_model();
        let val = Valuation::from_pairs([
            (pid("p2"), rat(0, 1)),
            (pid("p3"), rat(4, 5)),
            (pid("p4"), rat(1, 5)),
            (pid("p0"), rat(0, 1)),
        ])
        .unwrap();
        let pol = Policy::new("pol", val);
        let (once, _) = apply_policy(&m, &pol).unwrap();
        let (twice, trace) = apply_policy(&once, &pol).unwrap();
        assert_eq!(once, twice);
        assert!(trace.is_empty());
    }

    #[test]
    fn reachability_basics() {
        let m = chain3();
        assert_eq!(reachable_states(&m).len(), 3);
        let mut b = PmdpBuilder::new("loop");
        b.action("a").unwrap();
        b.state("s0").unwrap();
        b.state("orphan").unwrap();
        b.initial("s0");
        b.transition("s0", "a", vec![(LinExpr::one(), "s0".into())]);
        b.transition("orphan", "a", vec![(LinExpr::one(), "orphan".into())]);
        let m = b.build().unwrap();
        let reach = reachable_states(&m);
        assert_eq!(reach, BTreeSet::from([m.state_id("s0").unwrap()]));
    }

    #[test]
    fn induced_submodel_keep_all_is_identity() {
        let m = chain3();
        let keep: BTreeSet<StateId> = (0..m.state_count()).map(StateId).collect();
        assert_eq!(induced_submodel(&m, &keep).unwrap(), m);
    }

    #[test]
    fn induced_submodel_drops_entries_crossing_the_cut() {
        let m = chain3();
        let keep: BTreeSet<StateId> = [m.state_id("s0").unwrap(), m.state_id("s1").unwrap()]
            .into_iter()
            .collect();
        let out = induced_submodel(&m, &keep).unwrap();
        assert_eq!(out.state_count(), 2);
        let s1 = out.state_id("s1").unwrap();
        // s1's go entry targeted s2, so only stay remains
        let acts = out.enabled_actions(s1);
        assert_eq!(acts.len(), 1);
        assert_eq!(acts.iter().next().unwrap().as_str(), "stay");
    }

    #[test]
    fn induced_submodel_to_initial_only() {
        let m = chain3();
        let keep = BTreeSet::from([m.initial()]);
        let out = induced_submodel(&m, &keep).unwrap();
        assert_eq!(out.state_count(), 1);
        // the go entry left the cut, the self-loop survives
        assert_eq!(out.enabled_actions(out.initial()).len(), 1);
    }

    #[test]
    fn induced_submodel_requires_initial() {
        let m = chain3();
        let keep = BTreeSet::from([m.state_id("s1").unwrap()]);
        assert_eq!(
            induced_submodel(&m, &keep).unwrap_err(),
            PruneError::InitialStateEliminated
        );
    }

    #[test]
    fn pipeline_merges_round_traces() {
        let m = chain3();
        let mk = mask(&[("tier", "b")], &["stay"]);
        let pol = Policy::new("id", Valuation::new());
        let (out, trace) = prune_pipeline(&m, Some(&mk), Some(&pol)).unwrap();
        assert_eq!(out.state_count(), 2);
        assert_eq!(trace.removed_states_round1.len(), 1);
        assert!(trace.removed_states_round2.is_empty());
    }
}
