//! The parametric MDP and its structural validation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num::{One, Signed, Zero};

use super::expr::{rational_str, LinExpr, ParamGroup, ParamId, Rational};
use super::ModelError;

/// Reserved action used to keep a state total after pruning strips all of
/// its distributions.
pub const STUTTER_ACTION: &str = "stutter";

/// Dense state index, stable within one model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateId(pub usize);

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Action name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActionId(String);

impl ActionId {
    pub fn new(name: impl Into<String>) -> Result<Self, ModelError> {
        let name = name.into();
        ParamId::new(name.clone())?;
        Ok(ActionId(name))
    }

    pub fn stutter() -> Self {
        ActionId(STUTTER_ACTION.to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One probabilistic alternative of a distribution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Branch {
    pub expr: LinExpr,
    pub target: StateId,
}

/// Per-state bookkeeping: name, reward and labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateInfo {
    pub name: String,
    pub reward: Rational,
    pub labels: BTreeMap<String, String>,
}

/// A parametric MDP. States are indexed densely; each state maps enabled
/// actions to branch lists. Branch probabilities are linear expressions
/// over the declared parameters.
///
/// Rewards are carried through every transformation but play no role in
/// pruning or scoring.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pmdp {
    name: String,
    states: Vec<StateInfo>,
    state_index: BTreeMap<String, StateId>,
    initial: StateId,
    actions: BTreeSet<ActionId>,
    transitions: Vec<BTreeMap<ActionId, Vec<Branch>>>,
    params: Vec<ParamId>,
    param_set: BTreeSet<ParamId>,
    groups: Vec<ParamGroup>,
}

impl Pmdp {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[StateInfo] {
        &self.states
    }

    pub fn state(&self, id: StateId) -> &StateInfo {
        &self.states[id.0]
    }

    pub fn state_id(&self, name: &str) -> Option<StateId> {
        self.state_index.get(name).copied()
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn actions(&self) -> &BTreeSet<ActionId> {
        &self.actions
    }

    pub fn params(&self) -> &[ParamId] {
        &self.params
    }

    pub fn param_set(&self) -> &BTreeSet<ParamId> {
        &self.param_set
    }

    pub fn groups(&self) -> &[ParamGroup] {
        &self.groups
    }

    pub fn transitions(&self, s: StateId) -> &BTreeMap<ActionId, Vec<Branch>> {
        &self.transitions[s.0]
    }

    /// Actions with at least one distribution at `s`.
    pub fn enabled_actions(&self, s: StateId) -> BTreeSet<ActionId> {
        self.transitions[s.0].keys().cloned().collect()
    }

    /// Iterates over every `(state, action, branches)` entry.
    pub fn entries(&self) -> impl Iterator<Item = (StateId, &ActionId, &[Branch])> {
        self.transitions.iter().enumerate().flat_map(|(i, acts)| {
            acts.iter()
                .map(move |(a, br)| (StateId(i), a, br.as_slice()))
        })
    }

    pub fn total_branches(&self) -> usize {
        self.transitions
            .iter()
            .map(|acts| acts.values().map(Vec::len).sum::<usize>())
            .sum()
    }

    /// Runs all structural checks and returns the violations found.
    pub fn validate(&self) -> Vec<Violation> {
        validate_model(self)
    }

    /// Assembles a model from already-resolved parts. Callers guarantee
    /// index consistency; only cheap shape checks run here.
    pub(crate) fn from_parts(
        name: String,
        states: Vec<StateInfo>,
        initial: StateId,
        actions: BTreeSet<ActionId>,
        transitions: Vec<BTreeMap<ActionId, Vec<Branch>>>,
        params: Vec<ParamId>,
        groups: Vec<ParamGroup>,
    ) -> Pmdp {
        debug_assert_eq!(states.len(), transitions.len());
        debug_assert!(initial.0 < states.len());
        debug_assert!(transitions
            .iter()
            .flat_map(|acts| acts.values())
            .flatten()
            .all(|b| b.target.0 < states.len()));
        let state_index = states
            .iter()
            .enumerate()
            .map(|(i, info)| (info.name.clone(), StateId(i)))
            .collect();
        let param_set = params.iter().cloned().collect();
        Pmdp {
            name,
            states,
            state_index,
            initial,
            actions,
            transitions,
            params,
            param_set,
            groups,
        }
    }
}

/// Incremental constructor working on names; resolves and checks symbols
/// when `build` is called.
#[derive(Debug, Default)]
pub struct PmdpBuilder {
    name: String,
    params: Vec<ParamId>,
    groups: Vec<ParamGroup>,
    actions: BTreeSet<ActionId>,
    states: Vec<StateInfo>,
    state_index: BTreeMap<String, usize>,
    initial: Option<String>,
    // (state, action, branches over state names)
    trans: Vec<(String, String, Vec<(LinExpr, String)>)>,
}

impl PmdpBuilder {
    pub fn new(name: impl Into<String>) -> Self {
        PmdpBuilder {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn param(&mut self, name: &str) -> Result<ParamId, ModelError> {
        let p = ParamId::new(name)?;
        if self.params.contains(&p) {
            return Err(ModelError::DuplicateParam(name.to_string()));
        }
        self.params.push(p.clone());
        Ok(p)
    }

    pub fn group(&mut self, members: Vec<ParamId>) -> Result<(), ModelError> {
        for m in &members {
            if !self.params.contains(m) {
                return Err(ModelError::UnknownParam(m.to_string()));
            }
            if self.groups.iter().any(|g| g.contains(m)) {
                return Err(ModelError::GroupOverlap(m.to_string()));
            }
        }
        self.groups.push(ParamGroup::new(members)?);
        Ok(())
    }

    pub fn action(&mut self, name: &str) -> Result<ActionId, ModelError> {
        let a = ActionId::new(name)?;
        self.actions.insert(a.clone());
        Ok(a)
    }

    pub fn state(&mut self, name: &str) -> Result<StateId, ModelError> {
        self.state_with(name, Rational::zero(), BTreeMap::new())
    }

    pub fn state_with(
        &mut self,
        name: &str,
        reward: Rational,
        labels: BTreeMap<String, String>,
    ) -> Result<StateId, ModelError> {
        ParamId::new(name)?;
        if self.state_index.contains_key(name) {
            return Err(ModelError::DuplicateState(name.to_string()));
        }
        let id = self.states.len();
        self.state_index.insert(name.to_string(), id);
        self.states.push(StateInfo {
            name: name.to_string(),
            reward,
            labels,
        });
        Ok(StateId(id))
    }

    pub fn initial(&mut self, name: &str) {
        self.initial = Some(name.to_string());
    }

    pub fn transition(&mut self, state: &str, action: &str, branches: Vec<(LinExpr, String)>) {
        self.trans
            .push((state.to_string(), action.to_string(), branches));
    }

    pub fn build(self) -> Result<Pmdp, ModelError> {
        if self.states.is_empty() {
            return Err(ModelError::NoStates);
        }
        let initial_name = self.initial.ok_or(ModelError::NoInitial)?;
        let initial = StateId(
            *self
                .state_index
                .get(&initial_name)
                .ok_or(ModelError::UnknownState(initial_name))?,
        );
        let param_set: BTreeSet<ParamId> = self.params.iter().cloned().collect();
        let mut transitions: Vec<BTreeMap<ActionId, Vec<Branch>>> =
            vec![BTreeMap::new(); self.states.len()];
        let mut actions = self.actions;
        for (state, action, branches) in self.trans {
            let sid = *self
                .state_index
                .get(&state)
                .ok_or(ModelError::UnknownState(state))?;
            let act = ActionId::new(action.as_str())?;
            if !actions.contains(&act) {
                return Err(ModelError::UnknownAction(action));
            }
            let mut resolved = Vec::with_capacity(branches.len());
            let mut seen = BTreeSet::new();
            for (expr, target) in branches {
                for p in expr.params() {
                    if !param_set.contains(p) {
                        return Err(ModelError::UnknownParam(p.to_string()));
                    }
                }
                if expr.is_zero() {
                    return Err(ModelError::ZeroBranch);
                }
                let tid = *self
                    .state_index
                    .get(&target)
                    .ok_or(ModelError::UnknownState(target.clone()))?;
                if !seen.insert(tid) {
                    return Err(ModelError::DuplicateTarget(target));
                }
                resolved.push(Branch {
                    expr,
                    target: StateId(tid),
                });
            }
            if transitions[sid].insert(act.clone(), resolved).is_some() {
                return Err(ModelError::DuplicateEntry(format!(
                    "{}/{act}",
                    self.states[sid].name
                )));
            }
        }
        // stutter is implicitly declared once something uses it
        let uses_stutter = transitions
            .iter()
            .any(|acts| acts.keys().any(|a| a.as_str() == STUTTER_ACTION));
        if uses_stutter {
            actions.insert(ActionId::stutter());
        }
        Ok(Pmdp {
            name: self.name,
            state_index: self
                .state_index
                .iter()
                .map(|(n, i)| (n.clone(), StateId(*i)))
                .collect(),
            states: self.states,
            initial,
            actions,
            transitions,
            params: self.params,
            param_set,
            groups: self.groups,
        })
    }
}

/// A single validation finding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub state: Option<String>,
    pub action: Option<String>,
    pub kind: ViolationKind,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    NoEnabledAction,
    BadDistribution,
    BranchOutOfRange,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.state, &self.action) {
            (Some(s), Some(a)) => write!(f, "state `{s}`, action `{a}`: {}", self.message),
            (Some(s), None) => write!(f, "state `{s}`: {}", self.message),
            _ => f.write_str(&self.message),
        }
    }
}

/// Replaces every complete group sum `k*(m1 + ... + mn)` in `expr` by the
/// constant `k`. Used to decide whether a symbolic distribution is total.
pub(crate) fn reduce_group_sums(expr: &LinExpr, groups: &[ParamGroup]) -> LinExpr {
    let mut out = expr.clone();
    for g in groups {
        let coeffs: Vec<Option<&Rational>> = g.members().iter().map(|m| out.coeff(m)).collect();
        let Some(Some(first)) = coeffs.first() else {
            continue;
        };
        let k = (*first).clone();
        if k.is_zero() || !coeffs.iter().all(|c| *c == Some(&k)) {
            continue;
        }
        let mut reduction = LinExpr::constant(-k.clone());
        for m in g.members() {
            reduction = reduction.add(&LinExpr::term(k.clone(), m.clone()));
        }
        out = out.sub(&reduction);
    }
    out
}

/// Structural checks: every state keeps at least one action, every
/// distribution's symbolic sum reduces to 1 once complete group sums are
/// folded, and constant branch probabilities lie in `[0, 1]`.
///
/// Reachability is deliberately not checked here; unreachable states are a
/// matter for pruning, not validity.
pub fn validate_model(m: &Pmdp) -> Vec<Violation> {
    let mut out = Vec::new();
    for (i, info) in m.states().iter().enumerate() {
        let s = StateId(i);
        if m.transitions(s).is_empty() {
            out.push(Violation {
                state: Some(info.name.clone()),
                action: None,
                kind: ViolationKind::NoEnabledAction,
                message: "no enabled action".to_string(),
            });
        }
        for (a, branches) in m.transitions(s) {
            for b in branches {
                if let Some(c) = b.expr.as_constant() {
                    if c.is_negative() || c > &Rational::one() {
                        out.push(Violation {
                            state: Some(info.name.clone()),
                            action: Some(a.to_string()),
                            kind: ViolationKind::BranchOutOfRange,
                            message: format!(
                                "branch to `{}` has probability {} outside [0, 1]",
                                m.state(b.target).name,
                                rational_str(c)
                            ),
                        });
                    }
                }
            }
            let mut sum = LinExpr::default();
            for b in branches {
                sum = sum.add(&b.expr);
            }
            let reduced = reduce_group_sums(&sum, m.groups());
            if reduced.as_constant() != Some(&Rational::one()) {
                out.push(Violation {
                    state: Some(info.name.clone()),
                    action: Some(a.to_string()),
                    kind: ViolationKind::BadDistribution,
                    message: format!("distribution sums to {sum}, not 1"),
                });
            }
        }
    }
    out
}
