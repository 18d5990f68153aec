//! Strongly connected component decomposition of a pruned model.
//!
//! The underlying digraph has an edge for every branch, whatever its
//! symbolic probability; zero-probability branches never survive pruning,
//! so anything still present counts as structure.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::model::{ParamId, Pmdp, StateId};

/// One strongly connected component. `id`s follow reverse topological
/// order of the condensation: a component only reaches components with
/// smaller ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub id: usize,
    /// Member states, ascending.
    pub states: Vec<StateId>,
    /// Parameters on branches whose source state lies in the component,
    /// including branches that exit it.
    pub params: BTreeSet<ParamId>,
}

impl Component {
    pub fn size(&self) -> usize {
        self.states.len()
    }
}

/// Result of a decomposition: the components plus a state-to-component
/// index. Component state sets partition the model's states.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentSet {
    pub components: Vec<Component>,
    pub state_to_component: Vec<usize>,
}

impl ComponentSet {
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn component_of(&self, s: StateId) -> usize {
        self.state_to_component[s.0]
    }
}

/// Component sizes and how often each occurs.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SizeHistogram {
    pub counts: BTreeMap<usize, usize>,
}

impl SizeHistogram {
    pub fn from_counts<I>(counts: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        SizeHistogram {
            counts: counts.into_iter().filter(|&(_, n)| n > 0).collect(),
        }
    }

    /// Largest size with a nonzero count, 0 when empty.
    pub fn max_size(&self) -> usize {
        self.counts.keys().next_back().copied().unwrap_or(0)
    }

    /// Number of single-state components.
    pub fn singletons(&self) -> usize {
        self.counts.get(&1).copied().unwrap_or(0)
    }

    /// Total component count.
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    /// Total state count covered.
    pub fn state_total(&self) -> usize {
        self.counts.iter().map(|(size, n)| size * n).sum()
    }
}

/// Tarjan's algorithm, iterative so deep chains cannot overflow the call
/// stack. Components are emitted in reverse topological order, which fixes
/// their ids deterministically.
pub fn decompose(m: &Pmdp) -> ComponentSet {
    let n = m.state_count();
    let adjacency: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            let mut out = Vec::new();
            for branches in m.transitions(StateId(i)).values() {
                for b in branches {
                    out.push(b.target.0);
                }
            }
            out
        })
        .collect();

    const UNVISITED: usize = usize::MAX;
    let mut index = vec![UNVISITED; n];
    let mut low_link = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    let mut next_index = 0usize;
    let mut comp_of = vec![UNVISITED; n];
    let mut comp_states: Vec<Vec<StateId>> = Vec::new();

    // call frames: (node, position in its adjacency list)
    let mut frames: Vec<(usize, usize)> = Vec::new();
    for root in 0..n {
        if index[root] != UNVISITED {
            continue;
        }
        frames.push((root, 0));
        index[root] = next_index;
        low_link[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut pos)) = frames.last_mut() {
            if let Some(&w) = adjacency[v].get(*pos) {
                *pos += 1;
                if index[w] == UNVISITED {
                    index[w] = next_index;
                    low_link[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    frames.push((w, 0));
                } else if on_stack[w] {
                    low_link[v] = low_link[v].min(index[w]);
                }
            } else {
                frames.pop();
                if let Some(&(parent, _)) = frames.last() {
                    low_link[parent] = low_link[parent].min(low_link[v]);
                }
                if low_link[v] == index[v] {
                    let id = comp_states.len();
                    let mut members = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack underflow");
                        on_stack[w] = false;
                        comp_of[w] = id;
                        members.push(StateId(w));
                        if w == v {
                            break;
                        }
                    }
                    members.sort();
                    comp_states.push(members);
                }
            }
        }
    }

    let components = comp_states
        .into_iter()
        .enumerate()
        .map(|(id, states)| {
            let mut c = Component {
                id,
                states,
                params: BTreeSet::new(),
            };
            c.params = component_params(m, &c);
            c
        })
        .collect();
    ComponentSet {
        components,
        state_to_component: comp_of,
    }
}

/// Parameters appearing on any branch sourced inside `c`.
pub fn component_params(m: &Pmdp, c: &Component) -> BTreeSet<ParamId> {
    let mut out = BTreeSet::new();
    for &s in &c.states {
        for branches in m.transitions(s).values() {
            for b in branches {
                out.extend(b.expr.params().cloned());
            }
        }
    }
    out
}

/// Histogram of component sizes of a decomposition.
pub fn size_histogram(cs: &ComponentSet) -> SizeHistogram {
    let mut counts = BTreeMap::new();
    for c in &cs.components {
        *counts.entry(c.size()).or_insert(0) += 1;
    }
    SizeHistogram { counts }
}

/// Renders the condensation as a DOT digraph, one node per component.
pub fn condensation_dot(m: &Pmdp, cs: &ComponentSet) -> String {
    let mut edges = BTreeSet::new();
    for (s, _, branches) in m.entries() {
        let from = cs.component_of(s);
        for b in branches {
            let to = cs.component_of(b.target);
            if from != to {
                edges.insert((from, to));
            }
        }
    }
    let mut out = String::from("digraph condensation {\n");
    for c in &cs.components {
        let _ = writeln!(
            out,
            "  c{} [label=\"c{} ({} state{})\"];",
            c.id,
            c.id,
            c.size(),
            if c.size() == 1 { "" } else { "s" }
        );
    }
    for (from, to) in edges {
        let _ = writeln!(out, "  c{from} -> c{to};");
    }
    out.push_str("}\n");
    out
}
