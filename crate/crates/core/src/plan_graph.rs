//! Plan-graph construction: sample noisy rollouts, merge them on canonical
//! state, and annotate node rewards and edge costs.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::hash::Hash;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::budget::Budget;
use crate::error_model::{inject_planning_error, AvailableActions, ErrorParams};
use crate::oracle::DistanceOracle;
use crate::sokoban::{step, Action, SokobanState};

/// A rollout: start state, then `(action, predicted next state)` pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbstractPlan {
    pub start: SokobanState,
    pub steps: Vec<(Action, SokobanState)>,
}

impl AbstractPlan {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn actions(&self) -> Vec<Action> {
        self.steps.iter().map(|(a, _)| *a).collect()
    }

    /// Predicted state before step `t` (`t = 0` is the start).
    pub fn predicted_state(&self, t: usize) -> Option<&SokobanState> {
        if t == 0 {
            Some(&self.start)
        } else {
            self.steps.get(t - 1).map(|(_, s)| s)
        }
    }

    pub fn reaches_goal(&self) -> bool {
        self.predicted_state(self.len()).is_some_and(|s| s.is_solved())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerOptions {
    pub available: AvailableActions,
    /// Probability that a predicted next state is replaced by the outcome of a
    /// different action. Zero keeps plans dynamics-consistent.
    pub hallucination_rate: f64,
}

/// Samples `m` independent rollouts of the error-injected oracle policy
/// through the true dynamics. A rollout stops at the goal, when the budget is
/// spent, or once the goal is out of reach within the remaining budget.
pub fn sample_plans<O: DistanceOracle + ?Sized, R: Rng>(
    oracle: &O,
    state: &SokobanState,
    remaining: &Budget,
    m: usize,
    params: &ErrorParams,
    opts: &SamplerOptions,
    rng: &mut R,
) -> Vec<AbstractPlan> {
    (0..m)
        .map(|_| {
            let mut steps = Vec::new();
            let mut cur = state.clone();
            let mut left = remaining.primary();
            while left > 0 && !cur.is_solved() && !oracle.is_dead_end(&cur, &Budget::steps(left)) {
                let intended = oracle.first_action(&cur).expect("non-dead-end unsolved state has a plan");
                let available = opts.available.actions(&cur);
                let action = inject_planning_error(oracle, &cur, intended, &Budget::steps(left), params, &available, rng);
                let mut next = step(&cur, action).state;
                if opts.hallucination_rate > 0.0 && rng.gen_bool(opts.hallucination_rate) {
                    let others: Vec<Action> = Action::ALL.into_iter().filter(|&a| a != action).collect();
                    next = step(&cur, others[rng.gen_range(0..others.len())]).state;
                }
                steps.push((action, next.clone()));
                cur = next;
                left -= 1;
            }
            AbstractPlan {
                start: state.clone(),
                steps,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanNode {
    pub id: usize,
    pub key: SokobanState,
    pub reward: f64,
    pub is_terminal: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanEdge {
    pub from_id: usize,
    pub to_id: usize,
    pub action: Action,
    pub cost: Budget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanGraph {
    pub nodes: Vec<PlanNode>,
    pub edges: Vec<PlanEdge>,
    pub root_id: usize,
    pub terminal_ids: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("cannot build a plan graph from zero plans")]
    EmptyPlanSet,
    #[error("plan {0} starts from a different state than plan 0")]
    RootMismatch(usize),
}

/// Merges plans on canonical state.
pub fn build_graph(plans: &[AbstractPlan]) -> Result<PlanGraph, GraphError> {
    build_graph_by(plans, |s| s.clone())
}

/// Merges plans on an arbitrary key; nodes keep the first state seen for each key.
/// Node and edge ids follow first appearance, plan by plan.
pub fn build_graph_by<K, F>(plans: &[AbstractPlan], merge_key: F) -> Result<PlanGraph, GraphError>
where
    K: Hash + Eq,
    F: Fn(&SokobanState) -> K,
{
    let first = plans.first().ok_or(GraphError::EmptyPlanSet)?;
    let root_key = merge_key(&first.start);
    let mut ids: HashMap<K, usize> = HashMap::new();
    let mut nodes = Vec::new();
    let mut edge_ids: HashMap<(usize, Action, usize), usize> = HashMap::new();
    let mut edges = Vec::new();
    let mut intern = |state: &SokobanState, nodes: &mut Vec<PlanNode>| -> usize {
        *ids.entry(merge_key(state)).or_insert_with(|| {
            nodes.push(PlanNode {
                id: nodes.len(),
                key: state.clone(),
                reward: 0.0,
                is_terminal: false,
            });
            nodes.len() - 1
        })
    };
    let root_id = intern(&first.start, &mut nodes);
    for (i, plan) in plans.iter().enumerate() {
        if merge_key(&plan.start) != root_key {
            return Err(GraphError::RootMismatch(i));
        }
        let mut from = root_id;
        for (action, next) in &plan.steps {
            let to = intern(next, &mut nodes);
            edge_ids.entry((from, *action, to)).or_insert_with(|| {
                edges.push(PlanEdge {
                    from_id: from,
                    to_id: to,
                    action: *action,
                    cost: Budget::steps(1),
                });
                edges.len() - 1
            });
            from = to;
        }
    }
    Ok(PlanGraph {
        nodes,
        edges,
        root_id,
        terminal_ids: BTreeSet::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum AnnotationMode {
    /// Exact rewards from the oracle.
    #[default]
    Oracle,
    /// Each non-goal node's dead-end verdict is flipped with probability `flip_rate`.
    Noisy { flip_rate: f64 },
}

impl PlanGraph {
    pub fn node(&self, id: usize) -> &PlanNode {
        &self.nodes[id]
    }

    pub fn out_edges(&self, id: usize) -> impl Iterator<Item = (usize, &PlanEdge)> {
        self.edges.iter().enumerate().filter(move |(_, e)| e.from_id == id)
    }

    /// `d(v)`: number of distinct actions leaving `v`.
    pub fn action_diversity(&self, id: usize) -> usize {
        self.out_edges(id).map(|(_, e)| e.action).collect::<BTreeSet<_>>().len()
    }

    /// Fewest edges from the root to each node (`None` if unreachable).
    pub fn depths(&self) -> Vec<Option<u32>> {
        let mut depth = vec![None; self.nodes.len()];
        depth[self.root_id] = Some(0);
        let mut queue = VecDeque::from([self.root_id]);
        while let Some(v) = queue.pop_front() {
            let d = depth[v].expect("queued");
            for (_, e) in self.out_edges(v) {
                if depth[e.to_id].is_none() {
                    depth[e.to_id] = Some(d + 1);
                    queue.push_back(e.to_id);
                }
            }
        }
        depth
    }

    pub fn find(&self, state: &SokobanState) -> Option<usize> {
        self.nodes.iter().position(|n| &n.key == state)
    }

    /// Export in the build-graph layout: `nodes[{id, observation, is_goal}]`,
    /// `edges[{from, to, action}]`, plus reward and cost fields.
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "root": self.root_id,
            "terminals": self.terminal_ids,
            "nodes": self.nodes.iter().map(|n| json!({
                "id": n.id,
                "observation": n.key.observation(),
                "is_goal": n.key.is_solved(),
                "reward": n.reward,
            })).collect::<Vec<_>>(),
            "edges": self.edges.iter().map(|e| json!({
                "from": e.from_id,
                "to": e.to_id,
                "action": e.action,
                "cost": e.cost,
            })).collect::<Vec<_>>(),
        })
    }
}

/// Assigns reward 1 to goal nodes (the terminal set), -1 to dead-end nodes,
/// 0 otherwise, and a unit step cost to every edge. A node's dead-end verdict
/// uses the budget left after the fewest edges needed to reach it.
pub fn annotate<O: DistanceOracle + ?Sized, R: Rng>(
    mut graph: PlanGraph,
    remaining: &Budget,
    mode: AnnotationMode,
    oracle: &O,
    rng: &mut R,
) -> PlanGraph {
    let depths = graph.depths();
    let mut terminals = BTreeSet::new();
    for node in &mut graph.nodes {
        if node.key.is_solved() {
            node.reward = 1.0;
            node.is_terminal = true;
            terminals.insert(node.id);
            continue;
        }
        node.is_terminal = false;
        let left = remaining.primary().saturating_sub(depths[node.id].unwrap_or(0));
        let mut dead = oracle.is_dead_end(&node.key, &Budget::steps(left));
        if let AnnotationMode::Noisy { flip_rate } = mode {
            if rng.gen_bool(flip_rate) {
                dead = !dead;
            }
        }
        node.reward = if dead { -1.0 } else { 0.0 };
    }
    for e in &mut graph.edges {
        e.cost = Budget::steps(1);
    }
    graph.terminal_ids = terminals;
    graph
}
