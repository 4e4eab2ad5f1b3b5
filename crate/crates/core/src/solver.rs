//! Exact selection of a fixed-length walk through a plan graph.
//!
//! The program picks one edge per step, starts at the root, ends on a
//! terminal node after exactly `horizon` steps, keeps consecutive edges
//! connected, optionally keeps total cost within a budget, and maximises
//! the summed reward of edge targets. Its feasible set is exactly the set of
//! `horizon`-edge walks, so memoised label search over
//! `(step, node, consumed cost)` solves it exactly.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::budget::Budget;
use crate::plan_graph::PlanGraph;
use crate::sokoban::Action;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionEdge {
    pub src: usize,
    pub tgt: usize,
    pub cost: Budget,
    /// Goal self-loop: zero cost, contributes no reward.
    #[serde(default)]
    pub absorbing: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<Action>,
}

impl SelectionEdge {
    fn contribution(&self, rewards: &[f64]) -> f64 {
        if self.absorbing {
            0.0
        } else {
            rewards[self.tgt]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSelectionProblem {
    pub node_rewards: Vec<f64>,
    pub edges: Vec<SelectionEdge>,
    pub root: usize,
    pub terminals: BTreeSet<usize>,
    pub horizon: u32,
    #[serde(default)]
    pub budget: Option<Budget>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSolution {
    pub status: SolveStatus,
    /// Edge ids, one per step. Empty when infeasible.
    pub walk: Vec<usize>,
    pub objective: f64,
    pub total_cost: Budget,
    pub horizon: u32,
}

impl PathSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    fn infeasible(problem: &PathSelectionProblem) -> Self {
        PathSolution {
            status: SolveStatus::Infeasible,
            walk: Vec::new(),
            objective: 0.0,
            total_cost: Budget::zero(problem.cost_dims()),
            horizon: problem.horizon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolverError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("instance too large for enumeration: {nodes} nodes, horizon {horizon}")]
    InstanceTooLarge { nodes: usize, horizon: u32 },
}

/// Constraint broken by a candidate walk, as reported by [`check_walk`].
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConstraintViolation {
    #[error("step {0} does not select exactly one edge")]
    SingleAction(usize),
    #[error("first edge does not leave the root")]
    Start,
    #[error("last edge does not enter a terminal")]
    Goal,
    #[error("flow broken at node {node} between steps {step} and {next}", next = step + 1)]
    Flow { node: usize, step: usize },
    #[error("total cost {0} exceeds the budget")]
    Budget(Budget),
    #[error("unknown edge id {0}")]
    UnknownEdge(usize),
}

impl PathSelectionProblem {
    /// Converts an annotated plan graph, appending a zero-cost absorbing
    /// self-loop at every terminal so walks may arrive before the horizon.
    pub fn from_graph(graph: &PlanGraph, horizon: u32, budget: Option<Budget>) -> Self {
        let dims = budget
            .as_ref()
            .map(Budget::dims)
            .or_else(|| graph.edges.first().map(|e| e.cost.dims()))
            .unwrap_or(1);
        let mut edges: Vec<SelectionEdge> = graph
            .edges
            .iter()
            .map(|e| SelectionEdge {
                src: e.from_id,
                tgt: e.to_id,
                cost: e.cost.clone(),
                absorbing: false,
                action: Some(e.action),
            })
            .collect();
        edges.extend(graph.terminal_ids.iter().map(|&t| SelectionEdge {
            src: t,
            tgt: t,
            cost: Budget::zero(dims),
            absorbing: true,
            action: None,
        }));
        PathSelectionProblem {
            node_rewards: graph.nodes.iter().map(|n| n.reward).collect(),
            edges,
            root: graph.root_id,
            terminals: graph.terminal_ids.clone(),
            horizon,
            budget,
        }
    }

    pub fn with_horizon(&self, horizon: u32) -> Self {
        PathSelectionProblem {
            horizon,
            ..self.clone()
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_rewards.len()
    }

    fn cost_dims(&self) -> usize {
        self.budget
            .as_ref()
            .map(Budget::dims)
            .or_else(|| self.edges.first().map(|e| e.cost.dims()))
            .unwrap_or(1)
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: String| Err(SolverError::InvalidProblem(m));
        let n = self.node_count();
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if self.root >= n {
            return bad(format!("root {} out of range", self.root));
        }
        if let Some(t) = self.terminals.iter().find(|&&t| t >= n) {
            return bad(format!("terminal {t} out of range"));
        }
        if let Some(r) = self.node_rewards.iter().find(|r| !r.is_finite()) {
            return bad(format!("non-finite reward {r}"));
        }
        let dims = self.cost_dims();
        for (i, e) in self.edges.iter().enumerate() {
            if e.src >= n || e.tgt >= n {
                return bad(format!("edge {i} has an endpoint out of range"));
            }
            if e.cost.dims() != dims {
                return bad(format!("edge {i} cost has {} components, expected {dims}", e.cost.dims()));
            }
        }
        Ok(())
    }

    /// Objective of a walk: contributions folded from the last step backwards,
    /// the same association the solver uses, so equal walks compare bit-equal.
    pub fn objective(&self, walk: &[usize]) -> f64 {
        walk.iter()
            .rev()
            .fold(0.0, |acc, &e| self.edges[e].contribution(&self.node_rewards) + acc)
    }

    pub fn total_cost(&self, walk: &[usize]) -> Budget {
        walk.iter()
            .fold(Budget::zero(self.cost_dims()), |acc, &e| {
                acc.saturating_add(&self.edges[e].cost).expect("validated cost dimensions")
            })
    }

    /// Nodes visited by a walk, starting with the root.
    pub fn walk_nodes(&self, walk: &[usize]) -> Vec<usize> {
        std::iter::once(self.root).chain(walk.iter().map(|&e| self.edges[e].tgt)).collect()
    }

    fn solution(&self, walk: Vec<usize>) -> PathSolution {
        PathSolution {
            status: SolveStatus::Optimal,
            objective: self.objective(&walk),
            total_cost: self.total_cost(&walk),
            horizon: self.horizon,
            walk,
        }
    }
}

/// Checks a walk against the 0/1 edge-per-step program written out term by
/// term, independent of the solver's search.
pub fn check_walk(problem: &PathSelectionProblem, walk: &[usize]) -> Result<(), ConstraintViolation> {
    let steps = problem.horizon as usize;
    let m = problem.edges.len();
    if let Some(&e) = walk.iter().find(|&&e| e >= m) {
        return Err(ConstraintViolation::UnknownEdge(e));
    }
    let mut x = vec![vec![0u32; m]; steps];
    for (l, &e) in walk.iter().enumerate() {
        if l < steps {
            x[l][e] += 1;
        } else {
            return Err(ConstraintViolation::SingleAction(l));
        }
    }
    let edges = &problem.edges;
    for (l, row) in x.iter().enumerate() {
        if row.iter().sum::<u32>() != 1 {
            return Err(ConstraintViolation::SingleAction(l));
        }
    }
    let start: u32 = (0..m).filter(|&e| edges[e].src == problem.root).map(|e| x[0][e]).sum();
    if start != 1 {
        return Err(ConstraintViolation::Start);
    }
    let goal: u32 = (0..m)
        .filter(|&e| problem.terminals.contains(&edges[e].tgt))
        .map(|e| x[steps - 1][e])
        .sum();
    if goal != 1 {
        return Err(ConstraintViolation::Goal);
    }
    for l in 1..steps {
        for v in 0..problem.node_count() {
            let inflow: u32 = (0..m).filter(|&e| edges[e].tgt == v).map(|e| x[l - 1][e]).sum();
            let outflow: u32 = (0..m).filter(|&e| edges[e].src == v).map(|e| x[l][e]).sum();
            if inflow != outflow {
                return Err(ConstraintViolation::Flow { node: v, step: l - 1 });
            }
        }
    }
    if let Some(budget) = &problem.budget {
        let mut total = vec![0u64; budget.dims()];
        for row in &x {
            for (e, &xe) in row.iter().enumerate() {
                for (t, &c) in total.iter_mut().zip(edges[e].cost.components()) {
                    *t += u64::from(c) * u64::from(xe);
                }
            }
        }
        if total.iter().zip(budget.components()).any(|(&t, &b)| t > u64::from(b)) {
            let clipped = total.iter().map(|&t| t.min(u64::from(u32::MAX)) as u32).collect();
            return Err(ConstraintViolation::Budget(Budget::new(clipped)));
        }
    }
    Ok(())
}

type Label = (u32, usize, Vec<u32>);

struct Search<'a> {
    problem: &'a PathSelectionProblem,
    out: Vec<Vec<usize>>,
    memo: HashMap<Label, Option<f64>>,
}

impl Search<'_> {
    fn consume(&self, consumed: &[u32], e: usize) -> Option<Vec<u32>> {
        let budget = self.problem.budget.as_ref()?;
        let next: Vec<u32> = consumed
            .iter()
            .zip(self.problem.edges[e].cost.components())
            .map(|(&a, &b)| a.saturating_add(b))
            .collect();
        Budget::new(next.clone()).fits_within(budget).then_some(next)
    }

    fn successor(&self, consumed: &[u32], e: usize) -> Option<Vec<u32>> {
        if self.problem.budget.is_some() {
            self.consume(consumed, e)
        } else {
            Some(Vec::new())
        }
    }

    /// Best objective from `node` at step `l` with `consumed` cost, or `None`
    /// if no completion is feasible.
    fn value(&mut self, l: u32, node: usize, consumed: Vec<u32>) -> Option<f64> {
        if l == self.problem.horizon {
            return self.problem.terminals.contains(&node).then_some(0.0);
        }
        let key = (l, node, consumed);
        if let Some(&v) = self.memo.get(&key) {
            return v;
        }
        let mut best: Option<f64> = None;
        for i in 0..self.out[node].len() {
            let e = self.out[node][i];
            let Some(next) = self.successor(&key.2, e) else { continue };
            let edge = &self.problem.edges[e];
            if let Some(rest) = self.value(l + 1, edge.tgt, next) {
                let total = edge.contribution(&self.problem.node_rewards) + rest;
                if best.is_none_or(|b| total > b) {
                    best = Some(total);
                }
            }
        }
        self.memo.insert(key, best);
        best
    }
}

/// Solves the walk-selection program exactly. Among optimal walks the
/// lexicographically smallest edge-id sequence is returned.
pub fn solve(problem: &PathSelectionProblem) -> Result<PathSolution, SolverError> {
    problem.validate()?;
    let mut out = vec![Vec::new(); problem.node_count()];
    for (i, e) in problem.edges.iter().enumerate() {
        out[e.src].push(i);
    }
    let mut search = Search {
        problem,
        out,
        memo: HashMap::new(),
    };
    let start = problem.budget.as_ref().map_or_else(Vec::new, |b| vec![0; b.dims()]);
    let Some(mut target) = search.value(0, problem.root, start.clone()) else {
        return Ok(PathSolution::infeasible(problem));
    };
    let mut walk = Vec::with_capacity(problem.horizon as usize);
    let (mut node, mut consumed) = (problem.root, start);
    for l in 0..problem.horizon {
        let chosen = search.out[node]
            .clone()
            .into_iter()
            .find_map(|e| {
                let next = search.successor(&consumed, e)?;
                let edge = &problem.edges[e];
                let contribution = edge.contribution(&problem.node_rewards);
                let rest = search.value(l + 1, edge.tgt, next.clone())?;
                (contribution + rest == target).then_some((e, next, rest))
            })
            .expect("optimal value is attained by some edge");
        walk.push(chosen.0);
        node = problem.edges[chosen.0].tgt;
        consumed = chosen.1;
        target = chosen.2;
    }
    Ok(problem.solution(walk))
}

/// Brute force over every edge sequence of length `horizon`, in
/// lexicographic order, filtered by [`check_walk`].
pub fn enumerate_oracle(problem: &PathSelectionProblem) -> Result<PathSolution, SolverError> {
    problem.validate()?;
    if problem.node_count() > 8 || problem.horizon > 6 {
        return Err(SolverError::InstanceTooLarge {
            nodes: problem.node_count(),
            horizon: problem.horizon,
        });
    }
    let m = problem.edges.len();
    let steps = problem.horizon as usize;
    if m == 0 {
        return Ok(PathSolution::infeasible(problem));
    }
    let mut walk = vec![0usize; steps];
    let mut best: Option<(f64, Vec<usize>)> = None;
    loop {
        if check_walk(problem, &walk).is_ok() {
            let obj = problem.objective(&walk);
            if best.as_ref().is_none_or(|(b, _)| obj > *b) {
                best = Some((obj, walk.clone()));
            }
        }
        // Odometer increment, last position fastest.
        let mut i = steps;
        loop {
            if i == 0 {
                return Ok(match best {
                    Some((_, w)) => problem.solution(w),
                    None => PathSolution::infeasible(problem),
                });
            }
            i -= 1;
            walk[i] += 1;
            if walk[i] < m {
                break;
            }
            walk[i] = 0;
        }
    }
}

/// Tries each horizon in order and returns the first optimal solution.
pub fn solve_with_fallback(problem: &PathSelectionProblem, horizons: &[u32]) -> Result<PathSolution, SolverError> {
    let mut last = None;
    for &h in horizons {
        let sol = solve(&problem.with_horizon(h))?;
        if sol.is_optimal() {
            return Ok(sol);
        }
        last = Some(sol);
    }
    Ok(last.unwrap_or_else(|| PathSolution::infeasible(problem)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn edge(src: usize, tgt: usize, cost: u32) -> SelectionEdge {
        SelectionEdge {
            src,
            tgt,
            cost: Budget::steps(cost),
            absorbing: false,
            action: None,
        }
    }

    fn problem(rewards: &[f64], edges: Vec<SelectionEdge>, terminals: &[usize], horizon: u32, budget: Option<u32>) -> PathSelectionProblem {
        PathSelectionProblem {
            node_rewards: rewards.to_vec(),
            edges,
            root: 0,
            terminals: terminals.iter().copied().collect(),
            horizon,
            budget: budget.map(Budget::steps),
        }
    }

    fn both(p: &PathSelectionProblem) -> PathSolution {
        let a = solve(p).unwrap();
        let b = enumerate_oracle(p).unwrap();
        assert_eq!(a, b);
        a
    }

    #[test]
    fn chain() {
        let p = problem(&[0.0, 0.0, 1.0], vec![edge(0, 1, 1), edge(1, 2, 1)], &[2], 2, None);
        let s = both(&p);
        assert_eq!(s.status, SolveStatus::Optimal);
        assert_eq!(s.walk, vec![0, 1]);
        assert_eq!(s.objective, 1.0);
        assert_eq!(s.total_cost, Budget::steps(2));
    }

    #[test]
    fn fork_respects_budget() {
        let p = problem(&[0.0, 1.0, 1.0], vec![edge(0, 1, 3), edge(0, 2, 1)], &[1, 2], 1, Some(2));
        let s = both(&p);
        assert_eq!(s.walk, vec![1]);
        assert_eq!(check_walk(&p, &[0]), Err(ConstraintViolation::Budget(Budget::steps(3))));
        // Without the budget the tie goes to the smaller edge id.
        let free = PathSelectionProblem { budget: None, ..p };
        assert_eq!(both(&free).walk, vec![0]);
    }

    #[test]
    fn over_budget_is_infeasible() {
        let p = problem(&[0.0, 1.0, 1.0], vec![edge(0, 1, 3), edge(0, 2, 4)], &[1, 2], 1, Some(2));
        let s = both(&p);
        assert_eq!(s.status, SolveStatus::Infeasible);
        assert!(s.walk.is_empty());
    }

    #[test]
    fn zero_edges_infeasible() {
        let p = problem(&[0.0], vec![], &[0], 1, None);
        assert_eq!(both(&p).status, SolveStatus::Infeasible);
    }

    #[test]
    fn enumeration_guard() {
        let p = problem(&[0.0; 9], vec![edge(0, 1, 1)], &[1], 1, None);
        assert!(matches!(enumerate_oracle(&p), Err(SolverError::InstanceTooLarge { .. })));
        let p = problem(&[0.0, 1.0], vec![edge(0, 1, 1)], &[1], 7, None);
        assert!(matches!(enumerate_oracle(&p), Err(SolverError::InstanceTooLarge { .. })));
    }

    #[test]
    fn invalid_problems() {
        let p = problem(&[0.0, 1.0], vec![edge(0, 5, 1)], &[1], 1, None);
        assert!(matches!(solve(&p), Err(SolverError::InvalidProblem(_))));
        let p = problem(&[0.0, 1.0], vec![edge(0, 1, 1)], &[1], 0, None);
        assert!(matches!(solve(&p), Err(SolverError::InvalidProblem(_))));
    }

    fn with_goal_loop(mut p: PathSelectionProblem) -> PathSelectionProblem {
        let dims = p.cost_dims();
        for &t in &p.terminals.clone() {
            p.edges.push(SelectionEdge {
                src: t,
                tgt: t,
                cost: Budget::zero(dims),
                absorbing: true,
                action: None,
            });
        }
        p
    }

    #[test]
    fn fallback_finds_shortest_horizon() {
        let p = with_goal_loop(problem(&[0.0, 0.0, 1.0], vec![edge(0, 1, 1), edge(1, 2, 1)], &[2], 4, None));
        let s = solve_with_fallback(&p, &[1, 2, 3, 4]).unwrap();
        assert_eq!(s.horizon, 2);
        assert_eq!(s.walk, vec![0, 1]);
        for h in 1..=4 {
            let e = enumerate_oracle(&p.with_horizon(h)).unwrap();
            assert_eq!(e.is_optimal(), h >= 2);
        }
    }

    #[test]
    fn fallback_at_last_horizon_and_unreachable() {
        let p = problem(&[0.0, 0.0, 0.0, 1.0], vec![edge(0, 1, 1), edge(1, 2, 1), edge(2, 3, 1)], &[3], 3, None);
        assert_eq!(solve_with_fallback(&p, &[1, 2, 3]).unwrap().horizon, 3);
        let cut = problem(&[0.0, 0.0, 1.0], vec![edge(0, 1, 1)], &[2], 3, None);
        assert_eq!(solve_with_fallback(&cut, &[1, 2, 3]).unwrap().status, SolveStatus::Infeasible);
        assert_eq!(solve_with_fallback(&cut, &[]).unwrap().status, SolveStatus::Infeasible);
    }

    #[test]
    fn goal_reward_counted_once() {
        let p = with_goal_loop(problem(&[0.0, 1.0], vec![edge(0, 1, 1)], &[1], 4, None));
        let s = both(&p);
        assert_eq!(s.objective, 1.0);
        assert_eq!(s.walk, vec![0, 1, 1, 1]);
    }

    #[test]
    fn dead_end_nodes_are_avoided_when_possible() {
        let p = problem(&[0.0, -1.0, 0.0, 1.0], vec![edge(0, 1, 1), edge(0, 2, 1), edge(1, 3, 1), edge(2, 3, 1)], &[3], 2, None);
        assert_eq!(both(&p).walk, vec![1, 3]);
    }

    #[test]
    fn checker_reports_each_constraint() {
        let p = problem(&[0.0, 0.0, 1.0], vec![edge(0, 1, 1), edge(1, 2, 1), edge(2, 0, 1)], &[2], 2, None);
        assert_eq!(check_walk(&p, &[0, 1]), Ok(()));
        assert_eq!(check_walk(&p, &[0]), Err(ConstraintViolation::SingleAction(1)));
        assert_eq!(check_walk(&p, &[0, 1, 2]), Err(ConstraintViolation::SingleAction(2)));
        assert_eq!(check_walk(&p, &[1, 1]), Err(ConstraintViolation::Start));
        assert_eq!(check_walk(&p, &[0, 0]), Err(ConstraintViolation::Goal));
        assert!(matches!(check_walk(&p, &[0, 2]), Err(ConstraintViolation::Goal)));
        let loose = problem(&[0.0, 0.0, 1.0], p.edges.clone(), &[1, 2], 2, None);
        assert!(matches!(check_walk(&loose, &[0, 0]), Err(ConstraintViolation::Flow { .. })));
        assert_eq!(check_walk(&p, &[9, 1]), Err(ConstraintViolation::UnknownEdge(9)));
    }

    #[test]
    fn json_roundtrip() {
        let p = problem(&[0.0, 1.0], vec![edge(0, 1, 1)], &[1], 1, Some(3));
        let text = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<PathSelectionProblem>(&text).unwrap(), p);
        let s = solve(&p).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<PathSolution>(&text).unwrap(), s);
    }

    fn arb_problem() -> impl Strategy<Value = PathSelectionProblem> {
        (2usize..=6, 1usize..=2)
            .prop_flat_map(|(n, dims)| {
                (
                    Just(n),
                    prop::collection::vec(prop::sample::select(vec![-1.0, 0.0, 1.0]), n),
                    prop::collection::vec((0..n, 0..n, prop::collection::vec(0u32..=3, dims)), 0..=10),
                    prop::collection::btree_set(0..n, 1..=2),
                    1u32..=5,
                    prop::option::of(prop::collection::vec(0u32..=10, dims)),
                )
            })
            .prop_map(|(_, rewards, edges, terminals, horizon, budget)| PathSelectionProblem {
                node_rewards: rewards,
                edges: edges
                    .into_iter()
                    .map(|(s, t, c)| SelectionEdge {
                        src: s,
                        tgt: t,
                        cost: Budget::new(c),
                        absorbing: false,
                        action: None,
                    })
                    .collect(),
                root: 0,
                terminals,
                horizon,
                budget: budget.map(Budget::new),
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn solver_matches_enumeration(p in arb_problem()) {
            let a = solve(&p).unwrap();
            let b = enumerate_oracle(&p).unwrap();
            prop_assert_eq!(&a, &b);
            if a.is_optimal() {
                prop_assert_eq!(check_walk(&p, &a.walk), Ok(()));
                prop_assert_eq!(a.walk.len(), p.horizon as usize);
            }
        }

        #[test]
        fn larger_budget_never_hurts(p in arb_problem(), extra in 0u32..4) {
            prop_assume!(p.budget.is_some());
            let a = solve(&p).unwrap();
            let bigger = p.budget.as_ref().unwrap().components().iter().map(|c| c + extra).collect();
            let b = solve(&PathSelectionProblem { budget: Some(Budget::new(bigger)), ..p.clone() }).unwrap();
            if a.is_optimal() {
                prop_assert!(b.is_optimal());
                prop_assert!(b.objective >= a.objective);
            }
        }

        #[test]
        fn padding_past_arrival_keeps_objective(p in arb_problem(), pad in 1u32..3) {
            let p = with_goal_loop(p);
            let a = solve(&p).unwrap();
            let b = solve(&p.with_horizon(p.horizon + pad)).unwrap();
            if a.is_optimal() {
                prop_assert!(b.is_optimal());
                prop_assert!(b.objective >= a.objective);
            }
        }
    }
}
