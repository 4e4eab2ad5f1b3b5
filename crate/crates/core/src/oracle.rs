//! Exact shortest-plan oracle over Sokoban states.
//!
//! [`shortest_plan`] is a plain breadth-first search expanding actions in
//! `U < D < L < R` order, so among equally short plans it returns the
//! lexicographically smallest. [`DistanceTable`] precomputes the same
//! distances for every state reachable from an instance's start by one
//! reverse BFS, which is what the Monte Carlo agents query.

use std::collections::hash_map::Entry;
use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::budget::Budget;
use crate::sokoban::{step, Action, Pos, SokobanState};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OraclePlan {
    pub actions: Vec<Action>,
    pub length: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("no action sequence solves this state")]
pub struct Unsolvable;

#[derive(Debug, Clone, Copy, Default)]
pub struct SearchOptions {
    /// Stop searching beyond this many actions.
    pub max_length: Option<u32>,
    /// Skip states with a non-goal box wedged into a wall corner.
    pub prune_corner_deadlocks: bool,
}

/// Breadth-first shortest plan with `U < D < L < R` tie-breaking.
pub fn shortest_plan(state: &SokobanState) -> Result<OraclePlan, Unsolvable> {
    shortest_plan_with(state, SearchOptions::default())
}

pub fn shortest_plan_with(state: &SokobanState, opts: SearchOptions) -> Result<OraclePlan, Unsolvable> {
    if state.is_solved() {
        return Ok(OraclePlan {
            actions: vec![],
            length: 0,
        });
    }
    // arena of (state, parent index, action from parent, depth)
    let mut arena: Vec<(SokobanState, usize, Action, u32)> = vec![(state.clone(), usize::MAX, Action::U, 0)];
    let mut seen: HashMap<SokobanState, ()> = HashMap::new();
    seen.insert(state.clone(), ());
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        let depth = arena[i].3;
        if opts.max_length.is_some_and(|m| depth >= m) {
            continue;
        }
        for a in Action::ALL {
            let t = step(&arena[i].0, a);
            if !t.moved {
                continue;
            }
            if let Entry::Vacant(v) = seen.entry(t.state.clone()) {
                v.insert(());
                if opts.prune_corner_deadlocks && has_corner_deadlock(&t.state) {
                    continue;
                }
                let solved = t.state.is_solved();
                arena.push((t.state, i, a, depth + 1));
                let child = arena.len() - 1;
                if solved {
                    return Ok(reconstruct(&arena, child));
                }
                queue.push_back(child);
            }
        }
    }
    Err(Unsolvable)
}

fn reconstruct(arena: &[(SokobanState, usize, Action, u32)], mut i: usize) -> OraclePlan {
    let mut actions = Vec::new();
    while arena[i].1 != usize::MAX {
        actions.push(arena[i].2);
        i = arena[i].1;
    }
    actions.reverse();
    OraclePlan {
        length: actions.len() as u32,
        actions,
    }
}

/// A box off-goal with walls on two orthogonal sides can never move again.
pub fn has_corner_deadlock(state: &SokobanState) -> bool {
    let board = state.board();
    state.boxes().iter().any(|&b| {
        if board.is_goal(b) {
            return false;
        }
        let wall = |dx: i32, dy: i32| board.is_wall(Pos::new(b.x + dx, b.y + dy));
        let vertical = wall(0, 1) || wall(0, -1);
        let horizontal = wall(1, 0) || wall(-1, 0);
        vertical && horizontal
    })
}

/// Per-action viability under a remaining budget.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViabilityVerdict {
    /// Indexed by [`Action::index`].
    pub distance_after: [Option<u32>; 4],
    pub viable: [bool; 4],
}

impl ViabilityVerdict {
    pub fn is_viable(&self, a: Action) -> bool {
        self.viable[a.index()]
    }

    pub fn distance_after(&self, a: Action) -> Option<u32> {
        self.distance_after[a.index()]
    }

    pub fn viable_actions(&self) -> Vec<Action> {
        Action::ALL.into_iter().filter(|&a| self.is_viable(a)).collect()
    }

    pub fn non_viable_actions(&self) -> Vec<Action> {
        Action::ALL.into_iter().filter(|&a| !self.is_viable(a)).collect()
    }
}

/// Goal distance `b(s)`; `None` means unsolvable.
pub trait DistanceOracle: Sync {
    fn distance(&self, state: &SokobanState) -> Option<u32>;

    /// First action of the tie-broken shortest plan.
    fn first_action(&self, state: &SokobanState) -> Option<Action> {
        let d = self.distance(state)?;
        if d == 0 {
            return None;
        }
        Action::ALL
            .into_iter()
            .find(|&a| self.distance(&step(state, a).state) == Some(d - 1))
    }

    fn plan(&self, state: &SokobanState) -> Result<OraclePlan, Unsolvable> {
        let d = self.distance(state).ok_or(Unsolvable)?;
        let mut actions = Vec::with_capacity(d as usize);
        let mut cur = state.clone();
        while let Some(a) = self.first_action(&cur) {
            actions.push(a);
            cur = step(&cur, a).state;
        }
        Ok(OraclePlan { actions, length: d })
    }

    /// An action is viable iff `b(step(s, a)) + 1 <= remaining`.
    fn viable_actions(&self, state: &SokobanState, remaining: &Budget) -> ViabilityVerdict {
        let limit = remaining.primary() as u64;
        let mut distance_after = [None; 4];
        let mut viable = [false; 4];
        for a in Action::ALL {
            let d = self.distance(&step(state, a).state);
            distance_after[a.index()] = d;
            viable[a.index()] = d.is_some_and(|d| (d as u64) < limit);
        }
        ViabilityVerdict { distance_after, viable }
    }

    fn is_viable(&self, state: &SokobanState, action: Action, remaining: &Budget) -> bool {
        self.distance(&step(state, action).state)
            .is_some_and(|d| (d as u64) < remaining.primary() as u64)
    }

    /// Unsolvable, or not solvable within `remaining`.
    fn is_dead_end(&self, state: &SokobanState, remaining: &Budget) -> bool {
        self.distance(state).is_none_or(|d| d > remaining.primary())
    }
}

/// Runs a fresh BFS per query.
#[derive(Debug, Clone, Copy, Default)]
pub struct BfsOracle;

impl DistanceOracle for BfsOracle {
    fn distance(&self, state: &SokobanState) -> Option<u32> {
        shortest_plan(state).ok().map(|p| p.length)
    }

    fn plan(&self, state: &SokobanState) -> Result<OraclePlan, Unsolvable> {
        shortest_plan(state)
    }
}

pub fn viable_actions(state: &SokobanState, remaining: &Budget) -> ViabilityVerdict {
    BfsOracle.viable_actions(state, remaining)
}

pub fn is_dead_end(state: &SokobanState, remaining: &Budget) -> bool {
    BfsOracle.is_dead_end(state, remaining)
}

/// Exact goal distances for the closure of states reachable from a start state.
///
/// States outside the closure (for example hallucinated plan states) fall
/// back to a live BFS.
#[derive(Debug, Clone)]
pub struct DistanceTable {
    root: SokobanState,
    distances: HashMap<SokobanState, Option<u32>>,
}

impl DistanceTable {
    pub fn build(root: &SokobanState) -> Self {
        let mut index: HashMap<SokobanState, usize> = HashMap::new();
        let mut states = vec![root.clone()];
        index.insert(root.clone(), 0);
        let mut predecessors: Vec<Vec<usize>> = vec![vec![]];
        let mut i = 0;
        while i < states.len() {
            for a in Action::ALL {
                let t = step(&states[i], a);
                if !t.moved {
                    continue;
                }
                let j = match index.entry(t.state) {
                    Entry::Occupied(o) => *o.get(),
                    Entry::Vacant(v) => {
                        let j = states.len();
                        states.push(v.key().clone());
                        v.insert(j);
                        predecessors.push(vec![]);
                        j
                    }
                };
                predecessors[j].push(i);
            }
            i += 1;
        }
        let mut dist: Vec<Option<u32>> = vec![None; states.len()];
        let mut queue = VecDeque::new();
        for (k, s) in states.iter().enumerate() {
            if s.is_solved() {
                dist[k] = Some(0);
                queue.push_back(k);
            }
        }
        while let Some(k) = queue.pop_front() {
            let d = dist[k].expect("queued states have distances");
            for &p in &predecessors[k] {
                if dist[p].is_none() {
                    dist[p] = Some(d + 1);
                    queue.push_back(p);
                }
            }
        }
        let distances = states.into_iter().zip(dist).collect();
        Self {
            root: root.clone(),
            distances,
        }
    }

    pub fn root(&self) -> &SokobanState {
        &self.root
    }

    pub fn len(&self) -> usize {
        self.distances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distances.is_empty()
    }

    pub fn contains(&self, state: &SokobanState) -> bool {
        self.distances.contains_key(state)
    }
}

impl DistanceOracle for DistanceTable {
    fn distance(&self, state: &SokobanState) -> Option<u32> {
        if state.same_board(&self.root) {
            if let Some(d) = self.distances.get(state) {
                return *d;
            }
        }
        BfsOracle.distance(state)
    }
}
