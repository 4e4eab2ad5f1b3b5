//! Deterministic Sokoban with 0-based coordinates, `y` increasing upward.
//!
//! Walls and goals live in a shared [`Board`]; a [`SokobanState`] adds the
//! player and the lexicographically sorted box list, which together form the
//! canonical key used for hashing and plan-graph merging.

mod generate;
mod render;

use std::collections::BTreeSet;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::budget::Budget;

pub use generate::{generate_instance, GenerationError, GeneratorConfig};
pub use render::parse_ascii;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    U,
    D,
    L,
    R,
}

impl Action {
    /// Global expansion and tie-break order.
    pub const ALL: [Action; 4] = [Action::U, Action::D, Action::L, Action::R];

    pub fn delta(self) -> (i32, i32) {
        match self {
            Action::U => (0, 1),
            Action::D => (0, -1),
            Action::L => (-1, 0),
            Action::R => (1, 0),
        }
    }

    pub fn opposite(self) -> Action {
        match self {
            Action::U => Action::D,
            Action::D => Action::U,
            Action::L => Action::R,
            Action::R => Action::L,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_char(self) -> char {
        match self {
            Action::U => 'U',
            Action::D => 'D',
            Action::L => 'L',
            Action::R => 'R',
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown action {0:?}; expected one of U, D, L, R")]
pub struct ParseActionError(String);

impl FromStr for Action {
    type Err = ParseActionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "U" | "u" => Ok(Action::U),
            "D" | "d" => Ok(Action::D),
            "L" | "l" => Ok(Action::L),
            "R" | "r" => Ok(Action::R),
            other => Err(ParseActionError(other.to_string())),
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(i32, i32)", into = "(i32, i32)")]
pub struct Pos {
    pub x: i32,
    pub y: i32,
}

impl Pos {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn offset(self, action: Action) -> Pos {
        let (dx, dy) = action.delta();
        Pos::new(self.x + dx, self.y + dy)
    }
}

impl From<(i32, i32)> for Pos {
    fn from((x, y): (i32, i32)) -> Self {
        Pos::new(x, y)
    }
}

impl From<Pos> for (i32, i32) {
    fn from(p: Pos) -> Self {
        (p.x, p.y)
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StateError {
    #[error("cell {0} lies outside the {1}x{2} board")]
    OutOfBounds(Pos, i32, i32),
    #[error("perimeter cell {0} is not a wall")]
    OpenPerimeter(Pos),
    #[error("player at {0} overlaps a wall")]
    PlayerOnWall(Pos),
    #[error("box at {0} overlaps a wall")]
    BoxOnWall(Pos),
    #[error("goal at {0} overlaps a wall")]
    GoalOnWall(Pos),
    #[error("player at {0} overlaps a box")]
    PlayerOnBox(Pos),
    #[error("duplicate box at {0}")]
    DuplicateBox(Pos),
    #[error("{boxes} boxes but {goals} goals")]
    BoxGoalCountMismatch { boxes: usize, goals: usize },
    #[error("board must be at least 3x3, got {0}x{1}")]
    TooSmall(i32, i32),
    #[error("malformed grid: {0}")]
    Grid(String),
}

/// Static part of a puzzle: dimensions, walls and goals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Board {
    width: i32,
    height: i32,
    walls: Vec<bool>,
    goals: Vec<bool>,
}

impl Board {
    /// Builds a board whose perimeter must be fully walled.
    pub fn new(
        width: i32,
        height: i32,
        walls: impl IntoIterator<Item = Pos>,
        goals: impl IntoIterator<Item = Pos>,
    ) -> Result<Self, StateError> {
        if width < 3 || height < 3 {
            return Err(StateError::TooSmall(width, height));
        }
        let n = (width * height) as usize;
        let mut board = Board {
            width,
            height,
            walls: vec![false; n],
            goals: vec![false; n],
        };
        for w in walls {
            let i = board.index(w).ok_or(StateError::OutOfBounds(w, width, height))?;
            board.walls[i] = true;
        }
        for g in goals {
            let i = board.index(g).ok_or(StateError::OutOfBounds(g, width, height))?;
            if board.walls[i] {
                return Err(StateError::GoalOnWall(g));
            }
            board.goals[i] = true;
        }
        for x in 0..width {
            for y in 0..height {
                let p = Pos::new(x, y);
                let edge = x == 0 || y == 0 || x == width - 1 || y == height - 1;
                if edge && !board.is_wall(p) {
                    return Err(StateError::OpenPerimeter(p));
                }
            }
        }
        Ok(board)
    }

    /// An empty room: perimeter walls only, no goals.
    pub fn open_room(width: i32, height: i32) -> Result<Self, StateError> {
        let walls = (0..width)
            .flat_map(|x| (0..height).map(move |y| Pos::new(x, y)))
            .filter(|p| p.x == 0 || p.y == 0 || p.x == width - 1 || p.y == height - 1);
        Board::new(width, height, walls, [])
    }

    pub fn width(&self) -> i32 {
        self.width
    }

    pub fn height(&self) -> i32 {
        self.height
    }

    fn index(&self, p: Pos) -> Option<usize> {
        (p.x >= 0 && p.y >= 0 && p.x < self.width && p.y < self.height)
            .then(|| (p.y * self.width + p.x) as usize)
    }

    /// Out-of-bounds cells count as walls.
    pub fn is_wall(&self, p: Pos) -> bool {
        self.index(p).is_none_or(|i| self.walls[i])
    }

    pub fn is_goal(&self, p: Pos) -> bool {
        self.index(p).is_some_and(|i| self.goals[i])
    }

    fn cells(&self) -> impl Iterator<Item = Pos> + '_ {
        (0..self.width).flat_map(move |x| (0..self.height).map(move |y| Pos::new(x, y)))
    }

    pub fn walls(&self) -> BTreeSet<Pos> {
        self.cells().filter(|&p| self.is_wall(p)).collect()
    }

    pub fn goals(&self) -> BTreeSet<Pos> {
        self.cells().filter(|&p| self.is_goal(p)).collect()
    }

    pub fn floor_cells(&self) -> Vec<Pos> {
        let mut v: Vec<Pos> = self.cells().filter(|&p| !self.is_wall(p)).collect();
        v.sort();
        v
    }
}

/// Puzzle configuration. Equality and hashing use `(player, boxes)` plus board
/// identity, so states of one instance hash cheaply.
#[derive(Clone, Debug)]
pub struct SokobanState {
    board: Arc<Board>,
    player: Pos,
    boxes: Vec<Pos>,
}

impl PartialEq for SokobanState {
    fn eq(&self, other: &Self) -> bool {
        self.player == other.player
            && self.boxes == other.boxes
            && (Arc::ptr_eq(&self.board, &other.board) || self.board == other.board)
    }
}

impl Eq for SokobanState {}

impl Hash for SokobanState {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.player.hash(state);
        self.boxes.hash(state);
    }
}

impl SokobanState {
    pub fn new(
        board: Arc<Board>,
        player: Pos,
        boxes: impl IntoIterator<Item = Pos>,
    ) -> Result<Self, StateError> {
        let mut boxes: Vec<Pos> = boxes.into_iter().collect();
        boxes.sort();
        if board.is_wall(player) {
            return Err(StateError::PlayerOnWall(player));
        }
        for w in boxes.windows(2) {
            if w[0] == w[1] {
                return Err(StateError::DuplicateBox(w[0]));
            }
        }
        for &b in &boxes {
            if board.is_wall(b) {
                return Err(StateError::BoxOnWall(b));
            }
        }
        if boxes.contains(&player) {
            return Err(StateError::PlayerOnBox(player));
        }
        let goals = board.goals.iter().filter(|&&g| g).count();
        if goals != boxes.len() {
            return Err(StateError::BoxGoalCountMismatch {
                boxes: boxes.len(),
                goals,
            });
        }
        Ok(Self {
            board,
            player,
            boxes,
        })
    }

    pub fn board(&self) -> &Arc<Board> {
        &self.board
    }

    pub fn player(&self) -> Pos {
        self.player
    }

    pub fn boxes(&self) -> &[Pos] {
        &self.boxes
    }

    pub fn has_box(&self, p: Pos) -> bool {
        self.boxes.binary_search(&p).is_ok()
    }

    pub fn same_board(&self, other: &SokobanState) -> bool {
        Arc::ptr_eq(&self.board, &other.board) || self.board == other.board
    }

    /// Compact canonical identifier, e.g. `p1,1|b2,1;3,3`.
    pub fn state_id(&self) -> String {
        let mut s = format!("p{},{}|b", self.player.x, self.player.y);
        for (i, b) in self.boxes.iter().enumerate() {
            if i > 0 {
                s.push(';');
            }
            s.push_str(&format!("{},{}", b.x, b.y));
        }
        s
    }

    /// Text observation in the prompt style used by plan-graph exports.
    pub fn observation(&self) -> String {
        let boxes: Vec<String> = self.boxes.iter().map(|b| b.to_string()).collect();
        format!("player at {}; boxes at {}", self.player, boxes.join(", "))
    }

    pub fn step(&self, action: Action) -> Transition {
        step(self, action)
    }

    pub fn is_solved(&self) -> bool {
        is_solved(self)
    }
}

/// Result of applying one action.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transition {
    pub state: SokobanState,
    pub moved: bool,
    pub pushed: bool,
}

/// Applies one move or push. Blocked actions are legal no-ops with `moved = false`.
pub fn step(state: &SokobanState, action: Action) -> Transition {
    let target = state.player.offset(action);
    let unchanged = || Transition {
        state: state.clone(),
        moved: false,
        pushed: false,
    };
    if state.board.is_wall(target) {
        return unchanged();
    }
    match state.boxes.binary_search(&target) {
        Err(_) => Transition {
            state: SokobanState {
                board: Arc::clone(&state.board),
                player: target,
                boxes: state.boxes.clone(),
            },
            moved: true,
            pushed: false,
        },
        Ok(i) => {
            let behind = target.offset(action);
            if state.board.is_wall(behind) || state.has_box(behind) {
                return unchanged();
            }
            let mut boxes = state.boxes.clone();
            boxes[i] = behind;
            boxes.sort();
            Transition {
                state: SokobanState {
                    board: Arc::clone(&state.board),
                    player: target,
                    boxes,
                },
                moved: true,
                pushed: true,
            }
        }
    }
}

/// Goal test: every box rests on a goal (vacuously true with no boxes).
pub fn is_solved(state: &SokobanState) -> bool {
    state.boxes.iter().all(|&b| state.board.is_goal(b))
}

/// Serialized state layout: walls, player, boxes, goals.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateRepr {
    pub walls: Vec<Pos>,
    pub player: Pos,
    pub boxes: Vec<Pos>,
    pub goals: Vec<Pos>,
}

impl StateRepr {
    pub fn into_state(self) -> Result<SokobanState, StateError> {
        let width = self.walls.iter().map(|p| p.x).max().unwrap_or(-1) + 1;
        let height = self.walls.iter().map(|p| p.y).max().unwrap_or(-1) + 1;
        let board = Board::new(width, height, self.walls, self.goals)?;
        SokobanState::new(Arc::new(board), self.player, self.boxes)
    }
}

impl From<&SokobanState> for StateRepr {
    fn from(s: &SokobanState) -> Self {
        StateRepr {
            walls: s.board.walls().into_iter().collect(),
            player: s.player,
            boxes: s.boxes.clone(),
            goals: s.board.goals().into_iter().collect(),
        }
    }
}

impl Serialize for SokobanState {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        StateRepr::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SokobanState {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        StateRepr::deserialize(deserializer)?
            .into_state()
            .map_err(serde::de::Error::custom)
    }
}

/// A generated or loaded puzzle together with its oracle-optimal length and budget.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SokobanInstance {
    pub initial: SokobanState,
    pub optimal_length: u32,
    pub budget: Budget,
}

impl SokobanInstance {
    pub fn with_slack(initial: SokobanState, optimal_length: u32, slack: u32) -> Self {
        Self {
            initial,
            optimal_length,
            budget: Budget::steps(optimal_length + slack),
        }
    }

    pub fn slack(&self) -> u32 {
        self.budget.primary().saturating_sub(self.optimal_length)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&InstanceRepr::from(self)).expect("instance serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, InstanceFileError> {
        let repr: InstanceRepr = serde_json::from_str(text)?;
        let initial = StateRepr {
            walls: repr.walls,
            player: repr.player,
            boxes: repr.boxes,
            goals: repr.goals,
        }
        .into_state()?;
        Ok(Self {
            initial,
            optimal_length: repr.optimal_length,
            budget: repr.budget,
        })
    }
}

#[derive(Debug, Error)]
pub enum InstanceFileError {
    #[error("invalid instance JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid instance layout: {0}")]
    State(#[from] StateError),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceRepr {
    walls: Vec<Pos>,
    player: Pos,
    boxes: Vec<Pos>,
    goals: Vec<Pos>,
    optimal_length: u32,
    budget: Budget,
}

impl From<&SokobanInstance> for InstanceRepr {
    fn from(inst: &SokobanInstance) -> Self {
        let s = StateRepr::from(&inst.initial);
        InstanceRepr {
            walls: s.walls,
            player: s.player,
            boxes: s.boxes,
            goals: s.goals,
            optimal_length: inst.optimal_length,
            budget: inst.budget.clone(),
        }
    }
}
