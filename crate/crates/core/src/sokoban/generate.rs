use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Board, Pos, SokobanInstance, SokobanState};
use crate::oracle::{shortest_plan_with, SearchOptions};
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub target_optimal: u32,
    pub boxes: usize,
    pub width: i32,
    pub height: i32,
    pub slack: u32,
    /// Interior wall probability is drawn uniformly from `[0, max_wall_density]` per attempt.
    pub max_wall_density: f64,
    pub max_attempts: u32,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            target_optimal: 6,
            boxes: 1,
            width: 7,
            height: 7,
            slack: 2,
            max_wall_density: 0.3,
            max_attempts: 200_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenerationError {
    #[error("no instance with optimal length {target} after {attempts} attempts")]
    Exhausted { target: u32, attempts: u32 },
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
}

/// Rejection sampler: draw a random walled layout, keep it only if the BFS
/// oracle's optimal length equals the target.
pub fn generate_instance(stream: &RngStream, cfg: &GeneratorConfig) -> Result<SokobanInstance, GenerationError> {
    if cfg.target_optimal == 0 {
        return Err(GenerationError::InvalidConfig("target_optimal must be >= 1".into()));
    }
    if cfg.width < 3 || cfg.height < 3 {
        return Err(GenerationError::InvalidConfig("board needs a walled perimeter and one interior cell".into()));
    }
    let interior = ((cfg.width - 2) * (cfg.height - 2)) as usize;
    if interior < 2 * cfg.boxes + 1 {
        return Err(GenerationError::InvalidConfig(format!(
            "{}x{} board cannot hold {} boxes",
            cfg.width, cfg.height, cfg.boxes
        )));
    }
    let mut rng = stream.rng();
    let perimeter: Vec<Pos> = Board::open_room(cfg.width, cfg.height)
        .expect("validated dimensions")
        .walls()
        .into_iter()
        .collect();
    for _ in 0..cfg.max_attempts {
        let density = rng.gen_range(0.0..=cfg.max_wall_density);
        let mut walls = perimeter.clone();
        let mut free = Vec::with_capacity(interior);
        for x in 1..cfg.width - 1 {
            for y in 1..cfg.height - 1 {
                let p = Pos::new(x, y);
                if rng.gen_bool(density) {
                    walls.push(p);
                } else {
                    free.push(p);
                }
            }
        }
        if free.len() < 2 * cfg.boxes + 1 {
            continue;
        }
        let goals: Vec<Pos> = free.choose_multiple(&mut rng, cfg.boxes).copied().collect();
        let mut picks: Vec<Pos> = free.choose_multiple(&mut rng, cfg.boxes + 1).copied().collect();
        let player = picks.pop().expect("boxes + 1 picks");
        let board = Board::new(cfg.width, cfg.height, walls, goals).expect("perimeter walled");
        let Ok(state) = SokobanState::new(Arc::new(board), player, picks) else {
            continue;
        };
        let opts = SearchOptions {
            max_length: Some(cfg.target_optimal),
            prune_corner_deadlocks: false,
        };
        if let Ok(plan) = shortest_plan_with(&state, opts) {
            if plan.length == cfg.target_optimal {
                return Ok(SokobanInstance::with_slack(state, plan.length, cfg.slack));
            }
        }
    }
    Err(GenerationError::Exhausted {
        target: cfg.target_optimal,
        attempts: cfg.max_attempts,
    })
}
