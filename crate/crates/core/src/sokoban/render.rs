use std::sync::Arc;

use super::{Board, Pos, SokobanState, StateError};

// '#' wall, '@' player, '+' player on goal, '$' box, '*' box on goal,
// 'G' goal, '.' floor. Rows are printed top (max y) to bottom (y = 0).

impl SokobanState {
    pub fn render(&self) -> String {
        let board = self.board();
        let mut out = String::new();
        for y in (0..board.height()).rev() {
            for x in 0..board.width() {
                let p = Pos::new(x, y);
                let goal = board.is_goal(p);
                let c = if board.is_wall(p) {
                    '#'
                } else if self.player() == p {
                    if goal {
                        '+'
                    } else {
                        '@'
                    }
                } else if self.has_box(p) {
                    if goal {
                        '*'
                    } else {
                        '$'
                    }
                } else if goal {
                    'G'
                } else {
                    '.'
                };
                out.push(c);
            }
            out.push('\n');
        }
        out
    }
}

/// Parses the grid produced by [`SokobanState::render`].
pub fn parse_ascii(text: &str) -> Result<SokobanState, StateError> {
    let rows: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let height = rows.len() as i32;
    let width = rows.first().map_or(0, |r| r.chars().count()) as i32;
    let (mut walls, mut goals, mut boxes, mut player) = (vec![], vec![], vec![], None);
    for (row, line) in rows.iter().enumerate() {
        if line.chars().count() as i32 != width {
            return Err(StateError::Grid(format!("row {row} has a different width")));
        }
        let y = height - 1 - row as i32;
        for (x, c) in line.chars().enumerate() {
            let p = Pos::new(x as i32, y);
            match c {
                '#' => walls.push(p),
                '.' | ' ' => {}
                'G' => goals.push(p),
                '$' => boxes.push(p),
                '*' => {
                    boxes.push(p);
                    goals.push(p);
                }
                '@' | '+' => {
                    if player.replace(p).is_some() {
                        return Err(StateError::Grid("more than one player".into()));
                    }
                    if c == '+' {
                        goals.push(p);
                    }
                }
                other => return Err(StateError::Grid(format!("unknown cell {other:?} at {p}"))),
            }
        }
    }
    let player = player.ok_or_else(|| StateError::Grid("no player".into()))?;
    let board = Board::new(width, height, walls, goals)?;
    SokobanState::new(Arc::new(board), player, boxes)
}
