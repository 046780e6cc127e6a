use serde::{Deserialize, Serialize};

use super::{EpisodicMdp, MdpBuilder};
use crate::error::{Error, Result};

/// The bundled 6x9 map.
pub const DEFAULT_LAYOUT: &str = include_str!("../../fixtures/frozenlake_6x9.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Start,
    Frozen,
    Hole,
    Goal,
}

/// Actions, in the usual Frozen Lake order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Move {
    Left = 0,
    Down = 1,
    Right = 2,
    Up = 3,
}

impl Move {
    pub const ALL: [Move; 4] = [Move::Left, Move::Down, Move::Right, Move::Up];

    fn delta(self) -> (isize, isize) {
        match self {
            Move::Left => (0, -1),
            Move::Down => (1, 0),
            Move::Right => (0, 1),
            Move::Up => (-1, 0),
        }
    }

    fn perpendicular(self) -> [Move; 2] {
        match self {
            Move::Left | Move::Right => [Move::Up, Move::Down],
            Move::Up | Move::Down => [Move::Left, Move::Right],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrozenLakeParams {
    /// Probability of moving in the chosen direction; the rest is split
    /// evenly between the two perpendicular directions.
    pub move_prob: f64,
    pub step_reward: f64,
    pub hole_reward: f64,
    pub goal_reward: f64,
    pub cap: usize,
}

impl Default for FrozenLakeParams {
    fn default() -> Self {
        Self {
            move_prob: 0.9,
            step_reward: -0.25,
            hole_reward: -10.0,
            goal_reward: 10.0,
            cap: 100,
        }
    }
}

/// A grid world compiled to an [`EpisodicMdp`]. State 0 is the absorbing
/// terminal; cell `(r, c)` is state `1 + r * cols + c`. Entering a hole or
/// the goal moves straight to the terminal state.
#[derive(Debug, Clone)]
pub struct FrozenLake {
    rows: usize,
    cols: usize,
    cells: Vec<Cell>,
    mdp: EpisodicMdp,
}

impl FrozenLake {
    pub fn new(layout: &str, params: FrozenLakeParams) -> Result<Self> {
        let mut grid: Vec<Vec<Cell>> = Vec::new();
        for line in layout.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .chars()
                .map(|ch| match ch {
                    'S' => Ok(Cell::Start),
                    'F' => Ok(Cell::Frozen),
                    'H' => Ok(Cell::Hole),
                    'G' => Ok(Cell::Goal),
                    other => Err(Error::Layout(format!("unknown cell {other:?}"))),
                })
                .collect::<Result<Vec<_>>>()?;
            grid.push(row);
        }
        let rows = grid.len();
        if rows == 0 {
            return Err(Error::Layout("empty layout".into()));
        }
        let cols = grid[0].len();
        if grid.iter().any(|r| r.len() != cols) {
            return Err(Error::Layout("rows have different lengths".into()));
        }
        let cells: Vec<Cell> = grid.into_iter().flatten().collect();
        let n_start = cells.iter().filter(|&&c| c == Cell::Start).count();
        if n_start != 1 {
            return Err(Error::Layout(format!("expected one start cell, found {n_start}")));
        }
        if !cells.contains(&Cell::Goal) {
            return Err(Error::Layout("no goal cell".into()));
        }
        if !(params.move_prob > 0.0 && params.move_prob <= 1.0) {
            return Err(Error::Layout(format!("move probability {} outside (0, 1]", params.move_prob)));
        }

        let start = cells.iter().position(|&c| c == Cell::Start).unwrap();
        let mut b = MdpBuilder::new(1 + rows * cols, Move::ALL.len())
            .start(1 + start)
            .terminal(0)
            .cap(params.cap);
        let side = (1.0 - params.move_prob) / 2.0;
        for r in 0..rows {
            for c in 0..cols {
                let state = 1 + r * cols + c;
                let here = cells[r * cols + c];
                for mv in Move::ALL {
                    if matches!(here, Cell::Hole | Cell::Goal) {
                        // unreachable: entering these cells ends the episode
                        b.add(state, mv as usize, 0, 1.0, 0.0)?;
                        continue;
                    }
                    let [p1, p2] = mv.perpendicular();
                    for (dir, prob) in [(mv, params.move_prob), (p1, side), (p2, side)] {
                        let (nr, nc) = step(rows, cols, r, c, dir);
                        let (next, reward) = match cells[nr * cols + nc] {
                            Cell::Hole => (0, params.hole_reward),
                            Cell::Goal => (0, params.goal_reward),
                            Cell::Start | Cell::Frozen => (1 + nr * cols + nc, params.step_reward),
                        };
                        b.add(state, mv as usize, next, prob, reward)?;
                    }
                }
            }
        }
        Ok(Self {
            rows,
            cols,
            cells,
            mdp: b.build()?,
        })
    }

    pub fn default_map(params: FrozenLakeParams) -> Result<Self> {
        Self::new(DEFAULT_LAYOUT, params)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell(&self, r: usize, c: usize) -> Cell {
        self.cells[r * self.cols + c]
    }

    pub fn state_of(&self, r: usize, c: usize) -> usize {
        1 + r * self.cols + c
    }

    pub fn mdp(&self) -> &EpisodicMdp {
        &self.mdp
    }

    pub fn into_mdp(self) -> EpisodicMdp {
        self.mdp
    }
}

fn step(rows: usize, cols: usize, r: usize, c: usize, mv: Move) -> (usize, usize) {
    let (dr, dc) = mv.delta();
    let nr = r as isize + dr;
    let nc = c as isize + dc;
    if nr < 0 || nc < 0 || nr >= rows as isize || nc >= cols as isize {
        (r, c)
    } else {
        (nr as usize, nc as usize)
    }
}
