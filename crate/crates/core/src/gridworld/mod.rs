//! Gridworld with `k` functionally-equivalent variants of each move.
//!
//! Cells are addressed `[x, y]` with `x` growing to the right and `y`
//! downwards; state index is `y * width + x`, and the absorbing sink is the
//! last state, `width * height`.

mod demos;
mod expert;

use std::collections::VecDeque;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mdp::TabularMdp;

pub use demos::{collect_demos, DemoMeta, DemoRecord, Demonstration};
pub use expert::{train_expert, value_iteration, MAX_LOGIT_GAP};

pub type Cell = [usize; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Left = 0,
    Right = 1,
    Up = 2,
    Down = 3,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Left, Direction::Right, Direction::Up, Direction::Down];

    pub fn code(self) -> usize {
        self as usize
    }

    fn delta(self) -> (isize, isize) {
        match self {
            Direction::Left => (-1, 0),
            Direction::Right => (1, 0),
            Direction::Up => (0, -1),
            Direction::Down => (0, 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridAction {
    pub direction: Direction,
    pub variant: usize,
}

impl GridAction {
    pub fn flat(self) -> usize {
        4 * self.variant + self.direction.code()
    }

    pub fn from_flat(index: usize, k_choices: usize) -> Result<Self> {
        if index >= 4 * k_choices {
            return Err(Error::InvalidGrid(format!(
                "action {index} out of range for k = {k_choices}"
            )));
        }
        Ok(GridAction {
            direction: Direction::ALL[index % 4],
            variant: index / 4,
        })
    }
}

fn default_goal_reward() -> f64 {
    100.0
}
fn default_original_penalty() -> f64 {
    -1.0
}
fn default_variant_penalty() -> f64 {
    -5.0
}
fn default_max_steps() -> usize {
    100
}
fn default_gamma() -> f64 {
    0.99
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub walls: Vec<Cell>,
    pub start: Cell,
    pub goal: Cell,
    pub k_choices: usize,
    #[serde(default = "default_goal_reward")]
    pub goal_reward: f64,
    #[serde(default = "default_original_penalty")]
    pub original_penalty: f64,
    #[serde(default = "default_variant_penalty")]
    pub variant_penalty: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Opposite edges are joined (torus). Without boundaries and walls every
    /// move from a cell reaches a different neighbour, so `k = 1` dynamics
    /// are injective.
    #[serde(default)]
    pub wrap: bool,
}

impl GridSpec {
    /// The 7x7 reference maze used by the shipped experiment configs.
    pub fn reference(k_choices: usize) -> Self {
        GridSpec {
            width: 7,
            height: 7,
            walls: vec![
                [1, 1], [5, 1],
                [0, 2], [1, 2], [2, 2], [3, 2], [5, 2],
                [1, 4], [4, 4], [5, 4], [6, 4],
                [1, 5],
                [1, 6],
            ],
            start: [0, 0],
            goal: [6, 6],
            k_choices,
            goal_reward: default_goal_reward(),
            original_penalty: default_original_penalty(),
            variant_penalty: default_variant_penalty(),
            max_steps: default_max_steps(),
            gamma: default_gamma(),
            wrap: false,
        }
    }

    /// Open torus grid without walls.
    pub fn open_torus(width: usize, height: usize, k_choices: usize) -> Self {
        GridSpec {
            width,
            height,
            walls: Vec::new(),
            start: [0, 0],
            goal: [width / 2, height / 2],
            k_choices,
            goal_reward: default_goal_reward(),
            original_penalty: default_original_penalty(),
            variant_penalty: default_variant_penalty(),
            max_steps: default_max_steps(),
            gamma: default_gamma(),
            wrap: true,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.width * self.height
    }

    pub fn n_states(&self) -> usize {
        self.n_cells() + 1
    }

    pub fn n_actions(&self) -> usize {
        4 * self.k_choices
    }

    pub fn sink(&self) -> usize {
        self.n_cells()
    }

    pub fn index(&self, cell: Cell) -> usize {
        cell[1] * self.width + cell[0]
    }

    pub fn cell(&self, index: usize) -> Cell {
        [index % self.width, index / self.width]
    }

    pub fn is_wall(&self, cell: Cell) -> bool {
        self.walls.contains(&cell)
    }

    fn in_bounds(&self, cell: Cell) -> bool {
        cell[0] < self.width && cell[1] < self.height
    }

    /// Cell reached by one move, before wall handling.
    fn shifted(&self, cell: Cell, direction: Direction) -> Option<Cell> {
        let (dx, dy) = direction.delta();
        let (w, h) = (self.width as isize, self.height as isize);
        let (mut x, mut y) = (cell[0] as isize + dx, cell[1] as isize + dy);
        if self.wrap {
            x = x.rem_euclid(w);
            y = y.rem_euclid(h);
        } else if x < 0 || y < 0 || x >= w || y >= h {
            return None;
        }
        Some([x as usize, y as usize])
    }

    /// Blocked moves leave the agent in place.
    pub fn move_cell(&self, cell: Cell, direction: Direction) -> Cell {
        match self.shifted(cell, direction) {
            Some(next) if !self.is_wall(next) => next,
            _ => cell,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidGrid(m));
        if self.width == 0 || self.height == 0 {
            return bad("width and height must be positive".into());
        }
        if self.k_choices == 0 {
            return bad("k_choices must be at least 1".into());
        }
        if self.max_steps == 0 {
            return bad("max_steps must be at least 1".into());
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        for (name, cell) in [("start", self.start), ("goal", self.goal)] {
            if !self.in_bounds(cell) {
                return bad(format!("{name} {cell:?} is outside the grid"));
            }
            if self.is_wall(cell) {
                return bad(format!("{name} {cell:?} is a wall"));
            }
        }
        if let Some(w) = self.walls.iter().find(|w| !self.in_bounds(**w)) {
            return bad(format!("wall {w:?} is outside the grid"));
        }
        if self.start == self.goal {
            return bad("start and goal coincide".into());
        }
        if self.shortest_path_len().is_none() {
            return bad(format!("goal {:?} is unreachable from start {:?}", self.goal, self.start));
        }
        Ok(())
    }

    /// Breadth-first distance in moves from start to goal.
    pub fn shortest_path_len(&self) -> Option<usize> {
        let mut dist = vec![usize::MAX; self.n_cells()];
        let mut queue = VecDeque::new();
        dist[self.index(self.start)] = 0;
        queue.push_back(self.start);
        while let Some(cell) = queue.pop_front() {
            let d = dist[self.index(cell)];
            if cell == self.goal {
                return Some(d);
            }
            for dir in Direction::ALL {
                let next = self.move_cell(cell, dir);
                let i = self.index(next);
                if dist[i] == usize::MAX {
                    dist[i] = d + 1;
                    queue.push_back(next);
                }
            }
        }
        None
    }

    /// Short stable hash of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_string(self).expect("grid spec serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    fn step_reward(&self, variant: usize) -> f64 {
        if variant == 0 {
            self.original_penalty
        } else {
            self.variant_penalty
        }
    }
}

/// Exports the grid as a tabular MDP over all cells plus the sink.
///
/// Entering the goal moves straight to the sink and pays `goal_reward` on top
/// of the move penalty, so an `L`-move path returns `goal_reward - L` with
/// original moves only. Wall cells and the goal cell itself are
/// unreachable; they keep valid rows (walls self-loop, the goal forwards to
/// the sink) so the tensor is total.
pub fn build_gridworld(spec: &GridSpec) -> Result<TabularMdp> {
    spec.validate()?;
    let (ns, na) = (spec.n_states(), spec.n_actions());
    let sink = spec.sink();
    let mut transition = vec![0.0; ns * na * ns];
    let mut reward = vec![0.0; ns * na];
    for s in 0..ns {
        for a in 0..na {
            let action = GridAction::from_flat(a, spec.k_choices)?;
            let (next, r) = if s == sink {
                (sink, 0.0)
            } else {
                let cell = spec.cell(s);
                let penalty = spec.step_reward(action.variant);
                if cell == spec.goal {
                    (sink, penalty)
                } else if spec.is_wall(cell) {
                    (s, penalty)
                } else {
                    let moved = spec.move_cell(cell, action.direction);
                    if moved == spec.goal {
                        (sink, spec.goal_reward + penalty)
                    } else {
                        (spec.index(moved), penalty)
                    }
                }
            };
            transition[(s * na + a) * ns + next] = 1.0;
            reward[s * na + a] = r;
        }
    }
    let mut init = vec![0.0; ns];
    init[spec.index(spec.start)] = 1.0;
    let mut terminal = vec![false; ns];
    terminal[sink] = true;
    TabularMdp::from_flat(spec.gamma, init, terminal, transition, Some(reward), ns, na)
}

/// A grid spec together with its exported MDP.
#[derive(Debug, Clone)]
pub struct GridWorld {
    pub spec: GridSpec,
    pub mdp: TabularMdp,
}

impl GridWorld {
    pub fn new(spec: GridSpec) -> Result<Self> {
        let mdp = build_gridworld(&spec)?;
        Ok(GridWorld { spec, mdp })
    }

    pub fn env(&self, seed: u64) -> GridEnv<'_> {
        GridEnv::new(&self.mdp, self.spec.max_steps, seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next: usize,
    pub reward: f64,
    /// The sink was entered or the step budget ran out.
    pub done: bool,
    /// Ended by the step budget rather than by reaching the sink.
    pub truncated: bool,
}

/// Samples a successor of `(s, a)`. One-hot rows consume no randomness.
pub fn sample_next<R: Rng + ?Sized>(mdp: &TabularMdp, s: usize, a: usize, rng: &mut R) -> usize {
    if let Some(next) = mdp.deterministic_next(s, a) {
        return next;
    }
    let row = mdp.next_dist(s, a);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (sn, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return sn;
        }
    }
    row.iter().rposition(|&p| p > 0.0).unwrap_or(row.len() - 1)
}

pub fn sample_initial<R: Rng + ?Sized>(mdp: &TabularMdp, rng: &mut R) -> usize {
    if let Some(s) = mdp.init().iter().position(|&p| p == 1.0) {
        return s;
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (s, &p) in mdp.init().iter().enumerate() {
        acc += p;
        if u < acc {
            return s;
        }
    }
    mdp.init().iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Seeded simulator over an exported MDP.
#[derive(Debug, Clone)]
pub struct GridEnv<'a> {
    mdp: &'a TabularMdp,
    max_steps: usize,
    rng: ChaCha8Rng,
    state: usize,
    steps: usize,
}

impl<'a> GridEnv<'a> {
    pub fn new(mdp: &'a TabularMdp, max_steps: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = sample_initial(mdp, &mut rng);
        GridEnv {
            mdp,
            max_steps,
            rng,
            state,
            steps: 0,
        }
    }

    pub fn mdp(&self) -> &TabularMdp {
        self.mdp
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn reset(&mut self) -> usize {
        self.state = sample_initial(self.mdp, &mut self.rng);
        self.steps = 0;
        self.state
    }

    pub fn step(&mut self, action: usize) -> Result<StepOutcome> {
        if self.mdp.is_terminal(self.state) {
            return Err(Error::TerminalStep(self.state));
        }
        if self.steps >= self.max_steps {
            return Err(Error::Precondition("step budget exhausted; reset the environment".into()));
        }
        if action >= self.mdp.n_actions() {
            return Err(Error::Dimension(format!("action {action} out of range")));
        }
        let reward = self.mdp.reward(self.state, action).ok_or(Error::MissingReward)?;
        let next = sample_next(self.mdp, self.state, action, &mut self.rng);
        self.state = next;
        self.steps += 1;
        let terminal = self.mdp.is_terminal(next);
        let truncated = !terminal && self.steps >= self.max_steps;
        Ok(StepOutcome {
            next,
            reward,
            done: terminal || truncated,
            truncated,
        })
    }
}
