//! The four-room gridworld and its task configurations.
//!
//! The default layout is a 13×13 grid split by a wall along the central row
//! and the central column. Each of the four wall arms has one doorway at its
//! midpoint. Wall cells stay in the state space as unreachable self-loops, so
//! the MDP has exactly 169 states of which 148 are navigable (4 rooms of 36
//! cells plus 4 doorways).
//!
//! Layouts and task configurations round-trip through a plain-text grid
//! format, one row per line:
//!
//! | char | meaning  |
//! |------|----------|
//! | `.`  | open cell |
//! | `#`  | wall      |
//! | `D`  | doorway   |
//! | `G`  | goal      |
//! | `X`  | danger    |

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::mdp::{TabularMdp, Task};

pub const WIDTH: usize = 13;
pub const HEIGHT: usize = 13;
pub const GOAL_REWARD: f64 = 100.0;
pub const DANGER_PENALTY: f64 = -10.0;

/// Actions in id order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Move {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
}

impl Move {
    pub const ALL: [Move; 4] = [Move::Up, Move::Down, Move::Left, Move::Right];

    fn delta(self) -> (isize, isize) {
        match self {
            Move::Up => (-1, 0),
            Move::Down => (1, 0),
            Move::Left => (0, -1),
            Move::Right => (0, 1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RoomLabel {
    /// Room index 1..=4, numbered in row-major order of each room's first cell.
    Room(u8),
    Doorway,
    Wall,
}

impl fmt::Display for RoomLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RoomLabel::Room(i) => write!(f, "room{i}"),
            RoomLabel::Doorway => f.write_str("doorway"),
            RoomLabel::Wall => f.write_str("wall"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridLayout {
    width: usize,
    height: usize,
    labels: Vec<RoomLabel>,
}

impl GridLayout {
    /// The default four-room layout.
    pub fn four_rooms() -> Self {
        let (mid_r, mid_c) = (HEIGHT / 2, WIDTH / 2);
        let mut text = String::new();
        for r in 0..HEIGHT {
            for c in 0..WIDTH {
                let door_in_row = r == mid_r && (c == mid_c / 2 || c == WIDTH - 1 - mid_c / 2);
                let door_in_col = c == mid_c && (r == mid_r / 2 || r == HEIGHT - 1 - mid_r / 2);
                let ch = if door_in_row || door_in_col {
                    'D'
                } else if r == mid_r || c == mid_c {
                    '#'
                } else {
                    '.'
                };
                text.push(ch);
            }
            text.push('\n');
        }
        parse_grid(&text).expect("default layout is valid").0
    }

    /// Builds a layout from wall and doorway masks, labelling rooms and
    /// checking the four-room structure.
    fn from_masks(width: usize, height: usize, wall: &[bool], doorway: &[bool]) -> Result<Self> {
        let n = width * height;
        let mut labels = vec![RoomLabel::Wall; n];
        for i in 0..n {
            if doorway[i] {
                labels[i] = RoomLabel::Doorway;
            }
        }
        let doorways = doorway.iter().filter(|&&d| d).count();
        if doorways != 4 {
            return Err(Error::input(format!(
                "layout has {doorways} doorways, expected 4"
            )));
        }
        let mut rooms = 0u8;
        let mut seen = vec![false; n];
        for start in 0..n {
            if wall[start] || doorway[start] || seen[start] {
                continue;
            }
            rooms += 1;
            if rooms > 4 {
                return Err(Error::input("layout splits into more than 4 rooms"));
            }
            let mut queue = VecDeque::from([start]);
            seen[start] = true;
            while let Some(cell) = queue.pop_front() {
                labels[cell] = RoomLabel::Room(rooms);
                for nb in neighbours(width, height, cell) {
                    if !wall[nb] && !doorway[nb] && !seen[nb] {
                        seen[nb] = true;
                        queue.push_back(nb);
                    }
                }
            }
        }
        if rooms != 4 {
            return Err(Error::input(format!(
                "layout has {rooms} rooms, expected 4"
            )));
        }
        let layout = GridLayout {
            width,
            height,
            labels,
        };
        for d in (0..n).filter(|&c| doorway[c]) {
            let joined = layout.rooms_adjacent_to(d);
            if joined.len() != 2 {
                return Err(Error::input(format!(
                    "doorway {:?} joins {} rooms, expected 2",
                    layout.coords(d),
                    joined.len()
                )));
            }
        }
        Ok(layout)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn n_cells(&self) -> usize {
        self.width * self.height
    }

    pub fn cell(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    pub fn coords(&self, cell: usize) -> (usize, usize) {
        (cell / self.width, cell % self.width)
    }

    pub fn label(&self, cell: usize) -> RoomLabel {
        self.labels[cell]
    }

    pub fn is_wall(&self, cell: usize) -> bool {
        self.labels[cell] == RoomLabel::Wall
    }

    pub fn wall_cells(&self) -> BTreeSet<usize> {
        (0..self.n_cells()).filter(|&c| self.is_wall(c)).collect()
    }

    pub fn doorway_cells(&self) -> BTreeSet<usize> {
        (0..self.n_cells())
            .filter(|&c| self.labels[c] == RoomLabel::Doorway)
            .collect()
    }

    /// Cells an agent can occupy, in id order.
    pub fn navigable_cells(&self) -> Vec<usize> {
        (0..self.n_cells()).filter(|&c| !self.is_wall(c)).collect()
    }

    /// Distinct rooms bordering `cell`.
    pub fn rooms_adjacent_to(&self, cell: usize) -> BTreeSet<u8> {
        neighbours(self.width, self.height, cell)
            .filter_map(|nb| match self.labels[nb] {
                RoomLabel::Room(r) => Some(r),
                _ => None,
            })
            .collect()
    }

    /// Cell reached by `mv` from `cell`; walls and the grid edge block movement.
    pub fn successor(&self, cell: usize, mv: Move) -> usize {
        if self.is_wall(cell) {
            return cell;
        }
        let (r, c) = self.coords(cell);
        let (dr, dc) = mv.delta();
        let (nr, nc) = (r as isize + dr, c as isize + dc);
        if nr < 0 || nc < 0 || nr >= self.height as isize || nc >= self.width as isize {
            return cell;
        }
        let next = self.cell(nr as usize, nc as usize);
        if self.is_wall(next) {
            cell
        } else {
            next
        }
    }

    /// Deterministic grid dynamics with the four [`Move`]s.
    pub fn to_mdp(&self, discount: f64) -> Result<TabularMdp> {
        TabularMdp::deterministic(self.n_cells(), Move::ALL.len(), discount, |s, a| {
            self.successor(s, Move::ALL[a])
        })
    }

    /// Fewest moves from every cell to the nearest of `targets`
    /// (`None` for walls and cells that cannot reach them).
    pub fn shortest_steps(&self, targets: &BTreeSet<usize>) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n_cells()];
        let mut queue = VecDeque::new();
        for &t in targets {
            dist[t] = Some(0);
            queue.push_back(t);
        }
        while let Some(cell) = queue.pop_front() {
            let d = dist[cell].unwrap();
            for nb in neighbours(self.width, self.height, cell) {
                if !self.is_wall(nb) && dist[nb].is_none() {
                    dist[nb] = Some(d + 1);
                    queue.push_back(nb);
                }
            }
        }
        dist
    }

    /// Grid-file text for this layout with `spec` drawn on top.
    pub fn render(&self, spec: Option<&TaskSpec>) -> String {
        let mut out = String::with_capacity(self.n_cells() + self.height);
        for r in 0..self.height {
            for c in 0..self.width {
                let cell = self.cell(r, c);
                let ch = match (spec, self.labels[cell]) {
                    (_, RoomLabel::Wall) => '#',
                    (_, RoomLabel::Doorway) => 'D',
                    (Some(s), _) if s.goal_cells.contains(&cell) => 'G',
                    (Some(s), _) if s.danger_cells.contains(&cell) => 'X',
                    _ => '.',
                };
                out.push(ch);
            }
            out.push('\n');
        }
        out
    }
}

fn neighbours(width: usize, height: usize, cell: usize) -> impl Iterator<Item = usize> {
    let (r, c) = (cell / width, cell % width);
    let up = (r > 0).then(|| cell - width);
    let down = (r + 1 < height).then(|| cell + width);
    let left = (c > 0).then(|| cell - 1);
    let right = (c + 1 < width).then(|| cell + 1);
    [up, down, left, right].into_iter().flatten()
}

/// Goal and danger placement for one task.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskSpec {
    pub goal_cells: BTreeSet<usize>,
    pub danger_cells: BTreeSet<usize>,
    pub goal_reward: f64,
    pub danger_penalty: f64,
}

impl TaskSpec {
    pub fn new(
        goal_cells: impl IntoIterator<Item = usize>,
        danger_cells: impl IntoIterator<Item = usize>,
    ) -> Self {
        TaskSpec {
            goal_cells: goal_cells.into_iter().collect(),
            danger_cells: danger_cells.into_iter().collect(),
            goal_reward: GOAL_REWARD,
            danger_penalty: DANGER_PENALTY,
        }
    }

    pub fn validate(&self, layout: &GridLayout) -> Result<()> {
        if self.goal_cells.is_empty() {
            return Err(Error::input("task needs at least one goal cell"));
        }
        for &c in self.goal_cells.iter().chain(&self.danger_cells) {
            if c >= layout.n_cells() {
                return Err(Error::input(format!("cell {c} is outside the grid")));
            }
            if layout.is_wall(c) {
                return Err(Error::input(format!(
                    "cell {:?} is a wall",
                    layout.coords(c)
                )));
            }
        }
        if let Some(c) = self.goal_cells.intersection(&self.danger_cells).next() {
            return Err(Error::input(format!(
                "cell {:?} is both goal and danger",
                layout.coords(*c)
            )));
        }
        Ok(())
    }

    /// Bonus collected on entering each cell. This is also the state reward
    /// `r(s')` used with the successor representation.
    pub fn cell_bonus(&self, n_cells: usize) -> Vec<f64> {
        let mut bonus = vec![0.0; n_cells];
        for &c in &self.goal_cells {
            bonus[c] = self.goal_reward;
        }
        for &c in &self.danger_cells {
            bonus[c] = self.danger_penalty;
        }
        bonus
    }
}

/// Builds the task selected by `spec`: `R(s, a)` is the expected bonus of the
/// cell entered, goal cells are terminal (their rows carry no reward), and
/// episodes start uniformly over navigable non-goal cells.
pub fn build_task(
    label: impl Into<String>,
    mdp: &TabularMdp,
    layout: &GridLayout,
    spec: &TaskSpec,
) -> Result<Task> {
    spec.validate(layout)?;
    if mdp.n_states() != layout.n_cells() {
        return Err(Error::input(
            "MDP and layout disagree on the number of cells",
        ));
    }
    let bonus = spec.cell_bonus(layout.n_cells());
    let terminal: Vec<bool> = (0..layout.n_cells())
        .map(|c| spec.goal_cells.contains(&c))
        .collect();
    let reward = DMatrix::from_fn(mdp.n_states(), mdp.n_actions(), |s, a| {
        if terminal[s] {
            0.0
        } else {
            mdp.support(s, a).iter().map(|&(s2, p)| p * bonus[s2]).sum()
        }
    });
    let starts = layout
        .navigable_cells()
        .into_iter()
        .filter(|&c| !terminal[c])
        .collect();
    Task::new(label, mdp, reward, terminal)?.with_start_states(starts)
}

/// The default layout and its 169-state MDP.
pub fn build_four_rooms(discount: f64) -> Result<(TabularMdp, GridLayout)> {
    let layout = GridLayout::four_rooms();
    Ok((layout.to_mdp(discount)?, layout))
}

/// Identifiers of the four shipped task configurations.
pub const TASK_IDS: [&str; 4] = ["a", "b", "c", "d"];

const TASK_FILES: [&str; 4] = [
    include_str!("../data/fourrooms_a.txt"),
    include_str!("../data/fourrooms_b.txt"),
    include_str!("../data/fourrooms_c.txt"),
    include_str!("../data/fourrooms_d.txt"),
];

/// The four task configurations on the default layout:
///
/// * (a) one goal in the top-left corner, no dangers;
/// * (b) goal in the bottom-right corner behind a 2×2 danger block;
/// * (c) goal in the top-right room behind a vertical danger strip;
/// * (d) goal in the bottom-left corner, dangers flanking the bottom doorway.
///
/// The same configurations ship as grid files under `data/`.
pub fn standard_tasks(layout: &GridLayout) -> Vec<TaskSpec> {
    let at = |r: usize, c: usize| layout.cell(r, c);
    vec![
        TaskSpec::new([at(0, 0)], []),
        TaskSpec::new([at(12, 12)], [at(9, 9), at(9, 10), at(10, 9), at(10, 10)]),
        TaskSpec::new([at(2, 9)], [at(1, 8), at(2, 8), at(3, 8), at(4, 8)]),
        TaskSpec::new([at(12, 0)], [at(8, 5), at(10, 5), at(8, 7), at(10, 7)]),
    ]
}

/// Index of a task id in [`TASK_IDS`].
pub fn task_index(id: &str) -> Result<usize> {
    TASK_IDS.iter().position(|t| *t == id).ok_or_else(|| {
        Error::input(format!(
            "unknown task id {id:?} (expected one of a, b, c, d)"
        ))
    })
}

/// Grid-file text of a shipped task configuration.
pub fn task_file(id: &str) -> Result<&'static str> {
    Ok(TASK_FILES[task_index(id)?])
}

/// Parses a grid file into its layout and the goal/danger marks it carries.
/// A file without `G` cells yields a spec with an empty goal set.
pub fn parse_grid(text: &str) -> Result<(GridLayout, TaskSpec)> {
    let rows: Vec<&str> = text
        .lines()
        .map(str::trim_end)
        .filter(|l| !l.is_empty())
        .collect();
    let height = rows.len();
    if height == 0 {
        return Err(Error::input("grid file is empty"));
    }
    let width = rows[0].chars().count();
    let mut wall = Vec::with_capacity(width * height);
    let mut doorway = Vec::with_capacity(width * height);
    let mut goals = Vec::new();
    let mut dangers = Vec::new();
    for (r, row) in rows.iter().enumerate() {
        if row.chars().count() != width {
            return Err(Error::input(format!(
                "grid row {r} has a different width than row 0"
            )));
        }
        for (c, ch) in row.chars().enumerate() {
            let cell = r * width + c;
            wall.push(ch == '#');
            doorway.push(ch == 'D');
            match ch {
                '.' | '#' | 'D' => {}
                'G' => goals.push(cell),
                'X' => dangers.push(cell),
                other => {
                    return Err(Error::input(format!(
                        "unexpected character {other:?} at row {r}, column {c}"
                    )));
                }
            }
        }
    }
    let layout = GridLayout::from_masks(width, height, &wall, &doorway)?;
    Ok((layout, TaskSpec::new(goals, dangers)))
}
