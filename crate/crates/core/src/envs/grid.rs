use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DomainId, State, Step};
use crate::error::{Error, Result};
use crate::RandomStream;

/// A grid cell; row 0 is the bottom row and North increases the row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridState {
    pub row: i32,
    pub col: i32,
}

/// Axis-aligned block of cells anchored at its lowest row and column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub row: i32,
    pub col: i32,
    pub height: i32,
    pub width: i32,
}

impl Rect {
    pub const fn new(row: i32, col: i32, height: i32, width: i32) -> Self {
        Rect {
            row,
            col,
            height,
            width,
        }
    }

    pub fn contains(&self, c: GridState) -> bool {
        c.row >= self.row
            && c.row < self.row + self.height
            && c.col >= self.col
            && c.col < self.col + self.width
    }

    fn inside(&self, height: i32, width: i32) -> bool {
        self.height > 0
            && self.width > 0
            && self.row >= 0
            && self.col >= 0
            && self.row + self.height <= height
            && self.col + self.width <= width
    }

    fn intersects(&self, other: &Rect) -> bool {
        self.row < other.row + other.height
            && other.row < self.row + self.height
            && self.col < other.col + other.width
            && other.col < self.col + self.width
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum DoorPlacement {
    /// Flush with the right edge of the wall.
    Right,
    /// Uniformly anywhere within the wall.
    Uniform,
}

/// Randomization ranges of a gridworld domain.
///
/// Region rectangles (treasure and key areas) are plain fields so they can be
/// overridden from config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GridParams {
    pub height: i32,
    pub width: i32,
    pub start: GridState,
    pub goal: GridState,
    /// Inclusive row band `(lo, hi)` for each randomly placed full-width wall.
    pub wall_bands: Vec<(i32, i32)>,
    pub door_width: i32,
    pub door_placement: DoorPlacement,
    /// Doors stay closed until the agent has picked up the key.
    pub locked_doors: bool,
    /// Walls present in every instance, with their fixed openings.
    pub fixed_walls: Vec<Rect>,
    pub fixed_doors: Vec<Rect>,
    /// The treasure cell is drawn uniformly from this block.
    pub treasure_region: Option<Rect>,
    pub treasure_reward: f64,
    /// The key rectangle is placed uniformly over all placements inside these blocks.
    pub key_regions: Vec<Rect>,
    pub key_size: i32,
    pub goal_reward: f64,
}

impl GridParams {
    pub fn defaults(domain: DomainId) -> Self {
        let base = GridParams {
            height: 10,
            width: 10,
            start: GridState { row: 0, col: 0 },
            goal: GridState { row: 9, col: 0 },
            wall_bands: vec![],
            door_width: 0,
            door_placement: DoorPlacement::Right,
            locked_doors: false,
            fixed_walls: vec![],
            fixed_doors: vec![],
            treasure_region: None,
            treasure_reward: 0.0,
            key_regions: vec![],
            key_size: 2,
            goal_reward: 1.0,
        };
        match domain {
            DomainId::Gw10 => GridParams {
                wall_bands: vec![(3, 7)],
                door_width: 4,
                ..base
            },
            // start top-right, goal bottom-left, doors anywhere
            DomainId::Gw20 => GridParams {
                height: 20,
                width: 20,
                start: GridState { row: 19, col: 19 },
                goal: GridState { row: 0, col: 0 },
                wall_bands: vec![(5, 8), (11, 14)],
                door_width: 8,
                door_placement: DoorPlacement::Uniform,
                ..base
            },
            // Small 3x3 room in the top-right corner, entered from below.
            DomainId::Tr => GridParams {
                fixed_walls: vec![Rect::new(6, 6, 1, 4), Rect::new(7, 6, 3, 1)],
                fixed_doors: vec![Rect::new(6, 7, 1, 1)],
                treasure_region: Some(Rect::new(7, 7, 3, 3)),
                treasure_reward: 10.0,
                goal_reward: 10.0,
                ..base
            },
            // One wall with a locked door at its right end; key areas flank
            // the start and the door column in the lower room.
            DomainId::Key2 | DomainId::Key3 => GridParams {
                wall_bands: vec![(5, 5)],
                door_width: 2,
                locked_doors: true,
                key_regions: vec![Rect::new(1, 0, 3, 3), Rect::new(1, 5, 3, 3)],
                ..base
            },
            DomainId::Mc => panic!("MC is not a gridworld"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (h, w) = (self.height, self.width);
        let cfg = |m: String| Err(Error::Config(m));
        if h < 2 || w < 2 {
            return cfg(format!("grid {h}x{w} too small"));
        }
        let in_grid = |c: GridState| c.row >= 0 && c.row < h && c.col >= 0 && c.col < w;
        if !in_grid(self.start) || !in_grid(self.goal) || self.start == self.goal {
            return cfg("start and goal must be distinct cells inside the grid".into());
        }
        let mut band_rows = Vec::new();
        for &(lo, hi) in &self.wall_bands {
            if lo > hi || lo < 0 || hi >= h {
                return cfg(format!("wall band ({lo}, {hi}) outside rows 0..{h}"));
            }
            if (lo..=hi).contains(&self.start.row) || (lo..=hi).contains(&self.goal.row) {
                return cfg(format!("wall band ({lo}, {hi}) overlaps start or goal row"));
            }
            band_rows.push((lo, hi));
        }
        band_rows.sort();
        if band_rows.windows(2).any(|p| p[1].0 <= p[0].1 + 1) {
            return cfg("wall bands must be disjoint and non-adjacent".into());
        }
        if !self.wall_bands.is_empty() && (self.door_width < 1 || self.door_width > w) {
            return cfg(format!(
                "door width {} must fit inside the wall",
                self.door_width
            ));
        }
        for r in self.fixed_walls.iter().chain(&self.fixed_doors) {
            if !r.inside(h, w) {
                return cfg(format!("rectangle {r:?} outside the grid"));
            }
        }
        let fixed_blocked = |c: GridState| {
            self.fixed_walls.iter().any(|r| r.contains(c))
                && !self.fixed_doors.iter().any(|r| r.contains(c))
        };
        if fixed_blocked(self.start) || fixed_blocked(self.goal) {
            return cfg("start or goal inside a fixed wall".into());
        }
        if let Some(t) = &self.treasure_region {
            if !t.inside(h, w) || self.fixed_walls.iter().any(|r| r.intersects(t)) {
                return cfg("treasure region must be open cells inside the grid".into());
            }
            if t.contains(self.goal) {
                return cfg("treasure region overlaps the goal".into());
            }
        }
        for k in &self.key_regions {
            if !k.inside(h, w) || k.height < self.key_size || k.width < self.key_size {
                return cfg(format!(
                    "key region {k:?} cannot hold a {0}x{0} key",
                    self.key_size
                ));
            }
            let hits_band = self
                .wall_bands
                .iter()
                .any(|&(lo, hi)| k.row <= hi && lo < k.row + k.height);
            if hits_band || self.fixed_walls.iter().any(|r| r.intersects(k)) {
                return cfg(format!("key region {k:?} overlaps a wall"));
            }
        }
        if self.locked_doors && self.key_regions.is_empty() {
            return cfg("locked doors need at least one key region".into());
        }
        Ok(())
    }

    pub(super) fn sample(&self, _domain: DomainId, rng: &mut RandomStream) -> GridLayout {
        let mut walls = self.fixed_walls.clone();
        let mut doors = self.fixed_doors.clone();
        for &(lo, hi) in &self.wall_bands {
            let row = rng.gen_range(lo..=hi);
            let col = match self.door_placement {
                DoorPlacement::Right => self.width - self.door_width,
                DoorPlacement::Uniform => rng.gen_range(0..=self.width - self.door_width),
            };
            walls.push(Rect::new(row, 0, 1, self.width));
            doors.push(Rect::new(row, col, 1, self.door_width));
        }
        let treasure = self.treasure_region.map(|t| GridState {
            row: rng.gen_range(t.row..t.row + t.height),
            col: rng.gen_range(t.col..t.col + t.width),
        });
        let key = if self.key_regions.is_empty() {
            None
        } else {
            let ks = self.key_size;
            let placements: Vec<Rect> = self
                .key_regions
                .iter()
                .flat_map(|r| {
                    (r.row..=r.row + r.height - ks).flat_map(move |row| {
                        (r.col..=r.col + r.width - ks).map(move |col| Rect::new(row, col, ks, ks))
                    })
                })
                .collect();
            Some(placements[rng.gen_range(0..placements.len())])
        };
        // random walls first
        walls.rotate_left(self.fixed_walls.len());
        doors.rotate_left(self.fixed_doors.len());
        GridLayout {
            height: self.height as usize,
            width: self.width as usize,
            start: self.start,
            goal: self.goal,
            walls,
            doors,
            locked_doors: self.locked_doors,
            treasure,
            treasure_reward: self.treasure_reward,
            key,
            goal_reward: self.goal_reward,
        }
    }
}

/// Concrete geometry of one gridworld instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GridLayout {
    pub height: usize,
    pub width: usize,
    pub start: GridState,
    pub goal: GridState,
    pub walls: Vec<Rect>,
    /// Openings carved out of `walls`.
    pub doors: Vec<Rect>,
    pub locked_doors: bool,
    pub treasure: Option<GridState>,
    pub treasure_reward: f64,
    pub key: Option<Rect>,
    pub goal_reward: f64,
}

const MOVES: [(i32, i32); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];

impl GridLayout {
    fn blocked(&self, c: GridState, has_key: bool) -> bool {
        if c.row < 0 || c.col < 0 || c.row >= self.height as i32 || c.col >= self.width as i32 {
            return true;
        }
        if self.doors.iter().any(|d| d.contains(c)) {
            return self.locked_doors && !has_key;
        }
        self.walls.iter().any(|w| w.contains(c))
    }

    pub fn is_valid(&self, c: &GridState, has_key: bool) -> bool {
        !self.blocked(*c, has_key)
    }

    pub fn validate(&self) -> Result<()> {
        let (h, w) = (self.height as i32, self.width as i32);
        for d in &self.doors {
            if !d.inside(h, w) || !self.walls.iter().any(|wall| wall.intersects(d)) {
                return Err(Error::Config(format!("door {d:?} is not inside a wall")));
            }
        }
        if self.blocked(self.start, false) || self.blocked(self.goal, true) {
            return Err(Error::Config("start or goal is blocked".into()));
        }
        Ok(())
    }

    pub(super) fn step(
        &self,
        cell: GridState,
        has_key: bool,
        treasure_taken: bool,
        action: usize,
    ) -> Step {
        let (dr, dc) = MOVES[action];
        let target = GridState {
            row: cell.row + dr,
            col: cell.col + dc,
        };
        let cell = if self.blocked(target, has_key) {
            cell
        } else {
            target
        };
        let has_key = has_key || self.key.is_some_and(|k| k.contains(cell));
        let mut reward = 0.0;
        let mut treasure_taken = treasure_taken;
        if !treasure_taken && self.treasure == Some(cell) {
            reward += self.treasure_reward;
            treasure_taken = true;
        }
        let terminal = cell == self.goal;
        if terminal {
            reward += self.goal_reward;
        }
        Step {
            next: State::Grid {
                cell,
                has_key,
                treasure_taken,
            },
            reward,
            terminal,
        }
    }
}
