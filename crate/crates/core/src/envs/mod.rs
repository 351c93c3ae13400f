//! Environment distributions and the sparse-reward MDPs they produce.
//!
//! A distribution ([`EnvDistribution`]) is sampled with a seed to yield one
//! concrete [`MdpInstance`]. Instances are immutable; [`Environment::step`]
//! is a pure function of the state, the action and an explicit random stream,
//! so any number of rollouts can share an instance as long as each owns its
//! stream.

mod car;
mod grid;

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::RandomStream;

pub use car::{CarLayout, CarParams, CarState};
pub use grid::{GridLayout, GridParams, GridState, Rect};

/// Upper bound of the per-instance wind probability.
pub const MAX_WIND: f64 = 0.02;

/// The six benchmark domains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DomainId {
    #[serde(rename = "GW10")]
    Gw10,
    #[serde(rename = "GW20")]
    Gw20,
    #[serde(rename = "TR")]
    Tr,
    #[serde(rename = "MC")]
    Mc,
    #[serde(rename = "KEY2")]
    Key2,
    #[serde(rename = "KEY3")]
    Key3,
}

impl DomainId {
    pub const ALL: [DomainId; 6] = [
        DomainId::Gw10,
        DomainId::Gw20,
        DomainId::Tr,
        DomainId::Mc,
        DomainId::Key2,
        DomainId::Key3,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DomainId::Gw10 => "GW10",
            DomainId::Gw20 => "GW20",
            DomainId::Tr => "TR",
            DomainId::Mc => "MC",
            DomainId::Key2 => "KEY2",
            DomainId::Key3 => "KEY3",
        }
    }

    pub fn is_grid(self) -> bool {
        self != DomainId::Mc
    }
}

impl fmt::Display for DomainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DomainId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DomainId::ALL
            .into_iter()
            .find(|d| d.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown domain id `{s}`")))
    }
}

/// Discrete action set of an instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActionSpace {
    /// North (row + 1), East (col + 1), South, West.
    Compass,
    /// Push left, coast, push right.
    Throttle,
}

impl ActionSpace {
    pub fn len(self) -> usize {
        match self {
            ActionSpace::Compass => 4,
            ActionSpace::Throttle => 3,
        }
    }

    pub fn is_empty(self) -> bool {
        false
    }

    pub fn names(self) -> &'static [&'static str] {
        match self {
            ActionSpace::Compass => &["north", "east", "south", "west"],
            ActionSpace::Throttle => &["left", "coast", "right"],
        }
    }
}

/// An environment state. Grid states carry the flags some domains fold into
/// the state (key possession, treasure already collected).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum State {
    Grid {
        cell: GridState,
        has_key: bool,
        treasure_taken: bool,
    },
    Car(CarState),
}

impl State {
    pub fn grid(row: i32, col: i32) -> Self {
        State::Grid {
            cell: GridState { row, col },
            has_key: false,
            treasure_taken: false,
        }
    }

    /// Dimension of the continuous embedding used for subgoal points.
    pub fn embed_dim(&self) -> usize {
        match self {
            State::Grid { .. } => 2,
            State::Car(_) => 1,
        }
    }

    /// Cell centers `(row + 0.5, col + 0.5)` for grids, the position for the car.
    pub fn embed(&self) -> ([f64; 2], usize) {
        match self {
            State::Grid { cell, .. } => ([cell.row as f64 + 0.5, cell.col as f64 + 0.5], 2),
            State::Car(c) => ([c.position, 0.0], 1),
        }
    }

    /// Squared Euclidean distance between the embedding and `point`.
    pub fn sq_dist(&self, point: &[f64]) -> f64 {
        let (e, n) = self.embed();
        e[..n]
            .iter()
            .zip(point)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    /// Membership in the capture set of a subgoal at `point`.
    ///
    /// Grid: the cell containing the point. Car: positions within `radius`.
    pub fn in_capture(&self, point: &[f64], radius: f64) -> bool {
        match self {
            State::Grid { cell, .. } => {
                cell.row == point[0].floor() as i32 && cell.col == point[1].floor() as i32
            }
            State::Car(c) => (c.position - point[0]).abs() <= radius,
        }
    }
}

/// Result of one transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub next: State,
    pub reward: f64,
    pub terminal: bool,
}

/// Common interface of every MDP the agent can be trained on.
pub trait Environment {
    fn start(&self) -> State;
    fn step(&self, s: &State, action: usize, rng: &mut RandomStream) -> Step;
    fn n_actions(&self) -> usize;
    /// Number of distinct tabular state indices.
    fn state_count(&self) -> usize;
    fn state_index(&self, s: &State) -> usize;
    fn discount(&self) -> f64;
    /// Episode length after which the episode resets without reward.
    fn horizon_cap(&self) -> usize;
    /// When true, an episode that never reaches the goal scores zero even if
    /// it collected intermediate rewards.
    fn forfeit_without_goal(&self) -> bool {
        false
    }
}

/// Environment-specific parameters of one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum Layout {
    Grid(GridLayout),
    Car(CarLayout),
}

/// One sampled environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MdpInstance {
    pub domain: DomainId,
    pub layout: Layout,
    pub wind_prob: f64,
    pub discount: f64,
    pub action_space: ActionSpace,
    pub horizon_cap: usize,
}

impl MdpInstance {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=MAX_WIND).contains(&self.wind_prob) {
            return Err(Error::Config(format!(
                "wind probability {} outside [0, {MAX_WIND}]",
                self.wind_prob
            )));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(Error::Config(format!(
                "discount {} outside (0, 1)",
                self.discount
            )));
        }
        if self.horizon_cap == 0 {
            return Err(Error::Config("horizon cap must be positive".into()));
        }
        match &self.layout {
            Layout::Grid(g) => g.validate(),
            Layout::Car(c) => c.validate(),
        }
    }

    /// Whether `s` is a legal state of this instance.
    pub fn is_valid_state(&self, s: &State) -> bool {
        match (&self.layout, s) {
            (Layout::Grid(g), State::Grid { cell, has_key, .. }) => g.is_valid(cell, *has_key),
            (Layout::Car(_), State::Car(c)) => c.is_valid(),
            _ => false,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn goal_reward(&self) -> f64 {
        match &self.layout {
            Layout::Grid(g) => g.goal_reward,
            Layout::Car(_) => 1.0,
        }
    }
}

impl Environment for MdpInstance {
    fn start(&self) -> State {
        match &self.layout {
            Layout::Grid(g) => State::Grid {
                cell: g.start,
                has_key: false,
                treasure_taken: false,
            },
            Layout::Car(c) => State::Car(CarState {
                position: c.start_position,
                velocity: 0.0,
            }),
        }
    }

    fn step(&self, s: &State, action: usize, rng: &mut RandomStream) -> Step {
        let n = self.action_space.len();
        let action = if self.wind_prob > 0.0 && rng.gen::<f64>() < self.wind_prob {
            rng.gen_range(0..n)
        } else {
            action
        };
        match (&self.layout, s) {
            (
                Layout::Grid(g),
                State::Grid {
                    cell,
                    has_key,
                    treasure_taken,
                },
            ) => g.step(*cell, *has_key, *treasure_taken, action),
            (Layout::Car(c), State::Car(car)) => c.step(*car, action),
            _ => panic!("state kind does not match the instance layout"),
        }
    }

    fn n_actions(&self) -> usize {
        self.action_space.len()
    }

    fn state_count(&self) -> usize {
        match &self.layout {
            Layout::Grid(g) => g.height * g.width * 4,
            Layout::Car(c) => c.position_bins * c.velocity_bins,
        }
    }

    fn state_index(&self, s: &State) -> usize {
        match (&self.layout, s) {
            (
                Layout::Grid(g),
                State::Grid {
                    cell,
                    has_key,
                    treasure_taken,
                },
            ) => {
                let flags = usize::from(*has_key) | (usize::from(*treasure_taken) << 1);
                (cell.row as usize * g.width + cell.col as usize) * 4 + flags
            }
            (Layout::Car(c), State::Car(car)) => c.bin(car),
            _ => panic!("state kind does not match the instance layout"),
        }
    }

    fn discount(&self) -> f64 {
        self.discount
    }

    fn horizon_cap(&self) -> usize {
        self.horizon_cap
    }

    fn forfeit_without_goal(&self) -> bool {
        self.domain == DomainId::Tr
    }
}

/// Per-domain randomization ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum DomainParams {
    Grid(GridParams),
    Car(CarParams),
}

/// A distribution over MDP instances of one domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EnvDistribution {
    pub domain: DomainId,
    /// Instances draw their wind probability uniformly from `[0, wind_max]`.
    pub wind_max: f64,
    pub discount: f64,
    pub horizon_cap: usize,
    pub params: DomainParams,
}

impl EnvDistribution {
    /// The default distribution of a domain.
    pub fn new(domain: DomainId) -> Self {
        let params = match domain {
            DomainId::Mc => DomainParams::Car(CarParams::default()),
            d => DomainParams::Grid(GridParams::defaults(d)),
        };
        let (wind_max, discount, horizon_cap) = match &params {
            DomainParams::Grid(g) => (
                MAX_WIND,
                if domain == DomainId::Tr { 0.98 } else { 0.95 },
                4 * (g.height * g.width) as usize,
            ),
            DomainParams::Car(_) => (0.0, 0.95, 1000),
        };
        EnvDistribution {
            domain,
            wind_max,
            discount,
            horizon_cap,
            params,
        }
    }

    /// Parses a distribution from a JSON config block.
    pub fn from_json(s: &str) -> Result<Self> {
        let dist: EnvDistribution = serde_json::from_str(s)?;
        dist.validate()?;
        Ok(dist)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=MAX_WIND).contains(&self.wind_max) {
            return Err(Error::Config(format!(
                "windMax {} outside [0, {MAX_WIND}]",
                self.wind_max
            )));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(Error::Config(format!(
                "discount {} outside (0, 1)",
                self.discount
            )));
        }
        if self.horizon_cap == 0 {
            return Err(Error::Config("horizonCap must be positive".into()));
        }
        match (&self.params, self.domain) {
            (DomainParams::Car(c), DomainId::Mc) => c.validate(),
            (DomainParams::Grid(g), d) if d.is_grid() => g.validate(),
            _ => Err(Error::Config(format!(
                "parameter block does not match domain {}",
                self.domain
            ))),
        }
    }

    /// Draws one instance; identical seeds give identical instances.
    pub fn sample_instance(&self, seed: u64) -> Result<MdpInstance> {
        self.validate()?;
        let mut rng = RandomStream::seed_from_u64(seed);
        Ok(self.sample_with(&mut rng))
    }

    /// Draws one instance from an existing stream. The distribution must be valid.
    pub fn sample_with(&self, rng: &mut RandomStream) -> MdpInstance {
        let wind_prob = rng.gen::<f64>() * self.wind_max;
        let (layout, action_space) = match &self.params {
            DomainParams::Grid(g) => (
                Layout::Grid(g.sample(self.domain, rng)),
                ActionSpace::Compass,
            ),
            DomainParams::Car(c) => (Layout::Car(c.sample(rng)), ActionSpace::Throttle),
        };
        MdpInstance {
            domain: self.domain,
            layout,
            wind_prob,
            discount: self.discount,
            action_space,
            horizon_cap: self.horizon_cap,
        }
    }

    /// Embedding dimension of a subgoal point.
    pub fn point_dim(&self) -> usize {
        match self.params {
            DomainParams::Grid(_) => 2,
            DomainParams::Car(_) => 1,
        }
    }

    /// Box bounds of a single subgoal point.
    pub fn point_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.params {
            DomainParams::Grid(g) => (vec![0.0, 0.0], vec![g.height as f64, g.width as f64]),
            DomainParams::Car(_) => (vec![car::POSITION_MIN], vec![car::POSITION_MAX]),
        }
    }
}

/// Counts environment interactions across threads.
#[derive(Debug, Default)]
pub struct StepMeter(AtomicU64);

impl StepMeter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&self, n: u64) {
        self.0.fetch_add(n, Ordering::Relaxed);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}

/// Wraps an environment so that every `step` is charged to a [`StepMeter`].
pub struct Metered<'a, E> {
    pub inner: &'a E,
    pub meter: &'a StepMeter,
}

impl<E: Environment> Environment for Metered<'_, E> {
    fn start(&self) -> State {
        self.inner.start()
    }

    fn step(&self, s: &State, action: usize, rng: &mut RandomStream) -> Step {
        self.meter.add(1);
        self.inner.step(s, action, rng)
    }

    fn n_actions(&self) -> usize {
        self.inner.n_actions()
    }

    fn state_count(&self) -> usize {
        self.inner.state_count()
    }

    fn state_index(&self, s: &State) -> usize {
        self.inner.state_index(s)
    }

    fn discount(&self) -> f64 {
        self.inner.discount()
    }

    fn horizon_cap(&self) -> usize {
        self.inner.horizon_cap()
    }

    fn forfeit_without_goal(&self) -> bool {
        self.inner.forfeit_without_goal()
    }
}
