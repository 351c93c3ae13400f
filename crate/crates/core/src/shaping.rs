//! Shaped subgoals: potential functions, potential-based shaping rewards and
//! the augmented MDP whose state carries the number of subgoals reached.

use serde::{Deserialize, Serialize};

use crate::envs::{Environment, State};
use crate::error::{Error, Result};
use crate::RandomStream;

/// Potential parameters shared by every subgoal of a design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ShapingParams {
    pub w1: f64,
    pub w2: f64,
    pub capture_radius: f64,
}

impl Default for ShapingParams {
    fn default() -> Self {
        ShapingParams {
            w1: 0.2,
            w2: 10.0,
            capture_radius: 0.05,
        }
    }
}

/// An ordered list of subgoal points with a Gaussian-bump potential around each.
///
/// The potential of subgoal `j` is `w1 * exp(-|embed(s) - p_j|^2 / w2)`, which
/// peaks at the subgoal. A design with no points is the null design: it never
/// shapes and is what the unshaped baselines train with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SubgoalDesign {
    pub points: Vec<Vec<f64>>,
    pub w1: f64,
    pub w2: f64,
    pub capture_radius: f64,
}

impl SubgoalDesign {
    pub fn new(points: Vec<Vec<f64>>, params: ShapingParams) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Config(
                "a subgoal design needs at least one point".into(),
            ));
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(Error::Config(
                "subgoal points must have positive dimension".into(),
            ));
        }
        if let Some(p) = points.iter().find(|p| p.len() != dim) {
            return Err(Error::Dimension {
                expected: dim,
                got: p.len(),
            });
        }
        if points.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Config("subgoal coordinates must be finite".into()));
        }
        let ShapingParams {
            w1,
            w2,
            capture_radius,
        } = params;
        if !(w1 > 0.0 && w2 > 0.0 && capture_radius > 0.0) {
            return Err(Error::Config(format!(
                "w1 ({w1}), w2 ({w2}) and captureRadius ({capture_radius}) must be positive"
            )));
        }
        Ok(SubgoalDesign {
            points,
            w1,
            w2,
            capture_radius,
        })
    }

    /// The design without subgoals.
    pub fn none() -> Self {
        let p = ShapingParams::default();
        SubgoalDesign {
            points: vec![],
            w1: p.w1,
            w2: p.w2,
            capture_radius: p.capture_radius,
        }
    }

    /// Splits a flat parameter vector into `theta.len() / point_dim` points.
    pub fn from_theta(theta: &[f64], point_dim: usize, params: ShapingParams) -> Result<Self> {
        if point_dim == 0 || theta.is_empty() || !theta.len().is_multiple_of(point_dim) {
            return Err(Error::Dimension {
                expected: point_dim,
                got: theta.len(),
            });
        }
        Self::new(
            theta.chunks(point_dim).map(<[f64]>::to_vec).collect(),
            params,
        )
    }

    /// The flat parameter vector.
    pub fn theta(&self) -> Vec<f64> {
        self.points.concat()
    }

    /// Number of subgoals.
    pub fn k(&self) -> usize {
        self.points.len()
    }

    pub fn params(&self) -> ShapingParams {
        ShapingParams {
            w1: self.w1,
            w2: self.w2,
            capture_radius: self.capture_radius,
        }
    }

    /// Checks every point against per-coordinate box bounds of one point.
    pub fn check_bounds(&self, lower: &[f64], upper: &[f64]) -> Result<()> {
        for p in &self.points {
            if p.len() != lower.len() {
                return Err(Error::Dimension {
                    expected: lower.len(),
                    got: p.len(),
                });
            }
            let inside = p
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(x, (lo, hi))| (lo..=hi).contains(&x));
            if !inside {
                return Err(Error::Config(format!(
                    "subgoal {p:?} outside the design box"
                )));
            }
        }
        Ok(())
    }

    /// Potential of subgoal `j` (1-based). `j = k + 1` is the empty subgoal.
    pub fn potential(&self, j: usize, s: &State) -> Result<f64> {
        if j == 0 || j > self.k() + 1 {
            return Err(Error::Index {
                index: j,
                valid: format!("1..={}", self.k() + 1),
            });
        }
        Ok(self.phi(j - 1, s))
    }

    /// Potential by 0-based index; zero past the last subgoal.
    fn phi(&self, idx: usize, s: &State) -> f64 {
        match self.points.get(idx) {
            Some(p) => self.w1 * (-s.sq_dist(p) / self.w2).exp(),
            None => 0.0,
        }
    }

    /// `gamma * Phi_{i+1}(s') - Phi_{i+1}(s)` for progress `i`; zero once all
    /// subgoals are reached.
    pub fn shaping_reward(&self, progress: usize, s: &State, s_next: &State, gamma: f64) -> f64 {
        if progress >= self.k() {
            return 0.0;
        }
        gamma * self.phi(progress, s_next) - self.phi(progress, s)
    }

    /// Whether `s` lies in the capture set of subgoal `j` (1-based).
    pub fn captures(&self, j: usize, s: &State) -> bool {
        j >= 1
            && self
                .points
                .get(j - 1)
                .is_some_and(|p| s.in_capture(p, self.capture_radius))
    }

    /// Progress after landing in `s_next` with current progress `i`.
    pub fn advance(&self, progress: usize, s_next: &State) -> usize {
        if self.captures(progress + 1, s_next) {
            progress + 1
        } else {
            progress
        }
    }
}

/// Environment state paired with the number of subgoals reached so far.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentedState {
    pub base: State,
    pub progress: usize,
}

impl AugmentedState {
    pub fn start(base: State) -> Self {
        AugmentedState { base, progress: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentedStep {
    pub next: AugmentedState,
    pub total: f64,
    pub extrinsic: f64,
    pub terminal: bool,
}

/// One transition of the augmented MDP. The reward is returned both as the
/// shaped total used for learning and as the extrinsic part used for scoring.
pub fn augment_step<E: Environment + ?Sized>(
    env: &E,
    design: &SubgoalDesign,
    s: &AugmentedState,
    action: usize,
    rng: &mut RandomStream,
) -> AugmentedStep {
    let out = env.step(&s.base, action, rng);
    let shaping = design.shaping_reward(s.progress, &s.base, &out.next, env.discount());
    AugmentedStep {
        next: AugmentedState {
            base: out.next,
            progress: design.advance(s.progress, &out.next),
        },
        total: out.reward + shaping,
        extrinsic: out.reward,
        terminal: out.terminal,
    }
}
