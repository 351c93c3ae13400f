use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{State, Step};
use crate::error::{Error, Result};
use crate::RandomStream;

pub(crate) const POSITION_MIN: f64 = -1.2;
pub(crate) const POSITION_MAX: f64 = 0.6;
const VELOCITY_MAX: f64 = 0.07;
const GOAL_POSITION: f64 = 0.5;
const FORCE: f64 = 0.001;
const GRAVITY: f64 = 0.0025;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarState {
    pub position: f64,
    pub velocity: f64,
}

impl CarState {
    pub fn is_valid(&self) -> bool {
        (POSITION_MIN..=POSITION_MAX).contains(&self.position)
            && (-VELOCITY_MAX..=VELOCITY_MAX).contains(&self.velocity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CarParams {
    pub start_range: (f64, f64),
    /// Tabular discretization of (position, velocity).
    pub position_bins: usize,
    pub velocity_bins: usize,
}

impl Default for CarParams {
    fn default() -> Self {
        CarParams {
            start_range: (-0.6, -0.4),
            position_bins: 20,
            velocity_bins: 20,
        }
    }
}

impl CarParams {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.start_range;
        if !(POSITION_MIN <= lo && lo <= hi && hi < GOAL_POSITION) {
            return Err(Error::Config(format!(
                "start range ({lo}, {hi}) must lie in [{POSITION_MIN}, {GOAL_POSITION})"
            )));
        }
        if self.position_bins == 0 || self.velocity_bins == 0 {
            return Err(Error::Config("bin counts must be positive".into()));
        }
        Ok(())
    }

    pub(super) fn sample(&self, rng: &mut RandomStream) -> CarLayout {
        let (lo, hi) = self.start_range;
        CarLayout {
            start_position: lo + (hi - lo) * rng.gen::<f64>(),
            position_bins: self.position_bins,
            velocity_bins: self.velocity_bins,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CarLayout {
    pub start_position: f64,
    pub position_bins: usize,
    pub velocity_bins: usize,
}

impl CarLayout {
    pub fn validate(&self) -> Result<()> {
        if !(POSITION_MIN..GOAL_POSITION).contains(&self.start_position) {
            return Err(Error::Config(format!(
                "start position {} outside the track",
                self.start_position
            )));
        }
        Ok(())
    }

    pub(super) fn step(&self, s: CarState, action: usize) -> Step {
        let push = action as f64 - 1.0;
        let velocity = (s.velocity + push * FORCE - GRAVITY * (3.0 * s.position).cos())
            .clamp(-VELOCITY_MAX, VELOCITY_MAX);
        let position = (s.position + velocity).clamp(POSITION_MIN, POSITION_MAX);
        let velocity = if position == POSITION_MIN && velocity < 0.0 {
            0.0
        } else {
            velocity
        };
        let terminal = position >= GOAL_POSITION;
        Step {
            next: State::Car(CarState { position, velocity }),
            reward: if terminal { 1.0 } else { 0.0 },
            terminal,
        }
    }

    pub(super) fn bin(&self, s: &CarState) -> usize {
        let bin = |x: f64, lo: f64, hi: f64, n: usize| {
            (((x - lo) / (hi - lo) * n as f64) as usize).min(n - 1)
        };
        let p = bin(s.position, POSITION_MIN, POSITION_MAX, self.position_bins);
        let v = bin(s.velocity, -VELOCITY_MAX, VELOCITY_MAX, self.velocity_bins);
        p * self.velocity_bins + v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout() -> CarLayout {
        CarLayout {
            start_position: -0.5,
            position_bins: 20,
            velocity_bins: 20,
        }
    }

    #[test]
    fn standard_dynamics() {
        let s = CarState {
            position: -0.5,
            velocity: 0.0,
        };
        let out = layout().step(s, 2);
        let v = 0.001 - 0.0025 * (-1.5f64).cos();
        match out.next {
            State::Car(c) => {
                assert!((c.velocity - v).abs() < 1e-15);
                assert!((c.position - (-0.5 + v)).abs() < 1e-15);
            }
            _ => unreachable!(),
        }
        assert!(!out.terminal);
    }

    #[test]
    fn left_wall_stops_the_car() {
        let s = CarState {
            position: -1.19,
            velocity: -0.07,
        };
        match layout().step(s, 0).next {
            State::Car(c) => {
                assert_eq!(c.position, POSITION_MIN);
                assert_eq!(c.velocity, 0.0);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn reaching_the_flag_terminates_with_reward() {
        let s = CarState {
            position: 0.49,
            velocity: 0.05,
        };
        let out = layout().step(s, 2);
        assert!(out.terminal);
        assert_eq!(out.reward, 1.0);
    }

    #[test]
    fn bins_cover_the_box() {
        let l = layout();
        assert_eq!(
            l.bin(&CarState {
                position: POSITION_MIN,
                velocity: -VELOCITY_MAX
            }),
            0
        );
        assert_eq!(
            l.bin(&CarState {
                position: POSITION_MAX,
                velocity: VELOCITY_MAX
            }),
            20 * 20 - 1
        );
    }
}
