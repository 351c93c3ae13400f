//! The box of subgoal parameters and Latin-hypercube designs over it.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::EnvDistribution;
use crate::error::{Error, Result};
use crate::shaping::{ShapingParams, SubgoalDesign};
use crate::RandomStream;

/// Box-shaped space of flat subgoal parameter vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DesignSpace {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Coordinates per subgoal point.
    pub point_dim: usize,
    pub shaping: ShapingParams,
}

impl DesignSpace {
    pub fn new(
        lower: Vec<f64>,
        upper: Vec<f64>,
        point_dim: usize,
        shaping: ShapingParams,
    ) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if point_dim == 0 || lower.is_empty() || !lower.len().is_multiple_of(point_dim) {
            return Err(Error::Config(format!(
                "box of dimension {} cannot hold points of dimension {point_dim}",
                lower.len()
            )));
        }
        if lower.iter().zip(&upper).any(|(lo, hi)| !(lo < hi)) {
            return Err(Error::Config(
                "every interval must have positive width".into(),
            ));
        }
        Ok(DesignSpace {
            lower,
            upper,
            point_dim,
            shaping,
        })
    }

    /// `k` subgoals, each ranging over the whole state embedding of `dist`.
    pub fn for_distribution(
        dist: &EnvDistribution,
        k: usize,
        shaping: ShapingParams,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        let (lo, hi) = dist.point_bounds();
        Self::new(lo.repeat(k), hi.repeat(k), lo.len(), shaping)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn k(&self) -> usize {
        self.dim() / self.point_dim
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| hi - lo)
            .collect()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (lo, hi))| (lo..=hi).contains(&x))
    }

    pub fn design(&self, theta: &[f64]) -> Result<SubgoalDesign> {
        if theta.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: theta.len(),
            });
        }
        SubgoalDesign::from_theta(theta, self.point_dim, self.shaping)
    }

    /// `n` points of a Latin-hypercube design scaled into the box.
    pub fn latin_hypercube(&self, n: usize, rng: &mut RandomStream) -> Vec<Vec<f64>> {
        latin_hypercube(n, self.dim(), rng)
            .into_iter()
            .map(|u| {
                u.iter()
                    .zip(self.lower.iter().zip(&self.upper))
                    .map(|(u, (lo, hi))| lo + u * (hi - lo))
                    .collect()
            })
            .collect()
    }
}

/// Latin-hypercube sample of `n` points in `[0, 1)^dim`: every coordinate
/// hits each of the `n` equal strata exactly once.
pub fn latin_hypercube(n: usize, dim: usize, rng: &mut RandomStream) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; dim]; n];
    let mut strata: Vec<usize> = (0..n).collect();
    for d in 0..dim {
        strata.shuffle(rng);
        for (p, &s) in points.iter_mut().zip(&strata) {
            p[d] = (s as f64 + rng.gen::<f64>()) / n as f64;
        }
    }
    points
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::DomainId;
    use rand::SeedableRng;

    #[test]
    fn one_point_per_stratum() {
        let mut rng = RandomStream::seed_from_u64(3);
        let n = 37;
        let pts = latin_hypercube(n, 4, &mut rng);
        for d in 0..4 {
            let mut seen = vec![false; n];
            for p in &pts {
                let s = (p[d] * n as f64) as usize;
                assert!(!seen[s]);
                seen[s] = true;
            }
        }
    }

    #[test]
    fn scaled_points_stay_in_box() {
        let dist = EnvDistribution::new(DomainId::Gw10);
        let space = DesignSpace::for_distribution(&dist, 2, ShapingParams::default()).unwrap();
        assert_eq!(space.dim(), 4);
        assert_eq!(space.widths(), vec![10.0; 4]);
        let mut rng = RandomStream::seed_from_u64(0);
        for theta in space.latin_hypercube(100, &mut rng) {
            assert!(space.contains(&theta));
            assert_eq!(space.design(&theta).unwrap().k(), 2);
        }
    }

    #[test]
    fn rejects_bad_boxes() {
        let p = ShapingParams::default();
        assert!(DesignSpace::new(vec![0.0], vec![0.0], 1, p).is_err());
        assert!(DesignSpace::new(vec![0.0, 0.0, 0.0], vec![1.0; 3], 2, p).is_err());
    }
}
