use rand_distr::{Distribution, Normal};

use crate::agent::{self, QlConfig};
use crate::envs::{EnvDistribution, StepMeter};
use crate::error::{Error, Result};
use crate::sampling::DesignSpace;
use crate::RandomStream;

/// Source of noisy scores for a design at fidelity `(tau, q)`.
pub trait Simulator: Sync {
    fn space(&self) -> &DesignSpace;

    /// Scores of `q` independent replications, each trained for `tau` interactions.
    fn observe(
        &self,
        theta: &[f64],
        tau: usize,
        q: usize,
        rng: &mut RandomStream,
    ) -> Result<Vec<f64>>;

    /// Interactions charged so far.
    fn steps(&self) -> u64;
}

/// Q-learning on instances drawn from an environment distribution.
pub struct RlSimulator {
    pub dist: EnvDistribution,
    pub space: DesignSpace,
    pub ql: QlConfig,
    meter: StepMeter,
}

impl RlSimulator {
    pub fn new(dist: EnvDistribution, space: DesignSpace, ql: QlConfig) -> Result<Self> {
        dist.validate()?;
        if space.point_dim != dist.point_dim() {
            return Err(Error::Dimension {
                expected: dist.point_dim(),
                got: space.point_dim,
            });
        }
        Ok(RlSimulator {
            dist,
            space,
            ql,
            meter: StepMeter::new(),
        })
    }

    pub fn meter(&self) -> &StepMeter {
        &self.meter
    }
}

impl Simulator for RlSimulator {
    fn space(&self) -> &DesignSpace {
        &self.space
    }

    fn observe(
        &self,
        theta: &[f64],
        tau: usize,
        q: usize,
        rng: &mut RandomStream,
    ) -> Result<Vec<f64>> {
        let design = self.space.design(theta)?;
        let obs = agent::observe_metered(&self.dist, &design, tau, q, &self.ql, rng, &self.meter);
        Ok(obs.per_replication_scores)
    }

    fn steps(&self) -> u64 {
        self.meter.get()
    }
}

type ScoreFn = dyn Fn(&[f64], usize) -> f64 + Send + Sync;

/// Scores drawn directly as `u(theta, tau) + N(0, noise_variance)` per replication.
pub struct SyntheticSimulator {
    space: DesignSpace,
    u: Box<ScoreFn>,
    noise: Normal<f64>,
    meter: StepMeter,
}

impl SyntheticSimulator {
    pub fn new(
        space: DesignSpace,
        noise_variance: f64,
        u: impl Fn(&[f64], usize) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        let noise = Normal::new(0.0, noise_variance.sqrt())
            .map_err(|e| Error::Config(format!("noise variance {noise_variance}: {e}")))?;
        Ok(SyntheticSimulator {
            space,
            u: Box::new(u),
            noise,
            meter: StepMeter::new(),
        })
    }

    pub fn mean(&self, theta: &[f64], tau: usize) -> f64 {
        (self.u)(theta, tau)
    }
}

impl Simulator for SyntheticSimulator {
    fn space(&self) -> &DesignSpace {
        &self.space
    }

    fn observe(
        &self,
        theta: &[f64],
        tau: usize,
        q: usize,
        rng: &mut RandomStream,
    ) -> Result<Vec<f64>> {
        let mean = self.mean(theta, tau);
        self.meter.add((tau * q) as u64);
        Ok((0..q).map(|_| mean + self.noise.sample(rng)).collect())
    }

    fn steps(&self) -> u64 {
        self.meter.get()
    }
}
