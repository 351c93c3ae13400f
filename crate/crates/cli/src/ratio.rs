//! Paired comparison of agents trained with and without subgoals.

use anyhow::{ensure, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use besd_core::agent::{self, QlConfig};
use besd_core::besd::stream;
use besd_core::envs::{DomainId, EnvDistribution};
use besd_core::shaping::SubgoalDesign;

/// Steps-to-goal measurement window of a domain.
pub fn default_window(domain: DomainId) -> usize {
    match domain {
        DomainId::Gw10 => 100,
        DomainId::Tr => 200,
        DomainId::Mc => 1000,
        DomainId::Key2 | DomainId::Key3 => 500,
        DomainId::Gw20 => 1000,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum RatioMetric {
    /// Greedy steps from the start to the goal; lower is better.
    StepsToGoal,
    /// Extrinsic discounted return; higher is better.
    Reward,
}

impl RatioMetric {
    pub fn for_domain(domain: DomainId) -> Self {
        if domain == DomainId::Tr {
            RatioMetric::Reward
        } else {
            RatioMetric::StepsToGoal
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RatioReport {
    pub metric: RatioMetric,
    pub trials: usize,
    pub shaped: f64,
    pub scratch: f64,
    pub shaped_se: f64,
    pub scratch_se: f64,
    /// `shaped / scratch`.
    pub ratio: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct RatioSettings {
    pub tau: usize,
    pub window: usize,
    pub trials: usize,
    pub seed: u64,
}

pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn measure(
    inst: &besd_core::envs::MdpInstance,
    design: &SubgoalDesign,
    metric: RatioMetric,
    s: &RatioSettings,
    cfg: &QlConfig,
    rng: &mut besd_core::RandomStream,
) -> f64 {
    let table = agent::train(inst, design, s.tau, cfg, rng);
    match metric {
        RatioMetric::StepsToGoal => {
            agent::steps_to_goal(inst, design, &table, s.window, rng) as f64
        }
        RatioMetric::Reward => {
            agent::evaluate_extrinsic(inst, design, &table, cfg.eval_rollouts, rng)
        }
    }
}

/// Trains a shaped and an unshaped agent on each of `trials` fresh test
/// instances with identical random streams, and compares their performance.
pub fn ratio_report(
    dist: &EnvDistribution,
    design: &SubgoalDesign,
    settings: &RatioSettings,
    cfg: &QlConfig,
) -> Result<RatioReport> {
    ensure!(settings.trials >= 1, "trials must be at least 1");
    let metric = RatioMetric::for_domain(dist.domain);
    let none = SubgoalDesign::none();
    let pairs: Vec<(f64, f64)> = (0..settings.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(settings.seed, t as u64);
            let inst = dist.sample_with(&mut rng);
            let mut paired = rng.clone();
            let shaped = measure(&inst, design, metric, settings, cfg, &mut rng);
            let scratch = measure(&inst, &none, metric, settings, cfg, &mut paired);
            (shaped, scratch)
        })
        .collect();
    let (shaped, scratch): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let (sm, sse) = mean_se(&shaped);
    let (cm, cse) = mean_se(&scratch);
    Ok(RatioReport {
        metric,
        trials: settings.trials,
        shaped: sm,
        scratch: cm,
        shaped_se: sse,
        scratch_se: cse,
        ratio: sm / cm,
    })
}

/// Mean and standard error of the extrinsic score of agents trained with
/// `design` for `tau` interactions on `trials` fresh test instances.
pub fn score_design(
    dist: &EnvDistribution,
    design: &SubgoalDesign,
    tau: usize,
    trials: usize,
    cfg: &QlConfig,
    seed: u64,
) -> (f64, f64) {
    let scores: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(seed, t as u64);
            let inst = dist.sample_with(&mut rng);
            let table = agent::train(&inst, design, tau, cfg, &mut rng);
            agent::evaluate_extrinsic(&inst, design, &table, cfg.eval_rollouts, &mut rng)
        })
        .collect();
    mean_se(&scores)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_design_gives_unit_ratio() {
        let dist = EnvDistribution::new(DomainId::Gw10);
        let s = RatioSettings {
            tau: 300,
            window: 100,
            trials: 10,
            seed: 1,
        };
        let r = ratio_report(&dist, &SubgoalDesign::none(), &s, &QlConfig::default()).unwrap();
        assert_eq!(r.ratio, 1.0);
        assert_eq!(r.metric, RatioMetric::StepsToGoal);
    }

    #[test]
    fn treasure_uses_reward() {
        assert_eq!(RatioMetric::for_domain(DomainId::Tr), RatioMetric::Reward);
    }

    #[test]
    fn mean_and_standard_error() {
        let (m, se) = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 12.0).sqrt()).abs() < 1e-12);
        assert_eq!(mean_se(&[7.0]), (7.0, 0.0));
    }
}
