use std::fmt;
use std::str::FromStr;

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use besd_core::acquisition::SelectOptions;
use besd_core::agent::QlConfig;
use besd_core::besd::BesdConfig;
use besd_core::envs::{DomainId, EnvDistribution};
use besd_core::gp::FitOptions;
use besd_core::sampling::DesignSpace;
use besd_core::shaping::ShapingParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MethodId {
    #[serde(rename = "BESD")]
    Besd,
    #[serde(rename = "EI")]
    Ei,
    #[serde(rename = "LCB")]
    Lcb,
    #[serde(rename = "HB")]
    Hb,
    #[serde(rename = "QL")]
    Ql,
    #[serde(rename = "TQL")]
    Tql,
}

impl MethodId {
    pub const ALL: [MethodId; 6] = [
        MethodId::Besd,
        MethodId::Ei,
        MethodId::Lcb,
        MethodId::Hb,
        MethodId::Ql,
        MethodId::Tql,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MethodId::Besd => "BESD",
            MethodId::Ei => "EI",
            MethodId::Lcb => "LCB",
            MethodId::Hb => "HB",
            MethodId::Ql => "QL",
            MethodId::Tql => "TQL",
        }
    }

    /// Whether the method searches over subgoal designs.
    pub fn uses_subgoals(self) -> bool {
        !matches!(self, MethodId::Ql | MethodId::Tql)
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodId {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        MethodId::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .with_context(|| format!("unknown method `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HyperbandSettings {
    pub eta: usize,
    pub r: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LcbSettings {
    pub kappa: f64,
    /// Select the argmax of `mu - kappa * sd` instead of `mu + kappa * sd`.
    pub subtract: bool,
}

/// Everything needed to reproduce an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExperimentConfig {
    pub domain: DomainId,
    pub tau_set: Vec<usize>,
    pub q_set: Vec<usize>,
    /// Number of subgoals.
    pub k: usize,
    pub w1: f64,
    pub w2: f64,
    pub capture_radius: f64,
    pub lhs_size: usize,
    pub init_per_tau: usize,
    pub cost_budget: u64,
    pub seeds: Vec<u64>,
    pub methods: Vec<MethodId>,
    /// Test MDPs per intermediate checkpoint.
    pub eval_trials: usize,
    /// Test MDPs for the final checkpoint.
    pub final_trials: usize,
    /// Evenly spaced cost checkpoints of the score curve.
    pub checkpoints: usize,
    pub ql: QlConfig,
    pub hyperband: HyperbandSettings,
    pub lcb: LcbSettings,
    /// Stored tables for transfer Q-learning.
    pub stored_tables: usize,
    /// Fixed overhead added to each decision's cost by the acquisition.
    pub overhead: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_variance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refit_every: Option<usize>,
    pub fit_restarts: usize,
    /// Overrides of the domain's default distribution.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distribution: Option<EnvDistribution>,
}

impl ExperimentConfig {
    /// Per-domain defaults.
    pub fn defaults(domain: DomainId) -> Self {
        let (tau_set, q_set, cost_budget) = match domain {
            DomainId::Gw10 => (vec![200, 600, 1000], vec![5, 20], 2_000_000),
            DomainId::Gw20 => (vec![4000, 7000, 10000], vec![20], 20_000_000),
            DomainId::Tr => (vec![400, 1200, 2000], vec![5, 20], 4_000_000),
            DomainId::Mc => (vec![4000, 7000, 10000], vec![10, 50], 20_000_000),
            DomainId::Key2 | DomainId::Key3 => (vec![400, 700, 1000], vec![5, 20], 3_000_000),
        };
        let shaping = ShapingParams::default();
        ExperimentConfig {
            domain,
            tau_set,
            q_set,
            k: if domain == DomainId::Key3 { 3 } else { 2 },
            w1: shaping.w1,
            w2: shaping.w2,
            capture_radius: shaping.capture_radius,
            lhs_size: 100,
            init_per_tau: 10,
            cost_budget,
            seeds: vec![0, 1, 2],
            methods: MethodId::ALL.to_vec(),
            eval_trials: 50,
            final_trials: 200,
            checkpoints: 10,
            ql: QlConfig::default(),
            hyperband: HyperbandSettings { eta: 3, r: 81 },
            lcb: LcbSettings {
                kappa: 2.0,
                subtract: false,
            },
            stored_tables: 20,
            overhead: 0.0,
            noise_variance: None,
            refit_every: None,
            fit_restarts: 8,
            distribution: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(!self.tau_set.is_empty(), "tauSet must not be empty");
        ensure!(!self.q_set.is_empty(), "qSet must not be empty");
        ensure!(
            self.tau_set.iter().all(|&t| t > 0),
            "tauSet entries must be positive"
        );
        ensure!(
            self.q_set.iter().all(|&q| q > 0),
            "qSet entries must be positive"
        );
        ensure!(self.k >= 1, "k must be at least 1");
        ensure!(
            self.w1 >= 0.0 && self.w1.is_finite(),
            "w1 must be non-negative"
        );
        ensure!(self.w2 > 0.0 && self.w2.is_finite(), "w2 must be positive");
        ensure!(
            self.capture_radius >= 0.0,
            "captureRadius must be non-negative"
        );
        ensure!(self.lhs_size >= 2, "lhsSize must be at least 2");
        ensure!(self.init_per_tau >= 1, "initPerTau must be at least 1");
        ensure!(self.cost_budget > 0, "costBudget must be positive");
        ensure!(!self.seeds.is_empty(), "seeds must not be empty");
        ensure!(!self.methods.is_empty(), "methods must not be empty");
        ensure!(
            self.eval_trials >= 1 && self.final_trials >= 1,
            "evaluation trials must be positive"
        );
        ensure!(self.checkpoints >= 1, "checkpoints must be at least 1");
        ensure!(self.stored_tables >= 1, "storedTables must be at least 1");
        ensure!(
            self.hyperband.eta >= 2 && self.hyperband.r >= self.hyperband.eta,
            "hyperband needs eta >= 2 and r >= eta"
        );
        ensure!(self.overhead >= 0.0, "overhead must be non-negative");
        if self.noise_variance.is_none() && self.q_set.iter().min() == Some(&1) {
            bail!("noise estimation needs min(qSet) >= 2 unless noiseVariance is given");
        }
        let dist = self.distribution();
        ensure!(
            dist.domain == self.domain,
            "distribution domain {} does not match {}",
            dist.domain,
            self.domain
        );
        dist.validate().context("invalid distribution")?;
        Ok(())
    }

    pub fn distribution(&self) -> EnvDistribution {
        self.distribution
            .clone()
            .unwrap_or_else(|| EnvDistribution::new(self.domain))
    }

    pub fn shaping(&self) -> ShapingParams {
        ShapingParams {
            w1: self.w1,
            w2: self.w2,
            capture_radius: self.capture_radius,
        }
    }

    pub fn space(&self) -> Result<DesignSpace> {
        Ok(DesignSpace::for_distribution(
            &self.distribution(),
            self.k,
            self.shaping(),
        )?)
    }

    pub fn tau_max(&self) -> usize {
        *self.tau_set.iter().max().unwrap()
    }

    pub fn besd(&self) -> BesdConfig {
        BesdConfig {
            taus: self.tau_set.clone(),
            qs: self.q_set.clone(),
            n_candidates: self.lhs_size,
            candidates: None,
            init_per_tau: self.init_per_tau,
            budget: self.cost_budget,
            max_iterations: None,
            noise_variance: self.noise_variance,
            refit_every: self.refit_every,
            select: SelectOptions {
                overhead: self.overhead,
                max_cost: None,
            },
            fit: FitOptions {
                restarts: self.fit_restarts,
                ..Default::default()
            },
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(s).context("cannot parse experiment config")?;
        cfg.validate()?;
        Ok(cfg)
    }
}
