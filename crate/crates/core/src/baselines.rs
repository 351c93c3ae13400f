//! Comparison methods: plain and transfer Q-learning without subgoals,
//! Hyperband over subgoal designs, and the EI / confidence-bound GP loops.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{self, QTable, QlConfig};
use crate::besd::{
    observation_stream, stream, BesdConfig, GpMethod, LogRecord, LogSink, ObservationRecord, Phase,
    RunHeader, RunState, Simulator,
};
use crate::envs::EnvDistribution;
use crate::error::{Error, Result};
use crate::shaping::SubgoalDesign;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaselineMethod {
    #[serde(rename = "QL")]
    Ql,
    #[serde(rename = "TQL")]
    Tql,
    #[serde(rename = "HB")]
    Hb,
    #[serde(rename = "EI")]
    Ei,
    #[serde(rename = "LCB")]
    Lcb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BaselineRun {
    pub method: BaselineMethod,
    /// Best design found; absent for the methods that use no subgoals.
    pub best_design: Option<SubgoalDesign>,
    /// `(cumulative cost, best score so far)`, cost strictly increasing.
    pub cost_curve: Vec<(u64, f64)>,
}

/// Trains on one fresh test instance per trial, optionally starting from a
/// stored table, and returns the extrinsic score of each trial.
fn test_scores(
    dist: &EnvDistribution,
    tau: usize,
    cfg: &QlConfig,
    trials: usize,
    seed: u64,
    start: impl Fn(usize) -> Option<QTable> + Sync,
) -> Vec<f64> {
    let none = SubgoalDesign::none();
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(seed, t as u64);
            let inst = dist.sample_with(&mut rng);
            let table = match start(t) {
                Some(table) => agent::train_from(&inst, &none, tau, table, &mut rng),
                None => agent::train(&inst, &none, tau, cfg, &mut rng),
            };
            agent::evaluate_extrinsic(&inst, &none, &table, cfg.eval_rollouts, &mut rng)
        })
        .collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Q-learning without subgoals for `tau_max` interactions on each of `trials` test instances.
pub fn run_ql(
    dist: &EnvDistribution,
    tau_max: usize,
    cfg: &QlConfig,
    trials: usize,
    seed: u64,
) -> Result<BaselineRun> {
    if trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    let scores = test_scores(dist, tau_max, cfg, trials, seed, |_| None);
    Ok(BaselineRun {
        method: BaselineMethod::Ql,
        best_design: None,
        cost_curve: vec![(tau_max as u64, mean(&scores))],
    })
}

/// Q-tables trained on training instances, to warm-start test runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferStore {
    pub tables: Vec<QTable>,
}

impl TransferStore {
    /// Trains `n` tables for `tau` interactions each on fresh instances.
    pub fn train(
        dist: &EnvDistribution,
        n: usize,
        tau: usize,
        cfg: &QlConfig,
        seed: u64,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config(
                "at least one stored table is required".into(),
            ));
        }
        let none = SubgoalDesign::none();
        let tables = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(seed, (1 << 40) + i as u64);
                let inst = dist.sample_with(&mut rng);
                agent::train(&inst, &none, tau, cfg, &mut rng)
            })
            .collect();
        Ok(TransferStore { tables })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Q-learning warm-started from a uniformly chosen stored table.
pub fn run_tql(
    dist: &EnvDistribution,
    tau_max: usize,
    cfg: &QlConfig,
    store: &TransferStore,
    trials: usize,
    seed: u64,
) -> Result<BaselineRun> {
    if trials == 0 || store.tables.is_empty() {
        return Err(Error::Config(
            "trials and stored tables must be non-empty".into(),
        ));
    }
    let scores = run_tql_scores(dist, tau_max, cfg, store, trials, seed);
    Ok(BaselineRun {
        method: BaselineMethod::Tql,
        best_design: None,
        cost_curve: vec![(tau_max as u64, mean(&scores))],
    })
}

/// Per-trial scores of transfer Q-learning; each trial starts from a
/// uniformly chosen stored table.
pub fn run_tql_scores(
    dist: &EnvDistribution,
    tau_max: usize,
    cfg: &QlConfig,
    store: &TransferStore,
    trials: usize,
    seed: u64,
) -> Vec<f64> {
    let mut pick = stream(seed, 1 << 41);
    let choice: Vec<usize> = (0..trials)
        .map(|_| pick.gen_range(0..store.tables.len()))
        .collect();
    test_scores(dist, tau_max, cfg, trials, seed, |t| {
        Some(store.tables[choice[t]].clone())
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct HyperbandConfig {
    pub eta: usize,
    /// Cohort size of the first round.
    pub r: usize,
    pub tau_min: usize,
    /// Replications per evaluation.
    pub q: usize,
    pub budget: u64,
}

impl Default for HyperbandConfig {
    fn default() -> Self {
        HyperbandConfig {
            eta: 3,
            r: 81,
            tau_min: 200,
            q: 5,
            budget: 2_000_000,
        }
    }
}

/// One round of a bracket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Round {
    pub cohort: usize,
    pub tau: usize,
}

/// Rounds of one bracket: `floor(log_eta r)` rounds, round `i` evaluating
/// `r / eta^i` designs for `tau_min * eta^i` interactions each.
pub fn hyperband_schedule(eta: usize, r: usize, tau_min: usize) -> Result<Vec<Round>> {
    if eta < 2 || r < eta || tau_min == 0 {
        return Err(Error::Config(format!(
            "invalid Hyperband settings eta={eta}, R={r}, tauMin={tau_min}"
        )));
    }
    let mut rounds = vec![];
    let mut scale = 1;
    while scale * eta <= r || rounds.is_empty() {
        rounds.push(Round {
            cohort: r / scale,
            tau: tau_min * scale,
        });
        if scale * eta > r {
            break;
        }
        scale *= eta;
    }
    Ok(rounds)
}

/// Indices of the best `ceil(n / eta)` scores, highest first; ties keep the earlier index.
pub fn survivors(scores: &[f64], eta: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(scores.len().div_ceil(eta));
    order
}

#[derive(Debug, Clone)]
pub struct HyperbandRun {
    pub history: Vec<ObservationRecord>,
    pub best: Option<ObservationRecord>,
    pub cumulative_cost: u64,
}

/// Successive halving repeated until the budget cannot pay for the next evaluation.
///
/// Each bracket draws a fresh Latin-hypercube cohort; the survivors of a round
/// form the cohort of the next. The best design is the highest score among
/// evaluations at the longest training length reached so far.
pub fn run_hyperband(
    sim: &dyn Simulator,
    cfg: &HyperbandConfig,
    seed: u64,
    sink: &mut dyn LogSink,
) -> Result<HyperbandRun> {
    let schedule = hyperband_schedule(cfg.eta, cfg.r, cfg.tau_min)?;
    if cfg.q == 0 {
        return Err(Error::Config("q must be positive".into()));
    }
    sink.record(&LogRecord::Header(RunHeader {
        method: "HB".into(),
        seed,
        space: sim.space().clone(),
        config: serde_json::to_value(cfg)?,
        candidates: None,
    }))?;
    let mut run = HyperbandRun {
        history: vec![],
        best: None,
        cumulative_cost: 0,
    };
    for bracket in 0u64.. {
        let mut cohort = sim
            .space()
            .latin_hypercube(cfg.r, &mut stream(seed, bracket));
        for round in &schedule {
            let cost = (round.tau * cfg.q) as u64;
            let affordable = ((cfg.budget - run.cumulative_cost) / cost) as usize;
            if affordable == 0 {
                return Ok(run);
            }
            cohort.truncate(affordable);
            let base = run.history.len();
            let results: Vec<Vec<f64>> = cohort
                .par_iter()
                .enumerate()
                .map(|(i, theta)| {
                    sim.observe(
                        theta,
                        round.tau,
                        cfg.q,
                        &mut observation_stream(seed, base + i),
                    )
                })
                .collect::<Result<_>>()?;
            let mut ys = vec![];
            for (theta, replications) in cohort.iter().zip(results) {
                let y = mean(&replications);
                ys.push(y);
                run.cumulative_cost += cost;
                let better = match &run.best {
                    None => true,
                    Some(b) => round.tau > b.tau || (round.tau == b.tau && y > b.y),
                };
                let mut rec = ObservationRecord {
                    method: "HB".into(),
                    n: run.history.len(),
                    phase: Phase::Iter,
                    theta: theta.clone(),
                    theta_index: None,
                    tau: round.tau,
                    q: cfg.q,
                    y,
                    replications,
                    cost,
                    cumulative_cost: run.cumulative_cost,
                    acquisition: None,
                    gis: None,
                    theta_rec: None,
                    mu_star: None,
                };
                if better {
                    run.best = Some(rec.clone());
                }
                rec.theta_rec = run.best.as_ref().map(|b| b.theta.clone());
                sink.record(&LogRecord::Observation(rec.clone()))?;
                run.history.push(rec);
            }
            cohort = survivors(&ys, cfg.eta)
                .into_iter()
                .map(|i| cohort[i].clone())
                .collect();
        }
    }
    unreachable!("brackets repeat until the budget runs out")
}

impl HyperbandRun {
    pub fn to_baseline(&self, sim: &dyn Simulator) -> Result<BaselineRun> {
        let mut curve = vec![];
        let mut best: Option<(usize, f64)> = None;
        for r in &self.history {
            if best.is_none_or(|(t, y)| r.tau > t || (r.tau == t && r.y > y)) {
                best = Some((r.tau, r.y));
            }
            curve.push((r.cumulative_cost, best.unwrap().1));
        }
        let best_design = match &self.best {
            Some(b) => Some(sim.space().design(&b.theta)?),
            None => None,
        };
        Ok(BaselineRun {
            method: BaselineMethod::Hb,
            best_design,
            cost_curve: curve,
        })
    }
}

fn gp_baseline(state: &RunState, method: BaselineMethod) -> Result<BaselineRun> {
    let tau_max = state.cand.tau_max();
    let mut curve = vec![];
    let mut best = f64::NEG_INFINITY;
    for r in &state.history {
        if r.tau == tau_max {
            best = best.max(r.y);
        }
        if r.phase == Phase::Iter {
            curve.push((r.cumulative_cost, best));
        }
    }
    let best_design = match state.best_observed() {
        Some(b) => Some(state.header().space.design(&b.theta)?),
        None => None,
    };
    Ok(BaselineRun {
        method,
        best_design,
        cost_curve: curve,
    })
}

/// Expected improvement at full fidelity, sharing the BESD initial design.
pub fn run_ei(
    sim: &dyn Simulator,
    config: BesdConfig,
    seed: u64,
    sink: &mut dyn LogSink,
) -> Result<(RunState, BaselineRun)> {
    let state = RunState::run(sim, GpMethod::Ei, config, seed, sink)?;
    let run = gp_baseline(&state, BaselineMethod::Ei)?;
    Ok((state, run))
}

/// Confidence-bound selection at full fidelity, sharing the BESD initial design.
pub fn run_lcb(
    sim: &dyn Simulator,
    config: BesdConfig,
    kappa: f64,
    subtract: bool,
    seed: u64,
    sink: &mut dyn LogSink,
) -> Result<(RunState, BaselineRun)> {
    let state = RunState::run(sim, GpMethod::Lcb { kappa, subtract }, config, seed, sink)?;
    let run = gp_baseline(&state, BaselineMethod::Lcb)?;
    Ok((state, run))
}
