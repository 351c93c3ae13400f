//! The optimization loop: initial design, sequential select/observe/update,
//! and the final recommendation. EI and LCB share the loop and differ only in
//! how the next design is chosen.

mod runlog;
mod simulator;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::acquisition::{self, best_mean, CandidateSet, SelectOptions};
use crate::error::{Error, Result};
use crate::gp::{
    self, condition, FinitePosterior, FitOptions, GpObservation, GpPoint, KernelParams,
};
use crate::shaping::SubgoalDesign;
use crate::RandomStream;

pub use runlog::{
    evaluations, logged_cost, read_log, read_log_file, split_log, EvaluationRecord, JsonlWriter,
    LogRecord, LogSink, NullSink, ObservationRecord, Phase, RunHeader,
};
pub use simulator::{RlSimulator, Simulator, SyntheticSimulator};

const CANDIDATE_STREAM: u64 = 0;
const INIT_STREAM: u64 = 1;
const OBSERVATION_STREAM: u64 = 1 << 32;

/// A seeded random stream for one purpose of a run.
pub fn stream(seed: u64, id: u64) -> RandomStream {
    let mut r = RandomStream::seed_from_u64(seed);
    r.set_stream(id);
    r
}

/// Stream of the `n`-th observation of a run.
pub fn observation_stream(seed: u64, n: usize) -> RandomStream {
    stream(seed, OBSERVATION_STREAM + n as u64)
}

/// How the next design is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum GpMethod {
    /// Gain in score per unit effort over designs, lengths and replications.
    Besd,
    /// Expected improvement over the best posterior mean, observed at full fidelity.
    Ei,
    /// Confidence bound `mu + kappa * sd` (or `mu - kappa * sd`), observed at full fidelity.
    Lcb { kappa: f64, subtract: bool },
}

impl GpMethod {
    pub fn lcb() -> Self {
        GpMethod::Lcb {
            kappa: 2.0,
            subtract: false,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GpMethod::Besd => "BESD",
            GpMethod::Ei => "EI",
            GpMethod::Lcb { .. } => "LCB",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct BesdConfig {
    pub taus: Vec<usize>,
    pub qs: Vec<usize>,
    /// Size of the finite design set.
    pub n_candidates: usize,
    /// Explicit finite design set; drawn by Latin hypercube when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub candidates: Option<Vec<Vec<f64>>>,
    pub init_per_tau: usize,
    /// Total interactions, initial design included.
    pub budget: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    /// Fixed per-replication noise variance; estimated from the initial design when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_variance: Option<f64>,
    /// Refit the kernel after every this many iterations.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refit_every: Option<usize>,
    pub select: SelectOptions,
    pub fit: FitOptions,
}

impl Default for BesdConfig {
    fn default() -> Self {
        BesdConfig {
            taus: vec![200, 600, 1000],
            qs: vec![5, 20],
            n_candidates: 100,
            candidates: None,
            init_per_tau: 10,
            budget: 2_000_000,
            max_iterations: None,
            noise_variance: None,
            refit_every: None,
            select: SelectOptions::default(),
            fit: FitOptions::default(),
        }
    }
}

impl BesdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.taus.is_empty()
            || self.qs.is_empty()
            || self.taus.contains(&0)
            || self.qs.contains(&0)
        {
            return Err(Error::Config(
                "taus and qs must be non-empty and positive".into(),
            ));
        }
        if self.candidates.is_none() && self.n_candidates == 0 {
            return Err(Error::Config("nCandidates must be positive".into()));
        }
        if self.init_per_tau == 0 {
            return Err(Error::Config("initPerTau must be positive".into()));
        }
        if matches!(self.noise_variance, Some(v) if !(v >= 0.0)) {
            return Err(Error::Config("noiseVariance must be non-negative".into()));
        }
        if self.refit_every == Some(0) {
            return Err(Error::Config("refitEvery must be positive".into()));
        }
        Ok(())
    }
}

/// State of a GP-driven run.
#[derive(Debug, Clone)]
pub struct RunState {
    pub method: GpMethod,
    pub config: BesdConfig,
    pub seed: u64,
    pub cand: CandidateSet,
    pub params: KernelParams,
    pub history: Vec<ObservationRecord>,
    pub post: FinitePosterior,
    pub cumulative_cost: u64,
    /// Recommended design index after each iteration.
    pub recommendations: Vec<usize>,
    header: RunHeader,
}

fn gp_obs(r: &ObservationRecord) -> GpObservation {
    GpObservation {
        point: GpPoint::new(r.theta.clone(), r.tau as f64),
        q: r.q,
        y: r.y,
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

impl RunState {
    /// Draws the design set and the initial design, observes it, estimates
    /// the noise, fits the kernel and conditions the posterior.
    pub fn init(
        sim: &dyn Simulator,
        method: GpMethod,
        config: BesdConfig,
        seed: u64,
        sink: &mut dyn LogSink,
    ) -> Result<Self> {
        config.validate()?;
        let space = sim.space();
        let thetas = match &config.candidates {
            Some(c) => c.clone(),
            None => space.latin_hypercube(config.n_candidates, &mut stream(seed, CANDIDATE_STREAM)),
        };
        if let Some(t) = thetas.iter().find(|t| !space.contains(t)) {
            return Err(Error::Config(format!(
                "candidate {t:?} outside the design space"
            )));
        }
        let cand = CandidateSet::new(thetas, config.taus.clone(), config.qs.clone())?;
        let header = RunHeader {
            method: method.name().into(),
            seed,
            space: space.clone(),
            config: serde_json::json!({ "method": method, "besd": config }),
            candidates: Some(cand.clone()),
        };
        sink.record(&LogRecord::Header(header.clone()))?;

        let mut init_rng = stream(seed, INIT_STREAM);
        let q = cand.q_min();
        let mut history: Vec<ObservationRecord> = vec![];
        let mut cumulative_cost = 0;
        for &tau in &cand.taus {
            for theta in space.latin_hypercube(config.init_per_tau, &mut init_rng) {
                let n = history.len();
                let replications = sim.observe(&theta, tau, q, &mut observation_stream(seed, n))?;
                let cost = (tau * q) as u64;
                cumulative_cost += cost;
                let rec = ObservationRecord {
                    method: method.name().into(),
                    n,
                    phase: Phase::Init,
                    theta,
                    theta_index: None,
                    tau,
                    q,
                    y: mean(&replications),
                    replications,
                    cost,
                    cumulative_cost,
                    acquisition: None,
                    gis: None,
                    theta_rec: None,
                    mu_star: None,
                };
                sink.record(&LogRecord::Observation(rec.clone()))?;
                history.push(rec);
            }
        }
        let noise = match config.noise_variance {
            Some(v) => v,
            None => {
                let groups: Vec<Vec<f64>> =
                    history.iter().map(|r| r.replications.clone()).collect();
                gp::estimate_noise(&groups)?
            }
        };
        let obs: Vec<GpObservation> = history.iter().map(gp_obs).collect();
        let fit = FitOptions {
            seed: config.fit.seed ^ seed,
            ..config.fit
        };
        let params = gp::fit_map(&obs, &space.widths(), noise, &fit)?;
        sink.record(&LogRecord::Kernel {
            n: history.len(),
            params: params.clone(),
        })?;
        let post = Self::posterior(&params, &history, &cand)?;
        Ok(RunState {
            method,
            config,
            seed,
            cand,
            params,
            history,
            post,
            cumulative_cost,
            recommendations: vec![],
            header,
        })
    }

    fn posterior(
        params: &KernelParams,
        history: &[ObservationRecord],
        cand: &CandidateSet,
    ) -> Result<FinitePosterior> {
        let obs: Vec<GpObservation> = history.iter().map(gp_obs).collect();
        FinitePosterior::from_posterior(&condition(params, &obs)?, cand.points())
    }

    fn set_params(&mut self, params: KernelParams) -> Result<()> {
        self.post = Self::posterior(&params, &self.history, &self.cand)?;
        self.params = params;
        Ok(())
    }

    pub fn header(&self) -> &RunHeader {
        &self.header
    }

    pub fn iterations(&self) -> usize {
        self.recommendations.len()
    }

    pub fn remaining_budget(&self) -> u64 {
        self.config.budget.saturating_sub(self.cumulative_cost)
    }

    /// Index into the design set of the largest posterior mean at `tau_max`.
    pub fn recommend_index(&self) -> usize {
        best_mean(&self.post, &self.cand).0
    }

    pub fn recommend_theta(&self) -> &[f64] {
        &self.cand.thetas[self.recommend_index()]
    }

    /// The recommended subgoal design.
    pub fn recommend(&self) -> Result<SubgoalDesign> {
        self.header.space.design(self.recommend_theta())
    }

    /// Design with the highest observed score at `tau_max` so far.
    pub fn best_observed(&self) -> Option<&ObservationRecord> {
        let tau_max = self.cand.tau_max();
        self.history.iter().filter(|r| r.tau == tau_max).fold(
            None,
            |best: Option<&ObservationRecord>, r| match best {
                Some(b) if b.y >= r.y => Some(b),
                _ => Some(r),
            },
        )
    }

    /// The design a method reports after the latest iteration: the posterior
    /// maximizer for BESD, the best observed design for EI and LCB.
    pub fn reported_theta(&self) -> Vec<f64> {
        match self.method {
            GpMethod::Besd => self.recommend_theta().to_vec(),
            _ => self
                .best_observed()
                .map(|r| r.theta.clone())
                .unwrap_or_else(|| self.recommend_theta().to_vec()),
        }
    }

    fn done(&self) -> bool {
        self.config
            .max_iterations
            .is_some_and(|m| self.iterations() >= m)
    }

    /// Chooses the next decision, or `None` when the budget cannot pay for one.
    fn choose(&self) -> Result<Option<(usize, usize, usize, f64, Option<f64>)>> {
        let remaining = self.remaining_budget();
        match self.method {
            GpMethod::Besd => {
                let opts = SelectOptions {
                    max_cost: Some(
                        self.config
                            .select
                            .max_cost
                            .map_or(remaining, |m| m.min(remaining)),
                    ),
                    ..self.config.select
                };
                Ok(
                    acquisition::select_next(&self.post, &self.cand, &opts)?.map(|r| {
                        (
                            r.decision.theta_index,
                            r.tau,
                            r.q,
                            r.gis_per_effort,
                            Some(r.gis),
                        )
                    }),
                )
            }
            GpMethod::Ei | GpMethod::Lcb { .. } => {
                let (tau, q) = (self.cand.tau_max(), self.cand.q_max());
                if (tau * q) as u64 > remaining {
                    return Ok(None);
                }
                let rows = self.cand.tau_max_rows();
                let incumbent = best_mean(&self.post, &self.cand).1;
                let mut best = (0, f64::NEG_INFINITY);
                for (i, &r) in rows.iter().enumerate() {
                    let (mu, sd) = (self.post.mean[r], self.post.variance(r).max(0.0).sqrt());
                    let v = match self.method {
                        GpMethod::Lcb { kappa, subtract } => {
                            acquisition::confidence_bound(mu, sd, kappa, subtract)
                        }
                        _ => acquisition::expected_improvement(mu, sd, incumbent),
                    };
                    if v > best.1 {
                        best = (i, v);
                    }
                }
                Ok(Some((best.0, tau, q, best.1, None)))
            }
        }
    }

    /// One select/observe/update step. Returns `false` without observing when
    /// the budget or the iteration limit is exhausted.
    pub fn iterate(&mut self, sim: &dyn Simulator, sink: &mut dyn LogSink) -> Result<bool> {
        if self.done() {
            return Ok(false);
        }
        if let Some(m) = self.config.refit_every {
            if self.iterations() > 0 && self.iterations().is_multiple_of(m) {
                let obs: Vec<GpObservation> = self.history.iter().map(gp_obs).collect();
                let fit = FitOptions {
                    seed: self.config.fit.seed ^ self.seed,
                    ..self.config.fit
                };
                let params = gp::fit_map(
                    &obs,
                    &self.header.space.widths(),
                    self.params.noise_variance,
                    &fit,
                )?;
                sink.record(&LogRecord::Kernel {
                    n: self.history.len(),
                    params: params.clone(),
                })?;
                self.set_params(params)?;
            }
        }
        let Some((theta_index, tau, q, acq, gis)) = self.choose()? else {
            return Ok(false);
        };
        let n = self.history.len();
        let theta = self.cand.thetas[theta_index].clone();
        let replications = sim.observe(&theta, tau, q, &mut observation_stream(self.seed, n))?;
        let cost = (tau * q) as u64;
        let rec = ObservationRecord {
            method: self.method.name().into(),
            n,
            phase: Phase::Iter,
            theta,
            theta_index: Some(theta_index),
            tau,
            q,
            y: mean(&replications),
            replications,
            cost,
            cumulative_cost: self.cumulative_cost + cost,
            acquisition: Some(acq),
            gis,
            theta_rec: None,
            mu_star: None,
        };
        let rec = self.apply_iteration(rec)?;
        sink.record(&LogRecord::Observation(rec))?;
        Ok(true)
    }

    fn apply_iteration(&mut self, mut rec: ObservationRecord) -> Result<ObservationRecord> {
        let i = rec.theta_index.ok_or_else(|| Error::Log {
            line: rec.n + 1,
            message: "iteration record without a design index".into(),
        })?;
        let tau_index = self
            .cand
            .taus
            .iter()
            .position(|&t| t == rec.tau)
            .ok_or_else(|| Error::Log {
                line: rec.n + 1,
                message: format!("tau {} not in the set", rec.tau),
            })?;
        self.post
            .update(self.cand.point_index(i, tau_index), rec.q, rec.y)?;
        self.cumulative_cost += rec.cost;
        rec.cumulative_cost = self.cumulative_cost;
        let (rec_index, mu_star) = best_mean(&self.post, &self.cand);
        self.recommendations.push(rec_index);
        self.history.push(rec);
        let theta_rec = self.reported_theta();
        let rec = self.history.last_mut().unwrap();
        rec.theta_rec = Some(theta_rec);
        rec.mu_star = Some(mu_star);
        Ok(rec.clone())
    }

    /// Initializes and iterates until the budget or iteration limit is reached.
    pub fn run(
        sim: &dyn Simulator,
        method: GpMethod,
        config: BesdConfig,
        seed: u64,
        sink: &mut dyn LogSink,
    ) -> Result<Self> {
        let mut state = Self::init(sim, method, config, seed, sink)?;
        while state.iterate(sim, sink)? {}
        Ok(state)
    }

    /// Rebuilds a run from its log without simulating anything.
    pub fn replay(records: &[LogRecord]) -> Result<Self> {
        let (header, _) = split_log(records)?;
        let method: GpMethod = serde_json::from_value(header.config["method"].clone())?;
        let config: BesdConfig = serde_json::from_value(header.config["besd"].clone())?;
        let cand = header.candidates.clone().ok_or_else(|| Error::Log {
            line: 1,
            message: "header has no candidate set".into(),
        })?;
        let mut state: Option<RunState> = None;
        let mut init: Vec<ObservationRecord> = vec![];
        for (line, r) in records.iter().enumerate().skip(1) {
            let err = |message: &str| Error::Log {
                line: line + 1,
                message: message.into(),
            };
            match r {
                LogRecord::Header(_) => return Err(err("duplicate header")),
                LogRecord::Evaluation(_) => {}
                LogRecord::Kernel { params, .. } => match &mut state {
                    Some(s) => s.set_params(params.clone())?,
                    None => {
                        let post = Self::posterior(params, &init, &cand)?;
                        state = Some(RunState {
                            method,
                            config: config.clone(),
                            seed: header.seed,
                            cand: cand.clone(),
                            params: params.clone(),
                            cumulative_cost: init.iter().map(|r| r.cost).sum(),
                            history: std::mem::take(&mut init),
                            post,
                            recommendations: vec![],
                            header: header.clone(),
                        });
                    }
                },
                LogRecord::Observation(o) => match (&mut state, o.phase) {
                    (None, Phase::Init) => init.push(o.clone()),
                    (Some(s), Phase::Iter) => {
                        s.apply_iteration(o.clone())?;
                    }
                    _ => return Err(err("observation out of order")),
                },
            }
        }
        state.ok_or_else(|| Error::Log {
            line: records.len(),
            message: "log ends before the kernel fit".into(),
        })
    }

    /// Continues a logged run; `sink` receives only the new records.
    pub fn resume(
        sim: &dyn Simulator,
        records: &[LogRecord],
        sink: &mut dyn LogSink,
    ) -> Result<Self> {
        let mut state = Self::replay(records)?;
        while state.iterate(sim, sink)? {}
        Ok(state)
    }
}
