//! Seeded runs of every configured method, checkpoint evaluation and the summary CSV.

use std::collections::HashMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use besd_core::baselines::{self, HyperbandConfig, TransferStore};
use besd_core::besd::{
    EvaluationRecord, GpMethod, JsonlWriter, LogRecord, LogSink, RlSimulator, RunHeader, RunState,
    Simulator,
};
use besd_core::shaping::SubgoalDesign;

use crate::config::{ExperimentConfig, MethodId};
use crate::ratio::score_design;

/// Test instances used to score checkpoints are shared by all methods of a seed.
fn eval_seed(seed: u64) -> u64 {
    seed.wrapping_add(0x5eed_0000)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SummaryRow {
    pub domain: String,
    pub method: MethodId,
    pub seed: u64,
    pub cost: u64,
    pub mean: f64,
    pub se: f64,
    pub trials: usize,
}

#[derive(Debug, Clone)]
pub struct CellOutput {
    pub method: MethodId,
    pub seed: u64,
    pub log_path: PathBuf,
    pub rows: Vec<SummaryRow>,
    /// Environment interactions charged by the run.
    pub steps: u64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub cells: Vec<CellOutput>,
    pub summary_path: PathBuf,
}

pub fn log_file_name(cfg: &ExperimentConfig, method: MethodId, seed: u64) -> String {
    format!("{}-{}-seed{}.jsonl", cfg.domain, method, seed)
}

/// Cost checkpoints `budget * j / checkpoints`, `j = 1..=checkpoints`.
pub fn checkpoint_costs(cfg: &ExperimentConfig) -> Vec<u64> {
    let n = cfg.checkpoints as u64;
    (1..=n).map(|j| cfg.cost_budget * j / n).collect()
}

/// The design each checkpoint reports: the latest recommendation at or below its cost.
pub fn checkpoint_designs(records: &[LogRecord], costs: &[u64]) -> Vec<Option<Vec<f64>>> {
    costs
        .iter()
        .map(|&c| {
            records.iter().rev().find_map(|r| match r {
                LogRecord::Observation(o) if o.cumulative_cost <= c => o.theta_rec.clone(),
                _ => None,
            })
        })
        .collect()
}

fn run_cell(
    cfg: &ExperimentConfig,
    method: MethodId,
    seed: u64,
    out_dir: &Path,
) -> Result<CellOutput> {
    let dist = cfg.distribution();
    let space = cfg.space()?;
    let tau_max = cfg.tau_max();
    let log_path = out_dir.join(log_file_name(cfg, method, seed));
    let file =
        File::create(&log_path).with_context(|| format!("cannot create {}", log_path.display()))?;
    let mut records: Vec<LogRecord> = vec![];
    let mut sink = Tee {
        file: JsonlWriter(BufWriter::new(file)),
        records: &mut records,
    };
    let costs = checkpoint_costs(cfg);
    let last = costs.len() - 1;
    let trials_at = |j: usize| {
        if j == last {
            cfg.final_trials
        } else {
            cfg.eval_trials
        }
    };
    let mut evals = vec![];
    let mut steps = 0;

    if method.uses_subgoals() {
        let sim = RlSimulator::new(dist.clone(), space.clone(), cfg.ql)?;
        match method {
            MethodId::Hb => {
                let hb = HyperbandConfig {
                    eta: cfg.hyperband.eta,
                    r: cfg.hyperband.r,
                    tau_min: *cfg.tau_set.iter().min().unwrap(),
                    q: *cfg.q_set.iter().min().unwrap(),
                    budget: cfg.cost_budget,
                };
                baselines::run_hyperband(&sim, &hb, seed, &mut sink)?;
            }
            _ => {
                let gp = match method {
                    MethodId::Besd => GpMethod::Besd,
                    MethodId::Ei => GpMethod::Ei,
                    _ => GpMethod::Lcb {
                        kappa: cfg.lcb.kappa,
                        subtract: cfg.lcb.subtract,
                    },
                };
                RunState::run(&sim, gp, cfg.besd(), seed, &mut sink)?;
            }
        }
        steps = sim.steps();
        let designs = checkpoint_designs(sink.records, &costs);
        let mut cache: HashMap<(Vec<u64>, usize), (f64, f64)> = HashMap::new();
        for (j, (cost, theta)) in costs.iter().zip(designs).enumerate() {
            let Some(theta) = theta else { continue };
            let trials = trials_at(j);
            let key = (theta.iter().map(|x| x.to_bits()).collect(), trials);
            let (mean, se) = *cache.entry(key).or_insert_with(|| {
                let design = space
                    .design(&theta)
                    .expect("logged designs lie in the space");
                score_design(&dist, &design, tau_max, trials, &cfg.ql, eval_seed(seed))
            });
            evals.push(EvaluationRecord {
                cost: *cost,
                theta: Some(theta),
                mean,
                se,
                trials,
            });
        }
    } else {
        sink.record(&LogRecord::Header(RunHeader {
            method: method.to_string(),
            seed,
            space: space.clone(),
            config: serde_json::to_value(cfg)?,
            candidates: None,
        }))?;
        let store = match method {
            MethodId::Tql => Some(TransferStore::train(
                &dist,
                cfg.stored_tables,
                tau_max,
                &cfg.ql,
                seed,
            )?),
            _ => None,
        };
        let mut counts = vec![cfg.eval_trials, cfg.final_trials];
        counts.dedup();
        for trials in counts {
            let (mean, se) = match &store {
                Some(store) => score_transfer(cfg, store, trials, eval_seed(seed)),
                None => score_design(
                    &dist,
                    &SubgoalDesign::none(),
                    tau_max,
                    trials,
                    &cfg.ql,
                    eval_seed(seed),
                ),
            };
            // a method without optimization budget scores the same at every checkpoint
            for (j, &cost) in costs.iter().enumerate() {
                if trials_at(j) == trials {
                    evals.push(EvaluationRecord {
                        cost,
                        theta: None,
                        mean,
                        se,
                        trials,
                    });
                }
            }
        }
        evals.sort_by_key(|e| e.cost);
    }

    let mut rows = vec![];
    for e in evals {
        rows.push(SummaryRow {
            domain: cfg.domain.to_string(),
            method,
            seed,
            cost: e.cost,
            mean: e.mean,
            se: e.se,
            trials: e.trials,
        });
        sink.record(&LogRecord::Evaluation(e))?;
    }
    Ok(CellOutput {
        method,
        seed,
        log_path,
        rows,
        steps,
    })
}

fn score_transfer(
    cfg: &ExperimentConfig,
    store: &TransferStore,
    trials: usize,
    seed: u64,
) -> (f64, f64) {
    let dist = cfg.distribution();
    let run = baselines::run_tql_scores(&dist, cfg.tau_max(), &cfg.ql, store, trials, seed);
    crate::ratio::mean_se(&run)
}

/// Forwards records to a file and keeps them in memory.
struct Tee<'a, W: std::io::Write> {
    file: JsonlWriter<W>,
    records: &'a mut Vec<LogRecord>,
}

impl<W: std::io::Write> LogSink for Tee<'_, W> {
    fn record(&mut self, r: &LogRecord) -> besd_core::Result<()> {
        self.file.record(r)?;
        self.records.push(r.clone());
        Ok(())
    }
}

/// Runs every (seed, method) cell in parallel, writing one log per cell and
/// `summary.csv` with one row per checkpoint.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentOutput> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create {}", out_dir.display()))?;
    let cells: Vec<(MethodId, u64)> = cfg
        .methods
        .iter()
        .flat_map(|&m| cfg.seeds.iter().map(move |&s| (m, s)))
        .collect();
    let cells: Vec<CellOutput> = cells
        .par_iter()
        .map(|&(m, s)| {
            log::info!("running {} seed {}", m, s);
            run_cell(cfg, m, s, out_dir).with_context(|| format!("{m} seed {s}"))
        })
        .collect::<Result<_>>()?;
    let summary_path = out_dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&summary_path)?;
    for row in cells.iter().flat_map(|c| &c.rows) {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(ExperimentOutput {
        cells,
        summary_path,
    })
}
