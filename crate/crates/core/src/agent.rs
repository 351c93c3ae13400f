//! Tabular Q-learning on the augmented MDP, extrinsic-only evaluation and the
//! replicated observation `y = u(theta, tau) + noise`.

use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envs::{EnvDistribution, Environment, Metered, StepMeter};
use crate::error::{Error, Result};
use crate::shaping::{augment_step, AugmentedState, SubgoalDesign};
use crate::RandomStream;

/// Q-learning hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct QlConfig {
    pub alpha: f64,
    pub epsilon: f64,
    /// Value every table entry starts from.
    pub initial_value: f64,
    /// Greedy rollouts per replication when scoring a trained table.
    pub eval_rollouts: usize,
}

impl Default for QlConfig {
    fn default() -> Self {
        QlConfig {
            alpha: 0.1,
            epsilon: 0.1,
            initial_value: 0.0,
            eval_rollouts: 5,
        }
    }
}

/// Dense action-value table over (environment state, progress, action).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct QTable {
    pub values: Vec<f64>,
    pub base_states: usize,
    /// Progress levels, `k + 1` for a design with `k` subgoals.
    pub levels: usize,
    pub n_actions: usize,
    pub alpha: f64,
    pub epsilon: f64,
}

impl QTable {
    pub fn new(base_states: usize, levels: usize, n_actions: usize, cfg: &QlConfig) -> Self {
        QTable {
            values: vec![cfg.initial_value; base_states * levels * n_actions],
            base_states,
            levels,
            n_actions,
            alpha: cfg.alpha,
            epsilon: cfg.epsilon,
        }
    }

    /// Offset of the action row of an augmented state.
    fn row<E: Environment + ?Sized>(&self, env: &E, s: &AugmentedState) -> usize {
        (env.state_index(&s.base) * self.levels + s.progress) * self.n_actions
    }

    pub fn get<E: Environment + ?Sized>(&self, env: &E, s: &AugmentedState, a: usize) -> f64 {
        self.values[self.row(env, s) + a]
    }

    /// Greedy action, ties to the lowest index.
    pub fn greedy<E: Environment + ?Sized>(&self, env: &E, s: &AugmentedState) -> usize {
        let row = self.row(env, s);
        argmax_first(&self.values[row..row + self.n_actions])
    }

    fn max_value(&self, row: usize) -> f64 {
        self.values[row..row + self.n_actions]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let t: QTable = serde_json::from_str(s)?;
        if t.values.len() != t.base_states * t.levels * t.n_actions {
            return Err(Error::Config(
                "q-table size does not match its shape".into(),
            ));
        }
        Ok(t)
    }
}

fn argmax_first(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Runs epsilon-greedy Q-learning for exactly `tau` environment interactions
/// on the MDP augmented by `design`, starting from a zero table.
pub fn train<E: Environment + ?Sized>(
    env: &E,
    design: &SubgoalDesign,
    tau: usize,
    cfg: &QlConfig,
    rng: &mut RandomStream,
) -> QTable {
    let table = QTable::new(env.state_count(), design.k() + 1, env.n_actions(), cfg);
    train_from(env, design, tau, table, rng)
}

/// Continues Q-learning from an existing table.
pub fn train_from<E: Environment + ?Sized>(
    env: &E,
    design: &SubgoalDesign,
    tau: usize,
    mut table: QTable,
    rng: &mut RandomStream,
) -> QTable {
    assert_eq!(
        table.levels,
        design.k() + 1,
        "table levels must match the design"
    );
    let gamma = env.discount();
    let cap = env.horizon_cap();
    let start = AugmentedState::start(env.start());
    let mut s = start;
    let mut episode_len = 0;
    for _ in 0..tau {
        let a = if rng.gen::<f64>() < table.epsilon {
            rng.gen_range(0..table.n_actions)
        } else {
            table.greedy(env, &s)
        };
        let out = augment_step(env, design, &s, a, rng);
        let target = if out.terminal {
            out.total
        } else {
            out.total + gamma * table.max_value(table.row(env, &out.next))
        };
        let idx = table.row(env, &s) + a;
        table.values[idx] += table.alpha * (target - table.values[idx]);
        episode_len += 1;
        if out.terminal || episode_len >= cap {
            s = start;
            episode_len = 0;
        } else {
            s = out.next;
        }
    }
    table
}

/// Mean discounted extrinsic return of the greedy augmented policy from the
/// start state, over `rollouts` episodes capped at the horizon.
pub fn evaluate_extrinsic<E: Environment + ?Sized>(
    env: &E,
    design: &SubgoalDesign,
    table: &QTable,
    rollouts: usize,
    rng: &mut RandomStream,
) -> f64 {
    assert!(rollouts >= 1, "at least one rollout");
    let gamma = env.discount();
    let total: f64 = (0..rollouts)
        .map(|_| {
            let mut s = AugmentedState::start(env.start());
            let mut ret = 0.0;
            let mut discount = 1.0;
            for _ in 0..env.horizon_cap() {
                let out = augment_step(env, design, &s, table.greedy(env, &s), rng);
                ret += discount * out.extrinsic;
                discount *= gamma;
                if out.terminal {
                    return ret;
                }
                s = out.next;
            }
            if env.forfeit_without_goal() {
                0.0
            } else {
                ret
            }
        })
        .sum();
    total / rollouts as f64
}

/// Steps the greedy policy needs from the start to reach the goal, or
/// `window` if it does not get there within the window.
pub fn steps_to_goal<E: Environment + ?Sized>(
    env: &E,
    design: &SubgoalDesign,
    table: &QTable,
    window: usize,
    rng: &mut RandomStream,
) -> usize {
    let mut s = AugmentedState::start(env.start());
    for t in 1..=window {
        let out = augment_step(env, design, &s, table.greedy(env, &s), rng);
        if out.terminal {
            return t;
        }
        s = out.next;
    }
    window
}

/// One averaged observation of a design at fidelity `(tau, q)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Observation {
    pub design: SubgoalDesign,
    pub tau: usize,
    pub q: usize,
    pub score: f64,
    pub per_replication_scores: Vec<f64>,
}

impl Observation {
    pub fn new(design: SubgoalDesign, tau: usize, per_replication_scores: Vec<f64>) -> Self {
        let q = per_replication_scores.len();
        assert!(q >= 1, "an observation needs at least one replication");
        let score = per_replication_scores.iter().sum::<f64>() / q as f64;
        Observation {
            design,
            tau,
            q,
            score,
            per_replication_scores,
        }
    }

    /// Interactions charged for this observation.
    pub fn cost(&self) -> u64 {
        (self.tau * self.q) as u64
    }
}

/// Independent random streams for `n` parallel replications.
pub(crate) fn replication_streams(rng: &mut RandomStream, n: usize) -> Vec<RandomStream> {
    let base: u64 = rng.gen();
    (0..n)
        .map(|i| {
            let mut r = RandomStream::seed_from_u64(base);
            r.set_stream(i as u64);
            r
        })
        .collect()
}

/// Trains and scores `q` independent replications, each on a freshly sampled
/// instance; every training interaction is charged to `meter`.
pub fn observe_metered(
    dist: &EnvDistribution,
    design: &SubgoalDesign,
    tau: usize,
    q: usize,
    cfg: &QlConfig,
    rng: &mut RandomStream,
    meter: &StepMeter,
) -> Observation {
    assert!(tau >= 1 && q >= 1, "tau and q must be positive");
    let scores: Vec<f64> = replication_streams(rng, q)
        .into_par_iter()
        .map(|mut r| {
            let inst = dist.sample_with(&mut r);
            let env = Metered {
                inner: &inst,
                meter,
            };
            let table = train(&env, design, tau, cfg, &mut r);
            evaluate_extrinsic(&inst, design, &table, cfg.eval_rollouts, &mut r)
        })
        .collect();
    Observation::new(design.clone(), tau, scores)
}

pub fn observe(
    dist: &EnvDistribution,
    design: &SubgoalDesign,
    tau: usize,
    q: usize,
    cfg: &QlConfig,
    rng: &mut RandomStream,
) -> Observation {
    observe_metered(dist, design, tau, q, cfg, rng, &StepMeter::new())
}
