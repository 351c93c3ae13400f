//! Knowledge-gradient gain in score and its per-effort maximization over the
//! discrete decision space of (candidate design, training length, replications).

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::gp::{FinitePosterior, GpPoint};

/// Gains below this are treated as zero.
pub const GIS_FLOOR: f64 = 1e-12;

/// The finite decision space: candidate designs, training lengths and replication counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CandidateSet {
    pub thetas: Vec<Vec<f64>>,
    /// Sorted ascending, no duplicates.
    pub taus: Vec<usize>,
    /// Sorted ascending, no duplicates.
    pub qs: Vec<usize>,
}

impl CandidateSet {
    pub fn new(thetas: Vec<Vec<f64>>, mut taus: Vec<usize>, mut qs: Vec<usize>) -> Result<Self> {
        taus.sort_unstable();
        taus.dedup();
        qs.sort_unstable();
        qs.dedup();
        if thetas.is_empty() || taus.is_empty() || qs.is_empty() {
            return Err(Error::Config(
                "candidate designs, taus and qs must be non-empty".into(),
            ));
        }
        if taus[0] == 0 || qs[0] == 0 {
            return Err(Error::Config("taus and qs must be positive".into()));
        }
        let dim = thetas[0].len();
        if let Some(t) = thetas.iter().find(|t| t.len() != dim) {
            return Err(Error::Dimension {
                expected: dim,
                got: t.len(),
            });
        }
        Ok(CandidateSet { thetas, taus, qs })
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    pub fn tau_min(&self) -> usize {
        self.taus[0]
    }

    pub fn tau_max(&self) -> usize {
        *self.taus.last().unwrap()
    }

    pub fn q_min(&self) -> usize {
        self.qs[0]
    }

    pub fn q_max(&self) -> usize {
        *self.qs.last().unwrap()
    }

    pub fn tau_max_index(&self) -> usize {
        self.taus.len() - 1
    }

    /// Row of `(theta_index, tau_index)` in [`Self::points`].
    pub fn point_index(&self, theta_index: usize, tau_index: usize) -> usize {
        theta_index * self.taus.len() + tau_index
    }

    /// Every (design, training length) pair, design-major.
    pub fn points(&self) -> Vec<GpPoint> {
        self.thetas
            .iter()
            .flat_map(|t| {
                self.taus
                    .iter()
                    .map(move |&tau| GpPoint::new(t.clone(), tau as f64))
            })
            .collect()
    }

    /// Rows of the `(theta, tau_max)` points.
    pub fn tau_max_rows(&self) -> Vec<usize> {
        (0..self.len())
            .map(|i| self.point_index(i, self.tau_max_index()))
            .collect()
    }

    pub fn decisions(&self) -> impl Iterator<Item = Decision> + '_ {
        (0..self.len()).flat_map(move |theta_index| {
            (0..self.taus.len()).flat_map(move |tau_index| {
                (0..self.qs.len()).map(move |q_index| Decision {
                    theta_index,
                    tau_index,
                    q_index,
                })
            })
        })
    }

    pub fn tau(&self, d: &Decision) -> usize {
        self.taus[d.tau_index]
    }

    pub fn q(&self, d: &Decision) -> usize {
        self.qs[d.q_index]
    }

    /// Interactions charged by a decision.
    pub fn cost(&self, d: &Decision) -> u64 {
        (self.tau(d) * self.q(d)) as u64
    }
}

/// Indices of one decision into a [`CandidateSet`]; ordered lexicographically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Decision {
    pub theta_index: usize,
    pub tau_index: usize,
    pub q_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AcquisitionResult {
    pub decision: Decision,
    pub tau: usize,
    pub q: usize,
    pub gis: f64,
    pub gis_per_effort: f64,
    /// Largest posterior mean at the longest training length.
    pub mu_star: f64,
}

/// Options of the per-effort maximization.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct SelectOptions {
    /// Fixed overhead added to every decision's cost in the denominator.
    pub overhead: f64,
    /// Decisions costing more than this are not considered.
    pub max_cost: Option<u64>,
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// `pdf(z) + z * cdf(z)`, the expected positive part of `z + Z`.
pub fn f(z: f64) -> f64 {
    let n = std_normal();
    (n.pdf(z) + z * n.cdf(z)).max(0.0)
}

/// `E[max_i a_i + b_i Z] - max_i a_i` for standard normal `Z`, computed exactly
/// from the upper envelope of the lines `a_i + b_i z`.
pub fn h(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "a and b must have equal length");
    assert!(!a.is_empty(), "h needs at least one line");
    let mut order: Vec<usize> = (0..a.len()).collect();
    order.sort_by(|&i, &j| b[i].total_cmp(&b[j]).then(a[i].total_cmp(&a[j])));
    // equal slopes: keep the highest line
    let mut lines: Vec<(f64, f64)> = Vec::with_capacity(a.len());
    for i in order {
        match lines.last_mut() {
            Some(last) if last.1 == b[i] => *last = (a[i], b[i]),
            _ => lines.push((a[i], b[i])),
        }
    }
    // envelope[k] dominates on [cuts[k], cuts[k + 1])
    let mut envelope: Vec<(f64, f64)> = Vec::with_capacity(lines.len());
    let mut cuts: Vec<f64> = Vec::with_capacity(lines.len());
    for (la, lb) in lines {
        while let Some(&(pa, pb)) = envelope.last() {
            let z = (pa - la) / (lb - pb);
            if z <= *cuts.last().unwrap() {
                envelope.pop();
                cuts.pop();
            } else {
                envelope.push((la, lb));
                cuts.push(z);
                break;
            }
        }
        if envelope.is_empty() {
            envelope.push((la, lb));
            cuts.push(f64::NEG_INFINITY);
        }
    }
    let total: f64 = (1..envelope.len())
        .map(|k| (envelope[k].1 - envelope[k - 1].1) * f(-cuts[k].abs()))
        .sum();
    total.max(0.0)
}

/// One-step coefficient of the mean at `query` from observing `candidate` with `q` replications.
pub fn sigma_tilde(
    post: &FinitePosterior,
    query: usize,
    candidate: usize,
    q: usize,
) -> Result<f64> {
    if q == 0 {
        return Err(Error::Config("q must be at least 1".into()));
    }
    post.sigma_tilde(query, candidate, q)
}

/// Expected increase of the largest posterior mean at `tau_max` after
/// observing decision `d`.
pub fn gain_in_score(post: &FinitePosterior, cand: &CandidateSet, d: &Decision) -> Result<f64> {
    let rows = cand.tau_max_rows();
    let a: Vec<f64> = rows.iter().map(|&r| post.mean[r]).collect();
    let b = post.sigma_tilde_many(
        &rows,
        cand.point_index(d.theta_index, d.tau_index),
        cand.q(d),
    )?;
    let gis = h(&a, &b);
    Ok(if gis < GIS_FLOOR { 0.0 } else { gis })
}

/// Largest posterior mean at `tau_max` and the first design attaining it.
pub fn best_mean(post: &FinitePosterior, cand: &CandidateSet) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, r) in cand.tau_max_rows().into_iter().enumerate() {
        if post.mean[r] > best.1 {
            best = (i, post.mean[r]);
        }
    }
    best
}

/// Scores every affordable decision.
pub fn evaluate_all(
    post: &FinitePosterior,
    cand: &CandidateSet,
    opts: &SelectOptions,
) -> Result<Vec<AcquisitionResult>> {
    if post.len() != cand.len() * cand.taus.len() {
        return Err(Error::Dimension {
            expected: cand.len() * cand.taus.len(),
            got: post.len(),
        });
    }
    let mu_star = best_mean(post, cand).1;
    let decisions: Vec<Decision> = cand
        .decisions()
        .filter(|d| opts.max_cost.is_none_or(|m| cand.cost(d) <= m))
        .collect();
    decisions
        .par_iter()
        .map(|d| {
            let gis = gain_in_score(post, cand, d)?;
            Ok(AcquisitionResult {
                decision: *d,
                tau: cand.tau(d),
                q: cand.q(d),
                gis,
                gis_per_effort: gis / (cand.cost(d) as f64 + opts.overhead),
                mu_star,
            })
        })
        .collect()
}

/// The decision maximizing gain per effort; ties go to the cheaper decision,
/// then to the lexicographically first. `None` when nothing is affordable.
pub fn select_next(
    post: &FinitePosterior,
    cand: &CandidateSet,
    opts: &SelectOptions,
) -> Result<Option<AcquisitionResult>> {
    let all = evaluate_all(post, cand, opts)?;
    Ok(all.into_iter().reduce(|best, r| {
        let better = r.gis_per_effort > best.gis_per_effort
            || (r.gis_per_effort == best.gis_per_effort
                && (r.q * r.tau, r.decision) < (best.q * best.tau, best.decision));
        if better {
            r
        } else {
            best
        }
    }))
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct SurfaceRow {
    theta_index: usize,
    theta: String,
    tau: usize,
    q: usize,
    gis: f64,
    gis_per_effort: f64,
}

/// Writes an acquisition surface as CSV.
pub fn write_surface<W: Write>(
    out: W,
    cand: &CandidateSet,
    results: &[AcquisitionResult],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in results {
        let theta = cand.thetas[r.decision.theta_index]
            .iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(";");
        w.serialize(SurfaceRow {
            theta_index: r.decision.theta_index,
            theta,
            tau: r.tau,
            q: r.q,
            gis: r.gis,
            gis_per_effort: r.gis_per_effort,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Closed-form expected improvement of `N(mu, sd^2)` over `best`.
pub fn expected_improvement(mu: f64, sd: f64, best: f64) -> f64 {
    if sd <= 0.0 {
        return (mu - best).max(0.0);
    }
    let n = std_normal();
    let z = (mu - best) / sd;
    ((mu - best) * n.cdf(z) + sd * n.pdf(z)).max(0.0)
}

/// Confidence bound `mu + kappa * sd`, or `mu - kappa * sd` when `subtract`.
pub fn confidence_bound(mu: f64, sd: f64, kappa: f64, subtract: bool) -> f64 {
    if subtract {
        mu - kappa * sd
    } else {
        mu + kappa * sd
    }
}
