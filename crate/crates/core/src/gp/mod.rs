//! Gaussian-process surrogate over (subgoal parameters, training length).
//!
//! The covariance is the product of an ARD Matérn-5/2 kernel over `theta`
//! and a polynomial kernel over the normalized training length
//! `s = tau / tau_scale`:
//!
//! ```text
//! k((theta, tau), (theta', tau')) = sigma^2 * matern52(theta, theta') * (phi(s)' S phi(s') + bias)
//! ```
//!
//! with `phi(s) = (1, s)` and `S = L L'` for a lower-triangular `L`, so the
//! fidelity factor is positive semidefinite for every parameter value.
//!
//! [`condition`] performs exact regression with per-point noise `lambda / q`.
//! [`FinitePosterior`] tracks the joint posterior over a fixed point set and
//! absorbs new observations with rank-one updates, which is all the
//! acquisition loop needs.

mod fit;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use fit::{
    estimate_noise, fit_map, hyper_prior, log_marginal_likelihood, signal_variance_prior_mean,
    FitOptions, HyperPrior,
};

/// Relative jitter added to the Gram diagonal.
pub const JITTER: f64 = 1e-8;

/// Parameters of the fidelity factor: `L = [[l11, 0], [l21, l22]]` and an additive bias.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TauParams {
    pub l11: f64,
    pub l21: f64,
    pub l22: f64,
    pub bias: f64,
}

impl TauParams {
    /// `S = I`, no bias.
    pub fn identity() -> Self {
        TauParams {
            l11: 1.0,
            l21: 0.0,
            l22: 1.0,
            bias: 0.0,
        }
    }

    /// Entries `(s00, s01, s11)` of `S = L L'`.
    pub fn sigma(&self) -> (f64, f64, f64) {
        (
            self.l11 * self.l11,
            self.l11 * self.l21,
            self.l21 * self.l21 + self.l22 * self.l22,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct KernelParams {
    pub signal_variance: f64,
    /// One Matérn length scale per coordinate of theta.
    pub length_scales: Vec<f64>,
    pub tau: TauParams,
    /// Training lengths enter the kernel as `tau / tau_scale`.
    pub tau_scale: f64,
    pub prior_mean: f64,
    /// Variance of a single replication; `q` replications have `noise_variance / q`.
    pub noise_variance: f64,
}

impl KernelParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(self.signal_variance)
            || !self.length_scales.iter().all(|&l| positive(l))
            || !positive(self.tau_scale)
            || !(self.noise_variance >= 0.0 && self.noise_variance.is_finite())
            || !(self.tau.bias >= 0.0)
            || !self.prior_mean.is_finite()
        {
            return Err(Error::Config(format!("invalid kernel parameters {self:?}")));
        }
        if self.length_scales.is_empty() {
            return Err(Error::Config(
                "kernel needs at least one length scale".into(),
            ));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.length_scales.len()
    }

    /// `sigma^2 * matern52(r)` with `r` the length-scaled distance.
    pub fn k_theta(&self, a: &[f64], b: &[f64]) -> f64 {
        let r2: f64 = a
            .iter()
            .zip(b)
            .zip(&self.length_scales)
            .map(|((x, y), l)| ((x - y) / l).powi(2))
            .sum();
        self.signal_variance * matern52(r2.sqrt())
    }

    /// `phi(s)' S phi(s') + bias` on normalized lengths.
    pub fn k_tau(&self, t1: f64, t2: f64) -> f64 {
        let (s1, s2) = (t1 / self.tau_scale, t2 / self.tau_scale);
        let (s00, s01, s11) = self.tau.sigma();
        s00 + s01 * (s1 + s2) + s11 * s1 * s2 + self.tau.bias
    }

    fn eval(&self, x: &GpPoint, y: &GpPoint) -> f64 {
        self.k_theta(&x.theta, &y.theta) * self.k_tau(x.tau, y.tau)
    }

    fn jitter(&self) -> f64 {
        JITTER * self.signal_variance
    }
}

/// Matérn-5/2 correlation at scaled distance `r`.
pub fn matern52(r: f64) -> f64 {
    let s = 5f64.sqrt() * r;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

/// Covariance between two inputs.
pub fn kernel(p: &KernelParams, x: &GpPoint, y: &GpPoint) -> Result<f64> {
    for pt in [x, y] {
        if pt.theta.len() != p.dim() {
            return Err(Error::Dimension {
                expected: p.dim(),
                got: pt.theta.len(),
            });
        }
    }
    Ok(p.eval(x, y))
}

/// A GP input: subgoal parameters and training length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpPoint {
    pub theta: Vec<f64>,
    pub tau: f64,
}

impl GpPoint {
    pub fn new(theta: Vec<f64>, tau: f64) -> Self {
        GpPoint { theta, tau }
    }
}

/// One history entry: an input, its replication count and averaged score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpObservation {
    pub point: GpPoint,
    pub q: usize,
    pub y: f64,
}

/// Exact posterior given a history.
#[derive(Debug, Clone)]
pub struct Posterior {
    params: KernelParams,
    points: Vec<GpPoint>,
    /// Per-point noise `lambda / q`.
    noise: Vec<f64>,
    chol: Option<Cholesky<f64, Dyn>>,
    /// `(K + N)^-1 (y - mu)`.
    weights: DVector<f64>,
}

fn gram(p: &KernelParams, a: &[GpPoint], b: &[GpPoint]) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| p.eval(&a[i], &b[j]))
}

/// Conditions the prior on `history` with noise `lambda / q` per point.
pub fn condition(p: &KernelParams, history: &[GpObservation]) -> Result<Posterior> {
    p.validate()?;
    for h in history {
        if h.point.theta.len() != p.dim() {
            return Err(Error::Dimension {
                expected: p.dim(),
                got: h.point.theta.len(),
            });
        }
        if h.q == 0 || !h.y.is_finite() {
            return Err(Error::Config(format!("invalid observation {h:?}")));
        }
    }
    let points: Vec<GpPoint> = history.iter().map(|h| h.point.clone()).collect();
    let noise: Vec<f64> = history
        .iter()
        .map(|h| p.noise_variance / h.q as f64)
        .collect();
    if history.is_empty() {
        return Ok(Posterior {
            params: p.clone(),
            points,
            noise,
            chol: None,
            weights: DVector::zeros(0),
        });
    }
    let mut k = gram(p, &points, &points);
    for (i, n) in noise.iter().enumerate() {
        k[(i, i)] += n + p.jitter();
    }
    let min_diag = k.diagonal().min();
    let chol = Cholesky::new(k).ok_or(Error::NotPositiveDefinite {
        size: points.len(),
        jitter: p.jitter(),
        min_diag,
    })?;
    let resid = DVector::from_iterator(history.len(), history.iter().map(|h| h.y - p.prior_mean));
    let weights = chol.solve(&resid);
    Ok(Posterior {
        params: p.clone(),
        points,
        noise,
        chol: Some(chol),
        weights,
    })
}

impl Posterior {
    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn noise(&self) -> &[f64] {
        &self.noise
    }

    fn check(&self, pts: &[GpPoint]) -> Result<()> {
        match pts.iter().find(|x| x.theta.len() != self.params.dim()) {
            Some(x) => Err(Error::Dimension {
                expected: self.params.dim(),
                got: x.theta.len(),
            }),
            None => Ok(()),
        }
    }

    /// Posterior mean vector and covariance matrix over `query`.
    pub fn mean_cov(&self, query: &[GpPoint]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        self.check(query)?;
        let p = &self.params;
        let prior = gram(p, query, query);
        let Some(chol) = &self.chol else {
            return Ok((DVector::from_element(query.len(), p.prior_mean), prior));
        };
        let cross = gram(p, &self.points, query);
        let mean = cross.tr_mul(&self.weights).add_scalar(p.prior_mean);
        let v = chol
            .l()
            .solve_lower_triangular(&cross)
            .expect("triangular factor is invertible");
        let mut cov = prior - v.tr_mul(&v);
        cov = (&cov + cov.transpose()) * 0.5;
        Ok((mean, cov))
    }

    pub fn mean(&self, x: &GpPoint) -> Result<f64> {
        Ok(self.mean_cov(std::slice::from_ref(x))?.0[0])
    }

    pub fn variance(&self, x: &GpPoint) -> Result<f64> {
        Ok(self.mean_cov(std::slice::from_ref(x))?.1[(0, 0)])
    }

    /// Posterior covariance of two inputs.
    pub fn cov(&self, x: &GpPoint, y: &GpPoint) -> Result<f64> {
        let (_, c) = self.mean_cov(&[x.clone(), y.clone()])?;
        Ok(c[(0, 1)])
    }

    /// One-step update coefficient of the posterior mean at `query` when
    /// `candidate` is observed next with `q` replications.
    pub fn sigma_tilde(&self, query: &GpPoint, candidate: &GpPoint, q: usize) -> Result<f64> {
        let (_, c) = self.mean_cov(&[query.clone(), candidate.clone()])?;
        sigma_tilde_from(c[(0, 1)], c[(1, 1)], self.params.noise_variance / q as f64)
    }
}

/// `cross / sqrt(noise + var)`, zero when the candidate carries no information.
fn sigma_tilde_from(cross: f64, var: f64, noise: f64) -> Result<f64> {
    let denom = noise + var;
    if denom < -1e-10 {
        return Err(Error::NegativeVariance(denom));
    }
    if denom <= 0.0 {
        return Ok(0.0);
    }
    Ok(cross / denom.sqrt())
}

/// Posterior mean and covariance over `query` (free-function form).
pub fn posterior_mean_cov(
    post: &Posterior,
    query: &[GpPoint],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    post.mean_cov(query)
}

/// Joint posterior restricted to a fixed finite set of inputs.
///
/// Observations must be made at members of the set; each one is absorbed by
/// the rank-one update
///
/// ```text
/// mu'(x)   = mu(x) + k(x, z) (y - mu(z)) / (lambda / q + k(z, z))
/// k'(x, x') = k(x, x') - sigma~(x) sigma~(x')
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct FinitePosterior {
    pub points: Vec<GpPoint>,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub noise_variance: f64,
    /// Added to every observation's noise, matching the Gram jitter of [`condition`].
    pub jitter: f64,
}

impl FinitePosterior {
    pub fn from_posterior(post: &Posterior, points: Vec<GpPoint>) -> Result<Self> {
        let (mean, cov) = post.mean_cov(&points)?;
        Ok(FinitePosterior {
            points,
            mean,
            cov,
            noise_variance: post.params.noise_variance,
            jitter: post.params.jitter(),
        })
    }

    /// A posterior given directly by its moments, e.g. hand-built in tests.
    pub fn from_moments(
        mean: DVector<f64>,
        cov: DMatrix<f64>,
        noise_variance: f64,
    ) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::Dimension {
                expected: mean.len(),
                got: cov.nrows(),
            });
        }
        Ok(FinitePosterior {
            points: vec![],
            mean,
            cov,
            noise_variance,
            jitter: 0.0,
        })
    }

    fn noise(&self, q: usize) -> f64 {
        self.noise_variance / q as f64 + self.jitter
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.len() {
            return Err(Error::Index {
                index: i,
                valid: format!("0..{}", self.len()),
            });
        }
        Ok(())
    }

    pub fn sigma_tilde(&self, query: usize, candidate: usize, q: usize) -> Result<f64> {
        self.check_index(query)?;
        self.check_index(candidate)?;
        sigma_tilde_from(
            self.cov[(query, candidate)],
            self.cov[(candidate, candidate)],
            self.noise(q),
        )
    }

    /// `sigma~` of every member of `queries` for one candidate.
    pub fn sigma_tilde_many(
        &self,
        queries: &[usize],
        candidate: usize,
        q: usize,
    ) -> Result<Vec<f64>> {
        self.check_index(candidate)?;
        let var = self.cov[(candidate, candidate)];
        let noise = self.noise(q);
        queries
            .iter()
            .map(|&i| {
                self.check_index(i)?;
                sigma_tilde_from(self.cov[(i, candidate)], var, noise)
            })
            .collect()
    }

    /// Absorbs an observation `y` averaged over `q` replications at member `idx`.
    pub fn update(&mut self, idx: usize, q: usize, y: f64) -> Result<()> {
        self.check_index(idx)?;
        let denom = self.noise(q) + self.cov[(idx, idx)];
        if denom < -1e-10 {
            return Err(Error::NegativeVariance(denom));
        }
        if denom <= 0.0 {
            return Ok(());
        }
        let col = self.cov.column(idx).clone_owned();
        let gain = (y - self.mean[idx]) / denom;
        self.mean.axpy(gain, &col, 1.0);
        self.cov.ger(-1.0 / denom, &col, &col, 1.0);
        Ok(())
    }

    pub fn variance(&self, i: usize) -> f64 {
        self.cov[(i, i)]
    }
}
