//! Hyperparameter fitting: pooled noise estimation and MAP estimation of the
//! kernel parameters under independent normal priors.

use argmin::core::{CostFunction, Error as ArgminError, Executor};
use argmin::solver::neldermead::NelderMead;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::{condition, GpObservation, KernelParams, TauParams};
use crate::error::{Error, Result};
use crate::RandomStream;

const SIGNAL_FLOOR: f64 = 1e-6;
const NOISE_FLOOR: f64 = 1e-8;
/// Lower edge of a positive parameter's box, relative to its prior mean.
const POSITIVE_EDGE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct FitOptions {
    /// Optimizer starts; the first is always the prior mean.
    pub restarts: usize,
    pub max_iters: u64,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            restarts: 8,
            max_iters: 400,
            seed: 0,
        }
    }
}

/// Pooled within-group variance of repeated observations of the same input.
///
/// Groups with fewer than two values carry no information and are skipped.
pub fn estimate_noise(groups: &[Vec<f64>]) -> Result<f64> {
    let (mut ss, mut dof) = (0.0, 0usize);
    for g in groups.iter().filter(|g| g.len() >= 2) {
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        ss += g.iter().map(|y| (y - mean).powi(2)).sum::<f64>();
        dof += g.len() - 1;
    }
    if dof == 0 {
        return Err(Error::Config(
            "noise estimation needs at least one input with two or more replications".into(),
        ));
    }
    Ok((ss / dof as f64).max(NOISE_FLOOR))
}

/// Prior mean of the signal variance: spread of the scores not explained by noise.
pub fn signal_variance_prior_mean(obs: &[GpObservation], noise_variance: f64) -> f64 {
    let n = obs.len() as f64;
    if obs.len() < 2 {
        return 1.0;
    }
    let mean = obs.iter().map(|o| o.y).sum::<f64>() / n;
    let var = obs.iter().map(|o| (o.y - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let noise = obs.iter().map(|o| noise_variance / o.q as f64).sum::<f64>() / n;
    (var - noise).max(SIGNAL_FLOOR)
}

/// Independent normal priors and the search box over the parameter vector
/// `[signal_variance, length_scales.., l11, l21, l22, bias]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperPrior {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

fn tau_prior() -> [(f64, f64); 4] {
    [(0.7, 0.35), (0.0, 0.35), (0.7, 0.35), (0.1, 0.05)]
}

/// Priors built from the data scale and the widths of the theta box.
pub fn hyper_prior(obs: &[GpObservation], widths: &[f64], noise_variance: f64) -> HyperPrior {
    let mut pairs = vec![];
    let sv = signal_variance_prior_mean(obs, noise_variance);
    pairs.push((sv, sv / 2.0, true));
    pairs.extend(widths.iter().map(|&w| (w, w / 2.0, true)));
    for (i, (m, s)) in tau_prior().into_iter().enumerate() {
        pairs.push((m, s, i != 1));
    }
    let mut prior = HyperPrior {
        mean: vec![],
        std: vec![],
        lower: vec![],
        upper: vec![],
    };
    for (m, s, positive) in pairs {
        prior.mean.push(m);
        prior.std.push(s);
        let lo = m - 2.0 * s;
        prior.lower.push(if positive {
            lo.max(POSITIVE_EDGE * m)
        } else {
            lo
        });
        prior.upper.push(m + 2.0 * s);
    }
    prior
}

impl HyperPrior {
    fn log_density(&self, psi: &[f64]) -> f64 {
        psi.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| -0.5 * ((x - m) / s).powi(2))
            .sum()
    }

    fn to_params(&self, psi: &[f64], template: &KernelParams) -> KernelParams {
        let m = psi.len() - 5;
        KernelParams {
            signal_variance: psi[0],
            length_scales: psi[1..=m].to_vec(),
            tau: TauParams {
                l11: psi[m + 1],
                l21: psi[m + 2],
                l22: psi[m + 3],
                bias: psi[m + 4],
            },
            ..template.clone()
        }
    }

    fn from_unbounded(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(u, (lo, hi))| lo + (hi - lo) / (1.0 + (-u).exp()))
            .collect()
    }

    fn to_unbounded(&self, psi: &[f64]) -> Vec<f64> {
        psi.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(x, (lo, hi))| {
                let t = ((x - lo) / (hi - lo)).clamp(1e-9, 1.0 - 1e-9);
                (t / (1.0 - t)).ln()
            })
            .collect()
    }
}

/// Log marginal likelihood of the history under `p`.
pub fn log_marginal_likelihood(p: &KernelParams, obs: &[GpObservation]) -> Result<f64> {
    let post = condition(p, obs)?;
    let Some(chol) = &post.chol else {
        return Ok(0.0);
    };
    let resid: Vec<f64> = obs.iter().map(|o| o.y - p.prior_mean).collect();
    let fit: f64 = resid
        .iter()
        .zip(post.weights.iter())
        .map(|(r, w)| r * w)
        .sum();
    let log_det = 2.0
        * chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|d| d.ln())
            .sum::<f64>();
    let n = obs.len() as f64;
    Ok(-0.5 * fit - 0.5 * log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln())
}

#[derive(Clone, Copy)]
struct Objective<'a> {
    prior: &'a HyperPrior,
    template: &'a KernelParams,
    obs: &'a [GpObservation],
}

impl Objective<'_> {
    fn value(&self, psi: &[f64]) -> f64 {
        let p = self.prior.to_params(psi, self.template);
        match log_marginal_likelihood(&p, self.obs) {
            Ok(lml) if lml.is_finite() => -(lml + self.prior.log_density(psi)),
            _ => f64::INFINITY,
        }
    }
}

impl CostFunction for Objective<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, u: &Self::Param) -> std::result::Result<f64, ArgminError> {
        Ok(self.value(&self.prior.from_unbounded(u)))
    }
}

fn nelder_mead(obj: &Objective, start: Vec<f64>, max_iters: u64) -> Option<(Vec<f64>, f64)> {
    let mut simplex = vec![start.clone()];
    for i in 0..start.len() {
        let mut v = start.clone();
        v[i] += 0.5;
        simplex.push(v);
    }
    let solver = NelderMead::new(simplex).with_sd_tolerance(1e-8).ok()?;
    let res = Executor::new(*obj, solver)
        .configure(|s| s.max_iters(max_iters))
        .run()
        .ok()?;
    let best = res.state.best_param?;
    let cost = res.state.best_cost;
    cost.is_finite().then_some((best, cost))
}

/// MAP estimate of the kernel parameters for a fixed noise level.
///
/// The signal variance, length scales and fidelity parameters are searched
/// within two prior standard deviations of their prior means; the prior mean
/// of the GP is the sample mean and training lengths are normalized by the
/// largest one observed. If no start yields a finite objective the prior
/// means are returned.
pub fn fit_map(
    obs: &[GpObservation],
    widths: &[f64],
    noise_variance: f64,
    opts: &FitOptions,
) -> Result<KernelParams> {
    if obs.is_empty() {
        return Err(Error::Config(
            "cannot fit a kernel without observations".into(),
        ));
    }
    if let Some(o) = obs.iter().find(|o| o.point.theta.len() != widths.len()) {
        return Err(Error::Dimension {
            expected: widths.len(),
            got: o.point.theta.len(),
        });
    }
    let prior = hyper_prior(obs, widths, noise_variance);
    let template = KernelParams {
        signal_variance: 1.0,
        length_scales: widths.to_vec(),
        tau: TauParams::identity(),
        tau_scale: obs.iter().map(|o| o.point.tau).fold(f64::MIN, f64::max),
        prior_mean: obs.iter().map(|o| o.y).sum::<f64>() / obs.len() as f64,
        noise_variance,
    };
    template.validate()?;
    let obj = Objective {
        prior: &prior,
        template: &template,
        obs,
    };

    let mut rng = RandomStream::seed_from_u64(opts.seed);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for r in 0..opts.restarts.max(1) {
        let start = if r == 0 {
            prior.to_unbounded(&prior.mean)
        } else {
            (0..prior.mean.len())
                .map(|_| rng.gen_range(-3.0..3.0))
                .collect()
        };
        if let Some((u, c)) = nelder_mead(&obj, start, opts.max_iters) {
            if best.as_ref().is_none_or(|(_, b)| c < *b) {
                best = Some((u, c));
            }
        }
    }
    let psi = match best {
        Some((u, _)) => prior.from_unbounded(&u),
        None => {
            log::warn!("kernel fit failed from every start; using prior means");
            prior.mean.clone()
        }
    };
    Ok(prior.to_params(&psi, &template))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::GpPoint;
    use nalgebra::{DMatrix, DVector};
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn pooled_noise_by_hand() {
        // within-group sums of squares 2 and 8 over 1 + 2 degrees of freedom
        let groups = vec![vec![1.0, 3.0], vec![0.0, 2.0, 4.0], vec![9.0]];
        assert!((estimate_noise(&groups).unwrap() - 10.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn noise_floor_and_errors() {
        assert_eq!(estimate_noise(&[vec![1.0, 1.0]]).unwrap(), NOISE_FLOOR);
        assert!(estimate_noise(&[vec![1.0], vec![2.0]]).is_err());
        assert!(estimate_noise(&[]).is_err());
    }

    #[test]
    fn signal_prior_subtracts_noise() {
        let obs: Vec<GpObservation> = [0.0, 1.0, 2.0]
            .iter()
            .map(|&y| GpObservation {
                point: GpPoint::new(vec![y], 1.0),
                q: 2,
                y,
            })
            .collect();
        // sample variance 1, per-point noise 0.4 / 2
        assert!((signal_variance_prior_mean(&obs, 0.4) - 0.8).abs() < 1e-12);
        assert_eq!(signal_variance_prior_mean(&obs, 10.0), SIGNAL_FLOOR);
    }

    #[test]
    fn prior_box_is_two_std_wide() {
        let obs = vec![GpObservation {
            point: GpPoint::new(vec![0.0], 1.0),
            q: 1,
            y: 0.0,
        }];
        let prior = hyper_prior(&obs, &[10.0], 0.0);
        assert_eq!(prior.mean.len(), 6);
        assert_eq!(prior.upper[1], 20.0);
        assert!((prior.lower[1] - 0.01).abs() < 1e-12);
        assert_eq!((prior.lower[3], prior.upper[3]), (-0.7, 0.7));
        let u = prior.to_unbounded(&prior.mean);
        let back = prior.from_unbounded(&u);
        for (a, b) in back.iter().zip(&prior.mean) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn marginal_likelihood_single_point() {
        let p = KernelParams {
            signal_variance: 1.0,
            length_scales: vec![1.0],
            tau: TauParams {
                l11: 1.0,
                l21: 0.0,
                l22: 0.0,
                bias: 0.0,
            },
            tau_scale: 1.0,
            prior_mean: 0.0,
            noise_variance: 1.0,
        };
        let obs = [GpObservation {
            point: GpPoint::new(vec![0.0], 0.0),
            q: 1,
            y: 1.0,
        }];
        // y ~ N(0, 2 + jitter)
        let v = 2.0 + super::super::JITTER;
        let expect = -0.5 / v - 0.5 * v.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((log_marginal_likelihood(&p, &obs).unwrap() - expect).abs() < 1e-10);
    }

    #[test]
    fn recovers_length_scale_from_gp_draws() {
        let truth = KernelParams {
            signal_variance: 1.0,
            length_scales: vec![3.0],
            tau: TauParams {
                l11: 1.0,
                l21: 0.0,
                l22: 0.0,
                bias: 0.0,
            },
            tau_scale: 1.0,
            prior_mean: 0.0,
            noise_variance: 0.01,
        };
        let mut rng = RandomStream::seed_from_u64(11);
        let pts: Vec<GpPoint> = (0..200)
            .map(|_| GpPoint::new(vec![rng.gen_range(0.0..10.0)], 1.0))
            .collect();
        let mut k = DMatrix::from_fn(200, 200, |i, j| truth.eval(&pts[i], &pts[j]));
        for i in 0..200 {
            k[(i, i)] += truth.noise_variance;
        }
        let l = k.cholesky().unwrap().unpack();
        let z = DVector::from_fn(200, |_, _| StandardNormal.sample(&mut rng));
        let y = l * z;
        let obs: Vec<GpObservation> = pts
            .into_iter()
            .zip(y.iter())
            .map(|(point, &y)| GpObservation { point, q: 1, y })
            .collect();
        let fit = fit_map(&obs, &[10.0], 0.01, &FitOptions::default()).unwrap();
        let ell = fit.length_scales[0];
        assert!((1.5..=6.0).contains(&ell), "length scale {ell}");
        assert_eq!(fit.tau_scale, 1.0);
    }

    #[test]
    fn fit_is_deterministic() {
        let obs: Vec<GpObservation> = (0..12)
            .map(|i| GpObservation {
                point: GpPoint::new(vec![i as f64], 1.0 + (i % 3) as f64),
                q: 1,
                y: (i as f64 * 0.7).sin(),
            })
            .collect();
        let opts = FitOptions {
            restarts: 3,
            ..Default::default()
        };
        let a = fit_map(&obs, &[12.0], 0.05, &opts).unwrap();
        let b = fit_map(&obs, &[12.0], 0.05, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.tau_scale, 3.0);
    }

    #[test]
    fn rejects_mismatched_widths() {
        let obs = vec![GpObservation {
            point: GpPoint::new(vec![0.0, 1.0], 1.0),
            q: 1,
            y: 0.0,
        }];
        assert!(matches!(
            fit_map(&obs, &[1.0], 0.1, &FitOptions::default()),
            Err(Error::Dimension { .. })
        ));
    }
}
