//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rayon::prelude::*;

use besd_cli::config::{ExperimentConfig, MethodId};
use besd_cli::experiment::run_experiment;
use besd_cli::plot::load;
use besd_cli::ratio::{default_window, ratio_report, RatioSettings};
use besd_core::acquisition::h;
use besd_core::baselines::{hyperband_schedule, run_hyperband, HyperbandConfig};
use besd_core::besd::{
    logged_cost, split_log, stream, BesdConfig, GpMethod, NullSink, RunState, Simulator,
    SyntheticSimulator,
};
use besd_core::envs::{DomainId, EnvDistribution, Environment, State};
use besd_core::gp::{
    condition, FinitePosterior, FitOptions, GpObservation, GpPoint, KernelParams, TauParams,
};
use besd_core::sampling::DesignSpace;
use besd_core::shaping::{augment_step, AugmentedState, ShapingParams, SubgoalDesign};
use besd_core::RandomStream;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn h_oracle() -> Outcome {
    let start = Instant::now();
    let mut notes = vec![];
    let anchor = h(&[0.0, 0.0], &[0.0, 1.0]);
    let expect = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let mut pass = (anchor - expect).abs() < 1e-12;
    notes.push(format!("anchor err {:.1e}", (anchor - expect).abs()));
    let flat = h(&[0.3, -1.0, 2.0], &[0.7, 0.7, 0.7]);
    pass &= flat == 0.0;

    const SAMPLES: usize = 1_000_000;
    const CHUNKS: u64 = 100;
    let mut case_rng = RandomStream::seed_from_u64(0xacce);
    let cases: Vec<(Vec<f64>, Vec<f64>)> = (0..100)
        .map(|_| {
            let l = case_rng.gen_range(1..=20);
            let a = (0..l)
                .map(|_| case_rng.sample::<f64, _>(StandardNormal))
                .collect();
            let b = (0..l)
                .map(|_| case_rng.sample::<f64, _>(StandardNormal))
                .collect();
            (a, b)
        })
        .collect();
    let worst = cases
        .par_iter()
        .enumerate()
        .map(|(c, (a, b))| {
            let top = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let (sum, sq) = (0..CHUNKS)
                .map(|chunk| {
                    let mut rng = stream(c as u64, chunk);
                    let mut acc = (0.0, 0.0);
                    for _ in 0..SAMPLES / CHUNKS as usize {
                        let z: f64 = rng.sample(StandardNormal);
                        let m = a
                            .iter()
                            .zip(b)
                            .map(|(x, y)| x + y * z)
                            .fold(f64::NEG_INFINITY, f64::max)
                            - top;
                        acc.0 += m;
                        acc.1 += m * m;
                    }
                    acc
                })
                .fold((0.0, 0.0), |x, y| (x.0 + y.0, x.1 + y.1));
            let n = SAMPLES as f64;
            let mean = sum / n;
            let se = ((sq / n - mean * mean).max(0.0) / (n - 1.0)).sqrt();
            let err = (h(a, b) - mean).abs();
            if se == 0.0 {
                if err < 1e-12 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                err / se
            }
        })
        .reduce(|| 0.0, f64::max);
    let elapsed = start.elapsed();
    pass &= worst <= 3.0 && elapsed < Duration::from_secs(60);
    notes.push(format!(
        "worst |h - MC| = {worst:.2} SE over 100 cases, {:.1}s",
        elapsed.as_secs_f64()
    ));
    outcome(pass, notes.join(", "))
}

fn random_params(rng: &mut RandomStream, dim: usize) -> KernelParams {
    KernelParams {
        signal_variance: rng.gen_range(0.1..3.0),
        length_scales: (0..dim).map(|_| rng.gen_range(0.3..5.0)).collect(),
        tau: TauParams {
            l11: rng.gen_range(0.1..2.0),
            l21: rng.gen_range(-1.0..1.0),
            l22: rng.gen_range(0.0..2.0),
            bias: rng.gen_range(0.0..0.5),
        },
        tau_scale: rng.gen_range(100.0..1000.0),
        prior_mean: rng.gen_range(-1.0..1.0),
        noise_variance: rng.gen_range(0.01..0.5),
    }
}

fn random_point(rng: &mut RandomStream, dim: usize) -> GpPoint {
    let taus = [200.0, 600.0, 1000.0];
    GpPoint::new(
        (0..dim).map(|_| rng.gen_range(0.0..10.0)).collect(),
        taus[rng.gen_range(0..3)],
    )
}

fn gp_correctness() -> Outcome {
    let mut rng = RandomStream::seed_from_u64(0x6b);
    let mut rank_err: f64 = 0.0;
    for _ in 0..20 {
        let p = random_params(&mut rng, 2);
        let pts: Vec<GpPoint> = (0..40).map(|_| random_point(&mut rng, 2)).collect();
        let mut seq =
            FinitePosterior::from_posterior(&condition(&p, &[]).unwrap(), pts.clone()).unwrap();
        let mut hist = vec![];
        for _ in 0..50 {
            let idx = rng.gen_range(0..pts.len());
            let q = rng.gen_range(1..=20);
            let y = rng.gen_range(-1.0..1.0);
            seq.update(idx, q, y).unwrap();
            hist.push(GpObservation {
                point: pts[idx].clone(),
                q,
                y,
            });
        }
        let batch = FinitePosterior::from_posterior(&condition(&p, &hist).unwrap(), pts).unwrap();
        rank_err = rank_err
            .max((&seq.mean - &batch.mean).amax())
            .max((&seq.cov - &batch.cov).amax());
    }

    // noiseless interpolation on well separated designs
    let mut interp_err: f64 = 0.0;
    for _ in 0..20 {
        let p = KernelParams {
            noise_variance: 0.0,
            ..random_params(&mut rng, 2)
        };
        let hist: Vec<GpObservation> = (0..10)
            .map(|i| GpObservation {
                point: GpPoint::new(vec![i as f64 * 10.0, rng.gen_range(0.0..10.0)], 1000.0),
                q: 1,
                y: rng.gen_range(-1.0..1.0),
            })
            .collect();
        let post = condition(&p, &hist).unwrap();
        for o in &hist {
            interp_err = interp_err.max((post.mean(&o.point).unwrap() - o.y).abs());
            interp_err = interp_err.max(post.variance(&o.point).unwrap().abs() / p.signal_variance);
        }
    }

    let mut violations = 0;
    for _ in 0..1000 {
        let p = random_params(&mut rng, 2);
        let n = rng.gen_range(1..=15);
        let hist: Vec<GpObservation> = (0..n)
            .map(|_| GpObservation {
                point: random_point(&mut rng, 2),
                q: rng.gen_range(1..=20),
                y: rng.gen(),
            })
            .collect();
        let x = random_point(&mut rng, 2);
        let before = condition(&p, &hist[..n - 1]).unwrap().variance(&x).unwrap();
        let after = condition(&p, &hist).unwrap().variance(&x).unwrap();
        if after > before + 1e-10 || after < -1e-10 {
            violations += 1;
        }
    }
    let pass = rank_err <= 1e-8 && interp_err <= 1e-6 && violations == 0;
    outcome(
        pass,
        format!("rank-1 vs batch {rank_err:.1e}, interpolation {interp_err:.1e}, variance violations {violations}/1000"),
    )
}

fn shaping_correctness() -> Outcome {
    let mut rng = RandomStream::seed_from_u64(0x5a);
    let domains = [DomainId::Gw10, DomainId::Key3, DomainId::Mc];
    let (mut tele_err, mut steps, mut segments): (f64, usize, usize) = (0.0, 0, 0);
    let (mut monotone, mut exact) = (true, true);
    for t in 0..10_000 {
        let dist = EnvDistribution::new(domains[t % domains.len()]);
        let env = dist.sample_with(&mut rng);
        let (lo, hi) = dist.point_bounds();
        let k = rng.gen_range(1..=3);
        let start = env.start();
        let points: Vec<Vec<f64>> = (0..k)
            .map(|j| match (j, start) {
                // first subgoal on the start's neighbourhood so progress moves
                (0, State::Grid { cell, .. }) => vec![cell.row as f64 + 1.5, cell.col as f64 + 0.5],
                _ => lo
                    .iter()
                    .zip(&hi)
                    .map(|(l, h)| rng.gen_range(*l..*h))
                    .collect(),
            })
            .collect();
        let design = SubgoalDesign::new(points, ShapingParams::default()).unwrap();
        let gamma = env.discount();
        let mut s = AugmentedState::start(start);
        let mut seg_start = s;
        let (mut seg_sum, mut seg_len) = (0.0, 0);
        for _ in 0..20 {
            let a = rng.gen_range(0..env.n_actions());
            let out = augment_step(&env, &design, &s, a, &mut rng);
            let f = design.shaping_reward(s.progress, &s.base, &out.next.base, gamma);
            exact &= out.total == out.extrinsic + f;
            monotone &= out.next.progress == s.progress || out.next.progress == s.progress + 1;
            monotone &= out.next.progress <= design.k();
            seg_sum += gamma.powi(seg_len) * f;
            seg_len += 1;
            steps += 1;
            let closes = out.next.progress != s.progress || out.terminal;
            if closes {
                let i = seg_start.progress;
                let phi = |st: &State| {
                    if i < design.k() {
                        design.potential(i + 1, st).unwrap()
                    } else {
                        0.0
                    }
                };
                let expect = gamma.powi(seg_len) * phi(&out.next.base) - phi(&seg_start.base);
                tele_err = tele_err.max((seg_sum - expect).abs());
                segments += 1;
                seg_start = out.next;
                seg_sum = 0.0;
                seg_len = 0;
            }
            if out.terminal {
                break;
            }
            s = out.next;
        }
        if seg_len > 0 {
            let i = seg_start.progress;
            let phi = |st: &State| {
                if i < design.k() {
                    design.potential(i + 1, st).unwrap()
                } else {
                    0.0
                }
            };
            let expect = gamma.powi(seg_len) * phi(&s.base) - phi(&seg_start.base);
            tele_err = tele_err.max((seg_sum - expect).abs());
            segments += 1;
        }
    }
    // progress over long single runs
    let env = EnvDistribution::new(DomainId::Key3).sample_with(&mut rng);
    let design = SubgoalDesign::new(
        vec![vec![1.5, 0.5], vec![2.5, 0.5], vec![5.5, 5.5]],
        ShapingParams::default(),
    )
    .unwrap();
    let mut s = AugmentedState::start(env.start());
    let mut long_steps = 0;
    while long_steps < 100_000 {
        let out = augment_step(
            &env,
            &design,
            &s,
            rng.gen_range(0..env.n_actions()),
            &mut rng,
        );
        monotone &= out.next.progress >= s.progress && out.next.progress <= s.progress + 1;
        s = if out.terminal {
            AugmentedState::start(env.start())
        } else {
            out.next
        };
        long_steps += 1;
    }
    let pass = tele_err <= 1e-12 && monotone && exact && steps + long_steps >= 100_000;
    outcome(
        pass,
        format!(
            "telescoping err {tele_err:.1e} over {segments} segments, progress monotone {monotone} over {} steps, decomposition exact {exact}",
            steps + long_steps
        ),
    )
}

fn gw10_direction() -> (Outcome, Vec<(String, u64, u64)>) {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::defaults(DomainId::Gw10);
    cfg.methods = vec![MethodId::Besd, MethodId::Ei, MethodId::Lcb, MethodId::Hb];
    cfg.seeds = vec![0, 1, 2];
    cfg.checkpoints = 1;
    cfg.final_trials = 200;
    let out = run_experiment(&cfg, dir.path()).unwrap();
    let mut costs = vec![];
    for cell in &out.cells {
        let records = load(&cell.log_path).unwrap();
        costs.push((
            format!("GW10 {} seed {}", cell.method, cell.seed),
            logged_cost(&records),
            cell.steps,
        ));
    }
    let score = |m: MethodId, seed: u64| {
        let row = out
            .cells
            .iter()
            .find(|c| c.method == m && c.seed == seed)
            .unwrap()
            .rows
            .last()
            .unwrap()
            .clone();
        (row.mean, row.se)
    };

    let dist = cfg.distribution();
    let space = cfg.space().unwrap();
    let mut ratios = vec![];
    for seed in &cfg.seeds {
        let cell = out
            .cells
            .iter()
            .find(|c| c.method == MethodId::Besd && c.seed == *seed)
            .unwrap();
        let records = load(&cell.log_path).unwrap();
        let (_, obs) = split_log(&records).unwrap();
        let theta = obs.iter().rev().find_map(|o| o.theta_rec.clone()).unwrap();
        let settings = RatioSettings {
            tau: cfg.tau_max(),
            window: default_window(DomainId::Gw10),
            trials: 200,
            seed: 100 + seed,
        };
        let r = ratio_report(&dist, &space.design(&theta).unwrap(), &settings, &cfg.ql).unwrap();
        ratios.push(r.ratio);
    }

    let mut ordering_ok = true;
    let mut notes = vec![];
    for rival in [MethodId::Ei, MethodId::Lcb] {
        let mut overlaps = 0;
        for &seed in &cfg.seeds {
            let (b, bse) = score(MethodId::Besd, seed);
            let (r, rse) = score(rival, seed);
            if b < r {
                if b + 2.0 * bse >= r - 2.0 * rse {
                    overlaps += 1;
                } else {
                    ordering_ok = false;
                }
            }
            notes.push(format!(
                "s{seed} BESD {b:.3}+-{bse:.3} {rival} {r:.3}+-{rse:.3}"
            ));
        }
        ordering_ok &= overlaps <= 1;
    }
    let elapsed = start.elapsed();
    let pass =
        ratios.iter().all(|r| *r < 0.6) && ordering_ok && elapsed < Duration::from_secs(1800);
    let detail = format!(
        "ratios {:?}; {}; {:.0}s",
        ratios
            .iter()
            .map(|r| (r * 1000.0).round() / 1000.0)
            .collect::<Vec<_>>(),
        notes.join("; "),
        elapsed.as_secs_f64()
    );
    (outcome(pass, detail), costs)
}

fn hyperband_structure() -> Outcome {
    let rounds = hyperband_schedule(3, 81, 200).unwrap();
    let cohorts: Vec<usize> = rounds.iter().map(|r| r.cohort).collect();
    let taus: Vec<usize> = rounds.iter().map(|r| r.tau).collect();
    let mut pass = cohorts == [81, 27, 9, 3] && taus == [200, 600, 1800, 5400];

    // the executed first bracket follows the same schedule
    let space = DesignSpace::new(vec![0.0], vec![10.0], 1, ShapingParams::default()).unwrap();
    let sim = SyntheticSimulator::new(space, 0.01, |t, tau| t[0] * tau as f64).unwrap();
    let budget = 5 * (81 * 200 + 27 * 600 + 9 * 1800 + 3 * 5400);
    let cfg = HyperbandConfig {
        eta: 3,
        r: 81,
        tau_min: 200,
        q: 5,
        budget,
    };
    let run = run_hyperband(&sim, &cfg, 0, &mut NullSink).unwrap();
    let mut executed = vec![];
    for o in &run.history {
        match executed.last_mut() {
            Some((tau, n)) if *tau == o.tau => *n += 1,
            _ => executed.push((o.tau, 1)),
        }
    }
    pass &= executed == [(200, 81), (600, 27), (1800, 9), (5400, 3)];
    outcome(
        pass,
        format!("cohorts {cohorts:?}, lengths {taus:?}, executed {executed:?}"),
    )
}

fn synthetic_problem() -> SyntheticSimulator {
    let space = DesignSpace::new(vec![0.0], vec![10.0], 1, ShapingParams::default()).unwrap();
    SyntheticSimulator::new(space, 0.01, |t, tau| {
        (0.5 + 0.3 * (-(t[0] - 6.5).powi(2) / 8.0).exp()) * tau as f64 / 100.0
    })
    .unwrap()
}

fn consistency() -> (Outcome, Vec<(String, u64, u64)>) {
    let start = Instant::now();
    let checkpoints = [25, 50, 100, 200];
    let config = BesdConfig {
        taus: vec![25, 50, 100],
        qs: vec![2, 8],
        candidates: Some(vec![vec![1.0], vec![3.0], vec![5.0], vec![7.0], vec![9.0]]),
        init_per_tau: 10,
        budget: u64::MAX / 2,
        max_iterations: Some(200),
        fit: FitOptions {
            restarts: 4,
            ..Default::default()
        },
        ..Default::default()
    };
    let results: Vec<(Vec<bool>, u64, u64)> = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let sim = synthetic_problem();
            let mut log = vec![];
            let state =
                RunState::run(&sim, GpMethod::Besd, config.clone(), seed, &mut log).unwrap();
            let hits = checkpoints
                .iter()
                .map(|&n| state.cand.thetas[state.recommendations[n - 1]] == [7.0])
                .collect();
            (hits, logged_cost(&log), sim.steps())
        })
        .collect();
    let freq: Vec<f64> = (0..checkpoints.len())
        .map(|i| results.iter().filter(|r| r.0[i]).count() as f64 / results.len() as f64)
        .collect();
    let inversions = freq.windows(2).filter(|w| w[1] < w[0]).count();
    let elapsed = start.elapsed();
    let pass = freq[3] >= 0.95 && inversions <= 1 && elapsed < Duration::from_secs(300);
    let costs = results
        .iter()
        .enumerate()
        .map(|(s, r)| (format!("synthetic seed {s}"), r.1, r.2))
        .collect();
    (
        outcome(
            pass,
            format!(
                "correct frequency at N=25/50/100/200: {freq:?}, {inversions} inversions, {:.1}s",
                elapsed.as_secs_f64()
            ),
        ),
        costs,
    )
}

fn cost_accounting(runs: &[(String, u64, u64)]) -> Outcome {
    let bad: Vec<&(String, u64, u64)> = runs.iter().filter(|r| r.1 != r.2).collect();
    let detail = match bad.first() {
        None => format!("{} runs, logged cost equals step counter", runs.len()),
        Some((name, logged, steps)) => format!(
            "{} mismatches, first {name}: logged {logged} vs counted {steps}",
            bad.len()
        ),
    };
    outcome(bad.is_empty() && !runs.is_empty(), detail)
}

fn report(id: usize, name: &str, o: &Outcome) {
    println!(
        "[{}] criterion {id} {name}: {}",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail
    );
}

fn main() {
    let mut results = vec![];
    let mut run = |id, name: &str, o: Outcome| {
        report(id, name, &o);
        results.push(o.pass);
    };
    run(1, "gain-in-score oracle", h_oracle());
    run(2, "GP conditioning", gp_correctness());
    run(3, "shaping", shaping_correctness());
    let (direction, mut costs) = gw10_direction();
    run(4, "GW10 direction", direction);
    run(5, "Hyperband structure", hyperband_structure());
    let (consistent, synthetic_costs) = consistency();
    run(6, "recommendation consistency", consistent);
    costs.extend(synthetic_costs);
    run(7, "cost accounting", cost_accounting(&costs));
    let failed = results.iter().filter(|p| !**p).count();
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
