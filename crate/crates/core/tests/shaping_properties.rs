use proptest::prelude::*;
use rand::{Rng, SeedableRng};

use besd_core::agent::{steps_to_goal, train, QlConfig};
use besd_core::besd::stream;
use besd_core::envs::{DomainId, EnvDistribution, Environment, State};
use besd_core::shaping::{augment_step, AugmentedState, ShapingParams, SubgoalDesign};
use besd_core::RandomStream;

fn design(points: Vec<Vec<f64>>) -> SubgoalDesign {
    SubgoalDesign::new(points, ShapingParams::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn discounted_shaping_telescopes(
        seed in any::<u64>(),
        pts in prop::collection::vec((0.0f64..10.0, 0.0f64..10.0), 1..4),
        len in 1usize..60,
    ) {
        let env = EnvDistribution::new(DomainId::Gw10).sample_instance(seed).unwrap();
        let d = design(pts.into_iter().map(|(r, c)| vec![r, c]).collect());
        let gamma = env.discount();
        let mut rng = RandomStream::seed_from_u64(seed);
        let mut s = AugmentedState::start(env.start());
        let first = s;
        let mut sum = 0.0;
        let mut t = 0;
        while t < len {
            let out = augment_step(&env, &d, &s, rng.gen_range(0..4), &mut rng);
            if out.next.progress != s.progress || out.terminal {
                break;
            }
            sum += gamma.powi(t as i32) * (out.total - out.extrinsic);
            s = out.next;
            t += 1;
        }
        let phi = |st: &State| d.potential(first.progress + 1, st).unwrap();
        let expect = gamma.powi(t as i32) * phi(&s.base) - phi(&first.base);
        prop_assert!((sum - expect).abs() < 1e-12, "{sum} vs {expect}");
    }

    #[test]
    fn progress_advances_by_at_most_one(seed in any::<u64>(), domain in 0usize..6) {
        let dist = EnvDistribution::new(DomainId::ALL[domain]);
        let env = dist.sample_instance(seed).unwrap();
        let (lo, hi) = dist.point_bounds();
        let mut rng = RandomStream::seed_from_u64(seed);
        let pts = (0..3).map(|_| lo.iter().zip(&hi).map(|(l, h)| rng.gen_range(*l..*h)).collect()).collect();
        let d = design(pts);
        let mut s = AugmentedState::start(env.start());
        for _ in 0..300 {
            let out = augment_step(&env, &d, &s, rng.gen_range(0..env.n_actions()), &mut rng);
            prop_assert!(out.next.progress == s.progress || out.next.progress == s.progress + 1);
            prop_assert!(out.next.progress <= d.k());
            s = if out.terminal { AugmentedState::start(env.start()) } else { out.next };
        }
    }
}

#[test]
fn door_and_goal_subgoals_shorten_the_path() {
    let dist = EnvDistribution::new(DomainId::Gw10);
    let shaped = design(vec![vec![5.5, 8.5], vec![9.5, 0.5]]);
    let none = SubgoalDesign::none();
    let cfg = QlConfig::default();
    let (mut with, mut without) = (0.0, 0.0);
    for seed in 0..100 {
        let mut rng = stream(seed, 0);
        let env = dist.sample_with(&mut rng);
        let mut paired = rng.clone();
        let table = train(&env, &shaped, 1000, &cfg, &mut rng);
        with += steps_to_goal(&env, &shaped, &table, 100, &mut rng) as f64;
        let table = train(&env, &none, 1000, &cfg, &mut paired);
        without += steps_to_goal(&env, &none, &table, 100, &mut paired) as f64;
    }
    assert!(with < without, "shaped {with} vs unshaped {without}");
}
