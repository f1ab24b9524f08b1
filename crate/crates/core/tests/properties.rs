use proptest::prelude::*;
use tsg::baseline::solve_static_lp;
use tsg::env::{drain_queues, expected_wait, team_wait, FlightSchedule, QueueMode, Scenario, ScreeningEnv};
use tsg::env::{Arrival, ArrivalTrace};
use tsg::game::{risk_profile, sample_instance, GameInstance, InstanceConfig, Team};
use tsg::harness::expected_counts;
use tsg::projection::{alpha_backward, alpha_forward, nonnegativity_rows, Polytope, TightBound};
use tsg::rl::DenseNet;
use tsg::rl::{ReplayBuffer, Transition};
use tsg::rng::{stream, Stream};

/// Simplex of dimension `n` cut by `cuts` random half-spaces that all keep
/// `interior` strictly inside.
fn cut_simplex(n: usize, cuts: &[Vec<f64>], interior: &[f64]) -> Polytope {
    let (mut rows, mut bounds) = nonnegativity_rows(n);
    for a in cuts {
        let b: f64 = a.iter().zip(interior).map(|(x, y)| x * y).sum::<f64>() + 0.05;
        rows.push(a.clone());
        bounds.push(b);
    }
    Polytope::new(n, rows, bounds).expect("interior point has slack on every row")
}

fn normalise(w: &[f64]) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

fn polytope_case() -> impl Strategy<Value = (Polytope, Vec<f64>)> {
    (2usize..7).prop_flat_map(|n| {
        (
            prop::collection::vec(prop::collection::vec(-1.0f64..1.0, n), 1..4),
            prop::collection::vec(0.05f64..1.0, n),
            prop::collection::vec(0.001f64..1.0, n),
        )
            .prop_map(move |(cuts, interior, point)| (cut_simplex(n, &cuts, &normalise(&interior)), normalise(&point)))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn projection_lands_in_the_polytope((poly, s) in polytope_case()) {
        let out = alpha_forward(&s, &poly).unwrap();
        prop_assert!(poly.max_violation(&out.y) <= 0.0);
        prop_assert!((out.y.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(out.alpha > 0.0 && out.alpha <= 1.0);
        if poly.max_violation(&s) <= 0.0 {
            prop_assert_eq!(out.alpha, 1.0);
            prop_assert_eq!(&out.y, &s);
        }
    }

    #[test]
    fn projection_gradient_matches_finite_differences((poly, s) in polytope_case(), w in prop::collection::vec(-1.0f64..1.0, 6)) {
        let fwd = alpha_forward(&s, &poly).unwrap();
        prop_assume!(fwd.tight.len() == 1);
        let w = &w[..s.len()];
        let g = alpha_backward(&s, &poly, &fwd, w);
        let f = |x: &[f64]| -> f64 { alpha_forward(x, &poly).unwrap().y.iter().zip(w).map(|(a, b)| a * b).sum() };
        let h = 1e-7;
        for i in 0..s.len() {
            let (mut up, mut down) = (s.clone(), s.clone());
            up[i] += h;
            down[i] -= h;
            // Stay on the same piece of the piecewise-smooth map.
            let same = |x: &[f64]| alpha_forward(x, &poly).unwrap().tight == fwd.tight;
            prop_assume!(same(&up) && same(&down));
            let fd = (f(&up) - f(&down)) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() <= 1e-5 * (1.0 + fd.abs()), "coord {}: {} vs {}", i, fd, g[i]);
        }
        if fwd.tight == vec![TightBound::Unit] {
            prop_assert_eq!(g, w.to_vec());
        }
    }

    #[test]
    fn draining_never_goes_negative(q in prop::collection::vec(0.0f64..50.0, 1..6), dt in 0.0f64..100.0, f in 0.1f64..2.0) {
        let mut queues = q.clone();
        let rates = vec![f; q.len()];
        drain_queues(&mut queues, dt, &rates);
        for (after, before) in queues.iter().zip(&q) {
            prop_assert!(*after >= 0.0);
            prop_assert!(*after <= *before);
            prop_assert!((after - (before - dt * f).max(0.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn wait_is_invariant_to_joint_rescaling(
        q in prop::collection::vec(0.0f64..50.0, 4),
        f in prop::collection::vec(0.1f64..2.0, 4),
        lambda in 0.1f64..10.0,
        w in prop::collection::vec(0.01f64..1.0, 3),
    ) {
        let teams = vec![
            Team { resources: vec![0, 1], efficacy: vec![0.5] },
            Team { resources: vec![2], efficacy: vec![0.5] },
            Team { resources: vec![1, 3], efficacy: vec![0.5] },
        ];
        let action = normalise(&w);
        let qs: Vec<f64> = q.iter().map(|x| x * lambda).collect();
        let fs: Vec<f64> = f.iter().map(|x| x * lambda).collect();
        let a = expected_wait(&q, &f, &action, &teams);
        let b = expected_wait(&qs, &fs, &action, &teams);
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a));
        for t in &teams {
            prop_assert!(team_wait(&q, &f, t) >= 0.0);
        }
    }

    #[test]
    fn marginal_step_adds_team_mass(seed in 0u64..50, w in prop::collection::vec(0.01f64..1.0, 10)) {
        let inst = vacuous(seed);
        let scenario = Scenario::new(inst.clone(), schedule_for(&inst)).unwrap();
        let action = normalise(&w);
        let trace = ArrivalTrace { events: vec![Arrival { category: 0, time: 100.0 }] };
        let mut env = ScreeningEnv::new(&scenario, trace, QueueMode::Marginal, 0);
        let out = env.step(&action).unwrap();
        prop_assert!(out.done);
        prop_assert_eq!(out.reward, 0.0);
        let added: f64 = env.state().queues.iter().sum();
        let expected: f64 = inst.teams.iter().zip(&action).map(|(t, p)| p * t.resources.len() as f64).sum();
        prop_assert!((added - expected).abs() < 1e-12);
    }

    #[test]
    fn replay_keeps_the_newest_in_order(capacity in 1usize..20, pushes in 0usize..60) {
        let mut buf = ReplayBuffer::new(capacity);
        for i in 0..pushes {
            buf.push(transition(i as f64));
        }
        let kept: Vec<f64> = buf.iter().map(|t| t.reward).collect();
        let first = pushes.saturating_sub(capacity);
        let expected: Vec<f64> = (first..pushes).map(|i| i as f64).collect();
        prop_assert_eq!(kept, expected);
    }

    #[test]
    fn soft_update_contracts(seed in 0u64..1000, rho in 0.0f64..=1.0) {
        let source = DenseNet::new(&[3, 4, 2], 0.5, &mut stream(seed, Stream::Init));
        let mut target = DenseNet::new(&[3, 4, 2], 0.5, &mut stream(seed + 1, Stream::Init));
        let before = target.distance(&source);
        target.soft_update(&source, rho);
        prop_assert!((target.distance(&source) - (1.0 - rho) * before).abs() <= 1e-12 * (1.0 + before));
    }
}

fn transition(reward: f64) -> Transition {
    Transition { state: vec![0.0], category: 0, action: vec![1.0], reward, next_state: vec![0.0], next_category: 0, done: false }
}

fn vacuous(seed: u64) -> GameInstance {
    let inst = sample_instance(&InstanceConfig::default(), seed).unwrap();
    inst.with_thresholds(inst.vacuous_thresholds())
}

fn schedule_for(inst: &GameInstance) -> FlightSchedule {
    let deps: Vec<f64> = inst.flights.iter().map(|f| f.departure_min).collect();
    FlightSchedule::from_departures(&deps, 30, 45.0).unwrap()
}

fn small_config() -> InstanceConfig {
    InstanceConfig { num_risk_levels: 2, num_flights: 3, num_teams: 4, num_resources: 4, ..InstanceConfig::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn lp_objective_scales_with_utilities(seed in 0u64..1000, lambda in 0.1f64..10.0) {
        let inst = sample_instance(&small_config(), seed).unwrap();
        let counts = vec![10.0; inst.num_categories()];
        let base = solve_static_lp(&inst, &counts, f64::INFINITY).unwrap();
        let mut scaled = inst.clone();
        for row in scaled.utilities.plus.iter_mut().chain(scaled.utilities.minus.iter_mut()) {
            row.iter_mut().for_each(|u| *u *= lambda);
        }
        let sol = solve_static_lp(&scaled, &counts, f64::INFINITY).unwrap();
        prop_assert!((sol.objective - lambda * base.objective).abs() <= 1e-7 * (1.0 + base.objective.abs() * lambda));
    }

    #[test]
    fn lp_beats_random_mixtures(seed in 0u64..1000, draws in prop::collection::vec(0.01f64..1.0, 24 * 4)) {
        let inst = sample_instance(&small_config(), seed).unwrap();
        let counts = expected_counts(&inst, &schedule_for(&inst));
        let sol = solve_static_lp(&inst, &counts, f64::INFINITY).unwrap();
        let n = inst.num_teams();
        let mixtures: Vec<Vec<f64>> = draws.chunks(n).take(inst.num_categories()).map(normalise).collect();
        let random = risk_profile(&inst, &mixtures).total;
        prop_assert!(sol.objective >= random - 1e-9, "{} < {}", sol.objective, random);
        let own = risk_profile(&inst, &sol.mixtures).total;
        prop_assert!((own - sol.objective).abs() <= 1e-7);
    }
}
