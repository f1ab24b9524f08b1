mod common;

use common::{fluid_queue_oracle, single_team_instance, two_by_two_maximin};
use rand::Rng;
use tsg::baseline::{solve_static_lp, BaselineError};
use tsg::env::{run_episode, Arrival, ArrivalTrace, FlightSchedule, Policy, QueueMode, Scenario, ScreeningState, StateEncoder};
use tsg::game::{build_polytopes, sample_instance, Flight, GameInstance, InstanceConfig, Resource, RiskLevel, Team, Utilities};
use tsg::harness::expected_counts;
use tsg::projection::ProjectionError;
use tsg::rl::{Agent, TrainConfig};
use tsg::rng::{stream, Stream};

struct Always;

impl Policy for Always {
    fn act(&mut self, _: &ScreeningState, _: &[f64]) -> Result<Vec<f64>, ProjectionError> {
        Ok(vec![1.0])
    }
}

fn simulate(inst: &GameInstance, times: &[f64]) -> f64 {
    let schedule = FlightSchedule::from_departures(&[600.0], times.len().max(1), 45.0).unwrap();
    let scenario = Scenario::new(inst.clone(), schedule).unwrap();
    let trace = ArrivalTrace { events: times.iter().map(|&time| Arrival { category: 0, time }).collect() };
    run_episode(&scenario, &trace, QueueMode::Marginal, 0, &mut Always).unwrap().avg_delay()
}

#[test]
fn simulator_matches_fluid_queue_by_hand() {
    // Rate 0.5: three simultaneous arrivals wait 0, 2 and 4 minutes; a fourth
    // two minutes later finds 3 − 1 = 2 units, i.e. 4 minutes.
    let inst = single_team_instance(&[0.5], &[0]);
    assert_eq!(simulate(&inst, &[0.0, 0.0, 0.0, 2.0]), (0.0 + 2.0 + 4.0 + 4.0) / 4.0);
    assert_eq!(fluid_queue_oracle(&[0.0, 0.0, 0.0, 2.0], &[0.5], &[0]), 2.5);
}

#[test]
fn simulator_matches_fluid_queue_oracle_exactly() {
    let mut rng = stream(42, Stream::Trace);
    for case in 0..200 {
        let n = rng.random_range(1..=20);
        let mut times: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..60.0)).collect();
        times.sort_by(f64::total_cmp);
        let rates: Vec<f64> = (0..3).map(|_| rng.random_range(0.1..1.5)).collect();
        let team: Vec<usize> = if case % 2 == 0 { vec![case % 3] } else { vec![0, 1 + case % 2] };
        let inst = single_team_instance(&rates, &team);
        let sim = simulate(&inst, &times);
        let oracle = fluid_queue_oracle(&times, &rates, &team);
        // Exact equality; only the sign of a zero delay may differ.
        assert!(sim == oracle, "case {case}: {sim} vs {oracle}");
    }
}

/// Two risk levels on one flight, two single-resource teams.
fn two_by_two(prior0: f64, rates: [f64; 2]) -> GameInstance {
    GameInstance {
        num_methods: 2,
        risk_levels: vec![RiskLevel { prior: prior0 }, RiskLevel { prior: 1.0 - prior0 }],
        flights: vec![Flight { departure_min: 600.0 }],
        resources: rates.iter().map(|&rate| Resource { rate }).collect(),
        teams: vec![
            Team { resources: vec![0], efficacy: vec![0.8, 0.3] },
            Team { resources: vec![1], efficacy: vec![0.2, 0.9] },
        ],
        utilities: Utilities { plus: vec![vec![0.0, 0.0]], minus: vec![vec![-10.0, -6.0]] },
        risk_thresholds: vec![100.0, 100.0],
    }
}

#[test]
fn lp_matches_vertex_enumeration_with_binding_capacity() {
    let mut binding = 0;
    for (prior0, rates, window) in [
        (0.7, [0.1, 0.2], 1000.0),
        (0.5, [0.1, 0.2], 1000.0),
        (0.3, [0.12, 0.15], 1000.0),
        (0.9, [0.05, 0.3], 1000.0),
        (0.6, [0.5, 0.5], f64::INFINITY),
    ] {
        let inst = two_by_two(prior0, rates);
        let counts = [100.0, 100.0];
        let oracle = two_by_two_maximin(&inst, &counts, window).expect("feasible");
        let sol = solve_static_lp(&inst, &counts, window).unwrap();
        assert!((sol.objective - oracle).abs() < 1e-9, "prior {prior0}: LP {} vs oracle {oracle}", sol.objective);
        let free = two_by_two_maximin(&inst, &counts, f64::INFINITY).unwrap();
        if oracle < free - 1e-9 {
            binding += 1;
        }
    }
    assert!(binding >= 3, "capacity should bind in most cases, bound in {binding}");
}

#[test]
fn infeasible_capacity_agrees() {
    let inst = two_by_two(0.5, [0.05, 0.05]);
    assert!(two_by_two_maximin(&inst, &[100.0, 100.0], 1000.0).is_none());
    assert!(solve_static_lp(&inst, &[100.0, 100.0], 1000.0).is_err());
}

/// Three single-resource teams; the risk row forces most mass on team 0.
fn three_team() -> GameInstance {
    GameInstance {
        num_methods: 1,
        risk_levels: vec![RiskLevel { prior: 1.0 }],
        flights: vec![Flight { departure_min: 300.0 }],
        resources: vec![Resource { rate: 0.5 }, Resource { rate: 0.3 }, Resource { rate: 0.4 }],
        teams: vec![
            Team { resources: vec![0], efficacy: vec![0.95] },
            Team { resources: vec![1], efficacy: vec![0.1] },
            Team { resources: vec![2], efficacy: vec![0.2] },
        ],
        utilities: Utilities { plus: vec![vec![0.0]], minus: vec![vec![-10.0]] },
        // Requires detection of at least 0.6.
        risk_thresholds: vec![4.0],
    }
}

#[test]
fn actor_gradient_matches_finite_differences_through_the_projection() {
    let inst = three_team();
    let schedule = FlightSchedule::from_departures(&[300.0], 20, 30.0).unwrap();
    let scenario = Scenario::new(inst.clone(), schedule).unwrap();
    let polytopes = build_polytopes(&inst).unwrap();
    let encoder = StateEncoder::new(&scenario);
    let cfg = TrainConfig { hidden: vec![8, 8], ..TrainConfig::default() };
    let mut agent = Agent::new(encoder.dim(), polytopes, &cfg, &mut stream(3, Stream::Init));
    // A larger output layer than the default so the logits move the
    // allocation noticeably.
    agent.actor.weights.last_mut().unwrap().mapv_inplace(|w| w * 300.0);

    let mut rng = stream(9, Stream::Eval);
    let states: Vec<Vec<f64>> = (0..4).map(|_| (0..encoder.dim()).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
    let batch: Vec<(&[f64], usize)> = states.iter().map(|s| (s.as_slice(), 0)).collect();
    for s in &states {
        let logits = agent.actor.forward(s);
        let p = tsg::projection::softmax(&logits);
        let fwd = tsg::projection::alpha_forward(&p, &agent.polytopes()[0]).unwrap();
        assert!(fwd.alpha < 1.0, "the projection should be active");
    }

    let (_, grads) = agent.actor_gradients(&batch).unwrap();
    let h = 1e-6;
    let mut checked = 0;
    for l in 0..agent.actor.weights.len() {
        let (rows, cols) = agent.actor.weights[l].dim();
        for idx in (0..rows).flat_map(|i| (0..cols).map(move |j| (i, j))) {
            let orig = agent.actor.weights[l][idx];
            agent.actor.weights[l][idx] = orig + h;
            let up = agent.actor_gradients(&batch).unwrap().0;
            agent.actor.weights[l][idx] = orig - h;
            let down = agent.actor_gradients(&batch).unwrap().0;
            agent.actor.weights[l][idx] = orig;
            let fd = (up - down) / (2.0 * h);
            let g = grads.weights[l][idx];
            if fd.abs() < 1e-8 && g.abs() < 1e-8 {
                continue;
            }
            let rel = (fd - g).abs() / fd.abs().max(g.abs());
            assert!(rel <= 1e-3, "layer {l} {idx:?}: analytic {g} numeric {fd} (rel {rel:e})");
            checked += 1;
        }
    }
    assert!(checked >= 20, "only {checked} non-zero gradients checked");
}

#[test]
fn degenerate_default_size_lps_scale_with_utilities() {
    // Default-size instances whose maximin LPs stalled or cycled under
    // earlier pivoting rules. Scaling every utility by λ scales the optimum
    // by λ and leaves feasibility alone.
    for (seed, window) in [(236, f64::INFINITY), (140, 480.0), (253, f64::INFINITY), (6, 10.0), (91, 1440.0), (57, f64::INFINITY)] {
        let inst = sample_instance(&InstanceConfig::default(), seed).unwrap();
        let deps: Vec<f64> = inst.flights.iter().map(|f| f.departure_min).collect();
        let counts = expected_counts(&inst, &FlightSchedule::from_departures(&deps, 30, 45.0).unwrap());
        let base = solve_static_lp(&inst, &counts, window);
        for lambda in [0.17, 3.4] {
            let mut scaled = inst.clone();
            for row in scaled.utilities.plus.iter_mut().chain(scaled.utilities.minus.iter_mut()) {
                row.iter_mut().for_each(|u| *u *= lambda);
            }
            match (&base, solve_static_lp(&scaled, &counts, window)) {
                (Ok(a), Ok(b)) => {
                    let rel = (b.objective / lambda - a.objective).abs() / (1.0 + a.objective.abs());
                    assert!(rel < 1e-8, "seed {seed} λ {lambda}: {} vs {}", a.objective, b.objective);
                }
                (Err(BaselineError::Infeasible), Err(BaselineError::Infeasible)) => {}
                (a, b) => panic!("seed {seed} λ {lambda}: {a:?} vs {b:?}"),
            }
        }
    }
}
