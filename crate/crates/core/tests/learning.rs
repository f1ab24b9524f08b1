use rand_distr::{Distribution, StandardNormal};
use tsg::audit::RiskAudit;
use tsg::baseline::{StaticPolicy, StaticSolution};
use tsg::env::{FlightSchedule, Policy, QueueMode, Scenario, ScreeningState};
use tsg::game::{sample_instance, Flight, GameInstance, InstanceConfig, Resource, RiskLevel, Team, Utilities};
use tsg::harness::{compare_policies, matched_setup, policy_delay};
use tsg::projection::ProjectionError;
use tsg::rl::{project_logits, train, TrainConfig};
use tsg::rng::{stream, Stream, StreamRng};

/// Random N(0, 1) logits pushed through softmax and the projection.
struct RandomLogits {
    scenario: Scenario,
    rng: StreamRng,
}

impl Policy for RandomLogits {
    fn act(&mut self, state: &ScreeningState, _: &[f64]) -> Result<Vec<f64>, ProjectionError> {
        let logits: Vec<f64> = (0..self.scenario.num_teams()).map(|_| StandardNormal.sample(&mut self.rng)).collect();
        project_logits(&logits, &self.scenario.polytopes[state.category])
    }
}

#[test]
fn trained_policy_beats_random_feasible_allocations_on_bursty_arrivals() {
    let schedule = FlightSchedule::bundled().with_sigma(15.0);
    let cfg = InstanceConfig { departures: Some(schedule.departures()), ..InstanceConfig::default() };
    let inst = sample_instance(&cfg, 17).unwrap();
    let setup = matched_setup(&inst, &schedule, 1440.0, 1.0).unwrap();
    let outcome = train(&setup.scenario, &TrainConfig { total_steps: 6_000, seed: 5, ..TrainConfig::default() }).unwrap();
    let summary = outcome.audit.summary(&setup.scenario.game);
    assert!(summary.max_violation <= 1e-9);

    let traces = setup.scenario.sample_traces(10, 77);
    let mut audit = RiskAudit::new(&setup.scenario.game);
    let mut rl = outcome.policy.clone();
    let trained = policy_delay(&setup.scenario, &mut rl, &traces, QueueMode::Marginal, 0, &mut audit).unwrap();
    let mut random = RandomLogits { scenario: setup.scenario.clone(), rng: stream(1, Stream::Noise) };
    let baseline = policy_delay(&setup.scenario, &mut random, &traces, QueueMode::Marginal, 0, &mut audit).unwrap();
    assert!(audit.summary(&setup.scenario.game).max_violation <= 1e-9);
    assert!(trained < 0.8 * baseline, "trained {trained:.3} vs random {baseline:.3}");
}

/// Two identical single-resource teams and no risk constraint.
fn twin_teams() -> GameInstance {
    GameInstance {
        num_methods: 1,
        risk_levels: vec![RiskLevel { prior: 1.0 }],
        flights: vec![Flight { departure_min: 240.0 }],
        resources: vec![Resource { rate: 0.5 }, Resource { rate: 0.5 }],
        teams: vec![Team { resources: vec![0], efficacy: vec![0.5] }, Team { resources: vec![1], efficacy: vec![0.5] }],
        utilities: Utilities { plus: vec![vec![0.0]], minus: vec![vec![-1.0]] },
        risk_thresholds: vec![1.0],
    }
}

/// Join the shorter queue.
struct ShorterQueue;

impl Policy for ShorterQueue {
    fn act(&mut self, state: &ScreeningState, _: &[f64]) -> Result<Vec<f64>, ProjectionError> {
        Ok(if state.queues[0] <= state.queues[1] { vec![1.0, 0.0] } else { vec![0.0, 1.0] })
    }
}

#[test]
fn harness_ratio_favours_adaptive_routing_in_sampled_mode() {
    let schedule = FlightSchedule::from_departures(&[240.0], 120, 20.0).unwrap();
    let scenario = Scenario::new(twin_teams(), schedule).unwrap();
    let static_half = StaticSolution { mixtures: vec![vec![0.5, 0.5]], worst_case: vec![-0.5], psi: vec![0.5], objective: -0.5 };
    let traces = scenario.sample_traces(10, 3);
    let mut lp = StaticPolicy::new(&static_half);
    let report = compare_policies("toy", 3, &scenario, &mut lp, &mut ShorterQueue, &traces, QueueMode::Sampled).unwrap();
    assert!(report.delay_ratio > 1.0, "{report:?}");
    assert_eq!(report.traces, 10);
}
