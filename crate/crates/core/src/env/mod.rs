//! The online screening MDP.
//!
//! A state is the category of the passenger who just arrived, the fluid
//! backlog of every resource, the per-category count of passengers already
//! screened, and the wall clock. The policy picks a distribution over teams;
//! the passenger's reward is minus the expected wait of that allocation, the
//! allocation is added to the queues, and the clock advances to the next
//! arrival while the queues drain.

mod arrivals;
mod schedule;

pub use arrivals::{sample_arrivals, sample_arrivals_with, Arrival, ArrivalTrace};
pub use schedule::{FlightSchedule, ScheduledFlight, DAY_LENGTH_MIN, DEFAULT_PASSENGERS, DEFAULT_SIGMA_MIN};

use rand::Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{build_polytopes, validate_instance, GameError, GameInstance, Team};
use crate::projection::{Polytope, ProjectionError};
use crate::rng::{stream, Stream, StreamRng};

/// Actions may exceed their polytope by at most this much.
pub const AUDIT_TOLERANCE: f64 = 1e-9;

/// Waits are clipped here before being scaled into `[0, 1]` for the encoder.
pub const WAIT_CAP_MIN: f64 = 180.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("action for category {category} violates its risk polytope by {violation:e}")]
    InfeasibleActionAudit { category: usize, violation: f64 },
    #[error("action has {got} entries, expected {expected}")]
    ActionDimension { expected: usize, got: usize },
    #[error("episode already finished")]
    EpisodeFinished,
    #[error("schedule: {0}")]
    Schedule(String),
    #[error("instance and schedule disagree: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
}

/// How an allocation is added to the queues.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueueMode {
    /// Every team's queues receive the allocation's probability mass.
    #[default]
    Marginal,
    /// One team is drawn from the allocation and receives the passenger.
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningState {
    pub category: usize,
    pub queues: Vec<f64>,
    pub screened: Vec<u32>,
    pub time: f64,
}

impl ScreeningState {
    pub fn steps_taken(&self) -> u64 {
        self.screened.iter().map(|&h| h as u64).sum()
    }
}

/// An instance paired with its schedule and compiled risk polytopes.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub game: GameInstance,
    pub schedule: FlightSchedule,
    pub polytopes: Vec<Polytope>,
    priors: Vec<f64>,
    rates: Vec<f64>,
}

impl Scenario {
    pub fn new(game: GameInstance, schedule: FlightSchedule) -> Result<Self, EnvError> {
        let report = validate_instance(&game);
        if !report.is_valid() {
            return Err(GameError::Invalid(report.to_string()).into());
        }
        if game.num_flights() != schedule.num_flights() {
            return Err(EnvError::Mismatch(format!(
                "instance has {} flights, schedule has {}",
                game.num_flights(),
                schedule.num_flights()
            )));
        }
        let polytopes = build_polytopes(&game)?;
        let priors = game.priors();
        let rates = game.rates();
        Ok(Scenario { game, schedule, polytopes, priors, rates })
    }

    pub fn num_teams(&self) -> usize {
        self.game.num_teams()
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn sample_trace<R: Rng + ?Sized>(&self, rng: &mut R) -> ArrivalTrace {
        sample_arrivals_with(&self.schedule, &self.priors, rng)
    }

    /// `n` traces from the trace stream of `seed`.
    pub fn sample_traces(&self, n: usize, seed: u64) -> Vec<ArrivalTrace> {
        let mut rng = stream(seed, Stream::Trace);
        (0..n).map(|_| self.sample_trace(&mut rng)).collect()
    }

    /// Expected passengers per category: flight size times the risk prior.
    pub fn expected_counts(&self) -> Vec<f64> {
        self.game
            .categories()
            .map(|c| self.schedule.flights[c.kappa].passengers as f64 * self.priors[c.theta])
            .collect()
    }

    pub fn expected_passengers(&self) -> f64 {
        self.schedule.total_passengers() as f64
    }
}

/// `ξ'_r = max(ξ_r − Δτ·f_r, 0)`, in place.
pub fn drain_queues(queues: &mut [f64], dt: f64, rates: &[f64]) {
    for (q, f) in queues.iter_mut().zip(rates) {
        *q = (*q - dt * f).max(0.0);
    }
}

pub fn queue_drain(queues: &[f64], dt: f64, rates: &[f64]) -> Vec<f64> {
    let mut out = queues.to_vec();
    drain_queues(&mut out, dt, rates);
    out
}

/// Wait of a team: the longest backlog, in minutes, among its resources.
pub fn team_wait(queues: &[f64], rates: &[f64], team: &Team) -> f64 {
    team.resources.iter().map(|&r| queues[r] / rates[r]).fold(0.0, f64::max)
}

/// `Σ_t π_t · max_{r∈t} ξ_r / f_r`.
pub fn expected_wait(queues: &[f64], rates: &[f64], action: &[f64], teams: &[Team]) -> f64 {
    teams.iter().zip(action).map(|(t, p)| p * team_wait(queues, rates, t)).sum()
}

/// Mean per-passenger reward of an episode (0 for an empty one).
pub fn episode_value(rewards: &[f64]) -> f64 {
    if rewards.is_empty() {
        0.0
    } else {
        rewards.iter().sum::<f64>() / rewards.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub done: bool,
}

pub struct ScreeningEnv<'a> {
    scenario: &'a Scenario,
    trace: ArrivalTrace,
    cursor: usize,
    state: ScreeningState,
    mode: QueueMode,
    sampler: Option<StreamRng>,
    done: bool,
}

impl<'a> ScreeningEnv<'a> {
    pub fn new(scenario: &'a Scenario, trace: ArrivalTrace, mode: QueueMode, seed: u64) -> Self {
        let first = trace.events.first().copied();
        let state = ScreeningState {
            category: first.map_or(0, |a| a.category),
            queues: vec![0.0; scenario.game.num_resources()],
            screened: vec![0; scenario.game.num_categories()],
            time: first.map_or(0.0, |a| a.time),
        };
        let sampler = (mode == QueueMode::Sampled).then(|| stream(seed, Stream::Sampled));
        ScreeningEnv { scenario, done: trace.is_empty(), trace, cursor: 0, state, mode, sampler }
    }

    pub fn state(&self) -> &ScreeningState {
        &self.state
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn scenario(&self) -> &'a Scenario {
        self.scenario
    }

    pub fn trace(&self) -> &ArrivalTrace {
        &self.trace
    }

    pub fn polytope(&self) -> &'a Polytope {
        &self.scenario.polytopes[self.state.category]
    }

    /// Rejects actions that leave the simplex or the category's polytope.
    pub fn audit(&self, action: &[f64]) -> Result<(), EnvError> {
        let n = self.scenario.num_teams();
        if action.len() != n {
            return Err(EnvError::ActionDimension { expected: n, got: action.len() });
        }
        let poly = self.polytope();
        let simplex_gap = (action.iter().sum::<f64>() - 1.0).abs();
        let violation = poly.max_violation(action).max(simplex_gap);
        if !(violation <= AUDIT_TOLERANCE) {
            return Err(EnvError::InfeasibleActionAudit { category: self.state.category, violation });
        }
        Ok(())
    }

    pub fn step(&mut self, action: &[f64]) -> Result<StepOutcome, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeFinished);
        }
        self.audit(action)?;
        let game = &self.scenario.game;
        let rates = self.scenario.rates();
        let reward = -expected_wait(&self.state.queues, rates, action, &game.teams);

        match self.mode {
            QueueMode::Marginal => {
                for (team, p) in game.teams.iter().zip(action) {
                    for &r in &team.resources {
                        self.state.queues[r] += p;
                    }
                }
            }
            QueueMode::Sampled => {
                let rng = self.sampler.as_mut().expect("sampled mode has a sampler");
                let weights: Vec<f64> = action.iter().map(|p| p.max(0.0)).collect();
                let t = WeightedIndex::new(&weights).map(|d| d.sample(rng)).unwrap_or(0);
                for &r in &game.teams[t].resources {
                    self.state.queues[r] += 1.0;
                }
            }
        }
        self.state.screened[self.state.category] += 1;

        self.cursor += 1;
        match self.trace.events.get(self.cursor) {
            Some(next) => {
                let dt = next.time - self.state.time;
                drain_queues(&mut self.state.queues, dt, rates);
                self.state.category = next.category;
                self.state.time = next.time;
            }
            None => self.done = true,
        }
        Ok(StepOutcome { reward, done: self.done })
    }
}

/// Fixed feature layout:
///
/// | block      | length | content                                   |
/// |------------|--------|-------------------------------------------|
/// | category   | `|C|`  | one-hot of the arriving category          |
/// | waits      | `|R|`  | `min(ξ_r / f_r, cap) / cap`               |
/// | history    | `|C|`  | `h_c` over the expected count of `c`      |
/// | clock      | 1      | `τ` over the day length                   |
#[derive(Debug, Clone)]
pub struct StateEncoder {
    num_categories: usize,
    rates: Vec<f64>,
    expected: Vec<f64>,
    day_length: f64,
    wait_cap: f64,
}

impl StateEncoder {
    pub fn new(scenario: &Scenario) -> Self {
        StateEncoder {
            num_categories: scenario.game.num_categories(),
            rates: scenario.rates().to_vec(),
            expected: scenario.expected_counts().into_iter().map(|e| e.max(1.0)).collect(),
            day_length: scenario.schedule.day_length,
            wait_cap: WAIT_CAP_MIN,
        }
    }

    pub fn dim(&self) -> usize {
        2 * self.num_categories + self.rates.len() + 1
    }

    pub fn encode_into(&self, state: &ScreeningState, out: &mut [f64]) {
        let c = self.num_categories;
        let r = self.rates.len();
        out.iter_mut().for_each(|v| *v = 0.0);
        out[state.category] = 1.0;
        for (i, (q, f)) in state.queues.iter().zip(&self.rates).enumerate() {
            out[c + i] = (q / f).min(self.wait_cap) / self.wait_cap;
        }
        for (i, (h, e)) in state.screened.iter().zip(&self.expected).enumerate() {
            out[c + r + i] = *h as f64 / e;
        }
        out[2 * c + r] = state.time / self.day_length;
    }

    pub fn encode(&self, state: &ScreeningState) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.encode_into(state, &mut out);
        out
    }
}

pub fn encode_state(state: &ScreeningState, scenario: &Scenario) -> Vec<f64> {
    StateEncoder::new(scenario).encode(state)
}

/// Anything that maps a state to a feasible team allocation.
pub trait Policy {
    fn act(&mut self, state: &ScreeningState, features: &[f64]) -> Result<Vec<f64>, ProjectionError>;
}

/// Per-step record of an episode.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeLog {
    pub rewards: Vec<f64>,
    pub actions: Vec<(usize, Vec<f64>)>,
}

impl EpisodeLog {
    pub fn value(&self) -> f64 {
        episode_value(&self.rewards)
    }

    /// Average wait per passenger (minus the episode value).
    pub fn avg_delay(&self) -> f64 {
        -self.value()
    }
}

/// Plays `policy` over `trace` and returns the rewards and actions.
pub fn run_episode<P: Policy + ?Sized>(
    scenario: &Scenario,
    trace: &ArrivalTrace,
    mode: QueueMode,
    seed: u64,
    policy: &mut P,
) -> Result<EpisodeLog, EnvError> {
    let encoder = StateEncoder::new(scenario);
    let mut env = ScreeningEnv::new(scenario, trace.clone(), mode, seed);
    let mut log = EpisodeLog::default();
    let mut features = vec![0.0; encoder.dim()];
    while !env.is_done() {
        encoder.encode_into(env.state(), &mut features);
        let action = policy.act(env.state(), &features)?;
        let category = env.state().category;
        let out = env.step(&action)?;
        log.rewards.push(out.reward);
        log.actions.push((category, action));
    }
    Ok(log)
}
