//! Plays a few fixed policies through the fluid-queue simulator.

use tsg::env::{run_episode, FlightSchedule, Policy, QueueMode, Scenario, ScreeningState};
use tsg::game::{sample_instance, InstanceConfig};
use tsg::projection::ProjectionError;

/// Always uses the same team.
struct OneTeam(usize, usize);

impl Policy for OneTeam {
    fn act(&mut self, _: &ScreeningState, _: &[f64]) -> Result<Vec<f64>, ProjectionError> {
        let mut a = vec![0.0; self.1];
        a[self.0] = 1.0;
        Ok(a)
    }
}

/// Sends everyone to the team with the shortest current wait.
struct ShortestWait(tsg::game::GameInstance);

impl Policy for ShortestWait {
    fn act(&mut self, state: &ScreeningState, _: &[f64]) -> Result<Vec<f64>, ProjectionError> {
        let rates = self.0.rates();
        let waits: Vec<f64> = self.0.teams.iter().map(|t| tsg::env::team_wait(&state.queues, &rates, t)).collect();
        let best = (0..waits.len()).min_by(|&a, &b| waits[a].total_cmp(&waits[b])).unwrap();
        let mut a = vec![0.0; waits.len()];
        a[best] = 1.0;
        Ok(a)
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let schedule = FlightSchedule::bundled().with_sigma(30.0);
    let cfg = InstanceConfig { departures: Some(schedule.departures()), ..InstanceConfig::default() };
    let inst = sample_instance(&cfg, 5)?;
    // No risk thresholds: every distribution over teams is allowed.
    let inst = inst.with_thresholds(inst.vacuous_thresholds());
    let scenario = Scenario::new(inst.clone(), schedule)?;
    let traces = scenario.sample_traces(5, 1);
    println!("{} passengers in the first trace", traces[0].len());

    let n = scenario.num_teams();
    for (name, policy) in [
        ("team 0 only", Box::new(OneTeam(0, n)) as Box<dyn Policy>),
        ("shortest wait", Box::new(ShortestWait(inst.clone()))),
    ] {
        let mut policy = policy;
        for mode in [QueueMode::Marginal, QueueMode::Sampled] {
            let mut total = 0.0;
            for (i, trace) in traces.iter().enumerate() {
                total += run_episode(&scenario, trace, mode, i as u64, policy.as_mut())?.avg_delay();
            }
            println!("{name:<14} {mode:?}: {:.2} min average delay", total / traces.len() as f64);
        }
    }
    Ok(())
}
