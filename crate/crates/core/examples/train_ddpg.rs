//! Trains the projected actor-critic on one instance with LP-matched risk
//! thresholds, then compares its delay with the static LP policy.
//!
//! `cargo run --release --example train_ddpg -- [steps]`

use tsg::baseline::StaticPolicy;
use tsg::env::{FlightSchedule, QueueMode};
use tsg::game::{sample_instance, InstanceConfig};
use tsg::harness::{compare_policies, matched_setup};
use tsg::rl::{train, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let steps: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(5_000);
    let schedule = FlightSchedule::bundled().with_sigma(30.0);
    let cfg = InstanceConfig { departures: Some(schedule.departures()), ..InstanceConfig::default() };
    let inst = sample_instance(&cfg, 21)?;
    let setup = matched_setup(&inst, &schedule, 1440.0, 1.0)?;

    let train_cfg = TrainConfig { total_steps: steps, seed: 1, ..TrainConfig::default() };
    let outcome = train(&setup.scenario, &train_cfg)?;
    for row in &outcome.curve.rows {
        println!(
            "step {:>6}  actor loss {:+.4}  critic loss {:.5}  eval delay {:.2}",
            row.step, row.actor_loss, row.critic_loss, row.eval_avg_delay
        );
    }
    let audit = outcome.audit.summary(&setup.scenario.game);
    println!("{} allocations audited, max violation {:.2e}", audit.steps, audit.max_violation);

    let traces = setup.scenario.sample_traces(10, 99);
    let mut lp = StaticPolicy::new(&setup.solution);
    let mut rl = outcome.policy.clone();
    let report = compare_policies("demo", 1, &setup.scenario, &mut lp, &mut rl, &traces, QueueMode::Marginal)?;
    println!(
        "LP {:.2} min, RL {:.2} min, ratio {:.3}; risk bound {:.4}, realised {:.4}",
        report.avg_delay_lp, report.avg_delay_rl, report.delay_ratio, report.risk_bound, report.realized_bound
    );
    Ok(())
}
