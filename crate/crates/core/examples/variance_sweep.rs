//! Delay ratio of the static LP over the learned policy as the arrival
//! spread of every flight grows.
//!
//! `cargo run --release --example variance_sweep -- [steps]`

use tsg::env::{FlightSchedule, QueueMode};
use tsg::game::{sample_instance, InstanceConfig};
use tsg::harness::sweep_variance;
use tsg::rl::TrainConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let steps: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(3_000);
    let schedule = FlightSchedule::bundled();
    let cfg = InstanceConfig { departures: Some(schedule.departures()), ..InstanceConfig::default() };
    let inst = sample_instance(&cfg, 2)?;
    let train_cfg = TrainConfig { total_steps: steps, ..TrainConfig::default() };

    let rows = sweep_variance(&[inst], &schedule, &[30.0, 60.0, 180.0, 300.0], 1440.0, &train_cfg, 10, QueueMode::Marginal, 6)?;
    for r in rows {
        println!("2σ = {:>3} min: LP/RL delay ratio {:.3}", r.two_sigma_min, r.ratio);
    }
    Ok(())
}
