//! Sweeps the risk thresholds and prints the delay/risk frontier, then picks
//! points for a few risk-vs-delay weights.
//!
//! `cargo run --release --example pareto_frontier -- [steps]`

use tsg::env::{FlightSchedule, QueueMode};
use tsg::game::{sample_instance, InstanceConfig};
use tsg::harness::{pareto_sweep, select_weighted};
use tsg::rl::TrainConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let steps: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(3_000);
    let schedule = FlightSchedule::bundled().with_sigma(30.0);
    let cfg = InstanceConfig { departures: Some(schedule.departures()), ..InstanceConfig::default() };
    let inst = sample_instance(&cfg, 8)?;
    let train_cfg = TrainConfig { total_steps: steps, ..TrainConfig::default() };

    let sweep = pareto_sweep(&inst, &schedule, &[1.0, 1.5, 2.0, 3.0], 1440.0, &train_cfg, 10, QueueMode::Marginal, 4)?;
    println!("{:>6} {:>9} {:>11} {:>9}", "scale", "sum psi", "risk bound", "V_o");
    for p in &sweep.points {
        println!("{:>6} {:>9.4} {:>11.4} {:>9.3}", p.psi_scale, p.psi_sum, p.risk_bound, p.v_o);
    }
    for (scale, reason) in &sweep.skipped {
        println!("skipped {scale}: {reason}");
    }
    for w in [0.0, 0.01, 0.1, f64::INFINITY] {
        if let Some(p) = select_weighted(&sweep.points, w) {
            println!("w = {w}: scale {}", p.psi_scale);
        }
    }
    Ok(())
}
